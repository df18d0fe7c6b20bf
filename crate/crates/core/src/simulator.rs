//! Round orchestration: build the experiment, drive the rounds, record
//! metrics.
//!
//! Determinism contract: a run is a pure function of its configuration. All
//! randomness flows through keyed ChaCha8 streams derived from the base seed
//! (data, partition, init, per-round topology, and one stream per
//! (client, round) pair), and per-client work is collected in client order,
//! so enabling the worker pool cannot change any output byte.
//!
//! Metrics are computed on the average model `xbar` with full-batch
//! gradients, so acceptance thresholds see no sampling noise.

use std::fmt;

use rand_chacha::ChaCha8Rng;

use crate::baselines::{baseline_round, BaselineKind, BaselineRoundCfg};
use crate::data::{
    dirichlet_partition, gen_quadratic, gen_synthetic_classification, iid_partition, load_idx,
    DataError, Dataset, FedData,
};
use crate::dfedadmm::{
    admm_round, AdmmHyper, ClientState, RoundCfg, TrainError, Variant,
};
use crate::model::{LogisticModel, MlpModel, ObjectiveModel, QuadraticModel};
use crate::seed;
use crate::topology::{
    build_graph, metropolis_weights, time_varying_random, MixingMatrix, TopologyError,
    TopologyKind,
};
use crate::linalg;

// ---------------------------------------------------------------------------
// Configuration model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    DfedAdmm,
    DfedAdmmSam,
    Dpsgd,
    DfedAvg,
    DfedAvgM,
    DfedSam,
}

impl AlgorithmKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::DfedAdmm => "dfedadmm",
            Self::DfedAdmmSam => "dfedadmm_sam",
            Self::Dpsgd => "dpsgd",
            Self::DfedAvg => "dfedavg",
            Self::DfedAvgM => "dfedavgm",
            Self::DfedSam => "dfedsam",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Quadratic,
    Logistic { l2: f64 },
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Synthetic { n: usize, dim: usize, classes: usize, class_sep: f64, test_n: usize },
    Quadratic { dim: usize, n_per_client: usize, heterogeneity: f64 },
    Idx {
        images: std::path::PathBuf,
        labels: std::path::PathBuf,
        test_images: Option<std::path::PathBuf>,
        test_labels: Option<std::path::PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionSpec {
    Iid,
    Dirichlet { alpha: f64 },
}

/// Whether the random topology is redrawn each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeVarying {
    /// On for the random kind, off for the deterministic kinds.
    Auto,
    On,
    Off,
}

/// Everything a run needs; see the config module for the file format.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmKind,
    pub model: ModelSpec,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    pub min_shard_size: usize,
    pub topology: TopologyKind,
    pub time_varying: TimeVarying,
    pub hyper: AdmmHyper,
    pub momentum: f64,
    pub batch_size: usize,
    /// Clients usually share one starting point; set for per-client draws.
    pub heterogeneous_init: bool,
    pub rounds: usize,
    pub num_clients: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub threads: usize,
    /// CSV destination; `None` leaves output to the caller.
    pub out: Option<std::path::PathBuf>,
}

impl ExperimentConfig {
    /// Is the per-round topology redrawn?
    pub fn topology_is_time_varying(&self) -> bool {
        match self.time_varying {
            TimeVarying::On => true,
            TimeVarying::Off => false,
            TimeVarying::Auto => matches!(self.topology, TopologyKind::Random { .. }),
        }
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// One evaluated round. All values stay finite while the run is healthy.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub eta: f64,
    pub psi: f64,
    pub train_loss: f64,
    pub test_acc: f64,
    pub grad_norm_sq: f64,
    pub consensus_err: f64,
}

pub const CSV_HEADER: &str = "round,eta,psi,train_loss,test_acc,grad_norm_sq,consensus_err";

/// Serialize metrics with 17 significant digits, byte-stable across runs.
pub fn metrics_to_csv(rows: &[RoundMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.round, r.eta, r.psi, r.train_loss, r.test_acc, r.grad_norm_sq, r.consensus_err
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum SimError {
    Data(DataError),
    Topology(TopologyError),
    /// Divergence with the round it happened in.
    Diverged { round: usize, source: TrainError },
    NonFiniteMetrics { round: usize },
    Pool(String),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Data(e) => write!(f, "data error: {e}"),
            Self::Topology(e) => write!(f, "topology error: {e}"),
            Self::Diverged { round, source } => write!(f, "round {round}: {source}"),
            Self::NonFiniteMetrics { round } => {
                write!(f, "non-finite metrics at round {round}")
            }
            Self::Pool(e) => write!(f, "worker pool: {e}"),
        }
    }
}

impl std::error::Error for SimError {}

impl From<DataError> for SimError {
    fn from(e: DataError) -> Self {
        Self::Data(e)
    }
}

impl From<TopologyError> for SimError {
    fn from(e: TopologyError) -> Self {
        Self::Topology(e)
    }
}

// ---------------------------------------------------------------------------
// Small operations
// ---------------------------------------------------------------------------

/// Per-round learning rate `eta0 * decay^round`.
pub fn lr_schedule(eta0: f64, decay: f64, round: usize) -> f64 {
    assert!(decay > 0.0 && decay <= 1.0, "decay must be in (0, 1]");
    eta0 * decay.powi(round as i32)
}

/// `(1/m) sum_i ||x_i - xbar||^2`, the dispersion around the mean model.
pub fn consensus_error(xs: &[Vec<f64>]) -> f64 {
    assert!(!xs.is_empty());
    let mean = linalg::mean_vec(xs);
    xs.iter().map(|x| linalg::norm_sq(&linalg::sub(x, &mean))).sum::<f64>() / xs.len() as f64
}

/// Full-dataset mean loss and argmax accuracy (0.0 for models that do not
/// predict classes). Ties break toward the lowest class index.
pub fn evaluate(model: &dyn ObjectiveModel, params: &[f64], data: &Dataset) -> (f64, f64) {
    let all: Vec<usize> = (0..data.len()).collect();
    let loss = model.loss(params, data, &all);
    let mut hits = 0usize;
    let mut total = 0usize;
    if data.is_classification() {
        for i in 0..data.len() {
            if let Some(pred) = model.predict(params, data, i) {
                total += 1;
                if pred == data.label(i) as usize {
                    hits += 1;
                }
            }
        }
    }
    let acc = if total > 0 { hits as f64 / total as f64 } else { 0.0 };
    (loss, acc)
}

/// Deterministic per-(client, round) stream. Distinct triples get
/// statistically independent streams via the keyed hash chain.
pub fn seed_stream(base_seed: u64, client: usize, round: usize) -> ChaCha8Rng {
    seed::stream(seed::mix(&[base_seed, 0x7374_726d, client as u64, round as u64]))
}

// ---------------------------------------------------------------------------
// Experiment assembly
// ---------------------------------------------------------------------------

/// Materialized experiment: data, model, topology, and schedules.
pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub model: Box<dyn ObjectiveModel>,
    pub fed: FedData,
    pub test_data: Option<Dataset>,
    /// Mixing matrix reused across rounds when the topology is fixed.
    fixed_w: Option<MixingMatrix>,
    pool: Option<rayon::ThreadPool>,
}

impl RunContext {
    pub fn build(cfg: ExperimentConfig) -> Result<Self, SimError> {
        let m = cfg.num_clients;
        let data_seed = seed::mix(&[cfg.seed, 0x6461_7461]);
        let part_seed = seed::mix(&[cfg.seed, 0x7061_7274]);

        let (fed, test_data, input_dim, num_classes) = match &cfg.dataset {
            DatasetSpec::Synthetic { n, dim, classes, class_sep, test_n } => {
                let total = gen_synthetic_classification(
                    n + test_n,
                    *dim,
                    *classes,
                    *class_sep,
                    data_seed,
                )?;
                let (train, test) = split_dataset(&total, *n)?;
                let partition = match cfg.partition {
                    PartitionSpec::Iid => iid_partition(train.len(), m, part_seed)?,
                    PartitionSpec::Dirichlet { alpha } => dirichlet_partition(
                        train.labels(),
                        m,
                        alpha,
                        cfg.min_shard_size,
                        part_seed,
                    )?,
                };
                let test = if *test_n > 0 { Some(test) } else { None };
                (FedData::Shared { data: train, partition }, test, *dim, *classes)
            }
            DatasetSpec::Quadratic { dim, n_per_client, heterogeneity } => {
                let problem = gen_quadratic(m, *dim, *n_per_client, *heterogeneity, data_seed)?;
                (FedData::per_client(problem.clients), None, *dim, 0)
            }
            DatasetSpec::Idx { images, labels, test_images, test_labels } => {
                let train = load_idx(images, labels)?;
                let test = match (test_images, test_labels) {
                    (Some(ti), Some(tl)) => Some(load_idx(ti, tl)?),
                    _ => None,
                };
                let partition = match cfg.partition {
                    PartitionSpec::Iid => iid_partition(train.len(), m, part_seed)?,
                    PartitionSpec::Dirichlet { alpha } => dirichlet_partition(
                        train.labels(),
                        m,
                        alpha,
                        cfg.min_shard_size,
                        part_seed,
                    )?,
                };
                let dim = train.dim();
                (FedData::Shared { data: train, partition }, test, dim, 10)
            }
        };

        let model: Box<dyn ObjectiveModel> = match &cfg.model {
            ModelSpec::Quadratic => Box::new(QuadraticModel { dim: input_dim }),
            ModelSpec::Logistic { l2 } => Box::new(LogisticModel {
                input_dim,
                num_classes,
                l2: *l2,
            }),
            ModelSpec::Mlp { hidden } => Box::new(MlpModel {
                input_dim,
                hidden: *hidden,
                num_classes,
            }),
        };

        let fixed_w = if cfg.topology_is_time_varying() {
            None
        } else {
            let topo_seed = seed::mix(&[cfg.seed, 0x746f_706f]);
            let graph = build_graph(cfg.topology, m, topo_seed)?;
            Some(metropolis_weights(&graph)?)
        };

        let pool = if cfg.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.threads)
                    .build()
                    .map_err(|e| SimError::Pool(e.to_string()))?,
            )
        } else {
            None
        };

        Ok(Self { cfg, model, fed, test_data, fixed_w, pool })
    }

    /// Starting states; the dual is zero. By default all clients share one
    /// initial point, with per-client draws as an opt-in.
    pub fn initial_states(&self) -> Vec<ClientState> {
        let init_seed = seed::mix(&[self.cfg.seed, 0x696e_6974]);
        if self.cfg.heterogeneous_init {
            (0..self.cfg.num_clients)
                .map(|i| {
                    let client_seed = seed::mix(&[init_seed, i as u64]);
                    ClientState::fresh(i, self.model.init_params(client_seed))
                })
                .collect()
        } else {
            let x0 = self.model.init_params(init_seed);
            (0..self.cfg.num_clients).map(|i| ClientState::fresh(i, x0.clone())).collect()
        }
    }

    /// The gossip matrix for a round: cached when fixed, redrawn per round
    /// when time-varying.
    pub fn mixing_for_round(&self, round: usize) -> Result<MixingMatrix, SimError> {
        if let Some(w) = &self.fixed_w {
            return Ok(w.clone());
        }
        let k = match self.cfg.topology {
            TopologyKind::Random { k } => k,
            other => {
                // Time-varying was forced on for a deterministic kind; the
                // graph does not actually change between rounds.
                let topo_seed = seed::mix(&[self.cfg.seed, 0x746f_706f]);
                let graph = build_graph(other, self.cfg.num_clients, topo_seed)?;
                return Ok(metropolis_weights(&graph)?);
            }
        };
        let topo_seed = seed::mix(&[self.cfg.seed, 0x746f_706f]);
        let graph = time_varying_random(topo_seed, round, self.cfg.num_clients, k)?;
        Ok(metropolis_weights(&graph)?)
    }

    /// Advance one round; metrics are computed at the eval cadence and on
    /// the final round.
    pub fn run_round(
        &self,
        states: &[ClientState],
        round: usize,
    ) -> Result<(Vec<ClientState>, Option<RoundMetrics>), SimError> {
        let w = self.mixing_for_round(round)?;
        let eta = lr_schedule(self.cfg.hyper.eta_l, self.cfg.hyper.decay, round);
        let rng_for = |client: usize| seed_stream(self.cfg.seed, client, round);
        let pool = self.pool.as_ref();

        let next = match self.cfg.algorithm {
            AlgorithmKind::DfedAdmm | AlgorithmKind::DfedAdmmSam => {
                let variant = if self.cfg.algorithm == AlgorithmKind::DfedAdmm {
                    Variant::Admm
                } else {
                    Variant::AdmmSam
                };
                let rc = RoundCfg {
                    eta,
                    lambda: self.cfg.hyper.lambda,
                    rho: self.cfg.hyper.rho,
                    local_steps: self.cfg.hyper.local_steps,
                    batch_size: self.cfg.batch_size,
                    variant,
                };
                admm_round(states, &w, self.model.as_ref(), &self.fed, &rc, &rng_for, pool)
                    .map(|(s, _traces)| s)
            }
            AlgorithmKind::Dpsgd | AlgorithmKind::DfedAvg | AlgorithmKind::DfedAvgM
            | AlgorithmKind::DfedSam => {
                let kind = match self.cfg.algorithm {
                    AlgorithmKind::Dpsgd => BaselineKind::Dpsgd,
                    AlgorithmKind::DfedAvg => BaselineKind::DfedAvg,
                    AlgorithmKind::DfedAvgM => BaselineKind::DfedAvgM {
                        momentum: self.cfg.momentum,
                    },
                    _ => BaselineKind::DfedSam { rho: self.cfg.hyper.rho },
                };
                let bc = BaselineRoundCfg {
                    kind,
                    eta,
                    local_steps: self.cfg.hyper.local_steps,
                    batch_size: self.cfg.batch_size,
                };
                baseline_round(&bc, states, &w, self.model.as_ref(), &self.fed, &rng_for, pool)
            }
        }
        .map_err(|source| SimError::Diverged { round, source })?;

        let evaluated = round % self.cfg.eval_every == 0 || round + 1 == self.cfg.rounds;
        let metrics = if evaluated {
            Some(self.metrics(&next, round, eta, w.psi())?)
        } else {
            None
        };
        Ok((next, metrics))
    }

    fn metrics(
        &self,
        states: &[ClientState],
        round: usize,
        eta: f64,
        psi: f64,
    ) -> Result<RoundMetrics, SimError> {
        let xs: Vec<Vec<f64>> = states.iter().map(|s| s.x.clone()).collect();
        let xbar = linalg::mean_vec(&xs);
        let m = states.len();

        let mut train_loss = 0.0;
        let mut mean_grad = vec![0.0; xbar.len()];
        for (i, state) in states.iter().enumerate() {
            let (data, shard) = self.fed.client(i);
            train_loss += self.model.loss(&state.x, data, shard);
            let g = self.model.grad(&xbar, data, shard);
            linalg::axpy(1.0 / m as f64, &g, &mut mean_grad);
        }
        train_loss /= m as f64;

        let test_acc = match &self.test_data {
            Some(test) => evaluate(self.model.as_ref(), &xbar, test).1,
            None => 0.0,
        };

        let metrics = RoundMetrics {
            round,
            eta,
            psi,
            train_loss,
            test_acc,
            grad_norm_sq: linalg::norm_sq(&mean_grad),
            consensus_err: consensus_error(&xs),
        };
        let finite = metrics.train_loss.is_finite()
            && metrics.grad_norm_sq.is_finite()
            && metrics.consensus_err.is_finite();
        if !finite {
            return Err(SimError::NonFiniteMetrics { round });
        }
        Ok(metrics)
    }
}

/// Final states plus every evaluated round's metrics.
#[derive(Debug)]
pub struct RunOutput {
    pub metrics: Vec<RoundMetrics>,
    pub final_states: Vec<ClientState>,
}

/// Drive a full experiment from a config.
pub fn run_experiment(cfg: ExperimentConfig) -> Result<RunOutput, SimError> {
    let ctx = RunContext::build(cfg)?;
    let mut states = ctx.initial_states();
    let mut metrics = Vec::new();
    for round in 0..ctx.cfg.rounds {
        let (next, row) = ctx.run_round(&states, round)?;
        states = next;
        if let Some(row) = row {
            metrics.push(row);
        }
    }
    Ok(RunOutput { metrics, final_states: states })
}

fn split_dataset(total: &Dataset, n_train: usize) -> Result<(Dataset, Dataset), DataError> {
    let d = total.dim();
    let take = |range: std::ops::Range<usize>| -> Result<Dataset, DataError> {
        let mut features = Vec::with_capacity(range.len() * d);
        let mut labels = Vec::with_capacity(range.len());
        for i in range.clone() {
            features.extend_from_slice(total.row(i));
            labels.push(total.label(i));
        }
        Dataset::classification(features, range.len(), d, labels, total.num_classes())
    };
    let train = take(0..n_train)?;
    let test = take(n_train..total.len())?;
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config() -> ExperimentConfig {
        ExperimentConfig {
            algorithm: AlgorithmKind::DfedAvg,
            model: ModelSpec::Logistic { l2: 0.0 },
            dataset: DatasetSpec::Synthetic {
                n: 120,
                dim: 4,
                classes: 3,
                class_sep: 1.5,
                test_n: 30,
            },
            partition: PartitionSpec::Iid,
            min_shard_size: 2,
            topology: TopologyKind::Ring,
            time_varying: TimeVarying::Auto,
            hyper: AdmmHyper { eta_l: 0.1, lambda: 0.1, rho: 0.1, local_steps: 3, decay: 0.998 },
            momentum: 0.9,
            batch_size: 8,
            heterogeneous_init: false,
            rounds: 4,
            num_clients: 6,
            seed: 42,
            eval_every: 1,
            threads: 1,
            out: None,
        }
    }

    #[test]
    fn lr_schedule_examples() {
        assert_eq!(lr_schedule(0.1, 1.0, 500), 0.1);
        assert!((lr_schedule(0.1, 0.998, 1) - 0.0998).abs() < 1e-15);
        // Iterated-product oracle for the 500-round decay.
        let mut product = 1.0f64;
        for _ in 0..500 {
            product *= 0.998;
        }
        let scheduled = lr_schedule(1.0, 0.998, 500);
        assert!((scheduled - product).abs() < 1e-12);
        assert!((scheduled - 0.3675).abs() < 1e-3);
    }

    #[test]
    fn consensus_error_cases() {
        let xs = vec![vec![1.0, 2.0]; 5];
        assert_eq!(consensus_error(&xs), 0.0);

        let v = vec![3.0, -4.0]; // ||v||^2 = 25
        let xs = vec![v.clone(), v.iter().map(|a| -a).collect()];
        assert!((consensus_error(&xs) - 25.0).abs() < 1e-12);

        // Independent two-pass oracle on random states.
        use rand::Rng;
        let mut rng = seed::stream(2);
        let xs: Vec<Vec<f64>> =
            (0..7).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let mean: Vec<f64> = (0..4)
            .map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / 7.0)
            .collect();
        let expected: f64 = xs
            .iter()
            .map(|x| x.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>()
            / 7.0;
        assert!((consensus_error(&xs) - expected).abs() < 1e-12);
    }

    #[test]
    fn evaluate_perfect_margin_fixture() {
        // Widely separated blobs and a nearest-center linear classifier:
        // rows of W set to the class centers score x by center affinity.
        let data = gen_synthetic_classification(60, 4, 2, 10.0, 12).unwrap();
        let model = LogisticModel { input_dim: 4, num_classes: 2, l2: 0.0 };
        let mut params = model.init_params(0);
        // Recover each class's empirical center; with bias -||c||^2/2 the
        // linear scores implement the nearest-center rule exactly.
        for c in 0..2usize {
            let members: Vec<usize> =
                (0..60).filter(|&i| data.label(i) as usize == c).collect();
            let mut norm_sq = 0.0;
            for j in 0..4 {
                let center: f64 =
                    members.iter().map(|&i| data.row(i)[j]).sum::<f64>() / members.len() as f64;
                params[c * 4 + j] = center;
                norm_sq += center * center;
            }
            params[2 * 4 + c] = -0.5 * norm_sq;
        }
        let (_, acc) = evaluate(&model, &params, &data);
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn evaluate_tie_break_counts_class_zero_frequency() {
        let data = gen_synthetic_classification(50, 3, 2, 1.0, 3).unwrap();
        let model = LogisticModel { input_dim: 3, num_classes: 2, l2: 0.0 };
        let zeros = model.init_params(0);
        let (_, acc) = evaluate(&model, &zeros, &data);
        let class0 = data.labels().iter().filter(|&&l| l == 0).count() as f64 / 50.0;
        assert_eq!(acc, class0);
    }

    #[test]
    fn seed_stream_distinctness() {
        use rand::Rng;
        let mut firsts = std::collections::HashSet::new();
        for client in 0..100usize {
            for round in 0..100usize {
                let v: u64 = seed_stream(7, client, round).random();
                assert!(firsts.insert(v), "collision at ({client}, {round})");
            }
        }
        // Same triple replays.
        let a: u64 = seed_stream(7, 3, 9).random();
        let b: u64 = seed_stream(7, 3, 9).random();
        assert_eq!(a, b);
    }

    #[test]
    fn full_run_determinism_and_csv_bytes() {
        let cfg = quick_config();
        let a = run_experiment(cfg.clone()).unwrap();
        let b = run_experiment(cfg).unwrap();
        assert_eq!(metrics_to_csv(&a.metrics), metrics_to_csv(&b.metrics));
    }

    #[test]
    fn worker_pool_changes_nothing() {
        let cfg = quick_config();
        let seq = run_experiment(cfg.clone()).unwrap();
        let par = run_experiment(ExperimentConfig { threads: 4, ..cfg }).unwrap();
        assert_eq!(metrics_to_csv(&seq.metrics), metrics_to_csv(&par.metrics));
        for (a, b) in seq.final_states.iter().zip(&par.final_states) {
            assert!(a.x.iter().zip(&b.x).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn admm_runs_and_evaluates_at_cadence() {
        let cfg = ExperimentConfig {
            algorithm: AlgorithmKind::DfedAdmm,
            rounds: 5,
            eval_every: 2,
            ..quick_config()
        };
        let out = run_experiment(cfg).unwrap();
        let rounds: Vec<usize> = out.metrics.iter().map(|m| m.round).collect();
        assert_eq!(rounds, vec![0, 2, 4]);
    }

    #[test]
    fn symmetric_shards_stay_in_consensus_on_full_graph() {
        // Identical init, IID-identical per-client data (same dataset rows),
        // full graph: DFedAvg keeps all clients bit-identical, so the
        // consensus error is exactly zero.
        let quad = gen_quadratic(1, 3, 10, 0.0, 5).unwrap();
        let datasets: Vec<Dataset> = (0..4).map(|_| quad.clients[0].clone()).collect();
        let fed = FedData::per_client(datasets);
        let model = QuadraticModel { dim: 3 };
        let states: Vec<ClientState> =
            (0..4).map(|i| ClientState::fresh(i, vec![0.5, -0.5, 0.25])).collect();
        let g = build_graph(TopologyKind::Full, 4, 0).unwrap();
        let w = metropolis_weights(&g).unwrap();
        let cfg = BaselineRoundCfg {
            kind: BaselineKind::DfedAvg,
            eta: 0.05,
            local_steps: 5,
            batch_size: 0,
        };
        // Shared stream per round, same for every client.
        let rng_for = |_i: usize| seed::stream(11);
        let mut cur = states;
        for _ in 0..5 {
            cur = baseline_round(&cfg, &cur, &w, &model, &fed, &rng_for, None).unwrap();
            assert!(consensus_error(&cur.iter().map(|s| s.x.clone()).collect::<Vec<_>>()) <= 1e-20);
        }
    }

    #[test]
    fn zero_class_separation_trains_to_chance() {
        // class_sep = 0 collapses both blobs onto one distribution; a linear
        // classifier cannot beat chance on held-out data.
        let cfg = ExperimentConfig {
            dataset: DatasetSpec::Synthetic {
                n: 300,
                dim: 6,
                classes: 2,
                class_sep: 0.0,
                test_n: 200,
            },
            topology: TopologyKind::Full,
            rounds: 40,
            num_clients: 4,
            eval_every: 40,
            ..quick_config()
        };
        let out = run_experiment(cfg).unwrap();
        let acc = out.metrics.last().unwrap().test_acc;
        assert!((acc - 0.5).abs() <= 0.1, "accuracy {acc} outside 0.5 +/- 0.1");
    }

    #[test]
    fn init_is_shared_unless_opted_out() {
        let cfg = ExperimentConfig { model: ModelSpec::Mlp { hidden: 4 }, ..quick_config() };
        let ctx = RunContext::build(cfg).unwrap();
        let states = ctx.initial_states();
        assert!(states.iter().all(|s| s.x == states[0].x));
        assert!(states.iter().all(|s| s.g_hat.iter().all(|&v| v == 0.0)));

        let cfg = ExperimentConfig {
            model: ModelSpec::Mlp { hidden: 4 },
            heterogeneous_init: true,
            ..quick_config()
        };
        let ctx = RunContext::build(cfg).unwrap();
        let states = ctx.initial_states();
        assert_ne!(states[0].x, states[1].x);
    }

    #[test]
    fn time_varying_defaults() {
        let mut cfg = quick_config();
        cfg.topology = TopologyKind::Random { k: 3 };
        assert!(cfg.topology_is_time_varying());
        cfg.topology = TopologyKind::Ring;
        assert!(!cfg.topology_is_time_varying());
        cfg.time_varying = TimeVarying::On;
        assert!(cfg.topology_is_time_varying());
    }

    #[test]
    fn divergence_reports_round() {
        // Quadratic gradients scale with the iterate, so this overflows to
        // non-finite parameters inside round 0.
        let cfg = ExperimentConfig {
            algorithm: AlgorithmKind::DfedAdmm,
            model: ModelSpec::Quadratic,
            dataset: DatasetSpec::Quadratic { dim: 3, n_per_client: 10, heterogeneity: 0.0 },
            hyper: AdmmHyper {
                eta_l: 1e200,
                lambda: 1e-200,
                rho: 0.0,
                local_steps: 5,
                decay: 1.0,
            },
            ..quick_config()
        };
        match run_experiment(cfg) {
            Err(SimError::Diverged { round: 0, source: TrainError::Diverged { .. } }) => {}
            other => panic!("expected divergence at round 0, got {other:?}"),
        }
    }
}
