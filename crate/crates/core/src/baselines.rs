//! Decentralized comparison algorithms on the shared plumbing.
//!
//! All four baselines end a round by gossip-mixing the clients' final local
//! iterates; none carries a dual variable. D-PSGD takes a single SGD step
//! per round, DFedAvg takes `K`, DFedAvgM adds a heavy-ball buffer that
//! resets at each round boundary, and DFedSAM uses the same two-gradient
//! minibatch-reuse rule as the SAM variant of the primal-dual solver.

use rand_chacha::ChaCha8Rng;

use crate::data::{minibatch, FedData};
use crate::dfedadmm::{map_clients, mix, sam_ascent, ClientState, TrainError};
use crate::linalg;
use crate::model::ObjectiveModel;
use crate::topology::MixingMatrix;

/// Baseline selector with its algorithm-specific knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineKind {
    Dpsgd,
    DfedAvg,
    DfedAvgM { momentum: f64 },
    DfedSam { rho: f64 },
}

impl BaselineKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dpsgd => "dpsgd",
            Self::DfedAvg => "dfedavg",
            Self::DfedAvgM { .. } => "dfedavgm",
            Self::DfedSam { .. } => "dfedsam",
        }
    }
}

/// Per-round baseline parameters (eta already decayed).
#[derive(Debug, Clone, Copy)]
pub struct BaselineRoundCfg {
    pub kind: BaselineKind,
    pub eta: f64,
    /// Local steps for the multi-step baselines; D-PSGD always takes one.
    pub local_steps: usize,
    /// 0 means full batch in index order.
    pub batch_size: usize,
}

/// K local SGD steps with optional heavy-ball momentum and optional SAM
/// perturbation. The momentum buffer starts at zero every round. Returns the
/// final iterate, which is also the outbound model.
pub fn dfedavg_local(
    client_id: usize,
    x0: &[f64],
    model: &dyn ObjectiveModel,
    data: &crate::data::Dataset,
    shard: &[usize],
    eta: f64,
    local_steps: usize,
    batch_size: usize,
    momentum: f64,
    rho: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, TrainError> {
    assert!(local_steps >= 1, "K must be at least 1");
    assert!((0.0..1.0).contains(&momentum), "momentum must be in [0, 1)");
    assert!(rho >= 0.0, "rho must be non-negative");
    let mut x = x0.to_vec();
    let mut buf = vec![0.0; x.len()];
    for step in 0..local_steps {
        let batch = minibatch(shard, batch_size, rng).expect("shard must be non-empty");
        let g = if rho > 0.0 {
            let g1 = model.grad(&x, data, &batch);
            let perturbed = sam_ascent(&x, &g1, rho);
            model.grad(&perturbed, data, &batch)
        } else {
            model.grad(&x, data, &batch)
        };
        if momentum > 0.0 {
            for (b, gi) in buf.iter_mut().zip(&g) {
                *b = momentum * *b + gi;
            }
        } else {
            buf.copy_from_slice(&g);
        }
        linalg::axpy(-eta, &buf, &mut x);
        if !linalg::all_finite(&x) {
            return Err(TrainError::Diverged { client: client_id, step });
        }
    }
    Ok(x)
}

/// One baseline round: local phase per kind, then gossip over the final
/// iterates. Step-then-mix, so neighbors average already-updated models.
pub fn baseline_round(
    cfg: &BaselineRoundCfg,
    states: &[ClientState],
    w: &MixingMatrix,
    model: &dyn ObjectiveModel,
    fed: &FedData,
    rng_for: &(dyn Fn(usize) -> ChaCha8Rng + Sync),
    pool: Option<&rayon::ThreadPool>,
) -> Result<Vec<ClientState>, TrainError> {
    let m = states.len();
    assert_eq!(w.node_count(), m, "mixing matrix size disagrees with client count");
    let (steps, momentum, rho) = match cfg.kind {
        BaselineKind::Dpsgd => (1, 0.0, 0.0),
        BaselineKind::DfedAvg => (cfg.local_steps, 0.0, 0.0),
        BaselineKind::DfedAvgM { momentum } => (cfg.local_steps, momentum, 0.0),
        BaselineKind::DfedSam { rho } => (cfg.local_steps, 0.0, rho),
    };
    let finals = map_clients(m, pool, |i| {
        let (data, shard) = fed.client(i);
        let mut rng = rng_for(i);
        dfedavg_local(
            states[i].client_id,
            &states[i].x,
            model,
            data,
            shard,
            cfg.eta,
            steps,
            cfg.batch_size,
            momentum,
            rho,
            &mut rng,
        )
    })?;
    let mixed = mix(w, &finals);
    Ok(states
        .iter()
        .zip(mixed)
        .map(|(s, x)| ClientState { client_id: s.client_id, x, g_hat: s.g_hat.clone() })
        .collect())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
