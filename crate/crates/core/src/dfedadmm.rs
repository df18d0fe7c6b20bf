//! The primal-dual decentralized round and its closed-form oracles.
//!
//! Each round, client `i` starts from its post-gossip model (the anchor),
//! runs `K` stochastic steps of
//!
//! ```text
//! x_{k+1} = x_k - eta * (g_k - g_hat + (x_k - anchor) / lambda)
//! ```
//!
//! where `g_hat` is the dual variable carried from the previous round and the
//! quadratic term anchors the iterates to the round start. The sharpness-aware
//! variant first ascends `rho` along the normalized gradient of the same
//! minibatch and takes the descent gradient at the perturbed point. After the
//! local steps the dual absorbs the scaled displacement,
//! `g_hat' = g_hat - (x_K - anchor) / lambda`, the outbound model
//! `z = x_K - lambda * g_hat` (previous dual) is sent, and every client
//! averages its neighbors' `z` through the gossip matrix.
//!
//! The K-step displacement has a closed form in the geometric weights
//! `gamma_k = (eta/lambda) (1 - eta/lambda)^{K-1-k}` with sum
//! `gamma = 1 - (1 - eta/lambda)^K`:
//!
//! ```text
//! x_K - anchor = -lambda * sum_k gamma_k g_k + gamma * lambda * g_hat
//! g_hat'       = (1 - gamma) g_hat + sum_k gamma_k g_k
//! ```
//!
//! [`closed_form_delta`] and [`dual_mixture_oracle`] compute these forms from
//! a recorded [`LocalTrace`], giving an independent algebraic route against
//! the iterative one; the verify suite holds them to 1e-10.

use std::fmt;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{minibatch, FedData};
use crate::linalg;
use crate::model::ObjectiveModel;
use crate::topology::MixingMatrix;

/// Norm threshold below which the SAM ascent direction is treated as zero.
pub const SAM_ZERO_GRAD_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Per-client primal model and dual variable.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: usize,
    /// Current model x_i.
    pub x: Vec<f64>,
    /// Dual variable entering the next round; zero before round 0.
    pub g_hat: Vec<f64>,
}

impl ClientState {
    pub fn fresh(client_id: usize, x: Vec<f64>) -> Self {
        let g_hat = vec![0.0; x.len()];
        Self { client_id, x, g_hat }
    }
}

/// Algorithm hyperparameters as configured (eta_l before per-round decay).
#[derive(Debug, Clone, Copy)]
pub struct AdmmHyper {
    pub eta_l: f64,
    pub lambda: f64,
    pub rho: f64,
    pub local_steps: usize,
    pub decay: f64,
}

/// Which local branch to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Admm,
    AdmmSam,
}

/// Geometric coefficients of the K-step recursion.
#[derive(Debug, Clone)]
pub struct GammaWeights {
    /// `1 - (1 - eta/lambda)^K`.
    pub gamma: f64,
    /// `gamma_k[k] = (eta/lambda)(1 - eta/lambda)^{K-1-k}`; sums to `gamma`.
    pub gamma_k: Vec<f64>,
}

/// What actually happened during one client's local phase: the anchor, the
/// descent gradients used (taken at the perturbed point under SAM), and the
/// final iterate. Enough to evaluate both closed-form oracles exactly.
#[derive(Debug, Clone)]
pub struct LocalTrace {
    pub anchor: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
    pub x_final: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    /// Parameters went non-finite during local training.
    Diverged { client: usize, step: usize },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Diverged { client, step } => {
                write!(f, "client {client} diverged at local step {step}")
            }
        }
    }
}

impl std::error::Error for TrainError {}

/// Soft hyperparameter checks; the run proceeds with warnings.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperWarning {
    /// eta_l > 2 lambda leaves the geometric-weight regime.
    EtaExceedsTwoLambda { eta_l: f64, lambda: f64 },
    /// K below lambda/eta_l weakens the gamma > 1 - 1/e floor.
    TooFewLocalSteps { local_steps: usize, threshold: f64 },
}

impl fmt::Display for HyperWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EtaExceedsTwoLambda { eta_l, lambda } => {
                write!(f, "eta_l = {eta_l} exceeds 2*lambda = {}", 2.0 * lambda)
            }
            Self::TooFewLocalSteps { local_steps, threshold } => {
                write!(f, "K = {local_steps} below lambda/eta_l = {threshold}")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Elementary updates
// ---------------------------------------------------------------------------

/// `gamma` and `{gamma_k}` for the current (eta_l, lambda, K).
pub fn gamma_weights(eta_l: f64, lambda: f64, local_steps: usize) -> GammaWeights {
    assert!(eta_l > 0.0 && lambda > 0.0, "eta_l and lambda must be positive");
    assert!(local_steps >= 1, "K must be at least 1");
    let ratio = eta_l / lambda;
    let base = 1.0 - ratio;
    let gamma = 1.0 - base.powi(local_steps as i32);
    let gamma_k = (0..local_steps)
        .map(|k| ratio * base.powi((local_steps - 1 - k) as i32))
        .collect();
    GammaWeights { gamma, gamma_k }
}

/// One proximal descent step from `x_k` toward the anchor.
pub fn local_step(
    x_k: &[f64],
    g_k: &[f64],
    g_hat_prev: &[f64],
    anchor: &[f64],
    eta_l: f64,
    lambda: f64,
) -> Vec<f64> {
    assert!(
        x_k.len() == g_k.len() && x_k.len() == g_hat_prev.len() && x_k.len() == anchor.len(),
        "dimension mismatch in local step"
    );
    x_k.iter()
        .zip(g_k)
        .zip(g_hat_prev)
        .zip(anchor)
        .map(|(((x, g), gh), a)| x - eta_l * (g - gh + (x - a) / lambda))
        .collect()
}

/// Normalized gradient ascent of radius `rho`. Returns `x` bit-identically
/// when `rho = 0` or the gradient is numerically zero, so the SAM branch
/// degenerates to the plain one exactly.
pub fn sam_ascent(x: &[f64], g1: &[f64], rho: f64) -> Vec<f64> {
    assert_eq!(x.len(), g1.len(), "dimension mismatch in SAM ascent");
    assert!(rho >= 0.0, "rho must be non-negative");
    if rho == 0.0 {
        return x.to_vec();
    }
    let norm = linalg::norm(g1);
    if norm <= SAM_ZERO_GRAD_TOL {
        return x.to_vec();
    }
    let scale = rho / norm;
    x.iter().zip(g1).map(|(xi, gi)| xi + scale * gi).collect()
}

/// Dual update from the K-step displacement.
pub fn dual_update(g_hat_prev: &[f64], x_k: &[f64], anchor: &[f64], lambda: f64) -> Vec<f64> {
    assert!(
        g_hat_prev.len() == x_k.len() && x_k.len() == anchor.len(),
        "dimension mismatch in dual update"
    );
    assert!(lambda > 0.0, "lambda must be positive");
    g_hat_prev
        .iter()
        .zip(x_k)
        .zip(anchor)
        .map(|((gh, xk), a)| gh - (xk - a) / lambda)
        .collect()
}

/// The model sent to neighbors: `z = x_K - lambda * g_hat_prev`, with the
/// dual from the *previous* round.
pub fn outbound_model(x_k: &[f64], g_hat_prev: &[f64], lambda: f64) -> Vec<f64> {
    assert_eq!(x_k.len(), g_hat_prev.len(), "dimension mismatch in outbound model");
    x_k.iter().zip(g_hat_prev).map(|(x, gh)| x - lambda * gh).collect()
}

/// Gossip step: `x_i' = sum_l w_il z_l`. Contributions are summed in fixed
/// index order so parallel rounds reproduce sequential ones bit-for-bit.
pub fn mix(w: &MixingMatrix, z_all: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = w.node_count();
    assert_eq!(z_all.len(), m, "one outbound model per node required");
    let d = z_all[0].len();
    assert!(z_all.iter().all(|z| z.len() == d), "outbound model dims differ");
    (0..m)
        .map(|i| {
            let mut acc = vec![0.0; d];
            for (l, z) in z_all.iter().enumerate() {
                let wil = w.weight(i, l);
                if wil != 0.0 {
                    linalg::axpy(wil, z, &mut acc);
                }
            }
            acc
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Closed-form oracles
// ---------------------------------------------------------------------------

/// Closed form of the K-step displacement:
/// `x_K - anchor = -lambda * sum_k gamma_k g_k + gamma lambda g_hat_prev`.
pub fn closed_form_delta(
    trace: &LocalTrace,
    gw: &GammaWeights,
    g_hat_prev: &[f64],
    lambda: f64,
) -> Vec<f64> {
    assert_eq!(trace.grads.len(), gw.gamma_k.len(), "trace length disagrees with K");
    let d = trace.anchor.len();
    let mut delta = vec![0.0; d];
    for (g, &gk) in trace.grads.iter().zip(&gw.gamma_k) {
        linalg::axpy(-lambda * gk, g, &mut delta);
    }
    linalg::axpy(gw.gamma * lambda, g_hat_prev, &mut delta);
    delta
}

/// Convex-mixture form of the dual update:
/// `g_hat' = (1 - gamma) g_hat_prev + sum_k gamma_k g_k`.
/// Must agree with [`dual_update`] applied to the same trace.
pub fn dual_mixture_oracle(
    trace: &LocalTrace,
    gw: &GammaWeights,
    g_hat_prev: &[f64],
) -> Vec<f64> {
    assert_eq!(trace.grads.len(), gw.gamma_k.len(), "trace length disagrees with K");
    let mut out = linalg::scale(1.0 - gw.gamma, g_hat_prev);
    for (g, &gk) in trace.grads.iter().zip(&gw.gamma_k) {
        linalg::axpy(gk, g, &mut out);
    }
    out
}

/// Momentum-corrected mean sequence `w_t = xbar_t + ((1-gamma)/gamma)(xbar_t - xbar_prev)`.
pub fn auxiliary_w(xbar_t: &[f64], xbar_prev: &[f64], gamma: f64) -> Vec<f64> {
    assert!(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
    let coeff = (1.0 - gamma) / gamma;
    xbar_t
        .iter()
        .zip(xbar_prev)
        .map(|(t, p)| t + coeff * (t - p))
        .collect()
}

/// Soft checks on the hyperparameter regime; never fails the run.
pub fn validate_hyper(hyper: &AdmmHyper) -> Vec<HyperWarning> {
    let mut warnings = Vec::new();
    if hyper.eta_l > 2.0 * hyper.lambda {
        warnings.push(HyperWarning::EtaExceedsTwoLambda {
            eta_l: hyper.eta_l,
            lambda: hyper.lambda,
        });
    }
    let threshold = hyper.lambda / hyper.eta_l;
    if (hyper.local_steps as f64) < threshold {
        warnings.push(HyperWarning::TooFewLocalSteps {
            local_steps: hyper.local_steps,
            threshold,
        });
    }
    warnings
}

// ---------------------------------------------------------------------------
// Local training and the full round
// ---------------------------------------------------------------------------

/// Per-round training parameters (eta already decayed for this round).
#[derive(Debug, Clone, Copy)]
pub struct RoundCfg {
    pub eta: f64,
    pub lambda: f64,
    pub rho: f64,
    pub local_steps: usize,
    /// 0 means full batch in index order.
    pub batch_size: usize,
    pub variant: Variant,
}

/// Run K local steps from the client's current model, recording the descent
/// gradients actually used. With `rho = 0` the SAM variant reproduces the
/// plain one bit-identically under the same rng stream: both draw one
/// minibatch per step, and the zero-radius ascent is the identity.
pub fn local_train(
    state: &ClientState,
    model: &dyn ObjectiveModel,
    data: &crate::data::Dataset,
    shard: &[usize],
    cfg: &RoundCfg,
    rng: &mut ChaCha8Rng,
) -> Result<LocalTrace, TrainError> {
    assert_eq!(state.x.len(), model.dim(), "state dimension disagrees with model");
    assert!(cfg.local_steps >= 1, "K must be at least 1");
    let anchor = state.x.clone();
    let mut x = state.x.clone();
    let mut grads = Vec::with_capacity(cfg.local_steps);
    for step in 0..cfg.local_steps {
        let batch = minibatch(shard, cfg.batch_size, rng).expect("shard must be non-empty");
        let g = match cfg.variant {
            Variant::Admm => model.grad(&x, data, &batch),
            Variant::AdmmSam => {
                let g1 = model.grad(&x, data, &batch);
                let perturbed = sam_ascent(&x, &g1, cfg.rho);
                model.grad(&perturbed, data, &batch)
            }
        };
        x = local_step(&x, &g, &state.g_hat, &anchor, cfg.eta, cfg.lambda);
        if !linalg::all_finite(&x) {
            return Err(TrainError::Diverged { client: state.client_id, step });
        }
        grads.push(g);
    }
    Ok(LocalTrace { anchor, grads, x_final: x })
}

/// Map a fallible closure over clients, optionally on a worker pool. Results
/// come back in client order either way, preserving determinism.
pub(crate) fn map_clients<T: Send>(
    m: usize,
    pool: Option<&rayon::ThreadPool>,
    f: impl Fn(usize) -> Result<T, TrainError> + Sync + Send,
) -> Result<Vec<T>, TrainError> {
    match pool {
        None => (0..m).map(f).collect(),
        Some(p) => p.install(|| (0..m).into_par_iter().map(f).collect()),
    }
}

/// One full round: local training on every client, dual update, outbound
/// construction, gossip mixing. Returns the new states and the local traces
/// (the traces feed the identity oracles and are otherwise droppable).
pub fn admm_round(
    states: &[ClientState],
    w: &MixingMatrix,
    model: &dyn ObjectiveModel,
    fed: &FedData,
    cfg: &RoundCfg,
    rng_for: &(dyn Fn(usize) -> ChaCha8Rng + Sync),
    pool: Option<&rayon::ThreadPool>,
) -> Result<(Vec<ClientState>, Vec<LocalTrace>), TrainError> {
    let m = states.len();
    assert_eq!(w.node_count(), m, "mixing matrix size disagrees with client count");
    let trained = map_clients(m, pool, |i| {
        let (data, shard) = fed.client(i);
        let mut rng = rng_for(i);
        local_train(&states[i], model, data, shard, cfg, &mut rng)
    })?;
    let mut z_all = Vec::with_capacity(m);
    let mut duals = Vec::with_capacity(m);
    for (state, trace) in states.iter().zip(&trained) {
        duals.push(dual_update(&state.g_hat, &trace.x_final, &trace.anchor, cfg.lambda));
        z_all.push(outbound_model(&trace.x_final, &state.g_hat, cfg.lambda));
    }
    let mixed = mix(w, &z_all);
    let new_states = states
        .iter()
        .zip(mixed)
        .zip(duals)
        .map(|((s, x), g_hat)| ClientState { client_id: s.client_id, x, g_hat })
        .collect();
    Ok((new_states, trained))
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
