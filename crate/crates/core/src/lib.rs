//! Deterministic simulator for decentralized federated optimization.
//!
//! The crate models a peer-to-peer network of `m` clients that train a shared
//! objective without a central server. Each round, every client runs a few
//! local optimizer steps on its own data shard and then averages parameters
//! with its graph neighbors through a symmetric doubly-stochastic gossip
//! matrix. The primal-dual local solver ([`dfedadmm`]) carries a per-client
//! dual variable that corrects drift across rounds; a sharpness-aware variant
//! perturbs each step along the normalized gradient before descending.
//!
//! Everything is seeded: two runs with the same configuration produce
//! byte-identical metric CSVs, with or without the worker pool.
//!
//! Module map:
//! - [`topology`]: communication graphs, Metropolis gossip weights, spectra.
//! - [`data`]: synthetic datasets, Dirichlet/IID partitioning, IDX ingestion.
//! - [`model`]: differentiable objectives on flat parameter vectors.
//! - [`dfedadmm`]: the primal-dual round (local steps, dual update, gossip)
//!   plus closed-form oracles for its update identities.
//! - [`baselines`]: D-PSGD, DFedAvg, DFedAvgM, DFedSAM comparison rounds.
//! - [`simulator`]: round orchestration, metrics, schedules, seeding.
//! - [`config`]: flat key-value experiment configuration files.
//! - [`verify`]: the randomized identity sweeps behind `dfedsim verify`.

pub mod baselines;
pub mod config;
pub mod data;
pub mod dfedadmm;
pub mod linalg;
pub mod model;
pub mod seed;
pub mod simulator;
pub mod topology;
pub mod verify;
