//! `dfedsim` — deterministic decentralized federated optimization runs.
//!
//! Subcommands: `run` (experiment to CSV), `verify` (numerical identity
//! suite), `topology` (spectral report), `partition-stats` (per-shard class
//! histograms). Exit codes: 0 success, 1 verification failure, 2 config
//! error, 3 runtime divergence.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dfedsim_core::config::parse_config;
use dfedsim_core::data::{gen_synthetic_classification, dirichlet_partition, iid_partition, load_idx};
use dfedsim_core::dfedadmm::validate_hyper;
use dfedsim_core::simulator::{
    metrics_to_csv, run_experiment, DatasetSpec, ExperimentConfig, PartitionSpec, SimError,
};
use dfedsim_core::topology::{
    build_graph, contraction_check, metropolis_weights, TopologyKind,
};
use dfedsim_core::verify;

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_CONFIG_ERROR: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "dfedsim", version, about = "Decentralized federated optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file and write the metrics CSV.
    Run {
        /// Experiment config (flat `key = value` lines).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the CSV output path (default: config `out`, else metrics.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the worker-pool size (1 = sequential).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the numerical identity suite; nonzero exit on any failure.
    Verify {
        /// Seed for the randomized sweeps.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Report a topology: psi, degrees, and the contraction table.
    Topology {
        /// ring | grid | exponential | full | random
        kind: String,
        /// Node count.
        m: usize,
        /// Neighbor budget for the random kind.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Seed for the random kind.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Rows of the contraction table.
        #[arg(long, default_value_t = 10)]
        t_max: usize,
        /// Emit machine-readable CSV instead of the text report.
        #[arg(long)]
        csv: bool,
    },
    /// Per-shard class histogram CSV for the config's dataset and partition.
    PartitionStats {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { config, seed, out, threads } => cmd_run(&config, seed, out, threads),
        Command::Verify { seed } => cmd_verify(seed),
        Command::Topology { kind, m, k, seed, t_max, csv } => {
            cmd_topology(&kind, m, k, seed, t_max, csv)
        }
        Command::PartitionStats { config, seed, out } => cmd_partition_stats(&config, seed, out),
    }
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

fn load_config(path: &Path, seed: Option<u64>, threads: Option<usize>) -> Option<ExperimentConfig> {
    let mut cfg = match parse_config(path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return None;
        }
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(threads) = threads {
        cfg.threads = threads.max(1);
    }
    Some(cfg)
}

fn cmd_run(
    config: &Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
) -> ExitCode {
    let Some(cfg) = load_config(config, seed, threads) else {
        return ExitCode::from(EXIT_CONFIG_ERROR);
    };
    for warning in validate_hyper(&cfg.hyper) {
        eprintln!("warning: {warning}");
    }
    let out_path = out
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("metrics.csv"));

    let result = match run_experiment(cfg) {
        Ok(r) => r,
        Err(e @ (SimError::Diverged { .. } | SimError::NonFiniteMetrics { .. })) => {
            eprintln!("run aborted: {e}");
            return ExitCode::from(EXIT_DIVERGED);
        }
        Err(e) => {
            eprintln!("cannot build experiment: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };

    let csv = metrics_to_csv(&result.metrics);
    if let Err(e) = std::fs::write(&out_path, csv) {
        eprintln!("cannot write {}: {e}", out_path.display());
        return ExitCode::from(EXIT_CONFIG_ERROR);
    }
    if let Some(last) = result.metrics.last() {
        println!(
            "round {} eta={:.4e} train_loss={:.6e} test_acc={:.4} grad_norm_sq={:.6e} consensus_err={:.6e} -> {}",
            last.round,
            last.eta,
            last.train_loss,
            last.test_acc,
            last.grad_norm_sq,
            last.consensus_err,
            out_path.display()
        );
    }
    ExitCode::SUCCESS
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

fn cmd_verify(seed: u64) -> ExitCode {
    let report = verify::run_all(seed);
    println!("{report}");
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFY_FAILED)
    }
}

// ---------------------------------------------------------------------------
// topology
// ---------------------------------------------------------------------------

fn parse_kind(kind: &str, k: usize) -> Option<TopologyKind> {
    match kind {
        "ring" => Some(TopologyKind::Ring),
        "grid" => Some(TopologyKind::Grid),
        "exponential" => Some(TopologyKind::Exponential),
        "full" => Some(TopologyKind::Full),
        "random" => Some(TopologyKind::Random { k }),
        _ => None,
    }
}

fn cmd_topology(kind: &str, m: usize, k: usize, seed: u64, t_max: usize, csv: bool) -> ExitCode {
    let Some(kind) = parse_kind(kind, k) else {
        eprintln!("unknown topology kind `{kind}` (ring|grid|exponential|full|random)");
        return ExitCode::from(EXIT_CONFIG_ERROR);
    };
    let graph = match build_graph(kind, m, seed) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("cannot build topology: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let weights = match metropolis_weights(&graph) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("cannot derive weights: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let norms = match contraction_check(&weights, t_max.max(1)) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("contraction check failed: {e}");
            return ExitCode::from(EXIT_VERIFY_FAILED);
        }
    };

    let degrees = graph.degrees();
    let max_deg = degrees.iter().copied().max().unwrap_or(0);
    let mut histogram = vec![0usize; max_deg + 1];
    for &d in &degrees {
        histogram[d] += 1;
    }

    if csv {
        println!("metric,value");
        println!("kind,{}", kind.name());
        println!("m,{m}");
        println!("edges,{}", graph.edge_count());
        println!("psi,{:.16e}", weights.psi());
        println!("spectral_gap,{:.16e}", 1.0 - weights.psi());
        for (deg, count) in histogram.iter().enumerate() {
            if *count > 0 {
                println!("degree_{deg},{count}");
            }
        }
        for (idx, norm) in norms.iter().enumerate() {
            println!("contraction_t{},{:.16e}", idx + 1, norm);
        }
    } else {
        println!("topology: {} on {} nodes, {} edges", kind.name(), m, graph.edge_count());
        let degs: Vec<String> = histogram
            .iter()
            .enumerate()
            .filter(|(_, c)| **c > 0)
            .map(|(d, c)| format!("{c} nodes of degree {d}"))
            .collect();
        println!("degrees: {}", degs.join(", "));
        println!("psi = {:.12}, spectral gap = {:.12}", weights.psi(), 1.0 - weights.psi());
        println!("contraction ||W^t - P||  vs  psi^t:");
        for (idx, norm) in norms.iter().enumerate() {
            let t = idx + 1;
            println!("  t={t:<3} {:.6e}  <=  {:.6e}", norm, weights.psi().powi(t as i32) + 1e-10);
        }
    }
    ExitCode::SUCCESS
}

// ---------------------------------------------------------------------------
// partition-stats
// ---------------------------------------------------------------------------

fn cmd_partition_stats(config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let Some(cfg) = load_config(config, seed, None) else {
        return ExitCode::from(EXIT_CONFIG_ERROR);
    };
    // Mirror the simulator's seed derivation so stats match actual runs.
    let data_seed = dfedsim_core::seed::mix(&[cfg.seed, 0x6461_7461]);
    let part_seed = dfedsim_core::seed::mix(&[cfg.seed, 0x7061_7274]);
    let train = match &cfg.dataset {
        DatasetSpec::Synthetic { n, dim, classes, class_sep, .. } => {
            match gen_synthetic_classification(*n, *dim, *classes, *class_sep, data_seed) {
                Ok(d) => d,
                Err(e) => {
                    eprintln!("cannot generate dataset: {e}");
                    return ExitCode::from(EXIT_CONFIG_ERROR);
                }
            }
        }
        DatasetSpec::Idx { images, labels, .. } => match load_idx(images, labels) {
            Ok(d) => d,
            Err(e) => {
                eprintln!("cannot load IDX data: {e}");
                return ExitCode::from(EXIT_CONFIG_ERROR);
            }
        },
        DatasetSpec::Quadratic { .. } => {
            eprintln!("partition-stats needs labeled data; `dataset = quadratic` has none");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };
    let partition = match cfg.partition {
        PartitionSpec::Iid => iid_partition(train.len(), cfg.num_clients, part_seed),
        PartitionSpec::Dirichlet { alpha } => dirichlet_partition(
            train.labels(),
            cfg.num_clients,
            alpha,
            cfg.min_shard_size,
            part_seed,
        ),
    };
    let partition = match partition {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot partition: {e}");
            return ExitCode::from(EXIT_CONFIG_ERROR);
        }
    };

    let hists = partition.class_histograms(&train);
    let classes = train.num_classes();
    let mut csv = String::from("shard_id,size");
    for c in 0..classes {
        csv.push_str(&format!(",class_{c}"));
    }
    csv.push('\n');
    for (i, (shard, hist)) in partition.shards.iter().zip(&hists).enumerate() {
        csv.push_str(&format!("{i},{}", shard.len()));
        for c in 0..classes {
            csv.push_str(&format!(",{}", hist[c]));
        }
        csv.push('\n');
    }

    match out {
        Some(path) => {
            if let Err(e) = std::fs::write(&path, csv) {
                eprintln!("cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_CONFIG_ERROR);
            }
        }
        None => print!("{csv}"),
    }
    ExitCode::SUCCESS
}
