//! Experiment configuration files: flat `key = value` lines, `#` comments.
//!
//! Unknown keys are rejected by name, every value is type- and
//! range-checked before any computation, and omitted keys fall back to the
//! documented defaults (100 clients, random topology with 10 neighbors,
//! eta_l 0.1 decayed by 0.998, lambda 0.1, rho 0.1, K 5, batch 128).
//! The README lists every key.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::dfedadmm::AdmmHyper;
use crate::simulator::{
    AlgorithmKind, DatasetSpec, ExperimentConfig, ModelSpec, PartitionSpec, TimeVarying,
};
use crate::topology::TopologyKind;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum ConfigError {
    Io { path: String, source: std::io::Error },
    /// A non-comment line without `key = value` shape.
    Syntax { line: usize, content: String },
    UnknownKey { key: String, line: usize },
    BadValue { key: String, value: String, expected: &'static str, line: usize },
    /// A value parsed but violates a range or consistency constraint.
    Constraint { key: String, message: String },
    /// A key required by another setting is absent.
    MissingKey { key: &'static str, needed_for: &'static str },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io { path, source } => write!(f, "cannot read config {path}: {source}"),
            Self::Syntax { line, content } => {
                write!(f, "line {line}: expected `key = value`, got `{content}`")
            }
            Self::UnknownKey { key, line } => write!(f, "line {line}: unknown key `{key}`"),
            Self::BadValue { key, value, expected, line } => {
                write!(f, "line {line}: key `{key}`: cannot parse `{value}` as {expected}")
            }
            Self::Constraint { key, message } => write!(f, "key `{key}`: {message}"),
            Self::MissingKey { key, needed_for } => {
                write!(f, "key `{key}` is required for {needed_for}")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct RawEntry {
    value: String,
    line: usize,
    consumed: bool,
}

struct RawConfig {
    entries: Vec<(String, RawEntry)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = Vec::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let Some(eq) = content.find('=') else {
                return Err(ConfigError::Syntax { line, content: content.to_string() });
            };
            let key = content[..eq].trim().to_string();
            let value = content[eq + 1..].trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(ConfigError::Syntax { line, content: content.to_string() });
            }
            entries.push((key, RawEntry { value, line, consumed: false }));
        }
        Ok(Self { entries })
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        for (k, e) in self.entries.iter_mut() {
            if k == key && !e.consumed {
                e.consumed = true;
                return Some((e.value.clone(), e.line));
            }
        }
        None
    }

    fn reject_leftovers(&self) -> Result<(), ConfigError> {
        for (k, e) in &self.entries {
            if !e.consumed {
                return Err(ConfigError::UnknownKey { key: k.clone(), line: e.line });
            }
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(
    raw: Option<(String, usize)>,
    key: &str,
    expected: &'static str,
    default: T,
) -> Result<T, ConfigError> {
    match raw {
        None => Ok(default),
        Some((value, line)) => value.parse::<T>().map_err(|_| ConfigError::BadValue {
            key: key.to_string(),
            value,
            expected,
            line,
        }),
    }
}

fn constraint(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Constraint { key: key.to_string(), message: message.into() }
}

/// Parse and validate a config file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

/// Parse and validate config text (the file body).
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut raw = RawConfig::parse(text)?;

    let algorithm = match raw.take("algorithm") {
        None => AlgorithmKind::DfedAdmm,
        Some((v, line)) => match v.as_str() {
            "dfedadmm" => AlgorithmKind::DfedAdmm,
            "dfedadmm_sam" => AlgorithmKind::DfedAdmmSam,
            "dpsgd" => AlgorithmKind::Dpsgd,
            "dfedavg" => AlgorithmKind::DfedAvg,
            "dfedavgm" => AlgorithmKind::DfedAvgM,
            "dfedsam" => AlgorithmKind::DfedSam,
            _ => {
                return Err(ConfigError::BadValue {
                    key: "algorithm".into(),
                    value: v,
                    expected: "dfedadmm|dfedadmm_sam|dpsgd|dfedavg|dfedavgm|dfedsam",
                    line,
                })
            }
        },
    };

    let l2 = parse_num(raw.take("l2"), "l2", "non-negative float", 0.0f64)?;
    if l2 < 0.0 {
        return Err(constraint("l2", "must be >= 0"));
    }
    let hidden = parse_num(raw.take("hidden"), "hidden", "positive integer", 32usize)?;
    if hidden == 0 {
        return Err(constraint("hidden", "must be >= 1"));
    }
    let model = match raw.take("model") {
        None => ModelSpec::Logistic { l2 },
        Some((v, line)) => match v.as_str() {
            "quadratic" => ModelSpec::Quadratic,
            "logistic" => ModelSpec::Logistic { l2 },
            "mlp" => ModelSpec::Mlp { hidden },
            _ => {
                return Err(ConfigError::BadValue {
                    key: "model".into(),
                    value: v,
                    expected: "quadratic|logistic|mlp",
                    line,
                })
            }
        },
    };

    let n = parse_num(raw.take("n"), "n", "positive integer", 2000usize)?;
    let dim = parse_num(raw.take("d"), "d", "positive integer", 20usize)?;
    let classes = parse_num(raw.take("classes"), "classes", "integer >= 2", 10usize)?;
    let class_sep = parse_num(raw.take("class_sep"), "class_sep", "non-negative float", 1.5f64)?;
    let test_n = parse_num(raw.take("test_n"), "test_n", "non-negative integer", 400usize)?;
    let het = parse_num(raw.take("het"), "het", "non-negative float", 0.0f64)?;
    let n_per_client =
        parse_num(raw.take("n_per_client"), "n_per_client", "positive integer", 50usize)?;
    let images = raw.take("images").map(|(v, _)| PathBuf::from(v));
    let labels = raw.take("labels").map(|(v, _)| PathBuf::from(v));
    let test_images = raw.take("test_images").map(|(v, _)| PathBuf::from(v));
    let test_labels = raw.take("test_labels").map(|(v, _)| PathBuf::from(v));

    let dataset = match raw.take("dataset") {
        None => DatasetSpec::Synthetic { n, dim, classes, class_sep, test_n },
        Some((v, line)) => match v.as_str() {
            "synthetic" => DatasetSpec::Synthetic { n, dim, classes, class_sep, test_n },
            "quadratic" => DatasetSpec::Quadratic { dim, n_per_client, heterogeneity: het },
            "idx" => DatasetSpec::Idx {
                images: images.ok_or(ConfigError::MissingKey {
                    key: "images",
                    needed_for: "dataset = idx",
                })?,
                labels: labels.ok_or(ConfigError::MissingKey {
                    key: "labels",
                    needed_for: "dataset = idx",
                })?,
                test_images,
                test_labels,
            },
            _ => {
                return Err(ConfigError::BadValue {
                    key: "dataset".into(),
                    value: v,
                    expected: "synthetic|quadratic|idx",
                    line,
                })
            }
        },
    };
    if let DatasetSpec::Synthetic { n, classes, .. } = &dataset {
        if *classes < 2 || n < classes {
            return Err(constraint("n", "need n >= classes >= 2 for synthetic data"));
        }
    }

    let alpha = parse_num(raw.take("alpha"), "alpha", "positive float", 0.3f64)?;
    if alpha <= 0.0 {
        return Err(constraint("alpha", "must be > 0"));
    }
    let partition = match raw.take("partition") {
        None => PartitionSpec::Iid,
        Some((v, line)) => match v.as_str() {
            "iid" => PartitionSpec::Iid,
            "dirichlet" => PartitionSpec::Dirichlet { alpha },
            _ => {
                return Err(ConfigError::BadValue {
                    key: "partition".into(),
                    value: v,
                    expected: "iid|dirichlet",
                    line,
                })
            }
        },
    };
    let min_shard_size =
        parse_num(raw.take("min_size"), "min_size", "positive integer", 2usize)?;
    if min_shard_size == 0 {
        return Err(constraint("min_size", "must be >= 1"));
    }

    let k = parse_num(raw.take("k"), "k", "positive integer", 10usize)?;
    let topology = match raw.take("topology") {
        None => TopologyKind::Random { k },
        Some((v, line)) => match v.as_str() {
            "ring" => TopologyKind::Ring,
            "grid" => TopologyKind::Grid,
            "exponential" => TopologyKind::Exponential,
            "full" => TopologyKind::Full,
            "random" => TopologyKind::Random { k },
            _ => {
                return Err(ConfigError::BadValue {
                    key: "topology".into(),
                    value: v,
                    expected: "ring|grid|exponential|full|random",
                    line,
                })
            }
        },
    };
    let time_varying = match raw.take("time_varying") {
        None => TimeVarying::Auto,
        Some((v, line)) => match v.as_str() {
            "auto" => TimeVarying::Auto,
            "on" => TimeVarying::On,
            "off" => TimeVarying::Off,
            _ => {
                return Err(ConfigError::BadValue {
                    key: "time_varying".into(),
                    value: v,
                    expected: "auto|on|off",
                    line,
                })
            }
        },
    };

    let eta_l = parse_num(raw.take("eta_l"), "eta_l", "positive float", 0.1f64)?;
    if eta_l <= 0.0 {
        return Err(constraint("eta_l", "must be > 0"));
    }
    let lambda = parse_num(raw.take("lambda"), "lambda", "positive float", 0.1f64)?;
    if lambda <= 0.0 {
        return Err(constraint("lambda", "must be > 0"));
    }
    let rho = parse_num(raw.take("rho"), "rho", "non-negative float", 0.1f64)?;
    if rho < 0.0 {
        return Err(constraint("rho", "must be >= 0"));
    }
    let local_steps = parse_num(raw.take("k_local"), "k_local", "positive integer", 5usize)?;
    if local_steps == 0 {
        return Err(constraint("k_local", "must be >= 1"));
    }
    let decay = parse_num(raw.take("decay"), "decay", "float in (0, 1]", 0.998f64)?;
    if decay <= 0.0 || decay > 1.0 {
        return Err(constraint("decay", "must be in (0, 1]"));
    }
    let momentum = parse_num(raw.take("momentum"), "momentum", "float in [0, 1)", 0.9f64)?;
    if !(0.0..1.0).contains(&momentum) {
        return Err(constraint("momentum", "must be in [0, 1)"));
    }
    let batch_size =
        parse_num(raw.take("batch_size"), "batch_size", "integer (0 = full batch)", 128usize)?;
    let heterogeneous_init = match raw.take("init") {
        None => false,
        Some((v, line)) => match v.as_str() {
            "shared" => false,
            "per_client" => true,
            _ => {
                return Err(ConfigError::BadValue {
                    key: "init".into(),
                    value: v,
                    expected: "shared|per_client",
                    line,
                })
            }
        },
    };
    let rounds = parse_num(raw.take("rounds"), "rounds", "positive integer", 300usize)?;
    if rounds == 0 {
        return Err(constraint("rounds", "must be >= 1"));
    }
    let num_clients = parse_num(raw.take("m"), "m", "integer >= 2", 100usize)?;
    if num_clients < 2 {
        return Err(constraint("m", "must be >= 2"));
    }
    let seed = parse_num(raw.take("seed"), "seed", "u64", 42u64)?;
    let eval_every = parse_num(raw.take("eval_every"), "eval_every", "positive integer", 1usize)?;
    if eval_every == 0 {
        return Err(constraint("eval_every", "must be >= 1"));
    }
    let threads = parse_num(raw.take("threads"), "threads", "positive integer", 1usize)?;
    if threads == 0 {
        return Err(constraint("threads", "must be >= 1"));
    }
    let out = raw.take("out").map(|(v, _)| PathBuf::from(v));

    if let TopologyKind::Random { k } = topology {
        if k == 0 || k >= num_clients {
            return Err(constraint("k", format!("need 1 <= k < m, got k={k}, m={num_clients}")));
        }
    }
    let quadratic_data = matches!(dataset, DatasetSpec::Quadratic { .. });
    let quadratic_model = matches!(model, ModelSpec::Quadratic);
    if quadratic_data != quadratic_model {
        return Err(constraint(
            "model",
            "`dataset = quadratic` pairs with `model = quadratic` and labeled datasets \
             with logistic or mlp",
        ));
    }

    raw.reject_leftovers()?;

    Ok(ExperimentConfig {
        algorithm,
        model,
        dataset,
        partition,
        min_shard_size,
        topology,
        time_varying,
        hyper: AdmmHyper { eta_l, lambda, rho, local_steps, decay },
        momentum,
        batch_size,
        heterogeneous_init,
        rounds,
        num_clients,
        seed,
        eval_every,
        threads,
        out,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_all_defaults() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg.algorithm, AlgorithmKind::DfedAdmm);
        assert_eq!(cfg.hyper.eta_l, 0.1);
        assert_eq!(cfg.hyper.lambda, 0.1);
        assert_eq!(cfg.hyper.rho, 0.1);
        assert_eq!(cfg.hyper.local_steps, 5);
        assert_eq!(cfg.hyper.decay, 0.998);
        assert_eq!(cfg.momentum, 0.9);
        assert_eq!(cfg.batch_size, 128);
        assert_eq!(cfg.num_clients, 100);
        assert_eq!(cfg.topology, TopologyKind::Random { k: 10 });
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = parse_config_str("# a comment\n\nm = 32   # trailing comment\n").unwrap();
        assert_eq!(cfg.num_clients, 32);
    }

    #[test]
    fn default_neighbor_budget_needs_enough_clients() {
        // Defaults pair the random topology with k = 10, so a small m must
        // set k or pick a deterministic topology.
        let err = parse_config_str("m = 8\n").unwrap_err();
        assert!(matches!(err, ConfigError::Constraint { ref key, .. } if key == "k"));
        assert!(parse_config_str("m = 8\nk = 4\n").is_ok());
        assert!(parse_config_str("m = 8\ntopology = ring\n").is_ok());
    }

    #[test]
    fn unknown_key_named() {
        let err = parse_config_str("lamda = 0.1\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { key, line } => {
                assert_eq!(key, "lamda");
                assert_eq!(line, 1);
            }
            other => panic!("expected UnknownKey, got {other}"),
        }
    }

    #[test]
    fn zero_lambda_rejected() {
        let err = parse_config_str("lambda = 0.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Constraint { ref key, .. } if key == "lambda"));
    }

    #[test]
    fn bad_value_reports_key_and_line() {
        let err = parse_config_str("m = sixteen\n").unwrap_err();
        match err {
            ConfigError::BadValue { key, value, line, .. } => {
                assert_eq!(key, "m");
                assert_eq!(value, "sixteen");
                assert_eq!(line, 1);
            }
            other => panic!("expected BadValue, got {other}"),
        }
    }

    #[test]
    fn idx_requires_paths() {
        let err = parse_config_str("dataset = idx\n").unwrap_err();
        assert!(matches!(err, ConfigError::MissingKey { key: "images", .. }));
    }

    #[test]
    fn syntax_error_on_missing_equals() {
        let err = parse_config_str("just words\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 1, .. }));
    }

    #[test]
    fn algorithm_names_round_trip() {
        for name in ["dfedadmm", "dfedadmm_sam", "dpsgd", "dfedavg", "dfedavgm", "dfedsam"] {
            let cfg = parse_config_str(&format!("algorithm = {name}\n")).unwrap();
            assert_eq!(cfg.algorithm.name(), name);
        }
    }

    #[test]
    fn model_and_dataset_must_agree() {
        let err = parse_config_str("dataset = quadratic\nmodel = logistic\n").unwrap_err();
        assert!(matches!(err, ConfigError::Constraint { ref key, .. } if key == "model"));
        let err = parse_config_str("model = quadratic\n").unwrap_err();
        assert!(matches!(err, ConfigError::Constraint { ref key, .. } if key == "model"));
        assert!(parse_config_str("dataset = quadratic\nmodel = quadratic\n").is_ok());
    }

    #[test]
    fn random_k_must_fit_m() {
        let err = parse_config_str("topology = random\nk = 16\nm = 16\n").unwrap_err();
        assert!(matches!(err, ConfigError::Constraint { ref key, .. } if key == "k"));
    }

    #[test]
    fn full_experiment_snippet() {
        let text = "\
algorithm = dfedadmm_sam
model = mlp
hidden = 16
dataset = synthetic
n = 500
d = 8
classes = 4
partition = dirichlet
alpha = 0.3
topology = grid
rounds = 20
m = 9
seed = 7
batch_size = 0
";
        let cfg = parse_config_str(text).unwrap();
        assert_eq!(cfg.algorithm, AlgorithmKind::DfedAdmmSam);
        assert_eq!(cfg.model, ModelSpec::Mlp { hidden: 16 });
        assert!(matches!(cfg.partition, PartitionSpec::Dirichlet { alpha } if alpha == 0.3));
        assert_eq!(cfg.topology, TopologyKind::Grid);
        assert_eq!(cfg.batch_size, 0);
    }
}
