//! Datasets, client partitions, and minibatch sampling.
//!
//! Two dataset families cover the simulator's needs: Gaussian-blob
//! classification tasks (with optional MNIST ingestion in IDX format) and
//! per-client least-squares problems whose exact minimizers make convergence
//! checks noise-free. Non-IID splits sample per-class client proportions
//! from a Dirichlet distribution; smaller `alpha` means more label skew.
//!
//! Every generator is a pure function of its seed.

use std::fmt;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::linalg;
use crate::seed;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub enum DataError {
    /// Size preconditions violated (n, d, C, m, ...).
    InvalidSizes { what: String },
    /// Dirichlet resampling could not satisfy the per-shard floor.
    PartitionRetriesExhausted { retries: usize, min_size: usize },
    /// Sampling from an empty shard.
    EmptyShard,
    /// IDX magic number mismatch.
    IdxBadMagic { path: String, expected: u32, found: u32 },
    /// IDX file shorter than its header promises.
    IdxTruncated { path: String, expected_bytes: usize, found_bytes: usize },
    /// Image and label counts disagree.
    IdxCountMismatch { images: usize, labels: usize },
    Io(std::io::Error),
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidSizes { what } => write!(f, "invalid sizes: {what}"),
            Self::PartitionRetriesExhausted { retries, min_size } => write!(
                f,
                "no partition with min shard size {min_size} found in {retries} draws \
                 (alpha too small?)"
            ),
            Self::EmptyShard => write!(f, "cannot sample from an empty shard"),
            Self::IdxBadMagic { path, expected, found } => {
                write!(f, "{path}: bad IDX magic {found:#010x}, expected {expected:#010x}")
            }
            Self::IdxTruncated { path, expected_bytes, found_bytes } => {
                write!(f, "{path}: truncated, expected {expected_bytes} bytes, found {found_bytes}")
            }
            Self::IdxCountMismatch { images, labels } => {
                write!(f, "IDX count mismatch: {images} images vs {labels} labels")
            }
            Self::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for DataError {}

impl From<std::io::Error> for DataError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Flat row-major feature matrix with either class labels or regression
/// targets attached.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Vec<f64>,
    n: usize,
    d: usize,
    /// Class labels in `[0, num_classes)`; empty for regression data.
    labels: Vec<u32>,
    /// Regression targets; empty for classification data.
    targets: Vec<f64>,
    num_classes: usize,
}

impl Dataset {
    pub fn classification(
        features: Vec<f64>,
        n: usize,
        d: usize,
        labels: Vec<u32>,
        num_classes: usize,
    ) -> Result<Self, DataError> {
        if features.len() != n * d || labels.len() != n || num_classes < 2 {
            return Err(DataError::InvalidSizes {
                what: format!(
                    "features {} != n*d {}, labels {} != n {}, or C {} < 2",
                    features.len(),
                    n * d,
                    labels.len(),
                    n,
                    num_classes
                ),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= num_classes) {
            return Err(DataError::InvalidSizes {
                what: format!("label {bad} out of range [0, {num_classes})"),
            });
        }
        Ok(Self { features, n, d, labels, targets: Vec::new(), num_classes })
    }

    pub fn regression(features: Vec<f64>, n: usize, d: usize, targets: Vec<f64>) -> Result<Self, DataError> {
        if features.len() != n * d || targets.len() != n {
            return Err(DataError::InvalidSizes {
                what: format!("features {} != n*d {} or targets {} != n {}", features.len(), n * d, targets.len(), n),
            });
        }
        Ok(Self { features, n, d, labels: Vec::new(), targets, num_classes: 0 })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_classification(&self) -> bool {
        self.num_classes > 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

/// Gaussian blobs with one center per class and unit noise.
///
/// Centers are standard normal draws scaled by `class_sep`, so `class_sep=0`
/// collapses every class onto the same distribution. Labels are assigned
/// round-robin, keeping counts balanced within one.
pub fn gen_synthetic_classification(
    n: usize,
    d: usize,
    num_classes: usize,
    class_sep: f64,
    seed: u64,
) -> Result<Dataset, DataError> {
    if num_classes < 2 || n < num_classes || d < 1 {
        return Err(DataError::InvalidSizes {
            what: format!("need n >= C >= 2 and d >= 1, got n={n}, C={num_classes}, d={d}"),
        });
    }
    let mut rng = seed::stream(seed::mix(&[seed, 0x626c_6f62]));
    let mut centers = vec![0.0; num_classes * d];
    for c in centers.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *c = class_sep * z;
    }
    let mut features = vec![0.0; n * d];
    let mut labels = vec![0u32; n];
    for i in 0..n {
        let class = i % num_classes;
        labels[i] = class as u32;
        for j in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            features[i * d + j] = centers[class * d + j] + z;
        }
    }
    Dataset::classification(features, n, d, labels, num_classes)
}

/// Per-client least-squares problems `½‖A_i x - b_i‖²/n_i` sharing a
/// generating solution; `heterogeneity = 0` gives a common minimizer.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub dim: usize,
    /// One regression dataset per client (rows of `A_i` with targets `b_i`).
    pub clients: Vec<Dataset>,
    /// The shared solution used to generate targets; with zero heterogeneity
    /// it is the exact minimizer of the averaged loss.
    pub x_star: Vec<f64>,
}

/// `b_i = A_i (x* + heterogeneity * u_i)` with unit perturbations `u_i`.
pub fn gen_quadratic(
    m: usize,
    d: usize,
    n_per_client: usize,
    heterogeneity: f64,
    seed: u64,
) -> Result<QuadraticProblem, DataError> {
    if m < 1 || d < 1 || n_per_client < 1 {
        return Err(DataError::InvalidSizes {
            what: format!("need m, d, n_i >= 1, got m={m}, d={d}, n_i={n_per_client}"),
        });
    }
    let mut rng = seed::stream(seed::mix(&[seed, 0x7175_6164]));
    let mut x_star = vec![0.0; d];
    for v in x_star.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
    let mut clients = Vec::with_capacity(m);
    for _ in 0..m {
        let mut u = vec![0.0; d];
        for v in u.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let nu = linalg::norm(&u).max(1e-30);
        for v in u.iter_mut() {
            *v /= nu;
        }
        let target_x: Vec<f64> = x_star
            .iter()
            .zip(&u)
            .map(|(x, ui)| x + heterogeneity * ui)
            .collect();
        let mut a = vec![0.0; n_per_client * d];
        for v in a.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let b: Vec<f64> = (0..n_per_client)
            .map(|r| linalg::dot(&a[r * d..(r + 1) * d], &target_x))
            .collect();
        clients.push(Dataset::regression(a, n_per_client, d, b)?);
    }
    Ok(QuadraticProblem { dim: d, clients, x_star })
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

/// How indices were assigned to clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionKind {
    Iid,
    Dirichlet { alpha: f64 },
}

/// Disjoint, exhaustive index shards over a dataset.
#[derive(Debug, Clone)]
pub struct Partition {
    pub kind: PartitionKind,
    pub shards: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }

    /// Per-shard class histogram; rows are shards, columns are classes.
    pub fn class_histograms(&self, data: &Dataset) -> Vec<Vec<usize>> {
        let c = data.num_classes().max(1);
        self.shards
            .iter()
            .map(|shard| {
                let mut hist = vec![0usize; c];
                for &i in shard {
                    if data.is_classification() {
                        hist[data.label(i) as usize] += 1;
                    }
                }
                hist
            })
            .collect()
    }
}

const PARTITION_RETRY_BUDGET: usize = 100;

/// Deal shuffled indices round-robin into `m` shards.
pub fn iid_partition(n: usize, m: usize, seed: u64) -> Result<Partition, DataError> {
    if m < 1 || n < m {
        return Err(DataError::InvalidSizes {
            what: format!("need n >= m >= 1, got n={n}, m={m}"),
        });
    }
    let mut rng = seed::stream(seed::mix(&[seed, 0x6969_6400]));
    let mut idx: Vec<usize> = (0..n).collect();
    shuffle(&mut idx, &mut rng);
    let mut shards = vec![Vec::new(); m];
    for (pos, i) in idx.into_iter().enumerate() {
        shards[pos % m].push(i);
    }
    Ok(Partition { kind: PartitionKind::Iid, shards })
}

/// For each class, split its indices by proportions drawn from
/// `Dir(alpha * 1_m)`; resample until every shard has at least `min_size`
/// points. Proportions come from normalized Gamma(alpha, 1) draws.
pub fn dirichlet_partition(
    labels: &[u32],
    m: usize,
    alpha: f64,
    min_size: usize,
    seed: u64,
) -> Result<Partition, DataError> {
    let n = labels.len();
    if m < 1 || alpha <= 0.0 || m * min_size > n {
        return Err(DataError::InvalidSizes {
            what: format!("need m >= 1, alpha > 0, m*min_size <= n; got m={m}, alpha={alpha}, n={n}"),
        });
    }
    let kind = PartitionKind::Dirichlet { alpha };
    if m == 1 {
        return Ok(Partition { kind, shards: vec![(0..n).collect()] });
    }
    let num_classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0 checked above");
    let mut rng = seed::stream(seed::mix(&[seed, 0x6469_7263]));
    for _ in 0..PARTITION_RETRY_BUDGET {
        let mut shards: Vec<Vec<usize>> = vec![Vec::new(); m];
        for class_idx in &by_class {
            if class_idx.is_empty() {
                continue;
            }
            let mut order = class_idx.clone();
            shuffle(&mut order, &mut rng);
            let mut props: Vec<f64> = (0..m).map(|_| gamma.sample(&mut rng)).collect();
            let total: f64 = props.iter().sum();
            if total <= 0.0 || !total.is_finite() {
                // All-zero Gamma draws can happen for tiny alpha; redraw.
                continue;
            }
            for p in props.iter_mut() {
                *p /= total;
            }
            // Cut the shuffled class indices at cumulative-proportion marks.
            let nc = order.len();
            let mut start = 0usize;
            let mut cum = 0.0;
            for (shard_id, p) in props.iter().enumerate() {
                cum += p;
                let end = if shard_id + 1 == m {
                    nc
                } else {
                    ((cum * nc as f64).round() as usize).clamp(start, nc)
                };
                shards[shard_id].extend_from_slice(&order[start..end]);
                start = end;
            }
        }
        if shards.iter().all(|s| s.len() >= min_size) {
            for s in shards.iter_mut() {
                s.sort_unstable();
            }
            return Ok(Partition { kind, shards });
        }
    }
    Err(DataError::PartitionRetriesExhausted {
        retries: PARTITION_RETRY_BUDGET,
        min_size,
    })
}

/// Fisher-Yates with the crate's deterministic streams.
fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

// ---------------------------------------------------------------------------
// Minibatch sampling
// ---------------------------------------------------------------------------

/// Uniform sampling with replacement from a shard. `batch_size` may exceed
/// the shard size; `batch_size = 0` returns the full shard in index order
/// (full-batch mode, consuming no randomness).
pub fn minibatch(
    shard: &[usize],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, DataError> {
    if shard.is_empty() {
        return Err(DataError::EmptyShard);
    }
    if batch_size == 0 {
        return Ok(shard.to_vec());
    }
    Ok((0..batch_size)
        .map(|_| shard[rng.random_range(0..shard.len())])
        .collect())
}

// ---------------------------------------------------------------------------
// IDX ingestion
// ---------------------------------------------------------------------------

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32, DataError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(DataError::IdxTruncated {
            path: path.to_string(),
            expected_bytes: end,
            found_bytes: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]]))
}

/// Load an IDX image/label pair (the MNIST container format). Pixels are
/// scaled to [0,1] by dividing by 255; counts are cross-checked.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let img_bytes = fs::read(images_path)?;
    let lbl_bytes = fs::read(labels_path)?;
    let img_name = images_path.display().to_string();
    let lbl_name = labels_path.display().to_string();

    let magic = read_be_u32(&img_bytes, 0, &img_name)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(DataError::IdxBadMagic { path: img_name, expected: IDX_IMAGES_MAGIC, found: magic });
    }
    let n_img = read_be_u32(&img_bytes, 4, &img_name)? as usize;
    let rows = read_be_u32(&img_bytes, 8, &img_name)? as usize;
    let cols = read_be_u32(&img_bytes, 12, &img_name)? as usize;
    let d = rows * cols;
    let expected = 16 + n_img * d;
    if img_bytes.len() < expected {
        return Err(DataError::IdxTruncated {
            path: img_name,
            expected_bytes: expected,
            found_bytes: img_bytes.len(),
        });
    }

    let magic = read_be_u32(&lbl_bytes, 0, &lbl_name)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(DataError::IdxBadMagic { path: lbl_name, expected: IDX_LABELS_MAGIC, found: magic });
    }
    let n_lbl = read_be_u32(&lbl_bytes, 4, &lbl_name)? as usize;
    let expected = 8 + n_lbl;
    if lbl_bytes.len() < expected {
        return Err(DataError::IdxTruncated {
            path: lbl_name,
            expected_bytes: expected,
            found_bytes: lbl_bytes.len(),
        });
    }
    if n_img != n_lbl {
        return Err(DataError::IdxCountMismatch { images: n_img, labels: n_lbl });
    }

    let features: Vec<f64> = img_bytes[16..16 + n_img * d]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let labels: Vec<u32> = lbl_bytes[8..8 + n_lbl].iter().map(|&b| b as u32).collect();
    Dataset::classification(features, n_img, d, labels, 10)
}

// ---------------------------------------------------------------------------
// FedData — what each client trains on
// ---------------------------------------------------------------------------

/// Client-side view of the training data: either index shards over one
/// shared dataset or one dataset per client.
#[derive(Debug, Clone)]
pub enum FedData {
    Shared { data: Dataset, partition: Partition },
    PerClient { datasets: Vec<Dataset>, full_ranges: Vec<Vec<usize>> },
}

impl FedData {
    pub fn per_client(datasets: Vec<Dataset>) -> Self {
        let full_ranges = datasets.iter().map(|d| (0..d.len()).collect()).collect();
        Self::PerClient { datasets, full_ranges }
    }

    pub fn num_clients(&self) -> usize {
        match self {
            Self::Shared { partition, .. } => partition.num_clients(),
            Self::PerClient { datasets, .. } => datasets.len(),
        }
    }

    /// The dataset and shard indices client `i` trains on.
    pub fn client(&self, i: usize) -> (&Dataset, &[usize]) {
        match self {
            Self::Shared { data, partition } => (data, &partition.shards[i]),
            Self::PerClient { datasets, full_ranges } => (&datasets[i], &full_ranges[i]),
        }
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_deterministic() {
        let a = gen_synthetic_classification(100, 5, 2, 1.0, 7).unwrap();
        let b = gen_synthetic_classification(100, 5, 2, 1.0, 7).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn synthetic_labels_balanced() {
        let data = gen_synthetic_classification(103, 4, 10, 1.0, 1).unwrap();
        let mut counts = vec![0usize; 10];
        for &l in data.labels() {
            counts[l as usize] += 1;
        }
        for c in counts {
            assert!(c == 10 || c == 11, "count {c} outside {{10, 11}}");
        }
    }

    #[test]
    fn synthetic_rejects_bad_sizes() {
        assert!(gen_synthetic_classification(1, 4, 2, 1.0, 0).is_err());
        assert!(gen_synthetic_classification(10, 0, 2, 1.0, 0).is_err());
    }

    #[test]
    fn quadratic_zero_heterogeneity_has_common_minimizer() {
        let p = gen_quadratic(4, 3, 12, 0.0, 3).unwrap();
        // Gradient of the averaged loss at x*: mean over clients of
        // A_i^T (A_i x* - b_i) / n_i, which is exactly zero by construction.
        let mut grad = vec![0.0; p.dim];
        for client in &p.clients {
            for r in 0..client.len() {
                let row = client.row(r);
                let resid = linalg::dot(row, &p.x_star) - client.target(r);
                linalg::axpy(resid / client.len() as f64, row, &mut grad);
            }
        }
        assert!(linalg::norm(&grad) / (p.clients.len() as f64) < 1e-10);
    }

    #[test]
    fn quadratic_same_seed_identical() {
        let a = gen_quadratic(2, 3, 5, 0.5, 9).unwrap();
        let b = gen_quadratic(2, 3, 5, 0.5, 9).unwrap();
        assert_eq!(a.clients[1].features, b.clients[1].features);
        assert_eq!(a.x_star, b.x_star);
    }

    #[test]
    fn quadratic_heterogeneity_separates_minimizers() {
        let p = gen_quadratic(8, 4, 32, 1.0, 17).unwrap();
        // Solve each client's normal equations by Gaussian elimination and
        // check that per-client minimizers differ pairwise.
        let solve = |ds: &Dataset| -> Vec<f64> {
            let d = ds.dim();
            let mut ata = vec![0.0; d * d];
            let mut atb = vec![0.0; d];
            for r in 0..ds.len() {
                let row = ds.row(r);
                for i in 0..d {
                    atb[i] += row[i] * ds.target(r);
                    for j in 0..d {
                        ata[i * d + j] += row[i] * row[j];
                    }
                }
            }
            gauss_solve(&mut ata, &mut atb, d);
            atb
        };
        let sols: Vec<Vec<f64>> = p.clients.iter().map(solve).collect();
        for i in 0..sols.len() {
            for j in (i + 1)..sols.len() {
                let diff = linalg::norm(&linalg::sub(&sols[i], &sols[j]));
                assert!(diff > 0.2, "minimizers {i},{j} too close: {diff}");
            }
        }
    }

    fn gauss_solve(a: &mut [f64], b: &mut [f64], d: usize) {
        for col in 0..d {
            let pivot = (col..d).max_by(|&x, &y| a[x * d + col].abs().partial_cmp(&a[y * d + col].abs()).unwrap()).unwrap();
            for j in 0..d {
                a.swap(col * d + j, pivot * d + j);
            }
            b.swap(col, pivot);
            let diag = a[col * d + col];
            for r in 0..d {
                if r == col {
                    continue;
                }
                let f = a[r * d + col] / diag;
                for j in 0..d {
                    a[r * d + j] -= f * a[col * d + j];
                }
                b[r] -= f * b[col];
            }
        }
        for i in 0..d {
            b[i] /= a[i * d + i];
        }
    }

    #[test]
    fn dirichlet_single_client_takes_all() {
        let labels = vec![0u32, 1, 0, 1, 1];
        let p = dirichlet_partition(&labels, 1, 0.1, 1, 9).unwrap();
        assert_eq!(p.shards[0], vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn dirichlet_shards_disjoint_exhaustive() {
        let data = gen_synthetic_classification(400, 3, 10, 1.0, 2).unwrap();
        let p = dirichlet_partition(data.labels(), 8, 0.3, 2, 5).unwrap();
        let mut seen = vec![false; 400];
        for shard in &p.shards {
            assert!(shard.len() >= 2);
            for &i in shard {
                assert!(!seen[i], "index {i} appears twice");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn dirichlet_huge_alpha_approaches_global_histogram() {
        let data = gen_synthetic_classification(1000, 3, 10, 1.0, 4).unwrap();
        let p = dirichlet_partition(data.labels(), 4, 1e6, 2, 11).unwrap();
        let hists = p.class_histograms(&data);
        for (shard, hist) in p.shards.iter().zip(&hists) {
            let total = shard.len() as f64;
            // Global histogram is uniform (balanced labels): share 1/10 each.
            let tv: f64 = hist
                .iter()
                .map(|&h| (h as f64 / total - 0.1).abs())
                .sum::<f64>()
                / 2.0;
            assert!(tv < 0.05, "total variation {tv} >= 5%");
        }
    }

    #[test]
    fn dirichlet_small_alpha_concentrates() {
        let data = gen_synthetic_classification(2000, 3, 10, 1.0, 6).unwrap();
        let p = dirichlet_partition(data.labels(), 16, 0.3, 2, 13).unwrap();
        let hists = p.class_histograms(&data);
        let max_share = p
            .shards
            .iter()
            .zip(&hists)
            .filter(|(s, _)| !s.is_empty())
            .map(|(s, h)| h.iter().copied().max().unwrap() as f64 / s.len() as f64)
            .fold(0.0f64, f64::max);
        assert!(max_share > 0.5, "max per-shard class share {max_share} <= 0.5");
    }

    #[test]
    fn minibatch_single_element_shard() {
        let mut rng = seed::stream(1);
        let batch = minibatch(&[42], 1, &mut rng).unwrap();
        assert_eq!(batch, vec![42]);
    }

    #[test]
    fn minibatch_deterministic_per_stream() {
        let shard: Vec<usize> = (0..50).collect();
        let a = minibatch(&shard, 16, &mut seed::stream(3)).unwrap();
        let b = minibatch(&shard, 16, &mut seed::stream(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn minibatch_empty_shard_rejected() {
        assert!(matches!(minibatch(&[], 4, &mut seed::stream(0)), Err(DataError::EmptyShard)));
    }

    #[test]
    fn minibatch_frequencies_near_uniform() {
        // 10^4 draws from 10 indices: expected 1000 each, sd = sqrt(n p (1-p)) = 30.
        let shard: Vec<usize> = (0..10).collect();
        let mut rng = seed::stream(77);
        let mut counts = vec![0usize; 10];
        for _ in 0..100 {
            for i in minibatch(&shard, 100, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let mut chi2 = 0.0;
        for &c in &counts {
            assert!((c as f64 - 1000.0).abs() < 150.0, "count {c} beyond 5 sigma");
            chi2 += (c as f64 - 1000.0).powi(2) / 1000.0;
        }
        assert!(chi2 < 27.88, "chi-square {chi2} beyond 0.999 quantile (df=9)");
    }

    #[test]
    fn idx_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let img_path = dir.path().join("images.idx");
        let lbl_path = dir.path().join("labels.idx");

        // 4 images of 28x28, constant bytes so scaling is easy to check.
        let n: u32 = 4;
        let mut img = Vec::new();
        img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        img.extend_from_slice(&n.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&28u32.to_be_bytes());
        img.extend_from_slice(&[255u8; 4 * 784]);
        fs::write(&img_path, &img).unwrap();

        let mut lbl = Vec::new();
        lbl.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        lbl.extend_from_slice(&n.to_be_bytes());
        lbl.extend_from_slice(&[0u8, 3, 7, 9]);
        fs::write(&lbl_path, &lbl).unwrap();

        let data = load_idx(&img_path, &lbl_path).unwrap();
        assert_eq!(data.len(), 4);
        assert_eq!(data.dim(), 784);
        assert_eq!(data.row(0)[0], 1.0); // byte 255 scales to exactly 1.0
        assert_eq!(data.label(3), 9);

        // Count mismatch: rewrite labels claiming 5 entries.
        let mut bad = Vec::new();
        bad.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        bad.extend_from_slice(&5u32.to_be_bytes());
        bad.extend_from_slice(&[0u8, 1, 2, 3, 4]);
        fs::write(&lbl_path, &bad).unwrap();
        assert!(matches!(
            load_idx(&img_path, &lbl_path),
            Err(DataError::IdxCountMismatch { images: 4, labels: 5 })
        ));

        // Bad magic.
        let mut wrong = img.clone();
        wrong[3] = 0x01;
        fs::write(&img_path, &wrong).unwrap();
        assert!(matches!(load_idx(&img_path, &lbl_path), Err(DataError::IdxBadMagic { .. })));

        // Truncated.
        fs::write(&img_path, &img[..100]).unwrap();
        assert!(matches!(load_idx(&img_path, &lbl_path), Err(DataError::IdxTruncated { .. })));
    }
}
