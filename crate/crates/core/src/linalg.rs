//! Small dense-vector helpers shared by the optimizer modules.
//!
//! Parameter vectors are plain `Vec<f64>`; these free functions keep the
//! update rules readable without pulling a tensor library into the hot path.

/// `y += a * x`, in place.
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn norm_sq(x: &[f64]) -> f64 {
    dot(x, x)
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn add(x: &[f64], y: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a + b).collect()
}

pub fn scale(a: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Arithmetic mean of `m` equal-length vectors, summed in index order.
pub fn mean_vec(rows: &[Vec<f64>]) -> Vec<f64> {
    assert!(!rows.is_empty(), "mean of zero vectors");
    let d = rows[0].len();
    let mut out = vec![0.0; d];
    for row in rows {
        axpy(1.0, row, &mut out);
    }
    let inv = 1.0 / rows.len() as f64;
    for v in &mut out {
        *v *= inv;
    }
    out
}
