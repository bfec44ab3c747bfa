//! Determinantal point process MAP inference via the fast greedy algorithm:
//! each step adds the item with the largest log-determinant gain, maintained
//! through incremental Cholesky updates.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum DppError {
    /// The kernel lost positive semi-definiteness beyond numerical noise.
    NotPsd { item: usize, d2: f64 },
    Shape(String),
}

impl fmt::Display for DppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DppError::NotPsd { item, d2 } => {
                write!(f, "kernel is not PSD: item {item} has squared gain {d2}")
            }
            DppError::Shape(msg) => write!(f, "shape error: {msg}"),
        }
    }
}

impl std::error::Error for DppError {}

const PSD_TOLERANCE: f64 = 1e-9;
/// Diagonal loading applied to the similarity matrix before forming the
/// kernel, keeping borderline kernels numerically PSD.
pub const DIAGONAL_LOAD: f64 = 1e-6;

/// Greedy MAP selection of up to `k` items under the kernel
/// `L = diag(q) · (S + load·I) · diag(q)`.
///
/// Maintains per-item `d²_i` (the determinant gain of adding `i`) and the
/// Cholesky row extensions `c_i`; selection stops early when no remaining
/// item has positive gain. Ties resolve to the lowest index.
pub fn dpp_greedy(q: &[f64], similarity: &[Vec<f64>], k: usize) -> Result<Vec<usize>, DppError> {
    let n = q.len();
    if similarity.len() != n || similarity.iter().any(|row| row.len() != n) {
        return Err(DppError::Shape(format!(
            "similarity must be {n}×{n} to match {n} quality scores"
        )));
    }
    let kernel = |i: usize, j: usize| {
        let load = if i == j { DIAGONAL_LOAD } else { 0.0 };
        q[i] * (similarity[i][j] + load) * q[j]
    };

    let mut d2: Vec<f64> = (0..n).map(|i| kernel(i, i)).collect();
    let mut c: Vec<Vec<f64>> = vec![Vec::new(); n];
    let mut selected: Vec<usize> = Vec::new();
    let mut active: Vec<bool> = vec![true; n];

    while selected.len() < k.min(n) {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            if d2[i] < -PSD_TOLERANCE {
                return Err(DppError::NotPsd { item: i, d2: d2[i] });
            }
            if best.map_or(true, |b| d2[i] > d2[b]) {
                best = Some(i);
            }
        }
        let j = match best {
            Some(j) if d2[j] > PSD_TOLERANCE => j,
            _ => break, // no item adds positive volume
        };
        let dj = d2[j].sqrt();
        active[j] = false;
        let cj = c[j].clone();
        for i in 0..n {
            if !active[i] {
                continue;
            }
            let dot: f64 = cj.iter().zip(&c[i]).map(|(a, b)| a * b).sum();
            let e = (kernel(j, i) - dot) / dj;
            c[i].push(e);
            d2[i] -= e * e;
        }
        selected.push(j);
    }
    Ok(selected)
}

/// Log-determinant of the kernel restricted to `items` (brute force; test
/// oracle for the incremental updates).
pub fn log_det_subset(q: &[f64], similarity: &[Vec<f64>], items: &[usize]) -> f64 {
    let m = items.len();
    if m == 0 {
        return 0.0;
    }
    let mut a = vec![vec![0.0; m]; m];
    for (r, &i) in items.iter().enumerate() {
        for (cidx, &j) in items.iter().enumerate() {
            let load = if i == j { DIAGONAL_LOAD } else { 0.0 };
            a[r][cidx] = q[i] * (similarity[i][j] + load) * q[j];
        }
    }
    // LU with partial pivoting, accumulating log |det|
    let mut log_det = 0.0;
    let mut sign = 1.0;
    for p in 0..m {
        let mut pivot = p;
        for r in p + 1..m {
            if a[r][p].abs() > a[pivot][p].abs() {
                pivot = r;
            }
        }
        if a[pivot][p] == 0.0 {
            return f64::NEG_INFINITY;
        }
        if pivot != p {
            a.swap(pivot, p);
            sign = -sign;
        }
        log_det += a[p][p].abs().ln();
        if a[p][p] < 0.0 {
            sign = -sign;
        }
        for r in p + 1..m {
            let factor = a[r][p] / a[p][p];
            for cidx in p..m {
                a[r][cidx] -= factor * a[p][cidx];
            }
        }
    }
    if sign < 0.0 {
        f64::NEG_INFINITY
    } else {
        log_det
    }
}
