//! Thomas algorithm for tridiagonal systems.
//!
//! Row `i` reads `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`;
//! `lower[0]` and `upper[n-1]` are ignored. No pivoting: callers pass
//! diagonally dominant matrices.

pub fn solve(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rhs.len()];
    let mut scratch = vec![0.0; rhs.len()];
    solve_into(lower, diag, upper, rhs, &mut out, &mut scratch);
    out
}

/// Allocation-free variant; `scratch` holds the modified upper diagonal.
pub fn solve_into(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) {
    let n = rhs.len();
    debug_assert!(lower.len() == n && diag.len() == n && upper.len() == n);
    debug_assert!(out.len() == n && scratch.len() >= n);
    if n == 0 {
        return;
    }
    let mut beta = diag[0];
    scratch[0] = upper[0] / beta;
    out[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * scratch[i - 1];
        scratch[i] = upper[i] / beta;
        out[i] = (rhs[i] - lower[i] * out[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i] * out[i + 1];
    }
}
