//! Small dense vector helpers and SVD-backed rank / null-space queries.

use nalgebra::DMatrix;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scaled(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| alpha * v).collect()
}

/// Row-major matrix times vector.
pub fn mat_vec(rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| dot(r, x)).collect()
}

/// Transposed row-major matrix times vector: `Σ_i y_i · rows[i]`.
pub fn mat_t_vec(rows: &[Vec<f64>], y: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (r, yi) in rows.iter().zip(y) {
        axpy(*yi, r, &mut out);
    }
    out
}

fn to_matrix(rows: &[Vec<f64>], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j])
}

/// Numerical rank with relative singular-value cutoff `rel_tol`.
pub fn rank(rows: &[Vec<f64>], n: usize, rel_tol: f64) -> usize {
    if rows.is_empty() || n == 0 {
        return 0;
    }
    let sv = to_matrix(rows, n).singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax.max(1.0)).count()
}

/// Orthonormal basis of `{x : rows·x = 0}`.
pub fn null_space(rows: &[Vec<f64>], n: usize, rel_tol: f64) -> Vec<Vec<f64>> {
    if n == 0 {
        return Vec::new();
    }
    if rows.is_empty() {
        return (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                e
            })
            .collect();
    }
    // Pad to at least n rows so the full right-singular basis is returned.
    let m = rows.len().max(n);
    let mut padded = rows.to_vec();
    padded.resize(m, vec![0.0; n]);
    let svd = to_matrix(&padded, n).svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = rel_tol * smax.max(1.0);
    (0..n)
        .filter(|&k| svd.singular_values[k] <= cutoff)
        .map(|k| v_t.row(k).iter().cloned().collect())
        .collect()
}

/// Minimum-norm least-squares solution of `rows·x = rhs`.
pub fn min_norm_solve(rows: &[Vec<f64>], n: usize, rhs: &[f64]) -> Option<Vec<f64>> {
    if rows.is_empty() {
        return Some(vec![0.0; n]);
    }
    let a = to_matrix(rows, n);
    let b = nalgebra::DVector::from_column_slice(rhs);
    let svd = a.svd(true, true);
    svd.solve(&b, 1e-12).ok().map(|x| x.iter().cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_and_null_space() {
        let rows = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]];
        assert_eq!(rank(&rows, 3, 1e-10), 1);
        let ns = null_space(&rows, 3, 1e-10);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!(dot(&rows[0], v).abs() < 1e-12);
            assert!((norm(v) - 1.0).abs() < 1e-12);
        }
        assert_eq!(null_space(&[], 2, 1e-10).len(), 2);
        assert_eq!(rank(&[vec![0.0, 0.0]], 2, 1e-10), 0);
    }

    #[test]
    fn min_norm_solution() {
        let rows = vec![vec![0.0, 1.0]];
        let x = min_norm_solve(&rows, 2, &[3.0]).unwrap();
        assert!((x[0]).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12);
    }
}
