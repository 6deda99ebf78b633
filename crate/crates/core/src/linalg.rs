//! Dense helpers for the small square matrices used by affine operators.
//!
//! Matrices are row-major `Vec<Vec<f64>>`, matching their JSON form.

use rand::Rng;
use rand_distr::StandardNormal;

pub type Matrix = Vec<Vec<f64>>;

pub fn identity(d: usize) -> Matrix {
    (0..d)
        .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

pub fn scaled(m: &Matrix, factor: f64) -> Matrix {
    m.iter()
        .map(|row| row.iter().map(|x| x * factor).collect())
        .collect()
}

pub fn mat_vec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// `mᵀ x`
pub fn mat_t_vec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    let cols = m.first().map_or(0, Vec::len);
    let mut out = vec![0.0; cols];
    for (row, xi) in m.iter().zip(x) {
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * xi;
        }
    }
    out
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|row| {
            (0..cols)
                .map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = norm(x);
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Largest singular value and its right singular vector, by power iteration
/// on `mᵀm`.
///
/// Iterates until the singular value estimate stabilises to a relative
/// 1e-15 or `max_iter` is reached. Returns `(0, e₀)` for the zero matrix.
pub fn top_singular(m: &Matrix, max_iter: usize) -> (f64, Vec<f64>) {
    let cols = m.first().map_or(0, Vec::len);
    if cols == 0 {
        return (0.0, Vec::new());
    }
    // Deterministic start with all components present.
    let mut v: Vec<f64> = (0..cols).map(|i| 1.0 + 0.1 * i as f64).collect();
    normalize(&mut v);
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let mv = mat_vec(m, &v);
        let mut w = mat_t_vec(m, &mv);
        if normalize(&mut w) == 0.0 {
            // Start vector in the null space; fall back to a basis sweep.
            return basis_sweep(m);
        }
        v = w;
        let next = norm(&mat_vec(m, &v));
        let settled = (next - sigma).abs() <= 1e-15 * next.max(1.0);
        sigma = next;
        if settled {
            break;
        }
    }
    (sigma, v)
}

fn basis_sweep(m: &Matrix) -> (f64, Vec<f64>) {
    let cols = m.first().map_or(0, Vec::len);
    let mut best = (0.0, {
        let mut e = vec![0.0; cols];
        e[0] = 1.0;
        e
    });
    for j in 0..cols {
        let mut e = vec![0.0; cols];
        e[j] = 1.0;
        let s = norm(&mat_vec(m, &e));
        if s > best.0 {
            best = (s, e);
        }
    }
    best
}

/// Spectral (operator 2-) norm.
pub fn spectral_norm(m: &Matrix) -> f64 {
    top_singular(m, 10_000).0
}

/// Haar-ish random orthogonal matrix: Gram-Schmidt on a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    let mut rows: Matrix = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for r in &rows {
                let dot: f64 = r.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(r).for_each(|(x, a)| *x -= dot * a);
            }
        }
        if normalize(&mut v) > 1e-8 {
            rows.push(v);
        }
    }
    rows
}
