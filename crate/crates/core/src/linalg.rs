//! Complex Hermitian helpers and the real symmetric embedding
//! `W ↦ [[Re W, −Im W], [Im W, Re W]]`, under which
//! `tr(W H) = ½⟨emb W, emb H⟩` and `tr W = ½ tr(emb W)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// `h hᴴ`.
pub fn outer(h: &[Complex64]) -> CMatrix {
    let n = h.len();
    CMatrix::from_fn(n, n, |i, j| h[i] * h[j].conj())
}

pub fn embed_hermitian(w: &CMatrix) -> DMatrix<f64> {
    let n = w.nrows();
    let mut x = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for i in 0..n {
            let v = w[(i, j)];
            x[(i, j)] = v.re;
            x[(i + n, j + n)] = v.re;
            x[(i + n, j)] = v.im;
            x[(i, j + n)] = -v.im;
        }
    }
    x
}

/// Inverse of [`embed_hermitian`] that averages the redundant copies, so it
/// also projects an arbitrary symmetric `2n × 2n` matrix onto the embedding.
pub fn recover_hermitian(x: &DMatrix<f64>) -> CMatrix {
    let n = x.nrows() / 2;
    CMatrix::from_fn(n, n, |i, j| {
        let re = 0.5 * (x[(i, j)] + x[(i + n, j + n)]);
        let im = 0.5 * (x[(i + n, j)] - x[(i, j + n)]);
        Complex64::new(re, im)
    })
}

/// Eigenvalues in decreasing order with matching unit eigenvectors.
pub fn hermitian_eigen(w: &CMatrix) -> (Vec<f64>, Vec<DVector<Complex64>>) {
    let sym = (w + w.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = order.iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
    (values, vectors)
}

/// Hermitian square root with negative eigenvalues clipped to zero.
pub fn hermitian_sqrt(w: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen(w);
    let n = w.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (lam, v) in values.iter().zip(&vectors) {
        if *lam > 0.0 {
            out += v * v.adjoint() * Complex64::new(lam.sqrt(), 0.0);
        }
    }
    out
}

/// Checks `W ⪰ −tol·‖W‖·I` and returns the smallest eigenvalue.
pub fn check_psd(w: &CMatrix, tol: f64) -> Result<f64> {
    let (values, _) = hermitian_eigen(w);
    let max = values.first().copied().unwrap_or(0.0).abs();
    let min = values.last().copied().unwrap_or(0.0);
    if min < -tol * max.max(1e-300) && min < -1e-300 {
        return Err(Error::NotPsd(min));
    }
    Ok(min)
}

pub fn trace_re(w: &CMatrix) -> f64 {
    w.diagonal().iter().map(|v| v.re).sum()
}

/// `tr(W H)` for Hermitian `W`, `H` (real part).
pub fn trace_product(w: &CMatrix, h: &CMatrix) -> f64 {
    w.iter().zip(h.transpose().iter()).map(|(a, b)| (a * b).re).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn embedding_preserves_traces() {
        let w = outer(&[c(1.0, 2.0), c(-0.5, 0.3), c(0.0, -1.0)]);
        let h = outer(&[c(0.2, -1.0), c(1.5, 0.0), c(0.7, 0.7)]);
        let (ew, eh) = (embed_hermitian(&w), embed_hermitian(&h));
        assert!((0.5 * ew.dot(&eh) - trace_product(&w, &h)).abs() < 1e-12);
        assert!((0.5 * ew.trace() - trace_re(&w)).abs() < 1e-12);
        assert!((recover_hermitian(&ew) - &w).camax() < 1e-15);
        // spectrum of the embedding is the Hermitian spectrum doubled
        let mut real: Vec<f64> = ew.symmetric_eigenvalues().iter().copied().collect();
        real.sort_by(|a, b| b.total_cmp(a));
        let (herm, _) = hermitian_eigen(&w);
        assert!((real[0] - herm[0]).abs() < 1e-12 && (real[1] - herm[0]).abs() < 1e-12);
    }

    #[test]
    fn sqrt_and_psd_check() {
        let w = outer(&[c(1.0, 1.0), c(2.0, 0.0)]);
        let s = hermitian_sqrt(&w);
        assert!((&s * &s - &w).camax() < 1e-12);
        assert!(check_psd(&w, 1e-9).is_ok());
        let bad = CMatrix::from_diagonal(&DVector::from_vec(vec![c(1.0, 0.0), c(-0.1, 0.0)]));
        assert!(matches!(check_psd(&bad, 1e-9), Err(Error::NotPsd(_))));
    }
}
