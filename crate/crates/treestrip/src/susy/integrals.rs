//! Analytic Gaussian integration of polynomial × Gaussian integrands.
//!
//! Every integral in the verification engine has the form
//!
//! ```text
//! ∫_{ℝ^{m×2n}}  p(φφᵀ) · e^{−Tr(φφᵀ B)} · [ e^{i φ·φ'} ]  d^{2mn}φ ,
//! ```
//!
//! with `Re B ≻ 0` and an optional Fourier factor (`φ·φ' = Tr(φᵀφ')`). With
//! `x = vec(φ)` the quadratic form is block diagonal (one `B` block per
//! column), so after completing the square the integral is a Gaussian moment
//! problem:
//!
//! ```text
//! ∫ = π^{mn}/det(B)^n · e^{−¼ Tr(φ'ᵀ B⁻¹ φ')} · E[ p̃(X) ] ,
//! ```
//!
//! where `p̃` is `p(φφᵀ)` expanded into coordinates, `X` is Gaussian with
//! (complex) mean `μ = (i/2) B⁻¹ φ'` columnwise and covariance
//! `Σ = ½ B⁻¹ ⊗ 1`, and the moments are evaluated by the memoized recursion
//!
//! ```text
//! E[x_i x^β] = μ_i E[x^β] + Σ_j β_j Σ_{ij} E[x^{β−e_j}]
//! ```
//!
//! (integration by parts). No quadrature is involved anywhere; the only
//! error source is f64 roundoff. Since the column count `2n` is even,
//! `det(B)^n` carries no square-root branch ambiguity.

use super::gpfunction::{slot_count, slot_pairs, GpFunction};
use super::poly::SparsePoly;
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use std::collections::HashMap;

/// Memoized moment table of a (complex-mean) Gaussian vector.
pub struct GaussianMoments {
    mean: Vec<Complex64>,
    cov: DMatrix<Complex64>,
    memo: HashMap<Vec<u8>, Complex64>,
}

impl GaussianMoments {
    /// Creates a moment table for dimension `mean.len()`; `cov` must be the
    /// (symmetric) covariance matrix of the same dimension.
    pub fn new(mean: Vec<Complex64>, cov: DMatrix<Complex64>) -> Self {
        assert_eq!(cov.nrows(), mean.len());
        assert_eq!(cov.ncols(), mean.len());
        GaussianMoments {
            mean,
            cov,
            memo: HashMap::new(),
        }
    }

    /// The mixed moment `E[∏_i x_i^{α_i}]`.
    pub fn moment(&mut self, alpha: &[u8]) -> Complex64 {
        if alpha.iter().all(|&a| a == 0) {
            return Complex64::new(1.0, 0.0);
        }
        if let Some(&v) = self.memo.get(alpha) {
            return v;
        }
        let i = alpha.iter().position(|&a| a > 0).unwrap();
        let mut beta = alpha.to_vec();
        beta[i] -= 1;
        let mut acc = self.mean[i] * self.moment(&beta);
        for j in 0..beta.len() {
            if beta[j] == 0 {
                continue;
            }
            let mut gamma = beta.clone();
            gamma[j] -= 1;
            acc += f64::from(beta[j]) * self.cov[(i, j)] * self.moment(&gamma);
        }
        self.memo.insert(alpha.to_vec(), acc);
        acc
    }
}

/// Flat coordinate index of entry `(j, c)` of an `m × 2n` matrix
/// (column-major).
fn coord(m: usize, j: usize, c: usize) -> usize {
    c * m + j
}

/// Expands a polynomial in the entries of the symmetric matrix `M` into a
/// polynomial in the coordinates of `φ` under `M_{jk} = Σ_c φ_{jc} φ_{kc}`.
pub fn expand_to_coordinates(p: &SparsePoly, m: usize, two_n: usize) -> SparsePoly {
    assert_eq!(p.nvars(), slot_count(m), "slot variable count mismatch");
    let d = m * two_n;
    // The quadratic image of each slot variable.
    let pairs = slot_pairs(m);
    let quadratics: Vec<SparsePoly> = pairs
        .iter()
        .map(|&(j, k)| {
            let mut q = SparsePoly::zero(d);
            for c in 0..two_n {
                let mut expts = vec![0u8; d];
                let (cj, ck) = (coord(m, j, c), coord(m, k, c));
                expts[cj] += 1;
                expts[ck] += 1;
                q.add_term(expts, Complex64::new(1.0, 0.0));
            }
            q
        })
        .collect();

    let mut out = SparsePoly::zero(d);
    for (expts, &coeff) in p.terms() {
        let mut mono = SparsePoly::constant(d, coeff);
        for (slot, &e) in expts.iter().enumerate() {
            for _ in 0..e {
                mono = mono.mul(&quadratics[slot]);
            }
        }
        out = out.add(&mono);
    }
    out
}

/// Analytic value of
/// `∫ p(φφᵀ) e^{−Tr(φφᵀB)} [e^{iφ·φ'}] d^{m·two_n}φ`
/// for a complex symmetric `B` with `Re B ≻ 0` (not re-validated here) and an
/// optional real `m × two_n` Fourier point `φ'`. `two_n` must be even.
pub fn matrix_gaussian_integral(
    p: &SparsePoly,
    b: &DMatrix<Complex64>,
    phi_prime: Option<&DMatrix<f64>>,
    two_n: usize,
) -> Result<Complex64> {
    let m = b.nrows();
    assert_eq!(b.ncols(), m, "exponent matrix must be square");
    assert_eq!(p.nvars(), slot_count(m), "slot variable count mismatch");
    assert!(two_n % 2 == 0, "the column count 2n must be even");
    if let Some(pp) = phi_prime {
        assert_eq!(pp.nrows(), m, "Fourier point row count");
        assert_eq!(pp.ncols(), two_n, "Fourier point column count");
    }
    let n = two_n / 2;
    let d = m * two_n;

    let lu = nalgebra::linalg::LU::new(b.clone());
    let det_b = lu.determinant();
    let b_inv = lu
        .try_inverse()
        .ok_or_else(|| Error::Singular {
            context: "Gaussian exponent matrix".into(),
        })?;
    // B is symmetric, so B⁻¹ is too; symmetrize away roundoff asymmetry.
    let b_inv = (&b_inv + b_inv.transpose()) * Complex64::new(0.5, 0.0);

    // Covariance ½ B⁻¹ per column block; complex mean (i/2) B⁻¹ φ'.
    let mut cov = DMatrix::<Complex64>::zeros(d, d);
    for c in 0..two_n {
        for j in 0..m {
            for k in 0..m {
                cov[(coord(m, j, c), coord(m, k, c))] = 0.5 * b_inv[(j, k)];
            }
        }
    }
    let mut mean = vec![Complex64::new(0.0, 0.0); d];
    let mut shift = Complex64::new(1.0, 0.0);
    if let Some(pp) = phi_prime {
        let half_i = Complex64::new(0.0, 0.5);
        let mut quad = Complex64::new(0.0, 0.0);
        for c in 0..two_n {
            for j in 0..m {
                let mut dot = Complex64::new(0.0, 0.0);
                for k in 0..m {
                    dot += b_inv[(j, k)] * pp[(k, c)];
                }
                mean[coord(m, j, c)] = half_i * dot;
                quad += pp[(j, c)] * dot;
            }
        }
        shift = (-0.25 * quad).exp();
    }

    let coords = expand_to_coordinates(p, m, two_n);
    let mut moments = GaussianMoments::new(mean, cov);
    let mut expectation = Complex64::new(0.0, 0.0);
    for (alpha, &coeff) in coords.terms() {
        expectation += coeff * moments.moment(alpha);
    }

    let z = Complex64::new(std::f64::consts::PI.powi((m * n) as i32), 0.0)
        / det_b.powi(n as i32);
    Ok(z * shift * expectation)
}

/// Integrates a Gaussian-polynomial function term by term:
/// `∫ f(φφᵀ) [e^{iφ·φ'}] d^{m·two_n}φ`.
pub fn integrate_gp(
    f: &GpFunction,
    phi_prime: Option<&DMatrix<f64>>,
    two_n: usize,
) -> Result<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    for term in f.terms() {
        acc += matrix_gaussian_integral(&term.poly, &term.b, phi_prime, two_n)?;
    }
    Ok(acc)
}
