//! Gaussian-polynomial functions on symmetric matrices and the determinant
//! derivative operators acting on them.
//!
//! A Gaussian-polynomial function is a finite sum of terms
//!
//! ```text
//! f(M) = Σ_t  p_t(M) · exp(−Tr(M B_t)) ,      M ∈ Sym⁺(m),
//! ```
//!
//! with `p_t` a polynomial in the independent entries `M_{jk}` (`j ≤ k`) and
//! `B_t` a complex symmetric matrix. Integrable terms require `Re B_t ≻ 0`.
//! The class is closed under sums, products, and the matrix derivatives
//! `∂̃_{jk} = ½(1 + δ_{jk}) ∂/∂M_{jk}`, which makes every operation of the
//! verification engine exact (no quadrature anywhere).
//!
//! Derivative conventions for symmetric arguments: `M_{jk}` and `M_{kj}` are
//! the *same* variable, so `∂_{jk} Tr(MB) = (2 − δ_{jk}) B_{jk}` and hence
//! `∂̃_{jk} Tr(MB) = B_{jk}` for every `(j,k)`. The determinant operator of an
//! index pair `(ā, a)` with `ā = {k̄_1 < … < k̄_c}`, `a = {k_1 < … < k_c}` is
//!
//! ```text
//! D_{ā,a} = det [ ∂̃_{k̄_i, k_j} ]_{i,j=1..c} ,      D_{∅,∅} = id ,
//! ```
//!
//! expanded over permutations (the entries commute). Tuples of pairs act by
//! composition, one factor per replica slot.

use super::poly::SparsePoly;
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Number of independent entries of a symmetric `m × m` matrix.
pub fn slot_count(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Flat index of the independent entry `(j, k)` (order irrelevant) of a
/// symmetric `m × m` matrix, enumerating the upper triangle row by row.
pub fn sym_slot(m: usize, j: usize, k: usize) -> usize {
    let (j, k) = if j <= k { (j, k) } else { (k, j) };
    assert!(k < m, "matrix index out of range");
    j * m - j * (j + 1) / 2 + k
}

/// Inverse of [`sym_slot`]: the `(j ≤ k)` pairs in ascending slot order.
pub fn slot_pairs(m: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(slot_count(m));
    for j in 0..m {
        for k in j..m {
            out.push((j, k));
        }
    }
    out
}

/// One Gaussian-polynomial term `p(M) · exp(−Tr(M B))`.
#[derive(Clone, Debug, PartialEq)]
pub struct GpTerm {
    /// Polynomial factor over the `m(m+1)/2` independent entries of `M`.
    pub poly: SparsePoly,
    /// Complex symmetric exponent matrix.
    pub b: DMatrix<Complex64>,
}

/// A finite sum of Gaussian-polynomial terms on `Sym⁺(m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GpFunction {
    m: usize,
    terms: Vec<GpTerm>,
}

/// Symmetrizes a square complex matrix: `(B + Bᵀ)/2`.
///
/// `Tr(MB)` with symmetric `M` only sees the symmetric part of `B`, so all
/// exponent matrices are normalized on entry.
fn symmetrize(b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (b + b.transpose()) * Complex64::new(0.5, 0.0)
}

impl GpFunction {
    /// The zero function on `Sym⁺(m)`.
    pub fn zero(m: usize) -> Self {
        GpFunction { m, terms: vec![] }
    }

    /// The pure Gaussian `exp(−Tr(M B))`; `b` is symmetrized.
    pub fn exponential(m: usize, b: &DMatrix<Complex64>) -> Self {
        Self::poly_exp(m, SparsePoly::constant(slot_count(m), Complex64::new(1.0, 0.0)), b)
    }

    /// The term `p(M) · exp(−Tr(M B))`; `b` is symmetrized.
    pub fn poly_exp(m: usize, poly: SparsePoly, b: &DMatrix<Complex64>) -> Self {
        assert_eq!(poly.nvars(), slot_count(m), "polynomial variable count");
        assert_eq!(b.nrows(), m);
        assert_eq!(b.ncols(), m);
        let mut f = GpFunction { m, terms: vec![] };
        f.push_term(GpTerm {
            poly,
            b: symmetrize(b),
        });
        f
    }

    /// Cross-section dimension `m`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// The stored terms.
    pub fn terms(&self) -> &[GpTerm] {
        &self.terms
    }

    /// Structural zero test (no term with a nonzero polynomial).
    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.poly.is_zero())
    }

    /// Verifies that every term is integrable: `Re B ≻ 0`, checked through the
    /// eigenvalues of the symmetrized real part.
    pub fn validate_integrable(&self) -> Result<()> {
        for term in &self.terms {
            let re = DMatrix::<f64>::from_fn(self.m, self.m, |r, c| {
                0.5 * (term.b[(r, c)].re + term.b[(c, r)].re)
            });
            let eigs = re.symmetric_eigen().eigenvalues;
            let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
            if !(min > 0.0) {
                return Err(Error::Config(format!(
                    "Gaussian exponent is not integrable: min eigenvalue of Re B = {min:.3e}"
                )));
            }
        }
        Ok(())
    }

    /// Adds a term, merging it into an existing term with a bit-identical
    /// exponent matrix when possible (derivatives and scalings preserve `B`
    /// exactly, so merging keeps term counts small).
    fn push_term(&mut self, term: GpTerm) {
        if term.poly.is_zero() {
            return;
        }
        for existing in &mut self.terms {
            if existing.b == term.b {
                existing.poly = existing.poly.add(&term.poly);
                return;
            }
        }
        self.terms.push(term);
    }

    /// Removes terms whose polynomial canceled to zero.
    fn prune(mut self) -> Self {
        self.terms.retain(|t| !t.poly.is_zero());
        self
    }

    /// Pointwise sum.
    pub fn add(&self, other: &GpFunction) -> GpFunction {
        assert_eq!(self.m, other.m, "cross-section dimension mismatch");
        let mut out = self.clone();
        for t in &other.terms {
            out.push_term(t.clone());
        }
        out.prune()
    }

    /// Pointwise product (`B` matrices add, polynomials multiply).
    pub fn mul(&self, other: &GpFunction) -> GpFunction {
        assert_eq!(self.m, other.m, "cross-section dimension mismatch");
        let mut out = GpFunction::zero(self.m);
        for ta in &self.terms {
            for tb in &other.terms {
                out.push_term(GpTerm {
                    poly: ta.poly.mul(&tb.poly),
                    b: &ta.b + &tb.b,
                });
            }
        }
        out.prune()
    }

    /// Scalar multiple.
    pub fn scale(&self, c: Complex64) -> GpFunction {
        let mut out = GpFunction::zero(self.m);
        for t in &self.terms {
            out.push_term(GpTerm {
                poly: t.poly.scale(c),
                b: t.b.clone(),
            });
        }
        out.prune()
    }

    /// Pointwise negation.
    pub fn neg(&self) -> GpFunction {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    /// The symmetrized derivative `∂̃_{jk} = ½(1 + δ_{jk}) ∂_{jk}` applied to
    /// every term:
    ///
    /// ```text
    /// ∂̃_{jk} [p · e^{−Tr(MB)}] = (∂̃_{jk} p − B_{jk} · p) · e^{−Tr(MB)} .
    /// ```
    pub fn partial_tilde(&self, j: usize, k: usize) -> GpFunction {
        assert!(j < self.m && k < self.m, "matrix index out of range");
        let tilde = if j == k { 1.0 } else { 0.5 };
        let slot = sym_slot(self.m, j, k);
        let mut out = GpFunction::zero(self.m);
        for t in &self.terms {
            let dp = t.poly.derivative(slot).scale(Complex64::new(tilde, 0.0));
            let drag = t.poly.scale(-t.b[(j, k)]);
            out.push_term(GpTerm {
                poly: dp.add(&drag),
                b: t.b.clone(),
            });
        }
        out.prune()
    }

    /// Applies the determinant operator of a single index pair.
    pub fn d_block(&self, pair: &IndexPair) -> GpFunction {
        let c = pair.order();
        if c == 0 {
            return self.clone();
        }
        let mut out = GpFunction::zero(self.m);
        for (perm, sign) in permutations_with_signs(c) {
            let mut acc = self.clone();
            for (i, &pi) in perm.iter().enumerate() {
                acc = acc.partial_tilde(pair.bar[i], pair.unbar[pi]);
            }
            out = out.add(&acc.scale(Complex64::new(sign, 0.0)));
        }
        out
    }

    /// Applies the composition of determinant operators of an index-pair
    /// tuple (one factor per replica slot; the factors commute).
    pub fn d_tuple(&self, pairs: &[IndexPair]) -> GpFunction {
        let mut acc = self.clone();
        for pair in pairs {
            acc = acc.d_block(pair);
        }
        acc
    }

    /// Evaluates at a complex symmetric matrix `M`.
    pub fn eval(&self, m_values: &DMatrix<Complex64>) -> Complex64 {
        assert_eq!(m_values.nrows(), self.m);
        assert_eq!(m_values.ncols(), self.m);
        let slots: Vec<Complex64> = slot_pairs(self.m)
            .iter()
            .map(|&(j, k)| m_values[(j, k)])
            .collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for t in &self.terms {
            let mut trace = Complex64::new(0.0, 0.0);
            for j in 0..self.m {
                for k in 0..self.m {
                    trace += m_values[(j, k)] * t.b[(k, j)];
                }
            }
            acc += t.poly.eval(&slots) * (-trace).exp();
        }
        acc
    }

    /// Evaluates at a real symmetric matrix `M`.
    pub fn eval_real(&self, m_values: &DMatrix<f64>) -> Complex64 {
        let complex = DMatrix::<Complex64>::from_fn(self.m, self.m, |r, c| {
            Complex64::new(m_values[(r, c)], 0.0)
        });
        self.eval(&complex)
    }

    /// The value at `M = 0` (sum of polynomial constant terms).
    pub fn at_zero(&self) -> Complex64 {
        self.terms.iter().map(|t| t.poly.constant_term()).sum()
    }

    /// Largest polynomial degree over terms.
    pub fn max_degree(&self) -> usize {
        self.terms
            .iter()
            .map(|t| t.poly.total_degree())
            .max()
            .unwrap_or(0)
    }
}

/// The polynomial `Tr(M B)` as a [`SparsePoly`] over the entry slots of `M`
/// (`b` is symmetrized first).
pub fn trace_poly(m: usize, b: &DMatrix<Complex64>) -> SparsePoly {
    let bs = symmetrize(b);
    let mut p = SparsePoly::zero(slot_count(m));
    for j in 0..m {
        for k in j..m {
            let coeff = if j == k {
                bs[(j, j)]
            } else {
                2.0 * bs[(j, k)]
            };
            let mut expts = vec![0u8; slot_count(m)];
            expts[sym_slot(m, j, k)] = 1;
            p.add_term(expts, coeff);
        }
    }
    p
}

/// An ordered pair `(ā, a)` of equal-cardinality subsets of `{0, …, m−1}`,
/// stored ascending. Cardinality-0 pairs act as the identity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexPair {
    /// Row subset `ā` (ascending).
    pub bar: Vec<usize>,
    /// Column subset `a` (ascending).
    pub unbar: Vec<usize>,
}

impl IndexPair {
    /// Builds a pair, validating cardinality match, ascending order, and
    /// entry bounds.
    pub fn new(bar: Vec<usize>, unbar: Vec<usize>, m: usize) -> Result<Self> {
        if bar.len() != unbar.len() {
            return Err(Error::Config(format!(
                "index pair cardinality mismatch: |ā| = {} vs |a| = {}",
                bar.len(),
                unbar.len()
            )));
        }
        for set in [&bar, &unbar] {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(
                    "index pair subsets must be strictly ascending".into(),
                ));
            }
            if set.iter().any(|&i| i >= m) {
                return Err(Error::Config(format!(
                    "index pair entry out of range for m = {m}"
                )));
            }
        }
        Ok(IndexPair { bar, unbar })
    }

    /// The empty (identity) pair.
    pub fn empty() -> Self {
        IndexPair {
            bar: vec![],
            unbar: vec![],
        }
    }

    /// Common cardinality of the two subsets.
    pub fn order(&self) -> usize {
        self.bar.len()
    }
}

/// All ascending subsets of `{0, …, m−1}` of size `c`, in lexicographic order.
fn subsets_of_size(m: usize, c: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << m) {
        if mask.count_ones() as usize == c {
            out.push((0..m).filter(|&i| mask >> i & 1 == 1).collect());
        }
    }
    out
}

/// Enumerates every index pair for dimension `m`, ordered by cardinality and
/// then lexicographically — `Σ_c C(m,c)²` pairs in total.
pub fn enumerate_pairs(m: usize) -> Vec<IndexPair> {
    let mut out = Vec::new();
    for c in 0..=m {
        let subsets = subsets_of_size(m, c);
        for bar in &subsets {
            for unbar in &subsets {
                out.push(IndexPair {
                    bar: bar.clone(),
                    unbar: unbar.clone(),
                });
            }
        }
    }
    out
}

/// Enumerates every length-`n` tuple of index pairs (the Cartesian power of
/// [`enumerate_pairs`]).
pub fn enumerate_pair_tuples(m: usize, n: usize) -> Vec<Vec<IndexPair>> {
    let singles = enumerate_pairs(m);
    let mut out: Vec<Vec<IndexPair>> = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::with_capacity(out.len() * singles.len());
        for prefix in &out {
            for pair in &singles {
                let mut tuple = prefix.clone();
                tuple.push(pair.clone());
                next.push(tuple);
            }
        }
        out = next;
    }
    out
}

/// The tuple sign `sgn(𝐚) = ∏_ℓ (−1)^{|a_ℓ|(|a_ℓ|−1)/2}` attached to the
/// Grassmann monomial of a pair tuple in the symmetric Taylor expansion.
pub fn sgn_tuple(pairs: &[IndexPair]) -> f64 {
    let mut sign = 1.0;
    for pair in pairs {
        let c = pair.order();
        if (c * c.saturating_sub(1) / 2) % 2 == 1 {
            sign = -sign;
        }
    }
    sign
}

/// Applies the composed determinant operator of an index-pair tuple to `f` —
/// the free-function form of [`GpFunction::d_tuple`].
pub fn d_operator(pairs: &[IndexPair], f: &GpFunction) -> GpFunction {
    f.d_tuple(pairs)
}

/// All permutations of `{0, …, c−1}` with their parity signs.
fn permutations_with_signs(c: usize) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    let mut items: Vec<usize> = (0..c).collect();
    permute_recursive(&mut items, 0, &mut out);
    out
}

fn permute_recursive(items: &mut Vec<usize>, start: usize, out: &mut Vec<(Vec<usize>, f64)>) {
    if start == items.len() {
        let mut inversions = 0usize;
        for i in 0..items.len() {
            for j in (i + 1)..items.len() {
                if items[i] > items[j] {
                    inversions += 1;
                }
            }
        }
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        out.push((items.clone(), sign));
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permute_recursive(items, start + 1, out);
        items.swap(start, i);
    }
}
