//! Supermatrices: the bookkeeping of `m × n` arrays of supervariables.
//!
//! A supervariable bundles a point `φ_{k,ℓ} ∈ ℝ²` with a conjugate pair of
//! Grassmann generators `(ψ̄_{k,ℓ}, ψ_{k,ℓ})`. An `m × n` supermatrix `Φ`
//! collects `mn` supervariables; its commuting part is an `m × 2n` real
//! matrix `φ` and its anticommuting part an `m × 2n` array `Ψ` whose columns
//! pair up as `(ψ̄_{·,ℓ}, ψ_{·,ℓ})`. The symmetric square splits as
//!
//! ```text
//! Φ^⊙2 = φφᵀ + Ψ^⊙2 ,      Ψ^⊙2 := Ψ J Ψᵀ ,
//! ```
//!
//! with `J` block diagonal in 2×2 blocks `[[0, ½], [−½, 0]]`, i.e.
//! `(Ψ^⊙2)_{jk} = Σ_ℓ ½(ψ̄_{jℓ}ψ_{kℓ} + ψ̄_{kℓ}ψ_{jℓ})`.
//!
//! This module only handles the Grassmann side — generator indexing, the
//! quadratic forms `Tr(B Ψ^⊙2)`, and the mixed couplings between two
//! independent supermatrices. The commuting `φ` side is integrated
//! analytically in the integral engine.

use super::grassmann::GrassmannElement;
use nalgebra::DMatrix;
use num_complex::Complex64;

/// Generator layout for one `m × n` supermatrix inside a shared universe.
///
/// Within the block of replica `ℓ` all conjugated generators `ψ̄_{·,ℓ}` come
/// first, then the plain ones `ψ_{·,ℓ}`; blocks are stacked by `ℓ`. With this
/// order the standard monomials
/// `Ψ_{ā,a,ℓ} = (∏_{j∈ā} ψ̄_{j,ℓ})(∏_{j∈a} ψ_{j,ℓ})` and their products over
/// `ℓ` are already ascending, so they carry coefficient `+1` in the canonical
/// basis.
#[derive(Clone, Copy, Debug)]
pub struct SuperMatrix {
    m: usize,
    n: usize,
    base: usize,
    universe: usize,
}

impl SuperMatrix {
    /// A single supermatrix owning the whole universe of `2mn` generators.
    pub fn new(m: usize, n: usize) -> Self {
        SuperMatrix {
            m,
            n,
            base: 0,
            universe: 2 * m * n,
        }
    }

    /// Two independent supermatrices sharing a `4mn`-generator universe; the
    /// first occupies the low indices, the second the high ones.
    pub fn independent_pair(m: usize, n: usize) -> (Self, Self) {
        let half = 2 * m * n;
        (
            SuperMatrix {
                m,
                n,
                base: 0,
                universe: 2 * half,
            },
            SuperMatrix {
                m,
                n,
                base: half,
                universe: 2 * half,
            },
        )
    }

    /// Cross-section dimension `m`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Replica count `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Size of the shared generator universe.
    pub fn universe(&self) -> usize {
        self.universe
    }

    /// Global index of `ψ̄_{k,ℓ}` (0-based `k < m`, `ℓ < n`).
    pub fn psibar(&self, k: usize, l: usize) -> usize {
        assert!(k < self.m && l < self.n, "supermatrix index out of range");
        self.base + 2 * self.m * l + k
    }

    /// Global index of `ψ_{k,ℓ}`.
    pub fn psi(&self, k: usize, l: usize) -> usize {
        assert!(k < self.m && l < self.n, "supermatrix index out of range");
        self.base + 2 * self.m * l + self.m + k
    }

    /// The conjugate pairs `(ψ̄_{k,ℓ}, ψ_{k,ℓ})` of this matrix, the order in
    /// which full Berezin integration is performed.
    pub fn psi_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.m * self.n);
        for l in 0..self.n {
            for k in 0..self.m {
                out.push((self.psibar(k, l), self.psi(k, l)));
            }
        }
        out
    }

    /// The bitmask of the monomial `Ψ_{𝐚̄,𝐚} = ∏_ℓ Ψ_{ā_ℓ, a_ℓ, ℓ}` for
    /// ascending subsets per replica slot.
    pub fn monomial_mask(&self, bars: &[Vec<usize>], unbars: &[Vec<usize>]) -> u32 {
        assert_eq!(bars.len(), self.n);
        assert_eq!(unbars.len(), self.n);
        let mut mask = 0u32;
        for l in 0..self.n {
            for &k in &bars[l] {
                mask |= 1 << self.psibar(k, l);
            }
            for &k in &unbars[l] {
                mask |= 1 << self.psi(k, l);
            }
        }
        mask
    }

    /// The entry `(Ψ^⊙2)_{jk} = Σ_ℓ ½(ψ̄_{jℓ}ψ_{kℓ} + ψ̄_{kℓ}ψ_{jℓ})` as a
    /// Grassmann element.
    pub fn psi_sq_entry(&self, j: usize, k: usize) -> GrassmannElement<Complex64> {
        let mut e = GrassmannElement::zero(self.universe);
        for l in 0..self.n {
            e = e.add(&two_form(
                self.universe,
                self.psibar(j, l),
                self.psi(k, l),
                Complex64::new(0.5, 0.0),
            ));
            e = e.add(&two_form(
                self.universe,
                self.psibar(k, l),
                self.psi(j, l),
                Complex64::new(0.5, 0.0),
            ));
        }
        e
    }

    /// The quadratic form `Tr(B Ψ^⊙2) = Σ_{jk} B_{jk} (Ψ^⊙2)_{jk}` (the
    /// entry array is symmetric, so only the symmetric part of `B` matters).
    pub fn trace_form(&self, b: &DMatrix<Complex64>) -> GrassmannElement<Complex64> {
        assert_eq!(b.nrows(), self.m);
        assert_eq!(b.ncols(), self.m);
        let mut e = GrassmannElement::zero(self.universe);
        for j in 0..self.m {
            for k in 0..self.m {
                let coeff = b[(j, k)];
                if coeff == Complex64::new(0.0, 0.0) {
                    continue;
                }
                e = e.add(&self.psi_sq_entry(j, k).scale(&coeff));
            }
        }
        e
    }

    /// The Grassmann part of the doubled mixed pairing `2 Φ · A Φ'` between
    /// this matrix and an independent one:
    ///
    /// ```text
    /// Σ_{j,k,ℓ} A_{jk} ( ψ̄_{jℓ} ψ'_{kℓ} + ψ̄'_{kℓ} ψ_{jℓ} ) .
    /// ```
    pub fn mixed_coupling(
        &self,
        other: &SuperMatrix,
        a: &DMatrix<Complex64>,
    ) -> GrassmannElement<Complex64> {
        assert_eq!(self.universe, other.universe, "universes must be shared");
        assert_eq!(self.n, other.n, "replica counts must match");
        assert_eq!(a.nrows(), self.m);
        assert_eq!(a.ncols(), other.m);
        let mut e = GrassmannElement::zero(self.universe);
        for l in 0..self.n {
            for j in 0..self.m {
                for k in 0..other.m {
                    let coeff = a[(j, k)];
                    if coeff == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    e = e.add(&two_form(
                        self.universe,
                        self.psibar(j, l),
                        other.psi(k, l),
                        coeff,
                    ));
                    e = e.add(&two_form(
                        self.universe,
                        other.psibar(k, l),
                        self.psi(j, l),
                        coeff,
                    ));
                }
            }
        }
        e
    }
}

/// The product `c · ψ_{g1} ψ_{g2}` normalized to the ascending basis
/// (antisymmetric in the generator order; zero when `g1 == g2`).
fn two_form(universe: usize, g1: usize, g2: usize, c: Complex64) -> GrassmannElement<Complex64> {
    if g1 == g2 {
        return GrassmannElement::zero(universe);
    }
    let (lo, hi, coeff) = if g1 < g2 { (g1, g2, c) } else { (g2, g1, -c) };
    GrassmannElement::monomial(universe, (1 << lo) | (1 << hi), coeff)
}
