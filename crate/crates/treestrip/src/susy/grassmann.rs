//! A finite Grassmann algebra with sparse canonically-ordered coefficients.
//!
//! The algebra over generators `ψ_0, …, ψ_{g−1}` is the free algebra modulo
//! the anticommutation relations `ψ_a ψ_b + ψ_b ψ_a = 0` (hence `ψ_a² = 0`).
//! A basis is given by the ascending-ordered monomials, encoded as bitmasks:
//! bit `i` set means generator `i` occurs. Every element is a sparse map from
//! masks to coefficients; all reordering signs are tracked by counting
//! inversions between masks.
//!
//! Coefficients live in an arbitrary commutative ring abstracted by
//! [`GrassCoeff`]; the engine instantiates complex scalars and
//! Gaussian-polynomial functions.

use super::gpfunction::GpFunction;
use num_complex::Complex64;
use std::collections::BTreeMap;

/// Maximum number of generators supported by the bitmask encoding.
pub const MAX_GENERATORS: usize = 31;

/// Commutative coefficient ring for Grassmann elements.
pub trait GrassCoeff: Clone {
    /// Ring sum.
    fn gc_add(&self, other: &Self) -> Self;
    /// Ring product (commutative).
    fn gc_mul(&self, other: &Self) -> Self;
    /// Additive inverse.
    fn gc_neg(&self) -> Self;
    /// Multiplication by a real scalar.
    fn gc_scale(&self, s: f64) -> Self;
    /// Structural zero test (used to prune exact cancellations).
    fn gc_is_zero(&self) -> bool;
}

impl GrassCoeff for Complex64 {
    fn gc_add(&self, other: &Self) -> Self {
        self + other
    }
    fn gc_mul(&self, other: &Self) -> Self {
        self * other
    }
    fn gc_neg(&self) -> Self {
        -self
    }
    fn gc_scale(&self, s: f64) -> Self {
        self * s
    }
    fn gc_is_zero(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
}

impl GrassCoeff for GpFunction {
    fn gc_add(&self, other: &Self) -> Self {
        self.add(other)
    }
    fn gc_mul(&self, other: &Self) -> Self {
        self.mul(other)
    }
    fn gc_neg(&self) -> Self {
        self.neg()
    }
    fn gc_scale(&self, s: f64) -> Self {
        self.scale(Complex64::new(s, 0.0))
    }
    fn gc_is_zero(&self) -> bool {
        self.is_zero()
    }
}

/// Sign of reordering the concatenated monomial `(mask a)(mask b)` into
/// ascending order: `(−1)^{#{(x,y) : x ∈ a, y ∈ b, x > y}}`.
/// The masks must be disjoint.
pub fn reorder_sign(a: u32, b: u32) -> f64 {
    debug_assert_eq!(a & b, 0, "masks must be disjoint");
    let mut inversions = 0u32;
    let mut rest = b;
    while rest != 0 {
        let y = rest.trailing_zeros();
        inversions += (a >> (y + 1)).count_ones();
        rest &= rest - 1;
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// An element of the Grassmann algebra over `gens` generators.
#[derive(Clone, Debug, PartialEq)]
pub struct GrassmannElement<C: GrassCoeff> {
    gens: usize,
    terms: BTreeMap<u32, C>,
}

impl<C: GrassCoeff> GrassmannElement<C> {
    /// The zero element.
    pub fn zero(gens: usize) -> Self {
        assert!(gens <= MAX_GENERATORS, "generator count exceeds bitmask width");
        GrassmannElement {
            gens,
            terms: BTreeMap::new(),
        }
    }

    /// A pure scalar (coefficient of the empty monomial).
    pub fn scalar(gens: usize, c: C) -> Self {
        let mut e = Self::zero(gens);
        e.insert_add(0, c);
        e
    }

    /// The element `c · ψ_{i_1} ⋯ ψ_{i_k}` for an ascending monomial given as
    /// a bitmask.
    pub fn monomial(gens: usize, mask: u32, c: C) -> Self {
        assert!(mask < (1u32 << gens), "mask outside generator universe");
        let mut e = Self::zero(gens);
        e.insert_add(mask, c);
        e
    }

    /// Generator universe size.
    pub fn gens(&self) -> usize {
        self.gens
    }

    /// `true` when no monomial carries a structurally nonzero coefficient.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Iterator over `(mask, coefficient)` pairs in ascending mask order.
    pub fn terms(&self) -> impl Iterator<Item = (&u32, &C)> {
        self.terms.iter()
    }

    /// The coefficient of the ascending monomial `mask`, if present.
    pub fn coefficient(&self, mask: u32) -> Option<&C> {
        self.terms.get(&mask)
    }

    /// Adds `c` to the coefficient at `mask`, pruning exact zeros.
    pub fn insert_add(&mut self, mask: u32, c: C) {
        if c.gc_is_zero() {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(mask) {
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
            Entry::Occupied(mut slot) => {
                let sum = slot.get().gc_add(&c);
                if sum.gc_is_zero() {
                    slot.remove();
                } else {
                    *slot.get_mut() = sum;
                }
            }
        }
    }

    /// Sum of two elements over the same universe.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.gens, other.gens, "generator universe mismatch");
        let mut out = self.clone();
        for (&mask, c) in &other.terms {
            out.insert_add(mask, c.clone());
        }
        out
    }

    /// Associative anticommutative product: monomials with overlapping
    /// generators annihilate, disjoint ones merge with the inversion sign.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.gens, other.gens, "generator universe mismatch");
        let mut out = Self::zero(self.gens);
        for (&ma, ca) in &self.terms {
            for (&mb, cb) in &other.terms {
                if ma & mb != 0 {
                    continue;
                }
                let mut c = ca.gc_mul(cb);
                if reorder_sign(ma, mb) < 0.0 {
                    c = c.gc_neg();
                }
                out.insert_add(ma | mb, c);
            }
        }
        out
    }

    /// Coefficient-wise multiplication by a ring element.
    pub fn scale(&self, c: &C) -> Self {
        let mut out = Self::zero(self.gens);
        for (&mask, coeff) in &self.terms {
            out.insert_add(mask, coeff.gc_mul(c));
        }
        out
    }

    /// Coefficient-wise multiplication by a real scalar.
    pub fn scale_f64(&self, s: f64) -> Self {
        let mut out = Self::zero(self.gens);
        for (&mask, coeff) in &self.terms {
            out.insert_add(mask, coeff.gc_scale(s));
        }
        out
    }

    /// Negation.
    pub fn neg(&self) -> Self {
        self.scale_f64(-1.0)
    }

    /// Berezin integral over generator `g`: writing `F = F₀ + F₁ ψ_g` with
    /// `F₀, F₁` free of `ψ_g`, the integral is `F₁`. On the monomial basis a
    /// term containing `ψ_g` picks up `(−1)^{#generators above g}` from moving
    /// `ψ_g` to the right; terms without `ψ_g` vanish.
    pub fn berezin(&self, g: usize) -> Self {
        assert!(g < self.gens, "generator index out of range");
        let bit = 1u32 << g;
        let mut out = Self::zero(self.gens);
        for (&mask, c) in &self.terms {
            if mask & bit == 0 {
                continue;
            }
            let above = (mask >> (g + 1)).count_ones();
            let coeff = if above % 2 == 0 { c.clone() } else { c.gc_neg() };
            out.insert_add(mask & !bit, coeff);
        }
        out
    }

    /// Iterated Berezin integral in the given generator order:
    /// `∫ … (∫ F dψ_{g_1}) … dψ_{g_k}`.
    pub fn berezin_sequence(&self, order: &[usize]) -> Self {
        let mut acc = self.clone();
        for &g in order {
            acc = acc.berezin(g);
        }
        acc
    }

    /// Full integral over conjugate pairs: for each `(ḡ, g)` pair applies
    /// `∫ · dψ̄ dψ` (the `ψ̄` integral first), so that `∫ F ψ̄ψ dψ̄ dψ = −F`.
    pub fn berezin_pairs(&self, pairs: &[(usize, usize)]) -> Self {
        let mut acc = self.clone();
        for &(gbar, g) in pairs {
            acc = acc.berezin(gbar).berezin(g);
        }
        acc
    }
}

impl GrassmannElement<Complex64> {
    /// Exponential of a nilpotent even element by its (finite) Taylor series.
    /// The element must have no scalar part.
    pub fn exp(&self) -> Self {
        assert!(
            self.coefficient(0).is_none(),
            "exp requires a vanishing scalar part"
        );
        let mut result = Self::scalar(self.gens, Complex64::new(1.0, 0.0));
        let mut power = Self::scalar(self.gens, Complex64::new(1.0, 0.0));
        let max_k = self.gens / 2 + 1;
        for k in 1..=max_k {
            power = power.mul(self).scale_f64(1.0 / k as f64);
            if power.is_zero() {
                break;
            }
            result = result.add(&power);
        }
        result
    }
}
