//! Sparse multivariate polynomials with complex coefficients.
//!
//! The supersymmetric verification engine uses these in two roles:
//!
//! * polynomials in the independent entries `M_{jk}` (`j ≤ k`) of a symmetric
//!   `m × m` matrix — the polynomial factor of Gaussian-polynomial functions;
//! * polynomials in the `m·2n` real coordinates of a rectangular matrix `φ`,
//!   produced by substituting `M = φφᵀ` before analytic Gaussian integration.

use num_complex::Complex64;
use std::collections::BTreeMap;

/// A sparse polynomial in `nvars` commuting variables.
///
/// Monomials are keyed by dense exponent vectors; the variable counts in this
/// crate are tiny (at most `m(m+1)/2` matrix slots or `2mn ≤ 8` coordinates),
/// so dense keys keep ordering and hashing trivial. Coefficients that are
/// exactly zero are pruned on insertion.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsePoly {
    nvars: usize,
    terms: BTreeMap<Vec<u8>, Complex64>,
}

impl SparsePoly {
    /// The zero polynomial in `nvars` variables.
    pub fn zero(nvars: usize) -> Self {
        SparsePoly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    /// The constant polynomial `c`.
    pub fn constant(nvars: usize, c: Complex64) -> Self {
        let mut p = SparsePoly::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The single variable `x_i`.
    pub fn var(nvars: usize, i: usize) -> Self {
        assert!(i < nvars, "variable index out of range");
        let mut expts = vec![0u8; nvars];
        expts[i] = 1;
        let mut p = SparsePoly::zero(nvars);
        p.add_term(expts, Complex64::new(1.0, 0.0));
        p
    }

    /// Number of variables.
    pub fn nvars(&self) -> usize {
        self.nvars
    }

    /// `true` when no monomial has a nonzero coefficient.
    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Iterator over `(exponents, coefficient)` pairs in lexicographic order.
    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u8>, &Complex64)> {
        self.terms.iter()
    }

    /// Number of stored monomials.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Adds `c · x^expts` in place.
    pub fn add_term(&mut self, expts: Vec<u8>, c: Complex64) {
        assert_eq!(expts.len(), self.nvars, "exponent vector length mismatch");
        if c == Complex64::new(0.0, 0.0) {
            return;
        }
        use std::collections::btree_map::Entry;
        match self.terms.entry(expts) {
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
            Entry::Occupied(mut slot) => {
                let sum = *slot.get() + c;
                if sum == Complex64::new(0.0, 0.0) {
                    slot.remove();
                } else {
                    *slot.get_mut() = sum;
                }
            }
        }
    }

    /// Polynomial sum.
    pub fn add(&self, other: &SparsePoly) -> SparsePoly {
        assert_eq!(self.nvars, other.nvars, "variable count mismatch");
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), *c);
        }
        out
    }

    /// Polynomial product.
    pub fn mul(&self, other: &SparsePoly) -> SparsePoly {
        assert_eq!(self.nvars, other.nvars, "variable count mismatch");
        let mut out = SparsePoly::zero(self.nvars);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let expts: Vec<u8> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
                out.add_term(expts, ca * cb);
            }
        }
        out
    }

    /// Scalar multiple.
    pub fn scale(&self, c: Complex64) -> SparsePoly {
        let mut out = SparsePoly::zero(self.nvars);
        for (e, coeff) in &self.terms {
            out.add_term(e.clone(), coeff * c);
        }
        out
    }

    /// Formal partial derivative with respect to variable `i`.
    pub fn derivative(&self, i: usize) -> SparsePoly {
        assert!(i < self.nvars, "variable index out of range");
        let mut out = SparsePoly::zero(self.nvars);
        for (e, c) in &self.terms {
            if e[i] == 0 {
                continue;
            }
            let mut expts = e.clone();
            expts[i] -= 1;
            out.add_term(expts, c * Complex64::new(f64::from(e[i]), 0.0));
        }
        out
    }

    /// Evaluates at the point `values` (one value per variable).
    pub fn eval(&self, values: &[Complex64]) -> Complex64 {
        assert_eq!(values.len(), self.nvars, "evaluation point length mismatch");
        let mut acc = Complex64::new(0.0, 0.0);
        for (e, c) in &self.terms {
            let mut mono = *c;
            for (i, &pow) in e.iter().enumerate() {
                if pow > 0 {
                    mono *= values[i].powi(i32::from(pow));
                }
            }
            acc += mono;
        }
        acc
    }

    /// The coefficient of the constant monomial.
    pub fn constant_term(&self) -> Complex64 {
        self.terms
            .get(&vec![0u8; self.nvars])
            .copied()
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Largest total degree over stored monomials (0 for the zero polynomial).
    pub fn total_degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&x| usize::from(x)).sum())
            .max()
            .unwrap_or(0)
    }
}
