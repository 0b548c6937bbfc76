//! Numerical toolkit for spectral analysis of random Schrödinger operators on
//! tree-strips of finite cone type.
//!
//! A tree of finite cone type is generated from a finite label set `{0, …, s-1}`
//! and a substitution matrix `S`: a vertex with label `p` has `S[p][q]` forward
//! neighbours of label `q`. The strip is the product of such a tree with a
//! finite cross-section `{1, …, m}` carrying a symmetric "vertical" operator
//! `A`, plus a random potential `λ·V(x)` acting on the cross-section fibers.
//!
//! The crate provides:
//!
//! * [`model`] — substitution matrices, structural assumption checks,
//!   truncated strips, disorder laws and their characteristic functions;
//! * [`free_green`] — the self-consistency equations for the free (λ=0)
//!   forward Green's functions `Γ_z^(q)`, their boundary values on the real
//!   axis, and the free spectral set `I_S`;
//! * [`windows`] — the θ-matrix family built from shifted boundary values,
//!   determinant window conditions for the energy window `Î_{A,S}`, and the
//!   eigenvalue lists of the associated linearized (Frechet-derivative)
//!   operators;
//! * [`disorder_mc`] — population-dynamics Monte Carlo on the matrix Green's
//!   function recursion at λ ≠ 0, moment estimators, the ζ/ξ characteristic
//!   estimators, and a boundedness indicator for absolutely continuous
//!   spectrum;
//! * [`oracle`] — exact finite-volume checks: sparse assembly of the truncated
//!   strip Hamiltonian, direct resolvent solves, eigenvalue histograms, and
//!   density-of-states comparisons;
//! * [`susy`] — a small Grassmann-algebra/Berezin-calculus engine used to
//!   verify the supersymmetric integral identities behind the ζ/ξ formalism.

pub mod disorder_mc;
pub mod free_green;
pub mod model;
pub mod oracle;
pub mod susy;
pub mod windows;

use num_complex::Complex64;

/// Unified error type for the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A model definition failed structural validation.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The vertical operator must be symmetric (tolerance 1e-12 on entries).
    #[error("vertical operator is not symmetric: max |A - A^T| entry = {max_asym:.3e}")]
    NonSymmetricVertical { max_asym: f64 },

    /// A truncated strip would exceed the degrees-of-freedom budget.
    #[error(
        "degrees of freedom {needed} exceed budget {budget} \
         ({vertices} vertices x width {width})"
    )]
    DofBudgetExceeded {
        needed: usize,
        budget: usize,
        vertices: usize,
        width: usize,
    },

    /// The damped fixed-point/Newton iteration did not converge.
    #[error(
        "self-consistency iteration failed to converge at z = {z} \
         (residual {residual:.3e} after {iters} iterations)"
    )]
    FixedPointDiverged {
        z: Complex64,
        residual: f64,
        iters: usize,
    },

    /// A boundary value `Γ^(q)_{E - a_j}` required by a window computation was
    /// not robust (the η-ladder failed the Cauchy criterion or blew up).
    #[error(
        "no robust boundary value at E = {energy} for label {label}, \
         shift a_{shift_index} = {shift} (last ladder delta {delta:.3e})"
    )]
    MissingBoundaryLimit {
        label: usize,
        shift_index: usize,
        shift: f64,
        energy: f64,
        delta: f64,
    },

    /// A linear solve encountered a numerically singular matrix.
    #[error("numerically singular matrix in {context}")]
    Singular { context: String },

    /// A dense eigendecomposition was requested above the configured budget.
    #[error("dense eigendecomposition budget exceeded: dof {dof} > {budget}")]
    DenseBudgetExceeded { dof: usize, budget: usize },

    /// A superspace dimension request exceeds the anticommuting-generator cap.
    #[error("supersymmetric engine cap exceeded: 2·m·n = {requested} > {cap} generators")]
    GeneratorCap { requested: usize, cap: usize },

    /// Configuration JSON could not be parsed or was inconsistent.
    #[error("config error: {0}")]
    Config(String),
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
