//! Free (λ = 0) forward Green's functions of the tree Laplacian and their
//! boundary values on the real axis.
//!
//! For `Im z > 0` the label-resolved forward Green's functions
//! `Γ_z = (Γ_z^(0), …, Γ_z^(s-1))` are the unique solutions in the upper half
//! plane of the self-consistency system
//!
//! ```text
//! Γ_z^(p) · ( z + Σ_q S[p][q] Γ_z^(q) ) + 1 = 0 ,      Im Γ_z^(q) > 0 .
//! ```
//!
//! `Γ_z^(q)` is the root Green's function of the forward subtree of a label-`q`
//! vertex; removing the root of `T^(p)` splits it into `S[p][q]` independent
//! label-`q` cones, which is exactly the algebraic content of the system.
//!
//! Numerically the system is solved by a damped fixed-point iteration
//! `Γ ← (1-α)·Γ + α·(-1/(z + SΓ))` (α = 1/2, started at `Γ = i·1`), switched
//! to Newton refinement once the residual is small. Boundary values
//! `Γ_{E+i0}` are obtained along a geometric η-ladder with warm starts; a
//! boundary point is *robust* when the ladder values form a Cauchy sequence
//! (final increment below `tol_bv`) and stay bounded. The free spectral set
//! `I_S` collects the energies whose robust boundary values have strictly
//! positive imaginary part for every label.
//!
//! Two structural facts are used as cross-checks throughout:
//!
//! * scaling law: `Γ^(q)_{√b·z}(b·S) = Γ^(q)_z(S) / √b` for integer `b ≥ 1`;
//! * magnitude bound: `|Γ^(q)_{E+i0}| ≤ 1 / sqrt(S[q][q])`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::model::SubstitutionModel;
use crate::{Error, Result};

/// Geometric ladder `η_k = start · ratio^k`, truncated at `min`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EtaLadder {
    pub start: f64,
    pub ratio: f64,
    pub min: f64,
}

impl Default for EtaLadder {
    fn default() -> Self {
        Self {
            start: 1.0,
            ratio: 0.5,
            min: 1e-9,
        }
    }
}

impl EtaLadder {
    /// The ladder rungs in decreasing order (every rung is ≥ `min`).
    pub fn rungs(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut eta = self.start;
        while eta >= self.min {
            out.push(eta);
            eta *= self.ratio;
        }
        out
    }

    /// Validates the ladder shape.
    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.min > 0.0 && self.min <= self.start) {
            return Err(Error::Config(
                "eta ladder needs 0 < min <= start".into(),
            ));
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Config("eta ladder ratio must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Options for the damped fixed-point / Newton solver.
#[derive(Clone, Copy, Debug)]
pub struct FixedPointOptions {
    /// Damping weight α of the fixed-point update.
    pub damping: f64,
    /// Convergence tolerance on the residual `max_p |Γ_p(z + (SΓ)_p) + 1|`.
    pub tol: f64,
    /// Residual below which Newton refinement takes over.
    pub newton_threshold: f64,
    /// Hard cap on total iterations.
    pub max_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tol: 1e-12,
            newton_threshold: 1e-4,
            max_iter: 100_000,
        }
    }
}

/// Scheme for boundary values and spectral-set membership.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryScheme {
    pub ladder: EtaLadder,
    pub fixed_point: FixedPointOptions,
    /// Cauchy tolerance on the final ladder increment.
    pub tol_bv: f64,
    /// Bound cap: a ladder that exceeds this magnitude is not robust.
    pub bound_cap: f64,
    /// Membership threshold: `E ∈ I_S` needs `Im Γ^(q) > eps_im` for all `q`.
    pub eps_im: f64,
}

impl Default for BoundaryScheme {
    fn default() -> Self {
        Self {
            ladder: EtaLadder::default(),
            fixed_point: FixedPointOptions::default(),
            tol_bv: 1e-7,
            bound_cap: 1e3,
            eps_im: 1e-6,
        }
    }
}

/// Residual `max_p |Γ_p (z + (SΓ)_p) + 1|` of the self-consistency system.
pub fn self_consistency_residual(
    model: &SubstitutionModel,
    z: Complex64,
    gammas: &[Complex64],
) -> f64 {
    let s = model.s();
    let mut worst: f64 = 0.0;
    for p in 0..s {
        let mut w = z;
        for q in 0..s {
            w += model.entry(p, q) as f64 * gammas[q];
        }
        worst = worst.max((gammas[p] * w + Complex64::new(1.0, 0.0)).norm());
    }
    worst
}

fn fixed_point_map(model: &SubstitutionModel, z: Complex64, g: &[Complex64]) -> Vec<Complex64> {
    let s = model.s();
    (0..s)
        .map(|p| {
            let mut w = z;
            for q in 0..s {
                w += model.entry(p, q) as f64 * g[q];
            }
            -Complex64::new(1.0, 0.0) / w
        })
        .collect()
}

/// Solves the self-consistency system at `z` with `Im z > 0`.
///
/// Starts from `init` (default `Γ = i·1`), runs the damped iteration, and
/// polishes with Newton steps on `F_p(Γ) = Γ_p(z + (SΓ)_p) + 1`
/// (`∂F_p/∂Γ_r = δ_{pr}(z + (SΓ)_p) + Γ_p S[p][r]`). The returned solution is
/// verified to lie in the upper half plane componentwise.
pub fn solve_self_consistency(
    model: &SubstitutionModel,
    z: Complex64,
    init: Option<&[Complex64]>,
    opts: &FixedPointOptions,
) -> Result<Vec<Complex64>> {
    if z.im <= 0.0 {
        return Err(Error::Config(format!(
            "self-consistency solve requires Im z > 0 (got z = {z})"
        )));
    }
    let s = model.s();
    let mut g: Vec<Complex64> = match init {
        Some(v) => v.to_vec(),
        None => vec![Complex64::new(0.0, 1.0); s],
    };
    let mut residual = self_consistency_residual(model, z, &g);
    let mut iters = 0usize;

    while residual > opts.tol {
        if iters >= opts.max_iter {
            return Err(Error::FixedPointDiverged {
                z,
                residual,
                iters,
            });
        }
        iters += 1;

        if residual < opts.newton_threshold {
            // Newton step with backtracking.
            let mut jac = DMatrix::<Complex64>::zeros(s, s);
            let mut f = DVector::<Complex64>::zeros(s);
            for p in 0..s {
                let mut w = z;
                for q in 0..s {
                    w += model.entry(p, q) as f64 * g[q];
                }
                f[p] = g[p] * w + Complex64::new(1.0, 0.0);
                for r in 0..s {
                    jac[(p, r)] = g[p] * model.entry(p, r) as f64;
                }
                jac[(p, p)] += w;
            }
            if let Some(delta) = jac.lu().solve(&(-f)) {
                let mut accepted = false;
                let mut t = 1.0;
                for _ in 0..8 {
                    let cand: Vec<Complex64> =
                        (0..s).map(|p| g[p] + t * delta[p]).collect();
                    let r_new = self_consistency_residual(model, z, &cand);
                    if r_new < residual {
                        g = cand;
                        residual = r_new;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if accepted {
                    continue;
                }
            }
            // Newton failed to improve; fall through to a damped sweep.
        }

        let fg = fixed_point_map(model, z, &g);
        for p in 0..s {
            g[p] = (1.0 - opts.damping) * g[p] + opts.damping * fg[p];
        }
        residual = self_consistency_residual(model, z, &g);
    }

    if g.iter().any(|v| !(v.im > 0.0) || !v.is_finite()) {
        return Err(Error::FixedPointDiverged {
            z,
            residual,
            iters,
        });
    }
    Ok(g)
}

/// Boundary values of `Γ` at a real energy, with the robustness verdict.
#[derive(Clone, Debug)]
pub struct BoundaryValues {
    /// Energy `E`.
    pub e: f64,
    /// `Γ^(q)_{E + i·η_final}` per label, from the last completed rung.
    pub gammas: Vec<Complex64>,
    /// Robustness: ladder Cauchy-converged, stayed bounded, and every rung's
    /// solve succeeded.
    pub exists: bool,
    /// Smallest η reached.
    pub eta_final: f64,
    /// Final ladder increment `max_q |Γ(η_k) - Γ(η_{k-1})|`.
    pub last_delta: f64,
    /// Label attaining the final ladder increment (0 when trivial).
    pub worst_label: usize,
}

impl BoundaryValues {
    /// Smallest imaginary part across labels.
    pub fn min_im(&self) -> f64 {
        self.gammas.iter().fold(f64::INFINITY, |m, g| m.min(g.im))
    }
}

/// Runs the η-ladder at energy `E`, warm-starting each rung from the previous
/// one, and reports the boundary values with the Cauchy/bounded verdict.
pub fn boundary_value(
    model: &SubstitutionModel,
    e: f64,
    scheme: &BoundaryScheme,
) -> BoundaryValues {
    let rungs = scheme.ladder.rungs();
    let mut gammas: Option<Vec<Complex64>> = None;
    let mut last_delta = f64::INFINITY;
    let mut worst_label = 0usize;
    let mut eta_final = f64::NAN;
    let mut ok = true;

    for &eta in &rungs {
        let z = Complex64::new(e, eta);
        match solve_self_consistency(model, z, gammas.as_deref(), &scheme.fixed_point) {
            Ok(next) => {
                if let Some(prev) = &gammas {
                    last_delta = 0.0;
                    for (q, (a, b)) in prev.iter().zip(&next).enumerate() {
                        let d = (a - b).norm();
                        if d > last_delta {
                            last_delta = d;
                            worst_label = q;
                        }
                    }
                }
                if next.iter().any(|g| g.norm() > scheme.bound_cap) {
                    ok = false;
                }
                eta_final = eta;
                gammas = Some(next);
            }
            Err(_) => {
                ok = false;
                break;
            }
        }
    }

    let gammas = gammas.unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); model.s()]);
    let exists = ok && rungs.len() >= 2 && last_delta < scheme.tol_bv;
    BoundaryValues {
        e,
        gammas,
        exists,
        eta_final,
        last_delta,
        worst_label,
    }
}

/// Uniform real energy grid `lo, lo + step, …, hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl EnergyGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && hi >= lo) {
            return Err(Error::Config(format!(
                "energy grid needs hi >= lo and step > 0 (got {lo}:{hi}:{step})"
            )));
        }
        Ok(Self { lo, hi, step })
    }

    /// Grid points, inclusive of both ends up to half-step rounding.
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 0.5).floor() as usize;
        (0..=n).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

/// Default symmetric grid covering the free strip spectrum with margin 1:
/// half-width `2·sqrt(max_p Σ_q S[p][q]) + ‖A‖ + 1`.
pub fn default_grid(model: &SubstitutionModel, vertical_norm: f64, step: f64) -> EnergyGrid {
    let half = 2.0 * (model.max_row_sum() as f64).sqrt() + vertical_norm + 1.0;
    EnergyGrid {
        lo: -half,
        hi: half,
        step,
    }
}

/// One row of a free-spectrum scan.
#[derive(Clone, Debug)]
pub struct FreePointRow {
    pub boundary: BoundaryValues,
    /// Robust boundary value with `Im Γ^(q) > eps_im` for every label.
    pub in_i_s: bool,
}

/// Scan result: the per-point table and the merged membership intervals.
#[derive(Clone, Debug)]
pub struct FreeScan {
    pub rows: Vec<FreePointRow>,
    /// Maximal runs of member grid points, reported at half-step resolution:
    /// a run `E_i … E_j` becomes the interval `(E_i - step/2, E_j + step/2)`.
    pub intervals: Vec<(f64, f64)>,
}

/// Computes boundary values over a grid (in parallel) and extracts `I_S` as
/// the union of maximal member runs.
pub fn compute_i_s(
    model: &SubstitutionModel,
    grid: &EnergyGrid,
    scheme: &BoundaryScheme,
) -> FreeScan {
    let points = grid.points();
    let rows: Vec<FreePointRow> = points
        .par_iter()
        .map(|&e| {
            let boundary = boundary_value(model, e, scheme);
            let in_i_s = boundary.exists && boundary.min_im() > scheme.eps_im;
            FreePointRow { boundary, in_i_s }
        })
        .collect();

    let mut intervals = Vec::new();
    let mut run_start: Option<f64> = None;
    let mut run_end = 0.0;
    for row in &rows {
        if row.in_i_s {
            if run_start.is_none() {
                run_start = Some(row.boundary.e);
            }
            run_end = row.boundary.e;
        } else if let Some(start) = run_start.take() {
            intervals.push((start - grid.step / 2.0, run_end + grid.step / 2.0));
        }
    }
    if let Some(start) = run_start {
        intervals.push((start - grid.step / 2.0, run_end + grid.step / 2.0));
    }
    FreeScan { rows, intervals }
}

/// Maximal deviation `max_q |Γ^(q)_{√b·z}(bS) - Γ^(q)_z(S)/√b|` over the given
/// spectral parameters — a direct numerical check of the scaling law.
pub fn scaling_check(
    model: &SubstitutionModel,
    b: u64,
    zs: &[Complex64],
    opts: &FixedPointOptions,
) -> Result<f64> {
    let scaled = model.scaled(b);
    let sqrt_b = (b as f64).sqrt();
    let mut worst: f64 = 0.0;
    for &z in zs {
        let base = solve_self_consistency(model, z, None, opts)?;
        let big = solve_self_consistency(&scaled, sqrt_b * z, None, opts)?;
        for q in 0..model.s() {
            worst = worst.max((big[q] - base[q] / sqrt_b).norm());
        }
    }
    Ok(worst)
}

/// Free (λ = 0) Green matrix `A^(q)_z` of one label in the original orbital
/// basis: with `A = U · diag(a_j) · Uᵀ`,
///
/// ```text
/// A^(q)_z = U · diag_j( Γ^(q)_{z - a_j} ) · Uᵀ .
/// ```
///
/// This is the root Green matrix of the forward subtree at λ = 0, where the
/// strip decouples into shifted scalar copies along the eigenbasis of `A`.
/// Requires `Im z > 0`.
pub fn free_green_matrix(
    model: &SubstitutionModel,
    vertical: &crate::model::VerticalOperator,
    label: usize,
    z: Complex64,
    opts: &FixedPointOptions,
) -> Result<DMatrix<Complex64>> {
    if label >= model.s() {
        return Err(Error::Config(format!(
            "label {label} out of range (s = {})",
            model.s()
        )));
    }
    let m = vertical.m();
    let mut diag = Vec::with_capacity(m);
    for j in 0..m {
        let a_j = vertical.eigenvalues()[j];
        let gammas = solve_self_consistency(model, z - Complex64::new(a_j, 0.0), None, opts)?;
        diag.push(gammas[label]);
    }
    let u = vertical.diagonalizer();
    Ok(DMatrix::from_fn(m, m, |r, c| {
        (0..m)
            .map(|j| diag[j] * (u[(r, j)] * u[(c, j)]))
            .sum::<Complex64>()
    }))
}
