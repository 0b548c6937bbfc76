//! Determinant window conditions and linearization spectra for the energy
//! window `Î_{A,S}`.
//!
//! Fix a real energy `E` and the vertical eigenvalues `a_1 ≤ … ≤ a_m`. The
//! building blocks are the shifted boundary values `Γ^(q)_{E - a_j + i0}`.
//! For an upper-triangular multi-index `J = (J_{jk})_{j≤k}` of nonnegative
//! integers with order `|J| = Σ J_{jk}` put, per label,
//!
//! ```text
//! θ^(q)_J = Π_{j≤k} ( Γ^(q)_{E-a_j} · Γ^(q)_{E-a_k} )^{J_{jk}} ,
//! ```
//!
//! and let `Θ_J = diag_q(θ^(q)_J)` act on label space. The window `Î_{A,S}`
//! consists of the base points (robust boundary values with
//! `Im Γ^(q)_{E-a_j} > eps_im` for all `q, j`) where additionally
//!
//! ```text
//! det( Θ_J Θ*_{J'} S − 1 ) ≠ 0        for all |J| + |J'| ≥ 1 .
//! ```
//!
//! The pair `(J, J') = (0, 0)` is *not* part of the condition — `det(S − 1)`
//! may legitimately vanish (e.g. `S = [[4,3],[2,3]]`) without closing the
//! window.
//!
//! Only finitely many pairs need a numerical check: with
//! `γ_max = max_{q,j} |Γ^(q)_{E-a_j}|` one has `‖Θ_J‖ ≤ γ_max^{2|J|}`, so
//! every pair of order `|J| + |J'| = u` satisfies
//! `‖Θ_J Θ*_{J'} S‖ ≤ γ_max^{2u} ‖S‖ < 1` once `γ_max^{2u} ‖S‖ < 1`; the
//! spectral radius is then below 1 and the determinant cannot vanish. The
//! smallest such order `N*` certifies the tail `|J| + |J'| ≥ N*`, leaving
//! orders `1 … N*-1` for explicit determinant checks. Under the norm-bound
//! assumption `‖S‖ < K²` the magnitude bound `γ_max ≤ 1/√K` gives
//! `γ_max⁴ ‖S‖ < K⁻²·K² = 1`, i.e. `N* ≤ 2` and only the order-1 pairs ever
//! need checking.
//!
//! The same θ-family describes the spectrum of the linearization (Frechet
//! derivative) of the Green's-function fixed-point map at the free solution:
//! it is `{0} ∪ ⋃_{|J|≥1} spec(Θ_J S)` for the one-sided operator, and
//! `{0} ∪ ⋃_{|J|+|J'|≥1} spec(Θ_J Θ*_{J'} S)` for the two-sided one. The
//! *margin to 1* of these lists is the quantitative distance to the window
//! condition.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::free_green::{boundary_value, BoundaryScheme, EnergyGrid};
use crate::model::{SubstitutionModel, VerticalOperator};
use crate::{Error, Result};

/// Upper-triangular multi-index over the `m(m+1)/2` slots `(j, k)`, `j ≤ k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiIndex {
    m: usize,
    exponents: Vec<u32>,
}

impl MultiIndex {
    /// The zero index.
    pub fn zero(m: usize) -> Self {
        Self {
            m,
            exponents: vec![0; m * (m + 1) / 2],
        }
    }

    /// Index with a single unit entry in slot `(j, k)`, `j ≤ k`.
    pub fn unit(m: usize, j: usize, k: usize) -> Self {
        let mut out = Self::zero(m);
        let slot = Self::slot(m, j, k);
        out.exponents[slot] = 1;
        out
    }

    /// Flat slot number of `(j, k)` with `j ≤ k` (row-major upper triangle).
    pub fn slot(m: usize, j: usize, k: usize) -> usize {
        assert!(j <= k && k < m, "slot ({j},{k}) out of range for m={m}");
        j * m - j * (j + 1) / 2 + k
    }

    /// Cross-section size.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Exponent on slot `(j, k)`.
    pub fn exponent(&self, j: usize, k: usize) -> u32 {
        self.exponents[Self::slot(self.m, j, k)]
    }

    /// Order `|J| = Σ_{j≤k} J_{jk}`.
    pub fn order(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// All multi-indices of the given order (lexicographic in slot order).
    pub fn of_order(m: usize, order: u32) -> Vec<Self> {
        let slots = m * (m + 1) / 2;
        let mut out = Vec::new();
        let mut current = vec![0u32; slots];
        fn rec(slot: usize, remaining: u32, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            if slot + 1 == current.len() {
                current[slot] = remaining;
                out.push(current.clone());
                return;
            }
            for e in (0..=remaining).rev() {
                current[slot] = e;
                rec(slot + 1, remaining - e, current, out);
            }
            current[slot] = 0;
        }
        let mut raw = Vec::new();
        rec(0, order, &mut current, &mut raw);
        for exponents in raw {
            out.push(Self { m, exponents });
        }
        out
    }

    /// Human-readable form like `J[0,0]=2 J[0,1]=1`.
    pub fn describe(&self) -> String {
        let mut parts = Vec::new();
        for j in 0..self.m {
            for k in j..self.m {
                let e = self.exponent(j, k);
                if e > 0 {
                    parts.push(format!("J[{j},{k}]={e}"));
                }
            }
        }
        if parts.is_empty() {
            "J=0".to_string()
        } else {
            parts.join(" ")
        }
    }
}

/// Shifted boundary values `Γ^(q)_{E - a_j}` for all labels and shifts.
#[derive(Clone, Debug)]
pub struct ShiftedDiagonals {
    /// Energy `E`.
    pub e: f64,
    /// Vertical eigenvalues `a_j`, ascending.
    pub shifts: Vec<f64>,
    /// `gammas[q][j] = Γ^(q)_{E - a_j + i0}`.
    pub gammas: Vec<Vec<Complex64>>,
    /// `min_{q,j} Im Γ^(q)_{E-a_j}`.
    pub min_im: f64,
    /// `γ_max = max_{q,j} |Γ^(q)_{E-a_j}|`.
    pub gamma_max: f64,
}

/// Computes all shifted boundary values at energy `E`, failing with a
/// structured error when any ladder is not robust.
pub fn shifted_diagonals(
    model: &SubstitutionModel,
    vertical: &VerticalOperator,
    e: f64,
    scheme: &BoundaryScheme,
) -> Result<ShiftedDiagonals> {
    let s = model.s();
    let m = vertical.m();
    let mut gammas = vec![vec![Complex64::new(0.0, 0.0); m]; s];
    let mut min_im = f64::INFINITY;
    let mut gamma_max: f64 = 0.0;
    for j in 0..m {
        let a_j = vertical.eigenvalues()[j];
        let bv = boundary_value(model, e - a_j, scheme);
        if !bv.exists {
            return Err(Error::MissingBoundaryLimit {
                label: bv.worst_label,
                shift_index: j,
                shift: a_j,
                energy: e,
                delta: bv.last_delta,
            });
        }
        for q in 0..s {
            gammas[q][j] = bv.gammas[q];
            min_im = min_im.min(bv.gammas[q].im);
            gamma_max = gamma_max.max(bv.gammas[q].norm());
        }
    }
    Ok(ShiftedDiagonals {
        e,
        shifts: vertical.eigenvalues().iter().copied().collect(),
        gammas,
        min_im,
        gamma_max,
    })
}

/// `θ^(q)_J = Π_{j≤k} (Γ^(q)_{E-a_j} Γ^(q)_{E-a_k})^{J_{jk}}` for one label.
pub fn theta_scalar(gammas_q: &[Complex64], j_idx: &MultiIndex) -> Complex64 {
    let m = j_idx.m();
    debug_assert_eq!(gammas_q.len(), m);
    let mut out = Complex64::new(1.0, 0.0);
    for j in 0..m {
        for k in j..m {
            let e = j_idx.exponent(j, k);
            if e > 0 {
                out *= (gammas_q[j] * gammas_q[k]).powu(e);
            }
        }
    }
    out
}

/// Diagonal of `Θ_J` over labels.
pub fn theta_diagonal(diag: &ShiftedDiagonals, j_idx: &MultiIndex) -> DVector<Complex64> {
    DVector::from_fn(diag.gammas.len(), |q, _| theta_scalar(&diag.gammas[q], j_idx))
}

/// `det( Θ_J Θ*_{J'} S − 1 )`.
pub fn window_determinant(
    model: &SubstitutionModel,
    diag: &ShiftedDiagonals,
    j_idx: &MultiIndex,
    jp_idx: &MultiIndex,
) -> Complex64 {
    let s = model.s();
    let tj = theta_diagonal(diag, j_idx);
    let tjp = theta_diagonal(diag, jp_idx);
    let mut mat = DMatrix::<Complex64>::zeros(s, s);
    for p in 0..s {
        let d = tj[p] * tjp[p].conj();
        for q in 0..s {
            mat[(p, q)] = d * model.entry(p, q) as f64;
        }
        mat[(p, p)] -= Complex64::new(1.0, 0.0);
    }
    mat.lu().determinant()
}

/// Finite list of determinant conditions with the tail certificate.
#[derive(Clone, Debug)]
pub struct ConditionPairs {
    /// All pairs `(J, J')` with `1 ≤ |J| + |J'| ≤ max_checked_order`.
    pub pairs: Vec<(MultiIndex, MultiIndex)>,
    /// Smallest order `u ≥ 1` with `γ_max^{2u}·‖S‖ < 1`, when one exists
    /// below the search cap.
    pub n_star: Option<usize>,
    /// Largest order covered by the explicit pair list.
    pub max_checked_order: usize,
    /// True when every order above `max_checked_order` is certified by the
    /// spectral-radius bound.
    pub tail_certified: bool,
}

/// Safety slack for the tail certificate: an order is certified only when
/// `γ_max^{2u}·‖S‖ < 1 - CERTIFICATE_SLACK`. Marginal cases — e.g. the
/// regular tree at the band center, where `γ_max²·‖S‖ = 1` exactly and
/// rounding from the η-ladder could land on either side — then fall to an
/// explicit determinant check instead of a spurious certificate.
pub const CERTIFICATE_SLACK: f64 = 1e-6;

/// Enumerates the determinant conditions that need explicit checking at a
/// point with the given `γ_max`.
///
/// Orders `u ≥ N*` with `γ_max^{2u}·‖S‖ < 1 - CERTIFICATE_SLACK` are
/// certified (spectral radius of `Θ_J Θ*_{J'} S` below 1 forces a nonzero
/// determinant), so the explicit list covers orders `1 … max(1, N*-1)`. When
/// no finite `N*` exists below `hard_cap` the list is truncated at
/// `hard_cap` and flagged uncertified.
pub fn enumerate_condition_pairs(
    m: usize,
    gamma_max: f64,
    norm_s: f64,
    hard_cap: usize,
) -> ConditionPairs {
    let g2 = gamma_max * gamma_max;
    let mut n_star = None;
    let mut weight = g2; // γ_max^{2u} at u = 1
    for u in 1..=hard_cap + 1 {
        if weight * norm_s < 1.0 - CERTIFICATE_SLACK {
            n_star = Some(u);
            break;
        }
        weight *= g2;
    }
    let (max_checked_order, tail_certified) = match n_star {
        Some(u) => (usize::max(1, u - 1), true),
        None => (hard_cap, false),
    };

    let mut pairs = Vec::new();
    for u in 1..=max_checked_order as u32 {
        for wj in (0..=u).rev() {
            for j_idx in MultiIndex::of_order(m, wj) {
                for jp_idx in MultiIndex::of_order(m, u - wj) {
                    pairs.push((j_idx.clone(), jp_idx));
                }
            }
        }
    }
    ConditionPairs {
        pairs,
        n_star,
        max_checked_order,
        tail_certified,
    }
}

/// Options for the window scan.
#[derive(Clone, Copy, Debug)]
pub struct WindowOptions {
    /// A determinant with `|det| ≤ det_tol` excludes the energy.
    pub det_tol: f64,
    /// Margins in `(det_tol, low_margin)` are flagged.
    pub low_margin: f64,
    /// Cap on explicitly checked orders when no certificate exists.
    pub hard_cap_order: usize,
}

impl Default for WindowOptions {
    fn default() -> Self {
        Self {
            det_tol: 1e-8,
            low_margin: 1e-4,
            hard_cap_order: 6,
        }
    }
}

/// Verdict for one energy.
#[derive(Clone, Debug)]
pub enum WindowStatus {
    /// All checked determinants are bounded away from zero.
    InWindow {
        /// Smallest `|det|` over the checked pairs.
        worst_margin: f64,
        /// Pair attaining the smallest margin.
        worst_pair: (MultiIndex, MultiIndex),
        /// Margin fell in the flagged band `(det_tol, low_margin)`.
        low_margin: bool,
    },
    /// Robust boundary values, but `min Im ≤ eps_im` (outside the base set).
    OutsideBase { min_im: f64 },
    /// A determinant condition failed.
    Excluded {
        j: MultiIndex,
        jp: MultiIndex,
        det_abs: f64,
    },
    /// A shifted boundary value was not robust (band edge or unresolved).
    Indeterminate {
        shift_index: usize,
        shift: f64,
        delta: f64,
    },
}

/// One row of a window scan.
#[derive(Clone, Debug)]
pub struct WindowRow {
    pub e: f64,
    pub status: WindowStatus,
    /// `γ_max` at this energy (0 when indeterminate).
    pub gamma_max: f64,
    /// Certificate order `N*` (when finite).
    pub n_star: Option<usize>,
    /// Explicitly checked maximal order.
    pub max_checked_order: usize,
    /// Tail certified by the spectral-radius bound.
    pub tail_certified: bool,
    /// Number of explicitly checked pairs.
    pub n_pairs: usize,
}

impl WindowRow {
    /// True when the energy is in the window `Î_{A,S}`.
    pub fn in_window(&self) -> bool {
        matches!(self.status, WindowStatus::InWindow { .. })
    }
}

/// Evaluates the window conditions at a single energy.
pub fn window_point(
    model: &SubstitutionModel,
    vertical: &VerticalOperator,
    e: f64,
    scheme: &BoundaryScheme,
    opts: &WindowOptions,
) -> WindowRow {
    let diag = match shifted_diagonals(model, vertical, e, scheme) {
        Ok(d) => d,
        Err(Error::MissingBoundaryLimit {
            shift_index,
            shift,
            delta,
            ..
        }) => {
            return WindowRow {
                e,
                status: WindowStatus::Indeterminate {
                    shift_index,
                    shift,
                    delta,
                },
                gamma_max: 0.0,
                n_star: None,
                max_checked_order: 0,
                tail_certified: false,
                n_pairs: 0,
            }
        }
        Err(err) => unreachable!("shifted_diagonals returns only boundary errors: {err}"),
    };

    if diag.min_im <= scheme.eps_im {
        return WindowRow {
            e,
            status: WindowStatus::OutsideBase {
                min_im: diag.min_im,
            },
            gamma_max: diag.gamma_max,
            n_star: None,
            max_checked_order: 0,
            tail_certified: false,
            n_pairs: 0,
        };
    }

    let conds = enumerate_condition_pairs(
        vertical.m(),
        diag.gamma_max,
        model.spectral_norm(),
        opts.hard_cap_order,
    );
    let mut worst: Option<(f64, (MultiIndex, MultiIndex))> = None;
    for (j_idx, jp_idx) in &conds.pairs {
        let det = window_determinant(model, &diag, j_idx, jp_idx).norm();
        if det <= opts.det_tol {
            return WindowRow {
                e,
                status: WindowStatus::Excluded {
                    j: j_idx.clone(),
                    jp: jp_idx.clone(),
                    det_abs: det,
                },
                gamma_max: diag.gamma_max,
                n_star: conds.n_star,
                max_checked_order: conds.max_checked_order,
                tail_certified: conds.tail_certified,
                n_pairs: conds.pairs.len(),
            };
        }
        if worst.as_ref().map_or(true, |(w, _)| det < *w) {
            worst = Some((det, (j_idx.clone(), jp_idx.clone())));
        }
    }
    let (worst_margin, worst_pair) =
        worst.expect("at least the order-1 pairs are always enumerated");
    WindowRow {
        e,
        status: WindowStatus::InWindow {
            worst_margin,
            worst_pair,
            low_margin: worst_margin < opts.low_margin,
        },
        gamma_max: diag.gamma_max,
        n_star: conds.n_star,
        max_checked_order: conds.max_checked_order,
        tail_certified: conds.tail_certified,
        n_pairs: conds.pairs.len(),
    }
}

/// Window verdicts over a grid (parallel over energies).
pub fn window_scan(
    model: &SubstitutionModel,
    vertical: &VerticalOperator,
    grid: &EnergyGrid,
    scheme: &BoundaryScheme,
    opts: &WindowOptions,
) -> Vec<WindowRow> {
    grid.points()
        .par_iter()
        .map(|&e| window_point(model, vertical, e, scheme, opts))
        .collect()
}

/// Eigenvalue list of the linearization family at one energy.
#[derive(Clone, Debug)]
pub struct FrechetEntry {
    pub j: MultiIndex,
    pub jp: MultiIndex,
    /// Eigenvalues of `Θ_J Θ*_{J'} S` (the one-sided operators are the
    /// entries with `J' = 0`).
    pub eigenvalues: Vec<Complex64>,
}

/// Spectrum report of the linearized fixed-point map.
#[derive(Clone, Debug)]
pub struct FrechetReport {
    pub e: f64,
    /// Entries for `1 ≤ |J| + |J'| ≤ max_order`. `{0}` always belongs to the
    /// spectrum and is accounted for in the margin.
    pub entries: Vec<FrechetEntry>,
    /// `min |1 - λ|` over all listed eigenvalues together with `λ = 0`.
    pub margin_to_one: f64,
}

impl FrechetReport {
    /// Eigenvalues of the one-sided family `Θ_J S`, `1 ≤ |J| ≤ max_order`.
    pub fn one_sided(&self) -> Vec<Complex64> {
        self.entries
            .iter()
            .filter(|en| en.jp.order() == 0)
            .flat_map(|en| en.eigenvalues.iter().copied())
            .collect()
    }
}

/// Computes the eigenvalue lists of `Θ_J Θ*_{J'} S` for all
/// `1 ≤ |J| + |J'| ≤ max_order`, plus the margin to 1.
///
/// The degenerate pair `(0,0)` is excluded: the unrestricted linearization
/// would contribute `spec(S)` itself, which is not part of this family.
pub fn frechet_spectrum(
    model: &SubstitutionModel,
    vertical: &VerticalOperator,
    e: f64,
    max_order: u32,
    scheme: &BoundaryScheme,
) -> Result<FrechetReport> {
    let diag = shifted_diagonals(model, vertical, e, scheme)?;
    let s = model.s();
    let sf = model.as_f64();
    let mut entries = Vec::new();
    let mut margin = 1.0_f64; // |1 - 0| from the always-present eigenvalue 0
    for u in 1..=max_order {
        for wj in (0..=u).rev() {
            for j_idx in MultiIndex::of_order(vertical.m(), wj) {
                for jp_idx in MultiIndex::of_order(vertical.m(), u - wj) {
                    let tj = theta_diagonal(&diag, &j_idx);
                    let tjp = theta_diagonal(&diag, &jp_idx);
                    let mat = DMatrix::<Complex64>::from_fn(s, s, |p, q| {
                        tj[p] * tjp[p].conj() * sf[(p, q)]
                    });
                    let eigs = mat.schur().eigenvalues().ok_or(Error::Singular {
                        context: "Schur eigenvalues of linearization block".into(),
                    })?;
                    let eigenvalues: Vec<Complex64> = eigs.iter().copied().collect();
                    for lam in &eigenvalues {
                        margin = margin.min((Complex64::new(1.0, 0.0) - lam).norm());
                    }
                    entries.push(FrechetEntry {
                        j: j_idx.clone(),
                        jp: jp_idx,
                        eigenvalues,
                    });
                }
            }
        }
    }
    Ok(FrechetReport {
        e,
        entries,
        margin_to_one: margin,
    })
}
