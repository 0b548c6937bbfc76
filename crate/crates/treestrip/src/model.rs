//! Tree-strip models: substitution matrices, structural assumptions, truncated
//! strips, and disorder laws.
//!
//! A substitution matrix `S` over labels `{0, …, s-1}` generates a rooted tree
//! `T^(q)`: the root carries label `q`, and every vertex of label `p` has
//! `S[p][q']` forward neighbours of label `q'` (children grouped by label in
//! ascending order). The tree-strip is `T^(q) × {1, …, m}` with a symmetric
//! vertical operator `A` acting on each fiber and an i.i.d. random symmetric
//! potential `V(x)` per tree vertex.
//!
//! Structural assumptions on `S`:
//!
//! * **min-branching** — every row sum satisfies `Σ_q S[p][q] ≥ 2`;
//! * **irreducibility** — for each pair `(p, q)` some power has
//!   `(S^n)[p][q] > 0` (n ≤ s suffices);
//! * **norm bound** — `‖S‖₂ < K²` where `K = min_q S[q][q]`;
//! * **positive diagonal** — `S[q][q] ≥ 1` for all `q`.
//!
//! The norm bound implies the other diagonal-based conditions: `‖S‖₂ ≥ 1` for
//! any nonzero integer matrix, so `K² > ‖S‖₂ ≥ 1` forces `K ≥ 2`, which gives
//! both the positive diagonal and (via `Σ_q S[p][q] ≥ S[p][p] ≥ K`) the
//! min-branching bound.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default cap on `vertices × width` for truncated strips.
pub const DEFAULT_DOF_BUDGET: usize = 2_000_000;

/// Nonnegative integer substitution matrix generating a tree of finite cone
/// type.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubstitutionModel {
    mat: DMatrix<u64>,
}

impl SubstitutionModel {
    /// Builds a model from row-major entries. The matrix must be square,
    /// nonempty, and must contain at least one positive entry.
    pub fn new(rows: &[Vec<u64>]) -> Result<Self> {
        let s = rows.len();
        if s == 0 {
            return Err(Error::InvalidModel(
                "substitution matrix must be nonempty".into(),
            ));
        }
        if rows.iter().any(|r| r.len() != s) {
            return Err(Error::InvalidModel(format!(
                "substitution matrix must be square ({s} rows)"
            )));
        }
        let mat = DMatrix::from_fn(s, s, |p, q| rows[p][q]);
        if mat.iter().all(|&e| e == 0) {
            return Err(Error::InvalidModel(
                "substitution matrix must have a positive entry".into(),
            ));
        }
        Ok(Self { mat })
    }

    /// Single-label model `S = [[k]]` generating the rooted regular tree with
    /// forward branching number `k` (Bethe lattice of coordination `k + 1`
    /// away from the root).
    pub fn bethe(k: u64) -> Self {
        Self::new(&[vec![k]]).expect("positive branching number")
    }

    /// Number of labels `s`.
    pub fn s(&self) -> usize {
        self.mat.nrows()
    }

    /// Entry `S[p][q]`: number of label-`q` children of a label-`p` vertex.
    pub fn entry(&self, p: usize, q: usize) -> u64 {
        self.mat[(p, q)]
    }

    /// Row sum `Σ_q S[p][q]` — the forward branching number of label `p`.
    pub fn row_sum(&self, p: usize) -> u64 {
        self.mat.row(p).iter().sum()
    }

    /// All row sums.
    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.s()).map(|p| self.row_sum(p)).collect()
    }

    /// Largest forward branching number `max_p Σ_q S[p][q]`.
    pub fn max_row_sum(&self) -> u64 {
        self.row_sums().into_iter().max().unwrap_or(0)
    }

    /// `K = min_q S[q][q]`, the minimal diagonal entry.
    pub fn k_min_diag(&self) -> u64 {
        (0..self.s()).map(|q| self.entry(q, q)).min().unwrap_or(0)
    }

    /// Spectral norm `‖S‖₂` (largest singular value).
    pub fn spectral_norm(&self) -> f64 {
        self.as_f64().singular_values()[0]
    }

    /// The matrix as `f64` entries.
    pub fn as_f64(&self) -> DMatrix<f64> {
        self.mat.map(|e| e as f64)
    }

    /// The scaled model `b·S` (same tree family with multiplied branching).
    pub fn scaled(&self, b: u64) -> Self {
        Self {
            mat: self.mat.map(|e| e * b),
        }
    }
}

/// Result of the structural assumption checks, with witnesses.
#[derive(Clone, Debug)]
pub struct AssumptionReport {
    /// Every row sum is at least 2.
    pub min_branching: bool,
    /// `S` is irreducible (every label reaches every label).
    pub irreducible: bool,
    /// `‖S‖₂ < K²`.
    pub norm_bound: bool,
    /// Every diagonal entry is at least 1.
    pub positive_diagonal: bool,
    /// `K = min_q S[q][q]`.
    pub k: u64,
    /// `‖S‖₂`.
    pub spectral_norm: f64,
    /// Row sums, for reporting.
    pub row_sums: Vec<u64>,
    /// Pairs `(p, q)` with no `n ≥ 1` such that `(S^n)[p][q] > 0`
    /// (empty iff irreducible).
    pub irreducibility_failures: Vec<(usize, usize)>,
}

impl AssumptionReport {
    /// True when the norm-bound assumption (the strongest of the set) holds
    /// together with irreducibility — the hypotheses under which the energy
    /// window analysis is valid.
    pub fn all_hold(&self) -> bool {
        self.min_branching && self.irreducible && self.norm_bound && self.positive_diagonal
    }
}

/// Checks the structural assumptions on a substitution matrix.
///
/// Irreducibility is decided by boolean reachability: `q` is reachable from
/// `p` iff `(S^n)[p][q] > 0` for some `1 ≤ n ≤ s` (longer paths cannot reach
/// new labels).
pub fn check_assumptions(model: &SubstitutionModel) -> AssumptionReport {
    let s = model.s();
    let row_sums = model.row_sums();
    let min_branching = row_sums.iter().all(|&r| r >= 2);
    let positive_diagonal = (0..s).all(|q| model.entry(q, q) >= 1);
    let k = model.k_min_diag();
    let spectral_norm = model.spectral_norm();
    let norm_bound = spectral_norm < (k * k) as f64;

    // Boolean reachability within <= s steps.
    let adj: Vec<Vec<bool>> = (0..s)
        .map(|p| (0..s).map(|q| model.entry(p, q) > 0).collect())
        .collect();
    let mut reach = adj.clone();
    let mut power = adj.clone();
    for _ in 1..s {
        let mut next = vec![vec![false; s]; s];
        for p in 0..s {
            for r in 0..s {
                if power[p][r] {
                    for q in 0..s {
                        if adj[r][q] {
                            next[p][q] = true;
                        }
                    }
                }
            }
        }
        for p in 0..s {
            for q in 0..s {
                reach[p][q] |= next[p][q];
            }
        }
        power = next;
    }
    let mut irreducibility_failures = Vec::new();
    for p in 0..s {
        for q in 0..s {
            if !reach[p][q] {
                irreducibility_failures.push((p, q));
            }
        }
    }

    AssumptionReport {
        min_branching,
        irreducible: irreducibility_failures.is_empty(),
        norm_bound,
        positive_diagonal,
        k,
        spectral_norm,
        row_sums,
        irreducibility_failures,
    }
}

/// Symmetric operator on the strip cross-section `{1, …, m}`, stored together
/// with its spectral decomposition `A = U·diag(a)·Uᵀ` (eigenvalues ascending,
/// `U` orthogonal).
#[derive(Clone, Debug)]
pub struct VerticalOperator {
    a: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    diagonalizer: DMatrix<f64>,
}

impl VerticalOperator {
    /// Symmetry tolerance on `|A - Aᵀ|` entries.
    pub const SYMMETRY_TOL: f64 = 1e-12;

    /// Builds the operator, validating symmetry and computing the
    /// eigendecomposition with eigenvalues sorted ascending.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(Error::InvalidModel(
                "vertical operator must be square and nonempty".into(),
            ));
        }
        let mut max_asym: f64 = 0.0;
        for j in 0..a.nrows() {
            for k in 0..a.ncols() {
                max_asym = max_asym.max((a[(j, k)] - a[(k, j)]).abs());
            }
        }
        if max_asym > Self::SYMMETRY_TOL {
            return Err(Error::NonSymmetricVertical { max_asym });
        }
        let sym = nalgebra::SymmetricEigen::new(a.clone());
        let mut order: Vec<usize> = (0..a.nrows()).collect();
        order.sort_by(|&i, &j| {
            sym.eigenvalues[i]
                .partial_cmp(&sym.eigenvalues[j])
                .expect("finite eigenvalues")
        });
        let eigenvalues = DVector::from_fn(a.nrows(), |j, _| sym.eigenvalues[order[j]]);
        let diagonalizer =
            DMatrix::from_fn(a.nrows(), a.ncols(), |j, k| sym.eigenvectors[(j, order[k])]);
        Ok(Self {
            a,
            eigenvalues,
            diagonalizer,
        })
    }

    /// Builds from row-major entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidModel(
                "vertical operator must be square".into(),
            ));
        }
        Self::new(DMatrix::from_fn(m, m, |j, k| rows[j][k]))
    }

    /// Diagonal operator `diag(d)`.
    pub fn diagonal(d: &[f64]) -> Self {
        Self::new(DMatrix::from_diagonal(&DVector::from_row_slice(d)))
            .expect("diagonal matrices are symmetric")
    }

    /// The zero operator on an `m`-point cross-section (trivial strip for
    /// `m = 1`).
    pub fn zero(m: usize) -> Self {
        Self::new(DMatrix::zeros(m, m)).expect("zero matrix is symmetric")
    }

    /// Cross-section size `m`.
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// The operator matrix.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Eigenvalues `a_1 ≤ … ≤ a_m`.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// Orthogonal diagonalizer `U` with `A = U·diag(a)·Uᵀ`.
    pub fn diagonalizer(&self) -> &DMatrix<f64> {
        &self.diagonalizer
    }

    /// Operator norm `max_j |a_j|`.
    pub fn operator_norm(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, &a| m.max(a.abs()))
    }
}

/// Single-site law for diagonal i.i.d. disorder.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum SiteLaw {
    /// Uniform on `[-half_width, half_width]`.
    Uniform { half_width: f64 },
    /// Centered Gaussian with standard deviation `std`.
    Gaussian { std: f64 },
}

impl SiteLaw {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            SiteLaw::Uniform { half_width } => rng.random_range(-half_width..=half_width),
            SiteLaw::Gaussian { std } => Normal::new(0.0, std)
                .expect("valid std")
                .sample(rng),
        }
    }

    /// Scalar characteristic function `E[e^{-i t v}]` (real for these
    /// symmetric laws).
    fn characteristic(&self, t: f64) -> f64 {
        match *self {
            SiteLaw::Uniform { half_width } => {
                let x = half_width * t;
                if x.abs() < 1e-12 {
                    1.0 - x * x / 6.0
                } else {
                    x.sin() / x
                }
            }
            SiteLaw::Gaussian { std } => (-0.5 * std * std * t * t).exp(),
        }
    }

    /// Variance of the law.
    pub fn variance(&self) -> f64 {
        match *self {
            SiteLaw::Uniform { half_width } => half_width * half_width / 3.0,
            SiteLaw::Gaussian { std } => std * std,
        }
    }
}

/// Distribution of the random symmetric potential matrix `V(x)`.
///
/// All supplied laws have finite moments of every order (bounded support or
/// Gaussian tails), as required by the moment assumption on the disorder.
#[derive(Clone, Debug)]
pub enum DisorderModel {
    /// `V = 0` (deterministic free strip).
    None,
    /// `V = diag(v_1, …, v_m)` with i.i.d. entries from a single-site law.
    DiagonalIid { law: SiteLaw },
    /// Gaussian orthogonal ensemble scaling: independent entries
    /// `V[j][j] ~ N(0, 2σ²)`, `V[j][k] = V[k][j] ~ N(0, σ²)` for `j < k`.
    Goe { sigma: f64 },
    /// Uniform draw from a fixed finite list of symmetric matrices
    /// (a one-element list gives a deterministic potential).
    FixedMatrixList { matrices: Vec<DMatrix<f64>> },
}

impl DisorderModel {
    /// Validates shape constraints against the cross-section size.
    pub fn validate(&self, m: usize) -> Result<()> {
        if let DisorderModel::FixedMatrixList { matrices } = self {
            if matrices.is_empty() {
                return Err(Error::InvalidModel(
                    "fixed-matrix-list disorder needs at least one matrix".into(),
                ));
            }
            for (i, v) in matrices.iter().enumerate() {
                if v.nrows() != m || v.ncols() != m {
                    return Err(Error::InvalidModel(format!(
                        "fixed matrix {i} is {}x{}, expected {m}x{m}",
                        v.nrows(),
                        v.ncols()
                    )));
                }
                let mut asym: f64 = 0.0;
                for j in 0..m {
                    for k in 0..m {
                        asym = asym.max((v[(j, k)] - v[(k, j)]).abs());
                    }
                }
                if asym > VerticalOperator::SYMMETRY_TOL {
                    return Err(Error::InvalidModel(format!(
                        "fixed matrix {i} is not symmetric (max asymmetry {asym:.3e})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Draws one symmetric `m×m` potential matrix.
    pub fn sample(&self, m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
        match self {
            DisorderModel::None => DMatrix::zeros(m, m),
            DisorderModel::DiagonalIid { law } => {
                DMatrix::from_diagonal(&DVector::from_fn(m, |_, _| law.sample(rng)))
            }
            DisorderModel::Goe { sigma } => {
                let diag = Normal::new(0.0, sigma * std::f64::consts::SQRT_2)
                    .expect("valid sigma");
                let off = Normal::new(0.0, *sigma).expect("valid sigma");
                let mut v = DMatrix::zeros(m, m);
                for j in 0..m {
                    v[(j, j)] = diag.sample(rng);
                    for k in (j + 1)..m {
                        let x = off.sample(rng);
                        v[(j, k)] = x;
                        v[(k, j)] = x;
                    }
                }
                v
            }
            DisorderModel::FixedMatrixList { matrices } => {
                matrices[rng.random_range(0..matrices.len())].clone()
            }
        }
    }

    /// Matrix characteristic function `h(M) = E[e^{-i Tr(M V)}]` for a real
    /// symmetric argument `M`.
    ///
    /// Closed forms: `h ≡ 1` for no disorder; `Π_j E[e^{-i M[j][j] v}]` for
    /// diagonal i.i.d.; `exp(-σ² Tr(M²))` for the Gaussian ensemble (from
    /// `Var Tr(MV) = 2σ² Tr M²`); the empirical average for a fixed list.
    pub fn characteristic_function(&self, msym: &DMatrix<f64>) -> Complex64 {
        match self {
            DisorderModel::None => Complex64::new(1.0, 0.0),
            DisorderModel::DiagonalIid { law } => {
                let mut h = 1.0;
                for j in 0..msym.nrows() {
                    h *= law.characteristic(msym[(j, j)]);
                }
                Complex64::new(h, 0.0)
            }
            DisorderModel::Goe { sigma } => {
                let tr_m2: f64 = msym.iter().map(|x| x * x).sum();
                Complex64::new((-sigma * sigma * tr_m2).exp(), 0.0)
            }
            DisorderModel::FixedMatrixList { matrices } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for v in matrices {
                    let tr: f64 = (msym * v).trace();
                    acc += Complex64::new(0.0, -tr).exp();
                }
                acc / matrices.len() as f64
            }
        }
    }
}

/// One vertex of a truncated tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StripVertex {
    /// Cone-type label.
    pub label: usize,
    /// Parent index in breadth-first order (`None` for the root).
    pub parent: Option<usize>,
    /// Distance from the root.
    pub depth: usize,
}

/// Breadth-first truncation of the tree `T^(root_label)` to a finite depth,
/// recording the strip width `m`. Leaves at the last depth simply have no
/// children (Dirichlet truncation).
#[derive(Clone, Debug)]
pub struct TruncatedStrip {
    root_label: usize,
    depth: usize,
    m: usize,
    vertices: Vec<StripVertex>,
    /// Children of vertex `v` occupy the contiguous BFS index range
    /// `children[v].0 .. children[v].1`, grouped by label ascending.
    children: Vec<(usize, usize)>,
    counts_per_depth: Vec<usize>,
}

impl TruncatedStrip {
    /// Root label `q` of the cone `T^(q)`.
    pub fn root_label(&self) -> usize {
        self.root_label
    }

    /// Truncation depth.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Strip width `m`.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of tree vertices.
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Total matrix dimension `m × n_vertices`.
    pub fn dof(&self) -> usize {
        self.m * self.vertices.len()
    }

    /// Vertex table in BFS order (index 0 is the root).
    pub fn vertices(&self) -> &[StripVertex] {
        &self.vertices
    }

    /// BFS index range of the children of vertex `v`.
    pub fn children_of(&self, v: usize) -> std::ops::Range<usize> {
        self.children[v].0..self.children[v].1
    }

    /// Vertex counts per depth `0..=depth`.
    pub fn counts_per_depth(&self) -> &[usize] {
        &self.counts_per_depth
    }
}

/// Builds the depth-`d` truncation of `T^(root_label) × {1..m}`, rejecting
/// strips whose total dimension `m × vertices` exceeds `dof_budget`
/// (default [`DEFAULT_DOF_BUDGET`]).
pub fn build_truncated_strip(
    model: &SubstitutionModel,
    root_label: usize,
    depth: usize,
    m: usize,
    dof_budget: Option<usize>,
) -> Result<TruncatedStrip> {
    let s = model.s();
    if root_label >= s {
        return Err(Error::InvalidModel(format!(
            "root label {root_label} out of range (s = {s})"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidModel("strip width m must be positive".into()));
    }
    let budget = dof_budget.unwrap_or(DEFAULT_DOF_BUDGET);

    // Count vertices per depth first so oversized requests fail fast.
    let mut label_counts = vec![0u128; s];
    label_counts[root_label] = 1;
    let mut counts_per_depth = vec![1usize];
    let mut total: u128 = 1;
    for _ in 0..depth {
        let mut next = vec![0u128; s];
        for p in 0..s {
            for q in 0..s {
                next[q] += label_counts[p] * model.entry(p, q) as u128;
            }
        }
        let level: u128 = next.iter().sum();
        total += level;
        if total * m as u128 > budget as u128 {
            return Err(Error::DofBudgetExceeded {
                needed: (total * m as u128).min(usize::MAX as u128) as usize,
                budget,
                vertices: total.min(usize::MAX as u128) as usize,
                width: m,
            });
        }
        counts_per_depth.push(level as usize);
        label_counts = next;
    }

    let n = total as usize;
    let mut vertices = Vec::with_capacity(n);
    let mut children = vec![(0usize, 0usize); n];
    vertices.push(StripVertex {
        label: root_label,
        parent: None,
        depth: 0,
    });
    let mut processed = 0usize;
    while processed < vertices.len() {
        let v = processed;
        processed += 1;
        let StripVertex {
            label: p,
            depth: dv,
            ..
        } = vertices[v];
        if dv == depth {
            let end = vertices.len();
            children[v] = (end, end);
            continue;
        }
        let start = vertices.len();
        for q in 0..s {
            for _ in 0..model.entry(p, q) {
                vertices.push(StripVertex {
                    label: q,
                    parent: Some(v),
                    depth: dv + 1,
                });
            }
        }
        children[v] = (start, vertices.len());
    }
    debug_assert_eq!(vertices.len(), n);

    Ok(TruncatedStrip {
        root_label,
        depth,
        m,
        vertices,
        children,
        counts_per_depth,
    })
}

/// Disorder section of the JSON model configuration.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisorderConfig {
    None,
    DiagonalIid {
        #[serde(flatten)]
        law: SiteLaw,
    },
    Goe {
        sigma: f64,
    },
    FixedMatrixList {
        matrices: Vec<Vec<Vec<f64>>>,
    },
}

/// JSON model configuration:
///
/// ```json
/// {
///   "S": [[2, 1], [2, 2]],
///   "A": [[-0.5, 0.0], [0.0, 0.5]],
///   "disorder": {"kind": "diagonal-iid", "law": "uniform", "half_width": 1.0},
///   "lambda": 0.1
/// }
/// ```
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelConfig {
    #[serde(rename = "S")]
    pub s: Vec<Vec<u64>>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub disorder: DisorderConfig,
    pub lambda: f64,
}

/// Fully validated in-memory model.
#[derive(Clone, Debug)]
pub struct ModelInstance {
    pub substitution: SubstitutionModel,
    pub vertical: VerticalOperator,
    pub disorder: DisorderModel,
    pub lambda: f64,
}

impl ModelConfig {
    /// Parses a configuration from JSON text.
    pub fn parse(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Config(e.to_string()))
    }

    /// Validates and builds the runtime model.
    pub fn build(&self) -> Result<ModelInstance> {
        let substitution = SubstitutionModel::new(&self.s)?;
        let vertical = VerticalOperator::from_rows(&self.a)?;
        let disorder = match &self.disorder {
            DisorderConfig::None => DisorderModel::None,
            DisorderConfig::DiagonalIid { law } => DisorderModel::DiagonalIid { law: *law },
            DisorderConfig::Goe { sigma } => {
                if *sigma <= 0.0 {
                    return Err(Error::Config("goe sigma must be positive".into()));
                }
                DisorderModel::Goe { sigma: *sigma }
            }
            DisorderConfig::FixedMatrixList { matrices } => {
                let m = vertical.m();
                let mats = matrices
                    .iter()
                    .map(|rows| {
                        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                            return Err(Error::Config(format!(
                                "fixed matrix must be {m}x{m}"
                            )));
                        }
                        Ok(DMatrix::from_fn(m, m, |j, k| rows[j][k]))
                    })
                    .collect::<Result<Vec<_>>>()?;
                DisorderModel::FixedMatrixList { matrices: mats }
            }
        };
        disorder.validate(vertical.m())?;
        if !self.lambda.is_finite() {
            return Err(Error::Config("lambda must be finite".into()));
        }
        Ok(ModelInstance {
            substitution,
            vertical,
            disorder,
            lambda: self.lambda,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_label() -> SubstitutionModel {
        SubstitutionModel::new(&[vec![2, 1], vec![2, 2]]).unwrap()
    }

    fn fibonacci() -> SubstitutionModel {
        SubstitutionModel::new(&[vec![0, 1], vec![1, 1]]).unwrap()
    }

    #[test]
    fn rejects_degenerate_matrices() {
        assert!(SubstitutionModel::new(&[]).is_err());
        assert!(SubstitutionModel::new(&[vec![0, 0], vec![0, 0]]).is_err());
        assert!(SubstitutionModel::new(&[vec![1, 2]]).is_err());
    }

    #[test]
    fn assumptions_hold_for_two_label_example() {
        let report = check_assumptions(&two_label());
        assert!(report.min_branching);
        assert!(report.irreducible);
        assert!(report.norm_bound);
        assert!(report.positive_diagonal);
        assert!(report.all_hold());
        assert_eq!(report.k, 2);
        assert_eq!(report.row_sums, vec![3, 4]);
        // ||S||_2 = sqrt((13 + sqrt(153)) / 2), largest singular value of
        // [[2,1],[2,2]]; well below K^2 = 4.
        assert_relative_eq!(
            report.spectral_norm,
            ((13.0 + 153.0_f64.sqrt()) / 2.0).sqrt(),
            epsilon = 1e-12
        );
        assert!(report.spectral_norm < 4.0);
    }

    #[test]
    fn assumptions_hold_for_wide_example() {
        // [[4,3],[2,3]]: K = 3, ||S||_2 ≈ 6.085 < 9.
        let model = SubstitutionModel::new(&[vec![4, 3], vec![2, 3]]).unwrap();
        let report = check_assumptions(&model);
        assert!(report.all_hold());
        assert_eq!(report.k, 3);
        assert_relative_eq!(
            report.spectral_norm,
            ((38.0 + 1300.0_f64.sqrt()) / 2.0).sqrt(),
            epsilon = 1e-12
        );
        assert!(report.spectral_norm < 9.0);
    }

    #[test]
    fn fibonacci_tree_fails_norm_and_branching() {
        let report = check_assumptions(&fibonacci());
        assert!(!report.min_branching); // first row sums to 1
        assert!(report.irreducible);
        assert!(!report.positive_diagonal); // S[0][0] = 0
        assert!(!report.norm_bound); // K = 0
        assert_eq!(report.k, 0);
    }

    #[test]
    fn norm_bound_fails_while_diagonal_positive() {
        // [[1,1],[1,2]]: K = 1 but ||S||_2 ≈ 2.618 >= 1.
        let model = SubstitutionModel::new(&[vec![1, 1], vec![1, 2]]).unwrap();
        let report = check_assumptions(&model);
        assert!(report.positive_diagonal);
        assert!(report.min_branching);
        assert!(!report.norm_bound);
    }

    #[test]
    fn norm_bound_implies_weaker_assumptions() {
        // Sweep small matrices; whenever the norm bound holds the diagonal
        // and branching conditions must follow.
        let mut checked = 0;
        for a in 0..5u64 {
            for b in 0..4u64 {
                for c in 0..4u64 {
                    for d in 0..5u64 {
                        let Ok(model) = SubstitutionModel::new(&[vec![a, b], vec![c, d]]) else {
                            continue;
                        };
                        let r = check_assumptions(&model);
                        if r.norm_bound {
                            checked += 1;
                            assert!(r.positive_diagonal, "S = [[{a},{b}],[{c},{d}]]");
                            assert!(r.min_branching, "S = [[{a},{b}],[{c},{d}]]");
                            assert!(r.k >= 2);
                        }
                    }
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn reducible_matrix_reports_failing_pairs() {
        // Label 1 is unreachable from label 0.
        let model = SubstitutionModel::new(&[vec![2, 0], vec![1, 2]]).unwrap();
        let report = check_assumptions(&model);
        assert!(!report.irreducible);
        assert_eq!(report.irreducibility_failures, vec![(0, 1)]);
    }

    #[test]
    fn truncation_counts_match_branching_arithmetic() {
        // [[2,1],[2,2]] from label 0, depth 1: root + 2 label-0 + 1 label-1.
        let strip = build_truncated_strip(&two_label(), 0, 1, 2, None).unwrap();
        assert_eq!(strip.n_vertices(), 4);
        assert_eq!(strip.dof(), 8);
        assert_eq!(strip.counts_per_depth(), &[1, 3]);
        let labels: Vec<usize> = strip.vertices().iter().map(|v| v.label).collect();
        assert_eq!(labels, vec![0, 0, 0, 1]); // children grouped by label ascending
        assert_eq!(strip.children_of(0), 1..4);
        for v in 1..4 {
            assert_eq!(strip.vertices()[v].parent, Some(0));
            assert_eq!(strip.children_of(v), 4..4);
        }
    }

    #[test]
    fn fibonacci_counts_follow_fibonacci_numbers() {
        // For [[0,1],[1,1]] rooted at label 0, the number of vertices at
        // depth n is the Fibonacci number f_{n+1}: 1, 1, 2, 3, 5, …
        let strip = build_truncated_strip(&fibonacci(), 0, 5, 1, None).unwrap();
        assert_eq!(strip.counts_per_depth(), &[1, 1, 2, 3, 5, 8]);
        assert_eq!(strip.n_vertices(), 20);
    }

    #[test]
    fn bethe_counts_double() {
        let strip = build_truncated_strip(&SubstitutionModel::bethe(2), 0, 3, 1, None).unwrap();
        assert_eq!(strip.counts_per_depth(), &[1, 2, 4, 8]);
    }

    #[test]
    fn dof_budget_is_enforced() {
        let err = build_truncated_strip(&SubstitutionModel::bethe(2), 0, 25, 1, Some(1000))
            .unwrap_err();
        match err {
            Error::DofBudgetExceeded { budget, .. } => assert_eq!(budget, 1000),
            other => panic!("expected budget error, got {other}"),
        }
    }

    #[test]
    fn vertical_operator_diagonalizes_orthogonally() {
        let a = VerticalOperator::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 0.0],
        ])
        .unwrap();
        // Path graph on 3 points: eigenvalues -sqrt(2), 0, sqrt(2).
        let eigs = a.eigenvalues();
        assert_relative_eq!(eigs[0], -(2.0_f64.sqrt()), epsilon = 1e-12);
        assert_relative_eq!(eigs[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(eigs[2], 2.0_f64.sqrt(), epsilon = 1e-12);
        let u = a.diagonalizer();
        let gram = u.transpose() * u;
        let err = (&gram - DMatrix::<f64>::identity(3, 3)).abs().max();
        assert!(err <= 1e-12, "diagonalizer not orthogonal: {err:.3e}");
        let rebuilt = u * DMatrix::from_diagonal(eigs) * u.transpose();
        assert!((rebuilt - a.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn vertical_operator_rejects_asymmetry() {
        let err = VerticalOperator::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]).unwrap_err();
        match err {
            Error::NonSymmetricVertical { max_asym } => {
                assert_relative_eq!(max_asym, 0.5, epsilon = 1e-15)
            }
            other => panic!("expected symmetry error, got {other}"),
        }
    }

    #[test]
    fn disorder_samples_match_stated_moments() {
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(1);

        // Uniform half-width 1: mean 0, variance 1/3.
        let law = DisorderModel::DiagonalIid {
            law: SiteLaw::Uniform { half_width: 1.0 },
        };
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let v = law.sample(1, &mut rng)[(0, 0)];
            sum += v;
            sum2 += v * v;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let sigma_mean = (1.0 / 3.0_f64).sqrt() / (n as f64).sqrt();
        assert!(mean.abs() < 5.0 * sigma_mean, "uniform mean {mean}");
        assert!((var - 1.0 / 3.0).abs() < 0.01, "uniform variance {var}");

        // GOE sigma = 0.7, m = 3: E[Tr V^2] = sigma^2 m (m + 1).
        let goe = DisorderModel::Goe { sigma: 0.7 };
        let mut tr2 = 0.0;
        let n_goe = 50_000;
        for _ in 0..n_goe {
            let v = goe.sample(3, &mut rng);
            assert!((v.clone() - v.transpose()).abs().max() == 0.0);
            tr2 += (&v * &v).trace();
        }
        let expected = 0.7 * 0.7 * 3.0 * 4.0;
        assert!(
            (tr2 / n_goe as f64 - expected).abs() < 0.05 * expected,
            "GOE Tr V^2: {} vs {expected}",
            tr2 / n_goe as f64
        );
    }

    #[test]
    fn characteristic_functions_match_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let m = DMatrix::from_row_slice(2, 2, &[0.3, -0.2, -0.2, 0.9]);
        let models = vec![
            DisorderModel::DiagonalIid {
                law: SiteLaw::Uniform { half_width: 1.2 },
            },
            DisorderModel::DiagonalIid {
                law: SiteLaw::Gaussian { std: 0.8 },
            },
            DisorderModel::Goe { sigma: 0.5 },
        ];
        for dm in models {
            let h = dm.characteristic_function(&m);
            let mut acc = Complex64::new(0.0, 0.0);
            for _ in 0..n {
                let v = dm.sample(2, &mut rng);
                let tr = (&m * &v).trace();
                acc += Complex64::new(0.0, -tr).exp();
            }
            let mc = acc / n as f64;
            assert!(
                (mc - h).norm() < 6.0 / (n as f64).sqrt() + 1e-3,
                "{dm:?}: mc = {mc}, closed form = {h}"
            );
        }
    }

    #[test]
    fn fixed_list_characteristic_is_exact_average() {
        let v1 = DMatrix::from_row_slice(1, 1, &[0.4]);
        let v2 = DMatrix::from_row_slice(1, 1, &[-1.1]);
        let dm = DisorderModel::FixedMatrixList {
            matrices: vec![v1, v2],
        };
        let m = DMatrix::from_row_slice(1, 1, &[2.0]);
        let h = dm.characteristic_function(&m);
        let expected = (Complex64::new(0.0, -0.8).exp() + Complex64::new(0.0, 2.2).exp()) / 2.0;
        assert!((h - expected).norm() < 1e-15);

        // A single-matrix list is the constant potential.
        let dm1 = DisorderModel::FixedMatrixList {
            matrices: vec![DMatrix::from_row_slice(1, 1, &[0.25])],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            assert_eq!(dm1.sample(1, &mut rng)[(0, 0)], 0.25);
        }
    }

    #[test]
    fn gaussian_characteristic_uses_trace_square() {
        // h(M) = exp(-sigma^2 Tr M^2) for the GOE law.
        let dm = DisorderModel::Goe { sigma: 0.9 };
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -2.0]);
        let tr_m2 = (&m * &m).trace();
        let h = dm.characteristic_function(&m);
        assert_relative_eq!(h.re, (-0.81 * tr_m2).exp(), epsilon = 1e-14);
        assert_eq!(h.im, 0.0);
    }

    #[test]
    fn config_roundtrip_and_build() {
        let json = r#"{
            "S": [[2, 1], [2, 2]],
            "A": [[-0.5, 0.0], [0.0, 0.5]],
            "disorder": {"kind": "diagonal-iid", "law": "uniform", "half_width": 1.0},
            "lambda": 0.1
        }"#;
        let cfg = ModelConfig::parse(json).unwrap();
        let inst = cfg.build().unwrap();
        assert_eq!(inst.substitution.s(), 2);
        assert_eq!(inst.vertical.m(), 2);
        assert_eq!(inst.lambda, 0.1);
        assert_eq!(
            inst.vertical.eigenvalues().as_slice(),
            &[-0.5, 0.5],
            "diagonal vertical operator keeps its entries as eigenvalues"
        );
        let back = serde_json::to_string(&cfg).unwrap();
        let cfg2 = ModelConfig::parse(&back).unwrap();
        assert_eq!(cfg, cfg2);

        for bad in [
            r#"{"S": [[2,1]], "A": [[0.0]], "disorder": {"kind": "none"}, "lambda": 0}"#,
            r#"{"S": [[2]], "A": [[0.0, 1.0]], "disorder": {"kind": "none"}, "lambda": 0}"#,
            r#"{"S": [[2]], "A": [[0.0]], "disorder": {"kind": "goe", "sigma": -1.0}, "lambda": 0}"#,
        ] {
            assert!(
                ModelConfig::parse(bad).and_then(|c| c.build().map(|_| ())).is_err(),
                "config should be rejected: {bad}"
            );
        }
    }

    #[test]
    fn scaled_model_multiplies_entries() {
        let m = two_label().scaled(3);
        assert_eq!(m.entry(0, 0), 6);
        assert_eq!(m.entry(0, 1), 3);
        assert_eq!(m.row_sums(), vec![9, 12]);
    }
}
