//! Hypothesis classes over `S x A` with values in `[0, H + 1]`.
//!
//! Three classes are supported: the full tabular class, the linear class
//! `{w^T phi : ||w||_2 <= 2H sqrt(d)}`, and the sparse linear class
//! `{w^T phi : ||w||_inf <= 2H sqrt(d), ||w||_0 <= 2s}`. Member functions are
//! evaluated with clipping into `[0, H + 1]`.
//!
//! For the linear classes, the least-squares objective and the confidence
//! regions used for widths are expressed on the raw predictor `w^T phi`, i.e.
//! in parameter space; clipping is applied only when reading a value out.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, norm2, power_iteration_max, quad_form, to_dvec, SymEig};
use crate::mdp::{Action, EpisodicMdp, State};
use crate::rng::{derive_seed, seeded};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionSpaceError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("covering resolution must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("handle does not belong to the class: {0}")]
    NotMember(String),
    #[error("feature map violates the class precondition: {0}")]
    FeatureBound(String),
    #[error("class needs a linear MDP with the matching regime: {0}")]
    IncompatibleMdp(String),
    #[error("brute force supports at most 4 free parameters, got {0}")]
    TooManyParameters(usize),
    #[error("support enumeration supports dimension <= 12, got {0}")]
    DimensionTooLarge(usize),
    #[error("grid of {0} points is too fine")]
    GridTooFine(u128),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKind {
    Tabular,
    Linear,
    SparseLinear,
}

/// Constants of the ball-covering bounds used for `ln N(F, eps)` and `ln N(S x A, eps)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverConstants {
    /// `c` in `d ln(1 + c H sqrt(d) / eps)`.
    pub function_factor: f64,
    /// `c` in `d ln(1 + c / eps)`.
    pub state_action_factor: f64,
    /// Multiplier applied to every log covering number.
    pub scale: f64,
}

impl Default for CoverConstants {
    fn default() -> Self {
        Self {
            function_factor: 12.0,
            state_action_factor: 6.0,
            scale: 1.0,
        }
    }
}

/// An evaluable hypothesis class with ERM, norms, covering numbers and widths.
#[derive(Debug, Clone)]
pub struct FunctionClass {
    kind: ClassKind,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    /// Indexed by `s * A + a`; empty for the tabular class.
    features: Arc<Vec<Vec<f64>>>,
    dim: usize,
    max_nonzeros: usize,
    weight_bound: f64,
    covers: CoverConstants,
}

/// Parameters of one member function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionHandle {
    pub class: ClassKind,
    /// Table indexed by `s * A + a` (tabular) or weight vector (linear classes).
    pub params: Vec<f64>,
}

/// Multiset of state-action pairs. Serialized as `[[s, a, count], ...]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<(State, Action, u64)>", into = "Vec<(State, Action, u64)>")]
pub struct StateActionSet {
    counts: BTreeMap<(State, Action), u64>,
    total: u64,
}

impl From<Vec<(State, Action, u64)>> for StateActionSet {
    fn from(v: Vec<(State, Action, u64)>) -> Self {
        let mut out = Self::new();
        for (s, a, n) in v {
            out.insert(s, a, n);
        }
        out
    }
}

impl From<StateActionSet> for Vec<(State, Action, u64)> {
    fn from(z: StateActionSet) -> Self {
        z.counts.into_iter().map(|((s, a), n)| (s, a, n)).collect()
    }
}

impl StateActionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, s: State, a: Action, multiplicity: u64) {
        if multiplicity == 0 {
            return;
        }
        *self.counts.entry((s, a)).or_insert(0) += multiplicity;
        self.total += multiplicity;
    }

    pub fn count(&self, s: State, a: Action) -> u64 {
        self.counts.get(&(s, a)).copied().unwrap_or(0)
    }

    /// `|Z|`, counting multiplicity.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of distinct pairs.
    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = ((State, Action), u64)> + '_ {
        self.counts.iter().map(|(k, v)| (*k, *v))
    }
}

impl FromIterator<(State, Action)> for StateActionSet {
    fn from_iter<I: IntoIterator<Item = (State, Action)>>(iter: I) -> Self {
        let mut z = StateActionSet::new();
        for (s, a) in iter {
            z.insert(s, a, 1);
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub state: State,
    pub action: Action,
    pub target: f64,
}

/// Multiset of regression triples `(s, a, y)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledSet {
    pub samples: Vec<LabeledSample>,
}

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: State, action: Action, target: f64) {
        self.samples.push(LabeledSample {
            state,
            action,
            target,
        });
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Result of an empirical risk minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct ErmFit {
    pub handle: FunctionHandle,
    /// Sum of squared residuals at `handle`.
    pub objective: f64,
    /// False when an iterative solver stopped on its iteration cap.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WidthMethod {
    /// Empty dataset: the confidence set is the whole class.
    Unconstrained,
    TabularClosedForm,
    LinearClosedForm,
    /// Projected-gradient ascent; the value is a lower bound on the true width.
    ProjectedAscent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthEstimate {
    pub value: f64,
    pub method: WidthMethod,
}

impl WidthEstimate {
    pub fn is_lower_bound(&self) -> bool {
        self.method == WidthMethod::ProjectedAscent
    }
}

/// Number of restarts for the projected-ascent width solver.
pub const WIDTH_ASCENT_RESTARTS: usize = 50;
const ASCENT_ITERS: usize = 200;
const DYKSTRA_ITERS: usize = 60;

/// Iterative hard thresholding settings for the sparse ERM.
pub const IHT_RESTARTS: usize = 10;
pub const IHT_ITERS: usize = 500;

impl FunctionClass {
    pub fn tabular(n_states: usize, n_actions: usize, horizon: usize) -> Self {
        Self {
            kind: ClassKind::Tabular,
            n_states,
            n_actions,
            horizon,
            features: Arc::new(Vec::new()),
            dim: n_states * n_actions,
            max_nonzeros: n_states * n_actions,
            weight_bound: (horizon + 1) as f64,
            covers: CoverConstants::default(),
        }
    }

    /// Dense linear class; requires `||phi(s,a)||_2 <= 1`.
    pub fn linear(
        features: Vec<Vec<f64>>,
        n_states: usize,
        n_actions: usize,
        horizon: usize,
    ) -> Result<Self, FunctionSpaceError> {
        let dim = check_feature_table(&features, n_states, n_actions)?;
        for (i, phi) in features.iter().enumerate() {
            if norm2(phi) > 1.0 + 1e-12 {
                return Err(FunctionSpaceError::FeatureBound(format!(
                    "||phi||_2 > 1 at index {i}"
                )));
            }
        }
        Ok(Self {
            kind: ClassKind::Linear,
            n_states,
            n_actions,
            horizon,
            features: Arc::new(features),
            dim,
            max_nonzeros: dim,
            weight_bound: 2.0 * horizon as f64 * (dim as f64).sqrt(),
            covers: CoverConstants::default(),
        })
    }

    /// Sparse linear class with at most `2 * sparsity` nonzero weights;
    /// requires `||phi(s,a)||_inf <= 1`.
    pub fn sparse_linear(
        features: Vec<Vec<f64>>,
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        sparsity: usize,
    ) -> Result<Self, FunctionSpaceError> {
        let dim = check_feature_table(&features, n_states, n_actions)?;
        if sparsity == 0 {
            return Err(FunctionSpaceError::FeatureBound(
                "sparsity must be positive".into(),
            ));
        }
        for (i, phi) in features.iter().enumerate() {
            if phi.iter().any(|x| x.abs() > 1.0 + 1e-12) {
                return Err(FunctionSpaceError::FeatureBound(format!(
                    "||phi||_inf > 1 at index {i}"
                )));
            }
        }
        Ok(Self {
            kind: ClassKind::SparseLinear,
            n_states,
            n_actions,
            horizon,
            features: Arc::new(features),
            dim,
            max_nonzeros: (2 * sparsity).min(dim),
            weight_bound: 2.0 * horizon as f64 * (dim as f64).sqrt(),
            covers: CoverConstants::default(),
        })
    }

    /// Builds the class of the requested kind for an environment.
    pub fn for_mdp(kind: ClassKind, mdp: &EpisodicMdp) -> Result<Self, FunctionSpaceError> {
        let view = mdp.tabular_view();
        let (ns, na, hz) = (view.n_states(), view.n_actions(), view.horizon());
        match kind {
            ClassKind::Tabular => Ok(Self::tabular(ns, na, hz)),
            ClassKind::Linear => {
                let lin = mdp.as_linear().ok_or_else(|| {
                    FunctionSpaceError::IncompatibleMdp("linear class on a tabular MDP".into())
                })?;
                Self::linear(lin.feature_table(), ns, na, hz)
            }
            ClassKind::SparseLinear => {
                let lin = mdp.as_linear().ok_or_else(|| {
                    FunctionSpaceError::IncompatibleMdp("sparse class on a tabular MDP".into())
                })?;
                let s = lin.sparsity().ok_or_else(|| {
                    FunctionSpaceError::IncompatibleMdp("sparse class on a dense MDP".into())
                })?;
                Self::sparse_linear(lin.feature_table(), ns, na, hz, s)
            }
        }
    }

    pub fn with_covers(mut self, covers: CoverConstants) -> Self {
        self.covers = covers;
        self
    }

    pub fn kind(&self) -> ClassKind {
        self.kind
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Upper end of the value range, `H + 1`.
    pub fn range_high(&self) -> f64 {
        (self.horizon + 1) as f64
    }

    /// Number of parameters of a handle.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_nonzeros(&self) -> usize {
        self.max_nonzeros
    }

    /// Weight bound `2 H sqrt(d)` (linear classes) or `H + 1` (tabular).
    pub fn weight_bound(&self) -> f64 {
        self.weight_bound
    }

    pub fn covers(&self) -> CoverConstants {
        self.covers
    }

    fn index(&self, s: State, a: Action) -> usize {
        s * self.n_actions + a
    }

    pub fn feature(&self, s: State, a: Action) -> &[f64] {
        &self.features[self.index(s, a)]
    }

    pub fn zero(&self) -> FunctionHandle {
        FunctionHandle {
            class: self.kind,
            params: vec![0.0; self.dim],
        }
    }

    /// Value of the underlying predictor before clipping.
    pub fn raw_value(&self, f: &FunctionHandle, s: State, a: Action) -> f64 {
        match self.kind {
            ClassKind::Tabular => f.params[self.index(s, a)],
            ClassKind::Linear | ClassKind::SparseLinear => dot(&f.params, self.feature(s, a)),
        }
    }

    /// `f(s, a)` clipped into `[0, H + 1]`.
    pub fn evaluate(&self, f: &FunctionHandle, s: State, a: Action) -> f64 {
        self.raw_value(f, s, a).clamp(0.0, self.range_high())
    }

    /// Checks the structural bounds of the class.
    pub fn check_member(&self, f: &FunctionHandle) -> Result<(), FunctionSpaceError> {
        if f.class != self.kind || f.params.len() != self.dim {
            return Err(FunctionSpaceError::NotMember(format!(
                "expected {:?} with {} parameters",
                self.kind, self.dim
            )));
        }
        let tol = 1e-9 * (1.0 + self.weight_bound);
        match self.kind {
            ClassKind::Tabular => {
                if f.params.iter().any(|v| *v < 0.0 || *v > self.range_high()) {
                    return Err(FunctionSpaceError::NotMember("table out of range".into()));
                }
            }
            ClassKind::Linear => {
                if norm2(&f.params) > self.weight_bound + tol {
                    return Err(FunctionSpaceError::NotMember("weight norm too large".into()));
                }
            }
            ClassKind::SparseLinear => {
                if f.params.iter().any(|v| v.abs() > self.weight_bound + tol) {
                    return Err(FunctionSpaceError::NotMember("weight entry too large".into()));
                }
                if f.params.iter().filter(|v| **v != 0.0).count() > self.max_nonzeros {
                    return Err(FunctionSpaceError::NotMember("too many nonzeros".into()));
                }
            }
        }
        Ok(())
    }

    /// Random member of the class (uniform table, uniform ball point, or random
    /// sparse support with uniform box entries).
    pub fn random_member<R: Rng + ?Sized>(&self, rng: &mut R) -> FunctionHandle {
        let params = match self.kind {
            ClassKind::Tabular => (0..self.dim)
                .map(|_| rng.gen_range(0.0..=self.range_high()))
                .collect(),
            ClassKind::Linear => {
                let g: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = norm2(&g).max(f64::MIN_POSITIVE);
                let radius = self.weight_bound * rng.gen::<f64>().powf(1.0 / self.dim as f64);
                g.iter().map(|x| x / n * radius).collect()
            }
            ClassKind::SparseLinear => {
                let mut w = vec![0.0; self.dim];
                let k = rng.gen_range(1..=self.max_nonzeros);
                let mut idx: Vec<usize> = (0..self.dim).collect();
                for i in 0..k {
                    let j = rng.gen_range(i..self.dim);
                    idx.swap(i, j);
                    w[idx[i]] = rng.gen_range(-self.weight_bound..=self.weight_bound);
                }
                w
            }
        };
        FunctionHandle {
            class: self.kind,
            params,
        }
    }

    /// `sum_D (f(s,a) - y)^2`, on the raw predictor for linear classes.
    pub fn erm_objective(&self, f: &FunctionHandle, data: &LabeledSet) -> f64 {
        data.samples
            .iter()
            .map(|z| {
                let r = self.raw_value(f, z.state, z.action) - z.target;
                r * r
            })
            .sum()
    }

    /// Least-squares fit over the class.
    ///
    /// Ties resolve to the minimum-norm minimizer: unobserved table entries stay
    /// at zero, and linear fits use the pseudo-inverse. The sparse class runs
    /// iterative hard thresholding and reports `converged = false` if no restart
    /// met the stopping rule.
    pub fn erm_fit(&self, data: &LabeledSet) -> Result<ErmFit, FunctionSpaceError> {
        match self.kind {
            ClassKind::Tabular => Ok(self.erm_tabular(data)),
            ClassKind::Linear => {
                if data.is_empty() {
                    return Err(FunctionSpaceError::EmptyDataset);
                }
                let (g, b) = self.normal_equations(data);
                let w = ball_least_squares(&g, &b, self.weight_bound);
                let handle = FunctionHandle {
                    class: self.kind,
                    params: w,
                };
                Ok(ErmFit {
                    objective: self.erm_objective(&handle, data),
                    handle,
                    converged: true,
                })
            }
            ClassKind::SparseLinear => {
                if data.is_empty() {
                    return Err(FunctionSpaceError::EmptyDataset);
                }
                Ok(self.erm_sparse_iht(data))
            }
        }
    }

    fn erm_tabular(&self, data: &LabeledSet) -> ErmFit {
        let mut sum = vec![0.0; self.dim];
        let mut n = vec![0u64; self.dim];
        for z in &data.samples {
            let i = self.index(z.state, z.action);
            sum[i] += z.target;
            n[i] += 1;
        }
        let params = sum
            .iter()
            .zip(&n)
            .map(|(s, &c)| {
                if c == 0 {
                    0.0
                } else {
                    (s / c as f64).clamp(0.0, self.range_high())
                }
            })
            .collect();
        let handle = FunctionHandle {
            class: self.kind,
            params,
        };
        ErmFit {
            objective: self.erm_objective(&handle, data),
            handle,
            converged: true,
        }
    }

    /// `(X^T X, X^T y)` for the feature rows of `data`.
    fn normal_equations(&self, data: &LabeledSet) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.dim;
        let mut g = DMatrix::zeros(d, d);
        let mut b = DVector::zeros(d);
        // Accumulate per distinct pair first; datasets repeat pairs heavily.
        let mut grouped: BTreeMap<(State, Action), (f64, f64)> = BTreeMap::new();
        for z in &data.samples {
            let e = grouped.entry((z.state, z.action)).or_insert((0.0, 0.0));
            e.0 += 1.0;
            e.1 += z.target;
        }
        for ((s, a), (n, ysum)) in grouped {
            let phi = self.feature(s, a);
            for i in 0..d {
                if phi[i] == 0.0 {
                    continue;
                }
                b[i] += phi[i] * ysum;
                for j in 0..d {
                    g[(i, j)] += n * phi[i] * phi[j];
                }
            }
        }
        (g, b)
    }

    fn erm_sparse_iht(&self, data: &LabeledSet) -> ErmFit {
        let (g, b) = self.normal_equations(data);
        let lipschitz = 2.0 * power_iteration_max(&g, 200).max(1e-12);
        let step = 1.0 / lipschitz;
        let mut rng = seeded(derive_seed(0x1417, &[data.len() as u64, self.dim as u64]));
        let mut best: Option<(Vec<f64>, f64, bool)> = None;
        for restart in 0..IHT_RESTARTS {
            let mut w: Vec<f64> = if restart == 0 {
                vec![0.0; self.dim]
            } else {
                let init: Vec<f64> = (0..self.dim)
                    .map(|_| rng.gen_range(-self.weight_bound..=self.weight_bound))
                    .collect();
                project_sparse_box(&init, self.max_nonzeros, self.weight_bound)
            };
            let mut converged = false;
            for _ in 0..IHT_ITERS {
                let gw = &g * to_dvec(&w);
                let stepped: Vec<f64> = (0..self.dim)
                    .map(|i| w[i] - step * 2.0 * (gw[i] - b[i]))
                    .collect();
                let next = project_sparse_box(&stepped, self.max_nonzeros, self.weight_bound);
                let change = next
                    .iter()
                    .zip(&w)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                w = next;
                if change <= 1e-12 * (1.0 + self.weight_bound) {
                    converged = true;
                    break;
                }
            }
            // Refit on the selected support.
            let support: Vec<usize> = (0..self.dim).filter(|&i| w[i] != 0.0).collect();
            if !support.is_empty() {
                let (ws, ok) = box_least_squares_on_support(&g, &b, &support, self.weight_bound);
                let mut refit = vec![0.0; self.dim];
                for (k, &i) in support.iter().enumerate() {
                    refit[i] = ws[k];
                }
                converged &= ok;
                w = refit;
            }
            let handle = FunctionHandle {
                class: self.kind,
                params: w.clone(),
            };
            let obj = self.erm_objective(&handle, data);
            let better = match &best {
                None => true,
                Some((_, o, _)) => obj < *o - 1e-12 * (1.0 + o.abs()),
            };
            if better {
                best = Some((w, obj, converged));
            }
        }
        let (w, objective, converged) = best.expect("at least one restart");
        ErmFit {
            handle: FunctionHandle {
                class: self.kind,
                params: w,
            },
            objective,
            converged,
        }
    }

    /// Exact sparse least squares by enumerating every support of size
    /// `min(2s, d)`; available for `d <= 12`.
    pub fn sparse_erm_by_enumeration(
        &self,
        data: &LabeledSet,
    ) -> Result<ErmFit, FunctionSpaceError> {
        if self.dim > 12 {
            return Err(FunctionSpaceError::DimensionTooLarge(self.dim));
        }
        if data.is_empty() {
            return Err(FunctionSpaceError::EmptyDataset);
        }
        let (g, b) = self.normal_equations(data);
        let k = self.max_nonzeros.min(self.dim);
        let mut best: Option<ErmFit> = None;
        for support in combinations(self.dim, k) {
            let (ws, converged) = box_least_squares_on_support(&g, &b, &support, self.weight_bound);
            let mut w = vec![0.0; self.dim];
            for (j, &i) in support.iter().enumerate() {
                w[i] = ws[j];
            }
            let handle = FunctionHandle {
                class: self.kind,
                params: w,
            };
            let objective = self.erm_objective(&handle, data);
            if best.as_ref().map_or(true, |f| objective < f.objective) {
                best = Some(ErmFit {
                    handle,
                    objective,
                    converged,
                });
            }
        }
        Ok(best.expect("at least one support"))
    }

    /// `||f - g||_Z = sqrt(sum_Z (f - g)^2)` with multiplicities.
    pub fn dataset_norm(&self, f: &FunctionHandle, g: &FunctionHandle, z: &StateActionSet) -> f64 {
        z.iter()
            .map(|((s, a), n)| {
                let d = self.evaluate(f, s, a) - self.evaluate(g, s, a);
                n as f64 * d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// `ln N(F, eps)` from ball-covering bounds.
    pub fn log_covering_number_f(&self, eps: f64) -> Result<f64, FunctionSpaceError> {
        if !(eps > 0.0) {
            return Err(FunctionSpaceError::InvalidEpsilon(eps));
        }
        let h = self.horizon as f64;
        let d = self.dim as f64;
        let c = self.covers;
        let v = match self.kind {
            ClassKind::Tabular => d * (self.range_high() / eps).ln_1p(),
            ClassKind::Linear => d * (c.function_factor * h * d.sqrt() / eps).ln_1p(),
            ClassKind::SparseLinear => {
                self.max_nonzeros as f64
                    * (d.ln() + (c.function_factor * h * d.sqrt() / eps).ln_1p())
            }
        };
        Ok(c.scale * v)
    }

    /// `ln N(S x A, eps)` from ball-covering bounds on the feature set.
    pub fn log_covering_number_sa(&self, eps: f64) -> Result<f64, FunctionSpaceError> {
        if !(eps > 0.0) {
            return Err(FunctionSpaceError::InvalidEpsilon(eps));
        }
        let d = self.dim as f64;
        let c = self.covers;
        let v = match self.kind {
            ClassKind::Tabular => ((self.n_states * self.n_actions) as f64).ln(),
            ClassKind::Linear => d * (c.state_action_factor / eps).ln_1p(),
            ClassKind::SparseLinear => {
                self.max_nonzeros as f64 * (d.ln() + (c.state_action_factor / eps).ln_1p())
            }
        };
        Ok(c.scale * v)
    }

    /// Precomputes `{f : ||f - anchor||^2_Z <= radius}` for repeated width queries.
    pub fn confidence_region(
        &self,
        anchor: &FunctionHandle,
        z: &StateActionSet,
        radius: f64,
    ) -> ConfidenceRegion {
        let cache = if z.is_empty() {
            RegionCache::Empty
        } else {
            match self.kind {
                ClassKind::Tabular => RegionCache::Tabular,
                ClassKind::Linear => {
                    let eig = SymEig::new(&self.gram(z));
                    RegionCache::Linear {
                        pinv: eig.pinv(),
                        null: eig.null_projector(),
                    }
                }
                ClassKind::SparseLinear => RegionCache::Ascent {
                    eig: SymEig::new(&self.gram(z)),
                },
            }
        };
        ConfidenceRegion {
            anchor: anchor.clone(),
            kept: z.clone(),
            radius: radius.max(0.0),
            cache,
        }
    }

    /// `sum_Z n(s,a) phi phi^T`.
    pub fn gram(&self, z: &StateActionSet) -> DMatrix<f64> {
        let d = self.dim;
        let mut g = DMatrix::zeros(d, d);
        for ((s, a), n) in z.iter() {
            let phi = to_dvec(self.feature(s, a));
            g += (&phi * phi.transpose()) * n as f64;
        }
        g
    }

    /// Width of the confidence set `{f : ||f - f_hat||^2_Z <= radius}` at `(s, a)`.
    pub fn width_at(
        &self,
        f_hat: &FunctionHandle,
        z_hat: &StateActionSet,
        radius: f64,
        s: State,
        a: Action,
    ) -> WidthEstimate {
        self.confidence_region(f_hat, z_hat, radius).width(self, s, a)
    }

    /// Generic projected-ascent width, usable for any linear-type class.
    pub fn width_by_ascent(
        &self,
        f_hat: &FunctionHandle,
        z_hat: &StateActionSet,
        radius: f64,
        s: State,
        a: Action,
        restarts: usize,
    ) -> WidthEstimate {
        let eig = SymEig::new(&self.gram(z_hat));
        let (lo, hi) = ascent_extremes(self, f_hat, &eig, radius.max(0.0), s, a, restarts);
        WidthEstimate {
            value: self.clip(hi) - self.clip(lo),
            method: WidthMethod::ProjectedAscent,
        }
    }

    fn clip(&self, v: f64) -> f64 {
        v.clamp(0.0, self.range_high())
    }

    /// Per-coordinate Lipschitz constant of `(s,a) -> f(s,a)` in the parameters (sup-norm).
    pub fn lipschitz_bound(&self, s: State, a: Action) -> f64 {
        match self.kind {
            ClassKind::Tabular => 1.0,
            _ => self.feature(s, a).iter().map(|x| x.abs()).sum(),
        }
    }

    /// Exhaustive width over a discretized confidence set. Test oracle.
    ///
    /// Tabular: the probed entry is gridded on `[0, H + 1]` with the rest of the
    /// table pinned at the anchor. Linear: every coordinate except the one with
    /// the largest `|phi_j|` is gridded over the set's bounding box, and the
    /// remaining coordinate's feasible interval is solved exactly.
    pub fn brute_force_width(
        &self,
        f_hat: &FunctionHandle,
        z_hat: &StateActionSet,
        radius: f64,
        s: State,
        a: Action,
        grid_resolution: f64,
    ) -> Result<f64, FunctionSpaceError> {
        match self.kind {
            ClassKind::Tabular => {
                let n = z_hat.count(s, a) as f64;
                let center = self.raw_value(f_hat, s, a);
                let steps = (self.range_high() / grid_resolution).ceil() as usize;
                let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                for i in 0..=steps {
                    let v = (i as f64 * grid_resolution).min(self.range_high());
                    if n * (v - center) * (v - center) <= radius {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                Ok(if hi >= lo { hi - lo } else { 0.0 })
            }
            ClassKind::Linear | ClassKind::SparseLinear => {
                if self.dim > 4 {
                    return Err(FunctionSpaceError::TooManyParameters(self.dim));
                }
                let (lo, hi) = brute_force_linear_extremes(self, f_hat, z_hat, radius, s, a, grid_resolution)?;
                Ok(self.clip(hi) - self.clip(lo))
            }
        }
    }
}

fn check_feature_table(
    features: &[Vec<f64>],
    n_states: usize,
    n_actions: usize,
) -> Result<usize, FunctionSpaceError> {
    if features.len() != n_states * n_actions || features.is_empty() {
        return Err(FunctionSpaceError::FeatureBound(format!(
            "expected {} feature rows",
            n_states * n_actions
        )));
    }
    let dim = features[0].len();
    if dim == 0 || features.iter().any(|f| f.len() != dim) {
        return Err(FunctionSpaceError::FeatureBound(
            "feature rows must share a positive dimension".into(),
        ));
    }
    Ok(dim)
}

/// Precomputed confidence set `{f : ||f - anchor||^2_Z <= radius}`.
#[derive(Debug, Clone)]
pub struct ConfidenceRegion {
    anchor: FunctionHandle,
    kept: StateActionSet,
    radius: f64,
    cache: RegionCache,
}

#[derive(Debug, Clone)]
enum RegionCache {
    Empty,
    Tabular,
    Linear {
        pinv: DMatrix<f64>,
        null: DMatrix<f64>,
    },
    Ascent {
        eig: SymEig,
    },
}

impl ConfidenceRegion {
    pub fn anchor(&self) -> &FunctionHandle {
        &self.anchor
    }

    pub fn kept(&self) -> &StateActionSet {
        &self.kept
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn width(&self, class: &FunctionClass, s: State, a: Action) -> WidthEstimate {
        let hi_range = class.range_high();
        match &self.cache {
            RegionCache::Empty => {
                let value = match class.kind {
                    ClassKind::Tabular => hi_range,
                    _ => {
                        let reach = extreme_over_class(class, s, a);
                        class.clip(reach) - class.clip(-reach)
                    }
                };
                WidthEstimate {
                    value,
                    method: WidthMethod::Unconstrained,
                }
            }
            RegionCache::Tabular => {
                let n = self.kept.count(s, a);
                let value = if n == 0 {
                    hi_range
                } else {
                    let center = class.raw_value(&self.anchor, s, a);
                    let half = (self.radius / n as f64).sqrt();
                    (center + half).min(hi_range) - (center - half).max(0.0)
                };
                WidthEstimate {
                    value: value.max(0.0),
                    method: WidthMethod::TabularClosedForm,
                }
            }
            RegionCache::Linear { pinv, null } => {
                let phi = class.feature(s, a);
                let reach = class.weight_bound * norm2(phi);
                let off = (null * to_dvec(phi)).norm();
                let (lo, hi) = if off > 1e-9 * norm2(phi).max(1.0) {
                    (-reach, reach)
                } else {
                    let center = class.raw_value(&self.anchor, s, a);
                    let half = (self.radius * quad_form(pinv, phi).max(0.0)).sqrt();
                    ((center - half).max(-reach), (center + half).min(reach))
                };
                WidthEstimate {
                    value: (class.clip(hi) - class.clip(lo)).max(0.0),
                    method: WidthMethod::LinearClosedForm,
                }
            }
            RegionCache::Ascent { eig } => {
                let (lo, hi) = ascent_extremes(
                    class,
                    &self.anchor,
                    eig,
                    self.radius,
                    s,
                    a,
                    WIDTH_ASCENT_RESTARTS,
                );
                WidthEstimate {
                    value: (class.clip(hi) - class.clip(lo)).max(0.0),
                    method: WidthMethod::ProjectedAscent,
                }
            }
        }
    }
}

/// `max_{w in W} w^T phi(s,a)` over the whole parameter set.
fn extreme_over_class(class: &FunctionClass, s: State, a: Action) -> f64 {
    let phi = class.feature(s, a);
    match class.kind {
        ClassKind::Tabular => class.range_high(),
        ClassKind::Linear => class.weight_bound * norm2(phi),
        ClassKind::SparseLinear => {
            let mut mags: Vec<f64> = phi.iter().map(|x| x.abs()).collect();
            mags.sort_by(|a, b| b.total_cmp(a));
            class.weight_bound * mags.iter().take(class.max_nonzeros).sum::<f64>()
        }
    }
}

/// Euclidean projection onto `{x : ||x||_0 <= k, ||x||_inf <= bound}`.
pub fn project_sparse_box(v: &[f64], k: usize, bound: f64) -> Vec<f64> {
    let clipped: Vec<f64> = v.iter().map(|x| x.clamp(-bound, bound)).collect();
    if clipped.iter().filter(|x| **x != 0.0).count() <= k {
        return clipped;
    }
    // The distance saved by keeping a coordinate is monotone in |v_i|.
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    let mut out = vec![0.0; v.len()];
    for &i in order.iter().take(k) {
        out[i] = clipped[i];
    }
    out
}

/// `argmin ||Xw - y||^2` over `||w||_2 <= bound`, minimum-norm among ties.
fn ball_least_squares(g: &DMatrix<f64>, b: &DVector<f64>, bound: f64) -> Vec<f64> {
    let eig = SymEig::new(g);
    let n = eig.values.len();
    let coef: Vec<f64> = (0..n).map(|i| eig.vectors.column(i).dot(b)).collect();
    let solve = |mu: f64| -> DVector<f64> {
        let mut w = DVector::zeros(n);
        for i in 0..n {
            let lam = if eig.is_zero(i) { 0.0 } else { eig.values[i] };
            if lam + mu <= 0.0 {
                continue;
            }
            w += eig.vectors.column(i) * (coef[i] / (lam + mu));
        }
        w
    };
    let w0 = solve(0.0);
    if w0.norm() <= bound {
        return w0.iter().copied().collect();
    }
    // ||w(mu)|| decreases in mu; bracket then bisect.
    let mut lo = 0.0;
    let mut hi = eig.max().abs().max(1.0);
    while solve(hi).norm() > bound {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if solve(mid).norm() > bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    solve(hi).iter().copied().collect()
}

/// Box-constrained least squares on a fixed support. Returns the support
/// coefficients and whether the solver converged.
fn box_least_squares_on_support(
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    support: &[usize],
    bound: f64,
) -> (Vec<f64>, bool) {
    let k = support.len();
    let gs = DMatrix::from_fn(k, k, |i, j| g[(support[i], support[j])]);
    let bs = DVector::from_fn(k, |i, _| b[support[i]]);
    let eig = SymEig::new(&gs);
    let pinv = eig.pinv();
    let w0 = &pinv * &bs;
    if w0.iter().all(|x| x.abs() <= bound) {
        return (w0.iter().copied().collect(), true);
    }
    let step = 1.0 / (2.0 * eig.max().max(1e-12));
    let mut w: DVector<f64> = w0.map(|x| x.clamp(-bound, bound));
    for _ in 0..20_000 {
        let grad = (&gs * &w - &bs) * 2.0;
        let next = (&w - grad * step).map(|x| x.clamp(-bound, bound));
        let change = (&next - &w).amax();
        w = next;
        if change <= 1e-13 * (1.0 + bound) {
            return (w.iter().copied().collect(), true);
        }
    }
    (w.iter().copied().collect(), false)
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Projection onto the ellipsoid `{x : (x - c)^T G (x - c) <= r}` given `G`'s eigendecomposition.
fn project_ellipsoid(y: &[f64], center: &[f64], eig: &SymEig, r: f64) -> Vec<f64> {
    let n = y.len();
    let diff = to_dvec(y) - to_dvec(center);
    let z: Vec<f64> = (0..n).map(|i| eig.vectors.column(i).dot(&diff)).collect();
    let lam: Vec<f64> = (0..n)
        .map(|i| if eig.is_zero(i) { 0.0 } else { eig.values[i] })
        .collect();
    let level = |mu: f64| -> f64 {
        (0..n)
            .map(|i| lam[i] * z[i] * z[i] / ((1.0 + mu * lam[i]) * (1.0 + mu * lam[i])))
            .sum()
    };
    if level(0.0) <= r {
        return y.to_vec();
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while level(hi) > r {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if level(mid) > r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut out = to_dvec(center);
    for i in 0..n {
        out += eig.vectors.column(i) * (z[i] / (1.0 + hi * lam[i]));
    }
    out.iter().copied().collect()
}

/// Parameter set restricted for one ascent restart.
enum Feasible<'a> {
    Ball(f64),
    SupportBox { bound: f64, support: &'a [usize] },
}

impl Feasible<'_> {
    fn project(&self, v: &[f64]) -> Vec<f64> {
        match self {
            Feasible::Ball(b) => {
                let n = norm2(v);
                if n <= *b {
                    v.to_vec()
                } else {
                    v.iter().map(|x| x * b / n).collect()
                }
            }
            Feasible::SupportBox { bound, support } => {
                let mut out = vec![0.0; v.len()];
                for &i in support.iter() {
                    out[i] = v[i].clamp(-bound, *bound);
                }
                out
            }
        }
    }
}

fn ellipsoid_level(x: &[f64], center: &[f64], eig: &SymEig) -> f64 {
    let diff = to_dvec(x) - to_dvec(center);
    (0..x.len())
        .map(|i| {
            let lam = if eig.is_zero(i) { 0.0 } else { eig.values[i] };
            let c = eig.vectors.column(i).dot(&diff);
            lam * c * c
        })
        .sum()
}

/// Projection onto `E ∩ W` by Dykstra's alternating projections, followed by a
/// pull toward the center so the returned point is feasible for both sets.
fn project_intersection(
    y: &[f64],
    center: &[f64],
    eig: &SymEig,
    r: f64,
    set: &Feasible<'_>,
) -> Vec<f64> {
    let n = y.len();
    let mut x = y.to_vec();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for _ in 0..DYKSTRA_ITERS {
        let xp: Vec<f64> = (0..n).map(|i| x[i] + p[i]).collect();
        let a = set.project(&xp);
        for i in 0..n {
            p[i] = xp[i] - a[i];
        }
        let aq: Vec<f64> = (0..n).map(|i| a[i] + q[i]).collect();
        let next = project_ellipsoid(&aq, center, eig, r);
        for i in 0..n {
            q[i] = aq[i] - next[i];
        }
        let change = next.iter().zip(&x).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        x = next;
        if change < 1e-12 {
            break;
        }
    }
    let x = set.project(&x);
    if ellipsoid_level(&x, center, eig) <= r {
        return x;
    }
    // The center lies in both sets, so the segment back to it stays in W.
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let pt: Vec<f64> = (0..n).map(|i| center[i] + mid * (x[i] - center[i])).collect();
        if ellipsoid_level(&pt, center, eig) <= r {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0..n).map(|i| center[i] + lo * (x[i] - center[i])).collect()
}

/// Lower bounds on `min` and `max` of `w^T phi(s,a)` over the confidence set by
/// projected-gradient ascent with restarts. Every returned value is attained at
/// a feasible point.
fn ascent_extremes(
    class: &FunctionClass,
    anchor: &FunctionHandle,
    eig: &SymEig,
    radius: f64,
    s: State,
    a: Action,
    restarts: usize,
) -> (f64, f64) {
    let phi = class.feature(s, a).to_vec();
    let center = anchor.params.clone();
    let base = dot(&center, &phi);
    let supports = restart_supports(class, &center, &phi, restarts, s, a);
    let mut hi = base;
    let mut lo = base;
    let scale = class.weight_bound + radius.sqrt();
    for support in &supports {
        let set = match class.kind {
            ClassKind::SparseLinear => Feasible::SupportBox {
                bound: class.weight_bound,
                support,
            },
            _ => Feasible::Ball(class.weight_bound),
        };
        for sign in [1.0, -1.0] {
            let dir: Vec<f64> = phi.iter().map(|x| sign * x).collect();
            let dn = norm2(&dir).max(1e-300);
            let mut w = center.clone();
            let mut best = sign * dot(&w, &phi);
            let mut eta = scale / dn;
            for _ in 0..ASCENT_ITERS {
                let stepped: Vec<f64> = w.iter().zip(&dir).map(|(x, d)| x + eta * d).collect();
                let next = project_intersection(&stepped, &center, eig, radius, &set);
                let val = sign * dot(&next, &phi);
                let moved = next.iter().zip(&w).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
                if val > best {
                    best = val;
                }
                w = next;
                if moved < 1e-12 {
                    break;
                }
                eta *= 0.97;
            }
            if sign > 0.0 {
                hi = hi.max(best);
            } else {
                lo = lo.min(-best);
            }
        }
    }
    (lo, hi)
}

/// Distinct candidate supports for the ascent restarts. Dense classes use a
/// single full support (the problem is convex).
fn restart_supports(
    class: &FunctionClass,
    center: &[f64],
    phi: &[f64],
    restarts: usize,
    s: State,
    a: Action,
) -> Vec<Vec<usize>> {
    let d = class.dim;
    if class.kind != ClassKind::SparseLinear || class.max_nonzeros >= d {
        return vec![(0..d).collect()];
    }
    let base: Vec<usize> = (0..d).filter(|&i| center[i] != 0.0).collect();
    let free = class.max_nonzeros.saturating_sub(base.len());
    let others: Vec<usize> = (0..d).filter(|i| !base.contains(i)).collect();
    let mut out: Vec<Vec<usize>> = Vec::new();
    let push = |mut sup: Vec<usize>, out: &mut Vec<Vec<usize>>| {
        sup.sort_unstable();
        if !out.contains(&sup) {
            out.push(sup);
        }
    };
    // First restart: fill with the largest feature magnitudes.
    let mut by_mag = others.clone();
    by_mag.sort_by(|&i, &j| phi[j].abs().total_cmp(&phi[i].abs()).then(i.cmp(&j)));
    let mut first = base.clone();
    first.extend(by_mag.iter().take(free));
    push(first, &mut out);
    let mut rng = seeded(derive_seed(0xA5CE, &[s as u64, a as u64]));
    for _ in 1..restarts {
        let mut pool = others.clone();
        let mut sup = base.clone();
        for i in 0..free.min(pool.len()) {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
            sup.push(pool[i]);
        }
        push(sup, &mut out);
    }
    out
}

fn brute_force_linear_extremes(
    class: &FunctionClass,
    f_hat: &FunctionHandle,
    z_hat: &StateActionSet,
    radius: f64,
    s: State,
    a: Action,
    res: f64,
) -> Result<(f64, f64), FunctionSpaceError> {
    let d = class.dim;
    let phi = class.feature(s, a);
    let g = class.gram(z_hat);
    let eig = SymEig::new(&g);
    let pinv = eig.pinv();
    let null = eig.null_projector();
    let center = &f_hat.params;
    let bound = class.weight_bound;
    let sparse = class.kind == ClassKind::SparseLinear;
    let solve_j = (0..d)
        .max_by(|&i, &j| phi[i].abs().total_cmp(&phi[j].abs()).then(j.cmp(&i)))
        .unwrap();
    let grid_dims: Vec<usize> = (0..d).filter(|&i| i != solve_j).collect();

    // Bounding box of the feasible set per gridded coordinate.
    let mut axes: Vec<Vec<f64>> = Vec::new();
    let mut total: u128 = 1;
    for &i in &grid_dims {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        let unbounded = (&null * to_dvec(&e)).norm() > 1e-9;
        let (mut lo, mut hi) = (-bound, bound);
        if !unbounded {
            let half = (radius * pinv[(i, i)].max(0.0)).sqrt();
            lo = lo.max(center[i] - half);
            hi = hi.min(center[i] + half);
        }
        let steps = ((hi - lo) / res).ceil().max(1.0) as usize;
        total = total.saturating_mul(steps as u128 + 1);
        axes.push((0..=steps).map(|k| lo + (hi - lo) * k as f64 / steps as f64).collect());
    }
    if total > 2_000_000_000 {
        return Err(FunctionSpaceError::GridTooFine(total));
    }

    let mut lo_val = f64::INFINITY;
    let mut hi_val = f64::NEG_INFINITY;
    let mut idx = vec![0usize; grid_dims.len()];
    let mut x = vec![0.0; d];
    loop {
        for (k, &i) in grid_dims.iter().enumerate() {
            x[i] = axes[k][idx[k]];
        }
        let nz_grid = grid_dims.iter().filter(|&&i| x[i] != 0.0).count();
        if !sparse || nz_grid <= class.max_nonzeros {
            if let Some((t_lo, t_hi)) =
                slice_interval(&g, center, &x, solve_j, radius, bound, sparse)
            {
                let mut candidates = vec![t_lo, t_hi];
                if sparse && nz_grid >= class.max_nonzeros {
                    // The solved coordinate must be zero to respect the sparsity cap.
                    candidates = if t_lo <= 0.0 && t_hi >= 0.0 { vec![0.0] } else { vec![] };
                }
                for t in candidates {
                    x[solve_j] = t;
                    let v = dot(&x, phi);
                    lo_val = lo_val.min(v);
                    hi_val = hi_val.max(v);
                }
            }
        }
        // Odometer increment.
        let mut k = 0;
        loop {
            if k == idx.len() {
                return Ok(if hi_val >= lo_val {
                    (lo_val, hi_val)
                } else {
                    let c = dot(center, phi);
                    (c, c)
                });
            }
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Feasible interval of coordinate `j` with the other coordinates fixed.
fn slice_interval(
    g: &DMatrix<f64>,
    center: &[f64],
    x: &[f64],
    j: usize,
    radius: f64,
    bound: f64,
    box_constraint: bool,
) -> Option<(f64, f64)> {
    let d = x.len();
    // Ellipsoid: a u^2 + 2 b u + c <= r with u = x_j - center_j.
    let u: Vec<f64> = (0..d).map(|i| if i == j { 0.0 } else { x[i] - center[i] }).collect();
    let a = g[(j, j)];
    let b: f64 = (0..d).filter(|&i| i != j).map(|i| g[(j, i)] * u[i]).sum();
    let c: f64 = (0..d)
        .filter(|&i| i != j)
        .map(|i| (0..d).filter(|&k| k != j).map(|k| u[i] * g[(i, k)] * u[k]).sum::<f64>())
        .sum();
    let (mut lo, mut hi);
    let scale = 1e-12 * (1.0 + g.amax());
    if a <= scale {
        if c > radius + 1e-12 * (1.0 + radius) {
            return None;
        }
        lo = f64::NEG_INFINITY;
        hi = f64::INFINITY;
    } else {
        let disc = b * b - a * (c - radius);
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        lo = center[j] + (-b - sq) / a;
        hi = center[j] + (-b + sq) / a;
    }
    if box_constraint {
        lo = lo.max(-bound);
        hi = hi.min(bound);
    } else {
        let rest: f64 = (0..d).filter(|&i| i != j).map(|i| x[i] * x[i]).sum();
        if rest > bound * bound {
            return None;
        }
        let t = (bound * bound - rest).sqrt();
        lo = lo.max(-t);
        hi = hi.min(t);
    }
    (lo <= hi).then_some((lo, hi))
}
