//! Episodic MDPs over finite state and action spaces.
//!
//! Two ground-truth families are provided: a plain tabular MDP and a low-rank
//! linear MDP whose kernel factorizes as `P(s'|s,a) = phi(s,a)^T mu(s')`. Every
//! linear instance also carries its realized tabular view so that exact planning,
//! occupancy measures and regret are computable without Monte-Carlo noise.
//!
//! Steps are zero-indexed internally: step `h` in `0..horizon` is step `h + 1`
//! in the usual one-indexed notation.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{sample_index, sample_simplex};

pub type State = usize;
pub type Action = usize;

const PROB_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MdpError {
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("{what} is not a probability vector (min {min}, sum {sum})")]
    NotADistribution { what: String, min: f64, sum: f64 },
    #[error("reward r({state},{action}) = {value} is outside [0, 1]")]
    RewardOutOfRange {
        state: State,
        action: Action,
        value: f64,
    },
    #[error("min_prob {min_prob} is infeasible for {n_states} states (min_prob * S must be <= 1)")]
    InfeasibleMinProb { min_prob: f64, n_states: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

fn check_distribution(what: impl Fn() -> String, v: &[f64]) -> Result<(), MdpError> {
    let sum: f64 = v.iter().sum();
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min >= 0.0) || (sum - 1.0).abs() > PROB_TOL || v.iter().any(|x| !x.is_finite()) {
        return Err(MdpError::NotADistribution {
            what: what(),
            min,
            sum,
        });
    }
    Ok(())
}

/// A finite-horizon MDP given by explicit tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabularMdpDoc")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    /// `transition[s][a][s']`
    transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`
    reward: Vec<Vec<f64>>,
    initial_dist: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TabularMdpDoc {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    initial_dist: Vec<f64>,
}

impl TryFrom<TabularMdpDoc> for TabularMdp {
    type Error = MdpError;

    fn try_from(d: TabularMdpDoc) -> Result<Self, Self::Error> {
        TabularMdp::new(
            d.n_states,
            d.n_actions,
            d.horizon,
            d.transition,
            d.reward,
            d.initial_dist,
        )
    }
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 || horizon == 0 {
            return Err(MdpError::Shape(
                "n_states, n_actions and horizon must be positive".into(),
            ));
        }
        if transition.len() != n_states || reward.len() != n_states {
            return Err(MdpError::Shape(format!(
                "expected {n_states} transition/reward rows"
            )));
        }
        for s in 0..n_states {
            if transition[s].len() != n_actions || reward[s].len() != n_actions {
                return Err(MdpError::Shape(format!(
                    "state {s} must have {n_actions} actions"
                )));
            }
            for a in 0..n_actions {
                let row = &transition[s][a];
                if row.len() != n_states {
                    return Err(MdpError::Shape(format!(
                        "transition row ({s},{a}) must have {n_states} entries"
                    )));
                }
                check_distribution(|| format!("transition row ({s},{a})"), row)?;
                let r = reward[s][a];
                if !(0.0..=1.0).contains(&r) {
                    return Err(MdpError::RewardOutOfRange {
                        state: s,
                        action: a,
                        value: r,
                    });
                }
            }
        }
        if initial_dist.len() != n_states {
            return Err(MdpError::Shape(format!(
                "initial distribution must have {n_states} entries"
            )));
        }
        check_distribution(|| "initial distribution".into(), &initial_dist)?;
        Ok(Self {
            n_states,
            n_actions,
            horizon,
            transition,
            reward,
            initial_dist,
        })
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

    pub fn reward(&self, s: State, a: Action) -> f64 {
        self.reward[s][a]
    }

    pub fn transition_row(&self, s: State, a: Action) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    /// Expected next-step value `sum_s' P(s'|s,a) v(s')`.
    pub fn expected_next(&self, s: State, a: Action, v: &[f64]) -> f64 {
        self.transition[s][a]
            .iter()
            .zip(v)
            .map(|(p, x)| p * x)
            .sum()
    }

    /// Returns a copy whose rewards are shifted by independent `U[-zeta, zeta]`
    /// draws and clipped back into `[0, 1]`.
    pub fn with_reward_perturbation<R: Rng + ?Sized>(&self, zeta: f64, rng: &mut R) -> Self {
        let mut out = self.clone();
        if zeta > 0.0 {
            for row in out.reward.iter_mut() {
                for r in row.iter_mut() {
                    let shift = rng.gen_range(-zeta..=zeta);
                    *r = (*r + shift).clamp(0.0, 1.0);
                }
            }
        }
        out
    }
}

/// Low-rank linear MDP realized over finite state and action sets.
///
/// Features are stored densely as an `S x A x d` tensor. The realized kernel is
/// `phi^T mu` with negative entries clipped and rows renormalized; the largest
/// L1 correction made by that pass is kept in `renormalization_gap`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinearMdpDoc", into = "LinearMdpDoc")]
pub struct LinearMdp {
    dim: usize,
    sparsity: Option<usize>,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    features: Vec<Vec<Vec<f64>>>,
    reward_param: Vec<f64>,
    transition_measures: Vec<Vec<f64>>,
    initial_dist: Vec<f64>,
    renormalization_gap: f64,
    realized: TabularMdp,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinearMdpDoc {
    dim: usize,
    sparsity: Option<usize>,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    features: Vec<Vec<Vec<f64>>>,
    reward_param: Vec<f64>,
    transition_measures: Vec<Vec<f64>>,
    initial_dist: Vec<f64>,
}

impl From<LinearMdp> for LinearMdpDoc {
    fn from(m: LinearMdp) -> Self {
        Self {
            dim: m.dim,
            sparsity: m.sparsity,
            n_states: m.n_states,
            n_actions: m.n_actions,
            horizon: m.horizon,
            features: m.features,
            reward_param: m.reward_param,
            transition_measures: m.transition_measures,
            initial_dist: m.initial_dist,
        }
    }
}

impl TryFrom<LinearMdpDoc> for LinearMdp {
    type Error = MdpError;

    fn try_from(d: LinearMdpDoc) -> Result<Self, Self::Error> {
        LinearMdp::new(
            d.sparsity,
            d.horizon,
            d.features,
            d.reward_param,
            d.transition_measures,
            d.initial_dist,
        )
    }
}

impl LinearMdp {
    /// Builds a linear MDP from its factors and realizes the tabular view.
    pub fn new(
        sparsity: Option<usize>,
        horizon: usize,
        features: Vec<Vec<Vec<f64>>>,
        reward_param: Vec<f64>,
        transition_measures: Vec<Vec<f64>>,
        initial_dist: Vec<f64>,
    ) -> Result<Self, MdpError> {
        let n_states = features.len();
        let n_actions = features.first().map_or(0, Vec::len);
        let dim = reward_param.len();
        if n_states == 0 || n_actions == 0 || dim == 0 || horizon == 0 {
            return Err(MdpError::Shape(
                "states, actions, dimension and horizon must be positive".into(),
            ));
        }
        if transition_measures.len() != dim
            || transition_measures.iter().any(|m| m.len() != n_states)
        {
            return Err(MdpError::Shape(format!(
                "expected {dim} transition measures over {n_states} states"
            )));
        }
        if let Some(s) = sparsity {
            if s == 0 || s > dim {
                return Err(MdpError::Parameter(format!(
                    "sparsity {s} must lie in 1..={dim}"
                )));
            }
            if nnz(&reward_param) > s {
                return Err(MdpError::Parameter(format!(
                    "reward parameter has more than {s} nonzeros"
                )));
            }
        }
        for (s, row) in features.iter().enumerate() {
            if row.len() != n_actions {
                return Err(MdpError::Shape(format!(
                    "state {s} must have {n_actions} feature vectors"
                )));
            }
            for (a, phi) in row.iter().enumerate() {
                if phi.len() != dim {
                    return Err(MdpError::Shape(format!(
                        "phi({s},{a}) must have length {dim}"
                    )));
                }
                match sparsity {
                    None => {
                        let n2: f64 = phi.iter().map(|x| x * x).sum::<f64>().sqrt();
                        if n2 > 1.0 + 1e-12 {
                            return Err(MdpError::Parameter(format!(
                                "||phi({s},{a})||_2 = {n2} exceeds 1"
                            )));
                        }
                    }
                    Some(k) => {
                        if phi.iter().any(|x| x.abs() > 1.0 + 1e-12) {
                            return Err(MdpError::Parameter(format!(
                                "||phi({s},{a})||_inf exceeds 1"
                            )));
                        }
                        if nnz(phi) > k {
                            return Err(MdpError::Parameter(format!(
                                "phi({s},{a}) has more than {k} nonzeros"
                            )));
                        }
                    }
                }
            }
        }

        let mut gap: f64 = 0.0;
        let mut transition = vec![vec![Vec::new(); n_actions]; n_states];
        let mut reward = vec![vec![0.0; n_actions]; n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                let phi = &features[s][a];
                let raw: Vec<f64> = (0..n_states)
                    .map(|sp| (0..dim).map(|i| phi[i] * transition_measures[i][sp]).sum())
                    .collect();
                let clipped: Vec<f64> = raw.iter().map(|x| x.max(0.0)).collect();
                let total: f64 = clipped.iter().sum();
                let row: Vec<f64> = if total > 0.0 {
                    clipped.iter().map(|x| x / total).collect()
                } else {
                    vec![1.0 / n_states as f64; n_states]
                };
                let l1: f64 = raw.iter().zip(&row).map(|(x, y)| (x - y).abs()).sum();
                gap = gap.max(l1);
                transition[s][a] = row;

                let r: f64 = phi.iter().zip(&reward_param).map(|(x, w)| x * w).sum();
                gap = gap.max((r - r.clamp(0.0, 1.0)).abs());
                reward[s][a] = r.clamp(0.0, 1.0);
            }
        }
        let realized = TabularMdp::new(
            n_states,
            n_actions,
            horizon,
            transition,
            reward,
            initial_dist.clone(),
        )?;
        Ok(Self {
            dim,
            sparsity,
            n_states,
            n_actions,
            horizon,
            features,
            reward_param,
            transition_measures,
            initial_dist,
            renormalization_gap: gap,
            realized,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sparsity(&self) -> Option<usize> {
        self.sparsity
    }

    pub fn feature(&self, s: State, a: Action) -> &[f64] {
        &self.features[s][a]
    }

    /// Flattened feature table indexed by `s * A + a`.
    pub fn feature_table(&self) -> Vec<Vec<f64>> {
        self.features.iter().flatten().cloned().collect()
    }

    pub fn reward_param(&self) -> &[f64] {
        &self.reward_param
    }

    /// Largest correction (L1 on a kernel row, or reward clip) needed to turn
    /// `phi^T mu` into a valid tabular model. Zero means the instance is exactly linear.
    pub fn renormalization_gap(&self) -> f64 {
        self.renormalization_gap
    }

    pub fn tabular_view(&self) -> &TabularMdp {
        &self.realized
    }
}

fn nnz(v: &[f64]) -> usize {
    v.iter().filter(|x| **x != 0.0).count()
}

/// Either ground-truth family, simulated through its tabular dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpisodicMdp {
    Tabular(TabularMdp),
    Linear(LinearMdp),
}

impl EpisodicMdp {
    pub fn tabular_view(&self) -> &TabularMdp {
        match self {
            EpisodicMdp::Tabular(m) => m,
            EpisodicMdp::Linear(m) => m.tabular_view(),
        }
    }

    pub fn as_linear(&self) -> Option<&LinearMdp> {
        match self {
            EpisodicMdp::Linear(m) => Some(m),
            EpisodicMdp::Tabular(_) => None,
        }
    }

    pub fn horizon(&self) -> usize {
        self.tabular_view().horizon()
    }

    pub fn rollout<R: Rng + ?Sized>(
        &self,
        policy: &Policy,
        episode: usize,
        rng: &mut R,
    ) -> Trajectory {
        rollout(self.tabular_view(), policy, episode, rng)
    }
}

/// Stationary or step-dependent policy over a finite MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    UniformRandom,
    /// Deterministic greedy policy; `actions[h][s]` is the action at step `h`.
    GreedyFromQ { tag: String, actions: Vec<Vec<Action>> },
}

impl Policy {
    pub fn tag(&self) -> &str {
        match self {
            Policy::UniformRandom => "uniform_random",
            Policy::GreedyFromQ { tag, .. } => tag,
        }
    }

    /// Probability that the policy takes `a` in state `s` at step `h`.
    pub fn prob(&self, h: usize, s: State, a: Action, n_actions: usize) -> f64 {
        match self {
            Policy::UniformRandom => 1.0 / n_actions as f64,
            Policy::GreedyFromQ { actions, .. } => {
                if actions[h][s] == a {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        h: usize,
        s: State,
        n_actions: usize,
        rng: &mut R,
    ) -> Action {
        match self {
            Policy::UniformRandom => rng.gen_range(0..n_actions),
            Policy::GreedyFromQ { actions, .. } => actions[h][s],
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, Policy::GreedyFromQ { .. })
    }
}

/// One transition `(s_h, a_h, r_h, s_{h+1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: State,
    pub action: Action,
    pub reward: f64,
    pub next_state: State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// One-indexed episode number `k`.
    pub episode: usize,
    pub policy_tag: String,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn total_return(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn initial_state(&self) -> State {
        self.steps[0].state
    }
}

/// Samples one episode of length `H` under `policy`.
///
/// Draw order per step is fixed (action, then next state), so a seeded
/// generator yields identical trajectories.
pub fn rollout<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &Policy,
    episode: usize,
    rng: &mut R,
) -> Trajectory {
    let mut s = sample_index(mdp.initial_dist(), rng);
    let mut steps = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let a = policy.sample_action(h, s, mdp.n_actions(), rng);
        let next = sample_index(mdp.transition_row(s, a), rng);
        steps.push(Step {
            state: s,
            action: a,
            reward: mdp.reward(s, a),
            next_state: next,
        });
        s = next;
    }
    Trajectory {
        episode,
        policy_tag: policy.tag().to_string(),
        steps,
    }
}

/// Optimal action-values `q[h][s][a]` and values `v[h][s]` for `h` in `0..H`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalValues {
    pub q: Vec<Vec<Vec<f64>>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimalValues {
    /// `V*_{h}` with `V*_{H}` (one past the last step) equal to zero.
    pub fn value_at(&self, h: usize, s: State) -> f64 {
        self.v.get(h).map_or(0.0, |row| row[s])
    }

    pub fn expected_initial_value(&self, mdp: &TabularMdp) -> f64 {
        mdp.initial_dist()
            .iter()
            .zip(&self.v[0])
            .map(|(p, v)| p * v)
            .sum()
    }

    /// Greedy deterministic policy with lowest-index tie-breaking.
    pub fn greedy_policy(&self, tag: &str) -> Policy {
        let actions = self
            .q
            .iter()
            .map(|qh| qh.iter().map(|row| argmax_lowest(row)).collect())
            .collect();
        Policy::GreedyFromQ {
            tag: tag.to_string(),
            actions,
        }
    }
}

/// Index of the maximum entry; ties resolve to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Backward induction for `Q*` and `V*`.
pub fn exact_value_iteration(mdp: &TabularMdp) -> OptimalValues {
    let (ns, na, hz) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut q = vec![vec![vec![0.0; na]; ns]; hz];
    let mut v = vec![vec![0.0; ns]; hz];
    let mut next_v = vec![0.0; ns];
    for h in (0..hz).rev() {
        for s in 0..ns {
            for a in 0..na {
                q[h][s][a] = mdp.reward(s, a) + mdp.expected_next(s, a, &next_v);
            }
            v[h][s] = q[h][s].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        }
        next_v = v[h].clone();
    }
    OptimalValues { q, v }
}

/// Per-step state values `V^pi_h(s)` by exact backward evaluation.
pub fn policy_state_values(mdp: &TabularMdp, policy: &Policy) -> Vec<Vec<f64>> {
    let (ns, na, hz) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut v = vec![vec![0.0; ns]; hz];
    let mut next_v = vec![0.0; ns];
    for h in (0..hz).rev() {
        for s in 0..ns {
            v[h][s] = (0..na)
                .map(|a| {
                    let p = policy.prob(h, s, a, na);
                    if p == 0.0 {
                        0.0
                    } else {
                        p * (mdp.reward(s, a) + mdp.expected_next(s, a, &next_v))
                    }
                })
                .sum();
        }
        next_v = v[h].clone();
    }
    v
}

/// `E_{s_1 ~ mu}[V^pi_1(s_1)]`.
pub fn policy_value(mdp: &TabularMdp, policy: &Policy) -> f64 {
    let v = policy_state_values(mdp, policy);
    mdp.initial_dist().iter().zip(&v[0]).map(|(p, x)| p * x).sum()
}

/// Marginal state distributions `D_h(pi)` by forward recursion, for `h` in `0..H`.
pub fn state_distributions(mdp: &TabularMdp, policy: &Policy) -> Vec<Vec<f64>> {
    let (ns, na, hz) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut out = Vec::with_capacity(hz);
    let mut d = mdp.initial_dist().to_vec();
    for h in 0..hz {
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            if d[s] == 0.0 {
                continue;
            }
            for a in 0..na {
                let w = d[s] * policy.prob(h, s, a, na);
                if w == 0.0 {
                    continue;
                }
                for (sp, p) in mdp.transition_row(s, a).iter().enumerate() {
                    next[sp] += w * p;
                }
            }
        }
        out.push(d);
        d = next;
    }
    out
}

/// Random tabular MDP whose transition and initial probabilities are all at least `min_prob`.
///
/// Each row is `min_prob + (1 - S * min_prob) * u` with `u` uniform on the simplex;
/// rewards are uniform on `[0, 1]`.
pub fn make_random_tabular<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    min_prob: f64,
    rng: &mut R,
) -> Result<TabularMdp, MdpError> {
    if n_states == 0 || n_actions == 0 || horizon == 0 {
        return Err(MdpError::Shape(
            "n_states, n_actions and horizon must be positive".into(),
        ));
    }
    if !(min_prob >= 0.0) || min_prob * n_states as f64 > 1.0 + PROB_TOL {
        return Err(MdpError::InfeasibleMinProb { min_prob, n_states });
    }
    let slack = (1.0 - min_prob * n_states as f64).max(0.0);
    let row = |rng: &mut R| -> Vec<f64> {
        if slack == 0.0 {
            return vec![1.0 / n_states as f64; n_states];
        }
        sample_simplex(n_states, rng)
            .into_iter()
            .map(|u| min_prob + slack * u)
            .collect()
    };
    let mut transition = Vec::with_capacity(n_states);
    let mut reward = Vec::with_capacity(n_states);
    for _ in 0..n_states {
        let mut t = Vec::with_capacity(n_actions);
        let mut r = Vec::with_capacity(n_actions);
        for _ in 0..n_actions {
            t.push(row(rng));
            r.push(rng.gen::<f64>());
        }
        transition.push(t);
        reward.push(r);
    }
    let initial = row(rng);
    TabularMdp::new(n_states, n_actions, horizon, transition, reward, initial)
}

/// Random linear MDP of feature dimension `dim` over `S x A`.
///
/// Dense instances draw `phi(s,a)` uniformly on the probability simplex (so
/// `||phi||_2 <= 1`), `d` probability measures `mu_i` over states, and reward
/// weights in `[0, 1]^d`. Sparse instances route transitions through a random
/// coordinate block `J` of size `s`: each feature puts a simplex point on a
/// random nonempty subset of `J` and fills its remaining nonzeros outside `J`
/// with `U[0, 1]` values, so `||phi||_inf <= 1` and `||phi||_0 <= s`; the reward
/// weight is `s`-sparse with entries in `[0, 1/s]`.
pub fn make_linear_mdp<R: Rng + ?Sized>(
    dim: usize,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    sparsity: Option<usize>,
    rng: &mut R,
) -> Result<LinearMdp, MdpError> {
    if dim == 0 || n_states == 0 || n_actions == 0 || horizon == 0 {
        return Err(MdpError::Parameter(
            "dim, n_states, n_actions and horizon must be positive".into(),
        ));
    }
    let initial = sample_simplex(n_states, rng);
    match sparsity {
        None => {
            let features = (0..n_states)
                .map(|_| (0..n_actions).map(|_| sample_simplex(dim, rng)).collect())
                .collect();
            let measures = (0..dim).map(|_| sample_simplex(n_states, rng)).collect();
            let theta = (0..dim).map(|_| rng.gen::<f64>()).collect();
            LinearMdp::new(None, horizon, features, theta, measures, initial)
        }
        Some(k) => {
            if k == 0 || k > dim {
                return Err(MdpError::Parameter(format!(
                    "sparsity {k} must lie in 1..={dim}"
                )));
            }
            let block = random_subset(dim, k, rng);
            let outside: Vec<usize> = (0..dim).filter(|i| !block.contains(i)).collect();
            let mut measures = vec![vec![0.0; n_states]; dim];
            for &i in &block {
                measures[i] = sample_simplex(n_states, rng);
            }
            let mut features = Vec::with_capacity(n_states);
            for _ in 0..n_states {
                let mut row = Vec::with_capacity(n_actions);
                for _ in 0..n_actions {
                    let mut phi = vec![0.0; dim];
                    let in_block = rng.gen_range(1..=k);
                    let chosen = random_subset(k, in_block, rng);
                    let weights = sample_simplex(in_block, rng);
                    for (c, w) in chosen.iter().zip(weights) {
                        phi[block[*c]] = w;
                    }
                    let extra = (k - in_block).min(outside.len());
                    for c in random_subset(outside.len(), extra, rng) {
                        phi[outside[c]] = rng.gen::<f64>();
                    }
                    row.push(phi);
                }
                features.push(row);
            }
            let mut theta = vec![0.0; dim];
            for i in random_subset(dim, k, rng) {
                theta[i] = rng.gen::<f64>() / k as f64;
            }
            LinearMdp::new(Some(k), horizon, features, theta, measures, initial)
        }
    }
}

/// Sorted random subset of `0..n` of size `k` (partial Fisher-Yates).
fn random_subset<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut out = idx[..k.min(n)].to_vec();
    out.sort_unstable();
    out
}

/// Uniformly random deterministic policy.
pub fn random_deterministic_policy<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    tag: &str,
    rng: &mut R,
) -> Policy {
    let actions = (0..mdp.horizon())
        .map(|_| {
            (0..mdp.n_states())
                .map(|_| rng.gen_range(0..mdp.n_actions()))
                .collect()
        })
        .collect();
    Policy::GreedyFromQ {
        tag: tag.to_string(),
        actions,
    }
}

/// Largest policy space `enumerate_deterministic_policies` will walk.
pub const MAX_ENUMERATED_POLICIES: u128 = 1 << 20;

/// Every deterministic step-dependent policy, `A^(S*H)` of them.
pub fn enumerate_deterministic_policies(mdp: &TabularMdp) -> Result<Vec<Policy>, MdpError> {
    let (ns, na, hz) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let slots = ns * hz;
    let count = (na as u128).checked_pow(slots as u32).unwrap_or(u128::MAX);
    if count > MAX_ENUMERATED_POLICIES {
        return Err(MdpError::Parameter(format!(
            "{count} deterministic policies is too many to enumerate"
        )));
    }
    let mut out = Vec::with_capacity(count as usize);
    for code in 0..count {
        let mut c = code;
        let mut actions = vec![vec![0; ns]; hz];
        for slot in 0..slots {
            actions[slot / ns][slot % ns] = (c % na as u128) as usize;
            c /= na as u128;
        }
        out.push(Policy::GreedyFromQ {
            tag: format!("enum-{code}"),
            actions,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn chain(h: usize) -> TabularMdp {
        // s0 -> s1 deterministically, s1 absorbing; reward 1 only in s1.
        TabularMdp::new(
            2,
            1,
            h,
            vec![vec![vec![0.0, 1.0]], vec![vec![0.0, 1.0]]],
            vec![vec![0.0], vec![1.0]],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn single_state_rollout_repeats_state_and_reward() {
        let mdp = TabularMdp::new(
            1,
            2,
            5,
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![0.25, 0.75]],
            vec![1.0],
        )
        .unwrap();
        let t = rollout(&mdp, &Policy::UniformRandom, 1, &mut seeded(1));
        assert_eq!(t.steps.len(), 5);
        for st in &t.steps {
            assert_eq!(st.state, 0);
            assert_eq!(st.next_state, 0);
            assert_eq!(st.reward, mdp.reward(0, st.action));
        }
    }

    #[test]
    fn deterministic_chain_rewards() {
        let t = rollout(&chain(2), &Policy::UniformRandom, 1, &mut seeded(0));
        let r: Vec<f64> = t.steps.iter().map(|s| s.reward).collect();
        assert_eq!(r, vec![0.0, 1.0]);
    }

    #[test]
    fn seeded_rollouts_repeat() {
        let mdp = make_random_tabular(4, 3, 6, 0.0, &mut seeded(9)).unwrap();
        let a = rollout(&mdp, &Policy::UniformRandom, 1, &mut seeded(42));
        let b = rollout(&mdp, &Policy::UniformRandom, 1, &mut seeded(42));
        assert_eq!(a, b);
    }

    #[test]
    fn chain_value_telescopes() {
        // Length-H chain with reward 1 at the final step only.
        let h = 4;
        let mut transition = vec![vec![vec![0.0; h]]; h];
        let mut reward = vec![vec![0.0]; h];
        for s in 0..h {
            transition[s][0][(s + 1).min(h - 1)] = 1.0;
        }
        reward[h - 1][0] = 1.0;
        let mut init = vec![0.0; h];
        init[0] = 1.0;
        let mdp = TabularMdp::new(h, 1, h, transition, reward, init).unwrap();
        let opt = exact_value_iteration(&mdp);
        assert_eq!(opt.v[0][0], 1.0);
    }

    #[test]
    fn zero_rewards_give_zero_q() {
        let mut mdp = make_random_tabular(3, 2, 3, 0.0, &mut seeded(2)).unwrap();
        mdp.reward.iter_mut().flatten().for_each(|r| *r = 0.0);
        let opt = exact_value_iteration(&mdp);
        assert!(opt.q.iter().flatten().flatten().all(|&q| q == 0.0));
        assert_eq!(policy_value(&mdp, &Policy::UniformRandom), 0.0);
    }

    #[test]
    fn value_iteration_matches_policy_enumeration() {
        for seed in 0..5 {
            let mdp = make_random_tabular(3, 2, 3, 0.0, &mut seeded(seed)).unwrap();
            let opt = exact_value_iteration(&mdp);
            let policies = enumerate_deterministic_policies(&mdp).unwrap();
            assert_eq!(policies.len(), 512);
            let best = policies
                .iter()
                .map(|p| policy_value(&mdp, p))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((best - opt.expected_initial_value(&mdp)).abs() < 1e-12);
            // Per-state optimality too.
            for p in &policies {
                let v = policy_state_values(&mdp, p);
                for s in 0..3 {
                    assert!(opt.v[0][s] >= v[0][s] - 1e-12);
                }
            }
        }
    }

    #[test]
    fn value_iteration_is_pure_and_bounded() {
        let mdp = make_random_tabular(5, 3, 4, 0.05, &mut seeded(11)).unwrap();
        let a = exact_value_iteration(&mdp);
        let b = exact_value_iteration(&mdp);
        assert_eq!(a, b);
        for h in 0..4 {
            for s in 0..5 {
                assert!(a.v[h][s] >= 0.0 && a.v[h][s] <= (4 - h) as f64);
            }
        }
    }

    #[test]
    fn greedy_optimal_policy_attains_optimum() {
        let mdp = make_random_tabular(5, 3, 4, 0.05, &mut seeded(5)).unwrap();
        let opt = exact_value_iteration(&mdp);
        let pi = opt.greedy_policy("opt");
        assert!((policy_value(&mdp, &pi) - opt.expected_initial_value(&mdp)).abs() < 1e-10);
    }

    #[test]
    fn uniform_value_matches_monte_carlo() {
        let mdp = make_random_tabular(4, 3, 3, 0.0, &mut seeded(21)).unwrap();
        let exact = policy_value(&mdp, &Policy::UniformRandom);
        let n = 1_000_000;
        let mut rng = seeded(22);
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for k in 0..n {
            let g = rollout(&mdp, &Policy::UniformRandom, k, &mut rng).total_return();
            sum += g;
            sumsq += g * g;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - exact).abs() <= 3.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn min_prob_generator() {
        let uniform = make_random_tabular(4, 2, 2, 0.25, &mut seeded(0)).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                assert!(uniform.transition_row(s, a).iter().all(|&p| p == 0.25));
            }
        }
        let free = make_random_tabular(6, 2, 2, 0.0, &mut seeded(1)).unwrap();
        for s in 0..6 {
            for a in 0..2 {
                let sum: f64 = free.transition_row(s, a).iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
        let m = make_random_tabular(5, 3, 4, 0.05, &mut seeded(2)).unwrap();
        let mut rows = 0;
        for s in 0..5 {
            for a in 0..3 {
                rows += 1;
                let min = m.transition_row(s, a).iter().cloned().fold(1.0, f64::min);
                assert!(min >= 0.05);
            }
        }
        assert_eq!(rows, 75 / 5);
        assert!(m.initial_dist().iter().all(|&p| p >= 0.05));
        assert!(matches!(
            make_random_tabular(5, 3, 4, 0.3, &mut seeded(0)),
            Err(MdpError::InfeasibleMinProb { .. })
        ));
    }

    #[test]
    fn rejects_invalid_rows() {
        let bad = TabularMdp::new(
            2,
            1,
            1,
            vec![vec![vec![0.5, 0.6]], vec![vec![0.5, 0.5]]],
            vec![vec![0.0], vec![0.0]],
            vec![1.0, 0.0],
        );
        assert!(matches!(bad, Err(MdpError::NotADistribution { .. })));
        let bad_reward = TabularMdp::new(
            1,
            1,
            1,
            vec![vec![vec![1.0]]],
            vec![vec![1.5]],
            vec![1.0],
        );
        assert!(matches!(bad_reward, Err(MdpError::RewardOutOfRange { .. })));
    }

    #[test]
    fn linear_generator_dense() {
        let m = make_linear_mdp(3, 4, 2, 3, None, &mut seeded(3)).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                let n: f64 = m.feature(s, a).iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(n <= 1.0 + 1e-12);
            }
        }
        assert!(m.renormalization_gap() < 1e-12);
        let again = make_linear_mdp(3, 4, 2, 3, None, &mut seeded(3)).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn linear_generator_one_dimensional_is_forced() {
        let m = make_linear_mdp(1, 3, 2, 2, None, &mut seeded(4)).unwrap();
        let view = m.tabular_view();
        let first = view.transition_row(0, 0).to_vec();
        for s in 0..3 {
            for a in 0..2 {
                assert_eq!(m.feature(s, a), &[1.0]);
                assert_eq!(view.transition_row(s, a), first.as_slice());
            }
        }
    }

    #[test]
    fn linear_generator_sparse() {
        let m = make_linear_mdp(8, 6, 3, 2, Some(2), &mut seeded(5)).unwrap();
        for s in 0..6 {
            for a in 0..3 {
                let phi = m.feature(s, a);
                assert!(nnz(phi) <= 2);
                assert!(phi.iter().all(|x| x.abs() <= 1.0));
            }
        }
        assert!(nnz(m.reward_param()) <= 2);
        assert!(m.renormalization_gap() < 1e-12);
        assert!(make_linear_mdp(4, 2, 2, 2, Some(5), &mut seeded(0)).is_err());
        assert!(make_linear_mdp(0, 2, 2, 2, None, &mut seeded(0)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = EpisodicMdp::Tabular(make_random_tabular(3, 2, 2, 0.1, &mut seeded(0)).unwrap());
        let l = EpisodicMdp::Linear(make_linear_mdp(3, 3, 2, 2, None, &mut seeded(0)).unwrap());
        for m in [t, l] {
            let s = serde_json::to_string(&m).unwrap();
            let back: EpisodicMdp = serde_json::from_str(&s).unwrap();
            assert_eq!(m, back);
        }
        let bad = r#"{"kind":"tabular","n_states":1,"n_actions":1,"horizon":1,
            "transition":[[[0.5]]],"reward":[[0.0]],"initial_dist":[1.0]}"#;
        assert!(serde_json::from_str::<EpisodicMdp>(bad).is_err());
    }
}
