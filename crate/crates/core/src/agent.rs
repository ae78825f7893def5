//! Optimistic least-squares value iteration on a doubling epoch schedule.
//!
//! Episodes `1..tau_{M0} - 1` run the uniform policy. From epoch `M0` on, each
//! epoch starts with a backward pass that fits `f_h` by least squares on the
//! whole replay buffer, builds a width bonus `b_h`, and sets
//! `Q_h = min(f_h + b_h, H)`. The greedy policy is then frozen for the epoch.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bonus::{compute_bonus_from_sequence, BonusConfig, BonusDoc, BonusError, BonusFunction, BonusRecord};
use crate::function_space::{FunctionClass, FunctionHandle, FunctionSpaceError, LabeledSet, StateActionSet};
use crate::mdp::{argmax_lowest, Action, EpisodicMdp, Policy, State, Trajectory};
use crate::rng::{derive_seed, seeded};
use crate::subsampler::DEFAULT_SAMPLING_CONSTANT;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("class does not match the environment: {0}")]
    ClassMismatch(String),
    #[error(transparent)]
    Bonus(#[from] BonusError),
    #[error(transparent)]
    Function(#[from] FunctionSpaceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BonusMode {
    Width,
    /// Ablation with `b = 0`.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub m_max: u32,
    pub delta: f64,
    pub l1: f64,
    pub c_prime: f64,
    pub zeta: f64,
    pub sampling_constant: f64,
    pub bonus_mode: BonusMode,
}

impl AgentConfig {
    pub fn new(m_max: u32, delta: f64, l1: f64, c_prime: f64) -> Self {
        Self {
            m_max,
            delta,
            l1,
            c_prime,
            zeta: 0.0,
            sampling_constant: DEFAULT_SAMPLING_CONSTANT,
            bonus_mode: BonusMode::Width,
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.m_max == 0 || self.m_max > 40 {
            return Err(AgentError::Config(format!("m_max = {} not in 1..=40", self.m_max)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(AgentError::Config(format!("delta = {} not in (0, 1)", self.delta)));
        }
        if !(self.l1 > 0.0) || !(self.c_prime > 0.0) || !(self.zeta >= 0.0) || !(self.sampling_constant > 0.0) {
            return Err(AgentError::Config(
                "l1, c_prime and sampling_constant must be positive, zeta nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// `ceil(ln(x))` floored at 1, snapping to an integer when `ln(x)` is within 1e-9 of one.
pub fn warmup_from_inner(inner: f64) -> u32 {
    if !(inner > 1.0) {
        return 1;
    }
    let l = inner.ln();
    let r = l.round();
    let c = if (l - r).abs() <= 1e-9 { r } else { l.ceil() };
    (c.max(1.0)).min(u32::MAX as f64) as u32
}

/// `M0 = ceil(ln(16 L1^2 ln(128 T N^2 / delta)))` with `ln N = log_cover`, floored at 1.
pub fn warmup_epochs(l1: f64, t_total: u64, delta: f64, log_cover: f64) -> u32 {
    let inner = 16.0 * l1 * l1 * ((128.0 * t_total as f64 / delta).ln() + 2.0 * log_cover);
    warmup_from_inner(inner)
}

/// `ln N(F, delta / (9216 T^2))`, the covering term entering `M0`.
pub fn warmup_log_cover(class: &FunctionClass, t_total: u64, delta: f64) -> Result<f64, FunctionSpaceError> {
    let t = t_total as f64;
    class.log_covering_number_f(delta / (9216.0 * t * t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSchedule {
    /// First optimistic epoch; `m_max + 1` when the run is all warm-up.
    pub m0: u32,
    /// Unclipped value of the `M0` formula.
    pub m0_formula: u32,
    pub m_max: u32,
    /// `tau[m - 1] = 2^(m - 1)` for `m` in `1..=m_max + 1`.
    pub tau: Vec<u64>,
    pub k: u64,
    pub t_total: u64,
    /// Set when the formula exceeded `m_max`.
    pub capped: bool,
}

impl EpochSchedule {
    pub fn new(m_max: u32, horizon: usize, m0_formula: u32) -> Self {
        let tau: Vec<u64> = (1..=m_max + 1).map(|m| 1u64 << (m - 1)).collect();
        let k = (1u64 << m_max) - 1;
        let capped = m0_formula > m_max;
        Self {
            m0: m0_formula.clamp(1, m_max + 1),
            m0_formula,
            m_max,
            tau,
            k,
            t_total: horizon as u64 * k,
            capped,
        }
    }

    pub fn tau(&self, m: u32) -> u64 {
        self.tau[(m - 1) as usize]
    }

    /// Number of episodes in epoch `m`.
    pub fn epoch_len(&self, m: u32) -> u64 {
        self.tau(m)
    }

    /// Epoch containing one-indexed episode `k`.
    pub fn epoch_of(&self, k: u64) -> u32 {
        64 - k.leading_zeros()
    }

    pub fn is_warmup(&self, k: u64) -> bool {
        self.epoch_of(k) < self.m0
    }

    pub fn optimistic_epochs(&self) -> std::ops::RangeInclusive<u32> {
        self.m0..=self.m_max
    }

    pub fn warmup_episodes(&self) -> u64 {
        self.tau(self.m0) - 1
    }
}

/// Per-epoch fitted model. Tables are indexed `[h][s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochModel {
    pub epoch: u32,
    pub fits: Vec<FunctionHandle>,
    pub bonuses: Vec<Option<BonusDoc>>,
    pub bonus_records: Vec<Option<BonusRecord>>,
    pub bonus_table: Vec<Vec<Vec<f64>>>,
    pub q_table: Vec<Vec<Vec<f64>>>,
    pub policy: Policy,
    pub solver_converged: bool,
}

impl EpochModel {
    /// `min(f_h(s,a) + b_h(s,a), H)`.
    pub fn q_value(&self, class: &FunctionClass, h: usize, s: State, a: Action) -> f64 {
        q_value(class, &self.fits[h], self.bonus_table[h][s][a], s, a)
    }

    pub fn greedy_action(&self, h: usize, s: State) -> Action {
        argmax_lowest(&self.q_table[h][s])
    }
}

pub fn q_value(class: &FunctionClass, f: &FunctionHandle, bonus: f64, s: State, a: Action) -> f64 {
    (class.evaluate(f, s, a) + bonus).min(class.horizon() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub erm_solves: u64,
    pub bonus_builds: u64,
    pub guard_trips: u64,
    pub nonconverged_solves: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub schedule: EpochSchedule,
    pub trajectories: Vec<Trajectory>,
    pub epochs: Vec<EpochModel>,
    pub counters: Counters,
    pub config: AgentConfig,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl RunLog {
    /// Policy executed in one-indexed episode `k`.
    pub fn policy_for_episode(&self, k: u64) -> &Policy {
        const UNIFORM: Policy = Policy::UniformRandom;
        let m = self.schedule.epoch_of(k);
        match self.epochs.iter().find(|e| e.epoch == m) {
            Some(e) => &e.policy,
            None => &UNIFORM,
        }
    }

    pub fn epoch_model(&self, m: u32) -> Option<&EpochModel> {
        self.epochs.iter().find(|e| e.epoch == m)
    }

    pub fn returns(&self) -> Vec<f64> {
        self.trajectories.iter().map(|t| t.total_return()).collect()
    }

    pub fn mean_return(&self) -> f64 {
        if self.trajectories.is_empty() {
            return 0.0;
        }
        self.returns().iter().sum::<f64>() / self.trajectories.len() as f64
    }
}

fn check_class(env: &EpisodicMdp, class: &FunctionClass) -> Result<(), AgentError> {
    let view = env.tabular_view();
    if view.n_states() != class.n_states()
        || view.n_actions() != class.n_actions()
        || view.horizon() != class.horizon()
    {
        return Err(AgentError::ClassMismatch(format!(
            "environment is {}x{}x{}, class is {}x{}x{}",
            view.n_states(),
            view.n_actions(),
            view.horizon(),
            class.n_states(),
            class.n_actions(),
            class.horizon()
        )));
    }
    Ok(())
}

/// Runs the full algorithm for `K = 2^M - 1` episodes.
pub fn run(env: &EpisodicMdp, class: &FunctionClass, config: &AgentConfig, seed: u64) -> Result<RunLog, AgentError> {
    config.validate()?;
    check_class(env, class)?;
    let horizon = class.horizon();
    let t_total = horizon as u64 * ((1u64 << config.m_max) - 1);
    let log_cover = warmup_log_cover(class, t_total, config.delta)?;
    let m0 = warmup_epochs(config.l1, t_total, config.delta, log_cover);
    run_with_schedule(env, class, config, EpochSchedule::new(config.m_max, horizon, m0), seed)
}

/// Same loop with `b = 0`.
pub fn baseline_lsvi_no_bonus(
    env: &EpisodicMdp,
    class: &FunctionClass,
    config: &AgentConfig,
    seed: u64,
) -> Result<RunLog, AgentError> {
    let cfg = AgentConfig {
        bonus_mode: BonusMode::Zero,
        ..*config
    };
    run(env, class, &cfg, seed)
}

/// Uniform policy for every episode.
pub fn baseline_uniform(env: &EpisodicMdp, config: &AgentConfig, seed: u64) -> Result<RunLog, AgentError> {
    config.validate()?;
    let horizon = env.horizon();
    let schedule = EpochSchedule::new(config.m_max, horizon, config.m_max + 1);
    let mut rng = seeded(derive_seed(seed, &[0]));
    let trajectories = (1..=schedule.k)
        .map(|k| env.rollout(&Policy::UniformRandom, k as usize, &mut rng))
        .collect();
    Ok(RunLog {
        schedule,
        trajectories,
        epochs: Vec::new(),
        counters: Counters::default(),
        config: *config,
        seed,
        warnings: Vec::new(),
    })
}

/// Runs the loop on an explicit schedule.
pub fn run_with_schedule(
    env: &EpisodicMdp,
    class: &FunctionClass,
    config: &AgentConfig,
    schedule: EpochSchedule,
    seed: u64,
) -> Result<RunLog, AgentError> {
    config.validate()?;
    check_class(env, class)?;
    let horizon = class.horizon();
    let mut warnings = Vec::new();
    if schedule.capped {
        warnings.push(format!(
            "warm-up formula gives M0 = {} > M = {}; the run is all warm-up",
            schedule.m0_formula, schedule.m_max
        ));
    }
    let bonus_cfg = BonusConfig {
        delta: config.delta,
        t_total: schedule.t_total,
        l1: config.l1,
        c_prime: config.c_prime,
        zeta: config.zeta,
        horizon,
        sampling_constant: config.sampling_constant,
    };
    let mut rng = seeded(derive_seed(seed, &[0]));
    let mut trajectories: Vec<Trajectory> = Vec::with_capacity(schedule.k as usize);
    for k in 1..=schedule.warmup_episodes() {
        trajectories.push(env.rollout(&Policy::UniformRandom, k as usize, &mut rng));
    }
    let mut epochs = Vec::new();
    let mut counters = Counters::default();
    for m in schedule.optimistic_epochs() {
        let model = fit_epoch(class, config, &bonus_cfg, &trajectories, m, seed, &mut counters)?;
        let start = schedule.tau(m);
        for k in start..start + schedule.epoch_len(m) {
            trajectories.push(env.rollout(&model.policy, k as usize, &mut rng));
        }
        epochs.push(model);
    }
    if counters.nonconverged_solves > 0 {
        warnings.push(format!("{} least-squares solves hit the iteration cap", counters.nonconverged_solves));
    }
    Ok(RunLog {
        schedule,
        trajectories,
        epochs,
        counters,
        config: *config,
        seed,
        warnings,
    })
}

/// Backward pass over the buffer of completed episodes.
fn fit_epoch(
    class: &FunctionClass,
    config: &AgentConfig,
    bonus_cfg: &BonusConfig,
    buffer: &[Trajectory],
    m: u32,
    seed: u64,
    counters: &mut Counters,
) -> Result<EpochModel, AgentError> {
    let horizon = class.horizon();
    let (ns, na) = (class.n_states(), class.n_actions());
    let pairs: Vec<(State, Action)> = buffer
        .iter()
        .flat_map(|t| t.steps.iter().map(|st| (st.state, st.action)))
        .collect();
    let mut fits = vec![class.zero(); horizon];
    let mut bonuses = vec![None; horizon];
    let mut records = vec![None; horizon];
    let mut bonus_table = vec![vec![vec![0.0; na]; ns]; horizon];
    let mut q_table = vec![vec![vec![0.0; na]; ns]; horizon];
    let mut converged = true;
    let mut v_next: Vec<f64> = vec![0.0; ns];
    for h in (0..horizon).rev() {
        let mut data = LabeledSet::new();
        for t in buffer {
            for st in &t.steps {
                data.push(st.state, st.action, st.reward + v_next[st.next_state]);
            }
        }
        let f = if data.is_empty() {
            class.zero()
        } else {
            let fit = class.erm_fit(&data)?;
            if !fit.converged {
                counters.nonconverged_solves += 1;
                converged = false;
            }
            fit.handle
        };
        counters.erm_solves += 1;
        let bonus: Option<BonusFunction> = match config.bonus_mode {
            BonusMode::Zero => None,
            BonusMode::Width => {
                counters.bonus_builds += 1;
                let b = if pairs.is_empty() {
                    let beta = crate::bonus::beta(class, bonus_cfg)?;
                    BonusFunction::from_region(class, &f, &StateActionSet::new(), beta)
                } else {
                    compute_bonus_from_sequence(class, &f, &pairs, bonus_cfg, derive_seed(seed, &[1, m as u64, h as u64]))?
                };
                counters.guard_trips += b.guard_tripped() as u64;
                Some(b)
            }
        };
        for s in 0..ns {
            for a in 0..na {
                let b = bonus.as_ref().map_or(0.0, |b| b.value(class, s, a));
                bonus_table[h][s][a] = b;
                q_table[h][s][a] = q_value(class, &f, b, s, a);
            }
        }
        v_next = (0..ns)
            .map(|s| q_table[h][s].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        records[h] = bonus.as_ref().map(|b| b.record.clone());
        bonuses[h] = bonus.as_ref().map(|b| b.to_doc());
        fits[h] = f;
    }
    let actions: Vec<Vec<Action>> = q_table
        .iter()
        .map(|qh| qh.iter().map(|row| argmax_lowest(row)).collect())
        .collect();
    Ok(EpochModel {
        epoch: m,
        fits,
        bonuses,
        bonus_records: records,
        bonus_table,
        q_table,
        policy: Policy::GreedyFromQ {
            tag: format!("epoch-{m}"),
            actions,
        },
        solver_converged: converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub l1: f64,
    pub mean_return: f64,
    pub episodes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best_l1: f64,
    pub candidates: Vec<CandidateResult>,
    pub probes: Vec<RunLog>,
    /// Probe trajectories followed by the exploitation run, renumbered consecutively.
    pub combined: Vec<Trajectory>,
    pub exploit: Option<RunLog>,
}

/// Grid `{l_min * 2^i} ∩ [l_min, l_max]`.
pub fn l1_grid(l_min: f64, l_max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut l = l_min;
    while l <= l_max * (1.0 + 1e-12) {
        out.push(l);
        l *= 2.0;
    }
    out
}

/// Largest `M` with `2^M - 1 <= episodes`.
pub fn largest_m_within(episodes: u64) -> u32 {
    let mut m = 0;
    while m < 40 && (1u64 << (m + 1)) - 1 <= episodes {
        m += 1;
    }
    m
}

/// Probes each candidate `L1` with its own run, then exploits the candidate
/// with the highest mean per-episode return on the remaining budget of
/// `2^total_m_max - 1` episodes. A single candidate skips probing.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_l1(
    env: &EpisodicMdp,
    class: &FunctionClass,
    l_min: f64,
    l_max: f64,
    per_candidate_episodes: u64,
    total_m_max: u32,
    config: &AgentConfig,
    seed: u64,
) -> Result<GridSearchResult, AgentError> {
    if !(l_min > 0.0 && l_min <= l_max) {
        return Err(AgentError::Config(format!("need 0 < l_min <= l_max, got [{l_min}, {l_max}]")));
    }
    let grid = l1_grid(l_min, l_max);
    let total = (1u64 << total_m_max) - 1;
    if grid.len() == 1 {
        let cfg = AgentConfig {
            l1: grid[0],
            m_max: total_m_max,
            ..*config
        };
        let log = run(env, class, &cfg, seed)?;
        return Ok(GridSearchResult {
            best_l1: grid[0],
            candidates: vec![CandidateResult {
                l1: grid[0],
                mean_return: log.mean_return(),
                episodes: log.schedule.k,
            }],
            combined: log.trajectories.clone(),
            probes: Vec::new(),
            exploit: Some(log),
        });
    }
    if per_candidate_episodes == 0 {
        return Err(AgentError::Config("probe budget must be positive".into()));
    }
    let probe_m = largest_m_within(per_candidate_episodes);
    let probe_k = (1u64 << probe_m) - 1;
    if probe_k * grid.len() as u64 > total {
        return Err(AgentError::Config(format!(
            "{} probes of {probe_k} episodes exceed the budget of {total}",
            grid.len()
        )));
    }
    let probes: Vec<RunLog> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &l1)| {
            let cfg = AgentConfig {
                l1,
                m_max: probe_m,
                ..*config
            };
            run(env, class, &cfg, derive_seed(seed, &[2, i as u64]))
        })
        .collect::<Result<_, _>>()?;
    let candidates: Vec<CandidateResult> = grid
        .iter()
        .zip(&probes)
        .map(|(&l1, log)| CandidateResult {
            l1,
            mean_return: log.mean_return(),
            episodes: log.schedule.k,
        })
        .collect();
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.mean_return > candidates[best].mean_return {
            best = i;
        }
    }
    let best_l1 = grid[best];
    let mut combined: Vec<Trajectory> = probes.iter().flat_map(|l| l.trajectories.iter().cloned()).collect();
    let remaining = total - probe_k * grid.len() as u64;
    let exploit_m = largest_m_within(remaining);
    let exploit = if exploit_m >= 1 {
        let cfg = AgentConfig {
            l1: best_l1,
            m_max: exploit_m,
            ..*config
        };
        let log = run(env, class, &cfg, seed)?;
        combined.extend(log.trajectories.iter().cloned());
        Some(log)
    } else {
        None
    };
    for (i, t) in combined.iter_mut().enumerate() {
        t.episode = i + 1;
    }
    Ok(GridSearchResult {
        best_l1,
        candidates,
        probes,
        combined,
        exploit,
    })
}

/// Visit counts of `(h, s, a)` over the first `upto_episode` episodes.
pub fn visited_pairs(log: &RunLog, upto_episode: u64) -> BTreeMap<(usize, State, Action), u64> {
    let mut out = BTreeMap::new();
    for t in log.trajectories.iter().take(upto_episode as usize) {
        for (h, st) in t.steps.iter().enumerate() {
            *out.entry((h, st.state, st.action)).or_insert(0) += 1;
        }
    }
    out
}
