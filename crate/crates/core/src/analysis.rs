//! Surprise-bound estimates, regret curves and optimism audits.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::RunLog;
use crate::function_space::{combinations, FunctionClass};
use crate::linalg::SymEig;
use crate::mdp::{
    enumerate_deterministic_policies, policy_state_values, policy_value, random_deterministic_policy,
    state_distributions, EpisodicMdp, LinearMdp, MdpError, OptimalValues, Policy, TabularMdp,
};

/// Eigenvalues at or below this are treated as singular.
pub const SINGULAR_EIGENVALUE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("restricted eigenvalue enumeration supports d <= 16, got {0}")]
    DimensionTooLarge(usize),
    #[error("no probe policies given")]
    NoPolicies,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurpriseMethod {
    MinEigenvalue,
    RestrictedEigenvalue,
    EmpiricalRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurpriseEstimate {
    /// Infinite when some probe covariance is singular.
    pub l1_upper: f64,
    pub method: SurpriseMethod,
    pub policies_probed: usize,
    /// Policy attaining the smallest eigenvalue.
    pub worst_policy_tag: Option<String>,
    pub worst_step: Option<usize>,
    pub min_eigenvalue: f64,
}

/// `E_{s ~ D_h(pi), a ~ pi_h(s)}[phi phi^T]` for every step `h`, by exact forward recursion.
pub fn feature_covariances(mdp: &LinearMdp, policy: &Policy) -> Vec<DMatrix<f64>> {
    let view = mdp.tabular_view();
    let d = mdp.dim();
    let dists = state_distributions(view, policy);
    dists
        .iter()
        .enumerate()
        .map(|(h, dist)| {
            let mut cov = DMatrix::zeros(d, d);
            for (s, &ps) in dist.iter().enumerate() {
                if ps == 0.0 {
                    continue;
                }
                for a in 0..view.n_actions() {
                    let w = ps * policy.prob(h, s, a, view.n_actions());
                    if w == 0.0 {
                        continue;
                    }
                    let phi = mdp.feature(s, a);
                    for i in 0..d {
                        for j in 0..d {
                            cov[(i, j)] += w * phi[i] * phi[j];
                        }
                    }
                }
            }
            cov
        })
        .collect()
}

/// Every deterministic policy, when there are at most `2^20` of them.
pub fn exhaustive_policies(view: &TabularMdp) -> Result<Vec<Policy>, AnalysisError> {
    Ok(enumerate_deterministic_policies(view)?)
}

/// `extra` policies, then the uniform policy, then `n_random` random deterministic ones.
pub fn probe_policies<R: Rng + ?Sized>(
    view: &TabularMdp,
    extra: &[Policy],
    n_random: usize,
    rng: &mut R,
) -> Vec<Policy> {
    let mut out = extra.to_vec();
    out.push(Policy::UniformRandom);
    for i in 0..n_random {
        out.push(random_deterministic_policy(view, &format!("random-{i}"), rng));
    }
    out
}

fn worst_over<F: Fn(&DMatrix<f64>) -> f64>(
    mdp: &LinearMdp,
    policies: &[Policy],
    measure: F,
) -> Result<(f64, Option<String>, Option<usize>), AnalysisError> {
    if policies.is_empty() {
        return Err(AnalysisError::NoPolicies);
    }
    let mut min = f64::INFINITY;
    let mut tag = None;
    let mut step = None;
    for p in policies {
        for (h, cov) in feature_covariances(mdp, p).iter().enumerate() {
            let v = measure(cov);
            if v < min {
                min = v;
                tag = Some(p.tag().to_string());
                step = Some(h);
            }
        }
    }
    Ok((min, tag, step))
}

/// `sup_{pi, h} 1 / lambda_min(E[phi phi^T])` over the probe policies.
pub fn surprise_bound_linear(mdp: &LinearMdp, policies: &[Policy]) -> Result<SurpriseEstimate, AnalysisError> {
    let (min, tag, step) = worst_over(mdp, policies, |c| SymEig::new(c).min())?;
    Ok(SurpriseEstimate {
        l1_upper: if min <= SINGULAR_EIGENVALUE { f64::INFINITY } else { 1.0 / min },
        method: SurpriseMethod::MinEigenvalue,
        policies_probed: policies.len(),
        worst_policy_tag: tag,
        worst_step: step,
        min_eigenvalue: min,
    })
}

/// Minimum Rayleigh quotient of `a` over vectors with at most `k` nonzeros.
///
/// By eigenvalue interlacing it suffices to scan supports of size exactly `min(k, d)`.
pub fn restricted_min_eigenvalue(a: &DMatrix<f64>, k: usize) -> Result<f64, AnalysisError> {
    let d = a.nrows();
    if d > 16 {
        return Err(AnalysisError::DimensionTooLarge(d));
    }
    let size = k.min(d);
    let mut min = f64::INFINITY;
    for sup in combinations(d, size) {
        let sub = DMatrix::from_fn(size, size, |i, j| a[(sup[i], sup[j])]);
        min = min.min(SymEig::new(&sub).min());
    }
    Ok(min)
}

/// `sup_{pi, h} 4s / psi_min(E[phi phi^T])` with `psi_min` over `4s`-sparse directions.
pub fn surprise_bound_sparse(
    mdp: &LinearMdp,
    policies: &[Policy],
    sparsity: usize,
) -> Result<SurpriseEstimate, AnalysisError> {
    if mdp.dim() > 16 {
        return Err(AnalysisError::DimensionTooLarge(mdp.dim()));
    }
    let k = 4 * sparsity;
    let (min, tag, step) =
        worst_over(mdp, policies, |c| restricted_min_eigenvalue(c, k).unwrap_or(f64::NAN))?;
    Ok(SurpriseEstimate {
        l1_upper: if min <= SINGULAR_EIGENVALUE { f64::INFINITY } else { k as f64 / min },
        method: SurpriseMethod::RestrictedEigenvalue,
        policies_probed: policies.len(),
        worst_policy_tag: tag,
        worst_step: step,
        min_eigenvalue: min,
    })
}

/// One-hot features: the covariance is diagonal with the occupancy of each pair.
pub fn surprise_bound_tabular(view: &TabularMdp, policies: &[Policy]) -> Result<SurpriseEstimate, AnalysisError> {
    if policies.is_empty() {
        return Err(AnalysisError::NoPolicies);
    }
    let na = view.n_actions();
    let mut min = f64::INFINITY;
    let mut tag = None;
    let mut step = None;
    for p in policies {
        for (h, dist) in state_distributions(view, p).iter().enumerate() {
            for (s, ds) in dist.iter().enumerate() {
                for a in 0..na {
                    let occ = ds * p.prob(h, s, a, na);
                    if occ < min {
                        min = occ;
                        tag = Some(p.tag().to_string());
                        step = Some(h);
                    }
                }
            }
        }
    }
    Ok(SurpriseEstimate {
        l1_upper: if min <= SINGULAR_EIGENVALUE { f64::INFINITY } else { 1.0 / min },
        method: SurpriseMethod::MinEigenvalue,
        policies_probed: policies.len(),
        worst_policy_tag: tag,
        worst_step: step,
        min_eigenvalue: min,
    })
}

/// Eigenvalue bound for any environment, probing every deterministic policy when
/// that is feasible and `n_random` random ones otherwise.
pub fn estimate_l1<R: Rng + ?Sized>(
    env: &EpisodicMdp,
    n_random: usize,
    rng: &mut R,
) -> Result<SurpriseEstimate, AnalysisError> {
    let view = env.tabular_view();
    let policies = match exhaustive_policies(view) {
        Ok(mut all) => {
            all.push(Policy::UniformRandom);
            all
        }
        Err(_) => probe_policies(view, &[], n_random, rng),
    };
    match env {
        EpisodicMdp::Tabular(t) => surprise_bound_tabular(t, &policies),
        EpisodicMdp::Linear(l) => match l.sparsity() {
            Some(s) => surprise_bound_sparse(l, &policies, s),
            None => surprise_bound_linear(l, &policies),
        },
    }
}

/// Largest observed `(f - f')^2(s, a) / E_{pi,h}[(f - f')^2]` over random member
/// pairs, every `(s, a)` and every probe `(pi, h)`. Differences are taken on the
/// raw predictors. Pairs that agree everywhere are skipped.
pub fn empirical_surprise_ratio<R: Rng + ?Sized>(
    class: &FunctionClass,
    view: &TabularMdp,
    policies: &[Policy],
    n_pairs: usize,
    rng: &mut R,
) -> f64 {
    let (ns, na) = (view.n_states(), view.n_actions());
    let weights: Vec<Vec<Vec<f64>>> = policies
        .iter()
        .flat_map(|p| {
            state_distributions(view, p)
                .into_iter()
                .enumerate()
                .map(|(h, dist)| {
                    (0..ns)
                        .map(|s| (0..na).map(|a| dist[s] * p.prob(h, s, a, na)).collect())
                        .collect()
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let mut best: f64 = 0.0;
    for _ in 0..n_pairs {
        let f = class.random_member(rng);
        let g = class.random_member(rng);
        let diff: Vec<Vec<f64>> = (0..ns)
            .map(|s| (0..na).map(|a| class.raw_value(&f, s, a) - class.raw_value(&g, s, a)).collect())
            .collect();
        let peak = diff.iter().flatten().fold(0.0_f64, |m, v| m.max(v * v));
        if peak == 0.0 {
            continue;
        }
        for w in &weights {
            let mut e = 0.0;
            for s in 0..ns {
                for a in 0..na {
                    e += w[s][a] * diff[s][a] * diff[s][a];
                }
            }
            let ratio = if e > 0.0 { peak / e } else { f64::INFINITY };
            best = best.max(ratio);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    /// `E_mu[V*_1] - E_mu[V^{pi_k}_1]` per episode.
    pub per_episode: Vec<f64>,
    pub cumulative: Vec<f64>,
    /// `V*_1(s_1^k) - V^{pi_k}_1(s_1^k)` at the realized initial state.
    pub realized_per_episode: Vec<f64>,
    pub realized_cumulative: Vec<f64>,
    /// Log-log slope over the second half; `None` when undefined.
    pub slope: Option<f64>,
    pub final_cumulative: f64,
}

/// OLS slope of `ln(cum_k)` on `ln(k)` over `k` in `[ceil(K/2), K]`, skipping
/// nonpositive entries. `cum[i]` is the value after episode `i + 1`.
pub fn loglog_slope(cum: &[f64]) -> Option<f64> {
    let k = cum.len();
    if k < 2 {
        return None;
    }
    let start = k.div_ceil(2);
    let pts: Vec<(f64, f64)> = (start..=k)
        .filter(|&e| cum[e - 1] > 1e-12)
        .map(|e| ((e as f64).ln(), cum[e - 1].ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

fn running_sum(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    v.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

pub fn regret_report(log: &RunLog, optimal: &OptimalValues, mdp: &TabularMdp) -> RegretReport {
    let v_star = optimal.expected_initial_value(mdp);
    let mut cache: Vec<(String, f64, Vec<f64>)> = Vec::new();
    let mut per_episode = Vec::with_capacity(log.trajectories.len());
    let mut realized = Vec::with_capacity(log.trajectories.len());
    for (i, t) in log.trajectories.iter().enumerate() {
        let policy = log.policy_for_episode(i as u64 + 1);
        let key = policy.tag().to_string();
        let idx = match cache.iter().position(|c| c.0 == key) {
            Some(j) => j,
            None => {
                let value = policy_value(mdp, policy);
                let v0 = policy_state_values(mdp, policy).swap_remove(0);
                cache.push((key, value, v0));
                cache.len() - 1
            }
        };
        per_episode.push(v_star - cache[idx].1);
        let s0 = t.initial_state();
        realized.push(optimal.value_at(0, s0) - cache[idx].2[s0]);
    }
    let cumulative = running_sum(&per_episode);
    let realized_cumulative = running_sum(&realized);
    RegretReport {
        slope: loglog_slope(&cumulative),
        final_cumulative: cumulative.last().copied().unwrap_or(0.0),
        per_episode,
        cumulative,
        realized_per_episode: realized,
        realized_cumulative,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimismAudit {
    /// Distinct `(m, h, s, a)` visited under an optimistic epoch model.
    pub visited: u64,
    /// Visits with `Q^m_h < Q*_h - 1e-9`.
    pub violations: u64,
    pub violation_rate: f64,
    /// Visits with `Q^m_h > r + P V^m_{h+1} + 2 b^m_h + 1e-9`.
    pub upper_violations: u64,
    /// Largest `Q^m_h - (r + P V^m_{h+1} + 2 b^m_h)`.
    pub max_upper_excess: f64,
}

/// Checks optimism and the upper Bellman sandwich on every `(m, h, s, a)` visited
/// during epoch `m`.
pub fn optimism_audit(log: &RunLog, optimal: &OptimalValues, mdp: &TabularMdp) -> OptimismAudit {
    let horizon = mdp.horizon();
    let mut audit = OptimismAudit {
        max_upper_excess: f64::NEG_INFINITY,
        ..Default::default()
    };
    for model in &log.epochs {
        let start = log.schedule.tau(model.epoch);
        let end = start + log.schedule.epoch_len(model.epoch);
        let mut seen = std::collections::BTreeSet::new();
        for t in &log.trajectories[(start - 1) as usize..(end - 1) as usize] {
            for (h, st) in t.steps.iter().enumerate() {
                seen.insert((h, st.state, st.action));
            }
        }
        for (h, s, a) in seen {
            audit.visited += 1;
            let q = model.q_table[h][s][a];
            if q < optimal.q[h][s][a] - 1e-9 {
                audit.violations += 1;
            }
            let v_next: Vec<f64> = if h + 1 < horizon {
                model.q_table[h + 1]
                    .iter()
                    .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                    .collect()
            } else {
                vec![0.0; mdp.n_states()]
            };
            let backup = mdp.reward(s, a) + mdp.expected_next(s, a, &v_next);
            let excess = q - (backup + 2.0 * model.bonus_table[h][s][a]);
            audit.max_upper_excess = audit.max_upper_excess.max(excess);
            if excess > 1e-9 {
                audit.upper_violations += 1;
            }
        }
    }
    if audit.visited > 0 {
        audit.violation_rate = audit.violations as f64 / audit.visited as f64;
    } else {
        audit.max_upper_excess = 0.0;
    }
    audit
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretDecomposition {
    pub realized_regret: f64,
    /// `tau_{M0+1} H`.
    pub warmup_term: f64,
    /// `2 sum b^m_h(s_h^k, a_h^k)` over epochs `M0 + 1..=M`.
    pub bonus_term: f64,
    /// `8 H sqrt(T ln(16/delta))`.
    pub martingale_term: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compares realized regret with the warm-up, bonus and martingale terms.
pub fn regret_decomposition(log: &RunLog, report: &RegretReport, horizon: usize) -> RegretDecomposition {
    let sched = &log.schedule;
    let h = horizon as f64;
    let warmup_term = if sched.m0 < sched.m_max + 1 {
        sched.tau(sched.m0 + 1) as f64 * h
    } else {
        // All warm-up: every episode is inside the first term.
        (sched.k + 1) as f64 * h
    };
    let mut bonus_sum = 0.0;
    for model in &log.epochs {
        if model.epoch <= sched.m0 {
            continue;
        }
        let start = sched.tau(model.epoch);
        for t in &log.trajectories[(start - 1) as usize..(start - 1 + sched.epoch_len(model.epoch)) as usize] {
            for (step, st) in t.steps.iter().enumerate() {
                bonus_sum += model.bonus_table[step][st.state][st.action];
            }
        }
    }
    let martingale_term = 8.0 * h * (sched.t_total as f64 * (16.0 / log.config.delta).ln()).sqrt();
    let bonus_term = 2.0 * bonus_sum;
    let bound = warmup_term + bonus_term + martingale_term;
    let realized_regret = report.realized_cumulative.last().copied().unwrap_or(0.0);
    RegretDecomposition {
        realized_regret,
        warmup_term,
        bonus_term,
        martingale_term,
        bound,
        holds: realized_regret <= bound + 1e-6,
    }
}
