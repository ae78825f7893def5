//! Width-function exploration bonuses over a subsampled replay buffer.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function_space::{
    ConfidenceRegion, FunctionClass, FunctionHandle, FunctionSpaceError, StateActionSet,
};
use crate::mdp::{Action, State};
use crate::rng::derive_seed;
use crate::subsampler::{
    make_plan_with_constant, uniform_sample, uniform_sample_sequence, SamplerError,
    SamplingPlan, DEFAULT_SAMPLING_CONSTANT,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BonusError {
    #[error("invalid bonus configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Function(#[from] FunctionSpaceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BonusConfig {
    pub delta: f64,
    pub t_total: u64,
    pub l1: f64,
    pub c_prime: f64,
    pub zeta: f64,
    pub horizon: usize,
    pub sampling_constant: f64,
}

impl BonusConfig {
    pub fn new(delta: f64, t_total: u64, l1: f64, c_prime: f64, horizon: usize) -> Self {
        Self {
            delta,
            t_total,
            l1,
            c_prime,
            zeta: 0.0,
            horizon,
            sampling_constant: DEFAULT_SAMPLING_CONSTANT,
        }
    }

    pub fn validate(&self) -> Result<(), BonusError> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BonusError::Config(format!("delta = {} not in (0, 1)", self.delta)));
        }
        if !(self.c_prime > 0.0) {
            return Err(BonusError::Config(format!("c_prime = {} must be positive", self.c_prime)));
        }
        if !(self.zeta >= 0.0) {
            return Err(BonusError::Config(format!("zeta = {} must be nonnegative", self.zeta)));
        }
        if !(self.l1 > 0.0) {
            return Err(BonusError::Config(format!("l1 = {} must be positive", self.l1)));
        }
        if self.t_total == 0 || self.horizon == 0 {
            return Err(BonusError::Config("t_total and horizon must be positive".into()));
        }
        Ok(())
    }

    fn t(&self) -> f64 {
        self.t_total as f64
    }
}

/// The logarithmic factors entering the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaTerms {
    /// `ln(T / delta)`.
    pub log_t_over_delta: f64,
    /// `ln N(F, delta / T^3)`.
    pub log_cover_f: f64,
    /// `ln N(S x A, delta / T^2)`.
    pub log_cover_sa: f64,
}

pub fn beta_terms(class: &FunctionClass, config: &BonusConfig) -> Result<BetaTerms, BonusError> {
    let t = config.t();
    Ok(BetaTerms {
        log_t_over_delta: (t / config.delta).ln(),
        log_cover_f: class.log_covering_number_f(config.delta / t.powi(3))?,
        log_cover_sa: class.log_covering_number_sa(config.delta / t.powi(2))?,
    })
}

/// `c' (L1 H^2 ln^3(T/delta) lnN_F lnN_SA + H T zeta)`.
pub fn beta_from_terms(config: &BonusConfig, terms: &BetaTerms) -> f64 {
    let h = config.horizon as f64;
    let main = config.l1
        * h
        * h
        * terms.log_t_over_delta.powi(3)
        * terms.log_cover_f
        * terms.log_cover_sa;
    config.c_prime * (main + h * config.t() * config.zeta)
}

pub fn beta(class: &FunctionClass, config: &BonusConfig) -> Result<f64, BonusError> {
    Ok(beta_from_terms(config, &beta_terms(class, config)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardTrip {
    SizeCap,
    DistinctCap,
}

/// Audit record of one bonus construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonusRecord {
    pub beta: f64,
    pub radius: f64,
    pub source_size: u64,
    pub sampled_size: u64,
    pub sampled_distinct: usize,
    pub inv_p: u64,
    pub seed: u64,
    pub size_cap: f64,
    pub distinct_cap: f64,
    pub guard: Option<GuardTrip>,
    /// Resolution of the cover the anchor and points would be rounded to.
    pub rounding_resolution: f64,
}

/// Bonus `(s, a) -> width` of `{f : ||f - anchor||^2_Zhat <= 3 beta + 2}`.
#[derive(Debug, Clone)]
pub struct BonusFunction {
    region: ConfidenceRegion,
    pub record: BonusRecord,
}

/// Serializable form of a bonus: anchor parameters, kept set and radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BonusDoc {
    pub anchor: FunctionHandle,
    pub kept: StateActionSet,
    pub radius: f64,
}

impl BonusFunction {
    /// Bonus over an explicit confidence region, bypassing subsampling.
    pub fn from_region(class: &FunctionClass, anchor: &FunctionHandle, kept: &StateActionSet, beta: f64) -> Self {
        let radius = 3.0 * beta + 2.0;
        let region = class.confidence_region(anchor, kept, radius);
        Self {
            region,
            record: BonusRecord {
                beta,
                radius,
                source_size: kept.total(),
                sampled_size: kept.total(),
                sampled_distinct: kept.distinct(),
                inv_p: 1,
                seed: 0,
                size_cap: f64::INFINITY,
                distinct_cap: f64::INFINITY,
                guard: None,
                rounding_resolution: 0.0,
            },
        }
    }

    pub fn value(&self, class: &FunctionClass, s: State, a: Action) -> f64 {
        self.region.width(class, s, a).value
    }

    pub fn radius(&self) -> f64 {
        self.region.radius()
    }

    pub fn kept(&self) -> &StateActionSet {
        self.region.kept()
    }

    pub fn anchor(&self) -> &FunctionHandle {
        self.region.anchor()
    }

    pub fn guard_tripped(&self) -> bool {
        self.record.guard.is_some()
    }

    pub fn to_doc(&self) -> BonusDoc {
        BonusDoc {
            anchor: self.anchor().clone(),
            kept: self.kept().clone(),
            radius: self.radius(),
        }
    }
}

/// Subsampling parameters derived from the bonus configuration.
pub fn bonus_plan(class: &FunctionClass, config: &BonusConfig, z_size: u64) -> Result<SamplingPlan, BonusError> {
    let t = config.t();
    let inner_delta = config.delta / (16.0 * t);
    let lambda = inner_delta * inner_delta;
    let eps = 0.5;
    let eps0 = crate::subsampler::cover_resolution(eps, lambda, inner_delta, z_size.max(1));
    let log_cover = class.log_covering_number_f(eps0)?;
    Ok(make_plan_with_constant(
        config.sampling_constant,
        config.l1,
        log_cover,
        eps,
        lambda,
        inner_delta,
        z_size,
    )?)
}

/// Caps `(64 T^2 / delta, 9216 L1 ln(64 T N(F, delta/(9216 T^2)) / delta))`.
pub fn guard_caps(class: &FunctionClass, config: &BonusConfig) -> Result<(f64, f64), BonusError> {
    let t = config.t();
    let d = config.delta;
    let size_cap = 64.0 * t * t / d;
    let log_n = class.log_covering_number_f(d / (9216.0 * t * t))?;
    let distinct_cap = 9216.0 * config.l1 * ((64.0 * t / d).ln() + log_n);
    Ok((size_cap, distinct_cap))
}

/// Bonus from a buffer given in canonical `(episode, h)` order.
pub fn compute_bonus_from_sequence(
    class: &FunctionClass,
    f_bar: &FunctionHandle,
    items: &[(State, Action)],
    config: &BonusConfig,
    seed: u64,
) -> Result<BonusFunction, BonusError> {
    config.validate()?;
    let plan = bonus_plan(class, config, items.len() as u64)?;
    let sampled = uniform_sample_sequence(items, &plan, seed);
    finish(class, f_bar, sampled.set, items.len() as u64, &plan, config, seed)
}

pub fn compute_bonus(
    class: &FunctionClass,
    f_bar: &FunctionHandle,
    z: &StateActionSet,
    config: &BonusConfig,
    seed: u64,
) -> Result<BonusFunction, BonusError> {
    config.validate()?;
    let plan = bonus_plan(class, config, z.total())?;
    let sampled = uniform_sample(z, &plan, seed);
    finish(class, f_bar, sampled.set, z.total(), &plan, config, seed)
}

fn finish(
    class: &FunctionClass,
    f_bar: &FunctionHandle,
    sampled: StateActionSet,
    source_size: u64,
    plan: &SamplingPlan,
    config: &BonusConfig,
    seed: u64,
) -> Result<BonusFunction, BonusError> {
    let (size_cap, distinct_cap) = guard_caps(class, config)?;
    let guard = if sampled.total() as f64 > size_cap {
        Some(GuardTrip::SizeCap)
    } else if sampled.distinct() as f64 >= distinct_cap {
        Some(GuardTrip::DistinctCap)
    } else {
        None
    };
    let beta = beta(class, config)?;
    let radius = 3.0 * beta + 2.0;
    let kept = if guard.is_some() {
        StateActionSet::new()
    } else {
        sampled.clone()
    };
    let t = config.t();
    let record = BonusRecord {
        beta,
        radius,
        source_size,
        sampled_size: sampled.total(),
        sampled_distinct: sampled.distinct(),
        inv_p: plan.inv_p,
        seed,
        size_cap,
        distinct_cap,
        guard,
        rounding_resolution: 1.0 / (8.0 * (64.0 * t * t / config.delta).sqrt()),
    };
    Ok(BonusFunction {
        region: class.confidence_region(f_bar, &kept, radius),
        record,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub violation_rate: f64,
    pub violations: u64,
    pub checks: u64,
    pub guard_trips: u64,
}

/// Fraction of `(trial, probe)` pairs where the subsampled bonus leaves
/// `[w(radius beta), w(radius 12 beta + 12)]`, both widths on the full set `z`.
pub fn sandwich_check(
    class: &FunctionClass,
    f_bar: &FunctionHandle,
    z: &StateActionSet,
    config: &BonusConfig,
    probes: &[(State, Action)],
    n_trials: usize,
    seed: u64,
) -> Result<SandwichReport, BonusError> {
    let b = beta(class, config)?;
    let lower = class.confidence_region(f_bar, z, b);
    let upper = class.confidence_region(f_bar, z, 12.0 * b + 12.0);
    let bounds: Vec<(f64, f64)> = probes
        .iter()
        .map(|&(s, a)| (lower.width(class, s, a).value, upper.width(class, s, a).value))
        .collect();
    let mut violations = 0;
    let mut guard_trips = 0;
    for trial in 0..n_trials {
        let bonus = compute_bonus(class, f_bar, z, config, derive_seed(seed, &[trial as u64]))?;
        guard_trips += bonus.guard_tripped() as u64;
        for (&(s, a), &(lo, hi)) in probes.iter().zip(&bounds) {
            let w = bonus.value(class, s, a);
            if w < lo - 1e-9 || w > hi + 1e-9 {
                violations += 1;
            }
        }
    }
    let checks = (n_trials * probes.len()) as u64;
    Ok(SandwichReport {
        violation_rate: if checks == 0 { 0.0 } else { violations as f64 / checks as f64 },
        violations,
        checks,
        guard_trips,
    })
}
