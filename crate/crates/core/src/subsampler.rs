//! Uniform subsampling of a replay buffer.
//!
//! Each occurrence in the source buffer is kept independently with probability
//! `p` and, when kept, contributes `1/p` copies. `p` is always a unit fraction.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::function_space::StateActionSet;
use crate::mdp::{Action, State};
use crate::rng::seeded;

/// Default constant in the sampling-probability target `C L1 ln(4N/delta) / (eps^2 |Z|)`.
pub const DEFAULT_SAMPLING_CONSTANT: f64 = 384.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must lie in (0, 1), got {value}")]
    OutOfUnitInterval { name: &'static str, value: f64 },
    #[error("source set is empty")]
    EmptySource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    /// Cover resolution `eps/72 * sqrt(lambda delta / |Z|)`.
    pub eps0: f64,
    /// Unrounded target probability.
    pub target: f64,
    pub p: f64,
    pub inv_p: u64,
    pub lambda: f64,
    pub eps: f64,
    pub delta: f64,
    pub l1: f64,
    pub z_size: u64,
    pub log_cover_at_eps0: f64,
    pub sampling_constant: f64,
}

impl SamplingPlan {
    /// Upper bound `4|Z|/delta` on `|Z'|` that holds with probability `1 - delta/4`.
    pub fn size_bound(&self) -> f64 {
        4.0 * self.z_size as f64 / self.delta
    }

    /// Bound `6 C L1 ln(4N/delta) / eps^2` on the distinct count (2304 for `C = 384`).
    pub fn distinct_bound(&self) -> f64 {
        6.0 * self.sampling_constant * self.l1 * self.log_term() / (self.eps * self.eps)
    }

    /// `ln(4 N(F, eps0) / delta)`.
    pub fn log_term(&self) -> f64 {
        4f64.ln() + self.log_cover_at_eps0 - self.delta.ln()
    }
}

/// `eps/72 * sqrt(lambda delta / |Z|)`.
pub fn cover_resolution(eps: f64, lambda: f64, delta: f64, z_size: u64) -> f64 {
    eps / 72.0 * (lambda * delta / z_size as f64).sqrt()
}

/// Largest `n` with `1/n >= x`, i.e. `floor(1/x)`, robust to `1/x` landing just
/// below an integer.
pub fn unit_fraction_at_least(x: f64) -> u64 {
    if x >= 1.0 {
        return 1;
    }
    let q = 1.0 / x;
    let r = q.round();
    let n = if (q - r).abs() <= 1e-9 * q { r } else { q.floor() };
    if n >= u64::MAX as f64 {
        u64::MAX
    } else {
        (n as u64).max(1)
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), SamplerError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(SamplerError::NonPositive { name, value })
    }
}

fn unit(name: &'static str, value: f64) -> Result<(), SamplerError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(SamplerError::OutOfUnitInterval { name, value })
    }
}

pub fn make_plan(
    l1: f64,
    log_cover_at_eps0: f64,
    eps: f64,
    lambda: f64,
    delta: f64,
    z_size: u64,
) -> Result<SamplingPlan, SamplerError> {
    make_plan_with_constant(
        DEFAULT_SAMPLING_CONSTANT,
        l1,
        log_cover_at_eps0,
        eps,
        lambda,
        delta,
        z_size,
    )
}

pub fn make_plan_with_constant(
    sampling_constant: f64,
    l1: f64,
    log_cover_at_eps0: f64,
    eps: f64,
    lambda: f64,
    delta: f64,
    z_size: u64,
) -> Result<SamplingPlan, SamplerError> {
    positive("sampling_constant", sampling_constant)?;
    positive("l1", l1)?;
    positive("lambda", lambda)?;
    unit("eps", eps)?;
    unit("delta", delta)?;
    if z_size == 0 {
        return Err(SamplerError::EmptySource);
    }
    if !(log_cover_at_eps0 >= 0.0) {
        return Err(SamplerError::NonPositive {
            name: "log_cover_at_eps0",
            value: log_cover_at_eps0,
        });
    }
    let log_term = 4f64.ln() + log_cover_at_eps0 - delta.ln();
    let target = sampling_constant * l1 * log_term / (eps * eps * z_size as f64);
    let inv_p = unit_fraction_at_least(target);
    Ok(SamplingPlan {
        eps0: cover_resolution(eps, lambda, delta, z_size),
        target,
        p: 1.0 / inv_p as f64,
        inv_p,
        lambda,
        eps,
        delta,
        l1,
        z_size,
        log_cover_at_eps0,
        sampling_constant,
    })
}

/// Output of one subsampling call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSet {
    pub set: StateActionSet,
    pub inv_p: u64,
    pub source_size: u64,
    pub seed: u64,
}

impl SampledSet {
    pub fn size(&self) -> u64 {
        self.set.total()
    }

    pub fn distinct(&self) -> usize {
        self.set.distinct()
    }
}

/// Subsamples a buffer given in canonical order, one coin per entry.
pub fn uniform_sample_sequence(
    items: &[(State, Action)],
    plan: &SamplingPlan,
    seed: u64,
) -> SampledSet {
    let mut set = StateActionSet::new();
    if plan.inv_p == 1 {
        for &(s, a) in items {
            set.insert(s, a, 1);
        }
    } else {
        let mut rng = seeded(seed);
        for &(s, a) in items {
            if rng.gen_range(0..plan.inv_p) == 0 {
                set.insert(s, a, plan.inv_p);
            }
        }
    }
    SampledSet {
        set,
        inv_p: plan.inv_p,
        source_size: items.len() as u64,
        seed,
    }
}

/// Subsamples a multiset; occurrences are visited in sorted `(s, a)` order.
pub fn uniform_sample(z: &StateActionSet, plan: &SamplingPlan, seed: u64) -> SampledSet {
    let mut set = StateActionSet::new();
    if plan.inv_p == 1 {
        set = z.clone();
    } else {
        let mut rng = seeded(seed);
        for ((s, a), n) in z.iter() {
            let kept = (0..n).filter(|_| rng.gen_range(0..plan.inv_p) == 0).count() as u64;
            set.insert(s, a, kept * plan.inv_p);
        }
    }
    SampledSet {
        set,
        inv_p: plan.inv_p,
        source_size: z.total(),
        seed,
    }
}

/// Number of distinct state-action pairs.
pub fn distinct_count(z: &StateActionSet) -> usize {
    z.distinct()
}
