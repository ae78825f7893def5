//! Quick self-check suites exposed through `lsvi verify`.

use serde::{Deserialize, Serialize};

use crate::agent::{self, AgentConfig, EpochSchedule};
use crate::analysis::{empirical_surprise_ratio, exhaustive_policies, surprise_bound_linear};
use crate::bonus::{sandwich_check, BonusConfig};
use crate::function_space::{FunctionClass, StateActionSet};
use crate::mdp::{make_linear_mdp, make_random_tabular, EpisodicMdp};
use crate::rng::{derive_seed, seeded};
use crate::subsampler::{make_plan, uniform_sample};

pub const SUITES: &[&str] = &["schedule", "erm-count", "subsampler", "width", "bonus", "surprise"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs a named suite, or `None` for an unknown name.
pub fn run_suite(name: &str) -> Option<SuiteReport> {
    let checks = match name {
        "schedule" => schedule(),
        "erm-count" => erm_count(),
        "subsampler" => subsampler(),
        "width" => width(),
        "bonus" => bonus(),
        "surprise" => surprise(),
        _ => return None,
    };
    Some(SuiteReport {
        suite: name.to_string(),
        checks,
    })
}

fn schedule() -> Vec<Check> {
    let mut ok = true;
    for m in 1..=20 {
        let s = EpochSchedule::new(m, 1, 1);
        let sum: u64 = (1..=m).map(|e| s.epoch_len(e)).sum();
        ok &= sum == s.k && (1..=m).all(|e| s.tau(e) == 1 << (e - 1));
    }
    vec![check("tau doubles and epochs sum to K for M <= 20", ok, String::new())]
}

fn erm_count() -> Vec<Check> {
    let mdp = make_random_tabular(5, 3, 4, 0.05, &mut seeded(0)).expect("valid generator input");
    let env = EpisodicMdp::Tabular(mdp);
    let class = FunctionClass::tabular(5, 3, 4);
    let cfg = AgentConfig::new(11, 0.1, 1.0, 1.0);
    match agent::run(&env, &class, &cfg, 0) {
        Ok(log) => {
            let expected = 4 * (log.schedule.m_max + 1 - log.schedule.m0) as u64;
            vec![
                check(
                    "erm_solves == H (M - M0 + 1)",
                    log.counters.erm_solves == expected,
                    format!("{} vs {}", log.counters.erm_solves, expected),
                ),
                check(
                    "trajectory count == K",
                    log.trajectories.len() as u64 == log.schedule.k,
                    format!("{}", log.trajectories.len()),
                ),
            ]
        }
        Err(e) => vec![check("run completes", false, e.to_string())],
    }
}

fn subsampler() -> Vec<Check> {
    let mut z = StateActionSet::new();
    for i in 0..1000 {
        z.insert(i % 37, i % 3, 1);
    }
    let plan = make_plan(1e-3, 5.0, 0.5, 1.0, 0.5, z.total()).expect("valid plan");
    let trials = 400;
    let mut over = 0;
    let mut total = 0u64;
    for t in 0..trials {
        let s = uniform_sample(&z, &plan, derive_seed(11, &[t]));
        total += s.size();
        over += (s.size() as f64 > plan.size_bound()) as u32;
    }
    let mean = total as f64 / trials as f64;
    vec![
        check("p is a unit fraction below 1", plan.inv_p > 1, format!("inv_p = {}", plan.inv_p)),
        check(
            "mean |Z'| within 5% of |Z|",
            (mean - 1000.0).abs() <= 50.0,
            format!("mean = {mean:.1}"),
        ),
        check(
            "|Z'| <= 4|Z|/delta frequency <= delta/4 + 0.02",
            (over as f64 / trials as f64) <= 0.145,
            format!("{over}/{trials}"),
        ),
    ]
}

fn width() -> Vec<Check> {
    let class = FunctionClass::tabular(2, 1, 2);
    let f = crate::function_space::FunctionHandle {
        class: crate::function_space::ClassKind::Tabular,
        params: vec![1.5, 1.0],
    };
    let mut z = StateActionSet::new();
    z.insert(0, 0, 4);
    let w = class.width_at(&f, &z, 1.0, 0, 0).value;
    let bf = class.brute_force_width(&f, &z, 1.0, 0, 0, 1e-3).unwrap_or(f64::NAN);
    vec![
        check("closed form width 1.0", (w - 1.0).abs() < 1e-12, format!("{w}")),
        check("brute force agrees", (w - bf).abs() <= 2e-3, format!("{bf}")),
        check(
            "unseen pair has full width",
            class.width_at(&f, &z, 1.0, 1, 0).value == 3.0,
            String::new(),
        ),
    ]
}

fn bonus() -> Vec<Check> {
    let class = FunctionClass::tabular(2, 2, 2);
    let mut rng = seeded(5);
    let f = class.random_member(&mut rng);
    let mut z = StateActionSet::new();
    z.insert(0, 0, 5);
    z.insert(1, 1, 2);
    let cfg = BonusConfig::new(0.2, 64, 1.0, 1e-6, 2);
    let probes = [(0, 0), (0, 1), (1, 0), (1, 1)];
    match sandwich_check(&class, &f, &z, &cfg, &probes, 20, 3) {
        Ok(r) => vec![check(
            "sandwich violation rate <= delta + 0.02",
            r.violation_rate <= 0.22,
            format!("{:.4}", r.violation_rate),
        )],
        Err(e) => vec![check("sandwich check runs", false, e.to_string())],
    }
}

fn surprise() -> Vec<Check> {
    let mut out = Vec::new();
    for seed in 0..3 {
        let mdp = make_linear_mdp(3, 3, 2, 2, None, &mut seeded(seed)).expect("valid generator input");
        let view = mdp.tabular_view().clone();
        let policies = match exhaustive_policies(&view) {
            Ok(p) => p,
            Err(e) => {
                out.push(check("enumerate policies", false, e.to_string()));
                continue;
            }
        };
        let est = match surprise_bound_linear(&mdp, &policies) {
            Ok(e) => e,
            Err(e) => {
                out.push(check("eigenvalue bound", false, e.to_string()));
                continue;
            }
        };
        let class = FunctionClass::linear(mdp.feature_table(), 3, 2, 2).expect("features within the unit ball");
        let ratio = empirical_surprise_ratio(&class, &view, &policies, 200, &mut seeded(seed + 100));
        out.push(check(
            &format!("instance {seed}: empirical ratio <= eigenvalue bound"),
            ratio <= est.l1_upper,
            format!("{ratio:.4} <= {:.4}", est.l1_upper),
        ));
    }
    out
}
