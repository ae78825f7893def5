//! Experiment configuration, seeded fan-out, baselines and persisted outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{self, AgentConfig, BonusMode, RunLog};
use crate::analysis::{regret_report, RegretReport};
use crate::function_space::{ClassKind, CoverConstants, FunctionClass};
use crate::mdp::{exact_value_iteration, make_linear_mdp, make_random_tabular, EpisodicMdp};
use crate::rng::{derive_seed, seeded};
use crate::subsampler::DEFAULT_SAMPLING_CONSTANT;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("config error: {0}")]
    Config(String),
    #[error("environment error: {0}")]
    Environment(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    Tabular {
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        #[serde(default)]
        min_prob: f64,
        seed: u64,
        /// Rewards shifted by `U[-zeta, zeta]` and clipped into `[0, 1]`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reward_perturbation: Option<f64>,
    },
    Linear {
        dim: usize,
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sparsity: Option<usize>,
        seed: u64,
    },
}

impl EnvironmentSpec {
    pub fn build(&self) -> Result<EpisodicMdp, HarnessError> {
        let env_err = |e: crate::mdp::MdpError| HarnessError::Environment(e.to_string());
        match *self {
            EnvironmentSpec::Tabular {
                n_states,
                n_actions,
                horizon,
                min_prob,
                seed,
                reward_perturbation,
            } => {
                let mut mdp = make_random_tabular(n_states, n_actions, horizon, min_prob, &mut seeded(seed))
                    .map_err(env_err)?;
                if let Some(z) = reward_perturbation {
                    if !(z >= 0.0) {
                        return Err(HarnessError::Config(format!("reward_perturbation = {z} must be >= 0")));
                    }
                    mdp = mdp.with_reward_perturbation(z, &mut seeded(derive_seed(seed, &[7])));
                }
                Ok(EpisodicMdp::Tabular(mdp))
            }
            EnvironmentSpec::Linear {
                dim,
                n_states,
                n_actions,
                horizon,
                sparsity,
                seed,
            } => Ok(EpisodicMdp::Linear(
                make_linear_mdp(dim, n_states, n_actions, horizon, sparsity, &mut seeded(seed))
                    .map_err(env_err)?,
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub kind: ClassKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covers: Option<CoverConstants>,
}

impl ClassSpec {
    pub fn build(&self, env: &EpisodicMdp) -> Result<FunctionClass, HarnessError> {
        let class = FunctionClass::for_mdp(self.kind, env).map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(match self.covers {
            Some(c) => class.with_covers(c),
            None => class,
        })
    }
}

fn default_c_prime() -> f64 {
    1.0
}

fn default_sampling_constant() -> f64 {
    DEFAULT_SAMPLING_CONSTANT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub m_max: u32,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    /// `[l_min, l_max]` for the doubling grid search.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_l1: Option<[f64; 2]>,
    /// Episodes per grid candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_probe_episodes: Option<u64>,
    #[serde(default = "default_c_prime")]
    pub c_prime: f64,
    #[serde(default)]
    pub zeta: f64,
    #[serde(default = "default_sampling_constant")]
    pub sampling_constant: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    UniformRandom,
    LsviNoBonus,
}

impl Baseline {
    pub fn name(&self) -> &'static str {
        match self {
            Baseline::UniformRandom => "uniform_random",
            Baseline::LsviNoBonus => "lsvi_no_bonus",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSpec,
    pub class: ClassSpec,
    pub algorithm: AlgorithmSpec,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub baselines: Vec<Baseline>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let a = &self.algorithm;
        if !(a.delta > 0.0 && a.delta < 1.0) {
            return Err(HarnessError::Config(format!("delta = {} must lie in (0, 1)", a.delta)));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must be nonempty".into()));
        }
        if a.m_max == 0 || a.m_max > 30 {
            return Err(HarnessError::Config(format!("m_max = {} must lie in 1..=30", a.m_max)));
        }
        if !(a.c_prime > 0.0) {
            return Err(HarnessError::Config(format!("c_prime = {} must be positive", a.c_prime)));
        }
        if !(a.zeta >= 0.0) {
            return Err(HarnessError::Config(format!("zeta = {} must be nonnegative", a.zeta)));
        }
        if !(a.sampling_constant > 0.0) {
            return Err(HarnessError::Config("sampling_constant must be positive".into()));
        }
        match (a.l1, a.grid_l1) {
            (None, None) => return Err(HarnessError::Config("one of l1 or grid_l1 is required".into())),
            (Some(l), _) if !(l > 0.0) => return Err(HarnessError::Config(format!("l1 = {l} must be positive"))),
            (_, Some([lo, hi])) if !(lo > 0.0 && lo <= hi) => {
                return Err(HarnessError::Config(format!("grid_l1 = [{lo}, {hi}] needs 0 < min <= max")))
            }
            _ => {}
        }
        if matches!(self.environment, EnvironmentSpec::Tabular { .. }) && self.class.kind != ClassKind::Tabular {
            return Err(HarnessError::Config("linear classes need a linear environment".into()));
        }
        Ok(())
    }

    /// Agent settings; `l1` falls back to the grid's lower end.
    pub fn agent_config(&self) -> AgentConfig {
        let a = &self.algorithm;
        AgentConfig {
            m_max: a.m_max,
            delta: a.delta,
            l1: a.l1.or(a.grid_l1.map(|g| g[0])).unwrap_or(1.0),
            c_prime: a.c_prime,
            zeta: a.zeta,
            sampling_constant: a.sampling_constant,
            bonus_mode: BonusMode::Width,
        }
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

/// One algorithm run with its regret report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    /// Sub-runs in execution order: grid probes then the exploitation run, or a single run.
    pub logs: Vec<RunLog>,
    pub report: RegretReport,
    /// Epoch of each episode within its sub-run.
    pub epochs: Vec<u32>,
    pub returns: Vec<f64>,
    pub best_l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub main: Result<VariantRun, String>,
    pub baselines: BTreeMap<Baseline, Result<VariantRun, String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub seeds: Vec<SeedResult>,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Variant {
    Main,
    Base(Baseline),
}

fn combine(logs: Vec<RunLog>, env: &EpisodicMdp, best_l1: Option<f64>) -> VariantRun {
    let view = env.tabular_view();
    let optimal = exact_value_iteration(view);
    let mut per_episode = Vec::new();
    let mut realized = Vec::new();
    let mut epochs = Vec::new();
    let mut returns = Vec::new();
    for log in &logs {
        let r = regret_report(log, &optimal, view);
        per_episode.extend(r.per_episode);
        realized.extend(r.realized_per_episode);
        for (i, t) in log.trajectories.iter().enumerate() {
            epochs.push(log.schedule.epoch_of(i as u64 + 1));
            returns.push(t.total_return());
        }
    }
    let cumulative = cumulative_sum(&per_episode);
    let realized_cumulative = cumulative_sum(&realized);
    let report = RegretReport {
        slope: crate::analysis::loglog_slope(&cumulative),
        final_cumulative: cumulative.last().copied().unwrap_or(0.0),
        per_episode,
        cumulative,
        realized_per_episode: realized,
        realized_cumulative,
    };
    VariantRun {
        logs,
        report,
        epochs,
        returns,
        best_l1,
    }
}

fn cumulative_sum(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    v.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn run_variant(
    config: &ExperimentConfig,
    env: &EpisodicMdp,
    class: &FunctionClass,
    variant: Variant,
    seed: u64,
) -> Result<VariantRun, String> {
    let agent_cfg = config.agent_config();
    let a = &config.algorithm;
    match variant {
        Variant::Main => match (a.l1, a.grid_l1) {
            (Some(_), _) | (None, None) => {
                let log = agent::run(env, class, &agent_cfg, seed).map_err(|e| e.to_string())?;
                Ok(combine(vec![log], env, None))
            }
            (None, Some([lo, hi])) => {
                let total = (1u64 << a.m_max) - 1;
                let n = agent::l1_grid(lo, hi).len() as u64;
                let probe = a.grid_probe_episodes.unwrap_or(total / (2 * n).max(1));
                let g = agent::grid_search_l1(env, class, lo, hi, probe, a.m_max, &agent_cfg, seed)
                    .map_err(|e| e.to_string())?;
                let mut logs = g.probes;
                logs.extend(g.exploit);
                Ok(combine(logs, env, Some(g.best_l1)))
            }
        },
        Variant::Base(Baseline::UniformRandom) => {
            let log = agent::baseline_uniform(env, &agent_cfg, seed).map_err(|e| e.to_string())?;
            Ok(combine(vec![log], env, None))
        }
        Variant::Base(Baseline::LsviNoBonus) => {
            let log = agent::baseline_lsvi_no_bonus(env, class, &agent_cfg, seed).map_err(|e| e.to_string())?;
            Ok(combine(vec![log], env, None))
        }
    }
}

/// Runs every `(seed, variant)` pair in parallel and merges results in seed order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    config.validate()?;
    let env = config.environment.build()?;
    let class = config.class.build(&env)?;
    let mut variants = vec![Variant::Main];
    let mut baselines = config.baselines.clone();
    baselines.sort();
    baselines.dedup();
    variants.extend(baselines.iter().map(|b| Variant::Base(*b)));
    let tasks: Vec<(u64, Variant)> = config
        .seeds
        .iter()
        .flat_map(|&s| variants.iter().map(move |&v| (s, v)))
        .collect();
    let outputs: Vec<Result<VariantRun, String>> = tasks
        .par_iter()
        .map(|&(seed, v)| run_variant(config, &env, &class, v, seed))
        .collect();
    let mut seeds: Vec<SeedResult> = Vec::new();
    for ((seed, v), out) in tasks.into_iter().zip(outputs) {
        if seeds.last().map_or(true, |r| r.seed != seed || matches!(v, Variant::Main)) {
            seeds.push(SeedResult {
                seed,
                main: Err("not run".into()),
                baselines: BTreeMap::new(),
            });
        }
        let slot = seeds.last_mut().unwrap();
        match v {
            Variant::Main => slot.main = out,
            Variant::Base(b) => {
                slot.baselines.insert(b, out);
            }
        }
    }
    Ok(ExperimentResult {
        config: config.clone(),
        seeds,
        config_hash: config.hash(),
        version: VERSION.to_string(),
    })
}

pub const CSV_HEADER: &str = "seed,episode,epoch,return,regret,cum_regret";

/// Rows `seed,episode,epoch,return,regret,cum_regret` for one variant.
pub fn regret_csv<'a, I>(runs: I) -> String
where
    I: IntoIterator<Item = (u64, &'a VariantRun)>,
{
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (seed, run) in runs {
        for i in 0..run.report.per_episode.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                seed,
                i + 1,
                run.epochs[i],
                run.returns[i],
                run.report.per_episode[i],
                run.report.cumulative[i]
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub episodes: usize,
    pub final_cum_regret: f64,
    pub slope: Option<f64>,
    pub mean_return: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub seeds: Vec<SeedSummary>,
    pub mean_final_cum_regret: f64,
    pub std_final_cum_regret: f64,
    pub mean_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub config_hash: String,
    pub main: VariantSummary,
    pub baselines: BTreeMap<String, VariantSummary>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

fn summarize<'a, I>(runs: I) -> VariantSummary
where
    I: IntoIterator<Item = (u64, &'a Result<VariantRun, String>)>,
{
    let seeds: Vec<SeedSummary> = runs
        .into_iter()
        .map(|(seed, r)| match r {
            Ok(run) => SeedSummary {
                seed,
                episodes: run.report.per_episode.len(),
                final_cum_regret: run.report.final_cumulative,
                slope: run.report.slope,
                mean_return: if run.returns.is_empty() {
                    0.0
                } else {
                    run.returns.iter().sum::<f64>() / run.returns.len() as f64
                },
                error: None,
            },
            Err(e) => SeedSummary {
                seed,
                episodes: 0,
                final_cum_regret: 0.0,
                slope: None,
                mean_return: 0.0,
                error: Some(e.clone()),
            },
        })
        .collect();
    let ok: Vec<&SeedSummary> = seeds.iter().filter(|s| s.error.is_none()).collect();
    let finals: Vec<f64> = ok.iter().map(|s| s.final_cum_regret).collect();
    let (mean, std) = mean_std(&finals);
    let slopes: Vec<f64> = ok.iter().filter_map(|s| s.slope).collect();
    VariantSummary {
        seeds,
        mean_final_cum_regret: mean,
        std_final_cum_regret: std,
        mean_slope: (!slopes.is_empty()).then(|| slopes.iter().sum::<f64>() / slopes.len() as f64),
    }
}

pub fn summary(result: &ExperimentResult) -> Summary {
    let main = summarize(result.seeds.iter().map(|s| (s.seed, &s.main)));
    let mut baselines = BTreeMap::new();
    for b in result
        .seeds
        .first()
        .map(|s| s.baselines.keys().copied().collect::<Vec<_>>())
        .unwrap_or_default()
    {
        let v = summarize(result.seeds.iter().filter_map(|s| s.baselines.get(&b).map(|r| (s.seed, r))));
        baselines.insert(b.name().to_string(), v);
    }
    Summary {
        version: result.version.clone(),
        config_hash: result.config_hash.clone(),
        main,
        baselines,
    }
}

/// Mean and sample standard deviation of cumulative regret per episode.
pub fn aggregate_csv(result: &ExperimentResult) -> String {
    let runs: Vec<&VariantRun> = result.seeds.iter().filter_map(|s| s.main.as_ref().ok()).collect();
    let mut out = String::from("episode,mean_cum_regret,std_cum_regret\n");
    let len = runs.iter().map(|r| r.report.cumulative.len()).min().unwrap_or(0);
    for i in 0..len {
        let vals: Vec<f64> = runs.iter().map(|r| r.report.cumulative[i]).collect();
        let (m, s) = mean_std(&vals);
        out.push_str(&format!("{},{},{}\n", i + 1, m, s));
    }
    out
}

/// Writes `contents` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    let err = |source| HarnessError::Write {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(err)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(err)?;
    f.write_all(contents).map_err(err)?;
    f.sync_all().map_err(err)?;
    fs::rename(&tmp, path).map_err(err)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<PathBuf>,
}

/// Writes `regret.csv`, per-baseline CSVs, `aggregate.csv`, `summary.json`,
/// `config.json` and `runs/seed-<n>.json`.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path) -> Result<Manifest, HarnessError> {
    let mut files = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<(), HarnessError> {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        files.push(path);
        Ok(())
    };
    let main_runs = result
        .seeds
        .iter()
        .filter_map(|s| s.main.as_ref().ok().map(|r| (s.seed, r)));
    put("regret.csv".into(), regret_csv(main_runs).into_bytes())?;
    let mut baseline_names: Vec<Baseline> = result
        .seeds
        .iter()
        .flat_map(|s| s.baselines.keys().copied())
        .collect();
    baseline_names.sort();
    baseline_names.dedup();
    for b in baseline_names {
        let runs = result
            .seeds
            .iter()
            .filter_map(|s| s.baselines.get(&b).and_then(|r| r.as_ref().ok()).map(|r| (s.seed, r)));
        put(format!("regret_{}.csv", b.name()), regret_csv(runs).into_bytes())?;
    }
    put("aggregate.csv".into(), aggregate_csv(result).into_bytes())?;
    put("summary.json".into(), pretty(&summary(result)))?;
    put("config.json".into(), pretty(&result.config))?;
    for s in &result.seeds {
        let doc = SeedDoc {
            seed: s.seed,
            main: s.main.as_ref().map(run_doc).map_err(|e| e.clone()),
            baselines: s
                .baselines
                .iter()
                .map(|(b, r)| (b.name().to_string(), r.as_ref().map(run_doc).map_err(|e| e.clone())))
                .collect(),
        };
        put(format!("runs/seed-{}.json", s.seed), pretty(&doc))?;
    }
    Ok(Manifest { files })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubRunDoc {
    pub schedule: agent::EpochSchedule,
    pub counters: agent::Counters,
    pub warnings: Vec<String>,
    pub seed: u64,
    pub l1: f64,
    pub epochs: Vec<agent::EpochModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDoc {
    pub best_l1: Option<f64>,
    pub slope: Option<f64>,
    pub final_cum_regret: f64,
    pub final_realized_regret: f64,
    pub sub_runs: Vec<SubRunDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedDoc {
    pub seed: u64,
    pub main: Result<RunDoc, String>,
    pub baselines: BTreeMap<String, Result<RunDoc, String>>,
}

fn run_doc(run: &VariantRun) -> RunDoc {
    RunDoc {
        best_l1: run.best_l1,
        slope: run.report.slope,
        final_cum_regret: run.report.final_cumulative,
        final_realized_regret: run.report.realized_cumulative.last().copied().unwrap_or(0.0),
        sub_runs: run
            .logs
            .iter()
            .map(|l| SubRunDoc {
                schedule: l.schedule.clone(),
                counters: l.counters,
                warnings: l.warnings.clone(),
                seed: l.seed,
                l1: l.config.l1,
                epochs: l.epochs.clone(),
            })
            .collect(),
    }
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

/// Parses a `regret.csv` body into per-seed `(epoch, return, regret, cum_regret)` rows.
pub fn read_regret_csv(text: &str) -> Result<BTreeMap<u64, Vec<(u32, f64, f64, f64)>>, HarnessError> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(HarnessError::Config("unexpected regret.csv header".into()));
    }
    let mut out: BTreeMap<u64, Vec<(u32, f64, f64, f64)>> = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        let bad = || HarnessError::Config(format!("malformed regret.csv row {}", i + 2));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad());
        }
        let seed: u64 = f[0].parse().map_err(|_| bad())?;
        let epoch: u32 = f[2].parse().map_err(|_| bad())?;
        let ret: f64 = f[3].parse().map_err(|_| bad())?;
        let reg: f64 = f[4].parse().map_err(|_| bad())?;
        let cum: f64 = f[5].parse().map_err(|_| bad())?;
        out.entry(seed).or_default().push((epoch, ret, reg, cum));
    }
    Ok(out)
}

/// Recomputes the main-variant summary from a `regret.csv` body.
pub fn summary_from_csv(text: &str) -> Result<VariantSummary, HarnessError> {
    let rows = read_regret_csv(text)?;
    let runs: Vec<(u64, Result<VariantRun, String>)> = rows
        .into_iter()
        .map(|(seed, r)| {
            let cumulative: Vec<f64> = r.iter().map(|x| x.3).collect();
            let report = RegretReport {
                per_episode: r.iter().map(|x| x.2).collect(),
                slope: crate::analysis::loglog_slope(&cumulative),
                final_cumulative: cumulative.last().copied().unwrap_or(0.0),
                cumulative,
                realized_per_episode: Vec::new(),
                realized_cumulative: Vec::new(),
            };
            let run = VariantRun {
                logs: Vec::new(),
                report,
                epochs: r.iter().map(|x| x.0).collect(),
                returns: r.iter().map(|x| x.1).collect(),
                best_l1: None,
            };
            (seed, Ok(run))
        })
        .collect();
    Ok(summarize(runs.iter().map(|(s, r)| (*s, r))))
}
