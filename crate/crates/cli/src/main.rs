use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lsvi_core::analysis::estimate_l1;
use lsvi_core::harness::{self, ExperimentConfig, HarnessError};
use lsvi_core::rng::{derive_seed, seeded};
use lsvi_core::suites::{run_suite, SUITES};

const CONFIG_ERROR: u8 = 1;
const SUITE_FAILURE: u8 = 2;

/// Optimistic LSVI experiments.
#[derive(Parser)]
#[command(name = "lsvi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write CSV/JSON outputs.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recompute a run directory's summary from its CSVs and compare.
    Analyze { run_dir: PathBuf },
    /// Run a named check suite, or `all`.
    Verify { suite: String },
    /// Eigenvalue upper bound on the surprise constant of a config's environment.
    EstimateL1 {
        config: PathBuf,
        /// Random deterministic probe policies when enumeration is infeasible.
        #[arg(long, default_value_t = 256)]
        probes: usize,
    },
}

#[derive(Args, Default)]
struct Overrides {
    /// Use seeds 0..N instead of the configured list.
    #[arg(long)]
    seed_count: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    c_prime: Option<f64>,
    #[arg(long)]
    l1: Option<f64>,
    /// `min,max`
    #[arg(long, value_parser = parse_pair)]
    grid_l1: Option<[f64; 2]>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    m_max: Option<u32>,
    #[arg(long)]
    delta: Option<f64>,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected min,max")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok([a, b])
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), HarnessError> {
        let a = &mut cfg.algorithm;
        if let Some(n) = self.seed_count {
            cfg.seeds = (0..n).collect();
        }
        if let Some(v) = self.c_prime {
            a.c_prime = v;
        }
        if let Some(v) = self.l1 {
            a.l1 = Some(v);
            a.grid_l1 = None;
        }
        if let Some(v) = self.grid_l1 {
            a.grid_l1 = Some(v);
            a.l1 = None;
        }
        if let Some(v) = self.zeta {
            a.zeta = v;
        }
        if let Some(v) = self.m_max {
            a.m_max = v;
        }
        if let Some(v) = self.delta {
            a.delta = v;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        cfg.validate()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run { config, overrides } => cmd_run(&config, &overrides),
        Command::Analyze { run_dir } => cmd_analyze(&run_dir),
        Command::Verify { suite } => cmd_verify(&suite),
        Command::EstimateL1 { config, probes } => cmd_estimate(&config, probes),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn cmd_run(path: &Path, overrides: &Overrides) -> ExitCode {
    let mut cfg = match harness::parse_config(path) {
        Ok(c) => c,
        Err(e) => return fail(CONFIG_ERROR, e),
    };
    if let Err(e) = overrides.apply(&mut cfg) {
        return fail(CONFIG_ERROR, e);
    }
    let result = match harness::run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(CONFIG_ERROR, e),
    };
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("lsvi-out"));
    let manifest = match harness::emit_outputs(&result, &dir) {
        Ok(m) => m,
        Err(e) => return fail(CONFIG_ERROR, e),
    };
    let summary = harness::summary(&result);
    for s in &summary.main.seeds {
        match &s.error {
            Some(e) => eprintln!("seed {}: failed: {e}", s.seed),
            None => println!(
                "seed {}: episodes {} final regret {:.4} slope {}",
                s.seed,
                s.episodes,
                s.final_cum_regret,
                fmt_slope(s.slope)
            ),
        }
    }
    for (name, v) in &summary.baselines {
        println!(
            "{name}: mean final regret {:.4} mean slope {}",
            v.mean_final_cum_regret,
            fmt_slope(v.mean_slope)
        );
    }
    for f in &manifest.files {
        println!("wrote {}", f.display());
    }
    ExitCode::SUCCESS
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or("n/a".into(), |v| format!("{v:.4}"))
}

fn cmd_analyze(dir: &Path) -> ExitCode {
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|source| HarnessError::Read { path: p, source })
    };
    let (csv, summary_text) = match (read("regret.csv"), read("summary.json")) {
        (Ok(c), Ok(s)) => (c, s),
        (Err(e), _) | (_, Err(e)) => return fail(CONFIG_ERROR, e),
    };
    let stored: harness::Summary = match serde_json::from_str(&summary_text) {
        Ok(s) => s,
        Err(e) => return fail(CONFIG_ERROR, format!("summary.json: {e}")),
    };
    let mut consistent = true;
    let mut check = |label: &str, csv: &str, stored: &harness::VariantSummary| {
        let recomputed = match harness::summary_from_csv(csv) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("{label}: {e}");
                consistent = false;
                return;
            }
        };
        let ok_seeds: Vec<_> = stored.seeds.iter().filter(|s| s.error.is_none()).cloned().collect();
        let same = recomputed.seeds == ok_seeds
            && recomputed.mean_final_cum_regret == stored.mean_final_cum_regret
            && recomputed.std_final_cum_regret == stored.std_final_cum_regret
            && recomputed.mean_slope == stored.mean_slope;
        for s in &recomputed.seeds {
            println!(
                "{label} seed {}: episodes {} final regret {:.4} slope {}",
                s.seed,
                s.episodes,
                s.final_cum_regret,
                fmt_slope(s.slope)
            );
        }
        println!(
            "{label}: mean final regret {:.4} (sd {:.4}) mean slope {} [{}]",
            recomputed.mean_final_cum_regret,
            recomputed.std_final_cum_regret,
            fmt_slope(recomputed.mean_slope),
            if same { "matches summary.json" } else { "MISMATCH with summary.json" }
        );
        consistent &= same;
    };
    check("main", &csv, &stored.main);
    for (name, v) in &stored.baselines {
        match read(&format!("regret_{name}.csv")) {
            Ok(c) => check(name, &c, v),
            Err(e) => return fail(CONFIG_ERROR, e),
        }
    }
    if consistent {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(SUITE_FAILURE)
    }
}

fn cmd_verify(name: &str) -> ExitCode {
    let names: Vec<&str> = if name == "all" { SUITES.to_vec() } else { vec![name] };
    let mut all_ok = true;
    for n in names {
        let Some(report) = run_suite(n) else {
            return fail(
                CONFIG_ERROR,
                format!("unknown suite {n:?}; available: all, {}", SUITES.join(", ")),
            );
        };
        for c in &report.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            if c.detail.is_empty() {
                println!("{tag} {}: {}", report.suite, c.name);
            } else {
                println!("{tag} {}: {} ({})", report.suite, c.name, c.detail);
            }
        }
        all_ok &= report.passed();
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(SUITE_FAILURE)
    }
}

fn cmd_estimate(path: &Path, probes: usize) -> ExitCode {
    let cfg = match harness::parse_config(path) {
        Ok(c) => c,
        Err(e) => return fail(CONFIG_ERROR, e),
    };
    let env = match cfg.environment.build() {
        Ok(e) => e,
        Err(e) => return fail(CONFIG_ERROR, e),
    };
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let mut rng = seeded(derive_seed(seed, &[3]));
    match estimate_l1(&env, probes, &mut rng) {
        Ok(est) => {
            println!("{}", serde_json::to_string_pretty(&est).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(CONFIG_ERROR, e),
    }
}
