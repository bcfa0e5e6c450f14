//! Configuration, artifact layout and experiment runners behind the
//! `nshjb` command line tool.

pub mod config;
pub mod output;
pub mod runners;

use std::path::Path;

use anyhow::{Context, Result};

use nshjb_core::control::Verdict;

use config::ExperimentConfig;
use output::{ArtifactDir, RunStatus};
use runners::Outcome;

pub const SUBCOMMANDS: [&str; 7] = [
    "validate",
    "solve-hjb",
    "fk-check",
    "simulate",
    "dp-verify",
    "converge-m",
    "lq-oracle",
];

/// Exit status for a verdict: 0 pass, 2 inconclusive, 1 failure.
pub fn exit_code(v: Verdict) -> i32 {
    match v {
        Verdict::Pass => 0,
        Verdict::Inconclusive => 2,
        Verdict::Fail => 1,
    }
}

/// Reads a config file and applies the scalar overrides.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    if let Some(s) = seed {
        cfg.simulation.seed = s;
    }
    Ok(cfg)
}

/// Result of a run: the verdict plus its printable table.
pub struct RunResult {
    pub verdict: Verdict,
    pub lines: Vec<String>,
}

fn finish(dir: ArtifactDir, o: &dyn Outcome) -> Result<RunResult> {
    let verdict = o.verdict();
    dir.finish(match verdict {
        Verdict::Pass => RunStatus::Passed,
        Verdict::Inconclusive => RunStatus::Inconclusive,
        Verdict::Fail => RunStatus::Failed,
    })?;
    Ok(RunResult {
        verdict,
        lines: o.lines(),
    })
}

/// Validates `cfg` for `subcommand`, writes the manifest under `out` and
/// runs. `value_from` points at an earlier artifact directory whose grid
/// value function should be reused.
pub fn run(subcommand: &str, cfg: &ExperimentConfig, out: &Path, value_from: Option<&Path>) -> Result<RunResult> {
    if !SUBCOMMANDS.contains(&subcommand) {
        anyhow::bail!("unknown subcommand `{subcommand}`");
    }
    let mut dir = ArtifactDir::create(out, subcommand, cfg)?;
    let violations = cfg.violations(runners::needs(subcommand, cfg));
    if subcommand == "validate" {
        let rep = runners::run_validate(cfg, &mut dir, violations)?;
        return finish(dir, &rep);
    }
    if !violations.is_empty() {
        dir.report("violations", &serde_json::json!({ "violations": violations }))?;
        dir.finish(RunStatus::Failed)?;
        return Ok(RunResult {
            verdict: Verdict::Fail,
            lines: violations.iter().map(|v| format!("violation: {v}")).collect(),
        });
    }
    let result = match subcommand {
        "solve-hjb" => runners::run_solve(cfg, &mut dir).map(|r| Box::new(r) as Box<dyn Outcome>),
        "fk-check" => runners::run_fk_check(cfg, &mut dir, value_from).map(|r| Box::new(r) as Box<dyn Outcome>),
        "simulate" => runners::run_simulate(cfg, &mut dir, value_from).map(|r| Box::new(r) as Box<dyn Outcome>),
        "dp-verify" => runners::run_dp_verify(cfg, &mut dir, value_from).map(|r| Box::new(r) as Box<dyn Outcome>),
        "converge-m" => runners::run_converge_m(cfg, &mut dir).map(|r| Box::new(r) as Box<dyn Outcome>),
        "lq-oracle" => runners::run_lq_oracle(cfg, &mut dir).map(|r| Box::new(r) as Box<dyn Outcome>),
        _ => unreachable!("checked above"),
    };
    match result {
        Ok(o) => finish(dir, o.as_ref()),
        Err(e) => {
            dir.finish(RunStatus::Failed)?;
            Err(e)
        }
    }
}
