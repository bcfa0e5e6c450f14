//! One runner per subcommand. Each returns a typed report that has already
//! been written under `reports/`.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Result};
use serde::{Deserialize, Serialize};

use nshjb_core::control::{discretization_budget, dp_verify, estimate_cost, CostReport, DpOptions, DpReport, Verdict};
use nshjb_core::cost::CostSpec;
use nshjb_core::galerkin::{estimate_bilinear_constant, validate_hypotheses, HypothesisReport, SystemDescriptor};
use nshjb_core::hamiltonian::SaturationBound;
use nshjb_core::hjb::riccati::LqProblem;
use nshjb_core::hjb::{
    assert_value_bounds, default_killing_rate, feynman_kac_value, gradient, solve_hjb_grid, solve_hjb_mild,
    BoundReport, FkOptions, SolveDiagnostics, ValueGrid,
};
use nshjb_core::io::{read_value_grid, write_paths_csv, write_value_grid};
use nshjb_core::sde::{
    energy_estimate, simulate_controlled, theta, theta_delta_diagnostic, ConstantPolicy, EnergyReport,
    FeedbackPolicy, PathEnsemble, PerturbedPolicy, Policy, RandomPolicy, ZeroPolicy,
};
use nshjb_core::stats::Estimate;
use nshjb_core::{GalerkinSystem, SpectralField};

use crate::config::{ExperimentConfig, Method, Needs, PolicyKind};
use crate::output::{csv_writer, ensure_same_fingerprint, ArtifactDir};

/// Samples used for the empirical bilinear constant behind the default `K`.
const BILINEAR_SAMPLES: usize = 2000;

pub trait Outcome {
    fn verdict(&self) -> Verdict;
    /// Human-readable table rows for standard output.
    fn lines(&self) -> Vec<String>;
}

fn verdict_of(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn err(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow!("{e}")
}

/// Preconditions each subcommand needs checked up front.
pub fn needs(subcommand: &str, cfg: &ExperimentConfig) -> Needs {
    let simulation = matches!(subcommand, "simulate" | "dp-verify" | "converge-m" | "lq-oracle");
    let grid = match subcommand {
        "validate" => cfg.system.m <= nshjb_core::hjb::MAX_GRID_MODES,
        "simulate" => cfg.simulation.policy == PolicyKind::Feedback,
        "converge-m" => false,
        _ => true,
    };
    Needs {
        grid,
        simulation,
        allow_unsmoothed: subcommand == "lq-oracle",
    }
}

struct Problem {
    sys: GalerkinSystem,
    cost: CostSpec,
    r: SaturationBound,
}

fn problem(cfg: &ExperimentConfig, m: usize) -> Result<Problem> {
    let sys = cfg.system_with_m(m).map_err(err)?;
    let cost = cfg.cost_for(&sys).map_err(err)?;
    Ok(Problem {
        sys,
        cost,
        r: cfg.r_bound().map_err(err)?,
    })
}

/// Grid value function: read from a previous run (fingerprints must match)
/// or solved and dumped to `valuegrid/<stem>`.
fn grid_value(cfg: &ExperimentConfig, p: &Problem, dir: &mut ArtifactDir, value_from: Option<&Path>) -> Result<ValueGrid> {
    if let Some(src) = value_from {
        let (header, v) = read_value_grid(&src.join("valuegrid"), "grid").map_err(err)?;
        ensure_same_fingerprint(dir.fingerprint(), &header.fingerprint, &format!("{}", src.display()))?;
        return Ok(v);
    }
    let v = solve_hjb_grid(&p.sys, &p.cost, p.r, cfg.solver.horizon, &cfg.solver.grid).map_err(err)?;
    dump_value(cfg, p, dir, "grid", &v)?;
    Ok(v)
}

fn dump_value(cfg: &ExperimentConfig, p: &Problem, dir: &mut ArtifactDir, stem: &str, v: &ValueGrid) -> Result<()> {
    let hyp = cfg.hyp().map_err(err)?;
    let fp = dir.fingerprint().to_string();
    write_value_grid(&dir.root().join("valuegrid"), stem, v, &fp, Some(dir.seed()), hyp, &p.cost).map_err(err)?;
    dir.register(&format!("valuegrid/{stem}.json"))?;
    dir.register(&format!("valuegrid/{stem}.csv"))
}

fn mild_value(cfg: &ExperimentConfig, p: &Problem, dir: &mut ArtifactDir) -> Result<ValueGrid> {
    let v = solve_hjb_mild(&p.sys, &p.cost, p.r, cfg.solver.horizon, &cfg.solver.grid, &cfg.solver.picard)
        .map_err(err)?;
    dump_value(cfg, p, dir, "mild", &v)?;
    Ok(v)
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateReport {
    pub hypotheses: HypothesisReport,
    pub bilinear_constant: f64,
    pub system: SystemDescriptor,
    pub violations: Vec<String>,
}

impl Outcome for ValidateReport {
    fn verdict(&self) -> Verdict {
        verdict_of(self.violations.is_empty())
    }

    fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .hypotheses
            .checks
            .iter()
            .map(|c| format!("{:<18} {:<4} {}", c.name, if c.passed { "ok" } else { "FAIL" }, c.detail))
            .collect();
        out.push(format!("epsilon = {}", self.hypotheses.epsilon));
        out.push(format!("empirical bilinear constant = {:.6e}", self.bilinear_constant));
        out.extend(self.violations.iter().map(|v| format!("violation: {v}")));
        out
    }
}

pub fn run_validate(cfg: &ExperimentConfig, dir: &mut ArtifactDir, violations: Vec<String>) -> Result<ValidateReport> {
    let sys = cfg.system().map_err(err)?;
    let rep = ValidateReport {
        hypotheses: validate_hypotheses(&sys),
        bilinear_constant: estimate_bilinear_constant(&sys, BILINEAR_SAMPLES, cfg.simulation.seed),
        system: sys.descriptor(),
        violations,
    };
    dir.report("validate", &rep)?;
    Ok(rep)
}

// ---------------------------------------------------------------- solve-hjb

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub diagnostics: SolveDiagnostics,
    pub bounds: BoundReport,
    pub value_at_x0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeRow {
    pub probe: Vec<f64>,
    pub values: Vec<f64>,
    pub max_rel_diff: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub horizon: f64,
    pub methods: Vec<MethodSummary>,
    /// Present when both solvers ran.
    pub probes: Vec<ProbeRow>,
    pub rel_tol: f64,
}

impl Outcome for SolveReport {
    fn verdict(&self) -> Verdict {
        let bounds = self.methods.iter().all(|m| m.bounds.passed);
        let agree = self.probes.iter().all(|p| p.max_rel_diff <= self.rel_tol);
        verdict_of(bounds && agree)
    }

    fn lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for m in &self.methods {
            out.push(format!(
                "{:<5} u(T, x0) = {:.6}  bounds {}  min u = {:.3e}  min slack = {:.3e}  non-monotone = {}",
                m.method,
                m.value_at_x0,
                if !m.bounds.applicable { "n/a" } else if m.bounds.passed { "ok" } else { "FAIL" },
                m.bounds.min_value,
                m.bounds.min_upper_slack,
                m.diagnostics.non_monotone_updates
            ));
        }
        for p in &self.probes {
            out.push(format!("probe {:?}: {:?} rel diff {:.3e}", p.probe, p.values, p.max_rel_diff));
        }
        out
    }
}

pub fn run_solve(cfg: &ExperimentConfig, dir: &mut ArtifactDir) -> Result<SolveReport> {
    let p = problem(cfg, cfg.system.m)?;
    let t = cfg.solver.horizon;
    let x0 = cfg.x0_for(p.sys.m());
    let mut grids = Vec::new();
    for method in &cfg.solver.methods {
        let v = match method {
            Method::Grid => grid_value(cfg, &p, dir, None)?,
            Method::Mild => mild_value(cfg, &p, dir)?,
        };
        grids.push((*method, v));
    }
    let methods = grids
        .iter()
        .map(|(m, v)| MethodSummary {
            method: format!("{m:?}").to_lowercase(),
            diagnostics: v.diagnostics.clone(),
            bounds: assert_value_bounds(v, &p.cost),
            value_at_x0: v.value_at(t, x0.as_slice()),
        })
        .collect();
    let probes = if grids.len() > 1 {
        cfg.experiment
            .probes
            .iter()
            .map(|x| {
                let values: Vec<f64> = grids.iter().map(|(_, v)| v.value_at(t, x)).collect();
                let max_rel_diff = values.iter().map(|a| rel_diff(*a, values[0])).fold(0.0, f64::max);
                ProbeRow {
                    probe: x.clone(),
                    values,
                    max_rel_diff,
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let rep = SolveReport {
        horizon: t,
        methods,
        probes,
        rel_tol: cfg.experiment.rel_tol,
    };
    dir.report("solve", &rep)?;
    Ok(rep)
}

// ---------------------------------------------------------------- fk-check

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriangleRow {
    pub probe: Vec<f64>,
    pub grid: f64,
    pub mild: f64,
    pub fk: Estimate,
    /// `max(4 SE, rel_tol · max|value|)` per pair.
    pub grid_mild_ok: bool,
    pub grid_fk_ok: bool,
    pub mild_fk_ok: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FkCheckReport {
    pub horizon: f64,
    pub killing_rate: f64,
    pub bilinear_constant: f64,
    pub fk: FkOptions,
    pub rel_tol: f64,
    pub rows: Vec<TriangleRow>,
}

impl Outcome for FkCheckReport {
    fn verdict(&self) -> Verdict {
        verdict_of(
            !self.rows.is_empty() && self.rows.iter().all(|r| r.grid_mild_ok && r.grid_fk_ok && r.mild_fk_ok),
        )
    }

    fn lines(&self) -> Vec<String> {
        let mut out = vec![format!("K = {:.4}  (bilinear constant {:.4e})", self.killing_rate, self.bilinear_constant)];
        out.push(format!("{:<24} {:>10} {:>10} {:>10} {:>9}  pairs", "probe", "grid", "mild", "fk", "fk se"));
        for r in &self.rows {
            out.push(format!(
                "{:<24} {:>10.6} {:>10.6} {:>10.6} {:>9.2e}  {} {} {}",
                format!("{:?}", r.probe),
                r.grid,
                r.mild,
                r.fk.mean,
                r.fk.std_error,
                r.grid_mild_ok,
                r.grid_fk_ok,
                r.mild_fk_ok
            ));
        }
        out
    }
}

fn agree(a: f64, b: f64, se: f64, rel_tol: f64) -> bool {
    (a - b).abs() <= (4.0 * se).max(rel_tol * a.abs().max(b.abs()))
}

pub fn run_fk_check(cfg: &ExperimentConfig, dir: &mut ArtifactDir, value_from: Option<&Path>) -> Result<FkCheckReport> {
    let p = problem(cfg, cfg.system.m)?;
    let t = cfg.solver.horizon;
    let fk_block = cfg
        .experiment
        .fk
        .clone()
        .ok_or_else(|| anyhow!("fk-check needs an experiment.fk block"))?;
    if cfg.experiment.probes.is_empty() {
        bail!("fk-check needs at least one probe in experiment.probes");
    }
    let grid = grid_value(cfg, &p, dir, value_from)?;
    let mild = mild_value(cfg, &p, dir)?;
    let bilinear_constant = if p.sys.bilinear_enabled() {
        estimate_bilinear_constant(&p.sys, BILINEAR_SAMPLES, cfg.simulation.seed)
    } else {
        0.0
    };
    let killing_rate = match cfg.solver.killing_rate {
        Some(k) => k,
        None => default_killing_rate(bilinear_constant, &gradient(&grid), &cfg.experiment.probes, cfg.solver.killing_floor),
    };
    let fk = FkOptions {
        n_paths: fk_block.n_paths,
        dt: fk_block.dt,
        seed: cfg.simulation.seed,
    };
    let tol = cfg.experiment.rel_tol;
    let mut rows = Vec::new();
    for x in &cfg.experiment.probes {
        let xf = SpectralField::new(x.clone()).map_err(err)?;
        let est = feynman_kac_value(&p.sys, &p.cost, p.r, killing_rate, t, &xf, &fk, &grid).map_err(err)?;
        let (g, m) = (grid.value_at(t, x), mild.value_at(t, x));
        rows.push(TriangleRow {
            probe: x.clone(),
            grid: g,
            mild: m,
            fk: est,
            grid_mild_ok: agree(g, m, 0.0, tol),
            grid_fk_ok: agree(g, est.mean, est.std_error, tol),
            mild_fk_ok: agree(m, est.mean, est.std_error, tol),
        });
    }
    let rep = FkCheckReport {
        horizon: t,
        killing_rate,
        bilinear_constant,
        fk,
        rel_tol: tol,
        rows,
    };
    dir.csv("reports/triangle.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["probe", "grid", "mild", "fk", "fk_std_error"])?;
        for r in &rep.rows {
            let probe = r.probe.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
            c.write_record([
                probe,
                r.grid.to_string(),
                r.mild.to_string(),
                r.fk.mean.to_string(),
                r.fk.std_error.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    dir.report("fk_check", &rep)?;
    Ok(rep)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateReport {
    pub m: usize,
    pub policy: String,
    pub cost: CostReport,
    pub energy: EnergyReport,
    pub delta: f64,
    pub theta: f64,
    pub theta_delta: Estimate,
    pub excluded: usize,
    pub clipped: u64,
    pub excursions: u64,
}

impl Outcome for SimulateReport {
    fn verdict(&self) -> Verdict {
        verdict_of(self.energy.c_emp.is_finite() && self.theta_delta.mean.is_finite())
    }

    fn lines(&self) -> Vec<String> {
        vec![
            format!("policy {}  m = {}  paths used {}", self.policy, self.m, self.energy.n_used),
            format!("J = {:.6} ± {:.2e}", self.cost.j.mean, self.cost.j.std_error),
            format!(
                "E sup|X|^2 = {:.6}  E int |X|_V^2 = {:.6}  c_emp = {:.6} ± {:.2e}",
                self.energy.e_sup_sq.mean, self.energy.e_int_v.mean, self.energy.c_emp, self.energy.c_emp_std_error
            ),
            format!(
                "theta_delta (delta = {}, theta = {}) = {:.6} ± {:.2e}",
                self.delta, self.theta, self.theta_delta.mean, self.theta_delta.std_error
            ),
            format!("excluded {}  clipped {}  excursions {}", self.excluded, self.clipped, self.excursions),
        ]
    }
}

fn dump_paths(dir: &mut ArtifactDir, ens: &PathEnsemble, cost: &CostSpec, count: usize) -> Result<()> {
    if count == 0 {
        return Ok(());
    }
    let head = PathEnsemble {
        paths: ens.paths[..count].to_vec(),
        ..ens.clone()
    };
    let rel = format!("paths/{}.csv", ens.policy);
    dir.csv(&rel, |w| write_paths_csv(w, &head, cost).map_err(err))
}

pub fn run_simulate(cfg: &ExperimentConfig, dir: &mut ArtifactDir, value_from: Option<&Path>) -> Result<SimulateReport> {
    let p = problem(cfg, cfg.system.m)?;
    let integ = cfg.integrator().map_err(err)?;
    let x0 = cfg.x0_for(p.sys.m());
    let n = cfg.simulation.n_paths;
    let seed = cfg.simulation.seed;
    let value;
    let feedback;
    let random = RandomPolicy(p.r);
    let policy: &dyn Policy = match cfg.simulation.policy {
        PolicyKind::Zero => &ZeroPolicy,
        PolicyKind::Random => &random,
        PolicyKind::Feedback => {
            value = grid_value(cfg, &p, dir, value_from)?;
            feedback = FeedbackPolicy::new(&p.sys, &value, p.r, integ.horizon).map_err(err)?;
            &feedback
        }
    };
    let ens = simulate_controlled(&p.sys, policy, p.r, &x0, &integ, n, seed).map_err(err)?;
    let delta = cfg.experiment.delta;
    let theta_delta = theta_delta_diagnostic(&ens, &p.sys, delta).map_err(err)?;
    let rep = SimulateReport {
        m: p.sys.m(),
        policy: ens.policy.clone(),
        cost: estimate_cost(&ens, &p.cost).map_err(err)?,
        energy: energy_estimate(&p.sys, &ens).map_err(err)?,
        delta,
        theta: theta(delta),
        theta_delta,
        excluded: ens.excluded(),
        clipped: ens.clipped,
        excursions: ens.excursions,
    };
    dump_paths(dir, &ens, &p.cost, cfg.simulation.dump_paths)?;
    dir.report("simulate", &rep)?;
    Ok(rep)
}

// ---------------------------------------------------------------- dp-verify

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DpVerifyReport {
    /// True when `epsilon_disc` came from grid refinement.
    pub epsilon_measured: bool,
    pub dp: DpReport,
}

impl Outcome for DpVerifyReport {
    fn verdict(&self) -> Verdict {
        self.dp.verdict
    }

    fn lines(&self) -> Vec<String> {
        let d = &self.dp;
        let mut out = vec![
            format!(
                "u(T, x0) = {:.6}  J(z*) = {:.6} ± {:.2e}  gap {:.3e}  tol {:.3e} (eps_disc {:.3e})  {:?}",
                d.value_at_x0, d.optimal.j.mean, d.optimal.j.std_error, d.identity_gap, d.identity_tolerance,
                d.epsilon_disc, d.identity_verdict
            ),
            format!("{:<28} {:>10} {:>9} {:>11} {:>11}  verdict", "policy", "J", "se", "lower", "upper"),
        ];
        for c in &d.comparisons {
            out.push(format!(
                "{:<28} {:>10.6} {:>9.2e} {:>11.3e} {:>11.3e}  {:?}{}",
                c.report.policy,
                c.report.j.mean,
                c.report.j.std_error,
                c.interval.lower,
                c.interval.upper,
                c.verdict,
                if c.required { "" } else { " (extra)" }
            ));
        }
        out.push(format!("overall {:?}  min cost {:.6}", d.verdict, d.min_cost()));
        out
    }
}

pub fn run_dp_verify(cfg: &ExperimentConfig, dir: &mut ArtifactDir, value_from: Option<&Path>) -> Result<DpVerifyReport> {
    let p = problem(cfg, cfg.system.m)?;
    let integ = cfg.integrator().map_err(err)?;
    let x0 = cfg.x0_for(p.sys.m());
    let t = cfg.solver.horizon;
    let value = grid_value(cfg, &p, dir, value_from)?;
    let (epsilon_disc, epsilon_measured) = match cfg.experiment.epsilon_disc {
        Some(e) => (e, false),
        None => (
            discretization_budget(&p.sys, &p.cost, p.r, t, &cfg.solver.grid, &value, x0.as_slice()).map_err(err)?,
            true,
        ),
    };
    let feedback = FeedbackPolicy::new(&p.sys, &value, p.r, integ.horizon).map_err(err)?;
    let perturbed = PerturbedPolicy {
        inner: &feedback,
        sigma: 0.25 * p.r.value(),
    };
    // Full-strength push toward the origin.
    let norm = x0.norm();
    let push = if norm > 0.0 {
        x0.scaled(-p.r.value() / norm).into_vec()
    } else {
        vec![0.0; p.sys.m()]
    };
    let constant = ConstantPolicy(push);
    let extras: [&dyn Policy; 2] = [&constant, &perturbed];
    let opts = DpOptions {
        n_paths: cfg.simulation.n_paths,
        seed: cfg.simulation.seed,
        level: cfg.experiment.level,
        epsilon_disc,
    };
    let dp = dp_verify(&p.sys, &p.cost, &value, p.r, &x0, &integ, &extras, &opts).map_err(err)?;
    let rep = DpVerifyReport { epsilon_measured, dp };
    dir.csv("reports/dp.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["policy", "j", "std_error", "diff_lower", "diff_upper", "verdict", "required"])?;
        let d = &rep.dp;
        c.write_record([
            d.optimal.policy.clone(),
            d.optimal.j.mean.to_string(),
            d.optimal.j.std_error.to_string(),
            String::new(),
            String::new(),
            format!("{:?}", d.identity_verdict).to_lowercase(),
            "true".into(),
        ])?;
        for cmp in &d.comparisons {
            c.write_record([
                cmp.report.policy.clone(),
                cmp.report.j.mean.to_string(),
                cmp.report.j.std_error.to_string(),
                cmp.interval.lower.to_string(),
                cmp.interval.upper.to_string(),
                format!("{:?}", cmp.verdict).to_lowercase(),
                cmp.required.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    dir.report("dp", &rep)?;
    Ok(rep)
}

// ---------------------------------------------------------------- converge-m

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergeRow {
    pub m: usize,
    /// `u^m(T, P_m x0)`.
    pub value_at_x0: f64,
    pub j_feedback: Estimate,
    pub j_zero: Estimate,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergeReport {
    pub horizon: f64,
    pub x0: Vec<f64>,
    pub rows: Vec<ConvergeRow>,
    /// Largest change of `u^m(T, x0)` between consecutive levels.
    pub max_increment: f64,
}

impl Outcome for ConvergeReport {
    fn verdict(&self) -> Verdict {
        verdict_of(self.rows.iter().all(|r| r.value_at_x0.is_finite()))
    }

    fn lines(&self) -> Vec<String> {
        let mut out = vec![format!("{:>3} {:>12} {:>12} {:>9} {:>12} {:>9}", "m", "u(T,x0)", "J(z*)", "se", "J(0)", "se")];
        for r in &self.rows {
            out.push(format!(
                "{:>3} {:>12.6} {:>12.6} {:>9.2e} {:>12.6} {:>9.2e}",
                r.m, r.value_at_x0, r.j_feedback.mean, r.j_feedback.std_error, r.j_zero.mean, r.j_zero.std_error
            ));
        }
        out.push(format!("max increment of u between levels: {:.3e}", self.max_increment));
        out
    }
}

pub fn run_converge_m(cfg: &ExperimentConfig, dir: &mut ArtifactDir) -> Result<ConvergeReport> {
    if cfg.experiment.m_values.is_empty() {
        bail!("converge-m needs experiment.m_values");
    }
    let t = cfg.solver.horizon;
    let integ = cfg.integrator().map_err(err)?;
    let mut rows = Vec::new();
    for &m in &cfg.experiment.m_values {
        let p = problem(cfg, m)?;
        let v = solve_hjb_grid(&p.sys, &p.cost, p.r, t, &cfg.solver.grid).map_err(err)?;
        dump_value(cfg, &p, dir, &format!("grid_m{m}"), &v)?;
        let x0 = cfg.x0_for(m);
        let fb = FeedbackPolicy::new(&p.sys, &v, p.r, t).map_err(err)?;
        let n = cfg.simulation.n_paths;
        let seed = cfg.simulation.seed;
        let ens_fb = simulate_controlled(&p.sys, &fb, p.r, &x0, &integ, n, seed).map_err(err)?;
        let ens_zero = simulate_controlled(&p.sys, &ZeroPolicy, p.r, &x0, &integ, n, seed).map_err(err)?;
        rows.push(ConvergeRow {
            m,
            value_at_x0: v.value_at(t, x0.as_slice()),
            j_feedback: estimate_cost(&ens_fb, &p.cost).map_err(err)?.j,
            j_zero: estimate_cost(&ens_zero, &p.cost).map_err(err)?.j,
            diagnostics: v.diagnostics.clone(),
        });
    }
    let max_increment = rows
        .windows(2)
        .map(|w| (w[1].value_at_x0 - w[0].value_at_x0).abs())
        .fold(0.0, f64::max);
    let rep = ConvergeReport {
        horizon: t,
        x0: cfg.simulation.x0.clone(),
        rows,
        max_increment,
    };
    dir.csv("reports/converge_m.csv", |w| {
        let mut c = csv_writer(w);
        c.write_record(["m", "u_t_x0", "j_feedback", "j_feedback_std_error", "j_zero", "j_zero_std_error"])?;
        for r in &rep.rows {
            c.write_record([
                r.m.to_string(),
                r.value_at_x0.to_string(),
                r.j_feedback.mean.to_string(),
                r.j_feedback.std_error.to_string(),
                r.j_zero.mean.to_string(),
                r.j_zero.std_error.to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    dir.report("converge_m", &rep)?;
    Ok(rep)
}

// ---------------------------------------------------------------- lq-oracle

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LqReport {
    pub horizon: f64,
    /// Interior nodes: `|x_k| ≤ L_k / 2` on every axis.
    pub interior_nodes: usize,
    pub grid_max_rel_error: f64,
    pub grid_tol: f64,
    /// Absent when the mild solver was not requested.
    pub mild_max_rel_diff: Option<f64>,
    pub mild_tol: f64,
    pub oracle_value_at_x0: f64,
    pub closed_loop: CostReport,
    pub closed_loop_z: f64,
}

impl LqReport {
    pub fn grid_ok(&self) -> bool {
        self.grid_max_rel_error <= self.grid_tol
    }

    pub fn mild_ok(&self) -> bool {
        self.mild_max_rel_diff.is_some_and(|d| d <= self.mild_tol)
    }

    pub fn closed_loop_ok(&self) -> bool {
        self.closed_loop_z.abs() <= 4.0
    }
}

impl Outcome for LqReport {
    fn verdict(&self) -> Verdict {
        verdict_of(self.grid_ok() && self.mild_ok() && self.closed_loop_ok())
    }

    fn lines(&self) -> Vec<String> {
        vec![
            format!(
                "grid vs Riccati: max rel error {:.3e} over {} interior nodes (tol {:.0e})",
                self.grid_max_rel_error, self.interior_nodes, self.grid_tol
            ),
            match self.mild_max_rel_diff {
                Some(d) => format!("mild vs grid: max rel diff {d:.3e} (tol {:.0e})", self.mild_tol),
                None => "mild vs grid: not run".into(),
            },
            format!(
                "closed loop J(z*) = {:.6} ± {:.2e} vs oracle {:.6}  ({:+.2} SE)",
                self.closed_loop.j.mean, self.closed_loop.j.std_error, self.oracle_value_at_x0, self.closed_loop_z
            ),
        ]
    }
}

/// Relative tolerances of the linear-quadratic comparison.
pub const LQ_GRID_TOL: f64 = 1e-2;
pub const LQ_MILD_TOL: f64 = 2e-2;

pub fn run_lq_oracle(cfg: &ExperimentConfig, dir: &mut ArtifactDir) -> Result<LqReport> {
    let p = problem(cfg, cfg.system.m)?;
    let t = cfg.solver.horizon;
    let lq = LqProblem::from_system(&p.sys, &p.cost).map_err(err)?;
    let sol = lq.solve(t, cfg.experiment.riccati_steps).map_err(err)?;
    let grid = grid_value(cfg, &p, dir, None)?;
    let mild = if cfg.solver.methods.contains(&Method::Mild) {
        Some(mild_value(cfg, &p, dir)?)
    } else {
        None
    };
    let lat = &grid.lattice;
    let interior: Vec<Vec<f64>> = (0..lat.len())
        .map(|flat| lat.node(flat))
        .filter(|x| x.iter().zip(&lat.half_width).all(|(v, l)| v.abs() <= 0.5 * l))
        .collect();
    let mut grid_err = 0.0f64;
    let mut mild_diff = 0.0f64;
    let mut rows = Vec::new();
    for x in &interior {
        let exact = sol.value(t, x);
        let g = grid.value_at(t, x);
        grid_err = grid_err.max(rel_diff(g, exact));
        let m = mild.as_ref().map(|v| v.value_at(t, x));
        if let Some(m) = m {
            mild_diff = mild_diff.max(rel_diff(m, g));
        }
        rows.push((x.clone(), exact, g, m));
    }
    let integ = cfg.integrator().map_err(err)?;
    let x0 = cfg.x0_for(p.sys.m());
    let fb = FeedbackPolicy::new(&p.sys, &grid, p.r, t).map_err(err)?;
    let ens = simulate_controlled(&p.sys, &fb, p.r, &x0, &integ, cfg.simulation.n_paths, cfg.simulation.seed)
        .map_err(err)?;
    let closed_loop = estimate_cost(&ens, &p.cost).map_err(err)?;
    let oracle = sol.value(t, x0.as_slice());
    let rep = LqReport {
        horizon: t,
        interior_nodes: interior.len(),
        grid_max_rel_error: grid_err,
        grid_tol: LQ_GRID_TOL,
        mild_max_rel_diff: mild.as_ref().map(|_| mild_diff),
        mild_tol: LQ_MILD_TOL,
        oracle_value_at_x0: oracle,
        closed_loop_z: (closed_loop.j.mean - oracle) / closed_loop.j.std_error,
        closed_loop,
    };
    dir.csv("reports/lq_oracle.csv", |w| {
        let mut c = csv_writer(w);
        let m = p.sys.m();
        let mut head: Vec<String> = (1..=m).map(|k| format!("x_{k}")).collect();
        head.extend(["riccati", "grid", "mild", "grid_rel_error"].map(String::from));
        c.write_record(&head)?;
        for (x, exact, g, mv) in &rows {
            let mut rec: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            rec.push(exact.to_string());
            rec.push(g.to_string());
            rec.push(mv.map(|v| v.to_string()).unwrap_or_default());
            rec.push(rel_diff(*g, *exact).to_string());
            c.write_record(&rec)?;
        }
        c.flush()?;
        Ok(())
    })?;
    dir.report("lq_oracle", &rep)?;
    Ok(rep)
}

/// Prints the table rows of a report.
pub fn print_lines(out: &mut impl Write, o: &dyn Outcome) -> std::io::Result<()> {
    for l in o.lines() {
        writeln!(out, "{l}")?;
    }
    Ok(())
}
