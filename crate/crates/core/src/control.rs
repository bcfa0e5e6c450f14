//! Cost estimation over path ensembles and the empirical check of the
//! dynamic-programming identity `u(T, x) = J(z*) = min_z J(z)`.

use serde::{Deserialize, Serialize};

use crate::cost::CostSpec;
use crate::error::{check_dim, Error, Result};
use crate::field::{self, SpectralField};
use crate::galerkin::GalerkinSystem;
use crate::hamiltonian::SaturationBound;
use crate::hjb::{solve_hjb_grid, GridSpec, ValueGrid};
use crate::sde::{
    simulate_controlled, trapezoid, FeedbackPolicy, IntegratorSpec, PathEnsemble, Policy, RandomPolicy,
    ZeroPolicy,
};
use crate::stats::{self, welch_interval, Estimate, WelchInterval};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostTerms {
    pub running_state: Estimate,
    pub running_control: Estimate,
    pub terminal: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub policy: String,
    /// `J`: the sum of the three term means, with the standard error of the
    /// per-path totals.
    pub j: Estimate,
    pub terms: CostTerms,
    pub n_paths: usize,
    pub n_used: usize,
    pub excluded_fraction: f64,
    pub seed: u64,
}

/// Per path `∫ Φ(X) dt` (trapezoid) `+ Σ ½|z_n|² dt + φ(X(T))`, averaged
/// over paths that did not blow up.
pub fn estimate_cost(ens: &PathEnsemble, cost: &CostSpec) -> Result<CostReport> {
    let m = ens.m;
    let dt = ens.integrator.dt;
    let mut state = Vec::new();
    let mut control = Vec::new();
    let mut terminal = Vec::new();
    let mut total = Vec::new();
    for p in ens.kept() {
        let phi: Vec<f64> = p.states.chunks(m).map(|x| cost.running.eval(x)).collect();
        let s = trapezoid(&phi, dt);
        let c: f64 = p.controls.chunks(m).map(|z| 0.5 * field::norm_sq(z) * dt).sum();
        let last = &p.states[p.states.len() - m..];
        let f = cost.terminal.eval(last);
        state.push(s);
        control.push(c);
        terminal.push(f);
        total.push(s + c + f);
    }
    if total.is_empty() {
        return Err(Error::Unsupported("every path was excluded".into()));
    }
    let terms = CostTerms {
        running_state: stats::estimate(&state),
        running_control: stats::estimate(&control),
        terminal: stats::estimate(&terminal),
    };
    let j = Estimate {
        mean: terms.running_state.mean + terms.running_control.mean + terms.terminal.mean,
        std_error: stats::estimate(&total).std_error,
    };
    Ok(CostReport {
        policy: ens.policy.clone(),
        j,
        terms,
        n_paths: ens.n_paths(),
        n_used: total.len(),
        excluded_fraction: ens.excluded() as f64 / ens.n_paths() as f64,
        seed: ens.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl Verdict {
    /// The worse of two verdicts.
    pub fn and(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Fail, _) | (_, Fail) => Fail,
            (Inconclusive, _) | (_, Inconclusive) => Inconclusive,
            _ => Pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub report: CostReport,
    /// Interval for `J(z*) - J(alternative)`.
    pub interval: WelchInterval,
    pub verdict: Verdict,
    /// Whether this alternative is one of the mandatory ones.
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpReport {
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub level: f64,
    /// `u(T, x0)` read from the value grid.
    pub value_at_x0: f64,
    pub optimal: CostReport,
    pub identity_gap: f64,
    pub epsilon_disc: f64,
    pub identity_tolerance: f64,
    pub identity_verdict: Verdict,
    pub comparisons: Vec<Comparison>,
    /// Identity plus the mandatory comparisons.
    pub verdict: Verdict,
    pub excursions: u64,
    pub clipped: u64,
}

impl DpReport {
    /// Smallest cost over the feedback and every alternative.
    pub fn min_cost(&self) -> f64 {
        self.comparisons
            .iter()
            .map(|c| c.report.j.mean)
            .fold(self.optimal.j.mean, f64::min)
    }
}

fn compare(star: &CostReport, alt: CostReport, level: f64, required: bool) -> Comparison {
    let interval = welch_interval(star.j, star.n_used, alt.j, alt.n_used, level);
    let verdict = if interval.upper <= 0.0 {
        Verdict::Pass
    } else if interval.lower > 0.0 {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    Comparison {
        report: alt,
        interval,
        verdict,
        required,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpOptions {
    pub n_paths: usize,
    pub seed: u64,
    /// Two-sided confidence level of the Welch intervals.
    pub level: f64,
    /// Scheme error allowance for `|u(T, x0) - J(z*)|`.
    pub epsilon_disc: f64,
}

/// Simulates the feedback synthesized from `value`, the zero control, an iid
/// uniform admissible control and every extra alternative, all from `x0`
/// with the same noise seeds, and grades the optimality identity.
#[allow(clippy::too_many_arguments)]
pub fn dp_verify(
    sys: &GalerkinSystem,
    cost: &CostSpec,
    value: &ValueGrid,
    r: SaturationBound,
    x0: &SpectralField,
    integ: &IntegratorSpec,
    alternatives: &[&dyn Policy],
    opts: &DpOptions,
) -> Result<DpReport> {
    check_dim(sys.m(), x0.dim())?;
    let feedback = FeedbackPolicy::new(sys, value, r, integ.horizon)?;
    let star_ens = simulate_controlled(sys, &feedback, r, x0, integ, opts.n_paths, opts.seed)?;
    let star = estimate_cost(&star_ens, cost)?;

    let zero = ZeroPolicy;
    let random = RandomPolicy(r);
    let required: [&dyn Policy; 2] = [&zero, &random];
    let mut comparisons = Vec::new();
    for (i, p) in required.iter().chain(alternatives.iter()).enumerate() {
        let ens = simulate_controlled(sys, *p, r, x0, integ, opts.n_paths, opts.seed)?;
        let rep = estimate_cost(&ens, cost)?;
        comparisons.push(compare(&star, rep, opts.level, i < 2));
    }

    let u = value.value_at(integ.horizon, x0.as_slice());
    let gap = (u - star.j.mean).abs();
    let tol = (4.0 * star.j.std_error).max(opts.epsilon_disc);
    let identity_verdict = if gap <= tol { Verdict::Pass } else { Verdict::Fail };
    let verdict = comparisons
        .iter()
        .filter(|c| c.required)
        .fold(identity_verdict, |v, c| v.and(c.verdict));
    Ok(DpReport {
        x0: x0.as_slice().to_vec(),
        horizon: integ.horizon,
        level: opts.level,
        value_at_x0: u,
        optimal: star,
        identity_gap: gap,
        epsilon_disc: opts.epsilon_disc,
        identity_tolerance: tol,
        identity_verdict,
        comparisons,
        verdict,
        excursions: star_ens.excursions,
        clipped: star_ens.clipped,
    })
}

/// Scheme error budget at `(T, x0)`: `|u_h - u_{h/2}| + |u_dt - u_{dt/2}|`
/// from two extra grid solves.
pub fn discretization_budget(
    sys: &GalerkinSystem,
    cost: &CostSpec,
    r: SaturationBound,
    t: f64,
    spec: &GridSpec,
    base: &ValueGrid,
    x0: &[f64],
) -> Result<f64> {
    let u = base.value_at(t, x0);
    let fine_h = GridSpec {
        points_per_axis: 2 * spec.points_per_axis - 1,
        march_dt: None,
        ..spec.clone()
    };
    let u_h2 = solve_hjb_grid(sys, cost, r, t, &fine_h)?.value_at(t, x0);
    let dt = base
        .diagnostics
        .march_dt
        .ok_or_else(|| Error::Unsupported("the base value grid must come from the grid march".into()))?;
    let fine_t = GridSpec {
        march_dt: Some(0.5 * dt),
        ..spec.clone()
    };
    let u_t2 = solve_hjb_grid(sys, cost, r, t, &fine_t)?.value_at(t, x0);
    Ok((u - u_h2).abs() + (u - u_t2).abs())
}
