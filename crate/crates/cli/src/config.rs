//! Experiment configuration: one JSON file with nested blocks.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nshjb_core::cost::{CostDescriptor, CostSpec};
use nshjb_core::galerkin::validate_hypotheses;
use nshjb_core::hamiltonian::SaturationBound;
use nshjb_core::hjb::{stability_limit, GridSpec, Lattice, PicardOptions, MAX_GRID_MODES};
use nshjb_core::sde::{IntegratorSpec, Scheme};
use nshjb_core::{build_torus_system, GalerkinSystem, HypothesisParams, SpectralField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub m: usize,
    pub space_dim: usize,
    pub r: f64,
    pub g: f64,
    pub gamma: f64,
    #[serde(default = "yes")]
    pub bilinear: bool,
    #[serde(default = "yes")]
    pub noise: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostBlock {
    pub running: CostDescriptor,
    pub terminal: CostDescriptor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBlock {
    /// Radius of the admissible control ball.
    pub r_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Grid,
    Mild,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub horizon: f64,
    pub grid: GridSpec,
    #[serde(default = "grid_only")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub picard: PicardOptions,
    /// Killing rate `K`; `None` derives it from the bilinear constant.
    #[serde(default)]
    pub killing_rate: Option<f64>,
    #[serde(default = "default_killing_floor")]
    pub killing_floor: f64,
}

fn grid_only() -> Vec<Method> {
    vec![Method::Grid]
}

fn default_killing_floor() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Zero,
    Random,
    Feedback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    #[serde(default)]
    pub scheme: Scheme,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: Vec<f64>,
    #[serde(default = "default_policy")]
    pub policy: PolicyKind,
    /// Number of paths written to `paths/`.
    #[serde(default)]
    pub dump_paths: usize,
}

fn default_policy() -> PolicyKind {
    PolicyKind::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkBlock {
    pub n_paths: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    /// Probe states for value comparisons; each of length `m`.
    #[serde(default)]
    pub probes: Vec<Vec<f64>>,
    #[serde(default)]
    pub fk: Option<FkBlock>,
    /// Relative agreement required between solvers.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Scheme error allowance; `None` measures it by refinement.
    #[serde(default)]
    pub epsilon_disc: Option<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Truncation levels for `converge-m`.
    #[serde(default)]
    pub m_values: Vec<usize>,
    /// Riccati integration steps for `lq-oracle`.
    #[serde(default = "default_riccati_steps")]
    pub riccati_steps: usize,
}

fn default_rel_tol() -> f64 {
    0.03
}

fn default_level() -> f64 {
    0.99
}

fn default_delta() -> f64 {
    1.0
}

fn default_riccati_steps() -> usize {
    4000
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            probes: Vec::new(),
            fk: None,
            rel_tol: default_rel_tol(),
            level: default_level(),
            epsilon_disc: None,
            delta: default_delta(),
            m_values: Vec::new(),
            riccati_steps: default_riccati_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemBlock,
    pub cost: CostBlock,
    pub control: ControlBlock,
    pub solver: SolverBlock,
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub experiment: ExperimentBlock,
}

/// Which cross-module checks a run needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Needs {
    pub grid: bool,
    pub simulation: bool,
    /// The linear-quadratic reference runs with `B = I`, outside the
    /// smoothing assumption.
    pub allow_unsmoothed: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Canonical serialization: struct field order, defaults filled in.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn hyp(&self) -> Result<HypothesisParams, String> {
        HypothesisParams::new(self.system.g, self.system.r, self.system.gamma).map_err(|e| e.to_string())
    }

    pub fn system_with_m(&self, m: usize) -> Result<GalerkinSystem, String> {
        Ok(build_torus_system(m, self.system.space_dim, self.hyp()?)
            .map_err(|e| e.to_string())?
            .with_bilinear(self.system.bilinear)
            .with_noise(self.system.noise))
    }

    pub fn system(&self) -> Result<GalerkinSystem, String> {
        self.system_with_m(self.system.m)
    }

    /// Cost bound to `sys`; mode masks are cut to the modes `sys` has.
    pub fn cost_for(&self, sys: &GalerkinSystem) -> Result<CostSpec, String> {
        let cut = |d: &CostDescriptor| match d {
            CostDescriptor::SaturatedEnstrophy { cap, modes } => CostDescriptor::SaturatedEnstrophy {
                cap: *cap,
                modes: modes.as_ref().map(|v| v.iter().copied().filter(|&k| k < sys.m()).collect()),
            },
            CostDescriptor::RationalEnstrophy { cap, modes } => CostDescriptor::RationalEnstrophy {
                cap: *cap,
                modes: modes.as_ref().map(|v| v.iter().copied().filter(|&k| k < sys.m()).collect()),
            },
            other => other.clone(),
        };
        CostSpec::from_descriptors(sys, cut(&self.cost.running), cut(&self.cost.terminal)).map_err(|e| e.to_string())
    }

    pub fn r_bound(&self) -> Result<SaturationBound, String> {
        SaturationBound::new(self.control.r_bound).map_err(|e| e.to_string())
    }

    pub fn integrator(&self) -> Result<IntegratorSpec, String> {
        IntegratorSpec::new(self.simulation.scheme, self.simulation.dt, self.solver.horizon).map_err(|e| e.to_string())
    }

    /// `x0` cut or zero-padded to `m` modes.
    pub fn x0_for(&self, m: usize) -> SpectralField {
        let mut x = self.simulation.x0.clone();
        x.resize(m, 0.0);
        SpectralField::new(x).expect("x0 validated as finite")
    }

    /// Every violated precondition, all at once.
    pub fn violations(&self, needs: Needs) -> Vec<String> {
        let mut out = Vec::new();
        let sys = match self.system() {
            Ok(s) => Some(s),
            Err(e) => {
                out.push(format!("system: {e}"));
                None
            }
        };
        if let Some(sys) = &sys {
            for c in validate_hypotheses(sys).violations() {
                if needs.allow_unsmoothed && c.name == "gamma_smoothing" {
                    continue;
                }
                out.push(format!("hypothesis {}: {}", c.name, c.detail));
            }
            if let Err(e) = self.cost_for(sys) {
                out.push(format!("cost: {e}"));
            }
            if needs.simulation {
                if let Err(e) = self.integrator().and_then(|i| i.validate_for(sys).map_err(|e| e.to_string())) {
                    out.push(format!("simulation: {e}"));
                }
            }
            if needs.grid {
                out.extend(self.grid_violations(sys, self.system.m));
            }
        }
        for e in self.experiment.m_values.iter().filter(|&&m| m == 0 || (needs.grid && m > MAX_GRID_MODES)) {
            out.push(format!("experiment: m_values entry {e} must lie in 1..={MAX_GRID_MODES} for grid solves"));
        }
        if let Err(e) = self.r_bound() {
            out.push(format!("control: {e}"));
        }
        if !(self.solver.horizon.is_finite() && self.solver.horizon > 0.0) {
            out.push(format!("solver: horizon {} must be finite and > 0", self.solver.horizon));
        }
        if self.simulation.x0.len() != self.system.m {
            out.push(format!(
                "simulation: x0 has {} entries, expected m = {}",
                self.simulation.x0.len(),
                self.system.m
            ));
        }
        if self.simulation.x0.iter().any(|v| !v.is_finite()) {
            out.push("simulation: x0 must be finite".into());
        }
        if self.simulation.n_paths < 2 {
            out.push("simulation: n_paths must be >= 2".into());
        }
        if self.simulation.dump_paths > self.simulation.n_paths {
            out.push("simulation: dump_paths exceeds n_paths".into());
        }
        for (i, p) in self.experiment.probes.iter().enumerate() {
            if p.len() != self.system.m {
                out.push(format!("experiment: probe {i} has {} entries, expected {}", p.len(), self.system.m));
            }
        }
        if !(self.experiment.level > 0.0 && self.experiment.level < 1.0) {
            out.push(format!("experiment: level {} must lie in (0, 1)", self.experiment.level));
        }
        if let Some(fk) = &self.experiment.fk {
            if fk.n_paths < 2 || !(fk.dt > 0.0) {
                out.push("experiment: fk needs n_paths >= 2 and dt > 0".into());
            }
        }
        if let Some(k) = self.solver.killing_rate {
            if !(k.is_finite() && k > 0.0) {
                out.push(format!("solver: killing_rate {k} must be finite and > 0"));
            }
        }
        out
    }

    /// Grid-specific checks at truncation level `m`.
    pub fn grid_violations(&self, sys: &GalerkinSystem, m: usize) -> Vec<String> {
        let mut out = Vec::new();
        if m > MAX_GRID_MODES {
            out.push(format!("solver: grid solves need m <= {MAX_GRID_MODES}, got {m}"));
            return out;
        }
        match self.solver.grid.resolve_half_width(sys) {
            Err(e) => out.push(format!("solver.grid: {e}")),
            Ok(l) => {
                let lat = Lattice::new(self.solver.grid.points_per_axis, l);
                let dt_max = stability_limit(sys, &lat);
                if let Some(dt) = self.solver.grid.march_dt {
                    if dt > dt_max {
                        out.push(format!("solver.grid: march_dt {dt:.3e} exceeds the stability bound {dt_max:.3e}"));
                    }
                }
            }
        }
        out
    }
}

pub const GRID_AND_SIM: Needs = Needs {
    grid: true,
    simulation: true,
    allow_unsmoothed: false,
};
