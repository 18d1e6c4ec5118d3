//! JSON run configuration shared by the command-line tool.
//!
//! Frequencies are linear (MHz) here and converted to rad/μs when models are
//! built. Unknown fields are rejected everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::GateTarget;
use crate::model::{PhysicsParams, PpDiagonal};
use crate::optimizer::{OptimizationProblem, Parametrization};
use crate::propagator::PropagateOptions;
use crate::sweep::{Axis, McwfSettings, Perturbation, SweepSpec};
use crate::waveform::{Family, Waveform, WaveformSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physics: PhysicsConfig,
    pub waveform: WaveformSpec,
    #[serde(default)]
    pub simulation: SimulationConfig,
    /// Headline figure of merit; command blocks may override it.
    #[serde(default)]
    pub target: GateTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcwf: Option<McwfConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimize: Option<OptimizeConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    #[serde(rename = "B_MHz")]
    pub blockade_mhz: f64,
    #[serde(rename = "delta_p_MHz")]
    pub penalty_mhz: f64,
    #[serde(default)]
    pub gamma_per_us: f64,
    #[serde(default, rename = "pp_diagonal_convention")]
    pub pp_diagonal: PpDiagonal,
}

impl PhysicsConfig {
    pub fn params(&self) -> Result<PhysicsParams> {
        PhysicsParams::from_mhz(
            self.blockade_mhz,
            self.penalty_mhz,
            self.gamma_per_us,
            self.pp_diagonal,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_record")]
    pub record_points: usize,
}

fn default_tol() -> f64 {
    1e-11
}

fn default_record() -> usize {
    1024
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            record_points: default_record(),
        }
    }
}

impl SimulationConfig {
    pub fn options(&self) -> PropagateOptions {
        PropagateOptions::default()
            .with_tol(self.tol)
            .with_record(self.record_points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McwfConfig {
    pub gamma_per_us: Vec<f64>,
    pub n_trajectories: usize,
    pub base_seed: u64,
    /// One line per blockade value; defaults to `physics.B_MHz`.
    #[serde(default, rename = "B_MHz", skip_serializing_if = "Option::is_none")]
    pub blockade_mhz: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<GateTarget>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Axis,
    pub values: Vec<f64>,
    #[serde(default)]
    pub perturbation: Perturbation,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mcwf: Option<McwfSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<GateTarget>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub family: Family,
    #[serde(default = "default_degree")]
    pub degree: u32,
    /// `[lo, hi]` per parameter, MHz.
    pub bounds: Vec<[f64; 2]>,
    pub budget: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<GateTarget>,
    #[serde(default = "default_search_tol")]
    pub search_tol: f64,
    #[serde(default)]
    pub stop_below: f64,
    /// Use the configured waveform as the first start.
    #[serde(default)]
    pub start_from_waveform: bool,
}

fn default_degree() -> u32 {
    8
}

fn default_search_tol() -> f64 {
    1e-9
}

fn invalid(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

fn check_finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, "must be finite"))
    }
}

fn check_tol(path: &str, tol: f64) -> Result<()> {
    if (1e-13..=1e-6).contains(&tol) {
        Ok(())
    } else {
        Err(invalid(path, format!("{tol:e} outside [1e-13, 1e-6]")))
    }
}

impl RunConfig {
    /// Parses and validates. Errors name the line and column or the field.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.physics;
        check_finite("physics.B_MHz", p.blockade_mhz)?;
        check_finite("physics.delta_p_MHz", p.penalty_mhz)?;
        if !(p.gamma_per_us.is_finite() && p.gamma_per_us >= 0.0) {
            return Err(invalid("physics.gamma_per_us", "must be ≥ 0"));
        }
        self.waveform.build().map_err(|e| invalid("waveform", e))?;
        check_tol("simulation.tol", self.simulation.tol)?;
        if let Some(m) = &self.mcwf {
            if m.gamma_per_us.is_empty() {
                return Err(invalid("mcwf.gamma_per_us", "needs at least one value"));
            }
            if m.gamma_per_us.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                return Err(invalid("mcwf.gamma_per_us", "values must be ≥ 0"));
            }
            if m.n_trajectories == 0 {
                return Err(invalid("mcwf.n_trajectories", "must be ≥ 1"));
            }
            if let Some(b) = &m.blockade_mhz {
                if b.is_empty() || b.iter().any(|v| !v.is_finite()) {
                    return Err(invalid("mcwf.B_MHz", "needs finite values"));
                }
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(invalid("sweep.values", "needs at least one value"));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(invalid("sweep.values", "values must be finite"));
            }
            check_finite("sweep.epsilon", s.epsilon)?;
            if s.axis == Axis::Gamma && s.values.iter().any(|v| *v < 0.0) {
                return Err(invalid("sweep.values", "decay rates must be ≥ 0"));
            }
            if s.mcwf.is_some_and(|m| m.n_trajectories == 0) {
                return Err(invalid("sweep.mcwf.n_trajectories", "must be ≥ 1"));
            }
        }
        if let Some(o) = &self.optimize {
            let problem = self.optimization_problem().map_err(|e| match e {
                Error::Config(m) => Error::Config(m),
                other => invalid("optimize", other),
            })?;
            problem.validate().map_err(|e| invalid("optimize", e))?;
            check_tol("optimize.search_tol", o.search_tol)?;
        }
        Ok(())
    }

    pub fn physics_params(&self) -> Result<PhysicsParams> {
        self.physics.params()
    }

    pub fn build_waveform(&self) -> Result<Waveform> {
        self.waveform.build()
    }

    /// Sweep description from the `sweep` block.
    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let s = self
            .sweep
            .as_ref()
            .ok_or_else(|| invalid("sweep", "block missing"))?;
        let mut spec = SweepSpec::new(
            self.build_waveform()?,
            self.physics_params()?,
            s.axis,
            s.values.clone(),
        );
        spec.perturbation = s.perturbation;
        spec.epsilon = s.epsilon;
        spec.target = s.target.unwrap_or(self.target);
        spec.tol = self.simulation.tol;
        spec.mcwf = s.mcwf;
        Ok(spec)
    }

    /// Optimization problem from the `optimize` block.
    pub fn optimization_problem(&self) -> Result<OptimizationProblem> {
        let o = self
            .optimize
            .as_ref()
            .ok_or_else(|| invalid("optimize", "block missing"))?;
        let parametrization = match o.family {
            Family::Sinusoidal => Parametrization::Sinusoidal,
            Family::Bernstein => Parametrization::Bernstein { degree: o.degree },
            Family::Sampled => {
                return Err(invalid(
                    "optimize.family",
                    "sampled waveforms cannot be optimized",
                ))
            }
        };
        if o.bounds.len() != parametrization.dim() {
            return Err(invalid(
                "optimize.bounds",
                format!(
                    "{} family needs {} bounds, got {}",
                    o.family,
                    parametrization.dim(),
                    o.bounds.len()
                ),
            ));
        }
        let mut p = OptimizationProblem::new(parametrization, o.bounds.clone(), o.budget, o.seed);
        p.physics = self.physics_params()?;
        p.target = o.target.unwrap_or(self.target);
        p.gate_time = self.waveform.gate_time_us;
        p.angular = self.waveform.angular;
        p.search_tol = o.search_tol;
        p.stop_below = o.stop_below;
        if o.start_from_waveform {
            let w = self.build_waveform()?;
            let start = parametrization.params_of(&w).ok_or_else(|| {
                invalid(
                    "optimize.start_from_waveform",
                    "waveform family differs from optimize.family",
                )
            })?;
            let x: Vec<f64> = start
                .iter()
                .zip(&o.bounds)
                .map(|(v, [lo, hi])| v.clamp(*lo, *hi))
                .collect();
            p.start = Some(x);
        }
        Ok(p)
    }

    /// Replaces every seed in the command blocks.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(m) = &mut self.mcwf {
            m.base_seed = seed;
        }
        if let Some(s) = &mut self.sweep {
            if let Some(m) = &mut s.mcwf {
                m.base_seed = seed;
            }
        }
        if let Some(o) = &mut self.optimize {
            o.seed = seed;
        }
    }
}
