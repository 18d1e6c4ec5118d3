//! One-axis parameter sweeps of the gate error and straight-line fits.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcwf::{deterministic_leakage_error, estimate_gate_error, TrajectorySpec};
use crate::metrics::GateTarget;
use crate::model::{DriveSetup, GateModels, PhysicsParams};
use crate::waveform::{Drive, Waveform};
use crate::Num;

/// Swept quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// Blockade shift in MHz (converted ×2π).
    #[serde(rename = "B_MHz")]
    Blockade,
    /// Förster defect in MHz (converted ×2π).
    #[serde(rename = "delta_p_MHz")]
    Penalty,
    #[serde(rename = "gamma_per_us")]
    Gamma,
    /// Magnitude of the perturbation.
    #[serde(rename = "epsilon")]
    Epsilon,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Blockade => "B_MHz",
            Self::Penalty => "delta_p_MHz",
            Self::Gamma => "gamma_per_us",
            Self::Epsilon => "epsilon",
        }
    }
}

/// Drive error applied with magnitude `ε`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    #[default]
    None,
    /// Ω(t) → (1 + ε) Ω(t) on both atoms.
    AmplitudeScale,
    /// Constant detuning offsets `ε·control_MHz`, `ε·target_MHz` on the two
    /// atoms (quasi-static Doppler shifts).
    DopplerOffsetPair {
        #[serde(rename = "control_MHz")]
        control_mhz: f64,
        #[serde(rename = "target_MHz")]
        target_mhz: f64,
    },
    /// Ω(t) → (1 + ε) Ω(t) on the control atom only.
    PowerImbalance,
}

impl Perturbation {
    /// Drive configuration for magnitude `eps`.
    pub fn apply(&self, drive: &Drive, eps: f64) -> DriveSetup {
        match *self {
            Self::None => DriveSetup::Symmetric(drive.clone()),
            Self::AmplitudeScale => {
                DriveSetup::Symmetric(drive.clone().with_amplitude_scale(1.0 + eps))
            }
            Self::DopplerOffsetPair {
                control_mhz,
                target_mhz,
            } => DriveSetup::Independent {
                control: drive.clone().with_detuning_offset(TAU * eps * control_mhz),
                target: drive.clone().with_detuning_offset(TAU * eps * target_mhz),
            },
            Self::PowerImbalance => DriveSetup::Independent {
                control: drive.clone().with_amplitude_scale(1.0 + eps),
                target: drive.clone(),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McwfSettings {
    pub n_trajectories: usize,
    pub base_seed: u64,
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub waveform: Waveform,
    /// Base physics; the swept axis overrides one entry per point.
    pub physics: PhysicsParams,
    pub axis: Axis,
    pub values: Vec<f64>,
    pub perturbation: Perturbation,
    /// Perturbation magnitude when the axis is not [`Axis::Epsilon`].
    pub epsilon: f64,
    pub target: GateTarget,
    pub tol: f64,
    /// Trajectory estimate per point instead of the deterministic value.
    pub mcwf: Option<McwfSettings>,
}

impl SweepSpec {
    pub fn new(waveform: Waveform, physics: PhysicsParams, axis: Axis, values: Vec<f64>) -> Self {
        Self {
            waveform,
            physics,
            axis,
            values,
            perturbation: Perturbation::None,
            epsilon: 0.0,
            target: GateTarget::default(),
            tol: 1e-11,
            mcwf: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidArgument(
                "sweep needs at least one value".into(),
            ));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite sweep value {v}"
            )));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument("non-finite epsilon".into()));
        }
        if let Some(m) = &self.mcwf {
            if m.n_trajectories == 0 {
                return Err(Error::InvalidArgument("n_trajectories must be ≥ 1".into()));
            }
        }
        self.physics.validate()
    }

    /// Physics, decay rate and drives at axis value `v`.
    fn point(&self, v: f64) -> Result<(PhysicsParams, f64, DriveSetup)> {
        let mut p = self.physics;
        let mut eps = self.epsilon;
        match self.axis {
            Axis::Blockade => p.blockade = TAU * v,
            Axis::Penalty => p.penalty = TAU * v,
            Axis::Gamma => p.decay = v,
            Axis::Epsilon => eps = v,
        }
        p.validate()?;
        let gamma = p.decay;
        p.decay = 0.0;
        Ok((
            p,
            gamma,
            self.perturbation
                .apply(&Drive::from(self.waveform.clone()), eps),
        ))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub gate_error: f64,
    pub stderr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis_name: String,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let with_stderr = self.rows.iter().any(|r| r.stderr.is_some());
        let mut s = String::from(if with_stderr {
            "axis_name,axis_value,gate_error,stderr\n"
        } else {
            "axis_name,axis_value,gate_error\n"
        });
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{}",
                self.axis_name,
                Num(r.axis_value),
                Num(r.gate_error)
            ));
            if with_stderr {
                s.push_str(&format!(",{}", Num(r.stderr.unwrap_or(0.0))));
            }
            s.push('\n');
        }
        s
    }

    /// Least-squares line through the rows.
    pub fn fit(&self) -> Result<FitResult> {
        let (x, y): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .map(|r| (r.axis_value, r.gate_error))
            .unzip();
        fit_linear(&x, &y)
    }
}

/// Evaluates every point; rows come back in the order of `spec.values`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let rows = spec
        .values
        .par_iter()
        .map(|&v| {
            let (p, gamma, setup) = spec.point(v)?;
            let models = GateModels::build(&setup, &p)?;
            match spec.mcwf {
                None => Ok(SweepRow {
                    axis_value: v,
                    gate_error: deterministic_leakage_error(&models, gamma, spec.target, spec.tol)?,
                    stderr: None,
                }),
                Some(m) => {
                    let ts = TrajectorySpec::new(models, gamma, m.n_trajectories, m.base_seed)
                        .with_target(spec.target)
                        .with_tol(spec.tol);
                    let stats = estimate_gate_error(&ts)?;
                    Ok(SweepRow {
                        axis_value: v,
                        gate_error: stats.mean_gate_error,
                        stderr: Some(stats.standard_error),
                    })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axis_name: spec.axis.name().to_string(),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y = slope·x + intercept`. Constant `y` has zero
/// residual and zero variance; its R² is taken as 1.
pub fn fit_linear(x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fit data"));
    }
    let n = x.len() as f64;
    if x.len() < 2 {
        return Err(Error::DegenerateFit("need at least two points"));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|xi| (xi - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * x.iter().map(|xi| xi * xi).sum::<f64>() {
        return Err(Error::DegenerateFit("abscissae are not distinct"));
    }
    let sxy: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|yi| (yi - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| (yi - slope * xi - intercept).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
    })
}
