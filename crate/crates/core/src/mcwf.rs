//! Quantum-jump (Monte-Carlo wave function) estimate of the decay-limited
//! gate error, and the deterministic non-Hermitian value it converges to.
//!
//! Decay is loss into an absorbing reservoir at rate `γ` per Rydberg
//! excitation. A trajectory draws one uniform `r` and jumps when the squared
//! norm of its no-jump state first falls below `r`; after a jump the
//! computational amplitude is 0.
//!
//! The gate estimate scores each trajectory on an input ensemble whose second
//! moments match the uniform (Haar) average for diagonal gates: each basis
//! state with weight 1/20 and the uniform superposition with weight 4/5.
//! Every input follows its own unraveling with its own `r`. A surviving input
//! scores the fidelity of its renormalized state, a jumped one scores 0, and
//! the weighted mean equals the fidelity of the sub-normalized no-jump gate.
//! The superposition's no-jump norm is `(1 + n00 + n01 + n10) / 4`.
//!
//! With loss-only jumps the no-jump evolution does not depend on `r`, so it is
//! integrated once per manifold and every trajectory just locates its
//! crossing on the stored dense output.

use num_complex::Complex64 as C64;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{ComplexVector, Hamiltonian};
use crate::metrics::{assemble_gate, local_phase_correction, GateOutcome, GateTarget};
use crate::model::{GateModels, TimeDependentModel};
use crate::propagator::{spectral_bound, DenseStep, Stepper};
use crate::Num;

/// Crossing times are refined to this resolution (μs).
pub const JUMP_TIME_RESOLUTION: f64 = 1e-4;

const DEFAULT_TOL: f64 = 1e-11;

/// Ensemble weight of each computational basis input.
const BASIS_WEIGHT: f64 = 0.05;
/// Ensemble weight of the uniform superposition input.
const SUPERPOSITION_INPUT_WEIGHT: f64 = 0.8;
/// Population of each manifold in the uniform superposition.
const SUPERPOSITION_WEIGHT: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub enum TrajectoryOutcome {
    Survived { final_state: ComplexVector },
    Jumped { time: f64 },
}

impl TrajectoryOutcome {
    pub fn jumped(&self) -> bool {
        matches!(self, Self::Jumped { .. })
    }

    /// Amplitude left in basis state 0; 0 after a jump.
    pub fn computational_amplitude(&self) -> C64 {
        match self {
            Self::Survived { final_state } => final_state[0],
            Self::Jumped { .. } => C64::new(0.0, 0.0),
        }
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "decay rate must be ≥ 0, got {gamma}"
        )))
    }
}

fn require_dissipation_free(m: &TimeDependentModel) -> Result<()> {
    if m.is_hermitian() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(
            "trajectory models must be dissipation-free; γ is applied here".into(),
        ))
    }
}

/// Bisects a monotonically decreasing `f` on `[lo, hi]` for its crossing of
/// `r`, given `f(lo) ≥ r > f(hi)`. Returns the first resolved time below `r`.
fn bisect_crossing(mut lo: f64, mut hi: f64, r: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    while hi - lo > JUMP_TIME_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if f(mid) < r {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// One trajectory of `m` (dissipation-free) under decay `gamma`, starting from
/// `psi0`. The norm is checked after every accepted step and a crossing is
/// refined on that step's interpolant.
pub fn run_trajectory<R: Rng + ?Sized>(
    m: &TimeDependentModel,
    gamma: f64,
    psi0: &[C64],
    tol: f64,
    rng: &mut R,
) -> Result<TrajectoryOutcome> {
    check_gamma(gamma)?;
    require_dissipation_free(m)?;
    let r: f64 = rng.random();
    let decayed = m.apply_decay(gamma)?;
    let tg = decayed.duration();
    let mut stepper = Stepper::new(&decayed, psi0, tol, spectral_bound(&decayed))?;
    let mut buf = vec![C64::new(0.0, 0.0); psi0.len()];
    while stepper.t() < tg {
        stepper.step(tg)?;
        if norm_sqr(stepper.y()) < r {
            let step = stepper.last_step();
            let time = bisect_crossing(step.t0, step.t1(), r, |t| {
                step.interpolate(t, &mut buf);
                norm_sqr(&buf)
            });
            return Ok(TrajectoryOutcome::Jumped { time });
        }
    }
    Ok(TrajectoryOutcome::Survived {
        final_state: ComplexVector::new(stepper.y().to_vec()),
    })
}

/// Dense no-jump evolution of one model under decay, kept for crossing
/// searches.
#[derive(Clone, Debug)]
pub struct NoJumpRecord {
    steps: Vec<DenseStep>,
    excitations: Vec<u8>,
    gamma: f64,
    final_state: ComplexVector,
}

impl NoJumpRecord {
    pub fn new(m: &TimeDependentModel, gamma: f64, psi0: &[C64], tol: f64) -> Result<Self> {
        check_gamma(gamma)?;
        require_dissipation_free(m)?;
        let decayed = m.apply_decay(gamma)?;
        let tg = decayed.duration();
        let mut stepper = Stepper::new(&decayed, psi0, tol, spectral_bound(&decayed))?;
        let mut steps = Vec::new();
        while stepper.t() < tg {
            stepper.step(tg)?;
            steps.push(stepper.last_step().clone());
        }
        Ok(Self {
            steps,
            excitations: m.excitations().to_vec(),
            gamma,
            final_state: ComplexVector::new(stepper.y().to_vec()),
        })
    }

    pub fn final_state(&self) -> &ComplexVector {
        &self.final_state
    }

    pub fn duration(&self) -> f64 {
        self.steps.last().map_or(0.0, DenseStep::t1)
    }

    pub fn state_at(&self, t: f64, out: &mut [C64]) {
        let k = self
            .steps
            .partition_point(|s| s.t1() < t)
            .min(self.steps.len() - 1);
        self.steps[k].interpolate(t, out);
    }

    pub fn norm_sqr_at(&self, t: f64, buf: &mut [C64]) -> f64 {
        self.state_at(t, buf);
        norm_sqr(buf)
    }

    /// Instantaneous loss rate `γ · Σ_k n_k |ψ_k|²`.
    pub fn loss_rate_at(&self, t: f64, buf: &mut [C64]) -> f64 {
        self.state_at(t, buf);
        self.gamma
            * buf
                .iter()
                .zip(&self.excitations)
                .map(|(c, &e)| e as f64 * c.norm_sqr())
                .sum::<f64>()
    }

    /// First time the squared norm falls below `r`, if it does.
    pub fn crossing(&self, r: f64) -> Option<f64> {
        if self.final_state.norm_sqr() >= r {
            return None;
        }
        let mut buf = vec![C64::new(0.0, 0.0); self.final_state.len()];
        // Locate the step by its end-point norm, then refine on its interpolant.
        let k = self.steps.iter().position(|s| {
            s.interpolate(s.t1(), &mut buf);
            norm_sqr(&buf) < r
        })?;
        let step = &self.steps[k];
        Some(bisect_crossing(step.t0, step.t1(), r, |t| {
            step.interpolate(t, &mut buf);
            norm_sqr(&buf)
        }))
    }
}

/// Inputs of a trajectory gate-error estimate.
#[derive(Clone, Debug)]
pub struct TrajectorySpec {
    /// Dissipation-free manifolds; `gamma` is applied on top.
    pub models: GateModels,
    pub gamma: f64,
    pub n_trajectories: usize,
    pub base_seed: u64,
    pub target: GateTarget,
    pub tol: f64,
}

impl TrajectorySpec {
    pub fn new(models: GateModels, gamma: f64, n_trajectories: usize, base_seed: u64) -> Self {
        Self {
            models,
            gamma,
            n_trajectories,
            base_seed,
            target: GateTarget::default(),
            tol: DEFAULT_TOL,
        }
    }

    pub fn with_target(mut self, target: GateTarget) -> Self {
        self.target = target;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        check_gamma(self.gamma)?;
        if self.n_trajectories == 0 {
            return Err(Error::InvalidArgument("n_trajectories must be ≥ 1".into()));
        }
        for (_, m) in self.models.iter() {
            require_dissipation_free(m)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStats {
    pub gamma: f64,
    pub mean_gate_error: f64,
    pub standard_error: f64,
    /// Fraction of trajectories with a jump out of the `00`, `01`, `10`
    /// manifold, from any input.
    pub jump_fraction: [f64; 3],
    pub n_trajectories: usize,
    pub base_seed: u64,
}

impl TrajectoryStats {
    pub fn total_jump_fraction(&self) -> f64 {
        self.jump_fraction.iter().sum()
    }
}

pub const STATS_CSV_HEADER: &str = "gamma_per_us,mean_error,stderr,n_traj,base_seed";

pub fn stats_csv(rows: &[TrajectoryStats]) -> String {
    let mut s = String::from(STATS_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            Num(r.gamma),
            Num(r.mean_gate_error),
            Num(r.standard_error),
            r.n_trajectories,
            r.base_seed
        ));
    }
    s
}

/// No-jump records of the three manifolds and the scoring they imply.
struct GateRecord {
    records: [NoJumpRecord; 3],
    /// Surviving fidelity `|a_j|² / n_j` of basis input `j`.
    basis_fidelity: [f64; 3],
    /// `|Tr M|² / 16` of the corrected sub-normalized gate.
    superposition_overlap: f64,
    superposition_norm: f64,
}

impl GateRecord {
    fn new(spec: &TrajectorySpec) -> Result<Self> {
        let rec = |m: &TimeDependentModel| {
            NoJumpRecord::new(m, spec.gamma, &ComplexVector::basis(m.dim(), 0), spec.tol)
        };
        let m = &spec.models;
        let records = [rec(&m.m00)?, rec(&m.m01)?, rec(&m.m10)?];
        let gate = no_jump_gate(&records)?;
        let scored = match spec.target {
            GateTarget::StrictCz => gate,
            GateTarget::ControlledPhase => local_phase_correction(&gate).corrected,
        };
        let [c00, c01, c10, c11] = scored.amplitudes;
        let basis_fidelity = [0, 1, 2].map(|j| {
            let n = records[j].final_state.norm_sqr();
            if n > 0.0 {
                records[j].final_state[0].norm_sqr() / n
            } else {
                0.0
            }
        });
        Ok(Self {
            basis_fidelity,
            superposition_overlap: (-c00 + c01 + c10 + c11).norm_sqr() / 16.0,
            superposition_norm: SUPERPOSITION_WEIGHT
                * (1.0
                    + records
                        .iter()
                        .map(|r| r.final_state.norm_sqr())
                        .sum::<f64>()),
            records,
        })
    }

    fn superposition_norm_at(&self, t: f64, bufs: &mut [Vec<C64>; 3]) -> f64 {
        let mut n = 1.0;
        for (r, b) in self.records.iter().zip(bufs.iter_mut()) {
            n += r.norm_sqr_at(t, b);
        }
        SUPERPOSITION_WEIGHT * n
    }

    /// Manifold the superposition input lost its population from, drawn in
    /// proportion to the instantaneous loss rates at its crossing.
    fn superposition_jump_source(&self, r: f64, u: f64) -> usize {
        let mut bufs = self
            .records
            .each_ref()
            .map(|rec| vec![C64::new(0.0, 0.0); rec.final_state.len()]);
        let t = bisect_crossing(0.0, self.records[0].duration(), r, |t| {
            self.superposition_norm_at(t, &mut bufs)
        });
        let rates = [0, 1, 2].map(|j| self.records[j].loss_rate_at(t, &mut bufs[j]));
        let mut acc = 0.0;
        let target = u * rates.iter().sum::<f64>();
        for (j, rate) in rates.iter().enumerate() {
            acc += rate;
            if target < acc {
                return j;
            }
        }
        rates.len() - 1
    }

    /// Gate error scored by trajectory `index`, and which manifolds jumped.
    fn trajectory(&self, base_seed: u64, index: u64) -> (f64, [bool; 3]) {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        rng.set_stream(index);
        let r_basis: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let r_sup: f64 = rng.random();
        let mut jumped = [false; 3];
        // |11⟩ never leaves the qubit space.
        let mut fidelity = BASIS_WEIGHT;
        for j in 0..3 {
            if self.records[j].crossing(r_basis[j]).is_some() {
                jumped[j] = true;
            } else {
                fidelity += BASIS_WEIGHT * self.basis_fidelity[j];
            }
        }
        if self.superposition_norm >= r_sup {
            fidelity +=
                SUPERPOSITION_INPUT_WEIGHT * self.superposition_overlap / self.superposition_norm;
        } else {
            jumped[self.superposition_jump_source(r_sup, rng.random())] = true;
        }
        (1.0 - fidelity, jumped)
    }
}

fn no_jump_gate(records: &[NoJumpRecord; 3]) -> Result<GateOutcome> {
    assemble_gate(
        records[0].final_state[0],
        records[1].final_state[0],
        records[2].final_state[0],
    )
}

/// Runs `f` on a pool of `workers` threads, or the global pool for `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Trajectory mean and standard error of the gate error. Trajectory `i` uses
/// ChaCha8 stream `i` of `base_seed`; results are reduced in index order, so
/// the output does not depend on the number of workers.
pub fn estimate_gate_error(spec: &TrajectorySpec) -> Result<TrajectoryStats> {
    spec.validate()?;
    let record = GateRecord::new(spec)?;
    let results: Vec<(f64, [bool; 3])> = (0..spec.n_trajectories as u64)
        .into_par_iter()
        .map(|i| record.trajectory(spec.base_seed, i))
        .collect();
    let n = results.len() as f64;
    // Shifted by the first value so identical outcomes give exactly zero spread.
    let shift = results[0].0;
    let mean_d = results.iter().map(|r| r.0 - shift).sum::<f64>() / n;
    let mean = shift + mean_d;
    let var = if results.len() > 1 {
        results
            .iter()
            .map(|r| (r.0 - shift - mean_d).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };
    let mut jumps = [0usize; 3];
    for (_, jumped) in &results {
        for j in 0..3 {
            jumps[j] += jumped[j] as usize;
        }
    }
    Ok(TrajectoryStats {
        gamma: spec.gamma,
        mean_gate_error: mean,
        standard_error: (var / n).sqrt(),
        jump_fraction: jumps.map(|k| k as f64 / n),
        n_trajectories: spec.n_trajectories,
        base_seed: spec.base_seed,
    })
}

/// The sub-normalized no-jump gate of dissipation-free `models` under decay.
pub fn leakage_gate(models: &GateModels, gamma: f64, tol: f64) -> Result<GateOutcome> {
    check_gamma(gamma)?;
    let rec = |m: &TimeDependentModel| {
        NoJumpRecord::new(m, gamma, &ComplexVector::basis(m.dim(), 0), tol)
    };
    no_jump_gate(&[rec(&models.m00)?, rec(&models.m01)?, rec(&models.m10)?])
}

/// `1 − F` of the sub-normalized no-jump gate, the exact trajectory average.
pub fn deterministic_leakage_error(
    models: &GateModels,
    gamma: f64,
    target: GateTarget,
    tol: f64,
) -> Result<f64> {
    Ok(leakage_gate(models, gamma, tol)?.error_for(target))
}

/// Single-qubit phase corrections the estimate applies, from the no-jump gate.
pub fn leakage_correction(models: &GateModels, gamma: f64, tol: f64) -> Result<(f64, f64)> {
    let c = local_phase_correction(&leakage_gate(models, gamma, tol)?);
    Ok((c.theta_control, c.theta_target))
}
