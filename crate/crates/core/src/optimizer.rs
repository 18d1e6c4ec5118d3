//! Waveform re-optimization: bounded Nelder-Mead with seeded random restarts.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate_gate, GateOutcome, GateTarget};
use crate::model::{DriveSetup, GateModels, PhysicsParams};
use crate::propagator::PropagateOptions;
use crate::waveform::{BernsteinWaveform, Family, SinusoidalWaveform, Waveform};
use crate::Num;

/// Score of parameters whose waveform or propagation fails.
pub const PENALTY: f64 = 1.0;

/// Evaluations granted to each restart.
const RESTART_BUDGET: usize = 5_000;

/// Per-parameter `[lo, hi]`.
pub type Bounds = Vec<[f64; 2]>;

/// Parameter layout of a waveform family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum Parametrization {
    /// `[Ω0, Ω1, Ω2, Δ0, Δ1, Δ2]` in MHz.
    Sinusoidal,
    /// `[β0, β1, β2, β3, Δ0]` in MHz.
    Bernstein { degree: u32 },
}

impl Parametrization {
    pub fn family(self) -> Family {
        match self {
            Self::Sinusoidal => Family::Sinusoidal,
            Self::Bernstein { .. } => Family::Bernstein,
        }
    }

    pub fn dim(self) -> usize {
        match self {
            Self::Sinusoidal => 6,
            Self::Bernstein { .. } => 5,
        }
    }

    pub fn build(self, x: &[f64], gate_time: f64, angular: bool) -> Result<Waveform> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(match self {
            Self::Sinusoidal => {
                SinusoidalWaveform::new([x[0], x[1], x[2]], [x[3], x[4], x[5]], gate_time, angular)?
                    .into()
            }
            Self::Bernstein { degree } => {
                BernsteinWaveform::new([x[0], x[1], x[2], x[3]], degree, x[4], gate_time, angular)?
                    .into()
            }
        })
    }

    /// Parameters of a waveform of this family.
    pub fn params_of(self, w: &Waveform) -> Option<Vec<f64>> {
        match (self, w) {
            (Self::Sinusoidal, Waveform::Sinusoidal(s)) => {
                Some([s.omega_mhz(), s.delta_mhz()].concat())
            }
            (Self::Bernstein { .. }, Waveform::Bernstein(b)) => {
                let mut v = b.beta_mhz().to_vec();
                v.push(b.delta0_mhz());
                Some(v)
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizationProblem {
    pub parametrization: Parametrization,
    pub bounds: Bounds,
    /// Decay is ignored: pulses are designed for γ = 0.
    pub physics: PhysicsParams,
    pub target: GateTarget,
    pub budget: usize,
    pub seed: u64,
    pub gate_time: f64,
    pub angular: bool,
    /// Integration tolerance inside the search; the best point is re-scored at
    /// [`PropagateOptions::default`].
    pub search_tol: f64,
    /// A restart stops once it scores at or below this.
    pub stop_below: f64,
    /// First start instead of a random one.
    pub start: Option<Vec<f64>>,
}

impl OptimizationProblem {
    pub fn new(parametrization: Parametrization, bounds: Bounds, budget: usize, seed: u64) -> Self {
        Self {
            parametrization,
            bounds,
            physics: PhysicsParams::reference(),
            target: GateTarget::default(),
            budget,
            seed,
            gate_time: 1.0,
            angular: true,
            search_tol: 1e-9,
            stop_below: 0.0,
            start: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.len() != self.parametrization.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.parametrization.dim(),
                found: self.bounds.len(),
            });
        }
        if let Some(b) = self
            .bounds
            .iter()
            .find(|[lo, hi]| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(Error::InvalidArgument(format!(
                "bad bounds {b:?}: need finite lo < hi"
            )));
        }
        if self.budget == 0 {
            return Err(Error::InvalidArgument("budget must be ≥ 1".into()));
        }
        if let Some(s) = &self.start {
            if s.len() != self.bounds.len() {
                return Err(Error::DimensionMismatch {
                    expected: self.bounds.len(),
                    found: s.len(),
                });
            }
        }
        if !(self.gate_time.is_finite() && self.gate_time > 0.0) {
            return Err(Error::InvalidArgument("gate time must be > 0".into()));
        }
        self.physics.validate()
    }

    fn gate(&self, x: &[f64], opts: PropagateOptions) -> Result<GateOutcome> {
        let w = self
            .parametrization
            .build(x, self.gate_time, self.angular)?;
        let mut p = self.physics;
        p.decay = 0.0;
        let models = GateModels::build(&DriveSetup::Symmetric(w.into()), &p)?;
        Ok(evaluate_gate(&models, opts)?.outcome)
    }

    fn score(&self, x: &[f64], tol: f64) -> f64 {
        match self.gate(x, PropagateOptions::default().with_tol(tol)) {
            Ok(g) => g.error_for(self.target),
            Err(_) => PENALTY,
        }
    }

    /// Gate error of `x` at the search tolerance; failures score [`PENALTY`].
    pub fn objective(&self, x: &[f64]) -> f64 {
        self.score(x, self.search_tol)
    }

    fn restarts(&self) -> usize {
        self.budget.div_ceil(RESTART_BUDGET).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub eval: usize,
    pub best_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub start: Vec<f64>,
    pub best_params: Vec<f64>,
    pub best_error: f64,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub best_params: Vec<f64>,
    /// Best error re-scored at the default tolerance.
    pub best_error: f64,
    /// Best error as seen by the search.
    pub search_error: f64,
    pub evaluations: usize,
    pub budget_exhausted: bool,
    pub restarts: Vec<RestartSummary>,
    /// Best-so-far after each improving evaluation, restarts in index order.
    pub trace: Vec<TracePoint>,
}

impl OptimizationReport {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("eval,best_error\n");
        for p in &self.trace {
            s.push_str(&format!("{},{}\n", p.eval, Num(p.best_error)));
        }
        s
    }

    /// First evaluation at which the best-so-far reached `level`.
    pub fn evals_to_reach(&self, level: f64) -> Option<usize> {
        self.trace
            .iter()
            .find(|p| p.best_error <= level)
            .map(|p| p.eval)
    }
}

/// Result of [`nelder_mead`].
#[derive(Clone, Debug, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    /// `(evaluation, best)` at every improvement.
    pub history: Vec<(usize, f64)>,
}

/// Adaptive Nelder-Mead (dimension-dependent coefficients) inside a box.
/// Trial points are clamped to the bounds. When the simplex collapses it is
/// rebuilt around the best point, until `budget` evaluations are spent, the
/// value reaches `stop_below`, or a rebuild brings no improvement.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    bounds: &[[f64; 2]],
    budget: usize,
    stop_below: f64,
) -> Minimum {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, beta, gamma, delta) =
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let clamp = |x: &mut Vec<f64>| {
        for (xi, [lo, hi]) in x.iter_mut().zip(bounds) {
            *xi = xi.clamp(*lo, *hi);
        }
    };
    let mut evals = 0;
    let mut best = (x0.to_vec(), f64::INFINITY);
    let mut history = Vec::new();
    let mut eval = |x: &[f64], best: &mut (Vec<f64>, f64), evals: &mut usize| {
        let v = f(x);
        let v = if v.is_finite() { v } else { PENALTY };
        *evals += 1;
        if v < best.1 {
            *best = (x.to_vec(), v);
            history.push((*evals, v));
        }
        v
    };

    let mut scale = 0.1;
    let mut centre = x0.to_vec();
    clamp(&mut centre);
    'rebuild: loop {
        let before = best.1;
        // Initial simplex: steps of `scale` times the box width, pointed inward.
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        for k in 0..=n {
            if evals >= budget {
                break 'rebuild;
            }
            let mut x = centre.clone();
            if k > 0 {
                let [lo, hi] = bounds[k - 1];
                let step = scale * (hi - lo);
                x[k - 1] += if x[k - 1] + step <= hi { step } else { -step };
                clamp(&mut x);
            }
            let v = eval(&x, &mut best, &mut evals);
            simplex.push((x, v));
        }
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if best.1 <= stop_below || evals >= budget {
                break 'rebuild;
            }
            let spread = simplex[n].1 - simplex[0].1;
            let size = simplex[1..]
                .iter()
                .flat_map(|(x, _)| {
                    x.iter()
                        .zip(&simplex[0].0)
                        .zip(bounds)
                        .map(|((a, b), [lo, hi])| (a - b).abs() / (hi - lo))
                })
                .fold(0.0, f64::max);
            if size < 1e-10 || spread <= 1e-15 * simplex[0].1.abs().max(1e-300) {
                break;
            }
            let mut c = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (ci, xi) in c.iter_mut().zip(x) {
                    *ci += xi / nf;
                }
            }
            let along = |t: f64| {
                let mut x: Vec<f64> = c
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(ci, wi)| ci + t * (ci - wi))
                    .collect();
                clamp(&mut x);
                x
            };
            let xr = along(alpha);
            let fr = eval(&xr, &mut best, &mut evals);
            if evals >= budget {
                if fr < simplex[n].1 {
                    simplex[n] = (xr, fr);
                }
                break 'rebuild;
            }
            if fr < simplex[0].1 {
                let xe = along(beta);
                let fe = eval(&xe, &mut best, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(gamma);
                    let fc = eval(&xc, &mut best, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(-gamma);
                    let fc = eval(&xc, &mut best, &mut evals);
                    (xc, fc)
                };
                if fc < fr.min(simplex[n].1) {
                    simplex[n] = (xc, fc);
                } else {
                    let x_best = simplex[0].0.clone();
                    for v in simplex.iter_mut().skip(1) {
                        if evals >= budget {
                            break;
                        }
                        let mut x: Vec<f64> = x_best
                            .iter()
                            .zip(&v.0)
                            .map(|(b, xi)| b + delta * (xi - b))
                            .collect();
                        clamp(&mut x);
                        let fx = eval(&x, &mut best, &mut evals);
                        *v = (x, fx);
                    }
                }
            }
        }
        if best.1 >= before && scale < 0.05 {
            break;
        }
        centre = best.0.clone();
        scale = if best.1 < before { 0.05 } else { 0.01 };
    }
    Minimum {
        x: best.0,
        f: best.1,
        evaluations: evals,
        history,
    }
}

/// Runs the restarts (in parallel, each with a fixed share of the budget)
/// and merges them by best error, lower index winning ties. The result does
/// not depend on the number of worker threads.
pub fn optimize(problem: &OptimizationProblem) -> Result<OptimizationReport> {
    problem.validate()?;
    let k = problem.restarts();
    let share = |i: usize| problem.budget / k + usize::from(i < problem.budget % k);
    let starts: Vec<Vec<f64>> = (0..k)
        .map(|i| match (&problem.start, i) {
            (Some(s), 0) => s.clone(),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
                rng.set_stream(i as u64);
                problem
                    .bounds
                    .iter()
                    .map(|[lo, hi]| lo + (hi - lo) * rng.random::<f64>())
                    .collect()
            }
        })
        .collect();
    let runs: Vec<Minimum> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            nelder_mead(
                |x| problem.objective(x),
                x0,
                &problem.bounds,
                share(i),
                problem.stop_below,
            )
        })
        .collect();

    let mut trace = Vec::new();
    let mut offset = 0;
    let mut best_so_far = f64::INFINITY;
    let mut winner = 0;
    for (i, run) in runs.iter().enumerate() {
        for &(e, v) in &run.history {
            if v < best_so_far {
                best_so_far = v;
                trace.push(TracePoint {
                    eval: offset + e,
                    best_error: v,
                });
            }
        }
        if run.f < runs[winner].f {
            winner = i;
        }
        offset += run.evaluations;
    }
    let best = &runs[winner];
    Ok(OptimizationReport {
        best_params: best.x.clone(),
        best_error: problem.score(&best.x, PropagateOptions::default().tol),
        search_error: best.f,
        evaluations: offset,
        budget_exhausted: offset >= problem.budget,
        restarts: starts
            .into_iter()
            .zip(&runs)
            .map(|(start, r)| RestartSummary {
                start,
                best_params: r.x.clone(),
                best_error: r.f,
                evaluations: r.evaluations,
            })
            .collect(),
        trace,
    })
}
