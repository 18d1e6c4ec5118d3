//! Adaptive integration of `i dψ/dt = H(t) ψ`.
//!
//! Dormand-Prince 5(4) with the standard fourth-order continuous extension,
//! so populations, phases and norm crossings can be read off at arbitrary
//! times inside accepted steps.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector, Hamiltonian, I, ZERO};
use crate::Num;

pub const DEFAULT_TOL: f64 = 1e-11;
pub const DEFAULT_RECORD_POINTS: usize = 1024;
pub const MIN_TOL: f64 = 1e-13;
pub const MAX_TOL: f64 = 1e-6;
/// Below this population a phase is reported as undefined.
pub const PHASE_POPULATION_FLOOR: f64 = 1e-12;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Accepted step `[t0, t0 + h]` with its interpolation polynomial.
#[derive(Clone, Debug)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    rcont: [Vec<C64>; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// State at `t ∈ [t0, t1]`.
    pub fn interpolate(&self, t: f64, out: &mut [C64]) {
        let theta = ((t - self.t0) / self.h).clamp(0.0, 1.0);
        let theta1 = 1.0 - theta;
        let [r1, r2, r3, r4, r5] = &self.rcont;
        for (i, o) in out.iter_mut().enumerate() {
            *o = r1[i] + theta * (r2[i] + theta1 * (r3[i] + theta * (r4[i] + theta1 * r5[i])));
        }
    }
}

/// Snapshot sufficient to replay the stepper bit-for-bit.
#[derive(Clone, Debug)]
pub struct StepperState {
    t: f64,
    h: f64,
    facold: f64,
    y: Vec<C64>,
    k1: Vec<C64>,
    steps: usize,
    rejected: bool,
}

/// Dormand-Prince 5(4) stepper for `dψ/dt = -i H(t) ψ`.
pub struct Stepper<'a, H: Hamiltonian + ?Sized> {
    ham: &'a H,
    tol: f64,
    h_max: f64,
    state: StepperState,
    hbuf: ComplexMatrix,
    k: [Vec<C64>; 6],
    ytmp: Vec<C64>,
    ynew: Vec<C64>,
    last: DenseStep,
}

impl<'a, H: Hamiltonian + ?Sized> Stepper<'a, H> {
    /// `bound` is an estimate of `max_t ‖H(t)‖`; it sets the initial and
    /// maximum step.
    pub fn new(ham: &'a H, psi0: &[C64], tol: f64, bound: f64) -> Result<Self> {
        check_tol(tol)?;
        let n = ham.dim();
        if psi0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: psi0.len(),
            });
        }
        let duration = ham.duration();
        let bound = bound.max(1.0 / duration);
        let h0 = (0.02 / bound).min(duration);
        let zeros = || vec![ZERO; n];
        let mut s = Self {
            ham,
            tol,
            h_max: (3.0 / bound).min(duration),
            state: StepperState {
                t: 0.0,
                h: h0,
                facold: 1e-4,
                y: psi0.to_vec(),
                k1: zeros(),
                steps: 0,
                rejected: false,
            },
            hbuf: ComplexMatrix::zeros(n),
            k: [zeros(), zeros(), zeros(), zeros(), zeros(), zeros()],
            ytmp: zeros(),
            ynew: zeros(),
            last: DenseStep {
                t0: 0.0,
                h: 0.0,
                rcont: [zeros(), zeros(), zeros(), zeros(), zeros()],
            },
        };
        let mut k1 = zeros();
        s.rhs(0.0, psi0, &mut k1);
        s.state.k1 = k1;
        Ok(s)
    }

    pub fn t(&self) -> f64 {
        self.state.t
    }

    pub fn y(&self) -> &[C64] {
        &self.state.y
    }

    pub fn steps(&self) -> usize {
        self.state.steps
    }

    pub fn last_step(&self) -> &DenseStep {
        &self.last
    }

    pub fn snapshot(&self) -> StepperState {
        self.state.clone()
    }

    pub fn restore(&mut self, s: &StepperState) {
        self.state = s.clone();
    }

    fn rhs(&mut self, t: f64, y: &[C64], out: &mut [C64]) {
        self.ham.fill(t, &mut self.hbuf);
        self.hbuf.matvec_into(y, out);
        for o in out.iter_mut() {
            *o *= -I;
        }
    }

    /// Takes one accepted step, never past `t_end`. The dense polynomial of the
    /// step is available from [`last_step`](Self::last_step) afterwards.
    pub fn step(&mut self, t_end: f64) -> Result<()> {
        let n = self.state.y.len();
        loop {
            let t = self.state.t;
            let mut h = self.state.h.min(self.h_max);
            let mut last = false;
            if t + h >= t_end - 1e-15 * t_end.abs().max(1.0) {
                h = t_end - t;
                last = true;
            }
            if h <= 1e-14 * t.abs().max(1.0) {
                return Err(Error::StepUnderflow { t, h });
            }
            let [k2, k3, k4, k5, k6, k7] = std::mem::take(&mut self.k);
            let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (k2, k3, k4, k5, k6, k7);
            let mut ytmp = std::mem::take(&mut self.ytmp);
            let mut ynew = std::mem::take(&mut self.ynew);
            let y = std::mem::take(&mut self.state.y);
            let k1 = std::mem::take(&mut self.state.k1);

            for i in 0..n {
                ytmp[i] = y[i] + h * A21 * k1[i];
            }
            self.rhs(t + C2 * h, &ytmp, &mut k2);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            self.rhs(t + C3 * h, &ytmp, &mut k3);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            self.rhs(t + C4 * h, &ytmp, &mut k4);
            for i in 0..n {
                ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            self.rhs(t + C5 * h, &ytmp, &mut k5);
            for i in 0..n {
                ytmp[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_new = if last { t_end } else { t + h };
            self.rhs(t_new, &ytmp, &mut k6);
            for i in 0..n {
                ynew[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            self.rhs(t_new, &ynew, &mut k7);

            let mut err = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.tol + self.tol * y[i].norm().max(ynew[i].norm());
                err += (e.norm() / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();

            if !err.is_finite() {
                self.restore_buffers(k1, [k2, k3, k4, k5, k6, k7], ytmp, ynew, y);
                return Err(Error::NonFinite("propagation"));
            }

            let expo = 0.2 - BETA * 0.75;
            if err <= 1.0 {
                let fac11 = err.max(1e-300).powf(expo);
                let fac = (fac11 / self.state.facold.powf(BETA) / SAFETY)
                    .clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_next = h / fac;
                if self.state.rejected {
                    h_next = h_next.min(h);
                }
                // Dense output coefficients.
                {
                    let [r1, r2, r3, r4, r5] = &mut self.last.rcont;
                    for i in 0..n {
                        let ydiff = ynew[i] - y[i];
                        let bspl = h * k1[i] - ydiff;
                        r1[i] = y[i];
                        r2[i] = ydiff;
                        r3[i] = bspl;
                        r4[i] = ydiff - h * k7[i] - bspl;
                        r5[i] = h
                            * (D1 * k1[i]
                                + D3 * k3[i]
                                + D4 * k4[i]
                                + D5 * k5[i]
                                + D6 * k6[i]
                                + D7 * k7[i]);
                    }
                }
                self.last.t0 = t;
                self.last.h = h;
                self.state.facold = err.max(1e-4);
                self.state.t = t_new;
                self.state.h = h_next;
                self.state.steps += 1;
                self.state.rejected = false;
                // FSAL: k7 becomes the next k1; old y buffer becomes scratch.
                self.restore_buffers(k7, [k2, k3, k4, k5, k6, k1], ytmp, y, ynew);
                return Ok(());
            }
            let fac11 = err.powf(expo);
            let fac = (fac11 / SAFETY).min(1.0 / FAC_MIN);
            self.state.h = h / fac;
            self.state.rejected = true;
            self.restore_buffers(k1, [k2, k3, k4, k5, k6, k7], ytmp, ynew, y);
        }
    }

    fn restore_buffers(
        &mut self,
        k1: Vec<C64>,
        ks: [Vec<C64>; 6],
        ytmp: Vec<C64>,
        ynew: Vec<C64>,
        y: Vec<C64>,
    ) {
        self.state.k1 = k1;
        self.k = ks;
        self.ytmp = ytmp;
        self.ynew = ynew;
        self.state.y = y;
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if (MIN_TOL..=MAX_TOL).contains(&tol) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "tolerance {tol:e} outside [{MIN_TOL:e}, {MAX_TOL:e}]"
        )))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagateOptions {
    pub tol: f64,
    /// Number of uniformly spaced samples to record, endpoints included; 0
    /// disables recording.
    pub record: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            record: 0,
        }
    }
}

impl PropagateOptions {
    pub fn with_record(mut self, record: usize) -> Self {
        self.record = record;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub amplitudes: Vec<C64>,
}

impl Sample {
    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct PropagationResult {
    pub final_state: ComplexVector,
    pub samples: Vec<Sample>,
    pub step_count: usize,
    /// `max_t |‖ψ(t)‖² − ‖ψ0‖²|` over accepted step endpoints.
    pub max_norm_drift: f64,
}

/// Integrates `ψ0` over the model's full window `[0, T]`.
pub fn propagate<H: Hamiltonian + ?Sized>(
    ham: &H,
    psi0: &ComplexVector,
    opts: PropagateOptions,
) -> Result<PropagationResult> {
    let bound = spectral_bound(ham);
    let mut stepper = Stepper::new(ham, psi0, opts.tol, bound)?;
    let duration = ham.duration();
    let norm0 = psi0.norm_sqr();
    let mut drift: f64 = 0.0;
    let mut samples = Vec::with_capacity(opts.record);
    let sample_time = |k: usize| {
        if opts.record <= 1 {
            0.0
        } else {
            duration * k as f64 / (opts.record - 1) as f64
        }
    };
    let mut next_sample = 0;
    if opts.record > 0 {
        samples.push(Sample {
            t: 0.0,
            amplitudes: psi0.to_vec(),
        });
        next_sample = 1;
    }
    let mut buf = vec![ZERO; ham.dim()];
    while stepper.t() < duration {
        stepper.step(duration)?;
        let norm: f64 = stepper.y().iter().map(|c| c.norm_sqr()).sum();
        drift = drift.max((norm - norm0).abs());
        let last = stepper.last_step();
        while next_sample < opts.record {
            let ts = sample_time(next_sample);
            let done = stepper.t() >= duration;
            if ts > last.t1() && !done {
                break;
            }
            let amplitudes = if next_sample == opts.record - 1 {
                stepper.y().to_vec()
            } else {
                last.interpolate(ts, &mut buf);
                buf.clone()
            };
            samples.push(Sample { t: ts, amplitudes });
            next_sample += 1;
        }
    }
    let final_state = ComplexVector::new(stepper.y().to_vec());
    if !final_state.is_finite() {
        return Err(Error::NonFinite("propagation"));
    }
    Ok(PropagationResult {
        final_state,
        samples,
        step_count: stepper.steps(),
        max_norm_drift: drift,
    })
}

/// Largest `‖H(t)‖₁` on a 65-point grid.
pub fn spectral_bound<H: Hamiltonian + ?Sized>(ham: &H) -> f64 {
    let mut m = ComplexMatrix::zeros(ham.dim());
    let tg = ham.duration();
    (0..=64)
        .map(|k| {
            ham.fill(tg * k as f64 / 64.0, &mut m);
            m.norm_one()
        })
        .fold(0.0, f64::max)
}

/// Unwrapped phase series per basis state. `None` marks samples whose
/// population is below [`PHASE_POPULATION_FLOOR`].
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseTrace {
    pub t: Vec<f64>,
    pub phases: Vec<Vec<Option<f64>>>,
}

/// Minimal-jump unwrapping of `arg ψ_k(t)` for every basis state.
pub fn phase_trace(samples: &[Sample]) -> PhaseTrace {
    let n = samples.first().map_or(0, |s| s.amplitudes.len());
    let mut phases = vec![Vec::with_capacity(samples.len()); n];
    for (k, series) in phases.iter_mut().enumerate() {
        let mut prev: Option<f64> = None;
        for s in samples {
            let a = s.amplitudes[k];
            if a.norm_sqr() < PHASE_POPULATION_FLOOR {
                series.push(None);
                continue;
            }
            let raw = a.arg();
            let value = match prev {
                None => raw,
                Some(p) => p + wrap_to_pi(raw - p),
            };
            prev = Some(value);
            series.push(Some(value));
        }
    }
    PhaseTrace {
        t: samples.iter().map(|s| s.t).collect(),
        phases,
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_to_pi(x: f64) -> f64 {
    use std::f64::consts::PI;
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Trajectory CSV: `t_us,pop_<label>...,phase_<label>...`; undefined phases
/// are written as empty fields.
pub fn trajectory_csv(labels: &[String], samples: &[Sample]) -> String {
    let trace = phase_trace(samples);
    let mut out = String::from("t_us");
    for l in labels {
        let _ = write!(out, ",pop_{l}");
    }
    for l in labels {
        let _ = write!(out, ",phase_{l}");
    }
    out.push('\n');
    for (row, s) in samples.iter().enumerate() {
        let _ = write!(out, "{}", Num(s.t));
        for p in s.populations() {
            let _ = write!(out, ",{}", Num(p));
        }
        for series in &trace.phases {
            match series[row] {
                Some(ph) => {
                    let _ = write!(out, ",{}", Num(ph));
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{matrix_exponential, ONE};
    use std::f64::consts::PI;

    struct Constant(ComplexMatrix, f64);

    impl Hamiltonian for Constant {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn duration(&self) -> f64 {
            self.1
        }
        fn fill(&self, _t: f64, out: &mut ComplexMatrix) {
            out.clone_from(&self.0);
        }
        fn is_hermitian(&self) -> bool {
            self.0.is_hermitian()
        }
    }

    fn rabi(omega: f64, delta: f64, duration: f64) -> Constant {
        Constant(
            ComplexMatrix::from_real_rows(&[vec![0.0, omega / 2.0], vec![omega / 2.0, delta]])
                .unwrap(),
            duration,
        )
    }

    #[test]
    fn zero_hamiltonian_leaves_state_unchanged() {
        let h = Constant(ComplexMatrix::zeros(3), 1.0);
        let psi0 = ComplexVector::new(vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8), ZERO]);
        let r = propagate(&h, &psi0, PropagateOptions::default()).unwrap();
        assert!(r.final_state.max_abs_diff(&psi0) < 1e-15);
    }

    #[test]
    fn resonant_pi_pulse_transfers_population() {
        let omega = 2.0 * PI * 4.0;
        let h = rabi(omega, 0.0, PI / omega);
        let r = propagate(&h, &ComplexVector::basis(2, 0), PropagateOptions::default()).unwrap();
        assert!((r.final_state[1].norm_sqr() - 1.0).abs() < 1e-8);
        assert!((r.final_state[1] + I).norm() < 1e-8);
        assert!(r.max_norm_drift < 1e-9);
    }

    #[test]
    fn two_pi_pulse_returns_with_sign_flip() {
        let omega = 2.0 * PI * 4.0;
        let h = rabi(omega, 0.0, 2.0 * PI / omega);
        let r = propagate(
            &h,
            &ComplexVector::basis(2, 0),
            PropagateOptions::default().with_record(256),
        )
        .unwrap();
        assert!((r.final_state[0] + ONE).norm() < 1e-8);
        let trace = phase_trace(&r.samples);
        let last = trace.phases[0].last().unwrap().unwrap();
        assert!((wrap_to_pi(last) - PI).abs() < 1e-6 || (wrap_to_pi(last) + PI).abs() < 1e-6);
    }

    #[test]
    fn matches_exact_exponential_for_detuned_constant_drive() {
        let h = rabi(30.0, -12.0, 1.7);
        let psi0 = ComplexVector::basis(2, 0);
        let exact = matrix_exponential(&h.0, 1.7).unwrap().matvec(&psi0);
        let r = propagate(&h, &psi0, PropagateOptions::default()).unwrap();
        assert!(r.final_state.max_abs_diff(&exact) < 1e-9);
    }

    #[test]
    fn samples_are_uniform_and_accurate() {
        let h = rabi(30.0, -12.0, 1.0);
        let psi0 = ComplexVector::basis(2, 0);
        let r = propagate(&h, &psi0, PropagateOptions::default().with_record(300)).unwrap();
        assert_eq!(r.samples.len(), 300);
        assert_eq!(r.samples[0].t, 0.0);
        assert_eq!(r.samples[299].t, 1.0);
        for s in r.samples.iter().step_by(37) {
            let exact = matrix_exponential(&h.0, s.t).unwrap().matvec(&psi0);
            let got = ComplexVector::new(s.amplitudes.clone());
            assert!(got.max_abs_diff(&exact) < 1e-8, "t = {}", s.t);
        }
    }

    #[test]
    fn stationary_phase_slope() {
        let delta = 7.0;
        let h = Constant(ComplexMatrix::from_diag(&[ZERO, C64::new(delta, 0.0)]), 2.0);
        let psi0 = ComplexVector::basis(2, 1);
        let r = propagate(&h, &psi0, PropagateOptions::default().with_record(512)).unwrap();
        let trace = phase_trace(&r.samples);
        let ph = &trace.phases[1];
        let slope = (ph[511].unwrap() - ph[0].unwrap()) / 2.0;
        assert!((slope + delta).abs() < 1e-8);
        assert!(trace.phases[0].iter().all(Option::is_none));
        for w in ph.windows(2) {
            assert!((w[1].unwrap() - w[0].unwrap()).abs() < PI);
        }
    }

    #[test]
    fn rejects_bad_tolerance_and_dimension() {
        let h = rabi(1.0, 0.0, 1.0);
        let psi0 = ComplexVector::basis(2, 0);
        assert!(propagate(&h, &psi0, PropagateOptions::default().with_tol(1e-3)).is_err());
        assert!(propagate(&h, &psi0, PropagateOptions::default().with_tol(1e-15)).is_err());
        assert!(propagate(&h, &ComplexVector::basis(3, 0), PropagateOptions::default()).is_err());
    }

    #[test]
    fn non_finite_hamiltonian_is_reported() {
        let mut m = ComplexMatrix::zeros(2);
        m[(0, 1)] = C64::new(f64::INFINITY, 0.0);
        m[(1, 0)] = C64::new(f64::INFINITY, 0.0);
        let h = Constant(m, 1.0);
        assert!(propagate(&h, &ComplexVector::basis(2, 0), PropagateOptions::default()).is_err());
    }

    #[test]
    fn wrap_to_pi_range() {
        assert_eq!(wrap_to_pi(PI), PI);
        assert!((wrap_to_pi(-PI) - PI).abs() < 1e-15);
        assert!((wrap_to_pi(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn trajectory_csv_layout() {
        let h = rabi(10.0, 0.0, 1.0);
        let r = propagate(
            &h,
            &ComplexVector::basis(2, 0),
            PropagateOptions::default().with_record(4),
        )
        .unwrap();
        let csv = trajectory_csv(&["g".into(), "r".into()], &r.samples);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t_us,pop_g,pop_r,phase_g,phase_r");
        assert_eq!(lines.len(), 5);
        // r has zero amplitude at t = 0, so its phase field is empty.
        assert!(lines[1].ends_with(','));
    }

    #[test]
    fn snapshot_restore_replays_identically() {
        let h = rabi(40.0, 5.0, 1.0);
        let psi0 = ComplexVector::basis(2, 0);
        let mut s = Stepper::new(&h, &psi0, 1e-10, 40.0).unwrap();
        for _ in 0..5 {
            s.step(1.0).unwrap();
        }
        let snap = s.snapshot();
        s.step(1.0).unwrap();
        let (t1, y1) = (s.t(), s.y().to_vec());
        s.restore(&snap);
        s.step(1.0).unwrap();
        assert_eq!(s.t(), t1);
        assert_eq!(s.y(), &y1[..]);
    }
}
