//! Pulse waveforms Ω(t), Δ(t) over a gate window `[0, T_g]`.
//!
//! Parameters are stored in linear-frequency units (MHz) exactly as written in
//! configuration files. Evaluation returns angular units (rad/μs); the
//! `angular` flag decides whether the stored coefficients are multiplied by
//! 2π on the way out or taken as already angular.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Num;

pub const TWO_PI: f64 = 2.0 * PI;

/// Grid used to check `Ω(t) ≥ 0` for the sinusoidal family.
const NONNEGATIVITY_GRID: usize = 10_000;
/// Allowed undershoot below zero before a sinusoidal amplitude is rejected.
const NONNEGATIVITY_SLACK: f64 = 1e-12;

/// `Ω(t) = Ω0 + Ω1 cos(2πt/T) + Ω2 sin(πt/T)`, likewise for Δ(t).
#[derive(Clone, Debug, PartialEq)]
pub struct SinusoidalWaveform {
    omega: [f64; 3],
    delta: [f64; 3],
    gate_time: f64,
    angular: bool,
}

impl SinusoidalWaveform {
    pub fn new(
        omega_mhz: [f64; 3],
        delta_mhz: [f64; 3],
        gate_time: f64,
        angular: bool,
    ) -> Result<Self> {
        check_gate_time(gate_time)?;
        if omega_mhz.iter().chain(&delta_mhz).any(|x| !x.is_finite()) {
            return Err(Error::InvalidWaveform(
                "non-finite sinusoidal coefficient".into(),
            ));
        }
        let w = Self {
            omega: omega_mhz,
            delta: delta_mhz,
            gate_time,
            angular,
        };
        let min = (0..=NONNEGATIVITY_GRID)
            .map(|k| w.raw(k as f64 / NONNEGATIVITY_GRID as f64).0)
            .fold(f64::INFINITY, f64::min);
        if min < -NONNEGATIVITY_SLACK {
            return Err(Error::InvalidWaveform(format!(
                "sinusoidal amplitude goes negative (min {min:.6} MHz)"
            )));
        }
        Ok(w)
    }

    pub fn omega_mhz(&self) -> [f64; 3] {
        self.omega
    }

    pub fn delta_mhz(&self) -> [f64; 3] {
        self.delta
    }

    /// Coefficient values in MHz at fractional time `x = t / T_g`.
    fn raw(&self, x: f64) -> (f64, f64) {
        let c = (TWO_PI * x).cos();
        let s = (PI * x).sin();
        let [o0, o1, o2] = self.omega;
        let [d0, d1, d2] = self.delta;
        (o0 + o1 * c + o2 * s, d0 + d1 * c + d2 * s)
    }
}

/// Amplitude-only family built from symmetric pairs of Bernstein polynomials:
/// `Ω(t) = Σ_{ν=1..4} β_ν (b_{ν,n}(t/T) + b_{n-ν,n}(t/T))`, `Δ(t) = Δ0`.
///
/// For `n = 8` the `ν = 4` term pairs `b_{4,8}` with itself and is therefore
/// counted twice; that is intentional.
#[derive(Clone, Debug, PartialEq)]
pub struct BernsteinWaveform {
    beta: [f64; 4],
    degree: u32,
    delta0: f64,
    gate_time: f64,
    angular: bool,
}

impl BernsteinWaveform {
    pub fn new(
        beta_mhz: [f64; 4],
        degree: u32,
        delta0_mhz: f64,
        gate_time: f64,
        angular: bool,
    ) -> Result<Self> {
        check_gate_time(gate_time)?;
        if degree < 8 || !degree.is_multiple_of(2) {
            return Err(Error::InvalidWaveform(format!(
                "Bernstein degree must be even and at least 8, got {degree}"
            )));
        }
        if beta_mhz.iter().any(|x| !x.is_finite()) || !delta0_mhz.is_finite() {
            return Err(Error::InvalidWaveform(
                "non-finite Bernstein coefficient".into(),
            ));
        }
        Ok(Self {
            beta: beta_mhz,
            degree,
            delta0: delta0_mhz,
            gate_time,
            angular,
        })
    }

    pub fn beta_mhz(&self) -> [f64; 4] {
        self.beta
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn delta0_mhz(&self) -> f64 {
        self.delta0
    }

    fn raw(&self, x: f64) -> (f64, f64) {
        let n = self.degree;
        // Endpoints are exact zeros; the polynomial form gives 0 there anyway
        // but only because every term carries a factor x^ν or (1-x)^ν.
        let omega = self
            .beta
            .iter()
            .enumerate()
            .map(|(k, &b)| {
                let nu = k as u32 + 1;
                b * (bernstein(nu, n, x) + bernstein(n - nu, n, x))
            })
            .sum();
        (omega, self.delta0)
    }
}

/// Uniformly sampled Ω and Δ joined by natural cubic splines.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledWaveform {
    omega: Spline,
    delta: Spline,
    gate_time: f64,
    angular: bool,
}

pub const MIN_SAMPLES: usize = 16;

impl SampledWaveform {
    pub fn new(
        omega_mhz: Vec<f64>,
        delta_mhz: Vec<f64>,
        gate_time: f64,
        angular: bool,
    ) -> Result<Self> {
        check_gate_time(gate_time)?;
        if omega_mhz.len() != delta_mhz.len() {
            return Err(Error::InvalidWaveform(format!(
                "{} amplitude samples but {} detuning samples",
                omega_mhz.len(),
                delta_mhz.len()
            )));
        }
        if omega_mhz.len() < MIN_SAMPLES {
            return Err(Error::InvalidWaveform(format!(
                "at least {MIN_SAMPLES} samples required, got {}",
                omega_mhz.len()
            )));
        }
        if omega_mhz.iter().chain(&delta_mhz).any(|x| !x.is_finite()) {
            return Err(Error::InvalidWaveform("non-finite sample".into()));
        }
        Ok(Self {
            omega: Spline::natural(omega_mhz),
            delta: Spline::natural(delta_mhz),
            gate_time,
            angular,
        })
    }

    pub fn omega_samples_mhz(&self) -> &[f64] {
        &self.omega.y
    }

    pub fn delta_samples_mhz(&self) -> &[f64] {
        &self.delta.y
    }

    fn raw(&self, x: f64) -> (f64, f64) {
        (self.omega.eval(x), self.delta.eval(x))
    }
}

/// Natural cubic spline through equally spaced samples on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
struct Spline {
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl Spline {
    fn natural(y: Vec<f64>) -> Self {
        let n = y.len();
        let h = 1.0 / (n - 1) as f64;
        // Tridiagonal system for interior second derivatives (Thomas algorithm).
        let mut m = vec![0.0; n];
        let inner = n - 2;
        let mut c_prime = vec![0.0; inner];
        let mut d_prime = vec![0.0; inner];
        for i in 0..inner {
            let k = i + 1;
            let rhs = 6.0 * (y[k + 1] - 2.0 * y[k] + y[k - 1]) / (h * h);
            let (a, b, c) = (1.0, 4.0, 1.0);
            if i == 0 {
                c_prime[i] = c / b;
                d_prime[i] = rhs / b;
            } else {
                let denom = b - a * c_prime[i - 1];
                c_prime[i] = c / denom;
                d_prime[i] = (rhs - a * d_prime[i - 1]) / denom;
            }
        }
        for i in (0..inner).rev() {
            m[i + 1] = d_prime[i]
                - if i + 1 < inner {
                    c_prime[i] * m[i + 2]
                } else {
                    0.0
                };
        }
        Self { y, m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.y.len();
        let h = 1.0 / (n - 1) as f64;
        let k = ((x / h).floor() as usize).min(n - 2);
        let a = (k as f64 + 1.0) * h - x;
        let b = x - k as f64 * h;
        self.m[k] * a * a * a / (6.0 * h)
            + self.m[k + 1] * b * b * b / (6.0 * h)
            + (self.y[k] / h - self.m[k] * h / 6.0) * a
            + (self.y[k + 1] / h - self.m[k + 1] * h / 6.0) * b
    }
}

fn check_gate_time(gate_time: f64) -> Result<()> {
    if gate_time.is_finite() && gate_time > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidWaveform(format!(
            "gate time must be positive, got {gate_time}"
        )))
    }
}

/// `b_{ν,n}(x) = C(n, ν) x^ν (1 - x)^{n-ν}`.
pub fn bernstein_basis(nu: u32, n: u32, x: f64) -> Result<f64> {
    if nu > n {
        return Err(Error::InvalidArgument(format!(
            "Bernstein index {nu} exceeds degree {n}"
        )));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!(
            "Bernstein argument {x} outside [0, 1]"
        )));
    }
    Ok(bernstein(nu, n, x))
}

fn bernstein(nu: u32, n: u32, x: f64) -> f64 {
    binomial(n, nu) * x.powi(nu as i32) * (1.0 - x).powi((n - nu) as i32)
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// One of the supported pulse families.
#[derive(Clone, Debug, PartialEq)]
pub enum Waveform {
    Sinusoidal(SinusoidalWaveform),
    Bernstein(BernsteinWaveform),
    Sampled(SampledWaveform),
}

impl From<SinusoidalWaveform> for Waveform {
    fn from(w: SinusoidalWaveform) -> Self {
        Self::Sinusoidal(w)
    }
}

impl From<BernsteinWaveform> for Waveform {
    fn from(w: BernsteinWaveform) -> Self {
        Self::Bernstein(w)
    }
}

impl From<SampledWaveform> for Waveform {
    fn from(w: SampledWaveform) -> Self {
        Self::Sampled(w)
    }
}

impl Waveform {
    pub fn gate_time(&self) -> f64 {
        match self {
            Self::Sinusoidal(w) => w.gate_time,
            Self::Bernstein(w) => w.gate_time,
            Self::Sampled(w) => w.gate_time,
        }
    }

    pub fn angular(&self) -> bool {
        match self {
            Self::Sinusoidal(w) => w.angular,
            Self::Bernstein(w) => w.angular,
            Self::Sampled(w) => w.angular,
        }
    }

    pub fn family(&self) -> Family {
        match self {
            Self::Sinusoidal(_) => Family::Sinusoidal,
            Self::Bernstein(_) => Family::Bernstein,
            Self::Sampled(_) => Family::Sampled,
        }
    }

    /// Same waveform with the other 2π convention.
    pub fn with_angular(&self, angular: bool) -> Self {
        let mut w = self.clone();
        match &mut w {
            Self::Sinusoidal(s) => s.angular = angular,
            Self::Bernstein(b) => b.angular = angular,
            Self::Sampled(s) => s.angular = angular,
        }
        w
    }

    /// `(Ω(t), Δ(t))` in rad/μs; `t` must lie in `[0, T_g]`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let gate_time = self.gate_time();
        if !(0.0..=gate_time).contains(&t) {
            return Err(Error::TimeOutOfRange { t, gate_time });
        }
        Ok(self.eval_clamped(t))
    }

    /// Like [`eval`](Self::eval) but clamps `t` into the window. Integrators
    /// call this since stage times can overshoot `T_g` by rounding.
    pub fn eval_clamped(&self, t: f64) -> (f64, f64) {
        let x = (t / self.gate_time()).clamp(0.0, 1.0);
        let (o, d) = match self {
            Self::Sinusoidal(w) => w.raw(x),
            Self::Bernstein(w) => w.raw(x),
            Self::Sampled(w) => w.raw(x),
        };
        let s = if self.angular() { TWO_PI } else { 1.0 };
        (s * o, s * d)
    }

    /// Upper bound on `|Ω|` and `|Δ|` over the window, sampled on a grid.
    pub fn peak(&self) -> (f64, f64) {
        (0..=1000).fold((0.0f64, 0.0f64), |(po, pd), k| {
            let (o, d) = self.eval_clamped(self.gate_time() * k as f64 / 1000.0);
            (po.max(o.abs()), pd.max(d.abs()))
        })
    }

    /// `n` uniformly spaced `(t, Ω, Δ)` triples including both endpoints.
    pub fn samples(&self, n: usize) -> Vec<(f64, f64, f64)> {
        let n = n.max(2);
        let tg = self.gate_time();
        (0..n)
            .map(|k| {
                let t = tg * k as f64 / (n - 1) as f64;
                let (o, d) = self.eval_clamped(t);
                (t, o, d)
            })
            .collect()
    }

    /// CSV with header `t_us,omega_rad_per_us,delta_rad_per_us`.
    pub fn to_csv(&self, n: usize) -> String {
        let mut out = String::from("t_us,omega_rad_per_us,delta_rad_per_us\n");
        for (t, o, d) in self.samples(n) {
            let _ = writeln!(out, "{},{},{}", Num(t), Num(o), Num(d));
        }
        out
    }

    pub fn validate(&self) -> WaveformReport {
        const GRID: usize = 1001;
        let tg = self.gate_time();
        let ts: Vec<f64> = (0..GRID)
            .map(|k| tg * k as f64 / (GRID - 1) as f64)
            .collect();
        let vals: Vec<(f64, f64)> = ts.iter().map(|&t| self.eval_clamped(t)).collect();
        let mut report = WaveformReport {
            symmetry_omega: 0.0,
            symmetry_delta: 0.0,
            omega_start: vals[0].0,
            omega_end: vals[GRID - 1].0,
            delta_start: vals[0].1,
            delta_end: vals[GRID - 1].1,
            omega_min: f64::INFINITY,
            omega_max: f64::NEG_INFINITY,
        };
        for (k, &(o, d)) in vals.iter().enumerate() {
            let (om, dm) = vals[GRID - 1 - k];
            report.symmetry_omega = report.symmetry_omega.max((o - om).abs());
            report.symmetry_delta = report.symmetry_delta.max((d - dm).abs());
            report.omega_min = report.omega_min.min(o);
            report.omega_max = report.omega_max.max(o);
        }
        report
    }

    pub fn to_spec(&self) -> WaveformSpec {
        let params = match self {
            Self::Sinusoidal(w) => WaveformParams::Sinusoidal(SinusoidalParams {
                omega_mhz: w.omega,
                delta_mhz: w.delta,
            }),
            Self::Bernstein(w) => WaveformParams::Bernstein(BernsteinParams {
                beta_mhz: w.beta,
                degree: w.degree,
                delta0_mhz: w.delta0,
            }),
            Self::Sampled(w) => WaveformParams::Sampled(SampledParams {
                omega_mhz: w.omega.y.clone(),
                delta_mhz: w.delta.y.clone(),
            }),
        };
        WaveformSpec {
            params,
            gate_time_us: self.gate_time(),
            angular: self.angular(),
        }
    }
}

/// Symmetry and endpoint summary of a waveform (angular units).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WaveformReport {
    /// `max |Ω(t) - Ω(T_g - t)|`
    pub symmetry_omega: f64,
    /// `max |Δ(t) - Δ(T_g - t)|`
    pub symmetry_delta: f64,
    pub omega_start: f64,
    pub omega_end: f64,
    pub delta_start: f64,
    pub delta_end: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Sinusoidal,
    Bernstein,
    Sampled,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sinusoidal => "sinusoidal",
            Self::Bernstein => "bernstein",
            Self::Sampled => "sampled",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidalParams {
    #[serde(rename = "omega_MHz")]
    pub omega_mhz: [f64; 3],
    #[serde(rename = "delta_MHz")]
    pub delta_mhz: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BernsteinParams {
    #[serde(rename = "beta_MHz")]
    pub beta_mhz: [f64; 4],
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(rename = "delta0_MHz")]
    pub delta0_mhz: f64,
}

fn default_degree() -> u32 {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledParams {
    #[serde(rename = "omega_MHz")]
    pub omega_mhz: Vec<f64>,
    #[serde(rename = "delta_MHz")]
    pub delta_mhz: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum WaveformParams {
    Sinusoidal(SinusoidalParams),
    Bernstein(BernsteinParams),
    Sampled(SampledParams),
}

/// Serialized form:
/// `{"family": ..., "params": {...}, "Tg_us": 1.0, "angular": true}`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveformSpec {
    pub params: WaveformParams,
    pub gate_time_us: f64,
    pub angular: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWaveformSpec {
    family: Family,
    params: serde_json::Value,
    #[serde(rename = "Tg_us")]
    gate_time_us: f64,
    #[serde(default = "default_angular")]
    angular: bool,
}

fn default_angular() -> bool {
    true
}

impl Serialize for WaveformSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::Error as _;
        let (family, params) = match &self.params {
            WaveformParams::Sinusoidal(p) => (Family::Sinusoidal, serde_json::to_value(p)),
            WaveformParams::Bernstein(p) => (Family::Bernstein, serde_json::to_value(p)),
            WaveformParams::Sampled(p) => (Family::Sampled, serde_json::to_value(p)),
        };
        RawWaveformSpec {
            family,
            params: params.map_err(S::Error::custom)?,
            gate_time_us: self.gate_time_us,
            angular: self.angular,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for WaveformSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let raw = RawWaveformSpec::deserialize(d)?;
        let params = match raw.family {
            Family::Sinusoidal => {
                serde_json::from_value(raw.params).map(WaveformParams::Sinusoidal)
            }
            Family::Bernstein => serde_json::from_value(raw.params).map(WaveformParams::Bernstein),
            Family::Sampled => serde_json::from_value(raw.params).map(WaveformParams::Sampled),
        }
        .map_err(|e| D::Error::custom(format!("{} params: {e}", raw.family)))?;
        Ok(Self {
            params,
            gate_time_us: raw.gate_time_us,
            angular: raw.angular,
        })
    }
}

impl WaveformSpec {
    pub fn build(&self) -> Result<Waveform> {
        let (tg, ang) = (self.gate_time_us, self.angular);
        Ok(match &self.params {
            WaveformParams::Sinusoidal(p) => {
                SinusoidalWaveform::new(p.omega_mhz, p.delta_mhz, tg, ang)?.into()
            }
            WaveformParams::Bernstein(p) => {
                BernsteinWaveform::new(p.beta_mhz, p.degree, p.delta0_mhz, tg, ang)?.into()
            }
            WaveformParams::Sampled(p) => {
                SampledWaveform::new(p.omega_mhz.clone(), p.delta_mhz.clone(), tg, ang)?.into()
            }
        })
    }

    pub fn family(&self) -> Family {
        match self.params {
            WaveformParams::Sinusoidal(_) => Family::Sinusoidal,
            WaveformParams::Bernstein(_) => Family::Bernstein,
            WaveformParams::Sampled(_) => Family::Sampled,
        }
    }
}

/// Amplitude and frequency modulation with both reference parameter sets
/// available as constructors.
pub mod presets {
    use super::*;

    /// Amplitude + frequency modulated C-Z waveform, `T_g = 1 μs`.
    pub fn sinusoidal_cz() -> SinusoidalWaveform {
        SinusoidalWaveform::new([2.564, 0.950, 0.116], [1.004, -1.093, -0.002], 1.0, true)
            .expect("preset is valid")
    }

    /// Amplitude-only controlled-PHASE waveform, `n = 8`, `T_g = 1 μs`.
    pub fn bernstein_cphase() -> BernsteinWaveform {
        BernsteinWaveform::new([1.419, 0.0, 5.076, 13.425], 8, -3.512, 1.0, true)
            .expect("preset is valid")
    }
}

/// A waveform as seen by one atom, possibly miscalibrated.
#[derive(Clone, Debug, PartialEq)]
pub struct Drive {
    pub waveform: Waveform,
    /// Multiplies Ω(t); 1 means nominal.
    pub amplitude_scale: f64,
    /// Added to Δ(t), rad/μs.
    pub detuning_offset: f64,
}

impl Drive {
    pub fn gate_time(&self) -> f64 {
        self.waveform.gate_time()
    }

    pub fn omega_delta(&self, t: f64) -> (f64, f64) {
        let (o, d) = self.waveform.eval_clamped(t);
        (o * self.amplitude_scale, d + self.detuning_offset)
    }

    pub fn with_amplitude_scale(mut self, s: f64) -> Self {
        self.amplitude_scale = s;
        self
    }

    pub fn with_detuning_offset(mut self, d: f64) -> Self {
        self.detuning_offset = d;
        self
    }
}

impl From<Waveform> for Drive {
    fn from(waveform: Waveform) -> Self {
        Self {
            waveform,
            amplitude_scale: 1.0,
            detuning_offset: 0.0,
        }
    }
}
