//! Time-dependent Hamiltonians for the gate manifolds.
//!
//! A model is a sum of constant matrices weighted by time-dependent scalar
//! coefficients (1, Ω_k(t), Δ_k(t)) taken from one or more drive channels.
//! Each computational basis state evolves in its own manifold; `|11⟩` is never
//! driven and is not modeled.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, Hamiltonian, ZERO};
use crate::waveform::{Drive, TWO_PI};

/// Diagonal energy of `|pp'⟩`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PpDiagonal {
    /// `δ_p` alone, the sum of the two interaction terms as written.
    #[default]
    Literal,
    /// `2Δ(t) + δ_p`, the pair-state energy in the laser's rotating frame.
    RotatingFrame,
}

/// Pair-interaction and decay parameters, all in angular units (rad/μs).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicsParams {
    /// Förster coupling `B` between `|rr'⟩` and `|pp'⟩`.
    pub blockade: f64,
    /// Förster defect `δ_p` on `|pp'⟩`.
    pub penalty: f64,
    /// Uniform Rydberg decay rate γ (1/μs).
    pub decay: f64,
    pub pp_diagonal: PpDiagonal,
}

impl PhysicsParams {
    /// `B` and `δ_p` given as linear frequencies in MHz.
    pub fn from_mhz(
        blockade_mhz: f64,
        penalty_mhz: f64,
        decay_per_us: f64,
        pp_diagonal: PpDiagonal,
    ) -> Result<Self> {
        let p = Self {
            blockade: TWO_PI * blockade_mhz,
            penalty: TWO_PI * penalty_mhz,
            decay: decay_per_us,
            pp_diagonal,
        };
        p.validate()?;
        Ok(p)
    }

    /// `B = 2π × 500 MHz`, `δ_p = 2π × (−3) MHz`, no decay.
    pub fn reference() -> Self {
        Self::from_mhz(500.0, -3.0, 0.0, PpDiagonal::Literal).expect("valid")
    }

    pub fn with_blockade_mhz(mut self, b: f64) -> Self {
        self.blockade = TWO_PI * b;
        self
    }

    pub fn with_decay(mut self, gamma: f64) -> Self {
        self.decay = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.blockade.is_finite() || !self.penalty.is_finite() {
            return Err(Error::InvalidArgument(
                "blockade and penalty must be finite".into(),
            ));
        }
        if !(self.decay.is_finite() && self.decay >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "decay rate must be ≥ 0, got {}",
                self.decay
            )));
        }
        Ok(())
    }
}

/// Scalar multiplying one constant matrix term.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coefficient {
    Unit,
    /// Rabi frequency of drive channel `k`.
    Omega(usize),
    /// Detuning of drive channel `k`.
    Delta(usize),
}

impl std::fmt::Display for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Unit => f.write_str("unit"),
            Self::Omega(k) => write!(f, "omega[{k}]"),
            Self::Delta(k) => write!(f, "delta[{k}]"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coefficient: Coefficient,
    pub matrix: ComplexMatrix,
    nonzero: Vec<(usize, C64)>,
}

impl Term {
    pub fn new(coefficient: Coefficient, matrix: ComplexMatrix) -> Self {
        let nonzero = matrix
            .as_slice()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != ZERO)
            .map(|(k, &v)| (k, v))
            .collect();
        Self {
            coefficient,
            matrix,
            nonzero,
        }
    }
}

/// `H(t) = Σ_k c_k(t) · M_k` on a labeled basis.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeDependentModel {
    labels: Vec<String>,
    terms: Vec<Term>,
    drives: Vec<Drive>,
    excitations: Vec<u8>,
    hermitian: bool,
}

impl TimeDependentModel {
    pub fn new(
        labels: Vec<String>,
        terms: Vec<Term>,
        drives: Vec<Drive>,
        excitations: Vec<u8>,
    ) -> Result<Self> {
        let n = labels.len();
        if excitations.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: excitations.len(),
            });
        }
        if excitations.iter().any(|&e| e > 2) {
            return Err(Error::InvalidArgument(
                "excitation counts must be 0, 1 or 2".into(),
            ));
        }
        if drives.is_empty() {
            return Err(Error::InvalidArgument(
                "a model needs at least one drive".into(),
            ));
        }
        let tg = drives[0].gate_time();
        if drives.iter().any(|d| d.gate_time() != tg) {
            return Err(Error::InvalidArgument(
                "all drives must share one gate time".into(),
            ));
        }
        for t in &terms {
            if t.matrix.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: t.matrix.dim(),
                });
            }
            match t.coefficient {
                Coefficient::Omega(k) | Coefficient::Delta(k) if k >= drives.len() => {
                    return Err(Error::InvalidArgument(format!(
                        "term references missing drive {k}"
                    )));
                }
                _ => {}
            }
        }
        // With real coefficients the sum is Hermitian iff every term is.
        let hermitian = terms.iter().all(|t| t.matrix.is_hermitian());
        Ok(Self {
            labels,
            terms,
            drives,
            excitations,
            hermitian,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn drives(&self) -> &[Drive] {
        &self.drives
    }

    pub fn excitations(&self) -> &[u8] {
        &self.excitations
    }

    pub fn gate_time(&self) -> f64 {
        self.drives[0].gate_time()
    }

    /// Adds `-i γ/2 · (number of Rydberg excitations)` to every diagonal entry.
    /// Decayed population leaves the model for an absorbing reservoir.
    pub fn apply_decay(&self, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "decay rate must be ≥ 0, got {gamma}"
            )));
        }
        if gamma == 0.0 {
            return Ok(self.clone());
        }
        let diag: Vec<C64> = self
            .excitations
            .iter()
            .map(|&e| C64::new(0.0, -0.5 * gamma * e as f64))
            .collect();
        let mut terms = self.terms.clone();
        terms.push(Term::new(
            Coefficient::Unit,
            ComplexMatrix::from_diag(&diag),
        ));
        Self::new(
            self.labels.clone(),
            terms,
            self.drives.clone(),
            self.excitations.clone(),
        )
    }

    /// Block-diagonal union of independent models. Labels are prefixed with
    /// `"<block>:"`; drive channels are concatenated.
    pub fn direct_sum(blocks: &[(&str, &TimeDependentModel)]) -> Result<Self> {
        let n: usize = blocks.iter().map(|(_, m)| m.dim()).sum();
        let mut labels = Vec::with_capacity(n);
        let mut excitations = Vec::with_capacity(n);
        let mut drives = Vec::new();
        let mut terms = Vec::new();
        let mut offset = 0;
        for (name, m) in blocks {
            labels.extend(m.labels.iter().map(|l| format!("{name}:{l}")));
            excitations.extend_from_slice(&m.excitations);
            let drive_offset = drives.len();
            drives.extend(m.drives.iter().cloned());
            for t in &m.terms {
                let mut big = ComplexMatrix::zeros(n);
                for i in 0..m.dim() {
                    for j in 0..m.dim() {
                        big[(offset + i, offset + j)] = t.matrix[(i, j)];
                    }
                }
                let coefficient = match t.coefficient {
                    Coefficient::Unit => Coefficient::Unit,
                    Coefficient::Omega(k) => Coefficient::Omega(k + drive_offset),
                    Coefficient::Delta(k) => Coefficient::Delta(k + drive_offset),
                };
                terms.push(Term::new(coefficient, big));
            }
            offset += m.dim();
        }
        Self::new(labels, terms, drives, excitations)
    }

    /// Largest `‖H(t)‖₁` seen on a coarse grid; sets the integrator's
    /// initial step scale.
    pub fn spectral_bound(&self) -> f64 {
        let tg = self.gate_time();
        let mut h = ComplexMatrix::zeros(self.dim());
        (0..=64)
            .map(|k| {
                self.fill(tg * k as f64 / 64.0, &mut h);
                h.norm_one()
            })
            .fold(0.0, f64::max)
    }

    pub fn dump(&self) -> ModelDump {
        ModelDump {
            basis: self.labels.clone(),
            excitations: self.excitations.clone(),
            hermitian: self.hermitian,
            terms: self
                .terms
                .iter()
                .map(|t| TermDump {
                    coefficient: t.coefficient.to_string(),
                    matrix: t
                        .matrix
                        .rows()
                        .map(|r| r.iter().map(|c| [c.re, c.im]).collect())
                        .collect(),
                })
                .collect(),
        }
    }
}

impl Hamiltonian for TimeDependentModel {
    fn dim(&self) -> usize {
        self.labels.len()
    }

    fn duration(&self) -> f64 {
        self.gate_time()
    }

    fn fill(&self, t: f64, out: &mut ComplexMatrix) {
        // At most a handful of channels; evaluate each once.
        let mut cache = [(0.0, 0.0); 4];
        let channels: Vec<(f64, f64)>;
        let values: &[(f64, f64)] = if self.drives.len() <= cache.len() {
            for (slot, d) in cache.iter_mut().zip(&self.drives) {
                *slot = d.omega_delta(t);
            }
            &cache[..self.drives.len()]
        } else {
            channels = self.drives.iter().map(|d| d.omega_delta(t)).collect();
            &channels
        };
        let data = out.as_mut_slice();
        data.fill(ZERO);
        for term in &self.terms {
            let c = match term.coefficient {
                Coefficient::Unit => 1.0,
                Coefficient::Omega(k) => values[k].0,
                Coefficient::Delta(k) => values[k].1,
            };
            for &(idx, v) in &term.nonzero {
                data[idx] += v * c;
            }
        }
    }

    fn is_hermitian(&self) -> bool {
        self.hermitian
    }
}

/// JSON form of a model for golden-file comparisons.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDump {
    pub basis: Vec<String>,
    pub excitations: Vec<u8>,
    pub hermitian: bool,
    pub terms: Vec<TermDump>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermDump {
    pub coefficient: String,
    /// Row-major `[re, im]` pairs.
    pub matrix: Vec<Vec<[f64; 2]>>,
}

fn real(n: usize, entries: &[(usize, usize, f64)]) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n);
    for &(i, j, v) in entries {
        m[(i, j)] = C64::new(v, 0.0);
    }
    m
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Ground ↔ Rydberg two-level system with coupling `enhancement · Ω(t) / 2`.
///
/// `enhancement = 1` is a single atom (`|01⟩`, `|10⟩`); `√2` is the ideal
/// blockade collective state of `|00⟩`.
pub fn build_two_level(drive: Drive, enhancement: f64) -> Result<TimeDependentModel> {
    if !(enhancement.is_finite() && enhancement > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "enhancement must be positive, got {enhancement}"
        )));
    }
    let c = 0.5 * enhancement;
    TimeDependentModel::new(
        labels(&["g", "r"]),
        vec![
            Term::new(Coefficient::Omega(0), real(2, &[(0, 1, c), (1, 0, c)])),
            Term::new(Coefficient::Delta(0), real(2, &[(1, 1, 1.0)])),
        ],
        vec![drive],
        vec![0, 1],
    )
}

/// The `|00⟩` manifold under symmetric driving:
/// `|00⟩ ↔ |R⟩ ↔ |rr'⟩ ↔ |pp'⟩` with `|R⟩ = (|r0⟩ + |0r'⟩)/√2`.
pub fn build_symmetric_blockade(drive: Drive, p: &PhysicsParams) -> Result<TimeDependentModel> {
    let s = FRAC_1_SQRT_2;
    let pp = match p.pp_diagonal {
        PpDiagonal::Literal => 0.0,
        PpDiagonal::RotatingFrame => 2.0,
    };
    TimeDependentModel::new(
        labels(&["00", "R", "rr'", "pp'"]),
        vec![
            Term::new(
                Coefficient::Omega(0),
                real(4, &[(0, 1, s), (1, 0, s), (1, 2, s), (2, 1, s)]),
            ),
            Term::new(
                Coefficient::Delta(0),
                real(4, &[(1, 1, 1.0), (2, 2, 2.0), (3, 3, pp)]),
            ),
            Term::new(
                Coefficient::Unit,
                real(
                    4,
                    &[(2, 3, p.blockade), (3, 2, p.blockade), (3, 3, p.penalty)],
                ),
            ),
        ],
        vec![drive],
        vec![0, 1, 2, 2],
    )
}

/// The `|00⟩` manifold with independent control (channel 0) and target
/// (channel 1) drives on the basis `|00⟩, |r0⟩, |0r'⟩, |rr'⟩, |pp'⟩`.
pub fn build_full_two_atom(
    control: Drive,
    target: Drive,
    p: &PhysicsParams,
) -> Result<TimeDependentModel> {
    let pp = match p.pp_diagonal {
        PpDiagonal::Literal => 0.0,
        PpDiagonal::RotatingFrame => 1.0,
    };
    TimeDependentModel::new(
        labels(&["00", "r0", "0r'", "rr'", "pp'"]),
        vec![
            Term::new(
                Coefficient::Omega(0),
                real(5, &[(0, 1, 0.5), (1, 0, 0.5), (2, 3, 0.5), (3, 2, 0.5)]),
            ),
            Term::new(
                Coefficient::Omega(1),
                real(5, &[(0, 2, 0.5), (2, 0, 0.5), (1, 3, 0.5), (3, 1, 0.5)]),
            ),
            Term::new(
                Coefficient::Delta(0),
                real(5, &[(1, 1, 1.0), (3, 3, 1.0), (4, 4, pp)]),
            ),
            Term::new(
                Coefficient::Delta(1),
                real(5, &[(2, 2, 1.0), (3, 3, 1.0), (4, 4, pp)]),
            ),
            Term::new(
                Coefficient::Unit,
                real(
                    5,
                    &[(3, 4, p.blockade), (4, 3, p.blockade), (4, 4, p.penalty)],
                ),
            ),
        ],
        vec![control, target],
        vec![0, 1, 1, 2, 2],
    )
}

/// How the two atoms are driven.
#[derive(Clone, Debug, PartialEq)]
pub enum DriveSetup {
    /// Both atoms see the same Ω(t), Δ(t); uses the four-state reduction.
    Symmetric(Drive),
    /// Independent drives; uses the five-state model.
    Independent { control: Drive, target: Drive },
}

impl DriveSetup {
    pub fn gate_time(&self) -> f64 {
        match self {
            Self::Symmetric(d) => d.gate_time(),
            Self::Independent { control, .. } => control.gate_time(),
        }
    }
}

/// The three driven manifolds of the gate, decay included when `p.decay > 0`.
#[derive(Clone, Debug)]
pub struct GateModels {
    pub m00: TimeDependentModel,
    /// Control atom in `|0⟩`, target in `|1⟩`: only the control is driven.
    pub m01: TimeDependentModel,
    /// Control in `|1⟩`, target in `|0⟩`: only the target is driven.
    pub m10: TimeDependentModel,
}

impl GateModels {
    pub fn build(setup: &DriveSetup, p: &PhysicsParams) -> Result<Self> {
        p.validate()?;
        let (m00, m01, m10) = match setup {
            DriveSetup::Symmetric(d) => {
                let single = build_two_level(d.clone(), 1.0)?;
                (
                    build_symmetric_blockade(d.clone(), p)?,
                    single.clone(),
                    single,
                )
            }
            DriveSetup::Independent { control, target } => (
                build_full_two_atom(control.clone(), target.clone(), p)?,
                build_two_level(control.clone(), 1.0)?,
                build_two_level(target.clone(), 1.0)?,
            ),
        };
        Ok(Self {
            m00: m00.apply_decay(p.decay)?,
            m01: m01.apply_decay(p.decay)?,
            m10: m10.apply_decay(p.decay)?,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &TimeDependentModel)> {
        [("00", &self.m00), ("01", &self.m01), ("10", &self.m10)].into_iter()
    }

    /// Same models under a different uniform decay rate.
    pub fn with_decay(&self, gamma: f64) -> Result<Self> {
        Ok(Self {
            m00: self.m00.apply_decay(gamma)?,
            m01: self.m01.apply_decay(gamma)?,
            m10: self.m10.apply_decay(gamma)?,
        })
    }
}
