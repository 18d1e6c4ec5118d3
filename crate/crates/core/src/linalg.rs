//! Small dense complex linear algebra.
//!
//! Every matrix in this crate is at most ten-dimensional, so storage is a flat
//! row-major `Vec` and all algorithms are the textbook dense ones. Hamiltonians
//! are in angular-frequency units (rad/μs) and times in μs throughout.

use std::ops::{Deref, DerefMut};

pub use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Tolerance used by [`ComplexMatrix::is_hermitian`].
pub const HERMITIAN_TOL: f64 = 1e-12;

/// An ordered list of complex probability amplitudes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComplexVector(Vec<C64>);

impl ComplexVector {
    pub fn new(entries: Vec<C64>) -> Self {
        Self(entries)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![ZERO; n])
    }

    /// Unit vector along basis index `k`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut v = Self::zeros(n);
        v.0[k] = ONE;
        v
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest elementwise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.0
    }
}

impl Deref for ComplexVector {
    type Target = [C64];
    fn deref(&self) -> &[C64] {
        &self.0
    }
}

impl DerefMut for ComplexVector {
    fn deref_mut(&mut self) -> &mut [C64] {
        &mut self.0
    }
}

impl From<Vec<C64>> for ComplexVector {
    fn from(v: Vec<C64>) -> Self {
        Self(v)
    }
}

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    n: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![ZERO; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for k in 0..n {
            m[(k, k)] = ONE;
        }
        m
    }

    pub fn from_diag(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (k, &x) in d.iter().enumerate() {
            m[(k, k)] = x;
        }
        m
    }

    /// Builds a matrix from rows; rejects ragged or non-square input.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: rows.iter().map(Vec::len).max().unwrap_or(0),
            });
        }
        Ok(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    /// Builds from real rows, convenient for tests and Hamiltonian templates.
    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn rows(&self) -> impl Iterator<Item = &[C64]> {
        self.data.chunks(self.n)
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C64]) -> ComplexVector {
        let mut out = vec![ZERO; self.n];
        self.matvec_into(v, &mut out);
        ComplexVector(out)
    }

    /// `out = self · v` without allocating.
    pub fn matvec_into(&self, v: &[C64], out: &mut [C64]) {
        let n = self.n;
        assert!(v.len() == n && out.len() == n);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * n..(i + 1) * n];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    /// `self += s · other`
    pub fn add_scaled(&mut self, s: C64, other: &Self) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * b;
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|k| self[(k, k)]).sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// True iff `max |m_ij - conj(m_ji)| < 1e-12`.
    pub fn is_hermitian(&self) -> bool {
        let n = self.n;
        for i in 0..n {
            for j in i..n {
                if (self[(i, j)] - self[(j, i)].conj()).norm() >= HERMITIAN_TOL {
                    return false;
                }
            }
        }
        true
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

/// Checks Hermiticity of a matrix given as rows, rejecting non-square input.
pub fn hermitian_check(rows: &[Vec<C64>]) -> Result<bool> {
    Ok(ComplexMatrix::from_rows(rows)?.is_hermitian())
}

/// Eigen-decomposition of a Hermitian matrix: `a = v · diag(w) · v†`.
#[derive(Clone, Debug)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    /// Eigenvectors stored as columns.
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn new(a: &ComplexMatrix) -> Self {
        let n = a.dim();
        let mut work = a.clone();
        let mut vectors = ComplexMatrix::identity(n);
        let mut values = vec![0.0; n];
        jacobi_eigh(n, work.as_mut_slice(), vectors.as_mut_slice(), &mut values);
        Self { values, vectors }
    }
}

/// Cyclic complex Jacobi eigensolver.
///
/// On return `w` holds the eigenvalues, `v` (row-major, must enter as the
/// identity or any unitary to accumulate into) holds the eigenvectors as
/// columns, and `a` has been reduced to diagonal form.
pub fn jacobi_eigh(n: usize, a: &mut [C64], v: &mut [C64], w: &mut [f64]) {
    let scale: f64 = a
        .iter()
        .map(|x| x.norm_sqr())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q].norm_sqr();
            }
        }
        if off <= 1e-34 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                // Phase e^{-iφ} on column q makes the (p, q) entry real and
                // positive; a real rotation then annihilates it.
                let phase = apq.conj() / r;
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let theta = (aqq - app) / (2.0 * r);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // G = [[c, s], [-s·phase, c·phase]] acting on columns (p, q).
                let gpp = C64::new(c, 0.0);
                let gpq = C64::new(s, 0.0);
                let gqp = -phase * s;
                let gqq = phase * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = akp * gpp + akq * gqp;
                    a[k * n + q] = akp * gpq + akq * gqq;
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = vkp * gpp + vkq * gqp;
                    v[k * n + q] = vkp * gpq + vkq * gqq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = gpp.conj() * apk + gqp.conj() * aqk;
                    a[q * n + k] = gpq.conj() * apk + gqq.conj() * aqk;
                }
                a[p * n + q] = ZERO;
                a[q * n + p] = ZERO;
                a[p * n + p] = C64::new(a[p * n + p].re, 0.0);
                a[q * n + q] = C64::new(a[q * n + q].re, 0.0);
            }
        }
    }
    for k in 0..n {
        w[k] = a[k * n + k].re;
    }
}

/// Returns `exp(-i · m · dt)`.
///
/// Hermitian input goes through an eigen-decomposition (exactly unitary up to
/// rounding); anything else through Padé-13 scaling and squaring.
pub fn matrix_exponential(m: &ComplexMatrix, dt: f64) -> Result<ComplexMatrix> {
    if !m.is_finite() || !dt.is_finite() {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    if dt < 0.0 {
        return Err(Error::InvalidArgument(format!("negative time step {dt}")));
    }
    let out = if m.is_hermitian() {
        let eig = HermitianEigen::new(m);
        let n = m.dim();
        let phases: Vec<C64> = eig.values.iter().map(|&l| (-I * l * dt).exp()).collect();
        let mut out = ComplexMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (0..n)
                    .map(|k| eig.vectors[(i, k)] * phases[k] * eig.vectors[(j, k)].conj())
                    .sum();
            }
        }
        out
    } else {
        expm_pade(&m.scale(-I * dt))?
    };
    if !out.is_finite() {
        return Err(Error::NonFinite("matrix exponential result"));
    }
    Ok(out)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// `exp(a)` by degree-13 Padé approximation with scaling and squaring.
pub fn expm_pade(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    const THETA13: f64 = 5.371920351148152;
    let n = a.dim();
    let norm = a.norm_one();
    if !norm.is_finite() {
        return Err(Error::NonFinite("matrix exponential input"));
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.scale(C64::new(0.5f64.powi(s), 0.0));
    let id = ComplexMatrix::identity(n);
    let a2 = a.matmul(&a);
    let a4 = a2.matmul(&a2);
    let a6 = a4.matmul(&a2);
    let b = |k: usize| C64::new(PADE13[k], 0.0);

    let mut u_inner = a6.scale(b(13));
    u_inner.add_scaled(b(11), &a4);
    u_inner.add_scaled(b(9), &a2);
    let mut u = a6.matmul(&u_inner);
    u.add_scaled(b(7), &a6);
    u.add_scaled(b(5), &a4);
    u.add_scaled(b(3), &a2);
    u.add_scaled(b(1), &id);
    let u = a.matmul(&u);

    let mut v_inner = a6.scale(b(12));
    v_inner.add_scaled(b(10), &a4);
    v_inner.add_scaled(b(8), &a2);
    let mut v = a6.matmul(&v_inner);
    v.add_scaled(b(6), &a6);
    v.add_scaled(b(4), &a4);
    v.add_scaled(b(2), &a2);
    v.add_scaled(b(0), &id);

    let mut p = v.clone();
    p.add_scaled(ONE, &u);
    let mut q = v;
    q.add_scaled(-ONE, &u);
    let mut r = solve(&q, &p)?;
    for _ in 0..s {
        r = r.matmul(&r);
    }
    Ok(r)
}

/// Solves `a · x = b` for square `b` by LU with partial pivoting.
pub fn solve(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.dim();
    let mut lu = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| lu[(i, col)].norm().total_cmp(&lu[(j, col)].norm()))
            .unwrap_or(col);
        if lu[(piv, col)].norm() == 0.0 {
            return Err(Error::Singular);
        }
        if piv != col {
            for j in 0..n {
                lu.data.swap(piv * n + j, col * n + j);
                x.data.swap(piv * n + j, col * n + j);
            }
        }
        let d = lu[(col, col)];
        for i in col + 1..n {
            let f = lu[(i, col)] / d;
            if f == ZERO {
                continue;
            }
            for j in col..n {
                let t = lu[(col, j)];
                lu[(i, j)] -= f * t;
            }
            for j in 0..n {
                let t = x[(col, j)];
                x[(i, j)] -= f * t;
            }
        }
    }
    for col in (0..n).rev() {
        let d = lu[(col, col)];
        for j in 0..n {
            let mut acc = x[(col, j)];
            for k in col + 1..n {
                acc -= lu[(col, k)] * x[(k, j)];
            }
            x[(col, j)] = acc / d;
        }
    }
    Ok(x)
}

/// Anything that can produce `H(t)` on a fixed interval `[0, duration]`.
pub trait Hamiltonian {
    fn dim(&self) -> usize;
    fn duration(&self) -> f64;
    /// Writes `H(t)` into `out`, which has dimension `self.dim()`.
    fn fill(&self, t: f64, out: &mut ComplexMatrix);
    fn is_hermitian(&self) -> bool;

    fn at(&self, t: f64) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(self.dim());
        self.fill(t, &mut m);
        m
    }
}

/// Reference propagation: `n_steps` equal intervals, each advanced by the
/// exact exponential of `H` sampled at the interval midpoint.
///
/// Second order in the step size. Used as an independent check of the
/// adaptive integrator, never on a hot path.
pub fn evolve_piecewise_constant<H: Hamiltonian + ?Sized>(
    h: &H,
    psi0: &ComplexVector,
    n_steps: usize,
) -> Result<ComplexVector> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    let n = h.dim();
    if psi0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: psi0.len(),
        });
    }
    let dt = h.duration() / n_steps as f64;
    let hermitian = h.is_hermitian();
    let mut ham = ComplexMatrix::zeros(n);
    let mut vecs = ComplexMatrix::zeros(n);
    let mut vals = vec![0.0; n];
    let mut psi = psi0.to_vec();
    let mut tmp = vec![ZERO; n];
    for k in 0..n_steps {
        let t = (k as f64 + 0.5) * dt;
        h.fill(t, &mut ham);
        if hermitian {
            vecs.as_mut_slice().fill(ZERO);
            for d in 0..n {
                vecs[(d, d)] = ONE;
            }
            jacobi_eigh(n, ham.as_mut_slice(), vecs.as_mut_slice(), &mut vals);
            // psi <- V · diag(e^{-iλdt}) · V† · psi
            for (j, t) in tmp.iter_mut().enumerate() {
                let proj: C64 = (0..n).map(|i| vecs[(i, j)].conj() * psi[i]).sum();
                *t = proj * (-I * vals[j] * dt).exp();
            }
            for (i, p) in psi.iter_mut().enumerate() {
                *p = (0..n).map(|j| vecs[(i, j)] * tmp[j]).sum();
            }
        } else {
            let u = expm_pade(&ham.scale(-I * dt))?;
            u.matvec_into(&psi, &mut tmp);
            psi.copy_from_slice(&tmp);
        }
    }
    let out = ComplexVector(psi);
    if !out.is_finite() {
        return Err(Error::NonFinite("piecewise-constant evolution"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn is_unitary(u: &ComplexMatrix, tol: f64) -> bool {
        u.adjoint()
            .matmul(u)
            .max_abs_diff(&ComplexMatrix::identity(u.dim()))
            < tol
    }

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

    #[test]
    fn hermitian_check_examples() {
        let sx = vec![vec![c(0., 0.), c(1., 0.)], vec![c(1., 0.), c(0., 0.)]];
        assert!(hermitian_check(&sx).unwrap());
        let skew = vec![vec![c(0., 0.), c(0., 1.)], vec![c(0., 1.), c(0., 0.)]];
        assert!(!hermitian_check(&skew).unwrap());
        let ragged = vec![vec![c(0., 0.), c(1., 0.)], vec![c(1., 0.)]];
        assert!(matches!(
            hermitian_check(&ragged),
            Err(Error::NotSquare { .. })
        ));
        let rect = vec![vec![c(0., 0.), c(1., 0.), c(2., 0.)]];
        assert!(hermitian_check(&rect).is_err());
    }

    #[test]
    fn exponential_of_zero_is_identity() {
        let u = matrix_exponential(&ComplexMatrix::zeros(3), 0.7).unwrap();
        assert!(u.max_abs_diff(&ComplexMatrix::identity(3)) < 1e-15);
    }

    #[test]
    fn exponential_of_diagonal() {
        let delta = 2.3;
        let dt = 0.41;
        let m = ComplexMatrix::from_diag(&[c(delta, 0.), c(-delta, 0.)]);
        let u = matrix_exponential(&m, dt).unwrap();
        assert!((u[(0, 0)] - (-I * delta * dt).exp()).norm() < 1e-14);
        assert!((u[(1, 1)] - (I * delta * dt).exp()).norm() < 1e-14);
        assert!(u[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn rabi_pi_pulse_swaps_population() {
        let omega = 5.0;
        let m =
            ComplexMatrix::from_real_rows(&[vec![0., omega / 2.], vec![omega / 2., 0.]]).unwrap();
        let u = matrix_exponential(&m, std::f64::consts::PI / omega).unwrap();
        // exp(-i (π/2) σx) = -i σx
        let expected = ComplexMatrix::from_rows(&[vec![ZERO, -I], vec![-I, ZERO]]).unwrap();
        assert!(u.max_abs_diff(&expected) < 1e-13);
    }

    #[test]
    fn pade_and_eigen_paths_agree() {
        let m = ComplexMatrix::from_rows(&[
            vec![c(1.0, 0.), c(0.3, 0.2), c(0., -1.1)],
            vec![c(0.3, -0.2), c(-2.0, 0.), c(0.5, 0.)],
            vec![c(0., 1.1), c(0.5, 0.), c(40.0, 0.)],
        ])
        .unwrap();
        let dt = 0.37;
        let eig = matrix_exponential(&m, dt).unwrap();
        let pade = expm_pade(&m.scale(-I * dt)).unwrap();
        assert!(eig.max_abs_diff(&pade) < 1e-12);
        assert!(is_unitary(&eig, 1e-12));
    }

    #[test]
    fn non_hermitian_decay_is_contractive() {
        let m = ComplexMatrix::from_diag(&[c(0., 0.), c(1.0, -0.5)]);
        let u = matrix_exponential(&m, 2.0).unwrap();
        assert!((u[(1, 1)].norm() - (-1.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_finite_and_negative_dt() {
        let mut m = ComplexMatrix::zeros(2);
        m[(0, 0)] = c(f64::NAN, 0.);
        assert!(matches!(
            matrix_exponential(&m, 1.0),
            Err(Error::NonFinite(_))
        ));
        assert!(matrix_exponential(&ComplexMatrix::zeros(2), -1.0).is_err());
    }

    #[test]
    fn eigen_reconstructs_matrix() {
        let m = ComplexMatrix::from_rows(&[
            vec![c(0., 0.), c(0.7, 0.), c(0., 0.), c(0., 0.)],
            vec![c(0.7, 0.), c(3.0, 0.), c(0.7, 0.), c(0., 0.)],
            vec![c(0., 0.), c(0.7, 0.), c(6.0, 0.), c(3141.6, 0.)],
            vec![c(0., 0.), c(0., 0.), c(3141.6, 0.), c(-18.8, 0.)],
        ])
        .unwrap();
        let eig = HermitianEigen::new(&m);
        let d = ComplexMatrix::from_diag(&eig.values.iter().map(|&x| c(x, 0.)).collect::<Vec<_>>());
        let back = eig.vectors.matmul(&d).matmul(&eig.vectors.adjoint());
        assert!(back.max_abs_diff(&m) < 1e-10);
        assert!(is_unitary(&eig.vectors, 1e-12));
    }

    #[test]
    fn piecewise_constant_matches_single_exponential_for_constant_h() {
        let m = ComplexMatrix::from_rows(&[
            vec![c(0.2, 0.), c(1.0, 0.5)],
            vec![c(1.0, -0.5), c(-0.4, 0.)],
        ])
        .unwrap();
        let h = Constant(m.clone(), 1.3);
        let psi0 = ComplexVector::basis(2, 0);
        let direct = matrix_exponential(&m, 1.3).unwrap().matvec(&psi0);
        for steps in [1, 7, 100] {
            let stepped = evolve_piecewise_constant(&h, &psi0, steps).unwrap();
            assert!(stepped.max_abs_diff(&direct) < 1e-12, "steps = {steps}");
        }
    }

    #[test]
    fn piecewise_constant_two_pi_pulse() {
        let omega = 2.0 * std::f64::consts::PI * 3.0;
        let m =
            ComplexMatrix::from_real_rows(&[vec![0., omega / 2.], vec![omega / 2., 0.]]).unwrap();
        let h = Constant(m, 2.0 * std::f64::consts::PI / omega);
        let out = evolve_piecewise_constant(&h, &ComplexVector::basis(2, 0), 1000).unwrap();
        assert!((out[0] + ONE).norm() < 1e-6);
        assert!(out[1].norm() < 1e-6);
    }

    #[test]
    fn piecewise_constant_rejects_zero_steps() {
        let h = Constant(ComplexMatrix::zeros(2), 1.0);
        assert!(evolve_piecewise_constant(&h, &ComplexVector::basis(2, 0), 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn hermitian(n: usize) -> impl Strategy<Value = ComplexMatrix> {
            proptest::collection::vec(-5.0f64..5.0, n * n * 2).prop_map(move |xs| {
                let mut m = ComplexMatrix::zeros(n);
                for i in 0..n {
                    for j in i..n {
                        let k = 2 * (i * n + j);
                        if i == j {
                            m[(i, i)] = C64::new(xs[k], 0.0);
                        } else {
                            m[(i, j)] = C64::new(xs[k], xs[k + 1]);
                            m[(j, i)] = m[(i, j)].conj();
                        }
                    }
                }
                m
            })
        }

        proptest! {
            #[test]
            fn exponential_is_unitary(m in (2usize..=5).prop_flat_map(hermitian), dt in 0.0f64..3.0) {
                let u = matrix_exponential(&m, dt).unwrap();
                prop_assert!(is_unitary(&u, 1e-12));
            }

            #[test]
            fn exponential_composes(m in (2usize..=5).prop_flat_map(hermitian), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
                let a = matrix_exponential(&m, t1).unwrap();
                let b = matrix_exponential(&m, t2).unwrap();
                let ab = matrix_exponential(&m, t1 + t2).unwrap();
                prop_assert!(a.matmul(&b).max_abs_diff(&ab) < 1e-10);
            }
        }
    }
}
