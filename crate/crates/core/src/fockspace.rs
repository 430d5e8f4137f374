//! Truncated oscillator Hilbert space: states, operators and the
//! displacement kernel.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::linalg::{eigh, CMatrix, C64, ONE, ZERO};

/// Tolerances a [`DensityMatrix`] must satisfy.
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-9;
pub const EIGEN_TOL: f64 = 1e-9;
pub const NORM_TOL: f64 = 1e-9;

/// Levels `0..dim` plus the enlarged `work_dim` used to build displacements.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FockSpace {
    dim: usize,
    work_dim: usize,
    allow_truncation_risk: bool,
}

pub fn make_space(dim: usize, pad: usize) -> Result<FockSpace> {
    FockSpace::new(dim, pad)
}

impl FockSpace {
    pub fn new(dim: usize, pad: usize) -> Result<Self> {
        if dim < 2 {
            return Err(invalid(format!("dim must be at least 2, got {dim}")));
        }
        let work_dim = dim.checked_add(pad).ok_or_else(|| invalid("dim + pad overflows"))?;
        Ok(Self {
            dim,
            work_dim,
            allow_truncation_risk: false,
        })
    }

    /// Space with the default pad of `dim` extra levels.
    pub fn with_default_pad(dim: usize) -> Result<Self> {
        Self::new(dim, dim)
    }

    /// Disables the `|α|²` guards on displacements and coherent amplitudes.
    pub fn with_truncation_override(mut self, allow: bool) -> Self {
        self.allow_truncation_risk = allow;
        self
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn work_dim(&self) -> usize {
        self.work_dim
    }

    #[inline]
    pub fn pad(&self) -> usize {
        self.work_dim - self.dim
    }

    #[inline]
    pub fn allows_truncation_risk(&self) -> bool {
        self.allow_truncation_risk
    }

    /// Guard for displacements, built in `work_dim`.
    pub fn check_displacement(&self, alpha: C64) -> Result<()> {
        guard(alpha.norm_sqr(), self.work_dim, self.allow_truncation_risk)
    }

    /// Guard for coherent amplitudes, which live in `dim`.
    pub fn check_amplitude(&self, beta: C64) -> Result<()> {
        guard(beta.norm_sqr(), self.dim, self.allow_truncation_risk)
    }

    fn check_level(&self, n: usize) -> Result<()> {
        if n >= self.dim {
            return Err(invalid(format!("level {n} outside a {}-level space", self.dim)));
        }
        Ok(())
    }
}

fn guard(norm_sqr: f64, levels: usize, allow: bool) -> Result<()> {
    let limit = levels as f64 / 3.0;
    if !norm_sqr.is_finite() {
        return Err(invalid("non-finite amplitude"));
    }
    if !allow && norm_sqr > limit {
        return Err(Error::TruncationRisk {
            norm_sqr,
            limit,
            levels,
        });
    }
    Ok(())
}

/// Normalized pure state; entry `n` is `⟨n|ψ⟩`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
}

impl StateVector {
    /// Normalizes `amplitudes`. Fails on a zero or non-finite vector.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() < 2 {
            return Err(invalid("state needs at least 2 levels"));
        }
        let norm = amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(invalid("state vector has zero or non-finite norm"));
        }
        Ok(Self {
            amplitudes: amplitudes.into_iter().map(|z| z / norm).collect(),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    #[inline]
    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, n: usize) -> C64 {
        self.amplitudes.get(n).copied().unwrap_or(ZERO)
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(invalid(format!(
                "overlap of states with dims {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn photon_distribution(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.amplitudes
            .iter()
            .enumerate()
            .map(|(n, z)| n as f64 * z.norm_sqr())
            .sum()
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.dim() != self.dim() {
            return Err(invalid("operator and state dims differ"));
        }
        Ok(op.matrix.quadratic_form(&self.amplitudes))
    }

    /// `e^{iθ a†a}|ψ⟩`.
    pub fn rotated(&self, theta: f64) -> Self {
        Self {
            amplitudes: self
                .amplitudes
                .iter()
                .enumerate()
                .map(|(n, &z)| z * C64::from_polar(1.0, theta * n as f64))
                .collect(),
        }
    }

    /// Keeps the first `dim` levels (zero-padding if larger) and renormalizes.
    pub fn resized(&self, dim: usize) -> Result<Self> {
        let mut amps: Vec<C64> = self.amplitudes.iter().copied().take(dim).collect();
        amps.resize(dim, ZERO);
        Self::new(amps)
    }

    pub(crate) fn from_normalized(amplitudes: Vec<C64>) -> Self {
        debug_assert!({
            let n: f64 = amplitudes.iter().map(|z| z.norm_sqr()).sum();
            (n - 1.0).abs() < 1e-9
        });
        Self { amplitudes }
    }
}

/// Square operator in the Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    matrix: CMatrix,
}

impl Operator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid("operator matrix must be square"));
        }
        Ok(Self { matrix })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn compose(&self, rhs: &Operator) -> Self {
        Self {
            matrix: self.matrix.matmul(&rhs.matrix),
        }
    }

    /// Raw matrix-vector product; the result is not renormalized.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        self.matrix.mul_vec(v)
    }
}

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    /// Validates hermiticity, trace and positivity. The stored matrix is the
    /// exact Hermitian part of the input.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() < 2 {
            return Err(invalid("density matrix must be square with dim >= 2"));
        }
        if matrix.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("density matrix has non-finite entries"));
        }
        let defect = matrix.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(invalid(format!("matrix is not Hermitian (defect {defect:.3e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(invalid(format!("trace {} deviates from 1", tr.re)));
        }
        let matrix = matrix.hermitian_part();
        let min = eigh(&matrix).values[0];
        if min < -EIGEN_TOL {
            return Err(invalid(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(Self { matrix })
    }

    pub fn pure(psi: &StateVector) -> Self {
        let a = psi.amplitudes();
        Self {
            matrix: CMatrix::from_fn(a.len(), a.len(), |i, j| a[i] * a[j].conj()),
        }
    }

    /// `Σ w_k ρ_k` for nonnegative weights summing to one.
    pub fn mixture(parts: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| invalid("empty mixture"))?;
        let d = first.1.dim();
        let mut m = CMatrix::zeros(d, d);
        for (w, rho) in parts {
            if rho.dim() != d || *w < 0.0 {
                return Err(invalid("mixture parts must share dims and have nonnegative weights"));
            }
            m = &m + &rho.matrix.scale(C64::new(*w, 0.0));
        }
        Self::new(m)
    }

    /// Hermitizes and renormalizes `matrix`, then applies the usual checks.
    pub fn from_hermitian_unnormalized(matrix: CMatrix) -> Result<Self> {
        let mut m = matrix.hermitian_part();
        let tr = m.trace().re;
        if !(tr > 0.0) {
            return Err(invalid("matrix has non-positive trace"));
        }
        m = m.scale(C64::new(1.0 / tr, 0.0));
        Self::new(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    #[inline]
    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn purity(&self) -> f64 {
        self.matrix.as_slice().iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn photon_distribution(&self) -> Vec<f64> {
        (0..self.dim()).map(|n| self.matrix[(n, n)].re).collect()
    }

    pub fn mean_photon_number(&self) -> f64 {
        (0..self.dim()).map(|n| n as f64 * self.matrix[(n, n)].re).sum()
    }

    /// `Tr(a ρ)`.
    pub fn mean_amplitude(&self) -> C64 {
        (0..self.dim() - 1)
            .map(|n| self.matrix[(n + 1, n)] * ((n + 1) as f64).sqrt())
            .sum()
    }

    pub fn expectation(&self, op: &Operator) -> Result<C64> {
        if op.dim() != self.dim() {
            return Err(invalid("operator and density matrix dims differ"));
        }
        Ok(op.matrix.matmul(&self.matrix).trace())
    }

    /// `e^{iθ a†a} ρ e^{−iθ a†a}`.
    pub fn rotated(&self, theta: f64) -> Self {
        let d = self.dim();
        let phases: Vec<C64> = (0..d).map(|n| C64::from_polar(1.0, theta * n as f64)).collect();
        Self {
            matrix: CMatrix::from_fn(d, d, |i, j| self.matrix[(i, j)] * phases[i] * phases[j].conj()),
        }
    }

    /// Top-left `dim × dim` block renormalized, or zero-padded if larger.
    pub fn resized(&self, dim: usize) -> Result<Self> {
        let m = if dim <= self.dim() {
            self.matrix.block(dim, dim)
        } else {
            self.matrix.embed(dim)
        };
        Self::from_hermitian_unnormalized(m)
    }

    /// `½ Σ |λ_k(ρ − σ)|`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(invalid("trace distance between different dims"));
        }
        Ok(trace_norm_half(&(&self.matrix - &other.matrix)))
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh(&self.matrix).values
    }
}

pub(crate) fn trace_norm_half(m: &CMatrix) -> f64 {
    0.5 * eigh(m).values.iter().map(|l| l.abs()).sum::<f64>()
}

pub fn fock_state(space: &FockSpace, n: usize) -> Result<StateVector> {
    space.check_level(n)?;
    let mut amps = alloc::vec![ZERO; space.dim()];
    amps[n] = ONE;
    Ok(StateVector::from_normalized(amps))
}

/// Poisson-weighted amplitudes `e^{−|β|²/2} βⁿ/√n!`, renormalized after
/// truncation.
pub fn coherent_state(space: &FockSpace, beta: C64) -> Result<StateVector> {
    space.check_amplitude(beta)?;
    Ok(coherent_amplitudes(space.dim(), beta))
}

pub(crate) fn coherent_amplitudes(dim: usize, beta: C64) -> StateVector {
    let mut amps = Vec::with_capacity(dim);
    let mut c = C64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
    amps.push(c);
    for n in 1..dim {
        c = c * beta / (n as f64).sqrt();
        amps.push(c);
    }
    StateVector::new(amps).expect("coherent amplitudes always have a nonzero vacuum term")
}

/// `(a, a†, a†a)`.
pub fn ladder_operators(space: &FockSpace) -> (Operator, Operator, Operator) {
    let d = space.dim();
    let a = CMatrix::from_fn(d, d, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    });
    let ad = a.adjoint();
    let num = CMatrix::from_fn(d, d, |i, j| if i == j { C64::new(i as f64, 0.0) } else { ZERO });
    (
        Operator { matrix: a },
        Operator { matrix: ad },
        Operator { matrix: num },
    )
}

pub fn parity(space: &FockSpace) -> Operator {
    let d = space.dim();
    Operator {
        matrix: CMatrix::from_fn(d, d, |i, j| match (i == j, i % 2) {
            (true, 0) => ONE,
            (true, _) => -ONE,
            _ => ZERO,
        }),
    }
}

/// `exp(α a† − α* a)` built in `work_dim` and truncated to `dim × dim`.
pub fn displacement(space: &FockSpace, alpha: C64) -> Result<Operator> {
    space.check_displacement(alpha)?;
    let matrix = Displacer::new(space.work_dim()).operator(alpha, space.dim());
    Ok(Operator { matrix })
}

/// `⟨ψ|ρ|ψ⟩`.
pub fn fidelity(psi_ideal: &StateVector, rho: &DensityMatrix) -> Result<f64> {
    if psi_ideal.dim() != rho.dim() {
        return Err(invalid(format!(
            "fidelity between a {}-level state and a {}-level density matrix",
            psi_ideal.dim(),
            rho.dim()
        )));
    }
    Ok(rho.matrix.quadratic_form(psi_ideal.amplitudes()).re)
}

/// Displacement operators from one diagonalization of the position-like
/// quadrature `X = a + a†` in a `work_dim`-level space.
///
/// With `X = V Λ Vᵀ` and `α = r e^{iθ}`,
/// `⟨j|D(α)|n⟩ = e^{iψ(j−n)} Σ_k V_jk e^{−i r λ_k} V_nk`, `ψ = θ + π/2`.
#[derive(Clone, Debug)]
pub struct Displacer {
    work_dim: usize,
    values: Vec<f64>,
    // row-major real eigenvectors
    vectors: Vec<f64>,
}

impl Displacer {
    pub fn new(work_dim: usize) -> Self {
        assert!(work_dim >= 1, "displacer needs at least one level");
        let x = CMatrix::from_fn(work_dim, work_dim, |i, j| {
            if j == i + 1 {
                C64::new((j as f64).sqrt(), 0.0)
            } else if i == j + 1 {
                C64::new((i as f64).sqrt(), 0.0)
            } else {
                ZERO
            }
        });
        let e = eigh(&x);
        let vectors = e.vectors.as_slice().iter().map(|z| z.re).collect();
        Self {
            work_dim,
            values: e.values,
            vectors,
        }
    }

    pub fn for_space(space: &FockSpace) -> Self {
        Self::new(space.work_dim())
    }

    #[inline]
    pub fn work_dim(&self) -> usize {
        self.work_dim
    }

    /// `⟨j|D(α)|n⟩` for `j < rows`, `n < cols`, row-major.
    pub fn block(&self, alpha: C64, rows: usize, cols: usize) -> CMatrix {
        assert!(rows <= self.work_dim && cols <= self.work_dim);
        if alpha == ZERO {
            return CMatrix::from_fn(rows, cols, |i, j| if i == j { ONE } else { ZERO });
        }
        let r = alpha.norm();
        let psi = alpha.arg() + FRAC_PI_2;
        let w = self.work_dim;
        let spectral: Vec<C64> = self.values.iter().map(|&l| C64::from_polar(1.0, -r * l)).collect();
        // scaled[n][k] = V_nk e^{-i r λ_k}
        let mut out = CMatrix::zeros(rows, cols);
        let mut scaled = alloc::vec![ZERO; w];
        for n in 0..cols {
            let vn = &self.vectors[n * w..(n + 1) * w];
            for k in 0..w {
                scaled[k] = spectral[k] * vn[k];
            }
            for j in 0..rows {
                let vj = &self.vectors[j * w..(j + 1) * w];
                let mut acc = ZERO;
                for k in 0..w {
                    acc += scaled[k] * vj[k];
                }
                let phase = C64::from_polar(1.0, psi * (j as f64 - n as f64));
                out[(j, n)] = acc * phase;
            }
        }
        out
    }

    /// Truncated `dim × dim` displacement.
    pub fn operator(&self, alpha: C64, dim: usize) -> CMatrix {
        self.block(alpha, dim, dim)
    }

    /// Full `work_dim × work_dim` displacement, unitary to round-off.
    pub fn work_operator(&self, alpha: C64) -> CMatrix {
        self.block(alpha, self.work_dim, self.work_dim)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn make_space_rejects_tiny_dims() {
        assert!(make_space(1, 5).is_err());
        assert!(make_space(0, 0).is_err());
        let s = make_space(2, 0).unwrap();
        assert_eq!((s.dim(), s.work_dim()), (2, 2));
        let s = make_space(10, 10).unwrap();
        assert_eq!((s.dim(), s.work_dim()), (10, 20));
    }

    #[test]
    fn fock_states_and_ladder() {
        let s = make_space(6, 0).unwrap();
        let (a, ad, num) = ladder_operators(&s);
        let one = fock_state(&s, 1).unwrap();
        let lowered = a.apply(one.amplitudes());
        assert_eq!(lowered[0], ONE);
        let vac = fock_state(&s, 0).unwrap();
        assert!(a.apply(vac.amplitudes()).iter().all(|z| *z == ZERO));
        let three = fock_state(&s, 3).unwrap();
        assert_eq!(three.expectation(&num).unwrap().re, 3.0);
        assert!(ad.compose(&a).matrix().max_abs_diff(num.matrix()) < 1e-14);
        assert!(fock_state(&s, 6).is_err());
    }

    #[test]
    fn parity_signs() {
        let s = make_space(4, 0).unwrap();
        let p = parity(&s);
        assert_eq!(p.matrix()[(0, 0)], ONE);
        assert_eq!(p.matrix()[(1, 1)], -ONE);
        assert_eq!(fock_state(&s, 1).unwrap().expectation(&p).unwrap().re, -1.0);
    }

    #[test]
    fn coherent_state_statistics() {
        let s = make_space(30, 30).unwrap();
        let psi = coherent_state(&s, c(2.0, 0.0)).unwrap();
        assert!((psi.mean_photon_number() - 4.0).abs() < 1e-9);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        assert!(coherent_state(&s, c(3.2, 0.0)).is_err());
        assert!(coherent_state(&s.with_truncation_override(true), c(3.2, 0.0)).is_ok());
        assert_eq!(coherent_state(&s, ZERO).unwrap(), fock_state(&s, 0).unwrap());
    }

    #[test]
    fn displacement_of_vacuum_is_coherent() {
        let s = make_space(20, 20).unwrap();
        for alpha in [c(1.0, 0.0), c(-0.3, 1.1), c(0.0, -1.5)] {
            let d = displacement(&s, alpha).unwrap();
            let col: Vec<C64> = (0..20).map(|i| d.matrix()[(i, 0)]).collect();
            let coh = coherent_state(&s, alpha).unwrap();
            for (x, y) in col.iter().zip(coh.amplitudes()) {
                assert!((x - y).norm() < 1e-8, "{alpha}");
            }
        }
    }

    #[test]
    fn zero_displacement_is_identity() {
        let s = make_space(8, 8).unwrap();
        assert_eq!(*displacement(&s, ZERO).unwrap().matrix(), CMatrix::identity(8));
    }

    #[test]
    fn work_operator_is_unitary_and_inverse_is_adjoint() {
        let disp = Displacer::new(40);
        let alpha = c(1.0, 0.0);
        let d = disp.work_operator(alpha);
        let dm = disp.work_operator(-alpha);
        let id = CMatrix::identity(40);
        assert!((&d.adjoint() * &d).max_abs_diff(&id) < 1e-12);
        assert!((&d * &dm).max_abs_diff(&id) < 1e-12);
        assert!(d.adjoint().max_abs_diff(&dm) < 1e-12);
    }

    #[test]
    fn parity_of_coherent_state() {
        let s = make_space(30, 30).unwrap();
        let psi = coherent_state(&s, c(1.0, 0.0)).unwrap();
        let p = psi.expectation(&parity(&s)).unwrap().re;
        assert!((p - (-2.0f64).exp()).abs() < 1e-6);
    }

    #[test]
    fn fidelity_basics() {
        let s = make_space(30, 0).unwrap();
        let z = fock_state(&s, 0).unwrap();
        let one = fock_state(&s, 1).unwrap();
        assert_eq!(fidelity(&z, &DensityMatrix::pure(&one)).unwrap(), 0.0);
        let psi = coherent_state(&s, c(2.0, 0.0)).unwrap();
        let f = fidelity(&psi, &DensityMatrix::pure(&psi)).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
        let minus = coherent_state(&s, c(-2.0, 0.0)).unwrap();
        let f = fidelity(&psi, &DensityMatrix::pure(&minus)).unwrap();
        assert!((f - (-16.0f64).exp()).abs() < 1e-12);
        let small = make_space(4, 0).unwrap();
        assert!(fidelity(&fock_state(&small, 0).unwrap(), &DensityMatrix::pure(&psi)).is_err());
    }

    #[test]
    fn density_matrix_validation() {
        let bad_trace = CMatrix::identity(3);
        assert!(DensityMatrix::new(bad_trace).is_err());
        let mut neg = CMatrix::zeros(2, 2);
        neg[(0, 0)] = c(1.5, 0.0);
        neg[(1, 1)] = c(-0.5, 0.0);
        assert!(DensityMatrix::new(neg).is_err());
        let mut skew = CMatrix::identity(2).scale(c(0.5, 0.0));
        skew[(0, 1)] = c(0.1, 0.0);
        assert!(DensityMatrix::new(skew).is_err());
        let ok = CMatrix::identity(4).scale(c(0.25, 0.0));
        let rho = DensityMatrix::new(ok).unwrap();
        assert!((rho.purity() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn mean_amplitude_of_coherent_state() {
        let s = make_space(30, 0).unwrap();
        let rho = DensityMatrix::pure(&coherent_state(&s, c(1.2, -0.7)).unwrap());
        assert!((rho.mean_amplitude() - c(1.2, -0.7)).norm() < 1e-10);
    }
}
