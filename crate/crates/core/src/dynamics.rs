//! Kerr-cavity time evolution: the exact diagonal Kerr unitary, the
//! single-photon-loss master equation, cat states and closed-form times.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::fockspace::{coherent_amplitudes, trace_norm_half, DensityMatrix, FockSpace, StateVector, EIGEN_TOL};
use crate::linalg::{eigh, CMatrix, C64, ZERO};

const TWO_PI: f64 = 2.0 * PI;

/// Device constants that are recorded but do not enter the dynamics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceExtras {
    pub omega_q: f64,
    pub omega_c: f64,
    pub omega_m: f64,
    pub chi_qm: f64,
    pub chi_cm: f64,
    pub k_m: f64,
}

impl Default for DeviceExtras {
    fn default() -> Self {
        Self {
            omega_q: TWO_PI * 7850.3e6,
            omega_c: TWO_PI * 9274.7e6,
            omega_m: TWO_PI * 8256.4e6,
            chi_qm: TWO_PI * 29.5e6,
            chi_cm: TWO_PI * 2.45e6,
            k_m: TWO_PI * 3.8e6,
        }
    }
}

/// Physical constants, all angular frequencies in rad/s.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemParams {
    /// Kerr shift per photon.
    pub kerr: f64,
    /// Single-photon decay rate.
    pub kappa: f64,
    /// Qubit–cavity dispersive shift.
    pub chi: f64,
    /// Qubit anharmonicity.
    pub k_q: f64,
    /// Spectral width of the selective pulse.
    pub sigma_pulse: f64,
    /// Drive–cavity detuning.
    pub detuning: f64,
    /// Spurious qubit excited-state population.
    pub p_e: f64,
    pub extras: DeviceExtras,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            kerr: TWO_PI * 325e3,
            kappa: TWO_PI * 10e3,
            chi: TWO_PI * 9.4e6,
            k_q: TWO_PI * 73.4e6,
            sigma_pulse: TWO_PI * 2.6e6,
            detuning: TWO_PI * 5e3,
            p_e: 0.10,
            extras: DeviceExtras::default(),
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.kerr,
            self.kappa,
            self.chi,
            self.k_q,
            self.sigma_pulse,
            self.detuning,
            self.p_e,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(invalid("system parameters must be finite"));
        }
        if !(self.kerr > 0.0) {
            return Err(invalid(format!("K must be positive, got {}", self.kerr)));
        }
        if self.kappa < 0.0 {
            return Err(invalid(format!("kappa must be nonnegative, got {}", self.kappa)));
        }
        if !(0.0..1.0).contains(&self.p_e) {
            return Err(invalid(format!("p_e must lie in [0, 1), got {}", self.p_e)));
        }
        if self.sigma_pulse < 0.0 || self.k_q < 0.0 {
            return Err(invalid("sigma_pulse and K_q must be nonnegative"));
        }
        Ok(())
    }

    pub fn revival_time(&self) -> f64 {
        revival_time(self.kerr)
    }
}

/// Rotating frame of the master equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Frame {
    /// Pure Kerr phases; the detuning is dropped.
    KerrFrame,
    /// Kerr phases plus a linear phase from the drive detuning.
    #[default]
    LabDetuned,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    /// Fixed RK4 step in seconds; `None` means `T_rev / 20000`.
    pub dt: Option<f64>,
    /// Allowed trace distance between the `dt` and `dt/2` results.
    pub convergence_tol: f64,
    pub frame: Frame,
    pub check_convergence: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dt: None,
            convergence_tol: 1e-6,
            frame: Frame::default(),
            check_convergence: true,
        }
    }
}

pub const DEFAULT_STEPS_PER_REVIVAL: f64 = 20_000.0;

/// Multiplies `⟨n|ψ⟩` by `e^{i(K/2)n²t}`.
pub fn kerr_evolve(psi0: &StateVector, params: &SystemParams, t: f64) -> StateVector {
    let half_k_t = 0.5 * params.kerr * t;
    let amps = psi0
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(n, &z)| {
            let n = n as f64;
            z * C64::from_polar(1.0, half_k_t * n * n)
        })
        .collect();
    StateVector::new(amps).expect("phase rotation preserves the norm")
}

/// `(1/2q) Σ_{p,k<2q} e^{ik(k−p)π/q} |β e^{ipπ/q}⟩`, renormalized.
pub fn cat_state(space: &FockSpace, beta: C64, q: usize) -> Result<StateVector> {
    if q < 2 {
        return Err(invalid(format!("cat state needs q >= 2, got {q}")));
    }
    space.check_amplitude(beta)?;
    let d = space.dim();
    let qf = q as f64;
    let mut amps = alloc::vec![ZERO; d];
    for p in 0..2 * q {
        let mut weight = ZERO;
        for k in 0..2 * q {
            let (k, p) = (k as f64, p as f64);
            weight += C64::from_polar(1.0, k * (k - p) * PI / qf);
        }
        if weight.norm() < 1e-12 {
            continue;
        }
        let component = coherent_amplitudes(d, beta * C64::from_polar(1.0, p as f64 * PI / qf));
        for (a, c) in amps.iter_mut().zip(component.amplitudes()) {
            *a += weight * c;
        }
    }
    StateVector::new(amps)
}

pub fn collapse_time(nbar: f64, kerr: f64) -> f64 {
    PI / (2.0 * nbar.sqrt() * kerr)
}

pub fn revival_time(kerr: f64) -> f64 {
    TWO_PI / kerr
}

pub fn kerr_phase(t: f64, beta: C64, kerr: f64) -> f64 {
    kerr * t * (beta.norm_sqr() + 0.5)
}

/// Per-photon drive frequencies of the `|0⟩ → |n⟩` transitions,
/// `ω_c − (n−1)K/2` for `n = 1..=n_max`.
pub fn multiphoton_frequencies(params: &SystemParams, omega_c: f64, n_max: usize) -> Vec<f64> {
    (1..=n_max)
        .map(|n| omega_c - (n as f64 - 1.0) * 0.5 * params.kerr)
        .collect()
}

pub fn kerr_from_dispersive(chi: f64, k_q: f64) -> f64 {
    chi * chi / (4.0 * k_q)
}

/// Precomputed coefficients of the master equation in the Fock basis:
/// `L(ρ)_ij = c_ij ρ_ij + s_ij ρ_{i+1,j+1}`.
struct Generator {
    d: usize,
    coherent: Vec<C64>,
    jump: Vec<f64>,
}

impl Generator {
    fn new(d: usize, params: &SystemParams, frame: Frame, with_jumps: bool) -> Self {
        let delta = match frame {
            Frame::KerrFrame => 0.0,
            Frame::LabDetuned => params.detuning,
        };
        // h_n = −((K/2)n² + δn) gives ρ_ij ∝ e^{+i((K/2)(i²−j²)+δ(i−j))t}.
        let h: Vec<f64> = (0..d)
            .map(|n| {
                let n = n as f64;
                -(0.5 * params.kerr * n * n + delta * n)
            })
            .collect();
        let kappa = params.kappa;
        let mut coherent = Vec::with_capacity(d * d);
        let mut jump = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                coherent.push(C64::new(-0.5 * kappa * (i + j) as f64, -(h[i] - h[j])));
                let s = if with_jumps && i + 1 < d && j + 1 < d {
                    kappa * (((i + 1) * (j + 1)) as f64).sqrt()
                } else {
                    0.0
                };
                jump.push(s);
            }
        }
        Self { d, coherent, jump }
    }

    fn apply(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.d;
        for i in 0..d {
            for j in 0..d {
                let idx = i * d + j;
                let mut v = self.coherent[idx] * rho[idx];
                let s = self.jump[idx];
                if s != 0.0 {
                    v += rho[idx + d + 1] * s;
                }
                out[idx] = v;
            }
        }
    }

    fn integrate(&self, rho0: &CMatrix, t: f64, steps: usize) -> CMatrix {
        let d = self.d;
        let mut rho = rho0.clone();
        if steps == 0 || t == 0.0 {
            return rho;
        }
        let h = t / steps as f64;
        let len = d * d;
        let mut k1 = alloc::vec![ZERO; len];
        let mut k2 = alloc::vec![ZERO; len];
        let mut k3 = alloc::vec![ZERO; len];
        let mut k4 = alloc::vec![ZERO; len];
        let mut tmp = alloc::vec![ZERO; len];
        for _ in 0..steps {
            let r = rho.as_slice();
            self.apply(r, &mut k1);
            for x in 0..len {
                tmp[x] = r[x] + k1[x] * (0.5 * h);
            }
            self.apply(&tmp, &mut k2);
            for x in 0..len {
                tmp[x] = r[x] + k2[x] * (0.5 * h);
            }
            self.apply(&tmp, &mut k3);
            for x in 0..len {
                tmp[x] = r[x] + k3[x] * h;
            }
            self.apply(&tmp, &mut k4);
            let r = rho.as_mut_slice();
            for x in 0..len {
                r[x] += (k1[x] + (k2[x] + k3[x]) * 2.0 + k4[x]) * (h / 6.0);
            }
            rho.hermitize();
        }
        rho
    }
}

fn step_count(t: f64, params: &SystemParams, opts: &EvolveOptions) -> Result<usize> {
    let dt = opts
        .dt
        .unwrap_or_else(|| params.revival_time() / DEFAULT_STEPS_PER_REVIVAL);
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("dt must be positive, got {dt}")));
    }
    Ok((t / dt).ceil().max(1.0) as usize)
}

fn check_inputs(params: &SystemParams, t: f64, opts: &EvolveOptions) -> Result<()> {
    params.validate()?;
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("evolution time must be nonnegative, got {t}")));
    }
    if !(opts.convergence_tol > 0.0) {
        return Err(invalid("convergence_tol must be positive"));
    }
    Ok(())
}

/// Most negative eigenvalue an integrated state may carry. Excursions
/// between this and the density-matrix tolerance are clipped.
pub const POSITIVITY_TOL: f64 = 1e-7;

fn into_state(m: CMatrix) -> Result<DensityMatrix> {
    let m = m.hermitian_part();
    let e = eigh(&m);
    let min = e.values[0];
    if min < -POSITIVITY_TOL {
        return Err(Error::Positivity {
            min_eigenvalue: min,
            tol: POSITIVITY_TOL,
        });
    }
    if min < -EIGEN_TOL {
        let kept: f64 = e.values.iter().filter(|&&l| l > 0.0).sum();
        return DensityMatrix::new(e.reassemble(|l| if l > 0.0 { l / kept } else { 0.0 }));
    }
    DensityMatrix::new(m)
}

fn run(
    generator: &Generator,
    rho0: &CMatrix,
    t: f64,
    params: &SystemParams,
    opts: &EvolveOptions,
    normalize: bool,
) -> Result<CMatrix> {
    let steps = step_count(t, params, opts)?;
    let finish = |m: CMatrix| {
        if normalize {
            let tr = m.trace().re;
            m.scale(C64::new(1.0 / tr, 0.0))
        } else {
            m
        }
    };
    let coarse = finish(generator.integrate(rho0, t, steps));
    if opts.check_convergence && t > 0.0 {
        let fine = finish(generator.integrate(rho0, t, 2 * steps));
        let residual = trace_norm_half(&(&coarse - &fine));
        if !(residual <= opts.convergence_tol) {
            return Err(Error::Integration {
                residual,
                tol: opts.convergence_tol,
            });
        }
        return Ok(fine);
    }
    Ok(coarse)
}

/// Integrates `dρ/dt = −i[H, ρ] + κ(aρa† − ½{a†a, ρ})` with fixed-step RK4.
///
/// When convergence checking is on, the result is the halved-step solution
/// and the call fails if it differs from the full-step one by more than
/// `opts.convergence_tol` in trace distance.
pub fn lindblad_evolve(
    rho0: &DensityMatrix,
    params: &SystemParams,
    t: f64,
    opts: &EvolveOptions,
) -> Result<DensityMatrix> {
    check_inputs(params, t, opts)?;
    let generator = Generator::new(rho0.dim(), params, opts.frame, true);
    into_state(run(&generator, rho0.matrix(), t, params, opts, false)?)
}

/// Evolves through an ascending list of times, returning one state per time.
/// Each segment carries its own halved-step check.
pub fn lindblad_trajectory(
    rho0: &DensityMatrix,
    params: &SystemParams,
    times: &[f64],
    opts: &EvolveOptions,
) -> Result<Vec<DensityMatrix>> {
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("trajectory times must be ascending"));
    }
    let generator = Generator::new(rho0.dim(), params, opts.frame, true);
    let mut out = Vec::with_capacity(times.len());
    let mut rho = rho0.matrix().clone();
    let mut now = 0.0;
    for &t in times {
        check_inputs(params, t, opts)?;
        let span = t - now;
        if span > 0.0 {
            rho = run(&generator, &rho, span, params, opts, false)?;
        }
        now = t;
        out.push(into_state(rho.clone())?);
    }
    Ok(out)
}

/// Conditional evolution with no photon lost: the same equation without the
/// `κ aρa†` term, renormalized at the end.
pub fn no_jump_evolve(
    rho0: &DensityMatrix,
    params: &SystemParams,
    t: f64,
    opts: &EvolveOptions,
) -> Result<DensityMatrix> {
    check_inputs(params, t, opts)?;
    let generator = Generator::new(rho0.dim(), params, opts.frame, false);
    into_state(run(&generator, rho0.matrix(), t, params, opts, true)?)
}
