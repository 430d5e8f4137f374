//! The measurement protocol: generalized Q-functions on a displacement grid,
//! selective π pulses, the thermal-population readout artifact, control
//! subtraction, finite-shot sampling and displacement calibration.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_PI, PI};

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};

use crate::dynamics::{kerr_evolve, SystemParams};
use crate::error::{invalid, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::fockspace::{fock_state, DensityMatrix, Displacer, FockSpace, StateVector};
use crate::linalg::{C64, ZERO};

/// Rectangular grid of analysis displacements. Point `row * cols + col`
/// sits at `re_min + col·Δre + i(im_min + row·Δim)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QGrid {
    rows: usize,
    cols: usize,
    re_range: (f64, f64),
    im_range: (f64, f64),
    points: Vec<C64>,
}

impl QGrid {
    pub fn uniform(rows: usize, cols: usize, re_range: (f64, f64), im_range: (f64, f64)) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("grid needs at least one row and one column"));
        }
        let ok = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if !ok(re_range) || !ok(im_range) {
            return Err(invalid("grid ranges must be finite and ordered"));
        }
        let step = |r: (f64, f64), n: usize| if n > 1 { (r.1 - r.0) / (n - 1) as f64 } else { 0.0 };
        let (dre, dim) = (step(re_range, cols), step(im_range, rows));
        let mut points = Vec::with_capacity(rows * cols);
        for row in 0..rows {
            for col in 0..cols {
                points.push(C64::new(re_range.0 + col as f64 * dre, im_range.0 + row as f64 * dim));
            }
        }
        Ok(Self {
            rows,
            cols,
            re_range,
            im_range,
            points,
        })
    }

    /// Square grid of `side × side` points over `[-half, half]²`.
    pub fn square(side: usize, half: f64) -> Result<Self> {
        Self::uniform(side, side, (-half, half), (-half, half))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn re_range(&self) -> (f64, f64) {
        self.re_range
    }

    #[inline]
    pub fn im_range(&self) -> (f64, f64) {
        self.im_range
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[C64] {
        &self.points
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn re_step(&self) -> f64 {
        if self.cols > 1 {
            (self.re_range.1 - self.re_range.0) / (self.cols - 1) as f64
        } else {
            0.0
        }
    }

    pub fn im_step(&self) -> f64 {
        if self.rows > 1 {
            (self.im_range.1 - self.im_range.0) / (self.rows - 1) as f64
        } else {
            0.0
        }
    }

    pub fn cell_area(&self) -> f64 {
        self.re_step() * self.im_step()
    }

    pub fn max_norm_sqr(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).fold(0.0, f64::max)
    }
}

impl Default for QGrid {
    /// 21 × 21 points over `[-3, 3]²`.
    fn default() -> Self {
        Self::square(21, 3.0).expect("default grid is valid")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QKind {
    Ideal,
    Signal,
    Sampled,
}

impl QKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            QKind::Ideal => "ideal",
            QKind::Signal => "signal",
            QKind::Sampled => "sampled",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ideal" => Some(QKind::Ideal),
            "signal" => Some(QKind::Signal),
            "sampled" => Some(QKind::Sampled),
            _ => None,
        }
    }
}

/// `Q_n(α)` values over a grid. `values[k * grid.len() + m]` belongs to
/// `n_list[k]` and grid point `m`.
#[derive(Clone, Debug, PartialEq)]
pub struct QDataset {
    pub grid: QGrid,
    pub n_list: Vec<usize>,
    pub values: Vec<f64>,
    pub kind: QKind,
}

impl QDataset {
    pub fn new(grid: QGrid, n_list: Vec<usize>, values: Vec<f64>, kind: QKind) -> Result<Self> {
        if n_list.is_empty() {
            return Err(invalid("dataset needs at least one Fock projection"));
        }
        if values.len() != n_list.len() * grid.len() {
            return Err(invalid(format!(
                "dataset has {} values, expected {} x {}",
                values.len(),
                n_list.len(),
                grid.len()
            )));
        }
        let mut sorted = n_list.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != n_list.len() {
            return Err(invalid("duplicate Fock projection in n_list"));
        }
        Ok(Self {
            grid,
            n_list,
            values,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn position(&self, n: usize) -> Option<usize> {
        self.n_list.iter().position(|&x| x == n)
    }

    /// Values for the `k`-th entry of `n_list`.
    pub fn slice(&self, k: usize) -> &[f64] {
        let m = self.grid.len();
        &self.values[k * m..(k + 1) * m]
    }

    /// Values for projection `n`, if present.
    pub fn projection(&self, n: usize) -> Option<&[f64]> {
        self.position(n).map(|k| self.slice(k))
    }

    pub fn value(&self, k: usize, point: usize) -> f64 {
        self.values[k * self.grid.len() + point]
    }
}

/// Shots per point; `Infinite` passes values through untouched.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Averages {
    Finite(u64),
    Infinite,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutModel {
    pub p_e: f64,
    pub averages: Averages,
    /// Gaussian noise added per averaged point, in probability units.
    pub readout_noise_sd: f64,
    pub seed: u64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self {
            p_e: 0.10,
            averages: Averages::Finite(1000),
            readout_noise_sd: 0.02,
            seed: 0,
        }
    }
}

impl ReadoutModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_e) {
            return Err(invalid(format!("p_e must lie in [0, 1), got {}", self.p_e)));
        }
        if self.averages == Averages::Finite(0) {
            return Err(invalid("averages must be at least 1"));
        }
        if !(self.readout_noise_sd >= 0.0) || !self.readout_noise_sd.is_finite() {
            return Err(invalid("readout_noise_sd must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// `max(2·max(dim, 16), ⌈3·max|α|²⌉)`: the enlarged space used to build
/// displacements for a grid without tripping the truncation guard.
pub fn default_work_dim(dim: usize, max_norm_sqr: f64) -> usize {
    let guard = (3.0 * max_norm_sqr).ceil() as usize;
    (2 * dim.max(16)).max(guard)
}

/// Evaluates `Q_n(α) = ⟨n|D(−α) ρ D(α)|n⟩ / π` with displacements built
/// once in the space's `work_dim`.
#[derive(Clone, Debug)]
pub struct QnEvaluator {
    space: FockSpace,
    displacer: Displacer,
}

impl QnEvaluator {
    pub fn new(space: FockSpace) -> Self {
        Self {
            displacer: Displacer::for_space(&space),
            space,
        }
    }

    /// Evaluator for `dim`-level states on `grid`, using [`default_work_dim`].
    pub fn for_grid(dim: usize, grid: &QGrid) -> Result<Self> {
        let work = default_work_dim(dim, grid.max_norm_sqr());
        Ok(Self::new(FockSpace::new(dim, work - dim)?))
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    /// `π·Q_n(α)` for every `n` in `n_list` at one displacement.
    pub fn probabilities(&self, rho: &DensityMatrix, n_list: &[usize], alpha: C64) -> Result<Vec<f64>> {
        let d = rho.dim();
        let w = self.space.work_dim();
        if d > w {
            return Err(invalid(format!("{d}-level state does not fit a {w}-level work space")));
        }
        let n_max = n_list.iter().copied().max().unwrap_or(0);
        if n_max >= w {
            return Err(invalid(format!("projection {n_max} outside the {w}-level work space")));
        }
        self.space.check_displacement(alpha)?;
        let block = self.displacer.block(alpha, d, n_max + 1);
        let mut column = alloc::vec![ZERO; d];
        Ok(n_list
            .iter()
            .map(|&n| {
                for (i, c) in column.iter_mut().enumerate() {
                    *c = block[(i, n)];
                }
                let q = rho.matrix().quadratic_form(&column);
                debug_assert!(q.im.abs() < 1e-10);
                q.re
            })
            .collect())
    }

    pub fn qn(&self, rho: &DensityMatrix, n: usize, alpha: C64) -> Result<f64> {
        Ok(self.probabilities(rho, &[n], alpha)?[0] * FRAC_1_PI)
    }

    /// `Q_n(α)` for one point, in `n_list` order.
    pub fn qn_point(&self, rho: &DensityMatrix, n_list: &[usize], alpha: C64) -> Result<Vec<f64>> {
        let mut p = self.probabilities(rho, n_list, alpha)?;
        for x in p.iter_mut() {
            *x *= FRAC_1_PI;
        }
        Ok(p)
    }

    pub fn dataset(&self, rho: &DensityMatrix, grid: &QGrid, n_list: &[usize]) -> Result<QDataset> {
        let per_point = grid
            .points()
            .iter()
            .map(|&a| self.qn_point(rho, n_list, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(assemble(grid, n_list, &per_point, QKind::Ideal))
    }
}

/// Reorders per-point rows into a dataset.
pub fn assemble(grid: &QGrid, n_list: &[usize], per_point: &[Vec<f64>], kind: QKind) -> QDataset {
    let m = grid.len();
    let mut values = alloc::vec![0.0; n_list.len() * m];
    for (point, row) in per_point.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            values[k * m + point] = v;
        }
    }
    QDataset {
        grid: grid.clone(),
        n_list: n_list.to_vec(),
        values,
        kind,
    }
}

/// Single-value convenience using the default work-space rule.
pub fn ideal_qn(rho: &DensityMatrix, n: usize, alpha: C64) -> Result<f64> {
    let work = default_work_dim(rho.dim(), alpha.norm_sqr()).max(n + 1);
    let space = FockSpace::new(rho.dim(), work - rho.dim())?;
    QnEvaluator::new(space).qn(rho, n, alpha)
}

pub fn qn_dataset(rho: &DensityMatrix, grid: &QGrid, n_list: &[usize]) -> Result<QDataset> {
    QnEvaluator::for_grid(rho.dim(), grid)?.dataset(rho, grid, n_list)
}

/// `1 − e^{−χ²/(2σ²)}`.
pub fn selectivity(chi: f64, sigma_pulse: f64) -> f64 {
    if sigma_pulse == 0.0 {
        return if chi == 0.0 { 0.0 } else { 1.0 };
    }
    1.0 - (-(chi * chi) / (2.0 * sigma_pulse * sigma_pulse)).exp()
}

/// Probability that the `m`-selective π pulse excites the qubit, and the
/// cavity state left behind when it does.
pub fn selective_pi_projection(psi: &StateVector, m: usize, selectivity: f64) -> Result<(f64, StateVector)> {
    if m >= psi.dim() {
        return Err(invalid(format!("projection {m} outside a {}-level state", psi.dim())));
    }
    if !(0.0..=1.0).contains(&selectivity) {
        return Err(invalid("selectivity must lie in [0, 1]"));
    }
    let space = FockSpace::new(psi.dim(), 0)?;
    Ok((selectivity * psi.amplitude(m).norm_sqr(), fock_state(&space, m)?))
}

/// Cavity states conditioned on the qubit manifold. The excited manifold
/// picks up the extra rotation `e^{iχt a†a}`.
#[derive(Clone, Debug)]
pub struct ThermalChannels {
    pub ground: DensityMatrix,
    pub excited: DensityMatrix,
    pub p_e: f64,
}

impl ThermalChannels {
    pub fn new(ground: DensityMatrix, params: &SystemParams, t: f64) -> Self {
        let excited = ground.rotated(params.chi * t);
        Self {
            ground,
            excited,
            p_e: params.p_e,
        }
    }

    /// `(1−p_e)Q_n^g − p_e Q_n^e` at one point.
    pub fn signal_point(&self, eval: &QnEvaluator, n_list: &[usize], alpha: C64) -> Result<Vec<f64>> {
        let g = eval.qn_point(&self.ground, n_list, alpha)?;
        if self.p_e == 0.0 {
            return Ok(g);
        }
        let e = eval.qn_point(&self.excited, n_list, alpha)?;
        Ok(g.iter()
            .zip(&e)
            .map(|(g, e)| (1.0 - self.p_e) * g - self.p_e * e)
            .collect())
    }

    pub fn dataset(&self, eval: &QnEvaluator, grid: &QGrid, n_list: &[usize]) -> Result<QDataset> {
        let per_point = grid
            .points()
            .iter()
            .map(|&a| self.signal_point(eval, n_list, a))
            .collect::<Result<Vec<_>>>()?;
        Ok(assemble(grid, n_list, &per_point, QKind::Signal))
    }
}

/// Control-subtracted signal of a Kerr-evolved pure state.
pub fn signal_qn_with_thermal(psi0: &StateVector, params: &SystemParams, t: f64, n: usize, alpha: C64) -> Result<f64> {
    params.validate()?;
    let ground = DensityMatrix::pure(&kerr_evolve(psi0, params, t));
    let channels = ThermalChannels::new(ground, params, t);
    let work = default_work_dim(psi0.dim(), alpha.norm_sqr()).max(n + 1);
    let eval = QnEvaluator::new(FockSpace::new(psi0.dim(), work - psi0.dim())?);
    Ok(channels.signal_point(&eval, &[n], alpha)?[0])
}

/// Linear readout: the qubit contribution is the difference of the two runs.
#[inline]
pub fn subtract_control(with_pulse: f64, without_pulse: f64) -> f64 {
    with_pulse - without_pulse
}

/// Stream index of the generator for one `(point, n)` pair.
#[inline]
pub fn stream_id(point: usize, n: usize) -> u64 {
    (point as u64) * 65_536 + n as u64
}

fn draw_fraction(rng: &mut ChaCha8Rng, shots: u64, p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let k = Binomial::new(shots, p).expect("p clamped to [0, 1]").sample(rng);
    k as f64 / shots as f64
}

/// One sampled value. Ideal inputs are read out on a single channel;
/// signal inputs draw the with-pulse run `πS + p_e` and the control run
/// `p_e` separately and subtract them.
pub fn sample_value(value: f64, kind: QKind, point: usize, n: usize, model: &ReadoutModel) -> f64 {
    let shots = match model.averages {
        Averages::Infinite => return value,
        Averages::Finite(s) => s,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    rng.set_stream(stream_id(point, n));
    let p = PI * value;
    let mut prob = match kind {
        QKind::Signal => {
            let with_pulse = draw_fraction(&mut rng, shots, p + model.p_e);
            let control = draw_fraction(&mut rng, shots, model.p_e);
            subtract_control(with_pulse, control)
        }
        _ => draw_fraction(&mut rng, shots, p),
    };
    if model.readout_noise_sd > 0.0 {
        let noise = Normal::new(0.0, model.readout_noise_sd).expect("validated sd");
        prob += noise.sample(&mut rng);
    }
    prob * FRAC_1_PI
}

/// Finite-shot readout of an ideal or signal dataset. Deterministic in the
/// seed, and independent of evaluation order.
pub fn sample_dataset(input: &QDataset, model: &ReadoutModel) -> Result<QDataset> {
    model.validate()?;
    if input.kind == QKind::Sampled {
        return Err(invalid("dataset is already sampled"));
    }
    if model.averages == Averages::Infinite {
        return Ok(input.clone());
    }
    let m = input.grid.len();
    let values = input
        .values
        .iter()
        .enumerate()
        .map(|(idx, &v)| {
            let (k, point) = (idx / m, idx % m);
            sample_value(v, input.kind, point, input.n_list[k], model)
        })
        .collect();
    Ok(QDataset {
        grid: input.grid.clone(),
        n_list: input.n_list.clone(),
        values,
        kind: QKind::Sampled,
    })
}

/// `x^{2n} e^{−x²} / n!`.
pub fn poisson_pn(x: f64, n: usize) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let mut log_fact = 0.0;
    for k in 2..=n {
        log_fact += (k as f64).ln();
    }
    (2.0 * n as f64 * x.abs().ln() - x * x - log_fact).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    /// Drive amplitude per unit `|α|`.
    pub delta_epsilon: f64,
    /// Overall population scale.
    pub scale: f64,
    pub residual: f64,
}

/// Fits `scale · P_n(ε/Δε)` to every `(n, ε)` pair at once. Row `n` of
/// `measured_pn` holds the populations of Fock state `n` at each probe.
pub fn calibrate_displacement(probe: &[f64], measured_pn: &[Vec<f64>]) -> Result<Calibration> {
    if probe.len() < 2 {
        return Err(invalid("calibration needs at least two probe amplitudes"));
    }
    if measured_pn.is_empty() || measured_pn.iter().any(|r| r.len() != probe.len()) {
        return Err(invalid(
            "measured populations must have one row per n and one column per probe",
        ));
    }
    let eps_max = probe.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if !(eps_max > 0.0) {
        return Err(invalid("probe amplitudes must not all be zero"));
    }
    let guess = if measured_pn.len() > 1 {
        let p1 = &measured_pn[1];
        let best = (0..probe.len())
            .max_by(|&a, &b| p1[a].total_cmp(&p1[b]))
            .expect("non-empty probe list");
        if probe[best].abs() > 0.0 {
            probe[best].abs()
        } else {
            eps_max
        }
    } else {
        eps_max
    };
    let count = measured_pn.len() * probe.len();
    let fit = levenberg_marquardt(
        |p, r| {
            if !(p[1] > 0.0) {
                return false;
            }
            let mut idx = 0;
            for (n, row) in measured_pn.iter().enumerate() {
                for (&eps, &y) in probe.iter().zip(row) {
                    r[idx] = p[0] * poisson_pn(eps / p[1], n) - y;
                    idx += 1;
                }
            }
            true
        },
        &[1.0, guess],
        count,
        LmOptions::default(),
    );
    let residual = fit.cost.sqrt();
    if !fit.converged || !residual.is_finite() {
        return Err(Error::Calibration { residual });
    }
    Ok(Calibration {
        delta_epsilon: fit.params[1],
        scale: fit.params[0],
        residual,
    })
}

/// Draws `shots` Bernoulli trials per entry of `probs`.
pub fn sample_populations(probs: &[Vec<f64>], shots: u64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    probs
        .iter()
        .map(|row| row.iter().map(|&p| draw_fraction(&mut rng, shots, p)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{coherent_state, make_space};

    fn vacuum(dim: usize) -> DensityMatrix {
        let s = make_space(dim, 0).unwrap();
        DensityMatrix::pure(&fock_state(&s, 0).unwrap())
    }

    #[test]
    fn default_grid_shape() {
        let g = QGrid::default();
        assert_eq!(g.len(), 441);
        assert_eq!(g.points()[0], C64::new(-3.0, -3.0));
        assert_eq!(g.points()[g.index(10, 10)], C64::new(0.0, 0.0));
        assert!((g.points()[g.index(0, 1)].re - (-2.7)).abs() < 1e-12);
        assert!((g.cell_area() - 0.09).abs() < 1e-12);
    }

    #[test]
    fn vacuum_q_functions() {
        let rho = vacuum(12);
        for alpha in [C64::new(0.5, 0.0), C64::new(-1.0, 1.2)] {
            let a2 = alpha.norm_sqr();
            let q0 = ideal_qn(&rho, 0, alpha).unwrap();
            let q1 = ideal_qn(&rho, 1, alpha).unwrap();
            assert!((q0 - (-a2).exp() / PI).abs() < 1e-12);
            assert!((q1 - a2 * (-a2).exp() / PI).abs() < 1e-12);
        }
    }

    #[test]
    fn coherent_q0_peaks_at_beta() {
        let s = make_space(30, 0).unwrap();
        let rho = DensityMatrix::pure(&coherent_state(&s, C64::new(2.0, 0.0)).unwrap());
        let grid = QGrid::default();
        let ds = qn_dataset(&rho, &grid, &[0]).unwrap();
        let (best, _) = ds
            .slice(0)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        // grid spacing is 0.3, so the closest point to 2 is 2.1
        assert!((grid.points()[best] - C64::new(2.0, 0.0)).norm() < 0.15);
    }

    #[test]
    fn selectivity_values() {
        let p = SystemParams::default();
        let s = selectivity(p.chi, p.sigma_pulse);
        assert!((s - 0.99855).abs() < 1e-5);
        assert_eq!(selectivity(1.0, 0.0), 1.0);
        assert_eq!(selectivity(0.0, 1.0), 0.0);
    }

    #[test]
    fn selective_projection_of_coherent_state() {
        let s = make_space(30, 0).unwrap();
        let psi = coherent_state(&s, C64::new(2.0, 0.0)).unwrap();
        let (p, proj) = selective_pi_projection(&psi, 4, 1.0).unwrap();
        let expected = (-4.0f64).exp() * 256.0 / 24.0;
        assert!((p - expected).abs() < 1e-12);
        assert_eq!(proj, fock_state(&s, 4).unwrap());
        let (p, _) = selective_pi_projection(&fock_state(&s, 3).unwrap(), 4, 1.0).unwrap();
        assert_eq!(p, 0.0);
    }

    #[test]
    fn thermal_vacuum_signal() {
        let s = make_space(10, 0).unwrap();
        let psi = fock_state(&s, 0).unwrap();
        let p = SystemParams::default();
        let alpha = C64::new(0.7, -0.4);
        let v = signal_qn_with_thermal(&psi, &p, 100e-9, 0, alpha).unwrap();
        let expected = (1.0 - 2.0 * p.p_e) * (-alpha.norm_sqr()).exp() / PI;
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn control_subtraction_cancels_common_offset() {
        assert_eq!(subtract_control(0.7, 0.2), 0.7 - 0.2);
        assert_eq!(subtract_control(0.3, 0.3), 0.0);
        let qubit = 0.125;
        let cavity = 0.375;
        assert_eq!(subtract_control(qubit + cavity, cavity), qubit);
    }

    #[test]
    fn infinite_averages_pass_through() {
        let ds = qn_dataset(&vacuum(8), &QGrid::square(5, 1.0).unwrap(), &[0, 1]).unwrap();
        let model = ReadoutModel {
            averages: Averages::Infinite,
            ..ReadoutModel::default()
        };
        assert_eq!(sample_dataset(&ds, &model).unwrap(), ds);
    }

    #[test]
    fn sampling_is_deterministic() {
        let ds = qn_dataset(&vacuum(8), &QGrid::square(5, 1.0).unwrap(), &[0, 1]).unwrap();
        let model = ReadoutModel::default();
        let a = sample_dataset(&ds, &model).unwrap();
        let b = sample_dataset(&ds, &model).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.kind, QKind::Sampled);
        let c = sample_dataset(&ds, &ReadoutModel { seed: 1, ..model }).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn calibration_round_trip() {
        let probe: Vec<f64> = (1..=12).map(|i| 0.1 * i as f64).collect();
        let truth = 0.5;
        let data: Vec<Vec<f64>> = (0..8)
            .map(|n| probe.iter().map(|&e| poisson_pn(e / truth, n)).collect())
            .collect();
        let cal = calibrate_displacement(&probe, &data).unwrap();
        assert!((cal.delta_epsilon - truth).abs() < 1e-6);
        assert!((cal.scale - 1.0).abs() < 1e-6);
        let doubled: Vec<f64> = probe.iter().map(|e| 2.0 * e).collect();
        let cal2 = calibrate_displacement(&doubled, &data).unwrap();
        assert!((cal2.delta_epsilon - 2.0 * truth).abs() < 1e-6);
        assert!(calibrate_displacement(&probe[..1], &[alloc::vec![0.5]]).is_err());
    }
}
