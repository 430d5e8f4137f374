//! Density-matrix reconstruction from `Q_n(α)` data, Wigner functions and
//! the phase-space analyses built on them.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_PI, PI};

#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{kerr_phase, Frame, SystemParams};
use crate::error::{invalid, Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::fockspace::{coherent_amplitudes, fidelity, DensityMatrix, Displacer, FockSpace, StateVector};
use crate::linalg::{eigh, lstsq, CMatrix, ColumnMatrix, C64, ZERO};
use crate::measurement::{default_work_dim, QDataset, QGrid};

/// Linear map from an `N_rec`-level density matrix to `π·Q_n(α_m)`.
///
/// Stored compactly: for each row `(n, m)` the vector
/// `w_i = ⟨i|D(α_m)|n⟩`, `i < N_rec`, so that
/// `M[n,m,i,j] = conj(w_i) w_j` and `π·Q_n(α_m) = w† ρ w`.
#[derive(Clone, Debug)]
pub struct DesignMatrix {
    grid: QGrid,
    n_list: Vec<usize>,
    n_rec: usize,
    work_dim: usize,
    vectors: Vec<C64>,
}

impl DesignMatrix {
    #[inline]
    pub fn grid(&self) -> &QGrid {
        &self.grid
    }

    #[inline]
    pub fn n_list(&self) -> &[usize] {
        &self.n_list
    }

    #[inline]
    pub fn basis_dim(&self) -> usize {
        self.n_rec
    }

    #[inline]
    pub fn work_dim(&self) -> usize {
        self.work_dim
    }

    /// Number of `(n, m)` rows, in dataset order.
    #[inline]
    pub fn rows(&self) -> usize {
        self.n_list.len() * self.grid.len()
    }

    /// `w` for row `k * grid.len() + m`.
    pub fn row_vector(&self, row: usize) -> &[C64] {
        &self.vectors[row * self.n_rec..(row + 1) * self.n_rec]
    }

    /// `M[n_list[k], m, i, j]`.
    pub fn entry(&self, k: usize, m: usize, i: usize, j: usize) -> C64 {
        let w = self.row_vector(k * self.grid.len() + m);
        w[i].conj() * w[j]
    }

    /// Predicted `π·Q` for every row.
    pub fn apply(&self, rho: &CMatrix) -> Result<Vec<f64>> {
        if rho.rows() != self.n_rec || rho.cols() != self.n_rec {
            return Err(invalid(format!("design matrix expects a {0}x{0} matrix", self.n_rec)));
        }
        Ok((0..self.rows())
            .map(|r| rho.quadratic_form(self.row_vector(r)).re)
            .collect())
    }
}

/// Builds the design matrix with displacements computed in `work_dim`
/// (default [`default_work_dim`]).
pub fn build_design_matrix(
    grid: &QGrid,
    n_list: &[usize],
    n_rec: usize,
    work_dim: Option<usize>,
) -> Result<DesignMatrix> {
    if n_rec < 2 {
        return Err(invalid("reconstruction basis needs at least 2 levels"));
    }
    if n_list.is_empty() {
        return Err(invalid("design matrix needs at least one Fock projection"));
    }
    let work_dim = work_dim.unwrap_or_else(|| default_work_dim(n_rec, grid.max_norm_sqr()));
    if n_rec > work_dim / 2 {
        return Err(invalid(format!(
            "basis of {n_rec} levels needs a work space of at least {}",
            2 * n_rec
        )));
    }
    let n_max = n_list.iter().copied().max().unwrap_or(0);
    if n_max >= work_dim {
        return Err(invalid(format!(
            "projection {n_max} outside the {work_dim}-level work space"
        )));
    }
    let space = FockSpace::new(n_rec, work_dim - n_rec)?;
    for &a in grid.points() {
        space.check_displacement(a)?;
    }
    let displacer = Displacer::new(work_dim);
    let m = grid.len();
    let mut vectors = alloc::vec![ZERO; n_list.len() * m * n_rec];
    for (point, &alpha) in grid.points().iter().enumerate() {
        let block = displacer.block(alpha, n_rec, n_max + 1);
        for (k, &n) in n_list.iter().enumerate() {
            let base = (k * m + point) * n_rec;
            for i in 0..n_rec {
                vectors[base + i] = block[(i, n)];
            }
        }
    }
    Ok(DesignMatrix {
        grid: grid.clone(),
        n_list: n_list.to_vec(),
        n_rec,
        work_dim,
        vectors,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReconstructOptions {
    /// Negative eigenvalue mass above which the fit is re-solved on the
    /// positive support.
    pub clip_tol: f64,
    /// Total solves, counting the unconstrained one.
    pub max_iters: usize,
    /// Relative pivot threshold for the rank decision.
    pub rcond: f64,
    pub work_dim: Option<usize>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            clip_tol: 1e-9,
            max_iters: 2,
            rcond: 1e-10,
            work_dim: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionResult {
    pub rho: DensityMatrix,
    /// `‖M vec(ρ) − πQ‖₂` for the returned `ρ`.
    pub residual_norm: f64,
    /// Negative eigenvalue mass of the unconstrained estimate.
    pub clipped_mass: f64,
    /// Negative eigenvalue mass removed by the final projection.
    pub final_clipped_mass: f64,
    pub iterations: usize,
    /// The last solve needed no clipping beyond `clip_tol`.
    pub converged: bool,
    pub rows_used: usize,
}

fn param_names(s: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(s * s - 1);
    for k in 0..s - 1 {
        names.push(format!("rho[{k},{k}]"));
    }
    for i in 0..s {
        for j in i + 1..s {
            names.push(format!("Re rho[{i},{j}]"));
            names.push(format!("Im rho[{i},{j}]"));
        }
    }
    names
}

/// Unit-trace Hermitian least squares: minimizes `Σ_r (w_r† X w_r − y_r)²`
/// over `s × s` Hermitian `X` with `Tr X = 1`. The last diagonal entry is
/// eliminated through the trace.
fn solve_hermitian(ws: &[Vec<C64>], y: &[f64], s: usize, rcond: f64) -> Result<CMatrix> {
    if s == 1 {
        return Ok(CMatrix::identity(1));
    }
    let params = s * s - 1;
    let rows = ws.len();
    let mut columns = alloc::vec![alloc::vec![0.0; rows]; params];
    let mut rhs = Vec::with_capacity(rows);
    for (r, w) in ws.iter().enumerate() {
        let last = w[s - 1].norm_sqr();
        for k in 0..s - 1 {
            columns[k][r] = w[k].norm_sqr() - last;
        }
        let mut col = s - 1;
        for i in 0..s {
            for j in i + 1..s {
                let c = w[i].conj() * w[j];
                columns[col][r] = 2.0 * c.re;
                columns[col + 1][r] = -2.0 * c.im;
                col += 2;
            }
        }
        rhs.push(y[r] - last);
    }
    let a = ColumnMatrix::from_columns(rows, columns);
    let sol = lstsq(&a, &rhs, rcond);
    if sol.rank < params {
        let names = param_names(s);
        let mut subspace = String::new();
        for (idx, &c) in sol.deficient.iter().enumerate() {
            if idx > 0 {
                subspace.push_str(", ");
            }
            subspace.push_str(&names[c]);
        }
        return Err(Error::RankDeficient {
            rank: sol.rank,
            params,
            subspace,
        });
    }
    let x = sol.x;
    let mut m = CMatrix::zeros(s, s);
    let mut trace = 0.0;
    for k in 0..s - 1 {
        m[(k, k)] = C64::new(x[k], 0.0);
        trace += x[k];
    }
    m[(s - 1, s - 1)] = C64::new(1.0 - trace, 0.0);
    let mut col = s - 1;
    for i in 0..s {
        for j in i + 1..s {
            let z = C64::new(x[col], x[col + 1]);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            col += 2;
        }
    }
    Ok(m)
}

fn check_compatible(dataset: &QDataset, design: &DesignMatrix) -> Result<()> {
    if dataset.grid != design.grid || dataset.n_list != design.n_list {
        return Err(invalid("dataset grid or projections do not match the design matrix"));
    }
    Ok(())
}

fn targets(dataset: &QDataset) -> Result<Vec<f64>> {
    if dataset.values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("dataset contains non-finite values"));
    }
    Ok(dataset.values.iter().map(|v| PI * v).collect())
}

/// Unconstrained Hermitian, unit-trace least-squares estimate. The result
/// is linear in the data and need not be positive.
pub fn least_squares_estimate(dataset: &QDataset, design: &DesignMatrix, rcond: f64) -> Result<CMatrix> {
    check_compatible(dataset, design)?;
    let y = targets(dataset)?;
    let ws: Vec<Vec<C64>> = (0..design.rows()).map(|r| design.row_vector(r).to_vec()).collect();
    solve_hermitian(&ws, &y, design.n_rec, rcond)
}

/// Clips negative eigenvalues and renormalizes. Returns the projected
/// matrix and the negative mass removed.
pub fn project_psd(m: &CMatrix) -> Result<(CMatrix, f64)> {
    let e = eigh(m);
    let clipped: f64 = e.values.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    let kept: f64 = e.values.iter().filter(|&&l| l > 0.0).sum();
    if !(kept > 0.0) {
        return Err(invalid("estimate has no positive eigenvalues"));
    }
    let out = e.reassemble(|l| if l > 0.0 { l / kept } else { 0.0 });
    Ok((out, clipped))
}

pub fn reconstruct(dataset: &QDataset, n_rec: usize, options: &ReconstructOptions) -> Result<ReconstructionResult> {
    let design = build_design_matrix(&dataset.grid, &dataset.n_list, n_rec, options.work_dim)?;
    reconstruct_with(dataset, &design, options)
}

/// Least squares over Hermitian unit-trace matrices, then eigenvalue
/// clipping. While the clipped mass exceeds `clip_tol` and solves remain,
/// the fit is repeated on the span of the positive eigenvectors.
pub fn reconstruct_with(
    dataset: &QDataset,
    design: &DesignMatrix,
    options: &ReconstructOptions,
) -> Result<ReconstructionResult> {
    if options.max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    check_compatible(dataset, design)?;
    let y = targets(dataset)?;
    let s = design.n_rec;
    let ws: Vec<Vec<C64>> = (0..design.rows()).map(|r| design.row_vector(r).to_vec()).collect();

    let mut estimate = solve_hermitian(&ws, &y, s, options.rcond)?;
    let mut iterations = 1;
    let (mut projected, first_clip) = project_psd(&estimate)?;
    let mut last_clip = first_clip;

    while last_clip > options.clip_tol && iterations < options.max_iters {
        let e = eigh(&estimate);
        let support: Vec<usize> = (0..s).filter(|&k| e.values[k] > 0.0).collect();
        let r = support.len();
        // ρ = V X V†, so w† ρ w = (V† w)† X (V† w).
        let reduced: Vec<Vec<C64>> = ws
            .iter()
            .map(|w| {
                support
                    .iter()
                    .map(|&k| (0..s).map(|i| e.vectors[(i, k)].conj() * w[i]).sum())
                    .collect()
            })
            .collect();
        let x = match solve_hermitian(&reduced, &y, r, options.rcond) {
            Ok(x) => x,
            Err(Error::RankDeficient { .. }) => break,
            Err(other) => return Err(other),
        };
        let v = CMatrix::from_fn(s, r, |i, c| e.vectors[(i, support[c])]);
        estimate = (&v * &x).matmul(&v.adjoint());
        estimate.hermitize();
        iterations += 1;
        let (p, clip) = project_psd(&estimate)?;
        projected = p;
        last_clip = clip;
    }

    let rho = DensityMatrix::new(projected)?;
    let predicted = design.apply(rho.matrix())?;
    let residual_norm = predicted
        .iter()
        .zip(&y)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        .sqrt();
    Ok(ReconstructionResult {
        rho,
        residual_norm,
        clipped_mass: first_clip,
        final_clipped_mass: last_clip,
        iterations,
        converged: last_clip <= options.clip_tol,
        rows_used: design.rows(),
    })
}

/// Wigner function values on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    pub grid: QGrid,
    pub values: Vec<f64>,
}

/// Work space for the parity sum. Unlike a single `Q_n`, the alternating
/// sum needs the whole photon distribution of `D(−α)ρD(α)`, whose tail
/// reaches roughly `dim + (|α| + 6)²`.
pub fn wigner_work_dim(dim: usize, max_norm_sqr: f64) -> usize {
    let reach = max_norm_sqr.sqrt() + 6.0;
    default_work_dim(dim, max_norm_sqr).max(dim + (reach * reach).ceil() as usize)
}

/// `W(α) = (2/π) Tr(D(−α) ρ D(α) P)`, with the parity sum taken over the
/// whole work space.
pub fn wigner_from_rho(rho: &DensityMatrix, grid: &QGrid, work_dim: Option<usize>) -> Result<WignerGrid> {
    let d = rho.dim();
    let work = work_dim.unwrap_or_else(|| wigner_work_dim(d, grid.max_norm_sqr()));
    if work < d {
        return Err(invalid("work space smaller than the state"));
    }
    let space = FockSpace::new(d, work - d)?;
    for &a in grid.points() {
        space.check_displacement(a)?;
    }
    let displacer = Displacer::new(work);
    let mut column = alloc::vec![ZERO; d];
    let values = grid
        .points()
        .iter()
        .map(|&alpha| {
            let block = displacer.block(alpha, d, work);
            let mut acc = 0.0;
            for n in 0..work {
                for (i, c) in column.iter_mut().enumerate() {
                    *c = block[(i, n)];
                }
                let q = rho.matrix().quadratic_form(&column).re;
                acc += if n % 2 == 0 { q } else { -q };
            }
            2.0 * FRAC_1_PI * acc
        })
        .collect();
    Ok(WignerGrid {
        grid: grid.clone(),
        values,
    })
}

/// Alternating-sum Wigner estimate with its per-point completeness check.
#[derive(Clone, Debug, PartialEq)]
pub struct AlternatingWigner {
    pub wigner: WignerGrid,
    /// `Σ_n Q_n(α)` per point; `1/π` when no population is missing.
    pub completeness: Vec<f64>,
    /// Points whose completeness deviates from `1/π` by more than the
    /// tolerance, where the truncated sum is biased.
    pub biased: Vec<bool>,
}

impl AlternatingWigner {
    pub fn biased_count(&self) -> usize {
        self.biased.iter().filter(|&&b| b).count()
    }
}

pub const DEFAULT_TAIL_TOL: f64 = 1e-3 * FRAC_1_PI;

/// `W(α) = 2 Σ_n (−1)ⁿ Q_n(α)` over the dataset's projections, which must
/// be `0, 1, …, n_max` in order.
pub fn wigner_from_qn(dataset: &QDataset, tail_tol: f64) -> Result<AlternatingWigner> {
    if dataset.n_list.iter().enumerate().any(|(k, &n)| k != n) {
        return Err(invalid("alternating sum needs projections 0, 1, ..., n_max in order"));
    }
    let m = dataset.grid.len();
    let mut values = alloc::vec![0.0; m];
    let mut completeness = alloc::vec![0.0; m];
    for (k, &n) in dataset.n_list.iter().enumerate() {
        let sign = if n % 2 == 0 { 2.0 } else { -2.0 };
        for (p, &q) in dataset.slice(k).iter().enumerate() {
            values[p] += sign * q;
            completeness[p] += q;
        }
    }
    let biased = completeness.iter().map(|c| (c - FRAC_1_PI).abs() > tail_tol).collect();
    Ok(AlternatingWigner {
        wigner: WignerGrid {
            grid: dataset.grid.clone(),
            values,
        },
        completeness,
        biased,
    })
}

/// Grid coordinates and values along the constant-`Im α` row that holds
/// the maximum of `values`.
pub fn re_cut_through_max(grid: &QGrid, values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if values.len() != grid.len() || values.is_empty() {
        return Err(invalid("values do not match the grid"));
    }
    let best = (0..values.len())
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("non-empty values");
    let row = best / grid.cols();
    let xs = (0..grid.cols()).map(|c| grid.points()[grid.index(row, c)].re).collect();
    let ys = (0..grid.cols()).map(|c| values[grid.index(row, c)]).collect();
    Ok((xs, ys))
}

/// Fits `A e^{−(x−c)²/w} + offset` and returns `w = 2σ²`.
pub fn q_width(xs: &[f64], ys: &[f64]) -> Result<f64> {
    Ok(fit_gaussian_1d(xs, ys)?.width)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianFit1d {
    pub amplitude: f64,
    pub center: f64,
    /// `2σ²`.
    pub width: f64,
    pub offset: f64,
}

pub fn fit_gaussian_1d(xs: &[f64], ys: &[f64]) -> Result<GaussianFit1d> {
    if xs.len() != ys.len() {
        return Err(invalid("x and y lengths differ"));
    }
    if xs.len() < 7 {
        return Err(Error::Analysis(format!(
            "width fit needs at least 7 points, got {}",
            xs.len()
        )));
    }
    let (imax, &ymax) = ys
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let ymin = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let p0 = [ymax - ymin, xs[imax], 1.0, ymin];
    let fit = levenberg_marquardt(
        |p, r| {
            if !(p[2] > 0.0) {
                return false;
            }
            for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
                r[i] = p[0] * (-(x - p[1]) * (x - p[1]) / p[2]).exp() + p[3] - y;
            }
            true
        },
        &p0,
        xs.len(),
        LmOptions::default(),
    );
    let p = &fit.params;
    if !fit.converged || !(p[2] > 0.0) || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::Analysis(format!(
            "Gaussian width fit did not converge (cost {:.3e})",
            fit.cost
        )));
    }
    Ok(GaussianFit1d {
        amplitude: p[0],
        center: p[1],
        width: p[2],
        offset: p[3],
    })
}

/// Phase-space angle of a Kerr-evolved coherent blob at time `t`.
pub fn frame_rotation(params: &SystemParams, beta: C64, t: f64, frame: Frame) -> f64 {
    let detuning = match frame {
        Frame::KerrFrame => 0.0,
        Frame::LabDetuned => params.detuning * t,
    };
    beta.arg() + kerr_phase(t, beta, params.kerr) + detuning
}

/// Width `2σ²` of `Q₀` along the radial cut through its maximum, after
/// rotating the state by `−rotation` so the blob sits on the real axis.
pub fn squeezing_width(rho: &DensityMatrix, grid: &QGrid, rotation: f64) -> Result<f64> {
    let aligned = rho.rotated(-rotation);
    let q0 = crate::measurement::qn_dataset(&aligned, grid, &[0])?;
    let (xs, ys) = re_cut_through_max(grid, q0.slice(0))?;
    q_width(&xs, &ys)
}

/// Smallest quadrature variance of `ρ` over all angles, with
/// `X_θ = (a e^{−iθ} + a† e^{iθ})/2` (vacuum: 1/4). Returns the variance
/// and the angle `θ` that attains it.
pub fn min_quadrature_variance(rho: &DensityMatrix) -> (f64, f64) {
    let m = rho.matrix();
    let d = rho.dim();
    let a = rho.mean_amplitude();
    let a2: C64 = (2..d).map(|n| m[(n, n - 2)] * ((n * (n - 1)) as f64).sqrt()).sum();
    let c = a2 - a * a;
    let spread = rho.mean_photon_number() - a.norm_sqr();
    let var = 0.25 + 0.5 * spread - 0.5 * c.norm();
    // Re[c e^{−2iθ}] = −|c| at 2θ = arg c + π
    let theta = 0.5 * (c.arg() + PI);
    (var, theta)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LobeFit {
    pub center: C64,
    pub amplitude: f64,
    pub width: f64,
    pub offset: f64,
}

impl LobeFit {
    /// Coherent amplitude `|β|` of the lobe.
    pub fn beta(&self) -> f64 {
        self.center.norm()
    }
}

/// 2D Gaussian `A e^{−|α−c|²/w} + offset` fitted to the points within
/// `radius` of the grid maximum.
pub fn lobe_fit(grid: &QGrid, values: &[f64], radius: f64) -> Result<LobeFit> {
    if values.len() != grid.len() {
        return Err(invalid("values do not match the grid"));
    }
    let best = (0..values.len())
        .max_by(|&a, &b| values[a].total_cmp(&values[b]))
        .ok_or_else(|| invalid("empty grid"))?;
    let c0 = grid.points()[best];
    let (pts, ys): (Vec<C64>, Vec<f64>) = grid
        .points()
        .iter()
        .zip(values)
        .filter(|(p, _)| (**p - c0).norm() <= radius)
        .map(|(p, v)| (*p, *v))
        .unzip();
    if pts.len() < 6 {
        return Err(Error::Analysis(format!("lobe fit has only {} points", pts.len())));
    }
    let ymax = values[best];
    let fit = levenberg_marquardt(
        |p, r| {
            if !(p[3] > 0.0) {
                return false;
            }
            let c = C64::new(p[1], p[2]);
            for (i, (&a, &y)) in pts.iter().zip(&ys).enumerate() {
                r[i] = p[0] * (-(a - c).norm_sqr() / p[3]).exp() + p[4] - y;
            }
            true
        },
        &[ymax, c0.re, c0.im, 1.0, 0.0],
        pts.len(),
        LmOptions::default(),
    );
    let p = &fit.params;
    if !fit.converged || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::Analysis(format!(
            "lobe fit did not converge (cost {:.3e})",
            fit.cost
        )));
    }
    Ok(LobeFit {
        center: C64::new(p[1], p[2]),
        amplitude: p[0],
        width: p[3],
        offset: p[4],
    })
}

/// Amplitude `|β|` of the revived lobe of `Q₀`.
pub fn lobe_amplitude(grid: &QGrid, values: &[f64]) -> Result<f64> {
    Ok(lobe_fit(grid, values, 1.5)?.beta())
}

/// The ideal state `|β e^{−κt/2}⟩` evolved under the Kerr phases for time
/// `t`, truncated to `dim` levels. At `t = T_rev/q` this is the `q`-cat.
pub fn ideal_cat(dim: usize, beta0: C64, t: f64, kappa: f64, kerr: f64) -> Result<StateVector> {
    if dim < 2 {
        return Err(invalid("ideal state needs at least 2 levels"));
    }
    let beta = beta0 * (-0.5 * kappa * t).exp();
    // The ideal reference is truncated and renormalized in the
    // reconstruction basis, even when it is small for |β|.
    let coh = coherent_amplitudes(dim, beta);
    let half_k_t = 0.5 * kerr * t;
    let amps = coh
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(n, &z)| z * C64::from_polar(1.0, half_k_t * (n * n) as f64))
        .collect();
    StateVector::new(amps)
}

/// Fidelity with the decayed ideal cat, maximized over the `2q`
/// rotations by multiples of `π/q`.
pub fn cat_fidelity(rho: &DensityMatrix, beta0: C64, q: usize, t: f64, kappa: f64, kerr: f64) -> Result<f64> {
    if q < 1 {
        return Err(invalid("q must be positive"));
    }
    if !(t >= 0.0) || !(kappa >= 0.0) || !(kerr > 0.0) {
        return Err(invalid("cat fidelity needs t >= 0, kappa >= 0 and K > 0"));
    }
    let ideal = ideal_cat(rho.dim(), beta0, t, kappa, kerr)?;
    let mut best = 0.0f64;
    for k in 0..2 * q {
        let f = fidelity(&ideal.rotated(k as f64 * PI / q as f64), rho)?;
        best = best.max(f);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::{coherent_state, fock_state, make_space};
    use crate::measurement::{qn_dataset, QKind};

    fn small_grid() -> QGrid {
        QGrid::square(9, 2.0).unwrap()
    }

    #[test]
    fn design_reproduces_ideal_q() {
        let grid = small_grid();
        let n_list: Vec<usize> = (0..4).collect();
        let design = build_design_matrix(&grid, &n_list, 6, None).unwrap();
        let s = make_space(6, 0).unwrap();
        let rho = DensityMatrix::pure(&fock_state(&s, 0).unwrap());
        let ds = qn_dataset(&rho, &grid, &n_list).unwrap();
        let predicted = design.apply(rho.matrix()).unwrap();
        for (p, q) in predicted.iter().zip(&ds.values) {
            assert!((p / PI - q).abs() < 1e-12);
        }
    }

    #[test]
    fn design_at_origin_is_a_projector() {
        let grid = QGrid::square(3, 1.0).unwrap();
        let design = build_design_matrix(&grid, &[0, 1, 2], 4, None).unwrap();
        let origin = grid.index(1, 1);
        for k in 0..3 {
            for i in 0..4 {
                for j in 0..4 {
                    let expected = if i == k && j == k { 1.0 } else { 0.0 };
                    assert_eq!(design.entry(k, origin, i, j), C64::new(expected, 0.0));
                }
            }
        }
    }

    #[test]
    fn design_rejects_small_work_space() {
        let grid = QGrid::default();
        assert!(matches!(
            build_design_matrix(&grid, &[0], 10, Some(20)),
            Err(Error::TruncationRisk { .. })
        ));
        assert!(build_design_matrix(&grid, &[0], 10, Some(19)).is_err());
    }

    #[test]
    fn reconstructs_vacuum_and_coherent_state() {
        let grid = small_grid();
        let n_list: Vec<usize> = (0..5).collect();
        let s = make_space(5, 0).unwrap().with_truncation_override(true);
        for beta in [ZERO, C64::new(0.6, -0.3)] {
            let psi = coherent_state(&s, beta).unwrap();
            let rho = DensityMatrix::pure(&psi);
            let ds = qn_dataset(&rho, &grid, &n_list).unwrap();
            let out = reconstruct(&ds, 5, &ReconstructOptions::default()).unwrap();
            assert!(fidelity(&psi, &out.rho).unwrap() > 1.0 - 1e-9);
            assert!(out.residual_norm < 1e-9);
        }
    }

    #[test]
    fn rank_deficiency_names_parameters() {
        // one projection at the origin only determines rho[0,0]
        let grid = QGrid::square(1, 0.0).unwrap();
        let ds = QDataset::new(grid, alloc::vec![0], alloc::vec![FRAC_1_PI], QKind::Ideal).unwrap();
        match reconstruct(&ds, 3, &ReconstructOptions::default()) {
            Err(Error::RankDeficient { rank, params, subspace }) => {
                assert_eq!((rank, params), (1, 8));
                assert!(subspace.contains("rho["));
            }
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn wigner_of_fock_states_at_origin() {
        let grid = QGrid::square(1, 0.0).unwrap();
        let s = make_space(6, 0).unwrap();
        let w0 = wigner_from_rho(&DensityMatrix::pure(&fock_state(&s, 0).unwrap()), &grid, None).unwrap();
        let w1 = wigner_from_rho(&DensityMatrix::pure(&fock_state(&s, 1).unwrap()), &grid, None).unwrap();
        assert!((w0.values[0] - 2.0 / PI).abs() < 1e-12);
        assert!((w1.values[0] + 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn wigner_of_coherent_state_is_gaussian() {
        let grid = small_grid();
        let s = make_space(20, 0).unwrap();
        let beta = C64::new(0.8, 0.4);
        let rho = DensityMatrix::pure(&coherent_state(&s, beta).unwrap());
        let w = wigner_from_rho(&rho, &grid, None).unwrap();
        for (a, v) in grid.points().iter().zip(&w.values) {
            let expected = 2.0 / PI * (-2.0 * (a - beta).norm_sqr()).exp();
            assert!((v - expected).abs() < 1e-10, "{a} {v} {expected}");
        }
    }

    #[test]
    fn alternating_sum_needs_contiguous_projections() {
        let grid = small_grid();
        let s = make_space(6, 0).unwrap();
        let rho = DensityMatrix::pure(&fock_state(&s, 0).unwrap());
        let ds = qn_dataset(&rho, &grid, &[0, 2]).unwrap();
        assert!(wigner_from_qn(&ds, DEFAULT_TAIL_TOL).is_err());
        let ds = qn_dataset(&rho, &grid, &[0, 1]).unwrap();
        let w = wigner_from_qn(&ds, DEFAULT_TAIL_TOL).unwrap();
        for (p, a) in grid.points().iter().enumerate() {
            let x = a.norm_sqr();
            let expected = 2.0 * ((-x).exp() - x * (-x).exp()) / PI;
            assert!((w.wigner.values[p] - expected).abs() < 1e-12);
        }
        assert!(w.biased_count() > 0);
    }

    #[test]
    fn vacuum_width_is_one() {
        let grid = QGrid::default();
        let s = make_space(10, 0).unwrap();
        let rho = DensityMatrix::pure(&fock_state(&s, 0).unwrap());
        let ds = qn_dataset(&rho, &grid, &[0]).unwrap();
        let (xs, ys) = re_cut_through_max(&grid, ds.slice(0)).unwrap();
        assert!((q_width(&xs, &ys).unwrap() - 1.0).abs() < 1e-6);
        assert!(q_width(&xs[..5], &ys[..5]).is_err());
    }

    #[test]
    fn lobe_fit_recovers_coherent_amplitude() {
        let grid = QGrid::default();
        let s = make_space(30, 0).unwrap();
        let beta = C64::new(-1.8, 0.2);
        let rho = DensityMatrix::pure(&coherent_state(&s, beta).unwrap());
        let ds = qn_dataset(&rho, &grid, &[0]).unwrap();
        let fit = lobe_fit(&grid, ds.slice(0), 1.5).unwrap();
        assert!((fit.center - beta).norm() < 1e-6);
        assert!((fit.width - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cat_fidelity_of_the_cat_itself() {
        let p = SystemParams::default();
        let t = p.revival_time() / 2.0;
        let psi = ideal_cat(10, C64::new(2.0, 0.0), t, p.kappa, p.kerr).unwrap();
        let rho = DensityMatrix::pure(&psi);
        let f = cat_fidelity(&rho, C64::new(2.0, 0.0), 2, t, p.kappa, p.kerr).unwrap();
        assert!((f - 1.0).abs() < 1e-12);
        let phased = DensityMatrix::pure(
            &StateVector::new(psi.amplitudes().iter().map(|z| z * C64::new(0.0, 1.0)).collect()).unwrap(),
        );
        assert_eq!(
            cat_fidelity(&phased, C64::new(2.0, 0.0), 2, t, p.kappa, p.kerr).unwrap(),
            f
        );
    }
}
