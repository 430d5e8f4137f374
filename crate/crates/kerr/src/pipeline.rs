//! The four pipeline commands. Each writes its outputs into one directory
//! and finishes with a manifest.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use kerr_core::dynamics::{
    collapse_time, kerr_from_dispersive, kerr_phase, lindblad_evolve, lindblad_trajectory, multiphoton_frequencies,
    revival_time, Frame, SystemParams,
};
use kerr_core::fockspace::{coherent_state, DensityMatrix, FockSpace};
use kerr_core::measurement::{
    assemble, sample_dataset, selectivity, QDataset, QGrid, QKind, QnEvaluator, ThermalChannels,
};
use kerr_core::tomography::{
    build_design_matrix, cat_fidelity, frame_rotation, min_quadrature_variance, reconstruct_with, squeezing_width,
    wigner_from_qn, wigner_from_rho, WignerGrid,
};
use kerr_core::C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ParamsConfig, ReadoutConfig, RunConfig};
use crate::io::{
    dataset_csv, input_record, read_dataset, sha256_hex, wigner_csv, DensityJson, GridShape, Manifest, OutputSet,
};

const NS: f64 = 1e-9;
const TWO_PI: f64 = 2.0 * PI;

pub fn config_hash(cfg: &RunConfig) -> String {
    sha256_hex(cfg.to_json().as_bytes())
}

/// Formats a time in ns for file names: `15`, `2.5`.
fn time_label(t_ns: f64) -> String {
    let s = format!("{t_ns}");
    s.replace('.', "p")
}

fn initial_state(cfg: &RunConfig) -> Result<(FockSpace, DensityMatrix)> {
    let space = FockSpace::new(cfg.space.dim, cfg.space.pad)?;
    let psi = coherent_state(&space, cfg.state.beta()).context("initial coherent state")?;
    Ok((space, DensityMatrix::pure(&psi)))
}

/// Control-subtracted signal over the grid, evaluated in parallel.
pub fn signal_dataset(
    channels: &ThermalChannels,
    eval: &QnEvaluator,
    grid: &QGrid,
    n_list: &[usize],
) -> Result<QDataset> {
    let per_point = grid
        .points()
        .par_iter()
        .map(|&a| channels.signal_point(eval, n_list, a))
        .collect::<kerr_core::Result<Vec<_>>>()?;
    Ok(assemble(grid, n_list, &per_point, QKind::Signal))
}

#[derive(Serialize)]
struct Sidecar<'a> {
    grid: GridShape,
    n_list: &'a [usize],
    kind: &'static str,
    rows: usize,
    time_ns: f64,
    beta: [f64; 2],
    params: &'a ParamsConfig,
    frame: &'a crate::config::FrameConfig,
    readout: Option<&'a ReadoutConfig>,
    seed: u64,
}

fn sidecar<'a>(cfg: &'a RunConfig, ds: &'a QDataset, time_ns: f64, readout: Option<&'a ReadoutConfig>) -> Sidecar<'a> {
    Sidecar {
        grid: GridShape::of(&ds.grid),
        n_list: &ds.n_list,
        kind: ds.kind.as_str(),
        rows: ds.len(),
        time_ns,
        beta: [cfg.state.beta_re, cfg.state.beta_im],
        params: &cfg.params,
        frame: &cfg.evolve.frame,
        readout,
        seed: cfg.seed,
    }
}

/// Signal `Q_n` grids of the evolving state at each configured time.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let params = cfg.system_params();
    let grid = cfg.grid.to_grid()?;
    let (space, rho0) = initial_state(cfg)?;
    let eval = QnEvaluator::new(space);
    let opts = cfg.evolve.to_options();

    let mut order: Vec<usize> = (0..cfg.simulate.times_ns.len()).collect();
    order.sort_by(|&a, &b| cfg.simulate.times_ns[a].total_cmp(&cfg.simulate.times_ns[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| cfg.simulate.times_ns[i] * NS).collect();
    let states = lindblad_trajectory(&rho0, &params, &sorted, &opts).context("evolving the cavity")?;

    let mut outputs = OutputSet::new(out);
    let n = cfg.simulate.n;
    for (slot, &i) in order.iter().enumerate() {
        let t_ns = cfg.simulate.times_ns[i];
        let channels = ThermalChannels::new(states[slot].clone(), &params, t_ns * NS);
        let ds = signal_dataset(&channels, &eval, &grid, &[n])?;
        let stem = format!("q{n}_t{}ns", time_label(t_ns));
        outputs.write(&format!("{stem}.csv"), &dataset_csv(&ds)?)?;
        outputs.write_json(&format!("{stem}.json"), &sidecar(cfg, &ds, t_ns, None))?;
    }
    outputs.finish("simulate", config_hash(cfg), Vec::new())
}

pub fn measure_time(cfg: &RunConfig) -> f64 {
    cfg.measure
        .time_ns
        .map(|t| t * NS)
        .unwrap_or_else(|| revival_time(cfg.system_params().kerr) / 2.0)
}

/// The sampled tomography record at one evolution time.
pub fn cmd_measure(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let params = cfg.system_params();
    let grid = cfg.grid.to_grid()?;
    let (space, rho0) = initial_state(cfg)?;
    let eval = QnEvaluator::new(space);
    let t = measure_time(cfg);
    let rho_t = lindblad_evolve(&rho0, &params, t, &cfg.evolve.to_options()).context("evolving the cavity")?;
    let channels = ThermalChannels::new(rho_t.clone(), &params, t);
    let signal = signal_dataset(&channels, &eval, &grid, &cfg.measure.n_list)?;
    let sampled = sample_dataset(&signal, &cfg.readout_model())?;

    let mut outputs = OutputSet::new(out);
    outputs.write("dataset.csv", &dataset_csv(&sampled)?)?;
    outputs.write_json("dataset.json", &sidecar(cfg, &sampled, t / NS, Some(&cfg.readout)))?;
    outputs.write_json("truth.json", &DensityJson::from_matrix(rho_t.matrix()))?;
    outputs.finish("measure", config_hash(cfg), Vec::new())
}

#[derive(Serialize)]
pub struct FidelityReport {
    pub q: usize,
    pub t_ns: f64,
    pub beta0: [f64; 2],
    pub beta_decayed: f64,
    pub frame_correction_rad: f64,
    pub fidelity: f64,
}

#[derive(Serialize)]
struct Diagnostics {
    residual_norm: f64,
    clipped_mass: f64,
    final_clipped_mass: f64,
    iterations: usize,
    converged: bool,
    rows_used: usize,
    default_rows: usize,
    n_list: Vec<usize>,
    n_rec: usize,
    work_dim: usize,
    trace: f64,
    min_eigenvalue: f64,
    purity: f64,
    wigner_rho_max_abs: f64,
    wigner_qn_biased_points: Option<usize>,
    fidelity: FidelityReport,
    notes: Vec<String>,
}

/// Fidelity with the decayed `q`-cat, undoing the detuning rotation when
/// the dataset was simulated in the detuned frame.
pub fn fidelity_report(rho: &DensityMatrix, cfg: &RunConfig) -> Result<FidelityReport> {
    let params = cfg.system_params();
    let q = cfg.reconstruct.q;
    let t = cfg
        .reconstruct
        .time_ns
        .map(|t| t * NS)
        .unwrap_or_else(|| params.revival_time() / q as f64);
    let correction = match cfg.evolve.frame() {
        Frame::KerrFrame => 0.0,
        Frame::LabDetuned => params.detuning * t,
    };
    let beta = cfg.state.beta();
    let f = cat_fidelity(&rho.rotated(-correction), beta, q, t, params.kappa, params.kerr)?;
    Ok(FidelityReport {
        q,
        t_ns: t / NS,
        beta0: [beta.re, beta.im],
        beta_decayed: beta.norm() * (-0.5 * params.kappa * t).exp(),
        frame_correction_rad: correction,
        fidelity: f,
    })
}

fn wigner_parallel(rho: &DensityMatrix, grid: &QGrid) -> Result<WignerGrid> {
    // one point per task; each call builds its own displacement kernel
    let rows: Vec<f64> = (0..grid.rows())
        .into_par_iter()
        .map(|r| {
            let sub = QGrid::uniform(
                1,
                grid.cols(),
                grid.re_range(),
                (grid.points()[grid.index(r, 0)].im, grid.points()[grid.index(r, 0)].im),
            )?;
            let work = kerr_core::tomography::wigner_work_dim(rho.dim(), grid.max_norm_sqr());
            Ok(wigner_from_rho(rho, &sub, Some(work))?.values)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok(WignerGrid {
        grid: grid.clone(),
        values: rows,
    })
}

/// Least-squares reconstruction of a dataset file.
pub fn cmd_reconstruct(input: &Path, cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let ds = read_dataset(input)?;
    let n_rec = cfg.reconstruct.n_rec;
    let design = build_design_matrix(&ds.grid, &ds.n_list, n_rec, cfg.reconstruct.work_dim)?;
    let result = reconstruct_with(&ds, &design, &cfg.reconstruct.to_options())
        .map_err(|e| anyhow!("reconstruction failed: {e}"))?;
    let rho = &result.rho;

    let w_rho = wigner_parallel(rho, &ds.grid)?;
    let bound = 2.0 / PI + 1e-9;
    let w_max = w_rho.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if w_max > bound {
        bail!("reconstructed Wigner function exceeds 2/pi ({w_max})");
    }
    let mut notes = Vec::new();
    let default_rows = 8 * ds.grid.len();
    if ds.len() != default_rows {
        notes.push(format!(
            "dataset has {} projections ({} rows); the full record has 8 ({default_rows} rows)",
            ds.n_list.len(),
            ds.len()
        ));
    }
    let w_qn = match wigner_from_qn(&ds, cfg.reconstruct.tail_tol / PI) {
        Ok(w) => Some(w),
        Err(e) => {
            notes.push(format!("alternating-sum Wigner skipped: {e}"));
            None
        }
    };
    if !result.converged {
        notes.push("positivity projection still clipped mass after the last solve".to_string());
    }
    let fidelity = fidelity_report(rho, cfg)?;

    let mut outputs = OutputSet::new(out);
    outputs.write_json("rho.json", &DensityJson::from_matrix(rho.matrix()))?;
    outputs.write("wigner_rho.csv", &wigner_csv(&w_rho)?)?;
    if let Some(w) = &w_qn {
        outputs.write("wigner_qn.csv", &wigner_csv(&w.wigner)?)?;
    }
    let eig = rho.eigenvalues();
    let diagnostics = Diagnostics {
        residual_norm: result.residual_norm,
        clipped_mass: result.clipped_mass,
        final_clipped_mass: result.final_clipped_mass,
        iterations: result.iterations,
        converged: result.converged,
        rows_used: result.rows_used,
        default_rows,
        n_list: ds.n_list.clone(),
        n_rec,
        work_dim: design.work_dim(),
        trace: rho.trace(),
        min_eigenvalue: eig[0],
        purity: rho.purity(),
        wigner_rho_max_abs: w_max,
        wigner_qn_biased_points: w_qn.as_ref().map(|w| w.biased_count()),
        fidelity,
        notes,
    };
    outputs.write_json("diagnostics.json", &diagnostics)?;
    outputs.write_json("fidelity.json", &diagnostics.fidelity)?;
    outputs.finish("reconstruct", config_hash(cfg), vec![input_record(input)?])
}

#[derive(Serialize)]
struct TimedValue {
    t_ns: f64,
    value: f64,
}

/// `q0_width` is the fitted `2σ²` of the co-rotated `Q₀` cut;
/// `quadrature_width` is the same quantity for the narrowest quadrature,
/// `2(V_min + 1/4)`.
#[derive(Clone, Serialize)]
pub struct WidthPoint {
    pub t_ns: f64,
    pub q0_width: f64,
    pub quadrature_width: f64,
}

#[derive(Serialize)]
struct Multiphoton {
    omega_c_hz: f64,
    frequencies_hz: Vec<f64>,
    spacing_hz: f64,
}

#[derive(Serialize)]
struct Report {
    nbar: f64,
    collapse_time_ns: f64,
    revival_time_ns: f64,
    kerr_phase_rad: Vec<TimedValue>,
    selectivity: f64,
    multiphoton: Multiphoton,
    kerr_from_dispersive_hz: f64,
    width_curve: Vec<WidthPoint>,
    squeezing_optimum: Option<WidthPoint>,
}

/// Characteristic numbers plus the `Q₀` width curve and an evolution time
/// series.
pub fn cmd_analyze(cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let params: SystemParams = cfg.system_params();
    let beta = cfg.state.beta();
    let nbar = beta.norm_sqr();
    let frame = cfg.evolve.frame();
    let opts = cfg.evolve.to_options();
    let (_, rho0) = initial_state(cfg)?;
    let grid = cfg.grid.to_grid()?;

    let mut width_times: Vec<f64> = cfg.analyze.width_times_ns.clone();
    width_times.sort_by(f64::total_cmp);
    let width_states = lindblad_trajectory(
        &rho0,
        &params,
        &width_times.iter().map(|t| t * NS).collect::<Vec<_>>(),
        &opts,
    )?;
    let width_curve = width_times
        .par_iter()
        .zip(width_states.par_iter())
        .map(|(&t_ns, rho)| {
            let rot = frame_rotation(&params, beta, t_ns * NS, frame);
            let (var, _) = min_quadrature_variance(rho);
            Ok(WidthPoint {
                t_ns,
                q0_width: squeezing_width(rho, &grid, rot)?,
                quadrature_width: 2.0 * (var + 0.25),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // strongest squeezing is where the best quadrature is narrowest
    let squeezing_optimum = width_curve
        .iter()
        .min_by(|a, b| a.quadrature_width.total_cmp(&b.quadrature_width))
        .cloned();

    let omega_c = params.extras.omega_c;
    let freqs = multiphoton_frequencies(&params, omega_c, cfg.analyze.n_max_photons);
    let spacing = if freqs.len() > 1 {
        freqs[0] - freqs[1]
    } else {
        0.5 * params.kerr
    };
    let report = Report {
        nbar,
        collapse_time_ns: if nbar > 0.0 {
            collapse_time(nbar, params.kerr) / NS
        } else {
            f64::INFINITY
        },
        revival_time_ns: revival_time(params.kerr) / NS,
        kerr_phase_rad: cfg
            .analyze
            .kerr_phase_times_ns
            .iter()
            .map(|&t_ns| TimedValue {
                t_ns,
                value: kerr_phase(t_ns * NS, beta, params.kerr),
            })
            .collect(),
        selectivity: selectivity(params.chi, params.sigma_pulse),
        multiphoton: Multiphoton {
            omega_c_hz: omega_c / TWO_PI,
            frequencies_hz: freqs.iter().map(|f| f / TWO_PI).collect(),
            spacing_hz: spacing / TWO_PI,
        },
        kerr_from_dispersive_hz: kerr_from_dispersive(params.chi, params.k_q) / TWO_PI,
        width_curve,
        squeezing_optimum,
    };

    let frames = cfg.analyze.evolution_frames;
    let end = cfg.analyze.evolution_end_ns;
    let frame_times: Vec<f64> = (0..frames)
        .map(|k| {
            if frames > 1 {
                end * k as f64 / (frames - 1) as f64
            } else {
                0.0
            }
        })
        .collect();
    let states = lindblad_trajectory(
        &rho0,
        &params,
        &frame_times.iter().map(|t| t * NS).collect::<Vec<_>>(),
        &opts,
    )?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_ns", "re_a", "im_a", "mean_n", "purity"])?;
    for (t_ns, rho) in frame_times.iter().zip(&states) {
        let a: C64 = rho.mean_amplitude();
        w.write_record([
            t_ns.to_string(),
            a.re.to_string(),
            a.im.to_string(),
            rho.mean_photon_number().to_string(),
            rho.purity().to_string(),
        ])?;
    }
    let evolution = w.into_inner().map_err(|e| anyhow!("{e}"))?;

    let mut outputs = OutputSet::new(out);
    outputs.write_json("report.json", &report)?;
    outputs.write("evolution.csv", &evolution)?;
    outputs.finish("analyze", config_hash(cfg), Vec::new())
}

/// Thread pool honouring `KERR_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("KERR_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow!("KERR_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            bail!("KERR_THREADS must be a positive integer");
        }
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?)
}
