//! Run configuration. Frequencies are given in Hz of the `/2π` value and
//! times in ns; conversion to rad/s and seconds happens here.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kerr_core::dynamics::{DeviceExtras, EvolveOptions, Frame, SystemParams};
use kerr_core::measurement::{Averages, QGrid, ReadoutModel};
use kerr_core::tomography::{ReconstructOptions, DEFAULT_TAIL_TOL};
use kerr_core::C64;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

const TWO_PI: f64 = 2.0 * PI;
const NS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub params: ParamsConfig,
    pub space: SpaceConfig,
    pub grid: GridConfig,
    pub readout: ReadoutConfig,
    pub state: StateConfig,
    pub evolve: EvolveConfig,
    pub simulate: SimulateConfig,
    pub measure: MeasureConfig,
    pub reconstruct: ReconstructConfig,
    pub analyze: AnalyzeConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ParamsConfig::default(),
            space: SpaceConfig::default(),
            grid: GridConfig::default(),
            readout: ReadoutConfig::default(),
            state: StateConfig::default(),
            evolve: EvolveConfig::default(),
            simulate: SimulateConfig::default(),
            measure: MeasureConfig::default(),
            reconstruct: ReconstructConfig::default(),
            analyze: AnalyzeConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("kerr-out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsConfig {
    pub kerr_hz: f64,
    pub kappa_hz: f64,
    pub chi_hz: f64,
    pub k_q_hz: f64,
    pub sigma_pulse_hz: f64,
    pub detuning_hz: f64,
    pub p_e: f64,
    pub extras: ExtrasConfig,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self::from_params(&SystemParams::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtrasConfig {
    pub omega_q_hz: f64,
    pub omega_c_hz: f64,
    pub omega_m_hz: f64,
    pub chi_qm_hz: f64,
    pub chi_cm_hz: f64,
    pub k_m_hz: f64,
}

impl Default for ExtrasConfig {
    fn default() -> Self {
        let e = DeviceExtras::default();
        Self {
            omega_q_hz: e.omega_q / TWO_PI,
            omega_c_hz: e.omega_c / TWO_PI,
            omega_m_hz: e.omega_m / TWO_PI,
            chi_qm_hz: e.chi_qm / TWO_PI,
            chi_cm_hz: e.chi_cm / TWO_PI,
            k_m_hz: e.k_m / TWO_PI,
        }
    }
}

impl ParamsConfig {
    pub fn from_params(p: &SystemParams) -> Self {
        let e = &p.extras;
        Self {
            kerr_hz: p.kerr / TWO_PI,
            kappa_hz: p.kappa / TWO_PI,
            chi_hz: p.chi / TWO_PI,
            k_q_hz: p.k_q / TWO_PI,
            sigma_pulse_hz: p.sigma_pulse / TWO_PI,
            detuning_hz: p.detuning / TWO_PI,
            p_e: p.p_e,
            extras: ExtrasConfig {
                omega_q_hz: e.omega_q / TWO_PI,
                omega_c_hz: e.omega_c / TWO_PI,
                omega_m_hz: e.omega_m / TWO_PI,
                chi_qm_hz: e.chi_qm / TWO_PI,
                chi_cm_hz: e.chi_cm / TWO_PI,
                k_m_hz: e.k_m / TWO_PI,
            },
        }
    }

    pub fn to_params(&self) -> SystemParams {
        let x = &self.extras;
        SystemParams {
            kerr: TWO_PI * self.kerr_hz,
            kappa: TWO_PI * self.kappa_hz,
            chi: TWO_PI * self.chi_hz,
            k_q: TWO_PI * self.k_q_hz,
            sigma_pulse: TWO_PI * self.sigma_pulse_hz,
            detuning: TWO_PI * self.detuning_hz,
            p_e: self.p_e,
            extras: DeviceExtras {
                omega_q: TWO_PI * x.omega_q_hz,
                omega_c: TWO_PI * x.omega_c_hz,
                omega_m: TWO_PI * x.omega_m_hz,
                chi_qm: TWO_PI * x.chi_qm_hz,
                chi_cm: TWO_PI * x.chi_cm_hz,
                k_m: TWO_PI * x.k_m_hz,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpaceConfig {
    /// Levels kept for evolution.
    pub dim: usize,
    /// Extra levels for building displacements.
    pub pad: usize,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        Self { dim: 30, pad: 30 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            rows: 21,
            cols: 21,
            re_min: -3.0,
            re_max: 3.0,
            im_min: -3.0,
            im_max: 3.0,
        }
    }
}

impl GridConfig {
    pub fn to_grid(&self) -> Result<QGrid> {
        Ok(QGrid::uniform(
            self.rows,
            self.cols,
            (self.re_min, self.re_max),
            (self.im_min, self.im_max),
        )?)
    }
}

/// Shot count; `"inf"` selects exact passthrough.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AveragesSpec(pub Averages);

impl Serialize for AveragesSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Averages::Finite(n) => s.serialize_u64(n),
            Averages::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for AveragesSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = AveragesSpec;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a positive shot count or \"inf\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<AveragesSpec, E> {
                if v == 0 {
                    return Err(E::custom("averages must be at least 1"));
                }
                Ok(AveragesSpec(Averages::Finite(v)))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<AveragesSpec, E> {
                u64::try_from(v)
                    .map_err(|_| E::custom("averages must be positive"))
                    .and_then(|v| self.visit_u64(v))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<AveragesSpec, E> {
                match v {
                    "inf" | "infinite" | "infinity" => Ok(AveragesSpec(Averages::Infinite)),
                    other => Err(E::custom(format!("unknown averages sentinel {other:?}"))),
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutConfig {
    pub averages: AveragesSpec,
    /// Gaussian noise per averaged point in probability units. The default
    /// is a placeholder, not a calibrated noise floor.
    pub readout_noise_sd: f64,
    pub noise_calibrated: bool,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            averages: AveragesSpec(Averages::Finite(1000)),
            readout_noise_sd: 0.02,
            noise_calibrated: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateConfig {
    pub beta_re: f64,
    pub beta_im: f64,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self {
            beta_re: 2.0,
            beta_im: 0.0,
        }
    }
}

impl StateConfig {
    pub fn beta(&self) -> C64 {
        C64::new(self.beta_re, self.beta_im)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameConfig {
    KerrFrame,
    LabDetuned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveConfig {
    /// RK4 step; `null` uses `T_rev / 20000`.
    pub dt_ns: Option<f64>,
    pub convergence_tol: f64,
    pub frame: FrameConfig,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            dt_ns: None,
            convergence_tol: 1e-6,
            frame: FrameConfig::LabDetuned,
        }
    }
}

impl EvolveConfig {
    pub fn frame(&self) -> Frame {
        match self.frame {
            FrameConfig::KerrFrame => Frame::KerrFrame,
            FrameConfig::LabDetuned => Frame::LabDetuned,
        }
    }

    pub fn to_options(&self) -> EvolveOptions {
        EvolveOptions {
            dt: self.dt_ns.map(|d| d * NS),
            convergence_tol: self.convergence_tol,
            frame: self.frame(),
            check_convergence: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub times_ns: Vec<f64>,
    /// Fock projection written for each frame.
    pub n: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            times_ns: vec![15.0, 105.0, 185.0, 385.0, 785.0, 1065.0, 2810.0, 3065.0],
            n: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    /// Evolution time; `null` means `T_rev / 2`.
    pub time_ns: Option<f64>,
    pub n_list: Vec<usize>,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            time_ns: None,
            n_list: (0..8).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructConfig {
    pub n_rec: usize,
    pub clip_tol: f64,
    pub max_iters: usize,
    pub rcond: f64,
    pub work_dim: Option<usize>,
    /// Cat order for the fidelity report.
    pub q: usize,
    /// Evolution time for the fidelity report; `null` means `T_rev / q`.
    pub time_ns: Option<f64>,
    /// Completeness tolerance of the alternating-sum Wigner, in units of
    /// `1/π`.
    pub tail_tol: f64,
    pub input: Option<PathBuf>,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        let r = ReconstructOptions::default();
        Self {
            n_rec: 10,
            clip_tol: r.clip_tol,
            max_iters: r.max_iters,
            rcond: r.rcond,
            work_dim: None,
            q: 2,
            time_ns: None,
            tail_tol: DEFAULT_TAIL_TOL * PI,
            input: None,
        }
    }
}

impl ReconstructConfig {
    pub fn to_options(&self) -> ReconstructOptions {
        ReconstructOptions {
            clip_tol: self.clip_tol,
            max_iters: self.max_iters,
            rcond: self.rcond,
            work_dim: self.work_dim,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    /// Times at which the Kerr rotation angle is reported.
    pub kerr_phase_times_ns: Vec<f64>,
    /// Times of the `Q₀` width curve.
    pub width_times_ns: Vec<f64>,
    /// Frames of the evolution time series.
    pub evolution_frames: usize,
    pub evolution_end_ns: f64,
    /// Highest multiphoton order listed.
    pub n_max_photons: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            kerr_phase_times_ns: vec![15.0, 58.0, 385.0, 3065.0],
            width_times_ns: (0..=75).map(|k| 2.0 * k as f64).collect(),
            evolution_frames: 50,
            evolution_end_ns: 6050.0,
            n_max_photons: 3,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("config field `{path}`: {}", e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config always serializes")
    }

    pub fn system_params(&self) -> SystemParams {
        self.params.to_params()
    }

    pub fn readout_model(&self) -> ReadoutModel {
        ReadoutModel {
            p_e: self.params.p_e,
            averages: self.readout.averages.0,
            readout_noise_sd: self.readout.readout_noise_sd,
            seed: self.seed,
        }
    }

    /// Checks every field and reports the first violation by path.
    pub fn validate(&self) -> Result<()> {
        self.system_params()
            .validate()
            .map_err(|e| anyhow::anyhow!("params: {e}"))?;
        if self.space.dim < 2 {
            bail!("space.dim: must be at least 2");
        }
        self.grid.to_grid().map_err(|e| anyhow::anyhow!("grid: {e}"))?;
        self.readout_model()
            .validate()
            .map_err(|e| anyhow::anyhow!("readout: {e}"))?;
        if let Some(dt) = self.evolve.dt_ns {
            if !(dt > 0.0) {
                bail!("evolve.dt_ns: must be positive");
            }
        }
        if !(self.evolve.convergence_tol > 0.0) {
            bail!("evolve.convergence_tol: must be positive");
        }
        if self.simulate.times_ns.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            bail!("simulate.times_ns: times must be finite and nonnegative");
        }
        if self.simulate.n >= self.space.dim {
            bail!("simulate.n: projection outside the simulated space");
        }
        if let Some(t) = self.measure.time_ns {
            if !(t >= 0.0) {
                bail!("measure.time_ns: must be nonnegative");
            }
        }
        if self.measure.n_list.is_empty() {
            bail!("measure.n_list: must not be empty");
        }
        let mut n_sorted = self.measure.n_list.clone();
        n_sorted.sort_unstable();
        n_sorted.dedup();
        if n_sorted.len() != self.measure.n_list.len() {
            bail!("measure.n_list: duplicate entries");
        }
        if self.reconstruct.n_rec < 2 {
            bail!("reconstruct.n_rec: must be at least 2");
        }
        if self.reconstruct.q < 1 {
            bail!("reconstruct.q: must be at least 1");
        }
        if self.reconstruct.max_iters < 1 {
            bail!("reconstruct.max_iters: must be at least 1");
        }
        if !(self.reconstruct.tail_tol > 0.0) {
            bail!("reconstruct.tail_tol: must be positive");
        }
        if self.analyze.n_max_photons < 1 {
            bail!("analyze.n_max_photons: must be at least 1");
        }
        if self.analyze.width_times_ns.iter().any(|t| !(*t >= 0.0)) {
            bail!("analyze.width_times_ns: times must be nonnegative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_reproduce_device_constants() {
        let cfg = RunConfig::default();
        let p = cfg.system_params();
        let d = SystemParams::default();
        assert!((p.kerr - d.kerr).abs() < 1e-6);
        assert!((p.chi - d.chi).abs() < 1e-3);
        assert_eq!(cfg.params.kerr_hz, 325e3);
    }

    #[test]
    fn empty_document_is_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let err = RunConfig::from_json(r#"{"params": {"kerr": 1.0}}"#).unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("params"), "{msg}");
        assert!(msg.contains("kerr"), "{msg}");
    }

    #[test]
    fn averages_sentinel() {
        let cfg = RunConfig::from_json(r#"{"readout": {"averages": "inf"}}"#).unwrap();
        assert_eq!(cfg.readout.averages.0, Averages::Infinite);
        assert!(RunConfig::from_json(r#"{"readout": {"averages": 0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"readout": {"averages": "lots"}}"#).is_err());
    }

    #[test]
    fn invalid_values_name_their_field() {
        let err = RunConfig::from_json(r#"{"params": {"p_e": 1.5}}"#).unwrap_err();
        assert!(format!("{err:#}").contains("params"));
        let err = RunConfig::from_json(r#"{"measure": {"n_list": []}}"#).unwrap_err();
        assert!(format!("{err:#}").contains("measure.n_list"));
    }
}
