//! Run configuration, parameter sweeps and CSV output.
//!
//! A run is described by a TOML file whose keys may be written flat
//! (`device.ej_ghz = 13.96`) or in tables. Unknown keys are rejected. Every
//! CSV starts with a `#` block listing the fully resolved configuration.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;

use crate::adiabatic::{detuning_ratio, predicted_interferometer_phase, PredictionOrder};
use crate::error::{Error, Result};
use crate::estimate::{gate_fidelity, unwrap_phases, TomographyMode};
use crate::experiment::{contour_prediction, run_contour, ContourRun, Dynamics, ExperimentConfig};
use crate::model::{default_anharmonicities, omega_for_solid_angle, transmon_spectrum, DeviceParams};
use crate::propagate::PropagationOptions;
use crate::sequence::{sweep_adiabaticity, Contour, Rotation, SequenceOptions, SweepProfile};
use crate::units::{angular_to_ghz, angular_to_mhz, mhz_to_angular};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Angle,
    Detuning,
    Tau,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Angle => "angle",
            SweepAxis::Detuning => "detuning",
            SweepAxis::Tau => "tau",
        }
    }

    fn column(self) -> &'static str {
        match self {
            SweepAxis::Angle => "a_solid_rad",
            SweepAxis::Detuning => "detuning_mhz",
            SweepAxis::Tau => "tau_ns",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeviceSection {
    pub ej_ghz: f64,
    pub ec_ghz: f64,
    pub n_levels: usize,
    /// Take all α_j from the charge-basis spectrum instead of `alpha2_mhz`.
    pub anharmonicity_from_spectrum: bool,
    pub alpha2_mhz: f64,
    /// Defaults to 3·α₂.
    pub alpha3_mhz: Option<f64>,
}

impl Default for DeviceSection {
    fn default() -> Self {
        DeviceSection {
            ej_ghz: 13.96,
            ec_ghz: 0.36,
            n_levels: 4,
            anharmonicity_from_spectrum: false,
            alpha2_mhz: -423.0,
            alpha3_mhz: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoherenceSection {
    pub enabled: bool,
    pub t1_us: f64,
    pub t2star_us: f64,
    /// Recorded in the output header only.
    pub t2echo_us: Option<f64>,
}

impl Default for CoherenceSection {
    fn default() -> Self {
        CoherenceSection { enabled: true, t1_us: 0.84, t2star_us: 1.03, t2echo_us: None }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    pub detuning_mhz: f64,
    pub ramp_ns: f64,
    pub pi2_ns: f64,
    pub tau_ns: f64,
    pub drag: bool,
    /// `uniform` or `raised_cosine`.
    pub sweep_profile: String,
    pub budget_ns: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        DriveSection {
            detuning_mhz: -35.0,
            ramp_ns: 40.0,
            pi2_ns: 12.0,
            tau_ns: 100.0,
            drag: true,
            sweep_profile: "uniform".into(),
            budget_ns: 700.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsSection {
    pub dt_ps: f64,
    pub charge_cutoff: usize,
    pub record_interval_ns: f64,
}

impl Default for NumericsSection {
    fn default() -> Self {
        NumericsSection { dt_ps: 10.0, charge_cutoff: crate::model::DEFAULT_CHARGE_CUTOFF, record_interval_ns: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSection {
    /// Shots per tomography setting; 0 means exact expectations.
    pub shots: u32,
    pub seed: u64,
}

/// Grid along one axis. Angles are in units of π, detunings in MHz and sweep
/// times in ns. Missing entries take the axis defaults.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub axis: Option<SweepAxis>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    pub spacing: Option<Spacing>,
    /// Solid angles (units of π) of the detuning sweep.
    pub solid_angles_pi: Vec<f64>,
    /// Solid angle (units of π) of the sweep-time scan.
    pub solid_angle_pi: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            axis: None,
            start: None,
            stop: None,
            points: None,
            spacing: None,
            solid_angles_pi: vec![0.25, 0.75, 1.25],
            solid_angle_pi: 0.25,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub device: DeviceSection,
    pub coherence: CoherenceSection,
    pub drive: DriveSection,
    pub numerics: NumericsSection,
    pub readout: ReadoutSection,
    pub sweep: SweepSection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        if n == 1 {
            return vec![self.start];
        }
        (0..n)
            .map(|i| {
                let u = i as f64 / (n - 1) as f64;
                match self.spacing {
                    Spacing::Linear => self.start + (self.stop - self.start) * u,
                    Spacing::Log => (self.start.ln() + (self.stop.ln() - self.start.ln()) * u).exp(),
                }
            })
            .collect()
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.device;
        check_positive("device.ej_ghz", d.ej_ghz)?;
        check_positive("device.ec_ghz", d.ec_ghz)?;
        if d.n_levels < 2 {
            return Err(Error::Config(format!("device.n_levels must be at least 2, got {}", d.n_levels)));
        }
        if !d.alpha2_mhz.is_finite() || d.alpha3_mhz.is_some_and(|a| !a.is_finite()) {
            return Err(Error::Config("anharmonicities must be finite".into()));
        }
        let c = &self.coherence;
        check_positive("coherence.t1_us", c.t1_us)?;
        check_positive("coherence.t2star_us", c.t2star_us)?;
        if let Some(t) = c.t2echo_us {
            check_positive("coherence.t2echo_us", t)?;
        }
        let dr = &self.drive;
        if !dr.detuning_mhz.is_finite() || dr.detuning_mhz == 0.0 {
            return Err(Error::Config(format!("drive.detuning_mhz must be nonzero, got {}", dr.detuning_mhz)));
        }
        check_positive("drive.ramp_ns", dr.ramp_ns)?;
        check_positive("drive.pi2_ns", dr.pi2_ns)?;
        check_positive("drive.tau_ns", dr.tau_ns)?;
        check_positive("drive.budget_ns", dr.budget_ns)?;
        self.sweep_profile()?;
        let n = &self.numerics;
        check_positive("numerics.dt_ps", n.dt_ps)?;
        if n.charge_cutoff < 2 {
            return Err(Error::Config("numerics.charge_cutoff must be at least 2".into()));
        }
        if !(n.record_interval_ns >= 0.0) {
            return Err(Error::Config("numerics.record_interval_ns must be non-negative".into()));
        }
        if self.sweep.solid_angles_pi.is_empty() {
            return Err(Error::Config("sweep.solid_angles_pi is empty".into()));
        }
        for &a in self.sweep.solid_angles_pi.iter().chain([&self.sweep.solid_angle_pi]) {
            if !(a > 0.0 && a < 2.0) {
                return Err(Error::Config(format!("solid angle {a}π outside (0, 2π)")));
            }
        }
        if let Some(axis) = self.sweep.axis {
            self.grid(axis)?;
        }
        Ok(())
    }

    pub fn sweep_profile(&self) -> Result<SweepProfile> {
        match self.drive.sweep_profile.as_str() {
            "uniform" => Ok(SweepProfile::Uniform),
            "raised_cosine" => Ok(SweepProfile::RaisedCosine),
            other => Err(Error::Config(format!("unknown drive.sweep_profile '{other}'"))),
        }
    }

    pub fn decoherence(&self) -> bool {
        self.coherence.enabled
    }

    /// Grid of `axis`, with defaults for anything the file leaves out.
    pub fn grid(&self, axis: SweepAxis) -> Result<Grid> {
        let (start, stop, points, spacing) = match axis {
            SweepAxis::Angle => (1.5 / 24.0, 1.5, 24, Spacing::Linear),
            SweepAxis::Detuning => (-60.0, -25.0, 8, Spacing::Linear),
            SweepAxis::Tau => (10.0, 250.0, 30, Spacing::Log),
        };
        let s = &self.sweep;
        let grid = Grid {
            start: s.start.unwrap_or(start),
            stop: s.stop.unwrap_or(stop),
            points: s.points.unwrap_or(points),
            spacing: s.spacing.unwrap_or(spacing),
        };
        if grid.points == 0 {
            return Err(Error::Config("sweep.points must be positive".into()));
        }
        if !(grid.start.is_finite() && grid.stop.is_finite()) || (grid.points > 1 && grid.stop <= grid.start) {
            return Err(Error::Config(format!("sweep grid {}..{} is not increasing", grid.start, grid.stop)));
        }
        if grid.spacing == Spacing::Log && grid.start <= 0.0 {
            return Err(Error::Config("log spacing needs a positive start".into()));
        }
        match axis {
            SweepAxis::Angle => {
                if grid.start <= 0.0 || grid.stop >= 2.0 {
                    return Err(Error::Config(format!("angle grid {}π..{}π outside (0, 2π)", grid.start, grid.stop)));
                }
                if grid.stop > 1.5 {
                    log::warn!("angle grid extends past 1.5π");
                }
            }
            SweepAxis::Detuning => {
                if grid.start <= 0.0 && grid.stop >= 0.0 {
                    return Err(Error::Config("detuning grid must not contain zero".into()));
                }
                if grid.start < -60.0 || grid.stop > -25.0 {
                    log::warn!("detuning grid leaves [-60, -25] MHz");
                }
            }
            SweepAxis::Tau => {
                if grid.start <= 0.0 {
                    return Err(Error::Config("sweep times must be positive".into()));
                }
                if grid.start > 10.0 || grid.stop < 200.0 {
                    log::warn!("tau grid does not span [10, 200] ns");
                }
            }
        }
        Ok(grid)
    }

    pub fn device_params(&self) -> Result<DeviceParams> {
        let d = &self.device;
        let mut alphas = if d.anharmonicity_from_spectrum {
            transmon_spectrum(d.ej_ghz, d.ec_ghz, d.n_levels, self.numerics.charge_cutoff)?.anharmonicities
        } else {
            default_anharmonicities(d.n_levels, mhz_to_angular(d.alpha2_mhz))
        };
        if let Some(a3) = d.alpha3_mhz {
            if d.n_levels > 3 {
                alphas[3] = mhz_to_angular(a3);
            }
        }
        let (t1, t2) = if self.decoherence() {
            (Some(self.coherence.t1_us), Some(self.coherence.t2star_us))
        } else {
            (None, None)
        };
        DeviceParams::new(d.ej_ghz, d.ec_ghz, alphas, t1, t2)
    }

    fn tomography_mode(&self, stream: u64) -> TomographyMode {
        match self.readout.shots {
            0 => TomographyMode::Exact,
            shots => TomographyMode::Sampled { shots, seed: self.readout.seed.wrapping_add(stream) },
        }
    }

    pub fn experiment(&self, delta_mhz: f64, tau_ns: f64, dynamics: Dynamics) -> Result<ExperimentConfig> {
        let dr = &self.drive;
        Ok(ExperimentConfig {
            params: self.device_params()?,
            delta: mhz_to_angular(delta_mhz),
            tau_ns,
            sequence: SequenceOptions {
                ramp_ns: dr.ramp_ns,
                pi2_ns: dr.pi2_ns,
                drag: dr.drag && self.device.n_levels > 2,
                budget_ns: dr.budget_ns,
                tomography: Rotation::TomographyY,
                sweep_profile: self.sweep_profile()?,
            },
            propagation: PropagationOptions {
                dt_ps: self.numerics.dt_ps,
                record_interval_ns: self.numerics.record_interval_ns,
                record_coords: false,
            },
            dynamics,
            tomography: self.tomography_mode(0),
        })
    }

    /// Dynamics of the full pipeline: master equation when decoherence is on.
    pub fn pipeline_dynamics(&self) -> Dynamics {
        if self.decoherence() {
            Dynamics::Lindblad
        } else {
            Dynamics::Unitary
        }
    }

    /// `#`-prefixed block with every resolved setting, defaults included.
    pub fn header(&self, command: &str) -> String {
        let d = &self.device;
        let c = &self.coherence;
        let dr = &self.drive;
        let n = &self.numerics;
        let s = &self.sweep;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "# {k} = {v}");
        };
        line("command", command.to_string());
        line("version", env!("CARGO_PKG_VERSION").to_string());
        line("device.ej_ghz", d.ej_ghz.to_string());
        line("device.ec_ghz", d.ec_ghz.to_string());
        line("device.n_levels", d.n_levels.to_string());
        line("device.anharmonicity_from_spectrum", d.anharmonicity_from_spectrum.to_string());
        line("device.alpha2_mhz", d.alpha2_mhz.to_string());
        line("device.alpha3_mhz", fmt_opt(d.alpha3_mhz));
        line("coherence.enabled", c.enabled.to_string());
        line("coherence.t1_us", c.t1_us.to_string());
        line("coherence.t2star_us", c.t2star_us.to_string());
        line("coherence.t2echo_us", fmt_opt(c.t2echo_us));
        line("drive.detuning_mhz", dr.detuning_mhz.to_string());
        line("drive.ramp_ns", dr.ramp_ns.to_string());
        line("drive.pi2_ns", dr.pi2_ns.to_string());
        line("drive.tau_ns", dr.tau_ns.to_string());
        line("drive.drag", dr.drag.to_string());
        line("drive.sweep_profile", dr.sweep_profile.clone());
        line("drive.budget_ns", dr.budget_ns.to_string());
        line("numerics.dt_ps", n.dt_ps.to_string());
        line("numerics.charge_cutoff", n.charge_cutoff.to_string());
        line("numerics.record_interval_ns", n.record_interval_ns.to_string());
        line("readout.shots", self.readout.shots.to_string());
        line("readout.seed", self.readout.seed.to_string());
        line("sweep.axis", s.axis.map_or("none", SweepAxis::name).to_string());
        line("sweep.solid_angles_pi", format!("{:?}", s.solid_angles_pi));
        line("sweep.solid_angle_pi", s.solid_angle_pi.to_string());
        if let Ok(p) = self.device_params() {
            let alphas: Vec<f64> = p.anharmonicities.iter().map(|&a| angular_to_mhz(a)).collect();
            line("resolved.alpha_mhz", format!("{alphas:?}"));
        }
        out
    }
}

/// One row of a sweep table. Entries that could not be computed are NaN and
/// explained in `reason`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub gamma_sim_rad: f64,
    pub gamma_exact_rad: f64,
    pub gamma_pert_rad: f64,
    pub gamma_twolevel_rad: f64,
    pub bloch_length: f64,
    pub p2_max: f64,
    pub a_param: f64,
    pub fidelity: f64,
    pub a_solid_rad: f64,
    pub detuning_mhz: f64,
    pub tau_ns: f64,
    pub omega_mhz: f64,
    pub readout_leakage: f64,
    /// Angle sweep: `+−` contour.
    pub gamma_sim_pm_rad: f64,
    /// Angle sweep: `−−` contour.
    pub gamma_sim_mm_rad: f64,
    /// Tau sweep: phase from the master-equation run.
    pub gamma_pipeline_rad: f64,
    pub reason: String,
}

impl SweepRow {
    fn new(axis_value: f64, a_solid: f64, delta_mhz: f64, tau_ns: f64) -> SweepRow {
        let mut row = SweepRow {
            axis_value,
            gamma_sim_rad: f64::NAN,
            gamma_exact_rad: f64::NAN,
            gamma_pert_rad: f64::NAN,
            gamma_twolevel_rad: f64::NAN,
            bloch_length: f64::NAN,
            p2_max: f64::NAN,
            a_param: f64::NAN,
            fidelity: f64::NAN,
            a_solid_rad: a_solid,
            detuning_mhz: delta_mhz,
            tau_ns,
            omega_mhz: f64::NAN,
            readout_leakage: f64::NAN,
            gamma_sim_pm_rad: f64::NAN,
            gamma_sim_mm_rad: f64::NAN,
            gamma_pipeline_rad: f64::NAN,
            reason: String::new(),
        };
        let delta = mhz_to_angular(delta_mhz);
        match omega_for_solid_angle(a_solid, delta) {
            Ok(w) => row.omega_mhz = angular_to_mhz(w),
            Err(e) => row.note("omega", &e),
        }
        match sweep_adiabaticity(a_solid, delta, tau_ns) {
            Ok(a) => row.a_param = a,
            Err(e) => row.note("a_param", &e),
        }
        row
    }

    fn note(&mut self, what: &str, err: &dyn std::fmt::Display) {
        if !self.reason.is_empty() {
            self.reason.push_str("; ");
        }
        let _ = write!(self.reason, "{what}: {err}");
    }

    fn predictions(&mut self, params: &DeviceParams) {
        let delta = mhz_to_angular(self.detuning_mhz);
        for (order, slot, name) in [
            (PredictionOrder::Exact, &mut self.gamma_exact_rad, "gamma_exact"),
            (PredictionOrder::Perturbative, &mut self.gamma_pert_rad, "gamma_pert"),
            (PredictionOrder::TwoLevel, &mut self.gamma_twolevel_rad, "gamma_twolevel"),
        ] {
            match predicted_interferometer_phase(params, self.a_solid_rad, delta, order) {
                Ok(p) => *slot = contour_prediction(&p, Contour::MinusPlus),
                Err(e) => {
                    if !self.reason.is_empty() {
                        self.reason.push_str("; ");
                    }
                    let _ = write!(self.reason, "{name}: {e}");
                }
            }
        }
    }

    /// Fills readout columns from the `−+` run of the pipeline.
    fn pipeline(&mut self, run: &ContourRun) {
        self.bloch_length = run.bloch_length;
        self.p2_max = run.p2_max;
        self.readout_leakage = run.record.leakage;
        if !self.gamma_exact_rad.is_finite() {
            self.note("fidelity", &"no target phase");
            return;
        }
        match gate_fidelity(&run.record, self.gamma_exact_rad) {
            Ok(f) => self.fidelity = f.fidelity,
            Err(e) => self.note("fidelity", &e),
        }
    }

    fn phase_or_note(&mut self, what: &str, run: &ContourRun) -> f64 {
        match run.gamma {
            Some(g) => g,
            None => {
                self.note(what, &"phase undefined: in-plane Bloch vector vanished");
                f64::NAN
            }
        }
    }
}

/// Rows of one sweep, ready for CSV output.
#[derive(Clone, Debug)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub header: String,
    pub rows: Vec<SweepRow>,
}

type Column = (&'static str, fn(&SweepRow) -> f64);

const COMMON_COLUMNS: [Column; 13] = [
    ("gamma_sim_rad", |r| r.gamma_sim_rad),
    ("gamma_exact_rad", |r| r.gamma_exact_rad),
    ("gamma_pert_rad", |r| r.gamma_pert_rad),
    ("gamma_twolevel_rad", |r| r.gamma_twolevel_rad),
    ("bloch_length", |r| r.bloch_length),
    ("p2_max", |r| r.p2_max),
    ("a_param", |r| r.a_param),
    ("fidelity", |r| r.fidelity),
    ("a_solid_rad", |r| r.a_solid_rad),
    ("detuning_mhz", |r| r.detuning_mhz),
    ("tau_ns", |r| r.tau_ns),
    ("omega_mhz", |r| r.omega_mhz),
    ("readout_leakage", |r| r.readout_leakage),
];

impl SweepTable {
    pub fn columns(&self) -> Vec<Column> {
        let mut cols: Vec<Column> = vec![("axis_value", |r| r.axis_value)];
        cols.extend(COMMON_COLUMNS);
        match self.axis {
            SweepAxis::Angle => {
                cols.push(("gamma_sim_pm_rad", |r| r.gamma_sim_pm_rad));
                cols.push(("gamma_sim_mm_rad", |r| r.gamma_sim_mm_rad));
            }
            SweepAxis::Tau => cols.push(("gamma_pipeline_rad", |r| r.gamma_pipeline_rad)),
            SweepAxis::Detuning => {}
        }
        cols
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.header.as_bytes())?;
        let _ = writeln!(out, "# axis_value = {}", self.axis.column());
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let cols = self.columns();
        let mut names: Vec<&str> = cols.iter().map(|c| c.0).collect();
        names.push("reason");
        w.write_record(&names).map_err(io)?;
        for row in &self.rows {
            let mut fields: Vec<String> = cols.iter().map(|(_, get)| get(row).to_string()).collect();
            fields.push(row.reason.clone());
            w.write_record(&fields).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_axis(cfg: &RunConfig, axis: SweepAxis) -> Result<()> {
    match cfg.sweep.axis {
        Some(a) if a != axis => Err(Error::Config(format!(
            "configuration describes a {} sweep, not {}",
            a.name(),
            axis.name()
        ))),
        _ => Ok(()),
    }
}

/// Runs every (point, contour) job in parallel; results come back in job order.
fn run_jobs(cfg: &RunConfig, jobs: &[(ExperimentConfig, Contour, f64)]) -> Vec<Result<ContourRun>> {
    jobs.par_iter()
        .enumerate()
        .map(|(i, (exp, contour, a))| {
            let mut exp = exp.clone();
            exp.tomography = cfg.tomography_mode(i as u64);
            run_contour(&exp, *contour, *a)
        })
        .collect()
}

fn take_run(row: &mut SweepRow, what: &str, result: Result<ContourRun>) -> Option<ContourRun> {
    match result {
        Ok(run) => Some(run),
        Err(e) => {
            row.note(what, &e);
            None
        }
    }
}

/// Phase against solid angle at fixed detuning: contours `−+`, `+−`, `−−`.
pub fn sweep_angle(cfg: &RunConfig) -> Result<SweepTable> {
    check_axis(cfg, SweepAxis::Angle)?;
    let grid = cfg.grid(SweepAxis::Angle)?;
    let params = cfg.device_params()?;
    let delta = cfg.drive.detuning_mhz;
    let tau = cfg.drive.tau_ns;
    let exp = cfg.experiment(delta, tau, cfg.pipeline_dynamics())?;
    let angles: Vec<f64> = grid.values().into_iter().map(|x| x * PI).collect();
    let contours = [Contour::MinusPlus, Contour::PlusMinus, Contour::MinusMinus];
    let jobs: Vec<_> = angles
        .iter()
        .flat_map(|&a| contours.iter().map(move |&c| (c, a)))
        .map(|(c, a)| (exp.clone(), c, a))
        .collect();
    let mut results = run_jobs(cfg, &jobs).into_iter();
    let mut rows = Vec::with_capacity(angles.len());
    for &a in &angles {
        let mut row = SweepRow::new(a, a, delta, tau);
        row.predictions(&params);
        let runs: Vec<Option<ContourRun>> = contours
            .iter()
            .map(|c| {
                let r = results.next().expect("one result per job");
                take_run(&mut row, &format!("contour {c}"), r)
            })
            .collect();
        if let Some(run) = &runs[0] {
            row.pipeline(run);
            row.gamma_sim_rad = row.phase_or_note("gamma_sim", run);
        }
        if let Some(run) = &runs[1] {
            row.gamma_sim_pm_rad = row.phase_or_note("gamma_sim_pm", run);
        }
        if let Some(run) = &runs[2] {
            row.gamma_sim_mm_rad = row.phase_or_note("gamma_sim_mm", run);
        }
        rows.push(row);
    }
    unwrap_column(&mut rows, |r| &mut r.gamma_sim_rad, 0.0);
    unwrap_column(&mut rows, |r| &mut r.gamma_sim_pm_rad, 0.0);
    unwrap_column(&mut rows, |r| &mut r.gamma_sim_mm_rad, 0.0);
    Ok(SweepTable { axis: SweepAxis::Angle, header: cfg.header("sweep-angle"), rows })
}

fn unwrap_column<F: Fn(&mut SweepRow) -> &mut f64>(rows: &mut [SweepRow], field: F, start: f64) {
    let raw: Vec<f64> = rows.iter_mut().map(|r| *field(r)).collect();
    for (r, u) in rows.iter_mut().zip(unwrap_phases(&raw, start)) {
        *field(r) = u;
    }
}

/// Phase against detuning for each configured solid angle; rows grouped by
/// solid angle, ascending detuning within a group.
pub fn sweep_detuning(cfg: &RunConfig) -> Result<SweepTable> {
    check_axis(cfg, SweepAxis::Detuning)?;
    let grid = cfg.grid(SweepAxis::Detuning)?;
    let params = cfg.device_params()?;
    let tau = cfg.drive.tau_ns;
    let detunings = grid.values();
    let angles: Vec<f64> = cfg.sweep.solid_angles_pi.iter().map(|x| x * PI).collect();
    let mut jobs = Vec::new();
    for &a in &angles {
        for &d in &detunings {
            jobs.push((cfg.experiment(d, tau, cfg.pipeline_dynamics())?, Contour::MinusPlus, a));
        }
    }
    let mut results = run_jobs(cfg, &jobs).into_iter();
    let mut rows = Vec::new();
    for &a in &angles {
        let mut group = Vec::new();
        for &d in &detunings {
            let mut row = SweepRow::new(d, a, d, tau);
            row.predictions(&params);
            let r = results.next().expect("one result per job");
            if let Some(run) = take_run(&mut row, "contour -+", r) {
                row.pipeline(&run);
                row.gamma_sim_rad = row.phase_or_note("gamma_sim", &run);
            }
            group.push(row);
        }
        let anchor = group.iter().map(|r| r.gamma_exact_rad).find(|g| g.is_finite()).unwrap_or(0.0);
        unwrap_column(&mut group, |r| &mut r.gamma_sim_rad, anchor);
        rows.extend(group);
    }
    Ok(SweepTable { axis: SweepAxis::Detuning, header: cfg.header("sweep-detuning"), rows })
}

/// Phase and gate fidelity against sweep time at fixed solid angle and
/// detuning. The phase comes from the unitary simulation; fidelity, Bloch
/// length and leakage from the pipeline.
pub fn sweep_tau(cfg: &RunConfig) -> Result<SweepTable> {
    check_axis(cfg, SweepAxis::Tau)?;
    let grid = cfg.grid(SweepAxis::Tau)?;
    let params = cfg.device_params()?;
    let delta = cfg.drive.detuning_mhz;
    let a = cfg.sweep.solid_angle_pi * PI;
    let taus = grid.values();
    let pipeline = cfg.pipeline_dynamics();
    let mut jobs = Vec::new();
    for &tau in &taus {
        jobs.push((cfg.experiment(delta, tau, Dynamics::Unitary)?, Contour::MinusPlus, a));
        if pipeline != Dynamics::Unitary {
            jobs.push((cfg.experiment(delta, tau, pipeline)?, Contour::MinusPlus, a));
        }
    }
    let mut results = run_jobs(cfg, &jobs).into_iter();
    let mut rows = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let mut row = SweepRow::new(tau, a, delta, tau);
        row.predictions(&params);
        let unitary = take_run(&mut row, "unitary run", results.next().expect("one result per job"));
        let piped = if pipeline != Dynamics::Unitary {
            take_run(&mut row, "pipeline run", results.next().expect("one result per job"))
        } else {
            unitary.clone()
        };
        if let Some(run) = &unitary {
            row.gamma_sim_rad = row.phase_or_note("gamma_sim", run);
        }
        if let Some(run) = &piped {
            row.pipeline(run);
            row.gamma_pipeline_rad = row.phase_or_note("gamma_pipeline", run);
        }
        rows.push(row);
    }
    // continuation starts from the slowest, most adiabatic sweep
    let anchor = rows.last().map(|r| r.gamma_exact_rad).filter(|g| g.is_finite()).unwrap_or(0.0);
    rows.reverse();
    unwrap_column(&mut rows, |r| &mut r.gamma_sim_rad, anchor);
    unwrap_column(&mut rows, |r| &mut r.gamma_pipeline_rad, anchor);
    rows.reverse();
    Ok(SweepTable { axis: SweepAxis::Tau, header: cfg.header("sweep-tau"), rows })
}

/// Text report of the transmon spectrum and `k = Δ/α₂` at each configured detuning.
pub fn spectrum_report(cfg: &RunConfig) -> Result<String> {
    let d = &cfg.device;
    let spec = transmon_spectrum(d.ej_ghz, d.ec_ghz, d.n_levels.max(3), cfg.numerics.charge_cutoff)?;
    let params = cfg.device_params()?;
    let mut out = cfg.header("spectrum");
    let mut line = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    line("ej_over_ec", (d.ej_ghz / d.ec_ghz).to_string());
    line("omega01_ghz", angular_to_ghz(spec.omega01).to_string());
    line("omega01_asymptotic_ghz", ((8.0 * d.ej_ghz * d.ec_ghz).sqrt() - d.ec_ghz).to_string());
    for (j, a) in spec.anharmonicities.iter().enumerate().skip(2) {
        line(&format!("alpha{j}_spectrum_mhz"), angular_to_mhz(*a).to_string());
    }
    for (j, a) in params.anharmonicities.iter().enumerate().skip(2) {
        line(&format!("alpha{j}_model_mhz"), angular_to_mhz(*a).to_string());
    }
    let mut detunings = vec![cfg.drive.detuning_mhz];
    if cfg.sweep.axis == Some(SweepAxis::Detuning) {
        detunings.extend(cfg.grid(SweepAxis::Detuning)?.values());
    }
    for dm in detunings {
        line(&format!("k[detuning_mhz={dm}]"), detuning_ratio(&params, mhz_to_angular(dm)).to_string());
    }
    Ok(out)
}

/// Single contour with the full trajectory, as CSV.
pub fn simulate<W: Write>(cfg: &RunConfig, contour: Contour, a_solid: f64, mut out: W) -> Result<ContourRun> {
    if !(a_solid > 0.0 && a_solid < TAU) {
        return Err(Error::Config(format!("solid angle {a_solid} rad outside (0, 2π)")));
    }
    let exp = cfg.experiment(cfg.drive.detuning_mhz, cfg.drive.tau_ns, cfg.pipeline_dynamics())?;
    let run = run_contour(&exp, contour, a_solid)?;
    out.write_all(cfg.header("simulate").as_bytes())?;
    let [sx, sy, sz] = run.record.bloch();
    let _ = writeln!(out, "# contour = {contour}");
    let _ = writeln!(out, "# a_solid_rad = {a_solid}");
    let _ = writeln!(out, "# readout = {sx} {sy} {sz}");
    let _ = writeln!(out, "# gamma_rad = {}", run.gamma.unwrap_or(f64::NAN));
    run.trajectory.write_csv(out)?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let p = cfg.device_params().unwrap();
        assert_eq!(p.n_levels, 4);
        assert!((angular_to_mhz(p.alpha2()) + 423.0).abs() < 1e-9);
        assert!((angular_to_mhz(p.anharmonicities[3]) + 3.0 * 423.0).abs() < 1e-9);
        assert_eq!(p.t1_us, Some(0.84));
    }

    #[test]
    fn flat_and_table_keys_agree() {
        let flat = RunConfig::from_toml_str("device.ej_ghz = 14.0\ndrive.tau_ns = 80.0\nsweep.axis = \"tau\"").unwrap();
        let table = RunConfig::from_toml_str("[device]\nej_ghz = 14.0\n[drive]\ntau_ns = 80.0\n[sweep]\naxis = \"tau\"").unwrap();
        assert_eq!(flat, table);
        assert_eq!(flat.drive.tau_ns, 80.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_toml_str("device.ej_gz = 14.0").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(err.exit_code(), 1);
        assert!(RunConfig::from_toml_str("colour = 1").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for text in [
            "drive.tau_ns = -1.0",
            "drive.detuning_mhz = 0.0",
            "device.n_levels = 1",
            "drive.sweep_profile = \"square\"",
            "sweep.axis = \"angle\"\nsweep.stop = 2.5",
            "sweep.axis = \"tau\"\nsweep.start = 100.0\nsweep.stop = 50.0",
            "sweep.solid_angle_pi = 0.0",
        ] {
            assert!(RunConfig::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn default_grids() {
        let cfg = RunConfig::default();
        let a = cfg.grid(SweepAxis::Angle).unwrap().values();
        assert_eq!(a.len(), 24);
        assert!(a[0] > 0.0 && (a[23] - 1.5).abs() < 1e-15);
        let d = cfg.grid(SweepAxis::Detuning).unwrap().values();
        assert_eq!(d.len(), 8);
        assert_eq!((d[0], d[7]), (-60.0, -25.0));
        let t = cfg.grid(SweepAxis::Tau).unwrap().values();
        assert_eq!(t.len(), 30);
        assert!((t[0] - 10.0).abs() < 1e-12 && (t[29] - 250.0).abs() < 1e-9);
        let ratio = t[1] / t[0];
        assert!(t.windows(2).all(|w| (w[1] / w[0] - ratio).abs() < 1e-12));
    }

    #[test]
    fn header_lists_defaults() {
        let h = RunConfig::default().header("sweep-angle");
        assert!(h.lines().all(|l| l.starts_with("# ")));
        for key in ["device.alpha3_mhz = none", "coherence.t1_us = 0.84", "numerics.dt_ps = 10", "readout.shots = 0"] {
            assert!(h.contains(key), "{key} missing");
        }
    }

    #[test]
    fn decoherence_switch_drops_coherence_times() {
        let mut cfg = RunConfig::default();
        cfg.coherence.enabled = false;
        let p = cfg.device_params().unwrap();
        assert_eq!((p.t1_us, p.t2_star_us), (None, None));
        assert_eq!(cfg.pipeline_dynamics(), Dynamics::Unitary);
    }

    #[test]
    fn mismatched_axis_is_config_error() {
        let cfg = RunConfig::from_toml_str("sweep.axis = \"tau\"").unwrap();
        assert!(matches!(sweep_angle(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn spectrum_report_lists_ratio_and_k() {
        let r = spectrum_report(&RunConfig::default()).unwrap();
        assert!(r.contains("ej_over_ec = 38.7"));
        let k: f64 = r
            .lines()
            .find(|l| l.starts_with("k[detuning_mhz=-35]"))
            .and_then(|l| l.split(" = ").nth(1))
            .unwrap()
            .parse()
            .unwrap();
        assert!((k - 35.0 / 423.0).abs() < 1e-12);
    }

    #[test]
    fn nan_entries_written_literally_with_reason() {
        let mut row = SweepRow::new(0.5, 0.5, -35.0, 100.0);
        row.note("gamma_sim", &"phase undefined");
        let table = SweepTable { axis: SweepAxis::Angle, header: "# test\n".into(), rows: vec![row] };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let data = text.lines().last().unwrap();
        assert!(data.starts_with("0.5,NaN,"));
        assert!(data.ends_with(",gamma_sim: phase undefined"));
    }

    #[test]
    fn row_carries_reason_for_missing_values() {
        let mut row = SweepRow::new(1.0, 1.0, -35.0, 100.0);
        assert!(row.reason.is_empty());
        assert!(row.a_param > 0.0);
        row.note("gamma_sim", &"phase undefined");
        row.note("fidelity", &"no target");
        assert_eq!(row.reason, "gamma_sim: phase undefined; fidelity: no target");
    }
}
