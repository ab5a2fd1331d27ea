//! Pulse program of the interferometer and its sampled controls.
//!
//! Everything is expressed in the frame rotating at ω₀₁. Resonant pulses are
//! truncated Gaussians on a fixed quadrature; the off-resonant drive (at
//! ω₀₁ − Δ) appears with effective phase `φ_cmd(t) − Δ·t`, which keeps the
//! piecewise-defined waveform phase-continuous across segment boundaries.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{effective_field, omega_for_solid_angle, DriveConfig};
use crate::units::{angular_to_mhz, NS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepDirection {
    Plus,
    Minus,
}

impl SweepDirection {
    pub fn sign(self) -> f64 {
        match self {
            SweepDirection::Plus => 1.0,
            SweepDirection::Minus => -1.0,
        }
    }

    fn symbol(self) -> char {
        match self {
            SweepDirection::Plus => '+',
            SweepDirection::Minus => '-',
        }
    }
}

/// Directions of the two loops. `+` is positive circulation of the field
/// about its mean axis `sgn(Δ)ẑ`; for Δ < 0 this means φ decreasing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Contour {
    MinusPlus,
    PlusMinus,
    PlusPlus,
    MinusMinus,
}

impl Contour {
    pub const ALL: [Contour; 4] = [Contour::MinusPlus, Contour::PlusMinus, Contour::PlusPlus, Contour::MinusMinus];

    pub fn directions(self) -> (SweepDirection, SweepDirection) {
        use SweepDirection::{Minus, Plus};
        match self {
            Contour::MinusPlus => (Minus, Plus),
            Contour::PlusMinus => (Plus, Minus),
            Contour::PlusPlus => (Plus, Plus),
            Contour::MinusMinus => (Minus, Minus),
        }
    }

    /// Multiplier of the per-contour geometric phase: +1 for `−+`, −1 for
    /// `+−`, 0 when both loops run the same way.
    pub fn phase_sign(self) -> f64 {
        let (a, b) = self.directions();
        (b.sign() - a.sign()) / 2.0
    }
}

impl fmt::Display for Contour {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (a, b) = self.directions();
        write!(f, "{}{}", a.symbol(), b.symbol())
    }
}

impl FromStr for Contour {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.trim().chars().map(|c| if c == '\u{2212}' { '-' } else { c }).collect();
        match norm.as_str() {
            "-+" => Ok(Contour::MinusPlus),
            "+-" => Ok(Contour::PlusMinus),
            "++" => Ok(Contour::PlusPlus),
            "--" => Ok(Contour::MinusMinus),
            _ => Err(Error::Config(format!("unknown contour {s:?}; expected one of -+, +-, ++, --"))),
        }
    }
}

/// Resonant rotations. `TomographyX` is R_x(π/2) and maps ⟨σ_y⟩ onto the
/// z readout; `TomographyY` is R_y(−π/2) and maps ⟨σ_x⟩ onto it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rotation {
    XHalfPi,
    YHalfPi,
    XPi,
    TomographyX,
    TomographyY,
}

impl Rotation {
    pub fn angle(self) -> f64 {
        match self {
            Rotation::XPi => PI,
            _ => PI / 2.0,
        }
    }

    /// Unit direction `(Ω_x, Ω_y)` of the envelope in the control plane. The
    /// raising element carries `(Ω_x − iΩ_y)/2`, so a rotation about +y on the
    /// Bloch sphere needs `Ω_y < 0`.
    pub fn control_axis(self) -> (f64, f64) {
        match self {
            Rotation::XHalfPi | Rotation::XPi | Rotation::TomographyX => (1.0, 0.0),
            Rotation::YHalfPi => (0.0, -1.0),
            Rotation::TomographyY => (0.0, 1.0),
        }
    }

    /// Direction of the DRAG quadrature: the control axis turned by −π/2.
    pub fn quadrature_axis(self) -> (f64, f64) {
        let (cx, cy) = self.control_axis();
        (cy, -cx)
    }

    pub fn name(self) -> &'static str {
        match self {
            Rotation::XHalfPi => "x_half_pi",
            Rotation::YHalfPi => "y_half_pi",
            Rotation::XPi => "x_pi",
            Rotation::TomographyX => "tomography_x",
            Rotation::TomographyY => "tomography_y",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SegmentKind {
    RampUp { omega_target: f64 },
    PhaseSweep { omega_target: f64, direction: SweepDirection },
    RampDown { omega_target: f64 },
    ResonantPulse { rotation: Rotation, drag_coefficient: f64 },
    Idle,
}

impl SegmentKind {
    pub fn name(&self) -> &'static str {
        match self {
            SegmentKind::RampUp { .. } => "ramp_up",
            SegmentKind::PhaseSweep { .. } => "phase_sweep",
            SegmentKind::RampDown { .. } => "ramp_down",
            SegmentKind::ResonantPulse { .. } => "resonant_pulse",
            SegmentKind::Idle => "idle",
        }
    }

    pub fn is_off_resonant(&self) -> bool {
        matches!(self, SegmentKind::RampUp { .. } | SegmentKind::PhaseSweep { .. } | SegmentKind::RampDown { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub duration_ns: f64,
    /// Filled in when the segment is placed in a sequence.
    pub start_ns: f64,
    /// Commanded off-resonant phase at the start of the segment.
    pub phi_start: f64,
}

impl Segment {
    pub fn new(kind: SegmentKind, duration_ns: f64) -> Self {
        Segment { kind, duration_ns, start_ns: 0.0, phi_start: 0.0 }
    }

    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.duration_ns
    }
}

/// Instantaneous drive in the simulation frame.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ControlSample {
    pub t_ns: f64,
    pub omega_x: f64,
    pub omega_y: f64,
    /// Extra diagonal detuning; zero in the ω₀₁ frame used throughout.
    pub delta_diag: f64,
}

/// Anything that can be asked for the drive at a given time.
pub trait ControlSource {
    fn control_at(&self, t_ns: f64) -> ControlSample;
    /// Controls of the smooth piece containing `anchor_ns`, continued
    /// analytically to `t_ns` (which may lie slightly outside it).
    fn control_extended(&self, t_ns: f64, _anchor_ns: f64) -> ControlSample {
        self.control_at(t_ns)
    }
    fn duration_ns(&self) -> f64;
    /// Times at which the controls may be non-smooth, including 0 and the end.
    fn breakpoints_ns(&self) -> Vec<f64>;
    fn adiabaticity_at(&self, _t_ns: f64) -> f64 {
        0.0
    }
    /// True when the controls are constant on `[t0_ns, t1_ns]`.
    fn is_static(&self, _t0_ns: f64, _t1_ns: f64) -> bool {
        false
    }
}

/// Time profile of the phase advance within a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepProfile {
    /// Constant rate 2π/τ.
    Uniform,
    /// Rate `(2π/τ)(1 − cos 2πu)`, starting and ending at zero.
    RaisedCosine,
}

impl SweepProfile {
    /// Fraction of the full turn completed at `u = s/τ`.
    pub fn progress(self, u: f64) -> f64 {
        match self {
            SweepProfile::Uniform => u,
            SweepProfile::RaisedCosine => u - (TAU * u).sin() / TAU,
        }
    }

    /// Rate relative to the mean 2π/τ.
    pub fn rate(self, u: f64) -> f64 {
        match self {
            SweepProfile::Uniform => 1.0,
            SweepProfile::RaisedCosine => 1.0 - (TAU * u).cos(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepProfile::Uniform => "uniform",
            SweepProfile::RaisedCosine => "raised_cosine",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceOptions {
    pub ramp_ns: f64,
    /// Duration shared by all resonant pulses, including the π pulse.
    pub pi2_ns: f64,
    pub drag: bool,
    /// Target total duration; idle time around the echo pads up to it.
    pub budget_ns: f64,
    pub tomography: Rotation,
    pub sweep_profile: SweepProfile,
}

impl Default for SequenceOptions {
    fn default() -> Self {
        SequenceOptions {
            ramp_ns: 40.0, pi2_ns: 12.0, drag: true, budget_ns: 700.0,
            tomography: Rotation::TomographyY,
            sweep_profile: SweepProfile::Uniform,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
    pub contour: Option<Contour>,
    /// Detuning of the off-resonant drive (rad/s).
    pub delta: f64,
    /// Anharmonicity used for DRAG (rad/s).
    pub alpha2: f64,
    pub tau_sweep_ns: f64,
    pub total_duration_ns: f64,
    pub sweep_profile: SweepProfile,
}

/// Amplitude prefactor and offset of a truncated Gaussian of the given area.
fn gaussian_shape(angle: f64, duration_ns: f64) -> (f64, f64) {
    let t = duration_ns * NS;
    let sigma = t / 4.0;
    let edge = (-(t / 2.0).powi(2) / (2.0 * sigma * sigma)).exp();
    let unit_area = sigma * (2.0 * PI).sqrt() * libm::erf(t / (2.0 * 2f64.sqrt() * sigma)) - edge * t;
    (angle / unit_area, edge)
}

/// Truncated Gaussian envelope (rad/s) and its time derivative (rad/s²) at
/// `s_ns` into a pulse of `duration_ns`. The envelope vanishes at both edges
/// and integrates to `angle`.
pub fn gaussian_envelope(angle: f64, duration_ns: f64, s_ns: f64) -> (f64, f64) {
    let (amp, edge) = gaussian_shape(angle, duration_ns);
    let sigma = duration_ns * NS / 4.0;
    let x = (s_ns - duration_ns / 2.0) * NS;
    let g = (-x * x / (2.0 * sigma * sigma)).exp();
    (amp * (g - edge), -amp * x / (sigma * sigma) * g)
}

/// First-order DRAG: adds `−(dE/dt)/α₂` on the orthogonal quadrature of a
/// sampled envelope with spacing `dt_ns`. Returns (in-phase, quadrature).
pub fn drag_envelope(base: &[f64], dt_ns: f64, alpha2: f64) -> Result<Vec<(f64, f64)>> {
    if alpha2 == 0.0 {
        return Err(Error::ZeroAnharmonicity);
    }
    let n = base.len();
    let h = dt_ns * NS;
    Ok((0..n)
        .map(|i| {
            let derivative = match (i, n) {
                (_, 0 | 1) => 0.0,
                (0, _) => (base[1] - base[0]) / h,
                (i, n) if i == n - 1 => (base[i] - base[i - 1]) / h,
                (i, _) => (base[i + 1] - base[i - 1]) / (2.0 * h),
            };
            (base[i], -derivative / alpha2)
        })
        .collect())
}

impl PulseSequence {
    /// Places `segments` back to back and threads the commanded phase through
    /// the off-resonant parts.
    pub fn from_segments(mut segments: Vec<Segment>, delta: f64, alpha2: f64) -> Result<Self> {
        let mut t = 0.0;
        let mut phi = 0.0;
        let mut tau = 0.0;
        for seg in &mut segments {
            if !(seg.duration_ns > 0.0 && seg.duration_ns.is_finite()) {
                return Err(Error::Config(format!("{} segment with duration {} ns", seg.kind.name(), seg.duration_ns)));
            }
            if let SegmentKind::ResonantPulse { drag_coefficient, .. } = seg.kind {
                if drag_coefficient != 0.0 && alpha2 == 0.0 {
                    return Err(Error::ZeroAnharmonicity);
                }
            }
            seg.start_ns = t;
            if !seg.kind.is_off_resonant() {
                phi = 0.0;
            }
            seg.phi_start = phi;
            if let SegmentKind::PhaseSweep { direction, .. } = seg.kind {
                phi = (phi + winding(direction, delta) * TAU).rem_euclid(TAU);
                tau = seg.duration_ns;
            }
            t += seg.duration_ns;
        }
        Ok(PulseSequence {
            segments,
            contour: None,
            delta,
            alpha2,
            tau_sweep_ns: tau,
            total_duration_ns: t,
            sweep_profile: SweepProfile::Uniform,
        })
    }

    pub fn segment_index_at(&self, t_ns: f64) -> usize {
        let idx = self.segments.partition_point(|s| s.start_ns <= t_ns);
        idx.saturating_sub(1).min(self.segments.len().saturating_sub(1))
    }

    /// Copy with the last resonant pulse replaced by `rotation`.
    pub fn with_final_rotation(&self, rotation: Rotation) -> PulseSequence {
        let mut out = self.clone();
        if let Some(seg) = out.segments.iter_mut().rev().find(|s| matches!(s.kind, SegmentKind::ResonantPulse { .. })) {
            if let SegmentKind::ResonantPulse { drag_coefficient, .. } = seg.kind {
                seg.kind = SegmentKind::ResonantPulse { rotation, drag_coefficient };
            }
        }
        out
    }

    /// Start of the final segment (the tomography pulse in an interferometer).
    pub fn final_segment_start_ns(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.start_ns)
    }

    pub fn off_resonant_phase_at(&self, t_ns: f64) -> f64 {
        let seg = &self.segments[self.segment_index_at(t_ns)];
        self.effective_phase(seg, t_ns)
    }

    fn effective_phase(&self, seg: &Segment, t_ns: f64) -> f64 {
        let s = t_ns - seg.start_ns;
        let phi_frame = -self.delta * seg.start_ns * NS;
        let phi_cmd = match seg.kind {
            SegmentKind::PhaseSweep { direction, .. } => {
                seg.phi_start + winding(direction, self.delta) * TAU * self.sweep_profile.progress(s / seg.duration_ns)
            }
            _ => seg.phi_start,
        };
        phi_cmd - self.delta * s * NS + phi_frame
    }

    fn off_resonant_amplitude(seg: &Segment, t_ns: f64) -> (f64, f64) {
        let s = (t_ns - seg.start_ns) / seg.duration_ns;
        let rate = PI / (seg.duration_ns * NS);
        match seg.kind {
            SegmentKind::RampUp { omega_target } => {
                (0.5 * omega_target * (1.0 - (PI * s).cos()), 0.5 * omega_target * rate * (PI * s).sin())
            }
            SegmentKind::RampDown { omega_target } => {
                (0.5 * omega_target * (1.0 + (PI * s).cos()), -0.5 * omega_target * rate * (PI * s).sin())
            }
            SegmentKind::PhaseSweep { omega_target, .. } => (omega_target, 0.0),
            _ => (0.0, 0.0),
        }
    }

    /// Off-resonant drive strength Ω(t) (rad/s).
    pub fn off_resonant_omega_at(&self, t_ns: f64) -> f64 {
        let seg = &self.segments[self.segment_index_at(t_ns)];
        Self::off_resonant_amplitude(seg, t_ns).0
    }

    /// `|dϑ/dt| / |B|` of the off-resonant drive.
    pub fn ramp_adiabaticity_at(&self, t_ns: f64) -> f64 {
        let seg = &self.segments[self.segment_index_at(t_ns)];
        let (omega, omega_dot) = Self::off_resonant_amplitude(seg, t_ns);
        let b2 = omega * omega + self.delta * self.delta;
        if b2 == 0.0 {
            return 0.0;
        }
        self.delta.abs() * omega_dot.abs() / b2.powf(1.5)
    }

    /// Checks that the off-resonant phase is continuous wherever two
    /// off-resonant segments meet.
    pub fn check_phase_continuity(&self) -> Result<()> {
        for pair in self.segments.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.kind.is_off_resonant() && b.kind.is_off_resonant() {
                let left = self.effective_phase(a, a.end_ns());
                let right = self.effective_phase(b, b.start_ns);
                let jump = crate::linalg::wrap_angle(left - right).abs();
                if jump > 1e-9 {
                    return Err(Error::PhaseDiscontinuity { t_ns: b.start_ns, jump });
                }
            }
        }
        Ok(())
    }
}

fn winding(direction: SweepDirection, delta: f64) -> f64 {
    if delta < 0.0 {
        -direction.sign()
    } else {
        direction.sign()
    }
}

impl ControlSource for PulseSequence {
    fn control_at(&self, t_ns: f64) -> ControlSample {
        self.control_extended(t_ns, t_ns)
    }

    fn control_extended(&self, t_ns: f64, anchor_ns: f64) -> ControlSample {
        let seg = &self.segments[self.segment_index_at(anchor_ns)];
        let (omega_x, omega_y) = match seg.kind {
            SegmentKind::ResonantPulse { rotation, drag_coefficient } => {
                let (e, e_dot) = gaussian_envelope(rotation.angle(), seg.duration_ns, t_ns - seg.start_ns);
                let q = if drag_coefficient == 0.0 { 0.0 } else { -drag_coefficient * e_dot / self.alpha2 };
                let (cx, cy) = rotation.control_axis();
                let (qx, qy) = rotation.quadrature_axis();
                (e * cx + q * qx, e * cy + q * qy)
            }
            SegmentKind::Idle => (0.0, 0.0),
            _ => {
                let omega = Self::off_resonant_amplitude(seg, t_ns).0;
                let phi = self.effective_phase(seg, t_ns);
                (omega * phi.cos(), omega * phi.sin())
            }
        };
        ControlSample { t_ns, omega_x, omega_y, delta_diag: 0.0 }
    }

    fn duration_ns(&self) -> f64 {
        self.total_duration_ns
    }

    fn breakpoints_ns(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.segments.iter().map(|s| s.start_ns).collect();
        out.push(self.total_duration_ns);
        out
    }

    fn is_static(&self, t0_ns: f64, t1_ns: f64) -> bool {
        let first = self.segment_index_at(t0_ns + 1e-9);
        let seg = &self.segments[first];
        seg.kind == SegmentKind::Idle && t1_ns <= seg.end_ns() + 1e-9
    }

    /// `φ̇ sin ϑ / |B|` during phase sweeps, zero elsewhere.
    fn adiabaticity_at(&self, t_ns: f64) -> f64 {
        let seg = &self.segments[self.segment_index_at(t_ns)];
        match seg.kind {
            SegmentKind::PhaseSweep { omega_target, .. } => {
                let b = omega_target.hypot(self.delta);
                if b == 0.0 {
                    0.0
                } else {
                    let u = (t_ns - seg.start_ns) / seg.duration_ns;
                    TAU * self.sweep_profile.rate(u) / (seg.duration_ns * NS) * (omega_target / b) / b
                }
            }
            _ => 0.0,
        }
    }
}

/// Builds the echo interferometer
/// `[π/2]–[ramp↑][sweep][ramp↓]–[idle][π][idle]–[ramp↑][sweep][ramp↓]–[tomography]`.
pub fn build_interferometer_sequence(
    contour: Contour,
    a_solid: f64,
    delta: f64,
    alpha2: f64,
    tau_sweep_ns: f64,
    options: &SequenceOptions,
) -> Result<PulseSequence> {
    if !(a_solid > 0.0 && a_solid < TAU) {
        return Err(Error::SolidAngleOutOfRange(a_solid));
    }
    for (name, v) in [("tau_ns", tau_sweep_ns), ("ramp_ns", options.ramp_ns), ("pi2_ns", options.pi2_ns)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    let omega = omega_for_solid_angle(a_solid, delta)?;
    let drag = if options.drag { 1.0 } else { 0.0 };
    let pulse = |rotation| Segment::new(SegmentKind::ResonantPulse { rotation, drag_coefficient: drag }, options.pi2_ns);
    let lobe = |direction| {
        [
            Segment::new(SegmentKind::RampUp { omega_target: omega }, options.ramp_ns),
            Segment::new(SegmentKind::PhaseSweep { omega_target: omega, direction }, tau_sweep_ns),
            Segment::new(SegmentKind::RampDown { omega_target: omega }, options.ramp_ns),
        ]
    };
    let natural = 3.0 * options.pi2_ns + 2.0 * (2.0 * options.ramp_ns + tau_sweep_ns);
    let padding = if natural > options.budget_ns {
        log::warn!(
            "sequence needs {natural:.1} ns, more than the {:.1} ns budget; no idle padding",
            options.budget_ns
        );
        0.0
    } else {
        (options.budget_ns - natural) / 2.0
    };
    let (first, second) = contour.directions();
    let mut segments = vec![pulse(Rotation::YHalfPi)];
    segments.extend(lobe(first));
    if padding > 0.0 {
        segments.push(Segment::new(SegmentKind::Idle, padding));
    }
    segments.push(pulse(Rotation::XPi));
    if padding > 0.0 {
        segments.push(Segment::new(SegmentKind::Idle, padding));
    }
    segments.extend(lobe(second));
    segments.push(pulse(options.tomography));
    let mut seq = PulseSequence::from_segments(segments, delta, alpha2)?;
    seq.contour = Some(contour);
    seq.sweep_profile = options.sweep_profile;
    Ok(seq)
}

/// A sequence sampled on a uniform grid, interpolated linearly.
#[derive(Clone, Debug)]
pub struct SampledControls {
    pub dt_ns: f64,
    pub samples: Vec<ControlSample>,
    pub adiabaticity: Vec<f64>,
    breakpoints: Vec<f64>,
}

impl SampledControls {
    fn lerp(&self, t_ns: f64) -> (usize, f64) {
        let x = (t_ns / self.dt_ns).clamp(0.0, (self.samples.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.samples.len().saturating_sub(2));
        (i, x - i as f64)
    }
}

impl ControlSource for SampledControls {
    fn control_at(&self, t_ns: f64) -> ControlSample {
        if self.samples.len() == 1 {
            return ControlSample { t_ns, ..self.samples[0] };
        }
        let (i, w) = self.lerp(t_ns);
        let (a, b) = (&self.samples[i], &self.samples[i + 1]);
        ControlSample {
            t_ns,
            omega_x: a.omega_x + w * (b.omega_x - a.omega_x),
            omega_y: a.omega_y + w * (b.omega_y - a.omega_y),
            delta_diag: a.delta_diag + w * (b.delta_diag - a.delta_diag),
        }
    }

    fn duration_ns(&self) -> f64 {
        *self.breakpoints.last().unwrap_or(&0.0)
    }

    fn breakpoints_ns(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }

    fn adiabaticity_at(&self, t_ns: f64) -> f64 {
        if self.adiabaticity.len() == 1 {
            return self.adiabaticity[0];
        }
        let (i, w) = self.lerp(t_ns);
        self.adiabaticity[i] + w * (self.adiabaticity[i + 1] - self.adiabaticity[i])
    }
}

/// Samples `seq` every `dt_ps` picoseconds, which must divide every segment.
pub fn sample_controls(seq: &PulseSequence, dt_ps: f64) -> Result<SampledControls> {
    if !(dt_ps > 0.0 && dt_ps.is_finite()) {
        return Err(Error::Config(format!("dt_ps must be positive, got {dt_ps}")));
    }
    let dt_ns = dt_ps * 1e-3;
    for seg in &seq.segments {
        let m = seg.duration_ns / dt_ns;
        if (m - m.round()).abs() > 1e-3 || m.round() < 1.0 {
            return Err(Error::SampleGrid { dt_ps, duration_ns: seg.duration_ns });
        }
    }
    seq.check_phase_continuity()?;
    let n = (seq.total_duration_ns / dt_ns).round() as usize;
    let mut samples = Vec::with_capacity(n + 1);
    let mut adiabaticity = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * dt_ns;
        samples.push(seq.control_at(t));
        adiabaticity.push(seq.adiabaticity_at(t));
    }
    Ok(SampledControls { dt_ns, samples, adiabaticity, breakpoints: seq.breakpoints_ns() })
}

impl fmt::Display for PulseSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let contour = self.contour.map_or_else(|| "none".to_string(), |c| c.to_string());
        writeln!(
            f,
            "# contour {contour} delta_mhz {:.6} alpha2_mhz {:.6} tau_ns {:.6} total_ns {:.6}",
            angular_to_mhz(self.delta),
            angular_to_mhz(self.alpha2),
            self.tau_sweep_ns,
            self.total_duration_ns
        )?;
        for seg in &self.segments {
            write!(f, "{} {:.6}", seg.kind.name(), seg.duration_ns)?;
            match seg.kind {
                SegmentKind::RampUp { omega_target } | SegmentKind::RampDown { omega_target } => {
                    write!(f, " omega_mhz={:.6}", angular_to_mhz(omega_target))?
                }
                SegmentKind::PhaseSweep { omega_target, direction } => write!(
                    f,
                    " omega_mhz={:.6} direction={:+}",
                    angular_to_mhz(omega_target),
                    direction.sign() as i32
                )?,
                SegmentKind::ResonantPulse { rotation, drag_coefficient } => {
                    write!(f, " rotation={} drag={:.6}", rotation.name(), drag_coefficient)?
                }
                SegmentKind::Idle => {}
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Mean adiabaticity `2π sin ϑ / (τ|B|)` of a uniform sweep.
pub fn sweep_adiabaticity(a_solid: f64, delta: f64, tau_ns: f64) -> Result<f64> {
    let omega = omega_for_solid_angle(a_solid, delta)?;
    let field = effective_field(&DriveConfig::new(omega, 0.0, delta)?)?;
    Ok(TAU * field.theta.sin() / (tau_ns * NS * field.magnitude()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::mhz_to_angular;
    use approx::assert_relative_eq;

    fn reference(contour: Contour) -> PulseSequence {
        build_interferometer_sequence(
            contour,
            PI / 4.0,
            mhz_to_angular(-45.0),
            mhz_to_angular(-423.0),
            100.0,
            &SequenceOptions::default(),
        )
        .unwrap()
    }

    fn simpson(values: &[f64], h: f64) -> f64 {
        let n = values.len() - 1;
        assert!(n % 2 == 0);
        let inner: f64 = (1..n).map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * values[i]).sum();
        h / 3.0 * (values[0] + values[n] + inner)
    }

    #[test]
    fn contour_parsing_and_display() {
        for c in Contour::ALL {
            assert_eq!(c.to_string().parse::<Contour>().unwrap(), c);
        }
        assert_eq!("\u{2212}+".parse::<Contour>().unwrap(), Contour::MinusPlus);
        assert!("+0".parse::<Contour>().is_err());
        assert_eq!(Contour::MinusPlus.phase_sign(), 1.0);
        assert_eq!(Contour::PlusMinus.phase_sign(), -1.0);
        assert_eq!(Contour::PlusPlus.phase_sign(), 0.0);
    }

    #[test]
    fn layout_and_directions() {
        let seq = reference(Contour::MinusPlus);
        let kinds: Vec<&str> = seq.segments.iter().map(|s| s.kind.name()).collect();
        assert_eq!(
            kinds,
            [
                "resonant_pulse", "ramp_up", "phase_sweep", "ramp_down", "idle", "resonant_pulse", "idle",
                "ramp_up", "phase_sweep", "ramp_down", "resonant_pulse"
            ]
        );
        let dirs: Vec<f64> = seq
            .segments
            .iter()
            .filter_map(|s| match s.kind {
                SegmentKind::PhaseSweep { direction, .. } => Some(direction.sign()),
                _ => None,
            })
            .collect();
        assert_eq!(dirs, [-1.0, 1.0]);
        let rotations: Vec<Rotation> = seq
            .segments
            .iter()
            .filter_map(|s| match s.kind {
                SegmentKind::ResonantPulse { rotation, .. } => Some(rotation),
                _ => None,
            })
            .collect();
        assert_eq!(rotations, [Rotation::YHalfPi, Rotation::XPi, Rotation::TomographyY]);
        let sum: f64 = seq.segments.iter().map(|s| s.duration_ns).sum();
        assert_relative_eq!(seq.total_duration_ns, sum, max_relative = 1e-15);
        assert_relative_eq!(seq.total_duration_ns, 700.0, max_relative = 1e-12);
        // echo sits midway between the two loops
        let idle: Vec<f64> = seq.segments.iter().filter(|s| s.kind == SegmentKind::Idle).map(|s| s.duration_ns).collect();
        assert_eq!(idle.len(), 2);
        assert_eq!(idle[0], idle[1]);
    }

    #[test]
    fn over_budget_sequence_is_built_without_padding() {
        let seq = build_interferometer_sequence(
            Contour::MinusPlus,
            PI / 4.0,
            mhz_to_angular(-45.0),
            mhz_to_angular(-423.0),
            400.0,
            &SequenceOptions::default(),
        )
        .unwrap();
        assert!(seq.segments.iter().all(|s| s.kind != SegmentKind::Idle));
        assert_relative_eq!(seq.total_duration_ns, 3.0 * 12.0 + 2.0 * (80.0 + 400.0));
    }

    #[test]
    fn same_direction_contours_mirror_each_other() {
        let pp = reference(Contour::PlusPlus);
        let mm = reference(Contour::MinusMinus);
        for (a, b) in pp.segments.iter().zip(&mm.segments) {
            assert_eq!(a.start_ns, b.start_ns);
            assert_eq!(a.duration_ns, b.duration_ns);
        }
        // the commanded sweep phase is mirrored; the frame phase is shared
        let s = &pp.segments[2];
        let t = s.start_ns + 0.3 * s.duration_ns;
        let frame = -pp.delta * t * NS;
        let a = crate::linalg::wrap_angle(pp.off_resonant_phase_at(t) - frame);
        let b = crate::linalg::wrap_angle(mm.off_resonant_phase_at(t) - frame);
        assert_relative_eq!(a, -b, epsilon = 1e-9);
    }

    #[test]
    fn swapped_contour_differs_only_in_sweep_sign() {
        let mp = reference(Contour::MinusPlus);
        let pm = reference(Contour::PlusMinus);
        for k in 0..7000 {
            let t = k as f64 * 0.1;
            let (a, b) = (mp.control_at(t), pm.control_at(t));
            let seg = &mp.segments[mp.segment_index_at(t)];
            if matches!(seg.kind, SegmentKind::PhaseSweep { .. }) {
                assert_relative_eq!(a.omega_x.hypot(a.omega_y), b.omega_x.hypot(b.omega_y), max_relative = 1e-12);
                let frame = -mp.delta * t * NS;
                let pa = crate::linalg::wrap_angle(mp.off_resonant_phase_at(t) - frame);
                let pb = crate::linalg::wrap_angle(pm.off_resonant_phase_at(t) - frame);
                assert!(crate::linalg::wrap_angle(pa + pb).abs() < 1e-9);
            } else {
                assert_eq!(a, b, "t = {t}");
            }
        }
    }

    #[test]
    fn sweep_winds_full_turn() {
        let seq = reference(Contour::MinusPlus);
        for seg in seq.segments.iter().filter(|s| matches!(s.kind, SegmentKind::PhaseSweep { .. })) {
            let frame = |t: f64| -seq.delta * t * NS;
            let end = seq.effective_phase(seg, seg.end_ns()) - frame(seg.end_ns());
            let start = seq.effective_phase(seg, seg.start_ns) - frame(seg.start_ns);
            assert_relative_eq!((end - start).abs(), TAU, max_relative = 1e-14);
        }
    }

    #[test]
    fn off_resonant_drive_vanishes_at_pulse_edges() {
        let seq = reference(Contour::MinusPlus);
        let peak = omega_for_solid_angle(PI / 4.0, seq.delta).unwrap();
        for (i, seg) in seq.segments.iter().enumerate() {
            if matches!(seg.kind, SegmentKind::ResonantPulse { .. }) {
                if i > 0 {
                    let prev = &seq.segments[i - 1];
                    assert!(PulseSequence::off_resonant_amplitude(prev, prev.end_ns()).0 <= 1e-12 * peak);
                }
                if let Some(next) = seq.segments.get(i + 1) {
                    assert!(PulseSequence::off_resonant_amplitude(next, next.start_ns).0 <= 1e-12 * peak);
                }
            }
        }
    }

    #[test]
    fn resonant_pulse_areas() {
        for rotation in [Rotation::YHalfPi, Rotation::XPi, Rotation::TomographyX] {
            let seq = PulseSequence::from_segments(
                vec![Segment::new(SegmentKind::ResonantPulse { rotation, drag_coefficient: 0.0 }, 12.0)],
                0.0,
                mhz_to_angular(-423.0),
            )
            .unwrap();
            let sampled = sample_controls(&seq, 10.0).unwrap();
            let (cx, cy) = rotation.control_axis();
            let along: Vec<f64> = sampled.samples.iter().map(|s| s.omega_x * cx + s.omega_y * cy).collect();
            let area = simpson(&along, 10.0e-12);
            assert!((area - rotation.angle()).abs() < 1e-6, "{rotation:?}: {area}");
            assert!(along[0].abs() < 1e-3 && along.last().unwrap().abs() < 1e-3);
        }
    }

    #[test]
    fn gaussian_derivative_matches_finite_difference() {
        let h = 1e-4;
        for s in [1.0, 3.7, 6.0, 9.2] {
            let (_, d) = gaussian_envelope(PI, 12.0, s);
            let fd = (gaussian_envelope(PI, 12.0, s + h).0 - gaussian_envelope(PI, 12.0, s - h).0) / (2.0 * h * NS);
            assert_relative_eq!(d, fd, max_relative = 1e-6, epsilon = 1.0);
        }
    }

    #[test]
    fn drag_constant_interior_has_no_quadrature() {
        let out = drag_envelope(&[1e8; 50], 0.01, mhz_to_angular(-423.0)).unwrap();
        assert!(out[1..49].iter().all(|&(_, q)| q == 0.0));
    }

    #[test]
    fn drag_quadrature_is_odd_scaled_derivative() {
        let alpha2 = mhz_to_angular(-423.0);
        let n = 1201;
        let base: Vec<f64> = (0..n).map(|i| gaussian_envelope(PI, 12.0, i as f64 * 0.01).0).collect();
        let out = drag_envelope(&base, 0.01, alpha2).unwrap();
        let peak = out.iter().map(|p| p.1.abs()).fold(0.0, f64::max);
        for i in 1..n - 1 {
            assert_relative_eq!(out[i].1, -out[n - 1 - i].1, epsilon = 1e-9 * peak);
            let exact = -gaussian_envelope(PI, 12.0, i as f64 * 0.01).1 / alpha2;
            assert!((out[i].1 - exact).abs() < 1e-3 * peak);
        }
        assert!(drag_envelope(&base, 0.01, 0.0).is_err());
    }

    #[test]
    fn drag_quadrature_in_sequence_is_orthogonal() {
        let alpha2 = mhz_to_angular(-423.0);
        let seq = PulseSequence::from_segments(
            vec![Segment::new(SegmentKind::ResonantPulse { rotation: Rotation::XPi, drag_coefficient: 1.0 }, 12.0)],
            0.0,
            alpha2,
        )
        .unwrap();
        let c = seq.control_at(3.0);
        let (e, d) = gaussian_envelope(PI, 12.0, 3.0);
        assert_relative_eq!(c.omega_x, e, max_relative = 1e-14);
        assert_relative_eq!(c.omega_y, d / alpha2, max_relative = 1e-14);
        assert!(PulseSequence::from_segments(seq.segments.clone(), 0.0, 0.0).is_err());
    }

    #[test]
    fn sampling_checks_grid() {
        let seq = reference(Contour::MinusPlus);
        assert!(matches!(sample_controls(&seq, 7.0), Err(Error::SampleGrid { .. })));
        let sampled = sample_controls(&seq, 10.0).unwrap();
        assert_eq!(sampled.samples.len(), 70001);
        let mid = sampled.control_at(123.455);
        let exact = seq.control_at(123.455);
        assert!((mid.omega_x - exact.omega_x).abs() < 1e-3 * 2e8);
        assert_eq!(sampled.breakpoints_ns(), seq.breakpoints_ns());
    }

    #[test]
    fn phase_jump_is_detected() {
        let mut seq = reference(Contour::MinusPlus);
        seq.segments[2].phi_start += 0.1;
        assert!(matches!(sample_controls(&seq, 10.0), Err(Error::PhaseDiscontinuity { .. })));
    }

    #[test]
    fn ramps_are_adiabatic_in_the_adiabatic_regime() {
        let worst = |a: f64, delta_mhz: f64, ramp_ns: f64| {
            let options = SequenceOptions { ramp_ns, ..SequenceOptions::default() };
            let seq = build_interferometer_sequence(
                Contour::MinusPlus,
                a * PI,
                mhz_to_angular(delta_mhz),
                mhz_to_angular(-423.0),
                100.0,
                &options,
            )
            .unwrap();
            let n = (seq.total_duration_ns * 10.0) as usize;
            (0..n).map(|k| seq.ramp_adiabaticity_at(k as f64 * 0.1)).fold(0.0, f64::max)
        };
        assert!(worst(0.25, -45.0, 40.0) < 0.1);
        assert!(worst(0.25, -35.0, 40.0) < 0.1);
        for a in [0.25, 0.75, 1.25] {
            assert!(worst(a, -45.0, 100.0) < 0.1, "A = {a}π");
        }
        // short ramps at strong drive leave the adiabatic regime
        assert!(worst(1.25, -35.0, 40.0) > 0.2);
    }

    #[test]
    fn sweep_adiabaticity_values() {
        let d = mhz_to_angular(-45.0);
        let a50 = sweep_adiabaticity(PI / 4.0, d, 50.0).unwrap();
        let a100 = sweep_adiabaticity(PI / 4.0, d, 100.0).unwrap();
        assert_relative_eq!(a50, 2.0 * a100, max_relative = 1e-14);
        // cos ϑ = 7/8 → sin ϑ = √15/8, |B| = 8|Δ|/7
        let expected = TAU * (15f64.sqrt() / 8.0) / (50e-9 * d.abs() * 8.0 / 7.0);
        assert_relative_eq!(a50, expected, max_relative = 1e-12);
        let seq = reference(Contour::MinusPlus);
        let t = seq.segments[2].start_ns + 10.0;
        assert_relative_eq!(seq.adiabaticity_at(t), a100, max_relative = 1e-12);
        assert_eq!(seq.adiabaticity_at(1.0), 0.0);
    }

    #[test]
    fn text_form_lists_one_segment_per_line() {
        let seq = reference(Contour::MinusPlus);
        let text = seq.to_string();
        assert_eq!(text.lines().count(), seq.segments.len() + 1);
        assert!(text.lines().nth(1).unwrap().starts_with("resonant_pulse 12.000000 rotation=y_half_pi"));
        assert!(text.contains("direction=-1"));
    }
}
