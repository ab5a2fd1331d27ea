//! Time-domain propagation of pure states and density operators.
//!
//! Pure states use the fourth-order commutator-free Magnus step at the two
//! Gauss–Legendre nodes, which is unitary to rounding. Density operators use a
//! Strang splitting of the coherent and dissipative parts, lifted to fourth
//! order by the Yoshida triple jump. Static stretches (idle segments) reuse a
//! single cached step map.

use std::io::Write;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{expm, hermitian_eigen, hermiticity_defect, CMat, CVec, I, ZERO};
use crate::model::{effective_field, fill_hamiltonian, DeviceParams, DriveConfig};
use crate::sequence::ControlSource;
use crate::units::{NS, US};

/// Bound on |‖ψ‖ − 1| after a unitary propagation.
pub const NORM_DRIFT_BOUND: f64 = 1e-8;
pub const TRACE_BOUND: f64 = 1e-8;
pub const POSITIVITY_BOUND: f64 = 1e-8;
pub const HERMITICITY_BOUND: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState {
    pub amplitudes: CVec,
}

impl QuantumState {
    pub fn new(amplitudes: CVec) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidState(format!("state norm {norm} differs from 1")));
        }
        Ok(QuantumState { amplitudes })
    }

    pub fn from_slice(amplitudes: &[Complex64]) -> Result<Self> {
        Self::new(CVec::from_column_slice(amplitudes))
    }

    pub fn basis(n: usize, level: usize) -> Self {
        let mut amplitudes = CVec::zeros(n);
        amplitudes[level] = Complex64::new(1.0, 0.0);
        QuantumState { amplitudes }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap_sqr(&self, other: &QuantumState) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm_sqr()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator {
    pub matrix: CMat,
}

impl DensityOperator {
    /// Checks Hermiticity, unit trace and positivity.
    pub fn new(matrix: CMat) -> Result<Self> {
        let rho = DensityOperator { matrix };
        rho.validate(1e-9, 1e-9)?;
        Ok(rho)
    }

    pub fn from_pure(state: &QuantumState) -> Self {
        DensityOperator { matrix: &state.amplitudes * state.amplitudes.adjoint() }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        DensityOperator { matrix: CMat::identity(n, n) / Complex64::from(n as f64) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (values, _) = hermitian_eigen(&self.matrix);
        values[0]
    }

    fn validate(&self, trace_tol: f64, positivity_tol: f64) -> Result<()> {
        let m = &self.matrix;
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::InvalidState("density operator must be square".into()));
        }
        let defect = (0..m.nrows())
            .flat_map(|r| (0..m.ncols()).map(move |c| (r, c)))
            .map(|(r, c)| (m[(r, c)] - m[(c, r)].conj()).norm())
            .fold(0.0, f64::max);
        if defect > HERMITICITY_BOUND {
            return Err(Error::InvalidState(format!("Hermiticity defect {defect:e}")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > trace_tol {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let min = self.min_eigenvalue();
        if min < -positivity_tol {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(())
    }
}

/// Level populations and qubit-subspace Bloch components.
pub trait Populations {
    fn populations(&self) -> Vec<f64>;
    /// `(2 Re ρ₁₀, 2 Im ρ₁₀, ρ₀₀ − ρ₁₁)`, not renormalised.
    fn subspace_bloch(&self) -> [f64; 3];
}

impl Populations for QuantumState {
    fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|z| z.norm_sqr()).collect()
    }

    fn subspace_bloch(&self) -> [f64; 3] {
        let (c0, c1) = (self.amplitudes[0], self.amplitudes[1]);
        let rho10 = c1 * c0.conj();
        [2.0 * rho10.re, 2.0 * rho10.im, c0.norm_sqr() - c1.norm_sqr()]
    }
}

impl Populations for DensityOperator {
    fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.matrix[(j, j)].re).collect()
    }

    fn subspace_bloch(&self) -> [f64; 3] {
        let rho10 = self.matrix[(1, 0)];
        [2.0 * rho10.re, 2.0 * rho10.im, self.matrix[(0, 0)].re - self.matrix[(1, 1)].re]
    }
}

/// Population outside `{|0⟩, |1⟩}`.
pub fn leakage_population<P: Populations + ?Sized>(state: &P) -> f64 {
    state.populations().iter().skip(2).sum()
}

/// Which amplitude the torus angles χ are measured against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseReference {
    SecondExcited,
    /// `⟨2|ψ⟩` vanished; χ₁ = 0 and χ₂ is relative to `⟨0|ψ⟩`.
    GroundFallback,
}

/// `ψ = e^{iχ₁} sinβ₁ cosβ₂ |0⟩ + e^{iχ₂} sinβ₁ sinβ₂ |1⟩ + cosβ₁ |2⟩` up to a
/// global phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThreeLevelCoords {
    pub beta1: f64,
    pub beta2: f64,
    pub chi1: f64,
    pub chi2: f64,
    pub reference: PhaseReference,
}

impl ThreeLevelCoords {
    pub fn to_state(&self) -> QuantumState {
        let (s1, c1) = self.beta1.sin_cos();
        let (s2, c2) = self.beta2.sin_cos();
        let amplitudes = CVec::from_vec(vec![
            Complex64::from_polar(s1 * c2, self.chi1),
            Complex64::from_polar(s1 * s2, self.chi2),
            Complex64::new(c1, 0.0),
        ]);
        QuantumState { amplitudes }
    }
}

const AMPLITUDE_FLOOR: f64 = 1e-12;

pub fn three_level_coords(state: &QuantumState) -> Result<ThreeLevelCoords> {
    if state.dim() != 3 {
        return Err(Error::Config(format!("three-level coordinates need 3 levels, got {}", state.dim())));
    }
    let a = &state.amplitudes;
    let beta1 = a[2].norm().min(1.0).acos();
    let beta2 = a[1].norm().atan2(a[0].norm());
    let phase = |z: Complex64, reference: Complex64| {
        if z.norm() < AMPLITUDE_FLOOR {
            0.0
        } else {
            (z * reference.conj()).arg().rem_euclid(std::f64::consts::TAU)
        }
    };
    if a[2].norm() < AMPLITUDE_FLOOR {
        log::debug!("|2⟩ amplitude vanishes; torus phases taken relative to |0⟩");
        return Ok(ThreeLevelCoords {
            beta1,
            beta2,
            chi1: 0.0,
            chi2: phase(a[1], a[0]),
            reference: PhaseReference::GroundFallback,
        });
    }
    Ok(ThreeLevelCoords {
        beta1,
        beta2,
        chi1: phase(a[0], a[2]),
        chi2: phase(a[1], a[2]),
        reference: PhaseReference::SecondExcited,
    })
}

/// `φ̇ sin ϑ / |B|` for a drive whose phase advances at `phi_rate` (rad/s).
pub fn adiabaticity_parameter(drive: &DriveConfig, phi_rate: f64) -> Result<f64> {
    let field = effective_field(drive)?;
    Ok(phi_rate.abs() * field.theta.sin() / field.magnitude())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryRecord {
    pub times_ns: Vec<f64>,
    pub sigma_x: Vec<f64>,
    pub sigma_y: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub p2: Vec<f64>,
    pub coords: Option<Vec<ThreeLevelCoords>>,
    pub a_param: Vec<f64>,
}

impl TrajectoryRecord {
    fn push<P: Populations>(&mut self, t_ns: f64, state: &P, a: f64) {
        let [sx, sy, sz] = state.subspace_bloch();
        self.times_ns.push(t_ns);
        self.sigma_x.push(sx);
        self.sigma_y.push(sy);
        self.sigma_z.push(sz);
        self.p2.push(leakage_population(state).clamp(0.0, 1.0));
        self.a_param.push(a);
    }

    pub fn len(&self) -> usize {
        self.times_ns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ns.is_empty()
    }

    pub fn max_leakage(&self) -> f64 {
        self.p2.iter().copied().fold(0.0, f64::max)
    }

    /// Appends `other`, dropping its first point when it repeats our last time.
    pub fn extend(&mut self, other: TrajectoryRecord) {
        let skip = usize::from(matches!((self.times_ns.last(), other.times_ns.first()), (Some(a), Some(b)) if a == b));
        self.times_ns.extend(other.times_ns.into_iter().skip(skip));
        self.sigma_x.extend(other.sigma_x.into_iter().skip(skip));
        self.sigma_y.extend(other.sigma_y.into_iter().skip(skip));
        self.sigma_z.extend(other.sigma_z.into_iter().skip(skip));
        self.p2.extend(other.p2.into_iter().skip(skip));
        self.a_param.extend(other.a_param.into_iter().skip(skip));
        if let (Some(mine), Some(theirs)) = (self.coords.as_mut(), other.coords) {
            mine.extend(theirs.into_iter().skip(skip));
        }
    }

    /// Columns `t_ns, sx, sy, sz, p2, a_param`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["t_ns", "sx", "sy", "sz", "p2", "a_param"]).map_err(io)?;
        for i in 0..self.len() {
            let row = [self.times_ns[i], self.sigma_x[i], self.sigma_y[i], self.sigma_z[i], self.p2[i], self.a_param[i]];
            w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationOptions {
    pub dt_ps: f64,
    /// Spacing of recorded points; zero records only the endpoints.
    pub record_interval_ns: f64,
    /// Record three-level coordinates (three-level devices only).
    pub record_coords: bool,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions { dt_ps: 10.0, record_interval_ns: 1.0, record_coords: false }
    }
}

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // √3/6

/// Builds `H(t)` for the control at `t_ns`.
struct HamiltonianBuilder<'a, C: ?Sized> {
    controls: &'a C,
    anharmonicities: Vec<f64>,
    diag: Vec<f64>,
}

impl<'a, C: ControlSource + ?Sized> HamiltonianBuilder<'a, C> {
    fn new(controls: &'a C, params: &DeviceParams) -> Self {
        HamiltonianBuilder { controls, anharmonicities: params.anharmonicities.clone(), diag: params.anharmonicities.clone() }
    }

    fn fill(&mut self, out: &mut CMat, t_ns: f64, anchor_ns: f64) {
        let c = self.controls.control_extended(t_ns, anchor_ns);
        for (j, (d, a)) in self.diag.iter_mut().zip(&self.anharmonicities).enumerate() {
            *d = a + j as f64 * c.delta_diag;
        }
        fill_hamiltonian(out, &self.diag, Complex64::new(c.omega_x, c.omega_y));
    }

    /// Generator `Ω` with `U(t, t+h) ≈ exp(Ω)`, from the two-node commutator
    /// Magnus expansion. `h_ns` may be negative.
    /// Controls come from the piece containing `anchor_ns`, continued past its
    /// ends when a node falls outside.
    fn magnus(&mut self, t_ns: f64, h_ns: f64, anchor_ns: f64, h1: &mut CMat, h2: &mut CMat) -> CMat {
        self.fill(h1, t_ns + h_ns * (0.5 - GAUSS_OFFSET), anchor_ns);
        self.fill(h2, t_ns + h_ns * (0.5 + GAUSS_OFFSET), anchor_ns);
        let h = h_ns * NS;
        let comm = &*h2 * &*h1 - &*h1 * &*h2;
        (&*h1 + &*h2) * Complex64::new(0.0, -h / 2.0) - comm * Complex64::from(3f64.sqrt() * h * h / 12.0)
    }
}

/// `exp(Ω)v` by a truncated Taylor series on `Ω/m`, applied `m` times.
fn expm_apply(omega: &CMat, v: &CVec) -> CVec {
    let norm = omega.iter().map(|z| z.norm()).fold(0.0, f64::max) * omega.nrows() as f64;
    let m = (norm / 0.5).ceil().max(1.0) as usize;
    let scaled = omega / Complex64::from(m as f64);
    let mut out = v.clone();
    for _ in 0..m {
        let mut term = out.clone();
        let mut acc = out.clone();
        for k in 1..=20 {
            term = &scaled * &term / Complex64::from(k as f64);
            acc += &term;
            if term.norm() <= 1e-18 * acc.norm() {
                break;
            }
        }
        out = acc;
    }
    out
}

/// Integration intervals between consecutive breakpoints inside `[t0, t1]`.
fn intervals<C: ControlSource + ?Sized>(controls: &C, t0: f64, t1: f64) -> Vec<(f64, f64)> {
    let mut points: Vec<f64> = vec![t0];
    points.extend(controls.breakpoints_ns().into_iter().filter(|&b| b > t0 + 1e-9 && b < t1 - 1e-9));
    points.push(t1);
    points.windows(2).map(|w| (w[0], w[1])).collect()
}

fn step_count(length_ns: f64, dt_ns: f64) -> usize {
    ((length_ns / dt_ns) - 1e-9).ceil().max(1.0) as usize
}

fn check_dt(dt_ps: f64) -> Result<f64> {
    if !(dt_ps > 0.0 && dt_ps <= 20.0) {
        return Err(Error::Config(format!("dt_ps must lie in (0, 20], got {dt_ps}")));
    }
    Ok(dt_ps * 1e-3)
}

struct Recorder {
    interval: f64,
    next: f64,
    coords: bool,
    record: TrajectoryRecord,
}

impl Recorder {
    fn new(t0: f64, options: &PropagationOptions, coords: bool) -> Self {
        Recorder {
            interval: options.record_interval_ns,
            next: t0,
            coords,
            record: TrajectoryRecord { coords: coords.then(Vec::new), ..Default::default() },
        }
    }

    fn due(&self, t: f64) -> bool {
        self.interval > 0.0 && t >= self.next - 1e-9
    }

    fn push<P: Populations>(&mut self, t: f64, state: &P, a: f64, pure: Option<&QuantumState>) -> Result<()> {
        self.record.push(t, state, a);
        if self.coords {
            if let (Some(list), Some(psi)) = (self.record.coords.as_mut(), pure) {
                list.push(three_level_coords(psi)?);
            }
        }
        if self.interval > 0.0 {
            while self.next <= t + 1e-9 {
                self.next += self.interval;
            }
        }
        Ok(())
    }
}

pub fn schrodinger_propagate<C: ControlSource + ?Sized>(
    controls: &C,
    params: &DeviceParams,
    psi0: &QuantumState,
    options: &PropagationOptions,
) -> Result<(QuantumState, TrajectoryRecord)> {
    schrodinger_propagate_span(controls, params, psi0, 0.0, controls.duration_ns(), options)
}

/// Integrates `iψ̇ = H(t)ψ` from `t0_ns` to `t1_ns`.
pub fn schrodinger_propagate_span<C: ControlSource + ?Sized>(
    controls: &C,
    params: &DeviceParams,
    psi0: &QuantumState,
    t0_ns: f64,
    t1_ns: f64,
    options: &PropagationOptions,
) -> Result<(QuantumState, TrajectoryRecord)> {
    params.validate()?;
    let dt = check_dt(options.dt_ps)?;
    let n = params.n_levels;
    if psi0.dim() != n {
        return Err(Error::Config(format!("state has {} levels, device has {n}", psi0.dim())));
    }
    let record_coords = options.record_coords && n == 3;
    let mut builder = HamiltonianBuilder::new(controls, params);
    let (mut h1, mut h2) = (CMat::zeros(n, n), CMat::zeros(n, n));
    let mut psi = psi0.amplitudes.clone();
    let mut rec = Recorder::new(t0_ns, options, record_coords);
    let snapshot = |v: &CVec| QuantumState { amplitudes: v.clone() };
    rec.push(t0_ns, &snapshot(&psi), controls.adiabaticity_at(t0_ns), Some(&snapshot(&psi)))?;
    for (a, b) in intervals(controls, t0_ns, t1_ns) {
        let steps = step_count(b - a, dt);
        let h = (b - a) / steps as f64;
        let mid = 0.5 * (a + b);
        let cached = controls
            .is_static(a, b)
            .then(|| expm(&builder.magnus(a, h, mid, &mut h1, &mut h2)));
        for k in 0..steps {
            let t = a + k as f64 * h;
            psi = match &cached {
                Some(u) => u * &psi,
                None => expm_apply(&builder.magnus(t, h, mid, &mut h1, &mut h2), &psi),
            };
            let t_end = if k + 1 == steps { b } else { t + h };
            if rec.due(t_end) {
                let s = snapshot(&psi);
                rec.push(t_end, &s, controls.adiabaticity_at(t_end), Some(&s))?;
            }
        }
    }
    let last = rec.record.times_ns.last().copied();
    if last != Some(t1_ns) {
        let s = snapshot(&psi);
        rec.push(t1_ns, &s, controls.adiabaticity_at(t1_ns), Some(&s))?;
    }
    let drift = (psi.norm() - 1.0).abs();
    if drift > NORM_DRIFT_BOUND {
        return Err(Error::StepSize { drift, bound: NORM_DRIFT_BOUND });
    }
    Ok((QuantumState { amplitudes: psi }, rec.record))
}

/// Lowering operator with harmonic `√j` matrix elements.
fn lowering(n: usize) -> CMat {
    CMat::from_fn(n, n, |r, c| if c == r + 1 { Complex64::from((c as f64).sqrt()) } else { ZERO })
}

/// `(L̄ ⊗ L) − ½(I ⊗ L†L) − ½((L†L)ᵀ ⊗ I)` acting on column-stacked ρ.
fn dissipator_superoperator(l: &CMat) -> CMat {
    let n = l.nrows();
    let id = CMat::identity(n, n);
    let ldl = l.adjoint() * l;
    let half = Complex64::from(0.5);
    l.map(|z| z.conj()).kronecker(l) - id.kronecker(&ldl) * half - ldl.transpose().kronecker(&id) * half
}

/// Decay and dephasing rates (1/s) from the device coherence times.
pub fn decoherence_rates(params: &DeviceParams) -> Result<(f64, f64)> {
    let (t1, t2) = match (params.t1_us, params.t2_star_us) {
        (Some(t1), Some(t2)) => (t1, t2),
        _ => return Err(Error::Config("master-equation propagation needs t1_us and t2_star_us".into())),
    };
    let gamma1 = 1.0 / (t1 * US);
    let gamma_phi = 1.0 / (t2 * US) - gamma1 / 2.0;
    if !(t1 > 0.0 && t2 > 0.0) || gamma_phi < 0.0 {
        return Err(Error::UnphysicalCoherence { t1_us: t1, t2_star_us: t2 });
    }
    Ok((gamma1, gamma_phi))
}

/// Dissipative part of the Liouvillian for `L₁ = √Γ₁ a`, `L₂ = √(2Γ_φ) N`.
pub fn dissipator(params: &DeviceParams) -> Result<CMat> {
    let (gamma1, gamma_phi) = decoherence_rates(params)?;
    let n = params.n_levels;
    let l1 = lowering(n) * Complex64::from(gamma1.sqrt());
    let number = CMat::from_fn(n, n, |r, c| if r == c { Complex64::from(r as f64) } else { ZERO });
    let l2 = number * Complex64::from((2.0 * gamma_phi).sqrt());
    Ok(dissipator_superoperator(&l1) + dissipator_superoperator(&l2))
}

/// Coherent Liouvillian `−i(I ⊗ H − Hᵀ ⊗ I)`.
fn hamiltonian_superoperator(h: &CMat) -> CMat {
    let n = h.nrows();
    let id = CMat::identity(n, n);
    (id.kronecker(h) - h.transpose().kronecker(&id)) * (-I)
}

fn apply_super(map: &CMat, rho: &mut CMat) {
    let n = rho.nrows();
    let v = CVec::from_column_slice(rho.as_slice());
    let out = map * v;
    rho.copy_from(&CMat::from_column_slice(n, n, out.as_slice()));
}

const YOSHIDA_W1: f64 = 1.351_207_191_959_657_6; // 1/(2 − 2^{1/3})
const YOSHIDA_W0: f64 = 1.0 - 2.0 * YOSHIDA_W1;

pub fn lindblad_propagate<C: ControlSource + ?Sized>(
    controls: &C,
    params: &DeviceParams,
    rho0: &DensityOperator,
    options: &PropagationOptions,
) -> Result<(DensityOperator, TrajectoryRecord)> {
    lindblad_propagate_span(controls, params, rho0, 0.0, controls.duration_ns(), options)
}

/// Integrates `ρ̇ = −i[H, ρ] + Σ D[L_m]ρ` from `t0_ns` to `t1_ns`.
pub fn lindblad_propagate_span<C: ControlSource + ?Sized>(
    controls: &C,
    params: &DeviceParams,
    rho0: &DensityOperator,
    t0_ns: f64,
    t1_ns: f64,
    options: &PropagationOptions,
) -> Result<(DensityOperator, TrajectoryRecord)> {
    params.validate()?;
    let dt = check_dt(options.dt_ps)?;
    let n = params.n_levels;
    if rho0.dim() != n {
        return Err(Error::Config(format!("density operator has {} levels, device has {n}", rho0.dim())));
    }
    let diss = dissipator(params)?;
    let mut builder = HamiltonianBuilder::new(controls, params);
    let (mut h1, mut h2) = (CMat::zeros(n, n), CMat::zeros(n, n));
    let mut rho = rho0.matrix.clone();
    let mut rec = Recorder::new(t0_ns, options, false);
    let check = |m: &CMat, t: f64| -> Result<DensityOperator> {
        let d = DensityOperator { matrix: m.clone() };
        d.validate(TRACE_BOUND, POSITIVITY_BOUND)
            .map_err(|e| Error::InvalidState(format!("at t = {t} ns: {e}")))?;
        Ok(d)
    };
    rec.push(t0_ns, &check(&rho, t0_ns)?, controls.adiabaticity_at(t0_ns), None)?;
    for (a, b) in intervals(controls, t0_ns, t1_ns) {
        let steps = step_count(b - a, dt);
        let h = (b - a) / steps as f64;
        let hs = h * NS;
        let mid = 0.5 * (a + b);
        if controls.is_static(a, b) {
            builder.fill(&mut h1, mid, mid);
            let full = expm(&((hamiltonian_superoperator(&h1) + &diss) * Complex64::from(hs)));
            for k in 0..steps {
                apply_super(&full, &mut rho);
                let t_end = if k + 1 == steps { b } else { a + (k + 1) as f64 * h };
                if rec.due(t_end) {
                    rec.push(t_end, &check(&rho, t_end)?, controls.adiabaticity_at(t_end), None)?;
                }
            }
            continue;
        }
        let outer = expm(&(&diss * Complex64::from(YOSHIDA_W1 * hs / 2.0)));
        let inner = expm(&(&diss * Complex64::from((YOSHIDA_W1 + YOSHIDA_W0) * hs / 2.0)));
        for k in 0..steps {
            let t = a + k as f64 * h;
            let mut tau = t;
            for (i, w) in [YOSHIDA_W1, YOSHIDA_W0, YOSHIDA_W1].into_iter().enumerate() {
                apply_super(if i == 0 { &outer } else { &inner }, &mut rho);
                let u = expm(&builder.magnus(tau, w * h, mid, &mut h1, &mut h2));
                rho = &u * &rho * u.adjoint();
                tau += w * h;
            }
            apply_super(&outer, &mut rho);
            let t_end = if k + 1 == steps { b } else { t + h };
            if rec.due(t_end) {
                rec.push(t_end, &check(&rho, t_end)?, controls.adiabaticity_at(t_end), None)?;
            }
        }
    }
    if rec.record.times_ns.last().copied() != Some(t1_ns) {
        rec.push(t1_ns, &check(&rho, t1_ns)?, controls.adiabaticity_at(t1_ns), None)?;
    }
    let out = check(&rho, t1_ns)?;
    debug_assert!(hermiticity_defect(&out.matrix) < 1e-9);
    Ok((out, rec.record))
}
