//! Adiabatic geometric phases of the dressed states.
//!
//! Because `H(φ) = e^{−iφN} H(0) e^{iφN}`, the eigenvector followed around a
//! full phase sweep is `|Φ(φ)⟩ = e^{−iφN}|Φ(0)⟩` and its Berry phase is
//! `2π⟨Φ(0)|N|Φ(0)⟩`. The same number is obtained, modulo 2π, from the
//! gauge-invariant discrete Wilson loop over numerically diagonalised
//! `H(φ_i)`. For two levels both reduce to `π(1 ± cos ϑ)`; the second excited
//! state adds the second-order correction of [`berry_correction_perturbative`].
//!
//! Branch labels: `+` is the dressed state connected to bare `|1⟩`, `−` the one
//! connected to bare `|0⟩` (their order in energy depends on the sign of Δ).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{fix_gauge, hermitian_eigen, CMat, CVec};
use crate::model::{build_hamiltonian, effective_field, omega_for_solid_angle, DeviceParams, DriveConfig};

pub const DEFAULT_RAMP_STEPS: usize = 64;
/// Two overlaps closer than this cannot be attributed to distinct branches.
pub const OVERLAP_AMBIGUITY: f64 = 1e-6;
/// Smallest admissible |k ∓ (3k+2)cos ϑ| in the perturbative correction.
pub const PERTURBATIVE_DENOMINATOR_GUARD: f64 = 1e-3;

/// Eigen-decomposition of H(0) with dressed states labelled by the bare level
/// they connect to as the drive is switched on.
#[derive(Clone, Debug)]
pub struct DressedBasis {
    /// Ascending eigenvalues (rad/s).
    pub eigenvalues: Vec<f64>,
    /// Matching eigenvectors as columns, each gauge-fixed so its largest
    /// component is real and positive.
    pub eigenvectors: CMat,
    /// `branch_map[j]` is the dressed index continuously connected to `|j⟩`.
    pub branch_map: Vec<usize>,
}

impl DressedBasis {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Dressed eigenvector connected to bare level `level`.
    pub fn vector_for_level(&self, level: usize) -> CVec {
        self.eigenvectors.column(self.branch_map[level]).into_owned()
    }

    pub fn energy_for_level(&self, level: usize) -> f64 {
        self.eigenvalues[self.branch_map[level]]
    }

    /// Same basis with every eigenvector multiplied by `e^{i·phases[k]}`.
    pub fn regauged(&self, phases: &[f64]) -> DressedBasis {
        let mut out = self.clone();
        for (k, &p) in phases.iter().enumerate().take(self.dim()) {
            let factor = Complex64::from_polar(1.0, p);
            out.eigenvectors.column_mut(k).iter_mut().for_each(|z| *z *= factor);
        }
        out
    }
}

/// Picks, for every tracked vector, the new eigenvector of largest overlap.
fn match_branches(previous: &[CVec], vectors: &CMat, step: usize) -> Result<Vec<usize>> {
    let n = vectors.ncols();
    let mut used = vec![false; n];
    let mut picks = Vec::with_capacity(previous.len());
    for prev in previous {
        let mut overlaps: Vec<(f64, usize)> =
            (0..n).map(|m| (prev.dotc(&vectors.column(m)).norm(), m)).collect();
        overlaps.sort_by(|a, b| b.0.total_cmp(&a.0));
        let (best, m) = overlaps[0];
        if n > 1 && best - overlaps[1].0 < OVERLAP_AMBIGUITY {
            return Err(Error::Degeneracy { step, first: best, second: overlaps[1].0 });
        }
        if used[m] {
            return Err(Error::Degeneracy { step, first: best, second: best });
        }
        used[m] = true;
        picks.push(m);
    }
    Ok(picks)
}

pub fn dressed_basis(params: &DeviceParams, drive: &DriveConfig) -> Result<DressedBasis> {
    dressed_basis_with_steps(params, drive, DEFAULT_RAMP_STEPS)
}

/// Diagonalises H(0) and labels the dressed states by following maximal
/// overlap while Ω is ramped from zero to its target in `steps` steps.
pub fn dressed_basis_with_steps(params: &DeviceParams, drive: &DriveConfig, steps: usize) -> Result<DressedBasis> {
    let n = params.n_levels;
    let at = |omega: f64| build_hamiltonian(params, &DriveConfig { omega, phi: 0.0, delta: drive.delta });
    if drive.omega == 0.0 {
        let h = at(0.0)?;
        let diag: Vec<f64> = (0..n).map(|j| h.matrix()[(j, j)].re).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
        let mut branch_map = vec![0; n];
        for (dressed, &bare) in order.iter().enumerate() {
            branch_map[bare] = dressed;
        }
        return Ok(DressedBasis {
            eigenvalues: order.iter().map(|&j| diag[j]).collect(),
            eigenvectors: CMat::from_fn(n, n, |r, c| if r == order[c] { 1.0.into() } else { 0.0.into() }),
            branch_map,
        });
    }
    let steps = steps.max(1);
    let mut tracked: Vec<CVec> = (0..n)
        .map(|j| CVec::from_fn(n, |r, _| if r == j { 1.0.into() } else { 0.0.into() }))
        .collect();
    let mut picks: Vec<usize> = (0..n).collect();
    let mut last = (Vec::new(), CMat::zeros(n, n));
    for s in 1..=steps {
        let h = at(drive.omega * s as f64 / steps as f64)?;
        let (values, vectors) = hermitian_eigen(h.matrix());
        picks = match_branches(&tracked, &vectors, s)?;
        for (j, &m) in picks.iter().enumerate() {
            tracked[j] = vectors.column(m).into_owned();
        }
        last = (values, vectors);
    }
    let (eigenvalues, mut eigenvectors) = last;
    for k in 0..n {
        let mut v = eigenvectors.column(k).into_owned();
        fix_gauge(&mut v);
        eigenvectors.set_column(k, &v);
    }
    Ok(DressedBasis { eigenvalues, eigenvectors, branch_map: picks })
}

/// Berry phase `2π⟨Φ|N|Φ⟩` of the dressed state connected to `level`, for one
/// full sweep of φ from 0 to 2π.
pub fn berry_phase_spectral(basis: &DressedBasis, level: usize) -> Result<f64> {
    if level >= basis.dim() {
        return Err(Error::Config(format!("level {level} out of range for {} levels", basis.dim())));
    }
    let v = basis.eigenvectors.column(basis.branch_map[level]);
    let mean_n: f64 = v.iter().enumerate().map(|(j, z)| j as f64 * z.norm_sqr()).sum();
    Ok(TAU * mean_n)
}

/// Sense of the phase sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    /// φ from 0 to 2π.
    Forward,
    /// φ from 2π to 0.
    Reverse,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Forward => 1.0,
            Orientation::Reverse => -1.0,
        }
    }
}

/// Discrete Berry phase `−arg Π⟨Φ(φ_i)|Φ(φ_{i+1})⟩` of the branch connected
/// to `level`, over `n_steps` points on a full forward loop, returned in [0, 2π).
pub fn berry_phase_line_integral(params: &DeviceParams, drive: &DriveConfig, level: usize, n_steps: usize) -> Result<f64> {
    berry_phase_line_integral_with(params, drive, level, n_steps, Orientation::Forward, &|_| 0.0)
}

/// As [`berry_phase_line_integral`], with an explicit sweep orientation and an
/// arbitrary phase `gauge(i)` applied to the eigenvector at point `i`. The
/// result does not depend on `gauge`.
pub fn berry_phase_line_integral_with(
    params: &DeviceParams,
    drive: &DriveConfig,
    level: usize,
    n_steps: usize,
    orientation: Orientation,
    gauge: &dyn Fn(usize) -> f64,
) -> Result<f64> {
    if n_steps < 16 {
        return Err(Error::Config(format!("line integral needs at least 16 points, got {n_steps}")));
    }
    let basis = dressed_basis(params, &drive.with_phi(0.0))?;
    if level >= basis.dim() {
        return Err(Error::Config(format!("level {level} out of range for {} levels", basis.dim())));
    }
    let start = basis.vector_for_level(level) * Complex64::from_polar(1.0, gauge(0));
    let mut prev = start.clone();
    let mut product = Complex64::new(1.0, 0.0);
    for i in 1..n_steps {
        let phi = orientation.sign() * TAU * i as f64 / n_steps as f64;
        let h = build_hamiltonian(params, &drive.with_phi(phi))?;
        let (_, vectors) = hermitian_eigen(h.matrix());
        let m = match_branches(std::slice::from_ref(&prev), &vectors, i)?[0];
        let next = vectors.column(m) * Complex64::from_polar(1.0, gauge(i));
        let link = prev.dotc(&next);
        product *= link / link.norm();
        prev = next;
    }
    let closing = prev.dotc(&start);
    product *= closing / closing.norm();
    Ok((-product.arg()).rem_euclid(TAU))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

/// `π(1 ± cos ϑ)`.
pub fn berry_phase_two_level(theta: f64, branch: Branch) -> f64 {
    PI * (1.0 + branch.sign() * theta.cos())
}

/// Second-order correction from the second excited state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbativeCorrection {
    pub plus: f64,
    pub minus: f64,
    /// `2(Δγ₋ − Δγ₊)`, the shift of the interferometer phase.
    pub delta_gamma: f64,
}

/// ```text
/// Δγ± = πk sin²ϑ · [2k(1 ± cos ϑ) + (2k ∓ (3k+2) cos ϑ) sin²ϑ] / (k ∓ (3k+2) cos ϑ)²
/// ```
/// with `k = Δ/α₂`.
pub fn berry_correction_perturbative(theta: f64, k: f64) -> Result<PerturbativeCorrection> {
    if !(0.0..PI / 2.0).contains(&theta) {
        return Err(Error::Config(format!("tilt {theta} outside [0, π/2)")));
    }
    let (c, s2) = (theta.cos(), theta.sin().powi(2));
    let term = |sign: f64| -> Result<f64> {
        let denominator = k - sign * (3.0 * k + 2.0) * c;
        if denominator.abs() < PERTURBATIVE_DENOMINATOR_GUARD {
            return Err(Error::ValidityDomain { denominator });
        }
        let numerator = 2.0 * k * (1.0 + sign * c) + (2.0 * k - sign * (3.0 * k + 2.0) * c) * s2;
        Ok(PI * k * s2 * numerator / (denominator * denominator))
    };
    let (plus, minus) = (term(1.0)?, term(-1.0)?);
    Ok(PerturbativeCorrection { plus, minus, delta_gamma: 2.0 * (minus - plus) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredictionOrder {
    TwoLevel,
    Perturbative,
    /// Exact dressed states of the full `n_levels` Hamiltonian.
    Exact,
}

/// Geometric phases for one loop and the resulting interferometer phase of
/// the `−+` contour.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseResult {
    pub gamma_plus: f64,
    pub gamma_minus: f64,
    pub delta_gamma_plus: f64,
    pub delta_gamma_minus: f64,
    pub delta_gamma: f64,
    /// Unwrapped interferometer phase, continuous in A and zero at A = 0.
    pub gamma_pred: f64,
    pub a_solid: f64,
    pub k: f64,
}

/// `k = Δ/α₂`; zero when the device has no second excited level.
pub fn detuning_ratio(params: &DeviceParams, delta: f64) -> f64 {
    let a2 = params.alpha2();
    if a2 == 0.0 {
        0.0
    } else {
        delta / a2
    }
}

/// Interferometer phase predicted for a loop enclosing `a_solid` at detuning
/// `delta`. The per-loop relative phase between the `−` and `+` branches is
/// `γ₋ − γ₊ + 2π`, which is `A` for two levels; the echo doubles it.
pub fn predicted_interferometer_phase(
    params: &DeviceParams,
    a_solid: f64,
    delta: f64,
    order: PredictionOrder,
) -> Result<PhaseResult> {
    let omega = omega_for_solid_angle(a_solid, delta)?;
    let field = effective_field(&DriveConfig::new(omega, 0.0, delta)?)?;
    let theta = field.theta;
    let k = detuning_ratio(params, delta);
    let g_plus0 = berry_phase_two_level(theta, Branch::Plus);
    let g_minus0 = berry_phase_two_level(theta, Branch::Minus);
    let (d_plus, d_minus) = match order {
        PredictionOrder::TwoLevel => (0.0, 0.0),
        PredictionOrder::Perturbative => {
            let corr = berry_correction_perturbative(theta, k)?;
            (corr.plus, corr.minus)
        }
        PredictionOrder::Exact => {
            let basis = dressed_basis(params, &DriveConfig::new(omega, 0.0, delta)?)?;
            let g_minus = berry_phase_spectral(&basis, 0)?;
            let g_plus = berry_phase_spectral(&basis, 1)?;
            (g_plus - g_plus0, g_minus - g_minus0)
        }
    };
    let delta_gamma = 2.0 * (d_minus - d_plus);
    let gamma_plus = g_plus0 + d_plus;
    let gamma_minus = g_minus0 + d_minus;
    let gamma_pred = match order {
        PredictionOrder::Exact => 2.0 * (gamma_minus - gamma_plus + TAU),
        _ => 2.0 * a_solid + delta_gamma,
    };
    Ok(PhaseResult {
        gamma_plus,
        gamma_minus,
        delta_gamma_plus: d_plus,
        delta_gamma_minus: d_minus,
        delta_gamma,
        gamma_pred,
        a_solid,
        k,
    })
}
