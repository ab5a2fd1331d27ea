//! Driven multi-level transmon in the frame corotating with the drive.
//!
//! With `N = Σ j |j⟩⟨j|` the Hamiltonian (divided by ħ) reads
//!
//! ```text
//! H(φ)/ħ = Σ_j (jΔ + α_j) |j⟩⟨j| + (Ω/2) Σ_j √(j+1) (e^{−iφ} |j+1⟩⟨j| + h.c.)
//!        = e^{−iφN} H(0) e^{iφN} / ħ
//! ```
//!
//! Restricted to `{|0⟩, |1⟩}` this is a spin one-half in the effective field
//! `B = (Ω cos φ, Ω sin φ, Δ)`, tilted from the z axis by `ϑ = arctan(Ω/|Δ|)`.
//! A full phase sweep makes `B` enclose the solid angle `A = 2π(1 − cos ϑ)`.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, hermiticity_defect, CMat, ZERO};
use crate::units::{ghz_to_angular, mhz_to_angular};

/// Device description: transmon energies, level anharmonicities and coherence.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceParams {
    pub e_j_ghz: f64,
    pub e_c_ghz: f64,
    pub n_levels: usize,
    /// α_j in rad/s, defined through ω₀ⱼ = jω₀₁ + α_j. α₀ = α₁ = 0.
    pub anharmonicities: Vec<f64>,
    pub t1_us: Option<f64>,
    pub t2_star_us: Option<f64>,
}

impl DeviceParams {
    pub fn new(
        e_j_ghz: f64,
        e_c_ghz: f64,
        anharmonicities: Vec<f64>,
        t1_us: Option<f64>,
        t2_star_us: Option<f64>,
    ) -> Result<Self> {
        let params = DeviceParams {
            e_j_ghz,
            e_c_ghz,
            n_levels: anharmonicities.len(),
            anharmonicities,
            t1_us,
            t2_star_us,
        };
        params.validate()?;
        Ok(params)
    }

    /// Levels `0..n_levels` with α_j = α₂·j(j−1)/2, the leading transmon scaling.
    pub fn with_alpha2(n_levels: usize, alpha2: f64) -> Result<Self> {
        Self::new(0.0, 0.0, default_anharmonicities(n_levels, alpha2), None, None)
    }

    /// The transmon characterised in the reference experiment: E_J/h = 13.96 GHz,
    /// E_C/h = 0.36 GHz, α₂/2π = −423 MHz, T₁ = 0.84 µs, T₂* = 1.03 µs.
    pub fn reference(n_levels: usize) -> Self {
        let alpha2 = mhz_to_angular(-423.0);
        DeviceParams {
            e_j_ghz: 13.96,
            e_c_ghz: 0.36,
            n_levels,
            anharmonicities: default_anharmonicities(n_levels, alpha2),
            t1_us: Some(0.84),
            t2_star_us: Some(1.03),
        }
    }

    pub fn without_decoherence(mut self) -> Self {
        self.t1_us = None;
        self.t2_star_us = None;
        self
    }

    pub fn alpha2(&self) -> f64 {
        self.anharmonicities.get(2).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_levels < 2 {
            return Err(Error::Config(format!("need at least 2 levels, got {}", self.n_levels)));
        }
        if self.anharmonicities.len() != self.n_levels {
            return Err(Error::Config(format!(
                "{} anharmonicities for {} levels",
                self.anharmonicities.len(),
                self.n_levels
            )));
        }
        if self.anharmonicities[0] != 0.0 || self.anharmonicities[1] != 0.0 {
            return Err(Error::Config("α₀ and α₁ must be exactly zero".into()));
        }
        if self.anharmonicities.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("non-finite anharmonicity".into()));
        }
        if let (Some(t1), Some(t2)) = (self.t1_us, self.t2_star_us) {
            if !(t1 > 0.0 && t2 > 0.0) || t2 > 2.0 * t1 {
                return Err(Error::UnphysicalCoherence { t1_us: t1, t2_star_us: t2 });
            }
        }
        Ok(())
    }
}

pub fn default_anharmonicities(n_levels: usize, alpha2: f64) -> Vec<f64> {
    (0..n_levels)
        .map(|j| if j < 2 { 0.0 } else { alpha2 * (j * (j - 1)) as f64 / 2.0 })
        .collect()
}

/// Microwave drive seen in the frame corotating with it.
#[derive(Clone, Copy, Debug)]
pub struct DriveConfig {
    /// Ω in rad/s.
    pub omega: f64,
    /// φ in rad.
    pub phi: f64,
    /// Δ = ω₀₁ − ω_d in rad/s.
    pub delta: f64,
}

impl DriveConfig {
    pub fn new(omega: f64, phi: f64, delta: f64) -> Result<Self> {
        if !(omega >= 0.0) || !omega.is_finite() || !phi.is_finite() || !delta.is_finite() {
            return Err(Error::Config(format!("invalid drive Ω = {omega}, φ = {phi}, Δ = {delta}")));
        }
        Ok(DriveConfig { omega, phi, delta })
    }

    pub fn with_phi(self, phi: f64) -> Self {
        DriveConfig { phi, ..self }
    }

    /// Equality with the phase compared modulo 2π.
    pub fn equivalent(&self, other: &DriveConfig, tol: f64) -> bool {
        (self.omega - other.omega).abs() <= tol
            && (self.delta - other.delta).abs() <= tol
            && crate::linalg::wrap_angle(self.phi - other.phi).abs() <= tol
    }
}

/// Two-level picture of the drive.
#[derive(Clone, Copy, Debug)]
pub struct EffectiveField {
    /// (Ω_x, Ω_y, Δ) in rad/s.
    pub b: [f64; 3],
    /// Tilt from the z axis, in [0, π/2].
    pub theta: f64,
    /// Solid angle enclosed by a full phase sweep.
    pub a_solid: f64,
}

impl EffectiveField {
    pub fn magnitude(&self) -> f64 {
        self.b.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Hermitian matrix in units of ħ (entries in rad/s).
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator(CMat);

impl HermitianOperator {
    pub const TOLERANCE: f64 = 1e-12;

    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Config("operator must be square".into()));
        }
        let defect = hermiticity_defect(&m);
        if defect > Self::TOLERANCE {
            return Err(Error::InvalidState(format!("not Hermitian (defect {defect:e})")));
        }
        Ok(HermitianOperator(m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    /// Ascending eigenvalues with eigenvectors as columns.
    pub fn eigen(&self) -> (Vec<f64>, CMat) {
        hermitian_eigen(&self.0)
    }
}

/// `N = diag(0, 1, …, n−1)`.
pub fn number_operator(n: usize) -> HermitianOperator {
    HermitianOperator(CMat::from_fn(n, n, |r, c| if r == c { Complex64::from(r as f64) } else { ZERO }))
}

/// Writes the driven Hamiltonian into `out` given the diagonal and the complex
/// drive `Ω e^{iφ}`. Used by the propagators on every step.
pub(crate) fn fill_hamiltonian(out: &mut CMat, diagonal: &[f64], drive: Complex64) {
    let n = diagonal.len();
    out.fill(ZERO);
    for j in 0..n {
        out[(j, j)] = Complex64::from(diagonal[j]);
    }
    for j in 0..n - 1 {
        let lower = drive.conj() * (0.5 * ((j + 1) as f64).sqrt());
        out[(j + 1, j)] = lower;
        out[(j, j + 1)] = lower.conj();
    }
}

fn check_levels(params: &DeviceParams) -> Result<()> {
    if params.anharmonicities.len() != params.n_levels || params.n_levels < 2 {
        return Err(Error::Config(format!(
            "dimension mismatch: n_levels = {}, {} anharmonicities",
            params.n_levels,
            params.anharmonicities.len()
        )));
    }
    Ok(())
}

fn bare_diagonal(params: &DeviceParams, delta: f64) -> Vec<f64> {
    params
        .anharmonicities
        .iter()
        .enumerate()
        .map(|(j, a)| j as f64 * delta + a)
        .collect()
}

/// H(φ)/ħ for the driven `n_levels` system.
pub fn build_hamiltonian(params: &DeviceParams, drive: &DriveConfig) -> Result<HermitianOperator> {
    check_levels(params)?;
    if !(drive.omega >= 0.0) {
        return Err(Error::Config(format!("negative drive strength {}", drive.omega)));
    }
    let n = params.n_levels;
    let mut h = CMat::zeros(n, n);
    fill_hamiltonian(&mut h, &bare_diagonal(params, drive.delta), Complex64::from_polar(drive.omega, drive.phi));
    Ok(HermitianOperator(h))
}

pub fn effective_field(drive: &DriveConfig) -> Result<EffectiveField> {
    if drive.omega == 0.0 && drive.delta == 0.0 {
        return Err(Error::DegenerateField);
    }
    let theta = drive.omega.atan2(drive.delta.abs());
    let half = (theta / 2.0).sin();
    Ok(EffectiveField {
        b: [drive.omega * drive.phi.cos(), drive.omega * drive.phi.sin(), drive.delta],
        theta,
        a_solid: 4.0 * PI * half * half,
    })
}

/// Drive strength that makes a full phase sweep at detuning `delta` enclose
/// the solid angle `a_solid`.
pub fn omega_for_solid_angle(a_solid: f64, delta: f64) -> Result<f64> {
    if !(0.0..TAU).contains(&a_solid) {
        return Err(Error::SolidAngleOutOfRange(a_solid));
    }
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::Config("solid angle needs a nonzero detuning".into()));
    }
    // cos ϑ = 1 − u with u = A/2π; sin ϑ = √(u(2 − u)) avoids cancellation
    let u = a_solid / TAU;
    Ok(delta.abs() * (u * (2.0 - u)).sqrt() / (1.0 - u))
}

/// Splits H(0) into the part acting inside `{|0⟩, |1⟩}` plus the bare diagonal
/// (`H₀`) and the couplings `|j⟩ ↔ |j+1⟩` for `j ≥ 1` (`V`). The split is
/// defined at φ = 0; the phase of `drive` is ignored.
pub fn split_h0_v(params: &DeviceParams, drive: &DriveConfig) -> Result<(HermitianOperator, HermitianOperator)> {
    let full = build_hamiltonian(params, &drive.with_phi(0.0))?.into_matrix();
    let n = params.n_levels;
    let mut h0 = CMat::zeros(n, n);
    let mut v = CMat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            if r == c || r.max(c) == 1 {
                h0[(r, c)] = full[(r, c)];
            } else {
                v[(r, c)] = full[(r, c)];
            }
        }
    }
    Ok((HermitianOperator(h0), HermitianOperator(v)))
}

/// Low-lying spectrum of the Cooper-pair box Hamiltonian.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmonSpectrum {
    /// ω₀₁ in rad/s.
    pub omega01: f64,
    /// α_j in rad/s for j = 0..n_levels.
    pub anharmonicities: Vec<f64>,
    pub charge_cutoff: usize,
}

pub const DEFAULT_CHARGE_CUTOFF: usize = 30;
const SPECTRUM_CONVERGENCE: f64 = 1e-9;

fn charge_basis_levels(e_j: f64, e_c: f64, n_levels: usize, cutoff: usize) -> Vec<f64> {
    let dim = 2 * cutoff + 1;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for k in 0..dim {
        let charge = k as f64 - cutoff as f64;
        h[(k, k)] = 4.0 * e_c * charge * charge;
        if k + 1 < dim {
            h[(k, k + 1)] = -e_j / 2.0;
            h[(k + 1, k)] = -e_j / 2.0;
        }
    }
    let mut energies: Vec<f64> = h.symmetric_eigen().eigenvalues.iter().copied().collect();
    energies.sort_by(f64::total_cmp);
    energies.truncate(n_levels);
    energies
}

fn spectrum_from_levels(levels: &[f64]) -> (f64, Vec<f64>) {
    let omega01 = levels[1] - levels[0];
    let alphas = levels
        .iter()
        .enumerate()
        .map(|(j, e)| if j < 2 { 0.0 } else { (e - levels[0]) - j as f64 * omega01 })
        .collect();
    (omega01, alphas)
}

/// Diagonalises `4E_C n̂² − E_J cos φ̂` in the charge states `−N..=N` and
/// returns ω₀₁ and α_j (angular units). Energies are given as E/h in GHz.
/// Fails if doubling the cutoff moves any returned value by more than 1e−9
/// relative to ω₀₁.
pub fn transmon_spectrum(e_j_ghz: f64, e_c_ghz: f64, n_levels: usize, charge_cutoff: usize) -> Result<TransmonSpectrum> {
    if !(e_j_ghz > 0.0 && e_c_ghz > 0.0) {
        return Err(Error::Config(format!("E_J = {e_j_ghz}, E_C = {e_c_ghz} must be positive")));
    }
    if n_levels < 2 || n_levels > 2 * charge_cutoff + 1 {
        return Err(Error::Config(format!("{n_levels} levels need a larger charge cutoff than {charge_cutoff}")));
    }
    let (w01, alphas) = spectrum_from_levels(&charge_basis_levels(e_j_ghz, e_c_ghz, n_levels, charge_cutoff));
    let (w01_ref, alphas_ref) = spectrum_from_levels(&charge_basis_levels(e_j_ghz, e_c_ghz, n_levels, 2 * charge_cutoff));
    let mut change = ((w01 - w01_ref) / w01_ref).abs();
    for (a, b) in alphas.iter().zip(&alphas_ref) {
        change = change.max((a - b).abs() / w01_ref);
    }
    if !(change <= SPECTRUM_CONVERGENCE) {
        return Err(Error::NotConverged { cutoff: charge_cutoff, change });
    }
    Ok(TransmonSpectrum {
        omega01: ghz_to_angular(w01),
        anharmonicities: alphas.into_iter().map(ghz_to_angular).collect(),
        charge_cutoff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{expm, I};
    use crate::units::angular_to_ghz;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn two_level_matrix() {
        let (d, om) = (mhz_to_angular(-35.0), mhz_to_angular(50.0));
        let p = DeviceParams::with_alpha2(2, mhz_to_angular(-423.0)).unwrap();
        let h = build_hamiltonian(&p, &DriveConfig::new(om, 0.0, d).unwrap()).unwrap();
        let expected = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(om / 2.0, 0.0), c(om / 2.0, 0.0), c(d, 0.0)]);
        assert_eq!(h.matrix(), &expected);
    }

    #[test]
    fn undriven_is_diagonal() {
        let p = DeviceParams::reference(5);
        let d = mhz_to_angular(-35.0);
        let h = build_hamiltonian(&p, &DriveConfig::new(0.0, 1.2, d).unwrap()).unwrap();
        for r in 0..5 {
            for col in 0..5 {
                let want = if r == col { r as f64 * d + p.anharmonicities[r] } else { 0.0 };
                assert_eq!(h.matrix()[(r, col)], c(want, 0.0));
            }
        }
    }

    #[test]
    fn three_level_element_by_element() {
        let (d, a2, om) = (mhz_to_angular(-35.0), mhz_to_angular(-423.0), mhz_to_angular(50.0));
        let p = DeviceParams::with_alpha2(3, a2).unwrap();
        let h = build_hamiltonian(&p, &DriveConfig::new(om, PI / 2.0, d).unwrap()).unwrap();
        // hand-built: raising elements carry (Ω/2)√(j+1)·e^{−iπ/2} = −i(Ω/2)√(j+1)
        let mut want = CMat::zeros(3, 3);
        want[(0, 0)] = c(0.0, 0.0);
        want[(1, 1)] = c(d, 0.0);
        want[(2, 2)] = c(2.0 * d + a2, 0.0);
        want[(1, 0)] = c(0.0, -om / 2.0);
        want[(0, 1)] = c(0.0, om / 2.0);
        want[(2, 1)] = c(0.0, -om / 2.0 * 2f64.sqrt());
        want[(1, 2)] = c(0.0, om / 2.0 * 2f64.sqrt());
        assert!((h.matrix() - &want).norm() <= 1e-15 * want.norm() * 10.0);
        assert_relative_eq!(h.matrix()[(2, 1)].im, -(om / 2.0) * 2f64.sqrt(), max_relative = 1e-14);
        assert!(h.matrix()[(2, 1)].re.abs() < 1e-6 * om);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let mut p = DeviceParams::reference(4);
        p.n_levels = 3;
        let err = build_hamiltonian(&p, &DriveConfig::new(1.0, 0.0, 1.0).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn device_validation() {
        assert!(DeviceParams::new(1.0, 1.0, vec![0.0], None, None).is_err());
        assert!(DeviceParams::new(1.0, 1.0, vec![0.0, 0.1], None, None).is_err());
        assert!(DeviceParams::new(1.0, 1.0, vec![0.0, 0.0, -1.0], Some(1.0), Some(2.5)).is_err());
        assert!(DeviceParams::new(1.0, 1.0, vec![0.0, 0.0, -1.0], Some(1.0), Some(2.0)).is_ok());
        assert!(DeviceParams::reference(4).validate().is_ok());
    }

    #[test]
    fn effective_field_examples() {
        let d = mhz_to_angular(-35.0);
        let f = effective_field(&DriveConfig::new(0.0, 0.0, d).unwrap()).unwrap();
        assert_eq!((f.theta, f.a_solid), (0.0, 0.0));
        let f = effective_field(&DriveConfig::new(1e8, 0.3, 0.0).unwrap()).unwrap();
        assert_relative_eq!(f.theta, PI / 2.0);
        assert_relative_eq!(f.a_solid, TAU, max_relative = 1e-15);
        let f = effective_field(&DriveConfig::new(d.abs(), 0.0, d).unwrap()).unwrap();
        assert_relative_eq!(f.theta, PI / 4.0, max_relative = 1e-15);
        assert_relative_eq!(f.a_solid, TAU * (1.0 - 2f64.sqrt() / 2.0), max_relative = 1e-14);
        assert_relative_eq!(f.magnitude(), d.abs() * 2f64.sqrt(), max_relative = 1e-15);
        assert!(matches!(
            effective_field(&DriveConfig::new(0.0, 0.0, 0.0).unwrap()),
            Err(Error::DegenerateField)
        ));
    }

    #[test]
    fn omega_for_solid_angle_examples() {
        let d = mhz_to_angular(-35.0);
        assert_eq!(omega_for_solid_angle(0.0, d).unwrap(), 0.0);
        assert_relative_eq!(omega_for_solid_angle(PI, d).unwrap(), d.abs() * 3f64.sqrt(), max_relative = 1e-14);
        // A = 5π/4: cos ϑ = 1 − 5/8 = 0.375, found independently by bisection on A(Ω)
        let om = omega_for_solid_angle(1.25 * PI, d).unwrap();
        let (mut lo, mut hi) = (0.0, 100.0 * d.abs());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let a = TAU * (1.0 - d.abs() / (mid * mid + d * d).sqrt());
            if a < 1.25 * PI {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert_relative_eq!(om, lo, max_relative = 1e-12);
        let f = effective_field(&DriveConfig::new(om, 0.0, d).unwrap()).unwrap();
        assert_relative_eq!(f.theta.cos(), 0.375, max_relative = 1e-13);
        assert!(matches!(omega_for_solid_angle(TAU, d), Err(Error::SolidAngleOutOfRange(_))));
    }

    #[test]
    fn split_examples() {
        let drive = DriveConfig::new(mhz_to_angular(80.0), 0.0, mhz_to_angular(-35.0)).unwrap();
        let (_, v) = split_h0_v(&DeviceParams::reference(2), &drive).unwrap();
        assert!(v.matrix().iter().all(|z| *z == ZERO));
        let (_, v) = split_h0_v(&DeviceParams::reference(3), &drive).unwrap();
        for r in 0..3 {
            for col in 0..3 {
                let nonzero = (r, col) == (2, 1) || (r, col) == (1, 2);
                if nonzero {
                    assert_relative_eq!(v.matrix()[(r, col)].re, drive.omega / 2.0 * 2f64.sqrt(), max_relative = 1e-15);
                } else {
                    assert_eq!(v.matrix()[(r, col)], ZERO);
                }
            }
        }
        for n in 2..7 {
            let p = DeviceParams::reference(n);
            let (h0, v) = split_h0_v(&p, &drive).unwrap();
            let full = build_hamiltonian(&p, &drive).unwrap();
            assert_eq!(h0.matrix() + v.matrix(), *full.matrix());
        }
    }

    #[test]
    fn spectrum_of_reference_device() {
        let s = transmon_spectrum(13.96, 0.36, 4, DEFAULT_CHARGE_CUTOFF).unwrap();
        let w01 = angular_to_ghz(s.omega01);
        assert!((w01 - 5.95).abs() / 5.95 < 0.02, "ω01/2π = {w01}");
        let asymptotic = (8.0f64 * 13.96 * 0.36).sqrt() - 0.36;
        assert!((w01 - asymptotic).abs() / asymptotic < 0.005);
        assert!(s.anharmonicities[2] < 0.0);
        assert!(s.anharmonicities[3].abs() > s.anharmonicities[2].abs());
        assert_eq!(&s.anharmonicities[..2], &[0.0, 0.0]);
    }

    #[test]
    fn spectrum_deep_transmon_limit() {
        let (ej, ec) = (50.0, 0.25);
        let s = transmon_spectrum(ej, ec, 3, 40).unwrap();
        let w01 = angular_to_ghz(s.omega01);
        let asymptotic = (8.0f64 * ej * ec).sqrt() - ec;
        assert!((w01 - asymptotic).abs() / asymptotic < 0.005);
        let a2 = angular_to_ghz(s.anharmonicities[2]);
        assert!((a2 + ec).abs() / ec < 0.10, "α₂ = {a2}");
    }

    #[test]
    fn spectrum_cutoff_too_small() {
        assert!(matches!(transmon_spectrum(13.96, 0.36, 4, 3), Err(Error::NotConverged { .. })));
    }

    proptest! {
        #[test]
        fn hamiltonian_is_hermitian(n in 2usize..7, om in 0.0f64..2e9, phi in -10.0f64..10.0, d in -5e8f64..5e8) {
            let p = DeviceParams::reference(n);
            let h = build_hamiltonian(&p, &DriveConfig::new(om, phi, d).unwrap()).unwrap();
            prop_assert!(hermiticity_defect(h.matrix()) == 0.0);
        }

        #[test]
        fn frame_rotation_identity(n in 2usize..6, om in 0.0f64..2e9, phi in -7.0f64..7.0, d in -5e8f64..5e8) {
            let p = DeviceParams::reference(n);
            let drive = DriveConfig::new(om, phi, d).unwrap();
            let h_phi = build_hamiltonian(&p, &drive).unwrap();
            let h0 = build_hamiltonian(&p, &drive.with_phi(0.0)).unwrap();
            let rot = expm(&(number_operator(n).into_matrix() * (-I * phi)));
            let rotated = &rot * h0.matrix() * rot.adjoint();
            let scale = h0.matrix().norm();
            prop_assert!((rotated - h_phi.matrix()).norm() <= 1e-12 * scale.max(1.0));
        }

        #[test]
        fn solid_angle_round_trip(a in 0.0f64..(TAU - 1e-9), d in prop_oneof![-5e8f64..-1e6, 1e6f64..5e8]) {
            let om = omega_for_solid_angle(a, d).unwrap();
            let f = effective_field(&DriveConfig::new(om, 0.0, d).unwrap()).unwrap();
            prop_assert!((f.a_solid - a).abs() <= 1e-12 * a.max(1e-300) + 1e-300 || (f.a_solid - a).abs() / a <= 1e-12);
        }
    }

    #[test]
    fn spectrum_is_cutoff_invariant() {
        let a = transmon_spectrum(13.96, 0.36, 4, 30).unwrap();
        let b = transmon_spectrum(13.96, 0.36, 4, 45).unwrap();
        assert_relative_eq!(a.omega01, b.omega01, max_relative = 1e-9);
        for (x, y) in a.anharmonicities.iter().zip(&b.anharmonicities) {
            assert!((x - y).abs() <= 1e-9 * a.omega01);
        }
    }
}
