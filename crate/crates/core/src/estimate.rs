//! Readout, phase extraction, state reconstruction and fidelity.
//!
//! The readout gives direct access to `P_z = (1 − ⟨σ_z⟩)/2`. Three settings
//! are used: after a tomography pulse mapping ⟨σ_x⟩ onto z, after one mapping
//! ⟨σ_y⟩ onto z, and without a pulse. Expectations are normalised within the
//! qubit subspace; population outside it is reported separately.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, sqrtm_psd, CMat, I, ONE, ZERO};
use crate::propagate::{DensityOperator, Populations};

/// Below this many shots a statistics warning is logged.
pub const MIN_SHOTS: u32 = 100;
/// Smallest in-plane Bloch length squared for which a phase is reported.
pub const PHASE_THRESHOLD: f64 = 1e-6;

/// Populations `(P₀, P₁)` observed in each readout setting, plus the
/// population outside the qubit subspace before the tomography pulse.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReadoutPopulations {
    /// After the pulse that maps ⟨σ_x⟩ onto z.
    pub x_setting: [f64; 2],
    /// After the pulse that maps ⟨σ_y⟩ onto z.
    pub y_setting: [f64; 2],
    /// Without a tomography pulse.
    pub z_setting: [f64; 2],
    pub leakage: f64,
}

impl ReadoutPopulations {
    /// Readout of a qubit state whose pre-pulse Bloch vector is known exactly.
    pub fn from_bloch(r: [f64; 3]) -> Self {
        let p = |s: f64| [(1.0 + s) / 2.0, (1.0 - s) / 2.0];
        ReadoutPopulations { x_setting: p(r[0]), y_setting: p(r[1]), z_setting: p(r[2]), leakage: 0.0 }
    }

    /// Readout of the three final states of an experiment.
    pub fn from_states<P: Populations + ?Sized>(x: &P, y: &P, z: &P) -> Self {
        let two = |s: &P| {
            let p = s.populations();
            [p[0], p[1]]
        };
        let leakage = z.populations().iter().skip(2).sum();
        ReadoutPopulations { x_setting: two(x), y_setting: two(y), z_setting: two(z), leakage }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TomographyMode {
    Exact,
    Sampled { shots: u32, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TomographyRecord {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    /// Zero in exact mode.
    pub shots: u32,
    pub seed: u64,
    /// Population outside the qubit subspace before the tomography pulse.
    pub leakage: f64,
}

impl TomographyRecord {
    pub fn bloch(&self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    pub fn bloch_length(&self) -> f64 {
        (self.sx * self.sx + self.sy * self.sy + self.sz * self.sz).sqrt()
    }

    pub fn in_plane_length(&self) -> f64 {
        self.sx.hypot(self.sy)
    }
}

fn subspace_expectation(p: [f64; 2]) -> f64 {
    let total = p[0] + p[1];
    if total <= 0.0 {
        0.0
    } else {
        (p[0] - p[1]) / total
    }
}

pub fn tomography(source: &ReadoutPopulations, mode: TomographyMode) -> TomographyRecord {
    let settings = [source.x_setting, source.y_setting, source.z_setting];
    let (values, shots, seed) = match mode {
        TomographyMode::Exact => (settings.map(subspace_expectation), 0, 0),
        TomographyMode::Sampled { shots, seed } => {
            if shots < MIN_SHOTS {
                log::warn!("only {shots} shots per setting; expectation estimates will be noisy");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values = settings.map(|p| {
                let pz = (1.0 - subspace_expectation(p)) / 2.0;
                let excited = Binomial::new(u64::from(shots), pz.clamp(0.0, 1.0))
                    .map(|b| b.sample(&mut rng))
                    .unwrap_or(0);
                if shots == 0 {
                    0.0
                } else {
                    1.0 - 2.0 * excited as f64 / f64::from(shots)
                }
            });
            (values, shots, seed)
        }
    };
    TomographyRecord { sx: values[0], sy: values[1], sz: values[2], shots, seed, leakage: source.leakage }
}

/// `atan2(⟨σ_y⟩, ⟨σ_x⟩)` in (−π, π].
pub fn extract_phase(record: &TomographyRecord) -> Result<f64> {
    let r2 = record.sx * record.sx + record.sy * record.sy;
    if r2 <= PHASE_THRESHOLD {
        return Err(Error::UndefinedPhase(r2));
    }
    Ok(record.sy.atan2(record.sx))
}

/// The representative of `phase` (mod 2π) closest to `reference`.
pub fn unwrap_near(phase: f64, reference: f64) -> f64 {
    phase + TAU * ((reference - phase) / TAU).round()
}

/// Nearest-branch continuation along a sweep. Non-finite entries are passed
/// through and do not move the reference.
pub fn unwrap_phases(phases: &[f64], start_reference: f64) -> Vec<f64> {
    let mut reference = start_reference;
    phases
        .iter()
        .map(|&p| {
            if !p.is_finite() {
                return p;
            }
            let u = unwrap_near(p, reference);
            if (u - reference).abs() > PI * (1.0 - 1e-12) {
                log::warn!("phase step of {:.3} rad at the unwrapping guard; grid may be too coarse", u - reference);
            }
            reference = u;
            u
        })
        .collect()
}

fn paulis() -> [CMat; 3] {
    [
        CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
    ]
}

/// `(1 + r·σ)/2` without any check on |r|.
pub fn qubit_density(r: [f64; 3]) -> DensityOperator {
    let [sx, sy, sz] = paulis();
    let m = (CMat::identity(2, 2) + sx * Complex64::from(r[0]) + sy * Complex64::from(r[1]) + sz * Complex64::from(r[2]))
        * Complex64::from(0.5);
    DensityOperator { matrix: m }
}

/// Maximum-likelihood qubit state under isotropic Gaussian noise on the
/// expectations: the Bloch vector projected onto the unit ball.
pub fn ml_reconstruct(record: &TomographyRecord) -> DensityOperator {
    let mut r = record.bloch();
    let len = record.bloch_length();
    if len > 1.0 {
        r = r.map(|v| v / len);
    }
    qubit_density(r)
}

fn check_physical(rho: &DensityOperator, name: &str) -> Result<()> {
    let m = &rho.matrix;
    let tol = 1e-9;
    let herm = (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (values, _) = hermitian_eigen(m);
    let trace = m.trace().re;
    if herm > tol || values[0] < -tol || (trace - 1.0).abs() > tol {
        return Err(Error::InvalidState(format!(
            "{name} is not a density operator (Hermiticity {herm:e}, min eigenvalue {:e}, trace {trace})",
            values[0]
        )));
    }
    Ok(())
}

/// Uhlmann fidelity `tr √(√ρ σ √ρ)`.
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Config(format!("fidelity between {} and {} levels", rho.dim(), sigma.dim())));
    }
    check_physical(rho, "rho")?;
    check_physical(sigma, "sigma")?;
    let root = sqrtm_psd(&rho.matrix);
    let inner = &root * &sigma.matrix * &root;
    let inner = (&inner + inner.adjoint()) * Complex64::from(0.5);
    let (values, _) = hermitian_eigen(&inner);
    Ok(values.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>().clamp(0.0, 1.0))
}

/// Closed form for qubits: `F² = tr(ρσ) + 2√(det ρ · det σ)`.
pub fn fidelity_qubit(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dim() != 2 || sigma.dim() != 2 {
        return Err(Error::Config("closed-form fidelity needs qubit states".into()));
    }
    check_physical(rho, "rho")?;
    check_physical(sigma, "sigma")?;
    let overlap = (&rho.matrix * &sigma.matrix).trace().re;
    let det = |m: &CMat| (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]).re.max(0.0);
    Ok((overlap + 2.0 * (det(&rho.matrix) * det(&sigma.matrix)).sqrt()).max(0.0).sqrt().min(1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FidelityReport {
    pub fidelity: f64,
    pub rho: DensityOperator,
    pub sigma_target: DensityOperator,
}

/// Compares the reconstructed state with the ideal equatorial state at
/// `target_phase`.
pub fn gate_fidelity(record: &TomographyRecord, target_phase: f64) -> Result<FidelityReport> {
    let rho = ml_reconstruct(record);
    let sigma_target = qubit_density([target_phase.cos(), target_phase.sin(), 0.0]);
    let fidelity = fidelity(&rho, &sigma_target)?;
    Ok(FidelityReport { fidelity, rho, sigma_target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use crate::linalg::expm;
    use crate::propagate::QuantumState;

    fn exact(r: [f64; 3]) -> TomographyRecord {
        tomography(&ReadoutPopulations::from_bloch(r), TomographyMode::Exact)
    }

    #[test]
    fn exact_tomography_examples() {
        let s = 0.5f64.sqrt();
        let plus = QuantumState::from_slice(&[Complex64::from(s), Complex64::from(s)]).unwrap();
        let r = plus.subspace_bloch();
        let rec = exact(r);
        assert_relative_eq!(rec.sx, 1.0, epsilon = 1e-15);
        assert_relative_eq!(rec.sy, 0.0, epsilon = 1e-15);
        assert_relative_eq!(rec.sz, 0.0, epsilon = 1e-15);
        let rec = exact(QuantumState::basis(2, 0).subspace_bloch());
        assert_eq!((rec.sx, rec.sy, rec.sz), (0.0, 0.0, 1.0));
        assert_eq!(rec.shots, 0);
    }

    #[test]
    fn leakage_is_normalised_out() {
        let source = ReadoutPopulations { x_setting: [0.45, 0.45], y_setting: [0.9, 0.0], z_setting: [0.45, 0.45], leakage: 0.1 };
        let rec = tomography(&source, TomographyMode::Exact);
        assert_relative_eq!(rec.sy, 1.0);
        assert_eq!(rec.sx, 0.0);
        assert_eq!(rec.leakage, 0.1);
    }

    #[test]
    fn sampled_estimates_within_binomial_bands() {
        let r = [0.3, -0.6, 0.5];
        let shots = 10_000;
        for seed in 0..20 {
            let rec = tomography(&ReadoutPopulations::from_bloch(r), TomographyMode::Sampled { shots, seed });
            for (est, truth) in rec.bloch().iter().zip(r) {
                // s = 1 − 2k/N, so σ_s = 2√(p(1−p)/N) with p = (1 − s)/2
                let p = (1.0 - truth) / 2.0;
                let sigma = 2.0 * (p * (1.0 - p) / shots as f64).sqrt();
                assert!((est - truth).abs() <= 3.0 * sigma + 1e-12, "seed {seed}: {est} vs {truth}");
            }
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let source = ReadoutPopulations::from_bloch([0.1, 0.2, -0.3]);
        let mode = TomographyMode::Sampled { shots: 500, seed: 42 };
        let a = tomography(&source, mode);
        let b = tomography(&source, mode);
        assert_eq!(a.sx.to_bits(), b.sx.to_bits());
        assert_eq!(a.sy.to_bits(), b.sy.to_bits());
        assert_eq!(a.sz.to_bits(), b.sz.to_bits());
        let c = tomography(&source, TomographyMode::Sampled { shots: 500, seed: 43 });
        assert_ne!(a.bloch(), c.bloch());
    }

    #[test]
    fn phase_examples() {
        assert_eq!(extract_phase(&exact([1.0, 0.0, 0.0])).unwrap(), 0.0);
        for g in [-2.9, -0.4, 0.0, 1.1, 3.0] {
            let rec = exact([0.47 * f64::cos(g), 0.47 * f64::sin(g), 0.0]);
            assert_relative_eq!(extract_phase(&rec).unwrap(), g, epsilon = 1e-12);
        }
        assert!(matches!(extract_phase(&exact([1e-4, 1e-4, 0.9])), Err(Error::UndefinedPhase(_))));
    }

    #[test]
    fn unwrapping_follows_nearest_branch() {
        let truth: Vec<f64> = (0..40).map(|i| 0.3 * i as f64).collect();
        let wrapped: Vec<f64> = truth.iter().map(|&g| crate::linalg::wrap_angle(g)).collect();
        let unwrapped = unwrap_phases(&wrapped, 0.0);
        for (u, t) in unwrapped.iter().zip(&truth) {
            assert_relative_eq!(u, t, epsilon = 1e-12);
        }
        assert_relative_eq!(unwrap_near(0.1, 6.0), 0.1 + TAU);
        let with_gap = unwrap_phases(&[3.0, f64::NAN, -3.0], 0.0);
        assert!(with_gap[1].is_nan());
        assert_relative_eq!(with_gap[2], TAU - 3.0);
    }

    #[test]
    fn reconstruction_examples() {
        let mixed = ml_reconstruct(&exact([0.0, 0.0, 0.0]));
        assert!((mixed.matrix.clone() - CMat::identity(2, 2) * Complex64::from(0.5)).norm() < 1e-15);
        let plus = ml_reconstruct(&exact([1.0, 0.0, 0.0]));
        assert_relative_eq!(plus.matrix[(0, 1)].re, 0.5);
        let mut noisy = exact([1.0, 0.0, 0.0]);
        noisy.sx = 1.05;
        let projected = ml_reconstruct(&noisy);
        assert!((projected.matrix.clone() - plus.matrix.clone()).norm() < 1e-15);
    }

    /// Log-likelihood of the Gaussian model: −|r_data − r|².
    #[test]
    fn projection_maximises_likelihood_over_the_ball() {
        let data = [0.9, -0.5, 0.4];
        let rec = TomographyRecord { sx: data[0], sy: data[1], sz: data[2], shots: 0, seed: 0, leakage: 0.0 };
        let rho = ml_reconstruct(&rec);
        let r = [2.0 * rho.matrix[(1, 0)].re, 2.0 * rho.matrix[(1, 0)].im, (rho.matrix[(0, 0)] - rho.matrix[(1, 1)]).re];
        let cost = |r: [f64; 3]| (0..3).map(|i| (data[i] - r[i]).powi(2)).sum::<f64>();
        let best = cost(r);
        let n = 40;
        for i in 0..=n {
            for j in 0..2 * n {
                let (th, ph) = (PI * i as f64 / n as f64, PI * j as f64 / n as f64);
                for len in [0.5, 0.9, 1.0] {
                    let trial = [len * th.sin() * ph.cos(), len * th.sin() * ph.sin(), len * th.cos()];
                    assert!(cost(trial) >= best - 1e-12);
                }
            }
        }
    }

    #[test]
    fn fidelity_examples() {
        let zero = DensityOperator::from_pure(&QuantumState::basis(2, 0));
        let one = DensityOperator::from_pure(&QuantumState::basis(2, 1));
        let mixed = DensityOperator::maximally_mixed(2);
        assert_relative_eq!(fidelity(&zero, &zero).unwrap(), 1.0, epsilon = 1e-12);
        assert!(fidelity(&zero, &one).unwrap() < 1e-7);
        assert_relative_eq!(fidelity(&zero, &mixed).unwrap(), 0.5f64.sqrt(), epsilon = 1e-12);
        let bad = DensityOperator { matrix: CMat::identity(2, 2) };
        assert!(fidelity(&bad, &zero).is_err());
        let report = gate_fidelity(&exact([0.0, 1.0, 0.0]), PI / 2.0).unwrap();
        assert_relative_eq!(report.fidelity, 1.0, epsilon = 1e-7);
    }

    fn random_unitary(params: &[f64]) -> CMat {
        let h = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::from(params[0]),
                Complex64::new(params[1], params[2]),
                Complex64::new(params[1], -params[2]),
                Complex64::from(params[3]),
            ],
        );
        expm(&(h * (-I)))
    }

    proptest! {
        #[test]
        fn fidelity_properties(
            a in prop::array::uniform3(-0.57f64..0.57),
            b in prop::array::uniform3(-0.57f64..0.57),
            u in prop::collection::vec(-2.0f64..2.0, 4),
        ) {
            let (rho, sigma) = (qubit_density(a), qubit_density(b));
            let f = fidelity(&rho, &sigma).unwrap();
            prop_assert!((f - fidelity(&sigma, &rho).unwrap()).abs() < 1e-10);
            prop_assert!((f - fidelity_qubit(&rho, &sigma).unwrap()).abs() < 1e-10);
            prop_assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-10);
            let u = random_unitary(&u);
            let rot = |d: &DensityOperator| DensityOperator { matrix: &u * &d.matrix * u.adjoint() };
            prop_assert!((fidelity(&rot(&rho), &rot(&sigma)).unwrap() - f).abs() < 1e-10);
        }

        #[test]
        fn reconstruction_is_idempotent(r in prop::array::uniform3(-0.57f64..0.57)) {
            let rho = ml_reconstruct(&exact(r));
            let rec = TomographyRecord {
                sx: 2.0 * rho.matrix[(1, 0)].re,
                sy: 2.0 * rho.matrix[(1, 0)].im,
                sz: (rho.matrix[(0, 0)] - rho.matrix[(1, 1)]).re,
                shots: 0, seed: 0, leakage: 0.0,
            };
            let again = ml_reconstruct(&rec);
            prop_assert!((again.matrix - rho.matrix).norm() < 1e-15);
        }

        #[test]
        fn phase_is_shrinkage_invariant(g in -3.1f64..3.1, c in 0.01f64..=1.0) {
            let full = extract_phase(&exact([g.cos(), g.sin(), 0.0])).unwrap();
            let shrunk = extract_phase(&exact([c * g.cos(), c * g.sin(), 0.0])).unwrap();
            prop_assert!((full - shrunk).abs() < 1e-12);
        }
    }
}
