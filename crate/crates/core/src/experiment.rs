//! One interferometer run: propagate up to the tomography pulse, then branch
//! into the two tomography settings and read out.

use crate::adiabatic::PhaseResult;
use crate::error::Result;
use crate::estimate::{extract_phase, tomography, ReadoutPopulations, TomographyMode, TomographyRecord};
use crate::model::DeviceParams;
use crate::propagate::{
    lindblad_propagate_span, schrodinger_propagate_span, DensityOperator, PropagationOptions, QuantumState,
    TrajectoryRecord,
};
use crate::sequence::{build_interferometer_sequence, Contour, PulseSequence, Rotation, SequenceOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dynamics {
    Unitary,
    Lindblad,
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub params: DeviceParams,
    /// rad/s
    pub delta: f64,
    pub tau_ns: f64,
    pub sequence: SequenceOptions,
    pub propagation: PropagationOptions,
    pub dynamics: Dynamics,
    pub tomography: TomographyMode,
}

#[derive(Clone, Debug)]
pub struct ContourRun {
    pub contour: Contour,
    pub a_solid: f64,
    pub record: TomographyRecord,
    /// Extracted phase in (−π, π]; `None` when the in-plane Bloch vector vanished.
    pub gamma: Option<f64>,
    pub bloch_length: f64,
    /// Largest population outside the qubit subspace during the sequence.
    pub p2_max: f64,
    /// Trajectory up to the tomography pulse, then through the σ_x setting.
    pub trajectory: TrajectoryRecord,
}

impl ExperimentConfig {
    pub fn build(&self, contour: Contour, a_solid: f64) -> Result<PulseSequence> {
        let options = SequenceOptions { tomography: Rotation::TomographyY, ..self.sequence.clone() };
        build_interferometer_sequence(contour, a_solid, self.delta, self.params.alpha2(), self.tau_ns, &options)
    }
}

/// Phase the interferometer should show for `contour` given the per-loop
/// prediction of the `−+` contour.
pub fn contour_prediction(prediction: &PhaseResult, contour: Contour) -> f64 {
    prediction.gamma_pred * contour.phase_sign()
}

pub fn run_contour(config: &ExperimentConfig, contour: Contour, a_solid: f64) -> Result<ContourRun> {
    let seq_x = config.build(contour, a_solid)?;
    let seq_y = seq_x.with_final_rotation(Rotation::TomographyX);
    let split = seq_x.final_segment_start_ns();
    let end = seq_x.total_duration_ns;
    let n = config.params.n_levels;
    let opts = &config.propagation;
    let branch = PropagationOptions { record_interval_ns: opts.record_interval_ns, ..opts.clone() };
    let (readout, trajectory) = match config.dynamics {
        Dynamics::Unitary => {
            let psi0 = QuantumState::basis(n, 0);
            let (pre, rec) = schrodinger_propagate_span(&seq_x, &config.params, &psi0, 0.0, split, opts)?;
            let (x, tail) = schrodinger_propagate_span(&seq_x, &config.params, &pre, split, end, &branch)?;
            let (y, _) = schrodinger_propagate_span(&seq_y, &config.params, &pre, split, end, &branch)?;
            let mut rec = rec;
            rec.extend(tail);
            (ReadoutPopulations::from_states(&x, &y, &pre), rec)
        }
        Dynamics::Lindblad => {
            let rho0 = DensityOperator::from_pure(&QuantumState::basis(n, 0));
            let (pre, rec) = lindblad_propagate_span(&seq_x, &config.params, &rho0, 0.0, split, opts)?;
            let (x, tail) = lindblad_propagate_span(&seq_x, &config.params, &pre, split, end, &branch)?;
            let (y, _) = lindblad_propagate_span(&seq_y, &config.params, &pre, split, end, &branch)?;
            let mut rec = rec;
            rec.extend(tail);
            (ReadoutPopulations::from_states(&x, &y, &pre), rec)
        }
    };
    let record = tomography(&readout, config.tomography);
    Ok(ContourRun {
        contour,
        a_solid,
        record,
        gamma: extract_phase(&record).ok(),
        bloch_length: record.bloch_length(),
        p2_max: trajectory.max_leakage(),
        trajectory,
    })
}
