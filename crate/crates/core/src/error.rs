use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate effective field: drive strength and detuning both vanish")]
    DegenerateField,

    #[error("solid angle {0} rad is outside [0, 2π)")]
    SolidAngleOutOfRange(f64),

    #[error("charge basis not converged at cutoff {cutoff}: doubling changed results by {change:e} (relative)")]
    NotConverged { cutoff: usize, change: f64 },

    #[error("degenerate dressed states at step {step}: overlaps {first} and {second} cannot be told apart")]
    Degeneracy { step: usize, first: f64, second: f64 },

    #[error("outside perturbative validity domain: denominator {denominator:e} too close to zero")]
    ValidityDomain { denominator: f64 },

    #[error("DRAG correction needs a nonzero anharmonicity")]
    ZeroAnharmonicity,

    #[error("drive phase jumps by {jump:e} rad at t = {t_ns} ns")]
    PhaseDiscontinuity { t_ns: f64, jump: f64 },

    #[error("sampling step {dt_ps} ps does not divide segment of {duration_ns} ns")]
    SampleGrid { dt_ps: f64, duration_ns: f64 },

    #[error("step size too large: norm drift {drift:e} exceeds {bound:e}")]
    StepSize { drift: f64, bound: f64 },

    #[error("unphysical coherence times: T1 = {t1_us} us, T2* = {t2_star_us} us")]
    UnphysicalCoherence { t1_us: f64, t2_star_us: f64 },

    #[error("phase undefined: in-plane Bloch length squared {0:e} below threshold")]
    UndefinedPhase(f64),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 1,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_config_from_numerics() {
        assert_eq!(Error::Config("x".into()).exit_code(), 1);
        assert_eq!(Error::StepSize { drift: 1e-6, bound: 1e-8 }.exit_code(), 2);
        assert_eq!(Error::NotConverged { cutoff: 10, change: 1e-3 }.exit_code(), 2);
        assert_eq!(Error::UndefinedPhase(0.0).exit_code(), 2);
    }
}
