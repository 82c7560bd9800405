//! Molecular dynamics and trajectory analysis.

mod engine;
mod observables;

pub use engine::{
    density_of, maxwell_boltzmann, run_md, temperature, total_kinetic, AnomalyThresholds, Ensemble, MdError,
    MdProtocol, RunStatus, Snapshot, StepHook, StopReason, Trajectory,
};
pub use observables::{
    check_convergence, density_series, diffusion_coefficient, linear_fit, mean, msd, rdf, Convergence,
    ConvergenceMethod, ObservableError, Rdf,
};
