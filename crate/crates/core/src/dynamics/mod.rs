//! Noise, transport, time stepping and the stochastic convolution.

pub mod noise;
pub mod ou;
pub mod stepper;
pub mod trajectory;
pub mod transport;

pub use noise::{regularity_check, NoiseModel, NoiseSpec, RegularityReport};
pub use ou::{ou_step, ou_step_coupled, OuState};
pub use stepper::{Model, PathState};
pub use trajectory::{run_from_state, run_trajectory, RecordOptions, TrajectoryRecord};
pub use transport::{advect, max_grad_psi, nonlinear_term, self_advection};
