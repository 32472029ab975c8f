//! Pseudo-spectral simulation of damped, stochastically forced three-layer
//! quasi-geostrophic flow on a rectangle with Dirichlet boundary conditions,
//! together with the diagnostics used to study its limits: Galerkin
//! refinement, vanishing viscosity, stability under perturbation, a-priori
//! norm envelopes and time-averaged measures.

pub mod bounds;
pub mod config;
pub mod coupling;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod measures;
pub mod observables;
pub mod rng;
pub mod spectral;

pub use config::{InitialDatum, SimConfig};
pub use coupling::{
    lambda_from_physical, Eigenpair, EllipticSolver, LayerCoupling, OperatorEigenpairs,
    VelocityField,
};
pub use dynamics::{
    nonlinear_term, ou_step, regularity_check, run_trajectory, Model, NoiseModel, NoiseSpec,
    OuState, PathState, RecordOptions, TrajectoryRecord,
};
pub use error::{Error, Result};
pub use observables::{Component, Observable};
pub use spectral::{LayerField, Representation, ScalarField, SpectralBasis, NUM_LAYERS};
