//! Numerics for the one-dimensional eigendamage model of cohesive fracture.
//!
//! The crate evaluates the non-local two-field energy `E_eps(u, g)`, its limit
//! `E(u, gamma)` and the one-field cohesive energy `F(u)`, minimizes them,
//! measures flat-norm distances between measures and runs constructive
//! convergence experiments along a ladder of `eps` values.

pub mod constitutive;
pub mod energy;
pub mod error;
pub mod fields;
pub mod flatnorm;
pub mod gamma_harness;
pub mod solver;

pub use constitutive::{f_surface, g_star, psi, ConstitutiveParams};
pub use energy::{
    energy_eps, energy_eps_on, energy_f, energy_limit, energy_limit_bc, energy_limit_on, EnergyBreakdown,
    QuadratureSpec,
};
pub use error::{Error, Result};
pub use fields::{
    cantor_staircase, derivative, window_integral, Atom, BVDisplacement, CellField, Domain, GridDisplacement, Jump,
    Measure1D, WindowIntegrator,
};
pub use flatnorm::{flat_distance, flat_norm, FlatNormResult};
pub use gamma_harness::{
    convergence_row, jump_localization, recovery_domain, recovery_sequence, run_convergence_experiment,
    sbv2_approximation, sbv2_approximation_pair, select_grid, ConvergenceRow, GridSelection, DEFAULT_SHIFT_SAMPLES,
};
pub use solver::{
    brute_force_min_g, min_energy_limit, minimize_energy_eps, solve_g_given_u, solve_u_given_g, tension_limit_energy,
    SolveOptions, SolveReport,
};
