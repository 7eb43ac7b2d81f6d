//! Structure-preserving integration of stochastic Poisson systems.
//!
//! A stochastic Poisson system couples a skew-symmetric structure matrix
//! B(y) satisfying the Jacobi identity with a drift Hamiltonian H₀ and one
//! Hamiltonian per Stratonovich noise:
//!
//! ```text
//! dy = B(y) (∇H₀(y) dt + Σ_r ∇H_r(y) ∘ dW_r)
//! ```
//!
//! The crate provides diagonal implicit stochastic Runge-Kutta methods
//! (compositions of implicit-midpoint substeps) and chart-transformed
//! stepping in canonical coordinates, together with the machinery to audit
//! what these methods preserve: Casimirs, quadratic invariants, and the
//! Poisson structure itself. Two benchmark systems ship with the crate, a
//! stochastic rigid body and a linear system with a closed-form solution,
//! plus mean-square order estimation against coupled references.
//!
//! Entry points:
//! - [`systems::SystemRegistry`] and [`method::MethodRegistry`] resolve
//!   systems and methods by name.
//! - [`solver::integrate_path`] drives one sampled path; [`method::Integrator`]
//!   is the trait the registries hand back.
//! - [`analysis::mean_square_order`] estimates strong convergence order;
//!   [`analysis::verify_structure`] audits preservation properties.

pub mod analysis;
pub mod error;
pub mod expm;
pub mod method;
pub mod poisson;
pub mod solver;
pub mod systems;
pub mod tableau;
pub mod transform;
pub mod wiener;

pub use analysis::{
    check_poisson_structure, invariant_drift, mean_square_order, step_jacobian, verify_structure,
    OrderEstimate, OrderStudyConfig, Reference, StructureReport, StructureTolerances,
};
pub use error::{Error, Result};
pub use expm::expm;
pub use method::{
    default_tableau, default_weights, Integrator, MethodRegistry, SrkIntegrator,
    TransformedIntegrator,
};
pub use poisson::{
    check_jacobi_identity, check_skew_symmetry, drift_diffusion_field, poisson_bracket,
    HamiltonianSpec, PoissonSystemDef, State, StructureMatrix,
};
pub use solver::{
    integrate_path, srk_step, truncated_increment, StepContext, StepOutcome, Trajectory,
};
pub use systems::{
    linear_exact_solution, linear_sps_system, midpoint_reference_step, rigid_body_system,
    LinearSpsDef, RigidBodyParams, SystemEntry, SystemRegistry,
};
pub use tableau::{check_symplectic_conditions, SrkTableau, SymplecticReport};
pub use transform::{
    canonical_system, rigid_body_chart, transformed_srk_step, CoordinateChart, EPS_DOMAIN,
};
pub use wiener::WienerPath;
