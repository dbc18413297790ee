//! Vortex dynamics laboratory for the Landau-Lifshitz-Gilbert equation and the
//! mixed-dynamics Ginzburg-Landau equation in two dimensions.
//!
//! The crate is organised the way the computations are used:
//!
//! * [`grid`], [`field`], [`seed`]: lattice domains, field storage and vortex initial data.
//! * [`ops`], [`stencil`]: discrete differential operators.
//! * [`diagnostics`]: energy density, vorticity, planar Jacobian, vortex tracking.
//! * [`renorm`]: canonical harmonic map and renormalized energy.
//! * [`llg`], [`glmixed`]: PDE time integration.
//! * [`motion`]: limiting point-vortex ODEs.
//! * [`harness`]: scenarios, PDE/ODE comparison and persisted outputs.

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod glmixed;
pub mod grid;
pub mod harness;
pub mod llg;
pub mod motion;
pub mod ops;
pub mod radial;
pub mod renorm;
pub mod seed;
pub mod solver;
pub mod stencil;
mod stepper;
pub mod trajectory;
pub mod vec3;
pub mod vortex;

pub use error::{Result, VortexError};
pub use field::{ComplexField, DirectorField, ScalarField, Staggering, TensorField, VectorField};
pub use grid::{make_grid, BoundaryCondition, BoundaryData, Domain, Grid2D};
pub use stepper::Scheme;
pub use vec3::Vec3;
pub use vortex::{rho, EpsilonSchedule, Point, Vortex, VortexSet};
