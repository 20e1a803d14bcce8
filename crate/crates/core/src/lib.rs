//! Co-design of virtual capacity curves (VCCs) and batch-job allocations for a
//! geographically distributed data-center fleet.
//!
//! The operator (leader) picks per-DC, per-step capacity limits `x`. Compute
//! teams (followers) then settle on a variational equilibrium `y*(x)` of a
//! shared-constraint game. The leader descends the hypergradient of its
//! carbon/peak/migration objective through the equilibrium sensitivity.

pub mod baselines;
pub mod bilevel;
pub mod fleet;
pub mod game;
pub mod grid;
pub mod params;
pub mod qp;
pub mod report;
pub mod scenario;
pub mod sensitivity;

pub use fleet::{DataCenterFleet, Edge, FleetError, MigrationPath, PathTable};
pub use grid::Grid;
pub use params::{SolverParams, StepRule};
pub use scenario::{ComputeJob, Scenario, ScenarioError};
