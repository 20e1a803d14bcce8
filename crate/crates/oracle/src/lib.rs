//! Independent reference solvers for cross-checking the core library.
//!
//! The allocation game is re-assembled here from the scenario without the
//! null-space reduction and handed to Clarabel; route prices come from
//! Floyd-Warshall rather than the core's label-setting search.

pub mod game;
pub mod instances;
pub mod qp;
pub mod search;

pub use game::{route_prices, DirectGame};
pub use instances::{random_capacity, random_scenario, strictly_complementary, InstanceLimits};
pub use qp::{project_box_halfspace, DenseQp, QpResult};
pub use search::{grid_search, GridOptimum};
