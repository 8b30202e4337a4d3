//! Optimal liquidation of multi-asset portfolios under participation caps and
//! bid-ask spread costs.
//!
//! The optimal trading curve is obtained from the dual of the discrete
//! liquidation problem: a semi-implicit gradient descent minimizes the dual
//! objective over the costate path `p`, and holdings are read back from
//! finite differences of `p`.

pub mod cli;
pub mod dual;
pub mod hamiltonian;
pub mod model;
pub mod numeric;
pub mod oracles;
pub mod presets;
pub mod problem_file;
pub mod solver;

pub use model::{
    AssetSpec, CostModel, CovarianceMatrix, DualPath, LiquidationProblem, PathMatrix, TimeGrid,
    Trajectory, ValidationError, ValidationErrors, VolumeProfile,
};
pub use solver::{solve, SolveError, SolveReport, SolverConfig, StepSize};
