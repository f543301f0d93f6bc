//! Kelly and Wasserstein-Kelly portfolio construction.
//!
//! The crate computes growth-optimal portfolios from historical log-returns,
//! their distributionally robust counterparts over a type-p Wasserstein ball,
//! and an independent brute-force oracle for the duality that turns the
//! robust problem into a finite convex program. Backtesting and the
//! experiment drivers sit on top.

pub mod backtest;
pub mod data_ingest;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod extended;
pub mod inner_oracle;
mod simplex_newton;
pub mod solver_kelly;
pub mod solver_wkelly;
pub mod synthetic;

pub use domain::{
    convert_returns, make_weights, BallSpec, GroundNorm, ReturnKind, ReturnsMatrix,
    RobustSolution, SimplexWeights, SolverSettings, SolverStatus,
};
pub use error::{Error, Result};
pub use extended::ExtReal;
