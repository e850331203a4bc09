//! Optimal maintenance of a degrading system modelled as a piecewise
//! deterministic Markov process: model primitives, discretized laws,
//! Bellman operators, a value-iteration solver and a Monte Carlo simulator.

pub mod config;
pub mod dists;
pub mod error;
pub mod model;
pub mod operators;
pub mod persist;
pub mod policy;
pub mod real;
pub mod sim;
pub mod solver;
pub mod table;

pub use config::{GradualForm, ModelConfig};
pub use error::{Error, Result};
pub use model::{Action, BoundaryKind, SystemState};
pub use operators::Operators;
pub use persist::{load_table, read_table, save_table};
pub use policy::{ActionTable, Policy};
pub use real::Real;
pub use sim::{monte_carlo, simulate_path, threshold_sweep, MCStats, PathRecord, SimOptions, Simulator};
pub use solver::{extract_policy, iterate_to_fixpoint, solve, SolveOptions, SolveReport, SweepOrder};
pub use table::{Cell, Grid, ValueTable};

pub type Config = ModelConfig<f64>;
pub type State = SystemState<f64>;
pub type Table = ValueTable<f64>;
