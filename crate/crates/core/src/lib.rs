//! Distributed output regulation of flow networks under transient input and
//! flow constraints.
//!
//! The plant is a network of storage nodes `T_x ẋ = Ψ(x) − Bλ + Eu − d` with
//! saturated flows `λ = f(μ)` and inputs `u = g(θ)`. Flow controllers act on
//! output differences across each edge; input controllers reach consensus on
//! marginal costs over a communication graph, so that at steady state outputs
//! sit at their setpoints and inputs minimise a quadratic cost.
//!
//! Numerics are generic over [`Real`] (`f32` or `f64`); the `*F64` aliases
//! below cover the common case.

pub mod analysis;
pub mod controllers;
pub mod error;
pub mod graph;
pub mod linalg;
pub mod model;
pub mod optimum;
pub mod real;
pub mod saturation;
pub mod sim;

pub use controllers::{ControllerConfig, ControllerState};
pub use error::{Error, Result};
pub use graph::{CommGraph, NetworkTopology};
pub use linalg::Matrix;
pub use model::{CompartmentalParams, PlantParams, Schedule, Setpoint, Variant};
pub use optimum::OptimalAllocation;
pub use real::Real;
pub use saturation::Saturation;
pub use sim::{ClosedLoop, Equilibrium, Initial, RunLog, SimSettings, SimState};

pub type MatrixF64 = Matrix<f64>;
pub type SaturationF64 = Saturation<f64>;
pub type CommGraphF64 = CommGraph<f64>;
pub type PlantParamsF64 = PlantParams<f64>;
pub type CompartmentalParamsF64 = CompartmentalParams<f64>;
pub type ControllerConfigF64 = ControllerConfig<f64>;
pub type ControllerStateF64 = ControllerState<f64>;
pub type ScheduleF64 = Schedule<f64>;
pub type ClosedLoopF64 = ClosedLoop<f64>;
pub type EquilibriumF64 = Equilibrium<f64>;
pub type RunLogF64 = RunLog<f64>;
pub type SimSettingsF64 = SimSettings<f64>;
