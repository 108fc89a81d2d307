//! Courteous trajectory planning for two-agent driving interactions.
//!
//! The robot car plans with a compound objective: its own (selfish) cost plus
//! `lambda_c` times the inconvenience it causes the human driver, measured as
//! the hinge-clipped increase of the human's best-response cost over one of
//! three alternative worlds. The crate also contains a closed-loop MPC
//! simulator, built-in interaction scenarios, and a maximum-entropy IRL
//! pipeline that learns the cost weights (including `lambda_c`) from
//! demonstrations.
//!
//! The numeric core (`dynamics`, `cost`, `optimizer`, `best_response`,
//! `courtesy`) is generic over [`Real`] (`f32` or `f64`); scenario handling,
//! simulation and learning work in `f64`. Generic types default to `f64`, and
//! `f32` aliases are provided below.

pub mod best_response;
pub mod cost;
pub mod courtesy;
pub mod data;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod irl;
pub mod optimizer;
pub mod real;
pub mod scenario;
pub mod sim;

pub use cost::{AgentGoal, CostWeights, FeatureVector, Perspective, Scene};
pub use courtesy::{CourtesyMode, PlannerResult, PlannerSettings};
pub use dynamics::{AgentState, Control, ControlLimits, JointState, Trajectory, VehicleModel, VehicleParams};
pub use error::{Error, Result};
pub use optimizer::OptimizerSettings;
pub use real::Real;
pub use scenario::Scenario;

pub type AgentState32 = AgentState<f32>;
pub type Control32 = Control<f32>;
pub type JointState32 = JointState<f32>;
pub type Trajectory32 = Trajectory<f32>;
pub type CostWeights32 = CostWeights<f32>;
pub type Scene32 = Scene<f32>;
pub type PlannerResult32 = PlannerResult<f32>;
