//! Closed-loop simulation: geometry, sensing, vehicle dynamics and scenarios.

pub mod controller;
pub mod dynamics;
pub mod scenario;
pub mod sensor;
pub mod world;

pub use controller::{ControllerError, Ellipse, NominalController, Reference, VelocityWaypoint};
pub use dynamics::{DynamicsConfig, PlantState, YawMode};
pub use scenario::{
    apply_overrides, path_tag, run_scenario, Collision, ConfigError, FilterConfig, InitialState,
    RecordedMessage, RunError, RunOutcome, ScenarioConfig, Simulation, StepError, StepInput,
    WorldSource, CODE_VERSION,
};
pub use sensor::SensorModel;
pub use world::{Aabb, Obstacle, Shape, World};
