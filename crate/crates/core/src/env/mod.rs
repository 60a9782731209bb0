//! Facade over the built-in 2D kinematic world: entities, dynamic models,
//! actuation noise, walls and perception queries.

mod model;
mod world;

pub use model::{
    advance, step_unicycle, wrap_angle, Advance, InputBound, Model, NoiseFamily, NoiseSpec,
    SingleIntegratorModel, UnicycleModel,
};
pub use world::{
    Collision, EntityId, Entity, EnvError, ObstacleRef, Percept, Rect, Sensing, Shape, StepReport,
    World2D,
};
