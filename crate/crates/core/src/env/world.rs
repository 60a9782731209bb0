use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use super::model::{advance, Model};

pub type EntityId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("entity {0} already exists")]
    DuplicateEntity(EntityId),
    #[error("entity {0} has no model and cannot take inputs")]
    NotModeled(EntityId),
    #[error("entity {id}: expected dimension {expected}, got {got}")]
    DimensionMismatch { id: EntityId, expected: usize, got: usize },
    #[error("sampling time must be positive, got {0}")]
    InvalidDt(f64),
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.min[0] + self.max[0]) / 2.0, (self.min[1] + self.max[1]) / 2.0]
    }

    /// Euclidean distance from `p` to the closest point of the rectangle.
    pub fn distance_to(&self, p: [f64; 2]) -> f64 {
        let dx = (self.min[0] - p[0]).max(0.0).max(p[0] - self.max[0]);
        let dy = (self.min[1] - p[1]).max(0.0).max(p[1] - self.max[1]);
        dx.hypot(dy)
    }

    pub fn inflate(&self, margin: f64) -> Rect {
        Rect::new(
            [self.min[0] - margin, self.min[1] - margin],
            [self.max[0] + margin, self.max[1] + margin],
        )
    }

    pub fn overlaps(&self, other: &Rect) -> bool {
        self.min[0] < other.max[0]
            && other.min[0] < self.max[0]
            && self.min[1] < other.max[1]
            && other.min[1] < self.max[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disc { radius: f64 },
    Box { half_extents: [f64; 2] },
}

impl Shape {
    fn touches(&self, center: [f64; 2], obstacle: &Rect) -> bool {
        match *self {
            Shape::Disc { radius } => obstacle.distance_to(center) < radius,
            Shape::Box { half_extents } => Rect::new(
                [center[0] - half_extents[0], center[1] - half_extents[1]],
                [center[0] + half_extents[0], center[1] + half_extents[1]],
            )
            .overlaps(obstacle),
        }
    }
}

/// Physical object in the world. Entities without a model are static obstacles.
#[derive(Clone)]
pub struct Entity {
    pub id: EntityId,
    pub state: Vec<f64>,
    pub model: Option<Arc<dyn Model>>,
    pub shape: Shape,
}

impl fmt::Debug for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Entity")
            .field("id", &self.id)
            .field("state", &self.state)
            .field("model", &self.model.as_ref().map(|m| m.name()))
            .field("shape", &self.shape)
            .finish()
    }
}

impl Entity {
    pub fn modeled(id: EntityId, model: Arc<dyn Model>, state: Vec<f64>, shape: Shape) -> Self {
        Self { id, state, model: Some(model), shape }
    }

    pub fn obstacle(id: EntityId, position: [f64; 2], shape: Shape) -> Self {
        Self { id, state: position.to_vec(), model: None, shape }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.state[0], self.state[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ObstacleRef {
    Wall(usize),
    Entity(EntityId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub entity: EntityId,
    pub obstacle: ObstacleRef,
}

/// What happened during one [`World2D::step`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: u64,
    pub boundary_violations: Vec<EntityId>,
    pub collisions: Vec<Collision>,
    pub clamped: Vec<EntityId>,
}

/// Sensing mode of a perception query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sensing {
    Omniscient,
    Range(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Percept {
    pub id: EntityId,
    pub pose: Vec<f64>,
    pub distance: f64,
}

/// Built-in 2D kinematic world: no contact dynamics, collisions are reported.
#[derive(Debug, Clone)]
pub struct World2D {
    entities: BTreeMap<EntityId, Entity>,
    bounds: Rect,
    walls: Vec<Rect>,
    dt: f64,
    step: u64,
    seed: u64,
    rngs: BTreeMap<EntityId, ChaCha8Rng>,
}

impl World2D {
    pub fn new(bounds: Rect, dt: f64, seed: u64) -> Result<Self, EnvError> {
        if !(dt > 0.0) {
            return Err(EnvError::InvalidDt(dt));
        }
        Ok(Self {
            entities: BTreeMap::new(),
            bounds,
            walls: Vec::new(),
            dt,
            step: 0,
            seed,
            rngs: BTreeMap::new(),
        })
    }

    pub fn with_walls(mut self, walls: Vec<Rect>) -> Self {
        self.walls = walls;
        self
    }

    pub fn add_entity(&mut self, entity: Entity) -> Result<(), EnvError> {
        if self.entities.contains_key(&entity.id) {
            return Err(EnvError::DuplicateEntity(entity.id));
        }
        if let Some(model) = &entity.model {
            if model.state_dim() != entity.state.len() {
                return Err(EnvError::DimensionMismatch {
                    id: entity.id,
                    expected: model.state_dim(),
                    got: entity.state.len(),
                });
            }
        } else if entity.state.len() < 2 {
            return Err(EnvError::DimensionMismatch { id: entity.id, expected: 2, got: entity.state.len() });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ u64::from(entity.id));
        rng.set_stream(1);
        self.rngs.insert(entity.id, rng);
        self.entities.insert(entity.id, entity);
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn bounds(&self) -> &Rect {
        &self.bounds
    }

    pub fn walls(&self) -> &[Rect] {
        &self.walls
    }

    pub fn entity(&self, id: EntityId) -> Option<&Entity> {
        self.entities.get(&id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn state_of(&self, id: EntityId) -> Result<&[f64], EnvError> {
        self.entities.get(&id).map(|e| e.state.as_slice()).ok_or(EnvError::UnknownEntity(id))
    }

    /// Overwrites an entity state; used by scenario setup and tests.
    pub fn set_state(&mut self, id: EntityId, state: Vec<f64>) -> Result<(), EnvError> {
        let entity = self.entities.get_mut(&id).ok_or(EnvError::UnknownEntity(id))?;
        if entity.state.len() != state.len() {
            return Err(EnvError::DimensionMismatch { id, expected: entity.state.len(), got: state.len() });
        }
        entity.state = state;
        Ok(())
    }

    /// Advances every modeled entity by one sampling period. Entities missing
    /// from `inputs` receive a zero input.
    pub fn step(&mut self, inputs: &BTreeMap<EntityId, Vec<f64>>) -> Result<StepReport, EnvError> {
        for (&id, input) in inputs {
            let entity = self.entities.get(&id).ok_or(EnvError::UnknownEntity(id))?;
            let model = entity.model.as_ref().ok_or(EnvError::NotModeled(id))?;
            if input.len() != model.input_dim() {
                return Err(EnvError::DimensionMismatch { id, expected: model.input_dim(), got: input.len() });
            }
        }

        let mut report = StepReport { step: self.step + 1, ..StepReport::default() };
        let dt = self.dt;
        for (id, entity) in self.entities.iter_mut() {
            let Some(model) = entity.model.clone() else { continue };
            let zero;
            let input = match inputs.get(id) {
                Some(input) => input.as_slice(),
                None => {
                    zero = vec![0.0; model.input_dim()];
                    zero.as_slice()
                }
            };
            let rng = self.rngs.get_mut(id).expect("rng registered with entity");
            let out = advance(model.as_ref(), &entity.state, input, dt, rng);
            if out.clamped {
                warn!(entity = id, "input clamped to model bounds");
                report.clamped.push(*id);
            }
            entity.state = out.state;
        }
        self.step += 1;

        let statics: Vec<(EntityId, [f64; 2], Shape)> = self
            .entities
            .values()
            .filter(|e| e.model.is_none())
            .map(|e| (e.id, e.position(), e.shape))
            .collect();
        for entity in self.entities.values().filter(|e| e.model.is_some()) {
            let p = entity.position();
            if !self.bounds.contains(p) {
                report.boundary_violations.push(entity.id);
            }
            for (idx, wall) in self.walls.iter().enumerate() {
                if entity.shape.touches(p, wall) {
                    report.collisions.push(Collision { entity: entity.id, obstacle: ObstacleRef::Wall(idx) });
                }
            }
            for &(sid, spos, sshape) in &statics {
                let footprint = match sshape {
                    Shape::Disc { radius } => Rect::new([spos[0] - radius, spos[1] - radius], [spos[0] + radius, spos[1] + radius]),
                    Shape::Box { half_extents } => Rect::new(
                        [spos[0] - half_extents[0], spos[1] - half_extents[1]],
                        [spos[0] + half_extents[0], spos[1] + half_extents[1]],
                    ),
                };
                if entity.shape.touches(p, &footprint) {
                    report.collisions.push(Collision { entity: entity.id, obstacle: ObstacleRef::Entity(sid) });
                }
            }
        }
        Ok(report)
    }

    /// Entities visible from `observer`, sorted by id. Distances are Euclidean
    /// on the position components; the ranged sensor is a closed ball.
    pub fn perceive(&self, observer: EntityId, sensing: Sensing) -> Result<Vec<Percept>, EnvError> {
        let origin = self.entities.get(&observer).ok_or(EnvError::UnknownEntity(observer))?.position();
        Ok(self
            .entities
            .values()
            .filter(|e| e.id != observer)
            .map(|e| {
                let p = e.position();
                Percept { id: e.id, pose: e.state.clone(), distance: (p[0] - origin[0]).hypot(p[1] - origin[1]) }
            })
            .filter(|p| match sensing {
                Sensing::Omniscient => true,
                Sensing::Range(r) => p.distance <= r,
            })
            .collect())
    }
}
