//! Single-room household text environment.

mod action;
mod catalog;
mod dynamics;
mod render;
mod scene;
mod state;
mod task;

pub use action::{parse_command, Action, ParseError, Verb};
pub use catalog::{Affordances, Catalog, ObjectClass, ReceptacleClass, RoomKind};
pub use dynamics::{permissible_actions, step, Env, StepOutcome};
pub use render::{render_list, render_observation, Entity, EntityKind, Feedback, Observation, View, ViewLead};
pub use scene::{
    generate_layout, generate_scene, generate_scene_filtered, reference_bathroom, sample_task, scene_from_jsonl, scene_to_jsonl,
    task_combos, Scene, SceneConfig, MAX_ATTEMPTS,
};
pub(crate) use scene::task_rng;
pub use state::{Condition, InstanceName, Location, Object, ObjectId, Receptacle, ReceptacleId, WorldState};
pub use task::{TaskSpec, TaskType};

#[derive(Debug, thiserror::Error)]
pub enum WorldError {
    #[error("catalog: {0}")]
    Catalog(String),
    #[error("bad instance name `{0}`")]
    BadName(String),
    #[error("state invariant violated: {0}")]
    Invariant(String),
    #[error("invalid scene config: {0}")]
    Config(String),
    #[error("no solvable scene for seed {seed} after {attempts} attempts")]
    Unsolvable { seed: u64, attempts: u32 },
    #[error("scene file: {0}")]
    SceneFile(String),
}
