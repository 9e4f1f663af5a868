//! Task definitions and goal predicates.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::catalog::Affordances;
use super::state::{Location, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    PickAndPlace,
    PickTwoAndPlace,
    HeatAndPlace,
    CoolAndPlace,
    CleanAndPlace,
    ExamineInLight,
}

impl TaskType {
    pub const ALL: [TaskType; 6] = [
        TaskType::PickAndPlace,
        TaskType::PickTwoAndPlace,
        TaskType::HeatAndPlace,
        TaskType::CoolAndPlace,
        TaskType::CleanAndPlace,
        TaskType::ExamineInLight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::PickAndPlace => "pick_and_place",
            TaskType::PickTwoAndPlace => "pick_two_and_place",
            TaskType::HeatAndPlace => "heat_and_place",
            TaskType::CoolAndPlace => "cool_and_place",
            TaskType::CleanAndPlace => "clean_and_place",
            TaskType::ExamineInLight => "examine_in_light",
        }
    }

    /// Affordance the target object needs for this task type.
    pub fn required_object_affordance(self) -> Affordances {
        match self {
            TaskType::HeatAndPlace => Affordances::HEATABLE,
            TaskType::CoolAndPlace => Affordances::COOLABLE,
            TaskType::CleanAndPlace => Affordances::CLEANABLE,
            _ => Affordances::PICKUPABLE,
        }
    }

    /// Receptacle affordance that must exist in the scene (the condition source).
    pub fn required_source(self) -> Option<Affordances> {
        match self {
            TaskType::HeatAndPlace => Some(Affordances::HEAT_SOURCE),
            TaskType::CoolAndPlace => Some(Affordances::COOL_SOURCE),
            TaskType::CleanAndPlace => Some(Affordances::CLEAN_SOURCE),
            TaskType::ExamineInLight => Some(Affordances::LIGHT_SOURCE),
            _ => None,
        }
    }

    /// The two goal-text templates of each type; `{o}` object, `{r}` receptacle.
    pub fn templates(self) -> [&'static str; 2] {
        match self {
            TaskType::PickAndPlace => ["put a {o} in {r}", "put some {o} on {r}"],
            TaskType::PickTwoAndPlace => ["put two {o} in {r}", "find two {o} and put them in {r}"],
            TaskType::HeatAndPlace => ["heat some {o} and put it in {r}", "put a hot {o} in {r}"],
            TaskType::CoolAndPlace => ["cool some {o} and put it in {r}", "put a cool {o} in {r}"],
            TaskType::CleanAndPlace => {
                ["clean some {o} and put it in {r}", "put a clean {o} in {r}"]
            }
            TaskType::ExamineInLight => ["look at {o} under the {r}", "examine the {o} with the {r}"],
        }
    }
}

impl fmt::Display for TaskType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Goal definition for one episode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_type: TaskType,
    pub target_object: String,
    /// Destination class; the light source class for examine tasks.
    pub target_receptacle: String,
    pub goal_text: String,
    pub scene_seed: u64,
}

impl TaskSpec {
    pub fn new(
        task_type: TaskType,
        target_object: impl Into<String>,
        target_receptacle: impl Into<String>,
        template: usize,
        scene_seed: u64,
    ) -> Self {
        let target_object = target_object.into();
        let target_receptacle = target_receptacle.into();
        let goal_text = task_type.templates()[template % 2]
            .replace("{o}", &target_object)
            .replace("{r}", &target_receptacle);
        TaskSpec { task_type, target_object, target_receptacle, goal_text, scene_seed }
    }

    /// Number of target objects the goal requires in the destination.
    pub fn required_count(&self) -> usize {
        if self.task_type == TaskType::PickTwoAndPlace {
            2
        } else {
            1
        }
    }

    /// Goal predicate, evaluated from the state alone.
    pub fn is_satisfied(&self, state: &WorldState) -> bool {
        if self.task_type == TaskType::ExamineInLight {
            let Some(at) = state.agent_at else { return false };
            let lamp = &state.receptacles[at];
            let holding = state
                .held()
                .is_some_and(|o| state.objects[o].name.class == self.target_object);
            return lamp.name.class == self.target_receptacle
                && lamp.affordances.contains(Affordances::LIGHT_SOURCE)
                && lamp.lit
                && holding;
        }
        let need = self.required_count();
        state.receptacles.iter().enumerate().any(|(rid, r)| {
            r.name.class == self.target_receptacle
                && state
                    .objects
                    .iter()
                    .filter(|o| {
                        o.location == Location::In(rid)
                            && o.name.class == self.target_object
                            && self.condition_met(o.condition)
                    })
                    .count()
                    >= need
        })
    }

    /// Whether an object's condition flags satisfy the task type.
    pub fn condition_met(&self, c: super::state::Condition) -> bool {
        match self.task_type {
            TaskType::HeatAndPlace => c.heated,
            TaskType::CoolAndPlace => c.cooled,
            TaskType::CleanAndPlace => c.cleaned,
            _ => true,
        }
    }
}
