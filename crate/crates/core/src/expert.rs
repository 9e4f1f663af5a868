//! Rule-based expert: solves any solvable scene and records demonstrations,
//! ground-truth plans and the entities it touched.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::lexicon::SubTask;
use crate::worldsim::{
    parse_command, permissible_actions, render_observation, step, Action, Affordances, Catalog,
    InstanceName, Location, Observation, ReceptacleId, TaskSpec, TaskType, WorldState,
};

pub const DEFAULT_STEP_BUDGET: usize = 100;

/// Who produced a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanSource {
    Oracle,
    Generated,
}

/// Ordered sub-task decomposition of a task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubTaskPlan {
    pub subtasks: Vec<String>,
    pub source: PlanSource,
}

impl SubTaskPlan {
    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }

    /// Comma-separated answer line.
    pub fn render(&self) -> String {
        self.subtasks.join(", ")
    }
}

/// Canonical sub-task list for a task.
pub fn ground_truth_plan(task: &TaskSpec) -> SubTaskPlan {
    SubTaskPlan {
        subtasks: SubTask::plan_for(task).iter().map(ToString::to_string).collect(),
        source: PlanSource::Oracle,
    }
}

/// Order in which the expert inspects receptacles while searching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchPolicy {
    /// Classes the target usually spawns in first, then openable
    /// receptacles, then the rest.
    #[default]
    LikelyFirst,
    /// Plain display order.
    NameOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoStep {
    pub observation: Observation,
    pub permissible: Vec<Action>,
    pub action: Action,
    /// 1-based index of the sub-task active when the observation was made.
    pub subtask_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub task: TaskSpec,
    pub initial_state: WorldState,
    pub steps: Vec<DemoStep>,
    /// Observation after the last action.
    pub final_observation: Observation,
    pub subtask_plan: SubTaskPlan,
    pub touched: BTreeSet<String>,
}

impl Demonstration {
    /// Every observation in order, including the one after the last action.
    pub fn observations(&self) -> impl Iterator<Item = &Observation> {
        self.steps.iter().map(|s| &s.observation).chain(std::iter::once(&self.final_observation))
    }

    /// Sub-task index active at each observation of [`Self::observations`].
    pub fn observation_subtask_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.steps.iter().map(|s| s.subtask_index).collect();
        v.push(if self.steps.is_empty() { 1 } else { self.subtask_plan.len() + 1 });
        v
    }

    /// Entities touched while each sub-task was active.
    pub fn touched_by_subtask(&self) -> Vec<BTreeSet<String>> {
        let mut out = vec![BTreeSet::new(); self.subtask_plan.len().max(1)];
        for s in &self.steps {
            let slot = s.subtask_index.clamp(1, out.len()) - 1;
            out[slot].extend(s.action.arguments().into_iter().map(ToString::to_string));
        }
        out
    }
}

/// Names of every receptacle and object the demonstration acted on.
pub fn touched_entities(demo: &Demonstration) -> BTreeSet<String> {
    demo.steps
        .iter()
        .flat_map(|s| s.action.arguments())
        .map(ToString::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExpertError {
    #[error("step budget of {0} exhausted before the goal was reached")]
    BudgetExhausted(usize),
    #[error("no reachable {0} left to search for")]
    NotFound(String),
    #[error("scene has no receptacle for `{0}`")]
    MissingReceptacle(String),
}

struct Solver<'a> {
    catalog: &'a Catalog,
    task: &'a TaskSpec,
    policy: SearchPolicy,
    state: WorldState,
    budget: usize,
    steps: Vec<DemoStep>,
    observation: Observation,
    plan: Vec<SubTask>,
    /// Sub-tasks completed so far.
    completed: usize,
    inspected: HashSet<ReceptacleId>,
    /// Last known location of target-class objects.
    sightings: HashMap<InstanceName, ReceptacleId>,
    destination: Option<ReceptacleId>,
    done: bool,
}

impl<'a> Solver<'a> {
    fn act(&mut self, action: Action) -> Result<(), ExpertError> {
        if self.done {
            return Ok(());
        }
        if self.steps.len() >= self.budget {
            return Err(ExpertError::BudgetExhausted(self.budget));
        }
        let permissible = permissible_actions(&self.state);
        debug_assert!(permissible.contains(&action), "expert chose {action}");
        let out = step(&self.state, self.task, &action);
        self.steps.push(DemoStep {
            observation: self.observation.clone(),
            permissible,
            action: action.clone(),
            subtask_index: self.completed + 1,
        });
        if self.plan.get(self.completed).is_some_and(|s| completes(s, &action, self.task)) {
            self.completed += 1;
        }
        self.state = out.state;
        self.observation = render_observation(&self.state, &out.feedback);
        self.done = out.done;
        self.note_view();
        Ok(())
    }

    fn note_view(&mut self) {
        let Some(at) = self.state.agent_at else { return };
        if self.state.receptacles[at].is_accessible() {
            self.inspected.insert(at);
            for oid in self.state.contents(at) {
                let o = &self.state.objects[oid];
                if o.name.class == self.task.target_object {
                    self.sightings.insert(o.name.clone(), at);
                }
            }
        }
    }

    fn goto(&mut self, rid: ReceptacleId) -> Result<(), ExpertError> {
        if self.state.agent_at != Some(rid) {
            self.act(Action::GoTo(self.state.receptacles[rid].name.clone()))?;
        }
        Ok(())
    }

    fn open_here(&mut self) -> Result<bool, ExpertError> {
        let at = self.state.agent_at.expect("at a receptacle");
        if self.state.receptacles[at].open == Some(false) {
            self.act(Action::Open(self.state.receptacles[at].name.clone()))?;
            return Ok(true);
        }
        Ok(false)
    }

    fn close_here(&mut self) -> Result<(), ExpertError> {
        let at = self.state.agent_at.expect("at a receptacle");
        if self.state.receptacles[at].open == Some(true) {
            self.act(Action::Close(self.state.receptacles[at].name.clone()))?;
        }
        Ok(())
    }

    fn first_with(&self, pred: impl Fn(ReceptacleId) -> bool) -> Option<ReceptacleId> {
        let mut ids: Vec<ReceptacleId> = (0..self.state.receptacles.len()).filter(|&i| pred(i)).collect();
        ids.sort_by(|&a, &b| {
            let (ra, rb) = (&self.state.receptacles[a].name, &self.state.receptacles[b].name);
            ra.class.cmp(&rb.class).then(ra.index.cmp(&rb.index))
        });
        ids.first().copied()
    }

    fn search_order(&self) -> Vec<ReceptacleId> {
        let spawn = self
            .catalog
            .object(&self.task.target_object)
            .map(|o| o.spawn.clone())
            .unwrap_or_default();
        let mut ids: Vec<ReceptacleId> = (0..self.state.receptacles.len())
            .filter(|&i| !self.state.receptacles[i].affordances.contains(Affordances::LIGHT_SOURCE))
            .collect();
        // destination-class receptacles only as a last resort
        let key = |i: &ReceptacleId| {
            let r = &self.state.receptacles[*i];
            let last = r.name.class == self.task.target_receptacle;
            let rank = match self.policy {
                SearchPolicy::NameOrder => 0,
                SearchPolicy::LikelyFirst => match spawn.iter().position(|c| *c == r.name.class) {
                    Some(p) => p,
                    None if r.is_openable() => spawn.len(),
                    None => spawn.len() + 1,
                },
            };
            (last, rank, r.name.class.clone(), r.name.index)
        };
        ids.sort_by_key(key);
        ids
    }

    fn holding_target(&self) -> bool {
        self.state
            .held()
            .is_some_and(|o| self.state.objects[o].name.class == self.task.target_object)
    }

    fn known_target(&self) -> Option<(InstanceName, ReceptacleId)> {
        let mut known: Vec<(InstanceName, ReceptacleId)> = self
            .sightings
            .iter()
            .filter(|(name, rid)| {
                let placed = self.state.receptacles[**rid].name.class == self.task.target_receptacle;
                self.state.object_id(name).is_some_and(|o| {
                    let o = &self.state.objects[o];
                    o.location == Location::In(**rid) && !(placed && self.task.condition_met(o.condition))
                })
            })
            .map(|(n, r)| (n.clone(), *r))
            .collect();
        known.sort_by_key(|a| a.0.index);
        known.into_iter().next()
    }

    fn take_target(&mut self) -> Result<(), ExpertError> {
        if self.holding_target() {
            return Ok(());
        }
        if let Some(held) = self.state.held() {
            // free the hand where we stand
            let at = self.state.agent_at.expect("holding implies moved");
            let name = self.state.objects[held].name.clone();
            self.open_here()?;
            self.act(Action::Put { object: name, into: self.state.receptacles[at].name.clone() })?;
        }
        loop {
            if let Some((name, rid)) = self.known_target() {
                self.goto(rid)?;
                self.open_here()?;
                let from = self.state.receptacles[rid].name.clone();
                return self.act(Action::Take { object: name, from });
            }
            let next = self.search_order().into_iter().find(|r| !self.inspected.contains(r));
            let Some(rid) = next else {
                return Err(ExpertError::NotFound(self.task.target_object.clone()));
            };
            self.goto(rid)?;
            let opened = self.open_here()?;
            self.inspected.insert(rid);
            if self.known_target().is_none() && opened {
                self.close_here()?;
            }
            if self.done {
                return Ok(());
            }
        }
    }

    fn use_source(&mut self, source: Affordances, make: fn(InstanceName, InstanceName) -> Action) -> Result<(), ExpertError> {
        let rid = self
            .first_with(|i| self.state.receptacles[i].affordances.contains(source))
            .ok_or_else(|| ExpertError::MissingReceptacle(format!("{source:?}")))?;
        self.goto(rid)?;
        let held = self.state.held().expect("holding target");
        let object = self.state.objects[held].name.clone();
        self.act(make(object, self.state.receptacles[rid].name.clone()))
    }

    fn place(&mut self, receptacle: &str) -> Result<(), ExpertError> {
        let rid = match self.destination {
            Some(r) => r,
            None => {
                let r = self
                    .first_with(|i| self.state.receptacles[i].name.class == receptacle)
                    .ok_or_else(|| ExpertError::MissingReceptacle(receptacle.to_string()))?;
                self.destination = Some(r);
                r
            }
        };
        self.goto(rid)?;
        self.open_here()?;
        let held = self.state.held().expect("holding target");
        let object = self.state.objects[held].name.clone();
        self.act(Action::Put { object, into: self.state.receptacles[rid].name.clone() })?;
        if !self.done {
            self.close_here()?;
        }
        Ok(())
    }

    fn examine(&mut self, light: &str) -> Result<(), ExpertError> {
        let rid = self
            .first_with(|i| self.state.receptacles[i].name.class == light)
            .ok_or_else(|| ExpertError::MissingReceptacle(light.to_string()))?;
        self.goto(rid)?;
        self.act(Action::Use(self.state.receptacles[rid].name.clone()))
    }

    fn run(&mut self, plan: &[SubTask]) -> Result<(), ExpertError> {
        for sub in plan {
            if self.done {
                break;
            }
            match sub {
                SubTask::Take { .. } => self.take_target()?,
                SubTask::Heat { .. } => self.use_source(Affordances::HEAT_SOURCE, |object, with| Action::Heat { object, with })?,
                SubTask::Cool { .. } => self.use_source(Affordances::COOL_SOURCE, |object, with| Action::Cool { object, with })?,
                SubTask::Clean { .. } => self.use_source(Affordances::CLEAN_SOURCE, |object, with| Action::Clean { object, with })?,
                SubTask::Place { receptacle, .. } => self.place(receptacle)?,
                SubTask::Examine { light, .. } => self.examine(light)?,
            }
        }
        if self.done {
            Ok(())
        } else {
            Err(ExpertError::BudgetExhausted(self.budget))
        }
    }
}

/// Whether `action` finishes `sub`.
fn completes(sub: &SubTask, action: &Action, task: &TaskSpec) -> bool {
    let obj = |n: &InstanceName| n.class == sub.object();
    match (sub, action) {
        (SubTask::Take { .. }, Action::Take { object, .. }) => obj(object),
        (SubTask::Heat { .. }, Action::Heat { object, .. })
        | (SubTask::Cool { .. }, Action::Cool { object, .. })
        | (SubTask::Clean { .. }, Action::Clean { object, .. }) => obj(object),
        (SubTask::Place { receptacle, .. }, Action::Put { object, into }) => {
            obj(object) && into.class == *receptacle
        }
        (SubTask::Examine { light, .. }, Action::Use(l)) => l.class == *light && task.task_type == TaskType::ExamineInLight,
        _ => false,
    }
}

/// Solves `task` from `state`, recording every step.
pub fn solve(
    state: &WorldState,
    task: &TaskSpec,
    policy: SearchPolicy,
    budget: usize,
) -> Result<Demonstration, ExpertError> {
    solve_with_catalog(state, task, policy, budget, Catalog::builtin())
}

pub fn solve_with_catalog(
    state: &WorldState,
    task: &TaskSpec,
    policy: SearchPolicy,
    budget: usize,
    catalog: &Catalog,
) -> Result<Demonstration, ExpertError> {
    let plan = SubTask::plan_for(task);
    let mut solver = Solver {
        catalog,
        task,
        policy,
        state: state.clone(),
        budget,
        steps: Vec::new(),
        observation: Observation::initial(state),
        plan: plan.clone(),
        completed: 0,
        inspected: HashSet::new(),
        sightings: HashMap::new(),
        destination: None,
        done: task.is_satisfied(state),
    };
    solver.note_view();
    solver.run(&plan)?;
    let mut demo = Demonstration {
        task: task.clone(),
        initial_state: state.clone(),
        final_observation: solver.observation,
        steps: solver.steps,
        subtask_plan: ground_truth_plan(task),
        touched: BTreeSet::new(),
    };
    demo.touched = touched_entities(&demo);
    Ok(demo)
}

/// Re-parses the recorded action texts and collects their arguments; an
/// independent route to [`touched_entities`].
pub fn touched_by_reparse(demo: &Demonstration) -> BTreeSet<String> {
    demo.steps
        .iter()
        .map(|s| parse_command(&s.action.text()).expect("recorded actions parse"))
        .flat_map(|a| a.arguments().into_iter().map(ToString::to_string).collect::<Vec<_>>())
        .collect()
}
