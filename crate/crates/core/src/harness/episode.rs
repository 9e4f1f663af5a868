use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agent::{act, ActMode, PolicyParams};
use crate::eliminator::{eliminate, EliminateConfig, MaskDecision};
use crate::lmbridge::LanguageModel;
use crate::planner::{generate_plan, ExampleBank};
use crate::tracker::{tracker_init, tracker_step, TrackDecision, TrackerState};
use crate::worldsim::{
    generate_layout, parse_command, render_observation, Action, Catalog, Entity, Env, Observation, Scene,
    SceneConfig, TaskSpec,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Components {
    pub plan: bool,
    pub eliminate: bool,
    pub track: bool,
}

impl Components {
    pub const NONE: Components = Components { plan: false, eliminate: false, track: false };
    pub const ALL: Components = Components { plan: true, eliminate: true, track: true };
}

/// Who picks the actions.
pub enum Actor<'a> {
    Policy { params: &'a PolicyParams, mode: ActMode, history: Vec<Vec<f64>> },
    /// Replays a fixed list; falls back to the first permissible action.
    Script { actions: Vec<Action>, next: usize },
    Random(ChaCha8Rng),
}

impl<'a> Actor<'a> {
    pub fn greedy(params: &'a PolicyParams) -> Self {
        Actor::Policy { params, mode: ActMode::Greedy, history: Vec::new() }
    }

    fn choose(
        &mut self,
        bridge: &dyn LanguageModel,
        conditioning: &str,
        observation: &str,
        actions: &[Action],
    ) -> Result<usize, HarnessError> {
        match self {
            Actor::Policy { params, mode, history } => {
                let choice = act(params, bridge, conditioning, history, observation, actions, mode)?;
                history.push(bridge.embed(observation)?);
                Ok(choice.index)
            }
            Actor::Script { actions: script, next } => {
                let want = script.get(*next);
                *next += 1;
                Ok(want.and_then(|w| actions.iter().position(|a| a == w)).unwrap_or(0))
            }
            Actor::Random(rng) => Ok(rng.gen_range(0..actions.len())),
        }
    }
}

/// What an episode runs with besides the scene and the actor.
#[derive(Clone)]
pub struct EpisodeSetup<'a> {
    pub components: Components,
    /// Bridge scoped to this episode.
    pub bridge: Arc<dyn LanguageModel>,
    pub bank: Option<&'a ExampleBank>,
    pub plan_examples: usize,
    pub eliminate: EliminateConfig,
    pub step_budget: usize,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub task: TaskSpec,
    /// Goal as shown to the pipeline; differs from the task's when perturbed.
    pub goal_text: String,
    pub scene_seed: u64,
    pub attempt: u32,
    pub config_hash: String,
    pub components: Components,
    pub plan: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub observation: String,
    pub masked_observation: String,
    pub entities: Vec<Entity>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<MaskDecision>,
    pub permissible: Vec<String>,
    pub action: String,
    pub conditioning: String,
    pub subtask_index: Option<usize>,
    pub tracker: Option<TrackDecision>,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndRecord {
    pub final_observation: String,
    pub done: bool,
    pub steps: usize,
    pub increments: usize,
    pub final_tracker: Option<TrackDecision>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub header: TrajectoryHeader,
    pub steps: Vec<StepRecord>,
    pub end: EndRecord,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header(TrajectoryHeader),
    Step(StepRecord),
    End(EndRecord),
}

/// Runs one episode: track, mask, act, step until done or out of budget.
pub fn run_episode(
    scene: &Scene,
    goal_text: &str,
    setup: &EpisodeSetup<'_>,
    actor: &mut Actor<'_>,
) -> Result<Trajectory, HarnessError> {
    let bridge = setup.bridge.as_ref();
    let c = setup.components;
    let plan = match (c.plan, setup.bank) {
        (true, Some(bank)) => match generate_plan(bridge, bank, goal_text, setup.plan_examples) {
            Ok(p) => Some(p),
            Err(e) => {
                tracing::warn!(%e, "planning failed, conditioning on the goal");
                None
            }
        },
        (true, None) => return Err(HarnessError::Config("planning needs an example bank".into())),
        (false, _) => None,
    };
    let mut tracker: Option<TrackerState> = match (&plan, c.track) {
        (Some(p), true) => Some(tracker_init(p.clone(), goal_text)?),
        _ => None,
    };
    let mut env = Env::new(scene.state.clone(), scene.task.clone());
    let mut obs = Observation::initial(&env.state);
    let mut steps = Vec::new();
    let mut done = false;
    let mut increments = 0;
    for t in 0..setup.step_budget {
        let decision = tracker.as_mut().map(|tr| tracker_step(tr, &obs.text, bridge));
        if decision.as_ref().is_some_and(|d| d.incremented) {
            increments += 1;
        }
        let conditioning = tracker.as_ref().map_or(goal_text, |tr| tr.conditioning()).to_string();
        let (seen, decisions) = if c.eliminate {
            eliminate(bridge, &conditioning, &obs, &setup.eliminate)
        } else {
            (obs.clone(), Vec::new())
        };
        let actions = env.permissible();
        let index = actor.choose(bridge, &conditioning, &seen.text, &actions)?;
        let action = actions[index].clone();
        let (feedback, finished) = env.step(&action);
        steps.push(StepRecord {
            t,
            observation: obs.text.clone(),
            masked_observation: seen.text,
            entities: obs.entities(),
            decisions,
            permissible: actions.iter().map(|a| a.to_string()).collect(),
            action: action.to_string(),
            conditioning,
            subtask_index: tracker.as_ref().map(|tr| tr.p),
            tracker: decision,
            done: finished,
        });
        obs = render_observation(&env.state, &feedback);
        if finished {
            done = true;
            break;
        }
    }
    let final_tracker = match tracker.as_mut() {
        Some(tr) if !steps.is_empty() => Some(tracker_step(tr, &obs.text, bridge)),
        _ => None,
    };
    if final_tracker.as_ref().is_some_and(|d| d.incremented) {
        increments += 1;
    }
    let header = TrajectoryHeader {
        task: scene.task.clone(),
        goal_text: goal_text.to_string(),
        scene_seed: scene.seed,
        attempt: scene.attempt,
        config_hash: setup.config_hash.clone(),
        components: c,
        plan: plan.map(|p| p.subtasks),
    };
    let end = EndRecord { final_observation: obs.text, done, steps: steps.len(), increments, final_tracker };
    Ok(Trajectory { header, steps, end })
}

/// Rebuilds the scene a generated-layout trajectory ran on.
pub fn scene_for_header(header: &TrajectoryHeader, config: &SceneConfig) -> Scene {
    let (room, state) = generate_layout(header.scene_seed, header.attempt, config, Catalog::builtin());
    Scene { seed: header.scene_seed, attempt: header.attempt, room, state, task: header.task.clone() }
}

/// Steps the world with the recorded actions and checks every observation,
/// action list and done flag against the record.
pub fn replay(scene: &Scene, trajectory: &Trajectory) -> Result<(), HarnessError> {
    let mismatch = |step: usize, expected: &str, found: &str| HarnessError::ReplayMismatch {
        step,
        expected: expected.to_string(),
        found: found.to_string(),
    };
    let mut env = Env::new(scene.state.clone(), trajectory.header.task.clone());
    let mut obs = Observation::initial(&env.state);
    for rec in &trajectory.steps {
        if obs.text != rec.observation {
            return Err(mismatch(rec.t, &rec.observation, &obs.text));
        }
        let permissible: Vec<String> = env.permissible().iter().map(|a| a.to_string()).collect();
        if permissible != rec.permissible {
            return Err(mismatch(rec.t, &rec.permissible.join("; "), &permissible.join("; ")));
        }
        let action = parse_command(&rec.action).map_err(|e| HarnessError::Trajectory(e.to_string()))?;
        let (feedback, done) = env.step(&action);
        if done != rec.done {
            return Err(mismatch(rec.t, &rec.done.to_string(), &done.to_string()));
        }
        obs = render_observation(&env.state, &feedback);
    }
    if obs.text != trajectory.end.final_observation {
        return Err(mismatch(trajectory.steps.len(), &trajectory.end.final_observation, &obs.text));
    }
    Ok(())
}

/// Header line, one line per step, then the end line.
pub fn write_trajectory(trajectory: &Trajectory, mut out: impl Write) -> Result<(), HarnessError> {
    let mut line = |l: &Line| -> Result<(), HarnessError> {
        let s = serde_json::to_string(l).map_err(|e| HarnessError::Trajectory(e.to_string()))?;
        writeln!(out, "{s}")?;
        Ok(())
    };
    line(&Line::Header(trajectory.header.clone()))?;
    for s in &trajectory.steps {
        line(&Line::Step(s.clone()))?;
    }
    line(&Line::End(trajectory.end.clone()))
}

pub fn read_trajectory(input: impl BufRead) -> Result<Trajectory, HarnessError> {
    let bad = |m: String| HarnessError::Trajectory(m);
    let mut header = None;
    let mut steps = Vec::new();
    let mut end = None;
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", n + 1)))?;
        match (parsed, &header, &end) {
            (Line::Header(h), None, None) => header = Some(h),
            (Line::Step(s), Some(_), None) => steps.push(s),
            (Line::End(e), Some(_), None) => end = Some(e),
            _ => return Err(bad(format!("line {}: out of order", n + 1))),
        }
    }
    match (header, end) {
        (Some(header), Some(end)) => Ok(Trajectory { header, steps, end }),
        (None, _) => Err(bad("missing header".into())),
        (_, None) => Err(bad("missing end record".into())),
    }
}
