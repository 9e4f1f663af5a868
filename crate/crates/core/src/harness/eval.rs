use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::episode::{run_episode, Actor, Components, EpisodeSetup, Trajectory};
use super::{perturb_goal, HarnessConfig, HarnessError, Splits};
use crate::agent::{examples_from_demo, train_bc, BcExample, PolicyParams, TrainConfig, TrainReport};
use crate::eliminator::{eliminate, score_demo_entities, EliminateConfig};
use crate::expert::{ground_truth_plan, solve, Demonstration, SearchPolicy, DEFAULT_STEP_BUDGET};
use crate::lexicon::Lexicon;
use crate::lmbridge::{BridgeProvider, LanguageModel};
use crate::metrics::auc_roc;
use crate::planner::{evaluate_plans, generate_plan, ExampleBank, PlanMetrics};
use crate::tracker::{evaluate_tracker, TrackMetrics};
use crate::worldsim::{EntityKind, Scene};

/// One configuration of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Row {
    Base,
    Eliminate,
    PlanTrack,
    Pet,
}

impl Row {
    pub const ALL: [Row; 4] = [Row::Base, Row::Eliminate, Row::PlanTrack, Row::Pet];

    pub fn name(self) -> &'static str {
        match self {
            Row::Base => "base",
            Row::Eliminate => "+Eliminate",
            Row::PlanTrack => "+Plan&Track",
            Row::Pet => "+PET",
        }
    }

    pub fn components(self) -> Components {
        match self {
            Row::Base => Components::NONE,
            Row::Eliminate => Components { plan: false, eliminate: true, track: false },
            Row::PlanTrack => Components { plan: true, eliminate: false, track: true },
            Row::Pet => Components::ALL,
        }
    }
}

/// Behavior-cloning examples for a row: sub-task conditioning from the
/// ground-truth plan when the row tracks, masked observations when it
/// eliminates.
pub fn training_examples(
    row: Row,
    scenes: &[Scene],
    demos: &[Demonstration],
    provider: &dyn BridgeProvider,
    config: &HarnessConfig,
) -> Result<Vec<BcExample>, HarnessError> {
    let c = row.components();
    let dim = config.agent.embed_dim;
    let mut out = Vec::new();
    for (scene, demo) in scenes.iter().zip(demos) {
        let goal = scene.task.goal_text.clone();
        let bridge = if c.eliminate { provider.for_episode(scene, &goal)? } else { provider.shared() };
        let plan = &demo.subtask_plan.subtasks;
        let mut conditioning = |step: &crate::expert::DemoStep| -> String {
            if c.track {
                plan.get(step.subtask_index.wrapping_sub(1)).cloned().unwrap_or_else(|| goal.clone())
            } else {
                goal.clone()
            }
        };
        let tau: EliminateConfig = config.eliminate;
        let b = bridge.clone();
        let mut view = |_: usize, step: &crate::expert::DemoStep, cond: &str| -> String {
            if c.eliminate {
                eliminate(b.as_ref(), cond, &step.observation, &tau).0.text
            } else {
                step.observation.text.clone()
            }
        };
        out.extend(examples_from_demo(demo, bridge.as_ref(), dim, &mut conditioning, &mut view)?);
    }
    Ok(out)
}

/// Trains one row's policy from scratch with the given seed.
pub fn train_row(
    examples: &[BcExample],
    config: &HarnessConfig,
    seed: u64,
) -> Result<(PolicyParams, TrainReport), HarnessError> {
    let params = PolicyParams::init(config.agent, seed)?;
    let train = TrainConfig { seed, ..config.train };
    Ok(train_bc(examples, params, &train)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub episodes: usize,
    pub completed: usize,
    pub completion_rate: f64,
    pub mean_steps: f64,
    /// Mean length of completed episodes; zero when none completed.
    pub mean_steps_completed: f64,
}

/// Aggregates stored trajectories.
pub fn split_result(trajectories: &[Trajectory]) -> SplitResult {
    let n = trajectories.len();
    let done: Vec<&Trajectory> = trajectories.iter().filter(|t| t.end.done).collect();
    let mean = |v: &[&Trajectory]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().map(|t| t.end.steps as f64).sum::<f64>() / v.len() as f64
        }
    };
    let all: Vec<&Trajectory> = trajectories.iter().collect();
    SplitResult {
        episodes: n,
        completed: done.len(),
        completion_rate: if n == 0 { 0.0 } else { done.len() as f64 / n as f64 },
        mean_steps: mean(&all),
        mean_steps_completed: mean(&done),
    }
}

/// Runs every scene of a split with one row's policy.
#[allow(clippy::too_many_arguments)]
pub fn run_split(
    scenes: &[Scene],
    goals: &[String],
    row: Row,
    params: &PolicyParams,
    provider: &dyn BridgeProvider,
    bank: &ExampleBank,
    config: &HarnessConfig,
) -> Result<Vec<Trajectory>, HarnessError> {
    let hash = config.hash();
    let mut out = Vec::with_capacity(scenes.len());
    for (scene, goal) in scenes.iter().zip(goals) {
        let setup = EpisodeSetup {
            components: row.components(),
            bridge: provider.for_episode(scene, goal)?,
            bank: Some(bank),
            plan_examples: config.plan.examples,
            eliminate: config.eliminate,
            step_budget: config.episode.step_budget,
            config_hash: hash.clone(),
        };
        out.push(run_episode(scene, goal, &setup, &mut Actor::greedy(params))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowResult {
    pub per_seed: Vec<SplitResult>,
    pub mean_completion: f64,
}

impl RowResult {
    fn from_seeds(per_seed: Vec<SplitResult>) -> Self {
        let mean_completion = per_seed.iter().map(|r| r.completion_rate).sum::<f64>() / per_seed.len().max(1) as f64;
        RowResult { per_seed, mean_completion }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub row: Row,
    pub seen: RowResult,
    pub seen_perturbed: RowResult,
    pub unseen: RowResult,
    pub final_train_loss: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn get(&self, row: Row) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.row == row)
    }

    /// Tab-separated table with completion rates in percent.
    pub fn render(&self) -> String {
        let mut out = String::from("row\tseen\tseen_perturbed\tunseen\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{}\t{:.1}\t{:.1}\t{:.1}\n",
                r.row.name(),
                100.0 * r.seen.mean_completion,
                100.0 * r.seen_perturbed.mean_completion,
                100.0 * r.unseen.mean_completion
            ));
        }
        out
    }
}

fn expert_demos(scenes: &[Scene]) -> Result<Vec<Demonstration>, HarnessError> {
    scenes
        .iter()
        .map(|s| Ok(solve(&s.state, &s.task, SearchPolicy::default(), DEFAULT_STEP_BUDGET)?))
        .collect()
}

/// Example bank of the training tasks with their ground-truth plans.
pub fn training_bank(scenes: &[Scene], bridge: &dyn LanguageModel) -> Result<ExampleBank, HarnessError> {
    Ok(ExampleBank::build(
        bridge,
        scenes.iter().map(|s| (s.task.goal_text.clone(), ground_truth_plan(&s.task).subtasks)),
    )?)
}

/// Trains every row for every configured seed, then evaluates on the seen
/// split, its perturbed-goal variant and the unseen split.
pub fn run_ablation(
    splits: &Splits,
    config: &HarnessConfig,
    provider: &dyn BridgeProvider,
    rows: &[Row],
) -> Result<AblationTable, HarnessError> {
    if splits.seen.is_empty() {
        return Err(HarnessError::EmptySplit("seen"));
    }
    let demos = expert_demos(&splits.train)?;
    let shared = provider.shared();
    let bank = training_bank(&splits.train, shared.as_ref())?;
    let seen_goals: Vec<String> = splits.seen.iter().map(|s| s.task.goal_text.clone()).collect();
    let perturbed: Vec<String> = splits
        .seen
        .iter()
        .enumerate()
        .map(|(i, s)| perturb_goal(&s.task.goal_text, config.eval.perturb_seed.wrapping_add(i as u64), Lexicon::builtin()))
        .collect();
    let unseen_goals: Vec<String> = splits.unseen.iter().map(|s| s.task.goal_text.clone()).collect();

    let mut checkpoints: HashMap<(Row, u64), (PolicyParams, TrainReport)> = HashMap::new();
    for &row in rows {
        let examples = training_examples(row, &splits.train, &demos, provider, config)?;
        for &seed in &config.eval.seeds {
            tracing::info!(row = row.name(), seed, examples = examples.len(), "training");
            checkpoints.insert((row, seed), train_row(&examples, config, seed)?);
        }
    }

    let mut table = AblationTable { seeds: config.eval.seeds.clone(), rows: Vec::new() };
    for &row in rows {
        let (mut seen, mut pert, mut unseen, mut losses) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for &seed in &config.eval.seeds {
            let (params, report) = checkpoints
                .get(&(row, seed))
                .ok_or_else(|| HarnessError::MissingCheckpoint { row: row.name().to_string(), seed })?;
            losses.push(report.epoch_losses.last().copied().unwrap_or(f64::NAN));
            let run = |scenes: &[Scene], goals: &[String]| {
                run_split(scenes, goals, row, params, provider, &bank, config).map(|t| split_result(&t))
            };
            seen.push(run(&splits.seen, &seen_goals)?);
            pert.push(run(&splits.seen, &perturbed)?);
            unseen.push(run(&splits.unseen, &unseen_goals)?);
            tracing::info!(row = row.name(), seed, seen = seen.last().map(|r| r.completion_rate), "evaluated");
        }
        table.rows.push(AblationRow {
            row,
            seen: RowResult::from_seeds(seen),
            seen_perturbed: RowResult::from_seeds(pert),
            unseen: RowResult::from_seeds(unseen),
            final_train_loss: losses,
        });
    }
    Ok(table)
}

/// Plan accuracy of the bridge against ground-truth plans.
pub fn plan_report(
    bridge: &dyn LanguageModel,
    bank: &ExampleBank,
    scenes: &[Scene],
    goals: &[String],
    k: usize,
) -> Result<PlanMetrics, HarnessError> {
    let mut generated = Vec::with_capacity(scenes.len());
    for goal in goals {
        generated.push(generate_plan(bridge, bank, goal, k)?);
    }
    let truth: Vec<_> = scenes.iter().map(|s| ground_truth_plan(&s.task)).collect();
    Ok(evaluate_plans(bridge, &generated, &truth)?)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EliminateReport {
    /// Task type → (receptacle AUC, object AUC); `None` when labels are one-sided.
    pub auc_by_task_type: BTreeMap<String, (Option<f64>, Option<f64>)>,
    pub receptacle_auc: Option<f64>,
    pub object_auc: Option<f64>,
    /// Fraction of entity mentions removed, pooled over every demo observation.
    pub mean_reduction: f64,
    /// (score, relevant) pairs for ROC curves.
    pub points: Vec<(String, f64, bool)>,
}

fn auc_of(v: &[(f64, bool)]) -> Option<f64> {
    let (s, l): (Vec<f64>, Vec<bool>) = v.iter().copied().unzip();
    auc_roc(&s, &l).ok()
}

/// Relevance AUC against the expert's touched sets, and how much masking
/// shortens observations.
pub fn eliminate_report(
    scenes: &[Scene],
    provider: &dyn BridgeProvider,
    config: &EliminateConfig,
) -> Result<EliminateReport, HarnessError> {
    let demos = expert_demos(scenes)?;
    let mut by_type: BTreeMap<String, (Vec<(f64, bool)>, Vec<(f64, bool)>)> = BTreeMap::new();
    let (mut shown, mut kept) = (0usize, 0usize);
    let mut report = EliminateReport::default();
    for (scene, demo) in scenes.iter().zip(&demos) {
        let goal = &scene.task.goal_text;
        let bridge = provider.for_episode(scene, goal)?;
        let entry = by_type.entry(scene.task.task_type.to_string()).or_default();
        for e in score_demo_entities(bridge.as_ref(), demo, goal) {
            let bucket = if e.kind == EntityKind::Receptacle { &mut entry.0 } else { &mut entry.1 };
            bucket.push((e.score, e.relevant));
            report.points.push((format!("{:?}", e.kind).to_lowercase(), e.score, e.relevant));
        }
        for obs in demo.observations() {
            let (masked, _) = eliminate(bridge.as_ref(), goal, obs, config);
            shown += obs.entities().len();
            kept += masked.entities().len();
        }
    }
    let mut all_r = Vec::new();
    let mut all_o = Vec::new();
    for (tt, (r, o)) in by_type {
        report.auc_by_task_type.insert(tt, (auc_of(&r), auc_of(&o)));
        all_r.extend(r);
        all_o.extend(o);
    }
    report.receptacle_auc = auc_of(&all_r);
    report.object_auc = auc_of(&all_o);
    report.mean_reduction = if shown == 0 { 0.0 } else { 1.0 - kept as f64 / shown as f64 };
    Ok(report)
}

/// Tracker precision and recall over expert demos and truncated negatives.
pub fn track_report(scenes: &[Scene], bridge: Arc<dyn LanguageModel>, seed: u64) -> Result<TrackMetrics, HarnessError> {
    let demos = expert_demos(scenes)?;
    Ok(evaluate_tracker(&demos, bridge.as_ref(), seed)?)
}

/// Everything an evaluation run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub splits: BTreeMap<String, SplitResult>,
    pub plan: Option<PlanMetrics>,
    pub eliminate: Option<EliminateReport>,
    pub track: Option<TrackMetrics>,
}
