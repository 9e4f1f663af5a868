//! Sub-task progress tracking by Yes/No questions over recent observations.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expert::{Demonstration, SubTaskPlan};
use crate::lmbridge::LanguageModel;
use crate::metrics::Confusion;

pub const MAX_WINDOW: usize = 3;
const QUESTION_LEAD: &str = "Did you finish the task of ";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrackError {
    #[error("cannot track an empty plan")]
    EmptyPlan,
    #[error("no demonstrations to evaluate")]
    NoDemos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub plan: SubTaskPlan,
    pub task_text: String,
    /// 1-based index of the active sub-task.
    pub p: usize,
    /// Window length in steps, 1..=3.
    pub d: usize,
    pub window: VecDeque<String>,
    pub fallback_active: bool,
}

/// What one tracker step did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackDecision {
    /// `None` when no question was asked (fallback) or the backend failed.
    pub p_yes: Option<f64>,
    pub incremented: bool,
    pub p: usize,
}

pub fn tracker_init(plan: SubTaskPlan, task_text: &str) -> Result<TrackerState, TrackError> {
    if plan.is_empty() {
        return Err(TrackError::EmptyPlan);
    }
    Ok(TrackerState {
        plan,
        task_text: task_text.to_string(),
        p: 1,
        d: 1,
        window: VecDeque::new(),
        fallback_active: false,
    })
}

impl TrackerState {
    /// Active sub-task, or the whole task once the plan is used up.
    pub fn conditioning(&self) -> &str {
        if self.fallback_active {
            &self.task_text
        } else {
            &self.plan.subtasks[self.p - 1]
        }
    }
}

/// The most recent `d` window observations, then the question.
pub fn tracker_prompt(state: &TrackerState) -> String {
    let take = state.d.min(state.window.len());
    let mut p = String::new();
    for o in state.window.iter().skip(state.window.len() - take) {
        p.push_str(o);
        p.push('\n');
    }
    p.push_str(QUESTION_LEAD);
    p.push_str(state.conditioning());
    p.push('?');
    p
}

/// Window length after a step.
pub fn next_window(d: usize, incremented: bool) -> usize {
    if incremented {
        1
    } else {
        (d + 1).min(MAX_WINDOW)
    }
}

/// Feeds one observation and advances the tracker when the bridge says the
/// active sub-task is done. Backend errors count as "No".
pub fn tracker_step(state: &mut TrackerState, observation: &str, bridge: &dyn LanguageModel) -> TrackDecision {
    if state.fallback_active {
        return TrackDecision { p_yes: None, incremented: false, p: state.p };
    }
    state.window.push_back(observation.to_string());
    while state.window.len() > MAX_WINDOW {
        state.window.pop_front();
    }
    state.d = next_window(state.d, false);
    let prompt = tracker_prompt(state);
    let p_yes = match bridge.yes_no(&prompt) {
        Ok((y, n)) => Some((y, n)),
        Err(err) => {
            tracing::warn!(%err, "tracker question failed, treating as No");
            None
        }
    };
    let incremented = p_yes.is_some_and(|(y, n)| y > n);
    if incremented {
        state.p += 1;
        state.d = next_window(state.d, true);
        state.window.clear();
        if state.p > state.plan.len() {
            state.fallback_active = true;
        }
    }
    TrackDecision { p_yes: p_yes.map(|(y, _)| y), incremented, p: state.p }
}

/// Runs a fresh tracker over observation texts; true when it ends with every
/// sub-task marked finished.
pub fn track_to_end<'a>(
    plan: &SubTaskPlan,
    task_text: &str,
    observations: impl IntoIterator<Item = &'a str>,
    bridge: &dyn LanguageModel,
) -> Result<bool, TrackError> {
    let mut st = tracker_init(plan.clone(), task_text)?;
    for o in observations {
        tracker_step(&mut st, o, bridge);
    }
    Ok(st.fallback_active)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackMetrics {
    pub precision: f64,
    pub recall: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// "Last sub-task finished" against "episode solved", over full demos
/// (positives) and the same demos cut short before their final action
/// (negatives).
pub fn evaluate_tracker(
    demos: &[Demonstration],
    bridge: &dyn LanguageModel,
    seed: u64,
) -> Result<TrackMetrics, TrackError> {
    if demos.is_empty() {
        return Err(TrackError::NoDemos);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Confusion::default();
    let mut negatives = 0;
    for d in demos {
        let texts: Vec<&str> = d.observations().map(|o| o.text.as_str()).collect();
        let full = track_to_end(&d.subtask_plan, &d.task.goal_text, texts.iter().copied(), bridge)?;
        c.record(full, true);
        if !d.steps.is_empty() {
            // keep observations 0..=cut, cut < number of steps
            let cut = rng.gen_range(0..d.steps.len());
            let part = track_to_end(&d.subtask_plan, &d.task.goal_text, texts[..=cut].iter().copied(), bridge)?;
            c.record(part, false);
            negatives += 1;
        }
    }
    Ok(TrackMetrics { precision: c.precision(), recall: c.recall(), positives: demos.len(), negatives })
}
