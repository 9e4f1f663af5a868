//! Deterministic ground-truth backend with optional noise.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, RwLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::hash_embed::HashEmbedder;
use super::{hashed_unit, truncate_at_stop, BridgeProvider, LanguageModel, LmError};
use crate::expert::{solve, Demonstration, SearchPolicy, DEFAULT_STEP_BUDGET};
use crate::lexicon::{parse_goal, Lexicon, SubTask};
use crate::worldsim::{Catalog, Scene, TaskSpec};

pub(crate) const PLAN_QUESTION: &str = "What are the middle steps required to ";
pub(crate) const TASK_LEAD: &str = "Your task is to: ";
pub(crate) const RECEPTACLE_QUESTION: &str = ". Where should you go to?";
pub(crate) const OBJECT_QUESTION: &str = ". Which objects will be relevant?";
pub(crate) const TRACK_QUESTION: &str = "Did you finish the task of ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Chance of a perturbed answer.
    pub noise_epsilon: f64,
    pub rng_seed: u64,
    pub embed_dim: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { noise_epsilon: 0.0, rng_seed: 0, embed_dim: super::DEFAULT_EMBED_DIM }
    }
}

/// What the expert touched in one episode, overall and per sub-task.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeTruth {
    /// Goal text as shown to the agent.
    pub task_text: String,
    pub touched: BTreeSet<String>,
    /// Canonical sub-task text → entities touched while it was active.
    pub by_subtask: BTreeMap<String, BTreeSet<String>>,
}

impl EpisodeTruth {
    pub fn from_demo(demo: &Demonstration, task_text: &str) -> Self {
        let mut by_subtask: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (text, set) in demo.subtask_plan.subtasks.iter().zip(demo.touched_by_subtask()) {
            by_subtask.entry(text.clone()).or_default().extend(set);
        }
        EpisodeTruth { task_text: task_text.to_string(), touched: demo.touched.clone(), by_subtask }
    }

    /// Relevant entity names for a conditioning text: the sub-task's own set
    /// when it names a planned sub-task, the whole episode's otherwise.
    pub fn relevant(&self, conditioning: &str) -> &BTreeSet<String> {
        if conditioning.trim() == self.task_text.trim() {
            return &self.touched;
        }
        SubTask::parse(conditioning, Catalog::builtin(), Lexicon::builtin())
            .and_then(|s| self.by_subtask.get(&s.to_string()))
            .unwrap_or(&self.touched)
    }
}

/// Ground-truth stand-in for every capability.
pub struct OracleBackend {
    config: OracleConfig,
    embedder: HashEmbedder,
    truth: Option<EpisodeTruth>,
    patterns: RwLock<HashMap<String, Regex>>,
}

impl OracleBackend {
    pub fn new(config: OracleConfig) -> Self {
        let embedder = HashEmbedder { dim: config.embed_dim, seed: 0 };
        OracleBackend { config, embedder, truth: None, patterns: RwLock::new(HashMap::new()) }
    }

    pub fn with_truth(mut self, truth: EpisodeTruth) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn config(&self) -> &OracleConfig {
        &self.config
    }

    fn noisy(&self, parts: &[&str]) -> bool {
        self.config.noise_epsilon > 0.0 && hashed_unit(self.config.rng_seed, parts) < self.config.noise_epsilon
    }

    fn event_seen(&self, pattern: String, window: &str) -> bool {
        if let Some(re) = self.patterns.read().expect("pattern lock").get(&pattern) {
            return re.is_match(window);
        }
        let re = Regex::new(&pattern).expect("event patterns are valid");
        let hit = re.is_match(window);
        self.patterns.write().expect("pattern lock").insert(pattern, re);
        hit
    }

    /// Whether the window shows the sub-task being completed.
    fn finished(&self, sub: &SubTask, window: &str) -> bool {
        let q = |s: &str| regex::escape(s);
        let pattern = match sub {
            SubTask::Take { object } => format!(r"You pick up the {} \d+ from", q(object)),
            SubTask::Place { object, receptacle } => {
                format!(r"You put the {} \d+ in/on the {} \d+", q(object), q(receptacle))
            }
            SubTask::Heat { object } => format!(r"You heat the {} \d+ using", q(object)),
            SubTask::Cool { object } => format!(r"You cool the {} \d+ using", q(object)),
            SubTask::Clean { object } => format!(r"You clean the {} \d+ using", q(object)),
            SubTask::Examine { light, .. } => format!(r"You turn on the {} \d+", q(light)),
        };
        self.event_seen(pattern, window)
    }
}

/// Swaps the leading verb of one sub-task for a synonym.
fn substitute_verb(subtasks: &mut [String], pick: f64, which: f64) {
    let lex = Lexicon::builtin();
    let options: Vec<(usize, &String, &Vec<String>)> = subtasks
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let verb = s.split_whitespace().next()?;
            lex.verbs.get(verb).filter(|v| !v.is_empty()).map(|syns| (i, s, syns))
        })
        .collect();
    if options.is_empty() {
        return;
    }
    let (i, text, syns) = options[(pick * options.len() as f64) as usize % options.len()];
    let syn = &syns[(which * syns.len() as f64) as usize % syns.len()];
    let rest = text.split_once(' ').map(|(_, r)| r).unwrap_or("");
    subtasks[i] = format!("{syn} {rest}");
}

impl LanguageModel for OracleBackend {
    fn generate(&self, prompt: &str, _max_tokens: usize, stop: &[String]) -> Result<String, LmError> {
        let Some(pos) = prompt.rfind(PLAN_QUESTION) else { return Ok(String::new()) };
        let goal = prompt[pos + PLAN_QUESTION.len()..].trim().trim_end_matches('?');
        let Some((tt, o, r)) = parse_goal(goal, Catalog::builtin(), Lexicon::builtin()) else {
            return Ok(String::new());
        };
        let task = TaskSpec::new(tt, o, r, 0, 0);
        let mut subtasks: Vec<String> = SubTask::plan_for(&task).iter().map(ToString::to_string).collect();
        if self.noisy(&["generate", prompt]) {
            let seed = self.config.rng_seed;
            substitute_verb(
                &mut subtasks,
                hashed_unit(seed, &["generate-pick", prompt]),
                hashed_unit(seed, &["generate-syn", prompt]),
            );
        }
        Ok(truncate_at_stop(&subtasks.join(", "), stop))
    }

    fn score_choice(&self, prompt: &str, candidate: &str) -> Result<f64, LmError> {
        let truth = self.truth.as_ref().ok_or(LmError::NoGroundTruth)?;
        let start = prompt
            .rfind(TASK_LEAD)
            .ok_or_else(|| LmError::BadPrompt(prompt.to_string()))?
            + TASK_LEAD.len();
        let rest = &prompt[start..];
        let end = rest
            .rfind(RECEPTACLE_QUESTION)
            .or_else(|| rest.rfind(OBJECT_QUESTION))
            .ok_or_else(|| LmError::BadPrompt(prompt.to_string()))?;
        let conditioning = &rest[..end];
        let mut score = if truth.relevant(conditioning).contains(candidate) { 1.0 } else { 0.0 };
        if self.noisy(&["score", prompt, candidate]) {
            let coin = hashed_unit(self.config.rng_seed, &["score-coin", prompt, candidate]);
            score = if coin < 0.5 { 1.0 } else { 0.0 };
        }
        Ok(score)
    }

    fn yes_no(&self, prompt: &str) -> Result<(f64, f64), LmError> {
        let pos = prompt.rfind(TRACK_QUESTION).ok_or_else(|| LmError::BadPrompt(prompt.to_string()))?;
        let window = &prompt[..pos];
        let question = prompt[pos + TRACK_QUESTION.len()..].trim().trim_end_matches('?');
        let yes = SubTask::parse(question, Catalog::builtin(), Lexicon::builtin())
            .is_some_and(|s| self.finished(&s, window));
        // noise only ever hides a completion
        let yes = yes && !self.noisy(&["yes_no", prompt]);
        Ok(if yes { (1.0, 0.0) } else { (0.0, 1.0) })
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, LmError> {
        Ok(self.embedder.embed(text))
    }
}

/// Builds an episode-scoped oracle by running the expert on each scene.
#[derive(Clone)]
pub struct OracleProvider {
    pub config: OracleConfig,
    base: Arc<OracleBackend>,
}

impl OracleProvider {
    pub fn new(config: OracleConfig) -> Self {
        OracleProvider { base: Arc::new(OracleBackend::new(config.clone())), config }
    }
}

impl BridgeProvider for OracleProvider {
    fn for_episode(&self, scene: &Scene, goal_text: &str) -> Result<Arc<dyn LanguageModel>, LmError> {
        let demo = solve(&scene.state, &scene.task, SearchPolicy::default(), DEFAULT_STEP_BUDGET)
            .map_err(|_| LmError::NoGroundTruth)?;
        let truth = EpisodeTruth::from_demo(&demo, goal_text);
        Ok(Arc::new(OracleBackend::new(self.config.clone()).with_truth(truth)))
    }

    fn shared(&self) -> Arc<dyn LanguageModel> {
        self.base.clone()
    }
}
