//! Action-attention policy: a small transformer scores each permissible
//! action by the dot product of a context query and a per-action key.

mod model;
mod params;
mod train;

use rand::distributions::{Distribution, WeightedIndex};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::lmbridge::{LanguageModel, LmError};
use crate::worldsim::Action;

pub use model::{backward, forward, loss, ForwardCache};
pub use params::{AgentConfig, LayerParams, PolicyParams, CONTEXT_SLOTS};
pub use train::{
    accuracy, examples_from_demo, gradient_check, train_bc, BcExample, GradCheck, TrainConfig, TrainReport,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("no actions to choose from")]
    NoActions,
    #[error("vector has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite activation at layer {layer}")]
    NonFinite { layer: usize },
    #[error("action index {index} out of range for {actions} actions")]
    BadIndex { index: usize, actions: usize },
    #[error("non-finite loss at update {step}")]
    NonFiniteLoss { step: usize },
    #[error("no training examples")]
    NoExamples,
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("expert action {0:?} is not permissible")]
    ExpertNotPermissible(String),
    #[error(transparent)]
    Lm(#[from] LmError),
}

/// One decision point, already embedded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentInput {
    pub task_embedding: Vec<f64>,
    /// Mean of the earlier observation embeddings.
    pub history_embedding: Vec<f64>,
    pub obs_embedding: Vec<f64>,
    pub action_embeddings: Vec<Vec<f64>>,
    pub action_texts: Vec<String>,
}

impl AgentInput {
    pub fn validate(&self, dim: usize) -> Result<(), AgentError> {
        if self.action_embeddings.is_empty() {
            return Err(AgentError::NoActions);
        }
        let all = [&self.task_embedding, &self.history_embedding, &self.obs_embedding]
            .into_iter()
            .chain(self.action_embeddings.iter());
        for v in all {
            if v.len() != dim {
                return Err(AgentError::Dimension { expected: dim, got: v.len() });
            }
        }
        Ok(())
    }

    /// Embeds everything through the bridge.
    pub fn build(
        bridge: &dyn LanguageModel,
        conditioning: &str,
        history: &[Vec<f64>],
        observation: &str,
        actions: &[String],
        dim: usize,
    ) -> Result<Self, AgentError> {
        Ok(AgentInput {
            task_embedding: bridge.embed(conditioning)?,
            history_embedding: history_average(history, dim)?,
            obs_embedding: bridge.embed(observation)?,
            action_embeddings: actions.iter().map(|a| bridge.embed(a)).collect::<Result<_, _>>()?,
            action_texts: actions.to_vec(),
        })
    }
}

/// Componentwise mean; the zero vector for an empty history.
pub fn history_average(history: &[Vec<f64>], dim: usize) -> Result<Vec<f64>, AgentError> {
    let mut acc = vec![0.0; dim];
    for h in history {
        if h.len() != dim {
            return Err(AgentError::Dimension { expected: dim, got: h.len() });
        }
        for (a, v) in acc.iter_mut().zip(h) {
            *a += v;
        }
    }
    if !history.is_empty() {
        let n = history.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub enum ActMode {
    /// Highest probability, lowest index on ties.
    Greedy,
    Sample(ChaCha8Rng),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Choice {
    pub index: usize,
    pub policy: Vec<f64>,
}

pub fn greedy_index(policy: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in policy.iter().enumerate() {
        if *p > policy[best] {
            best = i;
        }
    }
    best
}

/// Picks an index from a policy vector.
pub fn choose(policy: &[f64], mode: &mut ActMode) -> Result<usize, AgentError> {
    if policy.is_empty() {
        return Err(AgentError::NoActions);
    }
    match mode {
        ActMode::Greedy => Ok(greedy_index(policy)),
        ActMode::Sample(rng) => {
            let dist = WeightedIndex::new(policy).map_err(|_| AgentError::NonFinite { layer: 0 })?;
            Ok(dist.sample(rng))
        }
    }
}

pub fn act_on_input(params: &PolicyParams, input: &AgentInput, mode: &mut ActMode) -> Result<Choice, AgentError> {
    let cache = forward(params, input)?;
    let index = choose(&cache.policy, mode)?;
    Ok(Choice { index, policy: cache.policy })
}

/// Chooses among `actions` given the conditioning text, earlier observation
/// embeddings and the current observation text.
pub fn act(
    params: &PolicyParams,
    bridge: &dyn LanguageModel,
    conditioning: &str,
    history: &[Vec<f64>],
    observation: &str,
    actions: &[Action],
    mode: &mut ActMode,
) -> Result<Choice, AgentError> {
    if actions.is_empty() {
        return Err(AgentError::NoActions);
    }
    let texts: Vec<String> = actions.iter().map(|a| a.to_string()).collect();
    let input = AgentInput::build(bridge, conditioning, history, observation, &texts, params.config.embed_dim)?;
    act_on_input(params, &input, mode)
}
