//! Behavior cloning on expert demonstrations.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{backward, forward, loss};
use super::{greedy_index, history_average, AgentError, AgentInput, PolicyParams};
use crate::expert::{DemoStep, Demonstration};
use crate::lmbridge::LanguageModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Global gradient-norm cap per update; zero disables it.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 20, learning_rate: 1e-2, momentum: 0.9, batch_size: 8, seed: 0, clip_norm: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcExample {
    pub input: AgentInput,
    pub expert: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean loss per epoch, measured during the epoch's updates.
    pub epoch_losses: Vec<f64>,
    pub updates: usize,
}

/// One example per demo step.
///
/// `conditioning` gives the text the policy is conditioned on at a step;
/// `view` gives the observation text it sees, given that conditioning.
pub fn examples_from_demo(
    demo: &Demonstration,
    bridge: &dyn LanguageModel,
    dim: usize,
    conditioning: &mut dyn FnMut(&DemoStep) -> String,
    view: &mut dyn FnMut(usize, &DemoStep, &str) -> String,
) -> Result<Vec<BcExample>, AgentError> {
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::with_capacity(demo.steps.len());
    for (t, step) in demo.steps.iter().enumerate() {
        let cond = conditioning(step);
        let obs = view(t, step, &cond);
        let texts: Vec<String> = step.permissible.iter().map(|a| a.to_string()).collect();
        let expert = step
            .permissible
            .iter()
            .position(|a| *a == step.action)
            .ok_or_else(|| AgentError::ExpertNotPermissible(step.action.to_string()))?;
        let obs_embedding = bridge.embed(&obs)?;
        let input = AgentInput {
            task_embedding: bridge.embed(&cond)?,
            history_embedding: history_average(&history, dim)?,
            obs_embedding: obs_embedding.clone(),
            action_embeddings: texts.iter().map(|a| bridge.embed(a)).collect::<Result<_, _>>()?,
            action_texts: texts,
        };
        history.push(obs_embedding);
        out.push(BcExample { input, expert });
    }
    Ok(out)
}

fn clip(grads: &mut PolicyParams, max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads.tensors().iter().flat_map(|(_, _, v)| v.iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let k = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|g| *g *= k);
        }
    }
}

/// Minibatch SGD with momentum on cross-entropy against the expert index.
pub fn train_bc(
    examples: &[BcExample],
    mut params: PolicyParams,
    config: &TrainConfig,
) -> Result<(PolicyParams, TrainReport), AgentError> {
    if examples.is_empty() {
        return Err(AgentError::NoExamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut velocity = PolicyParams::zeros(params.config);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let batch = config.batch_size.max(1);
    let mut report = TrainReport { epoch_losses: Vec::with_capacity(config.epochs), updates: 0 };
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let mut grads = PolicyParams::zeros(params.config);
            let mut batch_loss = 0.0;
            for &i in chunk {
                let ex = &examples[i];
                let cache = forward(&params, &ex.input)?;
                batch_loss += backward(&params, &cache, ex.expert, &mut grads)?;
            }
            if !batch_loss.is_finite() {
                return Err(AgentError::NonFiniteLoss { step: report.updates });
            }
            total += batch_loss;
            let scale = 1.0 / chunk.len() as f64;
            for g in grads.tensors_mut() {
                g.iter_mut().for_each(|x| *x *= scale);
            }
            clip(&mut grads, config.clip_norm);
            let gs = grads.tensors();
            for ((p, v), (_, _, g)) in params.tensors_mut().into_iter().zip(velocity.tensors_mut()).zip(gs) {
                for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
                    *vi = config.momentum * *vi + gi;
                    *pi -= config.learning_rate * *vi;
                }
            }
            report.updates += 1;
        }
        let mean = total / examples.len() as f64;
        tracing::debug!(epoch, loss = mean, "bc epoch");
        report.epoch_losses.push(mean);
    }
    Ok((params, report))
}

/// Fraction of examples where the greedy choice is the expert's.
pub fn accuracy(params: &PolicyParams, examples: &[BcExample]) -> Result<f64, AgentError> {
    if examples.is_empty() {
        return Err(AgentError::NoExamples);
    }
    let mut hits = 0;
    for ex in examples {
        let cache = forward(params, &ex.input)?;
        if greedy_index(&cache.policy) == ex.expert {
            hits += 1;
        }
    }
    Ok(hits as f64 / examples.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub checked: usize,
}

/// Central differences against the analytic gradient for every value.
/// The relative error uses `max(|a|, |n|, floor)` as denominator.
pub fn gradient_check(
    params: &PolicyParams,
    input: &AgentInput,
    expert: usize,
    h: f64,
    floor: f64,
) -> Result<GradCheck, AgentError> {
    let mut grads = PolicyParams::zeros(params.config);
    let cache = forward(params, input)?;
    backward(params, &cache, expert, &mut grads)?;
    let analytic: Vec<(String, Vec<f64>)> =
        grads.tensors().into_iter().map(|(n, _, v)| (n, v.to_vec())).collect();
    let mut probe = params.clone();
    let mut result = GradCheck { max_rel_error: 0.0, worst_tensor: String::new(), checked: 0 };
    for (ti, (name, a)) in analytic.iter().enumerate() {
        for (j, &ag) in a.iter().enumerate() {
            let orig = probe.tensors_mut()[ti][j];
            probe.tensors_mut()[ti][j] = orig + h;
            let up = loss(&probe, input, expert)?;
            probe.tensors_mut()[ti][j] = orig - h;
            let down = loss(&probe, input, expert)?;
            probe.tensors_mut()[ti][j] = orig;
            let num = (up - down) / (2.0 * h);
            let rel = (ag - num).abs() / ag.abs().max(num.abs()).max(floor);
            if rel > result.max_rel_error {
                result.max_rel_error = rel;
                result.worst_tensor = name.clone();
            }
            result.checked += 1;
        }
    }
    Ok(result)
}
