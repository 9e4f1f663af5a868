//! Relevance masking of receptacles and objects in observations.

use serde::{Deserialize, Serialize};

use crate::expert::Demonstration;
use crate::lexicon::{named_classes, Lexicon};
use crate::lmbridge::LanguageModel;
use crate::metrics::{auc_roc, MetricError};
use crate::worldsim::{Catalog, EntityKind, InstanceName, Observation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EliminateConfig {
    /// Object threshold.
    pub tau_o: f64,
    /// Receptacle threshold.
    pub tau_r: f64,
}

impl Default for EliminateConfig {
    fn default() -> Self {
        EliminateConfig { tau_o: 0.4, tau_r: 0.4 }
    }
}

impl EliminateConfig {
    pub fn threshold(&self, kind: EntityKind) -> f64 {
        match kind {
            EntityKind::Receptacle => self.tau_r,
            EntityKind::Object => self.tau_o,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskDecision {
    pub name: InstanceName,
    pub kind: EntityKind,
    pub score: f64,
    pub threshold: f64,
    /// The conditioning text names the entity's class.
    pub guarded: bool,
    /// Scoring failed; kept regardless.
    pub failed: bool,
    pub kept: bool,
}

/// `(receptacle prompt, object prompt)` for a conditioning text.
pub fn relevance_prompts(task_text: &str) -> (String, String) {
    (
        format!("Your task is to: {task_text}. Where should you go to?"),
        format!("Your task is to: {task_text}. Which objects will be relevant?"),
    )
}

/// One decision per visible entity, in observation order.
pub fn score_entities(
    bridge: &dyn LanguageModel,
    conditioning: &str,
    observation: &Observation,
    config: &EliminateConfig,
) -> Vec<MaskDecision> {
    let (recep_prompt, obj_prompt) = relevance_prompts(conditioning);
    let named = named_classes(conditioning, Catalog::builtin(), Lexicon::builtin());
    observation
        .entities()
        .into_iter()
        .map(|e| {
            let prompt = match e.kind {
                EntityKind::Receptacle => &recep_prompt,
                EntityKind::Object => &obj_prompt,
            };
            let threshold = config.threshold(e.kind);
            let (score, failed) = match bridge.score_choice(prompt, &e.name.to_string()) {
                Ok(s) => (s, false),
                Err(err) => {
                    tracing::warn!(entity = %e.name, %err, "scoring failed, keeping entity");
                    (1.0, true)
                }
            };
            let guarded = named.contains(&e.name.class);
            MaskDecision { kept: score >= threshold || guarded || failed, name: e.name, kind: e.kind, score, threshold, guarded, failed }
        })
        .collect()
}

/// Removes entities whose decision says drop. Anchors and entities without
/// a decision stay.
pub fn mask_observation(observation: &Observation, decisions: &[MaskDecision]) -> Observation {
    observation.retain(|e| decisions.iter().find(|d| d.name == e.name).is_none_or(|d| d.kept))
}

/// Scores and masks in one go.
pub fn eliminate(
    bridge: &dyn LanguageModel,
    conditioning: &str,
    observation: &Observation,
    config: &EliminateConfig,
) -> (Observation, Vec<MaskDecision>) {
    let decisions = score_entities(bridge, conditioning, observation, config);
    (mask_observation(observation, &decisions), decisions)
}

/// Rank-based AUC of relevance scores against the expert's touched set.
pub fn evaluate_auc(scores: &[f64], relevant: &[bool]) -> Result<f64, MetricError> {
    auc_roc(scores, relevant)
}

/// A scored entity with its ground-truth label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntity {
    pub name: InstanceName,
    pub kind: EntityKind,
    pub score: f64,
    pub relevant: bool,
}

/// Scores every distinct entity seen along a demonstration against the
/// full task text; labels come from the demonstration's touched set.
pub fn score_demo_entities(
    bridge: &dyn LanguageModel,
    demo: &Demonstration,
    task_text: &str,
) -> Vec<ScoredEntity> {
    let (recep_prompt, obj_prompt) = relevance_prompts(task_text);
    let mut seen: Vec<(InstanceName, EntityKind)> = Vec::new();
    for obs in demo.observations() {
        for e in obs.entities() {
            if !seen.iter().any(|(n, _)| *n == e.name) {
                seen.push((e.name, e.kind));
            }
        }
    }
    seen.into_iter()
        .map(|(name, kind)| {
            let prompt = if kind == EntityKind::Receptacle { &recep_prompt } else { &obj_prompt };
            let score = bridge.score_choice(prompt, &name.to_string()).unwrap_or(1.0);
            let relevant = demo.touched.contains(&name.to_string());
            ScoredEntity { name, kind, score, relevant }
        })
        .collect()
}
