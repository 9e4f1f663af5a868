//! Uninformative backend: uniform relevance scores and coin-flip answers.

use super::hash_embed::HashEmbedder;
use super::{hashed_unit, LanguageModel, LmError};

#[derive(Debug, Clone, Default)]
pub struct UniformScorer {
    pub seed: u64,
    pub embedder: HashEmbedder,
}

impl UniformScorer {
    pub fn new(seed: u64) -> Self {
        UniformScorer { seed, embedder: HashEmbedder::default() }
    }
}

impl LanguageModel for UniformScorer {
    fn generate(&self, _: &str, _: usize, _: &[String]) -> Result<String, LmError> {
        Ok(String::new())
    }

    fn score_choice(&self, prompt: &str, candidate: &str) -> Result<f64, LmError> {
        Ok(hashed_unit(self.seed, &["uniform", prompt, candidate]))
    }

    fn yes_no(&self, prompt: &str) -> Result<(f64, f64), LmError> {
        let p = hashed_unit(self.seed, &["uniform-yes", prompt]);
        Ok((p, 1.0 - p))
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, LmError> {
        Ok(self.embedder.embed(text))
    }
}
