//! Language-model capabilities behind one trait, with HTTP, oracle, cache
//! and random backends.

mod cache;
mod hash_embed;
mod http;
mod oracle;
mod random;

use std::sync::Arc;

pub use cache::{CacheBackend, CacheMode, CacheRecord};
pub use hash_embed::{cosine, hash_embed, HashEmbedder, DEFAULT_EMBED_DIM};
pub use http::{HttpBackend, HttpConfig};
pub use oracle::{EpisodeTruth, OracleBackend, OracleConfig, OracleProvider};
pub use random::UniformScorer;

use crate::worldsim::Scene;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LmError {
    #[error("HTTP {status} from {url}: {body}")]
    Http { status: u16, url: String, body: String },
    #[error("network error for {url}: {message}")]
    Network { url: String, message: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("no cached response for key {0}")]
    ReplayMiss(String),
    #[error("cache store: {0}")]
    Store(String),
    #[error("oracle has no ground truth for this episode")]
    NoGroundTruth,
    #[error("prompt not understood: {0}")]
    BadPrompt(String),
}

/// The four capabilities every backend provides.
pub trait LanguageModel: Send + Sync {
    /// Greedy completion, cut at the first stop sequence.
    fn generate(&self, prompt: &str, max_tokens: usize, stop: &[String]) -> Result<String, LmError>;

    /// Relevance of `candidate` as an answer to `prompt`, in [0, 1].
    fn score_choice(&self, prompt: &str, candidate: &str) -> Result<f64, LmError>;

    /// `(p_yes, p_no)` renormalized over the two answers.
    fn yes_no(&self, prompt: &str) -> Result<(f64, f64), LmError>;

    /// Unit-norm text embedding.
    fn embed(&self, text: &str) -> Result<Vec<f64>, LmError>;
}

impl<T: LanguageModel + ?Sized> LanguageModel for Arc<T> {
    fn generate(&self, prompt: &str, max_tokens: usize, stop: &[String]) -> Result<String, LmError> {
        (**self).generate(prompt, max_tokens, stop)
    }
    fn score_choice(&self, prompt: &str, candidate: &str) -> Result<f64, LmError> {
        (**self).score_choice(prompt, candidate)
    }
    fn yes_no(&self, prompt: &str) -> Result<(f64, f64), LmError> {
        (**self).yes_no(prompt)
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, LmError> {
        (**self).embed(text)
    }
}

/// Hands out the bridge for one episode. Oracle backends need the episode's
/// ground truth; the others ignore the scene.
pub trait BridgeProvider: Send + Sync {
    fn for_episode(&self, scene: &Scene, goal_text: &str) -> Result<Arc<dyn LanguageModel>, LmError>;

    /// Bridge used where no episode is in play (planning, embeddings).
    fn shared(&self) -> Arc<dyn LanguageModel>;
}

/// Same backend for every episode.
pub struct SharedBridge(pub Arc<dyn LanguageModel>);

impl BridgeProvider for SharedBridge {
    fn for_episode(&self, _: &Scene, _: &str) -> Result<Arc<dyn LanguageModel>, LmError> {
        Ok(self.0.clone())
    }

    fn shared(&self) -> Arc<dyn LanguageModel> {
        self.0.clone()
    }
}

/// Cuts `text` at the earliest occurrence of any stop sequence.
pub fn truncate_at_stop(text: &str, stop: &[String]) -> String {
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    text[..cut].to_string()
}

/// Deterministic uniform draw in [0, 1) from a seed and a list of strings.
pub(crate) fn hashed_unit(seed: u64, parts: &[&str]) -> f64 {
    let mut h = hash_embed::fnv1a(&seed.to_le_bytes());
    for p in parts {
        h = hash_embed::fnv1a_extend(h, &[0xff]);
        h = hash_embed::fnv1a_extend(h, p.as_bytes());
    }
    (hash_embed::splitmix64(h) >> 11) as f64 / (1u64 << 53) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stop_sequences_cut_at_first_match() {
        let stop = vec!["\n".to_string(), "Q:".to_string()];
        assert_eq!(truncate_at_stop("a, b\nQ: c", &stop), "a, b");
        assert_eq!(truncate_at_stop("a Q: b\n", &stop), "a ");
        assert_eq!(truncate_at_stop("plain", &stop), "plain");
    }

    #[test]
    fn hashed_unit_is_stable_and_bounded() {
        let a = hashed_unit(3, &["x", "y"]);
        assert_eq!(a, hashed_unit(3, &["x", "y"]));
        assert_ne!(a, hashed_unit(3, &["xy"]));
        assert!((0.0..1.0).contains(&a));
    }
}
