use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::agent::{AgentConfig, TrainConfig};
use crate::eliminator::EliminateConfig;
use crate::lmbridge::{
    BridgeProvider, CacheBackend, CacheMode, HttpBackend, HttpConfig, LanguageModel, OracleConfig, OracleProvider,
    SharedBridge, UniformScorer,
};
use crate::planner::DEFAULT_EXAMPLES;
use crate::worldsim::SceneConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: usize,
    pub seen: usize,
    pub unseen: usize,
    pub train_seed_base: u64,
    pub unseen_seed_base: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { train: 140, seen: 40, unseen: 40, train_seed_base: 0, unseen_seed_base: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    pub step_budget: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig { step_budget: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub examples: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig { examples: DEFAULT_EXAMPLES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Training seeds per ablation row.
    pub seeds: Vec<u64>,
    /// Seed of the goal paraphrases used for perturbed evaluation.
    pub perturb_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seeds: vec![0, 1, 2], perturb_seed: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Oracle,
    Http,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub backend: BackendKind,
    pub http: HttpConfig,
    /// Record/replay file wrapped around the HTTP backend.
    pub cache: Option<PathBuf>,
    pub cache_mode: CacheMode,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { backend: BackendKind::Oracle, http: HttpConfig::default(), cache: None, cache_mode: CacheMode::Record }
    }
}

/// Every tunable of a run, one TOML section per component.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub scenes: SceneConfig,
    pub splits: SplitConfig,
    pub episode: EpisodeConfig,
    pub plan: PlanConfig,
    pub eliminate: EliminateConfig,
    pub agent: AgentConfig,
    pub train: TrainConfig,
    pub oracle: OracleConfig,
    pub eval: EvalConfig,
    pub lm: LmConfig,
}

impl HarnessConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: HarnessConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.scenes.validate()?;
        self.agent.validate()?;
        if self.agent.embed_dim != self.oracle.embed_dim && self.lm.backend == BackendKind::Oracle {
            return Err(HarnessError::Config(format!(
                "agent embed_dim {} differs from oracle embed_dim {}",
                self.agent.embed_dim, self.oracle.embed_dim
            )));
        }
        if self.eval.seeds.is_empty() {
            return Err(HarnessError::Config("eval needs at least one seed".into()));
        }
        Ok(())
    }

    /// Short digest of the resolved config, stored in trajectory headers.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = format!("{:x}", Sha256::digest(json.as_bytes()));
        digest[..16].to_string()
    }

    /// Bridge provider for the configured backend.
    pub fn provider(&self) -> Result<Arc<dyn BridgeProvider>, HarnessError> {
        Ok(match self.lm.backend {
            BackendKind::Oracle => Arc::new(OracleProvider::new(self.oracle.clone())),
            BackendKind::Uniform => Arc::new(SharedBridge(Arc::new(UniformScorer::new(self.oracle.rng_seed)))),
            BackendKind::Http => {
                let http: Arc<dyn LanguageModel> = Arc::new(HttpBackend::new(self.lm.http.clone().with_env())?);
                let model: Arc<dyn LanguageModel> = match &self.lm.cache {
                    Some(path) => Arc::new(CacheBackend::open(path, Some(http), self.lm.cache_mode)?),
                    None => http,
                };
                Arc::new(SharedBridge(model))
            }
        })
    }
}
