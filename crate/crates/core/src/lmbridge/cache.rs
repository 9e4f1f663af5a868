//! Record/replay cache over any backend.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{LanguageModel, LmError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CacheMode {
    /// Serve hits, call through and persist on misses.
    Record,
    /// Serve hits only; a miss is an error.
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub capability: String,
    pub request: Value,
    pub response: Value,
}

pub struct CacheBackend {
    inner: Option<Arc<dyn LanguageModel>>,
    mode: CacheMode,
    entries: RwLock<HashMap<String, Value>>,
    store: Mutex<Option<File>>,
}

fn cache_key(capability: &str, request: &Value) -> String {
    let mut h = Sha256::new();
    h.update(capability.as_bytes());
    h.update([0u8]);
    h.update(request.to_string().as_bytes());
    format!("{:x}", h.finalize())
}

impl CacheBackend {
    /// Opens (or creates) the store at `path` and loads existing records.
    pub fn open(path: &Path, inner: Option<Arc<dyn LanguageModel>>, mode: CacheMode) -> Result<Self, LmError> {
        let store_err = |e: std::io::Error| LmError::Store(format!("{}: {e}", path.display()));
        let mut entries = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(store_err)?;
            for (no, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(store_err)?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheRecord = serde_json::from_str(&line)
                    .map_err(|e| LmError::Store(format!("{} line {}: {e}", path.display(), no + 1)))?;
                entries.insert(rec.key, rec.response);
            }
        }
        let store = match mode {
            CacheMode::Record => {
                Some(OpenOptions::new().create(true).append(true).open(path).map_err(store_err)?)
            }
            CacheMode::Replay => None,
        };
        Ok(CacheBackend { inner, mode, entries: RwLock::new(entries), store: Mutex::new(store) })
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn cached<T: Serialize + DeserializeOwned>(
        &self,
        capability: &str,
        request: Value,
        call: impl FnOnce(&dyn LanguageModel) -> Result<T, LmError>,
    ) -> Result<T, LmError> {
        let key = cache_key(capability, &request);
        if let Some(v) = self.entries.read().expect("cache lock").get(&key) {
            return serde_json::from_value(v.clone()).map_err(|e| LmError::Store(e.to_string()));
        }
        let inner = match (&self.inner, self.mode) {
            (Some(inner), CacheMode::Record) => inner,
            _ => return Err(LmError::ReplayMiss(key)),
        };
        let out = call(inner.as_ref())?;
        let response = serde_json::to_value(&out).map_err(|e| LmError::Store(e.to_string()))?;
        let rec = CacheRecord { key: key.clone(), capability: capability.into(), request, response: response.clone() };
        let mut line = serde_json::to_string(&rec).map_err(|e| LmError::Store(e.to_string()))?;
        line.push('\n');
        {
            let mut store = self.store.lock().expect("store lock");
            if let Some(f) = store.as_mut() {
                f.write_all(line.as_bytes()).map_err(|e| LmError::Store(e.to_string()))?;
            }
        }
        self.entries.write().expect("cache lock").insert(key, response);
        Ok(out)
    }
}

impl LanguageModel for CacheBackend {
    fn generate(&self, prompt: &str, max_tokens: usize, stop: &[String]) -> Result<String, LmError> {
        let req = json!({ "prompt": prompt, "max_tokens": max_tokens, "stop": stop });
        self.cached("generate", req, |m| m.generate(prompt, max_tokens, stop))
    }

    fn score_choice(&self, prompt: &str, candidate: &str) -> Result<f64, LmError> {
        let req = json!({ "prompt": prompt, "candidate": candidate });
        self.cached("score_choice", req, |m| m.score_choice(prompt, candidate))
    }

    fn yes_no(&self, prompt: &str) -> Result<(f64, f64), LmError> {
        self.cached("yes_no", json!({ "prompt": prompt }), |m| m.yes_no(prompt))
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, LmError> {
        self.cached("embed", json!({ "text": text }), |m| m.embed(text))
    }
}
