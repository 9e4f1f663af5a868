//! Trainable tensors and the text checkpoint format.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AgentError;

/// Number of context slots (task, history, observation) ahead of the actions.
pub const CONTEXT_SLOTS: usize = 3;

const CHECKPOINT_MAGIC: &str = "pet-policy 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Feed-forward width as a multiple of `hidden`.
    pub ff_mult: usize,
    /// Context slot the query is read from (0 task, 1 history, 2 observation).
    pub query_slot: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { layers: 2, heads: 4, hidden: 64, embed_dim: 64, ff_mult: 4, query_slot: 2 }
    }
}

impl AgentConfig {
    pub fn tiny() -> Self {
        AgentConfig { layers: 1, heads: 1, hidden: 8, embed_dim: 8, ff_mult: 2, query_slot: 2 }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: &str| Err(AgentError::Config(m.to_string()));
        if self.layers == 0 || self.heads == 0 || self.hidden == 0 || self.embed_dim == 0 || self.ff_mult == 0 {
            return bad("all sizes must be positive");
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return bad("heads must divide hidden");
        }
        if self.query_slot >= CONTEXT_SLOTS {
            return bad("query_slot must be 0, 1 or 2");
        }
        Ok(())
    }

    pub fn ff_dim(&self) -> usize {
        self.hidden * self.ff_mult
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// All weights of the policy. Matrices are stored input-major so a row
/// vector times the matrix gives the output.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub config: AgentConfig,
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub pos: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Array1<f64>,
    pub lnf_b: Array1<f64>,
    pub head_q: Array2<f64>,
    pub head_q_b: Array1<f64>,
    pub head_k: Array2<f64>,
    pub head_k_b: Array1<f64>,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..scale))
}

impl PolicyParams {
    /// All-zero tensors with gains at zero too; used for gradients and momentum.
    pub fn zeros(config: AgentConfig) -> Self {
        let m = config.hidden;
        let f = config.ff_dim();
        let z1 = |n| Array1::zeros(n);
        let z2 = |r, c| Array2::zeros((r, c));
        PolicyParams {
            config,
            w_in: z2(config.embed_dim, m),
            b_in: z1(m),
            pos: z2(CONTEXT_SLOTS, m),
            layers: (0..config.layers)
                .map(|_| LayerParams {
                    ln1_g: z1(m),
                    ln1_b: z1(m),
                    wq: z2(m, m),
                    wk: z2(m, m),
                    wv: z2(m, m),
                    wo: z2(m, m),
                    ln2_g: z1(m),
                    ln2_b: z1(m),
                    w1: z2(m, f),
                    b1: z1(f),
                    w2: z2(f, m),
                    b2: z1(m),
                })
                .collect(),
            lnf_g: z1(m),
            lnf_b: z1(m),
            head_q: z2(m, m),
            head_q_b: z1(m),
            head_k: z2(m, m),
            head_k_b: z1(m),
        }
    }

    /// Uniform in ±1/sqrt(fan_in), biases zero, norm gains one.
    pub fn init(config: AgentConfig, seed: u64) -> Result<Self, AgentError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Self::zeros(config);
        let m = config.hidden;
        let f = config.ff_dim();
        let s = |fan: usize| 1.0 / (fan as f64).sqrt();
        p.w_in = uniform(&mut rng, config.embed_dim, m, s(config.embed_dim));
        p.pos = uniform(&mut rng, CONTEXT_SLOTS, m, s(m));
        for l in &mut p.layers {
            l.ln1_g.fill(1.0);
            l.ln2_g.fill(1.0);
            l.wq = uniform(&mut rng, m, m, s(m));
            l.wk = uniform(&mut rng, m, m, s(m));
            l.wv = uniform(&mut rng, m, m, s(m));
            l.wo = uniform(&mut rng, m, m, s(m));
            l.w1 = uniform(&mut rng, m, f, s(m));
            l.w2 = uniform(&mut rng, f, m, s(f));
        }
        p.lnf_g.fill(1.0);
        p.head_q = uniform(&mut rng, m, m, s(m));
        p.head_k = uniform(&mut rng, m, m, s(m));
        Ok(p)
    }

    /// Every tensor as (name, shape, values) in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        fn s<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let mut out: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
        macro_rules! push {
            ($name:expr, $pair:expr) => {{
                let (shape, v) = $pair;
                out.push(($name, shape, v));
            }};
        }
        push!("w_in".into(), s(&self.w_in));
        push!("b_in".into(), s(&self.b_in));
        push!("pos".into(), s(&self.pos));
        for (i, l) in self.layers.iter().enumerate() {
            push!(format!("layer{i}.ln1_g"), s(&l.ln1_g));
            push!(format!("layer{i}.ln1_b"), s(&l.ln1_b));
            push!(format!("layer{i}.wq"), s(&l.wq));
            push!(format!("layer{i}.wk"), s(&l.wk));
            push!(format!("layer{i}.wv"), s(&l.wv));
            push!(format!("layer{i}.wo"), s(&l.wo));
            push!(format!("layer{i}.ln2_g"), s(&l.ln2_g));
            push!(format!("layer{i}.ln2_b"), s(&l.ln2_b));
            push!(format!("layer{i}.w1"), s(&l.w1));
            push!(format!("layer{i}.b1"), s(&l.b1));
            push!(format!("layer{i}.w2"), s(&l.w2));
            push!(format!("layer{i}.b2"), s(&l.b2));
        }
        push!("lnf_g".into(), s(&self.lnf_g));
        push!("lnf_b".into(), s(&self.lnf_b));
        push!("head_q".into(), s(&self.head_q));
        push!("head_q_b".into(), s(&self.head_q_b));
        push!("head_k".into(), s(&self.head_k));
        push!("head_k_b".into(), s(&self.head_k_b));
        out
    }

    /// Mutable views in the same order as [`PolicyParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        fn s<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        let mut out = vec![s(&mut self.w_in), s(&mut self.b_in), s(&mut self.pos)];
        for l in &mut self.layers {
            out.extend([
                s(&mut l.ln1_g),
                s(&mut l.ln1_b),
                s(&mut l.wq),
                s(&mut l.wk),
                s(&mut l.wv),
                s(&mut l.wo),
                s(&mut l.ln2_g),
                s(&mut l.ln2_b),
                s(&mut l.w1),
                s(&mut l.b1),
                s(&mut l.w2),
                s(&mut l.b2),
            ]);
        }
        out.extend([
            s(&mut self.lnf_g),
            s(&mut self.lnf_b),
            s(&mut self.head_q),
            s(&mut self.head_q_b),
            s(&mut self.head_k),
            s(&mut self.head_k_b),
        ]);
        out
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, _, v)| v.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }

    /// Text checkpoint: a magic line, the config, then one header line
    /// (`name dims...`) and one line of row-major values per tensor.
    pub fn to_checkpoint(&self) -> String {
        let c = &self.config;
        let mut out = format!(
            "{CHECKPOINT_MAGIC}\nconfig {} {} {} {} {} {}\n",
            c.layers, c.heads, c.hidden, c.embed_dim, c.ff_mult, c.query_slot
        );
        for (name, shape, values) in self.tensors() {
            let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, "{name} {}", dims.join(" "));
            let vals: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, AgentError> {
        let bad = |m: String| AgentError::Checkpoint(m);
        let mut lines = text.lines();
        if lines.next() != Some(CHECKPOINT_MAGIC) {
            return Err(bad("missing header".into()));
        }
        let cfg_line = lines.next().ok_or_else(|| bad("missing config".into()))?;
        let nums: Vec<usize> = cfg_line
            .strip_prefix("config ")
            .ok_or_else(|| bad("malformed config line".into()))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad config value {t:?}"))))
            .collect::<Result<_, _>>()?;
        let [layers, heads, hidden, embed_dim, ff_mult, query_slot] = nums[..] else {
            return Err(bad("config needs six values".into()));
        };
        let config = AgentConfig { layers, heads, hidden, embed_dim, ff_mult, query_slot };
        config.validate()?;
        let mut params = Self::zeros(config);
        let expected: Vec<(String, Vec<usize>)> =
            params.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        for ((name, shape), slot) in expected.into_iter().zip(params.tensors_mut()) {
            let header = lines.next().ok_or_else(|| bad(format!("missing tensor {name}")))?;
            let mut parts = header.split_whitespace();
            if parts.next() != Some(name.as_str()) {
                return Err(bad(format!("expected tensor {name}, found {header:?}")));
            }
            let dims: Vec<usize> = parts.map(|t| t.parse().unwrap_or(usize::MAX)).collect();
            if dims != shape {
                return Err(bad(format!("tensor {name}: shape {dims:?}, expected {shape:?}")));
            }
            let body = lines.next().ok_or_else(|| bad(format!("missing values for {name}")))?;
            let values: Vec<f64> = body
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(format!("tensor {name}: bad value {t:?}"))))
                .collect::<Result<_, _>>()?;
            if values.len() != slot.len() {
                return Err(bad(format!("tensor {name}: {} values, expected {}", values.len(), slot.len())));
            }
            slot.copy_from_slice(&values);
        }
        Ok(params)
    }
}
