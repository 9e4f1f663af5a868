//! Seeded bag-of-tokens embedding.

use crate::lexicon::tokenize;

pub const DEFAULT_EMBED_DIM: usize = 64;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    fnv1a_extend(FNV_OFFSET, bytes)
}

pub(crate) fn fnv1a_extend(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

pub(crate) fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: DEFAULT_EMBED_DIM, seed: 0 }
    }
}

impl HashEmbedder {
    fn token_vector(&self, token: &str, acc: &mut [f64]) {
        let mut state = fnv1a_extend(fnv1a(&self.seed.to_le_bytes()), token.as_bytes());
        for v in acc.iter_mut() {
            state = splitmix64(state);
            // uniform in [-1, 1)
            *v += (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0;
        }
    }

    /// L2-normalized mean of per-token vectors. Text without tokens maps to
    /// the first basis vector.
    pub fn embed(&self, text: &str) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        let tokens = tokenize(text);
        for t in &tokens {
            self.token_vector(t, &mut acc);
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if tokens.is_empty() || norm == 0.0 {
            let mut e = vec![0.0; self.dim];
            if let Some(first) = e.first_mut() {
                *first = 1.0;
            }
            return e;
        }
        // the mean's 1/n cancels under normalization
        acc.iter().map(|v| v / norm).collect()
    }
}

/// Embedding with the default dimension and seed.
pub fn hash_embed(text: &str) -> Vec<f64> {
    HashEmbedder::default().embed(text)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
