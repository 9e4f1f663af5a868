//! Forward and backward passes of the action-attention policy.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::params::{LayerParams, PolicyParams, CONTEXT_SLOTS};
use super::{AgentError, AgentInput};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mask {
    Full,
    /// Rows below the bound see only context; later rows see context and themselves.
    Context(usize),
}

impl Mask {
    fn allows(self, row: usize, col: usize) -> bool {
        match self {
            Mask::Full => true,
            Mask::Context(k) => col < k || (row >= k && col == row),
        }
    }
}

#[derive(Debug, Clone)]
struct NormCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: NormCache,
    u: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    z: Array2<f64>,
    ln2: NormCache,
    u2: Array2<f64>,
    a1: Array2<f64>,
    f1: Array2<f64>,
}

#[derive(Debug, Clone)]
struct TrunkCache {
    layers: Vec<LayerCache>,
    lnf: NormCache,
    y: Array2<f64>,
}

/// Everything backward needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Canonical slot of each caller action.
    order: Vec<usize>,
    x: Array2<f64>,
    q_trunk: TrunkCache,
    k_trunk: TrunkCache,
    query: Array1<f64>,
    keys: Array2<f64>,
    /// Scores and probabilities in caller order.
    pub scores: Vec<f64>,
    pub policy: Vec<f64>,
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, NormCache) {
    let m = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, is) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / m;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / m;
        *is = 1.0 / (var + LN_EPS).sqrt();
        row.mapv_inplace(|v| v * *is);
    }
    let y = &xhat * g + b;
    (y, NormCache { xhat, inv_std })
}

/// Returns the input gradient; accumulates gain and bias gradients.
fn layer_norm_back(
    dy: &Array2<f64>,
    cache: &NormCache,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(dy * &cache.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let m = dy.ncols() as f64;
    let dxhat = dy * g;
    let mut dx = Array2::zeros(dy.raw_dim());
    for r in 0..dy.nrows() {
        let dh = dxhat.row(r);
        let xh = cache.xhat.row(r);
        let mean_dh = dh.sum() / m;
        let mean_dhx = dh.dot(&xh) / m;
        let is = cache.inv_std[r];
        for c in 0..dy.ncols() {
            dx[[r, c]] = is * (dh[c] - mean_dh - xh[c] * mean_dhx);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

fn check_finite(a: &Array2<f64>, layer: usize) -> Result<(), AgentError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(AgentError::NonFinite { layer })
    }
}

fn layer_forward(
    p: &LayerParams,
    heads: usize,
    mask: Mask,
    h: &Array2<f64>,
) -> (Array2<f64>, LayerCache) {
    let (u, ln1) = layer_norm(h, &p.ln1_g, &p.ln1_b);
    let q = u.dot(&p.wq);
    let k = u.dot(&p.wk);
    let v = u.dot(&p.wv);
    let n = h.nrows();
    let hd = h.ncols() / heads;
    let scale = 1.0 / (hd as f64).sqrt();
    let mut z = Array2::zeros(h.raw_dim());
    let mut attn = Vec::with_capacity(heads);
    for head in 0..heads {
        let cols = s![.., head * hd..(head + 1) * hd];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);
        let mut a = qh.dot(&kh.t()) * scale;
        for r in 0..n {
            let mut row: Vec<f64> = Vec::with_capacity(n);
            let allowed: Vec<usize> = (0..n).filter(|&c| mask.allows(r, c)).collect();
            row.extend(allowed.iter().map(|&c| a[[r, c]]));
            softmax_in_place(&mut row);
            a.row_mut(r).fill(0.0);
            for (&c, p) in allowed.iter().zip(row) {
                a[[r, c]] = p;
            }
        }
        z.slice_mut(cols).assign(&a.dot(&vh));
        attn.push(a);
    }
    let mid = h + &z.dot(&p.wo);
    let (u2, ln2) = layer_norm(&mid, &p.ln2_g, &p.ln2_b);
    let a1 = u2.dot(&p.w1) + &p.b1;
    let f1 = a1.mapv(gelu);
    let out = &mid + &(f1.dot(&p.w2) + &p.b2);
    (out, LayerCache { ln1, u, q, k, v, attn, z, ln2, u2, a1, f1 })
}

fn trunk_forward(params: &PolicyParams, x: &Array2<f64>, mask: Mask) -> Result<TrunkCache, AgentError> {
    let mut h = x.dot(&params.w_in) + &params.b_in;
    let ctx = CONTEXT_SLOTS.min(h.nrows());
    {
        let mut head = h.slice_mut(s![..ctx, ..]);
        head += &params.pos.slice(s![..ctx, ..]);
    }
    check_finite(&h, 0)?;
    let mut layers = Vec::with_capacity(params.layers.len());
    for (i, lp) in params.layers.iter().enumerate() {
        let (out, cache) = layer_forward(lp, params.config.heads, mask, &h);
        check_finite(&out, i + 1)?;
        layers.push(cache);
        h = out;
    }
    let (y, lnf) = layer_norm(&h, &params.lnf_g, &params.lnf_b);
    check_finite(&y, params.layers.len() + 1)?;
    Ok(TrunkCache { layers, lnf, y })
}

fn trunk_backward(
    params: &PolicyParams,
    x: &Array2<f64>,
    cache: &TrunkCache,
    dy: &Array2<f64>,
    grads: &mut PolicyParams,
) {
    let mut dh = layer_norm_back(dy, &cache.lnf, &params.lnf_g, &mut grads.lnf_g, &mut grads.lnf_b);
    let heads = params.config.heads;
    for (li, lc) in cache.layers.iter().enumerate().rev() {
        let p = &params.layers[li];
        let g = &mut grads.layers[li];
        // feed-forward branch
        g.w2 += &lc.f1.t().dot(&dh);
        g.b2 += &dh.sum_axis(Axis(0));
        let df1 = dh.dot(&p.w2.t());
        let da1 = df1 * &lc.a1.mapv(gelu_grad);
        g.w1 += &lc.u2.t().dot(&da1);
        g.b1 += &da1.sum_axis(Axis(0));
        let du2 = da1.dot(&p.w1.t());
        let dmid = &dh + &layer_norm_back(&du2, &lc.ln2, &p.ln2_g, &mut g.ln2_g, &mut g.ln2_b);
        // attention branch
        g.wo += &lc.z.t().dot(&dmid);
        let dz = dmid.dot(&p.wo.t());
        let hd = dz.ncols() / heads;
        let scale = 1.0 / (hd as f64).sqrt();
        let mut dq = Array2::zeros(dz.raw_dim());
        let mut dk = Array2::zeros(dz.raw_dim());
        let mut dv = Array2::zeros(dz.raw_dim());
        for (head, a) in lc.attn.iter().enumerate() {
            let cols = s![.., head * hd..(head + 1) * hd];
            let dzh = dz.slice(cols);
            let da = dzh.dot(&lc.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&dzh));
            let mut ds = a * &da;
            for r in 0..ds.nrows() {
                let tot = ds.row(r).sum();
                let arow = a.row(r);
                let mut srow = ds.row_mut(r);
                srow.zip_mut_with(&arow, |sv, &av| *sv -= av * tot);
            }
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&lc.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&lc.q.slice(cols)));
        }
        g.wq += &lc.u.t().dot(&dq);
        g.wk += &lc.u.t().dot(&dk);
        g.wv += &lc.u.t().dot(&dv);
        let du = dq.dot(&p.wq.t()) + dk.dot(&p.wk.t()) + dv.dot(&p.wv.t());
        dh = dmid + layer_norm_back(&du, &lc.ln1, &p.ln1_g, &mut g.ln1_g, &mut g.ln1_b);
    }
    let ctx = CONTEXT_SLOTS.min(dh.nrows());
    {
        let mut gp = grads.pos.slice_mut(s![..ctx, ..]);
        gp += &dh.slice(s![..ctx, ..]);
    }
    grads.b_in += &dh.sum_axis(Axis(0));
    grads.w_in += &x.t().dot(&dh);
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Policy over the input's actions.
///
/// Actions are processed in a canonical order (lexicographic on their
/// embeddings) and mapped back, so permuting the input permutes the output
/// bit for bit.
pub fn forward(params: &PolicyParams, input: &AgentInput) -> Result<ForwardCache, AgentError> {
    input.validate(params.config.embed_dim)?;
    let n = input.action_embeddings.len();
    let d = params.config.embed_dim;
    let mut canon: Vec<usize> = (0..n).collect();
    canon.sort_by(|&a, &b| lex_cmp(&input.action_embeddings[a], &input.action_embeddings[b]));
    let mut order = vec![0; n];
    for (slot, &orig) in canon.iter().enumerate() {
        order[orig] = slot;
    }
    let mut x = Array2::zeros((CONTEXT_SLOTS + n, d));
    x.row_mut(0).assign(&ArrayView1::from(&input.task_embedding[..]));
    x.row_mut(1).assign(&ArrayView1::from(&input.history_embedding[..]));
    x.row_mut(2).assign(&ArrayView1::from(&input.obs_embedding[..]));
    for (slot, &orig) in canon.iter().enumerate() {
        x.row_mut(CONTEXT_SLOTS + slot).assign(&ArrayView1::from(&input.action_embeddings[orig][..]));
    }
    let q_trunk = trunk_forward(params, &x, Mask::Full)?;
    let k_trunk = trunk_forward(params, &x, Mask::Context(CONTEXT_SLOTS))?;
    let query = q_trunk.y.row(params.config.query_slot).dot(&params.head_q) + &params.head_q_b;
    let keys = k_trunk.y.slice(s![CONTEXT_SLOTS.., ..]).dot(&params.head_k) + &params.head_k_b;
    let canon_scores = keys.dot(&query);
    let mut canon_policy = canon_scores.to_vec();
    softmax_in_place(&mut canon_policy);
    if canon_policy.iter().any(|p| !p.is_finite()) {
        return Err(AgentError::NonFinite { layer: params.layers.len() + 1 });
    }
    let scores = order.iter().map(|&s| canon_scores[s]).collect();
    let policy = order.iter().map(|&s| canon_policy[s]).collect();
    Ok(ForwardCache { order, x, q_trunk, k_trunk, query, keys, scores, policy })
}

/// Gradients of `-ln policy[expert]`, added into `grads`. Returns the loss.
pub fn backward(
    params: &PolicyParams,
    cache: &ForwardCache,
    expert: usize,
    grads: &mut PolicyParams,
) -> Result<f64, AgentError> {
    let n = cache.policy.len();
    if expert >= n {
        return Err(AgentError::BadIndex { index: expert, actions: n });
    }
    let loss = -cache.policy[expert].ln();
    // d loss / d score, canonical order
    let mut g = Array1::zeros(n);
    for (orig, &slot) in cache.order.iter().enumerate() {
        g[slot] = cache.policy[orig] - if orig == expert { 1.0 } else { 0.0 };
    }
    let m = params.config.hidden;
    let dquery = cache.keys.t().dot(&g);
    let dkeys = g.view().insert_axis(Axis(1)).dot(&cache.query.view().insert_axis(Axis(0)));

    let yk = cache.k_trunk.y.slice(s![CONTEXT_SLOTS.., ..]);
    grads.head_k += &yk.t().dot(&dkeys);
    grads.head_k_b += &dkeys.sum_axis(Axis(0));
    let mut dyk = Array2::zeros(cache.k_trunk.y.raw_dim());
    dyk.slice_mut(s![CONTEXT_SLOTS.., ..]).assign(&dkeys.dot(&params.head_k.t()));

    let slot = params.config.query_slot;
    let yq = cache.q_trunk.y.row(slot);
    grads.head_q += &yq.insert_axis(Axis(1)).dot(&dquery.view().insert_axis(Axis(0)));
    grads.head_q_b += &dquery;
    let mut dyq = Array2::zeros((cache.q_trunk.y.nrows(), m));
    dyq.row_mut(slot).assign(&params.head_q.dot(&dquery));

    trunk_backward(params, &cache.x, &cache.q_trunk, &dyq, grads);
    trunk_backward(params, &cache.x, &cache.k_trunk, &dyk, grads);
    Ok(loss)
}

/// Loss of one example without gradients.
pub fn loss(params: &PolicyParams, input: &AgentInput, expert: usize) -> Result<f64, AgentError> {
    let cache = forward(params, input)?;
    cache
        .policy
        .get(expert)
        .map(|p| -p.ln())
        .ok_or(AgentError::BadIndex { index: expert, actions: cache.policy.len() })
}
