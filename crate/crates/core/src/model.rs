//! The in-context transformer: observational rows (t, x, y) and query rows
//! (t, x) become tokens; encoder layers with asymmetric masking (every token
//! attends to context tokens only) produce one quantized histogram over the
//! outcome axis per query. No positional encodings, so the context is a set.

use crate::autodiff::{softmax_t, Graph, NodeId, ParamStore};
use crate::error::{Error, Result};
use crate::prior::ObservationalTable;
use crate::rng;
use crate::stats;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

pub const RMS_EPS: f64 = 1e-6;
const SD_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    /// Number of histogram bins (L).
    pub n_bins: usize,
    /// Fixed feature length tokens are padded to (F).
    pub max_features: usize,
    /// Histogram support in standardized outcome units.
    pub base_support: (f64, f64),
    /// Softmax temperature on the histogram head.
    pub theta_t: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_layers: 4,
            d_model: 64,
            n_heads: 4,
            n_bins: 64,
            max_features: 24,
            base_support: (-10.0, 10.0),
            theta_t: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 {
            return Err(Error::arg("n_layers: must be positive"));
        }
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::arg("d_model: must be a positive multiple of n_heads"));
        }
        if self.n_bins < 2 {
            return Err(Error::arg("n_bins: need at least 2 bins"));
        }
        if self.max_features == 0 {
            return Err(Error::arg("max_features: must be positive"));
        }
        if self.base_support.0 >= self.base_support.1 {
            return Err(Error::arg("base_support: lo must be below hi"));
        }
        if !(self.theta_t > 0.0) {
            return Err(Error::arg("theta_t: must be positive"));
        }
        Ok(())
    }

    fn ff_hidden(&self) -> usize {
        2 * self.d_model
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextRow {
    pub t: u8,
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryRow {
    pub t: u8,
    pub x: Vec<f64>,
}

/// Context rows plus query rows, all sharing one covariate width.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenBatch {
    pub context: Vec<ContextRow>,
    pub queries: Vec<QueryRow>,
}

impl TokenBatch {
    pub fn from_table(table: &ObservationalTable, queries: Vec<QueryRow>) -> Result<Self> {
        let context = (0..table.n())
            .map(|i| ContextRow {
                t: table.t[i],
                x: table.x_row(i).to_vec(),
                y: table.y[i],
            })
            .collect();
        let batch = TokenBatch { context, queries };
        batch.validate()?;
        Ok(batch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.context.is_empty() {
            return Err(Error::arg("TokenBatch: empty context"));
        }
        let d = self.context[0].x.len();
        for row in &self.context {
            if row.x.len() != d || row.t > 1 || !row.y.is_finite() {
                return Err(Error::arg("TokenBatch: malformed context row"));
            }
        }
        for q in &self.queries {
            if q.x.len() != d || q.t > 1 {
                return Err(Error::arg("TokenBatch: malformed query row"));
            }
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.context[0].x.len()
    }

    pub fn context_outcomes(&self) -> Vec<f64> {
        self.context.iter().map(|r| r.y).collect()
    }
}

/// An L-bin histogram over a real support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedPpd {
    pub support: (f64, f64),
    pub edges: Vec<f64>,
    pub probs: Vec<f64>,
}

impl QuantizedPpd {
    pub fn validate(&self) -> Result<()> {
        let l = self.probs.len();
        if l < 1 || self.edges.len() != l + 1 {
            return Err(Error::arg("QuantizedPpd: edge/bin count mismatch"));
        }
        if self.edges[0] != self.support.0 || self.edges[l] != self.support.1 {
            return Err(Error::arg("QuantizedPpd: edges do not span the support"));
        }
        if self.edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::arg("QuantizedPpd: edges not strictly increasing"));
        }
        if self.probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::arg("QuantizedPpd: negative or non-finite prob"));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("QuantizedPpd: probs sum to {sum}")));
        }
        Ok(())
    }

    pub fn bin_center(&self, l: usize) -> f64 {
        0.5 * (self.edges[l] + self.edges[l + 1])
    }
}

/// Mean/sd of the context outcomes, sd floored so constant contexts stay
/// well defined. Values are sorted before summation so the statistics are
/// bitwise invariant to context order.
pub fn context_stats(y: &[f64]) -> (f64, f64) {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = stats::mean(&sorted);
    let mut sq: Vec<f64> = sorted.iter().map(|&v| (v - m) * (v - m)).collect();
    sq.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let s = stats::mean(&sq).sqrt().max(SD_FLOOR);
    (m, s)
}

/// Histogram support scaled to the context outcomes: [m + lo*s, m + hi*s]
/// with uniform bin edges.
pub fn bin_support(context_y: &[f64], config: &ModelConfig) -> (f64, f64, Vec<f64>) {
    let (m, s) = context_stats(context_y);
    let lo = m + config.base_support.0 * s;
    let hi = m + config.base_support.1 * s;
    let l = config.n_bins;
    let width = (hi - lo) / l as f64;
    let mut edges = Vec::with_capacity(l + 1);
    for j in 0..l {
        edges.push(lo + width * j as f64);
    }
    edges.push(hi);
    (lo, hi, edges)
}

/// Transformer parameters + configuration + inference temperature.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl ModelState {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, seed);
        Ok(ModelState { config, params })
    }
}

/// Scaled-Gaussian initialization (variance 1/fan_in) for projections, zero
/// biases, unit norm gains.
pub fn init_params(config: &ModelConfig, seed: u64) -> ParamStore {
    let mut rng = rng::stream(seed);
    let mut store = ParamStore::new();
    let d = config.d_model;
    let h = config.ff_hidden();
    let mut gauss = |shape: Vec<usize>, fan_in: usize| -> Tensor {
        let sd = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng::normal(&mut rng) * sd).collect()).unwrap()
    };
    store.insert("embed.treat", gauss(vec![2, d], d));
    store.insert("embed.x.w", gauss(vec![config.max_features, d], config.max_features));
    store.insert("embed.x.b", Tensor::zeros(vec![d]));
    store.insert("embed.y.w", gauss(vec![1, d], 1));
    store.insert("embed.y.b", Tensor::zeros(vec![1, d]));
    for layer in 0..config.n_layers {
        let p = |name: &str| format!("layer{layer}.{name}");
        store.insert(&p("norm.gain"), Tensor::new(vec![d], vec![1.0; d]).unwrap());
        store.insert(&p("attn.wq"), gauss(vec![d, d], d));
        store.insert(&p("attn.wk"), gauss(vec![d, d], d));
        store.insert(&p("attn.wv"), gauss(vec![d, d], d));
        store.insert(&p("attn.wo"), gauss(vec![d, d], d));
        store.insert(&p("ff.wa"), gauss(vec![d, h], d));
        store.insert(&p("ff.wb"), gauss(vec![d, h], d));
        store.insert(&p("ff.wc"), gauss(vec![h, d], h));
    }
    store.insert("head.norm.gain", Tensor::new(vec![d], vec![1.0; d]).unwrap());
    store.insert("head.out.w", gauss(vec![d, config.n_bins], d));
    store.insert("head.out.b", Tensor::zeros(vec![config.n_bins]));
    store
}

/// Embed all rows as tokens: treatment embedding + covariate embedding
/// (+ outcome embedding for context rows; outcomes enter standardized by the
/// context mean/sd, matching the output support scaling). Context tokens come
/// first, query tokens after.
pub fn embed_rows(
    graph: &mut Graph,
    store: &ParamStore,
    batch: &TokenBatch,
    config: &ModelConfig,
) -> Result<NodeId> {
    batch.validate()?;
    let d_true = batch.n_features();
    let f = config.max_features;
    if d_true > f {
        return Err(Error::arg(format!(
            "embed_rows: {d_true} features exceed the model maximum {f}"
        )));
    }
    let n_ctx = batch.context.len();
    let n_tok = n_ctx + batch.queries.len();
    let (m, s) = context_stats(&batch.context_outcomes());

    let mut x_pad = vec![0.0; n_tok * f];
    let mut t_idx = Vec::with_capacity(n_tok);
    let mut y_col = vec![0.0; n_tok];
    let mut ctx_indicator = vec![0.0; n_tok];
    for (i, row) in batch.context.iter().enumerate() {
        x_pad[i * f..i * f + d_true].copy_from_slice(&row.x);
        t_idx.push(row.t as usize);
        y_col[i] = (row.y - m) / s;
        ctx_indicator[i] = 1.0;
    }
    for (i, q) in batch.queries.iter().enumerate() {
        let base = (n_ctx + i) * f;
        x_pad[base..base + d_true].copy_from_slice(&q.x);
        t_idx.push(q.t as usize);
    }

    let x_mat = graph.constant(Tensor::new(vec![n_tok, f], x_pad)?)?;
    let y_mat = graph.constant(Tensor::new(vec![n_tok, 1], y_col)?)?;
    let c_mat = graph.constant(Tensor::new(vec![n_tok, 1], ctx_indicator)?)?;

    let treat = graph.param(store, "embed.treat")?;
    let emb_t = graph.gather_rows(treat, t_idx)?;

    let wx = graph.param(store, "embed.x.w")?;
    let bx = graph.param(store, "embed.x.b")?;
    let emb_x = graph.matmul(x_mat, wx)?;
    let emb_x = graph.add_row_broadcast(emb_x, bx)?;

    let wy = graph.param(store, "embed.y.w")?;
    let by = graph.param(store, "embed.y.b")?;
    let emb_y = graph.matmul(y_mat, wy)?;
    let emb_yb = graph.matmul(c_mat, by)?; // bias lands on context rows only

    let sum = graph.add(emb_t, emb_x)?;
    let sum = graph.add(sum, emb_y)?;
    graph.add(sum, emb_yb)
}

/// Full encoder stack; returns per-query logits (n_q x L) plus the histogram
/// support for this context.
pub fn build_logits(
    graph: &mut Graph,
    store: &ParamStore,
    batch: &TokenBatch,
    config: &ModelConfig,
) -> Result<(NodeId, f64, f64, Vec<f64>)> {
    config.validate()?;
    if batch.queries.is_empty() {
        return Err(Error::arg("forward: no queries"));
    }
    let n_ctx = batch.context.len();
    let n_tok = n_ctx + batch.queries.len();
    let d = config.d_model;
    let n_heads = config.n_heads;
    let hd = d / n_heads;
    let ctx_indices: Vec<usize> = (0..n_ctx).collect();

    let (lo, hi, edges) = bin_support(&batch.context_outcomes(), config);
    let mut hidden = embed_rows(graph, store, batch, config)?;

    for layer in 0..config.n_layers {
        let p = |name: &str| format!("layer{layer}.{name}");
        let gain = graph.param(store, &p("norm.gain"))?;
        let normed = graph.rms_norm_rows(hidden, RMS_EPS)?;
        let normed = graph.mul_row_broadcast(normed, gain)?;

        // attention: keys/values from context tokens only (asymmetric mask)
        let kv_src = graph.gather_rows(normed, ctx_indices.clone())?;
        let wq = graph.param(store, &p("attn.wq"))?;
        let wk = graph.param(store, &p("attn.wk"))?;
        let wv = graph.param(store, &p("attn.wv"))?;
        let wo = graph.param(store, &p("attn.wo"))?;
        let q_all = graph.matmul(normed, wq)?;
        let k_ctx = graph.matmul(kv_src, wk)?;
        let v_ctx = graph.matmul(kv_src, wv)?;
        let mut heads = Vec::with_capacity(n_heads);
        for head in 0..n_heads {
            let qs = graph.slice_cols(q_all, head * hd, hd)?;
            let ks = graph.slice_cols(k_ctx, head * hd, hd)?;
            let vs = graph.slice_cols(v_ctx, head * hd, hd)?;
            heads.push(graph.masked_attention(qs, ks, vs, None, RMS_EPS)?);
        }
        let attn = graph.concat_cols(&heads)?;
        let attn = graph.matmul(attn, wo)?;

        // gated-linear feed-forward, in parallel with attention
        let wa = graph.param(store, &p("ff.wa"))?;
        let wb = graph.param(store, &p("ff.wb"))?;
        let wc = graph.param(store, &p("ff.wc"))?;
        let a = graph.matmul(normed, wa)?;
        let b = graph.matmul(normed, wb)?;
        let gate = graph.sigmoid(b)?;
        let ff = graph.mul(a, gate)?;
        let ff = graph.matmul(ff, wc)?;

        let residual = graph.add(attn, ff)?;
        hidden = graph.add(hidden, residual)?;
    }

    let head_gain = graph.param(store, "head.norm.gain")?;
    let normed = graph.rms_norm_rows(hidden, RMS_EPS)?;
    let normed = graph.mul_row_broadcast(normed, head_gain)?;
    let query_tokens = graph.gather_rows(normed, (n_ctx..n_tok).collect())?;
    let w_out = graph.param(store, "head.out.w")?;
    let b_out = graph.param(store, "head.out.b")?;
    let logits = graph.matmul(query_tokens, w_out)?;
    let logits = graph.add_row_broadcast(logits, b_out)?;
    Ok((logits, lo, hi, edges))
}

/// Raw per-query logits plus support, for callers that re-temper the softmax.
pub fn forward_logits(
    state: &ModelState,
    batch: &TokenBatch,
) -> Result<(Vec<Vec<f64>>, f64, f64, Vec<f64>)> {
    let mut graph = Graph::new();
    let (logits, lo, hi, edges) = build_logits(&mut graph, &state.params, batch, &state.config)?;
    let t = graph.value(logits);
    let rows = (0..t.rows()).map(|i| t.row(i).to_vec()).collect();
    Ok((rows, lo, hi, edges))
}

pub fn ppd_from_logits(
    logits: &[f64],
    support: (f64, f64),
    edges: &[f64],
    theta_t: f64,
) -> Result<QuantizedPpd> {
    let probs = softmax_t(logits, theta_t)?;
    let ppd = QuantizedPpd {
        support,
        edges: edges.to_vec(),
        probs,
    };
    ppd.validate()?;
    Ok(ppd)
}

/// One quantized CEPO histogram per query.
pub fn forward(state: &ModelState, batch: &TokenBatch) -> Result<Vec<QuantizedPpd>> {
    let (rows, lo, hi, edges) = forward_logits(state, batch)?;
    rows.iter()
        .map(|row| ppd_from_logits(row, (lo, hi), &edges, state.config.theta_t))
        .collect()
}
