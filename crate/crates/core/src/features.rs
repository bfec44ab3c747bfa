//! Feature processing: z-score normalization of continuous route features,
//! embeddings for discrete scene attributes, target-aware attention over the
//! user's history, and assembly of per-route representations.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{DiffError, Graph, NodeId, ParamStore, Tensor};
use crate::model::ModelConfig;
use crate::util::xavier;
use crate::world::Sample;

/// Per-dimension mean and standard deviation of the route features, fitted
/// on the training split and frozen afterwards.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-6;

impl NormStats {
    /// Checkpoint representation: two named tensors.
    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        vec![
            ("norm.mean".to_string(), Tensor::vector(self.mean.clone())),
            ("norm.std".to_string(), Tensor::vector(self.std.clone())),
        ]
    }

    pub fn from_tensors(entries: &[(String, Tensor)]) -> Option<NormStats> {
        let mean = entries.iter().find(|(n, _)| n == "norm.mean")?;
        let std = entries.iter().find(|(n, _)| n == "norm.std")?;
        Some(NormStats {
            mean: mean.1.data().to_vec(),
            std: std.1.data().to_vec(),
        })
    }

    pub fn apply(&self, features: &[f64]) -> Vec<f64> {
        features
            .iter()
            .enumerate()
            .map(|(d, &f)| (f - self.mean[d]) / self.std[d])
            .collect()
    }

    /// Normalize the first `k` dimensions only; the rest pass through
    /// (history records carry pre-scaled scene values in their tail).
    pub fn apply_prefix(&self, features: &[f64], k: usize) -> Vec<f64> {
        features
            .iter()
            .enumerate()
            .map(|(d, &f)| {
                if d < k {
                    (f - self.mean[d]) / self.std[d]
                } else {
                    f
                }
            })
            .collect()
    }
}

/// Fit per-dimension stats over every candidate-route feature vector in the
/// training split. Constant columns get the floored std, not an error.
pub fn fit_zscore(samples: &[Sample]) -> Result<NormStats, DiffError> {
    if samples.len() < 2 {
        return Err(DiffError::Contract(format!(
            "z-score fit needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let width = samples[0].candidates[0].features.len();
    let mut mean = vec![0.0; width];
    let mut count = 0usize;
    for s in samples {
        for c in &s.candidates {
            for (m, &f) in mean.iter_mut().zip(&c.features) {
                *m += f;
            }
            count += 1;
        }
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    let mut var = vec![0.0; width];
    for s in samples {
        for c in &s.candidates {
            for (v, (&f, &m)) in var.iter_mut().zip(c.features.iter().zip(&mean)) {
                *v += (f - m) * (f - m);
            }
        }
    }
    let std = var
        .into_iter()
        .map(|v| (v / count as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(NormStats { mean, std })
}

/// Assembled inputs for one sample: route representations and the processed
/// scene vector.
#[derive(Clone, Copy, Debug)]
pub struct Representation {
    /// `N×F` route representations.
    pub x_en: NodeId,
    /// `1×F` processed scene vector.
    pub e_proc: NodeId,
}

pub fn register_feature_params(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) {
    let f = cfg.model_width;
    let h = cfg.hidden;
    let half = f / 2;
    let rw = cfg.route_feature_width;
    store.insert("feat.route_proj", xavier(rng, rw, half));
    store.insert("feat.hist_proj", xavier(rng, cfg.history_width, h));
    store.insert("feat.target_proj", xavier(rng, rw + f, h));
    store.insert("feat.att_w1", xavier(rng, 4 * h, h));
    store.insert("feat.att_b1", Tensor::zeros(vec![h]));
    store.insert("feat.att_w2", xavier(rng, h, 1));
    store.insert("feat.att_b2", Tensor::zeros(vec![1]));
    store.insert("feat.hist_out", xavier(rng, h, half));
    store.insert(
        "feat.scene_embed",
        xavier(rng, cfg.scene_buckets + 1, cfg.embed_dim),
    );
    store.insert(
        "feat.scene_proj",
        xavier(rng, cfg.embed_dim + cfg.scene_width - 1, f),
    );
    store.insert("feat.scene_bias", Tensor::zeros(vec![f]));
}

/// Look up a learnable embedding row. Row 0 is reserved for out-of-range
/// ("unknown") ids; known id `k` lives at row `k + 1`. Gradient flows only
/// to the selected row.
pub fn embed_discrete(
    g: &mut Graph,
    store: &ParamStore,
    table: &str,
    id: usize,
    cardinality: usize,
) -> Result<NodeId, DiffError> {
    let t = g.param(store, table)?;
    let row = if id < cardinality { id + 1 } else { 0 };
    g.gather_rows(t, &[row])
}

/// Scene vector: embed the request-time bucket, pass the continuous tail
/// through, project and squash to the model width.
pub fn process_scene(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    scene: &[f64],
) -> Result<NodeId, DiffError> {
    if scene.len() != cfg.scene_width {
        return Err(DiffError::Contract(format!(
            "scene width {} does not match configured {}",
            scene.len(),
            cfg.scene_width
        )));
    }
    let bucket = scene[0].max(0.0) as usize;
    let emb = embed_discrete(g, store, "feat.scene_embed", bucket, cfg.scene_buckets)?;
    let cont = g.constant(Tensor::row(scene[1..].to_vec()));
    let joined = g.concat(1, &[emb, cont])?;
    let proj = g.param(store, "feat.scene_proj")?;
    let bias = g.param(store, "feat.scene_bias")?;
    let lin = g.matmul(joined, proj)?;
    let lin = g.broadcast_add(lin, bias)?;
    Ok(g.sigmoid(lin))
}

/// Target-aware attention over projected history records for `R` targets at
/// once. `targets` is `R×h` (already projected), `h_proj` is `M×h`. Scores
/// come from an MLP over `[t; h; t−h; t⊙h]`; gates are sigmoid by default
/// (unnormalized) or per-target softmax when configured. Output is `R×h`.
fn history_block(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    targets: NodeId,
    h_proj: NodeId,
) -> Result<NodeId, DiffError> {
    let r = g.value(targets).rows();
    let m = g.value(h_proj).rows();

    let t_idx: Vec<usize> = (0..r).flat_map(|i| std::iter::repeat(i).take(m)).collect();
    let h_idx: Vec<usize> = (0..r).flat_map(|_| 0..m).collect();
    let t_rep = g.gather_rows(targets, &t_idx)?;
    let h_rep = g.gather_rows(h_proj, &h_idx)?;
    let neg_h = g.scale(h_rep, -1.0)?;
    let diff = g.add(t_rep, neg_h)?;
    let prod = g.mul(t_rep, h_rep)?;
    let joined = g.concat(1, &[t_rep, h_rep, diff, prod])?;

    let w1 = g.param(store, "feat.att_w1")?;
    let b1 = g.param(store, "feat.att_b1")?;
    let w2 = g.param(store, "feat.att_w2")?;
    let b2 = g.param(store, "feat.att_b2")?;
    let hid = g.matmul(joined, w1)?;
    let hid = g.broadcast_add(hid, b1)?;
    let hid = g.sigmoid(hid);
    let scores = g.matmul(hid, w2)?;
    let scores = g.broadcast_add(scores, b2)?; // (R·M)×1

    let mut rows = Vec::with_capacity(r);
    for i in 0..r {
        let block: Vec<usize> = (i * m..(i + 1) * m).collect();
        let s_i = g.gather_rows(scores, &block)?;
        let gate = if cfg.softmax_history {
            let row = g.transpose(s_i)?;
            let sm = g.softmax_last(row);
            g.transpose(sm)?
        } else {
            g.sigmoid(s_i)
        };
        let gate_row = g.transpose(gate)?;
        rows.push(g.matmul(gate_row, h_proj)?);
    }
    g.concat(0, &rows)
}

/// Attention over the history for a single target route: the target is the
/// projection of `[x^F; E]`, records are projected history rows, and the
/// output is the gate-weighted sum of projected records. An empty history
/// yields the zero vector. Both the target features and the history records
/// are expected pre-normalized.
pub fn history_attention(
    g: &mut Graph,
    store: &ParamStore,
    cfg: &ModelConfig,
    target_features_norm: &[f64],
    e_proc: NodeId,
    history: &[Vec<f64>],
) -> Result<NodeId, DiffError> {
    if history.is_empty() {
        return Ok(g.constant(Tensor::zeros(vec![1, cfg.hidden])));
    }
    let x = g.constant(Tensor::row(target_features_norm.to_vec()));
    let t_in = g.concat(1, &[x, e_proc])?;
    let t_proj = g.param(store, "feat.target_proj")?;
    let target = g.matmul(t_in, t_proj)?;
    let h = g.constant(Tensor::from_rows(history)?);
    let hp = g.param(store, "feat.hist_proj")?;
    let h_proj = g.matmul(h, hp)?;
    history_block(g, store, cfg, target, h_proj)
}

/// Build the encoder inputs for one sample: normalized route features
/// projected to half the model width, concatenated with the history
/// representation projected to the other half, plus the processed scene.
pub fn assemble(
    g: &mut Graph,
    store: &ParamStore,
    sample: &Sample,
    stats: &NormStats,
    cfg: &ModelConfig,
) -> Result<Representation, DiffError> {
    let width = sample.candidates[0].features.len();
    if width != cfg.route_feature_width || stats.mean.len() != width {
        return Err(DiffError::Contract(format!(
            "route feature width mismatch: data {width}, config {}, stats {}",
            cfg.route_feature_width,
            stats.mean.len()
        )));
    }
    let n = sample.candidates.len();
    let e_proc = process_scene(g, store, cfg, &sample.scene)?;

    let norm_rows: Vec<Vec<f64>> = sample
        .candidates
        .iter()
        .map(|c| stats.apply(&c.features))
        .collect();
    let x_norm = g.constant(Tensor::from_rows(&norm_rows)?);
    let route_proj = g.param(store, "feat.route_proj")?;
    let x_route = g.matmul(x_norm, route_proj)?;

    let x_hist_half = if sample.history.is_empty() {
        g.constant(Tensor::zeros(vec![n, cfg.model_width / 2]))
    } else {
        let ones = g.constant(Tensor::filled(vec![n, 1], 1.0));
        let e_tiled = g.matmul(ones, e_proc)?;
        let t_in = g.concat(1, &[x_norm, e_tiled])?;
        let t_proj = g.param(store, "feat.target_proj")?;
        let targets = g.matmul(t_in, t_proj)?;

        let hist_rows: Vec<Vec<f64>> = sample
            .history
            .iter()
            .map(|rec| stats.apply_prefix(rec, 21))
            .collect();
        let h = g.constant(Tensor::from_rows(&hist_rows)?);
        let hp = g.param(store, "feat.hist_proj")?;
        let h_proj = g.matmul(h, hp)?;
        let x_h = history_block(g, store, cfg, targets, h_proj)?;
        let out = g.param(store, "feat.hist_out")?;
        g.matmul(x_h, out)?
    };

    let x_en = g.concat(1, &[x_route, x_hist_half])?;
    Ok(Representation { x_en, e_proc })
}
