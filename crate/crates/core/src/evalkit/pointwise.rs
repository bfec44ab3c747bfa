//! Pointwise scoring baseline: a two-layer head over the shared route
//! representation, trained with binary cross-entropy (positive = ground
//! truth), ranking candidates by score.

use rand::seq::SliceRandom;

use crate::autodiff::{AdamConfig, DiffError, Graph, NodeId, ParamStore, Tensor};
use crate::features::{assemble, fit_zscore, register_feature_params, NormStats};
use crate::model::ModelConfig;
use crate::util::{seeded_rng, xavier};
use crate::world::Sample;

#[derive(Clone, Debug)]
pub struct PointwiseConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub model: ModelConfig,
}

impl Default for PointwiseConfig {
    fn default() -> Self {
        PointwiseConfig {
            epochs: 2,
            batch_size: 128,
            learning_rate: 0.001,
            seed: 1,
            model: ModelConfig::default(),
        }
    }
}

/// A trained pointwise scorer. Scoring each candidate is independent of the
/// others' order (list-order invariance is what makes this "pointwise").
pub struct PointwiseModel {
    pub store: ParamStore,
    pub stats: NormStats,
    pub cfg: ModelConfig,
}

impl PointwiseModel {
    /// Raw scores (logits), one per candidate.
    pub fn scores(&self, sample: &Sample) -> Result<Vec<f64>, DiffError> {
        let mut g = Graph::new();
        let rep = assemble(&mut g, &self.store, sample, &self.stats, &self.cfg)?;
        let s = score_head(&mut g, &self.store, rep.x_en)?;
        Ok(g.value(s).data().to_vec())
    }
}

fn score_head(g: &mut Graph, store: &ParamStore, x_en: NodeId) -> Result<NodeId, DiffError> {
    let w1 = g.param(store, "pw.w1")?;
    let b1 = g.param(store, "pw.b1")?;
    let w2 = g.param(store, "pw.w2")?;
    let b2 = g.param(store, "pw.b2")?;
    let h = g.matmul(x_en, w1)?;
    let h = g.broadcast_add(h, b1)?;
    let h = g.sigmoid(h);
    let s = g.matmul(h, w2)?;
    g.broadcast_add(s, b2)
}

fn bce_loss(g: &mut Graph, scores: NodeId, gt_index: usize) -> Result<NodeId, DiffError> {
    let n = g.value(scores).rows();
    let mut pos = vec![0.0; n];
    pos[gt_index] = 1.0;
    let neg: Vec<f64> = pos.iter().map(|&v| 1.0 - v).collect();
    let y = g.constant(Tensor::new(vec![n, 1], pos)?);
    let y_not = g.constant(Tensor::new(vec![n, 1], neg)?);

    let p = g.sigmoid(scores);
    let log_p = g.log(p)?;
    let neg_scores = g.scale(scores, -1.0)?;
    let q = g.sigmoid(neg_scores); // 1 − σ(s)
    let log_q = g.log(q)?;

    let pos_term = g.mul(y, log_p)?;
    let neg_term = g.mul(y_not, log_q)?;
    let total = g.add(pos_term, neg_term)?;
    let m = g.mean(total);
    g.scale(m, -1.0)
}

/// Train the scorer (feature pipeline plus head) on the training split.
pub fn train_pointwise(
    train: &[Sample],
    pcfg: &PointwiseConfig,
) -> Result<PointwiseModel, DiffError> {
    let stats = fit_zscore(train)?;
    let cfg = pcfg.model.clone();
    let mut store = ParamStore::new();
    let mut rng = seeded_rng(pcfg.seed, 0xF0);
    register_feature_params(&mut store, &cfg, &mut rng);
    let f = cfg.model_width;
    store.insert("pw.w1", xavier(&mut rng, f, f));
    store.insert("pw.b1", Tensor::zeros(vec![f]));
    store.insert("pw.w2", xavier(&mut rng, f, 1));
    store.insert("pw.b2", Tensor::zeros(vec![1]));

    let adam = AdamConfig {
        learning_rate: pcfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..pcfg.epochs {
        let mut shuffle_rng = seeded_rng(pcfg.seed, 0xE11 + epoch as u64);
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(pcfg.batch_size) {
            store.zero_grads();
            let scale = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let sample = &train[idx];
                let mut g = Graph::new();
                let rep = assemble(&mut g, &store, sample, &stats, &cfg)?;
                let scores = score_head(&mut g, &store, rep.x_en)?;
                let loss = bce_loss(&mut g, scores, sample.gt_index)?;
                g.backward_scaled(loss, &mut store, scale)?;
            }
            store.adam_step(&adam);
        }
    }
    Ok(PointwiseModel { store, stats, cfg })
}
