//! Offline metrics, the global list objective, and comparison baselines.

mod dpp;
mod mmr;
mod pointwise;

pub use dpp::{dpp_greedy, DppError};
pub use mmr::mmr_rank;
pub use pointwise::{train_pointwise, PointwiseConfig, PointwiseModel};

use crate::autodiff::{DiffError, Graph, ParamStore};
use crate::features::{assemble, NormStats};
use crate::model::{encode, greedy_decode, DecodeState, ModelConfig};
use crate::util::seeded_rng;
use crate::world::{coverage_rate, Sample};

/// 1-based position of the ground truth in a generated list.
pub fn rank_of(list: &[usize], gt_index: usize) -> Option<usize> {
    list.iter().position(|&i| i == gt_index).map(|p| p + 1)
}

/// Mean reciprocal rank. Samples whose ground truth is absent from the
/// generated list contribute zero.
pub fn mrr(ranks: &[Option<usize>]) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    let sum: f64 = ranks
        .iter()
        .map(|r| r.map_or(0.0, |rank| 1.0 / rank as f64))
        .sum();
    sum / ranks.len() as f64
}

/// Whether the ground truth appears within the first `k` positions.
pub fn hr_at_k(list: &[usize], gt_index: usize, k: usize) -> bool {
    list.iter().take(k).any(|&i| i == gt_index)
}

/// Maximum coverage over the first `min(k, len)` items; zero for an empty
/// list.
pub fn lcr_at_k(list: &[usize], cr: &[f64], k: usize) -> f64 {
    list.iter().take(k).map(|&i| cr[i]).fold(0.0, f64::max)
}

/// Number of items ranked after the ground truth; zero when the ground
/// truth is absent (no rank exists for it).
pub fn redundant_count(list: &[usize], gt_index: usize) -> usize {
    match rank_of(list, gt_index) {
        Some(rank) => list.len() - rank,
        None => 0,
    }
}

/// Per-list objective: reciprocal-rank term plus list coverage minus the
/// redundancy penalty. The dataset-level objective is the mean.
pub fn objective_f(list: &[usize], cr: &[f64], gt_index: usize, alpha: f64) -> f64 {
    let mrr_term = rank_of(list, gt_index).map_or(0.0, |r| 1.0 / r as f64);
    let lcr_term = lcr_at_k(list, cr, list.len().max(1));
    mrr_term + lcr_term - alpha * redundant_count(list, gt_index) as f64
}

/// Aggregated offline metrics for one method.
#[derive(Clone, Debug)]
pub struct MetricsReport {
    pub method: String,
    pub ks: Vec<usize>,
    /// Hit rate per K, in [0, 1].
    pub hr: Vec<f64>,
    /// List coverage per K, in [0, 1].
    pub lcr: Vec<f64>,
    pub mrr: f64,
    pub mean_len: f64,
    pub mean_z: f64,
    pub mean_f: f64,
}

impl MetricsReport {
    pub fn csv_header(ks: &[usize]) -> String {
        let mut cols = vec!["method".to_string()];
        cols.extend(ks.iter().map(|k| format!("hr@{k}")));
        cols.extend(ks.iter().map(|k| format!("lcr@{k}")));
        cols.extend(["mrr", "mean_len", "mean_z", "mean_f"].map(String::from));
        cols.join(",")
    }

    /// One CSV row; hit rates and coverage are reported as percentages.
    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.method.clone()];
        cols.extend(self.hr.iter().map(|v| format!("{}", v * 100.0)));
        cols.extend(self.lcr.iter().map(|v| format!("{}", v * 100.0)));
        cols.push(format!("{}", self.mrr));
        cols.push(format!("{}", self.mean_len));
        cols.push(format!("{}", self.mean_z));
        cols.push(format!("{}", self.mean_f));
        cols.join(",")
    }
}

/// Compute every metric for per-sample candidate-index lists.
pub fn evaluate_lists(
    lists: &[Vec<usize>],
    samples: &[Sample],
    ks: &[usize],
    alpha: f64,
    method: &str,
) -> MetricsReport {
    let n = samples.len().max(1) as f64;
    let ranks: Vec<Option<usize>> = lists
        .iter()
        .zip(samples)
        .map(|(l, s)| rank_of(l, s.gt_index))
        .collect();
    let hr = ks
        .iter()
        .map(|&k| {
            lists
                .iter()
                .zip(samples)
                .filter(|(l, s)| hr_at_k(l, s.gt_index, k))
                .count() as f64
                / n
        })
        .collect();
    let lcr = ks
        .iter()
        .map(|&k| {
            lists
                .iter()
                .zip(samples)
                .map(|(l, s)| lcr_at_k(l, &s.cr, k))
                .sum::<f64>()
                / n
        })
        .collect();
    let mean_len = lists.iter().map(|l| l.len() as f64).sum::<f64>() / n;
    let mean_z = lists
        .iter()
        .zip(samples)
        .map(|(l, s)| redundant_count(l, s.gt_index) as f64)
        .sum::<f64>()
        / n;
    let mean_f = lists
        .iter()
        .zip(samples)
        .map(|(l, s)| objective_f(l, &s.cr, s.gt_index, alpha))
        .sum::<f64>()
        / n;
    MetricsReport {
        method: method.to_string(),
        ks: ks.to_vec(),
        hr,
        lcr,
        mrr: mrr(&ranks),
        mean_len,
        mean_z,
        mean_f,
    }
}

/// Greedy-decode every sample with the trained model; returns full decode
/// states (lists plus probability traces).
pub fn model_lists(
    store: &ParamStore,
    stats: &NormStats,
    cfg: &ModelConfig,
    samples: &[Sample],
) -> Result<Vec<DecodeState>, DiffError> {
    samples
        .iter()
        .map(|s| {
            let mut g = Graph::new();
            let rep = assemble(&mut g, store, s, stats, cfg)?;
            let enc = encode(&mut g, store, rep.x_en, rep.e_proc)?;
            greedy_decode(&mut g, store, &enc, rep.e_proc, cfg, s.gt_index)
        })
        .collect()
}

/// Which ranker to evaluate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Scasrec,
    Dnn,
    Mmr,
    Dpp,
    Oracle,
    Random,
}

impl Method {
    pub fn parse(s: &str) -> Option<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scasrec" => Some(Method::Scasrec),
            "dnn" => Some(Method::Dnn),
            "mmr" => Some(Method::Mmr),
            "dpp" => Some(Method::Dpp),
            "oracle" => Some(Method::Oracle),
            "random" => Some(Method::Random),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Scasrec => "scasrec",
            Method::Dnn => "dnn",
            Method::Mmr => "mmr",
            Method::Dpp => "dpp",
            Method::Oracle => "oracle",
            Method::Random => "random",
        }
    }
}

/// Evaluation harness configuration.
#[derive(Clone, Debug)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    pub alpha: f64,
    pub mmr_lambda: f64,
    pub seed: u64,
    /// Truncate baseline lists to the model's generated length per sample.
    pub truncate_to_model_len: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            ks: vec![1, 2, 3, 4, 5],
            alpha: 0.1,
            mmr_lambda: 0.5,
            seed: 1,
            truncate_to_model_len: false,
        }
    }
}

/// Inputs for [`evaluate`]: the trained generative model (optional when only
/// label-driven methods are requested) and a pointwise scorer shared by the
/// score-based baselines.
pub struct EvalContext<'a> {
    pub model: Option<(&'a ParamStore, &'a NormStats, &'a ModelConfig)>,
    pub pointwise: Option<&'a PointwiseModel>,
}

/// Evaluate each requested method on the split; one report per method.
pub fn evaluate(
    ctx: &EvalContext<'_>,
    methods: &[Method],
    samples: &[Sample],
    cfg: &EvalConfig,
) -> Result<Vec<MetricsReport>, DiffError> {
    let model_states = if methods.contains(&Method::Scasrec) || cfg.truncate_to_model_len {
        let (store, stats, mcfg) = ctx.model.ok_or_else(|| {
            DiffError::Contract("scasrec evaluation requested without a model".into())
        })?;
        Some(model_lists(store, stats, mcfg, samples)?)
    } else {
        None
    };

    let pointwise_scores = if methods
        .iter()
        .any(|m| matches!(m, Method::Dnn | Method::Mmr | Method::Dpp))
    {
        let pw = ctx.pointwise.ok_or_else(|| {
            DiffError::Contract("score-based baselines requested without a pointwise model".into())
        })?;
        Some(
            samples
                .iter()
                .map(|s| pw.scores(s))
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };

    let mut reports = Vec::new();
    for &method in methods {
        let lists: Vec<Vec<usize>> = match method {
            Method::Scasrec => model_states
                .as_ref()
                .unwrap()
                .iter()
                .map(|d| d.selected.clone())
                .collect(),
            Method::Dnn => pointwise_scores
                .as_ref()
                .unwrap()
                .iter()
                .map(|scores| sort_desc(scores))
                .collect(),
            Method::Mmr => pointwise_scores
                .as_ref()
                .unwrap()
                .iter()
                .zip(samples)
                .map(|(scores, s)| {
                    let rel: Vec<f64> = scores.iter().map(|&v| sigmoid(v)).collect();
                    let sim = similarity_matrix(s);
                    mmr_rank(&rel, &sim, cfg.mmr_lambda)
                })
                .collect(),
            Method::Dpp => {
                let mut out = Vec::with_capacity(samples.len());
                for (scores, s) in pointwise_scores.as_ref().unwrap().iter().zip(samples) {
                    let q: Vec<f64> = scores.iter().map(|&v| sigmoid(v)).collect();
                    let sim = similarity_matrix(s);
                    let list = dpp_greedy(&q, &sim, s.n_candidates)
                        .map_err(|e| DiffError::Contract(format!("dpp: {e}")))?;
                    out.push(list);
                }
                out
            }
            Method::Oracle => samples.iter().map(|s| sort_desc(&s.cr)).collect(),
            Method::Random => samples
                .iter()
                .map(|s| {
                    use rand::seq::SliceRandom;
                    let mut idx: Vec<usize> = (0..s.n_candidates).collect();
                    let mut rng = seeded_rng(cfg.seed, 0x7A2D ^ s.sample_id);
                    idx.shuffle(&mut rng);
                    idx
                })
                .collect(),
        };
        let lists = if cfg.truncate_to_model_len && method != Method::Scasrec {
            lists
                .into_iter()
                .zip(model_states.as_ref().unwrap())
                .map(|(mut l, d)| {
                    l.truncate(d.selected.len().max(1));
                    l
                })
                .collect()
        } else {
            lists
        };
        reports.push(evaluate_lists(
            &lists,
            samples,
            &cfg.ks,
            cfg.alpha,
            method.name(),
        ));
    }
    Ok(reports)
}

/// Pairwise route similarity: coverage rate between candidate edge sets.
pub fn similarity_matrix(sample: &Sample) -> Vec<Vec<f64>> {
    let n = sample.n_candidates;
    let mut sim = vec![vec![0.0; n]; n];
    for i in 0..n {
        sim[i][i] = 1.0;
        for j in i + 1..n {
            let s = coverage_rate(
                &sample.candidates[i].edge_ids,
                &sample.candidates[j].edge_ids,
            )
            .unwrap_or(0.0);
            sim[i][j] = s;
            sim[j][i] = s;
        }
    }
    sim
}

/// Indices sorted by score descending; ties keep the lower index first.
pub fn sort_desc(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
