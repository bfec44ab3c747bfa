//! Maximal marginal relevance: iterative selection balancing relevance
//! against similarity to the already-selected items.

/// Rank all candidates by repeatedly picking the item maximizing
/// `λ·rel(i) − (1−λ)·max_{j∈selected} sim(i, j)`. The first pick sees an
/// empty selected set (redundancy term zero); ties resolve to the lowest
/// index. Returns a permutation of `0..n`.
pub fn mmr_rank(relevance: &[f64], similarity: &[Vec<f64>], lambda: f64) -> Vec<usize> {
    let n = relevance.len();
    let mut selected: Vec<usize> = Vec::with_capacity(n);
    let mut remaining: Vec<usize> = (0..n).collect();
    // running max similarity to the selected set, updated incrementally
    let mut max_sim = vec![0.0f64; n];
    while !remaining.is_empty() {
        let mut best_pos = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (pos, &i) in remaining.iter().enumerate() {
            let score = lambda * relevance[i] - (1.0 - lambda) * max_sim[i];
            if score > best_score {
                best_score = score;
                best_pos = pos;
            }
        }
        let picked = remaining.remove(best_pos);
        selected.push(picked);
        for &i in &remaining {
            max_sim[i] = max_sim[i].max(similarity[picked][i]);
        }
    }
    selected
}
