//! Reward and label machinery: the stepwise corrective reward, the
//! stop-token reward, combined per-step loss weights, ground-truth labels,
//! and the noise-aware adaptation of the stop-reward weight.

use crate::world::WorldError;

/// Per-step rewards and label for one sample's trace.
#[derive(Clone, Debug, Default)]
pub struct RewardTrace {
    pub scr: Vec<f64>,
    pub eor: Vec<f64>,
    pub combined: Vec<f64>,
    pub label_index: Vec<usize>,
}

/// Stepwise corrective reward: the remaining coverage gap between the
/// current partial list and the ground-truth route. Non-negative by
/// construction of the ground truth (it attains the maximum coverage).
pub fn scr(gt_cr: f64, partial_list_cr: &[f64]) -> Result<f64, WorldError> {
    if !(0.0..=1.0).contains(&gt_cr) {
        return Err(WorldError::Contract(format!(
            "ground-truth coverage {gt_cr} outside [0, 1]"
        )));
    }
    let mut list_max: f64 = 0.0;
    for &c in partial_list_cr {
        if !(0.0..=1.0).contains(&c) {
            return Err(WorldError::Contract(format!(
                "list coverage {c} outside [0, 1]"
            )));
        }
        list_max = list_max.max(c);
    }
    Ok(gt_cr - list_max)
}

/// Reward for selecting the stop token: `alpha` exactly one step after the
/// ground truth entered the list, zero otherwise.
pub fn eor_reward(t: usize, t_hat: Option<usize>, alpha: f64) -> f64 {
    match t_hat {
        Some(th) if t == th + 1 => alpha,
        _ => 0.0,
    }
}

/// Supervised target for step `t`: the ground-truth index while it is still
/// missing from the list, then the stop token at `t̂+1`. Steps beyond
/// `t̂+1` carry no loss and must not be asked for a label.
pub fn build_label(
    t: usize,
    t_hat: Option<usize>,
    gt_index: usize,
    eor_index: usize,
) -> Result<usize, WorldError> {
    match t_hat {
        None => Ok(gt_index),
        Some(th) if t <= th => Ok(gt_index),
        Some(th) if t == th + 1 => Ok(eor_index),
        Some(th) => Err(WorldError::Contract(format!(
            "no label exists for step {t} > t̂+1 = {}",
            th + 1
        ))),
    }
}

/// Combined per-step loss weight.
pub fn combined_reward(scr: f64, eor: f64) -> f64 {
    scr + eor
}

/// State of the noise-aware stop-reward adaptation.
#[derive(Clone, Copy, Debug)]
pub struct AlphaState {
    pub alpha: f64,
    /// Step size of the adaptation.
    pub eta: f64,
    /// Target (assumed) noise ratio.
    pub beta: f64,
    /// Most recently observed failure rate.
    pub last_e: f64,
}

impl Default for AlphaState {
    fn default() -> Self {
        AlphaState {
            alpha: 0.1,
            eta: 1e-4,
            beta: 0.04,
            last_e: 0.0,
        }
    }
}

impl AlphaState {
    pub fn new(alpha: f64, eta: f64, beta: f64) -> Self {
        AlphaState {
            alpha,
            eta,
            beta,
            last_e: 0.0,
        }
    }

    /// Nudge `alpha` so the observed failure rate `e` approaches the target
    /// `beta`: up when stopping too rarely fails (`e < beta`), down (clamped
    /// at zero) when it fails too often, unchanged at equality.
    pub fn update(&mut self, e: f64) {
        self.last_e = e;
        if e < self.beta {
            self.alpha += self.eta;
        } else if e > self.beta {
            self.alpha = (self.alpha - self.eta).max(0.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scr_direct_evaluation() {
        assert!((scr(0.9, &[0.2, 0.6, 0.4]).unwrap() - 0.3).abs() < 1e-15);
        // ground truth already in the list → zero
        assert_eq!(scr(0.7, &[0.1, 0.7]).unwrap(), 0.0);
        // empty list → the full gap
        assert_eq!(scr(0.85, &[]).unwrap(), 0.85);
        assert!(scr(1.2, &[]).is_err());
        assert!(scr(0.5, &[1.5]).is_err());
    }

    #[test]
    fn scr_is_monotone_under_list_growth() {
        let gt = 0.9;
        let crs = [0.1, 0.4, 0.2, 0.8, 0.3];
        let mut prev = scr(gt, &[]).unwrap();
        for k in 1..=crs.len() {
            let cur = scr(gt, &crs[..k]).unwrap();
            assert!(cur <= prev + 1e-15);
            prev = cur;
        }
        // appending a route at the current max leaves the reward unchanged
        let base = scr(gt, &[0.4, 0.6]).unwrap();
        let same = scr(gt, &[0.4, 0.6, 0.6]).unwrap();
        assert_eq!(base, same);
    }

    #[test]
    fn eor_reward_fires_exactly_once() {
        assert_eq!(eor_reward(4, Some(3), 0.2), 0.2);
        assert_eq!(eor_reward(3, Some(3), 0.2), 0.0);
        assert_eq!(eor_reward(2, Some(3), 0.2), 0.0);
        assert_eq!(eor_reward(5, Some(3), 0.2), 0.0);
        assert_eq!(eor_reward(1, None, 0.2), 0.0);
        assert_eq!(eor_reward(4, Some(3), 0.0), 0.0);
    }

    #[test]
    fn labels_follow_the_two_branches_and_reject_beyond() {
        assert_eq!(build_label(1, Some(3), 7, 10).unwrap(), 7);
        assert_eq!(build_label(3, Some(3), 7, 10).unwrap(), 7);
        assert_eq!(build_label(4, Some(3), 7, 10).unwrap(), 10);
        assert!(build_label(5, Some(3), 7, 10).is_err());
        // ground truth not yet found → always the ground-truth index
        assert_eq!(build_label(9, None, 7, 10).unwrap(), 7);
    }

    #[test]
    fn combined_reward_is_the_sum() {
        assert_eq!(combined_reward(0.3, 0.0), 0.3);
        assert_eq!(combined_reward(0.0, 0.25), 0.25);
        assert_eq!(combined_reward(0.0, 0.0), 0.0);
    }

    #[test]
    fn alpha_update_branches() {
        let mut s = AlphaState::new(0.1, 1e-4, 0.04);
        s.update(0.02);
        assert!((s.alpha - 0.1001).abs() < 1e-12);
        s.update(0.9);
        assert!((s.alpha - 0.1).abs() < 1e-12);
        s.update(0.04);
        assert!((s.alpha - 0.1).abs() < 1e-12);

        let mut zero = AlphaState::new(0.0, 1e-4, 0.04);
        zero.update(0.5);
        assert_eq!(zero.alpha, 0.0);
    }

    #[test]
    fn alpha_moves_monotonically_until_the_branch_flips() {
        let mut s = AlphaState::new(0.05, 1e-3, 0.04);
        let mut prev = s.alpha;
        for _ in 0..20 {
            s.update(0.01); // e < beta throughout
            assert!((s.alpha - prev - 1e-3).abs() < 1e-12);
            prev = s.alpha;
        }
        let mut down = AlphaState::new(0.005, 1e-3, 0.04);
        for _ in 0..20 {
            down.update(0.99);
        }
        assert_eq!(down.alpha, 0.0); // clamped
    }
}
