//! Named parameter storage with gradient accumulators and Adam state.

use std::collections::BTreeMap;

use super::tensor::Tensor;
use super::DiffError;

/// One parameter: value, gradient accumulator, Adam moments, step counter.
#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub value: Tensor,
    pub grad: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

/// Adam hyperparameters. Defaults follow the standard values; the learning
/// rate default matches the training configuration (0.001).
#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Map from parameter name to [`ParamEntry`]. The map is ordered, so every
/// iteration (gradient checks, Adam updates, checkpoint serialization) is
/// deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let shape = value.shape().to_vec();
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                grad: Tensor::zeros(shape.clone()),
                m: Tensor::zeros(shape.clone()),
                v: Tensor::zeros(shape),
                value,
                step: 0,
            },
        );
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.grad)
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.get(name)
    }

    pub fn entry_mut(&mut self, name: &str) -> Option<&mut ParamEntry> {
        self.entries.get_mut(name)
    }

    /// Parameter names in deterministic (sorted) order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar coordinates across all parameters.
    pub fn coord_count(&self) -> usize {
        self.entries.values().map(|e| e.value.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for e in self.entries.values_mut() {
            for g in e.grad.data_mut() {
                *g = 0.0;
            }
        }
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, g: &Tensor) -> Result<(), DiffError> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| DiffError::Contract(format!("unknown parameter '{name}'")))?;
        if e.grad.shape() != g.shape() {
            return Err(DiffError::Shape {
                op: "backward",
                detail: format!(
                    "gradient shape {:?} vs parameter shape {:?} for '{name}'",
                    g.shape(),
                    e.grad.shape()
                ),
            });
        }
        for (a, b) in e.grad.data_mut().iter_mut().zip(g.data()) {
            *a += b;
        }
        Ok(())
    }

    /// One Adam update with bias correction; gradients are cleared afterwards.
    pub fn adam_step(&mut self, cfg: &AdamConfig) {
        for e in self.entries.values_mut() {
            e.step += 1;
            let t = e.step as i32;
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            let n = e.value.numel();
            for i in 0..n {
                let g = e.grad.data()[i];
                let m = cfg.beta1 * e.m.data()[i] + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * e.v.data()[i] + (1.0 - cfg.beta2) * g * g;
                e.m.data_mut()[i] = m;
                e.v.data_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                e.value.data_mut()[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
            for g in e.grad.data_mut() {
                *g = 0.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_from_fresh_state_leaves_params_unchanged() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::row(vec![1.0, -2.0, 3.0]));
        s.adam_step(&AdamConfig::default());
        assert_eq!(s.value("w").unwrap().data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_adam_step_with_unit_gradient_moves_by_about_lr() {
        // m̂ = 1, v̂ = 1 at step 1, so the update is lr / (1 + ε) ≈ lr.
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(0.0));
        s.accumulate_grad("w", &Tensor::scalar(1.0)).unwrap();
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        s.adam_step(&cfg);
        let w = s.value("w").unwrap().scalar_value();
        assert!((w + 0.1).abs() < 1e-8, "w = {w}");
        // gradients cleared
        assert_eq!(s.grad("w").unwrap().scalar_value(), 0.0);
    }

    #[test]
    fn identical_steps_are_deterministic() {
        let mut a = ParamStore::new();
        a.insert("w", Tensor::row(vec![0.5, 0.25]));
        let mut b = a.clone();
        for s in [&mut a, &mut b] {
            s.accumulate_grad("w", &Tensor::row(vec![0.3, -0.7])).unwrap();
            s.adam_step(&AdamConfig::default());
            s.accumulate_grad("w", &Tensor::row(vec![0.3, -0.7])).unwrap();
            s.adam_step(&AdamConfig::default());
        }
        assert_eq!(a.value("w").unwrap(), b.value("w").unwrap());
    }

    #[test]
    fn grad_shape_mismatch_is_rejected() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::row(vec![1.0, 2.0]));
        assert!(s.accumulate_grad("w", &Tensor::scalar(1.0)).is_err());
    }
}
