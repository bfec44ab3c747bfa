//! Finite-difference verification of analytic gradients.

use super::graph::{Graph, NodeId};
use super::store::ParamStore;
use super::DiffError;

/// Outcome of a gradient check over every coordinate of every parameter.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub coords: usize,
    pub loss: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err <= tolerance
    }
}

/// Compare the analytic gradient of a scalar-valued builder against central
/// differences with perturbation `h`.
///
/// `build` must construct the loss from the current store values and be
/// deterministic; it is invoked twice at the unperturbed point and the two
/// values must agree bitwise. The relative error per coordinate is
/// `|analytic − cd| / max(|analytic|, |cd|, 1e-8)`.
pub fn grad_check<F>(
    store: &mut ParamStore,
    h: f64,
    build: F,
) -> Result<GradCheckReport, DiffError>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<NodeId, DiffError>,
{
    if h <= 0.0 {
        return Err(DiffError::Contract(format!("perturbation h must be > 0, got {h}")));
    }
    let eval = |store: &ParamStore| -> Result<f64, DiffError> {
        let mut g = Graph::new();
        let loss = build(&mut g, store)?;
        if g.value(loss).numel() != 1 {
            return Err(DiffError::Contract(
                "gradient check target must be scalar".into(),
            ));
        }
        Ok(g.value(loss).scalar_value())
    };

    let first = eval(store)?;
    let second = eval(store)?;
    if first.to_bits() != second.to_bits() {
        return Err(DiffError::Determinism { first, second });
    }

    // Analytic gradients.
    store.zero_grads();
    {
        let mut g = Graph::new();
        let loss = build(&mut g, store)?;
        g.backward(loss, store)?;
    }
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let analytic: Vec<Vec<f64>> = names
        .iter()
        .map(|n| store.grad(n).unwrap().data().to_vec())
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        coords: 0,
        loss: first,
    };

    for (name, grads) in names.iter().zip(&analytic) {
        for i in 0..grads.len() {
            let original = store.value(name).unwrap().data()[i];

            store.value_mut(name).unwrap().data_mut()[i] = original + h;
            let plus = eval(store)?;
            store.value_mut(name).unwrap().data_mut()[i] = original - h;
            let minus = eval(store)?;
            store.value_mut(name).unwrap().data_mut()[i] = original;

            let cd = (plus - minus) / (2.0 * h);
            let a = grads[i];
            let rel = (a - cd).abs() / a.abs().max(cd.abs()).max(1e-8);
            report.coords += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
