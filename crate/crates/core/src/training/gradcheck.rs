use std::cell::Cell;

use crate::autodiff::ParamId;
use crate::model::{Model, ModelError};
use crate::numerics::{finite_diff_grad, Mat};

use super::{batch_gradients, batch_loss, Example};

/// Analytic vs central-difference gradient agreement for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub numel: usize,
    /// `‖analytic − numeric‖∞ / max(‖numeric‖∞, floor)`.
    pub rel_error: f64,
}

/// Compares `batch_gradients` against central differences of `batch_loss`
/// for every parameter tensor. Tensors whose gradient is below `floor` are
/// compared in absolute terms.
pub fn gradient_check(model: &Model, batch: &[Example], eps: f64, floor: f64) -> Result<Vec<TensorCheck>, ModelError> {
    let (_, analytic) = batch_gradients(model, batch)?;
    let ids: Vec<ParamId> = model.params().ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let original = model.params().get(id);
        let (rows, cols) = original.shape();
        let failure = Cell::new(None);
        let numeric = finite_diff_grad(
            |x| {
                let mut m = model.clone();
                *m.params_mut().get_mut(id) = Mat::from_vec(rows, cols, x.to_vec()).expect("shape preserved");
                batch_loss(&m, batch).unwrap_or_else(|e| {
                    failure.set(Some(e));
                    f64::NAN
                })
            },
            original.as_slice(),
            eps,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let a = analytic[id.index()].as_slice();
        let scale = numeric.iter().fold(floor, |m, v| m.max(v.abs()));
        let diff = a.iter().zip(&numeric).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        out.push(TensorCheck { name: model.params().name(id).to_string(), numel: a.len(), rel_error: diff / scale });
    }
    Ok(out)
}
