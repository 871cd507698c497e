//! Central finite-difference validation of analytic gradients.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::VisitParams;
use crate::rng::RngStream;

fn adjust<M: VisitParams>(model: &mut M, param_index: usize, coord: usize, delta: f64) {
    let mut i = 0;
    model.visit_mut(&mut |_, p| {
        if i == param_index {
            let v = &mut p.value.data_mut()[coord];
            *v += delta;
        }
        i += 1;
    });
}

/// Compares the gradients currently stored in the model (filled in by a
/// backward pass) against central differences of `loss_fn`.
///
/// Returns the maximum over checked coordinates of
/// `|analytic - central| / max(1, |central|)`. `loss_fn` must be a
/// deterministic function of the parameters — evaluate the model in
/// inference mode or with a frozen dropout mask. When a parameter has more
/// coordinates than `max_coords_per_param`, a random subset is checked.
pub fn finite_diff_check<M, F>(
    model: &mut M,
    mut loss_fn: F,
    epsilon: f64,
    max_coords_per_param: Option<usize>,
    rng: &mut RngStream,
) -> Result<f64>
where
    M: VisitParams,
    F: FnMut(&M) -> Result<f64>,
{
    if epsilon <= 0.0 {
        return Err(Error::parameter("epsilon must be positive"));
    }
    let mut analytic: Vec<Matrix> = Vec::new();
    model.visit(&mut |_, p| analytic.push(p.grad.clone()));

    let mut worst = 0.0f64;
    for (param_index, grads) in analytic.iter().enumerate() {
        let len = grads.len();
        let coords: Vec<usize> = match max_coords_per_param {
            Some(cap) if len > cap => rng.distinct_indices(len, cap),
            _ => (0..len).collect(),
        };
        for coord in coords {
            adjust(model, param_index, coord, epsilon);
            let plus = loss_fn(&*model)?;
            adjust(model, param_index, coord, -2.0 * epsilon);
            let minus = loss_fn(&*model)?;
            adjust(model, param_index, coord, epsilon);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::numeric("non-finite loss during finite differences"));
            }
            let central = (plus - minus) / (2.0 * epsilon);
            let error = (grads.data()[coord] - central).abs() / central.abs().max(1.0);
            worst = worst.max(error);
        }
    }
    Ok(worst)
}
