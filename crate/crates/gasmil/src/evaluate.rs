//! Parallel split evaluation. Forward passes fan out over the rayon pool
//! (capped by `GASMIL_THREADS`); predictions are collected in bag order, so
//! the result is identical to the sequential evaluator bit for bit.

use gasmil_core::loss::{loss_and_grad, predict_label};
use gasmil_core::metrics::{self, MetricsReport};
use gasmil_core::train::Network;
use gasmil_core::{FeatureBag, LossKind, RngStream};
use rayon::prelude::*;

use crate::error::Result;

pub fn evaluate_parallel(
    network: &Network,
    bags: &[FeatureBag],
    loss_kind: LossKind,
) -> Result<(MetricsReport, f64)> {
    if bags.is_empty() {
        return Err(gasmil_core::Error::parameter("evaluation over an empty split").into());
    }
    let num_classes = network.num_classes();
    let per_bag: Vec<(usize, usize, f64, f64)> = bags
        .par_iter()
        .map(|bag| -> Result<(usize, usize, f64, f64)> {
            let mut inert = RngStream::new(0);
            let (scores, _) = network.forward(&bag.features, false, &mut inert)?;
            let (loss, _) = loss_and_grad(&scores, bag.label, loss_kind, num_classes)?;
            let binary_score = match loss_kind {
                LossKind::CrossEntropy if scores.len() >= 2 => scores[1] - scores[0],
                _ => scores[0],
            };
            let pred = predict_label(&scores, loss_kind).min(num_classes - 1);
            Ok((bag.label, pred, binary_score, loss))
        })
        .collect::<Result<_>>()?;
    let y_true: Vec<usize> = per_bag.iter().map(|r| r.0).collect();
    let y_pred: Vec<usize> = per_bag.iter().map(|r| r.1).collect();
    let binary_scores: Vec<f64> = per_bag.iter().map(|r| r.2).collect();
    let loss_sum: f64 = per_bag.iter().map(|r| r.3).sum();
    let scores_opt = (num_classes == 2).then_some(binary_scores.as_slice());
    let report = metrics::report(&y_true, &y_pred, num_classes, scores_opt)?;
    Ok((report, loss_sum / bags.len() as f64))
}
