use log::trace;

use super::AttackConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gnn::{AttackObjective, InjectionLayout, Model};
use crate::matrix::Matrix;
use crate::optim::Adam;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeResult {
    /// Raw variables at the best loss seen.
    pub raw: Matrix,
    /// `feature_map(raw)`, always inside the layout bounds.
    pub features: Matrix,
    pub loss_before: f64,
    pub loss_after: f64,
}

/// Minimizes the configured attack loss over the raw variables of the
/// injected rows in `layout` with Adam. Every step feeds `feature_map(raw)`
/// to the model. The best iterate is returned, so `loss_after` never
/// exceeds `loss_before`.
pub fn optimize_features(
    model: &Model,
    attacked: &Dataset,
    layout: InjectionLayout,
    targets: &[usize],
    labels: &[usize],
    config: &AttackConfig,
    init: Matrix,
) -> Result<OptimizeResult> {
    let mut objective = AttackObjective::new(model, attacked, layout, targets, labels, config.loss())?;
    let mut raw = init;
    let mut adam = Adam::new(config.adam(), raw.as_slice().len());

    let mut loss_before = None;
    let mut best: Option<(f64, Matrix)> = None;
    for epoch in 0..config.opt_epochs {
        let (loss, grad) = objective.loss_and_grad(&raw).map_err(|e| at_epoch(e, epoch, config))?;
        loss_before.get_or_insert(loss);
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, raw.clone()));
        }
        trace!("feature epoch {epoch}: loss {loss:.6}");
        adam.step(raw.as_mut_slice(), grad.as_slice());
    }
    let last = objective.loss(&raw)?;
    if !last.is_finite() {
        return Err(Error::Numerical {
            epoch: config.opt_epochs,
            lr: config.opt_lr,
            message: format!("attack loss {last} after the last step"),
        });
    }
    let loss_before = loss_before.unwrap_or(last);
    let (loss_after, raw) = match best {
        Some((b, r)) if b <= last => (b, r),
        _ => (last, raw),
    };
    Ok(OptimizeResult {
        features: layout.map_features(&raw),
        raw,
        loss_before,
        loss_after,
    })
}

fn at_epoch(err: Error, epoch: usize, config: &AttackConfig) -> Error {
    match err {
        Error::Numerical { message, .. } => Error::Numerical {
            epoch,
            lr: config.opt_lr,
            message,
        },
        other => other,
    }
}
