use log::debug;
use serde::{Deserialize, Serialize};

use super::model::{backward, check_input, forward_trace, GraphOps, Mode, Model, ModelSpec, Prediction};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{log_softmax_at, softmax_into, Matrix};
use crate::optim::{Adam, AdamConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: AdamConfig,
    pub epochs: usize,
    /// Validation accuracy is checked every this many epochs.
    pub eval_interval: usize,
    /// Overrides the model spec's dropout rate when set.
    pub dropout_rate: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: AdamConfig {
                lr: 0.01,
                ..AdamConfig::default()
            },
            epochs: 500,
            eval_interval: 20,
            dropout_rate: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        let lr = self.optimizer.lr;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {lr} must be positive")));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.eval_interval == 0 {
            return Err(Error::Config("eval_interval must be at least 1".into()));
        }
        if let Some(p) = self.dropout_rate {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("dropout rate {p} not in [0, 1)")));
            }
        }
        Ok(())
    }
}

/// Fraction of `nodes` whose predicted label equals `labels[node]`.
fn split_accuracy(pred: &Prediction, labels: &[usize], nodes: &[usize]) -> f64 {
    let hits = nodes.iter().filter(|&&v| pred.labels[v] == labels[v]).count();
    hits as f64 / nodes.len() as f64
}

/// Full-batch training with cross-entropy on the train split. Returns the
/// snapshot with the best validation accuracy (earliest on ties).
pub fn train(spec: &ModelSpec, dataset: &Dataset, config: &TrainConfig) -> Result<Model> {
    config.check()?;
    let splits = &dataset.splits;
    if splits.train.is_empty() || splits.val.is_empty() {
        return Err(Error::Config("training needs non-empty train and val splits".into()));
    }
    let mut model = Model::init(spec, dataset.feature_dim(), dataset.num_classes, config.seed)?;
    check_input(&model, &dataset.features, dataset.num_nodes())?;

    let ops = GraphOps::new(&dataset.graph, spec.architecture);
    let dropout = config.dropout_rate.unwrap_or(spec.dropout_rate);
    let mut params = model.flat_params();
    let mut adam = Adam::new(config.optimizer, params.len());
    let n = dataset.num_nodes();
    let c = dataset.num_classes;
    let scale = 1.0 / splits.train.len() as f64;

    let mut best: Option<(f64, Vec<f64>)> = None;
    for epoch in 1..=config.epochs {
        let mode = Mode::Train {
            dropout,
            seed: config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64),
        };
        let trace = forward_trace(&model, &ops, &dataset.features, mode);
        let mut loss = 0.0;
        let mut dlogits = Matrix::zeros(n, c);
        let mut probs = vec![0.0; c];
        for &v in &splits.train {
            let y = dataset.labels[v];
            let z = trace.logits.row(v);
            loss -= log_softmax_at(z, y) * scale;
            softmax_into(z, &mut probs);
            let g = dlogits.row_mut(v);
            for (k, (gk, pk)) in g.iter_mut().zip(&probs).enumerate() {
                *gk = (pk - if k == y { 1.0 } else { 0.0 }) * scale;
            }
        }
        if !loss.is_finite() {
            return Err(Error::Numerical {
                epoch,
                lr: config.optimizer.lr,
                message: format!("training loss is {loss}"),
            });
        }
        let grads = backward(&model, &ops, &trace, dlogits, true, None)
            .params
            .expect("parameter gradients requested");
        adam.step(&mut params, &grads);
        model.set_flat_params(&params);

        if epoch % config.eval_interval == 0 || epoch == config.epochs {
            let logits = forward_trace(&model, &ops, &dataset.features, Mode::Eval).logits;
            let pred = Prediction::from_logits(&logits);
            let acc = split_accuracy(&pred, &dataset.labels, &splits.val);
            debug!("epoch {epoch}: loss {loss:.4} val acc {acc:.4}");
            if best.as_ref().is_none_or(|(b, _)| acc > *b) {
                best = Some((acc, params.clone()));
            }
        }
    }
    if let Some((_, p)) = best {
        model.set_flat_params(&p);
    }
    Ok(model)
}
