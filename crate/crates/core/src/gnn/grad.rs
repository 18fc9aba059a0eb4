//! Exact gradients of an attack loss with respect to the optimization
//! variables behind the injected features.

use super::model::{backward, check_input, forward_trace, GraphOps, Mode, Model};
use crate::attack::functions::{FeatureMap, LossKind};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{log_softmax_at, softmax_into, Matrix};

/// Where the injected rows sit in the attacked graph and how raw variables
/// become their features.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InjectionLayout {
    pub n_original: usize,
    pub n_injected: usize,
    pub feature_map: FeatureMap,
    pub bounds: (f64, f64),
}

impl InjectionLayout {
    /// Features for raw variables, elementwise through the map.
    pub fn map_features(&self, raw: &Matrix) -> Matrix {
        let mut out = raw.clone();
        let (map, bounds) = (self.feature_map, self.bounds);
        out.map_inplace(|x| map.apply(x, bounds));
        out
    }

    fn injected_rows(&self) -> Vec<usize> {
        (self.n_original..self.n_original + self.n_injected).collect()
    }
}

/// Reusable loss/gradient evaluator over one fixed attacked topology.
pub struct AttackObjective<'a> {
    model: &'a Model,
    ops: GraphOps,
    features: Matrix,
    layout: InjectionLayout,
    rows: Vec<usize>,
    targets: Vec<usize>,
    labels: Vec<usize>,
    loss: LossKind,
}

impl<'a> AttackObjective<'a> {
    /// `labels[i]` is the label whose probability is attacked at `targets[i]`.
    pub fn new(
        model: &'a Model,
        attacked: &Dataset,
        layout: InjectionLayout,
        targets: &[usize],
        labels: &[usize],
        loss: LossKind,
    ) -> Result<Self> {
        check_input(model, &attacked.features, attacked.num_nodes())?;
        if targets.is_empty() {
            return Err(Error::Config("attack target set is empty".into()));
        }
        if targets.len() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} targets but {} labels",
                targets.len(),
                labels.len()
            )));
        }
        if layout.n_original + layout.n_injected != attacked.num_nodes() {
            return Err(Error::Dimension(format!(
                "layout covers {} nodes, graph has {}",
                layout.n_original + layout.n_injected,
                attacked.num_nodes()
            )));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= attacked.num_nodes()) {
            return Err(Error::Dimension(format!("target {t} out of range")));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= model.num_classes) {
            return Err(Error::Dimension(format!("label {y} out of range")));
        }
        Ok(AttackObjective {
            model,
            ops: GraphOps::new(&attacked.graph, model.spec.architecture),
            features: attacked.features.clone(),
            rows: layout.injected_rows(),
            layout,
            targets: targets.to_vec(),
            labels: labels.to_vec(),
            loss,
        })
    }

    pub fn layout(&self) -> &InjectionLayout {
        &self.layout
    }

    pub fn set_loss(&mut self, loss: LossKind) {
        self.loss = loss;
    }

    fn load_raw(&mut self, raw: &Matrix) -> Result<()> {
        if raw.shape() != (self.layout.n_injected, self.features.cols()) {
            return Err(Error::Dimension(format!(
                "raw variables are {:?}, expected {:?}",
                raw.shape(),
                (self.layout.n_injected, self.features.cols())
            )));
        }
        let (map, bounds) = (self.layout.feature_map, self.layout.bounds);
        for (i, &v) in self.rows.iter().enumerate() {
            for (f, &x) in self.features.row_mut(v).iter_mut().zip(raw.row(i)) {
                *f = map.apply(x, bounds);
            }
        }
        Ok(())
    }

    /// Mean loss over targets at `raw`.
    pub fn loss(&mut self, raw: &Matrix) -> Result<f64> {
        self.load_raw(raw)?;
        let logits = forward_trace(self.model, &self.ops, &self.features, Mode::Eval).logits;
        let mut total = 0.0;
        for (&v, &y) in self.targets.iter().zip(&self.labels) {
            total += self.loss.value_and_slope(log_softmax_at(logits.row(v), y)).0;
        }
        Ok(total / self.targets.len() as f64)
    }

    /// Probability of each target's attacked label at `raw`.
    pub fn probabilities(&mut self, raw: &Matrix) -> Result<Vec<f64>> {
        self.load_raw(raw)?;
        let logits = forward_trace(self.model, &self.ops, &self.features, Mode::Eval).logits;
        Ok(self
            .targets
            .iter()
            .zip(&self.labels)
            .map(|(&v, &y)| log_softmax_at(logits.row(v), y).exp())
            .collect())
    }

    /// Mean loss and its gradient w.r.t. `raw`.
    pub fn loss_and_grad(&mut self, raw: &Matrix) -> Result<(f64, Matrix)> {
        self.load_raw(raw)?;
        let trace = forward_trace(self.model, &self.ops, &self.features, Mode::Eval);
        let (n, c) = trace.logits.shape();
        let scale = 1.0 / self.targets.len() as f64;
        let mut dlogits = Matrix::zeros(n, c);
        let mut probs = vec![0.0; c];
        let mut total = 0.0;
        for (&v, &y) in self.targets.iter().zip(&self.labels) {
            let z = trace.logits.row(v);
            let (value, slope) = self.loss.value_and_slope(log_softmax_at(z, y));
            total += value;
            if slope == 0.0 {
                continue;
            }
            // d ln p_y / d z_k = [k == y] - p_k
            softmax_into(z, &mut probs);
            for (k, (g, p)) in dlogits.row_mut(v).iter_mut().zip(&probs).enumerate() {
                let indicator = if k == y { 1.0 } else { 0.0 };
                *g += slope * scale * (indicator - p);
            }
        }
        let loss = total * scale;

        let mut grad = if self.rows.is_empty() {
            Matrix::zeros(0, self.features.cols())
        } else {
            backward(self.model, &self.ops, &trace, dlogits, false, Some(&self.rows))
                .input_rows
                .expect("input gradient requested")
        };
        let (map, bounds) = (self.layout.feature_map, self.layout.bounds);
        for (g, &x) in grad.as_mut_slice().iter_mut().zip(raw.as_slice()) {
            *g *= map.derivative(x, bounds);
        }
        if !loss.is_finite() || !grad.is_finite() {
            return Err(Error::Numerical {
                epoch: 0,
                lr: 0.0,
                message: format!("non-finite attack loss {loss} or gradient"),
            });
        }
        Ok((loss, grad))
    }
}

/// One-shot form of [`AttackObjective::loss_and_grad`].
pub fn grad_injected_features(
    model: &Model,
    attacked: &Dataset,
    layout: InjectionLayout,
    targets: &[usize],
    labels: &[usize],
    loss: LossKind,
    raw: &Matrix,
) -> Result<(f64, Matrix)> {
    AttackObjective::new(model, attacked, layout, targets, labels, loss)?.loss_and_grad(raw)
}
