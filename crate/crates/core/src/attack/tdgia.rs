//! Topological defective graph injection.

use super::functions::{defective_factor, defective_score};
use super::sequential::{run, EdgeRule, Plan};
use super::{AttackConfig, AttackOutcome};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gnn::{predict_labels, Model};
use crate::injection::Budget;

/// Per-target quantities behind the edge choice, aligned with the target
/// list they were computed for.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeScores {
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
}

/// Probability the model assigns to `labels[i]` at `targets[i]` on
/// `current`.
pub fn correct_probability(
    model: &Model,
    current: &Dataset,
    labels: &[usize],
    targets: &[usize],
) -> Result<Vec<f64>> {
    if labels.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} targets",
            labels.len(),
            targets.len()
        )));
    }
    let pred = predict_labels(model, current)?;
    targets
        .iter()
        .zip(labels)
        .map(|(&v, &y)| {
            if v >= current.num_nodes() || y >= model.num_classes {
                return Err(Error::Dimension(format!("target {v} with label {y} out of range")));
            }
            Ok(pred.probabilities.get(v, y))
        })
        .collect()
}

/// `p`, `lambda` and `mu` for `targets` on the current graph. Degrees are
/// read from `current`, so earlier injections lower a target's factor.
pub fn node_scores(
    model: &Model,
    current: &Dataset,
    labels: &[usize],
    targets: &[usize],
    degree_budget: usize,
    config: &AttackConfig,
) -> Result<NodeScores> {
    let p = correct_probability(model, current, labels, targets)?;
    Ok(scores_from_p(p, current, targets, degree_budget, config))
}

pub(crate) fn scores_from_p(
    p: Vec<f64>,
    current: &Dataset,
    targets: &[usize],
    degree_budget: usize,
    config: &AttackConfig,
) -> NodeScores {
    let degrees: Vec<usize> = targets.iter().map(|&v| current.graph.degree(v)).collect();
    let lambda = defective_factor(&degrees, degree_budget, config.k1, config.k2);
    let mu = defective_score(&p, &lambda, config.alpha);
    NodeScores { p, lambda, mu }
}

/// Injects the budget in batches. Each batch rescores the targets on the
/// current graph, wires the new nodes to the most defective targets and
/// re-optimizes the features of every injected node so far.
pub fn tdgia_attack(surrogate: &Model, dataset: &Dataset, budget: &Budget, config: &AttackConfig) -> Result<AttackOutcome> {
    run(
        surrogate,
        dataset,
        budget,
        config,
        Plan {
            method: "tdgia".into(),
            rule: EdgeRule::Defective,
            reoptimize_all: true,
            one_shot: false,
            unbroken_loss: false,
        },
    )
}
