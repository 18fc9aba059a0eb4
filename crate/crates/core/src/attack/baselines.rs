//! Baselines and ablations built on the same batch loop as TDGIA.
//!
//! AFGSM here is the injection adaptation: sequential batches with random
//! edges, not the original poisoning algorithm.

use serde::{Deserialize, Serialize};

use super::sequential::{reoptimize, run, EdgeRule, Plan};
use super::{AttackConfig, AttackOutcome, FeatureMap, LossMode};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::gnn::Model;
use crate::injection::{Budget, Injection};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgePolicy {
    Defective,
    Uniform,
    Random,
}

impl EdgePolicy {
    pub const ALL: [EdgePolicy; 3] = [EdgePolicy::Defective, EdgePolicy::Uniform, EdgePolicy::Random];

    pub fn name(self) -> &'static str {
        match self {
            EdgePolicy::Defective => "defective",
            EdgePolicy::Uniform => "uniform",
            EdgePolicy::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        EdgePolicy::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// All `b` nodes at once, each wired to `d` distinct random targets, then
/// one feature optimization with the configured loss (see
/// [`AttackConfig::baseline`]).
pub fn fgsm_attack(surrogate: &Model, dataset: &Dataset, budget: &Budget, config: &AttackConfig) -> Result<AttackOutcome> {
    run(
        surrogate,
        dataset,
        budget,
        config,
        Plan {
            method: "fgsm".into(),
            rule: EdgeRule::Random,
            reoptimize_all: true,
            one_shot: true,
            unbroken_loss: false,
        },
    )
}

/// Sequential batches. Each batch draws random targets among those the
/// surrogate still labels as on the clean graph and optimizes only the new
/// nodes, with earlier ones held fixed, against those same targets.
pub fn afgsm_attack(surrogate: &Model, dataset: &Dataset, budget: &Budget, config: &AttackConfig) -> Result<AttackOutcome> {
    run(
        surrogate,
        dataset,
        budget,
        config,
        Plan {
            method: "afgsm".into(),
            rule: EdgeRule::RandomUnbroken,
            reoptimize_all: false,
            one_shot: false,
            unbroken_loss: true,
        },
    )
}

/// TDGIA's batch loop with the edge choice swapped. Features always use
/// the smooth loss through smoothmap, whatever `config` says.
pub fn edge_policy_ablation(
    policy: EdgePolicy,
    surrogate: &Model,
    dataset: &Dataset,
    budget: &Budget,
    config: &AttackConfig,
) -> Result<AttackOutcome> {
    let config = AttackConfig {
        loss_mode: LossMode::Smooth,
        feature_map: FeatureMap::Smoothmap,
        ..config.clone()
    };
    let rule = match policy {
        EdgePolicy::Defective => EdgeRule::Defective,
        EdgePolicy::Uniform => EdgeRule::Uniform,
        EdgePolicy::Random => EdgeRule::Random,
    };
    run(
        surrogate,
        dataset,
        budget,
        &config,
        Plan {
            method: format!("ablation:{}", policy.name()),
            rule,
            reoptimize_all: true,
            one_shot: false,
            unbroken_loss: false,
        },
    )
}

/// Fresh features for a fixed topology: every injected row is
/// re-initialized and optimized jointly under `config`. Cross and internal
/// edges are returned unchanged.
pub fn reoptimize_features(
    surrogate: &Model,
    dataset: &Dataset,
    budget: &Budget,
    injection: &Injection,
    config: &AttackConfig,
) -> Result<Injection> {
    reoptimize(surrogate, dataset, budget, injection, config)
}
