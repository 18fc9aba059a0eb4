//! Graph injection attacks: TDGIA and the baselines that share its
//! plumbing.

pub mod baselines;
pub mod functions;
mod optimize;
mod select;
mod sequential;
pub mod tdgia;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use baselines::{afgsm_attack, edge_policy_ablation, fgsm_attack, reoptimize_features, EdgePolicy};
pub use functions::{
    clamp, defective_factor, defective_score, inverse_kl_loss, smooth_loss, smoothmap, FeatureMap, LossKind,
};
pub use optimize::{optimize_features, OptimizeResult};
pub use select::{select_defective_edges, select_random_edges, select_uniform_edges};
pub use tdgia::{correct_probability, node_scores, tdgia_attack, NodeScores};

use crate::dataset::write_file;
use crate::error::{Error, Result};
use crate::injection::{Budget, Injection};
use crate::optim::AdamConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    #[default]
    Smooth,
    InverseKl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    /// Weight of the `1 / sqrt(deg * d)` term of the defective factor.
    pub k1: f64,
    /// Weight of the `1 / deg` term.
    pub k2: f64,
    /// Mix between correct probability and topology in the defective score.
    pub alpha: f64,
    /// Smooth-loss boundary: targets with `p <= e^-r` contribute nothing.
    pub r: f64,
    /// Each batch injects this fraction of the node budget.
    pub batch_fraction: f64,
    pub opt_lr: f64,
    pub opt_epochs: usize,
    pub feature_map: FeatureMap,
    pub loss_mode: LossMode,
    /// Standard deviation of the raw-variable initialization.
    pub init_sigma: f64,
    pub seed: u64,
    /// Edges per injected node actually used; defaults to the budget degree.
    pub effective_degree_cap: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            k1: 0.9,
            k2: 0.1,
            alpha: 0.33,
            r: 4.0,
            batch_fraction: 0.2,
            opt_lr: 1.0,
            opt_epochs: 2000,
            feature_map: FeatureMap::Smoothmap,
            loss_mode: LossMode::Smooth,
            init_sigma: 1.0,
            seed: 0,
            effective_degree_cap: None,
        }
    }
}

impl AttackConfig {
    /// Baseline settings: log loss on clamped features.
    pub fn baseline() -> Self {
        AttackConfig {
            feature_map: FeatureMap::Clamp,
            loss_mode: LossMode::InverseKl,
            ..AttackConfig::default()
        }
    }

    pub fn loss(&self) -> LossKind {
        match self.loss_mode {
            LossMode::Smooth => LossKind::Smooth { r: self.r },
            LossMode::InverseKl => LossKind::InverseKl,
        }
    }

    pub(crate) fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.opt_lr,
            ..AdamConfig::default()
        }
    }

    pub fn check(&self, budget: &Budget) -> Result<()> {
        budget.check()?;
        let reals = [
            ("k1", self.k1),
            ("k2", self.k2),
            ("alpha", self.alpha),
            ("r", self.r),
            ("batch_fraction", self.batch_fraction),
            ("opt_lr", self.opt_lr),
            ("init_sigma", self.init_sigma),
        ];
        if let Some((name, v)) = reals.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Config(format!("{name} = {v} is not finite")));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha = {} not in [0, 1]", self.alpha)));
        }
        if self.r <= 0.0 {
            return Err(Error::Config(format!("r = {} must be positive", self.r)));
        }
        if !(self.batch_fraction > 0.0 && self.batch_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "batch_fraction = {} not in (0, 1]",
                self.batch_fraction
            )));
        }
        if self.opt_lr <= 0.0 || self.init_sigma < 0.0 {
            return Err(Error::Config("opt_lr must be positive and init_sigma non-negative".into()));
        }
        if let Some(cap) = self.effective_degree_cap {
            if cap == 0 || cap > budget.degree {
                return Err(Error::Config(format!(
                    "effective degree cap {cap} must lie in 1..={}",
                    budget.degree
                )));
            }
        }
        Ok(())
    }

    pub fn degree_cap(&self, budget: &Budget) -> usize {
        self.effective_degree_cap.unwrap_or(budget.degree)
    }

    /// Nodes per batch for a budget of `b` nodes.
    pub fn batch_size(&self, b: usize) -> usize {
        ((self.batch_fraction * b as f64).ceil() as usize).clamp(1, b.max(1))
    }
}

/// One row of `attack_log.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchLog {
    pub batch: usize,
    pub mean_p: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    pub nodes_injected: usize,
    /// Targets the edge policy could choose from in this batch.
    pub eligible_targets: usize,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackOutcome {
    pub method: String,
    pub injection: Injection,
    pub log: Vec<BatchLog>,
}

impl AttackOutcome {
    pub fn log_csv(&self) -> String {
        let mut s = String::from("method,batch,mean_p,loss_before,loss_after,nodes_injected,eligible_targets,wall_time_s\n");
        for row in &self.log {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{:.3}",
                self.method,
                row.batch,
                crate::eval::fmt_f64(row.mean_p),
                crate::eval::fmt_f64(row.loss_before),
                crate::eval::fmt_f64(row.loss_after),
                row.nodes_injected,
                row.eligible_targets,
                row.wall_time_s
            )
            .unwrap();
        }
        s
    }

    pub fn save_log(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.log_csv())
    }
}
