//! The batch loop shared by every injection attack.

use std::time::Instant;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::optimize::optimize_features;
use super::select::{select_defective_edges, select_random_edges, select_uniform_edges};
use super::tdgia::scores_from_p;
use super::{AttackConfig, AttackOutcome, BatchLog};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gnn::{check_input, predict_labels, InjectionLayout, Model};
use crate::injection::{apply_injection, validate_injection, Budget, Injection};
use crate::matrix::{argmax, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum EdgeRule {
    /// Highest defective score, round-robin.
    Defective,
    /// Round-robin over targets sorted by id.
    Uniform,
    /// Uniform draws over all targets.
    Random,
    /// Uniform draws over targets the surrogate still gets right.
    RandomUnbroken,
}

pub(crate) struct Plan {
    pub method: String,
    pub rule: EdgeRule,
    /// Re-optimize every injected node each batch, or only the new ones.
    pub reoptimize_all: bool,
    /// Inject the whole budget in a single batch.
    pub one_shot: bool,
    /// Restrict the loss to targets the surrogate still labels as on the
    /// clean graph.
    pub unbroken_loss: bool,
}

pub(crate) fn run(
    surrogate: &Model,
    dataset: &Dataset,
    budget: &Budget,
    config: &AttackConfig,
    plan: Plan,
) -> Result<AttackOutcome> {
    config.check(budget)?;
    check_input(surrogate, &dataset.features, dataset.num_nodes())?;
    let n = dataset.num_nodes();
    let dim = dataset.feature_dim();
    let mut injection = Injection::empty(dim);
    let mut log = Vec::new();
    if budget.nodes == 0 {
        return Ok(AttackOutcome {
            method: plan.method,
            injection,
            log,
        });
    }
    let targets = dataset.targets().to_vec();
    if targets.is_empty() {
        return Err(Error::Config("dataset has no test targets to attack".into()));
    }

    let clean = predict_labels(surrogate, dataset)?;
    let labels: Vec<usize> = targets.iter().map(|&v| clean.labels[v]).collect();
    let d_eff = config.degree_cap(budget);
    let step = if plan.one_shot {
        budget.nodes
    } else {
        config.batch_size(budget.nodes)
    };
    let init = Normal::new(0.0, config.init_sigma)
        .map_err(|e| Error::Config(format!("init_sigma {}: {e}", config.init_sigma)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut raw = Matrix::zeros(0, dim);
    let mut cursor = 0;

    while injection.n_injected < budget.nodes {
        let started = Instant::now();
        let prev = injection.n_injected;
        let b_seq = step.min(budget.nodes - prev);

        let current = apply_injection(dataset, &injection)?;
        let pred = predict_labels(surrogate, &current)?;
        let p: Vec<f64> = targets
            .iter()
            .zip(&labels)
            .map(|(&v, &y)| pred.probabilities.get(v, y))
            .collect();
        let mean_p = p.iter().sum::<f64>() / p.len() as f64;

        let unbroken: Vec<usize> = (0..targets.len())
            .filter(|&i| argmax(pred.probabilities.row(targets[i])) == labels[i])
            .collect();
        let (edges, eligible) = match plan.rule {
            EdgeRule::Defective => {
                let scores = scores_from_p(p, &current, &targets, budget.degree, config);
                (select_defective_edges(&targets, &scores.mu, b_seq, d_eff), targets.len())
            }
            EdgeRule::Uniform => {
                let (edges, next) = select_uniform_edges(&targets, b_seq, d_eff, cursor);
                cursor = next;
                (edges, targets.len())
            }
            EdgeRule::Random => (select_random_edges(&targets, b_seq, d_eff, &mut rng), targets.len()),
            EdgeRule::RandomUnbroken => {
                // once every target is flipped, keep pressing on all of them
                let pool: Vec<usize> = if unbroken.is_empty() {
                    targets.clone()
                } else {
                    unbroken.iter().map(|&i| targets[i]).collect()
                };
                (select_random_edges(&pool, b_seq, d_eff, &mut rng), pool.len())
            }
        };
        injection
            .cross_edges
            .extend(edges.into_iter().map(|(t, i)| (t, prev + i)));
        injection.n_injected = prev + b_seq;

        let fresh = Matrix::from_vec(b_seq, dim, (0..b_seq * dim).map(|_| init.sample(&mut rng)).collect())?;
        raw = raw.vstack(&fresh)?;
        let layout_all = InjectionLayout {
            n_original: n,
            n_injected: injection.n_injected,
            feature_map: config.feature_map,
            bounds: budget.feature_bounds,
        };
        injection.injected_features = layout_all.map_features(&raw);
        let attacked = apply_injection(dataset, &injection)?;

        let (layout, start) = if plan.reoptimize_all {
            (layout_all, 0)
        } else {
            (
                InjectionLayout {
                    n_original: n + prev,
                    n_injected: b_seq,
                    ..layout_all
                },
                prev,
            )
        };
        let init_rows: Vec<usize> = (start..injection.n_injected).collect();
        let (loss_targets, loss_labels): (Vec<usize>, Vec<usize>) = if plan.unbroken_loss && !unbroken.is_empty() {
            unbroken.iter().map(|&i| (targets[i], labels[i])).unzip()
        } else {
            (targets.clone(), labels.clone())
        };
        let result = optimize_features(
            surrogate,
            &attacked,
            layout,
            &loss_targets,
            &loss_labels,
            config,
            raw.select_rows(&init_rows),
        )?;
        for (k, &row) in init_rows.iter().enumerate() {
            raw.row_mut(row).copy_from_slice(result.raw.row(k));
            injection.injected_features.row_mut(row).copy_from_slice(result.features.row(k));
        }

        let violations = validate_injection(&injection, budget, n, dim);
        if !violations.is_empty() {
            let msgs: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::Injection(format!(
                "batch {} broke the budget: {}",
                log.len(),
                msgs.join("; ")
            )));
        }

        let row = BatchLog {
            batch: log.len(),
            mean_p,
            loss_before: result.loss_before,
            loss_after: result.loss_after,
            nodes_injected: injection.n_injected,
            eligible_targets: eligible,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        debug!(
            "{} batch {}: mean p {:.4}, loss {:.4} -> {:.4}",
            plan.method, row.batch, row.mean_p, row.loss_before, row.loss_after
        );
        log.push(row);
    }
    info!(
        "{}: injected {} nodes, {} edges in {} batches",
        plan.method,
        injection.n_injected,
        injection.cross_edges.len(),
        log.len()
    );
    Ok(AttackOutcome {
        method: plan.method,
        injection,
        log,
    })
}

/// Re-optimizes every injected feature row of `injection` from a fresh
/// initialization, leaving the topology untouched.
pub(crate) fn reoptimize(
    surrogate: &Model,
    dataset: &Dataset,
    budget: &Budget,
    injection: &Injection,
    config: &AttackConfig,
) -> Result<Injection> {
    config.check(budget)?;
    let n = dataset.num_nodes();
    let dim = dataset.feature_dim();
    let mut out = injection.clone();
    if injection.n_injected == 0 {
        return Ok(out);
    }
    let targets = dataset.targets().to_vec();
    let clean = predict_labels(surrogate, dataset)?;
    let labels: Vec<usize> = targets.iter().map(|&v| clean.labels[v]).collect();
    let init = Normal::new(0.0, config.init_sigma)
        .map_err(|e| Error::Config(format!("init_sigma {}: {e}", config.init_sigma)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let k = injection.n_injected;
    let raw = Matrix::from_vec(k, dim, (0..k * dim).map(|_| init.sample(&mut rng)).collect())?;
    let layout = InjectionLayout {
        n_original: n,
        n_injected: k,
        feature_map: config.feature_map,
        bounds: budget.feature_bounds,
    };
    out.injected_features = layout.map_features(&raw);
    let attacked = apply_injection(dataset, &out)?;
    out.injected_features = optimize_features(surrogate, &attacked, layout, &targets, &labels, config, raw)?.features;
    Ok(out)
}
