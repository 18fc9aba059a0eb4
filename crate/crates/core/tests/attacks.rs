use std::collections::HashMap;

use gialab::attack::{
    afgsm_attack, defective_score, edge_policy_ablation, fgsm_attack, node_scores, optimize_features,
    reoptimize_features, select_defective_edges, tdgia_attack, AttackConfig, EdgePolicy, FeatureMap,
};
use gialab::gnn::{predict_labels, train, InjectionLayout, Model, ModelSpec, TrainConfig};
use gialab::sbm::{synth_sbm, SbmParams};
use gialab::{apply_injection, validate_injection, Budget, Dataset, Injection, Matrix};

fn fixture() -> (Dataset, Model) {
    let params = SbmParams {
        feature_dim: 16,
        p_in: 0.1,
        p_out: 0.01,
        ..SbmParams::with_nodes(120, 4)
    };
    let ds = synth_sbm(&params, 21).unwrap();
    let config = TrainConfig {
        epochs: 150,
        seed: 5,
        ..TrainConfig::default()
    };
    let model = train(&ModelSpec::gcn_layernorm(), &ds, &config).unwrap();
    (ds, model)
}

fn quick(seed: u64) -> AttackConfig {
    AttackConfig {
        opt_epochs: 30,
        seed,
        ..AttackConfig::default()
    }
}

fn quick_baseline(seed: u64) -> AttackConfig {
    AttackConfig {
        opt_epochs: 30,
        seed,
        ..AttackConfig::baseline()
    }
}

#[test]
fn zero_budget_changes_nothing() {
    let (ds, model) = fixture();
    let budget = Budget::new(0, 3, ds.feature_range).unwrap();
    for out in [
        tdgia_attack(&model, &ds, &budget, &quick(0)).unwrap(),
        fgsm_attack(&model, &ds, &budget, &quick_baseline(0)).unwrap(),
        afgsm_attack(&model, &ds, &budget, &quick_baseline(0)).unwrap(),
    ] {
        assert_eq!(out.injection, Injection::empty(ds.feature_dim()));
        assert!(out.log.is_empty());
        let attacked = apply_injection(&ds, &out.injection).unwrap();
        assert_eq!(
            predict_labels(&model, &attacked).unwrap().labels,
            predict_labels(&model, &ds).unwrap().labels
        );
    }
}

#[test]
fn default_fraction_runs_five_batches_within_budget() {
    let (ds, model) = fixture();
    let budget = Budget::new(10, 3, ds.feature_range).unwrap();
    let out = tdgia_attack(&model, &ds, &budget, &quick(1)).unwrap();
    assert_eq!(out.log.len(), 5);
    let sizes: Vec<usize> = out.log.iter().map(|r| r.nodes_injected).collect();
    assert_eq!(sizes, vec![2, 4, 6, 8, 10]);
    assert!(validate_injection(&out.injection, &budget, ds.num_nodes(), ds.feature_dim()).is_empty());
    assert!(out.injection.injected_degrees().iter().all(|&k| k == 3));
    // later batches see the damage done by earlier ones
    assert!(out.log.last().unwrap().mean_p < out.log[0].mean_p);
    assert!(out.log.iter().all(|r| r.loss_after <= r.loss_before));
}

#[test]
fn attacks_are_seed_deterministic() {
    let (ds, model) = fixture();
    let budget = Budget::new(6, 2, ds.feature_range).unwrap();
    let a = tdgia_attack(&model, &ds, &budget, &quick(3)).unwrap();
    let b = tdgia_attack(&model, &ds, &budget, &quick(3)).unwrap();
    assert_eq!(a.injection, b.injection);
    let f1 = fgsm_attack(&model, &ds, &budget, &quick_baseline(3)).unwrap();
    let f2 = fgsm_attack(&model, &ds, &budget, &quick_baseline(3)).unwrap();
    let f3 = fgsm_attack(&model, &ds, &budget, &quick_baseline(4)).unwrap();
    assert_eq!(f1.injection, f2.injection);
    assert_ne!(f1.injection.cross_edges, f3.injection.cross_edges);
    let r1 = edge_policy_ablation(EdgePolicy::Random, &model, &ds, &budget, &quick(8)).unwrap();
    let r2 = edge_policy_ablation(EdgePolicy::Random, &model, &ds, &budget, &quick(8)).unwrap();
    assert_eq!(r1.injection, r2.injection);
}

#[test]
fn afgsm_in_one_batch_wires_like_fgsm() {
    let (ds, model) = fixture();
    let budget = Budget::new(6, 3, ds.feature_range).unwrap();
    let config = AttackConfig {
        batch_fraction: 1.0,
        ..quick_baseline(2)
    };
    let af = afgsm_attack(&model, &ds, &budget, &config).unwrap();
    let fg = fgsm_attack(&model, &ds, &budget, &config).unwrap();
    assert_eq!(af.log.len(), 1);
    assert_eq!(af.injection.cross_edges, fg.injection.cross_edges);
}

#[test]
fn afgsm_links_only_targets_still_classified_as_before() {
    let (ds, model) = fixture();
    let budget = Budget::new(12, 3, ds.feature_range).unwrap();
    let out = afgsm_attack(&model, &ds, &budget, &quick_baseline(6)).unwrap();
    let clean = predict_labels(&model, &ds).unwrap();
    let step = 3;
    for batch in 1..out.log.len() {
        let prev = batch * step;
        let partial = Injection {
            n_injected: prev,
            cross_edges: out.injection.cross_edges.iter().copied().filter(|&(_, i)| i < prev).collect(),
            injected_adjacency: vec![],
            injected_features: out.injection.injected_features.select_rows(&(0..prev).collect::<Vec<_>>()),
        };
        let pred = predict_labels(&model, &apply_injection(&ds, &partial).unwrap()).unwrap();
        let unbroken = ds.targets().iter().filter(|&&v| pred.labels[v] == clean.labels[v]).count();
        assert_eq!(out.log[batch].eligible_targets, unbroken);
        for &(t, i) in &out.injection.cross_edges {
            if (prev..prev + step).contains(&i) {
                assert_eq!(pred.labels[t], clean.labels[t], "batch {batch} linked broken target {t}");
            }
        }
    }
}

#[test]
fn zero_epochs_returns_the_mapped_start() {
    let (ds, model) = fixture();
    let n = ds.num_nodes();
    let inj = Injection {
        n_injected: 1,
        cross_edges: vec![(ds.targets()[0], 0)],
        injected_adjacency: vec![],
        injected_features: Matrix::zeros(1, ds.feature_dim()),
    };
    let attacked = apply_injection(&ds, &inj).unwrap();
    let layout = InjectionLayout {
        n_original: n,
        n_injected: 1,
        feature_map: FeatureMap::Smoothmap,
        bounds: ds.feature_range,
    };
    let init = Matrix::from_vec(1, ds.feature_dim(), (0..ds.feature_dim()).map(|j| j as f64 * 0.3 - 2.0).collect())
        .unwrap();
    let targets = ds.targets().to_vec();
    let labels = predict_labels(&model, &ds).unwrap();
    let labels: Vec<usize> = targets.iter().map(|&v| labels.labels[v]).collect();
    let config = AttackConfig {
        opt_epochs: 0,
        ..AttackConfig::default()
    };
    let out = optimize_features(&model, &attacked, layout, &targets, &labels, &config, init.clone()).unwrap();
    assert_eq!(out.raw, init);
    assert_eq!(out.features, layout.map_features(&init));
    assert_eq!(out.loss_before, out.loss_after);
}

#[test]
fn reoptimizing_features_keeps_topology() {
    let (ds, model) = fixture();
    let budget = Budget::new(5, 3, ds.feature_range).unwrap();
    let base = tdgia_attack(&model, &ds, &budget, &quick(0)).unwrap().injection;
    let smooth = reoptimize_features(&model, &ds, &budget, &base, &quick(0)).unwrap();
    let kl = reoptimize_features(&model, &ds, &budget, &base, &quick_baseline(0)).unwrap();
    for inj in [&smooth, &kl] {
        assert_eq!(inj.cross_edges, base.cross_edges);
        assert_eq!(inj.n_injected, base.n_injected);
        assert!(validate_injection(inj, &budget, ds.num_nodes(), ds.feature_dim()).is_empty());
    }
    assert_ne!(smooth.injected_features, kl.injected_features);
}

#[test]
fn uniform_policy_spreads_links_evenly() {
    let (ds, model) = fixture();
    let t = ds.targets().len();
    assert_eq!(t, 72);
    // 2 batches of 4 nodes with 9 edges each cover every target exactly once
    let budget = Budget::new(8, 9, ds.feature_range).unwrap();
    let config = AttackConfig {
        batch_fraction: 0.5,
        ..quick(0)
    };
    let out = edge_policy_ablation(EdgePolicy::Uniform, &model, &ds, &budget, &config).unwrap();
    let mut load: HashMap<usize, usize> = HashMap::new();
    for &(target, _) in &out.injection.cross_edges {
        *load.entry(target).or_default() += 1;
    }
    assert_eq!(load.len(), t);
    assert!(load.values().all(|&k| k == 1));
}

#[test]
fn selection_depends_only_on_score_order() {
    let targets: Vec<usize> = (10..30).collect();
    let mu: Vec<f64> = targets.iter().map(|&v| ((v * 37) % 17) as f64 / 17.0).collect();
    let scaled: Vec<f64> = mu.iter().map(|m| m * 3.5).collect();
    assert_eq!(
        select_defective_edges(&targets, &mu, 3, 2),
        select_defective_edges(&targets, &scaled, 3, 2)
    );
    // with a positive alpha, multiplying every lambda by c multiplies every mu by c
    let p = vec![0.3; 20];
    let lam: Vec<f64> = (0..20).map(|i| 1.0 / (i + 1) as f64).collect();
    let lam2: Vec<f64> = lam.iter().map(|l| l * 0.25).collect();
    assert_eq!(
        select_defective_edges(&targets, &defective_score(&p, &lam, 0.5), 4, 2),
        select_defective_edges(&targets, &defective_score(&p, &lam2, 0.5), 4, 2)
    );
}

#[test]
fn alpha_zero_ranks_by_degree_alone() {
    let (ds, model) = fixture();
    let config = AttackConfig {
        alpha: 0.0,
        ..AttackConfig::default()
    };
    let targets = ds.targets().to_vec();
    let labels = vec![0; targets.len()];
    let scores = node_scores(&model, &ds, &labels, &targets, 3, &config).unwrap();
    assert_eq!(scores.mu, scores.lambda);
    let picks = select_defective_edges(&targets, &scores.mu, 2, 2);
    let max_picked = picks.iter().map(|&(t, _)| ds.graph.degree(t).max(1)).max().unwrap();
    let skipped_min = targets
        .iter()
        .filter(|t| !picks.iter().any(|(p, _)| p == *t))
        .map(|&t| ds.graph.degree(t).max(1))
        .min()
        .unwrap();
    assert!(max_picked <= skipped_min);
}
