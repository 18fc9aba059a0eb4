use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{backward, forward_trace};
use super::*;
use crate::attack::functions::{FeatureMap, LossKind};
use crate::dataset::{Dataset, Splits};
use crate::graph::Graph;
use crate::injection::{apply_injection, Injection};
use crate::matrix::Matrix;

fn dataset(graph: Graph, features: Matrix, labels: Vec<usize>, c: usize, splits: Splits) -> Dataset {
    Dataset::new(graph, features, labels, splits, c).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Dense reference for a GCN without layernorm: D^-1/2 (A + I) D^-1/2.
fn dense_gcn_logits(model: &Model, graph: &Graph, x: &Matrix) -> Matrix {
    let n = graph.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
        for &j in graph.neighbors(i) {
            row[j] = 1.0;
        }
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut h: Vec<Vec<f64>> = x.iter_rows().map(<[f64]>::to_vec).collect();
    let last = model.layers.len() - 1;
    for (l, layer) in model.layers.iter().enumerate() {
        let (din, dout) = layer.weight.shape();
        let mut hw = vec![vec![0.0; dout]; n];
        for i in 0..n {
            for k in 0..din {
                for j in 0..dout {
                    hw[i][j] += h[i][k] * layer.weight.get(k, j);
                }
            }
        }
        let mut z = vec![vec![0.0; dout]; n];
        for i in 0..n {
            for u in 0..n {
                let w = a[i][u] / (deg[i] * deg[u]).sqrt();
                for j in 0..dout {
                    z[i][j] += w * hw[u][j];
                }
            }
            for j in 0..dout {
                z[i][j] += layer.bias[j];
                if l < last {
                    z[i][j] = z[i][j].max(0.0);
                }
            }
        }
        h = z;
    }
    Matrix::from_rows(&h).unwrap()
}

#[test]
fn single_node_linear_head_is_softmax_of_xw() {
    let spec = ModelSpec {
        sgc_k: 1,
        ..ModelSpec::sgc()
    };
    let mut model = Model::init(&spec, 2, 2, 0).unwrap();
    model.layers[0].weight = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let ds = dataset(
        Graph::empty(1),
        Matrix::from_vec(1, 2, vec![0.3, -0.7]).unwrap(),
        vec![0],
        2,
        Splits::default(),
    );
    let pred = forward(&model, &ds, Mode::Eval).unwrap();
    let e0 = 0.3f64.exp();
    let e1 = (-0.7f64).exp();
    assert!((pred.probabilities.get(0, 0) - e0 / (e0 + e1)).abs() < 1e-15);
    assert_eq!(pred.labels, vec![0]);
}

#[test]
fn gcn_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (n, edges) in [(2, vec![(0, 1)]), (6, vec![(0, 1), (1, 2), (2, 3), (0, 4)])] {
        let graph = Graph::from_edges(n, edges).unwrap();
        let x = random_matrix(&mut rng, n, 3, 1.0);
        let spec = ModelSpec {
            use_layernorm: false,
            hidden_dims: vec![4],
            ..ModelSpec::gcn_layernorm()
        };
        let mut model = Model::init(&spec, 3, 2, 9).unwrap();
        model.layers[0].bias = vec![0.1, -0.2, 0.3, 0.0];
        let ds = dataset(graph.clone(), x.clone(), vec![0; n], 2, Splits::default());
        let ops = GraphOps::new(&ds.graph, Architecture::Gcn);
        let got = logits(&model, &ops, &x).unwrap();
        let want = dense_gcn_logits(&model, &graph, &x);
        for (a, b) in got.as_slice().iter().zip(want.as_slice()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn eval_mode_is_deterministic_and_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let graph = Graph::from_edges(8, (0..7).map(|i| (i, i + 1))).unwrap();
    let ds = dataset(graph, random_matrix(&mut rng, 8, 4, 1.0), vec![0; 8], 3, Splits::default());
    for spec in [ModelSpec::gcn_layernorm(), ModelSpec::sgc(), ModelSpec::sage_mean()] {
        let model = Model::init(&spec, 4, 3, 2).unwrap();
        let a = forward(&model, &ds, Mode::Eval).unwrap();
        let b = forward(&model, &ds, Mode::Eval).unwrap();
        assert_eq!(a, b);
        for row in a.probabilities.iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn uniform_logits_predict_class_zero() {
    let spec = ModelSpec::sgc();
    let mut model = Model::init(&spec, 2, 4, 0).unwrap();
    model.layers[0].weight = Matrix::zeros(2, 4);
    let ds = dataset(Graph::empty(3), Matrix::filled(3, 2, 0.5), vec![0; 3], 4, Splits::default());
    let pred = predict_labels(&model, &ds).unwrap();
    assert_eq!(pred.labels, vec![0, 0, 0]);
    assert!((pred.probabilities.get(1, 2) - 0.25).abs() < 1e-15);
}

#[test]
fn dimension_mismatch_is_an_error() {
    let model = Model::init(&ModelSpec::gcn_layernorm(), 3, 2, 0).unwrap();
    let ds = dataset(Graph::empty(2), Matrix::zeros(2, 4), vec![0, 0], 2, Splits::default());
    assert!(forward(&model, &ds, Mode::Eval).is_err());
}

fn separable(n_per_class: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2 * n_per_class;
    let labels: Vec<usize> = (0..n).map(|v| v / n_per_class).collect();
    let mut x = Matrix::zeros(n, 3);
    for v in 0..n {
        let sign = if labels[v] == 0 { -1.0 } else { 1.0 };
        x.set(v, 0, sign * rng.random_range(0.5..1.0));
        x.set(v, 1, rng.random_range(-1.0..1.0));
        x.set(v, 2, rng.random_range(-1.0..1.0));
    }
    let edges: Vec<(usize, usize)> = (0..n)
        .filter(|v| v % n_per_class + 1 < n_per_class)
        .map(|v| (v, v + 1))
        .collect();
    let graph = Graph::from_edges(n, edges).unwrap();
    let all: Vec<usize> = (0..n).collect();
    let splits = Splits {
        train: all.iter().copied().filter(|v| v % 2 == 0).collect(),
        val: all.iter().copied().filter(|v| v % 2 == 1).collect(),
        test: vec![],
    };
    dataset(graph, x, labels, 2, splits)
}

#[test]
fn training_separates_linearly_separable_classes() {
    let ds = separable(30, 3);
    let cfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    for spec in [ModelSpec::gcn_layernorm(), ModelSpec::sgc(), ModelSpec::sage_mean()] {
        let model = train(&spec, &ds, &cfg).unwrap();
        let pred = predict_labels(&model, &ds).unwrap();
        let hits = ds.splits.train.iter().filter(|&&v| pred.labels[v] == ds.labels[v]).count();
        let acc = hits as f64 / ds.splits.train.len() as f64;
        assert!(acc >= 0.99, "{:?}: train accuracy {acc}", spec.architecture);
    }
}

#[test]
fn training_is_seed_deterministic() {
    let ds = separable(10, 4);
    let cfg = TrainConfig {
        epochs: 40,
        seed: 17,
        ..TrainConfig::default()
    };
    let a = train(&ModelSpec::gcn_layernorm(), &ds, &cfg).unwrap();
    let b = train(&ModelSpec::gcn_layernorm(), &ds, &cfg).unwrap();
    assert_eq!(a, b);
    let c = train(&ModelSpec::gcn_layernorm(), &ds, &TrainConfig { seed: 18, ..cfg }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn zero_epochs_is_a_config_error() {
    let ds = separable(5, 1);
    let cfg = TrainConfig {
        epochs: 0,
        ..TrainConfig::default()
    };
    assert!(matches!(train(&ModelSpec::sgc(), &ds, &cfg), Err(crate::Error::Config(_))));
}

#[test]
fn diverging_training_reports_epoch_and_lr() {
    let ds = separable(5, 1);
    let cfg = TrainConfig {
        optimizer: crate::optim::AdamConfig {
            lr: f64::MAX,
            ..Default::default()
        },
        epochs: 5,
        ..TrainConfig::default()
    };
    match train(&ModelSpec::gcn_layernorm(), &ds, &cfg) {
        Err(crate::Error::Numerical { epoch, lr, .. }) => {
            assert!(epoch >= 1);
            assert_eq!(lr, f64::MAX);
        }
        other => panic!("expected numerical failure, got {other:?}"),
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let graph = Graph::from_edges(7, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (0, 6), (1, 4)]).unwrap();
    let x = random_matrix(&mut rng, 7, 3, 1.0);
    let labels = vec![0, 1, 2, 0, 1, 2, 0];
    for spec in [
        ModelSpec {
            hidden_dims: vec![5],
            ..ModelSpec::gcn_layernorm()
        },
        ModelSpec::sgc(),
        ModelSpec {
            hidden_dims: vec![4],
            use_layernorm: true,
            ..ModelSpec::sage_mean()
        },
    ] {
        let model = Model::init(&spec, 3, 3, 3).unwrap();
        let ops = GraphOps::new(&graph, spec.architecture);
        let loss_of = |m: &Model| -> f64 {
            let z = forward_trace(m, &ops, &x, Mode::Eval).logits;
            -(0..7).map(|v| crate::matrix::log_softmax_at(z.row(v), labels[v])).sum::<f64>()
        };
        let trace = forward_trace(&model, &ops, &x, Mode::Eval);
        let mut dl = Matrix::zeros(7, 3);
        let mut p = vec![0.0; 3];
        for v in 0..7 {
            crate::matrix::softmax_into(trace.logits.row(v), &mut p);
            for k in 0..3 {
                dl.set(v, k, p[k] - if k == labels[v] { 1.0 } else { 0.0 });
            }
        }
        let analytic = backward(&model, &ops, &trace, dl, true, None).params.unwrap();
        let base = model.flat_params();
        let h = 1e-6;
        for i in 0..base.len() {
            let mut m = model.clone();
            let mut plus = base.clone();
            plus[i] += h;
            m.set_flat_params(&plus);
            let lp = loss_of(&m);
            let mut minus = base.clone();
            minus[i] -= h;
            m.set_flat_params(&minus);
            let lm = loss_of(&m);
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - analytic[i]).abs();
            assert!(
                err <= 1e-6 || err <= 1e-4 * fd.abs().max(analytic[i].abs()),
                "{:?} param {i}: analytic {} fd {fd}",
                spec.architecture,
                analytic[i]
            );
        }
    }
}

fn injected_fixture(seed: u64, n: usize, ni: usize, d: usize) -> (Dataset, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    let graph = Graph::from_edges(n, edges).unwrap();
    let x = random_matrix(&mut rng, n, d, 1.0);
    let labels: Vec<usize> = (0..n).map(|v| v % 3).collect();
    let base = dataset(graph, x, labels, 3, Splits::default());
    let cross: Vec<(usize, usize)> = (0..ni).flat_map(|i| [(i, i), ((i * 7 + 3) % n, i)]).collect();
    let inj = Injection {
        n_injected: ni,
        cross_edges: cross,
        injected_adjacency: vec![],
        injected_features: Matrix::zeros(ni, d),
    };
    let attacked = apply_injection(&base, &inj).unwrap();
    let targets = (0..n).step_by(2).collect();
    (attacked, targets)
}

#[test]
fn injected_feature_gradient_matches_finite_differences() {
    let (n, ni, d) = (30, 3, 4);
    let (attacked, targets) = injected_fixture(2, n, ni, d);
    let labels: Vec<usize> = targets.iter().map(|v| v % 3).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for spec in [ModelSpec::gcn_layernorm(), ModelSpec::sgc(), ModelSpec::sage_mean()] {
        let model = Model::init(&spec, d, 3, 6).unwrap();
        for loss in [LossKind::Smooth { r: 4.0 }, LossKind::InverseKl] {
            let layout = InjectionLayout {
                n_original: n,
                n_injected: ni,
                feature_map: FeatureMap::Smoothmap,
                bounds: (-1.0, 1.0),
            };
            let raw = random_matrix(&mut rng, ni, d, 2.0);
            let mut obj = AttackObjective::new(&model, &attacked, layout, &targets, &labels, loss).unwrap();
            let (value, grad) = obj.loss_and_grad(&raw).unwrap();
            assert!((obj.loss(&raw).unwrap() - value).abs() < 1e-15);
            let h = 1e-4;
            for i in 0..raw.as_slice().len() {
                let mut p = raw.clone();
                p.as_mut_slice()[i] += h;
                let mut m = raw.clone();
                m.as_mut_slice()[i] -= h;
                let fd = (obj.loss(&p).unwrap() - obj.loss(&m).unwrap()) / (2.0 * h);
                let a = grad.as_slice()[i];
                let err = (fd - a).abs();
                assert!(
                    err <= 1e-6 || err <= 1e-3 * fd.abs().max(a.abs()),
                    "{:?} {loss:?} entry {i}: analytic {a} fd {fd}",
                    spec.architecture
                );
            }
        }
    }
}

#[test]
fn out_of_reach_injection_gets_zero_gradient() {
    // path 0-1-2-3-4-5-6-7, injected node attached to 7, targets {0}
    let n = 8;
    let graph = Graph::from_edges(n, (0..n - 1).map(|i| (i, i + 1))).unwrap();
    let base = dataset(graph, Matrix::filled(n, 2, 0.3), vec![0; n], 2, Splits::default());
    let inj = Injection {
        n_injected: 1,
        cross_edges: vec![(7, 0)],
        injected_adjacency: vec![],
        injected_features: Matrix::zeros(1, 2),
    };
    let attacked = apply_injection(&base, &inj).unwrap();
    let model = Model::init(&ModelSpec::gcn_layernorm(), 2, 2, 1).unwrap();
    let layout = InjectionLayout {
        n_original: n,
        n_injected: 1,
        feature_map: FeatureMap::Smoothmap,
        bounds: (-1.0, 1.0),
    };
    let raw = Matrix::from_vec(1, 2, vec![0.4, -1.2]).unwrap();
    let (_, g) = grad_injected_features(&model, &attacked, layout, &[0], &[0], LossKind::InverseKl, &raw).unwrap();
    assert!(g.as_slice().iter().all(|&x| x == 0.0));
}

#[test]
fn flat_smooth_region_gives_zero_loss_and_gradient() {
    let (attacked, targets) = injected_fixture(4, 12, 2, 3);
    let mut model = Model::init(&ModelSpec::sgc(), 3, 3, 0).unwrap();
    // bias pushes every node far away from class 0
    model.layers[0].bias = vec![-50.0, 0.0, 0.0];
    let labels = vec![0; targets.len()];
    let layout = InjectionLayout {
        n_original: 12,
        n_injected: 2,
        feature_map: FeatureMap::Clamp,
        bounds: (-1.0, 1.0),
    };
    let raw = Matrix::filled(2, 3, 0.2);
    let (loss, g) =
        grad_injected_features(&model, &attacked, layout, &targets, &labels, LossKind::Smooth { r: 4.0 }, &raw)
            .unwrap();
    assert_eq!(loss, 0.0);
    assert!(g.as_slice().iter().all(|&x| x == 0.0));
}

#[test]
fn empty_target_set_is_an_error() {
    let (attacked, _) = injected_fixture(4, 12, 2, 3);
    let model = Model::init(&ModelSpec::sgc(), 3, 3, 0).unwrap();
    let layout = InjectionLayout {
        n_original: 12,
        n_injected: 2,
        feature_map: FeatureMap::Clamp,
        bounds: (-1.0, 1.0),
    };
    let raw = Matrix::zeros(2, 3);
    assert!(grad_injected_features(&model, &attacked, layout, &[], &[], LossKind::InverseKl, &raw).is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let ds = separable(8, 2);
    let model = train(
        &ModelSpec::sage_mean(),
        &ds,
        &TrainConfig {
            epochs: 30,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, model);
    assert_eq!(
        predict_labels(&back, &ds).unwrap().probabilities,
        predict_labels(&model, &ds).unwrap().probabilities
    );
}
