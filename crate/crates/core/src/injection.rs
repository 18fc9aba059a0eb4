//! Injection artifacts: the budget an attacker works under, the injected
//! nodes themselves, admissibility checks, and graph construction.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{write_file, Dataset};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

/// Attack budget: at most `nodes` injected nodes, each with at most
/// `degree` edges, features inside `feature_bounds`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub nodes: usize,
    pub degree: usize,
    pub feature_bounds: (f64, f64),
}

impl Budget {
    pub fn new(nodes: usize, degree: usize, feature_bounds: (f64, f64)) -> Result<Self> {
        let b = Budget {
            nodes,
            degree,
            feature_bounds,
        };
        b.check()?;
        Ok(b)
    }

    pub fn check(&self) -> Result<()> {
        let (lo, hi) = self.feature_bounds;
        if self.degree == 0 {
            return Err(Error::Config("degree budget must be at least 1".into()));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("feature bounds ({lo}, {hi}) must satisfy min < max")));
        }
        Ok(())
    }
}

/// Nodes added to a graph. Injected node `i` becomes node `n + i` of the
/// attacked graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub n_injected: usize,
    /// `(original node, injected index)` pairs.
    pub cross_edges: Vec<(usize, usize)>,
    /// Undirected pairs of injected indices.
    pub injected_adjacency: Vec<(usize, usize)>,
    /// `n_injected x D`.
    pub injected_features: Matrix,
}

impl Injection {
    pub fn empty(feature_dim: usize) -> Self {
        Injection {
            n_injected: 0,
            cross_edges: Vec::new(),
            injected_adjacency: Vec::new(),
            injected_features: Matrix::zeros(0, feature_dim),
        }
    }

    /// Total degree of each injected node, counting cross and internal edges.
    pub fn injected_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_injected];
        for &(_, i) in &self.cross_edges {
            if i < self.n_injected {
                deg[i] += 1;
            }
        }
        for &(i, j) in &self.injected_adjacency {
            if i < self.n_injected && j < self.n_injected {
                deg[i] += 1;
                deg[j] += 1;
            }
        }
        deg
    }
}

/// One broken constraint.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    TooManyNodes { count: usize, max: usize },
    DegreeExceeded { node: usize, degree: usize, max: usize },
    FeatureOutOfRange { node: usize, dim: usize, value: f64 },
    BadFeatureShape { rows: usize, cols: usize, expected: (usize, usize) },
    CrossEdgeOutOfRange { original: usize, injected: usize },
    DuplicateCrossEdge { original: usize, injected: usize },
    InternalEdgeInvalid { a: usize, b: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooManyNodes { count, max } => write!(f, "{count} injected nodes exceed budget {max}"),
            Violation::DegreeExceeded { node, degree, max } => {
                write!(f, "injected node {node} has degree {degree} > {max}")
            }
            Violation::FeatureOutOfRange { node, dim, value } => {
                write!(f, "injected node {node} feature {dim} = {value} outside bounds")
            }
            Violation::BadFeatureShape { rows, cols, expected } => {
                write!(f, "feature matrix is {rows}x{cols}, expected {}x{}", expected.0, expected.1)
            }
            Violation::CrossEdgeOutOfRange { original, injected } => {
                write!(f, "cross edge ({original}, {injected}) references a missing node")
            }
            Violation::DuplicateCrossEdge { original, injected } => {
                write!(f, "cross edge ({original}, {injected}) listed twice")
            }
            Violation::InternalEdgeInvalid { a, b } => write!(f, "internal edge ({a}, {b}) is invalid"),
        }
    }
}

/// Lists every violated constraint. An empty list means the injection is
/// admissible under `budget` for a graph with `n_original` nodes and
/// `feature_dim` features.
pub fn validate_injection(
    injection: &Injection,
    budget: &Budget,
    n_original: usize,
    feature_dim: usize,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let ni = injection.n_injected;
    if ni > budget.nodes {
        out.push(Violation::TooManyNodes {
            count: ni,
            max: budget.nodes,
        });
    }

    let mut seen = std::collections::HashSet::new();
    for &(original, injected) in &injection.cross_edges {
        if original >= n_original || injected >= ni {
            out.push(Violation::CrossEdgeOutOfRange { original, injected });
        } else if !seen.insert((original, injected)) {
            out.push(Violation::DuplicateCrossEdge { original, injected });
        }
    }
    let mut internal = std::collections::HashSet::new();
    for &(a, b) in &injection.injected_adjacency {
        if a >= ni || b >= ni || a == b || !internal.insert((a.min(b), a.max(b))) {
            out.push(Violation::InternalEdgeInvalid { a, b });
        }
    }

    for (node, degree) in injection.injected_degrees().into_iter().enumerate() {
        if degree > budget.degree {
            out.push(Violation::DegreeExceeded {
                node,
                degree,
                max: budget.degree,
            });
        }
    }

    let feats = &injection.injected_features;
    if feats.shape() != (ni, feature_dim) {
        out.push(Violation::BadFeatureShape {
            rows: feats.rows(),
            cols: feats.cols(),
            expected: (ni, feature_dim),
        });
    } else {
        let (lo, hi) = budget.feature_bounds;
        for node in 0..ni {
            for (dim, &value) in feats.row(node).iter().enumerate() {
                // NaN fails both comparisons and is reported.
                if !(value >= lo && value <= hi) {
                    out.push(Violation::FeatureOutOfRange { node, dim, value });
                }
            }
        }
    }
    out
}

/// Builds the attacked dataset: adjacency `[[A, V], [V^T, A_I]]` and
/// features `[F; F_I]`. Labels and splits are carried over unchanged.
pub fn apply_injection(dataset: &Dataset, injection: &Injection) -> Result<Dataset> {
    let n = dataset.num_nodes();
    let ni = injection.n_injected;
    if injection.injected_features.rows() != ni {
        return Err(Error::Injection(format!(
            "{} feature rows for {ni} injected nodes",
            injection.injected_features.rows()
        )));
    }
    if ni > 0 && injection.injected_features.cols() != dataset.feature_dim() {
        return Err(Error::Injection(format!(
            "injected features have {} columns, dataset has {}",
            injection.injected_features.cols(),
            dataset.feature_dim()
        )));
    }
    for &(u, i) in &injection.cross_edges {
        if u >= n || i >= ni {
            return Err(Error::Injection(format!("cross edge ({u}, {i}) out of range")));
        }
    }
    for &(a, b) in &injection.injected_adjacency {
        if a >= ni || b >= ni {
            return Err(Error::Injection(format!("internal edge ({a}, {b}) out of range")));
        }
    }
    let edges = dataset
        .graph
        .edges()
        .chain(injection.cross_edges.iter().map(|&(u, i)| (u, n + i)))
        .chain(injection.injected_adjacency.iter().map(|&(a, b)| (n + a, n + b)));
    let graph = Graph::from_edges(n + ni, edges)?;
    let features = if ni == 0 {
        dataset.features.clone()
    } else {
        dataset.features.vstack(&injection.injected_features)?
    };
    Ok(Dataset {
        graph,
        features,
        labels: dataset.labels.clone(),
        splits: dataset.splits.clone(),
        num_classes: dataset.num_classes,
        feature_range: dataset.feature_range,
    })
}

/// On-disk form of an injection (`injection.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionArtifact {
    pub n_injected: usize,
    pub feature_dim: usize,
    pub cross_edges: Vec<(usize, usize)>,
    pub injected_adjacency: Vec<(usize, usize)>,
    /// Row-major, `n_injected * feature_dim` values.
    pub injected_features: Vec<f64>,
    pub budget: Budget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl InjectionArtifact {
    pub fn new(injection: &Injection, budget: Budget) -> Self {
        InjectionArtifact {
            n_injected: injection.n_injected,
            feature_dim: injection.injected_features.cols(),
            cross_edges: injection.cross_edges.clone(),
            injected_adjacency: injection.injected_adjacency.clone(),
            injected_features: injection.injected_features.as_slice().to_vec(),
            budget,
            method: None,
            seed: None,
        }
    }

    pub fn injection(&self) -> Result<Injection> {
        Ok(Injection {
            n_injected: self.n_injected,
            cross_edges: self.cross_edges.clone(),
            injected_adjacency: self.injected_adjacency.clone(),
            injected_features: Matrix::from_vec(
                self.n_injected,
                self.feature_dim,
                self.injected_features.clone(),
            )?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_json())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Splits;

    fn path3() -> Dataset {
        let graph = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let features = Matrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]]).unwrap();
        let splits = Splits {
            train: vec![0],
            val: vec![1],
            test: vec![2],
        };
        Dataset::new(graph, features, vec![0, 1, 0], splits, 2).unwrap()
    }

    fn one_node(features: Vec<f64>) -> Injection {
        Injection {
            n_injected: 1,
            cross_edges: vec![(0, 0)],
            injected_adjacency: vec![],
            injected_features: Matrix::from_vec(1, 2, features).unwrap(),
        }
    }

    #[test]
    fn empty_injection_is_identity() {
        let ds = path3();
        assert_eq!(apply_injection(&ds, &Injection::empty(2)).unwrap(), ds);
    }

    #[test]
    fn single_injected_node_on_path() {
        let ds = path3();
        let attacked = apply_injection(&ds, &one_node(vec![1.0, -1.0])).unwrap();
        assert_eq!(attacked.graph.degrees(), vec![2, 2, 1, 1]);
        assert_eq!(attacked.features.row(3), &[1.0, -1.0]);
        for v in 0..3 {
            assert_eq!(attacked.features.row(v), ds.features.row(v));
        }
        assert_eq!(attacked.splits, ds.splits);
    }

    #[test]
    fn boundary_features_are_admissible() {
        let budget = Budget::new(1, 1, (-1.0, 1.0)).unwrap();
        assert!(validate_injection(&one_node(vec![1.0, -1.0]), &budget, 3, 2).is_empty());
        let v = validate_injection(&one_node(vec![1.0 + 1e-9, 0.0]), &budget, 3, 2);
        assert!(matches!(v[..], [Violation::FeatureOutOfRange { node: 0, dim: 0, .. }]));
    }

    #[test]
    fn full_scale_budget_is_admissible() {
        let budget = Budget::new(500, 100, (-1.0, 1.0)).unwrap();
        let n = 1000;
        let inj = Injection {
            n_injected: 500,
            cross_edges: (0..500).flat_map(|i| (0..100).map(move |k| ((i + k) % n, i))).collect(),
            injected_adjacency: vec![],
            injected_features: Matrix::filled(500, 4, 0.25),
        };
        assert!(validate_injection(&inj, &budget, n, 4).is_empty());
    }

    #[test]
    fn degree_and_range_violations_are_reported() {
        let budget = Budget::new(2, 2, (-1.0, 1.0)).unwrap();
        let inj = Injection {
            n_injected: 2,
            cross_edges: vec![(0, 1), (1, 1), (2, 1)],
            injected_adjacency: vec![],
            injected_features: Matrix::from_vec(2, 1, vec![0.0, 1.5]).unwrap(),
        };
        let v = validate_injection(&inj, &budget, 3, 1);
        assert!(v.contains(&Violation::DegreeExceeded { node: 1, degree: 3, max: 2 }));
        assert!(v.contains(&Violation::FeatureOutOfRange { node: 1, dim: 0, value: 1.5 }));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn out_of_range_edges_fail_construction() {
        let mut inj = one_node(vec![0.0, 0.0]);
        inj.cross_edges = vec![(7, 0)];
        assert!(apply_injection(&path3(), &inj).is_err());
    }

    #[test]
    fn artifact_round_trip_is_bit_exact() {
        let inj = one_node(vec![0.1 + 0.2, -1.0 / 3.0]);
        let art = InjectionArtifact::new(&inj, Budget::new(1, 1, (-1.0, 1.0)).unwrap());
        let back: InjectionArtifact = serde_json::from_str(&art.to_json()).unwrap();
        assert_eq!(back.injection().unwrap(), inj);
    }
}
