//! Block construction showing that a permutation-invariant model which uses
//! graph structure can be attacked by injection alone.
//!
//! Given graphs `G1`, `G2` sharing a node `s` with identical features, move
//! `s` to position 0 of each:
//!
//! ```text
//! A1 = [[0, B1], [C1, S1]]      A2 = [[0, B2], [C2, S2]]
//! ```
//!
//! Injecting the rest of `G2` into `G1` (and vice versa) gives
//!
//! ```text
//! A1* = [[0, B1, B2], [C1, S1, 0], [C2, 0, S2]]
//! A2* = [[0, B2, B1], [C2, S2, 0], [C1, 0, S1]]
//! ```
//!
//! which are the same graph up to swapping the two trailing blocks. A model
//! cannot predict node 0 of both `G1*` and `G2*` the same as on `G1` and
//! `G2` if it separates `G1` from `G2`, so one of the two injections changes
//! its output.

use crate::dataset::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::graph::{check_permutation, Graph};
use crate::injection::{apply_injection, Injection};

/// `order[k]` is the old id of new node `k`: the shared node first, then the
/// rest in increasing id order.
fn shared_first(n: usize, shared: usize) -> Vec<usize> {
    std::iter::once(shared).chain((0..n).filter(|&v| v != shared)).collect()
}

/// Relabels a dataset so `shared` becomes node 0.
pub fn move_to_front(ds: &Dataset, shared: usize) -> Result<Dataset> {
    let n = ds.num_nodes();
    if shared >= n {
        return Err(Error::Dimension(format!("shared node {shared} out of range for {n} nodes")));
    }
    if ds.labels.len() != n {
        return Err(Error::Dimension("lemma construction needs every node labeled".into()));
    }
    let order = shared_first(n, shared);
    let mut perm = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        perm[old] = new;
    }
    let graph = ds.graph.permute(&perm)?;
    let features = ds.features.select_rows(&order);
    let labels = order.iter().map(|&old| ds.labels[old]).collect();
    let remap = |xs: &[usize]| {
        let mut v: Vec<usize> = xs.iter().map(|&x| perm[x]).collect();
        v.sort_unstable();
        v
    };
    let splits = Splits {
        train: remap(&ds.splits.train),
        val: remap(&ds.splits.val),
        test: remap(&ds.splits.test),
    };
    Dataset::new(graph, features, labels, splits, ds.num_classes)
}

/// The injection that appends every node of `donor` except its node 0 to a
/// graph whose node 0 is the shared node: edges from donor node 0 become
/// cross edges to node 0, the remaining donor edges become the internal
/// block.
pub fn donor_injection(donor: &Dataset) -> Injection {
    let n = donor.num_nodes();
    let cross_edges = donor.graph.neighbors(0).iter().map(|&j| (0, j - 1)).collect();
    let injected_adjacency = donor
        .graph
        .edges()
        .filter(|&(a, _)| a != 0)
        .map(|(a, b)| (a - 1, b - 1))
        .collect();
    let rest: Vec<usize> = (1..n).collect();
    Injection {
        n_injected: n - 1,
        cross_edges,
        injected_adjacency,
        injected_features: donor.features.select_rows(&rest),
    }
}

/// Returns `(G1*, G2*)`. Node 0 of both is the shared node.
pub fn build_lemma_graphs(g1: &Dataset, g2: &Dataset, shared: usize) -> Result<(Dataset, Dataset)> {
    if g1.feature_dim() != g2.feature_dim() {
        return Err(Error::Dimension(format!(
            "feature dimensions differ: {} vs {}",
            g1.feature_dim(),
            g2.feature_dim()
        )));
    }
    let a = move_to_front(g1, shared)?;
    let b = move_to_front(g2, shared)?;
    if a.features.row(0) != b.features.row(0) {
        return Err(Error::Dimension(format!(
            "node {shared} has different features in the two graphs"
        )));
    }
    let first = apply_injection(&a, &donor_injection(&b))?;
    let second = apply_injection(&b, &donor_injection(&a))?;
    Ok((first, second))
}

/// Maps node ids of `G1*` to node ids of `G2*` for graphs of `n1` and `n2`
/// nodes.
pub fn lemma_permutation(n1: usize, n2: usize) -> Vec<usize> {
    let mut perm = Vec::with_capacity(n1 + n2 - 1);
    perm.push(0);
    perm.extend((1..n1).map(|i| (n2 - 1) + i));
    perm.extend(1..n2);
    perm
}

/// True when relabeling `a` by `perm` reproduces `b` exactly: same edges,
/// and row `i` of `a`'s features equals row `perm[i]` of `b`'s.
pub fn isomorphic_under(a: &Dataset, b: &Dataset, perm: &[usize]) -> bool {
    if a.num_nodes() != b.num_nodes() || check_permutation(perm, a.num_nodes()).is_err() {
        return false;
    }
    let relabeled: Graph = match a.graph.permute(perm) {
        Ok(g) => g,
        Err(_) => return false,
    };
    relabeled == b.graph && (0..a.num_nodes()).all(|i| a.features.row(i) == b.features.row(perm[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn labeled(graph: Graph, features: Vec<Vec<f64>>) -> Dataset {
        let n = graph.num_nodes();
        Dataset::new(graph, Matrix::from_rows(&features).unwrap(), vec![0; n], Splits::default(), 1).unwrap()
    }

    #[test]
    fn path_and_star_combine_to_expected_size() {
        let path = labeled(
            Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap(),
            vec![vec![0.0], vec![1.0], vec![2.0]],
        );
        let star = labeled(
            Graph::from_edges(3, [(0, 1), (0, 2)]).unwrap(),
            vec![vec![0.0], vec![5.0], vec![6.0]],
        );
        let (a, b) = build_lemma_graphs(&path, &star, 0).unwrap();
        assert_eq!(a.num_nodes(), 5);
        assert_eq!(a.graph.degrees(), vec![3, 2, 1, 1, 1]);
        assert!(isomorphic_under(&a, &b, &lemma_permutation(3, 3)));
        // G1* restricted to its first three nodes is G1
        assert!(a.graph.has_edge(0, 1) && a.graph.has_edge(1, 2) && !a.graph.has_edge(0, 2));
    }

    #[test]
    fn identical_inputs_give_isomorphic_outputs() {
        let g = labeled(
            Graph::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap(),
            vec![vec![0.5], vec![1.0], vec![2.0], vec![3.0]],
        );
        let (a, b) = build_lemma_graphs(&g, &g, 2).unwrap();
        assert!(isomorphic_under(&a, &b, &lemma_permutation(4, 4)));
        assert_eq!(a, b);
    }

    #[test]
    fn feature_mismatch_is_rejected() {
        let g1 = labeled(Graph::empty(2), vec![vec![0.0], vec![1.0]]);
        let g2 = labeled(Graph::empty(2), vec![vec![0.0, 1.0], vec![1.0, 1.0]]);
        assert!(build_lemma_graphs(&g1, &g2, 0).is_err());
        let g3 = labeled(Graph::empty(2), vec![vec![9.0], vec![1.0]]);
        assert!(build_lemma_graphs(&g1, &g3, 0).is_err());
    }
}
