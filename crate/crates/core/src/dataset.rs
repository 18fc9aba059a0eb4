//! Attributed graphs with labels and train/val/test splits, and the on-disk
//! dataset directory format.
//!
//! A dataset directory holds six plain-text files:
//!
//! | file              | contents                                   |
//! |-------------------|--------------------------------------------|
//! | `edges.csv`       | `u,v` per line (either direction suffices)  |
//! | `features.csv`    | one node per line, `D` comma-separated reals |
//! | `labels.csv`      | one class index per line                   |
//! | `split_train.csv` | one node index per line                    |
//! | `split_val.csv`   | one node index per line                    |
//! | `split_test.csv`  | one node index per line                    |
//!
//! The node count is the number of feature rows.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

pub const EDGES_FILE: &str = "edges.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const SPLIT_FILES: [&str; 3] = ["split_train.csv", "split_val.csv", "split_test.csv"];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    fn check(&self, n_labeled: usize) -> Result<()> {
        let mut owner = vec![None; n_labeled];
        for (name, idx) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in idx {
                if i >= n_labeled {
                    return Err(Error::Dimension(format!(
                        "{name} split index {i} out of range for {n_labeled} labeled nodes"
                    )));
                }
                if let Some(prev) = owner[i].replace(name) {
                    return Err(Error::Dimension(format!(
                        "node {i} appears in both {prev} and {name} splits"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An attributed graph. Labels cover the first `labels.len()` nodes; nodes
/// past that (injected ones) are unlabeled and belong to no split.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub graph: Graph,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub splits: Splits,
    pub num_classes: usize,
    pub feature_range: (f64, f64),
}

impl Dataset {
    /// Assembles a dataset and checks its invariants. `feature_range` is
    /// computed from the features.
    pub fn new(
        graph: Graph,
        features: Matrix,
        labels: Vec<usize>,
        splits: Splits,
        num_classes: usize,
    ) -> Result<Self> {
        let feature_range = features.min_max().unwrap_or((0.0, 0.0));
        let ds = Dataset {
            graph,
            features,
            labels,
            splits,
            num_classes,
            feature_range,
        };
        ds.check()?;
        Ok(ds)
    }

    pub fn check(&self) -> Result<()> {
        let n = self.graph.num_nodes();
        if self.features.rows() != n {
            return Err(Error::Dimension(format!(
                "{} feature rows for {n} nodes",
                self.features.rows()
            )));
        }
        if self.labels.len() > n {
            return Err(Error::Dimension(format!("{} labels for {n} nodes", self.labels.len())));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::Dimension(format!(
                "label {bad} out of range for {} classes",
                self.num_classes
            )));
        }
        self.splits.check(self.labels.len())
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    #[inline]
    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Target set of the attack: the test split.
    pub fn targets(&self) -> &[usize] {
        &self.splits.test
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();

        let features_path = dir.join(FEATURES_FILE);
        let mut rows = Vec::new();
        for (line_no, line) in read_lines(&features_path)? {
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::load(&features_path, line_no, format!("bad feature value: {e}")))?;
            if let Some(first) = rows.first() {
                let first: &Vec<f64> = first;
                if first.len() != row.len() {
                    return Err(Error::load(
                        &features_path,
                        line_no,
                        format!("expected {} columns, found {}", first.len(), row.len()),
                    ));
                }
            }
            if let Some(x) = row.iter().find(|x| !x.is_finite()) {
                return Err(Error::load(&features_path, line_no, format!("non-finite feature {x}")));
            }
            rows.push(row);
        }
        let n = rows.len();
        let features = Matrix::from_rows(&rows)?;

        let labels_path = dir.join(LABELS_FILE);
        let mut labels = Vec::with_capacity(n);
        for (line_no, line) in read_lines(&labels_path)? {
            let y = parse_index(&line, &labels_path, line_no)?;
            labels.push(y);
        }
        if labels.len() != n {
            return Err(Error::load(
                &labels_path,
                labels.len(),
                format!("{} labels for {n} feature rows", labels.len()),
            ));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);

        let edges_path = dir.join(EDGES_FILE);
        let mut edges = Vec::new();
        for (line_no, line) in read_lines(&edges_path)? {
            let mut parts = line.split(',');
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::load(&edges_path, line_no, "expected two columns"));
            };
            let u = parse_index(a, &edges_path, line_no)?;
            let v = parse_index(b, &edges_path, line_no)?;
            if u >= n || v >= n {
                return Err(Error::load(
                    &edges_path,
                    line_no,
                    format!("edge ({u}, {v}) references a node outside 0..{n}"),
                ));
            }
            edges.push((u, v));
        }
        let graph = Graph::from_edges(n, edges)?;

        let mut split_sets: [Vec<usize>; 3] = Default::default();
        for (slot, name) in split_sets.iter_mut().zip(SPLIT_FILES) {
            let path = dir.join(name);
            for (line_no, line) in read_lines(&path)? {
                let i = parse_index(&line, &path, line_no)?;
                if i >= n {
                    return Err(Error::load(&path, line_no, format!("index {i} out of range")));
                }
                slot.push(i);
            }
        }
        let [train, val, test] = split_sets;
        let splits = Splits { train, val, test };
        splits
            .check(n)
            .map_err(|e| Error::load(dir, 0, e.to_string()))?;

        Dataset::new(graph, features, labels, splits, num_classes)
    }

    /// Writes the dataset directory. Features use round-trip precision.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let mut edges = String::new();
        for (u, v) in self.graph.edges() {
            writeln!(edges, "{u},{v}").unwrap();
        }
        write_file(&dir.join(EDGES_FILE), &edges)?;

        let mut feats = String::new();
        for row in self.features.iter_rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            feats.push_str(&line.join(","));
            feats.push('\n');
        }
        write_file(&dir.join(FEATURES_FILE), &feats)?;

        write_file(&dir.join(LABELS_FILE), &index_lines(&self.labels))?;
        for (name, idx) in SPLIT_FILES
            .iter()
            .zip([&self.splits.train, &self.splits.val, &self.splits.test])
        {
            write_file(&dir.join(name), &index_lines(idx))?;
        }
        Ok(())
    }
}

fn index_lines(xs: &[usize]) -> String {
    let mut s = String::new();
    for x in xs {
        writeln!(s, "{x}").unwrap();
    }
    s
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Non-empty lines with 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_owned()))
        .collect())
}

fn parse_index(s: &str, path: &Path, line: usize) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|e| Error::load(path, line, format!("bad index {:?}: {e}", s.trim())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn fixture(dir: &Path, edges: &str, n: usize) {
        write(dir, EDGES_FILE, edges);
        write(dir, FEATURES_FILE, &"0.5,-0.5\n".repeat(n));
        write(dir, LABELS_FILE, &"0\n".repeat(n));
        write(dir, "split_train.csv", "0\n");
        write(dir, "split_val.csv", "");
        write(dir, "split_test.csv", &format!("{}\n", n - 1));
    }

    #[test]
    fn loads_path_graph() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), "0,1\n1,2\n", 3);
        let ds = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.graph.degrees(), vec![1, 2, 1]);
        assert_eq!(ds.feature_range, (-0.5, 0.5));
        assert_eq!(ds.num_classes, 1);
    }

    #[test]
    fn loads_edgeless_graph() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), "", 2);
        let ds = Dataset::load(dir.path()).unwrap();
        assert_eq!(ds.graph.degrees(), vec![0, 0]);
    }

    #[test]
    fn directed_edge_list_is_symmetrized() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), "0,1\n", 2);
        let ds = Dataset::load(dir.path()).unwrap();
        assert!(ds.graph.has_edge(1, 0));
        let out = tempfile::tempdir().unwrap();
        ds.save(out.path()).unwrap();
        let again = Dataset::load(out.path()).unwrap();
        assert_eq!(again, ds);
        assert_eq!(fs::read_to_string(out.path().join(EDGES_FILE)).unwrap(), "0,1\n");
    }

    #[test]
    fn errors_name_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), "0,1\n1,x\n", 3);
        let err = Dataset::load(dir.path()).unwrap_err().to_string();
        assert!(err.contains("edges.csv:2"), "{err}");

        fixture(dir.path(), "0,1\n", 3);
        write(dir.path(), FEATURES_FILE, "0.1,0.2\n0.3\n0.1,0.1\n");
        let err = Dataset::load(dir.path()).unwrap_err().to_string();
        assert!(err.contains("features.csv:2"), "{err}");

        fs::remove_file(dir.path().join(LABELS_FILE)).unwrap();
        write(dir.path(), FEATURES_FILE, "0.1\n0.1\n0.1\n");
        let err = Dataset::load(dir.path()).unwrap_err().to_string();
        assert!(err.contains("labels.csv"), "{err}");
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), "", 3);
        write(dir.path(), "split_val.csv", "0\n");
        assert!(Dataset::load(dir.path()).is_err());
    }
}
