//! Seeded stochastic block model datasets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbmParams {
    /// Block sizes; block `k` is class `k`.
    pub sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Scale of the per-class mean vector before noise is added.
    pub class_signal_strength: f64,
    /// Half-width of the uniform per-entry noise.
    pub noise: f64,
    /// Features are rescaled into `[-feature_scale, feature_scale]`.
    pub feature_scale: f64,
    pub train_fraction: f64,
    pub val_fraction: f64,
}

impl Default for SbmParams {
    fn default() -> Self {
        SbmParams {
            sizes: vec![125; 4],
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 64,
            class_signal_strength: 1.0,
            noise: 6.0,
            feature_scale: 1.0,
            train_fraction: 0.2,
            val_fraction: 0.2,
        }
    }
}

impl SbmParams {
    /// `blocks` equal blocks covering `nodes` nodes (the first blocks absorb
    /// the remainder).
    pub fn with_nodes(nodes: usize, blocks: usize) -> Self {
        let blocks = blocks.max(1);
        let sizes = (0..blocks)
            .map(|k| nodes / blocks + usize::from(k < nodes % blocks))
            .collect();
        SbmParams {
            sizes,
            ..SbmParams::default()
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn check(&self) -> Result<()> {
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::Config("every block needs at least one node".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if !(self.feature_scale > 0.0) || !(self.noise >= 0.0) {
            return Err(Error::Config("feature_scale must be positive and noise non-negative".into()));
        }
        let f = self.train_fraction + self.val_fraction;
        if !(self.train_fraction > 0.0 && self.val_fraction > 0.0 && f < 1.0) {
            return Err(Error::Config(format!(
                "split fractions ({}, {}) must be positive and leave room for a test split",
                self.train_fraction, self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Samples a dataset. The same `(params, seed)` always yields the same
/// edges, features and splits.
pub fn synth_sbm(params: &SbmParams, seed: u64) -> Result<Dataset> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.num_nodes();
    // block k covers a contiguous range before relabeling
    let blocks: Vec<usize> = params
        .sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &s)| std::iter::repeat_n(k, s))
        .collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if blocks[u] == blocks[v] { params.p_in } else { params.p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    // random node ids, so id order carries no class information
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(&mut rng);
    let mut labels = vec![0; n];
    for (u, &b) in blocks.iter().enumerate() {
        labels[ids[u]] = b;
    }
    let edges = edges.into_iter().map(|(u, v)| (ids[u], ids[v]));
    let graph = Graph::from_edges(n, edges)?;

    let k = params.sizes.len();
    let d = params.feature_dim;
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..d)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();
    let mut raw = Matrix::zeros(n, d);
    for v in 0..n {
        let mean = &means[labels[v]];
        for (x, m) in raw.row_mut(v).iter_mut().zip(mean) {
            *x = m * params.class_signal_strength + rng.random_range(-1.0..=1.0) * params.noise;
        }
    }
    let peak = raw.as_slice().iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if peak > 0.0 {
        let scale = params.feature_scale;
        raw.map_inplace(|x| x / peak * scale);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = ((n as f64) * params.train_fraction).round() as usize;
    let n_val = ((n as f64) * params.val_fraction).round() as usize;
    let mut train = order[..n_train].to_vec();
    let mut val = order[n_train..n_train + n_val].to_vec();
    let mut test = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();

    Dataset::new(graph, raw, labels, Splits { train, val, test }, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complete_blocks_when_p_in_is_one() {
        let params = SbmParams {
            sizes: vec![3, 3],
            p_in: 1.0,
            p_out: 0.0,
            train_fraction: 0.34,
            val_fraction: 0.17,
            ..SbmParams::default()
        };
        let ds = synth_sbm(&params, 7).unwrap();
        assert_eq!(ds.graph.num_edges(), 6);
        for u in 0..6 {
            for v in 0..6 {
                let same = u != v && ds.labels[u] == ds.labels[v];
                assert_eq!(ds.graph.has_edge(u, v), same, "({u}, {v})");
            }
        }
        assert_eq!(ds.labels.iter().filter(|&&y| y == 0).count(), 3);
    }

    #[test]
    fn ids_do_not_follow_blocks() {
        let ds = synth_sbm(&SbmParams::default(), 0).unwrap();
        let sorted = ds.labels.windows(2).all(|w| w[0] <= w[1]);
        assert!(!sorted);
    }

    #[test]
    fn same_seed_same_dataset() {
        let p = SbmParams::with_nodes(120, 3);
        assert_eq!(synth_sbm(&p, 11).unwrap(), synth_sbm(&p, 11).unwrap());
        assert_ne!(synth_sbm(&p, 11).unwrap().features, synth_sbm(&p, 12).unwrap().features);
    }

    #[test]
    fn features_fill_symmetric_range() {
        let ds = synth_sbm(&SbmParams::with_nodes(100, 4), 3).unwrap();
        let (lo, hi) = ds.feature_range;
        assert!(lo >= -1.0 && hi <= 1.0);
        assert!(lo == -1.0 || hi == 1.0);
        let s = &ds.splits;
        assert_eq!(s.train.len() + s.val.len() + s.test.len(), 100);
    }

    #[test]
    fn rejects_bad_probabilities() {
        let p = SbmParams {
            p_in: 1.5,
            ..SbmParams::default()
        };
        assert!(synth_sbm(&p, 0).is_err());
    }
}
