//! Edge selection policies. Each returns `(target node, injected index)`
//! pairs with injected indices local to the batch (`0..b_seq`).

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;

/// Connects `b_seq` injected nodes to the `b_seq * d_eff` targets with the
/// highest score.
///
/// Targets are ranked by descending `mu`, ties to the smaller node id, and
/// dealt round-robin: the `k`-th pick goes to injected node `k % b_seq`.
/// When there are fewer targets than picks the ranking is cycled, and any
/// pick that would repeat a `(target, injected)` pair is dropped.
pub fn select_defective_edges(targets: &[usize], mu: &[f64], b_seq: usize, d_eff: usize) -> Vec<(usize, usize)> {
    assert_eq!(targets.len(), mu.len());
    if b_seq == 0 || targets.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..targets.len()).collect();
    order.sort_by(|&a, &b| mu[b].total_cmp(&mu[a]).then(targets[a].cmp(&targets[b])));
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(b_seq * d_eff);
    for k in 0..b_seq * d_eff {
        let t = targets[order[k % order.len()]];
        let inj = k % b_seq;
        if seen.insert((t, inj)) {
            out.push((t, inj));
        }
    }
    out
}

/// Spreads links evenly: targets sorted by id are walked from `cursor`, and
/// injected node `i` takes the next `d_eff` of them. Returns the edges and
/// the advanced cursor.
pub fn select_uniform_edges(
    targets: &[usize],
    b_seq: usize,
    d_eff: usize,
    cursor: usize,
) -> (Vec<(usize, usize)>, usize) {
    if b_seq == 0 || targets.is_empty() {
        return (Vec::new(), cursor);
    }
    let mut sorted = targets.to_vec();
    sorted.sort_unstable();
    let mut out = Vec::with_capacity(b_seq * d_eff);
    let mut seen = HashSet::new();
    for inj in 0..b_seq {
        for j in 0..d_eff {
            let t = sorted[(cursor + inj * d_eff + j) % sorted.len()];
            if seen.insert((t, inj)) {
                out.push((t, inj));
            }
        }
    }
    (out, (cursor + b_seq * d_eff) % sorted.len())
}

/// Each injected node links to `min(d_eff, |candidates|)` distinct
/// candidates drawn uniformly.
pub fn select_random_edges<R: Rng + ?Sized>(
    candidates: &[usize],
    b_seq: usize,
    d_eff: usize,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let k = d_eff.min(candidates.len());
    let mut out = Vec::with_capacity(b_seq * k);
    for inj in 0..b_seq {
        let mut picks: Vec<usize> = sample(rng, candidates.len(), k).into_iter().collect();
        picks.sort_unstable();
        out.extend(picks.into_iter().map(|i| (candidates[i], inj)));
    }
    out
}
