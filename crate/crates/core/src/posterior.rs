//! Posterior summaries of a chain: co-clustering probabilities, a point
//! estimate of the partition under variation-of-information loss, position
//! densities of the ordering and scalar statistics.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PosteriorError {
    #[error("no samples")]
    Empty,
    #[error("sample {index} has length {found}, expected {expected}")]
    LengthMismatch { index: usize, expected: usize, found: usize },
    #[error("sample {0} is not a permutation")]
    NotPermutation(usize),
}

fn check_lengths(samples: &[Vec<usize>]) -> Result<usize, PosteriorError> {
    let n = samples.first().ok_or(PosteriorError::Empty)?.len();
    for (index, s) in samples.iter().enumerate() {
        if s.len() != n {
            return Err(PosteriorError::LengthMismatch { index, expected: n, found: s.len() });
        }
    }
    Ok(n)
}

/// Relabels to `0..K` in order of first appearance.
pub fn compact_labels(z: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    z.iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Fraction of samples in which each pair of nodes shares a group.
pub fn similarity_matrix(samples: &[Vec<usize>]) -> Result<Vec<Vec<f64>>, PosteriorError> {
    let n = check_lengths(samples)?;
    let mut counts = vec![vec![0u64; n]; n];
    for z in samples {
        for p in 0..n {
            for q in p..n {
                if z[p] == z[q] {
                    counts[p][q] += 1;
                }
            }
        }
    }
    let s = samples.len() as f64;
    let mut out = vec![vec![0.0; n]; n];
    for p in 0..n {
        for q in p..n {
            let v = counts[p][q] as f64 / s;
            out[p][q] = v;
            out[q][p] = v;
        }
    }
    Ok(out)
}

#[inline]
fn xlnx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Variation of information between two partitions, in nats.
pub fn vi_distance(z1: &[usize], z2: &[usize]) -> Result<f64, PosteriorError> {
    if z1.len() != z2.len() {
        return Err(PosteriorError::LengthMismatch { index: 1, expected: z1.len(), found: z2.len() });
    }
    let n = z1.len();
    if n == 0 {
        return Ok(0.0);
    }
    let (a, b) = (compact_labels(z1), compact_labels(z2));
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut joint = vec![0u64; ka * kb];
    let mut ra = vec![0u64; ka];
    let mut rb = vec![0u64; kb];
    for (&i, &j) in a.iter().zip(&b) {
        joint[i * kb + j] += 1;
        ra[i] += 1;
        rb[j] += 1;
    }
    let s = |v: &[u64]| v.iter().map(|&c| xlnx(c as f64)).sum::<f64>();
    let vi = (s(&ra) + s(&rb) - 2.0 * s(&joint)) / n as f64;
    Ok(vi.max(0.0))
}

/// Mean variation of information between `estimate` and the samples.
pub fn expected_vi(estimate: &[usize], samples: &[Vec<usize>]) -> Result<f64, PosteriorError> {
    check_lengths(samples)?;
    let mut total = 0.0;
    for s in samples {
        total += vi_distance(estimate, s)?;
    }
    Ok(total / samples.len() as f64)
}

/// Adjusted Rand index between two partitions.
pub fn adjusted_rand_index(z1: &[usize], z2: &[usize]) -> Result<f64, PosteriorError> {
    if z1.len() != z2.len() {
        return Err(PosteriorError::LengthMismatch { index: 1, expected: z1.len(), found: z2.len() });
    }
    let (a, b) = (compact_labels(z1), compact_labels(z2));
    let n = a.len();
    if n < 2 {
        return Ok(1.0);
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut joint = vec![0u64; ka * kb];
    let mut ra = vec![0u64; ka];
    let mut rb = vec![0u64; kb];
    for (&i, &j) in a.iter().zip(&b) {
        joint[i * kb + j] += 1;
        ra[i] += 1;
        rb[j] += 1;
    }
    let c2 = |c: u64| (c * c.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = joint.iter().map(|&c| c2(c)).sum();
    let sa: f64 = ra.iter().map(|&c| c2(c)).sum();
    let sb: f64 = rb.iter().map(|&c| c2(c)).sum();
    let expected = sa * sb / c2(n as u64);
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        return Ok(if (index - expected).abs() < 1e-12 { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / (max - expected))
}

/// Contingency counts of a candidate partition against every sample,
/// updated one node at a time.
struct SalsoState<'a> {
    samples: &'a [Vec<usize>],
    offsets: Vec<usize>,
    width: usize,
    /// `table[c][offsets[s] + j]`: nodes in candidate group `c` and group `j`
    /// of sample `s`.
    table: Vec<Vec<u32>>,
    sizes: Vec<u32>,
    labels: Vec<usize>,
}

const UNSET: usize = usize::MAX;

impl<'a> SalsoState<'a> {
    fn new(samples: &'a [Vec<usize>], n: usize) -> Self {
        let mut offsets = Vec::with_capacity(samples.len());
        let mut width = 0;
        for s in samples {
            offsets.push(width);
            width += s.iter().max().map_or(0, |m| m + 1);
        }
        Self { samples, offsets, width, table: Vec::new(), sizes: Vec::new(), labels: vec![UNSET; n] }
    }

    /// Change in the label-dependent part of the loss from adding `node` to
    /// group `c` (or a new group when `c == sizes.len()`).
    fn add_cost(&self, node: usize, c: usize) -> f64 {
        let s_count = self.samples.len() as f64;
        if c == self.sizes.len() {
            return 0.0;
        }
        let b = self.sizes[c] as f64;
        let mut joint = 0.0;
        let row = &self.table[c];
        for (s, z) in self.samples.iter().enumerate() {
            let v = row[self.offsets[s] + z[node]] as f64;
            joint += xlnx(v + 1.0) - xlnx(v);
        }
        xlnx(b + 1.0) - xlnx(b) - 2.0 * joint / s_count
    }

    fn add(&mut self, node: usize, c: usize) {
        if c == self.sizes.len() {
            self.sizes.push(0);
            self.table.push(vec![0; self.width]);
        }
        self.sizes[c] += 1;
        for (s, z) in self.samples.iter().enumerate() {
            self.table[c][self.offsets[s] + z[node]] += 1;
        }
        self.labels[node] = c;
    }

    fn remove(&mut self, node: usize) {
        let c = self.labels[node];
        self.sizes[c] -= 1;
        for (s, z) in self.samples.iter().enumerate() {
            self.table[c][self.offsets[s] + z[node]] -= 1;
        }
        self.labels[node] = UNSET;
    }

    /// Best group for `node`, ties to the smaller label. Empty groups are
    /// skipped; a new group is offered while fewer than `max_k` are in use.
    fn best(&self, node: usize, max_k: usize) -> usize {
        let used = self.sizes.iter().filter(|&&s| s > 0).count();
        let mut best = (f64::INFINITY, UNSET);
        for c in 0..self.sizes.len() {
            if self.sizes[c] == 0 {
                continue;
            }
            let cost = self.add_cost(node, c);
            if cost < best.0 - 1e-12 {
                best = (cost, c);
            }
        }
        if used < max_k {
            // reuse the first empty slot for a fresh group
            let slot = self.sizes.iter().position(|&s| s == 0).unwrap_or(self.sizes.len());
            if 0.0 < best.0 - 1e-12 || best.1 == UNSET {
                best = (0.0, slot);
            }
        }
        best.1
    }

    fn sweep_to_local_min(&mut self, order: &[usize], max_k: usize) {
        for _ in 0..1000 {
            let mut changed = false;
            for &node in order {
                let old = self.labels[node];
                self.remove(node);
                let c = self.best(node, max_k);
                self.add(node, c);
                if c != old {
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
}

/// Partition minimising the sample-averaged variation of information, found
/// by sequential greedy allocation plus reallocation sweeps from `runs`
/// random node orders, and by sweeps started at the best sampled partition.
/// `max_k` defaults to the largest sampled number of groups.
pub fn salso_estimate(
    samples: &[Vec<usize>],
    max_k: Option<usize>,
    runs: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, PosteriorError> {
    let n = check_lengths(samples)?;
    if n == 0 {
        return Ok(Vec::new());
    }
    let compacted: Vec<Vec<usize>> = samples.iter().map(|s| compact_labels(s)).collect();
    let max_k = max_k
        .unwrap_or_else(|| compacted.iter().map(|s| s.iter().max().unwrap() + 1).max().unwrap())
        .max(1);

    let mut best: Option<(f64, Vec<usize>)> = None;
    let consider = |z: Vec<usize>, best: &mut Option<(f64, Vec<usize>)>| {
        let z = compact_labels(&z);
        let loss = expected_vi(&z, &compacted).expect("lengths checked");
        if best.as_ref().is_none_or(|(l, _)| loss < *l - 1e-12) {
            *best = Some((loss, z));
        }
    };

    for _ in 0..runs.max(1) {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut st = SalsoState::new(&compacted, n);
        for &node in &order {
            let c = st.best(node, max_k);
            st.add(node, c);
        }
        order.shuffle(rng);
        st.sweep_to_local_min(&order, max_k);
        consider(st.labels.clone(), &mut best);
    }

    // sampled partitions as candidates, then polished
    let mut distinct: Vec<&Vec<usize>> = compacted.iter().collect();
    distinct.sort();
    distinct.dedup();
    const MAX_CANDIDATES: usize = 200;
    let stride = distinct.len().div_ceil(MAX_CANDIDATES).max(1);
    let mut best_sample: Option<(f64, Vec<usize>)> = None;
    for cand in distinct.iter().step_by(stride) {
        if cand.iter().max().unwrap() + 1 > max_k {
            continue;
        }
        consider((*cand).clone(), &mut best_sample);
    }
    if let Some((_, cand)) = best_sample.clone() {
        let mut st = SalsoState::new(&compacted, n);
        for (node, &c) in cand.iter().enumerate() {
            st.add(node, c);
        }
        let order: Vec<usize> = (0..n).collect();
        st.sweep_to_local_min(&order, max_k);
        consider(st.labels.clone(), &mut best);
        let (loss, z) = best_sample.unwrap();
        if best.as_ref().is_none_or(|(l, _)| loss < *l - 1e-12) {
            best = Some((loss, z));
        }
    }
    Ok(best.expect("at least one run").1)
}

/// Position densities of an ordering chain.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingDensity {
    /// `density[node][position]`.
    pub density: Vec<Vec<f64>>,
    pub mean_position: Vec<f64>,
}

impl OrderingDensity {
    /// Nodes sorted by mean position, ties by index.
    pub fn rows_by_mean_position(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.mean_position.len()).collect();
        idx.sort_by(|&a, &b| self.mean_position[a].total_cmp(&self.mean_position[b]).then(a.cmp(&b)));
        idx
    }
}

/// Fraction of samples putting each node at each position, from
/// `sigma[position] = node` samples.
pub fn ordering_density(sigmas: &[Vec<usize>]) -> Result<OrderingDensity, PosteriorError> {
    let n = check_lengths(sigmas)?;
    let mut counts = vec![vec![0u64; n]; n];
    for (i, s) in sigmas.iter().enumerate() {
        let mut seen = vec![false; n];
        for (pos, &node) in s.iter().enumerate() {
            if node >= n || seen[node] {
                return Err(PosteriorError::NotPermutation(i));
            }
            seen[node] = true;
            counts[node][pos] += 1;
        }
    }
    let total = sigmas.len() as f64;
    let density: Vec<Vec<f64>> = counts.iter().map(|row| row.iter().map(|&c| c as f64 / total).collect()).collect();
    let mean_position = counts
        .iter()
        .map(|row| row.iter().enumerate().map(|(r, &c)| r as f64 * c as f64).sum::<f64>() / total)
        .collect();
    Ok(OrderingDensity { density, mean_position })
}

/// Mean, standard deviation and quantiles of a scalar chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarSummary {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
}

/// Linearly interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize_scalar(xs: &[f64]) -> Option<ScalarSummary> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(ScalarSummary {
        count: xs.len(),
        mean,
        sd,
        q025: quantile(&sorted, 0.025),
        median: quantile(&sorted, 0.5),
        q975: quantile(&sorted, 0.975),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::PyParams;
    use crate::sampler::sample_crp;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn similarity_examples() {
        let m = similarity_matrix(&[vec![0, 0, 1]]).unwrap();
        assert_eq!(m, vec![vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let m = similarity_matrix(&[vec![0, 0], vec![0, 1]]).unwrap();
        assert_eq!(m[0][1], 0.5);
        assert_eq!(similarity_matrix(&[]).unwrap_err(), PosteriorError::Empty);
        assert!(similarity_matrix(&[vec![0], vec![0, 1]]).is_err());
    }

    #[test]
    fn crp_coclustering() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let py = PyParams::Infinite { alpha: 0.0, theta: 1.0 };
        let samples: Vec<Vec<usize>> = (0..10_000).map(|_| sample_crp(2, &py, &mut rng).labels().to_vec()).collect();
        let m = similarity_matrix(&samples).unwrap();
        let se = (0.25f64 / 10_000.0).sqrt();
        assert!((m[0][1] - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn vi_examples() {
        assert_eq!(vi_distance(&[0, 1, 1], &[5, 2, 2]).unwrap(), 0.0);
        assert!((vi_distance(&[0, 0], &[0, 1]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(vi_distance(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn ari_examples() {
        assert!((adjusted_rand_index(&[0, 0, 1, 1], &[1, 1, 0, 0]).unwrap() - 1.0).abs() < 1e-12);
        let ari = adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert!(ari < 0.0);
        assert_eq!(adjusted_rand_index(&[0, 0, 0], &[0, 0, 0]).unwrap(), 1.0);
    }

    fn partition(n: usize) -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(0..4usize, n)
    }

    proptest! {
        #[test]
        fn vi_metric(a in partition(10), b in partition(10), c in partition(10)) {
            let ab = vi_distance(&a, &b).unwrap();
            let ba = vi_distance(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            let ac = vi_distance(&a, &c).unwrap();
            let bc = vi_distance(&b, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert_eq!(ab < 1e-12, compact_labels(&a) == compact_labels(&b));
        }

        #[test]
        fn vi_label_invariant(a in partition(8), b in partition(8), shift in 1usize..5) {
            let relabeled: Vec<usize> = a.iter().map(|&l| (l + shift) * 7).collect();
            prop_assert!((vi_distance(&a, &b).unwrap() - vi_distance(&relabeled, &b).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn similarity_properties(samples in prop::collection::vec(partition(6), 1..20)) {
            let m = similarity_matrix(&samples).unwrap();
            for p in 0..6 {
                prop_assert_eq!(m[p][p], 1.0);
                for q in 0..6 {
                    prop_assert_eq!(m[p][q], m[q][p]);
                    prop_assert!((0.0..=1.0).contains(&m[p][q]));
                }
            }
        }

        #[test]
        fn salso_beats_samples(samples in prop::collection::vec(partition(7), 1..15), seed in 0u64..100) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let est = salso_estimate(&samples, None, 4, &mut rng).unwrap();
            let loss = expected_vi(&est, &samples).unwrap();
            for s in &samples {
                prop_assert!(loss <= expected_vi(s, &samples).unwrap() + 1e-12);
            }
        }
    }

    #[test]
    fn salso_identical_samples() {
        let p = vec![0, 0, 1, 2, 1, 2, 0];
        let samples = vec![p.clone(); 20];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let est = salso_estimate(&samples, None, 16, &mut rng).unwrap();
        assert_eq!(est, compact_labels(&p));
    }

    #[test]
    fn salso_two_modes() {
        let a = vec![0, 0, 0, 1, 1, 1, 2, 2];
        let b = vec![0, 0, 1, 1, 1, 2, 2, 2];
        let d = vi_distance(&a, &b).unwrap();
        let samples: Vec<Vec<usize>> = (0..40).map(|i| if i % 2 == 0 { a.clone() } else { b.clone() }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let est = salso_estimate(&samples, None, 16, &mut rng).unwrap();
        assert!(expected_vi(&est, &samples).unwrap() <= d / 2.0 + 1e-12);
    }

    #[test]
    fn salso_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let py = PyParams::Infinite { alpha: 0.2, theta: 1.0 };
        let samples: Vec<Vec<usize>> = (0..30).map(|_| sample_crp(9, &py, &mut rng).labels().to_vec()).collect();
        let e1 = salso_estimate(&samples, None, 8, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let e2 = salso_estimate(&samples, None, 8, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn ordering_density_examples() {
        let d = ordering_density(&[vec![2, 0, 1]]).unwrap();
        assert_eq!(d.density, vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]);
        assert_eq!(d.mean_position, vec![1.0, 2.0, 0.0]);
        assert_eq!(d.rows_by_mean_position(), vec![2, 0, 1]);
        let d = ordering_density(&[vec![0, 1, 2], vec![1, 2, 0], vec![2, 1, 0]]).unwrap();
        for row in &d.density {
            assert_eq!(row.iter().sum::<f64>(), 1.0);
        }
        assert!(ordering_density(&[vec![0, 0]]).is_err());
    }

    #[test]
    fn scalar_summary() {
        let s = summarize_scalar(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.median, 3.0);
        assert!((s.q025 - 1.1).abs() < 1e-12);
        assert!((s.sd - 2.5f64.sqrt()).abs() < 1e-12);
        assert!(summarize_scalar(&[]).is_none());
    }
}
