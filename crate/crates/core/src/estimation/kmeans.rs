//! One-dimensional k-means for quantizing appliance traces into energy levels.
//!
//! Traces are quantized by *exact* k-means: clusters of an optimal 1-D
//! clustering are contiguous runs of the sorted distinct values, so the
//! optimum is found by dynamic programming over split points (with the
//! classic divide-and-conquer argmin speedup, O(K m log m) for m distinct
//! values). Appliance traces rarely hold more than a handful of distinct
//! levels per state, so m stays tiny in practice; for pathological inputs
//! with more than [`EXACT_DISTINCT_LIMIT`] distinct values the code falls
//! back to Lloyd iterations seeded at evenly spaced quantiles, bounded by the
//! caller's iteration and movement-tolerance limits.

use crate::error::{Error, Result};

/// Above this many distinct values, fall back from the exact DP to Lloyd.
pub const EXACT_DISTINCT_LIMIT: usize = 65_536;

/// A quantized appliance trace: per-step state labels and the per-state mean
/// energy levels, strictly increasing so state 0 is always the lowest level.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantization {
    pub labels: Vec<usize>,
    pub means: Vec<f64>,
    /// `Some(requested)` when fewer distinct values than requested states
    /// forced a smaller K; `means.len()` is the K actually used.
    pub reduced_from: Option<usize>,
}

impl Quantization {
    pub fn num_states(&self) -> usize {
        self.means.len()
    }
}

/// Quantizes a trace into at most `k` energy levels.
///
/// The returned means minimize the within-cluster sum of squares exactly
/// (for inputs within [`EXACT_DISTINCT_LIMIT`] distinct values); labels map
/// each sample to its nearest mean, breaking distance ties toward the lower
/// state index. When the trace holds fewer distinct values than `k`, the
/// distinct values themselves become the levels and the reduction is
/// reported through [`Quantization::reduced_from`].
pub fn quantize_appliance(
    series: &[f64],
    k: usize,
    lloyd_max_iter: usize,
    lloyd_tol: f64,
) -> Result<Quantization> {
    if series.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot quantize an empty series".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidParameter(
            "quantization needs at least one state".into(),
        ));
    }
    for (t, &v) in series.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "series value at step {t} is {v}"
            )));
        }
    }

    // Collapse to sorted distinct values with multiplicities; k-means cost
    // only depends on these.
    let mut sorted: Vec<f64> = series.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut values: Vec<f64> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for &v in &sorted {
        if values.last() == Some(&v) {
            *weights.last_mut().unwrap() += 1.0;
        } else {
            values.push(v);
            weights.push(1.0);
        }
    }
    let m = values.len();

    let (means, reduced_from) = if m <= k {
        // Each distinct value is its own level; zero cost is trivially optimal.
        (values.clone(), (m < k).then_some(k))
    } else if m <= EXACT_DISTINCT_LIMIT {
        (exact_1d_kmeans(&values, &weights, k), None)
    } else {
        let centers = lloyd(&values, &weights, k, lloyd_max_iter, lloyd_tol);
        let reduced = centers.len() < k;
        (centers, reduced.then_some(k))
    };

    // Label every sample by its nearest level. In one dimension the nearest
    // level is determined by midpoint boundaries; a sample exactly on a
    // midpoint goes to the lower state.
    let midpoints: Vec<f64> = means.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    let labels = series
        .iter()
        .map(|&v| midpoints.partition_point(|&b| b < v))
        .collect();

    Ok(Quantization {
        labels,
        means,
        reduced_from,
    })
}

/// Weighted sum-of-squares cost of grouping `values[i..=j]` into one cluster,
/// from prefix sums. Clamped at zero against cancellation noise.
struct CostFn {
    w: Vec<f64>,
    wv: Vec<f64>,
    wv2: Vec<f64>,
}

impl CostFn {
    fn new(values: &[f64], weights: &[f64]) -> Self {
        let m = values.len();
        let mut w = vec![0.0; m + 1];
        let mut wv = vec![0.0; m + 1];
        let mut wv2 = vec![0.0; m + 1];
        for i in 0..m {
            w[i + 1] = w[i] + weights[i];
            wv[i + 1] = wv[i] + weights[i] * values[i];
            wv2[i + 1] = wv2[i] + weights[i] * values[i] * values[i];
        }
        CostFn { w, wv, wv2 }
    }

    fn cost(&self, i: usize, j: usize) -> f64 {
        let w = self.w[j + 1] - self.w[i];
        let s = self.wv[j + 1] - self.wv[i];
        let s2 = self.wv2[j + 1] - self.wv2[i];
        (s2 - s * s / w).max(0.0)
    }

    fn mean(&self, i: usize, j: usize) -> f64 {
        (self.wv[j + 1] - self.wv[i]) / (self.w[j + 1] - self.w[i])
    }
}

/// Exact weighted 1-D k-means over `m > k` distinct ascending values.
/// Returns the k cluster means (strictly increasing because the clusters are
/// non-empty contiguous runs of distinct values).
fn exact_1d_kmeans(values: &[f64], weights: &[f64], k: usize) -> Vec<f64> {
    let m = values.len();
    let cf = CostFn::new(values, weights);

    // dp[j] = optimal cost of clustering values[0..=j] into `c` clusters;
    // back[c][j] = first index of the last cluster in that optimum.
    let mut dp: Vec<f64> = (0..m).map(|j| cf.cost(0, j)).collect();
    let mut back = vec![vec![0usize; m]; k];
    for (c, row) in back.iter_mut().enumerate().skip(1) {
        let mut next = vec![f64::INFINITY; m];
        // The optimal split index is nondecreasing in j, so each layer fills
        // by divide and conquer instead of scanning every split.
        fill_layer(&cf, &dp, &mut next, row, c, c, m - 1, c, m - 1);
        dp = next;
    }

    let mut bounds = vec![0usize; k + 1];
    bounds[k] = m;
    let mut j = m - 1;
    for c in (1..k).rev() {
        let s = back[c][j];
        bounds[c] = s;
        j = s - 1;
    }
    (0..k).map(|c| cf.mean(bounds[c], bounds[c + 1] - 1)).collect()
}

/// Fills `next[lo..=hi]` (costs of ending a `c+1`-th... cluster at each j)
/// knowing every optimal split lies within `[slo, shi]`.
#[allow(clippy::too_many_arguments)]
fn fill_layer(
    cf: &CostFn,
    prev: &[f64],
    next: &mut [f64],
    back: &mut [usize],
    c: usize,
    lo: usize,
    hi: usize,
    slo: usize,
    shi: usize,
) {
    if lo > hi {
        return;
    }
    let mid = lo + (hi - lo) / 2;
    let mut best = f64::INFINITY;
    let mut best_s = slo.max(c);
    for s in slo.max(c)..=shi.min(mid) {
        let cand = prev[s - 1] + cf.cost(s, mid);
        if cand < best {
            best = cand;
            best_s = s;
        }
    }
    next[mid] = best;
    back[mid] = best_s;
    if mid > lo {
        fill_layer(cf, prev, next, back, c, lo, mid - 1, slo, best_s);
    }
    if mid < hi {
        fill_layer(cf, prev, next, back, c, mid + 1, hi, best_s, shi);
    }
}

/// Lloyd iterations over weighted distinct values, seeded at the
/// `(j + 1/2)/k` quantiles of the sample distribution. Converges when no
/// center moves more than `tol` or after `max_iter` rounds; coincident
/// centers are merged afterwards, which can shrink K.
fn lloyd(values: &[f64], weights: &[f64], k: usize, max_iter: usize, tol: f64) -> Vec<f64> {
    let cf = CostFn::new(values, weights);
    let total = *cf.w.last().unwrap();

    // Weighted quantile seeding: center j sits at the smallest value whose
    // cumulative weight reaches (j + 1/2)/k of the total.
    let mut centers: Vec<f64> = (0..k)
        .map(|j| {
            let target = (j as f64 + 0.5) / k as f64 * total;
            let idx = cf.w[1..].partition_point(|&c| c < target).min(values.len() - 1);
            values[idx]
        })
        .collect();

    for _ in 0..max_iter {
        let mut moved: f64 = 0.0;
        let mut start = 0usize; // first distinct value of the current cluster
        let mut updated = centers.clone();
        for j in 0..k {
            // Values nearer to centers[j] than centers[j+1]; midpoint ties
            // fall to the lower cluster.
            let end = if j + 1 < k {
                let b = 0.5 * (centers[j] + centers[j + 1]);
                values.partition_point(|&v| v <= b)
            } else {
                values.len()
            };
            if end > start {
                updated[j] = cf.mean(start, end - 1);
            } // An empty interval keeps its previous center.
            moved = moved.max((updated[j] - centers[j]).abs());
            start = end;
        }
        centers = updated;
        if moved <= tol {
            break;
        }
    }
    centers.dedup();
    centers
}
