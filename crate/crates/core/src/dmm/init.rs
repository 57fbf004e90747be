//! Initial mixture parameters from per-frame peak angles.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::directional::argmax_by;
use crate::error::{Error, Result};
use crate::scalar::Real;

use super::{DmmParams, FeatureSet};

const MIN_TOTAL_CONCENTRATION: f64 = 1.0;
const MAX_TOTAL_CONCENTRATION: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// 1-D k-means on the peak angle of the device-averaged feature.
    PeakKmeans,
    /// Uniformly random frame assignment.
    Random,
}

/// Initial parameters: partition frames into `num_sources` clusters, then
/// moment-match a Dirichlet per cluster and device.
pub fn init_params<T: Real>(
    features: &FeatureSet<T>,
    num_sources: usize,
    strategy: InitStrategy,
    seed: u64,
) -> Result<DmmParams<T>> {
    let assignment = initial_assignment(features, num_sources, strategy, seed)?;
    params_from_assignment(features, num_sources, &assignment)
}

/// Cluster index per frame.
pub fn initial_assignment<T: Real>(
    features: &FeatureSet<T>,
    num_sources: usize,
    strategy: InitStrategy,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = features.num_frames();
    if num_sources == 0 {
        return Err(Error::InvalidParameter("number of sources must be positive".into()));
    }
    if n < num_sources {
        return Err(Error::InvalidParameter(format!(
            "{n} frames cannot support {num_sources} sources"
        )));
    }
    if strategy == InitStrategy::PeakKmeans {
        let peaks = averaged_peaks(features);
        if let Some(assignment) = kmeans_1d(&peaks, num_sources) {
            return Ok(assignment);
        }
    }
    Ok(random_assignment(n, num_sources, seed))
}

/// Argmax index of the device-averaged PMF, per frame.
pub fn averaged_peaks<T: Real>(features: &FeatureSet<T>) -> Vec<usize> {
    let dim = features.dim();
    let mut avg = vec![T::zero(); dim];
    (0..features.num_frames())
        .map(|n| {
            avg.iter_mut().for_each(|a| *a = T::zero());
            for p in 0..features.num_devices() {
                for (a, &v) in avg.iter_mut().zip(features.values(p, n)) {
                    *a = *a + v;
                }
            }
            argmax_by(&avg, |v| v)
        })
        .collect()
}

/// Optimal 1-D k-means over integer peak positions by dynamic programming
/// on the sorted distinct values. Clusters are numbered by increasing
/// centre. `None` when there are fewer distinct values than clusters.
fn kmeans_1d(peaks: &[usize], k: usize) -> Option<Vec<usize>> {
    let mut distinct: Vec<usize> = peaks.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let u = distinct.len();
    if u < k {
        return None;
    }
    let counts: Vec<f64> = distinct
        .iter()
        .map(|v| peaks.iter().filter(|&&p| p == *v).count() as f64)
        .collect();
    // prefix sums of weight, weight·x, weight·x²
    let mut w = vec![0.0; u + 1];
    let mut wx = vec![0.0; u + 1];
    let mut wxx = vec![0.0; u + 1];
    for i in 0..u {
        let x = distinct[i] as f64;
        w[i + 1] = w[i] + counts[i];
        wx[i + 1] = wx[i] + counts[i] * x;
        wxx[i + 1] = wxx[i] + counts[i] * x * x;
    }
    let sse = |a: usize, b: usize| {
        // values a..b (exclusive)
        let ww = w[b] - w[a];
        let sx = wx[b] - wx[a];
        (wxx[b] - wxx[a]) - sx * sx / ww
    };
    // cost[j][i]: best cost of splitting the first i values into j clusters
    let mut cost = vec![vec![f64::INFINITY; u + 1]; k + 1];
    let mut split = vec![vec![0usize; u + 1]; k + 1];
    cost[0][0] = 0.0;
    for j in 1..=k {
        for i in j..=u {
            for m in (j - 1)..i {
                let c = cost[j - 1][m] + sse(m, i);
                if c < cost[j][i] - 1e-12 {
                    cost[j][i] = c;
                    split[j][i] = m;
                }
            }
        }
    }
    let mut cluster_of_value = vec![0usize; u];
    let mut end = u;
    for j in (1..=k).rev() {
        let start = split[j][end];
        cluster_of_value[start..end].iter_mut().for_each(|c| *c = j - 1);
        end = start;
    }
    Some(
        peaks
            .iter()
            .map(|p| cluster_of_value[distinct.binary_search(p).expect("value present")])
            .collect(),
    )
}

/// Every cluster receives at least one frame.
fn random_assignment(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut assignment = vec![0; n];
    for (rank, &frame) in order.iter().enumerate() {
        assignment[frame] = rank % k;
    }
    assignment
}

/// Moment matching per cluster and device: `m_l` is the mean of `s_l`, `v`
/// the variance of `s_1`, `Σδ = m_1(1 − m_1)/v − 1` clamped to `[1, 1e4]`,
/// `δ_l = m_l·Σδ`; `π` follows the cluster sizes.
pub fn params_from_assignment<T: Real>(
    features: &FeatureSet<T>,
    num_sources: usize,
    assignment: &[usize],
) -> Result<DmmParams<T>> {
    let n = features.num_frames();
    let (p_count, dim) = (features.num_devices(), features.dim());
    let mut counts = vec![0usize; num_sources];
    for &a in assignment {
        counts[a] += 1;
    }
    if counts.contains(&0) {
        return Err(Error::InvalidParameter("initial assignment leaves a cluster empty".into()));
    }
    let pi = counts.iter().map(|&c| T::from_usize_lossy(c) / T::from_usize_lossy(n)).collect();
    let mut delta = Vec::with_capacity(num_sources * p_count * dim);
    for s in 0..num_sources {
        let members: Vec<usize> = (0..n).filter(|&i| assignment[i] == s).collect();
        for p in 0..p_count {
            delta.extend(moment_match(members.iter().map(|&i| features.values(p, i)), dim));
        }
    }
    DmmParams::new(pi, delta, num_sources, p_count, dim)
}

pub(crate) fn moment_match<'a, T: Real>(rows: impl Iterator<Item = &'a [T]> + Clone, dim: usize) -> Vec<T> {
    let mut mean = vec![T::zero(); dim];
    let mut count = 0usize;
    for row in rows.clone() {
        count += 1;
        for (m, &x) in mean.iter_mut().zip(row) {
            *m = *m + x;
        }
    }
    let cnt = T::from_usize_lossy(count.max(1));
    mean.iter_mut().for_each(|m| *m = *m / cnt);
    let var = rows.map(|r| (r[0] - mean[0]) * (r[0] - mean[0])).sum::<T>() / cnt;
    let total = if var > T::zero() {
        mean[0] * (T::one() - mean[0]) / var - T::one()
    } else {
        T::infinity()
    };
    let total = total
        .max(T::lit(MIN_TOTAL_CONCENTRATION))
        .min(T::lit(MAX_TOTAL_CONCENTRATION));
    mean.into_iter().map(|m| m * total).collect()
}
