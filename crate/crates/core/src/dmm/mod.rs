//! Joint Dirichlet mixture over the directional statistics of all devices,
//! fitted by expectation-maximization.
//!
//! Frame `n` is generated by one latent source `s` with prior `π_s`; given
//! the source, device `p` emits its PMF from `Dir(δ_sp)` independently of
//! the other devices. All mixture arithmetic is done in log space.

mod dirichlet;
mod init;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::directional::DirectionalStatistic;
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Real};

pub use dirichlet::{
    dirichlet_log_pdf, fit_from_mean_log, log_normalizer, m_step_delta, mean_log_likelihood, sample_dirichlet,
    stationarity_residual, weighted_mean_log, DeltaFit, DeltaSolver, DeltaSolverConfig,
};
pub use init::{averaged_peaks, init_params, initial_assignment, params_from_assignment, InitStrategy};

/// Components whose weight falls below this are reinitialized.
pub const DEATH_THRESHOLD: f64 = 1e-8;

/// Directional statistics of `P` devices over `N` common frames, each a
/// strictly positive length-`L` PMF.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    num_devices: usize,
    num_frames: usize,
    dim: usize,
    /// `device × frame × L`
    values: Vec<T>,
    log_values: Vec<T>,
}

impl<T: Real> FeatureSet<T> {
    /// `per_device[p][n]` is the PMF of device `p` at frame `n`.
    pub fn from_values(per_device: Vec<Vec<Vec<T>>>) -> Result<Self> {
        let num_devices = per_device.len();
        if num_devices == 0 {
            return Err(Error::InvalidParameter("no devices".into()));
        }
        let num_frames = per_device[0].len();
        if num_frames == 0 || per_device.iter().any(|d| d.len() != num_frames) {
            return Err(Error::InvalidParameter("devices must share a non-zero frame count".into()));
        }
        let dim = per_device[0][0].len();
        let mut values = Vec::with_capacity(num_devices * num_frames * dim);
        for row in per_device.iter().flatten() {
            if row.len() != dim {
                return Err(Error::InvalidParameter("feature dimension mismatch".into()));
            }
            if row.iter().any(|&x| !(x > T::zero()) || !x.is_finite()) {
                return Err(Error::InvalidParameter("features must be strictly positive".into()));
            }
            values.extend_from_slice(row);
        }
        let log_values = values.iter().map(|x| x.ln()).collect();
        Ok(Self {
            num_devices,
            num_frames,
            dim,
            values,
            log_values,
        })
    }

    /// Truncates every device to the shortest frame count.
    pub fn from_statistics(per_device: &[Vec<DirectionalStatistic<T>>]) -> Result<Self> {
        let n = per_device.iter().map(Vec::len).min().unwrap_or(0);
        Self::from_values(
            per_device
                .iter()
                .map(|d| d[..n].iter().map(|s| s.values.clone()).collect())
                .collect(),
        )
    }

    pub fn num_devices(&self) -> usize {
        self.num_devices
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self, device: usize, frame: usize) -> &[T] {
        let i = (device * self.num_frames + frame) * self.dim;
        &self.values[i..i + self.dim]
    }

    pub fn log_values(&self, device: usize, frame: usize) -> &[T] {
        let i = (device * self.num_frames + frame) * self.dim;
        &self.log_values[i..i + self.dim]
    }

    /// Keeps only the listed frames, in order.
    pub fn select_frames(&self, frames: &[usize]) -> Result<Self> {
        Self::from_values(
            (0..self.num_devices)
                .map(|p| frames.iter().map(|&n| self.values(p, n).to_vec()).collect())
                .collect(),
        )
    }
}

/// Mixture weights `π` and concentrations `δ_sp`.
#[derive(Debug, Clone, PartialEq)]
pub struct DmmParams<T> {
    num_sources: usize,
    num_devices: usize,
    dim: usize,
    pi: Vec<T>,
    /// `source × device × L`
    delta: Vec<T>,
}

impl<T: Real> DmmParams<T> {
    pub fn new(pi: Vec<T>, delta: Vec<T>, num_sources: usize, num_devices: usize, dim: usize) -> Result<Self> {
        if num_sources == 0 || num_devices == 0 || dim == 0 {
            return Err(Error::InvalidParameter("empty mixture shape".into()));
        }
        if pi.len() != num_sources || delta.len() != num_sources * num_devices * dim {
            return Err(Error::InvalidParameter("parameter shape mismatch".into()));
        }
        if pi.iter().any(|&p| !(p > T::zero())) {
            return Err(Error::InvalidParameter("mixture weights must be positive".into()));
        }
        let total: T = pi.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-6) {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
        }
        dirichlet::check_concentration(&delta)?;
        Ok(Self {
            num_sources,
            num_devices,
            dim,
            pi,
            delta,
        })
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn num_devices(&self) -> usize {
        self.num_devices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pi(&self) -> &[T] {
        &self.pi
    }

    pub fn delta(&self, source: usize, device: usize) -> &[T] {
        let i = (source * self.num_devices + device) * self.dim;
        &self.delta[i..i + self.dim]
    }

    fn delta_mut(&mut self, source: usize, device: usize) -> &mut [T] {
        let i = (source * self.num_devices + device) * self.dim;
        &mut self.delta[i..i + self.dim]
    }

    /// Parameters with components reordered: component `s` of the result is
    /// component `order[s]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.num_sources {
            return Err(Error::InvalidParameter("permutation length mismatch".into()));
        }
        let pi = order.iter().map(|&s| self.pi[s]).collect();
        let mut delta = Vec::with_capacity(self.delta.len());
        for &s in order {
            for p in 0..self.num_devices {
                delta.extend_from_slice(self.delta(s, p));
            }
        }
        Self::new(pi, delta, self.num_sources, self.num_devices, self.dim)
    }

    fn check_features(&self, features: &FeatureSet<T>) -> Result<()> {
        if features.num_devices() != self.num_devices || features.dim() != self.dim {
            return Err(Error::InvalidParameter(format!(
                "features are {}×{} but model expects {} devices × {}",
                features.num_devices(),
                features.dim(),
                self.num_devices,
                self.dim
            )));
        }
        Ok(())
    }
}

/// Posterior `γ_ns` of source `s` for frame `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities<T> {
    num_frames: usize,
    num_sources: usize,
    gamma: Vec<T>,
}

impl<T: Real> Responsibilities<T> {
    /// Validates that rows are probability vectors.
    pub fn new(gamma: Vec<T>, num_frames: usize, num_sources: usize) -> Result<Self> {
        if num_sources == 0 || gamma.len() != num_frames * num_sources {
            return Err(Error::InvalidParameter("responsibility shape mismatch".into()));
        }
        for row in gamma.chunks_exact(num_sources) {
            let total: T = row.iter().copied().sum();
            if row.iter().any(|&g| g < T::zero() || g > T::one()) || (total - T::one()).abs() > T::lit(1e-6) {
                return Err(Error::InvalidParameter("responsibility rows must be PMFs".into()));
            }
        }
        Ok(Self {
            num_frames,
            num_sources,
            gamma,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_sources(&self) -> usize {
        self.num_sources
    }

    pub fn row(&self, n: usize) -> &[T] {
        &self.gamma[n * self.num_sources..(n + 1) * self.num_sources]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.gamma.chunks_exact(self.num_sources)
    }

    /// Column `s` as an owned vector.
    pub fn column(&self, s: usize) -> Vec<T> {
        self.rows().map(|r| r[s]).collect()
    }
}

/// E-step output with per-frame marginal log-likelihoods.
#[derive(Debug, Clone)]
pub struct Posterior<T> {
    pub responsibilities: Responsibilities<T>,
    pub frame_log_likelihood: Vec<T>,
    pub log_likelihood: T,
}

/// `γ_ns ∝ π_s Π_p D(s_p[n]; δ_sp)` and the total log-likelihood
/// `Σ_n logsumexp_s(log π_s + Σ_p log D)`.
pub fn e_step<T: Real>(features: &FeatureSet<T>, params: &DmmParams<T>) -> Result<(Responsibilities<T>, T)> {
    let post = posterior(features, params)?;
    Ok((post.responsibilities, post.log_likelihood))
}

pub fn posterior<T: Real>(features: &FeatureSet<T>, params: &DmmParams<T>) -> Result<Posterior<T>> {
    params.check_features(features)?;
    let (s_count, p_count) = (params.num_sources(), params.num_devices());
    let norms: Vec<T> = (0..s_count)
        .flat_map(|s| (0..p_count).map(move |p| (s, p)))
        .map(|(s, p)| log_normalizer(params.delta(s, p)))
        .collect();
    let log_pi: Vec<T> = params.pi().iter().map(|p| p.ln()).collect();

    let per_frame: Vec<(Vec<T>, T)> = (0..features.num_frames())
        .into_par_iter()
        .map(|n| {
            let mut joint = vec![T::zero(); s_count];
            for (s, j) in joint.iter_mut().enumerate() {
                let mut acc = log_pi[s];
                for p in 0..p_count {
                    let data: T = params
                        .delta(s, p)
                        .iter()
                        .zip(features.log_values(p, n))
                        .map(|(&d, &ls)| (d - T::one()) * ls)
                        .sum();
                    acc = acc + norms[s * p_count + p] + data;
                }
                *j = acc;
            }
            let lse = log_sum_exp(&joint);
            let gamma = joint.iter().map(|&j| (j - lse).exp()).collect();
            (gamma, lse)
        })
        .collect();

    let mut gamma = Vec::with_capacity(features.num_frames() * s_count);
    let mut frame_ll = Vec::with_capacity(features.num_frames());
    let mut total = T::zero();
    for (n, (g, lse)) in per_frame.into_iter().enumerate() {
        if !lse.is_finite() {
            let component = g.iter().position(|x: &T| !x.is_finite()).unwrap_or(0);
            return Err(Error::NonFiniteLikelihood { frame: n, component });
        }
        gamma.extend(g);
        frame_ll.push(lse);
        total = total + lse;
    }
    Ok(Posterior {
        responsibilities: Responsibilities {
            num_frames: features.num_frames(),
            num_sources: s_count,
            gamma,
        },
        frame_log_likelihood: frame_ll,
        log_likelihood: total,
    })
}

/// `π_s = Σ_n γ_ns / N`.
pub fn m_step_pi<T: Real>(gamma: &Responsibilities<T>) -> Vec<T> {
    let mut sums = vec![T::zero(); gamma.num_sources()];
    for row in gamma.rows() {
        for (acc, &g) in sums.iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }
    let n = T::from_usize_lossy(gamma.num_frames());
    sums.into_iter().map(|x| x / n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmmConfig {
    pub max_iters: usize,
    /// Relative log-likelihood improvement below which EM stops.
    pub tol: f64,
    pub seed: u64,
    pub init: InitStrategy,
    pub delta_solver: DeltaSolverConfig,
}

impl Default for DmmConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
            init: InitStrategy::PeakKmeans,
            delta_solver: DeltaSolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitReport<T> {
    /// Log-likelihood of the initial parameters followed by one entry per
    /// EM iteration.
    pub log_likelihood_trace: Vec<T>,
    pub iterations_run: usize,
    pub converged: bool,
    pub params: DmmParams<T>,
    pub responsibilities: Responsibilities<T>,
    /// `(iteration, component)` pairs where a dead component was reseeded.
    pub reinitialized: Vec<(usize, usize)>,
}

/// Initializes with `cfg.init` and runs EM.
pub fn fit<T: Real>(features: &FeatureSet<T>, num_sources: usize, cfg: &DmmConfig) -> Result<FitReport<T>> {
    let init = init_params(features, num_sources, cfg.init, cfg.seed)?;
    fit_from(features, init, cfg)
}

/// EM from explicit initial parameters.
pub fn fit_from<T: Real>(features: &FeatureSet<T>, init: DmmParams<T>, cfg: &DmmConfig) -> Result<FitReport<T>> {
    init.check_features(features)?;
    let tol = T::lit(cfg.tol);
    let mut params = init;
    let mut post = posterior(features, &params)?;
    let mut trace = vec![post.log_likelihood];
    let mut converged = false;
    let mut iterations_run = 0;
    let mut reinitialized = Vec::new();

    for iter in 1..=cfg.max_iters {
        let reseeded = m_step(features, &post, &mut params, &cfg.delta_solver)?;
        reinitialized.extend(reseeded.into_iter().map(|s| (iter, s)));
        let next = posterior(features, &params)?;
        let improvement = next.log_likelihood - post.log_likelihood;
        trace.push(next.log_likelihood);
        post = next;
        iterations_run = iter;
        if improvement.abs() <= tol * post.log_likelihood.abs() {
            converged = true;
            break;
        }
    }
    Ok(FitReport {
        log_likelihood_trace: trace,
        iterations_run,
        converged,
        params,
        responsibilities: post.responsibilities,
        reinitialized,
    })
}

/// Updates `π` and every `δ_sp`; returns components that were reseeded.
fn m_step<T: Real>(
    features: &FeatureSet<T>,
    post: &Posterior<T>,
    params: &mut DmmParams<T>,
    solver: &DeltaSolverConfig,
) -> Result<Vec<usize>> {
    let gamma = &post.responsibilities;
    let (s_count, p_count, dim) = (params.num_sources(), params.num_devices(), params.dim());
    let n = features.num_frames();
    let pi = m_step_pi(gamma);

    // Sufficient statistics Σ_n γ_ns log s_p[n,l], accumulated in frame order.
    let mut mass = vec![T::zero(); s_count];
    let mut stats = vec![T::zero(); s_count * p_count * dim];
    for i in 0..n {
        let row = gamma.row(i);
        for s in 0..s_count {
            let g = row[s];
            mass[s] = mass[s] + g;
            if g == T::zero() {
                continue;
            }
            for p in 0..p_count {
                let base = (s * p_count + p) * dim;
                for (acc, &ls) in stats[base..base + dim].iter_mut().zip(features.log_values(p, i)) {
                    *acc = *acc + g * ls;
                }
            }
        }
    }

    let dead: Vec<usize> = (0..s_count)
        .filter(|&s| !(pi[s] >= T::lit(DEATH_THRESHOLD)) || !(mass[s] > T::zero()))
        .collect();

    let updates: Vec<Result<Vec<T>>> = (0..s_count * p_count)
        .into_par_iter()
        .map(|idx| {
            let (s, p) = (idx / p_count, idx % p_count);
            let current = params.delta(s, p);
            if dead.contains(&s) {
                return Ok(current.to_vec());
            }
            let mean_log: Vec<T> = stats[idx * dim..(idx + 1) * dim].iter().map(|&x| x / mass[s]).collect();
            let fitted = fit_from_mean_log(&mean_log, current, solver)?.delta;
            // keep the previous point if the solver did not improve the bound
            if mean_log_likelihood(&fitted, &mean_log) >= mean_log_likelihood(current, &mean_log) {
                Ok(fitted)
            } else {
                Ok(current.to_vec())
            }
        })
        .collect();
    for (idx, upd) in updates.into_iter().enumerate() {
        let delta = upd?;
        params.delta_mut(idx / p_count, idx % p_count).copy_from_slice(&delta);
    }
    params.pi = pi;

    if !dead.is_empty() {
        reseed_components(features, post, params, &dead);
    }
    Ok(dead)
}

/// Moves each dead component onto the frames the current model explains
/// worst and renormalizes `π`.
fn reseed_components<T: Real>(features: &FeatureSet<T>, post: &Posterior<T>, params: &mut DmmParams<T>, dead: &[usize]) {
    let n = features.num_frames();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| post.frame_log_likelihood[a].as_f64().total_cmp(&post.frame_log_likelihood[b].as_f64()).then(a.cmp(&b)));
    let take = (n / (4 * params.num_sources())).max(1);
    for (k, &s) in dead.iter().enumerate() {
        let chunk: Vec<usize> = order.iter().skip(k * take).take(take).copied().collect();
        let chunk = if chunk.is_empty() { vec![order[0]] } else { chunk };
        for p in 0..params.num_devices() {
            let delta = init::moment_match(chunk.iter().map(|&i| features.values(p, i)), params.dim());
            params.delta_mut(s, p).copy_from_slice(&delta);
        }
        params.pi[s] = T::from_usize_lossy(chunk.len()) / T::from_usize_lossy(n);
    }
    let total: T = params.pi.iter().copied().sum();
    params.pi.iter_mut().for_each(|p| *p = *p / total);
}

/// On-disk model description (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub num_sources: usize,
    pub num_devices: usize,
    pub dim: usize,
    pub pi: Vec<f64>,
    /// `delta[s][p][l]`
    pub delta: Vec<Vec<Vec<f64>>>,
    #[serde(default)]
    pub config: serde_json::Value,
}

pub const MODEL_FORMAT: &str = "spatial-diar-dmm";

impl ModelFile {
    pub fn from_params<T: Real>(params: &DmmParams<T>, config: serde_json::Value) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: 1,
            num_sources: params.num_sources(),
            num_devices: params.num_devices(),
            dim: params.dim(),
            pi: params.pi().iter().map(|x| x.as_f64()).collect(),
            delta: (0..params.num_sources())
                .map(|s| {
                    (0..params.num_devices())
                        .map(|p| params.delta(s, p).iter().map(|x| x.as_f64()).collect())
                        .collect()
                })
                .collect(),
            config,
        }
    }

    pub fn to_params<T: Real>(&self) -> Result<DmmParams<T>> {
        if self.format != MODEL_FORMAT {
            return Err(Error::InvalidParameter(format!("unknown model format {:?}", self.format)));
        }
        let delta: Vec<T> = self.delta.iter().flatten().flatten().map(|&x| T::lit(x)).collect();
        DmmParams::new(
            self.pi.iter().map(|&x| T::lit(x)).collect(),
            delta,
            self.num_sources,
            self.num_devices,
            self.dim,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }
}
