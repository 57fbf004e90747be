//! Dirichlet log-density and the weighted maximum-likelihood solver for
//! one concentration vector.

use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::{digamma, inv_digamma, ln_gamma};

/// Draws one point from `Dir(delta)` by normalizing independent
/// `Gamma(δ_l, 1)` variates.
pub fn sample_dirichlet<R: rand::Rng + ?Sized>(delta: &[f64], rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> = delta
        .iter()
        .map(|&d| rand_distr::Gamma::new(d, 1.0).expect("positive concentration").sample(rng))
        .collect();
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    x
}

/// `log D(s; δ) = log Γ(Σδ) − Σ log Γ(δ_l) + Σ (δ_l − 1) log s_l`.
pub fn dirichlet_log_pdf<T: Real>(s: &[T], delta: &[T]) -> Result<T> {
    if s.len() != delta.len() || s.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "dimension mismatch: {} probabilities vs {} concentrations",
            s.len(),
            delta.len()
        )));
    }
    if s.iter().any(|&x| !(x > T::zero())) {
        return Err(Error::InvalidParameter("probability entries must be positive".into()));
    }
    check_concentration(delta)?;
    let data: T = s.iter().zip(delta).map(|(&x, &d)| (d - T::one()) * x.ln()).sum();
    Ok(log_normalizer(delta) + data)
}

/// `log Γ(Σδ) − Σ log Γ(δ_l)`.
pub fn log_normalizer<T: Real>(delta: &[T]) -> T {
    let total: T = delta.iter().copied().sum();
    ln_gamma(total) - delta.iter().map(|&d| ln_gamma(d)).sum::<T>()
}

pub(crate) fn check_concentration<T: Real>(delta: &[T]) -> Result<()> {
    if delta.iter().any(|&d| !(d > T::zero()) || !d.is_finite()) {
        return Err(Error::InvalidParameter("concentration entries must be positive and finite".into()));
    }
    Ok(())
}

/// Per-unit-weight objective `log Γ(Σδ) − Σ log Γ(δ_l) + Σ (δ_l − 1)·⟨log s_l⟩`.
pub fn mean_log_likelihood<T: Real>(delta: &[T], mean_log: &[T]) -> T {
    log_normalizer(delta) + delta.iter().zip(mean_log).map(|(&d, &m)| (d - T::one()) * m).sum::<T>()
}

/// `max_l |ψ(Σδ) − ψ(δ_l) + ⟨log s_l⟩|`; zero at the MLE.
pub fn stationarity_residual<T: Real>(delta: &[T], mean_log: &[T]) -> T {
    let psi_total = digamma(delta.iter().copied().sum::<T>());
    delta
        .iter()
        .zip(mean_log)
        .map(|(&d, &m)| (psi_total - digamma(d) + m).abs())
        .fold(T::zero(), T::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaSolver {
    /// `δ_l ← ψ⁻¹(ψ(Σδ) + ⟨log s_l⟩)`.
    FixedPoint,
    /// Gradient ascent in `log δ` with backtracking.
    Gradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaSolverConfig {
    pub solver: DeltaSolver,
    pub max_iters: usize,
    /// Stop when `‖Δδ‖ / ‖δ‖` falls below this.
    pub rel_tol: f64,
    /// Upper bound on `Σδ`; the degenerate zero-variance case converges here.
    pub max_concentration: f64,
}

impl Default for DeltaSolverConfig {
    fn default() -> Self {
        Self {
            solver: DeltaSolver::FixedPoint,
            max_iters: 200,
            rel_tol: 1e-7,
            max_concentration: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaFit<T> {
    pub delta: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// True when `Σδ` hit `max_concentration`.
    pub capped: bool,
}

/// `Σ_n w_n log s_n / Σ_n w_n` over rows of log-features.
pub fn weighted_mean_log<'a, T: Real>(
    log_features: impl IntoIterator<Item = &'a [T]>,
    weights: &[T],
    dim: usize,
) -> Result<Vec<T>> {
    let mut acc = vec![T::zero(); dim];
    let mut total = T::zero();
    for (row, &w) in log_features.into_iter().zip(weights) {
        total = total + w;
        for (a, &x) in acc.iter_mut().zip(row) {
            *a = *a + w * x;
        }
    }
    if !(total > T::zero()) {
        return Err(Error::ComponentDeath(0));
    }
    Ok(acc.into_iter().map(|a| a / total).collect())
}

/// Weighted Dirichlet MLE for one device/component. `log_features` are the
/// rows `log s_p[n]`, `weights` the responsibilities `γ_ns`.
pub fn m_step_delta<'a, T: Real>(
    log_features: impl IntoIterator<Item = &'a [T]>,
    weights: &[T],
    delta_init: &[T],
    cfg: &DeltaSolverConfig,
) -> Result<DeltaFit<T>> {
    let mean_log = weighted_mean_log(log_features, weights, delta_init.len())?;
    fit_from_mean_log(&mean_log, delta_init, cfg)
}

/// Solves `ψ(Σδ) − ψ(δ_l) + ⟨log s_l⟩ = 0` from sufficient statistics.
pub fn fit_from_mean_log<T: Real>(mean_log: &[T], delta_init: &[T], cfg: &DeltaSolverConfig) -> Result<DeltaFit<T>> {
    if mean_log.len() != delta_init.len() {
        return Err(Error::InvalidParameter("dimension mismatch".into()));
    }
    check_concentration(delta_init)?;
    if mean_log.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidParameter("non-finite mean log-feature".into()));
    }
    match cfg.solver {
        DeltaSolver::FixedPoint => fixed_point(mean_log, delta_init, cfg),
        DeltaSolver::Gradient => gradient_ascent(mean_log, delta_init, cfg),
    }
}

fn rel_change<T: Real>(old: &[T], new: &[T]) -> T {
    let diff: T = old.iter().zip(new).map(|(&a, &b)| (a - b) * (a - b)).sum();
    let norm: T = old.iter().map(|&a| a * a).sum();
    (diff / norm).sqrt()
}

/// Rescales onto `Σδ = cap` if the total exceeds it.
fn apply_cap<T: Real>(delta: &mut [T], cap: T) -> bool {
    let total: T = delta.iter().copied().sum();
    if total > cap {
        let scale = cap / total;
        delta.iter_mut().for_each(|d| *d = *d * scale);
        true
    } else {
        false
    }
}

fn fixed_point<T: Real>(mean_log: &[T], init: &[T], cfg: &DeltaSolverConfig) -> Result<DeltaFit<T>> {
    let cap = T::lit(cfg.max_concentration);
    let tol = T::lit(cfg.rel_tol);
    let mut delta = init.to_vec();
    let mut capped = apply_cap(&mut delta, cap);
    if capped {
        return Ok(DeltaFit { delta, iterations: 0, converged: false, capped });
    }
    for it in 1..=cfg.max_iters {
        let psi_total = digamma(delta.iter().copied().sum::<T>());
        let mut next: Vec<T> = mean_log.iter().map(|&m| inv_digamma(psi_total + m)).collect();
        capped = apply_cap(&mut next, cap);
        let change = rel_change(&delta, &next);
        delta = next;
        if capped {
            return Ok(DeltaFit { delta, iterations: it, converged: false, capped });
        }
        if change < tol {
            return Ok(DeltaFit { delta, iterations: it, converged: true, capped });
        }
    }
    Ok(DeltaFit {
        delta,
        iterations: cfg.max_iters,
        converged: false,
        capped,
    })
}

fn gradient_ascent<T: Real>(mean_log: &[T], init: &[T], cfg: &DeltaSolverConfig) -> Result<DeltaFit<T>> {
    let cap = T::lit(cfg.max_concentration);
    let tol = T::lit(cfg.rel_tol);
    let mut delta = init.to_vec();
    let mut capped = apply_cap(&mut delta, cap);
    let mut value = mean_log_likelihood(&delta, mean_log);
    let mut step = T::one();
    // The gradient path is slower than the fixed point; allow more steps.
    let max_iters = cfg.max_iters.saturating_mul(50);
    for it in 1..=max_iters {
        let psi_total = digamma(delta.iter().copied().sum::<T>());
        // d/d(log δ_l) = δ_l (ψ(Σδ) − ψ(δ_l) + ⟨log s_l⟩)
        let grad: Vec<T> = delta
            .iter()
            .zip(mean_log)
            .map(|(&d, &m)| d * (psi_total - digamma(d) + m))
            .collect();
        let mut accepted = None;
        let mut trial_step = step;
        for _ in 0..60 {
            let mut trial: Vec<T> = delta.iter().zip(&grad).map(|(&d, &g)| d * (trial_step * g).exp()).collect();
            let hit_cap = apply_cap(&mut trial, cap);
            let trial_value = mean_log_likelihood(&trial, mean_log);
            if trial_value >= value {
                accepted = Some((trial, trial_value, hit_cap));
                break;
            }
            trial_step = trial_step * T::lit(0.5);
        }
        let Some((next, next_value, hit_cap)) = accepted else {
            return Ok(DeltaFit { delta, iterations: it, converged: true, capped });
        };
        let change = rel_change(&delta, &next);
        delta = next;
        value = next_value;
        capped = hit_cap;
        step = trial_step * T::lit(2.0);
        if change < tol {
            return Ok(DeltaFit { delta, iterations: it, converged: true, capped });
        }
    }
    Ok(DeltaFit {
        delta,
        iterations: max_iters,
        converged: false,
        capped,
    })
}
