//! Per-device directional statistics: SRP-PHAT over an angular grid,
//! recursive smoothing over frames, and normalization to a PMF.

use std::io::Write;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signal_io::MultiChannelFrameSpectra;

/// Minimum modulus treated as signal by the PHAT weighting.
pub const PHAT_GUARD: f64 = 1e-12;

/// Microphone layout of one device in its own coordinate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry<T> {
    /// Positions in meters, `[x, y]`.
    pub mic_positions: Vec<[T; 2]>,
    pub speed_of_sound: T,
}

impl<T: Real> ArrayGeometry<T> {
    pub fn new(mic_positions: Vec<[T; 2]>, speed_of_sound: T) -> Result<Self> {
        if mic_positions.len() < 2 {
            return Err(Error::TooFewChannels(mic_positions.len()));
        }
        if !(speed_of_sound > T::zero()) {
            return Err(Error::InvalidParameter("speed of sound must be positive".into()));
        }
        for (i, a) in mic_positions.iter().enumerate() {
            for b in &mic_positions[i + 1..] {
                if (a[0] - b[0]).hypot(a[1] - b[1]) <= T::zero() {
                    return Err(Error::InvalidParameter("coincident microphones".into()));
                }
            }
        }
        Ok(Self {
            mic_positions,
            speed_of_sound,
        })
    }

    /// Two microphones `spacing` meters apart on the x axis, mic 1 at
    /// `+spacing/2`. Angle 0° points from mic 2 towards mic 1.
    pub fn linear_pair(spacing: T, speed_of_sound: T) -> Result<Self> {
        let h = spacing / T::lit(2.0);
        Self::new(vec![[h, T::zero()], [-h, T::zero()]], speed_of_sound)
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    /// Far-field delay of mic `m` relative to mic 1 in samples for a plane
    /// wave arriving from `theta_deg`: `(p_1 − p_m)·u(θ) · rate / c`.
    pub fn tdoa_samples(&self, m: usize, theta_deg: T, sample_rate: T) -> T {
        let theta = theta_deg.to_radians();
        let (p1, pm) = (self.mic_positions[0], self.mic_positions[m]);
        let proj = (p1[0] - pm[0]) * theta.cos() + (p1[1] - pm[1]) * theta.sin();
        proj * sample_rate / self.speed_of_sound
    }

    /// Largest possible |TDOA| in samples.
    pub fn max_tdoa_samples(&self, sample_rate: T) -> T {
        let mut max = T::zero();
        for (i, a) in self.mic_positions.iter().enumerate() {
            for b in &self.mic_positions[i + 1..] {
                max = max.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        max * sample_rate / self.speed_of_sound
    }
}

/// Candidate directions θ_1 < … < θ_L in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid<T> {
    angles_deg: Vec<T>,
}

impl<T: Real> AngularGrid<T> {
    pub fn new(angles_deg: Vec<T>) -> Result<Self> {
        if angles_deg.is_empty() || angles_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("angular grid must be non-empty and strictly increasing".into()));
        }
        Ok(Self { angles_deg })
    }

    /// `[0°, 180°]` at `resolution_deg` spacing (46 points at 4°).
    pub fn half_circle(resolution_deg: f64) -> Result<Self> {
        if !(resolution_deg > 0.0 && resolution_deg <= 180.0) {
            return Err(Error::InvalidParameter(format!("grid resolution {resolution_deg}°")));
        }
        let steps = (180.0 / resolution_deg).round() as usize;
        Self::new((0..=steps).map(|i| T::lit(i as f64 * 180.0 / steps as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    pub fn angles_deg(&self) -> &[T] {
        &self.angles_deg
    }

    /// Index of the grid point nearest to `theta_deg`.
    pub fn nearest(&self, theta_deg: T) -> usize {
        argmax_by(&self.angles_deg, |a| -(a - theta_deg).abs())
    }
}

/// Steering vector `a[θ, k]`: component m is `exp(−j2πk τ_{m1}(θ)/K)`.
pub fn steering_vector<T: Real>(
    geom: &ArrayGeometry<T>,
    theta_deg: T,
    k: usize,
    fft_size: usize,
    sample_rate: T,
) -> Vec<Complex<T>> {
    let two_pi = T::lit(2.0) * T::PI();
    (0..geom.num_mics())
        .map(|m| {
            let tau = geom.tdoa_samples(m, theta_deg, sample_rate);
            let phase = -two_pi * T::from_usize_lossy(k) * tau / T::from_usize_lossy(fft_size);
            Complex::from_polar(T::one(), phase)
        })
        .collect()
}

/// Phase transform: every component scaled to unit modulus, or zeroed when
/// its modulus is below [`PHAT_GUARD`].
pub fn phat_filter<T: Real>(spectra: &[Complex<T>]) -> Vec<Complex<T>> {
    spectra.iter().map(|&c| phat(c)).collect()
}

#[inline]
fn phat<T: Real>(c: Complex<T>) -> Complex<T> {
    let r = c.norm();
    if r < T::lit(PHAT_GUARD) {
        Complex::new(T::zero(), T::zero())
    } else {
        c / r
    }
}

/// Steered response power evaluator with a precomputed steering table.
#[derive(Debug, Clone)]
pub struct SrpPhat<T> {
    grid: AngularGrid<T>,
    bins: RangeInclusive<usize>,
    num_mics: usize,
    /// Conjugated steering vectors, laid out `angle × bin × mic`.
    table: Vec<Complex<T>>,
}

impl<T: Real> SrpPhat<T> {
    /// `band_hz = None` sums every bin `0..=fft_size/2`.
    pub fn new(
        geom: &ArrayGeometry<T>,
        grid: AngularGrid<T>,
        fft_size: usize,
        sample_rate_hz: u32,
        band_hz: Option<(f64, f64)>,
    ) -> Result<Self> {
        let num_bins = fft_size / 2 + 1;
        let bins = match band_hz {
            None => 0..=num_bins - 1,
            Some((lo, hi)) => {
                if !(lo >= 0.0 && hi > lo) {
                    return Err(Error::InvalidParameter(format!("band [{lo}, {hi}] Hz")));
                }
                let hz_per_bin = sample_rate_hz as f64 / fft_size as f64;
                let first = (lo / hz_per_bin).ceil() as usize;
                let last = ((hi / hz_per_bin).floor() as usize).min(num_bins - 1);
                if first > last {
                    return Err(Error::InvalidParameter(format!("band [{lo}, {hi}] Hz contains no bins")));
                }
                first..=last
            }
        };
        let rate = T::from_u32(sample_rate_hz).unwrap_or_else(T::one);
        let mut table = Vec::with_capacity(grid.len() * bins.clone().count() * geom.num_mics());
        for &theta in grid.angles_deg() {
            for k in bins.clone() {
                table.extend(steering_vector(geom, theta, k, fft_size, rate).into_iter().map(|a| a.conj()));
            }
        }
        Ok(Self {
            grid,
            bins,
            num_mics: geom.num_mics(),
            table,
        })
    }

    pub fn grid(&self) -> &AngularGrid<T> {
        &self.grid
    }

    /// `s[θ_l] = Σ_k |a[θ_l,k]^H x_f[k]|²` for one frame given as
    /// PHAT-filtered `mic × bin` spectra.
    pub fn response(&self, phat_frame: &[Complex<T>], num_bins: usize) -> Vec<T> {
        let m_count = self.num_mics;
        let nb = self.bins.clone().count();
        let first = *self.bins.start();
        let mut out = Vec::with_capacity(self.grid.len());
        for l in 0..self.grid.len() {
            let steer = &self.table[l * nb * m_count..(l + 1) * nb * m_count];
            let mut power = T::zero();
            for (j, a) in steer.chunks_exact(m_count).enumerate() {
                let k = first + j;
                let mut acc = Complex::new(T::zero(), T::zero());
                for (m, &am) in a.iter().enumerate() {
                    acc = acc + am * phat_frame[m * num_bins + k];
                }
                power = power + acc.norm_sqr();
            }
            out.push(power);
        }
        out
    }

    /// Raw SRP-PHAT response of every frame of one device.
    pub fn responses(&self, spectra: &MultiChannelFrameSpectra<T>) -> Vec<Vec<T>> {
        let nb = spectra.num_bins();
        (0..spectra.num_frames())
            .into_par_iter()
            .map(|n| self.response(&phat_filter(spectra.frame(n)), nb))
            .collect()
    }
}

/// One-shot SRP of a PHAT-filtered frame (`mic × bin` layout).
pub fn srp<T: Real>(
    phat_frame: &[Complex<T>],
    geom: &ArrayGeometry<T>,
    grid: &AngularGrid<T>,
    fft_size: usize,
    sample_rate_hz: u32,
    band_hz: Option<(f64, f64)>,
) -> Result<Vec<T>> {
    let srp = SrpPhat::new(geom, grid.clone(), fft_size, sample_rate_hz, band_hz)?;
    Ok(srp.response(phat_frame, fft_size / 2 + 1))
}

/// PMF over the angular grid for one device and frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalStatistic<T> {
    pub values: Vec<T>,
    pub frame_index: usize,
    pub device_id: usize,
}

impl<T: Real> DirectionalStatistic<T> {
    pub fn peak_index(&self) -> usize {
        argmax_by(&self.values, |v| v)
    }
}

/// Exponential smoothing `s̃[n] = α·s[n] + (1−α)·s̃[n−1]` with `s̃[0] = s[0]`,
/// followed by normalization to a PMF with every entry floored at `eps`.
pub fn smooth_and_normalize<T: Real>(
    raw: &[Vec<T>],
    alpha: T,
    eps: T,
    device_id: usize,
) -> Result<Vec<DirectionalStatistic<T>>> {
    if !(alpha >= T::zero() && alpha < T::one()) {
        return Err(Error::InvalidParameter(format!("smoothing factor {alpha} outside [0, 1)")));
    }
    let mut out = Vec::with_capacity(raw.len());
    let mut state: Option<Vec<T>> = None;
    for (n, frame) in raw.iter().enumerate() {
        let smoothed = match state.take() {
            None => frame.clone(),
            Some(prev) => frame
                .iter()
                .zip(&prev)
                .map(|(&cur, &old)| alpha * cur + (T::one() - alpha) * old)
                .collect(),
        };
        out.push(DirectionalStatistic {
            values: normalize_with_floor(&smoothed, eps)?,
            frame_index: n,
            device_id,
        });
        state = Some(smoothed);
    }
    Ok(out)
}

/// Scales `v` to sum to one, raising entries below `eps` to exactly `eps`
/// and rescaling the rest to absorb the difference. An all-zero input maps
/// to the uniform PMF.
pub fn normalize_with_floor<T: Real>(v: &[T], eps: T) -> Result<Vec<T>> {
    let len = v.len();
    if len == 0 {
        return Err(Error::InvalidParameter("empty response vector".into()));
    }
    if !(eps >= T::zero()) || eps * T::from_usize_lossy(len) >= T::one() {
        return Err(Error::InvalidParameter(format!("probability floor {eps} too large for L = {len}")));
    }
    if v.iter().any(|x| !x.is_finite() || *x < T::zero()) {
        return Err(Error::InvalidParameter("response must be finite and nonnegative".into()));
    }
    let total: T = v.iter().copied().sum();
    if total <= T::zero() {
        return Ok(vec![T::one() / T::from_usize_lossy(len); len]);
    }
    let mut floored = vec![false; len];
    loop {
        let n_floor = floored.iter().filter(|&&f| f).count();
        let free_mass = T::one() - eps * T::from_usize_lossy(n_floor);
        let free_sum: T = v.iter().zip(&floored).filter(|(_, f)| !**f).map(|(x, _)| *x).sum();
        let mut changed = false;
        if free_sum > T::zero() {
            for (x, f) in v.iter().zip(floored.iter_mut()) {
                if !*f && *x * free_mass / free_sum < eps {
                    *f = true;
                    changed = true;
                }
            }
        }
        if !changed || free_sum <= T::zero() {
            return Ok(v
                .iter()
                .zip(&floored)
                .map(|(x, f)| if *f || free_sum <= T::zero() { eps } else { *x * free_mass / free_sum })
                .collect());
        }
    }
}

/// Which term of the recursion the configured smoothing factor weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothingWeight {
    /// `alpha` multiplies the previous smoothed value (heavy smoothing at 0.9).
    Previous,
    /// `alpha` multiplies the new frame.
    Current,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirectionalConfig {
    pub grid_resolution_deg: f64,
    pub mic_spacing_m: f64,
    pub speed_of_sound: f64,
    pub alpha: f64,
    pub alpha_weights: SmoothingWeight,
    pub eps: f64,
    /// SRP band in Hz; `None` sums every bin.
    pub band_hz: Option<(f64, f64)>,
}

impl Default for DirectionalConfig {
    fn default() -> Self {
        Self {
            grid_resolution_deg: 4.0,
            mic_spacing_m: 0.16,
            speed_of_sound: 343.0,
            alpha: 0.9,
            alpha_weights: SmoothingWeight::Previous,
            eps: 1e-6,
            band_hz: Some((300.0, 8000.0)),
        }
    }
}

impl DirectionalConfig {
    /// Weight applied to the newest frame in the recursion.
    pub fn current_frame_weight(&self) -> f64 {
        match self.alpha_weights {
            SmoothingWeight::Current => self.alpha,
            SmoothingWeight::Previous => 1.0 - self.alpha,
        }
    }

    pub fn grid<T: Real>(&self) -> Result<AngularGrid<T>> {
        AngularGrid::half_circle(self.grid_resolution_deg)
    }

    /// Default two-microphone geometry for a device with `num_mics`
    /// channels. Larger arrays are modelled as uniform linear arrays.
    pub fn geometry<T: Real>(&self, num_mics: usize) -> Result<ArrayGeometry<T>> {
        if num_mics < 2 {
            return Err(Error::TooFewChannels(num_mics));
        }
        let d = self.mic_spacing_m;
        let centre = (num_mics - 1) as f64 / 2.0;
        let positions = (0..num_mics)
            .map(|m| [T::lit((centre - m as f64) * d), T::zero()])
            .collect();
        ArrayGeometry::new(positions, T::lit(self.speed_of_sound))
    }
}

/// Full feature chain for one device: PHAT, SRP, smoothing, normalization.
pub fn directional_statistics<T: Real>(
    spectra: &MultiChannelFrameSpectra<T>,
    cfg: &DirectionalConfig,
) -> Result<Vec<DirectionalStatistic<T>>> {
    let geom = cfg.geometry(spectra.num_mics())?;
    let srp = SrpPhat::new(&geom, cfg.grid()?, spectra.config.fft_size, spectra.sample_rate_hz, cfg.band_hz)?;
    let raw = srp.responses(spectra);
    smooth_and_normalize(&raw, T::lit(cfg.current_frame_weight()), T::lit(cfg.eps), spectra.device_id)
}

/// Writes an `N × L` feature matrix as CSV: a header of grid angles, then
/// one row per frame prefixed with its time in seconds.
pub fn write_feature_csv<T: Real, W: Write>(
    mut out: W,
    stats: &[DirectionalStatistic<T>],
    grid: &AngularGrid<T>,
    frame_times_s: &[f64],
) -> Result<()> {
    write!(out, "time_s")?;
    for a in grid.angles_deg() {
        write!(out, ",{a}")?;
    }
    writeln!(out)?;
    for (stat, t) in stats.iter().zip(frame_times_s) {
        write!(out, "{t:.3}")?;
        for v in &stat.values {
            write!(out, ",{:.6e}", v.as_f64())?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Index of the largest key; ties resolve to the lowest index.
pub(crate) fn argmax_by<T: Copy, K: PartialOrd>(xs: &[T], key: impl Fn(T) -> K) -> usize {
    let mut best = 0;
    let mut best_key = None;
    for (i, &x) in xs.iter().enumerate() {
        let k = key(x);
        if best_key.as_ref().is_none_or(|b| k > *b) {
            best = i;
            best_key = Some(k);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> ArrayGeometry<f64> {
        ArrayGeometry::linear_pair(0.16, 343.0).unwrap()
    }

    #[test]
    fn grid_has_46_points_at_4_degrees() {
        let g = AngularGrid::<f64>::half_circle(4.0).unwrap();
        assert_eq!(g.len(), 46);
        assert_eq!(g.angles_deg()[0], 0.0);
        assert!((g.angles_deg()[45] - 180.0).abs() < 1e-12);
        assert_eq!(g.nearest(89.0), 22);
    }

    #[test]
    fn steering_broadside_and_dc_are_all_ones() {
        let g = pair();
        for k in [0, 1, 100, 512] {
            for c in steering_vector(&g, 90.0, k, 1024, 16_000.0) {
                assert!((c - Complex::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
        for c in steering_vector(&g, 37.0, 0, 1024, 16_000.0) {
            assert!((c - Complex::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn steering_endfire_phase() {
        let g = pair();
        let tau = g.tdoa_samples(1, 0.0, 16_000.0);
        assert!((tau - 0.16 * 16_000.0 / 343.0).abs() < 1e-12);
        assert!((tau - 7.46).abs() < 0.01);
        let a = steering_vector(&g, 0.0, 100, 1024, 16_000.0);
        let expected = -2.0 * std::f64::consts::PI * 100.0 * tau / 1024.0;
        let diff = (a[1].arg() - expected).rem_euclid(2.0 * std::f64::consts::PI);
        assert!(diff < 1e-9 || (2.0 * std::f64::consts::PI - diff) < 1e-9);
    }

    #[test]
    fn phat_examples() {
        let out = phat_filter(&[Complex::new(3.0, 4.0), Complex::new(0.0, 0.0)]);
        assert!((out[0] - Complex::new(0.6, 0.8)).norm() < 1e-15);
        assert_eq!(out[1], Complex::new(0.0, 0.0));
    }

    #[test]
    fn silent_frame_gives_flat_response() {
        let g = pair();
        let grid = AngularGrid::half_circle(4.0).unwrap();
        let frame = vec![Complex::new(0.0, 0.0); 2 * 513];
        let s = srp(&phat_filter(&frame), &g, &grid, 1024, 16_000, None).unwrap();
        assert!(s.iter().all(|&v| v == s[0]));
    }

    #[test]
    fn broadside_source_peaks_at_90() {
        // identical channels: zero delay
        let g = pair();
        let spec: Vec<Complex<f64>> = (0..513).map(|k| Complex::from_polar(1.0, k as f64 * 0.37)).collect();
        let frame: Vec<_> = spec.iter().chain(&spec).copied().collect();

        let fine = AngularGrid::half_circle(10.0).unwrap();
        let s = srp(&frame, &g, &fine, 1024, 16_000, Some((300.0, 8000.0))).unwrap();
        assert_eq!(fine.angles_deg()[argmax_by(&s, |v| v)], 90.0);

        // 90° is not a point of the 4° grid; the two neighbours tie
        let grid = AngularGrid::half_circle(4.0).unwrap();
        let s = srp(&frame, &g, &grid, 1024, 16_000, Some((300.0, 8000.0))).unwrap();
        assert!((s[22] - s[23]).abs() < 1e-9 * s[22]);
        let peak = grid.angles_deg()[argmax_by(&s, |v| v)];
        assert!(peak == 88.0 || peak == 92.0, "{peak}");
    }

    #[test]
    fn smoothing_examples() {
        let v: Vec<f64> = vec![1.0, 3.0];
        let w: Vec<f64> = vec![2.0, 2.0];
        let out = smooth_and_normalize(&[v.clone(), w.clone()], 0.9, 1e-9, 0).unwrap();
        let mix: [f64; 2] = [0.9 * 2.0 + 0.1 * 1.0, 0.9 * 2.0 + 0.1 * 3.0];
        let total = mix[0] + mix[1];
        assert!((out[1].values[0] - mix[0] / total).abs() < 1e-9);
        assert!((out[1].values[1] - mix[1] / total).abs() < 1e-9);

        let constant: Vec<Vec<f64>> = vec![vec![1.0, 2.0, 5.0]; 6];
        for s in smooth_and_normalize(&constant, 0.3, 1e-6, 0).unwrap() {
            assert!((s.values[2] - 0.625).abs() < 1e-12);
        }
        assert!(smooth_and_normalize(&constant, 1.0, 1e-6, 0).is_err());
        assert!(smooth_and_normalize(&constant, -0.1, 1e-6, 0).is_err());
    }

    #[test]
    fn floor_is_respected_exactly() {
        let out = normalize_with_floor(&[0.0, 1e-12, 1.0, 3.0], 1e-3).unwrap();
        assert!(out.iter().all(|&x| x >= 1e-3));
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(out[0], 1e-3);
        assert!((out[3] / out[2] - 3.0).abs() < 1e-12);
        assert_eq!(normalize_with_floor(&[0.0, 0.0], 1e-6).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax_by(&[1.0, 3.0, 3.0], |v| v), 1);
    }
}
