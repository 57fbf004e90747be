use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::DeviceRecording;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Window {
    /// Periodic Hann; sums to a constant at 50% overlap.
    Hann,
    Rectangular,
}

impl Window {
    pub fn coefficients<T: Real>(self, len: usize) -> Vec<T> {
        match self {
            Window::Rectangular => vec![T::one(); len],
            Window::Hann => (0..len)
                .map(|n| {
                    let phase = 2.0 * std::f64::consts::PI * n as f64 / len as f64;
                    T::lit(0.5 - 0.5 * phase.cos())
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_len_samples: usize,
    pub hop_samples: usize,
    pub fft_size: usize,
    pub window: Window,
}

impl StftConfig {
    pub fn new(frame_len_samples: usize, hop_samples: usize, fft_size: usize, window: Window) -> Result<Self> {
        if frame_len_samples == 0 || hop_samples == 0 {
            return Err(Error::InvalidParameter("frame length and hop must be positive".into()));
        }
        if hop_samples > frame_len_samples {
            return Err(Error::InvalidParameter("hop exceeds frame length".into()));
        }
        if fft_size < frame_len_samples {
            return Err(Error::InvalidParameter("fft size smaller than frame length".into()));
        }
        Ok(Self {
            frame_len_samples,
            hop_samples,
            fft_size,
            window,
        })
    }

    /// Frame length in milliseconds and hop as a fraction of the frame; the
    /// FFT size is the next power of two.
    pub fn from_duration(sample_rate_hz: u32, frame_ms: f64, hop_fraction: f64, window: Window) -> Result<Self> {
        if !(frame_ms > 0.0) || !(hop_fraction > 0.0 && hop_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "frame {frame_ms} ms / hop fraction {hop_fraction} out of range"
            )));
        }
        let frame = (frame_ms * 1e-3 * sample_rate_hz as f64).round() as usize;
        let hop = ((frame as f64) * hop_fraction).round().max(1.0) as usize;
        Self::new(frame, hop, frame.max(1).next_power_of_two(), window)
    }

    /// One-sided bin count `fft_size/2 + 1`.
    pub fn num_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of full frames in a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.frame_len_samples {
            0
        } else {
            (len - self.frame_len_samples) / self.hop_samples + 1
        }
    }
}

/// One-sided STFT of every channel of one device, stored frame-major
/// (`frame × mic × bin`).
#[derive(Debug, Clone)]
pub struct MultiChannelFrameSpectra<T> {
    pub device_id: usize,
    num_frames: usize,
    num_mics: usize,
    num_bins: usize,
    data: Vec<Complex<T>>,
    /// Centre time of each frame in seconds, in the recording's own timeline.
    pub frame_times_s: Vec<f64>,
    pub sample_rate_hz: u32,
    pub config: StftConfig,
}

impl<T: Real> MultiChannelFrameSpectra<T> {
    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    /// All mics of frame `n`, laid out `mic × bin`.
    pub fn frame(&self, n: usize) -> &[Complex<T>] {
        let stride = self.num_mics * self.num_bins;
        &self.data[n * stride..(n + 1) * stride]
    }

    pub fn spectrum(&self, n: usize, m: usize) -> &[Complex<T>] {
        let f = self.frame(n);
        &f[m * self.num_bins..(m + 1) * self.num_bins]
    }

    /// Windowed time-domain energy of frame `n` averaged over mics,
    /// recovered from the one-sided spectrum.
    pub fn frame_energy(&self, n: usize) -> T {
        let k = self.num_bins;
        let fft = self.config.fft_size;
        let mut total = T::zero();
        for m in 0..self.num_mics {
            let spec = self.spectrum(n, m);
            for (i, c) in spec.iter().enumerate() {
                let w = if i == 0 || (fft.is_multiple_of(2) && i == k - 1) { T::one() } else { T::lit(2.0) };
                total = total + w * c.norm_sqr();
            }
        }
        total / (T::from_usize_lossy(fft) * T::from_usize_lossy(self.num_mics))
    }

    pub fn frame_len_s(&self) -> f64 {
        self.config.frame_len_samples as f64 / self.sample_rate_hz as f64
    }

    pub fn hop_s(&self) -> f64 {
        self.config.hop_samples as f64 / self.sample_rate_hz as f64
    }
}

/// Frames the recording (trailing partial frames dropped), applies the
/// window, zero-pads to `fft_size` and keeps bins `0..=fft_size/2`.
pub fn stft<T: Real>(rec: &DeviceRecording<T>, cfg: &StftConfig) -> Result<MultiChannelFrameSpectra<T>> {
    let len = rec.len();
    if len < cfg.frame_len_samples {
        return Err(Error::SignalTooShort {
            len,
            frame: cfg.frame_len_samples,
        });
    }
    let n_frames = cfg.num_frames(len);
    let n_mics = rec.num_channels();
    let n_bins = cfg.num_bins();
    let window: Vec<T> = cfg.window.coefficients(cfg.frame_len_samples);
    let fft = FftPlanner::<T>::new().plan_fft_forward(cfg.fft_size);

    let mut data = vec![Complex::new(T::zero(), T::zero()); n_frames * n_mics * n_bins];
    data.par_chunks_mut(n_mics * n_bins)
        .enumerate()
        .for_each_init(
            || {
                (
                    vec![Complex::new(T::zero(), T::zero()); cfg.fft_size],
                    vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()],
                )
            },
            |(buf, scratch), (n, out)| {
                let start = n * cfg.hop_samples;
                for (m, out_m) in out.chunks_exact_mut(n_bins).enumerate() {
                    let x = &rec.channel(m)[start..start + cfg.frame_len_samples];
                    for (b, (&s, &w)) in buf.iter_mut().zip(x.iter().zip(&window)) {
                        *b = Complex::new(s * w, T::zero());
                    }
                    for b in buf[cfg.frame_len_samples..].iter_mut() {
                        *b = Complex::new(T::zero(), T::zero());
                    }
                    fft.process_with_scratch(buf, scratch);
                    out_m.copy_from_slice(&buf[..n_bins]);
                }
            },
        );

    let rate = rec.sample_rate_hz as f64;
    let frame_times_s = (0..n_frames)
        .map(|n| (n * cfg.hop_samples) as f64 / rate + cfg.frame_len_samples as f64 / (2.0 * rate))
        .collect();
    Ok(MultiChannelFrameSpectra {
        device_id: rec.device_id,
        num_frames: n_frames,
        num_mics: n_mics,
        num_bins: n_bins,
        data,
        frame_times_s,
        sample_rate_hz: rec.sample_rate_hz,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ch: Vec<f64>, rate: u32) -> DeviceRecording<f64> {
        DeviceRecording::new(0, rate, vec![ch.clone(), ch]).unwrap()
    }

    #[test]
    fn dc_identity_rectangular() {
        let cfg = StftConfig::new(64, 32, 64, Window::Rectangular).unwrap();
        let s = stft(&rec(vec![1.0; 256], 16_000), &cfg).unwrap();
        for n in 0..s.num_frames() {
            let spec = s.spectrum(n, 1);
            assert!((spec[0].re - 64.0).abs() < 1e-9);
            assert!(spec[1..].iter().all(|c| c.norm() < 1e-9));
        }
    }

    #[test]
    fn bin_centred_sinusoid() {
        let cfg = StftConfig::new(256, 128, 256, Window::Hann).unwrap();
        let k0 = 20;
        let x: Vec<f64> = (0..1024)
            .map(|i| (2.0 * std::f64::consts::PI * k0 as f64 * i as f64 / 256.0).cos())
            .collect();
        let s = stft(&rec(x, 16_000), &cfg).unwrap();
        let mags: Vec<f64> = s.spectrum(2, 0).iter().map(|c| c.norm()).collect();
        let peak = mags
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(peak, k0);
        let total: f64 = mags.iter().map(|m| m * m).sum();
        let near: f64 = mags[k0 - 1..=k0 + 1].iter().map(|m| m * m).sum();
        assert!(near / total > 0.999);
    }

    #[test]
    fn paper_framing_frame_count() {
        let cfg = StftConfig::from_duration(16_000, 64.0, 0.5, Window::Hann).unwrap();
        assert_eq!(cfg.frame_len_samples, 1024);
        assert_eq!(cfg.hop_samples, 512);
        assert_eq!(cfg.fft_size, 1024);
        assert_eq!(cfg.num_bins(), 513);
        assert_eq!(cfg.num_frames(160_000), 311);
    }

    #[test]
    fn frame_times_are_centres() {
        let cfg = StftConfig::new(100, 50, 128, Window::Hann).unwrap();
        let s = stft(&rec(vec![0.1; 1000], 1000), &cfg).unwrap();
        assert_eq!(s.num_frames(), 19);
        assert!((s.frame_times_s[0] - 0.05).abs() < 1e-12);
        assert!((s.frame_times_s[3] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn too_short_and_bad_config() {
        let cfg = StftConfig::new(1024, 512, 1024, Window::Hann).unwrap();
        assert!(matches!(
            stft(&rec(vec![0.0; 1000], 16_000), &cfg),
            Err(Error::SignalTooShort { .. })
        ));
        assert!(StftConfig::new(100, 200, 128, Window::Hann).is_err());
        assert!(StftConfig::new(100, 50, 64, Window::Hann).is_err());
    }
}
