use crate::error::{Error, Result};
use crate::scalar::Real;

use super::DeviceRecording;

/// Kernel half-width measured in output samples (64 taps per phase at the
/// output rate).
const HALF_TAPS_OUT: f64 = 32.0;
/// Cutoff as a fraction of the output Nyquist frequency.
const ROLLOFF: f64 = 0.9;

/// Polyphase windowed-sinc downsampler. Output length is
/// `round(len · target / source)`.
pub fn resample<T: Real>(rec: &DeviceRecording<T>, target_hz: u32) -> Result<DeviceRecording<T>> {
    if target_hz == 0 {
        return Err(Error::InvalidParameter("target sample rate must be positive".into()));
    }
    let source_hz = rec.sample_rate_hz;
    if target_hz > source_hz {
        return Err(Error::InvalidParameter(format!(
            "upsampling from {source_hz} Hz to {target_hz} Hz is not supported"
        )));
    }
    if target_hz == source_hz {
        return Ok(rec.clone());
    }
    let g = gcd(source_hz as u64, target_hz as u64);
    let up = (target_hz as u64 / g) as usize;
    let down = (source_hz as u64 / g) as usize;
    let kernel = PolyphaseKernel::new(up, down);

    let out_len = ((rec.len() as u128 * target_hz as u128 + source_hz as u128 / 2) / source_hz as u128) as usize;
    let channels = rec
        .channels()
        .iter()
        .map(|c| kernel.apply(c, out_len))
        .collect();
    let mut out = DeviceRecording::new(rec.device_id, target_hz, channels)?;
    out.start_offset_samples =
        (rec.start_offset_samples as f64 * target_hz as f64 / source_hz as f64).round() as i64;
    Ok(out)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

struct PolyphaseKernel {
    up: usize,
    down: usize,
    half: usize,
    /// `up` phases, each `2·half` taps covering input offsets `1-half ..= half`.
    phases: Vec<Vec<f64>>,
}

impl PolyphaseKernel {
    fn new(up: usize, down: usize) -> Self {
        let ratio = up as f64 / down as f64;
        let half_in = HALF_TAPS_OUT / ratio;
        let half = half_in.ceil() as usize;
        let cutoff = 0.5 * ratio * ROLLOFF; // cycles per input sample
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut taps: Vec<f64> = (0..2 * half)
                    .map(|i| {
                        let offset = i as f64 + 1.0 - half as f64;
                        let u = frac - offset;
                        windowed_sinc(u, cutoff, half_in)
                    })
                    .collect();
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|t| *t /= sum);
                taps
            })
            .collect();
        Self {
            up,
            down,
            half,
            phases,
        }
    }

    fn apply<T: Real>(&self, input: &[T], out_len: usize) -> Vec<T> {
        let n = input.len() as i64;
        (0..out_len)
            .map(|i| {
                let pos = i * self.down;
                let base = (pos / self.up) as i64;
                let taps = &self.phases[pos % self.up];
                let first = base + 1 - self.half as i64;
                let mut acc = 0.0;
                for (k, &h) in taps.iter().enumerate() {
                    let j = first + k as i64;
                    if (0..n).contains(&j) {
                        acc += h * input[j as usize].as_f64();
                    }
                }
                T::lit(acc)
            })
            .collect()
    }
}

fn windowed_sinc(u: f64, cutoff: f64, half_width: f64) -> f64 {
    if u.abs() >= half_width {
        return 0.0;
    }
    let x = 2.0 * cutoff * u;
    let sinc = if x.abs() < 1e-12 {
        1.0
    } else {
        (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x)
    };
    // Blackman window over [-half_width, half_width]
    let v = std::f64::consts::PI * u / half_width;
    let w = 0.42 + 0.5 * v.cos() + 0.08 * (2.0 * v).cos();
    2.0 * cutoff * sinc * w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stereo(rate: u32, ch: Vec<f64>) -> DeviceRecording<f64> {
        DeviceRecording::new(0, rate, vec![ch.clone(), ch]).unwrap()
    }

    #[test]
    fn decimate_48k_to_16k_length() {
        let rec = stereo(48_000, vec![0.0; 480_000]);
        let out = resample(&rec, 16_000).unwrap();
        assert_eq!(out.len(), 160_000);
        assert_eq!(out.sample_rate_hz, 16_000);
    }

    #[test]
    fn same_rate_is_identity() {
        let rec = stereo(16_000, (0..1000).map(|i| (i as f64).sin()).collect());
        assert_eq!(resample(&rec, 16_000).unwrap(), rec);
    }

    #[test]
    fn errors() {
        let rec = stereo(16_000, vec![0.0; 100]);
        assert!(resample(&rec, 0).is_err());
        assert!(resample(&rec, 48_000).is_err());
    }

    fn sine_amplitude_check(src: u32, dst: u32) {
        let f = 1000.0;
        let n = src as usize; // 1 s
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / src as f64).sin())
            .collect();
        let out = resample(&stereo(src, x), dst).unwrap();
        let y = out.channel(0);
        let trim = dst as usize / 10;
        let mut max_err: f64 = 0.0;
        for (i, &v) in y.iter().enumerate().take(y.len() - trim).skip(trim) {
            let expected = (2.0 * std::f64::consts::PI * f * i as f64 / dst as f64).sin();
            max_err = max_err.max((v - expected).abs());
        }
        assert!(max_err < 0.01, "{src}->{dst}: max error {max_err}");
    }

    #[test]
    fn sine_survives_decimation() {
        sine_amplitude_check(48_000, 16_000);
        sine_amplitude_check(44_100, 16_000);
    }

    #[test]
    fn out_of_band_tone_is_suppressed() {
        // 12 kHz cannot be represented at 16 kHz and must be filtered out.
        let n = 48_000;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 12_000.0 * i as f64 / 48_000.0).sin())
            .collect();
        let out = resample(&stereo(48_000, x), 16_000).unwrap();
        let y = &out.channel(0)[1600..14_400];
        let rms = (y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64).sqrt();
        assert!(rms < 1e-3, "alias rms {rms}");
    }
}
