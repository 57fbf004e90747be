//! Coarse synchronization of device recordings on a shared impulsive
//! event (tap or clap), or on user-supplied offsets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::signal_io::DeviceRecording;

/// Aligned recordings must overlap by at least this long.
pub const MIN_OVERLAP_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventDetectorConfig {
    pub short_window_ms: f64,
    pub long_window_ms: f64,
    /// Short-term to preceding energy ratio that marks an onset.
    pub threshold_db: f64,
}

impl Default for EventDetectorConfig {
    fn default() -> Self {
        Self {
            short_window_ms: 5.0,
            long_window_ms: 100.0,
            threshold_db: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignMode {
    /// Detect the event inside `[start_s, end_s)` of every recording.
    AcousticEvent { start_s: f64, end_s: f64 },
    /// Time of each device's first sample on a common clock, in seconds.
    FixedOffsets(Vec<f64>),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignMethod {
    AcousticEvent,
    FixedOffsets,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Leading samples to drop from each device.
    pub offset_samples: Vec<i64>,
    pub method: AlignMethod,
    /// Detected event index per device (acoustic mode only).
    pub event_samples: Option<Vec<usize>>,
    /// Common length after trimming.
    pub overlap_samples: usize,
}

impl AlignmentResult {
    /// Trims every recording to the common origin and overlapping span.
    pub fn apply<T: Real>(&self, recs: &[DeviceRecording<T>]) -> Result<Vec<DeviceRecording<T>>> {
        recs.iter()
            .zip(&self.offset_samples)
            .map(|(r, &off)| r.trimmed(off as usize, self.overlap_samples))
            .collect()
    }

    /// Start of the aligned timeline expressed in device `p`'s own clock.
    pub fn origin_s(&self, device: usize, sample_rate_hz: u32) -> f64 {
        self.offset_samples[device] as f64 / sample_rate_hz as f64
    }
}

/// Per-sample power averaged over channels.
fn envelope<T: Real>(rec: &DeviceRecording<T>) -> Vec<f64> {
    let m = rec.num_channels() as f64;
    (0..rec.len())
        .map(|i| rec.channels().iter().map(|c| c[i].as_f64().powi(2)).sum::<f64>() / m)
        .collect()
}

/// Index of the dominant impulsive onset within `[start_s, end_s)`.
///
/// The onset statistic is the ratio of the mean power in the next short
/// window to the mean power over the preceding long window. The earliest
/// index reaching the threshold is refined to the first sample whose power
/// reaches a quarter of the local peak (half its amplitude).
pub fn detect_event<T: Real>(
    rec: &DeviceRecording<T>,
    search_window_s: (f64, f64),
    cfg: &EventDetectorConfig,
) -> Result<usize> {
    let rate = rec.sample_rate_hz as f64;
    let short = ((cfg.short_window_ms * 1e-3 * rate).round() as usize).max(1);
    let long = ((cfg.long_window_ms * 1e-3 * rate).round() as usize).max(1);
    let env = envelope(rec);
    let n = env.len();
    let mut prefix = vec![0.0; n + 1];
    for (i, &e) in env.iter().enumerate() {
        prefix[i + 1] = prefix[i] + e;
    }
    let mean = |a: usize, b: usize| (prefix[b] - prefix[a]) / (b - a) as f64;
    let threshold = 10f64.powf(cfg.threshold_db / 10.0);
    let tiny = 1e-30;

    // a full long window of history is needed before an onset can be judged
    let first = ((search_window_s.0.max(0.0) * rate).round() as usize).max(long);
    let last = ((search_window_s.1 * rate).round() as usize).min(n.saturating_sub(short));
    let not_found = || Error::NoEventDetected {
        device: rec.device_id,
        start_s: search_window_s.0,
        end_s: search_window_s.1,
    };
    let crossing = (first..last)
        .find(|&i| {
            let before = mean(i.saturating_sub(long), i);
            let after = mean(i, i + short);
            (after + tiny) / (before + tiny) >= threshold
        })
        .ok_or_else(not_found)?;

    let region = crossing..(crossing + 2 * short).min(n);
    let peak = env[region.clone()].iter().copied().fold(0.0, f64::max);
    region
        .into_iter()
        .find(|&j| env[j] >= 0.25 * peak && env[j] > 0.0)
        .ok_or_else(not_found)
}

/// Computes per-device trims so that the event (or supplied clock) origins
/// coincide, and the common span length.
pub fn align<T: Real>(recs: &[DeviceRecording<T>], mode: &AlignMode, cfg: &EventDetectorConfig) -> Result<AlignmentResult> {
    if recs.is_empty() {
        return Err(Error::InvalidParameter("no recordings to align".into()));
    }
    let rate = recs[0].sample_rate_hz;
    if recs.iter().any(|r| r.sample_rate_hz != rate) {
        return Err(Error::InvalidParameter("recordings must share a sample rate before alignment".into()));
    }
    let (offsets, method, events) = match mode {
        AlignMode::None => (vec![0i64; recs.len()], AlignMethod::None, None),
        AlignMode::AcousticEvent { start_s, end_s } => {
            let events = recs
                .iter()
                .map(|r| detect_event(r, (*start_s, *end_s), cfg))
                .collect::<Result<Vec<_>>>()?;
            let earliest = *events.iter().min().expect("non-empty");
            let offsets = events.iter().map(|&e| (e - earliest) as i64).collect();
            (offsets, AlignMethod::AcousticEvent, Some(events))
        }
        AlignMode::FixedOffsets(starts) => {
            if starts.len() != recs.len() {
                return Err(Error::InvalidParameter(format!(
                    "{} offsets supplied for {} recordings",
                    starts.len(),
                    recs.len()
                )));
            }
            let latest = starts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let offsets = starts.iter().map(|&o| ((latest - o) * rate as f64).round() as i64).collect();
            (offsets, AlignMethod::FixedOffsets, None)
        }
    };
    let overlap = recs
        .iter()
        .zip(&offsets)
        .map(|(r, &o)| r.len() as i64 - o)
        .min()
        .expect("non-empty")
        .max(0) as usize;
    let overlap_s = overlap as f64 / rate as f64;
    if overlap_s < MIN_OVERLAP_S {
        return Err(Error::OverlapTooShort(overlap_s));
    }
    Ok(AlignmentResult {
        offset_samples: offsets,
        method,
        event_samples: events,
        overlap_samples: overlap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn stereo(ch: Vec<f64>) -> DeviceRecording<f64> {
        DeviceRecording::new(0, 16_000, vec![ch.clone(), ch]).unwrap()
    }

    #[test]
    fn unit_impulse_in_silence() {
        let mut x = vec![0.0; 40_000];
        x[12_345] = 1.0;
        let idx = detect_event(&stereo(x), (0.0, 2.5), &EventDetectorConfig::default()).unwrap();
        assert!(idx.abs_diff(12_345) <= 16, "{idx}");
    }

    #[test]
    fn click_in_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut x: Vec<f64> = (0..64_000).map(|_| noise.sample(&mut rng)).collect();
        let click = Normal::new(0.0, 1.0).unwrap();
        for v in &mut x[32_000..32_080] {
            *v += click.sample(&mut rng);
        }
        let idx = detect_event(&stereo(x), (0.0, 4.0), &EventDetectorConfig::default()).unwrap();
        assert!(idx.abs_diff(32_000) <= 160, "{idx}");
    }

    #[test]
    fn silence_has_no_event() {
        let err = detect_event(&stereo(vec![0.0; 32_000]), (0.0, 2.0), &EventDetectorConfig::default());
        assert!(matches!(err, Err(Error::NoEventDetected { .. })));
    }

    #[test]
    fn pure_delay_gives_offset_difference() {
        let mut a = vec![0.0; 48_000];
        a[10_000] = 1.0;
        let mut b = vec![0.0; 48_000];
        b[10_800] = 1.0;
        let recs = [stereo(a), stereo(b)];
        let res = align(&recs, &AlignMode::AcousticEvent { start_s: 0.0, end_s: 2.0 }, &EventDetectorConfig::default()).unwrap();
        assert_eq!(res.offset_samples[1] - res.offset_samples[0], 800);
        assert_eq!(res.overlap_samples, 48_000 - 800);

        let aligned = res.apply(&recs).unwrap();
        let again = align(&aligned, &AlignMode::AcousticEvent { start_s: 0.0, end_s: 2.0 }, &EventDetectorConfig::default()).unwrap();
        assert!(again.offset_samples.iter().all(|&o| o.abs() <= 16));
    }

    #[test]
    fn none_and_fixed_modes() {
        let recs = [stereo(vec![0.0; 32_000]), stereo(vec![0.0; 32_000])];
        let res = align(&recs, &AlignMode::None, &EventDetectorConfig::default()).unwrap();
        assert_eq!(res.offset_samples, vec![0, 0]);
        let res = align(&recs, &AlignMode::FixedOffsets(vec![0.0, 0.25]), &EventDetectorConfig::default()).unwrap();
        assert_eq!(res.offset_samples, vec![4000, 0]);
        assert!(align(&recs, &AlignMode::FixedOffsets(vec![0.0]), &EventDetectorConfig::default()).is_err());
        let far = AlignMode::FixedOffsets(vec![0.0, 1.5]);
        assert!(matches!(align(&recs, &far, &EventDetectorConfig::default()), Err(Error::OverlapTooShort(_))));
    }
}
