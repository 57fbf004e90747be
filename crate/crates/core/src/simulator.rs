//! Synthetic meeting scenes: free-field propagation from point sources to
//! two-microphone devices with independent clock offsets, sensor noise and
//! an alignment clap.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scoring::{ReferenceAnnotation, ReferenceSegment};
use crate::signal_io::DeviceRecording;

/// Taps of the fractional-delay interpolator.
pub const FRACTIONAL_DELAY_TAPS: usize = 32;
const CLAP_DURATION_S: f64 = 0.005;
const GATE_RAMP_S: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Generator {
    /// Gaussian noise band-limited to `band_hz`, amplitude-modulated at a
    /// syllabic rate.
    ModulatedNoise {
        band_hz: (f64, f64),
        #[serde(default = "default_modulation_hz")]
        modulation_hz: f64,
    },
    /// Harmonic series on `f0_hz` up to 7 kHz with the same modulation.
    Harmonic {
        f0_hz: f64,
        #[serde(default = "default_modulation_hz")]
        modulation_hz: f64,
    },
    /// First channel of a WAV file, looped; must match the scene rate.
    Wav { path: PathBuf },
}

fn default_modulation_hz() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub position_m: [f64; 2],
    pub generator: Generator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub position_m: [f64; 2],
    /// Direction of the mic-2 → mic-1 axis, degrees counter-clockwise from +x.
    pub orientation_deg: f64,
    #[serde(default = "default_spacing")]
    pub mic_spacing_m: f64,
    /// Scene time at which this device's first sample is captured.
    #[serde(default)]
    pub clock_offset_s: f64,
}

fn default_spacing() -> f64 {
    0.16
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub start_s: f64,
    pub end_s: f64,
    /// 0-based index into `sources`.
    pub source: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub duration_s: f64,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: u32,
    #[serde(default = "default_c")]
    pub speed_of_sound: f64,
    /// Speech-to-noise ratio at each device.
    pub snr_db: f64,
    #[serde(default)]
    pub clap_time_s: Option<f64>,
    /// Clap power above the device noise floor.
    #[serde(default = "default_clap_db")]
    pub clap_db: f64,
    /// Only 0 (anechoic) is supported.
    #[serde(default)]
    pub rt60_s: f64,
    pub sources: Vec<SourceSpec>,
    pub devices: Vec<DeviceSpec>,
    pub turns: Vec<Turn>,
}

fn default_rate() -> u32 {
    16_000
}
fn default_c() -> f64 {
    343.0
}
fn default_clap_db() -> f64 {
    30.0
}

impl SceneSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::InvalidScene(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidScene(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if !(self.duration_s > 0.0) || self.sample_rate_hz == 0 || !(self.speed_of_sound > 0.0) {
            return bad("duration, sample rate and speed of sound must be positive".into());
        }
        if self.rt60_s != 0.0 {
            return bad("only anechoic rendering (rt60_s = 0) is supported".into());
        }
        if self.sources.is_empty() || self.devices.is_empty() {
            return bad("a scene needs at least one source and one device".into());
        }
        for t in &self.turns {
            if !(t.start_s >= 0.0 && t.start_s < t.end_s && t.end_s <= self.duration_s) {
                return bad(format!("turn [{}, {}] outside the scene", t.start_s, t.end_s));
            }
            if t.source >= self.sources.len() {
                return bad(format!("turn references unknown source {}", t.source));
            }
        }
        let mut points: Vec<[f64; 2]> = self.sources.iter().map(|s| s.position_m).collect();
        points.extend(self.devices.iter().map(|d| d.position_m));
        for (i, a) in points.iter().enumerate() {
            for b in &points[i + 1..] {
                if (a[0] - b[0]).hypot(a[1] - b[1]) < 1e-6 {
                    return bad("source and device positions must be distinct".into());
                }
            }
        }
        for d in &self.devices {
            if !(d.mic_spacing_m > 0.0) {
                return bad("mic spacing must be positive".into());
            }
        }
        if let Some(c) = self.clap_time_s {
            if !(c >= 0.0 && c < self.duration_s) {
                return bad(format!("clap time {c} outside the scene"));
            }
        }
        Ok(())
    }

    /// World positions of the two microphones of `device` (mic 1 first).
    pub fn mic_positions(&self, device: usize) -> [[f64; 2]; 2] {
        let d = &self.devices[device];
        let (s, c) = d.orientation_deg.to_radians().sin_cos();
        let h = d.mic_spacing_m / 2.0;
        let [x, y] = d.position_m;
        [[x + h * c, y + h * s], [x - h * c, y - h * s]]
    }

    /// Direction of `source` seen from `device`, relative to its mic axis,
    /// folded onto `[0°, 180°]`.
    pub fn true_angle_deg(&self, source: usize, device: usize) -> f64 {
        let d = &self.devices[device];
        let s = self.sources[source].position_m;
        let world = (s[1] - d.position_m[1]).atan2(s[0] - d.position_m[0]).to_degrees();
        let rel = (world - d.orientation_deg).rem_euclid(360.0);
        if rel > 180.0 {
            360.0 - rel
        } else {
            rel
        }
    }

    /// Exact delay of mic 2 relative to mic 1 in samples.
    pub fn geometric_tdoa_samples(&self, source: usize, device: usize) -> f64 {
        let [m1, m2] = self.mic_positions(device);
        let s = self.sources[source].position_m;
        let r1 = (s[0] - m1[0]).hypot(s[1] - m1[1]);
        let r2 = (s[0] - m2[0]).hypot(s[1] - m2[1]);
        (r2 - r1) * self.sample_rate_hz as f64 / self.speed_of_sound
    }

    /// The turn schedule on device 0's clock.
    pub fn reference(&self) -> ReferenceAnnotation {
        let shift = self.devices.first().map_or(0.0, |d| d.clock_offset_s);
        ReferenceAnnotation {
            segments: self
                .turns
                .iter()
                .map(|t| ReferenceSegment {
                    start_s: t.start_s - shift,
                    end_s: t.end_s - shift,
                    speaker: format!("S{}", t.source + 1),
                })
                .collect(),
        }
    }
}

/// Three talkers around a table and three two-microphone devices near its
/// centre. Speech runs contiguously from 1 s for two minutes with turns of
/// 4 to 12 s; a clap at 0.5 s provides the alignment event.
pub fn benchmark_scene(clock_offsets_s: [f64; 3], snr_db: f64, turn_seed: u64) -> SceneSpec {
    let talker = |x: f64, y: f64, lo: f64| SourceSpec {
        position_m: [x, y],
        generator: Generator::ModulatedNoise {
            band_hz: (lo, 6000.0),
            modulation_hz: 4.0,
        },
    };
    let device = |x: f64, y: f64, orientation_deg: f64, clock_offset_s: f64| DeviceSpec {
        position_m: [x, y],
        orientation_deg,
        mic_spacing_m: 0.16,
        clock_offset_s,
    };
    SceneSpec {
        duration_s: 122.0,
        sample_rate_hz: 16_000,
        speed_of_sound: 343.0,
        snr_db,
        clap_time_s: Some(0.5),
        clap_db: 30.0,
        rt60_s: 0.0,
        sources: vec![talker(-1.6, 1.0, 150.0), talker(1.5, 1.3, 200.0), talker(0.2, -1.7, 120.0)],
        devices: vec![
            device(-0.4, 0.0, 0.0, clock_offsets_s[0]),
            device(0.4, 0.3, 60.0, clock_offsets_s[1]),
            device(0.2, -0.5, 120.0, clock_offsets_s[2]),
        ],
        turns: random_turn_schedule(3, 1.0, 121.0, 4.0, 12.0, turn_seed),
    }
}

/// Contiguous non-overlapping turns from `start_s` to `end_s`, each lasting
/// `[min_turn_s, max_turn_s]` and switching to a different source.
pub fn random_turn_schedule(
    num_sources: usize,
    start_s: f64,
    end_s: f64,
    min_turn_s: f64,
    max_turn_s: f64,
    seed: u64,
) -> Vec<Turn> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut turns = Vec::new();
    let mut t = start_s;
    let mut current = rng.random_range(0..num_sources);
    while t < end_s - 1e-9 {
        let len = rng.random_range(min_turn_s..=max_turn_s);
        let end = (t + len).min(end_s);
        turns.push(Turn {
            start_s: t,
            end_s: end,
            source: current,
        });
        t = end;
        if num_sources > 1 {
            let step = rng.random_range(1..num_sources);
            current = (current + step) % num_sources;
        }
    }
    turns
}

/// Renders every device recording and the reference annotation.
pub fn render(spec: &SceneSpec, seed: u64) -> Result<(Vec<DeviceRecording<f64>>, ReferenceAnnotation)> {
    spec.validate()?;
    let fs = spec.sample_rate_hz as f64;
    let scene_len = (spec.duration_s * fs).round() as usize;

    let signals: Vec<Vec<f64>> = (0..spec.sources.len())
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(100 + s as u64);
            let raw = generate(&spec.sources[s].generator, scene_len, fs, &mut rng)?;
            Ok(gate(raw, &spec.turns, s, fs))
        })
        .collect::<Result<_>>()?;

    let recordings: Vec<DeviceRecording<f64>> = (0..spec.devices.len())
        .into_par_iter()
        .map(|p| render_device(spec, p, &signals, scene_len, seed))
        .collect::<Result<_>>()?;

    let peak = recordings
        .iter()
        .flat_map(|r| r.channels().iter().flatten())
        .fold(0.0f64, |m, x| m.max(x.abs()));
    let gain = if peak > 0.0 { 0.9 / peak } else { 1.0 };
    let recordings = recordings.into_iter().map(|r| r.scaled(gain)).collect();
    Ok((recordings, spec.reference()))
}

/// Clean propagation, sensor noise and clap for one device, before the
/// global gain.
fn render_device(spec: &SceneSpec, p: usize, signals: &[Vec<f64>], scene_len: usize, seed: u64) -> Result<DeviceRecording<f64>> {
    let fs = spec.sample_rate_hz as f64;
    let dev = &spec.devices[p];
    let mics = spec.mic_positions(p);
    let mut clean = [vec![0.0; scene_len], vec![0.0; scene_len]];
    for (s, src) in spec.sources.iter().enumerate() {
        for (m, mic) in mics.iter().enumerate() {
            let dist = (src.position_m[0] - mic[0]).hypot(src.position_m[1] - mic[1]);
            // device sample i reads source sample i + shift
            let shift = (dev.clock_offset_s - dist / spec.speed_of_sound) * fs;
            add_delayed(&mut clean[m], &signals[s], shift, 1.0 / dist);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1000 + p as u64);
    let active = active_mask(&spec.turns, dev.clock_offset_s, scene_len, fs);
    let (mut power, mut count) = (0.0, 0usize);
    for ch in &clean {
        for (x, &a) in ch.iter().zip(&active) {
            if a {
                power += x * x;
                count += 1;
            }
        }
    }
    let speech_power = if count > 0 { power / count as f64 } else { 1.0 };
    let noise_sigma = (speech_power / 10f64.powf(spec.snr_db / 10.0)).sqrt();
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidScene(e.to_string()))?;
    let mut channels: Vec<Vec<f64>> = clean
        .iter()
        .map(|ch| ch.iter().map(|&x| x + noise.sample(&mut rng)).collect())
        .collect();

    if let Some(clap) = spec.clap_time_s {
        let mut burst_rng = ChaCha8Rng::seed_from_u64(seed);
        burst_rng.set_stream(5000);
        let amp = noise_sigma * 10f64.powf(spec.clap_db / 20.0);
        let len = (CLAP_DURATION_S * fs).round() as usize;
        let burst: Vec<f64> = (0..len).map(|_| amp * burst_rng.sample::<f64, _>(StandardNormal)).collect();
        let start = ((clap - dev.clock_offset_s) * fs).round();
        if start >= 0.0 {
            for ch in &mut channels {
                for (k, &b) in burst.iter().enumerate() {
                    if let Some(x) = ch.get_mut(start as usize + k) {
                        *x += b;
                    }
                }
            }
        }
    }
    DeviceRecording::new(p, spec.sample_rate_hz, channels)
}

fn generate(generator: &Generator, len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let modulation = |rate: f64, i: usize| {
        let t = i as f64 / fs;
        0.2 + 0.8 * (std::f64::consts::PI * rate * t + phase).sin().abs()
    };
    let mut x = match generator {
        Generator::ModulatedNoise { band_hz, modulation_hz } => {
            let mut x = bandlimited_noise(len, fs, *band_hz, rng);
            for (i, v) in x.iter_mut().enumerate() {
                *v *= modulation(*modulation_hz, i);
            }
            x
        }
        Generator::Harmonic { f0_hz, modulation_hz } => {
            let harmonics = ((7000.0 / f0_hz).floor() as usize).max(1);
            let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            (0..len)
                .map(|i| {
                    let t = i as f64 / fs;
                    let tone: f64 = phases
                        .iter()
                        .enumerate()
                        .map(|(h, ph)| (std::f64::consts::TAU * f0_hz * (h + 1) as f64 * t + ph).sin())
                        .sum();
                    tone * modulation(*modulation_hz, i)
                })
                .collect()
        }
        Generator::Wav { path } => {
            let reader = hound::WavReader::open(path).map_err(|source| Error::AudioRead {
                path: path.clone(),
                source,
            })?;
            let wav_spec = reader.spec();
            if wav_spec.sample_rate as f64 != fs {
                return Err(Error::InvalidScene(format!(
                    "{} is {} Hz but the scene is {fs} Hz",
                    path.display(),
                    wav_spec.sample_rate
                )));
            }
            let m = wav_spec.channels as usize;
            let samples: Vec<f64> = match wav_spec.sample_format {
                hound::SampleFormat::Float => reader.into_samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>(),
                hound::SampleFormat::Int => {
                    let scale = 1.0 / (1u64 << (wav_spec.bits_per_sample - 1)) as f64;
                    reader.into_samples::<i32>().map(|s| s.map(|v| v as f64 * scale)).collect()
                }
            }
            .map_err(|source| Error::AudioRead {
                path: path.clone(),
                source,
            })?;
            let mono: Vec<f64> = samples.chunks(m.max(1)).map(|c| c[0]).collect();
            if mono.is_empty() {
                return Err(Error::EmptyAudio);
            }
            (0..len).map(|i| mono[i % mono.len()]).collect()
        }
    };
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
    Ok(x)
}

fn bandlimited_noise(len: usize, fs: f64, (lo, hi): (f64, f64), rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..len)
        .map(|_| Complex::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(len - k) as f64 * fs / len as f64;
        if f < lo || f > hi {
            *c = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    buf.into_iter().map(|c| c.re / len as f64).collect()
}

/// Zeroes the signal outside the source's turns with short raised-cosine ramps.
fn gate(mut x: Vec<f64>, turns: &[Turn], source: usize, fs: f64) -> Vec<f64> {
    let ramp = GATE_RAMP_S * fs;
    let mut gain = vec![0.0; x.len()];
    for t in turns.iter().filter(|t| t.source == source) {
        let a = (t.start_s * fs).round() as usize;
        let b = ((t.end_s * fs).round() as usize).min(x.len());
        for (i, g) in gain.iter_mut().enumerate().take(b).skip(a) {
            let edge = ((i - a) as f64).min((b - 1 - i) as f64);
            let w = if edge < ramp {
                0.5 - 0.5 * (std::f64::consts::PI * edge / ramp).cos()
            } else {
                1.0
            };
            *g = f64::max(*g, w);
        }
    }
    x.iter_mut().zip(&gain).for_each(|(v, g)| *v *= g);
    x
}

/// Device samples during which some turn is active.
fn active_mask(turns: &[Turn], clock_offset_s: f64, len: usize, fs: f64) -> Vec<bool> {
    (0..len)
        .map(|i| {
            let t = i as f64 / fs + clock_offset_s;
            turns.iter().any(|tr| tr.start_s <= t && t < tr.end_s)
        })
        .collect()
}

/// Windowed-sinc fractional delay kernel for offset `frac ∈ [0, 1)`:
/// `h[k]` weights source sample `floor + k` for `k ∈ 1-N/2 ..= N/2`.
pub fn fractional_delay_kernel(frac: f64) -> [f64; FRACTIONAL_DELAY_TAPS] {
    let half = (FRACTIONAL_DELAY_TAPS / 2) as f64;
    let mut h = [0.0; FRACTIONAL_DELAY_TAPS];
    for (k, tap) in h.iter_mut().enumerate() {
        let offset = k as f64 + 1.0 - half;
        let u = offset - frac;
        let sinc = if u.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * u).sin() / (std::f64::consts::PI * u)
        };
        let v = std::f64::consts::PI * u / half;
        let window = if u.abs() >= half {
            0.0
        } else {
            0.42 + 0.5 * v.cos() + 0.08 * (2.0 * v).cos()
        };
        *tap = sinc * window;
    }
    h
}

/// `out[i] += gain · src(i + shift)` with band-limited interpolation.
fn add_delayed(out: &mut [f64], src: &[f64], shift: f64, gain: f64) {
    let base = shift.floor();
    let kernel = fractional_delay_kernel(shift - base);
    let base = base as i64;
    let first_tap = 1 - (FRACTIONAL_DELAY_TAPS / 2) as i64;
    let n = src.len() as i64;
    for (i, o) in out.iter_mut().enumerate() {
        let start = i as i64 + base + first_tap;
        if start + FRACTIONAL_DELAY_TAPS as i64 <= 0 || start >= n {
            continue;
        }
        let mut acc = 0.0;
        for (k, &h) in kernel.iter().enumerate() {
            let j = start + k as i64;
            if (0..n).contains(&j) {
                acc += h * src[j as usize];
            }
        }
        *o += gain * acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_device_scene() -> SceneSpec {
        SceneSpec {
            duration_s: 3.0,
            sample_rate_hz: 16_000,
            speed_of_sound: 343.0,
            snr_db: 30.0,
            clap_time_s: Some(0.5),
            clap_db: 30.0,
            rt60_s: 0.0,
            sources: vec![SourceSpec {
                position_m: [0.0, 2.0],
                generator: Generator::ModulatedNoise {
                    band_hz: (200.0, 7000.0),
                    modulation_hz: 4.0,
                },
            }],
            devices: vec![
                DeviceSpec {
                    position_m: [0.0, 0.0],
                    orientation_deg: 0.0,
                    mic_spacing_m: 0.16,
                    clock_offset_s: 0.0,
                },
                DeviceSpec {
                    position_m: [1.0, 0.0],
                    orientation_deg: 30.0,
                    mic_spacing_m: 0.16,
                    clock_offset_s: 0.1,
                },
            ],
            turns: vec![Turn {
                start_s: 1.0,
                end_s: 3.0,
                source: 0,
            }],
        }
    }

    #[test]
    fn broadside_source_has_zero_delay() {
        let scene = two_device_scene();
        assert!((scene.true_angle_deg(0, 0) - 90.0).abs() < 1e-9);
        assert!(scene.geometric_tdoa_samples(0, 0).abs() < 1e-9);
        let (recs, _) = render(&scene, 1).unwrap();
        // with zero inter-mic delay the clean parts match; noise differs
        let a = recs[0].channel(0);
        let b = recs[0].channel(1);
        let diff: f64 = a[20_000..40_000].iter().zip(&b[20_000..40_000]).map(|(x, y)| (x - y).powi(2)).sum();
        let energy: f64 = a[20_000..40_000].iter().map(|x| x * x).sum();
        assert!(diff / energy < 0.01);
    }

    #[test]
    fn deterministic_rendering() {
        let scene = two_device_scene();
        let (a, ra) = render(&scene, 7).unwrap();
        let (b, rb) = render(&scene, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        let (c, _) = render(&scene, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn angles_fold_onto_half_circle() {
        let scene = two_device_scene();
        let a = scene.true_angle_deg(0, 1);
        // source at (0, 2) seen from (1, 0): world angle atan2(2, -1)
        let world = 2f64.atan2(-1.0).to_degrees();
        assert!((a - (world - 30.0)).abs() < 1e-9);
    }

    #[test]
    fn fractional_kernel_interpolates_band_limited_signals() {
        let h = fractional_delay_kernel(0.3);
        let f = 0.05;
        let x: Vec<f64> = (0..200).map(|i| (std::f64::consts::TAU * f * i as f64).sin()).collect();
        let i = 100usize;
        let got: f64 = h.iter().enumerate().map(|(k, w)| w * x[i + k - 15]).sum();
        let want = (std::f64::consts::TAU * f * (i as f64 + 0.3)).sin();
        assert!((got - want).abs() < 1e-3);
    }

    #[test]
    fn schedule_is_contiguous_and_switches() {
        let turns = random_turn_schedule(3, 2.0, 122.0, 4.0, 12.0, 5);
        assert!((turns[0].start_s - 2.0).abs() < 1e-12);
        assert!((turns.last().unwrap().end_s - 122.0).abs() < 1e-9);
        for w in turns.windows(2) {
            assert_eq!(w[0].end_s, w[1].start_s);
            assert_ne!(w[0].source, w[1].source);
        }
    }

    #[test]
    fn invalid_scenes() {
        let mut s = two_device_scene();
        s.rt60_s = 0.6;
        assert!(s.validate().is_err());
        let mut s = two_device_scene();
        s.turns[0].end_s = 10.0;
        assert!(s.validate().is_err());
        let mut s = two_device_scene();
        s.devices[1].position_m = s.sources[0].position_m;
        assert!(s.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s = two_device_scene();
        let text = s.to_toml().unwrap();
        assert_eq!(SceneSpec::from_toml(&text).unwrap(), s);
    }
}
