//! End-to-end chain: resample, align, STFT, directional features, mixture
//! fit, frame labelling and segmentation.

use serde::{Deserialize, Serialize};

use crate::alignment::{align, AlignMode, AlignmentResult, EventDetectorConfig};
use crate::diarization::{apply_silence_gate, label_frames, Diarization};
use crate::directional::{directional_statistics, DirectionalConfig};
use crate::dmm::{fit, DmmConfig, FeatureSet, FitReport};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scoring::{oracle_labels, ReferenceAnnotation};
use crate::signal_io::{resample, stft, DeviceRecording, StftConfig, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignKind {
    Event,
    Fixed,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignConfig {
    pub mode: AlignKind,
    /// Search window for the event, seconds from the start of each recording.
    pub window_s: (f64, f64),
    /// Clock origin of each device for `Fixed`.
    pub offsets_s: Vec<f64>,
    pub detector: EventDetectorConfig,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            mode: AlignKind::Event,
            window_s: (0.0, 5.0),
            offsets_s: Vec::new(),
            detector: EventDetectorConfig::default(),
        }
    }
}

impl AlignConfig {
    pub fn mode(&self) -> AlignMode {
        match self.mode {
            AlignKind::Event => AlignMode::AcousticEvent {
                start_s: self.window_s.0,
                end_s: self.window_s.1,
            },
            AlignKind::Fixed => AlignMode::FixedOffsets(self.offsets_s.clone()),
            AlignKind::None => AlignMode::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub sample_rate_hz: u32,
    pub frame_ms: f64,
    /// Hop as a fraction of the frame length.
    pub hop_fraction: f64,
    pub window: Window,
    pub align: AlignConfig,
    pub directional: DirectionalConfig,
    pub dmm: DmmConfig,
    pub collar_s: f64,
    /// Segments shorter than this are merged into a neighbour.
    pub min_segment_s: f64,
    /// Frames this far below the loudest frame are labelled silence.
    pub silence_gate_db: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 16_000,
            frame_ms: 64.0,
            hop_fraction: 0.5,
            window: Window::Hann,
            align: AlignConfig::default(),
            directional: DirectionalConfig::default(),
            dmm: DmmConfig::default(),
            collar_s: 0.25,
            min_segment_s: 0.0,
            silence_gate_db: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    pub fn stft_config(&self) -> Result<StftConfig> {
        StftConfig::from_duration(self.sample_rate_hz, self.frame_ms, self.hop_fraction, self.window)
    }
}

/// Aligned features ready for fitting.
#[derive(Debug, Clone)]
pub struct FeatureStage<T> {
    pub alignment: AlignmentResult,
    pub features: FeatureSet<T>,
    /// Frame centres on device 0's clock.
    pub frame_times_s: Vec<f64>,
    pub frame_len_s: f64,
    /// Windowed frame energy averaged over devices and mics.
    pub frame_energy: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput<T> {
    pub stage: FeatureStage<T>,
    pub report: FitReport<T>,
    pub diarization: Diarization,
}

/// Resamples, aligns and extracts per-device directional statistics.
pub fn extract_features<T: Real>(recs: &[DeviceRecording<T>], cfg: &PipelineConfig) -> Result<FeatureStage<T>> {
    if recs.is_empty() {
        return Err(Error::InvalidParameter("no recordings".into()));
    }
    let resampled = recs
        .iter()
        .map(|r| resample(r, cfg.sample_rate_hz))
        .collect::<Result<Vec<_>>>()?;
    let alignment = align(&resampled, &cfg.align.mode(), &cfg.align.detector)?;
    let aligned = alignment.apply(&resampled)?;
    let stft_cfg = cfg.stft_config()?;

    let mut stats = Vec::with_capacity(aligned.len());
    let mut energy: Vec<f64> = Vec::new();
    let mut frame_times = Vec::new();
    let mut frame_len_s = 0.0;
    for rec in &aligned {
        let spectra = stft(rec, &stft_cfg)?;
        let n = spectra.num_frames();
        if energy.is_empty() {
            energy = vec![0.0; n];
            frame_times = spectra.frame_times_s.clone();
            frame_len_s = spectra.frame_len_s();
        }
        for (i, e) in energy.iter_mut().enumerate().take(n) {
            *e += spectra.frame_energy(i).as_f64() / aligned.len() as f64;
        }
        stats.push(directional_statistics(&spectra, &cfg.directional)?);
    }
    let features = FeatureSet::from_statistics(&stats)?;
    let n = features.num_frames();
    let origin = alignment.origin_s(0, cfg.sample_rate_hz);
    frame_times.truncate(n);
    frame_times.iter_mut().for_each(|t| *t += origin);
    energy.truncate(n);
    Ok(FeatureStage {
        alignment,
        features,
        frame_times_s: frame_times,
        frame_len_s,
        frame_energy: energy,
    })
}

/// Fits the mixture on extracted features and segments the result.
pub fn diarize_features<T: Real>(
    stage: FeatureStage<T>,
    num_sources: usize,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput<T>> {
    let report = fit(&stage.features, num_sources, &cfg.dmm)?;
    let mut labels = label_frames(&report.responsibilities);
    if let Some(db) = cfg.silence_gate_db {
        apply_silence_gate(&mut labels, &stage.frame_energy, db);
    }
    let diarization = Diarization::from_labels(labels, stage.frame_times_s.clone(), stage.frame_len_s, cfg.min_segment_s)?;
    Ok(PipelineOutput {
        stage,
        report,
        diarization,
    })
}

pub fn run<T: Real>(recs: &[DeviceRecording<T>], num_sources: usize, cfg: &PipelineConfig) -> Result<PipelineOutput<T>> {
    diarize_features(extract_features(recs, cfg)?, num_sources, cfg)
}

/// Single-label-per-frame diarization taken from the reference itself, on
/// the same frame grid as the system output.
pub fn oracle_diarization(
    reference: &ReferenceAnnotation,
    frame_times_s: &[f64],
    frame_len_s: f64,
    min_segment_s: f64,
) -> Result<Diarization> {
    let labels = oracle_labels(reference, frame_times_s)?;
    Diarization::from_labels(labels, frame_times_s.to_vec(), frame_len_s, min_segment_s)
}
