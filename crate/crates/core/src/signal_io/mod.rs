//! Device recordings, WAV input/output, resampling and STFT framing.

mod resample;
mod stft;

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

pub use resample::resample;
pub use stft::{stft, MultiChannelFrameSpectra, StftConfig, Window};

/// Synchronous multi-channel recording captured by one device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceRecording<T> {
    pub device_id: usize,
    pub sample_rate_hz: u32,
    channels: Vec<Vec<T>>,
    /// Samples trimmed from the start by alignment.
    pub start_offset_samples: i64,
}

impl<T: Real> DeviceRecording<T> {
    pub fn new(device_id: usize, sample_rate_hz: u32, channels: Vec<Vec<T>>) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidParameter("sample rate must be positive".into()));
        }
        if channels.len() < 2 {
            return Err(Error::TooFewChannels(channels.len()));
        }
        let len = channels[0].len();
        if len == 0 {
            return Err(Error::EmptyAudio);
        }
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::InvalidParameter("channels have unequal lengths".into()));
        }
        Ok(Self {
            device_id,
            sample_rate_hz,
            channels,
            start_offset_samples: 0,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn channel(&self, m: usize) -> &[T] {
        &self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<T>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<T>> {
        self.channels
    }

    /// Drops `start` leading samples and keeps at most `len` samples after
    /// them. `start_offset_samples` accumulates the trimmed amount.
    pub fn trimmed(&self, start: usize, len: usize) -> Result<Self> {
        if start >= self.len() {
            return Err(Error::InvalidParameter(format!(
                "trim start {start} beyond recording length {}",
                self.len()
            )));
        }
        let end = (start + len).min(self.len());
        let channels = self.channels.iter().map(|c| c[start..end].to_vec()).collect();
        let mut out = Self::new(self.device_id, self.sample_rate_hz, channels)?;
        out.start_offset_samples = self.start_offset_samples + start as i64;
        Ok(out)
    }

    pub fn scaled(&self, gain: T) -> Self {
        let mut out = self.clone();
        for c in &mut out.channels {
            for x in c.iter_mut() {
                *x = *x * gain;
            }
        }
        out
    }

    /// Converts the sample type.
    pub fn cast<U: Real>(&self) -> DeviceRecording<U> {
        DeviceRecording {
            device_id: self.device_id,
            sample_rate_hz: self.sample_rate_hz,
            channels: self
                .channels
                .iter()
                .map(|c| c.iter().map(|&x| U::lit(x.as_f64())).collect())
                .collect(),
            start_offset_samples: self.start_offset_samples,
        }
    }
}

/// Reads a PCM (16/24/32-bit integer) or 32-bit float WAV file. Integer
/// samples are divided by `2^(bits-1)`, so the range is `[-1, 1)`.
pub fn load_wav<T: Real>(path: &Path) -> Result<DeviceRecording<T>> {
    let reader = hound::WavReader::open(path).map_err(|source| Error::AudioRead {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = reader.spec();
    let m = spec.channels as usize;
    let read_err = |source| Error::AudioRead {
        path: path.to_path_buf(),
        source,
    };
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, bits @ (16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(read_err)?
        }
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(read_err)?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!("{fmt:?} with {bits} bits per sample")))
        }
    };
    if interleaved.is_empty() {
        return Err(Error::EmptyAudio);
    }
    if m < 2 {
        return Err(Error::TooFewChannels(m));
    }
    let frames = interleaved.len() / m;
    let mut channels = vec![Vec::with_capacity(frames); m];
    for frame in interleaved.chunks_exact(m) {
        for (c, &v) in channels.iter_mut().zip(frame) {
            c.push(T::lit(v));
        }
    }
    DeviceRecording::new(0, spec.sample_rate, channels)
}

/// Writes the recording as a 32-bit float WAV.
pub fn write_wav<T: Real>(rec: &DeviceRecording<T>, path: &Path) -> Result<()> {
    let spec = hound::WavSpec {
        channels: rec.num_channels() as u16,
        sample_rate: rec.sample_rate_hz,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let write_err = |source| Error::AudioWrite {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(write_err)?;
    for i in 0..rec.len() {
        for c in rec.channels() {
            writer
                .write_sample(c[i].to_f32().unwrap_or(0.0))
                .map_err(write_err)?;
        }
    }
    writer.finalize().map_err(write_err)
}
