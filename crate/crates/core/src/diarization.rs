//! Frame labels from posteriors, merged speaker segments, and RTTM I/O.

use std::fmt::Write as _;
use std::io::Write;

use crate::directional::argmax_by;
use crate::dmm::Responsibilities;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Label used for frames removed by the silence gate.
pub const SILENCE: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    /// 1-based speaker id.
    pub speaker: usize,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diarization {
    /// 1-based speaker per frame, [`SILENCE`] for gated frames.
    pub frame_labels: Vec<usize>,
    pub frame_times_s: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl Diarization {
    pub fn from_labels(labels: Vec<usize>, frame_times_s: Vec<f64>, frame_len_s: f64, min_dur_s: f64) -> Result<Self> {
        let segments = segments_from_labels(&labels, &frame_times_s, frame_len_s, min_dur_s)?;
        Ok(Self {
            frame_labels: labels,
            frame_times_s,
            segments,
        })
    }

    /// Wraps a segment list without per-frame information.
    pub fn from_segments(segments: Vec<Segment>) -> Self {
        Self {
            frame_labels: Vec::new(),
            frame_times_s: Vec::new(),
            segments,
        }
    }

    pub fn num_speakers(&self) -> usize {
        self.segments.iter().map(|s| s.speaker).max().unwrap_or(0)
    }
}

/// `ŝ[n] = argmax_s γ_ns` as a 1-based id; ties go to the lower index.
pub fn label_frames<T: Real>(gamma: &Responsibilities<T>) -> Vec<usize> {
    gamma.rows().map(|row| argmax_by(row, |g| g) + 1).collect()
}

/// Replaces labels of frames whose energy is below `threshold_db` relative
/// to the loudest frame with [`SILENCE`].
pub fn apply_silence_gate(labels: &mut [usize], frame_energy: &[f64], threshold_db: f64) {
    let peak = frame_energy.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return;
    }
    let floor = peak * 10f64.powf(threshold_db / 10.0);
    for (l, &e) in labels.iter_mut().zip(frame_energy) {
        if e < floor {
            *l = SILENCE;
        }
    }
}

/// Run-length segments. Frame `n` owns the span between the midpoints to
/// its neighbours' centres; the first and last frames extend to their own
/// edges. Speech runs shorter than `min_dur_s` are absorbed by the longer
/// neighbouring speech run. Silence runs produce no segment.
pub fn segments_from_labels(labels: &[usize], frame_times: &[f64], frame_len_s: f64, min_dur_s: f64) -> Result<Vec<Segment>> {
    if labels.len() != frame_times.len() {
        return Err(Error::InvalidParameter("labels and frame times differ in length".into()));
    }
    if frame_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("frame times must be increasing".into()));
    }
    let n = labels.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let boundary = |i: usize| -> f64 {
        if i == 0 {
            frame_times[0] - frame_len_s / 2.0
        } else if i == n {
            frame_times[n - 1] + frame_len_s / 2.0
        } else {
            0.5 * (frame_times[i - 1] + frame_times[i])
        }
    };

    let mut runs: Vec<Segment> = Vec::new();
    let mut start = 0;
    for i in 1..=n {
        if i == n || labels[i] != labels[start] {
            runs.push(Segment {
                start_s: boundary(start),
                end_s: boundary(i),
                speaker: labels[start],
            });
            start = i;
        }
    }

    if min_dur_s > 0.0 {
        loop {
            let candidate = runs
                .iter()
                .enumerate()
                .filter(|(_, r)| r.speaker != SILENCE && r.duration() < min_dur_s)
                .filter(|(i, _)| neighbour_speech(&runs, *i).is_some())
                .min_by(|a, b| a.1.duration().total_cmp(&b.1.duration()))
                .map(|(i, _)| i);
            let Some(i) = candidate else { break };
            let target = neighbour_speech(&runs, i).expect("filtered above");
            runs[i].speaker = runs[target].speaker;
            runs = merge_adjacent(runs);
        }
    }
    Ok(runs.into_iter().filter(|r| r.speaker != SILENCE).collect())
}

/// Index of the longer adjacent speech run, preferring the earlier on ties.
fn neighbour_speech(runs: &[Segment], i: usize) -> Option<usize> {
    let prev = (i > 0 && runs[i - 1].speaker != SILENCE).then(|| i - 1);
    let next = (i + 1 < runs.len() && runs[i + 1].speaker != SILENCE).then_some(i + 1);
    match (prev, next) {
        (Some(a), Some(b)) => Some(if runs[b].duration() > runs[a].duration() { b } else { a }),
        (a, b) => a.or(b),
    }
}

fn merge_adjacent(runs: Vec<Segment>) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::with_capacity(runs.len());
    for r in runs {
        match out.last_mut() {
            Some(last) if last.speaker == r.speaker && (last.end_s - r.start_s).abs() < 1e-9 => last.end_s = r.end_s,
            _ => out.push(r),
        }
    }
    out
}

/// One `SPEAKER` line per segment, times with millisecond precision.
pub fn write_rttm(dia: &Diarization, recording_id: &str) -> String {
    let mut out = String::new();
    for seg in &dia.segments {
        writeln!(
            out,
            "SPEAKER {recording_id} 1 {:.3} {:.3} <NA> <NA> spk{} <NA> <NA>",
            seg.start_s,
            seg.duration(),
            seg.speaker
        )
        .expect("writing to a String cannot fail");
    }
    out
}

/// A `SPEAKER` record from an RTTM file.
#[derive(Debug, Clone, PartialEq)]
pub struct RttmRecord {
    pub recording_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub speaker: String,
}

/// Parses `SPEAKER` lines; blank lines, `;;` comments and other record
/// types are skipped.
pub fn parse_rttm(text: &str) -> Result<Vec<RttmRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with(";;") {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields[0] != "SPEAKER" {
            continue;
        }
        if fields.len() < 8 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected at least 8 fields, got {}", fields.len()),
            });
        }
        let num = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line: i + 1,
                msg: format!("{s:?}: {e}"),
            })
        };
        let start = num(fields[3])?;
        let dur = num(fields[4])?;
        out.push(RttmRecord {
            recording_id: fields[1].to_string(),
            start_s: start,
            end_s: start + dur,
            speaker: fields[7].to_string(),
        });
    }
    Ok(out)
}

/// Reads back a hypothesis written by [`write_rttm`]; speaker names must
/// have the form `spk<k>`.
pub fn diarization_from_rttm(text: &str) -> Result<Diarization> {
    let mut segments = Vec::new();
    for rec in parse_rttm(text)? {
        let speaker = rec
            .speaker
            .strip_prefix("spk")
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("speaker name {:?} is not spk<k>", rec.speaker),
            })?;
        segments.push(Segment {
            start_s: rec.start_s,
            end_s: rec.end_s,
            speaker,
        });
    }
    Ok(Diarization::from_segments(segments))
}

/// Per-frame CSV: time, label, and the posterior row.
pub fn write_posterior_csv<T: Real, W: Write>(mut out: W, dia: &Diarization, gamma: &Responsibilities<T>) -> Result<()> {
    write!(out, "time_s,label")?;
    for s in 1..=gamma.num_sources() {
        write!(out, ",gamma_{s}")?;
    }
    writeln!(out)?;
    for ((t, label), row) in dia.frame_times_s.iter().zip(&dia.frame_labels).zip(gamma.rows()) {
        write!(out, "{t:.3},{label}")?;
        for g in row {
            write!(out, ",{:.6}", g.as_f64())?;
        }
        writeln!(out)?;
    }
    Ok(())
}
