//! Diarization error rate with a forgiveness collar and optimal
//! hypothesis-to-reference speaker mapping, plus oracle frame labels.

use std::collections::BTreeMap;
use std::path::Path;

use crate::diarization::{parse_rttm, Diarization, SILENCE};
use crate::error::{Error, Result};

/// Above this many speakers the mapping uses the Hungarian algorithm
/// instead of enumerating permutations.
pub const EXHAUSTIVE_MAPPING_LIMIT: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub speaker: String,
}

/// Ground-truth speaker turns; segments may overlap.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceAnnotation {
    pub segments: Vec<ReferenceSegment>,
}

impl ReferenceAnnotation {
    pub fn new(segments: Vec<ReferenceSegment>) -> Result<Self> {
        if let Some(bad) = segments.iter().find(|s| !(s.start_s < s.end_s)) {
            return Err(Error::InvalidParameter(format!(
                "reference segment [{}, {}] has non-positive duration",
                bad.start_s, bad.end_s
            )));
        }
        Ok(Self { segments })
    }

    pub fn from_rttm(text: &str) -> Result<Self> {
        Self::new(
            parse_rttm(text)?
                .into_iter()
                .map(|r| ReferenceSegment {
                    start_s: r.start_s,
                    end_s: r.end_s,
                    speaker: r.speaker,
                })
                .collect(),
        )
    }

    /// `start,end,speaker` lines; a non-numeric first line is a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut segments = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: "expected start,end,speaker".into(),
                });
            }
            match (fields[0].parse::<f64>(), fields[1].parse::<f64>()) {
                (Ok(start_s), Ok(end_s)) => segments.push(ReferenceSegment {
                    start_s,
                    end_s,
                    speaker: fields[2].to_string(),
                }),
                _ if i == 0 => continue,
                _ => {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("non-numeric time in {line:?}"),
                    })
                }
            }
        }
        Self::new(segments)
    }

    /// Chooses RTTM or CSV by extension (`.csv` → CSV).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            Self::from_csv(&text)
        } else {
            Self::from_rttm(&text)
        }
    }

    /// Speaker labels ordered by first onset.
    pub fn speakers(&self) -> Vec<String> {
        let mut sorted: Vec<&ReferenceSegment> = self.segments.iter().collect();
        sorted.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        let mut out: Vec<String> = Vec::new();
        for s in sorted {
            if !out.contains(&s.speaker) {
                out.push(s.speaker.clone());
            }
        }
        out
    }

    /// `[first onset, last offset]`.
    pub fn extent(&self) -> Option<(f64, f64)> {
        let start = self.segments.iter().map(|s| s.start_s).reduce(f64::min)?;
        let end = self.segments.iter().map(|s| s.end_s).reduce(f64::max)?;
        Some((start, end))
    }

    /// Copy with every time shifted by `offset_s`.
    pub fn shifted(&self, offset_s: f64) -> Self {
        Self {
            segments: self
                .segments
                .iter()
                .map(|s| ReferenceSegment {
                    start_s: s.start_s + offset_s,
                    end_s: s.end_s + offset_s,
                    speaker: s.speaker.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerResult {
    pub der: f64,
    pub miss: f64,
    pub false_alarm: f64,
    pub speaker_error: f64,
    /// Hypothesis speaker id → reference label.
    pub mapping: BTreeMap<usize, String>,
    /// Reference speech time inside the scored region, in seconds.
    pub scored_time_s: f64,
    /// Miss + false alarm + confusion, in seconds.
    pub error_time_s: f64,
}

struct ScoredInterval {
    duration: f64,
    refs: Vec<usize>,
    hyps: Vec<usize>,
}

/// DER of `hyp` against `reference`. Time within `collar_s` of any reference
/// boundary is not scored. Scoring is restricted to `uem` when given, and
/// otherwise to the reference extent.
pub fn score_der(
    reference: &ReferenceAnnotation,
    hyp: &Diarization,
    collar_s: f64,
    uem: Option<(f64, f64)>,
) -> Result<DerResult> {
    if !(collar_s >= 0.0) {
        return Err(Error::InvalidParameter(format!("collar {collar_s} must be nonnegative")));
    }
    let (span_start, span_end) = match (uem, reference.extent()) {
        (_, None) => return Err(Error::EmptyReference),
        (Some(u), _) => u,
        (None, Some(e)) => e,
    };
    let ref_names = reference.speakers();
    let ref_index = |name: &str| ref_names.iter().position(|n| n == name).expect("known speaker");
    let ref_segs: Vec<(f64, f64, usize)> = reference
        .segments
        .iter()
        .map(|s| (s.start_s, s.end_s, ref_index(&s.speaker)))
        .collect();
    let hyp_ids: Vec<usize> = {
        let mut ids: Vec<usize> = hyp.segments.iter().map(|s| s.speaker).filter(|&s| s != SILENCE).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    let hyp_segs: Vec<(f64, f64, usize)> = hyp
        .segments
        .iter()
        .filter(|s| s.speaker != SILENCE && s.end_s > s.start_s)
        .map(|s| (s.start_s, s.end_s, hyp_ids.binary_search(&s.speaker).expect("collected")))
        .collect();

    let mut no_score: Vec<(f64, f64)> = Vec::new();
    if collar_s > 0.0 {
        for &(a, b, _) in &ref_segs {
            no_score.push((a - collar_s, a + collar_s));
            no_score.push((b - collar_s, b + collar_s));
        }
    }

    let mut cuts = vec![span_start, span_end];
    for &(a, b, _) in ref_segs.iter().chain(&hyp_segs) {
        cuts.extend([a, b]);
    }
    for &(a, b) in &no_score {
        cuts.extend([a, b]);
    }
    cuts.retain(|&t| t >= span_start && t <= span_end);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let active = |segs: &[(f64, f64, usize)], t: f64| -> Vec<usize> {
        let mut ids: Vec<usize> = segs.iter().filter(|s| s.0 <= t && t < s.1).map(|s| s.2).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    };
    let intervals: Vec<ScoredInterval> = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .filter_map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            if no_score.iter().any(|&(a, b)| a <= mid && mid < b) {
                return None;
            }
            Some(ScoredInterval {
                duration: w[1] - w[0],
                refs: active(&ref_segs, mid),
                hyps: active(&hyp_segs, mid),
            })
        })
        .collect();

    let mut overlap = vec![vec![0.0; ref_names.len()]; hyp_ids.len()];
    for iv in &intervals {
        for &h in &iv.hyps {
            for &r in &iv.refs {
                overlap[h][r] += iv.duration;
            }
        }
    }
    let assignment = optimal_mapping(&overlap);

    let (mut miss, mut fa, mut conf, mut total) = (0.0, 0.0, 0.0, 0.0);
    for iv in &intervals {
        let n_ref = iv.refs.len() as f64;
        let n_hyp = iv.hyps.len() as f64;
        let correct = iv
            .hyps
            .iter()
            .filter(|&&h| assignment[h].is_some_and(|r| iv.refs.contains(&r)))
            .count() as f64;
        miss += (n_ref - n_hyp).max(0.0) * iv.duration;
        fa += (n_hyp - n_ref).max(0.0) * iv.duration;
        conf += (n_ref.min(n_hyp) - correct) * iv.duration;
        total += n_ref * iv.duration;
    }
    let mapping = assignment
        .iter()
        .enumerate()
        .filter_map(|(h, r)| r.map(|r| (hyp_ids[h], ref_names[r].clone())))
        .collect();
    let error = miss + fa + conf;
    let frac = |x: f64| if total > 0.0 { x / total } else { 0.0 };
    Ok(DerResult {
        der: frac(error),
        miss: frac(miss),
        false_alarm: frac(fa),
        speaker_error: frac(conf),
        mapping,
        scored_time_s: total,
        error_time_s: error,
    })
}

/// One-to-one hypothesis→reference mapping maximizing total overlap.
/// Pairs with zero overlap are left unmapped.
pub fn optimal_mapping(overlap: &[Vec<f64>]) -> Vec<Option<usize>> {
    let h = overlap.len();
    let r = overlap.first().map_or(0, Vec::len);
    let n = h.max(r);
    if n == 0 {
        return vec![None; h];
    }
    let value = |i: usize, j: usize| if i < h && j < r { overlap[i][j] } else { 0.0 };
    let perm = if n <= EXHAUSTIVE_MAPPING_LIMIT {
        best_permutation(n, &value)
    } else {
        let max = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| value(i, j)).fold(0.0, f64::max);
        let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| max - value(i, j)).collect()).collect();
        hungarian(&cost)
    };
    (0..h)
        .map(|i| {
            let j = perm[i];
            (j < r && overlap[i][j] > 0.0).then_some(j)
        })
        .collect()
}

fn best_permutation(n: usize, value: &dyn Fn(usize, usize) -> f64) -> Vec<usize> {
    fn recurse(
        i: usize,
        n: usize,
        used: &mut [bool],
        current: &mut Vec<usize>,
        score: f64,
        best: &mut (f64, Vec<usize>),
        value: &dyn Fn(usize, usize) -> f64,
    ) {
        if i == n {
            if score > best.0 + 1e-12 {
                *best = (score, current.clone());
            }
            return;
        }
        for j in 0..n {
            if !used[j] {
                used[j] = true;
                current.push(j);
                recurse(i + 1, n, used, current, score + value(i, j), best, value);
                current.pop();
                used[j] = false;
            }
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    recurse(0, n, &mut vec![false; n], &mut Vec::with_capacity(n), 0.0, &mut best, value);
    best.1
}

/// Minimum-cost perfect matching on a square matrix (Kuhn–Munkres with
/// potentials, O(n³)). Returns the column assigned to each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual row/column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Best single-label-per-frame labelling from the reference: the speaker
/// active at each frame centre, with overlapped and silent frames taking
/// the previous frame's label. Frames before any label is known take the
/// first speaker. Labels are 1-based indices into [`ReferenceAnnotation::speakers`].
pub fn oracle_labels(reference: &ReferenceAnnotation, frame_times: &[f64]) -> Result<Vec<usize>> {
    if frame_times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("frame times must be monotone".into()));
    }
    let names = reference.speakers();
    if names.is_empty() {
        return Err(Error::EmptyReference);
    }
    let mut labels = Vec::with_capacity(frame_times.len());
    let mut previous: Option<usize> = None;
    for &t in frame_times {
        let mut active: Vec<usize> = reference
            .segments
            .iter()
            .filter(|s| s.start_s <= t && t < s.end_s)
            .map(|s| names.iter().position(|n| *n == s.speaker).expect("known") + 1)
            .collect();
        active.sort_unstable();
        active.dedup();
        let label = match (active.as_slice(), previous) {
            ([only], _) => *only,
            (_, Some(prev)) => prev,
            ([first, ..], None) => *first,
            ([], None) => 1,
        };
        labels.push(label);
        previous = Some(label);
    }
    Ok(labels)
}
