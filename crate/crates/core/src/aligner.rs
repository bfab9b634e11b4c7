//! Conversion of raw recordings to the canonical representation: unit
//! conversion, axis remapping, resampling to 50 Hz and optional gravity
//! separation.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    new_id, validate_raw, CanonicalRecording, DeclaredUnit, LabelSpan, RawRecording, Sample,
    SampleTiming, Violation, CANONICAL_RATE_HZ,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("need at least 2 samples to resample, got {0}")]
    TooShort(usize),
    #[error("timestamps are not strictly increasing at index {0}")]
    NonMonotonicTimestamps(usize),
    #[error("invalid rate {0}")]
    InvalidRate(f64),
    #[error("gravity cutoff {cutoff_hz} Hz must lie in (0, {nyquist_hz}) Hz")]
    InvalidCutoff { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("recording is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidRecording(Vec<Violation>),
}

/// Signed permutation of the axes: output axis `i` is `sign[i] * input[source[i]]`.
///
/// Textual form lists the source of each output axis, e.g. `-y,x,z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct AxisMap {
    source: [usize; 3],
    negate: [bool; 3],
}

impl AxisMap {
    pub fn identity() -> Self {
        Self {
            source: [0, 1, 2],
            negate: [false; 3],
        }
    }

    pub fn new(source: [usize; 3], negate: [bool; 3]) -> Result<Self, String> {
        let mut seen = [false; 3];
        for &s in &source {
            if s > 2 || seen[s] {
                return Err(format!("axis sources {source:?} are not a permutation"));
            }
            seen[s] = true;
        }
        Ok(Self { source, negate })
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn apply(&self, s: &Sample) -> Sample {
        let mut out = [0.0; 3];
        for i in 0..3 {
            let v = s[self.source[i]];
            out[i] = if self.negate[i] { -v } else { v };
        }
        out
    }

    /// The induced 3×3 matrix (row = output axis).
    pub fn matrix(&self) -> [[i8; 3]; 3] {
        let mut m = [[0i8; 3]; 3];
        for i in 0..3 {
            m[i][self.source[i]] = if self.negate[i] { -1 } else { 1 };
        }
        m
    }
}

impl Default for AxisMap {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Display for AxisMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = ['x', 'y', 'z'];
        for i in 0..3 {
            if i > 0 {
                f.write_str(",")?;
            }
            if self.negate[i] {
                f.write_str("-")?;
            }
            write!(f, "{}", names[self.source[i]])?;
        }
        Ok(())
    }
}

impl FromStr for AxisMap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(format!("axis map {s:?} must name three axes"));
        }
        let mut source = [0; 3];
        let mut negate = [false; 3];
        for (i, p) in parts.iter().enumerate() {
            let (neg, name) = match p.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, p.strip_prefix('+').unwrap_or(p)),
            };
            source[i] = match name {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                _ => return Err(format!("unknown axis {p:?}")),
            };
            negate[i] = neg;
        }
        Self::new(source, negate)
    }
}

impl TryFrom<String> for AxisMap {
    type Error = String;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<AxisMap> for String {
    fn from(value: AxisMap) -> Self {
        value.to_string()
    }
}

/// First-order exponential low-pass used to estimate the gravity component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityFilterParams {
    pub cutoff_hz: f64,
}

impl Default for GravityFilterParams {
    fn default() -> Self {
        Self { cutoff_hz: 0.3 }
    }
}

impl GravityFilterParams {
    /// Smoothing factor `dt / (RC + dt)` with `RC = 1 / (2π·cutoff)`.
    pub fn alpha(&self, rate_hz: f64) -> f64 {
        let dt = 1.0 / rate_hz;
        let rc = 1.0 / (2.0 * PI * self.cutoff_hz);
        dt / (rc + dt)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GravityPolicy {
    #[default]
    KeepGravity,
    StripGravity,
}

/// Scales every component into m/s².
pub fn convert_units(samples: &[Sample], unit: DeclaredUnit) -> Vec<Sample> {
    let k = unit.to_si_factor();
    if k == 1.0 {
        return samples.to_vec();
    }
    samples.iter().map(|s| [s[0] * k, s[1] * k, s[2] * k]).collect()
}

fn lerp(a: &Sample, b: &Sample, frac: f64) -> Sample {
    if frac == 0.0 {
        return *a;
    }
    [
        a[0] + (b[0] - a[0]) * frac,
        a[1] + (b[1] - a[1]) * frac,
        a[2] + (b[2] - a[2]) * frac,
    ]
}

fn check_timing(n: usize, timing: &SampleTiming) -> Result<(), AlignError> {
    if n < 2 {
        return Err(AlignError::TooShort(n));
    }
    match timing {
        SampleTiming::Rate(hz) if !(hz.is_finite() && *hz > 0.0) => Err(AlignError::InvalidRate(*hz)),
        SampleTiming::Timestamps(ts) => {
            if ts.len() != n {
                return Err(AlignError::TooShort(ts.len().min(n)));
            }
            match ts.windows(2).position(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater)) {
                Some(i) => Err(AlignError::NonMonotonicTimestamps(i + 1)),
                None => Ok(()),
            }
        }
        SampleTiming::Rate(_) => Ok(()),
    }
}

/// Number of grid points `k / target_hz` that fit in `duration_s`.
fn grid_len(duration_s: f64, target_hz: f64) -> usize {
    // tolerate representation error in durations like (n-1)/rate
    (duration_s * target_hz + 1e-9).floor() as usize + 1
}

/// Linear interpolation onto the grid `t_k = k / target_hz`, starting at the
/// first sample's instant.
pub fn resample(samples: &[Sample], timing: &SampleTiming, target_hz: f64) -> Result<Vec<Sample>, AlignError> {
    if !(target_hz.is_finite() && target_hz > 0.0) {
        return Err(AlignError::InvalidRate(target_hz));
    }
    check_timing(samples.len(), timing)?;
    let n = samples.len();
    match timing {
        SampleTiming::Rate(rate) => {
            let m = grid_len((n - 1) as f64 / rate, target_hz);
            let mut out = Vec::with_capacity(m);
            for k in 0..m {
                // position in source sample units
                let p = (k as f64 * rate) / target_hz;
                let i = (p.floor() as usize).min(n - 1);
                if i == n - 1 {
                    out.push(samples[n - 1]);
                } else {
                    out.push(lerp(&samples[i], &samples[i + 1], p - i as f64));
                }
            }
            Ok(out)
        }
        SampleTiming::Timestamps(ts) => {
            let t0 = ts[0];
            let m = grid_len(ts[n - 1] - t0, target_hz);
            let mut out = Vec::with_capacity(m);
            let mut i = 0;
            for k in 0..m {
                let t = t0 + k as f64 / target_hz;
                while i + 1 < n - 1 && ts[i + 1] <= t {
                    i += 1;
                }
                if t >= ts[n - 1] {
                    out.push(samples[n - 1]);
                } else {
                    let frac = ((t - ts[i]) / (ts[i + 1] - ts[i])).clamp(0.0, 1.0);
                    out.push(lerp(&samples[i], &samples[i + 1], frac));
                }
            }
            Ok(out)
        }
    }
}

/// Time (seconds from the first sample) of the boundary before sample `index`;
/// `index == n` is one sample period past the last sample.
fn boundary_time(index: usize, n: usize, timing: &SampleTiming) -> f64 {
    match timing {
        SampleTiming::Rate(rate) => index as f64 / rate,
        SampleTiming::Timestamps(ts) => {
            if index < n {
                ts[index] - ts[0]
            } else {
                let last = ts[n - 1] - ts[0];
                last + (ts[n - 1] - ts[n - 2])
            }
        }
    }
}

/// Moves spans onto an `n_out`-sample grid at `target_hz` by rounding each
/// bound's time to the nearest grid index. Spans that collapse are dropped.
pub fn remap_spans(
    spans: &[LabelSpan],
    n_in: usize,
    timing: &SampleTiming,
    n_out: usize,
    target_hz: f64,
) -> Vec<LabelSpan> {
    let to_grid = |index: usize| -> usize {
        let t = boundary_time(index.min(n_in), n_in, timing);
        ((t * target_hz).round().max(0.0) as usize).min(n_out)
    };
    let mut out = Vec::with_capacity(spans.len());
    for span in spans {
        let (start, end) = (to_grid(span.start), to_grid(span.end));
        if start >= end {
            log::warn!(
                "label span {}..{} ({:?}) collapses after resampling; dropped",
                span.start,
                span.end,
                span.label
            );
            continue;
        }
        out.push(LabelSpan::new(start, end, span.label.clone()));
    }
    out.sort();
    out
}

/// Splits samples into a low-passed gravity estimate and the residual linear
/// acceleration `input - gravity`. The filter state starts at the first sample.
pub fn separate_gravity(
    samples: &[Sample],
    rate_hz: f64,
    params: &GravityFilterParams,
) -> Result<(Vec<Sample>, Vec<Sample>), AlignError> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(AlignError::InvalidRate(rate_hz));
    }
    let nyquist_hz = rate_hz / 2.0;
    if !(params.cutoff_hz > 0.0 && params.cutoff_hz < nyquist_hz) {
        return Err(AlignError::InvalidCutoff {
            cutoff_hz: params.cutoff_hz,
            nyquist_hz,
        });
    }
    let alpha = params.alpha(rate_hz);
    let mut gravity = Vec::with_capacity(samples.len());
    let mut linear = Vec::with_capacity(samples.len());
    let Some(first) = samples.first() else {
        return Ok((gravity, linear));
    };
    let mut state = *first;
    for s in samples {
        for a in 0..3 {
            state[a] += alpha * (s[a] - state[a]);
        }
        let mut g = [0.0; 3];
        let mut l = [0.0; 3];
        for a in 0..3 {
            (g[a], l[a]) = split_component(s[a], state[a]);
        }
        gravity.push(g);
        linear.push(l);
    }
    Ok((gravity, linear))
}

/// `(gravity, input - gravity)` such that their sum rounds back to `input`
/// where the filter output allows it. `input - l` is exact whenever
/// `|input| >= |gravity|`, so that candidate always reconstructs there.
fn split_component(input: f64, gravity: f64) -> (f64, f64) {
    let l = input - gravity;
    if gravity + l == input {
        return (gravity, l);
    }
    let adjusted = input - l;
    if adjusted + l == input {
        (adjusted, l)
    } else {
        (gravity, l)
    }
}

/// Full canonicalization pipeline. Raw labels pass through untranslated.
pub fn align(rec: &RawRecording, axis_map: &AxisMap, policy: GravityPolicy) -> Result<CanonicalRecording, AlignError> {
    let violations = validate_raw(rec);
    if !violations.is_empty() {
        return Err(AlignError::InvalidRecording(violations));
    }
    let si = convert_units(&rec.samples, rec.declared_unit);
    let oriented: Vec<Sample> = if axis_map.is_identity() {
        si
    } else {
        si.iter().map(|s| axis_map.apply(s)).collect()
    };
    let n_in = oriented.len();
    let mut samples = resample(&oriented, &rec.timing, CANONICAL_RATE_HZ)?;
    let label_spans = remap_spans(&rec.raw_label_spans, n_in, &rec.timing, samples.len(), CANONICAL_RATE_HZ);
    let mut includes_gravity = rec.includes_gravity;
    if policy == GravityPolicy::StripGravity && rec.includes_gravity {
        let (_, linear) = separate_gravity(&samples, CANONICAL_RATE_HZ, &GravityFilterParams::default())?;
        samples = linear;
        includes_gravity = false;
    }
    Ok(CanonicalRecording {
        recording_id: new_id(),
        dataset_id: rec.dataset_id.clone(),
        subject_id: rec.subject_id.clone(),
        sensor_kind: rec.sensor_kind,
        rate_hz: CANONICAL_RATE_HZ,
        includes_gravity,
        samples,
        label_spans,
    })
}
