//! Event data model: timestamped planar locations, observed sequences,
//! spatial regions, JSONL ingestion, and windowed dataset splitting.
//!
//! An [`EventSequence`] is the universal history object: events sorted
//! strictly ascending in time on `[0, t_end]`. Tied event times are rejected
//! at ingestion since every likelihood in the toolkit assumes `tᵢ < tᵢ₊₁`.

use crate::rng::{streams, SplitRng};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("non-finite value at event index {0}")]
    NonFinite(usize),
    #[error("non-monotone at index {0}")]
    NonMonotone(usize),
    #[error("event time {t} outside [0, {t_end}] at index {index}")]
    OutOfHorizon { index: usize, t: f64, t_end: f64 },
    #[error("out of region at index {0}")]
    OutOfRegion(usize),
    #[error("rectangle requires lo < hi componentwise")]
    BadRectangle,
    #[error("window_length must be positive, got {0}")]
    BadWindowLength(f64),
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("no usable windows (every window has fewer than 2 events)")]
    NoUsableWindows,
    #[error("sequence needs at least 2 events, got {0}")]
    TooFewEvents(usize),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single event at time `t` and planar location `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub s: [f64; 2],
}

impl Event {
    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self { t, s: [x, y] }
    }
}

/// Spatial domain: an axis-aligned rectangle or the whole plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpatialRegion {
    Rectangle { lo: [f64; 2], hi: [f64; 2] },
    UnboundedPlane,
}

impl SpatialRegion {
    pub fn rectangle(lo: [f64; 2], hi: [f64; 2]) -> Result<Self, DataError> {
        if lo[0] < hi[0] && lo[1] < hi[1] {
            Ok(Self::Rectangle { lo, hi })
        } else {
            Err(DataError::BadRectangle)
        }
    }

    pub fn unit_square() -> Self {
        Self::Rectangle {
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
        }
    }

    pub fn contains(&self, s: [f64; 2]) -> bool {
        match self {
            Self::UnboundedPlane => true,
            Self::Rectangle { lo, hi } => {
                s[0] >= lo[0] && s[0] <= hi[0] && s[1] >= lo[1] && s[1] <= hi[1]
            }
        }
    }

    pub fn area(&self) -> f64 {
        match self {
            Self::UnboundedPlane => f64::INFINITY,
            Self::Rectangle { lo, hi } => (hi[0] - lo[0]) * (hi[1] - lo[1]),
        }
    }

    /// Rectangle inflated by `factor` of its extent on every side.
    pub fn inflated(&self, factor: f64) -> Self {
        match self {
            Self::UnboundedPlane => *self,
            Self::Rectangle { lo, hi } => {
                let pad = [(hi[0] - lo[0]) * factor, (hi[1] - lo[1]) * factor];
                Self::Rectangle {
                    lo: [lo[0] - pad[0], lo[1] - pad[1]],
                    hi: [hi[0] + pad[0], hi[1] + pad[1]],
                }
            }
        }
    }
}

/// An observed event sequence with its observation horizon `t_end`.
///
/// Immutable after construction; construction enforces strict time ordering,
/// finiteness, and containment in `[0, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    events: Vec<Event>,
    t_end: f64,
}

impl EventSequence {
    pub fn new(events: Vec<Event>, t_end: f64) -> Result<Self, DataError> {
        if !t_end.is_finite() {
            return Err(DataError::NonFinite(usize::MAX));
        }
        for (i, e) in events.iter().enumerate() {
            if !e.t.is_finite() || !e.s[0].is_finite() || !e.s[1].is_finite() {
                return Err(DataError::NonFinite(i));
            }
            if e.t < 0.0 || e.t > t_end {
                return Err(DataError::OutOfHorizon {
                    index: i,
                    t: e.t,
                    t_end,
                });
            }
            if i > 0 && e.t <= events[i - 1].t {
                return Err(DataError::NonMonotone(i));
            }
        }
        Ok(Self { events, t_end })
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Time of the last event, if any.
    pub fn last_time(&self) -> Option<f64> {
        self.events.last().map(|e| e.t)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.events.iter().map(|e| e.t)
    }

    /// Bounding box of the event locations.
    pub fn bounding_box(&self) -> Option<SpatialRegion> {
        if self.events.is_empty() {
            return None;
        }
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for e in &self.events {
            for d in 0..2 {
                lo[d] = lo[d].min(e.s[d]);
                hi[d] = hi[d].max(e.s[d]);
            }
        }
        // Degenerate boxes (all events colinear) get a minimal extent.
        for d in 0..2 {
            if hi[d] - lo[d] < 1e-9 {
                lo[d] -= 0.5;
                hi[d] += 0.5;
            }
        }
        Some(SpatialRegion::Rectangle { lo, hi })
    }

    /// Rescale all times so the mean inter-event gap is 1; returns the new
    /// sequence and the applied scale factor (new = old * scale).
    pub fn rescaled_to_unit_gap(&self) -> Result<(Self, f64), DataError> {
        if self.events.len() < 2 {
            return Err(DataError::TooFewEvents(self.events.len()));
        }
        let span = self.events.last().unwrap().t - self.events[0].t;
        let mean_gap = span / (self.events.len() - 1) as f64;
        let scale = 1.0 / mean_gap;
        let events = self
            .events
            .iter()
            .map(|e| Event {
                t: e.t * scale,
                s: e.s,
            })
            .collect();
        Ok((Self::new(events, self.t_end * scale)?, scale))
    }
}

/// Checks sequence invariants plus containment of every location in `region`.
///
/// Returns the first offending event index inside the error.
pub fn validate_sequence(seq: &EventSequence, region: &SpatialRegion) -> Result<(), DataError> {
    for (i, e) in seq.events().iter().enumerate() {
        if !region.contains(e.s) {
            return Err(DataError::OutOfRegion(i));
        }
    }
    Ok(())
}

/// How to cut a long sequence into (input window, target event) examples.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SplitSpec {
    pub window_length: f64,
    /// (train, val, test) fractions; positive, summing to 1 within 1e-9.
    pub ratios: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(window_length: f64, ratios: [f64; 3], seed: u64) -> Result<Self, DataError> {
        if !(window_length > 0.0) {
            return Err(DataError::BadWindowLength(window_length));
        }
        let sum: f64 = ratios.iter().sum();
        if ratios.iter().any(|r| *r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DataError::BadRatios(ratios));
        }
        Ok(Self {
            window_length,
            ratios,
            seed,
        })
    }
}

/// One training example: the window's earlier events and its last event.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowExample {
    pub input: EventSequence,
    pub target: Event,
}

impl WindowExample {
    /// Time of the last input event.
    pub fn t_n(&self) -> f64 {
        self.input.last_time().expect("window inputs are non-empty")
    }
}

/// Shuffled train/val/test partition of window examples.
#[derive(Debug, Clone, Default)]
pub struct SplitDataset {
    pub train: Vec<WindowExample>,
    pub val: Vec<WindowExample>,
    pub test: Vec<WindowExample>,
}

impl SplitDataset {
    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn all_windows(&self) -> impl Iterator<Item = &WindowExample> {
        self.train
            .iter()
            .chain(self.val.iter())
            .chain(self.test.iter())
    }
}

/// Cuts `seq` into non-overlapping windows of duration `spec.window_length`
/// aligned at `k·window_length` from t = 0, forms (input, target) pairs from
/// every window holding at least two events, then shuffles with the seed and
/// slices into train/val/test by the ratios.
pub fn window_split(seq: &EventSequence, spec: &SplitSpec) -> Result<SplitDataset, DataError> {
    if seq.len() < 2 {
        return Err(DataError::TooFewEvents(seq.len()));
    }
    if !(spec.window_length > 0.0) {
        return Err(DataError::BadWindowLength(spec.window_length));
    }
    let wl = spec.window_length;
    let n_windows = (seq.t_end() / wl).ceil().max(1.0) as usize;

    let mut buckets: Vec<Vec<Event>> = vec![Vec::new(); n_windows];
    for e in seq.events() {
        let k = ((e.t / wl).floor() as usize).min(n_windows - 1);
        buckets[k].push(*e);
    }

    let mut examples = Vec::new();
    for (k, bucket) in buckets.into_iter().enumerate() {
        if bucket.len() < 2 {
            continue;
        }
        let target = *bucket.last().unwrap();
        let input_events: Vec<Event> = bucket[..bucket.len() - 1].to_vec();
        let window_end = ((k + 1) as f64 * wl).min(seq.t_end());
        // Input horizon stops at the target: the window is observed up to it.
        let input = EventSequence::new(input_events, window_end.min(target.t).max(0.0))
            .expect("window slices inherit ordering from the parent sequence");
        examples.push(WindowExample { input, target });
    }

    if examples.is_empty() {
        return Err(DataError::NoUsableWindows);
    }

    let mut rng = SplitRng::new(spec.seed).stream(streams::SHUFFLE);
    rng.shuffle(&mut examples);

    let n = examples.len();
    let n_train = ((n as f64) * spec.ratios[0]).floor() as usize;
    let n_val = ((n as f64) * spec.ratios[1]).floor() as usize;
    let mut it = examples.into_iter();
    let train: Vec<_> = it.by_ref().take(n_train).collect();
    let val: Vec<_> = it.by_ref().take(n_val).collect();
    let test: Vec<_> = it.collect();
    Ok(SplitDataset { train, val, test })
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    t_end: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonlEvent {
    t: f64,
    x: f64,
    y: f64,
}

/// Reads a JSONL event file: one `{"t": .., "x": .., "y": ..}` object per
/// line sorted by `t`, with an optional leading `{"t_end": ..}` header line.
/// Without a header, `t_end` defaults to the last event time.
pub fn read_jsonl(path: &Path) -> Result<EventSequence, DataError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut events = Vec::new();
    let mut t_end: Option<f64> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 0 {
            if let Ok(header) = serde_json::from_str::<JsonlHeader>(&line) {
                t_end = Some(header.t_end);
                continue;
            }
        }
        let ev: JsonlEvent = serde_json::from_str(&line).map_err(|source| DataError::Json {
            line: lineno + 1,
            source,
        })?;
        events.push(Event::new(ev.t, ev.x, ev.y));
    }
    let t_end = t_end.unwrap_or_else(|| events.last().map(|e| e.t).unwrap_or(0.0));
    EventSequence::new(events, t_end)
}

/// Writes the JSONL representation, always including the `t_end` header.
pub fn write_jsonl(seq: &EventSequence, path: &Path) -> Result<(), DataError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let header = serde_json::to_string(&JsonlHeader { t_end: seq.t_end() })
        .expect("header serialization cannot fail");
    writeln!(out, "{header}")?;
    for e in seq.events() {
        let line = serde_json::to_string(&JsonlEvent {
            t: e.t,
            x: e.s[0],
            y: e.s[1],
        })
        .expect("event serialization cannot fail");
        writeln!(out, "{line}")?;
    }
    Ok(())
}
