//! Gesture windows, the flat 100-feature layout, CSV persistence, and the
//! explicit polynomial feature lift.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Sensor channels: thumb, index, middle, ring, pinky.
pub const CHANNELS: usize = 5;
/// Frames per window (500 ms at 40 Hz).
pub const WINDOW: usize = 20;
pub const FLAT_DIM: usize = CHANNELS * WINDOW;
/// Largest lifted dimension a [`PolyFeatureMap`] may produce.
pub const MAX_LIFT_DIM: u128 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GestureLabel {
    IndexBend,
    Shoot,
    FlickIndex,
    FlickMiddle,
    None,
}

impl GestureLabel {
    pub const ALL: [GestureLabel; 5] = [
        GestureLabel::IndexBend,
        GestureLabel::Shoot,
        GestureLabel::FlickIndex,
        GestureLabel::FlickMiddle,
        GestureLabel::None,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GestureLabel::IndexBend => "index_bend",
            GestureLabel::Shoot => "shoot",
            GestureLabel::FlickIndex => "flick_index",
            GestureLabel::FlickMiddle => "flick_middle",
            GestureLabel::None => "none",
        }
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GestureLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Contract(format!("unknown gesture label {s:?}")))
    }
}

pub type Signal = [[f64; WINDOW]; CHANNELS];

/// One normalized 5×20 window.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureSample {
    signal: Signal,
    pub label: GestureLabel,
    pub user_id: u32,
}

impl GestureSample {
    pub fn new(signal: Signal, label: GestureLabel, user_id: u32) -> Result<Self> {
        for (c, ch) in signal.iter().enumerate() {
            for (t, &v) in ch.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Contract(format!(
                        "signal[{c}][{t}] = {v} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(Self {
            signal,
            label,
            user_id,
        })
    }

    pub fn signal(&self) -> &Signal {
        &self.signal
    }

    /// Channel-major flattening: features `20c..20c+19` hold channel `c`.
    pub fn flatten(&self) -> [f64; FLAT_DIM] {
        let mut out = [0.0; FLAT_DIM];
        for (c, ch) in self.signal.iter().enumerate() {
            out[c * WINDOW..(c + 1) * WINDOW].copy_from_slice(ch);
        }
        out
    }

    pub fn unflatten(flat: &[f64], label: GestureLabel, user_id: u32) -> Result<Self> {
        if flat.len() != FLAT_DIM {
            return Err(Error::Contract(format!(
                "expected {FLAT_DIM} features, got {}",
                flat.len()
            )));
        }
        let mut signal = [[0.0; WINDOW]; CHANNELS];
        for (c, ch) in signal.iter_mut().enumerate() {
            ch.copy_from_slice(&flat[c * WINDOW..(c + 1) * WINDOW]);
        }
        Self::new(signal, label, user_id)
    }
}

/// Per-channel min-max normalization into `[0, 1]`, clamping outliers.
pub fn normalize(raw: &Signal, lo: &[f64; CHANNELS], hi: &[f64; CHANNELS]) -> Result<Signal> {
    for c in 0..CHANNELS {
        if !(hi[c] > lo[c]) {
            return Err(Error::Config(format!(
                "channel {c}: upper bound {} must exceed lower bound {}",
                hi[c], lo[c]
            )));
        }
    }
    let mut out = [[0.0; WINDOW]; CHANNELS];
    for c in 0..CHANNELS {
        let span = hi[c] - lo[c];
        for t in 0..WINDOW {
            out[c][t] = ((raw[c][t] - lo[c]) / span).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

/// Ordered samples plus their flat `N×100` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<GestureSample>,
    flat: Matrix,
}

impl Dataset {
    pub fn new(samples: Vec<GestureSample>) -> Self {
        let mut values = Vec::with_capacity(samples.len() * FLAT_DIM);
        for s in &samples {
            values.extend_from_slice(&s.flatten());
        }
        let flat = Matrix::new(samples.len(), FLAT_DIM, values).expect("samples hold finite values in [0, 1]");
        Self { samples, flat }
    }

    pub fn samples(&self) -> &[GestureSample] {
        &self.samples
    }

    pub fn flat(&self) -> &Matrix {
        &self.flat
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<GestureLabel> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label.index()).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            flat: self.flat.select_rows(indices),
        }
    }

    pub fn user_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.samples.iter().map(|s| s.user_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Writes the dataset as CSV: `user_id,label,f0,...,f99`.
    ///
    /// Floats use the shortest representation that parses back to the same
    /// bits, so a write/read cycle is lossless.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["user_id".to_string(), "label".to_string()];
        header.extend((0..FLAT_DIM).map(|i| format!("f{i}")));
        w.write_record(&header).map_err(csv_io)?;
        let mut record = Vec::with_capacity(FLAT_DIM + 2);
        for (s, row) in self.samples.iter().zip(self.flat.row_iter()) {
            record.clear();
            record.push(s.user_id.to_string());
            record.push(s.label.as_str().to_string());
            record.extend(row.iter().map(|v| format!("{v:?}")));
            w.write_record(&record).map_err(csv_io)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads the format written by [`Dataset::write_csv`]. Lines starting
    /// with `#` are skipped.
    pub fn read_csv<R: Read>(input: R, origin: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let headers = r
            .headers()
            .map_err(|e| Error::format(origin, e.to_string()))?
            .clone();
        if headers.len() != FLAT_DIM + 2 || &headers[0] != "user_id" || &headers[1] != "label" {
            return Err(Error::format(
                origin,
                format!("expected header user_id,label,f0..f{}", FLAT_DIM - 1),
            ));
        }
        let mut samples = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(origin, e.to_string()))?;
            let bad = |m: String| Error::format(origin, format!("row {}: {m}", line + 1));
            let user_id: u32 = rec[0].parse().map_err(|e| bad(format!("user_id: {e}")))?;
            let label: GestureLabel = rec[1].parse().map_err(|e: Error| bad(e.to_string()))?;
            let mut flat = [0.0; FLAT_DIM];
            for (i, f) in flat.iter_mut().enumerate() {
                *f = rec[i + 2].parse().map_err(|e| bad(format!("f{i}: {e}")))?;
            }
            samples.push(GestureSample::unflatten(&flat, label, user_id).map_err(|e| bad(e.to_string()))?);
        }
        Ok(Dataset::new(samples))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::io("<csv>", std::io::Error::other(e.to_string()))
}

/// Explicit polynomial lift `φ`: every monomial of total degree `1..=d`.
///
/// Monomials are listed by degree, and within a degree in descending
/// lexicographic order of the exponent vector, e.g. for `n = 2, d = 2`:
/// `x₀, x₁, x₀², x₀x₁, x₁²`. The constant term is left out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolyMap", into = "RawPolyMap")]
pub struct PolyFeatureMap {
    input_dim: usize,
    degree: usize,
    exponents: Vec<Vec<u8>>,
    /// `(parent, var)`: monomial `j` equals monomial `parent` times `x[var]`.
    /// Degree-one entries use `parent = usize::MAX`.
    chain: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RawPolyMap {
    input_dim: usize,
    degree: usize,
    exponents: Vec<Vec<u8>>,
}

impl From<PolyFeatureMap> for RawPolyMap {
    fn from(m: PolyFeatureMap) -> Self {
        RawPolyMap {
            input_dim: m.input_dim,
            degree: m.degree,
            exponents: m.exponents,
        }
    }
}

impl TryFrom<RawPolyMap> for PolyFeatureMap {
    type Error = Error;

    fn try_from(raw: RawPolyMap) -> Result<Self> {
        let map = PolyFeatureMap::build(raw.input_dim, raw.degree)?;
        if map.exponents != raw.exponents {
            return Err(Error::Contract(
                "stored exponent table does not match the graded-lex enumeration".into(),
            ));
        }
        Ok(map)
    }
}

/// `C(n + d, d) − 1`, or `None` on overflow.
pub fn lifted_dim(n: usize, d: usize) -> Option<u128> {
    let mut c: u128 = 1;
    for i in 1..=d as u128 {
        c = c.checked_mul(n as u128 + i)? / i;
    }
    Some(c - 1)
}

impl PolyFeatureMap {
    pub fn build(n: usize, d: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("polynomial map needs at least one input".into()));
        }
        if !(1..=9).contains(&d) {
            return Err(Error::Config(format!("polynomial degree must be in 1..=9, got {d}")));
        }
        match lifted_dim(n, d) {
            Some(m) if m <= MAX_LIFT_DIM => {}
            other => {
                return Err(Error::Capacity(format!(
                    "degree-{d} lift of {n} inputs has {} features (limit {MAX_LIFT_DIM})",
                    other.map_or("overflowing".to_string(), |m| m.to_string())
                )))
            }
        }

        let mut exponents = Vec::new();
        let mut current = vec![0u8; n];
        for deg in 1..=d {
            enumerate_degree(&mut current, 0, deg, &mut exponents);
        }
        let index: HashMap<&[u8], usize> = exponents.iter().enumerate().map(|(i, e)| (e.as_slice(), i)).collect();
        let chain = exponents
            .iter()
            .map(|e| {
                let var = e.iter().position(|&p| p > 0).expect("non-constant monomial");
                let total: u32 = e.iter().map(|&p| p as u32).sum();
                if total == 1 {
                    (usize::MAX, var)
                } else {
                    let mut parent = e.clone();
                    parent[var] -= 1;
                    (index[parent.as_slice()], var)
                }
            })
            .collect();
        Ok(Self {
            input_dim: n,
            degree: d,
            exponents,
            chain,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn output_dim(&self) -> usize {
        self.exponents.len()
    }

    pub fn exponents(&self) -> &[Vec<u8>] {
        &self.exponents
    }

    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim()];
        self.lift_into(x, &mut out)?;
        Ok(out)
    }

    /// Writes `φ(x)` into `out`. Each monomial is one multiplication away
    /// from an earlier one, so the cost is linear in the output size.
    pub fn lift_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Contract(format!(
                "lift expects a {}-vector, got length {}",
                self.input_dim,
                x.len()
            )));
        }
        for j in 0..self.chain.len() {
            let (parent, var) = self.chain[j];
            out[j] = if parent == usize::MAX { x[var] } else { out[parent] * x[var] };
        }
        Ok(())
    }

    pub fn lift_matrix(&self, data: &Matrix) -> Result<Matrix> {
        let mut out = Matrix::zeros(data.rows(), self.output_dim());
        for i in 0..data.rows() {
            self.lift_into(data.row(i), out.row_mut(i))?;
        }
        Ok(out)
    }
}

fn enumerate_degree(current: &mut Vec<u8>, pos: usize, remaining: usize, out: &mut Vec<Vec<u8>>) {
    let n = current.len();
    if pos == n - 1 {
        current[pos] = remaining as u8;
        out.push(current.clone());
        current[pos] = 0;
        return;
    }
    for p in (0..=remaining).rev() {
        current[pos] = p as u8;
        enumerate_degree(current, pos + 1, remaining - p, out);
    }
    current[pos] = 0;
}

/// A 5-channel recording with gesture marks, as produced by the device.
#[derive(Debug, Clone)]
pub struct Stream {
    /// `channels[c][t]`, already normalized into `[0, 1]`.
    pub channels: [Vec<f64>; CHANNELS],
}

impl Stream {
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn window(&self, end: usize) -> Signal {
        let mut s = [[0.0; WINDOW]; CHANNELS];
        for (c, ch) in s.iter_mut().enumerate() {
            ch.copy_from_slice(&self.channels[c][end - WINDOW..end]);
        }
        s
    }
}

/// A labelled gesture occupying frames `start..end` (end exclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GestureMark {
    pub start: usize,
    pub end: usize,
    pub label: GestureLabel,
}

#[derive(Debug, Clone, Default)]
pub struct Windowing {
    pub samples: Vec<GestureSample>,
    /// Gestures shorter than one window, which produce no samples.
    pub skipped_short: usize,
}

/// Cuts a marked stream into labelled windows.
///
/// A window covers frames `e−20..e`. For a gesture `[start, end)` every `e`
/// in `[start + ⌈2(end−start)/3⌉, end]` gives one window, so the windows
/// slide from two thirds of the gesture to its end one frame at a time.
/// Gaps between gestures are tiled with non-overlapping `None` windows.
pub fn sliding_windows(stream: &Stream, marks: &[GestureMark], user_id: u32) -> Result<Windowing> {
    let t_len = stream.len();
    if stream.channels.iter().any(|c| c.len() != t_len) {
        return Err(Error::Contract("stream channels differ in length".into()));
    }
    if t_len < WINDOW {
        return Err(Error::Contract(format!(
            "stream has {t_len} frames, need at least {WINDOW}"
        )));
    }
    for w in marks.windows(2) {
        if w[1].start < w[0].end {
            return Err(Error::Contract("gesture marks must be sorted and non-overlapping".into()));
        }
    }
    if let Some(m) = marks.iter().find(|m| m.end > t_len || m.start > m.end) {
        return Err(Error::Contract(format!("mark {}..{} outside stream of {t_len} frames", m.start, m.end)));
    }

    let mut result = Windowing::default();
    let mut gap_start = 0;
    for mark in marks {
        push_none_windows(stream, gap_start, mark.start, user_id, &mut result.samples)?;
        gap_start = mark.end;

        let len = mark.end - mark.start;
        if len < WINDOW {
            result.skipped_short += 1;
            log::warn!("skipping {} gesture of {len} frames at {}", mark.label, mark.start);
            continue;
        }
        let first_end = (mark.start + (2 * len).div_ceil(3)).max(WINDOW);
        for end in first_end..=mark.end {
            result.samples.push(GestureSample::new(stream.window(end), mark.label, user_id)?);
        }
    }
    push_none_windows(stream, gap_start, t_len, user_id, &mut result.samples)?;
    Ok(result)
}

fn push_none_windows(stream: &Stream, from: usize, to: usize, user_id: u32, out: &mut Vec<GestureSample>) -> Result<()> {
    let mut start = from;
    while start + WINDOW <= to {
        out.push(GestureSample::new(stream.window(start + WINDOW), GestureLabel::None, user_id)?);
        start += WINDOW;
    }
    Ok(())
}
