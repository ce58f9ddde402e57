//! Threshold sweeps, the seven-way prediction event taxonomy, distance
//! histograms, the Fisher-separability intrinsic dimension and the base
//! model accuracy grid.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::base::{evaluate, BaseConfig, BasePipeline};
use crate::corrector::{threshold, CentroidCorrector, CorrectionOutcome, CorrectorBundle, ScoredDataset};
use crate::error::{Error, Result};
use crate::features::{Dataset, GestureLabel, PolyFeatureMap};
use crate::linalg::{dot, fit_pca_whitening, norm, Matrix, DEFAULT_EIGEN_FLOOR};
use crate::synth::SynthSplits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionEvent {
    CorrectedError,
    ErrorNotCorrectable,
    ErrorNotFound,
    ErrorIgnored,
    ChangedFalsePositive,
    IgnoredFalsePositive,
    KeptCorrect,
}

impl PredictionEvent {
    /// In the column order of `sweep.csv`.
    pub const ALL: [PredictionEvent; 7] = [
        PredictionEvent::CorrectedError,
        PredictionEvent::ErrorNotCorrectable,
        PredictionEvent::ErrorNotFound,
        PredictionEvent::ErrorIgnored,
        PredictionEvent::ChangedFalsePositive,
        PredictionEvent::IgnoredFalsePositive,
        PredictionEvent::KeptCorrect,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&e| e == self).expect("listed")
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PredictionEvent::CorrectedError => "corrected_err",
            PredictionEvent::ErrorNotCorrectable => "err_not_correctable",
            PredictionEvent::ErrorNotFound => "err_not_found",
            PredictionEvent::ErrorIgnored => "err_ignored",
            PredictionEvent::ChangedFalsePositive => "changed_fp",
            PredictionEvent::IgnoredFalsePositive => "ignored_fp",
            PredictionEvent::KeptCorrect => "kept_correct",
        }
    }

    /// Whether the final label of a sample with this event is right.
    pub fn ends_correct(self) -> bool {
        matches!(
            self,
            PredictionEvent::CorrectedError | PredictionEvent::IgnoredFalsePositive | PredictionEvent::KeptCorrect
        )
    }
}

impl fmt::Display for PredictionEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PredictionEvent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::Contract(format!("unknown event {s:?}")))
    }
}

pub fn classify_event(truth: GestureLabel, y_pred: GestureLabel, outcome: &CorrectionOutcome) -> PredictionEvent {
    use PredictionEvent::*;
    let matched = outcome.matched_type.is_some();
    match (y_pred == truth, outcome.flagged, matched) {
        (false, false, _) => ErrorNotFound,
        (false, true, false) => ErrorIgnored,
        (false, true, true) if outcome.final_label == truth => CorrectedError,
        (false, true, true) => ErrorNotCorrectable,
        (true, false, _) => KeptCorrect,
        (true, true, true) => ChangedFalsePositive,
        (true, true, false) => IgnoredFalsePositive,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts(pub [usize; 7]);

impl EventCounts {
    pub fn add(&mut self, e: PredictionEvent) {
        self.0[e.index()] += 1;
    }

    pub fn get(&self, e: PredictionEvent) -> usize {
        self.0[e.index()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// Corrected accuracy implied by the events alone.
    pub fn corrected_accuracy(&self) -> f64 {
        let right: usize = PredictionEvent::ALL
            .iter()
            .filter(|e| e.ends_correct())
            .map(|&e| self.get(e))
            .sum();
        ratio(right, self.total())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta: f64,
    pub theta: f64,
    pub tpr: f64,
    pub fpr: f64,
    pub events: EventCounts,
    pub base_accuracy: f64,
    /// Computed by comparing final labels with the truth.
    pub corrected_accuracy: f64,
    pub accuracy_delta: f64,
}

/// `n` evenly spaced Δ values from 0 to 1 inclusive.
pub fn delta_grid(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::Config(format!("sweep grid needs at least 2 points, got {n}")));
    }
    Ok((0..n).map(|i| i as f64 / (n - 1) as f64).collect())
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.is_empty() {
        return Err(Error::Config("empty Δ grid".into()));
    }
    if deltas.iter().any(|d| !(0.0..=1.0).contains(d)) {
        return Err(Error::Config("Δ values must lie in [0, 1]".into()));
    }
    if deltas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("Δ values must be sorted".into()));
    }
    Ok(())
}

/// One sweep point per Δ over precomputed scores. `range` is
/// `(θ_min, θ_max)`; `None` means nothing is ever flagged.
pub fn sweep_scored(scored: &ScoredDataset, range: Option<(f64, f64)>, deltas: &[f64]) -> Result<Vec<SweepPoint>> {
    check_deltas(deltas)?;
    let n = scored.len();
    let base_right = (0..n).filter(|&i| scored.predictions[i] == scored.truth[i]).count();
    let base_wrong = n - base_right;
    let mut points = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let theta = range.map_or(f64::INFINITY, |(lo, hi)| threshold(lo, hi, delta));
        let mut events = EventCounts::default();
        let (mut tp, mut fp, mut right) = (0, 0, 0);
        for i in 0..n {
            let outcome = scored.outcome(i, theta);
            let truth = scored.truth[i];
            events.add(classify_event(truth, scored.predictions[i], &outcome));
            if outcome.flagged {
                if scored.predictions[i] == truth {
                    fp += 1;
                } else {
                    tp += 1;
                }
            }
            right += usize::from(outcome.final_label == truth);
        }
        let base_accuracy = ratio(base_right, n);
        let corrected_accuracy = ratio(right, n);
        points.push(SweepPoint {
            delta,
            theta,
            tpr: ratio(tp, base_wrong),
            fpr: ratio(fp, base_right),
            events,
            base_accuracy,
            corrected_accuracy,
            accuracy_delta: corrected_accuracy - base_accuracy,
        });
    }
    Ok(points)
}

/// Scores `data` once with `bundle` and sweeps Δ.
pub fn sweep(base: &BasePipeline, bundle: &CorrectorBundle, data: &Dataset, deltas: &[f64]) -> Result<Vec<SweepPoint>> {
    check_deltas(deltas)?;
    let scored = ScoredDataset::compute(base, bundle, data)?;
    let range = bundle.detector().map(|d| (d.theta_min(), d.theta_max()));
    sweep_scored(&scored, range, deltas)
}

pub const SWEEP_HEADER: &str = "delta,theta,tpr,fpr,corrected_err,err_not_correctable,err_not_found,err_ignored,changed_fp,ignored_fp,kept_correct,base_acc,corrected_acc";

pub fn write_sweep_rows<W: Write>(out: &mut W, points: &[SweepPoint]) -> std::io::Result<()> {
    for p in points {
        write!(out, "{},{},{},{}", p.delta, p.theta, p.tpr, p.fpr)?;
        for c in p.events.0 {
            write!(out, ",{c}")?;
        }
        writeln!(out, ",{},{}", p.base_accuracy, p.corrected_accuracy)?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(mut out: W, points: &[SweepPoint]) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    write_sweep_rows(&mut out, points)
}

/// Sweep point with the largest accuracy gain; ties go to the smaller Δ.
pub fn best_point(points: &[SweepPoint]) -> Option<&SweepPoint> {
    points
        .iter()
        .fold(None, |best: Option<&SweepPoint>, p| match best {
            Some(b) if b.accuracy_delta >= p.accuracy_delta => Some(b),
            _ => Some(p),
        })
}

// ---------------------------------------------------------------------------
// Distance histograms
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub correct: Vec<usize>,
    pub errors: Vec<usize>,
}

/// Whitened distances of every row from the correct-set centroid.
pub fn whitened_distances(c: &CentroidCorrector, data: &Matrix) -> Result<Vec<f64>> {
    data.row_iter().map(|r| c.distance(r)).collect()
}

/// Equal-width histograms of whitened centroid distances on a shared range.
pub fn distance_histogram(c: &CentroidCorrector, correct: &Matrix, errors: &Matrix, bins: usize) -> Result<DistanceHistogram> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let dc = whitened_distances(c, correct)?;
    let de = whitened_distances(c, errors)?;
    let hi = dc.iter().chain(&de).copied().fold(0.0, f64::max);
    let hi = if hi > 0.0 { hi } else { 1.0 };
    let width = hi / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| i as f64 * width).collect();
    let count = |d: &[f64]| {
        let mut h = vec![0usize; bins];
        for &x in d {
            h[((x / width) as usize).min(bins - 1)] += 1;
        }
        h
    };
    Ok(DistanceHistogram {
        correct: count(&dc),
        errors: count(&de),
        edges,
    })
}

pub fn write_histogram_csv<W: Write>(mut out: W, h: &DistanceHistogram) -> std::io::Result<()> {
    writeln!(out, "bin_lo,bin_hi,count_correct,count_error")?;
    for i in 0..h.correct.len() {
        writeln!(out, "{},{},{},{}", h.edges[i], h.edges[i + 1], h.correct[i], h.errors[i])?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Intrinsic dimension
// ---------------------------------------------------------------------------

pub const MIN_INTDIM_SAMPLES: usize = 50;
pub const DEFAULT_ALPHA: f64 = 0.8;
const MAX_INTDIM: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum IntrinsicDimension {
    Estimate(f64),
    /// No pair of points was α-inseparable.
    AboveRange,
}

impl IntrinsicDimension {
    pub fn value(self) -> Option<f64> {
        match self {
            IntrinsicDimension::Estimate(v) => Some(v),
            IntrinsicDimension::AboveRange => None,
        }
    }
}

impl fmt::Display for IntrinsicDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntrinsicDimension::Estimate(v) => write!(f, "{v:.4}"),
            IntrinsicDimension::AboveRange => f.write_str("inf"),
        }
    }
}

/// `ln p_α(n)` with `p_α(n) = (1−α²)^{(n−1)/2} / (α√(2π(n−1)))`, the
/// probability that a point of the uniform distribution on the unit sphere
/// of `Rⁿ` is not α-separable from another one.
pub fn log_inseparability(n: f64, alpha: f64) -> f64 {
    0.5 * (n - 1.0) * (1.0 - alpha * alpha).ln() - alpha.ln() - 0.5 * (2.0 * std::f64::consts::PI * (n - 1.0)).ln()
}

/// Inverts [`log_inseparability`] by bisection on `n ∈ (1, 10⁴]`.
pub fn dimension_from_probability(p: f64, alpha: f64) -> IntrinsicDimension {
    if !(p > 0.0) {
        return IntrinsicDimension::AboveRange;
    }
    let target = p.ln();
    let (mut lo, mut hi) = (1.0 + 1e-12, MAX_INTDIM);
    if log_inseparability(hi, alpha) > target {
        return IntrinsicDimension::AboveRange;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if log_inseparability(mid, alpha) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 * hi {
            break;
        }
    }
    IntrinsicDimension::Estimate(0.5 * (lo + hi))
}

/// Fisher-separability estimate of the intrinsic dimension of the rows of
/// `data`: whiten, project to the unit sphere, measure the mean fraction of
/// other points with `(x̂, ŷ) > α`, and invert the uniform-sphere law.
pub fn intrinsic_dimension(data: &Matrix, alpha: f64) -> Result<IntrinsicDimension> {
    if data.rows() < MIN_INTDIM_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_INTDIM_SAMPLES,
            got: data.rows(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let pca = fit_pca_whitening(data, DEFAULT_EIGEN_FLOOR)?;
    let mut points = pca.transform(data)?;
    for i in 0..points.rows() {
        let row = points.row_mut(i);
        let len = norm(row);
        if len > 0.0 {
            row.iter_mut().for_each(|x| *x /= len);
        }
    }
    let n = points.rows();
    let mut above = 0usize;
    for i in 0..n {
        let xi = points.row(i);
        for j in i + 1..n {
            if dot(xi, points.row(j)) > alpha {
                above += 2;
            }
        }
    }
    let p = above as f64 / (n as f64 * (n - 1) as f64);
    Ok(dimension_from_probability(p, alpha))
}

/// One cell of the intrinsic-dimension grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntdimCell {
    pub pcs: usize,
    pub degree: usize,
    pub features: usize,
    pub dimension: IntrinsicDimension,
}

/// Intrinsic dimension of the first `pcs` whitened PCs of `data`, lifted to
/// each degree. Lifts with at least as many features as samples are
/// reported as above range without being computed: whitened, they form a
/// simplex where every pair of points is separable.
pub fn intdim_grid(data: &Matrix, pcs: &[usize], degrees: &[usize], alpha: f64) -> Result<Vec<IntdimCell>> {
    if data.rows() < MIN_INTDIM_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_INTDIM_SAMPLES,
            got: data.rows(),
        });
    }
    let pca = fit_pca_whitening(data, DEFAULT_EIGEN_FLOOR)?;
    let whitened = pca.transform(data)?;
    let mut cells = Vec::new();
    for &p in pcs {
        if p == 0 || p > whitened.cols() {
            return Err(Error::Config(format!(
                "cannot take {p} PCs from data with {} components",
                whitened.cols()
            )));
        }
        let lead = whitened.leading_columns(p);
        for &d in degrees {
            let features = crate::features::lifted_dim(p, d).map_or(usize::MAX, |m| m.min(usize::MAX as u128) as usize);
            let dimension = if features >= data.rows() {
                IntrinsicDimension::AboveRange
            } else {
                let map = PolyFeatureMap::build(p, d)?;
                intrinsic_dimension(&map.lift_matrix(&lead)?, alpha)?
            };
            cells.push(IntdimCell {
                pcs: p,
                degree: d,
                features,
                dimension,
            });
        }
    }
    Ok(cells)
}

pub fn write_intdim_csv<W: Write>(mut out: W, cells: &[IntdimCell]) -> std::io::Result<()> {
    writeln!(out, "pcs,degree,features,intrinsic_dim")?;
    for c in cells {
        writeln!(out, "{},{},{},{}", c.pcs, c.degree, c.features, c.dimension)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Base accuracy grid
// ---------------------------------------------------------------------------

pub const TABLE1_COLUMNS: [&str; 4] = ["base_train", "base_test", "new_user_train", "new_user_test"];
pub const TABLE1_ROWS: [&str; 2] = ["trained_on_base_train", "trained_on_new_user_train"];

/// Accuracy of the base model trained on base_train (row 0) and on
/// new_user_train (row 1), evaluated on all four splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Table1 {
    pub rows: [[f64; 4]; 2],
}

pub fn table1_report(config: &BaseConfig, splits: &SynthSplits) -> Result<Table1> {
    let sets = [
        &splits.base_train,
        &splits.base_test,
        &splits.new_user_train,
        &splits.new_user_test,
    ];
    let mut rows = [[0.0; 4]; 2];
    for (r, train) in [&splits.base_train, &splits.new_user_train].into_iter().enumerate() {
        let model = BasePipeline::fit(train, config)?;
        for (c, set) in sets.iter().enumerate() {
            rows[r][c] = evaluate(&model, set)?.accuracy;
        }
    }
    Ok(Table1 { rows })
}

pub fn write_table1_csv<W: Write>(mut out: W, t: &Table1) -> std::io::Result<()> {
    writeln!(out, "trained_on,{}", TABLE1_COLUMNS.join(","))?;
    for (name, row) in TABLE1_ROWS.iter().zip(&t.rows) {
        writeln!(out, "{name},{},{},{},{}", row[0], row[1], row[2], row[3])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrector::{decide, ErrorType};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use GestureLabel::{FlickIndex as C, IndexBend as A, Shoot as B};

    fn et(a: GestureLabel, b: GestureLabel) -> Option<ErrorType> {
        Some(ErrorType::new(a, b).unwrap())
    }

    #[test]
    fn events_follow_the_taxonomy() {
        use PredictionEvent::*;
        let ev = |truth, pred, score: f64, t| classify_event(truth, pred, &decide(score, 0.0, t, pred));
        assert_eq!(ev(A, B, 1.0, et(A, B)), CorrectedError);
        assert_eq!(ev(A, B, 1.0, et(C, B)), ErrorNotCorrectable);
        assert_eq!(ev(A, B, -1.0, et(A, B)), ErrorNotFound);
        assert_eq!(ev(A, B, 1.0, et(A, C)), ErrorIgnored);
        assert_eq!(ev(A, A, 1.0, et(C, A)), ChangedFalsePositive);
        assert_eq!(ev(A, A, 1.0, et(C, B)), IgnoredFalsePositive);
        assert_eq!(ev(A, A, -1.0, et(C, A)), KeptCorrect);
    }

    #[test]
    fn event_names_round_trip() {
        for e in PredictionEvent::ALL {
            assert_eq!(e.as_str().parse::<PredictionEvent>().unwrap(), e);
        }
        let cols: Vec<&str> = SWEEP_HEADER.split(',').skip(4).take(7).collect();
        let names: Vec<&str> = PredictionEvent::ALL.iter().map(|e| e.as_str()).collect();
        assert_eq!(cols, names);
    }

    fn toy_scored() -> ScoredDataset {
        ScoredDataset {
            truth: vec![A, A, B, B, C, C],
            predictions: vec![A, B, B, A, C, A],
            scores: vec![0.1, 0.9, 0.5, 0.7, -0.3, 0.2],
            error_types: vec![et(C, A), et(A, B), et(C, B), et(B, A), None, et(C, A)],
        }
    }

    #[test]
    fn sweep_points_are_consistent() {
        let s = toy_scored();
        let pts = sweep_scored(&s, Some((0.2, 0.9)), &delta_grid(11).unwrap()).unwrap();
        assert_eq!(pts[0].tpr, 1.0);
        for w in pts.windows(2) {
            assert!(w[1].tpr <= w[0].tpr && w[1].fpr <= w[0].fpr);
        }
        for p in &pts {
            assert_eq!(p.events.total(), 6);
            assert_eq!(p.events.corrected_accuracy(), p.corrected_accuracy);
            assert_eq!(p.base_accuracy, 0.5);
        }
        // Δ = 0: all three errors flagged and corrected; the 0.5 correct sample
        // is changed to C, the 0.1 one is not flagged: 5 of 6 end right.
        assert_eq!(pts[0].events.get(PredictionEvent::CorrectedError), 3);
        assert_eq!(pts[0].events.get(PredictionEvent::ChangedFalsePositive), 1);
        assert!((pts[0].corrected_accuracy - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn pass_through_sweep_changes_nothing() {
        let pts = sweep_scored(&toy_scored(), None, &[0.0, 1.0]).unwrap();
        for p in pts {
            assert_eq!((p.tpr, p.fpr, p.accuracy_delta), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn sweep_rejects_unsorted_grid() {
        assert!(matches!(sweep_scored(&toy_scored(), None, &[0.5, 0.1]), Err(Error::Config(_))));
        assert!(delta_grid(1).is_err());
    }

    #[test]
    fn best_point_prefers_smallest_delta_on_ties() {
        let mut pts = sweep_scored(&toy_scored(), Some((0.2, 0.9)), &[0.0, 0.5, 1.0]).unwrap();
        for p in &mut pts {
            p.accuracy_delta = 0.1;
        }
        assert_eq!(best_point(&pts).unwrap().delta, 0.0);
    }

    #[test]
    fn sweep_csv_layout() {
        let pts = sweep_scored(&toy_scored(), Some((0.2, 0.9)), &[0.0, 1.0]).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SWEEP_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 13));
    }

    fn sphere(k: usize, ambient: usize, n: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut x: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
            let l = norm(&x);
            x.iter_mut().for_each(|v| *v /= l);
            x.resize(ambient, 0.0);
            rows.push(x);
        }
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn inversion_recovers_dimension() {
        for n in [2.0, 3.5, 8.0, 40.0] {
            let p = log_inseparability(n, 0.8).exp();
            let got = dimension_from_probability(p, 0.8).value().unwrap();
            assert!((got - n).abs() < 1e-6 * n, "{n} -> {got}");
        }
        assert_eq!(dimension_from_probability(0.0, 0.8), IntrinsicDimension::AboveRange);
    }

    #[test]
    fn sphere_dimension_small_sample() {
        let est = intrinsic_dimension(&sphere(5, 20, 1500, 1), 0.8).unwrap().value().unwrap();
        assert!((4.0..=6.0).contains(&est), "{est}");
    }

    #[test]
    fn intdim_needs_fifty_samples() {
        assert!(matches!(
            intrinsic_dimension(&sphere(3, 5, 49, 2), 0.8),
            Err(Error::InsufficientSamples { needed: 50, got: 49 })
        ));
    }

    #[test]
    fn wide_data_is_above_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..60 * 80).map(|_| rng.sample(StandardNormal)).collect();
        let data = Matrix::new(60, 80, v).unwrap();
        assert_eq!(intrinsic_dimension(&data, 0.8).unwrap(), IntrinsicDimension::AboveRange);
    }

    #[test]
    fn histogram_of_planted_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut gauss = |rows: usize, shift: f64| {
            let v: Vec<f64> = (0..rows * 4)
                .map(|i| rng.sample::<f64, _>(StandardNormal) + if i % 4 == 0 { shift } else { 0.0 })
                .collect();
            Matrix::new(rows, 4, v).unwrap()
        };
        let correct = gauss(2000, 0.0);
        let errors = gauss(30, 0.0);
        let c = crate::corrector::train_corrector(&correct, &errors.clone(), PolyFeatureMap::build(4, 1).unwrap(), 0.5);
        // errors drawn from the same law: the error centre is tiny but non-zero
        let c = c.unwrap();
        let d = whitened_distances(&c, &correct).unwrap();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        // chi mean for k = 4 is √2·Γ(5/2)/Γ(2) ≈ 1.880
        assert!((mean - 1.880).abs() < 0.1 * 1.880, "{mean}");

        let far = gauss(30, 6.0);
        let c = crate::corrector::train_corrector(&correct, &far, PolyFeatureMap::build(4, 1).unwrap(), 0.5).unwrap();
        let h = distance_histogram(&c, &correct, &far, 40).unwrap();
        assert_eq!(h.correct.iter().sum::<usize>(), 2000);
        assert_eq!(h.errors.iter().sum::<usize>(), 30);
        let mut dc = whitened_distances(&c, &correct).unwrap();
        dc.sort_by(f64::total_cmp);
        let de = whitened_distances(&c, &far).unwrap();
        assert!(de.iter().copied().fold(f64::INFINITY, f64::min) > dc[dc.len() / 2]);
    }
}
