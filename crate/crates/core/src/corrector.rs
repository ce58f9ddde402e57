//! The centroid error corrector.
//!
//! Training: lift the base model's inputs with a polynomial map, whiten the
//! lifted samples the base model got right, and take the direction of the
//! mean whitened error as a linear error detector. A small LDA learns which
//! confusion `(truth, predicted)` each error belongs to.
//!
//! Deployment: a flagged sample whose base prediction matches the predicted
//! confusion's `predicted` side is relabelled with its `truth` side.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::base::{fit_lda, BasePipeline, Classifier, GesturePredictor, LdaModel, DEFAULT_LDA_RIDGE};
use crate::error::{Error, Result};
use crate::features::{Dataset, GestureLabel, PolyFeatureMap};
use crate::linalg::{fit_pca_whitening, norm, Matrix, PcaWhitening, DEFAULT_EIGEN_FLOOR};

pub const CORRECTOR_FORMAT_VERSION: u32 = 1;

/// A confusion: the base model said `predicted` where the truth was `truth`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ErrorType {
    pub truth: GestureLabel,
    pub predicted: GestureLabel,
}

impl ErrorType {
    pub fn new(truth: GestureLabel, predicted: GestureLabel) -> Result<Self> {
        if truth == predicted {
            return Err(Error::Contract(format!("{truth} -> {predicted} is not an error")));
        }
        Ok(Self { truth, predicted })
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.truth, self.predicted)
    }
}

/// Row indices of a dataset split by whether the base model was right.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectnessSplit {
    pub predictions: Vec<GestureLabel>,
    pub correct: Vec<usize>,
    pub errors: Vec<usize>,
    /// Confusion of each entry of `errors`.
    pub error_types: Vec<ErrorType>,
}

/// Runs the base model over `data` and partitions it into right and wrong.
///
/// Returns [`Error::CorrectorNotNeeded`] when nothing was misclassified.
pub fn split_by_correctness(base: &impl GesturePredictor, data: &Dataset) -> Result<CorrectnessSplit> {
    let mut split = CorrectnessSplit {
        predictions: Vec::with_capacity(data.len()),
        correct: Vec::new(),
        errors: Vec::new(),
        error_types: Vec::new(),
    };
    for (i, (s, row)) in data.samples().iter().zip(data.flat().row_iter()).enumerate() {
        let p = base.predict_label(row)?;
        split.predictions.push(p);
        if p == s.label {
            split.correct.push(i);
        } else {
            split.errors.push(i);
            split.error_types.push(ErrorType::new(s.label, p)?);
        }
    }
    if split.errors.is_empty() {
        return Err(Error::CorrectorNotNeeded { samples: data.len() });
    }
    Ok(split)
}

/// Linear error detector `ε = [(û*, WH(φ(v) − x̄)) ≥ θ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCentroid", into = "RawCentroid")]
pub struct CentroidCorrector {
    map: PolyFeatureMap,
    /// Fitted on the lifted correct set; its mean is the correct centroid x̄.
    pca: PcaWhitening,
    error_direction: Vec<f64>,
    theta_min: f64,
    theta_max: f64,
    delta: f64,
    /// `HᵀWû*`, so a score is a single dot product in the lifted space.
    #[serde(skip)]
    lifted_direction: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawCentroid {
    map: PolyFeatureMap,
    pca: PcaWhitening,
    error_direction: Vec<f64>,
    theta_min: f64,
    theta_max: f64,
    delta: f64,
}

impl From<CentroidCorrector> for RawCentroid {
    fn from(c: CentroidCorrector) -> Self {
        RawCentroid {
            map: c.map,
            pca: c.pca,
            error_direction: c.error_direction,
            theta_min: c.theta_min,
            theta_max: c.theta_max,
            delta: c.delta,
        }
    }
}

impl TryFrom<RawCentroid> for CentroidCorrector {
    type Error = Error;

    fn try_from(r: RawCentroid) -> Result<Self> {
        CentroidCorrector::from_parts(r.map, r.pca, r.error_direction, r.theta_min, r.theta_max, r.delta)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Config(format!("delta must lie in [0, 1], got {delta}")));
    }
    Ok(())
}

/// `θ_min + Δ(θ_max − θ_min)`, exact at both ends.
pub fn threshold(theta_min: f64, theta_max: f64, delta: f64) -> f64 {
    ((1.0 - delta) * theta_min + delta * theta_max).clamp(theta_min, theta_max)
}

impl CentroidCorrector {
    /// Assembles a detector from its stored parts, validating shapes.
    pub fn from_parts(
        map: PolyFeatureMap,
        pca: PcaWhitening,
        error_direction: Vec<f64>,
        theta_min: f64,
        theta_max: f64,
        delta: f64,
    ) -> Result<Self> {
        check_delta(delta)?;
        if pca.input_dim() != map.output_dim() {
            return Err(Error::Contract(format!(
                "PCA input {} does not match lifted dimension {}",
                pca.input_dim(),
                map.output_dim()
            )));
        }
        if error_direction.len() != pca.output_dim() {
            return Err(Error::Contract(format!(
                "error direction has {} entries for {} components",
                error_direction.len(),
                pca.output_dim()
            )));
        }
        if (norm(&error_direction) - 1.0).abs() > 1e-10 {
            return Err(Error::Contract("error direction is not a unit vector".into()));
        }
        if !(theta_min.is_finite() && theta_max.is_finite() && theta_min <= theta_max) {
            return Err(Error::Contract(format!("bad threshold range [{theta_min}, {theta_max}]")));
        }
        let mut lifted_direction = vec![0.0; pca.input_dim()];
        for (i, &u) in error_direction.iter().enumerate() {
            let c = u * pca.whitening[i];
            lifted_direction
                .iter_mut()
                .zip(pca.components.row(i))
                .for_each(|(g, h)| *g += c * h);
        }
        Ok(Self {
            map,
            pca,
            error_direction,
            theta_min,
            theta_max,
            delta,
            lifted_direction,
        })
    }

    pub fn map(&self) -> &PolyFeatureMap {
        &self.map
    }

    pub fn pca(&self) -> &PcaWhitening {
        &self.pca
    }

    pub fn correct_centroid(&self) -> &[f64] {
        &self.pca.mean
    }

    pub fn error_direction(&self) -> &[f64] {
        &self.error_direction
    }

    pub fn theta_min(&self) -> f64 {
        self.theta_min
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn theta(&self) -> f64 {
        threshold(self.theta_min, self.theta_max, self.delta)
    }

    pub fn input_dim(&self) -> usize {
        self.map.input_dim()
    }

    /// Same detector with a different Δ.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        Ok(Self { delta, ..self.clone() })
    }

    fn check_input(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.input_dim() {
            return Err(Error::Contract(format!(
                "corrector expects {} features, got {}",
                self.input_dim(),
                v.len()
            )));
        }
        Ok(())
    }

    /// `(û*, WH(φ(v) − x̄))` using caller-provided lift storage.
    pub fn score_into(&self, v: &[f64], lifted: &mut [f64]) -> Result<f64> {
        self.check_input(v)?;
        self.map.lift_into(v, lifted)?;
        Ok(lifted
            .iter()
            .zip(&self.pca.mean)
            .zip(&self.lifted_direction)
            .map(|((x, m), g)| (x - m) * g)
            .sum())
    }

    pub fn score(&self, v: &[f64]) -> Result<f64> {
        let mut lifted = vec![0.0; self.map.output_dim()];
        self.score_into(v, &mut lifted)
    }

    /// `(ε, score)`; flags when the score reaches θ.
    pub fn detect(&self, v: &[f64]) -> Result<(bool, f64)> {
        let s = self.score(v)?;
        Ok((s >= self.theta(), s))
    }

    /// `‖WH(φ(v) − x̄)‖`, the whitened distance from the correct centroid.
    pub fn distance(&self, v: &[f64]) -> Result<f64> {
        self.check_input(v)?;
        Ok(norm(&self.pca.project_whiten(&self.map.lift(v)?)?))
    }
}

/// Fits the detector on base-model features of correct and erroneous samples.
pub fn train_corrector(correct: &Matrix, errors: &Matrix, map: PolyFeatureMap, delta: f64) -> Result<CentroidCorrector> {
    train_corrector_with_floor(correct, errors, map, delta, DEFAULT_EIGEN_FLOOR)
}

/// [`train_corrector`] with an explicit relative eigenvalue floor for the
/// whitening of the lifted correct set.
pub fn train_corrector_with_floor(
    correct: &Matrix,
    errors: &Matrix,
    map: PolyFeatureMap,
    delta: f64,
    eigen_floor: f64,
) -> Result<CentroidCorrector> {
    check_delta(delta)?;
    if correct.rows() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: correct.rows(),
        });
    }
    if errors.rows() < 1 {
        return Err(Error::CorrectorNotNeeded { samples: correct.rows() });
    }
    for m in [correct, errors] {
        if m.cols() != map.input_dim() {
            return Err(Error::Contract(format!(
                "feature map expects {} inputs, data has {}",
                map.input_dim(),
                m.cols()
            )));
        }
    }
    let lifted_correct = map.lift_matrix(correct)?;
    let pca = fit_pca_whitening(&lifted_correct, eigen_floor)?;
    drop(lifted_correct);
    let lifted_errors = map.lift_matrix(errors)?;
    let whitened_errors = pca.transform(&lifted_errors)?;
    let mut centre = vec![0.0; pca.output_dim()];
    for r in whitened_errors.row_iter() {
        centre.iter_mut().zip(r).for_each(|(c, x)| *c += x);
    }
    centre.iter_mut().for_each(|c| *c /= errors.rows() as f64);
    let len = norm(&centre);
    if !(len >= 1e-12) {
        return Err(Error::DegenerateErrorGeometry { norm: len });
    }
    let direction: Vec<f64> = centre.iter().map(|c| c / len).collect();
    log::debug!(
        "corrector: {} lifted features, {} whitened components, error centre norm {len:.3}",
        map.output_dim(),
        pca.output_dim()
    );

    // provisional thresholds; the real ones use the same scoring path as detect
    let mut c = CentroidCorrector::from_parts(map, pca, direction, 0.0, 0.0, delta)?;
    let mut lifted = vec![0.0; c.map.output_dim()];
    let mut error_min = f64::INFINITY;
    let mut all_max = f64::NEG_INFINITY;
    for r in errors.row_iter() {
        let s = c.score_into(r, &mut lifted)?;
        error_min = error_min.min(s);
        all_max = all_max.max(s);
    }
    for r in correct.row_iter() {
        all_max = all_max.max(c.score_into(r, &mut lifted)?);
    }
    if !(error_min.is_finite() && all_max.is_finite()) {
        return Err(Error::Numeric("non-finite detector score".into()));
    }
    c.theta_min = error_min;
    c.theta_max = all_max;
    Ok(c)
}

/// Predicts the confusion behind a flagged sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ErrorTypeModel {
    /// Only one confusion had enough samples.
    Constant { error_type: ErrorType },
    Lda { types: Vec<ErrorType>, lda: LdaModel },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTypeClassifier {
    pub input_dim: usize,
    pub model: ErrorTypeModel,
    /// Confusions left out for having fewer than `min_class` samples.
    pub dropped: Vec<(ErrorType, usize)>,
}

pub const DEFAULT_MIN_ERROR_CLASS: usize = 2;

pub fn train_error_types(errors: &Matrix, types: &[ErrorType], min_class: usize) -> Result<ErrorTypeClassifier> {
    if errors.rows() != types.len() {
        return Err(Error::Contract(format!(
            "{} error rows but {} error types",
            errors.rows(),
            types.len()
        )));
    }
    let min_class = min_class.max(1);
    let mut counts: BTreeMap<ErrorType, usize> = BTreeMap::new();
    for t in types {
        *counts.entry(*t).or_default() += 1;
    }
    let (kept, dropped): (Vec<_>, Vec<_>) = counts.into_iter().partition(|(_, n)| *n >= min_class);
    if kept.is_empty() {
        return Err(Error::NoErrorTypes {
            min_class,
            dropped: dropped.iter().map(|(_, n)| n).sum(),
        });
    }
    for (t, n) in &dropped {
        log::info!("error type {t} dropped: {n} sample(s) < {min_class}");
    }
    let model = if kept.len() == 1 {
        ErrorTypeModel::Constant { error_type: kept[0].0 }
    } else {
        let kept_types: Vec<ErrorType> = kept.iter().map(|(t, _)| *t).collect();
        let rows: Vec<usize> = (0..types.len()).filter(|&i| kept_types.contains(&types[i])).collect();
        let labels: Vec<usize> = rows
            .iter()
            .map(|&i| kept_types.iter().position(|t| *t == types[i]).expect("kept"))
            .collect();
        let lda = fit_lda(&errors.select_rows(&rows), &labels, DEFAULT_LDA_RIDGE)?;
        ErrorTypeModel::Lda { types: kept_types, lda }
    };
    Ok(ErrorTypeClassifier {
        input_dim: errors.cols(),
        model,
        dropped,
    })
}

impl ErrorTypeClassifier {
    pub fn classify(&self, v: &[f64]) -> Result<ErrorType> {
        if v.len() != self.input_dim {
            return Err(Error::Contract(format!(
                "error-type classifier expects {} features, got {}",
                self.input_dim,
                v.len()
            )));
        }
        match &self.model {
            ErrorTypeModel::Constant { error_type } => Ok(*error_type),
            ErrorTypeModel::Lda { types, lda } => Ok(types[lda.predict(v)?]),
        }
    }

    pub fn types(&self) -> Vec<ErrorType> {
        match &self.model {
            ErrorTypeModel::Constant { error_type } => vec![*error_type],
            ErrorTypeModel::Lda { types, .. } => types.clone(),
        }
    }
}

/// What the corrector did with one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOutcome {
    pub final_label: GestureLabel,
    pub flagged: bool,
    /// Set when the flagged prediction matched the predicted confusion and was rewritten.
    pub matched_type: Option<ErrorType>,
    pub score: f64,
}

/// The deployment rule given a score and, for flagged samples, the
/// predicted confusion.
pub fn decide(score: f64, theta: f64, error_type: Option<ErrorType>, y_pred: GestureLabel) -> CorrectionOutcome {
    let flagged = score >= theta;
    let matched_type = match error_type {
        Some(t) if flagged && t.predicted == y_pred => Some(t),
        _ => None,
    };
    CorrectionOutcome {
        final_label: matched_type.map_or(y_pred, |t| t.truth),
        flagged,
        matched_type,
        score,
    }
}

/// Detects, and if possible corrects, one base prediction. Without an
/// error-type classifier flagged samples are only reported.
pub fn correct_prediction(
    c: &CentroidCorrector,
    f: Option<&ErrorTypeClassifier>,
    v: &[f64],
    y_pred: GestureLabel,
) -> Result<CorrectionOutcome> {
    let (flagged, score) = c.detect(v)?;
    let error_type = match (flagged, f) {
        (true, Some(f)) => Some(f.classify(v)?),
        _ => None,
    };
    Ok(decide(score, c.theta(), error_type, y_pred))
}

// ---------------------------------------------------------------------------
// Bundles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectorConfig {
    /// Number of whitened base PCs fed to the corrector.
    pub pcs: usize,
    pub degree: usize,
    pub delta: f64,
    pub min_error_class: usize,
    /// Relative eigenvalue floor of the lifted-space whitening.
    pub eigen_floor: f64,
}

impl Default for CorrectorConfig {
    fn default() -> Self {
        Self {
            pcs: 8,
            degree: 9,
            delta: 0.2,
            min_error_class: DEFAULT_MIN_ERROR_CLASS,
            eigen_floor: DEFAULT_EIGEN_FLOOR,
        }
    }
}

impl CorrectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pcs == 0 {
            return Err(Error::Config("corrector PC count must be at least 1".into()));
        }
        if !(1..=9).contains(&self.degree) {
            return Err(Error::Config(format!("degree must be in 1..=9, got {}", self.degree)));
        }
        check_delta(self.delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CorrectorState {
    /// The base model made no training errors; predictions pass unchanged.
    PassThrough,
    /// Errors are flagged but no confusion had enough samples to relabel.
    DetectOnly { detector: CentroidCorrector },
    Full {
        detector: CentroidCorrector,
        error_types: ErrorTypeClassifier,
    },
}

/// Everything needed to correct a base model at deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorBundle {
    pub format_version: u32,
    pub config: CorrectorConfig,
    pub state: CorrectorState,
}

/// Summary of a corrector fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub samples: usize,
    pub correct: usize,
    pub errors: usize,
    pub error_type_counts: Vec<(ErrorType, usize)>,
    pub dropped: Vec<(ErrorType, usize)>,
    pub theta_min: Option<f64>,
    pub theta_max: Option<f64>,
    pub lifted_dim: usize,
    pub whitened_dim: usize,
}

/// Result of [`CorrectorBundle::train`].
pub struct Training {
    pub bundle: CorrectorBundle,
    pub report: TrainingReport,
    pub split: Option<CorrectnessSplit>,
}

impl CorrectorBundle {
    pub fn pass_through(config: CorrectorConfig) -> Self {
        Self {
            format_version: CORRECTOR_FORMAT_VERSION,
            config,
            state: CorrectorState::PassThrough,
        }
    }

    /// Fits detector and error-type model for `base` on a user's labelled data.
    pub fn train(base: &BasePipeline, data: &Dataset, config: CorrectorConfig) -> Result<Training> {
        config.validate()?;
        let mut report = TrainingReport {
            samples: data.len(),
            correct: data.len(),
            errors: 0,
            error_type_counts: Vec::new(),
            dropped: Vec::new(),
            theta_min: None,
            theta_max: None,
            lifted_dim: 0,
            whitened_dim: 0,
        };
        let split = match split_by_correctness(base, data) {
            Ok(s) => s,
            Err(Error::CorrectorNotNeeded { samples }) => {
                log::warn!("base model made no errors on {samples} samples; corrector passes predictions through");
                return Ok(Training {
                    bundle: Self::pass_through(config),
                    report,
                    split: None,
                });
            }
            Err(e) => return Err(e),
        };
        let features = base.whitened_pcs_matrix(data, config.pcs)?;
        let correct = features.select_rows(&split.correct);
        let errors = features.select_rows(&split.errors);
        let map = PolyFeatureMap::build(config.pcs, config.degree)?;
        let detector = train_corrector_with_floor(&correct, &errors, map, config.delta, config.eigen_floor)?;

        let mut counts: BTreeMap<ErrorType, usize> = BTreeMap::new();
        for t in &split.error_types {
            *counts.entry(*t).or_default() += 1;
        }
        report.correct = split.correct.len();
        report.errors = split.errors.len();
        report.error_type_counts = counts.into_iter().collect();
        report.theta_min = Some(detector.theta_min());
        report.theta_max = Some(detector.theta_max());
        report.lifted_dim = detector.map().output_dim();
        report.whitened_dim = detector.pca().output_dim();

        let state = match train_error_types(&errors, &split.error_types, config.min_error_class) {
            Ok(f) => {
                report.dropped = f.dropped.clone();
                CorrectorState::Full {
                    detector,
                    error_types: f,
                }
            }
            Err(Error::NoErrorTypes { min_class, dropped }) => {
                log::warn!("no error type has {min_class}+ samples ({dropped} dropped); detection only");
                report.dropped = report.error_type_counts.clone();
                CorrectorState::DetectOnly { detector }
            }
            Err(e) => return Err(e),
        };
        Ok(Training {
            bundle: Self {
                format_version: CORRECTOR_FORMAT_VERSION,
                config,
                state,
            },
            report,
            split: Some(split),
        })
    }

    pub fn detector(&self) -> Option<&CentroidCorrector> {
        match &self.state {
            CorrectorState::PassThrough => None,
            CorrectorState::DetectOnly { detector } | CorrectorState::Full { detector, .. } => Some(detector),
        }
    }

    pub fn error_types(&self) -> Option<&ErrorTypeClassifier> {
        match &self.state {
            CorrectorState::Full { error_types, .. } => Some(error_types),
            _ => None,
        }
    }

    /// Same bundle with the detector threshold moved to `delta`.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        check_delta(delta)?;
        let mut out = self.clone();
        out.config.delta = delta;
        match &mut out.state {
            CorrectorState::PassThrough => {}
            CorrectorState::DetectOnly { detector } | CorrectorState::Full { detector, .. } => {
                *detector = detector.with_delta(delta)?;
            }
        }
        Ok(out)
    }

    /// Corrects a prediction given the corrector features `v`.
    pub fn correct_features(&self, v: &[f64], y_pred: GestureLabel) -> Result<CorrectionOutcome> {
        match self.detector() {
            None => Ok(CorrectionOutcome {
                final_label: y_pred,
                flagged: false,
                matched_type: None,
                score: f64::NEG_INFINITY,
            }),
            Some(d) => correct_prediction(d, self.error_types(), v, y_pred),
        }
    }

    /// Runs base model and corrector on one flat window.
    pub fn correct(&self, base: &BasePipeline, flat: &[f64]) -> Result<(GestureLabel, CorrectionOutcome)> {
        let y_pred = base.predict_label(flat)?;
        let v = base.whitened_pcs(flat, self.config.pcs)?;
        Ok((y_pred, self.correct_features(&v, y_pred)?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bundle: Self = serde_json::from_str(&text)?;
        if bundle.format_version != CORRECTOR_FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported corrector version {}", bundle.format_version),
            ));
        }
        Ok(bundle)
    }
}

/// Wall-clock statistics of repeated calls, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub calls: usize,
    pub median_ns: u64,
    pub p99_ns: u64,
    pub max_ns: u64,
}

impl LatencyStats {
    fn from_samples(mut ns: Vec<u64>) -> Self {
        ns.sort_unstable();
        let q = |p: f64| ns[((ns.len() - 1) as f64 * p).round() as usize];
        Self {
            calls: ns.len(),
            median_ns: q(0.5),
            p99_ns: q(0.99),
            max_ns: *ns.last().expect("non-empty"),
        }
    }
}

/// Times `correct_prediction` on `calls` random standard-normal inputs.
pub fn correction_latency_probe(
    c: &CentroidCorrector,
    f: Option<&ErrorTypeClassifier>,
    calls: usize,
    seed: u64,
) -> Result<LatencyStats> {
    if calls == 0 {
        return Err(Error::Config("latency probe needs at least one call".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<(Vec<f64>, GestureLabel)> = (0..calls)
        .map(|_| {
            let v = (0..c.input_dim()).map(|_| rng.sample(StandardNormal)).collect();
            (v, GestureLabel::ALL[rng.random_range(0..GestureLabel::ALL.len())])
        })
        .collect();
    let mut times = Vec::with_capacity(calls);
    let mut sink = 0.0;
    for (v, y) in &inputs {
        let start = Instant::now();
        let out = correct_prediction(c, f, v, *y)?;
        times.push(start.elapsed().as_nanos() as u64);
        sink += out.score;
    }
    std::hint::black_box(sink);
    Ok(LatencyStats::from_samples(times))
}

/// Scores, base predictions and predicted confusions for a whole dataset,
/// computed once so the threshold can be varied cheaply.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDataset {
    pub truth: Vec<GestureLabel>,
    pub predictions: Vec<GestureLabel>,
    pub scores: Vec<f64>,
    /// Predicted confusion per sample, when an error-type model exists.
    pub error_types: Vec<Option<ErrorType>>,
}

impl ScoredDataset {
    pub fn compute(base: &BasePipeline, bundle: &CorrectorBundle, data: &Dataset) -> Result<Self> {
        let mut out = ScoredDataset {
            truth: data.labels(),
            predictions: Vec::with_capacity(data.len()),
            scores: Vec::with_capacity(data.len()),
            error_types: Vec::with_capacity(data.len()),
        };
        let mut lifted = bundle.detector().map(|d| vec![0.0; d.map().output_dim()]);
        for row in data.flat().row_iter() {
            out.predictions.push(base.predict_label(row)?);
            let v = base.whitened_pcs(row, bundle.config.pcs)?;
            let score = match (bundle.detector(), lifted.as_mut()) {
                (Some(d), Some(buf)) => d.score_into(&v, buf)?,
                _ => f64::NEG_INFINITY,
            };
            out.scores.push(score);
            out.error_types.push(bundle.error_types().map(|f| f.classify(&v)).transpose()?);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    /// Outcome of sample `i` at threshold `theta`.
    pub fn outcome(&self, i: usize, theta: f64) -> CorrectionOutcome {
        decide(self.scores[i], theta, self.error_types[i], self.predictions[i])
    }
}
