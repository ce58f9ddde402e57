//! Base gesture classifiers: PCA followed by one of KNN, LDA, Gaussian
//! naive Bayes, a one-vs-rest linear SVM, or a linear SVM on an explicit
//! polynomial lift.
//!
//! Classifiers work on dense class indices (`usize`); [`BasePipeline`]
//! maps them to [`GestureLabel`]s and owns the PCA front end.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dataset, GestureLabel, PolyFeatureMap};
use crate::linalg::{dot, fit_pca_whitening, spd_inverse, Matrix, PcaWhitening, DEFAULT_EIGEN_FLOOR};

pub const BASE_FORMAT_VERSION: u32 = 1;

/// A trained multi-class model over fixed-width feature vectors.
pub trait Classifier {
    fn input_dim(&self) -> usize;

    fn predict(&self, x: &[f64]) -> Result<usize>;

    fn predict_batch(&self, data: &Matrix) -> Result<Vec<usize>> {
        data.row_iter().map(|r| self.predict(r)).collect()
    }
}

fn check_input(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Contract(format!(
            "model expects {expected} features, got {}",
            x.len()
        )));
    }
    Ok(())
}

fn check_training(train: &Matrix, labels: &[usize]) -> Result<()> {
    if train.rows() != labels.len() {
        return Err(Error::Contract(format!(
            "{} rows but {} labels",
            train.rows(),
            labels.len()
        )));
    }
    if train.rows() == 0 {
        return Err(Error::Degenerate("empty training set".into()));
    }
    Ok(())
}

/// Row indices grouped by class, classes ascending.
fn group_by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
}

fn require_min_class_size(groups: &BTreeMap<usize, Vec<usize>>, min: usize) -> Result<()> {
    if let Some((c, rows)) = groups.iter().find(|(_, rows)| rows.len() < min) {
        return Err(Error::Contract(format!(
            "class {c} has {} sample(s), need at least {min}",
            rows.len()
        )));
    }
    Ok(())
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// k-nearest neighbours
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub data: Matrix,
    pub labels: Vec<usize>,
}

/// Stores the training set. Prediction is a majority vote of the `k`
/// nearest points; vote ties go to the label whose voters are closer on
/// average, then to the smaller label.
pub fn fit_knn(train: &Matrix, labels: &[usize], k: usize) -> Result<KnnModel> {
    check_training(train, labels)?;
    if k == 0 || k > train.rows() {
        return Err(Error::Contract(format!(
            "k must be in 1..={}, got {k}",
            train.rows()
        )));
    }
    Ok(KnnModel {
        k,
        data: train.clone(),
        labels: labels.to_vec(),
    })
}

impl Classifier for KnnModel {
    fn input_dim(&self) -> usize {
        self.data.cols()
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        check_input(self.input_dim(), x)?;
        let mut dist: Vec<(f64, usize)> = self
            .data
            .row_iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(), i))
            .collect();
        let k = self.k;
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut tally: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
        for &(d, i) in &dist[..k] {
            let e = tally.entry(self.labels[i]).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += d;
        }
        let best = tally
            .iter()
            .min_by(|(la, (va, sa)), (lb, (vb, sb))| {
                vb.cmp(va)
                    .then((sa / *va as f64).total_cmp(&(sb / *vb as f64)))
                    .then(la.cmp(lb))
            })
            .map(|(&l, _)| l)
            .expect("k >= 1");
        Ok(best)
    }
}

// ---------------------------------------------------------------------------
// Linear discriminant analysis
// ---------------------------------------------------------------------------

pub const DEFAULT_LDA_RIDGE: f64 = 1e-3;

/// Gaussian classes sharing one ridge-regularized pooled covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub classes: Vec<usize>,
    /// One row per class.
    pub means: Matrix,
    pub priors: Vec<f64>,
    /// Inverse of the regularized pooled covariance.
    pub precision: Matrix,
    /// `Σ⁻¹μ_c`, one row per class.
    pub coef: Matrix,
    /// `−½μ_cᵀΣ⁻¹μ_c + ln π_c`.
    pub intercept: Vec<f64>,
}

/// Fits LDA with pooled covariance `Σ_w + ridge·tr(Σ_w)/n·I`.
pub fn fit_lda(train: &Matrix, labels: &[usize], ridge: f64) -> Result<LdaModel> {
    check_training(train, labels)?;
    let groups = group_by_class(labels);
    if groups.len() < 2 {
        return Err(Error::Contract("LDA needs at least two classes".into()));
    }
    require_min_class_size(&groups, 2)?;
    if !(ridge >= 0.0) {
        return Err(Error::Config(format!("ridge must be non-negative, got {ridge}")));
    }
    let n = train.cols();
    let total = train.rows();
    let mut classes = Vec::with_capacity(groups.len());
    let mut means = Vec::with_capacity(groups.len());
    let mut priors = Vec::with_capacity(groups.len());
    let mut scatter = Matrix::zeros(n, n);
    for (&c, rows) in &groups {
        let sub = train.select_rows(rows);
        let mu = sub.column_means();
        for r in sub.row_iter() {
            let d: Vec<f64> = r.iter().zip(&mu).map(|(a, m)| a - m).collect();
            for i in 0..n {
                if d[i] == 0.0 {
                    continue;
                }
                for j in i..n {
                    let v = scatter.get(i, j) + d[i] * d[j];
                    scatter.set(i, j, v);
                }
            }
        }
        classes.push(c);
        means.push(mu);
        priors.push(rows.len() as f64 / total as f64);
    }
    let dof = (total - groups.len()).max(1) as f64;
    for i in 0..n {
        for j in i..n {
            let v = scatter.get(i, j) / dof;
            scatter.set(i, j, v);
            scatter.set(j, i, v);
        }
    }
    let trace = scatter.trace();
    let reg = if trace > 0.0 { ridge * trace / n as f64 } else { ridge.max(f64::MIN_POSITIVE) };
    for i in 0..n {
        scatter.set(i, i, scatter.get(i, i) + reg);
    }
    let precision = spd_inverse(&scatter)?;
    let means = Matrix::from_rows(&means)?;
    let mut coef = Vec::with_capacity(classes.len());
    let mut intercept = Vec::with_capacity(classes.len());
    for (ci, mu) in means.row_iter().enumerate() {
        let w: Vec<f64> = precision.row_iter().map(|r| dot(r, mu)).collect();
        intercept.push(-0.5 * dot(mu, &w) + priors[ci].ln());
        coef.push(w);
    }
    Ok(LdaModel {
        classes,
        means,
        priors,
        precision,
        coef: Matrix::from_rows(&coef)?,
        intercept,
    })
}

impl LdaModel {
    /// Discriminant score per class, in `classes` order.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input(self.input_dim(), x)?;
        Ok(self
            .coef
            .row_iter()
            .zip(&self.intercept)
            .map(|(w, b)| dot(w, x) + b)
            .collect())
    }
}

impl Classifier for LdaModel {
    fn input_dim(&self) -> usize {
        self.means.cols()
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.classes[argmax(&self.scores(x)?)])
    }
}

// ---------------------------------------------------------------------------
// Gaussian naive Bayes
// ---------------------------------------------------------------------------

pub const DEFAULT_GNB_VAR_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnbModel {
    pub classes: Vec<usize>,
    pub means: Matrix,
    pub variances: Matrix,
    pub log_priors: Vec<f64>,
}

/// Per-class, per-feature Gaussians. Variances are floored at
/// `var_floor × (largest feature variance)`.
pub fn fit_gnb(train: &Matrix, labels: &[usize], var_floor: f64) -> Result<GnbModel> {
    check_training(train, labels)?;
    let groups = group_by_class(labels);
    require_min_class_size(&groups, 2)?;
    let overall = train.column_means();
    let max_var = (0..train.cols())
        .map(|j| train.row_iter().map(|r| (r[j] - overall[j]).powi(2)).sum::<f64>() / train.rows() as f64)
        .fold(0.0, f64::max);
    let floor = if max_var > 0.0 { var_floor * max_var } else { var_floor };

    let mut classes = Vec::new();
    let mut means = Vec::new();
    let mut variances = Vec::new();
    let mut log_priors = Vec::new();
    for (&c, rows) in &groups {
        let sub = train.select_rows(rows);
        let mu = sub.column_means();
        let var: Vec<f64> = (0..train.cols())
            .map(|j| {
                let v = sub.row_iter().map(|r| (r[j] - mu[j]).powi(2)).sum::<f64>() / rows.len() as f64;
                v.max(floor)
            })
            .collect();
        classes.push(c);
        means.push(mu);
        variances.push(var);
        log_priors.push((rows.len() as f64 / train.rows() as f64).ln());
    }
    Ok(GnbModel {
        classes,
        means: Matrix::from_rows(&means)?,
        variances: Matrix::from_rows(&variances)?,
        log_priors,
    })
}

impl GnbModel {
    /// Joint log-likelihood `ln p(x | c) + ln π_c` per class.
    pub fn log_likelihoods(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input(self.input_dim(), x)?;
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        Ok((0..self.classes.len())
            .map(|c| {
                let ll: f64 = x
                    .iter()
                    .zip(self.means.row(c))
                    .zip(self.variances.row(c))
                    .map(|((&xi, &m), &v)| -0.5 * (ln2pi + v.ln()) - (xi - m) * (xi - m) / (2.0 * v))
                    .sum();
                ll + self.log_priors[c]
            })
            .collect())
    }
}

impl Classifier for GnbModel {
    fn input_dim(&self) -> usize {
        self.means.cols()
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.classes[argmax(&self.log_likelihoods(x)?)])
    }
}

// ---------------------------------------------------------------------------
// Linear SVM, one-vs-rest, Pegasos
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvmOvr {
    pub classes: Vec<usize>,
    /// One weight row per class.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// One binary hinge-loss machine per class, trained by Pegasos stochastic
/// subgradient steps `η_t = 1/(λt)` with projection onto the
/// `‖w‖ ≤ 1/√λ` ball. The bias is an extra weight on a constant input.
pub fn fit_linear_svm_ovr(train: &Matrix, labels: &[usize], params: SvmParams) -> Result<LinearSvmOvr> {
    check_training(train, labels)?;
    let groups = group_by_class(labels);
    if groups.len() < 2 {
        return Err(Error::Contract("SVM needs at least two classes".into()));
    }
    if !(params.lambda > 0.0) || params.epochs == 0 {
        return Err(Error::Config(format!(
            "SVM needs lambda > 0 and epochs >= 1 (got {}, {})",
            params.lambda, params.epochs
        )));
    }
    let n = train.cols();
    let radius = 1.0 / params.lambda.sqrt();
    let mut classes = Vec::with_capacity(groups.len());
    let mut weights = Vec::with_capacity(groups.len());
    let mut bias = Vec::with_capacity(groups.len());
    for &c in groups.keys() {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut w = vec![0.0; n];
        let mut b = 0.0;
        let mut order: Vec<usize> = (0..train.rows()).collect();
        let mut t = 0u64;
        for _ in 0..params.epochs {
            for i in (1..order.len()).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            for &i in &order {
                t += 1;
                let eta = 1.0 / (params.lambda * t as f64);
                let x = train.row(i);
                let y = if labels[i] == c { 1.0 } else { -1.0 };
                let margin = y * (dot(&w, x) + b);
                let shrink = 1.0 - eta * params.lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                b *= shrink;
                if margin < 1.0 {
                    w.iter_mut().zip(x).for_each(|(v, xi)| *v += eta * y * xi);
                    b += eta * y;
                }
                let len = (dot(&w, &w) + b * b).sqrt();
                if len > radius {
                    let s = radius / len;
                    w.iter_mut().for_each(|v| *v *= s);
                    b *= s;
                }
            }
        }
        classes.push(c);
        weights.push(w);
        bias.push(b);
    }
    Ok(LinearSvmOvr {
        classes,
        weights: Matrix::from_rows(&weights)?,
        bias,
    })
}

impl LinearSvmOvr {
    pub fn margins(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input(self.input_dim(), x)?;
        Ok(self.weights.row_iter().zip(&self.bias).map(|(w, b)| dot(w, x) + b).collect())
    }
}

impl Classifier for LinearSvmOvr {
    fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(self.classes[argmax(&self.margins(x)?)])
    }
}

/// Per-feature z-scoring; zero-variance features are only centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Matrix) -> Self {
        let mean = data.column_means();
        let n = data.rows().max(1) as f64;
        let scale = (0..data.cols())
            .map(|j| {
                let sd = (data.row_iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply_into(&self, x: &mut [f64]) {
        for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.scale) {
            *v = (*v - m) / s;
        }
    }

    pub fn apply(&self, data: &Matrix) -> Matrix {
        let mut out = data.clone();
        for i in 0..out.rows() {
            self.apply_into(out.row_mut(i));
        }
        out
    }
}

pub const MAX_POLY_SVM_DEGREE: usize = 5;
pub const MAX_POLY_SVM_DIM: u128 = 1_000_000;

/// Linear SVM on standardized explicit polynomial features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySvmModel {
    pub map: PolyFeatureMap,
    pub standardizer: Standardizer,
    pub svm: LinearSvmOvr,
}

pub fn fit_poly_svm(train: &Matrix, labels: &[usize], degree: usize, params: SvmParams) -> Result<PolySvmModel> {
    check_training(train, labels)?;
    if degree == 0 || degree > MAX_POLY_SVM_DEGREE {
        return Err(Error::Config(format!(
            "polynomial SVM degree must be in 1..={MAX_POLY_SVM_DEGREE}, got {degree}"
        )));
    }
    match crate::features::lifted_dim(train.cols(), degree) {
        Some(m) if m <= MAX_POLY_SVM_DIM => {}
        _ => {
            return Err(Error::Capacity(format!(
                "degree-{degree} lift of {} features exceeds {MAX_POLY_SVM_DIM}",
                train.cols()
            )))
        }
    }
    let map = PolyFeatureMap::build(train.cols(), degree)?;
    let lifted = map.lift_matrix(train)?;
    let standardizer = Standardizer::fit(&lifted);
    let svm = fit_linear_svm_ovr(&standardizer.apply(&lifted), labels, params)?;
    Ok(PolySvmModel {
        map,
        standardizer,
        svm,
    })
}

impl Classifier for PolySvmModel {
    fn input_dim(&self) -> usize {
        self.map.input_dim()
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        let mut z = self.map.lift(x)?;
        self.standardizer.apply_into(&mut z);
        self.svm.predict(&z)
    }
}

// ---------------------------------------------------------------------------
// Model selection and the PCA pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseKind {
    Knn,
    Lda,
    Gnb,
    LinearSvm,
    PolySvm,
}

impl BaseKind {
    pub const ALL: [BaseKind; 5] = [
        BaseKind::Knn,
        BaseKind::Lda,
        BaseKind::Gnb,
        BaseKind::LinearSvm,
        BaseKind::PolySvm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaseKind::Knn => "knn",
            BaseKind::Lda => "lda",
            BaseKind::Gnb => "gnb",
            BaseKind::LinearSvm => "linear-svm",
            BaseKind::PolySvm => "poly-svm",
        }
    }

    /// PC counts that worked best for each model family on real data.
    pub fn default_pcs(self) -> usize {
        match self {
            BaseKind::Knn => 5,
            BaseKind::Lda => 10,
            BaseKind::Gnb | BaseKind::LinearSvm => 100,
            BaseKind::PolySvm => 20,
        }
    }
}

impl fmt::Display for BaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BaseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
            Error::Config(format!("unknown base model {s:?}; valid names: {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseConfig {
    pub kind: BaseKind,
    pub pcs: usize,
    pub knn_k: usize,
    pub lda_ridge: f64,
    pub gnb_var_floor: f64,
    pub svm: SvmParams,
    pub poly_degree: usize,
}

impl BaseConfig {
    pub fn new(kind: BaseKind) -> Self {
        Self {
            kind,
            pcs: kind.default_pcs(),
            knn_k: 5,
            lda_ridge: DEFAULT_LDA_RIDGE,
            gnb_var_floor: DEFAULT_GNB_VAR_FLOOR,
            svm: SvmParams::default(),
            poly_degree: 2,
        }
    }
}

impl Default for BaseConfig {
    fn default() -> Self {
        Self::new(BaseKind::PolySvm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassifierModel {
    Knn(KnnModel),
    Lda(LdaModel),
    Gnb(GnbModel),
    LinearSvm(LinearSvmOvr),
    PolySvm(PolySvmModel),
}

impl Classifier for ClassifierModel {
    fn input_dim(&self) -> usize {
        match self {
            ClassifierModel::Knn(m) => m.input_dim(),
            ClassifierModel::Lda(m) => m.input_dim(),
            ClassifierModel::Gnb(m) => m.input_dim(),
            ClassifierModel::LinearSvm(m) => m.input_dim(),
            ClassifierModel::PolySvm(m) => m.input_dim(),
        }
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            ClassifierModel::Knn(m) => m.predict(x),
            ClassifierModel::Lda(m) => m.predict(x),
            ClassifierModel::Gnb(m) => m.predict(x),
            ClassifierModel::LinearSvm(m) => m.predict(x),
            ClassifierModel::PolySvm(m) => m.predict(x),
        }
    }
}

pub fn fit_classifier(config: &BaseConfig, train: &Matrix, labels: &[usize]) -> Result<ClassifierModel> {
    Ok(match config.kind {
        BaseKind::Knn => ClassifierModel::Knn(fit_knn(train, labels, config.knn_k)?),
        BaseKind::Lda => ClassifierModel::Lda(fit_lda(train, labels, config.lda_ridge)?),
        BaseKind::Gnb => ClassifierModel::Gnb(fit_gnb(train, labels, config.gnb_var_floor)?),
        BaseKind::LinearSvm => ClassifierModel::LinearSvm(fit_linear_svm_ovr(train, labels, config.svm)?),
        BaseKind::PolySvm => ClassifierModel::PolySvm(fit_poly_svm(train, labels, config.poly_degree, config.svm)?),
    })
}

/// Anything that maps a flat 100-feature window to a gesture.
pub trait GesturePredictor {
    fn predict_label(&self, flat: &[f64]) -> Result<GestureLabel>;
}

/// PCA on the flat window, then a classifier on the leading PCs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasePipeline {
    pub format_version: u32,
    pub config: BaseConfig,
    /// PCA fitted on the training windows, all non-degenerate components kept.
    pub pca: PcaWhitening,
    pub model: ClassifierModel,
}

impl BasePipeline {
    pub fn fit(data: &Dataset, config: &BaseConfig) -> Result<Self> {
        if config.pcs == 0 {
            return Err(Error::Config("PC count must be at least 1".into()));
        }
        let pca = fit_pca_whitening(data.flat(), DEFAULT_EIGEN_FLOOR)?;
        if config.pcs > pca.output_dim() {
            return Err(Error::Config(format!(
                "requested {} PCs but the training data supports only {}",
                config.pcs,
                pca.output_dim()
            )));
        }
        let features = Self::scores(&pca, data.flat(), config.pcs)?;
        let model = fit_classifier(config, &features, &data.label_indices())?;
        Ok(Self {
            format_version: BASE_FORMAT_VERSION,
            config: config.clone(),
            pca,
            model,
        })
    }

    fn scores(pca: &PcaWhitening, data: &Matrix, k: usize) -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = data.row_iter().map(|r| pca.project(r, k)).collect::<Result<_>>()?;
        Matrix::from_rows(&rows)
    }

    /// Leading PC scores fed to the classifier.
    pub fn features(&self, flat: &[f64]) -> Result<Vec<f64>> {
        self.pca.project(flat, self.config.pcs)
    }

    /// First `k` PCs rescaled to unit variance on the training set.
    pub fn whitened_pcs(&self, flat: &[f64], k: usize) -> Result<Vec<f64>> {
        if k == 0 || k > self.pca.output_dim() {
            return Err(Error::Config(format!(
                "cannot take {k} PCs from a {}-component PCA",
                self.pca.output_dim()
            )));
        }
        let mut v = self.pca.project(flat, k)?;
        v.iter_mut().zip(&self.pca.whitening).for_each(|(x, w)| *x *= w);
        Ok(v)
    }

    pub fn whitened_pcs_matrix(&self, data: &Dataset, k: usize) -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = data.flat().row_iter().map(|r| self.whitened_pcs(r, k)).collect::<Result<_>>()?;
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, k));
        }
        Matrix::from_rows(&rows)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<GestureLabel>> {
        data.flat().row_iter().map(|r| self.predict_label(r)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        if model.format_version != BASE_FORMAT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported base model version {}", model.format_version),
            ));
        }
        Ok(model)
    }
}

impl GesturePredictor for BasePipeline {
    fn predict_label(&self, flat: &[f64]) -> Result<GestureLabel> {
        let idx = self.model.predict(&self.features(flat)?)?;
        GestureLabel::from_index(idx).ok_or_else(|| Error::Contract(format!("model produced unknown class {idx}")))
    }
}

/// Accuracy plus a `(true, predicted)` confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: [[usize; 5]; 5],
    pub total: usize,
}

pub fn evaluate(model: &impl GesturePredictor, data: &Dataset) -> Result<Evaluation> {
    let mut confusion = [[0usize; 5]; 5];
    for (s, row) in data.samples().iter().zip(data.flat().row_iter()) {
        let p = model.predict_label(row)?;
        confusion[s.label.index()][p.index()] += 1;
    }
    let correct: usize = (0..5).map(|i| confusion[i][i]).sum();
    Ok(Evaluation {
        accuracy: if data.is_empty() { 0.0 } else { correct as f64 / data.len() as f64 },
        confusion,
        total: data.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub train_accuracy: f64,
    pub validation_accuracy: f64,
}

/// Group k-fold: users are dealt round-robin into `folds` groups and each
/// group is held out once.
pub fn cross_validate(data: &Dataset, config: &BaseConfig, folds: usize) -> Result<Vec<FoldScore>> {
    let users = data.user_ids();
    if folds < 2 || folds > users.len() {
        return Err(Error::Config(format!(
            "fold count must be in 2..={}, got {folds}",
            users.len()
        )));
    }
    let mut scores = Vec::with_capacity(folds);
    for f in 0..folds {
        let held: Vec<u32> = users.iter().enumerate().filter(|(i, _)| i % folds == f).map(|(_, &u)| u).collect();
        let (val, train): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| held.contains(&data.samples()[i].user_id));
        let train = data.subset(&train);
        let val = data.subset(&val);
        let model = BasePipeline::fit(&train, config)?;
        scores.push(FoldScore {
            train_accuracy: evaluate(&model, &train)?.accuracy,
            validation_accuracy: evaluate(&model, &val)?.accuracy,
        });
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn gaussian_blobs(centers: &[&[f64]], per: usize, sigma: f64, seed: u64) -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..per {
                rows.push(center.iter().map(|&m| m + sigma * rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>());
                labels.push(c);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    fn accuracy(model: &impl Classifier, data: &Matrix, labels: &[usize]) -> f64 {
        let p = model.predict_batch(data).unwrap();
        p.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64
    }

    #[test]
    fn knn_returns_training_label() {
        let (data, labels) = gaussian_blobs(&[&[0.0, 0.0], &[10.0, 10.0]], 10, 1.0, 1);
        let m = fit_knn(&data, &labels, 1).unwrap();
        for i in 0..data.rows() {
            assert_eq!(m.predict(data.row(i)).unwrap(), labels[i]);
        }
        let two = Matrix::from_rows(&[[0.0, 0.0], [10.0, 10.0]]).unwrap();
        let m = fit_knn(&two, &[3, 7], 1).unwrap();
        assert_eq!(m.predict(&[1.0, 1.0]).unwrap(), 3);
    }

    #[test]
    fn knn_vote_tie_goes_to_closer_label() {
        // k = 3 neighbours of the origin: label 2 at distance 1, label 1 at
        // distances 2 and 2 ... make it a tie by using k = 2 neighbours.
        let data = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.5], [0.0, -3.0], [9.0, 9.0]]).unwrap();
        // with k = 3: votes {2: 1 (d=1), 1: 1 (d=1.5), 0: 1 (d=3)} -> three-way tie,
        // mean distances 1 < 1.5 < 3, so label 2 wins.
        let m = fit_knn(&data, &[2, 1, 0, 0], 3).unwrap();
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), 2);
        // equal votes and equal mean distance: smaller label wins
        let sym = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let m = fit_knn(&sym, &[4, 1], 2).unwrap();
        assert_eq!(m.predict(&[0.0, 0.0]).unwrap(), 1);
    }

    #[test]
    fn knn_rejects_large_k() {
        let data = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(fit_knn(&data, &[0, 1], 3), Err(Error::Contract(_))));
    }

    #[test]
    fn lda_midpoint_scores_equal() {
        let (data, labels) = gaussian_blobs(&[&[-2.0, 1.0], &[2.0, 1.0]], 200, 1.0, 3);
        let m = fit_lda(&data, &labels, DEFAULT_LDA_RIDGE).unwrap();
        let mid: Vec<f64> = (0..2).map(|j| 0.5 * (m.means.get(0, j) + m.means.get(1, j))).collect();
        let s = m.scores(&mid).unwrap();
        assert!((s[0] - s[1]).abs() < 1e-9, "{s:?}");
        assert_eq!(m.predict(m.means.row(1)).unwrap(), 1);
    }

    #[test]
    fn lda_separates_six_sigma() {
        let (data, labels) = gaussian_blobs(&[&[0.0, 0.0, 0.0], &[6.0, 0.0, 0.0]], 250, 1.0, 4);
        let m = fit_lda(&data, &labels, DEFAULT_LDA_RIDGE).unwrap();
        assert!(accuracy(&m, &data, &labels) >= 0.99);
    }

    #[test]
    fn lda_rejects_singleton_class() {
        let data = Matrix::from_rows(&[[0.0], [1.0], [5.0]]).unwrap();
        assert!(matches!(fit_lda(&data, &[0, 0, 1], 1e-3), Err(Error::Contract(_))));
    }

    #[test]
    fn gnb_handles_constant_feature() {
        let data = Matrix::from_rows(&[[0.0, 1.0], [0.2, 1.0], [5.0, 1.0], [5.3, 1.0]]).unwrap();
        let m = fit_gnb(&data, &[0, 0, 1, 1], DEFAULT_GNB_VAR_FLOOR).unwrap();
        assert!(m.variances.as_slice().iter().all(|v| *v > 0.0));
        assert_eq!(m.predict(&[0.1, 1.0]).unwrap(), 0);
        assert_eq!(m.predict(&[5.15, 1.0]).unwrap(), 1);
    }

    #[test]
    fn gnb_matches_hand_log_likelihood() {
        // class 0: x0 ∈ {0, 2}, x1 ∈ {1, 3}; class 1: x0 ∈ {4, 8}, x1 ∈ {0, 0.5}
        let data = Matrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, 0.0], [8.0, 0.5]]).unwrap();
        let m = fit_gnb(&data, &[0, 0, 1, 1], DEFAULT_GNB_VAR_FLOOR).unwrap();
        let x = [1.5, 2.0];
        // class 0: means (1, 2), variances (1, 1); class 1: means (6, 0.25), variances (4, 0.0625)
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let ll0 = -0.5 * ln2pi - 0.125 + (-0.5 * ln2pi) + 0.5f64.ln();
        let ll1 = (-0.5 * (ln2pi + 4f64.ln()) - 20.25 / 8.0) + (-0.5 * (ln2pi + 0.0625f64.ln()) - 3.0625 / 0.125) + 0.5f64.ln();
        let got = m.log_likelihoods(&x).unwrap();
        assert!((got[0] - ll0).abs() < 1e-12, "{} vs {ll0}", got[0]);
        assert!((got[1] - ll1).abs() < 1e-12, "{} vs {ll1}", got[1]);
    }

    #[test]
    fn svm_separable_toy() {
        let (data, labels) = gaussian_blobs(&[&[-2.0, -2.0], &[2.0, 2.0]], 40, 0.3, 5);
        let m = fit_linear_svm_ovr(&data, &labels, SvmParams::default()).unwrap();
        assert_eq!(accuracy(&m, &data, &labels), 1.0);
        // shifting every input by +1 leaves training predictions unchanged
        let shifted = Matrix::new(data.rows(), 2, data.as_slice().iter().map(|v| v + 1.0).collect()).unwrap();
        let m2 = fit_linear_svm_ovr(&shifted, &labels, SvmParams::default()).unwrap();
        assert_eq!(m.predict_batch(&data).unwrap(), m2.predict_batch(&shifted).unwrap());
    }

    #[test]
    fn svm_recalls_minority_class() {
        let (a, _) = gaussian_blobs(&[&[-2.0, 0.0]], 90, 0.4, 6);
        let (b, _) = gaussian_blobs(&[&[2.0, 0.5]], 10, 0.4, 7);
        let rows: Vec<Vec<f64>> = a.row_iter().chain(b.row_iter()).map(|r| r.to_vec()).collect();
        let data = Matrix::from_rows(&rows).unwrap();
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 90)).collect();
        let m = fit_linear_svm_ovr(&data, &labels, SvmParams::default()).unwrap();
        let p = m.predict_batch(&data).unwrap();
        assert!(p[..90].iter().all(|&l| l == 0));
        assert!(p[90..].iter().all(|&l| l == 1));
    }

    fn xor_data() -> (Matrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..200 {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            if x.abs() < 0.1 || y.abs() < 0.1 {
                continue;
            }
            rows.push(vec![x, y]);
            labels.push(usize::from(x * y > 0.0));
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn poly_svm_solves_xor() {
        let (data, labels) = xor_data();
        let m = fit_poly_svm(&data, &labels, 2, SvmParams::default()).unwrap();
        assert!(accuracy(&m, &data, &labels) >= 0.95);
        let again = fit_poly_svm(&data, &labels, 2, SvmParams::default()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn poly_svm_degree_one_is_standardized_linear() {
        let (data, labels) = gaussian_blobs(&[&[0.0, 0.0, 1.0], &[3.0, 1.0, 0.0], &[0.0, 3.0, 2.0]], 30, 0.8, 9);
        let poly = fit_poly_svm(&data, &labels, 1, SvmParams::default()).unwrap();
        let std = Standardizer::fit(&data);
        let lin = fit_linear_svm_ovr(&std.apply(&data), &labels, SvmParams::default()).unwrap();
        assert_eq!(poly.predict_batch(&data).unwrap(), lin.predict_batch(&std.apply(&data)).unwrap());
    }

    #[test]
    fn poly_svm_rejects_high_degree() {
        let (data, labels) = xor_data();
        assert!(matches!(fit_poly_svm(&data, &labels, 6, SvmParams::default()), Err(Error::Config(_))));
    }

    #[test]
    fn batch_matches_single_predictions() {
        let (data, labels) = gaussian_blobs(&[&[0.0, 0.0], &[1.5, 0.0], &[0.0, 1.5]], 30, 0.7, 10);
        let models = [
            ClassifierModel::Knn(fit_knn(&data, &labels, 5).unwrap()),
            ClassifierModel::Lda(fit_lda(&data, &labels, 1e-3).unwrap()),
            ClassifierModel::Gnb(fit_gnb(&data, &labels, 1e-9).unwrap()),
            ClassifierModel::LinearSvm(fit_linear_svm_ovr(&data, &labels, SvmParams::default()).unwrap()),
            ClassifierModel::PolySvm(fit_poly_svm(&data, &labels, 2, SvmParams::default()).unwrap()),
        ];
        for m in &models {
            let batch = m.predict_batch(&data).unwrap();
            let single: Vec<usize> = data.row_iter().map(|r| m.predict(r).unwrap()).collect();
            assert_eq!(batch, single);
            let json = serde_json::to_string(m).unwrap();
            let back: ClassifierModel = serde_json::from_str(&json).unwrap();
            assert_eq!(back.predict_batch(&data).unwrap(), batch);
        }
    }

    #[test]
    fn lda_and_gnb_follow_feature_permutation() {
        let (data, labels) = gaussian_blobs(&[&[0.0, 0.0, 0.0], &[1.0, 2.0, 0.5], &[2.0, 0.0, 1.5]], 40, 0.9, 11);
        let perm = [2, 0, 1];
        let permute = |m: &Matrix| {
            let rows: Vec<Vec<f64>> = m.row_iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
            Matrix::from_rows(&rows).unwrap()
        };
        let pdata = permute(&data);
        let lda = fit_lda(&data, &labels, 1e-3).unwrap();
        let plda = fit_lda(&pdata, &labels, 1e-3).unwrap();
        assert_eq!(lda.predict_batch(&data).unwrap(), plda.predict_batch(&pdata).unwrap());
        let gnb = fit_gnb(&data, &labels, 1e-9).unwrap();
        let pgnb = fit_gnb(&pdata, &labels, 1e-9).unwrap();
        assert_eq!(gnb.predict_batch(&data).unwrap(), pgnb.predict_batch(&pdata).unwrap());
    }

    #[test]
    fn base_kind_names() {
        assert_eq!("poly-svm".parse::<BaseKind>().unwrap(), BaseKind::PolySvm);
        let err = "rbf-svm".parse::<BaseKind>().unwrap_err().to_string();
        assert!(err.contains("knn") && err.contains("poly-svm"));
    }
}
