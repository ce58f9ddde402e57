//! Run configuration: one TOML file, every field optional.

use std::path::{Path, PathBuf};

use gesture_corrector::base::{BaseConfig, BaseKind, SvmParams, DEFAULT_GNB_VAR_FLOOR, DEFAULT_LDA_RIDGE};
use gesture_corrector::corrector::{CorrectorConfig, DEFAULT_MIN_ERROR_CLASS};
use gesture_corrector::eval::{DEFAULT_ALPHA, MIN_INTDIM_SAMPLES};
use gesture_corrector::linalg::DEFAULT_EIGEN_FLOOR;
use gesture_corrector::synth::{ProfileSpread, SynthConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 20240512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub synth: SynthSection,
    pub base: BaseSection,
    pub corrector: CorrectorSection,
    pub sweep: SweepSection,
    pub intdim: IntdimSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            paths: Paths::default(),
            synth: SynthSection::default(),
            base: BaseSection::default(),
            corrector: CorrectorSection::default(),
            sweep: SweepSection::default(),
            intdim: IntdimSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding the four split CSVs.
    pub data_dir: PathBuf,
    pub base_model: PathBuf,
    pub corrector: PathBuf,
    /// Reports (sweeps, histograms, tables) go here.
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: "data".into(),
            base_model: "models/base.json".into(),
            corrector: "models/corrector.json".into(),
            out_dir: "out".into(),
        }
    }
}

impl Paths {
    pub fn split(&self, name: &str) -> PathBuf {
        self.data_dir.join(format!("{name}.csv"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub users: usize,
    pub samples_per_gesture: usize,
    pub shift_multiplier: f64,
    pub spread: ProfileSpread,
}

impl Default for SynthSection {
    fn default() -> Self {
        let d = SynthConfig::default();
        Self {
            users: d.users,
            samples_per_gesture: d.samples_per_gesture_per_user,
            shift_multiplier: d.new_user_shift_multiplier,
            spread: d.spread,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaseSection {
    /// One of knn, lda, gnb, linear-svm, poly-svm.
    pub model: String,
    /// PCs fed to the classifier; the model's default when absent.
    pub pcs: Option<usize>,
    pub knn_k: usize,
    pub lda_ridge: f64,
    pub gnb_var_floor: f64,
    pub svm_lambda: f64,
    pub svm_epochs: usize,
    pub poly_degree: usize,
}

impl Default for BaseSection {
    fn default() -> Self {
        let svm = SvmParams::default();
        Self {
            model: BaseKind::PolySvm.name().into(),
            pcs: None,
            knn_k: 5,
            lda_ridge: DEFAULT_LDA_RIDGE,
            gnb_var_floor: DEFAULT_GNB_VAR_FLOOR,
            svm_lambda: svm.lambda,
            svm_epochs: svm.epochs,
            poly_degree: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectorSection {
    pub pcs: usize,
    pub degree: usize,
    pub delta: f64,
    pub min_error_class: usize,
    pub eigen_floor: f64,
}

impl Default for CorrectorSection {
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// Number of evenly spaced Δ values in [0, 1].
    pub grid: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { grid: 101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntdimSection {
    pub alpha: f64,
    /// Rows kept (evenly strided) before estimating.
    pub max_samples: usize,
    pub pcs: Vec<usize>,
    pub degrees: Vec<usize>,
}

impl Default for IntdimSection {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            max_samples: 1000,
            pcs: (3..=9).collect(),
            degrees: (1..=9).collect(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.synth_config().validate()?;
        let base = self.base_config()?;
        if base.pcs == 0 {
            return Err(CliError::Config("base PC count must be at least 1".into()));
        }
        self.corrector_config().validate()?;
        if self.sweep.grid < 2 {
            return Err(CliError::Config(format!(
                "sweep grid needs at least 2 points, got {}",
                self.sweep.grid
            )));
        }
        let i = &self.intdim;
        if !(i.alpha > 0.0 && i.alpha < 1.0) {
            return Err(CliError::Config(format!("intdim alpha must be in (0, 1), got {}", i.alpha)));
        }
        if i.max_samples < MIN_INTDIM_SAMPLES {
            return Err(CliError::Config(format!(
                "intdim max_samples must be at least {MIN_INTDIM_SAMPLES}, got {}",
                i.max_samples
            )));
        }
        if i.pcs.is_empty() || i.degrees.is_empty() || i.pcs.contains(&0) {
            return Err(CliError::Config("intdim grid needs non-empty PC and degree lists".into()));
        }
        if i.degrees.iter().any(|d| !(1..=9).contains(d)) {
            return Err(CliError::Config("intdim degrees must be in 1..=9".into()));
        }
        Ok(())
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            users: self.synth.users,
            samples_per_gesture_per_user: self.synth.samples_per_gesture,
            rng_seed: self.seed,
            new_user_shift_multiplier: self.synth.shift_multiplier,
            spread: self.synth.spread,
        }
    }

    pub fn base_config(&self) -> Result<BaseConfig, CliError> {
        let kind: BaseKind = self.base.model.parse()?;
        let b = &self.base;
        Ok(BaseConfig {
            kind,
            pcs: b.pcs.unwrap_or(kind.default_pcs()),
            knn_k: b.knn_k,
            lda_ridge: b.lda_ridge,
            gnb_var_floor: b.gnb_var_floor,
            svm: SvmParams {
                lambda: b.svm_lambda,
                epochs: b.svm_epochs,
                seed: self.seed,
            },
            poly_degree: b.poly_degree,
        })
    }

    pub fn corrector_config(&self) -> CorrectorConfig {
        let c = &self.corrector;
        CorrectorConfig {
            pcs: c.pcs,
            degree: c.degree,
            delta: c.delta,
            min_error_class: c.min_error_class,
            eigen_floor: c.eigen_floor,
        }
    }
}
