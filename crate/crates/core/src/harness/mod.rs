//! Experiment runner: configuration, data preparation, training dispatch
//! and the files each run leaves behind.

mod model;
mod sweep;

pub use model::{boundary_csv, boundary_grid, evaluate_csv, load_model, BoundaryRow, ModelFile, ModelMetadata};
pub use sweep::{median, sweep, sweep_csv, SweepAxis, SweepRow, MIN_SWEEP_SEEDS};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{
    self, encode_dataset, gen_modfmt_dataset, gen_ring, gen_triangle, split, CsvSchema, Dataset, InputEncoding,
    Scaling, SignalConfig,
};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::ga::{ga_train, GaConfig};
use crate::gradient::{sgd_train, GradConfig};
use crate::network::{LayerSpec, NetworkSpec, Samples};
use crate::pso::{pso_train, PsoConfig};
use crate::train::TrainResult;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const TEMPLATES: [&str; 4] = ["planar5", "iris3", "wine2", "modfmt3"];
pub const METRICS_HEADER: &str = "generation,best_loss,mean_loss,train_accuracy,test_accuracy,elapsed_ms";

/// Named architectures used by the bundled experiments.
pub fn template(name: &str) -> Result<NetworkSpec> {
    match name {
        "planar5" => NetworkSpec::layered(5, 5, Some(vec![0, 1])),
        "iris3" => NetworkSpec::layered(4, 3, Some(vec![0, 1, 2])),
        // Four modulation classes need every port.
        "modfmt3" => NetworkSpec::layered(4, 3, None),
        "wine2" => NetworkSpec::layered(13, 2, Some(vec![0, 1, 2])),
        _ => Err(Error::invalid(format!(
            "unknown template {name:?}; expected one of {}",
            TEMPLATES.join(", ")
        ))),
    }
}

fn default_planar_n() -> usize {
    400
}

fn default_modfmt_n() -> usize {
    800
}

fn default_snr_db() -> f64 {
    20.0
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Triangle {
        #[serde(default = "default_planar_n")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    Ring {
        #[serde(default = "default_planar_n")]
        n: usize,
        #[serde(default)]
        seed: u64,
    },
    /// UCI iris; the bundled copy unless `path` is given.
    Iris {
        #[serde(default)]
        path: Option<PathBuf>,
    },
    /// UCI wine; the bundled copy unless `path` is given.
    Wine {
        #[serde(default)]
        path: Option<PathBuf>,
    },
    Modfmt {
        #[serde(default = "default_modfmt_n")]
        n: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_snr_db")]
        snr_db: f64,
    },
    /// Headed CSV with the class name in the last column.
    Csv {
        path: PathBuf,
        #[serde(default)]
        classes: Option<Vec<String>>,
        #[serde(default = "default_true")]
        scale: bool,
    },
}

impl DatasetConfig {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Triangle { .. } => "triangle",
            Self::Ring { .. } => "ring",
            Self::Iris { .. } => "iris",
            Self::Wine { .. } => "wine",
            Self::Modfmt { .. } => "modfmt",
            Self::Csv { .. } => "csv",
        }
    }

    fn default_template(&self) -> Option<&'static str> {
        match self {
            Self::Triangle { .. } | Self::Ring { .. } => Some("planar5"),
            Self::Iris { .. } => Some("iris3"),
            Self::Wine { .. } => Some("wine2"),
            Self::Modfmt { .. } => Some("modfmt3"),
            Self::Csv { .. } => None,
        }
    }

    fn path(&self) -> Option<&Path> {
        match self {
            Self::Iris { path } | Self::Wine { path } => path.as_deref(),
            Self::Csv { path, .. } => Some(path),
            _ => None,
        }
    }

    fn violations(&self, errors: &mut Vec<String>) {
        match self {
            Self::Triangle { n, .. } | Self::Ring { n, .. } if *n < 2 => {
                errors.push(format!("dataset.n must be >= 2, got {n}"))
            }
            Self::Modfmt { n, snr_db, .. } => {
                if *n == 0 || n % 4 != 0 {
                    errors.push(format!("dataset.n must be a positive multiple of 4, got {n}"));
                }
                if !snr_db.is_finite() {
                    errors.push(format!("dataset.snr_db must be finite, got {snr_db}"));
                }
            }
            _ => {}
        }
        if let Some(p) = self.path() {
            if !p.is_file() {
                errors.push(format!("dataset.path {} does not exist", p.display()));
            }
        }
    }

    /// The feature table after per-column scaling, plus the scaling used.
    pub fn load(&self) -> Result<(Dataset, Option<Scaling>)> {
        let (mut ds, scale) = match self {
            Self::Triangle { n, seed } => (gen_triangle(*n, *seed)?, false),
            Self::Ring { n, seed } => (gen_ring(*n, *seed)?, false),
            Self::Iris { path } => (uci(path.as_deref(), CsvSchema::Iris)?, true),
            Self::Wine { path } => (uci(path.as_deref(), CsvSchema::Wine)?, true),
            Self::Modfmt { n, seed, .. } => (gen_modfmt_dataset(*n, *seed, &self.signal().expect("modfmt"))?, true),
            Self::Csv { path, classes, scale } => (datasets::read_labeled_csv(path, classes.as_deref())?, *scale),
        };
        let scaling = scale.then(|| ds.minmax_scale());
        Ok((ds, scaling))
    }

    fn signal(&self) -> Option<SignalConfig> {
        match self {
            Self::Modfmt { snr_db, .. } => Some(SignalConfig {
                snr_db: Some(*snr_db),
                ..SignalConfig::default()
            }),
            _ => None,
        }
    }
}

fn uci(path: Option<&Path>, schema: CsvSchema) -> Result<Dataset> {
    match path {
        Some(p) => datasets::read_csv(p, schema),
        None => Ok(datasets::bundled(schema)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchitectureConfig {
    Template(String),
    Layered {
        width: usize,
        layers: usize,
        #[serde(default)]
        keep: Option<Vec<usize>>,
    },
    Spec(NetworkSpec),
}

impl ArchitectureConfig {
    pub fn build(&self) -> Result<NetworkSpec> {
        match self {
            Self::Template(name) => template(name),
            Self::Layered { width, layers, keep } => NetworkSpec::layered(*width, *layers, keep.clone()),
            Self::Spec(spec) => Ok(spec.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ga,
    Pso,
    Sgd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ga => "ga",
            Self::Pso => "pso",
            Self::Sgd => "sgd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ga" => Ok(Self::Ga),
            "pso" => Ok(Self::Pso),
            "sgd" => Ok(Self::Sgd),
            _ => Err(Error::invalid(format!(
                "unknown algorithm {s:?}; expected ga, pso or sgd"
            ))),
        }
    }
}

fn default_train_fraction() -> f64 {
    0.8
}

/// One training run. The trainer seed is always `run_seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Defaults to the template named after the dataset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<ArchitectureConfig>,
    pub algorithm: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ga: Option<GaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pso: Option<PsoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd: Option<GradConfig>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub run_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetConfig, algorithm: Algorithm) -> Self {
        Self {
            dataset,
            architecture: None,
            algorithm,
            ga: None,
            pso: None,
            sgd: None,
            train_fraction: default_train_fraction(),
            split_seed: 0,
            run_seed: 0,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse without validating, so overrides can be applied first.
    /// Unreadable files count as configuration errors.
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg = Self::read(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        self.dataset.violations(&mut errors);
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            errors.push(format!(
                "train_fraction must lie strictly between 0 and 1, got {}",
                self.train_fraction
            ));
        }
        for (name, present, algo) in [
            ("ga", self.ga.is_some(), Algorithm::Ga),
            ("pso", self.pso.is_some(), Algorithm::Pso),
            ("sgd", self.sgd.is_some(), Algorithm::Sgd),
        ] {
            if present && algo != self.algorithm {
                errors.push(format!(
                    "a {name} block was given but the algorithm is {}",
                    self.algorithm.name()
                ));
            }
        }
        match self.algorithm {
            Algorithm::Ga => errors.extend(self.ga_config().violations()),
            Algorithm::Pso => errors.extend(self.pso_config().violations()),
            Algorithm::Sgd => errors.extend(self.sgd_config().violations()),
        }
        match &self.architecture {
            Some(a) => {
                if let Err(e) = a.build() {
                    errors.push(format!("architecture: {e}"));
                }
            }
            None if self.dataset.default_template().is_none() => {
                errors.push("architecture is required for csv datasets".to_string())
            }
            None => {}
        }
        errors
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.violations();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    /// Switch algorithm, keeping only the block that belongs to it.
    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        if algorithm != Algorithm::Ga {
            self.ga = None;
        }
        if algorithm != Algorithm::Pso {
            self.pso = None;
        }
        if algorithm != Algorithm::Sgd {
            self.sgd = None;
        }
        self
    }

    pub fn spec(&self) -> Result<NetworkSpec> {
        match (&self.architecture, self.dataset.default_template()) {
            (Some(a), _) => a.build(),
            (None, Some(t)) => template(t),
            (None, None) => Err(Error::Config(vec![
                "architecture is required for csv datasets".to_string()
            ])),
        }
    }

    pub fn ga_config(&self) -> GaConfig {
        GaConfig {
            seed: self.run_seed,
            ..self.ga.clone().unwrap_or_default()
        }
    }

    pub fn pso_config(&self) -> PsoConfig {
        PsoConfig {
            seed: self.run_seed,
            ..self.pso.clone().unwrap_or_default()
        }
    }

    pub fn sgd_config(&self) -> GradConfig {
        GradConfig {
            seed: self.run_seed,
            ..self.sgd.clone().unwrap_or_default()
        }
    }
}

/// Everything a run needs before the trainer starts.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub spec: NetworkSpec,
    pub encoding: InputEncoding,
    pub scaling: Option<Scaling>,
    pub class_names: Vec<String>,
    pub feature_dim: usize,
    pub train: Samples,
    pub test: Samples,
}

/// Load, split and encode the dataset and build the network.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let spec = cfg.spec()?;
    let (ds, scaling) = cfg.dataset.load()?;
    let mut errors = Vec::new();
    if ds.classes() != spec.classes() {
        errors.push(format!(
            "the network detects {} classes but the dataset has {}",
            spec.classes(),
            ds.classes()
        ));
    }
    let encoding = InputEncoding::for_dims(ds.dim(), spec.input_width());
    if let Err(e) = &encoding {
        errors.push(format!("architecture: {e}"));
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let encoding = encoding?;
    let (train, test) = split(&ds, cfg.train_fraction, cfg.split_seed)?;
    Ok(Prepared {
        encoding,
        scaling,
        class_names: ds.class_names().to_vec(),
        feature_dim: ds.dim(),
        train: encode_dataset(&train, spec.input_width(), encoding)?,
        test: encode_dataset(&test, spec.input_width(), encoding)?,
        spec,
    })
}

pub fn train_prepared(cfg: &ExperimentConfig, prepared: &Prepared) -> Result<TrainResult> {
    let (spec, train, test) = (&prepared.spec, &prepared.train, &prepared.test);
    match cfg.algorithm {
        Algorithm::Ga => ga_train(spec, train, test, &cfg.ga_config()),
        Algorithm::Pso => pso_train(spec, train, test, &cfg.pso_config()),
        Algorithm::Sgd => sgd_train(spec, train, test, &cfg.sgd_config()),
    }
}

/// `generation,best_loss,mean_loss,train_accuracy,test_accuracy,elapsed_ms`.
pub fn metrics_csv(result: &TrainResult) -> String {
    let mut out = String::with_capacity(64 * (result.records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in &result.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            r.generation, r.best_loss, r.mean_loss, r.train_accuracy, r.test_accuracy, r.elapsed_ms
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub result: TrainResult,
    pub model: ModelFile,
    pub dir: PathBuf,
}

/// Full pipeline; writes `metrics.csv`, `model.json` and `config.echo.json`
/// into `out_dir`, or the configured directory when `out_dir` is unset.
pub fn run(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunOutput> {
    let dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config(vec!["no output directory given".to_string()]))?;
    let prepared = prepare(cfg)?;
    let result = train_prepared(cfg, &prepared)?;
    let model = ModelFile::new(cfg, &prepared, &result)?;

    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_atomic(&dir.join("metrics.csv"), metrics_csv(&result).as_bytes())?;
    write_atomic(&dir.join("model.json"), model.to_json()?.as_bytes())?;
    let echo = serde_json::to_string_pretty(cfg)? + "\n";
    write_atomic(&dir.join("config.echo.json"), echo.as_bytes())?;
    Ok(RunOutput { result, model, dir })
}

/// Kept ports of the last port drop, or all outputs when there is none.
pub(crate) fn kept_ports(spec: &NetworkSpec) -> Option<Vec<usize>> {
    spec.layers().iter().rev().find_map(|l| match l {
        LayerSpec::DropPorts { keep } => Some(keep.clone()),
        _ => None,
    })
}
