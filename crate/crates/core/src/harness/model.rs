use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use time::format_description::well_known::Rfc3339;
use time::OffsetDateTime;

use super::{ExperimentConfig, Prepared, TOOL_VERSION};
use crate::datasets::{read_labeled_csv, InputEncoding, Scaling, SignalConfig};
use crate::error::{Error, Result};
use crate::mesh::C64;
use crate::network::{CompiledNetwork, Evaluation, NetworkSpec, ParamVector, Samples};
use crate::train::{StopReason, TrainResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub tool_version: String,
    /// RFC 3339, UTC. `SOURCE_DATE_EPOCH` pins it for reproducible output.
    pub timestamp: String,
    pub algorithm: String,
    pub dataset: String,
    pub class_names: Vec<String>,
    pub feature_dim: usize,
    pub encoding: InputEncoding,
    /// Applied to raw feature rows before encoding.
    pub feature_scaling: Option<Scaling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalConfig>,
    pub split_seed: u64,
    pub train_fraction: f64,
    pub stop_reason: StopReason,
    pub generations: usize,
    pub final_train_loss: f64,
    pub final_train_accuracy: f64,
    pub final_test_accuracy: f64,
}

/// A trained network as stored in `model.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub spec: NetworkSpec,
    pub param_values: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
    pub metadata: ModelMetadata,
}

fn timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| OffsetDateTime::from_unix_timestamp(s).ok())
        .unwrap_or_else(OffsetDateTime::now_utc);
    now.format(&Rfc3339).expect("UTC timestamps always format")
}

impl ModelFile {
    pub fn new(cfg: &ExperimentConfig, prepared: &Prepared, result: &TrainResult) -> Result<Self> {
        let last = result.final_record();
        let model = Self {
            spec: prepared.spec.clone(),
            param_values: result.best.values.clone(),
            bounds: result.best.bounds.clone(),
            seed: cfg.run_seed,
            metadata: ModelMetadata {
                tool_version: TOOL_VERSION.to_string(),
                timestamp: timestamp(),
                algorithm: cfg.algorithm.name().to_string(),
                dataset: cfg.dataset.name().to_string(),
                class_names: prepared.class_names.clone(),
                feature_dim: prepared.feature_dim,
                encoding: prepared.encoding,
                feature_scaling: prepared.scaling.clone(),
                signal: cfg.dataset.signal(),
                split_seed: cfg.split_seed,
                train_fraction: cfg.train_fraction,
                stop_reason: result.stop_reason,
                generations: last.generation,
                final_train_loss: result.best_loss,
                final_train_accuracy: last.train_accuracy,
                final_test_accuracy: last.test_accuracy,
            },
        };
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if self.bounds != self.spec.bounds() {
            return Err(Error::shape(format!(
                "model stores {} bounds that do not match its {}-parameter network",
                self.bounds.len(),
                self.spec.param_count()
            )));
        }
        ParamVector::new(self.param_values.clone(), self.bounds.clone())?;
        if self.metadata.class_names.len() != self.spec.classes() {
            return Err(Error::shape(format!(
                "{} class names for a network with {} outputs",
                self.metadata.class_names.len(),
                self.spec.classes()
            )));
        }
        InputEncoding::for_dims(self.metadata.feature_dim, self.spec.input_width())?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn network(&self) -> CompiledNetwork {
        CompiledNetwork::from_values(&self.spec, &self.param_values)
    }

    pub fn params(&self) -> ParamVector {
        ParamVector {
            values: self.param_values.clone(),
            bounds: self.bounds.clone(),
        }
    }

    /// Scale and encode one raw feature row.
    pub fn encode_row(&self, row: &[f64]) -> Result<Vec<C64>> {
        if row.len() != self.metadata.feature_dim {
            return Err(Error::shape(format!(
                "row of {} features for a model trained on {}",
                row.len(),
                self.metadata.feature_dim
            )));
        }
        let mut row = row.to_vec();
        if let Some(s) = &self.metadata.feature_scaling {
            s.apply(&mut row);
        }
        self.metadata.encoding.encode(&row, self.spec.input_width())
    }
}

/// Parse and validate a model file. Malformed content is a data error.
pub fn load_model(path: &Path) -> Result<ModelFile> {
    let text = crate::fsio::read_to_string(path)?;
    let model: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: e.line(),
        message: e.to_string(),
    })?;
    model.check()?;
    Ok(model)
}

/// Loss and accuracy of `model` on a headed feature CSV.
pub fn evaluate_csv(model: &ModelFile, data: &Path) -> Result<Evaluation> {
    let ds = read_labeled_csv(data, Some(&model.metadata.class_names))?;
    let fields = ds
        .features()
        .iter()
        .map(|row| model.encode_row(row))
        .collect::<Result<Vec<_>>>()?;
    let samples = Samples::new(
        model.spec.input_width(),
        model.spec.classes(),
        fields,
        ds.labels().to_vec(),
    )?;
    Ok(model.network().evaluate(&samples))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryRow {
    pub x: f64,
    pub y: f64,
    pub class: usize,
    pub powers: Vec<f64>,
}

/// Predictions at the centres of a `resolution × resolution` lattice of
/// cells covering `[0, 1]²` in scaled feature space, rows ordered by `y`
/// then `x`.
pub fn boundary_grid(model: &ModelFile, resolution: usize) -> Result<Vec<BoundaryRow>> {
    if model.metadata.feature_dim != 2 {
        return Err(Error::invalid(format!(
            "decision boundaries need a 2-feature model, this one takes {}",
            model.metadata.feature_dim
        )));
    }
    if resolution == 0 {
        return Err(Error::invalid("grid resolution must be at least 1"));
    }
    let net = model.network();
    let width = model.spec.input_width();
    let mut rows = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        for i in 0..resolution {
            let x = (i as f64 + 0.5) / resolution as f64;
            let y = (j as f64 + 0.5) / resolution as f64;
            let field = model.metadata.encoding.encode(&[x, y], width)?;
            let powers = net.forward(&field)?;
            rows.push(BoundaryRow {
                x,
                y,
                class: crate::network::predict(&powers)?,
                powers,
            });
        }
    }
    Ok(rows)
}

/// `x,y,class,p0,...` with one power column per class.
pub fn boundary_csv(rows: &[BoundaryRow]) -> String {
    let classes = rows.first().map_or(0, |r| r.powers.len());
    let mut out = String::from("x,y,class");
    for k in 0..classes {
        let _ = write!(out, ",p{k}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{},{}", r.x, r.y, r.class);
        for p in &r.powers {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    out
}
