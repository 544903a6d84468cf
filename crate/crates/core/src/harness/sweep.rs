use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{kept_ports, prepare, train_prepared, Algorithm, ArchitectureConfig, ExperimentConfig};
use crate::error::{Error, Result};
use crate::ga::Selection;

pub const MIN_SWEEP_SEEDS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Population,
    Selection,
    Layers,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "population" => Ok(Self::Population),
            "selection" => Ok(Self::Selection),
            "layers" => Ok(Self::Layers),
            _ => Err(Error::invalid(format!(
                "unknown sweep axis {s:?}; expected population, selection or layers"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Population => "population",
            Self::Selection => "selection",
            Self::Layers => "layers",
        }
    }
}

/// Medians over the run seeds for one axis value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub runs: usize,
    pub median_best_loss: f64,
    pub median_train_accuracy: f64,
    pub median_test_accuracy: f64,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn apply(base: &ExperimentConfig, axis: SweepAxis, value: &str) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::Population => {
            let n: usize = value
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("population value {value:?} is not an integer")))?;
            match cfg.algorithm {
                Algorithm::Ga => {
                    cfg.ga = Some(super::GaConfig {
                        population_size: n,
                        ..cfg.ga_config()
                    })
                }
                Algorithm::Pso => {
                    cfg.pso = Some(super::PsoConfig {
                        population_size: n,
                        ..cfg.pso_config()
                    })
                }
                Algorithm::Sgd => unreachable!("checked by the caller"),
            }
        }
        SweepAxis::Selection => {
            let selection = Selection::parse(value.trim())?;
            cfg.ga = Some(super::GaConfig {
                selection,
                ..cfg.ga_config()
            });
        }
        SweepAxis::Layers => {
            let layers: usize = value
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("layer value {value:?} is not an integer")))?;
            let spec = base.spec()?;
            cfg.architecture = Some(ArchitectureConfig::Layered {
                width: spec.input_width(),
                layers,
                keep: kept_ports(&spec),
            });
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Train every `(value, seed)` pair sharing the base split seed. Run seeds
/// are `run_seed, run_seed + 1, ...`.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String], seeds: usize) -> Result<Vec<SweepRow>> {
    let mut errors = Vec::new();
    if values.is_empty() {
        errors.push("sweep needs at least one value".to_string());
    }
    if seeds < MIN_SWEEP_SEEDS {
        errors.push(format!("sweep needs at least {MIN_SWEEP_SEEDS} seeds, got {seeds}"));
    }
    match (axis, base.algorithm) {
        (SweepAxis::Population, Algorithm::Sgd) => {
            errors.push("the population axis applies to ga and pso only".to_string())
        }
        (SweepAxis::Selection, a) if a != Algorithm::Ga => {
            errors.push("the selection axis applies to ga only".to_string())
        }
        _ => {}
    }
    if !errors.is_empty() {
        return Err(Error::Config(errors));
    }
    let configs = values
        .iter()
        .map(|v| apply(base, axis, v))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(values.len());
    for (value, cfg) in values.iter().zip(configs) {
        let prepared = prepare(&cfg)?;
        let mut loss = Vec::with_capacity(seeds);
        let mut train_acc = Vec::with_capacity(seeds);
        let mut test_acc = Vec::with_capacity(seeds);
        for k in 0..seeds as u64 {
            let run_cfg = ExperimentConfig {
                run_seed: base.run_seed.wrapping_add(k),
                ..cfg.clone()
            };
            let result = train_prepared(&run_cfg, &prepared)?;
            let last = result.final_record();
            loss.push(result.best_loss);
            train_acc.push(last.train_accuracy);
            test_acc.push(last.test_accuracy);
        }
        rows.push(SweepRow {
            value: value.trim().to_string(),
            runs: seeds,
            median_best_loss: median(&loss),
            median_train_accuracy: median(&train_acc),
            median_test_accuracy: median(&test_acc),
        });
    }
    Ok(rows)
}

/// `axis,value,runs,median_best_loss,median_train_accuracy,median_test_accuracy`.
pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut out = String::from("axis,value,runs,median_best_loss,median_train_accuracy,median_test_accuracy\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            axis.name(),
            r.value,
            r.runs,
            r.median_best_loss,
            r.median_train_accuracy,
            r.median_test_accuracy
        );
    }
    out
}
