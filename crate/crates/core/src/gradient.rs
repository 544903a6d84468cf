//! Full-batch gradient descent with central-difference gradients and an
//! optional L2 penalty.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{
    flatten, unflatten, ActivationParams, LayerParams, NetworkSpec, ParamVector, Samples, ALPHA_BOUNDS, BIAS_BOUNDS,
    GAIN_BOUNDS,
};
use crate::rng::{substream, STREAM_INIT};
use crate::train::{uniform_point, NetworkObjective, Objective, Recorder, StopReason, TrainResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradConfig {
    pub learning_rate: f64,
    /// Weight of `½‖ω‖²`.
    pub penalty: f64,
    pub fd_step: f64,
    pub max_iterations: usize,
    pub seed: u64,
    /// Shared starting triple for every activation layer. `None` draws the
    /// activations uniformly like the phases; uniform draws usually tap away
    /// most of the signal and leave a vanishing gradient.
    pub activation_start: Option<ActivationParams>,
}

pub const DEFAULT_ACTIVATION_START: ActivationParams = ActivationParams {
    alpha: 0.05,
    gain: 1.5,
    bias: -0.2,
};

impl Default for GradConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            penalty: 0.0,
            fd_step: 1e-4,
            max_iterations: 1000,
            seed: 0,
            activation_start: Some(DEFAULT_ACTIVATION_START),
        }
    }
}

impl GradConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            errors.push(format!(
                "sgd.learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            ));
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            errors.push(format!("sgd.penalty must be finite and >= 0, got {}", self.penalty));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            errors.push(format!("sgd.fd_step must be finite and > 0, got {}", self.fd_step));
        }
        if let Some(a) = &self.activation_start {
            for (name, v, (lo, hi)) in [
                ("alpha", a.alpha, ALPHA_BOUNDS),
                ("gain", a.gain, GAIN_BOUNDS),
                ("bias", a.bias, BIAS_BOUNDS),
            ] {
                if !(lo..=hi).contains(&v) {
                    errors.push(format!("sgd.activation_start.{name} must lie in [{lo}, {hi}], got {v}"));
                }
            }
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
}

/// `(L(x + h·e_d) − L(x − h·e_d)) / 2h` for every coordinate. Probes may
/// leave the bounds by `h`.
pub fn finite_diff_grad<O: Objective + ?Sized>(objective: &O, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .into_par_iter()
        .map_init(
            || x.to_vec(),
            |probe, d| {
                probe[d] = x[d] + h;
                let up = objective.loss(probe);
                probe[d] = x[d] - h;
                let down = objective.loss(probe);
                probe[d] = x[d];
                (up - down) / (2.0 * h)
            },
        )
        .collect()
}

/// One step `clip(ω − η(λω + g))`.
pub fn descent_step(x: &[f64], grad: &[f64], bounds: &[(f64, f64)], cfg: &GradConfig) -> Vec<f64> {
    x.iter()
        .zip(grad)
        .zip(bounds)
        .map(|((&w, &g), &(lo, hi))| (w - cfg.learning_rate * (cfg.penalty * w + g)).clamp(lo, hi))
        .collect()
}

/// Descend from `start`. Records carry the loss of the current iterate in
/// both loss columns; `best` is the lowest-loss iterate seen.
pub fn sgd_minimize_from<O: Objective + ?Sized>(
    objective: &O,
    start: Vec<f64>,
    cfg: &GradConfig,
) -> Result<TrainResult> {
    cfg.validate()?;
    let bounds = objective.bounds();
    if start.len() != bounds.len() {
        return Err(Error::shape(format!(
            "start of dimension {} for {} bounds",
            start.len(),
            bounds.len()
        )));
    }
    let mut x = start;
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut recorder = Recorder::new(0, 0.0);
    for iteration in 0..=cfg.max_iterations {
        let loss = objective.loss(&x);
        if !loss.is_finite() {
            return Err(Error::Divergence(format!("iteration {iteration}: loss is {loss}")));
        }
        if best.as_ref().is_none_or(|(_, l)| loss < *l) {
            best = Some((x.clone(), loss));
        }
        recorder.push(objective, &x, loss, loss);
        if iteration == cfg.max_iterations {
            break;
        }
        let grad = finite_diff_grad(objective, &x, cfg.fd_step);
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!("iteration {iteration}: non-finite gradient")));
        }
        x = descent_step(&x, &grad, bounds, cfg);
    }
    let (x, loss) = best.expect("at least one iterate");
    Ok(recorder.finish(
        ParamVector::new(x, bounds.to_vec())?,
        loss,
        StopReason::MaxGenerations,
        cfg.seed,
    ))
}

/// Descend from a uniform draw inside the bounds.
pub fn sgd_minimize<O: Objective + ?Sized>(objective: &O, cfg: &GradConfig) -> Result<TrainResult> {
    let start = uniform_point(objective.bounds(), &mut substream(cfg.seed, STREAM_INIT, 2, 0));
    sgd_minimize_from(objective, start, cfg)
}

/// Uniform phases with activations pinned to `cfg.activation_start`.
pub fn network_start(spec: &NetworkSpec, cfg: &GradConfig) -> Result<Vec<f64>> {
    let bounds = spec.bounds();
    let start = uniform_point(&bounds, &mut substream(cfg.seed, STREAM_INIT, 2, 0));
    let Some(act) = cfg.activation_start else {
        return Ok(start);
    };
    let layers = unflatten(spec, &ParamVector::new(start, bounds)?)?
        .into_iter()
        .map(|l| match l {
            LayerParams::Activation(_) => LayerParams::Activation(act),
            other => other,
        })
        .collect::<Vec<_>>();
    Ok(flatten(spec, &layers)?.values)
}

pub fn sgd_train(spec: &NetworkSpec, train: &Samples, test: &Samples, cfg: &GradConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let objective = NetworkObjective::new(spec, train, test)?;
    sgd_minimize_from(&objective, network_start(spec, cfg)?, cfg)
}
