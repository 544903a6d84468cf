//! Particle swarm search over bounded parameter vectors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkSpec, ParamVector, Samples};
use crate::rng::{substream, STREAM_INIT, STREAM_SWARM};
use crate::train::{
    check_stall, mean, population_losses, uniform_point, NetworkObjective, Objective, Recorder, StopReason, TrainResult,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub population_size: usize,
    pub inertia: f64,
    pub c1: f64,
    pub c2: f64,
    /// Per-component velocity limit in raw parameter units.
    pub v_clamp: f64,
    pub max_generations: usize,
    /// Zero disables the stall rule.
    pub stall_generations: usize,
    pub stall_tolerance: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            population_size: 500,
            inertia: 0.729,
            c1: 1.49445,
            c2: 1.49445,
            v_clamp: 2.0,
            max_generations: 1000,
            stall_generations: 5,
            stall_tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.population_size < 1 {
            errors.push("pso.population_size must be >= 1".to_string());
        }
        if !(self.inertia >= 0.0 && self.inertia.is_finite()) {
            errors.push(format!("pso.inertia must be finite and >= 0, got {}", self.inertia));
        }
        for (name, c) in [("c1", self.c1), ("c2", self.c2)] {
            if !(c >= 0.0 && c.is_finite()) {
                errors.push(format!("pso.{name} must be finite and >= 0, got {c}"));
            }
        }
        if !(self.v_clamp > 0.0 && self.v_clamp.is_finite()) {
            errors.push(format!("pso.v_clamp must be finite and > 0, got {}", self.v_clamp));
        }
        check_stall(self.stall_tolerance, &mut errors);
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

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub pbest: Vec<f64>,
    pub pbest_loss: f64,
}

/// `W·V + c1·r1·(pb − X) + c2·r2·(gb − X)`, clamped per component.
pub fn velocity_update_with(p: &Particle, gbest: &[f64], cfg: &PsoConfig, r1: f64, r2: f64) -> Result<Vec<f64>> {
    let d = p.position.len();
    if p.velocity.len() != d || p.pbest.len() != d || gbest.len() != d {
        return Err(Error::shape(format!(
            "particle of dimension {d} with velocity {}, pbest {} and gbest {}",
            p.velocity.len(),
            p.pbest.len(),
            gbest.len()
        )));
    }
    Ok((0..d)
        .map(|k| {
            let x = p.position[k];
            let raw = cfg.inertia * p.velocity[k] + cfg.c1 * r1 * (p.pbest[k] - x) + cfg.c2 * r2 * (gbest[k] - x);
            raw.clamp(-cfg.v_clamp, cfg.v_clamp)
        })
        .collect())
}

/// As [`velocity_update_with`] with one fresh `(r1, r2)` pair.
pub fn velocity_update(p: &Particle, gbest: &[f64], cfg: &PsoConfig, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let r1: f64 = rng.random();
    let r2: f64 = rng.random();
    velocity_update_with(p, gbest, cfg, r1, r2)
}

/// `X + V`, clipped into the bounds.
pub fn position_update(position: &[f64], velocity: &[f64], bounds: &[(f64, f64)]) -> Result<Vec<f64>> {
    if velocity.len() != position.len() || bounds.len() != position.len() {
        return Err(Error::shape(format!(
            "position of dimension {} with velocity {} and {} bounds",
            position.len(),
            velocity.len(),
            bounds.len()
        )));
    }
    Ok(position
        .iter()
        .zip(velocity)
        .zip(bounds)
        .map(|((x, v), &(lo, hi))| (x + v).clamp(lo, hi))
        .collect())
}

pub fn init_swarm(bounds: &[(f64, f64)], cfg: &PsoConfig) -> Vec<Particle> {
    (0..cfg.population_size)
        .map(|i| {
            let mut rng = substream(cfg.seed, STREAM_INIT, 1, i as u64);
            let position = uniform_point(bounds, &mut rng);
            let velocity = (0..bounds.len())
                .map(|_| rng.random_range(-cfg.v_clamp..=cfg.v_clamp))
                .collect();
            Particle {
                pbest: position.clone(),
                position,
                velocity,
                pbest_loss: f64::INFINITY,
            }
        })
        .collect()
}

/// Minimise `objective`. `best_loss` in the records is the swarm's best
/// known loss and never increases.
pub fn pso_minimize<O: Objective + ?Sized>(objective: &O, cfg: &PsoConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let bounds = objective.bounds();
    let mut swarm = init_swarm(bounds, cfg);
    let mut gbest: Option<(Vec<f64>, f64)> = None;
    let mut recorder = Recorder::new(cfg.stall_generations, cfg.stall_tolerance);
    let mut generation = 0;
    loop {
        let positions: Vec<Vec<f64>> = swarm.iter().map(|p| p.position.clone()).collect();
        let losses = population_losses(objective, &positions);
        if let Some(i) = losses.iter().position(|l| l.is_nan()) {
            return Err(Error::Divergence(format!(
                "generation {generation}: loss of particle {i} is NaN"
            )));
        }
        for (p, &loss) in swarm.iter_mut().zip(&losses) {
            if loss < p.pbest_loss {
                p.pbest.clone_from(&p.position);
                p.pbest_loss = loss;
            }
        }
        for p in &swarm {
            if gbest.as_ref().is_none_or(|(_, l)| p.pbest_loss < *l) {
                gbest = Some((p.pbest.clone(), p.pbest_loss));
            }
        }
        let (g_x, g_loss) = gbest.as_ref().expect("non-empty swarm");
        recorder.push(objective, g_x, *g_loss, mean(&losses));

        let stop = if generation >= cfg.max_generations {
            Some(StopReason::MaxGenerations)
        } else if recorder.stalled() {
            Some(StopReason::Stalled)
        } else {
            None
        };
        if let Some(reason) = stop {
            let (x, loss) = gbest.expect("non-empty swarm");
            return Ok(recorder.finish(ParamVector::new(x, bounds.to_vec())?, loss, reason, cfg.seed));
        }

        for (i, p) in swarm.iter_mut().enumerate() {
            let mut rng = substream(cfg.seed, STREAM_SWARM, generation as u64, i as u64);
            p.velocity = velocity_update(p, g_x, cfg, &mut rng)?;
            p.position = position_update(&p.position, &p.velocity, bounds)?;
        }
        generation += 1;
    }
}

pub fn pso_train(spec: &NetworkSpec, train: &Samples, test: &Samples, cfg: &PsoConfig) -> Result<TrainResult> {
    pso_minimize(&NetworkObjective::new(spec, train, test)?, cfg)
}
