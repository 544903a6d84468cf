//! Pieces shared by the trainers: the objective being minimised, per
//! generation records and the stall rule.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{CompiledNetwork, NetworkSpec, ParamVector, Samples};

/// A bounded real objective. `loss` must be deterministic.
pub trait Objective: Sync {
    fn bounds(&self) -> &[(f64, f64)];

    fn loss(&self, x: &[f64]) -> f64;

    /// Train and test accuracy of `x`, when meaningful.
    fn accuracies(&self, _x: &[f64]) -> (f64, f64) {
        (f64::NAN, f64::NAN)
    }

    fn dim(&self) -> usize {
        self.bounds().len()
    }
}

/// Train-set MSE of a network; accuracies are reported on both sets.
pub struct NetworkObjective<'a> {
    spec: &'a NetworkSpec,
    bounds: Vec<(f64, f64)>,
    train: &'a Samples,
    test: &'a Samples,
}

impl<'a> NetworkObjective<'a> {
    pub fn new(spec: &'a NetworkSpec, train: &'a Samples, test: &'a Samples) -> Result<Self> {
        for set in [train, test] {
            if set.width() != spec.input_width() || set.classes() != spec.classes() {
                return Err(Error::shape(format!(
                    "samples of width {} with {} classes for a network of width {} with {} classes",
                    set.width(),
                    set.classes(),
                    spec.input_width(),
                    spec.classes()
                )));
            }
        }
        Ok(Self {
            spec,
            bounds: spec.bounds(),
            train,
            test,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        self.spec
    }
}

impl Objective for NetworkObjective<'_> {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn loss(&self, x: &[f64]) -> f64 {
        CompiledNetwork::from_values(self.spec, x).evaluate(self.train).loss
    }

    fn accuracies(&self, x: &[f64]) -> (f64, f64) {
        let net = CompiledNetwork::from_values(self.spec, x);
        (net.evaluate(self.train).accuracy(), net.evaluate(self.test).accuracy())
    }
}

/// Losses of many candidates, in order. Evaluation may run concurrently.
pub fn population_losses<O: Objective + ?Sized>(objective: &O, population: &[Vec<f64>]) -> Vec<f64> {
    population.par_iter().map(|x| objective.loss(x)).collect()
}

pub fn uniform_point(bounds: &[(f64, f64)], rng: &mut impl Rng) -> Vec<f64> {
    bounds
        .iter()
        .map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_loss: f64,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxGenerations,
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub records: Vec<GenerationRecord>,
    pub best: ParamVector,
    pub best_loss: f64,
    pub stop_reason: StopReason,
    pub seed: u64,
}

impl TrainResult {
    pub fn final_record(&self) -> &GenerationRecord {
        self.records
            .last()
            .expect("at least the initial generation is recorded")
    }
}

/// Collects records and decides when the best loss has stopped moving.
pub(crate) struct Recorder {
    start: Instant,
    records: Vec<GenerationRecord>,
    stall_generations: usize,
    stall_tolerance: f64,
}

impl Recorder {
    pub fn new(stall_generations: usize, stall_tolerance: f64) -> Self {
        Self {
            start: Instant::now(),
            records: Vec::new(),
            stall_generations,
            stall_tolerance,
        }
    }

    pub fn push<O: Objective + ?Sized>(&mut self, objective: &O, best: &[f64], best_loss: f64, mean_loss: f64) {
        let (train_accuracy, test_accuracy) = objective.accuracies(best);
        self.records.push(GenerationRecord {
            generation: self.records.len(),
            best_loss,
            mean_loss,
            train_accuracy,
            test_accuracy,
            elapsed_ms: self.start.elapsed().as_secs_f64() * 1e3,
        });
    }

    /// `|best(g) − best(g − S)| < tol`; `S = 0` disables the rule.
    pub fn stalled(&self) -> bool {
        let s = self.stall_generations;
        let g = self.records.len();
        s > 0
            && g > s
            && (self.records[g - 1].best_loss - self.records[g - 1 - s].best_loss).abs() < self.stall_tolerance
    }

    pub fn finish(self, best: ParamVector, best_loss: f64, stop_reason: StopReason, seed: u64) -> TrainResult {
        TrainResult {
            records: self.records,
            best,
            best_loss,
            stop_reason,
            seed,
        }
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Index of the smallest value, lowest index on ties.
pub(crate) fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_stall(stall_tolerance: f64, errors: &mut Vec<String>) {
    if !(stall_tolerance >= 0.0 && stall_tolerance.is_finite()) {
        errors.push(format!(
            "stall_tolerance must be finite and >= 0, got {stall_tolerance}"
        ));
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stall_rule() {
        let obj = fixtures::Sphere {
            bounds: vec![(0.0, 1.0)],
            centre: vec![0.0],
        };
        let mut r = Recorder::new(2, 1e-4);
        for loss in [1.0, 0.5, 0.5] {
            r.push(&obj, &[0.0], loss, loss);
            assert!(!r.stalled());
        }
        r.push(&obj, &[0.0], 0.49995, 0.5);
        assert!(r.stalled());

        let mut off = Recorder::new(0, 1e-4);
        for _ in 0..10 {
            off.push(&obj, &[0.0], 1.0, 1.0);
        }
        assert!(!off.stalled());
    }

    #[test]
    fn argmin_prefers_lowest_index() {
        assert_eq!(argmin(&[0.3, 0.1, 0.1]), 1);
    }
}
