//! Genetic search over bounded parameter vectors with fixed-point binary
//! chromosomes.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NetworkSpec, ParamVector, Samples};
use crate::rng::{substream, STREAM_BREED, STREAM_INIT};
use crate::train::{
    argmin, check_stall, mean, population_losses, uniform_point, NetworkObjective, Objective, Recorder, StopReason,
    TrainResult,
};

pub const TOURNAMENT_SIZE: usize = 3;
pub const LINEAR_RANK_PRESSURE: f64 = 1.5;
pub const EXP_RANK_BASE: f64 = 0.99;
pub const ROULETTE_FLOOR: f64 = 1e-9;
pub const MAX_BITS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Tournament,
    Roulette,
    LinearRank,
    ExpRank,
}

impl Selection {
    pub const ALL: [Selection; 4] = [Self::Tournament, Self::Roulette, Self::LinearRank, Self::ExpRank];

    pub fn name(self) -> &'static str {
        match self {
            Self::Tournament => "tournament",
            Self::Roulette => "roulette",
            Self::LinearRank => "linear_rank",
            Self::ExpRank => "exp_rank",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown selection method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub bits_per_variable: usize,
    pub p_crossover: f64,
    pub p_gene_exchange: f64,
    pub p_mutation_bit: f64,
    pub selection: Selection,
    pub elite_fraction: f64,
    pub max_generations: usize,
    /// Zero disables the stall rule.
    pub stall_generations: usize,
    pub stall_tolerance: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 500,
            bits_per_variable: 16,
            p_crossover: 0.8,
            p_gene_exchange: 0.5,
            p_mutation_bit: 0.05,
            selection: Selection::Tournament,
            elite_fraction: 0.05,
            max_generations: 1000,
            stall_generations: 5,
            stall_tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.population_size < 2 {
            errors.push(format!("ga.population_size must be >= 2, got {}", self.population_size));
        }
        if !(2..=MAX_BITS).contains(&self.bits_per_variable) {
            errors.push(format!(
                "ga.bits_per_variable must lie in 2..={MAX_BITS}, got {}",
                self.bits_per_variable
            ));
        }
        for (name, p) in [
            ("p_crossover", self.p_crossover),
            ("p_gene_exchange", self.p_gene_exchange),
            ("p_mutation_bit", self.p_mutation_bit),
            ("elite_fraction", self.elite_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                errors.push(format!("ga.{name} must lie in [0, 1], got {p}"));
            }
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

    pub fn elite_count(&self) -> usize {
        ((self.elite_fraction * self.population_size as f64).ceil() as usize).min(self.population_size)
    }
}

/// `bits_per_variable` big-endian bits per variable, concatenated.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Chromosome(pub Vec<bool>);

impl Chromosome {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn levels(bits: usize) -> u64 {
    (1u64 << bits) - 1
}

fn check_bits(bits: usize) -> Result<()> {
    if !(2..=MAX_BITS).contains(&bits) {
        return Err(Error::invalid(format!(
            "bits per variable must lie in 2..={MAX_BITS}, got {bits}"
        )));
    }
    Ok(())
}

pub fn encode(v: &ParamVector, bits: usize) -> Result<Chromosome> {
    check_bits(bits)?;
    v.check()?;
    Ok(encode_values(&v.values, &v.bounds, bits))
}

fn encode_values(values: &[f64], bounds: &[(f64, f64)], bits: usize) -> Chromosome {
    let top = levels(bits);
    let mut out = Vec::with_capacity(values.len() * bits);
    for (&x, &(lo, hi)) in values.iter().zip(bounds) {
        let q = if hi > lo {
            ((x - lo) / (hi - lo) * top as f64).round().clamp(0.0, top as f64) as u64
        } else {
            0
        };
        out.extend((0..bits).rev().map(|k| q >> k & 1 == 1));
    }
    Chromosome(out)
}

pub fn decode(c: &Chromosome, bounds: &[(f64, f64)], bits: usize) -> Result<ParamVector> {
    check_bits(bits)?;
    if c.len() != bounds.len() * bits {
        return Err(Error::shape(format!(
            "chromosome of {} bits for {} variables at {bits} bits",
            c.len(),
            bounds.len()
        )));
    }
    ParamVector::new(decode_values(c, bounds, bits), bounds.to_vec())
}

fn decode_values(c: &Chromosome, bounds: &[(f64, f64)], bits: usize) -> Vec<f64> {
    let top = levels(bits);
    c.0.chunks_exact(bits)
        .zip(bounds)
        .map(|(gene, &(lo, hi))| {
            let q = gene.iter().fold(0u64, |acc, &b| acc << 1 | u64::from(b));
            if q == top {
                hi
            } else {
                (lo + q as f64 / top as f64 * (hi - lo)).clamp(lo, hi)
            }
        })
        .collect()
}

/// Parent sampler built once per generation from the population's losses.
pub struct Selector {
    kind: SelectorKind,
}

enum SelectorKind {
    Single,
    Tournament(Vec<f64>),
    Weighted(WeightedIndex<f64>),
}

impl Selector {
    pub fn new(losses: &[f64], method: Selection) -> Result<Self> {
        let n = losses.len();
        if n == 0 {
            return Err(Error::invalid("cannot select from an empty population"));
        }
        if losses.iter().any(|l| !l.is_finite()) {
            return Err(Error::invalid("selection needs finite losses"));
        }
        if n == 1 {
            return Ok(Self {
                kind: SelectorKind::Single,
            });
        }
        let weights: Vec<f64> = match method {
            Selection::Tournament => {
                return Ok(Self {
                    kind: SelectorKind::Tournament(losses.to_vec()),
                })
            }
            Selection::Roulette => {
                let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                losses.iter().map(|l| max - l + ROULETTE_FLOOR).collect()
            }
            Selection::LinearRank | Selection::ExpRank => {
                let ranks = worst_first_ranks(losses);
                let last = (n - 1) as f64;
                ranks
                    .iter()
                    .map(|&r| match method {
                        Selection::LinearRank => {
                            (2.0 - LINEAR_RANK_PRESSURE) + 2.0 * (LINEAR_RANK_PRESSURE - 1.0) * r as f64 / last
                        }
                        _ => EXP_RANK_BASE.powf(last - r as f64),
                    })
                    .collect()
            }
        };
        let index = WeightedIndex::new(&weights).map_err(|e| Error::invalid(format!("selection weights: {e}")))?;
        Ok(Self {
            kind: SelectorKind::Weighted(index),
        })
    }

    pub fn pick(&self, rng: &mut impl Rng) -> usize {
        match &self.kind {
            SelectorKind::Single => 0,
            SelectorKind::Weighted(index) => index.sample(rng),
            SelectorKind::Tournament(losses) => {
                let mut best = rng.random_range(0..losses.len());
                for _ in 1..TOURNAMENT_SIZE {
                    let c = rng.random_range(0..losses.len());
                    if losses[c] < losses[best] || (losses[c] == losses[best] && c < best) {
                        best = c;
                    }
                }
                best
            }
        }
    }
}

/// Rank 0 for the worst loss, `n − 1` for the best; equal losses rank the
/// lower index higher.
fn worst_first_ranks(losses: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(b.cmp(&a)));
    let mut ranks = vec![0; losses.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r;
    }
    ranks
}

pub fn select_parent(losses: &[f64], method: Selection, rng: &mut impl Rng) -> Result<usize> {
    Ok(Selector::new(losses, method)?.pick(rng))
}

pub fn uniform_crossover(
    a: &Chromosome,
    b: &Chromosome,
    cfg: &GaConfig,
    rng: &mut impl Rng,
) -> Result<(Chromosome, Chromosome)> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("crossover of {} and {} bits", a.len(), b.len())));
    }
    let mut c1 = a.clone();
    let mut c2 = b.clone();
    if rng.random_bool(cfg.p_crossover) {
        for (x, y) in c1.0.iter_mut().zip(c2.0.iter_mut()) {
            if rng.random_bool(cfg.p_gene_exchange) {
                std::mem::swap(x, y);
            }
        }
    }
    Ok((c1, c2))
}

pub fn mutate(c: &Chromosome, p_mutation_bit: f64, rng: &mut impl Rng) -> Chromosome {
    let mut out = c.clone();
    mutate_in_place(&mut out, p_mutation_bit, rng);
    out
}

fn mutate_in_place(c: &mut Chromosome, p: f64, rng: &mut impl Rng) {
    for bit in &mut c.0 {
        if rng.random_bool(p) {
            *bit = !*bit;
        }
    }
}

/// Minimise `objective` from a uniformly drawn population. Elites are
/// copied unchanged, so the best loss never increases while the elite
/// count is positive.
pub fn ga_minimize<O: Objective + ?Sized>(objective: &O, cfg: &GaConfig) -> Result<TrainResult> {
    cfg.validate()?;
    let bounds = objective.bounds();
    let bits = cfg.bits_per_variable;
    let n = cfg.population_size;
    let elites = cfg.elite_count();

    let mut population: Vec<Chromosome> = (0..n)
        .map(|i| {
            let x = uniform_point(bounds, &mut substream(cfg.seed, STREAM_INIT, 0, i as u64));
            encode_values(&x, bounds, bits)
        })
        .collect();
    let mut known: Vec<Option<f64>> = vec![None; n];

    let mut recorder = Recorder::new(cfg.stall_generations, cfg.stall_tolerance);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut generation = 0;
    loop {
        let decoded: Vec<Vec<f64>> = population.par_iter().map(|c| decode_values(c, bounds, bits)).collect();
        let pending: Vec<usize> = (0..n).filter(|&i| known[i].is_none()).collect();
        let fresh = population_losses(
            objective,
            &pending.iter().map(|&i| decoded[i].clone()).collect::<Vec<_>>(),
        );
        for (&i, l) in pending.iter().zip(fresh) {
            known[i] = Some(l);
        }
        let losses: Vec<f64> = known.iter().map(|l| l.expect("evaluated")).collect();
        if let Some(i) = losses.iter().position(|l| l.is_nan()) {
            return Err(Error::Divergence(format!(
                "generation {generation}: loss of individual {i} is NaN"
            )));
        }

        let g_best = argmin(&losses);
        if best.as_ref().is_none_or(|(_, l)| losses[g_best] < *l) {
            best = Some((decoded[g_best].clone(), losses[g_best]));
        }
        let (best_x, best_loss) = best.as_ref().expect("set above");
        recorder.push(objective, best_x, *best_loss, mean(&losses));

        let stop = if generation >= cfg.max_generations {
            Some(StopReason::MaxGenerations)
        } else if recorder.stalled() {
            Some(StopReason::Stalled)
        } else {
            None
        };
        if let Some(reason) = stop {
            let (x, loss) = best.expect("set above");
            let params = ParamVector::new(x, bounds.to_vec())?;
            return Ok(recorder.finish(params, loss, reason, cfg.seed));
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
        let selector = Selector::new(&losses, cfg.selection)?;
        let pairs = (n - elites).div_ceil(2);
        let children: Vec<Chromosome> = (0..pairs)
            .into_par_iter()
            .flat_map_iter(|slot| {
                let mut rng = substream(cfg.seed, STREAM_BREED, generation as u64, slot as u64);
                let a = &population[selector.pick(&mut rng)];
                let b = &population[selector.pick(&mut rng)];
                let (mut c1, mut c2) = uniform_crossover(a, b, cfg, &mut rng).expect("equal lengths");
                mutate_in_place(&mut c1, cfg.p_mutation_bit, &mut rng);
                mutate_in_place(&mut c2, cfg.p_mutation_bit, &mut rng);
                [c1, c2]
            })
            .collect();

        let mut next = Vec::with_capacity(n);
        let mut next_known = Vec::with_capacity(n);
        for &i in &order[..elites] {
            next.push(population[i].clone());
            next_known.push(known[i]);
        }
        next.extend(children.into_iter().take(n - elites));
        next_known.resize(n, None);
        population = next;
        known = next_known;
        generation += 1;
    }
}

pub fn ga_train(spec: &NetworkSpec, train: &Samples, test: &Samples, cfg: &GaConfig) -> Result<TrainResult> {
    ga_minimize(&NetworkObjective::new(spec, train, test)?, cfg)
}
