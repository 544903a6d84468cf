use rand::Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{substream, STREAM_DATA};

pub const TRIANGLE_CLASSES: [&str; 2] = ["above", "below"];
pub const RING_CLASSES: [&str; 2] = ["in_ring", "out_ring"];

const RING_INNER: f64 = 0.25;
const RING_OUTER: f64 = 0.4;
const MIN_CLASS_SHARE: f64 = 0.1;

pub fn triangle_class(x: f64, y: f64) -> usize {
    usize::from(y <= x)
}

pub fn ring_class(x: f64, y: f64) -> usize {
    let r = (x - 0.5).hypot(y - 0.5);
    usize::from(!(RING_INNER..=RING_OUTER).contains(&r))
}

/// `n` uniform points on the unit square, class 0 strictly above `y = x`.
pub fn gen_triangle(n: usize, seed: u64) -> Result<Dataset> {
    gen_planar(n, seed, 0, triangle_class, &TRIANGLE_CLASSES)
}

/// `n` uniform points on the unit square, class 0 on the annulus
/// `0.25 ≤ r ≤ 0.4` around the centre.
pub fn gen_ring(n: usize, seed: u64) -> Result<Dataset> {
    gen_planar(n, seed, 1, ring_class, &RING_CLASSES)
}

fn gen_planar(n: usize, seed: u64, kind: u64, rule: fn(f64, f64) -> usize, names: &[&str]) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::invalid(format!("planar datasets need n >= 2, got {n}")));
    }
    let minority = ((n as f64 * MIN_CLASS_SHARE).ceil() as usize).max(1);
    for attempt in 0u64.. {
        let mut rng = substream(seed, STREAM_DATA, kind, attempt);
        let features: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let labels: Vec<usize> = features.iter().map(|p| rule(p[0], p[1])).collect();
        let ones = labels.iter().sum::<usize>();
        if ones.min(n - ones) >= minority {
            return Dataset::new(features, labels, names.iter().map(|s| s.to_string()).collect());
        }
    }
    unreachable!()
}
