#![allow(dead_code)]

use num_complex::Complex64 as C64;
use onnevo::mesh::{build_mesh, MeshLayout, MeshParams, MziSetting, SquareMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Haar-ish random unitary: Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary(n: usize, rng: &mut impl Rng) -> SquareMatrix {
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n);
    while cols.len() < n {
        let mut v: Vec<C64> = (0..n)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        for q in &cols {
            let proj: C64 = q.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
            for (x, qk) in v.iter_mut().zip(q) {
                *x -= proj * qk;
            }
        }
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-8 {
            cols.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let rows = (0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect();
    SquareMatrix::from_rows(rows).unwrap()
}

pub fn permutation(perm: &[usize]) -> SquareMatrix {
    let n = perm.len();
    let rows = (0..n)
        .map(|r| {
            (0..n)
                .map(|c| C64::new(if perm[c] == r { 1.0 } else { 0.0 }, 0.0))
                .collect()
        })
        .collect();
    SquareMatrix::from_rows(rows).unwrap()
}

pub fn random_params(layout: &MeshLayout, rng: &mut impl Rng) -> MeshParams {
    let tau = std::f64::consts::TAU;
    MeshParams {
        input_phases: (0..layout.width()).map(|_| rng.random_range(0.0..tau)).collect(),
        mzis: (0..layout.mzi_count())
            .map(|_| MziSetting::new(rng.random_range(0.0..tau), rng.random_range(0.0..tau)).unwrap())
            .collect(),
        output_phases: None,
    }
}

pub fn random_field(n: usize, rng: &mut impl Rng) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect()
}

pub fn norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn layout(n: usize) -> MeshLayout {
    build_mesh(n).unwrap()
}
