#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synthdesign::Panel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard-normal-ish entries scaled by `scale`, plus a unit-specific
/// level so units differ.
pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, s: usize, scale: f64) -> DMatrix<f64> {
    let levels: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    DMatrix::from_fn(n, s, |i, _| levels[i] * scale + rng.gen_range(-1.0..1.0) * scale * 0.5)
}

pub fn random_panel(seed: u64, n: usize, s: usize, t_pre: usize) -> Panel {
    let mut r = rng(seed);
    Panel::from_matrix(random_matrix(&mut r, n, s, 0.05), t_pre).unwrap()
}

/// Panel of `n` identical constant rows.
pub fn constant_panel(n: usize, s: usize, t_pre: usize, level: f64) -> Panel {
    Panel::from_matrix(DMatrix::from_element(n, s, level), t_pre).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
