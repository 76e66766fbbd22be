//! Deterministic random streams and sampling helpers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dilation::Dilation;

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform point of the shell `B_1 \ B_0` by rejection from the bounding box of `B_1`.
pub fn sample_unit_shell<R: Rng + ?Sized>(d: &Dilation, rng: &mut R) -> Vec<f64> {
    let hw = d.ball_half_widths(1);
    loop {
        let u: Vec<f64> = hw.iter().map(|&h| rng.random_range(-h..h)).collect();
        if d.ball_membership(&u, 1) && !d.ball_membership(&u, 0) {
            return u;
        }
    }
}

/// Uniform point of `B_i` by rejection from its bounding box.
pub fn sample_ball<R: Rng + ?Sized>(d: &Dilation, i: i32, rng: &mut R) -> Vec<f64> {
    let hw = d.ball_half_widths(i);
    loop {
        let u: Vec<f64> = hw.iter().map(|&h| rng.random_range(-h..h)).collect();
        if d.ball_membership(&u, i) {
            return u;
        }
    }
}

/// Point with step quasi-norm index `j`: `A^j u` with `u` uniform in `B_1 \ B_0`.
pub fn sample_shell<R: Rng + ?Sized>(d: &Dilation, j: i32, rng: &mut R) -> Vec<f64> {
    let u = sample_unit_shell(d, rng);
    d.apply_power(j, &u)
}

/// Uniform unit vector in `R^n`.
pub fn random_direction<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| rng.sample(rand_distr::StandardNormal))
            .collect();
        let norm = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn euclid(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
