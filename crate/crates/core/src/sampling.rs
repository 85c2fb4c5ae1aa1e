//! Seeded sample generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Deterministic sampler; the same seed always yields the same stream.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Uniform point of `Π [lo_i, hi_i]`.
    pub fn in_box(&mut self, bounds: &[(f64, f64)]) -> Vec<f64> {
        bounds
            .iter()
            .map(|&(lo, hi)| if lo == hi { lo } else { self.rng.gen_range(lo..=hi) })
            .collect()
    }

    /// Uniform point of the closed Euclidean ball of `radius` in dimension `dim`.
    pub fn in_ball(&mut self, dim: usize, radius: f64) -> Vec<f64> {
        let dir = self.on_sphere(dim, 1.0);
        let r = radius * self.rng.gen::<f64>().powf(1.0 / dim.max(1) as f64);
        dir.into_iter().map(|d| d * r).collect()
    }

    /// Uniform point of the sphere of `radius`.
    pub fn on_sphere(&mut self, dim: usize, radius: f64) -> Vec<f64> {
        if dim == 0 {
            return Vec::new();
        }
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.rng.sample(StandardNormal)).collect();
            let n = crate::linalg::norm(&v);
            if n > 1e-12 {
                let mut out: Vec<f64> = v.into_iter().map(|x| radius * x / n).collect();
                // rounding can leave the norm a few ulps above the radius
                while crate::linalg::norm(&out) > radius {
                    out.iter_mut().for_each(|x| *x *= 1.0 - f64::EPSILON);
                }
                return out;
            }
        }
    }

    /// Uniform real in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}
