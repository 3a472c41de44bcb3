//! Seeded sample plans of 2×2 matrices for class validation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::tensor::{rotation, Mat2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplePlan {
    pub count: usize,
    pub seed: u64,
}

impl Default for SamplePlan {
    fn default() -> Self {
        Self { count: 4000, seed: 0 }
    }
}

pub(crate) fn gaussian_matrix(rng: &mut ChaCha8Rng) -> Mat2 {
    Mat2::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

impl SamplePlan {
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Mixture of near-rotations at several scales, scaled rotations and
    /// broad Gaussian matrices.
    pub fn matrices(&self) -> Vec<Mat2> {
        let mut rng = self.rng();
        let scales = [0.01, 0.05, 0.2, 0.5, 1.0, 2.0];
        (0..self.count)
            .map(|i| {
                let r = rotation(rng.random_range(0.0..std::f64::consts::TAU));
                match i % 4 {
                    0 | 1 => {
                        let s = scales[rng.random_range(0..scales.len())];
                        r + gaussian_matrix(&mut rng) * s
                    }
                    2 => r * rng.random_range(0.0..3.0) + gaussian_matrix(&mut rng) * 0.3,
                    _ => gaussian_matrix(&mut rng) * rng.random_range(0.1..8.0),
                }
            })
            .collect()
    }

    /// Pairs of matrices from the same mixture.
    pub fn pairs(&self) -> Vec<(Mat2, Mat2)> {
        let a = self.matrices();
        let b = SamplePlan { count: self.count, seed: self.seed.wrapping_add(0x9e37_79b9) }.matrices();
        a.into_iter().zip(b).collect()
    }

    /// `R(θ)(I + tS)` with `S` a random unit symmetric matrix, so that
    /// `dist(F, SO(2)) = t` exactly; `count` samples cycled over `dists`.
    pub fn near_rotations(&self, dists: &[f64]) -> Vec<Mat2> {
        let mut rng = self.rng();
        (0..self.count)
            .map(|i| {
                let t = dists[i % dists.len()];
                let g = gaussian_matrix(&mut rng);
                let s = (g + g.transpose()) * 0.5;
                let r = rotation(rng.random_range(0.0..std::f64::consts::TAU));
                r * (Mat2::identity() + s * (t / s.norm()))
            })
            .collect()
    }

    pub fn rotations(&self) -> Vec<Mat2> {
        let mut rng = self.rng();
        (0..self.count)
            .map(|_| rotation(rng.random_range(0.0..std::f64::consts::TAU)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_rotations_hit_the_requested_distance() {
        let p = SamplePlan { count: 30, seed: 3 };
        for (i, f) in p.near_rotations(&[0.02, 0.05, 0.1]).iter().enumerate() {
            let t = [0.02, 0.05, 0.1][i % 3];
            assert!((crate::energy::dist_so2(f) - t).abs() < 1e-12);
        }
    }

    #[test]
    fn plans_are_reproducible() {
        let p = SamplePlan { count: 50, seed: 7 };
        assert_eq!(p.matrices(), p.matrices());
        let q = SamplePlan { count: 50, seed: 8 };
        assert_ne!(p.matrices(), q.matrices());
        assert_eq!(p.pairs().len(), 50);
    }
}
