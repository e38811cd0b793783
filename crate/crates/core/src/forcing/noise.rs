use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Counter-addressed Gaussian stream.
///
/// The draw for `(trajectory, step, mode)` depends only on those indices and
/// the seed: the ChaCha key mixes `seed` and `trajectory`, the ChaCha stream
/// id is the step, and modes are consumed in order within that stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    pub seed: u64,
    pub trajectory: u64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl NoiseStream {
    pub fn new(seed: u64, trajectory: u64) -> NoiseStream {
        NoiseStream { seed, trajectory }
    }

    /// Stream for another member of the same ensemble.
    pub fn member(&self, trajectory: u64) -> NoiseStream {
        NoiseStream { seed: self.seed, trajectory }
    }

    /// Generator positioned at the start of `step`.
    pub fn rng_at(&self, step: u64) -> ChaCha8Rng {
        let key = splitmix(self.seed ^ splitmix(self.trajectory.wrapping_add(0x5851_f42d_4c95_7f2d)));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(step);
        rng
    }

    /// `count` independent `N(0, dt)` increments for `step`.
    pub fn increments(&self, step: u64, count: usize, dt: f64) -> Vec<f64> {
        let mut rng = self.rng_at(step);
        let sd = dt.sqrt();
        (0..count).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
    }
}
