use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Source of standard-normal draws. Lets tests substitute a zero draw.
pub trait NoiseSource {
    fn standard_normal(&mut self) -> f64;

    fn fill(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.standard_normal();
        }
    }
}

/// Seeded per-chain random stream.
pub type ChainRng = ChaCha8Rng;

impl NoiseSource for ChaCha8Rng {
    fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

/// Always draws 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}

/// Independent stream `chain` of the generator seeded with `seed`.
pub fn chain_rng(seed: u64, chain: u64) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}
