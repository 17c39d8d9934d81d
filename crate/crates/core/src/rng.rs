//! Reproducible random sub-streams.
//!
//! A run is identified by a 64-bit seed. Each consumer asks for the stream
//! keyed by `(seed, purpose, replica)`; streams never overlap, so adding
//! replicas or changing one consumer leaves every other stream untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Keeps batch selection and noise independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Batch,
    Noise,
    Init,
    Audit,
    Data,
    /// Free-form tag for callers that need additional disjoint streams.
    Custom(u32),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Batch => 0x6261_7463,
            Purpose::Noise => 0x6e6f_6973,
            Purpose::Init => 0x696e_6974,
            Purpose::Audit => 0x6175_6474,
            Purpose::Data => 0x6461_7461,
            Purpose::Custom(c) => 0x1_0000_0000 | c as u64,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Factory for keyed ChaCha8 streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamFactory {
    seed: u64,
}

impl StreamFactory {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A factory for an independent family of streams (e.g. the neighbouring chain).
    pub fn derive(&self, salt: u64) -> Self {
        Self::new(splitmix64(
            self.seed ^ splitmix64(salt.wrapping_add(0x5eed)),
        ))
    }

    pub fn stream(&self, purpose: Purpose, replica: u64) -> ChaCha8Rng {
        let key = splitmix64(self.seed ^ splitmix64(purpose.tag()));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(replica);
        rng
    }
}
