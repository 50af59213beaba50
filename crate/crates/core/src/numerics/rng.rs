use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A splittable, counter-based random stream.
///
/// A stream is a plain value: drawing creates a fresh generator positioned at
/// the start of `(seed, stream_id)`, so the same stream always yields the same
/// sequence. Independent sub-streams come from [`RngStream::derive`], never
/// from sharing one generator between consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream { seed, stream_id: 0 }
    }

    /// Child stream keyed by `key`; distinct keys give distinct stream ids.
    pub fn derive(&self, key: u64) -> Self {
        RngStream {
            seed: self.seed,
            stream_id: splitmix64(
                self.stream_id ^ splitmix64(key.wrapping_add(0xA076_1D64_78BD_642F)),
            ),
        }
    }

    /// Child stream keyed by a path of integers.
    pub fn derive_path(&self, keys: &[u64]) -> Self {
        keys.iter().fold(*self, |s, &k| s.derive(k))
    }

    /// Child stream keyed by a label, for separating concerns (batching,
    /// masks, initialization) under one seed.
    pub fn derive_label(&self, label: &str) -> Self {
        let key = label.bytes().fold(0xCBF2_9CE4_8422_2325_u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01B3)
        });
        self.derive(key)
    }

    /// Generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}
