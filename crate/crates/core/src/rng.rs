//! Named, seed-derived random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a, used only to map a stream label onto a ChaCha stream number.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A deterministic generator derived from `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    id: String,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: impl Into<String>) -> Self {
        let id = stream_id.into();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label_hash(&id));
        Self { id, rng }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
