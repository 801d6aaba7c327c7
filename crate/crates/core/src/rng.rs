//! Seeded random streams. One experiment seed fans out into independent
//! named streams so each stage can be rerun on its own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Data,
    Init,
    Training,
    Inference,
    Baseline,
    Split,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Data => 1,
            Stream::Init => 2,
            Stream::Training => 3,
            Stream::Inference => 4,
            Stream::Baseline => 5,
            Stream::Split => 6,
        }
    }
}

/// A generator for `stream` derived from `seed`.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
