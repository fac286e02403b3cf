//! Named random streams derived from a single master seed.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream, so
//! enabling or disabling one feature (SMOTE, say) never shifts the draws seen
//! by another (placement, weight init, channel).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Identifies an independent random stream within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split,
    Smote,
    Placement,
    WeightInit,
    DropModel,
    /// Per-epoch presentation order.
    Shuffle(u64),
    /// Drop decisions for one link.
    LinkDrop(u64),
    /// Delay draws for one link.
    LinkDelay(u64),
}

impl Stream {
    fn id(self) -> u64 {
        // Disjoint id ranges: fixed streams below 16, then three interleaved
        // families for the indexed streams.
        match self {
            Stream::Split => 1,
            Stream::Smote => 2,
            Stream::Placement => 3,
            Stream::WeightInit => 4,
            Stream::DropModel => 5,
            Stream::Shuffle(i) => 16 + 3 * i,
            Stream::LinkDrop(i) => 17 + 3 * i,
            Stream::LinkDelay(i) => 18 + 3 * i,
        }
    }
}

/// Source of per-purpose random streams for one run.
#[derive(Debug, Clone, Copy)]
pub struct StreamSeeds {
    master: u64,
}

impl StreamSeeds {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn rng(&self, stream: Stream) -> SimRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(stream.id());
        rng
    }
}
