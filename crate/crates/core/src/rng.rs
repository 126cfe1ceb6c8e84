//! Seeded random streams, one per (node, domain).
//!
//! Each stream is derived from the scenario seed with a splitmix64 mix of the
//! node id and domain tag, so the draws a node sees never depend on the order
//! in which other nodes consume randomness.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::world::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Domain {
    Gnss,
    Sense,
    Attack,
    Walk,
    Layout,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Gnss => 0x01,
            Domain::Sense => 0x02,
            Domain::Attack => 0x03,
            Domain::Walk => 0x04,
            Domain::Layout => 0x05,
        }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed for one stream.
pub fn stream_seed(seed: u64, node: NodeId, domain: Domain) -> u64 {
    splitmix64(splitmix64(seed ^ splitmix64(node.0)) ^ domain.tag())
}

pub fn stream_rng(seed: u64, node: NodeId, domain: Domain) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, node, domain))
}

/// Lazily created registry of independent streams.
#[derive(Debug, Clone)]
pub struct RngStreams {
    seed: u64,
    streams: BTreeMap<(NodeId, Domain), ChaCha8Rng>,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&mut self, node: NodeId, domain: Domain) -> &mut ChaCha8Rng {
        let seed = self.seed;
        self.streams
            .entry((node, domain))
            .or_insert_with(|| stream_rng(seed, node, domain))
    }
}
