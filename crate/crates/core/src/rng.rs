//! Counter-based random streams.
//!
//! Every random draw in the toolkit comes from a [`StreamKey`]: the run seed
//! selects the ChaCha8 key and `(replicate, component, role)` is packed into
//! the 64-bit stream id, so distinct keys address disjoint keystreams no
//! matter which thread generates them or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum StreamRole {
    /// Telegraph signal θ_n.
    Theta = 0,
    /// Independent copy θ̂_n.
    ThetaHat = 1,
    /// Stationary noise feeding partial sums.
    Noise = 2,
    /// Standard normals for the exact sampler.
    Exact = 3,
    /// Anything test- or diagnostic-specific.
    Auxiliary = 4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub replicate: u64,
    pub component: u32,
    pub role: StreamRole,
}

const REPLICATE_BITS: u32 = 40;
const COMPONENT_BITS: u32 = 16;

impl StreamKey {
    pub fn new(seed: u64, replicate: u64, component: u32, role: StreamRole) -> Self {
        StreamKey {
            seed,
            replicate,
            component,
            role,
        }
    }

    /// Packed stream id: 40 bits replicate, 16 bits component, 8 bits role.
    pub fn stream_id(&self) -> u64 {
        assert!(self.replicate < (1 << REPLICATE_BITS), "replicate index too large");
        assert!(self.component < (1 << COMPONENT_BITS), "component index too large");
        (self.replicate << (COMPONENT_BITS + 8)) | ((self.component as u64) << 8) | self.role as u64
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id());
        rng
    }
}

/// SplitMix64 finaliser, used to derive sub-seeds (e.g. one per
/// approximation level) from a run seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
