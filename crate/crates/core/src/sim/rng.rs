//! Seeded, purpose-labelled RNG streams.
//!
//! Every consumer of randomness owns its own stream derived from the run
//! seed, a purpose label and an entity id. Streams never share draws, so the
//! sequence observed by one subsystem does not depend on how events from
//! other subsystems interleave.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose of a stream. Distinct labels never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    Mobility,
    Shadowing,
    Los,
    Traffic,
    AgentExploration,
    Topology,
    Jitter,
}

impl StreamLabel {
    fn tag(self) -> u64 {
        match self {
            StreamLabel::Mobility => 0x6d6f_6269,
            StreamLabel::Shadowing => 0x7368_6164,
            StreamLabel::Los => 0x6c6f_7370,
            StreamLabel::Traffic => 0x7472_6166,
            StreamLabel::AgentExploration => 0x6578_706c,
            StreamLabel::Topology => 0x746f_706f,
            StreamLabel::Jitter => 0x6a69_7474,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A reproducible random stream identified by `(seed, label, entity)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub label: StreamLabel,
    pub entity: u64,
}

impl RngStream {
    pub fn new(seed: u64, label: StreamLabel, entity: u64) -> Self {
        RngStream { seed, label, entity }
    }

    fn key(&self) -> u64 {
        splitmix64(splitmix64(self.seed ^ self.label.tag()) ^ self.entity)
    }

    /// Instantiate the generator. Identical `(seed, label, entity)` produce
    /// byte-identical sequences on every platform.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn same_stream_same_sequence() {
        let a: Vec<u64> = RngStream::new(42, StreamLabel::Mobility, 7)
            .rng()
            .sample_iter(rand::distributions::Standard)
            .take(16)
            .collect();
        let b: Vec<u64> = RngStream::new(42, StreamLabel::Mobility, 7)
            .rng()
            .sample_iter(rand::distributions::Standard)
            .take(16)
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_streams_are_independent() {
        let mut a = RngStream::new(42, StreamLabel::Mobility, 0).rng();
        let mut b = RngStream::new(42, StreamLabel::Shadowing, 0).rng();
        let mut c = RngStream::new(42, StreamLabel::Mobility, 1).rng();
        let xa: u64 = a.gen();
        let xb: u64 = b.gen();
        let xc: u64 = c.gen();
        assert_ne!(xa, xb);
        assert_ne!(xa, xc);
    }

    #[test]
    fn key_derivation_is_stable() {
        // Frozen expectations guard against accidental changes to the
        // derivation chain, which would silently re-randomize every scenario.
        assert_eq!(RngStream::new(0, StreamLabel::Mobility, 0).key(), 17174463242136193022);
        assert_eq!(RngStream::new(1, StreamLabel::Traffic, 2).key(), 5950891878701750411);
    }
}
