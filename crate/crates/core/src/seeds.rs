//! Deterministic seed derivation.
//!
//! Every random draw in a protocol run comes from a ChaCha8 stream seeded by
//! `derive_seed(master, stream, subject)`, where `stream` names what is being
//! drawn (a phase's keyframes, a phase's teacher noise, metric start states).
//! The mix is three rounds of the SplitMix64 finaliser, so nearby inputs give
//! unrelated seeds and the value is stable across platforms and releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::phase::Phase;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: u64, subject: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ stream) ^ subject)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Named random streams of a protocol run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    /// Keyframes of a test phase (or the curriculum, for training phases).
    Keyframes(Phase),
    /// A simulated teacher's noise within a phase.
    TeacherNoise(Phase),
    Curriculum,
    /// Rollout start states shared by every subject of an experiment seed.
    MetricStarts,
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Keyframes(p) => 1 + p.index() as u64,
            Stream::TeacherNoise(p) => 101 + p.index() as u64,
            Stream::Curriculum => 200,
            Stream::MetricStarts => 300,
        }
    }
}

pub fn stream_seed(master: u64, stream: Stream, subject: u64) -> u64 {
    derive_seed(master, stream.id(), subject)
}
