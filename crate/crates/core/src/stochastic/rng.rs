use std::fmt;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

/// Role of a noise stream inside one Monte-Carlo sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamRole {
    /// `W^{Q₁}`, driving the slow component (and the averaged equation).
    Slow,
    /// `W^{Q₂}`, driving the fast component.
    Fast,
    /// `W̄^{Q₂}`, driving the frozen equation.
    Frozen,
    /// Random initial data and other setup draws.
    Init,
}

impl StreamRole {
    fn code(self) -> u64 {
        match self {
            StreamRole::Slow => 1,
            StreamRole::Fast => 2,
            StreamRole::Frozen => 3,
            StreamRole::Init => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StreamRole::Slow => "slow",
            StreamRole::Fast => "fast",
            StreamRole::Frozen => "frozen",
            StreamRole::Init => "init",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub sample: u64,
    pub role: StreamRole,
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.sample, self.role.as_str())
    }
}

/// Counter-based Gaussian source.
///
/// The ChaCha key is derived from `(root_seed, sample, role)`; draw number
/// `counter` reads ChaCha stream `counter` from word 0. Any draw can be
/// replayed from the triple alone, and streams never share state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoiseStream {
    root_seed: u64,
    id: StreamId,
    counter: u64,
    key: [u8; 32],
}

impl NoiseStream {
    pub fn new(root_seed: u64, sample: u64, role: StreamRole) -> Self {
        let id = StreamId { sample, role };
        Self { root_seed, id, counter: 0, key: derive_key(root_seed, id) }
    }

    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Repositions the stream (checkpoint resume).
    pub fn set_counter(&mut self, counter: u64) {
        self.counter = counter;
    }

    /// Generator for draw `counter`, without advancing.
    pub fn rng_at(&self, counter: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(counter);
        rng
    }

    /// Generator for the current draw; advances the counter.
    pub fn next_rng(&mut self) -> ChaCha8Rng {
        let rng = self.rng_at(self.counter);
        self.counter += 1;
        rng
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_key(root: u64, id: StreamId) -> [u8; 32] {
    let mut h = splitmix(root);
    h = splitmix(h ^ splitmix(id.sample.wrapping_add(0x5851_f42d_4c95_7f2d)));
    h = splitmix(h ^ splitmix(id.role.code().wrapping_mul(0x1405_7b7e_f767_814f)));
    let mut key = [0u8; 32];
    for (i, chunk) in key.chunks_exact_mut(8).enumerate() {
        h = splitmix(h.wrapping_add(i as u64));
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    key
}

/// Two independent standard normals (Box–Muller on two 53-bit uniforms).
pub fn normal_pair<R: RngCore + ?Sized>(rng: &mut R) -> (f64, f64) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE;
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
    (r * c, r * s)
}
