//! Deterministic seed derivation for independent random streams.
//!
//! Every stream is keyed by `(master, trial, purpose, stream)`, so changing
//! the algorithm mode or the number of agents never perturbs the environment
//! or context sequence seen by a given agent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Env,
    Contexts,
    Noise,
    Zeta,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Env => 0x656e_7600,
            Purpose::Contexts => 0x6374_7800,
            Purpose::Noise => 0x6e6f_6900,
            Purpose::Zeta => 0x7a65_7400,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, trial: usize, purpose: Purpose, stream: usize) -> u64 {
    let mut h = splitmix64(master);
    h = splitmix64(h ^ trial as u64);
    h = splitmix64(h ^ purpose.tag());
    splitmix64(h ^ stream as u64)
}

pub fn stream_rng(master: u64, trial: usize, purpose: Purpose, stream: usize) -> Rng {
    Rng::seed_from_u64(derive_seed(master, trial, purpose, stream))
}
