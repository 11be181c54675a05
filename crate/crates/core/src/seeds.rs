//! Seed fan-out and the deterministic random generators used throughout.
//!
//! Every stream of random numbers in a run descends from the run's master
//! seed through [`derive_seed`]: the first eight bytes (little endian) of
//! `SHA-256(master_seed_le || role || 0x00 || index_le)`. Roles are short
//! ASCII labels such as `"realization"`, `"chain"` or `"couplings"`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Name and version of the generator behind every random stream.
pub const GENERATOR: &str = "chacha8-v1";

pub type Rng = ChaCha8Rng;

pub fn derive_seed(master_seed: u64, role: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master_seed.to_le_bytes());
    hasher.update(role.as_bytes());
    hasher.update([0u8]);
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Generator seeded from `seed`.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
///
/// ChaCha is counter based, so streams never overlap regardless of how many
/// numbers each one consumes.
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
