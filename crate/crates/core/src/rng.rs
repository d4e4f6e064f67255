//! Seedable, splittable random streams.
//!
//! Every consumer of randomness derives its own ChaCha stream from the run seed
//! plus a domain tag and two indices, so draws never depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type Rng = ChaCha12Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Topology = 1,
    Channel = 2,
    Algorithm = 3,
    Property = 4,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, domain: Domain, a: u64, b: u64) -> Rng {
    let mut rng = Rng::seed_from_u64(seed);
    let id = splitmix(splitmix(splitmix(domain as u64) ^ a) ^ b.rotate_left(17));
    rng.set_stream(id);
    rng
}
