//! Seeded inputs for the benchmarks.

use lifted_core::ledger::{relift, Chain, ChainParams, EncryptionKey};
use lifted_core::StateVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `count` random unit vectors in `C^n`.
pub fn unit_vectors(seed: u64, n: usize, count: usize) -> Vec<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let amps = (0..n)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            StateVector::new(amps).expect("finite").normalized()
        })
        .collect()
}

/// A chain holding `prelims`, under a fixed key.
pub fn chain_of(params: ChainParams, prelims: &[StateVector]) -> Chain {
    let key = EncryptionKey::new(1.1).expect("valid theta");
    let mut chain = Chain::new(params);
    for p in prelims {
        chain.append(p, &key).expect("capacity");
    }
    chain
}

/// Majority and local blocks (scaled to unit norm) for a fork that swaps the
/// last two of `len` blocks.
pub fn fork_inputs(params: &ChainParams, len: usize) -> (Vec<StateVector>, Vec<StateVector>) {
    let prelims = unit_vectors(7, params.n(), len);
    let mut swapped = prelims.clone();
    swapped.swap(len - 2, len - 1);
    let unit = |vs: Vec<StateVector>| vs.into_iter().map(|v| v.scaled(1.0 / params.r())).collect();
    (
        unit(relift(&prelims, params).expect("lift")),
        unit(relift(&swapped, params).expect("lift")),
    )
}
