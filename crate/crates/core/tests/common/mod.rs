//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use lifted_core::encoding::encode_preliminary_block;
use lifted_core::ledger::{Chain, ChainParams, EncryptionKey};
use lifted_core::state::{CMatrix, StateVector};
use lifted_core::transaction::{NodeId, Transaction, TxId};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn random_vector<R: Rng>(rng: &mut R, dim: usize) -> StateVector {
    StateVector::new((0..dim).map(|_| complex(rng)).collect()).unwrap()
}

pub fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> StateVector {
    loop {
        let v = random_vector(rng, dim);
        if v.norm() > 1e-3 {
            return v.normalized();
        }
    }
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex(rng))
}

/// `G[i][j] = sum_k conj(v_i[k]) v_j[k]`, one scalar at a time.
pub fn brute_gram(vs: &[StateVector]) -> Vec<Vec<Complex64>> {
    vs.iter()
        .map(|a| {
            vs.iter()
                .map(|b| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..a.dim() {
                        acc += a[k].conj() * b[k];
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Largest singular value by power iteration on `M^H M`.
pub fn power_iteration_norm(m: &CMatrix) -> f64 {
    let mtm = m.adjoint() * m;
    let mut v = nalgebra::DVector::from_fn(m.ncols(), |i, _| Complex64::new(1.0 + i as f64 * 0.37, 0.11 * i as f64));
    v /= Complex64::new(v.norm(), 0.0);
    // fixed iteration count: an early stop on small steps can trigger
    // before convergence when the top two singular values are close
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let next = &mtm * &v;
        lambda = next.norm();
        if lambda == 0.0 {
            return 0.0;
        }
        v = next / Complex64::new(lambda, 0.0);
    }
    lambda.sqrt()
}

/// Max-abs entry of `a - b`.
pub fn max_entry_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn random_tx<R: Rng>(rng: &mut R) -> Transaction {
    let receivers = (0..rng.gen_range(1..3)).map(|_| NodeId(rng.gen_range(0..64))).collect();
    let sources = (0..rng.gen_range(1..3)).map(|_| TxId(rng.gen())).collect();
    let mut tx = Transaction::new(
        NodeId(rng.gen_range(0..64)),
        receivers,
        rng.gen_range(1..1_000_000),
        sources,
        rng.gen(),
    );
    tx.signature = (0..16).map(|_| rng.gen()).collect();
    tx
}

/// A block of one or two random transactions, encoded in `C^n`.
pub fn random_preliminary<R: Rng>(rng: &mut R, n: usize) -> StateVector {
    let txs: Vec<Transaction> = (0..rng.gen_range(1..3)).map(|_| random_tx(rng)).collect();
    encode_preliminary_block(&txs, n).unwrap()
}

/// A chain of `len` random transaction blocks under `key`.
pub fn random_chain<R: Rng>(rng: &mut R, params: ChainParams, len: usize, key: &EncryptionKey) -> Chain {
    let mut chain = Chain::new(params);
    for _ in 0..len {
        chain.append(&random_preliminary(rng, params.n()), key).unwrap();
    }
    chain
}
