//! Property tests for the numerical core against brute-force oracles.

mod common;

use common::*;
use lifted_core::ledger::{decrypt_block, encrypt_block, ChainParams, EncryptionKey};
use lifted_core::liftgs::{
    classic_gram_schmidt, complete_to_orthogonal, gram_matrix, lift_batch, project, spectral_norm,
    sqrt_psd, LiftError, LiftingParams, LiftingWorkspace,
};
use lifted_core::state::{unitarity_residual, StateVector};
use proptest::prelude::*;

fn inputs() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 1usize..=6, 1usize..=8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_matches_double_loop((seed, dim, count) in inputs()) {
        let mut rng = rng(seed);
        let vs: Vec<StateVector> = (0..count).map(|_| random_vector(&mut rng, dim)).collect();
        let g = gram_matrix(&vs).unwrap();
        let brute = brute_gram(&vs);
        for i in 0..count {
            for j in 0..count {
                prop_assert!((g[(i, j)] - brute[i][j]).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn spectral_norm_matches_power_iteration((seed, rows, cols) in inputs()) {
        let m = random_matrix(&mut rng(seed), rows, cols);
        prop_assert!((spectral_norm(&m).unwrap() - power_iteration_norm(&m)).abs() <= 1e-9);
    }

    #[test]
    fn sqrt_squares_back((seed, dim, rank) in inputs()) {
        let x = random_matrix(&mut rng(seed), rank, dim);
        let h = x.adjoint() * &x;
        let s = sqrt_psd(&h).unwrap();
        prop_assert!(max_entry_diff(&(&s * &s), &h) <= 1e-9);
        prop_assert!(max_entry_diff(&s, &s.adjoint()) <= 1e-12);
    }

    #[test]
    fn batch_and_incremental_lifts_agree_on_invariants((seed, n, count) in inputs()) {
        let mut rng = rng(seed);
        let params = LiftingParams::new(n, 8).unwrap();
        let r = params.r();
        let vs: Vec<StateVector> = (0..count).map(|_| random_unit(&mut rng, n)).collect();
        let batch = lift_batch(&vs, &params).unwrap();
        let mut ws = LiftingWorkspace::new(params);
        let inc: Vec<_> = vs.iter().map(|v| ws.lift_append(v).unwrap()).collect();
        for blocks in [&batch, &inc] {
            for (i, a) in blocks.iter().enumerate() {
                prop_assert!((a.full.norm() - r).abs() <= 1e-9 * r);
                prop_assert!(project(&a.full, &params).unwrap().max_abs_diff(&vs[i]) <= 1e-12);
                for b in &blocks[i + 1..] {
                    prop_assert!(a.full.inner(&b.full).norm() <= 1e-9 * r * r);
                }
            }
        }
        // both variants share the disclosed part, so they differ only by a
        // unitary on the lifted coordinates: equal lifted-part Gram matrices
        let parts = |bs: &[lifted_core::OrthoBlock]| bs.iter().map(|b| b.lifted_part(&params)).collect::<Vec<_>>();
        let ga = gram_matrix(&parts(&batch)).unwrap();
        let gb = gram_matrix(&parts(&inc)).unwrap();
        prop_assert!(max_entry_diff(&ga, &gb) <= 1e-9);
    }

    #[test]
    fn incremental_lift_is_prefix_stable((seed, n, count) in inputs()) {
        let mut rng = rng(seed);
        let params = LiftingParams::new(n, 16).unwrap();
        let vs: Vec<StateVector> = (0..count + 1).map(|_| random_unit(&mut rng, n)).collect();
        let mut short = LiftingWorkspace::new(params);
        let mut long = LiftingWorkspace::new(params);
        for v in &vs[..count] {
            prop_assert_eq!(short.lift_append(v).unwrap(), long.lift_append(v).unwrap());
        }
        long.lift_append(&vs[count]).unwrap();
        let (a, b) = (short.chol(), long.chol());
        prop_assert_eq!(a.view((0, 0), (count, count)), b.view((0, 0), (count, count)));
    }

    #[test]
    fn classic_gs_is_orthonormal((seed, dim, count) in inputs()) {
        prop_assume!(count <= dim);
        let mut rng = rng(seed);
        let vs: Vec<StateVector> = (0..count).map(|_| random_vector(&mut rng, dim)).collect();
        let es = classic_gram_schmidt(&vs).unwrap();
        let g = gram_matrix(&es).unwrap();
        let eye = lifted_core::CMatrix::identity(count, count);
        prop_assert!(max_entry_diff(&g, &eye) <= 1e-9);
    }

    #[test]
    fn completion_is_unitary((seed, n, count) in inputs()) {
        let mut rng = rng(seed);
        let params = LiftingParams::new(n, 8).unwrap();
        let r = params.r();
        let vs: Vec<StateVector> = (0..count).map(|_| random_unit(&mut rng, n)).collect();
        let cols: Vec<StateVector> = lift_batch(&vs, &params).unwrap().into_iter().map(|b| b.full.scaled(1.0 / r)).collect();
        let u = complete_to_orthogonal(&cols).unwrap();
        prop_assert!(unitarity_residual(&u) <= 1e-9);
        for (j, c) in cols.iter().enumerate() {
            for i in 0..c.dim() {
                prop_assert!((u[(i, j)] - c[i]).norm() <= 1e-15);
            }
        }
    }

    #[test]
    fn encryption_round_trips_and_keeps_disclosed((seed, _a, _b) in inputs(), theta in 0.0..std::f64::consts::PI) {
        let params = ChainParams::new(8, 8).unwrap();
        let w = random_vector(&mut rng(seed), params.block_dim());
        let key = EncryptionKey::new(theta).unwrap();
        let enc = encrypt_block(&w, &key, &params).unwrap();
        prop_assert_eq!(&enc.amps()[..8], &w.amps()[..8]);
        prop_assert!((enc.norm() - w.norm()).abs() <= 1e-12);
        prop_assert!(decrypt_block(&enc, &key, &params).unwrap().max_abs_diff(&w) <= 1e-12);
    }
}

#[test]
fn first_append_has_sqrt3_pivot() {
    let params = LiftingParams::with_radius(2, 2, 2.0).unwrap();
    let mut ws = LiftingWorkspace::new(params);
    let b = ws.lift_append(&StateVector::basis(2, 0)).unwrap();
    let expected = [1.0, 0.0, 3f64.sqrt(), 0.0];
    for (a, e) in b.full.amps().iter().zip(expected) {
        assert!((a.re - e).abs() < 1e-15 && a.im == 0.0);
    }
}

#[test]
fn duplicate_inputs_lift_to_orthogonal_blocks() {
    let params = LiftingParams::with_radius(2, 2, 2.0).unwrap();
    let v = StateVector::from_real(&[0.6, 0.8]).unwrap();
    let out = lift_batch(&[v.clone(), v.clone()], &params).unwrap();
    assert!(out[0].full.inner(&out[1].full).norm() <= 1e-9 * 4.0);
    for b in &out {
        assert!(project(&b.full, &params).unwrap().max_abs_diff(&v) <= 1e-12);
    }
}

#[test]
fn small_radius_and_capacity_errors() {
    let params = LiftingParams::with_radius(2, 2, 0.5).unwrap();
    let v = StateVector::basis(2, 1);
    assert!(matches!(lift_batch(std::slice::from_ref(&v), &params), Err(LiftError::RadiusTooSmall { .. })));

    let params = LiftingParams::new(2, 2).unwrap();
    let mut ws = LiftingWorkspace::new(params);
    ws.lift_append(&v).unwrap();
    ws.lift_append(&v).unwrap();
    assert!(matches!(ws.lift_append(&v), Err(LiftError::CapacityExceeded { capacity: 2 })));
}
