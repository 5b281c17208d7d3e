mod common;

use cktlab::connalg::FiberConnForm;
use cktlab::holonomy::*;
use cktlab::linalg::{self, max_abs, CMat, CVec, I};
use cktlab::torusmodel::{assemble, ckt_kernel, FourierConnection, TorusConfig};
use cktlab::Execution;
use common::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn unit(g: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| g.random_range(-1.0..1.0)).collect();
        let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 0.2 {
            return v.iter().map(|x| x / nv).collect();
        }
    }
}

fn diag_conn() -> FourierConnection {
    let o = C64::new(0.0, 0.0);
    let a = CMat::from_row_slice(2, 2, &[I, o, o, I * 2.0]);
    FourierConnection::constant(FiberConnForm::single(2, 0, a).unwrap()).unwrap()
}

fn pauli_conn() -> FourierConnection {
    let (sx, sy, _) = pauli();
    FourierConnection::constant(FiberConnForm::new(vec![sx * I, sy * I], true).unwrap()).unwrap()
}

/// Skew-Hermitian connection with a constant part and a few Fourier modes.
fn wavy_conn(g: &mut ChaCha8Rng, n: usize, r: usize) -> FourierConnection {
    let form = |g: &mut ChaCha8Rng| FiberConnForm::new((0..n).map(|_| rand_skew(g, r)).collect(), true).unwrap();
    let mut c = FourierConnection::constant(form(g)).unwrap();
    for _ in 0..2 {
        let q: Vec<i32> = (0..n).map(|_| g.random_range(-1..=1)).collect();
        if q.iter().all(|&x| x == 0) {
            continue;
        }
        c = c.add(&FourierConnection::cosine(&q, &form(g)).unwrap()).unwrap();
        c = c.add(&FourierConnection::sine(&q, &form(g)).unwrap()).unwrap();
    }
    c
}

#[test]
fn constant_transport_matches_exponential() {
    let mut g = rng(10);
    for t in 0..30 {
        let n = 2 + t % 2;
        let r = 1 + t % 4;
        let gammas: Vec<CMat> = (0..n).map(|_| rand_skew(&mut g, r)).collect();
        let conn = FourierConnection::constant(FiberConnForm::new(gammas.clone(), true).unwrap()).unwrap();
        let v = unit(&mut g, n);
        let len = g.random_range(0.5..4.0);
        let x0: Vec<f64> = (0..n).map(|_| g.random_range(0.0..6.3)).collect();
        let seg = GeodesicSegment::new(x0, v.clone(), len).unwrap();
        let res = transport(&conn, &seg, 200).unwrap();
        let mut gv = CMat::zeros(r, r);
        for (gj, vj) in gammas.iter().zip(&v) {
            gv += gj * C64::new(*vj, 0.0);
        }
        let oracle = linalg::expm(&(gv * C64::new(-len, 0.0)));
        assert!(max_abs(&(&res.c - oracle)) <= 1e-8, "case {t}");
        assert!(res.unitarity_defect <= 1e-8);
        assert!(res.error_estimate <= 1e-8);
    }
}

#[test]
fn transport_composes_along_a_geodesic() {
    let mut g = rng(11);
    for _ in 0..10 {
        let conn = wavy_conn(&mut g, 2, 3);
        let v = unit(&mut g, 2);
        let x0 = vec![g.random_range(0.0..6.3), g.random_range(0.0..6.3)];
        let whole = transport(&conn, &GeodesicSegment::new(x0.clone(), v.clone(), 3.0).unwrap(), 400).unwrap();
        let first = GeodesicSegment::new(x0, v.clone(), 1.5).unwrap();
        let second = GeodesicSegment::new(first.end(), v, 1.5).unwrap();
        let a = transport(&conn, &first, 200).unwrap();
        let b = transport(&conn, &second, 200).unwrap();
        assert!(max_abs(&(&whole.c - &b.c * &a.c)) <= 1e-8);
        assert!(whole.unitarity_defect <= 1e-8);
    }
}

#[test]
fn transport_rejects_bad_input() {
    let seg = GeodesicSegment::new(vec![0.0, 0.0], vec![1.0, 0.0], 1.0).unwrap();
    assert!(transport(&diag_conn(), &seg, 8).is_err());
    let seg3 = GeodesicSegment::new(vec![0.0; 3], vec![1.0, 0.0, 0.0], 1.0).unwrap();
    assert!(transport(&diag_conn(), &seg3, 32).is_err());
}

#[test]
fn opacity_verdicts_on_documented_examples() {
    let opts = ProbeOptions::default();
    let rep = opacity_probe(&diag_conn(), &opts, Execution::Parallel).unwrap();
    assert_eq!(rep.verdict, OpacityVerdict::NotOpaque);
    assert_eq!(rep.commutant_dim, 2);
    assert_eq!(rep.projectors.len(), 2);
    for p in &rep.projectors {
        assert_eq!(p.rank, 1);
        assert!(p.defect <= 1e-6, "{}", p.defect);
    }
    assert!(rep.max_unitarity_defect <= 1e-8);

    let rep = opacity_probe(&pauli_conn(), &opts, Execution::Parallel).unwrap();
    assert_eq!(rep.commutant_dim, 1);
    assert_eq!(rep.verdict, OpacityVerdict::NoneDetected);
    assert!(rep.describe().starts_with("no invariant subbundle detected at tolerance"));

    let rep = opacity_probe(&FourierConnection::zero(2, 3), &opts, Execution::Parallel).unwrap();
    assert_eq!(rep.verdict, OpacityVerdict::Transparent);
    assert_eq!(rep.commutant_dim, 9);
}

#[test]
fn probe_is_identical_in_both_modes() {
    let mut g = rng(12);
    let conn = wavy_conn(&mut g, 2, 2);
    let opts = ProbeOptions { loops: 5, steps: 100, ..ProbeOptions::default() };
    let a = loop_holonomies(&conn, &opts, Execution::Sequential).unwrap();
    let b = loop_holonomies(&conn, &opts, Execution::Parallel).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.c, y.c);
    }
}

#[test]
fn block_diagonal_connection_keeps_its_blocks() {
    // ℂ³ = ℂ² ⊕ ℂ with a generic su(2) part on the first summand
    let mut g = rng(13);
    let mut gammas = Vec::new();
    for _ in 0..2 {
        let mut m = CMat::zeros(3, 3);
        m.view_mut((0, 0), (2, 2)).copy_from(&rand_skew_tracefree(&mut g, 2));
        m[(2, 2)] = I * g.random_range(-1.0..1.0);
        gammas.push(m);
    }
    let conn = FourierConnection::constant(FiberConnForm::new(gammas, true).unwrap()).unwrap();
    let rep = opacity_probe(&conn, &ProbeOptions::default(), Execution::Sequential).unwrap();
    assert_eq!(rep.verdict, OpacityVerdict::NotOpaque);
    assert_eq!(rep.commutant_dim, 2);
    let mut ranks: Vec<usize> = rep.projectors.iter().map(|p| p.rank).collect();
    ranks.sort();
    assert_eq!(ranks, vec![1, 2]);
    assert!(rep.projectors.iter().all(|p| p.defect <= 1e-6));
}

#[test]
fn commutant_of_commuting_unitaries() {
    let mut g = rng(14);
    let u = CMat::from_fn(4, 4, |_, _| rc(&mut g)).qr().q();
    let d1 = CMat::from_diagonal(&CVec::from_fn(4, |i, _| C64::from_polar(1.0, i as f64)));
    let d2 = CMat::from_diagonal(&CVec::from_fn(4, |i, _| C64::from_polar(1.0, (i * i) as f64 * 0.3)));
    let mats = vec![&u * d1 * u.adjoint(), &u * d2 * u.adjoint()];
    let basis = commutant(&mats, 1e-6);
    assert_eq!(basis.len(), 4);
    for b in &basis {
        for m in &mats {
            assert!(max_abs(&linalg::commutator(m, b)) <= 1e-10);
        }
    }
}

fn rand_projector(g: &mut ChaCha8Rng, r: usize, k: usize) -> CMat {
    let q = CMat::from_fn(r, r, |_, _| rc(g)).qr().q();
    let cols = q.columns(0, k);
    &cols * cols.adjoint()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn complement_has_the_same_defect(seed in 0u64..10_000, r in 2usize..5, n in 2usize..4) {
        let mut g = rng(seed);
        let conn = wavy_conn(&mut g, n, r);
        let k = 1 + (seed as usize) % (r - 1);
        let p = EndoField::constant(n, rand_projector(&mut g, r, k));
        let d = invariance_defect(&conn, &p, 40, seed).unwrap();
        let dc = invariance_defect(&conn, &p.complement(), 40, seed).unwrap();
        prop_assert!(dc <= d + 1e-12);
        prop_assert!(d <= dc + 1e-12);
    }

    #[test]
    fn eigenvalue_drift_is_bounded_by_defect(seed in 0u64..10_000, eps in 1e-4f64..1e-1) {
        // u = parallel part + eps·(non-parallel part); along a geodesic the
        // conjugated field moves at most defect · length, so C ≤ 1 up to sampling
        let mut g = rng(seed);
        let conn = diag_conn();
        let o = C64::new(0.0, 0.0);
        let base = CMat::from_row_slice(2, 2, &[C64::new(0.3, 0.0), o, o, C64::new(-1.1, 0.0)]);
        let h = rand_mat(&mut g, 2);
        let h = (&h + h.adjoint()) * C64::new(0.5 * eps, 0.0);
        let modes = [(vec![0, 0], base + &h * C64::new(0.5, 0.0)), (vec![1, 0], h.clone() * C64::new(0.25, 0.0)), (vec![-1, 0], h * C64::new(0.25, 0.0))];
        let u = EndoField::from_modes(2, 2, modes.into_iter().collect()).unwrap();
        let seg = GeodesicSegment::new(vec![g.random_range(0.0..6.3), 0.4], unit(&mut g, 2), 3.0).unwrap();
        let rep = eigen_spread(&conn, &u, &seg, 600).unwrap();
        prop_assert!(rep.defect > 0.0);
        prop_assert!(rep.spread <= 1.05 * rep.defect * rep.length + 1e-12, "{rep:?}");
        prop_assert!(rep.constant <= 1.05);
    }
}

#[test]
fn parallel_hermitian_field_has_constant_eigenvalues() {
    let o = C64::new(0.0, 0.0);
    let u = EndoField::constant(2, CMat::from_row_slice(2, 2, &[C64::new(2.0, 0.0), o, o, C64::new(-1.0, 0.0)]));
    let seg = GeodesicSegment::new(vec![0.3, 1.0], vec![0.6, 0.8], 10.0).unwrap();
    let rep = eigen_spread(&diag_conn(), &u, &seg, 200).unwrap();
    assert!(rep.defect <= 1e-12 && rep.spread <= 1e-12);
    let bad = EndoField::constant(2, CMat::from_row_slice(2, 2, &[o, I, o, o]));
    assert!(eigen_spread(&diag_conn(), &bad, &seg, 10).is_err());
}

#[test]
fn non_projector_is_rejected() {
    let p = EndoField::constant(2, CMat::identity(2, 2) * C64::new(0.5, 0.0));
    assert!(invariance_defect(&diag_conn(), &p, 10, 1).is_err());
}

#[test]
fn frame_check_on_torus_kernels() {
    // constants under the trivial connection
    let cfg = TorusConfig::vector(2, 1, 0, 2).unwrap();
    let k0 = ckt_kernel(&assemble(&cfg, &FourierConnection::zero(2, 2), Execution::Sequential).unwrap(), Execution::Sequential).unwrap();
    assert_eq!(k0.dim(), 2);
    let rep = parallel_frame_check(&cfg, &k0.basis, 0, 50, 3).unwrap();
    assert!(rep.gram_drift <= 1e-12 && rep.independent);

    // A = diag(i, 2i) dx₁: the parallel frame is e^{−i x₁}e₁, e^{−2i x₁}e₂
    let cfg = TorusConfig::vector(2, 2, 0, 2).unwrap();
    let k = ckt_kernel(&assemble(&cfg, &diag_conn(), Execution::Sequential).unwrap(), Execution::Sequential).unwrap();
    assert_eq!(k.dim(), 2);
    let mut modes: Vec<Vec<i32>> = k.mode_weights.iter().map(|(m, _)| m.clone()).collect();
    modes.sort();
    assert_eq!(modes, vec![vec![-2, 0], vec![-1, 0]]);
    let rep = parallel_frame_check(&cfg, &k.basis, 0, 50, 3).unwrap();
    assert!(rep.gram_drift <= 1e-8 && rep.independent, "{rep:?}");
    // pointwise values carry the L² normalization of the torus × sphere
    let scale = rep.min_singular * rep.min_singular;

    // a non-kernel section injected
    let mut polluted = k.basis.clone();
    let idx = cfg.mode_index(&[1, 1]).unwrap() * cfg.fdim();
    polluted[(idx, 0)] += C64::new(0.5, 0.0);
    let bad = parallel_frame_check(&cfg, &polluted, 0, 50, 3).unwrap();
    assert!(bad.gram_drift > 0.5 * scale, "{bad:?}");
}
