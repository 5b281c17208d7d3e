mod common;

use cktlab::connalg::{FiberConnForm, TwistedHarmonic};
use cktlab::linalg::{max_abs, CMat};
use cktlab::polyharm::HPoly;
use cktlab::symbolcheck::*;
use cktlab::Execution;
use common::*;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;

const N: usize = 96;

fn verdict(fam: &SymbolFamily, count: usize) -> SpanReport {
    uniform_span(fam, count, 2024, Execution::Parallel)
}

fn assert_stable(fam: &SymbolFamily, want: Verdict) -> SpanReport {
    let a = verdict(fam, N);
    let b = verdict(fam, 2 * N);
    assert_eq!(a.verdict, want, "{fam:?}");
    assert_eq!(b.verdict, want, "{fam:?} at 2N");
    assert_eq!(a.span_dim, b.span_dim);
    assert!(a.span_dim <= a.fiber_dim);
    b
}

#[test]
fn dstar_is_uniform_in_dimension_three_and_four() {
    for n in [3, 4] {
        for m in 1..=4 {
            let rep = assert_stable(&SymbolFamily::dstar_tracefree(n, m), Verdict::Uniform);
            assert!(rep.converged);
            assert_stable(&SymbolFamily::dstar_full(n, m), Verdict::Uniform);
        }
    }
}

#[test]
fn surface_case_is_elliptic() {
    for m in 2..=4 {
        let rep = assert_stable(&SymbolFamily::dstar_tracefree(2, m), Verdict::Elliptic);
        assert!(rep.kernel_dims.iter().all(|&d| d == 0));
        assert!(!rep.is_uniform());
    }
    // documented edge case: the raw span is reported with a note
    let rep = verdict(&SymbolFamily::dstar_tracefree(2, 1), N);
    assert_eq!(rep.span_dim, 2);
    assert!(rep.note.is_some());
}

#[test]
fn counterexample_spans_diagonal_only() {
    for n in [2, 3, 4] {
        for r in 1..=3 {
            let rep = assert_stable(&SymbolFamily::counterexample(n, r), Verdict::NotUniform);
            assert_eq!((rep.span_dim, rep.fiber_dim), (r, 2 * r));
        }
    }
}

#[test]
fn forms_are_uniform_below_top_degree() {
    for n in [3, 4] {
        for k in 1..n {
            let rep = forms_contraction_span(n, k, N, 5, Execution::Sequential);
            assert_eq!(rep.verdict, Verdict::Uniform, "n = {n}, k = {k}");
            let again = forms_contraction_span(n, k, 2 * N, 5, Execution::Sequential);
            assert_eq!(again.verdict, Verdict::Uniform);
        }
        let top = forms_contraction_span(n, n, N, 5, Execution::Sequential);
        assert_eq!((top.span_dim, top.fiber_dim), (0, 1));
    }
}

#[test]
fn divergence_symbol_is_uniform() {
    for n in 2..=4 {
        let rep = assert_stable(&SymbolFamily::divergence(n), Verdict::Uniform);
        assert_eq!(rep.span_dim, n);
    }
}

#[test]
fn cumulative_span_is_monotone_and_deterministic() {
    for fam in [SymbolFamily::dstar_tracefree(3, 3), SymbolFamily::dstar_full(4, 2), SymbolFamily::counterexample(3, 2)] {
        let seq = uniform_span(&fam, 64, 9, Execution::Sequential);
        let par = uniform_span(&fam, 64, 9, Execution::Parallel);
        assert_eq!(seq.cumulative, par.cumulative);
        assert_eq!(seq.kernel_dims, par.kernel_dims);
        assert!(seq.cumulative.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*seq.cumulative.last().unwrap(), seq.span_dim);
        // prefix stability of the sampler makes the short run a prefix of the long one
        let long = uniform_span(&fam, 128, 9, Execution::Sequential);
        assert_eq!(long.cumulative[..64], seq.cumulative[..]);
    }
}

fn random_rotation(g: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| g.random_range(-1.0..1.0));
    let qr = a.qr();
    let mut q = qr.q();
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

#[test]
fn dstar_symbol_is_rotation_equivariant() {
    let mut g = rng(77);
    for k in 0..50 {
        let n = 3 + k % 2;
        let m = 1 + k % 3;
        let rot = random_rotation(&mut g, n);
        let xi: Vec<f64> = cosphere_points(n, k + 1, 3)[k].clone();
        let rxi: Vec<f64> = (0..n).map(|i| (0..n).map(|j| rot[(i, j)] * xi[j]).sum()).collect();
        let lhs = symbol_dstar(n, m, &rxi) * rotation_action(n, m, &rot);
        let rhs = rotation_action(n, m - 1, &rot) * symbol_dstar(n, m, &xi);
        assert!(max_abs(&(&lhs - &rhs)) <= 1e-10, "n = {n}, m = {m}");
        // the action is unitary in the orthonormal model
        let rho = rotation_action(n, m, &rot);
        assert!(max_abs(&(rho.adjoint() * &rho - CMat::identity(rho.ncols(), rho.ncols()))) <= 1e-10);
    }
}

#[test]
fn kernel_basis_is_orthonormal() {
    let mut g = rng(8);
    for _ in 0..20 {
        let a = CMat::from_fn(3, 6, |_, _| rc(&mut g));
        let k = kernel_basis(&a, KERNEL_TOL);
        assert_eq!(k.ncols(), 3);
        assert!(max_abs(&(k.adjoint() * &k - CMat::identity(3, 3))) <= 1e-12);
        assert!(max_abs(&(&a * &k)) <= 1e-10 * a.norm());
    }
}

fn random_form(g: &mut ChaCha8Rng, n: usize, r: usize) -> FiberConnForm {
    FiberConnForm::new((0..n).map(|_| rand_skew(g, r)).collect(), true).unwrap()
}

/// ‖f_{m₀}‖² on the circle ξ₀^⊥ ∩ S², read off from discrete Fourier
/// coefficients of f along an independently built orthonormal frame.
fn circle_component_norm(f: &[HPoly], xi0: &[f64], m0: usize) -> f64 {
    let xn: f64 = xi0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let e: Vec<f64> = xi0.iter().map(|x| x / xn).collect();
    let mut frame: Vec<Vec<f64>> = Vec::new();
    for k in 0..3 {
        let mut v = vec![0.0; 3];
        v[k] = 1.0;
        for b in std::iter::once(&e).chain(frame.iter()) {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let nv: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 0.3 && frame.len() < 2 {
            frame.push(v.iter().map(|x| x / nv).collect());
        }
    }
    let pts = 64;
    let mut total = 0.0;
    for p in f {
        let samples: Vec<C64> = (0..pts)
            .map(|j| {
                let t = TAU * j as f64 / pts as f64;
                let v: Vec<f64> = (0..3).map(|i| t.cos() * frame[0][i] + t.sin() * frame[1][i]).collect();
                p.eval(&v)
            })
            .collect();
        let coeff = |k: i64| -> C64 {
            samples
                .iter()
                .enumerate()
                .map(|(j, s)| s * C64::from_polar(1.0, -(k as f64) * TAU * j as f64 / pts as f64))
                .sum::<C64>()
                / pts as f64
        };
        let ks: Vec<i64> = if m0 == 0 { vec![0] } else { vec![m0 as i64, -(m0 as i64)] };
        total += ks.iter().map(|&k| TAU * coeff(k).norm_sqr()).sum::<f64>();
    }
    total
}

#[test]
fn pairing_reproduces_component_norm() {
    let mut g = rng(31);
    let xi0 = [0.3, -1.2, 0.5];
    let xn = (0.09f64 + 1.44 + 0.25).sqrt();
    for (m, m0, r) in [(1, 2, 2), (1, 0, 2), (2, 1, 2), (2, 3, 3), (3, 2, 2)] {
        let a1 = random_form(&mut g, 3, r);
        let u = rand_twisted(&mut g, 3, m, r * r);
        let f = commutator_section(&a1, &u).unwrap();
        let (am0, norm_sq) = subsphere_component(&f, &xi0, m0).unwrap();
        let oracle = circle_component_norm(&f, &xi0, m0);
        assert!((norm_sq - oracle).abs() <= 1e-10 * oracle.max(1e-300), "{norm_sq} vs {oracle}");
        assert!(oracle > 0.0);
        let q = fiber_symbol_pairing(&a1, &u, &am0, &xi0, 10_000).unwrap();
        let want = TAU / xn * oracle;
        assert!((q.value.re - want).abs() <= 1e-6 * want, "{} vs {want}", q.value);
        assert!(q.value.im.abs() <= 1e-6 * want);
        assert!(q.error_estimate <= 1e-6 * want);
    }
}

#[test]
fn pairing_in_dimension_four() {
    let mut g = rng(32);
    let xi0 = [1.0, 0.5, -0.25, 2.0];
    let xn: f64 = xi0.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
    for (m, m0, r) in [(1, 2, 2), (2, 1, 2)] {
        let a1 = random_form(&mut g, 4, r);
        let u = rand_twisted(&mut g, 4, m, r * r);
        let f = commutator_section(&a1, &u).unwrap();
        let (am0, norm_sq) = subsphere_component(&f, &xi0, m0).unwrap();
        assert!(norm_sq > 0.0);
        let q = fiber_symbol_pairing(&a1, &u, &am0, &xi0, 10_000).unwrap();
        let want = TAU / xn * norm_sq;
        assert!((q.value - want).norm() <= 1e-6 * want, "{} vs {want}", q.value);
    }
}

#[test]
fn pairing_vanishes_for_commuting_or_orthogonal_data() {
    let mut g = rng(33);
    let xi0 = [0.0, 0.0, 1.0];
    let r = 2;
    let a1 = random_form(&mut g, 3, r);
    let p = rand_harmonic(&mut g, 3, 2);
    let scalar = TwistedHarmonic::endo(&p, &CMat::identity(r, r)).unwrap();
    let q = fiber_symbol_pairing(&a1, &scalar, &rand_twisted(&mut g, 3, 3, r * r), &xi0, 10_000).unwrap();
    assert!(q.value.norm() <= 1e-12);
    // f has degree 3 on the circle: its modes are odd, and degree-2 data only carries even ones
    let u = rand_twisted(&mut g, 3, 2, r * r);
    let even = rand_twisted(&mut g, 3, 2, r * r);
    let q = fiber_symbol_pairing(&a1, &u, &even, &xi0, 10_000).unwrap();
    assert!(q.value.norm() <= 1e-10, "{}", q.value);
}

#[test]
fn pairing_rejects_surfaces() {
    let mut g = rng(34);
    let a1 = random_form(&mut g, 2, 2);
    let u = rand_twisted(&mut g, 2, 1, 4);
    assert!(fiber_symbol_pairing(&a1, &u, &u, &[1.0, 0.0], 100).is_err());
}
