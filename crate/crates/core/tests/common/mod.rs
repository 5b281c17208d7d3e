#![allow(dead_code)]

use std::collections::BTreeMap;

use cktlab::connalg::TwistedHarmonic;
use cktlab::linalg::{CMat, I};
use cktlab::polyharm::{harmonic_basis, monomials, HPoly, MultiIndex};
use cktlab::symtensor::SymTensor;
use num_complex::Complex64 as C64;
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rc(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

pub fn rand_poly(rng: &mut ChaCha8Rng, n: usize, m: usize) -> HPoly {
    HPoly::from_terms(n, m, monomials(n, m).into_iter().map(|a| (a, rc(rng)))).unwrap()
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SymTensor {
    SymTensor::from_terms(n, m, monomials(n, m).into_iter().map(|a| (a, rc(rng)))).unwrap()
}

pub fn rand_harmonic(rng: &mut ChaCha8Rng, n: usize, m: usize) -> HPoly {
    let b = harmonic_basis(n, m);
    let c = nalgebra::DVector::from_fn(b.len(), |_, _| rc(rng));
    b.combine(&c)
}

pub fn rand_twisted(rng: &mut ChaCha8Rng, n: usize, m: usize, r: usize) -> TwistedHarmonic {
    TwistedHarmonic::new((0..r).map(|_| rand_harmonic(rng, n, m)).collect()).unwrap()
}

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize) -> CMat {
    CMat::from_fn(r, r, |_, _| rc(rng))
}

pub fn rand_skew(rng: &mut ChaCha8Rng, r: usize) -> CMat {
    let a = rand_mat(rng, r);
    (&a - a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn rand_skew_tracefree(rng: &mut ChaCha8Rng, r: usize) -> CMat {
    let mut a = rand_skew(rng, r);
    let t = a.trace() / r as f64;
    for i in 0..r {
        a[(i, i)] -= t;
    }
    a
}

pub fn pauli() -> (CMat, CMat, CMat) {
    let o = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    (
        CMat::from_row_slice(2, 2, &[o, one, one, o]),
        CMat::from_row_slice(2, 2, &[o, -I, I, o]),
        CMat::from_row_slice(2, 2, &[one, o, o, -one]),
    )
}

/// Exact rational polynomials used as an oracle.
pub type RPoly = BTreeMap<Vec<u32>, Rational64>;

pub fn rpoly_random(rng: &mut ChaCha8Rng, n: usize, m: usize) -> RPoly {
    monomials(n, m)
        .into_iter()
        .map(|a| (a.0, Rational64::from_integer(rng.random_range(-9..=9))))
        .filter(|(_, c)| *c != Rational64::from_integer(0))
        .collect()
}

pub fn rpoly_to_f(p: &RPoly, n: usize, m: usize) -> HPoly {
    HPoly::from_terms(
        n,
        m,
        p.iter().map(|(a, c)| (MultiIndex(a.clone()), C64::new(*c.numer() as f64 / *c.denom() as f64, 0.0))),
    )
    .unwrap()
}

fn radd(p: &mut RPoly, a: Vec<u32>, c: Rational64) {
    let e = p.entry(a.clone()).or_insert_with(|| Rational64::from_integer(0));
    *e += c;
    if *e == Rational64::from_integer(0) {
        p.remove(&a);
    }
}

/// Σ ∂²ᵢ computed term by term.
pub fn rlaplace(p: &RPoly) -> RPoly {
    let mut out = RPoly::new();
    for (a, c) in p {
        for i in 0..a.len() {
            if a[i] >= 2 {
                let mut b = a.clone();
                b[i] -= 2;
                radd(&mut out, b, *c * Rational64::from_integer((a[i] * (a[i] - 1)) as i64));
            }
        }
    }
    out
}

pub fn rmul_radial(p: &RPoly, n: usize) -> RPoly {
    let mut out = RPoly::new();
    for (a, c) in p {
        for i in 0..n {
            let mut b = a.clone();
            b[i] += 2;
            radd(&mut out, b, *c);
        }
    }
    out
}

/// Exact division by |v|², panicking on a remainder.
pub fn rdiv_radial(p: &RPoly) -> RPoly {
    let mut rest = p.clone();
    let mut q = RPoly::new();
    while let Some((a, c)) = rest.iter().next_back().map(|(a, c)| (a.clone(), *c)) {
        assert!(a[0] >= 2, "not divisible by |v|²");
        let mut b = a.clone();
        b[0] -= 2;
        radd(&mut q, b.clone(), c);
        let n = a.len();
        for i in 0..n {
            let mut t = b.clone();
            t[i] += 2;
            radd(&mut rest, t, -c);
        }
    }
    q
}

/// Harmonic projection by the closed series
/// H(P) = Σⱼ (−1)ʲ |v|^{2j} Δʲ P / (2ʲ j! Πᵢ₌₁ʲ (n + 2m − 2 − 2i)).
pub fn rharmonic_part(p: &RPoly, n: usize, m: usize) -> RPoly {
    let mut out = p.clone();
    let mut lap = p.clone();
    let mut denom = Rational64::from_integer(1);
    for j in 1..=m / 2 {
        lap = rlaplace(&lap);
        denom *= Rational64::from_integer((2 * j) as i64 * (n as i64 + 2 * m as i64 - 2 - 2 * j as i64));
        let mut term = lap.clone();
        for _ in 0..j {
            term = rmul_radial(&term, n);
        }
        let sign = if j % 2 == 1 { -1 } else { 1 };
        for (a, c) in term {
            radd(&mut out, a, c * Rational64::from_integer(sign) / denom);
        }
    }
    out
}

/// Exact decomposition P = Σ |v|^{2k} h_k.
pub fn rdecompose(p: &RPoly, n: usize, m: usize) -> Vec<(usize, RPoly)> {
    let mut parts = Vec::new();
    let mut rest = p.clone();
    let mut k = 0;
    let mut deg = m;
    loop {
        let h = rharmonic_part(&rest, n, deg);
        if !h.is_empty() {
            parts.push((k, h.clone()));
        }
        let mut rem = rest.clone();
        for (a, c) in h {
            radd(&mut rem, a, -c);
        }
        if rem.is_empty() || deg < 2 {
            assert!(rem.is_empty());
            break;
        }
        rest = rdiv_radial(&rem);
        deg -= 2;
        k += 1;
    }
    parts
}

/// Exact rank by fraction-free elimination.
pub fn rrank(mut rows: Vec<Vec<Rational64>>) -> usize {
    let zero = Rational64::from_integer(0);
    let ncols = rows.first().map(|r| r.len()).unwrap_or(0);
    let mut rank = 0;
    for col in 0..ncols {
        let Some(piv) = (rank..rows.len()).find(|&i| rows[i][col] != zero) else { continue };
        rows.swap(rank, piv);
        let pr = rows[rank].clone();
        for row in rows.iter_mut().skip(rank + 1) {
            if row[col] != zero {
                let f = row[col] / pr[col];
                for (x, y) in row.iter_mut().zip(&pr) {
                    *x -= f * *y;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Nullity of the Laplacian from degree m to m − 2, exact.
pub fn laplace_nullity(n: usize, m: usize) -> usize {
    let dom = monomials(n, m);
    if m < 2 {
        return dom.len();
    }
    let cod = monomials(n, m - 2);
    let index: BTreeMap<Vec<u32>, usize> = cod.iter().enumerate().map(|(i, a)| (a.0.clone(), i)).collect();
    let mut rows = vec![vec![Rational64::from_integer(0); dom.len()]; cod.len()];
    for (j, a) in dom.iter().enumerate() {
        let p: RPoly = [(a.0.clone(), Rational64::from_integer(1))].into_iter().collect();
        for (b, c) in rlaplace(&p) {
            rows[index[&b]][j] += c;
        }
    }
    dom.len() - rrank(rows)
}
