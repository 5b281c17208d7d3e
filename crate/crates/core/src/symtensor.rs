//! Symmetric tensors over ℝⁿ stored by multiplicity vector Θ.
//!
//! A coefficient c_Θ multiplies the symmetrized basis element 𝒮e*_K with
//! Θ(K) = Θ. The full-tensor component at any K in the class Θ is
//! c_Θ / N_Θ with N_Θ = m! / Π Θᵢ! the number of arrangements.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::polyharm::{harmonic_basis, monomials, HPoly, MultiIndex};

#[derive(Clone, Debug)]
pub struct SymTensor {
    n: usize,
    m: usize,
    coeffs: BTreeMap<MultiIndex, C64>,
}

/// Number of distinct arrangements of a multiset with multiplicities Θ.
pub fn arrangements(theta: &MultiIndex) -> f64 {
    let m = theta.degree() as u32;
    let mf: f64 = (1..=m).map(|i| i as f64).product();
    mf / theta.factorial()
}

impl SymTensor {
    pub fn zero(n: usize, m: usize) -> Self {
        SymTensor { n, m, coeffs: BTreeMap::new() }
    }

    /// 𝒮e*_K for the class Θ.
    pub fn basis_element(theta: MultiIndex) -> Self {
        let mut t = SymTensor::zero(theta.n(), theta.degree());
        t.coeffs.insert(theta, C64::new(1.0, 0.0));
        t
    }

    /// The Euclidean metric g_E.
    pub fn metric(n: usize) -> Self {
        let mut t = SymTensor::zero(n, 2);
        for i in 0..n {
            let mut th = vec![0; n];
            th[i] = 2;
            t.coeffs.insert(MultiIndex(th), C64::new(1.0, 0.0));
        }
        t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn coeff(&self, theta: &MultiIndex) -> C64 {
        self.coeffs.get(theta).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &C64)> {
        self.coeffs.iter()
    }

    pub fn add_term(&mut self, theta: MultiIndex, c: C64) {
        debug_assert_eq!(theta.degree(), self.m);
        *self.coeffs.entry(theta).or_default() += c;
    }

    pub fn from_terms(
        n: usize,
        m: usize,
        terms: impl IntoIterator<Item = (MultiIndex, C64)>,
    ) -> Result<Self> {
        let mut t = SymTensor::zero(n, m);
        for (th, c) in terms {
            if th.n() != n || th.degree() != m {
                return Err(Error::DegreeMismatch(format!(
                    "multiplicity vector {:?} does not fit n = {n}, m = {m}",
                    th.0
                )));
            }
            t.add_term(th, c);
        }
        Ok(t)
    }

    /// Full-tensor component for the class Θ.
    pub fn component(&self, theta: &MultiIndex) -> C64 {
        self.coeff(theta) / arrangements(theta)
    }

    pub fn scale(&self, s: C64) -> Self {
        SymTensor {
            n: self.n,
            m: self.m,
            coeffs: self.coeffs.iter().map(|(a, c)| (a.clone(), c * s)).collect(),
        }
    }

    pub fn add(&self, other: &SymTensor) -> Self {
        assert_eq!((self.n, self.m), (other.n, other.m), "SymTensor::add shape mismatch");
        let mut out = self.clone();
        for (a, c) in &other.coeffs {
            out.add_term(a.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &SymTensor) -> Self {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// ⊗^m-metric inner product Σ_Θ c_Θ conj(d_Θ) / N_Θ.
    pub fn inner(&self, other: &SymTensor) -> C64 {
        assert_eq!((self.n, self.m), (other.n, other.m), "SymTensor::inner shape mismatch");
        self.coeffs
            .iter()
            .map(|(th, c)| c * other.coeff(th).conj() / arrangements(th))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).re.max(0.0).sqrt()
    }

    pub fn to_dense(&self) -> DVector<C64> {
        let monos = monomials(self.n, self.m);
        DVector::from_iterator(monos.len(), monos.iter().map(|a| self.coeff(a)))
    }

    pub fn from_dense(n: usize, m: usize, v: &DVector<C64>) -> Self {
        let monos = monomials(n, m);
        let mut t = SymTensor::zero(n, m);
        for (a, c) in monos.into_iter().zip(v.iter()) {
            if *c != C64::new(0.0, 0.0) {
                t.coeffs.insert(a, *c);
            }
        }
        t
    }
}

/// Dense m-tensor on ℝⁿ, index K stored as base-n digits (first slot most significant).
#[derive(Clone, Debug)]
pub struct FullTensor {
    pub n: usize,
    pub m: usize,
    pub data: Vec<C64>,
}

impl FullTensor {
    pub fn zero(n: usize, m: usize) -> Self {
        FullTensor { n, m, data: vec![C64::new(0.0, 0.0); n.pow(m as u32)] }
    }

    pub fn index_of(&self, k: &[usize]) -> usize {
        k.iter().fold(0, |acc, &d| acc * self.n + d)
    }

    pub fn tuple_of(&self, mut idx: usize) -> Vec<usize> {
        let mut k = vec![0; self.m];
        for slot in (0..self.m).rev() {
            k[slot] = idx % self.n;
            idx /= self.n;
        }
        k
    }

    pub fn theta_of(&self, k: &[usize]) -> MultiIndex {
        let mut th = vec![0u32; self.n];
        for &d in k {
            th[d] += 1;
        }
        MultiIndex(th)
    }

    pub fn inner(&self, other: &FullTensor) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn get(&self, k: &[usize]) -> C64 {
        self.data[self.index_of(k)]
    }

    /// Applies a slot permutation: out[K] = self[K∘σ].
    pub fn permuted(&self, sigma: &[usize]) -> FullTensor {
        let mut out = FullTensor::zero(self.n, self.m);
        for idx in 0..self.data.len() {
            let k = self.tuple_of(idx);
            let ks: Vec<usize> = sigma.iter().map(|&s| k[s]).collect();
            out.data[idx] = self.get(&ks);
        }
        out
    }
}

pub fn to_full(t: &SymTensor) -> FullTensor {
    let mut f = FullTensor::zero(t.n, t.m);
    for idx in 0..f.data.len() {
        let k = f.tuple_of(idx);
        f.data[idx] = t.component(&f.theta_of(&k));
    }
    f
}

/// 𝒮 applied to a full tensor: c_Θ is the sum of the entries in the class Θ.
pub fn symmetrize(f: &FullTensor) -> SymTensor {
    let mut t = SymTensor::zero(f.n, f.m);
    for idx in 0..f.data.len() {
        let k = f.tuple_of(idx);
        t.add_term(f.theta_of(&k), f.data[idx]);
    }
    t
}

/// 𝒯u = Σᵢ u(eᵢ, eᵢ, ·, …); zero for m < 2.
pub fn trace(t: &SymTensor) -> SymTensor {
    let n = t.n;
    if t.m < 2 {
        return SymTensor::zero(n, 0);
    }
    let mut out = SymTensor::zero(n, t.m - 2);
    for th in monomials(n, t.m - 2) {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            let mut up = th.clone();
            up.0[i] += 2;
            acc += t.component(&up);
        }
        if acc != C64::new(0.0, 0.0) {
            out.coeffs.insert(th.clone(), acc * arrangements(&th));
        }
    }
    out
}

/// 𝒥u = 𝒮(g_E ⊗ u)
pub fn jay(t: &SymTensor) -> SymTensor {
    let n = t.n;
    let m2 = t.m + 2;
    let pairs = (m2 * (m2 - 1)) as f64;
    let mut out = SymTensor::zero(n, m2);
    for th in monomials(n, m2) {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            let ti = th.0[i];
            if ti >= 2 {
                let mut down = th.clone();
                down.0[i] -= 2;
                acc += t.component(&down) * (ti * (ti - 1)) as f64;
            }
        }
        if acc != C64::new(0.0, 0.0) {
            out.coeffs.insert(th.clone(), acc / pairs * arrangements(&th));
        }
    }
    out
}

/// Matrix of a linear map between dense coefficient vectors.
fn map_matrix(n: usize, m_in: usize, m_out: usize, f: impl Fn(&SymTensor) -> SymTensor) -> DMatrix<C64> {
    let ins = monomials(n, m_in);
    let outs = monomials(n, m_out).len();
    let mut mat = DMatrix::zeros(outs, ins.len());
    for (j, th) in ins.into_iter().enumerate() {
        let img = f(&SymTensor::basis_element(th));
        mat.set_column(j, &img.to_dense());
    }
    mat
}

/// Matrix of 𝒥 from degree m to m+2 in dense coefficients.
pub fn jay_matrix(n: usize, m: usize) -> DMatrix<C64> {
    map_matrix(n, m, m + 2, jay)
}

/// Orthogonal projection onto the trace-free subspace, T − 𝒥w with w the
/// least-squares solution of 𝒥w ≈ T (normal equations 𝒯𝒥w = 𝒯T).
pub fn tracefree_project(t: &SymTensor) -> SymTensor {
    if t.m < 2 {
        return t.clone();
    }
    let n = t.n;
    let gram = map_matrix(n, t.m - 2, t.m - 2, |x| trace(&jay(x)));
    let rhs = trace(t).to_dense();
    // monomial coordinates are not orthonormal, so the matrix is not Hermitian here
    let w = gram.lu().solve(&rhs).expect("𝒯𝒥 is invertible");
    t.sub(&jay(&SymTensor::from_dense(n, t.m - 2, &w)))
}

/// λ_m: the polynomial v ↦ T(v, …, v).
pub fn to_poly(t: &SymTensor) -> HPoly {
    HPoly::from_terms(t.n, t.m, t.coeffs.iter().map(|(a, c)| (a.clone(), *c)))
        .expect("consistent shape")
}

/// Inverse of `to_poly`.
pub fn from_poly(p: &HPoly) -> SymTensor {
    let mut t = SymTensor::zero(p.n(), p.degree());
    for (a, c) in p.terms() {
        t.add_term(a.clone(), *c);
    }
    t
}

/// ι_ξ T, contraction in the first slot.
pub fn contract(t: &SymTensor, xi: &[C64]) -> Result<SymTensor> {
    if t.m == 0 {
        return Err(Error::DegreeMismatch("cannot contract a degree-0 tensor".into()));
    }
    if xi.len() != t.n {
        return Err(Error::shape(format!("covector length {} for n = {}", xi.len(), t.n)));
    }
    let mut out = SymTensor::zero(t.n, t.m - 1);
    for th in monomials(t.n, t.m - 1) {
        let mut acc = C64::new(0.0, 0.0);
        for (i, x) in xi.iter().enumerate() {
            let mut up = th.clone();
            up.0[i] += 1;
            acc += x * t.component(&up);
        }
        if acc != C64::new(0.0, 0.0) {
            out.coeffs.insert(th.clone(), acc * arrangements(&th));
        }
    }
    Ok(out)
}

/// 𝒮(ξ ⊗ T)
pub fn sym_product(xi: &[C64], t: &SymTensor) -> SymTensor {
    let n = t.n;
    let mut out = SymTensor::zero(n, t.m + 1);
    let m1 = (t.m + 1) as f64;
    for th in monomials(n, t.m + 1) {
        let mut acc = C64::new(0.0, 0.0);
        for (i, x) in xi.iter().enumerate() {
            if th.0[i] > 0 {
                let mut down = th.clone();
                down.0[i] -= 1;
                acc += x * t.component(&down) * th.0[i] as f64;
            }
        }
        if acc != C64::new(0.0, 0.0) {
            out.coeffs.insert(th.clone(), acc / m1 * arrangements(&th));
        }
    }
    out
}

fn orthonormalize(cands: Vec<SymTensor>) -> Vec<SymTensor> {
    let mut basis: Vec<SymTensor> = Vec::new();
    for mut v in cands {
        for _ in 0..2 {
            for b in &basis {
                let p = v.inner(b);
                v = v.sub(&b.scale(p));
            }
        }
        let nv = v.norm();
        if nv > 1e-10 {
            basis.push(v.scale(C64::new(1.0 / nv, 0.0)));
        }
    }
    basis
}

/// ⊗^m-orthonormal basis of the trace-free degree-m tensors, aligned with the
/// harmonic basis of the same degree.
pub fn tracefree_basis(n: usize, m: usize) -> Vec<SymTensor> {
    let hb = harmonic_basis(n, m);
    orthonormalize(hb.members.iter().map(from_poly).collect())
}

/// ⊗^m-orthonormal basis of all symmetric degree-m tensors.
pub fn full_basis(n: usize, m: usize) -> Vec<SymTensor> {
    monomials(n, m)
        .into_iter()
        .map(|th| {
            let w = arrangements(&th).sqrt();
            SymTensor::basis_element(th).scale(C64::new(w, 0.0))
        })
        .collect()
}
