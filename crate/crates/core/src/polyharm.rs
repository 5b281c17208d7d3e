//! Homogeneous polynomials, the Bombieri pairing, the Laplacian, harmonic
//! decomposition and sphere-orthonormal harmonic bases.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg;

/// Exponent vector of a monomial. Ordered lexicographically.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn new(alpha: Vec<u32>) -> Self {
        MultiIndex(alpha)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    pub fn unit(n: usize, j: usize) -> Self {
        let mut a = vec![0; n];
        a[j] = 1;
        MultiIndex(a)
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&a| a as usize).sum()
    }

    /// α! = Π αᵢ!
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&a| factorial(a)).product()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// self − other, if componentwise non-negative.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        let mut out = Vec::with_capacity(self.0.len());
        for (a, b) in self.0.iter().zip(&other.0) {
            out.push(a.checked_sub(*b)?);
        }
        Some(MultiIndex(out))
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// All multi-indices of length n and degree m in lexicographic order.
pub fn monomials(n: usize, m: usize) -> Vec<MultiIndex> {
    fn rec(n: usize, m: usize, prefix: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if prefix.len() + 1 == n {
            prefix.push(m as u32);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for a in 0..=m {
            prefix.push(a as u32);
            rec(n, m - a, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    rec(n, m, &mut Vec::with_capacity(n), &mut out);
    out
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    u64::try_from(acc).ok()
}

/// (p, h) = (dim of degree-m polynomials, dim of degree-m harmonics) in n variables.
pub fn dims(n: usize, m: usize) -> Result<(u64, u64)> {
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    let overflow = || Error::Overflow(format!("dims({n}, {m})"));
    let n64 = n as u64;
    let m64 = m as u64;
    let top = n64.checked_add(m64).and_then(|x| x.checked_sub(1)).ok_or_else(overflow)?;
    let p = binomial(top, m64).ok_or_else(overflow)?;
    let q = if m < 2 {
        0
    } else {
        binomial(n64 + m64 - 3, m64 - 2).ok_or_else(overflow)?
    };
    Ok((p, p - q))
}

/// Homogeneous polynomial of degree m in n real variables, complex coefficients.
#[derive(Clone, Debug)]
pub struct HPoly {
    n: usize,
    m: usize,
    coeffs: BTreeMap<MultiIndex, C64>,
}

impl PartialEq for HPoly {
    fn eq(&self, other: &Self) -> bool {
        if self.n != other.n || self.m != other.m {
            return false;
        }
        let nz = |p: &HPoly| {
            p.coeffs
                .iter()
                .filter(|(_, c)| **c != C64::new(0.0, 0.0))
                .map(|(a, c)| (a.clone(), *c))
                .collect::<Vec<_>>()
        };
        nz(self) == nz(other)
    }
}

impl HPoly {
    pub fn zero(n: usize, m: usize) -> Self {
        HPoly { n, m, coeffs: BTreeMap::new() }
    }

    pub fn constant(n: usize, c: C64) -> Self {
        Self::monomial(MultiIndex::zero(n), c)
    }

    pub fn monomial(alpha: MultiIndex, c: C64) -> Self {
        let mut p = HPoly::zero(alpha.n(), alpha.degree());
        p.coeffs.insert(alpha, c);
        p
    }

    /// The coordinate function v_j (0-based).
    pub fn var(n: usize, j: usize) -> Self {
        Self::monomial(MultiIndex::unit(n, j), C64::new(1.0, 0.0))
    }

    /// Σ c_j v_j
    pub fn linear(coeffs: &[C64]) -> Self {
        let n = coeffs.len();
        let mut p = HPoly::zero(n, 1);
        for (j, &c) in coeffs.iter().enumerate() {
            p.add_term(MultiIndex::unit(n, j), c);
        }
        p
    }

    /// |v|^{2k}
    pub fn radial(n: usize, k: usize) -> Self {
        let mut r2 = HPoly::zero(n, 2);
        for j in 0..n {
            let mut a = vec![0; n];
            a[j] = 2;
            r2.add_term(MultiIndex(a), C64::new(1.0, 0.0));
        }
        let mut p = HPoly::constant(n, C64::new(1.0, 0.0));
        for _ in 0..k {
            p = p.mul(&r2);
        }
        p
    }

    pub fn from_terms(
        n: usize,
        m: usize,
        terms: impl IntoIterator<Item = (MultiIndex, C64)>,
    ) -> Result<Self> {
        let mut p = HPoly::zero(n, m);
        for (a, c) in terms {
            if a.n() != n || a.degree() != m {
                return Err(Error::DegreeMismatch(format!(
                    "term {:?} does not fit n = {n}, m = {m}",
                    a.0
                )));
            }
            p.add_term(a, c);
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &C64)> {
        self.coeffs.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> C64 {
        self.coeffs.get(alpha).copied().unwrap_or_default()
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: C64) {
        debug_assert_eq!(alpha.degree(), self.m);
        *self.coeffs.entry(alpha).or_default() += c;
    }

    /// Drops coefficients with modulus ≤ tol.
    pub fn prune(mut self, tol: f64) -> Self {
        self.coeffs.retain(|_, c| c.norm() > tol);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|c| *c == C64::new(0.0, 0.0))
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.values().fold(0.0, |a, c| a.max(c.norm()))
    }

    pub fn scale(&self, s: C64) -> Self {
        HPoly {
            n: self.n,
            m: self.m,
            coeffs: self.coeffs.iter().map(|(a, c)| (a.clone(), c * s)).collect(),
        }
    }

    pub fn conj(&self) -> Self {
        HPoly {
            n: self.n,
            m: self.m,
            coeffs: self.coeffs.iter().map(|(a, c)| (a.clone(), c.conj())).collect(),
        }
    }

    fn check_same(&self, other: &HPoly) -> Result<()> {
        if self.n != other.n || self.m != other.m {
            return Err(Error::DegreeMismatch(format!(
                "(n, m) = ({}, {}) vs ({}, {})",
                self.n, self.m, other.n, other.m
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &HPoly) -> Result<Self> {
        self.check_same(other)?;
        let mut out = self.clone();
        for (a, c) in &other.coeffs {
            out.add_term(a.clone(), *c);
        }
        Ok(out)
    }

    pub fn try_sub(&self, other: &HPoly) -> Result<Self> {
        self.try_add(&other.scale(C64::new(-1.0, 0.0)))
    }

    /// Sum; panics on shape mismatch.
    pub fn add(&self, other: &HPoly) -> Self {
        self.try_add(other).expect("HPoly::add shape mismatch")
    }

    /// Difference; panics on shape mismatch.
    pub fn sub(&self, other: &HPoly) -> Self {
        self.try_sub(other).expect("HPoly::sub shape mismatch")
    }

    pub fn mul(&self, other: &HPoly) -> Self {
        assert_eq!(self.n, other.n, "HPoly::mul dimension mismatch");
        let mut out = HPoly::zero(self.n, self.m + other.m);
        for (a, x) in &self.coeffs {
            for (b, y) in &other.coeffs {
                out.add_term(a.add(b), x * y);
            }
        }
        out
    }

    /// ∂/∂v_j
    pub fn derivative(&self, j: usize) -> Self {
        let mut out = HPoly::zero(self.n, self.m.saturating_sub(1));
        if self.m == 0 {
            return out;
        }
        for (a, c) in &self.coeffs {
            let e = a.0[j];
            if e > 0 {
                let mut b = a.clone();
                b.0[j] -= 1;
                out.add_term(b, c * e as f64);
            }
        }
        out
    }

    pub fn eval(&self, v: &[f64]) -> C64 {
        self.coeffs
            .iter()
            .map(|(a, c)| {
                let mono: f64 = a.0.iter().zip(v).map(|(&e, &x)| x.powi(e as i32)).product();
                c * mono
            })
            .sum()
    }

    /// Substitution v = L w, where L is n × n_new. The result lives in n_new variables.
    pub fn compose_linear(&self, l: &DMatrix<f64>) -> Self {
        assert_eq!(l.nrows(), self.n);
        let nn = l.ncols();
        let forms: Vec<HPoly> = (0..self.n)
            .map(|i| HPoly::linear(&l.row(i).iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>()))
            .collect();
        let mut out = HPoly::zero(nn, self.m);
        for (a, c) in &self.coeffs {
            let mut term = HPoly::constant(nn, *c);
            for (i, &e) in a.0.iter().enumerate() {
                for _ in 0..e {
                    term = term.mul(&forms[i]);
                }
            }
            for (b, d) in term.coeffs {
                out.add_term(b, d);
            }
        }
        out
    }

    /// Coefficient vector in the lexicographic monomial order.
    pub fn to_dense(&self) -> DVector<C64> {
        let monos = monomials(self.n, self.m);
        DVector::from_iterator(monos.len(), monos.iter().map(|a| self.coeff(a)))
    }

    pub fn from_dense(n: usize, m: usize, v: &DVector<C64>) -> Self {
        let monos = monomials(n, m);
        assert_eq!(monos.len(), v.len());
        let mut p = HPoly::zero(n, m);
        for (a, c) in monos.into_iter().zip(v.iter()) {
            if *c != C64::new(0.0, 0.0) {
                p.coeffs.insert(a, *c);
            }
        }
        p
    }

    /// Bombieri norm.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|(a, c)| a.factorial() * c.norm_sqr()).sum::<f64>().sqrt()
    }
}

impl fmt::Display for HPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (a, c) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c})")?;
            for (j, &e) in a.0.iter().enumerate() {
                match e {
                    0 => {}
                    1 => write!(f, "·v{}", j + 1)?,
                    _ => write!(f, "·v{}^{e}", j + 1)?,
                }
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// ∂(P) applied to Q, where ∂(Σ c_α v^α) = Σ c_α ∂^α. Degree deg Q − deg P;
/// a constant result is a degree-0 polynomial.
pub fn apply_diff(p: &HPoly, q: &HPoly) -> Result<HPoly> {
    if p.n != q.n {
        return Err(Error::shape(format!("n = {} vs {}", p.n, q.n)));
    }
    if p.m > q.m {
        return Err(Error::DegreeMismatch(format!(
            "cannot apply a degree-{} operator to a degree-{} polynomial",
            p.m, q.m
        )));
    }
    let mut out = HPoly::zero(q.n, q.m - p.m);
    for (a, x) in &p.coeffs {
        for (b, y) in &q.coeffs {
            if let Some(d) = b.checked_sub(a) {
                let w: f64 = b.0.iter().zip(&d.0).map(|(&bi, &di)| factorial(bi) / factorial(di)).product();
                out.add_term(d, x * y * w);
            }
        }
    }
    Ok(out)
}

/// ⟨P, Q⟩ = Σ α! a_α conj(b_α)
pub fn bombieri_inner(p: &HPoly, q: &HPoly) -> Result<C64> {
    p.check_same(q)?;
    Ok(p.coeffs
        .iter()
        .map(|(a, x)| x * q.coeff(a).conj() * a.factorial())
        .sum())
}

pub fn laplace(p: &HPoly) -> HPoly {
    let mut out = HPoly::zero(p.n, p.m.saturating_sub(2));
    if p.m < 2 {
        return out;
    }
    for (a, c) in &p.coeffs {
        for j in 0..p.n {
            let e = a.0[j];
            if e >= 2 {
                let mut b = a.clone();
                b.0[j] -= 2;
                out.add_term(b, c * (e * (e - 1)) as f64);
            }
        }
    }
    out
}

/// Splits P = Σ_k |v|^{2k} h_k with h_k harmonic of degree m − 2k.
/// Components that vanish (relative to ‖P‖) are omitted; k ascending.
pub fn harmonic_decompose(p: &HPoly) -> Vec<(usize, HPoly)> {
    let n = p.n;
    let m = p.m;
    let scale = p.norm();
    let mut rest = p.clone();
    let mut parts = Vec::new();
    for k in (0..=m / 2).rev() {
        let d = (m - 2 * k) as f64;
        let mut q = rest.clone();
        for _ in 0..k {
            q = laplace(&q);
        }
        let ckk: f64 = (1..=k)
            .map(|i| {
                let i = i as f64;
                2.0 * i * (2.0 * i + n as f64 - 2.0 + 2.0 * d)
            })
            .product();
        let h = q.scale(C64::new(1.0 / ckk, 0.0));
        if k > 0 {
            rest = rest.sub(&HPoly::radial(n, k).mul(&h));
        } else {
            rest = HPoly::zero(n, m);
        }
        if h.norm() > 1e-14 * scale {
            parts.push((k, h));
        }
    }
    parts.reverse();
    parts
}

/// Σ_k |v|^{2k} h_k, the inverse of `harmonic_decompose`.
pub fn reconstruct(n: usize, m: usize, parts: &[(usize, HPoly)]) -> HPoly {
    let mut out = HPoly::zero(n, m);
    for (k, h) in parts {
        out = out.add(&HPoly::radial(n, *k).mul(h));
    }
    out
}

/// Γ(k/2) for a positive integer k.
pub(crate) fn gamma_half(k: u32) -> f64 {
    if k % 2 == 0 {
        factorial(k / 2 - 1)
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while 2.0 * x < k as f64 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// ∫_{S^{n−1}} v^α dS
pub fn sphere_monomial_moment(alpha: &MultiIndex) -> f64 {
    if alpha.0.iter().any(|a| a % 2 == 1) {
        return 0.0;
    }
    let n = alpha.n() as u32;
    let num: f64 = alpha.0.iter().map(|&a| gamma_half(a + 1)).product();
    2.0 * num / gamma_half(alpha.degree() as u32 + n)
}

/// Monte-Carlo estimate of a sphere moment: (mean, standard error).
pub fn sphere_moment_monte_carlo(
    alpha: &MultiIndex,
    samples: usize,
    seed: u64,
    exec: Execution,
) -> (f64, f64) {
    const CHUNK: usize = 4096;
    let n = alpha.n();
    let area = sphere_monomial_moment(&MultiIndex::zero(n));
    let chunks = samples.div_ceil(CHUNK);
    let sums = exec.map_range(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let count = CHUNK.min(samples - c * CHUNK);
        let mut s = 0.0;
        let mut s2 = 0.0;
        let mut v = vec![0.0f64; n];
        for _ in 0..count {
            let mut r2 = 0.0f64;
            for x in v.iter_mut() {
                *x = StandardNormal.sample(&mut rng);
                r2 += *x * *x;
            }
            let r = r2.sqrt();
            let f: f64 = v
                .iter()
                .zip(&alpha.0)
                .map(|(x, &e)| (x / r).powi(e as i32))
                .product::<f64>()
                * area;
            s += f;
            s2 += f * f;
        }
        (s, s2)
    });
    let (s, s2) = sums.into_iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nn = samples as f64;
    let mean = s / nn;
    let var = (s2 / nn - mean * mean).max(0.0);
    (mean, (var / nn).sqrt())
}

/// ∫_{S^{n−1}} P conj(Q) dS, exact from moments.
pub fn sphere_inner(p: &HPoly, q: &HPoly) -> Result<C64> {
    if p.n != q.n {
        return Err(Error::shape(format!("n = {} vs {}", p.n, q.n)));
    }
    let mut acc = C64::new(0.0, 0.0);
    for (a, x) in &p.coeffs {
        for (b, y) in &q.coeffs {
            let mo = sphere_monomial_moment(&a.add(b));
            if mo != 0.0 {
                acc += x * y.conj() * mo;
            }
        }
    }
    Ok(acc)
}

/// Moment Gram matrix G[α][β] = ∫ v^{α+β} over the monomials of degree m.
pub fn moment_gram(n: usize, m: usize) -> DMatrix<f64> {
    let monos = monomials(n, m);
    let k = monos.len();
    DMatrix::from_fn(k, k, |i, j| sphere_monomial_moment(&monos[i].add(&monos[j])))
}

/// Sphere-orthonormal basis of degree-m harmonics.
#[derive(Debug)]
pub struct HarmonicBasis {
    pub n: usize,
    pub m: usize,
    pub members: Vec<HPoly>,
    /// Monomial coefficients of the members, one column per member.
    pub coeffs: DMatrix<f64>,
    /// Moment Gram matrix of the degree-m monomials.
    pub gram: DMatrix<f64>,
}

impl HarmonicBasis {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Coordinates ⟨P, φ_b⟩_sphere of a degree-m polynomial. For a harmonic P
    /// these reconstruct P exactly.
    pub fn coords(&self, p: &HPoly) -> DVector<C64> {
        assert_eq!((p.n, p.m), (self.n, self.m), "HarmonicBasis::coords shape");
        let a = p.to_dense();
        let ga = self.gram.map(|x| C64::new(x, 0.0)) * a;
        self.coeffs.transpose().map(|x| C64::new(x, 0.0)) * ga
    }

    /// Σ c_b φ_b
    pub fn combine(&self, c: &DVector<C64>) -> HPoly {
        let v = self.coeffs.map(|x| C64::new(x, 0.0)) * c;
        HPoly::from_dense(self.n, self.m, &v)
    }
}

fn build_harmonic_basis(n: usize, m: usize) -> HarmonicBasis {
    let monos = monomials(n, m);
    let gram = moment_gram(n, m);
    // harmonic parts of monomials with α₁ ≤ 1 are a basis of the harmonics
    let mut cands: Vec<DVector<f64>> = Vec::new();
    for a in monos.iter().filter(|a| a.0[0] <= 1) {
        let p = HPoly::monomial(a.clone(), C64::new(1.0, 0.0));
        let h0 = harmonic_decompose(&p)
            .into_iter()
            .find(|(k, _)| *k == 0)
            .map(|(_, h)| h)
            .unwrap_or_else(|| HPoly::zero(n, m));
        cands.push(h0.to_dense().map(|z| z.re));
    }
    let ip = |x: &DVector<f64>, y: &DVector<f64>| x.dot(&(&gram * y));
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for mut v in cands {
        for _ in 0..2 {
            for b in &basis {
                let p = ip(b, &v);
                v -= b * p;
            }
        }
        let nv = ip(&v, &v).sqrt();
        if nv > 1e-10 {
            basis.push(v / nv);
        }
    }
    let mut coeffs = DMatrix::zeros(monos.len(), basis.len());
    for (j, b) in basis.iter().enumerate() {
        coeffs.set_column(j, b);
    }
    let members = basis
        .iter()
        .map(|b| HPoly::from_dense(n, m, &b.map(|x| C64::new(x, 0.0))))
        .collect();
    HarmonicBasis { n, m, members, coeffs, gram }
}

type BasisCache = Mutex<HashMap<(usize, usize), Arc<HarmonicBasis>>>;

/// Memoized sphere-orthonormal harmonic basis of degree m in n variables.
pub fn harmonic_basis(n: usize, m: usize) -> Arc<HarmonicBasis> {
    static CACHE: OnceLock<BasisCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(b) = cache.lock().unwrap().get(&(n, m)) {
        return b.clone();
    }
    let built = Arc::new(build_harmonic_basis(n, m));
    cache.lock().unwrap().entry((n, m)).or_insert(built).clone()
}

/// Least-squares solve with an exactness check: errors when the residual
/// exceeds `tol · (1 + ‖b‖)`.
pub(crate) fn solve_exact(a: &DMatrix<C64>, b: &DVector<C64>, tol: f64) -> Result<DVector<C64>> {
    if a.ncols() == 0 {
        if b.norm() <= tol {
            return Ok(DVector::zeros(0));
        }
        return Err(Error::NoSolution("empty system with nonzero right-hand side".into()));
    }
    let x = linalg::pinv_solve(a, b, 1e-12);
    let res = (a * &x - b).norm();
    if res > tol * (1.0 + b.norm()) {
        return Err(Error::NoSolution(format!("system is not solvable (residual {res:e})")));
    }
    Ok(x)
}

/// Harmonic f of degree m+1 with ∂_{v_j} f = c·p (minimum-norm solution).
pub fn harmonic_antiderivative(p: &HPoly, j: usize, c: C64) -> Result<HPoly> {
    let n = p.n;
    let m = p.m;
    if j >= n {
        return Err(Error::validation(format!("coordinate index {j} out of range for n = {n}")));
    }
    if laplace(p).norm() > 1e-10 * p.norm().max(1.0) {
        return Err(Error::validation("input polynomial is not harmonic"));
    }
    let lo = harmonic_basis(n, m);
    let hi = harmonic_basis(n, m + 1);
    let mut d = DMatrix::zeros(lo.len(), hi.len());
    for (b, phi) in hi.members.iter().enumerate() {
        d.set_column(b, &lo.coords(&phi.derivative(j)));
    }
    let rhs = lo.coords(&p.scale(c));
    let x = solve_exact(&d, &rhs, 1e-10)?;
    let f = hi.combine(&x);
    let res = f.derivative(j).sub(&p.scale(c)).norm();
    if res > 1e-10 * (1.0 + p.norm() * c.norm()) {
        return Err(Error::NoSolution(format!("antiderivative residual {res:e}")));
    }
    Ok(f)
}
