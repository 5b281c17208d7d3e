//! Multiplication by connection 1-forms on twisted harmonics, commutator
//! actions on the endomorphism bundle and commutator factorization.

use nalgebra::DVector;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, I};
use crate::polyharm::{self, bombieri_inner, harmonic_antiderivative, harmonic_basis, laplace, HPoly};
use crate::symtensor::{self, SymTensor};

/// An r × r complex matrix.
pub type EndoMat = CMat;

/// Values Γⱼ = Γ(eⱼ) of a 1-form with values in r × r matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberConnForm {
    gammas: Vec<EndoMat>,
    unitary: bool,
}

const SKEW_TOL: f64 = 1e-12;

impl FiberConnForm {
    pub fn new(gammas: Vec<EndoMat>, unitary: bool) -> Result<Self> {
        let Some(first) = gammas.first() else {
            return Err(Error::validation("a connection form needs at least one direction"));
        };
        let r = first.nrows();
        for (j, g) in gammas.iter().enumerate() {
            if g.nrows() != r || g.ncols() != r {
                return Err(Error::shape(format!("component {j} is {}x{}, expected {r}x{r}", g.nrows(), g.ncols())));
            }
            if unitary && linalg::skew_defect(g) > SKEW_TOL * (1.0 + linalg::frob(g)) {
                return Err(Error::validation(format!("component {j} is not skew-Hermitian")));
            }
        }
        Ok(FiberConnForm { gammas, unitary })
    }

    pub fn zero(n: usize, r: usize) -> Self {
        FiberConnForm { gammas: vec![CMat::zeros(r, r); n], unitary: true }
    }

    /// η ⊗ 𝟙 for a scalar 1-form η.
    pub fn scalar(eta: &[C64]) -> Self {
        FiberConnForm {
            gammas: eta.iter().map(|&e| CMat::from_element(1, 1, e)).collect(),
            unitary: eta.iter().all(|e| e.re == 0.0),
        }
    }

    /// M ⊗ eⱼ*
    pub fn single(n: usize, j: usize, m: EndoMat) -> Result<Self> {
        let r = m.nrows();
        let mut g = vec![CMat::zeros(r, r); n];
        g[j] = m;
        let unitary = linalg::skew_defect(&g[j]) <= SKEW_TOL * (1.0 + linalg::frob(&g[j]));
        FiberConnForm::new(g, unitary)
    }

    pub fn n(&self) -> usize {
        self.gammas.len()
    }

    pub fn r(&self) -> usize {
        self.gammas[0].nrows()
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn gammas(&self) -> &[EndoMat] {
        &self.gammas
    }

    /// Γ(v) = Σ vⱼ Γⱼ
    pub fn eval(&self, v: &[f64]) -> EndoMat {
        let r = self.r();
        let mut out = CMat::zeros(r, r);
        for (g, &x) in self.gammas.iter().zip(v) {
            out += g * C64::new(x, 0.0);
        }
        out
    }

    /// The induced form ad(Γ) = Γ ⊗ 𝟙 − 𝟙 ⊗ Γᵀ on End(ℂʳ) with row-major
    /// fiber index (a, b) ↦ a·r + b.
    pub fn ad(&self) -> FiberConnForm {
        let r = self.r();
        let id = CMat::identity(r, r);
        FiberConnForm {
            gammas: self
                .gammas
                .iter()
                .map(|g| linalg::kron(g, &id) - linalg::kron(&id, &g.transpose()))
                .collect(),
            unitary: self.unitary,
        }
    }

    pub fn scale(&self, s: f64) -> FiberConnForm {
        FiberConnForm {
            gammas: self.gammas.iter().map(|g| g * C64::new(s, 0.0)).collect(),
            unitary: self.unitary,
        }
    }
}

/// Σ_k f_k ⊗ e_k with every f_k harmonic of degree m.
#[derive(Clone, Debug, PartialEq)]
pub struct TwistedHarmonic {
    n: usize,
    m: usize,
    columns: Vec<HPoly>,
}

impl TwistedHarmonic {
    /// Validates shapes and harmonicity of every column.
    pub fn new(columns: Vec<HPoly>) -> Result<Self> {
        let t = Self::from_columns(columns)?;
        for (k, c) in t.columns.iter().enumerate() {
            if laplace(c).norm() > 1e-9 * c.norm().max(1.0) {
                return Err(Error::validation(format!("column {k} is not harmonic")));
            }
        }
        Ok(t)
    }

    fn from_columns(columns: Vec<HPoly>) -> Result<Self> {
        let Some(first) = columns.first() else {
            return Err(Error::validation("twisted harmonic needs at least one column"));
        };
        let (n, m) = (first.n(), first.degree());
        if columns.iter().any(|c| c.n() != n || c.degree() != m) {
            return Err(Error::DegreeMismatch("columns have different (n, m)".into()));
        }
        Ok(TwistedHarmonic { n, m, columns })
    }

    pub fn zero(n: usize, m: usize, r: usize) -> Self {
        TwistedHarmonic { n, m, columns: vec![HPoly::zero(n, m); r] }
    }

    /// p ⊗ e_k in a fiber of rank r.
    pub fn single(p: HPoly, k: usize, r: usize) -> Result<Self> {
        let mut cols = vec![HPoly::zero(p.n(), p.degree()); r];
        cols[k] = p;
        Self::new(cols)
    }

    /// p ⊗ W on the End(ℂʳ) fiber.
    pub fn endo(p: &HPoly, w: &EndoMat) -> Result<Self> {
        let cols = w.transpose().iter().map(|&x| p.scale(x)).collect();
        Self::new(cols)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.m
    }

    /// Fiber dimension.
    pub fn r(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[HPoly] {
        &self.columns
    }

    pub fn column(&self, k: usize) -> &HPoly {
        &self.columns[k]
    }

    pub fn eval(&self, v: &[f64]) -> CVec {
        CVec::from_iterator(self.r(), self.columns.iter().map(|c| c.eval(v)))
    }

    pub fn add(&self, other: &TwistedHarmonic) -> Self {
        TwistedHarmonic {
            n: self.n,
            m: self.m,
            columns: self.columns.iter().zip(&other.columns).map(|(a, b)| a.add(b)).collect(),
        }
    }

    pub fn sub(&self, other: &TwistedHarmonic) -> Self {
        TwistedHarmonic {
            n: self.n,
            m: self.m,
            columns: self.columns.iter().zip(&other.columns).map(|(a, b)| a.sub(b)).collect(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        TwistedHarmonic { n: self.n, m: self.m, columns: self.columns.iter().map(|c| c.scale(s)).collect() }
    }

    /// Σ_k ⟨f_k, g_k⟩ over the sphere.
    pub fn sphere_inner(&self, other: &TwistedHarmonic) -> Result<C64> {
        self.check_fiber(other)?;
        self.columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| polyharm::sphere_inner(a, b))
            .sum()
    }

    /// Σ_k Bombieri ⟨f_k, g_k⟩.
    pub fn bombieri_inner(&self, other: &TwistedHarmonic) -> Result<C64> {
        self.check_fiber(other)?;
        self.columns.iter().zip(&other.columns).map(|(a, b)| bombieri_inner(a, b)).sum()
    }

    /// Σ_k ‖f_k‖ in the Bombieri norm, squared and rooted.
    pub fn norm(&self) -> f64 {
        self.columns.iter().map(|c| c.norm().powi(2)).sum::<f64>().sqrt()
    }

    fn check_fiber(&self, other: &TwistedHarmonic) -> Result<()> {
        if self.r() != other.r() || self.n != other.n {
            return Err(Error::shape(format!(
                "fiber/dimension mismatch: (n, r) = ({}, {}) vs ({}, {})",
                self.n,
                self.r(),
                other.n,
                other.r()
            )));
        }
        Ok(())
    }

    /// Coordinates in the sphere-orthonormal harmonic basis, flat index b·r + k.
    pub fn coords(&self) -> CVec {
        let basis = harmonic_basis(self.n, self.m);
        let r = self.r();
        let mut out = CVec::zeros(basis.len() * r);
        for (k, c) in self.columns.iter().enumerate() {
            let x = basis.coords(c);
            for b in 0..basis.len() {
                out[b * r + k] = x[b];
            }
        }
        out
    }

    pub fn from_coords(n: usize, m: usize, r: usize, x: &CVec) -> Self {
        let basis = harmonic_basis(n, m);
        let columns = (0..r)
            .map(|k| {
                let ck = DVector::from_iterator(basis.len(), (0..basis.len()).map(|b| x[b * r + k]));
                basis.combine(&ck)
            })
            .collect();
        TwistedHarmonic { n, m, columns }
    }
}

/// The degree-raising and degree-lowering parts of a multiplication.
#[derive(Clone, Debug)]
pub struct Split {
    pub plus: TwistedHarmonic,
    /// None when the input has degree 0.
    pub minus: Option<TwistedHarmonic>,
}

/// Γf = plus + |v|²·minus with plus, minus harmonic.
pub fn gamma_split(g: &FiberConnForm, f: &TwistedHarmonic) -> Result<Split> {
    let (n, m, r) = (f.n, f.m, f.r());
    if n < 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    if g.n() != n || g.r() != r {
        return Err(Error::shape(format!(
            "form has (n, r) = ({}, {}), section has ({n}, {r})",
            g.n(),
            g.r()
        )));
    }
    let vars: Vec<HPoly> = (0..n).map(|i| HPoly::var(n, i)).collect();
    let mut prod = vec![HPoly::zero(n, m + 1); r];
    for (i, gi) in g.gammas.iter().enumerate() {
        for (k, fk) in f.columns.iter().enumerate() {
            let vf = vars[i].mul(fk);
            for (j, pj) in prod.iter_mut().enumerate() {
                let c = gi[(j, k)];
                if c != C64::new(0.0, 0.0) {
                    *pj = pj.add(&vf.scale(c));
                }
            }
        }
    }
    if m == 0 {
        return Ok(Split { plus: TwistedHarmonic { n, m: 1, columns: prod }, minus: None });
    }
    let denom = (n + 2 * (m - 1)) as f64;
    let mut minus = vec![HPoly::zero(n, m - 1); r];
    for (i, gi) in g.gammas.iter().enumerate() {
        for (k, fk) in f.columns.iter().enumerate() {
            let d = fk.derivative(i);
            for (j, mj) in minus.iter_mut().enumerate() {
                let c = gi[(j, k)];
                if c != C64::new(0.0, 0.0) {
                    *mj = mj.add(&d.scale(c / denom));
                }
            }
        }
    }
    let r2 = HPoly::radial(n, 1);
    let plus = prod.iter().zip(&minus).map(|(p, q)| p.sub(&r2.mul(q))).collect();
    Ok(Split {
        plus: TwistedHarmonic { n, m: m + 1, columns: plus },
        minus: Some(TwistedHarmonic { n, m: m - 1, columns: minus }),
    })
}

/// A linear map in orthonormal bases together with its numerical rank.
#[derive(Clone, Debug)]
pub struct LinearMapReport {
    pub matrix: CMat,
    pub rank: usize,
    pub nullity: usize,
}

/// Matrix of Γ_- from degree m to m − 1 in sphere-orthonormal bases.
pub fn gamma_minus_matrix(g: &FiberConnForm, n: usize, m: usize) -> Result<LinearMapReport> {
    if m == 0 {
        return Err(Error::DegreeMismatch("Γ_- needs m ≥ 1".into()));
    }
    let r = g.r();
    let hi = harmonic_basis(n, m);
    let lo_len = harmonic_basis(n, m - 1).len();
    let mut mat = CMat::zeros(lo_len * r, hi.len() * r);
    for (b, phi) in hi.members.iter().enumerate() {
        for k in 0..r {
            let f = TwistedHarmonic::single(phi.clone(), k, r)?;
            let minus = gamma_split(g, &f)?.minus.expect("m ≥ 1");
            mat.set_column(b * r + k, &minus.coords());
        }
    }
    let rank = linalg::rank(&mat, 1e-10);
    Ok(LinearMapReport { nullity: mat.ncols() - rank, rank, matrix: mat })
}

/// A diagonal skew-Hermitian form G and w of degree m + 1 with Γ_- w = u.
pub fn solve_gamma_preimage(u: &TwistedHarmonic) -> Result<(FiberConnForm, TwistedHarmonic)> {
    let (n, m, r) = (u.n, u.m, u.r());
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    // column k uses the direction e_{k mod n}: Γ_- w_k = i ∂_j w_k / (n + 2m)
    let mut gammas = vec![CMat::zeros(r, r); n];
    let mut cols = Vec::with_capacity(r);
    let scale = C64::new(0.0, -((n + 2 * m) as f64));
    for k in 0..r {
        let j = k % n;
        gammas[j][(k, k)] = I;
        cols.push(harmonic_antiderivative(&u.columns[k], j, scale)?);
    }
    Ok((FiberConnForm::new(gammas, true)?, TwistedHarmonic { n, m: m + 1, columns: cols }))
}

/// Generalized Gell-Mann basis of su(r), scaled to be Frobenius-orthonormal:
/// symmetric pairs, antisymmetric pairs, then diagonals.
pub fn su_basis(r: usize) -> Vec<EndoMat> {
    let mut out = Vec::new();
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    for j in 0..r {
        for k in j + 1..r {
            let mut m = CMat::zeros(r, r);
            m[(j, k)] = I * s;
            m[(k, j)] = I * s;
            out.push(m);
        }
    }
    for j in 0..r {
        for k in j + 1..r {
            let mut m = CMat::zeros(r, r);
            m[(j, k)] = s;
            m[(k, j)] = -s;
            out.push(m);
        }
    }
    for l in 1..r {
        let mut m = CMat::zeros(r, r);
        let norm = ((l * (l + 1)) as f64).sqrt();
        for d in 0..l {
            m[(d, d)] = I / norm;
        }
        m[(l, l)] = I * (-(l as f64) / norm);
        out.push(m);
    }
    out
}

/// (A, G) skew-Hermitian with [A, G] = u, following the inductive
/// construction on the matrix size.
pub fn commutator_factor(u: &EndoMat) -> Result<(EndoMat, EndoMat)> {
    let r = u.nrows();
    if u.ncols() != r {
        return Err(Error::shape("matrix must be square"));
    }
    let tol = 1e-9 * (1.0 + linalg::frob(u));
    if linalg::skew_defect(u) > tol {
        return Err(Error::validation("matrix is not skew-Hermitian"));
    }
    if linalg::trace(u).norm() > tol {
        return Err(Error::validation("matrix is not trace-free"));
    }
    let mut v = (u - u.adjoint()) * C64::new(0.5, 0.0);
    if r > 0 {
        let tr = linalg::trace(&v) / r as f64;
        for d in 0..r {
            v[(d, d)] -= tr;
        }
    }
    factor_rec(&v)
}

/// Unit x with ⟨u x, x⟩ = 0 by bisection along the great circle joining
/// the extremal eigenvectors of −iu.
fn isotropic_vector(u: &EndoMat) -> Result<CVec> {
    let h = u * (-I);
    let (vals, vecs) = linalg::hermitian_eigen(&h)?;
    let r = vals.len();
    let top: CVec = vecs.column(r - 1).into_owned();
    let bot: CVec = vecs.column(0).into_owned();
    let point = |t: f64| &top * C64::new(t.cos(), 0.0) + &bot * C64::new(t.sin(), 0.0);
    let f = |t: f64| {
        let x = point(t);
        x.dotc(&(&h * &x)).re
    };
    let (mut a, mut b) = (0.0f64, std::f64::consts::FRAC_PI_2);
    let fa = f(a);
    if fa.abs() <= 1e-15 * linalg::frob(u) {
        return Ok(top);
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = f(mid);
        if fm == 0.0 {
            a = mid;
            b = mid;
            break;
        }
        if fm > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < 1e-16 {
            break;
        }
    }
    let x = point(0.5 * (a + b));
    let nx = x.norm();
    Ok(x / C64::new(nx, 0.0))
}

fn factor_rec(u: &EndoMat) -> Result<(EndoMat, EndoMat)> {
    let r = u.nrows();
    if r <= 1 || linalg::frob(u) == 0.0 {
        return Ok((CMat::zeros(r, r), CMat::zeros(r, r)));
    }
    let x0 = isotropic_vector(u)?;
    let q = linalg::unitary_with_first_column(&x0);
    let up = q.adjoint() * u * &q;
    let x: CVec = up.view((1, 0), (r - 1, 1)).column(0).into_owned();
    let mut inner = up.view((1, 1), (r - 1, r - 1)).into_owned();
    inner = (&inner - inner.adjoint()) * C64::new(0.5, 0.0);
    let tr = linalg::trace(&inner) / (r - 1) as f64;
    for d in 0..r - 1 {
        inner[(d, d)] -= tr;
    }
    let (a1, g1) = factor_rec(&inner)?;
    let lam = linalg::hermitian_eigen(&(&a1 * (-I)))?
        .0
        .iter()
        .fold(0.0f64, |acc, e| acc.max(e.abs()))
        + 1.0;
    let mut shifted = a1.clone();
    for d in 0..r - 1 {
        shifted[(d, d)] -= I * lam;
    }
    let s = linalg::solve(&shifted, &CMat::from_column_slice(r - 1, 1, x.as_slice()))?;
    let mut a = CMat::zeros(r, r);
    a[(0, 0)] = I * lam;
    a.view_mut((1, 1), (r - 1, r - 1)).copy_from(&a1);
    let mut g = CMat::zeros(r, r);
    g.view_mut((1, 1), (r - 1, r - 1)).copy_from(&g1);
    g.view_mut((1, 0), (r - 1, 1)).copy_from(&s);
    g.view_mut((0, 1), (1, r - 1)).copy_from(&(-s.adjoint()));
    Ok((&q * a * q.adjoint(), &q * g * q.adjoint()))
}

fn fiber_rank(u: &TwistedHarmonic) -> Result<usize> {
    let r = (u.r() as f64).sqrt().round() as usize;
    if r * r != u.r() {
        return Err(Error::shape(format!("fiber dimension {} is not a square", u.r())));
    }
    Ok(r)
}

/// Splitting of the commutator action P_A u = [A(v), u(v)].
pub fn endo_split(a: &FiberConnForm, u: &TwistedHarmonic) -> Result<Split> {
    let r = fiber_rank(u)?;
    if a.r() != r {
        return Err(Error::shape(format!("form has rank {}, sections have End(ℂ^{r})", a.r())));
    }
    gamma_split(&a.ad(), u)
}

/// Closed formula for the lowering part of P_A on f ⊗ W:
/// (n + 2(m−1))⁻¹ Σⱼ ∂ⱼf ⊗ [Aⱼ, W].
pub fn endo_minus_rank_one(a: &FiberConnForm, f: &HPoly, w: &EndoMat) -> Result<Option<TwistedHarmonic>> {
    let (n, m) = (f.n(), f.degree());
    if m == 0 {
        return Ok(None);
    }
    let r = w.nrows();
    let denom = (n + 2 * (m - 1)) as f64;
    let mut cols = vec![HPoly::zero(n, m - 1); r * r];
    for (j, aj) in a.gammas.iter().enumerate() {
        let c = linalg::commutator(aj, w);
        let d = f.derivative(j);
        for p in 0..r {
            for q in 0..r {
                cols[p * r + q] = cols[p * r + q].add(&d.scale(c[(p, q)] / denom));
            }
        }
    }
    Ok(Some(TwistedHarmonic { n, m: m - 1, columns: cols }))
}

/// Σᵢ u_ii
pub fn trace_end(u: &TwistedHarmonic) -> Result<HPoly> {
    let r = fiber_rank(u)?;
    let mut out = HPoly::zero(u.n, u.m);
    for i in 0..r {
        out = out.add(&u.columns[i * r + i]);
    }
    Ok(out)
}

/// Tensor trace 𝒯 applied to every fiber entry.
pub fn trace_sym(u: &TwistedHarmonic) -> Vec<SymTensor> {
    u.columns.iter().map(|c| symtensor::trace(&symtensor::from_poly(c))).collect()
}

/// Pointwise adjoint: (u†)_{ab} = conj(u_{ba}).
pub fn adjoint_end(u: &TwistedHarmonic) -> Result<TwistedHarmonic> {
    let r = fiber_rank(u)?;
    let mut cols = Vec::with_capacity(r * r);
    for a in 0..r {
        for b in 0..r {
            cols.push(u.columns[b * r + a].conj());
        }
    }
    Ok(TwistedHarmonic { n: u.n, m: u.m, columns: cols })
}

/// Polynomial coefficients pᵢ = ⟨u, sᵢ⟩_F over the su(r) basis.
pub fn su_components(u: &TwistedHarmonic) -> Result<Vec<HPoly>> {
    let r = fiber_rank(u)?;
    Ok(su_basis(r)
        .iter()
        .map(|s| {
            let mut p = HPoly::zero(u.n, u.m);
            for a in 0..r {
                for b in 0..r {
                    let c = s[(a, b)].conj();
                    if c != C64::new(0.0, 0.0) {
                        p = p.add(&u.columns[a * r + b].scale(c));
                    }
                }
            }
            p
        })
        .collect())
}

/// Output of `endo_pairing_witness`.
#[derive(Clone, Debug)]
pub struct PairingWitness {
    pub a: FiberConnForm,
    pub w: TwistedHarmonic,
    /// Index of the su(r) basis element used.
    pub index: usize,
    /// ⟨u, P_A^- w⟩ (Bombieri, summed over the fiber).
    pub pairing: C64,
    /// ‖pᵢ‖² in the Bombieri norm.
    pub expected: f64,
}

/// Builds A = A₁ ⊗ e₁* and w = f ⊗ w̃ with ⟨u, P_A^- w⟩ = ‖pᵢ‖² > 0.
pub fn endo_pairing_witness(u: &TwistedHarmonic) -> Result<PairingWitness> {
    let (n, m) = (u.n, u.m);
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    let r = fiber_rank(u)?;
    if trace_end(u)?.norm() > 1e-9 * u.norm().max(1.0) {
        return Err(Error::validation("section is not trace-free"));
    }
    let comps = su_components(u)?;
    let (index, best) = comps
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.norm()))
        .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    if best <= 1e-14 * u.norm().max(f64::MIN_POSITIVE) || best == 0.0 {
        return Err(Error::validation("section is zero; no witness exists"));
    }
    let s = &su_basis(r)[index];
    let (a1, wt) = commutator_factor(s)?;
    // the lowering constant for a degree-(m+1) input is n + 2m
    let f = harmonic_antiderivative(&comps[index], 0, C64::new((n + 2 * m) as f64, 0.0))?;
    let a = FiberConnForm::single(n, 0, a1)?;
    let w = TwistedHarmonic::endo(&f, &wt)?;
    let minus = endo_split(&a, &w)?.minus.expect("degree ≥ 1");
    let pairing = u.bombieri_inner(&minus)?;
    Ok(PairingWitness { a, w, index, pairing, expected: best * best })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyharm::MultiIndex;

    fn r(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn mono(a: &[u32]) -> HPoly {
        HPoly::monomial(MultiIndex(a.to_vec()), r(1.0))
    }

    fn pauli() -> (CMat, CMat, CMat) {
        let sx = CMat::from_row_slice(2, 2, &[r(0.0), r(1.0), r(1.0), r(0.0)]);
        let sy = CMat::from_row_slice(2, 2, &[r(0.0), -I, I, r(0.0)]);
        let sz = CMat::from_row_slice(2, 2, &[r(1.0), r(0.0), r(0.0), r(-1.0)]);
        (sx, sy, sz)
    }

    #[test]
    fn split_example_v1() {
        let g = FiberConnForm::scalar(&[I, r(0.0), r(0.0)]);
        let f = TwistedHarmonic::new(vec![HPoly::var(3, 0)]).unwrap();
        let s = gamma_split(&g, &f).unwrap();
        let minus = s.minus.unwrap();
        assert!((minus.column(0).coeff(&MultiIndex::zero(3)) - I / 3.0).norm() < 1e-15);
        let want = mono(&[2, 0, 0]).sub(&HPoly::radial(3, 1).scale(r(1.0 / 3.0))).scale(I);
        assert!(s.plus.column(0).sub(&want).norm() < 1e-15);
    }

    #[test]
    fn split_example_v2() {
        let g = FiberConnForm::scalar(&[I, r(0.0), r(0.0)]);
        let f = TwistedHarmonic::new(vec![HPoly::var(3, 1)]).unwrap();
        let s = gamma_split(&g, &f).unwrap();
        assert!(s.minus.unwrap().norm() == 0.0);
        assert!(s.plus.column(0).sub(&mono(&[1, 1, 0]).scale(I)).norm() == 0.0);
    }

    #[test]
    fn split_example_pauli_z() {
        let (_, _, sz) = pauli();
        let g = FiberConnForm::single(3, 0, sz * I).unwrap();
        let f = TwistedHarmonic::single(HPoly::var(3, 1), 0, 2).unwrap();
        let s = gamma_split(&g, &f).unwrap();
        assert!(s.minus.unwrap().norm() == 0.0);
        assert!(s.plus.column(0).sub(&mono(&[1, 1, 0]).scale(I)).norm() == 0.0);
        assert!(s.plus.column(1).is_zero());
    }

    #[test]
    fn split_degree_zero_has_no_minus() {
        let g = FiberConnForm::scalar(&[I, I]);
        let f = TwistedHarmonic::new(vec![HPoly::constant(2, r(1.0))]).unwrap();
        let s = gamma_split(&g, &f).unwrap();
        assert!(s.minus.is_none());
        assert_eq!(s.plus.degree(), 1);
    }

    #[test]
    fn gamma_minus_ranks() {
        let g = FiberConnForm::scalar(&[r(1.0), r(0.0), r(0.0)]);
        let rep = gamma_minus_matrix(&g, 3, 2).unwrap();
        assert_eq!((rep.rank, rep.nullity), (3, 2));
        let rep = gamma_minus_matrix(&g, 3, 1).unwrap();
        assert_eq!((rep.rank, rep.nullity), (1, 2));
        let rep = gamma_minus_matrix(&FiberConnForm::zero(3, 1), 3, 2).unwrap();
        assert_eq!(rep.rank, 0);
    }

    #[test]
    fn preimage_examples() {
        let u = TwistedHarmonic::single(HPoly::constant(3, r(1.0)), 0, 2).unwrap();
        let (g, w) = solve_gamma_preimage(&u).unwrap();
        let back = gamma_split(&g, &w).unwrap().minus.unwrap();
        assert!(back.sub(&u).norm() < 1e-9);
        let u = TwistedHarmonic::single(HPoly::var(3, 1), 1, 2).unwrap();
        let (g, w) = solve_gamma_preimage(&u).unwrap();
        assert!(gamma_split(&g, &w).unwrap().minus.unwrap().sub(&u).norm() < 1e-9);
        let u = TwistedHarmonic::zero(3, 2, 2);
        let (_, w) = solve_gamma_preimage(&u).unwrap();
        assert!(w.norm() < 1e-14);
        let u2 = TwistedHarmonic::single(HPoly::var(2, 1), 0, 1).unwrap();
        assert_eq!(solve_gamma_preimage(&u2).unwrap_err(), Error::UnsupportedDimension(2));
    }

    #[test]
    fn factor_small_cases() {
        let (a, g) = commutator_factor(&CMat::zeros(1, 1)).unwrap();
        assert_eq!(linalg::frob(&a) + linalg::frob(&g), 0.0);
        let (_, _, sz) = pauli();
        let u = sz * I;
        let (a, g) = commutator_factor(&u).unwrap();
        assert!(linalg::frob(&(linalg::commutator(&a, &g) - &u)) < 1e-12);
        assert!(linalg::skew_defect(&a) < 1e-12 && linalg::skew_defect(&g) < 1e-12);
    }

    #[test]
    fn factor_rejects_bad_input() {
        let (sx, _, _) = pauli();
        assert!(matches!(commutator_factor(&sx), Err(Error::Validation(_))));
        let id = CMat::identity(2, 2) * I;
        assert!(matches!(commutator_factor(&id), Err(Error::Validation(_))));
    }

    #[test]
    fn su_basis_is_orthonormal_and_skew() {
        for r in 2..5 {
            let b = su_basis(r);
            assert_eq!(b.len(), r * r - 1);
            for (i, x) in b.iter().enumerate() {
                assert!(linalg::skew_defect(x) < 1e-15);
                assert!(linalg::trace(x).norm() < 1e-15);
                for (j, y) in b.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((linalg::frob_inner(x, y) - r_(want)).norm() < 1e-14);
                }
            }
        }
        fn r_(x: f64) -> C64 {
            C64::new(x, 0.0)
        }
    }

    #[test]
    fn endo_split_pauli_example() {
        let (sx, sy, sz) = pauli();
        let a = FiberConnForm::single(3, 0, &sz * I).unwrap();
        let u = TwistedHarmonic::endo(&HPoly::var(3, 0), &sx).unwrap();
        let minus = endo_split(&a, &u).unwrap().minus.unwrap();
        // [iσ_z, σ_x] = −2σ_y, divided by n + 2(m−1) = 3
        let want = TwistedHarmonic::endo(&HPoly::constant(3, r(1.0)), &(sy * r(-2.0 / 3.0))).unwrap();
        assert!(minus.sub(&want).norm() < 1e-15);
        let closed = endo_minus_rank_one(&a, &HPoly::var(3, 0), &sx).unwrap().unwrap();
        assert!(closed.sub(&minus).norm() < 1e-15);
    }

    #[test]
    fn identity_commutes() {
        let (sx, _, _) = pauli();
        let a = FiberConnForm::single(3, 1, &sx * I).unwrap();
        let u = TwistedHarmonic::endo(&HPoly::var(3, 2), &CMat::identity(2, 2)).unwrap();
        let s = endo_split(&a, &u).unwrap();
        assert!(s.plus.norm() == 0.0 && s.minus.unwrap().norm() == 0.0);
    }

    #[test]
    fn trace_and_adjoint_examples() {
        let p = HPoly::var(3, 0);
        let u = TwistedHarmonic::endo(&p, &CMat::identity(3, 3)).unwrap();
        assert_eq!(trace_end(&u).unwrap(), p.scale(r(3.0)));
        let (_, sy, _) = pauli();
        let v = TwistedHarmonic::endo(&HPoly::var(3, 1).scale(I), &sy).unwrap();
        assert_eq!(adjoint_end(&adjoint_end(&v).unwrap()).unwrap(), v);
    }

    #[test]
    fn pairing_witness_example() {
        let s = su_basis(2)[2].clone(); // (i/√2) σ_z
        let u = TwistedHarmonic::endo(&HPoly::var(3, 0), &s).unwrap();
        let w = endo_pairing_witness(&u).unwrap();
        let want = HPoly::var(3, 0).norm().powi(2);
        assert!((w.pairing - r(want)).norm() < 1e-8 * want);
        assert_eq!(w.index, 2);
        let zero = TwistedHarmonic::zero(3, 1, 4);
        assert!(matches!(endo_pairing_witness(&zero), Err(Error::Validation(_))));
    }
}
