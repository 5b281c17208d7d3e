//! Principal symbols on the cosphere: kernel extraction, span accumulation
//! and the fiber pairing over the sub-sphere orthogonal to a covector.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::connalg::{FiberConnForm, TwistedHarmonic};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{self, CMat, I};
use crate::polyharm::{self, gamma_half, harmonic_decompose, HPoly};
use crate::symtensor::{self, SymTensor};

type Evaluator = Arc<dyn Fn(&[f64]) -> CMat + Send + Sync>;

/// A matrix-valued function of unit covectors with fixed shape.
#[derive(Clone)]
pub struct SymbolFamily {
    pub name: String,
    pub n: usize,
    pub domain_dim: usize,
    pub codomain_dim: usize,
    evaluator: Evaluator,
    note: Option<String>,
}

impl std::fmt::Debug for SymbolFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SymbolFamily")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("domain_dim", &self.domain_dim)
            .field("codomain_dim", &self.codomain_dim)
            .finish()
    }
}

impl SymbolFamily {
    pub fn new(
        name: impl Into<String>,
        n: usize,
        domain_dim: usize,
        codomain_dim: usize,
        evaluator: impl Fn(&[f64]) -> CMat + Send + Sync + 'static,
    ) -> Self {
        SymbolFamily {
            name: name.into(),
            n,
            domain_dim,
            codomain_dim,
            evaluator: Arc::new(evaluator),
            note: None,
        }
    }

    pub fn eval(&self, xi: &[f64]) -> CMat {
        (self.evaluator)(xi)
    }

    /// σ_{D*} on the trace-free model of degree m.
    pub fn dstar_tracefree(n: usize, m: usize) -> Self {
        let dom = symtensor::tracefree_basis(n, m);
        let cod = if m > 0 { symtensor::tracefree_basis(n, m - 1) } else { Vec::new() };
        let (dd, cd) = (dom.len(), cod.len());
        let mut fam = SymbolFamily::new(format!("dstar-tracefree(n={n},m={m})"), n, dd, cd, move |xi| {
            contraction_matrix(&dom, &cod, xi, true)
        });
        if n == 2 && m == 1 {
            fam.note = Some(
                "n = 2, m = 1: the raw kernel span fills the fiber, but the lowering operator is \
                 not of uniform divergence type in dimension 2; reported as an edge case"
                    .into(),
            );
        }
        fam
    }

    /// σ_{D*} on all symmetric tensors of degree m.
    pub fn dstar_full(n: usize, m: usize) -> Self {
        let dom = symtensor::full_basis(n, m);
        let cod = if m > 0 { symtensor::full_basis(n, m - 1) } else { Vec::new() };
        let (dd, cd) = (dom.len(), cod.len());
        SymbolFamily::new(format!("dstar-full(n={n},m={m})"), n, dd, cd, move |xi| {
            contraction_matrix(&dom, &cod, xi, false)
        })
    }

    /// σ_δ(ξ)v = i⟨ξ, v⟩
    pub fn divergence(n: usize) -> Self {
        SymbolFamily::new(format!("divergence(n={n})"), n, n, 1, move |xi| {
            CMat::from_fn(1, n, |_, j| I * xi[j])
        })
    }

    /// σ(ξ)(u₁, u₂) = |ξ|²(u₁ − u₂) on ℂʳ ⊕ ℂʳ.
    pub fn counterexample(n: usize, r: usize) -> Self {
        SymbolFamily::new(format!("counterexample(r={r})"), n, 2 * r, r, move |xi| {
            let s: f64 = xi.iter().map(|x| x * x).sum();
            CMat::from_fn(r, 2 * r, |i, j| {
                if j == i {
                    C64::new(s, 0.0)
                } else if j == i + r {
                    C64::new(-s, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        })
    }

    /// −i ι_ξ from k-forms to (k−1)-forms.
    pub fn forms(n: usize, k: usize) -> Self {
        let dom = subsets(n, k);
        let cod = if k > 0 { subsets(n, k - 1) } else { Vec::new() };
        let (dd, cd) = (dom.len(), cod.len());
        SymbolFamily::new(format!("forms(n={n},k={k})"), n, dd, cd, move |xi| {
            let mut m = CMat::zeros(cod.len(), dom.len());
            for (b, set) in dom.iter().enumerate() {
                for (p, &i) in set.iter().enumerate() {
                    let rest: Vec<usize> = set.iter().copied().filter(|&x| x != i).collect();
                    let a = cod.binary_search(&rest).expect("subset present");
                    let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
                    m[(a, b)] += -I * (sign * xi[i]);
                }
            }
            m
        })
    }
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn contraction_matrix(dom: &[SymTensor], cod: &[SymTensor], xi: &[f64], project: bool) -> CMat {
    let mut m = CMat::zeros(cod.len(), dom.len());
    if cod.is_empty() {
        return m;
    }
    let xic: Vec<C64> = xi.iter().map(|&x| C64::new(x, 0.0)).collect();
    for (b, t) in dom.iter().enumerate() {
        let mut img = symtensor::contract(t, &xic).expect("degree ≥ 1").scale(-I);
        if project {
            img = symtensor::tracefree_project(&img);
        }
        for (a, s) in cod.iter().enumerate() {
            m[(a, b)] = img.inner(s);
        }
    }
    m
}

/// −i ι_ξ from trace-free degree-m tensors to trace-free degree m − 1, in
/// ⊗-orthonormal bases. Zero map (no rows) for m = 0.
pub fn symbol_dstar(n: usize, m: usize, xi: &[f64]) -> CMat {
    let dom = symtensor::tracefree_basis(n, m);
    if m == 0 {
        return CMat::zeros(0, dom.len());
    }
    contraction_matrix(&dom, &symtensor::tracefree_basis(n, m - 1), xi, true)
}

/// Action of a rotation R on the trace-free degree-m model,
/// ρ(R)[a, b] = ⟨R·t_b, t_a⟩ with (R·p)(v) = p(Rᵀv).
pub fn rotation_action(n: usize, m: usize, rot: &DMatrix<f64>) -> CMat {
    let basis = symtensor::tracefree_basis(n, m);
    let rt = rot.transpose();
    let mut out = CMat::zeros(basis.len(), basis.len());
    for (b, t) in basis.iter().enumerate() {
        let moved = symtensor::from_poly(&symtensor::to_poly(t).compose_linear(&rt));
        for (a, s) in basis.iter().enumerate() {
            out[(a, b)] = moved.inner(s);
        }
    }
    out
}

/// Orthonormal kernel basis: right singular vectors with σ ≤ tol·σ_max.
pub fn kernel_basis(m: &CMat, tol: f64) -> CMat {
    linalg::kernel_basis(m, tol)
}

/// Deterministic, prefix-stable quasi-uniform points on S^{n−1}. The first
/// N points of a longer run coincide with a shorter run for the same seed.
pub fn cosphere_points(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let dims = if n == 2 { 1 } else if n == 3 { 2 } else { 2 * n.div_ceil(2) };
    let offsets: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
    // generalized golden ratio: root of x^{d+1} = x + 1
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dims as f64 + 1.0));
    }
    let alpha: Vec<f64> = (1..=dims).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect();
    let tau = std::f64::consts::TAU;
    (0..count)
        .map(|i| {
            let u: Vec<f64> = (0..dims)
                .map(|j| (offsets[j] + (i as f64 + 1.0) * alpha[j]).fract())
                .collect();
            match n {
                2 => vec![(tau * u[0]).cos(), (tau * u[0]).sin()],
                3 => {
                    let z = 1.0 - 2.0 * u[0];
                    let s = (1.0 - z * z).max(0.0).sqrt();
                    vec![s * (tau * u[1]).cos(), s * (tau * u[1]).sin(), z]
                }
                _ => {
                    let mut g = Vec::with_capacity(dims);
                    for pair in u.chunks(2) {
                        let rad = (-2.0 * (1.0 - pair[0]).ln()).sqrt();
                        g.push(rad * (tau * pair[1]).cos());
                        g.push(rad * (tau * pair[1]).sin());
                    }
                    g.truncate(n);
                    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                    g.iter().map(|x| x / norm).collect()
                }
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Uniform,
    NotUniform,
    Elliptic,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Uniform => "uniform",
            Verdict::NotUniform => "not-uniform",
            Verdict::Elliptic => "elliptic",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SpanReport {
    pub family: String,
    pub sampled_count: usize,
    pub kernel_dims: Vec<usize>,
    /// Span dimension after each sample.
    pub cumulative: Vec<usize>,
    pub span_dim: usize,
    pub fiber_dim: usize,
    pub verdict: Verdict,
    /// Span unchanged over the last max(16, fiber_dim) samples.
    pub converged: bool,
    pub note: Option<String>,
}

impl SpanReport {
    pub fn is_uniform(&self) -> bool {
        self.verdict == Verdict::Uniform
    }
}

/// Tolerance for kernels relative to σ_max.
pub const KERNEL_TOL: f64 = 1e-10;

/// Accumulates the span of ker σ(ξ) over `count` sampled covectors.
pub fn uniform_span(family: &SymbolFamily, count: usize, seed: u64, exec: Execution) -> SpanReport {
    let pts = cosphere_points(family.n, count, seed);
    let kernels = exec.map(&pts, |xi| kernel_basis(&family.eval(xi), KERNEL_TOL));
    let fiber = family.domain_dim;
    let mut basis = CMat::zeros(fiber, 0);
    let mut cumulative = Vec::with_capacity(count);
    for k in &kernels {
        if k.ncols() > 0 && basis.ncols() < fiber {
            let resid = k - &basis * (basis.adjoint() * k);
            let fresh = linalg::range_basis(&resid, 0.0);
            let svals = linalg::singular_values(&resid);
            let keep = svals.iter().filter(|&&s| s > 1e-8).count();
            if keep > 0 {
                let add = fresh.columns(0, keep.min(fresh.ncols())).into_owned();
                let mut nb = CMat::zeros(fiber, basis.ncols() + add.ncols());
                nb.view_mut((0, 0), (fiber, basis.ncols())).copy_from(&basis);
                nb.view_mut((0, basis.ncols()), (fiber, add.ncols())).copy_from(&add);
                basis = linalg::orthonormalize(&nb, 1e-8);
            }
        }
        cumulative.push(basis.ncols());
    }
    let kernel_dims: Vec<usize> = kernels.iter().map(|k| k.ncols()).collect();
    let span_dim = basis.ncols();
    let window = 16.max(fiber);
    let converged = cumulative.len() > window && cumulative[cumulative.len() - 1 - window] == span_dim;
    let verdict = if kernel_dims.iter().all(|&d| d == 0) {
        Verdict::Elliptic
    } else if span_dim == fiber {
        Verdict::Uniform
    } else {
        Verdict::NotUniform
    };
    SpanReport {
        family: family.name.clone(),
        sampled_count: count,
        kernel_dims,
        cumulative,
        span_dim,
        fiber_dim: fiber,
        verdict,
        converged,
        note: family.note.clone(),
    }
}

/// Span report for the contraction ι_ξ on k-forms.
pub fn forms_contraction_span(n: usize, k: usize, count: usize, seed: u64, exec: Execution) -> SpanReport {
    uniform_span(&SymbolFamily::forms(n, k), count, seed, exec)
}

/// Gauss rule for the weight (1 − t²)^a on [−1, 1] (Golub–Welsch).
fn gauss_gegenbauer(k: usize, twice_a_plus_one: u32) -> (Vec<f64>, Vec<f64>) {
    // λ = a + 1/2
    let lam = twice_a_plus_one as f64 / 2.0;
    let mut jac = DMatrix::<f64>::zeros(k, k);
    for j in 1..k {
        let jf = j as f64;
        let b = jf * (jf + 2.0 * lam - 1.0) / (4.0 * (jf + lam) * (jf + lam - 1.0));
        jac[(j, j - 1)] = b.sqrt();
        jac[(j - 1, j)] = b.sqrt();
    }
    // μ₀ = ∫ (1 − t²)^a dt = √π Γ(a+1) / Γ(a+3/2)
    let mu0 = std::f64::consts::PI.sqrt() * gamma_half(twice_a_plus_one + 1) / gamma_half(twice_a_plus_one + 2);
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..k)
        .map(|i| (eig.eigenvalues[i], mu0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Product quadrature on S^d ⊂ ℝ^{d+1} with about `nq` nodes.
pub fn sphere_rule(d: usize, nq: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    assert!(d >= 1);
    if d == 1 {
        let k = nq.max(3);
        let w = std::f64::consts::TAU / k as f64;
        let pts = (0..k)
            .map(|j| {
                let t = std::f64::consts::TAU * j as f64 / k as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        return (pts, vec![w; k]);
    }
    let per = ((nq as f64).powf(1.0 / d as f64).round() as usize).max(2);
    let inner_n = if d == 2 { 2 * per } else { per.pow((d - 1) as u32) };
    let (ip, iw) = sphere_rule(d - 1, inner_n);
    // measure on S^d: (1 − t²)^{(d−2)/2} dt dS^{d−1}
    let (tn, tw) = gauss_gegenbauer(per, (d - 1) as u32);
    let mut pts = Vec::with_capacity(per * ip.len());
    let mut wts = Vec::with_capacity(per * ip.len());
    for (t, wt) in tn.iter().zip(&tw) {
        let s = (1.0 - t * t).max(0.0).sqrt();
        for (p, w) in ip.iter().zip(&iw) {
            let mut v: Vec<f64> = p.iter().map(|x| x * s).collect();
            v.push(*t);
            pts.push(v);
            wts.push(w * wt);
        }
    }
    (pts, wts)
}

/// Orthonormal basis of ξ^⊥ as an n × (n−1) matrix.
pub fn orthogonal_complement(xi: &[f64]) -> DMatrix<f64> {
    let n = xi.len();
    let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut w: Vec<f64> = xi.iter().map(|x| x / norm).collect();
    // Householder H with H e₁ = ±ξ̂; its remaining columns span ξ^⊥
    let s = if w[0] >= 0.0 { 1.0 } else { -1.0 };
    w[0] += s;
    let ww: f64 = w.iter().map(|x| x * x).sum();
    let h = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - 2.0 * w[i] * w[j] / ww
    });
    h.columns(1, n - 1).into_owned()
}

/// Pointwise commutator f(v) = [A₁(v), u(v)] as polynomial fiber entries
/// (degree m + 1, not harmonic in general).
pub fn commutator_section(a1: &FiberConnForm, u: &TwistedHarmonic) -> Result<Vec<HPoly>> {
    let r = a1.r();
    if u.r() != r * r || u.n() != a1.n() {
        return Err(Error::shape("commutator_section: fiber mismatch"));
    }
    let n = u.n();
    let mut cols = vec![HPoly::zero(n, u.degree() + 1); r * r];
    for (j, aj) in a1.gammas().iter().enumerate() {
        let vj = HPoly::var(n, j);
        for p in 0..r {
            for q in 0..r {
                let mut acc = HPoly::zero(n, u.degree());
                for k in 0..r {
                    acc = acc.add(&u.column(k * r + q).scale(aj[(p, k)]));
                    acc = acc.sub(&u.column(p * r + k).scale(aj[(k, q)]));
                }
                cols[p * r + q] = cols[p * r + q].add(&vj.mul(&acc));
            }
        }
    }
    Ok(cols)
}

/// The degree-m₀ harmonic component of `f` restricted to the sub-sphere
/// ξ₀^⊥ ∩ S^{n−1}, extended to ℝⁿ as a harmonic polynomial constant along ξ₀.
/// Also returns the exact squared L² norm of the component on the sub-sphere.
pub fn subsphere_component(f: &[HPoly], xi0: &[f64], m0: usize) -> Result<(TwistedHarmonic, f64)> {
    let n = xi0.len();
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    let w = orthogonal_complement(xi0);
    let wt = w.transpose();
    let mut cols = Vec::with_capacity(f.len());
    let mut norm_sq = 0.0;
    for p in f {
        let restricted = p.compose_linear(&w);
        let deg = restricted.degree();
        let comp = if deg >= m0 && (deg - m0) % 2 == 0 {
            harmonic_decompose(&restricted)
                .into_iter()
                .find(|(k, _)| *k == (deg - m0) / 2)
                .map(|(_, h)| h)
        } else {
            None
        }
        .unwrap_or_else(|| HPoly::zero(n - 1, m0));
        norm_sq += polyharm::sphere_inner(&comp, &comp)?.re;
        cols.push(comp.compose_linear(&wt));
    }
    Ok((TwistedHarmonic::new(cols)?, norm_sq))
}

#[derive(Clone, Debug)]
pub struct PairingQuadrature {
    pub value: C64,
    /// |value(Nq) − value(Nq/2)|
    pub error_estimate: f64,
    pub nodes: usize,
}

/// (2π/|ξ₀|) ∫ ⟨[A₁(v), u(v)], A_{m₀}(v)⟩ over {v ⊥ ξ₀, |v| = 1}.
pub fn fiber_symbol_pairing(
    a1: &FiberConnForm,
    u: &TwistedHarmonic,
    am0: &TwistedHarmonic,
    xi0: &[f64],
    nq: usize,
) -> Result<PairingQuadrature> {
    let n = xi0.len();
    if n < 3 {
        return Err(Error::UnsupportedDimension(n));
    }
    if a1.n() != n || u.n() != n || am0.n() != n || am0.r() != u.r() {
        return Err(Error::shape("fiber_symbol_pairing: inconsistent shapes"));
    }
    let f = commutator_section(a1, u)?;
    let w = orthogonal_complement(xi0);
    let xnorm = xi0.iter().map(|x| x * x).sum::<f64>().sqrt();
    let integrate = |q: usize| -> C64 {
        let (pts, wts) = sphere_rule(n - 2, q);
        let mut acc = C64::new(0.0, 0.0);
        for (p, wt) in pts.iter().zip(&wts) {
            let v: Vec<f64> = (0..n).map(|i| (0..n - 1).map(|j| w[(i, j)] * p[j]).sum()).collect();
            let val: C64 = f
                .iter()
                .zip(am0.columns())
                .map(|(a, b)| a.eval(&v) * b.eval(&v).conj())
                .sum();
            acc += val * *wt;
        }
        acc * (std::f64::consts::TAU / xnorm)
    };
    let value = integrate(nq);
    let coarse = integrate(nq / 2);
    Ok(PairingQuadrature { value, error_estimate: (value - coarse).norm(), nodes: nq })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dstar_examples() {
        let m = symbol_dstar(3, 1, &[1.0, 0.0, 0.0]);
        assert_eq!(m.shape(), (1, 3));
        assert_eq!(linalg::rank(&m, 1e-10), 1);
        let m = symbol_dstar(2, 2, &[1.0, 0.0]);
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(linalg::rank(&m, 1e-10), 2);
        assert_eq!(symbol_dstar(3, 0, &[1.0, 0.0, 0.0]).nrows(), 0);
    }

    #[test]
    fn kernel_basis_examples() {
        assert_eq!(kernel_basis(&CMat::zeros(2, 3), 1e-10).ncols(), 3);
        assert_eq!(kernel_basis(&CMat::identity(3, 3), 1e-10).ncols(), 0);
        let one = C64::new(1.0, 0.0);
        let m = CMat::from_row_slice(2, 2, &[one, one, one, one]);
        assert_eq!(kernel_basis(&m, 1e-10).ncols(), 1);
    }

    #[test]
    fn span_examples() {
        let ex = Execution::Sequential;
        let rep = uniform_span(&SymbolFamily::dstar_tracefree(3, 2), 64, 1, ex);
        assert_eq!((rep.span_dim, rep.fiber_dim, rep.verdict), (5, 5, Verdict::Uniform));
        let rep = uniform_span(&SymbolFamily::dstar_tracefree(2, 2), 64, 1, ex);
        assert_eq!(rep.verdict, Verdict::Elliptic);
        let rep = uniform_span(&SymbolFamily::divergence(3), 64, 1, ex);
        assert_eq!((rep.span_dim, rep.verdict), (3, Verdict::Uniform));
        let rep = uniform_span(&SymbolFamily::counterexample(3, 2), 64, 1, ex);
        assert_eq!((rep.span_dim, rep.fiber_dim, rep.verdict), (2, 4, Verdict::NotUniform));
        let rep = uniform_span(&SymbolFamily::dstar_tracefree(2, 1), 64, 1, ex);
        assert!(rep.note.is_some());
    }

    #[test]
    fn forms_examples() {
        let ex = Execution::Sequential;
        let rep = forms_contraction_span(3, 1, 64, 3, ex);
        assert_eq!((rep.span_dim, rep.fiber_dim), (3, 3));
        let rep = forms_contraction_span(3, 3, 64, 3, ex);
        assert_eq!((rep.span_dim, rep.fiber_dim), (0, 1));
        assert!(!rep.is_uniform());
        let rep = forms_contraction_span(4, 2, 64, 3, ex);
        assert_eq!((rep.span_dim, rep.fiber_dim), (6, 6));
    }

    #[test]
    fn sampler_is_prefix_stable_and_unit() {
        for n in 2..6 {
            let a = cosphere_points(n, 10, 7);
            let b = cosphere_points(n, 20, 7);
            assert_eq!(a[..], b[..10]);
            for p in &b {
                assert_eq!(p.len(), n);
                assert!((p.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sphere_rule_integrates_moments() {
        for d in 1..4 {
            let (pts, wts) = sphere_rule(d, 400);
            for alpha in [vec![0u32; d + 1], { let mut a = vec![0u32; d + 1]; a[0] = 2; a }, { let mut a = vec![0u32; d + 1]; a[d] = 4; a[0] = 2; a }] {
                let want = polyharm::sphere_monomial_moment(&polyharm::MultiIndex(alpha.clone()));
                let got: f64 = pts
                    .iter()
                    .zip(&wts)
                    .map(|(p, w)| w * p.iter().zip(&alpha).map(|(x, &e)| x.powi(e as i32)).product::<f64>())
                    .sum();
                assert!((got - want).abs() < 1e-12 * want.max(1.0), "d={d} {alpha:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn complement_is_orthonormal() {
        let xi = [0.3, -1.2, 0.5, 2.0];
        let w = orthogonal_complement(&xi);
        let g = w.transpose() * &w;
        assert!((g - DMatrix::identity(3, 3)).norm() < 1e-14);
        for j in 0..3 {
            let d: f64 = (0..4).map(|i| w[(i, j)] * xi[i]).sum();
            assert!(d.abs() < 1e-14);
        }
    }
}
