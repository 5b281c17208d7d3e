//! Raising and lowering operators of the flow derivative on the flat torus
//! Tⁿ = ℝⁿ/2πℤⁿ with a trivial bundle ℂʳ (or End(ℂʳ)), discretized by
//! Fourier modes |k|_∞ ≤ K times sphere-orthonormal harmonics of one degree.
//!
//! The geodesic flow of the flat torus is integrable, not Anosov. The model
//! is a finite testbed for the raising/lowering algebra and for eigenvalue
//! perturbation formulas, not a model of hyperbolic dynamics.
//!
//! Basis functions are (2π)^{-n/2} e^{ik·x} φ_b(v) e_f, orthonormal for the
//! product of the flat volume and the sphere measure. Flat index of
//! (mode, b, f) is (mode·h + b)·fdim + f.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::connalg::{gamma_split, FiberConnForm, TwistedHarmonic};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{self, CMat, CVec, I};
use crate::polyharm::{dims, harmonic_basis, HPoly};
use crate::sparse::SparseMat;
use crate::symtensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BundleKind {
    Vector,
    Endomorphism,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TorusConfig {
    pub n: usize,
    /// Fourier cutoff K.
    pub cutoff: i32,
    pub m: usize,
    pub r: usize,
    pub bundle: BundleKind,
}

impl TorusConfig {
    pub fn new(n: usize, cutoff: i32, m: usize, r: usize, bundle: BundleKind) -> Result<Self> {
        if n < 2 {
            return Err(Error::UnsupportedDimension(n));
        }
        if cutoff < 0 || r == 0 {
            return Err(Error::validation("cutoff must be ≥ 0 and rank ≥ 1"));
        }
        Ok(TorusConfig { n, cutoff, m, r, bundle })
    }

    pub fn vector(n: usize, cutoff: i32, m: usize, r: usize) -> Result<Self> {
        Self::new(n, cutoff, m, r, BundleKind::Vector)
    }

    pub fn fdim(&self) -> usize {
        match self.bundle {
            BundleKind::Vector => self.r,
            BundleKind::Endomorphism => self.r * self.r,
        }
    }

    pub fn num_modes(&self) -> usize {
        ((2 * self.cutoff + 1) as usize).pow(self.n as u32)
    }

    /// All modes in lexicographic order.
    pub fn modes(&self) -> Vec<Vec<i32>> {
        let side = (2 * self.cutoff + 1) as usize;
        (0..self.num_modes())
            .map(|mut idx| {
                let mut k = vec![0; self.n];
                for slot in (0..self.n).rev() {
                    k[slot] = (idx % side) as i32 - self.cutoff;
                    idx /= side;
                }
                k
            })
            .collect()
    }

    pub fn mode_index(&self, k: &[i32]) -> Option<usize> {
        let side = 2 * self.cutoff + 1;
        let mut idx = 0usize;
        for &x in k {
            if x.abs() > self.cutoff {
                return None;
            }
            idx = idx * side as usize + (x + self.cutoff) as usize;
        }
        Some(idx)
    }

    pub fn harmonic_dim(&self, degree: usize) -> usize {
        dims(self.n, degree).expect("small dimensions").1 as usize
    }

    /// Dimension of the degree-`degree` space.
    pub fn space_dim(&self, degree: usize) -> usize {
        self.num_modes() * self.harmonic_dim(degree) * self.fdim()
    }

    /// Dimension of the domain of X_+.
    pub fn dim(&self) -> usize {
        self.space_dim(self.m)
    }

    pub fn with_degree(&self, m: usize) -> Self {
        TorusConfig { m, ..self.clone() }
    }
}

/// Γ(x) = Σ_q Γ̂_q e^{iq·x} with r × r coefficient forms.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierConnection {
    n: usize,
    r: usize,
    coeffs: BTreeMap<Vec<i32>, FiberConnForm>,
}

impl FourierConnection {
    pub fn zero(n: usize, r: usize) -> Self {
        FourierConnection { n, r, coeffs: BTreeMap::new() }
    }

    /// Validates shapes and the reality condition Γ̂_q† = −Γ̂_{−q}.
    pub fn new(n: usize, r: usize, coeffs: BTreeMap<Vec<i32>, FiberConnForm>) -> Result<Self> {
        for (q, f) in &coeffs {
            if q.len() != n || f.n() != n || f.r() != r {
                return Err(Error::shape(format!("coefficient at {q:?} does not fit n = {n}, r = {r}")));
            }
        }
        let c = FourierConnection { n, r, coeffs };
        let d = c.reality_defect();
        if d > 1e-12 {
            return Err(Error::validation(format!(
                "connection is not skew-Hermitian pointwise (defect {d:e})"
            )));
        }
        Ok(c)
    }

    /// Constant form A (must be skew-Hermitian).
    pub fn constant(a: FiberConnForm) -> Result<Self> {
        let (n, r) = (a.n(), a.r());
        Self::new(n, r, BTreeMap::from([(vec![0; n], a)]))
    }

    /// A cos(q·x)
    pub fn cosine(q: &[i32], a: &FiberConnForm) -> Result<Self> {
        let half = a.scale(0.5);
        let neg: Vec<i32> = q.iter().map(|x| -x).collect();
        let mut coeffs = BTreeMap::new();
        if neg == q {
            coeffs.insert(q.to_vec(), a.clone());
        } else {
            coeffs.insert(q.to_vec(), half.clone());
            coeffs.insert(neg, half);
        }
        Self::new(a.n(), a.r(), coeffs)
    }

    /// A sin(q·x)
    pub fn sine(q: &[i32], a: &FiberConnForm) -> Result<Self> {
        let neg: Vec<i32> = q.iter().map(|x| -x).collect();
        if neg == q {
            return Ok(Self::zero(a.n(), a.r()));
        }
        let plus = scale_form(a, C64::new(0.0, -0.5));
        let minus = scale_form(a, C64::new(0.0, 0.5));
        Self::new(a.n(), a.r(), BTreeMap::from([(q.to_vec(), plus), (neg, minus)]))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.values().all(|f| f.gammas().iter().all(|g| linalg::frob(g) == 0.0))
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<i32>, FiberConnForm> {
        &self.coeffs
    }

    pub fn support(&self) -> Vec<Vec<i32>> {
        self.coeffs.keys().cloned().collect()
    }

    pub fn reality_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for (q, f) in &self.coeffs {
            let neg: Vec<i32> = q.iter().map(|x| -x).collect();
            for (j, g) in f.gammas().iter().enumerate() {
                let partner = self
                    .coeffs
                    .get(&neg)
                    .map(|h| h.gammas()[j].clone())
                    .unwrap_or_else(|| CMat::zeros(self.r, self.r));
                worst = worst.max(linalg::frob(&(g.adjoint() + partner)));
            }
        }
        worst
    }

    pub fn add(&self, other: &FourierConnection) -> Result<Self> {
        if (self.n, self.r) != (other.n, other.r) {
            return Err(Error::shape("connections of different shape"));
        }
        let mut coeffs = self.coeffs.clone();
        for (q, f) in &other.coeffs {
            let merged = match coeffs.get(q) {
                Some(g) => {
                    let sum = g.gammas().iter().zip(f.gammas()).map(|(a, b)| a + b).collect();
                    FiberConnForm::new(sum, false)?
                }
                None => f.clone(),
            };
            coeffs.insert(q.clone(), merged);
        }
        Ok(FourierConnection { n: self.n, r: self.r, coeffs })
    }

    pub fn scale(&self, s: f64) -> Self {
        FourierConnection {
            n: self.n,
            r: self.r,
            coeffs: self.coeffs.iter().map(|(q, f)| (q.clone(), f.scale(s))).collect(),
        }
    }

    /// Γ_x(eⱼ) for every j.
    pub fn eval(&self, x: &[f64]) -> Vec<CMat> {
        let mut out = vec![CMat::zeros(self.r, self.r); self.n];
        for (q, f) in &self.coeffs {
            let phase: f64 = q.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
            let e = C64::from_polar(1.0, phase);
            for (o, g) in out.iter_mut().zip(f.gammas()) {
                *o += g * e;
            }
        }
        out
    }

    /// Γ_x(v)
    pub fn eval_dir(&self, x: &[f64], v: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.r, self.r);
        for (g, &vj) in self.eval(x).iter().zip(v) {
            out += g * C64::new(vj, 0.0);
        }
        out
    }

    /// The induced connection on End(ℂʳ).
    pub fn lift_endomorphism(&self) -> Self {
        FourierConnection {
            n: self.n,
            r: self.r * self.r,
            coeffs: self.coeffs.iter().map(|(q, f)| (q.clone(), f.ad())).collect(),
        }
    }
}

fn scale_form(a: &FiberConnForm, s: C64) -> FiberConnForm {
    FiberConnForm::new(a.gammas().iter().map(|g| g * s).collect(), false).expect("same shape")
}

type TableCache = Mutex<HashMap<(usize, usize, u8), Arc<Vec<DMatrix<f64>>>>>;

fn table_cache() -> &'static TableCache {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(n: usize, m: usize, kind: u8, build: impl FnOnce() -> Vec<DMatrix<f64>>) -> Arc<Vec<DMatrix<f64>>> {
    if let Some(t) = table_cache().lock().unwrap().get(&(n, m, kind)) {
        return t.clone();
    }
    let t = Arc::new(build());
    table_cache().lock().unwrap().entry((n, m, kind)).or_insert(t).clone()
}

fn unit_form(n: usize, j: usize) -> FiberConnForm {
    let mut eta = vec![C64::new(0.0, 0.0); n];
    eta[j] = C64::new(1.0, 0.0);
    FiberConnForm::scalar(&eta)
}

/// Coordinates of the raising part of multiplication by vⱼ, degree m → m+1.
pub fn plus_table(n: usize, m: usize) -> Arc<Vec<DMatrix<f64>>> {
    cached(n, m, 0, || {
        let lo = harmonic_basis(n, m);
        let hi = harmonic_basis(n, m + 1);
        (0..n)
            .map(|j| {
                let g = unit_form(n, j);
                let mut t = DMatrix::zeros(hi.len(), lo.len());
                for (b, phi) in lo.members.iter().enumerate() {
                    let f = TwistedHarmonic::new(vec![phi.clone()]).expect("basis is harmonic");
                    let plus = gamma_split(&g, &f).expect("shapes agree").plus;
                    t.set_column(b, &hi.coords(plus.column(0)).map(|z| z.re));
                }
                t
            })
            .collect()
    })
}

/// Coordinates of the lowering part of multiplication by vⱼ, degree m → m−1.
pub fn minus_table(n: usize, m: usize) -> Arc<Vec<DMatrix<f64>>> {
    assert!(m >= 1);
    cached(n, m, 1, || {
        let hi = harmonic_basis(n, m);
        let lo = harmonic_basis(n, m - 1);
        (0..n)
            .map(|j| {
                let g = unit_form(n, j);
                let mut t = DMatrix::zeros(lo.len(), hi.len());
                for (a, psi) in hi.members.iter().enumerate() {
                    let f = TwistedHarmonic::new(vec![psi.clone()]).expect("basis is harmonic");
                    let minus = gamma_split(&g, &f).expect("shapes agree").minus.expect("m ≥ 1");
                    t.set_column(a, &lo.coords(minus.column(0)).map(|z| z.re));
                }
                t
            })
            .collect()
    })
}

/// Tensor route for the raising part: coordinates of λ 𝒫 𝒮(eⱼ ⊗ t_b).
fn d_plus_table(n: usize, m: usize) -> Vec<DMatrix<f64>> {
    let lo = harmonic_basis(n, m);
    let hi = harmonic_basis(n, m + 1);
    (0..n)
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            let mut t = DMatrix::zeros(hi.len(), lo.len());
            for (b, phi) in lo.members.iter().enumerate() {
                let tb = symtensor::from_poly(phi);
                let img = symtensor::tracefree_project(&symtensor::sym_product(&e, &tb));
                t.set_column(b, &hi.coords(&symtensor::to_poly(&img)).map(|z| z.re));
            }
            t
        })
        .collect()
}

/// Tensor route for the lowering part: coordinates of λ ι_{eⱼ} t_a, degree m → m−1.
fn d_contract_table(n: usize, m: usize) -> Vec<DMatrix<f64>> {
    let hi = harmonic_basis(n, m);
    let lo = harmonic_basis(n, m - 1);
    (0..n)
        .map(|j| {
            let mut e = vec![C64::new(0.0, 0.0); n];
            e[j] = C64::new(1.0, 0.0);
            let mut t = DMatrix::zeros(lo.len(), hi.len());
            for (a, psi) in hi.members.iter().enumerate() {
                let c = symtensor::contract(&symtensor::from_poly(psi), &e).expect("m ≥ 1");
                t.set_column(a, &lo.coords(&symtensor::to_poly(&c)).map(|z| z.re));
            }
            t
        })
        .collect()
}

/// One coupling: output mode = input mode + shift, fiber matrices per direction.
struct Coupling {
    shift: Vec<i32>,
    fiber: Vec<CMat>,
}

struct BlockSpec<'a> {
    din: usize,
    dout: usize,
    tables: &'a [DMatrix<f64>],
    /// Scalar multiplying Tⱼ ⊗ 𝟙 at mode k, as a function of kⱼ.
    free: Option<&'a (dyn Fn(i32) -> C64 + Sync)>,
    couplings: &'a [Coupling],
}

fn assemble_generic(cfg: &TorusConfig, spec: &BlockSpec<'_>, exec: Execution) -> (SparseMat, usize) {
    let modes = cfg.modes();
    let f = cfg.fdim();
    let hin = cfg.harmonic_dim(spec.din);
    let hout = cfg.harmonic_dim(spec.dout);
    let per_mode = exec.map_range(modes.len(), |mi| {
        let k = &modes[mi];
        let mut trips = Vec::new();
        let mut dropped = 0usize;
        if let Some(free) = spec.free {
            let mut block = DMatrix::<C64>::zeros(hout, hin);
            for (j, t) in spec.tables.iter().enumerate() {
                let s = free(k[j]);
                if s != C64::new(0.0, 0.0) {
                    block += t.map(|x| C64::new(x, 0.0) * s);
                }
            }
            for a in 0..hout {
                for b in 0..hin {
                    let v = block[(a, b)];
                    if v != C64::new(0.0, 0.0) {
                        for fi in 0..f {
                            trips.push(((mi * hout + a) * f + fi, (mi * hin + b) * f + fi, v));
                        }
                    }
                }
            }
        }
        for c in spec.couplings {
            let target: Vec<i32> = k.iter().zip(&c.shift).map(|(a, b)| a + b).collect();
            let Some(mo) = cfg.mode_index(&target) else {
                dropped += 1;
                continue;
            };
            for (j, t) in spec.tables.iter().enumerate() {
                let g = &c.fiber[j];
                if linalg::frob(g) == 0.0 {
                    continue;
                }
                for a in 0..hout {
                    for b in 0..hin {
                        let tv = t[(a, b)];
                        if tv == 0.0 {
                            continue;
                        }
                        for fo in 0..f {
                            for fi in 0..f {
                                let gv = g[(fo, fi)];
                                if gv != C64::new(0.0, 0.0) {
                                    trips.push(((mo * hout + a) * f + fo, (mi * hin + b) * f + fi, gv * tv));
                                }
                            }
                        }
                    }
                }
            }
        }
        (trips, dropped)
    });
    let mut all = Vec::new();
    let mut dropped = 0;
    for (t, d) in per_mode {
        all.extend(t);
        dropped += d;
    }
    let rows = modes.len() * hout * f;
    let cols = modes.len() * hin * f;
    (SparseMat::from_triplets(rows, cols, all), dropped)
}

fn fiber_connection(cfg: &TorusConfig, conn: &FourierConnection) -> Result<FourierConnection> {
    if conn.n() != cfg.n || conn.r() != cfg.r {
        return Err(Error::shape(format!(
            "connection has (n, r) = ({}, {}), config has ({}, {})",
            conn.n(),
            conn.r(),
            cfg.n,
            cfg.r
        )));
    }
    Ok(match cfg.bundle {
        BundleKind::Vector => conn.clone(),
        BundleKind::Endomorphism => conn.lift_endomorphism(),
    })
}

fn direct_couplings(conn: &FourierConnection) -> Vec<Coupling> {
    conn.coeffs()
        .iter()
        .map(|(q, f)| Coupling { shift: q.clone(), fiber: f.gammas().to_vec() })
        .collect()
}

/// Assembled raising and lowering operators.
#[derive(Clone, Debug)]
pub struct TorusAssembly {
    pub config: TorusConfig,
    /// X_+ from degree m to m + 1.
    pub xplus: SparseMat,
    /// X_- from degree m + 1 to m, defined as −X_+†.
    pub xminus: SparseMat,
    /// X_- assembled directly from the lowering parts.
    pub xminus_direct: SparseMat,
    /// Mode couplings dropped by the guard band (raising operator).
    pub dropped: usize,
    /// Connected mode sets of the coupling graph.
    pub components: Vec<Vec<usize>>,
}

impl TorusAssembly {
    /// ‖X_-(direct) + X_+†‖_max
    pub fn adjointness_defect(&self) -> f64 {
        self.xminus_direct.add(&self.xplus.adjoint()).max_abs()
    }

    pub fn mode_of(&self, flat: usize, degree: usize) -> usize {
        flat / (self.config.harmonic_dim(degree) * self.config.fdim())
    }
}

fn components(cfg: &TorusConfig, conn: &FourierConnection) -> Vec<Vec<usize>> {
    let nm = cfg.num_modes();
    let mut parent: Vec<usize> = (0..nm).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let modes = cfg.modes();
    for (mi, k) in modes.iter().enumerate() {
        for q in conn.support() {
            let t: Vec<i32> = k.iter().zip(&q).map(|(a, b)| a + b).collect();
            if let Some(mo) = cfg.mode_index(&t) {
                let (a, b) = (find(&mut parent, mi), find(&mut parent, mo));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for mi in 0..nm {
        let root = find(&mut parent, mi);
        groups.entry(root).or_default().push(mi);
    }
    groups.into_values().collect()
}

/// Assembles X_± with (`include_free`) or without the free part i k·v.
pub fn assemble_parts(
    cfg: &TorusConfig,
    conn: &FourierConnection,
    include_free: bool,
    exec: Execution,
) -> Result<TorusAssembly> {
    let lifted = fiber_connection(cfg, conn)?;
    let (n, m) = (cfg.n, cfg.m);
    let couplings = direct_couplings(&lifted);
    let free = |kj: i32| I * kj as f64;
    let free_ref: Option<&(dyn Fn(i32) -> C64 + Sync)> = if include_free { Some(&free) } else { None };
    let plus = plus_table(n, m);
    let (xplus, dropped) = assemble_generic(
        cfg,
        &BlockSpec { din: m, dout: m + 1, tables: &plus, free: free_ref, couplings: &couplings },
        exec,
    );
    let minus = minus_table(n, m + 1);
    let (xminus_direct, _) = assemble_generic(
        cfg,
        &BlockSpec { din: m + 1, dout: m, tables: &minus, free: free_ref, couplings: &couplings },
        exec,
    );
    let xminus = xplus.adjoint().scale(C64::new(-1.0, 0.0));
    Ok(TorusAssembly {
        config: cfg.clone(),
        xplus,
        xminus,
        xminus_direct,
        dropped,
        components: components(cfg, &lifted),
    })
}

/// X_± of the flow derivative twisted by `conn`.
pub fn assemble(cfg: &TorusConfig, conn: &FourierConnection, exec: Execution) -> Result<TorusAssembly> {
    assemble_parts(cfg, conn, true, exec)
}

/// The same operators built through the symmetric-tensor route: 𝒫 D on
/// trace-free tensors for X_+, and −(m+1)/(n+2m) · D* for X_- on degree m+1.
pub fn assemble_via_d(cfg: &TorusConfig, conn: &FourierConnection, exec: Execution) -> Result<TorusAssembly> {
    let lifted = fiber_connection(cfg, conn)?;
    let (n, m) = (cfg.n, cfg.m);
    let dplus = d_plus_table(n, m);
    let free = |kj: i32| I * kj as f64;
    let couplings = direct_couplings(&lifted);
    let (xplus, dropped) = assemble_generic(
        cfg,
        &BlockSpec { din: m, dout: m + 1, tables: &dplus, free: Some(&free), couplings: &couplings },
        exec,
    );
    // D* on mode k: −i kⱼ ι_{eⱼ}; connection part Γ̂_q† ι_{eⱼ} from mode k+q to k
    let factor = -((m + 1) as f64) / ((n + 2 * m) as f64);
    let dcon = d_contract_table(n, m + 1);
    let free_minus = move |kj: i32| -I * kj as f64 * factor;
    let adj_couplings: Vec<Coupling> = lifted
        .coeffs()
        .iter()
        .map(|(q, f)| Coupling {
            shift: q.iter().map(|x| -x).collect(),
            fiber: f.gammas().iter().map(|g| g.adjoint() * C64::new(factor, 0.0)).collect(),
        })
        .collect();
    let (xminus_direct, _) = assemble_generic(
        cfg,
        &BlockSpec { din: m + 1, dout: m, tables: &dcon, free: Some(&free_minus), couplings: &adj_couplings },
        exec,
    );
    let xminus = xplus.adjoint().scale(C64::new(-1.0, 0.0));
    Ok(TorusAssembly {
        config: cfg.clone(),
        xplus,
        xminus,
        xminus_direct,
        dropped,
        components: components(cfg, &lifted),
    })
}

/// Orthonormal basis of ker X_+ and the spectrum of Δ_+ = X_+†X_+.
#[derive(Clone, Debug)]
pub struct CktKernel {
    /// Columns: orthonormal kernel vectors.
    pub basis: CMat,
    /// Kernel mass per mode (mode, Σ|coeff|²), modes with mass > 1e-20.
    pub mode_weights: Vec<(Vec<i32>, f64)>,
    /// All eigenvalues of Δ_+ in ascending order.
    pub spectrum: Vec<f64>,
    /// Eigenvalues at or below this are treated as zero.
    pub tolerance: f64,
}

impl CktKernel {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn smallest_nonzero(&self) -> Option<f64> {
        self.spectrum.iter().copied().find(|&e| e > self.tolerance)
    }
}

fn component_indices(cfg: &TorusConfig, comp: &[usize], degree: usize) -> Vec<usize> {
    let blk = cfg.harmonic_dim(degree) * cfg.fdim();
    comp.iter().flat_map(|&mi| mi * blk..(mi + 1) * blk).collect()
}

/// Kernel of X_+ computed block by block over coupled mode sets.
pub fn ckt_kernel(asm: &TorusAssembly, exec: Execution) -> Result<CktKernel> {
    let cfg = &asm.config;
    let scale = 1.0 + asm.xplus.max_abs();
    let tol = 1e-10 * scale * scale;
    let blocks = exec.try_map(&asm.components, |comp| -> Result<(Vec<usize>, Vec<f64>, CMat)> {
        let cols = component_indices(cfg, comp, cfg.m);
        let rows = component_indices(cfg, comp, cfg.m + 1);
        let b = asm.xplus.submatrix(&rows, &cols);
        let delta = b.adjoint() * &b;
        let (vals, vecs) = linalg::hermitian_eigen(&delta)?;
        Ok((cols, vals, vecs))
    })?;
    let dim = cfg.dim();
    let mut spectrum = Vec::with_capacity(dim);
    let mut cols_out: Vec<CVec> = Vec::new();
    for (cols, vals, vecs) in &blocks {
        for (i, &e) in vals.iter().enumerate() {
            spectrum.push(e);
            if e <= tol {
                let mut v = CVec::zeros(dim);
                for (p, &c) in cols.iter().enumerate() {
                    v[c] = vecs[(p, i)];
                }
                cols_out.push(v);
            }
        }
    }
    spectrum.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut basis = CMat::zeros(dim, cols_out.len());
    for (j, v) in cols_out.iter().enumerate() {
        basis.set_column(j, v);
    }
    let modes = cfg.modes();
    let blk = cfg.harmonic_dim(cfg.m) * cfg.fdim();
    let mode_weights = modes
        .iter()
        .enumerate()
        .filter_map(|(mi, k)| {
            let w: f64 = (0..basis.ncols())
                .map(|j| (mi * blk..(mi + 1) * blk).map(|i| basis[(i, j)].norm_sqr()).sum::<f64>())
                .sum();
            (w > 1e-20).then(|| (k.clone(), w))
        })
        .collect();
    Ok(CktKernel { basis, mode_weights, spectrum, tolerance: tol })
}

#[derive(Clone, Debug)]
pub struct SecondVariation {
    /// ‖π_{ker X_-} A_+ uᵢ‖² per kernel vector.
    pub per_vector: Vec<f64>,
    pub total: f64,
}

/// Σᵢ ‖π_{ker X_-} A_+ uᵢ‖², reported without any overall constant.
pub fn second_variation_predict(
    asm0: &TorusAssembly,
    a: &FourierConnection,
    kernel: &CMat,
    exec: Execution,
) -> Result<SecondVariation> {
    let cfg = &asm0.config;
    let pert = assemble_parts(cfg, a, false, exec)?;
    let images: Vec<CVec> = (0..kernel.ncols())
        .map(|i| pert.xplus.mul_vec(&kernel.column(i).into_owned()))
        .collect();
    // ker X_- on degree m+1 is block diagonal over the coupled mode sets
    let per_comp = exec.map(&asm0.components, |comp| {
        let rows = component_indices(cfg, comp, cfg.m + 1);
        let cols = component_indices(cfg, comp, cfg.m);
        let xm = asm0.xminus.submatrix(&cols, &rows);
        let kb = linalg::kernel_basis(&xm, 1e-10);
        images
            .iter()
            .map(|img| {
                let local = CVec::from_iterator(rows.len(), rows.iter().map(|&i| img[i]));
                (kb.adjoint() * local).norm_squared()
            })
            .collect::<Vec<f64>>()
    });
    let per_vector: Vec<f64> = (0..images.len()).map(|i| per_comp.iter().map(|c| c[i]).sum()).collect();
    let total = per_vector.iter().sum();
    Ok(SecondVariation { per_vector, total })
}

#[derive(Clone, Debug)]
pub struct ScanRow {
    pub s: f64,
    /// Sum of the eigenvalues of Δ_+ inside the window.
    pub lambda: f64,
    pub kernel_dim: usize,
}

#[derive(Clone, Debug)]
pub struct LambdaScan {
    pub rows: Vec<ScanRow>,
    pub window_radius: f64,
    /// Least-squares fit λ ≈ c₀ + c₁ s + c₂ s².
    pub fit: [f64; 3],
    pub predicted: SecondVariation,
}

impl LambdaScan {
    pub fn lambda_dot(&self) -> f64 {
        self.fit[1]
    }

    pub fn lambda_ddot(&self) -> f64 {
        2.0 * self.fit[2]
    }

    /// λ̈_fit / (2 · predicted total).
    pub fn ratio(&self) -> f64 {
        self.lambda_ddot() / (2.0 * self.predicted.total)
    }

    /// 0.5 or 1.0 when the ratio is within 5% of one of them.
    pub fn resolved_factor(&self) -> Option<f64> {
        let r = self.ratio();
        [0.5, 1.0].into_iter().find(|c| (r - c).abs() <= 0.05 * c)
    }
}

/// Least-squares quadratic fit.
pub fn quadratic_fit(s: &[f64], y: &[f64]) -> [f64; 3] {
    let scale = s.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    let v = DMatrix::from_fn(s.len(), 3, |i, j| (s[i] / scale).powi(j as i32));
    let rhs = DVector::from_column_slice(y);
    let c = v.svd(true, true).solve(&rhs, 1e-14).expect("SVD solve");
    [c[0], c[1] / scale, c[2] / (scale * scale)]
}

/// Eigenvalue scan of Δ_+ along Γ₀ + sA.
pub fn lambda_scan(
    cfg: &TorusConfig,
    conn0: &FourierConnection,
    a: &FourierConnection,
    s_grid: &[f64],
    window_radius: Option<f64>,
    exec: Execution,
) -> Result<LambdaScan> {
    let asm0 = assemble(cfg, conn0, exec)?;
    let k0 = ckt_kernel(&asm0, Execution::Sequential)?;
    let radius = match window_radius {
        Some(r) => {
            if let Some(bad) = k0.spectrum.iter().find(|&&e| e > k0.tolerance && e < r) {
                return Err(Error::validation(format!(
                    "window radius {r} contains the nonzero eigenvalue {bad}"
                )));
            }
            r
        }
        None => 0.5 * k0.smallest_nonzero().unwrap_or(1.0),
    };
    let predicted = second_variation_predict(&asm0, a, &k0.basis, exec)?;
    let rows = exec.try_map(s_grid, |&s| -> Result<ScanRow> {
        let conn = conn0.add(&a.scale(s))?;
        let asm = assemble(cfg, &conn, Execution::Sequential)?;
        let k = ckt_kernel(&asm, Execution::Sequential)?;
        let lambda = k.spectrum.iter().filter(|&&e| e < radius).sum::<f64>();
        Ok(ScanRow { s, lambda, kernel_dim: k.dim() })
    })?;
    let xs: Vec<f64> = rows.iter().map(|r| r.s).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
    Ok(LambdaScan { rows, window_radius: radius, fit: quadratic_fit(&xs, &ys), predicted })
}

/// Full generator on ⊕_{d ≤ M} Ω_d, compressed at the top degree M = cfg.m.
#[derive(Clone, Debug)]
pub struct Generator {
    pub config: TorusConfig,
    pub matrix: SparseMat,
    /// Start of each degree block.
    pub offsets: Vec<usize>,
}

impl Generator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Diagonal of the parity operator v ↦ −v: (−1)^d on degree d.
    pub fn parity(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dim()];
        for d in 0..=self.config.m {
            let end = if d == self.config.m { self.dim() } else { self.offsets[d + 1] };
            for x in &mut p[self.offsets[d]..end] {
                *x = if d % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        p
    }

    /// (degree, mode index) of a flat index.
    pub fn locate(&self, flat: usize) -> (usize, usize) {
        let d = (0..=self.config.m).rev().find(|&d| self.offsets[d] <= flat).unwrap();
        let blk = self.config.harmonic_dim(d) * self.config.fdim();
        (d, (flat - self.offsets[d]) / blk)
    }
}

/// X = Σ_d (X_+^{(d)} + X_-^{(d+1)}) for d < M; with `include_free = false`
/// only the connection part is assembled.
pub fn assemble_generator(
    cfg: &TorusConfig,
    conn: &FourierConnection,
    include_free: bool,
    exec: Execution,
) -> Result<Generator> {
    let top = cfg.m;
    let mut offsets = Vec::with_capacity(top + 1);
    let mut acc = 0;
    for d in 0..=top {
        offsets.push(acc);
        acc += cfg.space_dim(d);
    }
    let mut trips = Vec::new();
    for d in 0..top {
        let asm = assemble_parts(&cfg.with_degree(d), conn, include_free, exec)?;
        for (i, j, v) in asm.xplus.triplets() {
            trips.push((offsets[d + 1] + i, offsets[d] + j, v));
            trips.push((offsets[d] + j, offsets[d + 1] + i, -v.conj()));
        }
    }
    Ok(Generator { config: cfg.clone(), matrix: SparseMat::from_triplets(acc, acc, trips), offsets })
}

/// Value at (x, v) of a section given by coefficients on the degree-`degree` basis.
pub fn evaluate_section(cfg: &TorusConfig, degree: usize, coeffs: &CVec, x: &[f64], v: &[f64]) -> CVec {
    let basis = harmonic_basis(cfg.n, degree);
    let phis: Vec<C64> = basis.members.iter().map(|p: &HPoly| p.eval(v)).collect();
    let f = cfg.fdim();
    let h = basis.len();
    let norm = (std::f64::consts::TAU).powf(-(cfg.n as f64) / 2.0);
    let mut out = CVec::zeros(f);
    for (mi, k) in cfg.modes().iter().enumerate() {
        let phase: f64 = k.iter().zip(x).map(|(&a, &b)| a as f64 * b).sum();
        let e = C64::from_polar(norm, phase);
        for (b, phi) in phis.iter().enumerate() {
            for fi in 0..f {
                let c = coeffs[(mi * h + b) * f + fi];
                if c != C64::new(0.0, 0.0) {
                    out[fi] += c * e * phi;
                }
            }
        }
    }
    out
}

/// The section 𝟙 (normalized) of the endomorphism bundle at degree 0.
pub fn identity_section(cfg: &TorusConfig) -> Result<CVec> {
    if cfg.bundle != BundleKind::Endomorphism || cfg.m != 0 {
        return Err(Error::validation("identity section needs the endomorphism bundle at degree 0"));
    }
    let zero = vec![0; cfg.n];
    let mi = cfg.mode_index(&zero).expect("mode 0 in box");
    let r = cfg.r;
    let mut v = CVec::zeros(cfg.dim());
    for i in 0..r {
        v[mi * r * r + i * r + i] = C64::new(1.0 / (r as f64).sqrt(), 0.0);
    }
    Ok(v)
}

/// Pointwise endomorphism trace of a section of the End(ℂʳ) model, as a
/// section of the scalar model with the same modes and degree.
pub fn trace_end_vector(cfg: &TorusConfig, v: &CVec) -> CVec {
    let r = cfg.r;
    let f = r * r;
    let blocks = v.len() / f;
    CVec::from_fn(blocks, |i, _| (0..r).map(|a| v[i * f + a * r + a]).sum())
}

/// Worked examples used by tests, the CLI and benches.
pub mod presets {
    use super::*;

    /// n = 3, K = 1, m = 0, r = 1 with A = i cos(x₂) dx₁.
    pub fn ejection_vector() -> (TorusConfig, FourierConnection) {
        let cfg = TorusConfig::vector(3, 1, 0, 1).expect("valid");
        let form = FiberConnForm::scalar(&[I, C64::new(0.0, 0.0), C64::new(0.0, 0.0)]);
        (cfg, FourierConnection::cosine(&[0, 1, 0], &form).expect("real"))
    }

    /// Endomorphism bundle of ℂ², A = cos(x₂) iσ_z dx₁ + sin(x₃) iσ_x dx₂.
    pub fn ejection_endomorphism() -> (TorusConfig, FourierConnection) {
        let cfg = TorusConfig::new(3, 1, 0, 2, BundleKind::Endomorphism).expect("valid");
        let o = C64::new(0.0, 0.0);
        let sz = CMat::from_row_slice(2, 2, &[I, o, o, -I]);
        let sx = CMat::from_row_slice(2, 2, &[o, I, I, o]);
        let a1 = FiberConnForm::single(3, 0, sz).expect("skew");
        let a2 = FiberConnForm::single(3, 1, sx).expect("skew");
        let c = FourierConnection::cosine(&[0, 1, 0], &a1)
            .and_then(|c| c.add(&FourierConnection::sine(&[0, 0, 1], &a2)?))
            .expect("real");
        (cfg, c)
    }
}
