//! Parallel transport along straight geodesics of the flat torus and
//! numerical detection of invariant subbundles.
//!
//! A probe only sees finitely many transports. Its verdicts are reports at a
//! tolerance, never proofs.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{self, CMat, CVec};
use crate::torusmodel::{evaluate_section, FourierConnection, TorusConfig};

/// x(t) = x₀ + t v for 0 ≤ t ≤ length.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSegment {
    pub start: Vec<f64>,
    pub direction: Vec<f64>,
    pub length: f64,
}

impl GeodesicSegment {
    pub fn new(start: Vec<f64>, direction: Vec<f64>, length: f64) -> Result<Self> {
        if start.len() != direction.len() {
            return Err(Error::shape("start and direction differ in length"));
        }
        let norm = direction.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!("direction has norm {norm}, expected 1")));
        }
        if !(length >= 0.0) {
            return Err(Error::validation("length must be non-negative"));
        }
        Ok(GeodesicSegment { start, direction, length })
    }

    /// Segment from a to b in the universal cover.
    pub fn between(a: &[f64], b: &[f64]) -> Result<Self> {
        let d: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        let len = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len == 0.0 {
            let mut e = vec![0.0; a.len()];
            e[0] = 1.0;
            return Self::new(a.to_vec(), e, 0.0);
        }
        Self::new(a.to_vec(), d.iter().map(|x| x / len).collect(), len)
    }

    pub fn point(&self, t: f64) -> Vec<f64> {
        self.start.iter().zip(&self.direction).map(|(x, v)| x + t * v).collect()
    }

    pub fn end(&self) -> Vec<f64> {
        self.point(self.length)
    }
}

#[derive(Clone, Debug)]
pub struct TransportResult {
    pub c: CMat,
    pub steps: usize,
    /// Step-halving estimate of the integration error.
    pub error_estimate: f64,
    /// ‖C†C − 𝟙‖_F
    pub unitarity_defect: f64,
}

fn rk4(conn: &FourierConnection, seg: &GeodesicSegment, steps: usize) -> CMat {
    let r = conn.r();
    let h = seg.length / steps as f64;
    let rhs = |t: f64, c: &CMat| -> CMat { -(conn.eval_dir(&seg.point(t), &seg.direction) * c) };
    let mut c = CMat::identity(r, r);
    for i in 0..steps {
        let t = i as f64 * h;
        let k1 = rhs(t, &c);
        let k2 = rhs(t + h / 2.0, &(&c + &k1 * C64::new(h / 2.0, 0.0)));
        let k3 = rhs(t + h / 2.0, &(&c + &k2 * C64::new(h / 2.0, 0.0)));
        let k4 = rhs(t + h, &(&c + &k3 * C64::new(h, 0.0)));
        c += (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
    }
    c
}

/// Solves Ċ = −Γ_{x(t)}(v) C, C(0) = 𝟙 with classical RK4 at `steps` and
/// `2·steps`; the finer solution is returned.
pub fn transport(conn: &FourierConnection, seg: &GeodesicSegment, steps: usize) -> Result<TransportResult> {
    if steps < 16 {
        return Err(Error::validation("transport needs at least 16 steps"));
    }
    if seg.start.len() != conn.n() {
        return Err(Error::shape("segment dimension differs from the connection"));
    }
    let d = conn.reality_defect();
    if d > 1e-12 {
        return Err(Error::validation(format!("connection is not skew-Hermitian (defect {d:e})")));
    }
    let coarse = rk4(conn, seg, steps);
    let fine = rk4(conn, seg, 2 * steps);
    let r = conn.r();
    let unitarity_defect = linalg::frob(&(fine.adjoint() * &fine - CMat::identity(r, r)));
    Ok(TransportResult {
        error_estimate: linalg::frob(&(&fine - coarse)) / 15.0,
        c: fine,
        steps,
        unitarity_defect,
    })
}

/// Endomorphism field P(x) = Σ_k P̂_k e^{ik·x} on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct EndoField {
    n: usize,
    r: usize,
    modes: BTreeMap<Vec<i32>, CMat>,
}

impl EndoField {
    pub fn constant(n: usize, p: CMat) -> Self {
        let r = p.nrows();
        EndoField { n, r, modes: BTreeMap::from([(vec![0; n], p)]) }
    }

    pub fn from_modes(n: usize, r: usize, modes: BTreeMap<Vec<i32>, CMat>) -> Result<Self> {
        for (k, m) in &modes {
            if k.len() != n || m.shape() != (r, r) {
                return Err(Error::shape(format!("mode {k:?} does not fit n = {n}, r = {r}")));
            }
        }
        Ok(EndoField { n, r, modes })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.r, self.r);
        for (k, m) in &self.modes {
            let phase: f64 = k.iter().zip(x).map(|(&a, b)| a as f64 * b).sum();
            out += m * C64::from_polar(1.0, phase);
        }
        out
    }

    /// v·∂ₓP
    pub fn derivative(&self, x: &[f64], v: &[f64]) -> CMat {
        let mut out = CMat::zeros(self.r, self.r);
        for (k, m) in &self.modes {
            let phase: f64 = k.iter().zip(x).map(|(&a, b)| a as f64 * b).sum();
            let kv: f64 = k.iter().zip(v).map(|(&a, b)| a as f64 * b).sum();
            out += m * (C64::new(0.0, kv) * C64::from_polar(1.0, phase));
        }
        out
    }

    /// 𝟙 − P
    pub fn complement(&self) -> Self {
        let mut modes = self.modes.clone();
        let zero = vec![0; self.n];
        let id = CMat::identity(self.r, self.r);
        let e = modes.entry(zero).or_insert_with(|| CMat::zeros(self.r, self.r));
        *e = &id - &*e;
        EndoField { n: self.n, r: self.r, modes }
    }
}

fn sample_points(n: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * std::f64::consts::TAU).collect();
            (x, random_direction(&mut rng, n))
        })
        .collect()
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect();
        let norm = g.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return g.iter().map(|x| x / norm).collect();
        }
    }
}

/// ‖v·∂ₓu + [Γ_x(v), u]‖_F at (x, v).
pub fn parallel_defect_at(conn: &FourierConnection, u: &EndoField, x: &[f64], v: &[f64]) -> f64 {
    let g = conn.eval_dir(x, v);
    let p = u.eval(x);
    linalg::frob(&(u.derivative(x, v) + linalg::commutator(&g, &p)))
}

/// Max over sampled (x, v) of the flow-derivative defect of a projector field.
pub fn invariance_defect(conn: &FourierConnection, p: &EndoField, samples: usize, seed: u64) -> Result<f64> {
    if p.n != conn.n() || p.r != conn.r() {
        return Err(Error::shape("projector field does not match the connection"));
    }
    let mut worst = 0.0f64;
    for (x, v) in sample_points(conn.n(), samples, seed) {
        let px = p.eval(&x);
        let idem = linalg::frob(&(&px * &px - &px));
        let herm = linalg::hermitian_defect(&px);
        if idem > 1e-8 || herm > 1e-8 {
            return Err(Error::validation(format!(
                "field is not a Hermitian projector at {x:?} (idempotence {idem:e}, symmetry {herm:e})"
            )));
        }
        worst = worst.max(parallel_defect_at(conn, p, &x, &v));
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct EigenSpread {
    /// Largest change of any ordered eigenvalue along the geodesic.
    pub spread: f64,
    /// Max parallel defect ε along the geodesic.
    pub defect: f64,
    pub length: f64,
    /// spread / (ε · length)
    pub constant: f64,
}

/// Eigenvalue drift of a Hermitian field along a geodesic, measured against
/// its parallel defect there.
pub fn eigen_spread(conn: &FourierConnection, u: &EndoField, seg: &GeodesicSegment, samples: usize) -> Result<EigenSpread> {
    let mut lo: Vec<f64> = vec![f64::INFINITY; u.r];
    let mut hi: Vec<f64> = vec![f64::NEG_INFINITY; u.r];
    let mut defect = 0.0f64;
    for i in 0..=samples {
        let t = seg.length * i as f64 / samples.max(1) as f64;
        let x = seg.point(t);
        let m = u.eval(&x);
        if linalg::hermitian_defect(&m) > 1e-10 {
            return Err(Error::validation("field is not Hermitian"));
        }
        let (vals, _) = linalg::hermitian_eigen(&m)?;
        for (j, e) in vals.iter().enumerate() {
            lo[j] = lo[j].min(*e);
            hi[j] = hi[j].max(*e);
        }
        defect = defect.max(parallel_defect_at(conn, u, &x, &seg.direction));
    }
    let spread = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
    let constant = if defect * seg.length > 0.0 { spread / (defect * seg.length) } else { 0.0 };
    Ok(EigenSpread { spread, defect, length: seg.length, constant })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpacityVerdict {
    /// Commutant is ℂ·𝟙.
    NoneDetected,
    NotOpaque,
    /// Commutant is all of End(ℂʳ).
    Transparent,
}

#[derive(Clone, Debug)]
pub struct CandidateProjector {
    pub projector: CMat,
    pub rank: usize,
    pub defect: f64,
}

#[derive(Clone, Debug)]
pub struct OpacityReport {
    pub commutant_dim: usize,
    pub projectors: Vec<CandidateProjector>,
    pub verdict: OpacityVerdict,
    pub tolerance: f64,
    pub max_unitarity_defect: f64,
}

impl OpacityReport {
    pub fn describe(&self) -> String {
        match self.verdict {
            OpacityVerdict::NoneDetected => {
                format!("no invariant subbundle detected at tolerance {:e}", self.tolerance)
            }
            OpacityVerdict::NotOpaque => format!(
                "not opaque: {} invariant projectors found at tolerance {:e}",
                self.projectors.len(),
                self.tolerance
            ),
            OpacityVerdict::Transparent => {
                format!("transparent: every subspace is preserved at tolerance {:e}", self.tolerance)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProbeOptions {
    pub loops: usize,
    pub length: f64,
    pub steps: usize,
    pub seed: u64,
    /// Relative singular-value threshold for the commutant.
    pub tol: f64,
    pub defect_samples: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { loops: 8, length: 5.0, steps: 200, seed: 7, tol: 1e-6, defect_samples: 64 }
    }
}

/// Holonomies of closed loops at a base point, each made of a geodesic
/// segment in a random direction and the straight segment back to the
/// nearest lift of the base point.
pub fn loop_holonomies(conn: &FourierConnection, opts: &ProbeOptions, exec: Execution) -> Result<Vec<TransportResult>> {
    let n = conn.n();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let base: Vec<f64> = (0..n).map(|_| rand::Rng::random::<f64>(&mut rng) * std::f64::consts::TAU).collect();
    let dirs: Vec<Vec<f64>> = (0..opts.loops).map(|_| random_direction(&mut rng, n)).collect();
    exec.try_map(&dirs, |v| -> Result<TransportResult> {
        let out = GeodesicSegment::new(base.clone(), v.clone(), opts.length)?;
        let end = out.end();
        let tau = std::f64::consts::TAU;
        // return to base + 2πℓ with ℓ chosen to close the loop nearby
        let target: Vec<f64> = base
            .iter()
            .zip(&end)
            .map(|(b, e)| b + tau * ((e - b) / tau).round())
            .collect();
        let back = GeodesicSegment::between(&end, &target)?;
        let t1 = transport(conn, &out, opts.steps)?;
        let back_steps = ((opts.steps as f64 * back.length / opts.length.max(1e-12)).ceil() as usize).max(16);
        let t2 = transport(conn, &back, back_steps)?;
        let c = &t2.c * &t1.c;
        let r = conn.r();
        Ok(TransportResult {
            unitarity_defect: linalg::frob(&(c.adjoint() * &c - CMat::identity(r, r))),
            error_estimate: t1.error_estimate + t2.error_estimate,
            steps: opts.steps + back_steps,
            c,
        })
    })
}

/// Commutant basis (Frobenius-orthonormal r × r matrices) of a set of matrices.
pub fn commutant(mats: &[CMat], rel_tol: f64) -> Vec<CMat> {
    let r = mats.first().map(|m| m.nrows()).unwrap_or(0);
    let id = CMat::identity(r, r);
    let rows = mats.len() * r * r;
    let mut stack = CMat::zeros(rows.max(1), r * r);
    for (j, c) in mats.iter().enumerate() {
        // vec(CM − MC) = (𝟙⊗C − Cᵀ⊗𝟙) vec(M), column-major vec
        let block = linalg::kron(&id, c) - linalg::kron(&c.transpose(), &id);
        stack.view_mut((j * r * r, 0), (r * r, r * r)).copy_from(&block);
    }
    let kb = linalg::kernel_basis(&stack, rel_tol);
    (0..kb.ncols())
        .map(|j| CMat::from_column_slice(r, r, kb.column(j).as_slice()))
        .collect()
}

/// Commutant of loop holonomies, its spectral projectors, and their defects.
pub fn opacity_probe(conn: &FourierConnection, opts: &ProbeOptions, exec: Execution) -> Result<OpacityReport> {
    let hol = loop_holonomies(conn, opts, exec)?;
    let mats: Vec<CMat> = hol.iter().map(|t| t.c.clone()).collect();
    let basis = commutant(&mats, opts.tol);
    let r = conn.r();
    let dim = basis.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9);
    let mut h = CMat::zeros(r, r);
    for b in &basis {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        h += b * C64::new(re, im);
    }
    // the commutant of a unitary set is closed under adjoints
    let h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
    let (vals, vecs) = linalg::hermitian_eigen(&h)?;
    let spread = vals.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, v) in vals.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (v - vals[*g.last().unwrap()]).abs() <= 1e-6 * spread => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let mut projectors = Vec::new();
    if dim > 1 {
        for g in &groups {
            let mut p = CMat::zeros(r, r);
            for &i in g {
                let col: CVec = vecs.column(i).into_owned();
                p += &col * col.adjoint();
            }
            let field = EndoField::constant(conn.n(), p.clone());
            let defect = invariance_defect(conn, &field, opts.defect_samples, opts.seed)?;
            projectors.push(CandidateProjector { projector: p, rank: g.len(), defect });
        }
    }
    let verdict = if dim <= 1 {
        OpacityVerdict::NoneDetected
    } else if dim == r * r {
        OpacityVerdict::Transparent
    } else {
        OpacityVerdict::NotOpaque
    };
    Ok(OpacityReport {
        commutant_dim: dim,
        projectors,
        verdict,
        tolerance: opts.tol,
        max_unitarity_defect: hol.iter().map(|t| t.unitarity_defect).fold(0.0, f64::max),
    })
}

#[derive(Clone, Debug)]
pub struct FrameReport {
    /// max ‖G(x, v) − G(x₀, v₀)‖_F of the pointwise Gram matrix.
    pub gram_drift: f64,
    pub min_singular: f64,
    pub independent: bool,
}

/// Pointwise Gram matrix and independence of sections given as columns of
/// `basis` in the torus basis of degree `degree`.
pub fn parallel_frame_check(cfg: &TorusConfig, basis: &CMat, degree: usize, samples: usize, seed: u64) -> Result<FrameReport> {
    if basis.nrows() != cfg.space_dim(degree) {
        return Err(Error::shape("basis does not match the torus configuration"));
    }
    let pts = sample_points(cfg.n, samples.max(1), seed);
    let p = basis.ncols();
    let mut base: Option<CMat> = None;
    let mut drift = 0.0f64;
    let mut min_sv = f64::INFINITY;
    for (x, v) in &pts {
        let mut frame = CMat::zeros(cfg.fdim(), p);
        for j in 0..p {
            let col: CVec = basis.column(j).into_owned();
            frame.set_column(j, &evaluate_section(cfg, degree, &col, x, v));
        }
        let g = frame.adjoint() * &frame;
        match &base {
            None => base = Some(g),
            Some(b) => drift = drift.max(linalg::frob(&(&g - b))),
        }
        let sv = linalg::singular_values(&frame);
        let smallest = if p > cfg.fdim() { 0.0 } else { sv.last().copied().unwrap_or(0.0) };
        min_sv = min_sv.min(smallest);
    }
    Ok(FrameReport { gram_drift: drift, min_singular: min_sv, independent: min_sv >= 1e-6 })
}
