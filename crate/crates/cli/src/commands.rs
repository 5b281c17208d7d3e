use std::path::Path;

use cktlab::connalg::{commutator_factor, gamma_split, solve_gamma_preimage, FiberConnForm, TwistedHarmonic};
use cktlab::holonomy::{opacity_probe, transport, GeodesicSegment, ProbeOptions};
use cktlab::linalg::{self, CMat, CVec, I};
use cktlab::polyharm::{dims, harmonic_basis, harmonic_decompose, laplace, monomials, reconstruct, HPoly};
use cktlab::spectral::{conjugation_check, lambda_derivatives, pi_operator, resolvent_identity_check, spectral_window};
use cktlab::symbolcheck::{forms_contraction_span, uniform_span, SymbolFamily, Verdict};
use cktlab::textfmt::{read_fourier, read_hpoly, read_matrix};
use cktlab::torusmodel::{assemble, ckt_kernel, lambda_scan, presets, BundleKind, FourierConnection, TorusConfig};
use cktlab::{Execution, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::Config;
use crate::output::{num, Table};
use crate::CliError;

const EXEC: Execution = Execution::Parallel;

pub struct Ctx {
    pub cfg: Config,
    pub seed: u64,
    /// Overrides the per-command default tolerance.
    pub tol: Option<f64>,
    /// Contents of every file read, for the config hash.
    pub inputs: Vec<Vec<u8>>,
}

impl Ctx {
    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::Io(format!("{} is not UTF-8", path.display())))?;
        self.inputs.push(bytes);
        Ok(text)
    }

    /// A preset name or a FOURIERCONN file.
    fn connection(&mut self, section: &str, key: &str, n: usize, r: usize) -> Result<FourierConnection, CliError> {
        let o = C64::new(0.0, 0.0);
        let conn = match self.cfg.raw(section, key) {
            "zero" => FourierConnection::zero(n, r),
            "ejection-vector" => presets::ejection_vector().1,
            "ejection-endomorphism" => presets::ejection_endomorphism().1,
            "diagonal" => {
                let a = CMat::from_row_slice(2, 2, &[I, o, o, I * 2.0]);
                FourierConnection::constant(FiberConnForm::single(2, 0, a)?)?
            }
            "pauli" => {
                let sx = CMat::from_row_slice(2, 2, &[o, I, I, o]);
                let sy = CMat::from_row_slice(2, 2, &[o, C64::new(1.0, 0.0), C64::new(-1.0, 0.0), o]);
                FourierConnection::constant(FiberConnForm::new(vec![sx, sy], true)?)?
            }
            _ => {
                let path = self.cfg.path(section, key).expect("non-empty");
                let text = self.read(&path)?;
                read_fourier(&text)?
            }
        };
        Ok(conn)
    }
}

fn rc(g: &mut ChaCha8Rng) -> C64 {
    C64::new(g.random_range(-1.0..1.0), g.random_range(-1.0..1.0))
}

fn rand_skew(g: &mut ChaCha8Rng, r: usize) -> CMat {
    let a = CMat::from_fn(r, r, |_, _| rc(g));
    (&a - a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn dims_table(ctx: &Ctx) -> Result<Table, CliError> {
    let n: usize = ctx.cfg.get("dims", "n")?;
    let mmax: usize = ctx.cfg.get("dims", "mmax")?;
    let mut t = Table::new(&["n", "m", "p", "h"]);
    for m in 0..=mmax {
        let (p, h) = dims(n, m)?;
        t.row(vec![n.to_string(), m.to_string(), p.to_string(), h.to_string()]);
    }
    Ok(t)
}

pub fn harmdecomp(ctx: &mut Ctx) -> Result<Table, CliError> {
    let p = match ctx.cfg.path("harmdecomp", "poly") {
        Some(path) => {
            let text = ctx.read(&path)?;
            read_hpoly(&text)?
        }
        None => {
            let n: usize = ctx.cfg.get("harmdecomp", "n")?;
            let m: usize = ctx.cfg.get("harmdecomp", "m")?;
            let mut g = ctx.rng();
            HPoly::from_terms(n, m, monomials(n, m).into_iter().map(|a| (a, rc(&mut g))))?
        }
    };
    let parts = harmonic_decompose(&p);
    let residual = reconstruct(p.n(), p.degree(), &parts).sub(&p).max_abs_coeff();
    let mut t = Table::new(&["k", "degree", "norm", "laplacian"]);
    t.note("n", p.n());
    t.note("m", p.degree());
    t.note("reconstruction_residual", num(residual));
    for (k, h) in &parts {
        t.row(vec![k.to_string(), h.degree().to_string(), num(h.norm()), num(laplace(h).max_abs_coeff())]);
    }
    Ok(t)
}

pub fn check_divtype(ctx: &Ctx) -> Result<Table, CliError> {
    let c = &ctx.cfg;
    let s = "check-divtype";
    let (n, m, r, k): (usize, usize, usize, usize) = (c.get(s, "n")?, c.get(s, "m")?, c.get(s, "r")?, c.get(s, "k")?);
    let samples: usize = c.get(s, "samples")?;
    if n < 2 {
        return Err(cktlab::Error::UnsupportedDimension(n).into());
    }
    let run = |count| -> Result<_, CliError> {
        Ok(match c.raw(s, "family") {
            "dstar-tracefree" => uniform_span(&SymbolFamily::dstar_tracefree(n, m), count, ctx.seed, EXEC),
            "dstar-full" => uniform_span(&SymbolFamily::dstar_full(n, m), count, ctx.seed, EXEC),
            "divergence" => uniform_span(&SymbolFamily::divergence(n), count, ctx.seed, EXEC),
            "counterexample" => uniform_span(&SymbolFamily::counterexample(n, r), count, ctx.seed, EXEC),
            "forms" => forms_contraction_span(n, k, count, ctx.seed, EXEC),
            other => return Err(CliError::Config(format!("unknown family {other:?}"))),
        })
    };
    let rep = run(samples)?;
    let twice = run(2 * samples)?;
    let mut t = Table::new(&["sample", "kernel_dim", "span"]);
    t.note("family", &rep.family);
    t.note("fiber_dim", rep.fiber_dim);
    t.note("span_dim", rep.span_dim);
    t.note("verdict", rep.verdict.as_str());
    t.note("stable_under_doubling", (twice.verdict, twice.span_dim) == (rep.verdict, rep.span_dim));
    t.note("converged", rep.converged);
    if let Some(note) = &rep.note {
        t.note("note", note);
    }
    for (i, (kd, sp)) in rep.kernel_dims.iter().zip(&rep.cumulative).enumerate() {
        t.row(vec![i.to_string(), kd.to_string(), sp.to_string()]);
    }
    Ok(t)
}

fn matrix_rows(t: &mut Table, name: &str, m: &CMat) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            t.row(vec![name.to_string(), i.to_string(), j.to_string(), num(m[(i, j)].re), num(m[(i, j)].im)]);
        }
    }
}

pub fn commutator(ctx: &mut Ctx) -> Result<Table, CliError> {
    let u = match ctx.cfg.path("commutator-factor", "matrix") {
        Some(path) => {
            let text = ctx.read(&path)?;
            read_matrix(&text)?
        }
        None => {
            let r: usize = ctx.cfg.get("commutator-factor", "r")?;
            let mut g = ctx.rng();
            let mut a = rand_skew(&mut g, r);
            let tr = a.trace() / r as f64;
            for i in 0..r {
                a[(i, i)] -= tr;
            }
            a
        }
    };
    let (a, gm) = commutator_factor(&u)?;
    let residual = linalg::frob(&(linalg::commutator(&a, &gm) - &u));
    let tol = ctx.tol.unwrap_or(1e-9);
    if residual > tol * (1.0 + linalg::frob(&u)) {
        return Err(CliError::Check(format!("‖[A, Γ] − u‖ = {residual:e} exceeds tol {tol:e}")));
    }
    let mut t = Table::new(&["matrix", "row", "col", "re", "im"]);
    t.note("residual", num(residual));
    matrix_rows(&mut t, "u", &u);
    matrix_rows(&mut t, "A", &a);
    matrix_rows(&mut t, "Gamma", &gm);
    Ok(t)
}

fn torus_config(cfg: &Config) -> Result<TorusConfig, CliError> {
    let bundle = match cfg.raw("torus", "bundle") {
        "vector" => BundleKind::Vector,
        "endomorphism" => BundleKind::Endomorphism,
        other => return Err(CliError::Config(format!("unknown bundle {other:?}"))),
    };
    Ok(TorusConfig::new(cfg.get("torus", "n")?, cfg.get("torus", "cutoff")?, cfg.get("torus", "m")?, cfg.get("torus", "r")?, bundle)?)
}

pub fn torus_ckt(ctx: &mut Ctx) -> Result<Table, CliError> {
    let tc = torus_config(&ctx.cfg)?;
    let conn = ctx.connection("torus", "connection", tc.n, tc.r)?;
    let asm = assemble(&tc, &conn, EXEC)?;
    let ker = ckt_kernel(&asm, EXEC)?;
    let mut t = Table::new(&["mode", "weight"]);
    t.note("basis_dim", tc.dim());
    t.note("kernel_dim", ker.dim());
    t.note("adjointness_defect", num(asm.adjointness_defect()));
    if let Some(e) = ker.smallest_nonzero() {
        t.note("smallest_nonzero_eigenvalue", num(e));
    }
    for (k, w) in &ker.mode_weights {
        let mode: Vec<String> = k.iter().map(|x| x.to_string()).collect();
        t.row(vec![mode.join(" "), num(*w)]);
    }
    Ok(t)
}

pub fn torus_eject(ctx: &mut Ctx) -> Result<Table, CliError> {
    let tc = torus_config(&ctx.cfg)?;
    let conn0 = ctx.connection("torus", "connection", tc.n, tc.r)?;
    let dir = ctx.connection("eject", "direction", tc.n, tc.r)?;
    let s_max: f64 = ctx.cfg.get("eject", "s_max")?;
    let points: usize = ctx.cfg.get("eject", "points")?;
    if points < 3 || !(s_max > 0.0) {
        return Err(CliError::Config("eject needs points ≥ 3 and s_max > 0".into()));
    }
    let grid: Vec<f64> = (0..points).map(|i| s_max * (2 * i) as f64 / (points - 1) as f64 - s_max).collect();
    let radius: Option<f64> = ctx.cfg.opt("eject", "radius")?;
    let scan = lambda_scan(&tc, &conn0, &dir, &grid, radius, EXEC)?;
    let mut t = Table::new(&["s", "lambda", "kernel_dim", "predicted_second_variation"]);
    t.note("window_radius", num(scan.window_radius));
    t.note("lambda_dot_fit", num(scan.lambda_dot()));
    t.note("lambda_ddot_fit", num(scan.lambda_ddot()));
    t.note("ratio", num(scan.ratio()));
    t.note("resolved_factor", scan.resolved_factor().map(num).unwrap_or_else(|| "none".into()));
    for r in &scan.rows {
        t.row(vec![num(r.s), num(r.lambda), r.kernel_dim.to_string(), num(scan.predicted.total)]);
    }
    Ok(t)
}

/// Planted matrix with a `k`-dimensional kernel and the rest of the
/// spectrum at modulus between 0.5 and 3.
fn planted(g: &mut ChaCha8Rng, n: usize, k: usize, skew: bool) -> (CMat, CMat) {
    let mut d = vec![C64::new(0.0, 0.0); k];
    for _ in k..n {
        let r = g.random_range(0.5..3.0);
        d.push(if skew { I * if g.random_bool(0.5) { r } else { -r } } else { C64::from_polar(r, g.random_range(0.0..std::f64::consts::TAU)) });
    }
    let dm = CMat::from_diagonal(&CVec::from_column_slice(&d));
    let scale = C64::new(1.0 / (n as f64).sqrt(), 0.0);
    if skew {
        let u = CMat::from_fn(n, n, |_, _| rc(g)).qr().q();
        (&u * dm * u.adjoint(), rand_skew(g, n) * scale)
    } else {
        let s = CMat::identity(n, n) + CMat::from_fn(n, n, |_, _| rc(g)) * (scale * 0.4);
        let si = linalg::inverse(&s).expect("near-identity similarity");
        (&s * dm * si, CMat::from_fn(n, n, |_, _| rc(g)) * scale)
    }
}

pub fn kato(ctx: &Ctx) -> Result<Table, CliError> {
    let c = &ctx.cfg;
    let (n, k): (usize, usize) = (c.get("kato", "size")?, c.get("kato", "kernel")?);
    let radius: f64 = c.get("kato", "radius")?;
    let skew = match c.raw("kato", "kind") {
        "skew" => true,
        "nonnormal" => false,
        other => return Err(CliError::Config(format!("unknown kind {other:?}"))),
    };
    if k > n || n == 0 {
        return Err(CliError::Config("kato needs 0 ≤ kernel ≤ size and size ≥ 1".into()));
    }
    let (x, pa) = planted(&mut ctx.rng(), n, k, skew);
    let w = spectral_window(&x, radius)?;
    let d = lambda_derivatives(&x, &pa, radius, None)?;
    let mut t = Table::new(&["quantity", "re", "im"]);
    let mut put = |name: &str, z: C64| t.row(vec![name.to_string(), num(z.re), num(z.im)]);
    put("rank", C64::new(w.rank() as f64, 0.0));
    put("resolvent_residual", C64::new(resolvent_identity_check(&w), 0.0));
    put("pi_norm", C64::new(linalg::max_abs(&pi_operator(&w)), 0.0));
    put("first_closed", d.first_closed);
    put("first_fd", d.first_fd);
    put("second_closed", d.second_closed);
    put("second_fd", d.second_fd);
    put("relative_gap", C64::new(d.relative_gap(), 0.0));
    if skew {
        put("conjugation_defect", C64::new(conjugation_check(&x, &pa, &[-0.05, 0.0, 0.05], radius)?, 0.0));
    }
    Ok(t)
}

pub fn holonomy(ctx: &mut Ctx) -> Result<Table, CliError> {
    let conn = ctx.connection("holonomy", "connection", 2, 2)?;
    let c = &ctx.cfg;
    let opts = ProbeOptions {
        loops: c.get("holonomy", "loops")?,
        length: c.get("holonomy", "length")?,
        steps: c.get("holonomy", "steps")?,
        seed: ctx.seed,
        tol: ctx.tol.unwrap_or(1e-6),
        ..ProbeOptions::default()
    };
    let rep = opacity_probe(&conn, &opts, EXEC)?;
    let mut t = Table::new(&["projector", "rank", "defect"]);
    t.note("commutant_dim", rep.commutant_dim);
    t.note("max_unitarity_defect", num(rep.max_unitarity_defect));
    t.note("verdict", rep.describe());
    for (i, p) in rep.projectors.iter().enumerate() {
        t.row(vec![i.to_string(), p.rank.to_string(), num(p.defect)]);
    }
    Ok(t)
}

/// Small versions of the invariant suite. Returns the table and whether
/// every check passed.
pub fn selftest(ctx: &Ctx) -> Result<(Table, bool), CliError> {
    let mut g = ctx.rng();
    let mut checks: Vec<(&str, f64, f64)> = Vec::new();

    let mismatches = (0..=6).filter(|&m| dims(3, m).map(|d| d.1 != 2 * m as u64 + 1).unwrap_or(true)).count();
    checks.push(("dims_n3", mismatches as f64, 0.0));

    let p = HPoly::from_terms(4, 6, monomials(4, 6).into_iter().map(|a| (a, rc(&mut g))))?;
    let parts = harmonic_decompose(&p);
    checks.push(("harmonic_reconstruction", reconstruct(4, 6, &parts).sub(&p).max_abs_coeff(), 1e-12));
    let lap = parts.iter().map(|(_, h)| laplace(h).max_abs_coeff()).fold(0.0, f64::max);
    checks.push(("harmonic_laplacian", lap, 1e-12));

    let b = harmonic_basis(3, 2);
    let coeffs: Vec<HPoly> = (0..2).map(|_| b.combine(&cktlab::linalg::CVec::from_fn(b.len(), |_, _| rc(&mut g)))).collect();
    let u = TwistedHarmonic::new(coeffs)?;
    let (form, w) = solve_gamma_preimage(&u)?;
    let back = gamma_split(&form, &w)?.minus.expect("degree ≥ 1");
    checks.push(("gamma_preimage", back.sub(&u).norm() / u.norm().max(1.0), 1e-9));

    let mut s = rand_skew(&mut g, 4);
    let tr = s.trace() / 4.0;
    for i in 0..4 {
        s[(i, i)] -= tr;
    }
    let (a, gm) = commutator_factor(&s)?;
    checks.push(("commutator_factor", linalg::frob(&(linalg::commutator(&a, &gm) - &s)), 1e-9));

    let rep = uniform_span(&SymbolFamily::dstar_tracefree(3, 2), 96, ctx.seed, EXEC);
    checks.push(("dstar_uniform_n3", (rep.verdict != Verdict::Uniform) as u8 as f64, 0.0));
    let rep = uniform_span(&SymbolFamily::counterexample(3, 2), 96, ctx.seed, EXEC);
    checks.push(("counterexample_span", (rep.span_dim as f64 - 2.0).abs(), 0.0));

    let (ecfg, econn) = presets::ejection_endomorphism();
    checks.push(("torus_adjointness", assemble(&ecfg, &econn, EXEC)?.adjointness_defect(), 1e-12));
    let (vcfg, a) = presets::ejection_vector();
    let grid: Vec<f64> = (-4..=4).map(|i| i as f64 * 0.01).collect();
    let scan = lambda_scan(&vcfg, &FourierConnection::zero(3, 1), &a, &grid, None, EXEC)?;
    let off = scan.resolved_factor().map(|f| (scan.ratio() - f).abs() / f).unwrap_or(f64::INFINITY);
    checks.push(("ejection_ratio", off, 0.05));

    let (x, pa) = planted(&mut g, 16, 2, true);
    let win = spectral_window(&x, 0.25)?;
    checks.push(("resolvent_identities", resolvent_identity_check(&win), 1e-9));
    checks.push(("pi_skew", linalg::max_abs(&pi_operator(&win)), 1e-10));
    checks.push(("lambda_derivatives", lambda_derivatives(&x, &pa, 0.25, None)?.relative_gap(), 1e-6));

    let o = C64::new(0.0, 0.0);
    let da = CMat::from_row_slice(2, 2, &[I, o, o, I * 2.0]);
    let diag = FourierConnection::constant(FiberConnForm::single(2, 0, da.clone())?)?;
    let seg = GeodesicSegment::new(vec![0.1, 0.2], vec![0.6, 0.8], 2.0)?;
    let tr = transport(&diag, &seg, 200)?;
    let oracle = linalg::expm(&(da * C64::new(-1.2, 0.0)));
    checks.push(("transport_expm", linalg::max_abs(&(&tr.c - oracle)), 1e-8));
    let sx = CMat::from_row_slice(2, 2, &[o, I, I, o]);
    let sy = CMat::from_row_slice(2, 2, &[o, C64::new(1.0, 0.0), C64::new(-1.0, 0.0), o]);
    let pauli = FourierConnection::constant(FiberConnForm::new(vec![sx, sy], true)?)?;
    let rep = opacity_probe(&pauli, &ProbeOptions::default(), EXEC)?;
    checks.push(("opacity_pauli", (rep.commutant_dim as f64 - 1.0).abs(), 0.0));

    let mut t = Table::new(&["check", "value", "tolerance", "status"]);
    let mut ok = true;
    for (name, value, tol) in checks {
        let pass = value <= tol;
        ok &= pass;
        t.row(vec![name.to_string(), num(value), num(tol), if pass { "pass" } else { "fail" }.to_string()]);
    }
    Ok((t, ok))
}
