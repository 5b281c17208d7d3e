//! Spectral projectors and reduced resolvents at 0 for finite matrices,
//! computed by contour quadrature, and the derivative formulas for the
//! eigenvalue sum of a perturbed generator.
//!
//! Conventions: for a generator X the forward resolvent near 0 is
//! (X + z)⁻¹ = Π₀⁺/z + R₀⁺ + O(z); the backward one uses −X. For any finite
//! matrix this gives R₀⁻ = −R₀⁺, so Π = R₀⁺ + R₀⁻ vanishes identically. The
//! positivity of Π on an infinite-dimensional space comes from continuous
//! spectrum and has no matrix analogue.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Stopping threshold for node doubling.
pub const QUAD_TOL: f64 = 1e-11;
const MAX_NODES: usize = 1 << 15;

#[derive(Clone, Debug)]
pub struct SpectralWindow {
    pub x: CMat,
    pub contour_radius: f64,
    pub pi0_plus: CMat,
    pub pi0_minus: CMat,
    pub r0_plus: CMat,
    pub r0_minus: CMat,
    /// Final node count of the quadrature.
    pub nodes: usize,
    /// ‖contour Π₀⁺ − eigenprojector Π₀⁺‖_max, when X is diagonalizable at
    /// the cluster.
    pub eigen_crosscheck: Option<f64>,
}

impl SpectralWindow {
    /// Rank of Π₀⁺, read off its trace.
    pub fn rank(&self) -> usize {
        linalg::trace(&self.pi0_plus).re.round().max(0.0) as usize
    }
}

/// Errors if an eigenvalue of X lies on |z| = radius.
pub fn check_contour(x: &CMat, radius: f64) -> Result<Vec<C64>> {
    let eig = linalg::eigenvalues(x)?;
    let margin = 1e-6 * radius.max(1.0);
    if let Some(&mu) = eig
        .iter()
        .min_by(|a, b| (a.norm() - radius).abs().partial_cmp(&(b.norm() - radius).abs()).unwrap())
    {
        let d = (mu.norm() - radius).abs();
        if d < margin {
            return Err(Error::ContourHitsSpectrum { radius, nearest: mu, distance: d });
        }
    }
    Ok(eig)
}

/// Half the smallest modulus among the eigenvalues not clustered at 0.
pub fn isolating_radius(x: &CMat) -> Result<f64> {
    let eig = linalg::eigenvalues(x)?;
    let zero = 1e-8 * (1.0 + linalg::frob(x));
    Ok(eig.iter().map(|z| z.norm()).filter(|&a| a > zero).fold(f64::INFINITY, f64::min).min(2.0) / 2.0)
}

/// (1/2πi)∮_{|z|=ρ} g(z, (X+z)⁻¹) dz by the trapezoid rule, doubling nodes
/// until the change is below QUAD_TOL.
fn contour<F>(x: &CMat, radius: f64, g: F) -> Result<(CMat, usize)>
where
    F: Fn(C64, &CMat) -> CMat,
{
    let n = x.nrows();
    let node = |theta: f64| -> Result<CMat> {
        let z = C64::from_polar(radius, theta);
        let shifted = x + CMat::identity(n, n) * z;
        let inv = linalg::inverse(&shifted)?;
        Ok(g(z, &inv) * z)
    };
    let mut count = 8usize;
    let mut sum = CMat::zeros(0, 0);
    for k in 0..count {
        let v = node(std::f64::consts::TAU * k as f64 / count as f64)?;
        sum = if k == 0 { v } else { sum + v };
    }
    let mut current = &sum / C64::new(count as f64, 0.0);
    loop {
        // nodes of the doubled rule interleave the existing ones
        for k in 0..count {
            let theta = std::f64::consts::TAU * (2 * k + 1) as f64 / (2 * count) as f64;
            sum += node(theta)?;
        }
        count *= 2;
        let next = &sum / C64::new(count as f64, 0.0);
        let change = linalg::max_abs(&(&next - &current));
        let scale = linalg::max_abs(&next).max(1.0);
        current = next;
        if change <= QUAD_TOL * scale {
            return Ok((current, count));
        }
        if count >= MAX_NODES {
            return Err(Error::NonConvergence { what: "contour quadrature".into(), residual: change });
        }
    }
}

/// Π₀⁺ = (1/2πi)∮(X+z)⁻¹dz
pub fn contour_projector(x: &CMat, radius: f64) -> Result<(CMat, usize)> {
    check_contour(x, radius)?;
    contour(x, radius, |_, inv| inv.clone())
}

/// Σ_c R_c (L_c†R_c)⁻¹ L_c† over eigenvalue clusters inside the circle.
/// Assumes X is diagonalizable on those clusters.
pub fn eigen_projector(x: &CMat, radius: f64) -> Result<CMat> {
    let eig = check_contour(x, radius)?;
    let n = x.nrows();
    let delta = 1e-6 * (1.0 + linalg::frob(x));
    let mut inside: Vec<C64> = eig.into_iter().filter(|z| z.norm() < radius).collect();
    inside.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap().then(a.im.partial_cmp(&b.im).unwrap()));
    let mut clusters: Vec<Vec<C64>> = Vec::new();
    for mu in inside {
        match clusters.iter_mut().find(|c| c.iter().any(|v| (v - mu).norm() < delta)) {
            Some(c) => c.push(mu),
            None => clusters.push(vec![mu]),
        }
    }
    let mut p = CMat::zeros(n, n);
    for c in clusters {
        let k = c.len();
        let mean = c.iter().sum::<C64>() / k as f64;
        let shifted = x - CMat::identity(n, n) * mean;
        // right and left singular vectors of the k smallest singular values
        let d = linalg::svd(&shifted);
        let r = d.v.columns(n - k, k).into_owned();
        let l = d.u.columns(n - k, k).into_owned();
        let m = l.adjoint() * &r;
        let inv = linalg::inverse(&m)?;
        p += &r * inv * l.adjoint();
    }
    Ok(p)
}

/// Projectors and reduced resolvents at 0 for both time directions.
pub fn spectral_window(x: &CMat, radius: f64) -> Result<SpectralWindow> {
    if x.nrows() != x.ncols() {
        return Err(Error::shape("generator must be square"));
    }
    if !(radius > 0.0) {
        return Err(Error::validation("contour radius must be positive"));
    }
    let (pi0_plus, nodes) = contour_projector(x, radius)?;
    let (r0_plus, _) = contour(x, radius, |z, inv| inv / z)?;
    let neg = -x;
    let (pi0_minus, _) = contour(&neg, radius, |_, inv| inv.clone())?;
    let (r0_minus, _) = contour(&neg, radius, |z, inv| inv / z)?;
    let eigen_crosscheck = eigen_projector(x, radius).ok().map(|p| linalg::max_abs(&(p - &pi0_plus)));
    Ok(SpectralWindow {
        x: x.clone(),
        contour_radius: radius,
        pi0_plus,
        pi0_minus,
        r0_plus,
        r0_minus,
        nodes,
        eigen_crosscheck,
    })
}

/// Largest Frobenius residual among XR₀ = R₀X = 𝟙 − Π₀, Π₀R₀ = R₀Π₀ = 0,
/// XΠ₀ = Π₀X = 0 and Π₀² = Π₀, for both time directions.
pub fn resolvent_identity_check(w: &SpectralWindow) -> f64 {
    let n = w.x.nrows();
    let id = CMat::identity(n, n);
    let mut worst = 0.0f64;
    for (x, p, r) in [
        (w.x.clone(), &w.pi0_plus, &w.r0_plus),
        (-&w.x, &w.pi0_minus, &w.r0_minus),
    ] {
        let comp = &id - p;
        for res in [
            &x * r - &comp,
            r * &x - &comp,
            p * r,
            r * p,
            &x * p,
            p * &x,
            p * p - p,
        ] {
            worst = worst.max(linalg::frob(&res));
        }
    }
    worst
}

/// Π = R₀⁺ + R₀⁻
pub fn pi_operator(w: &SpectralWindow) -> CMat {
    &w.r0_plus + &w.r0_minus
}

/// λ⁺(s) = Tr(−X_s Π_s⁺) = (1/2πi)∮ z Tr((X_s + z)⁻¹) dz with X_s = X + sP.
pub fn lambda_plus(x: &CMat, pa: &CMat, s: f64, radius: f64) -> Result<C64> {
    let xs = x + pa * C64::new(s, 0.0);
    check_contour(&xs, radius)?;
    let (v, _) = contour(&xs, radius, |z, inv| CMat::from_element(1, 1, linalg::trace(inv) * z))?;
    Ok(v[(0, 0)])
}

/// λ⁻(s) = Tr(X_s Π_s⁻), the same quantity for the backward generator.
pub fn lambda_minus(x: &CMat, pa: &CMat, s: f64, radius: f64) -> Result<C64> {
    lambda_plus(&-x, &-pa, s, radius)
}

#[derive(Clone, Debug)]
pub struct LambdaDerivatives {
    /// −Tr(P Π₀⁺)
    pub first_closed: C64,
    /// 2 Tr(Π₀⁺ P R₀⁺ P Π₀⁺)
    pub second_closed: C64,
    pub first_fd: C64,
    pub second_fd: C64,
    pub step: f64,
}

impl LambdaDerivatives {
    /// max of |closed − fd| / (1 + |closed|) over both orders.
    pub fn relative_gap(&self) -> f64 {
        let a = (self.first_closed - self.first_fd).norm() / (1.0 + self.first_closed.norm());
        let b = (self.second_closed - self.second_fd).norm() / (1.0 + self.second_closed.norm());
        a.max(b)
    }
}

fn count_inside(x: &CMat, radius: f64) -> Result<usize> {
    Ok(check_contour(x, radius)?.iter().filter(|z| z.norm() < radius).count())
}

/// Closed-form first and second derivatives of λ⁺ at s = 0 against
/// five-point finite differences, Richardson-extrapolated over h and h/2.
pub fn lambda_derivatives(x: &CMat, pa: &CMat, radius: f64, step: Option<f64>) -> Result<LambdaDerivatives> {
    if pa.shape() != x.shape() {
        return Err(Error::shape("perturbation and generator differ in shape"));
    }
    let w = spectral_window(x, radius)?;
    let p = &w.pi0_plus;
    let first_closed = -linalg::trace(&(pa * p));
    let second_closed = linalg::trace(&(p * pa * &w.r0_plus * pa * p)) * 2.0;

    let eig = linalg::eigenvalues(x)?;
    let gap = eig.iter().map(|z| (z.norm() - radius).abs()).fold(f64::INFINITY, f64::min);
    let pnorm = linalg::singular_values(pa).first().copied().unwrap_or(0.0);
    let h = step.unwrap_or_else(|| (0.05 * gap / (1.0 + pnorm)).min(1e-2));
    let base = count_inside(x, radius)?;
    for s in [-2.0 * h, 2.0 * h] {
        let xs = x + pa * C64::new(s, 0.0);
        if count_inside(&xs, radius)? != base {
            let nearest = linalg::eigenvalues(&xs)?
                .into_iter()
                .min_by(|a, b| (a.norm() - radius).abs().partial_cmp(&(b.norm() - radius).abs()).unwrap())
                .unwrap_or_default();
            return Err(Error::ContourHitsSpectrum {
                radius,
                nearest,
                distance: (nearest.norm() - radius).abs(),
            });
        }
    }
    let l0 = lambda_plus(x, pa, 0.0, radius)?;
    let stencil = |h: f64| -> Result<(C64, C64)> {
        let f = |s: f64| lambda_plus(x, pa, s, radius);
        let (p1, m1, p2, m2) = (f(h)?, f(-h)?, f(2.0 * h)?, f(-2.0 * h)?);
        let d1 = (-p2 + p1 * 8.0 - m1 * 8.0 + m2) / (12.0 * h);
        let d2 = (-p2 + p1 * 16.0 - l0 * 30.0 + m1 * 16.0 - m2) / (12.0 * h * h);
        Ok((d1, d2))
    };
    let (a1, a2) = stencil(h)?;
    let (b1, b2) = stencil(h / 2.0)?;
    Ok(LambdaDerivatives {
        first_closed,
        second_closed,
        first_fd: (b1 * 16.0 - a1) / 15.0,
        second_fd: (b2 * 16.0 - a2) / 15.0,
        step: h,
    })
}

/// max over the grid of |conj(λ⁻(s)) − λ⁺(s)|.
pub fn conjugation_check(x: &CMat, pa: &CMat, s_grid: &[f64], radius: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for &s in s_grid {
        let lp = lambda_plus(x, pa, s, radius)?;
        let lm = lambda_minus(x, pa, s, radius)?;
        worst = worst.max((lm.conj() - lp).norm());
    }
    Ok(worst)
}
