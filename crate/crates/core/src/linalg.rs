//! Dense complex linear algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn frob(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// ‖M† + M‖_F
pub fn skew_defect(m: &CMat) -> f64 {
    frob(&(m.adjoint() + m))
}

/// ‖M† − M‖_F
pub fn hermitian_defect(m: &CMat) -> f64 {
    frob(&(m.adjoint() - m))
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Frobenius inner product Tr(B† A).
pub fn frob_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// Row-major Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

fn to_faer(m: &CMat) -> faer::Mat<C64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin singular value decomposition, values in descending order.
///
/// Delegated to faer: nalgebra's bidiagonal SVD (real and complex) returns
/// an inaccurate factorization on some matrices with a singular value at 0,
/// which is exactly the case kernel computations care about.
#[derive(Clone, Debug)]
pub struct Svd {
    pub singular_values: Vec<f64>,
    pub u: CMat,
    pub v: CMat,
}

pub fn svd(m: &CMat) -> Svd {
    let (rows, cols) = m.shape();
    if rows.min(cols) == 0 {
        return Svd { singular_values: Vec::new(), u: CMat::zeros(rows, 0), v: CMat::zeros(cols, 0) };
    }
    let d = to_faer(m).thin_svd().expect("SVD converges");
    let s = d.S().column_vector();
    Svd {
        singular_values: (0..s.nrows()).map(|i| s[i].re).collect(),
        u: from_faer(d.U()),
        v: from_faer(d.V()),
    }
}

/// Singular values and a full right singular basis (columns of V).
/// Wide matrices are zero-padded so that the null space is complete.
fn svd_full(m: &CMat) -> (Vec<f64>, CMat) {
    let (rows, cols) = m.shape();
    if cols == 0 {
        return (Vec::new(), CMat::zeros(0, 0));
    }
    let d = if rows < cols {
        let mut p = CMat::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        svd(&p)
    } else {
        svd(m)
    };
    (d.singular_values, d.v)
}

/// Minimum-norm least-squares solution, dropping σ ≤ rel_tol·σ_max.
pub fn pinv_solve(a: &CMat, b: &CVec, rel_tol: f64) -> CVec {
    let d = svd(a);
    let smax = d.singular_values.first().copied().unwrap_or(0.0);
    let mut x = CVec::zeros(a.ncols());
    for (j, &s) in d.singular_values.iter().enumerate() {
        if s > rel_tol * smax && s > 0.0 {
            x += d.v.column(j) * (d.u.column(j).dotc(b) / s);
        }
    }
    x
}

/// Orthonormal basis (as columns) of the null space of `m`, using the
/// threshold `rel_tol * σ_max`.
pub fn kernel_basis(m: &CMat, rel_tol: f64) -> CMat {
    let cols = m.ncols();
    if cols == 0 {
        return CMat::zeros(0, 0);
    }
    let (sv, v) = svd_full(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let thresh = rel_tol * smax;
    let idx: Vec<usize> = (0..sv.len())
        .filter(|&i| smax == 0.0 || sv[i] <= thresh)
        .collect();
    let mut out = CMat::zeros(cols, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        out.set_column(j, &v.column(i));
    }
    out
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    svd(m).singular_values
}

pub fn rank(m: &CMat, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Orthonormal basis of the column space (columns of U above threshold).
pub fn range_basis(m: &CMat, rel_tol: f64) -> CMat {
    if m.nrows() == 0 || m.ncols() == 0 {
        return CMat::zeros(m.nrows(), 0);
    }
    let d = svd(m);
    let smax = d.singular_values.first().copied().unwrap_or(0.0);
    let keep = d.singular_values.iter().filter(|&&s| smax > 0.0 && s > rel_tol * smax).count();
    d.u.columns(0, keep).into_owned()
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = m.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMat::zeros(0, 0)));
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = to_faer(&sym)
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::NonConvergence {
            what: "Hermitian eigensolver".into(),
            residual: hermitian_defect(m),
        })?;
    // faer returns them in nondecreasing order
    let s = eig.S().column_vector();
    Ok(((0..n).map(|i| s[i].re).collect(), from_faer(eig.U())))
}

/// Eigenvalues of a general complex matrix.
pub fn eigenvalues(m: &CMat) -> Result<Vec<C64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    to_faer(m).eigenvalues().map_err(|_| Error::NonConvergence {
        what: "eigenvalue solver".into(),
        residual: f64::NAN,
    })
}

pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    a.clone().lu().solve(b).ok_or_else(|| Error::NoSolution("singular matrix".into()))
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    solve(a, &CMat::identity(a.nrows(), a.nrows()))
}

/// Matrix exponential by scaling and squaring with a Taylor kernel.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = frob(a);
    let mut s = 0;
    while norm / 2f64.powi(s) > 0.25 {
        s += 1;
    }
    let b = a / C64::new(2f64.powi(s), 0.0);
    let mut term = CMat::identity(n, n);
    let mut sum = CMat::identity(n, n);
    for k in 1..=24 {
        term = &term * &b / C64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// Unitary matrix whose first column is the unit vector `x`.
pub fn unitary_with_first_column(x: &CVec) -> CMat {
    let n = x.len();
    let nx = x.norm();
    let x1 = x[0];
    let phase = if x1.norm() > 0.0 { x1 / x1.norm() } else { C64::new(1.0, 0.0) };
    let alpha = -phase * nx;
    let mut w = x.clone();
    w[0] -= alpha;
    let ww = w.norm_squared();
    let mut h = CMat::identity(n, n);
    if ww > 0.0 {
        h -= (&w * w.adjoint()) * C64::new(2.0 / ww, 0.0);
    }
    // H e1 = x / alpha, rescale the first column back to x
    let col = h.column(0) * alpha;
    h.set_column(0, &col);
    h
}

/// Orthonormalize the columns of `m` in place order, dropping columns whose
/// residual falls below `tol` (two passes of modified Gram-Schmidt).
pub fn orthonormalize(m: &CMat, tol: f64) -> CMat {
    let mut basis: Vec<CVec> = Vec::new();
    for j in 0..m.ncols() {
        let mut v: CVec = m.column(j).into_owned();
        let n0 = v.norm();
        for _ in 0..2 {
            for b in &basis {
                let p = b.dotc(&v);
                v -= b * p;
            }
        }
        let nv = v.norm();
        if nv > tol * n0.max(1.0) && nv > 0.0 {
            basis.push(v / C64::new(nv, 0.0));
        }
    }
    let mut out = CMat::zeros(m.nrows(), basis.len());
    for (j, b) in basis.iter().enumerate() {
        out.set_column(j, b);
    }
    out
}

pub fn real_mat(m: &DMatrix<f64>) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}
