//! Dense complex kernels shared by the rest of the crate.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;
pub type RMatrix = DMatrix<f64>;

pub const J: C64 = C64::new(0.0, 1.0);

const HERM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Square complex matrix checked to satisfy `A = Aᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let asym = hermitian_defect(&m);
        if asym > HERM_TOL * max_abs(&m).max(f64::MIN_POSITIVE) && asym > 0.0 {
            return Err(Error::NotHermitian(asym));
        }
        Ok(HermitianMatrix(symmetrize(&m)))
    }

    /// Projects onto the Hermitian part, `(A + Aᴴ)/2`.
    pub fn project(m: &CMatrix) -> Self {
        HermitianMatrix(symmetrize(m))
    }

    pub fn identity(n: usize) -> Self {
        HermitianMatrix(CMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        HermitianMatrix(CMatrix::zeros(n, n))
    }

    /// Rank-one `ψψᴴ`.
    pub fn outer(psi: &CVector) -> Self {
        HermitianMatrix(symmetrize(&(psi * psi.adjoint())))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eig(&self) -> (Vec<f64>, CMatrix) {
        hermitian_eig(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig().0.first().copied().unwrap_or(0.0)
    }
}

impl std::ops::Deref for HermitianMatrix {
    type Target = CMatrix;
    fn deref(&self) -> &CMatrix {
        &self.0
    }
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

fn hermitian_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut d: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            d = d.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    d
}

pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// Hermitian eigendecomposition, eigenvalues ascending.
pub fn hermitian_eig(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// Real symmetric eigendecomposition, eigenvalues ascending.
pub fn symmetric_eig(m: &RMatrix) -> (Vec<f64>, RMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), RMatrix::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vecs = RMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (vals, vecs)
}

/// `[[Re H, −Im H], [Im H, Re H]]`.
pub fn herm_real_embed(h: &HermitianMatrix) -> RMatrix {
    let n = h.dim();
    let mut out = RMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = h[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// Inverse of [`herm_real_embed`] (reads the top-left and bottom-left blocks).
pub fn herm_from_real_embed(r: &RMatrix) -> Result<HermitianMatrix> {
    if r.nrows() != r.ncols() || r.nrows() % 2 != 0 {
        return Err(Error::Dimension("embedding must be 2N x 2N".into()));
    }
    let n = r.nrows() / 2;
    let m = CMatrix::from_fn(n, n, |i, j| {
        C64::new(
            0.5 * (r[(i, j)] + r[(i + n, j + n)]),
            0.5 * (r[(i + n, j)] - r[(i, j + n)]),
        )
    });
    Ok(HermitianMatrix::project(&m))
}

/// Hermitian square root `S` with `S Sᴴ = H`; tiny negative eigenvalues are clamped.
pub fn psd_sqrt(h: &HermitianMatrix) -> Result<CMatrix> {
    let (vals, vecs) = h.eig();
    let n = vals.len();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let lmax = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let lmin = vals[0];
    if lmin < -PSD_TOL * lmax {
        return Err(Error::Indefinite {
            min: lmin,
            max: lmax,
        });
    }
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    Ok(&scaled * vecs.adjoint())
}

/// Projects onto the PSD cone by zeroing negative eigenvalues.
pub fn psd_project(h: &HermitianMatrix) -> HermitianMatrix {
    let (vals, vecs) = h.eig();
    let mut scaled = vecs.clone();
    for (j, &v) in vals.iter().enumerate() {
        let s = v.max(0.0);
        for i in 0..vals.len() {
            scaled[(i, j)] *= s;
        }
    }
    HermitianMatrix::project(&(&scaled * vecs.adjoint()))
}

/// `tr(AB)` without forming the product.
pub fn trace_prod(a: &CMatrix, b: &CMatrix) -> Result<C64> {
    if a.nrows() != b.ncols() || a.ncols() != b.nrows() {
        return Err(Error::Dimension(format!(
            "trace_prod: {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(tr_mul(a, b))
}

/// Unchecked `tr(AB)`.
pub(crate) fn tr_mul(a: &CMatrix, b: &CMatrix) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `tr(A Bᵀ) = Σ A_ij B_ij`.
pub fn tr_mul_t(a: &CMatrix, b: &CMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Inverts a symmetric 4×4 matrix after diagonal equilibration.
///
/// The reciprocal condition number is measured on `D^{-1/2} F D^{-1/2}` so that
/// the very different physical scales of angle and gain entries do not count
/// as ill-conditioning.
pub fn inv4(f: &Matrix4<f64>) -> Result<Matrix4<f64>> {
    if !f.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularFim(0.0));
    }
    let sym = (f + f.transpose()) * 0.5;
    let mut d = [0.0; 4];
    for i in 0..4 {
        if sym[(i, i)] <= 0.0 {
            return Err(Error::SingularFim(0.0));
        }
        d[i] = sym[(i, i)].sqrt();
    }
    let scaled = Matrix4::from_fn(|i, j| sym[(i, j)] / (d[i] * d[j]));
    let eig = scaled.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let lmin = eig
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let rcond = if lmax > 0.0 { lmin / lmax } else { 0.0 };
    if rcond < 1e-14 {
        return Err(Error::SingularFim(rcond));
    }
    let inv_scaled = eig.eigenvectors
        * Matrix4::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v))
        * eig.eigenvectors.transpose();
    let inv = Matrix4::from_fn(|i, j| inv_scaled[(i, j)] / (d[i] * d[j]));
    Ok((inv + inv.transpose()) * 0.5)
}

pub fn frob(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn diag_matrix(v: &CVector) -> CMatrix {
    CMatrix::from_diagonal(v)
}
