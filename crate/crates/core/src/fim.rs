//! Fisher information for the target parameters `ξ = [θ, φ, Re β, Im β]`.

use crate::error::{Error, Result};
use crate::numerics::{inv4, tr_mul, CMatrix, CVector, HermitianMatrix, C64, J};
use crate::scenario::{Link, ScenarioConfig};
use crate::steering::{steering_upa, Doa};
use nalgebra::{Cholesky, Matrix4};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SensingCase {
    AtBs,
    AtIrs,
}

impl SensingCase {
    pub fn label(&self) -> &'static str {
        match self {
            SensingCase::AtBs => "bs",
            SensingCase::AtIrs => "irs",
        }
    }
}

impl std::str::FromStr for SensingCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bs" | "atbs" => Ok(SensingCase::AtBs),
            "irs" | "atirs" => Ok(SensingCase::AtIrs),
            other => Err(Error::Config(format!("unknown sensing case '{other}'"))),
        }
    }
}

/// Real symmetric 4×4 FIM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fim4(pub Matrix4<f64>);

impl Fim4 {
    pub fn zeros() -> Self {
        Fim4(Matrix4::zeros())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Fim4(self.0 * c)
    }

    pub fn rel_diff(&self, other: &Fim4) -> f64 {
        (self.0 - other.0).norm() / other.0.norm().max(f64::MIN_POSITIVE)
    }
}

impl std::ops::Deref for Fim4 {
    type Target = Matrix4<f64>;
    fn deref(&self) -> &Matrix4<f64> {
        &self.0
    }
}

/// Noise powers and the number of symbols each IRS observes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FimParams {
    pub sigma_r2: f64,
    pub sigma_b2: f64,
    pub sigma_s2: f64,
    pub symbols: f64,
}

impl FimParams {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        FimParams {
            sigma_r2: cfg.sigma_r2,
            sigma_b2: cfg.sigma_b2,
            sigma_s2: cfg.sigma_s2,
            symbols: cfg.symbols_per_irs(),
        }
    }
}

pub(crate) fn inverse_pd(m: &CMatrix) -> Result<CMatrix> {
    let herm = crate::numerics::symmetrize(m);
    Cholesky::new(herm)
        .map(|c| c.inverse())
        .ok_or(Error::SingularCovariance)
}

/// `R_w = σ_r² Gᵀ Ψ Ψᴴ G* + σ_b² I`.
pub fn noise_cov_bs(psi: &CVector, g: &CMatrix, sigma_r2: f64, sigma_b2: f64) -> HermitianMatrix {
    let mut pg = g.clone();
    for (i, p) in psi.iter().enumerate() {
        pg.row_mut(i).scale_mut(p.norm());
    }
    let m = g.ncols();
    let r = pg.transpose() * pg.conjugate() * C64::new(sigma_r2, 0.0)
        + CMatrix::identity(m, m) * C64::new(sigma_b2, 0.0);
    HermitianMatrix::project(&r)
}

/// `R_w̄ = σ_r² |β|² tr(Θ) ā āᴴ + σ_s² I`.
pub fn noise_cov_irs(
    theta: &HermitianMatrix,
    beta: C64,
    abar: &CVector,
    sigma_r2: f64,
    sigma_s2: f64,
) -> HermitianMatrix {
    noise_cov_irs_tr(theta.trace(), beta, abar, sigma_r2, sigma_s2)
}

pub(crate) fn noise_cov_irs_tr(
    t: f64,
    beta: C64,
    abar: &CVector,
    sigma_r2: f64,
    sigma_s2: f64,
) -> HermitianMatrix {
    let n = abar.len();
    let r = abar * abar.adjoint() * C64::new(sigma_r2 * beta.norm_sqr() * t, 0.0)
        + CMatrix::identity(n, n) * C64::new(sigma_s2, 0.0);
    HermitianMatrix::project(&r)
}

/// `Ψ G` with `Ψ = Diag(ψ)`.
pub fn psi_g(psi: &CVector, g: &CMatrix) -> CMatrix {
    let mut pg = g.clone();
    for (i, p) in psi.iter().enumerate() {
        for v in pg.row_mut(i).iter_mut() {
            *v *= *p;
        }
    }
    pg
}

/// Coefficient `α` with `F_rs = Re(α · t_ij)` for the upper triangle, where
/// `t_ij = tr(X_iᴴ W X_j R_s)` over `X ∈ {X_θ, X_φ, X_β}`.
pub(crate) fn entry_map(beta: C64, c: f64) -> Vec<((usize, usize), (usize, usize), C64)> {
    let b2 = C64::new(c * beta.norm_sqr(), 0.0);
    let bc = beta.conj() * c;
    vec![
        ((0, 0), (0, 0), b2),
        ((0, 1), (0, 1), b2),
        ((1, 1), (1, 1), b2),
        ((0, 2), (0, 2), bc),
        ((0, 3), (0, 2), J * bc),
        ((1, 2), (1, 2), bc),
        ((1, 3), (1, 2), J * bc),
        ((2, 2), (2, 2), C64::new(c, 0.0)),
        ((3, 3), (2, 2), C64::new(c, 0.0)),
    ]
}

fn mean_block(x: [&CMatrix; 3], w: &CMatrix, r_s: &CMatrix, beta: C64, c: f64) -> Matrix4<f64> {
    let wx: Vec<CMatrix> = x.iter().map(|xi| w * *xi * r_s).collect();
    let mut f = Matrix4::zeros();
    for ((r, s), (i, j), alpha) in entry_map(beta, c) {
        let t = tr_mul(&x[i].adjoint(), &wx[j]);
        f[(r, s)] = (alpha * t).re;
        f[(s, r)] = f[(r, s)];
    }
    f
}

/// FIM that is affine in a Hermitian matrix variable `X`:
/// `F_rs(X) = constant_rs + Re Σ_ab C_rs[a, b] X[a, b]`.
#[derive(Debug, Clone)]
pub struct AffineFim {
    pub constant: Matrix4<f64>,
    /// Row-major `4 × 4` grid of coefficient matrices.
    pub coeffs: Vec<CMatrix>,
}

impl AffineFim {
    pub fn zeros(n: usize) -> Self {
        AffineFim {
            constant: Matrix4::zeros(),
            coeffs: vec![CMatrix::zeros(n, n); 16],
        }
    }

    pub fn coeff(&self, r: usize, s: usize) -> &CMatrix {
        &self.coeffs[r * 4 + s]
    }

    pub fn eval(&self, x: &CMatrix) -> Fim4 {
        let f = Matrix4::from_fn(|r, s| {
            self.constant[(r, s)] + crate::numerics::tr_mul_t(&self.coeffs[r * 4 + s], x).re
        });
        symmetrize4(f)
    }

    pub(crate) fn set(&mut self, r: usize, s: usize, constant: f64, coeff: CMatrix) {
        self.constant[(r, s)] = constant;
        self.constant[(s, r)] = constant;
        self.coeffs[s * 4 + r] = coeff.clone();
        self.coeffs[r * 4 + s] = coeff;
    }
}

/// Derivative matrices of the mean map, the inverse noise covariance and
/// (sensing at the IRS) the covariance-derivative block.
fn derivative_mats(
    case: SensingCase,
    psi: &CVector,
    link: &Link,
    p: &FimParams,
) -> Result<([CMatrix; 3], CMatrix, Matrix4<f64>)> {
    let pg = psi_g(psi, &link.g);
    let a = &link.reflect.a;
    let at = a.transpose();
    match case {
        SensingCase::AtBs => {
            let w = inverse_pd(&noise_cov_bs(psi, &link.g, p.sigma_r2, p.sigma_b2))?;
            let gtp = pg.transpose();
            let mid = |u: &CMatrix| &gtp * u * &pg;
            let c_theta =
                mid(&(&link.reflect.da_theta * &at + a * link.reflect.da_theta.transpose()));
            let c_phi = mid(&(&link.reflect.da_phi * &at + a * link.reflect.da_phi.transpose()));
            let h = mid(&(a * &at));
            Ok(([c_theta, c_phi, h], w, Matrix4::zeros()))
        }
        SensingCase::AtIrs => {
            let t = psi.norm_squared();
            let w = inverse_pd(&noise_cov_irs_tr(
                t,
                link.beta,
                &link.sensor.a,
                p.sigma_r2,
                p.sigma_s2,
            ))?;
            let ab = &link.sensor.a;
            let c_theta =
                (&link.sensor.da_theta * &at + ab * link.reflect.da_theta.transpose()) * &pg;
            let c_phi = (&link.sensor.da_phi * &at + ab * link.reflect.da_phi.transpose()) * &pg;
            let h = ab * &at * &pg;
            let cov = irs_cov_block(&w, link, t, p);
            Ok(([c_theta, c_phi, h], w, cov))
        }
    }
}

/// The FIM as an affine function of the transmit covariance `R_s`, with the
/// reflection coefficients held fixed.
pub fn fim_affine_in_rs(
    case: SensingCase,
    psi: &CVector,
    link: &Link,
    p: &FimParams,
) -> Result<AffineFim> {
    let (x, w, cov) = derivative_mats(case, psi, link, p)?;
    let wx: Vec<CMatrix> = x.iter().map(|xi| &w * xi).collect();
    let mut out = AffineFim::zeros(link.m());
    out.constant = cov;
    for ((r, s), (i, j), alpha) in entry_map(link.beta, 2.0 * p.symbols) {
        // tr(K R) = Σ K_ba R_ab
        let k = x[i].adjoint() * &wx[j];
        out.set(r, s, cov[(r, s)], k.transpose() * alpha);
    }
    Ok(out)
}

fn symmetrize4(f: Matrix4<f64>) -> Fim4 {
    Fim4((f + f.transpose()) * 0.5)
}

/// Closed-form FIM when the BS receives the echo.
pub fn fim_bs(r_s: &CMatrix, psi: &CVector, link: &Link, p: &FimParams) -> Result<Fim4> {
    let (x, w, _) = derivative_mats(SensingCase::AtBs, psi, link, p)?;
    Ok(symmetrize4(mean_block(
        [&x[0], &x[1], &x[2]],
        &w,
        r_s,
        link.beta,
        2.0 * p.symbols,
    )))
}

/// Covariance-derivative part of the FIM at the IRS sensors.
pub(crate) fn irs_cov_block(w: &CMatrix, link: &Link, t: f64, p: &FimParams) -> Matrix4<f64> {
    let ab = &link.sensor.a;
    let d = ab * ab.adjoint();
    let b_of = |da: &CVector| da * ab.adjoint() + ab * da.adjoint();
    let bt = b_of(&link.sensor.da_theta);
    let bp = b_of(&link.sensor.da_phi);
    let wb = [w * &bt, w * &bp, w * &d];
    let mut tr = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            tr[i][j] = tr_mul(&wb[i], &wb[j]).re;
        }
    }
    let beta = link.beta;
    let b2 = beta.norm_sqr();
    let k = p.symbols * (p.sigma_r2 * t).powi(2);
    let bv = [beta.re, beta.im];
    let mut f = Matrix4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            f[(i, j)] = k * b2 * b2 * tr[i][j];
            f[(i, 2 + j)] = k * b2 * 2.0 * bv[j] * tr[i][2];
            f[(2 + j, i)] = f[(i, 2 + j)];
            f[(2 + i, 2 + j)] = k * 4.0 * bv[i] * bv[j] * tr[2][2];
        }
    }
    f
}

/// Closed-form FIM when dedicated sensors at the IRS receive the echo.
pub fn fim_irs(r_s: &CMatrix, psi: &CVector, link: &Link, p: &FimParams) -> Result<Fim4> {
    let (x, w, cov) = derivative_mats(SensingCase::AtIrs, psi, link, p)?;
    let mean = mean_block([&x[0], &x[1], &x[2]], &w, r_s, link.beta, 2.0 * p.symbols);
    Ok(symmetrize4(mean + cov))
}

pub fn fim(
    case: SensingCase,
    r_s: &CMatrix,
    psi: &CVector,
    link: &Link,
    p: &FimParams,
) -> Result<Fim4> {
    match case {
        SensingCase::AtBs => fim_bs(r_s, psi, link, p),
        SensingCase::AtIrs => fim_irs(r_s, psi, link, p),
    }
}

/// `tr(F⁻¹)`.
pub fn crb(f: &Fim4) -> Result<f64> {
    let inv = inv4(&f.0)?;
    Ok(inv.trace())
}

/// Finite-difference Gaussian FIM for `y ~ CN(M(ξ) s, R(ξ))` with `E[ssᴴ] = R_s`,
/// summed over `symbols` independent snapshots.
///
/// Returns the full FIM and its covariance-derivative part.
pub fn gaussian_fim_fd<F>(
    xi: &[f64],
    model: F,
    r_s: &CMatrix,
    symbols: f64,
    h: f64,
) -> Result<(nalgebra::DMatrix<f64>, nalgebra::DMatrix<f64>)>
where
    F: Fn(&[f64]) -> (CMatrix, CMatrix),
{
    let k = xi.len();
    let (_, r0) = model(xi);
    let w = inverse_pd(&r0)?;
    let mut dm = Vec::with_capacity(k);
    let mut dr = Vec::with_capacity(k);
    for p in 0..k {
        let step = h * xi[p].abs().max(1.0);
        let mut plus = xi.to_vec();
        let mut minus = xi.to_vec();
        plus[p] += step;
        minus[p] -= step;
        let (mp, rp) = model(&plus);
        let (mm, rm) = model(&minus);
        let scale = C64::new(1.0 / (2.0 * step), 0.0);
        dm.push((mp - mm) * scale);
        dr.push(w.clone() * (rp - rm) * scale);
    }
    let mut full = nalgebra::DMatrix::zeros(k, k);
    let mut cov = nalgebra::DMatrix::zeros(k, k);
    for p in 0..k {
        let wdm = &w * &dm[p] * r_s;
        for q in 0..k {
            let c = symbols * tr_mul(&dr[p], &dr[q]).re;
            let m = symbols * 2.0 * tr_mul(&dm[q].adjoint(), &wdm).re;
            cov[(p, q)] = c;
            full[(p, q)] = c + m;
        }
    }
    let full = (&full + full.transpose()) * 0.5;
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok((full, cov))
}

/// Definitional FIM of one IRS link built from the signal model directly.
///
/// The steering vectors are recomputed from the array geometry at each
/// perturbed angle, so the closed forms are checked independently.
pub fn fim_numeric_oracle(
    case: SensingCase,
    r_s: &CMatrix,
    psi: &CVector,
    link: &Link,
    p: &FimParams,
    h: f64,
) -> Result<(Fim4, f64)> {
    if !(1e-7..=1e-4).contains(&h) {
        return Err(Error::Config(format!(
            "finite-difference step {h} outside [1e-7, 1e-4]"
        )));
    }
    let xi = [link.doa.theta, link.doa.phi, link.beta.re, link.beta.im];
    let pg = psi_g(psi, &link.g);
    let n_bar = link.sensor_geom.len();
    let rw_bs = noise_cov_bs(psi, &link.g, p.sigma_r2, p.sigma_b2).into_inner();
    let model = |x: &[f64]| -> (CMatrix, CMatrix) {
        let doa = Doa::new(x[0], x[1]);
        let beta = C64::new(x[2], x[3]);
        let a = steering_upa(&link.reflect_geom, &doa);
        match case {
            SensingCase::AtBs => {
                let e = crate::steering::target_response_bs(beta, &a);
                (pg.transpose() * e * &pg, rw_bs.clone())
            }
            SensingCase::AtIrs => {
                let ab = steering_upa(&link.sensor_geom, &doa);
                let e = crate::steering::target_response_irs(beta, &ab, &a);
                let mean = &e * &pg;
                let ep = psi_g(psi, &e.transpose()).transpose();
                let cov = &ep * ep.adjoint() * C64::new(p.sigma_r2, 0.0)
                    + CMatrix::identity(n_bar, n_bar) * C64::new(p.sigma_s2, 0.0);
                (mean, cov)
            }
        }
    };
    let (full, cov) = gaussian_fim_fd(&xi, model, r_s, p.symbols, h)?;
    let f = Matrix4::from_fn(|i, j| full[(i, j)]);
    Ok((Fim4(f), cov.norm()))
}
