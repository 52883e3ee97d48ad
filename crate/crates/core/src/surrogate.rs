//! Lifted (`Θ = ψψᴴ`) FIM and power expressions and their first-order surrogates.
//!
//! Affine functionals of a Hermitian variable `Θ` are stored as a coefficient
//! matrix `C` with value `Re Σ_ab C_ab Θ_ab`. Under this convention
//! `tr(KΘ)` has coefficient `Kᵀ` and `tr(LΘᵀ)` has coefficient `L`.

use crate::error::{Error, Result};
use crate::fim::{
    entry_map, inverse_pd, irs_cov_block, noise_cov_irs_tr, AffineFim, Fim4, FimParams, SensingCase,
};
use crate::numerics::{tr_mul_t, CMatrix, CVector, HermitianMatrix, C64};
use crate::scenario::Link;
use nalgebra::Matrix4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QKind {
    ThetaTheta,
    PhiPhi,
    ThetaPhi,
    ThetaBeta,
    PhiBeta,
    BetaBeta,
}

impl QKind {
    pub const ALL: [QKind; 6] = [
        QKind::ThetaTheta,
        QKind::PhiPhi,
        QKind::ThetaPhi,
        QKind::ThetaBeta,
        QKind::PhiBeta,
        QKind::BetaBeta,
    ];

    fn pair(self) -> (usize, usize) {
        match self {
            QKind::ThetaTheta => (0, 0),
            QKind::PhiPhi => (1, 1),
            QKind::ThetaPhi => (0, 1),
            QKind::ThetaBeta => (0, 2),
            QKind::PhiBeta => (1, 2),
            QKind::BetaBeta => (2, 2),
        }
    }

    fn from_pair(i: usize, j: usize) -> QKind {
        match (i.min(j), i.max(j)) {
            (0, 0) => QKind::ThetaTheta,
            (1, 1) => QKind::PhiPhi,
            (0, 1) => QKind::ThetaPhi,
            (0, 2) => QKind::ThetaBeta,
            (1, 2) => QKind::PhiBeta,
            _ => QKind::BetaBeta,
        }
    }
}

impl std::str::FromStr for QKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tt" | "theta_theta" => QKind::ThetaTheta,
            "pp" | "phi_phi" => QKind::PhiPhi,
            "tp" | "theta_phi" => QKind::ThetaPhi,
            "tb" | "theta_beta" => QKind::ThetaBeta,
            "pb" | "phi_beta" => QKind::PhiBeta,
            "bb" | "beta_beta" => QKind::BetaBeta,
            other => return Err(Error::UnknownKind(other.to_string())),
        })
    }
}

/// One summand of a Q-term.
#[derive(Debug, Clone)]
enum Term {
    /// `tr(KΘ) · tr(LΘᵀ)`
    Bilinear { k: CMatrix, l: CMatrix },
    /// `s · tr(LΘᵀ)`
    Linear { s: C64, l: CMatrix },
}

impl Term {
    fn value(&self, theta: &CMatrix) -> C64 {
        match self {
            Term::Bilinear { k, l } => tr_mul_t(&k.transpose(), theta) * tr_mul_t(l, theta),
            Term::Linear { s, l } => s * tr_mul_t(l, theta),
        }
    }

    fn grad(&self, theta: &CMatrix) -> CMatrix {
        match self {
            Term::Bilinear { k, l } => {
                let kt = k.transpose();
                let lv = tr_mul_t(&kt, theta);
                let mv = tr_mul_t(l, theta);
                kt * mv + l * lv
            }
            Term::Linear { s, l } => l * *s,
        }
    }
}

/// Everything the Q-terms need, evaluated with the noise covariance frozen
/// at the local point `Θ⁽ⁱ⁾`.
#[derive(Debug, Clone)]
pub struct SurrogateContext {
    pub case: SensingCase,
    pub anchor: HermitianMatrix,
    /// `A G R_s Gᴴ Aᴴ`
    pub r1: CMatrix,
    /// `Aᴴ G* W Gᵀ A` (sensing at the BS) or `W` itself (sensing at the IRS)
    pub r2: CMatrix,
    pub w: CMatrix,
    pub beta: C64,
    pub params: FimParams,
    cov_unit: Matrix4<f64>,
    terms: Vec<Vec<Term>>,
}

/// `R_w` of the lifted model: `σ_r² Gᵀ Diag(Θ) G* + σ_b² I`.
pub fn lifted_noise_cov_bs(
    theta: &CMatrix,
    g: &CMatrix,
    sigma_r2: f64,
    sigma_b2: f64,
) -> HermitianMatrix {
    let m = g.ncols();
    let mut dg = g.clone();
    for i in 0..g.nrows() {
        let d = theta[(i, i)].re;
        for v in dg.row_mut(i).iter_mut() {
            *v *= d;
        }
    }
    let r = g.transpose() * dg.conjugate() * C64::new(sigma_r2, 0.0)
        + CMatrix::identity(m, m) * C64::new(sigma_b2, 0.0);
    HermitianMatrix::project(&r)
}

fn scale_rows(m: &CMatrix, d: &CVector) -> CMatrix {
    let mut out = m.clone();
    for i in 0..m.nrows() {
        for v in out.row_mut(i).iter_mut() {
            *v *= d[i];
        }
    }
    out
}

fn scale_cols(m: &CMatrix, d: &CVector) -> CMatrix {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        for v in out.column_mut(j).iter_mut() {
            *v *= d[j];
        }
    }
    out
}

/// `diag(p)ᴴ X diag(q)`
fn sandwich(p: &CVector, x: &CMatrix, q: &CVector) -> CMatrix {
    scale_cols(&scale_rows(x, &p.conjugate()), q)
}

impl SurrogateContext {
    pub fn new(
        case: SensingCase,
        anchor: &HermitianMatrix,
        r_s: &CMatrix,
        link: &Link,
        params: &FimParams,
    ) -> Result<Self> {
        let n = link.n();
        let a = &link.reflect.a;
        let ag = scale_rows(&link.g, a);
        let r1 = &ag * r_s * ag.adjoint();
        let one = CVector::from_element(n, C64::new(1.0, 0.0));
        let zt = &link.reflect.z_theta;
        let zp = &link.reflect.z_phi;
        // (P, Q) diagonal pairs for X_θ, X_φ, X_β
        let pq: [Vec<(&CVector, &CVector)>; 3] = [
            vec![(zt, &one), (&one, zt)],
            vec![(zp, &one), (&one, zp)],
            vec![(&one, &one)],
        ];
        let t_anchor = anchor.trace();
        let (w, r2, cov_unit) = match case {
            SensingCase::AtBs => {
                let w = inverse_pd(&lifted_noise_cov_bs(
                    anchor,
                    &link.g,
                    params.sigma_r2,
                    params.sigma_b2,
                ))?;
                let r2 = ag.conjugate() * &w * ag.transpose();
                (w, r2, Matrix4::zeros())
            }
            SensingCase::AtIrs => {
                let w = inverse_pd(&noise_cov_irs_tr(
                    t_anchor,
                    link.beta,
                    &link.sensor.a,
                    params.sigma_r2,
                    params.sigma_s2,
                ))?;
                let cov = irs_cov_block(&w, link, 1.0, params);
                (w.clone(), w, cov)
            }
        };
        let ab = &link.sensor.a;
        let vecs: [Vec<&CVector>; 3] = [
            vec![&link.sensor.da_theta, ab],
            vec![&link.sensor.da_phi, ab],
            vec![ab],
        ];
        let mut terms = Vec::with_capacity(6);
        for kind in QKind::ALL {
            let (i, j) = kind.pair();
            let mut list = Vec::new();
            for (x, &(p, q)) in pq[i].iter().enumerate() {
                for (y, &(p2, q2)) in pq[j].iter().enumerate() {
                    let l = sandwich(&q2.conjugate(), &r1, &q.conjugate());
                    match case {
                        SensingCase::AtBs => list.push(Term::Bilinear {
                            k: sandwich(p, &r2, p2),
                            l,
                        }),
                        SensingCase::AtIrs => {
                            let s = (vecs[i][x].adjoint() * &w * vecs[j][y])[(0, 0)];
                            list.push(Term::Linear { s, l });
                        }
                    }
                }
            }
            terms.push(list);
        }
        Ok(SurrogateContext {
            case,
            anchor: anchor.clone(),
            r1,
            r2,
            w,
            beta: link.beta,
            params: *params,
            cov_unit,
            terms,
        })
    }

    fn kind_index(kind: QKind) -> usize {
        QKind::ALL.iter().position(|k| *k == kind).unwrap()
    }

    /// `Q_kind(Θ)`
    pub fn q_value(&self, kind: QKind, theta: &CMatrix) -> C64 {
        self.terms[Self::kind_index(kind)]
            .iter()
            .map(|t| t.value(theta))
            .sum()
    }

    /// Gradient of `Q_kind` at `Θ`.
    pub fn q_grad(&self, kind: QKind, theta: &CMatrix) -> CMatrix {
        let n = theta.nrows();
        self.terms[Self::kind_index(kind)]
            .iter()
            .fold(CMatrix::zeros(n, n), |acc, t| acc + t.grad(theta))
    }

    /// FIM at `Θ` with the noise covariance frozen at the anchor.
    pub fn fim_frozen(&self, theta: &CMatrix) -> Fim4 {
        let mut f = Matrix4::zeros();
        for ((r, s), (i, j), alpha) in entry_map(self.beta, 2.0 * self.params.symbols) {
            let q = self.q_value(QKind::from_pair(i, j), theta);
            f[(r, s)] = (alpha * q).re;
            f[(s, r)] = f[(r, s)];
        }
        let t = theta.trace().re;
        Fim4(f + self.cov_unit * (t * t))
    }

    /// First-order surrogate of the FIM around the anchor.
    pub fn fim_linearized(&self) -> AffineFim {
        let th = self.anchor.as_matrix();
        let n = th.nrows();
        let t0 = self.anchor.trace();
        let mut out = AffineFim::zeros(n);
        let eye = CMatrix::identity(n, n);
        for ((r, s), (i, j), alpha) in entry_map(self.beta, 2.0 * self.params.symbols) {
            let kind = QKind::from_pair(i, j);
            let q0 = self.q_value(kind, th);
            let g = self.q_grad(kind, th);
            let constant = (alpha * (q0 - tr_mul_t(&g, th))).re;
            // (tr Θ)² ≈ 2 t₀ tr Θ − t₀²
            let cov = self.cov_unit[(r, s)];
            out.set(
                r,
                s,
                constant - cov * t0 * t0,
                g * alpha + &eye * C64::new(2.0 * t0 * cov, 0.0),
            );
        }
        out
    }
}

/// FIM of the lifted model with the noise covariance evaluated at `Θ`.
/// Equals the closed form at rank-one `Θ = ψψᴴ`.
pub fn fim_lifted(
    case: SensingCase,
    theta: &HermitianMatrix,
    r_s: &CMatrix,
    link: &Link,
    p: &FimParams,
) -> Result<Fim4> {
    Ok(SurrogateContext::new(case, theta, r_s, link, p)?.fim_frozen(theta))
}

/// Real affine functional `c0 + Re Σ C_ab X_ab`.
#[derive(Debug, Clone)]
pub struct AffineScalar {
    pub constant: f64,
    pub coeff: CMatrix,
}

impl AffineScalar {
    pub fn eval(&self, x: &CMatrix) -> f64 {
        self.constant + tr_mul_t(&self.coeff, x).re
    }
}

fn gram_diag(link: &Link, r_s: &CMatrix) -> CMatrix {
    let grg = &link.g * r_s * link.g.adjoint();
    CMatrix::from_diagonal(&grg.diagonal().map(|z| C64::new(z.re, 0.0)))
}

/// Terms of the IRS power for sensing at the BS.
struct BsPowerParts {
    /// `tr(AᴴAΘ)`
    l1: f64,
    /// `tr(R₁Θᵀ)`
    m1: f64,
    aha_t: CMatrix,
    r1: CMatrix,
    lin: CMatrix,
}

fn bs_power_parts(theta: &CMatrix, r_s: &CMatrix, link: &Link, sigma_r2: f64) -> BsPowerParts {
    let n = link.n();
    let a = &link.reflect.a;
    let ag = scale_rows(&link.g, a);
    let r1 = &ag * r_s * ag.adjoint();
    let aha = CMatrix::from_diagonal(&a.map(|z| C64::new(z.norm_sqr(), 0.0)));
    let aha_t = aha.transpose();
    let l1 = tr_mul_t(&aha_t, theta).re;
    let m1 = tr_mul_t(&r1, theta).re;
    let lin = gram_diag(link, r_s) + CMatrix::identity(n, n) * C64::new(2.0 * sigma_r2, 0.0);
    BsPowerParts {
        l1,
        m1,
        aha_t,
        r1,
        lin,
    }
}

/// IRS transmit power for sensing at the BS, lifted form.
pub fn power_bs_exact(theta: &CMatrix, r_s: &CMatrix, link: &Link, sigma_r2: f64) -> f64 {
    let p = bs_power_parts(theta, r_s, link, sigma_r2);
    let b2 = link.beta.norm_sqr();
    b2 * p.l1 * p.m1 + sigma_r2 * b2 * p.l1 * p.l1 + tr_mul_t(&p.lin, theta).re
}

/// Same power from the signal model `x₁ = Ψ(Gs + z₁)`, `x₂ = Ψ(E x₁ + z₂)`.
pub fn power_bs_matrix(psi: &CVector, r_s: &CMatrix, link: &Link, sigma_r2: f64) -> f64 {
    let n = link.n();
    let pg = crate::fim::psi_g(psi, &link.g);
    let first = (&pg * r_s * pg.adjoint()).trace().re + sigma_r2 * psi.norm_squared();
    let e = crate::steering::target_response_bs(link.beta, &link.reflect.a);
    let pep = crate::fim::psi_g(psi, &crate::fim::psi_g(psi, &e).transpose()).transpose();
    let cov_in =
        &link.g * r_s * link.g.adjoint() + CMatrix::identity(n, n) * C64::new(sigma_r2, 0.0);
    let second = (&pep * cov_in * pep.adjoint()).trace().re + sigma_r2 * psi.norm_squared();
    first + second
}

/// First-order surrogate of [`power_bs_exact`] around `anchor`.
pub fn power_bs_linearized(
    anchor: &CMatrix,
    r_s: &CMatrix,
    link: &Link,
    sigma_r2: f64,
) -> AffineScalar {
    let p = bs_power_parts(anchor, r_s, link, sigma_r2);
    let b2 = link.beta.norm_sqr();
    let grad = (&p.aha_t * C64::new(b2 * p.m1 + 2.0 * sigma_r2 * b2 * p.l1, 0.0))
        + &p.r1 * C64::new(b2 * p.l1, 0.0);
    let value = power_bs_exact(anchor, r_s, link, sigma_r2);
    let coeff = grad + p.lin;
    AffineScalar {
        constant: value - tr_mul_t(&coeff, anchor).re,
        coeff,
    }
}

/// IRS transmit power when the IRS senses: `tr(G R_s Gᴴ Diag Θ) + σ_r² tr Θ`.
pub fn power_irs_exact(theta: &CMatrix, r_s: &CMatrix, link: &Link, sigma_r2: f64) -> f64 {
    power_irs_affine(r_s, link, sigma_r2).eval(theta)
}

pub fn power_irs_affine(r_s: &CMatrix, link: &Link, sigma_r2: f64) -> AffineScalar {
    let n = link.n();
    AffineScalar {
        constant: 0.0,
        coeff: gram_diag(link, r_s) + CMatrix::identity(n, n) * C64::new(sigma_r2, 0.0),
    }
}

pub fn power_exact(
    case: SensingCase,
    theta: &CMatrix,
    r_s: &CMatrix,
    link: &Link,
    sigma_r2: f64,
) -> f64 {
    match case {
        SensingCase::AtBs => power_bs_exact(theta, r_s, link, sigma_r2),
        SensingCase::AtIrs => power_irs_exact(theta, r_s, link, sigma_r2),
    }
}

/// IRS power as an affine function of `R_s` with `Θ` fixed.
pub fn power_affine_in_rs(
    case: SensingCase,
    theta: &CMatrix,
    link: &Link,
    sigma_r2: f64,
) -> AffineScalar {
    let t = theta.trace().re;
    let diag = CMatrix::from_diagonal(&theta.diagonal().map(|z| C64::new(z.re, 0.0)));
    // tr(R_s K) = Σ K_ba R_ab
    let k2 = link.g.adjoint() * diag * &link.g;
    match case {
        SensingCase::AtIrs => AffineScalar {
            constant: sigma_r2 * t,
            coeff: k2.transpose(),
        },
        SensingCase::AtBs => {
            let a = &link.reflect.a;
            let ag = scale_rows(&link.g, a);
            let l1 = a
                .iter()
                .zip(theta.diagonal().iter())
                .map(|(x, d)| x.norm_sqr() * d.re)
                .sum::<f64>();
            let b2 = link.beta.norm_sqr();
            let k1 = ag.adjoint() * theta.transpose() * &ag;
            AffineScalar {
                constant: sigma_r2 * b2 * l1 * l1 + 2.0 * sigma_r2 * t,
                coeff: (k1 * C64::new(b2 * l1, 0.0) + k2).transpose(),
            }
        }
    }
}
