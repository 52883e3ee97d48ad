//! Small dense conic solver and the LMI builders used by the optimizer.
//!
//! A [`ConicProgram`] is stored in primal standard form
//!
//! ```text
//! minimize cᵀx  subject to  A x = b,  x ∈ K
//! ```
//!
//! with `K` a product of free, nonnegative and PSD blocks (PSD blocks in `svec`
//! layout: lower triangle column by column, off-diagonals scaled by √2). The
//! solver works on the dual `max bᵀy s.t. c − Aᵀy ∈ K*` written in inequality
//! form and runs a homogeneous self-dual interior-point method with
//! Nesterov-Todd scaling and a Mehrotra predictor-corrector.

use crate::error::{Error, Result};
use crate::numerics::{symmetric_eig, RMatrix};
use nalgebra::{Cholesky, DMatrix, DVector, SVD};
use std::fmt::Write as _;

pub type RVector = DVector<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Free(usize),
    NonNeg(usize),
    /// Symmetric `k × k` PSD block stored as `k(k+1)/2` svec entries.
    Psd(usize),
}

impl Cone {
    pub fn len(&self) -> usize {
        match *self {
            Cone::Free(n) | Cone::NonNeg(n) => n,
            Cone::Psd(k) => k * (k + 1) / 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct ConicProgram {
    pub c: RVector,
    pub a: DMatrix<f64>,
    pub b: RVector,
    pub cones: Vec<Cone>,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: Status,
    pub x: RVector,
    pub y: RVector,
    pub s: RVector,
    pub objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Packs a symmetric matrix.
pub fn svec(m: &RMatrix) -> Vec<f64> {
    let k = m.nrows();
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for j in 0..k {
        out.push(m[(j, j)]);
        for i in j + 1..k {
            out.push(SQRT2 * 0.5 * (m[(i, j)] + m[(j, i)]));
        }
    }
    out
}

pub fn smat(v: &[f64], k: usize) -> RMatrix {
    let mut m = RMatrix::zeros(k, k);
    let mut p = 0;
    for j in 0..k {
        m[(j, j)] = v[p];
        p += 1;
        for i in j + 1..k {
            let x = v[p] / SQRT2;
            m[(i, j)] = x;
            m[(j, i)] = x;
            p += 1;
        }
    }
    m
}

impl ConicProgram {
    pub fn dim(&self) -> usize {
        self.cones.iter().map(Cone::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.c.len() != n || self.a.ncols() != n || self.a.nrows() != self.b.len() {
            return Err(Error::Dimension(format!(
                "conic program: c {} A {}x{} b {} cones {}",
                self.c.len(),
                self.a.nrows(),
                self.a.ncols(),
                self.b.len(),
                n
            )));
        }
        Ok(())
    }

    /// Plain-text dump: header lines `cones`, `c`, `b`, then `A` as `row col value` triplets.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let cones: Vec<String> = self
            .cones
            .iter()
            .map(|c| match c {
                Cone::Free(n) => format!("f{n}"),
                Cone::NonNeg(n) => format!("l{n}"),
                Cone::Psd(k) => format!("s{k}"),
            })
            .collect();
        let _ = writeln!(
            out,
            "# min c'x s.t. Ax = b, x in K (svec, sqrt2 off-diagonal scaling)"
        );
        let _ = writeln!(out, "cones {}", cones.join(" "));
        let _ = writeln!(out, "dims {} {}", self.a.nrows(), self.a.ncols());
        let join = |v: &RVector| {
            v.iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "c {}", join(&self.c));
        let _ = writeln!(out, "b {}", join(&self.b));
        for i in 0..self.a.nrows() {
            for j in 0..self.a.ncols() {
                let v = self.a[(i, j)];
                if v != 0.0 {
                    let _ = writeln!(out, "A {i} {j} {v:e}");
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
enum Blk {
    Lp { off: usize, n: usize },
    Psd { off: usize, k: usize },
}

enum Scal {
    Lp {
        w: Vec<f64>,
        lam: Vec<f64>,
    },
    /// `p = R Rᵀ` and `q = p⁻¹` are cached.
    Psd {
        r: RMatrix,
        rinv: RMatrix,
        p: RMatrix,
        q: RMatrix,
        lam: Vec<f64>,
    },
}

/// Inequality-form problem `min cᵀx s.t. Gx + s = h, Ax = b, s ∈ K`.
struct Inner {
    c: RVector,
    g: DMatrix<f64>,
    h: RVector,
    a: DMatrix<f64>,
    b: RVector,
    blocks: Vec<Blk>,
    /// Per PSD block (in `blocks` order), per column: nonzero entries of the full matrix.
    psd_cols: Vec<Vec<Vec<(usize, usize, f64)>>>,
    /// Active columns of `G` for PSD blocks whose columns are mostly dense.
    psd_dense: Vec<Option<DMatrix<f64>>>,
    degree: usize,
}

fn block_slice(v: &RVector, off: usize, len: usize) -> &[f64] {
    &v.as_slice()[off..off + len]
}

impl Inner {
    fn nk(&self) -> usize {
        self.h.len()
    }

    fn map_blocks(
        &self,
        u: &RVector,
        mut f: impl FnMut(usize, &Blk, &[f64]) -> Vec<f64>,
    ) -> RVector {
        let mut out = RVector::zeros(u.len());
        for (bi, blk) in self.blocks.iter().enumerate() {
            let (off, len) = match *blk {
                Blk::Lp { off, n } => (off, n),
                Blk::Psd { off, k } => (off, k * (k + 1) / 2),
            };
            let r = f(bi, blk, block_slice(u, off, len));
            out.as_mut_slice()[off..off + len].copy_from_slice(&r);
        }
        out
    }

    fn identity(&self) -> RVector {
        let e = RVector::zeros(self.nk());
        self.map_blocks(&e, |_, blk, _| match *blk {
            Blk::Lp { n, .. } => vec![1.0; n],
            Blk::Psd { k, .. } => svec(&RMatrix::identity(k, k)),
        })
    }

    /// Smallest eigenvalue over all blocks.
    fn min_eig(&self, u: &RVector) -> f64 {
        let mut m = f64::INFINITY;
        for blk in &self.blocks {
            match *blk {
                Blk::Lp { off, n } => {
                    for &x in block_slice(u, off, n) {
                        m = m.min(x);
                    }
                }
                Blk::Psd { off, k } => {
                    let (vals, _) = symmetric_eig(&smat(block_slice(u, off, k * (k + 1) / 2), k));
                    m = m.min(vals[0]);
                }
            }
        }
        m
    }

    fn scaling(&self, s: &RVector, z: &RVector) -> Option<Vec<Scal>> {
        let mut out = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            match *blk {
                Blk::Lp { off, n } => {
                    let ss = block_slice(s, off, n);
                    let zz = block_slice(z, off, n);
                    if ss.iter().chain(zz).any(|&v| !(v > 0.0)) {
                        return None;
                    }
                    let w = ss.iter().zip(zz).map(|(a, b)| (a / b).sqrt()).collect();
                    let lam = ss.iter().zip(zz).map(|(a, b)| (a * b).sqrt()).collect();
                    out.push(Scal::Lp { w, lam });
                }
                Blk::Psd { off, k } => {
                    let len = k * (k + 1) / 2;
                    let sm = smat(block_slice(s, off, len), k);
                    let zm = smat(block_slice(z, off, len), k);
                    let ls = Cholesky::new(sm)?.l();
                    let lz = Cholesky::new(zm)?.l();
                    let svd = SVD::new(lz.transpose() * &ls, true, true);
                    let u = svd.u?;
                    let vt = svd.v_t?;
                    let sig = svd.singular_values;
                    if sig.iter().any(|&x| !(x > 0.0)) {
                        return None;
                    }
                    let isq = RMatrix::from_diagonal(&sig.map(|x| 1.0 / x.sqrt()));
                    let r = &ls * vt.transpose() * &isq;
                    // R⁻¹ = Σ^{-1/2} Uᵀ L_zᵀ
                    let rinv = &isq * u.transpose() * lz.transpose();
                    let p = &r * r.transpose();
                    let q = rinv.transpose() * &rinv;
                    out.push(Scal::Psd {
                        r,
                        rinv,
                        p,
                        q,
                        lam: sig.iter().copied().collect(),
                    });
                }
            }
        }
        Some(out)
    }

    fn apply(&self, sc: &[Scal], u: &RVector, op: Op) -> RVector {
        self.map_blocks(u, |bi, blk, x| match (&sc[bi], *blk) {
            (Scal::Lp { w, lam }, _) => x
                .iter()
                .enumerate()
                .map(|(i, &v)| match op {
                    Op::W | Op::Wt => w[i] * v,
                    Op::WinvT => v / w[i],
                    Op::WtW => w[i] * w[i] * v,
                    Op::WtWinv => v / (w[i] * w[i]),
                    Op::LamInv => v / lam[i],
                })
                .collect(),
            (Scal::Psd { r, rinv, p, q, lam }, Blk::Psd { k, .. }) => {
                let um = smat(x, k);
                let res = match op {
                    Op::W => r.transpose() * um * r,
                    Op::Wt => r * um * r.transpose(),
                    Op::WinvT => rinv * um * rinv.transpose(),
                    Op::WtW => p * um * p,
                    Op::WtWinv => q * um * q,
                    Op::LamInv => {
                        RMatrix::from_fn(k, k, |i, j| 2.0 * um[(i, j)] / (lam[i] + lam[j]))
                    }
                };
                svec(&res)
            }
            _ => unreachable!(),
        })
    }

    fn lam_sq(&self, sc: &[Scal]) -> RVector {
        let z = RVector::zeros(self.nk());
        self.map_blocks(&z, |bi, blk, _| match (&sc[bi], *blk) {
            (Scal::Lp { lam, .. }, _) => lam.iter().map(|l| l * l).collect(),
            (Scal::Psd { lam, .. }, Blk::Psd { k, .. }) => svec(&RMatrix::from_diagonal(
                &DVector::from_iterator(k, lam.iter().map(|l| l * l)),
            )),
            _ => unreachable!(),
        })
    }

    fn jordan(&self, u: &RVector, v: &RVector) -> RVector {
        let mut out = RVector::zeros(u.len());
        for blk in &self.blocks {
            match *blk {
                Blk::Lp { off, n } => {
                    for i in off..off + n {
                        out[i] = u[i] * v[i];
                    }
                }
                Blk::Psd { off, k } => {
                    let len = k * (k + 1) / 2;
                    let um = smat(block_slice(u, off, len), k);
                    let vm = smat(block_slice(v, off, len), k);
                    let p = (&um * &vm + &vm * &um) * 0.5;
                    out.as_mut_slice()[off..off + len].copy_from_slice(&svec(&p));
                }
            }
        }
        out
    }

    /// Largest `α` with `λ + α d` in the cone (scaled coordinates), or ∞.
    fn max_step(&self, sc: &[Scal], d: &RVector) -> f64 {
        let mut alpha = f64::INFINITY;
        for (bi, blk) in self.blocks.iter().enumerate() {
            match (&sc[bi], *blk) {
                (Scal::Lp { lam, .. }, Blk::Lp { off, n }) => {
                    for i in 0..n {
                        let v = d[off + i];
                        if v < 0.0 {
                            alpha = alpha.min(-lam[i] / v);
                        }
                    }
                }
                (Scal::Psd { lam, .. }, Blk::Psd { off, k }) => {
                    let dm = smat(block_slice(d, off, k * (k + 1) / 2), k);
                    let m = RMatrix::from_fn(k, k, |i, j| dm[(i, j)] / (lam[i] * lam[j]).sqrt());
                    let (vals, _) = symmetric_eig(&m);
                    if vals[0] < 0.0 {
                        alpha = alpha.min(-1.0 / vals[0]);
                    }
                }
                _ => unreachable!(),
            }
        }
        alpha
    }

    /// `Gᵀ (WᵀW)⁻¹ G`
    fn schur(&self, sc: &[Scal]) -> DMatrix<f64> {
        let m = self.g.ncols();
        let mut h = DMatrix::zeros(m, m);
        let mut psd_i = 0;
        for (bi, blk) in self.blocks.iter().enumerate() {
            match (&sc[bi], *blk) {
                (Scal::Lp { w, .. }, Blk::Lp { off, n }) => {
                    for r in 0..n {
                        let row = self.g.row(off + r);
                        let d = 1.0 / (w[r] * w[r]);
                        let nz: Vec<(usize, f64)> = row
                            .iter()
                            .enumerate()
                            .filter(|(_, v)| **v != 0.0)
                            .map(|(j, v)| (j, *v))
                            .collect();
                        for &(i, vi) in &nz {
                            for &(j, vj) in &nz {
                                h[(i, j)] += d * vi * vj;
                            }
                        }
                    }
                }
                (Scal::Psd { q, .. }, Blk::Psd { k, .. }) => {
                    let cols = &self.psd_cols[psd_i];
                    let dense = &self.psd_dense[psd_i];
                    psd_i += 1;
                    let active: Vec<usize> = (0..m).filter(|&j| !cols[j].is_empty()).collect();
                    if let Some(gb) = dense {
                        // H_sub = G_bᵀ K G_b with K the svec form of U ↦ Q U Q
                        let len = k * (k + 1) / 2;
                        let mut kq = DMatrix::zeros(len, len);
                        let mut e = vec![0.0; len];
                        for c in 0..len {
                            e[c] = 1.0;
                            let t = q * smat(&e, k) * q;
                            kq.column_mut(c).copy_from_slice(&svec(&t));
                            e[c] = 0.0;
                        }
                        let hs = gb.transpose() * (kq * gb);
                        for (ci, &i) in active.iter().enumerate() {
                            for (cj, &j) in active.iter().enumerate() {
                                h[(i, j)] += hs[(ci, cj)];
                            }
                        }
                    } else {
                        // <U_i, Q U_j Q> = Σ u_ab v_cd Q_ac Q_db
                        let qs = q.as_slice();
                        let qa = |r: usize, c: usize| qs[c * k + r];
                        for (cj, &j) in active.iter().enumerate() {
                            for &i in &active[..=cj] {
                                let mut acc = 0.0;
                                for &(a, b, u) in &cols[i] {
                                    for &(c, d, v) in &cols[j] {
                                        acc += u * v * qa(a, c) * qa(d, b);
                                    }
                                }
                                h[(i, j)] += acc;
                                if i != j {
                                    h[(j, i)] += acc;
                                }
                            }
                        }
                    }
                }
                _ => unreachable!(),
            }
        }
        h
    }
}

#[derive(Clone, Copy)]
enum Op {
    W,
    Wt,
    WinvT,
    WtW,
    WtWinv,
    LamInv,
}

enum Fact {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

struct Kkt {
    fact: Fact,
    m: usize,
}

impl Kkt {
    fn solve(&self, rhs: &RVector) -> Option<RVector> {
        match &self.fact {
            Fact::Chol(c) => Some(c.solve(rhs)),
            Fact::Lu(l) => l.solve(rhs),
        }
    }
}

impl Inner {
    fn factor(&self, sc: &[Scal]) -> Option<Kkt> {
        let m = self.g.ncols();
        let p = self.a.nrows();
        let h = self.schur(sc);
        let mut full = DMatrix::zeros(m + p, m + p);
        full.view_mut((0, 0), (m, m)).copy_from(&h);
        if p > 0 {
            full.view_mut((m, 0), (p, m)).copy_from(&self.a);
            full.view_mut((0, m), (m, p)).copy_from(&self.a.transpose());
        }
        if p == 0 {
            if let Some(c) = Cholesky::new(full.clone()) {
                return Some(Kkt {
                    fact: Fact::Chol(c),
                    m,
                });
            }
        }
        let lu = full.lu();
        if !lu.is_invertible() {
            return None;
        }
        Some(Kkt {
            fact: Fact::Lu(lu),
            m,
        })
    }

    /// Solves `[0 Aᵀ Gᵀ; A 0 0; G 0 −WᵀW] [x; y; z] = [bx; by; bz]`.
    fn solve_reduced(
        &self,
        sc: &[Scal],
        kkt: &Kkt,
        bx: &RVector,
        by: &RVector,
        bz: &RVector,
    ) -> Option<(RVector, RVector, RVector)> {
        let m = kkt.m;
        let p = by.len();
        let wz = self.apply(sc, bz, Op::WtWinv);
        let mut rhs = RVector::zeros(m + p);
        rhs.rows_mut(0, m).copy_from(&(bx + self.g.tr_mul(&wz)));
        rhs.rows_mut(m, p).copy_from(by);
        let sol = kkt.solve(&rhs)?;
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let x = sol.rows(0, m).into_owned();
        let y = sol.rows(m, p).into_owned();
        let z = self.apply(sc, &(&self.g * &x - bz), Op::WtWinv);
        Some((x, y, z))
    }

    /// Solves `[0 Aᵀ Gᵀ; A 0 0; G 0 −WᵀW] [x; y; z] = [bx; by; bz]`, refining on the full system.
    fn solve(
        &self,
        sc: &[Scal],
        kkt: &Kkt,
        bx: &RVector,
        by: &RVector,
        bz: &RVector,
    ) -> Option<(RVector, RVector, RVector)> {
        let (mut x, mut y, mut z) = self.solve_reduced(sc, kkt, bx, by, bz)?;
        for _ in 0..2 {
            let rx = bx - self.a.tr_mul(&y) - self.g.tr_mul(&z);
            let ry = by - &self.a * &x;
            let rz = bz - &self.g * &x + self.apply(sc, &z, Op::WtW);
            let (dx, dy, dz) = self.solve_reduced(sc, kkt, &rx, &ry, &rz)?;
            x += dx;
            y += dy;
            z += dz;
        }
        Some((x, y, z))
    }
}

fn to_inner(prog: &ConicProgram) -> (Inner, Vec<(usize, usize, bool)>) {
    let m = prog.a.nrows();
    let mut free_cols = Vec::new();
    let mut cone_cols = Vec::new();
    let mut blocks = Vec::new();
    let mut layout = Vec::new();
    let mut off_p = 0;
    let mut off_k = 0;
    let mut off_f = 0;
    let mut degree = 0;
    for cone in &prog.cones {
        let len = cone.len();
        match *cone {
            Cone::Free(n) => {
                free_cols.extend(off_p..off_p + n);
                layout.push((off_p, off_f, true));
                off_f += n;
            }
            Cone::NonNeg(n) => {
                cone_cols.extend(off_p..off_p + n);
                blocks.push(Blk::Lp { off: off_k, n });
                layout.push((off_p, off_k, false));
                off_k += n;
                degree += n;
            }
            Cone::Psd(k) => {
                cone_cols.extend(off_p..off_p + len);
                blocks.push(Blk::Psd { off: off_k, k });
                layout.push((off_p, off_k, false));
                off_k += len;
                degree += k;
            }
        }
        off_p += len;
    }
    let g = DMatrix::from_fn(cone_cols.len(), m, |r, j| prog.a[(j, cone_cols[r])]);
    let h = RVector::from_iterator(cone_cols.len(), cone_cols.iter().map(|&c| prog.c[c]));
    let a = DMatrix::from_fn(free_cols.len(), m, |r, j| prog.a[(j, free_cols[r])]);
    let b = RVector::from_iterator(free_cols.len(), free_cols.iter().map(|&c| prog.c[c]));
    let mut psd_cols = Vec::new();
    for blk in &blocks {
        if let Blk::Psd { off, k } = *blk {
            let len = k * (k + 1) / 2;
            let cols = (0..m)
                .map(|j| {
                    let col: Vec<f64> = (0..len).map(|r| g[(off + r, j)]).collect();
                    if col.iter().all(|v| *v == 0.0) {
                        return Vec::new();
                    }
                    let um = smat(&col, k);
                    let mut ent = Vec::new();
                    for a in 0..k {
                        for bb in 0..k {
                            if um[(a, bb)] != 0.0 {
                                ent.push((a, bb, um[(a, bb)]));
                            }
                        }
                    }
                    ent
                })
                .collect();
            psd_cols.push(cols);
        }
    }
    let mut psd_dense = Vec::new();
    let mut pi = 0;
    for blk in &blocks {
        if let Blk::Psd { off, k } = *blk {
            let cols: &Vec<Vec<(usize, usize, f64)>> = &psd_cols[pi];
            pi += 1;
            let active: Vec<usize> = (0..m).filter(|&j| !cols[j].is_empty()).collect();
            let nnz: usize = active.iter().map(|&j| cols[j].len()).sum();
            if !active.is_empty() && nnz >= 2 * k * active.len() {
                let len = k * (k + 1) / 2;
                psd_dense.push(Some(DMatrix::from_fn(len, active.len(), |r, c| {
                    g[(off + r, active[c])]
                })));
            } else {
                psd_dense.push(None);
            }
        }
    }
    let inner = Inner {
        c: -prog.b.clone(),
        g,
        h,
        a,
        b,
        blocks,
        psd_cols,
        psd_dense,
        degree,
    };
    (inner, layout)
}

/// Solves `prog` to tolerance `tol` (relative residuals and gap).
pub fn solve(prog: &ConicProgram, tol: f64, max_iter: usize) -> ConicSolution {
    let n = prog.dim();
    let fail = |status| ConicSolution {
        status,
        x: RVector::zeros(n),
        y: RVector::zeros(prog.b.len()),
        s: RVector::zeros(n),
        objective: f64::NAN,
        dual_objective: f64::NAN,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        gap: f64::INFINITY,
        iterations: 0,
    };
    if prog.validate().is_err() {
        return fail(Status::NumericalFailure);
    }
    let (inn, layout) = to_inner(prog);
    let nk = inn.nk();
    let m = inn.c.len();
    let p = inn.b.len();

    // trivial case: no cone constraints at all
    if nk == 0 {
        return solve_equality_only(prog, &inn, &layout);
    }

    let e = inn.identity();
    let ones: Vec<Scal> = inn
        .blocks
        .iter()
        .map(|blk| match *blk {
            Blk::Lp { n, .. } => Scal::Lp {
                w: vec![1.0; n],
                lam: vec![1.0; n],
            },
            Blk::Psd { k, .. } => {
                let e = RMatrix::identity(k, k);
                Scal::Psd {
                    r: e.clone(),
                    rinv: e.clone(),
                    p: e.clone(),
                    q: e,
                    lam: vec![1.0; k],
                }
            }
        })
        .collect();
    let kkt0 = match inn.factor(&ones) {
        Some(k) => k,
        None => return fail(Status::NumericalFailure),
    };
    let zero_m = RVector::zeros(m);
    let zero_p = RVector::zeros(p);
    let zero_k = RVector::zeros(nk);
    let (mut x, _, zt) = match inn.solve(&ones, &kkt0, &zero_m, &inn.b, &inn.h) {
        Some(v) => v,
        None => return fail(Status::NumericalFailure),
    };
    let mut s = -zt;
    let (_, mut y, mut z) = match inn.solve(&ones, &kkt0, &(-&inn.c), &zero_p, &zero_k) {
        Some(v) => v,
        None => return fail(Status::NumericalFailure),
    };
    for v in [&mut s, &mut z] {
        let ts = -inn.min_eig(v);
        if ts >= -1e-8 * v.norm().max(1.0) {
            *v += &e * (1.0 + ts);
        }
    }
    let mut tau = 1.0;
    let mut kappa = 1.0;

    let resx0 = inn.c.norm().max(1.0);
    let resy0 = inn.b.norm().max(1.0);
    let resz0 = inn.h.norm().max(1.0);
    let deg = inn.degree as f64;

    let mut status = Status::MaxIter;
    let mut iters = 0;
    // best iterate seen, returned when the run stops without a certificate
    let mut best: Option<(f64, RVector, RVector, RVector, RVector, f64)> = None;
    for it in 0..=max_iter {
        iters = it;
        let hrx = -(inn.a.transpose() * &y + inn.g.transpose() * &z);
        let hry = &inn.a * &x;
        let hrz = &inn.g * &x + &s;
        let hresx = hrx.norm();
        let hresy = hry.norm();
        let hresz = hrz.norm();
        let f1 = -&hrx + &inn.c * tau;
        let f2 = &inn.b * tau - &hry;
        let f3 = &hrz - &inn.h * tau;
        let cx = inn.c.dot(&x);
        let by = inn.b.dot(&y);
        let hz = inn.h.dot(&z);
        let f4 = kappa + cx + by + hz;
        let gap = s.dot(&z);
        let mu = (gap + tau * kappa) / (deg + 1.0);
        let pcost = cx / tau;
        let dcost = -(by + hz) / tau;
        let pres = ((&hry / tau - &inn.b).norm() / resy0).max((&hrz / tau - &inn.h).norm() / resz0);
        let dres = (&hrx / tau - &inn.c).norm() / resx0;
        let relgap = (gap / (tau * tau)) / pcost.abs().max(dcost.abs()).max(1.0);
        let pinf = if hz + by < 0.0 {
            hresx / resx0 / (-hz - by)
        } else {
            f64::INFINITY
        };
        let dinf = if cx < 0.0 {
            (hresy / resy0).max(hresz / resz0) / (-cx)
        } else {
            f64::INFINITY
        };
        log::trace!("it {it} pcost {pcost:.6e} dcost {dcost:.6e} pres {pres:.2e} dres {dres:.2e} gap {relgap:.2e} tau {tau:.2e} kappa {kappa:.2e}");
        if pres <= tol && dres <= tol && relgap <= tol {
            status = Status::Optimal;
            break;
        }
        let merit = pres.max(dres).max(relgap);
        if merit.is_finite() && best.as_ref().is_none_or(|b| merit < b.0) {
            best = Some((merit, x.clone(), y.clone(), z.clone(), s.clone(), tau));
        }
        if pinf <= tol {
            // the dual of the stored program is infeasible
            status = Status::Unbounded;
            break;
        }
        if dinf <= tol {
            status = Status::Infeasible;
            break;
        }
        if it == max_iter {
            break;
        }
        let sc = match inn.scaling(&s, &z) {
            Some(v) => v,
            None => {
                status = Status::NumericalFailure;
                break;
            }
        };
        let kkt = match inn.factor(&sc) {
            Some(k) => k,
            None => {
                status = Status::NumericalFailure;
                break;
            }
        };
        let (x1, y1, z1) = match inn.solve(&sc, &kkt, &(-&inn.c), &inn.b, &inn.h) {
            Some(v) => v,
            None => {
                status = Status::NumericalFailure;
                break;
            }
        };
        let lam2 = inn.lam_sq(&sc);
        let den = inn.c.dot(&x1) + inn.b.dot(&y1) + inn.h.dot(&z1) - kappa / tau;

        let newton = |f: f64,
                      ds_rhs: &RVector,
                      dk_rhs: f64|
         -> Option<(
            RVector,
            RVector,
            RVector,
            RVector,
            f64,
            f64,
            RVector,
            RVector,
        )> {
            let li = inn.apply(&sc, ds_rhs, Op::LamInv);
            let wt_li = inn.apply(&sc, &li, Op::Wt);
            let (x0, y0, z0) =
                inn.solve(&sc, &kkt, &(-&f1 * f), &(&f2 * f), &(-&f3 * f + &wt_li))?;
            let num = -f * f4 + dk_rhs / tau - inn.c.dot(&x0) - inn.b.dot(&y0) - inn.h.dot(&z0);
            let dtau = num / den;
            let dx = &x0 + &x1 * dtau;
            let dy = &y0 + &y1 * dtau;
            let dz = &z0 + &z1 * dtau;
            let dkappa = (-dk_rhs - kappa * dtau) / tau;
            // third block row, solved for ds so the primal residual shrinks exactly
            let ds = &inn.h * dtau - &f3 * f - &inn.g * &dx;
            let zh = inn.apply(&sc, &dz, Op::W);
            let sh = inn.apply(&sc, &ds, Op::WinvT);
            Some((dx, dy, dz, ds, dtau, dkappa, sh, zh))
        };
        let step_len = |sh: &RVector, zh: &RVector, dtau: f64, dkappa: f64| {
            let mut a = inn.max_step(&sc, sh).min(inn.max_step(&sc, zh));
            if dtau < 0.0 {
                a = a.min(-tau / dtau);
            }
            if dkappa < 0.0 {
                a = a.min(-kappa / dkappa);
            }
            a
        };

        let Some((_, _, _, _, dtau_a, dkappa_a, sh_a, zh_a)) = newton(1.0, &lam2, tau * kappa)
        else {
            status = Status::NumericalFailure;
            break;
        };
        let alpha_a = step_len(&sh_a, &zh_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_a).powi(3);
        let ds_rhs = &lam2 + inn.jordan(&sh_a, &zh_a) - &e * (sigma * mu);
        let dk_rhs = tau * kappa + dtau_a * dkappa_a - sigma * mu;
        let Some((dx, dy, dz, ds, dtau, dkappa, sh, zh)) = newton(1.0 - sigma, &ds_rhs, dk_rhs)
        else {
            status = Status::NumericalFailure;
            break;
        };
        let alpha = (0.99 * step_len(&sh, &zh, dtau, dkappa)).min(1.0);
        x += &dx * alpha;
        y += &dy * alpha;
        z += &dz * alpha;
        s += &ds * alpha;
        tau += alpha * dtau;
        kappa += alpha * dkappa;
        if !(tau > 0.0) || !(kappa > 0.0) || !x.iter().all(|v| v.is_finite()) {
            status = Status::NumericalFailure;
            break;
        }
    }

    if matches!(status, Status::MaxIter | Status::NumericalFailure) {
        if let Some((_, bx, by, bz, bs, bt)) = best {
            (x, y, z, s, tau) = (bx, by, bz, bs, bt);
        }
    }
    // map back to the stored program
    let scale = match status {
        Status::Infeasible => 1.0 / (-inn.c.dot(&x)).max(f64::MIN_POSITIVE),
        Status::Unbounded => 1.0 / (-(inn.h.dot(&z) + inn.b.dot(&y))).max(f64::MIN_POSITIVE),
        _ => 1.0 / tau,
    };
    let mut xp = RVector::zeros(n);
    let mut sp = RVector::zeros(n);
    for (ci, cone) in prog.cones.iter().enumerate() {
        let (off_p, off_i, free) = layout[ci];
        for r in 0..cone.len() {
            if free {
                xp[off_p + r] = y[off_i + r] * scale;
            } else {
                xp[off_p + r] = z[off_i + r] * scale;
                sp[off_p + r] = s[off_i + r] * scale;
            }
        }
    }
    let yp = &x * scale;
    finish(prog, status, xp, yp, sp, iters)
}

fn finish(
    prog: &ConicProgram,
    status: Status,
    x: RVector,
    y: RVector,
    mut s: RVector,
    iterations: usize,
) -> ConicSolution {
    let objective = prog.c.dot(&x);
    let dual_objective = prog.b.dot(&y);
    let primal_residual = (&prog.a * &x - &prog.b).norm() / (1.0 + prog.b.norm());
    let slack = &prog.c - prog.a.transpose() * &y;
    let mut off = 0;
    for cone in &prog.cones {
        if let Cone::Free(nf) = *cone {
            for r in 0..nf {
                s[off + r] = 0.0;
            }
        }
        off += cone.len();
    }
    let dual_residual = (&slack - &s).norm() / (1.0 + prog.c.norm());
    let gap =
        (objective - dual_objective).abs() / (1.0 + objective.abs().max(dual_objective.abs()));
    ConicSolution {
        status,
        x,
        y,
        s,
        objective,
        dual_objective,
        primal_residual,
        dual_residual,
        gap,
        iterations,
    }
}

fn solve_equality_only(
    prog: &ConicProgram,
    inn: &Inner,
    layout: &[(usize, usize, bool)],
) -> ConicSolution {
    // min c_inᵀx s.t. A_in x = b_in: bounded only if c_in ∈ range(A_inᵀ)
    let m = inn.c.len();
    let p = inn.b.len();
    let n = prog.dim();
    let mut full = DMatrix::zeros(m + p, m + p);
    full.view_mut((m, 0), (p, m)).copy_from(&inn.a);
    full.view_mut((0, m), (m, p)).copy_from(&inn.a.transpose());
    for i in 0..m {
        full[(i, i)] = 1e-12;
    }
    let mut rhs = RVector::zeros(m + p);
    rhs.rows_mut(0, m).copy_from(&(-&inn.c));
    rhs.rows_mut(m, p).copy_from(&inn.b);
    let status;
    let (x, y) = match full.lu().solve(&rhs) {
        Some(sol) => {
            let x = sol.rows(0, m).into_owned();
            let y = sol.rows(m, p).into_owned();
            let dres = (inn.a.transpose() * &y + &inn.c).norm() / inn.c.norm().max(1.0);
            let pres = (&inn.a * &x - &inn.b).norm() / inn.b.norm().max(1.0);
            status = if pres > 1e-8 {
                Status::Unbounded
            } else if dres > 1e-8 {
                Status::Infeasible
            } else {
                Status::Optimal
            };
            (x, y)
        }
        None => {
            status = Status::NumericalFailure;
            (RVector::zeros(m), RVector::zeros(p))
        }
    };
    let mut xp = RVector::zeros(n);
    for (ci, cone) in prog.cones.iter().enumerate() {
        let (off_p, off_i, _) = layout[ci];
        for r in 0..cone.len() {
            xp[off_p + r] = y[off_i + r];
        }
    }
    finish(prog, status, xp, x, RVector::zeros(n), 0)
}

/// Builder for problems in LMI form
///
/// ```text
/// minimize fᵀy  s.t.  F₀ + Σ yᵢ Fᵢ ⪰ 0 (per block),  aᵀy + a₀ ≥ 0,  eᵀy + e₀ = 0
/// ```
///
/// emitted as the dual of a [`ConicProgram`].
#[derive(Debug, Clone, Default)]
pub struct LmiBuilder {
    nvars: usize,
    objective: Vec<f64>,
    blocks: Vec<LmiBlock>,
}

#[derive(Debug, Clone)]
enum LmiBlock {
    Psd {
        k: usize,
        f0: RMatrix,
        terms: Vec<(usize, usize, usize, f64)>,
    },
    NonNeg {
        rows: Vec<(Vec<(usize, f64)>, f64)>,
    },
    Zero {
        rows: Vec<(Vec<(usize, f64)>, f64)>,
    },
}

/// Handle to an LMI block under construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(usize);

#[derive(Debug, Clone)]
pub struct LmiSolution {
    /// Status of the LMI problem itself.
    pub status: Status,
    pub y: RVector,
    pub objective: f64,
    pub conic: ConicSolution,
}

/// Residual level at which an uncertified iterate is still used by the
/// subproblem builders. Callers re-check the true objective before accepting.
pub const USABLE_TOL: f64 = 1e-4;

impl LmiSolution {
    /// Optimal, or stopped early with every residual below [`USABLE_TOL`].
    pub fn usable(&self) -> bool {
        let c = &self.conic;
        match self.status {
            Status::Optimal => true,
            Status::MaxIter | Status::NumericalFailure => {
                c.primal_residual <= USABLE_TOL
                    && c.dual_residual <= USABLE_TOL
                    && c.gap <= USABLE_TOL
            }
            _ => false,
        }
    }
}

impl LmiBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vars(&mut self, count: usize) -> usize {
        let first = self.nvars;
        self.nvars += count;
        self.objective.resize(self.nvars, 0.0);
        first
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn set_objective(&mut self, var: usize, coef: f64) {
        self.objective[var] = coef;
    }

    pub fn add_objective(&mut self, var: usize, coef: f64) {
        self.objective[var] += coef;
    }

    pub fn psd_block(&mut self, k: usize) -> BlockId {
        self.blocks.push(LmiBlock::Psd {
            k,
            f0: RMatrix::zeros(k, k),
            terms: Vec::new(),
        });
        BlockId(self.blocks.len() - 1)
    }

    /// Adds `v` to the constant at `(i, j)` and `(j, i)`.
    pub fn psd_constant(&mut self, blk: BlockId, i: usize, j: usize, v: f64) {
        if let LmiBlock::Psd { f0, .. } = &mut self.blocks[blk.0] {
            f0[(i, j)] += v;
            if i != j {
                f0[(j, i)] += v;
            }
        }
    }

    /// Adds `v · y_var` at `(i, j)` and `(j, i)`.
    pub fn psd_term(&mut self, blk: BlockId, i: usize, j: usize, var: usize, v: f64) {
        if v == 0.0 {
            return;
        }
        if let LmiBlock::Psd { terms, .. } = &mut self.blocks[blk.0] {
            terms.push((i.max(j), i.min(j), var, v));
        }
    }

    /// `Σ coefᵢ y_i + constant ≥ 0`.
    pub fn nonneg(&mut self, coefs: Vec<(usize, f64)>, constant: f64) {
        match self.blocks.last_mut() {
            Some(LmiBlock::NonNeg { rows }) => rows.push((coefs, constant)),
            _ => self.blocks.push(LmiBlock::NonNeg {
                rows: vec![(coefs, constant)],
            }),
        }
    }

    /// `Σ coefᵢ y_i + constant = 0`.
    pub fn equality(&mut self, coefs: Vec<(usize, f64)>, constant: f64) {
        match self.blocks.last_mut() {
            Some(LmiBlock::Zero { rows }) => rows.push((coefs, constant)),
            _ => self.blocks.push(LmiBlock::Zero {
                rows: vec![(coefs, constant)],
            }),
        }
    }

    pub fn build(&self) -> ConicProgram {
        let mut cones = Vec::new();
        for b in &self.blocks {
            cones.push(match b {
                LmiBlock::Psd { k, .. } => Cone::Psd(*k),
                LmiBlock::NonNeg { rows } => Cone::NonNeg(rows.len()),
                LmiBlock::Zero { rows } => Cone::Free(rows.len()),
            });
        }
        let n: usize = cones.iter().map(Cone::len).sum();
        let mut c = RVector::zeros(n);
        let mut a = DMatrix::zeros(self.nvars, n);
        let mut off = 0;
        for b in &self.blocks {
            match b {
                LmiBlock::Psd { k, f0, terms } => {
                    let sv = svec(f0);
                    for (r, v) in sv.iter().enumerate() {
                        c[off + r] = *v;
                    }
                    for &(i, j, var, v) in terms {
                        let idx = svec_pos(*k, i, j);
                        let scale = if i == j { 1.0 } else { SQRT2 };
                        a[(var, off + idx)] -= v * scale;
                    }
                    off += k * (k + 1) / 2;
                }
                LmiBlock::NonNeg { rows } | LmiBlock::Zero { rows } => {
                    for (r, (coefs, constant)) in rows.iter().enumerate() {
                        c[off + r] = *constant;
                        for &(var, v) in coefs {
                            a[(var, off + r)] -= v;
                        }
                    }
                    off += rows.len();
                }
            }
        }
        let b = RVector::from_iterator(self.nvars, self.objective.iter().map(|v| -v));
        ConicProgram { c, a, b, cones }
    }

    pub fn solve(&self, tol: f64, max_iter: usize) -> LmiSolution {
        let prog = self.build();
        let conic = solve(&prog, tol, max_iter);
        let status = match conic.status {
            Status::Infeasible => Status::Unbounded,
            Status::Unbounded => Status::Infeasible,
            s => s,
        };
        let y = conic.y.clone();
        let objective = self
            .objective
            .iter()
            .zip(y.iter())
            .map(|(f, v)| f * v)
            .sum();
        LmiSolution {
            status,
            y,
            objective,
            conic,
        }
    }
}

/// Position of `(i, j)`, `i ≥ j`, in the svec layout.
pub fn svec_pos(k: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    j * k - j * j.saturating_sub(1) / 2 + (i - j)
}

/// Hermitian `n × n` matrix variable `X + jY` parameterized by `n²` reals.
#[derive(Debug, Clone, Copy)]
pub struct HermVar {
    pub first: usize,
    pub n: usize,
}

impl HermVar {
    pub fn new(builder: &mut LmiBuilder, n: usize) -> Self {
        HermVar {
            first: builder.add_vars(n * n),
            n,
        }
    }

    /// Index of the real part of entry `(i, j)`, `i ≤ j`.
    pub fn re(&self, i: usize, j: usize) -> usize {
        let (i, j) = (i.min(j), i.max(j));
        self.first + i * self.n + j
    }

    /// Index of the imaginary part of entry `(i, j)`, `i < j`.
    pub fn im(&self, i: usize, j: usize) -> usize {
        let (i, j) = (i.min(j), i.max(j));
        self.first + j * self.n + i
    }

    /// Variables and coefficients of `Re Σ C_ab X_ab`.
    pub fn linear(&self, c: &crate::numerics::CMatrix) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            out.push((self.re(i, i), c[(i, i)].re));
            for j in i + 1..self.n {
                out.push((self.re(i, j), c[(i, j)].re + c[(j, i)].re));
                out.push((self.im(i, j), c[(j, i)].im - c[(i, j)].im));
            }
        }
        out
    }

    /// Adds the real embedding `[[X, −Y], [Y, X]]` scaled by `scale` into a `2n` block.
    pub fn embed(&self, builder: &mut LmiBuilder, blk: BlockId, scale: f64) {
        let n = self.n;
        for i in 0..n {
            builder.psd_term(blk, i, i, self.re(i, i), scale);
            builder.psd_term(blk, i + n, i + n, self.re(i, i), scale);
            for j in i + 1..n {
                let re = self.re(i, j);
                let im = self.im(i, j);
                builder.psd_term(blk, i, j, re, scale);
                builder.psd_term(blk, i + n, j + n, re, scale);
                // lower-left Y block: Y_ji = −Y_ij with Y_ij = Im X_ij
                builder.psd_term(blk, j + n, i, im, -scale);
                builder.psd_term(blk, i + n, j, im, scale);
            }
        }
    }

    pub fn value(&self, y: &RVector) -> crate::numerics::CMatrix {
        use crate::numerics::C64;
        crate::numerics::CMatrix::from_fn(self.n, self.n, |i, j| {
            if i == j {
                C64::new(y[self.re(i, i)], 0.0)
            } else if i < j {
                C64::new(y[self.re(i, j)], y[self.im(i, j)])
            } else {
                C64::new(y[self.re(i, j)], -y[self.im(i, j)])
            }
        })
    }
}

pub fn solve_default(prog: &ConicProgram) -> ConicSolution {
    solve(prog, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

/// Power budgets shared by both subproblems.
#[derive(Debug, Clone, Copy)]
pub struct PowerLimits {
    pub p_t: f64,
    /// IRS power budget; `None` drops the constraint (passive IRSs).
    pub p_s: Option<f64>,
    pub a_max: f64,
    pub sigma_r2: f64,
}

/// Normalizer `D = sqrt(diag F)` (unit where a diagonal entry vanishes) and reference CRB.
fn normalizer(f: &crate::fim::Fim4) -> ([f64; 4], Option<f64>) {
    let mut d = [1.0; 4];
    for (i, di) in d.iter_mut().enumerate() {
        let v = f[(i, i)];
        if v > 0.0 && v.is_finite() {
            *di = v.sqrt();
        }
    }
    (
        d,
        crate::fim::crb(f)
            .ok()
            .filter(|c| c.is_finite() && *c > 0.0),
    )
}

/// Writes `D⁻¹ F(scale · X) D⁻¹` into the top-left `4 × 4` corner of `blk`.
fn add_fim_block(
    b: &mut LmiBuilder,
    blk: BlockId,
    af: &crate::fim::AffineFim,
    x: &HermVar,
    scale: f64,
    d: &[f64; 4],
) {
    for r in 0..4 {
        for s in 0..=r {
            let norm = 1.0 / (d[r] * d[s]);
            b.psd_constant(blk, r, s, af.constant[(r, s)] * norm);
            for (var, coef) in x.linear(af.coeff(r, s)) {
                b.psd_term(blk, r, s, var, coef * scale * norm);
            }
        }
    }
}

const POWER_PENALTY: f64 = 1e-6;

/// Transmit-covariance subproblem: minimize the largest `tr(F_l⁻¹)` over `{R_{s,l}}`.
#[derive(Debug, Clone)]
pub struct TransmitSdp {
    pub lmi: LmiBuilder,
    rs: Vec<HermVar>,
    kappa: usize,
    scale: f64,
    crb_ref: f64,
}

/// Builds the transmit SDP for fixed reflection vectors `psi`. `r_ref` only sets
/// the numerical normalization.
pub fn build_transmit_sdp(
    case: crate::fim::SensingCase,
    psi: &[crate::numerics::CVector],
    links: &[crate::scenario::Link],
    r_ref: &[crate::numerics::CMatrix],
    params: &crate::fim::FimParams,
    limits: &PowerLimits,
) -> Result<TransmitSdp> {
    use crate::numerics::CMatrix;
    let l_count = links.len();
    if psi.len() != l_count || r_ref.len() != l_count {
        return Err(Error::Dimension(
            "transmit SDP: one reflection vector and covariance per IRS".into(),
        ));
    }
    let mut b = LmiBuilder::new();
    let mut rs = Vec::with_capacity(l_count);
    let mut afs = Vec::with_capacity(l_count);
    let mut norms = Vec::with_capacity(l_count);
    let mut crb_ref = 0.0f64;
    for (l, link) in links.iter().enumerate() {
        rs.push(HermVar::new(&mut b, link.m()));
        let af = crate::fim::fim_affine_in_rs(case, &psi[l], link, params)?;
        let (d, c) = normalizer(&af.eval(&r_ref[l]));
        crb_ref = crb_ref.max(c.unwrap_or(0.0));
        afs.push(af);
        norms.push(d);
    }
    if crb_ref == 0.0 {
        crb_ref = 1.0;
    }
    // R_l = scale · X_l keeps X near unit size around the reference point
    let ref_power = r_ref.iter().map(|r| r.trace().re).fold(0.0, f64::max);
    let scale = if ref_power > 0.0 {
        ref_power.clamp(limits.p_t * 1e-6, limits.p_t)
    } else {
        limits.p_t
    };
    let kappa = b.add_vars(1);
    b.set_objective(kappa, 1.0);
    let mut bs_power = Vec::new();
    for (l, link) in links.iter().enumerate() {
        let m = link.m();
        let x = rs[l];
        let psd = b.psd_block(2 * m);
        x.embed(&mut b, psd, 1.0);

        let u0 = b.add_vars(10);
        let uvar = |i: usize, j: usize| {
            let (i, j) = (i.max(j), i.min(j));
            u0 + i * (i + 1) / 2 + j
        };
        let blk = b.psd_block(8);
        add_fim_block(&mut b, blk, &afs[l], &x, scale, &norms[l]);
        for i in 0..4 {
            b.psd_constant(blk, 4 + i, i, 1.0);
            for j in 0..=i {
                b.psd_term(blk, 4 + i, 4 + j, uvar(i, j), 1.0);
            }
        }
        // κ − Σ U_ii / (d_i² crb_ref) ≥ 0
        let mut row = vec![(kappa, 1.0)];
        for i in 0..4 {
            row.push((uvar(i, i), -1.0 / (norms[l][i] * norms[l][i] * crb_ref)));
        }
        b.nonneg(row, 0.0);

        let tr = x.linear(&CMatrix::identity(m, m));
        // small power penalty; picks the least-power point of a flat optimal face
        for &(v, c) in &tr {
            b.add_objective(v, POWER_PENALTY * c);
        }
        bs_power.extend(tr.into_iter().map(|(v, c)| (v, -c)));
        if let Some(p_s) = limits.p_s {
            let theta = &psi[l] * psi[l].adjoint();
            let pw = crate::surrogate::power_affine_in_rs(case, &theta, link, limits.sigma_r2);
            let row = x
                .linear(&pw.coeff)
                .into_iter()
                .map(|(v, c)| (v, -c * scale / p_s))
                .collect();
            b.nonneg(row, 1.0 - pw.constant / p_s);
        }
    }
    // (1/L) Σ tr R_l ≤ P_t
    b.nonneg(bs_power, l_count as f64 * limits.p_t / scale);
    Ok(TransmitSdp {
        lmi: b,
        rs,
        kappa,
        scale,
        crb_ref,
    })
}

impl TransmitSdp {
    pub fn program(&self) -> ConicProgram {
        self.lmi.build()
    }

    /// Solves and returns the covariances together with the bound on the largest CRB.
    pub fn solve(&self, tol: f64, max_iter: usize) -> Result<(Vec<crate::numerics::CMatrix>, f64)> {
        let sol = self.lmi.solve(tol, max_iter);
        match sol.status {
            _ if sol.usable() => {}
            Status::Infeasible => return Err(Error::UnboundedCrb),
            status => {
                return Err(Error::Solver {
                    status,
                    context: format!("transmit step after {} iterations", sol.conic.iterations),
                })
            }
        }
        let cov = self
            .rs
            .iter()
            .map(|x| {
                let m = x.value(&sol.y) * crate::numerics::C64::new(self.scale, 0.0);
                crate::numerics::psd_project(&crate::numerics::HermitianMatrix::project(&m))
                    .into_inner()
            })
            .collect();
        Ok((cov, sol.y[self.kappa] * self.crb_ref))
    }
}

/// Reflection subproblem for one IRS around the anchor of `ctx`.
#[derive(Debug, Clone)]
pub struct ReflectiveSdp {
    pub lmi: LmiBuilder,
    theta: HermVar,
    scale: f64,
    weights: [f64; 4],
    kappas: usize,
    crb_ref: f64,
}

/// Builds the relaxed reflection SDP. With `limits.p_s == None` the diagonal is
/// pinned to one (passive IRS); otherwise `[Θ]_nn ≤ a_max²` and the power
/// surrogate apply.
pub fn build_reflective_sdp(
    ctx: &crate::surrogate::SurrogateContext,
    link: &crate::scenario::Link,
    r_s: &crate::numerics::CMatrix,
    limits: &PowerLimits,
) -> Result<ReflectiveSdp> {
    use crate::fim::SensingCase;
    let n = link.n();
    let anchor = ctx.anchor.as_matrix();
    let af = ctx.fim_linearized();
    let (d, c) = normalizer(&af.eval(anchor));
    let crb_ref = c.unwrap_or(1.0);
    let passive = limits.p_s.is_none();
    let scale = if passive {
        1.0
    } else {
        limits.a_max * limits.a_max
    };

    let mut b = LmiBuilder::new();
    let theta = HermVar::new(&mut b, n);
    let kappas = b.add_vars(4);
    let mut weights = [0.0; 4];
    for i in 0..4 {
        weights[i] = 1.0 / (d[i] * d[i] * crb_ref);
        b.set_objective(kappas + i, weights[i]);
    }
    let psd = b.psd_block(2 * n);
    theta.embed(&mut b, psd, 1.0);
    for i in 0..4 {
        let blk = b.psd_block(5);
        add_fim_block(&mut b, blk, &af, &theta, scale, &d);
        b.psd_constant(blk, 4, i, 1.0);
        b.psd_term(blk, 4, 4, kappas + i, 1.0);
    }
    match limits.p_s {
        None => {
            for k in 0..n {
                b.equality(vec![(theta.re(k, k), 1.0)], -1.0);
            }
        }
        Some(p_s) => {
            for k in 0..n {
                b.nonneg(vec![(theta.re(k, k), -1.0)], 1.0);
            }
            let pw = match ctx.case {
                SensingCase::AtBs => {
                    crate::surrogate::power_bs_linearized(anchor, r_s, link, limits.sigma_r2)
                }
                SensingCase::AtIrs => {
                    crate::surrogate::power_irs_affine(r_s, link, limits.sigma_r2)
                }
            };
            let row = theta
                .linear(&pw.coeff)
                .into_iter()
                .map(|(v, c)| (v, -c * scale / p_s))
                .collect();
            b.nonneg(row, 1.0 - pw.constant / p_s);
        }
    }
    Ok(ReflectiveSdp {
        lmi: b,
        theta,
        scale,
        weights,
        kappas,
        crb_ref,
    })
}

impl ReflectiveSdp {
    pub fn program(&self) -> ConicProgram {
        self.lmi.build()
    }

    /// Surrogate objective `Σ_i [F̂⁻¹]_ii` at the solver's optimum, with the relaxed `Θ`.
    pub fn solve(
        &self,
        tol: f64,
        max_iter: usize,
    ) -> Result<(crate::numerics::HermitianMatrix, f64)> {
        let sol = self.lmi.solve(tol, max_iter);
        if !sol.usable() {
            return Err(Error::Solver {
                status: sol.status,
                context: format!("reflection step after {} iterations", sol.conic.iterations),
            });
        }
        let th = self.theta.value(&sol.y) * crate::numerics::C64::new(self.scale, 0.0);
        let th = crate::numerics::psd_project(&crate::numerics::HermitianMatrix::project(&th));
        let obj: f64 = (0..4)
            .map(|i| sol.y[self.kappas + i] * self.weights[i])
            .sum::<f64>()
            * self.crb_ref;
        Ok((th, obj))
    }
}
