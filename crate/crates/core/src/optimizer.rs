//! Alternating optimization of transmit covariances and reflection vectors,
//! plus the benchmark schemes.

use crate::error::{Error, Result};
use crate::fim::{crb, fim, FimParams, SensingCase};
use crate::numerics::{psd_sqrt, CMatrix, CVector, HermitianMatrix, C64};
use crate::scenario::{complex_gaussian, substream, ChannelSet, Link, ScenarioConfig, Stream};
use crate::sdp::{
    build_reflective_sdp, build_transmit_sdp, PowerLimits, DEFAULT_MAX_ITER, DEFAULT_TOL,
};
use crate::surrogate::{fim_lifted, power_exact, SurrogateContext};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;

/// Relative slack used when re-checking power and amplitude constraints.
pub const FEAS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct AoOptions {
    pub max_outer_iters: usize,
    pub max_sca_iters: usize,
    pub rel_tol: f64,
    pub n_randomizations: usize,
    pub seed: u64,
    /// Channel-draw index, used to pick the random substreams.
    pub draw: usize,
    /// Run the transmit step before the reflection step in each outer iteration.
    pub transmit_first: bool,
    /// Drop the amplifier-noise terms from the FIM of the passive benchmark.
    pub passive_zero_sigma_r: bool,
    pub sdp_tol: f64,
    pub sdp_max_iter: usize,
}

impl Default for AoOptions {
    fn default() -> Self {
        AoOptions {
            max_outer_iters: 15,
            max_sca_iters: 30,
            rel_tol: 1e-4,
            n_randomizations: 200,
            seed: 1,
            draw: 0,
            transmit_first: true,
            passive_zero_sigma_r: false,
            sdp_tol: DEFAULT_TOL,
            sdp_max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl AoOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_sca_iters == 0 || self.n_randomizations == 0 || self.sdp_max_iter == 0 {
            return Err(Error::Config(
                "iteration budgets and randomization count must be positive".into(),
            ));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config(format!(
                "rel_tol must lie in (0, 1), got {}",
                self.rel_tol
            )));
        }
        if !(self.sdp_tol > 0.0) {
            return Err(Error::Config("sdp_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Proposed,
    TransmitOnly,
    ReflectiveOnly,
    PassiveIrs,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Proposed,
        Scheme::TransmitOnly,
        Scheme::ReflectiveOnly,
        Scheme::PassiveIrs,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::TransmitOnly => "transmit_only",
            Scheme::ReflectiveOnly => "reflective_only",
            Scheme::PassiveIrs => "passive_irs",
        }
    }

    fn optimizes_transmit(&self) -> bool {
        !matches!(self, Scheme::ReflectiveOnly)
    }

    fn optimizes_reflection(&self) -> bool {
        !matches!(self, Scheme::TransmitOnly)
    }

    fn passive(&self) -> bool {
        matches!(self, Scheme::PassiveIrs)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "proposed" => Ok(Scheme::Proposed),
            "transmit_only" | "transmit" => Ok(Scheme::TransmitOnly),
            "reflective_only" | "reflective" => Ok(Scheme::ReflectiveOnly),
            "passive_irs" | "passive" => Ok(Scheme::PassiveIrs),
            _ => Err(Error::Config(format!("unknown scheme '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AoStatus {
    Converged,
    MaxIter,
}

#[derive(Debug, Clone)]
pub struct AoTrace {
    pub scheme: Scheme,
    pub case: SensingCase,
    /// Max-CRB at the initial point followed by one entry per outer iteration.
    pub max_crb: Vec<f64>,
    pub per_irs_crb: Vec<f64>,
    pub r_s: Vec<CMatrix>,
    pub psi: Vec<CVector>,
    pub status: AoStatus,
    pub sca_iterations: usize,
}

impl AoTrace {
    pub fn final_max_crb(&self) -> f64 {
        *self.max_crb.last().expect("trace holds the initial point")
    }

    pub fn outer_iterations(&self) -> usize {
        self.max_crb.len() - 1
    }
}

/// Limits and model parameters for one scheme.
#[derive(Debug, Clone, Copy)]
pub struct Setting {
    pub case: SensingCase,
    pub limits: PowerLimits,
    pub params: FimParams,
}

impl Setting {
    pub fn new(
        case: SensingCase,
        config: &ScenarioConfig,
        scheme: Scheme,
        opts: &AoOptions,
    ) -> Self {
        let mut params = FimParams::from_config(config);
        let mut limits = PowerLimits {
            p_t: config.p_t,
            p_s: Some(config.p_s),
            a_max: config.a_max,
            sigma_r2: config.sigma_r2,
        };
        if scheme.passive() {
            limits.p_s = None;
            limits.a_max = 1.0;
            if opts.passive_zero_sigma_r {
                params.sigma_r2 = 0.0;
                limits.sigma_r2 = 0.0;
            }
        }
        Setting {
            case,
            limits,
            params,
        }
    }

    fn passive(&self) -> bool {
        self.limits.p_s.is_none()
    }
}

/// Exact CRB of one IRS; an unobservable configuration counts as infinite.
pub fn irs_crb(
    case: SensingCase,
    r_s: &CMatrix,
    psi: &CVector,
    link: &Link,
    params: &FimParams,
) -> Result<f64> {
    match fim(case, r_s, psi, link, params).and_then(|f| crb(&f)) {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        Ok(_) | Err(Error::SingularFim(_)) | Err(Error::SingularCovariance) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Per-IRS CRBs and the maximum (ties resolved to the lowest index).
pub fn evaluate(
    case: SensingCase,
    r_s: &[CMatrix],
    psi: &[CVector],
    channel: &ChannelSet,
    params: &FimParams,
) -> Result<(Vec<f64>, f64)> {
    let per = channel
        .links
        .iter()
        .enumerate()
        .map(|(l, link)| irs_crb(case, &r_s[l], &psi[l], link, params))
        .collect::<Result<Vec<f64>>>()?;
    let max = per.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok((per, max))
}

pub fn isotropic(config: &ScenarioConfig) -> CMatrix {
    CMatrix::identity(config.m, config.m) * C64::new(config.p_t / config.m as f64, 0.0)
}

/// Largest `u ∈ [0, 1]` with `a u² + b u ≤ budget` (`a, b ≥ 0`).
fn quadratic_scale(a: f64, b: f64, budget: f64) -> f64 {
    if a + b <= budget {
        return 1.0;
    }
    let u = if a > 0.0 {
        (-b + (b * b + 4.0 * a * budget).sqrt()) / (2.0 * a)
    } else {
        budget / b
    };
    (u * (1.0 - 1e-12)).clamp(0.0, 1.0)
}

/// Scales `Θ` down until the exact IRS power fits the budget.
fn scale_theta_to_power(setting: &Setting, theta: &CMatrix, r_s: &CMatrix, link: &Link) -> CMatrix {
    let Some(p_s) = setting.limits.p_s else {
        return theta.clone();
    };
    let s2 = setting.limits.sigma_r2;
    // power(uΘ) = a u² + b u
    let p1 = power_exact(setting.case, theta, r_s, link, s2);
    let half = power_exact(setting.case, &(theta * C64::new(0.5, 0.0)), r_s, link, s2);
    let a = (2.0 * p1 - 4.0 * half).max(0.0);
    let b = (p1 - a).max(0.0);
    theta * C64::new(quadratic_scale(a, b, p_s), 0.0)
}

fn scale_psi_to_power(setting: &Setting, psi: &CVector, r_s: &CMatrix, link: &Link) -> CVector {
    let theta = psi * psi.adjoint();
    let scaled = scale_theta_to_power(setting, &theta, r_s, link);
    let u = if theta[(0, 0)].re > 0.0 {
        scaled[(0, 0)].re / theta[(0, 0)].re
    } else {
        1.0
    };
    let u = if theta.trace().re > 0.0 {
        scaled.trace().re / theta.trace().re
    } else {
        u
    };
    psi * C64::new(u.sqrt(), 0.0)
}

fn amplitude_ok(psi: &CVector, setting: &Setting) -> bool {
    if setting.passive() {
        psi.iter().all(|z| (z.norm() - 1.0).abs() <= FEAS_TOL)
    } else {
        psi.iter()
            .all(|z| z.norm() <= setting.limits.a_max * (1.0 + FEAS_TOL))
    }
}

fn power_ok(setting: &Setting, theta: &CMatrix, r_s: &CMatrix, link: &Link) -> bool {
    match setting.limits.p_s {
        None => true,
        Some(p_s) => {
            power_exact(setting.case, theta, r_s, link, setting.limits.sigma_r2)
                <= p_s * (1.0 + FEAS_TOL)
        }
    }
}

/// Random-phase start `a_max e^{j arg r}`, scaled into the power budget.
pub fn initial_reflection(
    setting: &Setting,
    r_s: &CMatrix,
    link: &Link,
    rng: &mut ChaCha8Rng,
) -> CVector {
    let psi = CVector::from_fn(link.n(), |_, _| {
        let z = complex_gaussian(rng);
        C64::from_polar(setting.limits.a_max, z.arg())
    });
    scale_psi_to_power(setting, &psi, r_s, link)
}

/// Clamps covariances onto the BS and IRS power budgets.
fn enforce_transmit_budgets(
    setting: &Setting,
    r_s: &mut [CMatrix],
    psi: &[CVector],
    links: &[Link],
) {
    let l = r_s.len() as f64;
    let avg: f64 = r_s.iter().map(|r| r.trace().re).sum::<f64>() / l;
    if avg > setting.limits.p_t {
        let f = setting.limits.p_t / avg;
        r_s.iter_mut().for_each(|r| *r *= C64::new(f, 0.0));
    }
    if let Some(p_s) = setting.limits.p_s {
        for (i, r) in r_s.iter_mut().enumerate() {
            let theta = &psi[i] * psi[i].adjoint();
            let pw = crate::surrogate::power_affine_in_rs(
                setting.case,
                &theta,
                &links[i],
                setting.limits.sigma_r2,
            );
            let lin = pw.eval(r) - pw.constant;
            if pw.constant + lin > p_s && lin > 0.0 {
                *r *= C64::new(((p_s - pw.constant) / lin).max(0.0) * (1.0 - 1e-12), 0.0);
            }
        }
    }
}

/// Transmit step. Returns the new covariances and their max-CRB; keeps
/// `r_prev` when the solved covariances are not better.
pub fn optimize_transmit(
    setting: &Setting,
    psi: &[CVector],
    channel: &ChannelSet,
    r_prev: &[CMatrix],
    opts: &AoOptions,
) -> Result<(Vec<CMatrix>, f64)> {
    let (_, prev) = evaluate(setting.case, r_prev, psi, channel, &setting.params)?;
    let sdp = build_transmit_sdp(
        setting.case,
        psi,
        &channel.links,
        r_prev,
        &setting.params,
        &setting.limits,
    )?;
    let (mut r_new, _) = match sdp.solve(opts.sdp_tol, opts.sdp_max_iter) {
        Ok(v) => v,
        Err(Error::Solver { status, context }) => {
            log::warn!("transmit step kept previous covariances: {status:?} {context}");
            return Ok((r_prev.to_vec(), prev));
        }
        Err(e) => return Err(e),
    };
    enforce_transmit_budgets(setting, &mut r_new, psi, &channel.links);
    let (_, val) = evaluate(setting.case, &r_new, psi, channel, &setting.params)?;
    if val < prev {
        Ok((r_new, val))
    } else {
        Ok((r_prev.to_vec(), prev))
    }
}

#[derive(Debug, Clone)]
pub struct ScaResult {
    pub theta: HermitianMatrix,
    /// Lifted CRB at the initial point and after every accepted iteration.
    pub crb_trace: Vec<f64>,
    pub iterations: usize,
}

fn lifted_crb(setting: &Setting, theta: &HermitianMatrix, r_s: &CMatrix, link: &Link) -> f64 {
    match fim_lifted(setting.case, theta, r_s, link, &setting.params).and_then(|f| crb(&f)) {
        Ok(v) if v.is_finite() && v > 0.0 => v,
        _ => f64::INFINITY,
    }
}

/// Successive convex approximation for the reflection matrix of one IRS.
pub fn optimize_reflective_sca(
    setting: &Setting,
    theta_init: &HermitianMatrix,
    r_s: &CMatrix,
    link: &Link,
    opts: &AoOptions,
) -> Result<ScaResult> {
    let th0 = theta_init.as_matrix();
    let diag_max = (0..th0.nrows()).map(|k| th0[(k, k)].re).fold(0.0, f64::max);
    let amp_limit = if setting.passive() {
        1.0
    } else {
        setting.limits.a_max * setting.limits.a_max
    };
    if diag_max > amp_limit * (1.0 + FEAS_TOL) || !power_ok(setting, th0, r_s, link) {
        return Err(Error::InfeasibleAnchor(format!(
            "max diagonal {diag_max:.4e} (limit {amp_limit:.4e}) or power budget exceeded"
        )));
    }
    let mut theta = theta_init.clone();
    let mut current = lifted_crb(setting, &theta, r_s, link);
    let mut trace = vec![current];
    let mut iterations = 0;
    for _ in 0..opts.max_sca_iters {
        iterations += 1;
        let ctx = SurrogateContext::new(setting.case, &theta, r_s, link, &setting.params)?;
        let sdp = build_reflective_sdp(&ctx, link, r_s, &setting.limits)?;
        let target = match sdp.solve(opts.sdp_tol, opts.sdp_max_iter) {
            Ok((t, _)) => t,
            Err(Error::Solver { status, context }) => {
                log::debug!("reflection step stopped: {status:?} {context}");
                break;
            }
            Err(e) => return Err(e),
        };
        let dir = target.as_matrix() - theta.as_matrix();
        let mut accepted = None;
        let mut tau = 1.0;
        for _ in 0..8 {
            let cand = theta.as_matrix() + &dir * C64::new(tau, 0.0);
            let cand = scale_theta_to_power(setting, &cand, r_s, link);
            let cand = HermitianMatrix::project(&cand);
            let val = lifted_crb(setting, &cand, r_s, link);
            if val < current {
                accepted = Some((cand, val));
                break;
            }
            tau *= 0.5;
        }
        let Some((cand, val)) = accepted else {
            break;
        };
        let rel = (current - val) / current;
        theta = cand;
        current = val;
        trace.push(val);
        if rel < opts.rel_tol {
            break;
        }
    }
    Ok(ScaResult {
        theta,
        crb_trace: trace,
        iterations,
    })
}

/// Rank-one extraction from a relaxed `Θ`.
///
/// Candidate 0 is the principal eigenvector scaled by `√λ_max`; the remaining
/// `n − 1` are `Θ^{1/2} r` with `r ~ CN(0, I)` drawn from `rng`. Every candidate
/// is clipped to the amplitude limit (unit modulus for passive IRSs) and
/// screened by the exact power. `incumbent`, when given, competes as well.
pub fn gaussian_randomization(
    theta: &HermitianMatrix,
    setting: &Setting,
    r_s: &CMatrix,
    link: &Link,
    n: usize,
    rng: &mut ChaCha8Rng,
    incumbent: Option<&CVector>,
) -> Result<CVector> {
    let dim = theta.dim();
    let sqrt = psd_sqrt(theta)?;
    let (vals, vecs) = theta.eig();
    let clip = |psi: CVector| -> CVector {
        if setting.passive() {
            psi.map(|z| {
                if z.norm() > 0.0 {
                    z / z.norm()
                } else {
                    C64::new(1.0, 0.0)
                }
            })
        } else {
            let peak = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if peak > setting.limits.a_max {
                psi * C64::new(setting.limits.a_max / peak, 0.0)
            } else {
                psi
            }
        }
    };
    let mut best: Option<(f64, CVector)> = None;
    let mut rejected_power = 0;
    let mut consider = |psi: CVector, best: &mut Option<(f64, CVector)>| -> Result<()> {
        let th = &psi * psi.adjoint();
        if !power_ok(setting, &th, r_s, link) {
            rejected_power += 1;
            return Ok(());
        }
        let val = irs_crb(setting.case, r_s, &psi, link, &setting.params)?;
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            *best = Some((val, psi));
        }
        Ok(())
    };
    for i in 0..n {
        let psi = if i == 0 {
            vecs.column(dim - 1) * C64::new(vals[dim - 1].max(0.0).sqrt(), 0.0)
        } else {
            let r = CVector::from_fn(dim, |_, _| complex_gaussian(rng));
            &sqrt * r
        };
        consider(clip(psi), &mut best)?;
    }
    if let Some(inc) = incumbent {
        consider(inc.clone(), &mut best)?;
    }
    match best {
        Some((_, psi)) => Ok(psi),
        None => Err(Error::NoFeasibleCandidate(format!(
            "all {rejected_power} candidates exceed the IRS power budget"
        ))),
    }
}

/// Trades BS power for IRS gain on one link: `ψ ← cψ` with `c > 1` up to the
/// amplitude limit and `R ← uR` with the largest `u ≤ 1` that keeps the IRS
/// power in budget. Returns the best candidate that lowers the CRB.
pub fn rebalance_gain(
    setting: &Setting,
    psi: &CVector,
    r_s: &CMatrix,
    link: &Link,
    current: f64,
) -> Result<Option<(CVector, CMatrix, f64)>> {
    let Some(p_s) = setting.limits.p_s else {
        return Ok(None);
    };
    let peak = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if peak <= 0.0 {
        return Ok(None);
    }
    let c_max = setting.limits.a_max / peak;
    if c_max <= 1.0 + 1e-9 {
        return Ok(None);
    }
    let mut best: Option<(CVector, CMatrix, f64)> = None;
    for t in [1.0, 0.5, 0.25] {
        let cand = psi * C64::new(c_max.powf(t) * (1.0 - 1e-12), 0.0);
        let theta = &cand * cand.adjoint();
        let pw = crate::surrogate::power_affine_in_rs(
            setting.case,
            &theta,
            link,
            setting.limits.sigma_r2,
        );
        let lin = pw.eval(r_s) - pw.constant;
        if pw.constant >= p_s || lin <= 0.0 {
            continue;
        }
        let u = ((p_s - pw.constant) / lin).min(1.0) * (1.0 - 1e-12);
        let r = r_s * C64::new(u, 0.0);
        let val = irs_crb(setting.case, &r, &cand, link, &setting.params)?;
        if val < best.as_ref().map_or(current, |b| b.2) {
            best = Some((cand, r, val));
        }
    }
    Ok(best)
}

/// Starting point of every scheme: isotropic covariances and random-phase reflection.
pub fn initial_point(
    setting: &Setting,
    channel: &ChannelSet,
    config: &ScenarioConfig,
    opts: &AoOptions,
) -> (Vec<CMatrix>, Vec<CVector>) {
    let r0 = isotropic(config);
    let r_s = vec![r0.clone(); channel.len()];
    let psi = channel
        .links
        .iter()
        .enumerate()
        .map(|(l, link)| {
            let mut rng = substream(opts.seed, opts.draw, l, Stream::Init);
            initial_reflection(setting, &r0, link, &mut rng)
        })
        .collect();
    (r_s, psi)
}

/// The proposed alternating optimization.
pub fn alternating_optimize(
    case: SensingCase,
    channel: &ChannelSet,
    config: &ScenarioConfig,
    opts: &AoOptions,
) -> Result<AoTrace> {
    run_benchmark(Scheme::Proposed, case, channel, config, opts)
}

pub fn run_benchmark(
    scheme: Scheme,
    case: SensingCase,
    channel: &ChannelSet,
    config: &ScenarioConfig,
    opts: &AoOptions,
) -> Result<AoTrace> {
    opts.validate()?;
    let setting = Setting::new(case, config, scheme, opts);
    let (mut r_s, mut psi) = initial_point(&setting, channel, config, opts);
    let (mut per, mut current) = evaluate(case, &r_s, &psi, channel, &setting.params)?;
    let mut trace = AoTrace {
        scheme,
        case,
        max_crb: vec![current],
        per_irs_crb: per.clone(),
        r_s: Vec::new(),
        psi: Vec::new(),
        status: AoStatus::MaxIter,
        sca_iterations: 0,
    };
    let mut rngs: Vec<ChaCha8Rng> = (0..channel.len())
        .map(|l| substream(opts.seed, opts.draw, l, Stream::Randomization))
        .collect();

    for outer in 0..opts.max_outer_iters {
        if scheme.optimizes_transmit() && scheme.optimizes_reflection() {
            for (l, link) in channel.links.iter().enumerate() {
                let cur = irs_crb(case, &r_s[l], &psi[l], link, &setting.params)?;
                if let Some((p, r, _)) = rebalance_gain(&setting, &psi[l], &r_s[l], link, cur)? {
                    psi[l] = p;
                    r_s[l] = r;
                }
            }
        }
        let steps: [bool; 2] = if opts.transmit_first {
            [true, false]
        } else {
            [false, true]
        };
        for transmit in steps {
            if transmit && scheme.optimizes_transmit() {
                let (r_new, _) = optimize_transmit(&setting, &psi, channel, &r_s, opts)?;
                r_s = r_new;
            }
            if !transmit && scheme.optimizes_reflection() {
                let results: Vec<Result<(CVector, usize)>> = channel
                    .links
                    .par_iter()
                    .zip(rngs.par_iter_mut())
                    .enumerate()
                    .map(|(l, (link, rng))| {
                        let theta = HermitianMatrix::outer(&psi[l]);
                        let sca = optimize_reflective_sca(&setting, &theta, &r_s[l], link, opts)?;
                        let new_psi = gaussian_randomization(
                            &sca.theta,
                            &setting,
                            &r_s[l],
                            link,
                            opts.n_randomizations,
                            rng,
                            Some(&psi[l]),
                        )?;
                        Ok((new_psi, sca.iterations))
                    })
                    .collect();
                for (l, res) in results.into_iter().enumerate() {
                    let (p, its) = res?;
                    psi[l] = p;
                    trace.sca_iterations += its;
                }
            }
        }
        let (new_per, new_max) = evaluate(case, &r_s, &psi, channel, &setting.params)?;
        log::debug!(
            "{scheme} {} outer {outer}: max-CRB {new_max:.6e}",
            case.label()
        );
        let rel = if current.is_finite() {
            (current - new_max) / current
        } else {
            1.0
        };
        per = new_per;
        current = new_max;
        trace.max_crb.push(current);
        if rel.abs() < opts.rel_tol {
            trace.status = AoStatus::Converged;
            break;
        }
    }
    debug_assert!(psi.iter().all(|p| amplitude_ok(p, &setting)));
    trace.per_irs_crb = per;
    trace.r_s = r_s;
    trace.psi = psi;
    Ok(trace)
}

/// Re-checks BS power, per-IRS exact power and amplitudes of a design.
pub fn check_feasibility(
    case: SensingCase,
    scheme: Scheme,
    trace: &AoTrace,
    channel: &ChannelSet,
    config: &ScenarioConfig,
    opts: &AoOptions,
) -> std::result::Result<(), String> {
    let setting = Setting::new(case, config, scheme, opts);
    let avg = trace.r_s.iter().map(|r| r.trace().re).sum::<f64>() / trace.r_s.len() as f64;
    if avg > config.p_t * (1.0 + FEAS_TOL) {
        return Err(format!("BS power {avg} exceeds {}", config.p_t));
    }
    for (l, link) in channel.links.iter().enumerate() {
        let psi = &trace.psi[l];
        if !amplitude_ok(psi, &setting) {
            return Err(format!("amplitude limit violated at IRS {l}"));
        }
        let th = psi * psi.adjoint();
        if !power_ok(&setting, &th, &trace.r_s[l], link) {
            return Err(format!("IRS {l} power budget violated"));
        }
        let (vals, _) = HermitianMatrix::project(&trace.r_s[l]).eig();
        if vals[0] < -1e-9 * vals[vals.len() - 1].abs().max(1e-300) {
            return Err(format!("covariance {l} is not PSD"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn small() -> (ScenarioConfig, ChannelSet) {
        let cfg = ScenarioConfig {
            m: 4,
            n_h: 2,
            n_v: 2,
            sensor_n_h: 2,
            sensor_n_v: 2,
            seed: 3,
            ..Default::default()
        };
        let channel = ChannelSet::synthesize(&cfg, 0).unwrap();
        (cfg, channel)
    }

    fn opts() -> AoOptions {
        AoOptions {
            max_outer_iters: 4,
            n_randomizations: 30,
            seed: 3,
            ..Default::default()
        }
    }

    const CASES: [SensingCase; 2] = [SensingCase::AtBs, SensingCase::AtIrs];

    #[test]
    fn zero_outer_iterations_keep_initial_point() {
        let (cfg, channel) = small();
        let o = AoOptions {
            max_outer_iters: 0,
            ..opts()
        };
        for case in CASES {
            let tr = alternating_optimize(case, &channel, &cfg, &o).unwrap();
            assert_eq!(tr.max_crb.len(), 1);
            assert_eq!(tr.outer_iterations(), 0);
            let setting = Setting::new(case, &cfg, Scheme::Proposed, &o);
            let (r0, p0) = initial_point(&setting, &channel, &cfg, &o);
            assert_eq!(tr.r_s, r0);
            assert_eq!(tr.psi, p0);
            let (_, max) = evaluate(case, &r0, &p0, &channel, &setting.params).unwrap();
            assert_eq!(tr.final_max_crb(), max);
        }
    }

    #[test]
    fn deterministic() {
        let (cfg, channel) = small();
        let a = alternating_optimize(SensingCase::AtBs, &channel, &cfg, &opts()).unwrap();
        let b = alternating_optimize(SensingCase::AtBs, &channel, &cfg, &opts()).unwrap();
        assert_eq!(a.max_crb, b.max_crb);
        assert_eq!(a.psi, b.psi);
    }

    #[test]
    fn every_scheme_is_monotone_and_feasible() {
        let (cfg, channel) = small();
        let o = opts();
        for case in CASES {
            for scheme in Scheme::ALL {
                let tr = run_benchmark(scheme, case, &channel, &cfg, &o).unwrap();
                for w in tr.max_crb.windows(2) {
                    assert!(
                        w[1] <= w[0] * (1.0 + 1e-6),
                        "{scheme} {case:?}: {:?}",
                        tr.max_crb
                    );
                }
                check_feasibility(case, scheme, &tr, &channel, &cfg, &o).unwrap();
                assert_eq!(
                    tr.per_irs_crb.iter().cloned().fold(0.0, f64::max),
                    tr.final_max_crb()
                );
            }
        }
    }

    #[test]
    fn benchmark_structure() {
        let (cfg, channel) = small();
        let o = opts();
        let tr = run_benchmark(Scheme::PassiveIrs, SensingCase::AtBs, &channel, &cfg, &o).unwrap();
        for p in &tr.psi {
            assert!(p.iter().all(|z| (z.norm() - 1.0).abs() < 1e-9));
        }
        let tr = run_benchmark(
            Scheme::ReflectiveOnly,
            SensingCase::AtIrs,
            &channel,
            &cfg,
            &o,
        )
        .unwrap();
        for r in &tr.r_s {
            assert_eq!(*r, isotropic(&cfg));
            assert!((r.trace().re - cfg.p_t).abs() < 1e-12);
        }
        let tr =
            run_benchmark(Scheme::TransmitOnly, SensingCase::AtBs, &channel, &cfg, &o).unwrap();
        let setting = Setting::new(SensingCase::AtBs, &cfg, Scheme::TransmitOnly, &o);
        let (_, p0) = initial_point(&setting, &channel, &cfg, &o);
        assert_eq!(tr.psi, p0);
    }

    #[test]
    fn randomization_recovers_rank_one() {
        let (cfg, channel) = small();
        let o = opts();
        let link = &channel.links[0];
        let r0 = isotropic(&cfg);
        for case in CASES {
            let setting = Setting::new(case, &cfg, Scheme::Proposed, &o);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let psi = initial_reflection(&setting, &r0, link, &mut rng);
            let theta = HermitianMatrix::outer(&psi);
            let got =
                gaussian_randomization(&theta, &setting, &r0, link, 20, &mut rng, None).unwrap();
            let inner = psi.dotc(&got).norm();
            assert!(
                (inner - psi.norm() * got.norm()).abs() <= 1e-9 * inner,
                "not collinear"
            );
            let want = irs_crb(case, &r0, &psi, link, &setting.params).unwrap();
            let val = irs_crb(case, &r0, &got, link, &setting.params).unwrap();
            assert!(val <= want * (1.0 + 1e-9), "{val} > {want}");
        }
    }

    #[test]
    fn rebalance_lowers_crb_within_budget() {
        let (cfg, channel) = small();
        let o = opts();
        let link = &channel.links[0];
        let r0 = isotropic(&cfg);
        let mut hits = 0;
        for case in CASES {
            let setting = Setting::new(case, &cfg, Scheme::Proposed, &o);
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            // start well inside the amplitude limit so there is gain to trade
            let psi = initial_reflection(&setting, &r0, link, &mut rng) * C64::new(0.1, 0.0);
            let cur = irs_crb(case, &r0, &psi, link, &setting.params).unwrap();
            if let Some((p, r, val)) = rebalance_gain(&setting, &psi, &r0, link, cur).unwrap() {
                hits += 1;
                assert!(val < cur);
                assert_eq!(val, irs_crb(case, &r, &p, link, &setting.params).unwrap());
                assert!(amplitude_ok(&p, &setting));
                assert!(power_ok(&setting, &(&p * p.adjoint()), &r, link));
                assert!(r.trace().re <= r0.trace().re * (1.0 + 1e-12));
            }
            // at the amplitude limit there is nothing to trade
            let peak = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let full = &psi * C64::new(cfg.a_max / peak, 0.0);
            assert!(rebalance_gain(&setting, &full, &r0, link, cur)
                .unwrap()
                .is_none());
        }
        assert!(hits > 0);
        let passive = Setting::new(SensingCase::AtBs, &cfg, Scheme::PassiveIrs, &o);
        let psi = CVector::from_element(link.n(), C64::new(0.5, 0.0));
        assert!(rebalance_gain(&passive, &psi, &r0, link, 1.0)
            .unwrap()
            .is_none());
    }

    #[test]
    fn feasibility_check_flags_violations() {
        let (cfg, channel) = small();
        let o = AoOptions {
            max_outer_iters: 1,
            ..opts()
        };
        let mut tr =
            run_benchmark(Scheme::Proposed, SensingCase::AtBs, &channel, &cfg, &o).unwrap();
        check_feasibility(SensingCase::AtBs, Scheme::Proposed, &tr, &channel, &cfg, &o).unwrap();
        let saved = tr.clone();
        tr.r_s.iter_mut().for_each(|r| *r *= C64::new(2.0, 0.0));
        assert!(
            check_feasibility(SensingCase::AtBs, Scheme::Proposed, &tr, &channel, &cfg, &o)
                .is_err()
        );
        let mut tr = saved;
        tr.psi[0][0] = C64::new(2.0 * cfg.a_max, 0.0);
        assert!(
            check_feasibility(SensingCase::AtBs, Scheme::Proposed, &tr, &channel, &cfg, &o)
                .is_err()
        );
    }

    #[test]
    fn scheme_labels_round_trip() {
        for s in Scheme::ALL {
            assert_eq!(s.label().parse::<Scheme>().unwrap(), s);
        }
        assert!("bogus".parse::<Scheme>().is_err());
        assert!(AoOptions {
            rel_tol: 0.0,
            ..opts()
        }
        .validate()
        .is_err());
        assert!(AoOptions {
            n_randomizations: 0,
            ..opts()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn quadratic_scale_fits_budget() {
        assert_eq!(quadratic_scale(1.0, 1.0, 5.0), 1.0);
        let u = quadratic_scale(2.0, 1.0, 1.0);
        assert!((2.0 * u * u + u - 1.0).abs() < 1e-9 && 2.0 * u * u + u <= 1.0);
        let u = quadratic_scale(0.0, 4.0, 1.0);
        assert!((u - 0.25).abs() < 1e-9);
    }
}
