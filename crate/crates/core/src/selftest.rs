//! Quick oracle and invariant checks, run by the `selftest` subcommand.

use crate::fim::{crb, fim, fim_numeric_oracle, FimParams, SensingCase};
use crate::numerics::{CMatrix, CVector, HermitianMatrix, C64};
use crate::scenario::{complex_gaussian, ChannelSet, ScenarioConfig};
use crate::sdp::{solve, Cone, ConicProgram, RVector, Status};
use crate::steering::{steering_bundle, steering_upa, Doa};
use crate::surrogate::{power_bs_exact, power_bs_linearized, power_bs_matrix, SurrogateContext};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, value: f64, limit: f64) -> Check {
    Check {
        name,
        passed: value.is_finite() && value <= limit,
        detail: format!("{value:.3e} (limit {limit:.0e})"),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn small_setup() -> (ScenarioConfig, ChannelSet, CMatrix, CVector) {
    let cfg = ScenarioConfig {
        m: 4,
        n_h: 2,
        n_v: 2,
        sensor_n_h: 2,
        sensor_n_v: 2,
        seed: 7,
        ..Default::default()
    };
    let channel = ChannelSet::synthesize(&cfg, 0).expect("default topology is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let b = CMatrix::from_fn(cfg.m, cfg.m, |_, _| complex_gaussian(&mut rng));
    let r_s = &b * b.adjoint();
    let r_s = &r_s * C64::new(cfg.p_t / r_s.trace().re, 0.0);
    let psi = CVector::from_fn(4, |_, _| complex_gaussian(&mut rng) * C64::new(3.0, 0.0));
    (cfg, channel, r_s, psi)
}

fn steering_derivatives() -> Check {
    let cfg = ScenarioConfig::default();
    let geom = cfg.reflect_geometry();
    let doa = Doa::new(1.1, 0.4);
    let b = steering_bundle(&geom, &doa);
    let h = 1e-6;
    let fd = |dt: f64, dp: f64| {
        (steering_upa(&geom, &Doa::new(doa.theta + dt, doa.phi + dp))
            - steering_upa(&geom, &Doa::new(doa.theta - dt, doa.phi - dp)))
            / C64::new(2.0 * h, 0.0)
    };
    let et = (fd(h, 0.0) - &b.da_theta).norm() / b.da_theta.norm();
    let ep = (fd(0.0, h) - &b.da_phi).norm() / b.da_phi.norm();
    check(
        "steering derivatives vs central differences",
        et.max(ep),
        1e-6,
    )
}

fn fim_oracle(case: SensingCase, name: &'static str) -> Check {
    let (cfg, channel, r_s, psi) = small_setup();
    let params = FimParams::from_config(&cfg);
    let link = &channel.links[0];
    let closed = match fim(case, &r_s, &psi, link, &params) {
        Ok(f) => f,
        Err(e) => {
            return Check {
                name,
                passed: false,
                detail: e.to_string(),
            }
        }
    };
    match fim_numeric_oracle(case, &r_s, &psi, link, &params, 1e-6) {
        Ok((num, _)) => check(name, closed.rel_diff(&num), 1e-4),
        Err(e) => Check {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn surrogate_tangency() -> Check {
    let (cfg, channel, r_s, psi) = small_setup();
    let params = FimParams::from_config(&cfg);
    let link = &channel.links[0];
    let anchor = HermitianMatrix::outer(&psi);
    let mut worst = 0.0f64;
    for case in [SensingCase::AtBs, SensingCase::AtIrs] {
        let ctx = match SurrogateContext::new(case, &anchor, &r_s, link, &params) {
            Ok(c) => c,
            Err(e) => {
                return Check {
                    name: "surrogate tangency",
                    passed: false,
                    detail: e.to_string(),
                }
            }
        };
        let exact = fim(case, &r_s, &psi, link, &params).expect("finite FIM");
        worst = worst.max(
            ctx.fim_linearized()
                .eval(anchor.as_matrix())
                .rel_diff(&exact),
        );
    }
    let lin =
        power_bs_linearized(anchor.as_matrix(), &r_s, link, cfg.sigma_r2).eval(anchor.as_matrix());
    worst = worst.max(rel(
        lin,
        power_bs_exact(anchor.as_matrix(), &r_s, link, cfg.sigma_r2),
    ));
    check("surrogate tangency at the anchor", worst, 1e-9)
}

fn power_forms() -> Check {
    let (cfg, channel, r_s, psi) = small_setup();
    let link = &channel.links[0];
    let theta = &psi * psi.adjoint();
    let a = power_bs_matrix(&psi, &r_s, link, cfg.sigma_r2);
    let b = power_bs_exact(&theta, &r_s, link, cfg.sigma_r2);
    check("IRS power, matrix form vs lifted form", rel(a, b), 1e-9)
}

fn dwell_time_scaling() -> Check {
    let (cfg, channel, r_s, psi) = small_setup();
    let link = &channel.links[0];
    let mut worst = 0.0f64;
    for case in [SensingCase::AtBs, SensingCase::AtIrs] {
        let p1 = FimParams::from_config(&cfg);
        let p2 = FimParams {
            symbols: 2.0 * p1.symbols,
            ..p1
        };
        let c1 = fim(case, &r_s, &psi, link, &p1).and_then(|f| crb(&f));
        let c2 = fim(case, &r_s, &psi, link, &p2).and_then(|f| crb(&f));
        match (c1, c2) {
            (Ok(a), Ok(b)) => worst = worst.max(rel(a, 2.0 * b)),
            _ => worst = f64::INFINITY,
        }
    }
    check("CRB halves when the dwell time doubles", worst, 1e-10)
}

fn min_eigenvalue_sdp() -> Check {
    // min tr(CX) s.t. tr X = 1, X ⪰ 0 with C = diag(3, 1, 2)
    let c = RVector::from_vec(vec![3.0, 0.0, 0.0, 1.0, 0.0, 2.0]);
    let a = DMatrix::from_row_slice(1, 6, &[1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    let prog = ConicProgram {
        c,
        a,
        b: RVector::from_vec(vec![1.0]),
        cones: vec![Cone::Psd(3)],
    };
    let sol = solve(&prog, 1e-8, 100);
    if sol.status != Status::Optimal {
        return Check {
            name: "min-eigenvalue SDP",
            passed: false,
            detail: format!("{:?}", sol.status),
        };
    }
    check("min-eigenvalue SDP", (sol.objective - 1.0).abs(), 1e-6)
}

/// Runs every check; all must pass for a healthy build.
pub fn run() -> Vec<Check> {
    vec![
        steering_derivatives(),
        fim_oracle(
            SensingCase::AtBs,
            "FIM closed form vs oracle (sensing at BS)",
        ),
        fim_oracle(
            SensingCase::AtIrs,
            "FIM closed form vs oracle (sensing at IRS)",
        ),
        surrogate_tangency(),
        power_forms(),
        dwell_time_scaling(),
        min_eigenvalue_sdp(),
    ]
}
