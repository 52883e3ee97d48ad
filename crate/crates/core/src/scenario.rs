//! Scenario description and channel synthesis.
//!
//! Local frames: every node uses the global axes. The polar angle is measured
//! from +z and the azimuth from +x, so in the default topology the IRS
//! boresight (+x) faces the target half-space.

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, C64};
use crate::steering::{steering_bundle, steering_upa, ArrayGeometry, Doa, SteeringBundle};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Point = [f64; 3];

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Substream purposes for [`substream`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Channel = 0,
    Beta = 1,
    Init = 2,
    Randomization = 3,
}

/// Independent generator for one `(draw, irs, purpose)` triple.
pub fn substream(seed: u64, draw: usize, irs: usize, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((draw as u64) << 32) | ((irs as u64) << 8) | purpose as u64);
    rng
}

/// One sample of `CN(0, 1)`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub bs_position: Point,
    pub irs_positions: Vec<Point>,
    pub target_position: Point,
    /// BS antennas (uniform linear array).
    pub m: usize,
    pub n_h: usize,
    pub n_v: usize,
    pub sensor_n_h: usize,
    pub sensor_n_v: usize,
    /// Element spacings in meters; `None` means half a wavelength.
    pub d_h: Option<f64>,
    pub d_v: Option<f64>,
    pub sensor_d_h: Option<f64>,
    pub sensor_d_v: Option<f64>,
    pub p_t: f64,
    pub p_s: f64,
    pub a_max: f64,
    pub sigma_r2: f64,
    pub sigma_b2: f64,
    pub sigma_s2: f64,
    pub t_c: usize,
    pub k_factor_db: f64,
    pub rcs: f64,
    pub wavelength: f64,
    /// Explicit `[re, im]` target coefficients, one per IRS.
    pub beta: Option<Vec<[f64; 2]>>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let sigma2 = dbm_to_watts(-80.0);
        ScenarioConfig {
            bs_position: [0.0, 0.0, 0.0],
            irs_positions: vec![[-5.0, 10.0, 0.0], [-5.0, 20.0, 0.0]],
            target_position: [5.0, 15.0, 0.0],
            m: 8,
            n_h: 4,
            n_v: 4,
            sensor_n_h: 4,
            sensor_n_v: 4,
            d_h: None,
            d_v: None,
            sensor_d_h: None,
            sensor_d_v: None,
            p_t: 10.0,
            p_s: 0.1,
            a_max: 8.0,
            sigma_r2: sigma2,
            sigma_b2: sigma2,
            sigma_s2: sigma2,
            t_c: 100,
            k_factor_db: 5.0,
            rcs: 1.0,
            wavelength: 0.1,
            beta: None,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn n_irs(&self) -> usize {
        self.irs_positions.len()
    }

    pub fn bs_geometry(&self) -> ArrayGeometry {
        ArrayGeometry::ula(self.m, self.wavelength)
    }

    pub fn reflect_geometry(&self) -> ArrayGeometry {
        let half = self.wavelength / 2.0;
        ArrayGeometry {
            n_h: self.n_h,
            n_v: self.n_v,
            d_h: self.d_h.unwrap_or(half),
            d_v: self.d_v.unwrap_or(half),
            wavelength: self.wavelength,
        }
    }

    pub fn sensor_geometry(&self) -> ArrayGeometry {
        let half = self.wavelength / 2.0;
        ArrayGeometry {
            n_h: self.sensor_n_h,
            n_v: self.sensor_n_v,
            d_h: self.sensor_d_h.unwrap_or(half),
            d_v: self.sensor_d_v.unwrap_or(half),
            wavelength: self.wavelength,
        }
    }

    /// Symbols spent on each IRS in the time-division schedule.
    pub fn symbols_per_irs(&self) -> f64 {
        self.t_c as f64 / self.n_irs().max(1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.irs_positions.is_empty() {
            return bad("at least one IRS position is required");
        }
        if self.m == 0 {
            return bad("m must be at least 1");
        }
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.p_t) || !pos(self.p_s) {
            return bad("p_t and p_s must be positive");
        }
        if !pos(self.sigma_b2) || !pos(self.sigma_s2) || !(self.sigma_r2 >= 0.0) {
            return bad("noise powers must be positive (sigma_r2 may be zero)");
        }
        if !(self.a_max >= 1.0) || !self.a_max.is_finite() {
            return bad("a_max must be at least 1");
        }
        if self.t_c == 0 || self.t_c % self.n_irs() != 0 {
            return bad("t_c must be a positive multiple of the number of IRSs");
        }
        if !(self.rcs >= 0.0) || self.k_factor_db.is_nan() {
            return bad("rcs must be non-negative and k_factor_db a number");
        }
        if let Some(b) = &self.beta {
            if b.len() != self.n_irs() {
                return bad("beta override needs one entry per IRS");
            }
        }
        self.bs_geometry().validate()?;
        self.reflect_geometry().validate()?;
        self.sensor_geometry().validate()?;
        Ok(())
    }
}

fn direction(from: &Point, to: &Point) -> (Doa, f64) {
    let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
    let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if r == 0.0 {
        return (Doa::new(PI / 2.0, 0.0), 0.0);
    }
    let theta = (d[2] / r).clamp(-1.0, 1.0).acos();
    let phi = d[1].atan2(d[0]);
    (Doa::new(theta, phi), r)
}

/// Target angles seen from each IRS.
pub fn derive_truth(config: &ScenarioConfig) -> Result<Vec<Doa>> {
    config
        .irs_positions
        .iter()
        .enumerate()
        .map(|(l, p)| {
            let (doa, r) = direction(p, &config.target_position);
            if r == 0.0 {
                Err(Error::ZeroDistance(l))
            } else {
                Ok(doa)
            }
        })
        .collect()
}

pub fn path_gain(wavelength: f64, d: f64) -> f64 {
    (wavelength / (4.0 * PI * d)).powi(2)
}

/// Rician `N × M` channel from the BS to IRS `l`.
pub fn synth_channel<R: Rng + ?Sized>(config: &ScenarioConfig, l: usize, rng: &mut R) -> CMatrix {
    let irs = &config.irs_positions[l];
    let (to_irs, d) = direction(&config.bs_position, irs);
    let (to_bs, _) = direction(irs, &config.bs_position);
    let a_bs = steering_upa(&config.bs_geometry(), &to_irs);
    let a_irs = steering_upa(&config.reflect_geometry(), &to_bs);
    let los = &a_irs * a_bs.transpose();
    let kappa = db_to_linear(config.k_factor_db);
    let rho = path_gain(config.wavelength, d.max(f64::MIN_POSITIVE));
    let (w_los, w_nlos) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    };
    let mut g = CMatrix::zeros(los.nrows(), los.ncols());
    // column-major fill keeps the draw order fixed
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let nlos = complex_gaussian(rng);
            g[(i, j)] = (los[(i, j)] * w_los + nlos * w_nlos) * rho.sqrt();
        }
    }
    g
}

/// Bistatic radar-equation magnitude with a uniformly random phase.
pub fn compute_beta<R: Rng + ?Sized>(config: &ScenarioConfig, l: usize, rng: &mut R) -> C64 {
    let phase: f64 = rng.random_range(-PI..PI);
    if let Some(b) = &config.beta {
        return C64::new(b[l][0], b[l][1]);
    }
    let (_, d) = direction(&config.irs_positions[l], &config.target_position);
    C64::from_polar(beta_magnitude(config.wavelength, config.rcs, d), phase)
}

pub fn beta_magnitude(wavelength: f64, rcs: f64, d: f64) -> f64 {
    (wavelength * wavelength * rcs / ((4.0 * PI).powi(3) * d.powi(4))).sqrt()
}

/// Per-IRS quantities the Fisher information and power models consume.
#[derive(Debug, Clone)]
pub struct Link {
    pub g: CMatrix,
    pub reflect_geom: ArrayGeometry,
    pub sensor_geom: ArrayGeometry,
    pub doa: Doa,
    pub beta: C64,
    pub reflect: SteeringBundle,
    pub sensor: SteeringBundle,
    pub dist_bs_irs: f64,
    pub dist_irs_target: f64,
}

impl Link {
    pub fn n(&self) -> usize {
        self.g.nrows()
    }
    pub fn m(&self) -> usize {
        self.g.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub links: Vec<Link>,
}

impl ChannelSet {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn g(&self) -> Vec<&CMatrix> {
        self.links.iter().map(|l| &l.g).collect()
    }

    /// Draw `draw` of the channel ensemble for `config` (seeded by `config.seed`).
    pub fn synthesize(config: &ScenarioConfig, draw: usize) -> Result<Self> {
        config.validate()?;
        let truth = derive_truth(config)?;
        let links = truth
            .into_iter()
            .enumerate()
            .map(|(l, doa)| {
                let mut ch_rng = substream(config.seed, draw, l, Stream::Channel);
                let mut beta_rng = substream(config.seed, draw, l, Stream::Beta);
                let g = synth_channel(config, l, &mut ch_rng);
                let beta = compute_beta(config, l, &mut beta_rng);
                let (_, d_bi) = direction(&config.bs_position, &config.irs_positions[l]);
                let (_, d_it) = direction(&config.irs_positions[l], &config.target_position);
                Link {
                    g,
                    reflect_geom: config.reflect_geometry(),
                    sensor_geom: config.sensor_geometry(),
                    doa,
                    beta,
                    reflect: steering_bundle(&config.reflect_geometry(), &doa),
                    sensor: steering_bundle(&config.sensor_geometry(), &doa),
                    dist_bs_irs: d_bi,
                    dist_irs_target: d_it,
                }
            })
            .collect();
        Ok(ChannelSet { links })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boresight_truth() {
        let cfg = ScenarioConfig {
            irs_positions: vec![[0.0, 0.0, 0.0]],
            target_position: [3.0, 0.0, 0.0],
            ..Default::default()
        };
        let t = derive_truth(&cfg).unwrap();
        assert!((t[0].theta - PI / 2.0).abs() < 1e-15 && t[0].phi.abs() < 1e-15);
    }

    #[test]
    fn default_topology_distance() {
        let cfg = ScenarioConfig::default();
        let set = ChannelSet::synthesize(&cfg, 0).unwrap();
        assert!((set.links[0].dist_irs_target - 125f64.sqrt()).abs() < 1e-12);
        assert!((set.links[0].doa.theta - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn mirror_negates_azimuth() {
        let mut cfg = ScenarioConfig::default();
        let a = derive_truth(&cfg).unwrap();
        cfg.target_position = [5.0, 5.0, 0.0];
        let b = derive_truth(&cfg).unwrap();
        assert!((a[0].phi + b[0].phi).abs() < 1e-12);
    }

    #[test]
    fn colocated_target_rejected() {
        let cfg = ScenarioConfig {
            target_position: [-5.0, 10.0, 0.0],
            ..Default::default()
        };
        assert_eq!(derive_truth(&cfg), Err(Error::ZeroDistance(0)));
    }

    #[test]
    fn los_limit() {
        let cfg = ScenarioConfig {
            k_factor_db: 120.0,
            ..Default::default()
        };
        let g = synth_channel(&cfg, 0, &mut substream(1, 0, 0, Stream::Channel));
        let (to_irs, d) = direction(&cfg.bs_position, &cfg.irs_positions[0]);
        let (to_bs, _) = direction(&cfg.irs_positions[0], &cfg.bs_position);
        let los = steering_upa(&cfg.reflect_geometry(), &to_bs)
            * steering_upa(&cfg.bs_geometry(), &to_irs).transpose()
            * C64::new(path_gain(cfg.wavelength, d).sqrt(), 0.0);
        assert!((&g - los).norm() / g.norm() <= 1e-5);
    }

    #[test]
    fn nlos_variance() {
        let cfg = ScenarioConfig {
            k_factor_db: f64::NEG_INFINITY,
            m: 1,
            n_h: 1,
            n_v: 1,
            ..Default::default()
        };
        let mut rng = substream(7, 0, 0, Stream::Channel);
        let draws = 10_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            acc += synth_channel(&cfg, 0, &mut rng)[(0, 0)].norm_sqr();
        }
        let rho = path_gain(cfg.wavelength, 125f64.sqrt());
        assert!((acc / draws as f64 / rho - 1.0).abs() < 0.05);
    }

    #[test]
    fn deterministic_channels() {
        let cfg = ScenarioConfig::default();
        let a = ChannelSet::synthesize(&cfg, 3).unwrap();
        let b = ChannelSet::synthesize(&cfg, 3).unwrap();
        for (x, y) in a.links.iter().zip(&b.links) {
            assert_eq!(x.g, y.g);
            assert_eq!(x.beta, y.beta);
        }
        let c = ChannelSet::synthesize(&cfg, 4).unwrap();
        assert_ne!(a.links[0].g, c.links[0].g);
    }

    #[test]
    fn draws_stable_under_irs_count() {
        let cfg = ScenarioConfig::default();
        let one = ScenarioConfig {
            irs_positions: vec![cfg.irs_positions[0]],
            t_c: 100,
            ..cfg.clone()
        };
        let a = ChannelSet::synthesize(&cfg, 0).unwrap();
        let b = ChannelSet::synthesize(&one, 0).unwrap();
        assert_eq!(a.links[0].g, b.links[0].g);
    }

    #[test]
    fn beta_law() {
        let mut rng = substream(1, 0, 0, Stream::Beta);
        let zero = ScenarioConfig {
            rcs: 0.0,
            ..Default::default()
        };
        assert_eq!(compute_beta(&zero, 0, &mut rng).norm(), 0.0);
        let r1 = beta_magnitude(0.1, 1.0, 5.0).powi(2);
        let r2 = beta_magnitude(0.1, 1.0, 10.0).powi(2);
        assert!((r1 / r2 - 16.0).abs() < 1e-12);
        let d = 125f64.sqrt();
        let want = 0.01 / ((4.0 * PI).powi(3) * d.powi(4));
        assert!((beta_magnitude(0.1, 1.0, d).powi(2) / want - 1.0).abs() < 1e-12);
        let fixed = ScenarioConfig {
            beta: Some(vec![[1.0, 2.0], [0.5, 0.0]]),
            ..Default::default()
        };
        assert_eq!(compute_beta(&fixed, 1, &mut rng), C64::new(0.5, 0.0));
    }

    #[test]
    fn farther_irs_weaker_los() {
        let near = ScenarioConfig {
            k_factor_db: 200.0,
            ..Default::default()
        };
        let mut far = near.clone();
        far.irs_positions[0] = [-10.0, 20.0, 0.0];
        let gn = synth_channel(&near, 0, &mut substream(1, 0, 0, Stream::Channel));
        let gf = synth_channel(&far, 0, &mut substream(1, 0, 0, Stream::Channel));
        assert!(gf.norm() <= gn.norm());
    }

    #[test]
    fn validation() {
        assert!(ScenarioConfig::default().validate().is_ok());
        let bad = ScenarioConfig {
            t_c: 101,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = ScenarioConfig {
            a_max: 0.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!((dbm_to_watts(-80.0) - 1e-11).abs() < 1e-25);
    }
}
