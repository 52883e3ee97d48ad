//! Shared fixtures for the kernel benchmarks.

use airs_crb::numerics::{CMatrix, CVector, C64};
use airs_crb::optimizer::isotropic;
use airs_crb::{ChannelSet, FimParams, ScenarioConfig};

pub struct Fixture {
    pub config: ScenarioConfig,
    pub channel: ChannelSet,
    pub params: FimParams,
    pub r_s: Vec<CMatrix>,
    pub psi: Vec<CVector>,
}

/// Default scenario (M = 8, N = 16, L = 2) with isotropic covariances and a
/// fixed-phase reflection vector at a fifth of the amplitude limit.
pub fn fixture(config: ScenarioConfig) -> Fixture {
    let channel = ChannelSet::synthesize(&config, 0).expect("valid config");
    let params = FimParams::from_config(&config);
    let r_s = vec![isotropic(&config); channel.len()];
    let psi = channel
        .links
        .iter()
        .map(|l| {
            CVector::from_fn(l.n(), |k, _| {
                C64::from_polar(config.a_max / 5.0, 0.7 * k as f64)
            })
        })
        .collect();
    Fixture {
        config,
        channel,
        params,
        r_s,
        psi,
    }
}
