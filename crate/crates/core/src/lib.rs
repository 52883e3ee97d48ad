//! Cramér-Rao bound evaluation and min-max CRB beamforming design for
//! target direction estimation with active intelligent reflecting surfaces.
//!
//! The BS illuminates `L` active IRSs in time division. Each IRS either
//! reflects the target echo back to the BS ([`SensingCase::AtBs`]) or measures
//! it with its own sensor array ([`SensingCase::AtIrs`]). The optimizer
//! alternates between the BS transmit covariances and the IRS reflection
//! coefficients to minimize the worst per-IRS CRB.

pub mod error;
pub mod fim;
pub mod harness;
pub mod numerics;
pub mod optimizer;
pub mod scenario;
pub mod sdp;
pub mod selftest;
pub mod steering;
pub mod surrogate;

pub use error::{Error, Result};
pub use fim::{crb, Fim4, FimParams, SensingCase};
pub use harness::{run_sweep, SweepParam, SweepRow, SweepSpec};
pub use numerics::{CMatrix, CVector, HermitianMatrix, C64};
pub use optimizer::{alternating_optimize, run_benchmark, AoOptions, AoStatus, AoTrace, Scheme};
pub use scenario::{ChannelSet, Link, ScenarioConfig};
pub use steering::{ArrayGeometry, Doa, SteeringBundle};
