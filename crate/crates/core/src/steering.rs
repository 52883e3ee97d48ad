//! Planar-array steering vectors, their angle derivatives and target responses.
//!
//! Element ordering is vertical-major: element `v * n_h + h` sits in row `v`,
//! column `h`, so `a = a_v ⊗ a_h`.

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, CVector, C64, J};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_h: usize,
    pub n_v: usize,
    pub d_h: f64,
    pub d_v: f64,
    pub wavelength: f64,
}

impl ArrayGeometry {
    /// Half-wavelength spaced `n_v × n_h` array.
    pub fn half_wave(n_h: usize, n_v: usize, wavelength: f64) -> Self {
        ArrayGeometry {
            n_h,
            n_v,
            d_h: wavelength / 2.0,
            d_v: wavelength / 2.0,
            wavelength,
        }
    }

    /// Uniform linear array along the horizontal axis.
    pub fn ula(m: usize, wavelength: f64) -> Self {
        Self::half_wave(m, 1, wavelength)
    }

    pub fn len(&self) -> usize {
        self.n_h * self.n_v
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_h == 0 || self.n_v == 0 {
            return Err(Error::Config("array dimensions must be at least 1".into()));
        }
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.d_h) || !positive(self.d_v) || !positive(self.wavelength) {
            return Err(Error::Config(
                "array spacings and wavelength must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Vertical (polar, from +z) and azimuth angle, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Doa {
    pub theta: f64,
    pub phi: f64,
}

impl Doa {
    pub fn new(theta: f64, phi: f64) -> Self {
        Doa { theta, phi }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringBundle {
    pub a: CVector,
    pub da_theta: CVector,
    pub da_phi: CVector,
    /// Diagonal of `Z_θ`.
    pub z_theta: CVector,
    /// Diagonal of `Z_φ`.
    pub z_phi: CVector,
}

fn phases(geom: &ArrayGeometry, doa: &Doa) -> (f64, f64) {
    let kv = 2.0 * PI * geom.d_v / geom.wavelength * doa.theta.cos();
    let kh = 2.0 * PI * geom.d_h / geom.wavelength * doa.theta.sin() * doa.phi.cos();
    (kv, kh)
}

pub fn steering_upa(geom: &ArrayGeometry, doa: &Doa) -> CVector {
    let (kv, kh) = phases(geom, doa);
    CVector::from_fn(geom.len(), |k, _| {
        let (v, h) = (k / geom.n_h, k % geom.n_h);
        C64::from_polar(1.0, kv * v as f64 + kh * h as f64)
    })
}

pub fn steering_bundle(geom: &ArrayGeometry, doa: &Doa) -> SteeringBundle {
    let a = steering_upa(geom, doa);
    let (st, ct) = doa.theta.sin_cos();
    let (sp, cp) = doa.phi.sin_cos();
    let gh = 2.0 * PI * geom.d_h / geom.wavelength;
    let gv = 2.0 * PI * geom.d_v / geom.wavelength;
    let z_theta = CVector::from_fn(geom.len(), |k, _| {
        let (v, h) = ((k / geom.n_h) as f64, (k % geom.n_h) as f64);
        J * (gh * ct * cp * h - gv * st * v)
    });
    let z_phi = CVector::from_fn(geom.len(), |k, _| {
        let h = (k % geom.n_h) as f64;
        -J * (gh * st * sp * h)
    });
    let da_theta = z_theta.component_mul(&a);
    let da_phi = z_phi.component_mul(&a);
    SteeringBundle {
        a,
        da_theta,
        da_phi,
        z_theta,
        z_phi,
    }
}

/// `E = β a aᵀ` (complex symmetric, rank one).
pub fn target_response_bs(beta: C64, a: &CVector) -> CMatrix {
    (a * a.transpose()) * beta
}

/// `Ē = β ā aᵀ`.
pub fn target_response_irs(beta: C64, a_sensor: &CVector, a_reflect: &CVector) -> CMatrix {
    (a_sensor * a_reflect.transpose()) * beta
}
