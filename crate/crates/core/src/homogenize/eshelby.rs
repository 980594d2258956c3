//! Eshelby tensor of a prolate spheroid (semi-axes `a_r, 1, 1`, symmetry axis
//! along 1) embedded in an isotropic medium.
//!
//! The depolarisation integrals are written in terms of the eccentricity
//! `e = sqrt(1 - 1/a_r^2)` and evaluated by power series near the sphere, where
//! the textbook closed form loses all precision to cancellation.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::tensor::SymTensor4;

/// Below this eccentricity the series are used.
const SERIES_SWITCH: f64 = 0.5;

/// `(atanh(e) - e) / e^3`.
fn phi(e: f64) -> f64 {
    if e < SERIES_SWITCH {
        let e2 = e * e;
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..60 {
            let add = term / (2 * k + 3) as f64;
            sum += add;
            if add < 1e-18 * sum {
                break;
            }
            term *= e2;
        }
        sum
    } else {
        (e.atanh() - e) / (e * e * e)
    }
}

/// `(1 - 3 L1) / (6 e^2)` with `L1 = (1 - e^2) phi(e)` the axial depolarisation factor.
fn psi(e: f64) -> f64 {
    if e < SERIES_SWITCH {
        let e2 = e * e;
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 0..60 {
            let add = term / (((2 * k + 3) * (2 * k + 5)) as f64);
            sum += add;
            if add < 1e-18 * sum {
                break;
            }
            term *= e2;
        }
        sum
    } else {
        let l1 = (1.0 - e * e) * phi(e);
        (1.0 - 3.0 * l1) / (6.0 * e * e)
    }
}

/// Eshelby tensor for aspect ratio `aspect >= 1` and reference Poisson ratio `nu`.
pub fn eshelby(aspect: f64, nu: f64) -> Result<SymTensor4> {
    if !(aspect >= 1.0) || !aspect.is_finite() {
        return Err(Error::invalid(format!("spheroid aspect ratio must be in [1, inf), got {aspect}")));
    }
    if !(nu > -1.0 && nu < 1.0) {
        return Err(Error::invalid(format!("reference Poisson ratio out of range: {nu}")));
    }
    let inv2 = 1.0 / (aspect * aspect);
    let e = (1.0 - inv2).max(0.0).sqrt();
    let one_e2 = inv2;

    let l1 = one_e2 * phi(e);
    let i1 = 4.0 * PI * l1;
    let i2 = 2.0 * PI * (1.0 - l1);
    let a2_i12 = 12.0 * PI * psi(e);
    let i12 = a2_i12 * one_e2;
    let a2_i11 = (4.0 * PI - 2.0 * a2_i12) / 3.0;
    let i23 = PI - 0.25 * i12;
    let a2 = aspect * aspect;

    let c = 1.0 / (8.0 * PI * (1.0 - nu));
    let w = 1.0 - 2.0 * nu;
    let s1111 = c * (3.0 * a2_i11 + w * i1);
    let s2222 = c * (3.0 * i23 + w * i2);
    let s1122 = c * (i12 - w * i1);
    let s2211 = c * (a2_i12 - w * i2);
    let s2233 = c * (i23 - w * i2);
    let s1212 = 0.5 * c * ((a2 + 1.0) * i12 + w * (i1 + i2));
    let s2323 = 0.5 * c * (2.0 * i23 + 2.0 * w * i2);

    let mut s = SymTensor4::zero();
    let m = &mut s.0;
    m[(0, 0)] = s1111;
    m[(0, 1)] = s1122;
    m[(0, 2)] = s1122;
    m[(1, 0)] = s2211;
    m[(2, 0)] = s2211;
    m[(1, 1)] = s2222;
    m[(2, 2)] = s2222;
    m[(1, 2)] = s2233;
    m[(2, 1)] = s2233;
    m[(3, 3)] = 2.0 * s2323;
    m[(4, 4)] = 2.0 * s1212;
    m[(5, 5)] = 2.0 * s1212;
    Ok(s)
}
