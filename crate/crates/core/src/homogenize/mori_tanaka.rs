//! Two-phase Mori-Tanaka estimate for aligned spheroids, isotropization and
//! the elementary bounds.

use crate::error::{Error, Result};
use crate::tensor::{poisson_from_moduli, SymTensor4};

use super::eshelby::eshelby;

/// Isotropic reference medium for the inclusion problem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spheroid {
    pub aspect_ratio: f64,
    pub bulk: f64,
    pub shear: f64,
}

impl Spheroid {
    pub fn reference_poisson(&self) -> f64 {
        poisson_from_moduli(self.bulk, self.shear)
    }

    pub fn eshelby(&self) -> Result<SymTensor4> {
        eshelby(self.aspect_ratio, self.reference_poisson())
    }
}

/// Dilute strain concentration `[I + S C_M^-1 (C_F - C_M)]^-1`.
pub fn dilute_concentration(c_matrix: &SymTensor4, c_fiber: &SymTensor4, s: &SymTensor4) -> Result<SymTensor4> {
    let c_inv = c_matrix.inverse().ok_or(Error::Singular("matrix stiffness"))?;
    (SymTensor4::identity() + *s * c_inv * (*c_fiber - *c_matrix))
        .inverse()
        .ok_or(Error::Singular("dilute concentration"))
}

/// Mori-Tanaka stiffness of aligned spheroidal fibers in an isotropic matrix.
/// The Eshelby tensor is evaluated on the matrix moduli.
pub fn mt_tangent_ud(c_matrix: &SymTensor4, c_fiber: &SymTensor4, volume_fraction: f64, aspect_ratio: f64) -> Result<SymTensor4> {
    if !(0.0..1.0).contains(&volume_fraction) {
        return Err(Error::invalid(format!("volume fraction must lie in [0, 1), got {volume_fraction}")));
    }
    let (bulk, shear) = c_matrix.isotropic_moduli();
    let s = Spheroid { aspect_ratio, bulk, shear }.eshelby()?;
    mt_with_eshelby(c_matrix, c_fiber, volume_fraction, &s)
}

pub(crate) fn mt_with_eshelby(c_matrix: &SymTensor4, c_fiber: &SymTensor4, v: f64, s: &SymTensor4) -> Result<SymTensor4> {
    if v == 0.0 {
        return Ok(*c_matrix);
    }
    let a_dil = dilute_concentration(c_matrix, c_fiber, s)?;
    let a_mt = a_dil
        * (SymTensor4::identity() * (1.0 - v) + a_dil * v)
            .inverse()
            .ok_or(Error::Singular("Mori-Tanaka concentration"))?;
    Ok(*c_matrix + (*c_fiber - *c_matrix) * a_mt * v)
}

/// Isotropic projection `3K J + 2mu K` with `K = (1 x 1) :: C / 9` and
/// `mu = C :: K / 10`.
pub fn isotropize(c: &SymTensor4) -> SymTensor4 {
    let (bulk, shear) = c.isotropic_moduli();
    SymTensor4::isotropic(bulk, shear)
}

/// Uniform-strain (upper) bound.
pub fn voigt_bound(c_matrix: &SymTensor4, c_fiber: &SymTensor4, v: f64) -> SymTensor4 {
    *c_matrix * (1.0 - v) + *c_fiber * v
}

/// Uniform-stress (lower) bound.
pub fn reuss_bound(c_matrix: &SymTensor4, c_fiber: &SymTensor4, v: f64) -> Result<SymTensor4> {
    let sm = c_matrix.inverse().ok_or(Error::Singular("matrix stiffness"))?;
    let sf = c_fiber.inverse().ok_or(Error::Singular("fiber stiffness"))?;
    (sm * (1.0 - v) + sf * v).inverse().ok_or(Error::Singular("Reuss bound"))
}

/// Smallest eigenvalue of the symmetric part, relative to the norm of `c`.
pub fn min_relative_eigenvalue(c: &SymTensor4) -> f64 {
    let sym = c.symmetrized();
    sym.0.symmetric_eigenvalues().min() / c.norm().max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matpoint::{FiberParams, MatrixParams, MatrixState};
    use crate::microstructure::TransverseCoefficients;

    fn phases() -> (SymTensor4, SymTensor4) {
        (MatrixParams::default().stiffness(), FiberParams::default().stiffness())
    }

    #[test]
    fn no_reinforcement() {
        let (cm, cf) = phases();
        assert_eq!(mt_tangent_ud(&cm, &cf, 0.0, 24.0).unwrap(), cm);
    }

    #[test]
    fn all_fiber_limit() {
        let (cm, cf) = phases();
        let c = mt_tangent_ud(&cm, &cf, 1.0 - 1e-9, 24.0).unwrap();
        assert!((c - cf).norm() / cf.norm() < 1e-6);
    }

    #[test]
    fn within_bounds_and_transversely_isotropic() {
        let (cm, cf) = phases();
        for &v in &[0.01, 0.12, 0.3, 0.6] {
            let c = mt_tangent_ud(&cm, &cf, v, 24.0).unwrap();
            assert!(c.major_asymmetry() / c.norm() < 1e-12);
            assert!(min_relative_eigenvalue(&(voigt_bound(&cm, &cf, v) - c)) > -1e-12);
            assert!(min_relative_eigenvalue(&(c - reuss_bound(&cm, &cf, v).unwrap())) > -1e-12);
            TransverseCoefficients::extract(&c).unwrap();
        }
    }

    #[test]
    fn dilute_spheres_match_classical_moduli() {
        // Spherical MT bulk modulus: K = K_m + v (K_f - K_m) / (1 + (1 - v)(K_f - K_m)/(K_m + 4/3 mu_m)).
        let (km, mum) = (3000.0, 1000.0);
        let (kf, muf) = (40_000.0, 30_000.0);
        let v = 0.2;
        let c = mt_tangent_ud(&SymTensor4::isotropic(km, mum), &SymTensor4::isotropic(kf, muf), v, 1.0).unwrap();
        let (k, _) = c.isotropic_moduli();
        let expect = km + v * (kf - km) / (1.0 + (1.0 - v) * (kf - km) / (km + 4.0 / 3.0 * mum));
        assert!((k - expect).abs() / expect < 1e-12);
    }

    #[test]
    fn isotropize_examples() {
        let iso = SymTensor4::isotropic(5.0, 2.0);
        assert!((isotropize(&iso) - iso).norm() < 1e-13);
        let (k, mu) = isotropize(&MatrixParams::default().stiffness()).isotropic_moduli();
        assert!((k - 3444.444444).abs() < 1e-5);
        assert!((mu - 1148.148148).abs() < 1e-5);
        let p = MatrixParams::default();
        let d = crate::tensor::SymTensor2::from_plain([0.02, -0.01, -0.01, 0.0, 0.0, 0.005]);
        let out = crate::matpoint::return_map(&MatrixState::default(), &d, &p).unwrap();
        assert!(out.plastic.is_some());
        let (k_alg, mu_alg) = isotropize(&out.tangent).isotropic_moduli();
        assert!(mu_alg < 1148.148);
        assert!((k_alg - 3444.444444).abs() < 1e-5);
    }
}
