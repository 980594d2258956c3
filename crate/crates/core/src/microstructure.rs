//! Second-order fiber orientation tensors: validation, uniform random
//! sampling, the hybrid fourth-order closure and orientation averaging of
//! transversely isotropic operators.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matpoint::FiberParams;
use crate::tensor::{Rotation, SymTensor2, SymTensor4};

/// Symmetric, unit-trace, positive semi-definite 3x3 tensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientationTensor(Matrix3<f64>);

impl OrientationTensor {
    pub const TRACE_TOLERANCE: f64 = 1e-10;
    /// Eigenvalues in `[-EIGEN_CLAMP, 0)` are clamped to zero.
    pub const EIGEN_CLAMP: f64 = 1e-9;

    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("orientation tensor"));
        }
        let asym = (m - m.transpose()).amax();
        if asym > Self::TRACE_TOLERANCE {
            return Err(Error::invalid(format!("orientation tensor is not symmetric (asymmetry {asym:.3e})")));
        }
        let m = (m + m.transpose()) * 0.5;
        let trace = m.trace();
        if (trace - 1.0).abs() > Self::TRACE_TOLERANCE {
            return Err(Error::invalid(format!("orientation tensor trace is {trace}, expected 1")));
        }
        let eig = m.symmetric_eigen();
        let min = eig.eigenvalues.min();
        if min < -Self::EIGEN_CLAMP {
            return Err(Error::invalid(format!("orientation tensor has negative eigenvalue {min:.3e}")));
        }
        if min < 0.0 {
            let clamped = eig.eigenvalues.map(|x| x.max(0.0));
            let v = eig.eigenvectors;
            let c = v * Matrix3::from_diagonal(&clamped) * v.transpose();
            return Ok(OrientationTensor((c + c.transpose()) * 0.5));
        }
        Ok(OrientationTensor(m))
    }

    /// From components in the order `[a11, a22, a33, a12, a13, a23]`.
    pub fn from_components(c: [f64; 6]) -> Result<Self> {
        Self::new(components_matrix(c))
    }

    /// Projects a rounded (e.g. tabulated to three decimals) tensor onto the
    /// admissible set: eigenvalues down to `-tolerance` are clamped to zero and
    /// the trace is renormalised to one. Anything further out is rejected.
    pub fn from_rounded(c: [f64; 6], tolerance: f64) -> Result<Self> {
        let m = components_matrix(c);
        if (m.trace() - 1.0).abs() > 3.0 * tolerance {
            return Err(Error::invalid(format!("orientation tensor trace {} is off by more than {tolerance}", m.trace())));
        }
        let eig = m.symmetric_eigen();
        if eig.eigenvalues.min() < -tolerance {
            return Err(Error::invalid(format!("orientation tensor has negative eigenvalue {:.3e}", eig.eigenvalues.min())));
        }
        let clamped = eig.eigenvalues.map(|x| x.max(0.0));
        let clamped = clamped / clamped.sum();
        let v = eig.eigenvectors;
        Self::new(v * Matrix3::from_diagonal(&clamped) * v.transpose())
    }

    pub fn uniaxial() -> Self {
        OrientationTensor(Matrix3::from_diagonal(&Vector3::new(1.0, 0.0, 0.0)))
    }

    pub fn planar_random() -> Self {
        OrientationTensor(Matrix3::from_diagonal(&Vector3::new(0.5, 0.5, 0.0)))
    }

    pub fn isotropic() -> Self {
        OrientationTensor(Matrix3::identity() / 3.0)
    }

    /// `R diag(l) Rt` from eigenvalues and a rotation (trusted inputs).
    pub fn from_eigen(eigenvalues: [f64; 3], rotation: &Rotation) -> Result<Self> {
        let d = Matrix3::from_diagonal(&Vector3::from(eigenvalues));
        let r = rotation.matrix();
        Self::new(r * d * r.transpose())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// `[a11, a22, a33, a12, a13, a23]`.
    pub fn components(&self) -> [f64; 6] {
        let m = &self.0;
        [m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(0, 1)], m[(0, 2)], m[(1, 2)]]
    }

    pub fn as_tensor(&self) -> SymTensor2 {
        SymTensor2::from_matrix(&self.0)
    }

    pub fn eigenvalues(&self) -> [f64; 3] {
        let mut e: Vec<f64> = self.0.symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        [e[0], e[1], e[2]]
    }

    pub fn rotate(&self, r: &Rotation) -> Self {
        let m = r.matrix();
        OrientationTensor(m * self.0 * m.transpose())
    }
}

fn components_matrix(c: [f64; 6]) -> Matrix3<f64> {
    Matrix3::new(c[0], c[3], c[4], c[3], c[1], c[5], c[4], c[5], c[2])
}

/// Fiber arrangement at a material point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Microstructure {
    pub orientation: OrientationTensor,
    pub volume_fraction: f64,
    pub fiber: FiberParams,
}

impl Microstructure {
    pub fn new(orientation: OrientationTensor, volume_fraction: f64, fiber: FiberParams) -> Result<Self> {
        if !(0.0..1.0).contains(&volume_fraction) {
            return Err(Error::invalid(format!("fiber volume fraction must lie in [0, 1), got {volume_fraction}")));
        }
        fiber.validate()?;
        Ok(Microstructure { orientation, volume_fraction, fiber })
    }
}

/// Serialised microstructure description (orientation components in
/// `[a11, a22, a33, a12, a13, a23]` order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrostructureSpec {
    pub orientation: [f64; 6],
    pub volume_fraction: f64,
}

/// Eigenvalue triple from two cut points of the unit interval.
pub fn eigenvalues_from_cuts(c1: f64, c2: f64) -> [f64; 3] {
    let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
    [lo, hi - lo, 1.0 - hi]
}

/// Uniform sample of the standard 2-simplex.
pub fn sample_eigenvalues(rng: &mut impl Rng) -> [f64; 3] {
    let c1: f64 = rng.random();
    let c2: f64 = rng.random();
    eigenvalues_from_cuts(c1, c2)
}

/// `-H(v) R_z(theta)` with `v = [cos(phi) sqrt(z), sin(phi) sqrt(z), sqrt(1 - z)]`.
pub fn rotation_from_parameters(theta: f64, phi: f64, z: f64) -> Rotation {
    let v = Vector3::new(phi.cos() * z.sqrt(), phi.sin() * z.sqrt(), (1.0 - z).sqrt());
    let neg_householder = v * v.transpose() * 2.0 - Matrix3::identity();
    let rz = Rotation::about_axis(2, theta);
    let m = neg_householder * rz.matrix();
    Rotation::new(m).expect("reflection composition is a proper rotation")
}

/// Uniformly distributed rotation.
pub fn sample_rotation(rng: &mut impl Rng) -> Rotation {
    let theta = rng.random_range(0.0..2.0 * PI);
    let phi = rng.random_range(0.0..2.0 * PI);
    let z: f64 = rng.random();
    rotation_from_parameters(theta, phi, z)
}

/// Uniform orientation tensor; with probability `p_uniaxial` all fibers share
/// one (random) direction.
pub fn sample_orientation_tensor(rng: &mut impl Rng, p_uniaxial: f64) -> Result<OrientationTensor> {
    if !(0.0..=1.0).contains(&p_uniaxial) {
        return Err(Error::invalid(format!("p_uniaxial must lie in [0, 1], got {p_uniaxial}")));
    }
    let uniaxial = rng.random_bool(p_uniaxial);
    let eigenvalues = if uniaxial { [1.0, 0.0, 0.0] } else { sample_eigenvalues(rng) };
    let rotation = sample_rotation(rng);
    OrientationTensor::from_eigen(eigenvalues, &rotation)
}

/// Hybrid closure: blend of the linear and quadratic closures with weight
/// `f = 1 - 27 det(a)` on the quadratic part.
pub fn closure_a4(a: &OrientationTensor) -> SymTensor4 {
    let m = a.matrix();
    let f = (1.0 - 27.0 * m.determinant()).clamp(0.0, 1.0);
    let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
    SymTensor4::from_fn(|i, j, k, l| {
        let linear = -(d(i, j) * d(k, l) + d(i, k) * d(j, l) + d(i, l) * d(j, k)) / 35.0
            + (m[(i, j)] * d(k, l)
                + m[(i, k)] * d(j, l)
                + m[(i, l)] * d(j, k)
                + m[(k, l)] * d(i, j)
                + m[(j, l)] * d(i, k)
                + m[(j, k)] * d(i, l))
                / 7.0;
        let quadratic = m[(i, j)] * m[(k, l)];
        (1.0 - f) * linear + f * quadratic
    })
}

/// The five invariant coefficients of a tensor that is transversely isotropic
/// about axis 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransverseCoefficients(pub [f64; 5]);

impl TransverseCoefficients {
    pub const TOLERANCE: f64 = 1e-8;

    pub fn extract(b: &SymTensor4) -> Result<Self> {
        let t1111 = b.get(0, 0, 0, 0);
        let t2222 = b.get(1, 1, 1, 1);
        let t1122 = b.get(0, 0, 1, 1);
        let t2233 = b.get(1, 1, 2, 2);
        let t1212 = b.get(0, 1, 0, 1);
        let c = TransverseCoefficients([
            t1111 + t2222 - 2.0 * t1122 - 4.0 * t1212,
            t1122 - t2233,
            t1212 + 0.5 * (t2233 - t2222),
            t2233,
            0.5 * (t2222 - t2233),
        ]);
        let aligned = c.assemble(&OrientationTensor::uniaxial(), &closure_a4(&OrientationTensor::uniaxial()));
        let residual = (aligned - *b).norm() / b.norm().max(f64::MIN_POSITIVE);
        if !(residual <= Self::TOLERANCE) {
            return Err(Error::NotTransverselyIsotropic(residual));
        }
        Ok(c)
    }

    pub fn assemble(&self, a: &OrientationTensor, a4: &SymTensor4) -> SymTensor4 {
        let [b1, b2, b3, b4, b5] = self.0;
        let m = a.matrix();
        let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        SymTensor4::from_fn(|i, j, k, l| {
            b1 * a4.get(i, j, k, l)
                + b2 * (m[(i, j)] * d(k, l) + m[(k, l)] * d(i, j))
                + b3 * (m[(i, k)] * d(j, l) + m[(i, l)] * d(j, k) + m[(j, l)] * d(i, k) + m[(j, k)] * d(i, l))
                + b4 * d(i, j) * d(k, l)
                + b5 * (d(i, k) * d(j, l) + d(i, l) * d(j, k))
        })
    }
}

/// Orientation average of a transversely isotropic operator aligned with
/// axis 1 over the fiber distribution described by `a`.
pub fn orientation_average(b_ud: &SymTensor4, a: &OrientationTensor) -> Result<SymTensor4> {
    OrientationAverager::new(*a).average(b_ud)
}

/// Orientation averaging with the closure cached for repeated use.
#[derive(Clone, Copy, Debug)]
pub struct OrientationAverager {
    orientation: OrientationTensor,
    a4: SymTensor4,
    // Each basis term of the average, precomputed: average = sum_k B_k basis_k.
    basis: [SymTensor4; 5],
}

impl OrientationAverager {
    pub fn new(orientation: OrientationTensor) -> Self {
        let a4 = closure_a4(&orientation);
        let mut basis = [SymTensor4::zero(); 5];
        for (k, slot) in basis.iter_mut().enumerate() {
            let mut unit = [0.0; 5];
            unit[k] = 1.0;
            *slot = TransverseCoefficients(unit).assemble(&orientation, &a4);
        }
        OrientationAverager { orientation, a4, basis }
    }

    pub fn orientation(&self) -> &OrientationTensor {
        &self.orientation
    }

    pub fn closure(&self) -> &SymTensor4 {
        &self.a4
    }

    pub fn average(&self, b_ud: &SymTensor4) -> Result<SymTensor4> {
        let c = TransverseCoefficients::extract(b_ud)?;
        Ok(self.combine(&c))
    }

    pub fn combine(&self, c: &TransverseCoefficients) -> SymTensor4 {
        let mut out = SymTensor4::zero();
        for (b, basis) in c.0.iter().zip(&self.basis) {
            out.0 += basis.0 * *b;
        }
        out
    }
}

/// Relative distance of `c` from its isotropic projection.
pub fn anisotropy(c: &SymTensor4) -> f64 {
    let (k, mu) = c.isotropic_moduli();
    (*c - SymTensor4::isotropic(k, mu)).norm() / c.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rotate4;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ti_tensor() -> SymTensor4 {
        // Build a transversely isotropic tensor about axis 1 directly.
        let (e1, e2, g12, nu12, nu23) = (50_000.0, 8_000.0, 3_000.0, 0.3, 0.4);
        let mut compliance = nalgebra::Matrix6::zeros();
        compliance[(0, 0)] = 1.0 / e1;
        compliance[(1, 1)] = 1.0 / e2;
        compliance[(2, 2)] = 1.0 / e2;
        compliance[(0, 1)] = -nu12 / e1;
        compliance[(1, 0)] = -nu12 / e1;
        compliance[(0, 2)] = -nu12 / e1;
        compliance[(2, 0)] = -nu12 / e1;
        compliance[(1, 2)] = -nu23 / e2;
        compliance[(2, 1)] = -nu23 / e2;
        let g23 = e2 / (2.0 * (1.0 + nu23));
        compliance[(3, 3)] = 1.0 / (2.0 * g23);
        compliance[(4, 4)] = 1.0 / (2.0 * g12);
        compliance[(5, 5)] = 1.0 / (2.0 * g12);
        SymTensor4(compliance.try_inverse().unwrap())
    }

    #[test]
    fn cut_examples() {
        let e = eigenvalues_from_cuts(0.3, 0.7);
        assert_relative_eq!(e[0], 0.3);
        assert_relative_eq!(e[1], 0.4);
        assert_relative_eq!(e[2], 0.3, epsilon = 1e-15);
        assert_eq!(eigenvalues_from_cuts(0.5, 0.5), [0.5, 0.0, 0.5]);
        assert_eq!(eigenvalues_from_cuts(0.7, 0.3), eigenvalues_from_cuts(0.3, 0.7));
    }

    #[test]
    fn simplex_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut mean = [0.0; 3];
        let n = 100_000;
        for _ in 0..n {
            let e = sample_eigenvalues(&mut rng);
            assert!(e.iter().all(|&x| x >= 0.0));
            assert!((e.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            for k in 0..3 {
                mean[k] += e[k] / n as f64;
            }
        }
        for m in mean {
            assert!((m - 1.0 / 3.0).abs() < 0.01);
        }
    }

    #[test]
    fn householder_example() {
        let r = rotation_from_parameters(0.0, 0.3, 0.0);
        assert_relative_eq!(*r.matrix(), Matrix3::from_diagonal(&Vector3::new(-1.0, -1.0, 1.0)), epsilon = 1e-15);
    }

    #[test]
    fn sampled_rotations_are_proper() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..10_000 {
            let r = *sample_rotation(&mut rng).matrix();
            assert!((r * r.transpose() - Matrix3::identity()).amax() < 1e-12);
            assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniaxial_branch_with_identity_rotation() {
        let a = OrientationTensor::from_eigen([1.0, 0.0, 0.0], &Rotation::identity()).unwrap();
        assert_eq!(a.components(), [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn sampled_tensors_are_valid_and_isotropic_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 100_000;
        let mut mean = Matrix3::zeros();
        for _ in 0..n {
            let a = sample_orientation_tensor(&mut rng, 0.1).unwrap();
            let m = a.matrix();
            assert!((m.trace() - 1.0).abs() < 1e-12);
            assert!((m - m.transpose()).amax() == 0.0);
            assert!(a.eigenvalues()[0] >= -1e-14);
            mean += m / n as f64;
        }
        assert!((mean - Matrix3::identity() / 3.0).amax() < 0.01);
    }

    #[test]
    fn eigenvalues_invariant_under_sampled_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..1_000 {
            let mut e = sample_eigenvalues(&mut rng);
            let r = sample_rotation(&mut rng);
            let a = OrientationTensor::from_eigen(e, &r).unwrap();
            e.sort_by(f64::total_cmp);
            let got = a.eigenvalues();
            for k in 0..3 {
                assert!((got[k] - e[k]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn invalid_tensors_rejected() {
        assert!(OrientationTensor::from_components([0.5, 0.5, 0.5, 0.0, 0.0, 0.0]).is_err());
        assert!(OrientationTensor::from_components([1.2, -0.2, 0.0, 0.0, 0.0, 0.0]).is_err());
        // Tiny negative eigenvalues are clamped.
        let a = OrientationTensor::from_components([1.0 + 5e-10, -5e-10, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(a.eigenvalues()[0] >= 0.0);
    }

    #[test]
    fn rounded_table_entries_are_projected() {
        // Row 5 of the virtual-sample table has a slightly negative eigenvalue.
        let a = OrientationTensor::from_rounded([0.000, 0.919, 0.081, 0.015, 0.005, 0.273], 1e-3).unwrap();
        assert!(a.eigenvalues()[0] >= 0.0);
        assert!((a.matrix().trace() - 1.0).abs() < 1e-12);
        let b = OrientationTensor::from_rounded([0.392, 0.225, 0.382, -0.142, 0.080, 0.152], 1e-3).unwrap();
        assert!((b.matrix().trace() - 1.0).abs() < 1e-12);
        assert!(OrientationTensor::from_rounded([0.0, 0.9, 0.1, 0.2, 0.0, 0.0], 1e-3).is_err());
    }

    #[test]
    fn closure_extremes() {
        let uni = closure_a4(&OrientationTensor::uniaxial());
        for a in 0..6 {
            for b in 0..6 {
                let expect = if a == 0 && b == 0 { 1.0 } else { 0.0 };
                assert!((uni.0[(a, b)] - expect).abs() < 1e-15);
            }
        }
        let iso = closure_a4(&OrientationTensor::isotropic());
        // Isotropic fourth moment: (d_ij d_kl + d_ik d_jl + d_il d_jk) / 15.
        let d = |i: usize, j: usize| if i == j { 1.0 } else { 0.0 };
        let expect = SymTensor4::from_fn(|i, j, k, l| (d(i, j) * d(k, l) + d(i, k) * d(j, l) + d(i, l) * d(j, k)) / 15.0);
        assert!((iso - expect).norm() < 1e-14);
    }

    #[test]
    fn closure_contracts_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        for _ in 0..1_000 {
            let a = sample_orientation_tensor(&mut rng, 0.1).unwrap();
            let a4 = closure_a4(&a);
            let contracted = a4 * SymTensor2::identity();
            assert!((contracted - a.as_tensor()).norm() < 1e-10);
            assert!(a4.major_asymmetry() < 1e-15);
        }
    }

    #[test]
    fn average_examples() {
        let b = ti_tensor();
        let aligned = orientation_average(&b, &OrientationTensor::uniaxial()).unwrap();
        assert!((aligned - b).norm() / b.norm() < 1e-12);
        let iso = SymTensor4::isotropic(3444.4, 1148.1);
        let out = orientation_average(&iso, &OrientationTensor::isotropic()).unwrap();
        assert!((out - iso).norm() / iso.norm() < 1e-12);
        let out = orientation_average(&b, &OrientationTensor::isotropic()).unwrap();
        assert!(anisotropy(&out) < 1e-8);
    }

    #[test]
    fn non_transversely_isotropic_rejected() {
        let mut b = ti_tensor();
        b.0[(1, 1)] *= 1.1;
        assert!(matches!(orientation_average(&b, &OrientationTensor::isotropic()), Err(Error::NotTransverselyIsotropic(_))));
    }

    #[test]
    fn average_is_linear_and_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let b = ti_tensor();
        let c = SymTensor4::isotropic(1000.0, 400.0);
        for _ in 0..100 {
            let a = sample_orientation_tensor(&mut rng, 0.1).unwrap();
            let r = sample_rotation(&mut rng);
            let lhs = rotate4(&orientation_average(&b, &a).unwrap(), &r);
            let rhs = orientation_average(&b, &a.rotate(&r)).unwrap();
            assert!((lhs - rhs).norm() / b.norm() < 1e-9);
            let sum = orientation_average(&(b * 2.0 + c), &a).unwrap();
            let parts = orientation_average(&b, &a).unwrap() * 2.0 + orientation_average(&c, &a).unwrap();
            assert!((sum - parts).norm() / sum.norm() < 1e-12);
        }
    }
}
