//! Symmetric second- and fourth-order tensors in the orthonormal (Mandel)
//! six-dimensional basis.
//!
//! Component order is `11, 22, 33, 23, 13, 12`; the three shear slots carry a
//! factor `sqrt(2)` so that the Euclidean inner product of two 6-vectors equals
//! the double contraction of the underlying 3x3 tensors, and 6x6 matrix
//! products equal double contractions of fourth-order tensors. "Plain"
//! components (used at file boundaries) are the unscaled tensor components in
//! the same order.

use std::f64::consts::SQRT_2;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, Matrix6, Vector6};

use crate::error::{Error, Result};

/// Index pairs of the six Mandel slots.
pub const MANDEL_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Mandel scale factor of each slot: 1 for normal, sqrt(2) for shear.
pub const MANDEL_SCALE: [f64; 6] = [1.0, 1.0, 1.0, SQRT_2, SQRT_2, SQRT_2];

/// Mandel slot of the (i, j) component.
pub fn mandel_index(i: usize, j: usize) -> usize {
    match (i.min(j), i.max(j)) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (1, 2) => 3,
        (0, 2) => 4,
        (0, 1) => 5,
        _ => panic!("tensor index out of range: ({i}, {j})"),
    }
}

/// Symmetric second-order tensor.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SymTensor2(pub Vector6<f64>);

impl SymTensor2 {
    pub fn zero() -> Self {
        SymTensor2(Vector6::zeros())
    }

    pub fn identity() -> Self {
        SymTensor2(Vector6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0))
    }

    /// From Mandel components.
    pub fn from_mandel(c: [f64; 6]) -> Self {
        SymTensor2(Vector6::from_row_slice(&c))
    }

    /// From plain tensor components `[s11, s22, s33, s23, s13, s12]`.
    pub fn from_plain(c: [f64; 6]) -> Self {
        let mut v = Vector6::zeros();
        for k in 0..6 {
            v[k] = c[k] * MANDEL_SCALE[k];
        }
        SymTensor2(v)
    }

    pub fn to_plain(&self) -> [f64; 6] {
        let mut c = [0.0; 6];
        for k in 0..6 {
            c[k] = self.0[k] / MANDEL_SCALE[k];
        }
        c
    }

    pub fn to_mandel(&self) -> [f64; 6] {
        let mut c = [0.0; 6];
        c.copy_from_slice(self.0.as_slice());
        c
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        SymTensor2(Vector6::new(a, b, c, 0.0, 0.0, 0.0))
    }

    /// Symmetric part of a 3x3 matrix.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        let mut v = Vector6::zeros();
        for (k, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
            v[k] = 0.5 * (m[(i, j)] + m[(j, i)]) * MANDEL_SCALE[k];
        }
        SymTensor2(v)
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for (k, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
            let x = self.0[k] / MANDEL_SCALE[k];
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
        m
    }

    pub fn trace(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    /// Double contraction `a : b`.
    pub fn dot(&self, other: &SymTensor2) -> f64 {
        self.0.dot(&other.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn deviator(&self) -> SymTensor2 {
        deviator(self)
    }

    pub fn von_mises(&self) -> f64 {
        von_mises(self)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn outer(&self, other: &SymTensor2) -> SymTensor4 {
        SymTensor4(self.0 * other.0.transpose())
    }

    pub fn rotate(&self, r: &Rotation) -> SymTensor2 {
        rotate(self, r)
    }
}

impl Index<usize> for SymTensor2 {
    type Output = f64;
    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

impl Add for SymTensor2 {
    type Output = SymTensor2;
    fn add(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2(self.0 + rhs.0)
    }
}

impl Sub for SymTensor2 {
    type Output = SymTensor2;
    fn sub(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2(self.0 - rhs.0)
    }
}

impl Neg for SymTensor2 {
    type Output = SymTensor2;
    fn neg(self) -> SymTensor2 {
        SymTensor2(-self.0)
    }
}

impl Mul<f64> for SymTensor2 {
    type Output = SymTensor2;
    fn mul(self, rhs: f64) -> SymTensor2 {
        SymTensor2(self.0 * rhs)
    }
}

impl Mul<SymTensor2> for f64 {
    type Output = SymTensor2;
    fn mul(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2(rhs.0 * self)
    }
}

impl AddAssign for SymTensor2 {
    fn add_assign(&mut self, rhs: SymTensor2) {
        self.0 += rhs.0;
    }
}

impl SubAssign for SymTensor2 {
    fn sub_assign(&mut self, rhs: SymTensor2) {
        self.0 -= rhs.0;
    }
}

/// Minor-symmetric fourth-order tensor as a 6x6 Mandel matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymTensor4(pub Matrix6<f64>);

impl SymTensor4 {
    pub fn zero() -> Self {
        SymTensor4(Matrix6::zeros())
    }

    /// Symmetric fourth-order identity.
    pub fn identity() -> Self {
        SymTensor4(Matrix6::identity())
    }

    /// Volumetric projector `1 ⊗ 1 / 3`.
    pub fn volumetric() -> Self {
        let one = SymTensor2::identity();
        SymTensor4(one.0 * one.0.transpose() / 3.0)
    }

    /// Deviatoric projector `I - 1 ⊗ 1 / 3`.
    pub fn deviatoric() -> Self {
        SymTensor4(Matrix6::identity() - Self::volumetric().0)
    }

    /// Isotropic tensor `3K J + 2 mu K_dev`.
    pub fn isotropic(bulk: f64, shear: f64) -> Self {
        SymTensor4(Self::volumetric().0 * (3.0 * bulk) + Self::deviatoric().0 * (2.0 * shear))
    }

    pub fn inverse(&self) -> Option<SymTensor4> {
        self.0.try_inverse().map(SymTensor4)
    }

    pub fn transpose(&self) -> SymTensor4 {
        SymTensor4(self.0.transpose())
    }

    /// Full contraction `A :: B`.
    pub fn double_dot(&self, other: &SymTensor4) -> f64 {
        self.0.component_mul(&other.0).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Largest absolute difference between the matrix and its transpose.
    pub fn major_asymmetry(&self) -> f64 {
        (self.0 - self.0.transpose()).amax()
    }

    pub fn symmetrized(&self) -> SymTensor4 {
        SymTensor4((self.0 + self.0.transpose()) * 0.5)
    }

    /// Component `C_ijkl` of the underlying fourth-order tensor.
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let a = mandel_index(i, j);
        let b = mandel_index(k, l);
        self.0[(a, b)] / (MANDEL_SCALE[a] * MANDEL_SCALE[b])
    }

    /// Builds the Mandel matrix from a component function that must have the
    /// minor symmetries.
    pub fn from_fn(f: impl Fn(usize, usize, usize, usize) -> f64) -> SymTensor4 {
        let mut m = Matrix6::zeros();
        for (a, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
            for (b, &(k, l)) in MANDEL_PAIRS.iter().enumerate() {
                m[(a, b)] = f(i, j, k, l) * MANDEL_SCALE[a] * MANDEL_SCALE[b];
            }
        }
        SymTensor4(m)
    }

    pub fn rotate(&self, r: &Rotation) -> SymTensor4 {
        rotate4(self, r)
    }

    /// Bulk and shear moduli of an isotropic tensor (or of its isotropic
    /// projection).
    pub fn isotropic_moduli(&self) -> (f64, f64) {
        let one = SymTensor2::identity();
        let bulk = one.0.dot(&(self.0 * one.0)) / 9.0;
        let shear = self.double_dot(&SymTensor4::deviatoric()) / 10.0;
        (bulk, shear)
    }
}

impl Add for SymTensor4 {
    type Output = SymTensor4;
    fn add(self, rhs: SymTensor4) -> SymTensor4 {
        SymTensor4(self.0 + rhs.0)
    }
}

impl Sub for SymTensor4 {
    type Output = SymTensor4;
    fn sub(self, rhs: SymTensor4) -> SymTensor4 {
        SymTensor4(self.0 - rhs.0)
    }
}

impl Mul<f64> for SymTensor4 {
    type Output = SymTensor4;
    fn mul(self, rhs: f64) -> SymTensor4 {
        SymTensor4(self.0 * rhs)
    }
}

impl Mul<SymTensor4> for f64 {
    type Output = SymTensor4;
    fn mul(self, rhs: SymTensor4) -> SymTensor4 {
        SymTensor4(rhs.0 * self)
    }
}

impl Mul<SymTensor4> for SymTensor4 {
    type Output = SymTensor4;
    fn mul(self, rhs: SymTensor4) -> SymTensor4 {
        SymTensor4(self.0 * rhs.0)
    }
}

impl Mul<SymTensor2> for SymTensor4 {
    type Output = SymTensor2;
    fn mul(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2(self.0 * rhs.0)
    }
}

impl Mul<&SymTensor2> for &SymTensor4 {
    type Output = SymTensor2;
    fn mul(self, rhs: &SymTensor2) -> SymTensor2 {
        SymTensor2(self.0 * rhs.0)
    }
}

/// Proper orthogonal 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    /// Tolerance on `|R Rt - I|` and `|det R - 1|` when validating input.
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        let orthogonality = (m * m.transpose() - Matrix3::identity()).amax();
        let det = m.determinant();
        if !(orthogonality <= Self::TOLERANCE) || !((det - 1.0).abs() <= Self::TOLERANCE) {
            return Err(Error::NonOrthogonal { orthogonality, det });
        }
        Ok(Rotation(m))
    }

    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Right-handed rotation by `angle` about the coordinate axis `axis`.
    pub fn about_axis(axis: usize, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let m = match axis {
            0 => Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c),
            1 => Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c),
            2 => Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            _ => panic!("axis out of range: {axis}"),
        };
        Rotation(m)
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Rotation {
        Rotation(self.0.transpose())
    }

    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation(self.0 * other.0)
    }

    /// The 6x6 orthogonal matrix `Q` with `rotate(s, R) = Q s` in Mandel space.
    pub fn mandel(&self) -> Matrix6<f64> {
        let r = &self.0;
        let mut q = Matrix6::zeros();
        for (a, &(i, j)) in MANDEL_PAIRS.iter().enumerate() {
            for (b, &(k, l)) in MANDEL_PAIRS.iter().enumerate() {
                // Image of the Mandel basis tensor of slot b, projected on slot a.
                let basis = if k == l {
                    r[(i, k)] * r[(j, k)]
                } else {
                    (r[(i, k)] * r[(j, l)] + r[(i, l)] * r[(j, k)]) / SQRT_2
                };
                q[(a, b)] = basis * MANDEL_SCALE[a];
            }
        }
        q
    }
}

/// `s - tr(s)/3 I`.
pub fn deviator(s: &SymTensor2) -> SymTensor2 {
    let p = s.trace() / 3.0;
    let mut v = s.0;
    v[0] -= p;
    v[1] -= p;
    v[2] -= p;
    SymTensor2(v)
}

/// von Mises equivalent stress `sqrt(3/2 dev(s):dev(s))`.
pub fn von_mises(s: &SymTensor2) -> f64 {
    let d = deviator(s);
    (1.5 * d.dot(&d)).sqrt()
}

/// `R s Rt`.
pub fn rotate(s: &SymTensor2, r: &Rotation) -> SymTensor2 {
    SymTensor2::from_matrix(&(r.0 * s.to_matrix() * r.0.transpose()))
}

/// `C'_ijkl = R_ip R_jq R_kr R_ls C_pqrs`.
pub fn rotate4(c: &SymTensor4, r: &Rotation) -> SymTensor4 {
    let q = r.mandel();
    SymTensor4(q * c.0 * q.transpose())
}

/// Isotropic linear-elastic stiffness from Young's modulus and Poisson's ratio.
pub fn isotropic_stiffness(young: f64, poisson: f64) -> Result<SymTensor4> {
    if !(young > 0.0) {
        return Err(Error::invalid(format!("Young's modulus must be positive, got {young}")));
    }
    if !(poisson > -1.0 && poisson < 0.5) {
        return Err(Error::invalid(format!("Poisson's ratio must lie in (-1, 0.5), got {poisson}")));
    }
    let (bulk, shear) = bulk_shear(young, poisson);
    Ok(SymTensor4::isotropic(bulk, shear))
}

/// `(K, mu)` from `(E, nu)`.
pub fn bulk_shear(young: f64, poisson: f64) -> (f64, f64) {
    (young / (3.0 * (1.0 - 2.0 * poisson)), young / (2.0 * (1.0 + poisson)))
}

/// Poisson's ratio of an isotropic medium with moduli `(K, mu)`.
pub fn poisson_from_moduli(bulk: f64, shear: f64) -> f64 {
    (3.0 * bulk - 2.0 * shear) / (2.0 * (3.0 * bulk + shear))
}
