//! Constituent models: linear-elastic fibers and a J2 elasto-plastic matrix with
//! linear-exponential isotropic hardening.
//!
//! The matrix is integrated with the implicit radial return; the returned
//! tangent is the exact derivative of the discrete update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{bulk_shear, deviator, isotropic_stiffness, von_mises, SymTensor2, SymTensor4};

/// Matrix material constants. Stresses and moduli in MPa.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixParams {
    pub young: f64,
    pub poisson: f64,
    pub yield_stress: f64,
    /// Linear hardening modulus `H`.
    pub linear_hardening: f64,
    /// Saturation hardening modulus `H_inf`.
    pub saturation_hardening: f64,
    /// Hardening exponent `m`.
    pub hardening_exponent: f64,
}

impl Default for MatrixParams {
    fn default() -> Self {
        MatrixParams {
            young: 3100.0,
            poisson: 0.35,
            yield_stress: 25.0,
            linear_hardening: 150.0,
            saturation_hardening: 20.0,
            hardening_exponent: 325.0,
        }
    }
}

impl MatrixParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("young", self.young),
            ("poisson", self.poisson),
            ("yield_stress", self.yield_stress),
            ("linear_hardening", self.linear_hardening),
            ("saturation_hardening", self.saturation_hardening),
            ("hardening_exponent", self.hardening_exponent),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("matrix parameter {name} must be positive, got {v}")));
            }
        }
        if !(self.poisson < 0.5) {
            return Err(Error::invalid(format!("matrix Poisson's ratio must be < 0.5, got {}", self.poisson)));
        }
        Ok(())
    }

    pub fn bulk_shear(&self) -> (f64, f64) {
        bulk_shear(self.young, self.poisson)
    }

    pub fn stiffness(&self) -> SymTensor4 {
        let (k, mu) = self.bulk_shear();
        SymTensor4::isotropic(k, mu)
    }

    /// Tolerance on the yield function after a plastic update.
    pub fn yield_tolerance(&self) -> f64 {
        1e-8 * self.yield_stress
    }
}

/// Fiber constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberParams {
    pub young: f64,
    pub poisson: f64,
    /// Length over diameter.
    pub aspect_ratio: f64,
}

impl Default for FiberParams {
    fn default() -> Self {
        // 240 um long, 10 um diameter glass fibers.
        FiberParams { young: 76000.0, poisson: 0.22, aspect_ratio: 240.0 / 10.0 }
    }
}

impl FiberParams {
    pub fn validate(&self) -> Result<()> {
        isotropic_stiffness(self.young, self.poisson)?;
        if !(self.aspect_ratio >= 1.0) {
            return Err(Error::invalid(format!("fiber aspect ratio must be >= 1, got {}", self.aspect_ratio)));
        }
        Ok(())
    }

    pub fn stiffness(&self) -> SymTensor4 {
        let (k, mu) = bulk_shear(self.young, self.poisson);
        SymTensor4::isotropic(k, mu)
    }
}

/// History of a matrix material point.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct MatrixState {
    /// Total strain.
    pub strain: SymTensor2,
    /// Plastic strain (trace-free).
    pub plastic_strain: SymTensor2,
    /// Accumulated plastic strain `p >= 0`.
    pub accumulated: f64,
}

impl MatrixState {
    pub fn stress(&self, params: &MatrixParams) -> SymTensor2 {
        params.stiffness() * (self.strain - self.plastic_strain)
    }
}

/// Quantities of a plastic return needed to differentiate the algorithmic
/// tangent further (used by the homogenizer).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlasticReturn {
    /// Plastic multiplier increment.
    pub delta_p: f64,
    /// Trial von Mises stress.
    pub trial_equivalent: f64,
    /// `d kappa / dp` at the updated accumulated strain.
    pub hardening_slope: f64,
    /// `d^2 kappa / dp^2` at the updated accumulated strain.
    pub hardening_curvature: f64,
    /// Unit trial deviator direction.
    pub direction: SymTensor2,
    /// Newton iterations spent on the scalar return equation.
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReturnMap {
    pub stress: SymTensor2,
    pub state: MatrixState,
    /// Algorithmic tangent `d stress / d strain increment`.
    pub tangent: SymTensor4,
    pub plastic: Option<PlasticReturn>,
}

/// Hardening stress `kappa(p) = H p + H_inf (1 - exp(-m p))`.
pub fn hardening_stress(p: f64, params: &MatrixParams) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(Error::invalid(format!("accumulated plastic strain must be >= 0, got {p}")));
    }
    Ok(kappa(p, params))
}

fn kappa(p: f64, params: &MatrixParams) -> f64 {
    params.linear_hardening * p + params.saturation_hardening * (-(-params.hardening_exponent * p).exp_m1())
}

fn kappa_slope(p: f64, params: &MatrixParams) -> f64 {
    let m = params.hardening_exponent;
    params.linear_hardening + params.saturation_hardening * m * (-m * p).exp()
}

fn kappa_curvature(p: f64, params: &MatrixParams) -> f64 {
    let m = params.hardening_exponent;
    -params.saturation_hardening * m * m * (-m * p).exp()
}

/// `Phi = sigma_eq - (sigma_y + kappa(p))`; non-positive inside the elastic domain.
pub fn yield_function(stress: &SymTensor2, p: f64, params: &MatrixParams) -> Result<f64> {
    Ok(von_mises(stress) - params.yield_stress - hardening_stress(p, params)?)
}

const MAX_NEWTON: usize = 50;

/// Implicit radial return for a strain increment from a converged state.
pub fn return_map(state: &MatrixState, d_strain: &SymTensor2, params: &MatrixParams) -> Result<ReturnMap> {
    if !d_strain.is_finite() || !state.strain.is_finite() || !state.accumulated.is_finite() {
        return Err(Error::NonFinite("return_map input"));
    }
    let (bulk, mu) = params.bulk_shear();
    let stiffness = SymTensor4::isotropic(bulk, mu);
    let strain = state.strain + *d_strain;
    let trial = stiffness * (strain - state.plastic_strain);
    let p0 = state.accumulated;
    let s_trial = deviator(&trial);
    let s_norm = s_trial.norm();
    let q_trial = (1.5f64).sqrt() * s_norm;
    let phi_trial = q_trial - params.yield_stress - kappa(p0, params);

    if phi_trial <= params.yield_tolerance() {
        return Ok(ReturnMap {
            stress: trial,
            state: MatrixState { strain, ..*state },
            tangent: stiffness,
            plastic: None,
        });
    }

    let residual = |dp: f64| q_trial - 3.0 * mu * dp - params.yield_stress - kappa(p0 + dp, params);
    let tol = 1e-10 * params.yield_stress;
    // r(0) > 0 and r is strictly decreasing; the upper bracket ignores hardening.
    let mut lo = 0.0;
    let mut hi = phi_trial / (3.0 * mu);
    let mut dp = 0.0;
    let mut r = phi_trial;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_NEWTON {
        iterations += 1;
        let slope = -3.0 * mu - kappa_slope(p0 + dp, params);
        let mut next = dp - r / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        dp = next;
        r = residual(dp);
        if r > 0.0 {
            lo = dp;
        } else {
            hi = dp;
        }
        if r.abs() <= tol {
            // One polishing step keeps the tangent consistent to round-off.
            let slope = -3.0 * mu - kappa_slope(p0 + dp, params);
            let polished = dp - r / slope;
            if polished > 0.0 {
                let rp = residual(polished);
                if rp.abs() <= r.abs() {
                    dp = polished;
                    r = rp;
                }
            }
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { what: "radial return", iterations, residual: r });
    }

    let n = s_trial * (1.0 / s_norm);
    let flow = n * ((1.5f64).sqrt() * dp);
    let stress = trial - flow * (2.0 * mu);
    let p = p0 + dp;
    let h = kappa_slope(p, params);

    let ratio = dp / q_trial;
    let tangent = SymTensor4::volumetric() * (3.0 * bulk)
        + SymTensor4::deviatoric() * (2.0 * mu * (1.0 - 3.0 * mu * ratio))
        + n.outer(&n) * (6.0 * mu * mu * (ratio - 1.0 / (3.0 * mu + h)));

    Ok(ReturnMap {
        stress,
        state: MatrixState { strain, plastic_strain: state.plastic_strain + flow, accumulated: p },
        tangent,
        plastic: Some(PlasticReturn {
            delta_p: dp,
            trial_equivalent: q_trial,
            hardening_slope: h,
            hardening_curvature: kappa_curvature(p, params),
            direction: n,
            iterations,
        }),
    })
}

/// `C_F : strain`.
pub fn fiber_stress(strain: &SymTensor2, params: &FiberParams) -> SymTensor2 {
    params.stiffness() * *strain
}

/// The J2 matrix as a stand-alone material point (used for matrix-only
/// simulations through the mixed-control driver).
#[derive(Clone, Copy, Debug, Default)]
pub struct J2Matrix {
    pub params: MatrixParams,
}

impl crate::homogenize::MaterialPoint for J2Matrix {
    type State = MatrixState;

    fn initial_state(&self) -> MatrixState {
        MatrixState::default()
    }

    fn step_to(&self, state: &MatrixState, strain: &SymTensor2) -> Result<(SymTensor2, MatrixState, SymTensor4)> {
        let mut out = return_map(state, &(*strain - state.strain), &self.params)?;
        out.state.strain = *strain;
        Ok((out.stress, out.state, out.tangent))
    }

    fn strain(&self, state: &MatrixState) -> SymTensor2 {
        state.strain
    }

    fn stress(&self, state: &MatrixState) -> SymTensor2 {
        state.stress(&self.params)
    }

    fn reference_stress(&self) -> f64 {
        self.params.yield_stress
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> MatrixParams {
        MatrixParams::default()
    }

    fn random_dir(rng: &mut impl Rng) -> SymTensor2 {
        let mut c = [0.0; 6];
        for x in &mut c {
            *x = rng.random_range(-1.0..1.0);
        }
        let t = SymTensor2::from_plain(c);
        t * (1.0 / t.norm())
    }

    #[test]
    fn hardening_examples() {
        let p = params();
        assert_eq!(hardening_stress(0.0, &p).unwrap(), 0.0);
        assert_relative_eq!(kappa_slope(0.0, &p), 6650.0, epsilon = 1e-9);
        let expected = 150.0 * 0.05 + 20.0 * (1.0 - (-16.25f64).exp());
        assert_relative_eq!(hardening_stress(0.05, &p).unwrap(), expected, epsilon = 1e-12);
        assert_relative_eq!(hardening_stress(0.05, &p).unwrap(), 27.5, epsilon = 1e-4);
        assert!(hardening_stress(-1e-3, &p).is_err());
        // Central difference check of the analytic slope.
        let h = 1e-7;
        let fd = (kappa(0.01 + h, &p) - kappa(0.01 - h, &p)) / (2.0 * h);
        assert_relative_eq!(fd, kappa_slope(0.01, &p), max_relative = 1e-7);
        let mut last = 0.0;
        for i in 1..200 {
            let k = kappa(i as f64 * 1e-3, &p);
            assert!(k > last);
            last = k;
        }
    }

    #[test]
    fn yield_function_examples() {
        let p = params();
        assert_eq!(yield_function(&SymTensor2::zero(), 0.0, &p).unwrap(), -25.0);
        assert!(yield_function(&SymTensor2::diag(25.0, 0.0, 0.0), 0.0, &p).unwrap().abs() < 1e-12);
        let hydro = SymTensor2::identity() * 1e4;
        assert_relative_eq!(yield_function(&hydro, 0.0, &p).unwrap(), -25.0, epsilon = 1e-9);
    }

    #[test]
    fn null_increment() {
        let out = return_map(&MatrixState::default(), &SymTensor2::zero(), &params()).unwrap();
        assert_eq!(out.stress, SymTensor2::zero());
        assert_eq!(out.state, MatrixState::default());
        assert!(out.plastic.is_none());
    }

    #[test]
    fn elastic_below_uniaxial_yield_strain() {
        let p = params();
        let nu = p.poisson;
        // Uniaxial-stress strain state at 99% of the yield strain.
        let e = 0.99 * p.yield_stress / p.young;
        let d = SymTensor2::diag(e, -nu * e, -nu * e);
        let out = return_map(&MatrixState::default(), &d, &p).unwrap();
        assert!(out.plastic.is_none());
        assert_eq!(out.state.accumulated, 0.0);
        assert_relative_eq!(out.stress[0], p.young * e, epsilon = 1e-9);
        assert!(out.stress[1].abs() < 1e-9);
        // Past the yield strain the same direction is plastic.
        let e = 1.01 * p.yield_stress / p.young;
        let d = SymTensor2::diag(e, -nu * e, -nu * e);
        let out = return_map(&MatrixState::default(), &d, &p).unwrap();
        assert!(out.state.accumulated > 0.0);
    }

    #[test]
    fn nan_rejected() {
        let d = SymTensor2::diag(f64::NAN, 0.0, 0.0);
        assert!(matches!(return_map(&MatrixState::default(), &d, &params()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn plastic_update_invariants() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut state = MatrixState::default();
        for _ in 0..500 {
            let d = random_dir(&mut rng) * rng.random_range(0.0..4e-3);
            let out = return_map(&state, &d, &p).unwrap();
            assert!(out.state.plastic_strain.trace().abs() <= 1e-10);
            assert!(out.state.accumulated >= state.accumulated);
            let phi = yield_function(&out.stress, out.state.accumulated, &p).unwrap();
            if out.plastic.is_some() {
                assert!(phi.abs() <= p.yield_tolerance(), "phi = {phi}");
            } else {
                assert!(phi <= p.yield_tolerance());
            }
            // Stress is recoverable from the stored history.
            assert!((out.state.stress(&p) - out.stress).norm() < 1e-9);
            state = out.state;
        }
    }

    #[test]
    fn load_unload_below_yield_returns_to_zero() {
        let p = params();
        let d = SymTensor2::from_plain([1e-3, -2e-4, 3e-4, 1e-4, -5e-4, 2e-4]);
        let a = return_map(&MatrixState::default(), &d, &p).unwrap();
        assert!(a.plastic.is_none());
        let b = return_map(&a.state, &(-d), &p).unwrap();
        assert_eq!(b.stress.norm(), 0.0);
    }

    fn fd_tangent(state: &MatrixState, d: &SymTensor2, p: &MatrixParams, h: f64) -> SymTensor4 {
        let mut m = SymTensor4::zero();
        for j in 0..6 {
            let mut e = SymTensor2::zero();
            e.0[j] = h;
            let plus = return_map(state, &(*d + e), p).unwrap().stress;
            let minus = return_map(state, &(*d - e), p).unwrap().stress;
            let col = (plus - minus) * (0.5 / h);
            for i in 0..6 {
                m.0[(i, j)] = col[i];
            }
        }
        m
    }

    #[test]
    fn consistent_tangent_matches_finite_differences() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut checked_plastic = 0;
        let mut checked_elastic = 0;
        for _ in 0..60 {
            // Random history then a random increment.
            let mut state = MatrixState::default();
            for _ in 0..rng.random_range(0..4) {
                let d = random_dir(&mut rng) * rng.random_range(0.0..1e-2);
                state = return_map(&state, &d, &p).unwrap().state;
            }
            let d = random_dir(&mut rng) * rng.random_range(1e-4..1e-2);
            let out = return_map(&state, &d, &p).unwrap();
            // Skip increments that land within the perturbation of the yield surface.
            let phi_trial = von_mises(&(p.stiffness() * (state.strain + d - state.plastic_strain)))
                - p.yield_stress
                - kappa(state.accumulated, &p);
            if phi_trial.abs() < 1e-3 {
                continue;
            }
            let fd = fd_tangent(&state, &d, &p, 1e-7);
            let err = (fd.0 - out.tangent.0).amax() / out.tangent.0.amax();
            assert!(err <= 1e-5, "tangent error {err}");
            if out.plastic.is_some() {
                checked_plastic += 1;
            } else {
                checked_elastic += 1;
            }
        }
        assert!(checked_plastic > 10 && checked_elastic > 3);
    }
}
