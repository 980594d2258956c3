//! Incremental first-order Mori-Tanaka scheme for the elasto-plastic matrix /
//! elastic fiber composite.
//!
//! Per increment the matrix algorithmic tangent is isotropized. Its bulk
//! modulus never changes (J2 flow is deviatoric), so the whole concentration
//! problem depends on the matrix strain increment only through the isotropic
//! shear modulus `mu_iso`. The increment is therefore solved as a scalar
//! equation `mu_iso(B(mu) : d_eps) = mu`, where `B(mu)` is the matrix strain
//! concentration implied by the orientation-averaged Mori-Tanaka tangent
//! (two-phase Hill relation). Fiber strain follows from phase-average
//! consistency and the macro stress from the phase stresses.

use crate::error::{Error, Result};
use crate::matpoint::{return_map, MatrixParams, MatrixState, ReturnMap};
use crate::microstructure::{Microstructure, OrientationAverager};
use crate::tensor::{poisson_from_moduli, SymTensor2, SymTensor4};

use super::driver::MaterialPoint;
use super::eshelby::eshelby;
use super::mori_tanaka::mt_with_eshelby;
use super::HomogenizerOptions;

/// History of a composite material point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositeState {
    pub strain: SymTensor2,
    pub stress: SymTensor2,
    pub matrix: MatrixState,
    pub fiber_strain: SymTensor2,
    /// Isotropized matrix shear modulus of the last converged increment.
    pub matrix_shear_iso: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositeStep {
    pub stress: SymTensor2,
    pub state: CompositeState,
    pub tangent: SymTensor4,
    pub iterations: usize,
}

/// Orientation-averaged macro tangent and the matching matrix concentration.
#[derive(Clone, Copy, Debug)]
struct Concentration {
    effective: SymTensor4,
    matrix: SymTensor4,
}

#[derive(Clone, Debug)]
pub struct Composite {
    params: MatrixParams,
    micro: Microstructure,
    options: HomogenizerOptions,
    averager: OrientationAverager,
    c_fiber: SymTensor4,
    elastic: Concentration,
    bulk: f64,
    shear: f64,
}

impl Composite {
    pub fn new(params: MatrixParams, micro: Microstructure, options: HomogenizerOptions) -> Result<Self> {
        params.validate()?;
        micro.fiber.validate()?;
        options.validate()?;
        let (bulk, shear) = params.bulk_shear();
        let mut c = Composite {
            params,
            micro,
            options,
            averager: OrientationAverager::new(micro.orientation),
            c_fiber: micro.fiber.stiffness(),
            elastic: Concentration { effective: SymTensor4::zero(), matrix: SymTensor4::zero() },
            bulk,
            shear,
        };
        c.elastic = c.concentration(shear)?;
        Ok(c)
    }

    pub fn params(&self) -> &MatrixParams {
        &self.params
    }

    pub fn microstructure(&self) -> &Microstructure {
        &self.micro
    }

    pub fn options(&self) -> &HomogenizerOptions {
        &self.options
    }

    pub fn initial_state(&self) -> CompositeState {
        CompositeState {
            strain: SymTensor2::zero(),
            stress: SymTensor2::zero(),
            matrix: MatrixState::default(),
            fiber_strain: SymTensor2::zero(),
            matrix_shear_iso: self.shear,
        }
    }

    /// Effective elastic stiffness (orientation-averaged Mori-Tanaka).
    pub fn elastic_stiffness(&self) -> SymTensor4 {
        self.elastic.effective
    }

    /// Effective stiffness for an isotropic matrix of moduli `(bulk, shear)`.
    fn concentration(&self, shear: f64) -> Result<Concentration> {
        let v = self.micro.volume_fraction;
        let c_matrix = SymTensor4::isotropic(self.bulk, shear);
        if v == 0.0 {
            return Ok(Concentration { effective: c_matrix, matrix: SymTensor4::identity() });
        }
        let s = eshelby(self.micro.fiber.aspect_ratio, poisson_from_moduli(self.bulk, shear))?;
        let ud = mt_with_eshelby(&c_matrix, &self.c_fiber, v, &s)?;
        let effective = self.averager.average(&ud)?;
        // Two-phase Hill relation: (1 - v)(C_F - C_M) B_M = C_F - C_eff.
        let diff_inv = (self.c_fiber - c_matrix).inverse().ok_or(Error::Singular("phase contrast"))?;
        let matrix = diff_inv * (self.c_fiber - effective) * (1.0 / (1.0 - v));
        Ok(Concentration { effective, matrix })
    }

    fn concentration_derivative(&self, shear: f64) -> Result<SymTensor4> {
        if self.micro.volume_fraction == 0.0 {
            return Ok(SymTensor4::zero());
        }
        let h = 1e-6 * shear;
        let plus = self.concentration(shear + h)?.matrix;
        let minus = self.concentration(shear - h)?.matrix;
        Ok((plus - minus) * (0.5 / h))
    }

    /// Isotropized shear modulus of the algorithmic tangent of `ret`, its
    /// gradient with respect to the matrix strain increment, and its partial
    /// derivative with respect to the accumulated plastic strain at the start
    /// of the increment.
    pub fn isotropic_shear(&self, ret: &ReturnMap) -> (f64, SymTensor2, f64) {
        let mu = self.shear;
        let Some(pl) = ret.plastic else {
            return (mu, SymTensor2::zero(), 0.0);
        };
        let q = pl.trial_equivalent;
        let dp = pl.delta_p;
        let h = pl.hardening_slope;
        let d = 3.0 * mu + h;
        let mu2 = mu * mu;
        let value = mu - 2.4 * mu2 * dp / q - 0.6 * mu2 / d;
        let per_q = -2.4 * mu2 * (1.0 / (d * q) - dp / (q * q)) + 0.6 * mu2 * pl.hardening_curvature / (d * d * d);
        let per_p = 2.4 * mu2 * h / (d * q) + 0.6 * mu2 * pl.hardening_curvature * 3.0 * mu / (d * d * d);
        (value, pl.direction * (per_q * 6f64.sqrt() * mu), per_p)
    }

    /// Solves `mu_iso(return_map(B(mu) : delta)) = mu` for one sub-increment.
    fn solve_increment(&self, matrix: &MatrixState, delta: &SymTensor2, guess: f64) -> Result<Increment> {
        let mu_el = self.shear;
        let tol = self.options.tolerance * mu_el;
        let mut mu = if guess > 0.0 && guess < mu_el { guess } else { mu_el };
        let mut lo: Option<f64> = None;
        let mut hi = mu_el;
        let mut iterations = 0;
        loop {
            iterations += 1;
            let conc = if mu == mu_el { self.elastic } else { self.concentration(mu)? };
            let x = conc.matrix * *delta;
            let ret = return_map(matrix, &x, &self.params)?;
            let (mu_iso, grad, per_p) = self.isotropic_shear(&ret);
            let g = mu_iso - mu;
            if ret.plastic.is_none() && mu == mu_el {
                return Ok(Increment { mu, conc: conc.matrix, dconc: SymTensor4::zero(), ret, grad, per_p, iterations });
            }
            let dconc = self.concentration_derivative(mu)?;
            // The isotropized tangent jumps where the matrix increment just
            // reaches the yield surface, so `g` can change sign without a
            // root. A bracket collapsed to round-off marks that point.
            let collapsed = lo.is_some_and(|l| hi - l <= 1e-13 * mu_el);
            if g.abs() <= tol || collapsed {
                return Ok(Increment { mu, conc: conc.matrix, dconc, ret, grad, per_p, iterations });
            }
            if iterations >= self.options.max_iterations {
                return Err(Error::NonConvergence { what: "composite increment", iterations, residual: g / mu_el });
            }
            if g > 0.0 {
                lo = Some(mu);
            } else {
                hi = mu;
            }
            let slope = grad.dot(&(dconc * *delta)) - 1.0;
            let mut next = mu - g / slope;
            let inside = next < hi && lo.is_none_or(|l| next > l) && next > 0.0;
            if !inside || !next.is_finite() {
                next = match lo {
                    Some(l) => 0.5 * (l + hi),
                    None => 0.5 * mu,
                };
            }
            mu = next;
        }
    }

    /// Number of sub-increments used for a macro increment.
    pub fn substeps(&self, d_strain: &SymTensor2) -> usize {
        let largest = d_strain.to_plain().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        ((largest / self.options.max_substep).ceil() as usize).max(1)
    }

    /// One strain-driven increment from a converged state.
    ///
    /// An increment that stays elastic is taken in one go (the response is
    /// linear). Otherwise it is split into equal sub-increments so that the
    /// result does not depend on how finely the loading program is
    /// discretized. The returned tangent is the exact derivative of the
    /// sub-stepped update, obtained by carrying the sensitivities of the
    /// matrix state through the sub-increments.
    pub fn step(&self, state: &CompositeState, d_strain: &SymTensor2) -> Result<CompositeStep> {
        if !d_strain.is_finite() {
            return Err(Error::NonFinite("macro strain increment"));
        }
        let v = self.micro.volume_fraction;
        let mu_el = self.shear;

        let trial = return_map(&state.matrix, &(self.elastic.matrix * *d_strain), &self.params)?;
        let (k, mut iterations) = if trial.plastic.is_none() { (1, 1) } else { (self.substeps(d_strain), 1) };
        let delta = *d_strain * (1.0 / k as f64);
        let inv_k = 1.0 / k as f64;

        let mut matrix = state.matrix;
        let mut guess = if state.matrix_shear_iso < mu_el { state.matrix_shear_iso } else { mu_el };
        // Sensitivities with respect to the macro increment: matrix strain,
        // matrix elastic strain (rows as 6x6) and accumulated plastic strain.
        let mut d_matrix = SymTensor4::zero();
        let mut d_elastic = SymTensor4::zero();
        let mut d_acc = SymTensor2::zero();
        let mut stress_m = state.matrix.stress(&self.params);
        for _ in 0..k {
            let inc = if trial.plastic.is_none() {
                Increment {
                    mu: mu_el,
                    conc: self.elastic.matrix,
                    dconc: SymTensor4::zero(),
                    ret: trial,
                    grad: SymTensor2::zero(),
                    per_p: 0.0,
                    iterations: 1,
                }
            } else {
                let inc = self.solve_increment(&matrix, &delta, guess)?;
                iterations += inc.iterations;
                inc
            };
            let b_k = inc.conc * inv_k;
            let d_x = match inc.ret.plastic {
                None => b_k,
                Some(pl) => {
                    let u = inc.dconc * delta;
                    let denom = 1.0 - inc.grad.dot(&u);
                    let d_mu = (d_elastic.transpose() * inc.grad + b_k.transpose() * inc.grad + d_acc * inc.per_p) * (1.0 / denom);
                    let d_x = b_k + u.outer(&d_mu);
                    let d_trial = d_elastic + d_x;
                    let n = pl.direction;
                    let h = pl.hardening_slope;
                    let den = 3.0 * mu_el + h;
                    let d_q = d_trial.transpose() * (n * (6f64.sqrt() * mu_el));
                    let d_dp = d_q * (1.0 / den) - d_acc * (h / den);
                    let proj = SymTensor4::deviatoric() - n.outer(&n);
                    let d_n = proj * d_trial * (6f64.sqrt() * mu_el / pl.trial_equivalent);
                    d_elastic = d_trial - (n.outer(&d_dp) + d_n * pl.delta_p) * 1.5f64.sqrt();
                    d_acc += d_dp;
                    d_matrix = d_matrix + d_x;
                    guess = inc.mu;
                    matrix = inc.ret.state;
                    stress_m = inc.ret.stress;
                    continue;
                }
            };
            d_elastic = d_elastic + d_x;
            d_matrix = d_matrix + d_x;
            guess = mu_el;
            matrix = inc.ret.state;
            stress_m = inc.ret.stress;
        }

        let strain = state.strain + *d_strain;
        let fiber_strain = if v > 0.0 { (strain - matrix.strain * (1.0 - v)) * (1.0 / v) } else { strain };
        let stress = (self.c_fiber * fiber_strain) * v + stress_m * (1.0 - v);
        let c_matrix = self.params.stiffness();
        let tangent = if v > 0.0 {
            self.c_fiber + (c_matrix * d_elastic - self.c_fiber * d_matrix) * (1.0 - v)
        } else {
            c_matrix * d_elastic
        };

        if !stress.is_finite() || !tangent.is_finite() {
            return Err(Error::NonFinite("composite step result"));
        }
        Ok(CompositeStep {
            stress,
            state: CompositeState { strain, stress, matrix, fiber_strain, matrix_shear_iso: guess },
            tangent,
            iterations,
        })
    }
}

/// Converged concentration problem of one sub-increment.
struct Increment {
    mu: f64,
    conc: SymTensor4,
    dconc: SymTensor4,
    ret: ReturnMap,
    grad: SymTensor2,
    per_p: f64,
    iterations: usize,
}

impl MaterialPoint for Composite {
    type State = CompositeState;

    fn initial_state(&self) -> CompositeState {
        Composite::initial_state(self)
    }

    fn step_to(&self, state: &CompositeState, strain: &SymTensor2) -> Result<(SymTensor2, CompositeState, SymTensor4)> {
        let mut out = Composite::step(self, state, &(*strain - state.strain))?;
        out.state.strain = *strain;
        Ok((out.stress, out.state, out.tangent))
    }

    fn strain(&self, state: &CompositeState) -> SymTensor2 {
        state.strain
    }

    fn stress(&self, state: &CompositeState) -> SymTensor2 {
        state.stress
    }

    fn reference_stress(&self) -> f64 {
        self.params.yield_stress
    }
}
