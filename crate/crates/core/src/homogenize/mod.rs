//! Incremental mean-field homogenization of the fiber/matrix composite and
//! the mixed-control material-point driver.

mod composite;
mod driver;
mod eshelby;
mod mori_tanaka;

use serde::{Deserialize, Serialize};

pub use composite::{Composite, CompositeState, CompositeStep};
pub use driver::{pseudo_time, replay_strain, run_program, Control, DriverOptions, LoadProgram, MaterialPoint, SimulationSeries};
pub use eshelby::eshelby;
pub use mori_tanaka::{
    dilute_concentration, isotropize, min_relative_eigenvalue, mt_tangent_ud, reuss_bound, voigt_bound, Spheroid,
};

/// Solver settings of the homogenizer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogenizerOptions {
    /// Iteration cap of the per-increment concentration solve.
    pub max_iterations: usize,
    /// Relative tolerance on the isotropized matrix shear modulus.
    pub tolerance: f64,
    /// Mixed control: free stresses vanish within this fraction of the yield stress.
    pub stress_tolerance: f64,
    pub mixed_max_iterations: usize,
    /// Largest plain strain component change of one plastic sub-increment.
    pub max_substep: f64,
}

impl Default for HomogenizerOptions {
    fn default() -> Self {
        HomogenizerOptions { max_iterations: 100, tolerance: 1e-12, stress_tolerance: 1e-6, mixed_max_iterations: 50, max_substep: 2e-5 }
    }
}

impl HomogenizerOptions {
    pub fn validate(&self) -> crate::Result<()> {
        let positive = [self.tolerance, self.stress_tolerance, self.max_substep].iter().all(|x| *x > 0.0 && x.is_finite());
        if !positive || self.max_iterations == 0 || self.mixed_max_iterations == 0 {
            return Err(crate::Error::invalid("homogenizer tolerances, step size and iteration caps must be positive"));
        }
        Ok(())
    }

    pub fn driver(&self) -> DriverOptions {
        DriverOptions { stress_tolerance: self.stress_tolerance, max_iterations: self.mixed_max_iterations }
    }
}
