//! Fixtures shared by the kernel benchmarks.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfrc::evaluate::{virtual_sample, Oracle};
use sfrc::homogenize::{Composite, CompositeState};
use sfrc::matpoint::{return_map, MatrixParams, MatrixState};
use sfrc::surrogate::{GruParams, INPUT_WIDTH, OUTPUT_WIDTH};
use sfrc::SymTensor2;

/// A matrix state on the yield surface after uniaxial loading, and a strain
/// increment that keeps it flowing.
pub fn plastic_matrix() -> (MatrixParams, MatrixState, SymTensor2) {
    let params = MatrixParams::default();
    let load = SymTensor2::from_plain([0.02, -0.007, -0.007, 0.0, 0.0, 0.003]);
    let state = return_map(&MatrixState::default(), &load, &params).expect("fixture loading").state;
    (params, state, SymTensor2::from_plain([2e-4, -5e-5, -5e-5, 1e-5, 0.0, 2e-5]))
}

/// The 3D-random virtual sample loaded into the plastic range, and a
/// further strain increment.
pub fn plastic_composite() -> (Composite, CompositeState, SymTensor2) {
    let sample = virtual_sample("3D").expect("fixture sample");
    let composite = Oracle::default().composite(sample.orientation, sample.volume_fraction).expect("fixture composite");
    let load = SymTensor2::from_plain([0.01, -0.004, -0.004, 0.0, 0.0, 0.0]);
    let state = composite.step(&composite.initial_state(), &load).expect("fixture loading").state;
    (composite, state, SymTensor2::from_plain([2e-4, -8e-5, -8e-5, 0.0, 0.0, 0.0]))
}

/// Randomly initialized network and a random batch in the network's column
/// layout.
pub fn gru_batch(widths: &[usize], steps: usize, batch: usize) -> (GruParams, DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = GruParams::init(INPUT_WIDTH, widths, OUTPUT_WIDTH, &mut rng);
    let x = DMatrix::from_fn(INPUT_WIDTH, steps * batch, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(OUTPUT_WIDTH, steps * batch, |_, _| rng.random_range(-1.0..1.0));
    (params, x, y)
}
