//! Mixed strain/stress control of a material point.

use std::io::Write;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::{SymTensor2, SymTensor4, MANDEL_SCALE};

/// A strain-driven material point with a consistent tangent.
pub trait MaterialPoint {
    type State: Clone;

    fn initial_state(&self) -> Self::State;

    /// Advances a converged state to the total strain `strain`. Returns
    /// `(stress, state, d stress / d strain)`. The new state must report
    /// exactly `strain` as its strain, so that replaying a recorded strain
    /// series reproduces the recorded stresses bit for bit.
    fn step_to(&self, state: &Self::State, strain: &SymTensor2) -> Result<(SymTensor2, Self::State, SymTensor4)>;

    fn strain(&self, state: &Self::State) -> SymTensor2;

    fn stress(&self, state: &Self::State) -> SymTensor2;

    /// Stress scale for the mixed-control tolerance.
    fn reference_stress(&self) -> f64;
}

/// Per-component control.
#[derive(Clone, Debug, PartialEq)]
pub enum Control {
    /// Imposed plain strain component at every step (index 0 is the start).
    Strain(Vec<f64>),
    /// Stress component held at zero; the strain component is solved for.
    FreeStress,
}

/// Load program in plain component order `11, 22, 33, 23, 13, 12`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadProgram {
    pub controls: [Control; 6],
}

impl LoadProgram {
    /// All six components strain-controlled.
    pub fn strain_driven(path: &[[f64; 6]]) -> Self {
        let controls = std::array::from_fn(|k| Control::Strain(path.iter().map(|row| row[k]).collect()));
        LoadProgram { controls }
    }

    /// Number of increments.
    pub fn steps(&self) -> usize {
        self.controls
            .iter()
            .find_map(|c| match c {
                Control::Strain(v) => Some(v.len().saturating_sub(1)),
                Control::FreeStress => None,
            })
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let lengths: Vec<usize> = self
            .controls
            .iter()
            .filter_map(|c| match c {
                Control::Strain(v) => Some(v.len()),
                Control::FreeStress => None,
            })
            .collect();
        let Some(&n) = lengths.first() else {
            return Err(Error::Program("at least one component must be strain-controlled".into()));
        };
        if lengths.iter().any(|&l| l != n) {
            return Err(Error::Program(format!("strain series lengths differ: {lengths:?}")));
        }
        if n < 2 {
            return Err(Error::Program("a program needs at least one increment".into()));
        }
        for c in &self.controls {
            if let Control::Strain(v) = c {
                if v[0] != 0.0 {
                    return Err(Error::Program("imposed strains must start at zero".into()));
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Program("non-finite imposed strain".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriverOptions {
    /// Free stress components must vanish within this fraction of the
    /// material's reference stress.
    pub stress_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DriverOptions {
    fn default() -> Self {
        DriverOptions { stress_tolerance: 1e-6, max_iterations: 50 }
    }
}

/// Strain and stress history of a simulation (Mandel components).
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SimulationSeries {
    pub time: Vec<f64>,
    pub strain: Vec<SymTensor2>,
    pub stress: Vec<SymTensor2>,
}

impl SimulationSeries {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn strain_plain(&self) -> Vec<[f64; 6]> {
        self.strain.iter().map(SymTensor2::to_plain).collect()
    }

    pub fn stress_plain(&self) -> Vec<[f64; 6]> {
        self.stress.iter().map(SymTensor2::to_plain).collect()
    }

    /// CSV with header `t,eps11,...,eps12,sig11,...,sig12` (plain components).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,eps11,eps22,eps33,eps23,eps13,eps12,sig11,sig22,sig33,sig23,sig13,sig12")?;
        for ((t, e), s) in self.time.iter().zip(&self.strain).zip(&self.stress) {
            write!(out, "{t}")?;
            for x in e.to_plain().iter().chain(s.to_plain().iter()) {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Uniform pseudo-time from 0 to 1 over `steps` increments.
pub fn pseudo_time(steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| if steps == 0 { 0.0 } else { i as f64 / steps as f64 }).collect()
}

/// Runs a load program. Free components are solved by Newton iteration on
/// the consistent tangent so that the corresponding stresses vanish.
pub fn run_program<M: MaterialPoint>(material: &M, program: &LoadProgram, options: &DriverOptions) -> Result<SimulationSeries> {
    program.validate()?;
    let steps = program.steps();
    let free: Vec<usize> = (0..6).filter(|&k| program.controls[k] == Control::FreeStress).collect();
    let tol = options.stress_tolerance * material.reference_stress();

    let mut state = material.initial_state();
    let mut series = SimulationSeries {
        time: pseudo_time(steps),
        strain: Vec::with_capacity(steps + 1),
        stress: Vec::with_capacity(steps + 1),
    };
    series.strain.push(material.strain(&state));
    series.stress.push(material.stress(&state));
    let mut tangent = if free.is_empty() {
        SymTensor4::identity()
    } else {
        let start = material.strain(&state);
        material.step_to(&state, &start).map_err(|e| Error::Step { step: 0, source: Box::new(e) })?.2
    };

    for n in 0..steps {
        let wrap = |e: Error| Error::Step { step: n + 1, source: Box::new(e) };
        let strain_n = material.strain(&state);
        let stress_n = material.stress(&state);
        let mut target = strain_n;
        for (k, c) in program.controls.iter().enumerate() {
            if let Control::Strain(v) = c {
                target.0[k] = v[n + 1] * MANDEL_SCALE[k];
            }
        }
        if !free.is_empty() {
            // Tangent predictor for the free components.
            let delta = target - strain_n;
            let mut rhs: Vec<f64> = free.iter().map(|&i| stress_n[i]).collect();
            for (r, &i) in rhs.iter_mut().zip(&free) {
                for k in 0..6 {
                    if !free.contains(&k) {
                        *r += tangent.0[(i, k)] * delta[k];
                    }
                }
            }
            if let Some(sol) = solve_free(&tangent, &free, &rhs) {
                for (x, &i) in sol.iter().zip(&free) {
                    target.0[i] = strain_n[i] - x;
                }
            }
        }

        let mut iterations = 0;
        let next = loop {
            iterations += 1;
            let (stress, next, c) = material.step_to(&state, &target).map_err(wrap)?;
            tangent = c;
            let residual: Vec<f64> = free.iter().map(|&i| stress[i]).collect();
            let worst = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            if worst <= tol {
                break next;
            }
            if iterations >= options.max_iterations {
                return Err(wrap(Error::NonConvergence { what: "mixed-control Newton", iterations, residual: worst }));
            }
            let sol = solve_free(&tangent, &free, &residual).ok_or_else(|| wrap(Error::Singular("free-component tangent")))?;
            for (x, &i) in sol.iter().zip(&free) {
                target.0[i] -= x;
            }
        };
        state = next;
        series.strain.push(material.strain(&state));
        series.stress.push(material.stress(&state));
    }
    Ok(series)
}

/// Drives a material point through a recorded strain series (Mandel
/// components, starting at the initial strain).
pub fn replay_strain<M: MaterialPoint>(material: &M, strain: &[SymTensor2]) -> Result<SimulationSeries> {
    let mut state = material.initial_state();
    let steps = strain.len().saturating_sub(1);
    let mut series = SimulationSeries {
        time: pseudo_time(steps),
        strain: vec![material.strain(&state)],
        stress: vec![material.stress(&state)],
    };
    for (n, target) in strain.iter().enumerate().skip(1) {
        state = material.step_to(&state, target).map_err(|e| Error::Step { step: n, source: Box::new(e) })?.1;
        series.strain.push(material.strain(&state));
        series.stress.push(material.stress(&state));
    }
    Ok(series)
}

fn solve_free(tangent: &SymTensor4, free: &[usize], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = free.len();
    let m = DMatrix::from_fn(n, n, |a, b| tangent.0[(free[a], free[b])]);
    let lu = m.lu();
    let x = lu.solve(&nalgebra::DVector::from_column_slice(rhs))?;
    Some(x.iter().copied().collect())
}
