//! Error metrics and the virtual-sample test campaigns that compare a stress
//! predictor against the mean-field oracle.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homogenize::{replay_strain, run_program, Composite, Control, HomogenizerOptions, LoadProgram, SimulationSeries};
use crate::matpoint::{FiberParams, MatrixParams};
use crate::microstructure::{Microstructure, OrientationTensor};
use crate::surrogate::{features, GruModel};
use crate::tensor::SymTensor2;

/// Plain stress component names in storage order.
pub const COMPONENTS: [&str; 6] = ["11", "22", "33", "23", "13", "12"];

/// Per-component error of one predicted stress series, normalized by the
/// matrix yield stress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub sample: String,
    pub case: String,
    /// Number of increments of the series.
    pub steps: usize,
    /// Root-mean-square error over the series.
    pub mere: [f64; 6],
    /// Largest absolute error over the series.
    pub mare: [f64; 6],
}

impl ErrorReport {
    pub fn mean_mere(&self) -> f64 {
        self.mere.iter().sum::<f64>() / 6.0
    }

    pub fn mean_mare(&self) -> f64 {
        self.mare.iter().sum::<f64>() / 6.0
    }

    pub fn labeled(mut self, sample: impl Into<String>, case: impl Into<String>) -> Self {
        self.sample = sample.into();
        self.case = case.into();
        self
    }
}

/// Mean and maximum relative error of `pred` against `truth` (plain
/// components, MPa).
pub fn mere_mare(pred: &[[f64; 6]], truth: &[[f64; 6]], yield_stress: f64) -> Result<ErrorReport> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!("prediction has {} rows, truth has {}", pred.len(), truth.len())));
    }
    if pred.is_empty() {
        return Err(Error::Shape("cannot score an empty series".into()));
    }
    if !(yield_stress > 0.0) || !yield_stress.is_finite() {
        return Err(Error::invalid(format!("yield stress must be positive, got {yield_stress}")));
    }
    let mut sq = [0.0; 6];
    let mut mare = [0.0f64; 6];
    for (p, t) in pred.iter().zip(truth) {
        for k in 0..6 {
            let e = p[k] - t[k];
            sq[k] += e * e;
            mare[k] = mare[k].max(e.abs());
        }
    }
    let n = pred.len() as f64;
    let mut mere = sq.map(|s| (s / n).sqrt() / yield_stress);
    mare = mare.map(|m| m / yield_stress);
    // Rounding can push the RMS a hair above the maximum for constant errors.
    for k in 0..6 {
        mere[k] = mere[k].min(mare[k]);
    }
    if mere.iter().chain(&mare).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("error metrics"));
    }
    Ok(ErrorReport { sample: String::new(), case: String::new(), steps: pred.len() - 1, mere, mare })
}

/// Component-wise mean of several reports.
pub fn average_report(reports: &[ErrorReport], sample: &str, case: &str) -> Result<ErrorReport> {
    if reports.is_empty() {
        return Err(Error::invalid("cannot average zero reports"));
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&ErrorReport) -> [f64; 6]| {
        let mut m = [0.0; 6];
        for r in reports {
            for (a, b) in m.iter_mut().zip(f(r)) {
                *a += b / n;
            }
        }
        m
    };
    Ok(ErrorReport {
        sample: sample.into(),
        case: case.into(),
        steps: reports.iter().map(|r| r.steps).max().unwrap_or(0),
        mere: mean(&|r| r.mere),
        mare: mean(&|r| r.mare),
    })
}

/// A named microstructure used by the test campaigns.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualSample {
    pub label: String,
    pub orientation: OrientationTensor,
    pub volume_fraction: f64,
}

impl VirtualSample {
    pub fn new(label: impl Into<String>, orientation: OrientationTensor, volume_fraction: f64) -> Self {
        VirtualSample { label: label.into(), orientation, volume_fraction }
    }
}

/// Orientation tensors are tabulated to three decimals.
const TABLE_TOLERANCE: f64 = 1e-3;

/// The eight reference microstructures: five measured samples and the ideal
/// aligned, planar-random and 3D-random arrangements.
pub fn virtual_samples() -> Result<Vec<VirtualSample>> {
    let measured: [(&str, [f64; 6], f64); 5] = [
        ("1", [0.477, 0.188, 0.335, -0.080, -0.071, -0.183], 0.130),
        ("2", [0.094, 0.692, 0.214, -0.103, 0.012, -0.255], 0.144),
        ("3", [0.649, 0.139, 0.212, 0.011, -0.117, -0.154], 0.131),
        ("4", [0.392, 0.225, 0.382, -0.142, 0.080, 0.152], 0.139),
        ("5", [0.000, 0.919, 0.081, 0.015, 0.005, 0.273], 0.109),
    ];
    let mut out = Vec::with_capacity(8);
    for (label, a, vf) in measured {
        out.push(VirtualSample::new(label, OrientationTensor::from_rounded(a, TABLE_TOLERANCE)?, vf));
    }
    out.push(VirtualSample::new("1D", OrientationTensor::uniaxial(), 0.12));
    out.push(VirtualSample::new("2D", OrientationTensor::planar_random(), 0.12));
    out.push(VirtualSample::new("3D", OrientationTensor::isotropic(), 0.12));
    Ok(out)
}

/// The virtual sample with the given label.
pub fn virtual_sample(label: &str) -> Result<VirtualSample> {
    virtual_samples()?
        .into_iter()
        .find(|s| s.label == label)
        .ok_or_else(|| Error::invalid(format!("unknown virtual sample {label:?}")))
}

/// Symmetric triangle cycles `0 -> a -> -a -> 0` with segment lengths in the
/// ratio 1:2:1. Returns `cycles * steps_per_cycle + 1` values.
pub fn cycle_waveform(amplitude: f64, cycles: usize, steps_per_cycle: usize) -> Result<Vec<f64>> {
    if steps_per_cycle == 0 || !steps_per_cycle.is_multiple_of(4) {
        return Err(Error::invalid(format!("steps per cycle must be a positive multiple of 4, got {steps_per_cycle}")));
    }
    if cycles == 0 || !amplitude.is_finite() {
        return Err(Error::invalid("a cycle program needs at least one cycle and a finite amplitude"));
    }
    let quarter = steps_per_cycle / 4;
    let mut out = Vec::with_capacity(cycles * steps_per_cycle + 1);
    out.push(0.0);
    for _ in 0..cycles {
        for i in 1..=steps_per_cycle {
            let v = if i <= quarter {
                i as f64 / quarter as f64
            } else if i <= 3 * quarter {
                1.0 - (i - quarter) as f64 / quarter as f64
            } else {
                -1.0 + (i - 3 * quarter) as f64 / quarter as f64
            };
            out.push(amplitude * v);
        }
    }
    Ok(out)
}

/// Cyclic load cases. Components that are neither imposed nor held at zero
/// strain are stress-free.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadCase {
    /// `eps11` imposed.
    Uniaxial11,
    /// `eps12` imposed.
    Shear12,
    /// `eps11` and `eps22` imposed with equal amplitude.
    Biaxial11_22,
    /// `eps11` and `eps23` imposed with equal amplitude.
    Biaxial11_23,
    /// `eps11` imposed; `eps33`, `eps23`, `eps13` held at zero.
    PlaneStrain11_22,
}

impl LoadCase {
    pub const ALL: [LoadCase; 5] =
        [LoadCase::Uniaxial11, LoadCase::Shear12, LoadCase::Biaxial11_22, LoadCase::Biaxial11_23, LoadCase::PlaneStrain11_22];

    pub fn label(self) -> &'static str {
        match self {
            LoadCase::Uniaxial11 => "uniaxial-11",
            LoadCase::Shear12 => "shear-12",
            LoadCase::Biaxial11_22 => "biaxial-11-22",
            LoadCase::Biaxial11_23 => "biaxial-11-23",
            LoadCase::PlaneStrain11_22 => "plane-strain-11-22",
        }
    }

    /// Mixed-control program of `cycles` triangle cycles of amplitude
    /// `amplitude` on the driven components.
    pub fn program(self, amplitude: f64, cycles: usize, steps_per_cycle: usize) -> Result<LoadProgram> {
        let wave = cycle_waveform(amplitude, cycles, steps_per_cycle)?;
        let zero = vec![0.0; wave.len()];
        let mut controls: [Control; 6] = std::array::from_fn(|_| Control::FreeStress);
        let driven: &[usize] = match self {
            LoadCase::Uniaxial11 => &[0],
            LoadCase::Shear12 => &[5],
            LoadCase::Biaxial11_22 => &[0, 1],
            LoadCase::Biaxial11_23 => &[0, 3],
            LoadCase::PlaneStrain11_22 => &[0],
        };
        for &k in driven {
            controls[k] = Control::Strain(wave.clone());
        }
        if self == LoadCase::PlaneStrain11_22 {
            for k in [2, 3, 4] {
                controls[k] = Control::Strain(zero.clone());
            }
        }
        Ok(LoadProgram { controls })
    }
}

/// Anything that maps a strain history and a microstructure to a stress
/// history.
pub trait StressPredictor: Sync {
    /// Stress series in plain components for a Mandel strain series that
    /// starts at zero.
    fn predict(&self, strain: &[SymTensor2], sample: &VirtualSample) -> Result<Vec<[f64; 6]>>;
}

impl StressPredictor for GruModel {
    fn predict(&self, strain: &[SymTensor2], sample: &VirtualSample) -> Result<Vec<[f64; 6]>> {
        let plain: Vec<[f64; 6]> = strain.iter().map(SymTensor2::to_plain).collect();
        GruModel::predict(self, &features(&plain, sample.orientation.components(), sample.volume_fraction))
    }
}

/// The mean-field reference model.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Oracle {
    pub matrix: MatrixParams,
    pub fiber: FiberParams,
    pub options: HomogenizerOptions,
}

impl Oracle {
    pub fn composite(&self, orientation: OrientationTensor, volume_fraction: f64) -> Result<Composite> {
        let micro = Microstructure::new(orientation, volume_fraction, self.fiber)?;
        Composite::new(self.matrix, micro, self.options)
    }

    pub fn simulate(&self, sample: &VirtualSample, program: &LoadProgram) -> Result<SimulationSeries> {
        let composite = self.composite(sample.orientation, sample.volume_fraction)?;
        run_program(&composite, program, &self.options.driver())
    }
}

impl StressPredictor for Oracle {
    fn predict(&self, strain: &[SymTensor2], sample: &VirtualSample) -> Result<Vec<[f64; 6]>> {
        let composite = self.composite(sample.orientation, sample.volume_fraction)?;
        Ok(replay_strain(&composite, strain)?.stress_plain())
    }
}

/// Settings of the test campaigns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSettings {
    /// Increments per load cycle.
    pub steps_per_cycle: usize,
    /// Control strain of the one-cycle campaign.
    pub one_cycle_amplitude: f64,
    /// Samples of the one-cycle campaign.
    pub one_cycle_samples: Vec<String>,
    /// Control strain of the repeated-cycle campaign.
    pub cyclic_amplitude: f64,
    pub max_cycles: usize,
    pub cyclic_samples: Vec<String>,
    /// Fiber volume fractions of the extrapolation sweep.
    pub extrapolation_fractions: Vec<f64>,
    /// Control strains of the extrapolation sweep.
    pub extrapolation_amplitudes: Vec<f64>,
    /// Sample whose orientation the extrapolation sweep uses.
    pub extrapolation_sample: String,
    /// Time resampling factors applied to the one-cycle uniaxial case.
    pub resampling_factors: Vec<f64>,
}

impl Default for CampaignSettings {
    fn default() -> Self {
        CampaignSettings {
            steps_per_cycle: 200,
            one_cycle_amplitude: 0.035,
            one_cycle_samples: ["1", "2", "3", "4", "5"].map(String::from).to_vec(),
            cyclic_amplitude: 0.04,
            max_cycles: 5,
            cyclic_samples: ["1D", "2D", "3D"].map(String::from).to_vec(),
            extrapolation_fractions: vec![0.001, 0.025, 0.05, 0.075, 0.10, 0.125, 0.15, 0.175, 0.20],
            extrapolation_amplitudes: vec![0.05, 0.075, 0.10],
            extrapolation_sample: "3D".into(),
            resampling_factors: vec![0.5, 1.0, 2.0],
        }
    }
}

impl CampaignSettings {
    pub fn validate(&self) -> Result<()> {
        cycle_waveform(1.0, 1, self.steps_per_cycle)?;
        if self.max_cycles == 0 {
            return Err(Error::invalid("max_cycles must be positive"));
        }
        let amps = [self.one_cycle_amplitude, self.cyclic_amplitude].into_iter().chain(self.extrapolation_amplitudes.iter().copied());
        for a in amps {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::invalid(format!("control strains must be positive, got {a}")));
            }
        }
        if self.extrapolation_fractions.iter().any(|v| !(0.0..1.0).contains(v)) {
            return Err(Error::invalid("extrapolation volume fractions must lie in [0, 1)"));
        }
        if self.resampling_factors.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(Error::invalid("resampling factors must be positive"));
        }
        let samples = virtual_samples()?;
        for label in self.one_cycle_samples.iter().chain(&self.cyclic_samples).chain([&self.extrapolation_sample]) {
            if !samples.iter().any(|s| &s.label == label) {
                return Err(Error::invalid(format!("unknown virtual sample {label:?}")));
            }
        }
        Ok(())
    }
}

/// Oracle and predicted series of one campaign case.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseResult {
    pub report: ErrorReport,
    pub truth: SimulationSeries,
    pub predicted: Vec<[f64; 6]>,
}

impl CaseResult {
    /// CSV with the strain, oracle stress and predicted stress per step
    /// (plain components).
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "t")?;
        for prefix in ["eps", "sig", "pred"] {
            for c in COMPONENTS {
                write!(out, ",{prefix}{c}")?;
            }
        }
        writeln!(out)?;
        for (i, p) in self.predicted.iter().enumerate() {
            write!(out, "{}", self.truth.time[i])?;
            for x in self.truth.strain[i].to_plain().iter().chain(self.truth.stress[i].to_plain().iter()).chain(p) {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn score(
    predictor: &dyn StressPredictor,
    truth: SimulationSeries,
    sample: &VirtualSample,
    case: String,
    yield_stress: f64,
) -> Result<CaseResult> {
    let predicted = predictor.predict(&truth.strain, sample)?;
    let report = mere_mare(&predicted, &truth.stress_plain(), yield_stress)?.labeled(sample.label.clone(), case);
    Ok(CaseResult { report, truth, predicted })
}

/// Every load case for one cycle of the one-cycle amplitude on each sample,
/// ordered by sample then case.
pub fn one_cycle_campaign(
    predictor: &dyn StressPredictor,
    oracle: &Oracle,
    samples: &[VirtualSample],
    settings: &CampaignSettings,
) -> Result<Vec<CaseResult>> {
    let jobs: Vec<(&VirtualSample, LoadCase)> = samples.iter().flat_map(|s| LoadCase::ALL.map(|c| (s, c))).collect();
    jobs.par_iter()
        .map(|&(sample, case)| {
            let program = case.program(settings.one_cycle_amplitude, 1, settings.steps_per_cycle)?;
            let truth = oracle.simulate(sample, &program)?;
            score(predictor, truth, sample, case.label().into(), oracle.matrix.yield_stress)
        })
        .collect()
}

/// Uniaxial cycles 1 to `max_cycles` on each sample, ordered by sample then
/// cycle count. Shorter programs are prefixes of the longest one, and both
/// the oracle and the predictor are causal, so each sample is simulated once
/// and scored on prefixes.
pub fn cyclic_campaign(
    predictor: &dyn StressPredictor,
    oracle: &Oracle,
    samples: &[VirtualSample],
    settings: &CampaignSettings,
) -> Result<Vec<CaseResult>> {
    let per_sample: Vec<Vec<CaseResult>> = samples
        .par_iter()
        .map(|sample| {
            let program = LoadCase::Uniaxial11.program(settings.cyclic_amplitude, settings.max_cycles, settings.steps_per_cycle)?;
            let full = oracle.simulate(sample, &program)?;
            let predicted = predictor.predict(&full.strain, sample)?;
            (1..=settings.max_cycles)
                .map(|cycles| {
                    let rows = cycles * settings.steps_per_cycle + 1;
                    let truth = SimulationSeries {
                        time: crate::homogenize::pseudo_time(rows - 1),
                        strain: full.strain[..rows].to_vec(),
                        stress: full.stress[..rows].to_vec(),
                    };
                    let pred = predicted[..rows].to_vec();
                    let report = mere_mare(&pred, &truth.stress_plain(), oracle.matrix.yield_stress)?
                        .labeled(sample.label.clone(), format!("cycles-{cycles}"));
                    Ok(CaseResult { report, truth, predicted: pred })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

/// One uniaxial cycle over the grid of volume fractions and control strains,
/// ordered by volume fraction then control strain. Reports are labeled
/// `vf=<v>` and `eps_c=<a>`.
pub fn extrapolation_campaign(
    predictor: &dyn StressPredictor,
    oracle: &Oracle,
    settings: &CampaignSettings,
) -> Result<Vec<CaseResult>> {
    let base = virtual_sample(&settings.extrapolation_sample)?;
    let jobs: Vec<(f64, f64)> = settings
        .extrapolation_fractions
        .iter()
        .flat_map(|&v| settings.extrapolation_amplitudes.iter().map(move |&a| (v, a)))
        .collect();
    jobs.par_iter()
        .map(|&(vf, amplitude)| {
            let sample = VirtualSample::new(format!("vf={vf}"), base.orientation, vf);
            let program = LoadCase::Uniaxial11.program(amplitude, 1, settings.steps_per_cycle)?;
            let truth = oracle.simulate(&sample, &program)?;
            score(predictor, truth, &sample, format!("eps_c={amplitude}"), oracle.matrix.yield_stress)
        })
        .collect()
}

/// Linear reinterpolation of a series with `n` increments onto
/// `round(factor * n)` increments over the same pseudo-time span.
pub fn resample_series(series: &[[f64; 6]], factor: f64) -> Result<Vec<[f64; 6]>> {
    if !(factor > 0.0) || !factor.is_finite() {
        return Err(Error::invalid(format!("resampling factor must be positive, got {factor}")));
    }
    if series.len() < 2 {
        return Err(Error::Shape("resampling needs at least one increment".into()));
    }
    let n = series.len() - 1;
    let m = ((factor * n as f64).round() as usize).max(1);
    if m == n {
        return Ok(series.to_vec());
    }
    Ok((0..=m)
        .map(|j| {
            // Position on the original grid in exact rational form j*n/m.
            let num = j * n;
            if num.is_multiple_of(m) {
                return series[num / m];
            }
            let i = num / m;
            let frac = (num - i * m) as f64 / m as f64;
            std::array::from_fn(|k| series[i][k] + frac * (series[i + 1][k] - series[i][k]))
        })
        .collect())
}

/// Uniaxial one-cycle case of one sample re-run at each resampling factor.
/// Returns one result per factor; the oracle is re-simulated on the
/// reinterpolated strain path with every component strain-controlled.
pub fn resampling_campaign(
    predictor: &dyn StressPredictor,
    oracle: &Oracle,
    sample: &VirtualSample,
    settings: &CampaignSettings,
) -> Result<Vec<CaseResult>> {
    let program = LoadCase::Uniaxial11.program(settings.one_cycle_amplitude, 1, settings.steps_per_cycle)?;
    let base = oracle.simulate(sample, &program)?;
    let path = base.strain_plain();
    settings
        .resampling_factors
        .par_iter()
        .map(|&factor| {
            let resampled = resample_series(&path, factor)?;
            let truth = oracle.simulate(sample, &LoadProgram::strain_driven(&resampled))?;
            score(predictor, truth, sample, format!("resample-{factor}"), oracle.matrix.yield_stress)
        })
        .collect()
}

/// Least-squares slope through the origin of `stress` against `strain` over
/// the leading points with `|strain| <= limit`, stopping at the first load
/// reversal.
pub fn initial_slope(strain: &[f64], stress: &[f64], limit: f64) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut last = 0.0f64;
    for (&e, &s) in strain.iter().zip(stress).skip(1) {
        if e.abs() > limit || e.abs() < last.abs() {
            break;
        }
        num += e * s;
        den += e * e;
        last = e;
    }
    if den == 0.0 {
        return Err(Error::invalid("no loading points inside the elastic window"));
    }
    Ok(num / den)
}

/// CSV of reports: `sample,case,steps,mere11..mere12,mare11..mare12`.
pub fn write_reports_csv<W: Write>(reports: &[ErrorReport], mut out: W) -> Result<()> {
    write!(out, "sample,case,steps")?;
    for prefix in ["mere", "mare"] {
        for c in COMPONENTS {
            write!(out, ",{prefix}{c}")?;
        }
    }
    writeln!(out)?;
    for r in reports {
        write!(out, "{},{},{}", r.sample, r.case, r.steps)?;
        for x in r.mere.iter().chain(&r.mare) {
            write!(out, ",{x}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Plain-text table of component-average errors.
pub fn write_summary<W: Write>(title: &str, reports: &[ErrorReport], mut out: W) -> Result<()> {
    writeln!(out, "{title}")?;
    writeln!(out, "{:<12} {:<20} {:>6} {:>10} {:>10}", "sample", "case", "steps", "MeRE", "MaRE")?;
    for r in reports {
        writeln!(out, "{:<12} {:<20} {:>6} {:>10.5} {:>10.5}", r.sample, r.case, r.steps, r.mean_mere(), r.mean_mare())?;
    }
    if !reports.is_empty() {
        let avg = average_report(reports, "all", "mean")?;
        writeln!(out, "{:<12} {:<20} {:>6} {:>10.5} {:>10.5}", avg.sample, avg.case, "", avg.mean_mere(), avg.mean_mare())?;
    }
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homogenize::MaterialPoint;
    use crate::matpoint::J2Matrix;

    fn rows(v: &[f64]) -> Vec<[f64; 6]> {
        v.iter().map(|&x| [x; 6]).collect()
    }

    #[test]
    fn metric_examples() {
        let truth = rows(&[1.0, -4.0, 7.0]);
        let same = mere_mare(&truth, &truth, 25.0).unwrap();
        assert_eq!(same.mere, [0.0; 6]);
        assert_eq!(same.mare, [0.0; 6]);

        let shifted: Vec<[f64; 6]> = truth.iter().map(|r| r.map(|x| x + 2.5)).collect();
        let r = mere_mare(&shifted, &truth, 25.0).unwrap();
        for k in 0..6 {
            assert!((r.mere[k] - 0.1).abs() < 1e-15);
            assert!((r.mare[k] - 0.1).abs() < 1e-15);
        }

        let r = mere_mare(&rows(&[0.0, 3.0, 4.0]), &rows(&[0.0; 3]), 25.0).unwrap();
        assert!((r.mere[0] - (25.0f64 / 3.0).sqrt() / 25.0).abs() < 1e-15);
        assert!((r.mere[0] - 0.1155).abs() < 1e-4);
        assert_eq!(r.mare[0], 0.16);
        assert_eq!(r.steps, 2);

        assert!(mere_mare(&rows(&[0.0]), &rows(&[0.0, 1.0]), 25.0).is_err());
        assert!(mere_mare(&rows(&[0.0]), &rows(&[0.0]), 0.0).is_err());
    }

    #[test]
    fn table_samples_are_admissible() {
        let s = virtual_samples().unwrap();
        assert_eq!(s.len(), 8);
        for v in &s {
            assert!(v.orientation.eigenvalues().iter().all(|&l| l >= 0.0));
            assert!((v.orientation.matrix().trace() - 1.0).abs() < 1e-12);
        }
        assert_eq!(virtual_sample("3D").unwrap().orientation, OrientationTensor::isotropic());
        assert!(virtual_sample("6").is_err());
    }

    #[test]
    fn waveform_shape() {
        let w = cycle_waveform(0.04, 2, 8).unwrap();
        assert_eq!(w.len(), 17);
        assert_eq!(w[2], 0.04);
        assert_eq!(w[6], -0.04);
        assert_eq!(w[8], 0.0);
        assert_eq!(&w[..9], &w[8..]);
        assert!(cycle_waveform(0.04, 1, 6).is_err());
    }

    #[test]
    fn resampling_examples() {
        let s: Vec<[f64; 6]> = (0..=10).map(|i| [(i as f64 * 0.7).sin(), i as f64, 0.0, 1.0, -2.0, 3.0]).collect();
        assert_eq!(resample_series(&s, 1.0).unwrap(), s);
        let up = resample_series(&s, 2.0).unwrap();
        assert_eq!(up.len(), 21);
        let back = resample_series(&up, 0.5).unwrap();
        for (a, b) in back.iter().zip(&s) {
            for k in 0..6 {
                assert!((a[k] - b[k]).abs() <= 1e-12);
            }
        }
        let r = resample_series(&s, 0.37).unwrap();
        for (j, row) in r.iter().enumerate() {
            let t = j as f64 / (r.len() - 1) as f64;
            assert!((row[1] - 10.0 * t).abs() < 1e-12);
        }
        assert!(resample_series(&s, 0.0).is_err());
    }

    #[test]
    fn oracle_as_predictor_scores_zero() {
        let oracle = Oracle::default();
        let settings = CampaignSettings { steps_per_cycle: 40, max_cycles: 2, ..CampaignSettings::default() };
        let samples = vec![virtual_sample("3").unwrap()];
        let one = one_cycle_campaign(&oracle, &oracle, &samples, &settings).unwrap();
        assert_eq!(one.len(), 5);
        let cyc = cyclic_campaign(&oracle, &oracle, &[virtual_sample("1D").unwrap()], &settings).unwrap();
        assert_eq!(cyc.len(), 2);
        for r in one.iter().chain(&cyc) {
            assert_eq!(r.report.mare, [0.0; 6], "{} {}", r.report.sample, r.report.case);
        }
        assert_eq!(cyc[1].report.steps, 80);
    }

    #[test]
    fn load_cases_release_the_right_stresses() {
        let oracle = Oracle::default();
        let sample = virtual_sample("3").unwrap();
        for case in LoadCase::ALL {
            let series = oracle.simulate(&sample, &case.program(0.02, 1, 40).unwrap()).unwrap();
            let program = case.program(0.02, 1, 40).unwrap();
            for (k, c) in program.controls.iter().enumerate() {
                if *c == Control::FreeStress {
                    assert!(series.stress.iter().all(|s| s.to_plain()[k].abs() <= 1e-4), "{case:?} component {k}");
                }
            }
        }
    }

    #[test]
    fn oracle_initial_slope_is_effective_modulus() {
        let oracle = Oracle::default();
        let sample = virtual_sample("3D").unwrap();
        let series = oracle.simulate(&sample, &LoadCase::Uniaxial11.program(0.035, 1, 200).unwrap()).unwrap();
        let e: Vec<f64> = series.strain_plain().iter().map(|r| r[0]).collect();
        let s: Vec<f64> = series.stress_plain().iter().map(|r| r[0]).collect();
        let slope = initial_slope(&e, &s, 0.002).unwrap();
        let composite = oracle.composite(sample.orientation, sample.volume_fraction).unwrap();
        let compliance = composite.elastic_stiffness().inverse().unwrap();
        let young = 1.0 / compliance.0[(0, 0)];
        assert!((slope - young).abs() <= 1e-6 * young, "{slope} vs {young}");
        // Unloading from the peak is elastic again.
        let peak = 50;
        let unload = (s[peak + 1] - s[peak]) / (e[peak + 1] - e[peak]);
        assert!((unload - young).abs() <= 0.02 * young);
        // Past the knee the secant falls well below the elastic slope.
        assert!(s[peak] / e[peak] < 0.8 * young);
    }

    #[test]
    fn dilute_limit_matches_matrix() {
        let oracle = Oracle::default();
        let program = LoadCase::Uniaxial11.program(0.05, 1, 200).unwrap();
        let matrix = J2Matrix { params: oracle.matrix };
        let pure = run_program(&matrix, &program, &oracle.options.driver()).unwrap();
        let scale = pure.stress.iter().map(|s| s.von_mises()).fold(0.0, f64::max);
        let gap = |vf: f64| {
            let sample = VirtualSample::new("dilute", OrientationTensor::isotropic(), vf);
            let c = oracle.simulate(&sample, &program).unwrap();
            c.stress.iter().zip(&pure.stress).map(|(a, b)| (*a - *b).norm()).fold(0.0, f64::max) / scale
        };
        let (g1, g2) = (gap(0.001), gap(0.0005));
        println!("dilute gap: {g1:.4} at vf 0.001, {g2:.4} at vf 0.0005");
        let composite = oracle.composite(OrientationTensor::isotropic(), 0.001).unwrap();
        let stiff = (composite.elastic_stiffness().0 - oracle.matrix.stiffness().0).norm() / oracle.matrix.stiffness().0.norm();
        assert!(stiff <= 0.01, "{stiff}");
        assert!(matrix.reference_stress() > 0.0);
        assert!(g1 <= 0.0125, "{g1}");
        assert!((g1 / g2 - 2.0).abs() < 0.05, "{g1} {g2}");
    }

    #[test]
    fn reports_csv_and_summary() {
        let r = mere_mare(&rows(&[0.0, 3.0, 4.0]), &rows(&[0.0; 3]), 25.0).unwrap().labeled("3D", "uniaxial-11");
        let mut csv = Vec::new();
        write_reports_csv(std::slice::from_ref(&r), &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("sample,case,steps,mere11,"));
        assert!(text.contains("3D,uniaxial-11,2,"));
        let mut summary = Vec::new();
        write_summary("one cycle", &[r], &mut summary).unwrap();
        assert!(String::from_utf8(summary).unwrap().contains("uniaxial-11"));
    }
}
