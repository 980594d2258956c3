//! Random strain paths (drift plus noise random walk on the unit 6-sphere)
//! and assembly of complete generation records.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::microstructure::{sample_orientation_tensor, OrientationTensor};

/// Uniform sample on the unit sphere in six dimensions.
pub fn sample_unit_6vector(rng: &mut impl Rng) -> [f64; 6] {
    loop {
        let v: [f64; 6] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-300 {
            return v.map(|x| x / n);
        }
    }
}

/// Parameters of one strain path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathGenParams {
    pub steps: usize,
    pub drift_directions: usize,
    pub noise: f64,
    pub eps_max: f64,
    pub p_uniaxial_strain: f64,
}

impl PathGenParams {
    pub fn steps_per_drift(&self) -> usize {
        self.steps / self.drift_directions
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.drift_directions == 0 || !self.steps.is_multiple_of(self.drift_directions) {
            return Err(Error::invalid(format!(
                "step count {} must be a positive multiple of the drift count {}",
                self.steps, self.drift_directions
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::invalid(format!("noise amplitude must lie in [0, 1], got {}", self.noise)));
        }
        if !(self.eps_max > 0.0 && self.eps_max.is_finite()) {
            return Err(Error::invalid(format!("eps_max must be positive, got {}", self.eps_max)));
        }
        if !(0.0..=1.0).contains(&self.p_uniaxial_strain) {
            return Err(Error::invalid(format!("p_uniaxial_strain must lie in [0, 1], got {}", self.p_uniaxial_strain)));
        }
        Ok(())
    }
}

/// `(N + 1) x 6` plain strain components; row 0 is the origin.
#[derive(Clone, Debug, PartialEq)]
pub struct StrainPath {
    pub rows: Vec<[f64; 6]>,
}

impl StrainPath {
    pub fn steps(&self) -> usize {
        self.rows.len().saturating_sub(1)
    }

    pub fn max_abs(&self) -> f64 {
        self.rows.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Checks the origin start and the rescaling contract.
    pub fn validate(&self, eps_max: f64) -> Result<()> {
        if self.rows.len() < 2 {
            return Err(Error::invalid("strain path needs at least one increment"));
        }
        if self.rows[0] != [0.0; 6] {
            return Err(Error::invalid("strain path must start at the origin"));
        }
        let m = self.max_abs();
        if (m - eps_max).abs() > 1e-12 {
            return Err(Error::invalid(format!("largest strain component {m} differs from eps_max {eps_max}")));
        }
        Ok(())
    }

    /// Pseudo-time, uniform from 0 to 1.
    pub fn time(&self) -> Vec<f64> {
        crate::homogenize::pseudo_time(self.steps())
    }
}

/// Drift directions repeated `n2` times, plus scaled noise, accumulated and
/// rescaled so the largest component magnitude equals `eps_max`.
pub fn generate_path(params: &PathGenParams, rng: &mut impl Rng) -> Result<StrainPath> {
    params.validate()?;
    let n2 = params.steps_per_drift();
    let drifts: Vec<[f64; 6]> = (0..params.drift_directions).map(|_| sample_unit_6vector(rng)).collect();
    let noise: Vec<[f64; 6]> = (0..params.steps).map(|_| sample_unit_6vector(rng)).collect();
    let uniaxial = rng.random_bool(params.p_uniaxial_strain);
    let keep = if uniaxial { Some(rng.random_range(0..6)) } else { None };

    let mut rows = Vec::with_capacity(params.steps + 1);
    let mut acc = [0.0; 6];
    rows.push(acc);
    for (i, w) in noise.iter().enumerate() {
        let d = &drifts[i / n2];
        for k in 0..6 {
            acc[k] += d[k] + params.noise * w[k];
        }
        rows.push(acc);
    }
    if let Some(keep) = keep {
        for row in &mut rows {
            for (k, x) in row.iter_mut().enumerate() {
                if k != keep {
                    *x = 0.0;
                }
            }
        }
    }
    let (mut arg, mut m) = ((0, 0), 0.0f64);
    for (i, row) in rows.iter().enumerate() {
        for (k, x) in row.iter().enumerate() {
            if x.abs() > m {
                m = x.abs();
                arg = (i, k);
            }
        }
    }
    if m == 0.0 {
        // Only possible for a path that cancels exactly; draw afresh.
        return generate_path(params, rng);
    }
    let scale = params.eps_max / m;
    for row in &mut rows {
        for x in row.iter_mut() {
            *x *= scale;
        }
    }
    let peak = &mut rows[arg.0][arg.1];
    *peak = params.eps_max.copysign(*peak);
    Ok(StrainPath { rows })
}

/// Randomization of the generated data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    /// Increments per strain path.
    #[serde(rename = "N")]
    pub steps: usize,
    /// Noise amplitude range (uniform).
    pub gamma: [f64; 2],
    /// Admissible drift-direction counts (uniform choice).
    pub n1_set: Vec<usize>,
    pub eps_max_range: [f64; 2],
    pub p_uniaxial_strain: f64,
    pub p_uniaxial_fibers: f64,
    pub vf_range: [f64; 2],
    pub sample_count: usize,
    pub master_seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            steps: 200,
            gamma: [0.0, 1.0],
            n1_set: vec![1, 2, 5, 10, 20, 25, 50, 100, 200],
            eps_max_range: [0.01, 0.05],
            p_uniaxial_strain: 0.1,
            p_uniaxial_fibers: 0.1,
            vf_range: [0.10, 0.15],
            sample_count: 2000,
            master_seed: 2024,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("N must be positive"));
        }
        if self.n1_set.is_empty() {
            return Err(Error::invalid("n1_set must not be empty"));
        }
        if let Some(bad) = self.n1_set.iter().find(|&&n| n == 0 || !self.steps.is_multiple_of(n)) {
            return Err(Error::invalid(format!("N = {} is not divisible by n1 = {bad}", self.steps)));
        }
        check_range("gamma", self.gamma, 0.0, 1.0)?;
        check_range("eps_max_range", self.eps_max_range, f64::MIN_POSITIVE, f64::INFINITY)?;
        check_range("vf_range", self.vf_range, 0.0, 1.0 - f64::EPSILON)?;
        for (name, p) in [("p_uniaxial_strain", self.p_uniaxial_strain), ("p_uniaxial_fibers", self.p_uniaxial_fibers)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

fn check_range(name: &str, r: [f64; 2], lo: f64, hi: f64) -> Result<()> {
    if !(r[0] >= lo && r[1] <= hi && r[0] <= r[1]) {
        return Err(Error::invalid(format!("{name} = {r:?} must be an ordered range within [{lo}, {hi}]")));
    }
    Ok(())
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Network/oracle inputs of one record.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleInputs {
    pub path: StrainPath,
    pub path_params: PathGenParams,
    pub orientation: OrientationTensor,
    pub volume_fraction: f64,
}

/// A generated record; `stress` is empty until simulated.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub seed: u64,
    pub inputs: SampleInputs,
    pub stress: Vec<[f64; 6]>,
}

/// Draws the randomized inputs of one record.
pub fn assemble_inputs(config: &GenerationConfig, rng: &mut impl Rng) -> Result<SampleInputs> {
    config.validate()?;
    let noise = uniform(rng, config.gamma);
    let n1 = config.n1_set[rng.random_range(0..config.n1_set.len())];
    let eps_max = uniform(rng, config.eps_max_range);
    let path_params = PathGenParams {
        steps: config.steps,
        drift_directions: n1,
        noise,
        eps_max,
        p_uniaxial_strain: config.p_uniaxial_strain,
    };
    let path = generate_path(&path_params, rng)?;
    let orientation = sample_orientation_tensor(rng, config.p_uniaxial_fibers)?;
    let volume_fraction = uniform(rng, config.vf_range);
    Ok(SampleInputs { path, path_params, orientation, volume_fraction })
}

/// Seed of record `index`, a SplitMix64 hash of the master seed and index.
pub fn record_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Record inputs regenerated from a record seed alone.
pub fn inputs_from_seed(config: &GenerationConfig, seed: u64) -> Result<SampleInputs> {
    assemble_inputs(config, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Record `index` of the data set described by `config`.
pub fn assemble_record(config: &GenerationConfig, index: u64) -> Result<SampleRecord> {
    let seed = record_seed(config.master_seed, index);
    Ok(SampleRecord { seed, inputs: inputs_from_seed(config, seed)?, stress: Vec::new() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, n1: usize, noise: f64) -> PathGenParams {
        PathGenParams { steps: n, drift_directions: n1, noise, eps_max: 0.03, p_uniaxial_strain: 0.0 }
    }

    #[test]
    fn unit_vectors_are_normalized_and_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut mean = [0.0; 6];
        let mut cov = [[0.0; 6]; 6];
        for _ in 0..n {
            let v = sample_unit_6vector(&mut rng);
            assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12);
            for i in 0..6 {
                mean[i] += v[i] / n as f64;
                for j in 0..6 {
                    cov[i][j] += v[i] * v[j] / n as f64;
                }
            }
        }
        for i in 0..6 {
            assert!(mean[i].abs() < 0.01);
            for j in 0..6 {
                let expect = if i == j { 1.0 / 6.0 } else { 0.0 };
                assert!((cov[i][j] - expect).abs() < 0.01);
            }
        }
    }

    #[test]
    fn noiseless_single_drift_is_a_ramp() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = generate_path(&params(50, 1, 0.0), &mut rng).unwrap();
        let end = p.rows[50];
        for (i, row) in p.rows.iter().enumerate() {
            for k in 0..6 {
                assert!((row[k] - end[k] * i as f64 / 50.0).abs() < 1e-15);
            }
        }
        p.validate(0.03).unwrap();
    }

    #[test]
    fn drift_blocks_share_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = generate_path(&params(6, 2, 0.0), &mut rng).unwrap();
        let inc = |i: usize| -> [f64; 6] { std::array::from_fn(|k| p.rows[i][k] - p.rows[i - 1][k]) };
        for i in [2, 3] {
            for k in 0..6 {
                assert!((inc(i)[k] - inc(1)[k]).abs() < 1e-14);
            }
        }
        for i in [5, 6] {
            for k in 0..6 {
                assert!((inc(i)[k] - inc(4)[k]).abs() < 1e-14);
            }
        }
        assert!((0..6).any(|k| (inc(4)[k] - inc(1)[k]).abs() > 1e-6));
    }

    #[test]
    fn rescaling_contract_and_uniaxial_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..300 {
            let mut p = params(200, [1, 10, 200][i % 3], rng.random_range(0.0..1.0));
            p.p_uniaxial_strain = 0.5;
            p.eps_max = rng.random_range(0.01..0.05);
            let path = generate_path(&p, &mut rng).unwrap();
            path.validate(p.eps_max).unwrap();
            assert_eq!(path.max_abs(), p.eps_max);
            assert_eq!(path.rows.len(), 201);
        }
    }

    #[test]
    fn rejects_invalid_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(generate_path(&params(10, 3, 0.1), &mut rng).is_err());
        assert!(generate_path(&params(10, 2, 1.5), &mut rng).is_err());
        let mut c = GenerationConfig::default();
        c.n1_set.push(3);
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_config_divisibility() {
        let c = GenerationConfig::default();
        c.validate().unwrap();
        let paper = GenerationConfig { steps: 2000, ..c };
        paper.validate().unwrap();
    }

    #[test]
    fn records_are_reproducible_from_their_seed() {
        let c = GenerationConfig::default();
        let a = assemble_record(&c, 7).unwrap();
        let b = assemble_record(&c, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(inputs_from_seed(&c, a.seed).unwrap(), a.inputs);
        assert_ne!(assemble_record(&c, 8).unwrap().seed, a.seed);
    }

    #[test]
    fn record_statistics() {
        let c = GenerationConfig { steps: 10, n1_set: vec![1, 2, 5, 10], ..GenerationConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 100_000;
        let (mut vf, mut uni) = (0.0, 0usize);
        for _ in 0..n {
            let r = assemble_inputs(&c, &mut rng).unwrap();
            vf += r.volume_fraction / n as f64;
            let nonzero = (0..6).filter(|&k| r.path.rows.iter().any(|row| row[k] != 0.0)).count();
            if nonzero == 1 {
                uni += 1;
            }
        }
        assert!((vf - 0.125).abs() < 0.001);
        assert!((uni as f64 / n as f64 - 0.1).abs() < 0.005);
    }
}
