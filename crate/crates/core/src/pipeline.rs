//! Run configuration, dataset generation and persistence, splitting, and
//! training orchestration.
//!
//! Dataset container (little endian): magic `SFRD`, `u32` format version,
//! `u64` record count, then per record `u64` seed, `u32` row count `T`, six
//! `f64` orientation components `[a11, a22, a33, a12, a13, a23]`, `f64` fiber
//! volume fraction, `T x 6` strain block and `T x 6` stress block (plain
//! components, row-major, first row at zero strain), and a `u8` status flag.
//! Pseudo-time is uniform over the rows and not stored. A JSON manifest sits
//! next to the container.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::CampaignSettings;
use crate::homogenize::{run_program, Composite, HomogenizerOptions, LoadProgram};
use crate::matpoint::{FiberParams, MatrixParams};
use crate::microstructure::Microstructure;
use crate::sampling::{assemble_record, inputs_from_seed, GenerationConfig};
use crate::surrogate::{features, train, GruModel, NetworkConfig, Sequence, TrainConfig, TrainHistory, EpochRecord};

/// Constituent material constants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConfig {
    pub matrix: MatrixParams,
    pub fiber: FiberParams,
}

/// Output locations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    /// Directory of evaluation CSVs and the summary report.
    pub reports: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset: "data/dataset.sfrd".into(),
            checkpoint: "model.sfnn".into(),
            history: "history.csv".into(),
            reports: "reports".into(),
        }
    }
}

/// Everything a run needs. Every section is optional in the TOML file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub material: MaterialConfig,
    pub generation: GenerationConfig,
    pub homogenizer: HomogenizerOptions,
    pub network: NetworkConfig,
    pub training: TrainConfig,
    pub paths: PathsConfig,
    pub evaluation: CampaignSettings,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.material.matrix.validate()?;
        self.material.fiber.validate()?;
        self.generation.validate()?;
        self.homogenizer.validate()?;
        self.network.validate()?;
        self.training.validate()?;
        self.evaluation.validate()?;
        Ok(())
    }
}

pub const DATASET_MAGIC: &[u8; 4] = b"SFRD";
pub const DATASET_VERSION: u32 = 1;

/// Outcome of the oracle simulation of a record.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordStatus {
    Ok,
    /// The simulation failed; the stress block is zero.
    Failed,
}

impl RecordStatus {
    fn to_byte(self) -> u8 {
        match self {
            RecordStatus::Ok => 0,
            RecordStatus::Failed => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(RecordStatus::Ok),
            1 => Ok(RecordStatus::Failed),
            _ => Err(Error::Format(format!("unknown record status {b}"))),
        }
    }
}

/// One simulated strain/stress history.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub seed: u64,
    pub orientation: [f64; 6],
    pub volume_fraction: f64,
    pub strain: Vec<[f64; 6]>,
    pub stress: Vec<[f64; 6]>,
    pub status: RecordStatus,
}

impl DatasetRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RecordStatus::Ok
    }

    /// Network features and targets of the record.
    pub fn sequence(&self) -> Sequence {
        Sequence {
            features: features(&self.strain, self.orientation, self.volume_fraction),
            targets: self.stress.clone(),
        }
    }
}

/// An ordered list of records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
}

fn put_f64s(out: &mut impl Write, v: &[f64]) -> std::io::Result<()> {
    for x in v {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("dataset is truncated".into()),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_le_bytes(read_exact::<8>(r)?))
}

fn read_rows(r: &mut impl Read, rows: usize) -> Result<Vec<[f64; 6]>> {
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut row = [0.0; 6];
        for x in &mut row {
            *x = read_f64(r)?;
        }
        out.push(row);
    }
    Ok(out)
}

/// Streaming writer of the dataset container. The record count in the header
/// is patched when the writer is finished.
pub struct DatasetWriter<W: Write + std::io::Seek> {
    out: W,
    count: u64,
}

impl<W: Write + std::io::Seek> DatasetWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        out.write_all(DATASET_MAGIC)?;
        out.write_all(&DATASET_VERSION.to_le_bytes())?;
        out.write_all(&0u64.to_le_bytes())?;
        Ok(DatasetWriter { out, count: 0 })
    }

    pub fn push(&mut self, r: &DatasetRecord) -> Result<()> {
        write_record(&mut self.out, r)?;
        self.count += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        use std::io::SeekFrom;
        self.out.seek(SeekFrom::Start(8))?;
        self.out.write_all(&self.count.to_le_bytes())?;
        self.out.seek(SeekFrom::End(0))?;
        self.out.flush()?;
        Ok(self.out)
    }
}

fn write_record(out: &mut impl Write, r: &DatasetRecord) -> Result<()> {
    if r.strain.len() != r.stress.len() || r.strain.is_empty() {
        return Err(Error::Shape(format!("record {} has {} strain and {} stress rows", r.seed, r.strain.len(), r.stress.len())));
    }
    let rows = u32::try_from(r.strain.len()).map_err(|_| Error::Shape("record is too long".into()))?;
    out.write_all(&r.seed.to_le_bytes())?;
    out.write_all(&rows.to_le_bytes())?;
    put_f64s(out, &r.orientation)?;
    put_f64s(out, &[r.volume_fraction])?;
    for row in r.strain.iter().chain(&r.stress) {
        put_f64s(out, row)?;
    }
    out.write_all(&[r.status.to_byte()])?;
    Ok(())
}

impl Dataset {
    pub fn ok_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_ok()).count()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = DatasetWriter::new(std::io::Cursor::new(Vec::new()))?;
        for r in &self.records {
            w.push(r)?;
        }
        Ok(w.finish()?.into_inner())
    }

    pub fn decode(mut data: &[u8]) -> Result<Self> {
        let ds = Self::read_from(&mut data)?;
        if !data.is_empty() {
            return Err(Error::Format("trailing bytes after dataset".into()));
        }
        Ok(ds)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        if &read_exact::<4>(r)? != DATASET_MAGIC {
            return Err(Error::Format("not a dataset file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(read_exact(r)?);
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let count = u64::from_le_bytes(read_exact(r)?);
        let mut records = Vec::with_capacity(count.min(1 << 20) as usize);
        for _ in 0..count {
            let seed = u64::from_le_bytes(read_exact(r)?);
            let rows = u32::from_le_bytes(read_exact(r)?) as usize;
            if rows == 0 {
                return Err(Error::Format("record with no rows".into()));
            }
            let mut orientation = [0.0; 6];
            for x in &mut orientation {
                *x = read_f64(r)?;
            }
            let volume_fraction = read_f64(r)?;
            let strain = read_rows(r, rows)?;
            let stress = read_rows(r, rows)?;
            let status = RecordStatus::from_byte(read_exact::<1>(r)?[0])?;
            records.push(DatasetRecord { seed, orientation, volume_fraction, strain, stress, status });
        }
        Ok(Dataset { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = DatasetWriter::new(BufWriter::new(std::fs::File::create(path)?))?;
        for r in &self.records {
            w.push(r)?;
        }
        w.finish()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let ds = Self::read_from(&mut r)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after dataset".into()));
        }
        Ok(ds)
    }

    /// Checks every record against the inputs regenerated from its seed:
    /// identical strain path, orientation and volume fraction, and a strain
    /// path that satisfies the generator's invariants.
    pub fn verify_inputs(&self, generation: &GenerationConfig) -> Result<()> {
        self.records.par_iter().try_for_each(|r| {
            let inputs = inputs_from_seed(generation, r.seed)?;
            inputs.path.validate(inputs.path_params.eps_max)?;
            let same = inputs.path.rows == r.strain
                && inputs.orientation.components() == r.orientation
                && inputs.volume_fraction == r.volume_fraction;
            if same {
                Ok(())
            } else {
                Err(Error::Format(format!("record with seed {} does not match its regenerated inputs", r.seed)))
            }
        })
    }
}

/// Train / validation / test record indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    /// Set when the test share rounded to zero and one record was moved
    /// from training to test.
    pub test_reassigned: bool,
}

/// Random partition of the given record indices. Validation and test sizes
/// are rounded from the fractions; training takes the rest. At least one
/// test record is kept whenever there are two or more indices.
pub fn split(indices: &[usize], fractions: [f64; 3], seed: u64) -> Result<Split> {
    if fractions.iter().any(|f| !(*f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    let n = indices.len();
    let mut test = (fractions[2] * n as f64).round() as usize;
    let val = ((fractions[1] * n as f64).round() as usize).min(n - test.min(n));
    let mut reassigned = false;
    if test == 0 && n >= 2 {
        test = 1;
        reassigned = true;
    }
    let test = test.min(n);
    let val = val.min(n - test);
    let mut order = indices.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let train_n = n - val - test;
    let mut s = Split {
        seed,
        train: order[..train_n].to_vec(),
        val: order[train_n..train_n + val].to_vec(),
        test: order[train_n + val..].to_vec(),
        test_reassigned: reassigned,
    };
    s.train.sort_unstable();
    s.val.sort_unstable();
    s.test.sort_unstable();
    Ok(s)
}

/// Human-readable description of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub master_seed: u64,
    pub count: usize,
    pub failed: Vec<usize>,
    pub material: MaterialConfig,
    pub generation: GenerationConfig,
    pub homogenizer: HomogenizerOptions,
    pub split_fractions: [f64; 3],
    pub split: Split,
}

impl Manifest {
    /// `<dataset>.manifest.json`.
    pub fn path_for(dataset: &Path) -> PathBuf {
        let mut name = dataset.as_os_str().to_owned();
        name.push(".manifest.json");
        PathBuf::from(name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    /// Checks the manifest against a loaded dataset.
    pub fn check(&self, dataset: &Dataset) -> Result<()> {
        if self.count != dataset.records.len() {
            return Err(Error::Format(format!("manifest lists {} records, dataset holds {}", self.count, dataset.records.len())));
        }
        let failed: Vec<usize> = (0..dataset.records.len()).filter(|&i| !dataset.records[i].is_ok()).collect();
        if failed != self.failed {
            return Err(Error::Format("manifest failure list does not match the dataset".into()));
        }
        Ok(())
    }
}

/// Simulates record `index` of the data set described by `config`. Oracle
/// failures are flagged in the record rather than returned.
pub fn simulate_record(config: &RunConfig, index: u64) -> Result<DatasetRecord> {
    let sample = assemble_record(&config.generation, index)?;
    let inputs = sample.inputs;
    let orientation = inputs.orientation.components();
    let strain = inputs.path.rows;
    let simulated = Microstructure::new(inputs.orientation, inputs.volume_fraction, config.material.fiber)
        .and_then(|micro| Composite::new(config.material.matrix, micro, config.homogenizer))
        .and_then(|c| run_program(&c, &LoadProgram::strain_driven(&strain), &config.homogenizer.driver()));
    let (stress, status) = match simulated {
        Ok(series) => (series.stress_plain(), RecordStatus::Ok),
        Err(_) => (vec![[0.0; 6]; strain.len()], RecordStatus::Failed),
    };
    Ok(DatasetRecord {
        seed: sample.seed,
        orientation,
        volume_fraction: inputs.volume_fraction,
        strain,
        stress,
        status,
    })
}

/// Records simulated per parallel batch before they are handed to the
/// writer.
const CHUNK: usize = 64;

/// Generates `count` records in parallel and hands them to `sink` in index
/// order. `progress` receives the number of finished records.
pub fn generate_records(
    config: &RunConfig,
    count: usize,
    mut sink: impl FnMut(DatasetRecord) -> Result<()>,
    mut progress: impl FnMut(usize),
) -> Result<()> {
    config.validate()?;
    let mut done = 0;
    while done < count {
        let end = (done + CHUNK).min(count);
        let chunk: Vec<DatasetRecord> =
            (done..end).into_par_iter().map(|i| simulate_record(config, i as u64)).collect::<Result<_>>()?;
        for r in chunk {
            sink(r)?;
        }
        done = end;
        progress(done);
    }
    Ok(())
}

/// In-memory data set and manifest.
pub fn generate_dataset(config: &RunConfig, count: usize) -> Result<(Dataset, Manifest)> {
    let mut records = Vec::with_capacity(count);
    generate_records(config, count, |r| {
        records.push(r);
        Ok(())
    }, |_| {})?;
    let dataset = Dataset { records };
    let manifest = manifest_for(config, &dataset)?;
    Ok((dataset, manifest))
}

/// Generates a data set straight to `path` and writes its manifest next to
/// it. Returns the manifest.
pub fn generate_to_file(config: &RunConfig, count: usize, path: &Path, progress: impl FnMut(usize)) -> Result<Manifest> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut writer = DatasetWriter::new(BufWriter::new(std::fs::File::create(path)?))?;
    let mut status = Vec::with_capacity(count);
    generate_records(config, count, |r| {
        status.push(r.is_ok());
        writer.push(&r)
    }, progress)?;
    writer.finish()?;
    let manifest = manifest_from_status(config, &status)?;
    manifest.save(&Manifest::path_for(path))?;
    Ok(manifest)
}

fn manifest_from_status(config: &RunConfig, ok: &[bool]) -> Result<Manifest> {
    let good: Vec<usize> = (0..ok.len()).filter(|&i| ok[i]).collect();
    let failed: Vec<usize> = (0..ok.len()).filter(|&i| !ok[i]).collect();
    Ok(Manifest {
        format_version: DATASET_VERSION,
        master_seed: config.generation.master_seed,
        count: ok.len(),
        failed,
        material: config.material,
        generation: config.generation.clone(),
        homogenizer: config.homogenizer,
        split_fractions: config.training.split,
        split: split(&good, config.training.split, config.training.seed)?,
    })
}

/// Manifest of an existing data set under `config`.
pub fn manifest_for(config: &RunConfig, dataset: &Dataset) -> Result<Manifest> {
    let ok: Vec<bool> = dataset.records.iter().map(DatasetRecord::is_ok).collect();
    manifest_from_status(config, &ok)
}

/// Sequences of the records at `indices`.
pub fn sequences(dataset: &Dataset, indices: &[usize]) -> Result<Vec<Sequence>> {
    indices
        .iter()
        .map(|&i| {
            let r = dataset.records.get(i).ok_or_else(|| Error::invalid(format!("record index {i} out of range")))?;
            if !r.is_ok() {
                return Err(Error::invalid(format!("record {i} is flagged as failed")));
            }
            Ok(r.sequence())
        })
        .collect()
}

/// Builds a fresh network and trains it on the manifest's split.
pub fn train_model(
    config: &RunConfig,
    dataset: &Dataset,
    split: &Split,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(GruModel, TrainHistory)> {
    let train_set = sequences(dataset, &split.train)?;
    let val_set = sequences(dataset, &split.val)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.training.seed);
    let mut model = GruModel::new(&config.network, &mut rng)?;
    let history = train(&mut model, &train_set, &val_set, &config.training, on_epoch)?;
    Ok((model, history))
}
