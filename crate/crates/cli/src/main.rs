//! `sfrc`: generate training data, train the surrogate, run the evaluation
//! campaigns and simulate single load programs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use sfrc::evaluate::{
    average_report, cyclic_campaign, extrapolation_campaign, one_cycle_campaign, resampling_campaign, virtual_sample,
    write_reports_csv, write_summary, CaseResult, ErrorReport, LoadCase, Oracle, VirtualSample,
};
use sfrc::homogenize::{run_program, Composite, Control, LoadProgram, MaterialPoint};
use sfrc::matpoint::J2Matrix;
use sfrc::microstructure::{Microstructure, OrientationTensor};
use sfrc::pipeline::{generate_to_file, sequences, train_model, Dataset, Manifest, RunConfig};
use sfrc::surrogate::checkpoint;

#[derive(Parser, Debug)]
#[command(name = "sfrc", version, about = "Short-fiber composite simulator and GRU surrogate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed (generate) or the training seed (train).
    #[arg(long)]
    seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a simulated data set and its manifest.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of records (defaults to generation.sample_count).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the network on a generated data set.
    Train {
        #[command(flatten)]
        common: Common,
        /// Data set to train on (defaults to paths.dataset).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Number of epochs (defaults to training.epochs).
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a checkpoint on the test split and the virtual-sample campaigns.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate (defaults to paths.checkpoint).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Data set whose test split is scored (defaults to paths.dataset).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Skip the test split and run the campaigns only.
        #[arg(long)]
        campaigns_only: bool,
    },
    /// Run one load program through the oracle and write the series as CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
}

/// `[simulate]` section of a simulation config.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateSpec {
    /// `composite` (default) or `matrix`.
    #[serde(default = "default_material")]
    material: String,
    /// A named load case, or `custom` with `strain` rows.
    case: String,
    #[serde(default = "default_amplitude")]
    amplitude: f64,
    #[serde(default = "one")]
    cycles: usize,
    #[serde(default = "default_steps")]
    steps_per_cycle: usize,
    /// Virtual sample label, or an explicit orientation and volume fraction.
    sample: Option<String>,
    orientation: Option<[f64; 6]>,
    volume_fraction: Option<f64>,
    /// Rows of plain strain components for `case = "custom"`, all
    /// components strain-controlled, first row zero.
    strain: Option<Vec<[f64; 6]>>,
    /// For `custom`: components (0-based) left stress-free instead.
    #[serde(default)]
    free: Vec<usize>,
}

fn default_material() -> String {
    "composite".into()
}
fn default_amplitude() -> f64 {
    0.035
}
fn one() -> usize {
    1
}
fn default_steps() -> usize {
    200
}

#[derive(Debug, Deserialize)]
struct SimulateFile {
    simulate: SimulateSpec,
}

fn load_config(common: &Common) -> Result<RunConfig> {
    match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(RunConfig::default()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn generate(common: &Common, count: Option<usize>) -> Result<()> {
    let mut config = load_config(common)?;
    if let Some(seed) = common.seed {
        config.generation.master_seed = seed;
    }
    let count = count.unwrap_or(config.generation.sample_count);
    let path = common.out.clone().unwrap_or_else(|| config.paths.dataset.clone());
    let start = std::time::Instant::now();
    let manifest = generate_to_file(&config, count, &path, |done| {
        eprint!("\rsimulated {done}/{count}");
    })?;
    eprintln!();
    println!(
        "wrote {} records ({} failed) to {} in {:.1} s; manifest {}",
        manifest.count,
        manifest.failed.len(),
        path.display(),
        start.elapsed().as_secs_f64(),
        Manifest::path_for(&path).display()
    );
    if manifest.split.test_reassigned {
        eprintln!("warning: test split rounded to zero records; one record moved from training to test");
    }
    Ok(())
}

fn load_dataset(path: &Path) -> Result<(Dataset, Manifest)> {
    let dataset = Dataset::load(path).with_context(|| format!("reading {}", path.display()))?;
    let mpath = Manifest::path_for(path);
    let manifest = Manifest::load(&mpath).with_context(|| format!("reading {}", mpath.display()))?;
    manifest.check(&dataset)?;
    Ok((dataset, manifest))
}

fn train(common: &Common, data: Option<PathBuf>, epochs: Option<usize>) -> Result<()> {
    let mut config = load_config(common)?;
    if let Some(seed) = common.seed {
        config.training.seed = seed;
    }
    if let Some(e) = epochs {
        config.training.epochs = e;
    }
    let data = data.unwrap_or_else(|| config.paths.dataset.clone());
    let (dataset, manifest) = load_dataset(&data)?;
    let out = common.out.clone().unwrap_or_else(|| config.paths.checkpoint.clone());
    let split = &manifest.split;
    println!("training on {} records, validating on {}", split.train.len(), split.val.len());
    let (model, history) = train_model(&config, &dataset, split, |r| {
        println!("epoch {:>4}  lr {:.3e}  train {:.6}  val {:.6}  {:.1} s", r.epoch, r.lr, r.train_cost, r.val_cost, r.wall_time);
    })?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    checkpoint::save(&model, &out).with_context(|| format!("writing {}", out.display()))?;
    let hist_path = history_path(&config, common);
    history.write_csv(create(&hist_path)?)?;
    println!("best epoch {}; checkpoint {}; history {}", history.best_epoch, out.display(), hist_path.display());
    Ok(())
}

fn history_path(config: &RunConfig, common: &Common) -> PathBuf {
    match &common.out {
        Some(out) => out.with_extension("history.csv"),
        None => config.paths.history.clone(),
    }
}

fn write_cases(dir: &Path, prefix: &str, results: &[CaseResult]) -> Result<Vec<ErrorReport>> {
    for r in results {
        let name = format!("{prefix}_{}_{}.csv", r.report.sample, r.report.case).replace(['=', ' '], "_");
        r.write_csv(create(&dir.join("series").join(name))?)?;
    }
    Ok(results.iter().map(|r| r.report.clone()).collect())
}

fn eval(common: &Common, model: Option<PathBuf>, data: Option<PathBuf>, campaigns_only: bool) -> Result<()> {
    let config = load_config(common)?;
    let model_path = model.unwrap_or_else(|| config.paths.checkpoint.clone());
    let model = checkpoint::load(&model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let dir = common.out.clone().unwrap_or_else(|| config.paths.reports.clone());
    std::fs::create_dir_all(&dir)?;
    let oracle = Oracle { matrix: config.material.matrix, fiber: config.material.fiber, options: config.homogenizer };
    let settings = &config.evaluation;
    let sigma_y = config.material.matrix.yield_stress;

    let mut summary = Vec::new();
    writeln!(summary, "checkpoint: {}", model_path.display())?;
    writeln!(summary, "errors are normalized by the matrix yield stress {sigma_y} MPa\n")?;

    if !campaigns_only {
        let data = data.unwrap_or_else(|| config.paths.dataset.clone());
        let (dataset, manifest) = load_dataset(&data)?;
        let test = sequences(&dataset, &manifest.split.test)?;
        let mut reports = Vec::new();
        for (seq, &idx) in test.iter().zip(&manifest.split.test) {
            let pred = model.predict(&seq.features)?;
            reports.push(sfrc::evaluate::mere_mare(&pred, &seq.targets, sigma_y)?.labeled(format!("record-{idx}"), "test"));
        }
        write_reports_csv(&reports, create(&dir.join("test_split.csv"))?)?;
        write_summary(&format!("held-out test split of {}", data.display()), &reports, &mut summary)?;
        if !reports.is_empty() {
            let avg = average_report(&reports, "test", "mean")?;
            writeln!(summary, "per-component MeRE: {:?}\n", avg.mere.map(|x| (x * 1e4).round() / 1e4))?;
        }
    }

    let samples: Vec<VirtualSample> = settings.one_cycle_samples.iter().map(|l| virtual_sample(l)).collect::<sfrc::Result<_>>()?;
    let one = write_cases(&dir, "one_cycle", &one_cycle_campaign(&model, &oracle, &samples, settings)?)?;
    write_reports_csv(&one, create(&dir.join("one_cycle.csv"))?)?;
    write_summary(&format!("one cycle, eps_c = {}", settings.one_cycle_amplitude), &one, &mut summary)?;

    let samples: Vec<VirtualSample> = settings.cyclic_samples.iter().map(|l| virtual_sample(l)).collect::<sfrc::Result<_>>()?;
    let cyc = write_cases(&dir, "cyclic", &cyclic_campaign(&model, &oracle, &samples, settings)?)?;
    write_reports_csv(&cyc, create(&dir.join("cyclic.csv"))?)?;
    write_summary(&format!("repeated uniaxial cycles, eps_c = {}", settings.cyclic_amplitude), &cyc, &mut summary)?;

    let base = virtual_sample(&settings.extrapolation_sample)?;
    let res = write_cases(&dir, "resampled", &resampling_campaign(&model, &oracle, &base, settings)?)?;
    write_reports_csv(&res, create(&dir.join("resampling.csv"))?)?;
    write_summary("time resampling of the uniaxial cycle", &res, &mut summary)?;

    let ext = write_cases(&dir, "extrapolation", &extrapolation_campaign(&model, &oracle, settings)?)?;
    write_reports_csv(&ext, create(&dir.join("extrapolation.csv"))?)?;
    write_summary("volume fraction and strain extrapolation", &ext, &mut summary)?;

    std::fs::write(dir.join("summary.txt"), &summary)?;
    std::io::stdout().write_all(&summary)?;
    println!("reports written to {}", dir.display());
    Ok(())
}

fn simulate(common: &Common) -> Result<()> {
    let Some(path) = &common.config else {
        bail!("simulate needs --config with a [simulate] section");
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut run_part = table.clone();
    run_part.remove("simulate");
    let config = RunConfig::from_toml(&toml::to_string(&run_part)?)?;
    let spec: SimulateFile = toml::from_str(&text).with_context(|| format!("reading [simulate] in {}", path.display()))?;
    let spec = spec.simulate;

    let program = match spec.case.as_str() {
        "custom" => {
            let rows = spec.strain.as_deref().context("case = \"custom\" needs strain rows")?;
            let mut p = LoadProgram::strain_driven(rows);
            for &k in &spec.free {
                if k >= 6 {
                    bail!("free component index {k} is out of range 0..6");
                }
                p.controls[k] = Control::FreeStress;
            }
            p
        }
        name => {
            let case = LoadCase::ALL
                .into_iter()
                .find(|c| c.label() == name)
                .with_context(|| format!("unknown load case {name:?}"))?;
            case.program(spec.amplitude, spec.cycles, spec.steps_per_cycle)?
        }
    };

    let series = match spec.material.as_str() {
        "matrix" => run(&J2Matrix { params: config.material.matrix }, &program, &config)?,
        "composite" => {
            let (orientation, vf) = match (&spec.sample, spec.orientation, spec.volume_fraction) {
                (Some(label), None, None) => {
                    let s = virtual_sample(label)?;
                    (s.orientation, s.volume_fraction)
                }
                (None, Some(a), Some(v)) => (OrientationTensor::from_components(a)?, v),
                _ => bail!("composite simulation needs either `sample` or both `orientation` and `volume_fraction`"),
            };
            let micro = Microstructure::new(orientation, vf, config.material.fiber)?;
            run(&Composite::new(config.material.matrix, micro, config.homogenizer)?, &program, &config)?
        }
        other => bail!("unknown material {other:?}; use \"composite\" or \"matrix\""),
    };
    match &common.out {
        Some(out) => {
            series.write_csv(create(out)?)?;
            eprintln!("wrote {} rows to {}", series.len(), out.display());
        }
        None => series.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}

fn run<M: MaterialPoint>(m: &M, program: &LoadProgram, config: &RunConfig) -> Result<sfrc::homogenize::SimulationSeries> {
    Ok(run_program(m, program, &config.homogenizer.driver())?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate { common, count } => generate(common, *count),
        Command::Train { common, data, epochs } => train(common, data.clone(), *epochs),
        Command::Eval { common, model, data, campaigns_only } => eval(common, model.clone(), data.clone(), *campaigns_only),
        Command::Simulate { common } => simulate(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
