use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use repaugment::augment::{AugmentConfig, AugmentMode, Replacement};
use repaugment::metrics::{evaluate, per_class_table, table_header, table_row, EvalReport, SeedAggregate};
use repaugment::nn::{grad_check, ClassifierParams};
use repaugment::noise::{NoiseSource, SeededNoise};
use repaugment::store::{icbhi_counts, import_csv, load_store, write_store, ClassLabel, Split, SynthSpec};
use repaugment::trainer::{train_multi_seed_with_threads, MultiSeedResult, Preset, TrainConfig};
use repaugment::{ErrorKind, NUM_CLASSES};
use serde::Serialize;

use crate::{AugArg, Command, EvalArgs, GradCheckArgs, ImportArgs, MaskFill, PresetArg, SynthArgs, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    Lib(repaugment::Error),
    Json { path: PathBuf, source: serde_json::Error },
    Io { path: PathBuf, source: std::io::Error },
    GradCheckFailed { max_rel_error: f64, tolerance: f64 },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) => match e.kind() {
                ErrorKind::Usage => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numeric => 4,
            },
            CliError::Json { .. } | CliError::Io { .. } => 3,
            CliError::GradCheckFailed { .. } => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Json { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::GradCheckFailed { max_rel_error, tolerance } => {
                write!(f, "gradient check failed: max relative error {max_rel_error:.3e} > {tolerance:.1e}")
            }
        }
    }
}

impl From<repaugment::Error> for CliError {
    fn from(e: repaugment::Error) -> Self {
        CliError::Lib(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::ImportCsv(a) => import(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::GradCheck(a) => grad_check_cmd(a),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let io_err = |source| CliError::Io { path: path.to_owned(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| CliError::Json { path: path.to_owned(), source })?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
    serde_json::from_reader(BufReader::new(file)).map_err(|source| CliError::Json { path: path.to_owned(), source })
}

fn synth(a: SynthArgs) -> Result<()> {
    let counts: [usize; NUM_CLASSES] = match (&a.counts, a.total) {
        (Some(c), _) => *c,
        (None, Some(total)) => icbhi_counts(total),
        (None, None) => unreachable!("clap requires --counts or --icbhi-ratios --total"),
    };
    let spec = SynthSpec {
        test_fraction: a.test_fraction,
        ..SynthSpec::new(a.dim, counts, a.separation, a.seed)
    };
    let ds = spec.generate()?;
    write_store(&ds, &a.out)?;
    println!(
        "wrote {} records (dim {}, counts {:?}, train {}, test {}) to {}",
        ds.len(),
        ds.dim(),
        counts,
        ds.split(Split::Train).count(),
        ds.split(Split::Test).count(),
        a.out.display()
    );
    Ok(())
}

fn import(a: ImportArgs) -> Result<()> {
    let ds = import_csv(&a.input, a.dim)?;
    write_store(&ds, &a.out)?;
    println!("wrote {} records (dim {}) to {}", ds.len(), ds.dim(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    input: &'a Path,
    config: &'a TrainConfig,
    seeds: &'a [u64],
    #[serde(flatten)]
    result: &'a MultiSeedResult,
}

fn train_config(a: &TrainArgs) -> TrainConfig {
    let preset = match a.preset {
        PresetArg::Transformer => Preset::Transformer,
        PresetArg::Cnn => Preset::Cnn,
    };
    let mode = match a.aug {
        AugArg::None => AugmentMode::None,
        AugArg::Mask => AugmentMode::MaskOnly,
        AugArg::Gen => AugmentMode::GenOnly,
        AugArg::Repaug => AugmentMode::Full,
    };
    let augment = AugmentConfig {
        bands: a.bands,
        max_band_len: a.max_band_len,
        noise_mean: a.noise_mean,
        noise_std: a.noise_std,
        mode,
        replacement: match a.mask_fill {
            MaskFill::Mean => Replacement::Mean,
            MaskFill::Zero => Replacement::Zero,
        },
    };
    let mut cfg = TrainConfig::from_preset(preset, a.seeds.first().copied().unwrap_or(0), augment);
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    cfg
}

fn train(a: TrainArgs) -> Result<()> {
    let cfg = train_config(&a);
    cfg.validate()?;
    let ds = load_store(&a.input)?;
    info!("loaded {} records (dim {}) from {}", ds.len(), ds.dim(), a.input.display());

    println!(
        "preset {} | lr {:e} | batch {} | epochs {} | aug {} | seeds {:?}",
        a.preset.name(),
        cfg.lr,
        cfg.batch_size,
        cfg.epochs,
        a.aug.name(),
        a.seeds
    );
    let result = train_multi_seed_with_threads(&ds, &cfg, &a.seeds, a.parallel_seeds)?;
    for run in &result.runs {
        info!(
            "seed {}: final loss {:.4}, score {:.4}",
            run.seed,
            run.loss_trace.last().copied().unwrap_or(f64::NAN),
            run.report.score
        );
    }

    println!("{}", table_header());
    println!("{}", table_row(a.aug.name(), &result.aggregate));
    println!();
    print!("{}", per_class_table(&result.aggregate, &ds.class_counts(Some(Split::Test))));

    if let Some(out) = &a.out {
        let output = TrainOutput {
            input: &a.input,
            config: &cfg,
            seeds: &a.seeds,
            result: &result,
        };
        write_json(out, &output)?;
    }
    if let Some(path) = &a.save_params {
        write_json(path, &result.runs[0].params)?;
    }
    Ok(())
}

fn print_report(report: &EvalReport, test_counts: &[usize; NUM_CLASSES]) -> Result<()> {
    let agg = SeedAggregate::from_reports(std::slice::from_ref(report))?;
    println!("{}", table_header());
    println!("{}", table_row("eval", &agg));
    println!();
    print!("{}", per_class_table(&agg, test_counts));
    println!();
    println!("confusion (rows = truth, cols = prediction)");
    print!("{:<8}", "");
    for c in ClassLabel::ALL {
        print!(" {:>8}", c.name());
    }
    println!();
    for truth in ClassLabel::ALL {
        print!("{:<8}", truth.name());
        for n in report.confusion.counts[truth.index()] {
            print!(" {n:>8}");
        }
        println!();
    }
    println!("accuracy {:.2}%", report.accuracy * 100.0);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let params: ClassifierParams = read_json(&a.params)?;
    if !params.is_consistent() {
        return Err(repaugment::Error::Format("parameter shapes are inconsistent".into()).into());
    }
    let ds = load_store(&a.input)?;
    if params.dim() != ds.dim() {
        return Err(repaugment::Error::DimMismatch {
            expected: params.dim(),
            got: ds.dim(),
        }
        .into());
    }
    let test = ds.split_vec(Split::Test);
    let report = evaluate(&params, &test)?;
    if a.json {
        let s = serde_json::to_string_pretty(&report).map_err(|source| CliError::Json {
            path: a.params.clone(),
            source,
        })?;
        println!("{s}");
        Ok(())
    } else {
        print_report(&report, &ds.class_counts(Some(Split::Test)))
    }
}

fn grad_check_cmd(a: GradCheckArgs) -> Result<()> {
    if a.dim == 0 || a.batch == 0 {
        return Err(repaugment::Error::InvalidConfig("dim and batch must be >= 1".into()).into());
    }
    let params = ClassifierParams::random(a.dim, a.seed);
    let mut rng = SeededNoise::keyed(a.seed, &[1]);
    let batch: Vec<(Vec<f64>, ClassLabel)> = (0..a.batch)
        .map(|i| ((0..a.dim).map(|_| rng.standard_normal()).collect(), ClassLabel::ALL[i % NUM_CLASSES]))
        .collect();
    let report = grad_check(&params, &batch, a.tol)?;
    println!(
        "dim {} | batch {} | coords checked {} | max rel error {:.3e} (coord {}) | tolerance {:.1e} | {}",
        a.dim,
        a.batch,
        report.coords_checked,
        report.max_rel_error,
        report.worst_coord,
        report.tolerance,
        if report.passed { "PASS" } else { "FAIL" }
    );
    if report.passed {
        Ok(())
    } else {
        Err(CliError::GradCheckFailed {
            max_rel_error: report.max_rel_error,
            tolerance: report.tolerance,
        })
    }
}

impl PresetArg {
    fn name(self) -> &'static str {
        match self {
            PresetArg::Transformer => "transformer",
            PresetArg::Cnn => "cnn",
        }
    }
}

impl AugArg {
    fn name(self) -> &'static str {
        match self {
            AugArg::None => "none",
            AugArg::Mask => "mask",
            AugArg::Gen => "gen",
            AugArg::Repaug => "repaug",
        }
    }
}
