//! `skelact` command line: convert datasets, generate synthetic data,
//! train, evaluate offline/online, replay streams, and check gradients.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use skelact::engine::SamplerKind;
use skelact::nn::{
    load_model, numeric_gradient_check, save_model, train, ModelConfig, TrainConfig,
};
use skelact::schema::{build_schema, SchemaConfig};
use skelact::{Averaging, FeatureSchema, Topology};

use skelact_cli::error::HarnessError;
use skelact_cli::evalrep::{eval_offline, eval_online, EvalReport};
use skelact_cli::manifest::load_dataset;
use skelact_cli::synth::{write_synthetic, SynthConfig};
use skelact_cli::{convert_dataset, sequences_to_tensors, SourceFormat};

#[derive(Parser)]
#[command(
    name = "skelact",
    version,
    about = "Online skeleton action recognition: memory group sampling over geometric and motion features with a 1D CNN"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Utkinect,
    Jhmdb,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    MemoryGroup,
    SlidingWindow,
}

#[derive(Clone, Copy, ValueEnum)]
enum AveragingArg {
    Pairwise,
    Cumulative,
}

impl From<MethodArg> for SamplerKind {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::MemoryGroup => SamplerKind::MemoryGroup,
            MethodArg::SlidingWindow => SamplerKind::SlidingWindow,
        }
    }
}

impl From<AveragingArg> for Averaging {
    fn from(a: AveragingArg) -> Self {
        match a {
            AveragingArg::Pairwise => Averaging::Pairwise,
            AveragingArg::Cumulative => Averaging::Cumulative,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Convert a dataset-native layout into canonical JSON-lines + manifest
    Convert {
        #[arg(long, value_enum)]
        format: FormatArg,
        /// Source dataset root
        #[arg(long)]
        src: PathBuf,
        /// Output directory (manifest.json + sequences/)
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Generate a labeled synthetic dataset
    Synth {
        /// Builtin topology name or a topology file
        #[arg(long, default_value = "jhmdb15")]
        topology: String,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 40)]
        per_class: usize,
        #[arg(long, default_value_t = 32)]
        frames_min: usize,
        #[arg(long, default_value_t = 96)]
        frames_max: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Confine class-specific motion to the first third of each sequence
        #[arg(long)]
        long_action: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
    },
    /// Train a model on the manifest's training split
    Train(TrainArgs),
    /// Classify each test sequence once (resampled to the model input size)
    EvalOffline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Feature schema file (defaults to <model>.schema.json)
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        report_out: Option<PathBuf>,
        #[arg(long)]
        confusion_csv: Option<PathBuf>,
    },
    /// Replay each test sequence through the online engine
    EvalOnline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Feature schema file (defaults to <model>.schema.json)
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "memory-group")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "pairwise")]
        averaging: AveragingArg,
        /// Sampling window; must match the model input size
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        report_out: Option<PathBuf>,
        #[arg(long)]
        confusion_csv: Option<PathBuf>,
        /// Write a JSON-lines prediction log (one record per emission)
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Stream a sequence file to stdout as JSON-lines
    Replay {
        #[arg(long)]
        sequence: PathBuf,
        /// Pace the stream at this frame rate instead of full speed
        #[arg(long)]
        fps: Option<f64>,
    },
    /// Compare analytic gradients against central finite differences
    Gradcheck {
        #[arg(long, default_value_t = 8)]
        channels: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value_t = 16)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        base_filters: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model_out: PathBuf,
    /// Where to write the serialized feature schema
    /// (defaults to <model-out>.schema.json)
    #[arg(long)]
    schema_out: Option<PathBuf>,
    /// Reuse an existing schema file instead of building one
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Classifier input frames (the sampling window size)
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    base_filters: usize,
    #[arg(long, default_value_t = 128)]
    fc_width: usize,
    #[arg(long, default_value_t = 0.1)]
    dropout: f64,
    #[arg(long, default_value_t = 400)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Keep mirrored duplicate features instead of deduplicating them
    #[arg(long)]
    no_dedup_symmetry: bool,
    /// Cap on line-line angle pairs in a freshly built schema
    #[arg(long)]
    max_ll_pairs: Option<usize>,
    /// Subtract the root joint from every frame before extraction
    #[arg(long)]
    center_root: bool,
}

fn default_schema_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".schema.json");
    PathBuf::from(s)
}

fn write_report(report: &EvalReport, out: Option<&Path>) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(report)?;
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn write_confusion(report: &EvalReport, path: Option<&Path>) -> Result<(), HarnessError> {
    if let Some(path) = path {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        report.confusion.write_csv(&mut file, &report.classes)?;
    }
    Ok(())
}

fn load_schema_for(model_path: &Path, schema: Option<&Path>) -> Result<FeatureSchema, HarnessError> {
    let path = schema
        .map(Path::to_path_buf)
        .unwrap_or_else(|| default_schema_path(model_path));
    Ok(FeatureSchema::load(&path)?)
}

fn cmd_train(args: TrainArgs) -> Result<(), HarnessError> {
    let dataset = load_dataset(&args.manifest)?;
    let schema = match &args.schema {
        Some(path) => FeatureSchema::load(path)?,
        None => build_schema(
            &dataset.topology,
            &SchemaConfig {
                dedup_symmetry: !args.no_dedup_symmetry,
                max_ll_pairs: args.max_ll_pairs,
                center_root: args.center_root,
            },
        ),
    };
    eprintln!(
        "training on {} sequences ({} classes, {} channels/frame)",
        dataset.train.len(),
        dataset.classes.len(),
        schema.channels_with_motion()
    );
    let tensors = sequences_to_tensors(&dataset.train, &schema, args.n)?;
    let mut model_config = ModelConfig::new(
        args.n,
        schema.channels_with_motion(),
        dataset.classes.len(),
    );
    model_config.base_filters = args.base_filters;
    model_config.fc_width = args.fc_width;
    model_config.spatial_dropout = args.dropout;
    model_config.seed = args.seed;
    let train_config = TrainConfig {
        initial_lr: args.lr,
        max_epochs: args.epochs,
        batch_size: args.batch_size,
        validation_fraction: args.validation_fraction,
        seed: args.seed,
        ..Default::default()
    };
    let (model, report) = train(&tensors, &model_config, &train_config)?;
    save_model(&model, &args.model_out)?;
    let schema_path = args
        .schema_out
        .unwrap_or_else(|| default_schema_path(&args.model_out));
    schema.save(&schema_path)?;
    if let Some(path) = &args.report_out {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    eprintln!(
        "done: {} epochs, best validation loss {:.6} at epoch {}, {:.1}s",
        report.epochs.len(),
        report.best_val_loss,
        report.best_epoch,
        report.wall_seconds
    );
    println!("{}", args.model_out.display());
    Ok(())
}

fn cmd_replay(sequence: &Path, fps: Option<f64>) -> Result<(), HarnessError> {
    let file = std::fs::File::open(sequence)?;
    let reader = std::io::BufReader::new(file);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let pause = fps.map(|f| std::time::Duration::from_secs_f64(1.0 / f));
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(out, "{line}")?;
        out.flush()?;
        if let Some(p) = pause {
            std::thread::sleep(p);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Convert {
            format,
            src,
            out,
            train_fraction,
            seed,
        } => {
            let format = match format {
                FormatArg::Utkinect => SourceFormat::Utkinect,
                FormatArg::Jhmdb => SourceFormat::Jhmdb,
            };
            let manifest = convert_dataset(format, &src, &out, train_fraction, seed)?;
            println!("{}", manifest.display());
            Ok(())
        }
        Command::Synth {
            topology,
            classes,
            per_class,
            frames_min,
            frames_max,
            noise,
            seed,
            long_action,
            out,
            train_fraction,
        } => {
            let topo = Topology::resolve(&topology)?;
            let config = SynthConfig {
                num_classes: classes,
                per_class,
                frames_min,
                frames_max,
                noise,
                seed,
                long_action,
            };
            let manifest = write_synthetic(&config, &topo, &topology, &out, train_fraction)?;
            println!("{}", manifest.display());
            Ok(())
        }
        Command::Train(args) => cmd_train(args),
        Command::EvalOffline {
            manifest,
            model: model_path,
            schema,
            report_out,
            confusion_csv,
        } => {
            let dataset = load_dataset(&manifest)?;
            let model = load_model(&model_path)?;
            let schema = load_schema_for(&model_path, schema.as_deref())?;
            let report = eval_offline(&model, &schema, &dataset.test, &dataset.classes)?;
            write_confusion(&report, confusion_csv.as_deref())?;
            write_report(&report, report_out.as_deref())?;
            Ok(())
        }
        Command::EvalOnline {
            manifest,
            model: model_path,
            schema,
            method,
            averaging,
            n,
            report_out,
            confusion_csv,
            log,
        } => {
            let dataset = load_dataset(&manifest)?;
            let model = load_model(&model_path)?;
            let schema = load_schema_for(&model_path, schema.as_deref())?;
            if let Some(n) = n {
                if n != model.config.input_frames {
                    return Err(HarnessError::Manifest(format!(
                        "--n {} does not match the model input size {}",
                        n, model.config.input_frames
                    )));
                }
            }
            let mut log_file = match &log {
                Some(path) => Some(std::io::BufWriter::new(std::fs::File::create(path)?)),
                None => None,
            };
            let report = eval_online(
                &model,
                &schema,
                &dataset.test,
                &dataset.classes,
                method.into(),
                averaging.into(),
                log_file.as_mut().map(|w| w as &mut dyn Write),
            )?;
            write_confusion(&report, confusion_csv.as_deref())?;
            write_report(&report, report_out.as_deref())?;
            Ok(())
        }
        Command::Replay { sequence, fps } => cmd_replay(&sequence, fps),
        Command::Gradcheck {
            channels,
            classes,
            n,
            base_filters,
            seed,
            tolerance,
        } => {
            let mut config = ModelConfig::new(n, channels, classes);
            config.base_filters = base_filters;
            config.fc_width = 2 * base_filters;
            config.spatial_dropout = 0.0;
            config.seed = seed;
            let report = numeric_gradient_check(&config, tolerance)?;
            for block in &report.blocks {
                println!(
                    "{} {:<22} max_rel_err {:.3e} (tol {:.0e})",
                    if block.pass { "PASS" } else { "FAIL" },
                    block.name,
                    block.max_rel_err,
                    block.tolerance
                );
            }
            println!(
                "{}: max relative error {:.3e} (h = {:.0e})",
                if report.pass { "PASS" } else { "FAIL" },
                report.max_rel_err,
                report.h
            );
            if report.pass {
                Ok(())
            } else {
                Err(HarnessError::Core(skelact::Error::NumericFailure(0)))
            }
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own help/version output exits cleanly
            if e.use_stderr() {
                eprint!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
