//! Command-line surface. Exit codes: 0 success, 1 usage, 2 data, 3 numeric.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ccnets_core::baselines::{train_autoencoder, train_mlp};
use ccnets_core::data::TabularDataset;
use ccnets_core::trainer::{evaluate, EpochRecord};
use ccnets_core::{compute_metrics, CooperativeTriple};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::csvio::save_csv;
use crate::error::{CliError, Result};
use crate::experiments::{self, seeds, CurveTable, ExperimentOutput};
use crate::output::{self, ensure_dir, write_json};
use crate::prepare::{prepare, PreparedData};

#[derive(Debug, Parser)]
#[command(name = "ccnets", version, about = "Cooperative generative classifier networks for fraud detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Keep only the first N rows of the dataset.
    #[arg(long)]
    pub rows: Option<usize>,
    /// Overrides dataset.path.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Overrides train.epochs and baselines.epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenerateMode {
    /// Producer fed the original labels.
    Generation,
    /// Producer fed the reasoner's inferred labels.
    Reconstruction,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split and normalize the dataset; write train.csv, test.csv and normalization.json.
    PrepareData(Common),
    /// Train CCNETS and write its checkpoint and loss curves.
    Train(Common),
    /// Evaluate a CCNETS checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write producer output for the training split as CSV.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = GenerateMode::Generation)]
        mode: GenerateMode,
    },
    /// Write an amplified copy of the training split as CSV.
    Amplify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Overrides experiment.amplify_factor.
        #[arg(long)]
        factor: Option<usize>,
    },
    /// Train the autoencoder on normal training rows.
    TrainAe(Common),
    /// Train the MLP classifier on the original training split.
    TrainMlp(Common),
    /// CCNETS against autoencoder codes + MLP.
    Exp1(Common),
    /// MLP on original, generated and reconstructed data.
    Exp2 {
        #[command(flatten)]
        common: Common,
        /// Reuse a trained CCNETS checkpoint instead of training one.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// MLP on generated data at ×1 against amplified data.
    Exp3 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the reports found in one or more output directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            e.exit_code()
        }
    }
}

struct Context {
    cfg: RunConfig,
    seed: u64,
    out: PathBuf,
    quiet: bool,
}

impl Context {
    fn new(c: &Common) -> Result<Self> {
        if !c.config.is_file() {
            return Err(CliError::Usage(format!("config file {} not found", c.config.display())));
        }
        let mut cfg = RunConfig::load(&c.config)?;
        if let Some(seed) = c.seed {
            cfg.seed = seed;
        }
        if let Some(rows) = c.rows {
            cfg.dataset.rows = Some(rows);
        }
        if let Some(data) = &c.data {
            cfg.dataset.path = Some(data.clone());
        }
        if let Some(epochs) = c.epochs {
            cfg.train.epochs = epochs;
            cfg.baselines.epochs = epochs;
        }
        cfg.validate()?;
        ensure_dir(&c.out)?;
        Ok(Context {
            seed: cfg.seed,
            cfg,
            out: c.out.clone(),
            quiet: c.quiet,
        })
    }

    fn data(&self) -> Result<PreparedData> {
        let data = prepare(&self.cfg.dataset)?;
        if let Some(n) = &data.notice {
            eprintln!("notice: {n}");
        }
        if data.train.width() != self.cfg.ccnets.observe_size {
            return Err(CliError::Data(format!(
                "dataset has {} features but ccnets.observe_size is {}",
                data.train.width(),
                self.cfg.ccnets.observe_size
            )));
        }
        Ok(data)
    }

    fn progress(&self) -> impl FnMut(&str, &EpochRecord) {
        let quiet = self.quiet;
        move |model: &str, r: &EpochRecord| {
            if !quiet {
                let t = &r.train;
                eprintln!(
                    "[{model}] epoch {:>3}  explainer {:.5}  reasoner {:.5}  producer {:.5}  inf {:.5}  gen {:.5}  rec {:.5}",
                    r.epoch, t.explainer, t.reasoner, t.producer, t.inference, t.generation, t.reconstruction
                );
            }
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn load_triple(path: &Path, cfg: &RunConfig) -> Result<CooperativeTriple> {
    let triple = Checkpoint::load(path)?.to_triple()?;
    if triple.config.observe_size != cfg.ccnets.observe_size {
        return Err(CliError::Data(format!(
            "checkpoint observe_size {} differs from config {}",
            triple.config.observe_size, cfg.ccnets.observe_size
        )));
    }
    Ok(triple)
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    dataset: &'a crate::prepare::DataSummary,
    seed: u64,
    epochs: usize,
    final_train: Option<ccnets_core::trainer::LossSummary>,
    curve_fits: std::collections::BTreeMap<String, ccnets_core::curve::CurveFit>,
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::PrepareData(c) => {
            let ctx = Context::new(&c)?;
            let data = ctx.data()?;
            save_csv(&ctx.path("train.csv"), &data.denormalize(&data.train)?)?;
            save_csv(&ctx.path("test.csv"), &data.denormalize(&data.test)?)?;
            if let Some(stats) = &data.stats {
                write_json(&ctx.path("normalization.json"), stats)?;
            }
            write_json(&ctx.path("dataset.json"), &data.summary)?;
            println!(
                "{}: {} rows -> {} train ({} fraud) / {} test ({} fraud)",
                data.summary.source,
                data.summary.rows,
                data.summary.train_rows,
                data.summary.train_fraud,
                data.summary.test_rows,
                data.summary.test_fraud
            );
        }
        Command::Train(c) => {
            let ctx = Context::new(&c)?;
            let data = ctx.data()?;
            let mut progress = ctx.progress();
            let trained = experiments::train_ccnets(&ctx.cfg, &data, ctx.seed, &mut progress)?;
            let curve = CurveTable::from_records("ccnets", &trained.records);
            output::write_curve_csv(&ctx.path(&curve.file_name()), &curve)?;
            output::write_epochs_csv(&ctx.path(output::EPOCHS_FILE), &trained.records)?;
            Checkpoint::from_triple(&trained.triple).save(&ctx.path("ccnets.ckpt.json"))?;
            let summary = TrainSummary {
                dataset: &data.summary,
                seed: ctx.seed,
                epochs: trained.records.len(),
                final_train: trained.records.last().map(|r| r.train),
                curve_fits: curve.train_fits(),
            };
            write_json(&ctx.path("train_summary.json"), &summary)?;
            println!("trained {} epochs; checkpoint {}", summary.epochs, ctx.path("ccnets.ckpt.json").display());
        }
        Command::Eval { common, checkpoint } => {
            let ctx = Context::new(&common)?;
            let data = ctx.data()?;
            let triple = load_triple(&checkpoint, &ctx.cfg)?;
            let m = evaluate(&triple, &data.test, &ctx.cfg.experiment.eval)?;
            write_json(&ctx.path(output::METRICS_FILE), &m)?;
            println!("f1 {:.4}  precision {:.4}  recall {:.4}", m.f1, m.precision, m.recall);
        }
        Command::Generate { common, checkpoint, mode } => {
            let ctx = Context::new(&common)?;
            let data = ctx.data()?;
            let triple = load_triple(&checkpoint, &ctx.cfg)?;
            let train = &data.train;
            let features = match mode {
                GenerateMode::Generation => triple.generate(&train.features, &train.labels)?,
                GenerateMode::Reconstruction => triple.reconstruct(&train.features)?,
            };
            let ds = TabularDataset::new(features, train.labels.clone(), train.columns.clone())?;
            let name = match mode {
                GenerateMode::Generation => "generated.csv",
                GenerateMode::Reconstruction => "reconstructed.csv",
            };
            save_csv(&ctx.path(name), &data.denormalize(&ds)?)?;
            println!("wrote {} rows to {}", ds.len(), ctx.path(name).display());
        }
        Command::Amplify { common, checkpoint, factor } => {
            let ctx = Context::new(&common)?;
            let data = ctx.data()?;
            let triple = load_triple(&checkpoint, &ctx.cfg)?;
            let factor = factor.unwrap_or(ctx.cfg.experiment.amplify_factor);
            let amp = triple.amplify(&data.train, factor, ctx.cfg.experiment.noise_sigma, ctx.seed + seeds::AMPLIFY)?;
            save_csv(&ctx.path("amplified.csv"), &data.denormalize(&amp)?)?;
            println!("wrote {} rows to {}", amp.len(), ctx.path("amplified.csv").display());
        }
        Command::TrainAe(c) => {
            let ctx = Context::new(&c)?;
            let data = ctx.data()?;
            let normal = data.train.filter_label(0.0);
            let seed = ctx.seed + seeds::AUTOENCODER;
            let (ae, hist) = train_autoencoder(&normal.features, &normal.labels, &ctx.cfg.baselines, seed)?;
            let curve = CurveTable::from_baseline("autoencoder", "reconstruction", &hist);
            output::write_curve_csv(&ctx.path(&curve.file_name()), &curve)?;
            Checkpoint::from_autoencoder(&ae, &ctx.cfg.baselines, seed).save(&ctx.path("autoencoder.ckpt.json"))?;
            println!("final reconstruction loss {:.6}", hist.last().map_or(f64::NAN, |h| h.train_loss));
        }
        Command::TrainMlp(c) => {
            let ctx = Context::new(&c)?;
            let data = ctx.data()?;
            let seed = ctx.seed + seeds::MLP;
            let (tr, te) = (&data.train, &data.test);
            let (mlp, hist) = train_mlp(&tr.features, &tr.labels, &ctx.cfg.baselines, seed, Some((&te.features, &te.labels)))?;
            let curve = CurveTable::from_baseline("mlp", "log_loss", &hist);
            output::write_curve_csv(&ctx.path(&curve.file_name()), &curve)?;
            Checkpoint::from_mlp(&mlp, &ctx.cfg.baselines, seed).save(&ctx.path("mlp.ckpt.json"))?;
            let m = compute_metrics(&te.label_vec(), &mlp.predict(&te.features, ctx.cfg.experiment.mlp_threshold)?)?;
            write_json(&ctx.path(output::METRICS_FILE), &m)?;
            println!("f1 {:.4}  precision {:.4}  recall {:.4}", m.f1, m.precision, m.recall);
        }
        Command::Exp1(c) => run_experiment(&c, None, |ctx, data, triple, p| {
            debug_assert!(triple.is_none());
            experiments::run_experiment_1(&ctx.cfg, data, ctx.seed, p)
        })?,
        Command::Exp2 { common, checkpoint } => run_experiment(&common, checkpoint, |ctx, data, triple, p| {
            experiments::run_experiment_2(&ctx.cfg, data, ctx.seed, triple, p)
        })?,
        Command::Exp3 { common, checkpoint } => run_experiment(&common, checkpoint, |ctx, data, triple, p| {
            experiments::run_experiment_3(&ctx.cfg, data, ctx.seed, triple, p)
        })?,
        Command::Report { dirs } => {
            for dir in dirs {
                let path = dir.join(output::REPORT_FILE);
                print!("{}", output::render_report(&output::read_report(&path)?));
            }
        }
    }
    Ok(())
}

type ExperimentFn = fn(&Context, &PreparedData, Option<CooperativeTriple>, experiments::Progress) -> Result<ExperimentOutput>;

fn run_experiment(c: &Common, checkpoint: Option<PathBuf>, f: ExperimentFn) -> Result<()> {
    let ctx = Context::new(c)?;
    let started = Instant::now();
    let data = ctx.data()?;
    let triple = checkpoint.map(|p| load_triple(&p, &ctx.cfg)).transpose()?;
    let mut progress = ctx.progress();
    let out = f(&ctx, &data, triple, &mut progress)?;
    output::write_experiment(&ctx.out, &out, started.elapsed().as_secs_f64())?;
    let timed = output::read_report(&ctx.path(output::REPORT_FILE))?;
    print!("{}", output::render_report(&timed));
    Ok(())
}
