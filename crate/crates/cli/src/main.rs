use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use circdir::angle::Angle;
use circdir::data::{generate_cell, generate_dataset, load_dataset, make_folds, read_pgm, save_dataset, LabeledImage};
use circdir::nn::{gradcheck, load_checkpoint, probing_cnn, save_checkpoint, GradcheckOptions, Model, Scale};
use circdir::train_eval::{quadrant_baseline, sweep, train, QuadrantBaseline, RunConfig};
use circdir::tta::{tta_eval, tta_predict, TtaConfig, TtaRow, TTA_COUNTS};
use clap::error::ErrorKind;
use clap::{ArgAction, Parser, Subcommand};
use log::LevelFilter;

mod error;

use error::CliError;

const FOLD_PROPORTIONS: (f64, f64, f64) = (0.4, 0.1, 0.5);

#[derive(Debug, Parser)]
#[command(name = "circdir", version, about = "Estimate migration directions from single cell images")]
struct Cli {
    /// Cap on worker threads for parallel work.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset of polarized cells.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one configuration on one fold and save the checkpoint.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// JSON run configuration.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        fold: usize,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        /// Seed of the fold shuffles; defaults to the config seed.
        #[arg(long)]
        split_seed: Option<u64>,
        /// Where to write the JSON run report; defaults to `<out>.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Predict the direction of one PGM image.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Total predictions per image, including the unrotated one.
        #[arg(long, default_value_t = 1)]
        tta: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Report E_deg of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also evaluate with this many predictions per image.
        #[arg(long)]
        tta: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Evaluate only the test split of this fold.
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Train all nine configurations on every fold.
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = Scale::Desk)]
        scale: Scale,
        #[arg(long, default_value_t = 1)]
        augment_multiplier: usize,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        /// Per-run CSV; printed to stdout when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Tabulate E_deg against the number of test-time predictions.
    Tta {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = TTA_COUNTS)]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        fold: Option<usize>,
        #[arg(long, default_value_t = 4)]
        folds: usize,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Best-case angular error of a four-quadrant classifier.
    Baseline {
        #[arg(long)]
        accuracy: f64,
        /// Shares of the two neighboring quadrants.
        #[arg(long, num_args = 2, requires = "opposite")]
        neighbors: Option<Vec<f64>>,
        /// Share of the opposite quadrant.
        #[arg(long, requires = "neighbors")]
        opposite: Option<f64>,
    },
    /// Check analytic gradients of every configuration against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 32)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = Scale::Desk)]
        scale: Scale,
        #[arg(long, default_value_t = 1e-4)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => LevelFilter::Warn,
        1 => LevelFilter::Info,
        _ => LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_target(false).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let jobs = cli.jobs.unwrap_or_else(rayon::current_num_threads);

    match cli.command {
        Command::Gen { out, count, size, seed } => {
            let images = generate_dataset(count, size, seed)?;
            save_dataset(&out, &images)?;
            println!("wrote {count} images of {size}x{size} to {} (seed {seed})", out.display());
        }
        Command::Train { data, config, out, fold, folds, split_seed, report } => {
            let text = fs::read_to_string(&config).map_err(|e| CliError::io(&config, e))?;
            let cfg = RunConfig::from_json(&text).map_err(|e| CliError::Data(format!("{}: {e}", config.display())))?;
            let dataset = load_dataset(&data)?;
            let split = fold_split(&dataset, folds, fold, split_seed.unwrap_or(cfg.seed))?;
            let run = train(&cfg, &dataset, &split)?;
            save_checkpoint(&run.model, &out)?;
            let report_path = report.unwrap_or_else(|| sibling(&out, "report.json"));
            write_json(&report_path, &run.report)?;
            println!(
                "config={cfg} fold={fold} seed={} best_epoch={} val_e_deg={:.4} test_e_deg={:.4}",
                cfg.seed, run.report.best_epoch, run.report.val_e_deg, run.report.test_e_deg
            );
        }
        Command::Predict { model, image, tta, seed } => {
            let model = load_checkpoint(&model)?;
            let bytes = fs::read(&image).map_err(|e| CliError::io(&image, e))?;
            let (w, h, pixels) = read_pgm(&bytes, &image)?;
            if w != h || w != model.input_size() {
                return Err(CliError::Data(format!(
                    "{}: image is {w}x{h}, the model expects {1}x{1}",
                    image.display(),
                    model.input_size()
                )));
            }
            let angle = tta_predict(&model, &pixels, &TtaConfig { n: tta, seed })?;
            println!("angle_rad={} angle_deg={}", angle.radians(), angle.degrees());
        }
        Command::Eval { model, data, tta, seed, fold, folds, split_seed, csv, json } => {
            let model = load_checkpoint(&model)?;
            let dataset = load_dataset(&data)?;
            let images = select(&dataset, fold, folds, split_seed)?;
            let mut counts = vec![1];
            counts.extend(tta.filter(|&n| n != 1));
            let rows = tta_eval(&model, &images, &counts, seed)?;
            report_rows(&model, fold, &rows, csv.as_deref(), json.as_deref())?;
        }
        Command::Sweep { data, seed, epochs, batch_size, scale, augment_multiplier, folds, csv, json } => {
            let dataset = load_dataset(&data)?;
            let ids: Vec<String> = dataset.iter().map(|d| d.id.clone()).collect();
            let splits = make_folds(&ids, folds, FOLD_PROPORTIONS, seed)?;
            let template = RunConfig { epochs, batch_size, seed, scale, augment_multiplier, ..RunConfig::optimal() };
            let result = sweep(&template, &dataset, &splits, jobs)?;
            eprint!("{}", result.table());
            let text = result.to_csv()?;
            match csv {
                Some(path) => fs::write(&path, text).map_err(|e| CliError::io(&path, e))?,
                None => print!("{text}"),
            }
            if let Some(path) = json {
                write_json(&path, &result.summary)?;
            }
        }
        Command::Tta { model, data, counts, seed, fold, folds, split_seed, csv } => {
            let model = load_checkpoint(&model)?;
            let dataset = load_dataset(&data)?;
            let images = select(&dataset, fold, folds, split_seed)?;
            let rows = tta_eval(&model, &images, &counts, seed)?;
            report_rows(&model, fold, &rows, csv.as_deref(), None)?;
        }
        Command::Baseline { accuracy, neighbors, opposite } => {
            let b = match (neighbors, opposite) {
                (Some(n), Some(o)) => QuadrantBaseline::new(accuracy, n[0], n[1], o),
                _ => QuadrantBaseline::equal_thirds(accuracy),
            }
            .map_err(|e| CliError::Usage(e.to_string()))?;
            let r = quadrant_baseline(&b);
            println!("avg_inaccuracy_deg={:.4} max_inaccuracy_deg={:.4}", r.avg_deg, r.max_deg);
        }
        Command::Gradcheck { size, seed, scale, step, tolerance } => {
            let opts = GradcheckOptions { step, tolerance, ..Default::default() };
            let mut failed = 0;
            for cfg in RunConfig::optimal().nine() {
                let model = probing_cnn(size, scale, cfg.validate()?, seed)?;
                let label = Angle::new(1.0 + 0.1 * failed as f64).expect("finite");
                let (img, _) = generate_cell(size, label, seed)?;
                let r = gradcheck(&model, cfg.loss, &img.pixels, img.label, &opts)?;
                let status = if r.passed { "PASS" } else { "FAIL" };
                failed += usize::from(!r.passed);
                println!(
                    "{status} {cfg} max_rel_err={:.3e} checked={} skipped={}{}",
                    r.max_rel_err,
                    r.checked,
                    r.skipped_params,
                    r.skipped_sample.map(|s| format!(" ({s})")).unwrap_or_default()
                );
            }
            if failed > 0 {
                return Err(CliError::Numeric(format!("{failed} configurations failed the gradient check")));
            }
        }
    }
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

fn write_json<T: serde::Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

fn fold_split(dataset: &[LabeledImage], folds: usize, fold: usize, seed: u64) -> Result<circdir::data::FoldSplit, CliError> {
    if fold >= folds {
        return Err(CliError::Usage(format!("fold {fold} does not exist among {folds} folds")));
    }
    let ids: Vec<String> = dataset.iter().map(|d| d.id.clone()).collect();
    Ok(make_folds(&ids, folds, FOLD_PROPORTIONS, seed)?.swap_remove(fold))
}

fn select(dataset: &[LabeledImage], fold: Option<usize>, folds: usize, seed: u64) -> Result<Vec<&LabeledImage>, CliError> {
    match fold {
        None => Ok(dataset.iter().collect()),
        Some(f) => {
            let split = fold_split(dataset, folds, f, seed)?;
            let wanted: std::collections::HashSet<&str> = split.test.iter().map(String::as_str).collect();
            Ok(dataset.iter().filter(|d| wanted.contains(d.id.as_str())).collect())
        }
    }
}

/// Prints one line per row and writes `encoding,activation,loss,fold,n,e_deg`
/// rows. Checkpoints do not record the training loss, so that column is empty.
fn report_rows(model: &Model, fold: Option<usize>, rows: &[TtaRow], csv: Option<&Path>, json: Option<&Path>) -> Result<(), CliError> {
    let head = model.head();
    let fold_text = fold.map(|f| f.to_string()).unwrap_or_default();
    let mut text = String::from("encoding,activation,loss,fold,n,e_deg\n");
    for r in rows {
        println!("n={} e_deg={:.4} failed_images={}", r.n, r.e_deg, r.failed_images);
        text += &format!("{},{},,{fold_text},{},{}\n", head.encoding, head.activation, r.n, r.e_deg);
    }
    if let Some(path) = csv {
        fs::write(path, text).map_err(|e| CliError::io(path, e))?;
    }
    if let Some(path) = json {
        write_json(path, rows)?;
    }
    Ok(())
}
