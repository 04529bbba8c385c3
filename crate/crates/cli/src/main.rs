use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mixseg::checkpoint::Checkpoint;
use mixseg::data::{generate_corpus, read_corpus, write_corpus, CorpusCounts, Sample, SynthConfig};
use mixseg::eval::{binarize, evaluate, EvalReport};
use mixseg::gradsuite::{self, TOLERANCE};
use mixseg::segnet::predict_logits;
use mixseg::trainer::{self, encoder_for, test_sets, TrainConfig};
use mixseg::viz::triptych_ppm;

#[derive(Parser)]
#[command(name = "mixseg", version, about = "Mixed-supervision binary segmentation at desk scale")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn as_str(self) -> &'static str {
        match self {
            Switch::On => "on",
            Switch::Off => "off",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image size as HxW.
        #[arg(long, default_value = "96x96", value_parser = parse_size)]
        size: (usize, usize),
        /// Pixel, box, scribble and test sample counts.
        #[arg(long, default_value = "60,200,200,100", value_parser = parse_counts)]
        counts: CorpusCounts,
    },
    /// Train one model.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Key-value config file; omitted keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        toggle_sp: Option<Switch>,
        #[arg(long)]
        toggle_bme: Option<Switch>,
        #[arg(long)]
        toggle_lr: Option<Switch>,
    },
    /// Score a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Finite-difference check of every differentiable op and loss.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_op: Option<String>,
    },
    /// Train all five loss combinations over several seeds.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        seeds: Vec<u64>,
    },
    /// Render image | truth | prediction triptychs for the test split.
    ExportViz {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn check(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }
}

impl From<mixseg::Error> for Failure {
    fn from(e: mixseg::Error) -> Self {
        match e {
            mixseg::Error::NonFiniteGradient(_) | mixseg::Error::NonFiniteLoss(_) => Failure::check(e.to_string()),
            _ => Failure::input(e.to_string()),
        }
    }
}

impl From<mixseg::data::DataError> for Failure {
    fn from(e: mixseg::data::DataError) -> Self {
        Failure::input(e.to_string())
    }
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or("expected HxW")?;
    let dim = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad dimension {v:?}"));
    Ok((dim(h)?, dim(w)?))
}

fn parse_counts(s: &str) -> Result<CorpusCounts, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|v| v.trim().parse::<usize>().map_err(|_| format!("bad count {v:?}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [pixel, boxes, scribble, test] => Ok(CorpusCounts { pixel, boxes, scribble, test }),
        _ => Err("expected four counts P,B,S,T".into()),
    }
}

fn load_corpus(dir: &Path) -> Result<Vec<Sample>, Failure> {
    if !dir.is_dir() {
        return Err(Failure::input(format!("corpus directory {} does not exist", dir.display())));
    }
    read_corpus(dir).map_err(|e| Failure::input(format!("{}: {e}", dir.display())))
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig, Failure> {
    let Some(path) = path else { return Ok(TrainConfig::default()) };
    let text = fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    TrainConfig::from_key_values(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn load_checkpoint(dir: &Path, corpus: &[Sample]) -> Result<Checkpoint, Failure> {
    if !dir.is_dir() {
        return Err(Failure::input(format!("checkpoint directory {} does not exist", dir.display())));
    }
    let ck = Checkpoint::load(dir)?;
    ck.check_config(&encoder_for(corpus)?)?;
    Ok(ck)
}

fn print_report(report: &EvalReport) {
    for d in &report.datasets {
        println!("{:<10} n={:<5} dice {:.4} iou {:.4}", d.name, d.count, d.dice, d.iou);
    }
    println!("{:<10} dice {:.4} iou {:.4}", "wavg", report.wavg_dice, report.wavg_iou);
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { out, seed, size, counts } => {
            let cfg = SynthConfig { height: size.0, width: size.1, seed, ..SynthConfig::default() };
            let corpus = generate_corpus(&cfg, &counts)?;
            let checksum = write_corpus(&corpus, &out)?;
            println!("{checksum}");
        }
        Command::Train { data, config, out, toggle_sp, toggle_bme, toggle_lr } => {
            let corpus = load_corpus(&data)?;
            let mut cfg = load_config(config.as_deref())?;
            for (key, v) in [("toggle_sp", toggle_sp), ("toggle_bme", toggle_bme), ("toggle_lr", toggle_lr)] {
                if let Some(v) = v {
                    cfg.set(key, v.as_str())?;
                }
            }
            cfg.validate()?;
            let summary = trainer::train(&corpus, &cfg, &out, None)?;
            if let Some((it, report)) = summary.evals.last() {
                println!("iteration {it}");
                print_report(report);
            }
        }
        Command::Eval { checkpoint, data } => {
            let corpus = load_corpus(&data)?;
            let ck = load_checkpoint(&checkpoint, &corpus)?;
            print_report(&evaluate(&ck.encoder, &ck.params, &test_sets(&corpus))?);
        }
        Command::Gradcheck { seed, corrupt_op } => {
            let report = gradsuite::run_suite(seed, corrupt_op.as_deref())?;
            println!("{:<24} {:>14} {:>6}", "op", "max_rel_error", "coords");
            for row in &report.rows {
                let mark = if row.passed() { "ok" } else { "FAIL" };
                println!("{:<24} {:>14.3e} {:>6} {mark}", row.name, row.max_rel_error, row.coordinates);
            }
            let failing = report.failing();
            if !failing.is_empty() {
                let names: Vec<&str> = failing.iter().map(|r| r.name).collect();
                return Err(Failure::check(format!("gradient check above {TOLERANCE:e}: {}", names.join(", "))));
            }
            println!("{} ops within {TOLERANCE:e}", report.rows.len());
        }
        Command::Ablate { data, config, out, seeds } => {
            let corpus = load_corpus(&data)?;
            let cfg = load_config(config.as_deref())?;
            let rows = trainer::ablate(&corpus, &cfg, &seeds, |run| eprintln!("{}", run.line()))?;
            fs::create_dir_all(&out).map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
            let path = out.join("ablation.csv");
            let csv = trainer::ablation_csv(&rows);
            fs::write(&path, &csv).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            print!("{csv}");
        }
        Command::ExportViz { checkpoint, data, out } => {
            let corpus = load_corpus(&data)?;
            let ck = load_checkpoint(&checkpoint, &corpus)?;
            let sets = test_sets(&corpus);
            let report = evaluate(&ck.encoder, &ck.params, &sets)?;
            fs::create_dir_all(&out).map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
            for s in &sets[0].1 {
                let pred = binarize(&predict_logits(&ck.encoder, &ck.params, &s.image)?);
                let path = out.join(format!("{}.ppm", s.id));
                fs::write(&path, triptych_ppm(&s.image, &s.truth_mask, &pred)?)
                    .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            }
            let mut csv = String::from("id,dice,iou\n");
            for m in &report.images {
                writeln!(csv, "{},{},{}", m.id, m.dice, m.iou).expect("write to string");
            }
            let path = out.join("dice.csv");
            fs::write(&path, csv).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
            println!("{} triptychs written to {}", report.images.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
