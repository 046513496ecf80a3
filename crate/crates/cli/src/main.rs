//! `seqrl`: generate synthetic corpora, train with MLE then RL, evaluate,
//! decode, and run the built-in oracle checks.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use seqrl::parallel::Workers;
use seqrl::synthtask::{generate_corpus, load_corpus, save_corpus, Corpus, CorpusError, Split};
use seqrl::train::{
    decode, evaluate, load_checkpoint, save_checkpoint, train_phase, Checkpoint, EpochMetrics, ExperimentConfig,
    Phase, TrainError, METRICS_HEADER,
};

#[derive(Parser)]
#[command(name = "seqrl", version, about = "Attention seq2seq recognizer trained with edit-distance policy gradients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides both the run seed and the corpus seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (0 = all cores, 1 = sequential). Never changes results.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write <name>.train, <name>.dev and <name>.test under --out-dir.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "synth")]
        name: String,
    },
    /// Teacher-forced training from a fresh model; writes mle.ckpt.
    TrainMle {
        #[command(flatten)]
        common: Common,
        /// Corpus prefix: reads <data>.train and <data>.dev.
        #[arg(long)]
        data: PathBuf,
    },
    /// MLE + RL fine-tuning from a checkpoint; writes rl.ckpt.
    TrainRl {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Corpus CER and per-utterance rows (eval.csv under --out-dir).
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Beam width; defaults to the checkpoint's train.eval_beam.
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Decode one utterance of a corpus file to a transcript.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// Utterance id; defaults to the first utterance.
        #[arg(long)]
        utt: Option<String>,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Run the enumeration and finite-difference oracles and print PASS/FAIL.
    OracleCheck {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

/// Error categories and their exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Category {
    Internal = 1,
    Config = 2,
    Data = 3,
    Checkpoint = 4,
    Numeric = 5,
    Io = 6,
}

impl Category {
    fn label(self) -> &'static str {
        match self {
            Category::Internal => "internal",
            Category::Config => "config",
            Category::Data => "data",
            Category::Checkpoint => "checkpoint",
            Category::Numeric => "numeric",
            Category::Io => "io",
        }
    }
}

/// An error raised by the CLI itself rather than by the library.
#[derive(Debug)]
struct Categorized(Category, String);

impl std::fmt::Display for Categorized {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.1)
    }
}

impl std::error::Error for Categorized {}

fn fail(c: Category, msg: impl Into<String>) -> anyhow::Error {
    Categorized(c, msg.into()).into()
}

fn categorize(err: &anyhow::Error) -> Category {
    for cause in err.chain() {
        if let Some(Categorized(c, _)) = cause.downcast_ref::<Categorized>() {
            return *c;
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return match e {
                TrainError::Config(_) | TrainError::Model(_) | TrainError::Objective(_) => Category::Config,
                TrainError::Corpus(CorpusError::Config(_)) => Category::Config,
                TrainError::Corpus(_) => Category::Data,
                TrainError::Numeric(_) => Category::Numeric,
                TrainError::CheckpointParse { .. } | TrainError::CheckpointSchema(_) => Category::Checkpoint,
                TrainError::Io(_) => Category::Io,
            };
        }
        if let Some(e) = cause.downcast_ref::<CorpusError>() {
            return match e {
                CorpusError::Config(_) => Category::Config,
                CorpusError::Io(_) => Category::Io,
                _ => Category::Data,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return Category::Io;
        }
    }
    Category::Internal
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            ExperimentConfig::from_toml(&text).with_context(|| format!("config {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.data.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<&Path> {
    fs::create_dir_all(&common.out_dir)
        .with_context(|| format!("creating {}", common.out_dir.display()))?;
    Ok(&common.out_dir)
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn split_path(prefix: &Path, split: Split) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(split.name());
    PathBuf::from(s)
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

/// Checkpoint and corpus must agree on vocabulary and feature width.
fn check_compatible(ck: &Checkpoint, corpus: &Corpus) -> Result<()> {
    let vocab = ck.config.data.vocab()?;
    if corpus.vocab != vocab || corpus.feature_dim != ck.config.model.feature_dim {
        return Err(fail(Category::Data, format!(
            "corpus (vocabulary {:?}, feature_dim {}) does not match the checkpoint (vocabulary {:?}, feature_dim {})",
            corpus.vocab.symbols(),
            corpus.feature_dim,
            vocab.symbols(),
            ck.config.model.feature_dim
        )));
    }
    Ok(())
}

/// Append rows to a CSV, writing the header when the file is new.
fn append_csv(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut text = String::new();
    if fresh {
        text.push_str(header);
        text.push('\n');
    }
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    f.write_all(text.as_bytes())?;
    Ok(())
}

fn run_training(common: &Common, start: Checkpoint, phase: Phase, data: &Path, out_name: &str) -> Result<()> {
    let dir = out_dir(common)?;
    let train = read_corpus(&split_path(data, Split::Train))?;
    let dev = read_corpus(&split_path(data, Split::Dev))?;
    let metrics_path = dir.join("metrics.csv");
    let timing_path = dir.join("timing.csv");
    if phase == Phase::Mle {
        // A fresh MLE run starts fresh logs; RL appends to them.
        for p in [&metrics_path, &timing_path] {
            if p.exists() {
                fs::remove_file(p)?;
            }
        }
    }
    let mut rows = Vec::new();
    let mut timing = Vec::new();
    let on_epoch = |m: &EpochMetrics, secs: f64| {
        println!(
            "{} epoch {:>3}  train_loss {:.4}  {}dev_cer {:.2}%  ({secs:.1}s)",
            m.phase.name(),
            m.epoch,
            m.train_loss,
            m.mean_reward.map(|r| format!("mean_reward {r:.3}  ")).unwrap_or_default(),
            100.0 * m.dev_cer
        );
        rows.push(m.csv_row());
        timing.push(format!("{},{},{secs:.3}", m.epoch, m.phase.name()));
    };
    let result = train_phase(start, phase, &train, &dev, Workers(common.workers), on_epoch);
    // Logs of completed epochs are kept even when training fails.
    append_csv(&metrics_path, METRICS_HEADER, &rows)?;
    append_csv(&timing_path, "epoch,phase,wall_seconds", &timing)?;
    let outcome = result?;
    let path = dir.join(out_name);
    save_checkpoint(&outcome.best, &path)
        .with_context(|| format!("writing {}", path.display()))?;
    println!(
        "best dev CER {:.2}% at {} epoch {}; wrote {}",
        100.0 * outcome.best.best_dev_cer,
        phase.name(),
        outcome.best.epoch,
        path.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common, name } => {
            let cfg = load_config(&common)?;
            let dir = out_dir(&common)?;
            let sizes = [
                (Split::Train, cfg.splits.train),
                (Split::Dev, cfg.splits.dev),
                (Split::Test, cfg.splits.test),
            ];
            for (split, n) in sizes {
                let corpus = generate_corpus(&cfg.data, split, n)?;
                let path = split_path(&dir.join(&name), split);
                save_corpus(&corpus, &path)
                    .with_context(|| format!("writing {}", path.display()))?;
                println!("wrote {} ({} utterances)", path.display(), corpus.len());
            }
            let path = dir.join("config.toml");
            fs::write(&path, cfg.to_toml())?;
            println!("wrote {}", path.display());
        }
        Command::TrainMle { common, data } => {
            let cfg = load_config(&common)?;
            run_training(&common, Checkpoint::fresh(&cfg), Phase::Mle, &data, "mle.ckpt")?;
        }
        Command::TrainRl {
            common,
            data,
            checkpoint,
        } => {
            let cfg = load_config(&common)?;
            let from = read_checkpoint(&checkpoint)?;
            if from.config.model != cfg.model {
                return Err(fail(Category::Checkpoint, "the checkpoint's model config differs from the run config"));
            }
            let start = Checkpoint { config: cfg, ..from };
            run_training(&common, start, Phase::Rl, &data, "rl.ckpt")?;
        }
        Command::Evaluate {
            common,
            checkpoint,
            corpus,
            beam,
        } => {
            let ck = read_checkpoint(&checkpoint)?;
            let corpus_data = read_corpus(&corpus)?;
            check_compatible(&ck, &corpus_data)?;
            let beam = beam.unwrap_or(ck.config.train.eval_beam);
            let report = evaluate(&ck.params, &ck.config.model, &corpus_data, beam, Workers(common.workers))?;
            let dir = out_dir(&common)?;
            let vocab = &corpus_data.vocab;
            let mut text = String::from("id,reference,hypothesis,distance\n");
            for r in &report.rows {
                text.push_str(&format!(
                    "{},{},{},{}\n",
                    r.id,
                    vocab.render(&r.reference),
                    vocab.render(&r.hypothesis),
                    r.edits
                ));
            }
            let path = dir.join("eval.csv");
            fs::write(&path, text)?;
            println!(
                "CER {:.2}% over {} utterances (beam {beam}); rows in {}",
                100.0 * report.pooled_cer,
                report.rows.len(),
                path.display()
            );
        }
        Command::Decode {
            checkpoint,
            corpus,
            utt,
            beam,
        } => {
            let ck = read_checkpoint(&checkpoint)?;
            let corpus_data = read_corpus(&corpus)?;
            check_compatible(&ck, &corpus_data)?;
            let u = match &utt {
                Some(id) => corpus_data.utterances.iter().find(|u| &u.id == id),
                None => corpus_data.utterances.first(),
            };
            let Some(u) = u else {
                return Err(fail(
                    Category::Data,
                    match &utt {
                        Some(id) => format!("utterance {id} not found in {}", corpus.display()),
                        None => format!("{} has no utterances", corpus.display()),
                    },
                ));
            };
            let beam = beam.unwrap_or(ck.config.train.eval_beam);
            let h = decode(&u.features, &ck.params, &ck.config.model, beam)?;
            println!("{}\t{}", u.id, corpus_data.vocab.render(&h.graphemes));
        }
        Command::OracleCheck { seed } => {
            let results = seqrl::oracle::self_check(seed);
            for r in &results {
                println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            if results.iter().any(|r| !r.pass) {
                return Err(fail(Category::Numeric, "oracle checks failed"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let c = categorize(&e);
            eprintln!("error[{}]: {e:#}", c.label());
            ExitCode::from(c as u8)
        }
    }
}
