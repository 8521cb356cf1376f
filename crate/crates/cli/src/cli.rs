//! Argument parsing and subcommand dispatch.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use clap::{Args, Parser, Subcommand};
use tglm_core::corpus::{generate_synthetic_corpus, SynthConfig};
use tglm_core::eval::{write_reports, MetricsReport};
use tglm_core::Rng;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::eval::{eval_coherence, eval_ppl, eval_probe, random_topic_coherence, show_topics, Split};
use crate::experiment::NULL_MODEL;
use crate::models::{run_dir, train_run, ModelSpec, MODEL_FILE};
use crate::prep::{run_preprocess, Prepared};
use crate::report::render_files;

pub const DATA_DIR_ENV: &str = "TGLM_DATA_DIR";
const DEFAULT_DATA_DIR: &str = "tglm-data";

#[derive(Parser, Debug)]
#[command(name = "tglm", version, about = "Topic-guided language model benchmark")]
pub struct Cli {
    /// Artifact root (default: $TGLM_DATA_DIR, else ./tglm-data).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Run configuration file (key = value lines, `include = file` allowed).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override a configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Build vocabularies, topic vocabularies and bag-of-words caches.
    Preprocess(PreprocessArgs),
    /// Generate a synthetic topical corpus.
    Synth(SynthArgs),
    /// Train a model for one or more seeds.
    Train(TrainArgs),
    /// Evaluate trained models.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Print the top words of every topic.
    Topics(TopicsArgs),
    /// Render report files as a `mean (std)` table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// Directory holding the corpus files named by the configuration.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub min_count: Option<usize>,
    /// Stop list file (`none` for no stop words).
    #[arg(long)]
    pub stop_list: Option<String>,
    /// Output directory (default: <data-dir>/prep).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub docs: usize,
    #[arg(long, default_value_t = 500)]
    pub doc_len: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 600)]
    pub v: usize,
    #[arg(long, default_value_t = 10.0)]
    pub sharpness: f64,
    #[arg(long, default_value_t = 1)]
    pub syntax_order: u8,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct Seeds {
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub seeds: Vec<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// lstm, lstm-sentence, lstm-gru, topicrnn, vrtm, tdlm or lda.
    #[arg(long)]
    pub model: String,
    #[command(flatten)]
    pub seeds: Seeds,
    /// Conditioning of plain `lstm`: document or sentence.
    #[arg(long)]
    pub conditioning: Option<String>,
    /// Overrides the `max_epochs` setting.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Continue from the last epoch checkpoint of each run.
    #[arg(long)]
    pub resume: bool,
    /// Stop after this many epochs in this invocation.
    #[arg(long)]
    pub stop_after: Option<usize>,
    /// Train the seeds in parallel child processes.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Args, Debug)]
pub struct ModelSelect {
    /// lstm, lstm-sentence, lstm-gru, topicrnn, vrtm, tdlm or lda.
    #[arg(long)]
    pub model: Option<String>,
    #[command(flatten)]
    pub seeds: Seeds,
    /// Evaluate this checkpoint instead of the model's runs.
    #[arg(long, conflicts_with = "model")]
    pub ckpt: Option<PathBuf>,
    /// Also append the reports to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum EvalCmd {
    /// Document-level causal perplexity.
    Ppl {
        #[command(flatten)]
        select: ModelSelect,
        #[arg(long, default_value = "test")]
        split: String,
        /// Tokens between refreshes of the prefix topic estimate.
        #[arg(long)]
        window: Option<usize>,
    },
    /// NPMI topic coherence (top 5/10/15/20 words).
    Coherence {
        #[command(flatten)]
        select: ModelSelect,
        /// Also score random word sets as a baseline.
        #[arg(long)]
        null: bool,
    },
    /// Linear probes from LM hidden states to topic proportions.
    Probe {
        /// Language model whose hidden states are probed.
        #[arg(long, default_value = "lstm")]
        lm: String,
        /// Topic-guided model supplying the targets.
        #[arg(long, default_value = "tdlm")]
        tglm: String,
        #[command(flatten)]
        seeds: Seeds,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct TopicsArgs {
    /// lda, topicrnn, vrtm or tdlm.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, conflicts_with = "model")]
    pub ckpt: Option<PathBuf>,
    /// Words per topic.
    #[arg(long, default_value_t = 10)]
    pub show: usize,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub files: Vec<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub decimals: usize,
    /// Only these metrics (repeatable).
    #[arg(long = "metric")]
    pub metrics: Vec<String>,
}

pub fn data_dir(cli: &Cli) -> PathBuf {
    cli.data_dir
        .clone()
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

/// Configuration file, then `--set` overrides.
pub fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    Ok(cfg)
}

fn emit(out: &mut dyn Write, reports: &[MetricsReport], file: Option<&Path>) -> CliResult<()> {
    for r in reports {
        writeln!(out, "{}", r.to_json_line()).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    }
    if let Some(f) = file {
        write_reports(f, reports, true)?;
    }
    Ok(())
}

fn checkpoints(root: &Path, cfg: &RunConfig, select: &ModelSelect) -> CliResult<Vec<PathBuf>> {
    if let Some(p) = &select.ckpt {
        return Ok(vec![p.clone()]);
    }
    let name = select
        .model
        .as_deref()
        .ok_or_else(|| CliError::Usage("give --model or --ckpt".into()))?;
    let spec = ModelSpec::parse(name, cfg)?;
    Ok(select.seeds.seeds.iter().map(|&s| run_dir(root, spec, s).join(MODEL_FILE)).collect())
}

fn write_line(out: &mut dyn Write, s: &str) -> CliResult<()> {
    write!(out, "{s}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn train_parallel(args: &TrainArgs) -> CliResult<()> {
    let exe = std::env::current_exe().map_err(|e| CliError::io(Path::new("tglm"), e))?;
    let base: Vec<String> = std::env::args().skip(1).filter(|a| a != "--parallel").collect();
    let mut children = Vec::new();
    for &seed in &args.seeds.seeds {
        let mut argv = Vec::new();
        let mut skip = false;
        for a in &base {
            if skip {
                skip = false;
                continue;
            }
            if a == "--seeds" {
                skip = true;
                continue;
            }
            if a.starts_with("--seeds=") {
                continue;
            }
            argv.push(a.clone());
        }
        argv.push(format!("--seeds={seed}"));
        let child = Command::new(&exe).args(&argv).spawn().map_err(|e| CliError::io(&exe, e))?;
        children.push((seed, child));
    }
    let mut failed = Vec::new();
    for (seed, mut c) in children {
        let status = c.wait().map_err(|e| CliError::io(&exe, e))?;
        if !status.success() {
            failed.push(seed.to_string());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(tglm_core::Error::Training(format!("seeds {} failed", failed.join(","))).into())
    }
}

/// Runs a parsed command line, writing results to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    let root = data_dir(cli);
    let mut cfg = load_config(cli)?;
    let prep_dir = root.join("prep");
    match &cli.command {
        Cmd::Preprocess(a) => {
            if let Some(m) = a.min_count {
                cfg.set("min_count", &m.to_string())?;
            }
            if let Some(s) = &a.stop_list {
                cfg.set("stop_list", s)?;
            }
            let dir = a.out.clone().unwrap_or(prep_dir);
            let prep = run_preprocess(&cfg, a.corpus.as_deref(), &dir)?;
            write_line(
                out,
                &format!(
                    "vocab_size={}\ntopic_vocab_size={}\ntopic_vocab_df_size={}\nprep_hash={}\n",
                    prep.vocab.len(),
                    prep.tv.len(),
                    prep.tv_df.len(),
                    prep.prep_hash()
                ),
            )?;
        }
        Cmd::Synth(a) => {
            let sc = SynthConfig {
                k: a.k,
                v: a.v,
                docs: a.docs,
                doc_len: a.doc_len,
                topic_sharpness: a.sharpness,
                syntax_order: a.syntax_order,
                ..SynthConfig::default()
            };
            let corpus = generate_synthetic_corpus(&sc, &Rng::new(a.seed))?;
            corpus.write(&a.out)?;
            write_line(out, &format!("wrote {} tokens to {}\n", corpus.num_tokens(), a.out.display()))?;
        }
        Cmd::Train(a) => {
            if let Some(c) = &a.conditioning {
                cfg.set("conditioning", c)?;
            }
            if let Some(e) = a.max_epochs {
                cfg.set("max_epochs", &e.to_string())?;
            }
            let spec = ModelSpec::parse(&a.model, &cfg)?;
            if a.parallel && a.seeds.seeds.len() > 1 {
                return train_parallel(a);
            }
            let prep = Prepared::load(&prep_dir)?;
            for &seed in &a.seeds.seeds {
                let dir = run_dir(&root, spec, seed);
                let s = train_run(&prep, &cfg, spec, seed, &dir, a.resume, a.stop_after)?;
                let best = s.best_valid_ppl.map_or("-".to_string(), |p| format!("{p:.3}"));
                write_line(
                    out,
                    &format!(
                        "{} seed {seed}: epochs {} best valid ppl {best} config {} -> {}\n",
                        s.model,
                        s.history.len(),
                        s.config_hash,
                        if s.finished { s.checkpoint.display().to_string() } else { "interrupted".into() }
                    ),
                )?;
            }
        }
        Cmd::Eval(e) => {
            let prep = Prepared::load(&prep_dir)?;
            match e {
                EvalCmd::Ppl { select, split, window } => {
                    let split = Split::parse(split)?;
                    let mut reports = Vec::new();
                    for ck in checkpoints(&root, &cfg, select)? {
                        reports.push(eval_ppl(&prep, &ck, split, *window)?);
                    }
                    emit(out, &reports, select.out.as_deref())?;
                }
                EvalCmd::Coherence { select, null } => {
                    let mut reports = Vec::new();
                    for ck in checkpoints(&root, &cfg, select)? {
                        reports.extend(eval_coherence(&prep, &cfg, &ck)?);
                    }
                    if *null {
                        let hash = cfg.hash(NULL_MODEL);
                        for &seed in &select.seeds.seeds {
                            let c = random_topic_coherence(&prep, &cfg, cfg.parse("k")?, seed)?;
                            reports.extend(crate::eval::coherence_reports(NULL_MODEL, seed, &hash, &c)?);
                        }
                    }
                    emit(out, &reports, select.out.as_deref())?;
                }
                EvalCmd::Probe { lm, tglm, seeds, out: file } => {
                    let lm = ModelSpec::parse(lm, &cfg)?;
                    let tglm = ModelSpec::parse(tglm, &cfg)?;
                    let mut reports = Vec::new();
                    for &seed in &seeds.seeds {
                        let o = eval_probe(
                            &prep,
                            &cfg,
                            &run_dir(&root, lm, seed).join(MODEL_FILE),
                            &run_dir(&root, tglm, seed).join(MODEL_FILE),
                        )?;
                        reports.extend(o.reports);
                    }
                    emit(out, &reports, file.as_deref())?;
                }
            }
        }
        Cmd::Topics(a) => {
            let prep = Prepared::load(&prep_dir)?;
            let ck = match (&a.ckpt, &a.model) {
                (Some(p), _) => p.clone(),
                (None, Some(m)) => run_dir(&root, ModelSpec::parse(m, &cfg)?, a.seed).join(MODEL_FILE),
                (None, None) => return Err(CliError::Usage("give --model or --ckpt".into())),
            };
            write_line(out, &show_topics(&prep, &ck, a.show)?)?;
        }
        Cmd::Report(a) => {
            let paths: Vec<&Path> = a.files.iter().map(PathBuf::as_path).collect();
            let keep = (!a.metrics.is_empty()).then_some(a.metrics.as_slice());
            write_line(out, &render_files(&paths, a.decimals, keep)?)?;
        }
    }
    Ok(())
}
