//! The `catdesk` command line.

use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use catdesk_core::am::ModelParams;
use catdesk_core::data::{synth_corpus, SynthSpec, Utterance};
use catdesk_core::decode::{build_decode_graph, DecodeOptions, Lexicon};
use catdesk_core::fst::{Label, Wfst};
use catdesk_core::lm::{build_denominator, estimate_ngram, DenominatorGraph, NGramLm};
use catdesk_core::streaming::{context_latency_ms, plan_chunks, run_chunked, ChunkPlan, StreamingRecognizer};
use catdesk_core::topology::build_ctc_topology;

use crate::arpa::{read_arpa, write_arpa};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::{ConfigError, RunConfig};
use crate::corpus::{read_corpus, write_corpus};
use crate::fst_text::{read_fst, write_fst};
use crate::lexicon::read_lexicon;
use crate::score::{format_tally, read_hyps, score, HypLine};
use crate::symbols::SymbolTable;
use crate::train::{evaluate, infer_logits, train, Decoder, Inference, LossKind, TrainConfig, TrainData, TrainMode};

pub const UNITS_FILE: &str = "units.txt";
pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

#[derive(Debug, Parser)]
#[command(name = "catdesk", version, about = "CTC-CRF training, decoding and streaming on synthetic corpora")]
pub struct Cli {
    /// `key=value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Configuration override, `key=value`; may be repeated.
    #[arg(long = "set", short = 's', global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with train, dev and test splits.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the label n-gram model from the training transcripts.
    TrainLm {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compile the denominator graph from the label model.
    BuildDen {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an acoustic model.
    Train {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, value_enum, default_value_t = TrainMode::Whole)]
        mode: TrainMode,
        #[arg(long, value_enum, default_value_t = LossKind::Crf)]
        loss: LossKind,
        #[arg(long)]
        den: Option<PathBuf>,
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        teacher: Option<PathBuf>,
        /// Dev-set inference; defaults to `whole` or `chunked` by mode.
        #[arg(long, value_enum)]
        inference: Option<InferenceArg>,
        /// Metrics log, appended to; defaults to `<out>.log`.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode a split and write hypotheses.
    Decode {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        model: Option<PathBuf>,
        /// ARPA model; a label model unless `--lexicon` is given.
        #[arg(long)]
        lm: Option<PathBuf>,
        /// `word unit unit ...` lines; the `--lm` model is then over words.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = InferenceArg::Whole)]
        inference: InferenceArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score hypotheses against references.
    Score {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
    },
    /// Stream one utterance frame by frame and report emission lag.
    StreamDemo {
        #[command(flatten)]
        data: DataArg,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        utt: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Corpus root written by `synth`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InferenceArg {
    Whole,
    Chunked,
    CarryOver,
}

/// A failure that should exit with the usage status.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

impl From<ConfigError> for UsageError {
    fn from(e: ConfigError) -> Self {
        Self(e.to_string())
    }
}

pub fn main_with_args<I, T>(args: I, env: impl IntoIterator<Item = (String, String)>) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, env) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

pub fn load_config(
    file: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
    overrides: &[String],
) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = file {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_text(&text, &path.display().to_string())
            .map_err(UsageError::from)?;
    }
    cfg.apply_env(env).map_err(UsageError::from)?;
    cfg.apply_overrides(overrides).map_err(UsageError::from)?;
    Ok(cfg)
}

fn run(cli: Cli, env: impl IntoIterator<Item = (String, String)>) -> anyhow::Result<()> {
    let mut cfg = load_config(cli.config.as_deref(), env, &cli.overrides)?;
    match cli.command {
        Command::Synth { out } => cmd_synth(&cfg, &out),
        Command::TrainLm { data, out } => {
            pick(&mut cfg.data_dir, data.data);
            cmd_train_lm(&cfg, &out)
        }
        Command::BuildDen { data, lm, out } => {
            pick(&mut cfg.data_dir, data.data);
            pick(&mut cfg.lm_path, lm);
            cmd_build_den(&cfg, &out)
        }
        Command::Train {
            data,
            mode,
            loss,
            den,
            lm,
            teacher,
            inference,
            log,
            out,
        } => {
            pick(&mut cfg.data_dir, data.data);
            pick(&mut cfg.den_path, den);
            pick(&mut cfg.lm_path, lm);
            pick(&mut cfg.teacher_path, teacher);
            pick(&mut cfg.log_path, log);
            let inference = inference.unwrap_or(match mode {
                TrainMode::Whole => InferenceArg::Whole,
                TrainMode::Csf => InferenceArg::Chunked,
            });
            cmd_train(&cfg, mode, loss, inference, &out)
        }
        Command::Decode {
            data,
            split,
            model,
            lm,
            lexicon,
            inference,
            out,
        } => {
            pick(&mut cfg.data_dir, data.data);
            pick(&mut cfg.model_path, model);
            pick(&mut cfg.lm_path, lm);
            cmd_decode(&cfg, &split, lexicon.as_deref(), inference, &out)
        }
        Command::Score { reference, hyp } => cmd_score(&reference, &hyp),
        Command::StreamDemo {
            data,
            split,
            utt,
            model,
        } => {
            pick(&mut cfg.data_dir, data.data);
            pick(&mut cfg.model_path, model);
            cmd_stream_demo(&cfg, &split, utt.as_deref())
        }
    }
}

fn pick(slot: &mut Option<PathBuf>, flag: Option<PathBuf>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str, flag: &str) -> Result<&'a Path, UsageError> {
    p.as_deref()
        .ok_or_else(|| UsageError(format!("missing {flag} (or `{key}` in the config)")))
}

pub fn synth_spec(cfg: &RunConfig) -> SynthSpec {
    SynthSpec {
        corpus_size: cfg.corpus_size,
        ..SynthSpec::new(cfg.alphabet, cfg.d_in, cfg.sigma, cfg.seed)
    }
}

fn read_units(data: &Path) -> anyhow::Result<SymbolTable> {
    let path = data.join(UNITS_FILE);
    let file = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(SymbolTable::read(file.as_slice(), &path.display().to_string())?)
}

fn read_split(data: &Path, split: &str, units: &SymbolTable) -> anyhow::Result<Vec<Utterance>> {
    Ok(read_corpus(&data.join(split), units)?)
}

fn read_lm(path: &Path, symbols: &mut SymbolTable) -> anyhow::Result<NGramLm> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(read_arpa(bytes.as_slice(), &path.display().to_string(), symbols)?)
}

fn read_den(path: &Path, units: &SymbolTable) -> anyhow::Result<DenominatorGraph> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let graph = read_fst(bytes.as_slice(), &path.display().to_string())?;
    let alphabet = units.alphabet().map_err(anyhow::Error::msg)?;
    Ok(DenominatorGraph::from_parts(graph, alphabet)?)
}

/// A label LM must not introduce symbols beyond the unit table.
fn read_label_lm(path: &Path, units: &SymbolTable) -> anyhow::Result<NGramLm> {
    let mut table = units.clone();
    let lm = read_lm(path, &mut table)?;
    if table.len() != units.len() {
        let extra: Vec<&str> = table
            .symbol_ids()
            .filter(|&id| units.name(id).is_none())
            .filter_map(|id| table.name(id))
            .collect();
        bail!("{} uses symbols missing from {UNITS_FILE}: {extra:?}", path.display());
    }
    Ok(lm)
}

pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let spec = synth_spec(cfg);
    let corpus = synth_corpus(&spec).map_err(|e| UsageError(e.to_string()))?;
    let units = SymbolTable::for_units(spec.alphabet()?);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join(UNITS_FILE), units.to_text())?;
    for (split, utts) in SPLITS.iter().zip([&corpus.train, &corpus.dev, &corpus.test]) {
        write_corpus(&out.join(split), utts, &units)?;
    }
    println!(
        "wrote {} train, {} dev, {} test utterances to {}",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_train_lm(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let data = required(&cfg.data_dir, "data_dir", "--data")?;
    let units = read_units(data)?;
    let train = read_split(data, "train", &units)?;
    let vocab: Vec<Label> = units.symbol_ids().collect();
    let transcripts: Vec<&[Label]> = train.iter().map(|u| &u.transcript[..]).collect();
    let lm = estimate_ngram(&transcripts, &vocab, cfg.lm_order)?;
    fs::write(out, write_arpa(&lm, &units)).with_context(|| format!("writing {}", out.display()))?;
    println!("order {} counts {:?} -> {}", lm.order(), lm.counts(), out.display());
    Ok(())
}

pub fn cmd_build_den(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let data = required(&cfg.data_dir, "data_dir", "--data")?;
    let lm_path = required(&cfg.lm_path, "lm_path", "--lm")?;
    let units = read_units(data)?;
    let lm = read_label_lm(lm_path, &units)?;
    let alphabet = units.alphabet().map_err(anyhow::Error::msg)?;
    let den = build_denominator(&build_ctc_topology(alphabet), &lm)?;
    fs::write(out, write_fst(den.graph())).with_context(|| format!("writing {}", out.display()))?;
    println!(
        "denominator graph: {} states, {} arcs -> {}",
        den.graph().num_states(),
        den.graph().num_arcs(),
        out.display()
    );
    Ok(())
}

fn inference_for(arg: InferenceArg, cfg: &RunConfig) -> Inference {
    match arg {
        InferenceArg::Whole => Inference::Whole,
        InferenceArg::Chunked => Inference::Chunked(ChunkPlan {
            jitter_fraction: 0.0,
            ..cfg.chunk_plan()
        }),
        InferenceArg::CarryOver => Inference::CarryOver {
            chunk_size: cfg.chunk_size,
        },
    }
}

fn decode_options(cfg: &RunConfig) -> DecodeOptions {
    DecodeOptions {
        beam: cfg.beam,
        max_active: cfg.max_active,
        lm_scale: cfg.lm_scale,
    }
}

pub fn cmd_train(cfg: &RunConfig, mode: TrainMode, loss: LossKind, inference: InferenceArg, out: &Path) -> anyhow::Result<()> {
    let data = required(&cfg.data_dir, "data_dir", "--data")?;
    let units = read_units(data)?;
    let alphabet = units.alphabet().map_err(anyhow::Error::msg)?;
    let train_set = read_split(data, "train", &units)?;
    let dev_set = read_split(data, "dev", &units)?;
    let den = match (loss, &cfg.den_path) {
        (LossKind::Crf, None) => {
            return Err(UsageError("--loss crf needs a denominator graph: pass --den (see `catdesk build-den`)".into()).into())
        }
        (LossKind::Crf, Some(p)) => Some(read_den(p, &units)?),
        (LossKind::Ctc, _) => None,
    };
    let lm = match &cfg.lm_path {
        Some(p) => Some(read_label_lm(p, &units)?),
        None => None,
    };
    let teacher = match (mode, &cfg.teacher_path) {
        (TrainMode::Csf, None) => {
            return Err(UsageError("--mode csf needs a whole-utterance teacher: pass --teacher".into()).into())
        }
        (TrainMode::Csf, Some(p)) => Some(load_checkpoint(p)?),
        (TrainMode::Whole, _) => None,
    };
    let graph = match &lm {
        Some(lm) => Some(build_decode_graph(&build_ctc_topology(alphabet), &Lexicon::identity(alphabet), lm)?),
        None => None,
    };
    let decoder = match &graph {
        Some(g) => Decoder::Graph(g, decode_options(cfg)),
        None => Decoder::Greedy,
    };
    let tc = TrainConfig {
        mode,
        loss,
        d_h: cfg.d_h,
        epochs: cfg.epochs,
        lr: cfg.lr,
        clip_norm: cfg.clip_norm,
        batch_size: cfg.batch_size,
        workers: cfg.worker_count(),
        alpha: cfg.alpha,
        lambda: cfg.lambda,
        plan: cfg.chunk_plan(),
        seed: cfg.seed,
        inference: inference_for(inference, cfg),
    };
    let log_path = cfg.log_path.clone().unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".log");
        PathBuf::from(p)
    });
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)
        .with_context(|| format!("opening {}", log_path.display()))?;
    let td = TrainData {
        train: &train_set,
        dev: &dev_set,
        den: den.as_ref(),
        lm: lm.as_ref(),
        teacher: teacher.as_ref(),
        decoder,
    };
    let outcome = train(&tc, &td, |rec, params, best| {
        println!("{rec}{}", if best { " *" } else { "" });
        writeln!(log, "{rec}")?;
        if best {
            save_checkpoint(out, params)?;
        }
        Ok(())
    })?;
    println!(
        "best dev PER {:.3} at epoch {} -> {}",
        100.0 * outcome.best_dev_per,
        outcome.best_epoch,
        out.display()
    );
    Ok(())
}

fn load_model(cfg: &RunConfig, alphabet_emissions: usize) -> anyhow::Result<ModelParams> {
    let path = required(&cfg.model_path, "model_path", "--model")?;
    let params = load_checkpoint(path)?;
    if params.dims().num_outputs != alphabet_emissions {
        bail!(
            "{} has {} outputs but the unit table needs {}",
            path.display(),
            params.dims().num_outputs,
            alphabet_emissions
        );
    }
    Ok(params)
}

pub fn cmd_decode(
    cfg: &RunConfig,
    split: &str,
    lexicon: Option<&Path>,
    inference: InferenceArg,
    out: &Path,
) -> anyhow::Result<()> {
    let data = required(&cfg.data_dir, "data_dir", "--data")?;
    let units = read_units(data)?;
    let alphabet = units.alphabet().map_err(anyhow::Error::msg)?;
    let params = load_model(cfg, alphabet.num_emissions())?;
    let utts = read_split(data, split, &units)?;
    let topology = build_ctc_topology(alphabet);
    let (graph, words): (Option<Wfst>, SymbolTable) = match (lexicon, &cfg.lm_path) {
        (Some(lex_path), Some(lm_path)) => {
            let mut words = SymbolTable::new();
            let text = fs::read(lex_path).with_context(|| format!("reading {}", lex_path.display()))?;
            let lex = read_lexicon(text.as_slice(), &lex_path.display().to_string(), &units, &mut words)?;
            let lm = read_lm(lm_path, &mut words)?;
            (Some(build_decode_graph(&topology, &lex, &lm)?), words)
        }
        (Some(_), None) => return Err(UsageError("--lexicon needs a word model via --lm".into()).into()),
        (None, Some(lm_path)) => {
            let lm = read_label_lm(lm_path, &units)?;
            (
                Some(build_decode_graph(&topology, &Lexicon::identity(alphabet), &lm)?),
                units.clone(),
            )
        }
        (None, None) => (None, units.clone()),
    };
    let decoder = match &graph {
        Some(g) => Decoder::Graph(g, decode_options(cfg)),
        None => Decoder::Greedy,
    };
    let inference = inference_for(inference, cfg);
    let mut text = String::new();
    for u in &utts {
        let logits = infer_logits(&params, &u.features, inference)?;
        let (tokens, score) = decoder
            .decode(&logits)
            .with_context(|| format!("decoding {}", u.id))?;
        let line = HypLine {
            id: u.id.clone(),
            score: Some(score),
            tokens: tokens
                .iter()
                .map(|&t| words.name(t).map_or_else(|| format!("#{t}"), str::to_owned))
                .collect(),
        };
        text.push_str(&line.to_string());
        text.push('\n');
    }
    fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    if lexicon.is_none() {
        let tally = evaluate(&params, &utts, inference, &decoder)?;
        println!("{split}: {}", format_tally(&tally));
    }
    Ok(())
}

pub fn cmd_score(reference: &Path, hyp: &Path) -> anyhow::Result<()> {
    let read = |p: &Path| -> anyhow::Result<Vec<HypLine>> {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(read_hyps(bytes.as_slice(), &p.display().to_string())?)
    };
    let tally = score(&read(reference)?, &read(hyp)?)?;
    println!("{}", format_tally(&tally));
    Ok(())
}

pub fn cmd_stream_demo(cfg: &RunConfig, split: &str, utt: Option<&str>) -> anyhow::Result<()> {
    let data = required(&cfg.data_dir, "data_dir", "--data")?;
    let units = read_units(data)?;
    let alphabet = units.alphabet().map_err(anyhow::Error::msg)?;
    let params = load_model(cfg, alphabet.num_emissions())?;
    let utts = read_split(data, split, &units)?;
    let u = match utt {
        Some(id) => utts
            .iter()
            .find(|u| u.id == id)
            .with_context(|| format!("no utterance `{id}` in {split}"))?,
        None => utts.first().with_context(|| format!("{split} is empty"))?,
    };
    let plan = ChunkPlan {
        jitter_fraction: 0.0,
        ..cfg.chunk_plan()
    };
    let mut rec = StreamingRecognizer::new(&params, &plan)?;
    let mut emitted = Vec::new();
    println!("frame lag");
    for t in 0..u.features.rows() {
        for e in rec.push(t, u.features.row(t))? {
            println!("{} {}", e.frame, e.lag);
            emitted.push(e);
        }
    }
    for e in rec.finish()? {
        println!("{} {}", e.frame, e.lag);
        emitted.push(e);
    }
    let bound = plan.chunk_size + plan.right_context;
    let max_lag = emitted.iter().map(|e| e.lag).max().unwrap_or(0);
    let batch = run_chunked(&params, &u.features, &plan_chunks(u.features.rows(), &plan, None))?;
    let identical = emitted.len() == u.features.rows()
        && emitted
            .iter()
            .all(|e| e.logits.as_slice() == batch.logits.row(e.frame));
    println!(
        "utterance {} frames {} max-lag {} bound {} context-latency-ms {} matches-batch {}",
        u.id,
        u.features.rows(),
        max_lag,
        bound,
        context_latency_ms(plan.right_context, cfg.frame_shift_ms, cfg.sampling_factor),
        identical
    );
    if max_lag > bound {
        bail!("lag {max_lag} exceeds chunk_size + right_context = {bound}");
    }
    if !identical {
        bail!("streamed logits differ from the batch chunked pass");
    }
    Ok(())
}
