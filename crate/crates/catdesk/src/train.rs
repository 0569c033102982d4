//! Minibatch training with a deterministic multi-threaded gradient reduction,
//! plus inference and evaluation helpers.

use anyhow::{bail, Context};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use catdesk_core::am::{optimizer_step, utterance_loss, ModelDims, ModelParams, OptimState};
use catdesk_core::data::Utterance;
use catdesk_core::decode::{beam_decode, greedy_decode, DecodeOptions, ErrorTally};
use catdesk_core::fst::{Label, Wfst};
use catdesk_core::lm::{DenominatorGraph, NGramLm};
use catdesk_core::loss::{LossReport, Objective};
use catdesk_core::streaming::{csf_training_loss, plan_chunks, run_chunked, sf_infer, ChunkPlan, TwinConfig};
use catdesk_core::{am::am_forward, Error, FrameLogits, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TrainMode {
    Whole,
    Csf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LossKind {
    Crf,
    Ctc,
}

/// How logits are produced at test time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inference {
    Whole,
    /// Context-sensitive chunks with zeroed states, no jitter.
    Chunked(ChunkPlan),
    /// Context-free chunks with the forward state carried across chunks.
    CarryOver { chunk_size: usize },
}

pub fn infer_logits(params: &ModelParams, features: &Matrix, inference: Inference) -> catdesk_core::Result<FrameLogits> {
    match inference {
        Inference::Whole => Ok(am_forward(params, features, None)?.0),
        Inference::Chunked(plan) => {
            let layout = plan_chunks(features.rows(), &plan, None);
            Ok(run_chunked(params, features, &layout)?.logits)
        }
        Inference::CarryOver { chunk_size } => sf_infer(params, features, chunk_size),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Decoder<'a> {
    Greedy,
    Graph(&'a Wfst, DecodeOptions),
}

impl Decoder<'_> {
    pub fn decode(&self, logits: &FrameLogits) -> catdesk_core::Result<(Vec<Label>, f64)> {
        match self {
            Decoder::Greedy => Ok((greedy_decode(logits).into_vec(), 0.0)),
            Decoder::Graph(g, opts) => {
                let h = beam_decode(g, logits, *opts)?;
                Ok((h.tokens, h.score))
            }
        }
    }
}

/// Label error tally over `utts`. Utterances the decoder cannot finish count as
/// empty hypotheses.
pub fn evaluate(params: &ModelParams, utts: &[Utterance], inference: Inference, decoder: &Decoder<'_>) -> anyhow::Result<ErrorTally> {
    let mut tally = ErrorTally::default();
    for u in utts {
        let logits = infer_logits(params, &u.features, inference)?;
        let hyp = match decoder.decode(&logits) {
            Ok((tokens, _)) => tokens,
            Err(Error::NoPath | Error::AllPathsPruned { .. }) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        tally.add(&u.transcript, &hyp);
    }
    Ok(tally)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub loss: LossKind,
    pub d_h: usize,
    pub epochs: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub workers: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub plan: ChunkPlan,
    pub seed: u64,
    /// Logits used for dev scoring.
    pub inference: Inference,
}

pub struct TrainData<'a> {
    pub train: &'a [Utterance],
    pub dev: &'a [Utterance],
    pub den: Option<&'a DenominatorGraph>,
    /// Edge potential reported with the CRF loss; it has no gradient.
    pub lm: Option<&'a NGramLm>,
    pub teacher: Option<&'a ModelParams>,
    pub decoder: Decoder<'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-utterance training loss.
    pub loss: f64,
    pub dev_per: f64,
    pub skipped: usize,
}

impl std::fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {:.6} {:.3}", self.epoch, self.loss, 100.0 * self.dev_per)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: ModelParams,
    pub best_epoch: usize,
    pub best_dev_per: f64,
    pub history: Vec<EpochRecord>,
}

struct Step {
    loss: f64,
    grads: ModelParams,
}

fn utterance_step(
    params: &ModelParams,
    u: &Utterance,
    objective: &Objective<'_>,
    cfg: &TrainConfig,
    twin: Option<&TwinConfig>,
    jitter_draw: u64,
) -> catdesk_core::Result<Step> {
    match cfg.mode {
        TrainMode::Whole => {
            let (report, grads): (LossReport, _) = utterance_loss(params, &u.features, &u.transcript, objective)?;
            Ok(Step {
                loss: report.total,
                grads,
            })
        }
        TrainMode::Csf => {
            let r = csf_training_loss(params, &u.features, &u.transcript, objective, &cfg.plan, Some(jitter_draw), twin)?;
            Ok(Step {
                loss: r.total,
                grads: r.grads,
            })
        }
    }
}

/// Trains from a seeded initialization. `on_epoch` sees every record, the
/// current parameters and whether they are the best so far on dev.
pub fn train(
    cfg: &TrainConfig,
    data: &TrainData<'_>,
    mut on_epoch: impl FnMut(&EpochRecord, &ModelParams, bool) -> anyhow::Result<()>,
) -> anyhow::Result<TrainOutcome> {
    let Some(first) = data.train.first() else {
        bail!("training set is empty");
    };
    let dims = ModelDims {
        d_in: first.features.cols(),
        d_h: cfg.d_h,
        num_outputs: match data.den {
            Some(den) => den.alphabet().num_emissions(),
            None => data
                .train
                .iter()
                .flat_map(|u| u.transcript.iter().copied())
                .max()
                .map_or(1, |l| l as usize),
        },
    };
    let objective = match cfg.loss {
        LossKind::Crf => Objective::CtcCrf {
            den: data.den.context("CTC-CRF training needs a denominator graph (run build-den)")?,
            lm: data.lm,
            alpha: cfg.alpha,
        },
        LossKind::Ctc => Objective::Ctc,
    };
    let twin = match cfg.mode {
        TrainMode::Csf => {
            let teacher = data
                .teacher
                .context("csf training needs a whole-utterance teacher checkpoint")?;
            if teacher.dims() != dims {
                bail!("teacher shape {:?} does not match the student {:?}", teacher.dims(), dims);
            }
            Some(TwinConfig {
                lambda: cfg.lambda,
                teacher: teacher.clone(),
            })
        }
        TrainMode::Whole => None,
    };
    if cfg.batch_size == 0 {
        bail!("batch_size must be at least 1");
    }

    let mut params = ModelParams::init(dims, cfg.seed);
    let mut opt = OptimState::new(&params, cfg.lr, cfg.clip_norm);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let workers = cfg.workers.max(1);
    let mut step_index: u64 = 0;
    let mut outcome = TrainOutcome {
        best: params.clone(),
        best_epoch: 0,
        best_dev_per: f64::INFINITY,
        history: Vec::new(),
    };

    for epoch in 1..=cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        order.shuffle(&mut rng);
        let (mut loss_sum, mut counted, mut skipped) = (0.0, 0usize, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let draw = step_index;
            step_index += 1;
            let results = run_batch(batch, workers, |i| {
                utterance_step(&params, &data.train[i], &objective, cfg, twin.as_ref(), draw)
            });
            let mut grads = ModelParams::zeros(dims);
            let mut used = 0usize;
            for r in results {
                match r {
                    Ok(step) => {
                        loss_sum += step.loss;
                        counted += 1;
                        used += 1;
                        grads.add_scaled(&step.grads, 1.0);
                    }
                    Err(Error::Infeasible { .. } | Error::NoPath) => skipped += 1,
                    Err(e) => return Err(e.into()),
                }
            }
            if used == 0 {
                continue;
            }
            let mut mean = ModelParams::zeros(dims);
            mean.add_scaled(&grads, 1.0 / used as f64);
            optimizer_step(&mut params, &mean, &mut opt)?;
        }
        let dev = evaluate(&params, data.dev, cfg.inference, &data.decoder)?;
        let record = EpochRecord {
            epoch,
            loss: if counted > 0 { loss_sum / counted as f64 } else { f64::NAN },
            dev_per: dev.rate(),
            skipped,
        };
        let is_best = record.dev_per < outcome.best_dev_per;
        if is_best {
            outcome.best = params.clone();
            outcome.best_epoch = epoch;
            outcome.best_dev_per = record.dev_per;
        }
        on_epoch(&record, &params, is_best)?;
        outcome.history.push(record);
    }
    Ok(outcome)
}

/// Evaluates `f` on every index, split across `workers` scoped threads, and
/// returns results in batch order so the reduction does not depend on timing.
fn run_batch<T: Send>(batch: &[usize], workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if workers <= 1 || batch.len() <= 1 {
        return batch.iter().map(|&i| f(i)).collect();
    }
    let per = batch.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = batch
            .chunks(per)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(|&i| f(i)).collect::<Vec<T>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
