//! Contextualized soft forgetting: context-sensitive chunks, per-chunk state
//! resets, output splicing, twin regularization and streaming inference.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::am::{am_backward, am_forward, AmCache, HiddenTrace, InitialState, ModelParams};
use crate::loss::{LossReport, Objective};
use crate::topology::LabelSeq;
use crate::{Error, FrameLogits, Matrix, Result};

pub const DEFAULT_CHUNK_SIZE: usize = 40;
pub const DEFAULT_LEFT_CONTEXT: usize = 10;
pub const DEFAULT_RIGHT_CONTEXT: usize = 10;
pub const DEFAULT_JITTER: f64 = 0.25;
pub const DEFAULT_LAMBDA: f64 = 0.005;
pub const DEFAULT_FRAME_SHIFT_MS: f64 = 10.0;
pub const DEFAULT_SAMPLING_FACTOR: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChunkPlan {
    pub chunk_size: usize,
    pub left_context: usize,
    pub right_context: usize,
    /// Chunk sizes are drawn from `chunk_size * [1 - j, 1 + j]`; `j` in `[0, 1)`.
    pub jitter_fraction: f64,
    pub seed: u64,
}

impl Default for ChunkPlan {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK_SIZE,
            left_context: DEFAULT_LEFT_CONTEXT,
            right_context: DEFAULT_RIGHT_CONTEXT,
            jitter_fraction: DEFAULT_JITTER,
            seed: 0,
        }
    }
}

impl ChunkPlan {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_size == 0 {
            return Err(Error::Config("chunk_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.jitter_fraction) {
            return Err(Error::Config("jitter_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Chunk size for one minibatch. `None` means no jitter.
    pub fn realized_chunk_size(&self, jitter_draw: Option<u64>) -> usize {
        match jitter_draw {
            Some(draw) if self.jitter_fraction > 0.0 => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ draw.rotate_left(17));
                let lo = self.chunk_size as f64 * (1.0 - self.jitter_fraction);
                let hi = self.chunk_size as f64 * (1.0 + self.jitter_fraction);
                let size = rng.random_range(lo..=hi);
                (libm::round(size) as usize).max(1)
            }
            _ => self.chunk_size,
        }
    }
}

/// One context-sensitive chunk. Context ranges hold the real neighbouring frames;
/// the pads count zero frames standing in for context beyond the utterance edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    pub core: Range<usize>,
    pub left: Range<usize>,
    pub left_pad: usize,
    pub right: Range<usize>,
    pub right_pad: usize,
}

impl Chunk {
    fn new(core: Range<usize>, frames: usize, left: usize, right: usize) -> Self {
        let l0 = core.start.saturating_sub(left);
        let r1 = (core.end + right).min(frames);
        Self {
            left_pad: left - (core.start - l0),
            left: l0..core.start,
            right_pad: right - (r1 - core.end),
            right: core.end..r1,
            core,
        }
    }

    pub fn input_len(&self) -> usize {
        self.left_pad + self.left.len() + self.core.len() + self.right.len() + self.right_pad
    }

    /// Rows of the chunk input that belong to the core.
    pub fn core_rows(&self) -> Range<usize> {
        let s = self.left_pad + self.left.len();
        s..s + self.core.len()
    }

    /// Zero-padded context, then core, then zero-padded context.
    pub fn input(&self, features: &Matrix) -> Matrix {
        let width = features.cols();
        let mut m = Matrix::zeros(self.input_len(), width);
        for (row, t) in (self.left_pad..).zip(self.left.start..self.right.end) {
            m.row_mut(row).copy_from_slice(features.row(t));
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkLayout {
    frames: usize,
    chunks: Vec<Chunk>,
}

impl ChunkLayout {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    /// A single chunk covering the whole utterance with no context.
    pub fn whole(frames: usize) -> Self {
        Self {
            frames,
            chunks: vec![Chunk::new(0..frames, frames, 0, 0)],
        }
    }
}

/// Splits `[0, frames)` into consecutive cores of the (possibly jittered) chunk
/// size and attaches the context windows.
pub fn plan_chunks(frames: usize, plan: &ChunkPlan, jitter_draw: Option<u64>) -> ChunkLayout {
    let size = plan.realized_chunk_size(jitter_draw);
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < frames {
        let end = (start + size).min(frames);
        chunks.push(Chunk::new(
            start..end,
            frames,
            plan.left_context,
            plan.right_context,
        ));
        start = end;
    }
    ChunkLayout { frames, chunks }
}

/// Spliced output of a chunked forward pass.
#[derive(Debug, Clone)]
pub struct ChunkedOutput {
    pub logits: FrameLogits,
    pub trace: HiddenTrace,
    caches: Vec<AmCache>,
}

/// Runs every chunk independently from zero states and keeps the core rows.
pub fn run_chunked(
    params: &ModelParams,
    features: &Matrix,
    layout: &ChunkLayout,
) -> Result<ChunkedOutput> {
    if layout.frames != features.rows() {
        return Err(Error::Shape(format!(
            "layout covers {} frames, features have {}",
            layout.frames,
            features.rows()
        )));
    }
    let d = params.dims();
    let mut logits = Matrix::zeros(layout.frames, d.num_outputs);
    let mut trace = Matrix::zeros(layout.frames, 2 * d.d_h);
    let mut caches = Vec::with_capacity(layout.chunks.len());
    for chunk in &layout.chunks {
        let (out, hidden, cache) = am_forward(params, &chunk.input(features), None)?;
        for (row, t) in chunk.core_rows().zip(chunk.core.clone()) {
            logits.row_mut(t).copy_from_slice(out.row(row));
            trace.row_mut(t).copy_from_slice(hidden.as_matrix().row(row));
        }
        caches.push(cache);
    }
    Ok(ChunkedOutput {
        logits,
        trace: HiddenTrace::new(trace),
        caches,
    })
}

/// Backward through [`run_chunked`]: spliced gradients are scattered to the core
/// rows of each chunk; context rows receive none.
pub fn chunked_backward(
    params: &ModelParams,
    out: &ChunkedOutput,
    layout: &ChunkLayout,
    grad_logits: &Matrix,
    grad_hidden: Option<&Matrix>,
) -> Result<ModelParams> {
    let d = params.dims();
    let mut grads = ModelParams::zeros(d);
    for (chunk, cache) in layout.chunks.iter().zip(&out.caches) {
        let rows = chunk.input_len();
        let mut gl = Matrix::zeros(rows, d.num_outputs);
        let mut gh = grad_hidden.map(|_| Matrix::zeros(rows, 2 * d.d_h));
        for (row, t) in chunk.core_rows().zip(chunk.core.clone()) {
            gl.row_mut(row).copy_from_slice(grad_logits.row(t));
            if let (Some(gh), Some(src)) = (gh.as_mut(), grad_hidden) {
                gh.row_mut(row).copy_from_slice(src.row(t));
            }
        }
        grads.add_scaled(&am_backward(params, cache, &gl, gh.as_ref())?, 1.0);
    }
    Ok(grads)
}

/// Frozen whole-utterance teacher and the weight of its regularizer.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinConfig {
    pub lambda: f64,
    pub teacher: ModelParams,
}

/// `lambda * mean((student - teacher)^2)` and its gradient for the student.
pub fn twin_reg_loss(
    student: &HiddenTrace,
    teacher: &HiddenTrace,
    lambda: f64,
) -> Result<(f64, Matrix)> {
    let (s, t) = (student.as_matrix(), teacher.as_matrix());
    if (s.rows(), s.cols()) != (t.rows(), t.cols()) {
        return Err(Error::Shape(format!(
            "student trace {}x{} vs teacher {}x{}",
            s.rows(),
            s.cols(),
            t.rows(),
            t.cols()
        )));
    }
    let count = s.as_slice().len();
    let mut grad = Matrix::zeros(s.rows(), s.cols());
    if count == 0 || lambda == 0.0 {
        return Ok((0.0, grad));
    }
    let mut sum = 0.0;
    for ((g, a), b) in grad.as_mut_slice().iter_mut().zip(s.as_slice()).zip(t.as_slice()) {
        let diff = a - b;
        sum += diff * diff;
        *g = 2.0 * lambda * diff / count as f64;
    }
    Ok((lambda * sum / count as f64, grad))
}

#[derive(Debug, Clone)]
pub struct CsfReport {
    pub loss: LossReport,
    pub twin_loss: f64,
    /// `loss.total + twin_loss`.
    pub total: f64,
    pub grads: ModelParams,
}

/// Chunked training loss: the objective on spliced logits plus twin
/// regularization against the teacher's whole-utterance trace. Only the student
/// receives gradients.
pub fn csf_training_loss(
    student: &ModelParams,
    features: &Matrix,
    labels: &LabelSeq,
    objective: &Objective<'_>,
    plan: &ChunkPlan,
    jitter_draw: Option<u64>,
    twin: Option<&TwinConfig>,
) -> Result<CsfReport> {
    plan.validate()?;
    let layout = plan_chunks(features.rows(), plan, jitter_draw);
    let out = run_chunked(student, features, &layout)?;
    let loss = objective.evaluate(&out.logits, labels)?;
    let (twin_loss, grad_hidden) = match twin {
        Some(cfg) if cfg.lambda > 0.0 => {
            if cfg.teacher.dims() != student.dims() {
                return Err(Error::Shape("teacher and student shapes differ".into()));
            }
            let (_, teacher_trace, _) = am_forward(&cfg.teacher, features, None)?;
            let (l, g) = twin_reg_loss(&out.trace, &teacher_trace, cfg.lambda)?;
            (l, Some(g))
        }
        _ => (0.0, None),
    };
    let grads = chunked_backward(
        student,
        &out,
        &layout,
        &loss.grad_logits,
        grad_hidden.as_ref(),
    )?;
    Ok(CsfReport {
        total: loss.total + twin_loss,
        loss,
        twin_loss,
        grads,
    })
}

/// Soft-forgetting baseline inference: context-free chunks, forward state carried
/// over from the previous chunk, backward state reset.
pub fn sf_infer(params: &ModelParams, features: &Matrix, chunk_size: usize) -> Result<FrameLogits> {
    if chunk_size == 0 {
        return Err(Error::Config("chunk_size must be at least 1".into()));
    }
    let d = params.dims();
    let mut logits = Matrix::zeros(features.rows(), d.num_outputs);
    let mut carry = vec![0.0; d.d_h];
    let mut start = 0;
    while start < features.rows() {
        let end = (start + chunk_size).min(features.rows());
        let init = InitialState {
            forward: carry.clone(),
            backward: vec![0.0; d.d_h],
        };
        let (out, trace, _) = am_forward(params, &features.slice_rows(start..end), Some(&init))?;
        carry.copy_from_slice(trace.forward_state(end - start - 1));
        for t in start..end {
            logits.row_mut(t).copy_from_slice(out.row(t - start));
        }
        start = end;
    }
    Ok(logits)
}

/// Latency attributable to the right context, in milliseconds.
pub fn context_latency_ms(right_context: usize, frame_shift_ms: f64, sampling_factor: usize) -> f64 {
    right_context as f64 * frame_shift_ms * sampling_factor as f64
}

/// One emitted logits row.
#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub frame: usize,
    pub logits: Vec<f64>,
    /// Index of the last ingested frame at emission time minus `frame`.
    pub lag: usize,
}

/// Incremental chunked inference. Frames go in one at a time; each chunk is run as
/// soon as its right context has arrived, with the same inputs [`run_chunked`]
/// would build, so the emitted rows match the batch result exactly.
#[derive(Debug)]
pub struct StreamingRecognizer<'a> {
    params: &'a ModelParams,
    chunk_size: usize,
    left: usize,
    right: usize,
    /// Frames from `base` onwards.
    buffer: Vec<Vec<f64>>,
    base: usize,
    next_core: usize,
    ingested: usize,
}

impl<'a> StreamingRecognizer<'a> {
    /// Jitter in `plan` is ignored; inference always uses the nominal chunk size.
    pub fn new(params: &'a ModelParams, plan: &ChunkPlan) -> Result<Self> {
        plan.validate()?;
        Ok(Self {
            params,
            chunk_size: plan.chunk_size,
            left: plan.left_context,
            right: plan.right_context,
            buffer: Vec::new(),
            base: 0,
            next_core: 0,
            ingested: 0,
        })
    }

    pub fn ingested(&self) -> usize {
        self.ingested
    }

    pub fn push(&mut self, index: usize, frame: &[f64]) -> Result<Vec<Emission>> {
        if index != self.ingested {
            return Err(Error::OutOfOrder {
                expected: self.ingested,
                got: index,
            });
        }
        if frame.len() != self.params.dims().d_in {
            return Err(Error::Shape(format!(
                "frame width {} != d_in {}",
                frame.len(),
                self.params.dims().d_in
            )));
        }
        self.buffer.push(frame.to_vec());
        self.ingested += 1;
        let mut out = Vec::new();
        while self.ingested >= self.next_core + self.chunk_size + self.right {
            let core = self.next_core..self.next_core + self.chunk_size;
            out.extend(self.run(core)?);
        }
        Ok(out)
    }

    /// Flushes the remaining chunks, zero-padding the missing right context.
    pub fn finish(&mut self) -> Result<Vec<Emission>> {
        let mut out = Vec::new();
        while self.next_core < self.ingested {
            let core = self.next_core..(self.next_core + self.chunk_size).min(self.ingested);
            out.extend(self.run(core)?);
        }
        Ok(out)
    }

    fn run(&mut self, core: Range<usize>) -> Result<Vec<Emission>> {
        let chunk = Chunk::new(core.clone(), self.ingested, self.left, self.right);
        let width = self.params.dims().d_in;
        let mut input = Matrix::zeros(chunk.input_len(), width);
        for (row, t) in (chunk.left_pad..).zip(chunk.left.start..chunk.right.end) {
            input.row_mut(row).copy_from_slice(&self.buffer[t - self.base]);
        }
        let (logits, _, _) = am_forward(self.params, &input, None)?;
        let last = self.ingested - 1;
        let emitted = chunk
            .core_rows()
            .zip(core.clone())
            .map(|(r, t)| Emission {
                frame: t,
                logits: logits.row(r).to_vec(),
                lag: last - t,
            })
            .collect();
        self.next_core = core.end;
        let keep_from = self.next_core.saturating_sub(self.left);
        if keep_from > self.base {
            self.buffer.drain(..keep_from - self.base);
            self.base = keep_from;
        }
        Ok(emitted)
    }
}

/// Streams `features` frame by frame and collects every emission in order.
pub fn streaming_infer(
    params: &ModelParams,
    features: &Matrix,
    plan: &ChunkPlan,
) -> Result<Vec<Emission>> {
    let mut rec = StreamingRecognizer::new(params, plan)?;
    let mut out = Vec::with_capacity(features.rows());
    for t in 0..features.rows() {
        out.extend(rec.push(t, features.row(t))?);
    }
    out.extend(rec.finish()?);
    Ok(out)
}
