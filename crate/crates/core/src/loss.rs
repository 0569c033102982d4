//! CTC-CRF and CTC objectives.
//!
//! The CRF loss runs log-space forward-backward over two graphs: the numerator
//! (alignments of the reference transcript) and the denominator (every
//! alignment, weighted by the label LM). Its gradient with respect to the per-frame
//! log-probabilities is the denominator occupancy minus the numerator occupancy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::fst::{Wfst, EPSILON};
use crate::lm::{DenominatorGraph, NGramLm};
use crate::math::{exp, log_add, log_sum_exp, NEG_INF};
use crate::topology::{emission_column, numerator_graph, LabelSeq};
use crate::{Error, FrameLogits, Matrix, Result};

/// Weight of the auxiliary CTC loss.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Row-wise log-softmax with max subtraction.
pub fn log_softmax_rows(logits: &FrameLogits) -> FrameLogits {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let lse = log_sum_exp(row);
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

/// Result of forward-backward over one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardBackward {
    pub log_z: f64,
    /// Per-frame posterior of each emission symbol; `None` when no length-`T` path
    /// exists (`log_z` is then `-inf`).
    pub occupancy: Option<Matrix>,
}

impl ForwardBackward {
    pub fn is_feasible(&self) -> bool {
        self.occupancy.is_some()
    }
}

/// Sums over all accepting paths that consume exactly one emission per frame.
/// A path scores its graph weight plus `emissions[t][ilabel - 1]` for each frame;
/// epsilon-input arcs consume no frame.
pub fn graph_forward_backward(g: &Wfst, emissions: &Matrix) -> Result<ForwardBackward> {
    let frames = emissions.rows();
    let columns = emissions.cols();
    if let Some(&label) = g.input_alphabet().iter().find(|&&l| l as usize > columns) {
        return Err(Error::MissingEmission { label, columns });
    }
    let infeasible = ForwardBackward {
        log_z: NEG_INF,
        occupancy: None,
    };
    let Some(start) = g.start() else {
        return Ok(infeasible);
    };
    let order = g.epsilon_order()?;
    let n = g.num_states();

    let mut alpha = vec![vec![NEG_INF; n]; frames + 1];
    alpha[0][start] = 0.0;
    close_forward(g, &order, &mut alpha[0]);
    for t in 0..frames {
        let row = emissions.row(t);
        let (done, rest) = alpha.split_at_mut(t + 1);
        let (cur, next) = (&done[t], &mut rest[0]);
        for s in 0..n {
            if cur[s] == NEG_INF {
                continue;
            }
            for arc in g.arcs(s).iter().filter(|a| a.ilabel != EPSILON) {
                let v = cur[s] + arc.log_weight() + row[emission_column(arc.ilabel)];
                next[arc.next] = log_add(next[arc.next], v);
            }
        }
        close_forward(g, &order, next);
    }
    let finals: Vec<f64> = (0..n)
        .map(|s| g.final_log_weight(s).unwrap_or(NEG_INF))
        .collect();
    let log_z = log_sum_exp(
        &(0..n)
            .map(|s| alpha[frames][s] + finals[s])
            .collect::<Vec<_>>(),
    );
    if log_z == NEG_INF {
        return Ok(infeasible);
    }

    let mut beta = vec![vec![NEG_INF; n]; frames + 1];
    beta[frames].copy_from_slice(&finals);
    close_backward(g, &order, &mut beta[frames]);
    let mut occupancy = Matrix::zeros(frames, columns);
    for t in (0..frames).rev() {
        let row = emissions.row(t);
        let (head, tail) = beta.split_at_mut(t + 1);
        let (cur, next) = (&mut head[t], &tail[0]);
        let occ = occupancy.row_mut(t);
        for s in 0..n {
            for arc in g.arcs(s).iter().filter(|a| a.ilabel != EPSILON) {
                let col = emission_column(arc.ilabel);
                let v = arc.log_weight() + row[col] + next[arc.next];
                cur[s] = log_add(cur[s], v);
                if alpha[t][s] > NEG_INF {
                    occ[col] += exp(alpha[t][s] + v - log_z);
                }
            }
        }
        close_backward(g, &order, cur);
    }
    Ok(ForwardBackward {
        log_z,
        occupancy: Some(occupancy),
    })
}

fn close_forward(g: &Wfst, order: &[usize], weights: &mut [f64]) {
    for &s in order {
        if weights[s] == NEG_INF {
            continue;
        }
        for arc in g.arcs(s).iter().filter(|a| a.ilabel == EPSILON) {
            weights[arc.next] = log_add(weights[arc.next], weights[s] + arc.log_weight());
        }
    }
}

fn close_backward(g: &Wfst, order: &[usize], weights: &mut [f64]) {
    for &s in order.iter().rev() {
        for arc in g.arcs(s).iter().filter(|a| a.ilabel == EPSILON) {
            weights[s] = log_add(weights[s], arc.log_weight() + weights[arc.next]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub crf_loss: f64,
    pub ctc_aux_loss: f64,
    /// `crf_loss + alpha * ctc_aux_loss`.
    pub total: f64,
    /// Gradient of `total` with respect to the raw logits.
    pub grad_logits: Matrix,
}

fn check_feasible(labels: &LabelSeq, frames: usize) -> Result<()> {
    let needed = labels.min_frames();
    if frames == 0 || needed > frames {
        return Err(Error::Infeasible {
            labels: labels.len(),
            needed,
            frames,
        });
    }
    Ok(())
}

/// CTC-CRF loss `-(log Z_num + log p(l)) + log Z_den` plus `alpha` times CTC.
///
/// `lm` supplies the numerator's edge potential `log p(l)`; it shifts the loss value
/// but has no gradient. Passing `None` drops it, which together with
/// [`DenominatorGraph::uniform`] reduces the CRF term to plain CTC.
pub fn ctc_crf_loss(
    logits: &FrameLogits,
    labels: &LabelSeq,
    den: &DenominatorGraph,
    lm: Option<&NGramLm>,
    alpha: f64,
) -> Result<LossReport> {
    let emissions = den.alphabet().num_emissions();
    if logits.cols() != emissions {
        return Err(Error::Shape(format!(
            "logits have {} columns, graph expects {emissions}",
            logits.cols()
        )));
    }
    check_feasible(labels, logits.rows())?;
    let log_probs = log_softmax_rows(logits);
    let num = graph_forward_backward(&numerator_graph(labels, den.topology())?, &log_probs)?;
    let (Some(occ_num), true) = (&num.occupancy, num.log_z.is_finite()) else {
        return Err(Error::Infeasible {
            labels: labels.len(),
            needed: labels.min_frames(),
            frames: logits.rows(),
        });
    };
    let den_fb = graph_forward_backward(den.graph(), &log_probs)?;
    let occ_den = den_fb.occupancy.as_ref().ok_or(Error::NoPath)?;
    let edge = match lm {
        Some(lm) => lm.sentence_logprob(labels)?,
        None => 0.0,
    };
    let crf_loss = -(num.log_z + edge) + den_fb.log_z;

    let mut grad_log_probs = occ_den.clone();
    grad_log_probs.add_scaled(occ_num, -1.0);
    let mut grad_logits = log_softmax_backward(&log_probs, &grad_log_probs);

    let (ctc_aux_loss, ctc_grad) = ctc_loss(logits, labels)?;
    grad_logits.add_scaled(&ctc_grad, alpha);
    Ok(LossReport {
        crf_loss,
        ctc_aux_loss,
        total: crf_loss + alpha * ctc_aux_loss,
        grad_logits,
    })
}

/// Training criterion applied to one utterance's logits.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    CtcCrf {
        den: &'a DenominatorGraph,
        lm: Option<&'a NGramLm>,
        alpha: f64,
    },
    /// Plain CTC. Its report carries the CTC value as both `ctc_aux_loss` and
    /// `total`, with `crf_loss` zero.
    Ctc,
}

impl Objective<'_> {
    pub fn evaluate(&self, logits: &FrameLogits, labels: &LabelSeq) -> Result<LossReport> {
        match *self {
            Objective::CtcCrf { den, lm, alpha } => ctc_crf_loss(logits, labels, den, lm, alpha),
            Objective::Ctc => {
                let (ctc, grad_logits) = ctc_loss(logits, labels)?;
                Ok(LossReport {
                    crf_loss: 0.0,
                    ctc_aux_loss: ctc,
                    total: ctc,
                    grad_logits,
                })
            }
        }
    }
}

/// Chains a gradient with respect to log-softmax outputs back to the logits.
pub fn log_softmax_backward(log_probs: &Matrix, grad: &Matrix) -> Matrix {
    let mut out = grad.clone();
    for t in 0..out.rows() {
        let sum: f64 = grad.row(t).iter().sum();
        for (o, &lp) in out.row_mut(t).iter_mut().zip(log_probs.row(t)) {
            *o -= exp(lp) * sum;
        }
    }
    out
}

/// Standard CTC negative log-likelihood and its gradient with respect to the raw
/// logits, via the blank-interleaved label recursion.
pub fn ctc_loss(logits: &FrameLogits, labels: &LabelSeq) -> Result<(f64, Matrix)> {
    let frames = logits.rows();
    check_feasible(labels, frames)?;
    let columns = logits.cols();
    if let Some(&l) = labels.iter().find(|&&l| emission_column(l) >= columns) {
        return Err(Error::MissingEmission { label: l, columns });
    }
    let log_probs = log_softmax_rows(logits);
    let mut ext = Vec::with_capacity(2 * labels.len() + 1);
    ext.push(0usize);
    for &l in labels.iter() {
        ext.push(emission_column(l));
        ext.push(0);
    }
    let s_len = ext.len();
    let skip = |s: usize| s >= 2 && ext[s] != 0 && ext[s] != ext[s - 2];

    let mut alpha = vec![vec![NEG_INF; s_len]; frames];
    alpha[0][0] = log_probs.get(0, ext[0]);
    if s_len > 1 {
        alpha[0][1] = log_probs.get(0, ext[1]);
    }
    for t in 1..frames {
        for s in 0..s_len {
            let mut v = alpha[t - 1][s];
            if s >= 1 {
                v = log_add(v, alpha[t - 1][s - 1]);
            }
            if skip(s) {
                v = log_add(v, alpha[t - 1][s - 2]);
            }
            alpha[t][s] = v + log_probs.get(t, ext[s]);
        }
    }
    let mut beta = vec![vec![NEG_INF; s_len]; frames];
    beta[frames - 1][s_len - 1] = log_probs.get(frames - 1, ext[s_len - 1]);
    if s_len > 1 {
        beta[frames - 1][s_len - 2] = log_probs.get(frames - 1, ext[s_len - 2]);
    }
    for t in (0..frames - 1).rev() {
        for s in 0..s_len {
            let mut v = beta[t + 1][s];
            if s + 1 < s_len {
                v = log_add(v, beta[t + 1][s + 1]);
            }
            if s + 2 < s_len && skip(s + 2) {
                v = log_add(v, beta[t + 1][s + 2]);
            }
            beta[t][s] = v + log_probs.get(t, ext[s]);
        }
    }
    let mut log_z = alpha[frames - 1][s_len - 1];
    if s_len > 1 {
        log_z = log_add(log_z, alpha[frames - 1][s_len - 2]);
    }
    if log_z == NEG_INF {
        return Err(Error::Infeasible {
            labels: labels.len(),
            needed: labels.min_frames(),
            frames,
        });
    }
    let mut grad = Matrix::zeros(frames, columns);
    for t in 0..frames {
        let g = grad.row_mut(t);
        for (k, v) in g.iter_mut().enumerate() {
            *v = exp(log_probs.get(t, k));
        }
        for s in 0..s_len {
            let post = alpha[t][s] + beta[t][s] - log_probs.get(t, ext[s]) - log_z;
            if post > NEG_INF {
                g[ext[s]] -= exp(post);
            }
        }
    }
    Ok((-log_z, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fst::Arc;
    use crate::topology::{build_ctc_topology, Alphabet};

    const A: u32 = 2;
    const B: u32 = 3;

    #[test]
    fn log_softmax_examples() {
        let out = log_softmax_rows(&Matrix::filled(1, 4, 3.0));
        for &v in out.row(0) {
            assert!((v + 4f64.ln()).abs() < 1e-15);
        }
        let out = log_softmax_rows(&Matrix::from_rows(&[[0.0, -1e9]]));
        assert!(out.get(0, 0).abs() < 1e-12);
        assert!((out.get(0, 1) + 1e9).abs() < 1e-3);
        let out = log_softmax_rows(&Matrix::from_rows(&[[0.3, -2.0, 5.0, 1.1]]));
        let s: f64 = out.row(0).iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn numerator_uniform_logz() {
        let ab = Alphabet::new(2).unwrap();
        let topo = build_ctc_topology(ab);
        let l = LabelSeq::new(vec![A, B]).unwrap();
        let num = numerator_graph(&l, &topo).unwrap();
        let e = Matrix::filled(3, 3, -(3f64.ln()));
        let fb = graph_forward_backward(&num, &e).unwrap();
        // five alignments, each (1/3)^3
        assert!((fb.log_z - (5.0 / 27.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn linear_graph_is_one_hot() {
        let mut g = Wfst::new();
        g.add_states(3);
        g.set_start(0);
        g.add_arc(0, Arc::new(2, 2, 0.0, 1));
        g.add_arc(1, Arc::new(1, 1, 0.0, 2));
        g.set_final(2, 0.0);
        let e = Matrix::from_rows(&[[-0.5, -1.5], [-0.25, -2.0]]);
        let fb = graph_forward_backward(&g, &e).unwrap();
        assert!((fb.log_z - (-1.5 - 0.25)).abs() < 1e-15);
        let occ = fb.occupancy.unwrap();
        assert_eq!(occ.row(0), &[0.0, 1.0]);
        assert_eq!(occ.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn too_long_transcript_is_infeasible() {
        let topo = build_ctc_topology(Alphabet::new(2).unwrap());
        let num = numerator_graph(&LabelSeq::new(vec![A, B, A]).unwrap(), &topo).unwrap();
        let fb = graph_forward_backward(&num, &Matrix::zeros(2, 3)).unwrap();
        assert_eq!(fb.log_z, NEG_INF);
        assert!(!fb.is_feasible());
        let err = ctc_loss(&Matrix::zeros(2, 3), &LabelSeq::new(vec![A, A]).unwrap());
        assert!(matches!(err, Err(Error::Infeasible { needed: 3, .. })));
    }

    #[test]
    fn ctc_small_cases() {
        let (loss, _) = ctc_loss(&Matrix::zeros(1, 2), &LabelSeq::new(vec![A]).unwrap()).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        let (loss, grad) =
            ctc_loss(&Matrix::zeros(3, 3), &LabelSeq::new(vec![A, B]).unwrap()).unwrap();
        assert!((loss + (5.0f64 / 27.0).ln()).abs() < 1e-12);
        for t in 0..3 {
            let s: f64 = grad.row(t).iter().sum();
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_denominator_reduces_to_ctc() {
        let ab = Alphabet::new(2).unwrap();
        let den = DenominatorGraph::uniform(ab);
        let logits = Matrix::from_rows(&[
            [0.1, 0.7, -0.3],
            [1.2, -0.4, 0.0],
            [-0.2, 0.3, 0.9],
            [0.5, 0.5, -1.0],
        ]);
        let l = LabelSeq::new(vec![A, B]).unwrap();
        let r = ctc_crf_loss(&logits, &l, &den, None, 0.0).unwrap();
        let (ctc, grad) = ctc_loss(&logits, &l).unwrap();
        assert!((r.crf_loss - ctc).abs() < 1e-12);
        for (a, b) in r.grad_logits.as_slice().iter().zip(grad.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(r.total, r.crf_loss);
    }
}
