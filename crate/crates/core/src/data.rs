//! Synthetic corpora: Markov label sequences rendered as Gaussian frames around
//! per-label means.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::fst::{Label, FIRST_SYMBOL};
use crate::topology::{Alphabet, LabelSeq};
use crate::{Error, Matrix, Result};

pub const DEFAULT_ALPHABET_SIZE: usize = 3;
pub const DEFAULT_FEATURE_DIM: usize = 2;
pub const DEFAULT_SIGMA: f64 = 0.3;
pub const DEFAULT_CORPUS_SIZE: usize = 250;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub alphabet_size: usize,
    pub feature_dim: usize,
    /// One row per label, `alphabet_size x feature_dim`.
    pub means: Vec<Vec<f64>>,
    pub sigma: f64,
    pub min_duration: usize,
    pub max_duration: usize,
    pub min_labels: usize,
    pub max_labels: usize,
    /// Probability that the label after `k` is `k + 1` (cyclically).
    pub stickiness: f64,
    pub corpus_size: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self::new(DEFAULT_ALPHABET_SIZE, DEFAULT_FEATURE_DIM, DEFAULT_SIGMA, 0)
    }
}

impl SynthSpec {
    /// Defaults with means spread evenly on the unit circle of the first two
    /// feature dimensions.
    pub fn new(alphabet_size: usize, feature_dim: usize, sigma: f64, seed: u64) -> Self {
        Self {
            alphabet_size,
            feature_dim,
            means: circle_means(alphabet_size, feature_dim),
            sigma,
            min_duration: 2,
            max_duration: 5,
            min_labels: 20,
            max_labels: 40,
            stickiness: 0.7,
            corpus_size: DEFAULT_CORPUS_SIZE,
            seed,
        }
    }

    pub fn alphabet(&self) -> Result<Alphabet> {
        Alphabet::new(self.alphabet_size)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.alphabet_size == 0 || self.feature_dim == 0 {
            return bad("alphabet size and feature dim must be positive".into());
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be positive and finite, got {}", self.sigma));
        }
        if self.min_duration == 0 || self.min_duration > self.max_duration {
            return bad(format!(
                "duration range [{}, {}] is empty or starts at zero",
                self.min_duration, self.max_duration
            ));
        }
        if self.min_labels == 0 || self.min_labels > self.max_labels {
            return bad(format!(
                "label-count range [{}, {}] is empty or starts at zero",
                self.min_labels, self.max_labels
            ));
        }
        if !(0.0..=1.0).contains(&self.stickiness) {
            return bad("stickiness must lie in [0, 1]".into());
        }
        if self.corpus_size < 10 {
            return bad(format!("corpus size {} leaves an empty split", self.corpus_size));
        }
        if self.means.len() != self.alphabet_size
            || self.means.iter().any(|m| m.len() != self.feature_dim || m.iter().any(|v| !v.is_finite()))
        {
            return bad("means must be finite and shaped alphabet_size x feature_dim".into());
        }
        for i in 0..self.means.len() {
            for j in 0..i {
                if self.means[i] == self.means[j] {
                    return bad(format!("labels {} and {} share a mean", i, j));
                }
            }
        }
        Ok(())
    }
}

fn circle_means(k: usize, d: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let mut m = vec![0.0; d];
            let angle = 2.0 * core::f64::consts::PI * i as f64 / k.max(1) as f64;
            if d == 1 {
                m[0] = i as f64;
            } else if d > 1 {
                m[0] = libm::cos(angle);
                m[1] = libm::sin(angle);
            }
            m
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub features: Matrix,
    pub transcript: LabelSeq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub train: Vec<Utterance>,
    pub dev: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

/// Samples the corpus and splits it 80/10/10 in generation order.
pub fn synth_corpus(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut all: Vec<Utterance> = (0..spec.corpus_size)
        .map(|i| synth_utterance(spec, format!("utt{i:05}"), &mut rng))
        .collect();
    let n_train = spec.corpus_size * 8 / 10;
    let n_dev = spec.corpus_size / 10;
    let test = all.split_off(n_train + n_dev);
    let dev = all.split_off(n_train);
    Ok(Corpus {
        train: all,
        dev,
        test,
    })
}

fn synth_utterance(spec: &SynthSpec, id: String, rng: &mut ChaCha8Rng) -> Utterance {
    let k = spec.alphabet_size;
    let len = rng.random_range(spec.min_labels..=spec.max_labels);
    let mut idx = Vec::with_capacity(len);
    let mut prev: usize = rng.random_range(0..k);
    idx.push(prev);
    while idx.len() < len {
        let step = (prev + 1) % k;
        let others: Vec<usize> = (0..k).filter(|&c| c != prev && c != step).collect();
        prev = if others.is_empty() || rng.random_bool(spec.stickiness) {
            step
        } else {
            others[rng.random_range(0..others.len())]
        };
        idx.push(prev);
    }
    let durations: Vec<usize> = idx
        .iter()
        .map(|_| rng.random_range(spec.min_duration..=spec.max_duration))
        .collect();
    let frames: usize = durations.iter().sum();
    let mut features = Matrix::zeros(frames, spec.feature_dim);
    let mut t = 0;
    for (&c, &dur) in idx.iter().zip(&durations) {
        for _ in 0..dur {
            for (x, mu) in features.row_mut(t).iter_mut().zip(&spec.means[c]) {
                let z: f64 = StandardNormal.sample(rng);
                *x = mu + spec.sigma * z;
            }
            t += 1;
        }
    }
    let labels = idx.iter().map(|&c| c as Label + FIRST_SYMBOL).collect();
    Utterance {
        id,
        features,
        transcript: LabelSeq::new(labels).expect("labels start at the first symbol"),
    }
}

/// Classifies every frame by its nearest mean and merges runs. A model-free
/// reference for how separable a corpus is.
pub fn nearest_mean_decode(spec: &SynthSpec, features: &Matrix) -> LabelSeq {
    let mut out: Vec<Label> = Vec::new();
    for row in features.iter_rows() {
        let mut best = (f64::INFINITY, 0);
        for (c, mu) in spec.means.iter().enumerate() {
            let d: f64 = row.iter().zip(mu).map(|(x, m)| (x - m) * (x - m)).sum();
            if d < best.0 {
                best = (d, c);
            }
        }
        let l = best.1 as Label + FIRST_SYMBOL;
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    LabelSeq::new(out).expect("labels start at the first symbol")
}
