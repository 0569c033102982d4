use std::collections::BTreeMap;

use catdesk_core::am::{ModelDims, ModelParams};
use catdesk_core::decode::edit_distance;
use catdesk_core::fst::{compose_partial, enumerate_language, Arc, Label, Wfst, EPSILON};
use catdesk_core::math::{log_add, log_sum_exp};
use catdesk_core::streaming::{plan_chunks, run_chunked, streaming_infer, ChunkPlan};
use catdesk_core::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYMBOLS: [Label; 2] = [2, 3];

/// Transducer with non-epsilon inputs and outputs drawn from epsilon and SYMBOLS.
fn random_transducer(rng: &mut ChaCha8Rng) -> Wfst {
    let mut f = Wfst::new();
    let n = rng.random_range(1..=3);
    f.add_states(n);
    f.set_start(0);
    for s in 0..n {
        if rng.random_bool(0.6) {
            f.set_final(s, rng.random_range(-1.0..1.0));
        }
        for _ in 0..rng.random_range(0..=3) {
            let i = SYMBOLS[rng.random_range(0..2)];
            let o = [EPSILON, 2, 3][rng.random_range(0..3)];
            f.add_arc(s, Arc::new(i, o, rng.random_range(-1.0..1.0), rng.random_range(0..n)));
        }
    }
    f
}

/// Acceptor whose epsilon arcs only move to higher states, so no epsilon cycles.
fn random_acceptor(rng: &mut ChaCha8Rng) -> Wfst {
    let mut f = Wfst::new();
    let n = rng.random_range(1..=3);
    f.add_states(n);
    f.set_start(0);
    for s in 0..n {
        if rng.random_bool(0.6) {
            f.set_final(s, rng.random_range(-1.0..1.0));
        }
        for _ in 0..rng.random_range(0..=3) {
            let dst = rng.random_range(0..n);
            let l = if dst > s && rng.random_bool(0.3) { EPSILON } else { SYMBOLS[rng.random_range(0..2)] };
            f.add_arc(s, Arc::new(l, l, rng.random_range(-1.0..1.0), dst));
        }
    }
    f
}

/// Every accepting path of `f` with at most `max_in` inputs, as (input, output, weight).
fn paths(f: &Wfst, max_in: usize) -> Vec<(Vec<Label>, Vec<Label>, f64)> {
    fn go(f: &Wfst, s: usize, i: &mut Vec<Label>, o: &mut Vec<Label>, w: f64, max_in: usize, out: &mut Vec<(Vec<Label>, Vec<Label>, f64)>) {
        if let Some(fw) = f.final_log_weight(s) {
            out.push((i.clone(), o.clone(), w + fw));
        }
        if i.len() == max_in {
            return;
        }
        for a in f.arcs(s) {
            i.push(a.ilabel);
            if a.olabel != EPSILON {
                o.push(a.olabel);
            }
            go(f, a.next, i, o, w + a.log_weight(), max_in, out);
            if a.olabel != EPSILON {
                o.pop();
            }
            i.pop();
        }
    }
    let mut out = Vec::new();
    if let Some(s) = f.start() {
        go(f, s, &mut Vec::new(), &mut Vec::new(), 0.0, max_in, &mut out);
    }
    out
}

fn language(f: &Wfst, max_len: usize) -> BTreeMap<Vec<Label>, f64> {
    enumerate_language(f, max_len).unwrap().into_iter().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn composition_sums_matching_path_pairs(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_transducer(&mut rng);
        let b = random_acceptor(&mut rng);
        let b_lang = language(&b, 3);
        let mut expected: BTreeMap<Vec<Label>, f64> = BTreeMap::new();
        for (input, output, w) in paths(&a, 3) {
            if let Some(wb) = b_lang.get(&output) {
                let slot = expected.entry(input).or_insert(f64::NEG_INFINITY);
                *slot = log_add(*slot, w + wb);
            }
        }
        let got = language(&compose_partial(&a, &b), 3);
        prop_assert_eq!(got.keys().collect::<Vec<_>>(), expected.keys().collect::<Vec<_>>());
        for (k, w) in &expected {
            prop_assert!((got[k] - w).abs() < 1e-9, "{:?}: {} vs {}", k, got[k], w);
        }
    }

    #[test]
    fn trim_keeps_the_weighted_language(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_acceptor(&mut rng);
        let t = f.trim();
        prop_assert!(t.num_states() <= f.num_states());
        let (x, y) = (language(&f, 4), language(&t, 4));
        prop_assert_eq!(x.len(), y.len());
        for (k, w) in &x {
            prop_assert!((y[k] - w).abs() < 1e-12);
        }
    }

    #[test]
    fn edit_distance_is_a_metric(
        a in prop::collection::vec(2u32..5, 0..10),
        b in prop::collection::vec(2u32..5, 0..10),
        c in prop::collection::vec(2u32..5, 0..10),
    ) {
        let d = |x: &[u32], y: &[u32]| edit_distance(x, y).distance;
        prop_assert_eq!(d(&a, &a), 0);
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert!(d(&a, &b) <= a.len().max(b.len()));
        let counts = edit_distance(&a, &b);
        prop_assert_eq!(counts.substitutions + counts.insertions + counts.deletions, counts.distance);
    }

    #[test]
    fn chunks_partition_the_utterance(
        frames in 0usize..200,
        chunk_size in 1usize..30,
        left in 0usize..8,
        right in 0usize..8,
        jitter in 0.0f64..0.9,
        draw in prop::option::of(any::<u64>()),
    ) {
        let plan = ChunkPlan { chunk_size, left_context: left, right_context: right, jitter_fraction: jitter, seed: 3 };
        let layout = plan_chunks(frames, &plan, draw);
        let cores: Vec<usize> = layout.chunks().iter().flat_map(|c| c.core.clone()).collect();
        prop_assert_eq!(cores, (0..frames).collect::<Vec<_>>());
        for c in layout.chunks() {
            prop_assert_eq!(c.input_len(), left + c.core.len() + right);
        }
    }

    #[test]
    fn streaming_matches_chunked_batch(
        seed in any::<u64>(),
        frames in 1usize..40,
        chunk_size in 1usize..10,
        left in 0usize..4,
        right in 0usize..4,
    ) {
        let dims = ModelDims { d_in: 2, d_h: 3, num_outputs: 3 };
        let params = ModelParams::init(dims, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..frames * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let features = Matrix::from_vec(frames, 2, data);
        let plan = ChunkPlan { chunk_size, left_context: left, right_context: right, jitter_fraction: 0.0, seed: 0 };
        let batch = run_chunked(&params, &features, &plan_chunks(frames, &plan, None)).unwrap().logits;
        let streamed = streaming_infer(&params, &features, &plan).unwrap();
        prop_assert_eq!(streamed.len(), frames);
        for e in &streamed {
            prop_assert_eq!(e.logits.as_slice(), batch.row(e.frame));
        }
    }
}

#[test]
fn log_sum_exp_handles_empty_and_infinite_terms() {
    assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, 0.0]), 0.0);
    assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
}
