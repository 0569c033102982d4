mod common;

use catdesk_core::fst::{enumerate_language, Label};
use catdesk_core::lm::build_denominator;
use catdesk_core::topology::{build_ctc_topology, ctc_collapse, Alphabet};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

#[test]
fn denominator_path_weights_follow_the_backoff_path_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 1..=2 {
        let ab = Alphabet::new(k).unwrap();
        let topo = build_ctc_topology(ab);
        let symbols: Vec<Label> = ab.emissions().collect();
        for order in 1..=3 {
            for _ in 0..4 {
                let lm = random_lm(&mut rng, ab, order);
                let den = build_denominator(&topo, &lm).unwrap();
                let accepted: std::collections::BTreeMap<_, _> =
                    enumerate_language(den.graph(), 5).unwrap().into_iter().collect();
                for len in 1..=5 {
                    for pi in all_strings(&symbols, len) {
                        let labels = ctc_collapse(&pi);
                        let want = backoff_path_sum(&lm, &labels);
                        let got = accepted[&pi];
                        assert!((got - want).abs() < 1e-9, "{pi:?}: {got} vs {want}");
                        let exact = lm.sentence_logprob(&labels).unwrap();
                        assert!(want >= exact - 1e-12, "{pi:?}: back-off sum below the exact score");
                    }
                }
            }
        }
    }
}

#[test]
fn numerator_oracle_agrees_with_ctc_loss() {
    use catdesk_core::loss::{ctc_loss, log_softmax_rows};
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let ab = Alphabet::new(2).unwrap();
        let logits = random_matrix(&mut rng, 5, ab.num_emissions(), 3.0);
        let labels = random_feasible_labels(&mut rng, ab, 5);
        let brute = numerator_log_z(&labels, ab, &log_softmax_rows(&logits));
        let (loss, _) = ctc_loss(&logits, &labels).unwrap();
        assert!((loss + brute).abs() < 1e-9);
    }
}
