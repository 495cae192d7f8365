mod common;

use layoutie::docmodel::TagSet;
use layoutie::evalkit::{score, score_spans};
use proptest::prelude::*;

#[test]
fn hand_computed_fixtures() {
    assert_eq!(common::check_metric_fixtures(), Ok(20));
}

#[test]
fn fuzzed_micro_consistency() {
    assert_eq!(common::fuzz_micro_consistency(1000, 7), Ok(1000));
}

#[test]
fn length_mismatch_is_an_error() {
    assert!(score(&TagSet::new(["A"]), &[0, 1], &[0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn perfect_prediction_scores_one(gold in prop::collection::vec(0usize..5, 1..30)) {
        let ts = TagSet::new(["A", "B"]);
        let c = score(&ts, &gold, &gold).unwrap();
        let any_entity = gold.iter().any(|&t| t != 0);
        prop_assert_eq!(c.micro().f1, if any_entity { 1.0 } else { 0.0 });
        prop_assert_eq!(c.micro_counts().fp + c.micro_counts().fn_, 0);
    }

    /// Exact span matches imply exact token matches, never the reverse.
    #[test]
    fn span_tp_never_exceeds_tokens(pred in prop::collection::vec(0usize..5, 0..30), seed in any::<u64>()) {
        let gold: Vec<usize> = pred.iter().enumerate().map(|(i, &t)| if (seed >> (i % 64)) & 1 == 1 { t } else { 0 }).collect();
        let ts = TagSet::new(["A", "B"]);
        let tok = score(&ts, &pred, &gold).unwrap();
        let span = score_spans(&ts, &pred, &gold).unwrap();
        prop_assert!(span.micro_counts().tp <= tok.micro_counts().tp);
    }
}
