//! Property tests for the spec-level invariants.

mod common;

use std::collections::BTreeMap;

use common::pairwise_auc;
use diffaudit_core::corpus::{format_prompt, SourceDataset};
use diffaudit_core::genpair::strip_chain_of_thought;
use diffaudit_core::kmeans::kmeans;
use diffaudit_core::llmclient::{call_key, ChatRequest, Role};
use diffaudit_core::statcore::{auc, bh_reject, mwu_one_sided, ScoreSample};
use proptest::prelude::*;

fn score_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0..=1000u32, 1..=max_len)
        .prop_map(|v| v.into_iter().map(|x| x as f64 / 10.0).collect())
}

proptest! {
    #[test]
    fn auc_matches_pairwise_oracle(pos in score_vec(20), neg in score_vec(20)) {
        let sample = ScoreSample::new(pos.clone(), neg.clone()).unwrap();
        prop_assert_eq!(auc(&sample), pairwise_auc(&pos, &neg));
    }

    #[test]
    fn mwu_u_over_mn_is_auc_and_p_in_range(pos in score_vec(15), neg in score_vec(15)) {
        let sample = ScoreSample::new(pos.clone(), neg.clone()).unwrap();
        let outcome = mwu_one_sided(&sample, true);
        let mn = (pos.len() * neg.len()) as f64;
        prop_assert_eq!(outcome.u_statistic / mn, outcome.auc);
        prop_assert!((0.0..=1.0).contains(&outcome.p_one_sided));
        if outcome.degenerate {
            prop_assert_eq!(outcome.p_one_sided, 1.0);
        }
    }

    #[test]
    fn bh_matches_naive_definition(
        pvals in prop::collection::vec(0.0f64..=1.0, 1..60),
        q in 0.01f64..0.5,
    ) {
        prop_assert_eq!(bh_reject(&pvals, q), common::naive_bh(&pvals, q));
    }

    #[test]
    fn bh_rejections_monotone_in_q(pvals in prop::collection::vec(0.0f64..=1.0, 1..40)) {
        let narrow = bh_reject(&pvals, 0.05);
        let wide = bh_reject(&pvals, 0.2);
        for (a, b) in narrow.iter().zip(&wide) {
            prop_assert!(!a || *b, "rejection at q=0.05 must persist at q=0.2");
        }
    }

    #[test]
    fn templates_injective_on_distinct_inputs(a in "[a-zA-Z0-9 ]{1,40}", b in "[a-zA-Z0-9 ]{1,40}") {
        prop_assume!(a != b);
        for dataset in [SourceDataset::Persona, SourceDataset::Truthfulqa, SourceDataset::Bold] {
            prop_assert_ne!(
                format_prompt(&a, dataset).unwrap(),
                format_prompt(&b, dataset).unwrap()
            );
        }
    }

    #[test]
    fn strip_marker_total_and_marker_free(body in "[a-z<>/ ]{0,60}", tail in "[a-z ]{0,20}") {
        let marker = "</think>";
        let input = format!("{body}{marker}{tail}");
        let stripped = strip_chain_of_thought(&input, marker);
        prop_assert!(!stripped.contains(marker));
        prop_assert!(tail.ends_with(&stripped) || stripped == tail);
        // no marker: identity
        prop_assert_eq!(strip_chain_of_thought(&tail, marker), tail);
    }

    #[test]
    fn call_keys_separate_payloads(a in "[ -~]{1,60}", b in "[ -~]{1,60}") {
        let ra = serde_json::to_value(ChatRequest::new(a.clone())).unwrap();
        let rb = serde_json::to_value(ChatRequest::new(b.clone())).unwrap();
        if a == b {
            prop_assert_eq!(call_key(Role::Judge, &ra), call_key(Role::Judge, &rb));
        } else {
            prop_assert_ne!(call_key(Role::Judge, &ra), call_key(Role::Judge, &rb));
        }
    }

    #[test]
    fn kmeans_partition_and_determinism(
        points in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2), 4..24),
        k in 1usize..4,
        seed in 0u64..500,
    ) {
        prop_assume!(k <= points.len());
        let fit = kmeans(&points, k, seed, 4).unwrap();
        prop_assert_eq!(fit.assignment.len(), points.len());
        prop_assert!(fit.assignment.iter().all(|&a| a < k));
        let again = kmeans(&points, k, seed, 4).unwrap();
        prop_assert_eq!(fit.assignment, again.assignment);
        prop_assert!(fit.wcss.is_finite() && fit.wcss >= 0.0);
    }
}

#[test]
fn context_partition_invariant_under_splits() {
    use diffaudit_core::genpair::{
        split_construction_validation, ContextSamples, GenerationRecord, ModelTag, PartitionSide,
        PromptPair,
    };
    use diffaudit_core::llmclient::TokenUsage;

    for n in 2..30 {
        let pairs: Vec<PromptPair> = (0..n)
            .map(|i| PromptPair {
                prompt_id: format!("p{i:03}"),
                prompt_text: format!("t{i}"),
                m1: vec![GenerationRecord {
                    prompt_id: format!("p{i:03}"),
                    model_tag: ModelTag::M1,
                    sample_index: 0,
                    text: "x".into(),
                    usage: TokenUsage::default(),
                }],
                m2: vec![GenerationRecord {
                    prompt_id: format!("p{i:03}"),
                    model_tag: ModelTag::M2,
                    sample_index: 0,
                    text: "y".into(),
                    usage: TokenUsage::default(),
                }],
            })
            .collect();
        let samples = ContextSamples {
            context_id: format!("ctx{n}"),
            pairs,
            partition: BTreeMap::new(),
        };
        for fraction in [0.2, 0.5, 0.8] {
            let split = split_construction_validation(samples.clone(), fraction, 7).unwrap();
            let construction = split.side_pairs(PartitionSide::Construction).len();
            let validation = split.side_pairs(PartitionSide::Validation).len();
            assert_eq!(construction + validation, n);
            assert!(construction >= 1 && validation >= 1, "n={n} fraction={fraction}");
            assert_eq!(split.partition.len(), n);
        }
    }
}
