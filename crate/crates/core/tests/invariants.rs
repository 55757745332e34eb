use mindprobe::inversion::{invert, latent_space, marginalize, uniform_prior};
use mindprobe::link::{extract_answer_distribution, RawResponse, TokenLogprob, TopLogprob};
use mindprobe::metrics::{cross_domain_forward, explains};
use mindprobe::prompt::AnswerSlot;
use mindprobe::stats::grouped_pearson_ci;
use mindprobe::table::{ForwardTable, SlotKind};
use mindprobe::world::{enumerate_inference_tuples, DomainId, InferenceTask};
use mindprobe::FiniteDistribution;
use proptest::prelude::*;

fn table_from(ps: &[f64], domain: DomainId) -> ForwardTable {
    let mut it = ps.iter().copied().cycle();
    ForwardTable::from_fn(domain, "prop", |_| {
        let p = it.next().unwrap();
        FiniteDistribution::from_weights(vec![p, 1.0 - p]).unwrap()
    })
}

fn probability() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), Just(1.0), Just(0.5), 0.0..=1.0f64]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posteriors_are_normalized_and_supported(ps in prop::collection::vec(probability(), 1..64)) {
        let table = table_from(&ps, DomainId::ContainerWorld);
        for task in InferenceTask::ALL {
            let latents = latent_space(task);
            for t in enumerate_inference_tuples(DomainId::ContainerWorld, task) {
                let joint = invert(&table, &t, &uniform_prior(task)).unwrap();
                prop_assert!(joint.probs.is_normalized(1e-12));
                for m in marginalize(&joint) {
                    prop_assert!(m.is_normalized(1e-12));
                }
                if !joint.zero_evidence {
                    for (m, p) in latents.iter().zip(joint.probs.probs()) {
                        let lik = table.get(&m.complete(&t)).prob(t.action.index());
                        prop_assert_eq!(*p > 0.0, lik > 0.0);
                    }
                } else {
                    prop_assert!(!latents.iter().any(|m| table.get(&m.complete(&t)).prob(t.action.index()) > 0.0));
                }
            }
        }
    }

    #[test]
    fn deterministic_posteriors_only_keep_explaining_states(bits in prop::collection::vec(any::<bool>(), 243)) {
        let ps: Vec<f64> = bits.iter().map(|b| f64::from(u8::from(*b))).collect();
        let table = table_from(&ps, DomainId::MovieWorld);
        for task in InferenceTask::ALL {
            for t in enumerate_inference_tuples(DomainId::MovieWorld, task) {
                let joint = invert(&table, &t, &uniform_prior(task)).unwrap();
                if joint.zero_evidence {
                    continue;
                }
                for (m, p) in latent_space(task).iter().zip(joint.probs.probs()) {
                    if *p > 0.0 {
                        prop_assert!(explains(&table, &t, m));
                    }
                }
            }
        }
    }

    #[test]
    fn extraction_recovers_candidate_distribution(
        weights in prop::collection::vec(0.0..1.0f64, 3),
        other in 0.0..0.9f64,
        pick in 0usize..3,
    ) {
        prop_assume!(weights.iter().sum::<f64>() > 1e-6);
        let total: f64 = weights.iter().sum();
        let scale = (1.0 - other) / total;
        let slot = AnswerSlot {
            kind: SlotKind::NearContent,
            field: "box".into(),
            candidates: vec!["apples".into(), "oranges".into(), "both".into()],
        };
        let mut top: Vec<TopLogprob> = slot.candidates.iter().zip(&weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(c, w)| TopLogprob { token: format!("{c}\""), logprob: (w * scale).ln() })
            .collect();
        if other > 0.0 {
            top.push(TopLogprob { token: "pears\"".into(), logprob: other.ln() });
        }
        let chosen = top[pick % top.len()].clone();
        let fixed = |s: &str| TokenLogprob { token: s.into(), logprob: 0.0, top_logprobs: vec![] };
        let tokens = vec![
            fixed("{\"box\": \""),
            TokenLogprob { token: chosen.token.clone(), logprob: chosen.logprob, top_logprobs: top },
            fixed("}"),
        ];
        let raw = RawResponse { content: tokens.iter().map(|t| t.token.as_str()).collect(), tokens };
        let e = extract_answer_distribution(&raw, &slot).unwrap();
        prop_assert!(e.dist.is_normalized(1e-12));
        prop_assert!((e.coverage - (1.0 - other)).abs() < 1e-9);
        for (got, w) in e.dist.probs().iter().zip(&weights) {
            prop_assert!((got - w / total).abs() < 1e-9);
        }
    }

    #[test]
    fn bootstrap_interval_contains_estimate(
        pairs in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 5..60),
        seed in any::<u64>(),
    ) {
        let x: Vec<Vec<f64>> = pairs.iter().map(|p| vec![p.0]).collect();
        let y: Vec<Vec<f64>> = pairs.iter().map(|p| vec![p.1]).collect();
        if let Ok(ci) = grouped_pearson_ci(&x, &y, 200, seed) {
            prop_assert!(ci.ci_low <= ci.r && ci.r <= ci.ci_high);
            prop_assert!((-1.0..=1.0).contains(&ci.r));
            prop_assert_eq!(ci, grouped_pearson_ci(&x, &y, 200, seed).unwrap());
        }
    }

    #[test]
    fn relabelled_table_correlates_perfectly(ps in prop::collection::vec(0.0..1.0f64, 2..40)) {
        let a = table_from(&ps, DomainId::ContainerWorld);
        let b = a.relabel(DomainId::MovieWorld);
        if let Ok(r) = cross_domain_forward(&a, &b, 50, 1) {
            prop_assert!((r.r - 1.0).abs() < 1e-9);
        }
    }
}
