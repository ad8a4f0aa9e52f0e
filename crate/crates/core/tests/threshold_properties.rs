use fee_core::metrics::{verdict, Category, ThresholdConfig, Verdict};
use proptest::prelude::*;

fn category() -> impl Strategy<Value = Category> {
    prop_oneof![
        Just(Category::Group),
        Just(Category::Subgroup),
        Just(Category::Individual)
    ]
}

fn cfg(t: f64) -> ThresholdConfig {
    ThresholdConfig {
        group: t,
        subgroup: t,
        individual: t,
    }
}

proptest! {
    #[test]
    fn loosening_never_turns_fair_into_unfair(
        results in prop::collection::vec((category(), 0.0f64..=100.0), 1..40),
        t in 0.0f64..=100.0,
        delta in 0.0f64..=50.0,
    ) {
        for (cat, v) in results {
            // group and subgroup loosen upwards, individual downwards
            let looser = match cat {
                Category::Individual => (t - delta).max(0.0),
                _ => (t + delta).min(100.0),
            };
            if verdict(cat, v, &cfg(t)) == Verdict::Fair {
                prop_assert_eq!(verdict(cat, v, &cfg(looser)), Verdict::Fair);
            }
        }
    }

    #[test]
    fn boundary_counts_as_fair(cat in category(), t in 0.0f64..=100.0) {
        prop_assert_eq!(verdict(cat, t, &cfg(t)), Verdict::Fair);
    }

    #[test]
    fn absolute_thresholds_flag_every_gap(v in 0.0f64..=100.0) {
        let strict = ThresholdConfig { group: 0.0, subgroup: 0.0, individual: 100.0 };
        let gap = if v > 0.0 { Verdict::Unfair } else { Verdict::Fair };
        prop_assert_eq!(verdict(Category::Group, v, &strict), gap);
        prop_assert_eq!(verdict(Category::Subgroup, v, &strict), gap);
        let short = if v < 100.0 { Verdict::Unfair } else { Verdict::Fair };
        prop_assert_eq!(verdict(Category::Individual, v, &strict), short);
    }
}
