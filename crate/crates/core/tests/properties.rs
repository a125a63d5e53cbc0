mod common;

use std::collections::BTreeMap;

use adrsig::cohort::{build_matrices, column_patient_counts, FeatureMatrix, WindowSpec};
use adrsig::ingest::{cohort_for_drug, RecordStore};
use adrsig::pipeline::analyze;
use adrsig::readcode::KeyMode;
use adrsig::signal::{select_signals, Direction, Order, SignalQuery, SignalRecord};
use adrsig::synth::{generate, SyntheticData};
use chrono::Duration;
use common::*;
use proptest::prelude::*;

fn store_of(data: &SyntheticData) -> RecordStore {
    data.to_store()
}

fn matrices(store: &RecordStore, mode: KeyMode) -> (FeatureMatrix, FeatureMatrix) {
    let cohort = cohort_for_drug(store, &[DRUG]).unwrap();
    build_matrices(store, &cohort, WindowSpec::default(), mode).unwrap()
}

fn small(seed: u64) -> SyntheticData {
    generate(&with_injections(synth_config(seed, 120, 50, 0.1), 5, 3.0)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn duplicated_event_rows_change_nothing(seed in 0u64..1000, pick in prop::collection::vec(any::<prop::sample::Index>(), 1..40)) {
        let data = small(seed);
        let mut doubled = data.clone();
        for i in &pick {
            doubled.events.push(data.events[i.index(data.events.len())].clone());
        }
        for mode in [KeyMode::FullCode, KeyMode::Level3] {
            prop_assert_eq!(matrices(&store_of(&data), mode), matrices(&store_of(&doubled), mode));
        }
    }

    #[test]
    fn shifting_all_dates_changes_nothing(seed in 0u64..1000, days in -3000i64..3000) {
        let data = small(seed);
        let mut shifted = data.clone();
        for rx in &mut shifted.prescriptions {
            rx.date += Duration::days(days);
        }
        for ev in &mut shifted.events {
            ev.date += Duration::days(days);
        }
        prop_assert_eq!(
            matrices(&store_of(&data), KeyMode::FullCode),
            matrices(&store_of(&shifted), KeyMode::FullCode)
        );
    }

    #[test]
    fn window_sides_are_disjoint(days in 1u32..400, offset in -800i64..800) {
        let w = WindowSpec::new(days).unwrap();
        let index = chrono::NaiveDate::from_ymd_opt(2008, 6, 15).unwrap();
        let side = w.classify(index, index + Duration::days(offset));
        let d = i64::from(days);
        let want = if (-d..0).contains(&offset) {
            Some(adrsig::cohort::Side::Before)
        } else if (0..d).contains(&offset) {
            Some(adrsig::cohort::Side::After)
        } else {
            None
        };
        prop_assert_eq!(side, want);
    }

    #[test]
    fn level3_counts_cover_descendants(seed in 0u64..1000) {
        let data = small(seed);
        let store = store_of(&data);
        let (fb, fa) = matrices(&store, KeyMode::FullCode);
        let (lb, la) = matrices(&store, KeyMode::Level3);
        for (full, level3) in [(&fb, &lb), (&fa, &la)] {
            let fc = column_patient_counts(full);
            let lc = column_patient_counts(level3);
            for (j, key) in full.event_keys().iter().enumerate() {
                let parent = level3.column_index(&key.to_level3()).expect("parent column");
                prop_assert!(lc[parent] >= fc[j], "{} {} < {}", key.as_str(), lc[parent], fc[j]);
            }
        }
    }
}

fn multiset(records: &[SignalRecord]) -> Vec<(String, u64, u64)> {
    let mut v: Vec<_> = records
        .iter()
        .map(|r| (r.event_key.as_str().to_string(), r.n_before, r.n_after))
        .collect();
    v.sort();
    v
}

#[test]
fn filters_orders_and_chapters_agree() {
    let data = generate(&with_injections(synth_config(21, 3000, 400, 0.02), 8, 3.0)).unwrap();
    let a = analyze(&data.to_store(), &run_config(KeyMode::FullCode, 100)).unwrap();
    let by_p = select_signals(&a.stats, &SignalQuery::default()).unwrap();
    let by_r1 = select_signals(
        &a.stats,
        &SignalQuery {
            order: Order::DescendingR1,
            ..SignalQuery::default()
        },
    )
    .unwrap();
    assert!(!by_p.is_empty());
    assert_eq!(multiset(&by_p), multiset(&by_r1));
    for r in &by_p {
        assert!(r.p < 0.05 && r.n_after > r.n_before);
    }
    assert!(by_p.windows(2).all(|w| w[0].p <= w[1].p));
    assert!(by_r1.windows(2).all(|w| w[0].r1 >= w[1].r1));
    assert!(by_p.iter().enumerate().all(|(i, r)| r.rank == i + 1));

    for chapter in ["A", "B", "C", "Q"] {
        let q = SignalQuery {
            chapter_prefix: Some(chapter.into()),
            ..SignalQuery::default()
        };
        let got = multiset(&select_signals(&a.stats, &q).unwrap());
        let want: Vec<_> = multiset(&by_p)
            .into_iter()
            .filter(|(k, _, _)| k.starts_with(chapter))
            .collect();
        assert_eq!(got, want, "chapter {chapter}");
    }

    let both = select_signals(
        &a.stats,
        &SignalQuery {
            direction: Direction::Both,
            ..SignalQuery::default()
        },
    )
    .unwrap();
    assert!(both.len() >= by_p.len());
    assert!(both.iter().all(|r| r.p < 0.05));
}

#[test]
fn pre_window_frequency_matches_baseline() {
    let p = 0.04;
    let n = 10_000usize;
    let data = generate(&synth_config(8, n, 25, p)).unwrap();
    let counts = rescan_counts(&data, 60, KeyMode::FullCode);
    let se = (p * (1.0 - p) / n as f64).sqrt();
    for (code, (nb, _)) in &counts {
        let freq = *nb as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * se + 1e-12, "{code}: {freq} vs {p}");
    }
}

#[test]
fn after_before_ratio_grows_with_multiplier() {
    let mut ratios = Vec::new();
    for m in [1.0, 2.0, 4.0, 8.0] {
        let (mut nb, mut na) = (0u64, 0u64);
        for seed in 0..20 {
            let cfg = with_injections(synth_config(seed, 2000, 50, 0.02), 1, m);
            let code = cfg.injections[0].code.as_str().to_string();
            let data = generate(&cfg).unwrap();
            let c: BTreeMap<_, _> = rescan_counts(&data, 60, KeyMode::FullCode);
            let (b, a) = c.get(&code).copied().unwrap_or_default();
            nb += b;
            na += a;
        }
        ratios.push(na as f64 / nb as f64);
    }
    assert!(ratios.windows(2).all(|w| w[0] < w[1]), "{ratios:?}");
}

#[test]
fn cohort_is_a_function_of_the_store() {
    let data = small(3);
    let store = data.to_store();
    let once = cohort_for_drug(&store, &[DRUG]).unwrap();
    let twice = cohort_for_drug(&store, &[DRUG]).unwrap();
    assert_eq!(once, twice);
    let mut reversed = data.clone();
    reversed.events.reverse();
    reversed.prescriptions.reverse();
    reversed.patients.reverse();
    assert_eq!(reversed.to_store(), store);
}
