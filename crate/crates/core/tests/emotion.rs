use std::collections::BTreeMap;

use counsel_core::emotion::{
    analyze_corpus, classify_sentiment, emotion_value, group_mean, group_trends, least_squares_slope, resample,
    smooth, trend, CorpusSession, EmotionPoint, EmotionSeries, LexiconClassifier, TrendDirection,
    DEFAULT_SLOPE_EPSILON, DEFAULT_SMOOTHING_WINDOW,
};
use counsel_testkit as oracle;
use proptest::prelude::*;

fn series(values: &[f64]) -> EmotionSeries {
    EmotionSeries::new(values.to_vec())
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn emotion_grid_is_exact() {
    for i in 0..=10 {
        for j in 0..=10 {
            let (p, n) = (i as f64 / 10.0, j as f64 / 10.0);
            let point = EmotionPoint::from_probabilities(p, n).unwrap();
            assert_eq!(point.emotion, p - n);
            assert_eq!(emotion_value(p, n), p - n);
            assert!((-1.0..=1.0).contains(&point.emotion));
        }
    }
}

#[test]
fn resample_alternating_to_seven() {
    let got = resample(&series(&[0.0, 1.0, 0.0, 1.0]), 7).unwrap();
    let expected = oracle::resample(&[0.0, 1.0, 0.0, 1.0], 7);
    assert!(close(&got.values, &expected, 1e-12));
    assert!(close(&got.values, &[0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0], 1e-12));
    assert_eq!(got.resampled_to, Some(7));
}

#[test]
fn group_mean_of_three_records() {
    let records = [series(&[0.0, 1.0]), series(&[1.0, 0.0, 1.0]), series(&[0.5, 0.5, 0.5, 0.5, 0.5])];
    let got = group_mean(&records, 5).unwrap();
    let resampled: Vec<Vec<f64>> = records.iter().map(|r| oracle::resample(&r.values, 5)).collect();
    let expected: Vec<f64> = (0..5).map(|i| resampled.iter().map(|r| r[i]).sum::<f64>() / 3.0).collect();
    assert!(close(&got.values, &expected, 1e-12));
}

#[test]
fn trend_fixture_window_three() {
    let values = [-0.1, 0.0, 0.3, 0.2, 0.5];
    let report = trend(&series(&values), 3).unwrap();
    let smoothed = oracle::moving_average(&values, 3);
    assert!(close(&report.smoothed.values, &smoothed, 1e-12));
    assert!((report.slope - oracle::slope(&smoothed)).abs() < 1e-12);
    assert_eq!(report.direction, TrendDirection::Upward);
}

#[test]
fn builtin_lexicon_corpus_trends() {
    let text = std::fs::read_to_string(oracle::fixture("emotion_corpus.json")).unwrap();
    let sessions: Vec<CorpusSession> = serde_json::from_str(&text).unwrap();
    let classifier = LexiconClassifier::from_dir(oracle::fixture("lexicon")).unwrap();
    let trends = analyze_corpus(&sessions, &classifier, 3, DEFAULT_SLOPE_EPSILON).unwrap();
    let direction: BTreeMap<_, _> = trends.iter().map(|g| (g.group.as_str(), g.trend.direction)).collect();
    assert_eq!(direction["vcounselor"], TrendDirection::Upward);
    assert_eq!(direction["control"], TrendDirection::Downward);
    let global = trends.iter().map(|g| g.aligned.len()).max().unwrap();
    assert!(trends.iter().all(|g| g.aligned.len() == global && g.group_length <= global));
}

#[test]
fn agent_turns_are_ignored_by_the_corpus_pipeline() {
    let classifier = LexiconClassifier::builtin();
    let session: CorpusSession = serde_json::from_value(serde_json::json!({
        "session_id": "s", "group": "g",
        "turns": [
            {"speaker": "agent", "text": "wonderful great happy"},
            {"speaker": "client", "text": "sad"},
            {"speaker": "agent", "text": "terrible awful"},
            {"speaker": "client", "text": "hopeful"}
        ]
    }))
    .unwrap();
    let values = session.emotion_series(&classifier).unwrap().values;
    let expected: Vec<f64> = ["sad", "hopeful"]
        .iter()
        .map(|t| classify_sentiment(t, &classifier).unwrap().emotion)
        .collect();
    assert_eq!(values, expected);
}

fn values(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..=1.0, len)
}

proptest! {
    #[test]
    fn resample_identity_and_bounds(v in values(1..20), target in 1usize..40) {
        let s = series(&v);
        prop_assert!(close(&resample(&s, v.len()).unwrap().values, &v, 1e-12));
        let r = resample(&s, target).unwrap();
        prop_assert_eq!(r.len(), target);
        let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        prop_assert!(r.values.iter().all(|&x| x >= lo - 1e-12 && x <= hi + 1e-12));
        prop_assert!(close(&r.values, &oracle::resample(&v, target), 1e-12));
    }

    #[test]
    fn smoothing_matches_oracle_and_preserves_constants(v in values(1..30), half in 0usize..4, c in -1.0f64..=1.0) {
        let window = 2 * half + 1;
        let smoothed = smooth(&series(&v), window).unwrap();
        prop_assert!(close(&smoothed.values, &oracle::moving_average(&v, window), 1e-12));
        let constant = vec![c; v.len()];
        prop_assert_eq!(smooth(&series(&constant), window).unwrap().values, constant);
    }

    #[test]
    fn slope_matches_closed_form_and_is_shift_invariant(v in values(2..30), shift in -1.0f64..1.0) {
        let slope = least_squares_slope(&v).unwrap();
        prop_assert!((slope - oracle::slope(&v)).abs() < 1e-9);
        let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
        prop_assert!((least_squares_slope(&shifted).unwrap() - slope).abs() < 1e-9);
    }

    #[test]
    fn group_order_does_not_change_trends(groups in prop::collection::vec(prop::collection::vec(values(2..8), 1..4), 1..4)) {
        let forward: BTreeMap<String, Vec<EmotionSeries>> = groups
            .iter()
            .enumerate()
            .map(|(i, g)| (format!("g{i}"), g.iter().map(|v| series(v)).collect()))
            .collect();
        let reversed: BTreeMap<String, Vec<EmotionSeries>> = groups
            .iter()
            .enumerate()
            .map(|(i, g)| (format!("g{i}"), g.iter().rev().map(|v| series(v)).collect()))
            .collect();
        let a = group_trends(&forward, DEFAULT_SMOOTHING_WINDOW, DEFAULT_SLOPE_EPSILON).unwrap();
        let b = group_trends(&reversed, DEFAULT_SMOOTHING_WINDOW, DEFAULT_SLOPE_EPSILON).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(close(&x.aligned.values, &y.aligned.values, 1e-12));
            prop_assert!((x.trend.slope - y.trend.slope).abs() < 1e-9);
        }
    }
}
