//! One pass/fail line per acceptance criterion. Exits nonzero if any fail.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::{Duration, Instant};

use common::*;
use counsel_core::emotion::{emotion_value, resample, smooth, EmotionPoint, EmotionSeries};
use counsel_core::evaluation::{one_way_anova, read_questionnaire_csv, transform_css};
use counsel_core::knowledge_base::KnowledgeBase;
use counsel_core::matching::{MatchConfig, Matcher};
use counsel_core::session::{DialogueEngine, MockBackend, Stage};
use counsel_core::text_analysis::{cosine_similarity, split_sentences, tokenize, TermVector, TextRank};
use counsel_service::analysis::eval_report;
use counsel_service::replay_session;
use counsel_service::sessions::LiveSession;
use counsel_testkit as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const SEED: u64 = 20_240_521;
const F_TOLERANCE: f64 = 1e-9;
const TEXTRANK_TOLERANCE: f64 = 1e-6;
const TEXTRANK_BUDGET: Duration = Duration::from_secs(1);
const COSINE_SCALE_TOLERANCE: f64 = 1e-12;
/// Ranking order must match exactly; similarity values may differ in the
/// last bits because the oracle sums in a different order.
const MATCH_SIMILARITY_TOLERANCE: f64 = 1e-12;
const RESAMPLE_TOLERANCE: f64 = 1e-12;
const TOTAL_BUDGET: Duration = Duration::from_secs(60);

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn css_transform() -> Check {
    for x in 1u8..=5 {
        let expected = (7.0 - 1.0) * (f64::from(x) - 1.0) / (5.0 - 1.0) + 1.0;
        let got = transform_css(x).map_err(|e| e.to_string())?;
        ensure(got == expected, || format!("x={x}: {got} != {expected}"))?;
    }
    ensure(transform_css(1) == Ok(1.0) && transform_css(5) == Ok(7.0), || "endpoints".into())
}

fn emotion_grid() -> Check {
    for i in 0..=10 {
        for j in 0..=10 {
            let (p, n) = (f64::from(i) / 10.0, f64::from(j) / 10.0);
            let point = EmotionPoint::from_probabilities(p, n).map_err(|e| e.to_string())?;
            ensure(point.emotion == p - n && emotion_value(p, n) == p - n, || format!("({p}, {n})"))?;
            ensure((-1.0..=1.0).contains(&point.emotion), || format!("({p}, {n}) out of range"))?;
        }
    }
    Ok(())
}

fn anova() -> Check {
    let rows = read_questionnaire_csv(std::fs::File::open(fixture("questionnaire.csv")).unwrap())
        .map_err(|e| e.to_string())?;
    let report = serde_json::to_value(eval_report(&rows).map_err(|e| e.to_string())?).unwrap();
    for m in report["measures"].as_array().unwrap() {
        ensure(m["anova"]["df_between"] == 5 && m["anova"]["df_within"] == 12, || {
            format!("{} df {}", m["measure"], m["anova"])
        })?;
    }

    let small = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]];
    let f = one_way_anova(&small).map_err(|e| e.to_string())?.f_statistic;
    let (expected, _, _) = oracle::anova_f(&small);
    ensure((f - expected).abs() <= F_TOLERANCE, || format!("F {f} vs oracle {expected}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..50 {
        let groups: Vec<Vec<f64>> =
            (0..rng.random_range(2..=6)).map(|_| (0..3).map(|_| rng.random_range(1.0..7.0)).collect()).collect();
        let f = one_way_anova(&groups).map_err(|e| e.to_string())?.f_statistic;
        let (shift, scale) = (rng.random_range(-100.0..100.0), rng.random_range(0.1..10.0));
        let moved: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|x| x * scale + shift).collect()).collect();
        let g = one_way_anova(&moved).map_err(|e| e.to_string())?.f_statistic;
        ensure((f - g).abs() <= F_TOLERANCE, || format!("F {f} became {g} under x*{scale}+{shift}"))?;
    }
    Ok(())
}

fn random_document(rng: &mut ChaCha8Rng) -> String {
    const WORDS: [&str; 14] = [
        "sad", "sleep", "tired", "worry", "work", "friends", "night", "calm", "mood", "family", "i", "feel",
        "and", "the",
    ];
    (0..rng.random_range(1..=6))
        .map(|_| {
            (0..rng.random_range(1..=9))
                .map(|_| WORDS[rng.random_range(0..WORDS.len())])
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect::<Vec<_>>()
        .join(". ")
}

fn textrank() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let docs: Vec<String> = (0..10).map(|_| random_document(&mut rng)).collect();
    let started = Instant::now();
    for doc in &docs {
        let sentences: Vec<Vec<String>> = split_sentences(doc).iter().map(|s| tokenize(s).tokens).collect();
        let scores = TextRank::default().scores(&sentences);
        let expected = oracle::textrank_scores(doc);
        ensure(scores.len() == expected.len(), || format!("{doc:?}: sentence count"))?;
        for (a, b) in scores.iter().zip(&expected) {
            ensure((a - b).abs() <= TEXTRANK_TOLERANCE, || format!("{doc:?}: {a} vs {b}"))?;
        }
        ensure(oracle::ranking(&scores) == oracle::ranking(&expected), || format!("{doc:?}: ranking"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < TEXTRANK_BUDGET, || format!("took {elapsed:?}"))
}

fn tfidf_cosine() -> Check {
    let kb = Arc::new(KnowledgeBase::load(fixture("kb.json"), true).map_err(|e| e.to_string())?);
    let matcher = Matcher::new(kb.clone());
    let cfg = MatchConfig::default();
    let records: Vec<(&str, &str)> = kb.records().iter().map(|r| (r.id.as_str(), r.description.as_str())).collect();
    let utterances: Vec<String> =
        serde_json::from_str(&std::fs::read_to_string(fixture("utterances.json")).unwrap()).unwrap();
    ensure(utterances.len() == 10, || "fixture should hold 10 utterances".into())?;
    for u in &utterances {
        let got: Vec<(String, f64)> = matcher
            .match_disorders(u, &cfg)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|r| (r.disorder_id, r.similarity))
            .collect();
        let expected = oracle::match_ranking(u, &records, cfg.keyword_k, cfg.summary_sentences);
        let order = |r: &[(String, f64)]| r.iter().map(|x| x.0.clone()).collect::<Vec<_>>();
        ensure(order(&got) == order(&expected), || format!("{u:?}: {got:?} vs {expected:?}"))?;
        let close = got.iter().zip(&expected).all(|(g, e)| (g.1 - e.1).abs() <= MATCH_SIMILARITY_TOLERANCE);
        ensure(close, || format!("{u:?}: {got:?} vs {expected:?}"))?;
    }

    let v = |counts: &[u64]| TermVector {
        vocabulary: (0..counts.len()).map(|i| format!("t{i}")).collect(),
        counts: counts.to_vec(),
    };
    let (a, b, disjoint) = (v(&[3, 1, 0, 2]), v(&[1, 4, 2, 0]), v(&[0, 0, 5, 0]));
    let cos = |x: &TermVector, y: &TermVector| cosine_similarity(x, y).unwrap();
    ensure(cos(&a, &a) == 1.0, || "self similarity".into())?;
    ensure(cos(&a, &disjoint) == 0.0, || "disjoint similarity".into())?;
    for c in [2, 7, 1000] {
        ensure((cos(&a.scaled(c), &b) - cos(&a, &b)).abs() <= COSINE_SCALE_TOLERANCE, || format!("scale {c}"))?;
    }
    Ok(())
}

fn state_machine() -> Check {
    let kb = Arc::new(KnowledgeBase::load(fixture("kb.json"), true).map_err(|e| e.to_string())?);
    let engine = DialogueEngine::new(Arc::new(Matcher::new(kb)));
    let script = script();
    let dir = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for _ in 0..3 {
        let mut live = LiveSession::create(dir.path(), &engine, script.config).map_err(|e| e.to_string())?;
        let mut stages = Vec::new();
        let mut prompts = Vec::new();
        for turn in &script.turns {
            let outcome = live.turn(&engine, &MockBackend, turn).map_err(|e| e.to_string())?;
            stages.push(outcome.stage_after);
            prompts.push(outcome.rendered_prompt);
        }
        let replayed = replay_session(live.log_path()).map_err(|e| e.to_string())?;
        ensure(&replayed == live.state(), || "replayed state differs from live state".into())?;
        runs.push((stages, prompts));
    }
    let expected = [Stage::Matching, Stage::Elicitation, Stage::Elicitation, Stage::Intervention];
    ensure(runs[0].0 == expected, || format!("stages {:?}", runs[0].0))?;
    ensure(runs.iter().all(|r| r == &runs[0]), || "runs differ".into())
}

fn emotion_pipeline() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for _ in 0..100 {
        let n = rng.random_range(1..20);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let series = EmotionSeries::new(values.clone());
        let same = resample(&series, n).map_err(|e| e.to_string())?;
        ensure(same.values.iter().zip(&values).all(|(a, b)| (a - b).abs() <= RESAMPLE_TOLERANCE), || {
            "resample n -> n".into()
        })?;
        let (lo, hi) = values.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        let stretched = resample(&series, rng.random_range(1..40)).map_err(|e| e.to_string())?;
        ensure(stretched.values.iter().all(|&x| x >= lo - RESAMPLE_TOLERANCE && x <= hi + RESAMPLE_TOLERANCE), || {
            "resample bounds".into()
        })?;
        let c = values[0];
        let constant = EmotionSeries::new(vec![c; n]);
        ensure(smooth(&constant, 5).map_err(|e| e.to_string())?.values == vec![c; n], || "smooth constant".into())?;
    }

    let corpus = fixture("emotion_corpus.json").display().to_string();
    let lexicon = fixture("lexicon").display().to_string();
    let out = counsel(&["analyze", &corpus, "--lexicon-dir", &lexicon, "--window", "3"]);
    ensure(out.status.success(), || String::from_utf8_lossy(&out.stderr).into_owned())?;
    let report: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let directions: BTreeMap<String, String> = report["groups"]
        .as_array()
        .unwrap()
        .iter()
        .map(|g| (g["group"].as_str().unwrap().to_string(), g["direction"].as_str().unwrap().to_string()))
        .collect();
    ensure(directions.get("vcounselor").map(String::as_str) == Some("upward"), || format!("{directions:?}"))
}

fn service_contract() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut server = Server::start(dir.path());
    let id = create_session(&server);
    let mut stages = Vec::new();
    for turn in script().turns {
        let (status, body) = send(&server, &id, &turn);
        ensure(status == 200, || format!("status {status}: {body}"))?;
        check_message_schema(&body)?;
        stages.push(body["stage"].as_str().unwrap().to_string());
        let before = snapshot(&server, &id);
        check_snapshot_schema(&before)?;
        server.kill();
        let replayed = replay_session(dir.path().join("sessions").join(format!("{id}.jsonl")))
            .map_err(|e| e.to_string())?;
        let mut expected = counsel_service::output::to_value(&replayed);
        expected["best_similarity"] = counsel_service::output::to_value(&replayed.best_similarity());
        ensure(expected == before, || "replayed log differs from the acknowledged state".into())?;
        server = Server::start(dir.path());
        ensure(snapshot(&server, &id) == before, || "restarted service lost state".into())?;
    }
    ensure(stages == ["matching", "elicitation", "elicitation", "intervention"], || format!("{stages:?}"))?;
    let resp = client().delete(server.url(&format!("/sessions/{id}"))).send().map_err(|e| e.to_string())?;
    let closed: Value = resp.json().map_err(|e| e.to_string())?;
    ensure(closed["stage"] == "closed", || format!("close returned {closed}"))?;
    check_log(&server.log_path(&id))?;

    let other = create_session(&server);
    let barrier = Arc::new(Barrier::new(6));
    let server = Arc::new(server);
    let handles: Vec<_> = (0..6)
        .map(|i| {
            let (server, other, barrier) = (server.clone(), other.clone(), barrier.clone());
            thread::spawn(move || {
                barrier.wait();
                send(&server, &other, &format!("concurrent {i} I feel tired and worried")).0
            })
        })
        .collect();
    for h in handles {
        let status = h.join().map_err(|_| "client thread panicked".to_string())?;
        ensure(status == 200, || format!("concurrent status {status}"))?;
    }
    let pairs = check_log(&server.log_path(&other))?;
    ensure(pairs.len() == 6, || format!("{} turns logged", pairs.len()))?;
    ensure(pairs.iter().all(|(c, a)| a.contains(&echo_of(c))), || "turn events interleaved".into())
}

fn main() {
    let started = Instant::now();
    let criteria: [Criterion; 8] = [
        ("css transform exact on 1..5 with fixed endpoints", css_transform),
        ("emotion = P - N on the 121-point grid", emotion_grid),
        ("anova df (5, 12), fixture F and shift/scale invariance", anova),
        ("textrank matches power-iteration oracle on 10 seeded documents", textrank),
        ("tf-idf/cosine ranking matches recomputation on fixture KB", tfidf_cosine),
        ("scripted session stages, repeatable prompts, replay equality", state_machine),
        ("emotion pipeline invariants and upward corpus trend", emotion_pipeline),
        ("service contract with crash-replay and serialized turns", service_contract),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match result {
            Ok(()) => println!("PASS  {name}"),
            Err(reason) => {
                failures += 1;
                println!("FAIL  {name}: {reason}");
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed < TOTAL_BUDGET {
        println!("PASS  all criteria offline with mock backend within {TOTAL_BUDGET:?} ({elapsed:.1?})");
    } else {
        failures += 1;
        println!("FAIL  all criteria offline with mock backend within {TOTAL_BUDGET:?}: took {elapsed:.1?}");
    }
    if failures > 0 {
        std::process::exit(1);
    }
}
