//! Reference computations used as test oracles.
//!
//! Everything here is written directly from the formulas, without sharing
//! code with `counsel-core`, so that tests compare two independent routes to
//! the same number. Performance is irrelevant; clarity is the point.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::PathBuf;

/// Workspace root, for locating bundled fixtures.
pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .parent()
        .and_then(|p| p.parent())
        .expect("testkit lives at crates/testkit")
        .to_path_buf()
}

pub fn fixture(relative: &str) -> PathBuf {
    workspace_root().join("fixtures").join(relative)
}

/// Character-by-character tokenizer: runs of alphanumeric characters,
/// lowercased where the lowercase form is a single character.
pub fn tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            let lower: Vec<char> = c.to_lowercase().collect();
            current.push(if lower.len() == 1 { lower[0] } else { c });
        } else if !current.is_empty() {
            out.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

pub fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if matches!(c, '.' | '!' | '?' | '。' | '！' | '？' | '\n') {
            let trimmed = current.trim();
            if !trimmed.is_empty() {
                out.push(trimmed.to_string());
            }
            current.clear();
        } else {
            current.push(c);
        }
    }
    let trimmed = current.trim();
    if !trimmed.is_empty() {
        out.push(trimmed.to_string());
    }
    out
}

pub const DAMPING: f64 = 0.85;
pub const TOLERANCE: f64 = 1e-6;
pub const MAX_ITERATIONS: usize = 100;

/// Explicit TextRank weight matrix.
pub fn textrank_weights(sentence_tokens: &[Vec<String>]) -> Vec<Vec<f64>> {
    let n = sentence_tokens.len();
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let a = &sentence_tokens[i];
            let b = &sentence_tokens[j];
            if a.is_empty() || b.is_empty() {
                continue;
            }
            let sa: HashSet<&String> = a.iter().collect();
            let shared = b.iter().collect::<HashSet<&String>>().iter().filter(|t| sa.contains(*t)).count();
            let mut denom = (a.len() as f64).ln() + (b.len() as f64).ln();
            if denom <= 0.0 {
                denom = 1.0;
            }
            w[i][j] = shared as f64 / denom;
        }
    }
    w
}

/// Dense power iteration of `s = (1 - d) + d * M s` with
/// `M[i][j] = w[j][i] / sum_k w[j][k]`.
pub fn power_iteration(weights: &[Vec<f64>]) -> Vec<f64> {
    let n = weights.len();
    let mut m = vec![vec![0.0; n]; n];
    for j in 0..n {
        let out: f64 = weights[j].iter().sum();
        if out > 0.0 {
            for i in 0..n {
                m[i][j] = weights[j][i] / out;
            }
        }
    }
    let mut s = vec![1.0 / n as f64; n];
    for _ in 0..MAX_ITERATIONS {
        let mut next = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += m[i][j] * s[j];
            }
            next[i] = (1.0 - DAMPING) + DAMPING * acc;
        }
        let mut delta: f64 = 0.0;
        for i in 0..n {
            delta = delta.max((next[i] - s[i]).abs());
        }
        s = next;
        if delta < TOLERANCE {
            break;
        }
    }
    s
}

pub fn textrank_scores(text: &str) -> Vec<f64> {
    let toks: Vec<Vec<String>> = sentences(text).iter().map(|s| tokens(s)).collect();
    power_iteration(&textrank_weights(&toks))
}

/// Sentence indices ranked by score descending, earlier index first on ties.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx
}

/// Selected sentences in document order.
pub fn summary(text: &str, max_sentences: usize) -> Vec<String> {
    let sents = sentences(text);
    let scores = textrank_scores(text);
    let mut chosen: Vec<usize> = ranking(&scores).into_iter().take(max_sentences).collect();
    chosen.sort();
    chosen.into_iter().map(|i| sents[i].clone()).collect()
}

/// TF-IDF keywords `(term, score)` of `doc` against `corpus`.
pub fn tfidf(doc: &[String], corpus: &[Vec<String>], k: usize) -> Vec<(String, f64)> {
    let n = corpus.len() as f64;
    let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
    for t in doc {
        *counts.entry(t).or_default() += 1;
    }
    let mut scored: Vec<(String, f64)> = counts
        .into_iter()
        .map(|(term, c)| {
            let df = corpus.iter().filter(|d| d.contains(term)).count() as f64;
            let tf = c as f64 / doc.len() as f64;
            (term.clone(), tf * (((1.0 + n) / (1.0 + df)).ln() + 1.0))
        })
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Cosine of raw count vectors, 0 when either side is empty.
pub fn cosine(a: &[String], b: &[String]) -> f64 {
    let mut ca: HashMap<&String, f64> = HashMap::new();
    let mut cb: HashMap<&String, f64> = HashMap::new();
    for t in a {
        *ca.entry(t).or_default() += 1.0;
    }
    for t in b {
        *cb.entry(t).or_default() += 1.0;
    }
    let dot: f64 = ca.iter().map(|(t, x)| x * cb.get(t).copied().unwrap_or(0.0)).sum();
    let na: f64 = ca.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = cb.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).min(1.0)
    }
}

/// Summary tokens restricted to the TF-IDF keywords of the summary.
pub fn keyword_tokens(speech: &str, descriptions: &[&str], k: usize, summary_sentences: usize) -> Vec<String> {
    let corpus: Vec<Vec<String>> = descriptions.iter().map(|d| tokens(d)).collect();
    let summary_tokens = tokens(&summary(speech, summary_sentences).join(" "));
    let keywords: HashSet<String> = tfidf(&summary_tokens, &corpus, k).into_iter().map(|(t, _)| t).collect();
    summary_tokens.into_iter().filter(|t| keywords.contains(t)).collect()
}

/// Full disorder ranking `(id, similarity)`, ties in input order.
pub fn match_ranking(
    speech: &str,
    records: &[(&str, &str)],
    k: usize,
    summary_sentences: usize,
) -> Vec<(String, f64)> {
    let descriptions: Vec<&str> = records.iter().map(|r| r.1).collect();
    let kw = keyword_tokens(speech, &descriptions, k, summary_sentences);
    let mut out: Vec<(String, f64)> = records
        .iter()
        .map(|(id, desc)| (id.to_string(), cosine(&kw, &tokens(desc))))
        .collect();
    // Insertion sort: stable and obviously correct.
    for i in 1..out.len() {
        let mut j = i;
        while j > 0 && out[j].1 > out[j - 1].1 {
            out.swap(j, j - 1);
            j -= 1;
        }
    }
    out
}

pub fn profile_similarity(
    speech: &str,
    descriptions: &[&str],
    typical_client: &str,
    k: usize,
    summary_sentences: usize,
) -> f64 {
    let kw = keyword_tokens(speech, descriptions, k, summary_sentences);
    cosine(&kw, &tokens(typical_client))
}

/// One-way ANOVA F via the computational (totals) formulas.
pub fn anova_f(groups: &[Vec<f64>]) -> (f64, usize, usize) {
    let k = groups.len();
    let n: usize = groups.iter().map(|g| g.len()).sum();
    let grand_total: f64 = groups.iter().flatten().sum();
    let sum_sq: f64 = groups.iter().flatten().map(|x| x * x).sum();
    let between_term: f64 = groups
        .iter()
        .map(|g| {
            let t: f64 = g.iter().sum();
            t * t / g.len() as f64
        })
        .sum();
    let ss_between = between_term - grand_total * grand_total / n as f64;
    let ss_within = sum_sq - between_term;
    let f = (ss_between / (k - 1) as f64) / (ss_within / (n - k) as f64);
    (f, k - 1, n - k)
}

/// Linear interpolation using exact integer positions.
pub fn resample(values: &[f64], target: usize) -> Vec<f64> {
    let n = values.len();
    if target == 1 {
        return vec![values.iter().sum::<f64>() / n as f64];
    }
    if n == 1 {
        return vec![values[0]; target];
    }
    (0..target)
        .map(|i| {
            let num = i * (n - 1);
            let den = target - 1;
            let lo = num / den;
            let rem = num % den;
            if rem == 0 {
                values[lo]
            } else {
                let frac = rem as f64 / den as f64;
                values[lo] * (1.0 - frac) + values[lo + 1] * frac
            }
        })
        .collect()
}

pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let half = (window / 2) as isize;
    let n = values.len() as isize;
    (0..n)
        .map(|i| {
            let mut sum = 0.0;
            let mut count = 0.0;
            for j in (i - half)..=(i + half) {
                if j >= 0 && j < n {
                    sum += values[j as usize];
                    count += 1.0;
                }
            }
            sum / count
        })
        .collect()
}

/// Closed-form least-squares slope against `i / (n - 1)`.
pub fn slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let xs: Vec<f64> = (0..values.len()).map(|i| i as f64 / (n - 1.0)).collect();
    let sx: f64 = xs.iter().sum();
    let sy: f64 = values.iter().sum();
    let sxy: f64 = xs.iter().zip(values).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
