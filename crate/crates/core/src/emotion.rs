//! Emotion values and trend analysis.
//!
//! A sentiment classifier assigns each utterance a positive probability `P`
//! and a negative probability `N`; the emotion value is `P - N`. Series of
//! different lengths are aligned by linear resampling, averaged per group,
//! smoothed with a centered moving average and summarized by a least-squares
//! slope.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::text_analysis::{Tokenizer, UnicodeTokenizer};

pub const DEFAULT_SMOOTHING_WINDOW: usize = 5;
pub const DEFAULT_SLOPE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmotionError {
    #[error("classifier failed: {0}")]
    Classifier(String),
    #[error("{name} = {value} is outside [0, 1]")]
    Domain { name: &'static str, value: f64 },
    #[error("series is empty")]
    EmptySeries,
    #[error("series has {0} points; at least 2 are required")]
    SeriesTooShort(usize),
    #[error("window must be a positive odd integer, got {0}")]
    InvalidWindow(usize),
    #[error("target length must be at least 1")]
    InvalidLength,
    #[error("cannot load lexicon {path}: {message}")]
    LexiconLoad { path: String, message: String },
}

/// Sentiment of one utterance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionPoint {
    pub positive_p: f64,
    pub negative_n: f64,
    pub emotion: f64,
}

impl EmotionPoint {
    /// Builds the point from classifier probabilities, each in `[0, 1]`.
    pub fn from_probabilities(positive_p: f64, negative_n: f64) -> Result<Self, EmotionError> {
        for (name, value) in [("P", positive_p), ("N", negative_n)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(EmotionError::Domain { name, value });
            }
        }
        Ok(Self {
            positive_p,
            negative_n,
            emotion: emotion_value(positive_p, negative_n),
        })
    }
}

/// `P - N`.
pub fn emotion_value(positive_p: f64, negative_n: f64) -> f64 {
    positive_p - negative_n
}

/// Returns `(P, N)` for a text.
pub trait SentimentClassifier: Send + Sync {
    fn probabilities(&self, text: &str) -> Result<(f64, f64), EmotionError>;
}

pub fn classify_sentiment(text: &str, classifier: &dyn SentimentClassifier) -> Result<EmotionPoint, EmotionError> {
    let (p, n) = classifier.probabilities(text)?;
    EmotionPoint::from_probabilities(p, n)
}

const BUILTIN_POSITIVE: &str = include_str!("../../../fixtures/lexicon/positive.txt");
const BUILTIN_NEGATIVE: &str = include_str!("../../../fixtures/lexicon/negative.txt");

/// Counts lexicon hits: `P = pos / (pos + neg)`, `N = neg / (pos + neg)`, and
/// `(0, 0)` when nothing matches.
pub struct LexiconClassifier {
    positive: HashSet<String>,
    negative: HashSet<String>,
    tokenizer: Box<dyn Tokenizer>,
}

impl fmt::Debug for LexiconClassifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LexiconClassifier")
            .field("positive", &self.positive.len())
            .field("negative", &self.negative.len())
            .finish()
    }
}

impl LexiconClassifier {
    pub fn new<P, N>(positive: P, negative: N) -> Self
    where
        P: IntoIterator,
        P::Item: AsRef<str>,
        N: IntoIterator,
        N::Item: AsRef<str>,
    {
        let tokenizer = UnicodeTokenizer::default();
        let normalize = |words: Vec<String>| -> HashSet<String> {
            words
                .iter()
                .flat_map(|w| tokenizer.tokenize(w).tokens)
                .collect()
        };
        let positive = normalize(positive.into_iter().map(|w| w.as_ref().to_owned()).collect());
        let negative = normalize(negative.into_iter().map(|w| w.as_ref().to_owned()).collect());
        Self {
            positive,
            negative,
            tokenizer: Box::new(tokenizer),
        }
    }

    /// The small English lexicon bundled with the crate.
    pub fn builtin() -> Self {
        Self::new(lexicon_lines(BUILTIN_POSITIVE), lexicon_lines(BUILTIN_NEGATIVE))
    }

    /// Loads `positive.txt` and `negative.txt` (one token per line) from a
    /// directory.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, EmotionError> {
        let dir = dir.as_ref();
        Self::from_files(dir.join("positive.txt"), dir.join("negative.txt"))
    }

    pub fn from_files(positive: impl AsRef<Path>, negative: impl AsRef<Path>) -> Result<Self, EmotionError> {
        let read = |path: &Path| {
            std::fs::read_to_string(path).map_err(|e| EmotionError::LexiconLoad {
                path: path.display().to_string(),
                message: e.to_string(),
            })
        };
        let pos = read(positive.as_ref())?;
        let neg = read(negative.as_ref())?;
        Ok(Self::new(lexicon_lines(&pos), lexicon_lines(&neg)))
    }

    pub fn hits(&self, text: &str) -> (usize, usize) {
        let tokens = self.tokenizer.tokenize(text);
        let pos = tokens.iter().filter(|t| self.positive.contains(*t)).count();
        let neg = tokens.iter().filter(|t| self.negative.contains(*t)).count();
        (pos, neg)
    }
}

fn lexicon_lines(text: &str) -> Vec<&str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

impl SentimentClassifier for LexiconClassifier {
    fn probabilities(&self, text: &str) -> Result<(f64, f64), EmotionError> {
        let (pos, neg) = self.hits(text);
        let total = pos + neg;
        if total == 0 {
            return Ok((0.0, 0.0));
        }
        Ok((pos as f64 / total as f64, neg as f64 / total as f64))
    }
}

/// Remote classifier adapter. Posts `{"text": ...}` and expects
/// `{"positive": P, "negative": N}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteClassifier {
    pub url: String,
    #[serde(default = "default_classifier_timeout")]
    pub timeout_ms: u64,
}

fn default_classifier_timeout() -> u64 {
    10_000
}

#[derive(Deserialize)]
struct RemoteScores {
    positive: f64,
    negative: f64,
}

impl SentimentClassifier for RemoteClassifier {
    fn probabilities(&self, text: &str) -> Result<(f64, f64), EmotionError> {
        let fail = |e: reqwest::Error| EmotionError::Classifier(e.to_string());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(self.timeout_ms))
            .build()
            .map_err(fail)?;
        let response = client
            .post(&self.url)
            .json(&serde_json::json!({ "text": text }))
            .send()
            .map_err(fail)?;
        if !response.status().is_success() {
            return Err(EmotionError::Classifier(format!("HTTP {}", response.status().as_u16())));
        }
        let scores: RemoteScores = response.json().map_err(fail)?;
        Ok((scores.positive, scores.negative))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionSeries {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_session: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resampled_to: Option<usize>,
}

impl EmotionSeries {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values,
            source_session: None,
            resampled_to: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn derived(&self, values: Vec<f64>, resampled_to: Option<usize>) -> Self {
        Self {
            values,
            source_session: self.source_session.clone(),
            resampled_to,
        }
    }
}

impl From<Vec<f64>> for EmotionSeries {
    fn from(values: Vec<f64>) -> Self {
        Self::new(values)
    }
}

/// Linear resampling to `target_len` points. A single-point series becomes
/// constant; a one-point target is the series mean.
pub fn resample(series: &EmotionSeries, target_len: usize) -> Result<EmotionSeries, EmotionError> {
    if series.is_empty() {
        return Err(EmotionError::EmptySeries);
    }
    if target_len == 0 {
        return Err(EmotionError::InvalidLength);
    }
    let v = &series.values;
    let n = v.len();
    let values = if target_len == 1 {
        vec![v.iter().sum::<f64>() / n as f64]
    } else if n == 1 {
        vec![v[0]; target_len]
    } else {
        let scale = (n - 1) as f64 / (target_len - 1) as f64;
        (0..target_len)
            .map(|i| {
                let pos = i as f64 * scale;
                let lo = (pos.floor() as usize).min(n - 1);
                let hi = (lo + 1).min(n - 1);
                let frac = pos - lo as f64;
                if frac == 0.0 {
                    v[lo]
                } else {
                    v[lo] + (v[hi] - v[lo]) * frac
                }
            })
            .collect()
    };
    Ok(series.derived(values, Some(target_len)))
}

/// Resamples every series to `target_len` and averages pointwise.
pub fn group_mean(series_list: &[EmotionSeries], target_len: usize) -> Result<EmotionSeries, EmotionError> {
    if series_list.is_empty() {
        return Err(EmotionError::EmptySeries);
    }
    let mut sums = vec![0.0; target_len];
    for series in series_list {
        for (sum, value) in sums.iter_mut().zip(resample(series, target_len)?.values) {
            *sum += value;
        }
    }
    let count = series_list.len() as f64;
    Ok(EmotionSeries {
        values: sums.into_iter().map(|s| s / count).collect(),
        source_session: None,
        resampled_to: Some(target_len),
    })
}

/// Centered moving average; windows shrink at the boundaries.
pub fn smooth(series: &EmotionSeries, window: usize) -> Result<EmotionSeries, EmotionError> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(EmotionError::InvalidWindow(window));
    }
    if series.is_empty() {
        return Err(EmotionError::EmptySeries);
    }
    let v = &series.values;
    let half = window / 2;
    let values = (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(v.len() - 1);
            let slice = &v[lo..=hi];
            let mean = slice.iter().sum::<f64>() / slice.len() as f64;
            // Keep constant windows exact.
            if slice.iter().all(|&x| x == slice[0]) {
                slice[0]
            } else {
                mean
            }
        })
        .collect();
    Ok(series.derived(values, series.resampled_to))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendDirection {
    Upward,
    Flat,
    Downward,
}

impl TrendDirection {
    pub fn from_slope(slope: f64, epsilon: f64) -> Self {
        if slope > epsilon {
            Self::Upward
        } else if slope < -epsilon {
            Self::Downward
        } else {
            Self::Flat
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    /// Least-squares slope against indices normalized to `[0, 1]`.
    pub slope: f64,
    pub direction: TrendDirection,
    pub smoothed: EmotionSeries,
}

/// Least-squares slope of `values` against `i / (n - 1)`.
pub fn least_squares_slope(values: &[f64]) -> Result<f64, EmotionError> {
    let n = values.len();
    if n < 2 {
        return Err(EmotionError::SeriesTooShort(n));
    }
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let mean_y = values.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(values) {
        sxy += (x - mean_x) * (y - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    Ok(sxy / sxx)
}

pub fn trend(series: &EmotionSeries, window: usize) -> Result<TrendReport, EmotionError> {
    trend_with_epsilon(series, window, DEFAULT_SLOPE_EPSILON)
}

pub fn trend_with_epsilon(series: &EmotionSeries, window: usize, epsilon: f64) -> Result<TrendReport, EmotionError> {
    if series.len() < 2 {
        return Err(EmotionError::SeriesTooShort(series.len()));
    }
    let smoothed = smooth(series, window)?;
    let slope = least_squares_slope(&smoothed.values)?;
    Ok(TrendReport {
        slope,
        direction: TrendDirection::from_slope(slope, epsilon),
        smoothed,
    })
}

/// Per-group result of the two-level alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTrend {
    pub group: String,
    pub records: usize,
    /// Longest record in the group; records are resampled to this length
    /// before averaging.
    pub group_length: usize,
    /// Pointwise mean of the group's records at `group_length`.
    pub mean: EmotionSeries,
    /// Group mean resampled to the longest group length.
    pub aligned: EmotionSeries,
    pub trend: TrendReport,
}

/// Aligns records within each group to the group's longest record, averages
/// them, aligns the group means to the longest group, then smooths and fits a
/// trend per group. Groups come back in key order.
pub fn group_trends(
    groups: &BTreeMap<String, Vec<EmotionSeries>>,
    window: usize,
    epsilon: f64,
) -> Result<Vec<GroupTrend>, EmotionError> {
    let mut means = Vec::with_capacity(groups.len());
    for (group, records) in groups {
        let group_length = records.iter().map(EmotionSeries::len).max().ok_or(EmotionError::EmptySeries)?;
        means.push((group, records.len(), group_length, group_mean(records, group_length)?));
    }
    let global = means.iter().map(|m| m.2).max().ok_or(EmotionError::EmptySeries)?;
    means
        .into_iter()
        .map(|(group, records, group_length, mean)| {
            let aligned = resample(&mean, global)?;
            let trend = trend_with_epsilon(&aligned, window, epsilon)?;
            Ok(GroupTrend {
                group: group.clone(),
                records,
                group_length,
                mean,
                aligned,
                trend,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusSpeaker {
    Client,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusTurn {
    pub speaker: CorpusSpeaker,
    pub text: String,
}

/// One recorded conversation in a transcript corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSession {
    pub session_id: String,
    pub group: String,
    pub turns: Vec<CorpusTurn>,
}

impl CorpusSession {
    /// Emotion series over client turns only.
    pub fn emotion_series(&self, classifier: &dyn SentimentClassifier) -> Result<EmotionSeries, EmotionError> {
        let values = self
            .turns
            .iter()
            .filter(|t| t.speaker == CorpusSpeaker::Client)
            .map(|t| classify_sentiment(&t.text, classifier).map(|p| p.emotion))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EmotionSeries {
            values,
            source_session: Some(self.session_id.clone()),
            resampled_to: None,
        })
    }
}

/// Classifies every session and runs [`group_trends`]. Sessions without
/// client turns are skipped.
pub fn analyze_corpus(
    sessions: &[CorpusSession],
    classifier: &dyn SentimentClassifier,
    window: usize,
    epsilon: f64,
) -> Result<Vec<GroupTrend>, EmotionError> {
    let mut groups: BTreeMap<String, Vec<EmotionSeries>> = BTreeMap::new();
    for session in sessions {
        let series = session.emotion_series(classifier)?;
        if !series.is_empty() {
            groups.entry(session.group.clone()).or_default().push(series);
        }
    }
    if groups.is_empty() {
        return Err(EmotionError::EmptySeries);
    }
    group_trends(&groups, window, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(values: &[f64]) -> EmotionSeries {
        EmotionSeries::new(values.to_vec())
    }

    struct Fixed(f64, f64);

    impl SentimentClassifier for Fixed {
        fn probabilities(&self, _: &str) -> Result<(f64, f64), EmotionError> {
            Ok((self.0, self.1))
        }
    }

    #[test]
    fn emotion_from_probabilities() {
        assert_eq!(classify_sentiment("x", &Fixed(1.0, 0.0)).unwrap().emotion, 1.0);
        assert_eq!(classify_sentiment("x", &Fixed(0.35, 0.35)).unwrap().emotion, 0.0);
        assert!((classify_sentiment("x", &Fixed(0.7, 0.3)).unwrap().emotion - 0.4).abs() < 1e-15);
        assert!(matches!(
            classify_sentiment("x", &Fixed(1.2, 0.0)),
            Err(EmotionError::Domain { name: "P", .. })
        ));
        assert!(matches!(
            classify_sentiment("x", &Fixed(0.2, -0.1)),
            Err(EmotionError::Domain { name: "N", .. })
        ));
    }

    #[test]
    fn lexicon_counts() {
        let c = LexiconClassifier::new(["happy", "calm"], ["sad", "tired", "alone"]);
        assert_eq!(c.probabilities("happy and calm").unwrap(), (1.0, 0.0));
        assert_eq!(c.probabilities("nothing here").unwrap(), (0.0, 0.0));
        assert_eq!(c.probabilities("Happy but sad, tired, alone").unwrap(), (0.25, 0.75));
    }

    #[test]
    fn lexicon_from_files() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("positive.txt"), "Hopeful\n\n# comment\nbetter\n").unwrap();
        std::fs::write(dir.path().join("negative.txt"), "worse\n").unwrap();
        let c = LexiconClassifier::from_dir(dir.path()).unwrap();
        assert_eq!(c.hits("hopeful, better, worse"), (2, 1));
        assert!(matches!(
            LexiconClassifier::from_dir(dir.path().join("missing")),
            Err(EmotionError::LexiconLoad { .. })
        ));
    }

    #[test]
    fn builtin_lexicon_is_nonempty() {
        let c = LexiconClassifier::builtin();
        assert_eq!(c.probabilities("happy").unwrap(), (1.0, 0.0));
        assert_eq!(c.probabilities("sad").unwrap(), (0.0, 1.0));
    }

    #[test]
    fn resample_examples() {
        assert_eq!(resample(&s(&[0.0, 1.0]), 3).unwrap().values, [0.0, 0.5, 1.0]);
        assert_eq!(resample(&s(&[0.3]), 4).unwrap().values, [0.3; 4]);
        assert!((resample(&s(&[0.2, 0.4, 0.9]), 1).unwrap().values[0] - 0.5).abs() < 1e-15);
        let id = resample(&s(&[0.1, -0.4, 0.7, 0.0]), 4).unwrap();
        assert_eq!(id.values, [0.1, -0.4, 0.7, 0.0]);
        assert_eq!(id.resampled_to, Some(4));
        assert_eq!(resample(&s(&[]), 3), Err(EmotionError::EmptySeries));
        assert_eq!(resample(&s(&[1.0]), 0), Err(EmotionError::InvalidLength));
    }

    #[test]
    fn group_mean_examples() {
        let g = group_mean(&[s(&[0.2, 0.2]), s(&[-0.2, -0.2, -0.2])], 3).unwrap();
        assert!(g.values.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(group_mean(&[s(&[0.0, 1.0])], 3).unwrap().values, [0.0, 0.5, 1.0]);
        assert_eq!(group_mean(&[], 3), Err(EmotionError::EmptySeries));
    }

    #[test]
    fn smooth_examples() {
        let input = s(&[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(smooth(&input, 1).unwrap().values, input.values);
        let third = 1.0 / 3.0;
        assert_eq!(smooth(&input, 3).unwrap().values, [0.0, third, third, third, 0.0]);
        assert_eq!(smooth(&s(&[0.4; 6]), 5).unwrap().values, [0.4; 6]);
        assert_eq!(smooth(&input, 4), Err(EmotionError::InvalidWindow(4)));
        assert_eq!(smooth(&input, 0), Err(EmotionError::InvalidWindow(0)));
        assert_eq!(smooth(&s(&[]), 3), Err(EmotionError::EmptySeries));
    }

    #[test]
    fn trend_examples() {
        let up = trend(&s(&[-0.5, -0.1, 0.0, 0.2, 0.6]), 3).unwrap();
        assert_eq!(up.direction, TrendDirection::Upward);
        let flat = trend(&s(&[0.3; 5]), 3).unwrap();
        assert_eq!(flat.direction, TrendDirection::Flat);
        assert_eq!(flat.slope, 0.0);
        let down = trend(&s(&[0.5, 0.1, -0.3]), 1).unwrap();
        assert_eq!(down.direction, TrendDirection::Downward);
        assert_eq!(trend(&s(&[0.1]), 3), Err(EmotionError::SeriesTooShort(1)));
    }

    #[test]
    fn two_level_alignment() {
        let mut groups = BTreeMap::new();
        groups.insert("a".to_string(), vec![s(&[0.0, 1.0]), s(&[0.0, 0.5, 1.0])]);
        groups.insert("b".to_string(), vec![s(&[0.0, 0.0, 0.0, 0.0, 0.0])]);
        let trends = group_trends(&groups, 1, DEFAULT_SLOPE_EPSILON).unwrap();
        assert_eq!(trends[0].group, "a");
        assert_eq!(trends[0].group_length, 3);
        assert_eq!(trends[0].aligned.len(), 5);
        assert_eq!(trends[0].aligned.values, [0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(trends[0].trend.direction, TrendDirection::Upward);
        assert_eq!(trends[1].trend.direction, TrendDirection::Flat);
    }

    #[test]
    fn corpus_uses_client_turns_only() {
        let session: CorpusSession = serde_json::from_value(serde_json::json!({
            "session_id": "s1",
            "group": "g",
            "turns": [
                {"speaker": "agent", "text": "happy happy"},
                {"speaker": "client", "text": "sad"},
                {"speaker": "client", "text": "happy"},
            ]
        }))
        .unwrap();
        let c = LexiconClassifier::new(["happy"], ["sad"]);
        assert_eq!(session.emotion_series(&c).unwrap().values, [-1.0, 1.0]);
        let trends = analyze_corpus(&[session], &c, 1, DEFAULT_SLOPE_EPSILON).unwrap();
        assert_eq!(trends[0].trend.direction, TrendDirection::Upward);
        assert_eq!(analyze_corpus(&[], &c, 1, DEFAULT_SLOPE_EPSILON), Err(EmotionError::EmptySeries));
    }
}
