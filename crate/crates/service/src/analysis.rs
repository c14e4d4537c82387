//! Report types emitted by `analyze`, `eval` and the emotion endpoint.

use counsel_core::emotion::{
    analyze_corpus, classify_sentiment, trend_with_epsilon, CorpusSession, EmotionError, EmotionPoint,
    EmotionSeries, GroupTrend, SentimentClassifier, TrendDirection, DEFAULT_SLOPE_EPSILON,
};
use counsel_core::evaluation::{evaluate_questionnaires, AnovaOutcome, EvalError, MeasureReport, QuestionnaireResponse};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusReport {
    pub window: usize,
    pub aligned_length: usize,
    pub groups: Vec<GroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub group: String,
    pub records: usize,
    pub group_length: usize,
    /// Mean of the group's records after resampling to `group_length`.
    pub averaged: Vec<f64>,
    /// `averaged` resampled to the longest group.
    pub resampled: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub slope: f64,
    pub direction: TrendDirection,
}

impl From<GroupTrend> for GroupReport {
    fn from(g: GroupTrend) -> Self {
        Self {
            group: g.group,
            records: g.records,
            group_length: g.group_length,
            averaged: g.mean.values,
            resampled: g.aligned.values,
            smoothed: g.trend.smoothed.values,
            slope: g.trend.slope,
            direction: g.trend.direction,
        }
    }
}

pub fn corpus_report(
    sessions: &[CorpusSession],
    classifier: &dyn SentimentClassifier,
    window: usize,
) -> Result<CorpusReport, EmotionError> {
    let groups: Vec<GroupReport> = analyze_corpus(sessions, classifier, window, DEFAULT_SLOPE_EPSILON)?
        .into_iter()
        .map(GroupReport::from)
        .collect();
    Ok(CorpusReport {
        window,
        aligned_length: groups.first().map_or(0, |g| g.resampled.len()),
        groups,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub participants: usize,
    pub measures: Vec<MeasureJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeasureJson {
    pub measure: &'static str,
    pub groups: Vec<GroupStats>,
    pub anova: AnovaJson,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub group: String,
    pub n: usize,
    pub mean: f64,
    pub sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AnovaJson {
    Computed {
        f: f64,
        df_between: usize,
        df_within: usize,
        ss_between: f64,
        ss_within: f64,
        significant_05: Option<bool>,
        significant_01: Option<bool>,
    },
    /// Every group is internally constant but the groups differ.
    Degenerate { df_between: usize, df_within: usize },
    Insufficient { reason: String },
}

impl From<MeasureReport> for MeasureJson {
    fn from(report: MeasureReport) -> Self {
        let groups = report
            .groups
            .into_iter()
            .map(|(group, s)| GroupStats {
                group,
                n: s.n,
                mean: s.mean,
                sd: s.sd().ok(),
            })
            .collect();
        let anova = match report.anova {
            AnovaOutcome::Computed(r) => AnovaJson::Computed {
                f: r.f_statistic,
                df_between: r.df_between,
                df_within: r.df_within,
                ss_between: r.ss_between,
                ss_within: r.ss_within,
                significant_05: r.significant_05,
                significant_01: r.significant_01,
            },
            AnovaOutcome::Degenerate { df_between, df_within } => AnovaJson::Degenerate { df_between, df_within },
            AnovaOutcome::Insufficient(reason) => AnovaJson::Insufficient { reason },
        };
        Self {
            measure: report.measure,
            groups,
            anova,
        }
    }
}

pub fn eval_report(rows: &[QuestionnaireResponse]) -> Result<EvalReport, EvalError> {
    Ok(EvalReport {
        participants: rows.len(),
        measures: evaluate_questionnaires(rows)?.into_iter().map(MeasureJson::from).collect(),
    })
}

/// Emotion of one session's client turns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionEmotion {
    pub session_id: String,
    pub window: usize,
    pub points: Vec<TurnEmotion>,
    pub smoothed: Vec<f64>,
    /// Absent until the session has two client turns.
    pub trend: Option<TrendJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurnEmotion {
    pub turn_index: usize,
    #[serde(flatten)]
    pub point: EmotionPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendJson {
    pub slope: f64,
    pub direction: TrendDirection,
}

/// `turns` holds `(transcript index, client text)` pairs.
pub fn session_emotion(
    session_id: &str,
    turns: &[(usize, String)],
    classifier: &dyn SentimentClassifier,
    window: usize,
) -> Result<SessionEmotion, EmotionError> {
    let points = turns
        .iter()
        .map(|(turn_index, text)| {
            Ok(TurnEmotion {
                turn_index: *turn_index,
                point: classify_sentiment(text, classifier)?,
            })
        })
        .collect::<Result<Vec<_>, EmotionError>>()?;
    let series = EmotionSeries::new(points.iter().map(|p| p.point.emotion).collect());
    let (smoothed, trend) = match series.len() {
        0 => (Vec::new(), None),
        1 => (series.values.clone(), None),
        _ => {
            let report = trend_with_epsilon(&series, window, DEFAULT_SLOPE_EPSILON)?;
            (
                report.smoothed.values,
                Some(TrendJson {
                    slope: report.slope,
                    direction: report.direction,
                }),
            )
        }
    };
    Ok(SessionEmotion {
        session_id: session_id.to_string(),
        window,
        points,
        smoothed,
        trend,
    })
}
