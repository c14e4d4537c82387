//! Questionnaire scoring and group comparison.
//!
//! Two instruments are scored: the 12-item Counselor Rating Form short
//! version, 7-point items in three 4-item subscales (items 1-4
//! attractiveness, 5-8 expertness, 9-12 trustworthiness), and the 3-item
//! Client Satisfaction Scale on 5-point items, rescaled per item to the
//! 7-point range with `y = (7 - 1)(x - 1) / (5 - 1) + 1`.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

pub const CRFS_ITEMS: usize = 12;
pub const CSS_ITEMS: usize = 3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("item {index} = {value} is outside [{min}, {max}]")]
    ItemOutOfRange { index: usize, value: i64, min: i64, max: i64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("within-group variance is zero while between-group variance is not (F is +infinity)")]
    DegenerateVariance { df_between: usize, df_within: usize },
    #[error("questionnaire CSV error: {0}")]
    Csv(String),
}

fn check_items(items: &[u8], min: u8, max: u8) -> Result<(), EvalError> {
    match items.iter().enumerate().find(|(_, &v)| v < min || v > max) {
        Some((index, &value)) => Err(EvalError::ItemOutOfRange {
            index: index + 1,
            value: value.into(),
            min: min.into(),
            max: max.into(),
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrfsResponse {
    pub items: [u8; CRFS_ITEMS],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrfsScores {
    pub attractiveness: u32,
    pub expertness: u32,
    pub trustworthiness: u32,
    pub total: u32,
}

pub fn score_crfs(response: &CrfsResponse) -> Result<CrfsScores, EvalError> {
    check_items(&response.items, 1, 7)?;
    let sum = |range: std::ops::Range<usize>| response.items[range].iter().map(|&v| u32::from(v)).sum::<u32>();
    let attractiveness = sum(0..4);
    let expertness = sum(4..8);
    let trustworthiness = sum(8..12);
    Ok(CrfsScores {
        attractiveness,
        expertness,
        trustworthiness,
        total: attractiveness + expertness + trustworthiness,
    })
}

/// Rescales one 5-point item to the 7-point range.
pub fn transform_css(item: u8) -> Result<f64, EvalError> {
    check_items(&[item], 1, 5)?;
    Ok((7.0 - 1.0) * (f64::from(item) - 1.0) / (5.0 - 1.0) + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CssResponse {
    pub items: [u8; CSS_ITEMS],
}

impl CssResponse {
    pub fn transformed(&self) -> Result<[f64; CSS_ITEMS], EvalError> {
        check_items(&self.items, 1, 5)?;
        let mut out = [0.0; CSS_ITEMS];
        for (slot, &item) in out.iter_mut().zip(&self.items) {
            *slot = transform_css(item)?;
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CssScores {
    /// Sum of the raw items, in `[3, 15]`.
    pub raw_total: u32,
    /// Sum of the rescaled items, in `[3, 21]`.
    pub transformed_total: f64,
}

pub fn score_css(response: &CssResponse) -> Result<CssScores, EvalError> {
    let transformed = response.transformed()?;
    Ok(CssScores {
        raw_total: response.items.iter().map(|&v| u32::from(v)).sum(),
        transformed_total: transformed.iter().sum(),
    })
}

/// Upper 5% critical values of the F distribution, indexed
/// `[df_between - 1][df_within - 1]` for df_between 1..=10, df_within 1..=30.
const F_CRIT_05: [[f64; 30]; 10] = [
    [161.4476, 18.5128, 10.1280, 7.7086, 6.6079, 5.9874, 5.5914, 5.3177, 5.1174, 4.9646, 4.8443, 4.7472, 4.6672, 4.6001, 4.5431, 4.4940, 4.4513, 4.4139, 4.3807, 4.3512, 4.3248, 4.3009, 4.2793, 4.2597, 4.2417, 4.2252, 4.2100, 4.1960, 4.1830, 4.1709],
    [199.5000, 19.0000, 9.5521, 6.9443, 5.7861, 5.1433, 4.7374, 4.4590, 4.2565, 4.1028, 3.9823, 3.8853, 3.8056, 3.7389, 3.6823, 3.6337, 3.5915, 3.5546, 3.5219, 3.4928, 3.4668, 3.4434, 3.4221, 3.4028, 3.3852, 3.3690, 3.3541, 3.3404, 3.3277, 3.3158],
    [215.7073, 19.1643, 9.2766, 6.5914, 5.4095, 4.7571, 4.3468, 4.0662, 3.8625, 3.7083, 3.5874, 3.4903, 3.4105, 3.3439, 3.2874, 3.2389, 3.1968, 3.1599, 3.1274, 3.0984, 3.0725, 3.0491, 3.0280, 3.0088, 2.9912, 2.9752, 2.9604, 2.9467, 2.9340, 2.9223],
    [224.5832, 19.2468, 9.1172, 6.3882, 5.1922, 4.5337, 4.1203, 3.8379, 3.6331, 3.4780, 3.3567, 3.2592, 3.1791, 3.1122, 3.0556, 3.0069, 2.9647, 2.9277, 2.8951, 2.8661, 2.8401, 2.8167, 2.7955, 2.7763, 2.7587, 2.7426, 2.7278, 2.7141, 2.7014, 2.6896],
    [230.1619, 19.2964, 9.0135, 6.2561, 5.0503, 4.3874, 3.9715, 3.6875, 3.4817, 3.3258, 3.2039, 3.1059, 3.0254, 2.9582, 2.9013, 2.8524, 2.8100, 2.7729, 2.7401, 2.7109, 2.6848, 2.6613, 2.6400, 2.6207, 2.6030, 2.5868, 2.5719, 2.5581, 2.5454, 2.5336],
    [233.9860, 19.3295, 8.9406, 6.1631, 4.9503, 4.2839, 3.8660, 3.5806, 3.3738, 3.2172, 3.0946, 2.9961, 2.9153, 2.8477, 2.7905, 2.7413, 2.6987, 2.6613, 2.6283, 2.5990, 2.5727, 2.5491, 2.5277, 2.5082, 2.4904, 2.4741, 2.4591, 2.4453, 2.4324, 2.4205],
    [236.7684, 19.3532, 8.8867, 6.0942, 4.8759, 4.2067, 3.7870, 3.5005, 3.2927, 3.1355, 3.0123, 2.9134, 2.8321, 2.7642, 2.7066, 2.6572, 2.6143, 2.5767, 2.5435, 2.5140, 2.4876, 2.4638, 2.4422, 2.4226, 2.4047, 2.3883, 2.3732, 2.3593, 2.3463, 2.3343],
    [238.8827, 19.3710, 8.8452, 6.0410, 4.8183, 4.1468, 3.7257, 3.4381, 3.2296, 3.0717, 2.9480, 2.8486, 2.7669, 2.6987, 2.6408, 2.5911, 2.5480, 2.5102, 2.4768, 2.4471, 2.4205, 2.3965, 2.3748, 2.3551, 2.3371, 2.3205, 2.3053, 2.2913, 2.2783, 2.2662],
    [240.5433, 19.3848, 8.8123, 5.9988, 4.7725, 4.0990, 3.6767, 3.3881, 3.1789, 3.0204, 2.8962, 2.7964, 2.7144, 2.6458, 2.5876, 2.5377, 2.4943, 2.4563, 2.4227, 2.3928, 2.3660, 2.3419, 2.3201, 2.3002, 2.2821, 2.2655, 2.2501, 2.2360, 2.2229, 2.2107],
    [241.8817, 19.3959, 8.7855, 5.9644, 4.7351, 4.0600, 3.6365, 3.3472, 3.1373, 2.9782, 2.8536, 2.7534, 2.6710, 2.6022, 2.5437, 2.4935, 2.4499, 2.4117, 2.3779, 2.3479, 2.3210, 2.2967, 2.2747, 2.2547, 2.2365, 2.2197, 2.2043, 2.1900, 2.1768, 2.1646],
];

/// Upper 1% critical values, same layout as [`F_CRIT_05`].
const F_CRIT_01: [[f64; 30]; 10] = [
    [4052.1807, 98.5025, 34.1162, 21.1977, 16.2582, 13.7450, 12.2464, 11.2586, 10.5614, 10.0443, 9.6460, 9.3302, 9.0738, 8.8616, 8.6831, 8.5310, 8.3997, 8.2854, 8.1849, 8.0960, 8.0166, 7.9454, 7.8811, 7.8229, 7.7698, 7.7213, 7.6767, 7.6356, 7.5977, 7.5625],
    [4999.5000, 99.0000, 30.8165, 18.0000, 13.2739, 10.9248, 9.5466, 8.6491, 8.0215, 7.5594, 7.2057, 6.9266, 6.7010, 6.5149, 6.3589, 6.2262, 6.1121, 6.0129, 5.9259, 5.8489, 5.7804, 5.7190, 5.6637, 5.6136, 5.5680, 5.5263, 5.4881, 5.4529, 5.4204, 5.3903],
    [5403.3520, 99.1662, 29.4567, 16.6944, 12.0600, 9.7795, 8.4513, 7.5910, 6.9919, 6.5523, 6.2167, 5.9525, 5.7394, 5.5639, 5.4170, 5.2922, 5.1850, 5.0919, 5.0103, 4.9382, 4.8740, 4.8166, 4.7649, 4.7181, 4.6755, 4.6366, 4.6009, 4.5681, 4.5378, 4.5097],
    [5624.5833, 99.2494, 28.7099, 15.9770, 11.3919, 9.1483, 7.8466, 7.0061, 6.4221, 5.9943, 5.6683, 5.4120, 5.2053, 5.0354, 4.8932, 4.7726, 4.6690, 4.5790, 4.5003, 4.4307, 4.3688, 4.3134, 4.2636, 4.2184, 4.1774, 4.1400, 4.1056, 4.0740, 4.0449, 4.0179],
    [5763.6496, 99.2993, 28.2371, 15.5219, 10.9670, 8.7459, 7.4604, 6.6318, 6.0569, 5.6363, 5.3160, 5.0643, 4.8616, 4.6950, 4.5556, 4.4374, 4.3359, 4.2479, 4.1708, 4.1027, 4.0421, 3.9880, 3.9392, 3.8951, 3.8550, 3.8183, 3.7848, 3.7539, 3.7254, 3.6990],
    [5858.9861, 99.3326, 27.9107, 15.2069, 10.6723, 8.4661, 7.1914, 6.3707, 5.8018, 5.3858, 5.0692, 4.8206, 4.6204, 4.4558, 4.3183, 4.2016, 4.1015, 4.0146, 3.9386, 3.8714, 3.8117, 3.7583, 3.7102, 3.6667, 3.6272, 3.5911, 3.5580, 3.5276, 3.4995, 3.4735],
    [5928.3557, 99.3564, 27.6717, 14.9758, 10.4555, 8.2600, 6.9928, 6.1776, 5.6129, 5.2001, 4.8861, 4.6395, 4.4410, 4.2779, 4.1415, 4.0259, 3.9267, 3.8406, 3.7653, 3.6987, 3.6396, 3.5867, 3.5390, 3.4959, 3.4568, 3.4210, 3.3882, 3.3581, 3.3303, 3.3045],
    [5981.0703, 99.3742, 27.4892, 14.7989, 10.2893, 8.1017, 6.8400, 6.0289, 5.4671, 5.0567, 4.7445, 4.4994, 4.3021, 4.1399, 4.0045, 3.8896, 3.7910, 3.7054, 3.6305, 3.5644, 3.5056, 3.4530, 3.4057, 3.3629, 3.3239, 3.2884, 3.2558, 3.2259, 3.1982, 3.1726],
    [6022.4732, 99.3881, 27.3452, 14.6591, 10.1578, 7.9761, 6.7188, 5.9106, 5.3511, 4.9424, 4.6315, 4.3875, 4.1911, 4.0297, 3.8948, 3.7804, 3.6822, 3.5971, 3.5225, 3.4567, 3.3981, 3.3458, 3.2986, 3.2560, 3.2172, 3.1818, 3.1494, 3.1195, 3.0920, 3.0665],
    [6055.8467, 99.3992, 27.2287, 14.5459, 10.0510, 7.8741, 6.6201, 5.8143, 5.2565, 4.8491, 4.5393, 4.2961, 4.1003, 3.9394, 3.8049, 3.6909, 3.5931, 3.5082, 3.4338, 3.3682, 3.3098, 3.2576, 3.2106, 3.1681, 3.1294, 3.0941, 3.0618, 3.0320, 3.0045, 2.9791],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SignificanceLevel {
    #[serde(rename = "0.05")]
    P05,
    #[serde(rename = "0.01")]
    P01,
}

/// Tabulated critical F value, or `None` outside the embedded table.
pub fn f_critical(level: SignificanceLevel, df_between: usize, df_within: usize) -> Option<f64> {
    if !(1..=10).contains(&df_between) || !(1..=30).contains(&df_within) {
        return None;
    }
    let table = match level {
        SignificanceLevel::P05 => &F_CRIT_05,
        SignificanceLevel::P01 => &F_CRIT_01,
    };
    Some(table[df_between - 1][df_within - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnovaResult {
    pub f_statistic: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub ss_between: f64,
    pub ss_within: f64,
    /// `F >= F_crit(.05)`, when the degrees of freedom are tabulated.
    pub significant_05: Option<bool>,
    /// `F >= F_crit(.01)`, when the degrees of freedom are tabulated.
    pub significant_01: Option<bool>,
}

/// One-way ANOVA: `F = (SS_between / (k - 1)) / (SS_within / (N - k))`.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<AnovaResult, EvalError> {
    let k = groups.len();
    if k < 2 {
        return Err(EvalError::InsufficientData(format!("need at least 2 groups, got {k}")));
    }
    if let Some(i) = groups.iter().position(Vec::is_empty) {
        return Err(EvalError::InsufficientData(format!("group {} is empty", i + 1)));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    if n <= k {
        return Err(EvalError::InsufficientData(format!(
            "need more observations ({n}) than groups ({k})"
        )));
    }

    let grand_mean = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for group in groups {
        let mean = group.iter().sum::<f64>() / group.len() as f64;
        ss_between += group.len() as f64 * (mean - grand_mean).powi(2);
        ss_within += group.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    }
    let df_between = k - 1;
    let df_within = n - k;

    // Round-off can leave tiny residues when all group means coincide.
    let scale = groups.iter().flatten().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    let negligible = |ss: f64| ss <= n as f64 * (scale * 1e-12).powi(2);
    if negligible(ss_within) {
        if negligible(ss_between) {
            ss_between = 0.0;
        } else {
            return Err(EvalError::DegenerateVariance { df_between, df_within });
        }
        ss_within = 0.0;
    }

    let f_statistic = if ss_between == 0.0 {
        0.0
    } else {
        (ss_between / df_between as f64) / (ss_within / df_within as f64)
    };
    let flag = |level| f_critical(level, df_between, df_within).map(|crit| f_statistic >= crit);
    Ok(AnovaResult {
        f_statistic,
        df_between,
        df_within,
        ss_between,
        ss_within,
        significant_05: flag(SignificanceLevel::P05),
        significant_01: flag(SignificanceLevel::P01),
    })
}

/// Arithmetic mean and sample standard deviation of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    sd: Option<f64>,
}

impl GroupSummary {
    /// Sample standard deviation (`n - 1` denominator); needs two values.
    pub fn sd(&self) -> Result<f64, EvalError> {
        self.sd
            .ok_or_else(|| EvalError::InsufficientData(format!("standard deviation needs 2 values, got {}", self.n)))
    }
}

pub fn group_summary(values: &[f64]) -> Result<GroupSummary, EvalError> {
    let n = values.len();
    if n == 0 {
        return Err(EvalError::InsufficientData("no values".into()));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = (n >= 2).then(|| (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    Ok(GroupSummary { n, mean, sd })
}

/// One participant row of the questionnaire CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    pub participant_id: String,
    pub group: String,
    pub crfs: CrfsResponse,
    pub css: CssResponse,
}

/// Expected CSV header columns.
pub fn questionnaire_header() -> Vec<String> {
    let mut header = vec!["participant_id".to_string(), "group".to_string()];
    header.extend((1..=CRFS_ITEMS).map(|i| format!("crfs_{i}")));
    header.extend((1..=CSS_ITEMS).map(|i| format!("css_{i}")));
    header
}

/// Parses and range-checks a questionnaire CSV.
pub fn read_questionnaire_csv(reader: impl Read) -> Result<Vec<QuestionnaireResponse>, EvalError> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = csv
        .headers()
        .map_err(|e| EvalError::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if header != questionnaire_header() {
        return Err(EvalError::Csv(format!(
            "expected header `{}`, got `{}`",
            questionnaire_header().join(","),
            header.join(",")
        )));
    }

    let mut rows = Vec::new();
    for (line, record) in csv.records().enumerate() {
        let record = record.map_err(|e| EvalError::Csv(e.to_string()))?;
        let row = line + 2;
        let cell = |i: usize| -> Result<u8, EvalError> {
            let raw = &record[i];
            raw.parse::<u8>()
                .map_err(|_| EvalError::Csv(format!("row {row}, column `{}`: `{raw}` is not a valid item", header[i])))
        };
        let mut crfs = [0u8; CRFS_ITEMS];
        for (i, slot) in crfs.iter_mut().enumerate() {
            *slot = cell(2 + i)?;
        }
        let mut css = [0u8; CSS_ITEMS];
        for (i, slot) in css.iter_mut().enumerate() {
            *slot = cell(2 + CRFS_ITEMS + i)?;
        }
        let response = QuestionnaireResponse {
            participant_id: record[0].to_string(),
            group: record[1].to_string(),
            crfs: CrfsResponse { items: crfs },
            css: CssResponse { items: css },
        };
        score_crfs(&response.crfs).map_err(|e| EvalError::Csv(format!("row {row}, CRF-S: {e}")))?;
        score_css(&response.css).map_err(|e| EvalError::Csv(format!("row {row}, CSS: {e}")))?;
        rows.push(response);
    }
    if rows.is_empty() {
        return Err(EvalError::InsufficientData("questionnaire has no rows".into()));
    }
    Ok(rows)
}

/// Measures compared across groups, in report order.
pub const MEASURES: [&str; 6] = [
    "attractiveness",
    "expertness",
    "trustworthiness",
    "crfs_total",
    "css_raw_total",
    "css_transformed_total",
];

fn measure_values(response: &QuestionnaireResponse) -> Result<[f64; 6], EvalError> {
    let crfs = score_crfs(&response.crfs)?;
    let css = score_css(&response.css)?;
    Ok([
        f64::from(crfs.attractiveness),
        f64::from(crfs.expertness),
        f64::from(crfs.trustworthiness),
        f64::from(crfs.total),
        f64::from(css.raw_total),
        css.transformed_total,
    ])
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnovaOutcome {
    Computed(AnovaResult),
    /// F is +infinity: groups differ but each group is internally constant.
    Degenerate { df_between: usize, df_within: usize },
    Insufficient(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureReport {
    pub measure: &'static str,
    /// Per-group summaries in group-name order.
    pub groups: Vec<(String, GroupSummary)>,
    pub anova: AnovaOutcome,
}

/// Per-group summaries and a one-way ANOVA for every measure.
pub fn evaluate_questionnaires(rows: &[QuestionnaireResponse]) -> Result<Vec<MeasureReport>, EvalError> {
    let mut by_group: BTreeMap<&str, Vec<[f64; 6]>> = BTreeMap::new();
    for row in rows {
        by_group.entry(row.group.as_str()).or_default().push(measure_values(row)?);
    }
    MEASURES
        .iter()
        .enumerate()
        .map(|(m, &measure)| {
            let columns: Vec<(String, Vec<f64>)> = by_group
                .iter()
                .map(|(group, values)| (group.to_string(), values.iter().map(|v| v[m]).collect()))
                .collect();
            let groups = columns
                .iter()
                .map(|(g, values)| Ok((g.clone(), group_summary(values)?)))
                .collect::<Result<Vec<_>, EvalError>>()?;
            let samples: Vec<Vec<f64>> = columns.into_iter().map(|(_, v)| v).collect();
            let anova = match one_way_anova(&samples) {
                Ok(result) => AnovaOutcome::Computed(result),
                Err(EvalError::DegenerateVariance { df_between, df_within }) => {
                    AnovaOutcome::Degenerate { df_between, df_within }
                }
                Err(EvalError::InsufficientData(msg)) => AnovaOutcome::Insufficient(msg),
                Err(other) => return Err(other),
            };
            Ok(MeasureReport { measure, groups, anova })
        })
        .collect()
}
