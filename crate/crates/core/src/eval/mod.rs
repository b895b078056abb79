//! Operating-point metrics over similarity scores.
//!
//! Scores live on the normalized `[0, 1]` similarity scale. A score is
//! accepted when it is strictly above the threshold, so `FAR = 0` is always
//! attainable with the largest imposter score as threshold. Thresholds are
//! calibrated on imposter scores only.

mod attack;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use attack::{
    attack_from_templates, invert_templates, run_attack_simulation, score_attack, AttackSetup,
    Reconstruction, UserSummary,
};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub imposter: Vec<f64>,
    pub mated_type1: Vec<f64>,
    pub mated_type2: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreCategory {
    Genuine,
    Imposter,
    MatedType1,
    MatedType2,
}

impl ScoreCategory {
    pub const ALL: [ScoreCategory; 4] = [
        ScoreCategory::Genuine,
        ScoreCategory::Imposter,
        ScoreCategory::MatedType1,
        ScoreCategory::MatedType2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreCategory::Genuine => "genuine",
            ScoreCategory::Imposter => "imposter",
            ScoreCategory::MatedType1 => "mated_type1",
            ScoreCategory::MatedType2 => "mated_type2",
        }
    }
}

impl ScoreSet {
    pub fn get(&self, category: ScoreCategory) -> &[f64] {
        match category {
            ScoreCategory::Genuine => &self.genuine,
            ScoreCategory::Imposter => &self.imposter,
            ScoreCategory::MatedType1 => &self.mated_type1,
            ScoreCategory::MatedType2 => &self.mated_type2,
        }
    }

    fn get_mut(&mut self, category: ScoreCategory) -> &mut Vec<f64> {
        match category {
            ScoreCategory::Genuine => &mut self.genuine,
            ScoreCategory::Imposter => &mut self.imposter,
            ScoreCategory::MatedType1 => &mut self.mated_type1,
            ScoreCategory::MatedType2 => &mut self.mated_type2,
        }
    }

    /// Every list non-empty and every score inside `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for c in ScoreCategory::ALL {
            let scores = self.get(c);
            if scores.is_empty() {
                return Err(Error::EmptyScores(c.as_str()));
            }
            if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
                return Err(Error::Parse(format!(
                    "{} score {s} outside [0,1]",
                    c.as_str()
                )));
            }
        }
        Ok(())
    }

    /// `category,score` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["category", "score"]).map_err(csv_err)?;
        for c in ScoreCategory::ALL {
            for s in self.get(c) {
                w.write_record([c.as_str(), &s.to_string()])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            category: ScoreCategory,
            score: f64,
        }
        let mut set = ScoreSet::default();
        for row in csv::Reader::from_reader(input).deserialize::<Row>() {
            let row = row.map_err(csv_err)?;
            if !row.score.is_finite() {
                return Err(Error::Parse(format!("non-finite score {}", row.score)));
            }
            set.get_mut(row.category).push(row.score);
        }
        Ok(set)
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("csv: {other:?}")),
    }
}

fn check_far(far: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&far) {
        return Err(Error::InvalidConfig(format!(
            "FAR target {far} outside [0,1]"
        )));
    }
    Ok(())
}

/// Fraction of `scores` strictly above `threshold`.
pub fn rate_above(scores: &[f64], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores("scores"));
    }
    let above = scores.iter().filter(|&&s| s > threshold).count();
    Ok(above as f64 / scores.len() as f64)
}

/// Smallest imposter score `τ` with `rate_above(imposter, τ) <= far`.
pub fn threshold_at_far(imposter: &[f64], far: f64) -> Result<f64> {
    if imposter.is_empty() {
        return Err(Error::EmptyScores("imposter"));
    }
    check_far(far)?;
    let mut sorted = imposter.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut i = 0;
    while i < n {
        let tau = sorted[i];
        // advance past ties; everything from j on is strictly above tau
        let mut j = i + 1;
        while j < n && sorted[j] == tau {
            j += 1;
        }
        if (n - j) as f64 / n as f64 <= far {
            return Ok(tau);
        }
        i = j;
    }
    Ok(sorted[n - 1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub far_target: f64,
    pub threshold: f64,
    /// FAR actually achieved at `threshold`.
    pub far: f64,
    pub tar: f64,
    pub sar_type1: f64,
    pub sar_type2: f64,
}

pub fn operating_point(scores: &ScoreSet, far_target: f64) -> Result<OperatingPoint> {
    for c in ScoreCategory::ALL {
        if scores.get(c).is_empty() {
            return Err(Error::EmptyScores(c.as_str()));
        }
    }
    let threshold = threshold_at_far(&scores.imposter, far_target)?;
    Ok(OperatingPoint {
        far_target,
        threshold,
        far: rate_above(&scores.imposter, threshold)?,
        tar: rate_above(&scores.genuine, threshold)?,
        sar_type1: rate_above(&scores.mated_type1, threshold)?,
        sar_type2: rate_above(&scores.mated_type2, threshold)?,
    })
}

/// One operating point per FAR target, sorted by target ascending.
pub fn build_operating_points(
    scores: &ScoreSet,
    far_targets: &[f64],
) -> Result<Vec<OperatingPoint>> {
    let mut targets = far_targets.to_vec();
    for &f in &targets {
        check_far(f)?;
    }
    targets.sort_by(f64::total_cmp);
    targets
        .iter()
        .map(|&f| operating_point(scores, f))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset: String,
    pub compromised_extractor: String,
    pub target_extractor: String,
    pub config_digest: String,
    pub genuine_count: usize,
    pub imposter_count: usize,
    pub mated_count: usize,
    #[serde(default)]
    pub users: Vec<UserSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub operating_points: Vec<OperatingPoint>,
    pub metadata: ReportMetadata,
}

impl AttackReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(format!("report: {e}")))
    }
}

pub fn build_report(scores: &ScoreSet, far_targets: &[f64]) -> Result<AttackReport> {
    Ok(AttackReport {
        operating_points: build_operating_points(scores, far_targets)?,
        metadata: ReportMetadata {
            genuine_count: scores.genuine.len(),
            imposter_count: scores.imposter.len(),
            mated_count: scores.mated_type1.len(),
            ..ReportMetadata::default()
        },
    })
}

/// FAR grid for ROC output: `0`, then `points` log-spaced targets from
/// `1/|imposter|` (the smallest non-zero FAR the data can resolve) up to 1.
pub fn roc_grid(imposter_count: usize, points: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    let lo = (1.0 / imposter_count.max(1) as f64).log10();
    let points = points.max(2);
    for k in 0..points {
        let far = if k + 1 == points {
            1.0
        } else {
            10f64.powf(lo * (1.0 - k as f64 / (points - 1) as f64))
        };
        grid.push(far.min(1.0));
    }
    grid
}

/// ROC rows over [`roc_grid`]; each row is a full operating point.
pub fn emit_roc(scores: &ScoreSet, points: usize) -> Result<Vec<OperatingPoint>> {
    build_operating_points(scores, &roc_grid(scores.imposter.len(), points))
}

pub fn write_roc_csv<W: Write>(rows: &[OperatingPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_roc_csv<R: Read>(input: R) -> Result<Vec<OperatingPoint>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub category: ScoreCategory,
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub mass: f64,
}

/// Normalized histograms over `[0, 1]` per category. Bins are half-open
/// `[k/b, (k+1)/b)` except the last, which also holds 1.0.
pub fn emit_distributions(scores: &ScoreSet, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 bins, got {bins}"
        )));
    }
    let mut out = Vec::with_capacity(4 * bins);
    for c in ScoreCategory::ALL {
        let s = scores.get(c);
        if s.is_empty() {
            return Err(Error::EmptyScores(c.as_str()));
        }
        let mut counts = vec![0usize; bins];
        for &v in s {
            let k = ((v * bins as f64).floor().max(0.0) as usize).min(bins - 1);
            counts[k] += 1;
        }
        for (k, &count) in counts.iter().enumerate() {
            out.push(HistogramBin {
                category: c,
                bin: k,
                lower: k as f64 / bins as f64,
                upper: (k + 1) as f64 / bins as f64,
                count,
                mass: count as f64 / s.len() as f64,
            });
        }
    }
    Ok(out)
}

pub fn write_distributions_csv<W: Write>(bins: &[HistogramBin], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for b in bins {
        w.serialize(b).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_distributions_csv<R: Read>(input: R) -> Result<Vec<HistogramBin>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}
