use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::metrics::MetricsRecord;

pub const CURVE_HEADER: [&str; 12] = [
    "config_id",
    "x_kind",
    "x_value",
    "error_rate",
    "error_se",
    "avg_sample_size",
    "sample_se",
    "bayes_risk",
    "risk_se",
    "episodes",
    "seed",
    "checkpoint_path",
];

/// What the sweep varies: the sampling cost (one trained policy per value)
/// or the heuristic's stopping threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    SamplingCost,
    Threshold,
}

impl SweepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepKind::SamplingCost => "sampling_cost",
            SweepKind::Threshold => "threshold",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub x_kind: SweepKind,
    pub values: Vec<f64>,
    pub episodes: usize,
    /// Training iterations per point; ignored for threshold sweeps.
    #[serde(default)]
    pub iterations: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::config("values", "at least one operating point is required"));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::config("values", format!("{v} is not finite")));
        }
        if self.episodes == 0 {
            return Err(Error::config("episodes", "must be positive"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::config("sweep", e.message().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Every `(value, seed)` pair, values outermost.
    pub fn points(&self) -> Vec<SweepPoint> {
        self.values
            .iter()
            .flat_map(|&x| {
                self.seeds.iter().map(move |&seed| SweepPoint {
                    x_kind: self.x_kind,
                    x_value: x,
                    seed,
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub x_kind: SweepKind,
    pub x_value: f64,
    pub seed: u64,
}

/// One row of the curve CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub config_id: String,
    pub x_kind: String,
    pub x_value: f64,
    pub error_rate: f64,
    pub error_se: f64,
    pub avg_sample_size: f64,
    pub sample_se: f64,
    pub bayes_risk: f64,
    pub risk_se: f64,
    pub episodes: usize,
    pub seed: u64,
    pub checkpoint_path: String,
}

impl CurvePoint {
    pub fn new(point: &SweepPoint, metrics: &MetricsRecord, checkpoint: Option<&Path>) -> Self {
        Self {
            config_id: metrics.config_id.clone(),
            x_kind: point.x_kind.as_str().into(),
            x_value: point.x_value,
            error_rate: metrics.error_rate,
            error_se: metrics.error_se,
            avg_sample_size: metrics.avg_sample_size,
            sample_se: metrics.sample_se,
            bayes_risk: metrics.bayes_risk,
            risk_se: metrics.risk_se,
            episodes: metrics.num_episodes,
            seed: point.seed,
            checkpoint_path: checkpoint.map(|p| p.display().to_string()).unwrap_or_default(),
        }
    }
}

/// Result of one sweep point; a failed point keeps the sweep going.
#[derive(Debug)]
pub struct SweepStatus {
    pub point: SweepPoint,
    pub result: Result<(MetricsRecord, Option<PathBuf>)>,
}

impl SweepStatus {
    pub fn curve_point(&self) -> Option<CurvePoint> {
        self.result
            .as_ref()
            .ok()
            .map(|(m, ck)| CurvePoint::new(&self.point, m, ck.as_deref()))
    }
}

/// Run `run_point` on every point of `spec`, recording failures instead of
/// stopping.
pub fn sweep<F>(spec: &SweepSpec, mut run_point: F) -> Result<Vec<SweepStatus>>
where
    F: FnMut(&SweepPoint) -> Result<(MetricsRecord, Option<PathBuf>)>,
{
    spec.validate()?;
    Ok(spec
        .points()
        .into_iter()
        .map(|point| SweepStatus {
            result: run_point(&point),
            point,
        })
        .collect())
}

pub fn write_curve<W: Write>(writer: W, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(CURVE_HEADER)?;
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_curve<R: Read>(reader: R) -> Result<Vec<CurvePoint>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CURVE_HEADER {
        return Err(Error::Trace {
            line: 1,
            reason: format!("expected curve header {}", CURVE_HEADER.join(",")),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Trace {
                line: i as u64 + 2,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// Per-figure tables from curve rows: `error_vs_sample_size.csv` (error
/// rate against average sample size, sorted by sample size within each
/// configuration) and `risk_vs_x.csv` (Bayes risk against the swept value).
/// Returns the written paths.
pub fn plot_data(curve: &[CurvePoint], out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut rows = curve.to_vec();
    rows.sort_by(|a, b| {
        a.config_id
            .cmp(&b.config_id)
            .then(a.avg_sample_size.total_cmp(&b.avg_sample_size))
    });
    let frontier = out_dir.join("error_vs_sample_size.csv");
    let mut w = csv::Writer::from_path(&frontier)?;
    w.write_record(["config_id", "avg_sample_size", "sample_se", "error_rate", "error_se"])?;
    for p in &rows {
        w.write_record([
            p.config_id.clone(),
            p.avg_sample_size.to_string(),
            p.sample_se.to_string(),
            p.error_rate.to_string(),
            p.error_se.to_string(),
        ])?;
    }
    w.flush()?;

    rows.sort_by(|a, b| a.config_id.cmp(&b.config_id).then(a.x_value.total_cmp(&b.x_value)));
    let risk = out_dir.join("risk_vs_x.csv");
    let mut w = csv::Writer::from_path(&risk)?;
    w.write_record(["config_id", "x_kind", "x_value", "bayes_risk", "risk_se"])?;
    for p in &rows {
        w.write_record([
            p.config_id.clone(),
            p.x_kind.clone(),
            p.x_value.to_string(),
            p.bayes_risk.to_string(),
            p.risk_se.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(vec![frontier, risk])
}
