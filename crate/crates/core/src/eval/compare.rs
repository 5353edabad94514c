use serde::Serialize;

use crate::eval::metrics::MetricsRecord;

/// Largest absolute error-rate gap at which two operating points count as
/// matched.
pub const MATCH_TOLERANCE: f64 = 0.01;

/// Sample-size and risk reductions of a candidate against a reference at a
/// matched error rate. Reductions are relative to the reference, positive
/// when the candidate is better.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub comparable: bool,
    pub candidate_id: String,
    pub reference_id: String,
    pub error_gap: f64,
    /// `reference - candidate` average sample size.
    pub sample_diff: f64,
    /// Combined standard error of `sample_diff`.
    pub sample_diff_se: f64,
    pub sample_reduction: f64,
    pub sample_reduction_se: f64,
    pub risk_diff: f64,
    pub risk_diff_se: f64,
    pub risk_reduction: f64,
    pub risk_reduction_se: f64,
}

impl ComparisonReport {
    /// Candidate is no worse than the reference in sample size, allowing
    /// `sigmas` combined standard errors.
    pub fn no_worse(&self, sigmas: f64) -> bool {
        self.comparable && self.sample_diff >= -sigmas * self.sample_diff_se
    }

    pub fn summary(&self) -> String {
        if !self.comparable {
            return format!(
                "{} vs {}: not comparable (error gap {:.4} exceeds {})",
                self.candidate_id, self.reference_id, self.error_gap, MATCH_TOLERANCE
            );
        }
        format!(
            "{} vs {}: sample size reduction {:.1}% ± {:.1}%, risk reduction {:.1}% ± {:.1}% (error gap {:.4})",
            self.candidate_id,
            self.reference_id,
            100.0 * self.sample_reduction,
            100.0 * self.sample_reduction_se,
            100.0 * self.risk_reduction,
            100.0 * self.risk_reduction_se,
            self.error_gap
        )
    }
}

// Standard error of (r - c) / r for independent estimates, first-order.
fn ratio_se(r: f64, r_se: f64, c: f64, c_se: f64) -> f64 {
    if r == 0.0 {
        return f64::NAN;
    }
    ((c_se / r).powi(2) + (c * r_se / (r * r)).powi(2)).sqrt()
}

pub fn compare(candidate: &MetricsRecord, reference: &MetricsRecord) -> ComparisonReport {
    let error_gap = (candidate.error_rate - reference.error_rate).abs();
    let (rs, cs) = (reference.avg_sample_size, candidate.avg_sample_size);
    let (rr, cr) = (reference.bayes_risk, candidate.bayes_risk);
    ComparisonReport {
        comparable: error_gap <= MATCH_TOLERANCE,
        candidate_id: candidate.config_id.clone(),
        reference_id: reference.config_id.clone(),
        error_gap,
        sample_diff: rs - cs,
        sample_diff_se: reference.sample_se.hypot(candidate.sample_se),
        sample_reduction: if rs == 0.0 { 0.0 } else { (rs - cs) / rs },
        sample_reduction_se: ratio_se(rs, reference.sample_se, cs, candidate.sample_se),
        risk_diff: rr - cr,
        risk_diff_se: reference.risk_se.hypot(candidate.risk_se),
        risk_reduction: if rr == 0.0 { 0.0 } else { (rr - cr) / rr },
        risk_reduction_se: ratio_se(rr, reference.risk_se, cr, candidate.risk_se),
    }
}

/// Pair each candidate point with the reference point of nearest error rate
/// and keep the pairs within [`MATCH_TOLERANCE`]. An empty result means the
/// curves share no comparable operating point.
pub fn compare_curves(candidates: &[MetricsRecord], references: &[MetricsRecord]) -> Vec<ComparisonReport> {
    candidates
        .iter()
        .filter_map(|c| {
            references
                .iter()
                .min_by(|a, b| {
                    let da = (a.error_rate - c.error_rate).abs();
                    let db = (b.error_rate - c.error_rate).abs();
                    da.total_cmp(&db)
                })
                .map(|r| compare(c, r))
        })
        .filter(|r| r.comparable)
        .collect()
}
