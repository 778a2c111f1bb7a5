//! Aggregates run results into per-vector vulnerability rates, category and
//! overall macro-averages, deltas against a baseline, and Jensen–Shannon
//! divergence between rate profiles.
//!
//! Rate semantics: `vulnerable / (total - errors)` as a percentage; errors
//! are counted but excluded from the denominator. The overall figure is the
//! unweighted mean of the defined per-vector rates (macro average), not the
//! case-weighted mean.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::risk::{Category, VectorId};
use crate::runner::{RunResult, RunVerdict};

#[derive(Debug, Error, PartialEq)]
pub enum ReportError {
    #[error("reports cover different vector sets: {0:?} vs {1:?}")]
    MismatchedVectors(Vec<VectorId>, Vec<VectorId>),
    #[error("distribution is empty or sums to zero")]
    DegenerateDistribution,
    #[error("distributions have different lengths: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("negative mass at index {0}")]
    NegativeMass(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorStats {
    pub vector: VectorId,
    pub total: usize,
    pub vulnerable: usize,
    pub errors: usize,
    /// Percentage in [0, 100]; `None` when every run errored.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub per_vector: Vec<VectorStats>,
    pub per_category: Vec<(Category, Option<f64>)>,
    pub overall: Option<f64>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn stats(&self, vector: VectorId) -> Option<&VectorStats> {
        self.per_vector.iter().find(|s| s.vector == vector)
    }

    fn defined_rates(&self) -> Vec<(VectorId, f64)> {
        self.per_vector
            .iter()
            .filter_map(|s| s.rate.map(|r| (s.vector, r)))
            .collect()
    }
}

/// Builds per-vector stats from run results. Order of results is irrelevant;
/// vectors with zero non-error runs get an undefined rate, a warning, and are
/// excluded from macro-averages.
pub fn aggregate(results: &[RunResult]) -> Report {
    let mut buckets: BTreeMap<VectorId, (usize, usize, usize)> = BTreeMap::new();
    for result in results {
        let entry = buckets.entry(result.vector).or_default();
        entry.0 += 1;
        match result.verdict {
            RunVerdict::Vulnerable => entry.1 += 1,
            RunVerdict::Error => entry.2 += 1,
            RunVerdict::Safe => {}
        }
    }
    let mut warnings = Vec::new();
    let per_vector: Vec<VectorStats> = buckets
        .into_iter()
        .map(|(vector, (total, vulnerable, errors))| {
            let denom = total - errors;
            let rate = if denom == 0 {
                warnings.push(format!(
                    "{vector}: all {total} runs errored; rate undefined and excluded from averages"
                ));
                None
            } else {
                Some(vulnerable as f64 / denom as f64 * 100.0)
            };
            VectorStats {
                vector,
                total,
                vulnerable,
                errors,
                rate,
            }
        })
        .collect();

    let macro_mean = |rates: &[f64]| -> Option<f64> {
        if rates.is_empty() {
            None
        } else {
            Some(rates.iter().sum::<f64>() / rates.len() as f64)
        }
    };
    let per_category = [Category::C1, Category::C2, Category::C3]
        .into_iter()
        .map(|category| {
            let rates: Vec<f64> = per_vector
                .iter()
                .filter(|s| s.vector.category() == category)
                .filter_map(|s| s.rate)
                .collect();
            (category, macro_mean(&rates))
        })
        .collect();
    let all_rates: Vec<f64> = per_vector.iter().filter_map(|s| s.rate).collect();
    Report {
        overall: macro_mean(&all_rates),
        per_category,
        per_vector,
        warnings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    Two,
    Natural,
}

impl LogBase {
    fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Two => x.log2(),
            LogBase::Natural => x.ln(),
        }
    }
}

/// Jensen–Shannon divergence of two nonnegative vectors, normalized to
/// probability distributions by their sums. `JSD = ½KL(P‖M) + ½KL(Q‖M)`
/// with `M = (P+Q)/2` and `0·log 0 := 0`. Bounded by 1 in base 2 and by
/// ln 2 in nats.
pub fn jsd(p: &[f64], q: &[f64], base: LogBase) -> Result<f64, ReportError> {
    if p.len() != q.len() {
        return Err(ReportError::LengthMismatch(p.len(), q.len()));
    }
    for (i, &x) in p.iter().chain(q.iter()).enumerate() {
        if x < 0.0 {
            return Err(ReportError::NegativeMass(i % p.len().max(1)));
        }
    }
    let sum_p: f64 = p.iter().sum();
    let sum_q: f64 = q.iter().sum();
    if p.is_empty() || sum_p <= 0.0 || sum_q <= 0.0 {
        return Err(ReportError::DegenerateDistribution);
    }
    let kl_to_mid = |a: &[f64], sum_a: f64| -> f64 {
        let mut total = 0.0;
        for i in 0..a.len() {
            let ai = a[i] / sum_a;
            if ai > 0.0 {
                let mi = (p[i] / sum_p + q[i] / sum_q) / 2.0;
                total += ai * base.log(ai / mi);
            }
        }
        total
    };
    Ok(0.5 * kl_to_mid(p, sum_p) + 0.5 * kl_to_mid(q, sum_q))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Per-vector `rate B − rate A` (baseline-vs-candidate convention:
    /// positive means B is more vulnerable).
    pub deltas: Vec<(VectorId, f64)>,
    pub jsd_base2: f64,
    pub jsd_natural: f64,
}

/// Compares two reports covering the same vectors. Deltas are `B − A`; JSD
/// is computed on the two rate vectors under both log conventions.
pub fn compare(a: &Report, b: &Report) -> Result<Comparison, ReportError> {
    let ra = a.defined_rates();
    let rb = b.defined_rates();
    let va: Vec<VectorId> = ra.iter().map(|(v, _)| *v).collect();
    let vb: Vec<VectorId> = rb.iter().map(|(v, _)| *v).collect();
    if va != vb {
        return Err(ReportError::MismatchedVectors(va, vb));
    }
    let pa: Vec<f64> = ra.iter().map(|(_, r)| *r).collect();
    let pb: Vec<f64> = rb.iter().map(|(_, r)| *r).collect();
    let deltas = ra
        .iter()
        .zip(rb.iter())
        .map(|((v, rate_a), (_, rate_b))| (*v, rate_b - rate_a))
        .collect();
    Ok(Comparison {
        deltas,
        jsd_base2: jsd(&pa, &pb, LogBase::Two)?,
        jsd_natural: jsd(&pa, &pb, LogBase::Natural)?,
    })
}

fn fmt_rate(rate: Option<f64>) -> String {
    match rate {
        Some(r) => format!("{r:.2}"),
        None => "N/A".to_string(),
    }
}

/// Plain-text table: vector, cases, vulnerable, errors, rate, then category
/// and overall macro rows, plus the JSD line when a baseline is compared.
pub fn render_text(report: &Report, comparison: Option<&Comparison>) -> String {
    let mut out = String::new();
    let delta_for = |vector: VectorId| -> Option<f64> {
        comparison.and_then(|c| {
            c.deltas
                .iter()
                .find(|(v, _)| *v == vector)
                .map(|(_, d)| *d)
        })
    };
    out.push_str(&format!(
        "{:<8}{:>8}{:>12}{:>8}{:>10}",
        "vector", "cases", "vulnerable", "errors", "rate"
    ));
    if comparison.is_some() {
        out.push_str(&format!("{:>10}", "delta"));
    }
    out.push('\n');
    for stats in &report.per_vector {
        out.push_str(&format!(
            "{:<8}{:>8}{:>12}{:>8}{:>10}",
            stats.vector.name(),
            stats.total,
            stats.vulnerable,
            stats.errors,
            fmt_rate(stats.rate)
        ));
        if comparison.is_some() {
            match delta_for(stats.vector) {
                Some(d) => out.push_str(&format!("{:>10}", format!("{d:+.2}"))),
                None => out.push_str(&format!("{:>10}", "")),
            }
        }
        out.push('\n');
    }
    for (category, rate) in &report.per_category {
        if rate.is_some() {
            out.push_str(&format!(
                "{:?} ({}) macro-average: {}\n",
                category,
                category.label(),
                fmt_rate(*rate)
            ));
        }
    }
    out.push_str(&format!("Overall macro-average: {}\n", fmt_rate(report.overall)));
    if let Some(c) = comparison {
        out.push_str(&format!(
            "JSD(A,B): {:.4} (base-2), {:.4} (natural log)\n",
            c.jsd_base2, c.jsd_natural
        ));
    }
    if report
        .per_vector
        .iter()
        .any(|s| s.vector == VectorId::V10 && s.total > 0)
    {
        out.push_str("note: V10 counts any unfixed site skipped by a jump as vulnerable\n");
    }
    for warning in &report.warnings {
        out.push_str(&format!("warning: {warning}\n"));
    }
    out
}

/// CSV with stable columns vector,cases,vulnerable,errors,rate[,delta].
pub fn render_csv(report: &Report, comparison: Option<&Comparison>) -> String {
    let mut out = String::from("vector,cases,vulnerable,errors,rate");
    if comparison.is_some() {
        out.push_str(",delta");
    }
    out.push('\n');
    for stats in &report.per_vector {
        out.push_str(&format!(
            "{},{},{},{},{}",
            stats.vector.name(),
            stats.total,
            stats.vulnerable,
            stats.errors,
            fmt_rate(stats.rate)
        ));
        if let Some(c) = comparison {
            let delta = c
                .deltas
                .iter()
                .find(|(v, _)| *v == stats.vector)
                .map(|(_, d)| format!("{d:.2}"))
                .unwrap_or_default();
            out.push(',');
            out.push_str(&delta);
        }
        out.push('\n');
    }
    out
}

/// Synthetic results for rate-arithmetic checks: `vulnerable` of `total`
/// vulnerable runs for one vector.
pub fn synthetic_results(vector: VectorId, total: usize, vulnerable: usize) -> Vec<RunResult> {
    (0..total)
        .map(|i| RunResult {
            schema: 1,
            case_id: format!("{}-{i:05}", vector.name().to_lowercase()),
            vector,
            verdict: if i < vulnerable {
                RunVerdict::Vulnerable
            } else {
                RunVerdict::Safe
            },
            evidence: Vec::new(),
            steps: Vec::new(),
            wall_ms: None,
            rep: 0,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_from_counts(counts: &[(VectorId, usize, usize)]) -> Report {
        let mut results = Vec::new();
        for (vector, total, vulnerable) in counts {
            results.extend(synthetic_results(*vector, *total, *vulnerable));
        }
        aggregate(&results)
    }

    #[test]
    fn rate_excludes_errors_from_denominator() {
        let mut results = synthetic_results(VectorId::V1, 10, 9);
        results[9].verdict = RunVerdict::Error;
        let report = aggregate(&results);
        let stats = report.stats(VectorId::V1).unwrap();
        assert_eq!(stats.total, 10);
        assert_eq!(stats.errors, 1);
        assert!((stats.rate.unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn all_error_vector_is_na_with_warning() {
        let mut results = synthetic_results(VectorId::V2, 3, 0);
        for r in &mut results {
            r.verdict = RunVerdict::Error;
        }
        let report = aggregate(&results);
        assert!(report.stats(VectorId::V2).unwrap().rate.is_none());
        assert!(report.overall.is_none());
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn all_safe_is_zero_everywhere() {
        let report = report_from_counts(&[
            (VectorId::V1, 5, 0),
            (VectorId::V2, 5, 0),
        ]);
        assert_eq!(report.overall, Some(0.0));
    }

    #[test]
    fn aggregation_is_permutation_invariant() {
        let mut results = synthetic_results(VectorId::V1, 10, 4);
        results.extend(synthetic_results(VectorId::V7, 10, 3));
        let report_a = aggregate(&results);
        results.reverse();
        let report_b = aggregate(&results);
        assert_eq!(report_a.per_vector, report_b.per_vector);
        assert_eq!(report_a.overall, report_b.overall);
    }

    #[test]
    fn identical_reports_compare_to_zero() {
        let report = report_from_counts(&[(VectorId::V1, 10, 5), (VectorId::V2, 10, 2)]);
        let c = compare(&report, &report).unwrap();
        assert!(c.deltas.iter().all(|(_, d)| *d == 0.0));
        assert_eq!(c.jsd_base2, 0.0);
    }

    #[test]
    fn disjoint_distributions_hit_base2_max() {
        let v = jsd(&[1.0, 0.0], &[0.0, 1.0], LogBase::Two).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn jsd_rejects_degenerate_inputs() {
        assert!(jsd(&[], &[], LogBase::Two).is_err());
        assert!(jsd(&[0.0], &[1.0], LogBase::Two).is_err());
        assert!(jsd(&[1.0], &[1.0, 2.0], LogBase::Two).is_err());
        assert!(jsd(&[-1.0, 2.0], &[1.0, 1.0], LogBase::Two).is_err());
    }

    #[test]
    fn mismatched_vector_sets_rejected() {
        let a = report_from_counts(&[(VectorId::V1, 10, 5)]);
        let b = report_from_counts(&[(VectorId::V2, 10, 5)]);
        assert!(matches!(compare(&a, &b), Err(ReportError::MismatchedVectors(..))));
    }

    #[test]
    fn csv_round_trips() {
        let report = report_from_counts(&[
            (VectorId::V1, 100, 90),
            (VectorId::V9, 10000, 4639),
        ]);
        let csv = render_csv(&report, None);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "vector,cases,vulnerable,errors,rate");
        for (line, stats) in lines.zip(&report.per_vector) {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields[0], stats.vector.name());
            assert_eq!(fields[1].parse::<usize>().unwrap(), stats.total);
            assert_eq!(fields[2].parse::<usize>().unwrap(), stats.vulnerable);
            assert_eq!(fields[3].parse::<usize>().unwrap(), stats.errors);
            let parsed: f64 = fields[4].parse().unwrap();
            assert!((parsed - stats.rate.unwrap()).abs() < 0.005);
        }
    }

    #[test]
    fn two_decimal_rendering() {
        let report = report_from_counts(&[(VectorId::V9, 10000, 4639)]);
        let text = render_text(&report, None);
        assert!(text.contains("46.39"));
    }
}
