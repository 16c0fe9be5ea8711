use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::RunResult;
use crate::domain::ConfigId;
use crate::metrics::{
    compare_groups, ConversationMetrics, MetricComparison, MetricValues, SignificanceTest,
};

/// Decimal places used for metric means and percentages.
const METRIC_DP: i32 = 3;

fn round_dp(x: f64, dp: i32) -> f64 {
    let f = 10f64.powi(dp);
    let r = (x * f).round() / f;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Four significant digits, the precision the markdown prints.
fn round_sig(x: f64) -> f64 {
    format!("{x:.3e}").parse().expect("formatted float parses")
}

fn fmt_p(x: f64) -> String {
    format!("{x:.3e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub config_id: ConfigId,
    pub conversations: usize,
    pub completed: usize,
    pub pas: f64,
    pub bvs: f64,
    pub tra: f64,
    pub dei: f64,
    pub crrs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub config_id: ConfigId,
    pub avg_tokens: f64,
    pub avg_latency_seconds: f64,
    pub responses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub metric: String,
    pub baseline_mean: f64,
    pub candidate_mean: f64,
    pub p_value: f64,
    pub improvement_percent: f64,
}

/// Cross-configuration summary: metric means, computational cost and the
/// candidate-versus-baseline significance rows. Values are rounded to the
/// precision printed in the markdown rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub deterministic: bool,
    pub metrics: Vec<MetricsRow>,
    pub costs: Vec<CostRow>,
    pub baseline: Option<ConfigId>,
    pub candidate: Option<ConfigId>,
    pub significance: Vec<SignificanceRow>,
    pub warnings: Vec<String>,
}

fn metrics_row(config_id: ConfigId, ms: &[&ConversationMetrics]) -> MetricsRow {
    let n = ms.len().max(1) as f64;
    let avg = |f: fn(&MetricValues) -> f64| {
        round_dp(ms.iter().map(|m| f(&m.values)).sum::<f64>() / n, METRIC_DP)
    };
    MetricsRow {
        config_id,
        conversations: ms.len(),
        completed: ms
            .iter()
            .filter(|m| m.outcome == crate::domain::Outcome::Completed)
            .count(),
        pas: avg(|v| v.pas),
        bvs: avg(|v| v.bvs),
        tra: avg(|v| v.tra),
        dei: avg(|v| v.dei),
        crrs: avg(|v| v.crrs),
    }
}

/// Builds the report from one result per configuration. The significance
/// section compares the full system against the baseline when both are
/// present and otherwise the highest against the lowest configuration.
pub fn aggregate_report(results: &[RunResult]) -> AblationReport {
    let mut sorted: Vec<&RunResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.config_id);
    let mut warnings: Vec<String> = Vec::new();
    for r in &sorted {
        warnings.extend(
            r.report
                .warnings
                .iter()
                .map(|w| format!("config {}: {w}", r.config_id)),
        );
    }

    let metrics = sorted
        .iter()
        .map(|r| {
            metrics_row(
                r.config_id,
                &r.report.per_conversation.iter().collect::<Vec<_>>(),
            )
        })
        .collect();
    let costs = sorted
        .iter()
        .map(|r| CostRow {
            config_id: r.config_id,
            avg_tokens: round_dp(r.telemetry_summary.avg_tokens_per_response, 0),
            avg_latency_seconds: round_dp(r.telemetry_summary.avg_latency_seconds, 2),
            responses: r.telemetry_summary.responses,
        })
        .collect();

    let find = |c: ConfigId| sorted.iter().find(|r| r.config_id == c).copied();
    let pair = match (find(ConfigId::Baseline), find(ConfigId::Full)) {
        (Some(b), Some(c)) => Some((b, c)),
        _ if sorted.len() >= 2 => Some((sorted[0], sorted[sorted.len() - 1])),
        _ => None,
    };
    let mut significance = Vec::new();
    let (mut baseline, mut candidate) = (None, None);
    match pair {
        None => warnings.push(format!(
            "{} configuration(s) present, at least 2 are needed for the significance section",
            sorted.len()
        )),
        Some((b, c)) => {
            let a: Vec<_> = b.report.per_conversation.iter().collect();
            let bb: Vec<_> = c.report.per_conversation.iter().collect();
            match compare_groups(&a, &bb, SignificanceTest::Welch) {
                Ok(rows) => {
                    baseline = Some(b.config_id);
                    candidate = Some(c.config_id);
                    significance = rows
                        .into_iter()
                        .map(|r| SignificanceRow {
                            metric: r.metric,
                            baseline_mean: round_dp(r.baseline_mean, METRIC_DP),
                            candidate_mean: round_dp(r.candidate_mean, METRIC_DP),
                            p_value: round_sig(r.p_value),
                            improvement_percent: round_dp(r.improvement_percent, 1),
                        })
                        .collect();
                }
                Err(e) => warnings.push(format!("config {} vs {}: {e}", c.config_id, b.config_id)),
            }
        }
    }

    AblationReport {
        deterministic: sorted.iter().all(|r| r.deterministic),
        metrics,
        costs,
        baseline,
        candidate,
        significance,
        warnings,
    }
}

impl AblationReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Ablation report\n\n");
        let mode = if self.deterministic {
            "scripted (deterministic)"
        } else {
            "remote (nondeterministic)"
        };
        let _ = writeln!(out, "Mode: {mode}\n");

        out.push_str("## Evaluation metrics\n\n");
        out.push_str("| Config | PAS | BVS | TRA | DEI | CRRS | Completed |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for r in &self.metrics {
            let _ = writeln!(
                out,
                "| Config {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {}/{} |",
                r.config_id, r.pas, r.bvs, r.tra, r.dei, r.crrs, r.completed, r.conversations
            );
        }

        out.push_str("\n## Response computation costs\n\n");
        out.push_str("| Config | Avg. Tokens | Avg. Latency(s) |\n");
        out.push_str("|---|---|---|\n");
        for c in &self.costs {
            let _ = writeln!(
                out,
                "| Config {} | {:.0} | {:.2} |",
                c.config_id, c.avg_tokens, c.avg_latency_seconds
            );
        }

        if let (Some(b), Some(c)) = (self.baseline, self.candidate) {
            let _ = writeln!(
                out,
                "\n## Statistical significance: Config {c} vs Config {b}\n"
            );
            let _ = writeln!(
                out,
                "| Metric | Config {b} | Config {c} | p-value | Improvement |"
            );
            out.push_str("|---|---|---|---|---|\n");
            for s in &self.significance {
                let _ = writeln!(
                    out,
                    "| {} | {:.3} | {:.3} | {} | {:+.1}% |",
                    s.metric.to_uppercase(),
                    s.baseline_mean,
                    s.candidate_mean,
                    fmt_p(s.p_value),
                    s.improvement_percent
                );
            }
        }

        if !self.warnings.is_empty() {
            out.push_str("\n## Warnings\n\n");
            for w in &self.warnings {
                let _ = writeln!(out, "- {w}");
            }
        }
        out
    }
}

/// Candidate-versus-baseline comparison of two stored runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub baseline: String,
    pub candidate: String,
    pub test: SignificanceTest,
    pub comparisons: Vec<MetricComparison>,
}

impl PairwiseReport {
    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "# Comparison\n\nBaseline: {}\nCandidate: {}\n\n",
            self.baseline, self.candidate
        );
        out.push_str(
            "| Metric | Baseline | Candidate | p-value | Improvement |\n|---|---|---|---|---|\n",
        );
        for r in &self.comparisons {
            let _ = writeln!(
                out,
                "| {} | {:.3} | {:.3} | {} | {:+.1}% |",
                r.metric.to_uppercase(),
                r.baseline_mean,
                r.candidate_mean,
                fmt_p(r.p_value),
                r.improvement_percent
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_matches_printing() {
        for x in [0.000294135, 5.57e-96, 1.0, 0.98714] {
            let r = round_sig(x);
            assert_eq!(fmt_p(r).parse::<f64>().unwrap(), r);
        }
        assert_eq!(round_dp(0.81849, 3), 0.818);
        assert_eq!(round_dp(-0.0001, 3), 0.0);
    }
}
