//! Evaluation metrics over conversation logs and cross-configuration
//! significance testing.

mod classifier;
mod stats;

pub use classifier::MessageClassifier;
pub use stats::{
    compare_configs, compare_with, improvement_percent, mann_whitney_u, welch_t_test, Comparison,
    SignificanceTest, TestOutcome,
};

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::compute_completion;
use crate::domain::{
    CompletionStatus, ConfigId, ConversationLog, ExpectedAttributes, ExplainabilityTier,
    MatchRules, Menu, MessageAttributes, Outcome, Persona, TaskState,
};

pub const PAS_WEIGHT: f64 = 0.25;
pub const BVS_WEIGHT: f64 = 0.20;
pub const TRA_WEIGHT: f64 = 0.35;
pub const DEI_WEIGHT: f64 = 0.20;

/// Transition rate at which behavioral variance peaks.
pub const BVS_PEAK: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no scoreable guest messages")]
    NoScoreableMessages,
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("need at least {needed} samples per group, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MessageScoreBreakdown {
    pub c1_exploration: u8,
    pub c2_mood: u8,
    pub c3_execution: u8,
    pub c4_completion: u8,
    pub score: f64,
}

pub fn message_score(
    attrs: &MessageAttributes,
    expected: &ExpectedAttributes,
    true_completion: CompletionStatus,
) -> MessageScoreBreakdown {
    let c1 = u8::from(attrs.exploration_style == expected.exploration_style);
    let c2 = u8::from(attrs.mood_tone == expected.mood_tone);
    let c3 = u8::from(attrs.task_execution_style == expected.task_execution_style);
    let c4 = u8::from(attrs.task_completion_status == true_completion);
    MessageScoreBreakdown {
        c1_exploration: c1,
        c2_mood: c2,
        c3_execution: c3,
        c4_completion: c4,
        score: 0.25 * f64::from(c1 + c2 + c3 + c4),
    }
}

/// Mean message score.
pub fn persona_adherence(scores: &[MessageScoreBreakdown]) -> Result<f64, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::NoScoreableMessages);
    }
    Ok(scores.iter().map(|s| s.score).sum::<f64>() / scores.len() as f64)
}

/// Fraction of adjacent pairs that differ; 0 for fewer than two states.
pub fn transition_rate<T: PartialEq>(states: &[T]) -> f64 {
    if states.len() < 2 {
        return 0.0;
    }
    let changes = states.windows(2).filter(|w| w[0] != w[1]).count();
    changes as f64 / (states.len() - 1) as f64
}

pub fn bvs_from_rate(tr_avg: f64) -> f64 {
    if tr_avg <= BVS_PEAK {
        tr_avg / BVS_PEAK
    } else {
        1.0 - (tr_avg - BVS_PEAK) / (1.0 - BVS_PEAK)
    }
}

/// Behavioral variance over the mood, execution and exploration sequences.
pub fn behavioral_variance(attrs: &[MessageAttributes]) -> f64 {
    let mood: Vec<_> = attrs.iter().map(|a| a.mood_tone).collect();
    let exec: Vec<_> = attrs.iter().map(|a| a.task_execution_style).collect();
    let explore: Vec<_> = attrs.iter().map(|a| a.exploration_style).collect();
    let tr = (transition_rate(&mood) + transition_rate(&exec) + transition_rate(&explore)) / 3.0;
    bvs_from_rate(tr).clamp(0.0, 1.0)
}

/// F1 between the normalized current and target item multisets.
pub fn task_adherence(state: &TaskState, rules: &MatchRules) -> f64 {
    let mut target: HashMap<_, usize> = HashMap::new();
    for item in state.target() {
        if let Some(k) = rules.key(item) {
            *target.entry(k).or_default() += 1;
        }
    }
    let mut hits = 0usize;
    for item in state.current() {
        if let Some(k) = rules.key(item) {
            if let Some(n) = target.get_mut(&k).filter(|n| **n > 0) {
                *n -= 1;
                hits += 1;
            }
        }
    }
    let (c, t) = (state.current().len(), state.target().len());
    if c == 0 || t == 0 || hits == 0 {
        return 0.0;
    }
    let precision = hits as f64 / c as f64;
    let recall = hits as f64 / t as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Explainability from `explained` tool-call traces over `messages` guest
/// messages.
pub fn decision_explainability(explained: usize, messages: usize, tier: ExplainabilityTier) -> f64 {
    if messages == 0 {
        return 0.0;
    }
    let ratio = explained as f64 / messages as f64;
    match tier {
        ExplainabilityTier::None => 0.0,
        ExplainabilityTier::Basic => (ratio * 0.2).min(0.2),
        ExplainabilityTier::BasicPlusOne => (ratio * 0.5).min(0.5),
        ExplainabilityTier::Full => (ratio / 2.0).min(1.0),
    }
}

pub fn composite_score(pas: f64, bvs: f64, tra: f64, dei: f64) -> Result<f64, MetricsError> {
    for (name, value) in [("pas", pas), ("bvs", bvs), ("tra", tra), ("dei", dei)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(MetricsError::OutOfRange { name, value });
        }
    }
    Ok(PAS_WEIGHT * pas + BVS_WEIGHT * bvs + TRA_WEIGHT * tra + DEI_WEIGHT * dei)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub pas: f64,
    pub bvs: f64,
    pub tra: f64,
    pub dei: f64,
    pub crrs: f64,
}

impl MetricValues {
    pub const NAMES: [&'static str; 5] = ["pas", "bvs", "tra", "dei", "crrs"];

    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "pas" => self.pas,
            "bvs" => self.bvs,
            "tra" => self.tra,
            "dei" => self.dei,
            "crrs" => self.crrs,
            _ => return None,
        })
    }

    pub fn from_components(pas: f64, bvs: f64, tra: f64, dei: f64) -> Result<Self, MetricsError> {
        Ok(Self {
            pas,
            bvs,
            tra,
            dei,
            crrs: composite_score(pas, bvs, tra, dei)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationMetrics {
    pub test_case_id: String,
    pub persona_id: String,
    pub config_id: ConfigId,
    pub outcome: Outcome,
    #[serde(flatten)]
    pub values: MetricValues,
    pub guest_messages: usize,
    pub scoreable_messages: usize,
    pub explained_decisions: usize,
    /// Attributes came from the message classifier instead of snapshots.
    pub inferred_attributes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub config_id: ConfigId,
    pub conversations: usize,
    pub completed: usize,
    #[serde(flatten)]
    pub means: MetricValues,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub baseline: ConfigId,
    pub candidate: ConfigId,
    pub baseline_mean: f64,
    pub candidate_mean: f64,
    pub p_value: f64,
    pub improvement_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_conversation: Vec<ConversationMetrics>,
    pub per_config: Vec<ConfigSummary>,
    pub comparisons: Vec<MetricComparison>,
    pub warnings: Vec<String>,
}

/// Scores logs against their personas.
pub struct Scorer {
    rules: MatchRules,
    classifier: MessageClassifier,
}

impl Scorer {
    pub fn new(menu: &Menu, rules: MatchRules) -> Self {
        let classifier = MessageClassifier::new(menu, &rules.normalizer);
        Self { rules, classifier }
    }

    pub fn with_classifier(rules: MatchRules, classifier: MessageClassifier) -> Self {
        Self { rules, classifier }
    }

    pub fn rules(&self) -> &MatchRules {
        &self.rules
    }

    /// Attributes of each guest message, from snapshots when the log has
    /// any and from the classifier otherwise.
    pub fn message_attributes(
        &self,
        log: &ConversationLog,
    ) -> (Vec<Option<MessageAttributes>>, bool) {
        let guest: Vec<_> = log.guest_turns().collect();
        if guest.iter().any(|t| t.attributes_snapshot.is_some()) {
            (guest.iter().map(|t| t.attributes_snapshot).collect(), false)
        } else {
            let inferred = self
                .classifier
                .classify_sequence(guest.iter().map(|t| t.content.as_str()));
            (inferred.into_iter().map(Some).collect(), true)
        }
    }

    pub fn score(
        &self,
        log: &ConversationLog,
        persona: &Persona,
        warnings: &mut Vec<String>,
    ) -> ConversationMetrics {
        let guest: Vec<_> = log.guest_turns().collect();
        let (attrs, inferred) = self.message_attributes(log);
        let scores: Vec<_> = guest
            .iter()
            .zip(&attrs)
            .filter_map(|(turn, a)| {
                let a = a.as_ref()?;
                let state = turn.judged_state()?;
                let truth = compute_completion(state.current(), state.target(), &self.rules);
                Some(message_score(a, &persona.expected_attributes, truth))
            })
            .collect();
        let pas = persona_adherence(&scores).unwrap_or_else(|e| {
            warnings.push(format!(
                "{} config {}: {e}, PAS set to 0",
                log.test_case_id, log.config_id
            ));
            0.0
        });
        let present: Vec<_> = attrs.iter().flatten().copied().collect();
        let bvs = behavioral_variance(&present);
        let tra = task_adherence(&log.final_state, &self.rules);
        let explained: usize = guest.iter().map(|t| t.tool_calls.len()).sum();
        let dei = decision_explainability(explained, guest.len(), log.config_id.tier());
        let values = MetricValues::from_components(pas, bvs, tra, dei)
            .expect("metric components lie in [0, 1]");
        ConversationMetrics {
            test_case_id: log.test_case_id.clone(),
            persona_id: log.persona_id.clone(),
            config_id: log.config_id,
            outcome: log.outcome,
            values,
            guest_messages: guest.len(),
            scoreable_messages: scores.len(),
            explained_decisions: explained,
            inferred_attributes: inferred,
        }
    }

    /// Scores every log; logs whose persona is unknown are skipped with a
    /// warning.
    pub fn report(&self, logs: &[ConversationLog], personas: &[Persona]) -> MetricsReport {
        let mut warnings = Vec::new();
        let mut per_conversation = Vec::new();
        for log in logs {
            match personas.iter().find(|p| p.id == log.persona_id) {
                Some(p) => per_conversation.push(self.score(log, p, &mut warnings)),
                None => warnings.push(format!(
                    "{}: unknown persona `{}`, log skipped",
                    log.test_case_id, log.persona_id
                )),
            }
        }
        let per_config = summarize(&per_conversation);
        let comparisons = match baseline_comparisons(&per_conversation) {
            Ok(c) => c,
            Err(w) => {
                warnings.push(w);
                Vec::new()
            }
        };
        MetricsReport {
            per_conversation,
            per_config,
            comparisons,
            warnings,
        }
    }
}

pub fn summarize(per_conversation: &[ConversationMetrics]) -> Vec<ConfigSummary> {
    let mut groups: BTreeMap<ConfigId, Vec<&ConversationMetrics>> = BTreeMap::new();
    for m in per_conversation {
        groups.entry(m.config_id).or_default().push(m);
    }
    groups
        .into_iter()
        .map(|(config_id, ms)| {
            let n = ms.len() as f64;
            let avg =
                |f: fn(&MetricValues) -> f64| ms.iter().map(|m| f(&m.values)).sum::<f64>() / n;
            ConfigSummary {
                config_id,
                conversations: ms.len(),
                completed: ms
                    .iter()
                    .filter(|m| m.outcome == Outcome::Completed)
                    .count(),
                means: MetricValues {
                    pas: avg(|v| v.pas),
                    bvs: avg(|v| v.bvs),
                    tra: avg(|v| v.tra),
                    dei: avg(|v| v.dei),
                    crrs: avg(|v| v.crrs),
                },
            }
        })
        .collect()
}

/// Per-metric comparisons of `candidate` against `baseline` samples.
pub fn compare_groups(
    baseline: &[&ConversationMetrics],
    candidate: &[&ConversationMetrics],
    test: SignificanceTest,
) -> Result<Vec<MetricComparison>, MetricsError> {
    let (Some(b), Some(c)) = (baseline.first(), candidate.first()) else {
        return Err(MetricsError::InsufficientSamples { needed: 2, got: 0 });
    };
    MetricValues::NAMES
        .iter()
        .map(|name| {
            let a: Vec<f64> = baseline.iter().filter_map(|m| m.values.get(name)).collect();
            let bb: Vec<f64> = candidate
                .iter()
                .filter_map(|m| m.values.get(name))
                .collect();
            let cmp = compare_with(&a, &bb, test)?;
            Ok(MetricComparison {
                metric: (*name).to_owned(),
                baseline: b.config_id,
                candidate: c.config_id,
                baseline_mean: cmp.mean_a,
                candidate_mean: cmp.mean_b,
                p_value: cmp.p_value,
                improvement_percent: cmp.improvement_percent,
            })
        })
        .collect()
}

/// Highest configuration against the lowest one present; empty when only
/// one configuration is present.
fn baseline_comparisons(
    per_conversation: &[ConversationMetrics],
) -> Result<Vec<MetricComparison>, String> {
    let configs: std::collections::BTreeSet<_> =
        per_conversation.iter().map(|m| m.config_id).collect();
    let (Some(lo), Some(hi)) = (configs.first().copied(), configs.last().copied()) else {
        return Err("no conversations to compare".into());
    };
    if lo == hi {
        return Ok(Vec::new());
    }
    let pick = |c: ConfigId| {
        per_conversation
            .iter()
            .filter(|m| m.config_id == c)
            .collect::<Vec<_>>()
    };
    compare_groups(&pick(lo), &pick(hi), SignificanceTest::Welch)
        .map_err(|e| format!("configuration {hi} vs {lo}: {e}, significance section omitted"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ExecutionStyle, ExplorationStyle, MoodTone, TaskItem};
    use approx::assert_abs_diff_eq;

    fn expected() -> ExpectedAttributes {
        ExpectedAttributes {
            mood_tone: MoodTone::Casual,
            task_execution_style: ExecutionStyle::OneByOne,
            exploration_style: ExplorationStyle::Explores,
        }
    }

    #[test]
    fn message_score_counts_matches() {
        let all = MessageAttributes::from_expected(&expected(), CompletionStatus::Incomplete);
        assert_eq!(
            message_score(&all, &expected(), CompletionStatus::Incomplete).score,
            1.0
        );
        let two = MessageAttributes {
            mood_tone: MoodTone::Frustrated,
            ..all
        };
        let two = message_score(&two, &expected(), CompletionStatus::Complete);
        assert_eq!((two.c2_mood, two.c4_completion, two.score), (0, 0, 0.5));
        let none = MessageAttributes {
            mood_tone: MoodTone::Confused,
            task_execution_style: ExecutionStyle::AllAtOnce,
            exploration_style: ExplorationStyle::DoesNotExplore,
            task_completion_status: CompletionStatus::Complete,
        };
        assert_eq!(
            message_score(&none, &expected(), CompletionStatus::Incomplete).score,
            0.0
        );
    }

    #[test]
    fn pas_is_mean() {
        let mk = |score| MessageScoreBreakdown {
            c1_exploration: 0,
            c2_mood: 0,
            c3_execution: 0,
            c4_completion: 0,
            score,
        };
        let s: Vec<_> = [1.0, 0.5, 0.75, 0.75].into_iter().map(mk).collect();
        assert_eq!(persona_adherence(&s).unwrap(), 0.75);
        assert_eq!(persona_adherence(&[mk(0.25)]).unwrap(), 0.25);
        assert_eq!(
            persona_adherence(&[]),
            Err(MetricsError::NoScoreableMessages)
        );
    }

    #[test]
    fn transition_rates() {
        use MoodTone::*;
        assert_abs_diff_eq!(
            transition_rate(&[Casual, Casual, Frustrated, Casual]),
            2.0 / 3.0
        );
        assert_eq!(transition_rate(&[Casual; 4]), 0.0);
        assert_eq!(transition_rate(&[Casual, Confused, Casual]), 1.0);
        assert_eq!(transition_rate(&[Casual]), 0.0);
    }

    #[test]
    fn bvs_branches() {
        assert_eq!(bvs_from_rate(0.2), 1.0);
        assert_eq!(bvs_from_rate(0.0), 0.0);
        assert_abs_diff_eq!(bvs_from_rate(0.6), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn tra_examples() {
        let rules = MatchRules::default();
        let t = vec![
            TaskItem::single("veggie burger"),
            TaskItem::single("large fries"),
        ];
        let full = TaskState::from_parts(t.clone(), t.clone());
        assert_eq!(task_adherence(&full, &rules), 1.0);
        let half = TaskState::from_parts(vec![TaskItem::single("the veggie burger")], t.clone());
        assert_abs_diff_eq!(task_adherence(&half, &rules), 2.0 / 3.0, epsilon = 1e-12);
        let none = TaskState::from_parts(vec![TaskItem::single("cola")], t.clone());
        assert_eq!(task_adherence(&none, &rules), 0.0);
        assert_eq!(task_adherence(&TaskState::new(t), &rules), 0.0);
    }

    #[test]
    fn dei_tiers() {
        assert_eq!(
            decision_explainability(40, 10, ExplainabilityTier::None),
            0.0
        );
        assert_eq!(
            decision_explainability(20, 10, ExplainabilityTier::Full),
            1.0
        );
        assert_abs_diff_eq!(
            decision_explainability(10, 10, ExplainabilityTier::Basic),
            0.2
        );
        assert_eq!(decision_explainability(5, 0, ExplainabilityTier::Full), 0.0);
    }

    #[test]
    fn composite_range_check() {
        assert_eq!(composite_score(0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(
            composite_score(1.2, 0.0, 0.0, 0.0),
            Err(MetricsError::OutOfRange { name: "pas", .. })
        ));
    }
}
