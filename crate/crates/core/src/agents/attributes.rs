use std::sync::Arc;

use rand::Rng;

use super::prompts::{render, state_text, PromptSet, NOT_AVAILABLE};
use super::state::{compute_completion, pending_items};
use super::{rng_for, transcript, AgentError, Utterance};
use crate::domain::{
    CompletionStatus, ExecutionStyle, ExplorationStyle, MatchRules, MessageAttributes, MoodTone,
    Persona, Role, TaskState, TelemetryRecord,
};
use crate::gateway::{
    self, estimated_telemetry, ChatBackend, ChatMessage, ChatRequest, SIMULATION_TEMPERATURE,
};

/// Phrase an untracked guest uses to announce its final item.
pub const LAST_ITEM_PHRASE: &str = "That's my last item.";

/// What the message attributes agent sees for one guest turn.
#[derive(Debug, Clone, Copy)]
pub struct AttributeInput<'a> {
    pub test_case_id: &'a str,
    pub persona: &'a Persona,
    /// Tracked state; absent when the configuration has no state tracker.
    pub state: Option<&'a TaskState>,
    pub history: &'a [Utterance],
    /// Guest turn number, starting at 1.
    pub turn: u32,
    pub previous: Option<MessageAttributes>,
    /// Consecutive turns in which the tracked order did not grow.
    pub stalled_turns: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Proposal {
    pub attributes: MessageAttributes,
    pub telemetry: TelemetryRecord,
}

/// Chooses the attributes of the next guest message.
pub trait AttributePolicy: Send + Sync {
    fn propose(&self, input: &AttributeInput<'_>) -> Result<Proposal, AgentError>;
}

/// Runs the policy and, when a tracked state exists, overwrites the
/// completion status with the value computed from that state.
pub fn generate_attributes(
    input: &AttributeInput<'_>,
    policy: &dyn AttributePolicy,
    rules: &MatchRules,
) -> Result<Proposal, AgentError> {
    let mut proposal = policy.propose(input)?;
    if let Some(state) = input.state {
        proposal.attributes.task_completion_status =
            compute_completion(state.current(), state.target(), rules);
    }
    Ok(proposal)
}

pub fn attributes_request(prompts: &PromptSet, input: &AttributeInput<'_>) -> ChatRequest {
    let state = input
        .state
        .map(state_text)
        .unwrap_or_else(|| NOT_AVAILABLE.to_owned());
    let system = render(
        &prompts.message_attributes,
        &[
            ("persona_bio", &input.persona.biography),
            ("state", &state),
            ("history", &transcript(input.history, 8)),
        ],
    );
    ChatRequest {
        model: String::new(),
        messages: vec![
            ChatMessage::system(system),
            ChatMessage::user("Choose the attributes for the guest's next message."),
        ],
        tools: Vec::new(),
        temperature: SIMULATION_TEMPERATURE,
    }
}

/// Parses the JSON object a model returned, keeping the raw text on error.
pub fn parse_attributes(raw: &str) -> Result<MessageAttributes, AgentError> {
    let fail = |message: String| AgentError::AttributeParse {
        message,
        raw: raw.to_owned(),
    };
    let start = raw.find('{').ok_or_else(|| fail("no JSON object".into()))?;
    let end = raw
        .rfind('}')
        .ok_or_else(|| fail("no JSON object".into()))?;
    if end < start {
        return Err(fail("no JSON object".into()));
    }
    let value: serde_json::Value =
        serde_json::from_str(&raw[start..=end]).map_err(|e| fail(e.to_string()))?;
    let field = |name: &str| -> Result<&str, AgentError> {
        value
            .get(name)
            .and_then(|v| v.as_str())
            .ok_or_else(|| fail(format!("missing field {name}")))
    };
    Ok(MessageAttributes {
        mood_tone: field("mood_tone")?
            .parse()
            .map_err(|e: crate::domain::ParseAttributeError| fail(e.to_string()))?,
        task_execution_style: field("task_execution_style")?
            .parse()
            .map_err(|e: crate::domain::ParseAttributeError| fail(e.to_string()))?,
        exploration_style: field("exploration_style")?
            .parse()
            .map_err(|e: crate::domain::ParseAttributeError| fail(e.to_string()))?,
        task_completion_status: field("task_completion_status")?
            .parse()
            .map_err(|e: crate::domain::ParseAttributeError| fail(e.to_string()))?,
    })
}

/// Message attributes agent backed by a chat model.
pub struct LlmAttributePolicy {
    backend: Arc<dyn ChatBackend>,
    prompts: Arc<PromptSet>,
}

impl LlmAttributePolicy {
    pub fn new(backend: Arc<dyn ChatBackend>, prompts: Arc<PromptSet>) -> Self {
        Self { backend, prompts }
    }
}

impl AttributePolicy for LlmAttributePolicy {
    fn propose(&self, input: &AttributeInput<'_>) -> Result<Proposal, AgentError> {
        let request = attributes_request(&self.prompts, input);
        let result = gateway::complete(self.backend.as_ref(), &request)?;
        Ok(Proposal {
            attributes: parse_attributes(&result.message.content)?,
            telemetry: result.telemetry,
        })
    }
}

/// Deterministic policy: persona defaults with seeded, state-driven
/// transitions.
///
/// With a tracked state the first turn uses the persona profile exactly.
/// Later turns turn confused after one stalled turn and frustrated after
/// two, switch to giving everything at once when stalled, stop exploring
/// once half the order is in, and occasionally drift to a neighboring mood.
/// Without a tracked state the profile stays fixed and completion is read
/// from the guest announcing its last item.
#[derive(Debug, Clone)]
pub struct ScriptedAttributePolicy {
    seed: u64,
    rules: MatchRules,
    prompts: Arc<PromptSet>,
}

impl ScriptedAttributePolicy {
    pub const MOOD_DRIFT: f64 = 0.15;

    pub fn new(seed: u64, rules: MatchRules, prompts: Arc<PromptSet>) -> Self {
        Self {
            seed,
            rules,
            prompts,
        }
    }

    fn choose(&self, input: &AttributeInput<'_>) -> MessageAttributes {
        let expected = input.persona.expected_attributes;
        let Some(state) = input.state else {
            let announced = input
                .history
                .iter()
                .any(|u| u.role == Role::Guest && u.text.contains(LAST_ITEM_PHRASE));
            return MessageAttributes::from_expected(
                &expected,
                CompletionStatus::from_bool(announced),
            );
        };
        let status = compute_completion(state.current(), state.target(), &self.rules);
        if input.turn <= 1 {
            return MessageAttributes::from_expected(&expected, status);
        }
        let mut rng = rng_for(self.seed, input.test_case_id, input.turn, "attributes");
        let drift: f64 = rng.random();
        let mood_tone = if input.stalled_turns >= 2 {
            MoodTone::Frustrated
        } else if input.stalled_turns == 1 {
            MoodTone::Confused
        } else if status.is_complete()
            && matches!(
                expected.mood_tone,
                MoodTone::Casual | MoodTone::Enthusiastic
            )
        {
            MoodTone::Enthusiastic
        } else if drift < Self::MOOD_DRIFT {
            neighbor_mood(expected.mood_tone, rng.random_bool(0.5))
        } else {
            expected.mood_tone
        };
        let task_execution_style = if input.stalled_turns >= 2 {
            ExecutionStyle::AllAtOnce
        } else {
            expected.task_execution_style
        };
        let done = state.target().len() - pending_items(state, &self.rules).len();
        let exploration_style = if expected.exploration_style == ExplorationStyle::Explores
            && done * 2 >= state.target().len()
        {
            ExplorationStyle::DoesNotExplore
        } else {
            expected.exploration_style
        };
        MessageAttributes {
            mood_tone,
            task_execution_style,
            exploration_style,
            task_completion_status: status,
        }
    }
}

fn neighbor_mood(mood: MoodTone, up: bool) -> MoodTone {
    let all = MoodTone::ALL;
    let i = all.iter().position(|m| *m == mood).expect("listed mood");
    let n = all.len();
    all[if up { (i + 1) % n } else { (i + n - 1) % n }]
}

impl AttributePolicy for ScriptedAttributePolicy {
    fn propose(&self, input: &AttributeInput<'_>) -> Result<Proposal, AgentError> {
        let attributes = self.choose(input);
        let request = attributes_request(&self.prompts, input);
        let reply = serde_json::to_string(&attributes).expect("attributes serialize");
        Ok(Proposal {
            attributes,
            telemetry: estimated_telemetry(&request, &reply),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ExpectedAttributes, TaskItem};

    struct Fixed(MessageAttributes);

    impl AttributePolicy for Fixed {
        fn propose(&self, _: &AttributeInput<'_>) -> Result<Proposal, AgentError> {
            Ok(Proposal {
                attributes: self.0,
                telemetry: TelemetryRecord::default(),
            })
        }
    }

    fn persona() -> Persona {
        Persona {
            id: "p".into(),
            name: "P".into(),
            biography: "Relaxed regular who likes to look around the menu.".into(),
            expected_attributes: ExpectedAttributes {
                mood_tone: MoodTone::Casual,
                task_execution_style: ExecutionStyle::OneByOne,
                exploration_style: ExplorationStyle::Explores,
            },
        }
    }

    fn input<'a>(
        persona: &'a Persona,
        state: Option<&'a TaskState>,
        turn: u32,
    ) -> AttributeInput<'a> {
        AttributeInput {
            test_case_id: "tc",
            persona,
            state,
            history: &[],
            turn,
            previous: None,
            stalled_turns: 0,
        }
    }

    #[test]
    fn completion_status_is_overridden() {
        let p = persona();
        let state = TaskState::from_parts(
            vec![TaskItem::single("fries")],
            vec![TaskItem::single("fries")],
        );
        let model = Fixed(MessageAttributes::from_expected(
            &p.expected_attributes,
            CompletionStatus::Incomplete,
        ));
        let out = generate_attributes(&input(&p, Some(&state), 3), &model, &MatchRules::default())
            .unwrap();
        assert_eq!(
            out.attributes.task_completion_status,
            CompletionStatus::Complete
        );
    }

    #[test]
    fn scripted_first_turn_is_persona_profile() {
        let p = persona();
        let state = TaskState::new(vec![TaskItem::single("fries")]);
        let policy = ScriptedAttributePolicy::new(7, MatchRules::default(), Arc::default());
        let out = generate_attributes(&input(&p, Some(&state), 1), &policy, &MatchRules::default())
            .unwrap();
        assert_eq!(
            out.attributes,
            MessageAttributes {
                mood_tone: MoodTone::Casual,
                task_execution_style: ExecutionStyle::OneByOne,
                exploration_style: ExplorationStyle::Explores,
                task_completion_status: CompletionStatus::Incomplete,
            }
        );
    }

    #[test]
    fn stalls_shift_mood_and_execution() {
        let p = persona();
        let state = TaskState::new(vec![TaskItem::single("fries"), TaskItem::single("cola")]);
        let policy = ScriptedAttributePolicy::new(7, MatchRules::default(), Arc::default());
        let mut inp = input(&p, Some(&state), 4);
        inp.stalled_turns = 2;
        let a = policy.propose(&inp).unwrap().attributes;
        assert_eq!(a.mood_tone, MoodTone::Frustrated);
        assert_eq!(a.task_execution_style, ExecutionStyle::AllAtOnce);
        inp.stalled_turns = 1;
        assert_eq!(
            policy.propose(&inp).unwrap().attributes.mood_tone,
            MoodTone::Confused
        );
    }

    #[test]
    fn untracked_policy_reads_last_item_announcement() {
        let p = persona();
        let policy = ScriptedAttributePolicy::new(7, MatchRules::default(), Arc::default());
        let history = vec![
            Utterance::counterpart("Welcome!"),
            Utterance::guest(format!("I'd like fries. {LAST_ITEM_PHRASE}")),
            Utterance::counterpart("Got it."),
        ];
        let mut inp = input(&p, None, 2);
        inp.history = &history;
        let a = policy.propose(&inp).unwrap().attributes;
        assert_eq!(a.task_completion_status, CompletionStatus::Complete);
        inp.history = &history[..1];
        assert_eq!(
            policy
                .propose(&inp)
                .unwrap()
                .attributes
                .task_completion_status,
            CompletionStatus::Incomplete
        );
    }

    #[test]
    fn parse_rejects_values_outside_the_enums() {
        let ok = r#"Sure: {"mood_tone":"casual","task_execution_style":"one-by-one","exploration_style":"explores","task_completion_status":"incomplete"}"#;
        assert_eq!(parse_attributes(ok).unwrap().mood_tone, MoodTone::Casual);
        let bad = r#"{"mood_tone":"angry","task_execution_style":"one-by-one","exploration_style":"explores","task_completion_status":"incomplete"}"#;
        match parse_attributes(bad) {
            Err(AgentError::AttributeParse { raw, .. }) => assert_eq!(raw, bad),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_attributes("no json here").is_err());
    }
}
