use serde::{Deserialize, Serialize};
use serde_json::json;

use super::attributes::{generate_attributes, AttributeInput, AttributePolicy};
use super::responder::{generate_response, Directive, GuestResponder, ResponseInput};
use super::state::{compute_completion, track_state, StateExtractor};
use super::{counterpart_view, AgentError, Utterance};
use crate::counterpart::Counterpart;
use crate::domain::{
    ConfigId, ConversationLog, MatchRules, Menu, MessageAttributes, Outcome, Persona, Role,
    TaskItem, TaskState, TelemetryRecord, TestCase, ToolCallRecord, TurnRecord,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Greeting,
    Building,
    Confirming,
    Closed,
}

/// One step of a guest turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    StateTracking,
    MessageAttributes,
    PersonaFetch,
    Respond,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Step::StateTracking => "state_tracking",
            Step::MessageAttributes => "message_attributes",
            Step::PersonaFetch => "persona_fetch",
            Step::Respond => "respond",
        }
    }

    fn registered(self, config: ConfigId) -> bool {
        match self {
            Step::StateTracking => config.has_state_tracker(),
            Step::MessageAttributes => config.has_attribute_agent(),
            Step::PersonaFetch => config.uses_persona_fetch(),
            Step::Respond => true,
        }
    }
}

/// The fixed step order of a guest turn under `config`.
pub fn plan_for(config: ConfigId) -> Vec<Step> {
    let mut plan = required_steps(config);
    plan.push(Step::Respond);
    plan
}

pub(crate) fn required_steps(config: ConfigId) -> Vec<Step> {
    match config {
        ConfigId::Baseline => vec![],
        ConfigId::UserAgentOnly => vec![Step::PersonaFetch],
        ConfigId::WithStateTracking => vec![Step::StateTracking],
        ConfigId::WithAttributes => vec![Step::MessageAttributes],
        ConfigId::Full => vec![Step::StateTracking, Step::MessageAttributes],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    /// Guest turns before the conversation is cut off.
    pub max_turns: u32,
    /// How many earlier guest messages a new one is compared against.
    pub repetition_window: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_turns: 30,
            repetition_window: 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimulationSettings {
    pub limits: Limits,
    pub strict_state_bounds: bool,
    pub rules: MatchRules,
}

/// The components one conversation talks to. All are shared read-only.
#[derive(Clone, Copy)]
pub struct Backends<'a> {
    pub counterpart: &'a dyn Counterpart,
    pub guest: &'a dyn GuestResponder,
    pub extractor: &'a dyn StateExtractor,
    pub attributes: &'a dyn AttributePolicy,
    /// Lenient tracker that reconstructs the order for evaluation when the
    /// guest itself has no state tracker.
    pub auditor: &'a dyn StateExtractor,
    pub menu: &'a Menu,
}

/// Mutable state of one simulated guest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentContext {
    pub test_case_id: String,
    pub persona: Persona,
    pub config_id: ConfigId,
    pub state: TaskState,
    pub history: Vec<Utterance>,
    pub phase: Phase,
    pub last_attributes: Option<MessageAttributes>,
    pub guest_turns: u32,
    pub stalled_turns: u32,
    pub confirm_requested: bool,
    pub claimed_complete: bool,
}

impl AgentContext {
    pub fn new(test_case: &TestCase, persona: &Persona, config_id: ConfigId) -> Self {
        Self {
            test_case_id: test_case.id.clone(),
            persona: persona.clone(),
            config_id,
            state: TaskState::new(test_case.target.clone()),
            history: Vec::new(),
            phase: Phase::Greeting,
            last_attributes: None,
            guest_turns: 0,
            stalled_turns: 0,
            confirm_requested: false,
            claimed_complete: false,
        }
    }

    pub fn target(&self) -> &[TaskItem] {
        self.state.target()
    }

    pub fn advance(&mut self, to: Phase) -> Result<(), AgentError> {
        if to < self.phase {
            return Err(AgentError::PhaseRegression {
                from: self.phase,
                to,
            });
        }
        self.phase = to;
        Ok(())
    }

    fn persona_payload(&self) -> String {
        json!({
            "name": self.persona.name,
            "biography": self.persona.biography,
            "target": self.target().iter().map(ToString::to_string).collect::<Vec<_>>(),
        })
        .to_string()
    }
}

/// Everything a guest turn produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GuestTurn {
    pub content: String,
    pub tool_calls: Vec<ToolCallRecord>,
    pub protocol_trace: Vec<String>,
    pub attributes_snapshot: Option<MessageAttributes>,
    pub state_snapshot: Option<TaskState>,
    pub telemetry: TelemetryRecord,
    pub directive: Directive,
    pub rejected_ops: Vec<String>,
}

pub fn run_turn(
    ctx: &mut AgentContext,
    counterpart_message: &str,
    backends: &Backends<'_>,
    settings: &SimulationSettings,
) -> Result<GuestTurn, AgentError> {
    let plan = plan_for(ctx.config_id);
    run_turn_with_plan(ctx, counterpart_message, &plan, backends, settings)
}

/// Runs the given steps in order. Used directly to check that out-of-order
/// plans are refused.
pub fn run_turn_with_plan(
    ctx: &mut AgentContext,
    counterpart_message: &str,
    plan: &[Step],
    backends: &Backends<'_>,
    settings: &SimulationSettings,
) -> Result<GuestTurn, AgentError> {
    if ctx.phase == Phase::Closed {
        return Err(AgentError::Closed);
    }
    let config = ctx.config_id;
    ctx.history
        .push(Utterance::counterpart(counterpart_message));
    ctx.guest_turns += 1;
    let turn = ctx.guest_turns;

    let mut trace: Vec<String> = Vec::new();
    let mut records = Vec::new();
    let mut telemetry = TelemetryRecord::default();
    let mut attributes = None;
    let mut state_snapshot = None;
    let mut fetched = None;
    let mut rejected_ops = Vec::new();
    let mut output = None;

    for step in plan {
        if !step.registered(config) {
            return Err(AgentError::UnregisteredStep {
                step: step.name(),
                config: config.number(),
            });
        }
        match step {
            Step::StateTracking => {
                let before = ctx.state.current().len();
                let tracked = track_state(
                    counterpart_message,
                    &ctx.state,
                    backends.extractor,
                    settings.strict_state_bounds,
                    &settings.rules,
                )?;
                ctx.state = tracked.state;
                if turn > 1 {
                    ctx.stalled_turns = if ctx.state.current().len() > before {
                        0
                    } else {
                        ctx.stalled_turns + 1
                    };
                }
                records.extend(tracked.records);
                rejected_ops.extend(tracked.rejected.iter().map(ToString::to_string));
                telemetry += tracked.telemetry;
                state_snapshot = Some(ctx.state.clone());
            }
            Step::MessageAttributes => {
                if config.has_state_tracker()
                    && !trace.iter().any(|t| t == Step::StateTracking.name())
                {
                    return Err(AgentError::ProtocolViolation {
                        step: Step::MessageAttributes.name(),
                        missing: Step::StateTracking.name(),
                    });
                }
                let input = AttributeInput {
                    test_case_id: &ctx.test_case_id,
                    persona: &ctx.persona,
                    state: config.has_state_tracker().then_some(&ctx.state),
                    history: &ctx.history,
                    turn,
                    previous: ctx.last_attributes,
                    stalled_turns: ctx.stalled_turns,
                };
                let proposal = generate_attributes(&input, backends.attributes, &settings.rules)?;
                let result =
                    serde_json::to_string(&proposal.attributes).expect("attributes serialize");
                records.push(ToolCallRecord::new(
                    Step::MessageAttributes.name(),
                    &ctx.persona.biography,
                    &result,
                    proposal.telemetry.latency_ms,
                ));
                telemetry += proposal.telemetry;
                ctx.last_attributes = Some(proposal.attributes);
                attributes = Some(proposal.attributes);
            }
            Step::PersonaFetch => {
                let payload = ctx.persona_payload();
                records.push(ToolCallRecord::new(
                    Step::PersonaFetch.name(),
                    &ctx.test_case_id,
                    &payload,
                    0,
                ));
                fetched = Some(payload);
            }
            Step::Respond => {
                let complete = match config {
                    ConfigId::WithStateTracking | ConfigId::Full => {
                        compute_completion(ctx.state.current(), ctx.state.target(), &settings.rules)
                            .is_complete()
                    }
                    ConfigId::WithAttributes => attributes
                        .is_some_and(|a: MessageAttributes| a.task_completion_status.is_complete()),
                    ConfigId::Baseline | ConfigId::UserAgentOnly => ctx.claimed_complete,
                };
                let directive = if ctx.phase == Phase::Greeting {
                    Directive::Greet
                } else if complete && ctx.confirm_requested {
                    Directive::Close
                } else if complete {
                    Directive::RequestConfirmation
                } else {
                    Directive::Build
                };
                let reply = {
                    let input = ResponseInput {
                        config,
                        test_case_id: &ctx.test_case_id,
                        persona: &ctx.persona,
                        target: ctx.state.target(),
                        state: state_snapshot.as_ref(),
                        attributes: attributes.as_ref(),
                        persona_fetch: fetched.as_deref(),
                        history: &ctx.history,
                        directive,
                        turn,
                        menu: backends.menu,
                    };
                    generate_response(&input, backends.guest, &trace)?
                };
                match directive {
                    Directive::Greet => ctx.advance(Phase::Building)?,
                    Directive::Build => ctx.confirm_requested = false,
                    Directive::RequestConfirmation => {
                        ctx.confirm_requested = true;
                        ctx.advance(Phase::Confirming)?;
                    }
                    Directive::Close => ctx.advance(Phase::Closed)?,
                }
                if reply.claims_complete && config.injects_target() {
                    ctx.claimed_complete = true;
                }
                telemetry += reply.telemetry;
                ctx.history.push(Utterance::guest(&reply.text));
                output = Some((reply.text, directive));
            }
        }
        trace.push(step.name().to_owned());
    }

    let (content, directive) = output.ok_or(AgentError::ProtocolViolation {
        step: "turn",
        missing: Step::Respond.name(),
    })?;
    Ok(GuestTurn {
        content,
        tool_calls: records,
        protocol_trace: trace,
        attributes_snapshot: attributes,
        state_snapshot,
        telemetry,
        directive,
        rejected_ops,
    })
}

fn counterpart_record(index: u32, content: String, telemetry: TelemetryRecord) -> TurnRecord {
    TurnRecord {
        index,
        role: Role::Counterpart,
        content,
        tool_calls: Vec::new(),
        protocol_trace: Vec::new(),
        attributes_snapshot: None,
        state_snapshot: None,
        audit_state: None,
        telemetry,
    }
}

/// Alternates ordering-system and guest turns until the guest closes, the
/// turn limit is reached, the guest repeats itself, or a step fails.
pub fn run_conversation(
    test_case: &TestCase,
    persona: &Persona,
    config_id: ConfigId,
    backends: &Backends<'_>,
    settings: &SimulationSettings,
) -> ConversationLog {
    let mut ctx = AgentContext::new(test_case, persona, config_id);
    let tracked = config_id.has_state_tracker();
    let normalizer = &settings.rules.normalizer;
    let mut audit = TaskState::new(test_case.target.clone());
    let mut turns: Vec<TurnRecord> = Vec::new();
    let mut notes = Vec::new();
    let mut guest_messages: Vec<String> = Vec::new();
    if config_id == ConfigId::WithAttributes {
        notes.push(
            "completion status taken from the attributes agent unchecked: no state tracker"
                .to_owned(),
        );
    }

    let outcome = loop {
        let reply = match backends
            .counterpart
            .respond(&counterpart_view(&ctx.history), backends.menu)
        {
            Ok(r) => r,
            Err(e) => {
                notes.push(format!("counterpart error: {e}"));
                break Outcome::Error;
            }
        };
        turns.push(counterpart_record(
            turns.len() as u32 + 1,
            reply.text.clone(),
            reply.telemetry,
        ));
        if !tracked {
            match track_state(
                &reply.text,
                &audit,
                backends.auditor,
                false,
                &settings.rules,
            ) {
                Ok(t) => audit = t.state,
                Err(e) => notes.push(format!("audit tracker error: {e}")),
            }
        }

        let turn = match run_turn(&mut ctx, &reply.text, backends, settings) {
            Ok(t) => t,
            Err(e) => {
                notes.push(format!("turn {} failed: {e}", ctx.guest_turns));
                break Outcome::Error;
            }
        };
        for r in &turn.rejected_ops {
            notes.push(format!("turn {}: state operation {r}", ctx.guest_turns));
        }
        let normalized = normalizer.normalize(&turn.content).to_string();
        turns.push(TurnRecord {
            index: turns.len() as u32 + 1,
            role: Role::Guest,
            content: turn.content,
            tool_calls: turn.tool_calls,
            protocol_trace: turn.protocol_trace,
            attributes_snapshot: turn.attributes_snapshot,
            state_snapshot: turn.state_snapshot,
            audit_state: (!tracked).then(|| audit.clone()),
            telemetry: turn.telemetry,
        });

        let window = settings.limits.repetition_window;
        let start = guest_messages.len().saturating_sub(window);
        let repeated = guest_messages[start..].contains(&normalized);
        guest_messages.push(normalized);
        if repeated {
            break Outcome::RepetitionAbort;
        }
        if ctx.phase == Phase::Closed {
            break Outcome::Completed;
        }
        if ctx.guest_turns >= settings.limits.max_turns {
            break Outcome::TurnLimit;
        }
    };

    ConversationLog {
        test_case_id: test_case.id.clone(),
        persona_id: persona.id.clone(),
        config_id,
        turns,
        final_state: if tracked { ctx.state } else { audit },
        outcome,
        notes,
    }
}
