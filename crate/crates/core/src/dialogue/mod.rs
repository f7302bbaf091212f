//! Clarification loop: a slot-filling state machine driven by an LLM adapter.
//!
//! Every state change of a [`ConversationSession`] goes through
//! [`SessionEvent`]s, so a session can be rebuilt exactly by replaying its
//! event history.

mod adapter;
mod remote;
mod scripted;
mod tokens;

pub use adapter::{
    extract_updates, AdapterError, AdapterReply, AdapterRequest, LlmAdapter, ProposedQuestion,
};
pub use remote::{RemoteAdapter, RemoteAdapterConfig};
pub use scripted::{FreeTextRules, RuleTable, ScriptedAdapter, VocabEntry};
pub use tokens::count_tokens_approx;

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;

pub const DEFAULT_TURN_CAP: u32 = 10;

/// Name of the free-text slot that describes what the service is for.
pub const PURPOSE_SLOT: &str = "purpose";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DialogueError {
    #[error("message is empty")]
    EmptyMessage,
    #[error("session is finished")]
    SessionFinished,
    #[error("session is not waiting for a recommendation")]
    NotRecommending,
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error("invalid slot schema: {0}")]
    InvalidSchema(String),
    #[error("invalid event for current session state: {0}")]
    InvalidEvent(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDef {
    pub name: String,
    pub prompt_hint: String,
    #[serde(default)]
    pub required: bool,
}

/// Ordered set of requirement slots. Order decides which question comes next.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct SlotSchema {
    slots: Vec<SlotDef>,
}

#[derive(Deserialize)]
struct RawSchema {
    slots: Vec<SlotDef>,
}

impl TryFrom<RawSchema> for SlotSchema {
    type Error = DialogueError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        SlotSchema::new(raw.slots)
    }
}

impl SlotSchema {
    pub fn new(slots: Vec<SlotDef>) -> Result<Self, DialogueError> {
        for (i, s) in slots.iter().enumerate() {
            if s.name.trim().is_empty() {
                return Err(DialogueError::InvalidSchema("empty slot name".into()));
            }
            if slots[..i].iter().any(|o| o.name == s.name) {
                return Err(DialogueError::InvalidSchema(format!("duplicate slot `{}`", s.name)));
            }
        }
        if !slots.iter().any(|s| s.required) {
            return Err(DialogueError::InvalidSchema("no required slot".into()));
        }
        Ok(SlotSchema { slots })
    }

    pub fn from_json(text: &str) -> Result<Self, DialogueError> {
        serde_json::from_str(text).map_err(|e| DialogueError::InvalidSchema(e.to_string()))
    }

    pub fn slots(&self) -> &[SlotDef] {
        &self.slots
    }

    pub fn get(&self, name: &str) -> Option<&SlotDef> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.name.as_str())
    }
}

impl Default for SlotSchema {
    fn default() -> Self {
        let def = |name: &str, hint: &str, required: bool| SlotDef {
            name: name.into(),
            prompt_hint: hint.into(),
            required,
        };
        SlotSchema {
            slots: vec![
                def(PURPOSE_SLOT, "What is the purpose of your service?", true),
                def("stack", "Which tech stack or framework should the service use?", false),
                def("database", "Which database would you like to use?", false),
                def("rendering", "Does the service render a UI, and if so server-side or as a single-page app?", false),
                def("api_style", "How should the service expose its API, REST or gRPC?", false),
                def("auth", "Does the service need user authentication?", false),
                def("cicd", "Which CI/CD steps do you need (test, build, deploy, lint, release)?", false),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum SlotStatus {
    Unfilled,
    Filled(String),
    Uncertain,
}

impl SlotStatus {
    pub fn is_resolved(&self) -> bool {
        !matches!(self, SlotStatus::Unfilled)
    }
}

/// Outcome the adapter proposes for one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum SlotUpdate {
    Filled(String),
    Uncertain,
}

/// Per-slot status. Slots missing from the map are Unfilled.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotState(BTreeMap<String, SlotStatus>);

impl SlotState {
    pub fn new() -> Self {
        SlotState::default()
    }

    pub fn status(&self, slot: &str) -> &SlotStatus {
        self.0.get(slot).unwrap_or(&SlotStatus::Unfilled)
    }

    pub fn filled(&self, slot: &str) -> Option<&str> {
        match self.status(slot) {
            SlotStatus::Filled(v) => Some(v),
            _ => None,
        }
    }

    /// Whether `update` is a legal transition from the current status.
    /// Filled is terminal; Uncertain may still become Filled.
    pub fn accepts(&self, slot: &str, update: &SlotUpdate) -> bool {
        match (self.status(slot), update) {
            (SlotStatus::Filled(_), _) => false,
            (SlotStatus::Uncertain, SlotUpdate::Uncertain) => false,
            (_, SlotUpdate::Filled(v)) => !v.trim().is_empty(),
            (SlotStatus::Unfilled, SlotUpdate::Uncertain) => true,
        }
    }

    /// Apply an update if legal; returns whether it changed the state.
    pub fn apply(&mut self, slot: &str, update: &SlotUpdate) -> bool {
        if !self.accepts(slot, update) {
            return false;
        }
        let status = match update {
            SlotUpdate::Filled(v) => SlotStatus::Filled(normalize_slot_value(v)),
            SlotUpdate::Uncertain => SlotStatus::Uncertain,
        };
        self.0.insert(slot.to_string(), status);
        true
    }

    /// Set a status unconditionally (tests, force-completion).
    pub fn set(&mut self, slot: &str, status: SlotStatus) {
        self.0.insert(slot.to_string(), status);
    }

    /// Statuses in schema order.
    pub fn ordered<'a>(&'a self, schema: &'a SlotSchema) -> impl Iterator<Item = (&'a str, &'a SlotStatus)> {
        schema.names().map(move |n| (n, self.status(n)))
    }
}

pub fn normalize_slot_value(v: &str) -> String {
    v.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// True iff every required slot is Filled and every slot is Filled or Uncertain.
pub fn completion_predicate(state: &SlotState, schema: &SlotSchema) -> bool {
    schema.slots().iter().all(|s| match state.status(&s.name) {
        SlotStatus::Filled(_) => true,
        SlotStatus::Uncertain => !s.required,
        SlotStatus::Unfilled => false,
    })
}

/// First Unfilled slot in schema order.
pub fn next_question_slot<'a>(state: &SlotState, schema: &'a SlotSchema) -> Option<&'a str> {
    schema
        .names()
        .find(|n| !state.status(n).is_resolved())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        TokenUsage {
            input_tokens,
            output_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;
    fn add(self, o: TokenUsage) -> TokenUsage {
        TokenUsage::new(self.input_tokens + o.input_tokens, self.output_tokens + o.output_tokens)
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, o: TokenUsage) {
        *self = *self + o;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub token_usage: TokenUsage,
    pub timestamp_ms: u64,
}

/// Append-only, strictly alternating, user first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transcript(Vec<Turn>);

impl Transcript {
    pub fn turns(&self) -> &[Turn] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn push(&mut self, turn: Turn) -> Result<(), DialogueError> {
        let expected = match self.0.last() {
            None | Some(Turn { speaker: Speaker::Agent, .. }) => Speaker::User,
            Some(_) => Speaker::Agent,
        };
        if turn.speaker != expected {
            return Err(DialogueError::InvalidEvent(format!(
                "expected a {expected:?} turn"
            )));
        }
        self.0.push(turn);
        Ok(())
    }

    pub fn usage(&self) -> TokenUsage {
        self.0.iter().fold(TokenUsage::default(), |acc, t| acc + t.token_usage)
    }

    pub fn count(&self, speaker: Speaker) -> usize {
        self.0.iter().filter(|t| t.speaker == speaker).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentAction {
    AskQuestion { slot: String, text: String },
    Recommend { forced: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingUser,
    Recommending,
    Finished,
}

/// Atomic state changes of a session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionEvent {
    Started {
        schema: SlotSchema,
        turn_cap: u32,
    },
    UserMessage {
        text: String,
        timestamp_ms: u64,
    },
    SlotsUpdated {
        updates: BTreeMap<String, SlotUpdate>,
    },
    ForceCompleted {
        slots: Vec<String>,
    },
    Question {
        slot: String,
        text: String,
        usage: TokenUsage,
        timestamp_ms: u64,
    },
    ReadyToRecommend {
        usage: TokenUsage,
        forced: bool,
    },
    Finished {
        text: String,
        timestamp_ms: u64,
    },
}

/// Result of one user message.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub action: AgentAction,
    /// Updates that were actually applied.
    pub slot_updates: BTreeMap<String, SlotUpdate>,
    pub usage: TokenUsage,
    pub events: Vec<SessionEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationSession {
    schema: SlotSchema,
    turn_cap: u32,
    slots: SlotState,
    transcript: Transcript,
    phase: Phase,
    questions_asked: u32,
    asked_slot: Option<String>,
    /// The pending question repeats the previous one.
    #[serde(default)]
    reasked: bool,
    pending_usage: TokenUsage,
    forced: bool,
}

impl ConversationSession {
    pub fn new(schema: SlotSchema, turn_cap: u32) -> Self {
        ConversationSession {
            schema,
            turn_cap,
            slots: SlotState::new(),
            transcript: Transcript::default(),
            phase: Phase::AwaitingUser,
            questions_asked: 0,
            asked_slot: None,
            reasked: false,
            pending_usage: TokenUsage::default(),
            forced: false,
        }
    }

    /// Rebuild a session from its full event history.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a SessionEvent>) -> Result<Self, DialogueError> {
        let mut iter = events.into_iter();
        let mut session = match iter.next() {
            Some(SessionEvent::Started { schema, turn_cap }) => {
                ConversationSession::new(schema.clone(), *turn_cap)
            }
            _ => return Err(DialogueError::InvalidEvent("history must begin with `started`".into())),
        };
        for e in iter {
            session.apply(e)?;
        }
        Ok(session)
    }

    pub fn started_event(&self) -> SessionEvent {
        SessionEvent::Started {
            schema: self.schema.clone(),
            turn_cap: self.turn_cap,
        }
    }

    pub fn schema(&self) -> &SlotSchema {
        &self.schema
    }

    pub fn slots(&self) -> &SlotState {
        &self.slots
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn questions_asked(&self) -> u32 {
        self.questions_asked
    }

    pub fn turn_cap(&self) -> u32 {
        self.turn_cap
    }

    /// Slot the last question targeted, if the session is waiting on it.
    pub fn asked_slot(&self) -> Option<&str> {
        self.asked_slot.as_deref()
    }

    pub fn was_forced(&self) -> bool {
        self.forced
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    /// Session-wide token totals; always the sum over transcript turns.
    pub fn usage(&self) -> TokenUsage {
        self.transcript.usage()
    }

    pub fn apply(&mut self, event: &SessionEvent) -> Result<(), DialogueError> {
        let bad = |m: &str| Err(DialogueError::InvalidEvent(m.to_string()));
        match event {
            SessionEvent::Started { .. } => return bad("session already started"),
            SessionEvent::UserMessage { text, timestamp_ms } => {
                if self.phase != Phase::AwaitingUser {
                    return bad("user message outside awaiting-user phase");
                }
                self.transcript.push(Turn {
                    speaker: Speaker::User,
                    text: text.clone(),
                    token_usage: TokenUsage::default(),
                    timestamp_ms: *timestamp_ms,
                })?;
            }
            SessionEvent::SlotsUpdated { updates } => {
                for (slot, u) in updates {
                    if self.schema.get(slot).is_none() {
                        return bad("update for unknown slot");
                    }
                    self.slots.apply(slot, u);
                }
            }
            SessionEvent::ForceCompleted { slots } => {
                for s in slots {
                    if !self.slots.status(s).is_resolved() {
                        self.slots.set(s, SlotStatus::Uncertain);
                    }
                }
                self.forced = true;
            }
            SessionEvent::Question {
                slot,
                text,
                usage,
                timestamp_ms,
            } => {
                if self.slots.status(slot).is_resolved() {
                    return bad("question targets a resolved slot");
                }
                self.transcript.push(Turn {
                    speaker: Speaker::Agent,
                    text: text.clone(),
                    token_usage: *usage,
                    timestamp_ms: *timestamp_ms,
                })?;
                self.questions_asked += 1;
                self.reasked = self.asked_slot.as_deref() == Some(slot.as_str());
                self.asked_slot = Some(slot.clone());
            }
            SessionEvent::ReadyToRecommend { usage, forced } => {
                self.phase = Phase::Recommending;
                self.pending_usage = *usage;
                self.forced |= *forced;
                self.asked_slot = None;
                self.reasked = false;
            }
            SessionEvent::Finished { text, timestamp_ms } => {
                if self.phase != Phase::Recommending {
                    return bad("finish outside recommending phase");
                }
                self.transcript.push(Turn {
                    speaker: Speaker::Agent,
                    text: text.clone(),
                    token_usage: self.pending_usage,
                    timestamp_ms: *timestamp_ms,
                })?;
                self.pending_usage = TokenUsage::default();
                self.phase = Phase::Finished;
            }
        }
        Ok(())
    }

    /// Process one user message: extract slot updates through the adapter,
    /// then either ask about the next Unfilled slot or move to recommending.
    /// On adapter failure nothing is changed, so the call can be retried.
    pub fn advance(
        &mut self,
        message: &str,
        adapter: &dyn LlmAdapter,
        clock: &dyn Clock,
    ) -> Result<Step, DialogueError> {
        if self.phase != Phase::AwaitingUser {
            return Err(DialogueError::SessionFinished);
        }
        if message.trim().is_empty() {
            return Err(DialogueError::EmptyMessage);
        }
        let reply = adapter.respond(&AdapterRequest {
            schema: &self.schema,
            slots: &self.slots,
            transcript: &self.transcript,
            message,
            asked_slot: self.asked_slot.as_deref(),
        })?;

        let mut next_state = self.slots.clone();
        let mut applied = BTreeMap::new();
        for (slot, update) in reply.updates {
            if self.schema.get(&slot).is_none() {
                tracing::debug!(%slot, "adapter proposed update for unknown slot; ignored");
                continue;
            }
            if next_state.apply(&slot, &update) {
                let stored = match next_state.status(&slot) {
                    SlotStatus::Filled(v) => SlotUpdate::Filled(v.clone()),
                    _ => SlotUpdate::Uncertain,
                };
                applied.insert(slot, stored);
            }
        }
        // A second reply without information about the asked slot gives up on it.
        if let Some(asked) = self.asked_slot.as_deref() {
            if self.reasked && *next_state.status(asked) == SlotStatus::Unfilled {
                next_state.set(asked, SlotStatus::Uncertain);
                applied.insert(asked.to_string(), SlotUpdate::Uncertain);
            }
        }

        let mut events = vec![SessionEvent::UserMessage {
            text: message.to_string(),
            timestamp_ms: clock.now_ms(),
        }];
        if !applied.is_empty() {
            events.push(SessionEvent::SlotsUpdated {
                updates: applied.clone(),
            });
        }

        let action = if completion_predicate(&next_state, &self.schema) {
            AgentAction::Recommend { forced: false }
        } else {
            match next_question_slot(&next_state, &self.schema) {
                // Only an Uncertain required slot is left; nothing to ask.
                None => AgentAction::Recommend { forced: true },
                Some(_) if self.questions_asked >= self.turn_cap => {
                    let open: Vec<String> = self
                        .schema
                        .names()
                        .filter(|n| !next_state.status(n).is_resolved())
                        .map(str::to_string)
                        .collect();
                    events.push(SessionEvent::ForceCompleted { slots: open });
                    AgentAction::Recommend { forced: true }
                }
                Some(slot) => {
                    let text = reply
                        .question
                        .filter(|q| q.slot == slot && !q.text.trim().is_empty())
                        .map(|q| q.text)
                        .unwrap_or_else(|| self.schema.get(slot).map(|d| d.prompt_hint.clone()).unwrap_or_default());
                    AgentAction::AskQuestion {
                        slot: slot.to_string(),
                        text,
                    }
                }
            }
        };
        match &action {
            AgentAction::AskQuestion { slot, text } => events.push(SessionEvent::Question {
                slot: slot.clone(),
                text: text.clone(),
                usage: reply.usage,
                timestamp_ms: clock.now_ms(),
            }),
            AgentAction::Recommend { forced } => events.push(SessionEvent::ReadyToRecommend {
                usage: reply.usage,
                forced: *forced,
            }),
        }
        for e in &events {
            self.apply(e)?;
        }
        Ok(Step {
            action,
            slot_updates: applied,
            usage: reply.usage,
            events,
        })
    }

    /// Append the final agent turn carrying the recommendation text.
    pub fn finish(&mut self, text: &str, clock: &dyn Clock) -> Result<SessionEvent, DialogueError> {
        if self.phase != Phase::Recommending {
            return Err(DialogueError::NotRecommending);
        }
        let e = SessionEvent::Finished {
            text: text.to_string(),
            timestamp_ms: clock.now_ms(),
        };
        self.apply(&e)?;
        Ok(e)
    }
}

/// Create a session and process its opening message.
pub fn start_session(
    schema: SlotSchema,
    first_message: &str,
    adapter: &dyn LlmAdapter,
    clock: &dyn Clock,
    turn_cap: u32,
) -> Result<(ConversationSession, Step), DialogueError> {
    if first_message.trim().is_empty() {
        return Err(DialogueError::EmptyMessage);
    }
    let mut session = ConversationSession::new(schema, turn_cap);
    let step = session.advance(first_message, adapter, clock)?;
    Ok((session, step))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> SlotSchema {
        SlotSchema::default()
    }

    #[test]
    fn default_schema_shape() {
        let s = schema();
        let names: Vec<_> = s.names().collect();
        assert_eq!(
            names,
            ["purpose", "stack", "database", "rendering", "api_style", "auth", "cicd"]
        );
        assert!(s.get("purpose").unwrap().required);
        assert_eq!(s.slots().iter().filter(|d| d.required).count(), 1);
    }

    #[test]
    fn schema_validation() {
        let d = |n: &str, r: bool| SlotDef {
            name: n.into(),
            prompt_hint: String::new(),
            required: r,
        };
        assert!(SlotSchema::new(vec![d("a", false)]).is_err());
        assert!(SlotSchema::new(vec![d("a", true), d("a", false)]).is_err());
        assert!(SlotSchema::from_json(r#"{"slots":[{"name":"a","prompt_hint":"?"}]}"#).is_err());
        assert!(SlotSchema::from_json(r#"{"slots":[{"name":"a","prompt_hint":"?","required":true}]}"#).is_ok());
    }

    #[test]
    fn completion_truth_table() {
        let s = schema();
        let mut st = SlotState::new();
        for n in s.names() {
            st.set(n, SlotStatus::Filled("x".into()));
        }
        assert!(completion_predicate(&st, &s));

        let mut missing_purpose = st.clone();
        missing_purpose.set("purpose", SlotStatus::Unfilled);
        assert!(!completion_predicate(&missing_purpose, &s));

        let mut uncertain_rest = SlotState::new();
        uncertain_rest.set("purpose", SlotStatus::Filled("x".into()));
        for n in s.names().skip(1) {
            uncertain_rest.set(n, SlotStatus::Uncertain);
        }
        assert!(completion_predicate(&uncertain_rest, &s));

        let mut uncertain_purpose = uncertain_rest.clone();
        uncertain_purpose.set("purpose", SlotStatus::Uncertain);
        assert!(!completion_predicate(&uncertain_purpose, &s));
    }

    #[test]
    fn slot_transitions() {
        let mut st = SlotState::new();
        assert!(st.apply("db", &SlotUpdate::Uncertain));
        assert!(!st.apply("db", &SlotUpdate::Uncertain));
        assert!(st.apply("db", &SlotUpdate::Filled("PostgreSQL".into())));
        assert_eq!(st.filled("db"), Some("postgresql"));
        assert!(!st.apply("db", &SlotUpdate::Filled("mongodb".into())));
        assert!(!st.apply("db", &SlotUpdate::Uncertain));
        assert!(!st.apply("x", &SlotUpdate::Filled("   ".into())));
    }

    #[test]
    fn transcript_alternates() {
        let mut t = Transcript::default();
        let turn = |speaker| Turn {
            speaker,
            text: "x".into(),
            token_usage: TokenUsage::new(1, 2),
            timestamp_ms: 0,
        };
        assert!(t.push(turn(Speaker::Agent)).is_err());
        t.push(turn(Speaker::User)).unwrap();
        assert!(t.push(turn(Speaker::User)).is_err());
        t.push(turn(Speaker::Agent)).unwrap();
        assert_eq!(t.usage(), TokenUsage::new(2, 4));
    }

    struct Silent;

    impl LlmAdapter for Silent {
        fn id(&self) -> String {
            "silent".into()
        }

        fn respond(&self, _: &AdapterRequest<'_>) -> Result<AdapterReply, AdapterError> {
            Ok(AdapterReply::default())
        }
    }

    #[test]
    fn empty_reply_is_reasked_once_then_uncertain() {
        let clock = crate::clock::ManualClock::new(0);
        let (mut session, first) = start_session(schema(), "hello", &Silent, &clock, 10).unwrap();
        let mut events = vec![session.started_event()];
        events.extend(first.events);
        let asked = |s: &Step| match &s.action {
            AgentAction::AskQuestion { slot, .. } => slot.clone(),
            other => panic!("{other:?}"),
        };
        let mut seen = vec![];
        for _ in 0..4 {
            let step = session.advance("hmm", &Silent, &clock).unwrap();
            seen.push(asked(&step));
            events.extend(step.events);
        }
        assert_eq!(seen, ["purpose", "stack", "stack", "database"]);
        assert_eq!(session.slots().status("purpose"), &SlotStatus::Uncertain);
        assert_eq!(session.slots().status("stack"), &SlotStatus::Uncertain);
        assert_eq!(ConversationSession::replay(&events).unwrap(), session);
    }

    #[test]
    fn replay_requires_started_first() {
        let e = SessionEvent::UserMessage {
            text: "x".into(),
            timestamp_ms: 0,
        };
        assert!(ConversationSession::replay([&e]).is_err());
    }

    #[test]
    fn event_json_shape() {
        let e = SessionEvent::SlotsUpdated {
            updates: BTreeMap::from([
                ("database".to_string(), SlotUpdate::Filled("postgresql".into())),
                ("auth".to_string(), SlotUpdate::Uncertain),
            ]),
        };
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["kind"], "slots_updated");
        assert_eq!(json["updates"]["database"]["status"], "filled");
        assert_eq!(json["updates"]["database"]["value"], "postgresql");
        assert_eq!(json["updates"]["auth"]["status"], "uncertain");
        let back: SessionEvent = serde_json::from_value(json).unwrap();
        assert_eq!(back, e);
    }
}
