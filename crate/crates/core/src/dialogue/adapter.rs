use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{SlotSchema, SlotState, SlotUpdate, TokenUsage, Transcript};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AdapterError {
    /// Remote failure after retries; the session is left untouched.
    #[error("adapter unavailable: {0}")]
    Unavailable(String),
    #[error("adapter output violates the structured-output contract: {0}")]
    MalformedOutput(String),
}

/// Everything the adapter may look at for one turn.
#[derive(Debug, Clone, Copy)]
pub struct AdapterRequest<'a> {
    pub schema: &'a SlotSchema,
    pub slots: &'a SlotState,
    pub transcript: &'a Transcript,
    pub message: &'a str,
    /// Slot the previous agent question targeted.
    pub asked_slot: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposedQuestion {
    pub slot: String,
    pub text: String,
}

/// Structured output of one adapter call: `{updates, question}` plus the
/// tokens the call consumed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterReply {
    pub updates: BTreeMap<String, SlotUpdate>,
    pub question: Option<ProposedQuestion>,
    #[serde(skip)]
    pub usage: TokenUsage,
}

/// The "virtual architect": reads the conversation, proposes slot updates and
/// the next clarifying question. Must tolerate concurrent calls.
pub trait LlmAdapter: Send + Sync {
    fn id(&self) -> String;
    fn respond(&self, request: &AdapterRequest<'_>) -> Result<AdapterReply, AdapterError>;
}

impl<A: LlmAdapter + ?Sized> LlmAdapter for std::sync::Arc<A> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn respond(&self, request: &AdapterRequest<'_>) -> Result<AdapterReply, AdapterError> {
        (**self).respond(request)
    }
}

/// Slot updates the adapter extracts from `message` in the context of the
/// conversation so far.
pub fn extract_updates(
    transcript: &Transcript,
    message: &str,
    schema: &SlotSchema,
    slots: &SlotState,
    asked_slot: Option<&str>,
    adapter: &dyn LlmAdapter,
) -> Result<BTreeMap<String, SlotUpdate>, AdapterError> {
    adapter
        .respond(&AdapterRequest {
            schema,
            slots,
            transcript,
            message,
            asked_slot,
        })
        .map(|r| r.updates)
}
