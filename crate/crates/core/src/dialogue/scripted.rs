//! Deterministic rule-driven adapter honoring the same contract as the remote
//! one. Keyword vocabularies map phrases to canonical slot values; an
//! uncertainty lexicon marks the asked slot Uncertain.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adapter::{AdapterError, AdapterReply, AdapterRequest, LlmAdapter, ProposedQuestion};
use super::{
    completion_predicate, count_tokens_approx, next_question_slot, SlotState, SlotUpdate, Speaker,
    TokenUsage,
};
use crate::embedding::tokenize;

/// Default rule table shipped with the crate.
pub const DEFAULT_RULES_JSON: &str = include_str!("../../fixtures/rules.json");

/// A canonical value and the phrases that select it. A bare string is both.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VocabEntry {
    Plain(String),
    Mapped { value: String, keywords: Vec<String> },
}

impl VocabEntry {
    pub fn value(&self) -> &str {
        match self {
            VocabEntry::Plain(v) => v,
            VocabEntry::Mapped { value, .. } => value,
        }
    }

    fn keywords(&self) -> Vec<&str> {
        match self {
            VocabEntry::Plain(v) => vec![v.as_str()],
            VocabEntry::Mapped { keywords, .. } => keywords.iter().map(String::as_str).collect(),
        }
    }
}

/// Cleanup applied to free-text answers (e.g. the service purpose).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeTextRules {
    #[serde(default)]
    pub strip_prefixes: Vec<String>,
    #[serde(default)]
    pub rewrites: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTable {
    #[serde(default)]
    pub system_prompt: String,
    /// Per slot, entries in priority order: the first entry with any
    /// matching keyword wins.
    pub facet_vocab: BTreeMap<String, Vec<VocabEntry>>,
    /// Slots whose value is every matching entry, comma-joined in vocab order.
    #[serde(default)]
    pub multi_value_slots: Vec<String>,
    /// Slots that take the whole (cleaned) answer when asked directly.
    #[serde(default)]
    pub free_text_slots: Vec<String>,
    #[serde(default)]
    pub free_text: FreeTextRules,
    pub uncertainty: Vec<String>,
    #[serde(default)]
    pub question_templates: BTreeMap<String, String>,
}

impl RuleTable {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

impl Default for RuleTable {
    fn default() -> Self {
        RuleTable::from_json(DEFAULT_RULES_JSON).expect("bundled rule table is valid")
    }
}

fn contains_phrase(haystack: &[String], phrase: &str) -> bool {
    let needle = tokenize(phrase);
    !needle.is_empty() && haystack.windows(needle.len()).any(|w| w == needle.as_slice())
}

pub struct ScriptedAdapter {
    rules: RuleTable,
}

impl ScriptedAdapter {
    pub fn new(rules: RuleTable) -> Self {
        ScriptedAdapter { rules }
    }

    pub fn rules(&self) -> &RuleTable {
        &self.rules
    }

    fn is_uncertain(&self, tokens: &[String]) -> bool {
        self.rules.uncertainty.iter().any(|p| contains_phrase(tokens, p))
    }

    fn vocab_value(&self, slot: &str, tokens: &[String]) -> Option<String> {
        let entries = self.rules.facet_vocab.get(slot)?;
        let mut hits = entries
            .iter()
            .filter(|e| e.keywords().iter().any(|k| contains_phrase(tokens, k)))
            .map(VocabEntry::value);
        if self.rules.multi_value_slots.iter().any(|s| s == slot) {
            let all: Vec<&str> = hits.collect();
            (!all.is_empty()).then(|| all.join(","))
        } else {
            hits.next().map(str::to_string)
        }
    }

    pub fn clean_free_text(&self, message: &str) -> String {
        let mut text = message.replace('\u{2019}', "'").to_lowercase();
        text = text.split_whitespace().collect::<Vec<_>>().join(" ");
        let mut prefixes: Vec<&String> = self.rules.free_text.strip_prefixes.iter().collect();
        prefixes.sort_by_key(|p| std::cmp::Reverse(p.len()));
        if let Some(p) = prefixes
            .into_iter()
            .find(|p| text.starts_with(&format!("{} ", p.to_lowercase())))
        {
            text = text[p.len() + 1..].to_string();
        }
        for (from, to) in &self.rules.free_text.rewrites {
            text = text.replace(&from.to_lowercase(), to);
        }
        text.trim()
            .trim_end_matches(['.', '!', '?', ','])
            .trim()
            .to_string()
    }

    /// Deterministic slot extraction for one message.
    pub fn extract(&self, req: &AdapterRequest<'_>) -> BTreeMap<String, SlotUpdate> {
        let tokens = tokenize(req.message);
        let mut updates = BTreeMap::new();
        for slot in req.schema.names() {
            if req.slots.filled(slot).is_some() {
                continue;
            }
            let asked = req.asked_slot == Some(slot);
            let free_text = self.rules.free_text_slots.iter().any(|s| s == slot);
            if asked && self.is_uncertain(&tokens) {
                // A concrete keyword beats a hedge ("maybe postgres").
                match self.vocab_value(slot, &tokens) {
                    Some(v) if !free_text => {
                        updates.insert(slot.to_string(), SlotUpdate::Filled(v));
                    }
                    _ => {
                        updates.insert(slot.to_string(), SlotUpdate::Uncertain);
                    }
                }
                continue;
            }
            let value = if asked && free_text {
                Some(self.clean_free_text(req.message)).filter(|v| !v.is_empty())
            } else {
                self.vocab_value(slot, &tokens)
            };
            if let Some(v) = value {
                updates.insert(slot.to_string(), SlotUpdate::Filled(v));
            }
        }
        updates
    }

    fn prompt_text(&self, req: &AdapterRequest<'_>) -> String {
        let mut prompt = self.rules.system_prompt.clone();
        prompt.push('\n');
        for (name, status) in req.slots.ordered(req.schema) {
            let s = serde_json::to_string(status).unwrap_or_default();
            prompt.push_str(&format!("{name}: {s}\n"));
        }
        for turn in req.transcript.turns() {
            let who = match turn.speaker {
                Speaker::User => "user",
                Speaker::Agent => "agent",
            };
            prompt.push_str(&format!("{who}: {}\n", turn.text));
        }
        prompt.push_str(&format!("user: {}\n", req.message));
        prompt
    }
}

impl LlmAdapter for ScriptedAdapter {
    fn id(&self) -> String {
        "scripted".to_string()
    }

    fn respond(&self, req: &AdapterRequest<'_>) -> Result<AdapterReply, AdapterError> {
        let updates = self.extract(req);
        let mut next: SlotState = req.slots.clone();
        for (slot, u) in &updates {
            next.apply(slot, u);
        }
        let question = if completion_predicate(&next, req.schema) {
            None
        } else {
            next_question_slot(&next, req.schema).map(|slot| ProposedQuestion {
                slot: slot.to_string(),
                text: self
                    .rules
                    .question_templates
                    .get(slot)
                    .cloned()
                    .or_else(|| req.schema.get(slot).map(|d| d.prompt_hint.clone()))
                    .unwrap_or_default(),
            })
        };
        let mut reply = AdapterReply {
            updates,
            question,
            usage: TokenUsage::default(),
        };
        let output = serde_json::to_string(&reply).unwrap_or_default();
        reply.usage = TokenUsage::new(
            count_tokens_approx(&self.prompt_text(req)),
            count_tokens_approx(&output),
        );
        Ok(reply)
    }
}
