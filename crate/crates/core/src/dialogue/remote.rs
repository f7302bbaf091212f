use std::sync::Arc;

use serde_json::{json, Value};

use super::adapter::{AdapterError, AdapterReply, AdapterRequest, LlmAdapter};
use super::{Speaker, TokenUsage};
use crate::transport::{JsonTransport, TransportError};

const SYSTEM_PROMPT: &str = "You are a software architect embedded in an internal developer platform. \
Your job is to find out which pre-approved service template fits the developer's project. \
Track these requirement slots: {slots}. \
Reply with exactly one JSON object of the form \
{\"updates\": {\"<slot>\": {\"status\": \"filled\", \"value\": \"<lowercase value>\"} | {\"status\": \"uncertain\"}}, \
\"question\": {\"slot\": \"<slot>\", \"text\": \"<question>\"} | null}. \
Only report values the developer actually stated. If they answer \"not sure\" or similar, mark the asked slot uncertain. \
Ask about one unfilled slot at a time; set question to null when every slot is resolved.";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemoteAdapterConfig {
    /// Base URL of a chat-completions compatible API, e.g. `https://host/v1`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Attempts per call for transport failures.
    pub max_attempts: u32,
}

/// Chat-completion backed adapter with temperature 0 and a JSON
/// structured-output contract. Malformed output is re-asked once.
pub struct RemoteAdapter {
    config: RemoteAdapterConfig,
    transport: Arc<dyn JsonTransport>,
}

impl RemoteAdapter {
    pub fn new(config: RemoteAdapterConfig, transport: Arc<dyn JsonTransport>) -> Self {
        RemoteAdapter { config, transport }
    }

    fn messages(&self, req: &AdapterRequest<'_>) -> Vec<Value> {
        let slots: Vec<&str> = req.schema.names().collect();
        let mut msgs = vec![json!({
            "role": "system",
            "content": SYSTEM_PROMPT.replace("{slots}", &slots.join(", ")),
        })];
        let state: serde_json::Map<String, Value> = req
            .slots
            .ordered(req.schema)
            .map(|(n, s)| (n.to_string(), serde_json::to_value(s).unwrap_or(Value::Null)))
            .collect();
        msgs.push(json!({
            "role": "system",
            "content": format!(
                "Current slot state: {}. Last question asked about: {}.",
                Value::Object(state),
                req.asked_slot.unwrap_or("nothing yet")
            ),
        }));
        for turn in req.transcript.turns() {
            let role = match turn.speaker {
                Speaker::User => "user",
                Speaker::Agent => "assistant",
            };
            msgs.push(json!({ "role": role, "content": turn.text }));
        }
        msgs.push(json!({ "role": "user", "content": req.message }));
        msgs
    }

    fn call(&self, messages: &[Value]) -> Result<Value, AdapterError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let body = json!({
            "model": self.config.model,
            "temperature": 0,
            "response_format": { "type": "json_object" },
            "messages": messages,
        });
        let mut last = TransportError::Request("no attempt made".into());
        for attempt in 1..=self.config.max_attempts.max(1) {
            match self
                .transport
                .post_json(&url, self.config.api_key.as_deref(), &body)
            {
                Ok(v) => return Ok(v),
                Err(e) => {
                    tracing::warn!(attempt, error = %e, "chat completion failed");
                    last = e;
                }
            }
        }
        Err(AdapterError::Unavailable(last.to_string()))
    }
}

fn usage_of(resp: &Value) -> TokenUsage {
    let u = &resp["usage"];
    TokenUsage::new(
        u["prompt_tokens"].as_u64().unwrap_or(0),
        u["completion_tokens"].as_u64().unwrap_or(0),
    )
}

/// Parse `choices[0].message.content` against the structured-output contract.
pub(crate) fn parse_reply(resp: &Value) -> Result<AdapterReply, String> {
    let content = resp["choices"][0]["message"]["content"]
        .as_str()
        .ok_or("missing choices[0].message.content")?;
    let reply: AdapterReply = serde_json::from_str(content.trim()).map_err(|e| e.to_string())?;
    Ok(reply)
}

impl LlmAdapter for RemoteAdapter {
    fn id(&self) -> String {
        format!("remote/{}", self.config.model)
    }

    fn respond(&self, req: &AdapterRequest<'_>) -> Result<AdapterReply, AdapterError> {
        let mut messages = self.messages(req);
        let first = self.call(&messages)?;
        let mut usage = usage_of(&first);
        let err = match parse_reply(&first) {
            Ok(mut reply) => {
                reply.usage = usage;
                return Ok(reply);
            }
            Err(e) => e,
        };
        tracing::warn!(error = %err, "malformed adapter output, re-asking once");
        messages.push(json!({
            "role": "user",
            "content": format!(
                "Your previous reply was not valid ({err}). Respond again with only the JSON object."
            ),
        }));
        let second = self.call(&messages)?;
        usage += usage_of(&second);
        let mut reply = parse_reply(&second).map_err(AdapterError::MalformedOutput)?;
        reply.usage = usage;
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Mutex;

    use super::*;
    use crate::dialogue::{SlotSchema, SlotState, SlotUpdate, Transcript};

    /// Serves canned responses in order and records request bodies.
    struct Canned {
        responses: Mutex<Vec<Result<Value, TransportError>>>,
        seen: Mutex<Vec<Value>>,
    }

    impl Canned {
        fn new(mut r: Vec<Result<Value, TransportError>>) -> Arc<Self> {
            r.reverse();
            Arc::new(Canned {
                responses: Mutex::new(r),
                seen: Mutex::new(vec![]),
            })
        }
    }

    impl JsonTransport for Canned {
        fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<Value, TransportError> {
            assert!(url.ends_with("/chat/completions"));
            assert_eq!(bearer, Some("k"));
            self.seen.lock().unwrap().push(body.clone());
            self.responses.lock().unwrap().pop().expect("unexpected call")
        }
    }

    fn completion(content: &str, p: u64, c: u64) -> Value {
        json!({
            "choices": [{ "message": { "role": "assistant", "content": content } }],
            "usage": { "prompt_tokens": p, "completion_tokens": c },
        })
    }

    fn adapter(t: Arc<Canned>) -> RemoteAdapter {
        RemoteAdapter::new(
            RemoteAdapterConfig {
                base_url: "http://llm/v1/".into(),
                model: "m".into(),
                api_key: Some("k".into()),
                max_attempts: 2,
            },
            t,
        )
    }

    fn respond(a: &RemoteAdapter) -> Result<AdapterReply, AdapterError> {
        let schema = SlotSchema::default();
        let slots = SlotState::new();
        let transcript = Transcript::default();
        a.respond(&AdapterRequest {
            schema: &schema,
            slots: &slots,
            transcript: &transcript,
            message: "PostgreSQL please",
            asked_slot: Some("database"),
        })
    }

    #[test]
    fn parses_contract_and_usage() {
        let t = Canned::new(vec![Ok(completion(
            r#"{"updates":{"database":{"status":"filled","value":"postgresql"}},"question":{"slot":"api_style","text":"REST or gRPC?"}}"#,
            120,
            30,
        ))]);
        let r = respond(&adapter(t.clone())).unwrap();
        assert_eq!(r.updates["database"], SlotUpdate::Filled("postgresql".into()));
        assert_eq!(r.question.unwrap().slot, "api_style");
        assert_eq!(r.usage, TokenUsage::new(120, 30));
        let body = &t.seen.lock().unwrap()[0];
        assert_eq!(body["temperature"], 0);
        assert_eq!(body["model"], "m");
    }

    #[test]
    fn malformed_output_is_reasked_once() {
        let t = Canned::new(vec![
            Ok(completion("sure! postgres it is", 100, 10)),
            Ok(completion(r#"{"updates":{},"question":null}"#, 110, 5)),
        ]);
        let r = respond(&adapter(t.clone())).unwrap();
        assert_eq!(r.usage, TokenUsage::new(210, 15));
        assert_eq!(t.seen.lock().unwrap().len(), 2);

        let t = Canned::new(vec![Ok(completion("nope", 1, 1)), Ok(completion("still no", 1, 1))]);
        assert!(matches!(respond(&adapter(t)), Err(AdapterError::MalformedOutput(_))));
    }

    #[test]
    fn transport_failures_retry_then_fail() {
        let t = Canned::new(vec![
            Err(TransportError::Request("timeout".into())),
            Ok(completion(r#"{"updates":{},"question":null}"#, 1, 1)),
        ]);
        assert!(respond(&adapter(t)).is_ok());
        let t = Canned::new(vec![
            Err(TransportError::Request("down".into())),
            Err(TransportError::Request("down".into())),
        ]);
        assert!(matches!(respond(&adapter(t)), Err(AdapterError::Unavailable(_))));
    }
}
