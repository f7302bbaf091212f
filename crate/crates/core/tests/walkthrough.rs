use std::path::{Path, PathBuf};
use std::sync::Arc;

use tplrag_core::clock::ManualClock;
use tplrag_core::dialogue::{AgentAction, SlotStatus, Speaker};
use tplrag_core::embedding::build_index;
use tplrag_core::{
    compose_query, ingest_catalog, recommend, ConversationEvent, Engine, Embedder, HashingEmbedder,
    RuleTable, ScriptedAdapter, SlotSchema,
};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn engine() -> Engine {
    let (catalog, _) = ingest_catalog(&fixtures().join("catalog")).unwrap();
    let embedder: Arc<dyn Embedder> = Arc::new(HashingEmbedder::default());
    let index = build_index(&catalog, embedder.as_ref()).unwrap();
    Engine::new(
        Arc::new(index),
        embedder,
        Arc::new(ScriptedAdapter::new(RuleTable::default())),
    )
}

fn dialog() -> Vec<String> {
    std::fs::read_to_string(fixtures().join("walkthrough/dialog.txt"))
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect()
}

fn walkthrough_schema() -> SlotSchema {
    SlotSchema::from_json(&std::fs::read_to_string(fixtures().join("walkthrough/schema.json")).unwrap()).unwrap()
}

#[test]
fn four_lines_end_in_the_expected_recommendation() {
    let engine = engine();
    let clock = ManualClock::new(0);
    let lines = dialog();
    let (mut conv, mut reply) = engine.start(Some(walkthrough_schema()), &lines[0], &clock).unwrap();
    let mut asked = Vec::new();
    for line in &lines[1..] {
        match &reply.action {
            AgentAction::AskQuestion { slot, .. } => asked.push(slot.clone()),
            other => panic!("finished early with {other:?}"),
        }
        reply = engine.respond(&mut conv, line, &clock).unwrap();
    }
    assert_eq!(asked, ["purpose", "database", "api_style"]);
    assert!(matches!(reply.action, AgentAction::Recommend { forced: false }));
    let rec = reply.recommendation.unwrap();
    assert_eq!(rec.chosen, "node-express-postgres");
    assert_eq!(
        rec.query_text,
        "product catalog for shop frontend stack=node database=postgresql api_style=rest"
    );
    assert_eq!(reply.agent_text, "Recommended template: node-express-postgres.yaml");

    let t = conv.session.transcript();
    assert_eq!(t.count(Speaker::User), 4);
    assert_eq!(t.count(Speaker::Agent), 4);
    assert_eq!(
        conv.session.slots().status("purpose"),
        &SlotStatus::Filled("product catalog for shop frontend".into())
    );
}

#[test]
fn replaying_events_rebuilds_the_conversation() {
    let engine = engine();
    let clock = ManualClock::new(0);
    let lines = dialog();
    let (mut conv, first) = engine.start(Some(walkthrough_schema()), &lines[0], &clock).unwrap();
    let mut events: Vec<ConversationEvent> = first.events;
    for line in &lines[1..] {
        clock.advance(500);
        events.extend(engine.respond(&mut conv, line, &clock).unwrap().events);
    }
    let json: Vec<String> = events.iter().map(|e| serde_json::to_string(e).unwrap()).collect();
    let parsed: Vec<ConversationEvent> = json.iter().map(|s| serde_json::from_str(s).unwrap()).collect();
    let back = tplrag_core::Conversation::replay(&parsed).unwrap();
    assert_eq!(back, conv);
    assert_eq!(back.session.usage(), conv.session.usage());
}

#[test]
fn default_schema_force_completes_to_the_same_answer() {
    let engine = engine();
    let clock = ManualClock::new(0);
    let lines = dialog();
    let (mut conv, mut reply) = engine.start(None, &lines[0], &clock).unwrap();
    for line in &lines[1..] {
        reply = engine.respond(&mut conv, line, &clock).unwrap();
    }
    // auth and cicd are still open; answering both with a hedge ends the loop.
    while let AgentAction::AskQuestion { .. } = reply.action {
        reply = engine.respond(&mut conv, "not sure", &clock).unwrap();
    }
    assert_eq!(reply.recommendation.unwrap().chosen, "node-express-postgres");
}

#[test]
fn ssr_example_state_prefers_ground_truth_over_spa() {
    let (catalog, _) = ingest_catalog(&fixtures().join("catalog")).unwrap();
    let e = HashingEmbedder::default();
    let index = build_index(&catalog, &e).unwrap();
    let schema = SlotSchema::default();
    let mut st = tplrag_core::dialogue::SlotState::new();
    st.set("purpose", SlotStatus::Filled("frontend service".into()));
    st.set("rendering", SlotStatus::Filled("ssr".into()));
    st.set("database", SlotStatus::Filled("postgresql".into()));
    st.set("auth", SlotStatus::Filled("true".into()));
    for s in ["stack", "api_style", "cicd"] {
        st.set(s, SlotStatus::Uncertain);
    }
    assert_eq!(
        compose_query(&st, &schema).unwrap(),
        "frontend service database=postgresql rendering=ssr auth=true"
    );
    let rec = recommend(&st, &schema, &index, &e, 5).unwrap();
    assert!(rec.alternatives.iter().all(|h| h.template_id != "node-express-postgres-spa-auth"
        || h.score < rec.score));
    st.set("stack", SlotStatus::Filled("node-express".into()));
    st.set("api_style", SlotStatus::Filled("rest".into()));
    let rec = recommend(&st, &schema, &index, &e, 5).unwrap();
    assert_eq!(rec.chosen, "node-express-postgres-ssr-auth");
}
