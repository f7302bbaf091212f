//! Near-miss templates around a ground truth, plus the deterministic
//! description scheme used for all generated fixtures.

use thiserror::Error;

use crate::catalog::{to_document, FacetSet, ServiceTemplate};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DistractorError {
    #[error("requested {requested} distractors but only {available} facet variants exist")]
    InsufficientFacetSpace { requested: usize, available: usize },
    #[error("n must be at least 1")]
    ZeroRequested,
}

/// Values each facet may be flipped to, in enumeration order.
const RENDERINGS: [&str; 3] = ["ssr", "spa", "none"];
const DATABASES: [&str; 3] = ["postgresql", "mongodb", "mysql"];
const API_STYLES: [&str; 2] = ["rest", "grpc"];
const STACKS: [&str; 4] = ["node-express", "node-nestjs", "python-django", "java-spring"];

/// Opaque `spec` block appended to every generated document.
pub const SKELETON_SPEC: &str = "spec:
  owner: platform-team
  type: service
  steps:
    - id: fetch
      name: Fetch skeleton
      action: fetch:template
      input:
        url: ./skeleton
    - id: publish
      name: Publish repository
      action: publish:github
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Facet {
    Rendering,
    Database,
    Auth,
    ApiStyle,
    Stack,
}

const FLIP_ORDER: [Facet; 5] = [
    Facet::Rendering,
    Facet::Database,
    Facet::Auth,
    Facet::ApiStyle,
    Facet::Stack,
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Value {
    Str(&'static str),
    Bool(bool),
}

fn alternatives(facets: &FacetSet, facet: Facet) -> Vec<Value> {
    let others = |current: &Option<String>, all: &[&'static str]| -> Vec<Value> {
        match current {
            Some(c) => all.iter().filter(|v| *v != c).map(|v| Value::Str(v)).collect(),
            None => vec![],
        }
    };
    match facet {
        Facet::Rendering => others(&facets.rendering, &RENDERINGS),
        Facet::Database => others(&facets.database, &DATABASES),
        Facet::ApiStyle => others(&facets.api_style, &API_STYLES),
        Facet::Stack => others(&facets.stack, &STACKS),
        Facet::Auth => facets.auth.map(|a| vec![Value::Bool(!a)]).unwrap_or_default(),
    }
}

fn with(mut facets: FacetSet, facet: Facet, value: &Value) -> FacetSet {
    match (facet, value) {
        (Facet::Auth, Value::Bool(b)) => facets.auth = Some(*b),
        (Facet::Rendering, Value::Str(s)) => facets.rendering = Some(s.to_string()),
        (Facet::Database, Value::Str(s)) => facets.database = Some(s.to_string()),
        (Facet::ApiStyle, Value::Str(s)) => facets.api_style = Some(s.to_string()),
        (Facet::Stack, Value::Str(s)) => facets.stack = Some(s.to_string()),
        _ => unreachable!("facet/value kinds always match"),
    }
    facets
}

/// Every one- and two-facet variant of `facets`: single flips first, then
/// pairs of facets in flip order.
fn variants(facets: &FacetSet) -> Vec<FacetSet> {
    let mut out = Vec::new();
    for f in FLIP_ORDER {
        for v in alternatives(facets, f) {
            out.push(with(facets.clone(), f, &v));
        }
    }
    for (i, f1) in FLIP_ORDER.iter().enumerate() {
        for f2 in &FLIP_ORDER[i + 1..] {
            for v1 in alternatives(facets, *f1) {
                for v2 in alternatives(facets, *f2) {
                    out.push(with(with(facets.clone(), *f1, &v1), *f2, &v2));
                }
            }
        }
    }
    out
}

pub fn generate_distractors(
    ground_truth: &ServiceTemplate,
    n: usize,
) -> Result<Vec<ServiceTemplate>, DistractorError> {
    if n == 0 {
        return Err(DistractorError::ZeroRequested);
    }
    let all = variants(&ground_truth.facets);
    if n > all.len() {
        return Err(DistractorError::InsufficientFacetSpace {
            requested: n,
            available: all.len(),
        });
    }
    Ok(all.into_iter().take(n).map(blueprint).collect())
}

fn stack_label(stack: &str) -> &str {
    match stack {
        "node-express" => "Node.js with Express",
        "node-nestjs" => "Node.js with NestJS",
        "python-django" => "Python with Django",
        "java-spring" => "Java with Spring Boot",
        other => other,
    }
}

fn database_label(db: &str) -> (&str, &str) {
    match db {
        "postgresql" => ("PostgreSQL", "postgres"),
        "mongodb" => ("MongoDB", "mongo"),
        "mysql" => ("MySQL", "mysql"),
        other => (other, other),
    }
}

/// Template id derived from facets, e.g. `node-express-postgres-ssr-auth`.
pub fn blueprint_id(f: &FacetSet) -> String {
    let mut parts: Vec<String> = Vec::new();
    if let Some(s) = &f.stack {
        parts.push(s.clone());
    }
    if let Some(d) = &f.database {
        parts.push(database_label(d).1.to_string());
    }
    if let Some(r) = f.rendering.as_deref().filter(|r| *r != "none") {
        parts.push(r.to_string());
    }
    if let Some(a) = f.api_style.as_deref().filter(|a| *a != "rest") {
        parts.push(a.to_string());
    }
    if f.auth == Some(true) {
        parts.push("auth".into());
    }
    parts.join("-")
}

/// Build a complete template (title, description, tags, document) from facets.
pub fn blueprint(facets: FacetSet) -> ServiceTemplate {
    let id = blueprint_id(&facets);
    let stack = facets.stack.as_deref().map(stack_label).unwrap_or("an unspecified stack");
    let (db, _) = facets.database.as_deref().map(database_label).unwrap_or(("no database", ""));
    let rendering = facets.rendering.as_deref().unwrap_or("none");
    let api = match facets.api_style.as_deref() {
        Some("grpc") => "gRPC",
        Some("rest") => "REST",
        Some(other) => other,
        None => "no",
    };

    let (kind, render_sentence, tag) = match rendering {
        "ssr" => (
            "SSR Frontend",
            "Frontend service with server-side rendering (SSR): pages are rendered on the server and hydrated in the browser.",
            "frontend",
        ),
        "spa" => (
            "SPA Frontend",
            "Frontend single-page application (SPA): the browser renders every view client-side from a static bundle.",
            "frontend",
        ),
        _ => (
            "Microservice",
            "Backend microservice without a user interface, for domain data such as a product catalog consumed by a shop frontend.",
            "backend",
        ),
    };
    let auth_sentence = match facets.auth {
        Some(true) => " Includes user authentication with login.",
        Some(false) => " No authentication.",
        None => "",
    };
    let cicd_sentence = if facets.cicd.is_empty() {
        String::new()
    } else {
        format!(" CI/CD pipeline: {}.", facets.cicd.join(", "))
    };
    let title = format!(
        "{} {} {} {}{}",
        stack_label(facets.stack.as_deref().unwrap_or("")),
        db,
        api,
        kind,
        if facets.auth == Some(true) { " with Auth" } else { "" }
    );
    let description = format!(
        "{render_sentence} Runs on {stack}, persists data in {db} and exposes a {api} API.{auth_sentence}{cicd_sentence}"
    );
    let mut t = ServiceTemplate {
        id: id.clone(),
        title: title.split_whitespace().collect::<Vec<_>>().join(" "),
        description,
        tags: vec![tag.to_string(), "golden-path".to_string()],
        facets,
        source_path: format!("{id}.yaml"),
        raw_document: String::new(),
    };
    t.raw_document = to_document(&t, SKELETON_SPEC);
    t
}

/// Facets of the SSR ground-truth template used by the retrieval experiment.
pub fn ssr_ground_truth_facets() -> FacetSet {
    FacetSet {
        stack: Some("node-express".into()),
        database: Some("postgresql".into()),
        rendering: Some("ssr".into()),
        api_style: Some("rest".into()),
        auth: Some(true),
        cicd: vec!["test".into(), "build".into(), "deploy".into()],
    }
}

/// Ground truth followed by `n_distractors` near misses.
pub fn experiment_catalog(n_distractors: usize) -> Result<Vec<ServiceTemplate>, DistractorError> {
    let gt = blueprint(ssr_ground_truth_facets());
    let mut all = generate_distractors(&gt, n_distractors)?;
    all.insert(0, gt);
    Ok(all)
}
