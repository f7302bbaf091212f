//! Service-template catalog: parsing of template documents, directory
//! ingestion with per-file error isolation, and the canonical text that gets
//! embedded for retrieval.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// File extension of template documents.
pub const TEMPLATE_EXTENSION: &str = "yaml";
pub const API_VERSION: &str = "scaffolder/v1";
pub const KIND: &str = "Template";

/// Allowed pipeline capabilities for the `cicd` facet.
pub const CICD_VOCABULARY: [&str; 5] = ["test", "build", "deploy", "lint", "release"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CatalogError {
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("{path}: missing required field `{field}`")]
    MissingField { path: String, field: String },
    #[error("no valid templates found in {0}")]
    EmptyCatalog(String),
    #[error("cannot read {path}: {reason}")]
    Io { path: String, reason: String },
    #[error("duplicate template id `{0}`")]
    DuplicateId(String),
}

impl CatalogError {
    fn parse(path: &str, reason: impl Into<String>) -> Self {
        CatalogError::Parse {
            path: path.to_string(),
            reason: reason.into(),
        }
    }
}

/// Structured constraint fields of a template.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetSet {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stack: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub database: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rendering: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_style: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cicd: Vec<String>,
}

impl FacetSet {
    pub fn is_empty(&self) -> bool {
        *self == FacetSet::default()
    }

    /// `key=value` pairs in canonical facet order; absent facets are skipped.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let strings = [
            ("stack", &self.stack),
            ("database", &self.database),
            ("rendering", &self.rendering),
            ("api_style", &self.api_style),
        ];
        for (key, value) in strings {
            if let Some(v) = value {
                out.push((key, v.clone()));
            }
        }
        if let Some(auth) = self.auth {
            out.push(("auth", auth.to_string()));
        }
        if !self.cicd.is_empty() {
            out.push(("cicd", self.cicd.join(",")));
        }
        out
    }

    /// Value of a facet by name, rendered the way it appears in `pairs`.
    pub fn get(&self, key: &str) -> Option<String> {
        self.pairs()
            .into_iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }
}

/// A parsed, pre-approved service template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceTemplate {
    pub id: String,
    pub title: String,
    pub description: String,
    pub tags: Vec<String>,
    pub facets: FacetSet,
    pub source_path: String,
    pub raw_document: String,
}

impl ServiceTemplate {
    /// Deterministic text embedded for retrieval: title, description, tags,
    /// then `key=value` facets, lowercased and single-space separated.
    pub fn canonical_text(&self) -> String {
        canonical_text(self)
    }
}

pub fn canonical_text(t: &ServiceTemplate) -> String {
    let mut parts: Vec<String> = vec![t.title.clone(), t.description.clone()];
    parts.extend(t.tags.iter().cloned());
    parts.extend(t.facets.pairs().into_iter().map(|(k, v)| format!("{k}={v}")));
    let joined = parts.join(" ").to_lowercase();
    joined.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

/// Lowercase, trim, and replace inner whitespace runs with `-`.
pub fn normalize_facet_value(value: &str) -> String {
    value
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("-")
        .to_lowercase()
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawDocument {
    api_version: Option<String>,
    kind: Option<String>,
    metadata: Option<RawMetadata>,
}

#[derive(Debug, Deserialize)]
struct RawMetadata {
    title: Option<String>,
    description: Option<String>,
    #[serde(default)]
    tags: Vec<String>,
    #[serde(default)]
    facets: RawFacets,
}

#[derive(Debug, Default, Deserialize)]
struct RawFacets {
    stack: Option<String>,
    database: Option<String>,
    rendering: Option<String>,
    api_style: Option<String>,
    auth: Option<bool>,
    #[serde(default)]
    cicd: Vec<String>,
}

/// Parse a template document. `path` is the catalog-relative path; its file
/// stem becomes the template id.
pub fn parse_template(text: &str, path: &str) -> Result<ServiceTemplate, CatalogError> {
    let id = Path::new(path)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    if !is_valid_id(&id) {
        return Err(CatalogError::parse(
            path,
            format!("file stem `{id}` is not a valid id (expected [a-z0-9-]+)"),
        ));
    }

    let raw: RawDocument = serde_yaml::from_str(text).map_err(|e| {
        let at = e
            .location()
            .map(|l| format!("line {}, column {}: ", l.line(), l.column()))
            .unwrap_or_default();
        CatalogError::parse(path, format!("{at}{e}"))
    })?;

    match raw.api_version.as_deref() {
        Some(API_VERSION) => {}
        Some(other) => {
            return Err(CatalogError::parse(
                path,
                format!("apiVersion: expected `{API_VERSION}`, got `{other}`"),
            ))
        }
        None => return Err(missing(path, "apiVersion")),
    }
    match raw.kind.as_deref() {
        Some(KIND) => {}
        Some(other) => {
            return Err(CatalogError::parse(
                path,
                format!("kind: expected `{KIND}`, got `{other}`"),
            ))
        }
        None => return Err(missing(path, "kind")),
    }
    let meta = raw.metadata.ok_or_else(|| missing(path, "metadata"))?;
    let description = meta
        .description
        .map(|d| d.trim().to_string())
        .filter(|d| !d.is_empty())
        .ok_or_else(|| missing(path, "metadata.description"))?;
    let title = meta
        .title
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .unwrap_or_else(|| id.clone());

    let f = meta.facets;
    let norm = |v: Option<String>| v.map(|s| normalize_facet_value(&s)).filter(|s| !s.is_empty());
    let mut cicd = Vec::with_capacity(f.cicd.len());
    for entry in f.cicd {
        let e = normalize_facet_value(&entry);
        if !CICD_VOCABULARY.contains(&e.as_str()) {
            return Err(CatalogError::parse(
                path,
                format!("metadata.facets.cicd: unknown capability `{entry}`"),
            ));
        }
        if !cicd.contains(&e) {
            cicd.push(e);
        }
    }

    Ok(ServiceTemplate {
        id,
        title,
        description,
        tags: meta
            .tags
            .into_iter()
            .map(|t| t.trim().to_string())
            .filter(|t| !t.is_empty())
            .collect(),
        facets: FacetSet {
            stack: norm(f.stack),
            database: norm(f.database),
            rendering: norm(f.rendering),
            api_style: norm(f.api_style),
            auth: f.auth,
            cicd,
        },
        source_path: path.to_string(),
        raw_document: text.to_string(),
    })
}

fn missing(path: &str, field: &str) -> CatalogError {
    CatalogError::MissingField {
        path: path.to_string(),
        field: field.to_string(),
    }
}

/// Render a template as a catalog document. Used for generated fixtures; an
/// ingested template keeps its original bytes in `raw_document`.
pub fn to_document(t: &ServiceTemplate, spec: &str) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let q = |s: &str| serde_json::to_string(s).expect("string serializes");
    let _ = writeln!(out, "apiVersion: {API_VERSION}");
    let _ = writeln!(out, "kind: {KIND}");
    let _ = writeln!(out, "metadata:");
    let _ = writeln!(out, "  name: {}", t.id);
    let _ = writeln!(out, "  title: {}", q(&t.title));
    let _ = writeln!(out, "  description: {}", q(&t.description));
    if t.tags.is_empty() {
        let _ = writeln!(out, "  tags: []");
    } else {
        let _ = writeln!(out, "  tags:");
        for tag in &t.tags {
            let _ = writeln!(out, "    - {}", q(tag));
        }
    }
    if t.facets.is_empty() {
        let _ = writeln!(out, "  facets: {{}}");
    } else {
        let _ = writeln!(out, "  facets:");
        let f = &t.facets;
        for (key, value) in [
            ("stack", &f.stack),
            ("database", &f.database),
            ("rendering", &f.rendering),
            ("api_style", &f.api_style),
        ] {
            if let Some(v) = value {
                let _ = writeln!(out, "    {key}: {}", q(v));
            }
        }
        if let Some(a) = f.auth {
            let _ = writeln!(out, "    auth: {a}");
        }
        if !f.cicd.is_empty() {
            let _ = writeln!(out, "    cicd: [{}]", f.cicd.join(", "));
        }
    }
    out.push_str(spec);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub path: String,
    pub reason: String,
}

/// Outcome of ingesting one directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: Vec<String>,
    pub rejected: Vec<Rejection>,
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} accepted, {} rejected",
            self.accepted.len(),
            self.rejected.len()
        )?;
        for r in &self.rejected {
            write!(f, "\n  rejected {}: {}", r.path, r.reason)?;
        }
        Ok(())
    }
}

/// Immutable, id-ordered set of templates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalog {
    templates: Vec<ServiceTemplate>,
    source_dir: String,
}

impl Catalog {
    pub fn new(
        mut templates: Vec<ServiceTemplate>,
        source_dir: impl Into<String>,
    ) -> Result<Self, CatalogError> {
        templates.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = templates.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(CatalogError::DuplicateId(w[0].id.clone()));
        }
        Ok(Catalog {
            templates,
            source_dir: source_dir.into(),
        })
    }

    pub fn templates(&self) -> &[ServiceTemplate] {
        &self.templates
    }

    pub fn source_dir(&self) -> &str {
        &self.source_dir
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ServiceTemplate> {
        self.templates
            .binary_search_by(|t| t.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.templates[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.templates.iter().map(|t| t.id.as_str())
    }
}

/// Ingest every `.yaml` file in `dir` (non-recursive). Bad files are reported
/// and skipped; zero valid templates is an error.
pub fn ingest_catalog(dir: &Path) -> Result<(Catalog, IngestReport), CatalogError> {
    let io_err = |e: std::io::Error| CatalogError::Io {
        path: dir.display().to_string(),
        reason: e.to_string(),
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == TEMPLATE_EXTENSION))
        .collect();
    paths.sort();

    let mut report = IngestReport::default();
    let mut templates = Vec::new();
    let mut seen = BTreeSet::new();
    for path in paths {
        let rel = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let parsed = std::fs::read_to_string(&path)
            .map_err(|e| CatalogError::parse(&rel, e.to_string()))
            .and_then(|text| parse_template(&text, &rel));
        match parsed {
            Ok(t) if !seen.insert(t.id.clone()) => report.rejected.push(Rejection {
                path: rel,
                reason: format!("duplicate template id `{}`", t.id),
            }),
            Ok(t) => {
                report.accepted.push(t.id.clone());
                templates.push(t);
            }
            Err(e) => {
                tracing::warn!(file = %rel, error = %e, "template rejected");
                report.rejected.push(Rejection {
                    path: rel,
                    reason: e.to_string(),
                });
            }
        }
    }
    if templates.is_empty() {
        return Err(CatalogError::EmptyCatalog(dir.display().to_string()));
    }
    report.accepted.sort();
    let catalog = Catalog::new(templates, dir.display().to_string())?;
    Ok((catalog, report))
}
