//! Artifact domain types: identifiers, roles, scopes, payloads, records,
//! and draft validation against a store snapshot.

use std::collections::BTreeSet;
use std::fmt;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::canon;

/// Name discipline shared by families, roles, and payload types:
/// normalized (trimmed, ASCII-lowercased) names matching `[a-z0-9_]+`.
pub fn normalize_name(raw: &str) -> Result<String, NameError> {
    let name = raw.trim().to_ascii_lowercase();
    if name.is_empty() {
        return Err(NameError::Empty);
    }
    if let Some(bad) = name
        .chars()
        .find(|c| !matches!(c, 'a'..='z' | '0'..='9' | '_'))
    {
        return Err(NameError::InvalidCharacter(bad));
    }
    Ok(name)
}

fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NameError {
    #[error("name is empty")]
    Empty,
    #[error("name contains invalid character {0:?}")]
    InvalidCharacter(char),
}

/// A committed artifact's address: `family:vN`.
///
/// Ordering is (family, numeric version), not lexicographic over the
/// rendered form, so `criteria:v2` sorts before `criteria:v10`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ArtifactId {
    family: String,
    version: u32,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdError {
    #[error("invalid family name: {0}")]
    Family(#[from] NameError),
    #[error("version must be >= 1")]
    VersionZero,
    #[error("malformed artifact id {0:?}, expected family:vN")]
    Malformed(String),
}

impl ArtifactId {
    pub fn new(family: &str, version: u32) -> Result<Self, IdError> {
        if version == 0 {
            return Err(IdError::VersionZero);
        }
        Ok(Self {
            family: normalize_name(family)?,
            version,
        })
    }

    /// Strict parse of the canonical rendering; `parse(render(id)) == id`.
    pub fn parse(text: &str) -> Result<Self, IdError> {
        let malformed = || IdError::Malformed(text.to_string());
        let (family, rest) = text.split_once(':').ok_or_else(malformed)?;
        if !is_valid_name(family) {
            return Err(malformed());
        }
        let digits = rest.strip_prefix('v').ok_or_else(malformed)?;
        if digits.is_empty() || digits.starts_with('0') || !digits.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(malformed());
        }
        let version: u32 = digits.parse().map_err(|_| malformed())?;
        Ok(Self {
            family: family.to_string(),
            version,
        })
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn render(&self) -> String {
        format!("{}:v{}", self.family, self.version)
    }
}

impl fmt::Display for ArtifactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:v{}", self.family, self.version)
    }
}

/// Whether a role admits one active artifact per scope or several.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AuthorityMode {
    SingleActive,
    MultiActive,
}

impl AuthorityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SingleActive => "single_active",
            Self::MultiActive => "multi_active",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "single_active" => Some(Self::SingleActive),
            "multi_active" => Some(Self::MultiActive),
            _ => None,
        }
    }
}

impl fmt::Display for AuthorityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A role declaration: functional purpose plus its resolution policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Role {
    pub name: String,
    pub mode: AuthorityMode,
}

impl Role {
    pub fn new(name: &str, mode: AuthorityMode) -> Result<Self, NameError> {
        Ok(Self {
            name: normalize_name(name)?,
            mode,
        })
    }
}

/// Authority boundary. Opaque, non-empty; scopes relate only by equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Scope(String);

#[derive(Debug, Error, PartialEq, Eq)]
#[error("scope must be non-empty")]
pub struct EmptyScope;

impl Scope {
    pub fn new(name: impl Into<String>) -> Result<Self, EmptyScope> {
        let name = name.into();
        if name.is_empty() {
            Err(EmptyScope)
        } else {
            Ok(Self(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Active,
    Superseded,
    Historical,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Active => "active",
            Self::Superseded => "superseded",
            Self::Historical => "historical",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "active" => Some(Self::Active),
            "superseded" => Some(Self::Superseded),
            "historical" => Some(Self::Historical),
            _ => None,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dependency edge kinds. Both propagate invalidation identically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeType {
    Consumes,
    DerivedFrom,
}

impl EdgeType {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Consumes => "consumes",
            Self::DerivedFrom => "derived_from",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "consumes" => Some(Self::Consumes),
            "derived_from" => Some(Self::DerivedFrom),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepEdge {
    pub target: ArtifactId,
    pub edge_type: EdgeType,
}

impl DepEdge {
    pub fn consumes(target: ArtifactId) -> Self {
        Self {
            target,
            edge_type: EdgeType::Consumes,
        }
    }

    pub fn derived_from(target: ArtifactId) -> Self {
        Self {
            target,
            edge_type: EdgeType::DerivedFrom,
        }
    }
}

/// Structured content plus its type tag and canonical digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payload {
    pub payload_type: String,
    pub content: Value,
    pub content_hash: String,
}

impl Payload {
    /// Builds a payload, computing the digest from the content.
    pub fn new(payload_type: impl Into<String>, content: Value) -> Self {
        let content_hash = canon::canonical_hash(&content);
        Self {
            payload_type: payload_type.into(),
            content,
            content_hash,
        }
    }

    /// Reconstructs a payload carrying an externally stated digest.
    /// Validation reports a mismatch instead of silently recomputing.
    pub fn with_stated_hash(
        payload_type: impl Into<String>,
        content: Value,
        content_hash: String,
    ) -> Self {
        Self {
            payload_type: payload_type.into(),
            content,
            content_hash,
        }
    }

    pub fn hash_matches(&self) -> bool {
        canon::canonical_hash(&self.content) == self.content_hash
    }
}

/// Production provenance and supersession targets.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lineage {
    /// Opaque identifier of the execution step that produced the artifact.
    pub produced_by: String,
    pub supersedes: Vec<ArtifactId>,
}

/// A candidate record before commit: everything but status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactDraft {
    pub id: ArtifactId,
    pub role: String,
    pub scope: Scope,
    pub depends_on: Vec<DepEdge>,
    pub lineage: Lineage,
    pub payload: Payload,
}

impl ArtifactDraft {
    pub fn into_record(self, status: Status) -> ArtifactRecord {
        ArtifactRecord {
            id: self.id,
            role: self.role,
            scope: self.scope,
            status,
            depends_on: self.depends_on,
            lineage: self.lineage,
            payload: self.payload,
        }
    }
}

/// One committed, immutable artifact instance. Only `status` ever changes,
/// and only Active -> Superseded or Active -> Historical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactRecord {
    pub id: ArtifactId,
    pub role: String,
    pub scope: Scope,
    pub status: Status,
    pub depends_on: Vec<DepEdge>,
    pub lineage: Lineage,
    pub payload: Payload,
}

impl ArtifactRecord {
    pub fn as_draft(&self) -> ArtifactDraft {
        ArtifactDraft {
            id: self.id.clone(),
            role: self.role.clone(),
            scope: self.scope.clone(),
            depends_on: self.depends_on.clone(),
            lineage: self.lineage.clone(),
            payload: self.payload.clone(),
        }
    }
}

/// Read access a draft is validated against.
pub trait StoreView {
    fn record(&self, id: &ArtifactId) -> Option<&ArtifactRecord>;
    /// Highest committed version in a family, if any.
    fn max_family_version(&self, family: &str) -> Option<u32>;
}

/// One failed validation rule, naming the field it applies to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: &'static str,
    pub detail: String,
}

impl Violation {
    fn new(field: &'static str, rule: &'static str, detail: impl Into<String>) -> Self {
        Self {
            field,
            rule,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.field, self.rule, self.detail)
    }
}

/// Checks every record invariant against a snapshot. Total: the result
/// value carries all violations rather than stopping at the first.
pub fn validate_record(
    draft: &ArtifactDraft,
    view: &impl StoreView,
) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();

    let expected_version = view.max_family_version(draft.id.family()).unwrap_or(0) + 1;
    if draft.id.version() != expected_version {
        violations.push(Violation::new(
            "artifact_id",
            "version-not-dense",
            format!(
                "family {} expects v{}, draft is v{}",
                draft.id.family(),
                expected_version,
                draft.id.version()
            ),
        ));
    }

    if !is_valid_name(&draft.role) {
        violations.push(Violation::new("role", "role-name-invalid", &draft.role));
    }

    if !is_valid_name(&draft.payload.payload_type) {
        violations.push(Violation::new(
            "payload_type",
            "payload-type-invalid",
            &draft.payload.payload_type,
        ));
    }

    if !draft.payload.content.is_object() {
        violations.push(Violation::new(
            "payload",
            "payload-content-not-object",
            "payload content must be a key/value document",
        ));
    }

    if !draft.payload.hash_matches() {
        violations.push(Violation::new(
            "payload_hash",
            "payload-hash-mismatch",
            format!(
                "stated {} != computed {}",
                draft.payload.content_hash,
                canon::canonical_hash(&draft.payload.content)
            ),
        ));
    }

    for edge in &draft.depends_on {
        if view.record(&edge.target).is_none() {
            violations.push(Violation::new(
                "depends_on",
                "unknown-dependency",
                edge.target.render(),
            ));
        }
    }

    let mut seen = BTreeSet::new();
    for target in &draft.lineage.supersedes {
        if !seen.insert(target) {
            violations.push(Violation::new(
                "supersedes",
                "duplicate-supersession-target",
                target.render(),
            ));
            continue;
        }
        match view.record(target) {
            None => violations.push(Violation::new(
                "supersedes",
                "unknown-supersession-target",
                target.render(),
            )),
            Some(prior) => {
                if prior.role != draft.role {
                    violations.push(Violation::new(
                        "supersedes",
                        "supersession-role-mismatch",
                        format!("{} has role {}", target.render(), prior.role),
                    ));
                }
                if prior.scope != draft.scope {
                    violations.push(Violation::new(
                        "supersedes",
                        "supersession-scope-mismatch",
                        format!("{} has scope {}", target.render(), prior.scope),
                    ));
                }
            }
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

fn id_array(ids: &[ArtifactId]) -> Value {
    Value::Array(ids.iter().map(|id| Value::String(id.render())).collect())
}

/// Canonical record document: the fixed field set, keys sorted by the
/// canonical writer.
pub fn record_to_value(record: &ArtifactRecord) -> Value {
    let mut map = Map::new();
    map.insert(
        "artifact_id".into(),
        Value::String(record.id.render()),
    );
    map.insert(
        "depends_on".into(),
        Value::Array(
            record
                .depends_on
                .iter()
                .map(|e| Value::String(e.target.render()))
                .collect(),
        ),
    );
    map.insert(
        "edge_types".into(),
        Value::Array(
            record
                .depends_on
                .iter()
                .map(|e| Value::String(e.edge_type.as_str().into()))
                .collect(),
        ),
    );
    map.insert(
        "family_id".into(),
        Value::String(record.id.family().to_string()),
    );
    map.insert("payload".into(), record.payload.content.clone());
    map.insert(
        "payload_hash".into(),
        Value::String(record.payload.content_hash.clone()),
    );
    map.insert(
        "payload_type".into(),
        Value::String(record.payload.payload_type.clone()),
    );
    map.insert(
        "produced_by".into(),
        Value::String(record.lineage.produced_by.clone()),
    );
    map.insert("role".into(), Value::String(record.role.clone()));
    map.insert(
        "scope".into(),
        Value::String(record.scope.as_str().to_string()),
    );
    map.insert(
        "status".into(),
        Value::String(record.status.as_str().into()),
    );
    map.insert("supersedes".into(), id_array(&record.lineage.supersedes));
    Value::Object(map)
}

/// Draft document: the record layout without `status`.
pub fn draft_to_value(draft: &ArtifactDraft) -> Value {
    let mut value = record_to_value(&draft.clone().into_record(Status::Active));
    if let Value::Object(map) = &mut value {
        map.remove("status");
    }
    value
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DocumentError {
    #[error("missing required field {0}")]
    MissingField(&'static str),
    #[error("field {field}: {message}")]
    BadField { field: &'static str, message: String },
}

impl DocumentError {
    fn bad(field: &'static str, message: impl Into<String>) -> Self {
        Self::BadField {
            field,
            message: message.into(),
        }
    }
}

fn get_str<'a>(map: &'a Map<String, Value>, field: &'static str) -> Result<&'a str, DocumentError> {
    match map.get(field) {
        None => Err(DocumentError::MissingField(field)),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(DocumentError::bad(field, "expected a string")),
    }
}

fn opt_str<'a>(
    map: &'a Map<String, Value>,
    field: &'static str,
) -> Result<Option<&'a str>, DocumentError> {
    match map.get(field) {
        None => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(DocumentError::bad(field, "expected a string")),
    }
}

fn id_list(map: &Map<String, Value>, field: &'static str) -> Result<Vec<ArtifactId>, DocumentError> {
    match map.get(field) {
        None => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|item| match item {
                Value::String(s) => {
                    ArtifactId::parse(s).map_err(|e| DocumentError::bad(field, e.to_string()))
                }
                _ => Err(DocumentError::bad(field, "expected artifact id strings")),
            })
            .collect(),
        Some(_) => Err(DocumentError::bad(field, "expected an array")),
    }
}

/// Reads a draft from a record-shaped document.
///
/// Accepts the canonical record layout and the looser authoring shape:
/// `type` as an alias for `payload_type`, omitted `family_id`,
/// `produced_by`, `edge_types`, and `payload_hash`, and an omitted `scope`
/// when a default is supplied. A `status` field is ignored; the store
/// assigns status at commit.
pub fn draft_from_document(
    map: &Map<String, Value>,
    default_scope: Option<&Scope>,
    default_produced_by: &str,
) -> Result<ArtifactDraft, DocumentError> {
    let id = ArtifactId::parse(get_str(map, "artifact_id")?)
        .map_err(|e| DocumentError::bad("artifact_id", e.to_string()))?;

    if let Some(family) = opt_str(map, "family_id")? {
        if family != id.family() {
            return Err(DocumentError::bad(
                "family_id",
                format!("{family:?} does not match artifact_id family {:?}", id.family()),
            ));
        }
    }

    let role = get_str(map, "role")?.to_string();

    let scope = match opt_str(map, "scope")? {
        Some(s) => Scope::new(s).map_err(|e| DocumentError::bad("scope", e.to_string()))?,
        None => default_scope
            .cloned()
            .ok_or(DocumentError::MissingField("scope"))?,
    };

    let targets = id_list(map, "depends_on")?;
    let edge_types: Vec<EdgeType> = match map.get("edge_types") {
        None => vec![EdgeType::Consumes; targets.len()],
        Some(Value::Array(items)) => {
            if items.len() != targets.len() {
                return Err(DocumentError::bad(
                    "edge_types",
                    "length does not match depends_on",
                ));
            }
            items
                .iter()
                .map(|item| match item {
                    Value::String(s) => EdgeType::parse(s)
                        .ok_or_else(|| DocumentError::bad("edge_types", format!("unknown edge type {s:?}"))),
                    _ => Err(DocumentError::bad("edge_types", "expected strings")),
                })
                .collect::<Result<_, _>>()?
        }
        Some(_) => return Err(DocumentError::bad("edge_types", "expected an array")),
    };
    let depends_on = targets
        .into_iter()
        .zip(edge_types)
        .map(|(target, edge_type)| DepEdge { target, edge_type })
        .collect();

    let supersedes = id_list(map, "supersedes")?;
    let produced_by = opt_str(map, "produced_by")?
        .unwrap_or(default_produced_by)
        .to_string();

    let payload_type = match opt_str(map, "payload_type")? {
        Some(t) => t.to_string(),
        None => opt_str(map, "type")?.unwrap_or("document").to_string(),
    };
    let content = map
        .get("payload")
        .ok_or(DocumentError::MissingField("payload"))?
        .clone();
    let payload = match opt_str(map, "payload_hash")? {
        Some(hash) => Payload::with_stated_hash(payload_type, content, hash.to_string()),
        None => Payload::new(payload_type, content),
    };

    Ok(ArtifactDraft {
        id,
        role,
        scope,
        depends_on,
        lineage: Lineage {
            produced_by,
            supersedes,
        },
        payload,
    })
}

/// Reads a full record back from its canonical document.
pub fn record_from_document(map: &Map<String, Value>) -> Result<ArtifactRecord, DocumentError> {
    let status = Status::parse(get_str(map, "status")?)
        .ok_or_else(|| DocumentError::bad("status", "unknown status"))?;
    let draft = draft_from_document(map, None, "")?;
    Ok(draft.into_record(status))
}
