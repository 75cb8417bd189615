//! Append-only event log with derived in-memory state.
//!
//! All mutation enters as an event: role declarations, additive commits,
//! superseding commits, conflict-override commits, and historical marks.
//! Derived state (records, statuses, active index) is a deterministic fold
//! over the log; the incremental path and [`Store::replay`] share one
//! application routine, so incremental apply equals full replay by
//! construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::artifact::{
    draft_from_document, draft_to_value, validate_record, ArtifactDraft, ArtifactId,
    ArtifactRecord, AuthorityMode, Role, Scope, Status, StoreView, Violation,
};
use crate::canon;

/// One append-only log entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SubstrateEvent {
    /// Dense from 1; never rewritten.
    pub seq: u64,
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventBody {
    DeclareRole(Role),
    CommitAdditive(ArtifactDraft),
    CommitSuperseding(ArtifactDraft),
    /// Additive commit that is allowed to create a second active artifact
    /// in a single-active role; doubles as the conflict marker for its
    /// (role, scope).
    CommitConflicting(ArtifactDraft),
    MarkHistorical(ArtifactId),
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::DeclareRole(_) => "declare_role",
            Self::CommitAdditive(_) => "commit_additive",
            Self::CommitSuperseding(_) => "commit_superseding",
            Self::CommitConflicting(_) => "commit_conflicting",
            Self::MarkHistorical(_) => "mark_historical",
        }
    }
}

/// Result of a superseding commit: the invalidation notification carrying
/// the displaced ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupersedingCommit {
    pub committed: ArtifactId,
    pub displaced: Vec<ArtifactId>,
}

fn render_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

fn render_ids(ids: &BTreeSet<ArtifactId>) -> String {
    ids.iter()
        .map(ArtifactId::render)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("validation failed: {}", render_violations(.0))]
    Validation(Vec<Violation>),
    #[error("role {role} is declared {existing}, cannot redeclare as {requested}")]
    AuthorityModeConflict {
        role: String,
        existing: AuthorityMode,
        requested: AuthorityMode,
    },
    #[error(
        "role {role} is single-active and scope {scope} already has active {}; supersede instead",
        render_ids(active)
    )]
    AuthorityViolation {
        role: String,
        scope: Scope,
        active: BTreeSet<ArtifactId>,
    },
    #[error("cannot supersede {id}: status is {status}")]
    SupersedeInactive { id: ArtifactId, status: Status },
    #[error("unknown artifact {0}")]
    UnknownArtifact(ArtifactId),
    #[error("artifact {id} is already {status}")]
    AlreadyInactive { id: ArtifactId, status: Status },
    #[error("role {0} has not been declared")]
    UndeclaredRole(String),
    #[error("additive commit must not list supersession targets")]
    AdditiveHasSupersedes,
    #[error("superseding commit requires at least one supersession target")]
    SupersedingNeedsTargets,
    #[error("invalid role name {0:?}")]
    InvalidRoleName(String),
}

#[derive(Debug, Error, PartialEq)]
#[error("corrupt log at seq {seq}: {reason}")]
pub struct CorruptLog {
    pub seq: u64,
    pub reason: String,
}

/// Event log plus state derived from it.
///
/// Single-writer: all mutating methods take `&mut self` and are expected to
/// be externally serialized; reads work on the immutable derived state.
#[derive(Debug, Default, Clone)]
pub struct Store {
    events: Vec<SubstrateEvent>,
    // Hash maps keep the apply path cheap on large logs; every dump or
    // query that needs an order sorts explicitly.
    records: HashMap<ArtifactId, ArtifactRecord>,
    roles: BTreeMap<String, AuthorityMode>,
    active: BTreeMap<(String, Scope), BTreeSet<ArtifactId>>,
    scope_roles: BTreeMap<Scope, BTreeSet<String>>,
    family_max: HashMap<String, u32>,
    dependents: HashMap<ArtifactId, BTreeSet<ArtifactId>>,
    superseded_by: HashMap<ArtifactId, ArtifactId>,
    conflicts: BTreeSet<(String, Scope)>,
}

enum Applied {
    RoleDeclared { deduplicated: bool },
    Committed(ArtifactId),
    Superseded(SupersedingCommit),
    MarkedHistorical,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records a role's authority mode. Identical redeclaration is an
    /// idempotent ack and appends nothing.
    pub fn declare_role(&mut self, role: Role) -> Result<(), StoreError> {
        let body = EventBody::DeclareRole(role);
        match self.try_apply(&body)? {
            Applied::RoleDeclared { deduplicated } => {
                if !deduplicated {
                    self.push(body);
                }
                Ok(())
            }
            _ => unreachable!("declare applies as RoleDeclared"),
        }
    }

    /// Adds an artifact without changing any existing artifact's status.
    pub fn commit_additive(&mut self, draft: ArtifactDraft) -> Result<ArtifactId, StoreError> {
        self.commit_additive_with(draft, false).map(|(id, _)| id)
    }

    /// Additive commit with the explicit conflict override: when the target
    /// role is single-active and occupied, `allow_conflict` records a
    /// conflict marker event instead of rejecting. Returns the id and
    /// whether the override was taken.
    pub fn commit_additive_with(
        &mut self,
        draft: ArtifactDraft,
        allow_conflict: bool,
    ) -> Result<(ArtifactId, bool), StoreError> {
        let body = EventBody::CommitAdditive(draft);
        match self.try_apply(&body) {
            Ok(Applied::Committed(id)) => {
                self.push(body);
                Ok((id, false))
            }
            Ok(_) => unreachable!("additive commit applies as Committed"),
            Err(StoreError::AuthorityViolation { .. }) if allow_conflict => {
                let EventBody::CommitAdditive(draft) = body else {
                    unreachable!()
                };
                let body = EventBody::CommitConflicting(draft);
                match self.try_apply(&body)? {
                    Applied::Committed(id) => {
                        self.push(body);
                        Ok((id, true))
                    }
                    _ => unreachable!("conflicting commit applies as Committed"),
                }
            }
            Err(err) => Err(err),
        }
    }

    /// Commits a new artifact that displaces the listed targets:
    /// exactly those records transition Active -> Superseded.
    pub fn commit_superseding(
        &mut self,
        draft: ArtifactDraft,
    ) -> Result<SupersedingCommit, StoreError> {
        let body = EventBody::CommitSuperseding(draft);
        match self.try_apply(&body)? {
            Applied::Superseded(outcome) => {
                self.push(body);
                Ok(outcome)
            }
            _ => unreachable!("superseding commit applies as Superseded"),
        }
    }

    /// Explicit caller-chosen transition out of active state; nothing
    /// infers Historical.
    pub fn mark_historical(&mut self, id: &ArtifactId) -> Result<(), StoreError> {
        let body = EventBody::MarkHistorical(id.clone());
        match self.try_apply(&body)? {
            Applied::MarkedHistorical => {
                self.push(body);
                Ok(())
            }
            _ => unreachable!("mark applies as MarkedHistorical"),
        }
    }

    pub fn get_artifact(&self, id: &ArtifactId) -> Option<&ArtifactRecord> {
        self.records.get(id)
    }

    /// Rebuilds state from a log. The resulting state is a pure function of
    /// the event sequence.
    pub fn replay(events: Vec<SubstrateEvent>) -> Result<Self, CorruptLog> {
        let mut store = Self::new();
        for event in events {
            let expected = store.events.len() as u64 + 1;
            if event.seq != expected {
                return Err(CorruptLog {
                    seq: event.seq,
                    reason: format!("expected seq {expected}"),
                });
            }
            store.try_apply(&event.body).map_err(|err| CorruptLog {
                seq: event.seq,
                reason: err.to_string(),
            })?;
            store.events.push(event);
        }
        Ok(store)
    }

    fn push(&mut self, body: EventBody) {
        let seq = self.events.len() as u64 + 1;
        self.events.push(SubstrateEvent { seq, body });
    }

    /// The one application path shared by the mutating API and replay.
    fn try_apply(&mut self, body: &EventBody) -> Result<Applied, StoreError> {
        match body {
            EventBody::DeclareRole(role) => {
                if role.name.is_empty()
                    || !role
                        .name
                        .chars()
                        .all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
                {
                    return Err(StoreError::InvalidRoleName(role.name.clone()));
                }
                match self.roles.get(&role.name) {
                    Some(&existing) if existing == role.mode => {
                        Ok(Applied::RoleDeclared { deduplicated: true })
                    }
                    Some(&existing) => Err(StoreError::AuthorityModeConflict {
                        role: role.name.clone(),
                        existing,
                        requested: role.mode,
                    }),
                    None => {
                        self.roles.insert(role.name.clone(), role.mode);
                        Ok(Applied::RoleDeclared {
                            deduplicated: false,
                        })
                    }
                }
            }
            EventBody::CommitAdditive(draft) => {
                let mode = self.check_commit(draft)?;
                if !draft.lineage.supersedes.is_empty() {
                    return Err(StoreError::AdditiveHasSupersedes);
                }
                if mode == AuthorityMode::SingleActive {
                    let key = (draft.role.clone(), draft.scope.clone());
                    if let Some(active) = self.active.get(&key) {
                        if !active.is_empty() {
                            return Err(StoreError::AuthorityViolation {
                                role: draft.role.clone(),
                                scope: draft.scope.clone(),
                                active: active.clone(),
                            });
                        }
                    }
                }
                Ok(Applied::Committed(self.insert_active(draft.clone())))
            }
            EventBody::CommitConflicting(draft) => {
                self.check_commit(draft)?;
                if !draft.lineage.supersedes.is_empty() {
                    return Err(StoreError::AdditiveHasSupersedes);
                }
                self.conflicts
                    .insert((draft.role.clone(), draft.scope.clone()));
                Ok(Applied::Committed(self.insert_active(draft.clone())))
            }
            EventBody::CommitSuperseding(draft) => {
                if draft.lineage.supersedes.is_empty() {
                    return Err(StoreError::SupersedingNeedsTargets);
                }
                // Target existence and liveness are checked before full
                // validation so missing targets surface as UnknownArtifact.
                for target in &draft.lineage.supersedes {
                    match self.records.get(target) {
                        None => return Err(StoreError::UnknownArtifact(target.clone())),
                        Some(prior) if prior.status != Status::Active => {
                            return Err(StoreError::SupersedeInactive {
                                id: target.clone(),
                                status: prior.status,
                            })
                        }
                        Some(_) => {}
                    }
                }
                self.check_commit(draft)?;
                let displaced = draft.lineage.supersedes.clone();
                for target in &displaced {
                    let record = self
                        .records
                        .get_mut(target)
                        .expect("supersession target checked above");
                    record.status = Status::Superseded;
                    let key = (record.role.clone(), record.scope.clone());
                    if let Some(active) = self.active.get_mut(&key) {
                        active.remove(target);
                        if active.is_empty() {
                            self.active.remove(&key);
                        }
                    }
                }
                let committed = self.insert_active(draft.clone());
                for target in &displaced {
                    self.superseded_by.insert(target.clone(), committed.clone());
                }
                Ok(Applied::Superseded(SupersedingCommit {
                    committed,
                    displaced,
                }))
            }
            EventBody::MarkHistorical(id) => {
                let record = self
                    .records
                    .get_mut(id)
                    .ok_or_else(|| StoreError::UnknownArtifact(id.clone()))?;
                if record.status != Status::Active {
                    return Err(StoreError::AlreadyInactive {
                        id: id.clone(),
                        status: record.status,
                    });
                }
                record.status = Status::Historical;
                let key = (record.role.clone(), record.scope.clone());
                if let Some(active) = self.active.get_mut(&key) {
                    active.remove(id);
                    if active.is_empty() {
                        self.active.remove(&key);
                    }
                }
                Ok(Applied::MarkedHistorical)
            }
        }
    }

    fn check_commit(&self, draft: &ArtifactDraft) -> Result<AuthorityMode, StoreError> {
        let mode = self
            .roles
            .get(&draft.role)
            .copied()
            .ok_or_else(|| StoreError::UndeclaredRole(draft.role.clone()))?;
        validate_record(draft, self).map_err(StoreError::Validation)?;
        Ok(mode)
    }

    fn insert_active(&mut self, draft: ArtifactDraft) -> ArtifactId {
        let record = draft.into_record(Status::Active);
        let id = record.id.clone();
        self.family_max
            .entry(id.family().to_string())
            .and_modify(|v| *v = (*v).max(id.version()))
            .or_insert(id.version());
        self.active
            .entry((record.role.clone(), record.scope.clone()))
            .or_default()
            .insert(id.clone());
        self.scope_roles
            .entry(record.scope.clone())
            .or_default()
            .insert(record.role.clone());
        for edge in &record.depends_on {
            self.dependents
                .entry(edge.target.clone())
                .or_default()
                .insert(id.clone());
        }
        self.records.insert(id.clone(), record);
        id
    }

    pub fn events(&self) -> &[SubstrateEvent] {
        &self.events
    }

    /// Events appended after an externally observed length; used by the
    /// CLI to append exactly what an operation produced.
    pub fn events_since(&self, len: usize) -> &[SubstrateEvent] {
        &self.events[len..]
    }

    /// All records, in no particular order.
    pub fn records(&self) -> impl Iterator<Item = &ArtifactRecord> {
        self.records.values()
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn roles(&self) -> &BTreeMap<String, AuthorityMode> {
        &self.roles
    }

    pub fn role_mode(&self, role: &str) -> Option<AuthorityMode> {
        self.roles.get(role).copied()
    }

    pub fn active_ids(&self, role: &str, scope: &Scope) -> BTreeSet<ArtifactId> {
        self.active
            .get(&(role.to_string(), scope.clone()))
            .cloned()
            .unwrap_or_default()
    }

    /// Roles that have ever committed a record into the scope.
    pub fn roles_in_scope(&self, scope: &Scope) -> BTreeSet<String> {
        self.scope_roles.get(scope).cloned().unwrap_or_default()
    }

    pub fn scopes(&self) -> impl Iterator<Item = &Scope> {
        self.scope_roles.keys()
    }

    pub fn dependents_of(&self, id: &ArtifactId) -> Option<&BTreeSet<ArtifactId>> {
        self.dependents.get(id)
    }

    pub fn superseded_by(&self, id: &ArtifactId) -> Option<&ArtifactId> {
        self.superseded_by.get(id)
    }

    pub fn declared_conflicts(&self) -> &BTreeSet<(String, Scope)> {
        &self.conflicts
    }

    pub fn statuses(&self) -> BTreeMap<ArtifactId, Status> {
        self.records
            .iter()
            .map(|(id, record)| (id.clone(), record.status))
            .collect()
    }

    /// Canonical JSON dump of the derived state. Two equal states dump to
    /// identical bytes; replay determinism is checked against this.
    pub fn canonical_dump(&self) -> String {
        let mut doc = Map::new();
        doc.insert(
            "active_index".into(),
            Value::Array(
                self.active
                    .iter()
                    .map(|((role, scope), ids)| {
                        let mut entry = Map::new();
                        entry.insert(
                            "artifact_ids".into(),
                            Value::Array(
                                ids.iter().map(|id| Value::String(id.render())).collect(),
                            ),
                        );
                        entry.insert("role".into(), Value::String(role.clone()));
                        entry.insert(
                            "scope".into(),
                            Value::String(scope.as_str().to_string()),
                        );
                        Value::Object(entry)
                    })
                    .collect(),
            ),
        );
        doc.insert(
            "conflicts".into(),
            Value::Array(
                self.conflicts
                    .iter()
                    .map(|(role, scope)| {
                        let mut entry = Map::new();
                        entry.insert("role".into(), Value::String(role.clone()));
                        entry.insert(
                            "scope".into(),
                            Value::String(scope.as_str().to_string()),
                        );
                        Value::Object(entry)
                    })
                    .collect(),
            ),
        );
        let mut records: Vec<&ArtifactRecord> = self.records.values().collect();
        records.sort_by(|a, b| a.id.cmp(&b.id));
        doc.insert(
            "records".into(),
            Value::Array(
                records
                    .into_iter()
                    .map(crate::artifact::record_to_value)
                    .collect(),
            ),
        );
        doc.insert(
            "roles".into(),
            Value::Array(
                self.roles
                    .iter()
                    .map(|(name, mode)| {
                        let mut entry = Map::new();
                        entry.insert(
                            "authority_mode".into(),
                            Value::String(mode.as_str().into()),
                        );
                        entry.insert("name".into(), Value::String(name.clone()));
                        Value::Object(entry)
                    })
                    .collect(),
            ),
        );
        canon::canonical_json(&Value::Object(doc))
    }
}

impl StoreView for Store {
    fn record(&self, id: &ArtifactId) -> Option<&ArtifactRecord> {
        self.records.get(id)
    }

    fn max_family_version(&self, family: &str) -> Option<u32> {
        self.family_max.get(family).copied()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EventParseError {
    #[error("missing field {0}")]
    MissingField(&'static str),
    #[error("field {field}: {message}")]
    BadField { field: &'static str, message: String },
}

impl EventParseError {
    fn bad(field: &'static str, message: impl Into<String>) -> Self {
        Self::BadField {
            field,
            message: message.into(),
        }
    }
}

pub fn event_to_value(event: &SubstrateEvent) -> Value {
    let body = match &event.body {
        EventBody::DeclareRole(role) => {
            let mut map = Map::new();
            map.insert(
                "authority_mode".into(),
                Value::String(role.mode.as_str().into()),
            );
            map.insert("name".into(), Value::String(role.name.clone()));
            Value::Object(map)
        }
        EventBody::CommitAdditive(draft)
        | EventBody::CommitSuperseding(draft)
        | EventBody::CommitConflicting(draft) => draft_to_value(draft),
        EventBody::MarkHistorical(id) => {
            let mut map = Map::new();
            map.insert("artifact_id".into(), Value::String(id.render()));
            Value::Object(map)
        }
    };
    let mut map = Map::new();
    map.insert("body".into(), body);
    map.insert("kind".into(), Value::String(event.body.kind().into()));
    map.insert("seq".into(), Value::Number(event.seq.into()));
    Value::Object(map)
}

pub fn event_from_value(value: &Value) -> Result<SubstrateEvent, EventParseError> {
    let map = value
        .as_object()
        .ok_or_else(|| EventParseError::bad("event", "expected an object"))?;
    let seq = map
        .get("seq")
        .ok_or(EventParseError::MissingField("seq"))?
        .as_u64()
        .ok_or_else(|| EventParseError::bad("seq", "expected an unsigned integer"))?;
    let kind = match map.get("kind") {
        Some(Value::String(s)) => s.as_str(),
        Some(_) => return Err(EventParseError::bad("kind", "expected a string")),
        None => return Err(EventParseError::MissingField("kind")),
    };
    let body_value = map
        .get("body")
        .ok_or(EventParseError::MissingField("body"))?;
    let body_map = body_value
        .as_object()
        .ok_or_else(|| EventParseError::bad("body", "expected an object"))?;

    let body = match kind {
        "declare_role" => {
            let name = match body_map.get("name") {
                Some(Value::String(s)) => s.clone(),
                _ => return Err(EventParseError::bad("body", "declare_role needs name")),
            };
            let mode = match body_map.get("authority_mode") {
                Some(Value::String(s)) => AuthorityMode::parse(s).ok_or_else(|| {
                    EventParseError::bad("body", format!("unknown authority mode {s:?}"))
                })?,
                _ => {
                    return Err(EventParseError::bad(
                        "body",
                        "declare_role needs authority_mode",
                    ))
                }
            };
            EventBody::DeclareRole(Role { name, mode })
        }
        "commit_additive" | "commit_superseding" | "commit_conflicting" => {
            let draft = draft_from_document(body_map, None, "")
                .map_err(|e| EventParseError::bad("body", e.to_string()))?;
            match kind {
                "commit_additive" => EventBody::CommitAdditive(draft),
                "commit_superseding" => EventBody::CommitSuperseding(draft),
                _ => EventBody::CommitConflicting(draft),
            }
        }
        "mark_historical" => {
            let id = match body_map.get("artifact_id") {
                Some(Value::String(s)) => ArtifactId::parse(s)
                    .map_err(|e| EventParseError::bad("body", e.to_string()))?,
                _ => {
                    return Err(EventParseError::bad(
                        "body",
                        "mark_historical needs artifact_id",
                    ))
                }
            };
            EventBody::MarkHistorical(id)
        }
        other => return Err(EventParseError::bad("kind", format!("unknown kind {other:?}"))),
    };

    Ok(SubstrateEvent { seq, body })
}
