//! Active-state resolution: what is currently authoritative for a
//! (role, scope), with conflicts surfaced rather than collapsed.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::artifact::{ArtifactId, ArtifactRecord, AuthorityMode, Scope};
use crate::store::Store;

/// The answer for one (role, scope).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    /// Exactly one active artifact of a single-active role.
    Single(ArtifactId),
    /// The declared active set of a multi-active role (never empty).
    Set(BTreeSet<ArtifactId>),
    NoActive,
    /// A single-active role with two or more active artifacts. Carries all
    /// contenders in canonical id order; no heuristic winner.
    Conflict(BTreeSet<ArtifactId>),
}

impl Resolution {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Single(_) => "single",
            Self::Set(_) => "set",
            Self::NoActive => "no_active",
            Self::Conflict(_) => "conflict",
        }
    }

    pub fn active_ids(&self) -> BTreeSet<ArtifactId> {
        match self {
            Self::Single(id) => BTreeSet::from([id.clone()]),
            Self::Set(ids) | Self::Conflict(ids) => ids.clone(),
            Self::NoActive => BTreeSet::new(),
        }
    }

    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("kind".into(), Value::String(self.kind().into()));
        match self {
            Self::Single(id) => {
                map.insert("id".into(), Value::String(id.render()));
            }
            Self::Set(ids) | Self::Conflict(ids) => {
                map.insert(
                    "ids".into(),
                    Value::Array(ids.iter().map(|id| Value::String(id.render())).collect()),
                );
            }
            Self::NoActive => {}
        }
        Value::Object(map)
    }

    pub fn from_value(value: &Value) -> Option<Self> {
        let map = value.as_object()?;
        let kind = map.get("kind")?.as_str()?;
        let ids = || -> Option<BTreeSet<ArtifactId>> {
            map.get("ids")?
                .as_array()?
                .iter()
                .map(|v| ArtifactId::parse(v.as_str()?).ok())
                .collect()
        };
        match kind {
            "single" => Some(Self::Single(
                ArtifactId::parse(map.get("id")?.as_str()?).ok()?,
            )),
            "set" => Some(Self::Set(ids()?)),
            "no_active" => Some(Self::NoActive),
            "conflict" => Some(Self::Conflict(ids()?)),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResolveError {
    #[error("role {0} has not been declared")]
    UnknownRole(String),
    #[error("unknown artifact {0}")]
    UnknownArtifact(ArtifactId),
}

/// Resolves the authoritative artifact(s) for a declared role in a scope.
pub fn resolve_active(
    store: &Store,
    role: &str,
    scope: &Scope,
) -> Result<Resolution, ResolveError> {
    let mode = store
        .role_mode(role)
        .ok_or_else(|| ResolveError::UnknownRole(role.to_string()))?;
    let ids = store.active_ids(role, scope);
    Ok(match (mode, ids.len()) {
        (_, 0) => Resolution::NoActive,
        (AuthorityMode::SingleActive, 1) => {
            Resolution::Single(ids.into_iter().next().expect("len checked"))
        }
        (AuthorityMode::SingleActive, _) => Resolution::Conflict(ids),
        (AuthorityMode::MultiActive, _) => Resolution::Set(ids),
    })
}

/// Looks up a record regardless of status: the explicit historical pin.
/// Pinned reads never change as later commits land.
pub fn resolve_pinned<'a>(
    store: &'a Store,
    id: &ArtifactId,
) -> Result<&'a ArtifactRecord, ResolveError> {
    store
        .get_artifact(id)
        .ok_or_else(|| ResolveError::UnknownArtifact(id.clone()))
}

/// One resolution per declared role with at least one record in the scope.
pub fn active_snapshot(store: &Store, scope: &Scope) -> BTreeMap<String, Resolution> {
    store
        .roles_in_scope(scope)
        .into_iter()
        .map(|role| {
            let resolution =
                resolve_active(store, &role, scope).expect("roles_in_scope are declared");
            (role, resolution)
        })
        .collect()
}
