//! Lineage relations and regeneration planning.
//!
//! Derives the four relations (produced-by, consumed-by, supersedes,
//! superseded-by), computes transitive dependents over reversed dependency
//! edges, and turns a superseding commit into a regeneration plan:
//! which active artifacts went stale, in what family order to rebuild,
//! and what is preserved untouched.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::artifact::{ArtifactId, DepEdge, Lineage, Payload, Status};
use crate::store::{Store, StoreError};

/// All four lineage relations for one artifact. `consumed_by` and
/// `superseded_by` are derived from the record graph, not stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineageView {
    pub produced_by: String,
    pub consumed_by: BTreeSet<ArtifactId>,
    pub supersedes: Vec<ArtifactId>,
    pub superseded_by: Option<ArtifactId>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LineageError {
    #[error("unknown artifact {0}")]
    UnknownArtifact(ArtifactId),
    #[error("{0} is not a superseding commit (supersedes nothing)")]
    NotSuperseding(ArtifactId),
}

pub fn lineage(store: &Store, id: &ArtifactId) -> Result<LineageView, LineageError> {
    let record = store
        .get_artifact(id)
        .ok_or_else(|| LineageError::UnknownArtifact(id.clone()))?;
    Ok(LineageView {
        produced_by: record.lineage.produced_by.clone(),
        consumed_by: store.dependents_of(id).cloned().unwrap_or_default(),
        supersedes: record.lineage.supersedes.clone(),
        superseded_by: store.superseded_by(id).cloned(),
    })
}

/// Least set closed under "y depends on x implies y is in the set",
/// excluding `id` itself. Covers records of every status.
pub fn transitive_dependents(
    store: &Store,
    id: &ArtifactId,
) -> Result<BTreeSet<ArtifactId>, LineageError> {
    if store.get_artifact(id).is_none() {
        return Err(LineageError::UnknownArtifact(id.clone()));
    }
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([id.clone()]);
    while let Some(current) = queue.pop_front() {
        if let Some(dependents) = store.dependents_of(&current) {
            for dependent in dependents {
                if seen.insert(dependent.clone()) {
                    queue.push_back(dependent.clone());
                }
            }
        }
    }
    seen.remove(id);
    Ok(seen)
}

/// What to rebuild after a supersession, and what survives it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegenerationPlan {
    /// The superseding artifact that caused the invalidation.
    pub trigger: ArtifactId,
    /// Active artifacts in the trigger's scope made stale by the
    /// displacement.
    pub invalidated: BTreeSet<ArtifactId>,
    /// Invalidated families in dependency order; ties break by name.
    pub rebuild_order: Vec<String>,
    /// Active artifacts in scope untouched by the change (trigger excluded).
    pub preserved: BTreeSet<ArtifactId>,
    /// Cross-scope dependents and other non-fatal flags.
    pub warnings: Vec<String>,
}

impl RegenerationPlan {
    pub fn invalidated_families(&self) -> BTreeSet<String> {
        self.invalidated
            .iter()
            .map(|id| id.family().to_string())
            .collect()
    }

    /// Canonical export document for external harnesses.
    pub fn to_value(&self) -> Value {
        let ids = |set: &BTreeSet<ArtifactId>| {
            Value::Array(set.iter().map(|id| Value::String(id.render())).collect())
        };
        let mut map = Map::new();
        map.insert("invalidated".into(), ids(&self.invalidated));
        map.insert("preserved".into(), ids(&self.preserved));
        map.insert(
            "rebuild_order".into(),
            Value::Array(
                self.rebuild_order
                    .iter()
                    .map(|f| Value::String(f.clone()))
                    .collect(),
            ),
        );
        map.insert("trigger".into(), Value::String(self.trigger.render()));
        map.insert(
            "warnings".into(),
            Value::Array(
                self.warnings
                    .iter()
                    .map(|w| Value::String(w.clone()))
                    .collect(),
            ),
        );
        Value::Object(map)
    }

    pub fn from_value(value: &Value) -> Option<Self> {
        let map = value.as_object()?;
        let ids = |field: &str| -> Option<BTreeSet<ArtifactId>> {
            map.get(field)?
                .as_array()?
                .iter()
                .map(|v| ArtifactId::parse(v.as_str()?).ok())
                .collect()
        };
        let strings = |field: &str| -> Option<Vec<String>> {
            map.get(field)?
                .as_array()?
                .iter()
                .map(|v| v.as_str().map(str::to_string))
                .collect()
        };
        Some(Self {
            trigger: ArtifactId::parse(map.get("trigger")?.as_str()?).ok()?,
            invalidated: ids("invalidated")?,
            rebuild_order: strings("rebuild_order")?,
            preserved: ids("preserved")?,
            warnings: strings("warnings")?,
        })
    }
}

/// Computes the regeneration plan for a completed superseding commit.
///
/// Invalidation runs over artifact-level edges (both edge types alike),
/// then lifts to families for the rebuild order. Plans are restricted to
/// the trigger's scope; active dependents in other scopes are flagged as
/// warnings instead of being invalidated.
pub fn plan_regeneration(
    store: &Store,
    trigger: &ArtifactId,
) -> Result<RegenerationPlan, LineageError> {
    let trigger_record = store
        .get_artifact(trigger)
        .ok_or_else(|| LineageError::UnknownArtifact(trigger.clone()))?;
    if trigger_record.lineage.supersedes.is_empty() {
        return Err(LineageError::NotSuperseding(trigger.clone()));
    }
    let scope = trigger_record.scope.clone();

    let mut dependents = BTreeSet::new();
    for displaced in &trigger_record.lineage.supersedes {
        dependents.extend(transitive_dependents(store, displaced)?);
    }

    let mut invalidated = BTreeSet::new();
    let mut warnings = Vec::new();
    for id in dependents {
        let record = store.get_artifact(&id).expect("dependents exist");
        if record.status != Status::Active {
            continue;
        }
        if record.scope == scope {
            invalidated.insert(id);
        } else {
            warnings.push(format!("cross-scope:{}", id.render()));
        }
    }

    let preserved = store
        .records()
        .filter(|r| r.status == Status::Active && r.scope == scope)
        .map(|r| r.id.clone())
        .filter(|id| id != trigger && !invalidated.contains(id))
        .collect();

    let rebuild_order = family_order(store, &invalidated, &mut warnings);

    Ok(RegenerationPlan {
        trigger: trigger.clone(),
        invalidated,
        rebuild_order,
        preserved,
        warnings,
    })
}

/// Topological order of the invalidated families: lift direct artifact
/// edges inside the invalidated set to family edges, then run Kahn's
/// algorithm with a name-ordered ready set.
fn family_order(
    store: &Store,
    invalidated: &BTreeSet<ArtifactId>,
    warnings: &mut Vec<String>,
) -> Vec<String> {
    let families: BTreeSet<String> = invalidated
        .iter()
        .map(|id| id.family().to_string())
        .collect();
    let mut consumers: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut indegree: BTreeMap<&str, usize> = families.iter().map(|f| (f.as_str(), 0)).collect();

    for id in invalidated {
        let record = store.get_artifact(id).expect("invalidated ids exist");
        for edge in &record.depends_on {
            if !invalidated.contains(&edge.target) {
                continue;
            }
            let upstream = edge.target.family();
            let downstream = id.family();
            if upstream == downstream {
                continue;
            }
            let upstream = families.get(upstream).expect("family of member").as_str();
            let downstream = families
                .get(downstream)
                .expect("family of member")
                .as_str();
            if consumers.entry(upstream).or_default().insert(downstream) {
                *indegree.entry(downstream).or_default() += 1;
            }
        }
    }

    let mut ready: BTreeSet<&str> = indegree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(f, _)| *f)
        .collect();
    let mut order = Vec::with_capacity(families.len());
    while let Some(&family) = ready.iter().next() {
        ready.remove(family);
        order.push(family.to_string());
        if let Some(downstreams) = consumers.get(family) {
            for downstream in downstreams.clone() {
                let d = indegree.get_mut(downstream).expect("known family");
                *d -= 1;
                if *d == 0 {
                    ready.insert(downstream);
                }
            }
        }
    }

    if order.len() < families.len() {
        // Family-level cycle (possible only with multiple simultaneously
        // active versions cross-consuming); emit the rest in name order.
        let placed: BTreeSet<&str> = order.iter().map(String::as_str).collect();
        let mut rest: Vec<String> = families
            .iter()
            .filter(|f| !placed.contains(f.as_str()))
            .cloned()
            .collect();
        warnings.push(format!("family-cycle:{}", rest.join(",")));
        order.append(&mut rest);
    }

    order
}

/// Caller-supplied regeneration content for one family.
#[derive(Debug, Clone)]
pub struct RegenDraft {
    pub payload: Payload,
    pub depends_on: Vec<DepEdge>,
    pub produced_by: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum ApplyError {
    #[error("drafts do not cover the plan (missing: [{}], extra: [{}])", missing.join(", "), extra.join(", "))]
    PlanMismatch {
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("draft for {family} consumes {dependency} whose status is {status}")]
    StaleDependency {
        family: String,
        dependency: ArtifactId,
        status: Status,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Commits superseding versions for every family in the plan, in rebuild
/// order. Drafts must consume currently active upstream ids.
pub fn apply_regeneration(
    store: &mut Store,
    plan: &RegenerationPlan,
    mut drafts: BTreeMap<String, RegenDraft>,
) -> Result<Vec<ArtifactId>, ApplyError> {
    let plan_families: BTreeSet<&str> = plan.rebuild_order.iter().map(String::as_str).collect();
    let missing: Vec<String> = plan_families
        .iter()
        .filter(|f| !drafts.contains_key(**f))
        .map(|f| f.to_string())
        .collect();
    let extra: Vec<String> = drafts
        .keys()
        .filter(|f| !plan_families.contains(f.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(ApplyError::PlanMismatch { missing, extra });
    }

    let mut committed = Vec::with_capacity(plan.rebuild_order.len());
    for family in &plan.rebuild_order {
        let spec = drafts.remove(family).expect("coverage checked");
        for edge in &spec.depends_on {
            if let Some(record) = store.get_artifact(&edge.target) {
                if record.status != Status::Active {
                    return Err(ApplyError::StaleDependency {
                        family: family.clone(),
                        dependency: edge.target.clone(),
                        status: record.status,
                    });
                }
            }
        }

        let displaced: Vec<ArtifactId> = plan
            .invalidated
            .iter()
            .filter(|id| id.family() == family)
            .cloned()
            .collect();
        // A rebuild family with nothing invalidated means the plan was not
        // produced by plan_regeneration.
        let Some(first) = displaced.first() else {
            return Err(ApplyError::PlanMismatch {
                missing: Vec::new(),
                extra: vec![family.clone()],
            });
        };
        let prior = store
            .get_artifact(first)
            .ok_or_else(|| ApplyError::PlanMismatch {
                missing: Vec::new(),
                extra: vec![family.clone()],
            })?;
        let (role, scope) = (prior.role.clone(), prior.scope.clone());

        use crate::artifact::StoreView;
        let version = store.max_family_version(family).unwrap_or(0) + 1;
        let id = ArtifactId::new(family, version).expect("family names come from valid ids");
        let draft = crate::artifact::ArtifactDraft {
            id,
            role,
            scope,
            depends_on: spec.depends_on,
            lineage: Lineage {
                produced_by: spec.produced_by,
                supersedes: displaced,
            },
            payload: spec.payload,
        };
        let outcome = store.commit_superseding(draft)?;
        committed.push(outcome.committed);
    }
    Ok(committed)
}
