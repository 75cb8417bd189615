//! Perturbation benchmark: instances with gold annotations, system
//! snapshots, and the three metric families (authority resolution accuracy,
//! stale-detection precision/recall/F1, revision-localization
//! precision/recall).

mod generate;

pub use generate::{generate_instance, GenParams, GenerateError};

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Number, Value};
use thiserror::Error;

use crate::artifact::{ArtifactId, AuthorityMode, DepEdge, Payload, Scope, Status};
use crate::lineage::{apply_regeneration, plan_regeneration, RegenDraft, RegenerationPlan};
use crate::resolver::{active_snapshot, Resolution};
use crate::store::{EventBody, Store, SubstrateEvent};

/// The four controlled-edit families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationFamily {
    AuthoritySwap,
    LocalCorrection,
    BranchIsolated,
    TransitiveImpact,
}

impl PerturbationFamily {
    pub const ALL: [Self; 4] = [
        Self::AuthoritySwap,
        Self::LocalCorrection,
        Self::BranchIsolated,
        Self::TransitiveImpact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AuthoritySwap => "authority_swap",
            Self::LocalCorrection => "local_correction",
            Self::BranchIsolated => "branch_isolated",
            Self::TransitiveImpact => "transitive_impact",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "authority_swap" => Some(Self::AuthoritySwap),
            "local_correction" => Some(Self::LocalCorrection),
            "branch_isolated" => Some(Self::BranchIsolated),
            "transitive_impact" => Some(Self::TransitiveImpact),
            _ => None,
        }
    }
}

impl std::fmt::Display for PerturbationFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Gold or claimed active state: (role, scope) to the active id set.
pub type ActiveMap = BTreeMap<(String, Scope), BTreeSet<ArtifactId>>;

/// One scored task: a known artifact graph, a controlled edit, and the gold
/// current-state annotations after the edit is fully processed.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkInstance {
    pub setup_events: Vec<SubstrateEvent>,
    pub perturbation_events: Vec<SubstrateEvent>,
    pub gold_active: ActiveMap,
    pub gold_stale: BTreeSet<ArtifactId>,
    /// Family names the edit should have caused to be revised.
    pub gold_affected: BTreeSet<String>,
    pub family_kind: PerturbationFamily,
    pub seed: u64,
}

/// What an external system claims after processing the instance. No
/// consistency is assumed; wrong claims are what the metrics measure.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SystemSnapshot {
    pub claimed_active: ActiveMap,
    pub flagged_stale: BTreeSet<ArtifactId>,
    /// Family names the system revised.
    pub revised_set: BTreeSet<String>,
}

/// Per-(role, scope) comparison row. Multi-authority rows are
/// informational: they never enter authority_acc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleDetail {
    pub role: String,
    pub scope: Scope,
    pub mode: AuthorityMode,
    pub gold: BTreeSet<ArtifactId>,
    pub claimed: Option<BTreeSet<ArtifactId>>,
    pub matched: bool,
    /// True when the row counts toward authority_acc.
    pub counted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scorecard {
    pub authority_acc: f64,
    pub authority_matches: usize,
    pub authority_total: usize,
    pub stale_precision: f64,
    pub stale_recall: f64,
    pub stale_f1: f64,
    pub loc_precision: f64,
    pub loc_recall: f64,
    pub detail: Vec<RoleDetail>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScoreError {
    #[error("instance does not replay: {0}")]
    BadInstance(String),
}

fn replay_instance(instance: &BenchmarkInstance) -> Result<Store, ScoreError> {
    let events: Vec<SubstrateEvent> = instance
        .setup_events
        .iter()
        .chain(&instance.perturbation_events)
        .cloned()
        .collect();
    Store::replay(events).map_err(|e| ScoreError::BadInstance(e.to_string()))
}

fn trigger_of(instance: &BenchmarkInstance) -> Result<ArtifactId, ScoreError> {
    instance
        .perturbation_events
        .iter()
        .rev()
        .find_map(|event| match &event.body {
            EventBody::CommitSuperseding(draft) => Some(draft.id.clone()),
            _ => None,
        })
        .ok_or_else(|| {
            ScoreError::BadInstance("perturbation contains no superseding commit".into())
        })
}

/// Ratio with an explicit empty-denominator convention: a vacuous score is
/// perfect, so a no-op perturbation answered with a no-op scores 1.0.
fn ratio(numer: usize, denom: usize) -> f64 {
    if denom == 0 {
        1.0
    } else {
        numer as f64 / denom as f64
    }
}

fn role_details(
    snapshot: &SystemSnapshot,
    instance: &BenchmarkInstance,
) -> Result<Vec<RoleDetail>, ScoreError> {
    let store = replay_instance(instance)?;
    instance
        .gold_active
        .iter()
        .map(|((role, scope), gold)| {
            let mode = store.role_mode(role).ok_or_else(|| {
                ScoreError::BadInstance(format!("gold_active role {role} is not declared"))
            })?;
            let claimed = snapshot
                .claimed_active
                .get(&(role.clone(), scope.clone()))
                .cloned();
            // A missing claim or a conflicting multi-id claim against a
            // single-authority gold is a miss by set inequality.
            let matched = claimed.as_ref() == Some(gold);
            Ok(RoleDetail {
                role: role.clone(),
                scope: scope.clone(),
                mode,
                gold: gold.clone(),
                claimed,
                matched,
                counted: mode == AuthorityMode::SingleActive,
            })
        })
        .collect()
}

/// Fraction of single-authority (role, scope) pairs whose claimed active
/// artifact matches gold.
pub fn authority_accuracy(
    snapshot: &SystemSnapshot,
    instance: &BenchmarkInstance,
) -> Result<f64, ScoreError> {
    let detail = role_details(snapshot, instance)?;
    let total = detail.iter().filter(|d| d.counted).count();
    let matches = detail.iter().filter(|d| d.counted && d.matched).count();
    Ok(ratio(matches, total))
}

/// Precision, recall, and F1 of `flagged_stale` against `gold_stale`.
/// Empty flagged set: precision 1.0 (no false positives); empty gold set:
/// recall 1.0; both empty scores perfect.
pub fn stale_detection_scores(
    snapshot: &SystemSnapshot,
    instance: &BenchmarkInstance,
) -> (f64, f64, f64) {
    let hits = snapshot
        .flagged_stale
        .intersection(&instance.gold_stale)
        .count();
    let precision = ratio(hits, snapshot.flagged_stale.len());
    let recall = ratio(hits, instance.gold_stale.len());
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Precision = |R n G| / |R| and recall = |R n G| / |G| over family names,
/// with empty-set denominators scoring 1.0.
pub fn localization_scores(
    snapshot: &SystemSnapshot,
    instance: &BenchmarkInstance,
) -> (f64, f64) {
    let hits = snapshot
        .revised_set
        .intersection(&instance.gold_affected)
        .count();
    (
        ratio(hits, snapshot.revised_set.len()),
        ratio(hits, instance.gold_affected.len()),
    )
}

/// Aggregates the three metric families plus per-role detail.
pub fn score(
    snapshot: &SystemSnapshot,
    instance: &BenchmarkInstance,
) -> Result<Scorecard, ScoreError> {
    let detail = role_details(snapshot, instance)?;
    let authority_total = detail.iter().filter(|d| d.counted).count();
    let authority_matches = detail.iter().filter(|d| d.counted && d.matched).count();
    let (stale_precision, stale_recall, stale_f1) = stale_detection_scores(snapshot, instance);
    let (loc_precision, loc_recall) = localization_scores(snapshot, instance);
    Ok(Scorecard {
        authority_acc: ratio(authority_matches, authority_total),
        authority_matches,
        authority_total,
        stale_precision,
        stale_recall,
        stale_f1,
        loc_precision,
        loc_recall,
        detail,
    })
}

/// Finds the currently active ids of a family within a scope.
fn active_of_family(store: &Store, family: &str, scope: &Scope) -> Vec<ArtifactId> {
    use crate::artifact::StoreView;
    let max = store.max_family_version(family).unwrap_or(0);
    (1..=max)
        .filter_map(|v| {
            let id = ArtifactId::new(family, v).ok()?;
            let record = store.get_artifact(&id)?;
            (record.status == Status::Active && &record.scope == scope).then_some(id)
        })
        .collect()
}

/// Rebuilds every planned family with deterministic regeneration drafts:
/// dependencies are the displaced records' dependencies remapped to the
/// currently active version of each upstream family. Remapping runs
/// against live state immediately before each family's commit, so
/// dependencies on families rebuilt earlier in the order pick up the
/// freshly committed versions.
pub fn regenerate(store: &mut Store, plan: &RegenerationPlan) -> Result<Vec<ArtifactId>, ScoreError> {
    let scope = store
        .get_artifact(&plan.trigger)
        .ok_or_else(|| ScoreError::BadInstance("plan trigger is not in the store".into()))?
        .scope
        .clone();

    let mut committed = Vec::with_capacity(plan.rebuild_order.len());
    for family in &plan.rebuild_order {
        let displaced: Vec<ArtifactId> = plan
            .invalidated
            .iter()
            .filter(|id| id.family() == family)
            .cloned()
            .collect();
        let mut remapped: BTreeMap<ArtifactId, DepEdge> = BTreeMap::new();
        for id in &displaced {
            let record = store
                .get_artifact(id)
                .ok_or_else(|| ScoreError::BadInstance(format!("invalidated {id} missing")))?;
            for edge in record.depends_on.clone() {
                let target_record = store.get_artifact(&edge.target).ok_or_else(|| {
                    ScoreError::BadInstance(format!("dependency {} missing", edge.target))
                })?;
                let targets = if target_record.status == Status::Active {
                    vec![edge.target.clone()]
                } else {
                    active_of_family(store, edge.target.family(), &scope)
                };
                for target in targets {
                    remapped.entry(target.clone()).or_insert(DepEdge {
                        target,
                        edge_type: edge.edge_type,
                    });
                }
            }
        }
        let spec = RegenDraft {
            payload: Payload::new(
                "document",
                serde_json::json!({ "regenerated": family, "after": plan.trigger.render() }),
            ),
            depends_on: remapped.into_values().collect(),
            produced_by: format!("regen_{family}"),
        };

        let single = RegenerationPlan {
            trigger: plan.trigger.clone(),
            invalidated: plan
                .invalidated
                .iter()
                .filter(|id| id.family() == family)
                .cloned()
                .collect(),
            rebuild_order: vec![family.clone()],
            preserved: BTreeSet::new(),
            warnings: Vec::new(),
        };
        let ids = apply_regeneration(store, &single, BTreeMap::from([(family.clone(), spec)]))
            .map_err(|e| ScoreError::BadInstance(e.to_string()))?;
        committed.extend(ids);
    }
    Ok(committed)
}

/// Runs the reference engine end to end on an instance and reports its own
/// snapshot: replay, plan, regenerate, resolve. Scoring this snapshot
/// against the instance's gold yields all ones.
pub fn reference_snapshot(instance: &BenchmarkInstance) -> Result<SystemSnapshot, ScoreError> {
    let mut store = replay_instance(instance)?;
    let trigger = trigger_of(instance)?;
    let plan = plan_regeneration(&store, &trigger)
        .map_err(|e| ScoreError::BadInstance(e.to_string()))?;
    regenerate(&mut store, &plan)?;

    let mut claimed: ActiveMap = BTreeMap::new();
    for scope in store.scopes().cloned().collect::<Vec<_>>() {
        for (role, resolution) in active_snapshot(&store, &scope) {
            if matches!(resolution, Resolution::NoActive) {
                continue;
            }
            claimed.insert((role, scope.clone()), resolution.active_ids());
        }
    }

    let mut revised_set: BTreeSet<String> = plan
        .invalidated
        .iter()
        .map(|id| id.family().to_string())
        .collect();
    revised_set.insert(trigger.family().to_string());

    Ok(SystemSnapshot {
        claimed_active: claimed,
        flagged_stale: plan.invalidated,
        revised_set,
    })
}

fn active_map_to_value(map: &ActiveMap) -> Value {
    Value::Array(
        map.iter()
            .map(|((role, scope), ids)| {
                let mut entry = Map::new();
                entry.insert(
                    "ids".into(),
                    Value::Array(ids.iter().map(|id| Value::String(id.render())).collect()),
                );
                entry.insert("role".into(), Value::String(role.clone()));
                entry.insert("scope".into(), Value::String(scope.as_str().to_string()));
                Value::Object(entry)
            })
            .collect(),
    )
}

fn string_set_to_value<S: AsRef<str>>(set: impl IntoIterator<Item = S>) -> Value {
    Value::Array(
        set.into_iter()
            .map(|s| Value::String(s.as_ref().to_string()))
            .collect(),
    )
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed {context}: {reason}")]
pub struct FormatError {
    pub context: &'static str,
    pub reason: String,
}

fn format_err(context: &'static str, reason: impl Into<String>) -> FormatError {
    FormatError {
        context,
        reason: reason.into(),
    }
}

fn active_map_from_value(context: &'static str, value: &Value) -> Result<ActiveMap, FormatError> {
    let entries = value
        .as_array()
        .ok_or_else(|| format_err(context, "active map must be an array"))?;
    let mut map = ActiveMap::new();
    for entry in entries {
        let obj = entry
            .as_object()
            .ok_or_else(|| format_err(context, "active map entries must be objects"))?;
        let role = obj
            .get("role")
            .and_then(Value::as_str)
            .ok_or_else(|| format_err(context, "entry needs a role string"))?;
        let scope = obj
            .get("scope")
            .and_then(Value::as_str)
            .ok_or_else(|| format_err(context, "entry needs a scope string"))?;
        let scope = Scope::new(scope).map_err(|e| format_err(context, e.to_string()))?;
        let ids = obj
            .get("ids")
            .and_then(Value::as_array)
            .ok_or_else(|| format_err(context, "entry needs an ids array"))?
            .iter()
            .map(|v| {
                v.as_str()
                    .ok_or_else(|| format_err(context, "ids must be strings"))
                    .and_then(|s| {
                        ArtifactId::parse(s).map_err(|e| format_err(context, e.to_string()))
                    })
            })
            .collect::<Result<BTreeSet<_>, _>>()?;
        map.insert((role.to_string(), scope), ids);
    }
    Ok(map)
}

fn id_set_from_value(
    context: &'static str,
    value: &Value,
) -> Result<BTreeSet<ArtifactId>, FormatError> {
    value
        .as_array()
        .ok_or_else(|| format_err(context, "expected an array of artifact ids"))?
        .iter()
        .map(|v| {
            v.as_str()
                .ok_or_else(|| format_err(context, "ids must be strings"))
                .and_then(|s| ArtifactId::parse(s).map_err(|e| format_err(context, e.to_string())))
        })
        .collect()
}

fn string_set_from_value(
    context: &'static str,
    value: &Value,
) -> Result<BTreeSet<String>, FormatError> {
    value
        .as_array()
        .ok_or_else(|| format_err(context, "expected an array of strings"))?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| format_err(context, "expected strings"))
        })
        .collect()
}

fn events_to_value(events: &[SubstrateEvent]) -> Value {
    Value::Array(events.iter().map(crate::store::event_to_value).collect())
}

fn events_from_value(
    context: &'static str,
    value: &Value,
) -> Result<Vec<SubstrateEvent>, FormatError> {
    value
        .as_array()
        .ok_or_else(|| format_err(context, "expected an event array"))?
        .iter()
        .map(|v| crate::store::event_from_value(v).map_err(|e| format_err(context, e.to_string())))
        .collect()
}

/// Canonical instance document.
pub fn instance_to_value(instance: &BenchmarkInstance) -> Value {
    let mut map = Map::new();
    map.insert(
        "family_kind".into(),
        Value::String(instance.family_kind.as_str().into()),
    );
    map.insert("gold_active".into(), active_map_to_value(&instance.gold_active));
    map.insert(
        "gold_affected".into(),
        string_set_to_value(&instance.gold_affected),
    );
    map.insert(
        "gold_stale".into(),
        string_set_to_value(instance.gold_stale.iter().map(ArtifactId::render)),
    );
    map.insert(
        "perturbation_events".into(),
        events_to_value(&instance.perturbation_events),
    );
    map.insert("seed".into(), Value::Number(instance.seed.into()));
    map.insert("setup_events".into(), events_to_value(&instance.setup_events));
    Value::Object(map)
}

pub fn instance_from_value(value: &Value) -> Result<BenchmarkInstance, FormatError> {
    const CTX: &str = "benchmark instance";
    let map = value
        .as_object()
        .ok_or_else(|| format_err(CTX, "expected an object"))?;
    let field = |name: &'static str| {
        map.get(name)
            .ok_or_else(|| format_err(CTX, format!("missing field {name}")))
    };
    let family_kind = field("family_kind")?
        .as_str()
        .and_then(PerturbationFamily::parse)
        .ok_or_else(|| format_err(CTX, "unknown family_kind"))?;
    let seed = field("seed")?
        .as_u64()
        .ok_or_else(|| format_err(CTX, "seed must be an unsigned integer"))?;
    Ok(BenchmarkInstance {
        setup_events: events_from_value(CTX, field("setup_events")?)?,
        perturbation_events: events_from_value(CTX, field("perturbation_events")?)?,
        gold_active: active_map_from_value(CTX, field("gold_active")?)?,
        gold_stale: id_set_from_value(CTX, field("gold_stale")?)?,
        gold_affected: string_set_from_value(CTX, field("gold_affected")?)?,
        family_kind,
        seed,
    })
}

/// Canonical snapshot document.
pub fn snapshot_to_value(snapshot: &SystemSnapshot) -> Value {
    let mut map = Map::new();
    map.insert(
        "claimed_active".into(),
        active_map_to_value(&snapshot.claimed_active),
    );
    map.insert(
        "flagged_stale".into(),
        string_set_to_value(snapshot.flagged_stale.iter().map(ArtifactId::render)),
    );
    map.insert(
        "revised_set".into(),
        string_set_to_value(&snapshot.revised_set),
    );
    Value::Object(map)
}

pub fn snapshot_from_value(value: &Value) -> Result<SystemSnapshot, FormatError> {
    const CTX: &str = "system snapshot";
    let map = value
        .as_object()
        .ok_or_else(|| format_err(CTX, "expected an object"))?;
    let field = |name: &'static str| {
        map.get(name)
            .ok_or_else(|| format_err(CTX, format!("missing field {name}")))
    };
    Ok(SystemSnapshot {
        claimed_active: active_map_from_value(CTX, field("claimed_active")?)?,
        flagged_stale: id_set_from_value(CTX, field("flagged_stale")?)?,
        revised_set: string_set_from_value(CTX, field("revised_set")?)?,
    })
}

fn f64_value(x: f64) -> Value {
    Value::Number(Number::from_f64(x).expect("metric ratios are finite"))
}

impl Scorecard {
    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("authority_acc".into(), f64_value(self.authority_acc));
        map.insert(
            "authority_matches".into(),
            Value::Number((self.authority_matches as u64).into()),
        );
        map.insert(
            "authority_total".into(),
            Value::Number((self.authority_total as u64).into()),
        );
        map.insert(
            "detail".into(),
            Value::Array(
                self.detail
                    .iter()
                    .map(|row| {
                        let mut entry = Map::new();
                        entry.insert(
                            "claimed".into(),
                            match &row.claimed {
                                Some(ids) => Value::Array(
                                    ids.iter().map(|id| Value::String(id.render())).collect(),
                                ),
                                None => Value::Null,
                            },
                        );
                        entry.insert("counted".into(), Value::Bool(row.counted));
                        entry.insert(
                            "gold".into(),
                            Value::Array(
                                row.gold.iter().map(|id| Value::String(id.render())).collect(),
                            ),
                        );
                        entry.insert("matched".into(), Value::Bool(row.matched));
                        entry.insert("mode".into(), Value::String(row.mode.as_str().into()));
                        entry.insert("role".into(), Value::String(row.role.clone()));
                        entry.insert(
                            "scope".into(),
                            Value::String(row.scope.as_str().to_string()),
                        );
                        Value::Object(entry)
                    })
                    .collect(),
            ),
        );
        map.insert("loc_precision".into(), f64_value(self.loc_precision));
        map.insert("loc_recall".into(), f64_value(self.loc_recall));
        map.insert("stale_f1".into(), f64_value(self.stale_f1));
        map.insert("stale_precision".into(), f64_value(self.stale_precision));
        map.insert("stale_recall".into(), f64_value(self.stale_recall));
        Value::Object(map)
    }

    pub fn from_value(value: &Value) -> Result<Self, FormatError> {
        const CTX: &str = "scorecard";
        let map = value
            .as_object()
            .ok_or_else(|| format_err(CTX, "expected an object"))?;
        let num = |name: &'static str| {
            map.get(name)
                .and_then(Value::as_f64)
                .ok_or_else(|| format_err(CTX, format!("missing number {name}")))
        };
        let count = |name: &'static str| {
            map.get(name)
                .and_then(Value::as_u64)
                .map(|n| n as usize)
                .ok_or_else(|| format_err(CTX, format!("missing count {name}")))
        };
        let detail = map
            .get("detail")
            .and_then(Value::as_array)
            .ok_or_else(|| format_err(CTX, "missing detail array"))?
            .iter()
            .map(|row| {
                let obj = row
                    .as_object()
                    .ok_or_else(|| format_err(CTX, "detail rows must be objects"))?;
                let claimed = match obj.get("claimed") {
                    Some(Value::Null) | None => None,
                    Some(v) => Some(id_set_from_value(CTX, v)?),
                };
                Ok(RoleDetail {
                    role: obj
                        .get("role")
                        .and_then(Value::as_str)
                        .ok_or_else(|| format_err(CTX, "detail row needs role"))?
                        .to_string(),
                    scope: Scope::new(
                        obj.get("scope")
                            .and_then(Value::as_str)
                            .ok_or_else(|| format_err(CTX, "detail row needs scope"))?,
                    )
                    .map_err(|e| format_err(CTX, e.to_string()))?,
                    mode: obj
                        .get("mode")
                        .and_then(Value::as_str)
                        .and_then(AuthorityMode::parse)
                        .ok_or_else(|| format_err(CTX, "detail row needs mode"))?,
                    gold: id_set_from_value(
                        CTX,
                        obj.get("gold")
                            .ok_or_else(|| format_err(CTX, "detail row needs gold"))?,
                    )?,
                    claimed,
                    matched: obj
                        .get("matched")
                        .and_then(Value::as_bool)
                        .ok_or_else(|| format_err(CTX, "detail row needs matched"))?,
                    counted: obj
                        .get("counted")
                        .and_then(Value::as_bool)
                        .ok_or_else(|| format_err(CTX, "detail row needs counted"))?,
                })
            })
            .collect::<Result<Vec<_>, FormatError>>()?;
        Ok(Self {
            authority_acc: num("authority_acc")?,
            authority_matches: count("authority_matches")?,
            authority_total: count("authority_total")?,
            stale_precision: num("stale_precision")?,
            stale_recall: num("stale_recall")?,
            stale_f1: num("stale_f1")?,
            loc_precision: num("loc_precision")?,
            loc_recall: num("loc_recall")?,
            detail,
        })
    }

    /// Aligned-column report: headline metrics then one row per scored
    /// (role, scope).
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "authority_acc={:.4} ({}/{})  stale_f1={:.4}  loc_precision={:.4}  loc_recall={:.4}\n",
            self.authority_acc,
            self.authority_matches,
            self.authority_total,
            self.stale_f1,
            self.loc_precision,
            self.loc_recall
        ));
        out.push('\n');
        let rows: Vec<[String; 2]> = [
            ("authority_acc", self.authority_acc),
            ("stale_precision", self.stale_precision),
            ("stale_recall", self.stale_recall),
            ("stale_f1", self.stale_f1),
            ("loc_precision", self.loc_precision),
            ("loc_recall", self.loc_recall),
        ]
        .into_iter()
        .map(|(name, value)| [name.to_string(), format!("{value:.4}")])
        .collect();
        out.push_str(&format!("{:<18} {:>8}\n", "metric", "value"));
        for [name, value] in rows {
            out.push_str(&format!("{name:<18} {value:>8}\n"));
        }
        if !self.detail.is_empty() {
            out.push('\n');
            let role_width = self
                .detail
                .iter()
                .map(|d| d.role.len())
                .max()
                .unwrap_or(4)
                .max(4);
            let scope_width = self
                .detail
                .iter()
                .map(|d| d.scope.as_str().len())
                .max()
                .unwrap_or(5)
                .max(5);
            out.push_str(&format!(
                "{:<role_width$} {:<scope_width$} {:<13} {}\n",
                "role", "scope", "mode", "result"
            ));
            for row in &self.detail {
                let result = match (row.counted, row.matched) {
                    (true, true) => "match",
                    (true, false) => "miss",
                    (false, true) => "match (informational)",
                    (false, false) => "miss (informational)",
                };
                out.push_str(&format!(
                    "{:<role_width$} {:<scope_width$} {:<13} {}\n",
                    row.role,
                    row.scope.as_str(),
                    row.mode.as_str(),
                    result
                ));
            }
        }
        out
    }
}

/// Macro-average across instance scorecards; counts are summed. Returns
/// None for an empty slice.
pub fn macro_average(cards: &[Scorecard]) -> Option<Scorecard> {
    if cards.is_empty() {
        return None;
    }
    let n = cards.len() as f64;
    let mean = |f: fn(&Scorecard) -> f64| cards.iter().map(f).sum::<f64>() / n;
    Some(Scorecard {
        authority_acc: mean(|c| c.authority_acc),
        authority_matches: cards.iter().map(|c| c.authority_matches).sum(),
        authority_total: cards.iter().map(|c| c.authority_total).sum(),
        stale_precision: mean(|c| c.stale_precision),
        stale_recall: mean(|c| c.stale_recall),
        stale_f1: mean(|c| c.stale_f1),
        loc_precision: mean(|c| c.loc_precision),
        loc_recall: mean(|c| c.loc_recall),
        detail: Vec::new(),
    })
}
