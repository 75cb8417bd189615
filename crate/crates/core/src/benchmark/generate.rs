//! Seeded generation of benchmark instances.
//!
//! Builds a layered artifact DAG (two disjoint branches for the
//! branch-isolated family), injects one controlled superseding edit, and
//! derives the gold annotations by running the engine itself, cross-checked
//! against an independent brute-force reachability oracle.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::artifact::{
    ArtifactDraft, ArtifactId, AuthorityMode, DepEdge, EdgeType, Lineage, Payload, Role, Scope,
    Status,
};
use crate::lineage::plan_regeneration;
use crate::resolver::{active_snapshot, Resolution};
use crate::store::Store;

use super::{regenerate, ActiveMap, BenchmarkInstance, PerturbationFamily};

/// Size knobs for generated instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    /// Number of setup commits (artifact count before the perturbation).
    pub artifacts: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self { artifacts: 24 }
    }
}

pub const MIN_ARTIFACTS: usize = 5;
pub const MAX_ARTIFACTS: usize = 10_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("bad parameters: {0}")]
    BadParameters(String),
}

struct FamilyInfo {
    name: String,
    layer: usize,
    /// 0 = main graph (branch A for branch-isolated), 1 = branch B.
    group: u8,
    multi: bool,
    chain: bool,
}

/// Deterministic in (family kind, seed, params): the same inputs yield a
/// byte-identical instance document.
pub fn generate_instance(
    kind: PerturbationFamily,
    seed: u64,
    params: GenParams,
) -> Result<BenchmarkInstance, GenerateError> {
    let n = params.artifacts;
    if !(MIN_ARTIFACTS..=MAX_ARTIFACTS).contains(&n) {
        return Err(GenerateError::BadParameters(format!(
            "artifacts must be within {MIN_ARTIFACTS}..={MAX_ARTIFACTS}, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scope = Scope::new("bench:main").expect("static scope");

    // Multi-active families commit two coexisting versions, so each one
    // spends two of the artifact budget.
    let multi_count = if n >= 16 { n / 8 } else { 0 };
    let family_count = n - multi_count;

    let mut families = layout(kind, family_count);
    assign_multi(&mut families, multi_count);

    let mut store = Store::new();
    let mut role_decls: Vec<(String, AuthorityMode)> = families
        .iter()
        .map(|f| {
            (
                f.name.clone(),
                if f.multi {
                    AuthorityMode::MultiActive
                } else {
                    AuthorityMode::SingleActive
                },
            )
        })
        .collect();
    role_decls.sort();
    for (name, mode) in role_decls {
        store
            .declare_role(Role { name, mode })
            .expect("generated roles are valid and unique");
    }

    // Commit layer by layer; track committed artifact versions per family.
    let mut versions: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    let order: Vec<usize> = {
        let mut idx: Vec<usize> = (0..families.len()).collect();
        idx.sort_by_key(|&i| (families[i].group, families[i].layer, i));
        idx
    };
    for &i in &order {
        let commits = if families[i].multi { 2 } else { 1 };
        for version in 1..=commits {
            let deps = pick_deps(&mut rng, &families, &versions, i);
            let draft = ArtifactDraft {
                id: ArtifactId::new(&families[i].name, version).expect("valid family name"),
                role: families[i].name.clone(),
                scope: scope.clone(),
                depends_on: deps,
                lineage: Lineage {
                    produced_by: format!("step_{}", families[i].name),
                    supersedes: Vec::new(),
                },
                payload: Payload::new(
                    "document",
                    json!({
                        "body": format!("{:016x}", rng.gen::<u64>()),
                        "layer": families[i].layer,
                        "unit": families[i].name,
                    }),
                ),
            };
            store
                .commit_additive(draft)
                .expect("generated setup commits are valid");
            versions.entry(i).or_default().push(version);
        }
    }
    let setup_len = store.events().len();
    debug_assert_eq!(store.record_count(), n);

    // One controlled edit: supersede the target's v1 with a corrected v2.
    let target = choose_target(&mut rng, kind, &families, &store);
    let target_v1 = ArtifactId::new(&families[target].name, 1).expect("valid name");
    let target_deps = store
        .get_artifact(&target_v1)
        .expect("target committed in setup")
        .depends_on
        .clone();
    let perturbation = ArtifactDraft {
        id: ArtifactId::new(&families[target].name, 2).expect("valid name"),
        role: families[target].name.clone(),
        scope: scope.clone(),
        depends_on: target_deps,
        lineage: Lineage {
            produced_by: "perturbation".into(),
            supersedes: vec![target_v1.clone()],
        },
        payload: Payload::new(
            "document",
            json!({
                "body": format!("{:016x}", rng.gen::<u64>()),
                "correction": true,
                "unit": families[target].name,
            }),
        ),
    };
    let outcome = store
        .commit_superseding(perturbation)
        .expect("generated perturbation is valid");
    let trigger = outcome.committed;
    debug_assert_eq!(outcome.displaced.len(), 1);

    let plan = plan_regeneration(&store, &trigger).expect("trigger is a superseding commit");

    // Independent gold check: brute-force reachability over edges read
    // straight from the records, bypassing the store's dependents index.
    let oracle = brute_force_invalidated(&store, &outcome.displaced, &scope);
    assert_eq!(
        plan.invalidated, oracle,
        "planner disagrees with brute-force reachability oracle"
    );

    match kind {
        PerturbationFamily::BranchIsolated => {
            let group_of: BTreeMap<&str, u8> = families
                .iter()
                .map(|f| (f.name.as_str(), f.group))
                .collect();
            assert!(
                plan.invalidated
                    .iter()
                    .all(|id| group_of[id.family()] == 1),
                "branch-isolated edit leaked into the untouched branch"
            );
        }
        PerturbationFamily::TransitiveImpact => {
            let layer_of: BTreeMap<&str, usize> = families
                .iter()
                .map(|f| (f.name.as_str(), f.layer))
                .collect();
            let layers: BTreeSet<usize> = plan
                .invalidated
                .iter()
                .map(|id| layer_of[id.family()])
                .collect();
            assert!(
                layers.len() >= 2,
                "transitive-impact edit must span at least two downstream stages"
            );
        }
        _ => {}
    }

    // Gold state: the engine's own full processing of the edit.
    let mut gold_store = store.clone();
    regenerate(&mut gold_store, &plan).expect("regeneration of generated plan succeeds");
    let mut gold_active = ActiveMap::new();
    for (role, resolution) in active_snapshot(&gold_store, &scope) {
        if matches!(resolution, Resolution::NoActive) {
            continue;
        }
        gold_active.insert((role, scope.clone()), resolution.active_ids());
    }
    let mut gold_affected: BTreeSet<String> = plan
        .invalidated
        .iter()
        .map(|id| id.family().to_string())
        .collect();
    gold_affected.insert(trigger.family().to_string());

    Ok(BenchmarkInstance {
        setup_events: store.events()[..setup_len].to_vec(),
        perturbation_events: store.events()[setup_len..].to_vec(),
        gold_active,
        gold_stale: plan.invalidated,
        gold_affected,
        family_kind: kind,
        seed,
    })
}

/// Families with layer/group assignments. Within each group the first
/// family of every layer is a chain node: chain nodes always depend on the
/// previous layer's chain node, guaranteeing a path spanning all layers.
fn layout(kind: PerturbationFamily, family_count: usize) -> Vec<FamilyInfo> {
    let groups: Vec<(u8, usize)> = match kind {
        PerturbationFamily::BranchIsolated => {
            let a = family_count / 2;
            vec![(0, a), (1, family_count - a)]
        }
        _ => vec![(0, family_count)],
    };

    let mut families = Vec::with_capacity(family_count);
    for (group, size) in groups {
        let layers = match kind {
            PerturbationFamily::TransitiveImpact => (size / 3).clamp(4, 8),
            PerturbationFamily::BranchIsolated => (size / 2).clamp(2, 4),
            _ => (size / 3).clamp(3, 6),
        }
        .min(size);
        let base = size / layers;
        let extra = size % layers;
        let prefix = match (kind, group) {
            (PerturbationFamily::BranchIsolated, 0) => "a",
            (PerturbationFamily::BranchIsolated, _) => "b",
            _ => "n",
        };
        let mut index = 0;
        for layer in 0..layers {
            let width = base + usize::from(layer < extra);
            for position in 0..width {
                families.push(FamilyInfo {
                    name: format!("{prefix}{index:04}"),
                    layer,
                    group,
                    multi: false,
                    chain: position == 0,
                });
                index += 1;
            }
        }
    }
    families
}

fn assign_multi(families: &mut [FamilyInfo], multi_count: usize) {
    let mut remaining = multi_count;
    for family in families.iter_mut().rev() {
        if remaining == 0 {
            break;
        }
        if !family.chain {
            family.multi = true;
            remaining -= 1;
        }
    }
    debug_assert_eq!(remaining, 0, "not enough non-chain families for multi roles");
}

fn pick_deps(
    rng: &mut ChaCha8Rng,
    families: &[FamilyInfo],
    versions: &BTreeMap<usize, Vec<u32>>,
    current: usize,
) -> Vec<DepEdge> {
    let me = &families[current];
    if me.layer == 0 {
        return Vec::new();
    }
    let prev_layer: Vec<usize> = (0..families.len())
        .filter(|&i| families[i].group == me.group && families[i].layer == me.layer - 1)
        .collect();
    let earlier: Vec<usize> = (0..families.len())
        .filter(|&i| families[i].group == me.group && families[i].layer < me.layer)
        .collect();

    let mut chosen: BTreeSet<usize> = BTreeSet::new();
    if me.chain {
        let prev_chain = *prev_layer
            .iter()
            .find(|&&i| families[i].chain)
            .expect("every layer has a chain family");
        chosen.insert(prev_chain);
    } else {
        chosen.insert(prev_layer[rng.gen_range(0..prev_layer.len())]);
    }
    let extra_max = 2.min(earlier.len().saturating_sub(chosen.len()));
    if extra_max > 0 {
        let extras = rng.gen_range(0..=extra_max);
        for pick in sample(rng, earlier.len(), extras) {
            chosen.insert(earlier[pick]);
        }
    }

    chosen
        .into_iter()
        .map(|i| {
            let committed = &versions[&i];
            let version = committed[rng.gen_range(0..committed.len())];
            let target = ArtifactId::new(&families[i].name, version).expect("valid name");
            let edge_type = if rng.gen_ratio(1, 5) {
                EdgeType::DerivedFrom
            } else {
                EdgeType::Consumes
            };
            DepEdge { target, edge_type }
        })
        .collect()
}

fn choose_target(
    rng: &mut ChaCha8Rng,
    kind: PerturbationFamily,
    families: &[FamilyInfo],
    store: &Store,
) -> usize {
    let singles: Vec<usize> = (0..families.len()).filter(|&i| !families[i].multi).collect();
    let has_dependents = |i: &usize| {
        let id = ArtifactId::new(&families[*i].name, 1).expect("valid name");
        store.dependents_of(&id).is_some_and(|d| !d.is_empty())
    };
    let eligible: Vec<usize> = match kind {
        PerturbationFamily::AuthoritySwap => {
            let with_deps: Vec<usize> =
                singles.iter().copied().filter(has_dependents).collect();
            if with_deps.is_empty() {
                singles
            } else {
                with_deps
            }
        }
        PerturbationFamily::LocalCorrection => {
            let layer0: Vec<usize> = singles
                .iter()
                .copied()
                .filter(|&i| families[i].layer == 0 && families[i].group == 0)
                .collect();
            let with_siblings: Vec<usize> = layer0
                .iter()
                .copied()
                .filter(|&i| {
                    families
                        .iter()
                        .enumerate()
                        .any(|(j, f)| j != i && f.group == 0 && f.layer == 0)
                })
                .collect();
            if with_siblings.is_empty() {
                layer0
            } else {
                with_siblings
            }
        }
        PerturbationFamily::BranchIsolated => singles
            .iter()
            .copied()
            .filter(|&i| families[i].group == 1)
            .collect(),
        PerturbationFamily::TransitiveImpact => singles
            .iter()
            .copied()
            .filter(|&i| families[i].group == 0 && families[i].layer == 0 && families[i].chain)
            .collect(),
    };
    assert!(!eligible.is_empty(), "target pool is empty by construction");
    eligible[rng.gen_range(0..eligible.len())]
}

/// Reversed-edge BFS over dependency edges read directly from the records.
fn brute_force_invalidated(
    store: &Store,
    displaced: &[ArtifactId],
    scope: &Scope,
) -> BTreeSet<ArtifactId> {
    let mut reverse: BTreeMap<&ArtifactId, Vec<&ArtifactId>> = BTreeMap::new();
    for record in store.records() {
        for edge in &record.depends_on {
            reverse.entry(&edge.target).or_default().push(&record.id);
        }
    }
    let mut seen: BTreeSet<ArtifactId> = BTreeSet::new();
    let mut queue: VecDeque<&ArtifactId> = displaced.iter().collect();
    while let Some(current) = queue.pop_front() {
        if let Some(dependents) = reverse.get(current) {
            for &dependent in dependents {
                if seen.insert(dependent.clone()) {
                    queue.push_back(dependent);
                }
            }
        }
    }
    for id in displaced {
        seen.remove(id);
    }
    seen.retain(|id| {
        let record = store.get_artifact(id).expect("records contain dependents");
        record.status == Status::Active && &record.scope == scope
    });
    seen
}
