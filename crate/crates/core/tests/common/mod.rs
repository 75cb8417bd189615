//! Shared fixtures and independent oracles for the integration suites.
//!
//! The oracles here recompute everything from raw records (fresh adjacency,
//! linear scans) and never touch the store's derived indexes, so they stay
//! independent of the implementation paths they check.

// Each test binary uses its own subset of these helpers.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use substrate_core::artifact::{
    ArtifactDraft, ArtifactId, AuthorityMode, DepEdge, Lineage, Payload, Role, Scope, Status,
};
use substrate_core::benchmark::{ActiveMap, BenchmarkInstance, PerturbationFamily};
use substrate_core::resolver::Resolution;
use substrate_core::store::{Store, SupersedingCommit};

pub fn scope(name: &str) -> Scope {
    Scope::new(name).unwrap()
}

pub fn id(text: &str) -> ArtifactId {
    ArtifactId::parse(text).unwrap()
}

pub fn ids(names: &[&str]) -> BTreeSet<ArtifactId> {
    names.iter().map(|n| id(n)).collect()
}

pub fn draft(
    artifact: &str,
    role: &str,
    scope_name: &str,
    deps: &[&str],
    supersedes: &[&str],
    payload: serde_json::Value,
) -> ArtifactDraft {
    ArtifactDraft {
        id: id(artifact),
        role: role.to_string(),
        scope: scope(scope_name),
        depends_on: deps.iter().map(|d| DepEdge::consumes(id(d))).collect(),
        lineage: Lineage {
            produced_by: format!("{}_block", id(artifact).family()),
            supersedes: supersedes.iter().map(|s| id(s)).collect(),
        },
        payload: Payload::new("document", payload),
    }
}

pub fn declare(store: &mut Store, role: &str, mode: AuthorityMode) {
    store.declare_role(Role::new(role, mode).unwrap()).unwrap();
}

/// Active ids per the raw records: a full linear scan, no indexes.
pub fn scan_active(store: &Store, role: &str, scope: &Scope) -> BTreeSet<ArtifactId> {
    store
        .records()
        .filter(|r| r.status == Status::Active && r.role == role && &r.scope == scope)
        .map(|r| r.id.clone())
        .collect()
}

/// Expected resolution from a linear scan plus the declared mode.
pub fn scan_resolution(store: &Store, role: &str, scope: &Scope) -> Resolution {
    let ids = scan_active(store, role, scope);
    match (store.role_mode(role).unwrap(), ids.len()) {
        (_, 0) => Resolution::NoActive,
        (AuthorityMode::SingleActive, 1) => {
            Resolution::Single(ids.into_iter().next().unwrap())
        }
        (AuthorityMode::SingleActive, _) => Resolution::Conflict(ids),
        (AuthorityMode::MultiActive, _) => Resolution::Set(ids),
    }
}

/// Brute-force reversed-edge BFS over adjacency rebuilt from the records.
pub fn bfs_dependents(store: &Store, start: &ArtifactId) -> BTreeSet<ArtifactId> {
    let mut reverse: BTreeMap<&ArtifactId, Vec<&ArtifactId>> = BTreeMap::new();
    for record in store.records() {
        for edge in &record.depends_on {
            reverse.entry(&edge.target).or_default().push(&record.id);
        }
    }
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([start]);
    while let Some(current) = queue.pop_front() {
        if let Some(dependents) = reverse.get(current) {
            for &dependent in dependents {
                if seen.insert(dependent.clone()) {
                    queue.push_back(dependent);
                }
            }
        }
    }
    seen.remove(start);
    seen
}

/// Brute-force invalidated set for a displacement: active same-scope
/// dependents of any displaced id.
pub fn bfs_invalidated(
    store: &Store,
    displaced: &[ArtifactId],
    scope: &Scope,
) -> BTreeSet<ArtifactId> {
    let mut out = BTreeSet::new();
    for d in displaced {
        out.extend(bfs_dependents(store, d));
    }
    for d in displaced {
        out.remove(d);
    }
    out.retain(|candidate| {
        let record = store.get_artifact(candidate).unwrap();
        record.status == Status::Active && &record.scope == scope
    });
    out
}

// ---------------------------------------------------------------------------
// Table 2 lifecycle fixture
// ---------------------------------------------------------------------------

pub const TELEHEALTH: &str = "telehealth:baseline";

/// Steps 1-2 of the lifecycle: criteria:v1 plus its three dependents.
pub fn table2_initial() -> Store {
    let mut store = Store::new();
    for role in [
        "decision_criteria",
        "implementation_plan",
        "recommendation",
        "final_memo",
    ] {
        declare(&mut store, role, AuthorityMode::SingleActive);
    }
    store
        .commit_additive(draft(
            "criteria:v1",
            "decision_criteria",
            TELEHEALTH,
            &[],
            &[],
            json!({"constraint": "Expand access while maintaining feasibility"}),
        ))
        .unwrap();
    store
}

pub fn table2_step2(store: &mut Store) {
    store
        .commit_additive(draft(
            "implementation_plan:v1",
            "implementation_plan",
            TELEHEALTH,
            &["criteria:v1"],
            &[],
            json!({"phases": ["pilot", "expand"]}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "recommendation:v1",
            "recommendation",
            TELEHEALTH,
            &["criteria:v1", "implementation_plan:v1"],
            &[],
            json!({"option": "full launch"}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "final_memo:v1",
            "final_memo",
            TELEHEALTH,
            &["recommendation:v1", "implementation_plan:v1"],
            &[],
            json!({"memo": "expand telehealth"}),
        ))
        .unwrap();
}

pub fn table2_step3(store: &mut Store) -> SupersedingCommit {
    store
        .commit_superseding(draft(
            "criteria:v2",
            "decision_criteria",
            TELEHEALTH,
            &[],
            &["criteria:v1"],
            json!({"constraint": "Year-one expansion must be budget-neutral"}),
        ))
        .unwrap()
}

// ---------------------------------------------------------------------------
// Worked example fixture (the full seven-family telehealth graph)
// ---------------------------------------------------------------------------

/// The initial maintained state: evidence digest, claim matrix and tension
/// analysis at v2 (v1 superseded during setup), criteria and downstream
/// artifacts at v1.
pub fn worked_example_initial() -> Store {
    let mut store = Store::new();
    for role in [
        "evidence_digest",
        "claim_matrix",
        "tension_analysis",
        "decision_criteria",
        "implementation_plan",
        "recommendation",
        "final_memo",
    ] {
        declare(&mut store, role, AuthorityMode::SingleActive);
    }
    store
        .commit_additive(draft(
            "evidence_digest:v1",
            "evidence_digest",
            TELEHEALTH,
            &[],
            &[],
            json!({"sources": ["utilization", "reimbursement", "operations"]}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "claim_matrix:v1",
            "claim_matrix",
            TELEHEALTH,
            &["evidence_digest:v1"],
            &[],
            json!({"claims": ["utilization rises"]}),
        ))
        .unwrap();
    store
        .commit_superseding(draft(
            "claim_matrix:v2",
            "claim_matrix",
            TELEHEALTH,
            &["evidence_digest:v1"],
            &["claim_matrix:v1"],
            json!({"claims": ["utilization rises", "reimbursement parity holds"]}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "tension_analysis:v1",
            "tension_analysis",
            TELEHEALTH,
            &["evidence_digest:v1"],
            &[],
            json!({"tensions": ["access vs cost"]}),
        ))
        .unwrap();
    store
        .commit_superseding(draft(
            "tension_analysis:v2",
            "tension_analysis",
            TELEHEALTH,
            &["evidence_digest:v1"],
            &["tension_analysis:v1"],
            json!({"tensions": ["access vs cost", "speed vs oversight"]}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "criteria:v1",
            "decision_criteria",
            TELEHEALTH,
            &["claim_matrix:v2", "tension_analysis:v2"],
            &[],
            json!({"constraint": "Expand access while maintaining feasibility"}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "implementation_plan:v1",
            "implementation_plan",
            TELEHEALTH,
            &["criteria:v1"],
            &[],
            json!({"phases": ["pilot", "expand"]}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "recommendation:v1",
            "recommendation",
            TELEHEALTH,
            &[
                "claim_matrix:v2",
                "criteria:v1",
                "implementation_plan:v1",
                "tension_analysis:v2",
            ],
            &[],
            json!({"option": "full launch"}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "final_memo:v1",
            "final_memo",
            TELEHEALTH,
            &["recommendation:v1", "implementation_plan:v1"],
            &[],
            json!({"memo": "expand telehealth"}),
        ))
        .unwrap();
    store
}

/// The budget-neutrality revision of the criteria artifact.
pub fn worked_example_revision(store: &mut Store) -> SupersedingCommit {
    store
        .commit_superseding(draft(
            "criteria:v2",
            "decision_criteria",
            TELEHEALTH,
            &["claim_matrix:v2", "tension_analysis:v2"],
            &["criteria:v1"],
            json!({
                "constraint": "Year-one expansion must be budget-neutral",
                "decision_rule": "Prefer phased rollout over full launch",
                "priority_order": ["budget neutrality", "access expansion",
                                   "operational feasibility"],
                "open_questions": ["Which sites can absorb added volume?"]
            }),
        ))
        .unwrap()
}

// ---------------------------------------------------------------------------
// Worked benchmark instance (four single-authority roles plus a
// multi-authority claim matrix)
// ---------------------------------------------------------------------------

pub fn telehealth_instance() -> BenchmarkInstance {
    let mut store = Store::new();
    declare(&mut store, "claim_matrix", AuthorityMode::MultiActive);
    for role in [
        "decision_criteria",
        "implementation_plan",
        "recommendation",
        "final_memo",
    ] {
        declare(&mut store, role, AuthorityMode::SingleActive);
    }
    store
        .commit_additive(draft(
            "claim_matrix:v1",
            "claim_matrix",
            TELEHEALTH,
            &[],
            &[],
            json!({"claims": ["utilization rises"]}),
        ))
        .unwrap();
    store
        .commit_superseding(draft(
            "claim_matrix:v2",
            "claim_matrix",
            TELEHEALTH,
            &[],
            &["claim_matrix:v1"],
            json!({"claims": ["utilization rises", "reimbursement parity holds"]}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "criteria:v1",
            "decision_criteria",
            TELEHEALTH,
            &["claim_matrix:v2"],
            &[],
            json!({"constraint": "Expand access while maintaining feasibility"}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "implementation_plan:v1",
            "implementation_plan",
            TELEHEALTH,
            &["criteria:v1"],
            &[],
            json!({"phases": ["pilot", "expand"]}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "recommendation:v1",
            "recommendation",
            TELEHEALTH,
            &["claim_matrix:v2", "criteria:v1", "implementation_plan:v1"],
            &[],
            json!({"option": "full launch"}),
        ))
        .unwrap();
    store
        .commit_additive(draft(
            "final_memo:v1",
            "final_memo",
            TELEHEALTH,
            &["recommendation:v1", "implementation_plan:v1"],
            &[],
            json!({"memo": "expand telehealth"}),
        ))
        .unwrap();
    let setup_len = store.events().len();

    let outcome = store
        .commit_superseding(draft(
            "criteria:v2",
            "decision_criteria",
            TELEHEALTH,
            &["claim_matrix:v2"],
            &["criteria:v1"],
            json!({"constraint": "Year-one expansion must be budget-neutral"}),
        ))
        .unwrap();

    let plan = substrate_core::lineage::plan_regeneration(&store, &outcome.committed).unwrap();
    let mut full = store.clone();
    substrate_core::benchmark::regenerate(&mut full, &plan).unwrap();

    let mut gold_active = ActiveMap::new();
    for (role, resolution) in substrate_core::resolver::active_snapshot(&full, &scope(TELEHEALTH))
    {
        gold_active.insert((role, scope(TELEHEALTH)), resolution.active_ids());
    }
    let mut gold_affected: BTreeSet<String> = plan
        .invalidated
        .iter()
        .map(|i| i.family().to_string())
        .collect();
    gold_affected.insert("criteria".into());

    BenchmarkInstance {
        setup_events: store.events()[..setup_len].to_vec(),
        perturbation_events: store.events()[setup_len..].to_vec(),
        gold_active,
        gold_stale: plan.invalidated,
        gold_affected,
        family_kind: PerturbationFamily::AuthoritySwap,
        seed: 0,
    }
}

// ---------------------------------------------------------------------------
// Random store generation with per-operation checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum OpTrace {
    Additive(ArtifactId),
    Conflicting(ArtifactId),
    Superseding {
        committed: ArtifactId,
        displaced: Vec<ArtifactId>,
    },
    Historical(ArtifactId),
}

/// Incremental bookkeeping so op generation stays O(1) per op.
struct ActiveTracker {
    list: Vec<ArtifactId>,
    index: BTreeMap<ArtifactId, usize>,
}

impl ActiveTracker {
    fn new() -> Self {
        Self {
            list: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    fn insert(&mut self, id: ArtifactId) {
        self.index.insert(id.clone(), self.list.len());
        self.list.push(id);
    }

    fn remove(&mut self, id: &ArtifactId) {
        if let Some(pos) = self.index.remove(id) {
            self.list.swap_remove(pos);
            if pos < self.list.len() {
                self.index.insert(self.list[pos].clone(), pos);
            }
        }
    }

    fn pick(&self, rng: &mut ChaCha8Rng) -> Option<ArtifactId> {
        if self.list.is_empty() {
            None
        } else {
            Some(self.list[rng.gen_range(0..self.list.len())].clone())
        }
    }

    fn len(&self) -> usize {
        self.list.len()
    }
}

/// Builds a random but valid store by driving the public mutating API.
/// `check` runs after every successful operation with the status map
/// captured immediately before it.
pub fn random_store_checked(
    seed: u64,
    commits: usize,
    mut check: impl FnMut(&Store, &BTreeMap<ArtifactId, Status>, &OpTrace),
) -> Store {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = Store::new();

    let scope_count = rng.gen_range(1..=3usize);
    let scopes: Vec<Scope> = (0..scope_count)
        .map(|i| scope(&format!("scope{i}")))
        .collect();
    let role_count = (2 + commits / 12).min(40);
    let roles: Vec<(String, AuthorityMode)> = (0..role_count)
        .map(|i| {
            let mode = if rng.gen_ratio(1, 5) {
                AuthorityMode::MultiActive
            } else {
                AuthorityMode::SingleActive
            };
            (format!("role{i:03}"), mode)
        })
        .collect();
    for (name, mode) in &roles {
        store
            .declare_role(Role {
                name: name.clone(),
                mode: *mode,
            })
            .unwrap();
    }

    let mut active = ActiveTracker::new();
    let mut all_ids: Vec<ArtifactId> = Vec::new();
    let mut next_family = 0usize;
    let mut done = 0usize;

    while done < commits {
        let dice = rng.gen_range(0..100u32);
        let before = store.statuses();

        if dice < 60 || active.len() == 0 {
            // Fresh-family additive commit.
            let (role, mode) = roles[rng.gen_range(0..roles.len())].clone();
            let target_scope = scopes[rng.gen_range(0..scopes.len())].clone();
            if mode == AuthorityMode::SingleActive
                && !store.active_ids(&role, &target_scope).is_empty()
            {
                // Occasionally force a conflict marker; otherwise skip.
                if rng.gen_ratio(1, 8) {
                    let family = format!("fam{next_family:05}");
                    next_family += 1;
                    let d = random_draft(
                        &mut rng,
                        &family,
                        1,
                        &role,
                        &target_scope,
                        &all_ids,
                        Vec::new(),
                    );
                    let (committed, conflicted) =
                        store.commit_additive_with(d, true).unwrap();
                    assert!(conflicted);
                    active.insert(committed.clone());
                    all_ids.push(committed.clone());
                    done += 1;
                    check(&store, &before, &OpTrace::Conflicting(committed));
                }
                continue;
            }
            let family = format!("fam{next_family:05}");
            next_family += 1;
            let d = random_draft(
                &mut rng,
                &family,
                1,
                &role,
                &target_scope,
                &all_ids,
                Vec::new(),
            );
            let committed = store.commit_additive(d).unwrap();
            active.insert(committed.clone());
            all_ids.push(committed.clone());
            done += 1;
            check(&store, &before, &OpTrace::Additive(committed));
        } else if dice < 90 {
            // Supersede a random active artifact with the next version of
            // its family (sometimes also displacing a sibling active of the
            // same role and scope).
            let Some(target) = active.pick(&mut rng) else {
                continue;
            };
            let record = store.get_artifact(&target).unwrap().clone();
            let mut displaced = vec![target.clone()];
            if rng.gen_ratio(1, 6) {
                let siblings: Vec<ArtifactId> = scan_active(&store, &record.role, &record.scope)
                    .into_iter()
                    .filter(|s| s != &target)
                    .collect();
                if !siblings.is_empty() {
                    displaced.push(siblings[rng.gen_range(0..siblings.len())].clone());
                }
            }
            use substrate_core::artifact::StoreView;
            let version = store.max_family_version(target.family()).unwrap() + 1;
            let d = random_draft(
                &mut rng,
                target.family(),
                version,
                &record.role,
                &record.scope,
                &all_ids,
                displaced.clone(),
            );
            let outcome = store.commit_superseding(d).unwrap();
            for d in &outcome.displaced {
                active.remove(d);
            }
            active.insert(outcome.committed.clone());
            all_ids.push(outcome.committed.clone());
            done += 1;
            check(
                &store,
                &before,
                &OpTrace::Superseding {
                    committed: outcome.committed,
                    displaced: outcome.displaced,
                },
            );
        } else {
            let Some(target) = active.pick(&mut rng) else {
                continue;
            };
            store.mark_historical(&target).unwrap();
            active.remove(&target);
            check(&store, &before, &OpTrace::Historical(target));
        }
    }
    store
}

fn random_draft(
    rng: &mut ChaCha8Rng,
    family: &str,
    version: u32,
    role: &str,
    scope: &Scope,
    all_ids: &[ArtifactId],
    supersedes: Vec<ArtifactId>,
) -> ArtifactDraft {
    let dep_count = if all_ids.is_empty() {
        0
    } else {
        rng.gen_range(0..=3usize.min(all_ids.len()))
    };
    let depends_on = if dep_count == 0 {
        Vec::new()
    } else {
        sample(rng, all_ids.len(), dep_count)
            .into_iter()
            .map(|i| {
                if rng.gen_ratio(1, 5) {
                    DepEdge::derived_from(all_ids[i].clone())
                } else {
                    DepEdge::consumes(all_ids[i].clone())
                }
            })
            .collect()
    };
    ArtifactDraft {
        id: ArtifactId::new(family, version).unwrap(),
        role: role.to_string(),
        scope: scope.clone(),
        depends_on,
        lineage: Lineage {
            produced_by: format!("step_{family}_{version}"),
            supersedes,
        },
        payload: Payload::new(
            "document",
            json!({"body": format!("{:016x}", rng.gen::<u64>())}),
        ),
    }
}

pub fn random_store(seed: u64, commits: usize) -> Store {
    random_store_checked(seed, commits, |_, _, _| {})
}

/// Chain-of-diamonds DAG: J0 -> {P, P'} -> J1 -> {P, P'} -> J2 ...
/// Roughly `nodes` artifacts under one scope, all single-authority.
pub fn chain_of_diamonds(nodes: usize) -> Store {
    let mut store = Store::new();
    let s = scope("perf");
    let diamonds = (nodes.saturating_sub(1)) / 3;
    let mk = |store: &mut Store, family: &str, deps: &[&str]| {
        declare(store, family, AuthorityMode::SingleActive);
        store
            .commit_additive(draft(
                &format!("{family}:v1"),
                family,
                s.as_str(),
                deps,
                &[],
                json!({"unit": family}),
            ))
            .unwrap();
    };
    mk(&mut store, "j0", &[]);
    for k in 0..diamonds {
        let junction = format!("j{k}");
        let left = format!("l{k}");
        let right = format!("r{k}");
        let next = format!("j{}", k + 1);
        let junction_v1 = format!("{junction}:v1");
        mk(&mut store, &left, &[&junction_v1]);
        mk(&mut store, &right, &[&junction_v1]);
        let left_v1 = format!("{left}:v1");
        let right_v1 = format!("{right}:v1");
        mk(&mut store, &next, &[&left_v1, &right_v1]);
    }
    store
}

/// A large mixed log for replay timing: version chains with occasional
/// fresh families and recent-window dependencies.
pub fn build_large_log(events_target: usize) -> Store {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBEEF);
    let mut store = Store::new();
    let s = scope("bulk");
    let role_count = 50usize;
    for i in 0..role_count {
        declare(&mut store, &format!("role{i:03}"), AuthorityMode::MultiActive);
    }
    let mut recent: VecDeque<ArtifactId> = VecDeque::new();
    let mut families: Vec<(String, u32, String)> = Vec::new();
    let mut next_family = 0usize;

    while store.events().len() < events_target {
        let extend_chain = !families.is_empty() && rng.gen_ratio(3, 5);
        let (family, version, supersedes, role) = if extend_chain {
            let pick = rng.gen_range(0..families.len());
            let (family, version, role) = families[pick].clone();
            let previous = ArtifactId::new(&family, version).unwrap();
            families[pick].1 = version + 1;
            (family, version + 1, vec![previous], role)
        } else {
            let family = format!("bulk{next_family:06}");
            let role = format!("role{:03}", rng.gen_range(0..role_count));
            next_family += 1;
            families.push((family.clone(), 1, role.clone()));
            (family, 1, Vec::new(), role)
        };
        let deps: Vec<DepEdge> = if recent.is_empty() {
            Vec::new()
        } else {
            (0..rng.gen_range(0..=2usize))
                .map(|_| {
                    DepEdge::consumes(recent[rng.gen_range(0..recent.len())].clone())
                })
                .collect()
        };
        let d = ArtifactDraft {
            id: ArtifactId::new(&family, version).unwrap(),
            role,
            scope: s.clone(),
            depends_on: deps,
            lineage: Lineage {
                produced_by: "bulk".into(),
                supersedes: supersedes.clone(),
            },
            payload: Payload::new(
                "document",
                json!({"body": format!("{:016x}", rng.gen::<u64>())}),
            ),
        };
        let committed = if supersedes.is_empty() {
            store.commit_additive(d).unwrap()
        } else {
            store.commit_superseding(d).unwrap().committed
        };
        recent.push_back(committed);
        if recent.len() > 64 {
            recent.pop_front();
        }
    }
    store
}
