//! The synchronous, nondeterministic, maximally parallel stepping engine.
//!
//! A step has two stages with a barrier between them: selection chooses a
//! maximal multiset of rule applications per membrane, execution applies
//! them in fixed phases (consume, produce, communicate, dissolve, divide),
//! all phases reading the same pre-step state.
//!
//! Selection is a seeded greedy loop: repeatedly gather every rule instance
//! still applicable to the remaining objects and free structural slots,
//! pick one uniformly at random, and reserve one application. This is
//! maximal by construction and gives every maximal selection positive
//! probability; the distribution over maximal selections is not uniform.
//!
//! Priorities use the strong reading, fixed at step start: a rule is
//! eligible for the whole step only if no strictly-higher-priority rule of
//! its region is applicable to the region's full pre-step contents.

pub mod explore;
pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{Configuration, MembraneInstance};
use crate::model::{
    ActiveOp, ActiveRule, Label, Mode, OutputRegion, PSystemSpec, Target, TransitionRule,
    Violation,
};
use crate::multiset::{Multiset, Symbol};
use crate::rng;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid spec:\n{}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"))]
    InvalidSpec(Vec<Violation>),
    #[error("cannot step a halted configuration")]
    AlreadyHalted,
    #[error("selection does not fit this configuration: {0}")]
    SelectionMismatch(String),
    #[error("unknown membrane instance {0}")]
    UnknownMembrane(u64),
    #[error("unknown rule {rule} for membrane {membrane}")]
    UnknownRule { membrane: u64, rule: String },
    #[error("oracle too large: exceeded {limit} backtracking nodes")]
    OracleTooLarge { limit: u64 },
}

/// The rule applications chosen for one step.
///
/// `per_membrane` maps instance id to rule-name multiplicities. Send-in
/// applications are keyed by the receiving child instance (consumption comes
/// from its parent region). `in_targets` records, per (instance, rule), the
/// child chosen for each `in(L)` product occurrence, in reservation order.
#[derive(Clone, Default, PartialEq, Eq, Debug)]
pub struct Selection {
    pub per_membrane: BTreeMap<u64, BTreeMap<String, u64>>,
    pub in_targets: BTreeMap<(u64, String), Vec<u64>>,
}

impl Selection {
    pub fn is_empty(&self) -> bool {
        self.per_membrane.is_empty()
    }

    pub fn add(&mut self, membrane: u64, rule: &str, count: u64) {
        if count == 0 {
            return;
        }
        let rules = self.per_membrane.entry(membrane).or_default();
        // Avoid allocating the rule name again on repeat applications.
        match rules.get_mut(rule) {
            Some(c) => *c += count,
            None => {
                rules.insert(rule.to_string(), count);
            }
        }
    }

    pub fn count(&self, membrane: u64, rule: &str) -> u64 {
        self.per_membrane
            .get(&membrane)
            .and_then(|m| m.get(rule))
            .copied()
            .unwrap_or(0)
    }

    /// Just the rule multiplicities, for comparison against the oracle.
    pub fn core(&self) -> BTreeMap<u64, BTreeMap<String, u64>> {
        self.per_membrane.clone()
    }
}

/// Per-instance snapshot of everything selection needs: tree position,
/// rules of the instance's label, and priority-filtered eligibility.
pub(crate) struct RegionView<'a> {
    pub parent: Option<u64>,
    pub children: Vec<(u64, Label)>,
    pub elementary: bool,
    pub contents: &'a Multiset,
    pub trans_rules: &'a [TransitionRule],
    pub active_rules: &'a [ActiveRule],
    /// Indices into `trans_rules` that survive strong-priority filtering
    /// against the pre-step contents.
    pub eligible: Vec<usize>,
}

pub(crate) struct StepCtx<'a> {
    pub views: BTreeMap<u64, RegionView<'a>>,
    /// Contention components, ascending by key (= smallest member id).
    pub components: Vec<(u64, Vec<u64>)>,
}

/// Raw availability of one transition rule against a working multiset:
/// floor over the left side, and every `in(L)` target must have a matching
/// child right now.
fn trans_applicable(rule: &TransitionRule, remaining: &Multiset, view: &RegionView) -> u64 {
    for (_, target) in &rule.rhs {
        if let Target::In(l) = target {
            if !view.children.iter().any(|(_, cl)| cl == l) {
                return 0;
            }
        }
    }
    remaining.fits(&rule.lhs)
}

pub(crate) fn build_ctx<'a>(spec: &'a PSystemSpec, config: &'a Configuration) -> StepCtx<'a> {
    let parents = config.parents();
    let mut views = BTreeMap::new();
    for m in config.membranes() {
        let trans_rules = spec.transition_rules(&m.label);
        let mut eligible: Vec<usize> = (0..trans_rules.len()).collect();
        let closure = spec.priority_closure(&m.label);
        let view_children: Vec<(u64, Label)> =
            m.children.iter().map(|c| (c.id, c.label.clone())).collect();
        if !closure.is_empty() {
            // A temporary view for step-start applicability checks.
            let probe = RegionView {
                parent: parents.get(&m.id).copied(),
                children: view_children.clone(),
                elementary: m.is_elementary(),
                contents: &m.contents,
                trans_rules,
                active_rules: &[],
                eligible: Vec::new(),
            };
            eligible.retain(|&i| {
                let lower = &trans_rules[i].name;
                !trans_rules.iter().any(|higher| {
                    closure.contains(&(higher.name.clone(), lower.clone()))
                        && trans_applicable(higher, &m.contents, &probe) > 0
                })
            });
        }
        views.insert(
            m.id,
            RegionView {
                parent: parents.get(&m.id).copied(),
                children: view_children,
                elementary: m.is_elementary(),
                contents: &m.contents,
                trans_rules,
                active_rules: spec.active_rules(&m.label),
                eligible,
            },
        );
    }

    // Contention components. Transition mode: all consumption is
    // region-local, every instance is a singleton. Active mode: a child
    // whose label carries send-in rules shares its parent's object pool.
    let ids: Vec<u64> = views.keys().copied().collect();
    let mut comp_of: BTreeMap<u64, u64> = ids.iter().map(|&id| (id, id)).collect();
    fn find(comp_of: &mut BTreeMap<u64, u64>, id: u64) -> u64 {
        let mut root = id;
        while comp_of[&root] != root {
            root = comp_of[&root];
        }
        let mut cur = id;
        while comp_of[&cur] != root {
            let next = comp_of[&cur];
            comp_of.insert(cur, root);
            cur = next;
        }
        root
    }
    if spec.mode == Mode::Active {
        for (&id, view) in &views {
            let has_send_in =
                view.active_rules.iter().any(|r| matches!(r.op, ActiveOp::SendIn { .. }));
            if has_send_in {
                if let Some(parent) = view.parent {
                    let a = find(&mut comp_of, id);
                    let b = find(&mut comp_of, parent);
                    let (lo, hi) = (a.min(b), a.max(b));
                    comp_of.insert(hi, lo);
                }
            }
        }
    }
    let mut components: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &id in &ids {
        let root = find(&mut comp_of, id);
        components.entry(root).or_default().push(id);
    }
    // Key each component by its smallest member id.
    let components = components
        .into_values()
        .map(|members| (members[0], members))
        .collect();
    StepCtx { views, components }
}

/// Partition of live instance ids into contention components, ascending by
/// component key (the smallest member id).
pub fn contention_components(spec: &PSystemSpec, config: &Configuration) -> Vec<Vec<u64>> {
    build_ctx(spec, config).components.into_iter().map(|(_, m)| m).collect()
}

/// One applicable rule instance during the greedy loop.
#[derive(Clone, Copy)]
enum Candidate {
    Trans { id: u64, rule: usize },
    Active { id: u64, rule: usize },
}

/// Runs the greedy loop over one contention component with its own stream.
/// Used verbatim by both the sequential and the worker-parallel paths, so
/// results cannot depend on scheduling.
pub(crate) fn component_select(
    ctx: &StepCtx,
    members: &[u64],
    stream: &mut ChaCha8Rng,
    out: &mut Selection,
) {
    let mut remaining: BTreeMap<u64, Multiset> =
        members.iter().map(|&id| (id, ctx.views[&id].contents.clone())).collect();
    let mut slot_used: BTreeSet<u64> = BTreeSet::new();
    let mut candidates: Vec<Candidate> = Vec::new();

    loop {
        candidates.clear();
        for &id in members {
            let view = &ctx.views[&id];
            for &i in &view.eligible {
                if trans_applicable(&view.trans_rules[i], &remaining[&id], view) > 0 {
                    candidates.push(Candidate::Trans { id, rule: i });
                }
            }
            for (i, rule) in view.active_rules.iter().enumerate() {
                let ok = match &rule.op {
                    ActiveOp::Evolve { trigger, .. } => remaining[&id].count(trigger) > 0,
                    ActiveOp::SendIn { trigger, .. } => {
                        !slot_used.contains(&id)
                            && view
                                .parent
                                .map(|p| remaining[&p].count(trigger) > 0)
                                .unwrap_or(false)
                    }
                    ActiveOp::SendOut { trigger, .. } | ActiveOp::Dissolve { trigger, .. } => {
                        !slot_used.contains(&id) && remaining[&id].count(trigger) > 0
                    }
                    ActiveOp::Divide { trigger, .. } => {
                        !slot_used.contains(&id)
                            && view.elementary
                            && remaining[&id].count(trigger) > 0
                    }
                };
                if ok {
                    candidates.push(Candidate::Active { id, rule: i });
                }
            }
        }
        if candidates.is_empty() {
            return;
        }
        let pick = candidates[stream.random_range(0..candidates.len())];
        match pick {
            Candidate::Trans { id, rule } => {
                let view = &ctx.views[&id];
                let rule = &view.trans_rules[rule];
                remaining
                    .get_mut(&id)
                    .unwrap()
                    .remove_all(&rule.lhs)
                    .expect("applicability checked");
                // Resolve each in(L) product occurrence now, from the same
                // component stream.
                for (_, target) in &rule.rhs {
                    if let Target::In(l) = target {
                        let matching: Vec<u64> = view
                            .children
                            .iter()
                            .filter(|(_, cl)| cl == l)
                            .map(|(cid, _)| *cid)
                            .collect();
                        let chosen = matching[stream.random_range(0..matching.len())];
                        out.in_targets.entry((id, rule.name.clone())).or_default().push(chosen);
                    }
                }
                out.add(id, &rule.name, 1);
            }
            Candidate::Active { id, rule } => {
                let view = &ctx.views[&id];
                let rule = &view.active_rules[rule];
                match &rule.op {
                    ActiveOp::Evolve { trigger, .. } => {
                        remaining.get_mut(&id).unwrap().remove(trigger, 1).unwrap();
                    }
                    ActiveOp::SendIn { trigger, .. } => {
                        let parent = view.parent.expect("send-in has a parent");
                        remaining.get_mut(&parent).unwrap().remove(trigger, 1).unwrap();
                        slot_used.insert(id);
                    }
                    ActiveOp::SendOut { trigger, .. }
                    | ActiveOp::Dissolve { trigger, .. }
                    | ActiveOp::Divide { trigger, .. } => {
                        remaining.get_mut(&id).unwrap().remove(trigger, 1).unwrap();
                        slot_used.insert(id);
                    }
                }
                out.add(id, &rule.name, 1);
            }
        }
    }
}

/// Maximum multiplicity with which `rule` can fire in membrane `membrane`,
/// respecting strong-priority blocking. Structural active rules report at
/// most 1; their one-per-membrane slot is enforced during selection.
pub fn applicable_count(
    spec: &PSystemSpec,
    config: &Configuration,
    membrane: u64,
    rule: &str,
) -> Result<u64, EngineError> {
    let ctx = build_ctx(spec, config);
    let view = ctx.views.get(&membrane).ok_or(EngineError::UnknownMembrane(membrane))?;
    if let Some(i) = view.trans_rules.iter().position(|r| r.name == rule) {
        if !view.eligible.contains(&i) {
            return Ok(0); // blocked by a higher-priority applicable rule
        }
        return Ok(trans_applicable(&view.trans_rules[i], view.contents, view));
    }
    if let Some(r) = view.active_rules.iter().find(|r| r.name == rule) {
        let ok = match &r.op {
            ActiveOp::Evolve { trigger, .. } => view.contents.count(trigger) > 0,
            ActiveOp::SendIn { trigger, .. } => view
                .parent
                .map(|p| ctx.views[&p].contents.count(trigger) > 0)
                .unwrap_or(false),
            ActiveOp::SendOut { trigger, .. } | ActiveOp::Dissolve { trigger, .. } => {
                view.contents.count(trigger) > 0
            }
            ActiveOp::Divide { trigger, .. } => {
                view.elementary && view.contents.count(trigger) > 0
            }
        };
        return Ok(if ok { 1 } else { 0 });
    }
    Err(EngineError::UnknownRule { membrane, rule: rule.to_string() })
}

/// Selects one maximal multiset of rule applications. An empty selection
/// means the system halts.
pub fn select(spec: &PSystemSpec, config: &Configuration, seed: u64) -> Selection {
    let ctx = build_ctx(spec, config);
    let mut out = Selection::default();
    for (key, members) in &ctx.components {
        let mut stream = rng::stream(seed, config.step, *key);
        component_select(&ctx, members, &mut stream, &mut out);
    }
    out
}

/// Staged effects of the production phases, applied between phase barriers.
#[derive(Default)]
pub(crate) struct Staging {
    pub(crate) regions: BTreeMap<u64, Multiset>,
    pub(crate) environment: Multiset,
}

impl Staging {
    pub(crate) fn add(&mut self, region: Option<u64>, sym: &Symbol, n: u64) {
        match region {
            Some(id) => self.regions.entry(id).or_default().add(sym, n),
            None => self.environment.add(sym, n),
        }
    }
}

/// One pre-order pass over the live tree with a mutable visitor; keeps
/// per-step bookkeeping linear instead of an O(n) id lookup per membrane.
pub(crate) fn walk_mut(
    node: &mut MembraneInstance,
    f: &mut impl FnMut(&mut MembraneInstance),
) {
    f(node);
    for c in node.children.iter_mut() {
        walk_mut(c, f);
    }
}

/// Removes `consumed` from each membrane's contents in a single traversal.
pub(crate) fn consume_all(
    next: &mut Configuration,
    consumed: &BTreeMap<u64, Multiset>,
) -> Result<(), EngineError> {
    let mut found = 0usize;
    let mut first_err: Option<EngineError> = None;
    walk_mut(&mut next.skin, &mut |m| {
        if let Some(mset) = consumed.get(&m.id) {
            found += 1;
            if let Err(e) = m.contents.remove_all(mset) {
                first_err.get_or_insert(EngineError::SelectionMismatch(format!(
                    "membrane {}: {e}",
                    m.id
                )));
            }
        }
    });
    if let Some(e) = first_err {
        return Err(e);
    }
    if found != consumed.len() {
        let missing = consumed.keys().find(|id| next.membrane(**id).is_none());
        return Err(EngineError::UnknownMembrane(missing.copied().unwrap_or(0)));
    }
    Ok(())
}

/// Applies a selection, producing the next configuration. All phases read
/// the pre-step state; the step counter advances by one.
pub fn apply(
    spec: &PSystemSpec,
    config: &Configuration,
    selection: &Selection,
    seed: u64,
) -> Result<Configuration, EngineError> {
    let parents = config.parents();
    let mut resolver = rng::stream(seed, config.step, rng::RESOLVE_KEY);
    let plan = plan_step(spec, config, selection, &parents, &mut resolver)?;
    let mut next = config.clone();
    next.step += 1;

    // Phase 1: consume.
    consume_all(&mut next, &plan.consumed)?;

    // Phases 2+3: stage evolution/transition products and communications,
    // then land them.
    let mut staging = Staging::default();
    for item in &plan.products {
        staging.add(item.region, &item.symbol, item.count);
    }
    for item in &plan.moves {
        staging.add(item.region, &item.symbol, item.count);
    }
    land(&mut next, staging)?;

    // Phase 4: dissolve.
    apply_dissolve(&mut next, &plan.dissolving)?;

    // Phase 5: divide, parents in ascending id order.
    apply_divide(&mut next, &plan.divisions)?;

    Ok(next)
}

/// One staged object placement; `region: None` targets the environment.
pub(crate) struct StagedItem {
    pub region: Option<u64>,
    pub symbol: Symbol,
    pub count: u64,
}

pub(crate) struct StepPlan {
    /// Per-membrane objects removed in the consume phase.
    pub consumed: BTreeMap<u64, Multiset>,
    /// Evolution and transition-rule products (phase 2).
    pub products: Vec<StagedItem>,
    /// Send-in / send-out / dissolve-product movements (phase 3).
    pub moves: Vec<StagedItem>,
    pub dissolving: BTreeSet<u64>,
    /// (membrane id, left product, right product), ascending by id.
    pub divisions: Vec<(u64, Symbol, Symbol)>,
}

/// Validates a selection against the pre-step configuration by reservation
/// replay and compiles it into per-phase work items. Shared by the
/// sequential and worker-parallel execution paths so the semantics cannot
/// drift; only the execution strategy differs.
pub(crate) fn plan_step(
    spec: &PSystemSpec,
    config: &Configuration,
    selection: &Selection,
    parents: &BTreeMap<u64, u64>,
    resolver: &mut ChaCha8Rng,
) -> Result<StepPlan, EngineError> {
    let mut plan = StepPlan {
        consumed: BTreeMap::new(),
        products: Vec::new(),
        moves: Vec::new(),
        dissolving: BTreeSet::new(),
        divisions: Vec::new(),
    };
    let by_id: BTreeMap<u64, &MembraneInstance> =
        config.membranes().into_iter().map(|m| (m.id, m)).collect();
    let mut slot_used: BTreeSet<u64> = BTreeSet::new();
    let mut structural = |id: u64| -> Result<(), EngineError> {
        if !slot_used.insert(id) {
            return Err(EngineError::SelectionMismatch(format!(
                "membrane {id} has two structural rule applications"
            )));
        }
        Ok(())
    };

    for (&id, rules) in &selection.per_membrane {
        let membrane = *by_id.get(&id).ok_or(EngineError::UnknownMembrane(id))?;
        for (name, &mult) in rules {
            if let Some(rule) =
                spec.transition_rules(&membrane.label).iter().find(|r| &r.name == name)
            {
                plan
                    .consumed
                    .entry(id)
                    .or_default()
                    .add_all(&rule.lhs.scale(mult));
                // Use the selection's in-target resolutions; resolve any the
                // selection left open (oracle-produced selections do).
                let recorded = selection.in_targets.get(&(id, name.clone()));
                let mut occurrence = 0usize;
                for _app in 0..mult {
                    for (sym, target) in &rule.rhs {
                        match target {
                            Target::Here => plan.products.push(StagedItem {
                                region: Some(id),
                                symbol: sym.clone(),
                                count: 1,
                            }),
                            Target::Out => plan.products.push(StagedItem {
                                region: parents.get(&id).copied(),
                                symbol: sym.clone(),
                                count: 1,
                            }),
                            Target::In(l) => {
                                let chosen = match recorded.and_then(|v| v.get(occurrence)) {
                                    Some(&c) => c,
                                    None => {
                                        let matching: Vec<u64> = membrane
                                            .children
                                            .iter()
                                            .filter(|c| &c.label == l)
                                            .map(|c| c.id)
                                            .collect();
                                        if matching.is_empty() {
                                            return Err(EngineError::SelectionMismatch(
                                                format!("no child labeled {l} under {id}"),
                                            ));
                                        }
                                        matching[resolver.random_range(0..matching.len())]
                                    }
                                };
                                if !membrane.children.iter().any(|c| c.id == chosen) {
                                    return Err(EngineError::SelectionMismatch(format!(
                                        "in-target {chosen} is not a child of {id}"
                                    )));
                                }
                                occurrence += 1;
                                plan.products.push(StagedItem {
                                    region: Some(chosen),
                                    symbol: sym.clone(),
                                    count: 1,
                                });
                            }
                        }
                    }
                }
                continue;
            }
            let Some(rule) =
                spec.active_rules(&membrane.label).iter().find(|r| &r.name == name)
            else {
                return Err(EngineError::UnknownRule { membrane: id, rule: name.clone() });
            };
            match &rule.op {
                ActiveOp::Evolve { trigger, products } => {
                    plan.consumed.entry(id).or_default().add(trigger, mult);
                    for (sym, n) in products.iter() {
                        plan.products.push(StagedItem {
                            region: Some(id),
                            symbol: sym.clone(),
                            count: n * mult,
                        });
                    }
                }
                ActiveOp::SendIn { trigger, product } => {
                    if mult != 1 {
                        return Err(EngineError::SelectionMismatch(format!(
                            "structural rule {name} applied {mult} times to membrane {id}"
                        )));
                    }
                    structural(id)?;
                    let parent = parents.get(&id).copied().ok_or_else(|| {
                        EngineError::SelectionMismatch("send-in into the skin".into())
                    })?;
                    plan.consumed.entry(parent).or_default().add(trigger, 1);
                    if let Some(p) = product {
                        plan.moves.push(StagedItem {
                            region: Some(id),
                            symbol: p.clone(),
                            count: 1,
                        });
                    }
                }
                ActiveOp::SendOut { trigger, product } => {
                    if mult != 1 {
                        return Err(EngineError::SelectionMismatch(format!(
                            "structural rule {name} applied {mult} times to membrane {id}"
                        )));
                    }
                    structural(id)?;
                    plan.consumed.entry(id).or_default().add(trigger, 1);
                    if let Some(p) = product {
                        plan.moves.push(StagedItem {
                            region: parents.get(&id).copied(),
                            symbol: p.clone(),
                            count: 1,
                        });
                    }
                }
                ActiveOp::Dissolve { trigger, product } => {
                    if mult != 1 {
                        return Err(EngineError::SelectionMismatch(format!(
                            "structural rule {name} applied {mult} times to membrane {id}"
                        )));
                    }
                    structural(id)?;
                    if id == config.skin.id {
                        return Err(EngineError::SelectionMismatch(
                            "skin cannot dissolve".into(),
                        ));
                    }
                    plan.consumed.entry(id).or_default().add(trigger, 1);
                    if let Some(p) = product {
                        // The product surfaces in the parent; staging it into
                        // the dissolving membrane merges it up in phase 4.
                        plan.moves.push(StagedItem {
                            region: Some(id),
                            symbol: p.clone(),
                            count: 1,
                        });
                    }
                    plan.dissolving.insert(id);
                }
                ActiveOp::Divide { trigger, left, right } => {
                    if mult != 1 {
                        return Err(EngineError::SelectionMismatch(format!(
                            "structural rule {name} applied {mult} times to membrane {id}"
                        )));
                    }
                    structural(id)?;
                    if id == config.skin.id {
                        return Err(EngineError::SelectionMismatch("skin cannot divide".into()));
                    }
                    if !membrane.is_elementary() {
                        return Err(EngineError::SelectionMismatch(format!(
                            "division of non-elementary membrane {id}"
                        )));
                    }
                    plan.consumed.entry(id).or_default().add(trigger, 1);
                    plan.divisions.push((id, left.clone(), right.clone()));
                }
            }
        }
    }

    // Reservation replay: consumption must fit the pre-step contents.
    for (id, mset) in &plan.consumed {
        let membrane = *by_id.get(id).ok_or(EngineError::UnknownMembrane(*id))?;
        if !membrane.contents.contains(mset) {
            return Err(EngineError::SelectionMismatch(format!(
                "membrane {id} cannot supply {}",
                mset.canonical()
            )));
        }
    }
    plan.divisions.sort_by_key(|(id, _, _)| *id);
    Ok(plan)
}

pub(crate) fn land(next: &mut Configuration, staging: Staging) -> Result<(), EngineError> {
    let mut found = 0usize;
    walk_mut(&mut next.skin, &mut |m| {
        if let Some(mset) = staging.regions.get(&m.id) {
            found += 1;
            m.contents.add_all(mset);
        }
    });
    if found != staging.regions.len() {
        let missing = staging.regions.keys().find(|id| next.membrane(**id).is_none());
        return Err(EngineError::UnknownMembrane(missing.copied().unwrap_or(0)));
    }
    next.environment.add_all(&staging.environment);
    Ok(())
}

pub(crate) fn apply_dissolve(
    next: &mut Configuration,
    dissolving: &BTreeSet<u64>,
) -> Result<(), EngineError> {
    if dissolving.is_empty() {
        return Ok(());
    }
    if dissolving.contains(&next.skin.id) {
        return Err(EngineError::SelectionMismatch("skin cannot dissolve".into()));
    }
    fn fold(
        node: MembraneInstance,
        dissolving: &BTreeSet<u64>,
    ) -> (Vec<MembraneInstance>, Multiset) {
        let MembraneInstance { id, label, mut contents, children } = node;
        let mut kept_children = Vec::new();
        for c in children {
            let (nodes, uplift) = fold(c, dissolving);
            // Dissolved children splice their own children in place.
            kept_children.extend(nodes);
            contents.add_all(&uplift);
        }
        if dissolving.contains(&id) {
            (kept_children, contents)
        } else {
            (
                vec![MembraneInstance { id, label, contents, children: kept_children }],
                Multiset::new(),
            )
        }
    }
    let skin = std::mem::replace(
        &mut next.skin,
        MembraneInstance {
            id: 0,
            label: Label::new("_").unwrap(),
            contents: Multiset::new(),
            children: Vec::new(),
        },
    );
    let (mut nodes, _) = fold(skin, dissolving);
    debug_assert_eq!(nodes.len(), 1);
    next.skin = nodes.pop().unwrap();
    Ok(())
}

pub(crate) fn apply_divide(
    next: &mut Configuration,
    divisions: &[(u64, Symbol, Symbol)],
) -> Result<(), EngineError> {
    for (id, left, right) in divisions {
        let mut next_id = next.next_id;
        let parent = find_parent_mut(&mut next.skin, *id).ok_or_else(|| {
            EngineError::SelectionMismatch(format!("divided membrane {id} has no parent"))
        })?;
        let pos = parent.children.iter().position(|c| c.id == *id).unwrap();
        let old = parent.children.remove(pos);
        let mut first = old.clone();
        first.id = next_id;
        first.contents.add(left, 1);
        let mut second = old;
        second.id = next_id + 1;
        second.contents.add(right, 1);
        next_id += 2;
        parent.children.insert(pos, second);
        parent.children.insert(pos, first);
        next.next_id = next_id;
    }
    Ok(())
}

fn find_parent_mut(node: &mut MembraneInstance, id: u64) -> Option<&mut MembraneInstance> {
    if node.children.iter().any(|c| c.id == id) {
        return Some(node);
    }
    node.children.iter_mut().find_map(|c| find_parent_mut(c, id))
}

/// One step: select then apply. An empty selection sets the halted flag and
/// leaves the step counter unchanged.
pub fn step(
    spec: &PSystemSpec,
    config: &Configuration,
    seed: u64,
) -> Result<Configuration, EngineError> {
    if config.halted {
        return Err(EngineError::AlreadyHalted);
    }
    let selection = select(spec, config, seed);
    if selection.is_empty() {
        let mut halted = config.clone();
        halted.halted = true;
        return Ok(halted);
    }
    apply(spec, config, &selection, seed)
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum RunStatus {
    Halted,
    BudgetExhausted,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Halted => "halted",
            RunStatus::BudgetExhausted => "budget-exhausted",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Answer {
    Yes,
    No,
    None,
    Invalid,
}

impl Answer {
    pub fn as_str(&self) -> &'static str {
        match self {
            Answer::Yes => "yes",
            Answer::No => "no",
            Answer::None => "none",
            Answer::Invalid => "invalid",
        }
    }
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub enum OutputPayload {
    Objects(Multiset),
    /// The designated output membrane no longer exists.
    OutputDissolved,
}

#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RunResult {
    pub status: RunStatus,
    pub answer: Answer,
    pub output: OutputPayload,
    pub steps: u64,
}

/// Reads the result payload out of a final configuration.
pub fn result(spec: &PSystemSpec, config: &Configuration, status: RunStatus) -> RunResult {
    let terminals = spec.terminals_effective();
    let restrict = |m: &Multiset| {
        Multiset::from_pairs(
            m.iter()
                .filter(|(sym, _)| terminals.contains(*sym))
                .map(|(sym, n)| (sym.clone(), n)),
        )
    };
    let answer = match (&spec.recognizer, status) {
        (Some((yes, no)), RunStatus::Halted) => {
            let y = config.environment.count(yes);
            let n = config.environment.count(no);
            match (y, n) {
                (1, 0) => Answer::Yes,
                (0, 1) => Answer::No,
                (0, 0) => Answer::None,
                _ => Answer::Invalid,
            }
        }
        _ => Answer::None,
    };
    let output = match &spec.output {
        OutputRegion::Environment => OutputPayload::Objects(restrict(&config.environment)),
        OutputRegion::Membrane(l) => match config.lowest_with_label(l) {
            Some(m) => OutputPayload::Objects(restrict(&m.contents)),
            None => OutputPayload::OutputDissolved,
        },
    };
    RunResult { status, answer, output, steps: config.step }
}

#[derive(Clone, Debug)]
pub struct StepRecord {
    pub step: u64,
    pub selection: Selection,
    pub config_canonical: String,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub records: Vec<StepRecord>,
    pub result: RunResult,
}

impl Trace {
    /// JSON-lines: one record per step, then a final result record.
    /// Selections list membranes in ascending id, rules lexicographically.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            let selections: Vec<serde_json::Value> = rec
                .selection
                .per_membrane
                .iter()
                .map(|(id, rules)| {
                    serde_json::json!({
                        "membrane": id,
                        "rules": rules,
                    })
                })
                .collect();
            out.push_str(
                &serde_json::json!({
                    "step": rec.step,
                    "selections": selections,
                    "config": rec.config_canonical,
                })
                .to_string(),
            );
            out.push('\n');
        }
        let output = match &self.result.output {
            OutputPayload::Objects(m) => {
                let map: BTreeMap<String, u64> =
                    m.iter().map(|(s, n)| (s.to_string(), n)).collect();
                serde_json::json!(map)
            }
            OutputPayload::OutputDissolved => serde_json::json!("dissolved"),
        };
        out.push_str(
            &serde_json::json!({
                "status": self.result.status.as_str(),
                "answer": self.result.answer.as_str(),
                "output": output,
                "steps": self.result.steps,
            })
            .to_string(),
        );
        out.push('\n');
        out
    }
}

/// Runs a system to halting or budget exhaustion. Identical
/// (spec, seed, max_steps, workers) yield byte-identical traces.
pub fn run(
    spec: &PSystemSpec,
    seed: u64,
    max_steps: u64,
    workers: usize,
) -> Result<(Trace, RunResult), EngineError> {
    let violations = crate::model::validate_spec(spec);
    if !violations.is_empty() {
        return Err(EngineError::InvalidSpec(violations));
    }
    let mut config = Configuration::initial(spec);
    let mut records = Vec::new();
    let mut halted = false;
    while config.step < max_steps {
        let selection = if workers > 1 {
            crate::runtime::par_select(spec, &config, seed, workers)
        } else {
            select(spec, &config, seed)
        };
        if selection.is_empty() {
            halted = true;
            break;
        }
        config = if workers > 1 {
            crate::runtime::par_apply(spec, &config, &selection, seed, workers)?
        } else {
            apply(spec, &config, &selection, seed)?
        };
        records.push(StepRecord {
            step: config.step,
            selection,
            config_canonical: config.canonical_serialize(),
        });
    }
    let status = if halted { RunStatus::Halted } else { RunStatus::BudgetExhausted };
    let run_result = result(spec, &config, status);
    Ok((Trace { records, result: run_result.clone() }, run_result))
}
