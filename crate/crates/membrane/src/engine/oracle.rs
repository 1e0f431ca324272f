//! Brute-force enumeration of every maximal selection. Independent of the
//! greedy selection path: applicability, priority filtering, and slot
//! accounting are re-derived here from the rule definitions, so the two
//! routes can audit each other.

use std::collections::{BTreeMap, BTreeSet};

use crate::config::Configuration;
use crate::engine::EngineError;
use crate::model::{ActiveOp, Label, Mode, PSystemSpec, Target};
use crate::multiset::Multiset;

/// Rule multiplicities per membrane, without in-target resolutions.
pub type SelectionCore = BTreeMap<u64, BTreeMap<String, u64>>;

pub const DEFAULT_NODE_LIMIT: u64 = 1_000_000;

/// A single schedulable rule instance, flattened over the live membranes.
struct Instance {
    membrane: u64,
    rule: String,
    /// Region whose objects the rule consumes (the parent for send-in).
    pool: u64,
    lhs: Multiset,
    structural: bool,
    in_labels: Vec<Label>,
}

/// Exhaustively enumerates the set of all selections satisfying the
/// reservation, slot, maximality, and priority conditions, by backtracking
/// over per-instance multiplicities. Errors out when the search exceeds
/// `node_limit` backtracking nodes; never truncates silently.
pub fn enumerate_selections(
    spec: &PSystemSpec,
    config: &Configuration,
    node_limit: u64,
) -> Result<BTreeSet<SelectionCore>, EngineError> {
    let parents = config.parents();
    let mut instances: Vec<Instance> = Vec::new();

    for m in config.membranes() {
        match spec.mode {
            Mode::Transition => {
                let rules = spec.transition_rules(&m.label);
                let closure = spec.priority_closure(&m.label);
                let child_labels: BTreeSet<&Label> =
                    m.children.iter().map(|c| &c.label).collect();
                let applicable_raw = |i: usize| -> bool {
                    let r = &rules[i];
                    m.contents.contains(&r.lhs)
                        && r.rhs.iter().all(|(_, t)| match t {
                            Target::In(l) => child_labels.contains(l),
                            _ => true,
                        })
                };
                for rule in rules.iter() {
                    // Strong priority, fixed at step start: skip a rule
                    // dominated by any rule applicable to the full contents.
                    let blocked = rules.iter().enumerate().any(|(j, higher)| {
                        closure.contains(&(higher.name.clone(), rule.name.clone()))
                            && applicable_raw(j)
                    });
                    if blocked {
                        continue;
                    }
                    instances.push(Instance {
                        membrane: m.id,
                        rule: rule.name.clone(),
                        pool: m.id,
                        lhs: rule.lhs.clone(),
                        structural: false,
                        in_labels: rule
                            .rhs
                            .iter()
                            .filter_map(|(_, t)| match t {
                                Target::In(l) => Some(l.clone()),
                                _ => None,
                            })
                            .collect(),
                    });
                }
            }
            Mode::Active => {
                for rule in spec.active_rules(&m.label) {
                    let trigger = rule.op.trigger().clone();
                    let mut lhs = Multiset::new();
                    lhs.add(&trigger, 1);
                    let pool = match &rule.op {
                        ActiveOp::SendIn { .. } => match parents.get(&m.id) {
                            Some(&p) => p,
                            None => continue, // send-in cannot target the skin
                        },
                        _ => m.id,
                    };
                    if matches!(rule.op, ActiveOp::Divide { .. }) && !m.is_elementary() {
                        continue;
                    }
                    if matches!(rule.op, ActiveOp::Dissolve { .. } | ActiveOp::Divide { .. })
                        && m.id == config.skin.id
                    {
                        continue;
                    }
                    instances.push(Instance {
                        membrane: m.id,
                        rule: rule.name.clone(),
                        pool,
                        lhs,
                        structural: rule.op.is_structural(),
                        in_labels: Vec::new(),
                    });
                }
            }
        }
    }

    let mut pools: BTreeMap<u64, Multiset> =
        config.membranes().iter().map(|m| (m.id, m.contents.clone())).collect();
    let children_ok: BTreeMap<u64, BTreeSet<Label>> = config
        .membranes()
        .iter()
        .map(|m| (m.id, m.children.iter().map(|c| c.label.clone()).collect()))
        .collect();

    // An instance is applicable (once more) iff its pool covers its lhs, its
    // slot is free when structural, and its in-targets have live children.
    let applicable = |inst: &Instance,
                      pools: &BTreeMap<u64, Multiset>,
                      slots: &BTreeSet<u64>|
     -> bool {
        if inst.structural && slots.contains(&inst.membrane) {
            return false;
        }
        if !inst.in_labels.iter().all(|l| children_ok[&inst.membrane].contains(l)) {
            return false;
        }
        pools[&inst.pool].contains(&inst.lhs)
    };

    let mut out: BTreeSet<SelectionCore> = BTreeSet::new();
    let mut nodes: u64 = 0;
    let mut slots: BTreeSet<u64> = BTreeSet::new();
    let mut current: Vec<u64> = vec![0; instances.len()];

    fn rec(
        idx: usize,
        instances: &[Instance],
        pools: &mut BTreeMap<u64, Multiset>,
        slots: &mut BTreeSet<u64>,
        current: &mut Vec<u64>,
        out: &mut BTreeSet<SelectionCore>,
        nodes: &mut u64,
        node_limit: u64,
        applicable: &dyn Fn(&Instance, &BTreeMap<u64, Multiset>, &BTreeSet<u64>) -> bool,
    ) -> Result<(), EngineError> {
        *nodes += 1;
        if *nodes > node_limit {
            return Err(EngineError::OracleTooLarge { limit: node_limit });
        }
        if idx == instances.len() {
            // Maximality: nothing is applicable to the leftovers.
            if instances.iter().all(|inst| !applicable(inst, pools, slots)) {
                let mut sel: SelectionCore = BTreeMap::new();
                for (i, &k) in current.iter().enumerate() {
                    if k > 0 {
                        *sel
                            .entry(instances[i].membrane)
                            .or_default()
                            .entry(instances[i].rule.clone())
                            .or_insert(0) += k;
                    }
                }
                out.insert(sel);
            }
            return Ok(());
        }
        let inst = &instances[idx];
        let mut k = 0;
        loop {
            current[idx] = k;
            rec(idx + 1, instances, pools, slots, current, out, nodes, node_limit, applicable)?;
            // Try one more application of this instance.
            if !applicable(inst, pools, slots) {
                break;
            }
            pools.get_mut(&inst.pool).unwrap().remove_all(&inst.lhs).unwrap();
            if inst.structural {
                slots.insert(inst.membrane);
            }
            k += 1;
        }
        // Undo all k applications.
        for _ in 0..k {
            pools.get_mut(&inst.pool).unwrap().add_all(&inst.lhs);
        }
        if inst.structural && k > 0 {
            slots.remove(&inst.membrane);
        }
        current[idx] = 0;
        Ok(())
    }

    rec(
        0,
        &instances,
        &mut pools,
        &mut slots,
        &mut current,
        &mut out,
        &mut nodes,
        node_limit,
        &applicable,
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn selections_of(text: &str) -> BTreeSet<SelectionCore> {
        let spec = parse(text).unwrap();
        let config = Configuration::initial(&spec);
        enumerate_selections(&spec, &config, DEFAULT_NODE_LIMIT).unwrap()
    }

    fn sel(entries: &[(u64, &[(&str, u64)])]) -> SelectionCore {
        entries
            .iter()
            .map(|(id, rules)| {
                (*id, rules.iter().map(|(n, k)| (n.to_string(), *k)).collect())
            })
            .collect()
    }

    #[test]
    fn grow_pack_has_exactly_two_maximal_selections() {
        let got = selections_of(
            "model transition\nalphabet a a4\nmu [1]\ninit 1: a*2\n\
             rule 1 @grow: a -> a a\nrule 1 @pack: a a -> a4\n",
        );
        let want: BTreeSet<SelectionCore> = [
            sel(&[(0, &[("grow", 2)])]),
            sel(&[(0, &[("pack", 1)])]),
        ]
        .into_iter()
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn empty_region_yields_only_the_empty_selection() {
        let got = selections_of(
            "model transition\nalphabet a\nmu [1]\nrule 1 @r: a -> a\n",
        );
        let want: BTreeSet<SelectionCore> = [SelectionCore::new()].into_iter().collect();
        assert_eq!(got, want);
    }

    #[test]
    fn leftover_single_object_cannot_fire_pair_rule() {
        let got = selections_of(
            "model transition\nalphabet a4\nmu [1]\ninit 1: a4*3\n\
             rule 1 @consume: a4 a4 -> a4\n",
        );
        let want: BTreeSet<SelectionCore> =
            [sel(&[(0, &[("consume", 1)])])].into_iter().collect();
        assert_eq!(got, want);
    }

    #[test]
    fn strong_priority_blocks_for_the_whole_step() {
        let got = selections_of(
            "model transition\nalphabet a t yes no\nmu [1]\ninit 1: a*3 t\n\
             rule 1 @r1: a a -> .\nrule 1 @r2: a t -> no!out\nrule 1 @r3: t -> yes!out\n\
             prio 1: r1 > r2\nprio 1: r2 > r3\nprio 1: r1 > r3\nrecognizer yes no\n",
        );
        let want: BTreeSet<SelectionCore> = [sel(&[(0, &[("r1", 1)])])].into_iter().collect();
        assert_eq!(got, want);
    }

    #[test]
    fn structural_slot_limits_one_per_membrane() {
        // Two triggers present, but the membrane can only divide once.
        let got = selections_of(
            "model active\nalphabet a\nmu [1[2]]\ninit 2: a*2\n\
             arule 2 div @d: a -> a | a\n",
        );
        let want: BTreeSet<SelectionCore> = [sel(&[(1, &[("d", 1)])])].into_iter().collect();
        assert_eq!(got, want);
    }

    #[test]
    fn node_limit_is_an_error_not_truncation() {
        let spec = parse(
            "model transition\nalphabet a\nmu [1]\ninit 1: a*20\nrule 1 @r: a -> a\n",
        )
        .unwrap();
        let config = Configuration::initial(&spec);
        assert!(matches!(
            enumerate_selections(&spec, &config, 5),
            Err(EngineError::OracleTooLarge { limit: 5 })
        ));
    }
}
