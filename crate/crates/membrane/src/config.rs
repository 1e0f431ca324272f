//! Instantaneous states: membrane-instance trees, the environment, and the
//! canonical text form used by traces and configuration equality.

use std::collections::BTreeMap;

use crate::model::{Label, PSystemSpec};
use crate::multiset::Multiset;

/// A live membrane. Division makes labels non-unique after step 0, so
/// identity is a creation-ordered instance id.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct MembraneInstance {
    pub id: u64,
    pub label: Label,
    pub contents: Multiset,
    pub children: Vec<MembraneInstance>,
}

impl MembraneInstance {
    pub fn is_elementary(&self) -> bool {
        self.children.is_empty()
    }
}

/// An instantaneous state of the system.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Configuration {
    pub skin: MembraneInstance,
    pub environment: Multiset,
    pub step: u64,
    pub halted: bool,
    pub next_id: u64,
}

impl Configuration {
    /// Builds the initial configuration from omega, ids assigned by pre-order
    /// traversal of mu starting at 0.
    pub fn initial(spec: &PSystemSpec) -> Configuration {
        let mut next_id = 0;
        let skin = build(&spec.mu, spec, &mut next_id);
        Configuration {
            skin,
            environment: Multiset::new(),
            step: 0,
            halted: false,
            next_id,
        }
    }

    /// Pre-order walk of all live membranes.
    pub fn membranes(&self) -> Vec<&MembraneInstance> {
        let mut out = Vec::new();
        let mut stack = vec![&self.skin];
        while let Some(node) = stack.pop() {
            out.push(node);
            for c in node.children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    pub fn membrane(&self, id: u64) -> Option<&MembraneInstance> {
        self.membranes().into_iter().find(|m| m.id == id)
    }

    pub fn membrane_mut(&mut self, id: u64) -> Option<&mut MembraneInstance> {
        fn rec(node: &mut MembraneInstance, id: u64) -> Option<&mut MembraneInstance> {
            if node.id == id {
                return Some(node);
            }
            node.children.iter_mut().find_map(|c| rec(c, id))
        }
        rec(&mut self.skin, id)
    }

    /// Map from instance id to parent instance id; skin has none.
    pub fn parents(&self) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        let mut stack = vec![&self.skin];
        while let Some(node) = stack.pop() {
            for c in &node.children {
                out.insert(c.id, node.id);
                stack.push(c);
            }
        }
        out
    }

    /// The lowest-id live membrane with the given label.
    pub fn lowest_with_label(&self, label: &Label) -> Option<&MembraneInstance> {
        self.membranes().into_iter().filter(|m| &m.label == label).min_by_key(|m| m.id)
    }

    /// Deterministic text form: membranes in pre-order by tree position, one
    /// `id label {mset}` line each, environment last. Two configurations are
    /// equal iff their serializations are byte-equal.
    pub fn canonical_serialize(&self) -> String {
        let mut out = String::new();
        for m in self.membranes() {
            out.push_str(&format!("{} {} {}\n", m.id, m.label, m.contents.canonical()));
        }
        out.push_str(&format!("env {}", self.environment.canonical()));
        out
    }
}

fn build(
    template: &crate::model::MembraneTemplate,
    spec: &PSystemSpec,
    next_id: &mut u64,
) -> MembraneInstance {
    let id = *next_id;
    *next_id += 1;
    let contents = spec.initial.get(&template.label).cloned().unwrap_or_default();
    let children = template.children.iter().map(|c| build(c, spec, next_id)).collect();
    MembraneInstance { id, label: template.label.clone(), contents, children }
}
