//! Bounded breadth-first exploration of the computation tree: nodes are
//! canonical configurations, edges are maximal selections from the oracle.

use std::collections::BTreeMap;

use crate::config::Configuration;
use crate::engine::oracle::enumerate_selections;
use crate::engine::{apply, result, EngineError, RunResult, RunStatus, Selection};
use crate::model::PSystemSpec;

#[derive(Clone, Debug)]
pub struct ExploreReport {
    /// Number of distinct configurations per depth, root = depth 0.
    pub frontier_sizes: Vec<usize>,
    pub nodes_total: usize,
    /// Halting leaves: canonical configuration and its result.
    pub halting: Vec<(String, RunResult)>,
    /// True when a depth or node bound cut the tree short.
    pub truncated: bool,
}

/// Expands the computation tree breadth-first, merging duplicate
/// configurations per depth by canonical serialization. Exploration applies
/// each oracle selection with a fixed resolver stream, so runs are
/// deterministic; it does not branch over alternative in-target choices.
pub fn explore(
    spec: &PSystemSpec,
    max_depth: u64,
    max_nodes: usize,
    oracle_node_limit: u64,
) -> Result<ExploreReport, EngineError> {
    let violations = crate::model::validate_spec(spec);
    if !violations.is_empty() {
        return Err(EngineError::InvalidSpec(violations));
    }
    let root = Configuration::initial(spec);
    let mut frontier: BTreeMap<String, Configuration> =
        [(root.canonical_serialize(), root)].into();
    let mut report = ExploreReport {
        frontier_sizes: vec![1],
        nodes_total: 1,
        halting: Vec::new(),
        truncated: false,
    };

    for _depth in 0..max_depth {
        let mut next: BTreeMap<String, Configuration> = BTreeMap::new();
        for (canonical, config) in &frontier {
            let selections = enumerate_selections(spec, config, oracle_node_limit)?;
            for core in &selections {
                if core.is_empty() {
                    report
                        .halting
                        .push((canonical.clone(), result(spec, config, RunStatus::Halted)));
                    continue;
                }
                let selection = Selection { per_membrane: core.clone(), in_targets: BTreeMap::new() };
                let child = apply(spec, config, &selection, 0)?;
                if report.nodes_total + next.len() >= max_nodes
                    && !next.contains_key(&child.canonical_serialize())
                {
                    report.truncated = true;
                    continue;
                }
                next.entry(child.canonical_serialize()).or_insert(child);
            }
        }
        report.nodes_total += next.len();
        if next.is_empty() {
            return Ok(report);
        }
        report.frontier_sizes.push(next.len());
        frontier = next;
    }

    // Depth 0 asks for the root alone; that is never a truncation.
    if max_depth == 0 {
        return Ok(report);
    }
    // Depth bound reached with live configurations still unexpanded.
    let unexplored = frontier
        .values()
        .any(|c| matches!(enumerate_selections(spec, c, oracle_node_limit), Ok(s) if s.iter().any(|core| !core.is_empty())));
    if unexplored {
        report.truncated = true;
    } else {
        for (canonical, config) in &frontier {
            report
                .halting
                .push((canonical.clone(), result(spec, config, RunStatus::Halted)));
        }
    }
    Ok(report)
}

/// Distinct result payloads over all halting leaves.
pub fn distinct_results(report: &ExploreReport) -> Vec<&RunResult> {
    let mut seen: Vec<&RunResult> = Vec::new();
    for (_, r) in &report.halting {
        if !seen.iter().any(|s| **s == *r) {
            seen.push(r);
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::oracle::DEFAULT_NODE_LIMIT;
    use crate::engine::Answer;
    use crate::parser::parse;

    #[test]
    fn ruleless_system_is_a_single_halting_root() {
        let spec = parse("model transition\nalphabet a\nmu [1]\ninit 1: a\n").unwrap();
        let report = explore(&spec, 3, 1000, DEFAULT_NODE_LIMIT).unwrap();
        assert_eq!(report.nodes_total, 1);
        assert_eq!(report.halting.len(), 1);
        assert!(!report.truncated);
    }

    #[test]
    fn parity_leaves_all_agree() {
        let spec = parse(&crate::bundled::even_k(4)).unwrap();
        let report = explore(&spec, 3, 10_000, DEFAULT_NODE_LIMIT).unwrap();
        assert!(!report.halting.is_empty());
        assert!(report.halting.iter().all(|(_, r)| r.answer == Answer::Yes));
    }

    #[test]
    fn depth_bound_marks_truncation() {
        // a -> a a never halts; depth 1 leaves a live frontier.
        let spec =
            parse("model transition\nalphabet a\nmu [1]\ninit 1: a\nrule 1 @r: a -> a a\n")
                .unwrap();
        let report = explore(&spec, 1, 1000, DEFAULT_NODE_LIMIT).unwrap();
        assert!(report.truncated);
        assert!(report.halting.is_empty());
    }
}
