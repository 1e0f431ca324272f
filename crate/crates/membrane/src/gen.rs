//! Seeded generation of small random systems, used to fuzz the selection
//! paths against the enumeration oracle and the parser against itself.
//! Every generated spec passes validation by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{
    ActiveOp, ActiveRule, Label, MembraneTemplate, Mode, PSystemSpec, Rules, Target,
    TransitionRule,
};
use crate::multiset::{Multiset, Symbol};

/// Shape knobs for generated systems. Defaults keep state spaces small
/// enough for exhaustive oracle enumeration.
#[derive(Clone, Debug)]
pub struct GenOptions {
    /// Pick only transition mode (otherwise a coin flip per spec).
    pub transition_only: bool,
    /// Restrict transition products to the `here` target.
    pub here_only: bool,
    /// Permit rules with empty right sides.
    pub allow_erasing: bool,
    pub max_regions: usize,
    pub max_rules: usize,
    /// Cap on total initial objects across all regions.
    pub max_objects: u64,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            transition_only: false,
            here_only: false,
            allow_erasing: true,
            max_regions: 3,
            max_rules: 6,
            max_objects: 6,
        }
    }
}

const SYMBOL_POOL: &[&str] = &["a", "b", "c", "d"];

/// Generates a small random valid system. Same seed and options, same spec.
pub fn generate(seed: u64, opts: &GenOptions) -> PSystemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_syms = rng.random_range(2..=SYMBOL_POOL.len().min(4));
    let alphabet: Vec<Symbol> =
        SYMBOL_POOL[..n_syms].iter().map(|s| Symbol::new(s).unwrap()).collect();
    let pick_sym = |rng: &mut ChaCha8Rng| alphabet[rng.random_range(0..alphabet.len())].clone();

    let n_regions = rng.random_range(1..=opts.max_regions.max(1));
    let labels: Vec<Label> =
        (1..=n_regions).map(|i| Label::new(&i.to_string()).unwrap()).collect();
    // Each non-root region hangs off a random earlier region.
    let mut parent_of: Vec<usize> = vec![0; n_regions];
    for (i, slot) in parent_of.iter_mut().enumerate().skip(1) {
        *slot = rng.random_range(0..i);
    }
    fn build_tree(i: usize, labels: &[Label], parent_of: &[usize]) -> MembraneTemplate {
        let children = (0..parent_of.len())
            .filter(|&j| j != 0 && parent_of[j] == i)
            .map(|j| build_tree(j, labels, parent_of))
            .collect();
        MembraneTemplate { label: labels[i].clone(), children }
    }
    let mu = build_tree(0, &labels, &parent_of);

    let mode = if opts.transition_only || rng.random_bool(0.5) {
        Mode::Transition
    } else {
        Mode::Active
    };

    let mut spec = PSystemSpec::new(mode, alphabet.iter().cloned().collect(), mu);

    let mut budget = opts.max_objects;
    for label in &labels {
        if budget == 0 {
            break;
        }
        let n = rng.random_range(0..=budget.min(3));
        budget -= n;
        if n > 0 {
            let mut mset = Multiset::new();
            for _ in 0..n {
                mset.add(&pick_sym(&mut rng), 1);
            }
            spec.initial.insert(label.clone(), mset);
        }
    }

    let n_rules = rng.random_range(0..=opts.max_rules);
    match mode {
        Mode::Transition => {
            let mut per_region: std::collections::BTreeMap<Label, Vec<TransitionRule>> =
                Default::default();
            for k in 0..n_rules {
                let region_idx = rng.random_range(0..n_regions);
                let region = labels[region_idx].clone();
                let mut lhs = Multiset::new();
                for _ in 0..rng.random_range(1..=2) {
                    lhs.add(&pick_sym(&mut rng), 1);
                }
                let child_labels: Vec<Label> = (0..n_regions)
                    .filter(|&j| j != 0 && parent_of[j] == region_idx)
                    .map(|j| labels[j].clone())
                    .collect();
                let min_products = if opts.allow_erasing { 0 } else { 1 };
                let mut rhs = Vec::new();
                for _ in 0..rng.random_range(min_products..=2) {
                    let sym = pick_sym(&mut rng);
                    let target = if opts.here_only {
                        Target::Here
                    } else {
                        match rng.random_range(0..4) {
                            0 => Target::Out,
                            1 if !child_labels.is_empty() => Target::In(
                                child_labels[rng.random_range(0..child_labels.len())].clone(),
                            ),
                            _ => Target::Here,
                        }
                    };
                    rhs.push((sym, target));
                }
                per_region.entry(region.clone()).or_default().push(TransitionRule {
                    name: format!("r{}", k + 1),
                    region,
                    lhs,
                    rhs,
                });
            }
            // Occasional priority pairs, always earlier-name over later-name
            // within a region, so the relation stays acyclic.
            for (region, rules) in &per_region {
                if rules.len() >= 2 && rng.random_bool(0.3) {
                    let lo = rng.random_range(1..rules.len());
                    let hi = rng.random_range(0..lo);
                    spec.priorities.entry(region.clone()).or_default().insert((
                        rules[hi].name.clone(),
                        rules[lo].name.clone(),
                    ));
                }
            }
            spec.rules = Rules::Transition(per_region);
        }
        Mode::Active => {
            let mut per_label: std::collections::BTreeMap<Label, Vec<ActiveRule>> =
                Default::default();
            for k in 0..n_rules {
                let label_idx = rng.random_range(0..n_regions);
                let label = labels[label_idx].clone();
                let trigger = pick_sym(&mut rng);
                // The skin only evolves and sends out.
                let kinds: u32 = if label_idx == 0 { 2 } else { 5 };
                let op = match rng.random_range(0..kinds) {
                    0 => {
                        let mut products = Multiset::new();
                        let min = if opts.allow_erasing { 0 } else { 1 };
                        for _ in 0..rng.random_range(min..=2) {
                            products.add(&pick_sym(&mut rng), 1);
                        }
                        ActiveOp::Evolve { trigger, products }
                    }
                    1 => ActiveOp::SendOut {
                        trigger,
                        product: rng.random_bool(0.7).then(|| pick_sym(&mut rng)),
                    },
                    2 => ActiveOp::SendIn {
                        trigger,
                        product: rng.random_bool(0.7).then(|| pick_sym(&mut rng)),
                    },
                    3 => ActiveOp::Dissolve {
                        trigger,
                        product: rng.random_bool(0.7).then(|| pick_sym(&mut rng)),
                    },
                    _ => ActiveOp::Divide {
                        trigger,
                        left: pick_sym(&mut rng),
                        right: pick_sym(&mut rng),
                    },
                };
                per_label.entry(label.clone()).or_default().push(ActiveRule {
                    name: format!("r{}", k + 1),
                    label,
                    op,
                });
            }
            spec.rules = Rules::Active(per_label);
        }
    }

    debug_assert_eq!(crate::model::validate_spec(&spec), Vec::new());
    spec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_spec;
    use crate::parser::{parse, serialize};

    #[test]
    fn generated_specs_are_always_valid() {
        let opts = GenOptions::default();
        for seed in 0..200 {
            let spec = generate(seed, &opts);
            assert_eq!(validate_spec(&spec), Vec::new(), "seed {seed}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let opts = GenOptions::default();
        for seed in [0, 1, 42, u64::MAX] {
            assert_eq!(generate(seed, &opts), generate(seed, &opts));
        }
    }

    #[test]
    fn generated_specs_roundtrip_through_the_dsl() {
        let opts = GenOptions::default();
        for seed in 0..100 {
            let spec = generate(seed, &opts);
            let text = serialize(&spec);
            assert_eq!(parse(&text).unwrap(), spec, "seed {seed}\n{text}");
        }
    }

    #[test]
    fn options_are_honored() {
        let opts = GenOptions {
            transition_only: true,
            here_only: true,
            allow_erasing: false,
            ..GenOptions::default()
        };
        for seed in 0..100 {
            let spec = generate(seed, &opts);
            assert_eq!(spec.mode, Mode::Transition);
            if let Rules::Transition(per_region) = &spec.rules {
                for rules in per_region.values() {
                    for rule in rules {
                        assert!(!rule.rhs.is_empty());
                        assert!(rule.rhs.iter().all(|(_, t)| *t == Target::Here));
                    }
                }
            }
        }
    }
}
