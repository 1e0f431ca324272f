//! Audit the greedy selection stage against the exhaustive oracle: every
//! selection the engine makes must be one of the maximal selections the
//! oracle enumerates, for many random systems and seeds.

use membrane::config::Configuration;
use membrane::engine::oracle::{enumerate_selections, DEFAULT_NODE_LIMIT};
use membrane::engine::{apply, select};
use membrane::gen::{generate, GenOptions};

fn main() {
    let opts = GenOptions::default();
    let mut checked = 0u64;
    for spec_seed in 0..50 {
        let spec = generate(spec_seed, &opts);
        for run_seed in 0..20 {
            let mut config = Configuration::initial(&spec);
            for _ in 0..3 {
                let legal = enumerate_selections(&spec, &config, DEFAULT_NODE_LIMIT).unwrap();
                let selection = select(&spec, &config, run_seed);
                assert!(
                    legal.contains(&selection.core()),
                    "spec {spec_seed} seed {run_seed} step {}: {selection:?} not in {legal:?}",
                    config.step
                );
                checked += 1;
                if selection.is_empty() {
                    break;
                }
                config = apply(&spec, &config, &selection, run_seed).unwrap();
            }
        }
    }
    println!("audited {checked} selections: all maximal");
}
