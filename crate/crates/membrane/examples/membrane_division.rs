//! Active membranes: elementary division doubles the membrane count every
//! step, so k steps yield 2^k membranes — the exponential-workspace trick.

use membrane::config::Configuration;
use membrane::engine;
use membrane::parser::parse;

fn main() {
    let spec = parse(&membrane::bundled::doubling()).unwrap();
    let mut config = Configuration::initial(&spec);
    for step in 1..=10u32 {
        config = engine::step(&spec, &config, 0).unwrap();
        let inner = config.skin.children.len();
        println!("step {step:>2}: {inner:>5} membranes");
        assert_eq!(inner, 2usize.pow(step));
    }
    // Instance ids are gapless: pre-order seeding plus consecutive
    // assignment at each division.
    let mut ids: Vec<u64> = config.membranes().iter().map(|m| m.id).collect();
    ids.sort_unstable();
    assert!(ids.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(config.next_id, ids.last().unwrap() + 1);
    println!("ids dense up to {}", config.next_id);
}
