//! Worker-count independence: the same (spec, seed, budget) produces a
//! byte-identical trace whether stepped by 1, 2, or 8 worker threads.

use membrane::engine;
use membrane::parser::parse;

fn main() {
    // The doubling system grows exponentially; keep its budget small.
    for (name, budget) in [("pc2", 50), ("sync", 50), ("doubling", 10), ("even_k20", 50)] {
        let spec = parse(&membrane::bundled::by_name(name).unwrap()).unwrap();
        let reference = engine::run(&spec, 7, budget, 1).unwrap().0.to_jsonl();
        for workers in [2, 8] {
            let trace = engine::run(&spec, 7, budget, workers).unwrap().0.to_jsonl();
            assert_eq!(trace, reference, "{name} with {workers} workers diverged");
        }
        println!("{name}: {} trace bytes, identical for 1/2/8 workers", reference.len());
    }
}
