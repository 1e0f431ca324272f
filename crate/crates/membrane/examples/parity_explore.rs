//! Recognizer systems and exhaustive exploration: for each input size k,
//! expand the whole computation tree of the parity recognizer and confirm
//! every halting leaf reports the same answer.

use membrane::engine::explore::{distinct_results, explore};
use membrane::engine::oracle::DEFAULT_NODE_LIMIT;
use membrane::engine::Answer;
use membrane::parser::parse;

fn main() {
    for k in 0..=10u64 {
        let spec = parse(&membrane::bundled::even_k(k)).unwrap();
        let report = explore(&spec, 4, 100_000, DEFAULT_NODE_LIMIT).unwrap();
        let results = distinct_results(&report);
        assert_eq!(results.len(), 1, "a recognizer must be confluent in its answer");
        let answer = results[0].answer;
        assert_eq!(answer == Answer::Yes, k % 2 == 0);
        println!(
            "k={k:>2}: {} nodes, {} halting leaves, answer {}",
            report.nodes_total,
            report.halting.len(),
            answer.as_str()
        );
    }
}
