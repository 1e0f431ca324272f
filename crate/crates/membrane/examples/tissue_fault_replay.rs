//! The tissue runtime: independent instances with local clocks, a scripted
//! failure, and self-reproduction — the replica replays the original's
//! input log to the failure clock and lands in the exact same state.

use membrane::model::Label;
use membrane::mos::{EventLog, FaultPoint, MosInstance, Tissue};
use membrane::multiset::{Multiset, Symbol};
use membrane::parser::parse;

fn main() {
    let spec = parse(&membrane::bundled::pc2()).unwrap();

    // Solo instance: run a few ticks, inject objects mid-flight, reproduce,
    // replay, compare states byte for byte.
    let mut log = EventLog::new();
    let mut inst = MosInstance::create("solo", spec.clone(), 7, &mut log).unwrap();
    for _ in 0..3 {
        inst.tick(&mut log).unwrap();
    }
    let payload = Multiset::from_pairs([(Symbol::new("a").unwrap(), 4)]);
    inst.inject(payload, Label::new("3").unwrap(), &mut log).unwrap();
    for _ in 0..3 {
        inst.tick(&mut log).unwrap();
    }
    let mut replica = inst.reproduce(&mut log);
    replica.replay_to(inst.clock(), &mut log).unwrap();
    assert_eq!(
        replica.current.canonical_serialize(),
        inst.current.canonical_serialize()
    );
    println!("replica {} replayed to clock {} exactly", replica.name, replica.clock());

    // Supervised tissue: instance b fails at clock 4; the supervisor
    // reproduces it and the replica finishes the job.
    let mut tissue = Tissue::new();
    for (name, seed) in [("a", 1u64), ("b", 2), ("c", 3)] {
        tissue.add_instance("workers", name, spec.clone(), seed).unwrap();
    }
    tissue
        .set_fault_plan(vec![FaultPoint { instance: "b".into(), at: 4 }])
        .unwrap();
    let summaries = tissue.run(50).unwrap();
    for s in &summaries {
        println!("{}/{}: {} at clock {}", s.group, s.name, s.status.as_str(), s.clock);
    }
    assert!(summaries.iter().any(|s| s.name == "b.r1"));
    print!("{}", tissue.log.to_jsonl());
}
