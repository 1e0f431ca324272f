//! Parse a system from DSL text, validate it, run it to halting, and print
//! the step-by-step trace.

use membrane::engine;
use membrane::parser::parse;

fn main() {
    // Region 1 doubles `a`s until `t` turns into the stop token `s`; `stop`
    // outranks `grow`, so from then on one `a` ships to the environment per
    // step until none remain and the system halts.
    let text = "\
model transition
alphabet a s t
mu [1]
init 1: a*2 t
rule 1 @grow: a -> a a
rule 1 @fire: t -> s
rule 1 @stop: a s -> a!out s
prio 1: stop > grow
output env
";
    let spec = parse(text).expect("well-formed text");
    assert!(membrane::model::validate_spec(&spec).is_empty());

    let (trace, result) = engine::run(&spec, 42, 100, 1).expect("valid spec");
    print!("{}", trace.to_jsonl());
    println!(
        "halted after {} steps with answer {}",
        result.steps,
        result.answer.as_str()
    );
}
