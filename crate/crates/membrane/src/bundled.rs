//! Bundled example systems in canonical DSL text.

/// Producer–consumer system: region 3 grows `a`s and packs pairs into `a4`,
/// which regions 3, 2, and 1 relay into region 4, the only region that can
/// consume them (two at a time).
pub fn pc2() -> String {
    "\
model transition
alphabet a a4
mu [1[2[3]][4]]
init 3: a
rule 1 @route: a4 -> a4!in(4)
rule 2 @ship2: a4 -> a4!out
rule 3 @grow: a -> a a
rule 3 @pack: a*2 -> a4
rule 3 @ship3: a4 -> a4!out
rule 4 @consume: a4*2 -> a4
output env
"
    .to_string()
}

/// Clock-splitting alternation: a single token `c` ping-pongs between the
/// two regions, so exactly one region applies rules at each step. The rule
/// set is a construction — the original sketch names no explicit rules.
pub fn sync() -> String {
    "\
model transition
alphabet a c
mu [1[2]]
init 1: a c
rule 1 @tick1: a c -> a a c!in(2)
rule 1 @fallback1: c -> c!in(2)
rule 2 @tick2: a c -> a a c!out
rule 2 @fallback2: c -> c!out
prio 1: tick1 > fallback1
prio 2: tick2 > fallback2
output env
"
    .to_string()
}

/// Parity recognizer with the input `a*k` baked in: halves the `a`s away,
/// then the token `t` reports `yes` (even) or `no` (odd) to the environment.
pub fn even_k(k: u64) -> String {
    let init = if k == 0 {
        "init 1: t".to_string()
    } else {
        format!("init 1: a*{k} t")
    };
    format!(
        "\
model transition
alphabet a no t yes
mu [1]
{init}
rule 1 @r1: a*2 -> .
rule 1 @r2: a t -> no!out
rule 1 @r3: t -> yes!out
prio 1: r1 > r2
prio 1: r1 > r3
prio 1: r2 > r3
output env
recognizer yes no
"
    )
}

/// Active-membranes growth: membrane 2 divides every step, reaching 2^k
/// membranes after k steps, each holding one `a`.
pub fn doubling() -> String {
    "\
model active
alphabet a
mu [1[2]]
init 2: a
arule 2 div @d: a -> a | a
output env
"
    .to_string()
}

/// Looks up a bundled system by name. `even_k<N>` is templated for any N.
pub fn by_name(name: &str) -> Option<String> {
    match name {
        "pc2" => Some(pc2()),
        "sync" => Some(sync()),
        "doubling" => Some(doubling()),
        _ => name
            .strip_prefix("even_k")
            .and_then(|n| n.parse::<u64>().ok())
            .map(even_k),
    }
}

/// Names accepted by [`by_name`] (the even family abbreviated).
pub const NAMES: &[&str] = &["pc2", "sync", "doubling", "even_k<N>"];
