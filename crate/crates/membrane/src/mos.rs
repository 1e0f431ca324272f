//! The "membrane OS" layer: independent engine instances with local clocks,
//! input connection points, failure-triggered self-reproduction with
//! deterministic replay, and a supervised tissue of grouped instances
//! linked only by a monitoring event stream.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Configuration;
use crate::engine::{self, RunResult, RunStatus};
use crate::model::{Label, PSystemSpec, Violation};
use crate::multiset::Multiset;

#[derive(Debug, Error)]
pub enum MosError {
    #[error("invalid spec:\n{}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n"))]
    InvalidSpec(Vec<Violation>),
    #[error("duplicate instance name {0:?}")]
    DuplicateName(String),
    #[error("instance {0} is not running")]
    NotRunning(String),
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("symbol {0} not in the instance's alphabet")]
    UnknownSymbol(String),
    #[error("fault plan references unknown instance {0:?}")]
    UnknownInstance(String),
    #[error(transparent)]
    Engine(#[from] engine::EngineError),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum MosStatus {
    Running,
    Halted,
    Failed,
}

impl MosStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            MosStatus::Running => "running",
            MosStatus::Halted => "halted",
            MosStatus::Failed => "failed",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EventKind {
    Started,
    Stepped,
    Halted,
    Failed,
    Reproduced,
    Injected,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Started => "started",
            EventKind::Stepped => "stepped",
            EventKind::Halted => "halted",
            EventKind::Failed => "failed",
            EventKind::Reproduced => "reproduced",
            EventKind::Injected => "injected",
        }
    }
}

/// Control and monitoring only; no object payloads travel on the cord.
#[derive(Clone, Debug)]
pub struct MonitorEvent {
    pub seq: u64,
    pub kind: EventKind,
    pub instance: String,
    pub clock: u64,
    pub detail: String,
}

/// Totally ordered event sink; sequence numbers are gapless from 0.
#[derive(Default, Debug)]
pub struct EventLog {
    next_seq: u64,
    pub events: Vec<MonitorEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    fn emit(&mut self, kind: EventKind, instance: &str, clock: u64, detail: String) {
        self.events.push(MonitorEvent {
            seq: self.next_seq,
            kind,
            instance: instance.to_string(),
            clock,
            detail,
        });
        self.next_seq += 1;
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(
                &serde_json::json!({
                    "seq": e.seq,
                    "kind": e.kind.as_str(),
                    "instance": e.instance,
                    "clock": e.clock,
                    "detail": e.detail,
                })
                .to_string(),
            );
            out.push('\n');
        }
        out
    }
}

/// One logged injection: stamped with the local clock at arrival, applied
/// at the next step boundary.
#[derive(Clone, Debug)]
pub struct InputRecord {
    pub clock: u64,
    pub objects: Multiset,
    pub target: Label,
}

/// An engine instance with a local clock, input connection point, and an
/// append-only, replayable input log.
#[derive(Clone, Debug)]
pub struct MosInstance {
    pub name: String,
    pub spec: PSystemSpec,
    /// Initial-configuration snapshot copied to every reproduction.
    pub snapshot: Configuration,
    pub current: Configuration,
    pub seed: u64,
    pub input_log: Vec<InputRecord>,
    pub status: MosStatus,
    applied: usize,
    reproductions: u64,
}

impl MosInstance {
    pub fn create(
        name: &str,
        spec: PSystemSpec,
        seed: u64,
        log: &mut EventLog,
    ) -> Result<MosInstance, MosError> {
        let violations = crate::model::validate_spec(&spec);
        if !violations.is_empty() {
            return Err(MosError::InvalidSpec(violations));
        }
        let snapshot = Configuration::initial(&spec);
        log.emit(EventKind::Started, name, 0, String::new());
        Ok(MosInstance {
            name: name.to_string(),
            spec,
            current: snapshot.clone(),
            snapshot,
            seed,
            input_log: Vec::new(),
            status: MosStatus::Running,
            applied: 0,
            reproductions: 0,
        })
    }

    pub fn clock(&self) -> u64 {
        self.current.step
    }

    /// Accepts incoming data: logged now, landed in the lowest-id membrane
    /// with the target label at the next step boundary.
    pub fn inject(
        &mut self,
        objects: Multiset,
        target: Label,
        log: &mut EventLog,
    ) -> Result<(), MosError> {
        if self.status != MosStatus::Running {
            return Err(MosError::NotRunning(self.name.clone()));
        }
        if self.current.lowest_with_label(&target).is_none() {
            return Err(MosError::UnknownLabel(target.to_string()));
        }
        if let Some(sym) = objects.symbols().find(|s| !self.spec.alphabet.contains(s)) {
            return Err(MosError::UnknownSymbol(sym.to_string()));
        }
        let detail = format!("{} -> {}", objects.canonical(), target);
        self.input_log.push(InputRecord { clock: self.clock(), objects, target });
        log.emit(EventKind::Injected, &self.name, self.clock(), detail);
        Ok(())
    }

    fn land_pending(&mut self) -> Result<(), MosError> {
        while self.applied < self.input_log.len()
            && self.input_log[self.applied].clock <= self.clock()
        {
            let rec = self.input_log[self.applied].clone();
            let id = self
                .current
                .lowest_with_label(&rec.target)
                .map(|m| m.id)
                .ok_or_else(|| MosError::UnknownLabel(rec.target.to_string()))?;
            self.current
                .membrane_mut(id)
                .expect("id just found")
                .contents
                .add_all(&rec.objects);
            self.applied += 1;
        }
        Ok(())
    }

    /// Runs one engine step with streams keyed by (instance seed, local
    /// clock), after landing pending injections.
    pub fn tick(&mut self, log: &mut EventLog) -> Result<(), MosError> {
        if self.status != MosStatus::Running {
            return Err(MosError::NotRunning(self.name.clone()));
        }
        self.land_pending()?;
        let next = engine::step(&self.spec, &self.current, self.seed)?;
        if next.halted {
            self.current = next;
            self.status = MosStatus::Halted;
            log.emit(EventKind::Halted, &self.name, self.clock(), String::new());
        } else {
            self.current = next;
            log.emit(EventKind::Stepped, &self.name, self.clock(), String::new());
        }
        Ok(())
    }

    /// Renders a second version of this instance with the same spec, seed,
    /// initial snapshot, and a copy of the input log, named `<name>.rK`.
    pub fn reproduce(&mut self, log: &mut EventLog) -> MosInstance {
        self.reproductions += 1;
        let name = format!("{}.r{}", self.name, self.reproductions);
        log.emit(EventKind::Reproduced, &name, 0, format!("of {}", self.name));
        MosInstance {
            name,
            spec: self.spec.clone(),
            snapshot: self.snapshot.clone(),
            current: self.snapshot.clone(),
            seed: self.seed,
            input_log: self.input_log.clone(),
            status: MosStatus::Running,
            applied: 0,
            reproductions: 0,
        }
    }

    /// Replays ticks (with logged injections) until the local clock reaches
    /// `clock`. Replay determinism makes the result byte-equal to the
    /// original's configuration at that clock.
    pub fn replay_to(&mut self, clock: u64, log: &mut EventLog) -> Result<(), MosError> {
        while self.clock() < clock && self.status == MosStatus::Running {
            self.tick(log)?;
        }
        Ok(())
    }
}

/// A scripted failure: the named instance fails upon reaching this clock.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct FaultPoint {
    pub instance: String,
    pub at: u64,
}

pub fn parse_fault_plan(json: &str) -> Result<Vec<FaultPoint>, serde_json::Error> {
    serde_json::from_str(json)
}

#[derive(Clone, Debug)]
pub struct InstanceSummary {
    pub group: String,
    pub name: String,
    pub status: MosStatus,
    pub clock: u64,
    /// Present for halted and budget-exhausted instances.
    pub result: Option<RunResult>,
}

/// A supervised colony of instances grouped by task, linked only by the
/// monitoring cord. Failure handling: a failed instance is immediately
/// reproduced and the replica replayed to the failure clock, then resumed.
#[derive(Default, Debug)]
pub struct Tissue {
    pub groups: BTreeMap<String, Vec<MosInstance>>,
    pub log: EventLog,
    fault_plan: Vec<FaultPoint>,
}

impl Tissue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn instance_names(&self) -> BTreeSet<String> {
        self.groups
            .values()
            .flat_map(|is| is.iter().map(|i| i.name.clone()))
            .collect()
    }

    pub fn add_instance(
        &mut self,
        group: &str,
        name: &str,
        spec: PSystemSpec,
        seed: u64,
    ) -> Result<(), MosError> {
        if self.instance_names().contains(name) {
            return Err(MosError::DuplicateName(name.to_string()));
        }
        let instance = MosInstance::create(name, spec, seed, &mut self.log)?;
        self.groups.entry(group.to_string()).or_default().push(instance);
        Ok(())
    }

    /// Fault points must reference existing instances.
    pub fn set_fault_plan(&mut self, plan: Vec<FaultPoint>) -> Result<(), MosError> {
        let names = self.instance_names();
        for p in &plan {
            if !names.contains(&p.instance) {
                return Err(MosError::UnknownInstance(p.instance.clone()));
            }
        }
        self.fault_plan = plan;
        Ok(())
    }

    fn fault_at(&self, name: &str, clock: u64) -> bool {
        self.fault_plan.iter().any(|p| p.instance == name && p.at == clock)
    }

    /// Advances every instance independently (deterministic round-robin) to
    /// halt, failure, or the per-instance step budget. Failed instances are
    /// reproduced and their replicas replayed, then resumed.
    pub fn run(&mut self, budget: u64) -> Result<Vec<InstanceSummary>, MosError> {
        loop {
            let mut progressed = false;
            let group_names: Vec<String> = self.groups.keys().cloned().collect();
            for group in &group_names {
                let mut idx = 0;
                loop {
                    let len = self.groups[group].len();
                    if idx >= len {
                        break;
                    }
                    let (name, status, clock) = {
                        let inst = &self.groups[group][idx];
                        (inst.name.clone(), inst.status, inst.clock())
                    };
                    if status != MosStatus::Running || clock >= budget {
                        idx += 1;
                        continue;
                    }
                    {
                        let log = &mut self.log;
                        let inst = self.groups.get_mut(group).unwrap().get_mut(idx).unwrap();
                        inst.tick(log)?;
                    }
                    progressed = true;
                    let clock = self.groups[group][idx].clock();
                    if self.fault_at(&name, clock) {
                        let replica = {
                            let log = &mut self.log;
                            let inst =
                                self.groups.get_mut(group).unwrap().get_mut(idx).unwrap();
                            inst.status = MosStatus::Failed;
                            log.emit(EventKind::Failed, &name, clock, String::new());
                            let mut replica = inst.reproduce(log);
                            replica.replay_to(clock, log)?;
                            replica
                        };
                        self.groups.get_mut(group).unwrap().push(replica);
                    }
                    idx += 1;
                }
            }
            if !progressed {
                break;
            }
        }
        let mut out = Vec::new();
        for (group, instances) in &self.groups {
            for inst in instances {
                let result = match inst.status {
                    MosStatus::Halted => {
                        Some(engine::result(&inst.spec, &inst.current, RunStatus::Halted))
                    }
                    MosStatus::Running => Some(engine::result(
                        &inst.spec,
                        &inst.current,
                        RunStatus::BudgetExhausted,
                    )),
                    MosStatus::Failed => None,
                };
                out.push(InstanceSummary {
                    group: group.clone(),
                    name: inst.name.clone(),
                    status: inst.status,
                    clock: inst.clock(),
                    result,
                });
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;

    fn pc2_spec() -> PSystemSpec {
        parse(&crate::bundled::pc2()).unwrap()
    }

    fn label(s: &str) -> Label {
        Label::new(s).unwrap()
    }

    fn mset(pairs: &[(&str, u64)]) -> Multiset {
        Multiset::from_pairs(
            pairs.iter().map(|(s, n)| (crate::multiset::Symbol::new(s).unwrap(), *n)),
        )
    }

    #[test]
    fn create_starts_at_clock_zero_with_initial_contents() {
        let mut log = EventLog::new();
        let inst = MosInstance::create("p", pc2_spec(), 7, &mut log).unwrap();
        assert_eq!(inst.clock(), 0);
        assert_eq!(inst.current.membrane(2).unwrap().contents, mset(&[("a", 1)]));
        assert_eq!(log.events[0].kind, EventKind::Started);
    }

    #[test]
    fn first_tick_grows_region_three() {
        let mut log = EventLog::new();
        let mut inst = MosInstance::create("p", pc2_spec(), 7, &mut log).unwrap();
        inst.tick(&mut log).unwrap();
        assert_eq!(inst.clock(), 1);
        assert_eq!(inst.current.membrane(2).unwrap().contents, mset(&[("a", 2)]));
    }

    #[test]
    fn ruleless_instance_halts_with_clock_unchanged() {
        let spec = parse("model transition\nalphabet a\nmu [1]\ninit 1: a\n").unwrap();
        let mut log = EventLog::new();
        let mut inst = MosInstance::create("x", spec, 0, &mut log).unwrap();
        inst.tick(&mut log).unwrap();
        assert_eq!(inst.status, MosStatus::Halted);
        assert_eq!(inst.clock(), 0);
        assert!(inst.tick(&mut log).is_err());
    }

    #[test]
    fn injection_lands_at_next_boundary_and_empty_injection_is_logged() {
        // A ruleless system halts on the first tick, so whatever landed
        // before selection is still visible afterwards.
        let spec = parse("model transition\nalphabet a\nmu [1]\n").unwrap();
        let mut log = EventLog::new();
        let mut inst = MosInstance::create("x", spec, 0, &mut log).unwrap();
        inst.inject(mset(&[("a", 3)]), label("1"), &mut log).unwrap();
        inst.inject(Multiset::new(), label("1"), &mut log).unwrap();
        assert_eq!(inst.input_log.len(), 2);
        // Logged but not yet landed.
        assert!(inst.current.membrane(0).unwrap().contents.is_empty());
        inst.tick(&mut log).unwrap();
        assert_eq!(inst.current.membrane(0).unwrap().contents, mset(&[("a", 3)]));
        assert!(inst.inject(mset(&[("a", 1)]), label("9"), &mut log).is_err());
    }

    #[test]
    fn reproduce_names_and_replay_fidelity() {
        let mut log = EventLog::new();
        let mut inst = MosInstance::create("b", pc2_spec(), 11, &mut log).unwrap();
        for _ in 0..5 {
            if inst.status != MosStatus::Running {
                break;
            }
            inst.tick(&mut log).unwrap();
        }
        let at = inst.clock();
        let original = inst.current.canonical_serialize();
        let mut r1 = inst.reproduce(&mut log);
        let r2 = inst.reproduce(&mut log);
        assert_eq!(r1.name, "b.r1");
        assert_eq!(r2.name, "b.r2");
        assert_eq!(r2.current.canonical_serialize(), inst.snapshot.canonical_serialize());
        r1.replay_to(at, &mut log).unwrap();
        assert_eq!(r1.current.canonical_serialize(), original);
    }

    #[test]
    fn tissue_fault_triggers_reproduce_and_replay() {
        let mut tissue = Tissue::new();
        tissue.add_instance("g", "a", pc2_spec(), 1).unwrap();
        tissue.add_instance("g", "b", pc2_spec(), 2).unwrap();
        assert!(tissue.add_instance("g", "a", pc2_spec(), 3).is_err());
        tissue
            .set_fault_plan(vec![FaultPoint { instance: "b".into(), at: 3 }])
            .unwrap();
        let summaries = tissue.run(6).unwrap();
        let b = summaries.iter().find(|s| s.name == "b").unwrap();
        assert_eq!(b.status, MosStatus::Failed);
        let br1 = summaries.iter().find(|s| s.name == "b.r1").unwrap();
        assert_ne!(br1.status, MosStatus::Failed);
        let kinds: Vec<EventKind> = tissue.log.events.iter().map(|e| e.kind).collect();
        let failed_pos = kinds.iter().position(|k| *k == EventKind::Failed).unwrap();
        let repro_pos = kinds.iter().position(|k| *k == EventKind::Reproduced).unwrap();
        assert!(failed_pos < repro_pos);
        // Gapless, strictly increasing sequence numbers.
        for (i, e) in tissue.log.events.iter().enumerate() {
            assert_eq!(e.seq, i as u64);
        }
    }

    #[test]
    fn fault_plan_with_unknown_instance_rejected() {
        let mut tissue = Tissue::new();
        tissue.add_instance("g", "a", pc2_spec(), 1).unwrap();
        assert!(tissue
            .set_fault_plan(vec![FaultPoint { instance: "zzz".into(), at: 1 }])
            .is_err());
    }

    #[test]
    fn empty_tissue_runs_to_empty_log() {
        let mut tissue = Tissue::new();
        let summaries = tissue.run(10).unwrap();
        assert!(summaries.is_empty());
        assert!(tissue.log.events.is_empty());
    }
}
