//! Security goals over traces: Path Integrity, Verification-Dependent Path
//! Integrity, and Path Symmetry, plus a generic guarded trace-formula
//! evaluator used as a cross-check.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::adversary::{derivable, derivation_matches, Knowledge};
use crate::msr::{Fact, Rule, TraceEvent};
use crate::term::{match_into, Subst, Sym, Term, Theory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PropertyId {
    PathIntegrity,
    VdPathIntegrity,
    PathSymmetry,
}

impl PropertyId {
    pub fn name(self) -> &'static str {
        match self {
            PropertyId::PathIntegrity => "path-integrity",
            PropertyId::VdPathIntegrity => "vd-path-integrity",
            PropertyId::PathSymmetry => "path-symmetry",
        }
    }

    pub fn from_name(s: &str) -> Option<PropertyId> {
        Some(match s {
            "path-integrity" => PropertyId::PathIntegrity,
            "vd-path-integrity" => PropertyId::VdPathIntegrity,
            "path-symmetry" => PropertyId::PathSymmetry,
            _ => return None,
        })
    }
}

// ---------------------------------------------------------------------------
// Trace data
// ---------------------------------------------------------------------------

/// A recorded trace with per-event adversary-knowledge snapshots.
#[derive(Clone, Debug, Default)]
pub struct TraceData {
    pub events: Vec<TraceEvent>,
    /// Knowledge snapshots indexed by `TraceEvent::know_version`.
    pub snapshots: Vec<Arc<Knowledge>>,
}

impl TraceData {
    pub fn corrupt_agents(&self) -> BTreeSet<Sym> {
        let corrupt = Sym::new("Corrupt");
        self.events
            .iter()
            .filter(|e| e.fact.sym == corrupt)
            .filter_map(|e| match &e.fact.args[0] {
                Term::Pub(a) => Some(*a),
                _ => None,
            })
            .collect()
    }

    /// Knowledge in force at a marker (the snapshot of that event).
    pub fn know_at(&self, marker: usize) -> &Knowledge {
        let v = self
            .events
            .iter()
            .find(|e| e.marker == marker)
            .map(|e| e.know_version)
            .unwrap_or(0);
        &self.snapshots[v.min(self.snapshots.len().saturating_sub(1))]
    }

    /// Knowledge at the latest marker strictly before `marker`.
    pub fn know_before(&self, marker: usize) -> &Knowledge {
        let mut v = 0;
        for e in &self.events {
            if e.marker < marker {
                v = e.know_version;
            } else {
                break;
            }
        }
        &self.snapshots[v.min(self.snapshots.len().saturating_sub(1))]
    }

    fn events_named(&self, name: &str) -> impl Iterator<Item = &TraceEvent> {
        let sym = Sym::new(name);
        self.events.iter().filter(move |e| e.fact.sym == sym)
    }
}

// ---------------------------------------------------------------------------
// Path orders
// ---------------------------------------------------------------------------

/// Total order over the agents a session's message is intended to traverse:
/// the initiator first, then intermediates, then the final agent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathOrder {
    pub session: Term,
    pub agents: Vec<Sym>,
}

impl PathOrder {
    pub fn initiator(&self) -> Sym {
        self.agents[0]
    }

    pub fn final_agent(&self) -> Sym {
        *self.agents.last().unwrap()
    }

    pub fn intermediates(&self) -> &[Sym] {
        &self.agents[1..self.agents.len() - 1]
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PropertyError {
    #[error("no StartBuild event for session {0}")]
    NoSession(String),
    #[error("no Add events for session {0}")]
    NoAdds(String),
    #[error("agent {0} appears twice in the path of session {1}")]
    RepeatedAgent(String, String),
}

/// Derives the path order of a session: the reverse of the Add-event trace
/// order (the first Add names the final agent), with the initiator
/// prepended.
pub fn derive_path_order(trace: &TraceData, session: &Term) -> Result<PathOrder, PropertyError> {
    let start = trace
        .events_named("StartBuild")
        .find(|e| &e.fact.args[1] == session)
        .ok_or_else(|| PropertyError::NoSession(format!("{session}")))?;
    let initiator = match &start.fact.args[0] {
        Term::Pub(a) => *a,
        other => return Err(PropertyError::NoSession(format!("{other}"))),
    };
    let mut added: Vec<Sym> = Vec::new();
    for e in trace.events_named("Add") {
        if &e.fact.args[0] != session {
            continue;
        }
        if let Term::Pub(agent) = &e.fact.args[1] {
            added.push(*agent);
        }
    }
    if added.is_empty() {
        return Err(PropertyError::NoAdds(format!("{session}")));
    }
    let mut agents = vec![initiator];
    agents.extend(added.iter().rev());
    let mut seen = BTreeSet::new();
    for a in &agents {
        if !seen.insert(*a) {
            return Err(PropertyError::RepeatedAgent(
                a.as_str().to_owned(),
                format!("{session}"),
            ));
        }
    }
    Ok(PathOrder {
        session: session.clone(),
        agents,
    })
}

// ---------------------------------------------------------------------------
// Violations
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    /// An honest agent earlier on the path never forwarded (goal clauses
    /// 10-11 fail).
    MissingForward,
    /// The earlier agent is corrupt but the adversary never had its
    /// expected messages (clause 12 fails).
    MissingKnowledge,
    /// Return journey bypassed an honest forwarder: its predecessor's
    /// actual Backward has no matching Backward from the victim.
    ReturnBypassedHonest,
    /// Return journey bypassed an honest forwarder: the corrupt
    /// predecessor's return messages were adversary-derivable.
    ReturnBypassedCorrupt,
}

/// Witness of a failed goal instantiation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub property: PropertyId,
    pub kind: ViolationKind,
    /// Failed clause indices of the path-integrity goal statement, where
    /// applicable.
    pub clauses: Vec<u8>,
    pub session: Option<Term>,
    /// The agent whose event triggered the check (M_i in the goal).
    pub actor: Sym,
    /// The bypassed agent (M_j in the goal).
    pub victim: Sym,
    /// Markers of the events cited by the witness.
    pub markers: Vec<usize>,
    /// Rendered witness bindings.
    pub bindings: Vec<(String, String)>,
}

// ---------------------------------------------------------------------------
// Path integrity
// ---------------------------------------------------------------------------

struct AddEntry {
    marker: usize,
    agent: Sym,
    from: Term,
    to: Term,
}

fn session_adds(trace: &TraceData, session: &Term) -> Vec<AddEntry> {
    let mut adds = Vec::new();
    for e in trace.events_named("Add") {
        if &e.fact.args[0] != session {
            continue;
        }
        if let Term::Pub(agent) = &e.fact.args[1] {
            adds.push(AddEntry {
                marker: e.marker,
                agent: *agent,
                from: e.fact.args[2].clone(),
                to: e.fact.args[3].clone(),
            });
        }
    }
    adds
}

fn check_pi_inner(
    trace: &TraceData,
    theory: &Theory,
    require_complete: bool,
) -> Option<Violation> {
    let corrupt = trace.corrupt_agents();
    let property = if require_complete {
        PropertyId::VdPathIntegrity
    } else {
        PropertyId::PathIntegrity
    };

    let mut sessions: Vec<(usize, Sym, Term)> = Vec::new();
    for e in trace.events_named("StartBuild") {
        if let Term::Pub(a) = &e.fact.args[0] {
            sessions.push((e.marker, *a, e.fact.args[1].clone()));
        }
    }
    sessions.sort();

    for (ts, initiator, session) in sessions {
        // clause 1: only sessions of honest initiators are constrained
        if corrupt.contains(&initiator) {
            continue;
        }
        let adds = session_adds(trace, &session);
        if require_complete {
            let done = trace.events_named("Complete").any(|e| {
                e.fact.args[1] == session
                    && matches!(&e.fact.args[0], Term::Pub(a) if adds.first().map(|x| x.agent) == Some(*a))
            });
            if !done {
                continue;
            }
        }
        // forwards matching an Add of this session, in trace order
        let forwards: Vec<&TraceEvent> = trace.events_named("Forward").collect();
        for (i, add_i) in adds.iter().enumerate() {
            if add_i.marker <= ts {
                continue;
            }
            for fwd in &forwards {
                let (agent, from, to) = match &fwd.fact.args[..] {
                    [Term::Pub(a), f, t] => (*a, f, t),
                    _ => continue,
                };
                if agent != add_i.agent || from != &add_i.from || to != &add_i.to {
                    continue;
                }
                let tk_i = fwd.marker;
                // clauses 3-5: every later-added agent must already have
                // participated
                for add_j in adds.iter().skip(i + 1) {
                    let matched = forwards.iter().any(|f2| {
                        f2.marker < tk_i
                            && matches!(&f2.fact.args[..], [Term::Pub(a), f, t]
                                if *a == add_j.agent && f == &add_j.from && t == &add_j.to)
                    });
                    if matched {
                        continue;
                    }
                    if corrupt.contains(&add_j.agent) {
                        let pair = Term::pair(add_j.from.clone(), add_j.to.clone());
                        if derivable(&pair, trace.know_before(tk_i), theory) {
                            continue;
                        }
                        return Some(Violation {
                            property,
                            kind: ViolationKind::MissingKnowledge,
                            clauses: vec![12],
                            session: Some(session.clone()),
                            actor: add_i.agent,
                            victim: add_j.agent,
                            markers: vec![ts, add_i.marker, add_j.marker, tk_i],
                            bindings: witness_bindings(&[
                                ("A", Term::Pub(initiator)),
                                ("p_ID", session.clone()),
                                ("M_i", Term::Pub(add_i.agent)),
                                ("M_j", Term::Pub(add_j.agent)),
                                ("f_j", add_j.from.clone()),
                                ("t_j", add_j.to.clone()),
                            ]),
                        });
                    }
                    return Some(Violation {
                        property,
                        kind: ViolationKind::MissingForward,
                        clauses: vec![10, 11],
                        session: Some(session.clone()),
                        actor: add_i.agent,
                        victim: add_j.agent,
                        markers: vec![ts, add_i.marker, add_j.marker, tk_i],
                        bindings: witness_bindings(&[
                            ("A", Term::Pub(initiator)),
                            ("p_ID", session.clone()),
                            ("M_i", Term::Pub(add_i.agent)),
                            ("M_j", Term::Pub(add_j.agent)),
                            ("f_i", add_i.from.clone()),
                            ("t_i", add_i.to.clone()),
                            ("f_j", add_j.from.clone()),
                            ("t_j", add_j.to.clone()),
                        ]),
                    });
                }
            }
        }
    }
    None
}

fn witness_bindings(pairs: &[(&str, Term)]) -> Vec<(String, String)> {
    pairs
        .iter()
        .map(|(n, t)| (n.to_string(), format!("{t}")))
        .collect()
}

/// Empty iff every Add-matching Forward of an honest-initiator session is
/// preceded by the participation of every path-earlier agent: an exact
/// Forward, or corruption together with adversary knowledge of the expected
/// message pair.
pub fn check_path_integrity(trace: &TraceData, theory: &Theory) -> Option<Violation> {
    check_pi_inner(trace, theory, false)
}

/// As path integrity, but only for sessions whose final agent emitted
/// `Complete`; sessions without a completed verification phase are
/// vacuously satisfied.
pub fn check_vd_path_integrity(trace: &TraceData, theory: &Theory) -> Option<Violation> {
    check_pi_inner(trace, theory, true)
}

// ---------------------------------------------------------------------------
// Path symmetry
// ---------------------------------------------------------------------------

/// Checker context for the corrupt-predecessor route: the rules whose
/// Backward events define what a return message must look like to be
/// accepted, the pool of every fact produced along the trace (for binding
/// session-state premises), and scenario public names.
#[derive(Clone, Debug, Default)]
pub struct SymmetryEnv {
    pub return_rules: Vec<Rule>,
    pub produced: BTreeSet<Fact>,
    pub publics: Vec<Term>,
    pub recombination_depth: usize,
}

struct FwdEvent {
    marker: usize,
    agent: Sym,
    from: Term,
    to: Term,
}

fn collect_triples(trace: &TraceData, name: &str) -> Vec<FwdEvent> {
    trace
        .events_named(name)
        .filter_map(|e| match &e.fact.args[..] {
            [Term::Pub(a), f, t] => Some(FwdEvent {
                marker: e.marker,
                agent: *a,
                from: f.clone(),
                to: t.clone(),
            }),
            _ => None,
        })
        .collect()
}

/// Return messages agent `m` would accept at the given knowledge: ground
/// instances of its Backward-emitting rules whose network premise is
/// derivable, whose state premises are bound from facts the trace actually
/// produced, and whose equality tests pass. Yields (incoming, outgoing)
/// pairs.
fn acceptable_returns(
    m: Sym,
    know: &Knowledge,
    env: &SymmetryEnv,
    theory: &Theory,
) -> Vec<(Term, Term)> {
    let net = Sym::new("Net");
    let backward = Sym::new("Backward");
    let equal = Sym::new("Equal");
    let mut out = Vec::new();
    for rule in &env.return_rules {
        let bwd = match rule.events.iter().find(|e| e.sym == backward) {
            Some(b) => b,
            None => continue,
        };
        let mut init = Subst::new();
        match &bwd.args[0] {
            Term::Var(v, s) => {
                if init.bind(*v, *s, Term::Pub(m)).is_err() {
                    continue;
                }
            }
            Term::Pub(a) if *a == m => {}
            _ => continue,
        }
        let net_premises: Vec<&Fact> = rule.premises.iter().filter(|p| p.sym == net).collect();
        if net_premises.is_empty() {
            continue;
        }
        let state_premises: Vec<&Fact> = rule
            .premises
            .iter()
            .filter(|p| p.sym != net && p.sym.as_str() != "Fr")
            .collect();

        // bind state premises against the ghost pool of produced facts
        let mut partial = vec![init];
        for p in &state_premises {
            let mut nextgen = Vec::new();
            for s in &partial {
                for fact in &env.produced {
                    if fact.sym != p.sym {
                        continue;
                    }
                    let mut s2 = s.clone();
                    if p.args
                        .iter()
                        .zip(&fact.args)
                        .all(|(pp, gg)| match_into(pp, gg, &mut s2))
                    {
                        nextgen.push(s2);
                    }
                }
            }
            partial = nextgen;
            if partial.is_empty() {
                break;
            }
        }
        // satisfy network premises from adversary knowledge
        for p in net_premises {
            let mut nextgen = Vec::new();
            for s in &partial {
                for s2 in derivation_matches(
                    &p.args[0],
                    s,
                    know,
                    theory,
                    &env.publics,
                    env.recombination_depth,
                ) {
                    nextgen.push(s2);
                }
            }
            partial = nextgen;
            if partial.is_empty() {
                break;
            }
        }
        for s in partial {
            // equality tests of the rule must hold
            let ok = rule.events.iter().filter(|e| e.sym == equal).all(|e| {
                let a = theory.normalize(&s.apply(&e.args[0]));
                let b = theory.normalize(&s.apply(&e.args[1]));
                a == b
            });
            if !ok {
                continue;
            }
            let y = theory.normalize(&s.apply(&bwd.args[1]));
            let t = theory.normalize(&s.apply(&bwd.args[2]));
            if y.is_ground() && t.is_ground() && derivable(&t, know, theory) {
                out.push((y, t));
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Empty iff no honest forwarder is bypassed on the return journey: for
/// every adjacent pair established by the outbound Forward chain, once the
/// predecessor participates in the return (an actual Backward, or corrupt
/// with the adversary able to derive its acceptable return messages), the
/// honest successor must have produced the linking Backward within the
/// window.
pub fn check_path_symmetry(
    trace: &TraceData,
    theory: &Theory,
    env: &SymmetryEnv,
) -> Option<Violation> {
    let corrupt = trace.corrupt_agents();
    let forwards = collect_triples(trace, "Forward");
    let backwards = collect_triples(trace, "Backward");
    let empty = Term::empty();

    // adjacency pairs (predecessor, successor) with honest successor
    let mut pairs: Vec<(&FwdEvent, &FwdEvent)> = Vec::new();
    for fi in &forwards {
        if fi.to == empty {
            continue;
        }
        for fj in &forwards {
            if fj.marker > fi.marker
                && fj.from == fi.to
                && fj.agent != fi.agent
                && !corrupt.contains(&fj.agent)
            {
                pairs.push((fi, fj));
            }
        }
    }
    pairs.sort_by_key(|(fi, fj)| (fj.marker, fi.marker));

    let mut best: Option<(usize, Violation)> = None;
    let mut consider = |anchor: usize, v: Violation| {
        if best.as_ref().map(|(m, _)| anchor < *m).unwrap_or(true) {
            best = Some((anchor, v));
        }
    };

    for (fi, fj) in &pairs {
        // honest route: the predecessor actually produced a Backward
        for b in backwards.iter().filter(|b| b.agent == fi.agent) {
            if b.marker <= fj.marker {
                continue;
            }
            let linked = backwards.iter().any(|bj| {
                bj.agent == fj.agent && bj.to == b.from && fj.marker < bj.marker && bj.marker < b.marker
            });
            if !linked {
                consider(
                    b.marker,
                    Violation {
                        property: PropertyId::PathSymmetry,
                        kind: ViolationKind::ReturnBypassedHonest,
                        clauses: vec![],
                        session: None,
                        actor: fi.agent,
                        victim: fj.agent,
                        markers: vec![fi.marker, fj.marker, b.marker],
                        bindings: witness_bindings(&[
                            ("M_i", Term::Pub(fi.agent)),
                            ("M_j", Term::Pub(fj.agent)),
                            ("x", fi.to.clone()),
                            ("y", b.from.clone()),
                        ]),
                    },
                );
            }
        }
        // corrupt route: the adversary can play the predecessor's return
        if corrupt.contains(&fi.agent) {
            let mut seen_version = usize::MAX;
            for e in &trace.events {
                if e.marker <= fj.marker || e.know_version == seen_version {
                    continue;
                }
                seen_version = e.know_version;
                let know = &trace.snapshots[e.know_version];
                for (y, t) in acceptable_returns(fi.agent, know, env, theory) {
                    let linked = backwards.iter().any(|bj| {
                        bj.agent == fj.agent
                            && bj.to == y
                            && fj.marker < bj.marker
                            && bj.marker < e.marker
                    });
                    if !linked {
                        consider(
                            e.marker,
                            Violation {
                                property: PropertyId::PathSymmetry,
                                kind: ViolationKind::ReturnBypassedCorrupt,
                                clauses: vec![],
                                session: None,
                                actor: fi.agent,
                                victim: fj.agent,
                                markers: vec![fi.marker, fj.marker, e.marker],
                                bindings: witness_bindings(&[
                                    ("M_i", Term::Pub(fi.agent)),
                                    ("M_j", Term::Pub(fj.agent)),
                                    ("x", fi.to.clone()),
                                    ("y", y.clone()),
                                    ("t_i", t),
                                ]),
                            },
                        );
                    }
                }
            }
        }
    }
    best.map(|(_, v)| v)
}

// ---------------------------------------------------------------------------
// Generic trace formulae
// ---------------------------------------------------------------------------

/// Guarded first-order formulae over trace events. Quantification over
/// terms is only available through event guards, which keeps evaluation
/// finite; time variables range over trace markers.
#[derive(Clone, Debug)]
pub enum Formula {
    True,
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    /// For every event matching the pattern (binding its variables and the
    /// time variable), the body holds.
    ForallEvent {
        pattern: Fact,
        time: Sym,
        body: Box<Formula>,
    },
    /// Some event matches the pattern and satisfies the body.
    ExistsEvent {
        pattern: Fact,
        time: Sym,
        body: Box<Formula>,
    },
    /// Some trace marker satisfies the body.
    ExistsTime { time: Sym, body: Box<Formula> },
    Less(Sym, Sym),
    Eq(Term, Term),
    /// The adversary can derive the term at the marker bound to the time
    /// variable.
    Knows(Sym, Term),
}

#[derive(Clone, Debug, Default)]
struct Env {
    terms: Subst,
    times: BTreeMap<Sym, usize>,
}

/// Finite-model evaluation of a guarded formula; returns the verdict and,
/// for a refuted formula, the witness bindings of the first failing
/// instantiation.
pub fn eval_trace_formula(
    trace: &TraceData,
    theory: &Theory,
    formula: &Formula,
) -> (bool, Vec<(String, String)>) {
    let mut witness: Option<Env> = None;
    let ok = eval(trace, theory, formula, &Env::default(), &mut witness, true);
    let bindings = witness
        .map(|env| {
            let mut out: Vec<(String, String)> = env
                .terms
                .iter()
                .map(|(v, t)| (v.as_str().to_owned(), format!("{t}")))
                .collect();
            out.extend(
                env.times
                    .iter()
                    .map(|(v, m)| (format!("#{}", v.as_str()), m.to_string())),
            );
            out
        })
        .unwrap_or_default();
    (ok, bindings)
}

fn eval(
    trace: &TraceData,
    theory: &Theory,
    f: &Formula,
    env: &Env,
    witness: &mut Option<Env>,
    capture: bool,
) -> bool {
    match f {
        Formula::True => true,
        Formula::Not(g) => !eval(trace, theory, g, env, witness, false),
        Formula::And(gs) => gs.iter().all(|g| eval(trace, theory, g, env, witness, capture)),
        Formula::Or(gs) => gs.iter().any(|g| eval(trace, theory, g, env, witness, false)),
        Formula::Implies(a, b) => {
            if eval(trace, theory, a, env, witness, false) {
                eval(trace, theory, b, env, witness, capture)
            } else {
                true
            }
        }
        Formula::ForallEvent {
            pattern,
            time,
            body,
        } => {
            for e in &trace.events {
                if e.fact.sym != pattern.sym || e.fact.args.len() != pattern.args.len() {
                    continue;
                }
                let mut terms = env.terms.clone();
                let applied: Vec<Term> = pattern.args.iter().map(|a| terms.apply(a)).collect();
                if !applied
                    .iter()
                    .zip(&e.fact.args)
                    .all(|(p, g)| match_into(p, g, &mut terms))
                {
                    continue;
                }
                let mut env2 = Env {
                    terms,
                    times: env.times.clone(),
                };
                env2.times.insert(*time, e.marker);
                if !eval(trace, theory, body, &env2, witness, capture) {
                    if capture && witness.is_none() {
                        *witness = Some(env2);
                    }
                    return false;
                }
            }
            true
        }
        Formula::ExistsEvent {
            pattern,
            time,
            body,
        } => {
            for e in &trace.events {
                if e.fact.sym != pattern.sym || e.fact.args.len() != pattern.args.len() {
                    continue;
                }
                let mut terms = env.terms.clone();
                let applied: Vec<Term> = pattern.args.iter().map(|a| terms.apply(a)).collect();
                if !applied
                    .iter()
                    .zip(&e.fact.args)
                    .all(|(p, g)| match_into(p, g, &mut terms))
                {
                    continue;
                }
                let mut env2 = Env {
                    terms,
                    times: env.times.clone(),
                };
                env2.times.insert(*time, e.marker);
                if eval(trace, theory, body, &env2, witness, false) {
                    return true;
                }
            }
            false
        }
        Formula::ExistsTime { time, body } => {
            for e in &trace.events {
                let mut env2 = env.clone();
                env2.times.insert(*time, e.marker);
                if eval(trace, theory, body, &env2, witness, false) {
                    return true;
                }
            }
            false
        }
        Formula::Less(a, b) => match (env.times.get(a), env.times.get(b)) {
            (Some(x), Some(y)) => x < y,
            _ => false,
        },
        Formula::Eq(a, b) => {
            theory.normalize(&env.terms.apply(a)) == theory.normalize(&env.terms.apply(b))
        }
        Formula::Knows(time, t) => {
            let marker = match env.times.get(time) {
                Some(m) => *m,
                None => return false,
            };
            let inst = env.terms.apply(t);
            inst.is_ground() && derivable(&inst, trace.know_at(marker), theory)
        }
    }
}

/// The path-integrity goal as a generic trace formula, mirroring the
/// twelve-clause statement: an honest initiator's session, two path
/// positions in add order, and a completed forward at the later-added
/// position require an earlier forward (or corruption plus knowledge) at
/// the earlier position.
pub fn path_integrity_formula(require_complete: bool) -> Formula {
    let v = |n: &str| Term::var(n);
    let pv = |n: &str| Term::pvar(n);
    let tv = |n: &str| Sym::new(n);

    let honest_initiator = Formula::Not(Box::new(Formula::ExistsEvent {
        pattern: Fact::linear("Corrupt", vec![pv("A")]),
        time: tv("tac"),
        body: Box::new(Formula::True),
    }));

    let conclusion = Formula::Or(vec![
        Formula::ExistsEvent {
            pattern: Fact::linear("Forward", vec![pv("Mj"), v("fj"), v("tj")]),
            time: tv("tkj"),
            body: Box::new(Formula::Less(tv("tkj"), tv("tki"))),
        },
        Formula::And(vec![
            Formula::ExistsEvent {
                pattern: Fact::linear("Corrupt", vec![pv("Mj")]),
                time: tv("tcj"),
                body: Box::new(Formula::True),
            },
            Formula::ExistsTime {
                time: tv("tkx"),
                body: Box::new(Formula::And(vec![
                    Formula::Less(tv("tkx"), tv("tki")),
                    Formula::Knows(tv("tkx"), Term::pair(v("fj"), v("tj"))),
                ])),
            },
        ]),
    ]);

    let mut premise = vec![
        honest_initiator,
        Formula::Less(tv("ts"), tv("tai")),
        Formula::Less(tv("tai"), tv("taj")),
    ];
    if require_complete {
        premise.push(Formula::ExistsEvent {
            pattern: Fact::linear("Complete", vec![pv("Efin"), v("p")]),
            time: tv("tcomp"),
            body: Box::new(Formula::True),
        });
    }

    Formula::ForallEvent {
        pattern: Fact::linear("StartBuild", vec![pv("A"), v("p")]),
        time: tv("ts"),
        body: Box::new(Formula::ForallEvent {
            pattern: Fact::linear("Add", vec![v("p"), pv("Mi"), v("fi"), v("ti")]),
            time: tv("tai"),
            body: Box::new(Formula::ForallEvent {
                pattern: Fact::linear("Add", vec![v("p"), pv("Mj"), v("fj"), v("tj")]),
                time: tv("taj"),
                body: Box::new(Formula::ForallEvent {
                    pattern: Fact::linear("Forward", vec![pv("Mi"), v("fi"), v("ti")]),
                    time: tv("tki"),
                    body: Box::new(Formula::Implies(
                        Box::new(Formula::And(premise)),
                        Box::new(conclusion),
                    )),
                }),
            }),
        }),
    }
}

/// The secrecy demo formula: whatever an honest pair's session built, the
/// adversary never learns the payload unless an endpoint is corrupt.
pub fn secrecy_formula() -> Formula {
    let tv = |n: &str| Sym::new(n);
    Formula::ForallEvent {
        pattern: Fact::linear("StartBuild", vec![Term::pvar("A"), Term::var("x")]),
        time: tv("ti"),
        body: Box::new(Formula::Or(vec![
            Formula::Not(Box::new(Formula::ExistsTime {
                time: tv("ta"),
                body: Box::new(Formula::Knows(tv("ta"), Term::var("x"))),
            })),
            Formula::ExistsEvent {
                pattern: Fact::linear("Corrupt", vec![Term::pvar("A")]),
                time: tv("tb"),
                body: Box::new(Formula::True),
            },
        ])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::{parse_term, ParseMode, Signature};

    fn grd(s: &str) -> Term {
        parse_term(s, &Signature::base(), ParseMode::Ground).unwrap()
    }

    /// Builds a trace from (fact, knowledge-additions) steps.
    fn build_trace(steps: Vec<(Fact, Vec<Term>)>) -> TraceData {
        let th = Theory::base();
        let mut events = Vec::new();
        let mut snapshots = vec![Arc::new(Knowledge::new())];
        let mut know = Knowledge::new();
        for (i, (fact, learned)) in steps.into_iter().enumerate() {
            let mut version = snapshots.len() - 1;
            if !learned.is_empty() {
                for t in &learned {
                    know.absorb(t, &th);
                }
                snapshots.push(Arc::new(know.clone()));
                version = snapshots.len() - 1;
            }
            events.push(TraceEvent {
                marker: i,
                fact,
                rule: Sym::new("t"),
                know_version: version,
            });
        }
        TraceData { events, snapshots }
    }

    fn ev(name: &str, args: Vec<Term>) -> (Fact, Vec<Term>) {
        (Fact::linear(name, args), vec![])
    }

    fn ev_know(name: &str, args: Vec<Term>, learned: Vec<&str>) -> (Fact, Vec<Term>) {
        (
            Fact::linear(name, args),
            learned.into_iter().map(grd).collect(),
        )
    }

    #[test]
    fn path_order_reverses_add_order() {
        let p = grd("~p1");
        let trace = build_trace(vec![
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev("Add", vec![p.clone(), grd("'E'"), grd("~f3"), grd("''")]),
            ev("Add", vec![p.clone(), grd("'M2'"), grd("~f2"), grd("~f3")]),
            ev("Add", vec![p.clone(), grd("'M1'"), grd("~f1"), grd("~f2")]),
        ]);
        let order = derive_path_order(&trace, &p).unwrap();
        let names: Vec<&str> = order.agents.iter().map(|a| a.as_str()).collect();
        assert_eq!(names, vec!["A", "M1", "M2", "E"]);
        assert_eq!(order.initiator().as_str(), "A");
        assert_eq!(order.final_agent().as_str(), "E");
        assert_eq!(order.intermediates().len(), 2);
    }

    #[test]
    fn path_order_two_agents_and_duplicates() {
        let p = grd("~p1");
        let trace = build_trace(vec![
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev("Add", vec![p.clone(), grd("'E'"), grd("~f1"), grd("''")]),
        ]);
        let order = derive_path_order(&trace, &p).unwrap();
        assert_eq!(order.agents.len(), 2);

        let dup = build_trace(vec![
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev("Add", vec![p.clone(), grd("'E'"), grd("~f1"), grd("''")]),
            ev("Add", vec![p.clone(), grd("'M1'"), grd("~f2"), grd("~f1")]),
            ev("Add", vec![p.clone(), grd("'M1'"), grd("~f3"), grd("~f2")]),
        ]);
        assert!(matches!(
            derive_path_order(&dup, &p),
            Err(PropertyError::RepeatedAgent(..))
        ));
    }

    /// A three-hop session where everything is forwarded in order.
    fn honest_trace() -> (TraceData, Term) {
        let p = grd("~p1");
        let trace = build_trace(vec![
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev("Add", vec![p.clone(), grd("'E'"), grd("~w3"), grd("''")]),
            ev("Add", vec![p.clone(), grd("'M2'"), grd("~w2"), grd("~w3")]),
            ev("Add", vec![p.clone(), grd("'M1'"), grd("~w1"), grd("~w2")]),
            ev("Forward", vec![grd("'M1'"), grd("~w1"), grd("~w2")]),
            ev("Forward", vec![grd("'M2'"), grd("~w2"), grd("~w3")]),
            ev("Forward", vec![grd("'E'"), grd("~w3"), grd("''")]),
        ]);
        (trace, p)
    }

    #[test]
    fn path_integrity_holds_on_honest_run() {
        let th = Theory::base();
        let (trace, _) = honest_trace();
        assert_eq!(check_path_integrity(&trace, &th), None);
        // empty trace is vacuously fine
        assert_eq!(check_path_integrity(&build_trace(vec![]), &th), None);
    }

    #[test]
    fn path_integrity_flags_skipped_honest_agent() {
        let th = Theory::base();
        let p = grd("~p1");
        // M2 never forwards, E does: the E forward is the violation point
        let trace = build_trace(vec![
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev("Add", vec![p.clone(), grd("'E'"), grd("~w3"), grd("''")]),
            ev("Add", vec![p.clone(), grd("'M2'"), grd("~w2"), grd("~w3")]),
            ev("Add", vec![p.clone(), grd("'M1'"), grd("~w1"), grd("~w2")]),
            ev("Forward", vec![grd("'M1'"), grd("~w1"), grd("~w2")]),
            ev("Forward", vec![grd("'E'"), grd("~w3"), grd("''")]),
        ]);
        let v = check_path_integrity(&trace, &th).unwrap();
        assert_eq!(v.kind, ViolationKind::MissingForward);
        assert_eq!(v.clauses, vec![10, 11]);
        assert_eq!(v.actor.as_str(), "E");
        assert_eq!(v.victim.as_str(), "M2");
        // witness markers cite real events
        for m in &v.markers {
            assert!(trace.events.iter().any(|e| e.marker == *m));
        }
    }

    #[test]
    fn path_integrity_corrupt_agent_covered_by_knowledge() {
        let th = Theory::base();
        let p = grd("~p1");
        // M2 corrupt; adversary knows its expected in/out pair before E forwards
        let trace = build_trace(vec![
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev("Add", vec![p.clone(), grd("'E'"), grd("~w3"), grd("''")]),
            ev("Add", vec![p.clone(), grd("'M2'"), grd("~w2"), grd("~w3")]),
            ev("Corrupt", vec![grd("'M2'")]),
            ev_know("K", vec![grd("~w2")], vec!["~w2", "~w3"]),
            ev("Forward", vec![grd("'E'"), grd("~w3"), grd("''")]),
        ]);
        assert_eq!(check_path_integrity(&trace, &th), None);
        // without the knowledge, clause 12 fails
        let trace2 = build_trace(vec![
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev("Add", vec![p.clone(), grd("'E'"), grd("~w3"), grd("''")]),
            ev("Add", vec![p.clone(), grd("'M2'"), grd("~w2"), grd("~w3")]),
            ev("Corrupt", vec![grd("'M2'")]),
            ev("Forward", vec![grd("'E'"), grd("~w3"), grd("''")]),
        ]);
        let v = check_path_integrity(&trace2, &th).unwrap();
        assert_eq!(v.kind, ViolationKind::MissingKnowledge);
        assert_eq!(v.clauses, vec![12]);
    }

    #[test]
    fn corrupt_initiator_sessions_are_unconstrained() {
        let th = Theory::base();
        let p = grd("~p1");
        let trace = build_trace(vec![
            ev("Corrupt", vec![grd("'A'")]),
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev("Add", vec![p.clone(), grd("'E'"), grd("~w3"), grd("''")]),
            ev("Add", vec![p.clone(), grd("'M2'"), grd("~w2"), grd("~w3")]),
            ev("Forward", vec![grd("'E'"), grd("~w3"), grd("''")]),
        ]);
        assert_eq!(check_path_integrity(&trace, &th), None);
    }

    #[test]
    fn vd_path_integrity_requires_complete() {
        let th = Theory::base();
        let p = grd("~p1");
        let base = vec![
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev("Add", vec![p.clone(), grd("'E'"), grd("~w3"), grd("''")]),
            ev("Add", vec![p.clone(), grd("'M2'"), grd("~w2"), grd("~w3")]),
            ev("Forward", vec![grd("'E'"), grd("~w3"), grd("''")]),
        ];
        // no Complete: vacuously satisfied even though M2 is skipped
        let t1 = build_trace(base.clone());
        assert_eq!(check_vd_path_integrity(&t1, &th), None);
        // with Complete the premise is armed and clause 10 fails
        let mut with_complete = base.clone();
        with_complete.push(ev("Complete", vec![grd("'E'"), p.clone()]));
        let t2 = build_trace(with_complete);
        let v = check_vd_path_integrity(&t2, &th).unwrap();
        assert_eq!(v.property, PropertyId::VdPathIntegrity);
        assert_eq!(v.kind, ViolationKind::MissingForward);
        // complete plus all forwards in order: satisfied
        let mut all = base.clone();
        all.insert(
            3,
            ev("Forward", vec![grd("'M2'"), grd("~w2"), grd("~w3")]),
        );
        all.push(ev("Complete", vec![grd("'E'"), p.clone()]));
        let t3 = build_trace(all);
        assert_eq!(check_vd_path_integrity(&t3, &th), None);
    }

    /// Round-trip trace: locks forward, then releases backward.
    fn round_trip(skip_m2_backward: bool) -> TraceData {
        let mut steps = vec![
            ev("Forward", vec![grd("'M1'"), grd("~w1"), grd("~w2")]),
            ev("Forward", vec![grd("'M2'"), grd("~w2"), grd("~w3")]),
            ev("Forward", vec![grd("'E'"), grd("~w3"), grd("''")]),
            ev("Backward", vec![grd("'E'"), grd("''"), grd("~r3")]),
        ];
        if !skip_m2_backward {
            steps.push(ev("Backward", vec![grd("'M2'"), grd("~r3"), grd("~r2")]));
        }
        steps.push(ev("Backward", vec![grd("'M1'"), grd("~r2"), grd("~r1")]));
        build_trace(steps)
    }

    #[test]
    fn path_symmetry_honest_round_trip() {
        let th = Theory::base();
        let env = SymmetryEnv::default();
        assert_eq!(check_path_symmetry(&round_trip(false), &th, &env), None);
        // outbound-only trace: premise unsatisfied
        let outbound = build_trace(vec![
            ev("Forward", vec![grd("'M1'"), grd("~w1"), grd("~w2")]),
            ev("Forward", vec![grd("'M2'"), grd("~w2"), grd("~w3")]),
        ]);
        assert_eq!(check_path_symmetry(&outbound, &th, &env), None);
    }

    #[test]
    fn path_symmetry_flags_bypassed_honest_agent() {
        let th = Theory::base();
        let env = SymmetryEnv::default();
        // M1 returns without M2 having returned: honest-route violation
        let v = check_path_symmetry(&round_trip(true), &th, &env).unwrap();
        assert_eq!(v.kind, ViolationKind::ReturnBypassedHonest);
        assert_eq!(v.actor.as_str(), "M1");
        assert_eq!(v.victim.as_str(), "M2");
    }

    #[test]
    fn path_symmetry_corrupt_route_uses_knowledge() {
        let th = Theory::base();
        // return rule: Net(senc(<x, hx>, kR)); ShKey(M, Y, kR); Locked(M, hx);
        //              ShKey(W, M, kL) -[Backward(M, in, out), Equal(h(x), hx)]-> ...
        let sig = Signature::base();
        let pat = |s: &str| parse_term(s, &sig, ParseMode::Pattern).unwrap();
        let rule = Rule::new(
            "BwdRelease",
            crate::msr::Phase::Forwarding,
            vec![
                Fact::linear("Net", vec![pat("senc(<x, hx>, kR)")]),
                Fact::persist("ShKey", vec![pat("$M"), pat("$Y"), pat("kR")]),
                Fact::linear("Locked", vec![pat("$M"), pat("hx")]),
                Fact::persist("ShKey", vec![pat("$W"), pat("$M"), pat("kL")]),
            ],
            vec![
                Fact::linear(
                    "Backward",
                    vec![pat("$M"), pat("senc(<x, hx>, kR)"), pat("senc(<x, hx>, kL)")],
                ),
                Fact::linear("Equal", vec![pat("h(x)"), pat("hx")]),
            ],
            vec![Fact::linear("Net", vec![pat("senc(<x, hx>, kL)")])],
        );
        let mut produced = BTreeSet::new();
        produced.insert(Fact::persist(
            "ShKey",
            vec![grd("'M1'"), grd("'M2'"), grd("~k12")],
        ));
        produced.insert(Fact::persist(
            "ShKey",
            vec![grd("'A'"), grd("'M1'"), grd("~k01")],
        ));
        produced.insert(Fact::linear("Locked", vec![grd("'M1'"), grd("h(~x1)")]));
        let env = SymmetryEnv {
            return_rules: vec![rule],
            produced,
            publics: vec![grd("'A'"), grd("'M1'"), grd("'M2'")],
            recombination_depth: 2,
        };
        // corrupt M1; the preimage ~x1 and both channel keys become known
        // after M2 forwarded, with no M2 Backward in the window
        let trace = build_trace(vec![
            ev("Corrupt", vec![grd("'M1'")]),
            ev("Forward", vec![grd("'M1'"), grd("~w1"), grd("~w2")]),
            ev("Forward", vec![grd("'M2'"), grd("~w2"), grd("~w3")]),
            ev_know(
                "K",
                vec![grd("~x1")],
                vec!["~x1", "h(~x1)", "~k12", "~k01"],
            ),
        ]);
        let v = check_path_symmetry(&trace, &th, &env).unwrap();
        assert_eq!(v.kind, ViolationKind::ReturnBypassedCorrupt);
        assert_eq!(v.victim.as_str(), "M2");

        // same trace, but M2 produced the linking Backward first: satisfied
        let y = grd("senc(<~x1, h(~x1)>, ~k12)");
        let trace_ok = build_trace(vec![
            ev("Corrupt", vec![grd("'M1'")]),
            ev("Forward", vec![grd("'M1'"), grd("~w1"), grd("~w2")]),
            ev("Forward", vec![grd("'M2'"), grd("~w2"), grd("~w3")]),
            ev("Backward", vec![grd("'M2'"), grd("~r3"), y.clone()]),
            ev_know(
                "K",
                vec![grd("~x1")],
                vec!["~x1", "h(~x1)", "~k12", "~k01"],
            ),
        ]);
        assert_eq!(check_path_symmetry(&trace_ok, &th, &env), None);
    }

    #[test]
    fn generic_formula_agrees_on_basic_traces() {
        let th = Theory::base();
        let formula = path_integrity_formula(false);
        let (trace, _) = honest_trace();
        let (ok, _) = eval_trace_formula(&trace, &th, &formula);
        assert!(ok);
        assert!(check_path_integrity(&trace, &th).is_none());

        let p = grd("~p1");
        let bad = build_trace(vec![
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev("Add", vec![p.clone(), grd("'E'"), grd("~w3"), grd("''")]),
            ev("Add", vec![p.clone(), grd("'M2'"), grd("~w2"), grd("~w3")]),
            ev("Forward", vec![grd("'E'"), grd("~w3"), grd("''")]),
        ]);
        let (ok2, witness) = eval_trace_formula(&bad, &th, &formula);
        assert!(!ok2);
        assert!(!witness.is_empty());
        assert!(check_path_integrity(&bad, &th).is_some());
    }

    #[test]
    fn generic_formula_cross_check_on_random_traces() {
        use rand::{Rng, SeedableRng};
        let th = Theory::base();
        let formula = path_integrity_formula(false);
        let vd_formula = path_integrity_formula(true);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let agents = ["'A'", "'M1'", "'M2'", "'E'"];
        let wires = ["~w1", "~w2", "~w3", "''"];
        for _ in 0..1000 {
            let p = grd("~p1");
            let mut steps = vec![
                ev("StartBuild", vec![grd("'A'"), p.clone()]),
                ev("Add", vec![p.clone(), grd("'E'"), grd("~w3"), grd("''")]),
                ev("Add", vec![p.clone(), grd("'M2'"), grd("~w2"), grd("~w3")]),
                ev("Add", vec![p.clone(), grd("'M1'"), grd("~w1"), grd("~w2")]),
            ];
            let n = rng.gen_range(0..6);
            for _ in 0..n {
                let what = rng.gen_range(0..4);
                match what {
                    0 => {
                        let a = agents[rng.gen_range(0..4)];
                        let f = wires[rng.gen_range(0..4)];
                        let t = wires[rng.gen_range(0..4)];
                        steps.push(ev("Forward", vec![grd(a), grd(f), grd(t)]));
                    }
                    1 => {
                        let a = agents[rng.gen_range(1..4)];
                        steps.push(ev("Corrupt", vec![grd(a)]));
                    }
                    2 => {
                        let w = wires[rng.gen_range(0..3)];
                        steps.push(ev_know("K", vec![grd(w)], vec![w]));
                    }
                    _ => {
                        steps.push(ev("Complete", vec![grd("'E'"), p.clone()]));
                    }
                }
            }
            let trace = build_trace(steps);
            let spec_pi = check_path_integrity(&trace, &th).is_none();
            let (gen_pi, _) = eval_trace_formula(&trace, &th, &formula);
            assert_eq!(spec_pi, gen_pi, "path-integrity disagreement");
            let spec_vd = check_vd_path_integrity(&trace, &th).is_none();
            let (gen_vd, _) = eval_trace_formula(&trace, &th, &vd_formula);
            assert_eq!(spec_vd, gen_vd, "vd disagreement");
        }
    }

    #[test]
    fn secrecy_formula_on_traces() {
        let th = Theory::base();
        let f = secrecy_formula();
        let p = grd("~p1");
        // payload never derivable: holds
        let t1 = build_trace(vec![ev("StartBuild", vec![grd("'A'"), p.clone()])]);
        assert!(eval_trace_formula(&t1, &th, &f).0);
        // payload leaks and initiator honest: refuted
        let t2 = build_trace(vec![
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev_know("K", vec![p.clone()], vec!["~p1"]),
        ]);
        assert!(!eval_trace_formula(&t2, &th, &f).0);
        // payload leaks but initiator corrupt: holds
        let t3 = build_trace(vec![
            ev("Corrupt", vec![grd("'A'")]),
            ev("StartBuild", vec![grd("'A'"), p.clone()]),
            ev_know("K", vec![p.clone()], vec!["~p1"]),
        ]);
        assert!(eval_trace_formula(&t3, &th, &f).0);
    }
}
