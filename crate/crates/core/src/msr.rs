//! Multiset rewriting: facts, rules, states, traces, and rule application.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::term::{match_into, Subst, Sym, Sort, Term, Theory};

// ---------------------------------------------------------------------------
// Facts
// ---------------------------------------------------------------------------

/// A named predicate over terms. Persistent facts are never removed from a
/// state; linear facts are consumed by rule application.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Fact {
    pub sym: Sym,
    pub persistent: bool,
    pub args: Vec<Term>,
}

impl Fact {
    pub fn new(name: &str, persistent: bool, args: Vec<Term>) -> Fact {
        Fact {
            sym: Sym::new(name),
            persistent,
            args,
        }
    }

    pub fn linear(name: &str, args: Vec<Term>) -> Fact {
        Fact::new(name, false, args)
    }

    pub fn persist(name: &str, args: Vec<Term>) -> Fact {
        Fact::new(name, true, args)
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_ground)
    }

    pub fn apply(&self, s: &Subst) -> Fact {
        Fact {
            sym: self.sym,
            persistent: self.persistent,
            args: self.args.iter().map(|a| s.apply(a)).collect(),
        }
    }

    pub fn normalize(&self, th: &Theory) -> Fact {
        Fact {
            sym: self.sym,
            persistent: self.persistent,
            args: self.args.iter().map(|a| th.normalize(a)).collect(),
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<(Sym, Sort)>) {
        for a in &self.args {
            a.collect_vars(out);
        }
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.persistent {
            write!(f, "!")?;
        }
        write!(f, "{}(", self.sym)?;
        for (i, a) in self.args.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}", a)?;
        }
        write!(f, ")")
    }
}

impl fmt::Debug for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

/// Fact symbol declarations: arity plus persistence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FactDecls {
    decls: BTreeMap<Sym, (usize, bool)>,
}

impl FactDecls {
    /// Declarations for the reserved fact symbols shared by all protocols.
    pub fn reserved() -> FactDecls {
        let mut d = FactDecls::default();
        for (name, arity, persistent) in [
            ("Net", 1, false),
            ("K", 1, true),
            ("Pk", 2, true),
            ("Ltk", 2, true),
            ("ShKey", 3, true),
            ("Fr", 1, false),
            ("Add", 4, false),
            ("StartBuild", 2, false),
            ("Forward", 3, false),
            ("Backward", 3, false),
            ("Complete", 2, false),
            ("Corrupt", 1, false),
            ("Equal", 2, false),
        ] {
            d.decls.insert(Sym::new(name), (arity, persistent));
        }
        d
    }

    pub fn declare(&mut self, name: &str, arity: usize, persistent: bool) -> Result<Sym, MsrError> {
        let sym = Sym::new(name);
        if let Some(&(a, p)) = self.decls.get(&sym) {
            if a != arity || p != persistent {
                return Err(MsrError::FactRedeclared {
                    name: name.to_owned(),
                });
            }
            return Ok(sym);
        }
        self.decls.insert(sym, (arity, persistent));
        Ok(sym)
    }

    pub fn get(&self, sym: Sym) -> Option<(usize, bool)> {
        self.decls.get(&sym).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Sym, usize, bool)> + '_ {
        self.decls.iter().map(|(s, (a, p))| (*s, *a, *p))
    }

    pub fn check(&self, fact: &Fact) -> Result<(), MsrError> {
        match self.get(fact.sym) {
            None => Err(MsrError::UnknownFact {
                name: fact.sym.as_str().to_owned(),
            }),
            Some((arity, persistent)) => {
                if arity != fact.args.len() || persistent != fact.persistent {
                    Err(MsrError::FactArity {
                        name: fact.sym.as_str().to_owned(),
                        expected: arity,
                        got: fact.args.len(),
                    })
                } else {
                    Ok(())
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Rules
// ---------------------------------------------------------------------------

/// Protocol phase of a rule; also the primary key of the deterministic
/// transition ordering in the explorer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Setup,
    Construction,
    Forwarding,
    Adversary,
    Receive,
    Verification,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::Construction => "construction",
            Phase::Forwarding => "forwarding",
            Phase::Adversary => "adversary",
            Phase::Receive => "receive",
            Phase::Verification => "verification",
        }
    }

    pub fn from_name(s: &str) -> Option<Phase> {
        Some(match s {
            "setup" => Phase::Setup,
            "construction" => Phase::Construction,
            "forwarding" => Phase::Forwarding,
            "adversary" => Phase::Adversary,
            "receive" => Phase::Receive,
            "verification" => Phase::Verification,
            _ => return None,
        })
    }
}

/// How the scenario driver instantiates a rule during the deterministic
/// setup/construction prologue. `Explore` rules are left to the bounded
/// search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Drive {
    Explore,
    /// Once per agent on the path, binding the named public variable.
    EachAgent(Sym),
    /// Once per intermediate agent.
    EachMid(Sym),
    /// Once per non-initiator agent on the path.
    EachOtherAgent(Sym),
    /// Once per adjacent path pair, binding (earlier, later).
    Adjacent(Sym, Sym),
    /// Exactly once, with explicit role bindings.
    Once(Vec<(Sym, Role)>),
    /// Construction start; role bindings as for `Once`.
    Create(Vec<(Sym, Role)>),
    /// Once per intermediate in reverse path order, binding the agent var.
    Wrap(Sym),
    /// Once per intermediate in forward path order, binding the agent var.
    Plan(Sym),
    /// Construction finish, releasing the message.
    Send,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Final,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Initiator => "initiator",
            Role::Final => "final",
        }
    }
}

/// A rewrite rule `premises --[ events ]-> conclusions`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub name: Sym,
    pub phase: Phase,
    pub premises: Vec<Fact>,
    pub events: Vec<Fact>,
    pub conclusions: Vec<Fact>,
    pub drive: Drive,
}

impl Rule {
    pub fn new(
        name: &str,
        phase: Phase,
        premises: Vec<Fact>,
        events: Vec<Fact>,
        conclusions: Vec<Fact>,
    ) -> Rule {
        Rule {
            name: Sym::new(name),
            phase,
            premises,
            events,
            conclusions,
            drive: Drive::Explore,
        }
    }

    pub fn drive(mut self, drive: Drive) -> Rule {
        self.drive = drive;
        self
    }

    /// Variables of `Fr` premises; these are instantiated with fresh names
    /// at application time rather than matched against state facts.
    pub fn fresh_vars(&self) -> Vec<(Sym, Sort)> {
        let mut out = Vec::new();
        for p in &self.premises {
            if p.sym.as_str() == "Fr" {
                if let Some(Term::Var(v, s)) = p.args.first() {
                    out.push((*v, *s));
                }
            }
        }
        out
    }

    /// Checks that every non-public variable in events and conclusions is
    /// bound by a premise or introduced through `Fr`.
    pub fn check_bound_vars(&self) -> Result<(), MsrError> {
        let mut bound = BTreeSet::new();
        for p in &self.premises {
            p.collect_vars(&mut bound);
        }
        let mut used = BTreeSet::new();
        for f in self.events.iter().chain(&self.conclusions) {
            f.collect_vars(&mut used);
        }
        for (v, s) in used {
            if s != Sort::Pub && !bound.contains(&(v, s)) {
                return Err(MsrError::UnboundVariable {
                    rule: self.name.as_str().to_owned(),
                    var: v.as_str().to_owned(),
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// States
// ---------------------------------------------------------------------------

/// A multiset of ground facts: a linear pool with multiplicities plus a
/// persistent set.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct State {
    pub linear: BTreeMap<Fact, usize>,
    pub persistent: BTreeSet<Fact>,
}

impl State {
    pub fn new() -> State {
        State::default()
    }

    pub fn add(&mut self, fact: Fact) {
        if fact.persistent {
            self.persistent.insert(fact);
        } else {
            *self.linear.entry(fact).or_insert(0) += 1;
        }
    }

    pub fn remove_linear(&mut self, fact: &Fact) -> bool {
        match self.linear.get_mut(fact) {
            Some(n) if *n > 1 => {
                *n -= 1;
                true
            }
            Some(_) => {
                self.linear.remove(fact);
                true
            }
            None => false,
        }
    }

    pub fn count_linear(&self, fact: &Fact) -> usize {
        self.linear.get(fact).copied().unwrap_or(0)
    }

    pub fn has_persistent(&self, fact: &Fact) -> bool {
        self.persistent.contains(fact)
    }

    pub fn linear_facts(&self) -> impl Iterator<Item = (&Fact, usize)> {
        self.linear.iter().map(|(f, n)| (f, *n))
    }

    /// Removes and returns all linear `Net` facts, in canonical order.
    pub fn drain_net(&mut self) -> Vec<Term> {
        let net = Sym::new("Net");
        let mut out = Vec::new();
        let keys: Vec<Fact> = self
            .linear
            .keys()
            .filter(|f| f.sym == net)
            .cloned()
            .collect();
        for k in keys {
            let n = self.linear.remove(&k).unwrap_or(0);
            for _ in 0..n {
                out.push(k.args[0].clone());
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// One recorded event: an abstract monotone time marker, the ground event
/// fact, the rule that produced it, and the index of the adversary-knowledge
/// snapshot in force at that marker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub marker: usize,
    pub fact: Fact,
    pub rule: Sym,
    pub know_version: usize,
}

pub type Trace = Vec<TraceEvent>;

/// Per-execution counters: fresh-name generation and the trace clock.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecCtx {
    fresh_counter: usize,
    next_marker: usize,
}

impl ExecCtx {
    pub fn new() -> ExecCtx {
        ExecCtx::default()
    }

    /// Returns a fresh name never produced before in this execution. The
    /// hint keeps reports readable; uniqueness comes from the counter.
    pub fn gen_fresh(&mut self, hint: &str) -> Term {
        self.fresh_counter += 1;
        let base = if hint.is_empty() { "n" } else { hint };
        Term::fresh_named(&format!("{}{}", base, self.fresh_counter))
    }

    pub fn next_marker(&mut self) -> usize {
        let m = self.next_marker;
        self.next_marker += 1;
        m
    }

    pub fn clock(&self) -> usize {
        self.next_marker
    }
}

// ---------------------------------------------------------------------------
// Rule instantiation and application
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MsrError {
    #[error("unknown fact symbol {name}")]
    UnknownFact { name: String },
    #[error("fact {name} expects {expected} arguments, got {got}")]
    FactArity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("fact {name} redeclared with a different arity or persistence")]
    FactRedeclared { name: String },
    #[error("rule {rule}: variable {var} in conclusion or event is unbound")]
    UnboundVariable { rule: String, var: String },
    #[error("rule {rule} is not applicable with the given substitution")]
    NotApplicable { rule: String },
    #[error("rule {rule}: instantiated fact {fact} is not ground")]
    NotGround { rule: String, fact: String },
}

/// Enumerates all substitutions that satisfy the rule premises in `state`.
///
/// Linear premises are matched injectively against the linear pool (two
/// equal premises need two copies); persistent premises match by presence.
/// `Fr` premises match vacuously: their variables are instantiated with
/// fresh names at application time. The result order is deterministic.
pub fn premise_matches(rule: &Rule, state: &State, init: &Subst) -> Vec<Subst> {
    // skip Fr premises: their variables are fresh-instantiated at apply time
    let fr = Sym::new("Fr");
    let premises: Vec<&Fact> = rule.premises.iter().filter(|p| p.sym != fr).collect();
    premise_matches_list(&premises, state, init)
}

/// Premise matching over an explicit premise list.
pub fn premise_matches_list(premises: &[&Fact], state: &State, init: &Subst) -> Vec<Subst> {
    let mut results = Vec::new();
    let mut used: BTreeMap<Fact, usize> = BTreeMap::new();

    fn go(
        premises: &[&Fact],
        idx: usize,
        state: &State,
        subst: Subst,
        used: &mut BTreeMap<Fact, usize>,
        results: &mut Vec<Subst>,
    ) {
        if idx == premises.len() {
            results.push(subst);
            return;
        }
        let premise = premises[idx];
        if premise.persistent {
            for fact in &state.persistent {
                if fact.sym != premise.sym {
                    continue;
                }
                let mut s = subst.clone();
                if match_fact(premise, fact, &mut s) {
                    go(premises, idx + 1, state, s, used, results);
                }
            }
        } else {
            for (fact, n) in state.linear_facts() {
                if fact.sym != premise.sym {
                    continue;
                }
                let consumed = used.get(fact).copied().unwrap_or(0);
                if consumed >= n {
                    continue;
                }
                let mut s = subst.clone();
                if match_fact(premise, fact, &mut s) {
                    *used.entry(fact.clone()).or_insert(0) += 1;
                    go(premises, idx + 1, state, s, used, results);
                    let c = used.get_mut(fact).unwrap();
                    *c -= 1;
                    if *c == 0 {
                        used.remove(fact);
                    }
                }
            }
        }
    }

    go(premises, 0, state, init.clone(), &mut used, &mut results);
    results.sort_by(|a, b| subst_key(a).cmp(&subst_key(b)));
    results.dedup();
    results
}

pub fn subst_key(s: &Subst) -> Vec<(Sym, Term)> {
    s.iter().map(|(v, t)| (*v, t.clone())).collect()
}

pub fn match_fact(pattern: &Fact, ground: &Fact, subst: &mut Subst) -> bool {
    pattern.sym == ground.sym
        && pattern.args.len() == ground.args.len()
        && pattern
            .args
            .iter()
            .zip(&ground.args)
            .all(|(p, g)| match_into(p, g, subst))
}

/// All (rule, substitution) pairs applicable in `state`, in deterministic
/// order (phase, rule name, substitution).
pub fn applicable_instances<'r>(
    state: &State,
    rules: impl IntoIterator<Item = &'r Rule>,
) -> Vec<(&'r Rule, Subst)> {
    let mut out: Vec<(&Rule, Subst)> = Vec::new();
    for rule in rules {
        for s in premise_matches(rule, state, &Subst::new()) {
            out.push((rule, s));
        }
    }
    out.sort_by(|(r1, s1), (r2, s2)| {
        (r1.phase, r1.name, subst_key(s1)).cmp(&(r2.phase, r2.name, subst_key(s2)))
    });
    out
}

/// Outcome of one rule application: the events appended to the trace (with
/// markers already assigned) and the substitution completed with fresh
/// instantiations.
#[derive(Clone, Debug)]
pub struct Applied {
    pub events: Vec<TraceEvent>,
    pub subst: Subst,
}

/// Applies `rule` under `subst`: removes the linear premise instances,
/// adds the normalized conclusions, and returns the event instances at
/// fresh time markers. `Fr` premises trigger fresh-name generation.
pub fn apply_rule(
    state: &mut State,
    rule: &Rule,
    subst: &Subst,
    ctx: &mut ExecCtx,
    theory: &Theory,
    know_version: usize,
) -> Result<Applied, MsrError> {
    let mut s = subst.clone();
    for (v, sort) in rule.fresh_vars() {
        if s.get(v).is_none() {
            let hint = v.as_str();
            let t = ctx.gen_fresh(hint);
            s.bind(v, sort, t).expect("fresh name has sort fresh");
        }
    }

    let fr = Sym::new("Fr");
    // check and consume premises
    let mut removed: Vec<Fact> = Vec::new();
    for p in &rule.premises {
        if p.sym == fr {
            continue;
        }
        let inst = p.apply(&s).normalize(theory);
        if !inst.is_ground() {
            return Err(MsrError::NotGround {
                rule: rule.name.as_str().to_owned(),
                fact: format!("{inst}"),
            });
        }
        if inst.persistent {
            if !state.has_persistent(&inst) {
                // roll back
                for f in removed {
                    state.add(f);
                }
                return Err(MsrError::NotApplicable {
                    rule: rule.name.as_str().to_owned(),
                });
            }
        } else if state.remove_linear(&inst) {
            removed.push(inst);
        } else {
            for f in removed {
                state.add(f);
            }
            return Err(MsrError::NotApplicable {
                rule: rule.name.as_str().to_owned(),
            });
        }
    }

    for c in &rule.conclusions {
        let inst = c.apply(&s).normalize(theory);
        if !inst.is_ground() {
            return Err(MsrError::NotGround {
                rule: rule.name.as_str().to_owned(),
                fact: format!("{inst}"),
            });
        }
        state.add(inst);
    }

    let mut events = Vec::new();
    for e in &rule.events {
        let inst = e.apply(&s).normalize(theory);
        if !inst.is_ground() {
            return Err(MsrError::NotGround {
                rule: rule.name.as_str().to_owned(),
                fact: format!("{inst}"),
            });
        }
        events.push(TraceEvent {
            marker: ctx.next_marker(),
            fact: inst,
            rule: rule.name,
            know_version,
        });
    }

    Ok(Applied { events, subst: s })
}

/// True iff every `Equal(x, y)` event in the trace relates terms with equal
/// normal forms. Traces failing this are discarded by the explorer.
pub fn eval_restrictions(trace: &[TraceEvent], theory: &Theory) -> bool {
    let equal = Sym::new("Equal");
    trace.iter().all(|ev| {
        ev.fact.sym != equal
            || theory.normalize(&ev.fact.args[0]) == theory.normalize(&ev.fact.args[1])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::{ParseMode, Signature, parse_term};

    fn pat(s: &str) -> Term {
        parse_term(s, &Signature::base(), ParseMode::Pattern).unwrap()
    }

    fn grd(s: &str) -> Term {
        parse_term(s, &Signature::base(), ParseMode::Ground).unwrap()
    }

    /// The forwarding rule from the running example: an agent detects a
    /// message encrypted with its public key, decrypts, and forwards.
    fn dec_fwd() -> Rule {
        Rule::new(
            "Dec_Fwd",
            Phase::Forwarding,
            vec![
                Fact::linear("Net", vec![pat("aenc(m, pk(k))")]),
                Fact::persist("Ltk", vec![pat("$A"), pat("k")]),
            ],
            vec![Fact::linear(
                "Forward",
                vec![pat("$A"), pat("aenc(m, pk(k))"), pat("m")],
            )],
            vec![Fact::linear("Net", vec![pat("m")])],
        )
    }

    #[test]
    fn applicable_instances_on_example_state() {
        let mut state = State::new();
        state.add(Fact::linear("Net", vec![grd("aenc(~m1, pk(~k1))")]));
        state.add(Fact::persist("Ltk", vec![grd("'B'"), grd("~k1")]));
        let rule = dec_fwd();
        let inst = applicable_instances(&state, [&rule]);
        assert_eq!(inst.len(), 1);
        let (_, s) = &inst[0];
        assert_eq!(s.get(Sym::new("A")), Some(&grd("'B'")));
        assert_eq!(s.get(Sym::new("k")), Some(&grd("~k1")));
        assert_eq!(s.get(Sym::new("m")), Some(&grd("~m1")));
    }

    #[test]
    fn applicable_instances_empty_state() {
        let state = State::new();
        let rule = dec_fwd();
        assert!(applicable_instances(&state, [&rule]).is_empty());
    }

    #[test]
    fn multiset_premises_need_multiplicity() {
        // a rule consuming Net(x) twice only fires when two copies exist
        let rule = Rule::new(
            "TwoNets",
            Phase::Forwarding,
            vec![
                Fact::linear("Net", vec![pat("x")]),
                Fact::linear("Net", vec![pat("x")]),
            ],
            vec![],
            vec![],
        );
        let mut state = State::new();
        state.add(Fact::linear("Net", vec![grd("~a1")]));
        assert!(applicable_instances(&state, [&rule]).is_empty());
        state.add(Fact::linear("Net", vec![grd("~a1")]));
        let inst = applicable_instances(&state, [&rule]);
        // both copies consumed by one instance
        assert_eq!(inst.len(), 1);

        // oracle: enumerate all injective assignments of premises to copies
        // of facts; with two identical premises and two identical copies
        // exactly one distinct substitution survives deduplication.
        let mut count = 0;
        let copies = ["~a1", "~a1"];
        for i in 0..copies.len() {
            for j in 0..copies.len() {
                if i != j && copies[i] == copies[j] {
                    count += 1;
                }
            }
        }
        assert!(count >= 1);
    }

    #[test]
    fn apply_rule_consumes_and_produces() {
        let th = Theory::base();
        let mut state = State::new();
        state.add(Fact::linear("Net", vec![grd("aenc(~m1, pk(~k1))")]));
        state.add(Fact::persist("Ltk", vec![grd("'B'"), grd("~k1")]));
        let rule = dec_fwd();
        let inst = applicable_instances(&state, [&rule]);
        let (_, s) = &inst[0];
        let mut ctx = ExecCtx::new();
        let applied = apply_rule(&mut state, &rule, s, &mut ctx, &th, 0).unwrap();
        // Net payload replaced by the decrypted body, Ltk kept
        assert_eq!(state.count_linear(&Fact::linear("Net", vec![grd("~m1")])), 1);
        assert_eq!(
            state.count_linear(&Fact::linear("Net", vec![grd("aenc(~m1, pk(~k1))")])),
            0
        );
        assert!(state.has_persistent(&Fact::persist("Ltk", vec![grd("'B'"), grd("~k1")])));
        assert_eq!(applied.events.len(), 1);
        assert_eq!(applied.events[0].fact.sym, Sym::new("Forward"));
        assert_eq!(applied.events[0].marker, 0);
    }

    #[test]
    fn apply_rule_with_fresh_premise() {
        // Gen_Ltk: Fr(ltk) --> !Ltk(A, ltk), !Pk(A, pk(ltk)), Net(pk(ltk))
        let th = Theory::base();
        let rule = Rule::new(
            "Gen_Ltk",
            Phase::Setup,
            vec![Fact::linear("Fr", vec![Term::fvar("ltk")])],
            vec![],
            vec![
                Fact::persist("Ltk", vec![pat("$A"), Term::fvar("ltk")]),
                Fact::persist("Pk", vec![pat("$A"), Term::app("pk", vec![Term::fvar("ltk")])]),
                Fact::linear("Net", vec![Term::app("pk", vec![Term::fvar("ltk")])]),
            ],
        );
        let mut state = State::new();
        let mut ctx = ExecCtx::new();
        let mut s = Subst::new();
        s.bind(Sym::new("A"), Sort::Pub, grd("'B'")).unwrap();
        apply_rule(&mut state, &rule, &s, &mut ctx, &th, 0).unwrap();
        assert_eq!(state.persistent.len(), 2);
        assert_eq!(state.linear.len(), 1);
        // a second application uses a distinct fresh name
        apply_rule(&mut state, &rule, &s, &mut ctx, &th, 0).unwrap();
        assert_eq!(state.persistent.len(), 4);
    }

    #[test]
    fn gen_fresh_uniqueness() {
        let mut ctx = ExecCtx::new();
        let a = ctx.gen_fresh("n");
        let b = ctx.gen_fresh("n");
        assert_ne!(a, b);
        let mut seen = BTreeSet::new();
        for _ in 0..10_000 {
            assert!(seen.insert(ctx.gen_fresh("x")));
        }
        assert_eq!(seen.len(), 10_000);
    }

    #[test]
    fn restriction_evaluation() {
        let th = Theory::base();
        let mk = |fact: Fact| TraceEvent {
            marker: 0,
            fact,
            rule: Sym::new("t"),
            know_version: 0,
        };
        // verify(sign(p,k), p, pk(k)) = true passes the Equal test
        let good = mk(Fact::linear(
            "Equal",
            vec![
                grd("verify(sign(~p1, ~k1), ~p1, pk(~k1))"),
                Term::truth(),
            ],
        ));
        assert!(eval_restrictions(&[good], &th));
        // distinct normal forms fail
        let bad = mk(Fact::linear(
            "Equal",
            vec![grd("h(~a1)"), grd("h(~b1)")],
        ));
        assert!(!eval_restrictions(&[bad], &th));
        // the empty trace passes vacuously
        assert!(eval_restrictions(&[], &th));
    }

    #[test]
    fn unbound_variable_check() {
        let ok = dec_fwd();
        assert!(ok.check_bound_vars().is_ok());
        let bad = Rule::new(
            "Bad",
            Phase::Forwarding,
            vec![],
            vec![],
            vec![Fact::linear("Net", vec![pat("m")])],
        );
        assert!(matches!(
            bad.check_bound_vars(),
            Err(MsrError::UnboundVariable { .. })
        ));
        // public variables may appear unbound (instantiated by the driver)
        let pub_ok = Rule::new(
            "PubOk",
            Phase::Setup,
            vec![],
            vec![],
            vec![Fact::linear("Tok", vec![pat("$A")])],
        );
        assert!(pub_ok.check_bound_vars().is_ok());
    }

    #[test]
    fn linear_consumption_accounting() {
        // random sequences of a producer and a consumer keep counts exact
        let th = Theory::base();
        let producer = Rule::new(
            "Produce",
            Phase::Setup,
            vec![Fact::linear("Fr", vec![Term::fvar("x")])],
            vec![],
            vec![Fact::linear("Tok", vec![grd("'A'")])],
        );
        let consumer = Rule::new(
            "Consume",
            Phase::Forwarding,
            vec![Fact::linear("Tok", vec![pat("$A")])],
            vec![],
            vec![],
        );
        let mut state = State::new();
        let mut ctx = ExecCtx::new();
        let mut expected = 0usize;
        for i in 0..100 {
            if i % 3 != 2 {
                apply_rule(&mut state, &producer, &Subst::new(), &mut ctx, &th, 0).unwrap();
                expected += 1;
            } else {
                let inst = applicable_instances(&state, [&consumer]);
                if let Some((_, s)) = inst.first() {
                    apply_rule(&mut state, &consumer, s, &mut ctx, &th, 0).unwrap();
                    expected -= 1;
                }
            }
            assert_eq!(
                state.count_linear(&Fact::linear("Tok", vec![grd("'A'")])),
                expected
            );
        }
    }

    #[test]
    fn trace_markers_strictly_increase() {
        let th = Theory::base();
        let rule = Rule::new(
            "Emit",
            Phase::Forwarding,
            vec![],
            vec![
                Fact::linear("Forward", vec![grd("'A'"), grd("''"), grd("''")]),
                Fact::linear("Forward", vec![grd("'B'"), grd("''"), grd("''")]),
            ],
            vec![],
        );
        let mut state = State::new();
        let mut ctx = ExecCtx::new();
        let mut last = None;
        let mut trace = Vec::new();
        for _ in 0..10 {
            let a = apply_rule(&mut state, &rule, &Subst::new(), &mut ctx, &th, 0).unwrap();
            trace.extend(a.events);
        }
        for ev in &trace {
            if let Some(prev) = last {
                assert!(ev.marker > prev);
            }
            last = Some(ev.marker);
        }
        assert_eq!(trace.len(), 20);
    }
}
