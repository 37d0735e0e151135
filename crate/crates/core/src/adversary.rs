//! Dolev-Yao adversary: knowledge closure, derivability, saturation, and
//! the eight adversary rules (network absorption/injection, public and
//! fresh deduction, function application, agent corruption).

use std::collections::BTreeSet;

use crate::msr::{Fact, Phase, Rule, State};
use crate::term::{match_term, Signature, Subst, Sym, Term, Theory};

// ---------------------------------------------------------------------------
// Knowledge
// ---------------------------------------------------------------------------

/// Ground normalized terms known to the adversary, kept closed under
/// decomposition (projection, decryption with derivable keys). Public names
/// are derivable implicitly and are not stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Knowledge {
    terms: BTreeSet<Term>,
}

impl Knowledge {
    pub fn new() -> Knowledge {
        Knowledge::default()
    }

    pub fn terms(&self) -> impl Iterator<Item = &Term> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn contains(&self, t: &Term) -> bool {
        self.terms.contains(t)
    }

    /// Adds a term and recomputes the decomposition fixed point. Returns
    /// true if anything new was learned.
    pub fn absorb(&mut self, t: &Term, theory: &Theory) -> bool {
        let n = theory.normalize(t);
        if !self.terms.insert(n) {
            return false;
        }
        self.analyze(theory);
        true
    }

    /// Decomposition closure: for every oriented equation, if some known
    /// term matches a position of the left-hand side and the remaining
    /// arguments are derivable, the right-hand side instance is known too.
    fn analyze(&mut self, theory: &Theory) {
        loop {
            let mut new: Vec<Term> = Vec::new();
            for rule in theory.rules() {
                // ground right-hand sides (constants) are synthesizable
                // outright and add no knowledge
                if rule.rhs.is_ground() {
                    continue;
                }
                let (head_args, _) = match &rule.lhs {
                    Term::App(f, args) => (args, f),
                    _ => continue,
                };
                for (i, pos_pattern) in head_args.iter().enumerate() {
                    // only decompose structured positions; matching a bare
                    // variable against everything adds nothing
                    if matches!(pos_pattern, Term::Var(_, _)) {
                        continue;
                    }
                    for t in &self.terms {
                        let mut s = match match_term(pos_pattern, t) {
                            Some(s) => s,
                            None => continue,
                        };
                        let mut ok = true;
                        for (j, other) in head_args.iter().enumerate() {
                            if j == i {
                                continue;
                            }
                            let inst = s.apply(other);
                            if inst.is_ground() {
                                if !self.synth(&inst) {
                                    ok = false;
                                    break;
                                }
                            } else {
                                // try binding from known terms
                                let mut bound = false;
                                for u in &self.terms {
                                    let mut s2 = s.clone();
                                    if crate::term::match_into(&inst, u, &mut s2) {
                                        s = s2;
                                        bound = true;
                                        break;
                                    }
                                }
                                if !bound {
                                    ok = false;
                                    break;
                                }
                            }
                        }
                        if !ok {
                            continue;
                        }
                        let r = theory.normalize(&s.apply(&rule.rhs));
                        if r.is_ground() && !self.terms.contains(&r) {
                            new.push(r);
                        }
                    }
                }
            }
            if new.is_empty() {
                break;
            }
            for t in new {
                self.terms.insert(t);
            }
        }
    }

    /// Synthesis: can the adversary build `t` from known terms, public
    /// names, and constructor applications? `t` must be normalized.
    pub fn synth(&self, t: &Term) -> bool {
        match t {
            Term::Pub(_) => true,
            Term::Fresh(_) => self.terms.contains(t),
            Term::Var(_, _) => false,
            Term::App(_, args) => {
                self.terms.contains(t) || args.iter().all(|a| self.synth(a))
            }
        }
    }
}

/// True iff the adversary can derive `t` by decomposition of known terms
/// followed by constructor applications. Complete for subterm-convergent
/// theories: destructor steps in a minimal derivation only ever apply to
/// decomposition-reachable terms.
pub fn derivable(t: &Term, k: &Knowledge, theory: &Theory) -> bool {
    k.synth(&theory.normalize(t))
}

// ---------------------------------------------------------------------------
// Saturation
// ---------------------------------------------------------------------------

/// Budget for the blind saturation closure. Terms above `max_term_size`
/// are discarded; saturation stops early at `max_terms`. Membership answers
/// for goals within the size budget are unaffected by the cap: constructors
/// only grow terms and destructor results of synthesized terms are already
/// derivable.
#[derive(Clone, Copy, Debug)]
pub struct SaturationBudget {
    pub max_term_size: usize,
    pub max_terms: usize,
}

impl Default for SaturationBudget {
    fn default() -> Self {
        SaturationBudget {
            max_term_size: 9,
            max_terms: 200_000,
        }
    }
}

/// Closure of `k` under applying every signature symbol to known terms up
/// to `depth` rounds, normalizing results (which realizes decryption and
/// projection), plus public names in scope. Decomposition is computed to a
/// fixed point regardless of depth.
pub fn saturate(
    k: &Knowledge,
    depth: usize,
    sig: &Signature,
    theory: &Theory,
    publics: &[Term],
    budget: SaturationBudget,
) -> BTreeSet<Term> {
    let mut base = k.clone();
    for p in publics {
        base.absorb(p, theory);
    }
    base.absorb(&Term::empty(), theory);
    base.absorb(&Term::truth(), theory);
    let mut current: BTreeSet<Term> = base.terms.clone();

    for _ in 0..depth {
        if current.len() >= budget.max_terms {
            break;
        }
        // pool sorted by size so the budget recursion prunes early
        let mut pool: Vec<Term> = current.iter().cloned().collect();
        pool.sort_by_key(|t| (t.size(), t.clone()));
        let mut next = current.clone();
        for (sym, arity) in sig.symbols() {
            if arity == 0 {
                next.insert(Term::App(sym, vec![]));
                continue;
            }
            // enumerate argument tuples whose total size fits the budget
            fn tuples(
                pool: &[Term],
                arity: usize,
                remaining: usize,
                args: &mut Vec<Term>,
                sym: Sym,
                theory: &Theory,
                next: &mut BTreeSet<Term>,
                max_size: usize,
                max_terms: usize,
            ) -> bool {
                if next.len() >= max_terms {
                    return false;
                }
                if args.len() == arity {
                    let t = theory.normalize(&Term::App(sym, args.clone()));
                    if t.size() <= max_size {
                        next.insert(t);
                    }
                    return true;
                }
                let slots_left = arity - args.len() - 1;
                for cand in pool {
                    let sz = cand.size();
                    if sz + slots_left > remaining {
                        break; // pool sorted by size
                    }
                    args.push(cand.clone());
                    let ok = tuples(
                        pool,
                        arity,
                        remaining - sz,
                        args,
                        sym,
                        theory,
                        next,
                        max_size,
                        max_terms,
                    );
                    args.pop();
                    if !ok {
                        return false;
                    }
                }
                true
            }
            let mut args = Vec::new();
            tuples(
                &pool,
                arity,
                budget.max_term_size.saturating_sub(1),
                &mut args,
                sym,
                theory,
                &mut next,
                budget.max_term_size,
                budget.max_terms,
            );
            if next.len() >= budget.max_terms {
                break;
            }
        }
        // decomposition fixed point over the enlarged set
        let mut kk = Knowledge { terms: next };
        kk.analyze(theory);
        if kk.terms == current {
            break;
        }
        current = kk.terms;
    }
    current
}

// ---------------------------------------------------------------------------
// Derivation matching (pattern-directed injection)
// ---------------------------------------------------------------------------

/// Enumerates substitutions extending `init` such that the instantiated
/// pattern is derivable. Candidates come from replaying known terms that
/// match the pattern, or from constructing the pattern's shape out of
/// derivable pieces using at most `depth` new constructor applications.
/// Bare variables range over known terms and scenario public names.
pub fn derivation_matches(
    pattern: &Term,
    init: &Subst,
    k: &Knowledge,
    theory: &Theory,
    publics: &[Term],
    depth: usize,
) -> Vec<Subst> {
    let mut out: Vec<Subst> = Vec::new();
    let p = init.apply(pattern);
    if p.is_ground() {
        if derivable(&p, k, theory) {
            out.push(init.clone());
        }
        return out;
    }
    // replay known terms
    for t in k.terms() {
        let mut s = init.clone();
        if crate::term::match_into(&p, t, &mut s) {
            out.push(s);
        }
    }
    match &p {
        Term::Var(v, sort) => {
            // public names are always available
            for t in publics {
                if t.sort().subsort_of(*sort) {
                    let mut s = init.clone();
                    if s.bind(*v, *sort, t.clone()).is_ok() {
                        out.push(s);
                    }
                }
            }
            if Term::empty().sort().subsort_of(*sort) {
                let mut s = init.clone();
                if s.bind(*v, *sort, Term::empty()).is_ok() {
                    out.push(s);
                }
            }
        }
        Term::App(_, args) if depth > 0 => {
            // construct: satisfy each argument recursively
            let mut partial = vec![init.clone()];
            for a in args {
                let mut nextgen = Vec::new();
                for s in &partial {
                    for s2 in derivation_matches(a, s, k, theory, publics, depth - 1) {
                        nextgen.push(s2);
                    }
                }
                partial = nextgen;
                if partial.is_empty() {
                    break;
                }
            }
            out.extend(partial);
        }
        _ => {}
    }
    out.sort_by(|a, b| {
        let ka: Vec<_> = a.iter().map(|(v, t)| (*v, t.clone())).collect();
        let kb: Vec<_> = b.iter().map(|(v, t)| (*v, t.clone())).collect();
        ka.cmp(&kb)
    });
    out.dedup();
    // keep only substitutions whose full instance is derivable
    out.retain(|s| {
        let inst = s.apply(&p);
        inst.is_ground() && derivable(&inst, k, theory)
    });
    out
}

// ---------------------------------------------------------------------------
// Adversary rules
// ---------------------------------------------------------------------------

/// The eight adversary rules: Inject, Block, Adv_Pub, Adv_Fr, Fun_f
/// (one schematic entry), and the three corruption rules.
pub fn adversary_rules() -> Vec<Rule> {
    let x = Term::var("x");
    vec![
        Rule::new(
            "Inject",
            Phase::Adversary,
            vec![Fact::persist("K", vec![x.clone()])],
            vec![],
            vec![Fact::linear("Net", vec![x.clone()])],
        ),
        Rule::new(
            "Block",
            Phase::Adversary,
            vec![Fact::linear("Net", vec![x.clone()])],
            vec![Fact::linear("K", vec![x.clone()])],
            vec![Fact::persist("K", vec![x.clone()])],
        ),
        Rule::new(
            "Adv_Pub",
            Phase::Adversary,
            vec![],
            vec![Fact::linear("K", vec![Term::pvar("A")])],
            vec![Fact::persist("K", vec![Term::pvar("A")])],
        ),
        Rule::new(
            "Adv_Fr",
            Phase::Adversary,
            vec![Fact::linear("Fr", vec![Term::fvar("x")])],
            vec![Fact::linear("K", vec![Term::fvar("x")])],
            vec![Fact::persist("K", vec![Term::fvar("x")])],
        ),
        Rule::new(
            "Fun_f",
            Phase::Adversary,
            vec![Fact::persist("K", vec![Term::var("x1")])],
            vec![Fact::linear("K", vec![Term::var("x1")])],
            vec![Fact::persist("K", vec![Term::var("x1")])],
        ),
        Rule::new(
            "Corrupt_Ltk",
            Phase::Adversary,
            vec![Fact::persist("Ltk", vec![Term::pvar("A"), Term::var("k")])],
            vec![Fact::linear("Corrupt", vec![Term::pvar("A")])],
            vec![Fact::persist("K", vec![Term::var("k")])],
        ),
        Rule::new(
            "Corrupt_L",
            Phase::Adversary,
            vec![Fact::persist(
                "ShKey",
                vec![Term::pvar("A"), Term::pvar("B"), Term::var("k")],
            )],
            vec![Fact::linear("Corrupt", vec![Term::pvar("A")])],
            vec![Fact::persist("K", vec![Term::var("k")])],
        ),
        Rule::new(
            "Corrupt_R",
            Phase::Adversary,
            vec![Fact::persist(
                "ShKey",
                vec![Term::pvar("A"), Term::pvar("B"), Term::var("k")],
            )],
            vec![Fact::linear("Corrupt", vec![Term::pvar("B")])],
            vec![Fact::persist("K", vec![Term::var("k")])],
        ),
    ]
}

/// Static honest/corrupt split for one scenario. The session initiator is
/// always honest.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorruptionScenario {
    pub corrupt: BTreeSet<Sym>,
}

impl CorruptionScenario {
    pub fn is_corrupt(&self, agent: Sym) -> bool {
        self.corrupt.contains(&agent)
    }
}

/// Corruption instances available in `state` for the given scenario:
/// every key-release rule instance whose corrupted agent is marked corrupt,
/// in deterministic order.
pub fn corruption_instances(
    state: &State,
    scenario: &CorruptionScenario,
) -> Vec<(Rule, Subst)> {
    let rules = adversary_rules();
    let mut out = Vec::new();
    for rule in rules {
        let name = rule.name.as_str();
        if !name.starts_with("Corrupt") {
            continue;
        }
        let corrupt_var = match name {
            "Corrupt_Ltk" | "Corrupt_L" => Sym::new("A"),
            "Corrupt_R" => Sym::new("B"),
            _ => continue,
        };
        for s in crate::msr::premise_matches(&rule, state, &Subst::new()) {
            if let Some(Term::Pub(agent)) = s.get(corrupt_var) {
                if scenario.is_corrupt(*agent) {
                    out.push((rule.clone(), s));
                }
            }
        }
    }
    out.sort_by(|(r1, s1), (r2, s2)| {
        let k1: Vec<_> = s1.iter().map(|(v, t)| (*v, t.clone())).collect();
        let k2: Vec<_> = s2.iter().map(|(v, t)| (*v, t.clone())).collect();
        (r1.name, k1).cmp(&(r2.name, k2))
    });
    out
}

/// Adversary transitions in the unfolded semantics: Block instances for
/// every Net fact, Inject instances for knowledge terms, Adv_Fr for
/// available Fr facts, and key-release instances for corrupt agents.
/// The explorer folds Block and Inject into delivery steps; this operation
/// exists for direct state-level reasoning and tests.
pub fn adversary_transitions(
    state: &State,
    k: &Knowledge,
    scenario: &CorruptionScenario,
) -> Vec<(Rule, Subst)> {
    let rules = adversary_rules();
    let mut out: Vec<(Rule, Subst)> = Vec::new();
    for rule in &rules {
        match rule.name.as_str() {
            "Block" | "Adv_Fr" => {
                for s in crate::msr::premise_matches(rule, state, &Subst::new()) {
                    out.push((rule.clone(), s));
                }
            }
            "Inject" => {
                for t in k.terms() {
                    let mut s = Subst::new();
                    s.bind(Sym::new("x"), crate::term::Sort::Msg, t.clone())
                        .unwrap();
                    out.push((rule.clone(), s));
                }
            }
            _ => {}
        }
    }
    out.extend(corruption_instances(state, scenario));
    out.sort_by(|(r1, s1), (r2, s2)| {
        let k1: Vec<_> = s1.iter().map(|(v, t)| (*v, t.clone())).collect();
        let k2: Vec<_> = s2.iter().map(|(v, t)| (*v, t.clone())).collect();
        (r1.name, k1).cmp(&(r2.name, k2))
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::{parse_term, ParseMode, Signature};

    fn grd(s: &str) -> Term {
        parse_term(s, &Signature::base(), ParseMode::Ground).unwrap()
    }

    fn know(terms: &[&str]) -> Knowledge {
        let th = Theory::base();
        let mut k = Knowledge::new();
        for t in terms {
            k.absorb(&grd(t), &th);
        }
        k
    }

    #[test]
    fn saturate_decryption_with_known_key() {
        let th = Theory::base();
        let sig = Signature::base();
        let k = know(&["senc(~m1, ~k1)", "~k1"]);
        // decomposition alone already yields the payload
        assert!(k.contains(&grd("~m1")));
        // and the blind closure at depth 2 agrees
        let sat = saturate(&k, 2, &sig, &th, &[], SaturationBudget::default());
        assert!(sat.contains(&grd("~m1")));
    }

    #[test]
    fn saturate_cannot_open_asymmetric_without_key() {
        let th = Theory::base();
        let sig = Signature::base();
        let k = know(&["aenc(~m1, pk(~k1))"]);
        let sat = saturate(
            &k,
            3,
            &sig,
            &th,
            &[],
            SaturationBudget {
                max_term_size: 6,
                max_terms: 60_000,
            },
        );
        assert!(!sat.contains(&grd("~m1")));
        assert!(!derivable(&grd("~m1"), &k, &th));
    }

    #[test]
    fn saturate_includes_publics_and_their_pairs() {
        let th = Theory::base();
        let sig = Signature::base();
        let k = Knowledge::new();
        let pubs = [grd("'A'"), grd("'B'")];
        let sat = saturate(&k, 1, &sig, &th, &pubs, SaturationBudget::default());
        assert!(sat.contains(&grd("'A'")));
        assert!(sat.contains(&grd("'B'")));
        assert!(sat.contains(&grd("<'A', 'B'>")));
    }

    #[test]
    fn derivable_examples() {
        let th = Theory::base();
        // one application of h
        let k = know(&["~x1"]);
        assert!(derivable(&grd("h(~x1)"), &k, &th));
        // signing requires the key
        let k2 = know(&["~m1"]);
        assert!(!derivable(&grd("sign(~m1, ~k1)"), &k2, &th));
        // pairing of derivables
        assert!(derivable(&grd("<~x1, h(~x1)>"), &k, &th));
    }

    #[test]
    fn derivable_via_nested_decomposition() {
        let th = Theory::base();
        // the key itself is wrapped in a pair inside a symmetric encryption
        let k = know(&["senc(<~k2, 'A'>, ~k1)", "~k1", "senc(~m1, ~k2)"]);
        assert!(k.contains(&grd("~k2")));
        assert!(derivable(&grd("~m1"), &k, &th));
    }

    #[test]
    fn knowledge_monotonicity_under_union() {
        let th = Theory::base();
        let sig = Signature::base();
        let k1 = know(&["senc(~m1, ~k1)"]);
        let k2 = know(&["senc(~m1, ~k1)", "~k1"]);
        let b = SaturationBudget {
            max_term_size: 7,
            max_terms: 50_000,
        };
        let s1 = saturate(&k1, 1, &sig, &th, &[], b);
        let s2 = saturate(&k2, 1, &sig, &th, &[], b);
        assert!(s1.is_subset(&s2));
    }

    #[test]
    fn saturation_soundness_replay() {
        // every element of the closure is derivable by the goal-directed
        // procedure over the same base
        let th = Theory::base();
        let sig = Signature::base();
        let k = know(&["senc(~m1, ~k1)", "~k1", "'A'"]);
        let sat = saturate(
            &k,
            1,
            &sig,
            &th,
            &[grd("'A'")],
            SaturationBudget {
                max_term_size: 5,
                max_terms: 20_000,
            },
        );
        for t in &sat {
            assert!(derivable(t, &k, &th), "not derivable: {t}");
        }
    }

    #[test]
    fn derivation_matching_replays_and_constructs() {
        let th = Theory::base();
        let k = know(&["senc(~m1, ~k1)", "~k1", "~p1"]);
        // replay: pattern matches a known term, binding its parts
        let pat = parse_term("senc(m, k)", &Signature::base(), ParseMode::Pattern).unwrap();
        let ms = derivation_matches(&pat, &Subst::new(), &k, &th, &[], 2);
        assert!(ms
            .iter()
            .any(|s| s.get(Sym::new("m")) == Some(&grd("~m1"))));
        // construct: senc(~p1, ~k1) is not known but is derivable
        assert!(ms
            .iter()
            .any(|s| s.get(Sym::new("m")) == Some(&grd("~p1"))
                && s.get(Sym::new("k")) == Some(&grd("~k1"))));
        // all results instantiate to derivable terms
        for s in &ms {
            assert!(derivable(&s.apply(&pat), &k, &th));
        }
    }

    #[test]
    fn derivation_matching_depth_bound() {
        let th = Theory::base();
        let k = know(&["~a1", "~k1"]);
        // pattern needs two constructor applications
        let pat = parse_term("senc(h(x), k)", &Signature::base(), ParseMode::Pattern).unwrap();
        let at2 = derivation_matches(&pat, &Subst::new(), &k, &th, &[], 2);
        assert!(!at2.is_empty());
        let at1 = derivation_matches(&pat, &Subst::new(), &k, &th, &[], 1);
        assert!(at1.is_empty());
    }

    #[test]
    fn corruption_releases_keys() {
        let th = Theory::base();
        let mut state = State::new();
        state.add(Fact::persist("Ltk", vec![grd("'M2'"), grd("~k2")]));
        state.add(Fact::persist(
            "ShKey",
            vec![grd("'M1'"), grd("'M2'"), grd("~k12")],
        ));
        let scenario = CorruptionScenario {
            corrupt: [Sym::new("M2")].into_iter().collect(),
        };
        let inst = corruption_instances(&state, &scenario);
        // Corrupt_Ltk releasing ~k2 and Corrupt_R releasing ~k12
        assert_eq!(inst.len(), 2);
        let names: Vec<&str> = inst.iter().map(|(r, _)| r.name.as_str()).collect();
        assert!(names.contains(&"Corrupt_Ltk"));
        assert!(names.contains(&"Corrupt_R"));
        // events name the corrupted agent
        let mut ctx = crate::msr::ExecCtx::new();
        let mut st = state.clone();
        let (rule, s) = &inst[0];
        let applied = crate::msr::apply_rule(&mut st, rule, s, &mut ctx, &th, 0).unwrap();
        assert_eq!(applied.events[0].fact.sym, Sym::new("Corrupt"));
        assert_eq!(applied.events[0].fact.args[0], grd("'M2'"));
    }

    #[test]
    fn adversary_transitions_block_everything_on_net() {
        let state = {
            let mut s = State::new();
            s.add(Fact::linear("Net", vec![grd("~m1")]));
            s
        };
        let k = Knowledge::new();
        let scenario = CorruptionScenario::default();
        let ts = adversary_transitions(&state, &k, &scenario);
        assert!(ts
            .iter()
            .any(|(r, s)| r.name.as_str() == "Block" && s.get(Sym::new("x")) == Some(&grd("~m1"))));
    }

    #[test]
    fn eight_adversary_rules_exist() {
        let names: BTreeSet<&str> = adversary_rules().iter().map(|r| r.name.as_str()).collect();
        for n in [
            "Inject",
            "Block",
            "Adv_Pub",
            "Adv_Fr",
            "Fun_f",
            "Corrupt_Ltk",
            "Corrupt_L",
            "Corrupt_R",
        ] {
            assert!(names.contains(n), "missing rule {n}");
        }
    }
}
