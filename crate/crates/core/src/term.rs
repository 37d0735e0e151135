//! Order-sorted terms, substitutions, syntactic matching, and rewriting
//! modulo a subterm-convergent equational theory.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::{OnceLock, RwLock};

use thiserror::Error;

// ---------------------------------------------------------------------------
// Symbol interning
// ---------------------------------------------------------------------------

struct Interner {
    by_name: HashMap<&'static str, u32>,
    names: Vec<&'static str>,
}

static INTERNER: OnceLock<RwLock<Interner>> = OnceLock::new();

fn interner() -> &'static RwLock<Interner> {
    INTERNER.get_or_init(|| {
        RwLock::new(Interner {
            by_name: HashMap::new(),
            names: Vec::new(),
        })
    })
}

/// Interned identifier. Equality is by token; ordering is lexicographic on
/// the resolved name so that canonical orderings are stable across runs.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sym(u32);

impl Sym {
    pub fn new(name: &str) -> Sym {
        {
            let int = interner().read().unwrap();
            if let Some(&id) = int.by_name.get(name) {
                return Sym(id);
            }
        }
        let mut int = interner().write().unwrap();
        if let Some(&id) = int.by_name.get(name) {
            return Sym(id);
        }
        let leaked: &'static str = Box::leak(name.to_owned().into_boxed_str());
        let id = int.names.len() as u32;
        int.names.push(leaked);
        int.by_name.insert(leaked, id);
        Sym(id)
    }

    pub fn as_str(self) -> &'static str {
        interner().read().unwrap().names[self.0 as usize]
    }
}

impl PartialOrd for Sym {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Sym {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        if self.0 == other.0 {
            std::cmp::Ordering::Equal
        } else {
            self.as_str().cmp(other.as_str())
        }
    }
}

impl fmt::Display for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Sym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

// ---------------------------------------------------------------------------
// Sorts
// ---------------------------------------------------------------------------

/// Top-level sorts `msg` and `fact`, with `pub < msg` and `fresh < msg`.
/// `fact` is incomparable with the message sorts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sort {
    Pub,
    Fresh,
    Msg,
    Fact,
}

impl Sort {
    pub fn subsort_of(self, sup: Sort) -> bool {
        self == sup || matches!((self, sup), (Sort::Pub, Sort::Msg) | (Sort::Fresh, Sort::Msg))
    }
}

// ---------------------------------------------------------------------------
// Terms
// ---------------------------------------------------------------------------

/// A symbolic value: public name, fresh name, sorted variable, or function
/// application. All function symbols map message arguments to `msg`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Term {
    Pub(Sym),
    Fresh(Sym),
    Var(Sym, Sort),
    App(Sym, Vec<Term>),
}

impl Term {
    pub fn pub_named(name: &str) -> Term {
        Term::Pub(Sym::new(name))
    }

    pub fn fresh_named(name: &str) -> Term {
        Term::Fresh(Sym::new(name))
    }

    /// Message-sorted variable.
    pub fn var(name: &str) -> Term {
        Term::Var(Sym::new(name), Sort::Msg)
    }

    /// Public-sorted variable.
    pub fn pvar(name: &str) -> Term {
        Term::Var(Sym::new(name), Sort::Pub)
    }

    /// Fresh-sorted variable.
    pub fn fvar(name: &str) -> Term {
        Term::Var(Sym::new(name), Sort::Fresh)
    }

    pub fn app(name: &str, args: Vec<Term>) -> Term {
        Term::App(Sym::new(name), args)
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::app("pair", vec![a, b])
    }

    /// The distinguished empty-string public constant.
    pub fn empty() -> Term {
        Term::Pub(Sym::new(""))
    }

    pub fn truth() -> Term {
        Term::app("true", vec![])
    }

    pub fn sort(&self) -> Sort {
        match self {
            Term::Pub(_) => Sort::Pub,
            Term::Fresh(_) => Sort::Fresh,
            Term::Var(_, s) => *s,
            Term::App(_, _) => Sort::Msg,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Pub(_) | Term::Fresh(_) => true,
            Term::Var(_, _) => false,
            Term::App(_, args) => args.iter().all(Term::is_ground),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            Term::App(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
            _ => 1,
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Term::App(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    /// Preorder traversal of all subterms, including the term itself.
    pub fn subterms(&self) -> Vec<&Term> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            out.push(t);
            if let Term::App(_, args) = t {
                for a in args.iter().rev() {
                    stack.push(a);
                }
            }
        }
        out
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<(Sym, Sort)>) {
        match self {
            Term::Var(v, s) => {
                out.insert((*v, *s));
            }
            Term::App(_, args) => {
                for a in args {
                    a.collect_vars(out);
                }
            }
            _ => {}
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

/// Least sort of a term; applications are always `msg`.
pub fn sort_of(t: &Term) -> Sort {
    t.sort()
}

// ---------------------------------------------------------------------------
// Signature
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Signature {
    arities: BTreeMap<Sym, usize>,
}

impl Signature {
    /// The base signature: hashing, pairing, symmetric and asymmetric
    /// encryption, and signatures.
    pub fn base() -> Signature {
        let mut arities = BTreeMap::new();
        for (name, arity) in [
            ("h", 1),
            ("pair", 2),
            ("fst", 1),
            ("snd", 1),
            ("senc", 2),
            ("sdec", 2),
            ("pk", 1),
            ("aenc", 2),
            ("adec", 2),
            ("sign", 2),
            ("true", 0),
            ("verify", 3),
        ] {
            arities.insert(Sym::new(name), arity);
        }
        Signature { arities }
    }

    pub fn declare(&mut self, name: &str, arity: usize) -> Result<Sym, TermError> {
        let sym = Sym::new(name);
        if let Some(&existing) = self.arities.get(&sym) {
            if existing != arity {
                return Err(TermError::DuplicateSymbol {
                    name: name.to_owned(),
                    arity: existing,
                });
            }
            return Ok(sym);
        }
        self.arities.insert(sym, arity);
        Ok(sym)
    }

    pub fn arity(&self, sym: Sym) -> Option<usize> {
        self.arities.get(&sym).copied()
    }

    pub fn symbols(&self) -> impl Iterator<Item = (Sym, usize)> + '_ {
        self.arities.iter().map(|(s, a)| (*s, *a))
    }

    /// Checks that every application uses a declared symbol at its arity.
    pub fn check(&self, t: &Term) -> Result<(), TermError> {
        if let Term::App(sym, args) = t {
            match self.arity(*sym) {
                None => {
                    return Err(TermError::UnknownSymbol {
                        name: sym.as_str().to_owned(),
                    })
                }
                Some(a) if a != args.len() => {
                    return Err(TermError::Arity {
                        name: sym.as_str().to_owned(),
                        expected: a,
                        got: args.len(),
                    })
                }
                _ => {}
            }
            for a in args {
                self.check(a)?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Substitutions
// ---------------------------------------------------------------------------

/// Finite map from variables to terms. Bindings respect the subsort order:
/// a variable only binds terms whose sort is equal or a subsort.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Subst {
    map: BTreeMap<Sym, Term>,
}

impl Subst {
    pub fn new() -> Subst {
        Subst::default()
    }

    pub fn bind(&mut self, var: Sym, sort: Sort, t: Term) -> Result<(), TermError> {
        if !t.sort().subsort_of(sort) {
            return Err(TermError::SortMismatch {
                var: var.as_str().to_owned(),
                expected: sort,
                got: t.sort(),
            });
        }
        if let Some(prev) = self.map.get(&var) {
            if *prev != t {
                return Err(TermError::InconsistentBinding {
                    var: var.as_str().to_owned(),
                });
            }
            return Ok(());
        }
        self.map.insert(var, t);
        Ok(())
    }

    pub fn get(&self, var: Sym) -> Option<&Term> {
        self.map.get(&var)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sym, &Term)> {
        self.map.iter()
    }

    /// Simultaneous replacement of every mapped variable.
    pub fn apply(&self, t: &Term) -> Term {
        match t {
            Term::Var(v, _) => self.map.get(v).cloned().unwrap_or_else(|| t.clone()),
            Term::App(f, args) => Term::App(*f, args.iter().map(|a| self.apply(a)).collect()),
            _ => t.clone(),
        }
    }
}

pub fn apply_substitution(t: &Term, s: &Subst) -> Term {
    s.apply(t)
}

// ---------------------------------------------------------------------------
// Matching and unification
// ---------------------------------------------------------------------------

/// Extends `subst` so that `pattern . subst = ground`, or reports failure.
/// Repeated variables must bind consistently.
pub fn match_into(pattern: &Term, ground: &Term, subst: &mut Subst) -> bool {
    match (pattern, ground) {
        (Term::Var(v, s), g) => {
            if !g.sort().subsort_of(*s) {
                return false;
            }
            match subst.get(*v) {
                Some(prev) => prev == g,
                None => {
                    subst.map.insert(*v, g.clone());
                    true
                }
            }
        }
        (Term::Pub(a), Term::Pub(b)) => a == b,
        (Term::Fresh(a), Term::Fresh(b)) => a == b,
        (Term::App(f, fa), Term::App(g, ga)) => {
            f == g && fa.len() == ga.len() && fa.iter().zip(ga).all(|(p, t)| match_into(p, t, subst))
        }
        _ => false,
    }
}

/// Most general matcher of `pattern` against a ground term, if any.
pub fn match_term(pattern: &Term, ground: &Term) -> Option<Subst> {
    let mut s = Subst::new();
    if match_into(pattern, ground, &mut s) {
        Some(s)
    } else {
        None
    }
}

fn occurs(v: Sym, t: &Term, s: &Subst) -> bool {
    match t {
        Term::Var(w, _) => {
            if *w == v {
                true
            } else if let Some(b) = s.get(*w) {
                occurs(v, &b.clone(), s)
            } else {
                false
            }
        }
        Term::App(_, args) => args.iter().any(|a| occurs(v, a, s)),
        _ => false,
    }
}

fn resolve(t: &Term, s: &Subst) -> Term {
    match t {
        Term::Var(v, _) => match s.get(*v) {
            Some(b) => resolve(&b.clone(), s),
            None => t.clone(),
        },
        _ => t.clone(),
    }
}

fn unify_into(a: &Term, b: &Term, s: &mut Subst) -> bool {
    let a = resolve(a, s);
    let b = resolve(b, s);
    match (&a, &b) {
        (Term::Var(v, vs), t) | (t, Term::Var(v, vs)) => {
            if let Term::Var(w, _) = t {
                if w == v {
                    return true;
                }
            }
            if occurs(*v, t, s) {
                return false;
            }
            // Sort discipline is loose here: unification is only used for
            // shape audits where variables stand for holes.
            let _ = vs;
            s.map.insert(*v, t.clone());
            true
        }
        (Term::Pub(x), Term::Pub(y)) => x == y,
        (Term::Fresh(x), Term::Fresh(y)) => x == y,
        (Term::App(f, fa), Term::App(g, ga)) => {
            f == g && fa.len() == ga.len() && fa.iter().zip(ga).all(|(x, y)| unify_into(x, y, s))
        }
        _ => false,
    }
}

/// First-order syntactic unification; the two terms are assumed to use
/// disjoint variable names.
pub fn unify(a: &Term, b: &Term) -> Option<Subst> {
    let mut s = Subst::new();
    if unify_into(a, b, &mut s) {
        Some(s)
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Equational theory
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RewriteRule {
    pub lhs: Term,
    pub rhs: Term,
}

/// Oriented, subterm-convergent rewrite system. The base theory covers
/// projection, symmetric/asymmetric decryption, and signature verification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Theory {
    rules: Vec<RewriteRule>,
}

impl Theory {
    pub fn base() -> Theory {
        let x = Term::var("x");
        let y = Term::var("y");
        let m = Term::var("m");
        let k = Term::var("k");
        let rules = vec![
            RewriteRule {
                lhs: Term::app("fst", vec![Term::pair(x.clone(), y.clone())]),
                rhs: x.clone(),
            },
            RewriteRule {
                lhs: Term::app("snd", vec![Term::pair(x.clone(), y.clone())]),
                rhs: y,
            },
            RewriteRule {
                lhs: Term::app(
                    "sdec",
                    vec![Term::app("senc", vec![m.clone(), k.clone()]), k.clone()],
                ),
                rhs: m.clone(),
            },
            RewriteRule {
                lhs: Term::app(
                    "adec",
                    vec![
                        Term::app("aenc", vec![m.clone(), Term::app("pk", vec![k.clone()])]),
                        k.clone(),
                    ],
                ),
                rhs: m.clone(),
            },
            RewriteRule {
                lhs: Term::app(
                    "verify",
                    vec![
                        Term::app("sign", vec![m.clone(), k.clone()]),
                        m,
                        Term::app("pk", vec![k]),
                    ],
                ),
                rhs: Term::truth(),
            },
        ];
        Theory { rules }
    }

    pub fn rules(&self) -> &[RewriteRule] {
        &self.rules
    }

    /// Adds a user equation after validating the syntactic subterm-convergence
    /// criterion: the right-hand side must be a subterm of the left or a
    /// ground constant, and may not introduce new variables.
    pub fn extend(&mut self, rule: RewriteRule, sig: &Signature) -> Result<(), TermError> {
        sig.check(&rule.lhs)?;
        sig.check(&rule.rhs)?;
        let is_app = matches!(rule.lhs, Term::App(_, _));
        let mut lvars = BTreeSet::new();
        rule.lhs.collect_vars(&mut lvars);
        let mut rvars = BTreeSet::new();
        rule.rhs.collect_vars(&mut rvars);
        let is_subterm = rule.lhs.subterms().iter().any(|s| **s == rule.rhs);
        let is_const = rule.rhs.is_ground() && rule.rhs.size() == 1
            || matches!(&rule.rhs, Term::App(_, args) if args.is_empty());
        if !is_app || !rvars.is_subset(&lvars) || !(is_subterm || is_const) {
            return Err(TermError::NotSubtermConvergent {
                equation: format!("{} = {}", render(&rule.lhs), render(&rule.rhs)),
            });
        }
        self.rules.push(rule);
        Ok(())
    }

    /// Unique normal form under innermost rewriting. For a subterm-convergent
    /// system a single root rewrite after normalizing the arguments suffices.
    pub fn normalize(&self, t: &Term) -> Term {
        match t {
            Term::App(f, args) => {
                let norm = Term::App(*f, args.iter().map(|a| self.normalize(a)).collect());
                for rule in &self.rules {
                    if let Some(s) = match_pattern_modulo_vars(&rule.lhs, &norm) {
                        return s.apply(&rule.rhs);
                    }
                }
                norm
            }
            _ => t.clone(),
        }
    }
}

/// Rewrite-rule matching must also fire on non-ground redexes (patterns in
/// rule premises are normalized too), so variables in the subject are treated
/// as rigid constants here.
fn match_pattern_modulo_vars(pattern: &Term, subject: &Term) -> Option<Subst> {
    fn go(pattern: &Term, subject: &Term, s: &mut Subst) -> bool {
        match (pattern, subject) {
            (Term::Var(v, srt), t) => {
                if !t.sort().subsort_of(*srt) && !matches!(t, Term::Var(_, _) | Term::App(_, _)) {
                    return false;
                }
                match s.get(*v) {
                    Some(prev) => prev == t,
                    None => {
                        s.map.insert(*v, t.clone());
                        true
                    }
                }
            }
            (Term::Pub(a), Term::Pub(b)) => a == b,
            (Term::Fresh(a), Term::Fresh(b)) => a == b,
            (Term::App(f, fa), Term::App(g, ga)) => {
                f == g && fa.len() == ga.len() && fa.iter().zip(ga).all(|(p, t)| go(p, t, s))
            }
            _ => false,
        }
    }
    let mut s = Subst::new();
    if go(pattern, subject, &mut s) {
        Some(s)
    } else {
        None
    }
}

/// Normalizes with the base theory. Most callers hold a protocol-specific
/// theory; this is a convenience for tests and defaults.
pub fn normalize(t: &Term) -> Term {
    Theory::base().normalize(t)
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TermError {
    #[error("symbol {name} expects {expected} arguments, got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("unknown function symbol {name}")]
    UnknownSymbol { name: String },
    #[error("symbol {name} already declared with arity {arity}")]
    DuplicateSymbol { name: String, arity: usize },
    #[error("variable {var} of sort {expected:?} cannot bind a term of sort {got:?}")]
    SortMismatch {
        var: String,
        expected: Sort,
        got: Sort,
    },
    #[error("variable {var} bound to two different terms")]
    InconsistentBinding { var: String },
    #[error("equation is not subterm-convergent: {equation}")]
    NotSubtermConvergent { equation: String },
}

// ---------------------------------------------------------------------------
// Canonical textual form
// ---------------------------------------------------------------------------

/// Canonical textual form: prefix applications, `<a, b>` pair sugar with a
/// flattened right spine, quoted public names, `~` fresh names, `$` public
/// variables, bare identifiers for message variables.
pub fn render(t: &Term) -> String {
    let mut out = String::new();
    render_into(t, &mut out);
    out
}

fn render_into(t: &Term, out: &mut String) {
    match t {
        Term::Pub(s) => {
            out.push('\'');
            out.push_str(s.as_str());
            out.push('\'');
        }
        Term::Fresh(s) => {
            out.push('~');
            out.push_str(s.as_str());
        }
        Term::Var(s, Sort::Pub) => {
            out.push('$');
            out.push_str(s.as_str());
        }
        Term::Var(s, Sort::Fresh) => {
            out.push('~');
            out.push_str(s.as_str());
        }
        Term::Var(s, _) => out.push_str(s.as_str()),
        Term::App(f, args) => {
            if f.as_str() == "pair" && args.len() == 2 {
                out.push('<');
                let mut cur = t;
                let mut first = true;
                loop {
                    match cur {
                        Term::App(g, gargs) if g.as_str() == "pair" && gargs.len() == 2 => {
                            if !first {
                                out.push_str(", ");
                            }
                            render_into(&gargs[0], out);
                            first = false;
                            cur = &gargs[1];
                        }
                        other => {
                            out.push_str(", ");
                            render_into(other, out);
                            break;
                        }
                    }
                }
                out.push('>');
            } else if args.is_empty() {
                out.push_str(f.as_str());
            } else {
                out.push_str(f.as_str());
                out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    render_into(a, out);
                }
                out.push(')');
            }
        }
    }
}

/// Term parse error with a byte offset into the source.
#[derive(Debug, Error, PartialEq, Eq)]
#[error("{msg} at offset {offset}")]
pub struct TermParseError {
    pub msg: String,
    pub offset: usize,
}

/// Parsing mode: patterns allow variables, ground terms treat `~x` as a
/// fresh name and reject bare identifiers that are not nullary symbols.
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    Pattern,
    Ground,
}

pub struct TermParser<'a> {
    src: &'a [u8],
    pub pos: usize,
    sig: &'a Signature,
    mode: ParseMode,
}

impl<'a> TermParser<'a> {
    pub fn new(src: &'a str, sig: &'a Signature, mode: ParseMode) -> TermParser<'a> {
        TermParser {
            src: src.as_bytes(),
            pos: 0,
            sig,
            mode,
        }
    }

    fn err<T>(&self, msg: &str) -> Result<T, TermParseError> {
        Err(TermParseError {
            msg: msg.to_owned(),
            offset: self.pos,
        })
    }

    pub fn skip_ws(&mut self) {
        while self.pos < self.src.len() && (self.src[self.pos] as char).is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn ident(&mut self) -> Result<String, TermParseError> {
        let start = self.pos;
        while self.pos < self.src.len() {
            let c = self.src[self.pos] as char;
            if c.is_ascii_alphanumeric() || c == '_' {
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.pos == start {
            return self.err("expected identifier");
        }
        Ok(std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .to_owned())
    }

    pub fn term(&mut self) -> Result<Term, TermParseError> {
        self.skip_ws();
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'\'') => {
                self.pos += 1;
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos] != b'\'' {
                    self.pos += 1;
                }
                if self.pos >= self.src.len() {
                    return self.err("unterminated public name");
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                self.pos += 1;
                Ok(Term::Pub(Sym::new(name)))
            }
            Some(b'~') => {
                self.pos += 1;
                let name = self.ident()?;
                match self.mode {
                    ParseMode::Pattern => Ok(Term::fvar(&name)),
                    ParseMode::Ground => Ok(Term::fresh_named(&name)),
                }
            }
            Some(b'$') => {
                self.pos += 1;
                let name = self.ident()?;
                if self.mode == ParseMode::Ground {
                    return self.err("variables are not allowed in ground terms");
                }
                Ok(Term::pvar(&name))
            }
            Some(b'<') => {
                self.pos += 1;
                let mut items = vec![self.term()?];
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b',') => {
                            self.pos += 1;
                            items.push(self.term()?);
                        }
                        Some(b'>') => {
                            self.pos += 1;
                            break;
                        }
                        _ => return self.err("expected ',' or '>' in pair"),
                    }
                }
                if items.len() < 2 {
                    return self.err("pair needs at least two components");
                }
                let mut t = items.pop().unwrap();
                while let Some(prev) = items.pop() {
                    t = Term::pair(prev, t);
                }
                Ok(t)
            }
            Some(c) if (c as char).is_ascii_alphanumeric() || c == b'_' => {
                let name = self.ident()?;
                self.skip_ws();
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    let sym = Sym::new(&name);
                    let mut args = Vec::new();
                    self.skip_ws();
                    if self.peek() == Some(b')') {
                        self.pos += 1;
                    } else {
                        loop {
                            args.push(self.term()?);
                            self.skip_ws();
                            match self.peek() {
                                Some(b',') => self.pos += 1,
                                Some(b')') => {
                                    self.pos += 1;
                                    break;
                                }
                                _ => return self.err("expected ',' or ')'"),
                            }
                        }
                    }
                    match self.sig.arity(sym) {
                        None => self.err(&format!("unknown function symbol {name}")),
                        Some(a) if a != args.len() => self.err(&format!(
                            "symbol {name} expects {a} arguments, got {}",
                            args.len()
                        )),
                        _ => Ok(Term::App(sym, args)),
                    }
                } else {
                    let sym = Sym::new(&name);
                    if self.sig.arity(sym) == Some(0) {
                        Ok(Term::App(sym, vec![]))
                    } else if self.mode == ParseMode::Pattern {
                        Ok(Term::var(&name))
                    } else {
                        self.err(&format!("bare identifier {name} in ground term"))
                    }
                }
            }
            Some(c) => self.err(&format!("unexpected character '{}'", c as char)),
        }
    }
}

/// Parses a single term occupying the whole input.
pub fn parse_term(src: &str, sig: &Signature, mode: ParseMode) -> Result<Term, TermParseError> {
    let mut p = TermParser::new(src, sig, mode);
    let t = p.term()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(TermParseError {
            msg: "trailing input after term".to_owned(),
            offset: p.pos,
        });
    }
    Ok(t)
}
