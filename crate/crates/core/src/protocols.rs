//! Built-in protocol models: the public-key forwarding example, the three
//! middlebox TLS variants, the Lightning payment phases and the signed
//! round-trip fix, and the mixnet family (Chaum, TOR, HORNET).
//!
//! Every model is a phase-tagged rule set over the shared fact conventions:
//! `StartBuild`/`Add` record the intended path during construction,
//! `Forward`/`Backward` record actual transport, `Equal` events restrict
//! traces to successful checks. Honest agents handle one session message
//! per run, enforced by linear token facts seeded in the scenario prologue;
//! session multiplicity is a scenario concern.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::msr::{Drive, Fact, FactDecls, Phase, Role, Rule};
use crate::properties::PropertyId;
use crate::term::{parse_term, unify, ParseMode, Signature, Sym, Term, Theory};

// ---------------------------------------------------------------------------
// Protocol specifications
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolSpec {
    pub name: String,
    pub signature: Signature,
    pub theory: Theory,
    pub facts: FactDecls,
    pub rules: Vec<Rule>,
    pub build_arity: usize,
    pub properties: BTreeSet<PropertyId>,
}

impl ProtocolSpec {
    pub fn supports(&self, p: PropertyId) -> bool {
        self.properties.contains(&p)
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        let sym = Sym::new(name);
        self.rules.iter().find(|r| r.name == sym)
    }

    /// Rules that emit Backward events and consume a network message:
    /// these define what a return participant accepts.
    pub fn return_rules(&self) -> Vec<Rule> {
        let backward = Sym::new("Backward");
        let net = Sym::new("Net");
        self.rules
            .iter()
            .filter(|r| {
                r.events.iter().any(|e| e.sym == backward)
                    && r.premises.iter().any(|p| p.sym == net)
            })
            .cloned()
            .collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for rule in &self.rules {
            for f in rule
                .premises
                .iter()
                .chain(&rule.events)
                .chain(&rule.conclusions)
            {
                self.facts
                    .check(f)
                    .map_err(|e| ModelError::BadRule(rule.name.as_str().to_owned(), e.to_string()))?;
                for a in &f.args {
                    self.signature.check(a).map_err(|e| {
                        ModelError::BadRule(rule.name.as_str().to_owned(), e.to_string())
                    })?;
                }
            }
            rule.check_bound_vars()
                .map_err(|e| ModelError::BadRule(rule.name.as_str().to_owned(), e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown protocol model {0}")]
    Unknown(String),
    #[error("rule {0}: {1}")]
    BadRule(String, String),
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

/// One concrete run configuration: the chosen path (initiator first, final
/// agent last) and the statically corrupt agents. The initiator is always
/// honest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub path: Vec<Sym>,
    pub corrupt: BTreeSet<Sym>,
}

impl Scenario {
    pub fn new(path: &[&str], corrupt: &[&str]) -> Scenario {
        Scenario {
            path: path.iter().map(|a| Sym::new(a)).collect(),
            corrupt: corrupt.iter().map(|a| Sym::new(a)).collect(),
        }
    }

    pub fn initiator(&self) -> Sym {
        self.path[0]
    }

    pub fn final_agent(&self) -> Sym {
        *self.path.last().unwrap()
    }

    pub fn intermediates(&self) -> &[Sym] {
        &self.path[1..self.path.len() - 1]
    }

    pub fn publics(&self) -> Vec<Term> {
        self.path.iter().map(|a| Term::Pub(*a)).collect()
    }
}

/// Exploration bounds: agents, path lengths (total agents on the path),
/// total rule applications, corrupt-agent budget, and the constructor depth
/// the adversary may add when recombining known terms for injection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScenarioBounds {
    pub max_agents: usize,
    pub path_len_min: usize,
    pub path_len_max: usize,
    pub max_steps: usize,
    pub max_corrupt: usize,
    pub recombination_depth: usize,
}

impl Default for ScenarioBounds {
    fn default() -> Self {
        ScenarioBounds {
            max_agents: 5,
            path_len_min: 2,
            path_len_max: 4,
            max_steps: 40,
            max_corrupt: 2,
            recombination_depth: 2,
        }
    }
}

// ---------------------------------------------------------------------------
// Model builder
// ---------------------------------------------------------------------------

struct ModelBuilder {
    name: String,
    signature: Signature,
    theory: Theory,
    facts: FactDecls,
    rules: Vec<Rule>,
    build_arity: usize,
    properties: BTreeSet<PropertyId>,
}

impl ModelBuilder {
    fn new(name: &str) -> ModelBuilder {
        ModelBuilder {
            name: name.to_owned(),
            signature: Signature::base(),
            theory: Theory::base(),
            facts: FactDecls::reserved(),
            rules: Vec::new(),
            build_arity: 3,
            properties: BTreeSet::new(),
        }
    }

    fn declare_fact(&mut self, name: &str, arity: usize, persistent: bool) -> &mut Self {
        self.facts.declare(name, arity, persistent).expect("fact decl");
        self
    }

    fn build_arity(&mut self, n: usize) -> &mut Self {
        self.build_arity = n;
        self.declare_fact("Build", n, false)
    }

    fn property(&mut self, p: PropertyId) -> &mut Self {
        self.properties.insert(p);
        self
    }

    fn fact(&self, text: &str) -> Fact {
        // "!Name(arg, ...)" or "Name(arg, ...)"
        let (bang, rest) = match text.strip_prefix('!') {
            Some(r) => (true, r),
            None => (false, text),
        };
        let open = rest.find('(').expect("fact needs arguments");
        let name = &rest[..open];
        let inner = rest[open + 1..].strip_suffix(')').expect("closing paren");
        let mut args = Vec::new();
        if !inner.trim().is_empty() {
            // split on top-level commas
            let mut depth = 0usize;
            let mut start = 0usize;
            let bytes = inner.as_bytes();
            for (i, &b) in bytes.iter().enumerate() {
                match b {
                    b'(' | b'<' => depth += 1,
                    b')' | b'>' => depth -= 1,
                    b',' if depth == 0 => {
                        args.push(inner[start..i].trim().to_owned());
                        start = i + 1;
                    }
                    _ => {}
                }
            }
            args.push(inner[start..].trim().to_owned());
        }
        let terms: Vec<Term> = args
            .iter()
            .map(|a| {
                parse_term(a, &self.signature, ParseMode::Pattern)
                    .unwrap_or_else(|e| panic!("bad term `{a}` in {text}: {e}"))
            })
            .collect();
        let (arity, persistent) = self
            .facts
            .get(Sym::new(name))
            .unwrap_or_else(|| panic!("undeclared fact {name}"));
        assert_eq!(arity, terms.len(), "arity of {text}");
        assert_eq!(persistent, bang, "persistence marker of {text}");
        Fact::new(name, persistent, terms)
    }

    fn rule(
        &mut self,
        name: &str,
        phase: Phase,
        drive: Drive,
        premises: &[&str],
        events: &[&str],
        conclusions: &[&str],
    ) -> &mut Self {
        let r = Rule::new(
            name,
            phase,
            premises.iter().map(|t| self.fact(t)).collect(),
            events.iter().map(|t| self.fact(t)).collect(),
            conclusions.iter().map(|t| self.fact(t)).collect(),
        )
        .drive(drive);
        self.rules.push(r);
        self
    }

    fn finish(self) -> ProtocolSpec {
        let spec = ProtocolSpec {
            name: self.name,
            signature: self.signature,
            theory: self.theory,
            facts: self.facts,
            rules: self.rules,
            build_arity: self.build_arity,
            properties: self.properties,
        };
        spec.validate().expect("model validates");
        spec
    }
}

fn once_ae() -> Drive {
    Drive::Once(vec![
        (Sym::new("A"), Role::Initiator),
        (Sym::new("E"), Role::Final),
    ])
}

fn create_ae() -> Drive {
    Drive::Create(vec![
        (Sym::new("A"), Role::Initiator),
        (Sym::new("E"), Role::Final),
    ])
}

// ---------------------------------------------------------------------------
// Shared rule fragments
// ---------------------------------------------------------------------------

fn add_ltk_setup(b: &mut ModelBuilder) {
    b.rule(
        "Gen_Ltk",
        Phase::Setup,
        Drive::EachAgent(Sym::new("A")),
        &["Fr(~ltk)"],
        &[],
        &["!Ltk($A, ~ltk)", "!Pk($A, pk(~ltk))", "Net(pk(~ltk))"],
    );
}

fn add_chan_setup(b: &mut ModelBuilder) {
    b.rule(
        "Gen_Chan",
        Phase::Setup,
        Drive::Adjacent(Sym::new("X"), Sym::new("Y")),
        &["Fr(~k)"],
        &[],
        &["!ShKey($X, $Y, ~k)"],
    );
}

fn add_tokens(b: &mut ModelBuilder) {
    b.declare_fact("FwdTok", 1, false);
    b.declare_fact("RecvTok", 1, false);
    b.rule(
        "Fwd_Token",
        Phase::Setup,
        Drive::EachMid(Sym::new("M")),
        &[],
        &[],
        &["FwdTok($M)"],
    );
    b.rule(
        "Recv_Token",
        Phase::Setup,
        Drive::Once(vec![(Sym::new("E"), Role::Final)]),
        &[],
        &[],
        &["RecvTok($E)"],
    );
}

fn add_invoice_setup(b: &mut ModelBuilder) {
    b.declare_fact("Preimage", 2, false);
    b.declare_fact("Invoice", 2, true);
    b.rule(
        "Invoice",
        Phase::Setup,
        once_ae(),
        &["Fr(~x)"],
        &[],
        &["Preimage($E, ~x)", "!Invoice($A, h(~x))", "Net(h(~x))"],
    );
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

/// Running example: nested public-key encryption with a signed payload.
fn example_pk() -> ProtocolSpec {
    let mut b = ModelBuilder::new("example_pk");
    b.property(PropertyId::PathIntegrity);
    b.build_arity(3);
    add_ltk_setup(&mut b);
    add_tokens(&mut b);
    b.rule(
        "Create",
        Phase::Construction,
        create_ae(),
        &["Fr(~p)", "!Pk($E, pkE)", "!Ltk($A, ltkA)"],
        &[
            "StartBuild($A, ~p)",
            "Add(~p, $E, aenc(<~p, sign(~p, ltkA)>, pkE), '')",
        ],
        &["Build(~p, $E, aenc(<~p, sign(~p, ltkA)>, pkE))"],
    );
    b.rule(
        "Wrap",
        Phase::Construction,
        Drive::Wrap(Sym::new("M")),
        &["Build(p, $Y, m)", "!Pk($M, pkM)"],
        &["Add(p, $M, aenc(m, pkM), m)"],
        &["Build(p, $M, aenc(m, pkM))"],
    );
    b.rule(
        "Send",
        Phase::Construction,
        Drive::Send,
        &["Build(p, $X, m)"],
        &[],
        &["Net(m)"],
    );
    b.rule(
        "Unwrap",
        Phase::Forwarding,
        Drive::Explore,
        &["Net(aenc(m, pk(ltk)))", "!Ltk($M, ltk)", "FwdTok($M)"],
        &["Forward($M, aenc(m, pk(ltk)), m)"],
        &["Net(m)"],
    );
    b.rule(
        "Receive",
        Phase::Receive,
        Drive::Explore,
        &[
            "Net(aenc(<p, sig>, pk(ltkE)))",
            "!Ltk($E, ltkE)",
            "!Pk($A, pkA)",
            "RecvTok($E)",
        ],
        &[
            "Forward($E, aenc(<p, sig>, pk(ltkE)), '')",
            "Equal(verify(sig, p, pkA), true)",
        ],
        &[],
    );
    b.finish()
}

/// Chaum mixes: chained asymmetric encryption without origin authentication.
fn chaum() -> ProtocolSpec {
    let mut b = ModelBuilder::new("chaum");
    b.property(PropertyId::PathIntegrity);
    b.build_arity(3);
    add_ltk_setup(&mut b);
    add_tokens(&mut b);
    b.rule(
        "Create",
        Phase::Construction,
        create_ae(),
        &["Fr(~p)", "!Pk($E, pkE)"],
        &["StartBuild($A, ~p)", "Add(~p, $E, aenc(~p, pkE), '')"],
        &["Build(~p, $E, aenc(~p, pkE))"],
    );
    b.rule(
        "Wrap",
        Phase::Construction,
        Drive::Wrap(Sym::new("M")),
        &["Build(p, $Y, m)", "!Pk($M, pkM)"],
        &["Add(p, $M, aenc(m, pkM), m)"],
        &["Build(p, $M, aenc(m, pkM))"],
    );
    b.rule(
        "Send",
        Phase::Construction,
        Drive::Send,
        &["Build(p, $X, m)"],
        &[],
        &["Net(m)"],
    );
    b.rule(
        "Unwrap",
        Phase::Forwarding,
        Drive::Explore,
        &["Net(aenc(m, pk(ltk)))", "!Ltk($M, ltk)", "FwdTok($M)"],
        &["Forward($M, aenc(m, pk(ltk)), m)"],
        &["Net(m)"],
    );
    b.rule(
        "Receive",
        Phase::Receive,
        Drive::Explore,
        &["Net(aenc(p, pk(ltkE)))", "!Ltk($E, ltkE)", "RecvTok($E)"],
        &["Forward($E, aenc(p, pk(ltkE)), '')"],
        &[],
    );
    b.finish()
}

/// mcTLS: one session key shared by every permissioned participant; the
/// record is unchanged by middleboxes outside re-encryption with the same
/// key.
fn mctls() -> ProtocolSpec {
    let mut b = ModelBuilder::new("mctls");
    b.property(PropertyId::PathIntegrity);
    b.declare_fact("SessKey", 2, true);
    b.build_arity(4);
    b.rule(
        "Gen_Sess",
        Phase::Setup,
        Drive::Once(vec![(Sym::new("A"), Role::Initiator)]),
        &["Fr(~kw)"],
        &[],
        &["!SessKey($A, ~kw)"],
    );
    b.rule(
        "Grant",
        Phase::Setup,
        Drive::EachOtherAgent(Sym::new("X")),
        &["!SessKey($A, kw)"],
        &[],
        &["!ShKey($A, $X, kw)"],
    );
    add_tokens(&mut b);
    b.rule(
        "Create",
        Phase::Construction,
        create_ae(),
        &["Fr(~p)", "!ShKey($A, $E, kw)"],
        &["StartBuild($A, ~p)", "Add(~p, $E, senc(~p, kw), '')"],
        &["Build(~p, $E, senc(~p, kw), kw)"],
    );
    b.rule(
        "Wrap",
        Phase::Construction,
        Drive::Wrap(Sym::new("M")),
        &["Build(p, $Y, m, kw)", "!ShKey($A, $M, kw)"],
        &["Add(p, $M, m, m)"],
        &["Build(p, $M, m, kw)"],
    );
    b.rule(
        "Send",
        Phase::Construction,
        Drive::Send,
        &["Build(p, $X, m, kw)"],
        &[],
        &["Net(m)"],
    );
    b.rule(
        "Fwd",
        Phase::Forwarding,
        Drive::Explore,
        &["Net(senc(z, kw))", "!ShKey($A, $M, kw)", "FwdTok($M)"],
        &["Forward($M, senc(z, kw), senc(z, kw))"],
        &["Net(senc(z, kw))"],
    );
    b.rule(
        "Recv",
        Phase::Receive,
        Drive::Explore,
        &["Net(senc(z, kw))", "!ShKey($A, $E, kw)", "RecvTok($E)"],
        &["Forward($E, senc(z, kw), '')"],
        &[],
    );
    b.finish()
}

/// mbTLS: unique session keys per adjacent pair; forwarding is plain
/// decrypt-and-re-encrypt.
fn mbtls() -> ProtocolSpec {
    let mut b = ModelBuilder::new("mbtls");
    b.property(PropertyId::PathIntegrity);
    b.build_arity(4);
    add_chan_setup(&mut b);
    add_tokens(&mut b);
    b.rule(
        "Create",
        Phase::Construction,
        create_ae(),
        &["Fr(~p)", "!ShKey($W, $E, kE)"],
        &["StartBuild($A, ~p)", "Add(~p, $E, senc(~p, kE), '')"],
        &["Build(~p, $E, senc(~p, kE), ~p)"],
    );
    b.rule(
        "Wrap",
        Phase::Construction,
        Drive::Wrap(Sym::new("M")),
        &[
            "Build(p, $Y, senc(pl, kout), pl)",
            "!ShKey($M, $Y, kout)",
            "!ShKey($W, $M, kin)",
        ],
        &["Add(p, $M, senc(pl, kin), senc(pl, kout))"],
        &["Build(p, $M, senc(pl, kin), pl)"],
    );
    b.rule(
        "Send",
        Phase::Construction,
        Drive::Send,
        &["Build(p, $X, m, pl)"],
        &[],
        &["Net(m)"],
    );
    b.rule(
        "Fwd",
        Phase::Forwarding,
        Drive::Explore,
        &[
            "Net(senc(z, kin))",
            "!ShKey($W, $M, kin)",
            "!ShKey($M, $Y, kout)",
            "FwdTok($M)",
        ],
        &["Forward($M, senc(z, kin), senc(z, kout))"],
        &["Net(senc(z, kout))"],
    );
    b.rule(
        "Recv",
        Phase::Receive,
        Drive::Explore,
        &["Net(senc(z, kE))", "!ShKey($W, $E, kE)", "RecvTok($E)"],
        &["Forward($E, senc(z, kE), '')"],
        &[],
    );
    b.finish()
}

/// maTLS: per-segment keys plus a signature chain (modification log)
/// verified by the endpoint in a dedicated verification phase.
fn matls() -> ProtocolSpec {
    let mut b = ModelBuilder::new("matls");
    b.property(PropertyId::PathIntegrity);
    b.property(PropertyId::VdPathIntegrity);
    b.build_arity(3);
    b.declare_fact("Plan", 3, false);
    b.declare_fact("Check", 4, false);
    b.declare_fact("PrevSigner", 2, true);
    b.declare_fact("IsInit", 1, true);
    add_ltk_setup(&mut b);
    add_chan_setup(&mut b);
    b.rule(
        "Prev_Signer",
        Phase::Setup,
        Drive::Adjacent(Sym::new("X"), Sym::new("Y")),
        &[],
        &[],
        &["!PrevSigner($Y, $X)"],
    );
    b.rule(
        "Gen_Init",
        Phase::Setup,
        Drive::Once(vec![(Sym::new("A"), Role::Initiator)]),
        &[],
        &[],
        &["!IsInit($A)"],
    );
    add_tokens(&mut b);
    b.rule(
        "Plan_Start",
        Phase::Construction,
        Drive::Once(vec![(Sym::new("A"), Role::Initiator)]),
        &["Fr(~p)"],
        &[],
        &["Plan(~p, $A, '')"],
    );
    b.rule(
        "Plan_Hop",
        Phase::Construction,
        Drive::Plan(Sym::new("M")),
        &["Plan(p, $W, log)", "!Pk($M, pk(ltkM))"],
        &[],
        &["Plan(p, $M, <sign(p, ltkM), log>)"],
    );
    b.rule(
        "Create",
        Phase::Construction,
        create_ae(),
        &["Plan(p, $W, log)", "!ShKey($V, $E, kE)"],
        &["StartBuild($A, p)", "Add(p, $E, senc(p, kE), '')"],
        &["Build(p, $E, log)"],
    );
    b.rule(
        "Wrap",
        Phase::Construction,
        Drive::Wrap(Sym::new("M")),
        &[
            "Build(p, $Y, <sign(p, ltk), rest>)",
            "!Pk($M, pk(ltk))",
            "!ShKey($M, $Y, kout)",
            "!ShKey($W, $M, kin)",
        ],
        &["Add(p, $M, senc(p, kin), senc(p, kout))"],
        &["Build(p, $M, rest)"],
    );
    b.rule(
        "Send",
        Phase::Construction,
        Drive::Send,
        &["Build(p, $X, '')", "!ShKey($A, $X, k0)"],
        &[],
        &["Net(<senc(p, k0), ''>)"],
    );
    b.rule(
        "Fwd",
        Phase::Forwarding,
        Drive::Explore,
        &[
            "Net(<senc(z, kin), log>)",
            "!ShKey($W, $M, kin)",
            "!ShKey($M, $Y, kout)",
            "!Ltk($M, ltkM)",
            "FwdTok($M)",
        ],
        &["Forward($M, senc(z, kin), senc(z, kout))"],
        &["Net(<senc(z, kout), <sign(z, ltkM), log>>)"],
    );
    b.rule(
        "Recv",
        Phase::Receive,
        Drive::Explore,
        &[
            "Net(<senc(z, kE), log>)",
            "!ShKey($W, $E, kE)",
            "!PrevSigner($E, $P)",
            "RecvTok($E)",
        ],
        &["Forward($E, senc(z, kE), '')"],
        &["Check($E, z, log, $P)"],
    );
    b.rule(
        "Verify_Step",
        Phase::Verification,
        Drive::Explore,
        &["Check($E, z, <sig, rest>, $M)", "!Pk($M, pkM)", "!PrevSigner($M, $W)"],
        &["Equal(verify(sig, z, pkM), true)"],
        &["Check($E, z, rest, $W)"],
    );
    b.rule(
        "Verify_Done",
        Phase::Verification,
        Drive::Explore,
        &["Check($E, z, '', $A)", "!IsInit($A)"],
        &["Complete($E, z)"],
        &[],
    );
    b.finish()
}

/// Lightning payment forwarding, locking phase: per-hop onion payloads
/// carrying the shared invoice hash and a symbolic fee marker.
fn lightning_setup() -> ProtocolSpec {
    let mut b = ModelBuilder::new("lightning_setup");
    b.property(PropertyId::PathIntegrity);
    b.build_arity(4);
    add_ltk_setup(&mut b);
    add_invoice_setup(&mut b);
    add_tokens(&mut b);
    b.rule(
        "Create",
        Phase::Construction,
        create_ae(),
        &["Fr(~sid)", "Fr(~fee)", "!Invoice($A, hx)", "!Pk($E, pkE)"],
        &[
            "StartBuild($A, ~sid)",
            "Add(~sid, $E, aenc(<<~sid, <hx, ~fee>>, ''>, pkE), '')",
        ],
        &["Build(~sid, $E, aenc(<<~sid, <hx, ~fee>>, ''>, pkE), <hx, ~fee>)"],
    );
    b.rule(
        "Wrap",
        Phase::Construction,
        Drive::Wrap(Sym::new("M")),
        &["Build(sid, $Y, inner, hf)", "!Pk($M, pkM)"],
        &["Add(sid, $M, aenc(<<sid, hf>, inner>, pkM), inner)"],
        &["Build(sid, $M, aenc(<<sid, hf>, inner>, pkM), hf)"],
    );
    b.rule(
        "Send",
        Phase::Construction,
        Drive::Send,
        &["Build(sid, $X, m, hf)"],
        &[],
        &["Net(m)"],
    );
    b.rule(
        "Fwd_Lock",
        Phase::Forwarding,
        Drive::Explore,
        &[
            "Net(aenc(<<sid, hf>, inner>, pk(ltk)))",
            "!Ltk($M, ltk)",
            "FwdTok($M)",
        ],
        &["Forward($M, aenc(<<sid, hf>, inner>, pk(ltk)), inner)"],
        &["Net(inner)"],
    );
    b.rule(
        "Recv_Lock",
        Phase::Receive,
        Drive::Explore,
        &[
            "Net(aenc(<<sid, <hx2, fee>>, ''>, pk(ltkE)))",
            "!Ltk($E, ltkE)",
            "Preimage($E, x)",
            "RecvTok($E)",
        ],
        &[
            "Forward($E, aenc(<<sid, <hx2, fee>>, ''>, pk(ltkE)), '')",
            "Equal(hx2, h(x))",
        ],
        &[],
    );
    b.finish()
}

/// Lightning payment forwarding, unlock phase: the full round trip. Locks
/// travel outward as onion payloads; the preimage travels back hop by hop
/// over channel keys, releasing each HTLC in turn.
fn lightning_unlock() -> ProtocolSpec {
    let mut b = ModelBuilder::new("lightning_unlock");
    b.property(PropertyId::PathSymmetry);
    b.build_arity(4);
    b.declare_fact("Locked", 2, false);
    b.declare_fact("Ready", 3, false);
    b.declare_fact("ATok", 1, false);
    add_ltk_setup(&mut b);
    add_chan_setup(&mut b);
    add_invoice_setup(&mut b);
    add_tokens(&mut b);
    b.rule(
        "Init_Token",
        Phase::Setup,
        Drive::Once(vec![(Sym::new("A"), Role::Initiator)]),
        &[],
        &[],
        &["ATok($A)"],
    );
    b.rule(
        "Create",
        Phase::Construction,
        create_ae(),
        &["Fr(~sid)", "!Invoice($A, hx)", "!Pk($E, pkE)"],
        &[
            "StartBuild($A, ~sid)",
            "Add(~sid, $E, aenc(<<~sid, hx>, ''>, pkE), '')",
        ],
        &["Build(~sid, $E, aenc(<<~sid, hx>, ''>, pkE), hx)"],
    );
    b.rule(
        "Wrap",
        Phase::Construction,
        Drive::Wrap(Sym::new("M")),
        &["Build(sid, $Y, inner, hx)", "!Pk($M, pkM)"],
        &["Add(sid, $M, aenc(<<sid, hx>, inner>, pkM), inner)"],
        &["Build(sid, $M, aenc(<<sid, hx>, inner>, pkM), hx)"],
    );
    b.rule(
        "Send",
        Phase::Construction,
        Drive::Send,
        &["Build(sid, $X, m, hx)"],
        &[],
        &["Net(m)"],
    );
    b.rule(
        "Fwd_Lock",
        Phase::Forwarding,
        Drive::Explore,
        &[
            "Net(aenc(<<sid, hx>, inner>, pk(ltk)))",
            "!Ltk($M, ltk)",
            "FwdTok($M)",
        ],
        &["Forward($M, aenc(<<sid, hx>, inner>, pk(ltk)), inner)"],
        &["Net(inner)", "Locked($M, hx)"],
    );
    b.rule(
        "Recv_Lock",
        Phase::Receive,
        Drive::Explore,
        &[
            "Net(aenc(<<sid, hx2>, ''>, pk(ltkE)))",
            "!Ltk($E, ltkE)",
            "Preimage($E, x)",
            "RecvTok($E)",
        ],
        &[
            "Forward($E, aenc(<<sid, hx2>, ''>, pk(ltkE)), '')",
            "Equal(hx2, h(x))",
        ],
        &["Ready($E, x, hx2)"],
    );
    b.rule(
        "Start_Release",
        Phase::Receive,
        Drive::Explore,
        &["Ready($E, x, hx)", "!ShKey($W, $E, kc)"],
        &["Backward($E, '', senc(<x, hx>, kc))"],
        &["Net(senc(<x, hx>, kc))"],
    );
    b.rule(
        "Bwd_Release",
        Phase::Forwarding,
        Drive::Explore,
        &[
            "Net(senc(<x, hx>, kR))",
            "!ShKey($M, $Y, kR)",
            "Locked($M, hx)",
            "!ShKey($W, $M, kL)",
        ],
        &[
            "Backward($M, senc(<x, hx>, kR), senc(<x, hx>, kL))",
            "Equal(h(x), hx)",
        ],
        &["Net(senc(<x, hx>, kL))"],
    );
    b.rule(
        "Recv_Release",
        Phase::Receive,
        Drive::Explore,
        &[
            "Net(senc(<x, hx>, k0))",
            "!ShKey($A, $Y, k0)",
            "!Invoice($A, hx)",
            "ATok($A)",
        ],
        &["Backward($A, senc(<x, hx>, k0), '')", "Equal(h(x), hx)"],
        &[],
    );
    b.finish()
}

/// Lightning-Sig: per-hop payloads additionally carry ephemeral signing
/// keys; the release message accumulates a signature chain verified by each
/// agent against the next hop's ephemeral key, making the return journey
/// unskippable with standard primitives in a single round trip.
fn lightning_sig() -> ProtocolSpec {
    let mut b = ModelBuilder::new("lightning_sig");
    b.property(PropertyId::PathIntegrity);
    b.property(PropertyId::PathSymmetry);
    b.build_arity(6);
    b.declare_fact("LockedSig", 4, false);
    b.declare_fact("ReadySig", 4, false);
    b.declare_fact("Await", 3, false);
    add_ltk_setup(&mut b);
    add_chan_setup(&mut b);
    add_invoice_setup(&mut b);
    add_tokens(&mut b);
    b.rule(
        "Create",
        Phase::Construction,
        create_ae(),
        &["Fr(~sid)", "Fr(~eE)", "!Invoice($A, hx)", "!Pk($E, pkE)"],
        &[
            "StartBuild($A, ~sid)",
            "Add(~sid, $E, aenc(<<~sid, hx>, <~eE, ''>>, pkE), '')",
        ],
        &["Build(~sid, $E, aenc(<<~sid, hx>, <~eE, ''>>, pkE), hx, ~eE, $A)"],
    );
    b.rule(
        "Wrap",
        Phase::Construction,
        Drive::Wrap(Sym::new("M")),
        &["Build(sid, $Y, inner, hx, eN, $A)", "Fr(~e)", "!Pk($M, pkM)"],
        &["Add(sid, $M, aenc(<<sid, hx>, <<~e, pk(eN)>, inner>>, pkM), inner)"],
        &["Build(sid, $M, aenc(<<sid, hx>, <<~e, pk(eN)>, inner>>, pkM), hx, ~e, $A)"],
    );
    b.rule(
        "Send",
        Phase::Construction,
        Drive::Send,
        &["Build(sid, $X, m, hx, e1, $A)"],
        &[],
        &["Net(m)", "Await($A, hx, pk(e1))"],
    );
    b.rule(
        "Fwd_Lock",
        Phase::Forwarding,
        Drive::Explore,
        &[
            "Net(aenc(<<sid, hx>, <<e, pknext>, inner>>, pk(ltk)))",
            "!Ltk($M, ltk)",
            "FwdTok($M)",
        ],
        &["Forward($M, aenc(<<sid, hx>, <<e, pknext>, inner>>, pk(ltk)), inner)"],
        &["Net(inner)", "LockedSig($M, hx, e, pknext)"],
    );
    b.rule(
        "Recv_Lock",
        Phase::Receive,
        Drive::Explore,
        &[
            "Net(aenc(<<sid, hx2>, <eE, ''>>, pk(ltkE)))",
            "!Ltk($E, ltkE)",
            "Preimage($E, x)",
            "RecvTok($E)",
        ],
        &[
            "Forward($E, aenc(<<sid, hx2>, <eE, ''>>, pk(ltkE)), '')",
            "Equal(hx2, h(x))",
        ],
        &["ReadySig($E, x, hx2, eE)"],
    );
    b.rule(
        "Start_Release",
        Phase::Receive,
        Drive::Explore,
        &["ReadySig($E, x, hx, eE)", "!ShKey($W, $E, kc)"],
        &["Backward($E, '', senc(<<x, sign(x, eE)>, hx>, kc))"],
        &["Net(senc(<<x, sign(x, eE)>, hx>, kc))"],
    );
    b.rule(
        "Bwd_Release",
        Phase::Forwarding,
        Drive::Explore,
        &[
            "Net(senc(<<x, sig>, hx>, kR))",
            "!ShKey($M, $Y, kR)",
            "LockedSig($M, hx, e, pknext)",
            "!ShKey($W, $M, kL)",
        ],
        &[
            "Backward($M, senc(<<x, sig>, hx>, kR), senc(<<x, sign(x, e)>, hx>, kL))",
            "Equal(verify(sig, x, pknext), true)",
            "Equal(h(x), hx)",
        ],
        &["Net(senc(<<x, sign(x, e)>, hx>, kL))"],
    );
    b.rule(
        "Recv_Release",
        Phase::Receive,
        Drive::Explore,
        &[
            "Net(senc(<<x, sig>, hx>, k0))",
            "!ShKey($A, $Y, k0)",
            "Await($A, hx, pkE1)",
        ],
        &[
            "Backward($A, senc(<<x, sig>, hx>, k0), '')",
            "Equal(verify(sig, x, pkE1), true)",
            "Equal(h(x), hx)",
        ],
        &[],
    );
    b.finish()
}

/// TOR circuit establishment: onion layers deliver a connection id and a
/// symmetric session key to each relay under its public key.
fn tor_establish() -> ProtocolSpec {
    let mut b = ModelBuilder::new("tor_establish");
    b.property(PropertyId::PathIntegrity);
    b.build_arity(3);
    add_ltk_setup(&mut b);
    add_tokens(&mut b);
    b.rule(
        "Create",
        Phase::Construction,
        create_ae(),
        &["Fr(~sid)", "Fr(~c)", "Fr(~s)", "!Pk($E, pkE)"],
        &[
            "StartBuild($A, ~sid)",
            "Add(~sid, $E, aenc(<<~sid, <~c, ~s>>, ''>, pkE), '')",
        ],
        &["Build(~sid, $E, aenc(<<~sid, <~c, ~s>>, ''>, pkE))"],
    );
    b.rule(
        "Wrap",
        Phase::Construction,
        Drive::Wrap(Sym::new("M")),
        &["Build(sid, $Y, inner)", "Fr(~c)", "Fr(~s)", "!Pk($M, pkM)"],
        &["Add(sid, $M, aenc(<<sid, <~c, ~s>>, inner>, pkM), inner)"],
        &["Build(sid, $M, aenc(<<sid, <~c, ~s>>, inner>, pkM))"],
    );
    b.rule(
        "Send",
        Phase::Construction,
        Drive::Send,
        &["Build(sid, $X, m)"],
        &[],
        &["Net(m)"],
    );
    b.rule(
        "Fwd_Est",
        Phase::Forwarding,
        Drive::Explore,
        &[
            "Net(aenc(<<sid, cs>, inner>, pk(ltk)))",
            "!Ltk($M, ltk)",
            "FwdTok($M)",
        ],
        &["Forward($M, aenc(<<sid, cs>, inner>, pk(ltk)), inner)"],
        &["Net(inner)"],
    );
    b.rule(
        "Recv_Est",
        Phase::Receive,
        Drive::Explore,
        &[
            "Net(aenc(<<sid, cs>, ''>, pk(ltkE)))",
            "!Ltk($E, ltkE)",
            "RecvTok($E)",
        ],
        &["Forward($E, aenc(<<sid, cs>, ''>, pk(ltkE)), '')"],
        &[],
    );
    b.finish()
}

/// TOR data exchange: the circuit is in place (per-hop symmetric keys and
/// connection ids); relays swap connection ids and peel one layer.
fn tor_data() -> ProtocolSpec {
    let mut b = ModelBuilder::new("tor_data");
    b.property(PropertyId::PathIntegrity);
    b.build_arity(4);
    b.declare_fact("Circ", 4, true);
    b.declare_fact("Cursor", 2, false);
    b.declare_fact("IsInit", 1, true);
    b.rule(
        "Gen_Init",
        Phase::Setup,
        Drive::Once(vec![(Sym::new("A"), Role::Initiator)]),
        &[],
        &[],
        &["!IsInit($A)"],
    );
    b.rule(
        "Circ_Start",
        Phase::Setup,
        Drive::Once(vec![(Sym::new("A"), Role::Initiator)]),
        &["Fr(~c)"],
        &[],
        &["Cursor($A, ~c)"],
    );
    b.rule(
        "Circ_Extend",
        Phase::Setup,
        Drive::Plan(Sym::new("M")),
        &["Cursor($W, cin)", "!IsInit($A)", "Fr(~s)", "Fr(~cout)"],
        &[],
        &[
            "!Circ($M, cin, ~cout, ~s)",
            "!ShKey($A, $M, ~s)",
            "Cursor($M, ~cout)",
        ],
    );
    b.rule(
        "Circ_Finish",
        Phase::Setup,
        Drive::Once(vec![(Sym::new("E"), Role::Final)]),
        &["Cursor($W, cin)", "!IsInit($A)", "Fr(~s)"],
        &[],
        &["!Circ($E, cin, '', ~s)", "!ShKey($A, $E, ~s)"],
    );
    add_tokens(&mut b);
    b.rule(
        "Create",
        Phase::Construction,
        create_ae(),
        &["Fr(~p)", "!Circ($E, cin, '', s)"],
        &["StartBuild($A, ~p)", "Add(~p, $E, <cin, senc(~p, s)>, '')"],
        &["Build(~p, $E, senc(~p, s), cin)"],
    );
    b.rule(
        "Wrap",
        Phase::Construction,
        Drive::Wrap(Sym::new("M")),
        &["Build(p, $Y, o, cY)", "!Circ($M, cin, cY, s)"],
        &["Add(p, $M, <cin, senc(o, s)>, <cY, o>)"],
        &["Build(p, $M, senc(o, s), cin)"],
    );
    b.rule(
        "Send",
        Phase::Construction,
        Drive::Send,
        &["Build(p, $X, o, c0)"],
        &[],
        &["Net(<c0, o>)"],
    );
    b.rule(
        "Fwd_Data",
        Phase::Forwarding,
        Drive::Explore,
        &["Net(<cin, senc(o, s)>)", "!Circ($M, cin, cout, s)", "FwdTok($M)"],
        &["Forward($M, <cin, senc(o, s)>, <cout, o>)"],
        &["Net(<cout, o>)"],
    );
    b.rule(
        "Recv_Data",
        Phase::Receive,
        Drive::Explore,
        &["Net(<cin, senc(z, s)>)", "!Circ($E, cin, '', s)", "RecvTok($E)"],
        &["Forward($E, <cin, senc(z, s)>, '')"],
        &[],
    );
    b.finish()
}

/// HORNET: stateless relaying; routing data travels inside the packet
/// header next to the layered body.
fn hornet() -> ProtocolSpec {
    let mut b = ModelBuilder::new("hornet");
    b.property(PropertyId::PathIntegrity);
    b.build_arity(4);
    b.declare_fact("HKey", 2, true);
    b.declare_fact("IsInit", 1, true);
    b.rule(
        "Gen_Init",
        Phase::Setup,
        Drive::Once(vec![(Sym::new("A"), Role::Initiator)]),
        &[],
        &[],
        &["!IsInit($A)"],
    );
    b.rule(
        "Hop_Key",
        Phase::Setup,
        Drive::EachOtherAgent(Sym::new("X")),
        &["!IsInit($A)", "Fr(~s)"],
        &[],
        &["!HKey($X, ~s)", "!ShKey($A, $X, ~s)"],
    );
    add_tokens(&mut b);
    b.rule(
        "Create",
        Phase::Construction,
        create_ae(),
        &["Fr(~p)", "!ShKey($A, $E, s)"],
        &[
            "StartBuild($A, ~p)",
            "Add(~p, $E, <senc(<'', ''>, s), senc(~p, s)>, '')",
        ],
        &["Build(~p, $E, senc(<'', ''>, s), senc(~p, s))"],
    );
    b.rule(
        "Wrap",
        Phase::Construction,
        Drive::Wrap(Sym::new("M")),
        &["Build(p, $Y, hd, bd)", "!ShKey($A, $M, s)"],
        &["Add(p, $M, <senc(<$Y, hd>, s), senc(bd, s)>, <hd, bd>)"],
        &["Build(p, $M, senc(<$Y, hd>, s), senc(bd, s))"],
    );
    b.rule(
        "Send",
        Phase::Construction,
        Drive::Send,
        &["Build(p, $X, hd, bd)"],
        &[],
        &["Net(<hd, bd>)"],
    );
    b.rule(
        "Fwd",
        Phase::Forwarding,
        Drive::Explore,
        &[
            "Net(<senc(<nxt, hR>, s), senc(bR, s)>)",
            "!HKey($M, s)",
            "FwdTok($M)",
        ],
        &["Forward($M, <senc(<nxt, hR>, s), senc(bR, s)>, <hR, bR>)"],
        &["Net(<hR, bR>)"],
    );
    b.rule(
        "Recv",
        Phase::Receive,
        Drive::Explore,
        &[
            "Net(<senc(<'', ''>, s), senc(z, s)>)",
            "!HKey($E, s)",
            "RecvTok($E)",
        ],
        &["Forward($E, <senc(<'', ''>, s), senc(z, s)>, '')"],
        &[],
    );
    b.finish()
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

pub const MODEL_NAMES: [&str; 11] = [
    "example_pk",
    "mctls",
    "mbtls",
    "matls",
    "lightning_setup",
    "lightning_unlock",
    "lightning_sig",
    "chaum",
    "tor_establish",
    "tor_data",
    "hornet",
];

/// Builds a built-in model by name.
pub fn instantiate_model(name: &str) -> Result<ProtocolSpec, ModelError> {
    Ok(match name {
        "example_pk" => example_pk(),
        "mctls" => mctls(),
        "mbtls" => mbtls(),
        "matls" => matls(),
        "lightning_setup" => lightning_setup(),
        "lightning_unlock" => lightning_unlock(),
        "lightning_sig" => lightning_sig(),
        "chaum" => chaum(),
        "tor_establish" => tor_establish(),
        "tor_data" => tor_data(),
        "hornet" => hornet(),
        other => return Err(ModelError::Unknown(other.to_owned())),
    })
}

/// The wormhole configuration: the unlock-phase model on a five-agent path
/// with a non-adjacent corrupt pair. The off-band channel between the two
/// corrupt agents is realized by their keys living in adversary knowledge.
pub fn wormhole_scenario() -> (ProtocolSpec, Scenario) {
    (
        instantiate_model("lightning_unlock").unwrap(),
        Scenario::new(&["A", "M1", "M2", "M3", "E"], &["M1", "M3"]),
    )
}

// ---------------------------------------------------------------------------
// Structural shape audit
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeMismatch {
    pub position_a: String,
    pub pattern_a: String,
    pub position_b: String,
    pub pattern_b: String,
}

/// Renames variables apart and abstracts atom leaves to holes: the audit
/// compares constructor skeletons, not data.
fn skeletonize(t: &Term, tag: usize, counter: &mut usize) -> Term {
    match t {
        Term::Var(v, s) => Term::Var(Sym::new(&format!("{}__{}", v.as_str(), tag)), *s),
        Term::App(f, args) => Term::App(
            *f,
            args.iter().map(|a| skeletonize(a, tag, counter)).collect(),
        ),
        Term::Pub(_) | Term::Fresh(_) => {
            *counter += 1;
            Term::var(&format!("__hole_{tag}_{counter}"))
        }
    }
}

/// Computes the abstract message shapes at the four packet positions
/// (initiator out, into each forwarder, out of each forwarder, into the
/// endpoint) from the outbound rules' network patterns, and reports every
/// pair that fails to unify.
pub fn audit_structural_symmetry(spec: &ProtocolSpec) -> Vec<ShapeMismatch> {
    let net = Sym::new("Net");
    let forward = Sym::new("Forward");
    let mut shapes: Vec<(String, Term)> = Vec::new();
    for rule in &spec.rules {
        let emits_forward = rule.events.iter().any(|e| e.sym == forward);
        if matches!(rule.drive, Drive::Send) {
            for c in &rule.conclusions {
                if c.sym == net {
                    shapes.push(("initiator-out".to_owned(), c.args[0].clone()));
                }
            }
        }
        if emits_forward && rule.phase == Phase::Forwarding {
            for p in &rule.premises {
                if p.sym == net {
                    shapes.push(("into-forwarder".to_owned(), p.args[0].clone()));
                }
            }
            for c in &rule.conclusions {
                if c.sym == net {
                    shapes.push(("out-of-forwarder".to_owned(), c.args[0].clone()));
                }
            }
        }
        if emits_forward && rule.phase == Phase::Receive {
            for p in &rule.premises {
                if p.sym == net {
                    shapes.push(("into-endpoint".to_owned(), p.args[0].clone()));
                }
            }
        }
    }
    let mut mismatches = Vec::new();
    for i in 0..shapes.len() {
        for j in i + 1..shapes.len() {
            let mut c = 0;
            let a = skeletonize(&shapes[i].1, 1, &mut c);
            let b = skeletonize(&shapes[j].1, 2, &mut c);
            if unify(&a, &b).is_none() {
                mismatches.push(ShapeMismatch {
                    position_a: shapes[i].0.clone(),
                    pattern_a: format!("{}", shapes[i].1),
                    position_b: shapes[j].0.clone(),
                    pattern_b: format!("{}", shapes[j].1),
                });
            }
        }
    }
    mismatches
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_models_instantiate_and_validate() {
        for name in MODEL_NAMES {
            let spec = instantiate_model(name).unwrap();
            assert_eq!(spec.name, name);
            assert!(!spec.rules.is_empty());
            assert!(!spec.properties.is_empty());
            // every model has a construction phase and a receive phase
            assert!(spec.rules.iter().any(|r| r.phase == Phase::Construction));
            assert!(spec.rules.iter().any(|r| r.phase == Phase::Receive));
        }
        assert!(matches!(
            instantiate_model("nosuch"),
            Err(ModelError::Unknown(_))
        ));
    }

    #[test]
    fn structural_symmetry_of_builtins() {
        for name in MODEL_NAMES {
            let spec = instantiate_model(name).unwrap();
            let mismatches = audit_structural_symmetry(&spec);
            assert!(
                mismatches.is_empty(),
                "{name}: {:?}",
                mismatches.first()
            );
        }
    }

    #[test]
    fn broken_shape_is_reported() {
        // forwarding consumes an encryption but emits a bare pair while the
        // initiator sends an encryption
        let mut b = ModelBuilder::new("broken");
        b.property(PropertyId::PathIntegrity);
        b.build_arity(3);
        add_ltk_setup(&mut b);
        b.declare_fact("FwdTok", 1, false);
        b.rule(
            "Create",
            Phase::Construction,
            create_ae(),
            &["Fr(~p)", "!Pk($E, pkE)"],
            &["StartBuild($A, ~p)", "Add(~p, $E, aenc(~p, pkE), '')"],
            &["Build(~p, $E, aenc(~p, pkE))"],
        );
        b.rule(
            "Send",
            Phase::Construction,
            Drive::Send,
            &["Build(p, $X, m)"],
            &[],
            &["Net(aenc(m, m))"],
        );
        b.rule(
            "Unwrap",
            Phase::Forwarding,
            Drive::Explore,
            &["Net(aenc(m, pk(ltk)))", "!Ltk($M, ltk)", "FwdTok($M)"],
            &["Forward($M, aenc(m, pk(ltk)), m)"],
            &["Net(<m, m>)"],
        );
        let spec = b.finish();
        let mismatches = audit_structural_symmetry(&spec);
        assert!(!mismatches.is_empty());
        assert!(mismatches.iter().any(|m| {
            (m.position_a == "initiator-out" && m.position_b == "out-of-forwarder")
                || (m.position_a == "out-of-forwarder" && m.position_b == "initiator-out")
        }));
    }

    #[test]
    fn return_rules_are_detected() {
        let unlock = instantiate_model("lightning_unlock").unwrap();
        let names: Vec<&str> = unlock
            .return_rules()
            .iter()
            .map(|r| r.name.as_str())
            .collect();
        assert!(names.contains(&"Bwd_Release"));
        assert!(names.contains(&"Recv_Release"));
        // Start_Release has no Net premise: the endpoint initiates
        assert!(!names.contains(&"Start_Release"));
        let pi_only = instantiate_model("chaum").unwrap();
        assert!(pi_only.return_rules().is_empty());
    }

    #[test]
    fn wormhole_scenario_shape() {
        let (spec, scenario) = wormhole_scenario();
        assert_eq!(spec.name, "lightning_unlock");
        assert_eq!(scenario.path.len(), 5);
        assert_eq!(scenario.initiator().as_str(), "A");
        assert_eq!(scenario.final_agent().as_str(), "E");
        assert!(scenario.corrupt.contains(&Sym::new("M1")));
        assert!(scenario.corrupt.contains(&Sym::new("M3")));
        // the corrupt pair is non-adjacent: M2 sits between
        assert!(!scenario.corrupt.contains(&Sym::new("M2")));
    }
}
