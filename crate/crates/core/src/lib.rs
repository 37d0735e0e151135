//! Bounded symbolic verifier for message-forwarding ("path") protocols.
//!
//! Protocol models are multiset rewriting systems executed under a
//! Dolev-Yao adversary. The explorer searches bounded scenarios for traces
//! violating Path Integrity, Verification-Dependent Path Integrity, or Path
//! Symmetry, and reports concrete attack traces or bounded-safety verdicts.

pub mod adversary;
pub mod msr;
pub mod properties;
pub mod protocols;
pub mod term;

pub use term::{Sort, Subst, Sym, Term, Theory};
