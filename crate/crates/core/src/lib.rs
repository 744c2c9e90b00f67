//! Model-checking kernel for epistemic gossip protocols.
//!
//! The crate revolves around three layers:
//!
//! * [`gossip`] holds the base machinery: agents, secrets, calls, call
//!   sequences and gossip situations.
//! * [`views`] and [`pairview`] capture what agents can observe: an agent's
//!   view of a call sequence and the pairwise epistemic bookkeeping needed
//!   for common-knowledge checks.
//! * [`formula`], [`modelcheck`], [`transforms`] and [`protocol`] build the
//!   logic on top: the formula language, evaluation and exhaustive checking,
//!   sequence rewriting, and distributed-protocol analysis.

pub mod error;
pub mod formula;
pub mod gossip;
pub mod modelcheck;
pub mod pairview;
pub mod protocol;
pub mod transforms;
pub mod views;

pub use error::Error;
pub use formula::{eval_propositional, parse_formula, Formula, Fragment, KnowledgePrefix};
pub use modelcheck::{
    check_truth, check_truth_with, enumerate_nonredundant, eval, eval_at, eval_bounded,
    eval_bounded_converged, NonRedundantNode, NonRedundantNodes, TruthVerdict,
};
pub use pairview::{epv, epv_init, epv_oracle, epv_step, leq_epv, leq_situation, EpistemicPairView};
pub use protocol::{
    check_partial_correctness, decide_termination, enabled_calls, parse_protocol, simulate,
    CommunicationGraph, Protocol, Rule, Scheduler, SimulationTrace, TerminationVerdict,
};
pub use transforms::{
    abab_witness, classify_b_calls, leads_to, linked, r_ab, EssentialClassification, Essentiality,
};
pub use views::{a_simplification, equiv_view, is_a_irrelevant, view, View};
pub use gossip::{
    all_call_sequences, all_calls, drop_redundant_calls, reachable_situations, Agent, Call,
    CallSequence, GossipSituation, Secret, SecretSet, MAX_AGENTS,
};

pub type Result<T> = std::result::Result<T, Error>;
