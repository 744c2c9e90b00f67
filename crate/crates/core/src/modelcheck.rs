//! Decides formulas at a call sequence, decides universal truth, and
//! enumerates the finitely many informative call sequences. Common
//! knowledge of one or two agents is read off the epistemic pair-view;
//! groups of three or more collapse to universal truth of the body. A
//! separate bounded-universe evaluator handles arbitrarily nested
//! modalities approximately.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::Error;
use crate::formula::{eval_propositional, Formula, Fragment};
use crate::gossip::{
    all_call_sequences, all_calls, reachable_situations, Call, CallSequence, GossipSituation,
};
use crate::pairview::{epv_init, epv_step, EpistemicPairView};
use crate::views::view;
use crate::Result;

/// The outcome of a universal-truth check: either the formula holds after
/// every call sequence, or `counterexample` is the first sequence, in
/// depth-first order with calls tried alphabetically, where it fails.
/// `explored` counts the sequences whose evaluation actually ran.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TruthVerdict {
    pub holds: bool,
    pub counterexample: Option<CallSequence>,
    pub explored: usize,
}

impl TruthVerdict {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "holds": self.holds,
            "counterexample": self.counterexample.as_ref().map(|c| c.to_string()),
            "explored": self.explored,
        })
    }
}

/// One node of the non-redundant enumeration: a call sequence none of whose
/// prefixes repeats an epistemic pair-view, together with its view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonRedundantNode {
    pub sequence: CallSequence,
    pub epv: EpistemicPairView,
}

fn require_checkable(phi: &Formula) -> Result<()> {
    match phi.classify() {
        Fragment::Propositional | Fragment::WeaklyNested => Ok(()),
        Fragment::General => Err(Error::WrongFragment(
            "nested modalities have no exact evaluation here; use the bounded evaluator"
                .to_string(),
        )),
    }
}

/// Evaluates a formula against a pair-view directly. This is the workhorse
/// behind [`eval`]; protocols that maintain a view incrementally can call
/// it without replaying the sequence.
pub fn eval_at(phi: &Formula, v: &EpistemicPairView) -> Result<bool> {
    require_checkable(phi)?;
    eval_with_epv(phi, v)
}

fn eval_with_epv(phi: &Formula, v: &EpistemicPairView) -> Result<bool> {
    match phi {
        Formula::Atom(..) => eval_propositional(phi, v.actual()),
        Formula::Not(x) => Ok(!eval_with_epv(x, v)?),
        Formula::And(l, r) => Ok(eval_with_epv(l, v)? && eval_with_epv(r, v)?),
        Formula::Or(l, r) => Ok(eval_with_epv(l, v)? || eval_with_epv(r, v)?),
        Formula::Implies(l, r) => Ok(!eval_with_epv(l, v)? || eval_with_epv(r, v)?),
        Formula::Common(group, body) => {
            let mut agents = group.iter();
            match (agents.next(), agents.next(), agents.next()) {
                (None, ..) => Err(Error::IllFormedInput(
                    "common knowledge of an empty group".to_string(),
                )),
                (Some(&a), None, _) => {
                    for s in v.pair(a, a)? {
                        if !eval_propositional(body, s)? {
                            return Ok(false);
                        }
                    }
                    Ok(true)
                }
                (Some(&a), Some(&b), None) => {
                    for s in v.pair(a, b)? {
                        if !eval_propositional(body, s)? {
                            return Ok(false);
                        }
                    }
                    Ok(true)
                }
                (Some(_), Some(_), Some(_)) => {
                    for s in reachable_situations(v.num_agents(), &BTreeSet::new())? {
                        if !eval_propositional(body, &s)? {
                            return Ok(false);
                        }
                    }
                    Ok(true)
                }
            }
        }
    }
}

/// Whether the formula holds after the given call sequence.
pub fn eval(num_agents: usize, phi: &Formula, seq: &CallSequence) -> Result<bool> {
    require_checkable(phi)?;
    let mut v = epv_init(num_agents)?;
    for &c in seq.calls() {
        let prev = v.actual().clone();
        v = epv_step(&v, c, &prev)?;
    }
    eval_with_epv(phi, &v)
}

/// Iterator over every call sequence whose pair-view changes at each step.
/// Depth-first, children in alphabetical call order, parents before
/// children, starting from the empty sequence.
pub struct NonRedundantNodes {
    calls: Vec<Call>,
    stack: Vec<NonRedundantNode>,
}

impl Iterator for NonRedundantNodes {
    type Item = NonRedundantNode;

    fn next(&mut self) -> Option<NonRedundantNode> {
        let node = self.stack.pop()?;
        for &c in self.calls.iter().rev() {
            let child = epv_step(&node.epv, c, node.epv.actual())
                .expect("stepping a well-formed view by a valid call cannot fail");
            if child != node.epv {
                self.stack.push(NonRedundantNode {
                    sequence: node.sequence.appended(c),
                    epv: child,
                });
            }
        }
        Some(node)
    }
}

/// All pair-epistemically informative call sequences: those where every
/// call changes the pair-view. Every other sequence shares its view, and
/// hence all its verdicts, with one of these. The stream is finite because
/// views only grow, strictly along each branch, and only finitely many
/// views exist.
pub fn enumerate_nonredundant(num_agents: usize) -> Result<NonRedundantNodes> {
    let root = NonRedundantNode {
        sequence: CallSequence::empty(),
        epv: epv_init(num_agents)?,
    };
    Ok(NonRedundantNodes { calls: all_calls(num_agents), stack: vec![root] })
}

/// Whether the formula holds after every call sequence whatsoever.
///
/// Verdicts depend only on the pair-view, so it suffices to scan the
/// non-redundant tree; subtrees rooted at an already fully verified view
/// are skipped, since they repeat the same views and verdicts.
pub fn check_truth(num_agents: usize, phi: &Formula) -> Result<TruthVerdict> {
    check_truth_with(num_agents, phi, 1)
}

/// [`check_truth`] with the top-level subtrees shared among `threads`
/// workers. The verdict and counterexample do not depend on `threads`;
/// `explored` can, because the workers do not share the cache of verified
/// views.
pub fn check_truth_with(num_agents: usize, phi: &Formula, threads: usize) -> Result<TruthVerdict> {
    require_checkable(phi)?;
    let init = epv_init(num_agents)?;
    let mut explored = 1;
    if !eval_with_epv(phi, &init)? {
        return Ok(TruthVerdict {
            holds: false,
            counterexample: Some(CallSequence::empty()),
            explored,
        });
    }
    let calls = all_calls(num_agents);
    let mut branches = Vec::new();
    for (i, &c) in calls.iter().enumerate() {
        let child = epv_step(&init, c, init.actual())?;
        if child != init {
            branches.push((i, CallSequence::empty().appended(c), child));
        }
    }
    let threads = threads.max(1).min(branches.len().max(1));
    if threads <= 1 {
        let mut verified = BTreeSet::new();
        let mut first_failure = None;
        for (_, seq, child) in &branches {
            if first_failure.is_some() {
                break;
            }
            explored += scan_subtree(phi, seq, child, &calls, &mut verified, &mut first_failure)?;
        }
        return Ok(finish_verdict(first_failure, explored));
    }
    let chunks: Vec<Vec<&(usize, CallSequence, EpistemicPairView)>> = (0..threads)
        .map(|t| branches.iter().skip(t).step_by(threads).collect())
        .collect();
    let calls = &calls;
    let results: Vec<Result<(usize, Option<(usize, CallSequence)>)>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        let mut verified = BTreeSet::new();
                        let mut local_explored = 0;
                        let mut first = None;
                        for (branch, seq, child) in chunk {
                            let mut failure = None;
                            local_explored += scan_subtree(
                                phi,
                                seq,
                                child,
                                calls,
                                &mut verified,
                                &mut failure,
                            )?;
                            if let Some(f) = failure {
                                first = Some((*branch, f));
                                break;
                            }
                        }
                        Ok((local_explored, first))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
    let mut first_failure: Option<(usize, CallSequence)> = None;
    for r in results {
        let (count, failure) = r?;
        explored += count;
        if let Some((branch, seq)) = failure {
            if first_failure.as_ref().is_none_or(|(b, _)| branch < *b) {
                first_failure = Some((branch, seq));
            }
        }
    }
    Ok(finish_verdict(first_failure.map(|(_, seq)| seq), explored))
}

fn finish_verdict(failure: Option<CallSequence>, explored: usize) -> TruthVerdict {
    TruthVerdict { holds: failure.is_none(), counterexample: failure, explored }
}

fn scan_subtree(
    phi: &Formula,
    seq: &CallSequence,
    v: &EpistemicPairView,
    calls: &[Call],
    verified: &mut BTreeSet<EpistemicPairView>,
    failure: &mut Option<CallSequence>,
) -> Result<usize> {
    if verified.contains(v) {
        return Ok(0);
    }
    let mut explored = 1;
    if !eval_with_epv(phi, v)? {
        *failure = Some(seq.clone());
        return Ok(explored);
    }
    for &c in calls {
        let child = epv_step(v, c, v.actual())?;
        if child == *v {
            continue;
        }
        explored += scan_subtree(phi, &seq.appended(c), &child, calls, verified, failure)?;
        if failure.is_some() {
            return Ok(explored);
        }
    }
    verified.insert(v.clone());
    Ok(explored)
}

/// A finite Kripke model over all call sequences of bounded length, with
/// indistinguishability realized by view equality. Shared between calls
/// because building one is the expensive part.
struct BoundedModel {
    num_agents: usize,
    sequences: Vec<CallSequence>,
    index_of: BTreeMap<CallSequence, usize>,
    situations: Vec<GossipSituation>,
    agent_class: Vec<Vec<usize>>,
}

const MAX_BOUNDED_UNIVERSE: usize = 3_000_000;

fn bounded_model(num_agents: usize, max_len: usize) -> Result<Arc<BoundedModel>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<BoundedModel>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(m) = cache.lock().unwrap().get(&(num_agents, max_len)) {
        return Ok(Arc::clone(m));
    }
    let per_step = all_calls(num_agents).len().max(1);
    let mut total: usize = 0;
    let mut layer: usize = 1;
    for _ in 0..=max_len {
        total = total.saturating_add(layer);
        layer = layer.saturating_mul(per_step);
    }
    if total > MAX_BOUNDED_UNIVERSE {
        return Err(Error::IllFormedInput(format!(
            "a bounded universe of {total} sequences ({num_agents} agents, length {max_len}) is too large"
        )));
    }
    let sequences = all_call_sequences(num_agents, max_len);
    let index_of: BTreeMap<CallSequence, usize> =
        sequences.iter().enumerate().map(|(i, c)| (c.clone(), i)).collect();
    let root = GossipSituation::root(num_agents)?;
    let situations: Vec<GossipSituation> =
        sequences.iter().map(|c| root.apply_sequence(c)).collect();
    let mut agent_class = Vec::with_capacity(num_agents);
    for a in 0..num_agents {
        let a = crate::gossip::Agent::new(a);
        let mut ids: BTreeMap<crate::views::View, usize> = BTreeMap::new();
        let mut classes = Vec::with_capacity(sequences.len());
        for c in &sequences {
            let w = view(num_agents, c, a)?;
            let next = ids.len();
            classes.push(*ids.entry(w).or_insert(next));
        }
        agent_class.push(classes);
    }
    let model = Arc::new(BoundedModel { num_agents, sequences, index_of, situations, agent_class });
    let mut guard = cache.lock().unwrap();
    if guard.len() >= 8 {
        guard.clear();
    }
    guard.insert((num_agents, max_len), Arc::clone(&model));
    Ok(model)
}

/// The partition of the bounded universe reachable by chains of view
/// equalities over the group's members.
fn group_components(m: &BoundedModel, group: &BTreeSet<crate::gossip::Agent>) -> Vec<usize> {
    let mut dsu = crate::pairview::DisjointSets::new(m.sequences.len());
    for &a in group {
        let classes = &m.agent_class[a.index()];
        let mut head: HashMap<usize, usize> = HashMap::new();
        for (i, &cls) in classes.iter().enumerate() {
            match head.get(&cls) {
                Some(&h) => dsu.union(h, i),
                None => {
                    head.insert(cls, i);
                }
            }
        }
    }
    (0..m.sequences.len()).map(|i| dsu.find(i)).collect()
}

struct BoundedEval<'m> {
    model: &'m BoundedModel,
    components: BTreeMap<BTreeSet<crate::gossip::Agent>, Vec<usize>>,
    modal_ids: Vec<*const Formula>,
    memo: HashMap<(usize, usize), bool>,
}

impl<'m> BoundedEval<'m> {
    fn new(model: &'m BoundedModel, phi: &Formula) -> Result<BoundedEval<'m>> {
        let mut components = BTreeMap::new();
        let mut modal_ids = Vec::new();
        collect_groups(model, phi, &mut components, &mut modal_ids)?;
        Ok(BoundedEval { model, components, modal_ids, memo: HashMap::new() })
    }

    fn eval(&mut self, phi: &Formula, i: usize) -> Result<bool> {
        match phi {
            Formula::Atom(..) => eval_propositional(phi, &self.model.situations[i]),
            Formula::Not(x) => Ok(!self.eval(x, i)?),
            Formula::And(l, r) => Ok(self.eval(l, i)? && self.eval(r, i)?),
            Formula::Or(l, r) => Ok(self.eval(l, i)? || self.eval(r, i)?),
            Formula::Implies(l, r) => Ok(!self.eval(l, i)? || self.eval(r, i)?),
            Formula::Common(group, body) => {
                let modal = self
                    .modal_ids
                    .iter()
                    .position(|&p| std::ptr::eq(p, phi as *const Formula))
                    .expect("every modal subformula was registered");
                let comp = self.components[group][i];
                if let Some(&known) = self.memo.get(&(modal, comp)) {
                    return Ok(known);
                }
                let mut holds = true;
                for j in 0..self.model.sequences.len() {
                    if self.components[group][j] == comp && !self.eval(body, j)? {
                        holds = false;
                        break;
                    }
                }
                self.memo.insert((modal, comp), holds);
                Ok(holds)
            }
        }
    }
}

fn collect_groups(
    model: &BoundedModel,
    phi: &Formula,
    components: &mut BTreeMap<BTreeSet<crate::gossip::Agent>, Vec<usize>>,
    modal_ids: &mut Vec<*const Formula>,
) -> Result<()> {
    match phi {
        Formula::Atom(..) => Ok(()),
        Formula::Not(x) => collect_groups(model, x, components, modal_ids),
        Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
            collect_groups(model, l, components, modal_ids)?;
            collect_groups(model, r, components, modal_ids)
        }
        Formula::Common(group, body) => {
            if group.is_empty() {
                return Err(Error::IllFormedInput(
                    "common knowledge of an empty group".to_string(),
                ));
            }
            if let Some(a) = group.iter().find(|a| a.index() >= model.num_agents) {
                return Err(Error::UnknownAgent(a.to_string()));
            }
            modal_ids.push(phi as *const Formula);
            if !components.contains_key(group) {
                let comp = group_components(model, group);
                components.insert(group.clone(), comp);
            }
            collect_groups(model, body, components, modal_ids)
        }
    }
}

/// Evaluates an arbitrarily nested formula over the finite universe of all
/// sequences of length at most `max_len`. Exact within that universe; a
/// universal modality can miss counterexamples that need longer sequences,
/// so a `true` here is an approximation of the real model, not a proof.
pub fn eval_bounded(
    num_agents: usize,
    phi: &Formula,
    seq: &CallSequence,
    max_len: usize,
) -> Result<bool> {
    if seq.len() > max_len {
        return Err(Error::IllFormedInput(format!(
            "the sequence has {} calls but the universe is capped at {max_len}",
            seq.len()
        )));
    }
    let model = bounded_model(num_agents, max_len)?;
    let start = model.index_of[seq];
    BoundedEval::new(&model, phi)?.eval(phi, start)
}

/// Runs [`eval_bounded`] with growing bounds until the verdict and the set
/// of situations each modality quantifies over at `seq` agree for two
/// consecutive bounds, then returns the verdict and the bound reached.
/// A stabilized answer is still a bounded-universe answer; this is a
/// heuristic stopping rule, not a convergence proof.
pub fn eval_bounded_converged(
    num_agents: usize,
    phi: &Formula,
    seq: &CallSequence,
) -> Result<(bool, usize)> {
    let signature = |max_len: usize| -> Result<(bool, BTreeMap<BTreeSet<crate::gossip::Agent>, BTreeSet<GossipSituation>>)> {
        let model = bounded_model(num_agents, max_len)?;
        let start = model.index_of[seq];
        let mut ev = BoundedEval::new(&model, phi)?;
        let verdict = ev.eval(phi, start)?;
        let mut quotient = BTreeMap::new();
        for (group, comp) in &ev.components {
            let mine = comp[start];
            let sits: BTreeSet<GossipSituation> = (0..model.sequences.len())
                .filter(|&j| comp[j] == mine)
                .map(|j| model.situations[j].clone())
                .collect();
            quotient.insert(group.clone(), sits);
        }
        Ok((verdict, quotient))
    };
    let mut bound = seq.len().max(2);
    let mut current = signature(bound)?;
    loop {
        let next = signature(bound + 1)?;
        if next == current {
            return Ok((next.0, bound + 1));
        }
        bound += 1;
        current = next;
    }
}
