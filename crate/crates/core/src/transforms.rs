//! Structural rewrites of call sequences: chains of linked calls, the
//! essential/inessential split of one agent's calls relative to another,
//! the rerouting that removes inessential calls, and the alternating chain
//! of view-preserving steps that takes any sequence without a given call
//! down to the empty one.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::gossip::{Agent, Call, CallSequence};
use crate::views::{a_simplification, equiv_view, is_a_irrelevant};
use crate::Result;

/// Whether exactly one agent takes part in both calls.
pub fn linked(c: Call, d: Call) -> bool {
    let shared = [c.lo(), c.hi()]
        .iter()
        .filter(|&&x| d.involves(x))
        .count();
    shared == 1
}

/// The smallest index of a call of `a` reachable from `from_index` by a
/// forward chain of pairwise linked calls, none of which involves `a`
/// until the final one.
pub fn leads_to(seq: &CallSequence, from_index: usize, a: Agent) -> Result<Option<usize>> {
    let calls = seq.calls();
    if from_index >= calls.len() {
        return Err(Error::IndexOutOfRange { index: from_index, len: calls.len() });
    }
    if calls[from_index].involves(a) {
        return Err(Error::IllFormedInput(format!(
            "the call {} at index {from_index} already involves {a}",
            calls[from_index]
        )));
    }
    // best[i]: the earliest call of `a` reachable from i, right to left.
    let mut best: Vec<Option<usize>> = vec![None; calls.len()];
    for i in (0..calls.len()).rev() {
        if calls[i].involves(a) {
            continue;
        }
        let mut earliest = None;
        for j in i + 1..calls.len() {
            if !linked(calls[i], calls[j]) {
                continue;
            }
            let candidate = if calls[j].involves(a) { Some(j) } else { best[j] };
            earliest = match (earliest, candidate) {
                (None, c) => c,
                (e, None) => e,
                (Some(e), Some(c)) => Some(e.min(c)),
            };
        }
        best[i] = earliest;
    }
    Ok(best[from_index])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Essentiality {
    Essential,
    Inessential,
}

/// For each call of `b` in the sequence: whether it is essential for `a`,
/// and the earliest call of `a` it leads to, when any.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EssentialClassification {
    calls: BTreeMap<usize, (Essentiality, Option<usize>)>,
}

impl EssentialClassification {
    /// Indices of `b`'s calls with each verdict and lead target, in order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, Essentiality, Option<usize>)> + '_ {
        self.calls.iter().map(|(&i, &(e, t))| (i, e, t))
    }

    pub fn essential_indices(&self) -> Vec<usize> {
        self.entries()
            .filter(|&(_, e, _)| e == Essentiality::Essential)
            .map(|(i, ..)| i)
            .collect()
    }

    pub fn inessential_indices(&self) -> Vec<usize> {
        self.entries()
            .filter(|&(_, e, _)| e == Essentiality::Inessential)
            .map(|(i, ..)| i)
            .collect()
    }
}

fn check_agent_pair(seq: &CallSequence, a: Agent, b: Agent) -> Result<()> {
    if a == b {
        return Err(Error::IllFormedInput(format!(
            "the two distinguished agents must differ, got {a} twice"
        )));
    }
    let ab = Call::new(a, b);
    if seq.calls().contains(&ab) {
        return Err(Error::IllFormedInput(format!(
            "the sequence contains the call {ab}, which this rewrite assumes away"
        )));
    }
    Ok(())
}

fn check_reduced(num_agents: usize, seq: &CallSequence, a: Agent) -> Result<()> {
    for i in 0..seq.len() {
        if is_a_irrelevant(num_agents, seq, i, a)? {
            return Err(Error::IllFormedInput(format!(
                "the call {} at index {i} is irrelevant for {a}; simplify first",
                seq.calls()[i]
            )));
        }
    }
    Ok(())
}

/// Splits `b`'s calls into essential and inessential ones for `a`: a call
/// of `b` is essential exactly when it leads to the earliest call of `a`
/// that any call of `b` leads to. Calls of `b` that lead to no call of
/// `a` at all are inessential.
///
/// The sequence must not contain the call between `a` and `b`.
pub fn classify_b_calls(seq: &CallSequence, a: Agent, b: Agent) -> Result<EssentialClassification> {
    check_agent_pair(seq, a, b)?;
    let mut calls = BTreeMap::new();
    let mut targets = Vec::new();
    for (i, c) in seq.calls().iter().enumerate() {
        if c.involves(b) && !c.involves(a) {
            let target = leads_to(seq, i, a)?;
            if let Some(t) = target {
                targets.push(t);
            }
            calls.insert(i, target);
        }
    }
    let earliest = targets.into_iter().min();
    let calls = calls
        .into_iter()
        .map(|(i, target)| {
            let verdict = if target.is_some() && target == earliest {
                Essentiality::Essential
            } else {
                Essentiality::Inessential
            };
            (i, (verdict, target))
        })
        .collect();
    Ok(EssentialClassification { calls })
}

/// Removes `b`'s inessential calls for `a` by rerouting: each one, in
/// original order, is deleted when its partner already talks to `a`'s
/// partner in the earliest `a`-call it currently leads to, and otherwise
/// replaced by the call between the two partners. The result has the same
/// view for `a`.
///
/// The sequence must contain no calls irrelevant for `a`, so that every
/// inessential call has somewhere to reroute to.
pub fn r_ab(num_agents: usize, seq: &CallSequence, a: Agent, b: Agent) -> Result<CallSequence> {
    check_agent_pair(seq, a, b)?;
    check_reduced(num_agents, seq, a)?;
    let classification = classify_b_calls(seq, a, b)?;
    let pending = classification.inessential_indices();
    let mut work: Vec<Call> = seq.calls().to_vec();
    let mut deleted_before = vec![0usize; seq.len() + 1];
    let mut deletions: Vec<usize> = Vec::new();
    for original in pending {
        let index = original - deleted_before[original];
        let current: CallSequence = work.iter().copied().collect();
        let target = leads_to(&current, index, a)?.ok_or_else(|| {
            Error::InternalInvariant(format!(
                "inessential call {} lost its rerouting target",
                work[index]
            ))
        })?;
        let c = work[index].partner_of(b).expect("a b-call has a partner of b");
        let d = work[target].partner_of(a).expect("an a-call has a partner of a");
        if c == d {
            work.remove(index);
            deletions.push(original);
            for later in original + 1..deleted_before.len() {
                deleted_before[later] += 1;
            }
        } else {
            work[index] = Call::new(c, d);
        }
    }
    Ok(work.into_iter().collect())
}

/// A chain of single-agent view equivalences from `seq` down to the empty
/// sequence, alternating between the views of `a` and `b`. Each returned
/// step `(next, agent)` means the previous sequence and `next` look the
/// same to `agent`; every step is re-verified on the actual views before
/// the chain is returned.
///
/// Requires that `seq` contains no call between `a` and `b`.
pub fn abab_witness(
    num_agents: usize,
    seq: &CallSequence,
    a: Agent,
    b: Agent,
) -> Result<Vec<(CallSequence, Agent)>> {
    if a == b {
        return Err(Error::IllFormedInput(format!(
            "the two distinguished agents must differ, got {a} twice"
        )));
    }
    let ab = Call::new(a, b);
    if seq.calls().contains(&ab) {
        return Err(Error::IllFormedInput(format!(
            "the sequence contains the call {ab}, so no such chain exists"
        )));
    }
    let c1 = a_simplification(num_agents, seq, a)?;
    let c2 = r_ab(num_agents, &c1, a, b).map_err(|e| match e {
        Error::IllFormedInput(msg) => Error::InternalInvariant(format!(
            "simplification left the sequence unfit for rerouting: {msg}"
        )),
        other => other,
    })?;
    let last_b = c2.calls().iter().rposition(|c| c.involves(b));
    let c3 = match last_b {
        Some(i) => c2.prefix(i + 1),
        None => CallSequence::empty(),
    };
    let c4: CallSequence = c3.calls().iter().copied().filter(|c| !c.involves(b)).collect();
    let steps = vec![
        (c2, a),
        (c3, b),
        (c4, a),
        (CallSequence::empty(), b),
    ];
    let mut previous = seq.clone();
    for (next, agent) in &steps {
        if !equiv_view(num_agents, &previous, next, *agent)? {
            return Err(Error::InternalInvariant(format!(
                "the step from {previous} to {next} does not preserve {agent}'s view"
            )));
        }
        previous = next.clone();
    }
    Ok(steps)
}
