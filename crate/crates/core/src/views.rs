//! An agent's view of a call sequence: the part of the run the agent can
//! actually observe, the equivalence it induces, and view-preserving
//! simplification of sequences.

use std::fmt;

use crate::error::Error;
use crate::gossip::{situation_from_sets_unchecked, Agent, Call, CallSequence, GossipSituation};
use crate::Result;

/// What one agent sees of a run: the initial situation plus one step per
/// call the agent takes part in. Each step records that call and a
/// situation in which both callers hold their true current secret sets
/// while everyone else is frozen at the agent's previous step.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct View {
    initial: GossipSituation,
    steps: Vec<(Call, GossipSituation)>,
}

impl View {
    pub fn initial(&self) -> &GossipSituation {
        &self.initial
    }

    pub fn steps(&self) -> &[(Call, GossipSituation)] {
        &self.steps
    }

    /// The situation after the last step, or the initial one for an agent
    /// that participated in no call.
    pub fn last_situation(&self) -> &GossipSituation {
        self.steps.last().map(|(_, s)| s).unwrap_or(&self.initial)
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.initial)?;
        for (c, s) in &self.steps {
            write!(f, " -{c}-> {s}")?;
        }
        Ok(())
    }
}

/// Computes agent `a`'s view of the sequence.
pub fn view(num_agents: usize, seq: &CallSequence, a: Agent) -> Result<View> {
    let initial = GossipSituation::root(num_agents)?;
    if a.index() >= num_agents {
        return Err(Error::UnknownAgent(a.to_string()));
    }
    let mut actual = initial.clone();
    let mut steps: Vec<(Call, GossipSituation)> = Vec::new();
    for &c in seq.calls() {
        actual = actual.apply_call(c);
        if c.involves(a) {
            let frozen = steps.last().map(|(_, s)| s).unwrap_or(&initial);
            let sets = (0..num_agents)
                .map(|i| {
                    let agent = Agent::new(i);
                    if c.involves(agent) {
                        actual.secrets_of(agent)
                    } else {
                        frozen.secrets_of(agent)
                    }
                })
                .collect();
            steps.push((c, situation_from_sets_unchecked(sets)));
        }
    }
    Ok(View { initial, steps })
}

/// Decides whether two sequences look the same to agent `a`. This
/// structural comparison coincides with the inductively defined
/// indistinguishability relation.
pub fn equiv_view(num_agents: usize, c: &CallSequence, d: &CallSequence, a: Agent) -> Result<bool> {
    Ok(view(num_agents, c, a)? == view(num_agents, d, a)?)
}

/// Whether removing the call at `index` leaves `a`'s view unchanged.
pub fn is_a_irrelevant(
    num_agents: usize,
    seq: &CallSequence,
    index: usize,
    a: Agent,
) -> Result<bool> {
    if index >= seq.len() {
        return Err(Error::IndexOutOfRange { index, len: seq.len() });
    }
    equiv_view(num_agents, seq, &seq.without_index(index), a)
}

/// Removes irrelevant calls in one left-to-right pass: each call of the
/// current working sequence is tested once, and dropped exactly when its
/// removal leaves `a`'s view unchanged. The result has the same view for
/// `a` as the input.
pub fn a_simplification(num_agents: usize, seq: &CallSequence, a: Agent) -> Result<CallSequence> {
    let mut work = seq.clone();
    let mut j = 0;
    while j < work.len() {
        if is_a_irrelevant(num_agents, &work, j, a)? {
            work = work.without_index(j);
        } else {
            j += 1;
        }
    }
    Ok(work)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gossip::all_calls;
    use proptest::prelude::*;

    fn agent(ch: char) -> Agent {
        Agent::parse(&ch.to_string(), 26).unwrap()
    }

    fn seq(text: &str, n: usize) -> CallSequence {
        CallSequence::parse(text, n).unwrap()
    }

    #[test]
    fn view_freezes_non_participants() {
        let v = view(3, &seq("ac;bc;ac", 3), agent('a')).unwrap();
        assert_eq!(v.to_string(), "A.B.C -ac-> AC.B.AC -ac-> ABC.B.ABC");
        assert_eq!(v.last_situation().to_string(), "ABC.B.ABC");
        // The view hides what b learned in the bc call the viewer missed.
        let actual = GossipSituation::root(3).unwrap().apply_sequence(&seq("ac;bc;ac", 3));
        assert_eq!(actual.to_string(), "ABC.ABC.ABC");
    }

    #[test]
    fn view_without_participation_has_no_steps() {
        let v = view(3, &seq("bc", 3), agent('a')).unwrap();
        assert_eq!(v.steps().len(), 0);
        assert_eq!(v.to_string(), "A.B.C");
    }

    #[test]
    fn view_collects_only_own_calls_on_eight_agents() {
        let c = seq("bf;cd;bc;ce;df;ef;bh;af;bg;ag;ah", 8);
        let v = view(8, &c, agent('a')).unwrap();
        let calls: Vec<String> = v.steps().iter().map(|(c, _)| c.to_string()).collect();
        assert_eq!(calls, ["af", "ag", "ah"]);
        assert_eq!(
            v.to_string(),
            "A.B.C.D.E.F.G.H \
             -af-> ABCDEF.B.C.D.E.ABCDEF.G.H \
             -ag-> ABCDEFGH.B.C.D.E.ABCDEF.ABCDEFGH.H \
             -ah-> ABCDEFGH.B.C.D.E.ABCDEF.ABCDEFGH.ABCDEFGH"
        );
        assert_eq!(v.last_situation().secrets_of(agent('a')).to_string(), "ABCDEFGH");
    }

    #[test]
    fn view_equivalence_depends_on_call_order() {
        let a = agent('a');
        assert!(equiv_view(4, &seq("ab;bc", 4), &seq("ab;bd", 4), a).unwrap());
        assert!(!equiv_view(4, &seq("bc;ab", 4), &seq("bd;ab", 4), a).unwrap());
        let c = seq("ab;cd;ac", 4);
        assert!(equiv_view(4, &c, &c, a).unwrap());
    }

    #[test]
    fn irrelevance_is_removal_invariance_of_the_view() {
        let a = agent('a');
        let c = seq("bf;cd;bc;ce;df;ef;bh;af;bg;ag;ah", 8);
        assert!(is_a_irrelevant(8, &c, 0, a).unwrap());
        assert!(!is_a_irrelevant(3, &seq("ac;bc;ac", 3), 0, a).unwrap());
        assert!(matches!(
            is_a_irrelevant(3, &seq("ac", 3), 5, a),
            Err(Error::IndexOutOfRange { index: 5, len: 1 })
        ));
    }

    #[test]
    fn simplification_deletes_calls_the_agent_cannot_see() {
        let a = agent('a');
        let c = seq("bf;cd;bc;ce;df;ef;bh;af;bg;ag;ah", 8);
        let simplified = a_simplification(8, &c, a).unwrap();
        assert_eq!(simplified.to_string(), "bc;ce;df;ef;bh;af;bg;ag;ah");
        assert!(equiv_view(8, &c, &simplified, a).unwrap());

        assert_eq!(a_simplification(3, &CallSequence::empty(), a).unwrap(), CallSequence::empty());

        let c2 = seq("ah;cd;bc;bd;be;ad;bf;bg;af", 8);
        assert_eq!(a_simplification(8, &c2, a).unwrap().to_string(), "ah;bc;bd;be;ad;bf;af");
    }

    #[test]
    fn duplicating_a_call_is_invisible_to_everyone_else() {
        // A participant records one step per own call, so the duplicate is
        // visible to the two callers; every other agent's view is untouched.
        let n = 4;
        let c = seq("ab;cd;ac;bd;ad", n);
        for i in 0..c.len() {
            let duplicated = c.calls()[i];
            let mut calls = c.calls().to_vec();
            calls.insert(i, duplicated);
            let stuttered = CallSequence::new(calls);
            for idx in 0..n {
                let agent = Agent::new(idx);
                let expected = !duplicated.involves(agent);
                assert_eq!(equiv_view(n, &c, &stuttered, agent).unwrap(), expected);
            }
        }
    }

    fn sequence_strategy(n: usize, max_len: usize) -> impl Strategy<Value = CallSequence> {
        let calls = all_calls(n);
        proptest::collection::vec(0..calls.len(), 0..=max_len)
            .prop_map(move |picks| picks.into_iter().map(|i| calls[i]).collect())
    }

    proptest! {
        #[test]
        fn simplification_preserves_the_view(c in sequence_strategy(4, 8)) {
            let a = Agent::new(0);
            let simplified = a_simplification(4, &c, a).unwrap();
            prop_assert!(equiv_view(4, &c, &simplified, a).unwrap());
            prop_assert!(simplified.len() <= c.len());
        }

        #[test]
        fn removing_a_foreign_call_between_uninvolved_agents_is_irrelevant(
            c in sequence_strategy(3, 5),
        ) {
            // A call involving neither a nor anyone a later talks to cannot
            // reach a's view. With three agents: a trailing bc call.
            let a = Agent::new(0);
            let bc = Call::new(Agent::new(1), Agent::new(2));
            let extended = c.appended(bc);
            prop_assert!(is_a_irrelevant(3, &extended, extended.len() - 1, a).unwrap());
        }
    }
}
