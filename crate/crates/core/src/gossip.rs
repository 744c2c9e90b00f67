//! Gossip kernel: agents, secrets, calls, situations, and call application.
//!
//! Agents are indices into a fixed ordering and are written `a`, `b`, `c`, …
//! in text. Each agent owns exactly one secret, written with the matching
//! upper-case letter. A call between two agents replaces both of their secret
//! sets with the union of the two; nobody else is affected. A gossip
//! situation is the per-agent family of secret sets, printed like `AC.B.AC`.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::Error;
use crate::Result;

/// Hard cap on the number of agents. Secret sets are 32-bit masks and the
/// text notation spends one letter per agent, so the cap is the alphabet.
pub const MAX_AGENTS: usize = 26;

/// An agent, identified by its position in the fixed total order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Agent(u8);

impl Agent {
    /// Panics if `index` exceeds [`MAX_AGENTS`]; use [`Agent::parse`] for
    /// unvalidated input.
    pub fn new(index: usize) -> Agent {
        assert!(index < MAX_AGENTS, "agent index {index} exceeds the supported maximum");
        Agent(index as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The secret this agent starts out with.
    pub fn secret(self) -> Secret {
        Secret(self.0)
    }

    /// Accepts the letter form (`c`) and the indexed form (`a2`), both
    /// naming the same agent.
    pub fn parse(text: &str, num_agents: usize) -> Result<Agent> {
        let err = || Error::UnknownAgent(text.to_string());
        let mut chars = text.chars();
        let first = chars.next().ok_or_else(err)?;
        let rest = chars.as_str();
        if !first.is_ascii_lowercase() {
            return Err(err());
        }
        let index = if rest.is_empty() {
            (first as u8 - b'a') as usize
        } else {
            if first != 'a' || !rest.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            rest.parse::<usize>().map_err(|_| err())?
        };
        if index >= num_agents || index >= MAX_AGENTS {
            return Err(err());
        }
        Ok(Agent(index as u8))
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", (b'a' + self.0) as char)
    }
}

/// A secret; secrets and agents are in bijection, so this is the same index
/// printed in upper case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Secret(u8);

impl Secret {
    pub fn new(index: usize) -> Secret {
        assert!(index < MAX_AGENTS, "secret index {index} exceeds the supported maximum");
        Secret(index as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn owner(self) -> Agent {
        Agent(self.0)
    }

    /// Accepts `C` and the indexed form `A2`.
    pub fn parse(text: &str, num_agents: usize) -> Result<Secret> {
        let err = || Error::UnknownSecret(text.to_string());
        let mut chars = text.chars();
        let first = chars.next().ok_or_else(err)?;
        let rest = chars.as_str();
        if !first.is_ascii_uppercase() {
            return Err(err());
        }
        let index = if rest.is_empty() {
            (first as u8 - b'A') as usize
        } else {
            if first != 'A' || !rest.bytes().all(|b| b.is_ascii_digit()) {
                return Err(err());
            }
            rest.parse::<usize>().map_err(|_| err())?
        };
        if index >= num_agents || index >= MAX_AGENTS {
            return Err(err());
        }
        Ok(Secret(index as u8))
    }
}

impl fmt::Display for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", (b'A' + self.0) as char)
    }
}

/// A set of secrets, stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SecretSet(u32);

impl SecretSet {
    pub fn empty() -> SecretSet {
        SecretSet(0)
    }

    pub fn singleton(s: Secret) -> SecretSet {
        SecretSet(1 << s.0)
    }

    pub fn contains(self, s: Secret) -> bool {
        self.0 & (1 << s.0) != 0
    }

    pub fn insert(&mut self, s: Secret) {
        self.0 |= 1 << s.0;
    }

    pub fn union(self, other: SecretSet) -> SecretSet {
        SecretSet(self.0 | other.0)
    }

    pub fn is_subset(self, other: SecretSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Secret> {
        (0..MAX_AGENTS as u8).filter(move |i| self.0 & (1 << i) != 0).map(Secret)
    }

    pub fn parse(text: &str, num_agents: usize) -> Result<SecretSet> {
        let mut set = SecretSet::empty();
        for ch in text.chars() {
            set.insert(Secret::parse(&ch.to_string(), num_agents)?);
        }
        Ok(set)
    }
}

impl fmt::Display for SecretSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.iter() {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// A call between two distinct agents, stored with the smaller agent first,
/// so `ca` and `ac` denote the same call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Call {
    lo: Agent,
    hi: Agent,
}

impl Call {
    /// Panics when both ends are the same agent; use [`Call::try_new`] for
    /// unvalidated input.
    pub fn new(x: Agent, y: Agent) -> Call {
        Call::try_new(x, y).expect("a call needs two distinct agents")
    }

    pub fn try_new(x: Agent, y: Agent) -> Result<Call> {
        if x == y {
            return Err(Error::IllFormedInput(format!("call `{x}{y}` connects an agent to itself")));
        }
        let (lo, hi) = if x < y { (x, y) } else { (y, x) };
        Ok(Call { lo, hi })
    }

    pub fn lo(self) -> Agent {
        self.lo
    }

    pub fn hi(self) -> Agent {
        self.hi
    }

    pub fn agents(self) -> [Agent; 2] {
        [self.lo, self.hi]
    }

    pub fn involves(self, a: Agent) -> bool {
        self.lo == a || self.hi == a
    }

    /// The other end of the call, if `a` participates at all.
    pub fn partner_of(self, a: Agent) -> Option<Agent> {
        if self.lo == a {
            Some(self.hi)
        } else if self.hi == a {
            Some(self.lo)
        } else {
            None
        }
    }

    /// Accepts `ac`, `ca`, `(a,c)` and the indexed form `(a0,a2)`.
    pub fn parse(text: &str, num_agents: usize) -> Result<Call> {
        let t = text.trim();
        let (x, y) = if let Some(inner) = t.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
            let mut parts = inner.splitn(2, ',');
            let first = parts.next().unwrap_or("").trim();
            let second = parts
                .next()
                .ok_or_else(|| Error::IllFormedInput(format!("call `{t}` needs two agents")))?
                .trim();
            (Agent::parse(first, num_agents)?, Agent::parse(second, num_agents)?)
        } else {
            let mut chars = t.chars();
            match (chars.next(), chars.next(), chars.next()) {
                (Some(x), Some(y), None) => (
                    Agent::parse(&x.to_string(), num_agents)?,
                    Agent::parse(&y.to_string(), num_agents)?,
                ),
                _ => {
                    return Err(Error::IllFormedInput(format!(
                        "call `{t}` should be two agent letters or `(x,y)`"
                    )))
                }
            }
        };
        Call::try_new(x, y)
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.lo, self.hi)
    }
}

/// A finite sequence of calls. The empty sequence prints as `ε`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct CallSequence(Vec<Call>);

impl CallSequence {
    pub fn empty() -> CallSequence {
        CallSequence(Vec::new())
    }

    pub fn new(calls: Vec<Call>) -> CallSequence {
        CallSequence(calls)
    }

    pub fn calls(&self) -> &[Call] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn push(&mut self, c: Call) {
        self.0.push(c);
    }

    /// A copy with `c` appended.
    pub fn appended(&self, c: Call) -> CallSequence {
        let mut v = self.0.clone();
        v.push(c);
        CallSequence(v)
    }

    /// A copy with the call at `index` removed.
    pub fn without_index(&self, index: usize) -> CallSequence {
        let mut v = self.0.clone();
        v.remove(index);
        CallSequence(v)
    }

    /// The first `len` calls.
    pub fn prefix(&self, len: usize) -> CallSequence {
        CallSequence(self.0[..len].to_vec())
    }

    pub fn concat(&self, other: &CallSequence) -> CallSequence {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        CallSequence(v)
    }

    /// Accepts `ac;bc;ac`; the empty string and `ε` both denote the empty
    /// sequence.
    pub fn parse(text: &str, num_agents: usize) -> Result<CallSequence> {
        let t = text.trim();
        if t.is_empty() || t == "ε" {
            return Ok(CallSequence::empty());
        }
        t.split(';').map(|part| Call::parse(part, num_agents)).collect()
    }
}

impl FromIterator<Call> for CallSequence {
    fn from_iter<I: IntoIterator<Item = Call>>(iter: I) -> CallSequence {
        CallSequence(iter.into_iter().collect())
    }
}

impl fmt::Display for CallSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "ε");
        }
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ";")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Who is familiar with which secrets: one secret set per agent.
///
/// Every agent is at least familiar with their own secret; constructors
/// enforce this.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GossipSituation {
    sets: Vec<SecretSet>,
}

impl GossipSituation {
    /// The initial situation in which everybody holds exactly their own
    /// secret. Needs at least two agents to be a sensible model.
    pub fn root(num_agents: usize) -> Result<GossipSituation> {
        if !(2..=MAX_AGENTS).contains(&num_agents) {
            return Err(Error::InvalidConfiguration(format!(
                "agent count must be between 2 and {MAX_AGENTS}, got {num_agents}"
            )));
        }
        let sets = (0..num_agents).map(|i| SecretSet::singleton(Secret::new(i))).collect();
        Ok(GossipSituation { sets })
    }

    pub fn from_sets(sets: Vec<SecretSet>) -> Result<GossipSituation> {
        if !(2..=MAX_AGENTS).contains(&sets.len()) {
            return Err(Error::InvalidConfiguration(format!(
                "agent count must be between 2 and {MAX_AGENTS}, got {}",
                sets.len()
            )));
        }
        for (i, set) in sets.iter().enumerate() {
            if !set.contains(Secret::new(i)) {
                return Err(Error::IllFormedInput(format!(
                    "agent {} must be familiar with their own secret",
                    Agent::new(i)
                )));
            }
        }
        Ok(GossipSituation { sets })
    }

    pub fn num_agents(&self) -> usize {
        self.sets.len()
    }

    pub fn secrets_of(&self, a: Agent) -> SecretSet {
        self.sets[a.index()]
    }

    /// Both participants end up with the union of their secret sets.
    pub fn apply_call(&self, c: Call) -> GossipSituation {
        debug_assert!(c.hi.index() < self.sets.len(), "call {c} is out of range");
        let merged = self.sets[c.lo.index()].union(self.sets[c.hi.index()]);
        let mut sets = self.sets.clone();
        sets[c.lo.index()] = merged;
        sets[c.hi.index()] = merged;
        GossipSituation { sets }
    }

    pub fn apply_sequence(&self, seq: &CallSequence) -> GossipSituation {
        seq.calls().iter().fold(self.clone(), |s, &c| s.apply_call(c))
    }

    /// True when applying `c` would change nothing, i.e. both participants
    /// already hold the same set.
    pub fn is_noop_call(&self, c: Call) -> bool {
        self.sets[c.lo.index()] == self.sets[c.hi.index()]
    }

    /// An expert is familiar with every secret.
    pub fn is_expert(&self, a: Agent) -> bool {
        self.secrets_of(a).len() == self.sets.len()
    }

    pub fn all_experts(&self) -> bool {
        (0..self.sets.len()).all(|i| self.is_expert(Agent::new(i)))
    }

    /// Parses the dotted notation, e.g. `AC.B.AC`.
    pub fn parse(text: &str) -> Result<GossipSituation> {
        let parts: Vec<&str> = text.trim().split('.').collect();
        let n = parts.len();
        if !(2..=MAX_AGENTS).contains(&n) {
            return Err(Error::IllFormedInput(format!(
                "situation `{text}` must list between 2 and {MAX_AGENTS} components"
            )));
        }
        let sets = parts
            .iter()
            .map(|p| SecretSet::parse(p.trim(), n))
            .collect::<Result<Vec<_>>>()?;
        GossipSituation::from_sets(sets)
    }
}

impl fmt::Display for GossipSituation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, set) in self.sets.iter().enumerate() {
            if i > 0 {
                write!(f, ".")?;
            }
            write!(f, "{set}")?;
        }
        Ok(())
    }
}

pub(crate) fn situation_from_sets_unchecked(sets: Vec<SecretSet>) -> GossipSituation {
    GossipSituation { sets }
}

/// All possible calls over `num_agents` agents, in lexicographic order.
pub fn all_calls(num_agents: usize) -> Vec<Call> {
    let mut calls = Vec::new();
    for x in 0..num_agents {
        for y in x + 1..num_agents {
            calls.push(Call::new(Agent::new(x), Agent::new(y)));
        }
    }
    calls
}

/// All call sequences of length at most `max_len`, ordered by length and
/// lexicographically within a length. The empty sequence comes first.
pub fn all_call_sequences(num_agents: usize, max_len: usize) -> Vec<CallSequence> {
    let calls = all_calls(num_agents);
    let mut out = vec![CallSequence::empty()];
    let mut level_start = 0;
    for _ in 0..max_len {
        let level_end = out.len();
        for i in level_start..level_end {
            for &c in &calls {
                out.push(out[i].appended(c));
            }
        }
        level_start = level_end;
    }
    out
}

/// Closure of `seed` under the given calls.
pub(crate) fn close_under<I>(seed: I, calls: &[Call]) -> BTreeSet<GossipSituation>
where
    I: IntoIterator<Item = GossipSituation>,
{
    let mut set: BTreeSet<GossipSituation> = seed.into_iter().collect();
    let mut frontier: Vec<GossipSituation> = set.iter().cloned().collect();
    while let Some(s) = frontier.pop() {
        for &c in calls {
            let t = s.apply_call(c);
            if !set.contains(&t) {
                frontier.push(t.clone());
                set.insert(t);
            }
        }
    }
    set
}

/// Every situation reachable from the root without ever using a call from
/// `forbidden`.
pub fn reachable_situations(
    num_agents: usize,
    forbidden: &BTreeSet<Call>,
) -> Result<BTreeSet<GossipSituation>> {
    let root = GossipSituation::root(num_agents)?;
    let calls: Vec<Call> =
        all_calls(num_agents).into_iter().filter(|c| !forbidden.contains(c)).collect();
    Ok(close_under(std::iter::once(root), &calls))
}

/// Repeatedly removes calls that change nothing at the point where they
/// occur, keeping every occurrence of `keep` untouched. The result applies
/// to the same final situation as the input.
pub fn drop_redundant_calls(
    num_agents: usize,
    seq: &CallSequence,
    keep: Call,
) -> Result<CallSequence> {
    let mut current = seq.clone();
    'retry: loop {
        let mut s = GossipSituation::root(num_agents)?;
        for (i, &c) in current.calls().iter().enumerate() {
            if c != keep && s.is_noop_call(c) {
                current = current.without_index(i);
                continue 'retry;
            }
            s = s.apply_call(c);
        }
        return Ok(current);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(text: &str, n: usize) -> Call {
        Call::parse(text, n).unwrap()
    }

    #[test]
    fn root_lists_own_secrets_only() {
        assert_eq!(GossipSituation::root(3).unwrap().to_string(), "A.B.C");
        assert_eq!(GossipSituation::root(2).unwrap().to_string(), "A.B");
        assert_eq!(GossipSituation::root(8).unwrap().to_string(), "A.B.C.D.E.F.G.H");
    }

    #[test]
    fn root_rejects_degenerate_agent_counts() {
        assert!(matches!(GossipSituation::root(0), Err(Error::InvalidConfiguration(_))));
        assert!(matches!(GossipSituation::root(1), Err(Error::InvalidConfiguration(_))));
        assert!(matches!(GossipSituation::root(27), Err(Error::InvalidConfiguration(_))));
    }

    #[test]
    fn call_application_merges_both_sides() {
        let root = GossipSituation::root(3).unwrap();
        let s1 = root.apply_call(call("ac", 3));
        assert_eq!(s1.to_string(), "AC.B.AC");
        let s2 = s1.apply_call(call("bc", 3));
        assert_eq!(s2.to_string(), "AC.ABC.ABC");
        let s3 = s2.apply_call(call("ac", 3));
        assert_eq!(s3.to_string(), "ABC.ABC.ABC");
    }

    #[test]
    fn sequence_application_folds_left() {
        let root = GossipSituation::root(3).unwrap();
        let seq = CallSequence::parse("ac;bc;ac", 3).unwrap();
        assert_eq!(root.apply_sequence(&seq).to_string(), "ABC.ABC.ABC");
        assert_eq!(root.apply_sequence(&CallSequence::empty()), root);
    }

    #[test]
    fn repeated_call_is_noop() {
        let root = GossipSituation::root(3).unwrap();
        let ab = call("ab", 3);
        let once = root.apply_call(ab);
        assert!(!root.is_noop_call(ab));
        assert!(once.is_noop_call(ab));
        assert_eq!(once.apply_call(ab), once);
        // The two characterizations of a no-op call agree.
        for c in all_calls(3) {
            assert_eq!(once.is_noop_call(c), once.apply_call(c) == once);
        }
    }

    #[test]
    fn call_text_is_normalized() {
        assert_eq!(call("ca", 3), call("ac", 3));
        assert_eq!(call("(c,a)", 3).to_string(), "ac");
        assert_eq!(call("(a0,a2)", 3).to_string(), "ac");
        assert!(Call::parse("aa", 3).is_err());
        assert!(Call::parse("ad", 3).is_err());
    }

    #[test]
    fn sequence_text_round_trips() {
        let seq = CallSequence::parse("ac;bc;ac", 3).unwrap();
        assert_eq!(seq.to_string(), "ac;bc;ac");
        assert_eq!(CallSequence::parse("", 3).unwrap(), CallSequence::empty());
        assert_eq!(CallSequence::parse("ε", 3).unwrap(), CallSequence::empty());
        assert_eq!(CallSequence::empty().to_string(), "ε");
    }

    #[test]
    fn situation_text_round_trips() {
        let s = GossipSituation::parse("AC.B.AC").unwrap();
        assert_eq!(s.to_string(), "AC.B.AC");
        assert_eq!(s.secrets_of(Agent::new(0)).to_string(), "AC");
        // Own secret is mandatory.
        assert!(GossipSituation::parse("C.B.AC").is_err());
    }

    #[test]
    fn reachability_respects_forbidden_calls() {
        let all = reachable_situations(3, &BTreeSet::new()).unwrap();
        let full = GossipSituation::parse("ABC.ABC.ABC").unwrap();
        assert!(all.contains(&full));

        let mut forbidden = BTreeSet::new();
        forbidden.insert(call("ab", 3));
        let no_ab = reachable_situations(3, &forbidden).unwrap();
        let ab_root = GossipSituation::parse("AB.AB.C").unwrap();
        assert!(!no_ab.contains(&ab_root));
        assert!(no_ab.contains(&full));
        assert!(no_ab.len() < all.len());
    }

    #[test]
    fn reachability_on_two_agents_without_their_call_is_trivial() {
        let mut forbidden = BTreeSet::new();
        forbidden.insert(call("ab", 2));
        let set = reachable_situations(2, &forbidden).unwrap();
        assert_eq!(set.len(), 1);
        assert!(set.contains(&GossipSituation::root(2).unwrap()));
    }

    #[test]
    fn reachable_matches_bounded_sequence_enumeration() {
        // Independent route: apply every call sequence of length <= 6 and
        // collect the outcomes. Six strictly-informative calls saturate three
        // agents, so the bound loses nothing.
        let fixpoint = reachable_situations(3, &BTreeSet::new()).unwrap();
        let root = GossipSituation::root(3).unwrap();
        let brute: BTreeSet<GossipSituation> = all_call_sequences(3, 6)
            .iter()
            .map(|seq| root.apply_sequence(seq))
            .collect();
        assert_eq!(fixpoint, brute);
    }

    #[test]
    fn dropping_redundant_calls_preserves_outcome() {
        let n = 3;
        let keep = call("ab", n);
        let seq = CallSequence::parse("ac;ac;bc;ab;ab;bc", n).unwrap();
        let reduced = drop_redundant_calls(n, &seq, keep).unwrap();
        let root = GossipSituation::root(n).unwrap();
        assert_eq!(root.apply_sequence(&seq), root.apply_sequence(&reduced));
        // Second ac is a no-op and goes; both ab stay even though the second
        // one is a no-op too.
        assert_eq!(reduced.to_string(), "ac;bc;ab;ab");

        // Nothing redundant: unchanged.
        let tight = CallSequence::parse("ac;bc;ac", n).unwrap();
        assert_eq!(drop_redundant_calls(n, &tight, keep).unwrap(), tight);
    }

    #[test]
    fn sequence_enumeration_is_ordered_and_complete() {
        let seqs = all_call_sequences(3, 2);
        assert_eq!(seqs.len(), 1 + 3 + 9);
        assert_eq!(seqs[0], CallSequence::empty());
        assert_eq!(seqs[1].to_string(), "ab");
        assert_eq!(seqs[4].to_string(), "ab;ab");
    }

    #[test]
    fn agent_and_secret_names() {
        assert_eq!(Agent::parse("c", 3).unwrap().index(), 2);
        assert_eq!(Agent::parse("a2", 3).unwrap().index(), 2);
        assert!(Agent::parse("d", 3).is_err());
        assert!(Agent::parse("b1", 3).is_err());
        assert_eq!(Secret::parse("C", 3).unwrap().owner().to_string(), "c");
        assert!(Secret::parse("D", 3).is_err());
    }
}
