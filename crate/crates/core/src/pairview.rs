//! Epistemic pair-views: for every (unordered, possibly degenerate) pair of
//! agents, the set of gossip situations the pair considers possible, plus
//! the actual situation. This finite object carries exactly the information
//! needed to evaluate common knowledge for groups of at most two agents,
//! and it can be maintained incrementally call by call.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::Error;
use crate::gossip::{all_call_sequences, all_calls, close_under, Agent, Call, CallSequence, GossipSituation};
use crate::views::view;
use crate::Result;

/// The pair map: `pairs[{x,y}]` is the set of situations compatible with
/// everything the pair `{x,y}` has jointly observed; `pairs[{a,a}]` is the
/// single-agent case. `actual` is the true current situation, which every
/// pair set contains.
///
/// Each proper pair also carries a finer hidden set, its block: the
/// situations connected to the actual one by single-observer rewrites that
/// never change the pair's combined secret set. A call between the two
/// members refines the block rather than the coarser set, so the block has
/// to travel along; it is cached state, not extra information, because on
/// every view this module can produce it is determined by the visible
/// fields, which is why comparisons and serialization ignore it.
#[derive(Debug, Clone)]
pub struct EpistemicPairView {
    num_agents: usize,
    actual: GossipSituation,
    pairs: BTreeMap<(Agent, Agent), BTreeSet<GossipSituation>>,
    blocks: BTreeMap<(Agent, Agent), BTreeSet<GossipSituation>>,
}

impl PartialEq for EpistemicPairView {
    fn eq(&self, other: &Self) -> bool {
        self.num_agents == other.num_agents
            && self.actual == other.actual
            && self.pairs == other.pairs
    }
}

impl Eq for EpistemicPairView {}

impl PartialOrd for EpistemicPairView {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EpistemicPairView {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num_agents, &self.actual, &self.pairs).cmp(&(
            other.num_agents,
            &other.actual,
            &other.pairs,
        ))
    }
}

impl std::hash::Hash for EpistemicPairView {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.num_agents.hash(state);
        self.actual.hash(state);
        self.pairs.hash(state);
    }
}

fn pair_key(x: Agent, y: Agent) -> (Agent, Agent) {
    if x <= y {
        (x, y)
    } else {
        (y, x)
    }
}

/// The calls a pair cannot jointly observe: everything except a call that
/// involves both members. For a degenerate pair this is every call without
/// the agent; for a proper pair it is every call but theirs.
fn unobserved_calls(num_agents: usize, x: Agent, y: Agent) -> Vec<Call> {
    all_calls(num_agents)
        .into_iter()
        .filter(|d| !(d.involves(x) && d.involves(y)))
        .collect()
}

/// The calls neither member of the pair takes part in.
fn outside_calls(num_agents: usize, x: Agent, y: Agent) -> Vec<Call> {
    all_calls(num_agents)
        .into_iter()
        .filter(|d| !d.involves(x) && !d.involves(y))
        .collect()
}

/// What the pair's members know between them in a situation.
fn joint_secrets(s: &GossipSituation, x: Agent, y: Agent) -> crate::gossip::SecretSet {
    s.secrets_of(x).union(s.secrets_of(y))
}

/// Closure under the given calls, restricted to steps that leave the pair's
/// combined secret set unchanged.
fn close_preserving(
    seed: BTreeSet<GossipSituation>,
    calls: &[Call],
    x: Agent,
    y: Agent,
) -> BTreeSet<GossipSituation> {
    let mut set = seed;
    let mut frontier: Vec<GossipSituation> = set.iter().cloned().collect();
    while let Some(s) = frontier.pop() {
        for &c in calls {
            let t = s.apply_call(c);
            if joint_secrets(&t, x, y) != joint_secrets(&s, x, y) {
                continue;
            }
            if set.insert(t.clone()) {
                frontier.push(t);
            }
        }
    }
    set
}

impl EpistemicPairView {
    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn actual(&self) -> &GossipSituation {
        &self.actual
    }

    /// The situation set for the pair `{x,y}`; order of the two agents does
    /// not matter and `x = y` is allowed.
    pub fn pair(&self, x: Agent, y: Agent) -> Result<&BTreeSet<GossipSituation>> {
        self.pairs
            .get(&pair_key(x, y))
            .ok_or_else(|| Error::UnknownAgent(if x.index() >= self.num_agents { x } else { y }.to_string()))
    }

    pub fn pairs(&self) -> impl Iterator<Item = ((Agent, Agent), &BTreeSet<GossipSituation>)> {
        self.pairs.iter().map(|(&k, v)| (k, v))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let mut pairs = serde_json::Map::new();
        for ((x, y), set) in &self.pairs {
            let key = format!("{x}{y}");
            let sits: Vec<serde_json::Value> =
                set.iter().map(|s| serde_json::Value::String(s.to_string())).collect();
            pairs.insert(key, serde_json::Value::Array(sits));
        }
        serde_json::json!({
            "actual": self.actual.to_string(),
            "pairs": serde_json::Value::Object(pairs),
        })
    }
}

impl fmt::Display for EpistemicPairView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "*: {}", self.actual)?;
        let mut first = true;
        for ((x, y), set) in &self.pairs {
            if !first {
                writeln!(f)?;
            }
            first = false;
            write!(f, "{x}{y}:")?;
            for s in set {
                write!(f, " {s}")?;
            }
        }
        Ok(())
    }
}

/// The pair-view of the empty sequence: each pair considers possible
/// everything reachable by calls it cannot observe, and each proper pair's
/// block is what is reachable with neither member taking part at all.
pub fn epv_init(num_agents: usize) -> Result<EpistemicPairView> {
    let root = GossipSituation::root(num_agents)?;
    let mut pairs = BTreeMap::new();
    let mut blocks = BTreeMap::new();
    for x in 0..num_agents {
        for y in x..num_agents {
            let (x, y) = (Agent::new(x), Agent::new(y));
            let calls = unobserved_calls(num_agents, x, y);
            pairs.insert((x, y), close_under(std::iter::once(root.clone()), &calls));
            if x != y {
                let outside = outside_calls(num_agents, x, y);
                blocks.insert((x, y), close_under(std::iter::once(root.clone()), &outside));
            }
        }
    }
    Ok(EpistemicPairView { num_agents, actual: root, pairs, blocks })
}

/// Advances a pair-view by one call. `prev_actual` must be the situation
/// the view currently sits at; passing anything else is an error, which
/// guards against folding steps in the wrong order.
///
/// A single agent observes its own calls: its set is replaced by the
/// call-images that agree with the true outcome on its component, closed
/// under the calls it cannot see.
///
/// A proper pair observes only a call between its two members. Such a call
/// maps the pair's block forward; the closure of the image under unobserved
/// calls is the new pair set, and its closure under unobserved calls that
/// keep the combined secret set fixed is the new block. Any other call
/// leaves the pair set untouched. It can still move the block: when the
/// call teaches a member new secrets, the rewrites that used to pin down
/// the old combined set no longer apply. If the pair had already talked, or
/// more than one outsider's secret is now in play, outside calls inside the
/// new combined set let chains reshuffle who learned what, and the block
/// coarsens to the full slice of the pair set with the new combined
/// secrets. Only a first contact that adds exactly one secret keeps more:
/// there is a single outsider involved, whoever met them is fixed, and the
/// block is the image of the old one restricted and closed while keeping
/// the combined set fixed.
pub fn epv_step(
    v: &EpistemicPairView,
    c: Call,
    prev_actual: &GossipSituation,
) -> Result<EpistemicPairView> {
    if v.actual != *prev_actual {
        return Err(Error::InconsistentState(format!(
            "update expected actual situation {}, found {}",
            prev_actual, v.actual
        )));
    }
    if c.hi().index() >= v.num_agents {
        return Err(Error::UnknownAgent(c.hi().to_string()));
    }
    let root = GossipSituation::root(v.num_agents)?;
    let actual = v.actual.apply_call(c);
    let mut pairs = BTreeMap::new();
    let mut blocks = BTreeMap::new();
    for (&(x, y), set) in &v.pairs {
        if x == y {
            if c.involves(x) {
                let filtered: Vec<GossipSituation> = set
                    .iter()
                    .map(|s| s.apply_call(c))
                    .filter(|img| img.secrets_of(x) == actual.secrets_of(x))
                    .collect();
                let calls = unobserved_calls(v.num_agents, x, y);
                pairs.insert((x, y), close_under(filtered, &calls));
            } else {
                pairs.insert((x, y), set.clone());
            }
            continue;
        }
        let block = &v.blocks[&(x, y)];
        let calls = unobserved_calls(v.num_agents, x, y);
        if c.involves(x) && c.involves(y) {
            let seed: BTreeSet<GossipSituation> =
                block.iter().map(|s| s.apply_call(c)).collect();
            pairs.insert((x, y), close_under(seed.iter().cloned(), &calls));
            blocks.insert((x, y), close_preserving(seed, &calls, x, y));
            continue;
        }
        let before = joint_secrets(&v.actual, x, y);
        let after = joint_secrets(&actual, x, y);
        if after == before {
            pairs.insert((x, y), set.clone());
            blocks.insert((x, y), block.clone());
            continue;
        }
        let own = joint_secrets(&root, x, y);
        let first_contact = before == own && after.len() == own.len() + 1;
        let never_talked = set.contains(&root);
        let new_block = if never_talked && first_contact {
            let seed: BTreeSet<GossipSituation> = block
                .iter()
                .map(|s| s.apply_call(c))
                .filter(|img| joint_secrets(img, x, y) == after)
                .collect();
            close_preserving(seed, &calls, x, y)
        } else {
            set.iter()
                .filter(|s| joint_secrets(s, x, y) == after)
                .cloned()
                .collect()
        };
        pairs.insert((x, y), set.clone());
        blocks.insert((x, y), new_block);
    }
    Ok(EpistemicPairView { num_agents: v.num_agents, actual, pairs, blocks })
}

/// The pair-view of a whole call sequence, folded from the empty one.
pub fn epv(num_agents: usize, seq: &CallSequence) -> Result<EpistemicPairView> {
    let mut v = epv_init(num_agents)?;
    for &c in seq.calls() {
        let prev = v.actual.clone();
        v = epv_step(&v, c, &prev)?;
    }
    Ok(v)
}

/// Brute-force reference for the pair set, straight from the definition:
/// enumerate every call sequence of length at most `max_len`, glue together
/// the indistinguishability classes of `x` and of `y`, and collect the
/// final situations of the sequences in `seq`'s class.
///
/// This under-approximates the true pair set (equivalence chains may need
/// witnesses longer than `max_len`) and converges to it as `max_len` grows.
pub fn epv_oracle(
    num_agents: usize,
    seq: &CallSequence,
    x: Agent,
    y: Agent,
    max_len: usize,
) -> Result<BTreeSet<GossipSituation>> {
    if seq.len() > max_len {
        return Err(Error::IllFormedInput(format!(
            "the sequence has {} calls but the universe is capped at {max_len}",
            seq.len()
        )));
    }
    let universe = all_call_sequences(num_agents, max_len);
    let mut dsu = DisjointSets::new(universe.len());
    for agent in [x, y] {
        let mut class_heads: BTreeMap<crate::views::View, usize> = BTreeMap::new();
        for (i, d) in universe.iter().enumerate() {
            let v = view(num_agents, d, agent)?;
            match class_heads.get(&v) {
                Some(&head) => dsu.union(head, i),
                None => {
                    class_heads.insert(v, i);
                }
            }
        }
    }
    let target = dsu.find(
        universe
            .iter()
            .position(|d| d == seq)
            .expect("the universe contains every sequence up to max_len"),
    );
    let root = GossipSituation::root(num_agents)?;
    Ok(universe
        .iter()
        .enumerate()
        .filter(|(i, _)| dsu.find(*i) == target)
        .map(|(_, d)| root.apply_sequence(d))
        .collect())
}

/// Componentwise comparison of situations: true when every agent's set in
/// `s` is included in their set in `t`.
pub fn leq_situation(s: &GossipSituation, t: &GossipSituation) -> Result<bool> {
    if s.num_agents() != t.num_agents() {
        return Err(Error::IllFormedInput(format!(
            "cannot compare situations over {} and {} agents",
            s.num_agents(),
            t.num_agents()
        )));
    }
    Ok((0..s.num_agents()).all(|i| {
        let a = Agent::new(i);
        s.secrets_of(a).is_subset(t.secrets_of(a))
    }))
}

/// The information order on pair-views: `v` is below `w` when, for every
/// pair, some subset of `v`'s situations maps onto `w`'s set with each
/// source below its image. Equivalently, each of `w`'s situations picks a
/// distinct witness below it in `v`'s set, so the test is a bipartite
/// matching. The actual situations are compared componentwise.
pub fn leq_epv(v: &EpistemicPairView, w: &EpistemicPairView) -> Result<bool> {
    if v.num_agents != w.num_agents {
        return Err(Error::IllFormedInput(format!(
            "cannot compare pair-views over {} and {} agents",
            v.num_agents, w.num_agents
        )));
    }
    if !leq_situation(&v.actual, &w.actual)? {
        return Ok(false);
    }
    for (key, w_set) in &w.pairs {
        let v_set = &v.pairs[key];
        if !has_dominated_matching(v_set, w_set)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether every element of `targets` can be matched to a distinct element
/// of `sources` lying below it. Augmenting-path search; the sets at play
/// are small.
fn has_dominated_matching(
    sources: &BTreeSet<GossipSituation>,
    targets: &BTreeSet<GossipSituation>,
) -> Result<bool> {
    let sources: Vec<&GossipSituation> = sources.iter().collect();
    let targets: Vec<&GossipSituation> = targets.iter().collect();
    if targets.len() > sources.len() {
        return Ok(false);
    }
    let mut below: Vec<Vec<usize>> = Vec::with_capacity(targets.len());
    for t in &targets {
        let mut row = Vec::new();
        for (j, s) in sources.iter().enumerate() {
            if leq_situation(s, t)? {
                row.push(j);
            }
        }
        below.push(row);
    }
    let mut matched_source: Vec<Option<usize>> = vec![None; sources.len()];
    fn try_assign(
        t: usize,
        below: &[Vec<usize>],
        matched_source: &mut Vec<Option<usize>>,
        visited: &mut Vec<bool>,
    ) -> bool {
        for &j in &below[t] {
            if visited[j] {
                continue;
            }
            visited[j] = true;
            if matched_source[j].is_none()
                || try_assign(matched_source[j].unwrap(), below, matched_source, visited)
            {
                matched_source[j] = Some(t);
                return true;
            }
        }
        false
    }
    for t in 0..targets.len() {
        let mut visited = vec![false; sources.len()];
        if !try_assign(t, &below, &mut matched_source, &mut visited) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A plain union-find over `0..n`, used to glue equivalence classes.
pub(crate) struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    pub(crate) fn new(n: usize) -> DisjointSets {
        DisjointSets { parent: (0..n).collect() }
    }

    pub(crate) fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    pub(crate) fn union(&mut self, i: usize, j: usize) {
        let (ri, rj) = (self.find(i), self.find(j));
        if ri != rj {
            self.parent[ri] = rj;
        }
    }
}
