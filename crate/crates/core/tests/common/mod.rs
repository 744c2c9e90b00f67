use std::collections::{BTreeMap, BTreeSet};

use gossipck_core::{
    all_call_sequences, all_calls, Agent, Call, CallSequence, GossipSituation,
};

/// Indistinguishability between bounded call sequences, grown rule by rule
/// from the pair of empty sequences instead of by comparing views: two
/// sequences are related for an agent exactly when that is derivable by
/// appending calls the agent misses to either side, or the same call with
/// matching outcomes for the agent to both sides.
pub struct IndistinguishabilityOracle {
    sequences: Vec<CallSequence>,
    index_of: BTreeMap<CallSequence, usize>,
    situations: Vec<GossipSituation>,
    relations: Vec<BitMatrix>,
}

struct BitMatrix {
    words_per_row: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    fn new(size: usize) -> BitMatrix {
        let words_per_row = size.div_ceil(64);
        BitMatrix { words_per_row, bits: vec![0; size * words_per_row] }
    }

    fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.words_per_row + j / 64] >> (j % 64) & 1 == 1
    }

    fn set(&mut self, i: usize, j: usize) -> bool {
        let word = &mut self.bits[i * self.words_per_row + j / 64];
        let mask = 1u64 << (j % 64);
        let fresh = *word & mask == 0;
        *word |= mask;
        fresh
    }

    fn or_row_into(&self, i: usize, acc: &mut [u64]) {
        let row = &self.bits[i * self.words_per_row..(i + 1) * self.words_per_row];
        for (a, w) in acc.iter_mut().zip(row) {
            *a |= w;
        }
    }
}

impl IndistinguishabilityOracle {
    pub fn new(num_agents: usize, bound: usize) -> IndistinguishabilityOracle {
        let calls = all_calls(num_agents);
        let sequences = all_call_sequences(num_agents, bound);
        let index_of: BTreeMap<CallSequence, usize> =
            sequences.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let root = GossipSituation::root(num_agents).unwrap();
        let situations: Vec<GossipSituation> =
            sequences.iter().map(|s| root.apply_sequence(s)).collect();
        let child: Vec<Vec<Option<usize>>> = sequences
            .iter()
            .map(|s| {
                calls
                    .iter()
                    .map(|&c| {
                        if s.len() < bound {
                            Some(index_of[&s.appended(c)])
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();

        let mut relations = Vec::with_capacity(num_agents);
        for a in 0..num_agents {
            let a = Agent::new(a);
            let mut matrix = BitMatrix::new(sequences.len());
            let mut worklist = vec![(0usize, 0usize)];
            matrix.set(0, 0);
            while let Some((i, j)) = worklist.pop() {
                for (ci, &c) in calls.iter().enumerate() {
                    if c.involves(a) {
                        if let (Some(i2), Some(j2)) = (child[i][ci], child[j][ci]) {
                            if situations[i2].secrets_of(a) == situations[j2].secrets_of(a)
                                && matrix.set(i2, j2)
                            {
                                matrix.set(j2, i2);
                                worklist.push((i2, j2));
                            }
                        }
                    } else {
                        if let Some(i2) = child[i][ci] {
                            if matrix.set(i2, j) {
                                matrix.set(j, i2);
                                worklist.push((i2, j));
                            }
                        }
                        if let Some(j2) = child[j][ci] {
                            if matrix.set(i, j2) {
                                matrix.set(j2, i);
                                worklist.push((i, j2));
                            }
                        }
                    }
                }
            }
            relations.push(matrix);
        }

        IndistinguishabilityOracle { sequences, index_of, situations, relations }
    }

    pub fn sequences(&self) -> &[CallSequence] {
        &self.sequences
    }

    pub fn related(&self, a: Agent, c: &CallSequence, d: &CallSequence) -> bool {
        self.relations[a.index()].get(self.index_of[c], self.index_of[d])
    }

    /// The situations of every sequence reachable from `c` by chaining the
    /// two agents' relations, i.e. the oracle's value for one pair-view
    /// component. Reflexive, so `c`'s own situation is always included.
    pub fn pair_component(&self, x: Agent, y: Agent, c: &CallSequence) -> BTreeSet<GossipSituation> {
        let n = self.sequences.len();
        let words = n.div_ceil(64);
        let mut member = vec![0u64; words];
        let start = self.index_of[c];
        member[start / 64] |= 1 << (start % 64);
        let mut frontier = vec![start];
        while let Some(i) = frontier.pop() {
            let mut row = vec![0u64; words];
            self.relations[x.index()].or_row_into(i, &mut row);
            self.relations[y.index()].or_row_into(i, &mut row);
            for w in 0..words {
                let mut fresh = row[w] & !member[w];
                member[w] |= fresh;
                while fresh != 0 {
                    let j = w * 64 + fresh.trailing_zeros() as usize;
                    frontier.push(j);
                    fresh &= fresh - 1;
                }
            }
        }
        let mut out = BTreeSet::new();
        for w in 0..words {
            let mut set = member[w];
            while set != 0 {
                let j = w * 64 + set.trailing_zeros() as usize;
                out.insert(self.situations[j].clone());
                set &= set - 1;
            }
        }
        out
    }
}

/// Every maximal result of repeatedly deleting some call, other than `keep`,
/// that changes nothing at the point where it occurs.
pub fn exhaustive_reductions(
    num_agents: usize,
    seq: &CallSequence,
    keep: Call,
) -> BTreeSet<CallSequence> {
    fn removable(num_agents: usize, seq: &CallSequence, keep: Call) -> Vec<usize> {
        let mut s = GossipSituation::root(num_agents).unwrap();
        let mut out = Vec::new();
        for (i, &c) in seq.calls().iter().enumerate() {
            if c != keep && s.is_noop_call(c) {
                out.push(i);
            }
            s = s.apply_call(c);
        }
        out
    }

    let mut done = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![seq.clone()];
    while let Some(current) = stack.pop() {
        let positions = removable(num_agents, &current, keep);
        if positions.is_empty() {
            done.insert(current);
            continue;
        }
        for i in positions {
            let next = current.without_index(i);
            if seen.insert(next.clone()) {
                stack.push(next);
            }
        }
    }
    done
}
