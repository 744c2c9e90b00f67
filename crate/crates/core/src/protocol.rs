//! Guarded gossip protocols over communication graphs: a line-oriented
//! protocol format with quantified rule templates, the enabled-call
//! semantics, a termination decision procedure, partial-correctness
//! checking, and scheduled simulation.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Error;
use crate::formula::{parse_formula_with, Formula, Fragment, NameResolver};
use crate::gossip::{Agent, Call, CallSequence, GossipSituation, Secret, MAX_AGENTS};
use crate::modelcheck::{check_truth, eval_at, TruthVerdict};
use crate::pairview::{epv, epv_init, epv_step, EpistemicPairView};
use crate::Result;

/// An undirected connected graph on the agents; calls may only happen
/// along edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunicationGraph {
    num_agents: usize,
    edges: BTreeSet<Call>,
}

impl CommunicationGraph {
    pub fn new(num_agents: usize, edges: BTreeSet<Call>) -> Result<CommunicationGraph> {
        if num_agents == 0 || num_agents > MAX_AGENTS {
            return Err(Error::InvalidConfiguration(format!(
                "a graph needs between 1 and {MAX_AGENTS} agents, got {num_agents}"
            )));
        }
        for e in &edges {
            if e.hi().index() >= num_agents {
                return Err(Error::UnknownAgent(e.hi().to_string()));
            }
        }
        let graph = CommunicationGraph { num_agents, edges };
        let mut reached = vec![false; num_agents];
        let mut frontier = vec![Agent::new(0)];
        reached[0] = true;
        while let Some(a) = frontier.pop() {
            for b in graph.neighbors(a) {
                if !reached[b.index()] {
                    reached[b.index()] = true;
                    frontier.push(b);
                }
            }
        }
        if let Some(i) = reached.iter().position(|r| !r) {
            return Err(Error::InvalidConfiguration(format!(
                "the graph is not connected: agent {} is unreachable",
                Agent::new(i)
            )));
        }
        Ok(graph)
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn edges(&self) -> &BTreeSet<Call> {
        &self.edges
    }

    pub fn has_edge(&self, c: Call) -> bool {
        self.edges.contains(&c)
    }

    pub fn neighbors(&self, a: Agent) -> Vec<Agent> {
        self.edges.iter().filter_map(|e| e.partner_of(a)).collect()
    }
}

/// A guarded call: when the guard holds, the call may fire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    guard: Formula,
    call: Call,
}

impl Rule {
    pub fn new(guard: Formula, call: Call) -> Rule {
        Rule { guard, call }
    }

    pub fn guard(&self) -> &Formula {
        &self.guard
    }

    pub fn call(&self) -> Call {
        self.call
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Protocol {
    graph: CommunicationGraph,
    rules: Vec<Rule>,
}

impl Protocol {
    pub fn new(graph: CommunicationGraph, rules: Vec<Rule>) -> Result<Protocol> {
        if rules.is_empty() {
            return Err(Error::InvalidConfiguration(
                "a protocol needs at least one rule".to_string(),
            ));
        }
        for r in &rules {
            if !graph.has_edge(r.call) {
                return Err(Error::InvalidConfiguration(format!(
                    "a rule calls {}, which is not an edge of the graph",
                    r.call
                )));
            }
            if r.guard.classify() == Fragment::General {
                return Err(Error::WrongFragment(format!(
                    "the guard {} nests common knowledge, which guards may not",
                    r.guard
                )));
            }
        }
        Ok(Protocol { graph, rules })
    }

    pub fn graph(&self) -> &CommunicationGraph {
        &self.graph
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn num_agents(&self) -> usize {
        self.graph.num_agents
    }
}

/// Outcome of [`decide_termination`]. A witness is a reachable sequence
/// and an enabled call that no longer changes the epistemic pair-view, so
/// the protocol can repeat it forever.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerminationVerdict {
    pub terminates: bool,
    pub witness: Option<(CallSequence, Call)>,
}

impl TerminationVerdict {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "terminates": self.terminates,
            "witness": self.witness.as_ref().map(|(seq, c)| serde_json::json!({
                "sequence": seq.to_string(),
                "call": c.to_string(),
            })),
        })
    }
}

/// How [`simulate`] picks among enabled calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheduler {
    Lexicographic,
    Random { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationTrace {
    pub steps: Vec<(Call, GossipSituation)>,
    pub terminal: bool,
    pub final_situation: GossipSituation,
}

impl SimulationTrace {
    pub fn to_json(&self) -> serde_json::Value {
        let steps: Vec<serde_json::Value> = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, (c, s))| {
                serde_json::json!({
                    "step": i,
                    "call": c.to_string(),
                    "situation": s.to_string(),
                })
            })
            .collect();
        serde_json::json!({
            "steps": steps,
            "terminal": self.terminal,
            "final": self.final_situation.to_string(),
        })
    }
}

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::Syntax { position, message: message.into() }
}

/// Name resolution inside a protocol file. In `forall` lines, names that
/// do not resolve to declared agents become template variables; agent
/// variables not bound by an explicit binding range over all agents.
struct TemplateNames {
    num_agents: usize,
    agent_vars: Vec<String>,
    agent_bound: Vec<bool>,
    secret_vars: Vec<String>,
    allow_implicit: bool,
}

impl TemplateNames {
    fn new(num_agents: usize, allow_implicit: bool) -> TemplateNames {
        TemplateNames {
            num_agents,
            agent_vars: Vec::new(),
            agent_bound: Vec::new(),
            secret_vars: Vec::new(),
            allow_implicit,
        }
    }

    fn agent_placeholder(&self, idx: usize) -> Result<Agent> {
        let slot = self.num_agents + idx;
        if slot >= MAX_AGENTS {
            return Err(Error::InvalidConfiguration(format!(
                "too many template variables: {} agents plus {} variables exceed {MAX_AGENTS}",
                self.num_agents,
                idx + 1
            )));
        }
        Ok(Agent::new(slot))
    }

    fn secret_placeholder(&self, idx: usize) -> Result<Secret> {
        let slot = self.num_agents + idx;
        if slot >= MAX_AGENTS {
            return Err(Error::InvalidConfiguration(format!(
                "too many template variables: {} secrets plus {} variables exceed {MAX_AGENTS}",
                self.num_agents,
                idx + 1
            )));
        }
        Ok(Secret::new(slot))
    }

    fn declare_agent_var(&mut self, name: &str, position: usize) -> Result<usize> {
        if self.agent_vars.iter().any(|v| v == name) {
            return Err(syntax(position, format!("the variable `{name}` is already in use")));
        }
        self.agent_vars.push(name.to_string());
        self.agent_bound.push(true);
        Ok(self.agent_vars.len() - 1)
    }

    fn declare_secret_var(&mut self, name: &str, position: usize) -> Result<usize> {
        if self.secret_vars.iter().any(|v| v == name) {
            return Err(syntax(position, format!("the variable `{name}` is already in use")));
        }
        self.secret_vars.push(name.to_string());
        Ok(self.secret_vars.len() - 1)
    }
}

impl NameResolver for TemplateNames {
    fn resolve_agent(&mut self, name: &str, _position: usize) -> Result<Agent> {
        if let Some(i) = self.agent_vars.iter().position(|v| v == name) {
            return self.agent_placeholder(i);
        }
        match Agent::parse(name, self.num_agents) {
            Ok(a) => Ok(a),
            Err(e) => {
                if self.allow_implicit {
                    self.agent_vars.push(name.to_string());
                    self.agent_bound.push(false);
                    self.agent_placeholder(self.agent_vars.len() - 1)
                } else {
                    Err(e)
                }
            }
        }
    }

    fn resolve_secret(&mut self, name: &str, _position: usize) -> Result<Secret> {
        if let Some(i) = self.secret_vars.iter().position(|v| v == name) {
            return self.secret_placeholder(i);
        }
        Secret::parse(name, self.num_agents)
    }
}

enum LoopVar {
    AgentOverAll(usize),
    AgentOverNeighbors(usize, Agent),
    SecretOverAll(usize),
}

/// Parses the protocol format:
///
/// ```text
/// # comment
/// agents: a b c
/// edges: ab bc ca
/// rule Fa A -> (a,b)
/// forall j in N(i), B in P: rule Fi B & !C{i,j} Fj B -> (i,j)
/// ```
///
/// A `forall` line is a rule template: explicit bindings range over the
/// neighbours of an agent (`j in N(i)`) or over all secrets (`B in P`),
/// and any remaining unresolved agent name (like `i` above) ranges over
/// all agents. Templates expand to ground rules at parse time.
pub fn parse_protocol(text: &str) -> Result<Protocol> {
    let mut num_agents = 0usize;
    let mut graph: Option<CommunicationGraph> = None;
    let mut rules: Vec<Rule> = Vec::new();
    let mut pos = 0usize;
    for raw in text.split_inclusive('\n') {
        let line_start = pos + (raw.len() - raw.trim_start().len());
        pos += raw.len();
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("agents:") {
            if num_agents != 0 {
                return Err(syntax(line_start, "the agents are already declared"));
            }
            let names: Vec<&str> = rest.split_whitespace().collect();
            if names.is_empty() {
                return Err(syntax(line_start, "expected agent names after `agents:`"));
            }
            let mut seen = BTreeSet::new();
            for name in &names {
                let a = Agent::parse(name, names.len())?;
                if !seen.insert(a) {
                    return Err(syntax(line_start, format!("agent {a} is listed twice")));
                }
            }
            num_agents = names.len();
        } else if let Some(rest) = line.strip_prefix("edges:") {
            if num_agents == 0 {
                return Err(syntax(line_start, "agents must be declared before edges"));
            }
            if graph.is_some() {
                return Err(syntax(line_start, "the edges are already declared"));
            }
            let mut edges = BTreeSet::new();
            for token in rest.split_whitespace() {
                edges.insert(Call::parse(token, num_agents)?);
            }
            graph = Some(CommunicationGraph::new(num_agents, edges)?);
        } else if line.starts_with("rule") || line.starts_with("forall") {
            let g = graph
                .as_ref()
                .ok_or_else(|| syntax(line_start, "the graph must be declared before rules"))?;
            parse_rule_line(g, line, line_start, &mut rules)?;
        } else {
            return Err(syntax(
                line_start,
                "expected `agents:`, `edges:`, `rule`, `forall` or a `#` comment",
            ));
        }
    }
    let graph = graph.ok_or_else(|| syntax(text.len(), "the protocol never declares a graph"))?;
    Protocol::new(graph, rules)
}

fn parse_rule_line(
    graph: &CommunicationGraph,
    line: &str,
    line_pos: usize,
    rules: &mut Vec<Rule>,
) -> Result<()> {
    let mut names = TemplateNames::new(graph.num_agents(), line.starts_with("forall"));
    let mut explicit: Vec<LoopVar> = Vec::new();
    let (body, body_pos) = if let Some(rest) = line.strip_prefix("forall") {
        let colon = rest
            .find(':')
            .ok_or_else(|| syntax(line_pos, "expected `:` after the forall bindings"))?;
        let bindings_pos = line_pos + "forall".len();
        parse_bindings(&rest[..colon], bindings_pos, &mut names, &mut explicit)?;
        let after = rest[colon + 1..].trim_start();
        let after_pos = line_pos + line.len() - after.len();
        let body = after
            .strip_prefix("rule")
            .ok_or_else(|| syntax(after_pos, "expected `rule` after the bindings"))?;
        (body, after_pos + "rule".len())
    } else {
        let body = line.strip_prefix("rule").expect("caller checked the prefix");
        (body, line_pos + "rule".len())
    };
    let arrow = body
        .rfind("->")
        .ok_or_else(|| syntax(body_pos, "expected `->` before the rule's call"))?;
    let guard = parse_formula_with(&body[..arrow], &mut names).map_err(|e| match e {
        Error::Syntax { position, message } => syntax(body_pos + position, message),
        other => other,
    })?;
    let (x, y) = parse_call_target(&body[arrow + 2..], body_pos + arrow + 2, &mut names)?;
    let mut plan: Vec<LoopVar> = (0..names.agent_vars.len())
        .filter(|&i| !names.agent_bound[i])
        .map(LoopVar::AgentOverAll)
        .collect();
    plan.append(&mut explicit);
    let mut agent_assign = vec![None; names.agent_vars.len()];
    let mut secret_assign = vec![None; names.secret_vars.len()];
    expand(graph, &plan, &guard, (x, y), &mut agent_assign, &mut secret_assign, rules)
}

fn parse_bindings(
    text: &str,
    offset: usize,
    names: &mut TemplateNames,
    plan: &mut Vec<LoopVar>,
) -> Result<()> {
    for piece in text.split(',') {
        let binding = piece.trim();
        let position = offset + (piece.len() - piece.trim_start().len());
        let (var, domain) = binding.split_once(" in ").ok_or_else(|| {
            syntax(position, "expected a binding like `j in N(i)` or `B in P`")
        })?;
        let var = var.trim();
        let domain = domain.trim();
        let first = var.chars().next().unwrap_or(' ');
        if first.is_ascii_lowercase() {
            let inner = domain
                .strip_prefix("N(")
                .and_then(|d| d.strip_suffix(')'))
                .ok_or_else(|| {
                    syntax(position, format!("agent variable `{var}` must range over some N(..)"))
                })?;
            let of = names.resolve_agent(inner.trim(), position)?;
            let idx = names.declare_agent_var(var, position)?;
            plan.push(LoopVar::AgentOverNeighbors(idx, of));
        } else if first.is_ascii_uppercase() {
            if domain != "P" {
                return Err(syntax(
                    position,
                    format!("secret variable `{var}` must range over P"),
                ));
            }
            let idx = names.declare_secret_var(var, position)?;
            plan.push(LoopVar::SecretOverAll(idx));
        } else {
            return Err(syntax(position, "expected a binding like `j in N(i)` or `B in P`"));
        }
    }
    Ok(())
}

fn parse_call_target(
    text: &str,
    position: usize,
    names: &mut TemplateNames,
) -> Result<(Agent, Agent)> {
    let inner = text
        .trim()
        .strip_prefix('(')
        .and_then(|t| t.strip_suffix(')'))
        .ok_or_else(|| syntax(position, "expected a call target like `(x,y)`"))?;
    let (first, second) = inner
        .split_once(',')
        .ok_or_else(|| syntax(position, "expected two agents in the call target"))?;
    let x = names.resolve_agent(first.trim(), position)?;
    let y = names.resolve_agent(second.trim(), position)?;
    Ok((x, y))
}

fn assigned_agent(a: Agent, num_agents: usize, assign: &[Option<Agent>]) -> Agent {
    if a.index() >= num_agents {
        assign[a.index() - num_agents].expect("outer loops assign every agent variable")
    } else {
        a
    }
}

fn assigned_secret(p: Secret, num_agents: usize, assign: &[Option<Secret>]) -> Secret {
    if p.index() >= num_agents {
        assign[p.index() - num_agents].expect("outer loops assign every secret variable")
    } else {
        p
    }
}

fn ground_formula(
    phi: &Formula,
    num_agents: usize,
    agents: &[Option<Agent>],
    secrets: &[Option<Secret>],
) -> Formula {
    match phi {
        Formula::Atom(a, p) => Formula::atom(
            assigned_agent(*a, num_agents, agents),
            assigned_secret(*p, num_agents, secrets),
        ),
        Formula::Not(x) => Formula::not(ground_formula(x, num_agents, agents, secrets)),
        Formula::And(l, r) => Formula::and(
            ground_formula(l, num_agents, agents, secrets),
            ground_formula(r, num_agents, agents, secrets),
        ),
        Formula::Or(l, r) => Formula::or(
            ground_formula(l, num_agents, agents, secrets),
            ground_formula(r, num_agents, agents, secrets),
        ),
        Formula::Implies(l, r) => Formula::implies(
            ground_formula(l, num_agents, agents, secrets),
            ground_formula(r, num_agents, agents, secrets),
        ),
        Formula::Common(group, body) => Formula::common(
            group.iter().map(|&a| assigned_agent(a, num_agents, agents)).collect(),
            ground_formula(body, num_agents, agents, secrets),
        ),
    }
}

fn expand(
    graph: &CommunicationGraph,
    plan: &[LoopVar],
    guard: &Formula,
    call: (Agent, Agent),
    agent_assign: &mut Vec<Option<Agent>>,
    secret_assign: &mut Vec<Option<Secret>>,
    rules: &mut Vec<Rule>,
) -> Result<()> {
    let n = graph.num_agents();
    let Some(var) = plan.first() else {
        let x = assigned_agent(call.0, n, agent_assign);
        let y = assigned_agent(call.1, n, agent_assign);
        if x == y {
            return Err(Error::InvalidConfiguration(format!(
                "the rule template produces a self-call for agent {x}"
            )));
        }
        rules.push(Rule {
            guard: ground_formula(guard, n, agent_assign, secret_assign),
            call: Call::new(x, y),
        });
        return Ok(());
    };
    match var {
        LoopVar::AgentOverAll(i) => {
            for k in 0..n {
                agent_assign[*i] = Some(Agent::new(k));
                expand(graph, &plan[1..], guard, call, agent_assign, secret_assign, rules)?;
            }
            agent_assign[*i] = None;
        }
        LoopVar::AgentOverNeighbors(i, of) => {
            let of = assigned_agent(*of, n, agent_assign);
            for b in graph.neighbors(of) {
                agent_assign[*i] = Some(b);
                expand(graph, &plan[1..], guard, call, agent_assign, secret_assign, rules)?;
            }
            agent_assign[*i] = None;
        }
        LoopVar::SecretOverAll(i) => {
            for k in 0..n {
                secret_assign[*i] = Some(Secret::new(k));
                expand(graph, &plan[1..], guard, call, agent_assign, secret_assign, rules)?;
            }
            secret_assign[*i] = None;
        }
    }
    Ok(())
}

fn enabled_at(p: &Protocol, v: &EpistemicPairView) -> Result<BTreeSet<Call>> {
    let mut out = BTreeSet::new();
    for r in &p.rules {
        if !out.contains(&r.call) && eval_at(&r.guard, v)? {
            out.insert(r.call);
        }
    }
    Ok(out)
}

/// The calls the protocol may make after `seq`: every call whose rule has
/// a true guard there. Rules sharing a call are read disjunctively.
pub fn enabled_calls(p: &Protocol, seq: &CallSequence) -> Result<BTreeSet<Call>> {
    let v = epv(p.num_agents(), seq)?;
    enabled_at(p, &v)
}

/// Decides whether every run of the protocol is finite.
///
/// Guards only see the epistemic pair-view, so the protocol has an
/// infinite run exactly when some reachable view has an enabled call that
/// leaves it unchanged; that call can then repeat forever. The search
/// walks the finitely many reachable views and reports the first such
/// stutter as the witness.
pub fn decide_termination(p: &Protocol) -> Result<TerminationVerdict> {
    let init = epv_init(p.num_agents())?;
    let mut visited = BTreeSet::from([init.clone()]);
    let mut stack = vec![(CallSequence::empty(), init)];
    while let Some((seq, v)) = stack.pop() {
        for c in enabled_at(p, &v)? {
            let next = epv_step(&v, c, v.actual())?;
            if next == v {
                return Ok(TerminationVerdict { terminates: false, witness: Some((seq, c)) });
            }
            if visited.insert(next.clone()) {
                stack.push((seq.appended(c), next));
            }
        }
    }
    Ok(TerminationVerdict { terminates: true, witness: None })
}

/// Checks that the goal holds whenever no rule is enabled, over all call
/// sequences: the truth of `(⋀ ¬guard) -> goal`.
pub fn check_partial_correctness(p: &Protocol, goal: &Formula) -> Result<TruthVerdict> {
    let exit = p
        .rules
        .iter()
        .map(|r| Formula::not(r.guard.clone()))
        .reduce(Formula::and)
        .expect("protocols have at least one rule");
    let phi = Formula::implies(exit, goal.clone());
    if phi.classify() == Fragment::General {
        return Err(Error::WrongFragment(
            "the goal must not nest common knowledge".to_string(),
        ));
    }
    check_truth(p.num_agents(), &phi)
}

/// Runs the protocol until no call is enabled or `max_steps` calls were
/// made, picking among enabled calls per the scheduler. A fixed seed
/// yields a reproducible trace.
pub fn simulate(p: &Protocol, scheduler: Scheduler, max_steps: usize) -> Result<SimulationTrace> {
    let n = p.num_agents();
    let mut v = epv_init(n)?;
    let mut situation = GossipSituation::root(n)?;
    let mut rng = match scheduler {
        Scheduler::Lexicographic => None,
        Scheduler::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut steps = Vec::new();
    let mut terminal = false;
    while steps.len() < max_steps {
        let enabled = enabled_at(p, &v)?;
        if enabled.is_empty() {
            terminal = true;
            break;
        }
        let call = match &mut rng {
            None => *enabled.iter().next().expect("the set is not empty"),
            Some(rng) => {
                let k = rng.random_range(0..enabled.len());
                *enabled.iter().nth(k).expect("the index is in range")
            }
        };
        v = epv_step(&v, call, v.actual())?;
        situation = situation.apply_call(call);
        steps.push((call, situation.clone()));
    }
    if !terminal {
        terminal = enabled_at(p, &v)?.is_empty();
    }
    Ok(SimulationTrace { steps, terminal, final_situation: situation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gossip::all_calls;
    use crate::modelcheck::enumerate_nonredundant;
    use crate::parse_formula;
    use std::collections::BTreeMap;

    const TRIANGLE: &str = "\
# everyone shares until familiarity is common knowledge on each edge
agents: a b c
edges: ab bc ca

forall j in N(i), B in P: rule Fi B & !C{i,j} Fj B -> (i,j)
";

    const PATH3: &str = "\
agents: a b c
edges: ab bc
forall j in N(i), B in P: rule Fi B & !C{i,j} Fj B -> (i,j)
";

    const ALWAYS: &str = "\
agents: a b
edges: ab
rule Fa A -> (a,b)
";

    fn agent(ch: char) -> Agent {
        Agent::parse(&ch.to_string(), MAX_AGENTS).unwrap()
    }

    fn call(text: &str, n: usize) -> Call {
        Call::parse(text, n).unwrap()
    }

    fn all_expert_goal(n: usize) -> Formula {
        (0..n)
            .flat_map(|i| (0..n).map(move |p| Formula::atom(Agent::new(i), Secret::new(p))))
            .reduce(Formula::and)
            .unwrap()
    }

    #[test]
    fn templates_expand_per_neighbour_and_secret() {
        let p = parse_protocol(TRIANGLE).unwrap();
        assert_eq!(p.num_agents(), 3);
        assert_eq!(p.rules().len(), 18);
        assert_eq!(p.graph().edges().len(), 3);
        assert!(p.rules().iter().all(|r| p.graph().has_edge(r.call())));
        let expected = parse_formula("Fa A & !C{a,b} Fb A", 3).unwrap();
        assert!(p
            .rules()
            .iter()
            .any(|r| *r.guard() == expected && r.call() == call("ab", 3)));

        let path = parse_protocol(PATH3).unwrap();
        assert_eq!(path.rules().len(), 12);
        assert_eq!(path.graph().neighbors(agent('b')), vec![agent('a'), agent('c')]);
        assert_eq!(path.graph().neighbors(agent('a')), vec![agent('b')]);
    }

    #[test]
    fn ground_rules_parse_without_templates() {
        let p = parse_protocol(ALWAYS).unwrap();
        assert_eq!(p.rules().len(), 1);
        assert_eq!(*p.rules()[0].guard(), parse_formula("Fa A", 2).unwrap());
        assert_eq!(p.rules()[0].call(), call("ab", 2));
    }

    #[test]
    fn rules_must_call_along_edges() {
        let text = "agents: a b c\nedges: ab bc\nrule Fa A -> (a,c)\n";
        assert!(matches!(parse_protocol(text), Err(Error::InvalidConfiguration(_))));
        let self_call = "agents: a b\nedges: ab\nrule Fa A -> (a,a)\n";
        assert!(matches!(parse_protocol(self_call), Err(Error::InvalidConfiguration(_))));
    }

    #[test]
    fn graphs_must_be_connected_and_loop_free() {
        let disconnected = "agents: a b c\nedges: ab\nrule Fa A -> (a,b)\n";
        assert!(matches!(parse_protocol(disconnected), Err(Error::InvalidConfiguration(_))));
        let loopy = "agents: a b\nedges: aa ab\nrule Fa A -> (a,b)\n";
        assert!(matches!(parse_protocol(loopy), Err(Error::IllFormedInput(_))));
    }

    #[test]
    fn malformed_files_report_positions() {
        assert!(matches!(parse_protocol(""), Err(Error::Syntax { .. })));
        assert!(matches!(
            parse_protocol("edges: ab\nagents: a b\n"),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            parse_protocol("agents: a b\nrule Fa A -> (a,b)\n"),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            parse_protocol("agents: a b\nedges: ab\nnonsense\n"),
            Err(Error::Syntax { .. })
        ));
        let err = parse_protocol("agents: a b\nedges: ab\nrule Fa A & -> (a,b)\n").unwrap_err();
        match err {
            // the reported position points into the rule's formula
            Error::Syntax { position, .. } => assert!(position > "agents: a b\nedges: ab\n".len()),
            other => panic!("expected a syntax error, got {other:?}"),
        }
        assert!(matches!(
            parse_protocol("agents: a b\nedges: ab\n"),
            Err(Error::InvalidConfiguration(_))
        ));
    }

    #[test]
    fn guards_may_not_nest_common_knowledge() {
        let text = "agents: a b\nedges: ab\nrule Ka Kb Fa A -> (a,b)\n";
        assert!(matches!(parse_protocol(text), Err(Error::WrongFragment(_))));
    }

    #[test]
    fn enabled_calls_follow_the_guards() {
        let p = parse_protocol(TRIANGLE).unwrap();
        let at_start = enabled_calls(&p, &CallSequence::empty()).unwrap();
        assert_eq!(at_start, p.graph().edges().clone());

        let unfamiliar = "agents: a b c\nedges: ab ac\nrule Fa B -> (a,c)\n";
        let p = parse_protocol(unfamiliar).unwrap();
        assert!(enabled_calls(&p, &CallSequence::empty()).unwrap().is_empty());
        let seq = CallSequence::parse("ab", 3).unwrap();
        assert_eq!(enabled_calls(&p, &seq).unwrap(), BTreeSet::from([call("ac", 3)]));
    }

    #[test]
    fn the_sharing_protocol_terminates_and_informs_everyone() {
        let p = parse_protocol(TRIANGLE).unwrap();
        let verdict = decide_termination(&p).unwrap();
        assert!(verdict.terminates);
        assert_eq!(verdict.witness, None);

        let trace = simulate(&p, Scheduler::Lexicographic, 100).unwrap();
        assert!(trace.terminal);
        assert_eq!(trace.final_situation, GossipSituation::parse("ABC.ABC.ABC").unwrap());
        let run: CallSequence = trace.steps.iter().map(|&(c, _)| c).collect();
        assert!(enabled_calls(&p, &run).unwrap().is_empty());
        assert!(crate::modelcheck::eval(3, &all_expert_goal(3), &run).unwrap());
    }

    #[test]
    fn repeating_an_uninformative_call_witnesses_non_termination() {
        let p = parse_protocol(ALWAYS).unwrap();
        let verdict = decide_termination(&p).unwrap();
        assert!(!verdict.terminates);
        let (prefix, c) = verdict.witness.unwrap();
        assert_eq!(prefix, CallSequence::parse("ab", 2).unwrap());
        assert_eq!(c, call("ab", 2));
        let before = epv(2, &prefix).unwrap();
        let after = epv(2, &prefix.appended(c)).unwrap();
        assert_eq!(before, after);
        // the witness call stays enabled no matter how often it repeats
        let mut extended = prefix;
        for _ in 0..3 {
            extended = extended.appended(c);
            assert!(enabled_calls(&p, &extended).unwrap().contains(&c));
        }
    }

    #[test]
    fn a_protocol_with_nothing_enabled_terminates_at_once() {
        let text = "agents: a b\nedges: ab\nrule Fa B -> (a,b)\n";
        let p = parse_protocol(text).unwrap();
        let verdict = decide_termination(&p).unwrap();
        assert!(verdict.terminates);
    }

    #[test]
    fn partial_correctness_of_the_sharing_protocol() {
        for text in [TRIANGLE, PATH3] {
            let p = parse_protocol(text).unwrap();
            let verdict = check_partial_correctness(&p, &all_expert_goal(3)).unwrap();
            assert!(verdict.holds, "counterexample: {:?}", verdict.counterexample);
        }
    }

    #[test]
    fn partial_correctness_counterexamples_start_at_the_empty_sequence() {
        let text = "agents: a b\nedges: ab\nrule Fa B -> (a,b)\n";
        let p = parse_protocol(text).unwrap();
        let goal = parse_formula("Fa B", 2).unwrap();
        let verdict = check_partial_correctness(&p, &goal).unwrap();
        assert!(!verdict.holds);
        assert_eq!(verdict.counterexample, Some(CallSequence::empty()));
    }

    #[test]
    fn goals_may_not_nest_common_knowledge() {
        let p = parse_protocol(ALWAYS).unwrap();
        let goal = parse_formula("Ka Kb Fa A", 2).unwrap();
        assert!(matches!(
            check_partial_correctness(&p, &goal),
            Err(Error::WrongFragment(_))
        ));
    }

    #[test]
    fn seeded_simulations_are_reproducible_and_all_reach_the_goal() {
        let p = parse_protocol(TRIANGLE).unwrap();
        let first = simulate(&p, Scheduler::Random { seed: 7 }, 100).unwrap();
        let second = simulate(&p, Scheduler::Random { seed: 7 }, 100).unwrap();
        assert_eq!(first, second);
        for seed in 0..5 {
            let trace = simulate(&p, Scheduler::Random { seed }, 100).unwrap();
            assert!(trace.terminal);
            assert_eq!(trace.final_situation, GossipSituation::parse("ABC.ABC.ABC").unwrap());
        }
    }

    #[test]
    fn step_budgets_cut_simulations_short() {
        let p = parse_protocol(TRIANGLE).unwrap();
        let idle = simulate(&p, Scheduler::Lexicographic, 0).unwrap();
        assert!(idle.steps.is_empty());
        assert!(!idle.terminal);
        assert_eq!(idle.final_situation, GossipSituation::root(3).unwrap());

        let quiet = parse_protocol("agents: a b\nedges: ab\nrule Fa B -> (a,b)\n").unwrap();
        let stopped = simulate(&quiet, Scheduler::Lexicographic, 0).unwrap();
        assert!(stopped.terminal);

        let endless = parse_protocol(ALWAYS).unwrap();
        let capped = simulate(&endless, Scheduler::Lexicographic, 10).unwrap();
        assert_eq!(capped.steps.len(), 10);
        assert!(!capped.terminal);
        assert!(capped.steps.iter().all(|&(c, _)| c == call("ab", 2)));
    }

    #[test]
    fn a_shared_call_makes_shared_familiarity_common_knowledge() {
        // After any call ij, whatever both participants are familiar with
        // is common knowledge between them.
        for node in enumerate_nonredundant(3).unwrap() {
            for c in all_calls(3) {
                let next = epv_step(&node.epv, c, node.epv.actual()).unwrap();
                for p in 0..3 {
                    let both = Formula::and(
                        Formula::atom(c.lo(), Secret::new(p)),
                        Formula::atom(c.hi(), Secret::new(p)),
                    );
                    if eval_at(&both, &next).unwrap() {
                        let common =
                            Formula::common(BTreeSet::from([c.lo(), c.hi()]), both.clone());
                        assert!(
                            eval_at(&common, &next).unwrap(),
                            "familiarity with {} is not common after {};{}",
                            Secret::new(p),
                            node.sequence,
                            c
                        );
                    }
                }
            }
        }
    }

    fn missing_knowledge_measure(p: &Protocol, v: &EpistemicPairView) -> usize {
        let mut count = 0;
        for e in p.graph().edges() {
            for (i, j) in [(e.lo(), e.hi()), (e.hi(), e.lo())] {
                for s in 0..p.num_agents() {
                    let known = Formula::common(
                        BTreeSet::from([i, j]),
                        Formula::atom(j, Secret::new(s)),
                    );
                    if !eval_at(&known, v).unwrap() {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    #[test]
    fn every_sharing_call_shrinks_the_missing_knowledge_count() {
        let p = parse_protocol(TRIANGLE).unwrap();
        let init = epv_init(3).unwrap();
        let mut visited = BTreeSet::from([init.clone()]);
        let mut stack = vec![init];
        let mut transitions = 0;
        while let Some(v) = stack.pop() {
            let measure = missing_knowledge_measure(&p, &v);
            let enabled = enabled_at(&p, &v).unwrap();
            if enabled.is_empty() {
                assert_eq!(measure, 0);
                continue;
            }
            for c in enabled {
                let next = epv_step(&v, c, v.actual()).unwrap();
                assert!(missing_knowledge_measure(&p, &next) < measure);
                transitions += 1;
                if visited.insert(next.clone()) {
                    stack.push(next);
                }
            }
        }
        assert!(transitions > 10);
    }

    #[test]
    fn equal_pair_views_enable_equal_calls() {
        let p = parse_protocol(TRIANGLE).unwrap();
        let mut by_view: BTreeMap<EpistemicPairView, BTreeSet<Call>> = BTreeMap::new();
        let mut nodes = 0;
        for node in enumerate_nonredundant(3).unwrap() {
            nodes += 1;
            let enabled = enabled_at(&p, &node.epv).unwrap();
            if let Some(previous) = by_view.insert(node.epv, enabled.clone()) {
                assert_eq!(previous, enabled);
            }
        }
        assert!(nodes > by_view.len(), "no equal views were compared");
    }

    #[test]
    fn verdicts_and_traces_serialize_compactly() {
        let endless = parse_protocol(ALWAYS).unwrap();
        let verdict = decide_termination(&endless).unwrap();
        assert_eq!(
            verdict.to_json(),
            serde_json::json!({
                "terminates": false,
                "witness": {"sequence": "ab", "call": "ab"},
            })
        );
        let p = parse_protocol(TRIANGLE).unwrap();
        assert_eq!(
            decide_termination(&p).unwrap().to_json(),
            serde_json::json!({"terminates": true, "witness": null})
        );
        let trace = simulate(&endless, Scheduler::Lexicographic, 1).unwrap();
        assert_eq!(
            trace.to_json(),
            serde_json::json!({
                "steps": [{"step": 0, "call": "ab", "situation": "AB.AB"}],
                "terminal": false,
                "final": "AB.AB",
            })
        );
    }
}
