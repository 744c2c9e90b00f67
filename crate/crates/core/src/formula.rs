//! The epistemic language: formulas over familiarity atoms with common
//! knowledge, a parser for the text form, sublanguage classification, and
//! propositional evaluation.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::Error;
use crate::gossip::{Agent, GossipSituation, Secret};
use crate::Result;

/// A formula. `Atom(a, p)` says agent `a` is familiar with secret `p`.
/// `Common(G, φ)` is common knowledge of `φ` in the group `G`; a singleton
/// group is individual knowledge and prints as `Ka`.
///
/// `Or` and `Implies` are sugar over `Not`/`And`, but they are kept as nodes
/// so formulas print the way they were written. For anything that cares
/// about negation, `Implies` counts as containing one; `Or` does not.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Formula {
    Atom(Agent, Secret),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Common(BTreeSet<Agent>, Box<Formula>),
}

/// Which sublanguage a formula falls into: no common knowledge at all,
/// common knowledge over propositional bodies only, or anything beyond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fragment {
    Propositional,
    WeaklyNested,
    General,
}

impl Formula {
    pub fn atom(a: Agent, p: Secret) -> Formula {
        Formula::Atom(a, p)
    }

    pub fn not(phi: Formula) -> Formula {
        Formula::Not(Box::new(phi))
    }

    pub fn and(lhs: Formula, rhs: Formula) -> Formula {
        Formula::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Formula, rhs: Formula) -> Formula {
        Formula::Or(Box::new(lhs), Box::new(rhs))
    }

    pub fn implies(lhs: Formula, rhs: Formula) -> Formula {
        Formula::Implies(Box::new(lhs), Box::new(rhs))
    }

    pub fn common(group: BTreeSet<Agent>, body: Formula) -> Formula {
        Formula::Common(group, Box::new(body))
    }

    /// Individual knowledge, i.e. common knowledge of a singleton group.
    pub fn knows(a: Agent, body: Formula) -> Formula {
        Formula::Common(BTreeSet::from([a]), Box::new(body))
    }

    pub fn classify(&self) -> Fragment {
        if self.is_propositional() {
            Fragment::Propositional
        } else if self.is_weakly_nested() {
            Fragment::WeaklyNested
        } else {
            Fragment::General
        }
    }

    fn is_propositional(&self) -> bool {
        match self {
            Formula::Atom(..) => true,
            Formula::Not(x) => x.is_propositional(),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                l.is_propositional() && r.is_propositional()
            }
            Formula::Common(..) => false,
        }
    }

    fn is_weakly_nested(&self) -> bool {
        match self {
            Formula::Atom(..) => true,
            Formula::Not(x) => x.is_weakly_nested(),
            Formula::And(l, r) | Formula::Or(l, r) | Formula::Implies(l, r) => {
                l.is_weakly_nested() && r.is_weakly_nested()
            }
            Formula::Common(_, body) => body.is_propositional(),
        }
    }

    /// True when no negation occurs anywhere, counting `Implies` as a
    /// negation in disguise; `Or` is allowed.
    pub fn is_negation_free(&self) -> bool {
        match self {
            Formula::Atom(..) => true,
            Formula::Not(..) | Formula::Implies(..) => false,
            Formula::And(l, r) | Formula::Or(l, r) => {
                l.is_negation_free() && r.is_negation_free()
            }
            Formula::Common(_, body) => body.is_negation_free(),
        }
    }
}

/// Evaluates a propositional formula in a single situation.
pub fn eval_propositional(phi: &Formula, s: &GossipSituation) -> Result<bool> {
    match phi {
        Formula::Atom(a, p) => {
            if a.index() >= s.num_agents() {
                return Err(Error::UnknownAgent(a.to_string()));
            }
            if p.index() >= s.num_agents() {
                return Err(Error::UnknownSecret(p.to_string()));
            }
            Ok(s.secrets_of(*a).contains(*p))
        }
        Formula::Not(x) => Ok(!eval_propositional(x, s)?),
        Formula::And(l, r) => Ok(eval_propositional(l, s)? && eval_propositional(r, s)?),
        Formula::Or(l, r) => Ok(eval_propositional(l, s)? || eval_propositional(r, s)?),
        Formula::Implies(l, r) => Ok(!eval_propositional(l, s)? || eval_propositional(r, s)?),
        Formula::Common(..) => Err(Error::WrongFragment(
            "propositional evaluation cannot handle common-knowledge operators".to_string(),
        )),
    }
}

/// How agent and secret names found by the parser are mapped to indices.
/// The protocol layer substitutes a resolver that also handles bound
/// template variables.
pub(crate) trait NameResolver {
    fn resolve_agent(&mut self, name: &str, position: usize) -> Result<Agent>;
    fn resolve_secret(&mut self, name: &str, position: usize) -> Result<Secret>;
}

pub(crate) struct StandardNames {
    pub num_agents: usize,
}

impl NameResolver for StandardNames {
    fn resolve_agent(&mut self, name: &str, _position: usize) -> Result<Agent> {
        Agent::parse(name, self.num_agents)
    }

    fn resolve_secret(&mut self, name: &str, _position: usize) -> Result<Secret> {
        Secret::parse(name, self.num_agents)
    }
}

/// Parses the text form of a formula.
///
/// Grammar, loosest binding first: `->` (one per parenthesis level), then
/// `|`, then `&`, then the prefix operators `!`, `Ka`, `C{a,b}`. Atoms are
/// `F` + agent + secret, e.g. `Fa B`.
pub fn parse_formula(text: &str, num_agents: usize) -> Result<Formula> {
    let mut names = StandardNames { num_agents };
    parse_formula_with(text, &mut names)
}

pub(crate) fn parse_formula_with(
    text: &str,
    names: &mut dyn NameResolver,
) -> Result<Formula> {
    let mut cur = Cursor { text, pos: 0 };
    let phi = cur.implication(names)?;
    cur.skip_ws();
    if cur.pos < cur.text.len() {
        return Err(cur.err("unexpected trailing input"));
    }
    Ok(phi)
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: &str) -> Error {
        Error::Syntax { position: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while let Some(ch) = self.peek() {
            if ch.is_whitespace() {
                self.pos += ch.len_utf8();
            } else {
                break;
            }
        }
    }

    fn peek(&self) -> Option<char> {
        self.text[self.pos..].chars().next()
    }

    /// Consumes `token` if it is next (after whitespace).
    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.text[self.pos..].starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.err(&format!("expected `{token}`")))
        }
    }

    /// A lower-case-led name: agent letter plus optional digits.
    fn agent_name(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(ch) if ch.is_ascii_lowercase() => self.pos += 1,
            _ => return Err(self.err("expected an agent name")),
        }
        while let Some(ch) = self.peek() {
            if ch.is_ascii_lowercase() || ch.is_ascii_digit() {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(&self.text[start..self.pos])
    }

    /// An upper-case-led name: secret letter plus optional digits.
    fn secret_name(&mut self) -> Result<&'a str> {
        self.skip_ws();
        let start = self.pos;
        match self.peek() {
            Some(ch) if ch.is_ascii_uppercase() => self.pos += 1,
            _ => return Err(self.err("expected a secret name")),
        }
        while let Some(ch) = self.peek() {
            if ch.is_ascii_alphanumeric() {
                self.pos += 1;
            } else {
                break;
            }
        }
        Ok(&self.text[start..self.pos])
    }

    fn implication(&mut self, names: &mut dyn NameResolver) -> Result<Formula> {
        let lhs = self.disjunction(names)?;
        if self.eat("->") {
            let rhs = self.disjunction(names)?;
            return Ok(Formula::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn disjunction(&mut self, names: &mut dyn NameResolver) -> Result<Formula> {
        let mut acc = self.conjunction(names)?;
        while self.eat("|") {
            let rhs = self.conjunction(names)?;
            acc = Formula::or(acc, rhs);
        }
        Ok(acc)
    }

    fn conjunction(&mut self, names: &mut dyn NameResolver) -> Result<Formula> {
        let mut acc = self.unary(names)?;
        loop {
            // `&` but not `&&`; and never swallow the `-` of `->`.
            self.skip_ws();
            if self.text[self.pos..].starts_with('&') {
                self.pos += 1;
                let rhs = self.unary(names)?;
                acc = Formula::and(acc, rhs);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self, names: &mut dyn NameResolver) -> Result<Formula> {
        self.skip_ws();
        match self.peek() {
            Some('!') => {
                self.pos += 1;
                Ok(Formula::not(self.unary(names)?))
            }
            Some('K') => {
                self.pos += 1;
                let pos = self.pos;
                let name = self.agent_name()?;
                let agent = names.resolve_agent(name, pos)?;
                Ok(Formula::knows(agent, self.unary(names)?))
            }
            Some('C') => {
                self.pos += 1;
                self.expect("{")?;
                let mut group = BTreeSet::new();
                loop {
                    let pos = self.pos;
                    let name = self.agent_name()?;
                    group.insert(names.resolve_agent(name, pos)?);
                    if !self.eat(",") {
                        break;
                    }
                }
                self.expect("}")?;
                Ok(Formula::common(group, self.unary(names)?))
            }
            Some('F') => {
                self.pos += 1;
                let apos = self.pos;
                let aname = self.agent_name()?;
                let agent = names.resolve_agent(aname, apos)?;
                self.skip_ws();
                let spos = self.pos;
                let sname = self.secret_name()?;
                let secret = names.resolve_secret(sname, spos)?;
                Ok(Formula::atom(agent, secret))
            }
            Some('(') => {
                self.pos += 1;
                let inner = self.implication(names)?;
                self.expect(")")?;
                Ok(inner)
            }
            _ => Err(self.err("expected a formula")),
        }
    }
}

// Binding strengths used to print with minimal parentheses. A node is
// parenthesized when its own strength is below what its context requires.
const PREC_IMPLIES: u8 = 1;
const PREC_OR: u8 = 2;
const PREC_AND: u8 = 3;
const PREC_UNARY: u8 = 4;

impl Formula {
    fn precedence(&self) -> u8 {
        match self {
            Formula::Implies(..) => PREC_IMPLIES,
            Formula::Or(..) => PREC_OR,
            Formula::And(..) => PREC_AND,
            Formula::Not(..) | Formula::Common(..) => PREC_UNARY,
            Formula::Atom(..) => u8::MAX,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "(")?;
            self.fmt_prec(f, PREC_IMPLIES)?;
            return write!(f, ")");
        }
        match self {
            Formula::Atom(a, p) => write!(f, "F{a} {p}"),
            Formula::Not(x) => {
                write!(f, "!")?;
                x.fmt_prec(f, PREC_UNARY)
            }
            Formula::And(l, r) => {
                l.fmt_prec(f, PREC_AND)?;
                write!(f, " & ")?;
                r.fmt_prec(f, PREC_AND + 1)
            }
            Formula::Or(l, r) => {
                l.fmt_prec(f, PREC_OR)?;
                write!(f, " | ")?;
                r.fmt_prec(f, PREC_OR + 1)
            }
            Formula::Implies(l, r) => {
                l.fmt_prec(f, PREC_IMPLIES + 1)?;
                write!(f, " -> ")?;
                r.fmt_prec(f, PREC_IMPLIES + 1)
            }
            Formula::Common(group, body) => {
                if group.len() == 1 {
                    write!(f, "K{} ", group.iter().next().unwrap())?;
                } else {
                    write!(f, "C{{")?;
                    for (i, a) in group.iter().enumerate() {
                        if i > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{a}")?;
                    }
                    write!(f, "}} ")?;
                }
                body.fmt_prec(f, PREC_UNARY)
            }
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, PREC_IMPLIES)
    }
}

/// A non-empty word of agents `a1…ak`, standing for the stacked knowledge
/// operators `K_{a1} … K_{ak}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KnowledgePrefix(Vec<Agent>);

impl KnowledgePrefix {
    pub fn new(agents: Vec<Agent>) -> Result<KnowledgePrefix> {
        if agents.is_empty() {
            return Err(Error::IllFormedInput("a knowledge prefix must name at least one agent".to_string()));
        }
        Ok(KnowledgePrefix(agents))
    }

    pub fn agents(&self) -> &[Agent] {
        &self.0
    }

    /// Accepts the compact word form `abab`; indexed agents are separated
    /// by commas, `a0,a1,a0`.
    pub fn parse(text: &str, num_agents: usize) -> Result<KnowledgePrefix> {
        let t = text.trim();
        let agents = if t.contains(',') {
            t.split(',')
                .map(|part| Agent::parse(part.trim(), num_agents))
                .collect::<Result<Vec<_>>>()?
        } else {
            t.chars()
                .map(|ch| Agent::parse(&ch.to_string(), num_agents))
                .collect::<Result<Vec<_>>>()?
        };
        KnowledgePrefix::new(agents)
    }

    /// Wraps a body in the stacked knowledge operators, outermost first:
    /// `abab` applied to φ is `Ka Kb Ka Kb φ`.
    pub fn apply(&self, body: Formula) -> Formula {
        self.0.iter().rev().fold(body, |acc, &a| Formula::knows(a, acc))
    }
}

impl fmt::Display for KnowledgePrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for a in &self.0 {
            write!(f, "{a}")?;
        }
        Ok(())
    }
}
