use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use gossipck_core::{
    a_simplification, abab_witness, check_partial_correctness, check_truth_with,
    decide_termination, enumerate_nonredundant, epv, eval, parse_formula, parse_protocol, r_ab,
    simulate, Agent, CallSequence, Error, Protocol, Scheduler, TruthVerdict,
};

/// Model checker and protocol analyzer for gossip with common knowledge.
///
/// Boolean verdicts map to the exit status: 0 for true, 1 for false;
/// any error exits with status 2.
#[derive(Parser)]
#[command(name = "gossipck", version)]
struct Cli {
    /// Print machine-readable JSON instead of the human notation
    #[arg(long, global = true)]
    json: bool,

    /// Worker threads for exhaustive truth checking
    #[arg(long, global = true, env = "GOSSIPCK_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a formula after a call sequence
    Eval {
        #[arg(long)]
        agents: usize,
        /// Call sequence such as "ab;bc" (use "ε" or "" for the empty one)
        #[arg(long)]
        seq: String,
        /// Formula such as "C{a,b} Fc A"
        #[arg(long)]
        formula: String,
    },
    /// Decide whether a formula holds after every call sequence
    Truth {
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        formula: String,
    },
    /// Decide whether a protocol always terminates
    Terminates {
        /// Protocol file
        #[arg(long)]
        protocol: PathBuf,
    },
    /// Check that a goal holds whenever no protocol rule is enabled
    Correctness {
        #[arg(long)]
        protocol: PathBuf,
        /// Goal formula over the protocol's agents
        #[arg(long)]
        goal: String,
    },
    /// Print the epistemic pair-view of a call sequence
    Epv {
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        seq: String,
    },
    /// Rewrite a call sequence while preserving an agent's view
    Reduce {
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        seq: String,
        #[arg(long)]
        kind: ReduceKind,
        /// The agent whose view is preserved
        #[arg(long)]
        agent: String,
        /// The agent whose inessential calls are rerouted (r-ab only)
        #[arg(long)]
        other: Option<String>,
    },
    /// Produce the alternating equivalence chain from a sequence to ε
    Witness {
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        seq: String,
        /// The two alternating agents, e.g. "ab"
        #[arg(long)]
        pair: String,
    },
    /// List every pair-epistemically non-redundant call sequence
    Enumerate {
        #[arg(long)]
        agents: usize,
    },
    /// Run a protocol under a scheduler
    Simulate {
        #[arg(long)]
        protocol: PathBuf,
        /// Seed for the random scheduler; omit for lexicographic choice
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 100)]
        max_steps: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReduceKind {
    ASimplify,
    RAb,
}

fn main() -> ExitCode {
    // Die quietly when the reader of a pipe goes away, as line-oriented
    // tools are expected to, instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn bool_code(value: bool) -> u8 {
    if value {
        0
    } else {
        1
    }
}

fn load_protocol(path: &Path) -> gossipck_core::Result<Protocol> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::IllFormedInput(format!("cannot read {}: {e}", path.display())))?;
    parse_protocol(&text)
}

fn print_verdict(v: &TruthVerdict, json: bool) -> u8 {
    if json {
        println!("{}", v.to_json());
    } else if v.holds {
        println!("true");
    } else {
        println!("false");
        if let Some(c) = &v.counterexample {
            println!("counterexample: {c}");
        }
    }
    bool_code(v.holds)
}

fn parse_pair(text: &str, num_agents: usize) -> gossipck_core::Result<(Agent, Agent)> {
    let mut chars = text.trim().chars();
    match (chars.next(), chars.next(), chars.next()) {
        (Some(x), Some(y), None) => Ok((
            Agent::parse(&x.to_string(), num_agents)?,
            Agent::parse(&y.to_string(), num_agents)?,
        )),
        _ => Err(Error::IllFormedInput(format!(
            "pair `{text}` should be two agent letters, like `ab`"
        ))),
    }
}

fn run(cli: Cli) -> gossipck_core::Result<u8> {
    let threads = cli.threads.unwrap_or(1).max(1);
    let json = cli.json;
    match cli.command {
        Command::Eval { agents, seq, formula } => {
            let phi = parse_formula(&formula, agents)?;
            let seq = CallSequence::parse(&seq, agents)?;
            let value = eval(agents, &phi, &seq)?;
            if json {
                println!("{}", serde_json::json!({ "value": value }));
            } else {
                println!("{value}");
            }
            Ok(bool_code(value))
        }
        Command::Truth { agents, formula } => {
            let phi = parse_formula(&formula, agents)?;
            let verdict = check_truth_with(agents, &phi, threads)?;
            Ok(print_verdict(&verdict, json))
        }
        Command::Terminates { protocol } => {
            let p = load_protocol(&protocol)?;
            let verdict = decide_termination(&p)?;
            if json {
                println!("{}", verdict.to_json());
            } else {
                println!("{}", verdict.terminates);
                if let Some((seq, c)) = &verdict.witness {
                    println!("witness sequence: {seq}");
                    println!("witness call: {c}");
                }
            }
            Ok(bool_code(verdict.terminates))
        }
        Command::Correctness { protocol, goal } => {
            let p = load_protocol(&protocol)?;
            let goal = parse_formula(&goal, p.num_agents())?;
            let verdict = check_partial_correctness(&p, &goal)?;
            Ok(print_verdict(&verdict, json))
        }
        Command::Epv { agents, seq } => {
            let seq = CallSequence::parse(&seq, agents)?;
            let v = epv(agents, &seq)?;
            if json {
                println!("{}", v.to_json());
            } else {
                println!("{v}");
            }
            Ok(0)
        }
        Command::Reduce { agents, seq, kind, agent, other } => {
            let seq = CallSequence::parse(&seq, agents)?;
            let a = Agent::parse(&agent, agents)?;
            let reduced = match kind {
                ReduceKind::ASimplify => a_simplification(agents, &seq, a)?,
                ReduceKind::RAb => {
                    let other = other.ok_or_else(|| {
                        Error::IllFormedInput("--other is required for --kind r-ab".to_string())
                    })?;
                    let b = Agent::parse(&other, agents)?;
                    r_ab(agents, &seq, a, b)?
                }
            };
            if json {
                println!("{}", serde_json::json!({ "sequence": reduced.to_string() }));
            } else {
                println!("{reduced}");
            }
            Ok(0)
        }
        Command::Witness { agents, seq, pair } => {
            let seq = CallSequence::parse(&seq, agents)?;
            let (a, b) = parse_pair(&pair, agents)?;
            let steps = abab_witness(agents, &seq, a, b)?;
            if json {
                let records: Vec<serde_json::Value> = steps
                    .iter()
                    .map(|(s, x)| {
                        serde_json::json!({
                            "sequence": s.to_string(),
                            "agent": x.to_string(),
                            "verified": true,
                        })
                    })
                    .collect();
                println!("{}", serde_json::Value::Array(records));
            } else {
                println!("{seq}");
                for (s, x) in &steps {
                    println!("≡_{x} {s}");
                }
            }
            Ok(0)
        }
        Command::Enumerate { agents } => {
            if json {
                let sequences: Vec<String> = enumerate_nonredundant(agents)?
                    .map(|node| node.sequence.to_string())
                    .collect();
                println!(
                    "{}",
                    serde_json::json!({ "count": sequences.len(), "sequences": sequences })
                );
            } else {
                let mut count = 0usize;
                for node in enumerate_nonredundant(agents)? {
                    println!("{}", node.sequence);
                    count += 1;
                }
                println!("count: {count}");
            }
            Ok(0)
        }
        Command::Simulate { protocol, seed, max_steps } => {
            let p = load_protocol(&protocol)?;
            let scheduler = match seed {
                Some(seed) => Scheduler::Random { seed },
                None => Scheduler::Lexicographic,
            };
            let trace = simulate(&p, scheduler, max_steps)?;
            if json {
                println!("{}", trace.to_json());
            } else {
                for (i, (c, s)) in trace.steps.iter().enumerate() {
                    println!("{i}: {c} -> {s}");
                }
                println!("terminal: {}", trace.terminal);
                println!("final: {}", trace.final_situation);
            }
            Ok(0)
        }
    }
}
