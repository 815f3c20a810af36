//! The execution substrate: agents, rounds, budget accounting, end-of-round
//! merging, and the transcript that rounds-used / time-used are read from.
//!
//! One trial is single-threaded and deterministic. Simulated time is
//! `sum over rounds of the maximum per-agent pull count in that round`; the
//! ledger refuses any pull or round that would break `time <= horizon` or
//! `rounds <= round_cap`, so budget soundness is enforced, not just checked
//! after the fact.
//!
//! Logically parallel sub-runs (repetition copies, verification batteries)
//! execute sequentially on child ledgers and are then absorbed: per round
//! index the per-agent loads of all copies add up (the copies share agents),
//! and the block contributes `max over copies` rounds.

use std::collections::{BTreeSet, HashMap};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constants::Constants;
use crate::error::Error;
use crate::instance::Instance;
use crate::sampling::{binomial_sum, ArmPull};
use crate::Result;

/// Run-level configuration of the collaboration model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollabConfig {
    /// Number of agents `K`.
    pub agents: usize,
    /// Time horizon in pulls per agent.
    pub horizon: u64,
    /// Hard safety cap on rounds.
    pub round_cap: usize,
}

impl CollabConfig {
    pub fn new(agents: usize, horizon: u64, round_cap: usize) -> Result<Self> {
        if agents < 1 || horizon < 1 || round_cap < 1 {
            return Err(Error::InvalidParams(format!(
                "config needs K >= 1, T >= 1, round cap >= 1 (got {agents}, {horizon}, {round_cap})"
            )));
        }
        Ok(CollabConfig {
            agents,
            horizon,
            round_cap,
        })
    }
}

/// The `(pull count, empirical mean)` pair exchanged at round boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmStat {
    pub arm: usize,
    pub pulls: u64,
    pub mean: f64,
}

impl ArmStat {
    pub fn reward_sum(&self) -> f64 {
        self.mean * self.pulls as f64
    }
}

/// How much per-cell detail the ledger retains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerMode {
    /// Per-round per-agent loads only (cheap, default for big sweeps).
    Summary,
    /// Full `(agent, arm, pulls, successes)` cells per round.
    Full,
}

/// One completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// Pulls by each agent in this round.
    pub per_agent: Vec<u64>,
    /// Wall-clock charge of the round: `max(per_agent)`.
    pub max_pulls: u64,
    /// `(agent, arm, pulls, successes)` sorted by `(agent, arm)`;
    /// present in [`LedgerMode::Full`] only.
    pub cells: Option<Vec<(u32, u32, u64, u64)>>,
}

/// Per-trial pull accounting: the sole source of rounds-used and time-used.
#[derive(Debug, Clone)]
pub struct Ledger {
    k: usize,
    horizon: u64,
    round_cap: usize,
    mode: LedgerMode,
    rounds: Vec<RoundRecord>,
    time_used: u64,
    cur: Vec<HashMap<u32, (u64, u64)>>,
    cur_totals: Vec<u64>,
    cur_max: u64,
    round_budget: Option<u64>,
    /// Per-arm `(pulls, reward sum)` as of the last exchange.
    merged: HashMap<u32, (u64, u64)>,
    /// Total arm-stat messages sent (one per arm touched, per agent, per round).
    msg_stats: u64,
}

impl Ledger {
    pub fn new(config: CollabConfig, mode: LedgerMode) -> Self {
        Ledger {
            k: config.agents,
            horizon: config.horizon,
            round_cap: config.round_cap,
            mode,
            rounds: Vec::new(),
            time_used: 0,
            cur: vec![HashMap::new(); config.agents],
            cur_totals: vec![0; config.agents],
            cur_max: 0,
            round_budget: None,
            merged: HashMap::new(),
            msg_stats: 0,
        }
    }

    pub fn agents(&self) -> usize {
        self.k
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn mode(&self) -> LedgerMode {
        self.mode
    }

    /// Completed-round wall clock.
    pub fn time_used(&self) -> u64 {
        self.time_used
    }

    pub fn rounds_used(&self) -> usize {
        self.rounds.len()
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn messages_sent(&self) -> u64 {
        self.msg_stats
    }

    /// Declare the per-agent budget of the current round. Cleared at the
    /// next exchange; `None` leaves only the horizon constraint.
    pub fn set_round_budget(&mut self, budget: Option<u64>) {
        self.round_budget = budget;
    }

    fn precheck(&self, agent: usize, count: u64) -> Result<()> {
        let new_total = self.cur_totals[agent] + count;
        if let Some(b) = self.round_budget {
            if new_total > b {
                return Err(Error::BudgetExceeded {
                    agent,
                    attempted: new_total,
                    limit: b,
                });
            }
        }
        let new_max = self.cur_max.max(new_total);
        if self.time_used + new_max > self.horizon {
            return Err(Error::BudgetExceeded {
                agent,
                attempted: self.time_used + new_max,
                limit: self.horizon,
            });
        }
        Ok(())
    }

    fn record(&mut self, agent: usize, arm: usize, count: u64, successes: u64) {
        let cell = self.cur[agent].entry(arm as u32).or_insert((0, 0));
        cell.0 += count;
        cell.1 += successes;
        self.cur_totals[agent] += count;
        self.cur_max = self.cur_max.max(self.cur_totals[agent]);
    }

    /// Pulls an agent has made in the round currently in progress.
    pub fn current_round_pulls(&self, agent: usize) -> u64 {
        self.cur_totals[agent]
    }

    fn commit_round(&mut self) {
        let per_agent = std::mem::replace(&mut self.cur_totals, vec![0; self.k]);
        let max_pulls = self.cur_max;
        self.cur_max = 0;
        self.round_budget = None;
        let mut cells_out = None;
        let mut touched = 0u64;
        if self.mode == LedgerMode::Full {
            let mut cells = Vec::new();
            for (agent, map) in self.cur.iter().enumerate() {
                for (&arm, &(c, s)) in map {
                    cells.push((agent as u32, arm, c, s));
                }
            }
            cells.sort_unstable();
            cells_out = Some(cells);
        }
        for map in &mut self.cur {
            touched += map.len() as u64;
            for (&arm, &(c, s)) in map.iter() {
                let e = self.merged.entry(arm).or_insert((0, 0));
                e.0 += c;
                e.1 += s;
            }
            map.clear();
        }
        self.msg_stats += touched;
        self.time_used += max_pulls;
        self.rounds.push(RoundRecord {
            per_agent,
            max_pulls,
            cells: cells_out,
        });
    }

    /// End the round: every agent subsequently reads identical merged stats.
    pub fn end_round(&mut self) -> Result<()> {
        if self.rounds.len() + 1 > self.round_cap {
            return Err(Error::RoundCapExceeded {
                cap: self.round_cap,
            });
        }
        self.commit_round();
        Ok(())
    }

    /// Commit a dangling in-progress round without the cap check. Used when
    /// sealing a child run that errored mid-round: the pulls happened, so
    /// the time must be charged.
    fn seal(&mut self) {
        if self.cur_totals.iter().any(|&t| t > 0) {
            self.commit_round();
        }
    }

    /// Merged `(pulls, reward sum)` of an arm as of the last exchange.
    pub fn merged_raw(&self, arm: usize) -> (u64, u64) {
        self.merged.get(&(arm as u32)).copied().unwrap_or((0, 0))
    }

    pub fn merged_stat(&self, arm: usize) -> Option<ArmStat> {
        let (c, s) = self.merged_raw(arm);
        if c == 0 {
            return None;
        }
        Some(ArmStat {
            arm,
            pulls: c,
            mean: s as f64 / c as f64,
        })
    }

    /// Absorb logically-parallel child runs: per round index the per-agent
    /// loads add up, the block counts `max over children` rounds.
    pub fn absorb_parallel(&mut self, children: &[Ledger]) -> Result<()> {
        assert!(
            self.cur_totals.iter().all(|&t| t == 0),
            "cannot absorb a parallel block while a round is in progress"
        );
        let block_rounds = children.iter().map(|c| c.rounds.len()).max().unwrap_or(0);
        if block_rounds == 0 {
            for c in children {
                self.merge_stats_of(c);
            }
            return Ok(());
        }
        if self.rounds.len() + block_rounds > self.round_cap {
            return Err(Error::RoundCapExceeded {
                cap: self.round_cap,
            });
        }
        // Build the summed rounds first so failure leaves self untouched.
        let mut new_rounds = Vec::with_capacity(block_rounds);
        let mut added_time = 0u64;
        for r in 0..block_rounds {
            let mut per_agent = vec![0u64; self.k];
            let mut cells: HashMap<(u32, u32), (u64, u64)> = HashMap::new();
            for c in children {
                if let Some(rec) = c.rounds.get(r) {
                    for (a, &p) in rec.per_agent.iter().enumerate() {
                        per_agent[a] += p;
                    }
                    if self.mode == LedgerMode::Full {
                        if let Some(cs) = &rec.cells {
                            for &(agent, arm, p, s) in cs {
                                let e = cells.entry((agent, arm)).or_insert((0, 0));
                                e.0 += p;
                                e.1 += s;
                            }
                        }
                    }
                }
            }
            let max_pulls = per_agent.iter().copied().max().unwrap_or(0);
            added_time += max_pulls;
            let cells_out = if self.mode == LedgerMode::Full {
                let mut v: Vec<(u32, u32, u64, u64)> = cells
                    .into_iter()
                    .map(|((a, arm), (p, s))| (a, arm, p, s))
                    .collect();
                v.sort_unstable();
                Some(v)
            } else {
                None
            };
            new_rounds.push(RoundRecord {
                per_agent,
                max_pulls,
                cells: cells_out,
            });
        }
        if self.time_used + added_time > self.horizon {
            return Err(Error::BudgetExceeded {
                agent: 0,
                attempted: self.time_used + added_time,
                limit: self.horizon,
            });
        }
        self.time_used += added_time;
        self.rounds.extend(new_rounds);
        for c in children {
            self.merge_stats_of(c);
            self.msg_stats += c.msg_stats;
        }
        Ok(())
    }

    fn merge_stats_of(&mut self, child: &Ledger) {
        for (&arm, &(c, s)) in &child.merged {
            let e = self.merged.entry(arm).or_insert((0, 0));
            e.0 += c;
            e.1 += s;
        }
    }

    /// Per-agent pull totals across all completed rounds.
    pub fn per_agent_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.k];
        for r in &self.rounds {
            for (a, &p) in r.per_agent.iter().enumerate() {
                totals[a] += p;
            }
        }
        totals
    }
}

/// A live simulation: instance + per-agent streams + public coins + ledger.
pub struct Sim<'a> {
    pub instance: &'a Instance,
    pub consts: &'a Constants,
    streams: &'a mut Vec<ChaCha8Rng>,
    coins: &'a mut ChaCha8Rng,
    pub ledger: Ledger,
}

impl<'a> Sim<'a> {
    pub fn new(
        instance: &'a Instance,
        consts: &'a Constants,
        streams: &'a mut Vec<ChaCha8Rng>,
        coins: &'a mut ChaCha8Rng,
        config: CollabConfig,
        mode: LedgerMode,
    ) -> Self {
        assert_eq!(streams.len(), config.agents, "one stream per agent");
        Sim {
            instance,
            consts,
            streams,
            coins,
            ledger: Ledger::new(config, mode),
        }
    }

    pub fn agents(&self) -> usize {
        self.ledger.agents()
    }

    /// Shared public coins (partitioning, subsampling, budget flips).
    pub fn coins(&mut self) -> &mut ChaCha8Rng {
        self.coins
    }

    /// One batched pull by `agent` on `arm`. `count == 0` touches nothing.
    pub fn pull(&mut self, agent: usize, arm: usize, count: u64) -> Result<u64> {
        if count == 0 {
            return Ok(0);
        }
        self.ledger.precheck(agent, count)?;
        let successes = binomial_sum(&mut self.streams[agent], count, self.instance.mean(arm));
        self.ledger.record(agent, arm, count, successes);
        Ok(successes)
    }

    /// Pull through the reward flip `x -> 1 - x`.
    pub fn pull_flipped(&mut self, agent: usize, arm: usize, count: u64) -> Result<u64> {
        let s = self.pull(agent, arm, count)?;
        Ok(count - s)
    }

    /// Single-agent pulling handle implementing [`ArmPull`].
    pub fn agent(&mut self, agent: usize) -> AgentView<'_, 'a> {
        AgentView { sim: self, agent }
    }

    /// Run `f` on a child simulation with its own `(horizon, cap)` budget,
    /// sharing agents (streams) and coins. The child ledger is sealed and
    /// returned for parallel absorption.
    pub fn child_run<R>(
        &mut self,
        horizon: u64,
        round_cap: usize,
        f: impl FnOnce(&mut Sim<'_>) -> R,
    ) -> (R, Ledger) {
        let config = CollabConfig {
            agents: self.ledger.agents(),
            horizon: horizon.max(1),
            round_cap: round_cap.max(1),
        };
        let mode = self.ledger.mode();
        let mut child = Sim {
            instance: self.instance,
            consts: self.consts,
            streams: &mut *self.streams,
            coins: &mut *self.coins,
            ledger: Ledger::new(config, mode),
        };
        let out = f(&mut child);
        let mut ledger = child.ledger;
        ledger.seal();
        (out, ledger)
    }
}

/// Borrowed single-agent pulling handle.
pub struct AgentView<'s, 'a> {
    sim: &'s mut Sim<'a>,
    agent: usize,
}

impl ArmPull for AgentView<'_, '_> {
    fn pull(&mut self, arm: usize, count: u64) -> Result<u64> {
        self.sim.pull(self.agent, arm, count)
    }
}

/// One `(round, agent)` transcript line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub trial: u64,
    pub round: usize,
    pub agent: usize,
    /// `(arm, pulls, successes)` for every arm this agent touched.
    pub pulls: Vec<(u32, u64, u64)>,
}

/// Flatten a full-mode ledger into JSONL-able records.
pub fn transcript_records(ledger: &Ledger, trial: u64) -> Vec<TranscriptRecord> {
    let mut out = Vec::new();
    for (round, rec) in ledger.rounds().iter().enumerate() {
        let Some(cells) = &rec.cells else { continue };
        let mut by_agent: HashMap<u32, Vec<(u32, u64, u64)>> = HashMap::new();
        for &(agent, arm, p, s) in cells {
            by_agent.entry(agent).or_default().push((arm, p, s));
        }
        let mut agents: Vec<u32> = by_agent.keys().copied().collect();
        agents.sort_unstable();
        for agent in agents {
            out.push(TranscriptRecord {
                trial,
                round,
                agent: agent as usize,
                pulls: by_agent.remove(&agent).unwrap(),
            });
        }
    }
    out
}

/// One trial's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub trial: u64,
    pub algo: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// Budget echo: the resolved horizon for fixed-time runs, the delta for
    /// fixed-confidence runs.
    pub budget: String,
    pub returned: BTreeSet<usize>,
    pub rounds_used: usize,
    pub time_used: u64,
    pub per_agent_pulls: Vec<u64>,
    pub correct: bool,
    /// The run hit its arbitrary-answer path (no verified stage).
    pub fallback: bool,
    pub error: Option<String>,
    pub seed: u64,
}
