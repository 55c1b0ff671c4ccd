//! One seeded replica: agents, world, and the per-step loop.

use crate::advising::{advising_step, AdviceAudit, AdvisingParams};
use crate::agent::Agent;
use crate::baselines::{rl_step, sarl_step, SarlParams};
use crate::env::grid::{GridWorld, Move};
use crate::env::load::{LoadDecision, LoadWorld};
use crate::error::Result;
use crate::learning::{select_action, LearnerParams, StateVec};
use crate::numerics::RngStream;

use super::config::{ExperimentConfig, Method, Scenario};

/// Per-round record of one replica.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub method: Method,
    pub run_id: u64,
    pub round_id: usize,
    pub steps_total: u64,
    pub targets_achieved: u64,
    /// `steps_total / targets_achieved`; NaN when nothing was achieved.
    pub steps_per_target: f64,
    pub hits: u64,
    /// Reward per agent per step over the round.
    pub mean_reward: f64,
    /// Broadcast requests sent this round, summed over agents.
    pub asks: u64,
    /// Replies sent this round, summed over agents.
    pub gives: u64,
    /// Remaining budget at round end, summed over agents.
    pub budget_left: u64,
}

/// End-of-run communication totals for one agent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AgentSummary {
    pub asks: u64,
    pub gives: u64,
    pub self_advice: u64,
    pub budget_total: u64,
    pub budget_left: u64,
}

impl AgentSummary {
    /// Every spent unit is accounted for by an ask or a reply.
    pub fn budget_balanced(&self) -> bool {
        self.asks + self.gives == self.budget_total - self.budget_left
            && self.asks + self.gives <= self.budget_total
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaResult {
    pub run_id: u64,
    pub rows: Vec<MetricsRow>,
    pub agents: Vec<AgentSummary>,
}

fn build_agents(cfg: &ExperimentConfig, replica_id: u64) -> Result<Vec<Agent<f64>>> {
    (0..cfg.agents)
        .map(|i| {
            let learner = LearnerParams::new(cfg.alpha, cfg.gamma, cfg.zeta)?;
            let advising = AdvisingParams::new(
                cfg.epsilon,
                cfg.effective_delta_q(),
                cfg.ask_threshold,
                cfg.budget,
            )?;
            let rng = RngStream::for_lane(cfg.seed, replica_id, i as u64 + 1);
            Agent::new(i, cfg.action_count(), cfg.policy_floor, learner, advising, rng)
        })
        .collect()
}

/// Chooses an action for `agents[i]` in `s` according to the method.
fn decide(
    method: Method,
    agents: &mut [Agent<f64>],
    i: usize,
    reachable: &[usize],
    s: &StateVec,
    sarl: &SarlParams,
) -> Result<(usize, AdviceAudit)> {
    match method {
        Method::Rl => Ok((rl_step(&mut agents[i], s), AdviceAudit::default())),
        Method::SaRl => Ok(sarl_step(agents, i, reachable, s, sarl)),
        Method::DaRl => {
            let plan = advising_step(agents, i, reachable, s)?;
            let a = select_action(&plan.policy, &mut agents[i].rng);
            Ok((a, plan.audit))
        }
    }
}

struct RoundTally {
    steps: u64,
    targets: u64,
    hits: u64,
    reward: f64,
    agent_steps: u64,
}

fn comm_totals(agents: &[Agent<f64>]) -> (u64, u64, u64) {
    agents.iter().fold((0, 0, 0), |(a, g, b), ag| {
        (a + ag.ledger.asks, g + ag.ledger.gives, b + ag.advising.budget_left())
    })
}

/// Runs every round of one replica. Deterministic in `(cfg, replica_id)`.
pub fn run_replica(cfg: &ExperimentConfig, replica_id: u64) -> Result<ReplicaResult> {
    cfg.validate()?;
    let mut agents = build_agents(cfg, replica_id)?;
    let mut world_rng = RngStream::for_lane(cfg.seed, replica_id, 0);
    let sarl = SarlParams::new(cfg.v_ask, cfg.v_give)?;
    let reachable: Vec<Vec<usize>> = (0..cfg.agents).map(|i| cfg.reachable(i)).collect();
    let mut load = match cfg.scenario {
        Scenario::Load => Some(LoadWorld::uniform(
            cfg.agents,
            cfg.item_types,
            cfg.max_stock,
            cfg.p_process,
            cfg.p_arrive,
        )?),
        Scenario::Grid => None,
    };

    let mut rows = Vec::with_capacity(cfg.rounds);
    for round_id in 0..cfg.rounds {
        let (asks0, gives0, _) = comm_totals(&agents);
        let tally = match load.as_mut() {
            None => grid_round(cfg, &mut agents, &reachable, &sarl, &mut world_rng)?,
            Some(world) => load_round(cfg, world, &mut agents, &reachable, &sarl, &mut world_rng)?,
        };
        let (asks1, gives1, budget_left) = comm_totals(&agents);
        rows.push(MetricsRow {
            method: cfg.method,
            run_id: replica_id,
            round_id,
            steps_total: tally.steps,
            targets_achieved: tally.targets,
            steps_per_target: if tally.targets > 0 {
                tally.steps as f64 / tally.targets as f64
            } else {
                f64::NAN
            },
            hits: tally.hits,
            mean_reward: if tally.agent_steps > 0 {
                tally.reward / tally.agent_steps as f64
            } else {
                0.0
            },
            asks: asks1 - asks0,
            gives: gives1 - gives0,
            budget_left,
        });
    }

    let agents = agents
        .iter()
        .map(|a| AgentSummary {
            asks: a.ledger.asks,
            gives: a.ledger.gives,
            self_advice: a.ledger.self_advice,
            budget_total: a.advising.budget_total(),
            budget_left: a.advising.budget_left(),
        })
        .collect();
    Ok(ReplicaResult {
        run_id: replica_id,
        rows,
        agents,
    })
}

fn grid_round(
    cfg: &ExperimentConfig,
    agents: &mut [Agent<f64>],
    reachable: &[Vec<usize>],
    sarl: &SarlParams,
    world_rng: &mut RngStream,
) -> Result<RoundTally> {
    let mut world = GridWorld::generate(
        cfg.width,
        cfg.height,
        cfg.agents,
        cfg.targets,
        cfg.obstacles,
        cfg.dynamics(),
        world_rng,
    )?;
    let n = agents.len();
    let mut tally = RoundTally {
        steps: 0,
        targets: 0,
        hits: 0,
        reward: 0.0,
        agent_steps: 0,
    };
    let mut states: Vec<StateVec> = (0..n).map(|i| world.observe(i)).collect();
    let mut actions = vec![0usize; n];
    let mut moves = vec![Move::Up; n];
    while !world.round_done() && (tally.steps as usize) < cfg.max_round_steps {
        for (agent, s) in agents.iter_mut().zip(&states) {
            agent.observe(s);
        }
        for i in 0..n {
            let (a, _) = decide(cfg.method, agents, i, &reachable[i], &states[i], sarl)?;
            actions[i] = a;
            moves[i] = Move::from_index(a);
        }
        let outcomes = world.step(&moves, world_rng)?;
        let done = world.round_done();
        tally.steps += 1;
        for i in 0..n {
            let o = outcomes[i];
            tally.hits += o.hit as u64;
            tally.targets += o.achieved as u64;
            tally.reward += o.reward;
            tally.agent_steps += 1;
            let next = world.observe(i);
            agents[i].learn(&states[i], actions[i], o.reward, (!done).then_some(&next));
            states[i] = next;
        }
    }
    Ok(tally)
}

fn load_round(
    cfg: &ExperimentConfig,
    world: &mut LoadWorld,
    agents: &mut [Agent<f64>],
    reachable: &[Vec<usize>],
    sarl: &SarlParams,
    world_rng: &mut RngStream,
) -> Result<RoundTally> {
    let n = agents.len();
    let mut tally = RoundTally {
        steps: 0,
        targets: 0,
        hits: 0,
        reward: 0.0,
        agent_steps: 0,
    };
    for _ in 0..cfg.round_length {
        let arrivals = world.arrivals(world_rng);
        let mut decisions = vec![None; n];
        let mut pending: Vec<(usize, StateVec, usize)> = Vec::new();
        for i in 0..n {
            if arrivals[i].is_none() {
                continue;
            }
            let s = world.observe(i);
            agents[i].observe(&s);
            let (a, _) = decide(cfg.method, agents, i, &reachable[i], &s, sarl)?;
            decisions[i] = Some(LoadDecision::from_index(a));
            pending.push((i, s, a));
        }
        let rewards = world.resolve(&arrivals, &decisions, world_rng)?;
        for (i, s, a) in pending {
            let next = world.observe(i);
            agents[i].learn(&s, a, rewards[i], Some(&next));
        }
        tally.steps += 1;
        tally.reward += rewards.iter().sum::<f64>();
        tally.agent_steps += n as u64;
    }
    Ok(tally)
}
