//! Multi-factory load balancing.
//!
//! Every step each factory may finish one stocked item and may receive one new
//! item of a random type. A factory that received an item either keeps it or
//! passes it to a random other factory at a cost of twice the item weight.
//! Reward is `50 - sum(w_i * m_i)` over the stock after the step, minus pass
//! costs.

use crate::error::{Error, Result};
use crate::learning::StateVec;
use crate::numerics::RngStream;

pub const BASE_REWARD: f64 = 50.0;
pub const PASS_COST_FACTOR: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LoadDecision {
    Keep,
    Pass,
}

impl LoadDecision {
    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Self::Keep
        } else {
            Self::Pass
        }
    }
}

/// Weights `5, 4, 3, ...` for `k` item types.
pub fn default_weights(k: usize) -> Vec<f64> {
    (0..k).map(|i| 5.0 - i as f64).collect()
}

#[derive(Clone, Debug)]
pub struct LoadWorld {
    max_stock: Vec<u32>,
    weights: Vec<f64>,
    p_process: f64,
    p_arrive: f64,
    stocks: Vec<Vec<u32>>,
}

impl LoadWorld {
    pub fn new(
        agents: usize,
        max_stock: Vec<u32>,
        weights: Vec<f64>,
        p_process: f64,
        p_arrive: f64,
    ) -> Result<Self> {
        if agents < 2 {
            return Err(Error::param("load balancing needs at least two agents"));
        }
        if max_stock.is_empty() || max_stock.len() != weights.len() {
            return Err(Error::param("max_stock and weights must be non-empty and equal length"));
        }
        for p in [p_process, p_arrive] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::param(format!("probability {p} outside [0, 1]")));
            }
        }
        let k = max_stock.len();
        Ok(Self {
            max_stock,
            weights,
            p_process,
            p_arrive,
            stocks: vec![vec![0; k]; agents],
        })
    }

    /// Same maximum stock `m` for every one of `k` types with default weights.
    pub fn uniform(agents: usize, k: usize, m: u32, p_process: f64, p_arrive: f64) -> Result<Self> {
        Self::new(agents, vec![m; k], default_weights(k), p_process, p_arrive)
    }

    pub fn agent_count(&self) -> usize {
        self.stocks.len()
    }

    pub fn item_types(&self) -> usize {
        self.max_stock.len()
    }

    pub fn max_stock(&self) -> &[u32] {
        &self.max_stock
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn stocks(&self, agent: usize) -> &[u32] {
        &self.stocks[agent]
    }

    pub fn set_stocks(&mut self, agent: usize, stock: Vec<u32>) -> Result<()> {
        if stock.len() != self.item_types()
            || stock.iter().zip(&self.max_stock).any(|(s, m)| s > m)
        {
            return Err(Error::param("stock vector out of range"));
        }
        self.stocks[agent] = stock;
        Ok(())
    }

    pub fn reset(&mut self) {
        for s in &mut self.stocks {
            s.iter_mut().for_each(|m| *m = 0);
        }
    }

    pub fn observe(&self, agent: usize) -> StateVec {
        StateVec::new(self.stocks[agent].iter().map(|&m| m as i32))
    }

    /// Backlog part of the reward, `50 - sum(w_i * m_i)`.
    pub fn backlog_reward(&self, agent: usize) -> f64 {
        BASE_REWARD
            - self.stocks[agent]
                .iter()
                .zip(&self.weights)
                .map(|(&m, &w)| w * f64::from(m))
                .sum::<f64>()
    }

    /// Processing and arrivals. Returns the arrived item type per agent.
    pub fn arrivals(&mut self, rng: &mut RngStream) -> Vec<Option<usize>> {
        let k = self.item_types();
        for stock in &mut self.stocks {
            let total: u32 = stock.iter().sum();
            if total > 0 && rng.bernoulli(self.p_process) {
                let mut pick = rng.index(total as usize) as u32;
                for m in stock.iter_mut() {
                    if pick < *m {
                        *m -= 1;
                        break;
                    }
                    pick -= *m;
                }
            }
        }
        (0..self.stocks.len())
            .map(|_| rng.bernoulli(self.p_arrive).then(|| rng.index(k)))
            .collect()
    }

    /// Applies keep/pass decisions for the arrivals and returns per-agent
    /// rewards. Every agent with an arrival needs a decision.
    pub fn resolve(
        &mut self,
        arrivals: &[Option<usize>],
        decisions: &[Option<LoadDecision>],
        rng: &mut RngStream,
    ) -> Result<Vec<f64>> {
        let n = self.stocks.len();
        if arrivals.len() != n || decisions.len() != n {
            return Err(Error::param("arrivals and decisions must cover every agent"));
        }
        let mut costs = vec![0.0; n];
        for i in 0..n {
            let Some(item) = arrivals[i] else { continue };
            let decision = decisions[i]
                .ok_or_else(|| Error::param(format!("agent {i} received an item but made no decision")))?;
            let dest = match decision {
                LoadDecision::Keep => i,
                LoadDecision::Pass => {
                    costs[i] += PASS_COST_FACTOR * self.weights[item];
                    let j = rng.index(n - 1);
                    if j >= i {
                        j + 1
                    } else {
                        j
                    }
                }
            };
            if self.stocks[dest][item] < self.max_stock[item] {
                self.stocks[dest][item] += 1;
            }
        }
        Ok((0..n).map(|i| self.backlog_reward(i) - costs[i]).collect())
    }

    /// Full step: arrivals, then decisions from `decide`, then resolution.
    pub fn step(
        &mut self,
        rng: &mut RngStream,
        mut decide: impl FnMut(usize, &StateVec) -> LoadDecision,
    ) -> Result<Vec<f64>> {
        let arrivals = self.arrivals(rng);
        let decisions: Vec<Option<LoadDecision>> = arrivals
            .iter()
            .enumerate()
            .map(|(i, a)| a.map(|_| decide(i, &self.observe(i))))
            .collect();
        self.resolve(&arrivals, &decisions, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_scheme() {
        assert_eq!(default_weights(2), vec![5.0, 4.0]);
        assert_eq!(default_weights(3), vec![5.0, 4.0, 3.0]);
    }

    #[test]
    fn empty_stock_no_events_pays_fifty() {
        let mut w = LoadWorld::uniform(2, 2, 3, 0.5, 0.4).unwrap();
        let mut rng = RngStream::new(0, 0);
        let r = w.resolve(&[None, None], &[None, None], &mut rng).unwrap();
        assert_eq!(r, vec![50.0, 50.0]);
        assert_eq!(w.observe(0).dims(), &[0, 0]);
    }

    #[test]
    fn backlog_reward_example() {
        let mut w = LoadWorld::uniform(2, 2, 3, 0.5, 0.4).unwrap();
        w.set_stocks(0, vec![2, 1]).unwrap();
        assert_eq!(w.backlog_reward(0), 36.0);
    }

    #[test]
    fn pass_costs_twice_the_weight() {
        let mut w = LoadWorld::uniform(2, 2, 3, 0.5, 0.4).unwrap();
        w.set_stocks(0, vec![2, 1]).unwrap();
        let mut rng = RngStream::new(0, 0);
        let r = w
            .resolve(&[Some(0), None], &[Some(LoadDecision::Pass), None], &mut rng)
            .unwrap();
        assert_eq!(r[0], 26.0);
        assert_eq!(w.stocks(1), &[1, 0]);
        assert_eq!(r[1], 45.0);
    }

    #[test]
    fn keep_when_full_discards() {
        let mut w = LoadWorld::uniform(2, 2, 3, 0.5, 0.4).unwrap();
        w.set_stocks(0, vec![3, 3]).unwrap();
        let mut rng = RngStream::new(0, 0);
        w.resolve(&[Some(1), None], &[Some(LoadDecision::Keep), None], &mut rng)
            .unwrap();
        assert_eq!(w.stocks(0), &[3, 3]);
    }

    #[test]
    fn missing_decision_is_an_error() {
        let mut w = LoadWorld::uniform(2, 2, 3, 0.5, 0.4).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert!(w.resolve(&[Some(0), None], &[None, None], &mut rng).is_err());
    }

    #[test]
    fn keeping_everything_never_exceeds_max() {
        let mut w = LoadWorld::uniform(3, 2, 3, 0.2, 1.0).unwrap();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..500 {
            let r = w.step(&mut rng, |_, _| LoadDecision::Keep).unwrap();
            for i in 0..3 {
                assert!(w.stocks(i).iter().all(|&m| m <= 3));
                assert!(r[i] <= 50.0);
            }
        }
    }
}
