//! Flat `key = value` experiment configuration.

use std::fmt;
use std::str::FromStr;

use crate::advising::advice_sensitivity;
use crate::env::grid::{Dynamics, GridSetting, OBSTACLE_REWARD, TARGET_REWARD};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Grid,
    Load,
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Self::Grid),
            "load" => Ok(Self::Load),
            other => Err(Error::config("scenario", format!("unknown scenario `{other}`"))),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Grid => "grid",
            Self::Load => "load",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    DaRl,
    SaRl,
    Rl,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::DaRl, Method::SaRl, Method::Rl];
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "da-rl" => Ok(Self::DaRl),
            "sa-rl" => Ok(Self::SaRl),
            "rl" => Ok(Self::Rl),
            other => Err(Error::config("method", format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::DaRl => "da-rl",
            Self::SaRl => "sa-rl",
            Self::Rl => "rl",
        })
    }
}

/// Which agents receive an advice broadcast.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// Every other agent.
    Complete,
    /// Only the two ring neighbors `i - 1` and `i + 1` (mod n).
    Ring,
}

impl FromStr for Topology {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Self::Complete),
            "ring" => Ok(Self::Ring),
            other => Err(Error::config("topology", format!("unknown topology `{other}`"))),
        }
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Complete => "complete",
            Self::Ring => "ring",
        })
    }
}

/// Every accepted key with its default and meaning, in file order.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("scenario", "grid", "grid (target collection) or load (load balancing)"),
    ("setting", "static", "grid dynamics: static, dynamic1 (spawning targets), dynamic2 (moving targets)"),
    ("method", "da-rl", "da-rl, sa-rl or rl"),
    ("width", "12", "grid width in cells"),
    ("height", "8", "grid height in cells"),
    ("agents", "2", "number of agents"),
    ("targets", "20", "initial targets per grid round"),
    ("obstacles", "15", "obstacles per grid round"),
    ("p_spawn", "0.02", "dynamic1: per-step probability a new target appears (total spawned <= targets)"),
    ("p_move", "0.1", "dynamic2: per-step probability each target moves to an adjacent empty cell"),
    ("item_types", "2", "load: number of item types k"),
    ("max_stock", "3", "load: maximum stock per item type"),
    ("p_process", "0.5", "load: per-step probability one stocked item is processed"),
    ("p_arrive", "0.4", "load: per-step probability an item arrives"),
    ("alpha", "0.2", "initial learning rate"),
    ("gamma", "0.8", "discount factor"),
    ("zeta", "0.1", "policy step size"),
    ("policy_floor", "0.01", "lower bound every policy entry is clipped to"),
    ("epsilon", "1", "privacy parameter of the Laplace mechanism"),
    ("delta_q", "auto", "advice sensitivity; auto = alpha*(10-(-5)) on grid, 1 on load"),
    ("ask_threshold", "3", "visits needed before an agent may ask for advice"),
    ("budget", "500", "communication budget per agent per run (asks plus replies)"),
    ("v_ask", "0.4", "sa-rl: larger values ask less often"),
    ("v_give", "0.9", "sa-rl: larger values give more often"),
    ("topology", "complete", "broadcast reach: complete or ring"),
    ("runs", "500", "independent replicas averaged per experiment"),
    ("rounds", "30", "learning rounds per replica"),
    ("round_length", "50", "load: steps per learning round"),
    ("max_round_steps", "20000", "grid: safety cap on steps in one round"),
    ("seed", "0", "master seed"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub setting: GridSetting,
    pub method: Method,
    pub width: usize,
    pub height: usize,
    pub agents: usize,
    pub targets: usize,
    pub obstacles: usize,
    pub p_spawn: f64,
    pub p_move: f64,
    pub item_types: usize,
    pub max_stock: u32,
    pub p_process: f64,
    pub p_arrive: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub zeta: f64,
    pub policy_floor: f64,
    pub epsilon: f64,
    /// `None` means derive from the scenario.
    pub delta_q: Option<f64>,
    pub ask_threshold: u64,
    pub budget: u64,
    pub v_ask: f64,
    pub v_give: f64,
    pub topology: Topology,
    pub runs: usize,
    pub rounds: usize,
    pub round_length: usize,
    pub max_round_steps: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut cfg = Self {
            scenario: Scenario::Grid,
            setting: GridSetting::Static,
            method: Method::DaRl,
            width: 0,
            height: 0,
            agents: 0,
            targets: 0,
            obstacles: 0,
            p_spawn: 0.0,
            p_move: 0.0,
            item_types: 0,
            max_stock: 0,
            p_process: 0.0,
            p_arrive: 0.0,
            alpha: 0.0,
            gamma: 0.0,
            zeta: 0.0,
            policy_floor: 0.0,
            epsilon: 0.0,
            delta_q: None,
            ask_threshold: 0,
            budget: 0,
            v_ask: 0.0,
            v_give: 0.0,
            topology: Topology::Complete,
            runs: 0,
            rounds: 0,
            round_length: 0,
            max_round_steps: 0,
            seed: 0,
        };
        for (key, default, _) in KEYS {
            cfg.set(key, default).expect("built-in defaults parse");
        }
        cfg
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

impl ExperimentConfig {
    /// Parses `key = value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "scenario" => self.scenario = value.parse()?,
            "setting" => {
                self.setting = value
                    .parse()
                    .map_err(|_| Error::config(key, format!("unknown setting `{value}`")))?
            }
            "method" => self.method = value.parse()?,
            "width" => self.width = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "grid_size" => {
                let (w, h) = value
                    .split_once('x')
                    .ok_or_else(|| Error::config(key, format!("expected WxH, got `{value}`")))?;
                self.width = parse(key, w.trim())?;
                self.height = parse(key, h.trim())?;
            }
            "agents" => self.agents = parse(key, value)?,
            "targets" => self.targets = parse(key, value)?,
            "obstacles" => self.obstacles = parse(key, value)?,
            "p_spawn" => self.p_spawn = parse(key, value)?,
            "p_move" => self.p_move = parse(key, value)?,
            "item_types" => self.item_types = parse(key, value)?,
            "max_stock" => self.max_stock = parse(key, value)?,
            "p_process" => self.p_process = parse(key, value)?,
            "p_arrive" => self.p_arrive = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "zeta" => self.zeta = parse(key, value)?,
            "policy_floor" => self.policy_floor = parse(key, value)?,
            "epsilon" => self.epsilon = parse(key, value)?,
            "delta_q" => {
                self.delta_q = if value == "auto" {
                    None
                } else {
                    Some(parse(key, value)?)
                }
            }
            "ask_threshold" => self.ask_threshold = parse(key, value)?,
            "budget" => self.budget = parse(key, value)?,
            "v_ask" => self.v_ask = parse(key, value)?,
            "v_give" => self.v_give = parse(key, value)?,
            "topology" => self.topology = value.parse()?,
            "runs" => self.runs = parse(key, value)?,
            "rounds" => self.rounds = parse(key, value)?,
            "round_length" => self.round_length = parse(key, value)?,
            "max_round_steps" => self.max_round_steps = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::config(key, format!("probability {v} outside [0, 1]")))
            }
        };
        let open_unit = |key: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("{v} outside (0, 1)")))
            }
        };
        let positive = |key: &str, v: usize| {
            if v > 0 {
                Ok(())
            } else {
                Err(Error::config(key, "must be positive"))
            }
        };
        prob("p_spawn", self.p_spawn)?;
        prob("p_move", self.p_move)?;
        prob("p_process", self.p_process)?;
        prob("p_arrive", self.p_arrive)?;
        open_unit("alpha", self.alpha)?;
        open_unit("gamma", self.gamma)?;
        open_unit("zeta", self.zeta)?;
        positive("agents", self.agents)?;
        positive("runs", self.runs)?;
        positive("rounds", self.rounds)?;
        positive("max_round_steps", self.max_round_steps)?;
        if self.ask_threshold == 0 {
            return Err(Error::config("ask_threshold", "must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        if let Some(d) = self.delta_q {
            if !(d > 0.0) {
                return Err(Error::config("delta_q", "must be positive"));
            }
        }
        if !(self.v_ask > 0.0) {
            return Err(Error::config("v_ask", "must be positive"));
        }
        if !(self.v_give > 0.0) {
            return Err(Error::config("v_give", "must be positive"));
        }
        let k = match self.scenario {
            Scenario::Grid => 4,
            Scenario::Load => 2,
        };
        if !(self.policy_floor > 0.0 && self.policy_floor * (k as f64) < 1.0) {
            return Err(Error::config("policy_floor", "need 0 < floor * actions < 1"));
        }
        match self.scenario {
            Scenario::Grid => {
                positive("width", self.width)?;
                positive("height", self.height)?;
                positive("targets", self.targets)?;
                if self.agents + self.targets + self.obstacles > self.width * self.height {
                    return Err(Error::config("obstacles", "agents, targets and obstacles exceed the grid"));
                }
            }
            Scenario::Load => {
                positive("item_types", self.item_types)?;
                positive("round_length", self.round_length)?;
                if self.max_stock == 0 {
                    return Err(Error::config("max_stock", "must be positive"));
                }
                if self.agents < 2 {
                    return Err(Error::config("agents", "load balancing needs at least two agents"));
                }
            }
        }
        Ok(())
    }

    /// Advice sensitivity in effect: explicit override, else the reward-range
    /// approximation on the grid and 1 for load balancing.
    pub fn effective_delta_q(&self) -> f64 {
        match (self.delta_q, self.scenario) {
            (Some(d), _) => d,
            (None, Scenario::Grid) => advice_sensitivity(self.alpha, TARGET_REWARD, OBSTACLE_REWARD)
                .expect("grid reward range is non-empty"),
            (None, Scenario::Load) => 1.0,
        }
    }

    pub fn dynamics(&self) -> Dynamics {
        Dynamics {
            setting: self.setting,
            p_spawn: self.p_spawn,
            p_move: self.p_move,
        }
    }

    pub fn action_count(&self) -> usize {
        match self.scenario {
            Scenario::Grid => 4,
            Scenario::Load => 2,
        }
    }

    /// Agents reached by a broadcast from `agent`, in ascending id order.
    pub fn reachable(&self, agent: usize) -> Vec<usize> {
        let n = self.agents;
        match self.topology {
            Topology::Complete => (0..n).filter(|&j| j != agent).collect(),
            Topology::Ring => {
                let mut v: Vec<usize> = [(agent + n - 1) % n, (agent + 1) % n]
                    .into_iter()
                    .filter(|&j| j != agent)
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }

    /// Renders the full configuration as `key = value` lines.
    pub fn to_text(&self) -> String {
        let delta_q = self
            .delta_q
            .map_or_else(|| "auto".to_string(), |d| d.to_string());
        let values: Vec<(&str, String)> = vec![
            ("scenario", self.scenario.to_string()),
            ("setting", self.setting.to_string()),
            ("method", self.method.to_string()),
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("agents", self.agents.to_string()),
            ("targets", self.targets.to_string()),
            ("obstacles", self.obstacles.to_string()),
            ("p_spawn", self.p_spawn.to_string()),
            ("p_move", self.p_move.to_string()),
            ("item_types", self.item_types.to_string()),
            ("max_stock", self.max_stock.to_string()),
            ("p_process", self.p_process.to_string()),
            ("p_arrive", self.p_arrive.to_string()),
            ("alpha", self.alpha.to_string()),
            ("gamma", self.gamma.to_string()),
            ("zeta", self.zeta.to_string()),
            ("policy_floor", self.policy_floor.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("delta_q", delta_q),
            ("ask_threshold", self.ask_threshold.to_string()),
            ("budget", self.budget.to_string()),
            ("v_ask", self.v_ask.to_string()),
            ("v_give", self.v_give.to_string()),
            ("topology", self.topology.to_string()),
            ("runs", self.runs.to_string()),
            ("rounds", self.rounds.to_string()),
            ("round_length", self.round_length.to_string()),
            ("max_round_steps", self.max_round_steps.to_string()),
            ("seed", self.seed.to_string()),
        ];
        values
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
