//! Target-collection grid world with obstacles.
//!
//! Agents see the 8 cells around them and move in four directions. Reaching a
//! target pays +10 and removes it, bumping into an obstacle costs 5 and the
//! agent stays put. Walls and other agents block without penalty.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::learning::StateVec;
use crate::numerics::RngStream;

pub const TARGET_REWARD: f64 = 10.0;
pub const OBSTACLE_REWARD: f64 = -5.0;
pub const STEP_REWARD: f64 = 0.0;

/// Observation codes.
pub const OBS_EMPTY: i32 = 0;
pub const OBS_OBSTACLE: i32 = 1;
pub const OBS_TARGET: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Obstacle,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridSetting {
    /// Fixed targets.
    Static,
    /// New targets appear at random empty cells.
    Dynamic1,
    /// Targets wander to adjacent empty cells.
    Dynamic2,
}

impl FromStr for GridSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(Self::Static),
            "dynamic1" => Ok(Self::Dynamic1),
            "dynamic2" => Ok(Self::Dynamic2),
            other => Err(Error::param(format!("unknown grid setting `{other}`"))),
        }
    }
}

impl fmt::Display for GridSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Static => "static",
            Self::Dynamic1 => "dynamic1",
            Self::Dynamic2 => "dynamic2",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn from_index(i: usize) -> Move {
        Self::ALL[i]
    }

    fn delta(self) -> (i64, i64) {
        match self {
            Move::Up => (0, -1),
            Move::Down => (0, 1),
            Move::Left => (-1, 0),
            Move::Right => (1, 0),
        }
    }
}

/// Observation order: N, NE, E, SE, S, SW, W, NW (y grows downwards).
const RING: [(i64, i64); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub hit: bool,
    pub achieved: bool,
}

/// Dynamics parameters of a setting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dynamics {
    pub setting: GridSetting,
    pub p_spawn: f64,
    pub p_move: f64,
}

impl Dynamics {
    pub fn fixed() -> Self {
        Self {
            setting: GridSetting::Static,
            p_spawn: 0.0,
            p_move: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridWorld {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    positions: Vec<(usize, usize)>,
    dynamics: Dynamics,
    initial_target_count: usize,
    spawned: usize,
}

impl GridWorld {
    /// Builds a world from a text map of `.` (empty), `#` (obstacle) and `T`
    /// (target) rows, with agents at the given `(x, y)` cells.
    pub fn from_map(text: &str, agents: &[(usize, usize)], dynamics: Dynamics) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "empty map".into(),
            });
        }
        let width = rows[0].chars().count();
        let mut cells = Vec::with_capacity(width * rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("row width {} differs from {width}", row.chars().count()),
                });
            }
            for c in row.chars() {
                cells.push(match c {
                    '.' => Cell::Empty,
                    '#' => Cell::Obstacle,
                    'T' => Cell::Target,
                    other => {
                        return Err(Error::Parse {
                            line: i + 1,
                            message: format!("unknown map character `{other}`"),
                        })
                    }
                });
            }
        }
        let height = rows.len();
        let mut world = Self {
            width,
            height,
            cells,
            positions: Vec::new(),
            dynamics,
            initial_target_count: 0,
            spawned: 0,
        };
        for (i, &(x, y)) in agents.iter().enumerate() {
            if x >= width || y >= height {
                return Err(Error::param(format!("agent {i} placed off the map at ({x},{y})")));
            }
            if world.cell(x, y) != Cell::Empty || world.agent_at(x, y).is_some() {
                return Err(Error::param(format!("agent {i} placed on an occupied cell ({x},{y})")));
            }
            world.positions.push((x, y));
        }
        world.initial_target_count = world.target_count();
        Ok(world)
    }

    /// Random layout with every target reachable from every agent. Layouts
    /// failing the flood-fill check are redrawn.
    pub fn generate(
        width: usize,
        height: usize,
        agents: usize,
        targets: usize,
        obstacles: usize,
        dynamics: Dynamics,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let n = width * height;
        if width == 0 || height == 0 || agents + targets + obstacles > n {
            return Err(Error::param(format!(
                "{agents} agents, {targets} targets and {obstacles} obstacles do not fit a {width}x{height} grid"
            )));
        }
        const MAX_ATTEMPTS: usize = 10_000;
        for _ in 0..MAX_ATTEMPTS {
            let mut order: Vec<usize> = (0..n).collect();
            // partial Fisher-Yates over the cells we need
            let need = agents + targets + obstacles;
            for i in 0..need {
                let j = i + rng.index(n - i);
                order.swap(i, j);
            }
            let mut cells = vec![Cell::Empty; n];
            for &c in &order[..obstacles] {
                cells[c] = Cell::Obstacle;
            }
            for &c in &order[obstacles..obstacles + targets] {
                cells[c] = Cell::Target;
            }
            let positions = order[obstacles + targets..need]
                .iter()
                .map(|&c| (c % width, c / width))
                .collect();
            let world = Self {
                width,
                height,
                cells,
                positions,
                dynamics,
                initial_target_count: targets,
                spawned: 0,
            };
            if world.all_targets_reachable() {
                return Ok(world);
            }
        }
        Err(Error::param("could not generate a layout with reachable targets"))
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn agent_count(&self) -> usize {
        self.positions.len()
    }

    pub fn position(&self, agent: usize) -> (usize, usize) {
        self.positions[agent]
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn cell(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.width + x]
    }

    pub fn target_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == Cell::Target).count()
    }

    pub fn obstacle_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == Cell::Obstacle).count()
    }

    pub fn initial_target_count(&self) -> usize {
        self.initial_target_count
    }

    pub fn spawned(&self) -> usize {
        self.spawned
    }

    fn agent_at(&self, x: usize, y: usize) -> Option<usize> {
        self.positions.iter().position(|&p| p == (x, y))
    }

    fn shifted(&self, x: usize, y: usize, dx: i64, dy: i64) -> Option<(usize, usize)> {
        let nx = x as i64 + dx;
        let ny = y as i64 + dy;
        if nx < 0 || ny < 0 || nx >= self.width as i64 || ny >= self.height as i64 {
            None
        } else {
            Some((nx as usize, ny as usize))
        }
    }

    /// Every non-obstacle cell containing a target is connected (4-way,
    /// through non-obstacle cells) to every agent.
    pub fn all_targets_reachable(&self) -> bool {
        let Some(&(sx, sy)) = self.positions.first() else {
            return self.target_count() == 0;
        };
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([(sx, sy)]);
        seen[sy * self.width + sx] = true;
        while let Some((x, y)) = queue.pop_front() {
            for m in Move::ALL {
                let (dx, dy) = m.delta();
                if let Some((nx, ny)) = self.shifted(x, y, dx, dy) {
                    let idx = ny * self.width + nx;
                    if !seen[idx] && self.cells[idx] != Cell::Obstacle {
                        seen[idx] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
        }
        let targets_ok = self
            .cells
            .iter()
            .zip(&seen)
            .all(|(&c, &s)| c != Cell::Target || s);
        let agents_ok = self
            .positions
            .iter()
            .all(|&(x, y)| seen[y * self.width + x]);
        targets_ok && agents_ok
    }

    /// 8-cell observation of `agent`. Off-grid cells and other agents read
    /// as obstacles.
    pub fn observe(&self, agent: usize) -> StateVec {
        let (x, y) = self.positions[agent];
        StateVec::new(RING.iter().map(|&(dx, dy)| match self.shifted(x, y, dx, dy) {
            None => OBS_OBSTACLE,
            Some((nx, ny)) => {
                if self.agent_at(nx, ny).is_some() {
                    OBS_OBSTACLE
                } else {
                    match self.cell(nx, ny) {
                        Cell::Empty => OBS_EMPTY,
                        Cell::Obstacle => OBS_OBSTACLE,
                        Cell::Target => OBS_TARGET,
                    }
                }
            }
        }))
    }

    /// Resolves one joint move in ascending agent order, then applies the
    /// setting's target dynamics.
    pub fn step(&mut self, actions: &[Move], rng: &mut RngStream) -> Result<Vec<StepOutcome>> {
        if actions.len() != self.positions.len() {
            return Err(Error::param(format!(
                "expected {} actions, got {}",
                self.positions.len(),
                actions.len()
            )));
        }
        let mut out = vec![StepOutcome::default(); actions.len()];
        for (i, &m) in actions.iter().enumerate() {
            let (x, y) = self.positions[i];
            let (dx, dy) = m.delta();
            let Some((nx, ny)) = self.shifted(x, y, dx, dy) else {
                out[i].reward = STEP_REWARD;
                continue;
            };
            if self.agent_at(nx, ny).is_some() {
                out[i].reward = STEP_REWARD;
                continue;
            }
            let idx = ny * self.width + nx;
            match self.cells[idx] {
                Cell::Obstacle => {
                    out[i].reward = OBSTACLE_REWARD;
                    out[i].hit = true;
                }
                Cell::Target => {
                    self.cells[idx] = Cell::Empty;
                    self.positions[i] = (nx, ny);
                    out[i].reward = TARGET_REWARD;
                    out[i].achieved = true;
                }
                Cell::Empty => {
                    self.positions[i] = (nx, ny);
                    out[i].reward = STEP_REWARD;
                }
            }
        }
        match self.dynamics.setting {
            GridSetting::Static => {}
            GridSetting::Dynamic1 => self.spawn_target(rng),
            GridSetting::Dynamic2 => self.wander_targets(rng),
        }
        Ok(out)
    }

    fn free_for_target(&self, idx: usize) -> bool {
        self.cells[idx] == Cell::Empty && self.agent_at(idx % self.width, idx / self.width).is_none()
    }

    fn spawn_target(&mut self, rng: &mut RngStream) {
        if self.spawned >= self.initial_target_count || self.target_count() == 0 {
            return;
        }
        if !rng.bernoulli(self.dynamics.p_spawn) {
            return;
        }
        let free: Vec<usize> = (0..self.cells.len())
            .filter(|&i| self.free_for_target(i))
            .collect();
        if free.is_empty() {
            return;
        }
        let idx = free[rng.index(free.len())];
        self.cells[idx] = Cell::Target;
        self.spawned += 1;
    }

    fn wander_targets(&mut self, rng: &mut RngStream) {
        let targets: Vec<usize> = (0..self.cells.len())
            .filter(|&i| self.cells[i] == Cell::Target)
            .collect();
        for idx in targets {
            if !rng.bernoulli(self.dynamics.p_move) {
                continue;
            }
            let (x, y) = (idx % self.width, idx / self.width);
            let options: Vec<usize> = Move::ALL
                .iter()
                .filter_map(|m| {
                    let (dx, dy) = m.delta();
                    self.shifted(x, y, dx, dy)
                })
                .map(|(nx, ny)| ny * self.width + nx)
                .filter(|&i| self.free_for_target(i))
                .collect();
            if options.is_empty() {
                continue;
            }
            let dest = options[rng.index(options.len())];
            self.cells[idx] = Cell::Empty;
            self.cells[dest] = Cell::Target;
        }
    }

    /// A round is over once no target remains.
    pub fn round_done(&self) -> bool {
        self.target_count() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(map: &str, agents: &[(usize, usize)]) -> GridWorld {
        GridWorld::from_map(map, agents, Dynamics::fixed()).unwrap()
    }

    #[test]
    fn open_surroundings_observe_zero() {
        let w = world("...\n...\n...", &[(1, 1)]);
        assert_eq!(w.observe(0).dims(), &[0; 8]);
    }

    #[test]
    fn target_east_obstacle_south() {
        let w = world("...\n..T\n.#.", &[(1, 1)]);
        assert_eq!(w.observe(0).dims(), &[0, 0, 2, 0, 1, 0, 0, 0]);
    }

    #[test]
    fn corner_reads_walls_as_obstacles() {
        let w = world("...\n...\n...", &[(0, 0)]);
        // N, NE, E, SE, S, SW, W, NW
        assert_eq!(w.observe(0).dims(), &[1, 1, 0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn other_agents_read_as_obstacles() {
        let w = world("...\n...\n...", &[(1, 1), (2, 1)]);
        assert_eq!(w.observe(0).dims()[2], OBS_OBSTACLE);
    }

    #[test]
    fn reaching_target_pays_and_removes() {
        let mut w = world(".T\n..", &[(0, 0)]);
        let mut rng = RngStream::new(0, 0);
        let out = w.step(&[Move::Right], &mut rng).unwrap();
        assert_eq!(out[0].reward, TARGET_REWARD);
        assert!(out[0].achieved);
        assert_eq!(w.target_count(), 0);
        assert!(w.round_done());
        assert_eq!(w.position(0), (1, 0));
    }

    #[test]
    fn obstacle_hit_penalizes_and_blocks() {
        let mut w = world(".#\n.T", &[(0, 0)]);
        let mut rng = RngStream::new(0, 0);
        let out = w.step(&[Move::Right], &mut rng).unwrap();
        assert_eq!(out[0].reward, OBSTACLE_REWARD);
        assert!(out[0].hit);
        assert_eq!(w.position(0), (0, 0));
        assert!(!w.round_done());
    }

    #[test]
    fn wall_blocks_without_penalty() {
        let mut w = world("..\n.T", &[(0, 0)]);
        let mut rng = RngStream::new(0, 0);
        let out = w.step(&[Move::Up], &mut rng).unwrap();
        assert_eq!(out[0], StepOutcome::default());
        assert_eq!(w.position(0), (0, 0));
    }

    #[test]
    fn lower_id_wins_contested_cell() {
        let mut w = world("...\n.T.", &[(0, 0), (2, 0)]);
        let mut rng = RngStream::new(0, 0);
        let out = w.step(&[Move::Right, Move::Left], &mut rng).unwrap();
        assert_eq!(w.position(0), (1, 0));
        assert_eq!(w.position(1), (2, 0));
        assert_eq!(out[1].reward, 0.0);
        assert!(!out[1].hit);
    }

    #[test]
    fn wrong_action_count_is_an_error() {
        let mut w = world("..\n.T", &[(0, 0)]);
        let mut rng = RngStream::new(0, 0);
        assert!(w.step(&[Move::Up, Move::Up], &mut rng).is_err());
    }

    #[test]
    fn map_parse_errors() {
        assert!(GridWorld::from_map("..\n...", &[], Dynamics::fixed()).is_err());
        assert!(GridWorld::from_map(".x", &[], Dynamics::fixed()).is_err());
        assert!(GridWorld::from_map(".#", &[(1, 0)], Dynamics::fixed()).is_err());
    }

    #[test]
    fn generated_layouts_are_reachable() {
        let mut rng = RngStream::new(99, 0);
        for _ in 0..50 {
            let w = GridWorld::generate(12, 8, 2, 20, 15, Dynamics::fixed(), &mut rng).unwrap();
            assert_eq!(w.target_count(), 20);
            assert_eq!(w.obstacle_count(), 15);
            assert!(w.all_targets_reachable());
            let (a, b) = (w.position(0), w.position(1));
            assert_ne!(a, b);
            assert_eq!(w.cell(a.0, a.1), Cell::Empty);
        }
        assert!(GridWorld::generate(2, 2, 1, 2, 2, Dynamics::fixed(), &mut rng).is_err());
    }

    #[test]
    fn unreachable_target_detected() {
        let w = world(".#T\n##.\n...", &[(0, 0)]);
        assert!(!w.all_targets_reachable());
    }

    #[test]
    fn dynamic1_spawn_is_capped() {
        let dynamics = Dynamics {
            setting: GridSetting::Dynamic1,
            p_spawn: 1.0,
            p_move: 0.0,
        };
        let mut w = GridWorld::from_map("T....\n.....\n.....", &[(4, 2)], dynamics).unwrap();
        let mut rng = RngStream::new(4, 0);
        for _ in 0..10 {
            w.step(&[Move::Up], &mut rng).unwrap();
        }
        assert_eq!(w.spawned(), 1);
        assert_eq!(w.target_count(), 2);
    }

    #[test]
    fn dynamic2_targets_move_but_never_multiply() {
        let dynamics = Dynamics {
            setting: GridSetting::Dynamic2,
            p_spawn: 0.0,
            p_move: 1.0,
        };
        let mut w = GridWorld::from_map("T....\n..#..\n....T", &[(2, 0)], dynamics).unwrap();
        let mut rng = RngStream::new(4, 0);
        let mut moved = false;
        for _ in 0..20 {
            let before = w.cells.clone();
            w.step(&[Move::Down], &mut rng).unwrap();
            assert_eq!(w.target_count(), 2);
            assert_eq!(w.obstacle_count(), 1);
            let (x, y) = w.position(0);
            assert_ne!(w.cell(x, y), Cell::Target);
            moved |= before != w.cells;
        }
        assert!(moved);
    }
}
