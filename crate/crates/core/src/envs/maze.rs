//! Continuous point-mass navigation on a grid of wall/free cells.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Free,
    Start,
    Goal,
}

impl Cell {
    pub fn is_wall(self) -> bool {
        self == Cell::Wall
    }
}

/// Layout plus scalar parameters. Layout rows use `#` wall, `.` free,
/// `S` start and `G` goal; row 0 is the smallest y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeSpec {
    pub name: String,
    pub layout: Vec<String>,
    pub cell_size: f32,
    pub max_episode_steps: usize,
}

/// Fraction of a cell travelled per step at full action.
pub const STEP_SCALE: f32 = 0.25;
/// Goal radius as a fraction of the cell size.
pub const GOAL_RADIUS: f32 = 0.5;

pub const TOY_OPEN: &[&str] = &["#####", "#S..#", "#...#", "#..G#", "#####"];

pub const TOY_MEDIUM: &[&str] = &[
    "########", "#S.#...#", "#..#.#.#", "#....#.#", "##.###.#", "#..#...#", "#.#..#G#", "########",
];

pub const TOY_LARGE: &[&str] = &[
    "############",
    "#S...#.....#",
    "#.##.#.###.#",
    "#.#..#...#.#",
    "#.#.####.#.#",
    "#...#....#.#",
    "###.#.####.#",
    "#...#.#....#",
    "#.###.#.####",
    "#.#...#...##",
    "#...#...#.G#",
    "############",
];

impl MazeSpec {
    pub fn named(name: &str) -> Result<Self> {
        let (layout, steps) = match name {
            "toy-open" => (TOY_OPEN, 60),
            "toy-medium" => (TOY_MEDIUM, 120),
            "toy-large" => (TOY_LARGE, 300),
            other => return Err(Error::Contract(format!("unknown maze `{other}`"))),
        };
        Ok(Self {
            name: name.to_string(),
            layout: layout.iter().map(|s| s.to_string()).collect(),
            cell_size: 1.0,
            max_episode_steps: steps,
        })
    }
}

/// Agent position and elapsed steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MazeState {
    pub pos: [f32; 2],
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next: MazeState,
    /// 1 inside the goal radius, else 0.
    pub reward: f32,
    pub reached_goal: bool,
    pub timed_out: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.reached_goal || self.timed_out
    }
}

#[derive(Debug, Clone)]
pub struct Maze {
    spec: MazeSpec,
    rows: usize,
    cols: usize,
    cells: Vec<Cell>,
    start_cells: Vec<(usize, usize)>,
    goal_cell: (usize, usize),
}

impl Maze {
    pub fn new(spec: MazeSpec) -> Result<Self> {
        let rows = spec.layout.len();
        let cols = spec.layout.first().map_or(0, |r| r.chars().count());
        if rows == 0 || cols == 0 {
            return Err(Error::Contract("empty layout".into()));
        }
        if !(spec.cell_size > 0.0) || spec.max_episode_steps == 0 {
            return Err(Error::Contract(
                "cell_size and max_episode_steps must be positive".into(),
            ));
        }
        let mut cells = Vec::with_capacity(rows * cols);
        let (mut starts, mut goals) = (Vec::new(), Vec::new());
        for (r, line) in spec.layout.iter().enumerate() {
            if line.chars().count() != cols {
                return Err(Error::Contract(format!("layout row {r} is not {cols} wide")));
            }
            for (c, ch) in line.chars().enumerate() {
                let cell = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Free,
                    'S' => {
                        starts.push((r, c));
                        Cell::Start
                    }
                    'G' => {
                        goals.push((r, c));
                        Cell::Goal
                    }
                    other => return Err(Error::Contract(format!("unknown layout char `{other}`"))),
                };
                cells.push(cell);
            }
        }
        if starts.is_empty() {
            return Err(Error::Contract("layout has no start cell".into()));
        }
        if goals.len() != 1 {
            return Err(Error::Contract(format!(
                "layout needs one goal cell, found {}",
                goals.len()
            )));
        }
        let maze = Self {
            spec,
            rows,
            cols,
            cells,
            start_cells: starts,
            goal_cell: goals[0],
        };
        for &s in &maze.start_cells {
            if maze.shortest_path(s).is_none() {
                return Err(Error::Contract(format!("goal unreachable from start cell {s:?}")));
            }
        }
        Ok(maze)
    }

    pub fn named(name: &str) -> Result<Self> {
        Self::new(MazeSpec::named(name)?)
    }

    pub fn spec(&self) -> &MazeSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.spec.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f32 {
        self.spec.cell_size
    }

    pub fn width(&self) -> f32 {
        self.cols as f32 * self.spec.cell_size
    }

    pub fn height(&self) -> f32 {
        self.rows as f32 * self.spec.cell_size
    }

    pub fn max_episode_steps(&self) -> usize {
        self.spec.max_episode_steps
    }

    pub fn cell(&self, rc: (usize, usize)) -> Cell {
        self.cells[rc.0 * self.cols + rc.1]
    }

    pub fn goal_cell(&self) -> (usize, usize) {
        self.goal_cell
    }

    pub fn start_cells(&self) -> &[(usize, usize)] {
        &self.start_cells
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.rows)
            .flat_map(|r| (0..self.cols).map(move |c| (r, c)))
            .filter(|&rc| !self.cell(rc).is_wall())
            .collect()
    }

    pub fn cell_center(&self, rc: (usize, usize)) -> [f32; 2] {
        let s = self.spec.cell_size;
        [(rc.1 as f32 + 0.5) * s, (rc.0 as f32 + 0.5) * s]
    }

    pub fn goal_center(&self) -> [f32; 2] {
        self.cell_center(self.goal_cell)
    }

    /// Cell containing a world position, `None` outside the grid.
    pub fn cell_of(&self, pos: [f32; 2]) -> Option<(usize, usize)> {
        let s = self.spec.cell_size;
        let (cx, cy) = ((pos[0] / s).floor(), (pos[1] / s).floor());
        if cx < 0.0 || cy < 0.0 || cx >= self.cols as f32 || cy >= self.rows as f32 {
            return None;
        }
        Some((cy as usize, cx as usize))
    }

    fn blocked(&self, pos: [f32; 2]) -> bool {
        self.cell_of(pos).is_none_or(|rc| self.cell(rc).is_wall())
    }

    /// Breadth-first shortest cell path from `from` to the goal, inclusive of
    /// both ends. Neighbors are expanded in the order up, down, left, right.
    pub fn shortest_path(&self, from: (usize, usize)) -> Option<Vec<(usize, usize)>> {
        if self.cell(from).is_wall() {
            return None;
        }
        let idx = |rc: (usize, usize)| rc.0 * self.cols + rc.1;
        let mut parent: Vec<Option<usize>> = vec![None; self.cells.len()];
        let mut seen = vec![false; self.cells.len()];
        let mut queue = VecDeque::from([from]);
        seen[idx(from)] = true;
        while let Some(rc) = queue.pop_front() {
            if rc == self.goal_cell {
                let mut path = vec![rc];
                let mut cur = idx(rc);
                while let Some(p) = parent[cur] {
                    path.push((p / self.cols, p % self.cols));
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            for next in self.neighbors(rc) {
                if !seen[idx(next)] {
                    seen[idx(next)] = true;
                    parent[idx(next)] = Some(idx(rc));
                    queue.push_back(next);
                }
            }
        }
        None
    }

    fn neighbors(&self, (r, c): (usize, usize)) -> impl Iterator<Item = (usize, usize)> + '_ {
        let cand = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
        cand.into_iter()
            .filter(move |&(rr, cc)| rr < self.rows && cc < self.cols && !self.cell((rr, cc)).is_wall())
    }

    /// Uniform position inside a random start cell, kept a quarter cell away
    /// from its edges.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> MazeState {
        let rc = self.start_cells[rng.random_range(0..self.start_cells.len())];
        self.jittered_state(rc, rng)
    }

    /// Like [`reset`](Self::reset) but starting from any free non-goal cell.
    pub fn reset_anywhere<R: Rng + ?Sized>(&self, rng: &mut R) -> MazeState {
        let cells: Vec<_> = self
            .free_cells()
            .into_iter()
            .filter(|&rc| rc != self.goal_cell)
            .collect();
        let rc = cells[rng.random_range(0..cells.len())];
        self.jittered_state(rc, rng)
    }

    fn jittered_state<R: Rng + ?Sized>(&self, rc: (usize, usize), rng: &mut R) -> MazeState {
        let center = self.cell_center(rc);
        let j = 0.25 * self.spec.cell_size;
        MazeState {
            pos: [center[0] + rng.random_range(-j..j), center[1] + rng.random_range(-j..j)],
            steps: 0,
        }
    }

    pub fn at_goal(&self, pos: [f32; 2]) -> bool {
        let g = self.goal_center();
        let (dx, dy) = (pos[0] - g[0], pos[1] - g[1]);
        (dx * dx + dy * dy).sqrt() <= GOAL_RADIUS * self.spec.cell_size
    }

    /// Moves by `cell_size * 0.25 * clip(action)`. Each axis is resolved on
    /// its own, x first, so blocked motion slides along walls.
    pub fn step(&self, state: MazeState, action: [f32; 2]) -> StepOutcome {
        let scale = self.spec.cell_size * STEP_SCALE;
        let a = [
            if action[0].is_finite() {
                action[0].clamp(-1.0, 1.0)
            } else {
                0.0
            },
            if action[1].is_finite() {
                action[1].clamp(-1.0, 1.0)
            } else {
                0.0
            },
        ];
        let mut pos = state.pos;
        let try_x = [pos[0] + scale * a[0], pos[1]];
        if !self.blocked(try_x) {
            pos = try_x;
        }
        let try_y = [pos[0], pos[1] + scale * a[1]];
        if !self.blocked(try_y) {
            pos = try_y;
        }
        let steps = state.steps + 1;
        let reached_goal = self.at_goal(pos);
        StepOutcome {
            next: MazeState { pos, steps },
            reward: if reached_goal { 1.0 } else { 0.0 },
            reached_goal,
            timed_out: !reached_goal && steps >= self.spec.max_episode_steps,
        }
    }

    /// `(x, y, goal_x, goal_y)` scaled to `[0, 1]` by the maze extents.
    pub fn observe(&self, state: &MazeState) -> [f32; 4] {
        let g = self.goal_center();
        let (w, h) = (self.width(), self.height());
        [state.pos[0] / w, state.pos[1] / h, g[0] / w, g[1] / h]
    }

    /// Inverse of [`observe`](Self::observe) for the position part.
    pub fn position_from_observation(&self, obs: &[f32]) -> [f32; 2] {
        [obs[0] * self.width(), obs[1] * self.height()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open() -> Maze {
        Maze::named("toy-open").unwrap()
    }

    #[test]
    fn zero_action_stays_put() {
        let m = open();
        let s = MazeState {
            pos: [1.5, 1.5],
            steps: 0,
        };
        let out = m.step(s, [0.0, 0.0]);
        assert_eq!(out.next.pos, s.pos);
        assert_eq!(out.reward, 0.0);
        assert!(!out.done());
    }

    #[test]
    fn pushing_into_wall_keeps_normal_component() {
        let m = open();
        // Cell (1, 1) has a wall above (row 0); push up-right.
        let s = MazeState {
            pos: [1.5, 1.1],
            steps: 0,
        };
        let out = m.step(s, [1.0, -1.0]);
        assert_eq!(out.next.pos[1], 1.1);
        assert!((out.next.pos[0] - 1.75).abs() < 1e-6);
    }

    #[test]
    fn corridor_traversal_takes_k_over_quarter_steps() {
        // Three cells to the right at full action: ceil(3 / 0.25) = 12 steps.
        let layout = ["#######", "#S...G#", "#######"];
        let spec = MazeSpec {
            name: "corridor".into(),
            layout: layout.iter().map(|s| s.to_string()).collect(),
            cell_size: 2.0,
            max_episode_steps: 100,
        };
        let m = Maze::new(spec).unwrap();
        let mut s = MazeState {
            pos: m.cell_center((1, 1)),
            steps: 0,
        };
        let target = m.cell_center((1, 4))[0];
        let mut n = 0;
        while s.pos[0] < target - 1e-4 {
            s = m.step(s, [1.0, 0.0]).next;
            n += 1;
        }
        assert_eq!(n, (3.0f32 / 0.25).ceil() as usize);
    }

    #[test]
    fn goal_and_timeout() {
        let m = open();
        let g = m.goal_center();
        let s = MazeState {
            pos: [g[0] - 0.6, g[1]],
            steps: 0,
        };
        let out = m.step(s, [1.0, 0.0]);
        assert!(out.reached_goal);
        assert_eq!(out.reward, 1.0);
        let late = MazeState {
            pos: [1.5, 1.5],
            steps: m.max_episode_steps() - 1,
        };
        assert!(m.step(late, [0.0, 0.0]).timed_out);
    }

    #[test]
    fn shipped_layouts_are_connected() {
        for name in ["toy-open", "toy-medium", "toy-large"] {
            let m = Maze::named(name).unwrap();
            for rc in m.free_cells() {
                assert!(m.shortest_path(rc).is_some(), "{name}: {rc:?} cut off");
            }
        }
        assert_eq!(Maze::named("toy-medium").unwrap().rows(), 8);
        assert_eq!(Maze::named("toy-large").unwrap().cols(), 12);
    }

    #[test]
    fn bad_layouts_rejected() {
        let mk = |rows: &[&str]| MazeSpec {
            name: "x".into(),
            layout: rows.iter().map(|s| s.to_string()).collect(),
            cell_size: 1.0,
            max_episode_steps: 10,
        };
        assert!(Maze::new(mk(&["#####", "#S#G#", "#####"])).is_err());
        assert!(Maze::new(mk(&["####", "#S.#", "###"])).is_err());
        assert!(Maze::new(mk(&["#####", "#S.G#", "#..G#", "#####"])).is_err());
        assert!(Maze::new(mk(&["#####", "#..G#", "#####"])).is_err());
    }

    #[test]
    fn observation_is_normalized() {
        let m = Maze::named("toy-medium").unwrap();
        let obs = m.observe(&MazeState {
            pos: [1.5, 1.5],
            steps: 0,
        });
        assert!(obs.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(m.position_from_observation(&obs), [1.5, 1.5]);
    }
}
