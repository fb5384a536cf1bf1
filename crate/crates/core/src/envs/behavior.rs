use super::maze::{Maze, MazeState};
use crate::{Error, Result};

/// Proportional gain in units of 1 / cell_size.
pub const WAYPOINT_GAIN: f32 = 2.0;

/// Center of the next cell on the shortest path to the goal, or the goal
/// center once the agent is inside the goal cell.
pub fn next_waypoint(maze: &Maze, state: &MazeState) -> Result<[f32; 2]> {
    let cell = maze
        .cell_of(state.pos)
        .ok_or_else(|| Error::Contract(format!("position {:?} outside the maze", state.pos)))?;
    let path = maze
        .shortest_path(cell)
        .ok_or_else(|| Error::Contract(format!("goal unreachable from cell {cell:?}")))?;
    Ok(maze.cell_center(*path.get(1).unwrap_or(&path[0])))
}

/// Scripted goal-reaching controller: `clip(k (waypoint - position))`.
pub fn behavior_policy_action(maze: &Maze, state: &MazeState) -> Result<[f32; 2]> {
    let wp = next_waypoint(maze, state)?;
    let k = WAYPOINT_GAIN / maze.cell_size();
    Ok([
        (k * (wp[0] - state.pos[0])).clamp(-1.0, 1.0),
        (k * (wp[1] - state.pos[1])).clamp(-1.0, 1.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::maze::MazeSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn maze(rows: &[&str]) -> Maze {
        Maze::new(MazeSpec {
            name: "t".into(),
            layout: rows.iter().map(|s| s.to_string()).collect(),
            cell_size: 1.0,
            max_episode_steps: 200,
        })
        .unwrap()
    }

    #[test]
    fn zero_action_at_goal_center() {
        let m = Maze::named("toy-open").unwrap();
        let s = MazeState {
            pos: m.goal_center(),
            steps: 0,
        };
        assert_eq!(behavior_policy_action(&m, &s).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn one_cell_left_of_goal_pushes_right() {
        let m = Maze::named("toy-open").unwrap();
        let g = m.goal_cell();
        let s = MazeState {
            pos: m.cell_center((g.0, g.1 - 1)),
            steps: 0,
        };
        assert_eq!(behavior_policy_action(&m, &s).unwrap(), [1.0, 0.0]);
    }

    #[test]
    fn heads_for_corner_around_l_wall() {
        // Goal is straight up from the start, but the wall forces a detour
        // through the right column.
        let m = maze(&[
            "#####", //
            "#G..#", //
            "###.#", //
            "#S..#", //
            "#####",
        ]);
        let s = MazeState {
            pos: m.cell_center((3, 1)),
            steps: 0,
        };
        let wp = next_waypoint(&m, &s).unwrap();
        assert_eq!(wp, m.cell_center((3, 2)));
        let a = behavior_policy_action(&m, &s).unwrap();
        assert_eq!(a, [1.0, 0.0]);
        // At the corner cell the controller turns toward the gap.
        let corner = MazeState {
            pos: m.cell_center((3, 3)),
            steps: 0,
        };
        assert_eq!(behavior_policy_action(&m, &corner).unwrap(), [0.0, -1.0]);
    }

    #[test]
    fn path_length_never_grows_on_clean_rollout() {
        for name in ["toy-open", "toy-medium", "toy-large"] {
            let m = Maze::named(name).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            for _ in 0..5 {
                let mut s = m.reset_anywhere(&mut rng);
                let mut last = usize::MAX;
                loop {
                    let len = m.shortest_path(m.cell_of(s.pos).unwrap()).unwrap().len();
                    assert!(len <= last, "{name}: path grew from {last} to {len}");
                    last = len;
                    let out = m.step(s, behavior_policy_action(&m, &s).unwrap());
                    s = out.next;
                    if out.done() {
                        assert!(out.reached_goal, "{name}: clean rollout timed out");
                        break;
                    }
                }
            }
        }
    }
}
