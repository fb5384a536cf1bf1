//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a JSON string; errors come back as a thrown string.
//! The plain `*_json` functions hold the logic so they can be tested natively.

use dasco_core::envs::{behavior_policy_action, corrupt_action, CorruptionProfile, Maze, Variant};
use dasco_core::theory::{kkt_check, solve_dual_greedy, solve_single_generator, DiscreteProblem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("{what}: `{t}` is not a number")))
        .collect()
}

#[derive(Serialize)]
struct SolveOut {
    p_data: Vec<f64>,
    f: Vec<f64>,
    single_p_g: Vec<f64>,
    single_expected_f: f64,
    kkt_violation: f64,
    dual_p_g: Vec<f64>,
    dual_p_aux: Vec<f64>,
    dual_mixture: Vec<f64>,
    dual_expected_f: f64,
    data_expected_f: f64,
}

/// Solves the single- and dual-generator problems for comma-separated
/// `p_data` and `f`. With `maximize` the objective is taken as a reward.
pub fn solve_json(p_data: &str, f: &str, maximize: bool) -> Result<String, String> {
    let p = parse_list(p_data, "p_data")?;
    let fv = parse_list(f, "f")?;
    let prob = if maximize {
        DiscreteProblem::maximizing(p.clone(), fv.clone())
    } else {
        DiscreteProblem::new(p.clone(), fv.clone())
    }
    .map_err(|e| e.to_string())?;
    let single = solve_single_generator(&prob).map_err(|e| e.to_string())?;
    let kkt = kkt_check(&prob, &single);
    let dual = solve_dual_greedy(&prob);
    let expect = |q: &[f64]| q.iter().zip(&fv).map(|(a, b)| a * b).sum::<f64>();
    let out = SolveOut {
        single_expected_f: expect(&single.p_g),
        dual_expected_f: expect(&dual.p_g),
        data_expected_f: expect(&p),
        dual_mixture: dual.mixture(),
        p_data: p,
        f: fv,
        single_p_g: single.p_g,
        kkt_violation: kkt.max_violation,
        dual_p_g: dual.p_g,
        dual_p_aux: dual.p_aux,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Band {
    from: f32,
    to: f32,
    noise: f32,
    bias: f32,
}

#[derive(Serialize)]
struct RolloutOut {
    layout: Vec<String>,
    cell_size: f32,
    width: f32,
    height: f32,
    goal: [f32; 2],
    path: Vec<[f32; 2]>,
    reached_goal: bool,
    steps: usize,
    bands: Vec<Band>,
}

fn bands(profile: &CorruptionProfile, width: f32) -> Vec<Band> {
    let n = profile.positions.len();
    (0..n)
        .map(|i| Band {
            from: if i == 0 { 0.0 } else { profile.positions[i].max(0.0) },
            to: if i + 1 < n {
                profile.positions[i + 1].min(width)
            } else {
                width
            },
            noise: profile.noises[i],
            bias: profile.biases[i],
        })
        .filter(|b| b.to > b.from)
        .collect()
}

/// One scripted-controller episode on a named maze, with the dataset's
/// corruption applied, plus the corruption bands along x.
pub fn rollout_json(maze: &str, variant: &str, seed: u64) -> Result<String, String> {
    let m = Maze::named(maze).map_err(|e| e.to_string())?;
    let variant: Variant = variant.parse().map_err(|e: dasco_core::Error| e.to_string())?;
    let profile = CorruptionProfile::scaled_to(m.width());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = m.reset(&mut rng);
    let mut path = vec![state.pos];
    let reached = loop {
        let clean = behavior_policy_action(&m, &state).map_err(|e| e.to_string())?;
        let action = corrupt_action(clean, state.pos[0], &profile, variant, &mut rng);
        let out = m.step(state, action);
        state = out.next;
        path.push(state.pos);
        if out.done() {
            break out.reached_goal;
        }
    };
    let out = RolloutOut {
        layout: m.spec().layout.clone(),
        cell_size: m.cell_size(),
        width: m.width(),
        height: m.height(),
        goal: m.goal_center(),
        steps: path.len() - 1,
        path,
        reached_goal: reached,
        bands: bands(&profile, m.width()),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn solve(p_data: &str, f: &str, maximize: bool) -> Result<String, JsValue> {
    solve_json(p_data, f, maximize).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn rollout(maze: &str, variant: &str, seed: u64) -> Result<String, JsValue> {
    rollout_json(maze, variant, seed).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_matches_the_two_point_example() {
        let v: serde_json::Value = serde_json::from_str(&solve_json("0.5, 0.5", "1.3,0.7", true).unwrap()).unwrap();
        assert_eq!(v["dual_p_g"], serde_json::json!([1.0, 0.0]));
        assert!((v["dual_expected_f"].as_f64().unwrap() - 1.3).abs() < 1e-12);
        assert!((v["single_expected_f"].as_f64().unwrap() - 1.15).abs() < 0.01);
        assert!(v["kkt_violation"].as_f64().unwrap() < 1e-6);
    }

    #[test]
    fn solve_rejects_bad_input() {
        assert!(solve_json("0.5,x", "1,2", true).unwrap_err().contains("not a number"));
        assert!(solve_json("0.5,0.4", "1,2", true).is_err());
        assert!(solve_json("0.5,0.5", "1", true).is_err());
    }

    #[test]
    fn clean_rollout_reaches_goal_and_stays_in_bounds() {
        let v: serde_json::Value = serde_json::from_str(&rollout_json("toy-open", "clean", 3).unwrap()).unwrap();
        assert_eq!(v["reached_goal"], true);
        let w = v["width"].as_f64().unwrap();
        for p in v["path"].as_array().unwrap() {
            let x = p[0].as_f64().unwrap();
            assert!((0.0..=w).contains(&x));
        }
        let bands = v["bands"].as_array().unwrap();
        assert!(!bands.is_empty());
        assert_eq!(bands.last().unwrap()["to"].as_f64().unwrap(), w);
    }

    #[test]
    fn rollouts_are_seeded() {
        assert_eq!(
            rollout_json("toy-medium", "noisy", 9),
            rollout_json("toy-medium", "noisy", 9)
        );
        assert!(rollout_json("toy-medium", "wobbly", 9).is_err());
        assert!(rollout_json("nowhere", "clean", 9).is_err());
    }
}
