//! Random planar scenes.
//!
//! The workspace is `[0, 10]²` with the start on the left edge band and the
//! goal on the right. Obstacles are circles and boxes placed in the middle of
//! the map. Every pair of obstacles, and every obstacle and the map border,
//! is separated by at least the corridor width, so the free space stays
//! connected. Start and goal keep a clearance margin from every obstacle.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pisto::{Bounds, Obstacle, Scene64};
use rand::Rng;

const SIZE: f64 = 10.0;
const ENDPOINT_CLEARANCE: f64 = 0.6;
/// Placement attempts before the obstacles are cleared and placed anew.
const TRIES_PER_ROUND: usize = 2_000;
const MAX_ROUNDS: usize = 200;

pub const MAX_DIFFICULTY: u32 = 4;

/// Obstacle count and minimum corridor width for a difficulty level.
pub fn difficulty_params(difficulty: u32) -> (usize, f64) {
    match difficulty {
        0 => (0, f64::INFINITY),
        1 => (3, 1.0),
        2 => (6, 0.6),
        d => (3 * d as usize, 1.2 / d as f64),
    }
}

/// Lower bound on the distance between two obstacles, exact for circles and
/// conservative (bounding circle) otherwise.
fn gap(a: &Obstacle<f64>, b: &Obstacle<f64>) -> f64 {
    match (a, b) {
        (Obstacle::Circle { center: c1, radius: r1 }, Obstacle::Circle { center: c2, radius: r2 }) => {
            ((c1[0] - c2[0]).powi(2) + (c1[1] - c2[1]).powi(2)).sqrt() - r1 - r2
        }
        (Obstacle::Box { min: a0, max: a1 }, Obstacle::Box { min: b0, max: b1 }) => {
            let dx = (b0[0] - a1[0]).max(a0[0] - b1[0]).max(0.0);
            let dy = (b0[1] - a1[1]).max(a0[1] - b1[1]).max(0.0);
            let d = (dx * dx + dy * dy).sqrt();
            if dx == 0.0 && dy == 0.0 {
                -1.0
            } else {
                d
            }
        }
        (Obstacle::Circle { center, radius }, o @ Obstacle::Box { .. })
        | (o @ Obstacle::Box { .. }, Obstacle::Circle { center, radius }) => o.sdf(*center) - radius,
    }
}

fn border_gap(o: &Obstacle<f64>) -> f64 {
    let (lo, hi) = match o {
        Obstacle::Circle { center, radius } => {
            ([center[0] - radius, center[1] - radius], [center[0] + radius, center[1] + radius])
        }
        Obstacle::Box { min, max } => (*min, *max),
    };
    lo[0].min(lo[1]).min(SIZE - hi[0]).min(SIZE - hi[1])
}

fn random_obstacle<R: Rng>(rng: &mut R) -> Obstacle<f64> {
    let cx = rng.random_range(2.5..7.5);
    let cy = rng.random_range(2.0..8.0);
    if rng.random_bool(0.5) {
        Obstacle::Circle { center: [cx, cy], radius: rng.random_range(0.5..1.2) }
    } else {
        let hx = rng.random_range(0.4..1.0);
        let hy = rng.random_range(0.4..1.0);
        Obstacle::Box { min: [cx - hx, cy - hy], max: [cx + hx, cy + hy] }
    }
}

/// One scene; deterministic in `(seed, index, difficulty)`.
pub fn generate_scene(seed: u64, index: u64, difficulty: u32) -> Result<Scene64> {
    if difficulty > MAX_DIFFICULTY {
        bail!("difficulty must be between 0 and {MAX_DIFFICULTY}, got {difficulty}");
    }
    let mut rng = pisto::sample_rng(seed, u64::from(difficulty), index);
    let (n_obstacles, corridor) = difficulty_params(difficulty);
    let start = [rng.random_range(0.5..1.5), rng.random_range(2.0..8.0)];
    let goal = [rng.random_range(8.5..9.5), rng.random_range(2.0..8.0)];
    let mut scene = Scene64 {
        bounds: Bounds { min: [0.0, 0.0], max: [SIZE, SIZE] },
        start,
        goal,
        delta: 0.2,
        w_obs: 100.0,
        sigma_obs: 100.0,
        obstacles: Vec::with_capacity(n_obstacles),
    };
    let (mut tries, mut rounds) = (0, 0);
    // Put the first obstacle on the straight line so the scene is never trivially solved.
    let mut on_line = n_obstacles > 0;
    while scene.obstacles.len() < n_obstacles {
        tries += 1;
        if tries > TRIES_PER_ROUND {
            rounds += 1;
            if rounds >= MAX_ROUNDS {
                bail!("scene {index}: could not place {n_obstacles} obstacles with corridor {corridor}");
            }
            scene.obstacles.clear();
            on_line = true;
            tries = 0;
        }
        let mut cand = random_obstacle(&mut rng);
        if on_line {
            let s = rng.random_range(0.35..0.65);
            let c = [start[0] + s * (goal[0] - start[0]), start[1] + s * (goal[1] - start[1])];
            cand = match cand {
                Obstacle::Circle { radius, .. } => Obstacle::Circle { center: c, radius },
                Obstacle::Box { min, max } => {
                    let (hx, hy) = ((max[0] - min[0]) / 2.0, (max[1] - min[1]) / 2.0);
                    Obstacle::Box { min: [c[0] - hx, c[1] - hy], max: [c[0] + hx, c[1] + hy] }
                }
            };
        }
        let clear_of_endpoints = cand.sdf(start) >= ENDPOINT_CLEARANCE && cand.sdf(goal) >= ENDPOINT_CLEARANCE;
        let spaced = border_gap(&cand) >= corridor && scene.obstacles.iter().all(|o| gap(o, &cand) >= corridor);
        if clear_of_endpoints && spaced {
            scene.obstacles.push(cand);
            on_line = false;
        }
    }
    scene.validate().context("generated scene failed validation")?;
    Ok(scene)
}

pub fn generate_scenes(seed: u64, count: usize, difficulty: u32) -> Result<Vec<Scene64>> {
    if count == 0 {
        bail!("scene count must be >= 1");
    }
    (0..count as u64).map(|i| generate_scene(seed, i, difficulty)).collect()
}

pub fn scene_file_name(index: usize) -> String {
    format!("scene_{index:03}.json")
}

/// Writes `scene_000.json`, `scene_001.json`, ... into `dir`.
pub fn write_scenes(dir: &Path, scenes: &[Scene64]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    scenes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let path = dir.join(scene_file_name(i));
            let mut text = serde_json::to_string_pretty(s)?;
            text.push('\n');
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            Ok(path)
        })
        .collect()
}

pub fn load_scene(path: &Path) -> Result<Scene64> {
    let text = fs::read_to_string(path).with_context(|| format!("reading scene {}", path.display()))?;
    let scene: Scene64 =
        serde_json::from_str(&text).with_context(|| format!("parsing scene {}", path.display()))?;
    scene.validate().with_context(|| format!("invalid scene {}", path.display()))?;
    Ok(scene)
}
