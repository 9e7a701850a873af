//! Planar scenes, analytic signed distances and collision potentials.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;

pub type Point<T> = [T; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
#[serde(bound = "T: Real")]
pub enum Obstacle<T> {
    Circle { center: Point<T>, radius: T },
    Box { min: Point<T>, max: Point<T> },
}

impl<T: Real> Obstacle<T> {
    /// Exact signed distance; negative inside.
    pub fn sdf(&self, p: Point<T>) -> T {
        match self {
            Obstacle::Circle { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                (dx * dx + dy * dy).sqrt() - *radius
            }
            Obstacle::Box { min, max } => {
                let half = T::lit(0.5);
                let qx = (p[0] - (min[0] + max[0]) * half).abs() - (max[0] - min[0]) * half;
                let qy = (p[1] - (min[1] + max[1]) * half).abs() - (max[1] - min[1]) * half;
                let ox = qx.max(T::zero());
                let oy = qy.max(T::zero());
                (ox * ox + oy * oy).sqrt() + qx.max(qy).min(T::zero())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Obstacle::Circle { radius, .. } if !(*radius > T::zero()) => {
                Err(invalid(format!("circle radius must be > 0, got {}", radius.as_f64())))
            }
            Obstacle::Box { min, max } if !(min[0] < max[0] && min[1] < max[1]) => {
                Err(invalid("box min must be < max componentwise"))
            }
            _ => Ok(()),
        }
    }
}

/// Axis-aligned workspace rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct Bounds<T> {
    pub min: Point<T>,
    pub max: Point<T>,
}

impl<T: Real> Bounds<T> {
    pub fn contains(&self, p: Point<T>) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    /// Distance to the nearest boundary edge, negative outside the box.
    pub fn interior_distance(&self, p: Point<T>) -> T {
        (p[0] - self.min[0]).min(self.max[0] - p[0]).min(p[1] - self.min[1]).min(self.max[1] - p[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
pub struct Scene<T> {
    pub bounds: Bounds<T>,
    pub start: Point<T>,
    pub goal: Point<T>,
    /// Safety margin of the hinge cost (meters).
    pub delta: T,
    /// Indicator penalty per colliding node.
    pub w_obs: T,
    /// Per-node weight of the squared hinge.
    pub sigma_obs: T,
    pub obstacles: Vec<Obstacle<T>>,
}

/// Which state potential to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    /// `σ_obs · h_δ(sdf)²` per node.
    Sdf,
    /// `w_obs · 1{sdf ≤ 0}` per node.
    Indicator,
}

/// Maps one trajectory node to the workspace points checked for collision.
pub trait WorkspaceMap<T>: Sync {
    fn points(&self, config: &[T]) -> Vec<Point<T>>;
}

/// Planar point robot: the configuration is the workspace point.
#[derive(Debug, Clone, Copy, Default)]
pub struct PointRobot;

impl<T: Real> WorkspaceMap<T> for PointRobot {
    fn points(&self, config: &[T]) -> Vec<Point<T>> {
        vec![[config[0], config[1]]]
    }
}

/// `max(δ − d, 0)`.
pub fn hinge<T: Real>(d: T, delta: T) -> T {
    (delta - d).max(T::zero())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathMetrics<T> {
    pub path_length: T,
    pub clearance: T,
    pub success: bool,
}

fn node<T: Real>(nodes: &DMatrix<T>, t: usize) -> Vec<T> {
    nodes.row(t).iter().copied().collect()
}

impl<T: Real> Scene<T> {
    /// Checks the obstacle shapes and that start/goal are inside the bounds
    /// and strictly outside every obstacle.
    pub fn validate(&self) -> Result<()> {
        if !(self.bounds.min[0] < self.bounds.max[0] && self.bounds.min[1] < self.bounds.max[1]) {
            return Err(invalid("bounds min must be < max componentwise"));
        }
        if self.delta < T::zero() {
            return Err(invalid("delta must be >= 0"));
        }
        for o in &self.obstacles {
            o.validate()?;
        }
        for (name, p) in [("start", self.start), ("goal", self.goal)] {
            if !self.bounds.contains(p) {
                return Err(invalid(format!("{name} lies outside the workspace bounds")));
            }
            if !(self.sdf(p) > T::zero()) {
                return Err(invalid(format!("{name} lies inside an obstacle")));
            }
        }
        Ok(())
    }

    /// Minimum signed distance over all obstacles (`+∞` for an empty scene).
    pub fn sdf(&self, p: Point<T>) -> T {
        self.obstacles
            .iter()
            .map(|o| o.sdf(p))
            .fold(T::lit(f64::INFINITY), |a, b| a.min(b))
    }

    fn node_cost(&self, points: &[Point<T>], kind: CostKind) -> T {
        points.iter().fold(T::zero(), |acc, &p| {
            let d = self.sdf(p);
            acc + match kind {
                CostKind::Sdf => {
                    let h = hinge(d, self.delta);
                    self.sigma_obs * h * h
                }
                CostKind::Indicator => {
                    if d <= T::zero() {
                        self.w_obs
                    } else {
                        T::zero()
                    }
                }
            }
        })
    }

    /// State potential `S = Σ_t V(node_t)` over the rows of `nodes`.
    pub fn potential_with<M: WorkspaceMap<T>>(
        &self,
        nodes: &DMatrix<T>,
        map: &M,
        kind: CostKind,
    ) -> T {
        (0..nodes.nrows()).fold(T::zero(), |acc, t| {
            acc + self.node_cost(&map.points(&node(nodes, t)), kind)
        })
    }

    pub fn potential(&self, nodes: &DMatrix<T>, kind: CostKind) -> T {
        self.potential_with(nodes, &PointRobot, kind)
    }

    /// `σ_obs · h_δ(d_bounds)²` summed over nodes, penalizing nodes near or
    /// beyond the workspace border.
    pub fn bounds_potential(&self, nodes: &DMatrix<T>) -> T {
        (0..nodes.nrows()).fold(T::zero(), |acc, t| {
            let h = hinge(self.bounds.interior_distance([nodes[(t, 0)], nodes[(t, 1)]]), self.delta);
            acc + self.sigma_obs * h * h
        })
    }

    pub fn potential_sdf(&self, nodes: &DMatrix<T>) -> T {
        self.potential(nodes, CostKind::Sdf)
    }

    pub fn potential_indicator(&self, nodes: &DMatrix<T>) -> T {
        self.potential(nodes, CostKind::Indicator)
    }

    /// Length, minimum clearance and success of a full (endpoint-inclusive) path.
    pub fn metrics(&self, nodes: &DMatrix<T>) -> Result<PathMetrics<T>> {
        if nodes.nrows() < 2 || nodes.ncols() != 2 {
            return Err(invalid("metrics need at least two planar nodes"));
        }
        let mut path_length = T::zero();
        for t in 1..nodes.nrows() {
            let dx = nodes[(t, 0)] - nodes[(t - 1, 0)];
            let dy = nodes[(t, 1)] - nodes[(t - 1, 1)];
            path_length += (dx * dx + dy * dy).sqrt();
        }
        let mut clearance = T::lit(f64::INFINITY);
        let mut in_bounds = true;
        for t in 0..nodes.nrows() {
            let p = [nodes[(t, 0)], nodes[(t, 1)]];
            clearance = clearance.min(self.sdf(p));
            in_bounds &= self.bounds.contains(p);
        }
        Ok(PathMetrics { path_length, clearance, success: clearance > T::zero() && in_bounds })
    }
}
