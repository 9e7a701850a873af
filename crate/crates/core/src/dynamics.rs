//! Rollout dynamics for control-space optimization.
//!
//! A control sequence `U` (`T × d_u`) is turned into a state trajectory by
//! repeatedly applying the one-step map `x' = g(x, u)`; the rollout cost is the
//! sum of stage costs along it. All built-in models integrate with
//! semi-implicit Euler (velocity first, then position with the new velocity).

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::scalar::Real;

pub trait Dynamics<T: Real>: Sync {
    fn state_dim(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn dt(&self) -> T;
    fn horizon(&self) -> usize;
    fn u_min(&self) -> &[T];
    fn u_max(&self) -> &[T];
    fn initial_state(&self) -> Vec<T>;
    fn step(&self, x: &[T], u: &[T]) -> Vec<T>;
    fn stage_cost(&self, x: &[T], u: &[T]) -> T;
    /// Task-specific terminal success test.
    fn reached_goal(&self, x: &[T]) -> bool;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult<T: Real> {
    /// `(T + 1) × d_x`, first row is `x₀`.
    pub states: DMatrix<T>,
    pub per_step_cost: Vec<T>,
    pub total: T,
    /// A non-finite state or cost was produced; `total` is `+∞`.
    pub diverged: bool,
}

/// Componentwise clamp into `[u_min, u_max]`.
pub fn clamp_controls<T: Real, D: Dynamics<T> + ?Sized>(u: &DMatrix<T>, model: &D) -> DMatrix<T> {
    let (lo, hi) = (model.u_min(), model.u_max());
    DMatrix::from_fn(u.nrows(), u.ncols(), |t, j| u[(t, j)].max(lo[j]).min(hi[j]))
}

/// Rolls `u` out from `x0`; diverged rollouts stop early with `total = +∞`.
pub fn rollout<T: Real, D: Dynamics<T> + ?Sized>(
    model: &D,
    x0: &[T],
    u: &DMatrix<T>,
) -> Result<RolloutResult<T>> {
    let (dx, du) = (model.state_dim(), model.control_dim());
    if x0.len() != dx {
        return Err(invalid(format!("x0 has {} entries, model expects {dx}", x0.len())));
    }
    if u.ncols() != du {
        return Err(invalid(format!("controls have {} columns, model expects {du}", u.ncols())));
    }
    if x0.iter().any(|v| !v.is_finite_value()) {
        return Err(invalid("x0 must be finite"));
    }
    let steps = u.nrows();
    let mut states = DMatrix::from_element(steps + 1, dx, T::lit(f64::NAN));
    let mut per_step_cost = Vec::with_capacity(steps);
    let mut x = x0.to_vec();
    for (j, &v) in x.iter().enumerate() {
        states[(0, j)] = v;
    }
    let mut diverged = false;
    for t in 0..steps {
        let ut: Vec<T> = u.row(t).iter().copied().collect();
        let c = model.stage_cost(&x, &ut);
        x = model.step(&x, &ut);
        if !c.is_finite_value() || x.iter().any(|v| !v.is_finite_value()) {
            diverged = true;
            break;
        }
        per_step_cost.push(c);
        for (j, &v) in x.iter().enumerate() {
            states[(t + 1, j)] = v;
        }
    }
    let total = if diverged {
        T::lit(f64::INFINITY)
    } else {
        per_step_cost.iter().fold(T::zero(), |a, &b| a + b)
    };
    Ok(RolloutResult { states, per_step_cost, total, diverged })
}

fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut w = a % two_pi;
    if w > T::pi() {
        w -= two_pi;
    } else if w <= -T::pi() {
        w += two_pi;
    }
    w
}

/// Planar double integrator; state `(px, py, vx, vy)`, control `(ax, ay)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass2d<T> {
    pub dt: T,
    pub horizon: usize,
    pub u_min: Vec<T>,
    pub u_max: Vec<T>,
    pub x0: Vec<T>,
    pub goal: [T; 2],
    pub w_goal: T,
    pub w_u: T,
}

impl<T: Real> Default for PointMass2d<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(0.1),
            horizon: 50,
            u_min: vec![T::lit(-3.0); 2],
            u_max: vec![T::lit(3.0); 2],
            x0: vec![T::zero(); 4],
            goal: [T::one(), T::one()],
            w_goal: T::one(),
            w_u: T::lit(0.01),
        }
    }
}

impl<T: Real> Dynamics<T> for PointMass2d<T> {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn dt(&self) -> T {
        self.dt
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn u_min(&self) -> &[T] {
        &self.u_min
    }
    fn u_max(&self) -> &[T] {
        &self.u_max
    }
    fn initial_state(&self) -> Vec<T> {
        self.x0.clone()
    }
    fn step(&self, x: &[T], u: &[T]) -> Vec<T> {
        let vx = x[2] + u[0] * self.dt;
        let vy = x[3] + u[1] * self.dt;
        vec![x[0] + vx * self.dt, x[1] + vy * self.dt, vx, vy]
    }
    fn stage_cost(&self, x: &[T], u: &[T]) -> T {
        let ex = x[0] - self.goal[0];
        let ey = x[1] - self.goal[1];
        self.w_goal * (ex * ex + ey * ey) + self.w_u * (u[0] * u[0] + u[1] * u[1])
    }
    fn reached_goal(&self, x: &[T]) -> bool {
        let ex = x[0] - self.goal[0];
        let ey = x[1] - self.goal[1];
        (ex * ex + ey * ey).sqrt() < T::lit(0.1)
    }
}

/// Torque-limited pendulum. `θ = 0` hangs down, `θ = π` is upright.
#[derive(Debug, Clone, PartialEq)]
pub struct Pendulum<T> {
    pub dt: T,
    pub horizon: usize,
    pub u_min: Vec<T>,
    pub u_max: Vec<T>,
    pub x0: Vec<T>,
    pub mass: T,
    pub length: T,
    pub gravity: T,
    pub damping: T,
    pub w_upright: T,
    pub w_velocity: T,
    pub w_u: T,
}

impl<T: Real> Default for Pendulum<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(0.05),
            horizon: 100,
            u_min: vec![T::lit(-3.0)],
            u_max: vec![T::lit(3.0)],
            x0: vec![T::zero(), T::zero()],
            mass: T::one(),
            length: T::one(),
            gravity: T::lit(9.81),
            damping: T::zero(),
            w_upright: T::one(),
            w_velocity: T::lit(1e-3),
            w_u: T::lit(1e-3),
        }
    }
}

impl<T: Real> Pendulum<T> {
    /// `(1 + cos θ)²`, zero exactly at the upright position.
    pub fn upright_error(&self, theta: T) -> T {
        let e = T::one() + theta.cos();
        e * e
    }
}

impl<T: Real> Dynamics<T> for Pendulum<T> {
    fn state_dim(&self) -> usize {
        2
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn dt(&self) -> T {
        self.dt
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn u_min(&self) -> &[T] {
        &self.u_min
    }
    fn u_max(&self) -> &[T] {
        &self.u_max
    }
    fn initial_state(&self) -> Vec<T> {
        self.x0.clone()
    }
    fn step(&self, x: &[T], u: &[T]) -> Vec<T> {
        let (theta, omega) = (x[0], x[1]);
        let inertia = self.mass * self.length * self.length;
        let alpha = -(self.gravity / self.length) * theta.sin() - self.damping * omega + u[0] / inertia;
        let omega_next = omega + alpha * self.dt;
        vec![theta + omega_next * self.dt, omega_next]
    }
    fn stage_cost(&self, x: &[T], u: &[T]) -> T {
        self.w_upright * self.upright_error(x[0]) + self.w_velocity * x[1] * x[1] + self.w_u * u[0] * u[0]
    }
    fn reached_goal(&self, x: &[T]) -> bool {
        wrap_angle(x[0] - T::pi()).abs() < T::lit(0.2)
    }
}

/// Cart-pole; state `(x, ẋ, θ, θ̇)` with `θ = 0` upright, control is the cart force.
#[derive(Debug, Clone, PartialEq)]
pub struct CartPole<T> {
    pub dt: T,
    pub horizon: usize,
    pub u_min: Vec<T>,
    pub u_max: Vec<T>,
    pub x0: Vec<T>,
    pub cart_mass: T,
    pub pole_mass: T,
    /// Distance from pivot to the pole's centre of mass.
    pub half_length: T,
    pub gravity: T,
    pub w_angle: T,
    pub w_position: T,
    pub w_u: T,
}

impl<T: Real> Default for CartPole<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(0.02),
            horizon: 50,
            u_min: vec![T::lit(-10.0)],
            u_max: vec![T::lit(10.0)],
            x0: vec![T::zero(), T::zero(), T::lit(0.2), T::zero()],
            cart_mass: T::one(),
            pole_mass: T::lit(0.1),
            half_length: T::lit(0.5),
            gravity: T::lit(9.81),
            w_angle: T::one(),
            w_position: T::lit(0.1),
            w_u: T::lit(1e-3),
        }
    }
}

impl<T: Real> Dynamics<T> for CartPole<T> {
    fn state_dim(&self) -> usize {
        4
    }
    fn control_dim(&self) -> usize {
        1
    }
    fn dt(&self) -> T {
        self.dt
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn u_min(&self) -> &[T] {
        &self.u_min
    }
    fn u_max(&self) -> &[T] {
        &self.u_max
    }
    fn initial_state(&self) -> Vec<T> {
        self.x0.clone()
    }
    fn step(&self, x: &[T], u: &[T]) -> Vec<T> {
        let (pos, vel, theta, omega) = (x[0], x[1], x[2], x[3]);
        let total = self.cart_mass + self.pole_mass;
        let (s, c) = (theta.sin(), theta.cos());
        let pml = self.pole_mass * self.half_length;
        let temp = (u[0] + pml * omega * omega * s) / total;
        let alpha = (self.gravity * s - c * temp)
            / (self.half_length * (T::lit(4.0 / 3.0) - self.pole_mass * c * c / total));
        let acc = temp - pml * alpha * c / total;
        let vel_next = vel + acc * self.dt;
        let omega_next = omega + alpha * self.dt;
        vec![pos + vel_next * self.dt, vel_next, theta + omega_next * self.dt, omega_next]
    }
    fn stage_cost(&self, x: &[T], u: &[T]) -> T {
        let angle_err = T::lit(2.0) * (T::one() - x[2].cos());
        self.w_angle * angle_err + self.w_position * x[0] * x[0] + self.w_u * u[0] * u[0]
    }
    fn reached_goal(&self, x: &[T]) -> bool {
        wrap_angle(x[2]).abs() < T::lit(0.2)
    }
}

/// The three built-in tasks, selectable by name.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltinModel<T> {
    PointMass2d(PointMass2d<T>),
    PendulumSwingup(Pendulum<T>),
    CartpoleBalance(CartPole<T>),
}

pub const BUILTIN_MODEL_NAMES: [&str; 3] = ["point_mass_2d", "pendulum_swingup", "cartpole_balance"];

/// Default instances of every built-in model, in [`BUILTIN_MODEL_NAMES`] order.
pub fn builtin_models<T: Real>() -> Vec<BuiltinModel<T>> {
    BUILTIN_MODEL_NAMES.iter().filter_map(|n| BuiltinModel::by_name(n)).collect()
}

macro_rules! delegate {
    ($self:ident, $m:ident, $f:expr) => {
        match $self {
            BuiltinModel::PointMass2d($m) => $f,
            BuiltinModel::PendulumSwingup($m) => $f,
            BuiltinModel::CartpoleBalance($m) => $f,
        }
    };
}

impl<T: Real> BuiltinModel<T> {
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "point_mass_2d" => Some(Self::PointMass2d(PointMass2d::default())),
            "pendulum_swingup" => Some(Self::PendulumSwingup(Pendulum::default())),
            "cartpole_balance" => Some(Self::CartpoleBalance(CartPole::default())),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::PointMass2d(_) => "point_mass_2d",
            Self::PendulumSwingup(_) => "pendulum_swingup",
            Self::CartpoleBalance(_) => "cartpole_balance",
        }
    }

    pub fn set_horizon(&mut self, horizon: usize) {
        delegate!(self, m, m.horizon = horizon)
    }

    pub fn set_dt(&mut self, dt: T) {
        delegate!(self, m, m.dt = dt)
    }

    pub fn set_bounds(&mut self, u_min: Vec<T>, u_max: Vec<T>) -> Result<()> {
        let du = self.control_dim();
        if u_min.len() != du || u_max.len() != du {
            return Err(invalid(format!("{} expects {du} control bounds", self.name())));
        }
        if u_min.iter().zip(&u_max).any(|(lo, hi)| !(lo < hi)) {
            return Err(invalid("u_min must be < u_max componentwise"));
        }
        delegate!(self, m, {
            m.u_min = u_min;
            m.u_max = u_max;
        });
        Ok(())
    }

    pub fn set_initial_state(&mut self, x0: Vec<T>) -> Result<()> {
        if x0.len() != self.state_dim() {
            return Err(invalid(format!("{} expects {} state entries", self.name(), self.state_dim())));
        }
        delegate!(self, m, m.x0 = x0);
        Ok(())
    }

    /// Overrides one named stage-cost or physical coefficient.
    pub fn set_param(&mut self, key: &str, value: T) -> Result<()> {
        let slot = match self {
            Self::PointMass2d(m) => match key {
                "w_goal" => &mut m.w_goal,
                "w_u" => &mut m.w_u,
                "goal_x" => &mut m.goal[0],
                "goal_y" => &mut m.goal[1],
                _ => return Err(invalid(format!("unknown point_mass_2d parameter {key:?}"))),
            },
            Self::PendulumSwingup(m) => match key {
                "mass" => &mut m.mass,
                "length" => &mut m.length,
                "gravity" => &mut m.gravity,
                "damping" => &mut m.damping,
                "w_upright" => &mut m.w_upright,
                "w_velocity" => &mut m.w_velocity,
                "w_u" => &mut m.w_u,
                _ => return Err(invalid(format!("unknown pendulum_swingup parameter {key:?}"))),
            },
            Self::CartpoleBalance(m) => match key {
                "cart_mass" => &mut m.cart_mass,
                "pole_mass" => &mut m.pole_mass,
                "half_length" => &mut m.half_length,
                "gravity" => &mut m.gravity,
                "w_angle" => &mut m.w_angle,
                "w_position" => &mut m.w_position,
                "w_u" => &mut m.w_u,
                _ => return Err(invalid(format!("unknown cartpole_balance parameter {key:?}"))),
            },
        };
        *slot = value;
        Ok(())
    }
}

impl<T: Real> Dynamics<T> for BuiltinModel<T> {
    fn state_dim(&self) -> usize {
        delegate!(self, m, m.state_dim())
    }
    fn control_dim(&self) -> usize {
        delegate!(self, m, m.control_dim())
    }
    fn dt(&self) -> T {
        delegate!(self, m, m.dt())
    }
    fn horizon(&self) -> usize {
        delegate!(self, m, m.horizon())
    }
    fn u_min(&self) -> &[T] {
        delegate!(self, m, m.u_min())
    }
    fn u_max(&self) -> &[T] {
        delegate!(self, m, m.u_max())
    }
    fn initial_state(&self) -> Vec<T> {
        delegate!(self, m, m.initial_state())
    }
    fn step(&self, x: &[T], u: &[T]) -> Vec<T> {
        delegate!(self, m, m.step(x, u))
    }
    fn stage_cost(&self, x: &[T], u: &[T]) -> T {
        delegate!(self, m, m.stage_cost(x, u))
    }
    fn reached_goal(&self, x: &[T]) -> bool {
        delegate!(self, m, m.reached_goal(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clamp_cases() {
        let m = PointMass2d::<f64>::default();
        let inside = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.9, -2.9]);
        assert_eq!(clamp_controls(&inside, &m), inside);
        let big = DMatrix::from_row_slice(1, 2, &[1e300, -3.0]);
        assert_eq!(clamp_controls(&big, &m), DMatrix::from_row_slice(1, 2, &[3.0, -3.0]));
    }

    #[test]
    fn point_mass_at_rest_stays() {
        let m = PointMass2d::<f64>::default();
        let r = rollout(&m, &[0.2, -0.4, 0.0, 0.0], &DMatrix::zeros(10, 2)).unwrap();
        for t in 0..=10 {
            assert_eq!(r.states.row(t).iter().copied().collect::<Vec<_>>(), vec![0.2, -0.4, 0.0, 0.0]);
        }
    }

    #[test]
    fn point_mass_hand_stepped() {
        // v_{t+1} = v_t + 1, p_{t+1} = p_t + v_{t+1}
        let (mut p, mut v) = (0.0, 0.0);
        let mut expected = vec![];
        for _ in 0..3 {
            v += 1.0;
            p += v;
            expected.push(p);
        }
        assert_eq!(expected, vec![1.0, 3.0, 6.0]);
        let m = PointMass2d::<f64> { dt: 1.0, ..Default::default() };
        let u = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let r = rollout(&m, &[0.0; 4], &u).unwrap();
        let px: Vec<f64> = (1..=3).map(|t| r.states[(t, 0)]).collect();
        assert_eq!(px, expected);
    }

    #[test]
    fn torque_free_pendulum_keeps_angle() {
        let m = Pendulum::<f64> { gravity: 0.0, ..Default::default() };
        let r = rollout(&m, &[1.2, 0.0], &DMatrix::zeros(20, 1)).unwrap();
        assert!((0..=20).all(|t| r.states[(t, 0)] == 1.2));
    }

    #[test]
    fn pendulum_upright_cost_zero() {
        let m = Pendulum::<f64>::default();
        assert_eq!(m.upright_error(std::f64::consts::PI), 0.0);
        assert_eq!(m.stage_cost(&[std::f64::consts::PI, 0.0], &[0.0]), 0.0);
    }

    #[test]
    fn pendulum_hanging_first_step_cost() {
        let m = Pendulum::<f64>::default();
        let r = rollout(&m, &[0.0, 0.0], &DMatrix::zeros(1, 1)).unwrap();
        let (theta, omega, u) = (0.0f64, 0.0f64, 0.0f64);
        let closed_form = 1.0 * (1.0 + theta.cos()).powi(2) + 1e-3 * omega * omega + 1e-3 * u * u;
        assert_eq!(closed_form, 4.0);
        assert_eq!(r.total, closed_form);
    }

    #[test]
    fn cartpole_upright_rest_zero_cost() {
        let m = CartPole::<f64>::default();
        let r = rollout(&m, &[0.0; 4], &DMatrix::zeros(50, 1)).unwrap();
        assert_eq!(r.total, 0.0);
        assert!(m.reached_goal(&[0.0; 4]));
    }

    #[test]
    fn cartpole_falls_without_control() {
        let m = CartPole::<f64>::default();
        let r = rollout(&m, &m.initial_state(), &DMatrix::zeros(100, 1)).unwrap();
        assert!(r.states[(100, 2)].abs() > 0.3);
    }

    #[test]
    fn divergence_is_flagged() {
        let m = PointMass2d::<f64> { dt: 1e200, ..Default::default() };
        let u = DMatrix::from_element(5, 2, 1e200);
        let r = rollout(&m, &[0.0; 4], &u).unwrap();
        assert!(r.diverged);
        assert!(r.total.is_infinite());
    }

    #[test]
    fn rollout_rejects_bad_shapes() {
        let m = Pendulum::<f64>::default();
        assert!(rollout(&m, &[0.0], &DMatrix::zeros(3, 1)).is_err());
        assert!(rollout(&m, &[0.0, 0.0], &DMatrix::zeros(3, 2)).is_err());
        assert!(rollout(&m, &[f64::NAN, 0.0], &DMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn builtin_lookup_and_overrides() {
        let models = builtin_models::<f64>();
        assert_eq!(models.iter().map(|m| m.name()).collect::<Vec<_>>(), BUILTIN_MODEL_NAMES);
        assert!(BuiltinModel::<f64>::by_name("humanoid").is_none());
        let mut p = BuiltinModel::<f64>::by_name("pendulum_swingup").unwrap();
        p.set_horizon(7);
        p.set_dt(0.1);
        p.set_param("gravity", 0.0).unwrap();
        assert!(p.set_param("nope", 1.0).is_err());
        assert!(p.set_bounds(vec![1.0], vec![-1.0]).is_err());
        p.set_bounds(vec![-1.0], vec![1.0]).unwrap();
        assert_eq!((p.horizon(), p.dt(), p.u_max()[0]), (7, 0.1, 1.0));
    }

    #[test]
    fn wrap_angle_range() {
        for a in [-10.0, -3.2, 0.0, 3.0, 3.2, 7.0f64] {
            let w = wrap_angle(a);
            assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI);
            assert!(((a - w) / std::f64::consts::TAU).fract().abs() < 1e-9
                || (1.0 - ((a - w) / std::f64::consts::TAU).fract().abs()) < 1e-9);
        }
    }

    fn arb_controls(steps: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-5.0..5.0f64, steps)
    }

    proptest! {
        #[test]
        fn rollout_invariants(us in arb_controls(30), prefix in 1usize..30) {
            for model in builtin_models::<f64>() {
                let du = model.control_dim();
                let steps = us.len() / du;
                let u = clamp_controls(&DMatrix::from_fn(steps, du, |t, j| us[t * du + j]), &model);
                for t in 0..steps {
                    for j in 0..du {
                        prop_assert!(u[(t, j)] >= model.u_min()[j] && u[(t, j)] <= model.u_max()[j]);
                    }
                }
                let x0 = model.initial_state();
                let a = rollout(&model, &x0, &u).unwrap();
                let b = rollout(&model, &x0, &u).unwrap();
                prop_assert_eq!(&a, &b);
                let sum = a.per_step_cost.iter().fold(0.0, |s, c| s + c);
                prop_assert_eq!(a.total, sum);
                prop_assert_eq!(a.states.row(0).iter().copied().collect::<Vec<_>>(), x0.clone());
                let k = prefix.min(steps);
                let p = rollout(&model, &x0, &u.rows(0, k).into_owned()).unwrap();
                prop_assert_eq!(p.states, a.states.rows(0, k + 1).into_owned());
            }
        }
    }
}
