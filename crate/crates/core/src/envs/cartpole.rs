//! Cart-pole with variable pole length and mass.
//!
//! The pole is a uniform rod hinged on the cart, angle measured from upright.
//! Morphology: `x` = full pole length (m), `y` = pole mass (kg). The cart runs
//! on a finite track and stops dead at its ends.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_episode_inputs, rollout, space_for, EnvironmentContract, EpisodeResult, Simulator};
use crate::error::Result;
use crate::morphospace::Morphology;
use crate::neuro::Controller;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub cart_mass: f64,
    /// Force at action ±1 (N).
    pub force_mag: f64,
    /// Viscous friction on the cart (N·s/m).
    pub cart_friction: f64,
    /// Viscous friction at the hinge (N·m·s/rad).
    pub pole_friction: f64,
    /// Half-length of the track (m). The cart stops dead at either end.
    pub track_limit: f64,
    /// Initial pole angle is drawn from `±init_angle` rad.
    pub init_angle: f64,
    /// Initial cart position, cart velocity and pole rate from `±init_noise`.
    pub init_noise: f64,
    pub dt: f64,
    pub episode_steps: usize,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            cart_mass: 1.0,
            force_mag: 10.0,
            cart_friction: 0.0,
            pole_friction: 0.0,
            track_limit: 2.4,
            init_angle: 0.2,
            init_noise: 0.05,
            dt: 0.02,
            episode_steps: 1000,
        }
    }
}

/// `(x, x_dot, theta, theta_dot)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

#[derive(Debug, Clone)]
pub struct CartPole {
    params: CartPoleParams,
    contract: EnvironmentContract,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Self {
        let contract = EnvironmentContract {
            name: "cartpole_vary".into(),
            obs_dim: 4,
            act_dim: 1,
            morph_space: space_for("cartpole_vary"),
            episode_steps: params.episode_steps,
            dt: params.dt,
        };
        Self { params, contract }
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    pub(crate) fn set_episode_steps(&mut self, steps: usize) {
        self.params.episode_steps = steps;
        self.contract.episode_steps = steps;
    }

    pub fn initial_state(&self, seed: u64) -> CartPoleState {
        let mut rng = seed::stream(&[seed]);
        let p = &self.params;
        let mut u = |r: f64| if r > 0.0 { rng.random_range(-r..=r) } else { 0.0 };
        CartPoleState {
            x: u(p.init_noise),
            x_dot: u(p.init_noise),
            theta: u(p.init_angle),
            theta_dot: u(p.init_noise),
        }
    }

    /// Rolls out from an explicit initial state.
    pub fn run_from(
        &self,
        state: CartPoleState,
        morphology: Morphology,
        controller: &mut Controller,
    ) -> Result<EpisodeResult> {
        check_episode_inputs(&self.contract, morphology, controller)?;
        let mut sim = CartPoleSim {
            p: self.params,
            length: morphology.x,
            mass: morphology.y,
            s: state,
        };
        rollout(&mut sim, controller, &self.contract)
    }

    /// Total mechanical energy, with zero potential at hinge height.
    pub fn energy(&self, morphology: Morphology, s: &CartPoleState) -> f64 {
        let (m, l) = (morphology.y, 0.5 * morphology.x);
        let total = self.params.cart_mass + m;
        0.5 * total * s.x_dot * s.x_dot
            + m * l * s.x_dot * s.theta_dot * s.theta.cos()
            + 0.5 * (4.0 / 3.0) * m * l * l * s.theta_dot * s.theta_dot
            + m * self.params.gravity * l * s.theta.cos()
    }

    /// One integration step under force `force` (N).
    pub fn step_state(&self, morphology: Morphology, s: &mut CartPoleState, force: f64) {
        let mut sim = CartPoleSim {
            p: self.params,
            length: morphology.x,
            mass: morphology.y,
            s: *s,
        };
        sim.integrate(force);
        *s = sim.s;
    }
}

impl super::Environment for CartPole {
    fn contract(&self) -> &EnvironmentContract {
        &self.contract
    }

    fn run_episode(
        &self,
        morphology: Morphology,
        controller: &mut Controller,
        seed: u64,
    ) -> Result<EpisodeResult> {
        self.run_from(self.initial_state(seed), morphology, controller)
    }
}

struct CartPoleSim {
    p: CartPoleParams,
    length: f64,
    mass: f64,
    s: CartPoleState,
}

impl CartPoleSim {
    fn integrate(&mut self, force: f64) {
        let p = &self.p;
        let l = 0.5 * self.length;
        let m = self.mass;
        let total = p.cart_mass + m;
        let CartPoleState {
            x_dot,
            theta,
            theta_dot,
            ..
        } = self.s;
        let (sin, cos) = theta.sin_cos();
        let f = force - p.cart_friction * x_dot;
        let temp = (f + m * l * theta_dot * theta_dot * sin) / total;
        let theta_acc = (p.gravity * sin - cos * temp - p.pole_friction * theta_dot / (m * l).max(1e-12))
            / (l * (4.0 / 3.0 - m * cos * cos / total));
        let x_acc = temp - m * l * theta_acc * cos / total;
        let dt = p.dt;
        self.s.x_dot += dt * x_acc;
        self.s.x += dt * self.s.x_dot;
        if self.s.x.abs() > p.track_limit {
            self.s.x = p.track_limit.copysign(self.s.x);
            self.s.x_dot = 0.0;
        }
        self.s.theta_dot += dt * theta_acc;
        self.s.theta += dt * self.s.theta_dot;
    }
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = (a + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI;
    if r.is_finite() {
        r
    } else {
        a
    }
}

impl Simulator for CartPoleSim {
    fn observe(&self, obs: &mut [f64]) {
        obs[0] = self.s.x;
        obs[1] = self.s.x_dot;
        obs[2] = wrap_angle(self.s.theta);
        obs[3] = self.s.theta_dot;
    }

    fn step(&mut self, action: &[f64]) -> f64 {
        let force = self.p.force_mag * action[0].clamp(-1.0, 1.0);
        let th = wrap_angle(self.s.theta);
        let cost = (th * th + 0.1 * self.s.x * self.s.x + 0.001 * force * force) * self.p.dt;
        self.integrate(force);
        cost
    }

    fn diverged(&self) -> bool {
        let s = &self.s;
        [s.x, s.x_dot, s.theta, s.theta_dot]
            .iter()
            .any(|v| !v.is_finite() || v.abs() > 1e6)
    }
}
