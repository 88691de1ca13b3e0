//! Two-link underactuated acrobot (torque on the elbow only), swing-up cost.
//!
//! Links are uniform rods of unit mass; angles are measured from hanging
//! straight down. Morphology: `(link1, link2)` lengths in metres.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_episode_inputs, rollout, space_for, EnvironmentContract, EpisodeResult, Simulator};
use crate::error::Result;
use crate::morphospace::Morphology;
use crate::neuro::Controller;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcrobotParams {
    pub gravity: f64,
    pub link_mass: f64,
    pub max_torque: f64,
    pub damping: f64,
    pub max_vel1: f64,
    pub max_vel2: f64,
    pub dt: f64,
    pub episode_steps: usize,
}

impl Default for AcrobotParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            link_mass: 1.0,
            max_torque: 2.0,
            damping: 0.05,
            max_vel1: 4.0 * std::f64::consts::PI,
            max_vel2: 9.0 * std::f64::consts::PI,
            dt: 0.02,
            episode_steps: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Acrobot {
    params: AcrobotParams,
    contract: EnvironmentContract,
}

impl Acrobot {
    pub fn new(params: AcrobotParams) -> Self {
        let contract = EnvironmentContract {
            name: "acrobot_vary".into(),
            obs_dim: 6,
            act_dim: 1,
            morph_space: space_for("acrobot_vary"),
            episode_steps: params.episode_steps,
            dt: params.dt,
        };
        Self { params, contract }
    }

    pub(crate) fn set_episode_steps(&mut self, steps: usize) {
        self.params.episode_steps = steps;
        self.contract.episode_steps = steps;
    }
}

impl super::Environment for Acrobot {
    fn contract(&self) -> &EnvironmentContract {
        &self.contract
    }

    fn run_episode(
        &self,
        morphology: Morphology,
        controller: &mut Controller,
        seed: u64,
    ) -> Result<EpisodeResult> {
        check_episode_inputs(&self.contract, morphology, controller)?;
        let mut rng = seed::stream(&[seed]);
        let mut u = || rng.random_range(-0.1..=0.1);
        let mut sim = AcrobotSim {
            p: self.params,
            l1: morphology.x,
            l2: morphology.y,
            q: [u(), u()],
            qd: [u(), u()],
        };
        rollout(&mut sim, controller, &self.contract)
    }
}

struct AcrobotSim {
    p: AcrobotParams,
    l1: f64,
    l2: f64,
    q: [f64; 2],
    qd: [f64; 2],
}

impl AcrobotSim {
    fn tip_height(&self) -> f64 {
        -self.l1 * self.q[0].cos() - self.l2 * (self.q[0] + self.q[1]).cos()
    }
}

impl Simulator for AcrobotSim {
    fn observe(&self, obs: &mut [f64]) {
        obs[0] = self.q[0].cos();
        obs[1] = self.q[0].sin();
        obs[2] = self.q[1].cos();
        obs[3] = self.q[1].sin();
        obs[4] = self.qd[0];
        obs[5] = self.qd[1];
    }

    fn step(&mut self, action: &[f64]) -> f64 {
        let p = &self.p;
        let cost = (self.l1 + self.l2 - self.tip_height()) * p.dt;
        let tau = p.max_torque * action[0].clamp(-1.0, 1.0);

        let (m1, m2, l1, g) = (p.link_mass, p.link_mass, self.l1, p.gravity);
        let (lc1, lc2) = (0.5 * self.l1, 0.5 * self.l2);
        let i1 = m1 * self.l1 * self.l1 / 12.0;
        let i2 = m2 * self.l2 * self.l2 / 12.0;
        let [q1, q2] = self.q;
        let [qd1, qd2] = self.qd;
        let (s2, c2) = q2.sin_cos();
        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * c2) + i2;
        let phi2 = m2 * lc2 * g * (q1 + q2 - std::f64::consts::FRAC_PI_2).cos();
        let phi1 = -m2 * l1 * lc2 * qd2 * qd2 * s2 - 2.0 * m2 * l1 * lc2 * qd2 * qd1 * s2
            + (m1 * lc1 + m2 * l1) * g * (q1 - std::f64::consts::FRAC_PI_2).cos()
            + phi2;
        let denom = m2 * lc2 * lc2 + i2 - d2 * d2 / d1;
        let acc2 = (tau - p.damping * qd2 + d2 / d1 * (phi1 + p.damping * qd1)
            - m2 * l1 * lc2 * qd1 * qd1 * s2
            - phi2)
            / denom;
        let acc1 = -(d2 * acc2 + phi1 + p.damping * qd1) / d1;

        self.qd[0] = (qd1 + p.dt * acc1).clamp(-p.max_vel1, p.max_vel1);
        self.qd[1] = (qd2 + p.dt * acc2).clamp(-p.max_vel2, p.max_vel2);
        self.q[0] += p.dt * self.qd[0];
        self.q[1] += p.dt * self.qd[1];
        cost
    }

    fn diverged(&self) -> bool {
        self.q
            .iter()
            .chain(&self.qd)
            .any(|v| !v.is_finite() || v.abs() > 1e6)
    }
}
