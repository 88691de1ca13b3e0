//! Planar two-link arm tracking a seeded sequence of targets.
//!
//! Point masses sit at the end of each link; joint armature keeps the mass
//! matrix invertible for any link lengths, including zero. Morphology:
//! `(link1, link2)` lengths in metres.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_episode_inputs, rollout, space_for, EnvironmentContract, EpisodeResult, Simulator};
use crate::error::Result;
use crate::morphospace::Morphology;
use crate::neuro::Controller;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReacherParams {
    pub link_mass: f64,
    pub armature: f64,
    pub damping: f64,
    /// Torque at action ±1 (N·m).
    pub max_torque: f64,
    /// A new target appears every this many steps.
    pub target_period: usize,
    /// Targets are drawn with radius in `[r_min, r_max]` and uniform angle.
    pub target_r_min: f64,
    pub target_r_max: f64,
    pub dt: f64,
    pub episode_steps: usize,
}

impl Default for ReacherParams {
    fn default() -> Self {
        Self {
            link_mass: 1.0,
            armature: 0.05,
            damping: 0.2,
            max_torque: 2.0,
            target_period: 250,
            target_r_min: 0.4,
            target_r_max: 1.8,
            dt: 0.02,
            episode_steps: 1000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reacher {
    params: ReacherParams,
    contract: EnvironmentContract,
}

impl Reacher {
    pub fn new(params: ReacherParams) -> Self {
        let contract = EnvironmentContract {
            name: "reacher_vary".into(),
            obs_dim: 8,
            act_dim: 2,
            morph_space: space_for("reacher_vary"),
            episode_steps: params.episode_steps,
            dt: params.dt,
        };
        Self { params, contract }
    }

    pub(crate) fn set_episode_steps(&mut self, steps: usize) {
        self.params.episode_steps = steps;
        self.contract.episode_steps = steps;
    }

    /// Target position for every step of the episode seeded by `seed`.
    pub fn targets(&self, seed: u64) -> Vec<[f64; 2]> {
        let p = &self.params;
        let mut rng = seed::stream(&[seed, 1]);
        let n_targets = p.episode_steps.div_ceil(p.target_period.max(1));
        let points: Vec<[f64; 2]> = (0..n_targets)
            .map(|_| {
                let r = rng.random_range(p.target_r_min..=p.target_r_max);
                let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        (0..p.episode_steps)
            .map(|t| points[t / p.target_period.max(1)])
            .collect()
    }

    fn initial_joints(&self, seed: u64) -> [f64; 2] {
        let mut rng = seed::stream(&[seed, 0]);
        [rng.random_range(-0.1..=0.1), rng.random_range(-0.1..=0.1)]
    }
}

impl super::Environment for Reacher {
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
        let mut sim = ReacherSim {
            p: self.params,
            l1: morphology.x,
            l2: morphology.y,
            q: self.initial_joints(seed),
            qd: [0.0; 2],
            targets: self.targets(seed),
            t: 0,
        };
        rollout(&mut sim, controller, &self.contract)
    }
}

struct ReacherSim {
    p: ReacherParams,
    l1: f64,
    l2: f64,
    q: [f64; 2],
    qd: [f64; 2],
    targets: Vec<[f64; 2]>,
    t: usize,
}

impl ReacherSim {
    fn tip(&self) -> [f64; 2] {
        let a = self.q[0];
        let b = self.q[0] + self.q[1];
        [
            self.l1 * a.cos() + self.l2 * b.cos(),
            self.l1 * a.sin() + self.l2 * b.sin(),
        ]
    }

    fn target(&self) -> [f64; 2] {
        self.targets[self.t.min(self.targets.len() - 1)]
    }
}

impl Simulator for ReacherSim {
    fn observe(&self, obs: &mut [f64]) {
        let tip = self.tip();
        let target = self.target();
        obs[0] = self.q[0].cos();
        obs[1] = self.q[0].sin();
        obs[2] = self.q[1].cos();
        obs[3] = self.q[1].sin();
        obs[4] = self.qd[0];
        obs[5] = self.qd[1];
        obs[6] = target[0] - tip[0];
        obs[7] = target[1] - tip[1];
    }

    fn step(&mut self, action: &[f64]) -> f64 {
        let p = &self.p;
        let tau = [
            p.max_torque * action[0].clamp(-1.0, 1.0),
            p.max_torque * action[1].clamp(-1.0, 1.0),
        ];
        let tip = self.tip();
        let target = self.target();
        let dist2 = (tip[0] - target[0]).powi(2) + (tip[1] - target[1]).powi(2);
        let cost = (dist2 + 0.001 * (tau[0] * tau[0] + tau[1] * tau[1])) * p.dt;

        let (m, l1, l2) = (p.link_mass, self.l1, self.l2);
        let (s2, c2) = self.q[1].sin_cos();
        let [qd1, qd2] = self.qd;
        let m11 = m * l1 * l1 + m * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2) + p.armature;
        let m12 = m * (l2 * l2 + l1 * l2 * c2);
        let m22 = m * l2 * l2 + p.armature;
        let h = m * l1 * l2 * s2;
        let rhs1 = tau[0] + h * (2.0 * qd1 * qd2 + qd2 * qd2) - p.damping * qd1;
        let rhs2 = tau[1] - h * qd1 * qd1 - p.damping * qd2;
        let det = m11 * m22 - m12 * m12;
        let acc1 = (m22 * rhs1 - m12 * rhs2) / det;
        let acc2 = (m11 * rhs2 - m12 * rhs1) / det;
        self.qd[0] += p.dt * acc1;
        self.qd[1] += p.dt * acc2;
        self.q[0] += p.dt * self.qd[0];
        self.q[1] += p.dt * self.qd[1];
        self.t += 1;
        cost
    }

    fn diverged(&self) -> bool {
        self.q
            .iter()
            .chain(&self.qd)
            .any(|v| !v.is_finite() || v.abs() > 1e6)
    }
}
