//! Morphology-parameterised episodic control environments.
//!
//! Every environment reports a cost (lower is better). Built-ins integrate
//! with fixed-step semi-implicit Euler and are fully determined by
//! `(morphology, controller, seed)`. A diverging episode stops early and pays
//! [`STEP_COST_CAP`] for every remaining step.

mod acrobot;
mod cartpole;
pub mod external;
mod reacher;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morphospace::{self, Morphology, MorphologySpace};
use crate::neuro::{Controller, ControllerSpec};

pub use acrobot::{Acrobot, AcrobotParams};
pub use cartpole::{CartPole, CartPoleParams, CartPoleState};
pub use external::{ExternalConfig, ExternalEnv};
pub use reacher::{Reacher, ReacherParams};

/// Upper bound on the cost of one step; also the price of each step an
/// early-terminated episode did not execute.
pub const STEP_COST_CAP: f64 = 1e6;

/// Static description of an environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentContract {
    pub name: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub morph_space: MorphologySpace,
    pub episode_steps: usize,
    pub dt: f64,
}

impl EnvironmentContract {
    /// The controller this environment expects, with the default hidden layer.
    pub fn controller_spec(&self) -> ControllerSpec {
        ControllerSpec::new(self.obs_dim, self.act_dim)
    }

    /// Fails with a configuration error when `spec` does not fit.
    pub fn check_controller(&self, spec: &ControllerSpec) -> Result<()> {
        if spec.n_in != self.obs_dim {
            return Err(Error::config(
                "controller",
                format!(
                    "controller takes {} inputs but `{}` observes {}",
                    spec.n_in, self.name, self.obs_dim
                ),
            ));
        }
        if spec.n_out != self.act_dim {
            return Err(Error::config(
                "controller",
                format!(
                    "controller emits {} outputs but `{}` expects {}",
                    spec.n_out, self.name, self.act_dim
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub cost: f64,
    pub steps_executed: usize,
    pub terminated_early: bool,
}

/// An environment that can roll out controllers.
pub trait Environment: Send + Sync {
    fn contract(&self) -> &EnvironmentContract;

    fn run_episode(
        &self,
        morphology: Morphology,
        controller: &mut Controller,
        seed: u64,
    ) -> Result<EpisodeResult>;
}

/// Single-episode physics used by the built-ins.
pub(crate) trait Simulator {
    fn observe(&self, obs: &mut [f64]);
    /// Applies `action` (each entry in `[-1, 1]`) for one step and returns the
    /// step cost.
    fn step(&mut self, action: &[f64]) -> f64;
    fn diverged(&self) -> bool;
}

pub(crate) fn check_episode_inputs(
    contract: &EnvironmentContract,
    morphology: Morphology,
    controller: &Controller,
) -> Result<()> {
    contract.check_controller(controller.spec())?;
    if !morphology.is_finite() {
        return Err(Error::NonFinite("morphology"));
    }
    Ok(())
}

pub(crate) fn rollout<S: Simulator>(
    sim: &mut S,
    controller: &mut Controller,
    contract: &EnvironmentContract,
) -> Result<EpisodeResult> {
    let steps = contract.episode_steps;
    let mut obs = vec![0.0; contract.obs_dim];
    let mut act = vec![0.0; contract.act_dim];
    let mut cost = 0.0;
    for t in 0..steps {
        sim.observe(&mut obs);
        if sim.diverged() || obs.iter().any(|v| !v.is_finite()) {
            return Ok(diverged(cost, t, steps));
        }
        controller.forward_into(&obs, &mut act)?;
        let c = sim.step(&act);
        if !c.is_finite() || sim.diverged() {
            return Ok(diverged(cost, t, steps));
        }
        cost += c.min(STEP_COST_CAP);
    }
    Ok(EpisodeResult {
        cost,
        steps_executed: steps,
        terminated_early: false,
    })
}

fn diverged(cost_so_far: f64, executed: usize, steps: usize) -> EpisodeResult {
    EpisodeResult {
        cost: cost_so_far + STEP_COST_CAP * (steps - executed) as f64,
        steps_executed: executed,
        terminated_early: true,
    }
}

/// Environment selection as written in run configs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvOptions {
    /// Overrides the episode length of built-ins.
    pub episode_steps: Option<usize>,
    /// Required when `env = "external"`.
    pub external: Option<ExternalConfig>,
}

/// Names of the built-in environments.
pub const BUILTIN_NAMES: &[&str] = &["cartpole_vary", "reacher_vary", "acrobot_vary"];

/// Contracts of every built-in environment at default settings.
pub fn builtin_environments() -> Vec<EnvironmentContract> {
    BUILTIN_NAMES
        .iter()
        .map(|n| {
            make_env(n, &EnvOptions::default())
                .expect("built-ins construct")
                .contract()
                .clone()
        })
        .collect()
}

/// Instantiates an environment by name.
pub fn make_env(name: &str, options: &EnvOptions) -> Result<Arc<dyn Environment>> {
    if options.episode_steps == Some(0) {
        return Err(Error::config("env_options.episode_steps", "must be at least 1"));
    }
    let env: Arc<dyn Environment> = match name {
        "cartpole_vary" => {
            let mut e = CartPole::new(CartPoleParams::default());
            if let Some(s) = options.episode_steps {
                e.set_episode_steps(s);
            }
            Arc::new(e)
        }
        "reacher_vary" => {
            let mut e = Reacher::new(ReacherParams::default());
            if let Some(s) = options.episode_steps {
                e.set_episode_steps(s);
            }
            Arc::new(e)
        }
        "acrobot_vary" => {
            let mut e = Acrobot::new(AcrobotParams::default());
            if let Some(s) = options.episode_steps {
                e.set_episode_steps(s);
            }
            Arc::new(e)
        }
        "external" => {
            let cfg = options.external.as_ref().ok_or_else(|| {
                Error::config("env_options.external", "required for env = \"external\"")
            })?;
            Arc::new(ExternalEnv::connect(cfg.clone())?)
        }
        other => {
            return Err(Error::config(
                "env",
                format!(
                    "unknown environment `{other}` (known: {}, external)",
                    BUILTIN_NAMES.join(", ")
                ),
            ))
        }
    };
    Ok(env)
}

pub(crate) fn space_for(name: &str) -> MorphologySpace {
    morphospace::preset(name).expect("built-in presets exist")
}
