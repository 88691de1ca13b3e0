//! Adapter for simulators running in a child process.
//!
//! Line protocol over the child's stdin/stdout (UTF-8):
//!
//! ```text
//! child  -> HELLO obs=<n> act=<m> box=<x_lo,x_hi,y_lo,y_hi>
//! parent -> EPISODE x=<f> y=<f> seed=<u64> steps=<n>
//! child  -> OBS v1 ... vn          (repeated)
//! parent -> ACT a1 ... am
//! child  -> DONE cost=<f>
//! ```
//!
//! Numbers go out with 17 significant digits. A protocol violation, a
//! timeout or the child exiting marks the episode as diverged with the capped
//! cost; the child is restarted on the next episode.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Mutex, TryLockError};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{EnvironmentContract, EpisodeResult, STEP_COST_CAP};
use crate::error::{Error, Result};
use crate::morphospace::{self, Interval, Morphology, MorphologySpace, GRID_TOL};
use crate::neuro::Controller;

fn default_timeout() -> f64 {
    30.0
}

fn default_pool() -> usize {
    1
}

fn default_steps() -> usize {
    1000
}

fn default_dt() -> f64 {
    0.02
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalConfig {
    pub command: String,
    #[serde(default)]
    pub args: Vec<String>,
    /// Name of a morphology preset; alternative to `space`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub space: Option<MorphologySpace>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_pool")]
    pub pool_size: usize,
    /// The child reports rewards; the adapter negates them into costs.
    #[serde(default)]
    pub reports_reward: bool,
    #[serde(default = "default_steps")]
    pub episode_steps: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

impl ExternalConfig {
    pub fn new(command: impl Into<String>, space: MorphologySpace) -> Self {
        Self {
            command: command.into(),
            args: Vec::new(),
            preset: None,
            space: Some(space),
            timeout_secs: default_timeout(),
            pool_size: default_pool(),
            reports_reward: false,
            episode_steps: default_steps(),
            dt: default_dt(),
        }
    }

    fn resolve_space(&self) -> Result<MorphologySpace> {
        match (&self.space, &self.preset) {
            (Some(s), _) => {
                s.validate()?;
                Ok(s.clone())
            }
            (None, Some(name)) => morphospace::preset(name).ok_or_else(|| {
                Error::config("env_options.external.preset", format!("unknown preset `{name}`"))
            }),
            (None, None) => Err(Error::config(
                "env_options.external.space",
                "either `space` or `preset` is required",
            )),
        }
    }
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Hello {
    obs: usize,
    act: usize,
    bbox: [f64; 4],
}

pub struct ExternalEnv {
    config: ExternalConfig,
    contract: EnvironmentContract,
    slots: Vec<Mutex<Option<Process>>>,
}

impl std::fmt::Debug for ExternalEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalEnv")
            .field("config", &self.config)
            .field("contract", &self.contract)
            .finish_non_exhaustive()
    }
}

fn parse_hello(line: &str) -> std::result::Result<Hello, String> {
    let mut it = line.split_whitespace();
    if it.next() != Some("HELLO") {
        return Err(format!("expected HELLO, got `{line}`"));
    }
    let (mut obs, mut act, mut bbox) = (None, None, None);
    for tok in it {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| format!("malformed token `{tok}`"))?;
        match k {
            "obs" => obs = Some(v.parse::<usize>().map_err(|e| e.to_string())?),
            "act" => act = Some(v.parse::<usize>().map_err(|e| e.to_string())?),
            "box" => {
                let vals: Vec<f64> = v
                    .split(',')
                    .map(|s| s.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| e.to_string())?;
                if vals.len() != 4 {
                    return Err("box needs four numbers".into());
                }
                bbox = Some([vals[0], vals[1], vals[2], vals[3]]);
            }
            _ => return Err(format!("unknown HELLO field `{k}`")),
        }
    }
    match (obs, act, bbox) {
        (Some(obs), Some(act), Some(bbox)) if obs > 0 && act > 0 => Ok(Hello { obs, act, bbox }),
        _ => Err(format!("incomplete HELLO `{line}`")),
    }
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl ExternalEnv {
    /// Spawns the first child and validates its handshake against the
    /// configured morphology space.
    pub fn connect(config: ExternalConfig) -> Result<Self> {
        if config.pool_size == 0 {
            return Err(Error::config("env_options.external.pool_size", "must be at least 1"));
        }
        if !(config.timeout_secs > 0.0) {
            return Err(Error::config("env_options.external.timeout_secs", "must be positive"));
        }
        if config.episode_steps == 0 {
            return Err(Error::config("env_options.external.episode_steps", "must be at least 1"));
        }
        let space = config.resolve_space()?;
        let (process, hello) = Self::spawn(&config)?;
        let train = [space.x_train.lo, space.x_train.hi, space.y_train.lo, space.y_train.hi];
        if hello
            .bbox
            .iter()
            .zip(&train)
            .any(|(a, b)| (a - b).abs() > GRID_TOL * b.abs().max(1.0))
        {
            return Err(Error::config(
                "env_options.external",
                format!(
                    "simulator box {:?} does not match the training box {:?}",
                    hello.bbox, train
                ),
            ));
        }
        let contract = EnvironmentContract {
            name: "external".into(),
            obs_dim: hello.obs,
            act_dim: hello.act,
            morph_space: space,
            episode_steps: config.episode_steps,
            dt: config.dt,
        };
        let mut slots: Vec<Mutex<Option<Process>>> =
            (0..config.pool_size).map(|_| Mutex::new(None)).collect();
        *slots[0].get_mut().expect("fresh mutex") = Some(process);
        Ok(Self {
            config,
            contract,
            slots,
        })
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.config.timeout_secs)
    }

    fn spawn(config: &ExternalConfig) -> Result<(Process, Hello)> {
        let mut child = Command::new(&config.command)
            .args(&config.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::External(format!("cannot start `{}`: {e}", config.command)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(l).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        });
        let process = Process {
            child,
            stdin,
            lines: rx,
        };
        let line = process
            .lines
            .recv_timeout(Duration::from_secs_f64(config.timeout_secs))
            .map_err(|_| Error::External("no HELLO from simulator".into()))?;
        let hello = parse_hello(line.trim()).map_err(Error::External)?;
        Ok((process, hello))
    }

    fn checkout(&self, seed: u64) -> std::sync::MutexGuard<'_, Option<Process>> {
        for slot in &self.slots {
            match slot.try_lock() {
                Ok(g) => return g,
                Err(TryLockError::Poisoned(p)) => return p.into_inner(),
                Err(TryLockError::WouldBlock) => {}
            }
        }
        let idx = (seed % self.slots.len() as u64) as usize;
        self.slots[idx].lock().unwrap_or_else(|p| p.into_inner())
    }

    fn episode(
        &self,
        proc_: &mut Process,
        morphology: Morphology,
        controller: &mut Controller,
        seed: u64,
    ) -> std::result::Result<(f64, usize), String> {
        let steps = self.contract.episode_steps;
        let deadline = Instant::now() + self.timeout();
        writeln!(
            proc_.stdin,
            "EPISODE x={} y={} seed={seed} steps={steps}",
            fmt17(morphology.x),
            fmt17(morphology.y)
        )
        .and_then(|_| proc_.stdin.flush())
        .map_err(|e| format!("write failed: {e}"))?;
        let mut obs: Vec<f64> = vec![0.0; self.contract.obs_dim];
        let mut act = vec![0.0; self.contract.act_dim];
        let mut executed = 0;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            let line = match proc_.lines.recv_timeout(remaining) {
                Ok(l) => l,
                Err(RecvTimeoutError::Timeout) => return Err("episode timed out".into()),
                Err(RecvTimeoutError::Disconnected) => return Err("simulator exited".into()),
            };
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("DONE") {
                let v = rest
                    .trim()
                    .strip_prefix("cost=")
                    .ok_or_else(|| format!("malformed DONE `{line}`"))?;
                let v: f64 = v.parse().map_err(|_| format!("malformed DONE `{line}`"))?;
                return Ok((v, executed));
            }
            let rest = line
                .strip_prefix("OBS")
                .ok_or_else(|| format!("unexpected line `{line}`"))?;
            let mut n = 0;
            for tok in rest.split_whitespace() {
                if n >= obs.len() {
                    return Err(format!("too many observation values in `{line}`"));
                }
                obs[n] = tok.parse().map_err(|_| format!("bad number `{tok}`"))?;
                n += 1;
            }
            if n != obs.len() {
                return Err(format!("expected {} observation values, got {n}", obs.len()));
            }
            if obs.iter().any(|v| !v.is_finite()) {
                return Err("non-finite observation".into());
            }
            controller
                .forward_into(&obs, &mut act)
                .map_err(|e| e.to_string())?;
            let body: Vec<String> = act.iter().map(|&a| fmt17(a)).collect();
            writeln!(proc_.stdin, "ACT {}", body.join(" "))
                .and_then(|_| proc_.stdin.flush())
                .map_err(|e| format!("write failed: {e}"))?;
            executed += 1;
        }
    }
}

impl super::Environment for ExternalEnv {
    fn contract(&self) -> &EnvironmentContract {
        &self.contract
    }

    fn run_episode(
        &self,
        morphology: Morphology,
        controller: &mut Controller,
        seed: u64,
    ) -> Result<EpisodeResult> {
        super::check_episode_inputs(&self.contract, morphology, controller)?;
        let steps = self.contract.episode_steps;
        let mut slot = self.checkout(seed);
        if slot.is_none() {
            match Self::spawn(&self.config) {
                Ok((p, hello)) if hello.obs == self.contract.obs_dim && hello.act == self.contract.act_dim => {
                    *slot = Some(p);
                }
                Ok(_) => {
                    return Err(Error::External(
                        "restarted simulator changed its dimensions".into(),
                    ))
                }
                Err(e) => {
                    log::warn!("external simulator restart failed: {e}");
                    return Ok(capped(steps, 0));
                }
            }
        }
        let proc_ = slot.as_mut().expect("slot filled above");
        match self.episode(proc_, morphology, controller, seed) {
            Ok((value, executed)) if value.is_finite() => Ok(EpisodeResult {
                cost: if self.config.reports_reward { -value } else { value },
                steps_executed: executed,
                terminated_early: false,
            }),
            Ok((value, executed)) => {
                log::warn!("external simulator reported non-finite cost {value}");
                Ok(capped(steps, executed))
            }
            Err(msg) => {
                log::warn!("external episode failed (seed {seed}): {msg}");
                *slot = None;
                Ok(capped(steps, 0))
            }
        }
    }
}

fn capped(steps: usize, executed: usize) -> EpisodeResult {
    EpisodeResult {
        cost: STEP_COST_CAP * steps as f64,
        steps_executed: executed,
        terminated_early: true,
    }
}

/// Training box of a space as a handshake `box=` value.
pub fn box_field(space: &MorphologySpace) -> String {
    let Interval { lo: xl, hi: xh } = space.x_train;
    let Interval { lo: yl, hi: yh } = space.y_train;
    format!("{xl},{xh},{yl},{yh}")
}
