//! The subprocess adapter against small `sh` simulators.

use std::path::{Path, PathBuf};

use generalist::envs::external::{box_field, ExternalConfig, ExternalEnv};
use generalist::envs::{Environment, STEP_COST_CAP};
use generalist::morphospace::{cartpole, Morphology};
use generalist::neuro::{Controller, ControllerSpec, Genome};
use generalist::Error;

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn config(path: &Path) -> ExternalConfig {
    let mut c = ExternalConfig::new("sh", cartpole());
    c.args = vec![path.display().to_string()];
    c.episode_steps = 3;
    c.timeout_secs = 5.0;
    c
}

fn controller(obs: usize) -> Controller {
    let spec = ControllerSpec::new(obs, 1);
    Controller::new(spec, Genome::zeros(&spec)).unwrap()
}

/// Answers every episode with three observations and `DONE cost=<body>`.
fn simulator(obs: &str, done: &str) -> String {
    format!(
        r#"echo "HELLO obs=2 act=1 box={box}"
while read cmd a b c d; do
  [ "$cmd" = EPISODE ] || continue
  x=${{a#x=}}
  for i in 1 2 3; do
    echo "OBS {obs}"
    read act
  done
  echo "DONE cost={done}"
done
"#,
        box = box_field(&cartpole())
    )
}

#[test]
fn fixed_cost_is_passed_through() {
    let tmp = tempfile::tempdir().unwrap();
    let p = script(tmp.path(), "fixed.sh", &simulator("0.5 -0.25", "5.0"));
    let env = ExternalEnv::connect(config(&p)).unwrap();
    assert_eq!(env.contract().obs_dim, 2);
    let r = env.run_episode(Morphology::new(0.8, 0.3), &mut controller(2), 1).unwrap();
    assert_eq!(r.cost, 5.0);
    assert_eq!(r.steps_executed, 3);
    assert!(!r.terminated_early);
}

#[test]
fn morphology_round_trips_at_full_precision() {
    let tmp = tempfile::tempdir().unwrap();
    let p = script(tmp.path(), "echo.sh", &simulator("0 0", "$x"));
    let env = ExternalEnv::connect(config(&p)).unwrap();
    let x = 0.1 + 0.2 + 0.4;
    let r = env.run_episode(Morphology::new(x, 0.3), &mut controller(2), 1).unwrap();
    assert_eq!(r.cost, x);
}

#[test]
fn rewards_are_negated() {
    let tmp = tempfile::tempdir().unwrap();
    let p = script(tmp.path(), "reward.sh", &simulator("1 1", "12.5"));
    let mut c = config(&p);
    c.reports_reward = true;
    let env = ExternalEnv::connect(c).unwrap();
    let r = env.run_episode(Morphology::new(0.8, 0.3), &mut controller(2), 1).unwrap();
    assert_eq!(r.cost, -12.5);
}

#[test]
fn dying_simulator_costs_the_cap_and_restarts() {
    let tmp = tempfile::tempdir().unwrap();
    let flag = tmp.path().join("died");
    let body = format!(
        r#"echo "HELLO obs=2 act=1 box={box}"
while read cmd rest; do
  [ "$cmd" = EPISODE ] || continue
  echo "OBS 0 0"
  read act
  if [ ! -e {flag} ]; then touch {flag}; exit 1; fi
  echo "DONE cost=2.0"
done
"#,
        box = box_field(&cartpole()),
        flag = flag.display()
    );
    let p = script(tmp.path(), "dies.sh", &body);
    let env = ExternalEnv::connect(config(&p)).unwrap();
    let m = Morphology::new(0.8, 0.3);
    let first = env.run_episode(m, &mut controller(2), 1).unwrap();
    assert!(first.terminated_early);
    assert_eq!(first.cost, STEP_COST_CAP * 3.0);
    let second = env.run_episode(m, &mut controller(2), 2).unwrap();
    assert_eq!(second.cost, 2.0);
}

#[test]
fn wrong_controller_size_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let p = script(tmp.path(), "fixed.sh", &simulator("0.5 -0.25", "5.0"));
    let env = ExternalEnv::connect(config(&p)).unwrap();
    match env.run_episode(Morphology::new(0.8, 0.3), &mut controller(4), 1) {
        Err(Error::Config { .. }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn mismatched_box_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let p = script(tmp.path(), "box.sh", "echo \"HELLO obs=2 act=1 box=0,1,0,1\"\ncat >/dev/null\n");
    match ExternalEnv::connect(config(&p)) {
        Err(Error::Config { key, .. }) => assert_eq!(key, "env_options.external"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn silent_simulator_times_out() {
    let tmp = tempfile::tempdir().unwrap();
    let p = script(tmp.path(), "silent.sh", "sleep 5\n");
    let mut c = config(&p);
    c.timeout_secs = 0.3;
    assert!(matches!(ExternalEnv::connect(c), Err(Error::External(_))));
}
