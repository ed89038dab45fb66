use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pid::{pid_action, PidBootstrap};
use super::policy::MetaPolicy;
use super::replay::{Batch, Features, ReplayBuffer, Transition};
use super::sac::{SacHyper, SacState};
use super::MslError;
use crate::env::{
    CurriculumTracker, EnvConfig, EpisodeStatus, NavEnv, Observation, RawObservation,
};
use crate::eval;
use crate::nets::{
    policy_forward_batch, save_weights, ActionMap, Architecture, FeatureEncoder, NetConfig, NetKind, NetworkParams,
    PolicyMode, Role,
};
use crate::vehicle::{DimensionalConfig, VelocityCommand};
use crate::world::WorldLayout;
use crate::{ensure, ConfigError};

/// How the trainer scores the current policy at each evaluation boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrainEval {
    /// Four goal points visited in turn from the origin of the stage layout.
    Goals,
    /// Fixed set of random start/goal episodes.
    Random { episodes: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub l2: f64,
    pub lr_policy: f64,
    pub lr_critic: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub total_steps: usize,
    pub bootstrap_episodes: usize,
    pub eval_every: usize,
    pub policy_delay: usize,
    /// Append the robot radius to observations and resample it per episode.
    pub radius_input: bool,
    pub radius_range: [f64; 2],
    pub pid: PidBootstrap,
    pub net: NetConfig,
    pub eval: TrainEval,
    /// Stop as soon as an evaluation reaches this success rate.
    pub stop_at_success: Option<f64>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 0.2,
            l2: 1e-4,
            lr_policy: 3e-4,
            lr_critic: 3e-4,
            tau: 0.005,
            batch_size: 128,
            buffer_capacity: 200_000,
            total_steps: 200_000,
            bootstrap_episodes: 100,
            eval_every: 2000,
            policy_delay: 2,
            radius_input: false,
            radius_range: [0.2, 0.5],
            pid: PidBootstrap::default(),
            net: NetConfig::default(),
            eval: TrainEval::Goals,
            stop_at_success: None,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        ensure((0.0..=1.0).contains(&self.gamma), "trainer.gamma", "must lie in [0, 1]")?;
        ensure(self.alpha > 0.0, "trainer.alpha", "must be positive")?;
        ensure(self.l2 >= 0.0, "trainer.l2", "must be non-negative")?;
        ensure(self.lr_policy > 0.0, "trainer.lr_policy", "must be positive")?;
        ensure(self.lr_critic > 0.0, "trainer.lr_critic", "must be positive")?;
        ensure(self.tau > 0.0 && self.tau <= 1.0, "trainer.tau", "must lie in (0, 1]")?;
        ensure(self.batch_size >= 1, "trainer.batch_size", "must be at least 1")?;
        ensure(
            self.buffer_capacity >= self.batch_size,
            "trainer.buffer_capacity",
            "must hold at least one minibatch",
        )?;
        ensure(self.eval_every >= 1, "trainer.eval_every", "must be at least 1")?;
        ensure(self.policy_delay >= 1, "trainer.policy_delay", "must be at least 1")?;
        let [lo, hi] = self.radius_range;
        ensure(lo > 0.0 && lo <= hi, "trainer.radius_range", "needs 0 < min <= max")?;
        if let TrainEval::Random { episodes, .. } = self.eval {
            ensure(episodes >= 1, "trainer.eval.episodes", "must be at least 1")?;
        }
        if let Some(s) = self.stop_at_success {
            ensure((0.0..=1.0).contains(&s), "trainer.stop_at_success", "must lie in [0, 1]")?;
        }
        self.pid.validate().map_err(|e| ConfigError::new(format!("trainer.{}", e.field), e.message))?;
        ensure(!self.net.hidden.is_empty(), "trainer.net.hidden", "needs at least one layer")
    }

    pub fn hyper(&self) -> SacHyper {
        SacHyper {
            gamma: self.gamma,
            alpha: self.alpha,
            l2: self.l2,
            tau: self.tau,
        }
    }

    pub fn architecture(&self, kind: NetKind, env: &EnvConfig) -> Result<Architecture, MslError> {
        Ok(Architecture::new(kind, &self.net, env.lidar.n_beams, self.radius_input)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Episode,
    Eval,
}

/// One metrics row: a finished episode or an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub kind: RecordKind,
    pub total_steps: usize,
    pub episode: usize,
    pub stage: usize,
    pub bootstrap: bool,
    pub episode_length: usize,
    pub episode_return: Option<f64>,
    pub outcome: Option<EpisodeStatus>,
    pub eval_score: Option<f64>,
    /// Curriculum window rate for episodes; evaluation success rate for evals.
    pub success_rate: f64,
    pub critic_loss: Option<f64>,
    pub policy_loss: Option<f64>,
    pub critic_updates: usize,
    pub policy_updates: usize,
}

const METRICS_HEADER: &str = "kind,total_steps,episode,stage,bootstrap,episode_length,episode_return,outcome,eval_score,success_rate,critic_loss,policy_loss,critic_updates,policy_updates";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.6}"))
}

pub fn write_metrics_csv<W: Write>(rows: &[MetricsRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{:.6},{},{},{},{}",
            match r.kind {
                RecordKind::Episode => "episode",
                RecordKind::Eval => "eval",
            },
            r.total_steps,
            r.episode,
            r.stage,
            u8::from(r.bootstrap),
            r.episode_length,
            opt(r.episode_return),
            r.outcome.map_or("", |o| o.as_str()),
            opt(r.eval_score),
            r.success_rate,
            opt(r.critic_loss),
            opt(r.policy_loss),
            r.critic_updates,
            r.policy_updates,
        )?;
    }
    Ok(())
}

/// Everything the trainer saw at one environment step.
pub struct StepInfo<'a> {
    pub total_steps: usize,
    pub episode: usize,
    pub bootstrap: bool,
    pub raw: &'a RawObservation,
    pub command: VelocityCommand,
    pub action: [f64; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TrainerState {
    seed: u64,
    total_steps: usize,
    episodes: usize,
    stage: usize,
    curriculum: CurriculumTracker,
    config: TrainerConfig,
}

pub struct TrainOutcome {
    pub sac: SacState,
    pub records: Vec<MetricsRecord>,
    pub buffer: ReplayBuffer<Transition>,
    pub total_steps: usize,
    pub episodes: usize,
    pub final_stage: usize,
    pub stopped_early: bool,
}

impl TrainOutcome {
    pub fn evals(&self) -> impl Iterator<Item = &MetricsRecord> {
        self.records.iter().filter(|r| r.kind == RecordKind::Eval)
    }
}

/// Independent generator per consumer, all derived from the run seed.
fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

fn features(enc: &FeatureEncoder, obs: &Observation) -> Result<Features, MslError> {
    Ok(enc.encode(obs)?.into_iter().map(|v| v as f32).collect())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

struct Checkpointer<'p> {
    dir: Option<&'p Path>,
}

impl Checkpointer<'_> {
    fn save(&self, sac: &SacState, records: &[MetricsRecord], state: &TrainerState, final_weights: bool) -> Result<(), MslError> {
        let Some(dir) = self.dir else { return Ok(()) };
        fs::create_dir_all(dir)?;
        let name = if final_weights { "weights.bin" } else { "checkpoint.bin" };
        save_weights(&dir.join(name), &sac.networks())?;
        write_atomic(&dir.join("trainer_state.json"), &serde_json::to_vec_pretty(state)?)?;
        let mut csv = Vec::new();
        write_metrics_csv(records, &mut csv)?;
        write_atomic(&dir.join("metrics.csv"), &csv)?;
        Ok(())
    }
}

pub fn train(
    cfg: &TrainerConfig,
    env_cfg: &EnvConfig,
    curriculum: &[Arc<WorldLayout>],
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, MslError> {
    train_with_observer(cfg, env_cfg, curriculum, seed, out_dir, &mut |_| {})
}

/// Soft actor-critic over a curriculum of layouts. The first
/// `bootstrap_episodes` are driven by the PID controller; every later
/// episode of length T is followed by T critic updates and a policy update
/// on every `policy_delay`-th of them.
pub fn train_with_observer(
    cfg: &TrainerConfig,
    env_cfg: &EnvConfig,
    curriculum: &[Arc<WorldLayout>],
    seed: u64,
    out_dir: Option<&Path>,
    observer: &mut dyn FnMut(&StepInfo),
) -> Result<TrainOutcome, MslError> {
    cfg.validate()?;
    env_cfg.validate()?;
    if curriculum.is_empty() {
        return Err(ConfigError::new("env.curriculum", "needs at least one layout").into());
    }
    let hp = cfg.hyper();
    let mut init_rng = stream(seed, 0);
    let mut env_rng = stream(seed, 1);
    let mut act_rng = stream(seed, 2);
    let mut replay_rng = stream(seed, 3);
    let mut update_rng = stream(seed, 4);
    let mut radius_rng = stream(seed, 5);

    let pa = cfg.architecture(NetKind::Policy, env_cfg)?;
    let ca = cfg.architecture(NetKind::Critic, env_cfg)?;
    let encoder = FeatureEncoder::new(&pa, &env_cfg.preprocess);
    let policy = NetworkParams::init(Role::Policy, pa, &mut init_rng)?;
    let c1 = NetworkParams::init(Role::Critic1, ca.clone(), &mut init_rng)?;
    let c2 = NetworkParams::init(Role::Critic2, ca, &mut init_rng)?;
    let mut sac = SacState::new(policy, c1, c2, cfg.lr_policy, cfg.lr_critic);

    let mut env = NavEnv::new(curriculum[0].clone(), env_cfg.clone());
    let mut tracker = CurriculumTracker::new(curriculum.len());
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut records = Vec::new();
    let ckpt = Checkpointer { dir: out_dir };
    let mut total_steps = 0;
    let mut episode = 0;
    let mut stopped_early = false;

    let state = |total_steps, episode, tracker: &CurriculumTracker| TrainerState {
        seed,
        total_steps,
        episodes: episode,
        stage: tracker.stage(),
        curriculum: tracker.clone(),
        config: cfg.clone(),
    };

    'episodes: while total_steps < cfg.total_steps {
        let stage = tracker.stage();
        env.set_layout(curriculum[stage].clone());
        let robot = if cfg.radius_input {
            let [lo, hi] = cfg.radius_range;
            DimensionalConfig {
                radius: if lo < hi { radius_rng.gen_range(lo..=hi) } else { lo },
                ..env_cfg.robot
            }
        } else {
            env_cfg.robot
        };
        env.set_robot(robot);
        let map = ActionMap::for_robot(&robot)?;
        let radius_obs = cfg.radius_input.then_some(robot.radius);
        let bootstrap = episode < cfg.bootstrap_episodes;

        let mut raw = env.reset_random(&mut env_rng)?;
        let mut obs = raw.process(&env_cfg.preprocess)?;
        obs.radius = radius_obs;
        let mut s = features(&encoder, &obs)?;
        let mut ep_return = 0.0;
        let mut length = 0;
        let mut status = EpisodeStatus::Running;

        while status == EpisodeStatus::Running && total_steps < cfg.total_steps {
            let (cmd, a) = if bootstrap {
                let cmd = pid_action(&raw, &cfg.pid, &env_cfg.lidar, &robot);
                (cmd, map.normalize(cmd)?)
            } else {
                let x = Array2::from_shape_fn((1, s.len()), |(_, j)| f64::from(s[j]));
                let out = policy_forward_batch(x, &sac.policy, PolicyMode::Stochastic, &mut act_rng)?[0];
                (map.denormalize(out.action)?, out.action)
            };
            observer(&StepInfo {
                total_steps,
                episode,
                bootstrap,
                raw: &raw,
                command: cmd,
                action: a,
            });
            let step = env.step(cmd)?;
            status = step.status;
            let mut next = step.observation;
            next.radius = radius_obs;
            let s_next = features(&encoder, &next)?;
            buffer.push(Transition {
                s: s.clone(),
                a,
                r: step.reward,
                s_next: s_next.clone(),
                done: Transition::done_for(status),
                status,
            });
            ep_return += step.reward;
            length += 1;
            total_steps += 1;
            raw = step.raw;
            s = s_next;

            if total_steps % cfg.eval_every == 0 {
                let (score, rate) = evaluate(cfg, env_cfg, &curriculum[tracker.stage()], &sac.policy)?;
                records.push(MetricsRecord {
                    kind: RecordKind::Eval,
                    total_steps,
                    episode,
                    stage: tracker.stage(),
                    bootstrap,
                    episode_length: 0,
                    episode_return: None,
                    outcome: None,
                    eval_score: Some(score),
                    success_rate: rate,
                    critic_loss: None,
                    policy_loss: None,
                    critic_updates: 0,
                    policy_updates: 0,
                });
                ckpt.save(&sac, &records, &state(total_steps, episode, &tracker), false)?;
                if cfg.stop_at_success.is_some_and(|t| rate >= t) {
                    stopped_early = true;
                    episode += 1;
                    break 'episodes;
                }
            }
        }

        let (mut critic_updates, mut policy_updates) = (0, 0);
        let (mut closs, mut ploss) = (0.0, 0.0);
        if !bootstrap {
            for t in 0..length {
                let Some(sample) = buffer.sample(cfg.batch_size, &mut replay_rng) else {
                    break;
                };
                let batch = Batch::from_transitions(&sample);
                let st = sac.critic_update(&batch, &hp, &mut update_rng)?;
                closs += 0.5 * (st.loss1 + st.loss2);
                critic_updates += 1;
                if t % cfg.policy_delay == 0 {
                    ploss += sac.policy_update(&batch, &hp, &mut update_rng)?;
                    policy_updates += 1;
                }
            }
        }
        let mut success_rate = tracker.success_rate();
        if !bootstrap && status.is_terminal() {
            tracker.update(status)?;
            success_rate = tracker.last_rate();
        }
        records.push(MetricsRecord {
            kind: RecordKind::Episode,
            total_steps,
            episode,
            stage,
            bootstrap,
            episode_length: length,
            episode_return: Some(ep_return),
            outcome: Some(status),
            eval_score: None,
            success_rate,
            critic_loss: (critic_updates > 0).then(|| closs / critic_updates as f64),
            policy_loss: (policy_updates > 0).then(|| ploss / policy_updates as f64),
            critic_updates,
            policy_updates,
        });
        episode += 1;
    }

    ckpt.save(&sac, &records, &state(total_steps, episode, &tracker), true)?;
    Ok(TrainOutcome {
        sac,
        records,
        buffer,
        total_steps,
        episodes: episode,
        final_stage: tracker.stage(),
        stopped_early,
    })
}

/// Deterministic evaluation of a policy snapshot on `layout`; returns the
/// total score and the success rate.
pub fn evaluate(
    cfg: &TrainerConfig,
    env_cfg: &EnvConfig,
    layout: &Arc<WorldLayout>,
    policy: &NetworkParams,
) -> Result<(f64, f64), MslError> {
    let mut ctl = MetaPolicy::new(policy.clone(), env_cfg.preprocess, &env_cfg.robot)?;
    match &cfg.eval {
        TrainEval::Goals => {
            let rep = eval::run_goals(env_cfg, layout.clone(), &mut ctl)?;
            Ok((rep.total_score, rep.success_rate()))
        }
        TrainEval::Random { episodes, seed } => {
            let rep = eval::run_random_episodes(env_cfg, layout.clone(), &mut ctl, *episodes, *seed)?;
            Ok((rep.total_score(), rep.success_rate()))
        }
    }
}
