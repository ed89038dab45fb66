//! Meta-skill learning: soft actor-critic training of the meta robot's
//! controller with a PID-driven warm start, policy weight decay, delayed
//! policy updates and a curriculum of shrinking rooms.

mod pid;
mod policy;
mod replay;
mod sac;
mod trainer;

use thiserror::Error;

use crate::env::EnvError;
use crate::eval::EvalError;
use crate::nets::NetError;
use crate::world::WorldError;
use crate::ConfigError;

pub use pid::{pid_action, PidBootstrap};
pub use policy::MetaPolicy;
pub use replay::{Batch, Features, ReplayBuffer, Transition};
pub use sac::{
    critic_loss, critic_targets, policy_loss, sample_noise, ActionValue, CriticStats, LossAndGrads, SacHyper, SacState,
    TwinCritic,
};
pub use trainer::{
    evaluate, train, train_with_observer, write_metrics_csv, MetricsRecord, RecordKind, StepInfo, TrainEval,
    TrainOutcome, TrainerConfig,
};

#[derive(Debug, Error)]
pub enum MslError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
