use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{ControlError, Controller, Observation, PreprocessConfig, RawObservation};
use crate::nets::{policy_forward, ActionMap, FeatureEncoder, NetError, NetworkParams, PolicyMode};
use crate::vehicle::{DimensionalConfig, VelocityCommand};

/// Deterministic controller around a trained policy network.
#[derive(Clone, Debug)]
pub struct MetaPolicy {
    params: NetworkParams,
    encoder: FeatureEncoder,
    map: ActionMap,
    preprocess: PreprocessConfig,
    radius: Option<f64>,
}

impl MetaPolicy {
    pub fn new(params: NetworkParams, preprocess: PreprocessConfig, robot: &DimensionalConfig) -> Result<Self, NetError> {
        params.validate()?;
        let encoder = FeatureEncoder::new(&params.arch, &preprocess);
        let radius = params.arch.radius_input.then_some(robot.radius);
        Ok(Self {
            map: ActionMap::for_robot(robot)?,
            params,
            encoder,
            preprocess,
            radius,
        })
    }

    pub fn params(&self) -> &NetworkParams {
        &self.params
    }

    pub fn action_map(&self) -> &ActionMap {
        &self.map
    }

    /// Command for an already pre-processed observation. Radius-conditioned
    /// networks get the configured radius when the observation lacks one.
    pub fn command(&self, obs: &Observation) -> Result<VelocityCommand, NetError> {
        let out = match (self.radius, obs.radius) {
            (Some(r), None) => {
                let mut o = obs.clone();
                o.radius = Some(r);
                self.forward(&o)?
            }
            _ => self.forward(obs)?,
        };
        self.map.denormalize(out)
    }

    fn forward(&self, obs: &Observation) -> Result<[f64; 2], NetError> {
        // deterministic mode draws no noise
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(policy_forward(obs, &self.params, &self.encoder, PolicyMode::Deterministic, &mut rng)?.action)
    }

    /// Adapter for use as the meta policy inside a transfer wrapper.
    pub fn as_meta_fn(&self) -> impl FnMut(&Observation) -> Result<VelocityCommand, ControlError> + '_ {
        move |o: &Observation| self.command(o).map_err(|e| Box::new(e) as ControlError)
    }
}

impl Controller for MetaPolicy {
    fn act(&mut self, raw: &RawObservation) -> Result<VelocityCommand, ControlError> {
        let obs = raw.process(&self.preprocess)?;
        Ok(self.command(&obs)?)
    }
}
