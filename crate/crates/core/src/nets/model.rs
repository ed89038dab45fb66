use std::f64::consts::{LN_2, PI};

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::tape::{Conv1dShape, Tape, Var};
use super::NetError;
use crate::env::{Observation, PreprocessConfig};

/// Scan-processing front end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScanEncoder {
    /// Strided 1-D convolutions over the full scan.
    Conv {
        channels: Vec<usize>,
        kernel: usize,
        strides: Vec<usize>,
    },
    /// Pool the scan to `beams` sectors (closest reading wins), no convolution.
    Downsample { beams: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub encoder: ScanEncoder,
    pub hidden: Vec<usize>,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            encoder: ScanEncoder::Conv {
                channels: vec![16, 16],
                kernel: 5,
                strides: vec![2, 2],
            },
            hidden: vec![256, 256],
            log_std_min: -20.0,
            log_std_max: 2.0,
        }
    }
}

impl NetConfig {
    /// Small pooled network used for fast training runs.
    pub fn downsampled(beams: usize, hidden: Vec<usize>) -> Self {
        Self {
            encoder: ScanEncoder::Downsample { beams },
            hidden,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    Policy,
    Critic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Policy,
    Critic1,
    Critic2,
    TargetCritic1,
    TargetCritic2,
}

impl Role {
    pub fn kind(self) -> NetKind {
        match self {
            Role::Policy => NetKind::Policy,
            _ => NetKind::Critic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Fully resolved network shape; stored alongside saved weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: NetKind,
    /// Beams in the raw scan.
    pub n_beams: usize,
    /// Scan features entering the network (equals `n_beams` unless pooled).
    pub scan_in: usize,
    pub radius_input: bool,
    pub conv: Vec<ConvLayer>,
    pub hidden: Vec<usize>,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

pub const ACTION_DIM: usize = 2;
const BASE_AUX: usize = 4;

impl Architecture {
    pub fn new(kind: NetKind, cfg: &NetConfig, n_beams: usize, radius_input: bool) -> Result<Self, NetError> {
        let invalid = |m: String| Err(NetError::InvalidArch(m));
        if n_beams == 0 {
            return invalid("scan must have at least one beam".into());
        }
        if cfg.hidden.iter().any(|h| *h == 0) {
            return invalid("hidden widths must be positive".into());
        }
        if !(cfg.log_std_min < cfg.log_std_max) {
            return invalid("log_std_min must be below log_std_max".into());
        }
        let (scan_in, conv) = match &cfg.encoder {
            ScanEncoder::Downsample { beams } => {
                if *beams == 0 || *beams > n_beams {
                    return invalid(format!("cannot pool {n_beams} beams into {beams}"));
                }
                (*beams, Vec::new())
            }
            ScanEncoder::Conv {
                channels,
                kernel,
                strides,
            } => {
                if channels.len() != strides.len() {
                    return invalid("conv channels and strides differ in length".into());
                }
                let mut len = n_beams;
                let mut layers = Vec::new();
                for (c, s) in channels.iter().zip(strides) {
                    if *c == 0 || *s == 0 || *kernel == 0 || *kernel > len {
                        return invalid(format!("conv layer (channels {c}, kernel {kernel}, stride {s}) does not fit length {len}"));
                    }
                    len = (len - kernel) / s + 1;
                    layers.push(ConvLayer {
                        channels: *c,
                        kernel: *kernel,
                        stride: *s,
                    });
                }
                (n_beams, layers)
            }
        };
        Ok(Self {
            kind,
            n_beams,
            scan_in,
            radius_input,
            conv,
            hidden: cfg.hidden.clone(),
            log_std_min: cfg.log_std_min,
            log_std_max: cfg.log_std_max,
        })
    }

    /// Non-scan observation features: v, omega, goal distance, goal bearing[, radius].
    pub fn aux_obs(&self) -> usize {
        BASE_AUX + usize::from(self.radius_input)
    }

    /// Width of an encoded observation row.
    pub fn feature_width(&self) -> usize {
        self.scan_in + self.aux_obs()
    }

    pub fn out_dim(&self) -> usize {
        match self.kind {
            NetKind::Policy => 2 * ACTION_DIM,
            NetKind::Critic => 1,
        }
    }

    fn conv_shapes(&self) -> Vec<Conv1dShape> {
        let mut in_ch = 1;
        let mut len = self.scan_in;
        self.conv
            .iter()
            .map(|l| {
                let s = Conv1dShape {
                    in_ch,
                    len,
                    out_ch: l.channels,
                    kernel: l.kernel,
                    stride: l.stride,
                };
                in_ch = l.channels;
                len = s.out_len();
                s
            })
            .collect()
    }

    fn flat_width(&self) -> usize {
        match self.conv_shapes().last() {
            Some(s) => s.out_ch * s.out_len(),
            None => self.scan_in,
        }
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn tensor_shapes(&self) -> Vec<(String, (usize, usize))> {
        let mut out = Vec::new();
        for (i, s) in self.conv_shapes().iter().enumerate() {
            out.push((format!("conv{i}.w"), (s.out_ch, s.in_ch * s.kernel)));
            out.push((format!("conv{i}.b"), (1, s.out_ch)));
        }
        let action_in = if self.kind == NetKind::Critic { ACTION_DIM } else { 0 };
        let mut width = self.flat_width() + self.aux_obs() + action_in;
        for (i, h) in self.hidden.iter().enumerate() {
            out.push((format!("fc{i}.w"), (width, *h)));
            out.push((format!("fc{i}.b"), (1, *h)));
            width = *h;
        }
        out.push(("head.w".into(), (width, self.out_dim())));
        out.push(("head.b".into(), (1, self.out_dim())));
        out
    }
}

/// One network's parameters. Value semantics: cloning snapshots it.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub role: Role,
    pub arch: Architecture,
    pub tensors: Vec<Array2<f64>>,
}

impl NetworkParams {
    /// Uniform fan-in initialisation; the policy head is shrunk so initial
    /// actions sit near zero.
    pub fn init<R: Rng + ?Sized>(role: Role, arch: Architecture, rng: &mut R) -> Result<Self, NetError> {
        if role.kind() != arch.kind {
            return Err(NetError::InvalidArch(format!("role {role:?} needs a {:?} architecture", role.kind())));
        }
        let shapes = arch.tensor_shapes();
        let n = shapes.len();
        let mut tensors = Vec::with_capacity(n);
        for (i, (name, shape)) in shapes.iter().enumerate() {
            // biases share the fan-in of the weight before them; conv
            // weights are (out_ch, in_ch * kernel), dense ones (in, out)
            let w_shape = shapes[i - i % 2].1;
            let fan_in = if name.starts_with("conv") { w_shape.1 } else { w_shape.0 };
            let bound = 1.0 / (fan_in as f64).sqrt();
            let head_scale = if i >= n - 2 && arch.kind == NetKind::Policy { 0.01 } else { 1.0 };
            tensors.push(Array2::from_shape_fn(*shape, |_| head_scale * rng.gen_range(-bound..=bound)));
        }
        Ok(Self { role, arch, tensors })
    }

    pub fn names(&self) -> Vec<String> {
        self.arch.tensor_shapes().into_iter().map(|(n, _)| n).collect()
    }

    /// Checks tensor count, shapes and finiteness against the architecture.
    pub fn validate(&self) -> Result<(), NetError> {
        if self.role.kind() != self.arch.kind {
            return Err(NetError::InvalidArch(format!("role {:?} with {:?} architecture", self.role, self.arch.kind)));
        }
        let shapes = self.arch.tensor_shapes();
        if shapes.len() != self.tensors.len() {
            return Err(NetError::InvalidArch(format!(
                "expected {} tensors, found {}",
                shapes.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&self.tensors) {
            if t.dim() != *shape {
                return Err(NetError::ArchMismatch {
                    tensor: name.clone(),
                    expected: format!("{shape:?}"),
                    found: format!("{:?}", t.dim()),
                });
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(NetError::NonFinite(name.clone()));
            }
        }
        Ok(())
    }

    /// Fails with the first tensor whose name or shape differs from `expected`.
    pub fn check_arch(&self, expected: &Architecture) -> Result<(), NetError> {
        let mine = self.arch.tensor_shapes();
        let theirs = expected.tensor_shapes();
        for i in 0..mine.len().max(theirs.len()) {
            match (mine.get(i), theirs.get(i)) {
                (Some(a), Some(b)) if a == b => {}
                (found, Some(want)) => {
                    return Err(NetError::ArchMismatch {
                        tensor: want.0.clone(),
                        expected: format!("{:?}", want.1),
                        found: found.map_or("missing".into(), |f| format!("{} {:?}", f.0, f.1)),
                    })
                }
                (Some(extra), None) => {
                    return Err(NetError::ArchMismatch {
                        tensor: extra.0.clone(),
                        expected: "absent".into(),
                        found: format!("{:?}", extra.1),
                    })
                }
                (None, None) => unreachable!(),
            }
        }
        if self.arch != *expected {
            return Err(NetError::ArchMismatch {
                tensor: "<input layout>".into(),
                expected: format!("{expected:?}"),
                found: format!("{:?}", self.arch),
            });
        }
        Ok(())
    }

    pub fn squared_norm(&self) -> f64 {
        self.tensors.iter().map(|t| t.iter().map(|v| v * v).sum::<f64>()).sum()
    }

    /// `self = tau * online + (1 - tau) * self`.
    pub fn polyak_from(&mut self, online: &NetworkParams, tau: f64) {
        for (t, o) in self.tensors.iter_mut().zip(&online.tensors) {
            ndarray::Zip::from(t).and(o).for_each(|t, o| *t = tau * o + (1.0 - tau) * *t);
        }
    }

    /// Copy with a different role tag (e.g. a target network).
    pub fn with_role(&self, role: Role) -> Self {
        Self {
            role,
            ..self.clone()
        }
    }
}

/// Turns observations into network input rows.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureEncoder {
    pub arch_beams: usize,
    pub scan_in: usize,
    pub radius_input: bool,
    /// Whether larger scan features mean closer obstacles (true after the
    /// reciprocal pre-processing).
    pub closest_is_max: bool,
}

impl FeatureEncoder {
    pub fn new(arch: &Architecture, pp: &PreprocessConfig) -> Self {
        Self {
            arch_beams: arch.n_beams,
            scan_in: arch.scan_in,
            radius_input: arch.radius_input,
            closest_is_max: pp.enabled,
        }
    }

    pub fn width(&self) -> usize {
        self.scan_in + BASE_AUX + usize::from(self.radius_input)
    }

    /// Appends one encoded row to `out`.
    pub fn encode_into(&self, obs: &Observation, out: &mut Vec<f64>) -> Result<(), NetError> {
        if obs.scan.len() != self.arch_beams {
            return Err(NetError::ShapeMismatch {
                what: "scan beams".into(),
                expected: self.arch_beams,
                found: obs.scan.len(),
            });
        }
        if obs.radius.is_some() != self.radius_input {
            return Err(NetError::ShapeMismatch {
                what: "radius input".into(),
                expected: usize::from(self.radius_input),
                found: usize::from(obs.radius.is_some()),
            });
        }
        if self.scan_in == self.arch_beams {
            out.extend_from_slice(&obs.scan);
        } else {
            let n = self.arch_beams;
            for g in 0..self.scan_in {
                let sector = &obs.scan[g * n / self.scan_in..(g + 1) * n / self.scan_in];
                let v = if self.closest_is_max {
                    sector.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                } else {
                    sector.iter().copied().fold(f64::INFINITY, f64::min)
                };
                out.push(v);
            }
        }
        out.extend_from_slice(&[obs.v, obs.omega, obs.goal_dist, obs.goal_angle]);
        if let Some(r) = obs.radius {
            out.push(r);
        }
        Ok(())
    }

    pub fn encode(&self, obs: &Observation) -> Result<Vec<f64>, NetError> {
        let mut v = Vec::with_capacity(self.width());
        self.encode_into(obs, &mut v)?;
        Ok(v)
    }

    pub fn encode_batch(&self, obs: &[&Observation]) -> Result<Array2<f64>, NetError> {
        let mut data = Vec::with_capacity(obs.len() * self.width());
        for o in obs {
            self.encode_into(o, &mut data)?;
        }
        Ok(Array2::from_shape_vec((obs.len(), self.width()), data).expect("row width"))
    }
}

/// Forward pass of either network kind. `extra` (the action, for critics)
/// joins the observation features before the dense layers. Returns the
/// output and the tape variables of every parameter tensor.
pub fn forward<'a>(
    tape: &mut Tape<'a>,
    params: &'a NetworkParams,
    x: Var,
    extra: Option<Var>,
    requires_grad: bool,
) -> Result<(Var, Vec<Var>), NetError> {
    let arch = &params.arch;
    let (rows, cols) = tape.shape(x);
    if cols != arch.feature_width() {
        return Err(NetError::ShapeMismatch {
            what: "feature width".into(),
            expected: arch.feature_width(),
            found: cols,
        });
    }
    let want_extra = if arch.kind == NetKind::Critic { ACTION_DIM } else { 0 };
    let got_extra = extra.map_or(0, |e| tape.shape(e).1);
    if got_extra != want_extra || extra.is_some_and(|e| tape.shape(e).0 != rows) {
        return Err(NetError::ShapeMismatch {
            what: "action input".into(),
            expected: want_extra,
            found: got_extra,
        });
    }
    let p: Vec<Var> = params.tensors.iter().map(|t| tape.leaf_ref(t, requires_grad)).collect();
    let mut h = tape.slice_cols(x, 0, arch.scan_in);
    let aux = tape.slice_cols(x, arch.scan_in, cols);
    let mut k = 0;
    for shape in arch.conv_shapes() {
        let c = tape.conv1d(h, p[k], p[k + 1], shape);
        h = tape.relu(c);
        k += 2;
    }
    let mut parts = vec![h, aux];
    parts.extend(extra);
    h = tape.concat_cols(&parts);
    for _ in &arch.hidden {
        let z = tape.matmul(h, p[k]);
        let z = tape.add_row(z, p[k + 1]);
        h = tape.relu(z);
        k += 2;
    }
    let z = tape.matmul(h, p[k]);
    let out = tape.add_row(z, p[k + 1]);
    Ok((out, p))
}

/// Policy head split into mean and clamped log standard deviation.
pub fn policy_heads(tape: &mut Tape, params: &NetworkParams, out: Var) -> (Var, Var) {
    let mean = tape.slice_cols(out, 0, ACTION_DIM);
    let raw = tape.slice_cols(out, ACTION_DIM, 2 * ACTION_DIM);
    let log_std = tape.clamp(raw, params.arch.log_std_min, params.arch.log_std_max);
    (mean, log_std)
}

pub struct Squashed {
    pub action: Var,
    /// Per-dimension log density, `(batch, 2)`.
    pub log_prob_dims: Var,
    /// Summed log density, `(batch, 1)`.
    pub log_prob: Var,
}

/// Reparameterised squashed-Gaussian sample `tanh(mean + exp(log_std) * zeta)`
/// and its log density, including the tanh change of variables.
pub fn squash_sample(tape: &mut Tape, mean: Var, log_std: Var, zeta: Array2<f64>) -> Squashed {
    // log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u)) stays finite for large |u|
    let base = zeta.mapv(|z| -0.5 * z * z - 0.5 * (2.0 * PI).ln() - 2.0 * LN_2);
    let z = tape.leaf(zeta, false);
    let sigma = tape.exp(log_std);
    let noise = tape.mul(sigma, z);
    let u = tape.add(mean, noise);
    let action = tape.tanh(u);
    let base = tape.leaf(base, false);
    let lp = tape.sub(base, log_std);
    let two_u = tape.scale(u, 2.0);
    let lp = tape.add(lp, two_u);
    let neg = tape.scale(u, -2.0);
    let sp = tape.softplus(neg);
    let sp2 = tape.scale(sp, 2.0);
    let log_prob_dims = tape.add(lp, sp2);
    let log_prob = tape.sum_cols(log_prob_dims);
    Squashed {
        action,
        log_prob_dims,
        log_prob,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolicyMode {
    Stochastic,
    Deterministic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolicyOutput {
    pub mean: [f64; 2],
    pub log_std: [f64; 2],
    /// Normalised action in the open square (-1, 1)^2.
    pub action: [f64; 2],
    pub log_prob: f64,
}

/// Largest magnitude a normalised action may take; tanh rounds to exactly 1
/// for large inputs.
const ACTION_LIMIT: f64 = 1.0 - f64::EPSILON;

/// Evaluates the policy on a batch of encoded rows.
pub fn policy_forward_batch<R: Rng + ?Sized>(
    x: Array2<f64>,
    params: &NetworkParams,
    mode: PolicyMode,
    rng: &mut R,
) -> Result<Vec<PolicyOutput>, NetError> {
    if params.arch.kind != NetKind::Policy {
        return Err(NetError::InvalidArch("policy_forward needs a policy network".into()));
    }
    let rows = x.nrows();
    let mut tape = Tape::new();
    let xv = tape.leaf(x, false);
    let (out, _) = forward(&mut tape, params, xv, None, false)?;
    let (mean, log_std) = policy_heads(&mut tape, params, out);
    let zeta = match mode {
        PolicyMode::Deterministic => Array2::zeros((rows, ACTION_DIM)),
        PolicyMode::Stochastic => Array2::from_shape_simple_fn((rows, ACTION_DIM), || StandardNormal.sample(rng)),
    };
    let s = squash_sample(&mut tape, mean, log_std, zeta);
    let (m, ls, a, lp) = (
        tape.value(mean),
        tape.value(log_std),
        tape.value(s.action),
        tape.value(s.log_prob),
    );
    Ok((0..rows)
        .map(|i| PolicyOutput {
            mean: [m[[i, 0]], m[[i, 1]]],
            log_std: [ls[[i, 0]], ls[[i, 1]]],
            action: [a[[i, 0]].clamp(-ACTION_LIMIT, ACTION_LIMIT), a[[i, 1]].clamp(-ACTION_LIMIT, ACTION_LIMIT)],
            log_prob: lp[[i, 0]],
        })
        .collect())
}

pub fn policy_forward<R: Rng + ?Sized>(
    obs: &Observation,
    params: &NetworkParams,
    encoder: &FeatureEncoder,
    mode: PolicyMode,
    rng: &mut R,
) -> Result<PolicyOutput, NetError> {
    let x = encoder.encode_batch(&[obs])?;
    Ok(policy_forward_batch(x, params, mode, rng)?[0])
}

/// Q-values for a batch of encoded rows and normalised actions.
pub fn critic_forward_batch(x: Array2<f64>, actions: Array2<f64>, params: &NetworkParams) -> Result<Vec<f64>, NetError> {
    if params.arch.kind != NetKind::Critic {
        return Err(NetError::InvalidArch("critic_forward needs a critic network".into()));
    }
    let mut tape = Tape::new();
    let xv = tape.leaf(x, false);
    let av = tape.leaf(actions, false);
    let (q, _) = forward(&mut tape, params, xv, Some(av), false)?;
    Ok(tape.value(q).column(0).to_vec())
}

pub fn critic_forward(
    obs: &Observation,
    action: [f64; 2],
    params: &NetworkParams,
    encoder: &FeatureEncoder,
) -> Result<f64, NetError> {
    let x = encoder.encode_batch(&[obs])?;
    let a = Array2::from_shape_vec((1, 2), action.to_vec()).expect("1x2");
    Ok(critic_forward_batch(x, a, params)?[0])
}
