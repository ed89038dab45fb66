//! Soft actor-critic losses and update steps.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::replay::Batch;
use crate::nets::tape::{Tape, Var};
use crate::nets::{forward, policy_heads, squash_sample, Adam, NetError, NetworkParams, Role, ACTION_DIM};

/// Scalars used by the update rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SacHyper {
    pub gamma: f64,
    pub alpha: f64,
    /// Policy L2 coefficient.
    pub l2: f64,
    pub tau: f64,
}

/// A differentiable action-value function over encoded rows and actions.
pub trait ActionValue {
    fn q<'a>(&'a self, tape: &mut Tape<'a>, x: Var, a: Var) -> Result<Var, NetError>;
}

/// Elementwise minimum of two critics.
pub struct TwinCritic<'c> {
    pub c1: &'c NetworkParams,
    pub c2: &'c NetworkParams,
}

impl ActionValue for TwinCritic<'_> {
    fn q<'a>(&'a self, tape: &mut Tape<'a>, x: Var, a: Var) -> Result<Var, NetError> {
        let (q1, _) = forward(tape, self.c1, x, Some(a), false)?;
        let (q2, _) = forward(tape, self.c2, x, Some(a), false)?;
        Ok(tape.min(q1, q2))
    }
}

#[derive(Clone, Debug)]
pub struct LossAndGrads {
    pub loss: f64,
    /// One gradient per parameter tensor.
    pub grads: Vec<Array2<f64>>,
}

pub fn sample_noise<R: Rng + ?Sized>(rows: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, ACTION_DIM), || StandardNormal.sample(rng))
}

/// Bellman targets `r + gamma (1 - done) (min Q_targ(s', a') - alpha log pi(a'|s'))`
/// with `a'` drawn from the current policy using `zeta`.
pub fn critic_targets(
    policy: &NetworkParams,
    target1: &NetworkParams,
    target2: &NetworkParams,
    batch: &Batch,
    zeta: Array2<f64>,
    hp: &SacHyper,
) -> Result<Array2<f64>, NetError> {
    let mut tape = Tape::new();
    let x = tape.leaf(batch.s_next.clone(), false);
    let (out, _) = forward(&mut tape, policy, x, None, false)?;
    let (mean, log_std) = policy_heads(&mut tape, policy, out);
    let s = squash_sample(&mut tape, mean, log_std, zeta);
    let twin = TwinCritic {
        c1: target1,
        c2: target2,
    };
    let q = twin.q(&mut tape, x, s.action)?;
    let soft = tape.value(q) - &(tape.value(s.log_prob) * hp.alpha);
    Ok(&batch.r + &((1.0 - &batch.done) * hp.gamma * soft))
}

/// Mean squared error of one critic against fixed targets.
pub fn critic_loss(critic: &NetworkParams, s: &Array2<f64>, a: &Array2<f64>, y: &Array2<f64>) -> Result<LossAndGrads, NetError> {
    let mut tape = Tape::new();
    let x = tape.leaf(s.clone(), false);
    let av = tape.leaf(a.clone(), false);
    let yv = tape.leaf(y.clone(), false);
    let (q, vars) = forward(&mut tape, critic, x, Some(av), true)?;
    let err = tape.sub(q, yv);
    let sq = tape.square(err);
    let loss = tape.mean(sq);
    let g = tape.backward(loss)?;
    Ok(LossAndGrads {
        loss: tape.scalar(loss),
        grads: vars.iter().zip(&critic.tensors).map(|(v, t)| g.wrt_or_zeros(*v, t.dim())).collect(),
    })
}

/// `mean(alpha log pi(a~|s) - Q(s, a~)) + l2 |theta|^2` with the
/// reparameterised action `a~ = tanh(mean + sigma zeta)`.
pub fn policy_loss(
    policy: &NetworkParams,
    q: &impl ActionValue,
    s: &Array2<f64>,
    zeta: &Array2<f64>,
    hp: &SacHyper,
) -> Result<LossAndGrads, NetError> {
    let mut tape = Tape::new();
    let x = tape.leaf(s.clone(), false);
    let (out, vars) = forward(&mut tape, policy, x, None, true)?;
    let (mean, log_std) = policy_heads(&mut tape, policy, out);
    let smp = squash_sample(&mut tape, mean, log_std, zeta.clone());
    let qv = q.q(&mut tape, x, smp.action)?;
    let ent = tape.scale(smp.log_prob, hp.alpha);
    let per_row = tape.sub(ent, qv);
    let mut loss = tape.mean(per_row);
    if hp.l2 != 0.0 {
        for v in &vars {
            let sq = tape.square(*v);
            let s = tape.sum(sq);
            let s = tape.scale(s, hp.l2);
            loss = tape.add(loss, s);
        }
    }
    let g = tape.backward(loss)?;
    Ok(LossAndGrads {
        loss: tape.scalar(loss),
        grads: vars.iter().zip(&policy.tensors).map(|(v, t)| g.wrt_or_zeros(*v, t.dim())).collect(),
    })
}

/// All networks and optimisers of one learner.
#[derive(Clone, Debug)]
pub struct SacState {
    pub policy: NetworkParams,
    pub critic1: NetworkParams,
    pub critic2: NetworkParams,
    pub target1: NetworkParams,
    pub target2: NetworkParams,
    pub opt_policy: Adam,
    pub opt_critic1: Adam,
    pub opt_critic2: Adam,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticStats {
    pub loss1: f64,
    pub loss2: f64,
}

impl SacState {
    /// Targets start as copies of the online critics.
    pub fn new(policy: NetworkParams, critic1: NetworkParams, critic2: NetworkParams, lr_policy: f64, lr_critic: f64) -> Self {
        Self {
            opt_policy: Adam::new(lr_policy, &policy),
            opt_critic1: Adam::new(lr_critic, &critic1),
            opt_critic2: Adam::new(lr_critic, &critic2),
            target1: critic1.with_role(Role::TargetCritic1),
            target2: critic2.with_role(Role::TargetCritic2),
            policy,
            critic1,
            critic2,
        }
    }

    pub fn networks(&self) -> [&NetworkParams; 5] {
        [&self.policy, &self.critic1, &self.critic2, &self.target1, &self.target2]
    }

    /// One gradient step on both critics toward fresh Bellman targets,
    /// followed by a polyak step of both target networks.
    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &Batch, hp: &SacHyper, rng: &mut R) -> Result<CriticStats, NetError> {
        let zeta = sample_noise(batch.len(), rng);
        let y = critic_targets(&self.policy, &self.target1, &self.target2, batch, zeta, hp)?;
        let l1 = critic_loss(&self.critic1, &batch.s, &batch.a, &y)?;
        let l2 = critic_loss(&self.critic2, &batch.s, &batch.a, &y)?;
        self.opt_critic1.step(&mut self.critic1, &l1.grads);
        self.opt_critic2.step(&mut self.critic2, &l2.grads);
        self.target1.polyak_from(&self.critic1, hp.tau);
        self.target2.polyak_from(&self.critic2, hp.tau);
        Ok(CriticStats {
            loss1: l1.loss,
            loss2: l2.loss,
        })
    }

    pub fn policy_update<R: Rng + ?Sized>(&mut self, batch: &Batch, hp: &SacHyper, rng: &mut R) -> Result<f64, NetError> {
        let zeta = sample_noise(batch.len(), rng);
        let twin = TwinCritic {
            c1: &self.critic1,
            c2: &self.critic2,
        };
        let out = policy_loss(&self.policy, &twin, &batch.s, &zeta, hp)?;
        self.opt_policy.step(&mut self.policy, &out.grads);
        Ok(out.loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{Architecture, NetConfig, NetKind, ScanEncoder};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hp(gamma: f64, alpha: f64, l2: f64) -> SacHyper {
        SacHyper { gamma, alpha, l2, tau: 0.005 }
    }

    /// Networks over `width` scan features plus four auxiliary inputs.
    fn nets(width: usize, hidden: Vec<usize>, rng: &mut ChaCha8Rng) -> (NetworkParams, NetworkParams, NetworkParams) {
        let cfg = NetConfig::downsampled(width, hidden);
        let pa = Architecture::new(NetKind::Policy, &cfg, width, false).unwrap();
        let ca = Architecture::new(NetKind::Critic, &cfg, width, false).unwrap();
        (
            NetworkParams::init(Role::Policy, pa, rng).unwrap(),
            NetworkParams::init(Role::Critic1, ca.clone(), rng).unwrap(),
            NetworkParams::init(Role::Critic2, ca, rng).unwrap(),
        )
    }

    fn batch(m: usize, width: usize, done: f64, rng: &mut ChaCha8Rng) -> Batch {
        use rand::Rng;
        Batch {
            s: Array2::from_shape_fn((m, width), |_| rng.gen_range(-1.0..1.0)),
            a: Array2::from_shape_fn((m, 2), |_| rng.gen_range(-1.0..1.0)),
            r: Array2::from_shape_fn((m, 1), |_| rng.gen_range(-2.0..2.0)),
            s_next: Array2::from_shape_fn((m, width), |_| rng.gen_range(-1.0..1.0)),
            done: Array2::from_elem((m, 1), done),
        }
    }

    #[test]
    fn terminal_or_undiscounted_targets_equal_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (p, c1, c2) = nets(3, vec![5], &mut rng);
        let b = batch(6, 7, 1.0, &mut rng);
        let y = critic_targets(&p, &c1, &c2, &b, sample_noise(6, &mut rng), &hp(0.99, 0.2, 0.0)).unwrap();
        assert_eq!(y, b.r);
        let mut b = batch(6, 7, 0.0, &mut rng);
        b.done.fill(0.0);
        let y = critic_targets(&p, &c1, &c2, &b, sample_noise(6, &mut rng), &hp(0.0, 0.2, 0.0)).unwrap();
        assert_eq!(y, b.r);
        // otherwise the bootstrap term is present
        let y = critic_targets(&p, &c1, &c2, &b, sample_noise(6, &mut rng), &hp(0.99, 0.2, 0.0)).unwrap();
        assert_ne!(y, b.r);
    }

    #[test]
    fn polyak_step_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (p, c1, c2) = nets(3, vec![5], &mut rng);
        let mut st = SacState::new(p, c1, c2, 1e-3, 1e-3);
        let before = st.target1.clone();
        let h = hp(0.99, 0.2, 0.0);
        st.critic_update(&batch(4, 7, 0.0, &mut rng), &h, &mut rng).unwrap();
        for ((t, b), o) in st.target1.tensors.iter().zip(&before.tensors).zip(&st.critic1.tensors) {
            ndarray::Zip::from(t).and(b).and(o).for_each(|t, b, o| {
                assert_eq!(*t, h.tau * o + (1.0 - h.tau) * b);
            });
        }
        assert_eq!(st.target1.role, Role::TargetCritic1);
    }

    #[test]
    fn heavy_weight_decay_shrinks_the_policy() {
        struct Flat;
        impl ActionValue for Flat {
            fn q<'a>(&'a self, tape: &mut Tape<'a>, _x: Var, a: Var) -> Result<Var, NetError> {
                let z = tape.scale(a, 0.0);
                Ok(tape.sum_cols(z))
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (mut p, _, _) = nets(3, vec![6], &mut rng);
        let mut opt = Adam::new(1e-3, &p);
        let b = batch(8, 7, 0.0, &mut rng);
        let mut norm = p.squared_norm();
        for _ in 0..50 {
            let g = policy_loss(&p, &Flat, &b.s, &sample_noise(8, &mut rng), &hp(0.99, 0.0, 10.0)).unwrap();
            opt.step(&mut p, &g.grads);
            let n = p.squared_norm();
            assert!(n < norm, "norm did not decrease: {n} >= {norm}");
            norm = n;
        }
    }

    #[test]
    fn policy_climbs_to_the_peak_of_a_quadratic() {
        struct Peak;
        impl ActionValue for Peak {
            fn q<'a>(&'a self, tape: &mut Tape<'a>, _x: Var, a: Var) -> Result<Var, NetError> {
                let rows = tape.shape(a).0;
                let target = tape.leaf(Array2::from_shape_fn((rows, 2), |(_, j)| [0.5, 0.0][j]), false);
                let d = tape.sub(a, target);
                let sq = tape.square(d);
                let s = tape.sum_cols(sq);
                Ok(tape.scale(s, -1.0))
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut p, _, _) = nets(3, vec![16], &mut rng);
        let mut opt = Adam::new(3e-3, &p);
        let b = batch(32, 7, 0.0, &mut rng);
        for _ in 0..1500 {
            let g = policy_loss(&p, &Peak, &b.s, &sample_noise(32, &mut rng), &hp(0.99, 0.0, 0.0)).unwrap();
            opt.step(&mut p, &g.grads);
        }
        let outs = crate::nets::policy_forward_batch(b.s.clone(), &p, crate::nets::PolicyMode::Deterministic, &mut rng).unwrap();
        for o in outs {
            assert!((o.action[0] - 0.5).abs() < 0.05 && o.action[1].abs() < 0.05, "{:?}", o.action);
        }
    }

    /// Central-difference check of a loss over every parameter entry.
    pub(crate) fn max_rel_error(params: &mut NetworkParams, analytic: &[Array2<f64>], mut f: impl FnMut(&NetworkParams) -> f64) -> f64 {
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..params.tensors.len() {
            for idx in ndarray::indices(params.tensors[k].dim()) {
                let orig = params.tensors[k][idx];
                params.tensors[k][idx] = orig + h;
                let up = f(params);
                params.tensors[k][idx] = orig - h;
                let down = f(params);
                params.tensors[k][idx] = orig;
                let num = (up - down) / (2.0 * h);
                let ana = analytic[k][idx];
                let scale = num.abs().max(ana.abs());
                if scale > 1e-7 {
                    worst = worst.max((num - ana).abs() / scale);
                }
            }
        }
        worst
    }

    #[test]
    fn full_losses_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = NetConfig {
            encoder: ScanEncoder::Conv {
                channels: vec![2],
                kernel: 3,
                strides: vec![2],
            },
            hidden: vec![6, 5],
            ..NetConfig::default()
        };
        let pa = Architecture::new(NetKind::Policy, &cfg, 9, false).unwrap();
        let ca = Architecture::new(NetKind::Critic, &cfg, 9, false).unwrap();
        let mut p = NetworkParams::init(Role::Policy, pa, &mut rng).unwrap();
        let mut c1 = NetworkParams::init(Role::Critic1, ca.clone(), &mut rng).unwrap();
        let c2 = NetworkParams::init(Role::Critic2, ca, &mut rng).unwrap();
        let b = batch(5, 13, 0.0, &mut rng);
        let zeta = sample_noise(5, &mut rng);
        let h = hp(0.99, 0.2, 1e-2);

        let twin = TwinCritic { c1: &c1, c2: &c2 };
        let g = policy_loss(&p, &twin, &b.s, &zeta, &h).unwrap();
        let err = max_rel_error(&mut p, &g.grads, |p| policy_loss(p, &twin, &b.s, &zeta, &h).unwrap().loss);
        assert!(err < 1e-4, "policy loss relative error {err}");

        let y = critic_targets(&p, &c1, &c2, &b, zeta.clone(), &h).unwrap();
        let g = critic_loss(&c1, &b.s, &b.a, &y).unwrap();
        let err = max_rel_error(&mut c1, &g.grads, |c| critic_loss(c, &b.s, &b.a, &y).unwrap().loss);
        assert!(err < 1e-4, "critic loss relative error {err}");
    }
}
