//! Clipped-surrogate policy optimization with generalized advantage
//! estimation, over a small tanh MLP Gaussian policy. All gradients are
//! hand-written and finite-difference checked.

use crate::nn::{AdamState, Linear};
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub iterations: usize,
    pub steps_per_iter: usize,
    pub learning_rate: f64,
    pub clip: f64,
    pub gae_lambda: f64,
    pub discount: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub hidden: usize,
    pub log_std_init: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            iterations: 30,
            steps_per_iter: 768,
            learning_rate: 3e-4,
            clip: 0.2,
            gae_lambda: 0.95,
            discount: 0.99,
            epochs: 4,
            minibatch: 64,
            entropy_coef: 1e-3,
            hidden: 64,
            log_std_init: -2.0,
        }
    }
}

fn tanh(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(f64::tanh)
}

fn tanh_backward(out: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
    let mut g = grad.clone();
    g.zip_mut_with(out, |gv, &o| *gv *= 1.0 - o * o);
    g
}

/// Two-hidden-layer tanh MLP.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    l1: Linear,
    l2: Linear,
    head: Linear,
}

struct MlpCache {
    x: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
}

impl Mlp {
    fn new<R: Rng>(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut R) -> Self {
        let l1 = Linear::new(in_dim, hidden, rng);
        let l2 = Linear::new(hidden, hidden, rng);
        let mut head = Linear::new(hidden, out_dim, rng);
        // small final layer keeps the initial policy near zero action
        head.w.mapv_inplace(|v| v * 0.01);
        Self { l1, l2, head }
    }

    fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let h1 = tanh(&self.l1.forward(x));
        let h2 = tanh(&self.l2.forward(&h1));
        let out = self.head.forward(&h2);
        (
            out,
            MlpCache {
                x: x.clone(),
                h1,
                h2,
            },
        )
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward_cached(x).0
    }

    fn backward(&mut self, cache: &MlpCache, grad_out: &Array2<f64>) {
        let g_h2 = self.head.backward(&cache.h2, grad_out);
        let g_h2_pre = tanh_backward(&cache.h2, &g_h2);
        let g_h1 = self.l2.backward(&cache.h1, &g_h2_pre);
        let g_h1_pre = tanh_backward(&cache.h1, &g_h1);
        self.l1.backward(&cache.x, &g_h1_pre);
    }

    fn zero_grad(&mut self) {
        self.l1.zero_grad();
        self.l2.zero_grad();
        self.head.zero_grad();
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in [&self.l1, &self.l2, &self.head] {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    fn grads_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in [&self.l1, &self.l2, &self.head] {
            out.extend(l.gw.iter());
            out.extend(l.gb.iter());
        }
        out
    }

    fn set_params(&mut self, flat: &[f64]) {
        let mut i = 0;
        for l in [&mut self.l1, &mut self.l2, &mut self.head] {
            for v in l.w.iter_mut() {
                *v = flat[i];
                i += 1;
            }
            for v in l.b.iter_mut() {
                *v = flat[i];
                i += 1;
            }
        }
        assert_eq!(i, flat.len());
    }

    pub fn ensure_grad_buffers(&mut self) {
        self.l1.ensure_grad_buffers();
        self.l2.ensure_grad_buffers();
        self.head.ensure_grad_buffers();
    }
}

/// Diagonal Gaussian policy: MLP mean plus a state-independent log-std.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub log_std: Array1<f64>,
    pub act_dim: usize,
}

impl GaussianPolicy {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, cfg: &PpoConfig, rng: &mut R) -> Self {
        Self {
            net: Mlp::new(obs_dim, cfg.hidden, act_dim, rng),
            log_std: Array1::from_elem(act_dim, cfg.log_std_init),
            act_dim,
        }
    }

    pub fn mean_action(&self, obs: &Array1<f64>) -> Array1<f64> {
        let x = obs.clone().insert_axis(ndarray::Axis(0));
        self.net.forward(&x).row(0).to_owned()
    }

    pub fn sample_action<R: Rng>(&self, obs: &Array1<f64>, rng: &mut R) -> (Array1<f64>, f64) {
        let mean = self.mean_action(obs);
        let eps = crate::nn::standard_normal(self.act_dim, rng);
        let action = &mean + &(&eps * &self.log_std.mapv(f64::exp));
        let logp = self.log_prob_single(&mean, &action);
        (action, logp)
    }

    fn log_prob_single(&self, mean: &Array1<f64>, action: &Array1<f64>) -> f64 {
        let mut lp = -0.5 * self.act_dim as f64 * (2.0 * std::f64::consts::PI).ln();
        for d in 0..self.act_dim {
            let ls = self.log_std[d];
            let s = ls.exp();
            let z = (action[d] - mean[d]) / s;
            lp += -0.5 * z * z - ls;
        }
        lp
    }

    /// Batched log-probabilities for given means and actions.
    fn log_prob_batch(&self, means: &Array2<f64>, actions: &Array2<f64>) -> Array1<f64> {
        let n = means.nrows();
        Array1::from_shape_fn(n, |i| {
            self.log_prob_single(&means.row(i).to_owned(), &actions.row(i).to_owned())
        })
    }
}

/// One on-policy transition.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Array1<f64>,
    pub action: Array1<f64>,
    pub logp: f64,
    pub reward: f64,
    pub value: f64,
    /// True when the episode ended at this step (no bootstrap past it).
    pub terminal: bool,
}

/// GAE advantages and discounted-return targets. `last_value` bootstraps the
/// final partial episode.
pub fn gae(
    transitions: &[Transition],
    last_value: f64,
    discount: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = transitions.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for i in (0..n).rev() {
        let t = &transitions[i];
        let next_value = if t.terminal {
            0.0
        } else if i + 1 < n {
            transitions[i + 1].value
        } else {
            last_value
        };
        let delta = t.reward + discount * next_value - t.value;
        running = if t.terminal {
            delta
        } else {
            delta + discount * lambda * running
        };
        adv[i] = running;
    }
    let returns: Vec<f64> = adv
        .iter()
        .zip(transitions.iter())
        .map(|(a, t)| a + t.value)
        .collect();
    (adv, returns)
}

pub struct PpoLearner {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    policy_opt: AdamState,
    value_opt: AdamState,
    cfg: PpoConfig,
}

impl PpoLearner {
    pub fn new<R: Rng>(obs_dim: usize, act_dim: usize, cfg: PpoConfig, rng: &mut R) -> Self {
        let policy = GaussianPolicy::new(obs_dim, act_dim, &cfg, rng);
        let value = Mlp::new(obs_dim, cfg.hidden, 1, rng);
        let np = policy.net.params_flat().len() + act_dim;
        let nv = value.params_flat().len();
        Self {
            policy_opt: AdamState::new(np, cfg.learning_rate),
            value_opt: AdamState::new(nv, cfg.learning_rate),
            policy,
            value,
            cfg,
        }
    }

    pub fn predict_value(&self, obs: &Array1<f64>) -> f64 {
        let x = obs.clone().insert_axis(ndarray::Axis(0));
        self.value.forward(&x)[[0, 0]]
    }

    /// One PPO update over a rollout; returns the mean surrogate objective of
    /// the final epoch (diagnostic only).
    pub fn update<R: Rng>(
        &mut self,
        transitions: &[Transition],
        last_value: f64,
        rng: &mut R,
    ) -> f64 {
        let n = transitions.len();
        let (mut adv, returns) = gae(
            transitions,
            last_value,
            self.cfg.discount,
            self.cfg.gae_lambda,
        );
        // normalize advantages
        let mean = adv.iter().sum::<f64>() / n as f64;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt().max(1e-8);
        for a in adv.iter_mut() {
            *a = (*a - mean) / std;
        }

        let obs_dim = transitions[0].obs.len();
        let obs = Array2::from_shape_fn((n, obs_dim), |(i, j)| transitions[i].obs[j]);
        let actions = Array2::from_shape_fn((n, self.policy.act_dim), |(i, j)| {
            transitions[i].action[j]
        });
        let logp_old: Vec<f64> = transitions.iter().map(|t| t.logp).collect();

        let mut last_obj = 0.0;
        for _ in 0..self.cfg.epochs {
            // shuffled minibatch order
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            last_obj = 0.0;
            for chunk in order.chunks(self.cfg.minibatch) {
                last_obj += self.update_minibatch(chunk, &obs, &actions, &logp_old, &adv, &returns);
            }
        }
        last_obj
    }

    fn update_minibatch(
        &mut self,
        idx: &[usize],
        obs: &Array2<f64>,
        actions: &Array2<f64>,
        logp_old: &[f64],
        adv: &[f64],
        returns: &[f64],
    ) -> f64 {
        let m = idx.len();
        let obs_dim = obs.ncols();
        let act_dim = self.policy.act_dim;
        let x = Array2::from_shape_fn((m, obs_dim), |(i, j)| obs[[idx[i], j]]);
        let a = Array2::from_shape_fn((m, act_dim), |(i, j)| actions[[idx[i], j]]);

        // policy forward
        let (means, cache) = self.policy.net.forward_cached(&x);
        let logp = self.policy.log_prob_batch(&means, &a);
        let mut obj = 0.0;
        let mut g_logp = vec![0.0; m];
        for i in 0..m {
            let advantage = adv[idx[i]];
            let ratio = (logp[i] - logp_old[idx[i]]).exp();
            let clipped = ratio.clamp(1.0 - self.cfg.clip, 1.0 + self.cfg.clip);
            obj += (ratio * advantage).min(clipped * advantage);
            // gradient flows only where the unclipped branch is active
            let active = if advantage >= 0.0 {
                ratio < 1.0 + self.cfg.clip
            } else {
                ratio > 1.0 - self.cfg.clip
            };
            if active {
                // maximizing the surrogate: descend on its negation
                g_logp[i] = -advantage * ratio / m as f64;
            }
        }
        obj /= m as f64;

        // chain dlogp into mean and log_std
        let mut g_means = Array2::zeros((m, act_dim));
        let mut g_log_std = Array1::zeros(act_dim);
        for i in 0..m {
            for d in 0..act_dim {
                let ls = self.policy.log_std[d];
                let s2 = (2.0 * ls).exp();
                let diff = a[[i, d]] - means[[i, d]];
                g_means[[i, d]] = g_logp[i] * diff / s2;
                g_log_std[d] += g_logp[i] * (diff * diff / s2 - 1.0);
            }
        }
        // entropy bonus: H = sum(log_std) + const, maximized
        for d in 0..act_dim {
            g_log_std[d] -= self.cfg.entropy_coef;
        }
        self.policy.net.zero_grad();
        self.policy.net.backward(&cache, &g_means);
        let mut params = self.policy.net.params_flat();
        params.extend(self.policy.log_std.iter());
        let mut grads = self.policy.net.grads_flat();
        grads.extend(g_log_std.iter());
        self.policy_opt.step(&mut params, &grads);
        let split = params.len() - act_dim;
        self.policy.net.set_params(&params[..split]);
        for d in 0..act_dim {
            // keep exploration noise bounded away from degenerate extremes
            self.policy.log_std[d] = params[split + d].clamp(-4.0, 1.0);
        }

        // value regression
        let (v, vcache) = self.value.forward_cached(&x);
        let mut g_v = Array2::zeros((m, 1));
        for i in 0..m {
            g_v[[i, 0]] = (v[[i, 0]] - returns[idx[i]]) / m as f64;
        }
        self.value.zero_grad();
        self.value.backward(&vcache, &g_v);
        let mut vp = self.value.params_flat();
        let vg = self.value.grads_flat();
        self.value_opt.step(&mut vp, &vg);
        self.value.set_params(&vp);

        obj
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_gradients_match_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Mlp::new(3, 8, 2, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let w = Array2::from_shape_fn((4, 2), |_| rng.gen_range(-1.0..1.0));
        let (_, cache) = net.forward_cached(&x);
        net.zero_grad();
        net.backward(&cache, &w);
        let grads = net.grads_flat();
        let mut params = net.params_flat();
        let eps = 1e-6;
        let n = params.len();
        for &i in &[0usize, 5, n / 2, n - 3, n - 1] {
            let orig = params[i];
            params[i] = orig + eps;
            net.set_params(&params);
            let fp = (net.forward(&x).clone() * &w).sum();
            params[i] = orig - eps;
            net.set_params(&params);
            let fm = (net.forward(&x).clone() * &w).sum();
            params[i] = orig;
            net.set_params(&params);
            let fd = (fp - fm) / (2.0 * eps);
            let rel = (grads[i] - fd).abs() / fd.abs().max(grads[i].abs()).max(1e-8);
            assert!(rel < 1e-4, "param {i}: {} vs {fd}", grads[i]);
        }
    }

    #[test]
    fn log_prob_matches_gaussian_density() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let policy = GaussianPolicy::new(2, 2, &PpoConfig::default(), &mut rng);
        let mean = Array1::from(vec![0.5, -0.2]);
        let action = Array1::from(vec![0.6, -0.2]);
        let lp = policy.log_prob_single(&mean, &action);
        // independent evaluation of the diagonal Gaussian log-density
        let mut expect = 0.0;
        for d in 0..2 {
            let s = policy.log_std[d].exp();
            let z: f64 = (action[d] - mean[d]) / s;
            expect += -0.5 * z * z - policy.log_std[d] - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn gae_on_constant_rewards_matches_closed_form() {
        // values 0, reward 1 each step, single episode with terminal end:
        // with lambda = 1 the advantage at t is the discounted return-to-go
        let transitions: Vec<Transition> = (0..4)
            .map(|i| Transition {
                obs: Array1::zeros(1),
                action: Array1::zeros(1),
                logp: 0.0,
                reward: 1.0,
                value: 0.0,
                terminal: i == 3,
            })
            .collect();
        let gamma = 0.9;
        let (adv, returns) = gae(&transitions, 0.0, gamma, 1.0);
        let expect3 = 1.0;
        let expect0 = 1.0 + gamma * (1.0 + gamma * (1.0 + gamma));
        assert!((adv[3] - expect3).abs() < 1e-12);
        assert!((adv[0] - expect0).abs() < 1e-12);
        assert_eq!(adv, returns);
    }

    #[test]
    fn gae_resets_across_episode_boundary() {
        let transitions: Vec<Transition> = (0..4)
            .map(|i| Transition {
                obs: Array1::zeros(1),
                action: Array1::zeros(1),
                logp: 0.0,
                reward: if i < 2 { 5.0 } else { 1.0 },
                value: 0.0,
                terminal: i == 1 || i == 3,
            })
            .collect();
        let (adv, _) = gae(&transitions, 0.0, 0.9, 1.0);
        // second episode must not see the first episode's large rewards
        assert!((adv[2] - (1.0 + 0.9)).abs() < 1e-12);
        assert!((adv[3] - 1.0).abs() < 1e-12);
    }

    /// 1D continuous bandit: reward = -(a - 0.03)^2. The policy mean should
    /// move toward 0.03.
    #[test]
    fn learner_solves_continuous_bandit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = PpoConfig {
            iterations: 40,
            steps_per_iter: 128,
            learning_rate: 3e-3,
            hidden: 16,
            log_std_init: -2.0,
            ..Default::default()
        };
        let mut learner = PpoLearner::new(1, 1, cfg.clone(), &mut rng);
        let obs = Array1::from(vec![1.0]);
        for _ in 0..cfg.iterations {
            let mut transitions = Vec::new();
            for _ in 0..cfg.steps_per_iter {
                let (a, logp) = learner.policy.sample_action(&obs, &mut rng);
                let r = -(a[0] - 0.03) * (a[0] - 0.03);
                transitions.push(Transition {
                    obs: obs.clone(),
                    action: a,
                    logp,
                    reward: r,
                    value: learner.predict_value(&obs),
                    terminal: true,
                });
            }
            learner.update(&transitions, 0.0, &mut rng);
        }
        let mean = learner.policy.mean_action(&obs);
        assert!((mean[0] - 0.03).abs() < 0.02, "learned mean {}", mean[0]);
    }
}
