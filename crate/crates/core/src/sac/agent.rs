//! Soft actor-critic core: squashed-Gaussian policy, twin critics with
//! Polyak-averaged targets, and automatic temperature tuning. Gradients are
//! computed analytically through the network stack; noise is always passed
//! explicitly so every pass is reproducible and testable against finite
//! differences.

use super::buffer::{BufferError, ReplayBuffer};
use super::net::{Adam, Mlp, MlpGrads, NetError};
use crate::mdp::{Action, Observation, ACTION_DIM, OBS_DIM};
use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SacError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error("network produced a non-finite value")]
    NonFinite,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported checkpoint schema version {0}")]
    SchemaVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub obs_dim: usize,
    pub action_dim: usize,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Entropy floor the temperature steers toward (defaults to −|A|).
    pub target_entropy: f64,
    pub init_log_alpha: f64,
    pub logstd_min: f64,
    pub logstd_max: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        SacConfig {
            obs_dim: OBS_DIM,
            action_dim: ACTION_DIM,
            hidden: vec![256, 256],
            gamma: 0.99,
            tau: 0.005,
            lr: 3e-4,
            batch_size: 40,
            target_entropy: -(ACTION_DIM as f64),
            init_log_alpha: 0.0,
            logstd_min: -20.0,
            logstd_max: 2.0,
        }
    }
}

impl SacConfig {
    pub fn actor_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.obs_dim];
        dims.extend(&self.hidden);
        dims.push(2 * self.action_dim);
        dims
    }

    pub fn critic_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.obs_dim + self.action_dim];
        dims.extend(&self.hidden);
        dims.push(1);
        dims
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 - tanh²(u))` without cancellation for large |u|.
fn ln_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// Everything produced by pushing a noise matrix through the policy head.
pub struct PolicySample {
    /// Squashed actions in (−1, 1), shape `[n, action_dim]`.
    pub action: Array2<f64>,
    /// Log-density of each row's action under the squashed Gaussian.
    pub log_prob: Array1<f64>,
    /// Pre-squash draws `u = μ + σ·ξ`.
    pub u: Array2<f64>,
    pub mu: Array2<f64>,
    /// Clamped log standard deviations.
    pub logstd: Array2<f64>,
    /// σ·ξ, the sensitivity of `u` to logstd.
    pub sigma_noise: Array2<f64>,
    /// 1 where the raw logstd was inside the clamp range, else 0.
    pub clamp_mask: Array2<f64>,
}

/// Evaluate the squashed-Gaussian head on a batch with explicit noise.
pub fn sample_policy(
    actor: &Mlp,
    config: &SacConfig,
    obs: &Array2<f64>,
    noise: &Array2<f64>,
) -> PolicySample {
    let out = actor.forward(obs);
    policy_from_head(config, &out, noise)
}

fn policy_from_head(config: &SacConfig, head: &Array2<f64>, noise: &Array2<f64>) -> PolicySample {
    let ad = config.action_dim;
    let n = head.nrows();
    let mu = head.slice(s![.., ..ad]).to_owned();
    let raw = head.slice(s![.., ad..]).to_owned();
    let clamp_mask = raw.mapv(|v| {
        if (config.logstd_min..=config.logstd_max).contains(&v) {
            1.0
        } else {
            0.0
        }
    });
    let logstd = raw.mapv(|v| v.clamp(config.logstd_min, config.logstd_max));
    let sigma_noise = logstd.mapv(f64::exp) * noise;
    let u = &mu + &sigma_noise;
    let action = u.mapv(f64::tanh);
    let mut log_prob = Array1::zeros(n);
    for i in 0..n {
        let mut lp = 0.0;
        for j in 0..ad {
            lp += -HALF_LN_TWO_PI - logstd[[i, j]] - 0.5 * noise[[i, j]] * noise[[i, j]]
                - ln_one_minus_tanh_sq(u[[i, j]]);
        }
        log_prob[i] = lp;
    }
    PolicySample {
        action,
        log_prob,
        u,
        mu,
        logstd,
        sigma_noise,
        clamp_mask,
    }
}

fn critic_input(obs: &Array2<f64>, action: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs.view(), action.view()]).expect("row counts match")
}

/// Mean squared error of a critic against fixed targets.
pub fn critic_loss(critic: &Mlp, inputs: &Array2<f64>, targets: &Array1<f64>) -> f64 {
    let q = critic.forward(inputs);
    let n = targets.len() as f64;
    q.column(0)
        .iter()
        .zip(targets)
        .map(|(qi, yi)| (qi - yi).powi(2))
        .sum::<f64>()
        / n
}

/// Analytic gradient of [`critic_loss`] in the critic's parameters.
pub fn critic_loss_grads(
    critic: &Mlp,
    inputs: &Array2<f64>,
    targets: &Array1<f64>,
) -> (MlpGrads, f64) {
    let (q, cache) = critic.forward_cached(inputs);
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let mut grad_out = Array2::zeros(q.raw_dim());
    for (i, yi) in targets.iter().enumerate() {
        let e = q[[i, 0]] - yi;
        loss += e * e / n;
        grad_out[[i, 0]] = 2.0 * e / n;
    }
    let (grads, _) = critic.backward(&cache, &grad_out);
    (grads, loss)
}

/// `mean(α·logπ − min(Q1, Q2))` with reparameterized actions.
pub fn actor_loss(
    actor: &Mlp,
    q1: &Mlp,
    q2: &Mlp,
    config: &SacConfig,
    obs: &Array2<f64>,
    noise: &Array2<f64>,
    alpha: f64,
) -> f64 {
    let sample = sample_policy(actor, config, obs, noise);
    let z = critic_input(obs, &sample.action);
    let qa = q1.forward(&z);
    let qb = q2.forward(&z);
    let n = obs.nrows() as f64;
    let mut loss = 0.0;
    for i in 0..obs.nrows() {
        loss += (alpha * sample.log_prob[i] - qa[[i, 0]].min(qb[[i, 0]])) / n;
    }
    loss
}

/// Analytic gradient of [`actor_loss`] in the actor's parameters. Also
/// returns the sampled log-probabilities (used by the temperature update)
/// and the loss value.
pub fn actor_loss_grads(
    actor: &Mlp,
    q1: &Mlp,
    q2: &Mlp,
    config: &SacConfig,
    obs: &Array2<f64>,
    noise: &Array2<f64>,
    alpha: f64,
) -> (MlpGrads, Array1<f64>, f64) {
    let n = obs.nrows();
    let nf = n as f64;
    let ad = config.action_dim;
    let (head, actor_cache) = actor.forward_cached(obs);
    let sample = policy_from_head(config, &head, noise);
    let z = critic_input(obs, &sample.action);
    let (qa, cache_a) = q1.forward_cached(&z);
    let (qb, cache_b) = q2.forward_cached(&z);

    let mut loss = 0.0;
    // Route the −Q path through whichever critic attains the row minimum.
    let mut ga = Array2::zeros((n, 1));
    let mut gb = Array2::zeros((n, 1));
    for i in 0..n {
        let (va, vb) = (qa[[i, 0]], qb[[i, 0]]);
        loss += (alpha * sample.log_prob[i] - va.min(vb)) / nf;
        if va <= vb {
            ga[[i, 0]] = -1.0 / nf;
        } else {
            gb[[i, 0]] = -1.0 / nf;
        }
    }
    let (_, dza) = q1.backward(&cache_a, &ga);
    let (_, dzb) = q2.backward(&cache_b, &gb);
    let dz = dza + dzb;
    let d_action = dz.slice(s![.., config.obs_dim..]).to_owned();

    // dL/dμ and dL/d(logstd) combine the entropy path (through logπ) and
    // the critic path (through a = tanh(μ + σξ)).
    let tanh_u = sample.u.mapv(f64::tanh);
    let sech_sq = tanh_u.mapv(|t| 1.0 - t * t);
    let mut grad_head = Array2::zeros((n, 2 * ad));
    for i in 0..n {
        for j in 0..ad {
            let ent_mu = alpha / nf * 2.0 * tanh_u[[i, j]];
            let q_mu = d_action[[i, j]] * sech_sq[[i, j]];
            grad_head[[i, j]] = ent_mu + q_mu;
            let sn = sample.sigma_noise[[i, j]];
            let ent_ls = alpha / nf * (2.0 * tanh_u[[i, j]] * sn - 1.0);
            let q_ls = d_action[[i, j]] * sech_sq[[i, j]] * sn;
            grad_head[[i, j + ad]] = (ent_ls + q_ls) * sample.clamp_mask[[i, j]];
        }
    }
    let (grads, _) = actor.backward(&actor_cache, &grad_head);
    (grads, sample.log_prob, loss)
}

/// Temperature objective: `−α·mean(logπ + target_entropy)` in log-space.
pub fn alpha_loss(log_alpha: f64, log_probs: &Array1<f64>, target_entropy: f64) -> f64 {
    let excess = log_probs.mean().unwrap_or(0.0) + target_entropy;
    -log_alpha.exp() * excess
}

/// d(alpha_loss)/d(log α); equals the loss itself for this exponential
/// parameterization.
pub fn alpha_grad(log_alpha: f64, log_probs: &Array1<f64>, target_entropy: f64) -> f64 {
    alpha_loss(log_alpha, log_probs, target_entropy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub mean_log_prob: f64,
    pub mean_target: f64,
}

/// On-disk agent state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub config: SacConfig,
    pub actor: Vec<f64>,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub q1_target: Vec<f64>,
    pub q2_target: Vec<f64>,
    pub log_alpha: f64,
    pub adam_actor: Adam,
    pub adam_q1: Adam,
    pub adam_q2: Adam,
    pub adam_alpha: Adam,
    pub rng: ChaCha8Rng,
    pub episodes_done: usize,
    pub total_updates: u64,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: SacConfig,
    pub actor: Mlp,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_alpha: f64,
    pub episodes_done: usize,
    pub total_updates: u64,
    adam_actor: Adam,
    adam_q1: Adam,
    adam_q2: Adam,
    adam_alpha: Adam,
    rng: ChaCha8Rng,
}

impl SacAgent {
    pub fn new(config: SacConfig, seed: u64) -> Result<SacAgent, SacError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = Mlp::new(&config.actor_dims(), &mut rng)?;
        let q1 = Mlp::new(&config.critic_dims(), &mut rng)?;
        let q2 = Mlp::new(&config.critic_dims(), &mut rng)?;
        let q1_target = q1.clone();
        let q2_target = q2.clone();
        let adam_actor = Adam::new(actor.n_params(), config.lr);
        let adam_q1 = Adam::new(q1.n_params(), config.lr);
        let adam_q2 = Adam::new(q2.n_params(), config.lr);
        let adam_alpha = Adam::new(1, config.lr);
        Ok(SacAgent {
            log_alpha: config.init_log_alpha,
            config,
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            episodes_done: 0,
            total_updates: 0,
            adam_actor,
            adam_q1,
            adam_q2,
            adam_alpha,
            rng,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    fn standard_normal(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| self.rng.sample(StandardNormal))
    }

    /// Policy action for one observation. Stochastic draws consume the
    /// agent's RNG; deterministic evaluation returns the squashed mean.
    pub fn act(&mut self, obs: &Observation, deterministic: bool) -> Result<(Action, f64), SacError> {
        let x = Array2::from_shape_vec((1, self.config.obs_dim), obs.as_slice().to_vec())
            .map_err(|_| NetError::Shape("act requires obs_dim == OBS_DIM"))?;
        let noise = if deterministic {
            Array2::zeros((1, self.config.action_dim))
        } else {
            self.standard_normal(1, self.config.action_dim)
        };
        let sample = sample_policy(&self.actor, &self.config, &x, &noise);
        let action = Action {
            v: sample.action[[0, 0]],
            steer: sample.action[[0, 1]],
        };
        let log_prob = sample.log_prob[0];
        if !action.v.is_finite() || !action.steer.is_finite() || !log_prob.is_finite() {
            return Err(SacError::NonFinite);
        }
        Ok((action, log_prob))
    }

    /// Soft Bellman targets `y = r + γ(1−d)(min Q′(s′,a′) − α·logπ(a′|s′))`
    /// with a′ drawn from the online policy using the provided noise.
    pub fn critic_targets(
        &self,
        next_obs: &Array2<f64>,
        rewards: &Array1<f64>,
        dones: &Array1<f64>,
        noise: &Array2<f64>,
    ) -> Array1<f64> {
        let sample = sample_policy(&self.actor, &self.config, next_obs, noise);
        let z = critic_input(next_obs, &sample.action);
        let qa = self.q1_target.forward(&z);
        let qb = self.q2_target.forward(&z);
        let alpha = self.alpha();
        let mut y = Array1::zeros(rewards.len());
        for i in 0..rewards.len() {
            let soft = qa[[i, 0]].min(qb[[i, 0]]) - alpha * sample.log_prob[i];
            y[i] = rewards[i] + self.config.gamma * (1.0 - dones[i]) * soft;
        }
        y
    }

    /// One full SAC iteration on a uniform minibatch: both critics, the
    /// actor, the temperature, then the target blend.
    pub fn update(&mut self, buffer: &ReplayBuffer) -> Result<UpdateStats, SacError> {
        let n = self.config.batch_size;
        if buffer.len() < n {
            return Err(SacError::Buffer(BufferError::TooFew {
                want: n,
                have: buffer.len(),
            }));
        }
        let od = self.config.obs_dim;
        let ad = self.config.action_dim;
        if od != OBS_DIM || ad != ACTION_DIM {
            // Replay transitions are stored at the environment's fixed widths.
            return Err(NetError::Shape("replay updates need environment dims").into());
        }
        let batch = buffer.sample(&mut self.rng, n)?;
        let mut obs = Array2::zeros((n, od));
        let mut actions = Array2::zeros((n, ad));
        let mut rewards = Array1::zeros(n);
        let mut next_obs = Array2::zeros((n, od));
        let mut dones = Array1::zeros(n);
        for (i, t) in batch.iter().enumerate() {
            obs.row_mut(i).assign(
                &Array1::from_iter(t.obs.as_slice().iter().copied()),
            );
            next_obs.row_mut(i).assign(
                &Array1::from_iter(t.next_obs.as_slice().iter().copied()),
            );
            actions[[i, 0]] = t.action.v;
            actions[[i, 1]] = t.action.steer;
            rewards[i] = t.reward;
            dones[i] = if t.done { 1.0 } else { 0.0 };
        }

        let noise_t = self.standard_normal(n, ad);
        let y = self.critic_targets(&next_obs, &rewards, &dones, &noise_t);

        let z = critic_input(&obs, &actions);
        let (g1, loss1) = critic_loss_grads(&self.q1, &z, &y);
        self.adam_q1.step_net(&mut self.q1, &g1)?;
        let (g2, loss2) = critic_loss_grads(&self.q2, &z, &y);
        self.adam_q2.step_net(&mut self.q2, &g2)?;

        let noise_a = self.standard_normal(n, ad);
        let alpha = self.alpha();
        let (ga, log_probs, actor_loss_val) = actor_loss_grads(
            &self.actor,
            &self.q1,
            &self.q2,
            &self.config,
            &obs,
            &noise_a,
            alpha,
        );
        self.adam_actor.step_net(&mut self.actor, &ga)?;

        let d_log_alpha = alpha_grad(self.log_alpha, &log_probs, self.config.target_entropy);
        let mut la = [self.log_alpha];
        self.adam_alpha.step(&mut la, &[d_log_alpha])?;
        self.log_alpha = la[0];

        self.q1_target.soft_update_from(&self.q1, self.config.tau)?;
        self.q2_target.soft_update_from(&self.q2, self.config.tau)?;
        self.total_updates += 1;

        let stats = UpdateStats {
            critic1_loss: loss1,
            critic2_loss: loss2,
            actor_loss: actor_loss_val,
            alpha: self.alpha(),
            mean_log_prob: log_probs.mean().unwrap_or(0.0),
            mean_target: y.mean().unwrap_or(0.0),
        };
        if !stats.critic1_loss.is_finite()
            || !stats.critic2_loss.is_finite()
            || !stats.actor_loss.is_finite()
        {
            return Err(SacError::NonFinite);
        }
        Ok(stats)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            schema_version: CHECKPOINT_SCHEMA_VERSION,
            config: self.config.clone(),
            actor: self.actor.flatten(),
            q1: self.q1.flatten(),
            q2: self.q2.flatten(),
            q1_target: self.q1_target.flatten(),
            q2_target: self.q2_target.flatten(),
            log_alpha: self.log_alpha,
            adam_actor: self.adam_actor.clone(),
            adam_q1: self.adam_q1.clone(),
            adam_q2: self.adam_q2.clone(),
            adam_alpha: self.adam_alpha.clone(),
            rng: self.rng.clone(),
            episodes_done: self.episodes_done,
            total_updates: self.total_updates,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<SacAgent, SacError> {
        if ck.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(SacError::SchemaVersion(ck.schema_version));
        }
        let mut agent = SacAgent::new(ck.config.clone(), 0)?;
        agent.actor.load_flat(&ck.actor)?;
        agent.q1.load_flat(&ck.q1)?;
        agent.q2.load_flat(&ck.q2)?;
        agent.q1_target.load_flat(&ck.q1_target)?;
        agent.q2_target.load_flat(&ck.q2_target)?;
        agent.log_alpha = ck.log_alpha;
        agent.adam_actor = ck.adam_actor;
        agent.adam_q1 = ck.adam_q1;
        agent.adam_q2 = ck.adam_q2;
        agent.adam_alpha = ck.adam_alpha;
        agent.rng = ck.rng;
        agent.episodes_done = ck.episodes_done;
        agent.total_updates = ck.total_updates;
        Ok(agent)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), SacError> {
        let mut text = serde_json::to_string_pretty(&self.to_checkpoint())?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<SacAgent, SacError> {
        let text = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&text)?;
        SacAgent::from_checkpoint(ck)
    }
}
