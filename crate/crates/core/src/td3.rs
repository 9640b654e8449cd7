//! Twin-delayed deterministic policy gradient learner.
//!
//! Networks act in normalized action space: the actor's tanh output lies in
//! `(-1, 1)` per component and is mapped affinely onto
//! `[action_low, action_high]`. Exploration and target-smoothing noise are
//! added in normalized units before that mapping.

use std::io::{Read, Write};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::curriculum::CurriculumSnapshot;
use crate::error::{check_len, AcerError, Result};
use crate::nn::{read_u64, write_u64, AdamConfig, HiddenActivation, Mlp, MlpSpec, OutputActivation};
use crate::refresh::NetworkSnapshot;
use crate::replay::{per_priority, Experience, ReplayBuffer, ReplayMode, SampledBatch};
use crate::rng::Rng;

/// Which critic a TD error is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TdErrorCritic {
    #[default]
    Q1,
    MinTwin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Td3Config {
    pub gamma: f64,
    pub tau_actor: f64,
    pub tau_critic: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub actor_delay: u64,
    pub exploration_sigma: f64,
    pub smoothing_sigma: f64,
    pub smoothing_clip: f64,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub td_error_critic: TdErrorCritic,
}

impl Td3Config {
    /// Values used for the UAV experiments.
    pub fn standard(action_dim: usize) -> Self {
        Td3Config {
            gamma: 0.9,
            tau_actor: 0.1,
            tau_critic: 0.2,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            actor_delay: 2,
            exploration_sigma: 0.1,
            smoothing_sigma: 0.1,
            smoothing_clip: 0.25,
            action_low: vec![-1.0; action_dim],
            action_high: vec![1.0; action_dim],
            hidden_dims: vec![100, 100],
            td_error_critic: TdErrorCritic::Q1,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_low.len()
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(AcerError::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return err(format!("gamma {} outside (0, 1]", self.gamma));
        }
        for (name, tau) in [("tau_actor", self.tau_actor), ("tau_critic", self.tau_critic)] {
            if !(tau > 0.0 && tau <= 1.0) {
                return err(format!("{name} {tau} outside (0, 1]"));
            }
        }
        if self.actor_delay < 1 {
            return err("actor_delay must be >= 1".into());
        }
        if !(self.smoothing_clip > 0.0) {
            return err("smoothing_clip must be > 0".into());
        }
        if self.exploration_sigma < 0.0 || self.smoothing_sigma < 0.0 {
            return err("noise scales must be >= 0".into());
        }
        if self.action_low.is_empty() || self.action_low.len() != self.action_high.len() {
            return err("action bounds must be non-empty and of equal length".into());
        }
        if self.action_low.iter().zip(&self.action_high).any(|(l, h)| !(l < h)) {
            return err("action_low must be below action_high".into());
        }
        AdamConfig::with_learning_rate(self.actor_lr).validate()?;
        AdamConfig::with_learning_rate(self.critic_lr).validate()?;
        Ok(())
    }

    pub fn td_settings(&self) -> TdSettings {
        TdSettings {
            gamma: self.gamma,
            smoothing_sigma: self.smoothing_sigma,
            smoothing_clip: self.smoothing_clip,
            bounds: ActionBounds::new(self.action_low.clone(), self.action_high.clone()),
            critic: self.td_error_critic,
        }
    }
}

/// Affine map between normalized `[-1, 1]` actions and environment bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBounds {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl ActionBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Self {
        ActionBounds { low, high }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn half_range(&self, k: usize) -> f64 {
        0.5 * (self.high[k] - self.low[k])
    }

    /// Normalized components are clamped to `[-1, 1]` before mapping.
    pub fn scale(&self, normalized: &[f64]) -> Vec<f64> {
        normalized
            .iter()
            .enumerate()
            .map(|(k, &y)| {
                let y = y.clamp(-1.0, 1.0);
                let mid = 0.5 * (self.high[k] + self.low[k]);
                (mid + self.half_range(k) * y).clamp(self.low[k], self.high[k])
            })
            .collect()
    }
}

/// Everything needed to turn an experience into a TD target and error.
#[derive(Debug, Clone, PartialEq)]
pub struct TdSettings {
    pub gamma: f64,
    pub smoothing_sigma: f64,
    pub smoothing_clip: f64,
    pub bounds: ActionBounds,
    pub critic: TdErrorCritic,
}

impl TdSettings {
    /// Clipped Gaussian smoothing noise, one draw per action component.
    pub fn draw_smoothing_noise(&self, rng: &mut Rng) -> Vec<f64> {
        let dim = self.bounds.dim();
        if self.smoothing_sigma == 0.0 {
            return vec![0.0; dim];
        }
        let normal = Normal::new(0.0, self.smoothing_sigma).expect("sigma validated");
        (0..dim)
            .map(|_| normal.sample(rng).clamp(-self.smoothing_clip, self.smoothing_clip))
            .collect()
    }
}

pub fn critic_input(state: &[f64], action: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + action.len());
    x.extend_from_slice(state);
    x.extend_from_slice(action);
    x
}

/// `r + gamma * (1 - done) * min_j Q'_j(s', scale(mu'(s') + noise))`.
pub fn td_target(
    actor_target: &Mlp,
    critic1_target: &Mlp,
    critic2_target: &Mlp,
    exp: &Experience,
    noise: &[f64],
    td: &TdSettings,
) -> Result<f64> {
    if exp.done {
        return Ok(exp.reward);
    }
    let mut y = actor_target.forward(&exp.next_state)?;
    check_len("smoothing noise", y.len(), noise.len())?;
    for (yk, n) in y.iter_mut().zip(noise) {
        *yk += n;
    }
    let action = td.bounds.scale(&y);
    let x = critic_input(&exp.next_state, &action);
    let q1 = critic1_target.forward(&x)?[0];
    let q2 = critic2_target.forward(&x)?[0];
    Ok(exp.reward + td.gamma * q1.min(q2))
}

/// Critic losses, their parameter gradients and per-item TD errors.
#[derive(Debug, Clone)]
pub struct CriticLoss {
    pub losses: [f64; 2],
    pub td_errors: Vec<f64>,
    pub grads: [Vec<f64>; 2],
}

/// TD targets for a batch plus the smoothing noise that produced them.
#[derive(Debug, Clone)]
pub struct Targets {
    pub values: Vec<f64>,
    pub noise: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LearnReport {
    pub critic_losses: [f64; 2],
    pub td_errors: Vec<f64>,
    pub slots: Vec<usize>,
    pub ids: Vec<u64>,
    /// Priorities to write back, `None` in uniform mode.
    pub new_priorities: Option<Vec<f64>>,
    pub actor_updated: bool,
}

impl LearnReport {
    /// Writes the new priorities back, skipping slots that were overwritten
    /// since the batch was drawn. Returns the number written.
    pub fn apply_priorities(&self, buffer: &mut ReplayBuffer) -> Result<usize> {
        let Some(ps) = &self.new_priorities else {
            return Ok(0);
        };
        let mut n = 0;
        for ((&slot, &id), &p) in self.slots.iter().zip(&self.ids).zip(ps) {
            n += buffer.update_priority_if_current(slot, id, p)? as usize;
        }
        Ok(n)
    }
}

#[derive(Debug, Clone)]
pub struct Td3Agent {
    cfg: Td3Config,
    bounds: ActionBounds,
    actor: Mlp,
    actor_target: Mlp,
    critic1: Mlp,
    critic2: Mlp,
    critic1_target: Mlp,
    critic2_target: Mlp,
    learn_steps: u64,
    actor_updates: u64,
    rng: Rng,
}

impl Td3Agent {
    pub fn new(state_dim: usize, cfg: Td3Config, mut rng: Rng) -> Result<Self> {
        cfg.validate()?;
        let action_dim = cfg.action_dim();
        let actor_spec = MlpSpec::new(
            state_dim,
            cfg.hidden_dims.clone(),
            action_dim,
            HiddenActivation::Relu,
            OutputActivation::Tanh,
        )?;
        let critic_spec = MlpSpec::new(
            state_dim + action_dim,
            cfg.hidden_dims.clone(),
            1,
            HiddenActivation::Relu,
            OutputActivation::Identity,
        )?;
        let actor = Mlp::new(actor_spec, &mut rng)?;
        let critic1 = Mlp::new(critic_spec.clone(), &mut rng)?;
        let critic2 = Mlp::new(critic_spec, &mut rng)?;
        Ok(Self::from_networks(cfg, actor, critic1, critic2, rng))
    }

    /// Builds an agent around given networks; targets start as exact copies.
    pub fn from_networks(cfg: Td3Config, actor: Mlp, critic1: Mlp, critic2: Mlp, rng: Rng) -> Self {
        let bounds = ActionBounds::new(cfg.action_low.clone(), cfg.action_high.clone());
        Td3Agent {
            actor_target: actor.clone(),
            critic1_target: critic1.clone(),
            critic2_target: critic2.clone(),
            actor,
            critic1,
            critic2,
            learn_steps: 0,
            actor_updates: 0,
            rng,
            bounds,
            cfg,
        }
    }

    pub fn config(&self) -> &Td3Config {
        &self.cfg
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn actor_target(&self) -> &Mlp {
        &self.actor_target
    }

    pub fn critics(&self) -> [&Mlp; 2] {
        [&self.critic1, &self.critic2]
    }

    pub fn critic_targets(&self) -> [&Mlp; 2] {
        [&self.critic1_target, &self.critic2_target]
    }

    pub fn critic1_mut(&mut self) -> &mut Mlp {
        &mut self.critic1
    }

    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    pub fn actor_updates(&self) -> u64 {
        self.actor_updates
    }

    pub fn state_dim(&self) -> usize {
        self.actor.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    /// `scale(mu(s) + N(0, sigma))`, clamped to the action bounds.
    pub fn act(&self, state: &[f64], explore: bool, rng: &mut Rng) -> Result<Vec<f64>> {
        let mut y = self.actor.forward(state)?;
        if explore && self.cfg.exploration_sigma > 0.0 {
            let normal = Normal::new(0.0, self.cfg.exploration_sigma).expect("sigma validated");
            for yk in &mut y {
                *yk += normal.sample(rng);
            }
        }
        Ok(self.bounds.scale(&y))
    }

    pub fn td_settings(&self) -> TdSettings {
        self.cfg.td_settings()
    }

    /// TD targets with fresh clipped smoothing noise from the agent's stream.
    pub fn compute_targets(&mut self, experiences: &[Experience]) -> Result<Targets> {
        let td = self.td_settings();
        let mut values = Vec::with_capacity(experiences.len());
        let mut noise = Vec::with_capacity(experiences.len());
        for e in experiences {
            let n = td.draw_smoothing_noise(&mut self.rng);
            values.push(td_target(
                &self.actor_target,
                &self.critic1_target,
                &self.critic2_target,
                e,
                &n,
                &td,
            )?);
            noise.push(n);
        }
        Ok(Targets { values, noise })
    }

    /// Importance-weighted squared error `(1/N) sum_i w_i (y_i - Q_j)^2` for
    /// both critics, with gradients, and `delta_i = y_i - Q_1` (or the twin
    /// minimum, per config).
    pub fn critic_loss(&self, batch: &SampledBatch, targets: &[f64]) -> Result<CriticLoss> {
        if batch.is_empty() {
            return Err(AcerError::Domain("critic loss of an empty batch".into()));
        }
        check_len("targets", batch.len(), targets.len())?;
        let n = batch.len() as f64;
        let mut losses = [0.0; 2];
        let mut grads = [
            vec![0.0; self.critic1.params().len()],
            vec![0.0; self.critic2.params().len()],
        ];
        let mut td_errors = Vec::with_capacity(batch.len());
        for ((e, &w), &y) in batch.experiences.iter().zip(&batch.weights).zip(targets) {
            let x = critic_input(&e.state, &e.action);
            let mut qs = [0.0; 2];
            for (j, critic) in [&self.critic1, &self.critic2].into_iter().enumerate() {
                let trace = critic.forward_trace(&x)?;
                let q = trace.output()[0];
                qs[j] = q;
                losses[j] += w * (y - q) * (y - q) / n;
                critic.backward_into(&trace, &[-2.0 * w * (y - q) / n], &mut grads[j])?;
            }
            td_errors.push(match self.cfg.td_error_critic {
                TdErrorCritic::Q1 => y - qs[0],
                TdErrorCritic::MinTwin => y - qs[0].min(qs[1]),
            });
        }
        Ok(CriticLoss {
            losses,
            td_errors,
            grads,
        })
    }

    /// Gradient of `-(1/N) sum_i Q_1(s_i, scale(mu(s_i)))` with respect to the
    /// actor parameters, and the objective `(1/N) sum_i Q_1`.
    pub fn actor_gradient(&self, states: &[&[f64]]) -> Result<(Vec<f64>, f64)> {
        if states.is_empty() {
            return Err(AcerError::Domain("actor update with no states".into()));
        }
        let n = states.len() as f64;
        let mut grad = vec![0.0; self.actor.params().len()];
        let mut objective = 0.0;
        let sdim = self.state_dim();
        for &s in states {
            let actor_trace = self.actor.forward_trace(s)?;
            let action = self.bounds.scale(actor_trace.output());
            let critic_trace = self.critic1.forward_trace(&critic_input(s, &action))?;
            objective += critic_trace.output()[0] / n;
            let dq_dx = self.critic1.input_gradient(&critic_trace, &[1.0])?;
            let out_grad: Vec<f64> = dq_dx[sdim..]
                .iter()
                .enumerate()
                .map(|(k, dq_da)| -dq_da * self.bounds.half_range(k) / n)
                .collect();
            self.actor.backward_into(&actor_trace, &out_grad, &mut grad)?;
        }
        Ok((grad, objective))
    }

    /// One Adam step of the actor along the deterministic policy gradient.
    pub fn actor_update(&mut self, states: &[&[f64]]) -> Result<f64> {
        let (grad, objective) = self.actor_gradient(states)?;
        self.actor
            .adam_step(&grad, &AdamConfig::with_learning_rate(self.cfg.actor_lr))?;
        Ok(objective)
    }

    fn soft_update_targets(&mut self) -> Result<()> {
        self.actor_target.soft_update_from(&self.actor, self.cfg.tau_actor)?;
        self.critic1_target.soft_update_from(&self.critic1, self.cfg.tau_critic)?;
        self.critic2_target.soft_update_from(&self.critic2, self.cfg.tau_critic)?;
        Ok(())
    }

    /// One learning step on an already drawn batch. Does not touch the buffer;
    /// the returned report carries the priorities to write back.
    pub fn learn_on_batch(
        &mut self,
        batch: &SampledBatch,
        mode: ReplayMode,
        curriculum: Option<&CurriculumSnapshot>,
    ) -> Result<LearnReport> {
        if mode == ReplayMode::Acer && curriculum.is_none() {
            return Err(AcerError::Usage(
                "ACER learning needs a curriculum snapshot".into(),
            ));
        }
        let targets = self.compute_targets(&batch.experiences)?;
        let loss = self.critic_loss(batch, &targets.values)?;
        let critic_adam = AdamConfig::with_learning_rate(self.cfg.critic_lr);
        self.critic1.adam_step(&loss.grads[0], &critic_adam)?;
        self.critic2.adam_step(&loss.grads[1], &critic_adam)?;
        self.learn_steps += 1;

        let actor_updated = self.learn_steps % self.cfg.actor_delay == 0;
        if actor_updated {
            let states: Vec<&[f64]> = batch.experiences.iter().map(|e| e.state.as_slice()).collect();
            self.actor_update(&states)?;
            self.soft_update_targets()?;
            self.actor_updates += 1;
        }

        let new_priorities = match mode {
            ReplayMode::Uniform => None,
            ReplayMode::PerClipped => Some(loss.td_errors.iter().map(|&d| per_priority(d)).collect()),
            ReplayMode::Acer => {
                let c = curriculum.expect("checked above");
                Some(loss.td_errors.iter().map(|&d| c.priority(d)).collect())
            }
        };
        Ok(LearnReport {
            critic_losses: loss.losses,
            td_errors: loss.td_errors,
            slots: batch.slots.clone(),
            ids: batch.experiences.iter().map(|e| e.id).collect(),
            new_priorities,
            actor_updated,
        })
    }

    /// Sample, learn and write priorities back in one call.
    pub fn learn(
        &mut self,
        buffer: &mut ReplayBuffer,
        batch_size: usize,
        beta: f64,
        curriculum: Option<&CurriculumSnapshot>,
    ) -> Result<LearnReport> {
        let batch = buffer.sample(batch_size, beta)?;
        let report = self.learn_on_batch(&batch, buffer.mode(), curriculum)?;
        report.apply_priorities(buffer)?;
        Ok(report)
    }

    /// Deep copy of the networks the refresher needs, stamped with the
    /// number of learn steps taken so far.
    pub fn snapshot(&self) -> NetworkSnapshot {
        NetworkSnapshot {
            actor_target: self.actor_target.without_optimizer_state(),
            critic1_target: self.critic1_target.without_optimizer_state(),
            critic2_target: self.critic2_target.without_optimizer_state(),
            critic1: self.critic1.without_optimizer_state(),
            critic2: self.critic2.without_optimizer_state(),
            version: self.learn_steps,
        }
    }

    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(AGENT_MAGIC)?;
        w.write_all(&AGENT_FORMAT_VERSION.to_le_bytes())?;
        write_u64(w, self.learn_steps)?;
        write_u64(w, self.actor_updates)?;
        write_u64(w, self.bounds.low.len() as u64)?;
        for v in self.bounds.low.iter().chain(&self.bounds.high) {
            w.write_all(&v.to_le_bytes())?;
        }
        for net in [
            &self.actor,
            &self.actor_target,
            &self.critic1,
            &self.critic2,
            &self.critic1_target,
            &self.critic2_target,
        ] {
            net.write_to(w)?;
        }
        Ok(())
    }

    /// Restores an agent; `cfg` supplies the hyperparameters, the checkpoint
    /// the networks, action bounds and counters.
    pub fn read_checkpoint<R: Read>(r: &mut R, mut cfg: Td3Config, rng: Rng) -> Result<Td3Agent> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != AGENT_MAGIC {
            return Err(AcerError::Checkpoint("not a TD3 agent checkpoint".into()));
        }
        let mut version = [0u8; 4];
        r.read_exact(&mut version)?;
        let version = u32::from_le_bytes(version);
        if version != AGENT_FORMAT_VERSION {
            return Err(AcerError::Checkpoint(format!(
                "unsupported agent checkpoint version {version}"
            )));
        }
        let learn_steps = read_u64(r)?;
        let actor_updates = read_u64(r)?;
        let dim = read_u64(r)? as usize;
        if dim == 0 || dim > 1024 {
            return Err(AcerError::Checkpoint(format!("implausible action dim {dim}")));
        }
        let mut vals = Vec::with_capacity(2 * dim);
        let mut b = [0u8; 8];
        for _ in 0..2 * dim {
            r.read_exact(&mut b)?;
            vals.push(f64::from_le_bytes(b));
        }
        cfg.action_low = vals[..dim].to_vec();
        cfg.action_high = vals[dim..].to_vec();
        let mut nets = Vec::with_capacity(6);
        for _ in 0..6 {
            nets.push(Mlp::read_from(r)?);
        }
        let [actor, actor_target, critic1, critic2, critic1_target, critic2_target]: [Mlp; 6] =
            nets.try_into().expect("six networks read");
        if actor.output_dim() != dim || critic1.input_dim() != actor.input_dim() + dim {
            return Err(AcerError::Checkpoint("network shapes disagree with each other".into()));
        }
        cfg.hidden_dims = actor.spec().hidden_dims.clone();
        let bounds = ActionBounds::new(cfg.action_low.clone(), cfg.action_high.clone());
        Ok(Td3Agent {
            cfg,
            bounds,
            actor,
            actor_target,
            critic1,
            critic2,
            critic1_target,
            critic2_target,
            learn_steps,
            actor_updates,
            rng,
        })
    }
}

const AGENT_MAGIC: &[u8; 4] = b"ATD3";
const AGENT_FORMAT_VERSION: u32 = 1;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{central_difference, relative_error, FD_STEP};
    use crate::replay::{BufferConfig, EvictionPolicy, Origin, Transition};
    use crate::rng::seeded;
    use rand::Rng as _;

    fn small_config() -> Td3Config {
        Td3Config {
            hidden_dims: vec![6, 5],
            action_low: vec![-2.0, 0.0],
            action_high: vec![2.0, 1.0],
            ..Td3Config::standard(2)
        }
    }

    fn random_batch(rng: &mut Rng, n: usize, sdim: usize, adim: usize) -> SampledBatch {
        let experiences: Vec<Experience> = (0..n)
            .map(|i| Experience {
                state: (0..sdim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                action: (0..adim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                reward: rng.random_range(-5.0..5.0),
                next_state: (0..sdim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                done: i % 3 == 0,
                id: i as u64,
            })
            .collect();
        SampledBatch {
            weights: (0..n).map(|_| rng.random_range(0.1..1.0)).collect(),
            slots: (0..n).collect(),
            origins: vec![Origin::Tree; n],
            experiences,
        }
    }

    fn critic_objective(critic: &Mlp, batch: &SampledBatch, targets: &[f64]) -> f64 {
        let n = batch.len() as f64;
        batch
            .experiences
            .iter()
            .zip(&batch.weights)
            .zip(targets)
            .map(|((e, w), y)| {
                let q = critic.forward(&critic_input(&e.state, &e.action)).unwrap()[0];
                w * (y - q).powi(2) / n
            })
            .sum()
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = seeded(11);
        for _ in 0..10 {
            let agent = Td3Agent::new(3, small_config(), seeded(rng.random())).unwrap();
            let batch = random_batch(&mut rng, 5, 3, 2);
            let targets: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let loss = agent.critic_loss(&batch, &targets).unwrap();
            let critic = agent.critics()[0].clone();
            assert!((loss.losses[0] - critic_objective(&critic, &batch, &targets)).abs() < 1e-12);
            let numeric = central_difference(critic.params(), FD_STEP, |p| {
                let net = Mlp::from_params(critic.spec().clone(), p.to_vec()).unwrap();
                critic_objective(&net, &batch, &targets)
            });
            assert!(relative_error(&loss.grads[0], &numeric) < 1e-4);
        }
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut rng = seeded(12);
        for _ in 0..10 {
            let agent = Td3Agent::new(3, small_config(), seeded(rng.random())).unwrap();
            let states: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let refs: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
            let (grad, _) = agent.actor_gradient(&refs).unwrap();
            let actor = agent.actor().clone();
            let numeric = central_difference(actor.params(), FD_STEP, |p| {
                let net = Mlp::from_params(actor.spec().clone(), p.to_vec()).unwrap();
                -states
                    .iter()
                    .map(|s| {
                        let a = agent.bounds().scale(&net.forward(s).unwrap());
                        agent.critics()[0].forward(&critic_input(s, &a)).unwrap()[0]
                    })
                    .sum::<f64>()
                    / states.len() as f64
            });
            assert!(relative_error(&grad, &numeric) < 1e-4);
        }
    }

    #[test]
    fn terminal_target_is_reward() {
        let agent = Td3Agent::new(3, small_config(), seeded(1)).unwrap();
        let e = Experience {
            state: vec![0.0; 3],
            action: vec![0.0; 2],
            reward: 100.0,
            next_state: vec![0.5; 3],
            done: true,
            id: 0,
        };
        let td = agent.td_settings();
        let [c1, c2] = agent.critic_targets();
        assert_eq!(td_target(agent.actor_target(), c1, c2, &e, &[0.0, 0.0], &td).unwrap(), 100.0);
    }

    #[test]
    fn zero_networks_give_reward_as_td_error() {
        let cfg = small_config();
        let actor = Mlp::zeros(MlpSpec::new(3, vec![6, 5], 2, HiddenActivation::Relu, OutputActivation::Tanh).unwrap()).unwrap();
        let critic = Mlp::zeros(MlpSpec::new(5, vec![6, 5], 1, HiddenActivation::Relu, OutputActivation::Identity).unwrap()).unwrap();
        let mut agent = Td3Agent::from_networks(cfg, actor, critic.clone(), critic, seeded(2));
        let mut rng = seeded(3);
        let mut batch = random_batch(&mut rng, 4, 3, 2);
        for e in &mut batch.experiences {
            e.reward = 1.0;
        }
        let targets = agent.compute_targets(&batch.experiences).unwrap();
        assert!(targets.values.iter().all(|&y| y == 1.0));
        assert!(targets.noise.iter().flatten().all(|n| n.abs() <= 0.25));
        let loss = agent.critic_loss(&batch, &targets.values).unwrap();
        assert!(loss.td_errors.iter().all(|&d| d == 1.0));
    }

    #[test]
    fn actor_and_targets_move_on_the_delay_schedule() {
        let mut agent = Td3Agent::new(3, small_config(), seeded(4)).unwrap();
        let mut rng = seeded(5);
        let batch = random_batch(&mut rng, 8, 3, 2);
        let actor0 = agent.actor().params().to_vec();
        let target0 = agent.critic_targets()[0].params().to_vec();
        let critic0 = agent.critics()[0].params().to_vec();

        let r = agent.learn_on_batch(&batch, ReplayMode::Uniform, None).unwrap();
        assert!(!r.actor_updated);
        assert!(r.new_priorities.is_none());
        assert_eq!(agent.actor().params(), &actor0[..]);
        assert_eq!(agent.critic_targets()[0].params(), &target0[..]);
        assert_ne!(agent.critics()[0].params(), &critic0[..]);

        let r = agent.learn_on_batch(&batch, ReplayMode::Uniform, None).unwrap();
        assert!(r.actor_updated);
        assert_ne!(agent.actor().params(), &actor0[..]);
        // Targets moved a tau_critic fraction toward the live critic.
        let live = agent.critics()[0].params();
        for ((t, t0), c) in agent.critic_targets()[0].params().iter().zip(&target0).zip(live) {
            assert!((t - (0.8 * t0 + 0.2 * c)).abs() < 1e-12);
        }
        assert_eq!(agent.learn_steps(), 2);
        assert_eq!(agent.actor_updates(), 1);
    }

    #[test]
    fn acer_mode_needs_curriculum_and_uses_it() {
        let mut agent = Td3Agent::new(3, small_config(), seeded(6)).unwrap();
        let mut rng = seeded(7);
        let batch = random_batch(&mut rng, 4, 3, 2);
        assert!(agent.learn_on_batch(&batch, ReplayMode::Acer, None).is_err());
        let c = CurriculumSnapshot { c: 2.0, k1: 0.1, k2: 0.05 };
        let r = agent.learn_on_batch(&batch, ReplayMode::Acer, Some(&c)).unwrap();
        let ps = r.new_priorities.unwrap();
        for (p, d) in ps.iter().zip(&r.td_errors) {
            assert_eq!(*p, c.priority(*d));
        }
        let r = agent.learn_on_batch(&batch, ReplayMode::PerClipped, None).unwrap();
        for (p, d) in r.new_priorities.unwrap().iter().zip(&r.td_errors) {
            assert_eq!(*p, per_priority(*d));
        }
    }

    #[test]
    fn learn_writes_priorities_back() {
        let mut agent = Td3Agent::new(3, small_config(), seeded(8)).unwrap();
        let mut buffer = ReplayBuffer::new(
            BufferConfig {
                capacity: 32,
                mode: ReplayMode::PerClipped,
                alpha: 0.6,
                temp_pool: 0,
                eviction: EvictionPolicy::Stochastic,
            },
            seeded(9),
        )
        .unwrap();
        let mut rng = seeded(10);
        for _ in 0..20 {
            buffer
                .store(Transition {
                    state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    action: vec![0.0, 0.5],
                    reward: rng.random_range(-1.0..1.0),
                    next_state: vec![0.0; 3],
                    done: false,
                })
                .unwrap();
        }
        let r = agent.learn(&mut buffer, 8, 0.4, None).unwrap();
        for (slot, p) in r.slots.iter().zip(r.new_priorities.unwrap()) {
            assert_eq!(buffer.priority(*slot), Some(p));
        }
    }

    #[test]
    fn actions_stay_in_bounds() {
        let agent = Td3Agent::new(3, Td3Config { exploration_sigma: 5.0, ..small_config() }, seeded(11)).unwrap();
        let mut rng = seeded(12);
        for _ in 0..200 {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-10.0..10.0)).collect();
            let a = agent.act(&s, true, &mut rng).unwrap();
            assert!((-2.0..=2.0).contains(&a[0]) && (0.0..=1.0).contains(&a[1]));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut agent = Td3Agent::new(3, small_config(), seeded(13)).unwrap();
        let mut rng = seeded(14);
        let batch = random_batch(&mut rng, 6, 3, 2);
        for _ in 0..3 {
            agent.learn_on_batch(&batch, ReplayMode::Uniform, None).unwrap();
        }
        let mut bytes = Vec::new();
        agent.write_checkpoint(&mut bytes).unwrap();
        let back = Td3Agent::read_checkpoint(&mut bytes.as_slice(), Td3Config::standard(2), seeded(0)).unwrap();
        assert_eq!(back.learn_steps(), 3);
        assert_eq!(back.actor_updates(), 1);
        assert_eq!(back.actor().params(), agent.actor().params());
        assert_eq!(back.critic_targets()[1].params(), agent.critic_targets()[1].params());
        assert_eq!(back.bounds(), agent.bounds());
        assert_eq!(back.critics()[0].adam_state(), agent.critics()[0].adam_state());
        assert!(Td3Agent::read_checkpoint(&mut &bytes[..10], Td3Config::standard(2), seeded(0)).is_err());
    }

    #[test]
    fn snapshot_carries_version() {
        let mut agent = Td3Agent::new(3, small_config(), seeded(15)).unwrap();
        let mut rng = seeded(16);
        let batch = random_batch(&mut rng, 4, 3, 2);
        agent.learn_on_batch(&batch, ReplayMode::Uniform, None).unwrap();
        let snap = agent.snapshot();
        assert_eq!(snap.version, 1);
        assert_eq!(snap.critic1.params(), agent.critics()[0].params());
    }

    #[test]
    fn config_validation() {
        assert!(Td3Config::standard(3).validate().is_ok());
        assert!(Td3Config { actor_delay: 0, ..Td3Config::standard(3) }.validate().is_err());
        assert!(Td3Config { gamma: 1.5, ..Td3Config::standard(3) }.validate().is_err());
        assert!(Td3Config { action_high: vec![1.0], ..Td3Config::standard(3) }.validate().is_err());
    }
}
