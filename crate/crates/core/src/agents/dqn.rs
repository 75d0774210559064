//! Deep Q-learning with uniform replay and ε-greedy exploration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::epsilon::Epsilon;
use super::mlp::{argmax, Mlp};
use super::replay::{ReplayBuffer, Transition};
use super::{AgentError, Learner, LearnerConfig};

/// Bootstrapped targets `r + γ·max_a Q_target(s', a)`, or `r` on terminal transitions.
pub fn td_targets(target: &Mlp, batch: &[&Transition], gamma: f64) -> Result<Vec<f64>, AgentError> {
    let live: Vec<usize> = (0..batch.len()).filter(|&i| !batch[i].terminal && gamma != 0.0).collect();
    let mut out: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    if live.is_empty() {
        return Ok(out);
    }
    let mut input = Vec::with_capacity(live.len() * target.input_len());
    for &i in &live {
        input.extend_from_slice(&batch[i].next_obs);
    }
    let acts = target.forward_batch(&input, live.len())?;
    let n = target.output_len();
    for (k, &i) in live.iter().enumerate() {
        let q = &acts.last()[k * n..(k + 1) * n];
        out[i] += gamma * q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    }
    Ok(out)
}

fn batch_inputs(net: &Mlp, batch: &[&Transition]) -> Result<Vec<f64>, AgentError> {
    let mut input = Vec::with_capacity(batch.len() * net.input_len());
    for t in batch {
        if t.action >= net.output_len() {
            return Err(AgentError::Shape { what: "action index", expected: net.output_len(), got: t.action });
        }
        input.extend_from_slice(&t.obs);
    }
    Ok(input)
}

/// Mean squared TD error against fixed targets.
pub fn td_loss(net: &Mlp, batch: &[&Transition], targets: &[f64]) -> Result<f64, AgentError> {
    let acts = net.forward_batch(&batch_inputs(net, batch)?, batch.len())?;
    let n = net.output_len();
    let sum: f64 = batch.iter().enumerate().map(|(i, t)| (acts.last()[i * n + t.action] - targets[i]).powi(2)).sum();
    Ok(sum / batch.len() as f64)
}

/// Loss and its gradient with respect to the flat parameters; targets are constants.
pub fn td_loss_grad(net: &Mlp, batch: &[&Transition], targets: &[f64]) -> Result<(f64, Vec<f64>), AgentError> {
    let b = batch.len();
    let acts = net.forward_batch(&batch_inputs(net, batch)?, b)?;
    let n = net.output_len();
    let mut grad_out = vec![0.0; b * n];
    let mut loss = 0.0;
    for (i, t) in batch.iter().enumerate() {
        let err = acts.last()[i * n + t.action] - targets[i];
        loss += err * err;
        grad_out[i * n + t.action] = 2.0 * err / b as f64;
    }
    let mut grad = vec![0.0; net.params().len()];
    net.backward(&acts, &grad_out, &mut grad);
    Ok((loss / b as f64, grad))
}

/// ε-greedy over Q-values; greedy ties go to the lowest index.
pub fn select_action<R: Rng>(net: &Mlp, obs: &[f64], epsilon: f64, rng: &mut R) -> Result<usize, AgentError> {
    let q = net.forward(obs)?;
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..q.len()));
    }
    Ok(argmax(&q))
}

/// One Adam step on a uniformly sampled batch. `Ok(None)` when the buffer is
/// smaller than the batch.
pub fn dqn_train_step<R: Rng>(
    net: &mut Mlp,
    adam: &mut Adam,
    buffer: &ReplayBuffer,
    batch_size: usize,
    gamma: f64,
    target: Option<&Mlp>,
    rng: &mut R,
) -> Result<Option<f64>, AgentError> {
    let Some(batch) = buffer.sample(batch_size, rng) else {
        return Ok(None);
    };
    let targets = td_targets(target.unwrap_or(net), &batch, gamma)?;
    let (loss, grad) = td_loss_grad(net, &batch, &targets)?;
    adam.step(net.params_mut(), &grad);
    Ok(Some(loss))
}

pub struct DqnLearner {
    net: Mlp,
    target: Option<Mlp>,
    adam: Adam,
    buffer: ReplayBuffer,
    epsilon: Epsilon,
    rng: ChaCha8Rng,
    cfg: LearnerConfig,
    steps: u64,
    updates: u64,
    episode: Vec<Transition>,
    last_loss: Option<f64>,
}

impl DqnLearner {
    pub fn new(cfg: &LearnerConfig, obs_len: usize, n_actions: usize, seed: u64) -> Result<Self, AgentError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&cfg.layer_sizes(obs_len, n_actions), &mut rng);
        Ok(Self {
            target: cfg.target_sync.map(|_| net.clone()),
            adam: Adam::new(net.params().len(), cfg.learning_rate, cfg.adam),
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            epsilon: Epsilon::new(cfg.epsilon),
            net,
            rng,
            cfg: cfg.clone(),
            steps: 0,
            updates: 0,
            episode: Vec::new(),
            last_loss: None,
        })
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.last_loss
    }

    /// Stores the pending episode with undiscounted returns as terminal targets.
    fn flush_monte_carlo(&mut self) {
        let mut ret = 0.0;
        let mut episode = std::mem::take(&mut self.episode);
        for t in episode.iter_mut().rev() {
            ret += t.reward;
            t.reward = ret;
            t.terminal = true;
        }
        for t in episode {
            self.buffer.push(t);
        }
    }

    fn maybe_train(&mut self) -> Result<(), AgentError> {
        let starts = self.cfg.learning_starts.unwrap_or(self.cfg.batch_size);
        if self.buffer.len() < starts || !self.steps.is_multiple_of(self.cfg.train_every as u64) {
            return Ok(());
        }
        let loss = dqn_train_step(
            &mut self.net,
            &mut self.adam,
            &self.buffer,
            self.cfg.batch_size,
            self.cfg.gamma,
            self.target.as_ref(),
            &mut self.rng,
        )?;
        if let Some(l) = loss {
            self.last_loss = Some(l);
            self.updates += 1;
            if let (Some(every), Some(target)) = (self.cfg.target_sync, self.target.as_mut()) {
                if self.updates.is_multiple_of(every as u64) {
                    target.clone_from(&self.net);
                }
            }
        }
        Ok(())
    }
}

impl Learner for DqnLearner {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn begin_task(&mut self, task: usize) {
        self.epsilon.begin_task(task);
    }

    fn set_task_progress(&mut self, fraction: f64) {
        self.epsilon.set_progress(fraction);
    }

    fn act(&mut self, obs: &[f64]) -> Result<usize, AgentError> {
        select_action(&self.net, obs, self.epsilon.value(), &mut self.rng)
    }

    fn greedy_action(&self, obs: &[f64]) -> Result<usize, AgentError> {
        Ok(argmax(&self.net.forward(obs)?))
    }

    fn observe(&mut self, t: Transition) -> Result<(), AgentError> {
        let terminal = t.terminal;
        if self.cfg.monte_carlo {
            self.episode.push(t);
            if terminal {
                self.flush_monte_carlo();
            }
        } else {
            self.buffer.push(t);
        }
        self.steps += 1;
        self.epsilon.on_step();
        self.maybe_train()
    }

    fn end_episode(&mut self) -> Result<(), AgentError> {
        if !self.episode.is_empty() {
            self.flush_monte_carlo();
        }
        Ok(())
    }

    fn network(&self) -> &Mlp {
        &self.net
    }

    fn epsilon(&self) -> f64 {
        self.epsilon.value()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::adam::AdamConfig;

    fn tr(obs: Vec<f64>, action: usize, reward: f64, next: Vec<f64>, terminal: bool) -> Transition {
        Transition { obs, action, reward, next_obs: next, terminal }
    }

    #[test]
    fn terminal_targets_are_rewards() {
        let net = Mlp::new(&[2, 4, 2], &mut ChaCha8Rng::seed_from_u64(3));
        let a = tr(vec![1.0, 0.0], 0, 0.5, vec![0.0, 1.0], true);
        let b = tr(vec![0.0, 1.0], 1, -0.25, vec![1.0, 1.0], true);
        let batch = vec![&a, &b];
        let targets = td_targets(&net, &batch, 0.8).unwrap();
        assert_eq!(targets, vec![0.5, -0.25]);
        let q0 = net.forward(&a.obs).unwrap()[0];
        let q1 = net.forward(&b.obs).unwrap()[1];
        let expected = ((q0 - 0.5).powi(2) + (q1 + 0.25).powi(2)) / 2.0;
        assert!((td_loss(&net, &batch, &targets).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_discount_matches_terminal_case() {
        let net = Mlp::new(&[2, 4, 2], &mut ChaCha8Rng::seed_from_u64(4));
        let live = tr(vec![1.0, 0.0], 1, 0.3, vec![0.0, 1.0], false);
        let dead = Transition { terminal: true, ..live.clone() };
        assert_eq!(td_targets(&net, &[&live], 0.0).unwrap(), td_targets(&net, &[&dead], 0.8).unwrap());
    }

    #[test]
    fn train_step_signals_small_buffer() {
        let mut net = Mlp::zeros(&[1, 2]);
        let mut adam = Adam::new(net.params().len(), 1e-3, AdamConfig::default());
        let mut buf = ReplayBuffer::new(10);
        buf.push(tr(vec![0.0], 0, 1.0, vec![0.0], true));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = dqn_train_step(&mut net, &mut adam, &buf, 2, 0.8, None, &mut rng).unwrap();
        assert!(out.is_none());
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn greedy_selection() {
        let mut net = Mlp::zeros(&[1, 3]);
        let bias_start = 3;
        net.params_mut()[bias_start..].copy_from_slice(&[0.1, 0.9, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(select_action(&net, &[0.0], 0.0, &mut rng).unwrap(), 1);
        net.params_mut()[bias_start..].copy_from_slice(&[0.5, 0.5, 0.1]);
        assert_eq!(select_action(&net, &[0.0], 0.0, &mut rng).unwrap(), 0);
    }

    #[test]
    fn monte_carlo_mode_stores_returns() {
        let cfg = LearnerConfig { monte_carlo: true, learning_starts: Some(1000), ..LearnerConfig::default() };
        let mut l = DqnLearner::new(&cfg, 1, 2, 0).unwrap();
        l.observe(tr(vec![0.0], 0, 0.0, vec![1.0], false)).unwrap();
        assert_eq!(l.buffer().len(), 0);
        l.observe(tr(vec![1.0], 1, 0.7, vec![2.0], true)).unwrap();
        let stored: Vec<(f64, bool)> = l.buffer().iter().map(|t| (t.reward, t.terminal)).collect();
        assert_eq!(stored, vec![(0.7, true), (0.7, true)]);
    }
}
