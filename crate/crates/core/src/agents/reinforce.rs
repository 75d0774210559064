//! Final-reward policy gradient over a softmax policy.
//!
//! Intermediate rewards are zero and the discount is 1, so every step of an
//! episode shares the same return: the final reward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::epsilon::Epsilon;
use super::mlp::{argmax, log_softmax, Mlp};
use super::replay::Transition;
use super::{AgentError, Learner, LearnerConfig};

fn trajectory_inputs(net: &Mlp, traj: &[Transition]) -> Result<Vec<f64>, AgentError> {
    let mut input = Vec::with_capacity(traj.len() * net.input_len());
    for t in traj {
        if t.action >= net.output_len() {
            return Err(AgentError::Shape { what: "action index", expected: net.output_len(), got: t.action });
        }
        input.extend_from_slice(&t.obs);
    }
    Ok(input)
}

/// `ret · Σ_t log π(a_t | s_t)`.
pub fn log_policy_objective(net: &Mlp, traj: &[Transition], ret: f64) -> Result<f64, AgentError> {
    let acts = net.forward_batch(&trajectory_inputs(net, traj)?, traj.len())?;
    let n = net.output_len();
    let sum: f64 = traj.iter().enumerate().map(|(i, t)| log_softmax(&acts.last()[i * n..(i + 1) * n])[t.action]).sum();
    Ok(ret * sum)
}

/// Objective value and its parameter gradient.
pub fn log_policy_grad(net: &Mlp, traj: &[Transition], ret: f64) -> Result<(f64, Vec<f64>), AgentError> {
    let acts = net.forward_batch(&trajectory_inputs(net, traj)?, traj.len())?;
    let n = net.output_len();
    let mut grad_out = vec![0.0; traj.len() * n];
    let mut obj = 0.0;
    for (i, t) in traj.iter().enumerate() {
        let lp = log_softmax(&acts.last()[i * n..(i + 1) * n]);
        obj += lp[t.action];
        for (k, g) in grad_out[i * n..(i + 1) * n].iter_mut().enumerate() {
            let indicator = if k == t.action { 1.0 } else { 0.0 };
            *g = ret * (indicator - lp[k].exp());
        }
    }
    let mut grad = vec![0.0; net.params().len()];
    net.backward(&acts, &grad_out, &mut grad);
    Ok((ret * obj, grad))
}

/// One ascent step on the log-policy objective scaled by `ret`. A zero return
/// carries no gradient and leaves the optimiser untouched.
pub fn reinforce_update(
    net: &mut Mlp,
    adam: &mut Adam,
    traj: &[Transition],
    ret: f64,
    expected_len: Option<usize>,
) -> Result<(), AgentError> {
    let complete = traj.last().is_some_and(|t| t.terminal);
    if !complete {
        return Err(AgentError::IncompleteTrajectory(format!("{} steps without a terminal transition", traj.len())));
    }
    if let Some(n) = expected_len {
        if traj.len() != n {
            return Err(AgentError::IncompleteTrajectory(format!("expected {n} steps, got {}", traj.len())));
        }
    }
    if ret == 0.0 {
        return Ok(());
    }
    let (_, mut grad) = log_policy_grad(net, traj, ret)?;
    grad.iter_mut().for_each(|g| *g = -*g);
    adam.step(net.params_mut(), &grad);
    Ok(())
}

pub struct ReinforceLearner {
    net: Mlp,
    adam: Adam,
    epsilon: Epsilon,
    rng: ChaCha8Rng,
    episode: Vec<Transition>,
    baseline: Option<(f64, f64)>,
}

impl ReinforceLearner {
    pub fn new(cfg: &LearnerConfig, obs_len: usize, n_actions: usize, seed: u64) -> Result<Self, AgentError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&cfg.layer_sizes(obs_len, n_actions), &mut rng);
        Ok(Self {
            adam: Adam::new(net.params().len(), cfg.learning_rate, cfg.adam),
            epsilon: Epsilon::new(cfg.epsilon),
            net,
            rng,
            episode: Vec::new(),
            baseline: cfg.baseline_decay.map(|d| (d, 0.0)),
        })
    }

    fn finish(&mut self) -> Result<(), AgentError> {
        let traj = std::mem::take(&mut self.episode);
        let final_reward: f64 = traj.iter().map(|t| t.reward).sum();
        let ret = match self.baseline.as_mut() {
            Some((decay, mean)) => {
                let r = final_reward - *mean;
                *mean = *decay * *mean + (1.0 - *decay) * final_reward;
                r
            }
            None => final_reward,
        };
        reinforce_update(&mut self.net, &mut self.adam, &traj, ret, None)
    }
}

impl Learner for ReinforceLearner {
    fn name(&self) -> &'static str {
        "reinforce"
    }

    fn begin_task(&mut self, task: usize) {
        self.epsilon.begin_task(task);
    }

    fn set_task_progress(&mut self, fraction: f64) {
        self.epsilon.set_progress(fraction);
    }

    /// Uniform with probability ε, otherwise a draw from the softmax policy.
    fn act(&mut self, obs: &[f64]) -> Result<usize, AgentError> {
        let logits = self.net.forward(obs)?;
        let eps = self.epsilon.value();
        if eps > 0.0 && self.rng.random::<f64>() < eps {
            return Ok(self.rng.random_range(0..logits.len()));
        }
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, lp) in log_softmax(&logits).iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                return Ok(i);
            }
        }
        Ok(logits.len() - 1)
    }

    fn greedy_action(&self, obs: &[f64]) -> Result<usize, AgentError> {
        Ok(argmax(&self.net.forward(obs)?))
    }

    fn observe(&mut self, t: Transition) -> Result<(), AgentError> {
        let terminal = t.terminal;
        self.episode.push(t);
        self.epsilon.on_step();
        if terminal {
            self.finish()?;
        }
        Ok(())
    }

    /// A truncated episode has no final outcome and is dropped.
    fn end_episode(&mut self) -> Result<(), AgentError> {
        self.episode.clear();
        Ok(())
    }

    fn network(&self) -> &Mlp {
        &self.net
    }

    fn epsilon(&self) -> f64 {
        self.epsilon.value()
    }
}
