//! DQN from scratch: feed-forward Q-network, experience replay, quasistatic
//! target network, epsilon-greedy policy, and the TD training step.
//!
//! The network is a plain MLP with ReLU hidden layers and a linear output
//! head, one output per joint action. Training is single-threaded and
//! bit-for-bit reproducible given `(seed, config)`.

use thiserror::Error;

use crate::real::Real;
use crate::rng::{SimRng, StreamKind};

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("input has {got} features, the network expects {want}")]
    DimensionMismatch { got: usize, want: usize },
    #[error("cannot sample from an empty replay buffer")]
    EmptyReplay,
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

/// Fully-connected Q-value network.
#[derive(Clone, Debug, PartialEq)]
pub struct QNetwork<R: Real> {
    layer_sizes: Vec<usize>,
    /// Row-major `[out][in]` weight matrix per layer.
    weights: Vec<Vec<R>>,
    biases: Vec<Vec<R>>,
}

impl<R: Real> QNetwork<R> {
    /// Xavier-uniform initialization on the given stream.
    pub fn new(layer_sizes: &[usize], rng: &mut SimRng) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output layers");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out).map(|_| R::of(rng.range_f64(-limit, limit))).collect(),
            );
            biases.push(vec![R::zero(); fan_out]);
        }
        Self { layer_sizes: layer_sizes.to_vec(), weights, biases }
    }

    /// All-zero network; forward maps everything to zero.
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        assert!(layer_sizes.len() >= 2);
        let weights = layer_sizes.windows(2).map(|p| vec![R::zero(); p[0] * p[1]]).collect();
        let biases = layer_sizes.windows(2).map(|p| vec![R::zero(); p[1]]).collect();
        Self { layer_sizes: layer_sizes.to_vec(), weights, biases }
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("nonempty")
    }

    /// Q-values for one state. ReLU hidden layers, linear output.
    pub fn forward(&self, input: &[R]) -> Result<Vec<R>, AgentError> {
        if input.len() != self.input_dim() {
            return Err(AgentError::DimensionMismatch { got: input.len(), want: self.input_dim() });
        }
        Ok(self.forward_cached(input).pop().expect("at least one layer"))
    }

    /// Forward pass keeping every layer's post-activation values;
    /// `result[0]` is the input, `result.last()` the output.
    fn forward_cached(&self, input: &[R]) -> Vec<Vec<R>> {
        let num_layers = self.weights.len();
        let mut acts: Vec<Vec<R>> = Vec::with_capacity(num_layers + 1);
        acts.push(input.to_vec());
        for layer in 0..num_layers {
            let fan_in = self.layer_sizes[layer];
            let last = layer == num_layers - 1;
            let prev = &acts[layer];
            let w = &self.weights[layer];
            let mut out = self.biases[layer].clone();
            for (o, out_val) in out.iter_mut().enumerate() {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut acc = *out_val;
                for (x, wi) in prev.iter().zip(row) {
                    acc += *x * *wi;
                }
                *out_val = if last || acc > R::zero() { acc } else { R::zero() };
            }
            acts.push(out);
        }
        acts
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flat parameter view: all weight matrices, then all bias vectors.
    pub fn get_param(&self, idx: usize) -> R {
        let mut idx = idx;
        for w in &self.weights {
            if idx < w.len() {
                return w[idx];
            }
            idx -= w.len();
        }
        for b in &self.biases {
            if idx < b.len() {
                return b[idx];
            }
            idx -= b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, idx: usize, value: R) {
        let mut idx = idx;
        for w in &mut self.weights {
            if idx < w.len() {
                w[idx] = value;
                return;
            }
            idx -= w.len();
        }
        for b in &mut self.biases {
            if idx < b.len() {
                b[idx] = value;
                return;
            }
            idx -= b.len();
        }
        panic!("parameter index out of range");
    }

    /// Versioned text serialization: layer sizes, training step counter, and
    /// exact parameter bits (hex-encoded f64), loadable for eval-only runs.
    pub fn to_checkpoint(&self, train_steps: u64) -> String {
        let mut out = String::new();
        out.push_str("slicesim-checkpoint v1\n");
        out.push_str("layers");
        for s in &self.layer_sizes {
            out.push_str(&format!(" {s}"));
        }
        out.push('\n');
        out.push_str(&format!("train_steps {train_steps}\n"));
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            for (tag, vals) in [("w", w), ("b", b)] {
                out.push_str(&format!("{tag}{i}"));
                for v in vals {
                    out.push_str(&format!(" {:016x}", v.to_f64_lossy().to_bits()));
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<(Self, u64), AgentError> {
        let bad = |msg: &str| AgentError::Checkpoint(msg.to_string());
        let mut lines = text.lines();
        match lines.next() {
            Some("slicesim-checkpoint v1") => {}
            Some(other) => {
                return Err(bad(&format!("unsupported header: {other}")));
            }
            None => return Err(bad("empty file")),
        }
        let sizes_line = lines.next().ok_or_else(|| bad("missing layers line"))?;
        let layer_sizes: Vec<usize> = sizes_line
            .strip_prefix("layers ")
            .ok_or_else(|| bad("missing layers line"))?
            .split_whitespace()
            .map(|tok| tok.parse().map_err(|_| bad(&format!("bad layer size {tok}"))))
            .collect::<Result<_, _>>()?;
        if layer_sizes.len() < 2 {
            return Err(bad("need at least two layers"));
        }
        let steps_line = lines.next().ok_or_else(|| bad("missing train_steps line"))?;
        let train_steps: u64 = steps_line
            .strip_prefix("train_steps ")
            .ok_or_else(|| bad("missing train_steps line"))?
            .trim()
            .parse()
            .map_err(|_| bad("bad train_steps value"))?;
        let mut net = Self::zeros(&layer_sizes);
        for i in 0..layer_sizes.len() - 1 {
            for (tag, expected_len) in [
                ("w", layer_sizes[i] * layer_sizes[i + 1]),
                ("b", layer_sizes[i + 1]),
            ] {
                let line = lines.next().ok_or_else(|| bad(&format!("missing {tag}{i} line")))?;
                let prefix = format!("{tag}{i} ");
                let body = line
                    .strip_prefix(&prefix)
                    .ok_or_else(|| bad(&format!("expected {tag}{i} line")))?;
                let vals: Vec<R> = body
                    .split_whitespace()
                    .map(|tok| {
                        u64::from_str_radix(tok, 16)
                            .map(|bits| R::of(f64::from_bits(bits)))
                            .map_err(|_| bad(&format!("bad hex value in {tag}{i}")))
                    })
                    .collect::<Result<_, _>>()?;
                if vals.len() != expected_len {
                    return Err(bad(&format!(
                        "{tag}{i} has {} values, expected {expected_len}",
                        vals.len()
                    )));
                }
                match tag {
                    "w" => net.weights[i] = vals,
                    _ => net.biases[i] = vals,
                }
            }
        }
        Ok((net, train_steps))
    }
}

/// Copies the online parameters into the target network.
pub fn sync_target<R: Real>(net: &QNetwork<R>, target: &mut QNetwork<R>) {
    target.clone_from(net);
}

/// One environment step as stored in the replay buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<R> {
    pub state: Vec<R>,
    pub action: usize,
    pub reward: R,
    pub next_state: Vec<R>,
    pub terminal: bool,
}

/// Fixed-capacity ring of transitions with oldest-first eviction.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<R> {
    capacity: usize,
    items: Vec<Transition<R>>,
    write_pos: usize,
}

impl<R: Real> ReplayBuffer<R> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: Vec::new(), write_pos: 0 }
    }

    pub fn store(&mut self, transition: Transition<R>) {
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.write_pos] = transition;
        }
        self.write_pos = (self.write_pos + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<R>> {
        self.items.iter()
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, batch: usize, rng: &mut SimRng) -> Result<Vec<&Transition<R>>, AgentError> {
        if self.items.is_empty() {
            return Err(AgentError::EmptyReplay);
        }
        Ok((0..batch).map(|_| &self.items[rng.index(self.items.len())]).collect())
    }
}

/// DQN hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<R: Real> {
    pub discount: R,
    pub batch_size: usize,
    pub learning_rate: R,
    /// Global L2 gradient-norm clip.
    pub grad_clip: R,
    pub replay_capacity: usize,
    /// Hard target sync every this many train steps.
    pub target_sync_period: u64,
    pub train_steps_per_epoch: u32,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Epochs over which epsilon decays linearly from start to end.
    pub eps_decay_epochs: u64,
    pub hidden_layers: Vec<usize>,
}

impl<R: Real> Default for TrainConfig<R> {
    fn default() -> Self {
        Self {
            discount: R::of(0.9),
            batch_size: 32,
            learning_rate: R::of(1e-3),
            grad_clip: R::of(10.0),
            replay_capacity: 10_000,
            target_sync_period: 50,
            train_steps_per_epoch: 4,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_epochs: 300,
            hidden_layers: vec![64, 64],
        }
    }
}

/// Linear epsilon schedule: `eps_start` at epoch 0 falling to `eps_end` at
/// `eps_decay_epochs`, flat afterwards.
pub fn epsilon_at<R: Real>(cfg: &TrainConfig<R>, epoch: u64) -> f64 {
    if cfg.eps_decay_epochs == 0 || epoch >= cfg.eps_decay_epochs {
        return cfg.eps_end;
    }
    let frac = epoch as f64 / cfg.eps_decay_epochs as f64;
    cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac
}

/// Epsilon-greedy action choice: argmax with probability `1 - eps`
/// (lowest index on ties), otherwise uniform over all actions.
pub fn select_action<R: Real>(q_values: &[R], eps: f64, rng: &mut SimRng) -> usize {
    assert!(!q_values.is_empty());
    if rng.uniform_f64() < eps {
        rng.index(q_values.len())
    } else {
        greedy_action(q_values)
    }
}

/// Argmax with the lowest index winning ties.
pub fn greedy_action<R: Real>(q_values: &[R]) -> usize {
    let mut best = 0;
    for (i, &q) in q_values.iter().enumerate().skip(1) {
        if q > q_values[best] {
            best = i;
        }
    }
    best
}

/// Mean squared TD error of a batch against the target network, without
/// touching any parameters. Targets are `r + gamma * max_a' q_target(s', a')`,
/// or just `r` for terminal transitions.
pub fn batch_loss<R: Real>(
    net: &QNetwork<R>,
    target: &QNetwork<R>,
    batch: &[&Transition<R>],
    cfg: &TrainConfig<R>,
) -> R {
    if batch.is_empty() {
        return R::zero();
    }
    let inv_b = R::one() / R::of(batch.len() as f64);
    let mut loss = R::zero();
    for tr in batch {
        let q_sa = net.forward(&tr.state).expect("state dims")[tr.action];
        let y = td_target(target, tr, cfg);
        let err = q_sa - y;
        loss += err * err * inv_b;
    }
    loss
}

fn td_target<R: Real>(target: &QNetwork<R>, tr: &Transition<R>, cfg: &TrainConfig<R>) -> R {
    if tr.terminal {
        return tr.reward;
    }
    let next_q = target.forward(&tr.next_state).expect("state dims");
    let best = next_q.iter().copied().fold(R::neg_infinity(), R::max);
    tr.reward + cfg.discount * best
}

/// One SGD step on the mean squared TD error of `batch`; returns the
/// pre-step loss, or `None` for an empty batch ("not trained").
pub fn train_step<R: Real>(
    net: &mut QNetwork<R>,
    target: &QNetwork<R>,
    batch: &[&Transition<R>],
    cfg: &TrainConfig<R>,
) -> Option<R> {
    if batch.is_empty() {
        return None;
    }
    let num_layers = net.weights.len();
    let mut grad_w: Vec<Vec<R>> = net.weights.iter().map(|w| vec![R::zero(); w.len()]).collect();
    let mut grad_b: Vec<Vec<R>> = net.biases.iter().map(|b| vec![R::zero(); b.len()]).collect();
    let inv_b = R::one() / R::of(batch.len() as f64);
    let two = R::of(2.0);
    let mut loss = R::zero();

    for tr in batch {
        let acts = net.forward_cached(&tr.state);
        let q_sa = acts[num_layers][tr.action];
        let y = td_target(target, tr, cfg);
        let err = q_sa - y;
        loss += err * err * inv_b;

        // d(loss)/d(output_j) is nonzero only at the taken action.
        let mut delta = vec![R::zero(); net.layer_sizes[num_layers]];
        delta[tr.action] = two * err * inv_b;
        for layer in (0..num_layers).rev() {
            let fan_in = net.layer_sizes[layer];
            let prev = &acts[layer];
            let gw = &mut grad_w[layer];
            for (o, &d) in delta.iter().enumerate() {
                if d == R::zero() {
                    continue;
                }
                grad_b[layer][o] += d;
                let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                for (g, &x) in row.iter_mut().zip(prev) {
                    *g += d * x;
                }
            }
            if layer == 0 {
                break;
            }
            // Propagate through the ReLU of the previous hidden layer:
            // post-activation zero means the unit was clamped.
            let mut next_delta = vec![R::zero(); fan_in];
            let w = &net.weights[layer];
            for (o, &d) in delta.iter().enumerate() {
                if d == R::zero() {
                    continue;
                }
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (nd, &wi) in next_delta.iter_mut().zip(row) {
                    *nd += d * wi;
                }
            }
            for (nd, &a) in next_delta.iter_mut().zip(prev) {
                if a <= R::zero() {
                    *nd = R::zero();
                }
            }
            delta = next_delta;
        }
    }

    // Global L2 norm clip, then the SGD step.
    let mut norm_sq = R::zero();
    for g in grad_w.iter().chain(&grad_b).flat_map(|v| v.iter()) {
        norm_sq += *g * *g;
    }
    let norm = norm_sq.sqrt();
    let scale = if norm > cfg.grad_clip && norm > R::zero() { cfg.grad_clip / norm } else { R::one() };
    let lr = cfg.learning_rate * scale;
    for (w, gw) in net.weights.iter_mut().zip(&grad_w) {
        for (p, &g) in w.iter_mut().zip(gw) {
            *p -= lr * g;
        }
    }
    for (b, gb) in net.biases.iter_mut().zip(&grad_b) {
        for (p, &g) in b.iter_mut().zip(gb) {
            *p -= lr * g;
        }
    }
    Some(loss)
}

/// Online network, target network, replay, and the bookkeeping that ties
/// them together during training.
pub struct DqnAgent<R: Real> {
    pub net: QNetwork<R>,
    pub target: QNetwork<R>,
    pub replay: ReplayBuffer<R>,
    pub cfg: TrainConfig<R>,
    train_steps: u64,
    syncs: u64,
    policy_rng: SimRng,
    replay_rng: SimRng,
}

impl<R: Real> DqnAgent<R> {
    pub fn new(input_dim: usize, num_actions: usize, cfg: TrainConfig<R>, master_seed: u64) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(&cfg.hidden_layers);
        sizes.push(num_actions);
        let mut init_rng = SimRng::new(master_seed, StreamKind::NetInit, 0);
        let net = QNetwork::new(&sizes, &mut init_rng);
        let target = net.clone();
        Self {
            replay: ReplayBuffer::new(cfg.replay_capacity),
            policy_rng: SimRng::new(master_seed, StreamKind::Policy, 0),
            replay_rng: SimRng::new(master_seed, StreamKind::Replay, 0),
            net,
            target,
            cfg,
            train_steps: 0,
            syncs: 0,
        }
    }

    /// Restores a checkpointed network for evaluation or continued training.
    pub fn from_network(net: QNetwork<R>, cfg: TrainConfig<R>, master_seed: u64, train_steps: u64) -> Self {
        Self {
            target: net.clone(),
            replay: ReplayBuffer::new(cfg.replay_capacity),
            policy_rng: SimRng::new(master_seed, StreamKind::Policy, 0),
            replay_rng: SimRng::new(master_seed, StreamKind::Replay, 0),
            net,
            cfg,
            train_steps,
            syncs: 0,
        }
    }

    pub fn act(&mut self, features: &[R], eps: f64) -> usize {
        let q = self.net.forward(features).expect("feature dims match the network");
        select_action(&q, eps, &mut self.policy_rng)
    }

    /// Greedy action without consuming exploration randomness.
    pub fn act_greedy(&self, features: &[R]) -> usize {
        let q = self.net.forward(features).expect("feature dims match the network");
        greedy_action(&q)
    }

    pub fn observe(&mut self, transition: Transition<R>) {
        self.replay.store(transition);
    }

    /// Samples a batch and runs one training step, syncing the target
    /// network every `target_sync_period` steps. Returns the pre-step loss,
    /// or `None` while the replay holds fewer than `batch_size` transitions.
    pub fn train_tick(&mut self) -> Option<R> {
        if self.replay.len() < self.cfg.batch_size {
            return None;
        }
        let batch = self.replay.sample(self.cfg.batch_size, &mut self.replay_rng).expect("nonempty");
        let loss = train_step(&mut self.net, &self.target, &batch, &self.cfg)?;
        self.train_steps += 1;
        if self.train_steps % self.cfg.target_sync_period == 0 {
            sync_target(&self.net, &mut self.target);
            self.syncs += 1;
        }
        Some(loss)
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }
}
