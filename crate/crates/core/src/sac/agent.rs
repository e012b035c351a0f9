//! Tanh-squashed Gaussian policy, twin critics and the SAC update.
//!
//! Networks see actions normalised to `[−1, 1]`; log-probabilities are
//! densities over that normalised square.

use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::nn::{Adam, Mlp};
use super::{SacAction, SacConfig, SacObservation, Transition};
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const OBS_DIM: usize = 10;
pub const ACTION_DIM: usize = 2;
const LOG_STD_MIN: f64 = -5.0;
const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
/// Scale of the initial output layer of the actor.
const ACTOR_INIT: f64 = 3e-3;
const MAGIC: &[u8; 8] = b"SNAVPOL\0";
const VERSION: u32 = 1;

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// `ln(1 − tanh²z)`, evaluated without cancellation.
pub fn squash_log_correction(z: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - z - softplus(-2.0 * z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySample {
    pub action: SacAction,
    /// Action in `[−1, 1]²`.
    pub normalized: [f64; ACTION_DIM],
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub a_max: f64,
}

struct Head {
    mean: [f64; ACTION_DIM],
    log_std: [f64; ACTION_DIM],
    clamped: [bool; ACTION_DIM],
}

fn head(out: &DVector<f64>) -> Head {
    let mut h = Head {
        mean: [0.0; ACTION_DIM],
        log_std: [0.0; ACTION_DIM],
        clamped: [false; ACTION_DIM],
    };
    for i in 0..ACTION_DIM {
        h.mean[i] = out[i];
        let raw = out[ACTION_DIM + i];
        h.log_std[i] = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
        h.clamped[i] = !(LOG_STD_MIN..=LOG_STD_MAX).contains(&raw);
    }
    h
}

/// Squashed sample and its log-density for fixed standard-normal noise.
fn squash(h: &Head, eps: &[f64; ACTION_DIM]) -> ([f64; ACTION_DIM], [f64; ACTION_DIM], f64) {
    let mut z = [0.0; ACTION_DIM];
    let mut a = [0.0; ACTION_DIM];
    let mut logp = 0.0;
    for i in 0..ACTION_DIM {
        z[i] = h.mean[i] + h.log_std[i].exp() * eps[i];
        a[i] = z[i].tanh();
        logp += -0.5 * eps[i] * eps[i] - h.log_std[i] - HALF_LN_2PI - squash_log_correction(z[i]);
    }
    (z, a, logp)
}

impl GaussianPolicy {
    pub fn new<R: Rng>(hidden: usize, a_max: f64, rng: &mut R) -> Self {
        Self {
            net: Mlp::new(&[OBS_DIM, hidden, hidden, 2 * ACTION_DIM], Some(ACTOR_INIT), rng),
            a_max,
        }
    }

    pub fn hidden(&self) -> usize {
        self.net.sizes()[1]
    }

    fn to_action(&self, a: &[f64; ACTION_DIM]) -> SacAction {
        SacAction {
            delta_alpha_upper: a[0] * self.a_max,
            delta_alpha_lower: a[1] * self.a_max,
        }
    }

    /// Sample with explicit noise; `eps = 0` gives the deterministic action.
    pub fn sample_with_noise(&self, obs: &SacObservation, eps: &[f64; ACTION_DIM]) -> PolicySample {
        let h = head(&self.net.forward(&obs.to_vector()));
        let (_, a, logp) = squash(&h, eps);
        PolicySample {
            action: self.to_action(&a),
            normalized: a,
            log_prob: logp,
        }
    }

    pub fn act<R: Rng>(&self, obs: &SacObservation, deterministic: bool, rng: &mut R) -> PolicySample {
        let eps = if deterministic {
            [0.0; ACTION_DIM]
        } else {
            [rng.sample(StandardNormal), rng.sample(StandardNormal)]
        };
        self.sample_with_noise(obs, &eps)
    }

    /// Log-density of a normalised action in `(−1, 1)²`.
    pub fn log_prob(&self, obs: &SacObservation, normalized: &[f64; ACTION_DIM]) -> f64 {
        let h = head(&self.net.forward(&obs.to_vector()));
        (0..ACTION_DIM)
            .map(|i| {
                let z = normalized[i].atanh();
                let sd = h.log_std[i].exp();
                let e = (z - h.mean[i]) / sd;
                -0.5 * e * e - h.log_std[i] - HALF_LN_2PI - squash_log_correction(z)
            })
            .sum()
    }

    /// Versioned little-endian checkpoint.
    pub fn to_bytes(&self) -> Vec<u8> {
        let sizes = self.net.sizes();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
        for s in &sizes {
            out.extend_from_slice(&(*s as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.a_max.to_le_bytes());
        for l in &self.net.layers {
            for r in 0..l.w.nrows() {
                for c in 0..l.w.ncols() {
                    out.extend_from_slice(&l.w[(r, c)].to_le_bytes());
                }
            }
            for v in l.b.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parse a checkpoint; `hidden` is the expected hidden width.
    pub fn from_bytes(bytes: &[u8], hidden: usize) -> Result<Self> {
        let mut at = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(at..at + n)
                .ok_or_else(|| Error::TopologyMismatch("checkpoint truncated".into()))?;
            at += n;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(Error::TopologyMismatch("not a policy checkpoint".into()));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        let version = u32_at(take(4)?);
        if version != VERSION {
            return Err(Error::TopologyMismatch(format!("unsupported checkpoint version {version}")));
        }
        let n = u32_at(take(4)?) as usize;
        if n > 64 {
            return Err(Error::TopologyMismatch(format!("implausible layer count {n}")));
        }
        let mut sizes = Vec::with_capacity(n);
        for _ in 0..n {
            sizes.push(u32_at(take(4)?) as usize);
        }
        let expected = [OBS_DIM, hidden, hidden, 2 * ACTION_DIM];
        if sizes != expected {
            return Err(Error::TopologyMismatch(format!("checkpoint layers {sizes:?}, expected {expected:?}")));
        }
        let f = |b: &[u8]| f64::from_le_bytes(b.try_into().unwrap());
        let a_max = f(take(8)?);
        let mut net = Mlp::new(&sizes, None, &mut seeded(0));
        for l in &mut net.layers {
            for r in 0..l.w.nrows() {
                for c in 0..l.w.ncols() {
                    l.w[(r, c)] = f(take(8)?);
                }
            }
            for i in 0..l.b.len() {
                l.b[i] = f(take(8)?);
            }
        }
        if at != bytes.len() {
            return Err(Error::TopologyMismatch("trailing bytes after checkpoint".into()));
        }
        Ok(Self { net, a_max })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path, hidden: usize) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?, hidden)
    }
}

fn critic_input(s: &SacObservation, a: &[f64; ACTION_DIM]) -> DVector<f64> {
    let mut v = DVector::zeros(OBS_DIM + ACTION_DIM);
    v.rows_mut(0, OBS_DIM).copy_from_slice(&s.to_array());
    v[OBS_DIM] = a[0];
    v[OBS_DIM + 1] = a[1];
    v
}

/// Mean squared error `mean (Q(x) − y)²` and its parameter gradient.
pub fn critic_loss_grad(q: &Mlp, inputs: &[DVector<f64>], targets: &[f64]) -> (f64, Vec<f64>) {
    let n = inputs.len() as f64;
    let mut grad = vec![0.0; q.n_params()];
    let mut loss = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        let (out, tr) = q.forward_trace(x);
        let e = out[0] - y;
        loss += e * e / n;
        q.backward(&tr, &DVector::from_element(1, 2.0 * e / n), &mut grad);
    }
    (loss, grad)
}

/// Policy loss `mean(β log π(a|s) − min_j Q_j(s, a))` with reparameterised
/// samples from fixed noise. Returns `(loss, gradient, mean log π)`.
pub fn policy_loss_grad(
    policy: &GaussianPolicy,
    q1: &Mlp,
    q2: &Mlp,
    obs: &[SacObservation],
    noise: &[[f64; ACTION_DIM]],
    beta: f64,
) -> (f64, Vec<f64>, f64) {
    let n = obs.len() as f64;
    let mut grad = vec![0.0; policy.net.n_params()];
    let (mut loss, mut mean_logp) = (0.0, 0.0);
    for (s, eps) in obs.iter().zip(noise) {
        let (out, tr) = policy.net.forward_trace(&s.to_vector());
        let h = head(&out);
        let (_, a, logp) = squash(&h, eps);
        let x = critic_input(s, &a);
        let (o1, t1) = q1.forward_trace(&x);
        let (o2, t2) = q2.forward_trace(&x);
        let (qmin, dx) = if o1[0] <= o2[0] {
            (o1[0], q1.input_gradient(&t1, &DVector::from_element(1, 1.0)))
        } else {
            (o2[0], q2.input_gradient(&t2, &DVector::from_element(1, 1.0)))
        };
        loss += (beta * logp - qmin) / n;
        mean_logp += logp / n;
        let mut dout = DVector::zeros(2 * ACTION_DIM);
        for i in 0..ACTION_DIM {
            let dq_da = dx[OBS_DIM + i];
            let dz = beta * 2.0 * a[i] - dq_da * (1.0 - a[i] * a[i]);
            let sd = h.log_std[i].exp();
            dout[i] = dz / n;
            dout[ACTION_DIM + i] = if h.clamped[i] {
                0.0
            } else {
                (-beta + dz * sd * eps[i]) / n
            };
        }
        policy.net.backward(&tr, &dout, &mut grad);
    }
    (loss, grad, mean_logp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub critic1: f64,
    pub critic2: f64,
    pub policy: f64,
    pub temperature: f64,
    pub beta: f64,
    /// `−mean log π` of the policy samples.
    pub entropy: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.critic1, self.critic2, self.policy, self.temperature, self.beta]
            .iter()
            .all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: SacConfig,
    pub policy: GaussianPolicy,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub log_beta: f64,
    opt_policy: Adam,
    opt_q1: Adam,
    opt_q2: Adam,
    opt_beta: Adam,
    rng: ChaCha8Rng,
}

impl SacAgent {
    pub fn new(config: SacConfig, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let policy = GaussianPolicy::new(config.hidden, config.a_max, &mut rng);
        let critic_sizes = [OBS_DIM + ACTION_DIM, config.hidden, config.hidden, 1];
        let q1 = Mlp::new(&critic_sizes, None, &mut rng);
        let q2 = Mlp::new(&critic_sizes, None, &mut rng);
        let lr = config.learning_rate;
        Self {
            opt_policy: Adam::new(policy.net.n_params(), lr),
            opt_q1: Adam::new(q1.n_params(), lr),
            opt_q2: Adam::new(q2.n_params(), lr),
            opt_beta: Adam::new(1, lr),
            log_beta: config.initial_temperature.ln(),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            q1,
            q2,
            policy,
            config,
            rng,
        }
    }

    pub fn beta(&self) -> f64 {
        self.log_beta.exp()
    }

    pub fn act(&mut self, obs: &SacObservation, deterministic: bool) -> PolicySample {
        self.policy.act(obs, deterministic, &mut self.rng)
    }

    fn normalized(&self, a: &SacAction) -> [f64; ACTION_DIM] {
        let lim = 1.0 - 1e-6;
        let m = self.config.a_max;
        [
            (a.delta_alpha_upper / m).clamp(-lim, lim),
            (a.delta_alpha_lower / m).clamp(-lim, lim),
        ]
    }

    fn noise(&mut self, n: usize) -> Vec<[f64; ACTION_DIM]> {
        (0..n)
            .map(|_| [self.rng.sample(StandardNormal), self.rng.sample(StandardNormal)])
            .collect()
    }

    /// Critic targets `r + γ(1 − d)(min_j Q̄_j(s′, a′) − β log π(a′|s′))`.
    pub fn critic_targets(&mut self, batch: &[Transition]) -> Vec<f64> {
        let noise = self.noise(batch.len());
        let beta = self.beta();
        batch
            .iter()
            .zip(&noise)
            .map(|(t, eps)| {
                if t.done || self.config.gamma == 0.0 {
                    return t.r;
                }
                let next = self.policy.sample_with_noise(&t.s_next, eps);
                let x = critic_input(&t.s_next, &next.normalized);
                let q = self.q1_target.forward(&x)[0].min(self.q2_target.forward(&x)[0]);
                t.r + self.config.gamma * (q - beta * next.log_prob)
            })
            .collect()
    }

    /// One gradient step on both critics, the actor and the temperature,
    /// followed by the Polyak target update.
    pub fn update(&mut self, batch: &[Transition]) -> LossReport {
        assert!(!batch.is_empty(), "empty SAC batch");
        let targets = self.critic_targets(batch);
        let inputs: Vec<DVector<f64>> = batch.iter().map(|t| critic_input(&t.s, &self.normalized(&t.a))).collect();
        let (l1, g1) = critic_loss_grad(&self.q1, &inputs, &targets);
        let (l2, g2) = critic_loss_grad(&self.q2, &inputs, &targets);
        self.opt_q1.step_mlp(&mut self.q1, &g1);
        self.opt_q2.step_mlp(&mut self.q2, &g2);

        let obs: Vec<SacObservation> = batch.iter().map(|t| t.s).collect();
        let noise = self.noise(batch.len());
        let beta = self.beta();
        let (lp, gp, mean_logp) = policy_loss_grad(&self.policy, &self.q1, &self.q2, &obs, &noise, beta);
        self.opt_policy.step_mlp(&mut self.policy.net, &gp);

        // L(β) = −log β · (mean log π + target).
        let gap = mean_logp + self.config.target_entropy;
        let mut lb = [self.log_beta];
        self.opt_beta.step(&mut lb, &[-gap]);
        self.log_beta = lb[0];

        let tau = self.config.tau;
        self.q1_target.polyak(&self.q1, tau);
        self.q2_target.polyak(&self.q2, tau);
        LossReport {
            critic1: l1,
            critic2: l2,
            policy: lp,
            temperature: -self.log_beta * gap,
            beta: self.beta(),
            entropy: -mean_logp,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.policy.net.is_finite() && self.q1.is_finite() && self.q2.is_finite() && self.log_beta.is_finite()
    }
}
