//! Gradient-inversion (DLG-style) attack on the single-sample logistic
//! gradient, with optional compression and suppression on the wire.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use thiserror::Error;

use crate::compress::{compress, CompressError, CompressorSpec};
use crate::linalg::{dist_sq, dot, norm_sq};
use crate::problems::{LogisticProblem, Problem};

/// Standard deviation matching a noise variance of 0.005.
pub const DEFAULT_NOISE_STD: f64 = 0.070_710_678_118_654_75;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("observed gradient has dimension {got}, model has {want}")]
    Dimension { got: usize, want: usize },
    #[error("label must be -1 or +1, got {0}")]
    Label(f64),
    #[error("noise_std must be nonnegative, got {0}")]
    Noise(f64),
    #[error(transparent)]
    Compress(#[from] CompressError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackOptions {
    pub iters: usize,
    pub step: f64,
    /// Scale of the standard-normal initialization.
    pub init_scale: f64,
}

impl Default for AttackOptions {
    fn default() -> Self {
        Self { iters: 5000, step: 1.0, init_scale: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub z_hat: Vec<f64>,
    /// `|z_hat - z|^2` of the best iterate so far, per iteration.
    pub error_curve: Vec<f64>,
    /// Best matching loss so far, per iteration.
    pub loss_curve: Vec<f64>,
    pub matched_loss: f64,
    /// Set when a non-finite value stopped the attack early.
    pub failure: Option<String>,
}

impl AttackResult {
    pub const CSV_HEADER: &'static str = "iteration,E,matched_loss";

    pub fn final_error(&self) -> f64 {
        self.error_curve.last().copied().unwrap_or(f64::NAN)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (i, (e, l)) in self.error_curve.iter().zip(&self.loss_curve).enumerate() {
            out.push_str(&format!("{},{e:e},{l:e}\n", i + 1));
        }
        out
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `|-u a z - obs|^2` with `a = sigmoid(-u x'z)`, and its gradient in `z`.
fn matching(x: &[f64], obs: &[f64], u: f64, z: &[f64]) -> (f64, Vec<f64>) {
    let a = sigmoid(-u * dot(x, z));
    let r: Vec<f64> = z.iter().zip(obs).map(|(zi, oi)| -u * a * zi - oi).collect();
    let zr = dot(z, &r);
    let grad = r.iter().zip(x).map(|(ri, xi)| 2.0 * (-u * a * ri + a * (1.0 - a) * xi * zr)).collect();
    (norm_sq(&r), grad)
}

/// Reconstructs the feature vector behind `observed`, the logistic-term
/// gradient at `x` for a sample with label `u`. `truth` is used only to
/// report the error curve.
pub fn dlg_attack<R: Rng + ?Sized>(
    x: &[f64],
    observed: &[f64],
    u: f64,
    truth: &[f64],
    opts: &AttackOptions,
    rng: &mut R,
) -> Result<AttackResult, AttackError> {
    let d = x.len();
    if observed.len() != d || truth.len() != d {
        return Err(AttackError::Dimension { got: observed.len(), want: d });
    }
    if u != 1.0 && u != -1.0 {
        return Err(AttackError::Label(u));
    }
    let mut z: Vec<f64> = (0..d).map(|_| opts.init_scale * gauss(rng)).collect();
    let (mut loss, mut grad) = matching(x, observed, u, &z);
    let mut step = opts.step;
    let mut best = (loss, z.clone());
    let mut error_curve = Vec::with_capacity(opts.iters);
    let mut loss_curve = Vec::with_capacity(opts.iters);
    let mut failure = None;
    for _ in 0..opts.iters {
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi - step * gi).collect();
            let (l, g) = matching(x, observed, u, &cand);
            if !l.is_finite() {
                step *= 0.5;
                continue;
            }
            if l <= loss {
                z = cand;
                loss = l;
                grad = g;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !loss.is_finite() || z.iter().any(|v| !v.is_finite()) {
            failure = Some("non-finite iterate".to_owned());
            break;
        }
        if loss < best.0 {
            best = (loss, z.clone());
        }
        error_curve.push(dist_sq(&best.1, truth));
        loss_curve.push(best.0);
        if !accepted && step < 1e-300 {
            break;
        }
    }
    Ok(AttackResult { z_hat: best.1, error_curve, loss_curve, matched_loss: best.0, failure })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// What the attacker sees; `None` when the message was suppressed.
    pub value: Option<Vec<f64>>,
    pub bits: u64,
}

/// Agent `agent`'s full local gradient at `x` plus i.i.d. Gaussian noise,
/// optionally passed through a compressor as it would be on the wire.
pub fn observe_gradient<R: Rng + ?Sized>(
    problem: &LogisticProblem,
    agent: usize,
    x: &[f64],
    noise_std: f64,
    compressor: Option<&CompressorSpec>,
    rng: &mut R,
) -> Result<Observation, AttackError> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(AttackError::Noise(noise_std));
    }
    let mut g = problem.local_gradient(agent, x);
    if noise_std > 0.0 {
        let noise = Normal::new(0.0, noise_std).expect("valid std");
        g.iter_mut().for_each(|v| *v += noise.sample(rng));
    }
    let d = g.len();
    match compressor {
        None => Ok(Observation { value: Some(g), bits: 32 * d as u64 }),
        Some(spec) => {
            let msg = compress(spec, &g, rng)?;
            Ok(Observation { value: (!msg.suppressed).then_some(msg.payload), bits: msg.bits })
        }
    }
}

/// Strips the `z`-independent regularizer gradient from an observation.
pub fn remove_regularizer(problem: &LogisticProblem, x: &[f64], observed: &[f64]) -> Vec<f64> {
    observed.iter().zip(problem.regularizer_gradient(x)).map(|(o, r)| o - r).collect()
}

/// Attack error when nothing was observed: the initialization stays put.
pub fn unobserved_error<R: Rng + ?Sized>(truth: &[f64], opts: &AttackOptions, rng: &mut R) -> f64 {
    let z: Vec<f64> = truth.iter().map(|_| opts.init_scale * gauss(rng)).collect();
    dist_sq(&z, truth)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackInstance {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub u: f64,
}

/// Largest `u x'z` accepted by [`attack_instances`]. Past about 1.278 the
/// scalar matching equation has two positive roots and the feature vector
/// is no longer identifiable from one gradient.
pub const MAX_MARGIN: f64 = 1.2;

/// Random victims: `x ~ 0.1 N(0, I)`, `z` with uniform direction and norm in
/// `[0.5, 3]`, random label; draws with `u x'z > MAX_MARGIN` are rejected.
pub fn attack_instances<R: Rng + ?Sized>(count: usize, d: usize, rng: &mut R) -> Vec<AttackInstance> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..d).map(|_| 0.1 * gauss(rng)).collect();
        let dir: Vec<f64> = (0..d).map(|_| gauss(rng)).collect();
        let norm = norm_sq(&dir).sqrt();
        if norm == 0.0 {
            continue;
        }
        let radius = rng.random_range(0.5..3.0);
        let z: Vec<f64> = dir.iter().map(|v| v / norm * radius).collect();
        let u = if rng.random::<bool>() { 1.0 } else { -1.0 };
        if u * dot(&x, &z) <= MAX_MARGIN {
            out.push(AttackInstance { x, z, u });
        }
    }
    out
}
