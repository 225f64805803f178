//! RCP-SGD, the DSGD and Choco-SGD baselines, step-size schedules and the
//! run loop that records traces.

use std::fmt;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::compress::{bit_cost, compress, CompressError, CompressorSpec};
use crate::linalg::mean;
use crate::metrics::{snapshot, TraceRecord};
use crate::problems::{Batch, Problem};
use crate::rng::{derive_seed, Purpose, Streams};
use crate::theory::{theorem3_beta0_interval, ProblemConstants, DEFAULT_BETA5, DEFAULT_C_TILDE};
use crate::topology::{Graph, TopologyError};

/// Any state coordinate beyond this magnitude counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;
/// Floor for the compression scaling `h_k`.
pub const H_FLOOR: f64 = 1e-300;
pub const TABLE1_ALPHA_X: f64 = 0.8;
pub const TABLE1_ETA_POWER: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("regime {regime} needs parameter {name}")]
    Missing { regime: Regime, name: &'static str },
    #[error("regime {regime}: condition {condition} violated ({detail})")]
    Condition { regime: Regime, condition: &'static str, detail: String },
    #[error("unknown regime {0:?}")]
    UnknownRegime(String),
    #[error("unknown h sequence {0:?}")]
    UnknownHSequence(String),
}

#[derive(Debug, Error)]
pub enum AlgoError {
    #[error("state diverged at step {step}")]
    Diverged { step: usize },
    #[error("compression failed for agent {agent} at step {step}: {source}")]
    Compress { step: usize, agent: usize, source: CompressError },
    #[error("replica of agent {owner}'s reference held by agent {holder} drifted at step {step}")]
    ReplicaMismatch { step: usize, holder: usize, owner: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

// ---------------------------------------------------------------------------
// Schedules

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Theorem1,
    Theorem1Speedup,
    Theorem2,
    Theorem3,
    Table1,
    Custom,
}

impl Regime {
    pub const ALL: [Regime; 6] = [Self::Theorem1, Self::Theorem1Speedup, Self::Theorem2, Self::Theorem3, Self::Table1, Self::Custom];

    pub fn name(self) -> &'static str {
        match self {
            Self::Theorem1 => "theorem1",
            Self::Theorem1Speedup => "theorem1_speedup",
            Self::Theorem2 => "theorem2",
            Self::Theorem3 => "theorem3",
            Self::Table1 => "table1",
            Self::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ScheduleError> {
        Self::ALL.into_iter().find(|r| r.name() == s).ok_or_else(|| ScheduleError::UnknownRegime(s.to_owned()))
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HSequence {
    /// `h_k = h0^k`
    Geometric(f64),
    /// `h_k = 1 / (k + 1)`
    Harmonic,
    Constant(f64),
}

impl HSequence {
    pub fn at(&self, k: usize) -> f64 {
        let h = match *self {
            Self::Geometric(h0) => h0.powf(k as f64),
            Self::Harmonic => 1.0 / (k as f64 + 1.0),
            Self::Constant(c) => c,
        };
        h.max(H_FLOOR)
    }

    /// `geometric`, `harmonic` or `constant`, with `h0` as the parameter.
    pub fn parse(kind: &str, h0: f64) -> Result<Self, ScheduleError> {
        match kind {
            "geometric" => Ok(Self::Geometric(h0)),
            "harmonic" => Ok(Self::Harmonic),
            "constant" => Ok(Self::Constant(h0)),
            other => Err(ScheduleError::UnknownHSequence(other.to_owned())),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Geometric(_) => "geometric",
            Self::Harmonic => "harmonic",
            Self::Constant(_) => "constant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaRule {
    Constant(f64),
    /// `c / max(k, 1)^p`
    Power { c: f64, p: f64 },
    /// `beta2 / omega_k`
    OverOmega { beta2: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaRule {
    Constant(f64),
    /// `beta1 * omega_k`
    TimesOmega { beta1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OmegaRule {
    Constant(f64),
    /// `beta0 (k + t1)`
    Affine { beta0: f64, t1: f64 },
}

/// Raw schedule inputs; which fields a regime needs is checked by
/// [`make_schedule`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScheduleParams {
    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta5: Option<f64>,
    pub theta: Option<f64>,
    pub t1: Option<f64>,
    pub h0: Option<f64>,
    pub alpha_x: Option<f64>,
    pub omega: Option<f64>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub eta_power: Option<f64>,
    pub c_tilde: Option<f64>,
    pub horizon: Option<usize>,
    pub n: Option<usize>,
    pub h_seq: Option<HSequence>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub regime: Regime,
    pub eta: EtaRule,
    pub gamma: GammaRule,
    pub omega: OmegaRule,
    pub h: HSequence,
    pub alpha_x: f64,
    /// Values the code filled in, as `(key, value)`.
    pub defaults_used: Vec<(String, String)>,
}

impl Schedule {
    pub fn omega(&self, k: usize) -> f64 {
        match self.omega {
            OmegaRule::Constant(w) => w,
            OmegaRule::Affine { beta0, t1 } => beta0 * (k as f64 + t1),
        }
    }

    pub fn eta(&self, k: usize) -> f64 {
        match self.eta {
            EtaRule::Constant(e) => e,
            EtaRule::Power { c, p } => c / (k.max(1) as f64).powf(p),
            EtaRule::OverOmega { beta2 } => beta2 / self.omega(k),
        }
    }

    pub fn gamma(&self, k: usize) -> f64 {
        match self.gamma {
            GammaRule::Constant(g) => g,
            GammaRule::TimesOmega { beta1 } => beta1 * self.omega(k),
        }
    }

    pub fn h(&self, k: usize) -> f64 {
        self.h.at(k)
    }

    /// `(key, value)` pairs describing the resolved schedule.
    pub fn describe(&self) -> Vec<(String, String)> {
        let mut out = vec![("schedule.regime".to_owned(), self.regime.to_string()), ("schedule.alpha_x".to_owned(), self.alpha_x.to_string())];
        out.push(("schedule.eta_rule".into(), format!("{:?}", self.eta)));
        out.push(("schedule.gamma_rule".into(), format!("{:?}", self.gamma)));
        out.push(("schedule.omega_rule".into(), format!("{:?}", self.omega)));
        out.push(("schedule.h_rule".into(), format!("{:?}", self.h)));
        out
    }
}

fn need(regime: Regime, v: Option<f64>, name: &'static str) -> Result<f64, ScheduleError> {
    v.ok_or(ScheduleError::Missing { regime, name })
}

fn check(regime: Regime, ok: bool, condition: &'static str, detail: String) -> Result<(), ScheduleError> {
    if ok {
        Ok(())
    } else {
        Err(ScheduleError::Condition { regime, condition, detail })
    }
}

/// Builds the step-size sequences for a regime, validating the ranges the
/// corresponding theorem states. `pc` supplies `r` (for `alpha_x < 1/r`)
/// and `nu` (for the theorem3 `beta0` interval).
pub fn make_schedule(regime: Regime, p: &ScheduleParams, pc: Option<&ProblemConstants>) -> Result<Schedule, ScheduleError> {
    let mut defaults = Vec::new();
    let r = pc.map_or(1.0, |c| c.r);
    let theorem_alpha = |defaults: &mut Vec<(String, String)>| -> Result<f64, ScheduleError> {
        let a = need(regime, p.alpha_x, "alpha_x")?;
        check(regime, a > 0.0 && a * r < 1.0, "alpha_x in (0, 1/r)", format!("alpha_x = {a}, r = {r}"))?;
        let _ = defaults;
        Ok(a)
    };
    let geometric_h = |upper: f64, cond: &'static str| -> Result<HSequence, ScheduleError> {
        let h0 = need(regime, p.h0, "h0")?;
        check(regime, h0 > 0.0 && h0 < upper, cond, format!("h0 = {h0}"))?;
        Ok(HSequence::Geometric(h0))
    };
    let sched = match regime {
        Regime::Theorem1 | Regime::Theorem1Speedup | Regime::Theorem2 => {
            let beta1 = need(regime, p.beta1, "beta1")?;
            let beta2 = need(regime, p.beta2, "beta2")?;
            check(regime, beta1 > 0.0, "beta1 > 0", format!("beta1 = {beta1}"))?;
            check(regime, beta2 > 0.0, "beta2 > 0", format!("beta2 = {beta2}"))?;
            let (omega, h) = match regime {
                Regime::Theorem1 => {
                    let w = need(regime, p.omega, "omega")?;
                    check(regime, w > 0.0, "omega > 0", format!("omega = {w}"))?;
                    (w, geometric_h(1.0, "h0 in (0, 1)")?)
                }
                Regime::Theorem1Speedup => {
                    let t = p.horizon.ok_or(ScheduleError::Missing { regime, name: "T" })?;
                    let n = p.n.ok_or(ScheduleError::Missing { regime, name: "n" })?;
                    check(regime, t > 0 && n > 0, "T > 0 and n > 0", format!("T = {t}, n = {n}"))?;
                    (beta2 * (t as f64).sqrt() / (n as f64).sqrt(), geometric_h(1.0, "h0 in (0, 1)")?)
                }
                _ => {
                    let t = p.horizon.ok_or(ScheduleError::Missing { regime, name: "T" })?;
                    let theta = need(regime, p.theta, "theta")?;
                    check(regime, theta > 0.0 && theta < 1.0, "theta in (0, 1)", format!("theta = {theta}"))?;
                    check(regime, beta2 < 1.0, "beta2 in (0, 1)", format!("beta2 = {beta2}"))?;
                    (beta2 * (t as f64 + 1.0).powf(theta), geometric_h(0.5, "h0 in (0, 1/2)")?)
                }
            };
            if p.beta5.is_none() {
                defaults.push(("schedule.beta5".into(), DEFAULT_BETA5.to_string()));
            }
            Schedule {
                regime,
                eta: EtaRule::OverOmega { beta2 },
                gamma: GammaRule::TimesOmega { beta1 },
                omega: OmegaRule::Constant(omega),
                h,
                alpha_x: theorem_alpha(&mut defaults)?,
                defaults_used: Vec::new(),
            }
        }
        Regime::Theorem3 => {
            let beta0 = need(regime, p.beta0, "beta0")?;
            let beta1 = need(regime, p.beta1, "beta1")?;
            let beta2 = need(regime, p.beta2, "beta2")?;
            let t1 = need(regime, p.t1, "t1")?;
            check(regime, beta1 > 0.0 && beta2 > 0.0 && t1 > 0.0, "beta1, beta2, t1 > 0", format!("{beta1}, {beta2}, {t1}"))?;
            let c_tilde = p.c_tilde.unwrap_or_else(|| {
                defaults.push(("schedule.c_tilde".into(), DEFAULT_C_TILDE.to_string()));
                DEFAULT_C_TILDE
            });
            check(regime, c_tilde > 0.0 && c_tilde < 1.0, "c_tilde in (0, 1)", format!("c_tilde = {c_tilde}"))?;
            let nu = pc.and_then(|c| c.nu).ok_or(ScheduleError::Missing { regime, name: "nu" })?;
            let (lo, hi) = theorem3_beta0_interval(nu, beta2, c_tilde);
            check(
                regime,
                beta0 >= lo && beta0 < hi,
                "beta0 in [c_tilde*nu*beta2/4, nu*beta2/4)",
                format!("beta0 = {beta0}, interval [{lo}, {hi})"),
            )?;
            let h = geometric_h(1.0 / t1, "h0 in (0, 1/t1)")?;
            Schedule {
                regime,
                eta: EtaRule::OverOmega { beta2 },
                gamma: GammaRule::TimesOmega { beta1 },
                omega: OmegaRule::Affine { beta0, t1 },
                h,
                alpha_x: theorem_alpha(&mut defaults)?,
                defaults_used: Vec::new(),
            }
        }
        Regime::Table1 | Regime::Custom => {
            let eta = need(regime, p.eta, "eta")?;
            check(regime, eta > 0.0, "eta > 0", format!("eta = {eta}"))?;
            let power = match (regime, p.eta_power) {
                (_, Some(pw)) => pw,
                (Regime::Table1, None) => {
                    defaults.push(("schedule.eta_power".into(), TABLE1_ETA_POWER.to_string()));
                    TABLE1_ETA_POWER
                }
                _ => 0.0,
            };
            let gamma = p.gamma.unwrap_or(0.0);
            let omega = p.omega.unwrap_or(0.0);
            check(regime, gamma >= 0.0 && omega >= 0.0, "gamma, omega >= 0", format!("gamma = {gamma}, omega = {omega}"))?;
            let alpha_x = match p.alpha_x {
                Some(a) => a,
                None => {
                    defaults.push(("schedule.alpha_x".into(), format!("{TABLE1_ALPHA_X} (substituted)")));
                    TABLE1_ALPHA_X
                }
            };
            check(regime, alpha_x > 0.0 && alpha_x <= 1.0, "alpha_x in (0, 1]", format!("alpha_x = {alpha_x}"))?;
            let h = match p.h_seq {
                Some(h) => h,
                None => match p.h0 {
                    Some(h0) => HSequence::Geometric(h0),
                    None => {
                        defaults.push(("schedule.h".into(), "harmonic 1/(k+1)".into()));
                        HSequence::Harmonic
                    }
                },
            };
            if let HSequence::Geometric(h0) | HSequence::Constant(h0) = h {
                check(regime, h0 > 0.0 && h0 <= 1.0, "h0 in (0, 1]", format!("h0 = {h0}"))?;
            }
            Schedule {
                regime,
                eta: if power == 0.0 { EtaRule::Constant(eta) } else { EtaRule::Power { c: eta, p: power } },
                gamma: GammaRule::Constant(gamma),
                omega: OmegaRule::Constant(omega),
                h,
                alpha_x,
                defaults_used: Vec::new(),
            }
        }
    };
    Ok(Schedule { defaults_used: defaults, ..sched })
}

/// Ratio used when `schedule.h_seq = "geometric"` is given without `h0`.
pub const DEFAULT_TABLE1_H0: f64 = 0.995;

// ---------------------------------------------------------------------------
// State

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// Compression reference (RCP-SGD) or public estimate (Choco-SGD).
    pub xc: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub agents: Vec<AgentState>,
    pub k: usize,
    pub bits: u64,
    /// `replicas[i]` holds agent `i`'s copies `(j, xc_j)` for each neighbor `j`.
    pub replicas: Option<Vec<Vec<(usize, Vec<f64>)>>>,
}

impl NetworkState {
    /// Starts at the given points with `v = 0` and `xc = 0`.
    pub fn new(xs: Vec<Vec<f64>>) -> Self {
        let agents = xs
            .into_iter()
            .map(|x| {
                let d = x.len();
                AgentState { x, v: vec![0.0; d], xc: vec![0.0; d] }
            })
            .collect();
        Self { agents, k: 0, bits: 0, replicas: None }
    }

    /// Turns on per-neighbor reference copies for the consistency check.
    pub fn enable_replicas(&mut self, g: &Graph) {
        let reps = (0..self.agents.len()).map(|i| g.neighbors(i).iter().map(|&(j, _)| (j, self.agents[j].xc.clone())).collect()).collect();
        self.replicas = Some(reps);
    }

    pub fn xs(&self) -> Vec<Vec<f64>> {
        self.agents.iter().map(|a| a.x.clone()).collect()
    }

    pub fn mean_x(&self) -> Vec<f64> {
        mean(&self.xs())
    }

    pub fn dual_sum(&self) -> Vec<f64> {
        let vs: Vec<Vec<f64>> = self.agents.iter().map(|a| a.v.clone()).collect();
        crate::linalg::sum(&vs)
    }

    pub fn dim(&self) -> usize {
        self.agents.first().map_or(0, |a| a.x.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitModel {
    /// One message per agent per step.
    Broadcast,
    /// One message per directed edge per step.
    PerEdge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub batch: Batch,
    pub bit_model: BitModel,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { batch: Batch::Full, bit_model: BitModel::Broadcast }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub bits: u64,
    pub suppressed: usize,
    /// Mean of the sampled gradients used in this step.
    pub grad_mean: Vec<f64>,
    pub eta: f64,
}

fn laplacian_apply(g: &Graph, vals: &[Vec<f64>], i: usize) -> Vec<f64> {
    let mut out = vec![0.0; vals[i].len()];
    for &(j, w) in g.neighbors(i) {
        for ((o, a), b) in out.iter_mut().zip(&vals[i]).zip(&vals[j]) {
            *o += w * (a - b);
        }
    }
    out
}

fn valid(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite() && x.abs() <= DIVERGENCE_LIMIT)
}

fn check_dims(net: &NetworkState, g: &Graph, d: usize) -> Result<(), AlgoError> {
    if net.agents.len() != g.n() {
        return Err(AlgoError::Dimension(format!("{} agents on a graph of {}", net.agents.len(), g.n())));
    }
    if net.agents.iter().any(|a| a.x.len() != d || a.v.len() != d || a.xc.len() != d) {
        return Err(AlgoError::Dimension(format!("agent state does not match problem dimension {d}")));
    }
    Ok(())
}

fn message_multiplier(g: &Graph, i: usize, model: BitModel) -> u64 {
    match model {
        BitModel::Broadcast => 1,
        BitModel::PerEdge => g.degree(i) as u64,
    }
}

fn sample_gradients<P: Problem + ?Sized>(net: &NetworkState, problem: &P, batch: Batch, streams: &Streams) -> Vec<Vec<f64>> {
    net.agents
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let mut rng = streams.get(i, net.k, Purpose::Gradient);
            problem.sample_gradient(i, &a.x, batch, &mut rng).value
        })
        .collect()
}

/// One synchronous RCP-SGD round. On error the state is left unchanged.
pub fn rcp_step<P: Problem + ?Sized>(
    net: &mut NetworkState,
    g: &Graph,
    problem: &P,
    sched: &Schedule,
    spec: &CompressorSpec,
    opts: &StepOptions,
    streams: &Streams,
) -> Result<StepReport, AlgoError> {
    let d = problem.dim();
    check_dims(net, g, d)?;
    let k = net.k;
    let n = net.agents.len();
    let (h, eta, gamma, omega, ax) = (sched.h(k), sched.eta(k), sched.gamma(k), sched.omega(k), sched.alpha_x);

    // phase 1: messages and gradients from the step-k snapshot
    let mut xhat = Vec::with_capacity(n);
    let mut payloads = Vec::with_capacity(n);
    let mut bits = 0u64;
    let mut suppressed = 0usize;
    for (i, a) in net.agents.iter().enumerate() {
        let mult = message_multiplier(g, i, opts.bit_model);
        if spec.is_exact() {
            xhat.push(a.x.clone());
            payloads.push(None);
            bits += mult * bit_cost(spec, d);
            continue;
        }
        let diff: Vec<f64> = if a.x == a.xc { vec![0.0; d] } else { a.x.iter().zip(&a.xc).map(|(x, c)| (x - c) / h).collect() };
        let mut rng = streams.get(i, k, Purpose::Compress);
        let msg = compress(spec, &diff, &mut rng).map_err(|source| match source {
            CompressError::NonFinite { .. } => AlgoError::Diverged { step: k },
            source => AlgoError::Compress { step: k, agent: i, source },
        })?;
        bits += mult * msg.bits;
        suppressed += usize::from(msg.suppressed);
        xhat.push(a.xc.iter().zip(&msg.payload).map(|(c, q)| c + h * q).collect());
        payloads.push(Some(msg.payload));
    }
    let grads = sample_gradients(net, problem, opts.batch, streams);

    // phase 2: primal, dual and reference updates
    let mut next = Vec::with_capacity(n);
    for (i, a) in net.agents.iter().enumerate() {
        let lx = laplacian_apply(g, &xhat, i);
        let x: Vec<f64> = (0..d).map(|s| a.x[s] - eta * (gamma * lx[s] + omega * a.v[s] + grads[i][s])).collect();
        let v: Vec<f64> = (0..d).map(|s| a.v[s] + eta * omega * lx[s]).collect();
        let xc: Vec<f64> = (0..d).map(|s| (1.0 - ax) * a.xc[s] + ax * xhat[i][s]).collect();
        if !(valid(&x) && valid(&v) && valid(&xc)) {
            return Err(AlgoError::Diverged { step: k });
        }
        next.push(AgentState { x, v, xc });
    }

    let replicas = match &net.replicas {
        Some(reps) => {
            let mut updated = reps.clone();
            for (holder, copies) in updated.iter_mut().enumerate() {
                for (owner, copy) in copies.iter_mut() {
                    let recv: Vec<f64> = match &payloads[*owner] {
                        Some(q) => copy.iter().zip(q).map(|(c, q)| c + h * q).collect(),
                        None => net.agents[*owner].x.clone(),
                    };
                    for (c, r) in copy.iter_mut().zip(&recv) {
                        *c = (1.0 - ax) * *c + ax * r;
                    }
                    if *copy != next[*owner].xc {
                        return Err(AlgoError::ReplicaMismatch { step: k, holder, owner: *owner });
                    }
                }
            }
            Some(updated)
        }
        None => None,
    };

    net.agents = next;
    net.replicas = replicas;
    net.k += 1;
    net.bits += bits;
    Ok(StepReport { bits, suppressed, grad_mean: mean(&grads), eta })
}

/// Mixing scale `1 / (lambda_max + eps)` with `eps = lambda_max`, so that
/// `W = I - L / (2 lambda_max)`. A single agent mixes with itself.
pub fn dsgd_mixing(g: &Graph) -> Result<f64, TopologyError> {
    if g.n() < 2 {
        return Ok(0.0);
    }
    Ok(1.0 / (2.0 * g.spectral_bounds()?.lambda_max))
}

/// `x_i <- sum_j W_ij x_j - eta g_i` with `W = I - mixing * L`.
pub fn dsgd_step<P: Problem + ?Sized>(
    net: &mut NetworkState,
    g: &Graph,
    problem: &P,
    eta: f64,
    mixing: f64,
    opts: &StepOptions,
    streams: &Streams,
) -> Result<StepReport, AlgoError> {
    let d = problem.dim();
    check_dims(net, g, d)?;
    let k = net.k;
    let grads = sample_gradients(net, problem, opts.batch, streams);
    let xs = net.xs();
    let exact = CompressorSpec::identity();
    let mut bits = 0;
    let mut next_x = Vec::with_capacity(xs.len());
    for i in 0..xs.len() {
        let lx = laplacian_apply(g, &xs, i);
        let x: Vec<f64> = (0..d).map(|s| xs[i][s] - mixing * lx[s] - eta * grads[i][s]).collect();
        if !valid(&x) {
            return Err(AlgoError::Diverged { step: k });
        }
        bits += message_multiplier(g, i, opts.bit_model) * bit_cost(&exact, d);
        next_x.push(x);
    }
    for (a, x) in net.agents.iter_mut().zip(next_x) {
        a.x = x;
    }
    net.k += 1;
    net.bits += bits;
    Ok(StepReport { bits, suppressed: 0, grad_mean: mean(&grads), eta })
}

/// Compressed gossip: local SGD step, compressed update of the public
/// estimates `xc`, then a consensus step of size `gamma` on them.
#[allow(clippy::too_many_arguments)]
pub fn choco_step<P: Problem + ?Sized>(
    net: &mut NetworkState,
    g: &Graph,
    problem: &P,
    eta: f64,
    gamma: f64,
    mixing: f64,
    spec: &CompressorSpec,
    opts: &StepOptions,
    streams: &Streams,
) -> Result<StepReport, AlgoError> {
    let d = problem.dim();
    check_dims(net, g, d)?;
    let k = net.k;
    let grads = sample_gradients(net, problem, opts.batch, streams);
    let mut half = Vec::with_capacity(net.agents.len());
    let mut xhat = Vec::with_capacity(net.agents.len());
    let mut qs = Vec::with_capacity(net.agents.len());
    let mut bits = 0;
    let mut suppressed = 0;
    for (i, a) in net.agents.iter().enumerate() {
        let xh: Vec<f64> = a.x.iter().zip(&grads[i]).map(|(x, gi)| x - eta * gi).collect();
        let diff: Vec<f64> = xh.iter().zip(&a.xc).map(|(x, c)| x - c).collect();
        let mut rng = streams.get(i, k, Purpose::Compress);
        let msg = compress(spec, &diff, &mut rng).map_err(|source| match source {
            CompressError::NonFinite { .. } => AlgoError::Diverged { step: k },
            source => AlgoError::Compress { step: k, agent: i, source },
        })?;
        bits += message_multiplier(g, i, opts.bit_model) * msg.bits;
        suppressed += usize::from(msg.suppressed);
        xhat.push(a.xc.iter().zip(&msg.payload).map(|(c, q)| c + q).collect::<Vec<f64>>());
        qs.push(msg.payload);
        half.push(xh);
    }
    let mut next = Vec::with_capacity(half.len());
    for i in 0..half.len() {
        let lx = laplacian_apply(g, &xhat, i);
        let x: Vec<f64> = (0..d).map(|s| half[i][s] - gamma * mixing * lx[s]).collect();
        if !(valid(&x) && valid(&xhat[i])) {
            return Err(AlgoError::Diverged { step: k });
        }
        next.push(x);
    }
    let replicas = match &net.replicas {
        Some(reps) => {
            let mut updated = reps.clone();
            for (holder, copies) in updated.iter_mut().enumerate() {
                for (owner, copy) in copies.iter_mut() {
                    for (c, q) in copy.iter_mut().zip(&qs[*owner]) {
                        *c += q;
                    }
                    if *copy != xhat[*owner] {
                        return Err(AlgoError::ReplicaMismatch { step: k, holder, owner: *owner });
                    }
                }
            }
            Some(updated)
        }
        None => None,
    };
    for ((a, x), xc) in net.agents.iter_mut().zip(next).zip(xhat) {
        a.x = x;
        a.xc = xc;
    }
    net.replicas = replicas;
    net.k += 1;
    net.bits += bits;
    Ok(StepReport { bits, suppressed, grad_mean: mean(&grads), eta })
}

// ---------------------------------------------------------------------------
// Runs

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    RcpSgd,
    Dsgd,
    ChocoSgd,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::RcpSgd => "rcp_sgd",
            Self::Dsgd => "dsgd",
            Self::ChocoSgd => "choco_sgd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::RcpSgd, Self::Dsgd, Self::ChocoSgd].into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    Zeros,
    /// Independent `N(0, std^2)` point per agent.
    Gaussian { std: f64 },
    /// One `N(0, std^2)` point shared by all agents.
    Common { std: f64 },
}

pub fn initial_points(init: InitKind, n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let draw = |agent: usize, std: f64| -> Vec<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, agent as u64, 0, Purpose::Init));
        (0..d).map(|_| { let z: f64 = StandardNormal.sample(&mut r); std * z }).collect::<Vec<f64>>()
    };
    match init {
        InitKind::Zeros => vec![vec![0.0; d]; n],
        InitKind::Gaussian { std } => (0..n).map(|i| draw(i, std)).collect(),
        InitKind::Common { std } => vec![draw(0, std); n],
    }
}

pub struct Simulation<'a> {
    pub algorithm: Algorithm,
    pub graph: &'a Graph,
    pub problem: &'a dyn Problem,
    pub schedule: &'a Schedule,
    pub compressor: CompressorSpec,
    pub opts: StepOptions,
    pub horizon: usize,
    pub metrics_every: usize,
    pub init: InitKind,
    pub seed: u64,
    pub replica_check: bool,
    pub wall_clock: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: Vec<TraceRecord>,
    /// Step at which the run stopped early, with the reason.
    pub stopped: Option<(usize, String)>,
    pub state: NetworkState,
}

impl RunOutcome {
    pub fn diverged(&self) -> bool {
        self.stopped.is_some()
    }
}

/// Runs `horizon` steps, recording metrics at step 0, every
/// `metrics_every` steps and at the end. Step failures truncate the run;
/// the partial trace ends with the last valid state.
pub fn run(sim: &Simulation<'_>) -> Result<RunOutcome, AlgoError> {
    let n = sim.graph.n();
    let d = sim.problem.dim();
    if sim.problem.agents() != n {
        return Err(AlgoError::Dimension(format!("problem has {} agents, graph has {n}", sim.problem.agents())));
    }
    sim.compressor.validate().map_err(|source| AlgoError::Compress { step: 0, agent: 0, source })?;
    let mixing = match sim.algorithm {
        Algorithm::RcpSgd => 0.0,
        _ => dsgd_mixing(sim.graph)?,
    };
    let streams = Streams::new(sim.seed);
    let mut net = NetworkState::new(initial_points(sim.init, n, d, sim.seed));
    if sim.replica_check {
        net.enable_replicas(sim.graph);
    }
    let every = sim.metrics_every.max(1);
    let start = Instant::now();
    let record = |net: &NetworkState, prev: f64| -> TraceRecord {
        let mut r = snapshot(sim.problem, &net.xs(), net.k, net.bits, prev);
        if sim.wall_clock {
            r.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
        r
    };
    let mut trace = vec![record(&net, f64::INFINITY)];
    let mut stopped = None;
    while net.k < sim.horizon {
        let k = net.k;
        let res = match sim.algorithm {
            Algorithm::RcpSgd => rcp_step(&mut net, sim.graph, sim.problem, sim.schedule, &sim.compressor, &sim.opts, &streams),
            Algorithm::Dsgd => dsgd_step(&mut net, sim.graph, sim.problem, sim.schedule.eta(k), mixing, &sim.opts, &streams),
            Algorithm::ChocoSgd => choco_step(
                &mut net,
                sim.graph,
                sim.problem,
                sim.schedule.eta(k),
                sim.schedule.gamma(k),
                mixing,
                &sim.compressor,
                &sim.opts,
                &streams,
            ),
        };
        if let Err(e) = res {
            if matches!(e, AlgoError::Dimension(_)) {
                return Err(e);
            }
            stopped = Some((k, e.to_string()));
            break;
        }
        if net.k % every == 0 || net.k == sim.horizon {
            let prev = trace.last().map_or(f64::INFINITY, |r| r.residual);
            trace.push(record(&net, prev));
        }
    }
    if stopped.is_some() && trace.last().map(|r| r.step) != Some(net.k) {
        let prev = trace.last().map_or(f64::INFINITY, |r| r.residual);
        trace.push(record(&net, prev));
    }
    Ok(RunOutcome { trace, stopped, state: net })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::GradientSample;
    use rand::RngCore;

    /// `f = 0` on every agent.
    struct Flat {
        n: usize,
        d: usize,
    }

    impl Problem for Flat {
        fn agents(&self) -> usize {
            self.n
        }
        fn dim(&self) -> usize {
            self.d
        }
        fn local_value(&self, _: usize, _: &[f64]) -> f64 {
            0.0
        }
        fn local_gradient(&self, _: usize, _: &[f64]) -> Vec<f64> {
            vec![0.0; self.d]
        }
        fn sample_gradient(&self, agent: usize, _: &[f64], _: Batch, _: &mut dyn RngCore) -> GradientSample {
            GradientSample { agent, value: vec![0.0; self.d], batch: Vec::new() }
        }
        fn smoothness(&self) -> f64 {
            0.0
        }
        fn optimum(&self) -> Option<f64> {
            Some(0.0)
        }
        fn describe(&self) -> Vec<(String, String)> {
            Vec::new()
        }
    }

    fn zero_problem(n: usize, d: usize) -> Flat {
        Flat { n, d }
    }

    fn custom(eta: f64, gamma: f64, omega: f64, alpha: f64) -> Schedule {
        let p = ScheduleParams {
            eta: Some(eta),
            gamma: Some(gamma),
            omega: Some(omega),
            alpha_x: Some(alpha),
            h_seq: Some(HSequence::Constant(1.0)),
            ..Default::default()
        };
        make_schedule(Regime::Custom, &p, None).unwrap()
    }

    #[test]
    fn two_agent_hand_example() {
        let g = Graph::build(&crate::topology::GraphKind::Ring, 2).unwrap();
        let prob = zero_problem(2, 1);
        let mut net = NetworkState::new(vec![vec![1.0], vec![-1.0]]);
        let s = custom(0.1, 1.0, 1.0, 0.5);
        rcp_step(&mut net, &g, &prob, &s, &CompressorSpec::identity(), &StepOptions::default(), &Streams::new(1)).unwrap();
        assert!((net.agents[0].x[0] - 0.8).abs() < 1e-15 && (net.agents[1].x[0] + 0.8).abs() < 1e-15);
        assert!((net.agents[0].v[0] - 0.2).abs() < 1e-15 && (net.agents[1].v[0] + 0.2).abs() < 1e-15);
        assert_eq!(net.agents[0].xc, vec![0.5]);
        assert_eq!(net.agents[1].xc, vec![-0.5]);
        assert_eq!(net.bits, 2 * 32);
    }

    #[test]
    fn dsgd_two_agents() {
        let g = Graph::build(&crate::topology::GraphKind::Ring, 2).unwrap();
        let mix = dsgd_mixing(&g).unwrap();
        assert_eq!(mix, 0.25);
        let prob = zero_problem(2, 1);
        let mut net = NetworkState::new(vec![vec![1.0], vec![-1.0]]);
        dsgd_step(&mut net, &g, &prob, 0.1, mix, &StepOptions::default(), &Streams::new(1)).unwrap();
        // W = [[.75, .25], [.25, .75]]
        assert_eq!(net.agents[0].x, vec![0.5]);
        assert_eq!(net.agents[1].x, vec![-0.5]);
    }

    #[test]
    fn choco_identity_hand_example() {
        let g = Graph::build(&crate::topology::GraphKind::Ring, 2).unwrap();
        let prob = zero_problem(2, 1);
        let mut net = NetworkState::new(vec![vec![1.0], vec![-1.0]]);
        choco_step(&mut net, &g, &prob, 0.1, 0.2, 0.25, &CompressorSpec::identity(), &StepOptions::default(), &Streams::new(1)).unwrap();
        // xhat = x; x = x + 0.2 * 0.25 * (xhat_j - xhat_i)
        assert!((net.agents[0].x[0] - 0.9).abs() < 1e-15);
        assert_eq!(net.agents[0].xc, vec![1.0]);
    }

    #[test]
    fn schedule_examples() {
        let p = ScheduleParams { beta1: Some(2.0), beta2: Some(1.0), horizon: Some(100), n: Some(4), h0: Some(0.5), alpha_x: Some(0.5), ..Default::default() };
        let s = make_schedule(Regime::Theorem1Speedup, &p, None).unwrap();
        assert_eq!(s.omega(0), 5.0);
        let p = ScheduleParams { eta: Some(0.08), gamma: Some(2.0), omega: Some(0.5), alpha_x: Some(0.8), ..Default::default() };
        let s = make_schedule(Regime::Table1, &p, None).unwrap();
        assert!((s.eta(10) - 0.08 / 10f64.powf(0.01)).abs() < 1e-15);
        assert!((s.eta(10) - 0.07817).abs() < 1e-5);
        assert_eq!(s.eta(0), 0.08);
    }

    #[test]
    fn schedule_errors_name_conditions() {
        let p = ScheduleParams { beta1: Some(2.0), beta2: Some(1.0), omega: Some(3.0), h0: Some(1.5), alpha_x: Some(0.5), ..Default::default() };
        match make_schedule(Regime::Theorem1, &p, None) {
            Err(ScheduleError::Condition { condition, .. }) => assert_eq!(condition, "h0 in (0, 1)"),
            other => panic!("{other:?}"),
        }
        let p = ScheduleParams { h0: Some(0.5), ..p };
        assert!(matches!(make_schedule(Regime::Theorem3, &p, None), Err(ScheduleError::Missing { name: "beta0", .. })));
    }

    #[test]
    fn h_is_floored() {
        assert_eq!(HSequence::Geometric(0.5).at(0), 1.0);
        assert_eq!(HSequence::Geometric(0.5).at(5000), H_FLOOR);
        assert_eq!(HSequence::Harmonic.at(3), 0.25);
    }
}
