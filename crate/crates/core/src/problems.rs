//! Objective oracles: the nonconvex-regularized logistic model and a
//! synthetic quadratic satisfying the Polyak-Lojasiewicz condition, plus
//! dataset loading, partitioning and stochastic gradient sampling.

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::{axpy, dist_sq, dot, norm_sq};
use crate::rng::{derive_seed, Purpose};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("csv row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// Datasets

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub z: Vec<f64>,
    /// `-1` or `+1`.
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub feature_names: Vec<String>,
    /// SHA-256 of the raw source bytes (hex), or a synthetic descriptor.
    pub source_hash: String,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.z.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelEncoding {
    /// Labels are `0` / `1`, mapped to `-1` / `+1`.
    ZeroOne,
    /// Labels are already `-1` / `+1`.
    PlusMinusOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    /// Label column; negative values count from the end (`-1` = last).
    pub label_column: isize,
    pub normalize: bool,
    pub has_header: bool,
    pub encoding: LabelEncoding,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { label_column: -1, normalize: true, has_header: true, encoding: LabelEncoding::ZeroOne }
    }
}

pub fn load_csv_dataset(path: &Path, opts: &CsvOptions) -> Result<Dataset, ProblemError> {
    let bytes = std::fs::read(path)?;
    parse_csv_dataset(&bytes, opts)
}

/// Parses a CSV dataset from raw bytes. Features are min-max normalized per
/// column to `[0, 1]` when requested; constant columns map to 0.
pub fn parse_csv_dataset(bytes: &[u8], opts: &CsvOptions) -> Result<Dataset, ProblemError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(opts.has_header).trim(csv::Trim::All).from_reader(bytes);
    let header: Option<Vec<String>> = if opts.has_header {
        Some(reader.headers()?.iter().map(str::to_owned).collect())
    } else {
        None
    };
    let first_row = if opts.has_header { 2 } else { 1 };
    let mut samples = Vec::new();
    let mut width: Option<usize> = None;
    let mut label_idx = 0usize;
    for (i, rec) in reader.records().enumerate() {
        let row = first_row + i;
        let rec = rec.map_err(|e| ProblemError::Row { row, msg: e.to_string() })?;
        let w = *width.get_or_insert_with(|| rec.len());
        if rec.len() != w {
            return Err(ProblemError::Row { row, msg: format!("expected {w} fields, found {}", rec.len()) });
        }
        if samples.is_empty() {
            label_idx = resolve_column(opts.label_column, w).ok_or_else(|| ProblemError::Row {
                row,
                msg: format!("label column {} out of range for {w} fields", opts.label_column),
            })?;
        }
        let mut z = Vec::with_capacity(w - 1);
        let mut label = 0.0;
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| ProblemError::Row { row, msg: format!("field {} ({field:?}) is not a number", c + 1) })?;
            if !v.is_finite() {
                return Err(ProblemError::Row { row, msg: format!("field {} is not finite", c + 1) });
            }
            if c == label_idx {
                label = encode_label(v, opts.encoding).ok_or_else(|| ProblemError::Row {
                    row,
                    msg: format!("unexpected label value {field:?} for {:?} encoding", opts.encoding),
                })?;
            } else {
                z.push(v);
            }
        }
        samples.push(Sample { z, label });
    }
    if samples.is_empty() {
        return Err(ProblemError::Parameter("dataset has no rows".into()));
    }
    if opts.normalize {
        min_max_normalize(&mut samples);
    }
    let d = samples[0].z.len();
    let feature_names = match header {
        Some(h) => h.into_iter().enumerate().filter(|&(c, _)| c != label_idx).map(|(_, s)| s).collect(),
        None => (0..d).map(|c| format!("x{c}")).collect(),
    };
    Ok(Dataset { samples, feature_names, source_hash: hex::encode(Sha256::digest(bytes)) })
}

fn resolve_column(col: isize, width: usize) -> Option<usize> {
    let idx = if col < 0 { width as isize + col } else { col };
    (0..width as isize).contains(&idx).then_some(idx as usize)
}

fn encode_label(v: f64, enc: LabelEncoding) -> Option<f64> {
    match enc {
        LabelEncoding::ZeroOne if v == 0.0 => Some(-1.0),
        LabelEncoding::ZeroOne if v == 1.0 => Some(1.0),
        LabelEncoding::PlusMinusOne if v == -1.0 || v == 1.0 => Some(v),
        _ => None,
    }
}

pub fn min_max_normalize(samples: &mut [Sample]) {
    let Some(d) = samples.first().map(|s| s.z.len()) else { return };
    for c in 0..d {
        let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.z[c]), hi.max(s.z[c])));
        let range = hi - lo;
        for s in samples.iter_mut() {
            s.z[c] = if range > 0.0 { (s.z[c] - lo) / range } else { 0.0 };
        }
    }
}

/// Random features in `[0, 1]^d` labelled by a noisy random hyperplane.
pub fn synthetic_dataset(samples: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0, Purpose::Dataset));
    let w: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noise = Normal::new(0.0, 0.25).expect("valid std");
    let samples = (0..samples)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let margin: f64 = z.iter().zip(&w).map(|(zi, wi)| (zi - 0.5) * wi).sum::<f64>() + noise.sample(&mut rng);
            Sample { z, label: if margin >= 0.0 { 1.0 } else { -1.0 } }
        })
        .collect();
    Dataset {
        samples,
        feature_names: (0..d).map(|c| format!("x{c}")).collect(),
        source_hash: String::new(),
    }
    .with_synthetic_hash(seed)
}

impl Dataset {
    fn with_synthetic_hash(mut self, seed: u64) -> Self {
        self.source_hash = format!("synthetic(samples={},d={},seed={seed})", self.samples.len(), self.dim());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartitionStrategy {
    RoundRobin,
    Contiguous,
}

/// Splits `0..count` into `n` disjoint index sets whose sizes differ by at
/// most one. With a seed, indices are shuffled before assignment.
pub fn partition(count: usize, n: usize, strategy: PartitionStrategy, seed: Option<u64>) -> Result<Vec<Vec<usize>>, ProblemError> {
    if n == 0 || n > count {
        return Err(ProblemError::Parameter(format!("cannot split {count} samples across {n} agents")));
    }
    let mut order: Vec<usize> = (0..count).collect();
    if let Some(s) = seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(s, 0, 0, Purpose::Partition)));
    }
    let mut parts = vec![Vec::new(); n];
    match strategy {
        PartitionStrategy::RoundRobin => {
            for (k, idx) in order.into_iter().enumerate() {
                parts[k % n].push(idx);
            }
        }
        PartitionStrategy::Contiguous => {
            let (base, extra) = (count / n, count % n);
            let mut it = order.into_iter();
            for (a, part) in parts.iter_mut().enumerate() {
                let size = base + usize::from(a < extra);
                part.extend(it.by_ref().take(size));
            }
        }
    }
    Ok(parts)
}

// ---------------------------------------------------------------------------
// Oracles

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Batch {
    Full,
    /// Minibatch drawn uniformly with replacement.
    Size(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSample {
    pub agent: usize,
    pub value: Vec<f64>,
    /// Local sample indices drawn (empty for full batches and additive-noise oracles).
    pub batch: Vec<usize>,
}

/// A finite-sum objective `f(x) = (1/n) sum_i f_i(x)` split across agents.
pub trait Problem: Send + Sync {
    fn agents(&self) -> usize;
    fn dim(&self) -> usize;
    fn local_value(&self, agent: usize, x: &[f64]) -> f64;
    fn local_gradient(&self, agent: usize, x: &[f64]) -> Vec<f64>;
    /// Unbiased stochastic estimate of `local_gradient`.
    fn sample_gradient(&self, agent: usize, x: &[f64], batch: Batch, rng: &mut dyn RngCore) -> GradientSample;
    /// Smoothness constant valid for every `f_i`.
    fn smoothness(&self) -> f64;
    /// Minimum value of `f`, when known.
    fn optimum(&self) -> Option<f64>;
    /// P-L constant, when known.
    fn pl_constant(&self) -> Option<f64> {
        None
    }
    /// `(key, value)` pairs for run headers.
    fn describe(&self) -> Vec<(String, String)>;

    fn value(&self, x: &[f64]) -> f64 {
        (0..self.agents()).map(|i| self.local_value(i, x)).sum::<f64>() / self.agents() as f64
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.agents() {
            axpy(1.0, &self.local_gradient(i, x), &mut g);
        }
        let n = self.agents() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        g
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Gradient in `x` of `ln(1 + exp(-u x'z))`: `-u sigmoid(-u x'z) z`.
pub fn logistic_term_gradient(x: &[f64], z: &[f64], u: f64) -> Vec<f64> {
    let c = -u * sigmoid(-u * dot(x, z));
    z.iter().map(|zi| c * zi).collect()
}

/// Binary classification with logistic loss and the bounded nonconvex
/// regularizer `sum_s lambda * alpha * x_s^2 / (1 + alpha * x_s^2)`.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    agents: Vec<Vec<Sample>>,
    d: usize,
    pub lambda: f64,
    pub alpha: f64,
    f_star: Option<f64>,
    smooth: f64,
}

impl LogisticProblem {
    pub const DEFAULT_LAMBDA: f64 = 0.001;
    pub const DEFAULT_ALPHA: f64 = 1.0;

    pub fn new(agents: Vec<Vec<Sample>>, lambda: f64, alpha: f64) -> Result<Self, ProblemError> {
        if agents.is_empty() || agents.iter().any(Vec::is_empty) {
            return Err(ProblemError::Parameter("every agent needs at least one sample".into()));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) || !(alpha > 0.0 && alpha.is_finite()) {
            return Err(ProblemError::Parameter(format!("need lambda >= 0 and alpha > 0, got {lambda}, {alpha}")));
        }
        let d = agents[0][0].z.len();
        for s in agents.iter().flatten() {
            if s.z.len() != d {
                return Err(ProblemError::Parameter("agents disagree on the feature dimension".into()));
            }
            if s.label != 1.0 && s.label != -1.0 {
                return Err(ProblemError::Parameter(format!("label {} is not +-1", s.label)));
            }
            if s.z.iter().any(|v| !v.is_finite()) {
                return Err(ProblemError::Parameter("non-finite feature".into()));
            }
        }
        let max_sq = agents.iter().flatten().map(|s| norm_sq(&s.z)).fold(0.0, f64::max);
        let smooth = 0.25 * max_sq + 2.0 * lambda * alpha;
        Ok(Self { agents, d, lambda, alpha, f_star: None, smooth })
    }

    /// Splits a dataset across `n` agents.
    pub fn from_dataset(
        data: &Dataset,
        n: usize,
        strategy: PartitionStrategy,
        seed: Option<u64>,
        lambda: f64,
        alpha: f64,
    ) -> Result<Self, ProblemError> {
        let parts = partition(data.samples.len(), n, strategy, seed)?;
        let agents = parts.into_iter().map(|idx| idx.into_iter().map(|j| data.samples[j].clone()).collect()).collect();
        Self::new(agents, lambda, alpha)
    }

    pub fn samples(&self, agent: usize) -> &[Sample] {
        &self.agents[agent]
    }

    pub fn set_optimum(&mut self, f_star: f64) {
        self.f_star = Some(f_star);
    }

    pub fn regularizer_value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.lambda * self.alpha * v * v / (1.0 + self.alpha * v * v)).sum()
    }

    pub fn regularizer_gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| {
                let den = 1.0 + self.alpha * v * v;
                2.0 * self.lambda * self.alpha * v / (den * den)
            })
            .collect()
    }

    /// Centralized gradient descent on `f` with step `1 / L`, stopping when
    /// `|grad f|^2 <= tol`. Returns the final value as the optimum estimate.
    pub fn solve_optimum(&self, max_steps: usize, tol: f64) -> f64 {
        let step = 1.0 / self.smooth;
        let mut x = vec![0.0; self.d];
        for _ in 0..max_steps {
            let g = self.gradient(&x);
            if norm_sq(&g) <= tol {
                break;
            }
            axpy(-step, &g, &mut x);
        }
        self.value(&x)
    }
}

impl Problem for LogisticProblem {
    fn agents(&self) -> usize {
        self.agents.len()
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn local_value(&self, agent: usize, x: &[f64]) -> f64 {
        let s = &self.agents[agent];
        let loss: f64 = s.iter().map(|smp| softplus(-smp.label * dot(x, &smp.z))).sum::<f64>() / s.len() as f64;
        loss + self.regularizer_value(x)
    }

    fn local_gradient(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        let s = &self.agents[agent];
        let mut g = self.regularizer_gradient(x);
        let w = 1.0 / s.len() as f64;
        for smp in s {
            let c = -smp.label * sigmoid(-smp.label * dot(x, &smp.z)) * w;
            axpy(c, &smp.z, &mut g);
        }
        g
    }

    fn sample_gradient(&self, agent: usize, x: &[f64], batch: Batch, rng: &mut dyn RngCore) -> GradientSample {
        let s = &self.agents[agent];
        match batch {
            Batch::Full => GradientSample { agent, value: self.local_gradient(agent, x), batch: Vec::new() },
            Batch::Size(b) => {
                let b = b.max(1);
                let idx: Vec<usize> = (0..b).map(|_| rng.random_range(0..s.len())).collect();
                let mut g = self.regularizer_gradient(x);
                let w = 1.0 / b as f64;
                for &j in &idx {
                    let smp = &s[j];
                    let c = -smp.label * sigmoid(-smp.label * dot(x, &smp.z)) * w;
                    axpy(c, &smp.z, &mut g);
                }
                GradientSample { agent, value: g, batch: idx }
            }
        }
    }

    fn smoothness(&self) -> f64 {
        self.smooth
    }

    fn optimum(&self) -> Option<f64> {
        self.f_star
    }

    fn describe(&self) -> Vec<(String, String)> {
        let sizes: Vec<String> = self.agents.iter().map(|a| a.len().to_string()).collect();
        vec![
            ("problem.kind".into(), "logistic".into()),
            ("problem.lambda".into(), self.lambda.to_string()),
            ("problem.alpha".into(), self.alpha.to_string()),
            ("problem.dim".into(), self.d.to_string()),
            ("problem.agent_sizes".into(), sizes.join(" ")),
            ("problem.smoothness".into(), self.smooth.to_string()),
        ]
    }
}

/// `f(x) = (1/n) sum_i (x' A_i x / 2 - b_i' x)` with PSD, possibly singular,
/// `A_i`. Satisfies the P-L condition with `nu` equal to the smallest
/// positive eigenvalue of the average Hessian.
#[derive(Debug, Clone)]
pub struct PlQuadraticProblem {
    a: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    /// Per-coordinate standard deviation of the additive gradient noise.
    pub noise_std: f64,
    f_star: f64,
    nu: f64,
    x_star: Vec<f64>,
    smooth: f64,
}

const EIG_REL_TOL: f64 = 1e-10;

fn sym_eigen(m: &DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>, ProblemError> {
    SymmetricEigen::try_new(m.clone(), 1e-14, 10_000).ok_or_else(|| ProblemError::Numerical("eigensolver did not converge".into()))
}

impl PlQuadraticProblem {
    pub fn new(a: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>) -> Result<Self, ProblemError> {
        if a.is_empty() || a.len() != b.len() {
            return Err(ProblemError::Parameter("need one (A_i, b_i) pair per agent".into()));
        }
        let d = a[0].nrows();
        if a.iter().any(|m| m.nrows() != d || m.ncols() != d) || b.iter().any(|v| v.len() != d) {
            return Err(ProblemError::Parameter("inconsistent dimensions".into()));
        }
        let n = a.len() as f64;
        let mut smooth = 0.0f64;
        for (i, m) in a.iter().enumerate() {
            if (m - m.transpose()).amax() > 1e-12 * (1.0 + m.amax()) {
                return Err(ProblemError::Parameter(format!("A_{i} is not symmetric")));
            }
            let eig = sym_eigen(m)?;
            let top = eig.eigenvalues.max();
            if eig.eigenvalues.min() < -EIG_REL_TOL * top.max(1.0) {
                return Err(ProblemError::Parameter(format!("A_{i} is not positive semidefinite")));
            }
            smooth = smooth.max(top);
        }
        let q = a.iter().fold(DMatrix::zeros(d, d), |acc, m| acc + m) / n;
        let p = b.iter().fold(DVector::zeros(d), |acc, v| acc + v) / n;
        let eig = sym_eigen(&q)?;
        let top = eig.eigenvalues.max();
        if top <= 0.0 {
            return Err(ProblemError::Parameter("average Hessian is zero".into()));
        }
        let cut = EIG_REL_TOL * top;
        let mut x_star = DVector::zeros(d);
        let mut nu = f64::INFINITY;
        for (k, &lam) in eig.eigenvalues.iter().enumerate() {
            let v = eig.eigenvectors.column(k);
            let coef = v.dot(&p);
            if lam > cut {
                nu = nu.min(lam);
                x_star += v * (coef / lam);
            } else if coef.abs() > 1e-9 * (1.0 + p.norm()) {
                return Err(ProblemError::Parameter("linear term has a component in the null space; f is unbounded below".into()));
            }
        }
        let f_star = -0.5 * p.dot(&x_star);
        Ok(Self { a, b, noise_std: 0.0, f_star, nu, x_star: x_star.as_slice().to_vec(), smooth })
    }

    pub fn with_noise(mut self, std: f64) -> Self {
        self.noise_std = std;
        self
    }

    pub fn minimizer(&self) -> &[f64] {
        &self.x_star
    }

    pub fn hessian(&self, agent: usize) -> &DMatrix<f64> {
        &self.a[agent]
    }
}

/// Random P-L quadratic. The average Hessian has `d - rank_deficit` positive
/// eigenvalues log-spaced in `[1/condition, 1]`, so `nu = 1/condition`.
/// The global objective depends only on `(d, rank_deficit, condition, seed)`;
/// `n` only changes how it is split, so instances with different agent
/// counts share the same `f`.
pub fn make_pl_quadratic(n: usize, d: usize, rank_deficit: usize, condition: f64, seed: u64) -> Result<PlQuadraticProblem, ProblemError> {
    if n == 0 || d == 0 || rank_deficit >= d {
        return Err(ProblemError::Parameter(format!("need n >= 1, d >= 1, rank_deficit < d; got {n}, {d}, {rank_deficit}")));
    }
    if !(condition >= 1.0 && condition.is_finite()) {
        return Err(ProblemError::Parameter(format!("condition must be >= 1, got {condition}")));
    }
    let mut g = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0, Purpose::Dataset));
    let gauss: DMatrix<f64> = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(&mut g));
    let u: DMatrix<f64> = gauss.qr().q();
    let rank = d - rank_deficit;
    let eigs: Vec<f64> = (0..d)
        .map(|j| match (j < rank, rank) {
            (false, _) => 0.0,
            (true, 1) => 1.0,
            (true, _) => condition.powf(-(j as f64) / (rank - 1) as f64),
        })
        .collect();
    let y: DVector<f64> = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut g));

    // per-agent spectral weights with mean one across agents
    let mut weights: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64 + 1, n as u64, Purpose::Dataset));
            (0..d).map(|_| if n == 1 { 1.0 } else { r.random_range(0.5..1.5) }).collect()
        })
        .collect();
    for k in 0..d {
        let m: f64 = weights.iter().map(|w| w[k]).sum::<f64>() / n as f64;
        weights.iter_mut().for_each(|w| w[k] /= m);
    }
    let offsets: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64 + 1, n as u64, Purpose::Noise));
            DVector::from_fn(d, |_, _| if n == 1 { 0.0 } else { StandardNormal.sample(&mut r) })
        })
        .collect();
    let mean_off: DVector<f64> = offsets.iter().fold(DVector::zeros(d), |acc, v| acc + v) / n as f64;

    let q: DMatrix<f64> = &u * DMatrix::from_diagonal(&DVector::from_vec(eigs.clone())) * u.transpose();
    let p: DVector<f64> = &q * &y;
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let diag: Vec<f64> = eigs.iter().zip(&weights[i]).map(|(l, w)| l * w).collect();
        let ai: DMatrix<f64> = &u * DMatrix::from_diagonal(&DVector::from_vec(diag)) * u.transpose();
        let ai = (&ai + ai.transpose()) * 0.5;
        b.push(&p + &q * (&offsets[i] - &mean_off));
        a.push(ai);
    }
    PlQuadraticProblem::new(a, b)
}

impl Problem for PlQuadraticProblem {
    fn agents(&self) -> usize {
        self.a.len()
    }

    fn dim(&self) -> usize {
        self.b[0].len()
    }

    fn local_value(&self, agent: usize, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.a[agent] * &xv)) - self.b[agent].dot(&xv)
    }

    fn local_gradient(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        (&self.a[agent] * &xv - &self.b[agent]).as_slice().to_vec()
    }

    fn sample_gradient(&self, agent: usize, x: &[f64], batch: Batch, rng: &mut dyn RngCore) -> GradientSample {
        let mut value = self.local_gradient(agent, x);
        if let Batch::Size(b) = batch {
            if self.noise_std > 0.0 {
                let std = self.noise_std / (b.max(1) as f64).sqrt();
                for v in value.iter_mut() {
                    let e: f64 = StandardNormal.sample(rng);
                    *v += std * e;
                }
            }
        }
        GradientSample { agent, value, batch: Vec::new() }
    }

    fn smoothness(&self) -> f64 {
        self.smooth
    }

    fn optimum(&self) -> Option<f64> {
        Some(self.f_star)
    }

    fn pl_constant(&self) -> Option<f64> {
        Some(self.nu)
    }

    fn describe(&self) -> Vec<(String, String)> {
        vec![
            ("problem.kind".into(), "pl_quadratic".into()),
            ("problem.dim".into(), self.dim().to_string()),
            ("problem.nu".into(), self.nu.to_string()),
            ("problem.f_star".into(), self.f_star.to_string()),
            ("problem.smoothness".into(), self.smooth.to_string()),
            ("problem.noise_std".into(), self.noise_std.to_string()),
        ]
    }
}

/// Empirical surrogate for the gradient-variance bound: the largest
/// per-agent mean squared deviation of sampled gradients from the exact
/// local gradient, over `points` random standard-normal points.
pub fn estimate_sigma<P: Problem + ?Sized>(problem: &P, points: usize, batch: Batch, draws: usize, seed: u64) -> Result<f64, ProblemError> {
    if points < 10 {
        return Err(ProblemError::Parameter(format!("need at least 10 points, got {points}")));
    }
    let draws = draws.max(1);
    let mut worst = 0.0f64;
    for p in 0..points {
        let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, p as u64, Purpose::Estimate));
        let x: Vec<f64> = (0..problem.dim()).map(|_| StandardNormal.sample(&mut r)).collect();
        for i in 0..problem.agents() {
            let exact = problem.local_gradient(i, &x);
            let mut acc = 0.0;
            for _ in 0..draws {
                let g = problem.sample_gradient(i, &x, batch, &mut r);
                acc += dist_sq(&g.value, &exact);
            }
            worst = worst.max(acc / draws as f64);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_max_and_constant_columns() {
        let csv = "a,b,c,label\n2,5,1,0\n4,5,2,1\n6,5,3,0\n";
        let ds = parse_csv_dataset(csv.as_bytes(), &CsvOptions::default()).unwrap();
        assert_eq!(ds.samples[1].z, vec![0.5, 0.0, 0.5]);
        assert_eq!(ds.samples.iter().map(|s| s.label).collect::<Vec<_>>(), vec![-1.0, 1.0, -1.0]);
        assert_eq!(ds.feature_names, vec!["a", "b", "c"]);
        assert_eq!(ds.source_hash.len(), 64);
    }

    #[test]
    fn csv_errors_name_the_row() {
        let bad = "a,label\n1,0\nx,1\n";
        match parse_csv_dataset(bad.as_bytes(), &CsvOptions::default()) {
            Err(ProblemError::Row { row: 3, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let label = "a,label\n1,0\n2,2\n";
        match parse_csv_dataset(label.as_bytes(), &CsvOptions::default()) {
            Err(ProblemError::Row { row: 3, msg }) => assert!(msg.contains("label")),
            other => panic!("unexpected {other:?}"),
        }
        let pm = "label,a\n-1,3\n1,4\n";
        let opts = CsvOptions { label_column: 0, encoding: LabelEncoding::PlusMinusOne, normalize: false, ..Default::default() };
        let ds = parse_csv_dataset(pm.as_bytes(), &opts).unwrap();
        assert_eq!(ds.samples[0], Sample { z: vec![3.0], label: -1.0 });
    }

    #[test]
    fn partition_sizes() {
        let p = partition(10, 10, PartitionStrategy::RoundRobin, None).unwrap();
        assert!(p.iter().all(|a| a.len() == 1));
        let p = partition(10, 3, PartitionStrategy::Contiguous, None).unwrap();
        assert_eq!(p.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 3, 3]);
        assert_eq!(p[0], vec![0, 1, 2, 3]);
        assert_eq!(partition(10, 3, PartitionStrategy::RoundRobin, Some(5)).unwrap(), partition(10, 3, PartitionStrategy::RoundRobin, Some(5)).unwrap());
        assert!(partition(3, 4, PartitionStrategy::RoundRobin, None).is_err());
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let z = vec![0.3, -1.2, 2.0];
        for u in [-1.0, 1.0] {
            let prob = LogisticProblem::new(vec![vec![Sample { z: z.clone(), label: u }]], 0.01, 1.0).unwrap();
            let g = prob.local_gradient(0, &[0.0; 3]);
            for (gi, zi) in g.iter().zip(&z) {
                assert!((gi - (-0.5 * u * zi)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn quadratic_examples() {
        let p = PlQuadraticProblem::new(vec![DMatrix::identity(3, 3)], vec![DVector::zeros(3)]).unwrap();
        assert_eq!(p.optimum(), Some(0.0));
        assert!((p.pl_constant().unwrap() - 1.0).abs() < 1e-12);

        let a1 = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let a2 = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0]));
        let p = PlQuadraticProblem::new(vec![a1, a2], vec![DVector::zeros(2); 2]).unwrap();
        assert!((p.pl_constant().unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(p.optimum(), Some(0.0));
        assert_eq!(p.smoothness(), 2.0);
    }

    #[test]
    fn unbounded_quadratic_is_rejected() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.0]));
        let b = DVector::from_vec(vec![0.0, 1.0]);
        assert!(PlQuadraticProblem::new(vec![a], vec![b]).is_err());
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(PlQuadraticProblem::new(vec![neg], vec![DVector::zeros(2)]).is_err());
    }

    #[test]
    fn full_batch_has_no_variance() {
        let p = make_pl_quadratic(3, 4, 1, 10.0, 1).unwrap().with_noise(0.5);
        assert_eq!(estimate_sigma(&p, 10, Batch::Full, 5, 3).unwrap(), 0.0);
        let ds = synthetic_dataset(30, 4, 2);
        let l = LogisticProblem::from_dataset(&ds, 3, PartitionStrategy::RoundRobin, None, 0.001, 1.0).unwrap();
        assert_eq!(estimate_sigma(&l, 10, Batch::Full, 5, 3).unwrap(), 0.0);
    }

    #[test]
    fn same_global_objective_across_agent_counts() {
        let p2 = make_pl_quadratic(2, 6, 2, 20.0, 9).unwrap();
        let p8 = make_pl_quadratic(8, 6, 2, 20.0, 9).unwrap();
        assert!((p2.optimum().unwrap() - p8.optimum().unwrap()).abs() < 1e-10);
        let x = [0.3, -0.2, 1.0, 0.5, -1.5, 0.1];
        assert!((p2.value(&x) - p8.value(&x)).abs() < 1e-10);
        assert!((p2.pl_constant().unwrap() - 1.0 / 20.0).abs() < 1e-10);
    }
}
