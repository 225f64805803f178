//! Experiment configs with flat dotted keys, the built-in presets, seeded
//! execution, aggregation over seeds, and the CSV artifacts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;
use toml::Value;

use crate::algorithms::{
    make_schedule, run, AlgoError, Algorithm, BitModel, HSequence, InitKind, Regime, RunOutcome, Schedule, ScheduleError,
    ScheduleParams, Simulation, StepOptions, DEFAULT_TABLE1_H0,
};
use crate::attack::{
    attack_instances, dlg_attack, observe_gradient, remove_regularizer, unobserved_error, AttackError, AttackOptions, AttackResult,
    DEFAULT_NOISE_STD, MAX_MARGIN,
};
use crate::compress::{certify, CertifyError, CertifyOptions, CompressError, CompressorKind, CompressorSpec};
use crate::metrics::TraceRecord;
use crate::problems::{
    estimate_sigma, load_csv_dataset, make_pl_quadratic, parse_csv_dataset, synthetic_dataset, Batch, CsvOptions, Dataset,
    LabelEncoding, LogisticProblem, PartitionStrategy, Problem, ProblemError, Sample,
};
use crate::rng::{stream, Purpose};
use crate::theory::{
    ledger_theorem1, ledger_theorem3, suggest_params, ConstantLedger, ProblemConstants, Theorem1Input, Theorem3Input, TheoryError,
    DEFAULT_BETA5, DEFAULT_C_TILDE,
};
use crate::topology::{Graph, GraphKind, TopologyError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable holding the default output directory.
pub const OUT_DIR_ENV: &str = "RCP_LAB_OUT";
pub const DEFAULT_OUT_DIR: &str = "rcp-lab-out";
pub const BUILTIN_BREAST_CANCER: &str = "builtin:breast_cancer";
const BREAST_CANCER_CSV: &str = include_str!("../data/breast_cancer_wdbc.csv");

pub const PRESETS: [&str; 8] = ["dsgd", "choco-sgd", "rcp-sgd-1", "rcp-sgd-2", "rcp-sgd-3", "rcp-sgd-4", "rcp-sgd-5", "unrcp-sgd"];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("config key {key:?}: {msg}")]
    Key { key: String, msg: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("unknown preset {0:?} (known: {list})", list = PRESETS.join(", "))]
    UnknownPreset(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Algo(#[from] AlgoError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn key_err(key: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Key { key: key.to_owned(), msg: msg.into() }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_owned(), source }
}

// ---------------------------------------------------------------------------
// Config types

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConfig {
    /// `ring`, `torus`, `complete` or `edge_list`.
    pub kind: String,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Logistic,
    SyntheticLogistic,
    PlQuadratic,
}

impl ProblemKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::SyntheticLogistic => "synthetic_logistic",
            Self::PlQuadratic => "pl_quadratic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// CSV path, or `builtin:breast_cancer`.
    pub dataset: String,
    pub label_column: i64,
    pub normalize: bool,
    pub label_encoding: LabelEncoding,
    pub has_header: bool,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
    pub partition: PartitionStrategy,
    pub partition_seed: Option<u64>,
    /// Known optimum; skips the numerical solve.
    pub f_star: Option<f64>,
    pub f_star_steps: usize,
    pub f_star_cache: bool,
    /// Sample count of the synthetic logistic dataset.
    pub samples: usize,
    /// Seed of the synthetic problem instance (independent of run seeds).
    pub seed: u64,
    pub rank_deficit: usize,
    pub condition: f64,
    pub noise_std: Option<f64>,
    /// Minibatch size; `None` means full local gradients.
    pub batch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleConfig {
    pub regime: Regime,
    pub beta0: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta5: Option<f64>,
    pub theta: Option<f64>,
    pub t1: Option<f64>,
    pub h0: Option<f64>,
    pub h_seq: Option<String>,
    pub alpha_x: Option<f64>,
    pub omega: Option<f64>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub eta_power: Option<f64>,
    pub c_tilde: Option<f64>,
    /// Fill missing theorem parameters from the ledger search.
    pub auto: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub algorithm: Algorithm,
    pub graph: GraphConfig,
    pub n: usize,
    /// Dimension of synthetic problems; checked against datasets.
    pub d: Option<usize>,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub metrics_every: usize,
    pub output: Option<String>,
    pub replica_check: bool,
    pub wall_clock: bool,
    pub bit_model: BitModel,
    pub problem: ProblemConfig,
    pub compressor: CompressorSpec,
    pub schedule: ScheduleConfig,
    /// Quantizer width, kept even when the kind ignores it.
    pub compressor_bits: u32,
    pub init: InitKind,
    pub init_std: f64,
    pub certify_samples: usize,
    pub certify_trials: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            algorithm: Algorithm::RcpSgd,
            graph: GraphConfig { kind: "ring".into(), rows: None, cols: None, path: None },
            n: 10,
            d: None,
            horizon: 2000,
            seeds: vec![0],
            metrics_every: 10,
            output: None,
            replica_check: false,
            wall_clock: false,
            bit_model: BitModel::Broadcast,
            problem: ProblemConfig {
                kind: ProblemKind::Logistic,
                dataset: BUILTIN_BREAST_CANCER.into(),
                label_column: -1,
                normalize: true,
                label_encoding: LabelEncoding::ZeroOne,
                has_header: true,
                lambda: None,
                alpha: None,
                partition: PartitionStrategy::RoundRobin,
                partition_seed: None,
                f_star: None,
                f_star_steps: 1_000_000,
                f_star_cache: true,
                samples: 500,
                seed: 0,
                rank_deficit: 0,
                condition: 10.0,
                noise_std: None,
                batch: None,
            },
            compressor: CompressorSpec::identity(),
            schedule: ScheduleConfig {
                regime: Regime::Custom,
                beta0: None,
                beta1: None,
                beta2: None,
                beta5: None,
                theta: None,
                t1: None,
                h0: None,
                h_seq: None,
                alpha_x: None,
                omega: None,
                gamma: None,
                eta: Some(0.1),
                eta_power: None,
                c_tilde: None,
                auto: false,
            },
            compressor_bits: 2,
            init: InitKind::Gaussian { std: 1.0 },
            init_std: 1.0,
            certify_samples: 200,
            certify_trials: 50,
        }
    }
}

// ---------------------------------------------------------------------------
// Value conversion

fn get_f64(key: &str, v: &Value) -> Result<f64, HarnessError> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        other => Err(key_err(key, format!("expected a number, got {}", other.type_str()))),
    }
}

fn get_i64(key: &str, v: &Value) -> Result<i64, HarnessError> {
    v.as_integer().ok_or_else(|| key_err(key, format!("expected an integer, got {}", v.type_str())))
}

fn get_usize(key: &str, v: &Value) -> Result<usize, HarnessError> {
    let i = get_i64(key, v)?;
    usize::try_from(i).map_err(|_| key_err(key, format!("must be >= 0, got {i}")))
}

fn get_u64(key: &str, v: &Value) -> Result<u64, HarnessError> {
    let i = get_i64(key, v)?;
    u64::try_from(i).map_err(|_| key_err(key, format!("must be >= 0, got {i}")))
}

fn get_bool(key: &str, v: &Value) -> Result<bool, HarnessError> {
    v.as_bool().ok_or_else(|| key_err(key, format!("expected a boolean, got {}", v.type_str())))
}

fn get_str(key: &str, v: &Value) -> Result<String, HarnessError> {
    v.as_str().map(str::to_owned).ok_or_else(|| key_err(key, format!("expected a string, got {}", v.type_str())))
}

fn positive(key: &str, x: f64) -> Result<f64, HarnessError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(key_err(key, format!("must be positive, got {x}")))
    }
}

fn nonneg(key: &str, x: f64) -> Result<f64, HarnessError> {
    if x >= 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(key_err(key, format!("must be >= 0, got {x}")))
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

/// Parses config text into `(dotted key, value)` pairs. Nested tables and
/// dotted keys are equivalent.
pub fn flat_entries(text: &str) -> Result<Vec<(String, Value)>, HarnessError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Syntax(e.message().to_owned()))?;
    let mut out = Vec::new();
    flatten("", &table, &mut out);
    Ok(out)
}

/// Reads a `key=value` override; values that are not valid TOML are taken
/// as bare strings.
pub fn parse_override(s: &str) -> Result<(String, Value), HarnessError> {
    let (k, v) = s.split_once('=').ok_or_else(|| HarnessError::Syntax(format!("override {s:?} is not key=value")))?;
    let (k, v) = (k.trim(), v.trim());
    let value = match format!("v = {v}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(v.to_owned()),
    };
    Ok((k.to_owned(), value))
}

fn algorithm_from(key: &str, s: &str) -> Result<Algorithm, HarnessError> {
    Algorithm::parse(s).ok_or_else(|| key_err(key, format!("unknown algorithm {s:?} (rcp_sgd, dsgd, choco_sgd)")))
}

fn encoding_name(e: LabelEncoding) -> &'static str {
    match e {
        LabelEncoding::ZeroOne => "zero_one",
        LabelEncoding::PlusMinusOne => "plus_minus_one",
    }
}

fn partition_name(p: PartitionStrategy) -> &'static str {
    match p {
        PartitionStrategy::RoundRobin => "round_robin",
        PartitionStrategy::Contiguous => "contiguous",
    }
}

fn bit_model_name(b: BitModel) -> &'static str {
    match b {
        BitModel::Broadcast => "broadcast",
        BitModel::PerEdge => "per_edge",
    }
}

// ---------------------------------------------------------------------------
// Parsing and serialization

impl RunConfig {
    /// Applies one dotted key.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), HarnessError> {
        let f = || get_f64(key, v);
        let of = || get_f64(key, v).map(Some);
        let p = &mut self.problem;
        let s = &mut self.schedule;
        match key {
            "name" => self.name = get_str(key, v)?,
            "algorithm" => self.algorithm = algorithm_from(key, &get_str(key, v)?)?,
            "n" => self.n = get_usize(key, v)?,
            "d" => self.d = Some(get_usize(key, v)?),
            "T" => self.horizon = get_usize(key, v)?,
            "seeds" => {
                self.seeds = match v {
                    Value::Array(a) => a.iter().map(|x| get_u64(key, x)).collect::<Result<_, _>>()?,
                    other => vec![get_u64(key, other)?],
                }
            }
            "metrics_every" => self.metrics_every = get_usize(key, v)?,
            "output" => self.output = Some(get_str(key, v)?),
            "replica_check" => self.replica_check = get_bool(key, v)?,
            "wall_clock" => self.wall_clock = get_bool(key, v)?,
            "bits.model" => {
                self.bit_model = match get_str(key, v)?.as_str() {
                    "broadcast" => BitModel::Broadcast,
                    "per_edge" => BitModel::PerEdge,
                    o => return Err(key_err(key, format!("unknown bit model {o:?} (broadcast, per_edge)"))),
                }
            }
            "graph.kind" => {
                let k = get_str(key, v)?;
                if !["ring", "torus", "complete", "edge_list"].contains(&k.as_str()) {
                    return Err(key_err(key, format!("unknown graph kind {k:?} (ring, torus, complete, edge_list)")));
                }
                self.graph.kind = k;
            }
            "graph.rows" => self.graph.rows = Some(get_usize(key, v)?),
            "graph.cols" => self.graph.cols = Some(get_usize(key, v)?),
            "graph.path" => self.graph.path = Some(get_str(key, v)?),
            "problem.kind" => {
                p.kind = match get_str(key, v)?.as_str() {
                    "logistic" => ProblemKind::Logistic,
                    "synthetic_logistic" => ProblemKind::SyntheticLogistic,
                    "pl_quadratic" => ProblemKind::PlQuadratic,
                    o => return Err(key_err(key, format!("unknown problem kind {o:?} (logistic, synthetic_logistic, pl_quadratic)"))),
                }
            }
            "problem.dataset" => p.dataset = get_str(key, v)?,
            "problem.label_column" => p.label_column = get_i64(key, v)?,
            "problem.normalize" => p.normalize = get_bool(key, v)?,
            "problem.has_header" => p.has_header = get_bool(key, v)?,
            "problem.label_encoding" => {
                p.label_encoding = match get_str(key, v)?.as_str() {
                    "zero_one" => LabelEncoding::ZeroOne,
                    "plus_minus_one" => LabelEncoding::PlusMinusOne,
                    o => return Err(key_err(key, format!("unknown label encoding {o:?} (zero_one, plus_minus_one)"))),
                }
            }
            "problem.lambda" => p.lambda = Some(nonneg(key, f()?)?),
            "problem.alpha" => p.alpha = Some(positive(key, f()?)?),
            "problem.partition" => {
                p.partition = match get_str(key, v)?.as_str() {
                    "round_robin" => PartitionStrategy::RoundRobin,
                    "contiguous" => PartitionStrategy::Contiguous,
                    o => return Err(key_err(key, format!("unknown partition {o:?} (round_robin, contiguous)"))),
                }
            }
            "problem.partition_seed" => p.partition_seed = Some(get_u64(key, v)?),
            "problem.f_star" => p.f_star = Some(f()?),
            "problem.f_star_steps" => p.f_star_steps = get_usize(key, v)?,
            "problem.f_star_cache" => p.f_star_cache = get_bool(key, v)?,
            "problem.samples" => p.samples = get_usize(key, v)?,
            "problem.seed" => p.seed = get_u64(key, v)?,
            "problem.rank_deficit" => p.rank_deficit = get_usize(key, v)?,
            "problem.condition" => p.condition = positive(key, f()?)?,
            "problem.noise_std" => p.noise_std = Some(nonneg(key, f()?)?),
            "problem.batch" => {
                let b = get_usize(key, v)?;
                if b == 0 {
                    return Err(key_err(key, "must be >= 1"));
                }
                p.batch = Some(b);
            }
            "compressor.kind" => {
                self.compressor.kind = CompressorKind::parse(&get_str(key, v)?, self.compressor_bits).map_err(|e| key_err(key, e.to_string()))?;
            }
            "compressor.bits" => {
                let b = u32::try_from(get_usize(key, v)?).map_err(|_| key_err(key, "too large"))?;
                if !(1..=30).contains(&b) {
                    return Err(key_err(key, format!("must be in 1..=30, got {b}")));
                }
                self.compressor.kind = match self.compressor.kind {
                    CompressorKind::Quantizer { .. } => CompressorKind::Quantizer { bits: b },
                    CompressorKind::QuantizerImproved { .. } => CompressorKind::QuantizerImproved { bits: b },
                    other => other,
                };
                self.compressor_bits = b;
            }
            "compressor.privacy_q" => {
                let q = f()?;
                if !(0.0..=1.0).contains(&q) {
                    return Err(key_err(key, format!("must lie in [0, 1], got {q}")));
                }
                self.compressor.privacy_q = q;
            }
            "compressor.scale_r" => self.compressor.scale_r = positive(key, f()?)?,
            "schedule.regime" => s.regime = Regime::parse(&get_str(key, v)?).map_err(|e| key_err(key, e.to_string()))?,
            "schedule.beta0" => s.beta0 = of()?,
            "schedule.beta1" => s.beta1 = of()?,
            "schedule.beta2" => s.beta2 = of()?,
            "schedule.beta5" => s.beta5 = of()?,
            "schedule.theta" => s.theta = of()?,
            "schedule.t1" => s.t1 = of()?,
            "schedule.h0" => s.h0 = of()?,
            "schedule.h_seq" => {
                let h = get_str(key, v)?;
                HSequence::parse(&h, 1.0).map_err(|e| key_err(key, e.to_string()))?;
                s.h_seq = Some(h);
            }
            "schedule.alpha_x" => s.alpha_x = of()?,
            "schedule.omega" => s.omega = of()?,
            "schedule.gamma" => s.gamma = of()?,
            "schedule.eta" => s.eta = of()?,
            "schedule.eta_power" => s.eta_power = of()?,
            "schedule.c_tilde" => s.c_tilde = of()?,
            "schedule.auto" => s.auto = get_bool(key, v)?,
            "init.kind" => {
                let std = self.init_std;
                self.init = match get_str(key, v)?.as_str() {
                    "zeros" => InitKind::Zeros,
                    "gaussian" => InitKind::Gaussian { std },
                    "common" => InitKind::Common { std },
                    o => return Err(key_err(key, format!("unknown init kind {o:?} (zeros, gaussian, common)"))),
                }
            }
            "init.std" => {
                let std = nonneg(key, f()?)?;
                self.init = match self.init {
                    InitKind::Zeros => InitKind::Zeros,
                    InitKind::Gaussian { .. } => InitKind::Gaussian { std },
                    InitKind::Common { .. } => InitKind::Common { std },
                };
                self.init_std = std;
            }
            "ledger.certify_samples" => self.certify_samples = get_usize(key, v)?,
            "ledger.certify_trials" => self.certify_trials = get_usize(key, v)?,
            _ => return Err(HarnessError::UnknownKey(key.to_owned())),
        }
        Ok(())
    }

    /// Cross-field checks that do not need the problem instance.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(key_err("seeds", "must be nonempty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(key_err("seeds", "contains duplicates"));
        }
        if self.n == 0 {
            return Err(key_err("n", "must be >= 1"));
        }
        if self.metrics_every == 0 {
            return Err(key_err("metrics_every", "must be >= 1"));
        }
        if self.graph.kind == "torus" && (self.graph.rows.is_none() || self.graph.cols.is_none()) {
            return Err(key_err("graph.rows", "torus needs graph.rows and graph.cols"));
        }
        if self.graph.kind == "edge_list" && self.graph.path.is_none() {
            return Err(key_err("graph.path", "edge_list needs graph.path"));
        }
        if matches!(self.problem.kind, ProblemKind::SyntheticLogistic | ProblemKind::PlQuadratic) && self.d.is_none() {
            return Err(key_err("d", format!("required by problem.kind = {}", self.problem.kind.name())));
        }
        if self.d == Some(0) {
            return Err(key_err("d", "must be >= 1"));
        }
        Ok(())
    }

    /// Every key with a value, in a fixed order.
    pub fn entries(&self) -> Vec<(String, Value)> {
        let mut out: Vec<(String, Value)> = Vec::new();
        let mut put = |k: &str, v: Value| out.push((k.to_owned(), v));
        let fl = Value::Float;
        let int = |x: usize| Value::Integer(x as i64);
        let string = |s: &str| Value::String(s.to_owned());
        put("name", string(&self.name));
        put("algorithm", string(self.algorithm.name()));
        put("n", int(self.n));
        if let Some(d) = self.d {
            put("d", int(d));
        }
        put("T", int(self.horizon));
        put("seeds", Value::Array(self.seeds.iter().map(|&s| Value::Integer(s as i64)).collect()));
        put("metrics_every", int(self.metrics_every));
        if let Some(o) = &self.output {
            put("output", string(o));
        }
        put("replica_check", Value::Boolean(self.replica_check));
        put("wall_clock", Value::Boolean(self.wall_clock));
        put("bits.model", string(bit_model_name(self.bit_model)));
        put("graph.kind", string(&self.graph.kind));
        if let Some(r) = self.graph.rows {
            put("graph.rows", int(r));
        }
        if let Some(c) = self.graph.cols {
            put("graph.cols", int(c));
        }
        if let Some(p) = &self.graph.path {
            put("graph.path", string(p));
        }
        let p = &self.problem;
        put("problem.kind", string(p.kind.name()));
        put("problem.dataset", string(&p.dataset));
        put("problem.label_column", Value::Integer(p.label_column));
        put("problem.normalize", Value::Boolean(p.normalize));
        put("problem.label_encoding", string(encoding_name(p.label_encoding)));
        put("problem.has_header", Value::Boolean(p.has_header));
        if let Some(x) = p.lambda {
            put("problem.lambda", fl(x));
        }
        if let Some(x) = p.alpha {
            put("problem.alpha", fl(x));
        }
        put("problem.partition", string(partition_name(p.partition)));
        if let Some(s) = p.partition_seed {
            put("problem.partition_seed", Value::Integer(s as i64));
        }
        if let Some(x) = p.f_star {
            put("problem.f_star", fl(x));
        }
        put("problem.f_star_steps", int(p.f_star_steps));
        put("problem.f_star_cache", Value::Boolean(p.f_star_cache));
        put("problem.samples", int(p.samples));
        put("problem.seed", Value::Integer(p.seed as i64));
        put("problem.rank_deficit", int(p.rank_deficit));
        put("problem.condition", fl(p.condition));
        if let Some(x) = p.noise_std {
            put("problem.noise_std", fl(x));
        }
        if let Some(b) = p.batch {
            put("problem.batch", int(b));
        }
        put("compressor.kind", string(self.compressor.kind.name()));
        put("compressor.bits", int(self.compressor_bits as usize));
        put("compressor.privacy_q", fl(self.compressor.privacy_q));
        put("compressor.scale_r", fl(self.compressor.scale_r));
        let s = &self.schedule;
        put("schedule.regime", string(s.regime.name()));
        for (k, v) in [
            ("schedule.beta0", s.beta0),
            ("schedule.beta1", s.beta1),
            ("schedule.beta2", s.beta2),
            ("schedule.beta5", s.beta5),
            ("schedule.theta", s.theta),
            ("schedule.t1", s.t1),
            ("schedule.h0", s.h0),
        ] {
            if let Some(x) = v {
                put(k, fl(x));
            }
        }
        if let Some(h) = &s.h_seq {
            put("schedule.h_seq", string(h));
        }
        for (k, v) in [
            ("schedule.alpha_x", s.alpha_x),
            ("schedule.omega", s.omega),
            ("schedule.gamma", s.gamma),
            ("schedule.eta", s.eta),
            ("schedule.eta_power", s.eta_power),
            ("schedule.c_tilde", s.c_tilde),
        ] {
            if let Some(x) = v {
                put(k, fl(x));
            }
        }
        put("schedule.auto", Value::Boolean(s.auto));
        let kind = match self.init {
            InitKind::Zeros => "zeros",
            InitKind::Gaussian { .. } => "gaussian",
            InitKind::Common { .. } => "common",
        };
        put("init.kind", string(kind));
        put("init.std", fl(self.init_std));
        put("ledger.certify_samples", int(self.certify_samples));
        put("ledger.certify_trials", int(self.certify_trials));
        out
    }

    /// Flat dotted-key text that [`parse_config`] reads back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{} = {v}", quote_key(&k));
        }
        out
    }

    pub fn apply(&mut self, entries: &[(String, Value)]) -> Result<(), HarnessError> {
        for (k, v) in entries {
            self.set(k, v)?;
        }
        Ok(())
    }
}

fn quote_key(k: &str) -> String {
    if k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.') {
        k.to_owned()
    } else {
        format!("{k:?}")
    }
}

/// Parses config text. A top-level `preset` key starts from that preset;
/// the remaining keys override it.
pub fn parse_config(text: &str) -> Result<RunConfig, HarnessError> {
    let entries = flat_entries(text)?;
    let mut cfg = match entries.iter().find(|(k, _)| k == "preset") {
        Some((k, v)) => preset(&get_str(k, v)?)?,
        None => RunConfig::default(),
    };
    let rest: Vec<(String, Value)> = entries.into_iter().filter(|(k, _)| k != "preset").collect();
    cfg.apply(&rest)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_config(&text)
}

/// Table I rows as configs: ring of 10 agents on the breast-cancer task.
pub fn preset(name: &str) -> Result<RunConfig, HarnessError> {
    let mut c = RunConfig { name: name.to_owned(), ..RunConfig::default() };
    let quant = CompressorKind::Quantizer { bits: 2 };
    let quant_improved = CompressorKind::QuantizerImproved { bits: 2 };
    let rcp = |c: &mut RunConfig, kind: CompressorKind, gamma: f64, alpha_x: Option<f64>| {
        c.algorithm = Algorithm::RcpSgd;
        c.compressor = CompressorSpec::new(kind);
        c.schedule.regime = Regime::Table1;
        c.schedule.gamma = Some(gamma);
        c.schedule.omega = Some(0.5);
        c.schedule.eta = Some(0.08);
        c.schedule.eta_power = Some(0.01);
        c.schedule.alpha_x = alpha_x;
    };
    match name {
        "dsgd" => {
            c.algorithm = Algorithm::Dsgd;
            c.schedule.eta = Some(0.1);
        }
        "choco-sgd" => {
            c.algorithm = Algorithm::ChocoSgd;
            c.compressor = CompressorSpec::new(quant);
            c.schedule.eta = Some(0.1);
            c.schedule.gamma = Some(0.2);
        }
        "rcp-sgd-1" => rcp(&mut c, quant, 5.0, None),
        "rcp-sgd-2" => rcp(&mut c, quant_improved, 2.0, Some(0.8)),
        "rcp-sgd-3" => rcp(&mut c, CompressorKind::SignNorm, 2.0, Some(0.8)),
        "rcp-sgd-4" => rcp(&mut c, CompressorKind::SignNormImproved, 2.0, Some(0.8)),
        "rcp-sgd-5" => {
            rcp(&mut c, quant_improved, 2.0, Some(0.8));
            c.compressor.privacy_q = 0.2;
        }
        "unrcp-sgd" => rcp(&mut c, CompressorKind::Identity, 2.0, Some(0.8)),
        other => return Err(HarnessError::UnknownPreset(other.to_owned())),
    }
    Ok(c)
}

// ---------------------------------------------------------------------------
// Preparation

/// Everything a seed needs, built once per config.
pub struct Prepared {
    pub graph: Graph,
    pub problem: Box<dyn Problem>,
    pub schedule: Schedule,
    pub opts: StepOptions,
    pub ledger: Option<ConstantLedger>,
    /// Resolved parameters and filled defaults, in header order.
    pub header: Vec<(String, String)>,
}

pub fn build_graph(cfg: &RunConfig) -> Result<Graph, HarnessError> {
    if cfg.n == 1 {
        return Ok(Graph::from_edges(1, [])?);
    }
    let kind = match cfg.graph.kind.as_str() {
        "ring" => GraphKind::Ring,
        "complete" => GraphKind::Complete,
        "torus" => GraphKind::Torus { rows: cfg.graph.rows.unwrap_or(0), cols: cfg.graph.cols.unwrap_or(0) },
        _ => {
            let path = cfg.graph.path.as_deref().ok_or_else(|| key_err("graph.path", "edge_list needs graph.path"))?;
            return Ok(Graph::load_edge_list(Path::new(path), Some(cfg.n))?);
        }
    };
    Ok(Graph::build(&kind, cfg.n)?)
}

fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, Option<PathBuf>), HarnessError> {
    let p = &cfg.problem;
    if p.kind == ProblemKind::SyntheticLogistic {
        let d = cfg.d.ok_or_else(|| key_err("d", "required"))?;
        return Ok((synthetic_dataset(p.samples, d, p.seed), None));
    }
    let label_column = isize::try_from(p.label_column).map_err(|_| key_err("problem.label_column", "out of range"))?;
    let opts = CsvOptions { label_column, normalize: p.normalize, has_header: p.has_header, encoding: p.label_encoding };
    if p.dataset == BUILTIN_BREAST_CANCER {
        Ok((parse_csv_dataset(BREAST_CANCER_CSV.as_bytes(), &opts)?, None))
    } else {
        let path = PathBuf::from(&p.dataset);
        let ds = load_csv_dataset(&path, &opts)?;
        Ok((ds, path.parent().map(Path::to_path_buf)))
    }
}

fn f_star_key(ds_hash: &str, problem: &LogisticProblem, cfg: &RunConfig) -> String {
    let p = &cfg.problem;
    let text = format!(
        "{ds_hash}|lambda={:e}|alpha={:e}|n={}|partition={}|seed={:?}|steps={}",
        problem.lambda,
        problem.alpha,
        cfg.n,
        partition_name(p.partition),
        p.partition_seed,
        p.f_star_steps
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Tolerance on `|grad f|^2` that ends the centralized solve.
pub const F_STAR_TOL: f64 = 1e-22;

/// Numerical `f*`, cached in `dir` as a small TOML file keyed by the hash
/// of the dataset, the regularizer constants and the partition.
fn cached_f_star(problem: &LogisticProblem, key: &str, dir: Option<&Path>, steps: usize) -> Result<(f64, String), HarnessError> {
    let Some(dir) = dir else {
        return Ok((problem.solve_optimum(steps, F_STAR_TOL), "computed (not cached)".into()));
    };
    let path = dir.join(format!("fstar-{}.toml", &key[..16]));
    if let Ok(text) = fs::read_to_string(&path) {
        if let Ok(t) = text.parse::<toml::Table>() {
            if t.get("key").and_then(Value::as_str) == Some(key) {
                if let Some(f) = t.get("f_star").and_then(Value::as_float) {
                    return Ok((f, format!("cached {}", path.display())));
                }
            }
        }
    }
    let f = problem.solve_optimum(steps, F_STAR_TOL);
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let body = format!("key = {key:?}\nf_star = {}\nsteps = {steps}\ntol = {F_STAR_TOL:e}\n", Value::Float(f));
    fs::write(&path, body).map_err(io_err(&path))?;
    Ok((f, format!("computed, cached {}", path.display())))
}

fn build_problem(cfg: &RunConfig, cache_dir: Option<&Path>, header: &mut Vec<(String, String)>) -> Result<Box<dyn Problem>, HarnessError> {
    let p = &cfg.problem;
    if p.kind == ProblemKind::PlQuadratic {
        let d = cfg.d.ok_or_else(|| key_err("d", "required"))?;
        let noise = p.noise_std.unwrap_or_else(|| {
            header.push(("default.problem.noise_std".into(), "0".into()));
            0.0
        });
        header.push((
            "problem.noise".into(),
            "additive N(0, noise_std^2 I) per gradient call, divided by sqrt(batch); none for full batches".into(),
        ));
        let q = make_pl_quadratic(cfg.n, d, p.rank_deficit, p.condition, p.seed)?.with_noise(noise);
        return Ok(Box::new(q));
    }
    if p.noise_std.is_some() {
        return Err(key_err("problem.noise_std", "only used by pl_quadratic"));
    }
    let (ds, ds_dir) = load_dataset(cfg)?;
    if let Some(d) = cfg.d {
        if d != ds.dim() {
            return Err(key_err("d", format!("dataset has {} features, config says {d}", ds.dim())));
        }
    }
    let lambda = p.lambda.unwrap_or_else(|| {
        header.push(("default.problem.lambda".into(), LogisticProblem::DEFAULT_LAMBDA.to_string()));
        LogisticProblem::DEFAULT_LAMBDA
    });
    let alpha = p.alpha.unwrap_or_else(|| {
        header.push(("default.problem.alpha".into(), LogisticProblem::DEFAULT_ALPHA.to_string()));
        LogisticProblem::DEFAULT_ALPHA
    });
    header.push(("dataset.source".into(), p.dataset.clone()));
    header.push(("dataset.hash".into(), ds.source_hash.clone()));
    header.push(("dataset.samples".into(), ds.samples.len().to_string()));
    header.push(("dataset.features".into(), ds.dim().to_string()));
    if p.kind == ProblemKind::Logistic {
        let enc = match p.label_encoding {
            LabelEncoding::ZeroOne => "0 -> -1, 1 -> +1",
            LabelEncoding::PlusMinusOne => "labels used as given",
        };
        let scaling = if p.normalize { "per-column min-max to [0, 1], constant columns to 0" } else { "none" };
        header.push(("dataset.encoding".into(), format!("label column {}; {enc}; features {scaling}", p.label_column)));
    }
    let mut problem = LogisticProblem::from_dataset(&ds, cfg.n, p.partition, p.partition_seed, lambda, alpha)?;
    let f_star = match p.f_star {
        Some(f) => {
            header.push(("problem.f_star_source".into(), "config".into()));
            f
        }
        None => {
            let key = f_star_key(&ds.source_hash, &problem, cfg);
            let dir = if p.f_star_cache { ds_dir.as_deref().or(cache_dir) } else { None };
            let (f, how) = cached_f_star(&problem, &key, dir, p.f_star_steps)?;
            header.push((
                "problem.f_star_source".into(),
                format!("centralized gradient descent, step 1/L, up to {} steps, stop at |grad|^2 <= {F_STAR_TOL:e}; {how}", p.f_star_steps),
            ));
            f
        }
    };
    problem.set_optimum(f_star);
    Ok(Box::new(problem))
}

fn schedule_params(cfg: &RunConfig) -> Result<ScheduleParams, HarnessError> {
    let s = &cfg.schedule;
    let h_seq = match &s.h_seq {
        Some(kind) => Some(HSequence::parse(kind, s.h0.unwrap_or(DEFAULT_TABLE1_H0)).map_err(|e| key_err("schedule.h_seq", e.to_string()))?),
        None => None,
    };
    Ok(ScheduleParams {
        beta0: s.beta0,
        beta1: s.beta1,
        beta2: s.beta2,
        beta5: s.beta5,
        theta: s.theta,
        t1: s.t1,
        h0: s.h0,
        alpha_x: s.alpha_x,
        omega: s.omega,
        gamma: s.gamma,
        eta: s.eta,
        eta_power: s.eta_power,
        c_tilde: s.c_tilde,
        horizon: Some(cfg.horizon),
        n: Some(cfg.n),
        h_seq,
    })
}

fn fill(dst: &mut Option<f64>, src: Option<f64>, key: &str, header: &mut Vec<(String, String)>) {
    if dst.is_none() {
        if let Some(v) = src {
            *dst = Some(v);
            header.push((format!("auto.{key}"), v.to_string()));
        }
    }
}

fn is_theorem(r: Regime) -> bool {
    !matches!(r, Regime::Table1 | Regime::Custom)
}

/// Default `alpha_x` for theorem regimes with `schedule.auto`, as a
/// fraction of the bound `1/r`.
pub const AUTO_ALPHA_FRACTION: f64 = 0.5;

pub fn prepare(cfg: &RunConfig, cache_dir: Option<&Path>) -> Result<Prepared, HarnessError> {
    cfg.validate()?;
    cfg.compressor.validate().map_err(|e| key_err("compressor.kind", e.to_string()))?;
    let mut header: Vec<(String, String)> = vec![("version".into(), VERSION.into())];
    header.extend(cfg.entries().into_iter().map(|(k, v)| (format!("config.{k}"), toml_plain(&v))));
    let graph = build_graph(cfg)?;
    let problem = build_problem(cfg, cache_dir, &mut header)?;
    let d = problem.dim();
    header.extend(problem.describe());
    let batch = cfg.problem.batch.map_or(Batch::Full, Batch::Size);
    let opts = StepOptions { batch, bit_model: cfg.bit_model };
    let mut params = schedule_params(cfg)?;
    let regime = cfg.schedule.regime;
    let mut ledger = None;
    let schedule = if is_theorem(regime) {
        if cfg.n < 2 {
            return Err(key_err("n", "theorem regimes need n >= 2 (spectral bounds)"));
        }
        let spec = cfg.compressor;
        let r = spec.scale_r;
        let alpha_x = match (params.alpha_x, cfg.schedule.auto) {
            (Some(a), _) => a,
            (None, true) => {
                let a = AUTO_ALPHA_FRACTION / r;
                header.push(("default.schedule.alpha_x".into(), a.to_string()));
                params.alpha_x = Some(a);
                a
            }
            (None, false) => return Err(ScheduleError::Missing { regime, name: "alpha_x" }.into()),
        };
        let copts = CertifyOptions { r, samples: cfg.certify_samples, trials_per_sample: cfg.certify_trials, dim: d, ..Default::default() };
        let cert = certify(&spec, &copts, &mut stream(0, 0, 0, Purpose::Certify))?;
        header.push(("certificate.phi".into(), cert.phi.to_string()));
        header.push(("certificate.sigma_c".into(), cert.sigma_c.to_string()));
        header.push(("certificate.violation_rate".into(), cert.violation_rate.to_string()));
        let sigma_sq = match batch {
            Batch::Full => 0.0,
            b => estimate_sigma(problem.as_ref(), 10, b, 20, 0)?,
        };
        header.push(("sigma_sq_estimate".into(), format!("{sigma_sq} (sampled surrogate for the uniform variance bound)")));
        let pc = ProblemConstants::from_parts(problem.smoothness(), graph.spectral_bounds()?, &cert, alpha_x, sigma_sq, problem.pl_constant());
        if cfg.schedule.auto {
            let sug = suggest_params(&pc, regime, alpha_x, cfg.n, cfg.horizon)?;
            fill(&mut params.beta0, sug.beta0, "schedule.beta0", &mut header);
            fill(&mut params.beta1, sug.beta1, "schedule.beta1", &mut header);
            fill(&mut params.beta2, sug.beta2, "schedule.beta2", &mut header);
            fill(&mut params.beta5, sug.beta5, "schedule.beta5", &mut header);
            fill(&mut params.theta, sug.theta, "schedule.theta", &mut header);
            fill(&mut params.t1, sug.t1, "schedule.t1", &mut header);
            fill(&mut params.h0, sug.h0, "schedule.h0", &mut header);
            fill(&mut params.omega, sug.omega, "schedule.omega", &mut header);
            fill(&mut params.c_tilde, sug.c_tilde, "schedule.c_tilde", &mut header);
        }
        let sched = make_schedule(regime, &params, Some(&pc))?;
        let led = if regime == Regime::Theorem3 {
            let input = Theorem3Input {
                beta0: params.beta0.unwrap_or(f64::NAN),
                beta1: params.beta1.unwrap_or(f64::NAN),
                beta2: params.beta2.unwrap_or(f64::NAN),
                t1: params.t1.unwrap_or(f64::NAN),
                c_tilde: params.c_tilde.unwrap_or(DEFAULT_C_TILDE),
                h0: params.h0,
                sigma_bar: 0.0,
                n: cfg.n,
            };
            header.push(("default.ledger.sigma_bar".into(), "0".into()));
            ledger_theorem3(&pc, &input)?
        } else {
            let input = Theorem1Input {
                beta1: params.beta1.unwrap_or(f64::NAN),
                beta2: params.beta2.unwrap_or(f64::NAN),
                beta5: params.beta5.unwrap_or(DEFAULT_BETA5),
                omega: sched.omega(0),
                eta: sched.eta(0),
                alpha_x,
            };
            ledger_theorem1(&pc, &input)?
        };
        ledger = Some(led);
        sched
    } else {
        make_schedule(regime, &params, None)?
    };
    header.extend(schedule.defaults_used.iter().map(|(k, v)| (format!("default.{k}"), v.clone())));
    header.extend(schedule.describe());
    if regime == Regime::Table1 {
        header.push(("note.table1.m_k".into(), "unmapped (column never defined; not implemented)".into()));
    }
    header.push(("compressor".into(), cfg.compressor.to_string()));
    if let Some(delta) = cfg.compressor.privacy_delta() {
        header.push(("privacy.epsilon".into(), "0".into()));
        header.push(("privacy.delta".into(), delta.to_string()));
    }
    if cfg.algorithm == Algorithm::Dsgd && !cfg.compressor.is_exact() {
        header.push(("note.compressor".into(), "ignored by dsgd".into()));
    }
    header.push(("init".into(), format!("{:?}", cfg.init)));
    if let Some(led) = &ledger {
        header.extend(led.entries.iter().map(|(s, v)| (format!("ledger.{s}"), format!("{v:e}"))));
        header.push(("ledger.feasible".into(), led.feasible.to_string()));
        for v in &led.violated {
            header.push(("ledger.violated".into(), v.clone()));
        }
    }
    Ok(Prepared { graph, problem, schedule, opts, ledger, header })
}

fn toml_plain(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn run_seed(cfg: &RunConfig, prep: &Prepared, seed: u64) -> Result<RunOutcome, HarnessError> {
    let sim = Simulation {
        algorithm: cfg.algorithm,
        graph: &prep.graph,
        problem: prep.problem.as_ref(),
        schedule: &prep.schedule,
        compressor: cfg.compressor,
        opts: prep.opts,
        horizon: cfg.horizon,
        metrics_every: cfg.metrics_every,
        init: cfg.init,
        seed,
        replica_check: cfg.replica_check,
        wall_clock: cfg.wall_clock,
    };
    Ok(run(&sim)?)
}

// ---------------------------------------------------------------------------
// Aggregation and artifacts

pub const METRICS: [&str; 5] = ["consensus_err", "grad_norm_sq", "opt_gap", "residual", "bits_cum"];

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub step: usize,
    /// Seeds with a record at this step.
    pub count: usize,
    /// Mean and sample std per entry of [`METRICS`]; `None` when no seed
    /// reports the metric.
    pub stats: Vec<Option<(f64, f64)>>,
}

fn metric_values(r: &TraceRecord) -> [Option<f64>; 5] {
    [Some(r.consensus_err), Some(r.grad_norm_sq), r.opt_gap, Some(r.residual), Some(r.bits_cum as f64)]
}

/// Mean and std per step across seeds, aligned on the step index. A seed
/// that stopped early simply has no records past its last step.
pub fn aggregate(traces: &[&[TraceRecord]]) -> Vec<AggregateRow> {
    let mut by_step: BTreeMap<usize, Vec<&TraceRecord>> = BTreeMap::new();
    for t in traces {
        for r in *t {
            by_step.entry(r.step).or_default().push(r);
        }
    }
    by_step
        .into_iter()
        .map(|(step, recs)| {
            let stats = (0..METRICS.len())
                .map(|m| {
                    let vals: Vec<f64> = recs.iter().filter_map(|r| metric_values(r)[m]).collect();
                    if vals.is_empty() {
                        return None;
                    }
                    let k = vals.len() as f64;
                    let mean = vals.iter().sum::<f64>() / k;
                    let var = if vals.len() > 1 { vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
                    Some((mean, var.sqrt()))
                })
                .collect();
            AggregateRow { step, count: recs.len(), stats }
        })
        .collect()
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from("step,count");
    for m in METRICS {
        let _ = write!(out, ",{m}_mean,{m}_std");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{},{}", r.step, r.count);
        for s in &r.stats {
            match s {
                Some((m, sd)) => {
                    let _ = write!(out, ",{m:e},{sd:e}");
                }
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn trace_csv(trace: &[TraceRecord]) -> String {
    let mut out = format!("{}\n", TraceRecord::CSV_HEADER);
    for r in trace {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn key_value_csv(rows: &[(String, String)]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Syntax(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 strings"))
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(io_err(path))
}

pub struct ExecSummary {
    pub outcomes: Vec<(u64, RunOutcome)>,
    pub aggregate: Vec<AggregateRow>,
    pub header: Vec<(String, String)>,
    pub ledger: Option<ConstantLedger>,
    pub files: Vec<PathBuf>,
}

impl ExecSummary {
    pub fn divergent(&self) -> Vec<(u64, usize, &str)> {
        self.outcomes.iter().filter_map(|(s, o)| o.stopped.as_ref().map(|(k, why)| (*s, *k, why.as_str()))).collect()
    }
}

/// Resolves the output directory: explicit argument, then the config's
/// `output`, then `$RCP_LAB_OUT`, then `rcp-lab-out`.
pub fn output_dir(cfg: &RunConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Runs every seed (in parallel) and writes `trace_seed<s>.csv`,
/// `aggregate.csv` and `header.csv` into `out_dir`.
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<ExecSummary, HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let prep = prepare(cfg, Some(out_dir))?;
    let outcomes: Vec<(u64, RunOutcome)> =
        cfg.seeds.par_iter().map(|&s| run_seed(cfg, &prep, s).map(|o| (s, o))).collect::<Result<_, _>>()?;
    let mut files = Vec::new();
    for (s, o) in &outcomes {
        let path = out_dir.join(format!("trace_seed{s}.csv"));
        write_file(&path, &trace_csv(&o.trace))?;
        files.push(path);
    }
    let traces: Vec<&[TraceRecord]> = outcomes.iter().map(|(_, o)| o.trace.as_slice()).collect();
    let agg = aggregate(&traces);
    let path = out_dir.join("aggregate.csv");
    write_file(&path, &aggregate_csv(&agg))?;
    files.push(path);
    let mut header = prep.header.clone();
    let mut divergent = 0;
    for (s, o) in &outcomes {
        if let Some((k, why)) = &o.stopped {
            divergent += 1;
            header.push((format!("divergent.seed{s}"), format!("stopped at step {k}: {why}")));
        }
    }
    header.push(("divergent_seeds".into(), divergent.to_string()));
    let path = out_dir.join("header.csv");
    write_file(&path, &key_value_csv(&header)?)?;
    files.push(path);
    Ok(ExecSummary { outcomes, aggregate: agg, header, ledger: prep.ledger, files })
}

/// Reads a `key,value` header file back.
pub fn read_header(path: &Path) -> Result<Vec<(String, String)>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push((rec.get(0).unwrap_or_default().to_owned(), rec.get(1).unwrap_or_default().to_owned()));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Attack runs

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub name: String,
    pub output: Option<String>,
    pub instances: usize,
    pub d: usize,
    pub iters: usize,
    pub step: f64,
    pub init_scale: f64,
    /// `None` means the default reading of the noise (variance 0.005).
    pub noise_std: Option<f64>,
    pub seed: u64,
    pub curves: bool,
    /// Compressor on the wire for the compressed arm; `None` runs only the
    /// uncompressed arm.
    pub compressor: Option<CompressorKind>,
    pub compressor_bits: u32,
    pub privacy_q: f64,
    pub lambda: Option<f64>,
    pub alpha: Option<f64>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        let o = AttackOptions::default();
        Self {
            name: "attack".into(),
            output: None,
            instances: 20,
            d: 10,
            iters: o.iters,
            step: o.step,
            init_scale: o.init_scale,
            noise_std: None,
            seed: 0,
            curves: true,
            compressor: Some(CompressorKind::SignNormImproved),
            compressor_bits: 2,
            privacy_q: 0.2,
            lambda: None,
            alpha: None,
        }
    }
}

impl AttackConfig {
    pub fn set(&mut self, key: &str, v: &Value) -> Result<(), HarnessError> {
        match key {
            "name" => self.name = get_str(key, v)?,
            "output" => self.output = Some(get_str(key, v)?),
            "attack.instances" => self.instances = get_usize(key, v)?,
            "attack.d" => {
                self.d = get_usize(key, v)?;
                if self.d == 0 {
                    return Err(key_err(key, "must be >= 1"));
                }
            }
            "attack.iters" => self.iters = get_usize(key, v)?,
            "attack.step" => self.step = positive(key, get_f64(key, v)?)?,
            "attack.init_scale" => self.init_scale = nonneg(key, get_f64(key, v)?)?,
            "attack.noise_std" => self.noise_std = Some(nonneg(key, get_f64(key, v)?)?),
            "attack.seed" => self.seed = get_u64(key, v)?,
            "attack.curves" => self.curves = get_bool(key, v)?,
            "compressor.kind" => {
                let k = get_str(key, v)?;
                self.compressor = if k == "none" {
                    None
                } else {
                    Some(CompressorKind::parse(&k, self.compressor_bits).map_err(|e| key_err(key, e.to_string()))?)
                };
            }
            "compressor.bits" => {
                let b = u32::try_from(get_usize(key, v)?).map_err(|_| key_err(key, "too large"))?;
                if !(1..=30).contains(&b) {
                    return Err(key_err(key, format!("must be in 1..=30, got {b}")));
                }
                self.compressor_bits = b;
                self.compressor = match self.compressor {
                    Some(CompressorKind::Quantizer { .. }) => Some(CompressorKind::Quantizer { bits: b }),
                    Some(CompressorKind::QuantizerImproved { .. }) => Some(CompressorKind::QuantizerImproved { bits: b }),
                    other => other,
                };
            }
            "compressor.privacy_q" => {
                let q = get_f64(key, v)?;
                if !(0.0..=1.0).contains(&q) {
                    return Err(key_err(key, format!("must lie in [0, 1], got {q}")));
                }
                self.privacy_q = q;
            }
            "problem.lambda" => self.lambda = Some(nonneg(key, get_f64(key, v)?)?),
            "problem.alpha" => self.alpha = Some(positive(key, get_f64(key, v)?)?),
            _ => return Err(HarnessError::UnknownKey(key.to_owned())),
        }
        Ok(())
    }

    pub fn spec(&self) -> Option<CompressorSpec> {
        self.compressor.map(|k| CompressorSpec::new(k).with_privacy(self.privacy_q))
    }
}

pub fn parse_attack_config(text: &str) -> Result<AttackConfig, HarnessError> {
    let mut cfg = AttackConfig::default();
    for (k, v) in flat_entries(text)? {
        cfg.set(&k, &v)?;
    }
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    pub instance: usize,
    pub label: f64,
    pub z_norm: f64,
    pub margin: f64,
    pub e_plain: f64,
    pub e_compressed: Option<f64>,
    pub suppressed: bool,
    pub bits_plain: u64,
    pub bits_compressed: Option<u64>,
}

pub struct AttackSummary {
    pub rows: Vec<AttackRow>,
    pub plain_curves: Vec<Vec<f64>>,
    pub compressed_curves: Vec<Vec<f64>>,
    pub header: Vec<(String, String)>,
}

fn constant_curve(e: f64, iters: usize) -> AttackResult {
    AttackResult { z_hat: Vec::new(), error_curve: vec![e; iters.max(1)], loss_curve: vec![f64::NAN; iters.max(1)], matched_loss: f64::NAN, failure: None }
}

/// Generates the victims and attacks each one, without writing files.
pub fn run_attack(cfg: &AttackConfig) -> Result<AttackSummary, HarnessError> {
    let lambda = cfg.lambda.unwrap_or(LogisticProblem::DEFAULT_LAMBDA);
    let alpha = cfg.alpha.unwrap_or(LogisticProblem::DEFAULT_ALPHA);
    let noise = cfg.noise_std.unwrap_or(DEFAULT_NOISE_STD);
    let opts = AttackOptions { iters: cfg.iters, step: cfg.step, init_scale: cfg.init_scale };
    let spec = cfg.spec();
    if let Some(s) = &spec {
        s.validate()?;
    }
    let victims = attack_instances(cfg.instances, cfg.d, &mut stream(cfg.seed, 0, 0, Purpose::Attack));
    let results: Vec<(AttackRow, AttackResult, Option<AttackResult>)> = victims
        .par_iter()
        .enumerate()
        .map(|(i, v)| -> Result<_, HarnessError> {
            let victim = LogisticProblem::new(vec![vec![Sample { z: v.z.clone(), label: v.u }]], lambda, alpha)?;
            let obs = observe_gradient(&victim, 0, &v.x, noise, None, &mut stream(cfg.seed, i, 1, Purpose::Attack))?;
            let clean = remove_regularizer(&victim, &v.x, obs.value.as_deref().expect("uncompressed is never suppressed"));
            let plain = dlg_attack(&v.x, &clean, v.u, &v.z, &opts, &mut stream(cfg.seed, i, 2, Purpose::Attack))?;
            let mut row = AttackRow {
                instance: i,
                label: v.u,
                z_norm: crate::linalg::norm_sq(&v.z).sqrt(),
                margin: v.u * crate::linalg::dot(&v.x, &v.z),
                e_plain: plain.final_error(),
                e_compressed: None,
                suppressed: false,
                bits_plain: obs.bits,
                bits_compressed: None,
            };
            let compressed = match &spec {
                None => None,
                Some(s) => {
                    let obs = observe_gradient(&victim, 0, &v.x, noise, Some(s), &mut stream(cfg.seed, i, 1, Purpose::Attack))?;
                    row.bits_compressed = Some(obs.bits);
                    let res = match obs.value {
                        Some(val) => {
                            let clean = remove_regularizer(&victim, &v.x, &val);
                            dlg_attack(&v.x, &clean, v.u, &v.z, &opts, &mut stream(cfg.seed, i, 2, Purpose::Attack))?
                        }
                        None => {
                            row.suppressed = true;
                            let e = unobserved_error(&v.z, &opts, &mut stream(cfg.seed, i, 2, Purpose::Attack));
                            constant_curve(e, cfg.iters)
                        }
                    };
                    row.e_compressed = Some(res.final_error());
                    Some(res)
                }
            };
            Ok((row, plain, compressed))
        })
        .collect::<Result<_, _>>()?;
    let mut header = vec![
        ("version".to_owned(), VERSION.to_owned()),
        ("name".into(), cfg.name.clone()),
        ("attack.instances".into(), cfg.instances.to_string()),
        ("attack.d".into(), cfg.d.to_string()),
        ("attack.seed".into(), cfg.seed.to_string()),
        (
            "attack.optimizer".into(),
            format!(
                "gradient descent on |grad(z) - observed|^2 with halving backtracking, initial step {}, {} iterations, z0 ~ {} N(0, I); best iterate reported",
                cfg.step, cfg.iters, cfg.init_scale
            ),
        ),
        (
            "attack.instances_rule".into(),
            format!("x ~ 0.1 N(0, I); z uniform direction with norm in [0.5, 3]; label +-1 uniform; rejected when u x'z > {MAX_MARGIN}"),
        ),
        ("attack.observation".into(), "victim's full gradient at x plus noise, regularizer gradient removed by the attacker".into()),
        ("attack.noise_std".into(), noise.to_string()),
        ("problem.lambda".into(), lambda.to_string()),
        ("problem.alpha".into(), alpha.to_string()),
        ("compressor".into(), spec.map_or("none".into(), |s| s.to_string())),
    ];
    if cfg.noise_std.is_none() {
        header.push(("default.attack.noise_std".into(), format!("{DEFAULT_NOISE_STD} (reading N(0, 0.005) as variance; the std reading is 0.005)")));
    }
    if cfg.lambda.is_none() {
        header.push(("default.problem.lambda".into(), lambda.to_string()));
    }
    if cfg.alpha.is_none() {
        header.push(("default.problem.alpha".into(), alpha.to_string()));
    }
    if let Some(delta) = spec.and_then(|s| s.privacy_delta()) {
        header.push(("privacy.delta".into(), delta.to_string()));
    }
    let mut rows = Vec::new();
    let mut plain_curves = Vec::new();
    let mut compressed_curves = Vec::new();
    for (row, plain, comp) in results {
        rows.push(row);
        plain_curves.push(plain.error_curve);
        if let Some(c) = comp {
            compressed_curves.push(c.error_curve);
        }
    }
    Ok(AttackSummary { rows, plain_curves, compressed_curves, header })
}

fn mean_curve(curves: &[Vec<f64>], len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| {
            let vals: Vec<f64> = curves.iter().filter_map(|c| c.get(t).or(c.last()).copied()).collect();
            vals.iter().sum::<f64>() / vals.len().max(1) as f64
        })
        .collect()
}

/// Runs the attack and writes `attack_summary.csv`, `attack_header.csv`
/// and, with `attack.curves`, `attack_curves.csv`.
pub fn execute_attack(cfg: &AttackConfig, out_dir: &Path) -> Result<(AttackSummary, Vec<PathBuf>), HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let summary = run_attack(cfg)?;
    let mut files = Vec::new();
    let opt_f = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    let mut text = String::from("instance,label,z_norm,margin,E_plain,E_compressed,suppressed,bits_plain,bits_compressed\n");
    for r in &summary.rows {
        let _ = writeln!(
            text,
            "{},{},{:e},{:e},{:e},{},{},{},{}",
            r.instance,
            r.label,
            r.z_norm,
            r.margin,
            r.e_plain,
            opt_f(r.e_compressed),
            r.suppressed,
            r.bits_plain,
            r.bits_compressed.map(|b| b.to_string()).unwrap_or_default()
        );
    }
    let path = out_dir.join("attack_summary.csv");
    write_file(&path, &text)?;
    files.push(path);
    if cfg.curves {
        let len = summary.plain_curves.iter().chain(&summary.compressed_curves).map(Vec::len).max().unwrap_or(0);
        let plain = mean_curve(&summary.plain_curves, len);
        let comp = mean_curve(&summary.compressed_curves, len);
        let mut text = String::from("iteration,E_plain_mean,E_compressed_mean\n");
        for t in 0..len {
            let c = if summary.compressed_curves.is_empty() { String::new() } else { format!("{:e}", comp[t]) };
            let _ = writeln!(text, "{},{:e},{c}", t + 1, plain[t]);
        }
        let path = out_dir.join("attack_curves.csv");
        write_file(&path, &text)?;
        files.push(path);
    }
    let path = out_dir.join("attack_header.csv");
    write_file(&path, &key_value_csv(&summary.header)?)?;
    files.push(path);
    Ok((summary, files))
}
