//! Stochastic compressors, the privacy-enhancing suppression wrapper, bit
//! accounting and Monte-Carlo certification of the compressor class
//! `E|C(x)/r - x|^2 <= (1 - phi)|x|^2 + sigma_c`.

use std::fmt;

use rand::{Rng, SeedableRng};
use thiserror::Error;

/// Bits used for a full-precision float on the wire.
pub const FLOAT_BITS: u64 = 32;
/// Bits used for a stochastically rounded (integer) norm.
pub const ROUNDED_NORM_BITS: u64 = 16;
/// First norm value that no longer fits the rounded-norm field.
pub const ROUNDED_NORM_LIMIT: f64 = 65536.0;

#[derive(Debug, Error, PartialEq)]
pub enum CompressError {
    #[error("input vector is empty")]
    Empty,
    #[error("input coordinate {index} is not finite ({value})")]
    NonFinite { index: usize, value: f64 },
    #[error("stochastic rounding needs a finite non-negative value, got {0}")]
    NegativeOrNonFinite(f64),
    #[error("norm {0} does not fit the 16-bit rounded-norm field")]
    NormOverflow(f64),
    #[error("invalid compressor: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompressorKind {
    Identity,
    /// Biased `b`-bit quantizer with dithering.
    Quantizer { bits: u32 },
    /// `|x|_inf / 2 * sign(x)`.
    SignNorm,
    /// `b`-bit quantizer whose norm is sent as a stochastically rounded integer.
    QuantizerImproved { bits: u32 },
    /// Sign-norm compressor with a stochastically rounded norm.
    SignNormImproved,
    /// Always sends nothing.
    Zero,
}

impl CompressorKind {
    /// Parses a kind name; `bits` is used by the quantizers.
    pub fn parse(name: &str, bits: u32) -> Result<Self, CompressError> {
        let kind = match name.trim() {
            "identity" | "none" => Self::Identity,
            "quantizer_b" | "quantizer" | "c1" => Self::Quantizer { bits },
            "sign_norm" | "c2" => Self::SignNorm,
            "quantizer_b_improved" | "quantizer_improved" | "c3" => Self::QuantizerImproved { bits },
            "sign_norm_improved" | "c4" => Self::SignNormImproved,
            "zero" => Self::Zero,
            other => return Err(CompressError::InvalidSpec(format!("unknown compressor kind {other:?}"))),
        };
        if let Self::Quantizer { bits } | Self::QuantizerImproved { bits } = kind {
            if bits == 0 || bits > 30 {
                return Err(CompressError::InvalidSpec(format!("quantizer bits must be in 1..=30, got {bits}")));
            }
        }
        Ok(kind)
    }

    /// Name without parameters, as accepted by [`CompressorKind::parse`].
    pub fn name(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Quantizer { .. } => "quantizer_b",
            Self::SignNorm => "sign_norm",
            Self::QuantizerImproved { .. } => "quantizer_b_improved",
            Self::SignNormImproved => "sign_norm_improved",
            Self::Zero => "zero",
        }
    }

    pub fn bits_param(&self) -> Option<u32> {
        match self {
            Self::Quantizer { bits } | Self::QuantizerImproved { bits } => Some(*bits),
            _ => None,
        }
    }

    /// Payload size in bits for a `d`-dimensional message, before any
    /// suppression flag.
    pub fn payload_bits(&self, d: usize) -> u64 {
        let d = d as u64;
        match self {
            Self::Identity => FLOAT_BITS * d,
            Self::Quantizer { bits } => FLOAT_BITS + d * (*bits as u64 + 1),
            Self::QuantizerImproved { bits } => ROUNDED_NORM_BITS + d * (*bits as u64 + 1),
            Self::SignNorm => FLOAT_BITS + d,
            Self::SignNormImproved => ROUNDED_NORM_BITS + d,
            Self::Zero => 0,
        }
    }
}

impl fmt::Display for CompressorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bits_param() {
            Some(b) => write!(f, "{}({b})", self.name()),
            None => write!(f, "{}", self.name()),
        }
    }
}

/// A compressor plus its optional suppression wrapper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressorSpec {
    pub kind: CompressorKind,
    /// Probability of sending nothing; `0` disables the wrapper.
    pub privacy_q: f64,
    /// Scaling `r` of the compressor class; only used by certification
    /// and theory constants.
    pub scale_r: f64,
}

impl CompressorSpec {
    pub fn new(kind: CompressorKind) -> Self {
        Self { kind, privacy_q: 0.0, scale_r: 1.0 }
    }

    pub fn identity() -> Self {
        Self::new(CompressorKind::Identity)
    }

    pub fn with_privacy(mut self, q: f64) -> Self {
        self.privacy_q = q;
        self
    }

    pub fn with_scale(mut self, r: f64) -> Self {
        self.scale_r = r;
        self
    }

    pub fn validate(&self) -> Result<(), CompressError> {
        if !(0.0..=1.0).contains(&self.privacy_q) {
            return Err(CompressError::InvalidSpec(format!("privacy_q must lie in [0, 1], got {}", self.privacy_q)));
        }
        if !(self.scale_r.is_finite() && self.scale_r > 0.0) {
            return Err(CompressError::InvalidSpec(format!("scale_r must be positive, got {}", self.scale_r)));
        }
        if let Some(b) = self.kind.bits_param() {
            if b == 0 || b > 30 {
                return Err(CompressError::InvalidSpec(format!("quantizer bits must be in 1..=30, got {b}")));
            }
        }
        Ok(())
    }

    pub fn is_wrapped(&self) -> bool {
        self.privacy_q > 0.0
    }

    /// True for the uncompressed, unwrapped map `C(x) = x`.
    pub fn is_exact(&self) -> bool {
        self.kind == CompressorKind::Identity && !self.is_wrapped()
    }

    /// Differential-privacy `delta = 1 - q` of the wrapped compressor.
    pub fn privacy_delta(&self) -> Option<f64> {
        self.is_wrapped().then(|| 1.0 - self.privacy_q)
    }
}

impl fmt::Display for CompressorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.kind)?;
        if self.is_wrapped() {
            write!(f, "+suppress(q={})", self.privacy_q)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedMessage {
    /// Decompressed payload.
    pub payload: Vec<f64>,
    /// Exact encoded size.
    pub bits: u64,
    /// The suppression wrapper fired; payload is zero.
    pub suppressed: bool,
}

/// Size of one message, given whether it was suppressed.
pub fn message_bits(spec: &CompressorSpec, d: usize, suppressed: bool) -> u64 {
    match (spec.is_wrapped(), suppressed) {
        (_, true) => 1,
        (true, false) => 1 + spec.kind.payload_bits(d),
        (false, false) => spec.kind.payload_bits(d),
    }
}

/// Size of an unsuppressed message of dimension `d`.
pub fn bit_cost(spec: &CompressorSpec, d: usize) -> u64 {
    message_bits(spec, d, false)
}

/// Unbiased stochastic rounding: `floor(v) + 1` with probability
/// `v - floor(v)`, otherwise `floor(v)`.
pub fn phi_round<R: Rng + ?Sized>(v: f64, rng: &mut R) -> Result<u64, CompressError> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(CompressError::NegativeOrNonFinite(v));
    }
    let fl = v.floor();
    let frac = v - fl;
    let up = rng.random::<f64>() < frac;
    Ok(fl as u64 + u64::from(up))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn quantize<R: Rng + ?Sized>(x: &[f64], norm: f64, outer: f64, bits: u32, rng: &mut R) -> Vec<f64> {
    let d = x.len() as f64;
    let levels = f64::from(1u32 << (bits - 1));
    let xi = 1.0 + (d / (levels * levels)).min(d.sqrt() / levels);
    let scale = outer / xi / levels;
    x.iter()
        .map(|&xi_| {
            let u: f64 = rng.random();
            let level = (levels * xi_.abs() / norm + u).floor();
            scale * sign(xi_) * level
        })
        .collect()
}

/// Applies `spec` to `x`. The dithering vector and the suppression coin are
/// drawn from `rng`.
pub fn compress<R: Rng + ?Sized>(spec: &CompressorSpec, x: &[f64], rng: &mut R) -> Result<CompressedMessage, CompressError> {
    if x.is_empty() {
        return Err(CompressError::Empty);
    }
    if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(CompressError::NonFinite { index, value });
    }
    let d = x.len();
    if spec.is_wrapped() && rng.random::<f64>() < spec.privacy_q {
        return Ok(CompressedMessage { payload: vec![0.0; d], bits: 1, suppressed: true });
    }
    let bits = message_bits(spec, d, false);
    let two_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let inf_norm = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let payload = match spec.kind {
        CompressorKind::Identity => x.to_vec(),
        CompressorKind::Zero => vec![0.0; d],
        _ if two_norm == 0.0 => vec![0.0; d],
        CompressorKind::Quantizer { bits: b } => quantize(x, two_norm, two_norm, b, rng),
        CompressorKind::QuantizerImproved { bits: b } => {
            if two_norm >= ROUNDED_NORM_LIMIT {
                return Err(CompressError::NormOverflow(two_norm));
            }
            let rounded = phi_round(two_norm, rng)? as f64;
            quantize(x, two_norm, rounded, b, rng)
        }
        CompressorKind::SignNorm => x.iter().map(|&v| inf_norm / 2.0 * sign(v)).collect(),
        CompressorKind::SignNormImproved => {
            if inf_norm >= ROUNDED_NORM_LIMIT {
                return Err(CompressError::NormOverflow(inf_norm));
            }
            let rounded = phi_round(inf_norm, rng)? as f64;
            x.iter().map(|&v| rounded / 2.0 * sign(v)).collect()
        }
    };
    Ok(CompressedMessage { payload, bits, suppressed: false })
}

// ---------------------------------------------------------------------------
// Certification

#[derive(Debug, Error, PartialEq)]
pub enum CertifyError {
    #[error("certification needs at least 100 samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid certification domain: {0}")]
    Domain(String),
    #[error("no (phi, sigma_c) grid pair is feasible; worst error ratio {worst_ratio:.4} at |x|^2 = {worst_norm_sq:.4}, largest error {max_error:.4}")]
    Infeasible { worst_ratio: f64, worst_norm_sq: f64, max_error: f64 },
    #[error(transparent)]
    Compress(#[from] CompressError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub r: f64,
    pub domain_radius: f64,
    pub samples: usize,
    pub trials_per_sample: usize,
    /// Dimension of the sampled vectors.
    pub dim: usize,
    /// Monte-Carlo slack in standard errors of the per-sample mean.
    pub tolerance_z: f64,
    /// Draws the sample points from their own stream, so that two runs see
    /// the same domain points.
    pub domain_seed: Option<u64>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self { r: 1.0, domain_radius: 10.0, samples: 1000, trials_per_sample: 200, dim: 10, tolerance_z: 3.0, domain_seed: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub kind: String,
    pub r: f64,
    pub phi: f64,
    pub sigma_c: f64,
    /// Fraction of sampled points whose estimated error exceeds the bound
    /// at the reported pair, without Monte-Carlo slack.
    pub violation_rate: f64,
}

impl Certificate {
    pub const CSV_HEADER: &'static str = "kind,r,phi,sigma_c,violation_rate";

    /// `r0 = 2 r^2 (1 - phi) + 2 (1 - r)^2`.
    pub fn r0(&self) -> f64 {
        2.0 * self.r * self.r * (1.0 - self.phi) + 2.0 * (1.0 - self.r).powi(2)
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.kind, self.r, self.phi, self.sigma_c, self.violation_rate)
    }
}

/// Outcome of checking one fixed `(phi, sigma_c)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCheck {
    pub holds: bool,
    pub violation_rate: f64,
}

#[derive(Debug, Clone, Copy)]
struct ErrorSample {
    norm_sq: f64,
    mean_err: f64,
    stderr: f64,
}

fn validate_options(spec: &CompressorSpec, opts: &CertifyOptions) -> Result<(), CertifyError> {
    spec.validate()?;
    if opts.samples < 100 {
        return Err(CertifyError::TooFewSamples(opts.samples));
    }
    if !(opts.domain_radius.is_finite() && opts.domain_radius > 0.0) {
        return Err(CertifyError::Domain(format!("radius must be positive, got {}", opts.domain_radius)));
    }
    if !(opts.r.is_finite() && opts.r > 0.0) {
        return Err(CertifyError::Domain(format!("r must be positive, got {}", opts.r)));
    }
    if opts.dim == 0 || opts.trials_per_sample == 0 {
        return Err(CertifyError::Domain("dimension and trial count must be positive".into()));
    }
    if matches!(spec.kind, CompressorKind::QuantizerImproved { .. } | CompressorKind::SignNormImproved)
        && opts.domain_radius >= ROUNDED_NORM_LIMIT
    {
        return Err(CertifyError::Domain(format!(
            "radius {} reaches the 16-bit rounded-norm limit {ROUNDED_NORM_LIMIT}",
            opts.domain_radius
        )));
    }
    Ok(())
}

fn domain_points<R: Rng + ?Sized>(opts: &CertifyOptions, rng: &mut R) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    (0..opts.samples)
        .map(|s| {
            // direction uniform on the sphere, radius uniform on [0, R]; the
            // first point is the origin itself
            let radius = if s == 0 { 0.0 } else { opts.domain_radius * rng.random::<f64>() };
            loop {
                let x: Vec<f64> = (0..opts.dim).map(|_| StandardNormal.sample(rng)).collect();
                let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 1e-12 {
                    return x.iter().map(|v| v * radius / n).collect();
                }
            }
        })
        .collect()
}

fn sample_errors<R: Rng + ?Sized>(spec: &CompressorSpec, opts: &CertifyOptions, rng: &mut R) -> Result<Vec<ErrorSample>, CertifyError> {
    let points = match opts.domain_seed {
        Some(seed) => domain_points(opts, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed)),
        None => domain_points(opts, rng),
    };
    let mut out = Vec::with_capacity(opts.samples);
    for x in &points {
        let norm_sq = x.iter().map(|v| v * v).sum::<f64>();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..opts.trials_per_sample {
            let msg = compress(spec, x, rng)?;
            let e: f64 = msg.payload.iter().zip(x).map(|(c, xi)| (c / opts.r - xi).powi(2)).sum();
            sum += e;
            sum_sq += e * e;
        }
        let t = opts.trials_per_sample as f64;
        let mean_err = sum / t;
        let var = if opts.trials_per_sample > 1 { ((sum_sq - t * mean_err * mean_err) / (t - 1.0)).max(0.0) } else { 0.0 };
        out.push(ErrorSample { norm_sq, mean_err, stderr: (var / t).sqrt() });
    }
    Ok(out)
}

/// Largest `phi` admitted by all samples at a given `sigma`. A positive `z`
/// gives each estimate the benefit of the doubt; a negative one demands
/// that its upper confidence bound fit.
fn phi_bound(samples: &[ErrorSample], sigma: f64, z: f64) -> f64 {
    samples.iter().fold(1.0f64, |acc, s| {
        let room = s.norm_sq + sigma + z * s.stderr + 1e-12 * (1.0 + s.norm_sq) - s.mean_err;
        if s.norm_sq > 0.0 {
            acc.min(room / s.norm_sq)
        } else if room < 0.0 {
            f64::NEG_INFINITY
        } else {
            acc
        }
    })
}

fn violation_rate(samples: &[ErrorSample], phi: f64, sigma: f64) -> f64 {
    let v = samples.iter().filter(|s| s.mean_err > (1.0 - phi) * s.norm_sq + sigma).count();
    v as f64 / samples.len() as f64
}

/// The `phi` grid `{0.01, 0.02, ..., 1}`.
pub fn phi_grid() -> impl Iterator<Item = f64> {
    (1..=100).map(|j| j as f64 / 100.0)
}

/// The `sigma_c` grid: zero, then geometric with twenty points per decade
/// spanning `[1e-8, 1e3 * max(1, R^2)]`.
pub fn sigma_grid(domain_radius: f64) -> Vec<f64> {
    let top = 1e3 * domain_radius.powi(2).max(1.0);
    let mut g = vec![0.0];
    let mut k = 0;
    loop {
        let s = 10f64.powf(-8.0 + k as f64 / 20.0);
        g.push(s);
        if s > top {
            break;
        }
        k += 1;
    }
    g
}

/// Estimates the tightest grid certificate `(phi, sigma_c)` for `spec`:
/// smallest feasible `sigma_c`, then the largest `phi` at that `sigma_c`.
/// A pair is feasible when the bound covers every sample's mean error plus
/// `tolerance_z` standard errors.
pub fn certify<R: Rng + ?Sized>(spec: &CompressorSpec, opts: &CertifyOptions, rng: &mut R) -> Result<Certificate, CertifyError> {
    validate_options(spec, opts)?;
    let samples = sample_errors(spec, opts, rng)?;
    for sigma in sigma_grid(opts.domain_radius) {
        let bound = phi_bound(&samples, sigma, -opts.tolerance_z);
        if let Some(phi) = phi_grid().filter(|&p| p <= bound).last() {
            return Ok(Certificate {
                kind: spec.to_string(),
                r: opts.r,
                phi,
                sigma_c: sigma,
                violation_rate: violation_rate(&samples, phi, sigma),
            });
        }
    }
    let worst = samples
        .iter()
        .filter(|s| s.norm_sq > 0.0)
        .max_by(|a, b| (a.mean_err / a.norm_sq).total_cmp(&(b.mean_err / b.norm_sq)))
        .copied()
        .unwrap_or(samples[0]);
    Err(CertifyError::Infeasible {
        worst_ratio: worst.mean_err / worst.norm_sq.max(f64::MIN_POSITIVE),
        worst_norm_sq: worst.norm_sq,
        max_error: samples.iter().map(|s| s.mean_err).fold(0.0, f64::max),
    })
}

/// Checks whether a given `(phi, sigma_c)` pair holds on fresh samples: it
/// fails only when some sample's mean error exceeds the bound by more than
/// `tolerance_z` standard errors.
pub fn check_pair<R: Rng + ?Sized>(
    spec: &CompressorSpec,
    opts: &CertifyOptions,
    phi: f64,
    sigma_c: f64,
    rng: &mut R,
) -> Result<PairCheck, CertifyError> {
    validate_options(spec, opts)?;
    let samples = sample_errors(spec, opts, rng)?;
    let holds = phi_bound(&samples, sigma_c, opts.tolerance_z) >= phi;
    Ok(PairCheck { holds, violation_rate: violation_rate(&samples, phi, sigma_c) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn sign_norm_formula() {
        let spec = CompressorSpec::new(CompressorKind::SignNorm);
        let m = compress(&spec, &[3.0, -4.0], &mut rng(1)).unwrap();
        assert_eq!(m.payload, vec![2.0, -2.0]);
        assert_eq!(m.bits, 32 + 2);
        assert!(!m.suppressed);
    }

    #[test]
    fn quantizer_on_constant_vector_is_deterministic() {
        let spec = CompressorSpec::new(CompressorKind::Quantizer { bits: 2 });
        let mut r = rng(2);
        for _ in 0..200 {
            let m = compress(&spec, &[1.0; 4], &mut r).unwrap();
            assert_eq!(m.payload, vec![0.5; 4]);
        }
    }

    #[test]
    fn full_suppression() {
        for kind in [
            CompressorKind::Identity,
            CompressorKind::SignNorm,
            CompressorKind::Quantizer { bits: 3 },
            CompressorKind::SignNormImproved,
        ] {
            let spec = CompressorSpec::new(kind).with_privacy(1.0);
            let m = compress(&spec, &[0.3, -7.0, 2.0], &mut rng(3)).unwrap();
            assert!(m.suppressed);
            assert_eq!(m.payload, vec![0.0; 3]);
            assert_eq!(m.bits, 1);
        }
    }

    #[test]
    fn zero_input_never_divides() {
        for kind in [
            CompressorKind::Quantizer { bits: 2 },
            CompressorKind::QuantizerImproved { bits: 2 },
            CompressorKind::SignNorm,
            CompressorKind::SignNormImproved,
        ] {
            let m = compress(&CompressorSpec::new(kind), &[0.0; 5], &mut rng(4)).unwrap();
            assert_eq!(m.payload, vec![0.0; 5]);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let spec = CompressorSpec::identity();
        assert_eq!(compress(&spec, &[], &mut rng(0)), Err(CompressError::Empty));
        assert!(matches!(
            compress(&spec, &[1.0, f64::NAN], &mut rng(0)),
            Err(CompressError::NonFinite { index: 1, .. })
        ));
        let improved = CompressorSpec::new(CompressorKind::SignNormImproved);
        assert!(matches!(compress(&improved, &[7e4], &mut rng(0)), Err(CompressError::NormOverflow(_))));
    }

    #[test]
    fn phi_round_cases() {
        let mut r = rng(5);
        for _ in 0..1000 {
            assert_eq!(phi_round(2.0, &mut r).unwrap(), 2);
            assert_eq!(phi_round(0.0, &mut r).unwrap(), 0);
        }
        assert!(phi_round(-0.5, &mut r).is_err());
        assert!(phi_round(f64::INFINITY, &mut r).is_err());
    }

    #[test]
    fn phi_round_mean() {
        // Monte-Carlo oracle: 10^6 draws, tolerance 0.005
        let mut r = rng(6);
        let n = 1_000_000;
        let total: u64 = (0..n).map(|_| phi_round(2.3, &mut r).unwrap()).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 2.3).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn bit_table() {
        let d9 = |k| bit_cost(&CompressorSpec::new(k), 9);
        assert_eq!(d9(CompressorKind::SignNorm), 41);
        assert_eq!(d9(CompressorKind::Quantizer { bits: 2 }), 59);
        assert_eq!(d9(CompressorKind::QuantizerImproved { bits: 2 }), 43);
        assert_eq!(d9(CompressorKind::SignNormImproved), 25);
        assert_eq!(d9(CompressorKind::Zero), 0);
        assert_eq!(bit_cost(&CompressorSpec::identity(), 30), 960);
        let wrapped = CompressorSpec::new(CompressorKind::SignNorm).with_privacy(0.2);
        assert_eq!(bit_cost(&wrapped, 9), 42);
        assert_eq!(message_bits(&wrapped, 9, true), 1);
    }

    #[test]
    fn identity_certificate_is_exact() {
        let c = certify(&CompressorSpec::identity(), &CertifyOptions { samples: 100, trials_per_sample: 2, ..Default::default() }, &mut rng(7)).unwrap();
        assert_eq!((c.phi, c.sigma_c, c.violation_rate), (1.0, 0.0, 0.0));
        assert_eq!(c.r0(), 0.0);
    }

    #[test]
    fn zero_certificate_sits_on_sigma_equals_phi_radius_sq() {
        let opts = CertifyOptions { domain_radius: 1.0, samples: 400, trials_per_sample: 1, ..Default::default() };
        let c = certify(&CompressorSpec::new(CompressorKind::Zero), &opts, &mut rng(8)).unwrap();
        // phi |x|^2 <= sigma on the unit ball; the smallest grid sigma admits phi = 0.01
        assert_eq!(c.phi, 0.01);
        assert!(c.sigma_c >= 0.01 * 0.95 && c.sigma_c < 0.01 * 1.13, "sigma {}", c.sigma_c);
    }

    #[test]
    fn sign_norm_error_at_ones() {
        // |C(x) - x|^2 = 2 * 0.5^2 = 0.5 = 0.25 |x|^2 for x = (1, 1)
        let spec = CompressorSpec::new(CompressorKind::SignNorm);
        let m = compress(&spec, &[1.0, 1.0], &mut rng(9)).unwrap();
        let e: f64 = m.payload.iter().map(|c| (c - 1.0).powi(2)).sum();
        assert_eq!(e, 0.5);
    }

    #[test]
    fn certify_rejects_bad_domains() {
        let spec = CompressorSpec::new(CompressorKind::SignNormImproved);
        let small = CertifyOptions { samples: 50, ..Default::default() };
        assert_eq!(certify(&spec, &small, &mut rng(0)), Err(CertifyError::TooFewSamples(50)));
        let huge = CertifyOptions { domain_radius: 70_000.0, ..Default::default() };
        assert!(matches!(certify(&spec, &huge, &mut rng(0)), Err(CertifyError::Domain(_))));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [
            CompressorKind::Identity,
            CompressorKind::Quantizer { bits: 2 },
            CompressorKind::SignNorm,
            CompressorKind::QuantizerImproved { bits: 4 },
            CompressorKind::SignNormImproved,
            CompressorKind::Zero,
        ] {
            assert_eq!(CompressorKind::parse(k.name(), k.bits_param().unwrap_or(2)).unwrap(), k);
        }
        assert!(CompressorKind::parse("topk", 2).is_err());
    }
}
