//! Constant ledgers behind the convergence theorems, evaluated numerically
//! as feasibility checks, and a coordinate search for feasible parameters.

use std::fmt::Write as _;

use thiserror::Error;

use crate::algorithms::{Regime, ScheduleParams};
use crate::compress::Certificate;
use crate::topology::SpectralBounds;

#[derive(Debug, Error, PartialEq)]
pub enum TheoryError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error("no feasible parameters found; binding constraint: {binding}")]
    SearchFailed { binding: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    pub l_f: f64,
    pub lambda_min_pos: f64,
    pub lambda_max: f64,
    /// `alpha_x * r * phi`.
    pub phi1: f64,
    /// `2 r^2 (1 - phi) + 2 (1 - r)^2`.
    pub r0: f64,
    pub sigma_sq: f64,
    pub nu: Option<f64>,
    pub r: f64,
}

impl ProblemConstants {
    pub fn from_parts(l_f: f64, bounds: SpectralBounds, cert: &Certificate, alpha_x: f64, sigma_sq: f64, nu: Option<f64>) -> Self {
        Self {
            l_f,
            lambda_min_pos: bounds.lambda_min_pos,
            lambda_max: bounds.lambda_max,
            phi1: alpha_x * cert.r * cert.phi,
            r0: cert.r0(),
            sigma_sq,
            nu,
            r: cert.r,
        }
    }

    fn validate(&self) -> Result<(), TheoryError> {
        let pos = [("L_f", self.l_f), ("lambda_min_pos", self.lambda_min_pos), ("lambda_max", self.lambda_max), ("r", self.r)];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TheoryError::Input(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.phi1 > 0.0 && self.phi1 <= 1.0) {
            return Err(TheoryError::Input(format!("phi1 must lie in (0, 1], got {}", self.phi1)));
        }
        if !(self.r0 >= 0.0 && self.sigma_sq >= 0.0) {
            return Err(TheoryError::Input("r0 and sigma_sq must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantLedger {
    pub entries: Vec<(String, f64)>,
    pub violated: Vec<String>,
    pub feasible: bool,
}

impl ConstantLedger {
    pub fn get(&self, symbol: &str) -> Option<f64> {
        self.entries.iter().find(|(s, _)| s == symbol).map(|&(_, v)| v)
    }

    /// Two-column `symbol value` listing followed by the verdict.
    pub fn report(&self) -> String {
        let mut out = String::new();
        for (s, v) in &self.entries {
            let _ = writeln!(out, "{s:<14} {v:.10e}");
        }
        let _ = writeln!(out, "{:<14} {}", "feasible", self.feasible);
        for v in &self.violated {
            let _ = writeln!(out, "{:<14} {v}", "violated");
        }
        out
    }
}

struct Builder {
    entries: Vec<(String, f64)>,
    violated: Vec<String>,
}

impl Builder {
    fn new() -> Self {
        Self { entries: Vec::new(), violated: Vec::new() }
    }

    fn put(&mut self, s: &str, v: f64) -> f64 {
        self.entries.push((s.to_owned(), v));
        v
    }

    /// Records `name` as violated unless `ok` (NaN comparisons count as violations).
    fn require(&mut self, ok: bool, name: &str) {
        if !ok {
            self.violated.push(name.to_owned());
        }
    }

    fn finish(self) -> ConstantLedger {
        let feasible = self.violated.is_empty();
        ConstantLedger { entries: self.entries, violated: self.violated, feasible }
    }
}

/// Positive root of `c x^2 + b x - a = 0`, written as `2a / (sqrt(b^2 + 4ac) + b)`
/// so that `c = 0` is handled.
fn positive_root(a: f64, b: f64, c: f64) -> f64 {
    2.0 * a / ((b * b + 4.0 * a * c).sqrt() + b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Input {
    pub beta1: f64,
    pub beta2: f64,
    pub beta5: f64,
    pub omega: f64,
    pub eta: f64,
    pub alpha_x: f64,
}

pub const DEFAULT_BETA5: f64 = 1.0;
pub const DEFAULT_C_TILDE: f64 = 0.5;

pub fn ledger_theorem1(pc: &ProblemConstants, p: &Theorem1Input) -> Result<ConstantLedger, TheoryError> {
    pc.validate()?;
    for (name, v) in [("beta1", p.beta1), ("beta2", p.beta2), ("beta5", p.beta5), ("omega", p.omega), ("eta", p.eta), ("alpha_x", p.alpha_x)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(TheoryError::Input(format!("{name} must be positive and finite, got {v}")));
        }
    }
    let (lf, ll, lu, phi1, r0, r) = (pc.l_f, pc.lambda_min_pos, pc.lambda_max, pc.phi1, pc.r0, pc.r);
    let (b1, b2, b5, w, eta) = (p.beta1, p.beta2, p.beta5, p.omega, p.eta);
    let g = b1 * w;
    let lf2 = lf * lf;
    let mut b = Builder::new();
    b.put("phi1", phi1);
    b.put("r0", r0);
    b.put("gamma", g);
    b.put("eps1", g / 2.0 * ll - ((w + 4.0) / 4.0 + 1.25 * lf2));
    b.put("eps2", (7.0 + 16.0 / phi1) * lf2 + (4.0 + 8.0 / phi1) * g * g * lu * lu);
    b.put("eps3", 0.5 + w * w + 1.5 * g * g * lu * lu);
    let e4 = b.put("eps4", (3.0 * w - 1.0) / 4.0 - 3.0 / ll);
    let e5 = b.put("eps5", 2.0 * w * w * lu + 1.0 / ll + (4.0 + 8.0 / phi1) * w * w * ll);
    let w2 = w * w;
    let e6 = b.put("eps6", 0.125 - (2.0 * (1.0 + b1).powi(2) / (w2 * ll) + 1.0 / (w2 * ll * ll)) * lf2);
    let e7 = b.put("eps7", ((1.0 + b1) / (w2 * ll) + 1.0 / (w2 * ll * ll) + 1.5) * lf2 + lf);
    b.put(
        "eps8",
        (2.0 * (1.0 + b1).powi(2) / (eta * w2 * ll) + (1.0 + b1) / (w2 * ll) + (1.0 + eta) / (eta * w2 * ll * ll) + 1.5) * lf2 + lf,
    );
    b.put("eps9", 11.0 + 16.0 / phi1);
    let e10 = b.put("eps10", phi1 / 2.0 + phi1 * phi1 / 2.0);
    let e11 = b.put("eps11", 0.5 * (g + 2.0 * w) * lu * r0 + 2.0 * w * r0);
    let e12 = b.put("eps12", (8.0 + 7.0 * phi1) * g * g * lu * lu * r0 / phi1 + (1.0 + 2.0 * w2) * r0);
    let r2 = r * r;
    b.put(
        "eps13",
        (b1 * b2 + 6.0 * b2) * lu * r2 + (14.0 * b1 * b1 * b2 * b2 * lu * lu * r2 + 2.0 * eta * eta + 4.0 * b1 * b1 * b2 * b2) + 1.0,
    );
    let et1 = b.put("eps1_tilde", g / 2.0 * ll - ((9.0 * w + 4.0) / 4.0 + 1.25 * lf2));
    let et2 = b.put(
        "eps2_tilde",
        (7.0 + 16.0 / phi1) * lf2 + (4.0 + 8.0 / phi1) * g * g * lu * lu + 1.0 + 2.0 * w2 + 3.0 * g * g * lu * lu,
    );
    let b4 = b.put("beta4", (et1 / et2).min(e4 / e5).min(e6 / e7).min(positive_root(e10, e11, e12)).min(1.0));
    b.put("beta5", b5);
    let b6 = b.put("beta6", (16.0 * (1.0 + b1).powi(2) / ll + 8.0 / (ll * ll)) * lf2);
    let b3 = b.put(
        "beta3",
        ((4.0 + 5.0 * lf2) / b5).max((12.0 / ll + 1.0) / 3.0).max(b6.sqrt()).max(b2 / b4).max(4.0 * b2 * lf),
    );
    b.put("c1_check", (g * ll - w) / (2.0 * g * ll));
    let c0 = b.put("c0", ((9.0 + b5) / (2.0 * ll)).max(1.0));
    b.put(
        "c1",
        (2.0 * (1.0 + b1).powi(2) / (b2 * b3 * ll) + (1.0 + b1) / (b3 * b3 * ll) + 1.0 / (b2 * b3 * ll * ll) + 1.0 / (b3 * b3 * ll * ll) + 1.5)
            * lf2
            + lf,
    );
    b.put("c2", eta * et1 - eta * eta * et2);

    b.require(b1 > c0, "beta1 > c0");
    b.require(w > b3, "omega > beta3");
    b.require(eta < b4, "eta < beta4");
    b.require(et1 > 0.0, "eps1_tilde > 0");
    b.require(e4 > 0.0, "eps4 > 0");
    b.require(e6 > 0.0, "eps6 > 0");
    b.require(e10 - eta * e11 - eta * eta * e12 > 0.0, "eps10 - eta*eps11 - eta^2*eps12 > 0");
    b.require(p.alpha_x * r < 1.0, "alpha_x*r < 1");
    Ok(b.finish())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem3Input {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub t1: f64,
    pub c_tilde: f64,
    pub h0: Option<f64>,
    /// Bound on the compressor's absolute error term; 0 when unknown.
    pub sigma_bar: f64,
    pub n: usize,
}

/// Admissible `beta0` range `[c_tilde nu beta2 / 4, nu beta2 / 4)`.
pub fn theorem3_beta0_interval(nu: f64, beta2: f64, c_tilde: f64) -> (f64, f64) {
    (c_tilde * nu * beta2 / 4.0, nu * beta2 / 4.0)
}

pub fn ledger_theorem3(pc: &ProblemConstants, p: &Theorem3Input) -> Result<ConstantLedger, TheoryError> {
    pc.validate()?;
    let nu = pc.nu.ok_or_else(|| TheoryError::Input("the P-L constant nu is required".into()))?;
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(TheoryError::Input(format!("nu must be positive, got {nu}")));
    }
    for (name, v) in [("beta0", p.beta0), ("beta1", p.beta1), ("beta2", p.beta2), ("t1", p.t1)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(TheoryError::Input(format!("{name} must be positive and finite, got {v}")));
        }
    }
    if !(p.c_tilde > 0.0 && p.c_tilde < 1.0) {
        return Err(TheoryError::Input(format!("c_tilde must lie in (0, 1), got {}", p.c_tilde)));
    }
    if p.n == 0 {
        return Err(TheoryError::Input("n must be positive".into()));
    }
    let (lf, ll, lu, phi1, r0, r) = (pc.l_f, pc.lambda_min_pos, pc.lambda_max, pc.phi1, pc.r0, pc.r);
    let (b0, b1, b2, t1) = (p.beta0, p.beta1, p.beta2, p.t1);
    let (lf2, lu2, r2) = (lf * lf, lu * lu, r * r);
    let bt = b0 * t1;
    // step-0 quantities
    let w0 = bt;
    let eta0 = b2 / w0;
    let bk = 1.0 / (b0 * t1 * (t1 + 1.0));
    let s = lu + 1.0 / ll + (4.0 + 8.0 / phi1) * ll;

    let mut b = Builder::new();
    b.put("phi1", phi1);
    b.put("r0", r0);
    b.put("nu", nu);
    let m1 = b.put("m1", (b1 * ll / 2.0 - 9.0 / 4.0) - 1.0);
    let m2 = b.put("m2", (12.0 + 16.0 / phi1) + (4.0 + 8.0 / phi1) * b1 * b1 * lu2 + 1.0 + 2.0 + 3.0 * b1 * b1 * lu2);
    let m3 = b.put("m3", b1 * ll / 4.0 - 1.0);
    let m4 = b.put("m4", 4.0 + (3.0 * b1 * b1 + 1.0 + b1) * lu);
    let m5 = b.put("m5", b2 / 4.0 - b2 * b2 * s);
    b.put(
        "m6",
        4.0 * eta0 * lf2 * (1.0 / (2.0 * ll) * (bk + bk * b1 + bk * bk + bk * bk * b1) + bk / 2.0)
            + eta0 * lf2 * bk * (b1 * b1 + 2.0 * ((1.0 + b1).powi(2) / (eta0 * w0 * w0) + (1.0 + b1) / (2.0 * w0 * w0)) / ll + 1.0),
    );
    let m7 = b.put("m7", phi1 / 2.0 + phi1 * phi1 / 2.0);
    let m8 = b.put("m8", (b1 + 2.0) * lu * r0 + 2.0 * r0 + b1 / 4.0 * lu * r0);
    let m9 = b.put("m9", (8.0 + 21.0 * phi1) * b1 * b1 * lu2 * r0 / phi1 + (4.0 + 2.0 * (1.0 + b1) * lu) * r0);
    let m10 = b.put("m10", 1.5 * b2 * b2 * lu + b2 / 4.0 + 0.5 + b1 / 4.0 - 2.0 * b1 * b2);
    let m11 = b.put(
        "m11",
        b2 * lf2 * (2.0 / ll * (2.0 + 2.0 * b1) + b1 * b1 + 2.0 * ((1.0 + b1).powi(2) / b2 + (1.0 + b1) / 2.0) / ll + 3.0),
    );
    let m12 = b.put(
        "m12",
        (2.0 * (1.0 + b1).powi(2) / (b2 * bt * ll) + (1.0 + b1) / (bt * bt * ll) + 1.0 / (b2 * bt * ll * ll) + 1.0 / (bt * bt * ll * ll) + 1.5)
            * lf2
            + lf
            + 4.0 * lf2 / bt * ((2.0 + 2.0 * b1) / ll + 0.5)
            + lf2 / bt * (b1 * b1 + 2.0 * ((1.0 + b1).powi(2) / (b2 * bt) + (1.0 + b1) / (2.0 * bt * bt)) / ll + 1.0),
    );
    b.put("m13", 11.0 + 16.0 / phi1 + 2.0);
    b.put("m14", (2.0 + 2.0 * b1) / ll + 1.0);
    b.put(
        "m15",
        b2 * (6.0 + b1) * lu * r2 + 14.0 * b1 * b1 * b2 * b2 * lu2 * r2 + 2.0 * b2 * b2 / (b0 * b0) + 4.0 * b2 * b2 + 1.0
            + r2 * ((2.5 * b2 + b1 * b2) * lu + ((b2 * b2 + b1 * b2 * b2) * lu / 2.0 + 0.75 * b1 * b1 * b2 * b2 * lu2 + b2 * b2 / (b0 * b0))),
    );
    b.put("m16", ((1.0 + b1) / (bt * bt * ll) + 1.0 / (bt * bt * ll * ll) + 1.5) * lf2 + lf + m11 / (b2 * bt));
    let m17 = b.put("m17", (2.0 + 2.0 * b1) / (b2 * b2 * ll) + 1.0 / (b2 * b2));
    b.put("m18", (m11 / p.n as f64 + m12) * pc.sigma_sq + m17 * p.sigma_bar);
    let c3 = b.put(
        "cbar3",
        (1.0 + 1.25 * lf2)
            .max(4.0 / (3.0 * ll))
            .max(4.0 * lf * (4.0 * (1.0 + b1) / ll + 2.0 / (ll * ll)).sqrt())
            .max(4.0 * b2 * lf),
    );
    let c4 = b.put("cbar4", m1 * b2 - m2 * b2 * b2);
    let beta8 = b.put("beta8", (0.5 + b1).max((b1 * ll + 1.0) / (2.0 * b1 * ll)));
    b.put("m19", (c4 / eta0).min(m5 / (2.0 * eta0)).min(m7 / (2.0 * eta0)).min(nu / 4.0) / beta8);
    let c0 = b.put("cbar0", (2.0 * m10 / m5).max(16.0 * m11));
    let c1 = b.put("cbar1", 9.0 / (2.0 * ll) + 1.0);
    let c2 = b.put(
        "cbar2",
        (m1 / m2)
            .min(m3 / m4)
            .min(positive_root(m7 / 2.0, m8, m9 / 2.0))
            .min(1.0 / (4.0 * s))
            .min(1.0 / (((1.0 + b1) / (32.0 * ll) + 1.0 / (32.0 * ll * ll) + 3.0 / 64.0) * lf2 + 32.0 * lf)),
    );
    let c5 = b.put(
        "cbar5",
        (c0 / b0).max(8.0 * lf / (nu * b2) * ((2.0 + 2.0 * b1) / ll + 1.0)).max(c3 / b0).max(2.0),
    );
    let (lo, hi) = theorem3_beta0_interval(nu, b2, p.c_tilde);
    b.put("beta0_lo", lo);
    b.put("beta0_hi", hi);

    b.require(b1 > c1, "beta1 > cbar1");
    b.require(b2 > 0.0 && b2 < c2, "0 < beta2 < cbar2");
    b.require(t1 > c5, "t1 > cbar5");
    b.require(b0 >= lo && b0 < hi, "beta0 in [c_tilde*nu*beta2/4, nu*beta2/4)");
    if let Some(h0) = p.h0 {
        b.require(h0 > 0.0 && h0 < 1.0 / t1, "h0 < 1/t1");
    }
    Ok(b.finish())
}

const BETA1_CAP: f64 = 1e8;
const SEARCH_BUDGET: usize = 400;

/// Coordinate search for ledger-feasible schedule parameters. `alpha_x`
/// is taken as given (it enters through `pc.phi1`).
pub fn suggest_params(pc: &ProblemConstants, regime: Regime, alpha_x: f64, n: usize, horizon: usize) -> Result<ScheduleParams, TheoryError> {
    pc.validate()?;
    match regime {
        Regime::Theorem1 | Regime::Theorem1Speedup | Regime::Theorem2 => suggest_theorem1(pc, regime, alpha_x, n, horizon),
        Regime::Theorem3 => suggest_theorem3(pc, alpha_x, n),
        other => Err(TheoryError::Input(format!("no ledger search for regime {other}"))),
    }
}

fn suggest_theorem1(pc: &ProblemConstants, regime: Regime, alpha_x: f64, n: usize, horizon: usize) -> Result<ScheduleParams, TheoryError> {
    if alpha_x * pc.r >= 1.0 {
        return Err(TheoryError::SearchFailed { binding: "alpha_x*r < 1".into() });
    }
    if n == 0 || (regime != Regime::Theorem1 && horizon == 0) {
        return Err(TheoryError::Input("n and the horizon T must be positive".into()));
    }
    let beta5 = DEFAULT_BETA5;
    let c0 = ((9.0 + beta5) / (2.0 * pc.lambda_min_pos)).max(1.0);
    if !(c0.is_finite() && c0 * 1.05 < BETA1_CAP) {
        return Err(TheoryError::SearchFailed { binding: "beta1 > c0".into() });
    }
    let mut beta1 = 1.05 * c0;
    let mut beta2 = 1.0;
    let mut omega = 1.0f64;
    let mut theta = 0.5;
    let (tn, nn) = (horizon as f64, n as f64);
    let mut last = String::from("beta1 > c0");
    for _ in 0..SEARCH_BUDGET {
        // derived quantities per regime
        match regime {
            Regime::Theorem1Speedup => beta2 = omega * nn.sqrt() / tn.sqrt(),
            Regime::Theorem2 => beta2 = omega / (tn + 1.0).powf(theta),
            _ => {}
        }
        let eta = beta2 / omega;
        let input = Theorem1Input { beta1, beta2, beta5, omega, eta, alpha_x };
        let led = ledger_theorem1(pc, &input)?;
        if regime == Regime::Theorem2 && beta2 >= 1.0 {
            if theta < 0.99 {
                theta = (theta + 0.05).min(0.99);
                continue;
            }
            return Err(TheoryError::SearchFailed { binding: "0 < beta2 < 1".into() });
        }
        if led.feasible {
            let mut p = ScheduleParams { beta1: Some(beta1), beta2: Some(beta2), beta5: Some(beta5), alpha_x: Some(alpha_x), ..Default::default() };
            match regime {
                Regime::Theorem1 => p.omega = Some(omega),
                Regime::Theorem1Speedup => {
                    p.horizon = Some(horizon);
                    p.n = Some(n);
                }
                _ => {
                    p.horizon = Some(horizon);
                    p.theta = Some(theta);
                }
            }
            p.h0 = Some(if regime == Regime::Theorem2 { 0.25 } else { 0.5 });
            return Ok(p);
        }
        last.clone_from(&led.violated[0]);
        let has = |s: &str| led.violated.iter().any(|v| v == s);
        if has("beta1 > c0") || has("eps1_tilde > 0") {
            beta1 *= 1.5;
            if beta1 > BETA1_CAP {
                return Err(TheoryError::SearchFailed { binding: last });
            }
        } else if has("omega > beta3") || has("eps4 > 0") || has("eps6 > 0") {
            omega = (omega * 1.5).max(led.get("beta3").unwrap_or(omega) * 1.01);
        } else if has("eta < beta4") || has("eps10 - eta*eps11 - eta^2*eps12 > 0") {
            match regime {
                Regime::Theorem1 => beta2 *= 0.5,
                // eta = sqrt(n/T) or (T+1)^-theta: only a larger theta shrinks it
                Regime::Theorem2 if theta < 0.99 => theta = (theta + 0.05).min(0.99),
                _ => return Err(TheoryError::SearchFailed { binding: last }),
            }
        } else {
            return Err(TheoryError::SearchFailed { binding: last });
        }
    }
    Err(TheoryError::SearchFailed { binding: last })
}

fn suggest_theorem3(pc: &ProblemConstants, alpha_x: f64, n: usize) -> Result<ScheduleParams, TheoryError> {
    let nu = pc.nu.ok_or_else(|| TheoryError::Input("the P-L constant nu is required".into()))?;
    if alpha_x * pc.r >= 1.0 {
        return Err(TheoryError::SearchFailed { binding: "alpha_x*r < 1".into() });
    }
    let c_tilde = DEFAULT_C_TILDE;
    let c1 = 9.0 / (2.0 * pc.lambda_min_pos) + 1.0;
    if !(c1.is_finite() && c1 < BETA1_CAP) {
        return Err(TheoryError::SearchFailed { binding: "beta1 > cbar1".into() });
    }
    let mut best: Option<ScheduleParams> = None;
    let mut best_t1 = f64::INFINITY;
    let mut last = String::from("0 < beta2 < cbar2");
    for f1 in [1.05, 1.2, 1.5, 2.0, 3.0] {
        let beta1 = f1 * c1;
        // cbar2 does not depend on beta0, beta2 or t1
        let probe = Theorem3Input { beta0: 1.0, beta1, beta2: 1.0, t1: 1.0, c_tilde, h0: None, sigma_bar: 0.0, n };
        let c2 = ledger_theorem3(pc, &probe)?.get("cbar2").unwrap_or(f64::NAN);
        if !(c2 > 0.0 && c2.is_finite()) {
            continue;
        }
        for f2 in [0.9, 0.7, 0.5, 0.3] {
            let beta2 = f2 * c2;
            let (lo, hi) = theorem3_beta0_interval(nu, beta2, c_tilde);
            let beta0 = lo + 0.9 * (hi - lo);
            let probe = Theorem3Input { beta0, beta1, beta2, t1: 1.0, c_tilde, h0: None, sigma_bar: 0.0, n };
            let c5 = ledger_theorem3(pc, &probe)?.get("cbar5").unwrap_or(f64::NAN);
            if !c5.is_finite() {
                last = "t1 > cbar5".into();
                continue;
            }
            let t1 = (c5 * 1.01).ceil() + 1.0;
            let h0 = 0.5 / t1;
            let input = Theorem3Input { beta0, beta1, beta2, t1, c_tilde, h0: Some(h0), sigma_bar: 0.0, n };
            let led = ledger_theorem3(pc, &input)?;
            if led.feasible && t1 < best_t1 {
                best_t1 = t1;
                best = Some(ScheduleParams {
                    beta0: Some(beta0),
                    beta1: Some(beta1),
                    beta2: Some(beta2),
                    t1: Some(t1),
                    h0: Some(h0),
                    alpha_x: Some(alpha_x),
                    c_tilde: Some(c_tilde),
                    ..Default::default()
                });
            } else if let Some(v) = led.violated.first() {
                last.clone_from(v);
            }
        }
    }
    best.ok_or(TheoryError::SearchFailed { binding: last })
}
