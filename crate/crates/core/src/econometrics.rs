//! Regime-switching logit linking deviations to their net profit.
//!
//! Two independent binary logits are fitted: in hours where the unit should
//! run, the probability of being off as a function of the withholding
//! profit; in hours where it should not, the probability of running as a
//! function of the push-in profit.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::incentives::{Direction, IncentivePanel};
use crate::monte_carlo::{Deviation, DispatchPanel};

pub const MAX_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const RELATIVE_LL_TOLERANCE: f64 = 1e-10;
/// Standardized slope beyond which the fit is treated as separated.
pub const SEPARATION_BOUND: f64 = 50.0;

/// Numerically stable logistic function.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn predict_prob(beta0: f64, beta1: f64, x: f64) -> f64 {
    logistic(beta0 + beta1 * x)
}

/// Two-sided normal p-value of a Wald statistic.
pub fn wald_p_value(estimate: f64, se: f64) -> f64 {
    if !(se > 0.0) {
        return f64::NAN;
    }
    libm::erfc((estimate / se).abs() / std::f64::consts::SQRT_2)
}

pub fn stars(p: f64) -> &'static str {
    match p {
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        _ => "",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitFit {
    pub beta0: f64,
    pub beta1: f64,
    pub se0: f64,
    pub se1: f64,
    pub ll: f64,
    pub ll0: f64,
    pub mcfadden_r2: f64,
    pub n: usize,
    pub events: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Norm of the mean score in standardized coordinates.
    pub gradient_norm: f64,
    #[serde(skip)]
    pub ll_history: Vec<f64>,
}

impl LogitFit {
    pub fn predict(&self, x: f64) -> f64 {
        predict_prob(self.beta0, self.beta1, x)
    }

    pub fn p_values(&self) -> (f64, f64) {
        (wald_p_value(self.beta0, self.se0), wald_p_value(self.beta1, self.se1))
    }

    /// 95% Wald interval for the slope.
    pub fn slope_interval(&self) -> (f64, f64) {
        const Z: f64 = 1.959_963_984_540_054;
        (self.beta1 - Z * self.se1, self.beta1 + Z * self.se1)
    }
}

fn log_likelihood(u: &[f64], y: &[bool], a: f64, b: f64) -> f64 {
    u.iter()
        .zip(y)
        .map(|(&u, &y)| {
            let eta = a + b * u;
            if y {
                eta - softplus(eta)
            } else {
                -softplus(eta)
            }
        })
        .sum()
}

/// Score and observed information at (a, b).
fn derivatives(u: &[f64], y: &[bool], a: f64, b: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for (&u, &y) in u.iter().zip(y) {
        let p = logistic(a + b * u);
        let r = f64::from(u8::from(y)) - p;
        let w = p * (1.0 - p);
        g[0] += r;
        g[1] += r * u;
        h[0][0] += w;
        h[0][1] += w * u;
        h[1][1] += w * u * u;
    }
    h[1][0] = h[0][1];
    (g, h)
}

fn invert(h: [[f64; 2]; 2]) -> Option<[[f64; 2]; 2]> {
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    if !(det.abs() > 1e-300) || !det.is_finite() {
        return None;
    }
    Some([[h[1][1] / det, -h[0][1] / det], [-h[1][0] / det, h[0][0] / det]])
}

/// Intercept-only model.
pub fn fit_null(y: &[bool]) -> Result<LogitFit> {
    let events = check_outcome(y)?;
    let n = y.len();
    let rate = events as f64 / n as f64;
    let a = (rate / (1.0 - rate)).ln();
    let ll0 = log_likelihood(&vec![0.0; n], y, a, 0.0);
    Ok(LogitFit {
        beta0: a,
        beta1: 0.0,
        se0: (1.0 / (n as f64 * rate * (1.0 - rate))).sqrt(),
        se1: f64::NAN,
        ll: ll0,
        ll0,
        mcfadden_r2: 0.0,
        n,
        events,
        converged: true,
        iterations: 0,
        gradient_norm: 0.0,
        ll_history: vec![ll0],
    })
}

fn check_outcome(y: &[bool]) -> Result<usize> {
    if y.len() < 2 {
        return Err(Error::Estimation(format!(
            "need at least 2 observations, got {}",
            y.len()
        )));
    }
    let events = y.iter().filter(|&&v| v).count();
    if events == 0 || events == y.len() {
        return Err(Error::Separation(format!(
            "outcome takes a single value in all {} observations",
            y.len()
        )));
    }
    Ok(events)
}

/// Maximum-likelihood logit of `y` on `[1, x]` by damped Newton steps.
pub fn fit_logit(x: &[f64], y: &[bool]) -> Result<LogitFit> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} predictors vs {} outcomes", x.len(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite predictor".into()));
    }
    let events = check_outcome(y)?;
    let n = x.len();
    let nf = n as f64;

    let (mut lo1, mut hi1, mut lo0, mut hi0) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (&v, &t) in x.iter().zip(y) {
        if t {
            lo1 = lo1.min(v);
            hi1 = hi1.max(v);
        } else {
            lo0 = lo0.min(v);
            hi0 = hi0.max(v);
        }
    }
    if hi1 <= lo0 || hi0 <= lo1 {
        return Err(Error::Separation(format!(
            "predictor separates the outcome (events in [{lo1}, {hi1}], non-events in [{lo0}, {hi0}])"
        )));
    }

    let mean = x.iter().sum::<f64>() / nf;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf).sqrt();
    let u: Vec<f64> = x.iter().map(|v| (v - mean) / sd).collect();

    let rate = events as f64 / nf;
    let (mut a, mut b) = ((rate / (1.0 - rate)).ln(), 0.0);
    let ll0 = log_likelihood(&u, y, a, b);
    let mut ll = ll0;
    let mut history = vec![ll0];
    let mut converged = false;
    let mut iterations = 0;
    let (mut g, mut h) = derivatives(&u, y, a, b);
    while iterations < MAX_ITERATIONS {
        if (g[0].hypot(g[1]) / nf) < GRADIENT_TOLERANCE {
            converged = true;
            break;
        }
        let inv = invert(h).ok_or_else(|| Error::Estimation("singular information matrix".into()))?;
        let step = [inv[0][0] * g[0] + inv[0][1] * g[1], inv[1][0] * g[0] + inv[1][1] * g[1]];
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let (na, nb) = (a + t * step[0], b + t * step[1]);
            let nll = log_likelihood(&u, y, na, nb);
            if nll >= ll {
                accepted = Some((na, nb, nll));
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        let Some((na, nb, nll)) = accepted else {
            // No ascent direction left at machine precision.
            converged = g[0].hypot(g[1]) / nf < 1e-6;
            break;
        };
        let change = (nll - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        (a, b, ll) = (na, nb, nll);
        history.push(ll);
        (g, h) = derivatives(&u, y, a, b);
        if b.abs() > SEPARATION_BOUND {
            return Err(Error::Separation(format!(
                "standardized slope {b} diverges; outcome is (quasi-)separated"
            )));
        }
        // A halved step can stall on likelihood roundoff in large samples;
        // accept it once the score is already tiny.
        if change < RELATIVE_LL_TOLERANCE && (t == 1.0 || g[0].hypot(g[1]) / nf < 1e-6) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Estimation(format!(
            "no convergence after {iterations} iterations (gradient {})",
            g[0].hypot(g[1]) / nf
        )));
    }
    let cov = invert(h).ok_or_else(|| Error::Estimation("singular information matrix".into()))?;
    let beta1 = b / sd;
    let beta0 = a - beta1 * mean;
    // Delta method for beta0 = a - b * mean / sd.
    let k = mean / sd;
    let var0 = cov[0][0] - 2.0 * k * cov[0][1] + k * k * cov[1][1];
    Ok(LogitFit {
        beta0,
        beta1,
        se0: var0.max(0.0).sqrt(),
        se1: cov[1][1].max(0.0).sqrt() / sd,
        ll,
        ll0,
        mcfadden_r2: 1.0 - ll / ll0,
        n,
        events,
        converged,
        iterations,
        gradient_norm: g[0].hypot(g[1]) / nf,
        ll_history: history,
    })
}

/// One unit-hour with a defined benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinedRow {
    pub hour: usize,
    pub unit: usize,
    /// Regime: withholding when the unit should run, push-in otherwise.
    pub regime: Direction,
    pub deviated: bool,
    pub pi_w: f64,
    pub pi_p: f64,
    pub delta: f64,
    pub exposure_mw: f64,
    pub margin: f64,
}

impl JoinedRow {
    /// Net profit of the deviation available in this row's regime.
    pub fn profit(&self) -> f64 {
        match self.regime {
            Direction::Withhold => self.pi_w,
            Direction::PushIn => self.pi_p,
        }
    }
}

/// Joins both panels on (hour, unit), dropping unit-hours without a benchmark.
pub fn join_panels(dispatch: &DispatchPanel, incentives: &IncentivePanel) -> Result<Vec<JoinedRow>> {
    if dispatch.rows.len() != incentives.rows.len() {
        return Err(Error::Shape(format!(
            "dispatch panel has {} rows, incentive panel {}",
            dispatch.rows.len(),
            incentives.rows.len()
        )));
    }
    dispatch
        .rows
        .iter()
        .zip(&incentives.rows)
        .filter(|(d, _)| d.y.is_some())
        .map(|(d, i)| {
            if (d.hour, d.unit) != (i.hour, i.unit) {
                return Err(Error::Shape(format!(
                    "panels disagree at hour {} unit {}",
                    d.hour, d.unit
                )));
            }
            let regime = if d.z == Some(true) {
                Direction::Withhold
            } else {
                Direction::PushIn
            };
            let deviated = match regime {
                Direction::Withhold => d.y == Some(Deviation::Withheld),
                Direction::PushIn => d.y == Some(Deviation::PushedIn),
            };
            Ok(JoinedRow {
                hour: d.hour,
                unit: d.unit,
                regime,
                deviated,
                pi_w: i.pi_w,
                pi_p: i.pi_p,
                delta: i.delta,
                exposure_mw: i.exposure_mw,
                margin: i.margin,
            })
        })
        .collect()
}

/// Predictor and outcome vectors of one regime.
pub fn regime_data<'a>(
    rows: impl IntoIterator<Item = &'a JoinedRow>,
    regime: Direction,
    predictor: impl Fn(&JoinedRow) -> f64,
) -> (Vec<f64>, Vec<bool>) {
    rows.into_iter()
        .filter(|r| r.regime == regime)
        .map(|r| (predictor(r), r.deviated))
        .unzip()
}

pub type FitOutcome = std::result::Result<LogitFit, String>;

fn fit_regime<'a>(
    rows: impl IntoIterator<Item = &'a JoinedRow>,
    regime: Direction,
    predictor: &(impl Fn(&JoinedRow) -> f64 + Sync),
) -> FitOutcome {
    let (x, y) = regime_data(rows, regime, predictor);
    if x.is_empty() {
        return Err("no observations in regime".into());
    }
    fit_logit(&x, &y).map_err(|e| e.to_string())
}

/// Withholding and push-in fits on their own regimes.
pub fn regime_split_fit(rows: &[JoinedRow]) -> (FitOutcome, FitOutcome) {
    regime_split_fit_with(rows, &JoinedRow::profit)
}

pub fn regime_split_fit_with(
    rows: &[JoinedRow],
    predictor: &(impl Fn(&JoinedRow) -> f64 + Sync),
) -> (FitOutcome, FitOutcome) {
    rayon::join(
        || fit_regime(rows, Direction::Withhold, predictor),
        || fit_regime(rows, Direction::PushIn, predictor),
    )
}

/// Regime fits per group, keyed by the group label.
pub fn subgroup_fits(
    rows: &[JoinedRow],
    key: impl Fn(&JoinedRow) -> String,
) -> BTreeMap<String, (FitOutcome, FitOutcome)> {
    let mut groups: BTreeMap<String, Vec<JoinedRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(key(r)).or_default().push(*r);
    }
    groups
        .into_par_iter()
        .map(|(k, g)| {
            let fits = regime_split_fit(&g);
            (k, fits)
        })
        .collect()
}
