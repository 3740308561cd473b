//! Second-order rational approximations of a pure delay `e^(−sτ)`, their
//! step-response error against the exact delay, and their discretization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lti::{bilinear_discretize, ContinuousTf, DifferenceEqState, DiscreteTf, LtiError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DelayApproxError {
    #[error("delay must be finite and >= 0, got {0}")]
    BadDelay(f64),
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("unknown approximation `{0}` (expected pade2, marshall, product, laguerre, paynter or dfr)")]
    UnknownKind(String),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxKind {
    Pade2,
    Marshall,
    Product,
    Laguerre,
    Paynter,
    Dfr,
}

impl ApproxKind {
    pub const ALL: [ApproxKind; 6] = [
        ApproxKind::Pade2,
        ApproxKind::Marshall,
        ApproxKind::Product,
        ApproxKind::Laguerre,
        ApproxKind::Paynter,
        ApproxKind::Dfr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ApproxKind::Pade2 => "pade2",
            ApproxKind::Marshall => "marshall",
            ApproxKind::Product => "product",
            ApproxKind::Laguerre => "laguerre",
            ApproxKind::Paynter => "paynter",
            ApproxKind::Dfr => "dfr",
        }
    }

    /// Unit magnitude on the imaginary axis. Marshall's even polynomials
    /// are real there, so it is not all-pass; Paynter has no zeros.
    pub fn is_all_pass(self) -> bool {
        !matches!(self, ApproxKind::Paynter | ApproxKind::Marshall)
    }

    /// `(num, den)` coefficients of `1, sτ, (sτ)²`.
    fn normalized(self) -> ([f64; 3], [f64; 3]) {
        let all_pass = |a: f64, b: f64| ([1.0, -a, b], [1.0, a, b]);
        match self {
            ApproxKind::Pade2 => all_pass(0.5, 1.0 / 12.0),
            ApproxKind::Product => all_pass(0.5, 0.125),
            ApproxKind::Laguerre => all_pass(0.5, 0.0625),
            ApproxKind::Dfr => all_pass(0.49, 0.0954),
            ApproxKind::Marshall => ([1.0, 0.0, -0.0625], [1.0, 0.0, 0.0625]),
            ApproxKind::Paynter => ([1.0, 0.0, 0.0], [1.0, 1.0, 0.405]),
        }
    }
}

impl fmt::Display for ApproxKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ApproxKind {
    type Err = DelayApproxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        ApproxKind::ALL
            .into_iter()
            .find(|k| k.name() == lower || (lower == "pade" && *k == ApproxKind::Pade2))
            .ok_or_else(|| DelayApproxError::UnknownKind(s.to_string()))
    }
}

fn check_tau(tau: f64) -> Result<(), DelayApproxError> {
    if tau.is_finite() && tau >= 0.0 {
        Ok(())
    } else {
        Err(DelayApproxError::BadDelay(tau))
    }
}

/// Continuous rational approximant of `e^(−sτ)`.
pub fn series_ctf(kind: ApproxKind, tau: f64) -> Result<ContinuousTf, DelayApproxError> {
    check_tau(tau)?;
    let (n, d) = kind.normalized();
    let scale = |c: [f64; 3]| vec![c[0], c[1] * tau, c[2] * tau * tau];
    Ok(ContinuousTf::new(scale(n), scale(d))?)
}

/// Tustin discretization of [`series_ctf`].
pub fn discretize_series(kind: ApproxKind, tau: f64, sample_time: f64) -> Result<DiscreteTf, DelayApproxError> {
    Ok(bilinear_discretize(&series_ctf(kind, tau)?, sample_time)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IseReport {
    pub kind: ApproxKind,
    pub tau: f64,
    pub ise: f64,
    pub horizon: f64,
    pub dt: f64,
}

/// Default integration grid: 1 ms steps over `max(5 s, 10τ)`.
pub fn default_grid(tau: f64) -> (f64, f64) {
    (5.0f64.max(10.0 * tau), 1e-3)
}

/// `Σ (y_k − step(t_k − τ))²·dt` for a response sampled at `dt`, with the
/// reference delayed by `round(τ/dt)` samples.
pub fn ise_against_delayed_step(response: &[f64], tau: f64, dt: f64) -> f64 {
    let shift = (tau / dt).round() as usize;
    response
        .iter()
        .enumerate()
        .map(|(k, y)| {
            let r = if k >= shift { 1.0 } else { 0.0 };
            (y - r).powi(2) * dt
        })
        .sum()
}

/// Unit-step response of the discretized approximant over `[0, horizon]`.
pub fn step_response(kind: ApproxKind, tau: f64, horizon: f64, dt: f64) -> Result<Vec<f64>, DelayApproxError> {
    let mut s = DifferenceEqState::new(discretize_series(kind, tau, dt)?);
    let n = (horizon / dt).round() as usize + 1;
    Ok((0..n).map(|_| s.step(1.0)).collect())
}

pub fn ise_vs_true_delay(kind: ApproxKind, tau: f64, horizon: f64, dt: f64) -> Result<IseReport, DelayApproxError> {
    check_tau(tau)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DelayApproxError::BadGrid(format!("dt must be positive, got {dt}")));
    }
    if dt > tau / 10.0 && dt > 1e-3 + 1e-15 {
        return Err(DelayApproxError::BadGrid(format!("dt {dt} s exceeds both tau/10 and 1 ms")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) || horizon < 6.0 * tau {
        return Err(DelayApproxError::BadGrid(format!("horizon {horizon} s must be positive and >= 6·tau")));
    }
    let y = step_response(kind, tau, horizon, dt)?;
    Ok(IseReport { kind, tau, ise: ise_against_delayed_step(&y, tau, dt), horizon, dt })
}

/// ISE on the default grid.
pub fn ise_default(kind: ApproxKind, tau: f64) -> Result<IseReport, DelayApproxError> {
    let (horizon, dt) = default_grid(tau);
    ise_vs_true_delay(kind, tau, horizon, dt)
}
