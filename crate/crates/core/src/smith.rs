//! Digital Smith predictor with a fixed integer-sample delay model or a
//! delay model regenerated from the online delay estimate.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay_approx::{discretize_series, ApproxKind, DelayApproxError};
use crate::lti::{DifferenceEqState, DiscreteTf, LtiError};
use crate::pid::{pi_pulse_tf, PiGains, PidError};

/// Numerator of the nominal plant model used inside the predictor.
pub const NOMINAL_NUM: f64 = 0.0832;
pub const NOMINAL_POLE: f64 = 0.92;

/// Delay model identified from a measured 60 ms link at T = 20 ms,
/// `(num, den)` in ascending `z⁻¹`. Kept for reference; the classical
/// predictor uses an exact shift instead.
pub const IDENTIFIED_DELAY_MODEL: ([f64; 4], [f64; 4]) = (
    [0.0, 0.0006313, 0.000636, 0.9971],
    [1.0, -0.0006345, -0.000633, 0.00007223],
);

#[derive(Debug, Error)]
pub enum SmithError {
    #[error("nominal plant model must be strictly proper (no direct feedthrough)")]
    NotStrictlyProper,
    #[error("modeled delay must be finite and >= 0, got {0} s")]
    BadDelay(f64),
    #[error("adaptive update requested on a classical predictor")]
    NotAdaptive,
    #[error("smoothing factor must lie in (0, 1], got {0}")]
    BadSmoothing(f64),
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Approx(#[from] DelayApproxError),
    #[error(transparent)]
    Pid(#[from] PidError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmithMode {
    /// Exact shift by `round(tau_m/T)` samples.
    ClassicalFixed { tau_m: f64 },
    /// Delay model rebuilt from each new estimate.
    Adaptive { kind: ApproxKind },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmithConfig {
    pub mode: SmithMode,
    pub nominal_plant: DiscreteTf,
    /// Exponential weight on new delay estimates; `None` uses them raw.
    pub smoothing: Option<f64>,
}

impl SmithConfig {
    pub fn new(mode: SmithMode, sample_time: f64) -> Result<Self, SmithError> {
        let nominal_plant = DiscreteTf::new(vec![0.0, NOMINAL_NUM], vec![1.0, -NOMINAL_POLE], sample_time)?;
        Ok(Self { mode, nominal_plant, smoothing: None })
    }
}

#[derive(Debug, Clone)]
enum DelayModel {
    Shift(VecDeque<f64>),
    Series(DifferenceEqState),
}

impl DelayModel {
    fn preview(&self, x: f64) -> f64 {
        match self {
            DelayModel::Shift(buf) => buf.back().copied().unwrap_or(x),
            DelayModel::Series(s) => s.preview(x),
        }
    }

    fn step(&mut self, x: f64) -> f64 {
        match self {
            DelayModel::Shift(buf) => {
                if buf.is_empty() {
                    return x;
                }
                buf.push_front(x);
                buf.pop_back().expect("non-empty")
            }
            DelayModel::Series(s) => s.step(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SmithState {
    config: SmithConfig,
    plant_model: DifferenceEqState,
    delay_model: DelayModel,
    tau_estimate_s: Option<f64>,
    minor_loop_feedback: f64,
}

impl SmithState {
    pub fn new(config: SmithConfig) -> Result<Self, SmithError> {
        if config.nominal_plant.num()[0] != 0.0 {
            return Err(SmithError::NotStrictlyProper);
        }
        if let Some(a) = config.smoothing {
            if !(a > 0.0 && a <= 1.0) {
                return Err(SmithError::BadSmoothing(a));
            }
        }
        let t = config.nominal_plant.sample_time();
        let delay_model = match config.mode {
            SmithMode::ClassicalFixed { tau_m } => {
                if !(tau_m.is_finite() && tau_m >= 0.0) {
                    return Err(SmithError::BadDelay(tau_m));
                }
                let d = (tau_m / t).round() as usize;
                DelayModel::Shift(VecDeque::from(vec![0.0; d]))
            }
            SmithMode::Adaptive { kind } => DelayModel::Series(DifferenceEqState::new(discretize_series(kind, 0.0, t)?)),
        };
        Ok(Self {
            plant_model: DifferenceEqState::new(config.nominal_plant.clone()),
            config,
            delay_model,
            tau_estimate_s: None,
            minor_loop_feedback: 0.0,
        })
    }

    pub fn config(&self) -> &SmithConfig {
        &self.config
    }

    /// Current delay-model transfer function (adaptive mode only).
    pub fn delay_tf(&self) -> Option<&DiscreteTf> {
        match &self.delay_model {
            DelayModel::Series(s) => Some(s.tf()),
            DelayModel::Shift(_) => None,
        }
    }

    /// Delay in seconds the model currently represents.
    pub fn modeled_delay(&self) -> f64 {
        match (&self.delay_model, self.tau_estimate_s) {
            (DelayModel::Shift(buf), _) => buf.len() as f64 * self.config.nominal_plant.sample_time(),
            (DelayModel::Series(_), tau) => tau.unwrap_or(0.0),
        }
    }

    pub fn last_correction(&self) -> f64 {
        self.minor_loop_feedback
    }

    /// Correction for the present sample, computed from past controller
    /// outputs only. Does not advance the state.
    pub fn peek_correction(&self) -> f64 {
        let y_hat = self.plant_model.preview(0.0);
        y_hat - self.delay_model.preview(y_hat)
    }

    /// Feeds `u(k)` and returns `(Ĝu)(k) − (G_dm·Ĝu)(k)`.
    pub fn smith_correction(&mut self, u: f64) -> f64 {
        let y_hat = self.plant_model.step(u);
        let c = y_hat - self.delay_model.step(y_hat);
        self.minor_loop_feedback = c;
        c
    }

    /// Rebuilds the delay model for a new estimate (milliseconds), keeping
    /// the model's past samples.
    pub fn adaptive_update(&mut self, tau_estimate_ms: f64) -> Result<(), SmithError> {
        let SmithMode::Adaptive { kind } = self.config.mode else {
            return Err(SmithError::NotAdaptive);
        };
        if !(tau_estimate_ms.is_finite() && tau_estimate_ms >= 0.0) {
            return Err(SmithError::BadDelay(tau_estimate_ms / 1000.0));
        }
        let raw = tau_estimate_ms / 1000.0;
        let tau = match (self.config.smoothing, self.tau_estimate_s) {
            (Some(a), Some(prev)) => prev + a * (raw - prev),
            _ => raw,
        };
        self.tau_estimate_s = Some(tau);
        let tf = discretize_series(kind, tau, self.config.nominal_plant.sample_time())?;
        if let DelayModel::Series(s) = &mut self.delay_model {
            s.retune(tf);
        }
        Ok(())
    }
}

/// Runs the Smith loop (plant delayed by `delay_samples`, predictor built
/// from `model` with an exact `delay_samples` shift) and the delay-free loop
/// shifted by the same amount, both continuous-valued, on a unit step.
/// Returns the largest sample-wise difference over `n` samples.
pub fn predictor_identity_check_with_model(
    gains: &PiGains,
    plant: &DiscreteTf,
    model: &DiscreteTf,
    delay_samples: usize,
    n: usize,
) -> Result<f64, SmithError> {
    let t = plant.sample_time();
    if plant.num()[0] != 0.0 {
        return Err(SmithError::NotStrictlyProper);
    }
    let controller = pi_pulse_tf(gains)?;
    let config = SmithConfig {
        mode: SmithMode::ClassicalFixed { tau_m: delay_samples as f64 * t },
        nominal_plant: model.clone(),
        smoothing: None,
    };
    let mut smith = SmithState::new(config)?;
    let mut c1 = DifferenceEqState::new(controller.clone());
    let mut p1 = DifferenceEqState::new(plant.clone());
    let mut line: VecDeque<f64> = VecDeque::from(vec![0.0; delay_samples]);

    let mut c2 = DifferenceEqState::new(controller);
    let mut p2 = DifferenceEqState::new(plant.clone());
    let mut free: Vec<f64> = Vec::with_capacity(n);

    let mut worst = 0.0f64;
    for k in 0..n {
        let r = 1.0;
        // delayed loop with predictor
        let y_now = p1.preview(0.0);
        line.push_front(y_now);
        let y_meas = line.pop_back().expect("line holds delay+1 samples");
        let corr = smith.peek_correction();
        let u = c1.step(r - y_meas - corr);
        smith.smith_correction(u);
        p1.step(u);

        // delay-free loop
        let y_free = p2.preview(0.0);
        free.push(y_free);
        p2.step(c2.step(r - y_free));

        let reference = if k >= delay_samples { free[k - delay_samples] } else { 0.0 };
        worst = worst.max((y_meas - reference).abs());
    }
    Ok(worst)
}

/// [`predictor_identity_check_with_model`] with a perfect plant model.
pub fn predictor_identity_check(gains: &PiGains, plant: &DiscreteTf, delay_samples: usize) -> Result<f64, SmithError> {
    predictor_identity_check_with_model(gains, plant, plant, delay_samples, 500)
}
