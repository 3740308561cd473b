//! Least-squares ARX identification and fit scoring.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use thiserror::Error;

use crate::lti::{ContinuousTf, DifferenceEqState, DiscreteTf, LtiError};

/// Cross-validation fit reported for the identified first-order model on
/// the held-out motor data set. Documentation only; the data is not shipped.
pub const REPORTED_VALIDATION_FIT: f64 = 83.75;

/// Second-order continuous candidate rejected during model selection, as
/// `(num, den)` in ascending powers of `s`: `10.84/(s² + 338.6s + 155.5)`.
pub const SECOND_ORDER_CANDIDATE: ([f64; 1], [f64; 3]) = ([10.84], [155.5, 338.6, 1.0]);

#[derive(Debug, Error)]
pub enum SysidError {
    #[error("series needs at least 4 samples and equal-length channels (inputs {inputs}, outputs {outputs})")]
    BadLength { inputs: usize, outputs: usize },
    #[error("sample_time must be positive, got {0}")]
    BadSampleTime(f64),
    #[error("{0} channel is constant; cannot normalize")]
    DegenerateRange(&'static str),
    #[error("need at least {needed} samples for this model order, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid model order: nb and nk must be at least 1")]
    BadOrder,
    #[error("regressor matrix is rank deficient")]
    SingularRegressor,
    #[error("sequences must have equal nonzero length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("reference sequence is constant; fit is undefined")]
    DegenerateNorm,
    #[error("pole {0} is outside (0, 1); no first-order continuous equivalent")]
    NonPhysicalPole(f64),
    #[error("conversion needs an ARX(1,1,1) model")]
    NotFirstOrder,
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

/// Equal-length input/output record at a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSeries {
    sample_time: f64,
    inputs: Vec<f64>,
    outputs: Vec<f64>,
}

impl SampleSeries {
    pub fn new(sample_time: f64, inputs: Vec<f64>, outputs: Vec<f64>) -> Result<Self, SysidError> {
        if !(sample_time > 0.0 && sample_time.is_finite()) {
            return Err(SysidError::BadSampleTime(sample_time));
        }
        if inputs.len() != outputs.len() || inputs.len() < 4 {
            return Err(SysidError::BadLength { inputs: inputs.len(), outputs: outputs.len() });
        }
        Ok(Self { sample_time, inputs, outputs })
    }

    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

fn min_max_scale(x: &[f64], name: &'static str) -> Result<Vec<f64>, SysidError> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(SysidError::DegenerateRange(name));
    }
    Ok(x.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// Maps each channel onto `[0, 1]` by its own min and max.
pub fn normalize(series: &SampleSeries) -> Result<SampleSeries, SysidError> {
    Ok(SampleSeries {
        sample_time: series.sample_time,
        inputs: min_max_scale(&series.inputs, "input")?,
        outputs: min_max_scale(&series.outputs, "output")?,
    })
}

/// `A(q)y(t) = B(q)u(t − nk) + e(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ArxModel {
    pub a_coeffs: Vec<f64>,
    pub b_coeffs: Vec<f64>,
    pub delay_nk: usize,
    pub sample_time: f64,
}

impl ArxModel {
    pub fn to_discrete_tf(&self) -> Result<DiscreteTf, SysidError> {
        let mut num = vec![0.0; self.delay_nk];
        num.extend(&self.b_coeffs);
        let mut den = vec![1.0];
        den.extend(&self.a_coeffs);
        Ok(DiscreteTf::new(num, den, self.sample_time)?)
    }

    /// Free-run simulation from rest.
    pub fn simulate(&self, inputs: &[f64]) -> Result<Vec<f64>, SysidError> {
        let mut s = DifferenceEqState::new(self.to_discrete_tf()?);
        Ok(inputs.iter().map(|&u| s.step(u)).collect())
    }
}

#[derive(Debug, Clone)]
pub struct ArxFit {
    pub model: ArxModel,
    /// Sum of squared one-step prediction residuals.
    pub residual_ss: f64,
    pub rows: usize,
}

pub fn fit_arx(series: &SampleSeries, na: usize, nb: usize, nk: usize) -> Result<ArxFit, SysidError> {
    if nb == 0 || nk == 0 {
        return Err(SysidError::BadOrder);
    }
    let n = series.len();
    let needed = na + nb + nk + 1;
    if n < needed {
        return Err(SysidError::InsufficientData { needed, got: n });
    }
    let start = na.max(nb + nk - 1);
    let rows = n - start;
    let cols = na + nb;
    let (u, y) = (&series.inputs, &series.outputs);
    let phi = DMatrix::from_fn(rows, cols, |r, c| {
        let t = start + r;
        if c < na {
            -y[t - 1 - c]
        } else {
            u[t - nk - (c - na)]
        }
    });
    let target = DVector::from_iterator(rows, y[start..].iter().copied());

    let svd = phi.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin <= smax * 1e-12 {
        return Err(SysidError::SingularRegressor);
    }
    let theta = svd
        .solve(&target, smax * 1e-14)
        .map_err(|_| SysidError::SingularRegressor)?;
    let residual_ss = (&phi * &theta - &target).norm_squared();
    Ok(ArxFit {
        model: ArxModel {
            a_coeffs: theta.iter().take(na).copied().collect(),
            b_coeffs: theta.iter().skip(na).copied().collect(),
            delay_nk: nk,
            sample_time: series.sample_time,
        },
        residual_ss,
        rows,
    })
}

/// `100·(1 − ‖ŷ − y‖ / ‖y − ȳ‖)`.
pub fn percent_fit(y_model: &[f64], y_actual: &[f64]) -> Result<f64, SysidError> {
    if y_model.len() != y_actual.len() || y_actual.is_empty() {
        return Err(SysidError::LengthMismatch(y_model.len(), y_actual.len()));
    }
    let mean = y_actual.iter().sum::<f64>() / y_actual.len() as f64;
    let spread = y_actual.iter().map(|y| (y - mean).powi(2)).sum::<f64>().sqrt();
    if spread == 0.0 {
        return Err(SysidError::DegenerateNorm);
    }
    let err = y_model
        .iter()
        .zip(y_actual)
        .map(|(m, a)| (m - a).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * (1.0 - err / spread))
}

/// Inverts the ZOH mapping of `K/(s + a)` for an ARX(1,1,1) model.
pub fn arx_to_first_order_ct(model: &ArxModel) -> Result<ContinuousTf, SysidError> {
    if model.a_coeffs.len() != 1 || model.b_coeffs.len() != 1 || model.delay_nk != 1 {
        return Err(SysidError::NotFirstOrder);
    }
    let p = -model.a_coeffs[0];
    if !(p > 0.0 && p < 1.0) {
        return Err(SysidError::NonPhysicalPole(p));
    }
    let a = -p.ln() / model.sample_time;
    let k = a * model.b_coeffs[0] / (1.0 - p);
    Ok(ContinuousTf::first_order(k, a)?)
}

#[derive(Deserialize)]
struct SampleRow {
    t: f64,
    u: f64,
    y: f64,
}

/// Reads a `t,u,y` CSV with a fixed time step.
pub fn read_sample_csv<R: Read>(reader: R) -> Result<SampleSeries, SysidError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(e, 1))?.clone();
    if header.iter().collect::<Vec<_>>() != ["t", "u", "y"] {
        return Err(SysidError::Parse { line: 1, msg: "expected header `t,u,y`".into() });
    }
    let (mut ts, mut us, mut ys) = (Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.deserialize::<SampleRow>() {
        let row = rec.map_err(|e| csv_error(e, 0))?;
        ts.push(row.t);
        us.push(row.u);
        ys.push(row.y);
    }
    if ts.len() < 2 {
        return Err(SysidError::BadLength { inputs: ts.len(), outputs: ts.len() });
    }
    let step = ts[1] - ts[0];
    for (i, w) in ts.windows(2).enumerate() {
        let d = w[1] - w[0];
        let line = i as u64 + 3;
        if d <= 0.0 {
            return Err(SysidError::Parse { line, msg: "time must be strictly increasing".into() });
        }
        if (d - step).abs() > 1e-6 * step.abs().max(1e-9) {
            return Err(SysidError::Parse { line, msg: format!("time step {d} differs from {step}") });
        }
    }
    SampleSeries::new(step, us, ys)
}

pub fn read_sample_file(path: &Path) -> Result<SampleSeries, SysidError> {
    read_sample_csv(std::fs::File::open(path)?)
}

fn csv_error(e: csv::Error, fallback_line: u64) -> SysidError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    SysidError::Parse { line, msg: e.to_string() }
}
