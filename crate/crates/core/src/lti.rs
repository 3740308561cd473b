//! Rational transfer functions in `s` and `z⁻¹`, their discretization and a
//! runnable difference-equation realization.

use std::collections::VecDeque;

use num_complex::Complex64;
use thiserror::Error;

/// A point in the complex plane (frequency-response values, poles).
pub type ComplexPoint = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LtiError {
    #[error("denominator is empty or identically zero")]
    EmptyDenominator,
    #[error("transfer function is improper: numerator degree {num} exceeds denominator degree {den}")]
    Improper { num: usize, den: usize },
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("dead time must be a finite value >= 0, got {0}")]
    BadDeadTime(f64),
    #[error("bilinear mapping produced a zero leading denominator coefficient")]
    DegenerateMapping,
    #[error("cannot discretize a transfer function with dead time {0} s; approximate the delay first")]
    DeadTimePresent(f64),
    #[error("denominator vanishes at omega = {0} rad/s")]
    PoleOnAxis(f64),
    #[error("sample times differ: {0} s vs {1} s")]
    SampleTimeMismatch(f64, f64),
    #[error("leading denominator coefficient is zero (non-causal)")]
    NonCausal,
}

fn trim_trailing_zeros(mut c: Vec<f64>) -> Vec<f64> {
    while c.len() > 1 && c[c.len() - 1] == 0.0 {
        c.pop();
    }
    c
}

fn check_finite(c: &[f64]) -> Result<(), LtiError> {
    if c.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(LtiError::NonFinite)
    }
}

pub(crate) fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub(crate) fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, &x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, &y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

fn poly_pow(p: &[f64], n: usize) -> Vec<f64> {
    (0..n).fold(vec![1.0], |acc, _| poly_mul(&acc, p))
}

/// Evaluates an ascending-order polynomial at a complex point (Horner).
fn poly_eval(c: &[f64], x: Complex64) -> Complex64 {
    c.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &k| acc * x + k)
}

/// Continuous-time transfer function `num(s)/den(s) · e^(−s·dead_time)`.
///
/// Coefficients are stored in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousTf {
    num: Vec<f64>,
    den: Vec<f64>,
    dead_time: f64,
}

impl ContinuousTf {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self, LtiError> {
        check_finite(&num)?;
        check_finite(&den)?;
        let den = trim_trailing_zeros(den);
        if den.is_empty() || den.iter().all(|&v| v == 0.0) {
            return Err(LtiError::EmptyDenominator);
        }
        let num = if num.is_empty() { vec![0.0] } else { trim_trailing_zeros(num) };
        if num.len() > den.len() {
            return Err(LtiError::Improper { num: num.len() - 1, den: den.len() - 1 });
        }
        Ok(Self { num, den, dead_time: 0.0 })
    }

    /// `gain/(s + pole)`.
    pub fn first_order(gain: f64, pole: f64) -> Result<Self, LtiError> {
        Self::new(vec![gain], vec![pole, 1.0])
    }

    pub fn gain(k: f64) -> Result<Self, LtiError> {
        Self::new(vec![k], vec![1.0])
    }

    pub fn with_dead_time(mut self, tau: f64) -> Result<Self, LtiError> {
        if !tau.is_finite() || tau < 0.0 {
            return Err(LtiError::BadDeadTime(tau));
        }
        self.dead_time = tau;
        Ok(self)
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn dead_time(&self) -> f64 {
        self.dead_time
    }

    pub fn dc_gain(&self) -> f64 {
        self.num[0] / self.den[0]
    }

    /// `num(jω)/den(jω) · e^(−jωτ)`.
    pub fn freq_response(&self, omega: f64) -> Result<ComplexPoint, LtiError> {
        let jw = Complex64::new(0.0, omega);
        let d = poly_eval(&self.den, jw);
        let scale = self.den.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
        if d.norm() <= f64::EPSILON * scale {
            return Err(LtiError::PoleOnAxis(omega));
        }
        let rational = poly_eval(&self.num, jw) / d;
        Ok(rational * Complex64::from_polar(1.0, -omega * self.dead_time))
    }
}

/// Discrete-time transfer function with coefficients in ascending powers of
/// `z⁻¹`. The denominator is normalized so that `den[0] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteTf {
    num: Vec<f64>,
    den: Vec<f64>,
    sample_time: f64,
}

impl DiscreteTf {
    pub fn new(num: Vec<f64>, den: Vec<f64>, sample_time: f64) -> Result<Self, LtiError> {
        if !(sample_time > 0.0 && sample_time.is_finite()) {
            return Err(LtiError::NonPositive("sample_time", sample_time));
        }
        check_finite(&num)?;
        check_finite(&den)?;
        if den.is_empty() {
            return Err(LtiError::EmptyDenominator);
        }
        let a0 = den[0];
        if a0 == 0.0 {
            return Err(LtiError::NonCausal);
        }
        let num = if num.is_empty() { vec![0.0] } else { num };
        let num = trim_trailing_zeros(num.into_iter().map(|b| b / a0).collect());
        let den = trim_trailing_zeros(den.into_iter().map(|a| a / a0).collect());
        Ok(Self { num, den, sample_time })
    }

    pub fn gain(k: f64, sample_time: f64) -> Result<Self, LtiError> {
        Self::new(vec![k], vec![1.0], sample_time)
    }

    /// Pure shift `z^(−d)`.
    pub fn delay(d: usize, sample_time: f64) -> Result<Self, LtiError> {
        let mut num = vec![0.0; d + 1];
        num[d] = 1.0;
        Self::new(num, vec![1.0], sample_time)
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn sample_time(&self) -> f64 {
        self.sample_time
    }

    /// Value at `z = 1`; infinite when the denominator sums to zero.
    pub fn dc_gain(&self) -> f64 {
        self.num.iter().sum::<f64>() / self.den.iter().sum::<f64>()
    }

    /// First `n` impulse-response terms by long division of `num` by `den`.
    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        let mut h = Vec::with_capacity(n);
        for k in 0..n {
            let b = self.num.get(k).copied().unwrap_or(0.0);
            let acc: f64 = (1..self.den.len().min(k + 1))
                .map(|i| self.den[i] * h[k - i])
                .sum();
            h.push(b - acc);
        }
        h
    }

    fn same_sample_time(&self, other: &DiscreteTf) -> Result<(), LtiError> {
        let (a, b) = (self.sample_time, other.sample_time);
        if (a - b).abs() > 1e-12 * a.max(b) {
            return Err(LtiError::SampleTimeMismatch(a, b));
        }
        Ok(())
    }
}

/// Cascade `a·b`.
pub fn series_connect(a: &DiscreteTf, b: &DiscreteTf) -> Result<DiscreteTf, LtiError> {
    a.same_sample_time(b)?;
    DiscreteTf::new(poly_mul(&a.num, &b.num), poly_mul(&a.den, &b.den), a.sample_time)
}

/// Unity negative feedback `g/(1 + g)`.
pub fn feedback_unity(g: &DiscreteTf) -> Result<DiscreteTf, LtiError> {
    DiscreteTf::new(g.num.clone(), poly_add(&g.den, &g.num), g.sample_time)
}

/// Exact zero-order-hold equivalent of `gain/(s + pole)`:
/// `(K/a)(1 − p) z⁻¹ / (1 − p z⁻¹)` with `p = e^(−aT)`.
pub fn zoh_discretize_first_order(gain: f64, pole: f64, sample_time: f64) -> Result<DiscreteTf, LtiError> {
    if !(pole > 0.0 && pole.is_finite()) {
        return Err(LtiError::NonPositive("pole", pole));
    }
    if !(sample_time > 0.0 && sample_time.is_finite()) {
        return Err(LtiError::NonPositive("sample_time", sample_time));
    }
    let p = (-pole * sample_time).exp();
    let b = gain / pole * (1.0 - p);
    DiscreteTf::new(vec![0.0, b], vec![1.0, -p], sample_time)
}

/// Tustin substitution `s ← (2/T)(1 − z⁻¹)/(1 + z⁻¹)`.
pub fn bilinear_discretize(ctf: &ContinuousTf, sample_time: f64) -> Result<DiscreteTf, LtiError> {
    if !(sample_time > 0.0 && sample_time.is_finite()) {
        return Err(LtiError::NonPositive("sample_time", sample_time));
    }
    if ctf.dead_time != 0.0 {
        return Err(LtiError::DeadTimePresent(ctf.dead_time));
    }
    let c = 2.0 / sample_time;
    let n = ctf.den.len() - 1;
    let minus = [1.0, -1.0];
    let plus = [1.0, 1.0];
    let map = |coeffs: &[f64]| -> Vec<f64> {
        let mut acc = vec![0.0; n + 1];
        for (i, &k) in coeffs.iter().enumerate() {
            if k == 0.0 {
                continue;
            }
            let term = poly_mul(&poly_pow(&minus, i), &poly_pow(&plus, n - i));
            let scale = k * c.powi(i as i32);
            for (j, t) in term.iter().enumerate() {
                acc[j] += scale * t;
            }
        }
        acc
    };
    let num = map(&ctf.num);
    let den = map(&ctf.den);
    if den[0] == 0.0 || !den[0].is_finite() {
        return Err(LtiError::DegenerateMapping);
    }
    DiscreteTf::new(num, den, sample_time)
}

/// Runnable realization of a [`DiscreteTf`] starting from rest.
#[derive(Debug, Clone)]
pub struct DifferenceEqState {
    tf: DiscreteTf,
    past_inputs: VecDeque<f64>,
    past_outputs: VecDeque<f64>,
}

impl DifferenceEqState {
    pub fn new(tf: DiscreteTf) -> Self {
        let past_inputs = VecDeque::from(vec![0.0; tf.num.len() - 1]);
        let past_outputs = VecDeque::from(vec![0.0; tf.den.len() - 1]);
        Self { tf, past_inputs, past_outputs }
    }

    pub fn tf(&self) -> &DiscreteTf {
        &self.tf
    }

    /// Output `step(u)` would return, without advancing the state.
    pub fn preview(&self, input: f64) -> f64 {
        let b = &self.tf.num;
        let a = &self.tf.den;
        let mut y = b[0] * input;
        for (bi, u) in b[1..].iter().zip(&self.past_inputs) {
            y += bi * u;
        }
        for (ai, yo) in a[1..].iter().zip(&self.past_outputs) {
            y -= ai * yo;
        }
        y
    }

    pub fn step(&mut self, input: f64) -> f64 {
        let y = self.preview(input);
        if !self.past_inputs.is_empty() {
            self.past_inputs.pop_back();
            self.past_inputs.push_front(input);
        }
        if !self.past_outputs.is_empty() {
            self.past_outputs.pop_back();
            self.past_outputs.push_front(y);
        }
        y
    }

    pub fn reset(&mut self) {
        self.past_inputs.iter_mut().for_each(|v| *v = 0.0);
        self.past_outputs.iter_mut().for_each(|v| *v = 0.0);
    }

    /// Swaps in new coefficients while keeping the most recent history.
    /// Windows are zero-padded or truncated to the new lengths.
    pub fn retune(&mut self, tf: DiscreteTf) {
        self.past_inputs.resize(tf.num.len() - 1, 0.0);
        self.past_outputs.resize(tf.den.len() - 1, 0.0);
        self.tf = tf;
    }

    pub fn past_inputs(&self) -> impl Iterator<Item = f64> + '_ {
        self.past_inputs.iter().copied()
    }

    pub fn past_outputs(&self) -> impl Iterator<Item = f64> + '_ {
        self.past_outputs.iter().copied()
    }
}
