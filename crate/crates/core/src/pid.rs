//! Discrete PI controller (position form, anti-windup, 8-bit output) and
//! root-locus gain design.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::lti::{ComplexPoint, DiscreteTf, LtiError};

/// Proportional gain returned by the tuner for the motor loop.
pub const TUNER_KP: f64 = 1.69;
/// Integral gain (1/s) returned by the tuner for the motor loop.
pub const TUNER_KI: f64 = 7.44;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PidError {
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("{0} must be positive, got {1}")]
    NonPositive(&'static str, f64),
    #[error("actuator limits need min < max (got {0}..{1})")]
    BadLimits(u8, u8),
    #[error("controller is degenerate: K = kp + ki·T = {k}, ki·T = {ki_t}")]
    DegenerateController { k: f64, ki_t: f64 },
    #[error("damping ratio must lie in (0, 1), got {0}")]
    BadDamping(f64),
    #[error("frequency ratio must lie in (0, 0.5), got {0}")]
    BadFrequencyRatio(f64),
    #[error("plant must be first order b·z⁻¹/(1 − p·z⁻¹)")]
    NotFirstOrder,
    #[error("required zero angle {0:.3}° cannot be produced by a real zero")]
    Infeasible(f64),
    #[error(transparent)]
    Lti(#[from] LtiError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    pub kp: f64,
    /// Integral gain in 1/s.
    pub ki: f64,
    pub sample_time: f64,
}

impl PiGains {
    pub fn new(kp: f64, ki: f64, sample_time: f64) -> Result<Self, PidError> {
        if !kp.is_finite() {
            return Err(PidError::NonFinite("kp"));
        }
        if !ki.is_finite() {
            return Err(PidError::NonFinite("ki"));
        }
        if !(sample_time > 0.0 && sample_time.is_finite()) {
            return Err(PidError::NonPositive("sample_time", sample_time));
        }
        Ok(Self { kp, ki, sample_time })
    }

    /// The tuner gains at the 20 ms loop period.
    pub fn tuner_default() -> Self {
        Self { kp: TUNER_KP, ki: TUNER_KI, sample_time: 0.02 }
    }

    /// Per-sample integral weight `ki·T`.
    pub fn ki_t(&self) -> f64 {
        self.ki * self.sample_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuatorLimits {
    pub min_duty: u8,
    pub max_duty: u8,
    /// Value the error sum is reset to when the output saturates high.
    pub integral_threshold: f64,
}

impl ActuatorLimits {
    pub fn new(min_duty: u8, max_duty: u8, integral_threshold: f64) -> Result<Self, PidError> {
        if min_duty >= max_duty {
            return Err(PidError::BadLimits(min_duty, max_duty));
        }
        if !integral_threshold.is_finite() {
            return Err(PidError::NonFinite("integral_threshold"));
        }
        Ok(Self { min_duty, max_duty, integral_threshold })
    }

    /// 0..=255 with the threshold that alone would drive the output to 255.
    pub fn default_for(gains: &PiGains) -> Self {
        let ki_t = gains.ki_t();
        let integral_threshold = if ki_t > 0.0 { 255.0 / ki_t } else { 0.0 };
        Self { min_duty: 0, max_duty: 255, integral_threshold }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PiState {
    pub integral_sum: f64,
    pub saturated_last: bool,
}

/// Unquantized position-form output for the current state, before limits.
fn raw_output(gains: &PiGains, state: &PiState, error: f64) -> f64 {
    gains.kp * error + gains.ki_t() * state.integral_sum
}

/// One execution of the position algorithm. Returns the duty count.
pub fn pi_step(gains: &PiGains, state: &mut PiState, limits: &ActuatorLimits, error: f64) -> u8 {
    state.integral_sum += error;
    let mut u = raw_output(gains, state, error);
    state.saturated_last = false;
    if u > f64::from(limits.max_duty) {
        u = f64::from(limits.max_duty);
        state.integral_sum = limits.integral_threshold;
        state.saturated_last = true;
    }
    if u < f64::from(limits.min_duty) || u.is_nan() {
        u = f64::from(limits.min_duty);
    }
    // truncation toward zero; u is already inside [min, max]
    u as u8
}

/// Bundles gains, limits and state for a single loop.
#[derive(Debug, Clone)]
pub struct PiController {
    pub gains: PiGains,
    pub limits: ActuatorLimits,
    pub state: PiState,
}

impl PiController {
    pub fn new(gains: PiGains, limits: ActuatorLimits) -> Self {
        Self { gains, limits, state: PiState::default() }
    }

    pub fn step(&mut self, error: f64) -> u8 {
        pi_step(&self.gains, &mut self.state, &self.limits, error)
    }
}

/// Continuous `Kc(1 + 1/(Ti·s))` mapped through the trapezoidal pulse form:
/// `kp = Kc − Kc·T/(2Ti)`, `ki = Kc/Ti`.
pub fn map_continuous_gains(kc: f64, ti: f64, sample_time: f64) -> Result<PiGains, PidError> {
    if !(ti > 0.0) {
        return Err(PidError::NonPositive("ti", ti));
    }
    let (kp, ki) = if ti.is_infinite() {
        (kc, 0.0)
    } else {
        (kc - kc * sample_time / (2.0 * ti), kc / ti)
    };
    PiGains::new(kp, ki, sample_time)
}

/// Position-algorithm mapping `ki = kp/Ti` (integral weight `kp·T/Ti`).
pub fn map_position_gains(kp: f64, ti: f64, sample_time: f64) -> Result<PiGains, PidError> {
    if !(ti > 0.0) {
        return Err(PidError::NonPositive("ti", ti));
    }
    let ki = if ti.is_infinite() { 0.0 } else { kp / ti };
    PiGains::new(kp, ki, sample_time)
}

/// `K(z − kp/K)/(z − 1)` with `K = kp + ki·T`.
pub fn pi_pulse_tf(gains: &PiGains) -> Result<DiscreteTf, PidError> {
    let ki_t = gains.ki_t();
    let k = gains.kp + ki_t;
    if k == 0.0 || ki_t == 0.0 {
        return Err(PidError::DegenerateController { k, ki_t });
    }
    Ok(DiscreteTf::new(vec![k, -gains.kp], vec![1.0, -1.0], gains.sample_time)?)
}

/// Closed-loop pole for damping `ζ` and damped frequency `ω_d/ω_s`.
pub fn dominant_pole(zeta: f64, wd_over_ws: f64) -> Result<ComplexPoint, PidError> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(PidError::BadDamping(zeta));
    }
    if !(wd_over_ws > 0.0 && wd_over_ws < 0.5) {
        return Err(PidError::BadFrequencyRatio(wd_over_ws));
    }
    let r = (-2.0 * PI * zeta / (1.0 - zeta * zeta).sqrt() * wd_over_ws).exp();
    Ok(Complex64::from_polar(r, 2.0 * PI * wd_over_ws))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootLocusDesign {
    pub gains: PiGains,
    pub dominant_pole: ComplexPoint,
    pub zero: f64,
    pub loop_gain: f64,
    /// `∠L(z) + 180°` wrapped to (−180°, 180°].
    pub angle_residual_deg: f64,
    /// `|L(z)| − 1`.
    pub magnitude_residual: f64,
}

fn wrap_deg(a: f64) -> f64 {
    let mut x = a % 360.0;
    if x <= -180.0 {
        x += 360.0;
    } else if x > 180.0 {
        x -= 360.0;
    }
    x
}

/// Places the PI zero by the angle criterion and the gain by the magnitude
/// criterion at the dominant pole of the given damping specification.
pub fn design_pi_root_locus(plant: &DiscreteTf, zeta: f64, wd_over_ws: f64) -> Result<RootLocusDesign, PidError> {
    let (num, den) = (plant.num(), plant.den());
    if num.len() != 2 || num[0] != 0.0 || den.len() != 2 || num[1] == 0.0 {
        return Err(PidError::NotFirstOrder);
    }
    let b = num[1];
    let p = -den[1];
    let z = dominant_pole(zeta, wd_over_ws)?;

    let plant_angle = if b > 0.0 { 0.0 } else { 180.0 };
    let arg = |w: Complex64| w.arg().to_degrees();
    // ∠b + ∠(z−c) − ∠(z−1) − ∠(z−p) = −180°
    let zero_angle = wrap_deg(-180.0 - plant_angle + arg(z - 1.0) + arg(z - p));
    if !(zero_angle > 0.0 && zero_angle < 180.0) {
        return Err(PidError::Infeasible(zero_angle));
    }
    let c = z.re - z.im / zero_angle.to_radians().tan();

    let open_loop = |k: f64| Complex64::new(k * b, 0.0) * (z - c) / ((z - 1.0) * (z - p));
    let k = 1.0 / open_loop(1.0).norm();
    let l = open_loop(k);
    let gains = PiGains::new(k * c, k * (1.0 - c) / plant.sample_time(), plant.sample_time())?;
    Ok(RootLocusDesign {
        gains,
        dominant_pole: z,
        zero: c,
        loop_gain: k,
        angle_residual_deg: wrap_deg(arg(l) + 180.0),
        magnitude_residual: l.norm() - 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::DifferenceEqState;
    use proptest::prelude::*;

    fn nominal_plant() -> DiscreteTf {
        DiscreteTf::new(vec![0.0, 0.0831], vec![1.0, -0.92], 0.02).unwrap()
    }

    #[test]
    fn position_algorithm_examples() {
        let g = PiGains::tuner_default();
        assert!((g.ki_t() - 0.1488).abs() < 1e-12);
        let lim = ActuatorLimits::default_for(&g);
        let mut s = PiState::default();
        assert_eq!(pi_step(&g, &mut s, &lim, 10.0), 18); // 16.9 + 1.488
        assert_eq!(pi_step(&g, &mut s, &lim, 10.0), 19); // 16.9 + 2.976
        let mut s = PiState::default();
        assert_eq!(pi_step(&g, &mut s, &lim, 0.0), 0);
    }

    #[test]
    fn saturation_resets_integral() {
        let g = PiGains::tuner_default();
        let lim = ActuatorLimits::default_for(&g);
        let mut s = PiState::default();
        assert_eq!(pi_step(&g, &mut s, &lim, 500.0), 255);
        assert_eq!(s.integral_sum, lim.integral_threshold);
        assert!(s.saturated_last);
        let mut s = PiState::default();
        assert_eq!(pi_step(&g, &mut s, &lim, -50.0), 0);
        assert_eq!(s.integral_sum, -50.0);
    }

    #[test]
    fn continuous_mapping() {
        let g = map_continuous_gains(1.0, f64::INFINITY, 0.02).unwrap();
        assert_eq!((g.kp, g.ki), (1.0, 0.0));
        let g = map_continuous_gains(2.0, 0.1, 0.02).unwrap();
        assert!((g.kp - 1.8).abs() < 1e-12 && (g.ki - 20.0).abs() < 1e-12);
        // K and zero of the pulse form: K = kp + ki·T = Kc(1 + T/(2Ti)), zero kp/K
        let k = g.kp + g.ki_t();
        assert!((k - 2.0 * (1.0 + 0.02 / 0.2)).abs() < 1e-12);
        assert!((g.kp / k - 1.8 / 2.2).abs() < 1e-12);
        assert!(map_continuous_gains(1.0, 0.0, 0.02).is_err());
        let g = map_position_gains(2.0, 0.1, 0.02).unwrap();
        assert!((g.ki - 20.0).abs() < 1e-12);
    }

    #[test]
    fn pulse_tf_zero_and_gain() {
        let g = PiGains::new(10.7, 9.13 / 0.02, 0.02).unwrap();
        let tf = pi_pulse_tf(&g).unwrap();
        assert!((tf.num()[0] - 19.83).abs() < 1e-9);
        assert!((-tf.num()[1] / tf.num()[0] - 0.5396).abs() < 1e-4);
        assert!(pi_pulse_tf(&PiGains::new(1.0, 0.0, 0.02).unwrap()).is_err());
    }

    #[test]
    fn pulse_tf_matches_unsaturated_accumulation() {
        let g = PiGains::tuner_default();
        let mut st = DifferenceEqState::new(pi_pulse_tf(&g).unwrap());
        let mut s = PiState::default();
        let lim = ActuatorLimits::default_for(&g);
        for k in 0..30 {
            let e = 3.0 + (k as f64 * 0.4).sin();
            let tf_out = st.step(e);
            let duty = pi_step(&g, &mut s, &lim, e);
            assert!(!s.saturated_last);
            assert!((tf_out - raw_output(&g, &s, e)).abs() < 1e-9);
            assert!((tf_out - f64::from(duty)).abs() < 1.0);
        }
    }

    #[test]
    fn dominant_pole_example() {
        let z = dominant_pole(0.94, 0.1).unwrap();
        assert!((z.norm() - 0.17706).abs() < 1e-4);
        assert!((z.arg().to_degrees() - 36.0).abs() < 1e-9);
        assert!((z.re - 0.143).abs() < 0.001 && (z.im - 0.104).abs() < 0.001);
        assert!(dominant_pole(1.0, 0.1).is_err());
        assert!(dominant_pole(1e-9, 0.1).unwrap().norm() > 0.999_999);
    }

    #[test]
    fn root_locus_design_on_nominal_plant() {
        let d = design_pi_root_locus(&nominal_plant(), 0.94, 0.1).unwrap();
        // angles at z: ∠(z−1) = 173.073°, ∠(z−0.92) = 172.368°, ∠(z−c) = 165.440°
        assert!((d.zero - 0.544_019_576).abs() < 1e-6);
        assert!((d.loop_gain - 19.656_721_16).abs() < 1e-6);
        assert!((d.zero - 0.54).abs() <= 0.01);
        assert!((d.loop_gain - 19.83).abs() <= 0.2);
        assert!(d.magnitude_residual.abs() < 1e-9);
        assert!(d.angle_residual_deg.abs() < 0.01);
        assert!((d.gains.kp - d.loop_gain * d.zero).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn output_always_in_limits(errs in prop::collection::vec(-500.0f64..500.0, 1..100)) {
            let g = PiGains::tuner_default();
            let lim = ActuatorLimits::default_for(&g);
            let mut s = PiState::default();
            for e in errs {
                let d = pi_step(&g, &mut s, &lim, e);
                prop_assert!(d >= lim.min_duty && d <= lim.max_duty);
                if s.saturated_last {
                    prop_assert_eq!(s.integral_sum, lim.integral_threshold);
                }
            }
        }

        #[test]
        fn dominant_pole_inside_unit_circle(zeta in 0.001f64..0.999, r in 0.001f64..0.499) {
            prop_assert!(dominant_pole(zeta, r).unwrap().norm() < 1.0);
        }

        #[test]
        fn design_satisfies_both_criteria(zeta in 0.3f64..0.98, r in 0.02f64..0.2) {
            if let Ok(d) = design_pi_root_locus(&nominal_plant(), zeta, r) {
                prop_assert!(d.magnitude_residual.abs() < 1e-9);
                prop_assert!(d.angle_residual_deg.abs() < 0.01);
            }
        }
    }
}
