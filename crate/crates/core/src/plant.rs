//! DC motor driven by an 8-bit PWM duty and read back through a slotted
//! encoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lti::{DifferenceEqState, DiscreteTf, LtiError};

/// Identified motor model `0.0831 z⁻¹/(1 − 0.92 z⁻¹)` (normalized units).
pub const MOTOR_NUM: f64 = 0.0831;
pub const MOTOR_POLE: f64 = 0.92;
/// Speed span used to normalize the motor output.
pub const SPEED_SPAN_RPS: f64 = 200.0;
pub const DUTY_SPAN: f64 = 255.0;

#[derive(Debug, Clone)]
pub struct MotorModel {
    dynamics: DifferenceEqState,
    input_scale: f64,
    output_scale: f64,
}

impl MotorModel {
    pub fn new(tf: DiscreteTf, input_scale: f64, output_scale: f64) -> Self {
        assert!(input_scale > 0.0 && output_scale > 0.0, "scales must be positive");
        Self { dynamics: DifferenceEqState::new(tf), input_scale, output_scale }
    }

    /// First-order model `b z⁻¹/(1 − p z⁻¹)` with the default duty and
    /// speed spans.
    pub fn first_order(b: f64, p: f64, sample_time: f64) -> Result<Self, LtiError> {
        let tf = DiscreteTf::new(vec![0.0, b], vec![1.0, -p], sample_time)?;
        Ok(Self::new(tf, 1.0 / DUTY_SPAN, SPEED_SPAN_RPS))
    }

    pub fn nominal() -> Self {
        Self::first_order(MOTOR_NUM, MOTOR_POLE, 0.02).expect("valid constants")
    }

    /// Speed at the current sample. Valid only for strictly proper dynamics,
    /// where the present output does not depend on the present duty.
    pub fn speed(&self) -> f64 {
        self.dynamics.preview(0.0) * self.output_scale
    }

    /// Applies `duty` for the current sample and returns the present speed.
    pub fn motor_step(&mut self, duty: u8) -> f64 {
        self.dynamics.step(f64::from(duty) * self.input_scale) * self.output_scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub slots: u32,
    /// Counting window in seconds.
    pub window: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { slots: 20, window: 0.02 }
    }
}

impl EncoderConfig {
    /// rps represented by one counted transition: `1/(slots·window)`.
    pub fn resolution(&self) -> f64 {
        1.0 / (f64::from(self.slots) * self.window)
    }
}

/// Counts whole transitions in the window and reports the speed as a byte.
pub fn encoder_read(config: &EncoderConfig, true_speed: f64) -> u8 {
    let res = config.resolution();
    let x = (true_speed.max(0.0) / res).floor();
    quantize(x * res)
}

fn quantize(rps: f64) -> u8 {
    rps.round().clamp(0.0, 255.0) as u8
}

/// Encoder with an optional seeded ±1 transition jitter.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    jitter: Option<ChaCha8Rng>,
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Self {
        Self { config, jitter: None }
    }

    pub fn with_jitter(config: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(7);
        Self { config, jitter: Some(rng) }
    }

    pub fn read(&mut self, true_speed: f64) -> u8 {
        let Some(rng) = self.jitter.as_mut() else {
            return encoder_read(&self.config, true_speed);
        };
        let res = self.config.resolution();
        let x = (true_speed.max(0.0) / res).floor() + f64::from(rng.gen_range(-1i8..=1));
        quantize(x.max(0.0) * res)
    }
}
