//! Closed-loop runs of plant node, channel and controller node, with
//! response metrics and file export.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::delay_approx::ApproxKind;
use crate::delay_est::{EstimatorError, EstimatorState, SampleEstimate};
use crate::lti::{DiscreteTf, LtiError};
use crate::netchan::{read_trace_csv, ChannelError, ChannelModel, DelayPolicy, FrameEvent};
use crate::pid::{ActuatorLimits, PiController, PiGains, PidError, TUNER_KI, TUNER_KP};
use crate::plant::{Encoder, EncoderConfig, MotorModel, DUTY_SPAN, MOTOR_NUM, MOTOR_POLE, SPEED_SPAN_RPS};
use crate::smith::{SmithConfig, SmithError, SmithMode, SmithState, NOMINAL_NUM, NOMINAL_POLE};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Smith(#[from] SmithError),
    #[error(transparent)]
    Pid(#[from] PidError),
    #[error(transparent)]
    Lti(#[from] LtiError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}

fn config_err(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Config(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSettings {
    /// `b` in `b z⁻¹/(1 − p z⁻¹)`.
    pub num: f64,
    pub pole: f64,
    pub speed_span_rps: f64,
}

impl Default for PlantSettings {
    fn default() -> Self {
        Self { num: MOTOR_NUM, pole: MOTOR_POLE, speed_span_rps: SPEED_SPAN_RPS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSettings {
    pub slots: u32,
    pub window_s: f64,
    /// Seeded ±1 transition jitter.
    pub jitter: bool,
}

impl Default for EncoderSettings {
    fn default() -> Self {
        Self { slots: 20, window_s: 0.02, jitter: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VacantPolicy {
    /// Recompute PI on the last measurement and send the result.
    #[default]
    Resend,
    /// Send the previous duty again without recomputing.
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSettings {
    pub kp: f64,
    pub ki: f64,
    pub min_duty: u8,
    pub max_duty: u8,
    /// Defaults to `max_duty/(ki·T)`.
    pub integral_threshold: Option<f64>,
    pub vacant_policy: VacantPolicy,
    /// Execute on every delivery (true) or only on the controller's own ticks.
    pub event_driven: bool,
}

impl Default for ControllerSettings {
    fn default() -> Self {
        Self {
            kp: TUNER_KP,
            ki: TUNER_KI,
            min_duty: 0,
            max_duty: 255,
            integral_threshold: None,
            vacant_policy: VacantPolicy::Resend,
            event_driven: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Fixed { delay_ms: u64 },
    /// Inclusive range; draws from the scenario seed unless `seed` is given.
    UniformRandom { lo_ms: u64, hi_ms: u64, #[serde(default)] seed: Option<u64> },
    Trace { delays_ms: Vec<u64> },
    /// `direction,delay_ms` file; rows of this link's direction are used.
    TraceFile { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSettings {
    /// Plant node to controller node.
    pub uplink: ChannelSpec,
    /// Controller node to plant node.
    pub downlink: ChannelSpec,
}

impl ChannelSettings {
    pub fn symmetric(spec: ChannelSpec) -> Self {
        Self { uplink: spec.clone(), downlink: spec }
    }

    /// Fixed link whose round trip is `rtt_ms`, split evenly.
    pub fn fixed_rtt(rtt_ms: u64) -> Self {
        Self {
            uplink: ChannelSpec::Fixed { delay_ms: rtt_ms / 2 },
            downlink: ChannelSpec::Fixed { delay_ms: rtt_ms - rtt_ms / 2 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmithSwitch {
    #[default]
    Off,
    Classical,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmithSettings {
    pub mode: SmithSwitch,
    /// Approximation used by the adaptive predictor.
    #[serde(default)]
    pub kind: Option<ApproxKind>,
    /// Fixed delay of the classical predictor.
    #[serde(default)]
    pub tau_ms: Option<f64>,
    #[serde(default)]
    pub smoothing: Option<f64>,
    #[serde(default = "default_nominal_num")]
    pub nominal_num: f64,
    #[serde(default = "default_nominal_pole")]
    pub nominal_pole: f64,
}

fn default_nominal_num() -> f64 {
    NOMINAL_NUM
}

fn default_nominal_pole() -> f64 {
    NOMINAL_POLE
}

impl Default for SmithSettings {
    fn default() -> Self {
        Self {
            mode: SmithSwitch::Off,
            kind: None,
            tau_ms: None,
            smoothing: None,
            nominal_num: NOMINAL_NUM,
            nominal_pole: NOMINAL_POLE,
        }
    }
}

impl SmithSettings {
    pub fn classical(tau_ms: f64) -> Self {
        Self { mode: SmithSwitch::Classical, tau_ms: Some(tau_ms), ..Self::default() }
    }

    pub fn adaptive(kind: ApproxKind) -> Self {
        Self { mode: SmithSwitch::Adaptive, kind: Some(kind), ..Self::default() }
    }

    fn to_config(&self, sample_time: f64) -> Result<Option<SmithConfig>, ScenarioError> {
        let mode = match self.mode {
            SmithSwitch::Off => return Ok(None),
            SmithSwitch::Classical => {
                let tau = self.tau_ms.ok_or_else(|| config_err("smith.tau_ms is required in classical mode"))?;
                SmithMode::ClassicalFixed { tau_m: tau / 1000.0 }
            }
            SmithSwitch::Adaptive => {
                let kind = self.kind.ok_or_else(|| config_err("smith.kind is required in adaptive mode"))?;
                SmithMode::Adaptive { kind }
            }
        };
        let nominal_plant = DiscreteTf::new(vec![0.0, self.nominal_num], vec![1.0, -self.nominal_pole], sample_time)?;
        Ok(Some(SmithConfig { mode, nominal_plant, smoothing: self.smoothing }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SetpointProfile {
    Step { value_rps: f64, #[serde(default)] start_ms: u64 },
    Square { low_rps: f64, high_rps: f64, period_ms: u64 },
}

impl SetpointProfile {
    pub fn at(&self, t_ms: u64) -> f64 {
        match *self {
            SetpointProfile::Step { value_rps, start_ms } => {
                if t_ms >= start_ms {
                    value_rps
                } else {
                    0.0
                }
            }
            SetpointProfile::Square { low_rps, high_rps, period_ms } => {
                if (t_ms % period_ms) < period_ms / 2 {
                    high_rps
                } else {
                    low_rps
                }
            }
        }
    }

    /// Level the response is judged against.
    pub fn target(&self) -> f64 {
        match *self {
            SetpointProfile::Step { value_rps, .. } => value_rps,
            SetpointProfile::Square { high_rps, .. } => high_rps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_sample_time")]
    pub sample_time_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub plant: PlantSettings,
    #[serde(default)]
    pub encoder: EncoderSettings,
    #[serde(default)]
    pub controller: ControllerSettings,
    pub channel: ChannelSettings,
    #[serde(default)]
    pub smith: SmithSettings,
    pub setpoint: SetpointProfile,
}

fn default_sample_time() -> f64 {
    0.02
}

pub const PRESETS: [&str; 8] = [
    "wired",
    "p2p-80ms",
    "p2p-60ms",
    "intermediate-uniform",
    "intermediate-trace",
    "classical-60ms",
    "adaptive-dfr",
    "adaptive-pade",
];

const INTERMEDIATE_TRACE: &str = include_str!("../data/intermediate_trace.csv");

impl ScenarioConfig {
    /// 25 s step to 100 rps under the tuner gains on the given link.
    pub fn base(channel: ChannelSettings) -> Self {
        Self {
            sample_time_s: 0.02,
            duration_s: 25.0,
            seed: 0,
            plant: PlantSettings::default(),
            encoder: EncoderSettings::default(),
            controller: ControllerSettings::default(),
            channel,
            smith: SmithSettings::default(),
            setpoint: SetpointProfile::Step { value_rps: 100.0, start_ms: 0 },
        }
    }

    pub fn with_smith(mut self, smith: SmithSettings) -> Self {
        self.smith = smith;
        self
    }

    pub fn preset(name: &str) -> Result<Self, ScenarioError> {
        let uniform = || ChannelSettings::symmetric(ChannelSpec::UniformRandom { lo_ms: 80, hi_ms: 200, seed: None });
        Ok(match name {
            "wired" => Self::base(ChannelSettings::fixed_rtt(0)),
            "p2p-80ms" => Self::base(ChannelSettings::fixed_rtt(80)),
            "p2p-60ms" => Self::base(ChannelSettings::fixed_rtt(60)),
            "intermediate-uniform" => Self::base(uniform()),
            "intermediate-trace" => {
                let (up, down) = read_trace_csv(INTERMEDIATE_TRACE.as_bytes())?;
                Self::base(ChannelSettings {
                    uplink: ChannelSpec::Trace { delays_ms: up },
                    downlink: ChannelSpec::Trace { delays_ms: down },
                })
            }
            "classical-60ms" => Self::base(ChannelSettings::fixed_rtt(60)).with_smith(SmithSettings::classical(60.0)),
            "adaptive-dfr" => Self::base(uniform()).with_smith(SmithSettings::adaptive(ApproxKind::Dfr)),
            "adaptive-pade" => Self::base(uniform()).with_smith(SmithSettings::adaptive(ApproxKind::Pade2)),
            other => return Err(ScenarioError::UnknownPreset(other.to_string())),
        })
    }

    /// Parses a JSON config; relative trace paths resolve against the
    /// file's directory.
    pub fn from_json_file(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path)?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|source| ScenarioError::Json { path: path.to_path_buf(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for spec in [&mut cfg.channel.uplink, &mut cfg.channel.downlink] {
            if let ChannelSpec::TraceFile { path } = spec {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn period_ms(&self) -> Result<u64, ScenarioError> {
        let ms = self.sample_time_s * 1000.0;
        if !(ms >= 1.0) || (ms - ms.round()).abs() > 1e-9 {
            return Err(config_err(format!("sample_time_s {} must be a whole number of milliseconds", self.sample_time_s)));
        }
        Ok(ms.round() as u64)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.period_ms()?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(config_err("duration_s must be positive"));
        }
        let levels = match self.setpoint {
            SetpointProfile::Step { value_rps, .. } => vec![value_rps],
            SetpointProfile::Square { low_rps, high_rps, period_ms } => {
                if period_ms < 2 {
                    return Err(config_err("square setpoint period_ms must be at least 2"));
                }
                vec![low_rps, high_rps]
            }
        };
        if levels.iter().any(|v| !(0.0..=200.0).contains(v)) {
            return Err(config_err("setpoint must lie within [0, 200] rps"));
        }
        if !(self.plant.speed_span_rps > 0.0) {
            return Err(config_err("plant.speed_span_rps must be positive"));
        }
        if self.encoder.slots == 0 || !(self.encoder.window_s > 0.0) {
            return Err(config_err("encoder needs slots > 0 and window_s > 0"));
        }
        self.gains()?;
        self.limits()?;
        self.smith.to_config(self.sample_time_s)?;
        Ok(())
    }

    fn gains(&self) -> Result<PiGains, ScenarioError> {
        Ok(PiGains::new(self.controller.kp, self.controller.ki, self.sample_time_s)?)
    }

    fn limits(&self) -> Result<ActuatorLimits, ScenarioError> {
        let c = &self.controller;
        let default = ActuatorLimits::default_for(&self.gains()?);
        let threshold = c.integral_threshold.unwrap_or_else(|| {
            let ki_t = self.gains().map(|g| g.ki_t()).unwrap_or(0.0);
            if ki_t > 0.0 {
                f64::from(c.max_duty) / ki_t
            } else {
                default.integral_threshold
            }
        });
        Ok(ActuatorLimits::new(c.min_duty, c.max_duty, threshold)?)
    }

    fn policy(&self, spec: &ChannelSpec, uplink: bool) -> Result<DelayPolicy, ScenarioError> {
        Ok(match spec {
            ChannelSpec::Fixed { delay_ms } => DelayPolicy::Fixed { delay_ms: *delay_ms },
            ChannelSpec::UniformRandom { lo_ms, hi_ms, seed } => {
                DelayPolicy::UniformRandom { lo_ms: *lo_ms, hi_ms: *hi_ms, seed: seed.unwrap_or(self.seed) }
            }
            ChannelSpec::Trace { delays_ms } => DelayPolicy::Trace { delays_ms: delays_ms.clone() },
            ChannelSpec::TraceFile { path } => {
                let (up, down) = read_trace_csv(fs::File::open(path)?)?;
                DelayPolicy::Trace { delays_ms: if uplink { up } else { down } }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub t_ms: u64,
    pub setpoint: f64,
    pub speed_meas: u8,
    pub speed_true: f64,
    /// Duty applied from this tick until the next.
    pub duty: u8,
    pub tm_ms: u64,
    pub event: FrameEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkCounts {
    pub sent: u64,
    pub delivered: u64,
    pub in_flight: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub sample_time_s: f64,
    pub rows: Vec<RunRow>,
    pub uplink: LinkCounts,
    pub downlink: LinkCounts,
    /// Controller executions (arrival-triggered plus vacant).
    pub executions: u64,
}

fn counts(c: &ChannelModel) -> LinkCounts {
    LinkCounts { sent: c.sent(), delivered: c.delivered(), in_flight: c.in_flight() }
}

/// Simulates the loop on a 1 ms clock. Within each millisecond the plant
/// node samples (on its ticks), the controller reacts to deliveries, and the
/// plant node then applies the newest duty (on its ticks).
pub fn run_closed_loop(cfg: &ScenarioConfig) -> Result<RunRecord, ScenarioError> {
    cfg.validate()?;
    let period = cfg.period_ms()?;
    let t = cfg.sample_time_s;
    let span = cfg.plant.speed_span_rps;
    let end_ms = (cfg.duration_s * 1000.0).round() as u64;

    let tf = DiscreteTf::new(vec![0.0, cfg.plant.num], vec![1.0, -cfg.plant.pole], t)?;
    let mut motor = MotorModel::new(tf, 1.0 / DUTY_SPAN, span);
    let enc_cfg = EncoderConfig { slots: cfg.encoder.slots, window: cfg.encoder.window_s };
    let mut encoder = if cfg.encoder.jitter { Encoder::with_jitter(enc_cfg, cfg.seed) } else { Encoder::new(enc_cfg) };
    let mut uplink = ChannelModel::with_stream(&cfg.policy(&cfg.channel.uplink, true)?, 1)?;
    let mut downlink = ChannelModel::with_stream(&cfg.policy(&cfg.channel.downlink, false)?, 2)?;

    let mut pi = PiController::new(cfg.gains()?, cfg.limits()?);
    let smith_cfg = cfg.smith.to_config(t)?;
    let adaptive = matches!(smith_cfg.as_ref().map(|c| c.mode), Some(SmithMode::Adaptive { .. }));
    let mut smith = smith_cfg.map(SmithState::new).transpose()?;
    let mut est = EstimatorState::new(period);

    // plant node
    let mut duty: u8 = 0;
    let mut applied: Option<u64> = None;
    let mut acked: Option<u64> = None;
    // controller node
    let mut last_meas = 0.0;
    let mut last_exec: Option<u64> = None;
    let mut last_duty: u8 = 0;
    let mut tick_est = SampleEstimate { sample_ms: 0, event: FrameEvent::VacantSampling, rtt_ms: None, tm_ms: 0 };
    let mut executions = 0;

    let mut rows = Vec::with_capacity((end_ms / period) as usize);
    for now in 0..end_ms {
        let tick = now % period == 0;
        let mut sampled = (0.0, 0u8);
        if tick {
            if let Some(f) = downlink.poll(now).latest {
                duty = f.payload;
                applied = Some(f.seq);
            }
            let v = motor.speed();
            let meas = encoder.read(v);
            let ack = if applied != acked { applied } else { None };
            acked = applied;
            uplink.send_tagged(meas, ack, now);
            sampled = (v, meas);
        }

        let frames = uplink.drain(now);
        for f in &frames {
            if let Some(id) = f.ack.filter(|&id| est.is_pending(id)) {
                est.on_receive(id, now)?;
            }
        }
        let arrived = frames.last().copied();
        if tick {
            tick_est = est.estimate_at_sample(now);
        }
        let execute = if cfg.controller.event_driven {
            arrived.is_some() || last_exec.is_none_or(|t0| now - t0 >= period)
        } else {
            tick
        };
        if execute {
            if let Some(f) = arrived {
                last_meas = f64::from(f.payload);
            }
            let hold = arrived.is_none() && last_exec.is_some() && cfg.controller.vacant_policy == VacantPolicy::Hold;
            let out = if hold {
                last_duty
            } else {
                let mut correction = 0.0;
                if let Some(s) = smith.as_mut() {
                    if adaptive {
                        s.adaptive_update(est.estimate() as f64)?;
                    }
                    correction = s.peek_correction() * span;
                }
                pi.step(cfg.setpoint.at(now) - last_meas - correction)
            };
            if let Some(s) = smith.as_mut() {
                s.smith_correction(f64::from(out) / DUTY_SPAN);
            }
            let f = downlink.send_tagged(out, None, now);
            est.on_send(f.seq, now)?;
            last_exec = Some(now);
            last_duty = out;
            executions += 1;
        }

        if tick {
            if let Some(f) = downlink.poll(now).latest {
                duty = f.payload;
                applied = Some(f.seq);
            }
            motor.motor_step(duty);
            rows.push(RunRow {
                t_ms: now,
                setpoint: cfg.setpoint.at(now),
                speed_meas: sampled.1,
                speed_true: sampled.0,
                duty,
                tm_ms: tick_est.tm_ms,
                event: tick_est.event,
            });
        }
    }
    Ok(RunRecord { sample_time_s: t, rows, uplink: counts(&uplink), downlink: counts(&downlink), executions })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub overshoot_pct: Option<f64>,
    pub settling_time_s: Option<f64>,
    /// Mean of `setpoint − y` over the final tenth of the run.
    pub steady_state_error: f64,
    pub ise: f64,
    pub trailing_half_ise: f64,
}

/// Metrics of a sampled response `y` against a constant setpoint.
pub fn metrics_from_series(y: &[f64], sample_time_s: f64, setpoint: f64) -> Metrics {
    let n = y.len();
    let sq = |v: &f64| (setpoint - v).powi(2) * sample_time_s;
    let ise = y.iter().map(sq).sum();
    let trailing_half_ise = y[n / 2..].iter().map(sq).sum();
    let tail = &y[n - (n / 10).max(1)..];
    let steady_state_error = tail.iter().map(|v| setpoint - v).sum::<f64>() / tail.len() as f64;
    let (overshoot_pct, settling_time_s) = if setpoint == 0.0 {
        (None, None)
    } else {
        let peak = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let overshoot = ((peak - setpoint) / setpoint * 100.0).max(0.0);
        let band = 0.02 * setpoint.abs();
        let settling = match y.iter().rposition(|v| (v - setpoint).abs() > band) {
            None => Some(0.0),
            Some(k) if k + 1 < n => Some((k + 1) as f64 * sample_time_s),
            Some(_) => None,
        };
        (Some(overshoot), settling)
    };
    Metrics { overshoot_pct, settling_time_s, steady_state_error, ise, trailing_half_ise }
}

/// Metrics of the measured speed in `record`.
pub fn compute_metrics(record: &RunRecord, setpoint: f64) -> Metrics {
    let y: Vec<f64> = record.rows.iter().map(|r| f64::from(r.speed_meas)).collect();
    metrics_from_series(&y, record.sample_time_s, setpoint)
}

pub fn write_run_csv<W: Write>(out: W, record: &RunRecord) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t_ms", "setpoint", "speed_meas", "speed_true", "duty", "tm_ms", "event"])?;
    for r in &record.rows {
        w.write_record([
            r.t_ms.to_string(),
            r.setpoint.to_string(),
            r.speed_meas.to_string(),
            format!("{:.6}", r.speed_true),
            r.duty.to_string(),
            r.tm_ms.to_string(),
            r.event.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_csv<W: Write>(out: W, m: &Metrics) -> Result<(), ScenarioError> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "value"])?;
    w.write_record(["overshoot_pct", &opt(m.overshoot_pct)])?;
    w.write_record(["settling_time_s", &opt(m.settling_time_s)])?;
    w.write_record(["steady_state_error_rps", &format!("{:.6}", m.steady_state_error)])?;
    w.write_record(["ise", &format!("{:.6}", m.ise)])?;
    w.write_record(["trailing_half_ise", &format!("{:.6}", m.trailing_half_ise)])?;
    w.flush()?;
    Ok(())
}

/// Whitespace-separated columns with a `#` header, for gnuplot and friends.
pub fn write_plot_data<W: Write>(mut out: W, record: &RunRecord) -> std::io::Result<()> {
    writeln!(out, "# t_s setpoint speed_meas speed_true duty tm_ms")?;
    for r in &record.rows {
        writeln!(
            out,
            "{:.3} {} {} {:.6} {} {}",
            r.t_ms as f64 / 1000.0,
            r.setpoint,
            r.speed_meas,
            r.speed_true,
            r.duty,
            r.tm_ms
        )?;
    }
    Ok(())
}

/// Writes `run.csv`, `metrics.csv` and `speed.dat` into `dir`.
pub fn write_outputs(dir: &Path, record: &RunRecord, metrics: &Metrics) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir)?;
    write_run_csv(fs::File::create(dir.join("run.csv"))?, record)?;
    write_metrics_csv(fs::File::create(dir.join("metrics.csv"))?, metrics)?;
    write_plot_data(std::io::BufWriter::new(fs::File::create(dir.join("speed.dat"))?), record)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_of_ideal_trace() {
        let m = metrics_from_series(&[100.0; 50], 0.02, 100.0);
        assert_eq!((m.overshoot_pct, m.settling_time_s, m.ise), (Some(0.0), Some(0.0), 0.0));
    }

    #[test]
    fn metrics_of_first_order_rise() {
        let y: Vec<f64> = (0..300).map(|k| 100.0 * (1.0 - 0.92f64.powi(k))).collect();
        let m = metrics_from_series(&y, 0.02, 100.0);
        assert_eq!(m.overshoot_pct, Some(0.0));
        assert!((m.settling_time_s.unwrap() - 0.94).abs() < 1e-12);
    }

    #[test]
    fn metrics_overshoot_and_zero_setpoint() {
        let m = metrics_from_series(&[0.0, 120.0, 100.0, 100.0], 0.02, 100.0);
        assert!((m.overshoot_pct.unwrap() - 20.0).abs() < 1e-12);
        let m = metrics_from_series(&[0.0, 0.0], 0.02, 0.0);
        assert_eq!((m.overshoot_pct, m.settling_time_s), (None, None));
    }

    #[test]
    fn zero_setpoint_is_quiescent() {
        let mut cfg = ScenarioConfig::preset("p2p-80ms").unwrap();
        cfg.setpoint = SetpointProfile::Step { value_rps: 0.0, start_ms: 0 };
        cfg.duration_s = 2.0;
        let rec = run_closed_loop(&cfg).unwrap();
        assert!(rec.rows.iter().all(|r| r.duty == 0 && r.speed_meas == 0 && r.speed_true == 0.0));
    }

    #[test]
    fn rows_are_on_the_sample_grid() {
        let rec = run_closed_loop(&ScenarioConfig::preset("intermediate-trace").unwrap()).unwrap();
        assert_eq!(rec.rows.len(), 1250);
        assert!(rec.rows.iter().enumerate().all(|(k, r)| r.t_ms == 20 * k as u64));
        for l in [rec.uplink, rec.downlink] {
            assert_eq!(l.sent, l.delivered + l.in_flight);
        }
    }

    #[test]
    fn fixed_link_rtt_is_measured_exactly() {
        for rtt in [80, 240, 300] {
            let rec = run_closed_loop(&ScenarioConfig::base(ChannelSettings::fixed_rtt(rtt))).unwrap();
            assert!(rec.rows[100..].iter().all(|r| r.tm_ms == rtt), "rtt {rtt}");
        }
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let good = serde_json::to_string(&ScenarioConfig::preset("adaptive-dfr").unwrap()).unwrap();
        assert!(serde_json::from_str::<ScenarioConfig>(&good).is_ok());
        let bad = good.replacen("\"seed\"", "\"sede\"", 1);
        assert!(serde_json::from_str::<ScenarioConfig>(&bad).is_err());
        let mut cfg = ScenarioConfig::preset("wired").unwrap();
        cfg.setpoint = SetpointProfile::Step { value_rps: 250.0, start_ms: 0 };
        assert!(matches!(run_closed_loop(&cfg), Err(ScenarioError::Config(_))));
        cfg = ScenarioConfig::preset("wired").unwrap();
        cfg.smith = SmithSettings { mode: SmithSwitch::Classical, ..SmithSettings::default() };
        assert!(cfg.validate().is_err());
        assert!(ScenarioConfig::preset("nope").is_err());
    }

    #[test]
    fn all_presets_run() {
        for name in PRESETS {
            let mut cfg = ScenarioConfig::preset(name).unwrap();
            cfg.duration_s = 1.0;
            assert_eq!(run_closed_loop(&cfg).unwrap().rows.len(), 50, "{name}");
        }
    }
}
