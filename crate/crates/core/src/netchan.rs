//! Simulated one-way delay channels on an integer-millisecond clock.

use std::collections::VecDeque;
use std::fmt;
use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("uniform delay bounds need lo <= hi (got {0}..{1})")]
    BadBounds(u64, u64),
    #[error("trace is empty")]
    EmptyTrace,
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A byte in flight. `seq`/`ack` are simulator bookkeeping that stand in for
/// the matching a real node performs on payload values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Frame {
    pub payload: u8,
    pub send_time: u64,
    pub deliver_time: u64,
    pub seq: u64,
    pub ack: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayPolicy {
    Fixed { delay_ms: u64 },
    /// Inclusive integer range.
    UniformRandom { lo_ms: u64, hi_ms: u64, seed: u64 },
    /// Replayed in order, wrapping around at the end.
    Trace { delays_ms: Vec<u64> },
}

#[derive(Debug, Clone)]
enum Sampler {
    Fixed(u64),
    Uniform { lo: u64, hi: u64, rng: Box<ChaCha8Rng> },
    Trace { delays: Vec<u64>, next: usize },
}

impl Sampler {
    fn sample(&mut self) -> u64 {
        match self {
            Sampler::Fixed(d) => *d,
            Sampler::Uniform { lo, hi, rng } => rng.gen_range(*lo..=*hi),
            Sampler::Trace { delays, next } => {
                let d = delays[*next];
                *next = (*next + 1) % delays.len();
                d
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Poll {
    /// Newest deliverable frame, if any.
    pub latest: Option<Frame>,
    /// Number of frames removed by this poll, including `latest`.
    pub drained: usize,
}

/// FIFO one-way channel.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    sampler: Sampler,
    queue: VecDeque<Frame>,
    last_deliver: u64,
    next_seq: u64,
    sent: u64,
    delivered: u64,
}

impl ChannelModel {
    pub fn new(policy: &DelayPolicy) -> Result<Self, ChannelError> {
        Self::with_stream(policy, 0)
    }

    /// Like [`ChannelModel::new`] but draws random delays from an independent
    /// stream, so two directions sharing a seed stay uncorrelated.
    pub fn with_stream(policy: &DelayPolicy, stream: u64) -> Result<Self, ChannelError> {
        let sampler = match policy {
            DelayPolicy::Fixed { delay_ms } => Sampler::Fixed(*delay_ms),
            DelayPolicy::UniformRandom { lo_ms, hi_ms, seed } => {
                if lo_ms > hi_ms {
                    return Err(ChannelError::BadBounds(*lo_ms, *hi_ms));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(stream);
                Sampler::Uniform { lo: *lo_ms, hi: *hi_ms, rng: Box::new(rng) }
            }
            DelayPolicy::Trace { delays_ms } => {
                if delays_ms.is_empty() {
                    return Err(ChannelError::EmptyTrace);
                }
                Sampler::Trace { delays: delays_ms.clone(), next: 0 }
            }
        };
        Ok(Self { sampler, queue: VecDeque::new(), last_deliver: 0, next_seq: 0, sent: 0, delivered: 0 })
    }

    pub fn send(&mut self, payload: u8, now: u64) -> Frame {
        self.send_tagged(payload, None, now)
    }

    /// Enqueues a frame; its delivery is never earlier than the previous one's.
    pub fn send_tagged(&mut self, payload: u8, ack: Option<u64>, now: u64) -> Frame {
        let deliver_time = (now + self.sampler.sample()).max(self.last_deliver);
        self.last_deliver = deliver_time;
        let frame = Frame { payload, send_time: now, deliver_time, seq: self.next_seq, ack };
        self.next_seq += 1;
        self.sent += 1;
        self.queue.push_back(frame);
        frame
    }

    /// Removes every frame deliverable at `now` and returns the newest.
    pub fn poll(&mut self, now: u64) -> Poll {
        let mut out = Poll::default();
        while self.queue.front().is_some_and(|f| f.deliver_time <= now) {
            out.latest = self.queue.pop_front();
            out.drained += 1;
        }
        self.delivered += out.drained as u64;
        out
    }

    /// Like [`ChannelModel::poll`] but returns every drained frame in order.
    pub fn drain(&mut self, now: u64) -> Vec<Frame> {
        let mut out = Vec::new();
        while self.queue.front().is_some_and(|f| f.deliver_time <= now) {
            out.extend(self.queue.pop_front());
        }
        self.delivered += out.len() as u64;
        out
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn in_flight(&self) -> u64 {
        self.queue.len() as u64
    }
}

/// Plant side samples on a clock; the controller reacts to deliveries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeClocking {
    pub plant_period_ms: u64,
    pub controller_event_driven: bool,
}

impl Default for NodeClocking {
    fn default() -> Self {
        Self { plant_period_ms: 20, controller_event_driven: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameEvent {
    NormalTransmission,
    VacantSampling,
    MessageRejection,
    DelayedTransmission,
}

impl FrameEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameEvent::NormalTransmission => "normal",
            FrameEvent::VacantSampling => "vacant",
            FrameEvent::MessageRejection => "rejection",
            FrameEvent::DelayedTransmission => "delayed",
        }
    }
}

impl fmt::Display for FrameEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EventContext {
    /// RTT of the accepted (newest) response in the window, if any.
    pub rtt_ms: Option<u64>,
    pub drained: usize,
    pub period_ms: u64,
}

pub fn classify(ctx: &EventContext) -> FrameEvent {
    match (ctx.drained, ctx.rtt_ms) {
        (0, _) => FrameEvent::VacantSampling,
        (n, _) if n >= 2 => FrameEvent::MessageRejection,
        (_, Some(rtt)) if rtt < ctx.period_ms => FrameEvent::NormalTransmission,
        _ => FrameEvent::DelayedTransmission,
    }
}

/// `sample_rate · bit_depth · channels` in bits per second.
pub fn bit_rate(sample_rate_hz: u64, bit_depth: u64, channels: u64) -> u64 {
    sample_rate_hz * bit_depth * channels
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Plant node to controller node.
    Uplink,
    /// Controller node to plant node.
    Downlink,
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    direction: Direction,
    delay_ms: u64,
}

/// Reads a `direction,delay_ms` trace and splits it by direction.
pub fn read_trace_csv<R: Read>(reader: R) -> Result<(Vec<u64>, Vec<u64>), ChannelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_error(e, 1))?.clone();
    if header.iter().collect::<Vec<_>>() != ["direction", "delay_ms"] {
        return Err(ChannelError::Parse { line: 1, msg: "expected header `direction,delay_ms`".into() });
    }
    let (mut up, mut down) = (Vec::new(), Vec::new());
    for rec in rdr.deserialize::<TraceRow>() {
        let row = rec.map_err(|e| parse_error(e, 0))?;
        match row.direction {
            Direction::Uplink => up.push(row.delay_ms),
            Direction::Downlink => down.push(row.delay_ms),
        }
    }
    Ok((up, down))
}

fn parse_error(e: csv::Error, fallback_line: u64) -> ChannelError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    ChannelError::Parse { line, msg: e.to_string() }
}
