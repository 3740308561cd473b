//! Round-trip-time measurement and per-sample delay estimation at the
//! controller node.

use std::collections::VecDeque;
use std::io::Write;

use thiserror::Error;

use crate::netchan::{classify, ChannelError, ChannelModel, DelayPolicy, EventContext, FrameEvent};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EstimatorError {
    #[error("id {0} is already pending")]
    DuplicateId(u64),
    #[error("received id {0} was never sent or was already answered")]
    OrphanFrame(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Response {
    pub id: u64,
    pub t1: u64,
    pub t2: u64,
}

impl Response {
    pub fn rtt(&self) -> u64 {
        self.t2 - self.t1
    }
}

/// Result of one sampling tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleEstimate {
    pub sample_ms: u64,
    pub event: FrameEvent,
    /// RTT of the accepted response, if one arrived in this period.
    pub rtt_ms: Option<u64>,
    pub tm_ms: u64,
}

#[derive(Debug, Clone)]
pub struct EstimatorState {
    period_ms: u64,
    /// Outstanding sends in send order.
    pending: VecDeque<(u64, u64)>,
    last_rtt: Option<u64>,
    estimate: u64,
    vacant_count: u32,
    /// Controller event instants (sends and receptions) still needed to
    /// evaluate the summation form for outstanding frames.
    events: Vec<u64>,
    window: Vec<Response>,
}

impl EstimatorState {
    pub fn new(period_ms: u64) -> Self {
        assert!(period_ms > 0, "sampling period must be positive");
        Self {
            period_ms,
            pending: VecDeque::new(),
            last_rtt: None,
            estimate: 0,
            vacant_count: 0,
            events: Vec::new(),
            window: Vec::new(),
        }
    }

    pub fn period_ms(&self) -> u64 {
        self.period_ms
    }

    pub fn estimate(&self) -> u64 {
        self.estimate
    }

    pub fn last_rtt(&self) -> Option<u64> {
        self.last_rtt
    }

    pub fn vacant_count(&self) -> u32 {
        self.vacant_count
    }

    pub fn pending(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.pending.iter().copied()
    }

    pub fn is_pending(&self, id: u64) -> bool {
        self.pending.iter().any(|&(p, _)| p == id)
    }

    fn note_event(&mut self, t: u64) {
        if self.events.last() != Some(&t) {
            self.events.push(t);
        }
    }

    pub fn on_send(&mut self, id: u64, t1: u64) -> Result<(), EstimatorError> {
        if self.is_pending(id) {
            return Err(EstimatorError::DuplicateId(id));
        }
        self.pending.push_back((id, t1));
        self.note_event(t1);
        Ok(())
    }

    /// Matches the oldest pending entry with `id`. Older outstanding entries
    /// can no longer be answered on a FIFO link and are dropped with it.
    pub fn on_receive(&mut self, id: u64, t2: u64) -> Result<u64, EstimatorError> {
        let pos = self
            .pending
            .iter()
            .position(|&(p, _)| p == id)
            .ok_or(EstimatorError::OrphanFrame(id))?;
        let (_, t1) = self.pending[pos];
        self.pending.drain(..=pos);
        self.note_event(t2);
        debug_assert_eq!(self.summed_gaps(t1, t2), t2 - t1);
        let oldest = self.pending.front().map_or(t2, |&(_, t)| t);
        self.events.retain(|&t| t >= oldest);
        self.window.push(Response { id, t1, t2 });
        Ok(t2 - t1)
    }

    /// Sum of the gaps between consecutive controller events from `t1` to
    /// `t2`, the summation form of the delay estimate.
    fn summed_gaps(&self, t1: u64, t2: u64) -> u64 {
        let run: Vec<u64> = self.events.iter().copied().filter(|&t| t >= t1 && t <= t2).collect();
        empirical_estimate(&event_gaps(&run))
    }

    /// Applies the estimation rules to the responses gathered since the
    /// previous tick. Call once per tick, in time order.
    pub fn estimate_at_sample(&mut self, sample_ms: u64) -> SampleEstimate {
        let accepted = self.window.last().copied();
        let ctx = EventContext {
            rtt_ms: accepted.map(|r| r.rtt()),
            drained: self.window.len(),
            period_ms: self.period_ms,
        };
        let event = classify(&ctx);
        match accepted {
            None => {
                if self.pending.iter().any(|&(_, t1)| t1 < sample_ms) {
                    self.estimate += self.period_ms;
                    self.vacant_count += 1;
                }
            }
            Some(r) => {
                self.estimate = r.rtt();
                self.last_rtt = Some(r.rtt());
                self.vacant_count = 0;
            }
        }
        self.window.clear();
        SampleEstimate { sample_ms, event, rtt_ms: ctx.rtt_ms, tm_ms: self.estimate }
    }
}

/// Differences between consecutive event instants.
pub fn event_gaps(instants: &[u64]) -> Vec<u64> {
    instants.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Summation form of the estimate over a vacant run: `Σ tᵢ`.
pub fn empirical_estimate(gaps: &[u64]) -> u64 {
    gaps.iter().sum()
}

/// Controller-side event of an RTT experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceEvent {
    Send { id: u64, t: u64 },
    Receive { id: u64, t: u64 },
    Tick { t: u64 },
}

impl TraceEvent {
    pub fn time(&self) -> u64 {
        match *self {
            TraceEvent::Send { t, .. } | TraceEvent::Receive { t, .. } | TraceEvent::Tick { t } => t,
        }
    }
}

/// Byte values sent and echoed in the reference RTT experiment:
/// `(byte, sent_at, received_at)`. The last two bytes were still in flight.
pub const REFERENCE_EXCHANGE: [(u64, u64, Option<u64>); 9] = [
    (50, 0, Some(74)),
    (60, 23, Some(83)),
    (70, 45, Some(108)),
    (80, 74, Some(124)),
    (90, 83, Some(143)),
    (100, 108, Some(167)),
    (110, 124, Some(184)),
    (120, 143, None),
    (130, 167, None),
];

/// Estimated delay column of the reference experiment at ticks 0..=160 ms.
pub const REFERENCE_TM: [u64; 9] = [0, 20, 40, 60, 74, 60, 63, 50, 60];

/// Event log of the reference experiment up to the 160 ms tick, in the
/// order the controller sees them (receptions, then tick, then sends).
pub fn reference_trace() -> Vec<TraceEvent> {
    let mut ev = Vec::new();
    for &(id, t1, t2) in &REFERENCE_EXCHANGE {
        ev.push(TraceEvent::Send { id, t: t1 });
        if let Some(t) = t2.filter(|&t| t <= 160) {
            ev.push(TraceEvent::Receive { id, t });
        }
    }
    ev.extend((0..=160).step_by(20).map(|t| TraceEvent::Tick { t }));
    let rank = |e: &TraceEvent| match e {
        TraceEvent::Receive { .. } => 0,
        TraceEvent::Tick { .. } => 1,
        TraceEvent::Send { .. } => 2,
    };
    ev.sort_by_key(|e| (e.time(), rank(e)));
    ev
}

/// Drives an estimator through a logged event sequence.
pub fn replay(events: &[TraceEvent], period_ms: u64) -> Result<Vec<SampleEstimate>, EstimatorError> {
    let mut est = EstimatorState::new(period_ms);
    let mut out = Vec::new();
    for e in events {
        match *e {
            TraceEvent::Send { id, t } => est.on_send(id, t)?,
            TraceEvent::Receive { id, t } => {
                est.on_receive(id, t)?;
            }
            TraceEvent::Tick { t } => out.push(est.estimate_at_sample(t)),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EchoConfig {
    /// Controller to remote node.
    pub forward: DelayPolicy,
    /// Remote node back to controller.
    pub back: DelayPolicy,
    pub period_ms: u64,
    pub duration_ms: u64,
}

#[derive(Debug, Clone)]
pub struct EchoRun {
    pub events: Vec<TraceEvent>,
    pub estimates: Vec<SampleEstimate>,
}

/// RTT experiment: an event-driven controller sends a fresh byte on every
/// echo it receives, or after a full period without one, and a remote node
/// echoes every byte immediately.
pub fn run_echo_session(cfg: &EchoConfig) -> Result<EchoRun, ChannelError> {
    let mut forward = ChannelModel::with_stream(&cfg.forward, 1)?;
    let mut back = ChannelModel::with_stream(&cfg.back, 2)?;
    let mut est = EstimatorState::new(cfg.period_ms);
    let mut events = Vec::new();
    let mut estimates = Vec::new();
    let mut last_send: Option<u64> = None;

    for now in 0..=cfg.duration_ms {
        let arrivals = back.drain(now);
        for f in &arrivals {
            let id = f.ack.expect("echo frames carry the original id");
            est.on_receive(id, now).expect("echoes arrive in send order");
            events.push(TraceEvent::Receive { id, t: now });
        }
        if now % cfg.period_ms == 0 {
            estimates.push(est.estimate_at_sample(now));
            events.push(TraceEvent::Tick { t: now });
        }
        let due = last_send.is_none_or(|t| now - t >= cfg.period_ms);
        if !arrivals.is_empty() || due {
            let f = forward.send_tagged((now % 256) as u8, None, now);
            est.on_send(f.seq, now).expect("sequence numbers are unique");
            events.push(TraceEvent::Send { id: f.seq, t: now });
            last_send = Some(now);
        }
        for f in forward.drain(now) {
            back.send_tagged(f.payload, Some(f.seq), now);
        }
    }
    Ok(EchoRun { events, estimates })
}

/// Writes `sample_ms,event,rtt_ms,tm_ms` rows; `rtt_ms` is empty on vacant ticks.
pub fn write_estimate_csv<W: Write>(out: W, rows: &[SampleEstimate]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sample_ms", "event", "rtt_ms", "tm_ms"])?;
    for r in rows {
        let rtt = r.rtt_ms.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([r.sample_ms.to_string(), r.event.to_string(), rtt, r.tm_ms.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
