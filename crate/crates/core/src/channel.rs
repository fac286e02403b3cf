//! Staleness protocol for one directed sender→receiver link.
//!
//! At presentation `k` the sender records its output and, unless the packet is
//! dropped, schedules it to arrive at `k + d`. The receiver then checks what
//! arrived at `k` and keeps using the newest originating presentation it has
//! ever seen. Both the arrival schedule and the output history are ring
//! buffers sized from the largest possible delay on the link.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;
use crate::stat_models::{DelayModel, DropModel, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("link {sender}->{receiver}: presentation {k} is not after {last}")]
    OutOfOrder { sender: usize, receiver: usize, k: u64, last: u64 },
    #[error("link {sender}->{receiver}: receive at {k} without a preceding transmit")]
    ReceiveWithoutTransmit { sender: usize, receiver: usize, k: u64 },
    #[error("link {sender}->{receiver}: delay {delay} exceeds link bound {max_delay}")]
    DelayOutOfRange { sender: usize, receiver: usize, delay: u64, max_delay: u64 },
    #[error("link {sender}->{receiver}: history slot for presentation {origin} was evicted")]
    EvictedHistory { sender: usize, receiver: usize, origin: u64 },
    #[error("scripted draws exhausted")]
    ScriptExhausted,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Source of drop decisions and delays for a link.
pub trait LinkDraws {
    /// Whether the packet is lost. `p_drop` is already clamped to `[0, 1]`.
    fn dropped(&mut self, p_drop: f64) -> Result<bool, ChannelError>;
    /// Delay, in presentations, for a delivered packet.
    fn delay(&mut self, n_hops: u32) -> Result<u64, ChannelError>;
}

/// Random draws from dedicated drop and delay streams.
#[derive(Debug, Clone)]
pub struct SampledDraws {
    drop_rng: SimRng,
    delay_rng: SimRng,
    /// `None` makes every delivered packet arrive in the presentation it was sent.
    delay_model: Option<DelayModel>,
}

impl SampledDraws {
    pub fn new(drop_rng: SimRng, delay_rng: SimRng, delay_model: Option<DelayModel>) -> Self {
        Self { drop_rng, delay_rng, delay_model }
    }
}

impl LinkDraws for SampledDraws {
    fn dropped(&mut self, p_drop: f64) -> Result<bool, ChannelError> {
        // z in (0, 1]: delivered iff z > p_drop, so p_drop = 0 never drops and
        // p_drop = 1 always does.
        let z = 1.0 - self.drop_rng.random::<f64>();
        Ok(z <= p_drop)
    }

    fn delay(&mut self, n_hops: u32) -> Result<u64, ChannelError> {
        match &self.delay_model {
            Some(m) => Ok(m.sample_delay(&mut self.delay_rng, n_hops)?),
            None => Ok(0),
        }
    }
}

/// Pre-scripted outcomes: `Some(d)` delivers with delay `d`, `None` drops.
#[derive(Debug, Clone, Default)]
pub struct ScriptedDraws {
    events: VecDeque<Option<u64>>,
    pending_delay: Option<u64>,
}

impl ScriptedDraws {
    pub fn new<I: IntoIterator<Item = Option<u64>>>(events: I) -> Self {
        Self { events: events.into_iter().collect(), pending_delay: None }
    }
}

impl LinkDraws for ScriptedDraws {
    fn dropped(&mut self, _p_drop: f64) -> Result<bool, ChannelError> {
        let ev = self.events.pop_front().ok_or(ChannelError::ScriptExhausted)?;
        self.pending_delay = ev;
        Ok(ev.is_none())
    }

    fn delay(&mut self, _n_hops: u32) -> Result<u64, ChannelError> {
        self.pending_delay.take().ok_or(ChannelError::ScriptExhausted)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransmitOutcome {
    Dropped,
    Scheduled { arrival: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reception {
    pub value: f64,
    pub origin: u64,
}

/// Counters for one link, exported into run reports.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub sender: usize,
    pub receiver: usize,
    pub n_hops: u32,
    pub p_drop: f64,
    pub sent: u64,
    pub dropped: u64,
    pub scheduled: u64,
    pub received: u64,
    pub delayed: u64,
    pub staleness_sum: u64,
    pub hop_transmissions: u64,
}

impl LinkStats {
    pub fn drop_rate(&self) -> f64 {
        if self.sent == 0 {
            0.0
        } else {
            self.dropped as f64 / self.sent as f64
        }
    }

    pub fn mean_staleness(&self) -> f64 {
        if self.received == 0 {
            0.0
        } else {
            self.staleness_sum as f64 / self.received as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct LinkState {
    sender: usize,
    receiver: usize,
    n_hops: u32,
    p_drop: f64,
    max_delay: u64,
    /// Newest origin scheduled to arrive at each presentation (0 = nothing).
    schedule: Vec<u64>,
    /// Sender output by originating presentation, tagged with that presentation.
    history: Vec<(u64, f64)>,
    freshest: u64,
    freshest_value: f64,
    /// Last presentation fully processed by `receive`.
    cursor: u64,
    pending: Option<u64>,
    stats: LinkStats,
}

impl LinkState {
    /// Builds a link with an explicit drop probability and delay bound.
    ///
    /// `initial_value` is what the receiver uses until the first packet arrives.
    pub fn new(sender: usize, receiver: usize, n_hops: u32, p_drop: f64, max_delay: u64, initial_value: f64) -> Result<Self, ChannelError> {
        if n_hops < 1 {
            return Err(ModelError::InvalidHopCount.into());
        }
        if !(0.0..=1.0).contains(&p_drop) {
            return Err(ModelError::InvalidParameter(format!("p_drop {p_drop} outside [0, 1]")).into());
        }
        let capacity = (max_delay + 2) as usize;
        let mut history = vec![(u64::MAX, f64::NAN); capacity];
        history[0] = (0, initial_value);
        Ok(Self {
            sender,
            receiver,
            n_hops,
            p_drop,
            max_delay,
            schedule: vec![0; capacity],
            history,
            freshest: 0,
            freshest_value: initial_value,
            cursor: 0,
            pending: None,
            stats: LinkStats { sender, receiver, n_hops, p_drop, ..Default::default() },
        })
    }

    /// Link whose drop probability and delay bound come from the empirical models.
    pub fn from_models(
        sender: usize,
        receiver: usize,
        n_hops: u32,
        drop_model: &DropModel,
        delay_model: &DelayModel,
        initial_value: f64,
    ) -> Result<Self, ChannelError> {
        let p_drop = drop_model.drop_probability(n_hops)?;
        Self::new(sender, receiver, n_hops, p_drop, delay_model.max_delay(n_hops), initial_value)
    }

    pub fn capacity(&self) -> usize {
        self.schedule.len()
    }

    pub fn n_hops(&self) -> u32 {
        self.n_hops
    }

    pub fn p_drop(&self) -> f64 {
        self.p_drop
    }

    pub fn freshest(&self) -> u64 {
        self.freshest
    }

    pub fn stats(&self) -> &LinkStats {
        &self.stats
    }

    /// Origin scheduled to arrive at presentation `k`, if `k` is still in the window.
    pub fn scheduled_at(&self, k: u64) -> u64 {
        self.schedule[self.slot(k)]
    }

    fn slot(&self, k: u64) -> usize {
        (k % self.schedule.len() as u64) as usize
    }

    fn take_arrival(&mut self, k: u64) -> Result<(), ChannelError> {
        let slot = self.slot(k);
        let origin = std::mem::take(&mut self.schedule[slot]);
        if origin > self.freshest {
            let (tag, value) = self.history[self.slot(origin)];
            if tag != origin {
                return Err(ChannelError::EvictedHistory { sender: self.sender, receiver: self.receiver, origin });
            }
            self.freshest = origin;
            self.freshest_value = value;
        }
        Ok(())
    }

    /// Sender side of presentation `k`.
    ///
    /// Presentations skipped since the last receive (a backward link idles
    /// through validation sweeps) have their arrivals folded in first.
    pub fn transmit<D: LinkDraws + ?Sized>(&mut self, k: u64, value: f64, draws: &mut D) -> Result<TransmitOutcome, ChannelError> {
        let last = self.pending.unwrap_or(self.cursor);
        if k <= last {
            return Err(ChannelError::OutOfOrder { sender: self.sender, receiver: self.receiver, k, last });
        }
        let skip_end = k.min(self.cursor + self.capacity() as u64);
        for idx in (self.cursor + 1)..skip_end {
            self.take_arrival(idx)?;
        }
        self.cursor = k - 1;
        self.pending = Some(k);

        let slot = self.slot(k);
        self.history[slot] = (k, value);
        self.stats.sent += 1;
        self.stats.hop_transmissions += u64::from(self.n_hops);

        if draws.dropped(self.p_drop)? {
            self.stats.dropped += 1;
            return Ok(TransmitOutcome::Dropped);
        }
        let delay = draws.delay(self.n_hops)?;
        if delay > self.max_delay {
            return Err(ChannelError::DelayOutOfRange {
                sender: self.sender,
                receiver: self.receiver,
                delay,
                max_delay: self.max_delay,
            });
        }
        let arrival = k + delay;
        let slot = self.slot(arrival);
        self.schedule[slot] = self.schedule[slot].max(k);
        self.stats.scheduled += 1;
        Ok(TransmitOutcome::Scheduled { arrival })
    }

    /// Receiver side of presentation `k`; must follow `transmit(k, ..)`.
    pub fn receive(&mut self, k: u64) -> Result<Reception, ChannelError> {
        if self.pending != Some(k) {
            return Err(ChannelError::ReceiveWithoutTransmit { sender: self.sender, receiver: self.receiver, k });
        }
        self.take_arrival(k)?;
        self.cursor = k;
        self.pending = None;
        self.stats.received += 1;
        if self.freshest < k {
            self.stats.delayed += 1;
        }
        self.stats.staleness_sum += k - self.freshest;
        Ok(Reception { value: self.freshest_value, origin: self.freshest })
    }
}
