//! Replays a short scripted delay/drop scenario on a single link and checks it
//! against the expected state sequence.
//!
//! The sender's output at presentation `k` is the value `k`, so the value a
//! receiver uses names the presentation it came from. The script delivers
//! presentations 1..=14 immediately, delays 15 by two, delivers 16 at once,
//! delays 17 by one and delivers 18 at once. At 17 the late packet from 15
//! arrives but is older than 16, so the receiver keeps 16; at 18 the new
//! packet overwrites the slot 17 had claimed.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelError, LinkState, ScriptedDraws, TransmitOutcome};

pub const TRACE_HOPS: u32 = 1;
pub const TRACE_MAX_DELAY: u64 = 2;
pub const TRACE_LENGTH: u64 = 18;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub k: u64,
    /// Delay drawn for the packet sent at `k`; `None` if dropped.
    pub delay: Option<u64>,
    /// Origin recorded in the arrival slot `k + delay` after sending.
    pub slot_after_send: Option<u64>,
    /// Origin found in slot `k` when receiving (0 = nothing arrived).
    pub arriving: u64,
    pub r_before: u64,
    pub r_after: u64,
    /// Sender output the receiver uses.
    pub used: f64,
}

impl fmt::Display for TraceStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k={:>2}: ", self.k)?;
        match (self.delay, self.slot_after_send) {
            (Some(d), Some(s)) => write!(f, "send d={d}, s[{}]={s}; ", self.k + d)?,
            _ => write!(f, "send dropped; ")?,
        }
        if self.arriving == 0 {
            write!(f, "nothing arrives; ")?;
        } else {
            write!(f, "s[{}]={} arrives; ", self.k, self.arriving)?;
        }
        if self.r_after == self.r_before {
            write!(f, "r stays {}, use o[{}]", self.r_after, self.r_after)
        } else {
            write!(f, "r := {}, use o[{}]", self.r_after, self.r_after)
        }
    }
}

pub fn script() -> Vec<Option<u64>> {
    let mut s = vec![Some(0); 14];
    s.extend([Some(2), Some(0), Some(1), Some(0)]);
    s
}

pub fn replay() -> Result<Vec<TraceStep>, ChannelError> {
    let mut link = LinkState::new(0, 1, TRACE_HOPS, 0.0, TRACE_MAX_DELAY, 0.0)?;
    let script = script();
    let mut draws = ScriptedDraws::new(script.clone());
    let mut steps = Vec::with_capacity(script.len());
    for (k, &delay) in (1..=TRACE_LENGTH).zip(&script) {
        let r_before = link.freshest();
        let slot_after_send = match link.transmit(k, k as f64, &mut draws)? {
            TransmitOutcome::Scheduled { arrival } => Some(link.scheduled_at(arrival)),
            TransmitOutcome::Dropped => None,
        };
        let arriving = link.scheduled_at(k);
        let rx = link.receive(k)?;
        steps.push(TraceStep { k, delay, slot_after_send, arriving, r_before, r_after: rx.origin, used: rx.value });
    }
    Ok(steps)
}

/// The expected state sequence.
pub fn golden() -> Vec<TraceStep> {
    let step = |k: u64, delay: u64, slot: u64, arriving: u64, r_before: u64, r_after: u64| TraceStep {
        k,
        delay: Some(delay),
        slot_after_send: Some(slot),
        arriving,
        r_before,
        r_after,
        used: r_after as f64,
    };
    let mut g: Vec<TraceStep> = (1..=14).map(|k| step(k, 0, k, k, k - 1, k)).collect();
    g.push(step(15, 2, 15, 0, 14, 14));
    g.push(step(16, 0, 16, 16, 14, 16));
    g.push(step(17, 1, 17, 15, 16, 16));
    g.push(step(18, 0, 18, 18, 16, 18));
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceMismatch {
    pub expected: Option<TraceStep>,
    pub actual: Option<TraceStep>,
}

impl fmt::Display for TraceMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |s: &Option<TraceStep>| s.map_or_else(|| "<missing>".to_string(), |s| s.to_string());
        write!(f, "expected [{}], got [{}]", show(&self.expected), show(&self.actual))
    }
}

/// First step where the replay departs from [`golden`], if any.
pub fn compare(actual: &[TraceStep]) -> Option<TraceMismatch> {
    let expected = golden();
    let n = expected.len().max(actual.len());
    (0..n).find_map(|i| {
        let (e, a) = (expected.get(i).copied(), actual.get(i).copied());
        (e != a).then_some(TraceMismatch { expected: e, actual: a })
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replay_matches_golden() {
        let steps = replay().unwrap();
        assert_eq!(compare(&steps), None);
        assert_eq!(steps[16].to_string(), "k=17: send d=1, s[18]=17; s[17]=15 arrives; r stays 16, use o[16]");
        assert_eq!(steps[17].to_string(), "k=18: send d=0, s[18]=18; s[18]=18 arrives; r := 18, use o[18]");
    }

    #[test]
    fn compare_reports_first_difference() {
        let mut steps = replay().unwrap();
        steps[16].r_after = 15;
        let m = compare(&steps).unwrap();
        assert_eq!(m.expected.unwrap().k, 17);
        steps.truncate(10);
        assert_eq!(compare(&steps).unwrap().actual, None);
    }
}
