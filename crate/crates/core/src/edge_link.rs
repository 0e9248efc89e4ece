//! Simulated robot ↔ edge datagram channel with the round-trip staleness
//! filter.
//!
//! Each request is sent at `sent_at`, reaches the edge after the uplink delay
//! `d1`, is processed, and the reply reaches the robot after the downlink
//! delay `d2`. The robot applies a reply only when `d1 + d2 ≤ τ_max`;
//! otherwise it is ignored. Messages may also be lost, and replies may
//! arrive out of order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("invalid delay model: {0}")]
    InvalidDelay(&'static str),
    #[error("loss probability {0} is outside [0, 1]")]
    InvalidLoss(f64),
    #[error("send schedule is not monotone at index {0}")]
    NonMonotoneSchedule(usize),
}

/// One-way delay distribution, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayModel {
    Constant {
        delay_s: f64,
    },
    Uniform {
        min_s: f64,
        max_s: f64,
    },
    /// `offset + Exp(mean)`.
    Exponential {
        offset_s: f64,
        mean_s: f64,
    },
}

impl DelayModel {
    pub fn validate(&self) -> Result<(), LinkError> {
        let ok = match *self {
            Self::Constant { delay_s } => delay_s >= 0.0 && delay_s.is_finite(),
            Self::Uniform { min_s, max_s } => min_s >= 0.0 && max_s >= min_s && max_s.is_finite(),
            Self::Exponential { offset_s, mean_s } => {
                offset_s >= 0.0 && offset_s.is_finite() && mean_s > 0.0 && mean_s.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(LinkError::InvalidDelay(
                "parameters must be finite and non-negative",
            ))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Constant { delay_s } => delay_s,
            Self::Uniform { min_s, max_s } => {
                if max_s > min_s {
                    rng.random_range(min_s..max_s)
                } else {
                    min_s
                }
            }
            Self::Exponential { offset_s, mean_s } => {
                offset_s + Exp::new(1.0 / mean_s).expect("validated mean").sample(rng)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkDelays {
    pub uplink: DelayModel,
    pub downlink: DelayModel,
    pub loss_prob: f64,
    pub seed: u64,
}

impl LinkDelays {
    pub fn validate(&self) -> Result<(), LinkError> {
        self.uplink.validate()?;
        self.downlink.validate()?;
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(LinkError::InvalidLoss(self.loss_prob));
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

/// Draws `(d1, d2)`.
pub fn sample_delays<R: Rng + ?Sized>(model: &LinkDelays, rng: &mut R) -> (f64, f64) {
    let d1 = model.uplink.sample(rng);
    let d2 = model.downlink.sample(rng);
    (d1, d2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StampedMessage<P> {
    pub id: u64,
    pub payload: P,
    /// Robot clock time the request left.
    pub sent_at: f64,
    /// Robot clock time the reply arrived.
    pub received_at: f64,
    pub d1: f64,
    pub d2: f64,
}

impl<P> StampedMessage<P> {
    pub fn round_trip(&self) -> f64 {
        self.d1 + self.d2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Ignore,
}

/// Accepts iff `d1 + d2 ≤ tau_max` (inclusive).
pub fn rtt_filter<P>(msg: &StampedMessage<P>, tau_max: f64) -> Verdict {
    if msg.round_trip() <= tau_max {
        Verdict::Accept
    } else {
        Verdict::Ignore
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    IgnoredStale,
    Lost,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Accepted => "accepted",
            Self::IgnoredStale => "ignored_stale",
            Self::Lost => "lost",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord<P> {
    pub message: StampedMessage<P>,
    pub outcome: Outcome,
}

impl<P> DeliveryRecord<P> {
    /// Arrival time for delivered replies, send time for lost ones.
    pub fn event_time(&self) -> f64 {
        match self.outcome {
            Outcome::Lost => self.message.sent_at,
            _ => self.message.received_at,
        }
    }

    pub fn summary(&self) -> DeliverySummary {
        DeliverySummary {
            id: self.message.id,
            sent_at: self.message.sent_at,
            d1: self.message.d1,
            d2: self.message.d2,
            outcome: self.outcome,
        }
    }
}

/// Flat export record, one per message.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeliverySummary {
    pub id: u64,
    pub sent_at: f64,
    pub d1: f64,
    pub d2: f64,
    pub outcome: Outcome,
}

/// Event-queue model of the channel. Requests are transmitted one by one;
/// the reply's fate and timing are fixed at send time from the seeded stream.
#[derive(Debug, Clone)]
pub struct EdgeChannel {
    model: LinkDelays,
    tau_max: f64,
    rng: ChaCha8Rng,
    next_id: u64,
}

impl EdgeChannel {
    pub fn new(model: LinkDelays, tau_max: f64) -> Result<Self, LinkError> {
        model.validate()?;
        Ok(Self {
            rng: model.rng(),
            model,
            tau_max,
            next_id: 0,
        })
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    /// Sends one request; `processing_time` is the edge compute time, which
    /// delays the reply but does not count toward the round trip.
    pub fn transmit<P>(
        &mut self,
        sent_at: f64,
        payload: P,
        processing_time: f64,
    ) -> DeliveryRecord<P> {
        let id = self.next_id;
        self.next_id += 1;
        // fixed draw order: loss, d1, d2
        let lost = self.rng.random::<f64>() < self.model.loss_prob;
        let (d1, d2) = sample_delays(&self.model, &mut self.rng);
        let message = StampedMessage {
            id,
            payload,
            sent_at,
            received_at: sent_at + d1 + processing_time.max(0.0) + d2,
            d1,
            d2,
        };
        let outcome = if lost {
            Outcome::Lost
        } else {
            match rtt_filter(&message, self.tau_max) {
                Verdict::Accept => Outcome::Accepted,
                Verdict::Ignore => Outcome::IgnoredStale,
            }
        };
        DeliveryRecord { message, outcome }
    }
}

/// Ordered delivery log; see [`channel_run`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryLog<P> {
    pub records: Vec<DeliveryRecord<P>>,
}

impl<P> Default for DeliveryLog<P> {
    fn default() -> Self {
        Self {
            records: Vec::new(),
        }
    }
}

impl<P> DeliveryLog<P> {
    /// Inserts keeping the log ordered by event time (ties by message id).
    pub fn insert(&mut self, record: DeliveryRecord<P>) {
        let key = (record.event_time(), record.message.id);
        let at = self
            .records
            .partition_point(|r| (r.event_time(), r.message.id) <= key);
        self.records.insert(at, record);
    }

    pub fn count(&self, outcome: Outcome) -> usize {
        self.records.iter().filter(|r| r.outcome == outcome).count()
    }

    pub fn summaries(&self) -> Vec<DeliverySummary> {
        self.records.iter().map(DeliveryRecord::summary).collect()
    }

    /// Records as CSV with header `id,sent_at,d1,d2,outcome`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,sent_at,d1,d2,outcome\n");
        for s in self.summaries() {
            out.push_str(&format!(
                "{},{:.8e},{:.8e},{:.8e},{}\n",
                s.id, s.sent_at, s.d1, s.d2, s.outcome
            ));
        }
        out
    }
}

/// Runs a whole send schedule through a fresh channel. `processing_time` maps
/// `(index, sent_at)` to the edge compute time.
pub fn channel_run<P, F>(
    sends: Vec<(f64, P)>,
    mut processing_time: F,
    model: &LinkDelays,
    tau_max: f64,
) -> Result<DeliveryLog<P>, LinkError>
where
    F: FnMut(usize, f64) -> f64,
{
    if let Some(i) = sends.windows(2).position(|w| w[1].0 < w[0].0) {
        return Err(LinkError::NonMonotoneSchedule(i + 1));
    }
    let mut channel = EdgeChannel::new(*model, tau_max)?;
    let mut log = DeliveryLog::default();
    for (i, (sent_at, payload)) in sends.into_iter().enumerate() {
        let proc = processing_time(i, sent_at);
        log.insert(channel.transmit(sent_at, payload, proc));
    }
    Ok(log)
}

/// The accepted reply with the latest `sent_at` among those that have
/// arrived by `now`. Ignored and lost messages never qualify.
pub fn latest_valid_estimate<P>(log: &DeliveryLog<P>, now: f64) -> Option<&P> {
    log.records
        .iter()
        .filter(|r| {
            r.outcome == Outcome::Accepted
                && r.message.received_at <= now
                && r.message.sent_at <= now
        })
        .max_by(|a, b| {
            a.message
                .sent_at
                .total_cmp(&b.message.sent_at)
                .then(a.message.id.cmp(&b.message.id))
        })
        .map(|r| &r.message.payload)
}
