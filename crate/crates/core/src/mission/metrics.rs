use super::{PerceptionEvent, Sample};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position tolerance used for the alignment timestamps, m.
pub const ALIGNMENT_TOLERANCE_M: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty time series")]
    EmptySeries,
}

/// Scalar outcome of one run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSummary {
    pub contact: bool,
    pub time_to_contact_s: Option<f64>,
    /// Vehicle speed at the contact sample.
    pub contact_speed_mps: Option<f64>,
    pub min_h: f64,
    /// Number of times `h` went from negative to non-negative.
    pub h_zero_crossings: usize,
    /// Smallest `h` from the first sample with `h >= 0` onwards.
    pub min_h_after_first_crossing: Option<f64>,
    /// First time both lateral errors are within tolerance.
    pub lateral_aligned_s: Option<f64>,
    /// First time the axial error is within tolerance.
    pub axial_aligned_s: Option<f64>,
    pub estimates_accepted: usize,
    pub estimates_ignored: usize,
    pub estimates_lost: usize,
    /// Accepted over all link outcomes; zero when nothing was sent.
    pub fraction_estimates_accepted: f64,
    pub duration_s: f64,
}

pub fn compute_metrics(series: &[Sample]) -> Result<RunSummary, MetricsError> {
    let last = series.last().ok_or(MetricsError::EmptySeries)?;
    let contact_sample = series.iter().find(|s| s.in_contact());

    let min_h = series.iter().map(|s| s.h).fold(f64::INFINITY, f64::min);
    let h_zero_crossings = series
        .windows(2)
        .filter(|w| w[0].h < 0.0 && w[1].h >= 0.0)
        .count();
    let min_h_after_first_crossing = series.iter().position(|s| s.h >= 0.0).map(|i| {
        series[i..]
            .iter()
            .map(|s| s.h)
            .fold(f64::INFINITY, f64::min)
    });

    let first_time = |pred: &dyn Fn(&Sample) -> bool| series.iter().find(|s| pred(s)).map(|s| s.t);
    let lateral_aligned_s = first_time(&|s| {
        s.e.y.abs() <= ALIGNMENT_TOLERANCE_M && s.e.z.abs() <= ALIGNMENT_TOLERANCE_M
    });
    let axial_aligned_s = first_time(&|s| s.e.x.abs() <= ALIGNMENT_TOLERANCE_M);

    let count = |event: PerceptionEvent| {
        series
            .iter()
            .flat_map(|s| s.perception.events())
            .filter(|e| **e == event)
            .count()
    };
    let accepted = count(PerceptionEvent::Accepted);
    let ignored = count(PerceptionEvent::IgnoredStale);
    let lost = count(PerceptionEvent::Lost);
    let total = accepted + ignored + lost;

    Ok(RunSummary {
        contact: contact_sample.is_some(),
        time_to_contact_s: contact_sample.map(|s| s.t),
        contact_speed_mps: contact_sample.map(|s| s.v.norm()),
        min_h,
        h_zero_crossings,
        min_h_after_first_crossing,
        lateral_aligned_s,
        axial_aligned_s,
        estimates_accepted: accepted,
        estimates_ignored: ignored,
        estimates_lost: lost,
        fraction_estimates_accepted: if total == 0 {
            0.0
        } else {
            accepted as f64 / total as f64
        },
        duration_s: last.t,
    })
}
