use serde::{Deserialize, Serialize};

use super::cascade::{Cascade, Timestamp};
use crate::error::{Error, Result};

/// Per-time-unit adoption counts of one news item since `t0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdoptionHistogram {
    pub bucket_counts: Vec<u32>,
    pub t0: Timestamp,
    pub unit_seconds: i64,
}

impl AdoptionHistogram {
    /// Buckets adoption `times` observed at `observe_until`.
    ///
    /// Bucket `i` covers `[t0 + i*unit, t0 + (i+1)*unit)`. The histogram has
    /// `max(1, ceil((observe_until - t0) / unit))` buckets, capped at `d_max`;
    /// an adoption exactly at `observe_until` lands in the last bucket.
    /// Adoptions outside `[t0, observe_until]` or past the cap are ignored.
    pub fn from_times(
        t0: Timestamp,
        times: impl IntoIterator<Item = Timestamp>,
        observe_until: Timestamp,
        unit_seconds: i64,
        d_max: usize,
    ) -> Result<Self> {
        if unit_seconds <= 0 {
            return Err(Error::Invalid(format!("unit_seconds must be positive, got {unit_seconds}")));
        }
        if d_max == 0 {
            return Err(Error::Invalid("d_max must be positive".into()));
        }
        if observe_until < t0 {
            return Err(Error::Invalid(format!(
                "observation time {observe_until} precedes publication {t0}"
            )));
        }
        let span = observe_until - t0;
        let open_len = ((span + unit_seconds - 1) / unit_seconds).max(1) as usize;
        let len = open_len.min(d_max);
        let mut bucket_counts = vec![0u32; len];
        for t in times {
            if t < t0 || t > observe_until {
                continue;
            }
            let idx = (((t - t0) / unit_seconds) as usize).min(open_len - 1);
            if let Some(slot) = bucket_counts.get_mut(idx) {
                *slot += 1;
            }
        }
        Ok(AdoptionHistogram {
            bucket_counts,
            t0,
            unit_seconds,
        })
    }

    pub fn total(&self) -> u64 {
        self.bucket_counts.iter().map(|&c| c as u64).sum()
    }
}

/// Histogram of `cascade` observed at `observe_until`, anchored at the
/// initiator's timestamp.
pub fn build_adoption_histogram(
    cascade: &Cascade,
    observe_until: Timestamp,
    unit_seconds: i64,
    d_max: usize,
) -> Result<AdoptionHistogram> {
    AdoptionHistogram::from_times(
        cascade.start_time(),
        cascade.events().iter().map(|e| e.time),
        observe_until,
        unit_seconds,
        d_max,
    )
}
