//! Proposer-side behaviour: window throttling, payload supply, and metric
//! extraction from traces.

mod metrics;

pub use metrics::{collect_metrics, MetricsContext, MetricsRecord, PhaseMetrics, CSV_SCHEMA_VERSION};

use crate::config::{ScenarioConfig, Supply, WorkloadProfile};
use crate::types::{Micros, SlotNumber};

/// Proposing window of a node relative to its commit frontier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowPolicy {
    pub gsw: u64,
    pub msw: u64,
    pub effective: u64,
    /// Pure MTR: batch gating replaces the window.
    pub mtr_gated: bool,
}

impl WindowPolicy {
    pub fn new(gsw: u64, msw: u64, mtr_gated: bool) -> Self {
        Self {
            gsw,
            msw,
            effective: gsw.min(msw),
            mtr_gated,
        }
    }

    /// Hybrid runs cap the window at MSW; UTR and MTR have no structural
    /// limit since every epoch is known in advance.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let hybrid = matches!(cfg.regime, crate::ticketing::RegimeSpec::Htr { .. });
        let msw = if hybrid { cfg.msw() } else { u64::MAX };
        Self::new(cfg.gsw, msw, !cfg.uses_window())
    }

    /// Highest slot a node with this frontier may touch, or `None` when
    /// the window does not apply.
    pub fn limit(&self, frontier: SlotNumber) -> Option<SlotNumber> {
        (!self.mtr_gated).then(|| SlotNumber(frontier.0.saturating_add(self.effective)))
    }
}

/// Window check for a held ticket.
pub fn may_propose(policy: &WindowPolicy, frontier: SlotNumber, sn: SlotNumber) -> bool {
    policy.limit(frontier).is_none_or(|lim| sn <= lim)
}

/// Payloads available to one node over time.
#[derive(Clone, Debug)]
pub struct PayloadSupply {
    profile: WorkloadProfile,
    used: u64,
    sealed_at: Micros,
}

impl PayloadSupply {
    pub fn new(profile: WorkloadProfile) -> Self {
        Self {
            profile,
            used: 0,
            sealed_at: 0,
        }
    }

    pub fn available(&self, now: Micros) -> bool {
        match self.profile.supply {
            Supply::Unbounded => true,
            Supply::Rate { blocks_per_sec } => (now as f64 / 1e6 * blocks_per_sec).floor() as u64 > self.used,
        }
    }

    /// When the next payload appears, if it is not available yet.
    pub fn next_available(&self, now: Micros) -> Option<Micros> {
        match self.profile.supply {
            Supply::Unbounded => None,
            Supply::Rate { blocks_per_sec } if blocks_per_sec <= 0.0 => None,
            Supply::Rate { blocks_per_sec } => {
                let at = ((self.used + 1) as f64 / blocks_per_sec * 1e6).ceil() as Micros;
                (at > now).then_some(at)
            }
        }
    }

    /// When the payload of the next block became ready: the previous block
    /// was sealed and, under a rate limit, the payload had arrived.
    pub fn ready_at(&self) -> Micros {
        match self.profile.supply {
            Supply::Rate { blocks_per_sec } if blocks_per_sec > 0.0 => {
                let arrival = ((self.used + 1) as f64 / blocks_per_sec * 1e6).ceil() as Micros;
                self.sealed_at.max(arrival)
            }
            _ => self.sealed_at,
        }
    }

    pub fn take(&mut self, now: Micros) -> Vec<u8> {
        self.sealed_at = now;
        let seq = self.used;
        self.used += 1;
        let bytes = seq.to_be_bytes();
        let size = self.profile.payload_size;
        (0..size).map(|i| bytes[(8 - size.min(8) + i) % 8]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_window_is_min_of_gsw_and_msw() {
        let p = WindowPolicy::new(100, 50, false);
        assert_eq!(p.effective, 50);
        assert!(may_propose(&p, SlotNumber(10), SlotNumber(60)));
        assert!(!may_propose(&p, SlotNumber(10), SlotNumber(61)));
        let mtr = WindowPolicy::new(100, 50, true);
        assert!(may_propose(&mtr, SlotNumber(0), SlotNumber(10_000)));
    }

    #[test]
    fn rate_supply() {
        let mut s = PayloadSupply::new(WorkloadProfile {
            payload_size: 2,
            supply: Supply::Rate { blocks_per_sec: 1000.0 },
        });
        assert!(!s.available(0));
        assert_eq!(s.next_available(0), Some(1000));
        assert!(s.available(1000));
        assert_eq!(s.ready_at(), 1000);
        assert_eq!(s.take(1500).len(), 2);
        assert_eq!(s.ready_at(), 2000);
        assert!(!s.available(1999));
        let zero = PayloadSupply::new(WorkloadProfile {
            payload_size: 2,
            supply: Supply::Rate { blocks_per_sec: 0.0 },
        });
        assert!(!zero.available(1_000_000_000));
        assert_eq!(zero.next_available(0), None);
    }

    #[test]
    fn payloads_differ_and_have_requested_size() {
        let mut s = PayloadSupply::new(WorkloadProfile::default());
        let a = s.take(0);
        assert_eq!(s.ready_at(), 0);
        let b = s.take(7);
        assert_eq!(s.ready_at(), 7);
        assert_eq!(a.len(), 2);
        assert_ne!(a, b);
    }
}
