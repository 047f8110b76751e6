//! Identifiers and slot/epoch arithmetic shared by every module.

use std::fmt;

use serde::{Deserialize, Serialize};

/// A node in the network `{0, 1, ..., n-1}`.
///
/// The integer order stands in for sorting by public key.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Position in the replicated log. Real slots are 1-indexed; `SlotNumber(0)`
/// only appears as an empty commit frontier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SlotNumber(pub u64);

impl SlotNumber {
    pub const NONE: SlotNumber = SlotNumber(0);

    pub fn next(self) -> SlotNumber {
        SlotNumber(self.0 + 1)
    }
}

impl fmt::Display for SlotNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EpochNumber(pub u64);

impl fmt::Display for EpochNumber {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Epoch containing `sn` when each epoch holds `epoch_len` slots: `ceil(sn / L)`.
pub fn epoch_of(sn: SlotNumber, epoch_len: u64) -> EpochNumber {
    debug_assert!(sn.0 >= 1 && epoch_len >= 1);
    EpochNumber(sn.0.div_ceil(epoch_len))
}

/// Inclusive slot range `[(i-1)L+1, iL]` covered by an epoch.
pub fn epoch_slots(epoch: EpochNumber, epoch_len: u64) -> std::ops::RangeInclusive<u64> {
    let first = (epoch.0 - 1) * epoch_len + 1;
    first..=epoch.0 * epoch_len
}

/// Simulated time in integer microseconds.
pub type Micros = u64;

pub fn ms_to_us(ms: f64) -> Micros {
    (ms * 1000.0).round() as Micros
}

pub fn us_to_ms(us: Micros) -> f64 {
    us as f64 / 1000.0
}

/// Largest `f` with `n >= 3f + 1`.
pub fn max_faults(n: usize) -> usize {
    n.saturating_sub(1) / 3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_boundaries() {
        assert_eq!(epoch_of(SlotNumber(4), 4), EpochNumber(1));
        assert_eq!(epoch_of(SlotNumber(5), 4), EpochNumber(2));
        assert_eq!(epoch_of(SlotNumber(200), 50), EpochNumber(4));
        assert_eq!(epoch_of(SlotNumber(1), 1), EpochNumber(1));
        assert_eq!(epoch_slots(EpochNumber(2), 4), 5..=8);
    }

    #[test]
    fn fault_budget() {
        assert_eq!(max_faults(4), 1);
        assert_eq!(max_faults(7), 2);
        assert_eq!(max_faults(3), 0);
    }
}
