//! Message delays under partial synchrony.

use rand::Rng;

use crate::config::{PreGst, ScenarioConfig};
use crate::types::{Micros, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreGstMode {
    /// Extra uniform delay in `[0, extra]`.
    Extra(Micros),
    Drop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetModel {
    pub base: Micros,
    pub jitter: Micros,
    pub gst: Micros,
    /// Post-GST delay bound.
    pub delta: Micros,
    pub pre_gst: PreGstMode,
}

impl NetModel {
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        Self {
            base: cfg.net.base_delay_ms.us(),
            jitter: cfg.net.jitter_ms.us(),
            gst: cfg.gst_ms.us(),
            delta: cfg.delta_ms.us(),
            pre_gst: match cfg.net.pre_gst {
                PreGst::Delay { extra_ms } => PreGstMode::Extra(extra_ms.us()),
                PreGst::Drop => PreGstMode::Drop,
            },
        }
    }
}

/// One-way delay of a message sent at `now`, or `None` when it is lost.
pub fn sample_delay(net: &NetModel, now: Micros, _from: NodeId, _to: NodeId, rng: &mut impl Rng) -> Option<Micros> {
    let jitter = if net.jitter > 0 {
        rng.gen_range(0..=net.jitter)
    } else {
        0
    };
    let d = net.base + jitter;
    if now >= net.gst {
        return Some(d.min(net.delta));
    }
    match net.pre_gst {
        PreGstMode::Extra(0) => Some(d),
        PreGstMode::Extra(extra) => Some(d + rng.gen_range(0..=extra)),
        PreGstMode::Drop => None,
    }
}
