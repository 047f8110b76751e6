//! Timestamped event stream produced by a run and consumed by the oracle
//! and metrics.
//!
//! Text form, one event per line:
//!
//! ```text
//! # ticketforge-trace v1
//! <at_ms> <KIND> <node|-> <slot|-> [key=value ...]
//! ```
//!
//! `at_ms` is virtual time in milliseconds with exactly three decimals, so
//! the microsecond clock round-trips without loss.

use std::fmt::{self, Write as _};
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::consensus::Via;
use crate::log::ValueId;
use crate::ticketing::{TicketRegime, Verdict};
use crate::types::{EpochNumber, Micros, NodeId, SlotNumber};

pub const TRACE_HEADER: &str = "# ticketforge-trace v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    Init {
        n: usize,
        f: usize,
        epoch_len: u64,
        concurrency: u64,
        seed: u64,
    },
    Phase {
        index: usize,
    },
    Crash,
    EpochDecided {
        epoch: EpochNumber,
        regime: TicketRegime,
        candidates: Vec<NodeId>,
    },
    Request {
        server: NodeId,
    },
    Grant {
        grantee: NodeId,
        slots: Vec<SlotNumber>,
    },
    Propose {
        value: ValueId,
        since: Micros,
    },
    Deliver {
        from: NodeId,
    },
    TicketCheck {
        proposer: NodeId,
        proof: String,
        verdict: Verdict,
    },
    TimerStart {
        expires: Micros,
    },
    TimerExpire,
    Finalize {
        value: ValueId,
        via: Via,
    },
    LogCommit {
        value: ValueId,
    },
}

impl EventKind {
    pub fn tag(&self) -> &'static str {
        match self {
            EventKind::Init { .. } => "INIT",
            EventKind::Phase { .. } => "PHASE",
            EventKind::Crash => "CRASH",
            EventKind::EpochDecided { .. } => "EPOCH_DECIDED",
            EventKind::Request { .. } => "REQUEST",
            EventKind::Grant { .. } => "GRANT",
            EventKind::Propose { .. } => "PROPOSE",
            EventKind::Deliver { .. } => "DELIVER",
            EventKind::TicketCheck { .. } => "TICKET_CHECK",
            EventKind::TimerStart { .. } => "TIMER_START",
            EventKind::TimerExpire => "TIMER_EXPIRE",
            EventKind::Finalize { .. } => "FINALIZE",
            EventKind::LogCommit { .. } => "LOG_COMMIT",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub at: Micros,
    pub node: Option<NodeId>,
    pub slot: Option<SlotNumber>,
    pub kind: EventKind,
}

/// Ordered list of events of one run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, at: Micros, node: Option<NodeId>, slot: Option<SlotNumber>, kind: EventKind) {
        self.events.push(TraceEvent { at, node, slot, kind });
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceEvent> {
        self.events.iter()
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "{TRACE_HEADER}")?;
        let mut line = String::new();
        for ev in &self.events {
            line.clear();
            write_event(&mut line, ev).expect("writing to a String cannot fail");
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("trace text is ASCII")
    }

    pub fn read_from(r: impl BufRead) -> Result<Trace, TraceParseError> {
        let mut events = Vec::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(|e| TraceParseError::Io(e.to_string()))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            events.push(parse_line(line).map_err(|msg| TraceParseError::Line { line: idx + 1, msg })?);
        }
        Ok(Trace { events })
    }

    pub fn parse(text: &str) -> Result<Trace, TraceParseError> {
        Self::read_from(text.as_bytes())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceParseError {
    #[error("trace line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("reading trace: {0}")]
    Io(String),
}

fn fmt_ms(us: Micros) -> String {
    format!("{}.{:03}", us / 1000, us % 1000)
}

fn parse_ms(s: &str) -> Result<Micros, String> {
    let (whole, frac) = s.split_once('.').ok_or_else(|| format!("bad time `{s}`"))?;
    if frac.len() != 3 {
        return Err(format!("time `{s}` needs three decimals"));
    }
    let whole: u64 = whole.parse().map_err(|_| format!("bad time `{s}`"))?;
    let frac: u64 = frac.parse().map_err(|_| format!("bad time `{s}`"))?;
    Ok(whole * 1000 + frac)
}

fn join_ids<T: fmt::Display>(items: &[T]) -> String {
    if items.is_empty() {
        return "-".to_string();
    }
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn write_event(out: &mut String, ev: &TraceEvent) -> fmt::Result {
    write!(out, "{} {}", fmt_ms(ev.at), ev.kind.tag())?;
    match ev.node {
        Some(n) => write!(out, " {n}")?,
        None => out.push_str(" -"),
    }
    match ev.slot {
        Some(s) => write!(out, " {s}")?,
        None => out.push_str(" -"),
    }
    match &ev.kind {
        EventKind::Init {
            n,
            f,
            epoch_len,
            concurrency,
            seed,
        } => write!(out, " n={n} f={f} l={epoch_len} k={concurrency} seed={seed}")?,
        EventKind::Phase { index } => write!(out, " index={index}")?,
        EventKind::Crash | EventKind::TimerExpire => {}
        EventKind::EpochDecided {
            epoch,
            regime,
            candidates,
        } => write!(out, " epoch={epoch} tr={} c={}", regime.as_tr(), join_ids(candidates))?,
        EventKind::Request { server } => write!(out, " server={server}")?,
        EventKind::Grant { grantee, slots } => write!(out, " grantee={grantee} slots={}", join_ids(slots))?,
        EventKind::Propose { value, since } => write!(out, " value={value} since={}", fmt_ms(*since))?,
        EventKind::Deliver { from } => write!(out, " from={from}")?,
        EventKind::TicketCheck {
            proposer,
            proof,
            verdict,
        } => write!(out, " proposer={proposer} proof={proof} verdict={verdict}")?,
        EventKind::TimerStart { expires } => write!(out, " expires={}", fmt_ms(*expires))?,
        EventKind::Finalize { value, via } => write!(out, " value={value} via={via}")?,
        EventKind::LogCommit { value } => write!(out, " value={value}")?,
    }
    out.push('\n');
    Ok(())
}

struct Fields<'a> {
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn get(&self, key: &str) -> Result<&'a str, String> {
        self.pairs
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| format!("missing field `{key}`"))
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<T, String> {
        let v = self.get(key)?;
        v.parse().map_err(|_| format!("bad `{key}` value `{v}`"))
    }
}

fn parse_list<T>(s: &str, f: impl Fn(u64) -> T) -> Result<Vec<T>, String> {
    if s == "-" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.parse::<u64>().map(&f).map_err(|_| format!("bad list item `{x}`")))
        .collect()
}

fn parse_line(line: &str) -> Result<TraceEvent, String> {
    let mut parts = line.split_ascii_whitespace();
    let at = parse_ms(parts.next().ok_or("empty line")?)?;
    let tag = parts.next().ok_or("missing kind")?;
    let node = match parts.next().ok_or("missing node")? {
        "-" => None,
        s => Some(NodeId(s.parse().map_err(|_| format!("bad node `{s}`"))?)),
    };
    let slot = match parts.next().ok_or("missing slot")? {
        "-" => None,
        s => Some(SlotNumber(s.parse().map_err(|_| format!("bad slot `{s}`"))?)),
    };
    let pairs = parts
        .map(|p| p.split_once('=').ok_or_else(|| format!("bad field `{p}`")))
        .collect::<Result<Vec<_>, _>>()?;
    let fields = Fields { pairs };
    let kind = match tag {
        "INIT" => EventKind::Init {
            n: fields.num("n")?,
            f: fields.num("f")?,
            epoch_len: fields.num("l")?,
            concurrency: fields.num("k")?,
            seed: fields.num("seed")?,
        },
        "PHASE" => EventKind::Phase {
            index: fields.num("index")?,
        },
        "CRASH" => EventKind::Crash,
        "EPOCH_DECIDED" => EventKind::EpochDecided {
            epoch: EpochNumber(fields.num("epoch")?),
            regime: TicketRegime::from_tr(fields.num("tr")?),
            candidates: parse_list(fields.get("c")?, |x| NodeId(x as u32))?,
        },
        "REQUEST" => EventKind::Request {
            server: NodeId(fields.num("server")?),
        },
        "GRANT" => EventKind::Grant {
            grantee: NodeId(fields.num("grantee")?),
            slots: parse_list(fields.get("slots")?, SlotNumber)?,
        },
        "PROPOSE" => EventKind::Propose {
            value: fields.get("value")?.parse()?,
            since: parse_ms(fields.get("since")?)?,
        },
        "DELIVER" => EventKind::Deliver {
            from: NodeId(fields.num("from")?),
        },
        "TICKET_CHECK" => EventKind::TicketCheck {
            proposer: NodeId(fields.num("proposer")?),
            proof: fields.get("proof")?.to_string(),
            verdict: fields.get("verdict")?.parse()?,
        },
        "TIMER_START" => EventKind::TimerStart {
            expires: parse_ms(fields.get("expires")?)?,
        },
        "TIMER_EXPIRE" => EventKind::TimerExpire,
        "FINALIZE" => EventKind::Finalize {
            value: fields.get("value")?.parse()?,
            via: fields.get("via")?.parse()?,
        },
        "LOG_COMMIT" => EventKind::LogCommit {
            value: fields.get("value")?.parse()?,
        },
        other => return Err(format!("unknown event kind `{other}`")),
    };
    Ok(TraceEvent { at, node, slot, kind })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_value() -> impl Strategy<Value = ValueId> {
        prop_oneof![
            Just(ValueId::Bottom),
            (0u32..16, any::<u64>()).prop_map(|(s, d)| ValueId::Block {
                sender: NodeId(s),
                digest: d
            }),
        ]
    }

    fn arb_kind() -> impl Strategy<Value = EventKind> {
        let ids = prop::collection::vec((0u32..16).prop_map(NodeId), 0..6);
        prop_oneof![
            (1usize..20, 0usize..6, 1u64..100, 1u64..4, any::<u64>()).prop_map(|(n, f, l, k, seed)| {
                EventKind::Init {
                    n,
                    f,
                    epoch_len: l,
                    concurrency: k,
                    seed,
                }
            }),
            (1u64..1000, -1i64..8, ids).prop_map(|(e, tr, c)| EventKind::EpochDecided {
                epoch: EpochNumber(e),
                regime: TicketRegime::from_tr(tr),
                candidates: c,
            }),
            (0u32..8, prop::collection::vec((1u64..500).prop_map(SlotNumber), 0..5)).prop_map(|(g, slots)| {
                EventKind::Grant {
                    grantee: NodeId(g),
                    slots,
                }
            }),
            (arb_value(), 0u64..10_000_000).prop_map(|(value, since)| EventKind::Propose { value, since }),
            (arb_value(), any::<bool>()).prop_map(|(value, fast)| EventKind::Finalize {
                value,
                via: if fast { Via::Fast } else { Via::Fallback }
            }),
            arb_value().prop_map(|value| EventKind::LogCommit { value }),
            (
                0u32..8,
                prop_oneof![Just(Verdict::Valid), Just(Verdict::Invalid), Just(Verdict::Undefined)]
            )
                .prop_map(|(p, verdict)| EventKind::TicketCheck {
                    proposer: NodeId(p),
                    proof: "g1.2.00000000000000ff".to_string(),
                    verdict
                }),
            Just(EventKind::TimerExpire),
            Just(EventKind::Crash),
        ]
    }

    proptest! {
        #[test]
        fn text_round_trip(events in prop::collection::vec(
            (0u64..100_000_000, prop::option::of(0u32..16), prop::option::of(1u64..10_000), arb_kind()),
            0..40,
        )) {
            let trace = Trace {
                events: events
                    .into_iter()
                    .map(|(at, node, slot, kind)| TraceEvent {
                        at,
                        node: node.map(NodeId),
                        slot: slot.map(SlotNumber),
                        kind,
                    })
                    .collect(),
            };
            let text = trace.to_text();
            prop_assert_eq!(Trace::parse(&text).unwrap(), trace);
        }
    }

    #[test]
    fn rejects_garbage() {
        assert!(Trace::parse("1.000 NOPE - -").is_err());
        assert!(Trace::parse("1.0 CRASH 1 -").is_err());
        assert!(Trace::parse("1.000 LOG_COMMIT 1 2").is_err());
    }
}
