//! Structured trace records and the CSV trace writer.
//!
//! Every observable protocol action becomes one [`TraceRecord`]. Sinks
//! consume the same stream: the CSV writer formats it, the metrics
//! collector aggregates it.

use std::fmt::Write as _;
use std::io::{self, Write};

use crate::energy::EnergyState;
use crate::ids::{FlowId, NodeId, PacketId};
use crate::routing::PacketKind;
use crate::workload::PacketStatus;

pub const TRACE_HEADER: &str = "time_s,node,event_type,packet_id,flow_id,detail";

#[derive(Clone, Debug, PartialEq)]
pub enum TraceEvent {
    Tx { kind: PacketKind, to: Option<NodeId>, bits: u64 },
    Rx { kind: PacketKind, from: NodeId },
    MacFailure { kind: PacketKind, to: NodeId },
    Generate { deadline: f64 },
    Deliver { created_at: f64, hops: u32, path_id: u32 },
    /// Terminal status of a data packet other than delivery.
    DataDrop { status: PacketStatus, reason: &'static str },
    ControlDrop { kind: PacketKind, reason: &'static str },
    NeighborAdd { neighbor: NodeId },
    NeighborLost { neighbor: NodeId },
    DiscoveryStart { rreq: String, attempt: u32 },
    DiscoveryFailed { attempts: u32 },
    RreqDiscard { rreq: String, reason: &'static str },
    PathsSelected { rreq: String, paths: Vec<Vec<NodeId>> },
    RouteInstalled { path_id: u32, path: Vec<NodeId>, est_delay: f64 },
    RouteRemoved { path_id: u32, remaining: usize },
    Failover { path_id: u32, remaining: usize },
    RepairStart { path_id: u32, lost: NodeId, target: NodeId },
    RepairOk { path_id: u32, path: Vec<NodeId> },
    RepairFail { path_id: u32 },
    RerrSent { path_id: u32, to: NodeId },
    RerrRecv { path_id: u32, from: NodeId },
    Admit { rate: f64 },
    Reject { rate: f64 },
    Release { reason: &'static str },
    Energy { from: EnergyState, to: EnergyState },
    MoveStart,
    MoveStop,
    Relocate { x: f64, y: f64 },
    Death { battery_j: f64 },
    Failure,
}

fn join_path(p: &[NodeId]) -> String {
    p.iter().map(|n| n.to_string()).collect::<Vec<_>>().join("-")
}

impl TraceEvent {
    pub fn name(&self) -> &'static str {
        match self {
            TraceEvent::Tx { .. } => "tx",
            TraceEvent::Rx { .. } => "rx",
            TraceEvent::MacFailure { .. } => "mac_failure",
            TraceEvent::Generate { .. } => "generate",
            TraceEvent::Deliver { .. } => "deliver",
            TraceEvent::DataDrop { .. } => "data_drop",
            TraceEvent::ControlDrop { .. } => "control_drop",
            TraceEvent::NeighborAdd { .. } => "neighbor_add",
            TraceEvent::NeighborLost { .. } => "neighbor_lost",
            TraceEvent::DiscoveryStart { .. } => "discovery_start",
            TraceEvent::DiscoveryFailed { .. } => "discovery_failed",
            TraceEvent::RreqDiscard { .. } => "rreq_discard",
            TraceEvent::PathsSelected { .. } => "paths_selected",
            TraceEvent::RouteInstalled { .. } => "route_installed",
            TraceEvent::RouteRemoved { .. } => "route_removed",
            TraceEvent::Failover { .. } => "failover",
            TraceEvent::RepairStart { .. } => "repair_start",
            TraceEvent::RepairOk { .. } => "repair_ok",
            TraceEvent::RepairFail { .. } => "repair_fail",
            TraceEvent::RerrSent { .. } => "rerr_sent",
            TraceEvent::RerrRecv { .. } => "rerr_recv",
            TraceEvent::Admit { .. } => "admit",
            TraceEvent::Reject { .. } => "reject",
            TraceEvent::Release { .. } => "release",
            TraceEvent::Energy { .. } => "energy_state",
            TraceEvent::MoveStart => "move_start",
            TraceEvent::MoveStop => "move_stop",
            TraceEvent::Relocate { .. } => "relocate",
            TraceEvent::Death { .. } => "death",
            TraceEvent::Failure => "failure",
        }
    }

    /// Free-form detail column. Never contains commas.
    pub fn detail(&self) -> String {
        match self {
            TraceEvent::Tx { kind, to, bits } => match to {
                Some(t) => format!("kind={kind} to={t} bits={bits}"),
                None => format!("kind={kind} to=bcast bits={bits}"),
            },
            TraceEvent::Rx { kind, from } => format!("kind={kind} from={from}"),
            TraceEvent::MacFailure { kind, to } => format!("kind={kind} to={to}"),
            TraceEvent::Generate { deadline } => format!("deadline={deadline:.9}"),
            TraceEvent::Deliver { created_at, hops, path_id } => {
                format!("created={created_at:.9} hops={hops} path={path_id}")
            }
            TraceEvent::DataDrop { status, reason } => format!("status={} reason={reason}", status.as_str()),
            TraceEvent::ControlDrop { kind, reason } => format!("kind={kind} reason={reason}"),
            TraceEvent::NeighborAdd { neighbor } | TraceEvent::NeighborLost { neighbor } => {
                format!("neighbor={neighbor}")
            }
            TraceEvent::DiscoveryStart { rreq, attempt } => format!("rreq={rreq} attempt={attempt}"),
            TraceEvent::DiscoveryFailed { attempts } => format!("attempts={attempts}"),
            TraceEvent::RreqDiscard { rreq, reason } => format!("rreq={rreq} reason={reason}"),
            TraceEvent::PathsSelected { rreq, paths } => {
                let mut s = format!("rreq={rreq} n={}", paths.len());
                for p in paths {
                    let _ = write!(s, " {}", join_path(p));
                }
                s
            }
            TraceEvent::RouteInstalled { path_id, path, est_delay } => {
                format!("path={path_id} nodes={} est_delay={est_delay:.9}", join_path(path))
            }
            TraceEvent::RouteRemoved { path_id, remaining } | TraceEvent::Failover { path_id, remaining } => {
                format!("path={path_id} remaining={remaining}")
            }
            TraceEvent::RepairStart { path_id, lost, target } => {
                format!("path={path_id} lost={lost} target={target}")
            }
            TraceEvent::RepairOk { path_id, path } => format!("path={path_id} nodes={}", join_path(path)),
            TraceEvent::RepairFail { path_id } => format!("path={path_id}"),
            TraceEvent::RerrSent { path_id, to } => format!("path={path_id} to={to}"),
            TraceEvent::RerrRecv { path_id, from } => format!("path={path_id} from={from}"),
            TraceEvent::Admit { rate } | TraceEvent::Reject { rate } => format!("rate={rate}"),
            TraceEvent::Release { reason } => format!("reason={reason}"),
            TraceEvent::Energy { from, to } => format!("{from}->{to}"),
            TraceEvent::MoveStart | TraceEvent::MoveStop | TraceEvent::Failure => String::new(),
            TraceEvent::Relocate { x, y } => format!("x={x:.3} y={y:.3}"),
            TraceEvent::Death { battery_j } => format!("battery={battery_j:.9}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub node: Option<NodeId>,
    pub packet: Option<PacketId>,
    pub flow: Option<FlowId>,
    pub event: TraceEvent,
}

impl TraceRecord {
    pub fn to_row(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_default();
        format!(
            "{:.9},{},{},{},{},{}",
            self.time,
            self.node.map_or_else(|| "-".to_string(), |n| n.to_string()),
            self.event.name(),
            opt(self.packet.map(|p| p.to_string())),
            opt(self.flow.map(|f| f.to_string())),
            self.event.detail()
        )
    }
}

pub trait TraceSink {
    fn record(&mut self, rec: &TraceRecord) -> io::Result<()>;

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Writes the fixed-column CSV trace.
pub struct CsvTraceWriter<W: Write> {
    out: W,
    rows: u64,
}

impl<W: Write> CsvTraceWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{TRACE_HEADER}")?;
        Ok(Self { out, rows: 0 })
    }

    pub fn rows(&self) -> u64 {
        self.rows
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TraceSink for CsvTraceWriter<W> {
    fn record(&mut self, rec: &TraceRecord) -> io::Result<()> {
        self.rows += 1;
        writeln!(self.out, "{}", rec.to_row())
    }

    fn flush(&mut self) -> io::Result<()> {
        self.out.flush()
    }
}

/// Keeps records in memory; used by tests and analysis tools.
#[derive(Default, Debug)]
pub struct MemorySink {
    pub records: Vec<TraceRecord>,
}

impl TraceSink for MemorySink {
    fn record(&mut self, rec: &TraceRecord) -> io::Result<()> {
        self.records.push(rec.clone());
        Ok(())
    }
}
