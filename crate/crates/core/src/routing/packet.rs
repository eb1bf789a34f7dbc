//! Packet formats carried by the radio.

use std::fmt;

use crate::ids::{FlowId, NodeId, PacketId};
use crate::qos::QosRequirement;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PacketKind {
    Hello,
    HelloReply,
    Rreq,
    Rrep,
    Rerr,
    Data,
}

impl PacketKind {
    pub fn is_control(self) -> bool {
        self != PacketKind::Data
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Route request identifier: originator plus its sequence number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RreqId {
    pub source: NodeId,
    pub seq: u32,
}

impl fmt::Display for RreqId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.source, self.seq)
    }
}

/// Context of a scoped local-repair request.
#[derive(Clone, Debug, PartialEq)]
pub struct RepairContext {
    pub path_id: u32,
    /// Old downstream nodes that must not relay the request.
    pub exclude: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RreqBody {
    pub rreq_id: RreqId,
    pub flow: FlowId,
    /// Node that answers: the flow destination, or the splice point of a repair.
    pub target: NodeId,
    pub qos: QosRequirement,
    pub rate: f64,
    pub packet_size: u64,
    pub flow_stop: f64,
    /// Traversed hop list, starting at the originator (or the path prefix
    /// for a repair).
    pub traversed: Vec<NodeId>,
    /// Estimated delay from the flow source to each node of `traversed`.
    pub arrival_delays: Vec<f64>,
    /// Estimated delay from the flow source to the current receiver.
    pub acc_delay: f64,
    pub bottleneck_bw: f64,
    pub repair: Option<RepairContext>,
}

impl RreqBody {
    /// Hops taken to reach the current receiver.
    pub fn acc_hops(&self) -> usize {
        self.traversed.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RrepBody {
    pub rreq_id: RreqId,
    pub flow: FlowId,
    pub path_id: u32,
    pub path: Vec<NodeId>,
    pub arrival_delays: Vec<f64>,
    pub bottleneck_bw: f64,
    pub qos: QosRequirement,
    pub rate: f64,
    pub packet_size: u64,
    pub flow_stop: f64,
    pub repair: bool,
}

impl RrepBody {
    pub fn est_delay(&self) -> f64 {
        self.arrival_delays.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RerrBody {
    pub flow: FlowId,
    pub flow_dst: NodeId,
    pub path_id: u32,
    /// Node that detected the break.
    pub detected_by: NodeId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataHeader {
    pub flow: FlowId,
    pub path_id: u32,
    pub created_at: f64,
    pub deadline: f64,
    pub level: u8,
    pub payload_bits: u64,
    /// Nodes the packet has been at, starting with its source.
    pub visited: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Body {
    Hello,
    HelloReply,
    Rreq(RreqBody),
    Rrep(RrepBody),
    Rerr(RerrBody),
    Data(DataHeader),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub src: NodeId,
    /// `None` for link-local broadcasts.
    pub dst: Option<NodeId>,
    pub ttl: u32,
    pub body: Body,
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match self.body {
            Body::Hello => PacketKind::Hello,
            Body::HelloReply => PacketKind::HelloReply,
            Body::Rreq(_) => PacketKind::Rreq,
            Body::Rrep(_) => PacketKind::Rrep,
            Body::Rerr(_) => PacketKind::Rerr,
            Body::Data(_) => PacketKind::Data,
        }
    }

    pub fn flow(&self) -> Option<FlowId> {
        match &self.body {
            Body::Rreq(b) => Some(b.flow),
            Body::Rrep(b) => Some(b.flow),
            Body::Rerr(b) => Some(b.flow),
            Body::Data(h) => Some(h.flow),
            Body::Hello | Body::HelloReply => None,
        }
    }

    /// Payload size in bits, excluding the link-layer frame overhead.
    pub fn payload_bits(&self) -> u64 {
        const ADDR: u64 = 32;
        match &self.body {
            Body::Hello | Body::HelloReply => 64,
            Body::Rreq(b) => 320 + b.traversed.len() as u64 * (ADDR + 32),
            Body::Rrep(b) => 256 + b.path.len() as u64 * (ADDR + 32),
            Body::Rerr(_) => 128,
            Body::Data(h) => h.payload_bits,
        }
    }

    pub fn data(&self) -> Option<&DataHeader> {
        match &self.body {
            Body::Data(h) => Some(h),
            _ => None,
        }
    }
}
