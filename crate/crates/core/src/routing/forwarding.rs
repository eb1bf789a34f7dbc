use std::collections::BTreeMap;

use crate::ids::{FlowId, NodeId};
use crate::qos::QosRequirement;

/// One forwarding-table row for a `(flow, path)` through this node.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardingEntry {
    pub flow: FlowId,
    pub flow_dst: NodeId,
    pub path_id: u32,
    /// `None` at the flow source.
    pub previous_hop: Option<NodeId>,
    /// Always 0: the node models a single radio.
    pub interface_id: u8,
    /// `None` at the destination.
    pub next_hop: Option<NodeId>,
    /// Full path, source to destination.
    pub path: Vec<NodeId>,
    /// Position of this node on `path`.
    pub index: usize,
    /// Estimated delay from the source to each node of `path`.
    pub arrival_delays: Vec<f64>,
    pub qos: QosRequirement,
    pub rate: f64,
    pub packet_size: u64,
    pub flow_stop: f64,
    /// Next hop lost; a local repair is running.
    pub stale: bool,
}

impl ForwardingEntry {
    pub fn downstream_remainder(&self) -> &[NodeId] {
        &self.path[self.index + 1..]
    }

    pub fn remaining_hops(&self) -> usize {
        self.path.len() - 1 - self.index
    }

    pub fn delay_to_dst(&self) -> f64 {
        let last = self.arrival_delays.last().copied().unwrap_or(0.0);
        last - self.arrival_delays.get(self.index).copied().unwrap_or(0.0)
    }

    pub fn delay_from_src(&self) -> f64 {
        self.arrival_delays.get(self.index).copied().unwrap_or(0.0)
    }
}

pub type RouteKey = (FlowId, u32);

#[derive(Clone, Debug, Default)]
pub struct ForwardingTable {
    entries: BTreeMap<RouteKey, ForwardingEntry>,
}

impl ForwardingTable {
    pub fn get(&self, key: RouteKey) -> Option<&ForwardingEntry> {
        self.entries.get(&key)
    }

    pub fn get_mut(&mut self, key: RouteKey) -> Option<&mut ForwardingEntry> {
        self.entries.get_mut(&key)
    }

    pub fn insert(&mut self, entry: ForwardingEntry) -> Option<ForwardingEntry> {
        self.entries.insert((entry.flow, entry.path_id), entry)
    }

    pub fn remove(&mut self, key: RouteKey) -> Option<ForwardingEntry> {
        self.entries.remove(&key)
    }

    pub fn has_flow(&self, flow: FlowId) -> bool {
        self.entries.keys().any(|(f, _)| *f == flow)
    }

    /// Keys of live entries whose next hop is `neighbor`.
    pub fn using_next_hop(&self, neighbor: NodeId) -> Vec<RouteKey> {
        self.entries
            .iter()
            .filter(|(_, e)| e.next_hop == Some(neighbor) && !e.stale)
            .map(|(k, _)| *k)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ForwardingEntry> {
        self.entries.values()
    }
}
