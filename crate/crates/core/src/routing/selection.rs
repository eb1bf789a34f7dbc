//! Destination-side selection of node-disjoint paths.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::ids::NodeId;

#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    /// Source first, destination last.
    pub nodes: Vec<NodeId>,
    pub est_delay: f64,
    pub hops: usize,
    pub bottleneck_bw: f64,
    pub path_id: u32,
    pub established_at: f64,
}

impl PathRecord {
    pub fn new(nodes: Vec<NodeId>, est_delay: f64, bottleneck_bw: f64) -> Self {
        let hops = nodes.len().saturating_sub(1);
        Self {
            nodes,
            est_delay,
            hops,
            bottleneck_bw,
            path_id: 0,
            established_at: 0.0,
        }
    }

    pub fn intermediates(&self) -> &[NodeId] {
        match self.nodes.len() {
            0..=2 => &[],
            n => &self.nodes[1..n - 1],
        }
    }

    pub fn is_simple(&self) -> bool {
        let set: BTreeSet<_> = self.nodes.iter().collect();
        set.len() == self.nodes.len()
    }
}

/// True iff the two paths share no intermediate node.
pub fn node_disjoint(a: &PathRecord, b: &PathRecord) -> bool {
    let inner: BTreeSet<_> = a.intermediates().iter().collect();
    !b.intermediates().iter().any(|n| inner.contains(n))
}

fn rank(a: &PathRecord, b: &PathRecord) -> Ordering {
    a.est_delay
        .total_cmp(&b.est_delay)
        .then(a.hops.cmp(&b.hops))
        .then_with(|| a.nodes.cmp(&b.nodes))
}

/// Greedy selection: lowest estimated delay first, accepting a path iff it
/// shares no intermediate node with the ones already accepted, up to
/// `max_paths`.
pub fn select_disjoint(candidates: &[PathRecord], max_paths: usize) -> Vec<PathRecord> {
    let mut sorted: Vec<&PathRecord> = candidates.iter().collect();
    sorted.sort_by(|a, b| rank(a, b));
    let mut used: BTreeSet<NodeId> = BTreeSet::new();
    let mut chosen: Vec<PathRecord> = Vec::new();
    for p in sorted {
        if chosen.len() >= max_paths {
            break;
        }
        if chosen.iter().any(|c| c.nodes == p.nodes) {
            continue;
        }
        if p.intermediates().iter().any(|n| used.contains(n)) {
            continue;
        }
        used.extend(p.intermediates().iter().copied());
        chosen.push(p.clone());
    }
    chosen
}
