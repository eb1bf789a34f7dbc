use std::collections::BTreeMap;

use crate::ids::NodeId;

/// Neighbors heard from, with the time of the last reply.
#[derive(Clone, Debug, Default)]
pub struct NeighborTable {
    entries: BTreeMap<NodeId, f64>,
}

impl NeighborTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Refreshes or creates the entry. Returns true for a new neighbor.
    pub fn refresh(&mut self, neighbor: NodeId, now: f64) -> bool {
        self.entries.insert(neighbor, now).is_none()
    }

    pub fn remove(&mut self, neighbor: NodeId) -> bool {
        self.entries.remove(&neighbor).is_some()
    }

    pub fn contains(&self, neighbor: NodeId) -> bool {
        self.entries.contains_key(&neighbor)
    }

    pub fn last_heard(&self, neighbor: NodeId) -> Option<f64> {
        self.entries.get(&neighbor).copied()
    }

    /// Drops entries not heard from for more than `timeout`.
    pub fn purge(&mut self, now: f64, timeout: f64) -> Vec<NodeId> {
        let lost: Vec<NodeId> = self
            .entries
            .iter()
            .filter(|(_, &t)| now - t > timeout)
            .map(|(n, _)| *n)
            .collect();
        for n in &lost {
            self.entries.remove(n);
        }
        lost
    }

    pub fn oldest(&self) -> Option<f64> {
        self.entries.values().copied().reduce(f64::min)
    }

    pub fn ids(&self) -> Vec<NodeId> {
        self.entries.keys().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_entry_then_refresh() {
        let mut t = NeighborTable::new();
        assert!(t.refresh(NodeId(4), 1.0));
        assert!(!t.refresh(NodeId(4), 2.0));
        assert_eq!(t.last_heard(NodeId(4)), Some(2.0));
    }

    #[test]
    fn purge_respects_strict_timeout() {
        let mut t = NeighborTable::new();
        t.refresh(NodeId(1), 0.0);
        t.refresh(NodeId(2), 2.0);
        assert!(t.purge(3.0, 3.0).is_empty());
        assert_eq!(t.purge(3.5, 3.0), vec![NodeId(1)]);
        assert_eq!(t.ids(), vec![NodeId(2)]);
    }

    #[test]
    fn purge_empty() {
        assert!(NeighborTable::new().purge(100.0, 1.0).is_empty());
    }
}
