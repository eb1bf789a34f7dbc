//! QoS provisioning: admission control, windowed priority management, the
//! reservation ledger and the output-link scheduler.

use std::collections::BTreeMap;

use num_traits::Num;
use serde::{Deserialize, Serialize};

use crate::ids::{FlowId, NodeId};
use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QosRequirement {
    /// End-to-end delay bound, seconds.
    pub max_delay: f64,
    pub max_hops: u32,
    /// Minimum bottleneck bandwidth, bits/s.
    pub min_bw: f64,
}

impl QosRequirement {
    pub fn is_valid(&self) -> bool {
        self.max_delay > 0.0 && self.max_hops > 0 && self.min_bw > 0.0
    }

    pub fn admits(&self, delay: f64, hops: usize, bottleneck_bw: f64) -> bool {
        delay <= self.max_delay && hops <= self.max_hops as usize && bottleneck_bw >= self.min_bw
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub flow_id: FlowId,
    pub src: NodeId,
    pub dst: NodeId,
    /// bits/s
    pub rate: f64,
    /// bits
    pub packet_size: u64,
    pub qos: QosRequirement,
    pub start: f64,
    pub stop: f64,
}

impl FlowSpec {
    pub fn interval(&self) -> f64 {
        self.packet_size as f64 / self.rate
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReservationMode {
    /// Reserve while the route reply installs the path.
    Apriori,
    /// Reserve on the first data packet of the flow at this node.
    Ondemand,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    Rejected,
}

/// Per-node bandwidth ledger. Generic over the numeric type so the
/// admission arithmetic can be checked exactly with rationals.
#[derive(Clone, Debug)]
pub struct ReservationLedger<T> {
    capacity: T,
    utilization_cap: T,
    mode: ReservationMode,
    entries: BTreeMap<FlowId, T>,
}

impl<T: Num + PartialOrd + Copy> ReservationLedger<T> {
    /// `utilization_cap` must lie in (0, 1].
    pub fn new(capacity: T, utilization_cap: T, mode: ReservationMode) -> Self {
        assert!(utilization_cap > T::zero() && utilization_cap <= T::one());
        Self {
            capacity,
            utilization_cap,
            mode,
            entries: BTreeMap::new(),
        }
    }

    pub fn mode(&self) -> ReservationMode {
        self.mode
    }

    pub fn limit(&self) -> T {
        self.utilization_cap * self.capacity
    }

    pub fn reserved(&self) -> T {
        self.entries.values().fold(T::zero(), |a, b| a + *b)
    }

    pub fn residual(&self) -> T {
        let l = self.limit();
        let r = self.reserved();
        if r >= l {
            T::zero()
        } else {
            l - r
        }
    }

    pub fn holds(&self, flow: FlowId) -> bool {
        self.entries.contains_key(&flow)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Admission test: the new flow fits under η × capacity.
    pub fn admit(&self, rate: T) -> Admission {
        if self.reserved() + rate <= self.limit() {
            Admission::Admitted
        } else {
            Admission::Rejected
        }
    }

    /// Admits and records the flow. An existing reservation for the same
    /// flow is kept as is.
    pub fn reserve(&mut self, flow: FlowId, rate: T) -> Admission {
        if self.entries.contains_key(&flow) {
            return Admission::Admitted;
        }
        let verdict = self.admit(rate);
        if verdict == Admission::Admitted {
            self.entries.insert(flow, rate);
        }
        debug_assert!(self.reserved() <= self.limit());
        verdict
    }

    /// Releases the flow's reservation; releasing twice is a no-op.
    pub fn release(&mut self, flow: FlowId) -> Option<T> {
        self.entries.remove(&flow)
    }
}

/// Windowed priority manager. Level 0 is the most urgent.
#[derive(Clone, Debug)]
pub struct PriorityState {
    levels: u8,
    window: f64,
    promotion_budget: u32,
    demote_factor: f64,
    window_index: i64,
    forwarded_in_window: Vec<u64>,
    promotions_in_window: u32,
}

impl PriorityState {
    pub fn new(levels: u8, window: f64, promotion_budget: u32, demote_factor: f64) -> Self {
        assert!(levels >= 1 && window > 0.0);
        Self {
            levels,
            window,
            promotion_budget,
            demote_factor,
            window_index: 0,
            forwarded_in_window: vec![0; levels as usize],
            promotions_in_window: 0,
        }
    }

    pub fn levels(&self) -> u8 {
        self.levels
    }

    fn roll(&mut self, now: f64) {
        let idx = (now / self.window).floor() as i64;
        if idx != self.window_index {
            self.window_index = idx;
            self.forwarded_in_window.iter_mut().for_each(|c| *c = 0);
            self.promotions_in_window = 0;
        }
    }

    /// Adjusts `level` by at most one step from the packet's slack.
    /// `need` is the remaining hop count times the nominal per-hop delay.
    pub fn assign(&mut self, level: u8, deadline: f64, now: f64, remaining_hops: usize, nominal_hop_delay: f64) -> u8 {
        self.roll(now);
        let level = level.min(self.levels - 1);
        let slack = deadline - now;
        let need = remaining_hops as f64 * nominal_hop_delay;
        if slack < need {
            if level > 0 && self.promotions_in_window < self.promotion_budget {
                self.promotions_in_window += 1;
                return level - 1;
            }
            level
        } else if slack > self.demote_factor * need {
            (level + 1).min(self.levels - 1)
        } else {
            level
        }
    }

    pub fn note_dequeued(&mut self, level: u8, now: f64) {
        self.roll(now);
        if let Some(c) = self.forwarded_in_window.get_mut(level as usize) {
            *c += 1;
        }
    }

    pub fn forwarded_in_window(&self, level: u8) -> u64 {
        self.forwarded_in_window.get(level as usize).copied().unwrap_or(0)
    }

    pub fn promotions_in_window(&self) -> u32 {
        self.promotions_in_window
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Queued<P> {
    pub level: u8,
    pub deadline: f64,
    pub size_bits: u64,
    pub packet: P,
}

/// Strict priority across levels, earliest deadline first within a level.
#[derive(Clone, Debug)]
pub struct PacketScheduler<P> {
    capacity: usize,
    queues: Vec<BTreeMap<(SimTime, u64), Queued<P>>>,
    seq: u64,
    queued_bits: u64,
}

impl<P> PacketScheduler<P> {
    pub fn new(levels: u8, capacity_per_level: usize) -> Self {
        Self {
            capacity: capacity_per_level,
            queues: (0..levels.max(1)).map(|_| BTreeMap::new()).collect(),
            seq: 0,
            queued_bits: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.queues.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.iter().all(BTreeMap::is_empty)
    }

    pub fn level_len(&self, level: u8) -> usize {
        self.queues.get(level as usize).map_or(0, BTreeMap::len)
    }

    pub fn queued_bits(&self) -> u64 {
        self.queued_bits
    }

    /// Returns the packet back when its level is full (the newest arrival
    /// is the one dropped).
    pub fn enqueue(&mut self, level: u8, deadline: f64, size_bits: u64, packet: P) -> Result<(), P> {
        let lvl = (level as usize).min(self.queues.len() - 1);
        let q = &mut self.queues[lvl];
        if q.len() >= self.capacity {
            return Err(packet);
        }
        let key = (SimTime::from_secs(deadline.max(0.0)), self.seq);
        self.seq += 1;
        self.queued_bits += size_bits;
        q.insert(
            key,
            Queued {
                level: lvl as u8,
                deadline,
                size_bits,
                packet,
            },
        );
        Ok(())
    }

    /// Next packet for the radio. Packets whose deadline is already past
    /// are moved to `expired` and skipped.
    pub fn dequeue(&mut self, now: f64, expired: &mut Vec<Queued<P>>) -> Option<Queued<P>> {
        for q in self.queues.iter_mut() {
            while let Some((_, item)) = q.pop_first() {
                self.queued_bits -= item.size_bits;
                if item.deadline < now {
                    expired.push(item);
                    continue;
                }
                return Some(item);
            }
        }
        None
    }

    /// Removes everything, e.g. when the node dies.
    pub fn drain(&mut self) -> Vec<Queued<P>> {
        self.queued_bits = 0;
        self.queues
            .iter_mut()
            .flat_map(|q| std::mem::take(q).into_values())
            .collect()
    }
}
