//! Constant-bit-rate traffic generation and run statistics.

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::ids::{FlowId, PacketId};
use crate::qos::FlowSpec;
use crate::trace::{TraceEvent, TraceRecord, TraceSink};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketStatus {
    Delivered,
    DeadlineMiss,
    RoutingDrop,
    QueueDrop,
    AdmissionReject,
    Unroutable,
    /// Frame lost on the air.
    RadioLoss,
    /// Still queued or in transit when the run ended.
    InFlight,
}

impl PacketStatus {
    pub const ALL: [PacketStatus; 8] = [
        PacketStatus::Delivered,
        PacketStatus::DeadlineMiss,
        PacketStatus::RoutingDrop,
        PacketStatus::QueueDrop,
        PacketStatus::AdmissionReject,
        PacketStatus::Unroutable,
        PacketStatus::RadioLoss,
        PacketStatus::InFlight,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PacketStatus::Delivered => "delivered",
            PacketStatus::DeadlineMiss => "deadline_miss",
            PacketStatus::RoutingDrop => "routing_drop",
            PacketStatus::QueueDrop => "queue_drop",
            PacketStatus::AdmissionReject => "admission_reject",
            PacketStatus::Unroutable => "unroutable",
            PacketStatus::RadioLoss => "radio_loss",
            PacketStatus::InFlight => "in_flight",
        }
    }
}

/// Creation times of a CBR flow: one packet every `packet_size / rate`
/// seconds over `[start, stop)`.
pub fn generate_traffic(flow: &FlowSpec) -> Vec<f64> {
    (0..).map_while(|k| creation_time(flow, k)).collect()
}

/// Creation instant of the `k`-th packet of `flow`, if it falls inside
/// `[start, stop)`.
pub fn creation_time(flow: &FlowSpec, k: u64) -> Option<f64> {
    let interval = flow.interval();
    if flow.stop.partial_cmp(&flow.start) != Some(std::cmp::Ordering::Greater) || interval.is_nan() || interval <= 0.0 {
        return None;
    }
    // A tiny tolerance keeps an instant that lands on `stop` through
    // rounding out of the interval.
    let guard = flow.stop - 1e-9 * interval;
    let t = flow.start + k as f64 * interval;
    (t < guard).then_some(t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PacketRecord {
    pub packet_id: PacketId,
    pub flow_id: FlowId,
    pub created_at: f64,
    pub delivered_at: Option<f64>,
    pub hops_taken: u32,
    pub path_id: Option<u32>,
    pub final_status: Option<PacketStatus>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeEnergy {
    pub node: usize,
    pub initial_j: f64,
    pub consumed_j: f64,
    pub battery_j: f64,
    pub death_time: Option<f64>,
    pub failed_at: Option<f64>,
    pub occupancy_s: BTreeMap<String, f64>,
    pub consumed_by_state_j: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolCounters {
    pub control_packets_tx: u64,
    pub data_frames_tx: u64,
    pub discoveries_initiated: u64,
    pub rreq_retries: u64,
    pub successful_discoveries: u64,
    pub selected_paths_total: u64,
    pub repair_attempts: u64,
    pub repair_successes: u64,
    pub rerr_sent: u64,
    pub admissions: u64,
    pub rejections: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub generated: u64,
    pub status_counts: BTreeMap<PacketStatus, u64>,
    /// `None` when nothing was generated.
    pub delivery_ratio: Option<f64>,
    pub deadline_miss_ratio: Option<f64>,
    pub mean_delay_s: Option<f64>,
    pub p95_delay_s: Option<f64>,
    /// Control packets transmitted per data packet delivered.
    pub control_overhead: Option<f64>,
    pub discoveries_initiated: u64,
    pub mean_disjoint_paths: Option<f64>,
    pub counters: ProtocolCounters,
    pub nodes: Vec<NodeEnergy>,
}

impl MetricsSummary {
    pub fn status_total(&self) -> u64 {
        self.status_counts.values().sum()
    }

    pub fn count(&self, s: PacketStatus) -> u64 {
        self.status_counts.get(&s).copied().unwrap_or(0)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], pct: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Aggregates finished packet records. Records without a terminal status
/// count as in flight.
pub fn summarize(records: &[PacketRecord], counters: &ProtocolCounters, nodes: Vec<NodeEnergy>) -> MetricsSummary {
    let mut status_counts: BTreeMap<PacketStatus, u64> = PacketStatus::ALL.iter().map(|s| (*s, 0)).collect();
    let mut delays = Vec::new();
    for r in records {
        let s = r.final_status.unwrap_or(PacketStatus::InFlight);
        *status_counts.entry(s).or_default() += 1;
        if s == PacketStatus::Delivered {
            if let Some(d) = r.delivered_at {
                delays.push(d - r.created_at);
            }
        }
    }
    delays.sort_by(f64::total_cmp);
    let generated = records.len() as u64;
    let delivered = status_counts[&PacketStatus::Delivered];
    MetricsSummary {
        generated,
        delivery_ratio: ratio(delivered, generated),
        deadline_miss_ratio: ratio(status_counts[&PacketStatus::DeadlineMiss], generated),
        mean_delay_s: (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64),
        p95_delay_s: percentile(&delays, 95.0),
        control_overhead: ratio(counters.control_packets_tx, delivered),
        discoveries_initiated: counters.discoveries_initiated,
        mean_disjoint_paths: ratio(counters.selected_paths_total, counters.successful_discoveries),
        status_counts,
        counters: counters.clone(),
        nodes,
    }
}

/// Builds packet records and protocol counters from the trace stream.
#[derive(Debug, Default)]
pub struct MetricsCollector {
    records: Vec<PacketRecord>,
    index: BTreeMap<PacketId, usize>,
    counters: ProtocolCounters,
}

impl MetricsCollector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, rec: &TraceRecord) {
        let c = &mut self.counters;
        match &rec.event {
            TraceEvent::Tx { kind, .. } => {
                if kind.is_control() {
                    c.control_packets_tx += 1;
                } else {
                    c.data_frames_tx += 1;
                }
            }
            TraceEvent::Generate { .. } => {
                if let (Some(p), Some(f)) = (rec.packet, rec.flow) {
                    self.index.insert(p, self.records.len());
                    self.records.push(PacketRecord {
                        packet_id: p,
                        flow_id: f,
                        created_at: rec.time,
                        delivered_at: None,
                        hops_taken: 0,
                        path_id: None,
                        final_status: None,
                    });
                }
            }
            TraceEvent::Deliver { hops, path_id, .. } => {
                if let Some(r) = rec.packet.and_then(|p| self.index.get(&p)).map(|&i| &mut self.records[i]) {
                    debug_assert!(r.final_status.is_none(), "packet {} finalized twice", r.packet_id);
                    r.delivered_at = Some(rec.time);
                    r.hops_taken = *hops;
                    r.path_id = Some(*path_id);
                    r.final_status = Some(PacketStatus::Delivered);
                }
            }
            TraceEvent::DataDrop { status, .. } => {
                if let Some(r) = rec.packet.and_then(|p| self.index.get(&p)).map(|&i| &mut self.records[i]) {
                    debug_assert!(r.final_status.is_none(), "packet {} finalized twice", r.packet_id);
                    r.final_status = Some(*status);
                }
            }
            TraceEvent::DiscoveryStart { attempt, .. } => {
                if *attempt == 0 {
                    c.discoveries_initiated += 1;
                } else {
                    c.rreq_retries += 1;
                }
            }
            TraceEvent::PathsSelected { paths, .. } => {
                if !paths.is_empty() {
                    c.successful_discoveries += 1;
                    c.selected_paths_total += paths.len() as u64;
                }
            }
            TraceEvent::RepairStart { .. } => c.repair_attempts += 1,
            TraceEvent::RepairOk { .. } => c.repair_successes += 1,
            TraceEvent::RerrSent { .. } => c.rerr_sent += 1,
            TraceEvent::Admit { .. } => c.admissions += 1,
            TraceEvent::Reject { .. } => c.rejections += 1,
            _ => {}
        }
    }

    pub fn records(&self) -> &[PacketRecord] {
        &self.records
    }

    pub fn counters(&self) -> &ProtocolCounters {
        &self.counters
    }

    pub fn summarize(&self, nodes: Vec<NodeEnergy>) -> MetricsSummary {
        summarize(&self.records, &self.counters, nodes)
    }
}

impl TraceSink for MetricsCollector {
    fn record(&mut self, rec: &TraceRecord) -> io::Result<()> {
        self.observe(rec);
        Ok(())
    }
}
