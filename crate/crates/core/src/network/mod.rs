//! The simulated network: nodes, the radio channel, and event dispatch.
//!
//! Each node carries its own mobility manager, energy account, neighbor
//! table, forwarding table, reservation ledger and output scheduler. All
//! of it is driven from a single [`Scheduler`]; nothing here is shared
//! across threads.

mod data;
mod routing;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io;
use std::rc::Rc;

use thiserror::Error;

use crate::config::{FaultKind, Placement, ScenarioConfig};
use crate::energy::{tx_power_for_range, EnergyAccount, EnergyState, Trigger};
use crate::ids::{FlowId, NodeId, PacketId};
use crate::mobility::{MobilityKind, MobilityManager, MotionSignal};
use crate::qos::{FlowSpec, PacketScheduler, PriorityState, ReservationLedger};
use crate::radio::{self, LinkDst, Point2, TransmitOutcome};
use crate::rng::RngStream;
use crate::routing::{
    Body, ForwardingEntry, ForwardingTable, NeighborTable, Packet, PacketKind, PathRecord, RouteKey, RreqId,
};
use crate::sim::{EventHandle, Fired, Scheduler, SimTime};
use crate::trace::{TraceEvent, TraceRecord, TraceSink};
use crate::workload::{MetricsCollector, MetricsSummary, NodeEnergy, PacketRecord, PacketStatus};

use rand::Rng;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {field}: {message}")]
    Config { field: String, message: String },
    #[error("trace sink failed: {0}")]
    Sink(#[from] io::Error),
}

#[derive(Debug)]
enum Event {
    Hello(NodeId),
    Purge(NodeId),
    TxDone(NodeId),
    RxBegin(NodeId),
    RxEnd { to: NodeId, from: NodeId, packet: Rc<Packet> },
    Idle(NodeId),
    Depleted(NodeId),
    Depart(NodeId),
    Arrive(NodeId),
    Generate { flow: FlowId, k: u64 },
    DiscoveryTimeout { node: NodeId, flow: FlowId, seq: u32 },
    ReplyWindow { node: NodeId, rreq: RreqId },
    RepairTimeout { node: NodeId, key: RouteKey, seq: u32 },
    ReservationStop { node: NodeId, flow: FlowId },
    ReservationIdle { node: NodeId, flow: FlowId },
    Fault(usize),
}

#[derive(Debug, Default)]
struct Timers {
    hello: Option<EventHandle>,
    purge: Option<EventHandle>,
    idle: Option<EventHandle>,
    depleted: Option<EventHandle>,
    mobility: Option<EventHandle>,
}

#[derive(Debug, Default)]
struct SeenRreq {
    forwarded: u32,
    first_hops: BTreeSet<NodeId>,
    replied: bool,
}

#[derive(Debug)]
struct Collection {
    flow: FlowId,
    closed: bool,
    candidates: Vec<(PathRecord, Vec<f64>)>,
    template: crate::routing::RreqBody,
}

#[derive(Debug)]
struct Repair {
    seq: u32,
    timer: EventHandle,
    buffer: Vec<Packet>,
}

#[derive(Debug)]
struct Discovery {
    seq: u32,
    attempt: u32,
    timer: EventHandle,
}

/// Route cache and buffers for a flow originating at this node.
#[derive(Debug, Default)]
struct SourceState {
    paths: Vec<PathRecord>,
    pending: VecDeque<Packet>,
    discovery: Option<Discovery>,
    unroutable: bool,
    rr: u64,
}

#[derive(Debug)]
struct Node {
    alive: bool,
    failed_at: Option<f64>,
    tx_range: f64,
    mobility: MobilityManager<f64>,
    energy: EnergyAccount<f64>,
    neighbors: NeighborTable,
    tx_busy: bool,
    control_q: VecDeque<(Packet, LinkDst)>,
    data_q: PacketScheduler<Packet>,
    priority: PriorityState,
    ledger: ReservationLedger<f64>,
    res_last_used: BTreeMap<FlowId, f64>,
    rejected_until: BTreeMap<FlowId, f64>,
    fwd: ForwardingTable,
    seen_rreq: BTreeMap<RreqId, SeenRreq>,
    collections: BTreeMap<RreqId, Collection>,
    path_ids: BTreeMap<FlowId, u32>,
    repairs: BTreeMap<RouteKey, Repair>,
    sources: BTreeMap<FlowId, SourceState>,
    rreq_seq: u32,
    timers: Timers,
}

/// Result of one destination-side path selection.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscoveryRecord {
    pub time: f64,
    pub rreq: RreqId,
    pub flow: FlowId,
    pub destination: NodeId,
    pub candidates: Vec<PathRecord>,
    pub selected: Vec<PathRecord>,
}

#[derive(Debug)]
pub struct RunResult {
    pub summary: MetricsSummary,
    pub records: Vec<PacketRecord>,
    pub discoveries: Vec<DiscoveryRecord>,
    pub end_time: f64,
    pub trace: Vec<TraceRecord>,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    flows: BTreeMap<FlowId, FlowSpec>,
    sched: Scheduler<Event>,
    nodes: Vec<Node>,
    radio_rng: RngStream,
    mobility_rngs: Vec<RngStream>,
    next_packet: u64,
    metrics: MetricsCollector,
    sinks: Vec<Box<dyn TraceSink>>,
    sink_error: Option<io::Error>,
    discoveries: Vec<DiscoveryRecord>,
    dirty: BTreeSet<NodeId>,
    memory: Option<Vec<TraceRecord>>,
}

impl Simulation {
    /// Builds the network at t = 0. The configuration is validated and its
    /// derived defaults resolved first.
    pub fn new(mut cfg: ScenarioConfig) -> Result<Self, SimError> {
        cfg.resolve_defaults();
        cfg.validate().map_err(|v| SimError::Config {
            field: v.field,
            message: v.message,
        })?;
        let n = cfg.nodes.count;
        let mut placement_rng = RngStream::new(cfg.seed, "placement");
        let positions: Vec<Point2<f64>> = match &cfg.nodes.placement {
            Placement::Explicit(list) => list.iter().map(|p| Point2::new(p[0], p[1])).collect(),
            Placement::UniformRandom => (0..n)
                .map(|_| {
                    let r = placement_rng.rng();
                    Point2::new(
                        r.gen_range(0.0..=cfg.area.width_m),
                        r.gen_range(0.0..=cfg.area.height_m),
                    )
                })
                .collect(),
        };
        let q = &cfg.qos;
        let nodes = positions
            .iter()
            .enumerate()
            .map(|(i, pos)| {
                let tx_range = cfg
                    .nodes
                    .radio_overrides
                    .iter()
                    .rev()
                    .find(|o| o.node.0 == i)
                    .map_or(cfg.radio.tx_range, |o| o.tx_range);
                Node {
                    alive: true,
                    failed_at: None,
                    tx_range,
                    mobility: MobilityManager::new(cfg.mobility, *pos),
                    energy: EnergyAccount::new(cfg.nodes.initial_battery_j, 0.0),
                    neighbors: NeighborTable::new(),
                    tx_busy: false,
                    control_q: VecDeque::new(),
                    data_q: PacketScheduler::new(q.levels, q.queue_capacity),
                    priority: PriorityState::new(q.levels, q.window, q.promotion_budget, q.demote_factor),
                    ledger: ReservationLedger::new(cfg.radio.bitrate, q.eta, q.reservation_mode),
                    res_last_used: BTreeMap::new(),
                    rejected_until: BTreeMap::new(),
                    fwd: ForwardingTable::default(),
                    seen_rreq: BTreeMap::new(),
                    collections: BTreeMap::new(),
                    path_ids: BTreeMap::new(),
                    repairs: BTreeMap::new(),
                    sources: BTreeMap::new(),
                    rreq_seq: 0,
                    timers: Timers::default(),
                }
            })
            .collect();
        let flows = cfg.flows().into_iter().map(|f| (f.flow_id, f)).collect();
        let mut sim = Simulation {
            radio_rng: RngStream::new(cfg.seed, "radio"),
            mobility_rngs: (0..n).map(|i| RngStream::new(cfg.seed, format!("mobility/{i}"))).collect(),
            cfg,
            flows,
            sched: Scheduler::new(),
            nodes,
            next_packet: 0,
            metrics: MetricsCollector::new(),
            sinks: Vec::new(),
            sink_error: None,
            discoveries: Vec::new(),
            dirty: BTreeSet::new(),
            memory: None,
        };
        sim.bootstrap();
        Ok(sim)
    }

    fn bootstrap(&mut self) {
        let mut hello_rng = RngStream::new(self.cfg.seed, "hello");
        let hi = self.cfg.routing.hello_interval;
        for i in 0..self.nodes.len() {
            let n = NodeId(i);
            let phase = hello_rng.rng().gen_range(0.0..hi);
            let h = self.sched.schedule_in(phase, Event::Hello(n));
            self.nodes[i].timers.hello = Some(h);
            self.refresh_energy_timers(n);
            if self.cfg.mobility.kind == MobilityKind::RandomWaypoint {
                let h = self.sched.schedule_in(0.0, Event::Depart(n));
                self.nodes[i].timers.mobility = Some(h);
            }
        }
        let starts: Vec<(FlowId, f64)> = self.flows.values().map(|f| (f.flow_id, f.start)).collect();
        for (flow, start) in starts {
            if start <= self.cfg.duration_s {
                self.sched
                    .schedule(SimTime::from_secs(start), Event::Generate { flow, k: 0 })
                    .expect("flow start is in the future");
            }
        }
        for (i, f) in self.cfg.faults.iter().enumerate() {
            self.sched
                .schedule(SimTime::from_secs(f.at), Event::Fault(i))
                .expect("fault time is in the future");
        }
    }

    pub fn add_sink(&mut self, sink: Box<dyn TraceSink>) {
        self.sinks.push(sink);
    }

    /// Keeps every trace record in memory from now on.
    pub fn keep_trace(&mut self) {
        self.memory.get_or_insert_with(Vec::new);
    }

    pub fn trace_records(&self) -> &[TraceRecord] {
        self.memory.as_deref().unwrap_or(&[])
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn now(&self) -> f64 {
        self.sched.now().secs()
    }

    /// Dispatches every event up to and including `end` (capped at the
    /// scenario duration).
    pub fn run_until(&mut self, end: f64) {
        let end = SimTime::from_secs(end.min(self.cfg.duration_s));
        while let Some(fired) = self.sched.pop_until(end) {
            self.dispatch(fired);
            self.flush_dirty();
        }
        self.sched.advance_to(end);
    }

    pub fn run(&mut self) {
        self.run_until(self.cfg.duration_s);
    }

    /// Runs to the end of the scenario and returns the summary.
    pub fn finish(mut self) -> Result<RunResult, SimError> {
        self.run();
        let now = self.now();
        let profile = self.cfg.energy.profile;
        for node in &mut self.nodes {
            node.energy.accrue(now, &profile);
        }
        let nodes: Vec<NodeEnergy> = (0..self.nodes.len()).map(|i| self.node_energy(NodeId(i))).collect();
        for s in &mut self.sinks {
            if let Err(e) = s.flush() {
                self.sink_error.get_or_insert(e);
            }
        }
        if let Some(e) = self.sink_error.take() {
            return Err(SimError::Sink(e));
        }
        Ok(RunResult {
            summary: self.metrics.summarize(nodes),
            records: self.metrics.records().to_vec(),
            discoveries: std::mem::take(&mut self.discoveries),
            end_time: now,
            trace: self.memory.take().unwrap_or_default(),
        })
    }

    // ----- inspection ---------------------------------------------------

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn position(&self, n: NodeId) -> Point2<f64> {
        self.nodes[n.0].mobility.position_at(self.now())
    }

    pub fn is_alive(&self, n: NodeId) -> bool {
        self.nodes[n.0].alive
    }

    pub fn neighbor_table(&self, n: NodeId) -> Vec<NodeId> {
        self.nodes[n.0].neighbors.ids()
    }

    /// Ground-truth neighbors of `n` at the current instant.
    pub fn geometric_neighbors(&self, n: NodeId) -> Vec<NodeId> {
        let (pos, alive) = self.snapshot();
        radio::geometric_neighbors(n, &pos, &alive, self.nodes[n.0].tx_range)
    }

    pub fn energy(&self, n: NodeId) -> &EnergyAccount<f64> {
        &self.nodes[n.0].energy
    }

    pub fn forwarding_entry(&self, n: NodeId, flow: FlowId, path_id: u32) -> Option<&ForwardingEntry> {
        self.nodes[n.0].fwd.get((flow, path_id))
    }

    pub fn forwarding_entries(&self, n: NodeId) -> impl Iterator<Item = &ForwardingEntry> {
        self.nodes[n.0].fwd.iter()
    }

    /// Paths currently cached at the flow's source.
    pub fn source_paths(&self, flow: FlowId) -> Vec<PathRecord> {
        let Some(f) = self.flows.get(&flow) else {
            return Vec::new();
        };
        self.nodes[f.src.0]
            .sources
            .get(&flow)
            .map(|s| s.paths.clone())
            .unwrap_or_default()
    }

    pub fn reserved_bandwidth(&self, n: NodeId) -> f64 {
        self.nodes[n.0].ledger.reserved()
    }

    pub fn discoveries(&self) -> &[DiscoveryRecord] {
        &self.discoveries
    }

    pub fn metrics(&self) -> &MetricsCollector {
        &self.metrics
    }

    fn node_energy(&self, n: NodeId) -> NodeEnergy {
        let node = &self.nodes[n.0];
        let e = &node.energy;
        NodeEnergy {
            node: n.0,
            initial_j: e.initial(),
            consumed_j: e.consumed_total(),
            battery_j: e.battery(),
            death_time: e.dead_at(),
            failed_at: node.failed_at,
            occupancy_s: EnergyState::ALL.iter().map(|s| (s.to_string(), e.occupancy(*s))).collect(),
            consumed_by_state_j: EnergyState::ALL.iter().map(|s| (s.to_string(), e.consumed(*s))).collect(),
        }
    }

    fn snapshot(&self) -> (Vec<Point2<f64>>, Vec<bool>) {
        let now = self.now();
        let pos = self.nodes.iter().map(|n| n.mobility.position_at(now)).collect();
        let alive = self.nodes.iter().map(|n| n.alive).collect();
        (pos, alive)
    }

    // ----- plumbing -----------------------------------------------------

    fn trace(&mut self, node: Option<NodeId>, packet: Option<PacketId>, flow: Option<FlowId>, event: TraceEvent) {
        let rec = TraceRecord {
            time: self.now(),
            node,
            packet,
            flow,
            event,
        };
        self.metrics.observe(&rec);
        if let Some(m) = &mut self.memory {
            m.push(rec.clone());
        }
        for s in &mut self.sinks {
            if let Err(e) = s.record(&rec) {
                self.sink_error.get_or_insert(e);
            }
        }
    }

    fn fresh_packet_id(&mut self) -> PacketId {
        self.next_packet += 1;
        PacketId(self.next_packet)
    }

    fn data_drop(&mut self, n: NodeId, pkt: &Packet, status: PacketStatus, reason: &'static str) {
        self.trace(Some(n), Some(pkt.id), pkt.flow(), TraceEvent::DataDrop { status, reason });
    }

    fn dispatch(&mut self, fired: Fired<Event>) {
        match fired.event {
            Event::Hello(n) => self.on_hello_timer(n),
            Event::Purge(n) => self.on_purge_timer(n),
            Event::TxDone(n) => self.on_tx_done(n),
            Event::RxBegin(n) => {
                if self.nodes[n.0].alive {
                    self.energy_trigger(n, Trigger::RxBegin);
                }
            }
            Event::RxEnd { to, from, packet } => self.on_rx_end(to, from, packet),
            Event::Idle(n) => {
                self.nodes[n.0].timers.idle = None;
                if self.nodes[n.0].alive {
                    self.energy_trigger(n, Trigger::IdleTimeout);
                }
            }
            Event::Depleted(n) => self.on_depleted(n),
            Event::Depart(n) => self.on_depart(n),
            Event::Arrive(n) => self.on_arrive(n),
            Event::Generate { flow, k } => self.on_generate(flow, k),
            Event::DiscoveryTimeout { node, flow, seq } => self.on_discovery_timeout(node, flow, seq),
            Event::ReplyWindow { node, rreq } => self.on_reply_window(node, rreq),
            Event::RepairTimeout { node, key, seq } => self.on_repair_timeout(node, key, seq),
            Event::ReservationStop { node, flow } => self.on_reservation_stop(node, flow),
            Event::ReservationIdle { node, flow } => self.on_reservation_idle(node, flow),
            Event::Fault(i) => self.on_fault(i),
        }
    }

    fn flush_dirty(&mut self) {
        while let Some(n) = self.dirty.pop_first() {
            self.try_send(n);
        }
    }

    fn enqueue_control(&mut self, n: NodeId, pkt: Packet, dst: LinkDst) {
        let cap = self.cfg.qos.control_queue_capacity;
        if self.nodes[n.0].control_q.len() >= cap {
            let kind = pkt.kind();
            self.trace(Some(n), Some(pkt.id), pkt.flow(), TraceEvent::ControlDrop { kind, reason: "queue_full" });
            return;
        }
        self.nodes[n.0].control_q.push_back((pkt, dst));
        self.dirty.insert(n);
    }

    // ----- radio --------------------------------------------------------

    fn try_send(&mut self, n: NodeId) {
        loop {
            let node = &mut self.nodes[n.0];
            if !node.alive || node.tx_busy {
                return;
            }
            let (pkt, dst) = if let Some(item) = node.control_q.pop_front() {
                item
            } else {
                let now = self.sched.now().secs();
                let mut expired = Vec::new();
                let next = node.data_q.dequeue(now, &mut expired);
                if let Some(item) = &next {
                    node.priority.note_dequeued(item.level, now);
                }
                for e in expired {
                    self.data_drop(n, &e.packet, PacketStatus::DeadlineMiss, "expired_in_queue");
                }
                let Some(item) = next else {
                    return;
                };
                match self.resolve_next_hop(n, item.packet) {
                    Some((pkt, hop)) => (pkt, LinkDst::Unicast(hop)),
                    None => continue,
                }
            };
            if self.start_tx(n, pkt, dst) {
                return;
            }
        }
    }

    /// Puts a frame on the air. Returns false when the unicast failed at
    /// the MAC and the radio stays idle.
    fn start_tx(&mut self, n: NodeId, pkt: Packet, dst: LinkDst) -> bool {
        let now = self.now();
        let size = pkt.payload_bits() + self.cfg.radio.frame_overhead;
        let (pos, alive) = self.snapshot();
        let mut radio_cfg = self.cfg.radio;
        radio_cfg.tx_range = self.nodes[n.0].tx_range;
        let outcome = radio::transmit(&radio_cfg, n, dst, size, now, &pos, &alive, self.radio_rng.rng());
        let kind = pkt.kind();
        match outcome {
            TransmitOutcome::MacFailure => {
                let LinkDst::Unicast(to) = dst else {
                    unreachable!("broadcast never fails at the MAC")
                };
                self.trace(Some(n), Some(pkt.id), pkt.flow(), TraceEvent::MacFailure { kind, to });
                if self.cfg.radio.mac_failure_feedback {
                    self.on_mac_failure(n, pkt, to);
                } else if kind == PacketKind::Data {
                    self.data_drop(n, &pkt, PacketStatus::RoutingDrop, "link_down");
                }
                false
            }
            TransmitOutcome::Sent { deliveries, lost } => {
                let to = match dst {
                    LinkDst::Unicast(t) => Some(t),
                    LinkDst::Broadcast => None,
                };
                self.nodes[n.0].tx_busy = true;
                if self.cfg.energy.range_adjust {
                    let dist = match to {
                        Some(t) => pos[n.0].distance(&pos[t.0]),
                        None => radio_cfg.tx_range,
                    };
                    let p = tx_power_for_range(&self.cfg.energy.range, dist.max(1e-3));
                    let profile = self.cfg.energy.profile;
                    self.nodes[n.0].energy.set_tx_power(now, Some(p), &profile);
                }
                self.trace(Some(n), Some(pkt.id), pkt.flow(), TraceEvent::Tx { kind, to, bits: size });
                self.energy_trigger(n, Trigger::TxBegin);
                let ser = radio_cfg.serialization_time(size);
                self.sched.schedule_in(ser, Event::TxDone(n));
                let shared = Rc::new(pkt);
                for d in deliveries {
                    self.sched
                        .schedule(SimTime::from_secs(d.rx_start), Event::RxBegin(d.to))
                        .expect("reception in the future");
                    self.sched
                        .schedule(
                            SimTime::from_secs(d.rx_end),
                            Event::RxEnd { to: d.to, from: n, packet: Rc::clone(&shared) },
                        )
                        .expect("reception in the future");
                }
                if !lost.is_empty() && kind == PacketKind::Data {
                    self.data_drop(n, &shared, PacketStatus::RadioLoss, "lost_on_air");
                }
                true
            }
        }
    }

    fn on_tx_done(&mut self, n: NodeId) {
        if !self.nodes[n.0].alive {
            return;
        }
        self.nodes[n.0].tx_busy = false;
        self.energy_trigger(n, Trigger::TxEnd);
        self.dirty.insert(n);
    }

    fn on_rx_end(&mut self, to: NodeId, from: NodeId, packet: Rc<Packet>) {
        if !self.nodes[to.0].alive {
            return;
        }
        self.energy_trigger(to, Trigger::RxEnd);
        if !self.nodes[to.0].alive {
            return;
        }
        let pkt = Rc::try_unwrap(packet).unwrap_or_else(|rc| (*rc).clone());
        self.trace(Some(to), Some(pkt.id), pkt.flow(), TraceEvent::Rx { kind: pkt.kind(), from });
        match pkt.body {
            Body::Hello => self.on_hello(to, from, &pkt),
            Body::HelloReply => self.on_hello_reply(to, from),
            Body::Rreq(_) => self.on_rreq(to, from, pkt),
            Body::Rrep(_) => self.on_rrep(to, from, pkt),
            Body::Rerr(_) => self.on_rerr(to, from, pkt),
            Body::Data(_) => self.on_data(to, from, pkt),
        }
    }

    fn on_mac_failure(&mut self, n: NodeId, pkt: Packet, to: NodeId) {
        self.on_link_failure(n, to);
        match pkt.kind() {
            PacketKind::Data => self.route_data(n, pkt),
            kind => {
                if matches!(kind, PacketKind::Rrep | PacketKind::Rerr) {
                    self.trace(Some(n), Some(pkt.id), pkt.flow(), TraceEvent::ControlDrop { kind, reason: "link_down" });
                }
            }
        }
    }

    // ----- energy -------------------------------------------------------

    fn energy_trigger(&mut self, n: NodeId, trigger: Trigger) {
        let now = self.now();
        let profile = self.cfg.energy.profile;
        let node = &mut self.nodes[n.0];
        let before = node.energy.state();
        let after = node.energy.transition(now, trigger, &profile);
        if node.energy.is_dead() {
            self.on_battery_death(n);
            return;
        }
        if before != after {
            self.trace(Some(n), None, None, TraceEvent::Energy { from: before, to: after });
        }
        self.refresh_energy_timers(n);
    }

    fn refresh_energy_timers(&mut self, n: NodeId) {
        let profile = self.cfg.energy.profile;
        let node = &mut self.nodes[n.0];
        if let Some(h) = node.timers.depleted.take() {
            self.sched.cancel(h);
        }
        if let Some(h) = node.timers.idle.take() {
            self.sched.cancel(h);
        }
        if !node.alive {
            return;
        }
        if let Some(dt) = node.energy.time_to_depletion(&profile) {
            node.timers.depleted = Some(self.sched.schedule_in(dt, Event::Depleted(n)));
        }
        if node.energy.machine().awaiting_idle_timeout() {
            node.timers.idle = Some(self.sched.schedule_in(profile.idle_timeout, Event::Idle(n)));
        }
    }

    fn on_depleted(&mut self, n: NodeId) {
        let now = self.now();
        let profile = self.cfg.energy.profile;
        let node = &mut self.nodes[n.0];
        node.timers.depleted = None;
        if !node.alive {
            return;
        }
        node.energy.accrue(now, &profile);
        if !node.energy.is_dead() {
            // Rounding can leave a residue of a few ulps at the predicted instant.
            if node.energy.battery() <= 1e-12 * node.energy.initial().max(1.0) {
                node.energy.deplete(now, &profile);
            } else {
                self.refresh_energy_timers(n);
                return;
            }
        }
        self.on_battery_death(n);
    }

    fn on_battery_death(&mut self, n: NodeId) {
        if !self.nodes[n.0].alive {
            return;
        }
        let battery = self.nodes[n.0].energy.battery();
        self.trace(Some(n), None, None, TraceEvent::Death { battery_j: battery });
        self.shutdown(n);
    }

    /// Takes a node down: no more frames, timers, or forwarding.
    fn shutdown(&mut self, n: NodeId) {
        let now = self.now();
        let node = &mut self.nodes[n.0];
        node.alive = false;
        node.tx_busy = false;
        node.mobility.halt(now);
        let t = std::mem::take(&mut node.timers);
        for h in [t.hello, t.purge, t.idle, t.depleted, t.mobility].into_iter().flatten() {
            self.sched.cancel(h);
        }
        let node = &mut self.nodes[n.0];
        node.control_q.clear();
        let mut stranded: Vec<Packet> = node.data_q.drain().into_iter().map(|q| q.packet).collect();
        for (_, r) in std::mem::take(&mut node.repairs) {
            self.sched.cancel(r.timer);
            stranded.extend(r.buffer);
        }
        let node = &mut self.nodes[n.0];
        for st in node.sources.values_mut() {
            stranded.extend(st.pending.drain(..));
            if let Some(d) = st.discovery.take() {
                self.sched.cancel(d.timer);
            }
        }
        for p in stranded {
            self.data_drop(n, &p, PacketStatus::RoutingDrop, "node_down");
        }
    }

    // ----- mobility and faults -----------------------------------------

    fn area(&self) -> (f64, f64) {
        (self.cfg.area.width_m, self.cfg.area.height_m)
    }

    fn on_depart(&mut self, n: NodeId) {
        self.nodes[n.0].timers.mobility = None;
        if !self.nodes[n.0].alive {
            return;
        }
        let now = self.now();
        let area = self.area();
        let rng = self.mobility_rngs[n.0].rng();
        let Some((leg, MotionSignal::Start)) = self.nodes[n.0].mobility.depart(now, area, rng) else {
            return;
        };
        self.trace(Some(n), None, None, TraceEvent::MoveStart);
        self.energy_trigger(n, Trigger::MoveStart);
        if self.nodes[n.0].alive {
            let h = self
                .sched
                .schedule(SimTime::from_secs(leg.arrive_at().max(now)), Event::Arrive(n))
                .expect("arrival not in the past");
            self.nodes[n.0].timers.mobility = Some(h);
        }
    }

    fn on_arrive(&mut self, n: NodeId) {
        self.nodes[n.0].timers.mobility = None;
        if !self.nodes[n.0].alive {
            return;
        }
        let now = self.now();
        let Some((MotionSignal::Stop, next)) = self.nodes[n.0].mobility.arrive(now) else {
            return;
        };
        self.trace(Some(n), None, None, TraceEvent::MoveStop);
        self.energy_trigger(n, Trigger::MoveStop);
        if self.nodes[n.0].alive {
            let h = self
                .sched
                .schedule(SimTime::from_secs(next.max(now)), Event::Depart(n))
                .expect("departure not in the past");
            self.nodes[n.0].timers.mobility = Some(h);
        }
    }

    fn on_fault(&mut self, i: usize) {
        let fault = self.cfg.faults[i].clone();
        let n = fault.node;
        if !self.nodes[n.0].alive {
            return;
        }
        let now = self.now();
        match fault.kind {
            FaultKind::Kill => {
                let profile = self.cfg.energy.profile;
                self.nodes[n.0].energy.freeze(now, &profile);
                self.nodes[n.0].failed_at = Some(now);
                self.trace(Some(n), None, None, TraceEvent::Failure);
                self.shutdown(n);
            }
            FaultKind::Relocate { x, y } => {
                let to = Point2::new(x.clamp(0.0, self.cfg.area.width_m), y.clamp(0.0, self.cfg.area.height_m));
                self.trace(Some(n), None, None, TraceEvent::Relocate { x: to.x, y: to.y });
                if let Some(arrival) = self.nodes[n.0].mobility.relocate(now, to) {
                    if let Some(h) = self.nodes[n.0].timers.mobility.take() {
                        self.sched.cancel(h);
                    }
                    let h = self
                        .sched
                        .schedule(SimTime::from_secs(arrival.max(now)), Event::Arrive(n))
                        .expect("arrival not in the past");
                    self.nodes[n.0].timers.mobility = Some(h);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_scenario_str;

    fn two_nodes(extra: &str) -> ScenarioConfig {
        parse_scenario_str(&format!(
            r#"{{"nodes": {{"count": 2, "placement": {{"explicit": [[0, 0], [150, 0]]}}}},
                "traffic": [{{"src": 0, "dst": 1, "rate": 8192, "start": 1, "stop": 5}}],
                "duration_s": 6{extra}}}"#
        ))
        .unwrap()
    }

    #[test]
    fn adjacent_pair_delivers_everything() {
        let r = Simulation::new(two_nodes("")).unwrap().finish().unwrap();
        assert_eq!(r.summary.generated, 8);
        assert_eq!(r.summary.delivery_ratio, Some(1.0));
        assert_eq!(r.discoveries.len(), 1);
        assert_eq!(r.discoveries[0].selected[0].nodes, vec![NodeId(0), NodeId(1)]);
    }

    #[test]
    fn neighbors_known_after_two_hello_intervals() {
        let mut sim = Simulation::new(two_nodes("")).unwrap();
        sim.run_until(2.0);
        assert_eq!(sim.neighbor_table(NodeId(0)), vec![NodeId(1)]);
        assert_eq!(sim.neighbor_table(NodeId(1)), vec![NodeId(0)]);
    }

    #[test]
    fn killed_source_generates_nothing_more() {
        let cfg = two_nodes(r#", "faults": [{"at": 2.0, "node": 0, "kind": "kill"}]"#);
        let mut sim = Simulation::new(cfg).unwrap();
        sim.run_until(3.0);
        assert!(!sim.is_alive(NodeId(0)));
        assert!(sim.energy(NodeId(0)).is_frozen());
        let r = sim.finish().unwrap();
        assert_eq!(r.summary.generated, 2);
        assert_eq!(r.summary.nodes[0].failed_at, Some(2.0));
        assert_eq!(r.summary.nodes[0].death_time, None);
    }

    #[test]
    fn run_stops_at_duration() {
        let mut sim = Simulation::new(two_nodes("")).unwrap();
        sim.run_until(100.0);
        assert_eq!(sim.now(), 6.0);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut cfg = two_nodes("");
        cfg.qos.eta = 2.0;
        assert!(matches!(Simulation::new(cfg), Err(SimError::Config { .. })));
    }
}
