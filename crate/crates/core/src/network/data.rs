//! Data generation, forwarding, delivery and bandwidth reservations.

use super::*;

use crate::config::MultipathPolicy;
use crate::qos::Admission;
use crate::routing::DataHeader;
use crate::workload::creation_time;

impl Simulation {
    pub(super) fn on_generate(&mut self, flow: FlowId, k: u64) {
        let spec = self.flows[&flow].clone();
        if let Some(next) = creation_time(&spec, k + 1) {
            if next <= self.cfg.duration_s {
                self.sched
                    .schedule(SimTime::from_secs(next), Event::Generate { flow, k: k + 1 })
                    .expect("creation times increase");
            }
        }
        let n = spec.src;
        if !self.nodes[n.0].alive {
            return;
        }
        let now = self.now();
        let deadline = now + spec.qos.max_delay;
        let pkt = Packet {
            id: self.fresh_packet_id(),
            src: n,
            dst: Some(spec.dst),
            ttl: spec.qos.max_hops + 1,
            body: Body::Data(DataHeader {
                flow,
                path_id: 0,
                created_at: now,
                deadline,
                level: self.cfg.qos.initial_level,
                payload_bits: spec.packet_size,
                visited: vec![n],
            }),
        };
        self.trace(Some(n), Some(pkt.id), Some(flow), TraceEvent::Generate { deadline });
        self.source_send(n, pkt);
    }

    /// Hands a locally originated packet to one of the flow's cached paths,
    /// or parks it while a route is discovered.
    pub(super) fn source_send(&mut self, n: NodeId, mut pkt: Packet) {
        let Some(flow) = pkt.flow() else {
            return;
        };
        let policy = self.cfg.routing.multipath_policy;
        let cap = self.cfg.qos.queue_capacity;
        let node = &mut self.nodes[n.0];
        let st = node.sources.entry(flow).or_default();
        if st.unroutable {
            return self.data_drop(n, &pkt, PacketStatus::Unroutable, "unroutable");
        }
        let usable: Vec<u32> = st
            .paths
            .iter()
            .map(|p| p.path_id)
            .filter(|id| node.fwd.get((flow, *id)).is_some_and(|e| !e.stale))
            .collect();
        if usable.is_empty() {
            if st.pending.len() >= cap {
                return self.data_drop(n, &pkt, PacketStatus::QueueDrop, "pending_full");
            }
            st.pending.push_back(pkt);
            if st.discovery.is_none() {
                self.initiate_discovery(n, flow, 0);
            }
            return;
        }
        let path_id = match policy {
            MultipathPolicy::RoundRobin => {
                let id = usable[(st.rr % usable.len() as u64) as usize];
                st.rr += 1;
                id
            }
            MultipathPolicy::PrimaryBackup => usable[0],
        };
        if let Body::Data(h) = &mut pkt.body {
            h.path_id = path_id;
        }
        self.forward_data(n, pkt);
    }

    /// Routes a data packet that is at `n` and not yet at its destination.
    pub(super) fn route_data(&mut self, n: NodeId, pkt: Packet) {
        let h = pkt.data().expect("data packet");
        let key = (h.flow, h.path_id);
        match self.nodes[n.0].fwd.get(key).map(|e| e.stale) {
            Some(false) => self.forward_data(n, pkt),
            Some(true) => match self.nodes[n.0].repairs.get_mut(&key) {
                Some(rep) => rep.buffer.push(pkt),
                None => self.data_drop(n, &pkt, PacketStatus::RoutingDrop, "stale_route"),
            },
            None if pkt.src == n => self.source_send(n, pkt),
            None => self.data_drop(n, &pkt, PacketStatus::RoutingDrop, "no_route"),
        }
    }

    /// Next hop for a dequeued packet. The route may have changed while
    /// the packet waited.
    pub(super) fn resolve_next_hop(&mut self, n: NodeId, pkt: Packet) -> Option<(Packet, NodeId)> {
        let h = pkt.data().expect("data packet");
        let key = (h.flow, h.path_id);
        match self.nodes[n.0].fwd.get(key) {
            Some(e) if !e.stale => match e.next_hop {
                Some(hop) => Some((pkt, hop)),
                None => {
                    self.data_drop(n, &pkt, PacketStatus::RoutingDrop, "no_route");
                    None
                }
            },
            _ => {
                self.route_data(n, pkt);
                None
            }
        }
    }

    fn forward_data(&mut self, n: NodeId, pkt: Packet) {
        let now = self.now();
        let h = pkt.data().expect("data packet").clone();
        let entry = self.nodes[n.0].fwd.get((h.flow, h.path_id)).expect("route checked").clone();
        if self.nodes[n.0].ledger.mode() == crate::qos::ReservationMode::Ondemand
            && !self.nodes[n.0].ledger.holds(h.flow)
        {
            if self.nodes[n.0].rejected_until.get(&h.flow).is_some_and(|t| *t > now) {
                return self.data_drop(n, &pkt, PacketStatus::AdmissionReject, "backoff");
            }
            if !self.reserve(n, h.flow, entry.rate, entry.flow_stop) {
                let until = now + self.cfg.qos.retry_backoff;
                self.nodes[n.0].rejected_until.insert(h.flow, until);
                return self.data_drop(n, &pkt, PacketStatus::AdmissionReject, "admission");
            }
        }
        let nominal = self.cfg.radio.nominal_hop_delay(h.payload_bits);
        let node = &mut self.nodes[n.0];
        if node.ledger.holds(h.flow) {
            node.res_last_used.insert(h.flow, now);
        }
        let level = node
            .priority
            .assign(h.level, h.deadline, now, entry.remaining_hops(), nominal);
        let mut pkt = pkt;
        if let Body::Data(hd) = &mut pkt.body {
            hd.level = level;
        }
        let bits = h.payload_bits + self.cfg.radio.frame_overhead;
        match node.data_q.enqueue(level, h.deadline, bits, pkt) {
            Ok(()) => {
                self.dirty.insert(n);
            }
            Err(pkt) => self.data_drop(n, &pkt, PacketStatus::QueueDrop, "queue_full"),
        }
    }

    pub(super) fn on_data(&mut self, n: NodeId, _from: NodeId, mut pkt: Packet) {
        let now = self.now();
        let Body::Data(h) = &mut pkt.body else {
            return;
        };
        if h.visited.contains(&n) {
            return self.data_drop(n, &pkt, PacketStatus::RoutingDrop, "loop");
        }
        h.visited.push(n);
        if pkt.dst == Some(n) {
            let (created_at, deadline, hops, path_id) =
                (h.created_at, h.deadline, (h.visited.len() - 1) as u32, h.path_id);
            if now <= deadline {
                self.trace(
                    Some(n),
                    Some(pkt.id),
                    pkt.flow(),
                    TraceEvent::Deliver { created_at, hops, path_id },
                );
            } else {
                self.data_drop(n, &pkt, PacketStatus::DeadlineMiss, "late");
            }
            return;
        }
        pkt.ttl = pkt.ttl.saturating_sub(1);
        if pkt.ttl == 0 {
            return self.data_drop(n, &pkt, PacketStatus::RoutingDrop, "ttl");
        }
        self.route_data(n, pkt);
    }

    // ----- reservations -------------------------------------------------

    /// Reserves `rate` for `flow` at `n`. True if held afterwards.
    pub(super) fn reserve(&mut self, n: NodeId, flow: FlowId, rate: f64, flow_stop: f64) -> bool {
        let now = self.now();
        let node = &mut self.nodes[n.0];
        if node.ledger.holds(flow) {
            return true;
        }
        match node.ledger.reserve(flow, rate) {
            Admission::Rejected => {
                self.trace(Some(n), None, Some(flow), TraceEvent::Reject { rate });
                false
            }
            Admission::Admitted => {
                node.res_last_used.insert(flow, now);
                self.trace(Some(n), None, Some(flow), TraceEvent::Admit { rate });
                self.sched
                    .schedule(SimTime::from_secs(flow_stop.max(now)), Event::ReservationStop { node: n, flow })
                    .expect("not in the past");
                self.sched
                    .schedule_in(self.cfg.qos.reservation_idle_timeout, Event::ReservationIdle { node: n, flow });
                true
            }
        }
    }

    fn release(&mut self, n: NodeId, flow: FlowId, reason: &'static str) {
        if self.nodes[n.0].ledger.release(flow).is_some() {
            self.nodes[n.0].res_last_used.remove(&flow);
            self.trace(Some(n), None, Some(flow), TraceEvent::Release { reason });
        }
    }

    /// Releases the reservation once no path of the flow passes through `n`.
    pub(super) fn release_if_unused(&mut self, n: NodeId, flow: FlowId, reason: &'static str) {
        if !self.nodes[n.0].fwd.has_flow(flow) && !self.nodes[n.0].repairs.keys().any(|k| k.0 == flow) {
            self.release(n, flow, reason);
        }
    }

    pub(super) fn on_reservation_stop(&mut self, n: NodeId, flow: FlowId) {
        self.release(n, flow, "flow_stop");
    }

    pub(super) fn on_reservation_idle(&mut self, n: NodeId, flow: FlowId) {
        if !self.nodes[n.0].ledger.holds(flow) {
            return;
        }
        let timeout = self.cfg.qos.reservation_idle_timeout;
        let last = self.nodes[n.0].res_last_used.get(&flow).copied().unwrap_or(0.0);
        let now = self.now();
        if now >= last + timeout {
            self.release(n, flow, "idle");
        } else {
            self.sched
                .schedule(SimTime::from_secs(last + timeout), Event::ReservationIdle { node: n, flow })
                .expect("not in the past");
        }
    }
}
