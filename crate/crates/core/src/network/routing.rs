//! Neighbor discovery, route discovery, replies, errors and local repair.

use super::*;

use crate::routing::{select_disjoint, RepairContext, RerrBody, RrepBody, RreqBody};

impl Simulation {
    // ----- neighbors ----------------------------------------------------

    pub(super) fn on_hello_timer(&mut self, n: NodeId) {
        self.nodes[n.0].timers.hello = None;
        if !self.nodes[n.0].alive {
            return;
        }
        let pkt = Packet {
            id: self.fresh_packet_id(),
            src: n,
            dst: None,
            ttl: 1,
            body: Body::Hello,
        };
        self.enqueue_control(n, pkt, LinkDst::Broadcast);
        let h = self.sched.schedule_in(self.cfg.routing.hello_interval, Event::Hello(n));
        self.nodes[n.0].timers.hello = Some(h);
    }

    pub(super) fn on_hello(&mut self, n: NodeId, from: NodeId, hello: &Packet) {
        debug_assert_eq!(hello.src, from);
        let reply = Packet {
            id: self.fresh_packet_id(),
            src: n,
            dst: Some(from),
            ttl: 1,
            body: Body::HelloReply,
        };
        self.enqueue_control(n, reply, LinkDst::Unicast(from));
    }

    pub(super) fn on_hello_reply(&mut self, n: NodeId, from: NodeId) {
        let now = self.now();
        if self.nodes[n.0].neighbors.refresh(from, now) {
            self.trace(Some(n), None, None, TraceEvent::NeighborAdd { neighbor: from });
        }
        if self.nodes[n.0].timers.purge.is_none() {
            self.arm_purge(n);
        }
    }

    fn arm_purge(&mut self, n: NodeId) {
        let timeout = self.cfg.routing.neighbor_timeout();
        let now = self.now();
        let node = &mut self.nodes[n.0];
        if let Some(oldest) = node.neighbors.oldest() {
            let at = (oldest + timeout + 1e-9).max(now);
            let h = self
                .sched
                .schedule(SimTime::from_secs(at), Event::Purge(n))
                .expect("purge not in the past");
            node.timers.purge = Some(h);
        }
    }

    pub(super) fn on_purge_timer(&mut self, n: NodeId) {
        self.nodes[n.0].timers.purge = None;
        if !self.nodes[n.0].alive {
            return;
        }
        let now = self.now();
        let timeout = self.cfg.routing.neighbor_timeout();
        let lost = self.nodes[n.0].neighbors.purge(now, timeout);
        for l in lost {
            self.trace(Some(n), None, None, TraceEvent::NeighborLost { neighbor: l });
            self.on_link_failure(n, l);
        }
        self.arm_purge(n);
    }

    /// Reacts to losing `lost` as a neighbor of `n`.
    pub(super) fn on_link_failure(&mut self, n: NodeId, lost: NodeId) {
        if self.nodes[n.0].neighbors.remove(lost) {
            self.trace(Some(n), None, None, TraceEvent::NeighborLost { neighbor: lost });
        }
        for key in self.nodes[n.0].fwd.using_next_hop(lost) {
            let Some(entry) = self.nodes[n.0].fwd.get(key) else {
                continue;
            };
            if entry.previous_hop.is_none() {
                self.source_path_failed(n, key);
            } else {
                self.start_repair(n, key, lost);
            }
        }
    }

    // ----- source side ------------------------------------------------

    pub(super) fn local_hop_delay(&self, n: NodeId, packet_size: u64) -> f64 {
        let radio = &self.cfg.radio;
        let queued = self.nodes[n.0].data_q.queued_bits();
        queued as f64 / radio.bitrate + radio.serialization_time(packet_size + radio.frame_overhead)
    }

    pub(super) fn initiate_discovery(&mut self, n: NodeId, flow: FlowId, attempt: u32) {
        if !self.nodes[n.0].alive {
            return;
        }
        let spec = self.flows[&flow].clone();
        let node = &mut self.nodes[n.0];
        let seq = node.rreq_seq;
        node.rreq_seq += 1;
        let rreq_id = RreqId { source: n, seq };
        node.seen_rreq.insert(rreq_id, SeenRreq::default());
        let body = RreqBody {
            rreq_id,
            flow,
            target: spec.dst,
            qos: spec.qos,
            rate: spec.rate,
            packet_size: spec.packet_size,
            flow_stop: spec.stop,
            traversed: vec![n],
            arrival_delays: vec![0.0],
            acc_delay: self.local_hop_delay(n, spec.packet_size),
            bottleneck_bw: self.nodes[n.0].ledger.residual(),
            repair: None,
        };
        let pkt = Packet {
            id: self.fresh_packet_id(),
            src: n,
            dst: None,
            ttl: self.cfg.routing.net_diameter_ttl,
            body: Body::Rreq(body),
        };
        let timeout = self.cfg.routing.discovery_timeout * (1.0 + attempt as f64);
        let timer = self.sched.schedule_in(timeout, Event::DiscoveryTimeout { node: n, flow, seq });
        self.nodes[n.0].sources.entry(flow).or_default().discovery = Some(Discovery { seq, attempt, timer });
        self.trace(
            Some(n),
            Some(pkt.id),
            Some(flow),
            TraceEvent::DiscoveryStart { rreq: rreq_id.to_string(), attempt },
        );
        self.enqueue_control(n, pkt, LinkDst::Broadcast);
    }

    pub(super) fn on_discovery_timeout(&mut self, n: NodeId, flow: FlowId, seq: u32) {
        if !self.nodes[n.0].alive {
            return;
        }
        let Some(st) = self.nodes[n.0].sources.get_mut(&flow) else {
            return;
        };
        let attempt = match &st.discovery {
            Some(d) if d.seq == seq => d.attempt,
            _ => return,
        };
        st.discovery = None;
        if !st.paths.is_empty() {
            return;
        }
        if attempt < self.cfg.routing.max_discovery_retries {
            self.initiate_discovery(n, flow, attempt + 1);
            return;
        }
        st.unroutable = true;
        let pending: Vec<Packet> = st.pending.drain(..).collect();
        self.trace(Some(n), None, Some(flow), TraceEvent::DiscoveryFailed { attempts: attempt + 1 });
        for p in pending {
            self.data_drop(n, &p, PacketStatus::Unroutable, "discovery_failed");
        }
    }

    /// A path of a local flow broke at its first hop or was torn down by
    /// an error from downstream.
    pub(super) fn source_path_failed(&mut self, n: NodeId, key: RouteKey) {
        let (flow, path_id) = key;
        self.nodes[n.0].fwd.remove(key);
        let active = self.now() < self.flows[&flow].stop;
        let st = self.nodes[n.0].sources.entry(flow).or_default();
        st.paths.retain(|p| p.path_id != path_id);
        let remaining = st.paths.len();
        let wants_route = !st.pending.is_empty() || active;
        let can_discover = st.discovery.is_none() && !st.unroutable;
        self.trace(Some(n), None, Some(flow), TraceEvent::RouteRemoved { path_id, remaining });
        self.release_if_unused(n, flow, "path_removed");
        if remaining > 0 {
            self.trace(Some(n), None, Some(flow), TraceEvent::Failover { path_id, remaining });
        } else if wants_route && can_discover {
            self.initiate_discovery(n, flow, 0);
        }
    }

    // ----- route requests ---------------------------------------------

    fn discard_rreq(&mut self, n: NodeId, pkt: &Packet, rreq: RreqId, reason: &'static str) {
        self.trace(
            Some(n),
            Some(pkt.id),
            pkt.flow(),
            TraceEvent::RreqDiscard { rreq: rreq.to_string(), reason },
        );
    }

    pub(super) fn on_rreq(&mut self, n: NodeId, _from: NodeId, mut pkt: Packet) {
        let Body::Rreq(body) = &pkt.body else {
            return;
        };
        let rreq = body.rreq_id;
        if body.traversed.contains(&n) {
            return self.discard_rreq(n, &pkt, rreq, "loop");
        }
        if let Some(rep) = &body.repair {
            if rep.exclude.contains(&n) {
                return self.discard_rreq(n, &pkt, rreq, "excluded");
            }
        }
        if n == body.target {
            if body.repair.is_some() {
                self.repair_reply(n, pkt);
            } else {
                self.collect_candidate(n, pkt);
            }
            return;
        }
        if body.acc_hops() >= body.qos.max_hops as usize {
            return self.discard_rreq(n, &pkt, rreq, "max_hops");
        }
        if body.acc_delay > body.qos.max_delay {
            return self.discard_rreq(n, &pkt, rreq, "max_delay");
        }
        if body.bottleneck_bw < body.qos.min_bw {
            return self.discard_rreq(n, &pkt, rreq, "min_bw");
        }
        if pkt.ttl <= 1 {
            return self.discard_rreq(n, &pkt, rreq, "ttl");
        }
        let first_hop = body.traversed.get(1).copied().unwrap_or(n);
        let max_copies = self.cfg.routing.max_copies_per_rreq;
        let seen = self.nodes[n.0].seen_rreq.entry(rreq).or_default();
        if seen.forwarded >= max_copies {
            return self.discard_rreq(n, &pkt, rreq, "copy_limit");
        }
        if !seen.first_hops.insert(first_hop) {
            return self.discard_rreq(n, &pkt, rreq, "same_first_hop");
        }
        seen.forwarded += 1;
        let hop = self.local_hop_delay(n, body.packet_size);
        let residual = self.nodes[n.0].ledger.residual();
        let Body::Rreq(body) = &mut pkt.body else {
            unreachable!()
        };
        body.traversed.push(n);
        body.arrival_delays.push(body.acc_delay);
        body.acc_delay += hop;
        body.bottleneck_bw = body.bottleneck_bw.min(residual);
        pkt.ttl -= 1;
        pkt.id = self.fresh_packet_id();
        self.enqueue_control(n, pkt, LinkDst::Broadcast);
    }

    fn collect_candidate(&mut self, n: NodeId, pkt: Packet) {
        let Body::Rreq(body) = &pkt.body else {
            return;
        };
        let rreq = body.rreq_id;
        let mut nodes = body.traversed.clone();
        nodes.push(n);
        let hops = body.traversed.len();
        if !body.qos.admits(body.acc_delay, hops, body.bottleneck_bw) {
            return self.discard_rreq(n, &pkt, rreq, "qos");
        }
        if !self.nodes[n.0].collections.contains_key(&rreq) {
            let window = self.cfg.reply_window();
            self.sched.schedule_in(window, Event::ReplyWindow { node: n, rreq });
            self.nodes[n.0].collections.insert(
                rreq,
                Collection {
                    flow: body.flow,
                    closed: false,
                    candidates: Vec::new(),
                    template: body.clone(),
                },
            );
        }
        let coll = self.nodes[n.0].collections.get_mut(&rreq).expect("just inserted");
        if coll.closed {
            return self.discard_rreq(n, &pkt, rreq, "window_closed");
        }
        if coll.candidates.iter().any(|(c, _)| c.nodes == nodes) {
            return self.discard_rreq(n, &pkt, rreq, "duplicate");
        }
        let mut delays = body.arrival_delays.clone();
        delays.push(body.acc_delay);
        coll.candidates
            .push((PathRecord::new(nodes, body.acc_delay, body.bottleneck_bw), delays));
    }

    pub(super) fn on_reply_window(&mut self, n: NodeId, rreq: RreqId) {
        if !self.nodes[n.0].alive {
            return;
        }
        let Some(coll) = self.nodes[n.0].collections.get_mut(&rreq) else {
            return;
        };
        coll.closed = true;
        let flow = coll.flow;
        let template = coll.template.clone();
        let records: Vec<PathRecord> = coll.candidates.iter().map(|(p, _)| p.clone()).collect();
        let delays: Vec<Vec<f64>> = coll.candidates.iter().map(|(_, d)| d.clone()).collect();
        let mut selected = select_disjoint(&records, self.cfg.routing.max_paths);
        let now = self.now();
        for p in &mut selected {
            let ctr = self.nodes[n.0].path_ids.entry(flow).or_insert(0);
            *ctr += 1;
            p.path_id = *ctr;
            p.established_at = now;
        }
        self.trace(
            Some(n),
            None,
            Some(flow),
            TraceEvent::PathsSelected {
                rreq: rreq.to_string(),
                paths: selected.iter().map(|p| p.nodes.clone()).collect(),
            },
        );
        self.discoveries.push(DiscoveryRecord {
            time: now,
            rreq,
            flow,
            destination: n,
            candidates: records.clone(),
            selected: selected.clone(),
        });
        for p in selected {
            let idx = records.iter().position(|r| r.nodes == p.nodes).expect("selected from candidates");
            let arrival_delays = delays[idx].clone();
            let last = p.nodes.len() - 1;
            let prev = p.nodes[last - 1];
            self.nodes[n.0].fwd.insert(ForwardingEntry {
                flow,
                flow_dst: n,
                path_id: p.path_id,
                previous_hop: Some(prev),
                interface_id: 0,
                next_hop: None,
                path: p.nodes.clone(),
                index: last,
                arrival_delays: arrival_delays.clone(),
                qos: template.qos,
                rate: template.rate,
                packet_size: template.packet_size,
                flow_stop: template.flow_stop,
                stale: false,
            });
            let rrep = Packet {
                id: self.fresh_packet_id(),
                src: n,
                dst: Some(rreq.source),
                ttl: p.nodes.len() as u32,
                body: Body::Rrep(RrepBody {
                    rreq_id: rreq,
                    flow,
                    path_id: p.path_id,
                    path: p.nodes,
                    arrival_delays,
                    bottleneck_bw: p.bottleneck_bw,
                    qos: template.qos,
                    rate: template.rate,
                    packet_size: template.packet_size,
                    flow_stop: template.flow_stop,
                    repair: false,
                }),
            };
            self.enqueue_control(n, rrep, LinkDst::Unicast(prev));
        }
    }

    // ----- route replies ----------------------------------------------

    pub(super) fn on_rrep(&mut self, n: NodeId, _from: NodeId, pkt: Packet) {
        let Body::Rrep(body) = &pkt.body else {
            return;
        };
        let Some(idx) = body.path.iter().position(|x| *x == n) else {
            return;
        };
        let key = (body.flow, body.path_id);
        let prev = (idx > 0).then(|| body.path[idx - 1]);
        let next = body.path.get(idx + 1).copied();
        let now = self.now();
        if let Some(entry) = self.nodes[n.0].fwd.get_mut(key) {
            entry.path = body.path.clone();
            entry.index = idx;
            entry.arrival_delays = body.arrival_delays.clone();
            entry.previous_hop = prev;
            entry.next_hop = next;
            entry.stale = false;
        } else {
            if self.nodes[n.0].ledger.mode() == crate::qos::ReservationMode::Apriori
                && !self.reserve(n, body.flow, body.rate, body.flow_stop)
            {
                self.trace(
                    Some(n),
                    Some(pkt.id),
                    Some(body.flow),
                    TraceEvent::ControlDrop { kind: PacketKind::Rrep, reason: "admission" },
                );
                return;
            }
            let flow_dst = *body.path.last().expect("non-empty path");
            self.nodes[n.0].fwd.insert(ForwardingEntry {
                flow: body.flow,
                flow_dst,
                path_id: body.path_id,
                previous_hop: prev,
                interface_id: 0,
                next_hop: next,
                path: body.path.clone(),
                index: idx,
                arrival_delays: body.arrival_delays.clone(),
                qos: body.qos,
                rate: body.rate,
                packet_size: body.packet_size,
                flow_stop: body.flow_stop,
                stale: false,
            });
        }
        if let Some(rep) = self.nodes[n.0].repairs.remove(&key) {
            self.sched.cancel(rep.timer);
            self.trace(
                Some(n),
                Some(pkt.id),
                Some(body.flow),
                TraceEvent::RepairOk { path_id: body.path_id, path: body.path.clone() },
            );
            for p in rep.buffer {
                self.route_data(n, p);
            }
        }
        match prev {
            Some(p) => self.enqueue_control(n, pkt, LinkDst::Unicast(p)),
            None => {
                let Body::Rrep(body) = pkt.body else {
                    unreachable!()
                };
                let est = body.est_delay();
                let mut rec = PathRecord::new(body.path, est, body.bottleneck_bw);
                rec.path_id = body.path_id;
                rec.established_at = now;
                self.source_route_ready(n, body.flow, rec);
            }
        }
    }

    fn source_route_ready(&mut self, n: NodeId, flow: FlowId, rec: PathRecord) {
        let st = self.nodes[n.0].sources.entry(flow).or_default();
        let ev = TraceEvent::RouteInstalled {
            path_id: rec.path_id,
            path: rec.nodes.clone(),
            est_delay: rec.est_delay,
        };
        match st.paths.iter_mut().find(|p| p.path_id == rec.path_id) {
            Some(p) => *p = rec,
            None => st.paths.push(rec),
        }
        let disc = st.discovery.take();
        let pending: Vec<Packet> = st.pending.drain(..).collect();
        if let Some(d) = disc {
            self.sched.cancel(d.timer);
        }
        self.trace(Some(n), None, Some(flow), ev);
        for p in pending {
            self.source_send(n, p);
        }
    }

    // ----- errors and repair ------------------------------------------

    fn start_repair(&mut self, n: NodeId, key: RouteKey, lost: NodeId) {
        if self.nodes[n.0].repairs.contains_key(&key) {
            return;
        }
        let Some(entry) = self.nodes[n.0].fwd.get_mut(key) else {
            return;
        };
        entry.stale = true;
        let entry = entry.clone();
        let idx = entry.index;
        let last = entry.path.len() - 1;
        let target = if idx + 2 <= last { entry.path[idx + 2] } else { entry.path[last] };
        let exclude: Vec<NodeId> = entry.path[idx + 1..].iter().copied().filter(|x| *x != target).collect();
        let node = &mut self.nodes[n.0];
        let seq = node.rreq_seq;
        node.rreq_seq += 1;
        let rreq_id = RreqId { source: n, seq };
        node.seen_rreq.insert(rreq_id, SeenRreq::default());
        let body = RreqBody {
            rreq_id,
            flow: entry.flow,
            target,
            qos: entry.qos,
            rate: entry.rate,
            packet_size: entry.packet_size,
            flow_stop: entry.flow_stop,
            traversed: entry.path[..=idx].to_vec(),
            arrival_delays: entry.arrival_delays[..=idx].to_vec(),
            acc_delay: entry.delay_from_src() + self.local_hop_delay(n, entry.packet_size),
            bottleneck_bw: self.nodes[n.0].ledger.residual() + self.own_share(n, entry.flow),
            repair: Some(RepairContext { path_id: key.1, exclude }),
        };
        let pkt = Packet {
            id: self.fresh_packet_id(),
            src: n,
            dst: None,
            ttl: self.cfg.routing.repair_ttl,
            body: Body::Rreq(body),
        };
        let timer = self
            .sched
            .schedule_in(self.cfg.routing.repair_timeout, Event::RepairTimeout { node: n, key, seq });
        self.nodes[n.0].repairs.insert(key, Repair { seq, timer, buffer: Vec::new() });
        self.trace(
            Some(n),
            Some(pkt.id),
            Some(key.0),
            TraceEvent::RepairStart { path_id: key.1, lost, target },
        );
        self.enqueue_control(n, pkt, LinkDst::Broadcast);
    }

    /// Bandwidth this node already holds for `flow`, which a repair of the
    /// same flow may reuse.
    fn own_share(&self, n: NodeId, flow: FlowId) -> f64 {
        if self.nodes[n.0].ledger.holds(flow) {
            self.flows.get(&flow).map_or(0.0, |f| f.rate)
        } else {
            0.0
        }
    }

    /// The splice point answers a repair request if the spliced path still
    /// meets the flow's requirement end to end.
    fn repair_reply(&mut self, n: NodeId, pkt: Packet) {
        let Body::Rreq(body) = &pkt.body else {
            return;
        };
        let rreq = body.rreq_id;
        let rep = body.repair.as_ref().expect("repair request");
        let key = (body.flow, rep.path_id);
        let Some(entry) = self.nodes[n.0].fwd.get(key).cloned() else {
            return self.discard_rreq(n, &pkt, rreq, "no_entry");
        };
        if self.nodes[n.0].seen_rreq.get(&rreq).is_some_and(|s| s.replied) {
            return self.discard_rreq(n, &pkt, rreq, "already_replied");
        }
        let mut path = body.traversed.clone();
        path.push(n);
        path.extend_from_slice(entry.downstream_remainder());
        let mut delays = body.arrival_delays.clone();
        delays.push(body.acc_delay);
        let base = entry.delay_from_src();
        for j in entry.index + 1..entry.path.len() {
            delays.push(body.acc_delay + (entry.arrival_delays[j] - base));
        }
        let total = *delays.last().expect("non-empty");
        let hops = path.len() - 1;
        let unique: BTreeSet<_> = path.iter().collect();
        if unique.len() != path.len() || !body.qos.admits(total, hops, body.bottleneck_bw) {
            return self.discard_rreq(n, &pkt, rreq, "repair_qos");
        }
        self.nodes[n.0].seen_rreq.entry(rreq).or_default().replied = true;
        let prev = *body.traversed.last().expect("non-empty prefix");
        let new_index = body.traversed.len();
        if let Some(e) = self.nodes[n.0].fwd.get_mut(key) {
            e.path = path.clone();
            e.index = new_index;
            e.arrival_delays = delays.clone();
            e.previous_hop = Some(prev);
        }
        let rrep = Packet {
            id: self.fresh_packet_id(),
            src: n,
            dst: Some(path[0]),
            ttl: path.len() as u32,
            body: Body::Rrep(RrepBody {
                rreq_id: rreq,
                flow: body.flow,
                path_id: rep.path_id,
                path,
                arrival_delays: delays,
                bottleneck_bw: body.bottleneck_bw,
                qos: body.qos,
                rate: body.rate,
                packet_size: body.packet_size,
                flow_stop: body.flow_stop,
                repair: true,
            }),
        };
        self.enqueue_control(n, rrep, LinkDst::Unicast(prev));
    }

    pub(super) fn on_repair_timeout(&mut self, n: NodeId, key: RouteKey, seq: u32) {
        if !self.nodes[n.0].alive {
            return;
        }
        match self.nodes[n.0].repairs.get(&key) {
            Some(r) if r.seq == seq => {}
            _ => return,
        }
        let rep = self.nodes[n.0].repairs.remove(&key).expect("checked");
        self.trace(Some(n), None, Some(key.0), TraceEvent::RepairFail { path_id: key.1 });
        for p in rep.buffer {
            self.data_drop(n, &p, PacketStatus::RoutingDrop, "repair_failed");
        }
        if let Some(entry) = self.nodes[n.0].fwd.remove(key) {
            self.release_if_unused(n, key.0, "path_removed");
            if let Some(prev) = entry.previous_hop {
                self.send_rerr(n, &entry, prev, n);
            }
        }
    }

    fn send_rerr(&mut self, n: NodeId, entry: &ForwardingEntry, to: NodeId, detected_by: NodeId) {
        let pkt = Packet {
            id: self.fresh_packet_id(),
            src: n,
            dst: Some(to),
            ttl: entry.path.len() as u32,
            body: Body::Rerr(RerrBody {
                flow: entry.flow,
                flow_dst: entry.flow_dst,
                path_id: entry.path_id,
                detected_by,
            }),
        };
        self.trace(
            Some(n),
            Some(pkt.id),
            Some(entry.flow),
            TraceEvent::RerrSent { path_id: entry.path_id, to },
        );
        self.enqueue_control(n, pkt, LinkDst::Unicast(to));
    }

    pub(super) fn on_rerr(&mut self, n: NodeId, from: NodeId, pkt: Packet) {
        let Body::Rerr(body) = &pkt.body else {
            return;
        };
        let key = (body.flow, body.path_id);
        let detected_by = body.detected_by;
        self.trace(
            Some(n),
            Some(pkt.id),
            Some(body.flow),
            TraceEvent::RerrRecv { path_id: body.path_id, from },
        );
        let Some(entry) = self.nodes[n.0].fwd.get(key).cloned() else {
            return;
        };
        if entry.next_hop != Some(from) {
            return;
        }
        if let Some(rep) = self.nodes[n.0].repairs.remove(&key) {
            self.sched.cancel(rep.timer);
            for p in rep.buffer {
                self.data_drop(n, &p, PacketStatus::RoutingDrop, "path_error");
            }
        }
        match entry.previous_hop {
            Some(prev) => {
                self.nodes[n.0].fwd.remove(key);
                self.release_if_unused(n, key.0, "path_removed");
                self.send_rerr(n, &entry, prev, detected_by);
            }
            None => self.source_path_failed(n, key),
        }
    }
}
