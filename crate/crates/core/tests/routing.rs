mod common;

use std::collections::BTreeMap;

use common::*;
use serde_json::json;
use urbansim_core::energy::EnergyState;
use urbansim_core::routing::PacketKind;
use urbansim_core::trace::TraceEvent;
use urbansim_core::{NodeId, PacketStatus, Simulation};

fn rows<'a>(
    r: &'a urbansim_core::network::RunResult,
    node: usize,
    pred: impl Fn(&TraceEvent) -> bool + 'a,
) -> impl Iterator<Item = &'a urbansim_core::trace::TraceRecord> + 'a {
    r.trace.iter().filter(move |x| x.node == Some(NodeId(node)) && pred(&x.event))
}

fn delivered_per_path(r: &urbansim_core::network::RunResult) -> BTreeMap<u32, usize> {
    let mut out = BTreeMap::new();
    for x in &r.trace {
        if let TraceEvent::Deliver { path_id, .. } = x.event {
            *out.entry(path_id).or_default() += 1;
        }
    }
    out
}

#[test]
fn local_repair_with_detour_hides_the_break_from_the_source() {
    let mut v = static_net(&DETOUR, 100.0, vec![flow(0, 3, 2.0, 12.0)], 14.0, 11);
    set(&mut v, "faults", json!([{"at": 6.0, "node": 2, "kind": "kill"}]));
    let r = run_traced(scenario(v));
    assert_eq!(rows(&r, 1, |e| matches!(e, TraceEvent::RepairOk { .. })).count(), 1);
    assert_eq!(rows(&r, 0, |e| matches!(e, TraceEvent::RerrRecv { .. })).count(), 0);
    assert_eq!(r.summary.discoveries_initiated, 1);
    let after: Vec<u64> = r
        .trace
        .iter()
        .filter(|x| x.time > 6.5 && matches!(x.event, TraceEvent::Generate { .. }))
        .map(|x| x.packet.unwrap().0)
        .collect();
    let term = terminal_rows(&r.trace);
    assert!(!after.is_empty());
    assert!(after.iter().all(|p| term[p] == vec![PacketStatus::Delivered]));
    let repaired = rows(&r, 0, |e| matches!(e, TraceEvent::RouteInstalled { .. })).last().unwrap();
    match &repaired.event {
        TraceEvent::RouteInstalled { path, .. } => assert_eq!(ids(path), vec![0, 1, 4, 3]),
        _ => unreachable!(),
    }
}

#[test]
fn detour_violating_qos_is_rejected_and_error_sent_upstream() {
    let pts = [(0.0, 100.0), (90.0, 100.0), (180.0, 100.0), (270.0, 100.0), (150.0, 170.0), (240.0, 170.0)];
    let mut f = flow(0, 3, 2.0, 12.0);
    f["qos"]["max_hops"] = json!(3);
    let mut v = static_net(&pts, 100.0, vec![f], 14.0, 5);
    set(&mut v, "routing.repair_ttl", json!(3));
    set(&mut v, "faults", json!([{"at": 6.0, "node": 2, "kind": "kill"}]));
    let r = run_traced(scenario(v));
    assert_eq!(rows(&r, 1, |e| matches!(e, TraceEvent::RepairStart { .. })).count(), 1);
    assert_eq!(rows(&r, 1, |e| matches!(e, TraceEvent::RepairFail { .. })).count(), 1);
    assert_eq!(rows(&r, 1, |e| matches!(e, TraceEvent::RerrSent { .. })).count(), 1);
    assert_eq!(rows(&r, 0, |e| matches!(e, TraceEvent::RerrRecv { .. })).count(), 1);
    assert!(r.trace.iter().any(|x| matches!(x.event, TraceEvent::RreqDiscard { reason: "max_hops", .. })));
}

#[test]
fn intermediate_relays_route_error_once() {
    let mut v = static_net(&LINE5, 100.0, vec![flow(0, 4, 2.0, 10.0)], 12.0, 8);
    set(&mut v, "faults", json!([{"at": 5.0, "node": 3, "kind": "kill"}]));
    let r = run_traced(scenario(v));
    assert_eq!(rows(&r, 2, |e| matches!(e, TraceEvent::RepairFail { .. })).count(), 1);
    assert_eq!(rows(&r, 1, |e| matches!(e, TraceEvent::RerrRecv { .. })).count(), 1);
    assert_eq!(rows(&r, 1, |e| matches!(e, TraceEvent::RerrSent { .. })).count(), 1);
    assert_eq!(rows(&r, 0, |e| matches!(e, TraceEvent::RerrRecv { .. })).count(), 1);
    // The source had a single path and data pending, so it rediscovers.
    let t_err = first_time(&r.trace, |x| x.node == Some(NodeId(0)) && matches!(x.event, TraceEvent::RerrRecv { .. }))
        .unwrap();
    assert!(count_tx(&r.trace, 0, PacketKind::Rreq, t_err) >= 1);
}

#[test]
fn round_robin_alternates_between_disjoint_paths() {
    let f = flow(0, 3, 2.0, 4.5);
    let r = run_traced(scenario(static_net(&DIAMOND, 100.0, vec![f], 6.0, 3)));
    assert_eq!(r.summary.generated, 10);
    let per = delivered_per_path(&r);
    assert_eq!(per.values().copied().collect::<Vec<_>>(), vec![5, 5]);
}

#[test]
fn primary_backup_keeps_traffic_on_one_path() {
    let mut v = static_net(&DIAMOND, 100.0, vec![flow(0, 3, 2.0, 6.0)], 8.0, 3);
    set(&mut v, "routing.multipath_policy", json!("primary_backup"));
    let r = run_traced(scenario(v));
    assert_eq!(r.discoveries[0].selected.len(), 2);
    let per = delivered_per_path(&r);
    assert_eq!(per.len(), 1);
    assert_eq!(per.values().sum::<usize>() as u64, r.summary.generated);
}

#[test]
fn partitioned_network_marks_flow_unroutable() {
    let pts = [(0.0, 0.0), (300.0, 300.0)];
    let r = run_traced(scenario(static_net(&pts, 100.0, vec![flow(0, 1, 1.0, 9.0)], 10.0, 1)));
    let s = &r.summary;
    assert_eq!(s.discoveries_initiated, 1);
    assert_eq!(s.counters.rreq_retries, 2);
    assert_eq!(s.count(PacketStatus::Unroutable), s.generated);
    assert_eq!(s.delivery_ratio, Some(0.0));
    assert!(r.trace.iter().any(|x| matches!(x.event, TraceEvent::DiscoveryFailed { attempts: 3 })));
}

#[test]
fn cached_paths_suppress_new_discoveries() {
    let r = run_traced(scenario(static_net(&DIAMOND, 100.0, vec![flow(0, 3, 1.0, 30.0)], 32.0, 2)));
    assert_eq!(r.summary.discoveries_initiated, 1);
    assert_eq!(count_tx(&r.trace, 0, PacketKind::Rreq, 2.0), 0);
}

#[test]
fn hellos_are_periodic_and_never_relayed() {
    let r = run_traced(scenario(static_net(&LINE5, 100.0, vec![], 10.0, 6)));
    let mut origin = BTreeMap::new();
    for x in &r.trace {
        if let TraceEvent::Tx { kind: PacketKind::Hello, .. } = x.event {
            assert!(origin.insert(x.packet.unwrap(), x.node.unwrap()).is_none(), "hello sent twice");
        }
    }
    for n in 0..5 {
        let count = origin.values().filter(|o| o.0 == n).count();
        assert!((9..=11).contains(&count), "node {n} sent {count} hellos");
    }
    for x in &r.trace {
        if let TraceEvent::Rx { kind: PacketKind::Hello, from } = x.event {
            assert_eq!(origin[&x.packet.unwrap()], from);
        }
    }
}

#[test]
fn dead_node_stops_hello_and_is_purged() {
    let mut v = static_net(&LINE5, 100.0, vec![], 12.0, 6);
    set(&mut v, "faults", json!([{"at": 3.0, "node": 2, "kind": "kill"}]));
    let cfg = scenario(v);
    let mut sim = Simulation::new(cfg).unwrap();
    sim.keep_trace();
    sim.run_until(3.0 + 3.0 + 1.0);
    assert!(!sim.neighbor_table(NodeId(1)).contains(&NodeId(2)));
    assert!(!sim.neighbor_table(NodeId(3)).contains(&NodeId(2)));
    assert_eq!(count_tx(sim.trace_records(), 2, PacketKind::Hello, 3.0), 0);
}

#[test]
fn ondemand_admission_rejects_excess_flow() {
    let (_, cfg) = fixture_suite().into_iter().find(|(n, _)| *n == "ondemand_contention").unwrap();
    let limit = cfg.qos.eta * cfg.radio.bitrate;
    let mut sim = Simulation::new(cfg).unwrap();
    sim.keep_trace();
    for step in 1..=16 {
        sim.run_until(step as f64 * 0.5);
        for n in 0..sim.node_count() {
            assert!(sim.reserved_bandwidth(NodeId(n)) <= limit);
        }
    }
    let r = sim.finish().unwrap();
    assert!(r.summary.count(PacketStatus::AdmissionReject) > 0);
    assert!(r.summary.counters.rejections > 0);
    assert!(r.summary.count(PacketStatus::Delivered) > 0);
}

#[test]
fn apriori_admission_blocks_route_install() {
    let pts = [(0.0, 100.0), (90.0, 100.0), (180.0, 100.0)];
    let mk = |src, dst, start| {
        json!({"src": src, "dst": dst, "rate": 30000, "packet_size": 3000, "start": start, "stop": 6,
               "qos": {"max_delay": 1.0, "max_hops": 8, "min_bw": 1000}})
    };
    let mut v = static_net(&pts, 100.0, vec![mk(0, 2, 1.0), mk(2, 0, 2.0)], 8.0, 4);
    set(&mut v, "radio.bitrate", json!(100000));
    set(&mut v, "qos.eta", json!(0.5));
    let r = run_traced(scenario(v));
    let blocked = r
        .trace
        .iter()
        .filter(|x| matches!(x.event, TraceEvent::ControlDrop { kind: PacketKind::Rrep, reason: "admission" }))
        .count();
    assert!(blocked > 0);
    assert!(r.summary.count(PacketStatus::Unroutable) > 0);
}

#[test]
fn stationary_idle_nodes_fall_asleep() {
    let r = run_traced(scenario(static_net(&LINE5, 100.0, vec![], 5.0, 6)));
    let sleeps = r
        .trace
        .iter()
        .filter(|x| matches!(x.event, TraceEvent::Energy { to: EnergyState::Sleep, .. }))
        .count();
    assert!(sleeps >= 5);
    for n in &r.summary.nodes {
        assert!(n.occupancy_s["Sleep"] > 0.0);
        let total: f64 = n.occupancy_s.values().sum();
        assert!((total - 5.0).abs() < 1e-9);
    }
}

#[test]
fn range_adjustment_lowers_transmit_energy() {
    let run = |adjust: bool| {
        let mut v = static_net(&LINE5, 100.0, vec![flow(0, 4, 1.0, 8.0)], 10.0, 2);
        set(&mut v, "energy.range_adjust", json!(adjust));
        set(&mut v, "energy.range", json!({"p_elec": 0.5, "k": 1e-5, "alpha": 2.0}));
        let cfg = scenario(v);
        run_traced(cfg).summary
    };
    let (plain, adjusted) = (run(false), run(true));
    let tx = |s: &urbansim_core::MetricsSummary| s.nodes.iter().map(|n| n.consumed_by_state_j["Transmit"]).sum::<f64>();
    assert!(tx(&adjusted) < tx(&plain));
    for n in &adjusted.nodes {
        let sum: f64 = n.consumed_by_state_j.values().sum();
        assert!((sum - n.consumed_j).abs() <= 1e-9 * n.initial_j);
        assert!((n.initial_j - n.battery_j - n.consumed_j).abs() <= 1e-9 * n.initial_j);
    }
}

#[test]
fn depleted_node_reports_death_time_and_empty_battery() {
    let (_, cfg) = fixture_suite().into_iter().find(|(n, _)| *n == "depletion").unwrap();
    let r = run_traced(cfg);
    let dead: Vec<_> = r.summary.nodes.iter().filter(|n| n.death_time.is_some()).collect();
    assert!(!dead.is_empty());
    for n in dead {
        assert_eq!(n.battery_j, 0.0);
        let row = r
            .trace
            .iter()
            .find(|x| x.node == Some(NodeId(n.node)) && matches!(x.event, TraceEvent::Death { .. }))
            .unwrap();
        assert!((row.time - n.death_time.unwrap()).abs() < 1e-9);
    }
}

#[test]
fn forwarding_entries_point_at_known_neighbors() {
    for (name, cfg) in fixture_suite() {
        if name == "mobile" {
            continue;
        }
        let end = cfg.duration_s;
        let mut sim = Simulation::new(cfg).unwrap();
        let mut t = 2.0;
        while t <= end {
            sim.run_until(t);
            for n in 0..sim.node_count() {
                let node = NodeId(n);
                if !sim.is_alive(node) {
                    continue;
                }
                let table = sim.neighbor_table(node);
                for e in sim.forwarding_entries(node) {
                    if let Some(h) = e.next_hop {
                        assert!(e.stale || table.contains(&h), "{name} t={t}: node {n} -> {h} not a neighbor");
                    }
                }
            }
            t += 0.25;
        }
    }
}
