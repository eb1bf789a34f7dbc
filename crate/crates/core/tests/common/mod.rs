#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde_json::{json, Value};
use urbansim_core::energy::{EnergyState, PowerProfile};
use urbansim_core::network::RunResult;
use urbansim_core::routing::PacketKind;
use urbansim_core::trace::{TraceEvent, TraceRecord};
use urbansim_core::{parse_scenario_str, NodeId, PacketStatus, ScenarioConfig, Simulation};

// ----- scenario builders ----------------------------------------------------

pub fn scenario(v: Value) -> ScenarioConfig {
    parse_scenario_str(&v.to_string()).expect("fixture scenario is valid")
}

pub fn explicit(points: &[(f64, f64)]) -> Value {
    json!({ "explicit": points.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>() })
}

pub fn flow(src: usize, dst: usize, start: f64, stop: f64) -> Value {
    json!({
        "src": src, "dst": dst, "rate": 16384, "packet_size": 4096,
        "start": start, "stop": stop,
        "qos": {"max_delay": 0.5, "max_hops": 8, "min_bw": 10000}
    })
}

pub fn static_net(points: &[(f64, f64)], range: f64, flows: Vec<Value>, duration: f64, seed: u64) -> Value {
    json!({
        "area": {"width_m": 400, "height_m": 400},
        "nodes": {"count": points.len(), "placement": explicit(points)},
        "radio": {"tx_range": range},
        "traffic": flows,
        "duration_s": duration,
        "seed": seed
    })
}

pub const DIAMOND: [(f64, f64); 6] = [(0.0, 100.0), (70.0, 170.0), (160.0, 170.0), (230.0, 100.0), (70.0, 30.0), (160.0, 30.0)];
pub const LINE5: [(f64, f64); 5] = [(0.0, 50.0), (90.0, 50.0), (180.0, 50.0), (270.0, 50.0), (360.0, 50.0)];
pub const TWO_BRIDGE: [(f64, f64); 6] = [(0.0, 100.0), (80.0, 160.0), (160.0, 160.0), (240.0, 100.0), (80.0, 40.0), (160.0, 40.0)];
pub const SMALL_DIAMOND: [(f64, f64); 4] = [(0.0, 100.0), (70.0, 170.0), (140.0, 100.0), (70.0, 30.0)];
/// s-a-b-d line with a one-hop detour around b through node 4.
pub const DETOUR: [(f64, f64); 5] = [(0.0, 100.0), (90.0, 100.0), (180.0, 100.0), (270.0, 100.0), (180.0, 140.0)];

pub fn set(v: &mut Value, path: &str, x: Value) {
    let mut cur = v;
    let parts: Vec<&str> = path.split('.').collect();
    for p in &parts[..parts.len() - 1] {
        if cur.get(*p).is_none() {
            cur[*p] = json!({});
        }
        cur = &mut cur[*p];
    }
    cur[parts[parts.len() - 1]] = x;
}

/// Named scenarios exercised by the run-wide checks.
pub fn fixture_suite() -> Vec<(&'static str, ScenarioConfig)> {
    let mut out = Vec::new();
    out.push(("line5", scenario(static_net(&LINE5, 100.0, vec![flow(0, 4, 2.0, 12.0)], 15.0, 7))));
    out.push(("diamond", scenario(static_net(&DIAMOND, 100.0, vec![flow(0, 3, 2.0, 18.0)], 20.0, 3))));
    let mut v = static_net(&DIAMOND, 100.0, vec![flow(0, 3, 2.0, 18.0)], 20.0, 3);
    set(&mut v, "faults", json!([{"at": 8.0, "node": 2, "kind": "kill"}]));
    out.push(("diamond_kill", scenario(v)));
    out.push(("two_bridge", scenario(static_net(&TWO_BRIDGE, 100.0, vec![flow(0, 3, 1.0, 8.0)], 10.0, 5))));
    let mut v = static_net(&DETOUR, 100.0, vec![flow(0, 3, 2.0, 12.0)], 14.0, 11);
    set(&mut v, "faults", json!([{"at": 6.0, "node": 2, "kind": "kill"}]));
    out.push(("detour_repair", scenario(v)));
    let mut v = static_net(&LINE5, 100.0, vec![flow(0, 4, 0.5, 9.0), flow(4, 0, 1.0, 9.0)], 10.0, 2);
    set(&mut v, "nodes.initial_battery_j", json!(4.0));
    out.push(("depletion", scenario(v)));
    let mut v = static_net(&LINE5, 100.0, vec![flow(0, 4, 1.0, 8.0)], 10.0, 2);
    set(&mut v, "radio.loss_probability", json!(0.2));
    out.push(("lossy_line", scenario(v)));
    out.push((
        "mobile",
        scenario(json!({
            "area": {"width_m": 600, "height_m": 600},
            "nodes": {"count": 20, "initial_battery_j": 60},
            "radio": {"tx_range": 200},
            "mobility": {"kind": "random_waypoint", "v_min": 2, "v_max": 10, "pause": 1},
            "traffic": [flow(0, 19, 1.0, 40.0), flow(3, 11, 2.0, 35.0), flow(7, 15, 5.0, 40.0)],
            "duration_s": 45,
            "seed": 21
        })),
    ));
    out.push((
        "ondemand_contention",
        scenario(json!({
            "area": {"width_m": 400, "height_m": 400},
            "nodes": {"count": 5, "placement": explicit(&LINE5)},
            "radio": {"tx_range": 100, "bitrate": 100000},
            "qos": {"reservation_mode": "ondemand", "eta": 0.5},
            "traffic": [
                {"src": 0, "dst": 4, "rate": 30000, "packet_size": 3000, "start": 1, "stop": 6,
                 "qos": {"max_delay": 1.0, "max_hops": 8, "min_bw": 1000}},
                {"src": 1, "dst": 3, "rate": 30000, "packet_size": 3000, "start": 1.5, "stop": 6,
                 "qos": {"max_delay": 1.0, "max_hops": 8, "min_bw": 1000}}
            ],
            "duration_s": 8,
            "seed": 4
        })),
    ));
    out
}

pub fn run_traced(cfg: ScenarioConfig) -> RunResult {
    let mut sim = Simulation::new(cfg).expect("valid scenario");
    sim.keep_trace();
    sim.finish().expect("in-memory run")
}

// ----- run-wide checks -------------------------------------------------------

/// Largest relative deviation of initial − battery from Σ power × occupancy.
pub fn energy_residual(result: &RunResult, profile: &PowerProfile<f64>) -> f64 {
    result
        .summary
        .nodes
        .iter()
        .map(|n| {
            let expected: f64 = EnergyState::ALL
                .iter()
                .map(|s| profile.power(*s) * n.occupancy_s[&s.to_string()])
                .sum();
            let spent = n.initial_j - n.battery_j;
            (spent - expected).abs() / n.initial_j.max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// Nodes that transmitted after their death row.
pub fn tx_after_death(trace: &[TraceRecord]) -> Vec<NodeId> {
    let mut dead: BTreeSet<NodeId> = BTreeSet::new();
    let mut offenders = BTreeSet::new();
    for r in trace {
        match (&r.event, r.node) {
            (TraceEvent::Death { .. } | TraceEvent::Failure, Some(n)) => {
                dead.insert(n);
            }
            (TraceEvent::Tx { .. }, Some(n)) if dead.contains(&n) => {
                offenders.insert(n);
            }
            _ => {}
        }
    }
    offenders.into_iter().collect()
}

/// Per packet id: the terminal rows seen in the trace.
pub fn terminal_rows(trace: &[TraceRecord]) -> BTreeMap<u64, Vec<PacketStatus>> {
    let mut out: BTreeMap<u64, Vec<PacketStatus>> = BTreeMap::new();
    for r in trace {
        let Some(p) = r.packet else { continue };
        match &r.event {
            TraceEvent::Generate { .. } => {
                out.entry(p.0).or_default();
            }
            TraceEvent::Deliver { .. } => out.entry(p.0).or_default().push(PacketStatus::Delivered),
            TraceEvent::DataDrop { status, .. } => out.entry(p.0).or_default().push(*status),
            _ => {}
        }
    }
    out
}

pub fn count_tx(trace: &[TraceRecord], node: usize, kind: PacketKind, after: f64) -> usize {
    trace
        .iter()
        .filter(|r| r.time > after && r.node == Some(NodeId(node)))
        .filter(|r| matches!(&r.event, TraceEvent::Tx { kind: k, .. } if *k == kind))
        .count()
}

pub fn first_time(trace: &[TraceRecord], pred: impl Fn(&TraceRecord) -> bool) -> Option<f64> {
    trace.iter().find(|r| pred(r)).map(|r| r.time)
}

// ----- graph oracles -----------------------------------------------------------

#[derive(Clone, Debug)]
pub struct Graph {
    pub n: usize,
    pub adj: Vec<Vec<bool>>,
}

impl Graph {
    pub fn unit_disk(points: &[(f64, f64)], range: f64) -> Self {
        let n = points.len();
        let mut adj = vec![vec![false; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
                    adj[i][j] = dx.hypot(dy) <= range;
                }
            }
        }
        Self { n, adj }
    }

    pub fn hops_from(&self, s: usize, removed: &BTreeSet<usize>, skip_edge: Option<(usize, usize)>) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        let mut q = VecDeque::new();
        dist[s] = Some(0);
        q.push_back(s);
        while let Some(u) = q.pop_front() {
            for v in 0..self.n {
                if !self.adj[u][v] || removed.contains(&v) || dist[v].is_some() {
                    continue;
                }
                if skip_edge.is_some_and(|(a, b)| (a, b) == (u, v) || (b, a) == (u, v)) {
                    continue;
                }
                dist[v] = Some(dist[u].unwrap() + 1);
                q.push_back(v);
            }
        }
        dist
    }

    pub fn connected(&self) -> bool {
        self.hops_from(0, &BTreeSet::new(), None).iter().all(Option::is_some)
    }

    pub fn is_path(&self, p: &[usize]) -> bool {
        p.windows(2).all(|w| self.adj[w[0]][w[1]])
    }

    /// Every simple s→d path with at most `max_hops` hops.
    pub fn simple_paths(&self, s: usize, d: usize, max_hops: usize) -> Vec<Vec<usize>> {
        fn go(g: &Graph, d: usize, max_hops: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            let u = *cur.last().unwrap();
            if u == d {
                out.push(cur.clone());
                return;
            }
            if cur.len() > max_hops {
                return;
            }
            for v in 0..g.n {
                if g.adj[u][v] && !cur.contains(&v) {
                    cur.push(v);
                    go(g, d, max_hops, cur, out);
                    cur.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(self, d, max_hops, &mut vec![s], &mut out);
        out
    }

    /// Upper bound on the number of intermediate-disjoint s→d paths: the
    /// smallest vertex cut, plus one for a direct link. Brute force over
    /// subsets of the other nodes.
    pub fn disjoint_bound(&self, s: usize, d: usize) -> usize {
        let direct = self.adj[s][d];
        let others: Vec<usize> = (0..self.n).filter(|v| *v != s && *v != d).collect();
        let mut best = others.len();
        for mask in 0u32..(1 << others.len()) {
            let size = mask.count_ones() as usize;
            if size >= best {
                continue;
            }
            let removed: BTreeSet<usize> =
                others.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, v)| *v).collect();
            if self.hops_from(s, &removed, Some((s, d)))[d].is_none() {
                best = size;
            }
        }
        best + usize::from(direct)
    }
}

pub fn intermediates(p: &[usize]) -> &[usize] {
    if p.len() <= 2 {
        &[]
    } else {
        &p[1..p.len() - 1]
    }
}

pub fn disjoint(a: &[usize], b: &[usize]) -> bool {
    let ia: BTreeSet<_> = intermediates(a).iter().collect();
    intermediates(b).iter().all(|x| !ia.contains(x))
}

/// Size of the largest pairwise intermediate-disjoint subset, capped.
pub fn max_disjoint(paths: &[Vec<usize>], cap: usize) -> usize {
    fn go(paths: &[Vec<usize>], i: usize, chosen: &mut Vec<usize>, cap: usize, best: &mut usize) {
        *best = (*best).max(chosen.len());
        if *best >= cap || i == paths.len() || chosen.len() + (paths.len() - i) <= *best {
            return;
        }
        if chosen.iter().all(|c| disjoint(&paths[*c], &paths[i])) {
            chosen.push(i);
            go(paths, i + 1, chosen, cap, best);
            chosen.pop();
        }
        go(paths, i + 1, chosen, cap, best);
    }
    let mut best = 0;
    go(paths, 0, &mut Vec::new(), cap, &mut best);
    best.min(cap)
}

pub fn ids(p: &[NodeId]) -> Vec<usize> {
    p.iter().map(|n| n.0).collect()
}
