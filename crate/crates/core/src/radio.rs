//! Ground-truth geometry and the idealized radio.
//!
//! Connectivity follows a boundary-inclusive unit disk. The MAC has no
//! contention: a frame reaches every in-range receiver after its serialization
//! time plus a bounded processing jitter, and each delivery is lost
//! independently with a fixed probability.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ids::NodeId;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point2<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Point a fraction `frac` of the way from `self` to `to`.
    pub fn lerp(&self, to: &Self, frac: T) -> Self {
        Self {
            x: self.x + (to.x - self.x) * frac,
            y: self.y + (to.y - self.y) * frac,
        }
    }

    pub fn within_area(&self, width: T, height: T) -> bool {
        self.x >= T::zero() && self.y >= T::zero() && self.x <= width && self.y <= height
    }
}

/// Unit-disk link test, inclusive at the boundary.
pub fn in_range<T: Scalar>(a: &Point2<T>, b: &Point2<T>, range: T) -> bool {
    a.distance(b) <= range
}

/// Nodes within `range` of `me` that are alive, excluding `me` itself.
pub fn geometric_neighbors<T: Scalar>(
    me: NodeId,
    positions: &[Point2<T>],
    alive: &[bool],
    range: T,
) -> Vec<NodeId> {
    if !alive.get(me.0).copied().unwrap_or(false) {
        return Vec::new();
    }
    let here = positions[me.0];
    positions
        .iter()
        .enumerate()
        .filter(|&(i, p)| i != me.0 && alive[i] && in_range(&here, p, range))
        .map(|(i, _)| NodeId(i))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub tx_range: f64,
    pub bitrate: f64,
    pub frame_overhead: u64,
    pub loss_probability: f64,
    pub proc_jitter_max: f64,
    /// Report failed unicasts to the sender immediately.
    pub mac_failure_feedback: bool,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_range: 250.0,
            bitrate: 2_000_000.0,
            frame_overhead: 400,
            loss_probability: 0.0,
            proc_jitter_max: 0.002,
            mac_failure_feedback: true,
        }
    }
}

impl RadioConfig {
    pub fn serialization_time(&self, size_bits: u64) -> f64 {
        size_bits as f64 / self.bitrate
    }

    /// Mean one-hop latency of a frame carrying `payload_bits`.
    pub fn nominal_hop_delay(&self, payload_bits: u64) -> f64 {
        self.serialization_time(payload_bits + self.frame_overhead) + self.proc_jitter_max / 2.0
    }

    pub fn draw_jitter<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.proc_jitter_max > 0.0 {
            rng.gen_range(0.0..=self.proc_jitter_max)
        } else {
            0.0
        }
    }

    pub fn draw_lost<R: Rng>(&self, rng: &mut R) -> bool {
        self.loss_probability > 0.0 && rng.gen_bool(self.loss_probability.min(1.0))
    }
}

/// Link-layer destination.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkDst {
    Broadcast,
    Unicast(NodeId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame<P> {
    pub src: NodeId,
    pub dst: LinkDst,
    pub size_bits: u64,
    pub packet: P,
}

/// One scheduled reception.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Delivery {
    pub to: NodeId,
    /// Reception starts after the processing jitter.
    pub rx_start: f64,
    /// Frame fully received: `rx_start + size/bitrate`.
    pub rx_end: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TransmitOutcome {
    /// Frame is on the air; `lost` counts receivers whose copy was dropped.
    Sent { deliveries: Vec<Delivery>, lost: Vec<NodeId> },
    /// Unicast target out of range or dead.
    MacFailure,
}

/// Resolves a transmission starting at `at` against the current geometry.
#[allow(clippy::too_many_arguments)]
pub fn transmit<R: Rng>(
    cfg: &RadioConfig,
    src: NodeId,
    dst: LinkDst,
    size_bits: u64,
    at: f64,
    positions: &[Point2<f64>],
    alive: &[bool],
    rng: &mut R,
) -> TransmitOutcome {
    let receivers: Vec<NodeId> = match dst {
        LinkDst::Broadcast => geometric_neighbors(src, positions, alive, cfg.tx_range),
        LinkDst::Unicast(to) => {
            let ok = to != src
                && alive.get(to.0).copied().unwrap_or(false)
                && in_range(&positions[src.0], &positions[to.0], cfg.tx_range);
            if !ok {
                return TransmitOutcome::MacFailure;
            }
            vec![to]
        }
    };
    let ser = cfg.serialization_time(size_bits);
    let mut deliveries = Vec::with_capacity(receivers.len());
    let mut lost = Vec::new();
    for to in receivers {
        let jitter = cfg.draw_jitter(rng);
        if cfg.draw_lost(rng) {
            lost.push(to);
            continue;
        }
        deliveries.push(Delivery {
            to,
            rx_start: at + jitter,
            rx_end: at + jitter + ser,
        });
    }
    TransmitOutcome::Sent { deliveries, lost }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    #[test]
    fn unit_disk_boundary() {
        assert!(in_range(&p(0.0, 0.0), &p(0.0, 100.0), 100.0));
        assert!(!in_range(&p(0.0, 0.0), &p(0.0, 100.001), 100.0));
        assert!(in_range(&p(3.0, 4.0), &p(3.0, 4.0), 1e-6));
    }

    #[test]
    fn unit_disk_generic_over_f32() {
        let a = Point2::<f32>::new(0.0, 0.0);
        let b = Point2::<f32>::new(60.0, 80.0);
        assert!(in_range(&a, &b, 100.0f32));
        assert!(!in_range(&a, &b, 99.9f32));
    }

    #[test]
    fn line_interior_nodes_have_two_neighbors() {
        // 90 m spacing: adjacent = 90 m, next-but-one = 180 m
        let pos: Vec<_> = (0..5).map(|i| p(90.0 * i as f64, 0.0)).collect();
        let alive = vec![true; 5];
        for i in 1..4 {
            assert_eq!(
                geometric_neighbors(NodeId(i), &pos, &alive, 100.0),
                vec![NodeId(i - 1), NodeId(i + 1)]
            );
        }
        assert_eq!(geometric_neighbors(NodeId(0), &pos, &alive, 100.0), vec![NodeId(1)]);
    }

    #[test]
    fn isolated_and_dead_nodes() {
        let pos = vec![p(0.0, 0.0), p(50.0, 0.0), p(500.0, 0.0)];
        let alive = vec![true, false, true];
        assert!(geometric_neighbors(NodeId(2), &pos, &alive, 100.0).is_empty());
        assert!(geometric_neighbors(NodeId(0), &pos, &alive, 100.0).is_empty());
        assert!(geometric_neighbors(NodeId(1), &pos, &alive, 100.0).is_empty());
    }

    #[test]
    fn broadcast_reaches_every_neighbor_without_loss() {
        let pos = vec![p(0.0, 0.0), p(50.0, 0.0), p(0.0, 50.0), p(-50.0, 0.0), p(400.0, 0.0)];
        let alive = vec![true; 5];
        let cfg = RadioConfig { tx_range: 100.0, ..RadioConfig::default() };
        let mut rng = RngStream::new(1, "radio");
        match transmit(&cfg, NodeId(0), LinkDst::Broadcast, 1000, 0.0, &pos, &alive, rng.rng()) {
            TransmitOutcome::Sent { deliveries, lost } => {
                assert_eq!(deliveries.len(), 3);
                assert!(lost.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unicast_out_of_range_fails() {
        let pos = vec![p(0.0, 0.0), p(150.0, 0.0)];
        let cfg = RadioConfig { tx_range: 100.0, ..RadioConfig::default() };
        let mut rng = RngStream::new(1, "radio");
        let out = transmit(&cfg, NodeId(0), LinkDst::Unicast(NodeId(1)), 1000, 0.0, &pos, &[true, true], rng.rng());
        assert_eq!(out, TransmitOutcome::MacFailure);
    }

    #[test]
    fn serialization_latency() {
        let cfg = RadioConfig {
            bitrate: 1_000_000.0,
            proc_jitter_max: 0.0,
            ..RadioConfig::default()
        };
        let pos = vec![p(0.0, 0.0), p(10.0, 0.0)];
        let mut rng = RngStream::new(1, "radio");
        let TransmitOutcome::Sent { deliveries, .. } =
            transmit(&cfg, NodeId(0), LinkDst::Unicast(NodeId(1)), 8000, 2.0, &pos, &[true, true], rng.rng())
        else {
            panic!("expected delivery")
        };
        assert!((deliveries[0].rx_end - 2.0 - 0.008).abs() < 1e-12);
        assert_eq!(deliveries[0].rx_start, 2.0);
    }

    #[test]
    fn full_loss_drops_everything() {
        let pos = vec![p(0.0, 0.0), p(10.0, 0.0), p(0.0, 10.0)];
        let cfg = RadioConfig { loss_probability: 1.0, ..RadioConfig::default() };
        let mut rng = RngStream::new(3, "radio");
        let TransmitOutcome::Sent { deliveries, lost } =
            transmit(&cfg, NodeId(0), LinkDst::Broadcast, 100, 0.0, &pos, &[true; 3], rng.rng())
        else {
            panic!()
        };
        assert!(deliveries.is_empty());
        assert_eq!(lost.len(), 2);
    }

    proptest::proptest! {
        #[test]
        fn in_range_is_symmetric(ax in 0.0..500.0f64, ay in 0.0..500.0f64,
                                 bx in 0.0..500.0f64, by in 0.0..500.0f64, r in 1.0..300.0f64) {
            let (a, b) = (p(ax, ay), p(bx, by));
            proptest::prop_assert_eq!(in_range(&a, &b, r), in_range(&b, &a, r));
        }
    }
}
