//! Mobility management: one active model per node, event-driven legs.
//!
//! Positions are interpolated on demand from the active leg, so there is no
//! tick rate. Departures and arrivals produce motion signals that the energy
//! state machine consumes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::radio::Point2;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityKind {
    Static,
    RandomWaypoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityModelConfig {
    pub kind: MobilityKind,
    pub v_min: f64,
    pub v_max: f64,
    pub pause: f64,
}

impl Default for MobilityModelConfig {
    fn default() -> Self {
        Self {
            kind: MobilityKind::Static,
            v_min: 1.0,
            v_max: 5.0,
            pause: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MovementLeg<T> {
    pub from: Point2<T>,
    pub to: Point2<T>,
    pub speed: T,
    pub depart_at: T,
}

impl<T: Scalar> MovementLeg<T> {
    pub fn duration(&self) -> T {
        self.from.distance(&self.to) / self.speed
    }

    pub fn arrive_at(&self) -> T {
        self.depart_at + self.duration()
    }

    pub fn position_at(&self, t: T) -> Point2<T> {
        let dur = self.duration();
        if dur <= T::zero() || t >= self.depart_at + dur {
            return self.to;
        }
        if t <= self.depart_at {
            return self.from;
        }
        self.from.lerp(&self.to, (t - self.depart_at) / dur)
    }
}

/// Draws a random-waypoint leg starting at `from`: destination uniform over
/// the area, speed uniform over `[v_min, v_max]`.
pub fn next_leg<T: Scalar, R: Rng>(
    cfg: &MobilityModelConfig,
    from: Point2<T>,
    now: T,
    area: (T, T),
    rng: &mut R,
) -> Option<MovementLeg<T>> {
    match cfg.kind {
        MobilityKind::Static => None,
        MobilityKind::RandomWaypoint => {
            let w = area.0.to_f64().unwrap_or(0.0);
            let h = area.1.to_f64().unwrap_or(0.0);
            let x = if w > 0.0 { rng.gen_range(0.0..=w) } else { 0.0 };
            let y = if h > 0.0 { rng.gen_range(0.0..=h) } else { 0.0 };
            let speed = if cfg.v_max > cfg.v_min {
                rng.gen_range(cfg.v_min..=cfg.v_max)
            } else {
                cfg.v_min
            };
            Some(MovementLeg {
                from,
                to: Point2::new(T::lit(x), T::lit(y)),
                speed: T::lit(speed),
                depart_at: now,
            })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionSignal {
    Start,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum MotionState<T> {
    Parked(Point2<T>),
    Moving(MovementLeg<T>),
}

/// Per-node mobility manager: owns the position and the active leg.
#[derive(Clone, Debug)]
pub struct MobilityManager<T> {
    model: MobilityModelConfig,
    state: MotionState<T>,
    legs: u64,
}

impl<T: Scalar> MobilityManager<T> {
    pub fn new(model: MobilityModelConfig, initial: Point2<T>) -> Self {
        Self {
            model,
            state: MotionState::Parked(initial),
            legs: 0,
        }
    }

    pub fn model(&self) -> &MobilityModelConfig {
        &self.model
    }

    pub fn is_moving(&self) -> bool {
        matches!(self.state, MotionState::Moving(_))
    }

    pub fn legs_started(&self) -> u64 {
        self.legs
    }

    pub fn active_leg(&self) -> Option<&MovementLeg<T>> {
        match &self.state {
            MotionState::Moving(leg) => Some(leg),
            MotionState::Parked(_) => None,
        }
    }

    pub fn position_at(&self, t: T) -> Point2<T> {
        match &self.state {
            MotionState::Parked(p) => *p,
            MotionState::Moving(leg) => leg.position_at(t),
        }
    }

    /// Starts a new leg if the model produces one. Returns the leg and the
    /// start signal.
    pub fn depart<R: Rng>(&mut self, now: T, area: (T, T), rng: &mut R) -> Option<(MovementLeg<T>, MotionSignal)> {
        if self.is_moving() {
            return None;
        }
        let here = self.position_at(now);
        let leg = next_leg(&self.model, here, now, area, rng)?;
        self.state = MotionState::Moving(leg);
        self.legs += 1;
        Some((leg, MotionSignal::Start))
    }

    /// Completes the active leg. Returns the stop signal and the time the
    /// next departure is due.
    pub fn arrive(&mut self, now: T) -> Option<(MotionSignal, T)> {
        let MotionState::Moving(leg) = self.state else {
            return None;
        };
        self.state = MotionState::Parked(leg.position_at(now));
        Some((MotionSignal::Stop, now + T::lit(self.model.pause)))
    }

    /// Teleports the node. A moving node keeps heading to the same
    /// destination from the new point; the new arrival time is returned.
    pub fn relocate(&mut self, now: T, to: Point2<T>) -> Option<T> {
        match self.state {
            MotionState::Parked(_) => {
                self.state = MotionState::Parked(to);
                None
            }
            MotionState::Moving(leg) => {
                let leg = MovementLeg {
                    from: to,
                    to: leg.to,
                    speed: leg.speed,
                    depart_at: now,
                };
                self.state = MotionState::Moving(leg);
                Some(leg.arrive_at())
            }
        }
    }

    /// Freezes the node in place (node death).
    pub fn halt(&mut self, now: T) -> Option<MotionSignal> {
        let moving = self.is_moving();
        self.state = MotionState::Parked(self.position_at(now));
        moving.then_some(MotionSignal::Stop)
    }
}
