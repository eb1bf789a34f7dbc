//! Energy management: the four-state machine, per-state accounting, battery
//! depletion, and transmit power as a function of range.
//!
//! The machine tracks three inputs: outstanding transmissions, outstanding
//! receptions, and whether the node is moving. Transmit dominates Receive,
//! which dominates the base state. The base state is Roaming while moving;
//! a stationary node that has been active sits in Receive (idle listening)
//! until `idle_timeout` passes without activity, then drops to Sleep.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnergyState {
    Sleep,
    Transmit,
    Receive,
    Roaming,
}

impl EnergyState {
    pub const ALL: [EnergyState; 4] = [
        EnergyState::Sleep,
        EnergyState::Transmit,
        EnergyState::Receive,
        EnergyState::Roaming,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EnergyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Trigger {
    TxBegin,
    TxEnd,
    RxBegin,
    RxEnd,
    MoveStart,
    MoveStop,
    IdleTimeout,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("power values must be non-negative and finite")]
    Negative,
    #[error("power ordering violated: need p_sleep < p_receive < p_transmit and p_sleep < p_roaming")]
    Ordering,
    #[error("idle_timeout must be positive")]
    IdleTimeout,
    #[error("range model needs k > 0 and alpha >= 1")]
    Range,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PowerProfile<T> {
    pub p_sleep: T,
    pub p_receive: T,
    pub p_transmit: T,
    pub p_roaming: T,
    pub idle_timeout: T,
}

impl<T: Scalar> Default for PowerProfile<T> {
    fn default() -> Self {
        Self {
            p_sleep: T::lit(0.01),
            p_receive: T::lit(1.0),
            p_transmit: T::lit(1.4),
            p_roaming: T::lit(1.0),
            idle_timeout: T::lit(0.5),
        }
    }
}

impl<T: Scalar> PowerProfile<T> {
    pub fn validate(&self) -> Result<(), ProfileError> {
        let all = [self.p_sleep, self.p_receive, self.p_transmit, self.p_roaming];
        if all.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(ProfileError::Negative);
        }
        if !(self.p_sleep < self.p_receive
            && self.p_receive < self.p_transmit
            && self.p_sleep < self.p_roaming)
        {
            return Err(ProfileError::Ordering);
        }
        if self.idle_timeout.is_nan() || self.idle_timeout <= T::zero() {
            return Err(ProfileError::IdleTimeout);
        }
        Ok(())
    }

    pub fn power(&self, state: EnergyState) -> T {
        match state {
            EnergyState::Sleep => self.p_sleep,
            EnergyState::Transmit => self.p_transmit,
            EnergyState::Receive => self.p_receive,
            EnergyState::Roaming => self.p_roaming,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct RangeConfig<T> {
    pub p_elec: T,
    pub k: T,
    pub alpha: T,
}

impl<T: Scalar> Default for RangeConfig<T> {
    fn default() -> Self {
        Self {
            p_elec: T::lit(0.5),
            k: T::lit(1e-5),
            alpha: T::lit(2.0),
        }
    }
}

impl<T: Scalar> RangeConfig<T> {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if self.k.is_nan() || self.k <= T::zero() || self.alpha.is_nan() || self.alpha < T::one() || self.p_elec < T::zero() {
            return Err(ProfileError::Range);
        }
        Ok(())
    }
}

/// Transmit draw needed to reach distance `r`: `p_elec + k * r^alpha`.
pub fn tx_power_for_range<T: Scalar>(cfg: &RangeConfig<T>, r: T) -> T {
    cfg.p_elec + cfg.k * r.powf(cfg.alpha)
}

/// The pure state machine, without energy bookkeeping.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StateMachine {
    tx_active: u32,
    rx_active: u32,
    moving: bool,
    asleep: bool,
}

impl Default for StateMachine {
    fn default() -> Self {
        Self::new()
    }
}

impl StateMachine {
    pub fn new() -> Self {
        Self {
            tx_active: 0,
            rx_active: 0,
            moving: false,
            asleep: true,
        }
    }

    pub fn state(&self) -> EnergyState {
        if self.tx_active > 0 {
            EnergyState::Transmit
        } else if self.rx_active > 0 {
            EnergyState::Receive
        } else if self.moving {
            EnergyState::Roaming
        } else if self.asleep {
            EnergyState::Sleep
        } else {
            EnergyState::Receive
        }
    }

    pub fn is_moving(&self) -> bool {
        self.moving
    }

    /// Stationary, awake and without radio activity: the idle timer should run.
    pub fn awaiting_idle_timeout(&self) -> bool {
        self.tx_active == 0 && self.rx_active == 0 && !self.moving && !self.asleep
    }

    pub fn apply(&mut self, trigger: Trigger) -> EnergyState {
        match trigger {
            Trigger::TxBegin => {
                self.tx_active += 1;
                self.asleep = false;
            }
            Trigger::TxEnd => self.tx_active = self.tx_active.saturating_sub(1),
            Trigger::RxBegin => {
                self.rx_active += 1;
                self.asleep = false;
            }
            Trigger::RxEnd => self.rx_active = self.rx_active.saturating_sub(1),
            Trigger::MoveStart => {
                self.moving = true;
                self.asleep = false;
            }
            Trigger::MoveStop => self.moving = false,
            Trigger::IdleTimeout => {
                if self.tx_active == 0 && self.rx_active == 0 && !self.moving {
                    self.asleep = true;
                }
            }
        }
        self.state()
    }
}

/// Battery, state and per-state accounting for one node.
#[derive(Clone, Debug)]
pub struct EnergyAccount<T> {
    initial: T,
    consumed_total: T,
    machine: StateMachine,
    last_accrual: T,
    consumed: [T; 4],
    occupancy: [T; 4],
    tx_power: Option<T>,
    dead_at: Option<T>,
    frozen: bool,
    ignored_triggers: u64,
}

impl<T: Scalar> EnergyAccount<T> {
    pub fn new(initial_battery: T, start: T) -> Self {
        let dead = initial_battery <= T::zero();
        Self {
            initial: initial_battery.max(T::zero()),
            consumed_total: T::zero(),
            machine: StateMachine::new(),
            last_accrual: start,
            consumed: [T::zero(); 4],
            occupancy: [T::zero(); 4],
            tx_power: None,
            dead_at: dead.then_some(start),
            frozen: dead,
            ignored_triggers: 0,
        }
    }

    pub fn state(&self) -> EnergyState {
        self.machine.state()
    }

    pub fn machine(&self) -> &StateMachine {
        &self.machine
    }

    pub fn initial(&self) -> T {
        self.initial
    }

    pub fn battery(&self) -> T {
        (self.initial - self.consumed_total).max(T::zero())
    }

    pub fn consumed_total(&self) -> T {
        self.consumed_total
    }

    pub fn consumed(&self, state: EnergyState) -> T {
        self.consumed[state.index()]
    }

    pub fn occupancy(&self, state: EnergyState) -> T {
        self.occupancy[state.index()]
    }

    pub fn dead_at(&self) -> Option<T> {
        self.dead_at
    }

    pub fn is_dead(&self) -> bool {
        self.dead_at.is_some()
    }

    /// True once accounting has stopped, by depletion or external failure.
    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn ignored_triggers(&self) -> u64 {
        self.ignored_triggers
    }

    pub fn current_power(&self, profile: &PowerProfile<T>) -> T {
        match (self.state(), self.tx_power) {
            (EnergyState::Transmit, Some(p)) => p,
            (s, _) => profile.power(s),
        }
    }

    /// Charges the current state for the time since the last accrual.
    /// Returns the joules consumed. Reaching zero marks the node dead at
    /// the exact depletion instant.
    pub fn accrue(&mut self, now: T, profile: &PowerProfile<T>) -> T {
        if self.frozen || now <= self.last_accrual {
            return T::zero();
        }
        let idx = self.state().index();
        let power = self.current_power(profile);
        let dt = now - self.last_accrual;
        let remaining = self.battery();
        let want = power * dt;
        let (spent, occupied) = if want >= remaining && power > T::zero() {
            let t_empty = remaining / power;
            self.dead_at = Some(self.last_accrual + t_empty);
            self.frozen = true;
            (remaining, t_empty)
        } else {
            (want, dt)
        };
        self.consumed[idx] = self.consumed[idx] + spent;
        self.occupancy[idx] = self.occupancy[idx] + occupied;
        self.consumed_total = self.consumed_total + spent;
        self.last_accrual = now;
        spent
    }

    /// Accrues up to `now`, then applies `trigger`. Triggers on a node that
    /// is no longer accounting are ignored and counted.
    pub fn transition(&mut self, now: T, trigger: Trigger, profile: &PowerProfile<T>) -> EnergyState {
        self.accrue(now, profile);
        if self.frozen {
            self.ignored_triggers += 1;
            return self.state();
        }
        self.machine.apply(trigger)
    }

    /// Sets the draw used while in Transmit (`None` = profile value).
    pub fn set_tx_power(&mut self, now: T, power: Option<T>, profile: &PowerProfile<T>) {
        self.accrue(now, profile);
        self.tx_power = power;
    }

    /// Time from `now` until the battery empties at the current draw.
    pub fn time_to_depletion(&self, profile: &PowerProfile<T>) -> Option<T> {
        if self.frozen {
            return None;
        }
        let p = self.current_power(profile);
        (p > T::zero()).then(|| self.battery() / p)
    }

    /// Stops accounting (node failure not caused by the battery).
    pub fn freeze(&mut self, now: T, profile: &PowerProfile<T>) {
        self.accrue(now, profile);
        self.frozen = true;
    }

    /// Accrues to `now` and charges whatever residue is left to the current
    /// state, marking the node dead at `now`.
    pub fn deplete(&mut self, now: T, profile: &PowerProfile<T>) {
        self.accrue(now, profile);
        if self.frozen {
            return;
        }
        let idx = self.state().index();
        let rest = self.battery();
        self.consumed[idx] = self.consumed[idx] + rest;
        self.consumed_total = self.initial;
        self.dead_at = Some(now);
        self.frozen = true;
    }

    /// Σ over states of profile power × occupancy.
    pub fn profile_energy(&self, profile: &PowerProfile<T>) -> T {
        EnergyState::ALL
            .iter()
            .fold(T::zero(), |acc, s| acc + profile.power(*s) * self.occupancy(*s))
    }

    pub fn total_occupancy(&self) -> T {
        self.occupancy.iter().fold(T::zero(), |a, b| a + *b)
    }
}
