//! Longitudinal car model driven by pedal angles.
//!
//! `v' = a_max * dead(pedal(t - delay)) - drag(v) - b_max * dead(brake)`, where
//! `drag` is measured relative to the creep speed so that with both pedals
//! released the car settles at `creep_kmh`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::CarParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarState {
    /// Velocity [km/h], never negative.
    pub v_car: f64,
    /// Accelerator pedal angle, i.e. the ankle pitch angle [rad].
    pub pedal_angle: f64,
    /// Steering wheel angle [deg].
    pub wheel_angle: f64,
    pub t: f64,
    /// `(time, pedal)` samples still inside the transport delay window.
    history: VecDeque<(f64, f64)>,
    /// Pedal value currently acting on the drive train.
    applied_pedal: f64,
}

impl CarState {
    pub fn at_rest(v_car: f64) -> Self {
        Self {
            v_car: v_car.max(0.0),
            pedal_angle: 0.0,
            wheel_angle: 0.0,
            t: 0.0,
            history: VecDeque::new(),
            applied_pedal: 0.0,
        }
    }

    /// Pedal angle that is currently producing drive force.
    pub fn applied_pedal(&self) -> f64 {
        self.applied_pedal
    }
}

pub fn dead(x: f64, zone: f64) -> f64 {
    (x - zone).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarModel {
    pub params: CarParams,
    /// Extra acceleration from road grade [km/h/s]; positive means downhill.
    pub grade_accel: f64,
}

impl CarModel {
    pub fn new(params: CarParams) -> Self {
        Self {
            params,
            grade_accel: 0.0,
        }
    }

    /// Resistance relative to creep: zero at `creep_kmh`, increasing in `v`.
    pub fn drag(&self, v: f64) -> f64 {
        let d = v - self.params.creep_kmh;
        self.params.drag_coeff * d + self.params.drag_quad * d * d.abs()
    }

    pub fn acceleration(&self, v: f64, pedal: f64, brake: f64) -> f64 {
        let p = &self.params;
        p.a_max * dead(pedal, p.dead_zone) - self.drag(v) - p.b_max * dead(brake, p.brake_dead_zone)
            + self.grade_accel
    }

    /// Speed at which drive force balances drag for a steady pedal angle.
    pub fn steady_speed(&self, pedal: f64) -> f64 {
        let drive = self.params.a_max * dead(pedal, self.params.dead_zone) + self.grade_accel;
        let (c1, c2) = (self.params.drag_coeff, self.params.drag_quad);
        // drag(v*) = drive, solved for d = v* - creep
        let d = if c2 == 0.0 {
            drive / c1
        } else {
            drive.signum() * (-c1 + (c1 * c1 + 4.0 * c2 * drive.abs()).sqrt()) / (2.0 * c2)
        };
        (self.params.creep_kmh + d).max(0.0)
    }

    pub fn car_step(
        &self,
        car: &CarState,
        pedal: f64,
        brake: f64,
        steer_joint: f64,
        dt: f64,
    ) -> CarState {
        let mut next = car.clone();
        next.t = car.t + dt;
        next.pedal_angle = pedal;
        next.history.push_back((car.t, pedal));
        let release = next.t - self.params.delay_s;
        while let Some(&(t, p)) = next.history.front() {
            if t <= release + 1e-12 {
                next.applied_pedal = p;
                next.history.pop_front();
            } else {
                break;
            }
        }
        let a = self.acceleration(car.v_car, next.applied_pedal, brake);
        next.v_car = (car.v_car + dt * a).max(0.0);
        next.wheel_angle = self.params.steer_ratio * steer_joint.to_degrees();
        next
    }
}
