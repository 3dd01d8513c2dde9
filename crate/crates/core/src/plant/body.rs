//! Muscle-joint dynamics: actuator servo, series elasticity, joint torques and
//! motor heating, integrated with semi-implicit Euler.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{MuscleGeometry, PlantConfig, PlantError};

/// Largest admissible plant step [s].
pub const MAX_DT: f64 = 0.02;

/// Rubber-based series elastic element.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElasticElementParams {
    /// Quadratic stiffness [N/m^2].
    pub k2: f64,
    /// Stretch below which the element carries no load [m].
    pub slack: f64,
}

impl ElasticElementParams {
    /// `k2 * max(0, stretch - slack)^2`.
    pub fn tension(&self, stretch: f64) -> f64 {
        let s = (stretch - self.slack).max(0.0);
        self.k2 * s * s
    }

    /// Stretch needed to carry `tension`; inverse of [`Self::tension`] on the loaded branch.
    pub fn elongation(&self, tension: f64) -> f64 {
        self.slack + (tension.max(0.0) / self.k2).sqrt()
    }
}

pub fn elastic_tension(params: &ElasticElementParams, stretch: f64) -> f64 {
    params.tension(stretch)
}

/// Ground-truth state of the muscle-joint chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Joint angles [rad].
    pub theta: Vec<f64>,
    /// Joint velocities [rad/s].
    pub theta_dot: Vec<f64>,
    /// Actuated (encoder) muscle lengths [m].
    pub l: Vec<f64>,
    /// Muscle tensions [N].
    pub f: Vec<f64>,
    /// Motor temperatures [deg C].
    pub c: Vec<f64>,
    /// Simulation time [s].
    pub t: f64,
}

/// Environment acting on the body, changeable between steps.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Environment {
    /// Joints held in place by the environment (e.g. hands on the wheel).
    pub constrained: Vec<bool>,
    /// Additional external joint torque [N m].
    pub external_torque: Vec<f64>,
}

/// The simulated body: geometry plus per-joint and per-muscle parameters.
#[derive(Debug, Clone)]
pub struct MusclePlant {
    config: PlantConfig,
    geometry: MuscleGeometry,
    elastic: Vec<ElasticElementParams>,
    pub env: Environment,
}

impl MusclePlant {
    pub fn new(config: PlantConfig) -> Result<Self, PlantError> {
        let geometry = MuscleGeometry::from_config(&config)?;
        let elastic = config
            .muscles
            .iter()
            .map(|m| ElasticElementParams {
                k2: m.k2,
                slack: m.slack,
            })
            .collect();
        let env = Environment {
            constrained: vec![false; config.joints.len()],
            external_torque: vec![0.0; config.joints.len()],
        };
        Ok(Self {
            config,
            geometry,
            elastic,
            env,
        })
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn geometry(&self) -> &MuscleGeometry {
        &self.geometry
    }

    pub fn elastic(&self) -> &[ElasticElementParams] {
        &self.elastic
    }

    pub fn num_joints(&self) -> usize {
        self.geometry.num_joints()
    }

    pub fn num_muscles(&self) -> usize {
        self.geometry.num_muscles()
    }

    /// True path lengths including the plant's unmodelled offsets.
    fn path_lengths(&self, theta: &[f64]) -> Vec<f64> {
        let mut l = self.geometry.lengths_unchecked(theta);
        for (l, m) in l.iter_mut().zip(&self.config.muscles) {
            *l += m.length_offset;
        }
        l
    }

    fn tensions(&self, theta: &[f64], l_act: &[f64]) -> Vec<f64> {
        self.path_lengths(theta)
            .iter()
            .zip(l_act)
            .zip(&self.elastic)
            .map(|((geo, l), e)| e.tension(geo - l))
            .collect()
    }

    /// Passive joint torques from the configured loads plus environment torques.
    pub fn load_torque(&self, theta: &[f64]) -> Vec<f64> {
        self.config
            .joints
            .iter()
            .zip(theta)
            .zip(&self.env.external_torque)
            .map(|((j, t), ext)| j.load.torque(*t) + ext)
            .collect()
    }

    /// Torque the muscles must supply to hold `theta` against the configured
    /// loads, i.e. the negated load torque (environment torques excluded).
    pub fn holding_torque(&self, theta: &[f64]) -> Vec<f64> {
        self.config
            .joints
            .iter()
            .zip(theta)
            .map(|(j, t)| -j.load.torque(*t))
            .collect()
    }

    /// State at rest at `theta`, with actuators wound so that each muscle
    /// carries `tension` (clamped at zero).
    pub fn state_at(&self, theta: &[f64], tension: &[f64]) -> Result<PlantState, PlantError> {
        self.geometry.check_pose(theta)?;
        if tension.len() != self.num_muscles() {
            return Err(PlantError::Dimension {
                what: "tensions",
                expected: self.num_muscles(),
                got: tension.len(),
            });
        }
        let geo = self.path_lengths(theta);
        let l: Vec<f64> = geo
            .iter()
            .zip(tension)
            .zip(&self.elastic)
            .map(|((g, f), e)| g - e.elongation(*f))
            .collect();
        let f = self.tensions(theta, &l);
        Ok(PlantState {
            theta: theta.to_vec(),
            theta_dot: vec![0.0; theta.len()],
            l,
            f,
            c: vec![self.config.thermal.ambient; self.num_muscles()],
            t: 0.0,
        })
    }

    /// Advances the body by `dt` toward the commanded actuator lengths `l_ref`.
    pub fn step(
        &self,
        state: &PlantState,
        l_ref: &[f64],
        dt: f64,
    ) -> Result<PlantState, PlantError> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(PlantError::InvalidStep(dt));
        }
        let (nj, nm) = (self.num_joints(), self.num_muscles());
        if l_ref.len() != nm {
            return Err(PlantError::Dimension {
                what: "muscle length command",
                expected: nm,
                got: l_ref.len(),
            });
        }
        if l_ref.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::Fault("non-finite muscle length command".into()));
        }
        if state.theta.len() != nj || state.l.len() != nm || state.f.len() != nm {
            return Err(PlantError::Fault(
                "state dimensions do not match plant".into(),
            ));
        }

        let g = self.geometry.jacobian_unchecked(&state.theta);
        let f = DMatrix::from_column_slice(nm, 1, &state.f);
        let muscle_torque = -(g.transpose() * f);
        let load = self.load_torque(&state.theta);

        let mut theta = state.theta.clone();
        let mut theta_dot = state.theta_dot.clone();
        for (j, jc) in self.config.joints.iter().enumerate() {
            if self.env.constrained.get(j).copied().unwrap_or(false) {
                theta_dot[j] = 0.0;
                continue;
            }
            let tau = muscle_torque[j] + load[j] - jc.damping * theta_dot[j];
            theta_dot[j] += dt * tau / jc.inertia;
            theta[j] += dt * theta_dot[j];
            // hard joint stops
            if theta[j] < jc.limits[0] {
                theta[j] = jc.limits[0];
                theta_dot[j] = theta_dot[j].max(0.0);
            } else if theta[j] > jc.limits[1] {
                theta[j] = jc.limits[1];
                theta_dot[j] = theta_dot[j].min(0.0);
            }
        }

        let servo = 1.0 - (-dt / self.config.actuator_tau).exp();
        let l: Vec<f64> = state
            .l
            .iter()
            .zip(l_ref)
            .map(|(l, r)| l + servo * (r - l))
            .collect();
        let f_new = self.tensions(&theta, &l);

        let th = &self.config.thermal;
        let c: Vec<f64> = state
            .c
            .iter()
            .zip(&f_new)
            .map(|(c, f)| {
                (c + dt * (th.kappa_h * f * f - th.kappa_c * (c - th.ambient))).max(th.ambient)
            })
            .collect();

        let next = PlantState {
            theta,
            theta_dot,
            l,
            f: f_new,
            c,
            t: state.t + dt,
        };
        if next
            .theta
            .iter()
            .chain(&next.theta_dot)
            .chain(&next.f)
            .chain(&next.c)
            .any(|v| !v.is_finite())
        {
            return Err(PlantError::Fault(format!(
                "state diverged at t = {}",
                next.t
            )));
        }
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_load_plant() -> MusclePlant {
        let mut cfg = PlantConfig::reference();
        for j in &mut cfg.joints {
            j.load = Default::default();
        }
        MusclePlant::new(cfg).unwrap()
    }

    #[test]
    fn elastic_law() {
        let e = ElasticElementParams {
            k2: 1e6,
            slack: 0.0,
        };
        assert_eq!(elastic_tension(&e, -0.01), 0.0);
        assert_eq!(elastic_tension(&e, 0.0), 0.0);
        assert!((elastic_tension(&e, 0.01) - 100.0).abs() < 1e-9);
        let t1 = e.tension(0.003);
        assert!((e.tension(0.006) - 4.0 * t1).abs() < 1e-9);
        assert!((e.elongation(100.0) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn geometric_commands_are_a_fixed_point() {
        let plant = no_load_plant();
        let theta = plant.config().neutral_pose();
        let s0 = plant.state_at(&theta, &[0.0; 8]).unwrap();
        let l_ref = plant.geometry().geometric_muscle_length(&theta).unwrap();
        let mut s = s0.clone();
        for _ in 0..200 {
            s = plant.step(&s, &l_ref, 0.005).unwrap();
        }
        assert_eq!(s.theta, s0.theta);
        assert!(s.f.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn shortening_an_agonist_moves_joint_along_minus_g() {
        let plant = no_load_plant();
        let theta = plant.config().neutral_pose();
        let f0 = vec![20.0; 8];
        let s0 = plant.state_at(&theta, &f0).unwrap();
        let flexor = plant.config().muscle_index("elbow_flexor").unwrap();
        let elbow = plant.config().joint_index("elbow").unwrap();
        let g = plant.geometry().muscle_jacobian(&theta).unwrap();
        let mut l_ref = s0.l.clone();
        l_ref[flexor] -= 0.002;
        let mut s = s0.clone();
        for _ in 0..100 {
            s = plant.step(&s, &l_ref, 0.005).unwrap();
        }
        let moved = s.theta[elbow] - theta[elbow];
        assert!(moved.abs() > 1e-3);
        assert_eq!(moved.signum(), -g[(flexor, elbow)].signum());
    }

    #[test]
    fn constant_tension_heats_toward_thermal_fixed_point() {
        let mut cfg = PlantConfig::reference();
        cfg.thermal.kappa_c = 0.5;
        let plant = MusclePlant::new(cfg.clone()).unwrap();
        let mut s = plant.state_at(&cfg.neutral_pose(), &[100.0; 8]).unwrap();
        assert!(s.f.iter().all(|v| (v - 100.0).abs() < 1e-6));
        let target = cfg.thermal.kappa_h * 1e4 / cfg.thermal.kappa_c + cfg.thermal.ambient;
        let mut prev = s.c[0];
        let mut env_plant = plant.clone();
        env_plant.env.constrained = vec![true; 3];
        for _ in 0..4000 {
            let l_ref = s.l.clone();
            s = env_plant.step(&s, &l_ref, 0.005).unwrap();
            assert!(s.c[0] >= prev);
            assert!(s.c[0] <= target + 1e-9);
            prev = s.c[0];
        }
        assert!((s.c[0] - target).abs() < 0.01 * (target - cfg.thermal.ambient));
    }

    #[test]
    fn rejects_bad_steps() {
        let plant = no_load_plant();
        let s = plant
            .state_at(&plant.config().neutral_pose(), &[0.0; 8])
            .unwrap();
        assert!(matches!(
            plant.step(&s, &s.l, 0.0),
            Err(PlantError::InvalidStep(_))
        ));
        assert!(matches!(
            plant.step(&s, &s.l, 0.05),
            Err(PlantError::InvalidStep(_))
        ));
        let mut bad = s.l.clone();
        bad[0] = f64::NAN;
        assert!(matches!(
            plant.step(&s, &bad, 0.005),
            Err(PlantError::Fault(_))
        ));
    }
}
