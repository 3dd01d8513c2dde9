//! Closed-loop wiring of the body, the static model and the reflexes on a
//! fixed control tick.
//!
//! Per tick: necessary tensions from the QP at the reference pose, actuator
//! lengths from the static model, then relaxation and safety offsets on top.
//! The body and car are integrated over several plant substeps per tick.

use serde::{Deserialize, Serialize};

use crate::dynamic::TaskPlant;
use crate::plant::{CarModel, CarState, MuscleGeometry, MusclePlant, PlantConfig, PlantState};
use crate::reflex::{
    mrc_step, safety_reflex_step, solve_tension_qp, MrcMode, QpSolution, ReflexConfig,
    RelaxationState, SafetyReflex, TensionQp,
};
use crate::static_model::{ekf_step, EkfEstimator, IntersensoryModel};
use crate::Error;

/// Control tick [s].
pub const CONTROL_DT: f64 = 0.02;
/// Plant integration steps per control tick.
pub const PLANT_SUBSTEPS: usize = 4;
/// Reference motion below this many rad per tick counts as holding still.
pub const STATIC_TOLERANCE: f64 = 1e-3;

/// Necessary tensions for a pose on the nominal body.
#[derive(Debug, Clone)]
pub struct TensionPlanner {
    geometry: MuscleGeometry,
    nominal: PlantConfig,
    w1_diag: Vec<f64>,
    w2_diag: Vec<f64>,
    f_min: Vec<f64>,
}

impl TensionPlanner {
    pub fn new(nominal: &PlantConfig, reflex: &ReflexConfig) -> Result<Self, Error> {
        let geometry = MuscleGeometry::from_config(nominal)?;
        reflex.validate(geometry.num_muscles(), geometry.num_joints())?;
        Ok(Self {
            geometry,
            nominal: nominal.clone(),
            w1_diag: reflex.w1_diag.clone(),
            w2_diag: reflex.w2_diag.clone(),
            f_min: reflex.f_min.clone(),
        })
    }

    /// Torque the muscles must supply to hold `theta` against the nominal loads.
    pub fn necessary_torque(&self, theta: &[f64]) -> Vec<f64> {
        self.nominal
            .joints
            .iter()
            .zip(theta)
            .map(|(j, t)| -j.load.torque(*t))
            .collect()
    }

    pub fn plan(&self, theta_ref: &[f64]) -> Result<QpSolution, Error> {
        let qp = TensionQp {
            w1_diag: self.w1_diag.clone(),
            w2_diag: self.w2_diag.clone(),
            g: self.geometry.muscle_jacobian(theta_ref)?,
            tau_nec: self.necessary_torque(theta_ref),
            f_min: self.f_min.clone(),
        };
        Ok(solve_tension_qp(&qp)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigOptions {
    pub mrc: bool,
    pub safety: bool,
    pub online_learning: bool,
}

impl Default for RigOptions {
    fn default() -> Self {
        Self {
            mrc: false,
            safety: true,
            online_learning: false,
        }
    }
}

/// Everything observed and commanded during one control tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tick {
    pub t: f64,
    pub theta_ref: Vec<f64>,
    pub theta: Vec<f64>,
    pub theta_dot: Vec<f64>,
    pub l: Vec<f64>,
    pub f: Vec<f64>,
    pub c: Vec<f64>,
    pub x: Vec<f64>,
    pub l_ref: Vec<f64>,
    pub dl_relax: Vec<f64>,
    pub dl_safe: Vec<f64>,
    pub v_car: f64,
    pub wheel_angle: f64,
    pub theta_est: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Rig {
    pub plant: MusclePlant,
    pub car: CarModel,
    pub state: PlantState,
    pub car_state: CarState,
    pub model: IntersensoryModel,
    pub planner: TensionPlanner,
    pub safety: SafetyReflex,
    pub relax: RelaxationState,
    pub options: RigOptions,
    pub ekf: Option<EkfEstimator>,
    /// Brake pedal command in `[0, 1]`.
    pub brake: f64,
    /// Extra length offsets added to every command [m].
    pub l_bias: Vec<f64>,
    last_theta_ref: Option<Vec<f64>>,
}

impl Rig {
    /// Body at rest at `theta0` with the planned tensions, car at creep.
    pub fn new(
        plant: MusclePlant,
        model: IntersensoryModel,
        reflex: &ReflexConfig,
        options: RigOptions,
        theta0: &[f64],
    ) -> Result<Self, Error> {
        let (nm, nj) = (plant.num_muscles(), plant.num_joints());
        if model.num_muscles() != nm || model.num_joints() != nj {
            return Err(Error::Config(format!(
                "static model is {}x{}, body has {nj} joints and {nm} muscles",
                model.num_joints(),
                model.num_muscles()
            )));
        }
        let planner = TensionPlanner::new(plant.config(), reflex)?;
        let x = planner.plan(theta0)?.x;
        let state = plant.state_at(theta0, &x)?;
        let car = CarModel::new(plant.config().car);
        let car_state = CarState::at_rest(car.params.creep_kmh);
        Ok(Self {
            car,
            car_state,
            state,
            model,
            planner,
            safety: reflex.safety(nm)?,
            relax: reflex.relaxation(nm, nj),
            options,
            ekf: None,
            brake: 0.0,
            l_bias: vec![0.0; nm],
            last_theta_ref: None,
            plant,
        })
    }

    pub fn t(&self) -> f64 {
        self.state.t
    }

    /// One control tick toward `theta_ref`.
    pub fn tick(&mut self, theta_ref: &[f64]) -> Result<Tick, Error> {
        let nm = self.plant.num_muscles();
        let plan = self.planner.plan(theta_ref)?;
        let base = self.model.infer_command(theta_ref, &plan.x)?;

        let holding = self
            .last_theta_ref
            .as_ref()
            .map(|prev| {
                prev.iter()
                    .zip(theta_ref)
                    .all(|(a, b)| (a - b).abs() < STATIC_TOLERANCE)
            })
            .unwrap_or(true);
        self.last_theta_ref = Some(theta_ref.to_vec());

        let dl_relax = if self.options.mrc {
            self.relax.mode = if holding {
                MrcMode::Static
            } else {
                MrcMode::Moving
            };
            let (next, out) = mrc_step(
                &self.relax,
                &self.state.f,
                &self.state.theta,
                &plan.x,
                &self.plant.env.constrained,
            );
            self.relax = next;
            out
        } else {
            vec![0.0; nm]
        };
        let dl_safe = if self.options.safety {
            let (next, out) = safety_reflex_step(&self.safety, &self.state.f, &self.state.c);
            self.safety = next;
            out
        } else {
            vec![0.0; nm]
        };
        let l_ref: Vec<f64> = (0..nm)
            .map(|i| base[i] + dl_relax[i] + dl_safe[i] + self.l_bias[i])
            .collect();

        let coupling = self.plant.config().coupling.clone();
        let dt = CONTROL_DT / PLANT_SUBSTEPS as f64;
        for _ in 0..PLANT_SUBSTEPS {
            self.state = self.plant.step(&self.state, &l_ref, dt)?;
            let pedal = self.state.theta[coupling.pedal_joint];
            let steer = coupling.steer_joint.map_or(0.0, |j| self.state.theta[j]);
            self.car_state = self
                .car
                .car_step(&self.car_state, pedal, self.brake, steer, dt);
        }

        if self.options.online_learning {
            self.model
                .online_update(&self.state.theta, &self.state.f, &self.state.l)?;
        }
        if let Some(est) = &self.ekf {
            self.ekf = Some(ekf_step(
                est,
                &self.model,
                &self.state.l,
                &self.state.f,
                CONTROL_DT,
            )?);
        }

        Ok(Tick {
            t: self.state.t,
            theta_ref: theta_ref.to_vec(),
            theta: self.state.theta.clone(),
            theta_dot: self.state.theta_dot.clone(),
            l: self.state.l.clone(),
            f: self.state.f.clone(),
            c: self.state.c.clone(),
            x: plan.x,
            l_ref,
            dl_relax,
            dl_safe,
            v_car: self.car_state.v_car,
            wheel_angle: self.car_state.wheel_angle,
            theta_est: self.ekf.as_ref().map(|e| e.theta_est.clone()),
        })
    }
}

/// L2 norm of a tension vector.
pub fn tension_norm(f: &[f64]) -> f64 {
    f.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Pedal speed task on a [`Rig`]: the command is the pedal joint reference,
/// every other joint holds `posture`.
///
/// Initial state: `v_car, theta, theta_dot, l, l_dot`, with `theta` from the
/// EKF when one is attached.
#[derive(Debug, Clone)]
pub struct PedalTask {
    pub rig: Rig,
    pub posture: Vec<f64>,
    prev_l: Vec<f64>,
    pub last: Option<Tick>,
}

impl PedalTask {
    pub fn new(rig: Rig, posture: Vec<f64>) -> Self {
        let prev_l = rig.state.l.clone();
        Self {
            rig,
            posture,
            prev_l,
            last: None,
        }
    }

    pub fn pedal_joint(&self) -> usize {
        self.rig.plant.config().coupling.pedal_joint
    }

    pub fn pedal_angle(&self) -> f64 {
        self.rig.state.theta[self.pedal_joint()]
    }

    pub fn reference(&self, u: f64) -> Vec<f64> {
        let j = self.pedal_joint();
        let [lo, hi] = self.command_limits();
        let mut r = self.posture.clone();
        r[j] = u.clamp(lo, hi);
        r
    }
}

impl TaskPlant for PedalTask {
    fn initial_state(&self) -> Vec<f64> {
        let s = &self.rig.state;
        let theta = self.rig.ekf.as_ref().map_or(&s.theta, |e| &e.theta_est);
        let mut out = vec![self.rig.car_state.v_car];
        out.extend(theta);
        out.extend(&s.theta_dot);
        out.extend(&s.l);
        out.extend(
            s.l.iter()
                .zip(&self.prev_l)
                .map(|(a, b)| (a - b) / CONTROL_DT),
        );
        out
    }

    fn task_state(&self) -> f64 {
        self.rig.car_state.v_car
    }

    fn command_limits(&self) -> [f64; 2] {
        self.rig.plant.geometry().limits(self.pedal_joint())
    }

    fn control_dt(&self) -> f64 {
        CONTROL_DT
    }

    fn apply(&mut self, u: f64) -> Result<(), Error> {
        let r = self.reference(u);
        self.prev_l = self.rig.state.l.clone();
        self.last = Some(self.rig.tick(&r)?);
        Ok(())
    }
}
