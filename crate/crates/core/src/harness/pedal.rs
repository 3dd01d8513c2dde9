use std::path::Path;

use super::{
    demos, read, settle_time, write, ControllerKind, Metric, Outcome, RunReport, Scenario,
    ScenarioKind, HALT_SPEED,
};
use crate::dynamic::{
    collect_rollout, train_dynamics, Dataset, DynamicsModel, ExperimentLog, MpcController, Pid,
    SpeedController, TaskPlant,
};
use crate::plant::{CarState, MusclePlant, PlantConfig};
use crate::reflex::ReflexConfig;
use crate::rig::{PedalTask, Rig, CONTROL_DT};
use crate::static_model::{init_from_geometry, EkfEstimator, IntersensoryModel};
use crate::Error;

/// Models and settings shared by the runs of one scenario.
#[derive(Debug, Clone)]
pub struct Assets {
    pub plant: PlantConfig,
    pub reflex: ReflexConfig,
    pub static_model: IntersensoryModel,
    /// Loaded from the scenario, or trained on first use by [`Assets::dynamics`].
    pub dynamics: Option<DynamicsModel>,
}

impl Assets {
    /// Loads every referenced file; trains the static model when none is given.
    pub fn prepare(s: &Scenario, base: &Path) -> Result<Self, Error> {
        let plant = match &s.plant {
            Some(p) => PlantConfig::from_json(&read(&base.join(p))?)?,
            None => PlantConfig::reference(),
        };
        let body = MusclePlant::new(plant.clone())?;
        let static_model = match &s.static_model {
            Some(p) => IntersensoryModel::from_json(
                &read(&base.join(p))?,
                body.num_joints(),
                s.static_config.online.clone(),
            )?,
            None => init_from_geometry(body.geometry(), body.elastic(), &s.static_config)?,
        };
        Self::with_static_model(s, base, plant, static_model)
    }

    /// Like [`Assets::prepare`] with an already trained static model.
    pub fn with_static_model(
        s: &Scenario,
        base: &Path,
        plant: PlantConfig,
        static_model: IntersensoryModel,
    ) -> Result<Self, Error> {
        let body = MusclePlant::new(plant.clone())?;
        let (nm, nj) = (body.num_muscles(), body.num_joints());
        let reflex = s
            .reflex
            .clone()
            .unwrap_or_else(|| ReflexConfig::reference(nm, nj));
        reflex.validate(nm, nj)?;
        let dynamics = match &s.dynamics_model {
            Some(p) => {
                let m = DynamicsModel::from_json(&read(&base.join(p))?)?;
                let doc = m.to_document();
                if doc.horizon != s.dynamic.horizon {
                    return Err(Error::Config(format!(
                        "dynamics model has N = {}, scenario asks for {}",
                        doc.horizon, s.dynamic.horizon
                    )));
                }
                Some(m)
            }
            None => None,
        };
        Ok(Self {
            plant,
            reflex,
            static_model,
            dynamics,
        })
    }

    /// The dynamics model, collecting a rollout and training one with the
    /// scenario seed if none is loaded yet.
    pub fn dynamics(&mut self, s: &Scenario) -> Result<&DynamicsModel, Error> {
        if self.dynamics.is_none() {
            let data = collect_pedal_rollout(s, self)?;
            let mut cfg = s.dynamic.model.clone();
            cfg.train.seed = s.seed;
            self.dynamics = Some(train_dynamics(&data, &cfg)?);
        }
        Ok(self.dynamics.as_ref().expect("trained above"))
    }
}

/// Fresh rig holding the neutral posture with the car at `s.v0`.
pub fn new_pedal_task(s: &Scenario, assets: &Assets, grade: f64) -> Result<PedalTask, Error> {
    let body = MusclePlant::new(assets.plant.clone())?;
    let pose = assets.plant.neutral_pose();
    let limits = assets.plant.joints.iter().map(|j| j.limits).collect();
    let nm = body.num_muscles();
    let mut rig = Rig::new(
        body,
        assets.static_model.clone(),
        &assets.reflex,
        s.rig.clone(),
        &pose,
    )?;
    rig.car_state = CarState::at_rest(s.v0);
    rig.car.grade_accel = grade;
    if let Some(cfg) = &s.ekf {
        rig.ekf = Some(EkfEstimator::new(pose.clone(), limits, nm, cfg)?);
    }
    Ok(PedalTask::new(rig, pose))
}

/// Random pedal operation on a flat road, sliced into training windows.
pub fn collect_pedal_rollout(s: &Scenario, assets: &Assets) -> Result<Dataset, Error> {
    let mut task = new_pedal_task(s, assets, 0.0)?;
    collect_rollout(
        &mut task,
        s.dynamic.rollout_s,
        s.dynamic.knot_period,
        s.seed,
        s.dynamic.horizon,
    )
}

/// Per-tick record of one pedal run. Sample `k` is taken after the `k`-th
/// command; the starting speed is kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct PedalTrace {
    pub v_ref: f64,
    pub v0: f64,
    pub t: Vec<f64>,
    pub v: Vec<f64>,
    pub command: Vec<f64>,
    pub pedal: Vec<f64>,
    pub loss: Vec<Option<f64>>,
    pub braked: Vec<bool>,
    /// Time and new latch state of every brake engagement or release.
    pub transitions: Vec<(f64, bool)>,
}

impl PedalTrace {
    /// `(t, v)` samples in `[from, to]`, with the starting speed at `t = 0`.
    fn samples(&self, from: f64, to: f64) -> Vec<(f64, f64)> {
        let eps = 1e-9;
        std::iter::once((0.0, self.v0))
            .chain(self.t.iter().copied().zip(self.v.iter().copied()))
            .filter(|&(t, _)| t >= from - eps && t <= to + eps)
            .collect()
    }

    fn end(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    /// Settle time of the drive before the first brake event.
    pub fn settle(&self) -> Option<f64> {
        let until = self.transitions.first().map_or(self.end(), |&(t, _)| t);
        settle_time(&self.samples(0.0, until), self.v_ref, 0.0)
    }

    pub fn metrics(&self) -> Vec<(String, Metric)> {
        let mut out = vec![("settle_s".to_string(), Metric::from_option(self.settle()))];
        let (mut stops, mut resumes) = (0, 0);
        for (i, &(t0, braking)) in self.transitions.iter().enumerate() {
            let until = self.transitions.get(i + 1).map_or(self.end(), |&(t, _)| t);
            let seg = self.samples(t0, until);
            if braking {
                stops += 1;
                let halt = seg.iter().find(|&&(_, v)| v < HALT_SPEED).map(|&(t, _)| t);
                out.push((
                    format!("halt_{stops}_s"),
                    Metric::from_option(halt.map(|t| t - t0)),
                ));
                if let Some(th) = halt {
                    let peak = seg
                        .iter()
                        .filter(|&&(t, _)| t >= th)
                        .map(|&(_, v)| v)
                        .fold(0.0, f64::max);
                    out.push((format!("halted_peak_v_{stops}"), Metric(peak)));
                }
            } else {
                resumes += 1;
                let settle = settle_time(&seg, self.v_ref, t0);
                out.push((format!("resettle_{resumes}_s"), Metric::from_option(settle)));
            }
        }
        let driven: Vec<f64> = self
            .command
            .iter()
            .zip(&self.braked)
            .filter(|(_, &b)| !b)
            .map(|(&u, _)| u)
            .collect();
        let du = if driven.len() > 1 {
            driven.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (driven.len() - 1) as f64
        } else {
            0.0
        };
        out.push(("mean_abs_du".into(), Metric(du)));
        out.push((
            "final_v".into(),
            Metric(self.v.last().copied().unwrap_or(self.v0)),
        ));
        out
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, Error> {
        let mut log = ExperimentLog::new(Vec::new())?;
        for k in 0..self.t.len() {
            log.record(
                self.t[k],
                self.v[k],
                self.v_ref,
                self.command[k],
                self.pedal[k],
                self.loss[k],
            )?;
        }
        Ok(log.finish()?)
    }
}

/// Drives the pedal task for `s.duration_s`. Stop events latch the brake and
/// lift the foot to the rest angle within the same tick; a release restarts
/// the controller from scratch.
pub fn run_pedal(
    s: &Scenario,
    assets: &mut Assets,
    kind: ControllerKind,
) -> Result<PedalTrace, Error> {
    let model = match kind {
        ControllerKind::Mpc => Some(assets.dynamics(s)?.clone()),
        ControllerKind::Pid => None,
    };
    let mut task = new_pedal_task(s, assets, s.grade)?;
    let limits = task.command_limits();
    let rest = task.posture[task.pedal_joint()];
    let make = || -> Box<dyn SpeedController + '_> {
        match &model {
            Some(m) => Box::new(MpcController::new(
                m,
                s.dynamic.optimizer(limits),
                s.dynamic.replan_every,
                rest,
            )),
            None => Box::new(Pid::new(s.dynamic.pid, CONTROL_DT, limits, rest)),
        }
    };
    let mut ctrl = make();
    let steps = (s.duration_s / CONTROL_DT).round() as usize;
    let mut trace = PedalTrace {
        v_ref: s.v_ref,
        v0: task.task_state(),
        t: Vec::with_capacity(steps),
        v: Vec::with_capacity(steps),
        command: Vec::with_capacity(steps),
        pedal: Vec::with_capacity(steps),
        loss: Vec::with_capacity(steps),
        braked: Vec::with_capacity(steps),
        transitions: Vec::new(),
    };
    let mut next = 0;
    let mut latched = false;
    for k in 0..steps {
        let t = k as f64 * CONTROL_DT;
        while let Some(e) = s.events.get(next).filter(|e| e.t <= t + 1e-9) {
            next += 1;
            if e.event.brakes() != latched {
                latched = e.event.brakes();
                trace.transitions.push((t, latched));
                if !latched {
                    ctrl = make();
                }
            }
        }
        task.rig.brake = if latched { 1.0 } else { 0.0 };
        let (u, loss) = if latched {
            (rest, None)
        } else {
            let s0 = task.initial_state();
            ctrl.command(&s0, task.task_state(), s.v_ref)?
        };
        task.apply(u)?;
        trace.t.push((k + 1) as f64 * CONTROL_DT);
        trace.v.push(task.task_state());
        trace.command.push(u);
        trace.pedal.push(task.pedal_angle());
        trace.loss.push(loss);
        trace.braked.push(latched);
    }
    Ok(trace)
}

fn finish(
    s: &Scenario,
    base: &Path,
    out: Option<&Path>,
    outcome: Outcome,
) -> Result<RunReport, Error> {
    let mut report = RunReport::new(&s.name, s.seed, s.config_hash(base)?);
    for (k, v) in outcome.metrics {
        if !(v.is_never() || v.0.is_finite()) {
            return Err(Error::Config(format!("metric {k} is not finite")));
        }
        report.set(k, v);
    }
    if let Some(dir) = out.or(s.out.as_deref()) {
        for (file, bytes) in &outcome.files {
            write(&dir.join(file), bytes)?;
            report.files.push(file.clone());
        }
        report.write(dir)?;
    }
    Ok(report)
}

/// Runs the scenario named by `s.kind` and, when an output directory is
/// given (argument first, then `s.out`), writes its CSVs and report there.
pub fn run_scenario(
    s: &Scenario,
    base: &Path,
    assets: &mut Assets,
    out: Option<&Path>,
) -> Result<RunReport, Error> {
    s.validate()?;
    let outcome = match s.kind {
        ScenarioKind::Pedal => {
            let trace = run_pedal(s, assets, s.controller)?;
            Outcome {
                metrics: trace.metrics(),
                files: vec![(format!("{}.csv", s.name), trace.to_csv()?)],
            }
        }
        ScenarioKind::OnlineLearning => demos::online_learning_demo(s, assets)?,
        ScenarioKind::Relax => demos::relax_demo(s, assets)?,
        ScenarioKind::Safety => demos::safety_demo(s, assets)?,
        ScenarioKind::Ekf => demos::ekf_demo(s, assets)?,
    };
    finish(s, base, out, outcome)
}

/// Runs every controller on an identical fresh rig and reports each
/// settle-to-20% time as `settle_<label>_s` ("never" when it does not settle).
pub fn compare_controllers(
    s: &Scenario,
    base: &Path,
    assets: &mut Assets,
    controllers: &[(&str, ControllerKind)],
    out: Option<&Path>,
) -> Result<RunReport, Error> {
    s.validate()?;
    let mut outcome = Outcome::default();
    for &(label, kind) in controllers {
        let trace = run_pedal(s, assets, kind)?;
        outcome.metrics.push((
            format!("settle_{label}_s"),
            Metric::from_option(trace.settle()),
        ));
        outcome
            .files
            .push((format!("{}_{label}.csv", s.name), trace.to_csv()?));
    }
    finish(s, base, out, outcome)
}
