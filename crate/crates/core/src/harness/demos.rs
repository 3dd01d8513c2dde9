use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Assets, Metric, Outcome, Scenario};
use crate::dynamic::CommandSignal;
use crate::plant::{MusclePlant, PlantConfig, TrajectoryLog};
use crate::reflex::ReflexLog;
use crate::rig::{tension_norm, Rig, RigOptions, CONTROL_DT};
use crate::static_model::{ekf_step, EkfEstimator, IntersensoryModel};
use crate::Error;

fn ticks(seconds: f64) -> usize {
    (seconds / CONTROL_DT).round() as usize
}

/// Every joint swinging about the middle of its range at 40% of the half
/// range, each at its own frequency.
pub fn probe_pose(cfg: &PlantConfig, t: f64) -> Vec<f64> {
    cfg.joints
        .iter()
        .enumerate()
        .map(|(j, joint)| {
            let [lo, hi] = joint.limits;
            let w = 2.0 * std::f64::consts::PI * 0.3 * (1.0 + 0.3 * j as f64);
            0.5 * (lo + hi) + 0.2 * (hi - lo) * (w * t).sin()
        })
        .collect()
}

fn with_error(cfg: &PlantConfig, error_m: f64) -> PlantConfig {
    let mut cfg = cfg.clone();
    for m in &mut cfg.muscles {
        m.length_offset += error_m;
    }
    cfg
}

fn rig(
    assets: &Assets,
    body: &PlantConfig,
    model: IntersensoryModel,
    options: RigOptions,
    theta0: &[f64],
) -> Result<Rig, Error> {
    Rig::new(
        MusclePlant::new(body.clone())?,
        model,
        &assets.reflex,
        options,
        theta0,
    )
}

fn names(cfg: &PlantConfig) -> Vec<String> {
    cfg.muscles.iter().map(|m| m.name.clone()).collect()
}

/// Internal force of each antagonist pair: the smaller of the two tensions.
/// Muscles are listed pairwise in the body configuration.
fn peak_antagonist(f: &[f64]) -> f64 {
    f.chunks_exact(2)
        .map(|p| p[0].min(p[1]))
        .fold(0.0, f64::max)
}

struct Probe {
    /// `(theta, f, l)` measured at every tick.
    states: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    peak_antagonist: f64,
}

fn probe(
    assets: &Assets,
    s: &Scenario,
    body: &PlantConfig,
    model: &IntersensoryModel,
) -> Result<Probe, Error> {
    let options = RigOptions {
        online_learning: false,
        ..s.rig.clone()
    };
    let start = probe_pose(body, 0.0);
    let mut rig = rig(assets, body, model.clone(), options, &start)?;
    for _ in 0..ticks(1.0) {
        rig.tick(&start)?;
    }
    let mut out = Probe {
        states: Vec::new(),
        peak_antagonist: 0.0,
    };
    for k in 0..ticks(s.demo.probe_s) {
        let tick = rig.tick(&probe_pose(body, k as f64 * CONTROL_DT))?;
        out.peak_antagonist = out.peak_antagonist.max(peak_antagonist(&tick.f));
        out.states.push((tick.theta, tick.f, tick.l));
    }
    Ok(out)
}

/// Mean absolute error of `model` on the taut muscles of `states` [m].
fn length_error(
    model: &IntersensoryModel,
    states: &[(Vec<f64>, Vec<f64>, Vec<f64>)],
) -> Result<f64, Error> {
    let (mut sum, mut n) = (0.0, 0usize);
    for (theta, f, l) in states {
        let pred = model.infer_command(theta, f)?;
        for i in 0..l.len() {
            if f[i] >= 1.0 {
                sum += (pred[i] - l[i]).abs();
                n += 1;
            }
        }
    }
    if n == 0 {
        return Err(Error::Config(
            "probe trajectory left every muscle slack".into(),
        ));
    }
    Ok(sum / n as f64)
}

/// Body paths longer than the model believes by `demo.model_error_m`. The
/// probe trajectory is run with the initial model, the model then learns
/// online for `demo.online_updates` ticks of seeded random motion, and the
/// probe is repeated. The length error is evaluated on the states measured
/// during the first probe.
pub fn online_learning_demo(s: &Scenario, assets: &Assets) -> Result<Outcome, Error> {
    if !assets.plant.muscles.len().is_multiple_of(2) {
        return Err(Error::Config(
            "antagonist pairs need an even muscle count".into(),
        ));
    }
    let body = with_error(&assets.plant, s.demo.model_error_m);
    let before = probe(assets, s, &body, &assets.static_model)?;
    let error_before = length_error(&assets.static_model, &before.states)?;

    let duration = s.demo.online_updates as f64 * CONTROL_DT;
    let signals: Vec<CommandSignal> = body
        .joints
        .iter()
        .enumerate()
        .map(|(j, joint)| {
            let [lo, hi] = joint.limits;
            let m = 0.1 * (hi - lo);
            CommandSignal::new(
                duration,
                1.0,
                [lo + m, hi - m],
                s.seed.wrapping_add(j as u64),
            )
        })
        .collect();
    let start: Vec<f64> = signals.iter().map(|g| g.at(0.0)).collect();
    let mut learner = rig(
        assets,
        &body,
        assets.static_model.clone(),
        s.rig.clone(),
        &start,
    )?;
    let mut log = TrajectoryLog::new(Vec::new(), &body)?;
    learner.options.online_learning = true;
    for k in 0..s.demo.online_updates {
        let t = k as f64 * CONTROL_DT;
        let target: Vec<f64> = signals.iter().map(|g| g.at(t)).collect();
        learner.tick(&target)?;
        log.record(&learner.state, learner.car_state.v_car)?;
    }
    let learned = learner.model;
    let error_after = length_error(&learned, &before.states)?;
    let after = probe(assets, s, &body, &learned)?;

    Ok(Outcome {
        metrics: vec![
            ("error_before_m".into(), Metric(error_before)),
            ("error_after_m".into(), Metric(error_after)),
            ("error_ratio".into(), Metric(error_after / error_before)),
            (
                "peak_antagonist_before_n".into(),
                Metric(before.peak_antagonist),
            ),
            (
                "peak_antagonist_after_n".into(),
                Metric(after.peak_antagonist),
            ),
            (
                "online_updates".into(),
                Metric(s.demo.online_updates as f64),
            ),
        ],
        files: vec![(format!("{}_learning.csv", s.name), log.finish()?)],
    })
}

struct Hold {
    tension_norm: f64,
    max_drift: f64,
    final_drift: f64,
    log: Vec<u8>,
}

fn hold(
    assets: &Assets,
    s: &Scenario,
    body: &PlantConfig,
    mrc: bool,
    constrained: bool,
) -> Result<Hold, Error> {
    let pose = body.neutral_pose();
    let mut rig = rig(
        assets,
        body,
        assets.static_model.clone(),
        s.rig.clone(),
        &pose,
    )?;
    rig.options.mrc = false;
    for _ in 0..ticks(s.demo.settle_s) {
        rig.tick(&pose)?;
    }
    if constrained {
        rig.plant.env.constrained = vec![true; pose.len()];
    }
    rig.options.mrc = mrc;
    let mut log = ReflexLog::new(Vec::new(), names(body))?;
    let (mut max_drift, mut final_drift) = (0.0f64, 0.0);
    for _ in 0..ticks(s.demo.hold_s) {
        let tick = rig.tick(&pose)?;
        if let Some(h) = &rig.relax.theta_hold {
            final_drift = tick
                .theta
                .iter()
                .zip(h)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            max_drift = max_drift.max(final_drift);
        }
        log.record(tick.t, &tick.dl_relax, &tick.dl_safe, &tick.f, &tick.c)?;
    }
    Ok(Hold {
        tension_norm: tension_norm(&rig.state.f),
        max_drift,
        final_drift,
        log: log.finish()?,
    })
}

/// Static hold of the neutral pose on a body with `demo.relax_error_m` of
/// unmodelled path length, without relaxation, with it, and with it while
/// the environment holds every joint.
pub fn relax_demo(s: &Scenario, assets: &Assets) -> Result<Outcome, Error> {
    let body = with_error(&assets.plant, s.demo.relax_error_m);
    let base = hold(assets, s, &body, false, false)?;
    let relaxed = hold(assets, s, &body, true, false)?;
    let constrained = hold(assets, s, &body, true, true)?;
    let plant = MusclePlant::new(body.clone())?;
    let g = plant.geometry().muscle_jacobian(&body.neutral_pose())?;
    let arm = g
        .iter()
        .map(|v| v.abs())
        .filter(|&v| v > 1e-6)
        .fold(f64::INFINITY, f64::min);
    let mrc = &assets.reflex.mrc;
    Ok(Outcome {
        metrics: vec![
            ("tension_baseline_n".into(), Metric(base.tension_norm)),
            ("tension_mrc_n".into(), Metric(relaxed.tension_norm)),
            (
                "tension_constrained_n".into(),
                Metric(constrained.tension_norm),
            ),
            (
                "mrc_ratio".into(),
                Metric(relaxed.tension_norm / base.tension_norm),
            ),
            ("final_drift_rad".into(), Metric(relaxed.final_drift)),
            ("max_drift_rad".into(), Metric(relaxed.max_drift)),
            (
                "constrained_max_drift_rad".into(),
                Metric(constrained.max_drift),
            ),
            ("angle_threshold_rad".into(), Metric(mrc.angle_threshold)),
            (
                "drift_bound_rad".into(),
                Metric(mrc.angle_threshold + mrc.rate / arm),
            ),
        ],
        files: vec![(format!("{}_relax.csv", s.name), relaxed.log)],
    })
}

struct Disturbed {
    peak: f64,
    max_step: f64,
    log: Vec<u8>,
}

fn disturbed(assets: &Assets, s: &Scenario, safety: bool) -> Result<Disturbed, Error> {
    let body = &assets.plant;
    let pose = body.neutral_pose();
    let j = s.demo.disturbance_joint;
    if j >= pose.len() {
        return Err(Error::Config(format!(
            "disturbance_joint {j} does not exist"
        )));
    }
    let options = RigOptions {
        safety,
        ..s.rig.clone()
    };
    let mut rig = rig(assets, body, assets.static_model.clone(), options, &pose)?;
    let [on, off, end] = s.demo.disturbance_window.map(ticks);
    let mut log = ReflexLog::new(Vec::new(), names(body))?;
    let (mut peak, mut max_step) = (0.0f64, 0.0f64);
    let mut prev = vec![0.0; body.muscles.len()];
    for k in 0..end {
        if k == on {
            rig.plant.env.external_torque[j] = s.demo.disturbance_torque;
        }
        if k == off {
            rig.plant.env.external_torque[j] = 0.0;
        }
        let tick = rig.tick(&pose)?;
        peak = peak.max(tick.f.iter().copied().fold(0.0, f64::max));
        for (a, b) in tick.dl_safe.iter().zip(&prev) {
            max_step = max_step.max((a - b).abs());
        }
        log.record(tick.t, &tick.dl_relax, &tick.dl_safe, &tick.f, &tick.c)?;
        prev = tick.dl_safe;
    }
    Ok(Disturbed {
        peak,
        max_step,
        log: log.finish()?,
    })
}

/// External torque pulse on one joint while holding the neutral pose, with
/// and without the safety reflex.
pub fn safety_demo(s: &Scenario, assets: &Assets) -> Result<Outcome, Error> {
    let off = disturbed(assets, s, false)?;
    let on = disturbed(assets, s, true)?;
    let r = &assets.reflex;
    Ok(Outcome {
        metrics: vec![
            ("peak_without_n".into(), Metric(off.peak)),
            ("peak_with_n".into(), Metric(on.peak)),
            ("f_lim_n".into(), Metric(r.f_lim)),
            ("max_step_m".into(), Metric(on.max_step)),
            ("dl_max_m".into(), Metric(r.dl_max.max(-r.dl_min))),
        ],
        files: vec![(format!("{}_safety.csv", s.name), on.log)],
    })
}

/// Joint-angle estimation from noisy length measurements while the body
/// follows the probe trajectory for `duration_s`.
pub fn ekf_demo(s: &Scenario, assets: &Assets) -> Result<Outcome, Error> {
    let body = &assets.plant;
    let start = probe_pose(body, 0.0);
    let mut rig = rig(
        assets,
        body,
        assets.static_model.clone(),
        s.rig.clone(),
        &start,
    )?;
    let limits = body.joints.iter().map(|j| j.limits).collect();
    let cfg = s.ekf.clone().unwrap_or_default();
    let mut est = EkfEstimator::new(start, limits, body.muscles.len(), &cfg)?;
    let noise = Normal::new(0.0, s.demo.length_noise_m)
        .map_err(|e| Error::Config(format!("length_noise_m: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);

    let mut csv = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    for prefix in ["theta", "theta_est"] {
        header.extend(body.joints.iter().map(|j| format!("{prefix}_{}", j.name)));
    }
    let csv_err = |e: csv::Error| Error::Config(format!("ekf log: {e}"));
    csv.write_record(&header).map_err(csv_err)?;

    let (mut se, mut n, mut worst) = (0.0, 0usize, 0.0f64);
    for k in 0..ticks(s.duration_s) {
        let tick = rig.tick(&probe_pose(body, k as f64 * CONTROL_DT))?;
        let l: Vec<f64> = tick.l.iter().map(|v| v + noise.sample(&mut rng)).collect();
        est = ekf_step(&est, &rig.model, &l, &tick.f, CONTROL_DT)?;
        if tick.t > s.demo.burn_in_s {
            for (a, b) in est.theta_est.iter().zip(&tick.theta) {
                se += (a - b) * (a - b);
                worst = worst.max((a - b).abs());
                n += 1;
            }
        }
        let row: Vec<String> = std::iter::once(tick.t)
            .chain(tick.theta.iter().copied())
            .chain(est.theta_est.iter().copied())
            .map(|v| v.to_string())
            .collect();
        csv.write_record(&row).map_err(csv_err)?;
    }
    if n == 0 {
        return Err(Error::Config("EKF run ends inside the burn-in".into()));
    }
    let bytes = csv
        .into_inner()
        .map_err(|e| Error::Config(format!("ekf log: {}", e.error())))?;
    Ok(Outcome {
        metrics: vec![
            ("rmse_rad".into(), Metric((se / n as f64).sqrt())),
            ("max_error_rad".into(), Metric(worst)),
        ],
        files: vec![(format!("{}_ekf.csv", s.name), bytes)],
    })
}
