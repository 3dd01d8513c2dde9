use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tendon_core::nn::TrainConfig;
use tendon_core::plant::{MusclePlant, PlantConfig};
use tendon_core::reflex::ReflexConfig;
use tendon_core::rig::{Rig, RigOptions, CONTROL_DT};
use tendon_core::static_model::{
    ekf_step, init_from_geometry, EkfConfig, EkfEstimator, GridSpec, IntersensoryModel,
    ObservationMode, StaticConfig,
};

fn plant() -> MusclePlant {
    MusclePlant::new(PlantConfig::reference()).unwrap()
}

fn default_model() -> &'static IntersensoryModel {
    static MODEL: OnceLock<IntersensoryModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let p = plant();
        init_from_geometry(p.geometry(), p.elastic(), &StaticConfig::default()).unwrap()
    })
}

fn random_pose(rng: &mut ChaCha8Rng, cfg: &PlantConfig, margin: f64) -> Vec<f64> {
    cfg.joints
        .iter()
        .map(|j| rng.random_range(j.limits[0] + margin..j.limits[1] - margin))
        .collect()
}

#[test]
fn zero_tension_model_reproduces_geometry() {
    let p = plant();
    let cfg = StaticConfig {
        hidden: vec![32, 32],
        grid: GridSpec {
            f_max: 0.0,
            tensions_per_pose: 1,
            slack_probability: 0.0,
            slack_pose: false,
            ..GridSpec::default()
        },
        train: TrainConfig {
            epochs: 1000,
            ..StaticConfig::default().train
        },
        ..StaticConfig::default()
    };
    let model = init_from_geometry(p.geometry(), p.elastic(), &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let zero = vec![0.0; p.num_muscles()];
    for _ in 0..50 {
        // off-grid poses
        let theta = random_pose(&mut rng, p.config(), 0.0);
        let l = model.infer_command(&theta, &zero).unwrap();
        let geo = p.geometry().geometric_muscle_length(&theta).unwrap();
        for (a, b) in l.iter().zip(&geo) {
            assert!((a - b).abs() < 1e-3, "{theta:?}: {a} vs {b}");
        }
    }
}

#[test]
fn tension_shift_matches_elastic_elongation() {
    let p = plant();
    let model = default_model();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let nm = p.num_muscles();
    for _ in 0..50 {
        let theta = random_pose(&mut rng, p.config(), 0.0);
        let l0 = model.infer_command(&theta, &vec![0.0; nm]).unwrap();
        let l100 = model.infer_command(&theta, &vec![100.0; nm]).unwrap();
        for i in 0..nm {
            // inverse of the quadratic law: sqrt(100 / k2)
            let expected = (100.0 / p.config().muscles[i].k2).sqrt();
            assert!(((l0[i] - l100[i]) - expected).abs() < 1e-3);
        }
    }
}

#[test]
fn neutral_pose_gives_geometric_lengths() {
    let p = plant();
    let neutral = p.config().neutral_pose();
    let l = default_model()
        .infer_command(&neutral, &vec![0.0; p.num_muscles()])
        .unwrap();
    let geo = p.geometry().geometric_muscle_length(&neutral).unwrap();
    for (a, b) in l.iter().zip(&geo) {
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }
}

#[test]
fn more_tension_never_lengthens_the_command() {
    let p = plant();
    let model = default_model();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..30 {
        let theta = random_pose(&mut rng, p.config(), 0.0);
        let base: Vec<f64> = (0..p.num_muscles())
            .map(|_| rng.random_range(0.0..150.0))
            .collect();
        for i in 0..p.num_muscles() {
            let mut f = base.clone();
            let mut prev = None;
            for k in 0..=25 {
                f[i] = 10.0 * k as f64;
                let l = model.infer_command(&theta, &f).unwrap()[i];
                if let Some(prev) = prev {
                    assert!(l - prev <= 1e-4, "muscle {i} grew {} m", l - prev);
                }
                prev = Some(l);
            }
        }
    }
}

#[test]
fn same_seed_gives_identical_model() {
    let p = plant();
    let cfg = StaticConfig {
        hidden: vec![8],
        grid: GridSpec {
            points_per_joint: 3,
            ..GridSpec::default()
        },
        train: TrainConfig {
            epochs: 5,
            ..StaticConfig::default().train
        },
        mse_threshold: 1.0,
        ..StaticConfig::default()
    };
    let a = init_from_geometry(p.geometry(), p.elastic(), &cfg).unwrap();
    let b = init_from_geometry(p.geometry(), p.elastic(), &cfg).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

#[test]
fn unreachable_threshold_reports_the_loss() {
    let p = plant();
    let cfg = StaticConfig {
        hidden: vec![4],
        grid: GridSpec {
            points_per_joint: 3,
            ..GridSpec::default()
        },
        train: TrainConfig {
            epochs: 1,
            ..StaticConfig::default().train
        },
        mse_threshold: 1e-12,
        ..StaticConfig::default()
    };
    let err = init_from_geometry(p.geometry(), p.elastic(), &cfg).unwrap_err();
    assert!(err.to_string().contains("above threshold"), "{err}");
}

/// Equilibrium triples from a body whose `muscle` path is `offset` longer
/// than the nominal one.
fn offset_plant(muscle: usize, offset: f64) -> MusclePlant {
    let mut cfg = PlantConfig::reference();
    cfg.muscles[muscle].length_offset = offset;
    MusclePlant::new(cfg).unwrap()
}

fn probe_set(p: &MusclePlant, seed: u64, n: usize) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let theta = random_pose(&mut rng, p.config(), 0.1);
            let f: Vec<f64> = (0..p.num_muscles())
                .map(|_| rng.random_range(5.0..80.0))
                .collect();
            let s = p.state_at(&theta, &f).unwrap();
            (theta, s.f, s.l)
        })
        .collect()
}

fn mean_error(
    model: &IntersensoryModel,
    probe: &[(Vec<f64>, Vec<f64>, Vec<f64>)],
    muscle: usize,
) -> f64 {
    probe
        .iter()
        .map(|(t, f, l)| (model.infer_command(t, f).unwrap()[muscle] - l[muscle]).abs())
        .sum::<f64>()
        / probe.len() as f64
}

#[test]
fn online_updates_absorb_a_length_offset() {
    let muscle = 2;
    let p = offset_plant(muscle, 5e-3);
    let mut model = default_model().clone();
    let probe = probe_set(&p, 31, 100);
    let before = mean_error(&model, &probe, muscle);
    assert!(before > 3e-3, "{before}");
    for (theta, f, l) in probe_set(&p, 32, 500) {
        model.online_update(&theta, &f, &l).unwrap();
    }
    let after = mean_error(&model, &probe, muscle);
    assert!(after < 1e-3, "before {before}, after {after}");
}

#[test]
fn inference_and_estimation_leave_the_model_untouched() {
    let p = plant();
    let model = default_model();
    let snapshot = model.to_json().unwrap();
    let theta = p.config().neutral_pose();
    let f = vec![30.0; p.num_muscles()];
    let l = model.infer_command(&theta, &f).unwrap();
    let limits = p.config().joints.iter().map(|j| j.limits).collect();
    let est = EkfEstimator::new(
        theta.clone(),
        limits,
        p.num_muscles(),
        &EkfConfig::default(),
    )
    .unwrap();
    ekf_step(&est, model, &l, &f, CONTROL_DT).unwrap();
    assert_eq!(model.to_json().unwrap(), snapshot);
}

#[test]
fn ekf_recovers_the_pose_behind_model_lengths() {
    let p = plant();
    let model = default_model();
    let limits: Vec<[f64; 2]> = p.config().joints.iter().map(|j| j.limits).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..20 {
        let theta = random_pose(&mut rng, p.config(), 0.15);
        let f: Vec<f64> = (0..p.num_muscles())
            .map(|_| rng.random_range(10.0..60.0))
            .collect();
        let l = model.infer_command(&theta, &f).unwrap();
        let start: Vec<f64> = theta
            .iter()
            .map(|t| t + rng.random_range(-0.1..0.1))
            .collect();
        let mut est = EkfEstimator::new(
            start,
            limits.clone(),
            p.num_muscles(),
            &EkfConfig::default(),
        )
        .unwrap();
        for _ in 0..50 {
            est = ekf_step(&est, model, &l, &f, CONTROL_DT).unwrap();
        }
        for (a, b) in est.theta_est.iter().zip(&theta) {
            assert!((a - b).abs() < 0.02, "{:?} vs {theta:?}", est.theta_est);
        }
    }
}

pub fn sinusoid(t: f64) -> Vec<f64> {
    let w = 2.0 * std::f64::consts::PI * 0.3;
    vec![
        0.4 * (w * t).sin(),
        0.2 + 0.4 * (1.3 * w * t).sin(),
        0.2 + 0.2 * (w * t).sin(),
    ]
}

fn ekf_rmse(mode: ObservationMode) -> f64 {
    let p = plant();
    let model = default_model().clone();
    let neutral = p.config().neutral_pose();
    let reflex = ReflexConfig::reference(p.num_muscles(), p.num_joints());
    let mut rig = Rig::new(
        p.clone(),
        model.clone(),
        &reflex,
        RigOptions::default(),
        &neutral,
    )
    .unwrap();
    let limits = p.config().joints.iter().map(|j| j.limits).collect();
    let cfg = EkfConfig {
        mode,
        ..EkfConfig::default()
    };
    let mut est = EkfEstimator::new(neutral, limits, p.num_muscles(), &cfg).unwrap();
    let noise = Normal::new(0.0, 5e-4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let (mut se, mut n) = (0.0, 0);
    for k in 0..500 {
        let tick = rig.tick(&sinusoid(k as f64 * CONTROL_DT)).unwrap();
        let l: Vec<f64> = tick.l.iter().map(|v| v + noise.sample(&mut rng)).collect();
        est = ekf_step(&est, &model, &l, &tick.f, CONTROL_DT).unwrap();
        if tick.t > 1.0 {
            for (a, b) in est.theta_est.iter().zip(&tick.theta) {
                se += (a - b) * (a - b);
                n += 1;
            }
        }
    }
    (se / n as f64).sqrt()
}

#[test]
fn ekf_tracks_a_sinusoid_under_length_noise() {
    let rmse = ekf_rmse(ObservationMode::Absolute);
    assert!(rmse < 0.05, "rmse {rmse}");
}

#[test]
fn incremental_ekf_stays_bounded() {
    let rmse = ekf_rmse(ObservationMode::Incremental);
    assert!(rmse.is_finite() && rmse < 0.3, "rmse {rmse}");
}
