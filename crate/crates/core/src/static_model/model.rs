use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::StaticError;
use crate::nn::{self, FeatureScale, Mlp, ModelDocument, Sample, ScaledNetwork, TrainConfig};
use crate::plant::{ElasticElementParams, MuscleGeometry};

/// Sampling used to build the initial dataset from the nominal body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Evenly spaced angles per joint, limits included.
    pub points_per_joint: usize,
    /// Random tension vectors drawn per grid pose.
    pub tensions_per_pose: usize,
    /// Largest sampled tension [N]; 0 gives slack-only data. Tensions are
    /// drawn as `f_max * u^2`, `u` uniform, so the steep low-tension end of
    /// the elastic curve is well covered.
    pub f_max: f64,
    /// Chance that a muscle in a random draw is left slack.
    pub slack_probability: f64,
    /// Adds one all-slack sample per grid pose.
    pub slack_pose: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points_per_joint: 7,
            tensions_per_pose: 6,
            f_max: 250.0,
            slack_probability: 0.1,
            slack_pose: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineConfig {
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Share of each batch taken from the newest triples.
    pub newest_fraction: f64,
    pub seed: u64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            buffer_capacity: 2000,
            batch_size: 16,
            learning_rate: 0.1,
            newest_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticConfig {
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub grid: GridSpec,
    pub train: TrainConfig,
    /// Required final training MSE in normalized units.
    pub mse_threshold: f64,
    /// Relative padding of the output normalization range.
    pub output_margin: f64,
    #[serde(default)]
    pub online: OnlineConfig,
}

impl Default for StaticConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            grid: GridSpec::default(),
            train: TrainConfig {
                learning_rate: 0.4,
                batch_size: 4,
                epochs: 600,
                seed: 0,
            },
            mse_threshold: 5e-4,
            output_margin: 0.02,
            online: OnlineConfig::default(),
        }
    }
}

/// Learned map `l = h(theta, f)` from joint angles and tensions to actuator
/// lengths, with an online replay buffer.
#[derive(Debug, Clone)]
pub struct IntersensoryModel {
    net: ScaledNetwork,
    num_joints: usize,
    num_muscles: usize,
    online: OnlineConfig,
    buffer: VecDeque<Sample>,
    rng: ChaCha8Rng,
    init_loss: f64,
}

fn joint_grid(geom: &MuscleGeometry, points: usize) -> Vec<Vec<f64>> {
    let nj = geom.num_joints();
    let axes: Vec<Vec<f64>> = (0..nj)
        .map(|j| {
            let [lo, hi] = geom.limits(j);
            if points == 1 {
                vec![0.5 * (lo + hi)]
            } else {
                (0..points)
                    .map(|k| match k {
                        0 => lo,
                        k if k == points - 1 => hi,
                        k => lo + (hi - lo) * k as f64 / (points - 1) as f64,
                    })
                    .collect()
            }
        })
        .collect();
    let total = points.pow(nj as u32);
    (0..total)
        .map(|mut idx| {
            (0..nj)
                .map(|j| {
                    let v = axes[j][idx % points];
                    idx /= points;
                    v
                })
                .collect()
        })
        .collect()
}

/// Length the actuator must be at for a muscle to carry `f` at `theta` on the
/// nominal body.
pub fn nominal_command(
    geom: &MuscleGeometry,
    elastic: &[ElasticElementParams],
    theta: &[f64],
    f: &[f64],
) -> Result<Vec<f64>, StaticError> {
    let geo = geom.geometric_muscle_length(theta)?;
    Ok(geo
        .iter()
        .zip(f)
        .zip(elastic)
        .map(|((g, f), e)| g - if *f > 0.0 { e.elongation(*f) } else { 0.0 })
        .collect())
}

pub fn init_from_geometry(
    geom: &MuscleGeometry,
    elastic: &[ElasticElementParams],
    cfg: &StaticConfig,
) -> Result<IntersensoryModel, StaticError> {
    let (nj, nm) = (geom.num_joints(), geom.num_muscles());
    if elastic.len() != nm {
        return Err(StaticError::Dimension {
            what: "elastic parameters",
            expected: nm,
            got: elastic.len(),
        });
    }
    let g = &cfg.grid;
    if g.points_per_joint == 0
        || !(g.f_max >= 0.0)
        || !(0.0..=1.0).contains(&g.slack_probability)
        || (g.tensions_per_pose == 0 && !g.slack_pose)
    {
        return Err(StaticError::InvalidConfig(
            "grid needs points, f_max >= 0, slack_probability in [0, 1] and some tension samples"
                .into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let mut data = Vec::new();
    for theta in joint_grid(geom, g.points_per_joint) {
        let mut draws: Vec<Vec<f64>> = (0..g.tensions_per_pose)
            .map(|_| {
                (0..nm)
                    .map(|_| {
                        let u: f64 = rng.random();
                        if rng.random_bool(g.slack_probability) {
                            0.0
                        } else {
                            g.f_max * u * u
                        }
                    })
                    .collect()
            })
            .collect();
        if g.slack_pose {
            draws.push(vec![0.0; nm]);
        }
        for f in draws {
            let l = nominal_command(geom, elastic, &theta, &f)?;
            let input = theta.iter().chain(&f).copied().collect();
            data.push(Sample::new(input, l));
        }
    }

    let mut in_min: Vec<f64> = (0..nj).map(|j| geom.limits(j)[0]).collect();
    let mut in_max: Vec<f64> = (0..nj).map(|j| geom.limits(j)[1]).collect();
    in_min.extend(std::iter::repeat_n(0.0, nm));
    in_max.extend(std::iter::repeat_n(g.f_max, nm));
    let input_scale = FeatureScale::covering([in_min.as_slice(), in_max.as_slice()], 0.0)?;
    let output_scale =
        FeatureScale::covering(data.iter().map(|s| s.target.as_slice()), cfg.output_margin)?;

    let mut sizes = vec![nj + nm];
    sizes.extend(&cfg.hidden);
    sizes.push(nm);
    let scaled = ScaledNetwork::new(
        Mlp::seeded(&sizes, cfg.train.seed)?,
        input_scale,
        output_scale,
        cfg.train.seed,
    )?;
    let normalized: Vec<Sample> = data.iter().map(|s| scaled.normalize_sample(s)).collect();
    let mut net = scaled.net.clone();
    nn::train(&mut net, &normalized, &cfg.train)?;
    let loss = nn::mse(&net, &normalized)?;
    if !(loss <= cfg.mse_threshold) {
        return Err(StaticError::InitTraining {
            loss,
            threshold: cfg.mse_threshold,
        });
    }
    Ok(IntersensoryModel {
        net: ScaledNetwork { net, ..scaled },
        num_joints: nj,
        num_muscles: nm,
        rng: ChaCha8Rng::seed_from_u64(cfg.online.seed),
        online: cfg.online.clone(),
        buffer: VecDeque::new(),
        init_loss: loss,
    })
}

impl IntersensoryModel {
    /// Wraps an existing network whose input is `theta ++ f` and output `l`.
    pub fn from_network(
        net: ScaledNetwork,
        num_joints: usize,
        online: OnlineConfig,
    ) -> Result<Self, StaticError> {
        let nm = net.output_dim();
        if net.input_dim() != num_joints + nm {
            return Err(StaticError::Dimension {
                what: "network input",
                expected: num_joints + nm,
                got: net.input_dim(),
            });
        }
        Ok(Self {
            net,
            num_joints,
            num_muscles: nm,
            rng: ChaCha8Rng::seed_from_u64(online.seed),
            online,
            buffer: VecDeque::new(),
            init_loss: f64::NAN,
        })
    }

    pub fn num_joints(&self) -> usize {
        self.num_joints
    }

    pub fn num_muscles(&self) -> usize {
        self.num_muscles
    }

    pub fn network(&self) -> &ScaledNetwork {
        &self.net
    }

    /// Final normalized training MSE from initialization.
    pub fn init_loss(&self) -> f64 {
        self.init_loss
    }

    pub fn buffer(&self) -> &VecDeque<Sample> {
        &self.buffer
    }

    pub fn online_config(&self) -> &OnlineConfig {
        &self.online
    }

    fn input(&self, theta: &[f64], f: &[f64]) -> Result<Vec<f64>, StaticError> {
        if theta.len() != self.num_joints {
            return Err(StaticError::Dimension {
                what: "joint angles",
                expected: self.num_joints,
                got: theta.len(),
            });
        }
        if f.len() != self.num_muscles {
            return Err(StaticError::Dimension {
                what: "tensions",
                expected: self.num_muscles,
                got: f.len(),
            });
        }
        if theta.iter().chain(f).any(|v| !v.is_finite()) {
            return Err(StaticError::NonFinite);
        }
        Ok(theta.iter().chain(f).copied().collect())
    }

    /// Actuator lengths that realize tensions `f_ref` at pose `theta_ref`.
    pub fn infer_command(&self, theta_ref: &[f64], f_ref: &[f64]) -> Result<Vec<f64>, StaticError> {
        let x = self.input(theta_ref, f_ref)?;
        Ok(self.net.forward(&x)?)
    }

    /// Prediction and its Jacobian with respect to the joint angles
    /// (muscles x joints).
    pub fn predict_with_jacobian(
        &self,
        theta: &[f64],
        f: &[f64],
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>), StaticError> {
        let x = self.input(theta, f)?;
        let y = self.net.forward(&x)?;
        let jac = self
            .net
            .input_jacobian(&x)?
            .into_iter()
            .map(|row| row[..self.num_joints].to_vec())
            .collect();
        Ok((y, jac))
    }

    /// Stores a measured triple and takes one SGD step on a batch mixing the
    /// newest triples with uniform draws from the buffer. Returns the batch
    /// loss before the step, in normalized units.
    pub fn online_update(
        &mut self,
        theta: &[f64],
        f: &[f64],
        l: &[f64],
    ) -> Result<f64, StaticError> {
        let x = self.input(theta, f)?;
        if l.len() != self.num_muscles {
            return Err(StaticError::Dimension {
                what: "muscle lengths",
                expected: self.num_muscles,
                got: l.len(),
            });
        }
        if l.iter().any(|v| !v.is_finite()) {
            return Err(StaticError::NonFinite);
        }
        if self.buffer.len() == self.online.buffer_capacity {
            self.buffer.pop_front();
        }
        self.buffer
            .push_back(self.net.normalize_sample(&Sample::new(x, l.to_vec())));

        let n = self.buffer.len();
        let size = self.online.batch_size.max(1);
        let newest = ((size as f64 * self.online.newest_fraction).round() as usize).clamp(1, size);
        let mut batch: Vec<&Sample> = self.buffer.iter().rev().take(newest.min(n)).collect();
        for _ in 0..size - newest {
            batch.push(&self.buffer[self.rng.random_range(0..n)]);
        }
        let mut grads = nn::GradBuffer::for_net(&self.net.net);
        Ok(nn::sgd_step(
            &mut self.net.net,
            &batch,
            self.online.learning_rate,
            &mut grads,
        ))
    }

    /// Persistent form; the replay buffer is not saved.
    pub fn to_document(&self) -> ModelDocument {
        self.net.to_document()
    }

    pub fn to_json(&self) -> Result<String, StaticError> {
        Ok(self.net.to_json()?)
    }

    pub fn from_json(
        text: &str,
        num_joints: usize,
        online: OnlineConfig,
    ) -> Result<Self, StaticError> {
        Self::from_network(ScaledNetwork::from_json(text)?, num_joints, online)
    }
}
