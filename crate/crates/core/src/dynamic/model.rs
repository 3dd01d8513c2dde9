use serde::{Deserialize, Serialize};

use super::{Dataset, DynamicsError, SequenceModel};
use crate::nn::{self, FeatureScale, Mlp, ModelDocument, Sample, ScaledNetwork, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsTrainConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Trailing share of the windows kept out of training.
    pub holdout_fraction: f64,
    /// Largest accepted held-out one-step rms error, in task units.
    pub rms_threshold: f64,
}

impl Default for DynamicsTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            train: TrainConfig {
                learning_rate: 0.05,
                batch_size: 16,
                epochs: 60,
                seed: 0,
            },
            holdout_fraction: 0.2,
            rms_threshold: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Final normalized training loss.
    pub loss: f64,
    pub one_step_rms: f64,
    pub horizon_rms: f64,
    pub train_windows: usize,
    pub holdout_windows: usize,
}

/// Network from `(s0, u_1..u_N)` to the task states after each command.
/// It learns the change from the initial task state, which is added back on
/// prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    net: ScaledNetwork,
    horizon: usize,
    state_dim: usize,
    report: Option<TrainReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsDocument {
    #[serde(rename = "N")]
    pub horizon: usize,
    pub state_dim: usize,
    pub network: ModelDocument,
    #[serde(default)]
    pub report: Option<TrainReport>,
}

fn sample(s0: &[f64], u: &[f64], observed: &[f64]) -> Sample {
    let input = s0.iter().chain(u).copied().collect();
    let target = observed.iter().map(|v| v - s0[0]).collect();
    Sample::new(input, target)
}

fn rms(errors: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in errors {
        sum += e * e;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Fits a [`DynamicsModel`] to `data`. The last `holdout_fraction` of the
/// windows (minus one horizon of overlap) is used only for the error check.
pub fn train_dynamics(
    data: &Dataset,
    cfg: &DynamicsTrainConfig,
) -> Result<DynamicsModel, DynamicsError> {
    if data.is_empty() {
        return Err(DynamicsError::EmptyDataset("no windows to train on".into()));
    }
    if !(0.0..1.0).contains(&cfg.holdout_fraction) {
        return Err(DynamicsError::InvalidConfig(
            "holdout_fraction must be in [0, 1)".into(),
        ));
    }
    let n = data.horizon;
    let dim = data.state_dim();
    if dim == 0 {
        return Err(DynamicsError::InvalidConfig(
            "initial state is empty".into(),
        ));
    }
    for w in &data.windows {
        if w.initial.len() != dim || w.commands.len() != n || w.observed.len() != n {
            return Err(DynamicsError::Dimension {
                what: "rollout window",
                expected: dim + 2 * n,
                got: w.initial.len() + w.commands.len() + w.observed.len(),
            });
        }
        if w.initial
            .iter()
            .chain(&w.commands)
            .chain(&w.observed)
            .any(|v| !v.is_finite())
        {
            return Err(DynamicsError::NonFinite("rollout window"));
        }
    }

    let total = data.len();
    let split = ((1.0 - cfg.holdout_fraction) * total as f64).round() as usize;
    let split = split.clamp(1, total);
    let train_windows = &data.windows[..split];
    let holdout = data.windows.get(split + n..).unwrap_or(&[]);

    let samples: Vec<Sample> = train_windows
        .iter()
        .map(|w| sample(&w.initial, &w.commands, &w.observed))
        .collect();
    let input_scale = FeatureScale::covering(samples.iter().map(|s| s.input.as_slice()), 0.05)?;
    let output_scale = FeatureScale::covering(samples.iter().map(|s| s.target.as_slice()), 0.05)?;
    let mut sizes = vec![dim + n];
    sizes.extend(&cfg.hidden);
    sizes.push(n);
    let scaled = ScaledNetwork::new(
        Mlp::seeded(&sizes, cfg.train.seed)?,
        input_scale,
        output_scale,
        cfg.train.seed,
    )?;
    let normalized: Vec<Sample> = samples.iter().map(|s| scaled.normalize_sample(s)).collect();
    let mut net = scaled.net.clone();
    nn::train(&mut net, &normalized, &cfg.train)?;
    let loss = nn::mse(&net, &normalized)?;

    let mut model = DynamicsModel {
        net: ScaledNetwork { net, ..scaled },
        horizon: n,
        state_dim: dim,
        report: None,
    };
    let eval = if holdout.is_empty() {
        train_windows
    } else {
        holdout
    };
    let mut preds = Vec::with_capacity(eval.len());
    for w in eval {
        preds.push(model.predict(&w.initial, &w.commands)?);
    }
    let one_step_rms = rms(eval.iter().zip(&preds).map(|(w, p)| p[0] - w.observed[0]));
    let horizon_rms = rms(eval
        .iter()
        .zip(&preds)
        .flat_map(|(w, p)| p.iter().zip(&w.observed).map(|(a, b)| a - b)));
    if !(one_step_rms <= cfg.rms_threshold) {
        return Err(DynamicsError::Training {
            loss,
            one_step_rms,
            horizon_rms,
            threshold: cfg.rms_threshold,
        });
    }
    model.report = Some(TrainReport {
        loss,
        one_step_rms,
        horizon_rms,
        train_windows: train_windows.len(),
        holdout_windows: holdout.len(),
    });
    Ok(model)
}

impl DynamicsModel {
    pub fn report(&self) -> Option<&TrainReport> {
        self.report.as_ref()
    }

    pub fn network(&self) -> &ScaledNetwork {
        &self.net
    }

    pub fn to_document(&self) -> DynamicsDocument {
        DynamicsDocument {
            horizon: self.horizon,
            state_dim: self.state_dim,
            network: self.net.to_document(),
            report: self.report,
        }
    }

    pub fn to_json(&self) -> Result<String, DynamicsError> {
        serde_json::to_string_pretty(&self.to_document()).map_err(|e| DynamicsError::Net(e.into()))
    }

    pub fn from_document(doc: DynamicsDocument) -> Result<Self, DynamicsError> {
        let net = ScaledNetwork::from_document(doc.network)?;
        if net.input_dim() != doc.state_dim + doc.horizon || net.output_dim() != doc.horizon {
            return Err(DynamicsError::Dimension {
                what: "dynamics network",
                expected: doc.state_dim + doc.horizon,
                got: net.input_dim(),
            });
        }
        Ok(Self {
            net,
            horizon: doc.horizon,
            state_dim: doc.state_dim,
            report: doc.report,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, DynamicsError> {
        let doc = serde_json::from_str(text).map_err(|e| DynamicsError::Net(e.into()))?;
        Self::from_document(doc)
    }

    fn input(&self, s0: &[f64], u: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        if s0.len() != self.state_dim {
            return Err(DynamicsError::Dimension {
                what: "initial state",
                expected: self.state_dim,
                got: s0.len(),
            });
        }
        if u.len() != self.horizon {
            return Err(DynamicsError::Dimension {
                what: "command sequence",
                expected: self.horizon,
                got: u.len(),
            });
        }
        if s0.iter().chain(u).any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite("model input"));
        }
        Ok(s0.iter().chain(u).copied().collect())
    }
}

impl SequenceModel for DynamicsModel {
    fn horizon(&self) -> usize {
        self.horizon
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn predict(&self, s0: &[f64], u: &[f64]) -> Result<Vec<f64>, DynamicsError> {
        let x = self.input(s0, u)?;
        let dv = self.net.forward(&x)?;
        Ok(dv.iter().map(|d| s0[0] + d).collect())
    }

    fn command_gradient(
        &self,
        s0: &[f64],
        u: &[f64],
        dl_ds: &[f64],
    ) -> Result<Vec<f64>, DynamicsError> {
        let x = self.input(s0, u)?;
        let g = self.net.input_gradient(&x, dl_ds)?;
        Ok(g[self.state_dim..].to_vec())
    }
}
