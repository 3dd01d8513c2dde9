//! Minibatch SGD on mean-squared error.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mlp, NetError};

/// One supervised pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Sample {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self { input, target }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            batch_size: 16,
            epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(NetError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

fn check_dataset(net: &Mlp, data: &[Sample]) -> Result<(), NetError> {
    if data.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    for s in data {
        if s.input.len() != net.input_dim() {
            return Err(NetError::InputDimension {
                expected: net.input_dim(),
                got: s.input.len(),
            });
        }
        if s.target.len() != net.output_dim() {
            return Err(NetError::OutputDimension {
                expected: net.output_dim(),
                got: s.target.len(),
            });
        }
    }
    Ok(())
}

/// Mean over samples and output components of the squared residual.
pub fn mse(net: &Mlp, data: &[Sample]) -> Result<f64, NetError> {
    check_dataset(net, data)?;
    let mut total = 0.0;
    for s in data {
        let y = net.forward(&s.input)?;
        total += y
            .iter()
            .zip(&s.target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    Ok(total / (data.len() * net.output_dim()) as f64)
}

/// Gradient accumulators shaped like a network's parameters.
pub(crate) struct GradBuffer {
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl GradBuffer {
    pub(crate) fn for_net(net: &Mlp) -> Self {
        Self {
            weights: (0..net.num_layers())
                .map(|l| vec![0.0; net.weights(l).len()])
                .collect(),
            biases: (0..net.num_layers())
                .map(|l| vec![0.0; net.biases(l).len()])
                .collect(),
        }
    }

    fn zero(&mut self) {
        self.weights
            .iter_mut()
            .chain(&mut self.biases)
            .for_each(|v| v.fill(0.0));
    }
}

/// Runs one SGD step on `batch` and returns the batch MSE measured before the step.
pub(crate) fn sgd_step(net: &mut Mlp, batch: &[&Sample], lr: f64, buf: &mut GradBuffer) -> f64 {
    let m = net.output_dim() as f64;
    let n = batch.len() as f64;
    buf.zero();
    let mut loss = 0.0;
    let mut dl_dy = vec![0.0; net.output_dim()];
    for s in batch {
        let trace = net.trace(&s.input);
        for ((d, y), t) in dl_dy.iter_mut().zip(trace.output()).zip(&s.target) {
            let r = y - t;
            loss += r * r;
            *d = 2.0 * r / m;
        }
        net.backward(
            &trace,
            &dl_dy,
            Some((&mut buf.weights, &mut buf.biases, 1.0 / n)),
            false,
        );
    }
    net.apply_step(&buf.weights, &buf.biases, lr);
    loss / (n * m)
}

/// Fits `net` to `data` and returns the per-epoch training loss.
///
/// Entry `e` is the sample-weighted mean of the minibatch losses seen during
/// epoch `e`, each measured just before its update.
pub fn train(net: &mut Mlp, data: &[Sample], cfg: &TrainConfig) -> Result<Vec<f64>, NetError> {
    cfg.validate()?;
    check_dataset(net, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch: Vec<&Sample> = Vec::with_capacity(cfg.batch_size);
    let mut buf = GradBuffer::for_net(net);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &data[i]));
            epoch_loss += sgd_step(net, &batch, cfg.learning_rate, &mut buf) * chunk.len() as f64;
        }
        history.push(epoch_loss / data.len() as f64);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit_gives_zero_history() {
        let mut net = Mlp::from_parts(vec![1, 1], vec![vec![2.0]], vec![vec![1.0]]).unwrap();
        let data = vec![Sample::new(vec![3.0], vec![7.0])];
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 1,
            ..Default::default()
        };
        let hist = train(&mut net, &data, &cfg).unwrap();
        assert_eq!(hist, vec![0.0; 5]);
    }

    #[test]
    fn linear_target_is_fit() {
        let data: Vec<Sample> = (0..100)
            .map(|i| {
                let x = -1.0 + 2.0 * i as f64 / 99.0;
                Sample::new(vec![x], vec![2.0 * x])
            })
            .collect();
        let mut net = Mlp::seeded(&[1, 1], 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 10,
            epochs: 500,
            seed: 2,
        };
        let hist = train(&mut net, &data, &cfg).unwrap();
        assert_eq!(hist.len(), 500);
        assert!(mse(&net, &data).unwrap() < 1e-6);
        assert!(hist.last().unwrap() <= hist.first().unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let data: Vec<Sample> = (0..40)
            .map(|i| {
                let x = i as f64 / 40.0;
                Sample::new(vec![x, 1.0 - x], vec![(3.0 * x).sin()])
            })
            .collect();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            batch_size: 8,
            epochs: 20,
            seed: 9,
        };
        let mut a = Mlp::seeded(&[2, 8, 1], 4).unwrap();
        let mut b = a.clone();
        let ha = train(&mut a, &data, &cfg).unwrap();
        let hb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut net = Mlp::seeded(&[2, 1], 0).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&mut net, &[], &cfg),
            Err(NetError::EmptyDataset)
        ));
        let bad = vec![Sample::new(vec![1.0], vec![1.0])];
        assert!(train(&mut net, &bad, &cfg).is_err());
        let zero_batch = TrainConfig {
            batch_size: 0,
            ..cfg
        };
        let ok = vec![Sample::new(vec![1.0, 0.0], vec![1.0])];
        assert!(train(&mut net, &ok, &zero_batch).is_err());
    }
}
