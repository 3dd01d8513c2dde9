//! Networks operating in physical units.
//!
//! Inputs and outputs are min-max mapped to `[-1, 1]` per feature; the ranges
//! travel with the network when it is saved.

use serde::{Deserialize, Serialize};

use super::{Mlp, NetError, Sample};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-feature `[min, max]` ranges mapped onto `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScale {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl FeatureScale {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self, NetError> {
        if min.len() != max.len() {
            return Err(NetError::InvalidShape(
                "scale min/max length mismatch".into(),
            ));
        }
        if min
            .iter()
            .zip(&max)
            .any(|(a, b)| !(a.is_finite() && b.is_finite() && b > a))
        {
            return Err(NetError::InvalidConfig(
                "every scale range needs finite min < max".into(),
            ));
        }
        Ok(Self { min, max })
    }

    /// Ranges covering `rows`, each widened by `margin` of its span on both
    /// sides. Degenerate features get a unit span.
    pub fn covering<'a>(
        rows: impl IntoIterator<Item = &'a [f64]>,
        margin: f64,
    ) -> Result<Self, NetError> {
        let mut min: Vec<f64> = Vec::new();
        let mut max: Vec<f64> = Vec::new();
        for row in rows {
            if min.is_empty() {
                min = row.to_vec();
                max = row.to_vec();
                continue;
            }
            if row.len() != min.len() {
                return Err(NetError::InvalidShape("ragged rows".into()));
            }
            for (i, v) in row.iter().enumerate() {
                min[i] = min[i].min(*v);
                max[i] = max[i].max(*v);
            }
        }
        if min.is_empty() {
            return Err(NetError::EmptyDataset);
        }
        for (lo, hi) in min.iter_mut().zip(max.iter_mut()) {
            let span = *hi - *lo;
            if span <= 1e-12 {
                *lo -= 0.5;
                *hi += 0.5;
            } else {
                *lo -= margin * span;
                *hi += margin * span;
            }
        }
        Self::new(min, max)
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// d(normalized)/d(physical) for feature `i`.
    pub fn gain(&self, i: usize) -> f64 {
        2.0 / (self.max[i] - self.min[i])
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, v)| (v - self.min[i]) * self.gain(i) - 1.0)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .enumerate()
            .map(|(i, v)| (v + 1.0) / self.gain(i) + self.min[i])
            .collect()
    }
}

/// An [`Mlp`] wrapped with input and output normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledNetwork {
    pub net: Mlp,
    pub input_scale: FeatureScale,
    pub output_scale: FeatureScale,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input: FeatureScale,
    pub output: FeatureScale,
}

/// Versioned on-disk representation of a [`ScaledNetwork`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub normalization: Normalization,
    pub seed: u64,
}

impl ScaledNetwork {
    pub fn new(
        net: Mlp,
        input_scale: FeatureScale,
        output_scale: FeatureScale,
        seed: u64,
    ) -> Result<Self, NetError> {
        if input_scale.dim() != net.input_dim() || output_scale.dim() != net.output_dim() {
            return Err(NetError::InvalidShape(
                "normalization ranges do not match network dimensions".into(),
            ));
        }
        Ok(Self {
            net,
            input_scale,
            output_scale,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NetError> {
        if x.len() != self.input_dim() {
            return Err(NetError::InputDimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let z = self.net.forward(&self.input_scale.normalize(x))?;
        Ok(self.output_scale.denormalize(&z))
    }

    /// Gradient of `<dl_dy, forward(x)>` w.r.t. the physical input.
    pub fn input_gradient(&self, x: &[f64], dl_dy: &[f64]) -> Result<Vec<f64>, NetError> {
        if x.len() != self.input_dim() {
            return Err(NetError::InputDimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if dl_dy.len() != self.output_dim() {
            return Err(NetError::OutputDimension {
                expected: self.output_dim(),
                got: dl_dy.len(),
            });
        }
        let dz: Vec<f64> = dl_dy
            .iter()
            .enumerate()
            .map(|(i, d)| d / self.output_scale.gain(i))
            .collect();
        let g = self
            .net
            .input_gradient(&self.input_scale.normalize(x), &dz)?;
        Ok(g.iter()
            .enumerate()
            .map(|(i, v)| v * self.input_scale.gain(i))
            .collect())
    }

    /// Physical-unit Jacobian `dy/dx` (outputs x inputs).
    pub fn input_jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, NetError> {
        let rows = self.net.input_jacobian(&self.input_scale.normalize(x))?;
        Ok(rows
            .into_iter()
            .enumerate()
            .map(|(o, row)| {
                let out_gain = self.output_scale.gain(o);
                row.iter()
                    .enumerate()
                    .map(|(i, v)| v * self.input_scale.gain(i) / out_gain)
                    .collect()
            })
            .collect())
    }

    /// Maps a physical-unit sample into the network's normalized space.
    pub fn normalize_sample(&self, s: &Sample) -> Sample {
        Sample::new(
            self.input_scale.normalize(&s.input),
            self.output_scale.normalize(&s.target),
        )
    }

    pub fn to_document(&self) -> ModelDocument {
        let layers = self.net.num_layers();
        ModelDocument {
            version: MODEL_FORMAT_VERSION,
            layer_sizes: self.net.layer_sizes().to_vec(),
            weights: (0..layers).map(|l| self.net.weights(l).to_vec()).collect(),
            biases: (0..layers).map(|l| self.net.biases(l).to_vec()).collect(),
            normalization: Normalization {
                input: self.input_scale.clone(),
                output: self.output_scale.clone(),
            },
            seed: self.seed,
        }
    }

    pub fn from_document(doc: ModelDocument) -> Result<Self, NetError> {
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(NetError::UnsupportedVersion(doc.version));
        }
        let net = Mlp::from_parts(doc.layer_sizes, doc.weights, doc.biases)?;
        Self::new(
            net,
            doc.normalization.input,
            doc.normalization.output,
            doc.seed,
        )
    }

    pub fn to_json(&self) -> Result<String, NetError> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self, NetError> {
        Self::from_document(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_net() -> ScaledNetwork {
        let net = Mlp::seeded(&[2, 4, 3], 17).unwrap();
        ScaledNetwork::new(
            net,
            FeatureScale::new(vec![-1.0, 0.0], vec![1.0, 200.0]).unwrap(),
            FeatureScale::new(vec![0.1, 0.2, 0.3], vec![0.2, 0.4, 0.6]).unwrap(),
            17,
        )
        .unwrap()
    }

    #[test]
    fn covering_pads_degenerate_features() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = FeatureScale::covering(rows.iter().map(Vec::as_slice), 0.0).unwrap();
        assert_eq!(s.min, vec![1.0, 4.5]);
        assert_eq!(s.max, vec![3.0, 5.5]);
    }

    #[test]
    fn rejects_inverted_range() {
        assert!(FeatureScale::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn rejects_unknown_version() {
        let mut doc = sample_net().to_document();
        doc.version = 99;
        assert!(matches!(
            ScaledNetwork::from_document(doc),
            Err(NetError::UnsupportedVersion(99))
        ));
    }

    #[test]
    fn physical_jacobian_matches_finite_differences() {
        let net = sample_net();
        let x = [0.3, 80.0];
        let jac = net.input_jacobian(&x).unwrap();
        for i in 0..2 {
            let h = if i == 0 { 1e-6 } else { 1e-4 };
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let yp = net.forward(&xp).unwrap();
            let ym = net.forward(&xm).unwrap();
            for o in 0..3 {
                let fd = (yp[o] - ym[o]) / (2.0 * h);
                assert!((fd - jac[o][i]).abs() <= 1e-6 * fd.abs().max(1e-6));
            }
        }
    }

    proptest! {
        #[test]
        fn normalization_round_trips(v in -500.0f64..500.0) {
            let s = FeatureScale::new(vec![-3.0], vec![250.0]).unwrap();
            let back = s.denormalize(&s.normalize(&[v]))[0];
            prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(1.0));
        }

        #[test]
        fn json_round_trip_is_exact(seed in any::<u64>()) {
            let net = Mlp::seeded(&[3, 5, 2], seed).unwrap();
            let scaled = ScaledNetwork::new(
                net,
                FeatureScale::new(vec![-1.1, 0.0, 1e-3], vec![0.9, 150.0, 2e-3]).unwrap(),
                FeatureScale::new(vec![0.05, -7.0], vec![0.25, 13.0]).unwrap(),
                seed,
            ).unwrap();
            let back = ScaledNetwork::from_json(&scaled.to_json().unwrap()).unwrap();
            prop_assert_eq!(back, scaled);
        }
    }
}
