//! Synthetic desk-scale datasets.

use rand::Rng;

use crate::data::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::matrix::BatchMatrix;

#[derive(Debug, Clone)]
pub enum SyntheticSpec {
    /// Binary vectors: random prototypes with per-bit flip noise; the
    /// label is the prototype index.
    PrototypeMixture {
        n_features: usize,
        n_prototypes: usize,
        flip_prob: f64,
        n_samples: usize,
    },
    /// Two interleaved half-circles with additive noise.
    TwoMoons { n_samples: usize, noise: f64 },
    /// 2-D points labeled by a random hyperplane, with all points at
    /// signed distance at least `margin` from it.
    LinearlySeparable { n_samples: usize, margin: f64 },
}

pub fn make_synthetic<R: Rng>(spec: &SyntheticSpec, rng: &mut R) -> Result<Dataset> {
    match *spec {
        SyntheticSpec::PrototypeMixture {
            n_features,
            n_prototypes,
            flip_prob,
            n_samples,
        } => {
            if n_features == 0 || n_prototypes == 0 {
                return Err(Error::InvalidParameter(
                    "prototype mixture needs positive dimensions".into(),
                ));
            }
            if !(0.0..=0.5).contains(&flip_prob) {
                return Err(Error::InvalidParameter(format!(
                    "flip probability must be in [0, 0.5], got {flip_prob}"
                )));
            }
            let prototypes: Vec<Vec<f64>> = (0..n_prototypes)
                .map(|_| {
                    (0..n_features)
                        .map(|_| if rng.gen::<f64>() < 0.5 { 0.0 } else { 1.0 })
                        .collect()
                })
                .collect();
            let mut data = Vec::with_capacity(n_samples * n_features);
            let mut labels = Vec::with_capacity(n_samples);
            for _ in 0..n_samples {
                let k = rng.gen_range(0..n_prototypes);
                labels.push(k);
                for &bit in &prototypes[k] {
                    let flipped = if rng.gen::<f64>() < flip_prob {
                        1.0 - bit
                    } else {
                        bit
                    };
                    data.push(flipped);
                }
            }
            Dataset::new(
                BatchMatrix::from_vec(n_samples, n_features, data)?,
                Some(labels),
                FeatureKind::Binary,
                "prototype-mixture",
            )
        }
        SyntheticSpec::TwoMoons { n_samples, noise } => {
            let mut data = Vec::with_capacity(n_samples * 2);
            let mut labels = Vec::with_capacity(n_samples);
            for i in 0..n_samples {
                let theta = rng.gen::<f64>() * std::f64::consts::PI;
                let (x, y, label) = if i % 2 == 0 {
                    (theta.cos(), theta.sin(), 0)
                } else {
                    (1.0 - theta.cos(), 0.5 - theta.sin(), 1)
                };
                data.push(x + noise * (rng.gen::<f64>() - 0.5));
                data.push(y + noise * (rng.gen::<f64>() - 0.5));
                labels.push(label);
            }
            Dataset::new(
                BatchMatrix::from_vec(n_samples, 2, data)?,
                Some(labels),
                FeatureKind::Real,
                "two-moons",
            )
        }
        SyntheticSpec::LinearlySeparable { n_samples, margin } => {
            if !(0.0..1.0).contains(&margin) {
                return Err(Error::InvalidParameter(format!(
                    "margin must be in [0, 1), got {margin}"
                )));
            }
            let angle = rng.gen::<f64>() * std::f64::consts::TAU;
            let normal = [angle.cos(), angle.sin()];
            let mut data = Vec::with_capacity(n_samples * 2);
            let mut labels = Vec::with_capacity(n_samples);
            let mut produced = 0;
            while produced < n_samples {
                let x = rng.gen::<f64>() * 2.0 - 1.0;
                let y = rng.gen::<f64>() * 2.0 - 1.0;
                let dist = normal[0] * x + normal[1] * y;
                if dist.abs() < margin {
                    continue;
                }
                data.push(x);
                data.push(y);
                labels.push(usize::from(dist > 0.0));
                produced += 1;
            }
            Dataset::new(
                BatchMatrix::from_vec(n_samples, 2, data)?,
                Some(labels),
                FeatureKind::Real,
                "linearly-separable",
            )
        }
    }
}
