//! Differentiable model descriptions and their graph builders.

use dair_autodiff::{GraphBuilder, NodeId, ParamSet, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DIGIT_SIDE;
use crate::error::TrainError;

/// Model family. The convolutional classifier is the fixed digit pipeline:
/// conv 4x4x6 + ReLU, 2x2 max pool, conv 4x4x16 + ReLU, 2x2 max pool,
/// conv 4x4x96 + ReLU, dense 64 + ReLU, dense `classes`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// `x -> x w`, no intercept; matches the toy regressors exactly.
    Linear { dim: usize },
    /// Same map read as a single logit.
    Logistic { dim: usize },
    /// Fully connected net; `layers` lists input, hidden, and output sizes.
    Mlp { layers: Vec<usize> },
    /// The small digit CNN; `classes = 1` reads the output as one logit.
    ConvNet { in_channels: usize, classes: usize },
}

impl ModelSpec {
    /// Number of raw model outputs per sample.
    pub fn output_dim(&self) -> usize {
        match self {
            ModelSpec::Linear { .. } | ModelSpec::Logistic { .. } => 1,
            ModelSpec::Mlp { layers } => *layers.last().expect("mlp has layers"),
            ModelSpec::ConvNet { classes, .. } => *classes,
        }
    }

    /// Per-sample feature shape the model consumes.
    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            ModelSpec::Linear { dim } | ModelSpec::Logistic { dim } => vec![*dim],
            ModelSpec::Mlp { layers } => vec![layers[0]],
            ModelSpec::ConvNet { in_channels, .. } => {
                vec![DIGIT_SIDE, DIGIT_SIDE, *in_channels]
            }
        }
    }

    /// Layer names and shapes, in declaration order.
    fn layout(&self) -> Vec<(String, Vec<usize>)> {
        match self {
            ModelSpec::Linear { dim } | ModelSpec::Logistic { dim } => {
                vec![("w".into(), vec![*dim, 1])]
            }
            ModelSpec::Mlp { layers } => {
                let mut out = Vec::new();
                for (i, pair) in layers.windows(2).enumerate() {
                    out.push((format!("fc{}.w", i + 1), vec![pair[0], pair[1]]));
                    out.push((format!("fc{}.b", i + 1), vec![pair[1]]));
                }
                out
            }
            ModelSpec::ConvNet { in_channels, classes } => vec![
                ("conv1.w".into(), vec![4, 4, *in_channels, 6]),
                ("conv1.b".into(), vec![6]),
                ("conv2.w".into(), vec![4, 4, 6, 16]),
                ("conv2.b".into(), vec![16]),
                ("conv3.w".into(), vec![4, 4, 16, 96]),
                ("conv3.b".into(), vec![96]),
                ("fc1.w".into(), vec![96, 64]),
                ("fc1.b".into(), vec![64]),
                ("fc2.w".into(), vec![64, *classes]),
                ("fc2.b".into(), vec![*classes]),
            ],
        }
    }

    /// Uniform init in +-sqrt(1/fan_in) per layer, drawn in declaration
    /// order from the given stream. Biases use their owning layer's fan-in.
    pub fn init_params(&self, rng: &mut ChaCha8Rng) -> ParamSet {
        let mut params = ParamSet::new();
        let mut last_fan_in = 1usize;
        for (name, shape) in self.layout() {
            let fan_in = match shape.len() {
                // conv kernels [kh, kw, c_in, c_out]
                4 => shape[0] * shape[1] * shape[2],
                // dense weights [i, o]
                2 => shape[0],
                // bias vectors follow their weights in layout order
                _ => last_fan_in,
            };
            last_fan_in = fan_in;
            let bound = (1.0 / fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            params
                .insert(name, Tensor::new(shape, data).expect("init tensor"))
                .expect("unique layer names");
        }
        params
    }

    /// Declares this model's parameters on the graph, returning the node
    /// handles in layout order.
    pub fn declare_params(&self, g: &mut GraphBuilder) -> Result<Vec<NodeId>, TrainError> {
        let mut nodes = Vec::new();
        for (name, shape) in self.layout() {
            nodes.push(g.param(name, shape)?);
        }
        Ok(nodes)
    }

    /// Builds the forward map from a batched input `x` to raw outputs
    /// `[n, output_dim]`, reusing previously declared parameter nodes.
    pub fn forward(
        &self,
        g: &mut GraphBuilder,
        params: &[NodeId],
        x: NodeId,
        batch: usize,
    ) -> Result<NodeId, TrainError> {
        match self {
            ModelSpec::Linear { .. } | ModelSpec::Logistic { .. } => {
                Ok(g.dense(x, params[0], None)?)
            }
            ModelSpec::Mlp { layers } => {
                let mut h = x;
                let n_layers = layers.len() - 1;
                for i in 0..n_layers {
                    let w = params[2 * i];
                    let b = params[2 * i + 1];
                    h = g.dense(h, w, Some(b))?;
                    if i + 1 < n_layers {
                        h = g.relu(h);
                    }
                }
                Ok(h)
            }
            ModelSpec::ConvNet { .. } => {
                let c1 = g.conv2d(x, params[0], params[1])?;
                let r1 = g.relu(c1);
                let p1 = g.max_pool2(r1)?;
                let c2 = g.conv2d(p1, params[2], params[3])?;
                let r2 = g.relu(c2);
                let p2 = g.max_pool2(r2)?;
                let c3 = g.conv2d(p2, params[4], params[5])?;
                let r3 = g.relu(c3);
                let flat = g.reshape(r3, vec![batch, 96])?;
                let f1 = g.dense(flat, params[6], Some(params[7]))?;
                let rf = g.relu(f1);
                Ok(g.dense(rf, params[8], Some(params[9]))?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from;
    use dair_autodiff::forward;

    #[test]
    fn convnet_pipeline_dimensions() {
        let model = ModelSpec::ConvNet {
            in_channels: 3,
            classes: 10,
        };
        let mut g = GraphBuilder::new();
        let params = model.declare_params(&mut g).unwrap();
        let x = g.input("x", vec![2, 28, 28, 3]).unwrap();
        let out = model.forward(&mut g, &params, x, 2).unwrap();
        let graph = g.finish(out);

        let mut rng = rng_from(0);
        let p = model.init_params(&mut rng);
        assert_eq!(
            p.total_len(),
            (4 * 4 * 3 * 6 + 6) + (4 * 4 * 6 * 16 + 16) + (4 * 4 * 16 * 96 + 96)
                + (96 * 64 + 64) + (64 * 10 + 10)
        );
        let xv = Tensor::zeros(&[2, 28, 28, 3]);
        let (y, _) = forward(&graph, &[("x", &xv)], &p).unwrap();
        assert_eq!(y.shape(), &[2, 10]);
    }

    #[test]
    fn init_is_seed_deterministic_and_bounded() {
        let model = ModelSpec::Mlp {
            layers: vec![4, 8, 2],
        };
        let a = model.init_params(&mut rng_from(5));
        let b = model.init_params(&mut rng_from(5));
        assert_eq!(a, b);
        let bound = (1.0f64 / 4.0).sqrt();
        // bias bound follows fc1's fan-in too
        for v in a.get("fc1.w").unwrap().data() {
            assert!(v.abs() <= bound);
        }
    }
}
