//! Declarative layer stacks and their parameters.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DiscError, Result};
use crate::nn::conv::{conv2d_backward_cached, conv2d_forward_cached};
use crate::nn::{
    conv_output_size, fully_connected_backward, fully_connected_forward, lrn_backward,
    lrn_forward, maxpool_backward, maxpool_forward, relu_backward, relu_forward, LrnParams,
    PoolIndices,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    MaxPool {
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Lrn(LrnParams),
    FullyConnected {
        outputs: usize,
    },
}

impl LayerSpec {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::Conv {
            out_channels,
            kernel,
            stride,
            pad,
        }
    }

    pub fn pool(kernel: usize, stride: usize, pad: usize) -> Self {
        LayerSpec::MaxPool {
            kernel,
            stride,
            pad,
        }
    }

    fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::FullyConnected { .. })
    }

    /// Output shape for `input`, or an error when the layer does not fit.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let spatial = || match input {
            &[c, h, w] => Ok((c, h, w)),
            _ => Err(DiscError::Shape(format!("{self:?} needs a C×H×W input, got {input:?}"))),
        };
        Ok(match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
            } => {
                let (_, h, w) = spatial()?;
                vec![
                    out_channels,
                    conv_output_size(h, kernel, stride, pad)?,
                    conv_output_size(w, kernel, stride, pad)?,
                ]
            }
            LayerSpec::MaxPool { kernel, stride, pad } => {
                let (c, h, w) = spatial()?;
                if pad >= kernel {
                    return Err(DiscError::Shape(format!(
                        "pooling pad {pad} must be smaller than kernel {kernel}"
                    )));
                }
                vec![
                    c,
                    conv_output_size(h, kernel, stride, pad)?,
                    conv_output_size(w, kernel, stride, pad)?,
                ]
            }
            LayerSpec::Relu | LayerSpec::Lrn(_) => input.to_vec(),
            LayerSpec::FullyConnected { outputs } => vec![outputs],
        })
    }

    /// Weight and bias shapes for parameterized layers.
    fn param_shapes(&self, input: &[usize]) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                ..
            } => vec![vec![out_channels, input[0], kernel, kernel], vec![out_channels]],
            LayerSpec::FullyConnected { outputs } => {
                vec![vec![outputs, input.iter().product()], vec![outputs]]
            }
            _ => vec![],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    /// `[channels, height, width]`.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Shapes after every layer; fails on the first layer that does not fit.
    pub fn shape_chain(&self) -> Result<Vec<Vec<usize>>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut cur = self.input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = layer.output_shape(&cur).map_err(|e| {
                DiscError::Shape(format!("{} layer {i} ({layer:?}): {e}", self.name))
            })?;
            shapes.push(cur.clone());
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.shape_chain()?.pop().unwrap_or_else(|| self.input.to_vec()))
    }

    /// `(name, shape)` of every parameter tensor in forward order.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let chain = self.shape_chain()?;
        let mut out = Vec::new();
        let mut cur = self.input.to_vec();
        let (mut n_conv, mut n_fc) = (0, 0);
        for (layer, next) in self.layers.iter().zip(chain) {
            if layer.has_params() {
                let base = match layer {
                    LayerSpec::Conv { .. } => {
                        n_conv += 1;
                        format!("conv{n_conv}")
                    }
                    _ => {
                        n_fc += 1;
                        format!("fc{n_fc}")
                    }
                };
                let [w, b]: [Vec<usize>; 2] = layer.param_shapes(&cur).try_into().expect("two tensors");
                out.push((format!("{base}.weight"), w));
                out.push((format!("{base}.bias"), b));
            }
            cur = next;
        }
        Ok(out)
    }
}

/// How initial weights are drawn; biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Init {
    /// Zero-mean Gaussian with a fixed standard deviation.
    Gaussian { std: f64 },
    /// Zero-mean Gaussian with `std = sqrt(2 / fan_in)`.
    FanIn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub tensor: Tensor,
}

enum Cache {
    Conv { input: Tensor, cols: Vec<f64> },
    Relu { input: Tensor },
    Pool { indices: PoolIndices },
    Lrn { input: Tensor },
    Fc { input: Tensor },
}

/// Intermediate values of one forward pass, consumed by [`Network::backward`].
pub struct ForwardTrace {
    caches: Vec<Cache>,
}

/// A validated layer stack with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<NamedTensor>,
}

impl Network {
    pub fn init(spec: NetworkSpec, init: Init, rng: &mut impl Rng) -> Result<Self> {
        let shapes = spec.param_shapes()?;
        let mut params = Vec::with_capacity(shapes.len());
        for (name, shape) in shapes {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".bias") {
                vec![0.0; n]
            } else {
                let std = match init {
                    Init::Gaussian { std } => std,
                    Init::FanIn => (2.0 / shape[1..].iter().product::<usize>() as f64).sqrt(),
                };
                let normal = Normal::new(0.0, std)
                    .map_err(|e| DiscError::InvalidArgument(format!("init std {std}: {e}")))?;
                (0..n).map(|_| normal.sample(rng)).collect()
            };
            params.push(NamedTensor {
                name,
                tensor: Tensor::new(shape, data)?,
            });
        }
        Ok(Network { spec, params })
    }

    /// Rebuilds a network from stored parameters, checking names and shapes.
    pub fn from_parts(spec: NetworkSpec, params: Vec<NamedTensor>) -> Result<Self> {
        let shapes = spec.param_shapes()?;
        if shapes.len() != params.len() {
            return Err(DiscError::Checkpoint(format!(
                "{} expects {} parameter tensors, found {}",
                spec.name,
                shapes.len(),
                params.len()
            )));
        }
        for ((name, shape), p) in shapes.iter().zip(&params) {
            if *name != p.name || shape != p.tensor.shape() {
                return Err(DiscError::Checkpoint(format!(
                    "expected {name} {shape:?}, found {} {:?}",
                    p.name,
                    p.tensor.shape()
                )));
            }
            p.tensor.check_finite(&p.name)?;
        }
        Ok(Network { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[NamedTensor] {
        &self.params
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.tensor.clone()).collect()
    }

    pub fn set_tensors(&mut self, tensors: Vec<Tensor>) -> Result<()> {
        if tensors.len() != self.params.len() {
            return Err(DiscError::Shape("parameter count changed".into()));
        }
        for (p, t) in self.params.iter_mut().zip(tensors) {
            t.expect_shape(p.tensor.shape())?;
            p.tensor = t;
        }
        Ok(())
    }

    pub fn with_tensors<R>(&mut self, f: impl FnOnce(&mut [Tensor]) -> R) -> R {
        let mut ts = self.tensors();
        let out = f(&mut ts);
        for (p, t) in self.params.iter_mut().zip(ts) {
            p.tensor = t;
        }
        out
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.run(input, false)?.0)
    }

    /// Forward pass that keeps what the backward pass needs.
    pub fn forward_trace(&self, input: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        self.run(input, true)
    }

    fn run(&self, input: &Tensor, keep: bool) -> Result<(Tensor, ForwardTrace)> {
        input.expect_shape(&self.spec.input)?;
        let mut x = input.clone();
        let mut caches = Vec::new();
        let mut p = 0;
        for layer in &self.spec.layers {
            let (y, cache) = match *layer {
                LayerSpec::Conv { stride, pad, .. } => {
                    let (w, b) = (&self.params[p].tensor, &self.params[p + 1].tensor);
                    p += 2;
                    let (y, cols) = conv2d_forward_cached(&x, w, b, stride, pad)?;
                    (y, Cache::Conv { input: x, cols })
                }
                LayerSpec::Relu => (relu_forward(&x), Cache::Relu { input: x }),
                LayerSpec::MaxPool { kernel, stride, pad } => {
                    let (y, indices) = maxpool_forward(&x, kernel, stride, pad)?;
                    (y, Cache::Pool { indices })
                }
                LayerSpec::Lrn(params) => (lrn_forward(&x, &params)?, Cache::Lrn { input: x }),
                LayerSpec::FullyConnected { .. } => {
                    let (w, b) = (&self.params[p].tensor, &self.params[p + 1].tensor);
                    p += 2;
                    (fully_connected_forward(&x, w, b)?, Cache::Fc { input: x })
                }
            };
            y.check_finite(&self.spec.name)?;
            if keep {
                caches.push(cache);
            }
            x = y;
        }
        Ok((x, ForwardTrace { caches }))
    }

    /// Parameter gradients (same order as [`Network::params`]) for `output_grad`.
    pub fn backward(&self, trace: ForwardTrace, output_grad: &Tensor) -> Result<Vec<Tensor>> {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.params.len()];
        let mut p = self.params.len();
        let mut g = output_grad.clone();
        let n = self.spec.layers.len();
        for (idx, (layer, cache)) in self.spec.layers.iter().zip(trace.caches).enumerate().rev() {
            let first = idx == 0;
            g = match (layer, cache) {
                (LayerSpec::Conv { stride, pad, .. }, Cache::Conv { input, cols }) => {
                    p -= 2;
                    let w = &self.params[p].tensor;
                    let mut lg = conv2d_backward_cached(&input, w, *stride, *pad, &g, &cols, !first)?;
                    grads[p + 1] = lg.param_grads.pop();
                    grads[p] = lg.param_grads.pop();
                    lg.input_grad
                }
                (LayerSpec::Relu, Cache::Relu { input }) => relu_backward(&input, &g)?,
                (LayerSpec::MaxPool { .. }, Cache::Pool { indices }) => maxpool_backward(&indices, &g)?,
                (LayerSpec::Lrn(params), Cache::Lrn { input }) => lrn_backward(&input, params, &g)?,
                (LayerSpec::FullyConnected { .. }, Cache::Fc { input }) => {
                    p -= 2;
                    let mut lg = fully_connected_backward(&input, &self.params[p].tensor, &g)?;
                    grads[p + 1] = lg.param_grads.pop();
                    grads[p] = lg.param_grads.pop();
                    lg.input_grad
                }
                _ => {
                    return Err(DiscError::Shape(format!(
                        "trace does not match layer {idx} of {n}"
                    )))
                }
            };
            g.check_finite("gradient")?;
        }
        grads
            .into_iter()
            .map(|g| g.ok_or_else(|| DiscError::Shape("missing parameter gradient".into())))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_spec() -> NetworkSpec {
        NetworkSpec {
            name: "tiny".into(),
            input: [2, 9, 9],
            layers: vec![
                LayerSpec::conv(3, 3, 2, 1),
                LayerSpec::Relu,
                LayerSpec::pool(3, 1, 1),
                LayerSpec::Lrn(LrnParams {
                    size: 3,
                    k: 1.0,
                    alpha: 0.1,
                    beta: 0.75,
                }),
                LayerSpec::conv(2, 3, 1, 0),
                LayerSpec::Relu,
                LayerSpec::FullyConnected { outputs: 4 },
            ],
        }
    }

    #[test]
    fn chain_and_param_names() {
        let spec = tiny_spec();
        let chain = spec.shape_chain().unwrap();
        assert_eq!(chain[0], vec![3, 5, 5]);
        assert_eq!(chain[4], vec![2, 3, 3]);
        assert_eq!(chain.last().unwrap(), &vec![4]);
        let names: Vec<String> = spec.param_shapes().unwrap().into_iter().map(|p| p.0).collect();
        assert_eq!(names, ["conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias", "fc1.weight", "fc1.bias"]);
    }

    #[test]
    fn broken_chain_is_reported() {
        let mut spec = tiny_spec();
        spec.layers.insert(5, LayerSpec::conv(2, 7, 1, 0));
        assert!(spec.shape_chain().is_err());
    }

    #[test]
    fn whole_stack_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let net = Network::init(tiny_spec(), Init::Gaussian { std: 0.5 }, &mut rng).unwrap();
        let x = Tensor::new(vec![2, 9, 9], (0..162).map(|i| ((i * 31) % 17) as f64 / 8.0 - 1.0).collect()).unwrap();
        let probe = Tensor::from_vec(vec![0.3, -1.0, 0.7, 0.2]);
        let (_, trace) = net.forward_trace(&x).unwrap();
        let grads = net.backward(trace, &probe).unwrap();
        for (k, g) in grads.iter().enumerate() {
            let mut n2 = net.clone();
            let r = grad_check(
                |v| {
                    n2.params[k].tensor = Tensor::new(g.shape().to_vec(), v.to_vec()).unwrap();
                    n2.forward(&x).unwrap().dot(&probe)
                },
                net.params[k].tensor.data(),
                g.data(),
                1e-6,
                1e-4,
            );
            // isolated ReLU/max kinks can flip under the nudge; require near-total agreement
            let bad = r
                .numeric
                .iter()
                .zip(g.data())
                .filter(|(n, a)| crate::nn::relative_error(**a, **n) > 1e-4)
                .count();
            assert!(bad == 0, "{}: {r:?}", net.params[k].name);
        }
    }

    #[test]
    fn from_parts_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Network::init(tiny_spec(), Init::FanIn, &mut rng).unwrap();
        assert!(Network::from_parts(tiny_spec(), net.params.clone()).is_ok());
        let mut bad = net.params.clone();
        bad.pop();
        assert!(Network::from_parts(tiny_spec(), bad).is_err());
    }
}
