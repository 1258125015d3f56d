use super::layers::Layer;
use super::params::{ModelParams, ParamArray};
use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use rand::Rng;

/// Ordered layer stack with a per-layer freeze flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential<T> {
    layers: Vec<Layer<T>>,
    frozen: Vec<bool>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        let frozen = vec![false; layers.len()];
        Self { layers, frozen }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn frozen(&self) -> &[bool] {
        &self.frozen
    }

    pub fn set_frozen(&mut self, mask: &[bool]) {
        self.frozen.copy_from_slice(mask);
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.layers.iter().try_fold(input.to_vec(), |s, l| l.output_shape(&s))
    }

    pub fn param_arrays(&self) -> Vec<ParamArray<T>> {
        self.layers.iter().flat_map(|l| l.param_arrays()).collect()
    }

    pub fn array_count(&self) -> usize {
        self.layers.iter().map(Layer::array_count).sum()
    }

    /// Per parameter array, the freeze flag of its layer.
    pub fn frozen_arrays(&self) -> Vec<bool> {
        self.layers
            .iter()
            .zip(&self.frozen)
            .flat_map(|(l, &f)| std::iter::repeat_n(f, l.array_count()))
            .collect()
    }

    pub fn set_param_arrays(&mut self, arrays: &[ParamArray<T>]) -> Result<()> {
        if arrays.len() != self.array_count() {
            return Err(Error::invalid("parameter array count mismatch"));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let n = l.array_count();
            l.set_param_arrays(&arrays[offset..offset + n])?;
            offset += n;
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut cur = x.clone();
        for l in &self.layers {
            cur = l.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Activations `[input, out_1, ..., out_n]`.
    pub fn forward_trace(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for l in &self.layers {
            let next = l.forward(acts.last().expect("non-empty"))?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Back-propagates through the whole stack. `grads` holds this stack's
    /// arrays in layout order.
    pub fn backward(
        &self,
        acts: &[Tensor<T>],
        gy: Tensor<T>,
        grads: &mut [ParamArray<T>],
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut o = 0;
        for l in &self.layers {
            offsets.push(o);
            o += l.array_count();
        }
        let mut g = gy;
        for (i, l) in self.layers.iter().enumerate().rev() {
            let need = need_input_grad || i > 0;
            let slot = &mut grads[offsets[i]..offsets[i] + l.array_count()];
            match l.backward(&acts[i], &g, slot, self.frozen[i], need)? {
                Some(next) => g = next,
                None => return Ok(None),
            }
        }
        Ok(Some(g))
    }
}

/// First decoder layer of the cooperative receiver:
/// `h = W_self y + W_mean ȳ + b`, where `ȳ` is the element-wise mean of all
/// users' received reals. For a single user `ȳ = y`.
///
/// Layout: `W_self [out, in]`, `W_mean [out, in]`, bias `[out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoopDense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub w_self: Vec<T>,
    pub w_mean: Vec<T>,
    pub bias: Vec<T>,
    pub frozen: bool,
}

impl<T: Scalar> CoopDense<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        // Fan-in counts both inputs, halving the He variance.
        let std = (1.0 / inputs as f64).sqrt();
        let mut draw = |n| -> Vec<T> {
            (0..n)
                .map(|_| T::from_f64_lossy(rng.sample::<f64, _>(rand_distr::StandardNormal) * std))
                .collect()
        };
        let w_self = draw(inputs * outputs);
        let w_mean = draw(inputs * outputs);
        Self { inputs, outputs, w_self, w_mean, bias: vec![T::zero(); outputs], frozen: false }
    }

    pub fn param_arrays(&self) -> Vec<ParamArray<T>> {
        vec![
            ParamArray { dims: vec![self.outputs, self.inputs], values: self.w_self.clone() },
            ParamArray { dims: vec![self.outputs, self.inputs], values: self.w_mean.clone() },
            ParamArray { dims: vec![self.outputs], values: self.bias.clone() },
        ]
    }

    pub fn set_param_arrays(&mut self, arrays: &[ParamArray<T>]) -> Result<()> {
        if arrays.len() != 3 || arrays.iter().zip(self.param_arrays()).any(|(a, e)| a.dims != e.dims) {
            return Err(Error::invalid("cooperative layer parameter layout mismatch"));
        }
        self.w_self.clone_from(&arrays[0].values);
        self.w_mean.clone_from(&arrays[1].values);
        self.bias.clone_from(&arrays[2].values);
        Ok(())
    }

    pub fn forward(&self, y: &[T], mean: &[T]) -> Result<Tensor<T>> {
        if y.len() != self.inputs || mean.len() != self.inputs {
            return Err(Error::invalid(format!("cooperative layer expects {} inputs", self.inputs)));
        }
        let out = (0..self.outputs)
            .map(|o| {
                let r = o * self.inputs..(o + 1) * self.inputs;
                self.bias[o] + dot(&self.w_self[r.clone()], y) + dot(&self.w_mean[r], mean)
            })
            .collect();
        Ok(Tensor::vector(out))
    }

    /// Returns `(∂/∂y, ∂/∂ȳ)` and accumulates parameter gradients.
    pub fn backward(&self, y: &[T], mean: &[T], g: &[T], grads: &mut [ParamArray<T>]) -> (Vec<T>, Vec<T>) {
        let mut gy = vec![T::zero(); self.inputs];
        let mut gm = vec![T::zero(); self.inputs];
        for o in 0..self.outputs {
            let r = o * self.inputs..(o + 1) * self.inputs;
            if !self.frozen {
                grads[2].values[o] += g[o];
                axpy(g[o], y, &mut grads[0].values[r.clone()]);
                axpy(g[o], mean, &mut grads[1].values[r.clone()]);
            }
            axpy(g[o], &self.w_self[r.clone()], &mut gy);
            axpy(g[o], &self.w_mean[r], &mut gm);
        }
        (gy, gm)
    }
}

impl<T: Scalar> super::Trainable<T> for Sequential<T> {
    fn params(&self) -> ModelParams<T> {
        ModelParams { arrays: self.param_arrays() }
    }

    fn set_params(&mut self, params: &ModelParams<T>) -> Result<()> {
        self.set_param_arrays(&params.arrays)
    }

    fn frozen_arrays(&self) -> Vec<bool> {
        Sequential::frozen_arrays(self)
    }
}
