//! Layer types with explicit forward and backward passes.
//!
//! Parameter layout per layer, in order:
//! - `Conv2d`: weight `[out, in, k, k]`, bias `[out]`
//! - `Dense`: weight `[out, in]`, bias `[out]`
//! - `PRelu`: slopes `[channels]`
//! - `Upsample2x`, `Reshape`: none

use rand::Rng;
use rand_distr::StandardNormal;

use super::params::ParamArray;
use super::tensor::{axpy, dot, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

pub const PRELU_INIT_SLOPE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Parametric rectifier with one learned negative slope per channel. The
/// input is viewed as `[channels, rest]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PRelu<T> {
    pub slopes: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv2d(Conv2d<T>),
    Dense(Dense<T>),
    PRelu(PRelu<T>),
    /// Nearest-neighbour upsampling of `[c, h, w]` by two.
    Upsample2x,
    Reshape(Vec<usize>),
}

fn gaussian_vec<T: Scalar>(n: usize, std: f64, rng: &mut impl Rng) -> Vec<T> {
    (0..n).map(|_| lit(rng.sample::<f64, _>(StandardNormal) * std)).collect()
}

impl<T: Scalar> Layer<T> {
    /// 3x3 convolution with padding 1 and He-normal weights.
    pub fn conv3x3(in_channels: usize, out_channels: usize, stride: usize, rng: &mut impl Rng) -> Self {
        let fan_in = in_channels * 9;
        Layer::Conv2d(Conv2d {
            in_channels,
            out_channels,
            kernel: 3,
            stride,
            padding: 1,
            weight: gaussian_vec(out_channels * fan_in, (2.0 / fan_in as f64).sqrt(), rng),
            bias: vec![T::zero(); out_channels],
        })
    }

    pub fn dense(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Layer::Dense(Dense {
            inputs,
            outputs,
            weight: gaussian_vec(inputs * outputs, (2.0 / inputs as f64).sqrt(), rng),
            bias: vec![T::zero(); outputs],
        })
    }

    pub fn prelu(channels: usize) -> Self {
        Layer::PRelu(PRelu { slopes: vec![lit(PRELU_INIT_SLOPE); channels] })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Dense(_) => "dense",
            Layer::PRelu(_) => "prelu",
            Layer::Upsample2x => "upsample2x",
            Layer::Reshape(_) => "reshape",
        }
    }

    pub fn param_arrays(&self) -> Vec<ParamArray<T>> {
        match self {
            Layer::Conv2d(c) => vec![
                ParamArray {
                    dims: vec![c.out_channels, c.in_channels, c.kernel, c.kernel],
                    values: c.weight.clone(),
                },
                ParamArray { dims: vec![c.out_channels], values: c.bias.clone() },
            ],
            Layer::Dense(d) => vec![
                ParamArray { dims: vec![d.outputs, d.inputs], values: d.weight.clone() },
                ParamArray { dims: vec![d.outputs], values: d.bias.clone() },
            ],
            Layer::PRelu(p) => vec![ParamArray { dims: vec![p.slopes.len()], values: p.slopes.clone() }],
            Layer::Upsample2x | Layer::Reshape(_) => vec![],
        }
    }

    pub fn array_count(&self) -> usize {
        match self {
            Layer::Conv2d(_) | Layer::Dense(_) => 2,
            Layer::PRelu(_) => 1,
            Layer::Upsample2x | Layer::Reshape(_) => 0,
        }
    }

    /// Overwrites this layer's parameters; `arrays` must match
    /// [`Layer::param_arrays`] in count and dimensions.
    pub fn set_param_arrays(&mut self, arrays: &[ParamArray<T>]) -> Result<()> {
        let expected = self.param_arrays();
        if arrays.len() != expected.len() || arrays.iter().zip(&expected).any(|(a, e)| a.dims != e.dims) {
            return Err(Error::invalid(format!("parameter layout mismatch for {} layer", self.kind())));
        }
        match self {
            Layer::Conv2d(c) => {
                c.weight.clone_from(&arrays[0].values);
                c.bias.clone_from(&arrays[1].values);
            }
            Layer::Dense(d) => {
                d.weight.clone_from(&arrays[0].values);
                d.bias.clone_from(&arrays[1].values);
            }
            Layer::PRelu(p) => p.slopes.clone_from(&arrays[0].values),
            Layer::Upsample2x | Layer::Reshape(_) => {}
        }
        Ok(())
    }

    /// Output shape for an input of shape `input`.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Conv2d(c) => {
                let [ch, h, w] = dims3(input)?;
                if ch != c.in_channels {
                    return Err(Error::invalid(format!("conv expects {} channels, got {ch}", c.in_channels)));
                }
                Ok(vec![c.out_channels, c.out_dim(h), c.out_dim(w)])
            }
            Layer::Dense(d) => {
                let n: usize = input.iter().product();
                if n != d.inputs {
                    return Err(Error::invalid(format!("dense expects {} inputs, got {n}", d.inputs)));
                }
                Ok(vec![d.outputs])
            }
            Layer::PRelu(p) => {
                let n: usize = input.iter().product();
                if n % p.slopes.len() != 0 {
                    return Err(Error::invalid("prelu channel count does not divide input"));
                }
                Ok(input.to_vec())
            }
            Layer::Upsample2x => {
                let [c, h, w] = dims3(input)?;
                Ok(vec![c, 2 * h, 2 * w])
            }
            Layer::Reshape(shape) => {
                if shape.iter().product::<usize>() != input.iter().product::<usize>() {
                    return Err(Error::invalid(format!("cannot reshape {input:?} to {shape:?}")));
                }
                Ok(shape.clone())
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let out_shape = self.output_shape(x.shape())?;
        match self {
            Layer::Conv2d(c) => {
                let [_, h, w] = dims3(x.shape())?;
                let (oh, ow) = (out_shape[1], out_shape[2]);
                let cols = c.im2col(x.data(), h, w, oh, ow);
                let plane = oh * ow;
                let kk = c.in_channels * c.kernel * c.kernel;
                let mut out = vec![T::zero(); c.out_channels * plane];
                for (oc, o) in out.chunks_exact_mut(plane).enumerate() {
                    o.fill(c.bias[oc]);
                    let wrow = &c.weight[oc * kk..(oc + 1) * kk];
                    for (j, &wv) in wrow.iter().enumerate() {
                        axpy(wv, &cols[j * plane..(j + 1) * plane], o);
                    }
                }
                Tensor::new(out_shape, out)
            }
            Layer::Dense(d) => {
                let xs = x.data();
                let out = (0..d.outputs)
                    .map(|o| d.bias[o] + dot(&d.weight[o * d.inputs..(o + 1) * d.inputs], xs))
                    .collect();
                Tensor::new(out_shape, out)
            }
            Layer::PRelu(p) => {
                let per = x.len() / p.slopes.len();
                let out = x
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| if v > T::zero() { v } else { p.slopes[i / per] * v })
                    .collect();
                Tensor::new(out_shape, out)
            }
            Layer::Upsample2x => {
                let [c, h, w] = dims3(x.shape())?;
                let xs = x.data();
                let mut out = Vec::with_capacity(4 * xs.len());
                for ch in 0..c {
                    for y in 0..2 * h {
                        let row = &xs[(ch * h + y / 2) * w..(ch * h + y / 2 + 1) * w];
                        for &v in row {
                            out.push(v);
                            out.push(v);
                        }
                    }
                }
                Tensor::new(out_shape, out)
            }
            Layer::Reshape(_) => x.clone().reshaped(out_shape),
        }
    }

    /// Back-propagates `gy` (gradient w.r.t. this layer's output for input
    /// `x`). Parameter gradients are accumulated into `grads` unless
    /// `frozen`; the input gradient is returned when `need_input_grad`.
    pub fn backward(
        &self,
        x: &Tensor<T>,
        gy: &Tensor<T>,
        grads: &mut [ParamArray<T>],
        frozen: bool,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Conv2d(c) => {
                let [_, h, w] = dims3(x.shape())?;
                let (oh, ow) = (gy.shape()[1], gy.shape()[2]);
                let plane = oh * ow;
                let kk = c.in_channels * c.kernel * c.kernel;
                let g = gy.data();
                if !frozen {
                    let cols = c.im2col(x.data(), h, w, oh, ow);
                    let (gw, gb) = grads.split_at_mut(1);
                    for oc in 0..c.out_channels {
                        let go = &g[oc * plane..(oc + 1) * plane];
                        gb[0].values[oc] += go.iter().copied().sum::<T>();
                        let gwrow = &mut gw[0].values[oc * kk..(oc + 1) * kk];
                        for (j, gwv) in gwrow.iter_mut().enumerate() {
                            *gwv += dot(go, &cols[j * plane..(j + 1) * plane]);
                        }
                    }
                }
                if !need_input_grad {
                    return Ok(None);
                }
                let mut gcols = vec![T::zero(); kk * plane];
                for oc in 0..c.out_channels {
                    let go = &g[oc * plane..(oc + 1) * plane];
                    let wrow = &c.weight[oc * kk..(oc + 1) * kk];
                    for (j, &wv) in wrow.iter().enumerate() {
                        axpy(wv, go, &mut gcols[j * plane..(j + 1) * plane]);
                    }
                }
                Ok(Some(Tensor::new(x.shape().to_vec(), c.col2im(&gcols, h, w, oh, ow))?))
            }
            Layer::Dense(d) => {
                let xs = x.data();
                let g = gy.data();
                if !frozen {
                    let (gw, gb) = grads.split_at_mut(1);
                    for o in 0..d.outputs {
                        gb[0].values[o] += g[o];
                        axpy(g[o], xs, &mut gw[0].values[o * d.inputs..(o + 1) * d.inputs]);
                    }
                }
                if !need_input_grad {
                    return Ok(None);
                }
                let mut gx = vec![T::zero(); d.inputs];
                for o in 0..d.outputs {
                    axpy(g[o], &d.weight[o * d.inputs..(o + 1) * d.inputs], &mut gx);
                }
                Ok(Some(Tensor::new(x.shape().to_vec(), gx)?))
            }
            Layer::PRelu(p) => {
                let per = x.len() / p.slopes.len();
                let mut gx = Vec::with_capacity(x.len());
                for (i, (&v, &g)) in x.data().iter().zip(gy.data()).enumerate() {
                    if v > T::zero() {
                        gx.push(g);
                    } else {
                        let ch = i / per;
                        if !frozen {
                            grads[0].values[ch] += g * v;
                        }
                        gx.push(p.slopes[ch] * g);
                    }
                }
                Ok(Some(Tensor::new(x.shape().to_vec(), gx)?))
            }
            Layer::Upsample2x => {
                let [c, h, w] = dims3(x.shape())?;
                let g = gy.data();
                let mut gx = vec![T::zero(); c * h * w];
                for ch in 0..c {
                    for y in 0..2 * h {
                        for xx in 0..2 * w {
                            gx[(ch * h + y / 2) * w + xx / 2] += g[(ch * 2 * h + y) * 2 * w + xx];
                        }
                    }
                }
                Ok(Some(Tensor::new(x.shape().to_vec(), gx)?))
            }
            Layer::Reshape(_) => Ok(Some(gy.clone().reshaped(x.shape().to_vec())?)),
        }
    }
}

impl<T: Scalar> Conv2d<T> {
    fn out_dim(&self, n: usize) -> usize {
        (n + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Rows indexed by `(ic, ky, kx)`, columns by output position.
    fn im2col(&self, x: &[T], h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
        let k = self.kernel;
        let plane = oh * ow;
        let mut cols = vec![T::zero(); self.in_channels * k * k * plane];
        for ic in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ic * k + ky) * k + kx) * plane;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let src = (ic * h + iy as usize) * w;
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                cols[row + oy * ow + ox] = x[src + ix as usize];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[T], h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
        let k = self.kernel;
        let plane = oh * ow;
        let mut x = vec![T::zero(); self.in_channels * h * w];
        for ic in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((ic * k + ky) * k + kx) * plane;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = (ic * h + iy as usize) * w;
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < w as isize {
                                x[dst + ix as usize] += cols[row + oy * ow + ox];
                            }
                        }
                    }
                }
            }
        }
        x
    }
}

fn dims3(shape: &[usize]) -> Result<[usize; 3]> {
    match shape {
        [c, h, w] => Ok([*c, *h, *w]),
        _ => Err(Error::invalid(format!("expected a [c, h, w] tensor, got {shape:?}"))),
    }
}
