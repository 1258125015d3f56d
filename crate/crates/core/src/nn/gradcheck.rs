//! Central finite-difference checks of the analytic backward passes, in f64.

use rand::Rng;

use super::{CoopDense, Layer, ModelParams, ParamArray, Tensor, Trainable};
use crate::channel::RngStream;
use crate::error::{Error, Result};

/// Finite-difference step.
pub const FD_EPS: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|)`, or the absolute difference when both are
/// below 1e-7.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// Entries of magnitude in [0.05, 1) with random sign, away from the
/// rectifier kink.
pub fn random_tensor(shape: Vec<usize>, rng: &mut impl Rng) -> Result<Tensor<f64>> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) { v } else { -v }
        })
        .collect();
    Tensor::new(shape, data)
}

fn zero_grads(arrays: Vec<ParamArray<f64>>) -> Vec<ParamArray<f64>> {
    arrays.into_iter().map(|a| ParamArray { values: vec![0.0; a.values.len()], dims: a.dims }).collect()
}

/// Worst relative error over the input and every parameter of `layer` for
/// the projection `<layer(x), r>` with random `x` and `r`.
pub fn layer_error(layer: &Layer<f64>, input_shape: &[usize], seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed, 0);
    let mut layer = layer.clone();
    if let Layer::PRelu(p) = &mut layer {
        for s in &mut p.slopes {
            *s = rng.random_range(0.05..0.5);
        }
    }
    let x = random_tensor(input_shape.to_vec(), &mut rng)?;
    let r = random_tensor(layer.output_shape(x.shape())?, &mut rng)?;
    let projected = |l: &Layer<f64>, x: &Tensor<f64>| -> Result<f64> {
        Ok(l.forward(x)?.data().iter().zip(r.data()).map(|(a, b)| a * b).sum())
    };
    let mut grads = zero_grads(layer.param_arrays());
    let gx = layer.backward(&x, &r, &mut grads, false, true)?.ok_or_else(|| Error::invalid("no input gradient"))?;

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data_mut()[i] += FD_EPS;
        xm.data_mut()[i] -= FD_EPS;
        let fd = (projected(&layer, &xp)? - projected(&layer, &xm)?) / (2.0 * FD_EPS);
        worst = worst.max(rel_err(gx.data()[i], fd));
    }
    let arrays = layer.param_arrays();
    for (ai, a) in arrays.iter().enumerate() {
        for j in 0..a.values.len() {
            let (mut plus, mut minus) = (arrays.clone(), arrays.clone());
            plus[ai].values[j] += FD_EPS;
            minus[ai].values[j] -= FD_EPS;
            let (mut lp, mut lm) = (layer.clone(), layer.clone());
            lp.set_param_arrays(&plus)?;
            lm.set_param_arrays(&minus)?;
            let fd = (projected(&lp, &x)? - projected(&lm, &x)?) / (2.0 * FD_EPS);
            worst = worst.max(rel_err(grads[ai].values[j], fd));
        }
    }
    Ok(worst)
}

/// Same check for the two-input cooperative layer, over both inputs and its
/// parameters.
pub fn coop_dense_error(layer: &CoopDense<f64>, inputs: usize, seed: u64) -> Result<f64> {
    let mut rng = RngStream::new(seed, 0);
    let y = random_tensor(vec![inputs], &mut rng)?.into_data();
    let m = random_tensor(vec![inputs], &mut rng)?.into_data();
    let outputs = layer.forward(&y, &m)?.len();
    let r = random_tensor(vec![outputs], &mut rng)?.into_data();
    let f = |l: &CoopDense<f64>, y: &[f64], m: &[f64]| -> Result<f64> {
        Ok(l.forward(y, m)?.data().iter().zip(&r).map(|(a, b)| a * b).sum())
    };
    let mut grads = zero_grads(layer.param_arrays());
    let (gy, gm) = layer.backward(&y, &m, &r, &mut grads);
    let mut worst = 0.0f64;
    for i in 0..inputs {
        let (mut yp, mut ym) = (y.clone(), y.clone());
        yp[i] += FD_EPS;
        ym[i] -= FD_EPS;
        worst = worst.max(rel_err(gy[i], (f(layer, &yp, &m)? - f(layer, &ym, &m)?) / (2.0 * FD_EPS)));
        let (mut mp, mut mm) = (m.clone(), m.clone());
        mp[i] += FD_EPS;
        mm[i] -= FD_EPS;
        worst = worst.max(rel_err(gm[i], (f(layer, &y, &mp)? - f(layer, &y, &mm)?) / (2.0 * FD_EPS)));
    }
    let arrays = layer.param_arrays();
    for (ai, a) in arrays.iter().enumerate() {
        for j in 0..a.values.len() {
            let (mut p, mut q) = (arrays.clone(), arrays.clone());
            p[ai].values[j] += FD_EPS;
            q[ai].values[j] -= FD_EPS;
            let (mut lp, mut lq) = (layer.clone(), layer.clone());
            lp.set_param_arrays(&p)?;
            lq.set_param_arrays(&q)?;
            worst = worst.max(rel_err(grads[ai].values[j], (f(&lp, &y, &m)? - f(&lq, &y, &m)?) / (2.0 * FD_EPS)));
        }
    }
    Ok(worst)
}

/// Worst relative error of `analytic` against central differences of `loss`
/// over every parameter of `model`. Parameters whose analytic gradient is
/// exactly zero and whose difference quotient is below 1e-12 count as exact.
pub fn params_error<M: Trainable<f64> + Clone>(
    model: &M,
    analytic: &ModelParams<f64>,
    mut loss: impl FnMut(&M) -> Result<f64>,
) -> Result<f64> {
    let base = model.params();
    base.check_layout(analytic)?;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for (ai, arr) in base.arrays.iter().enumerate() {
        for vi in 0..arr.values.len() {
            let mut q = base.clone();
            q.arrays[ai].values[vi] += FD_EPS;
            probe.set_params(&q)?;
            let lp = loss(&probe)?;
            q.arrays[ai].values[vi] -= 2.0 * FD_EPS;
            probe.set_params(&q)?;
            let lm = loss(&probe)?;
            let fd = (lp - lm) / (2.0 * FD_EPS);
            let g = analytic.arrays[ai].values[vi];
            if g == 0.0 && fd.abs() < 1e-12 {
                continue;
            }
            worst = worst.max(rel_err(g, fd));
        }
    }
    Ok(worst)
}
