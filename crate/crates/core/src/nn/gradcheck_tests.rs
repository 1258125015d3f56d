//! Every layer type against central finite differences.

use super::gradcheck::{coop_dense_error, layer_error, random_tensor};
use super::*;
use crate::channel::RngStream;

const TOL: f64 = 1e-3;

fn check(layer: Layer<f64>, shape: &[usize], seed: u64) {
    let err = layer_error(&layer, shape, seed).unwrap();
    assert!(err <= TOL, "{} layer: max relative error {err}", layer.kind());
}

#[test]
fn conv_stride1_gradients() {
    let mut rng = RngStream::new(1, 1);
    check(Layer::conv3x3(2, 3, 1, &mut rng), &[2, 5, 6], 1);
}

#[test]
fn conv_stride2_gradients() {
    let mut rng = RngStream::new(2, 1);
    check(Layer::conv3x3(2, 4, 2, &mut rng), &[2, 8, 8], 2);
}

#[test]
fn dense_gradients() {
    let mut rng = RngStream::new(3, 1);
    check(Layer::dense(7, 5, &mut rng), &[7], 3);
}

#[test]
fn prelu_gradients() {
    check(Layer::prelu(3), &[3, 4, 4], 4);
    check(Layer::prelu(6), &[6], 5);
}

#[test]
fn upsample_and_reshape_gradients() {
    check(Layer::Upsample2x, &[2, 3, 3], 6);
    check(Layer::Reshape(vec![2, 6]), &[12], 7);
}

#[test]
fn frozen_layer_accumulates_nothing() {
    let mut rng = RngStream::new(8, 1);
    let layer: Layer<f64> = Layer::dense(4, 3, &mut rng);
    let x = random_tensor(vec![4], &mut rng).unwrap();
    let r = random_tensor(vec![3], &mut rng).unwrap();
    let mut grads: Vec<ParamArray<f64>> = layer
        .param_arrays()
        .into_iter()
        .map(|a| ParamArray { values: vec![0.0; a.values.len()], dims: a.dims })
        .collect();
    let gx = layer.backward(&x, &r, &mut grads, true, true).unwrap();
    assert!(gx.is_some());
    assert!(grads.iter().all(|a| a.values.iter().all(|&v| v == 0.0)));
}

#[test]
fn coop_dense_gradients() {
    let mut rng = RngStream::new(9, 1);
    let layer: CoopDense<f64> = CoopDense::new(6, 4, &mut rng);
    let err = coop_dense_error(&layer, 6, 9).unwrap();
    assert!(err <= TOL, "coop dense: {err}");
}
