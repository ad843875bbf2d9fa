use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{ParamId, ParamStore, Real, Tensor};

const EMBEDDING_STD: f64 = 0.02;

fn uniform<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-bound..=bound))).collect();
    Tensor::new(shape, data).expect("rank <= 3")
}

/// `[fan_in, fan_out]` weight, uniform in `±1/sqrt(fan_in)`.
pub(crate) fn weight<T: Real>(
    params: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: String,
    fan_in: usize,
    fan_out: usize,
) -> ParamId {
    let bound = 1.0 / (fan_in as f64).sqrt();
    params.add(name, uniform(rng, &[fan_in, fan_out], bound))
}

/// Bias of a layer with `fan_in` inputs, same range as its weight.
pub(crate) fn bias<T: Real>(
    params: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: String,
    fan_in: usize,
    width: usize,
) -> ParamId {
    let bound = 1.0 / (fan_in as f64).sqrt();
    params.add(name, uniform(rng, &[width], bound))
}

pub(crate) fn embedding<T: Real>(
    params: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: String,
    rows: usize,
    width: usize,
) -> ParamId {
    let normal = Normal::new(0.0, EMBEDDING_STD).expect("positive std");
    let data = (0..rows * width).map(|_| T::lit(normal.sample(rng))).collect();
    params.add(name, Tensor::new(&[rows, width], data).expect("rank 2"))
}

/// Layer-norm gain (ones) and bias (zeros).
pub(crate) fn layer_norm<T: Real>(params: &mut ParamStore<T>, prefix: &str, width: usize) -> (ParamId, ParamId) {
    (
        params.add(format!("{prefix}.gain"), Tensor::filled(&[width], T::one())),
        params.add(format!("{prefix}.bias"), Tensor::zeros(&[width])),
    )
}
