use std::f64::consts::PI;

use ndarray::Array2;

use super::Real;
use crate::ellicell::Ray;

/// Raw inputs per ray: origin, direction, color.
pub const RAY_INPUTS: usize = 9;
pub const DEFAULT_FREQUENCIES: usize = 6;

pub fn encoded_len(dim: usize, frequencies: usize) -> usize {
    dim * (1 + 2 * frequencies)
}

/// Fourier features: `x` followed, per component, by
/// `sin(2^k π x), cos(2^k π x)` for `k = 0..frequencies`.
pub fn positional_encoding(x: &[f64], frequencies: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(encoded_len(x.len(), frequencies));
    encode_into(x, frequencies, |v| out.push(v));
    out
}

fn encode_into(x: &[f64], frequencies: usize, mut emit: impl FnMut(f64)) {
    x.iter().for_each(|v| emit(*v));
    for v in x {
        let mut f = PI;
        for _ in 0..frequencies {
            let (s, c) = (f * v).sin_cos();
            emit(s);
            emit(c);
            f *= 2.0;
        }
    }
}

/// Encoded network input, one row per ray.
pub fn encode_rays<'a, T: Real>(rays: impl ExactSizeIterator<Item = &'a Ray>, frequencies: usize) -> Array2<T> {
    let n = rays.len();
    let width = encoded_len(RAY_INPUTS, frequencies);
    let mut data = Vec::with_capacity(n * width);
    for r in rays {
        encode_into(&r.features(), frequencies, |v| data.push(T::from(v).unwrap()));
    }
    Array2::from_shape_vec((n, width), data).expect("encoded width")
}
