//! Parameter initializers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::Tensor;

/// He-normal initialization for a `[out, in, k, k]` conv weight (fan-out mode).
pub fn kaiming_normal<R: Rng + ?Sized>(weight: &mut Tensor, rng: &mut R) {
    let shape = weight.shape();
    let fan_out = shape[0] * shape[2..].iter().product::<usize>();
    let std = (2.0 / fan_out as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("finite std");
    for v in weight.data_mut() {
        *v = normal.sample(rng);
    }
}

/// Fills a `[in, out, k, k]` transposed-conv weight with a separable bilinear
/// interpolation kernel on the channel diagonal (`in == out` channels map
/// one-to-one; off-diagonal entries are zero).
pub fn bilinear(weight: &mut Tensor) {
    let (cin, cout, k, _) = weight.dims4();
    let factor = k.div_ceil(2) as f64;
    let center = if k % 2 == 1 { factor - 1.0 } else { factor - 0.5 };
    let profile: Vec<f64> = (0..k).map(|i| 1.0 - (i as f64 - center).abs() / factor).collect();
    weight.fill(0.0);
    for c in 0..cin.min(cout) {
        let base = (c * cout + c) * k * k;
        for i in 0..k {
            for j in 0..k {
                weight.data_mut()[base + i * k + j] = profile[i] * profile[j];
            }
        }
    }
}
