use crate::{join, Layer, Param, Tensor};

/// Per-channel batch normalization.
///
/// Training mode normalizes with biased batch statistics and folds them into
/// the running estimates (unbiased variance); inference uses the running
/// estimates only.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub weight: Param,
    pub bias: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            weight: Param::new(Tensor::full(&[channels], 1.0)),
            bias: Param::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], 1.0),
            eps: 1e-5,
            momentum: 0.1,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.weight.value.len()
    }

    fn apply(&self, x: &Tensor, mean: &[f64], inv_std: &[f64]) -> (Tensor, Tensor) {
        let (n, c, h, w) = x.dims4();
        let plane = h * w;
        let mut normalized = Tensor::zeros(x.shape());
        let mut out = Tensor::zeros(x.shape());
        let gamma = self.weight.value.data();
        let beta = self.bias.value.data();
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * plane;
                let src = &x.data()[off..off + plane];
                let nrm = &mut normalized.data_mut()[off..off + plane];
                for (d, v) in nrm.iter_mut().zip(src) {
                    *d = (v - mean[ch]) * inv_std[ch];
                }
                let dst = &mut out.data_mut()[off..off + plane];
                for (d, v) in dst.iter_mut().zip(&normalized.data()[off..off + plane]) {
                    *d = gamma[ch] * v + beta[ch];
                }
            }
        }
        (normalized, out)
    }
}

impl Layer for BatchNorm2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        assert_eq!(x.dims4().1, self.channels(), "batch norm channel mismatch");
        let inv_std: Vec<f64> = self
            .running_var
            .data()
            .iter()
            .map(|v| 1.0 / (v + self.eps).sqrt())
            .collect();
        self.apply(x, self.running_mean.data(), &inv_std).1
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dims4();
        assert_eq!(c, self.channels(), "batch norm channel mismatch");
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut acc = 0.0;
            for s in 0..n {
                let off = (s * c + ch) * plane;
                acc += x.data()[off..off + plane].iter().sum::<f64>();
            }
            mean[ch] = acc / count;
            let mut sq = 0.0;
            for s in 0..n {
                let off = (s * c + ch) * plane;
                sq += x.data()[off..off + plane]
                    .iter()
                    .map(|v| (v - mean[ch]).powi(2))
                    .sum::<f64>();
            }
            var[ch] = sq / count;
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let (normalized, out) = self.apply(x, &mean, &inv_std);

        let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
        let m = self.momentum;
        for ch in 0..c {
            let rm = &mut self.running_mean.data_mut()[ch];
            *rm = (1.0 - m) * *rm + m * mean[ch];
            let rv = &mut self.running_var.data_mut()[ch];
            *rv = (1.0 - m) * *rv + m * var[ch] * unbias;
        }
        self.cache = Some(BnCache { normalized, inv_std });
        out
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let BnCache { normalized, inv_std } = self.cache.take().expect("batch norm backward without forward_train");
        let (n, c, h, w) = grad_out.dims4();
        let plane = h * w;
        let count = (n * plane) as f64;
        let mut grad_in = Tensor::zeros(grad_out.shape());
        for ch in 0..c {
            let gamma = self.weight.value.data()[ch];
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for s in 0..n {
                let off = (s * c + ch) * plane;
                for (g, xh) in grad_out.data()[off..off + plane]
                    .iter()
                    .zip(&normalized.data()[off..off + plane])
                {
                    sum_g += g;
                    sum_gx += g * xh;
                }
            }
            self.bias.grad.data_mut()[ch] += sum_g;
            self.weight.grad.data_mut()[ch] += sum_gx;
            let scale = gamma * inv_std[ch] / count;
            for s in 0..n {
                let off = (s * c + ch) * plane;
                let gi = &mut grad_in.data_mut()[off..off + plane];
                for ((d, g), xh) in gi
                    .iter_mut()
                    .zip(&grad_out.data()[off..off + plane])
                    .zip(&normalized.data()[off..off + plane])
                {
                    *d = scale * (count * g - sum_g - xh * sum_gx);
                }
            }
        }
        grad_in
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        f(&join(prefix, "bias"), &mut self.bias);
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f(&join(prefix, "running_mean"), &mut self.running_mean);
        f(&join(prefix, "running_var"), &mut self.running_var);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight.value);
        f(&join(prefix, "bias"), &self.bias.value);
        f(&join(prefix, "running_mean"), &self.running_mean);
        f(&join(prefix, "running_var"), &self.running_var);
    }
}
