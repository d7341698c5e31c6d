use crate::{Layer, Tensor};

/// Max pooling with implicit `-inf` padding.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> Self {
        Self {
            kernel,
            stride,
            padding,
            cache: None,
        }
    }

    fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    /// Returns the pooled tensor and, per output element, the flat input index of its max.
    fn pool(&self, x: &Tensor) -> (Tensor, Vec<usize>) {
        let (n, c, h, w) = x.dims4();
        let (oh, ow) = self.out_size(h, w);
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        let mut argmax = vec![0usize; n * c * oh * ow];
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = base;
                    for ki in 0..self.kernel {
                        let iy = (oy * self.stride + ki) as isize - self.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kj in 0..self.kernel {
                            let ix = (ox * self.stride + kj) as isize - self.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let idx = base + iy as usize * w + ix as usize;
                            // strict comparison keeps the first max on ties
                            if x.data()[idx] > best {
                                best = x.data()[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = (plane * oh + oy) * ow + ox;
                    out.data_mut()[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        (out, argmax)
    }
}

impl Layer for MaxPool2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        self.pool(x).0
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let (out, argmax) = self.pool(x);
        self.cache = Some((argmax, x.shape().to_vec()));
        out
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let (argmax, shape) = self.cache.take().expect("max pool backward without forward_train");
        let mut grad_in = Tensor::zeros(&shape);
        for (g, &idx) in grad_out.data().iter().zip(&argmax) {
            grad_in.data_mut()[idx] += g;
        }
        grad_in
    }
}

/// Non-overlapping average pooling (`kernel == stride`, no padding).
#[derive(Debug, Clone)]
pub struct AvgPool2d {
    pub kernel: usize,
    input_shape: Option<Vec<usize>>,
}

impl AvgPool2d {
    pub fn new(kernel: usize) -> Self {
        Self {
            kernel,
            input_shape: None,
        }
    }
}

impl Layer for AvgPool2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        let (n, c, h, w) = x.dims4();
        let k = self.kernel;
        let (oh, ow) = (h / k, w / k);
        let norm = 1.0 / (k * k) as f64;
        let mut out = Tensor::zeros(&[n, c, oh, ow]);
        for plane in 0..n * c {
            let src = &x.data()[plane * h * w..(plane + 1) * h * w];
            let dst = &mut out.data_mut()[plane * oh * ow..(plane + 1) * oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ki in 0..k {
                        let row = &src[(oy * k + ki) * w + ox * k..(oy * k + ki) * w + ox * k + k];
                        acc += row.iter().sum::<f64>();
                    }
                    dst[oy * ow + ox] = acc * norm;
                }
            }
        }
        out
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        self.input_shape = Some(x.shape().to_vec());
        self.forward(x)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let shape = self
            .input_shape
            .take()
            .expect("avg pool backward without forward_train");
        let mut grad_in = Tensor::zeros(&shape);
        let (n, c, h, w) = grad_in.dims4();
        let k = self.kernel;
        let (oh, ow) = (h / k, w / k);
        let norm = 1.0 / (k * k) as f64;
        for plane in 0..n * c {
            let src = &grad_out.data()[plane * oh * ow..(plane + 1) * oh * ow];
            let dst = &mut grad_in.data_mut()[plane * h * w..(plane + 1) * h * w];
            for y in 0..oh * k {
                for x in 0..ow * k {
                    dst[y * w + x] = src[(y / k) * ow + x / k] * norm;
                }
            }
        }
        grad_in
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_pool_halves_with_padding_and_routes_gradient() {
        let x = Tensor::from_vec(&[1, 1, 4, 4], (0..16).map(f64::from).collect()).unwrap();
        let mut pool = MaxPool2d::new(3, 2, 1);
        let y = pool.forward_train(&x);
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[5.0, 7.0, 13.0, 15.0]);
        let g = pool.backward(&Tensor::full(&[1, 1, 2, 2], 1.0));
        assert_eq!(g.sum(), 4.0);
        assert_eq!(g.data()[15], 1.0);
    }

    #[test]
    fn avg_pool_forward_and_backward() {
        let x = Tensor::from_vec(&[1, 1, 2, 4], vec![1.0, 3.0, 0.0, 0.0, 5.0, 7.0, 4.0, 4.0]).unwrap();
        let mut pool = AvgPool2d::new(2);
        assert_eq!(pool.forward_train(&x).data(), &[4.0, 2.0]);
        let g = pool.backward(&Tensor::from_vec(&[1, 1, 1, 2], vec![4.0, 8.0]).unwrap());
        assert_eq!(g.data(), &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
    }
}
