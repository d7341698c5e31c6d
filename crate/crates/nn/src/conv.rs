//! 2-D convolution and transposed convolution over NCHW tensors.
//!
//! Both layers lower to im2col / col2im plus a dense matrix product. A
//! transposed convolution is the adjoint of the convolution that maps its
//! output grid back to its input grid, so the two share the same geometry
//! helpers with the roles of forward and backward swapped.

use crate::{join, Layer, NnError, Param, Result, Tensor};

/// Geometry of a convolution sliding over an image of `channels × height × width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_h(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h() * self.out_w()
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

/// Unfolds `img` (`C×H×W`) into `cols` (`C·k·k × Ho·Wo`).
pub fn im2col(img: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let k = g.kernel;
    debug_assert_eq!(cols.len(), g.col_rows() * oh * ow);
    for c in 0..g.channels {
        let plane = &img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= g.height as isize {
                        line.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        *v = if ix < 0 || ix >= g.width as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Folds `cols` back onto `img`, accumulating overlapping contributions.
pub fn col2im(cols: &[f64], g: &ConvGeom, img: &mut [f64]) {
    let (oh, ow) = (g.out_h(), g.out_w());
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut img[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let line = &src[oy * ow..(oy + 1) * ow];
                    for (ox, v) in line.iter().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.width as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// `C = A·B + beta·C` for row-major operands, with optional transposition of
/// the stored A (`k×m`) and B (`n×k`).
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the bounds above cover every element addressed by the strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn check_input(x: &Tensor, channels: usize, what: &str) -> Result<()> {
    if x.shape().len() != 4 || x.shape()[1] != channels {
        return Err(NnError::Shape(format!(
            "{what} expects [N, {channels}, H, W], got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

/// Convolution with weights `[out, in, k, k]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub stride: usize,
    pub padding: usize,
    /// When false, `backward` skips the input gradient and returns zeros
    /// (first layer of a network).
    pub input_grad: bool,
    input: Option<Tensor>,
}

impl Conv2d {
    /// Zero-initialized; callers pick an initializer from [`crate::init`].
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Self {
        Self {
            weight: Param::zeros(&[out_channels, in_channels, kernel, kernel]),
            bias: bias.then(|| Param::zeros(&[out_channels])),
            stride,
            padding,
            input_grad: true,
            input: None,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    fn geom(&self, x: &Tensor) -> ConvGeom {
        let (_, c, h, w) = x.dims4();
        ConvGeom {
            channels: c,
            height: h,
            width: w,
            kernel: self.kernel(),
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn try_forward(&self, x: &Tensor) -> Result<Tensor> {
        check_input(x, self.in_channels(), "conv2d")?;
        let g = self.geom(x);
        if g.height + 2 * g.padding < g.kernel || g.width + 2 * g.padding < g.kernel {
            return Err(NnError::Shape(format!(
                "conv2d kernel {} larger than padded input {}x{}",
                g.kernel, g.height, g.width
            )));
        }
        let n = x.dims4().0;
        let cout = self.out_channels();
        let (oh, ow) = (g.out_h(), g.out_w());
        let mut out = Tensor::zeros(&[n, cout, oh, ow]);
        let mut cols = if g.is_pointwise() {
            Vec::new()
        } else {
            vec![0.0; g.col_rows() * g.col_cols()]
        };
        for s in 0..n {
            let xs = x.sample(s);
            let src: &[f64] = if g.is_pointwise() {
                xs
            } else {
                im2col(xs, &g, &mut cols);
                &cols
            };
            let ys = out.sample_mut(s);
            gemm(
                cout,
                g.col_rows(),
                oh * ow,
                self.weight.value.data(),
                false,
                src,
                false,
                0.0,
                ys,
            );
            if let Some(b) = &self.bias {
                for (co, plane) in ys.chunks_mut(oh * ow).enumerate() {
                    let bv = b.value.data()[co];
                    plane.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        Ok(out)
    }
}

impl Layer for Conv2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        self.try_forward(x).expect("conv2d forward")
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let y = self.forward(x);
        self.input = Some(x.clone());
        y
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let x = self.input.take().expect("conv2d backward without forward_train");
        let g = self.geom(&x);
        let (n, cin, h, w) = x.dims4();
        let cout = self.out_channels();
        let (oh, ow) = (g.out_h(), g.out_w());
        assert_eq!(grad_out.shape(), &[n, cout, oh, ow], "conv2d grad shape");
        let mut grad_in = Tensor::zeros(&[n, cin, h, w]);
        let rows = g.col_rows();
        let mut cols = vec![0.0; rows * oh * ow];
        let mut dcols = vec![0.0; rows * oh * ow];
        for s in 0..n {
            let gy = grad_out.sample(s);
            let src: &[f64] = if g.is_pointwise() {
                x.sample(s)
            } else {
                im2col(x.sample(s), &g, &mut cols);
                &cols
            };
            // dW += dY · colsᵀ
            gemm(
                cout,
                oh * ow,
                rows,
                gy,
                false,
                src,
                true,
                1.0,
                self.weight.grad.data_mut(),
            );
            if let Some(b) = &mut self.bias {
                for (co, plane) in gy.chunks(oh * ow).enumerate() {
                    b.grad.data_mut()[co] += plane.iter().sum::<f64>();
                }
            }
            // dcols = Wᵀ · dY
            if !self.input_grad {
                continue;
            }
            if g.is_pointwise() {
                gemm(
                    rows,
                    cout,
                    oh * ow,
                    self.weight.value.data(),
                    true,
                    gy,
                    false,
                    0.0,
                    grad_in.sample_mut(s),
                );
            } else {
                gemm(
                    rows,
                    cout,
                    oh * ow,
                    self.weight.value.data(),
                    true,
                    gy,
                    false,
                    0.0,
                    &mut dcols,
                );
                col2im(&dcols, &g, grad_in.sample_mut(s));
            }
        }
        grad_in
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight.value);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), &b.value);
        }
    }
}

/// Transposed convolution with weights `[in, out, k, k]`.
///
/// Output size is `(H − 1)·stride − 2·padding + k`; with `k = 2s` and
/// `padding = s/2` this upsamples exactly by `s`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor>,
}

impl ConvTranspose2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
    ) -> Self {
        Self {
            weight: Param::zeros(&[in_channels, out_channels, kernel, kernel]),
            bias: bias.then(|| Param::zeros(&[out_channels])),
            stride,
            padding,
            input: None,
        }
    }

    /// Upsampling by an integer `factor` in the fully-convolutional convention:
    /// kernel `2·factor`, stride `factor`, padding `factor / 2`.
    pub fn upsampling(channels: usize, factor: usize) -> Self {
        assert!(
            factor >= 2 && factor % 2 == 0,
            "upsampling factor must be even, got {factor}"
        );
        Self::new(channels, channels, 2 * factor, factor, factor / 2, false)
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.kernel();
        (
            (h - 1) * self.stride + k - 2 * self.padding,
            (w - 1) * self.stride + k - 2 * self.padding,
        )
    }

    /// Geometry of the adjoint convolution, sliding over the output grid.
    fn geom(&self, h: usize, w: usize) -> ConvGeom {
        let (oh, ow) = self.output_size(h, w);
        ConvGeom {
            channels: self.out_channels(),
            height: oh,
            width: ow,
            kernel: self.kernel(),
            stride: self.stride,
            padding: self.padding,
        }
    }

    pub fn try_forward(&self, x: &Tensor) -> Result<Tensor> {
        check_input(x, self.in_channels(), "conv_transpose2d")?;
        let (n, cin, h, w) = x.dims4();
        if (h - 1) * self.stride + self.kernel() < 2 * self.padding + 1 {
            return Err(NnError::Shape("conv_transpose2d output would be empty".into()));
        }
        let g = self.geom(h, w);
        debug_assert_eq!((g.out_h(), g.out_w()), (h, w));
        let cout = self.out_channels();
        let rows = g.col_rows();
        let mut out = Tensor::zeros(&[n, cout, g.height, g.width]);
        let mut cols = vec![0.0; rows * h * w];
        for s in 0..n {
            // cols = Wᵀ · X, with W viewed as [in, out·k·k]
            gemm(
                rows,
                cin,
                h * w,
                self.weight.value.data(),
                true,
                x.sample(s),
                false,
                0.0,
                &mut cols,
            );
            let ys = out.sample_mut(s);
            col2im(&cols, &g, ys);
            if let Some(b) = &self.bias {
                for (co, plane) in ys.chunks_mut(g.height * g.width).enumerate() {
                    let bv = b.value.data()[co];
                    plane.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        Ok(out)
    }
}

impl Layer for ConvTranspose2d {
    fn forward(&self, x: &Tensor) -> Tensor {
        self.try_forward(x).expect("conv_transpose2d forward")
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let y = self.forward(x);
        self.input = Some(x.clone());
        y
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let x = self
            .input
            .take()
            .expect("conv_transpose2d backward without forward_train");
        let (n, cin, h, w) = x.dims4();
        let g = self.geom(h, w);
        let cout = self.out_channels();
        assert_eq!(
            grad_out.shape(),
            &[n, cout, g.height, g.width],
            "conv_transpose2d grad shape"
        );
        let rows = g.col_rows();
        let mut dcols = vec![0.0; rows * h * w];
        let mut grad_in = Tensor::zeros(&[n, cin, h, w]);
        for s in 0..n {
            let gy = grad_out.sample(s);
            im2col(gy, &g, &mut dcols);
            // dX = W · im2col(dY)
            gemm(
                cin,
                rows,
                h * w,
                self.weight.value.data(),
                false,
                &dcols,
                false,
                0.0,
                grad_in.sample_mut(s),
            );
            // dW += X · im2col(dY)ᵀ
            gemm(
                cin,
                h * w,
                rows,
                x.sample(s),
                false,
                &dcols,
                true,
                1.0,
                self.weight.grad.data_mut(),
            );
            if let Some(b) = &mut self.bias {
                for (co, plane) in gy.chunks(g.height * g.width).enumerate() {
                    b.grad.data_mut()[co] += plane.iter().sum::<f64>();
                }
            }
        }
        grad_in
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        f(&join(prefix, "weight"), &self.weight.value);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), &b.value);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct nested-loop convolution.
    fn naive_conv(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (n, cin, h, wd) = x.dims4();
        let (cout, _, k, _) = w.dims4();
        let oh = (h + 2 * pad - k) / stride + 1;
        let ow = (wd + 2 * pad - k) / stride + 1;
        let mut out = Tensor::zeros(&[n, cout, oh, ow]);
        for s in 0..n {
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let iy = (oy * stride + ki) as isize - pad as isize;
                                    let ix = (ox * stride + kj) as isize - pad as isize;
                                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                        acc += x.data()[((s * cin + ci) * h + iy as usize) * wd + ix as usize]
                                            * w.data()[((co * cin + ci) * k + ki) * k + kj];
                                    }
                                }
                            }
                        }
                        out.data_mut()[((s * cout + co) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        out
    }

    /// Scatter definition of the transposed convolution.
    fn naive_deconv(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Tensor {
        let (n, cin, h, wd) = x.dims4();
        let (_, cout, k, _) = w.dims4();
        let oh = (h - 1) * stride + k - 2 * pad;
        let ow = (wd - 1) * stride + k - 2 * pad;
        let mut out = Tensor::zeros(&[n, cout, oh, ow]);
        for s in 0..n {
            for ci in 0..cin {
                for iy in 0..h {
                    for ix in 0..wd {
                        let v = x.data()[((s * cin + ci) * h + iy) * wd + ix];
                        for co in 0..cout {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let oy = (iy * stride + ki) as isize - pad as isize;
                                    let ox = (ix * stride + kj) as isize - pad as isize;
                                    if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < ow {
                                        out.data_mut()[((s * cout + co) * oh + oy as usize) * ow + ox as usize] +=
                                            v * w.data()[((ci * cout + co) * k + ki) * k + kj];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn assert_close(a: &Tensor, b: &Tensor, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(k, s, p) in &[(1, 1, 0), (3, 1, 1), (7, 2, 3), (1, 2, 0)] {
            let x = random(&[2, 3, 9, 8], &mut rng);
            let mut conv = Conv2d::new(3, 4, k, s, p, false);
            conv.weight.value = random(&[4, 3, k, k], &mut rng);
            assert_close(&conv.forward(&x), &naive_conv(&x, &conv.weight.value, s, p), 1e-12);
        }
    }

    #[test]
    fn deconv_matches_scatter_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(k, s, p) in &[(4, 2, 1), (8, 4, 2), (16, 8, 4), (3, 1, 1)] {
            let x = random(&[2, 2, 5, 4], &mut rng);
            let mut up = ConvTranspose2d::new(2, 3, k, s, p, false);
            up.weight.value = random(&[2, 3, k, k], &mut rng);
            assert_close(&up.forward(&x), &naive_deconv(&x, &up.weight.value, s, p), 1e-12);
        }
    }

    #[test]
    fn upsampling_output_sizes() {
        assert_eq!(ConvTranspose2d::upsampling(1, 2).output_size(28, 28), (56, 56));
        assert_eq!(ConvTranspose2d::upsampling(1, 4).output_size(14, 14), (56, 56));
        assert_eq!(ConvTranspose2d::upsampling(1, 8).output_size(7, 7), (56, 56));
        assert_eq!(ConvTranspose2d::upsampling(1, 4).output_size(56, 56), (224, 224));
        assert_eq!(ConvTranspose2d::upsampling(1, 8).output_size(10, 8), (80, 64));
    }

    #[test]
    fn bilinear_deconv_interior_preserves_constants() {
        let mut up = ConvTranspose2d::upsampling(1, 4);
        init::bilinear(&mut up.weight.value);
        let y = up.forward(&Tensor::full(&[1, 1, 6, 6], 2.5));
        let (_, _, h, w) = y.dims4();
        for yy in 4..h - 4 {
            for xx in 4..w - 4 {
                assert!((y.data()[yy * w + xx] - 2.5).abs() < 1e-12);
            }
        }
    }

    /// Checks `<grad_out, J·dx> == <Jᵀ·grad_out, dx>` via the layer's own backward.
    #[test]
    fn backward_is_adjoint_of_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[2, 3, 7, 6], &mut rng);
        let dx = random(&[2, 3, 7, 6], &mut rng);
        let mut conv = Conv2d::new(3, 2, 3, 2, 1, true);
        conv.weight.value = random(&[2, 3, 3, 3], &mut rng);
        let y = conv.forward_train(&x);
        let gy = random(y.shape(), &mut rng);
        let gx = conv.backward(&gy);
        // conv is affine in x: J·dx = f(x+dx) − f(x)
        let mut xp = x.clone();
        xp.add_assign(&dx);
        let mut jdx = conv.forward(&xp);
        jdx.axpy(-1.0, &y);
        let lhs: f64 = gy.data().iter().zip(jdx.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = gx.data().iter().zip(dx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));

        let mut up = ConvTranspose2d::new(3, 2, 4, 2, 1, true);
        up.weight.value = random(&[3, 2, 4, 4], &mut rng);
        let y = up.forward_train(&x);
        let gy = random(y.shape(), &mut rng);
        let gx = up.backward(&gy);
        let mut jdx = up.forward(&xp);
        jdx.axpy(-1.0, &y);
        let lhs: f64 = gy.data().iter().zip(jdx.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = gx.data().iter().zip(dx.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn weight_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(&[2, 2, 5, 5], &mut rng);
        let mut conv = Conv2d::new(2, 3, 3, 1, 1, true);
        conv.weight.value = random(&[3, 2, 3, 3], &mut rng);
        let y = conv.forward_train(&x);
        let gy = random(y.shape(), &mut rng);
        conv.backward(&gy);
        let loss = |c: &Conv2d| -> f64 { c.forward(&x).data().iter().zip(gy.data()).map(|(a, b)| a * b).sum() };
        for idx in [0, 7, 30, 53] {
            let mut plus = conv.clone();
            plus.weight.value.data_mut()[idx] += 1e-4;
            let mut minus = conv.clone();
            minus.weight.value.data_mut()[idx] -= 1e-4;
            let fd = (loss(&plus) - loss(&minus)) / 2e-4;
            assert!((fd - conv.weight.grad.data()[idx]).abs() < 1e-6);
        }
        let bias_grad: f64 = gy.data()[..25].iter().sum::<f64>() + gy.data()[75..100].iter().sum::<f64>();
        assert!((conv.bias.as_ref().unwrap().grad.data()[0] - bias_grad).abs() < 1e-9);
    }
}
