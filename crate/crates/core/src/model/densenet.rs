//! DenseNet building blocks with the torchvision parameter layout.

use rand::Rng;
use segdense_nn::{
    concat_channels, init, join, split_channels, AvgPool2d, BatchNorm2d, Conv2d, Layer, Param, Relu, Tensor,
};

pub(crate) fn conv<R: Rng>(cin: usize, cout: usize, k: usize, stride: usize, pad: usize, rng: &mut R) -> Conv2d {
    let mut c = Conv2d::new(cin, cout, k, stride, pad, false);
    init::kaiming_normal(&mut c.weight.value, rng);
    c
}

/// BN → ReLU → 1×1 conv → BN → ReLU → 3×3 conv, producing `growth` new channels.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    norm1: BatchNorm2d,
    relu1: Relu,
    conv1: Conv2d,
    norm2: BatchNorm2d,
    relu2: Relu,
    conv2: Conv2d,
}

impl DenseLayer {
    pub fn new<R: Rng>(cin: usize, bn_size: usize, growth: usize, rng: &mut R) -> Self {
        let inter = bn_size * growth;
        Self {
            norm1: BatchNorm2d::new(cin),
            relu1: Relu::new(),
            conv1: conv(cin, inter, 1, 1, 0, rng),
            norm2: BatchNorm2d::new(inter),
            relu2: Relu::new(),
            conv2: conv(inter, growth, 3, 1, 1, rng),
        }
    }
}

impl Layer for DenseLayer {
    fn forward(&self, x: &Tensor) -> Tensor {
        let y = self.relu1.forward(&self.norm1.forward(x));
        let y = self.relu2.forward(&self.norm2.forward(&self.conv1.forward(&y)));
        self.conv2.forward(&y)
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let y = self.norm1.forward_train(x);
        let y = self.relu1.forward_train(&y);
        let y = self.conv1.forward_train(&y);
        let y = self.norm2.forward_train(&y);
        let y = self.relu2.forward_train(&y);
        self.conv2.forward_train(&y)
    }

    fn backward(&mut self, g: &Tensor) -> Tensor {
        let g = self.conv2.backward(g);
        let g = self.relu2.backward(&g);
        let g = self.norm2.backward(&g);
        let g = self.conv1.backward(&g);
        let g = self.relu1.backward(&g);
        self.norm1.backward(&g)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.norm1.visit_params(&join(prefix, "norm1"), f);
        self.conv1.visit_params(&join(prefix, "conv1"), f);
        self.norm2.visit_params(&join(prefix, "norm2"), f);
        self.conv2.visit_params(&join(prefix, "conv2"), f);
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.norm1.visit_buffers(&join(prefix, "norm1"), f);
        self.norm2.visit_buffers(&join(prefix, "norm2"), f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.norm1.visit_state(&join(prefix, "norm1"), f);
        self.conv1.visit_state(&join(prefix, "conv1"), f);
        self.norm2.visit_state(&join(prefix, "norm2"), f);
        self.conv2.visit_state(&join(prefix, "conv2"), f);
    }
}

/// Each layer sees the concatenation of the block input and every earlier layer's output.
#[derive(Debug, Clone)]
pub struct DenseBlock {
    layers: Vec<DenseLayer>,
    in_channels: usize,
    growth: usize,
}

impl DenseBlock {
    pub fn new<R: Rng>(cin: usize, layers: usize, bn_size: usize, growth: usize, rng: &mut R) -> Self {
        Self {
            layers: (0..layers)
                .map(|i| DenseLayer::new(cin + i * growth, bn_size, growth, rng))
                .collect(),
            in_channels: cin,
            growth,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.in_channels + self.layers.len() * self.growth
    }
}

impl Layer for DenseBlock {
    fn forward(&self, x: &Tensor) -> Tensor {
        let mut features = x.clone();
        for layer in &self.layers {
            let y = layer.forward(&features);
            features = concat_channels(&[&features, &y]);
        }
        features
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let mut features = x.clone();
        for layer in &mut self.layers {
            let y = layer.forward_train(&features);
            features = concat_channels(&[&features, &y]);
        }
        features
    }

    fn backward(&mut self, g: &Tensor) -> Tensor {
        let mut grad = g.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let prev = self.in_channels + i * self.growth;
            let (mut g_prev, g_new) = split_channels(&grad, prev);
            g_prev.add_assign(&layer.backward(&g_new));
            grad = g_prev;
        }
        grad
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_params(&join(prefix, &format!("denselayer{}", i + 1)), f);
        }
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.visit_buffers(&join(prefix, &format!("denselayer{}", i + 1)), f);
        }
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        for (i, l) in self.layers.iter().enumerate() {
            l.visit_state(&join(prefix, &format!("denselayer{}", i + 1)), f);
        }
    }
}

/// BatchNorm followed by ReLU; the output is a block tap.
#[derive(Debug, Clone)]
pub struct NormRelu {
    pub norm: BatchNorm2d,
    relu: Relu,
}

impl NormRelu {
    pub fn new(channels: usize) -> Self {
        Self {
            norm: BatchNorm2d::new(channels),
            relu: Relu::new(),
        }
    }
}

impl Layer for NormRelu {
    fn forward(&self, x: &Tensor) -> Tensor {
        self.relu.forward(&self.norm.forward(x))
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let y = self.norm.forward_train(x);
        self.relu.forward_train(&y)
    }

    fn backward(&mut self, g: &Tensor) -> Tensor {
        let g = self.relu.backward(g);
        self.norm.backward(&g)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.norm.visit_params(prefix, f);
    }

    fn visit_buffers(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor)) {
        self.norm.visit_buffers(prefix, f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.norm.visit_state(prefix, f);
    }
}

/// 1×1 compression conv and 2×2 average pooling (the transition's norm/relu is the tap).
#[derive(Debug, Clone)]
pub struct TransitionDown {
    conv: Conv2d,
    pool: AvgPool2d,
}

impl TransitionDown {
    pub fn new<R: Rng>(cin: usize, cout: usize, rng: &mut R) -> Self {
        Self {
            conv: conv(cin, cout, 1, 1, 0, rng),
            pool: AvgPool2d::new(2),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels()
    }
}

impl Layer for TransitionDown {
    fn forward(&self, x: &Tensor) -> Tensor {
        self.pool.forward(&self.conv.forward(x))
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let y = self.conv.forward_train(x);
        self.pool.forward_train(&y)
    }

    fn backward(&mut self, g: &Tensor) -> Tensor {
        let g = self.pool.backward(g);
        self.conv.backward(&g)
    }

    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.conv.visit_params(&join(prefix, "conv"), f);
    }

    fn visit_state(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor)) {
        self.conv.visit_state(&join(prefix, "conv"), f);
    }
}
