use crate::{Layer, Tensor};

#[derive(Debug, Clone, Default)]
pub struct Relu {
    output: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Layer for Relu {
    fn forward(&self, x: &Tensor) -> Tensor {
        x.map(|v| v.max(0.0))
    }

    fn forward_train(&mut self, x: &Tensor) -> Tensor {
        let y = self.forward(x);
        self.output = Some(y.clone());
        y
    }

    fn backward(&mut self, grad_out: &Tensor) -> Tensor {
        let y = self.output.take().expect("relu backward without forward_train");
        let mut g = grad_out.clone();
        for (d, o) in g.data_mut().iter_mut().zip(y.data()) {
            if *o <= 0.0 {
                *d = 0.0;
            }
        }
        g
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
