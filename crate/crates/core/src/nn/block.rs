use crate::error::Result;
use crate::nn::{BatchNorm2d, Conv2d, Layer, NormMode, Param, Relu, Scalar, Tensor4};

/// Convolution, batch normalization, then rectified linear activation.
#[derive(Debug, Clone)]
pub struct ConvBlock<T> {
    pub conv: Conv2d<T>,
    pub norm: BatchNorm2d<T>,
    relu: Relu,
}

impl<T: Scalar> ConvBlock<T> {
    pub fn new(conv: Conv2d<T>, norm: BatchNorm2d<T>) -> Self {
        ConvBlock {
            conv,
            norm,
            relu: Relu::new(),
        }
    }

    pub fn set_mode(&mut self, mode: NormMode) {
        self.norm.mode = mode;
    }

    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = self.norm.infer(&self.conv.infer(x)?)?;
        Ok(crate::nn::relu(&y))
    }

    pub fn param_count(&self) -> usize {
        self.conv.param_count() + self.norm.gamma.len() + self.norm.beta.len()
    }
}

impl<T: Scalar> Layer<T> for ConvBlock<T> {
    fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = self.conv.forward(x)?;
        let y = self.norm.forward(&y)?;
        self.relu.forward(&y)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let g = self.relu.backward(dy)?;
        let g = self.norm.backward(&g)?;
        self.conv.backward(&g)
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        let mut out: Vec<(String, &mut Param<T>)> = self
            .conv
            .params_mut()
            .into_iter()
            .map(|(n, p)| (format!("conv.{n}"), p))
            .collect();
        out.extend(self.norm.params_mut().into_iter().map(|(n, p)| (format!("norm.{n}"), p)));
        out
    }
}
