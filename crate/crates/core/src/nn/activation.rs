use crate::error::{Error, Result};
use crate::nn::{Layer, Scalar, Tensor4};

pub fn relu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(|v| if v < T::zero() { T::zero() } else { v })
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    active: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu::default()
    }
}

impl<T: Scalar> Layer<T> for Relu {
    fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.active = Some(x.data().iter().map(|&v| v > T::zero()).collect());
        Ok(relu(x))
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let active = self
            .active
            .as_ref()
            .ok_or_else(|| Error::State("relu backward called before forward".into()))?;
        if active.len() != dy.len() {
            return Err(Error::Dimension("relu gradient shape mismatch".into()));
        }
        let mut dx = dy.clone();
        for (g, &a) in dx.data_mut().iter_mut().zip(active) {
            if !a {
                *g = T::zero();
            }
        }
        Ok(dx)
    }
}
