//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{mse_loss, mse_loss_grad, Layer, Tensor4};

/// Outcome of a gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub coordinates: usize,
    /// Coordinate with the largest relative error, e.g. `input[17]`.
    pub worst: String,
}

/// Per-coordinate relative errors are `|a - n| / max(|a|, |n|, floor)`
/// where `floor` is this fraction of the largest analytic gradient.
pub const RELATIVE_FLOOR: f64 = 1e-3;

struct Comparison {
    entries: Vec<(String, f64, f64)>,
}

impl Comparison {
    fn summarize(self) -> GradCheck {
        let scale = self
            .entries
            .iter()
            .fold(0.0f64, |m, (_, a, _)| m.max(a.abs()));
        let floor = (RELATIVE_FLOOR * scale).max(f64::MIN_POSITIVE);
        let mut out = GradCheck {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            coordinates: self.entries.len(),
            worst: String::new(),
        };
        for (name, a, n) in self.entries {
            let abs = (a - n).abs();
            let rel = abs / a.abs().max(n.abs()).max(floor);
            out.max_abs_error = out.max_abs_error.max(abs);
            if rel > out.max_rel_error || out.worst.is_empty() {
                out.max_rel_error = out.max_rel_error.max(rel);
                out.worst = name;
            }
        }
        out
    }
}

fn probe_loss(y: &Tensor4<f64>, w: &[f64]) -> f64 {
    y.data().iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Compare a layer's analytic gradients with central differences of the
/// probe loss `L = sum(w * layer(x))`, `w` fixed pseudo-random weights.
/// Covers the input and every parameter.
pub fn finite_diff_check(layer: &mut dyn Layer<f64>, input: &Tensor4<f64>, h: f64) -> Result<GradCheck> {
    let y = layer.forward(input)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let w: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dy = Tensor4::new(y.dims(), w.clone())?;

    layer.zero_grad();
    layer.forward(input)?;
    let dx = layer.backward(&dy)?;
    let param_grads: Vec<(String, Vec<f64>)> = layer
        .params_mut()
        .into_iter()
        .map(|(n, p)| (n, p.grad.clone()))
        .collect();

    let mut entries = Vec::new();
    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let fp = probe_loss(&layer.forward(&x)?, &w);
        x.data_mut()[i] = orig - h;
        let fm = probe_loss(&layer.forward(&x)?, &w);
        x.data_mut()[i] = orig;
        entries.push((format!("input[{i}]"), dx.data()[i], (fp - fm) / (2.0 * h)));
    }

    for (pi, (name, analytic)) in param_grads.iter().enumerate() {
        for i in 0..analytic.len() {
            let set = |layer: &mut dyn Layer<f64>, v: f64| {
                layer.params_mut()[pi].1.value[i] = v;
            };
            let orig = layer.params_mut()[pi].1.value[i];
            set(layer, orig + h);
            let fp = probe_loss(&layer.forward(input)?, &w);
            set(layer, orig - h);
            let fm = probe_loss(&layer.forward(input)?, &w);
            set(layer, orig);
            entries.push((format!("{name}[{i}]"), analytic[i], (fp - fm) / (2.0 * h)));
        }
    }
    Ok(Comparison { entries }.summarize())
}

/// Same comparison for the gradient of [`mse_loss`] with respect to `pred`.
pub fn finite_diff_check_mse(pred: &Tensor4<f64>, target: &Tensor4<f64>, h: f64) -> Result<GradCheck> {
    let g = mse_loss_grad(pred, target)?;
    let mut p = pred.clone();
    let mut entries = Vec::new();
    for i in 0..p.len() {
        let orig = p.data()[i];
        p.data_mut()[i] = orig + h;
        let fp = mse_loss(&p, target)?;
        p.data_mut()[i] = orig - h;
        let fm = mse_loss(&p, target)?;
        p.data_mut()[i] = orig;
        entries.push((format!("pred[{i}]"), g.data()[i], (fp - fm) / (2.0 * h)));
    }
    Ok(Comparison { entries }.summarize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::nn::Param;

    /// y = a * x + b with scalar parameters, elementwise.
    struct Affine {
        a: Param<f64>,
        b: Param<f64>,
        x: Option<Tensor4<f64>>,
    }

    impl Layer<f64> for Affine {
        fn forward(&mut self, x: &Tensor4<f64>) -> Result<Tensor4<f64>> {
            self.x = Some(x.clone());
            Ok(x.map(|v| self.a.value[0] * v + self.b.value[0]))
        }

        fn backward(&mut self, dy: &Tensor4<f64>) -> Result<Tensor4<f64>> {
            let x = self.x.as_ref().ok_or_else(|| Error::State("no forward".into()))?;
            self.a.grad[0] += x.data().iter().zip(dy.data()).map(|(a, b)| a * b).sum::<f64>();
            self.b.grad[0] += dy.data().iter().sum::<f64>();
            Ok(dy.map(|g| g * self.a.value[0]))
        }

        fn params_mut(&mut self) -> Vec<(String, &mut Param<f64>)> {
            vec![("a".into(), &mut self.a), ("b".into(), &mut self.b)]
        }
    }

    #[test]
    fn linear_layer_is_exact() {
        let mut layer = Affine {
            a: Param::new(vec![1], vec![1.7]),
            b: Param::new(vec![1], vec![-0.4]),
            x: None,
        };
        let x = Tensor4::from_fn([2, 1, 2, 3], |[n, _, h, w]| (n as f64 - h as f64 * 0.5 + w as f64 * 0.25).sin());
        let r = finite_diff_check(&mut layer, &x, 1e-2).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(r.coordinates, 12 + 2);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        struct Broken;
        impl Layer<f64> for Broken {
            fn forward(&mut self, x: &Tensor4<f64>) -> Result<Tensor4<f64>> {
                Ok(x.map(|v| v * v))
            }
            fn backward(&mut self, dy: &Tensor4<f64>) -> Result<Tensor4<f64>> {
                Ok(dy.clone())
            }
        }
        let x = Tensor4::filled([1, 1, 2, 2], 3.0);
        let r = finite_diff_check(&mut Broken, &x, 1e-5).unwrap();
        assert!(r.max_rel_error > 0.5);
    }

    fn random(dims: [usize; 4], seed: u64) -> Tensor4<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::from_fn(dims, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn conv_and_norm_gradients() {
        use crate::nn::{BatchNorm2d, Conv2d, ConvBlock, MaxPool2, Padding, Upsample2};
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random([2, 2, 8, 8], 1);
        let mut conv = Conv2d::<f64>::kaiming(3, 2, Padding::CircularBoth, &mut rng);
        let r = finite_diff_check(&mut conv, &x, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-6, "conv {r:?}");

        let mut bn = BatchNorm2d::<f64>::new(2);
        bn.gamma.value = vec![1.3, -0.7];
        bn.beta.value = vec![0.2, 0.1];
        let r = finite_diff_check(&mut bn, &x, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "batchnorm {r:?}");

        let mut block = ConvBlock::new(
            Conv2d::<f64>::kaiming(3, 2, Padding::CircularLonReflectLat, &mut rng),
            BatchNorm2d::new(3),
        );
        let r = finite_diff_check(&mut block, &x, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "block {r:?}");

        let r = finite_diff_check(&mut MaxPool2::new(), &x, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "maxpool {r:?}");
        let r = finite_diff_check(&mut Upsample2::new(), &x, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "upsample {r:?}");

        let t = random([2, 2, 8, 8], 2);
        let r = finite_diff_check_mse(&x, &t, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-5, "mse {r:?}");
    }
}
