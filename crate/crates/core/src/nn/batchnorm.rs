use crate::error::{Error, Result};
use crate::nn::{Layer, Param, Scalar, Tensor4};

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Batch statistics; running statistics are left alone.
    TrainFrozen,
    /// Running statistics.
    Eval,
}

/// Per-channel batch normalization.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    running_mean: Vec<T>,
    running_var: Vec<T>,
    stats_ready: bool,
    pub momentum: f64,
    pub epsilon: f64,
    pub mode: NormMode,
    cache: Option<NormCache<T>>,
}

#[derive(Debug, Clone)]
struct NormCache<T> {
    x_hat: Tensor4<T>,
    inv_std: Vec<f64>,
    batch_stats: bool,
}

impl<T: Scalar> BatchNorm2d<T> {
    /// Identity affine transform, no running statistics yet.
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::filled(vec![channels], T::one()),
            beta: Param::filled(vec![channels], T::zero()),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            stats_ready: false,
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
            mode: NormMode::Train,
            cache: None,
        }
    }

    /// Set running statistics explicitly, which makes eval mode usable.
    pub fn with_running_stats(mut self, mean: Vec<T>, var: Vec<T>) -> Result<Self> {
        self.set_running_stats(mean, var)?;
        Ok(self)
    }

    pub fn set_running_stats(&mut self, mean: Vec<T>, var: Vec<T>) -> Result<()> {
        let c = self.channels();
        if mean.len() != c || var.len() != c {
            return Err(Error::Dimension(format!("running stats for {c} channels")));
        }
        if var.iter().any(|&v| !(v >= T::zero()) || !v.is_finite()) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidValue("running variance must be non-negative".into()));
        }
        self.running_mean = mean;
        self.running_var = var;
        self.stats_ready = true;
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn running_mean(&self) -> &[T] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[T] {
        &self.running_var
    }

    pub fn stats_ready(&self) -> bool {
        self.stats_ready
    }

    fn check(&self, x: &Tensor4<T>) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(Error::Dimension(format!(
                "batchnorm expects {} channels, got {}",
                self.channels(),
                x.channels()
            )));
        }
        Ok(())
    }

    /// Eval-mode forward without recording state.
    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check(x)?;
        if !self.stats_ready {
            return Err(Error::State("batchnorm running statistics are uninitialized".into()));
        }
        let inv_std: Vec<f64> = self
            .running_var
            .iter()
            .map(|v| 1.0 / (v.as_f64() + self.epsilon).sqrt())
            .collect();
        let mean: Vec<f64> = self.running_mean.iter().map(|v| v.as_f64()).collect();
        let (y, _) = self.affine(x, &mean, &inv_std);
        Ok(y)
    }

    /// Normalize with the given statistics, returning (output, x_hat).
    fn affine(&self, x: &Tensor4<T>, mean: &[f64], inv_std: &[f64]) -> (Tensor4<T>, Tensor4<T>) {
        let [n, c, h, w] = x.dims();
        let hw = h * w;
        let mut y = Tensor4::zeros(x.dims());
        let mut x_hat = Tensor4::zeros(x.dims());
        for s in 0..n {
            for ch in 0..c {
                let off = (s * c + ch) * hw;
                let (m, is) = (T::of(mean[ch]), T::of(inv_std[ch]));
                let (g, b) = (self.gamma.value[ch], self.beta.value[ch]);
                let src = &x.data()[off..off + hw];
                let xh = &mut x_hat.data_mut()[off..off + hw];
                for (d, &v) in xh.iter_mut().zip(src) {
                    *d = (v - m) * is;
                }
                let yy = &mut y.data_mut()[off..off + hw];
                for (d, &v) in yy.iter_mut().zip(xh.iter()) {
                    *d = g * v + b;
                }
            }
        }
        (y, x_hat)
    }

    fn batch_moments(x: &Tensor4<T>) -> (Vec<f64>, Vec<f64>) {
        let [n, c, h, w] = x.dims();
        let hw = h * w;
        let count = (n * hw) as f64;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for ch in 0..c {
            let mut sum = 0.0;
            for s in 0..n {
                let off = (s * c + ch) * hw;
                sum += x.data()[off..off + hw].iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let m = sum / count;
            let mut sq = 0.0;
            for s in 0..n {
                let off = (s * c + ch) * hw;
                sq += x.data()[off..off + hw]
                    .iter()
                    .map(|v| {
                        let d = v.as_f64() - m;
                        d * d
                    })
                    .sum::<f64>();
            }
            mean[ch] = m;
            var[ch] = sq / count;
        }
        (mean, var)
    }
}

impl<T: Scalar> Layer<T> for BatchNorm2d<T> {
    fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.check(x)?;
        if self.mode == NormMode::Eval {
            if !self.stats_ready {
                return Err(Error::State("batchnorm running statistics are uninitialized".into()));
            }
            let inv_std: Vec<f64> = self
                .running_var
                .iter()
                .map(|v| 1.0 / (v.as_f64() + self.epsilon).sqrt())
                .collect();
            let mean: Vec<f64> = self.running_mean.iter().map(|v| v.as_f64()).collect();
            let (y, x_hat) = self.affine(x, &mean, &inv_std);
            self.cache = Some(NormCache {
                x_hat,
                inv_std,
                batch_stats: false,
            });
            return Ok(y);
        }
        let (mean, var) = Self::batch_moments(x);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let (y, x_hat) = self.affine(x, &mean, &inv_std);
        if self.mode == NormMode::Train {
            let count = (x.batch() * x.height() * x.width()) as f64;
            let unbias = if count > 1.0 { count / (count - 1.0) } else { 1.0 };
            let m = self.momentum;
            for ch in 0..self.channels() {
                self.running_mean[ch] = T::of((1.0 - m) * self.running_mean[ch].as_f64() + m * mean[ch]);
                self.running_var[ch] = T::of((1.0 - m) * self.running_var[ch].as_f64() + m * var[ch] * unbias);
            }
            self.stats_ready = true;
        }
        self.cache = Some(NormCache {
            x_hat,
            inv_std,
            batch_stats: true,
        });
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or_else(|| Error::State("batchnorm backward called before forward".into()))?;
        if dy.dims() != cache.x_hat.dims() {
            return Err(Error::Dimension("batchnorm gradient shape mismatch".into()));
        }
        let [n, c, h, w] = dy.dims();
        let hw = h * w;
        let count = (n * hw) as f64;
        let mut dx = Tensor4::zeros(dy.dims());
        for ch in 0..c {
            let mut sum_dy = 0.0;
            let mut sum_dy_xhat = 0.0;
            for s in 0..n {
                let off = (s * c + ch) * hw;
                for (&g, &xh) in dy.data()[off..off + hw].iter().zip(&cache.x_hat.data()[off..off + hw]) {
                    let g = g.as_f64();
                    sum_dy += g;
                    sum_dy_xhat += g * xh.as_f64();
                }
            }
            self.gamma.grad[ch] += T::of(sum_dy_xhat);
            self.beta.grad[ch] += T::of(sum_dy);
            let gamma = self.gamma.value[ch].as_f64();
            let is = cache.inv_std[ch];
            for s in 0..n {
                let off = (s * c + ch) * hw;
                let g = &dy.data()[off..off + hw];
                let xh = &cache.x_hat.data()[off..off + hw];
                let d = &mut dx.data_mut()[off..off + hw];
                if cache.batch_stats {
                    let k = gamma * is / count;
                    for ((o, &gy), &xv) in d.iter_mut().zip(g).zip(xh) {
                        *o = T::of(k * (count * gy.as_f64() - sum_dy - xv.as_f64() * sum_dy_xhat));
                    }
                } else {
                    let k = T::of(gamma * is);
                    for (o, &gy) in d.iter_mut().zip(g) {
                        *o = k * gy;
                    }
                }
            }
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![("gamma".into(), &mut self.gamma), ("beta".into(), &mut self.beta)]
    }
}
