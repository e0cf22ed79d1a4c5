//! 3 × 3, stride-1 convolution with wrap-around padding.
//!
//! Longitude (width) always wraps. Latitude (height) wraps too under
//! [`Padding::CircularBoth`]; under [`Padding::CircularLonReflectLat`] it
//! reflects about the first and last rows instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Layer, Param, Scalar, Tensor4};

pub const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    #[default]
    CircularBoth,
    CircularLonReflectLat,
}

/// Row index of padded position `i` (which may be -1 or `h`).
#[inline]
fn pad_row(i: isize, h: usize, padding: Padding) -> usize {
    let h = h as isize;
    match padding {
        Padding::CircularBoth => i.rem_euclid(h) as usize,
        Padding::CircularLonReflectLat => {
            if h == 1 {
                0
            } else if i < 0 {
                (-i) as usize
            } else if i >= h {
                (2 * h - 2 - i) as usize
            } else {
                i as usize
            }
        }
    }
}

#[inline]
fn pad_col(j: isize, w: usize) -> usize {
    j.rem_euclid(w as isize) as usize
}

/// Source row/column for each kernel tap and output position.
struct TapIndex {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl TapIndex {
    fn new(h: usize, w: usize, padding: Padding) -> Self {
        let mut rows = Vec::with_capacity(KERNEL * h);
        for ky in 0..KERNEL {
            for i in 0..h {
                rows.push(pad_row(i as isize + ky as isize - 1, h, padding));
            }
        }
        let mut cols = Vec::with_capacity(KERNEL * w);
        for kx in 0..KERNEL {
            for j in 0..w {
                cols.push(pad_col(j as isize + kx as isize - 1, w));
            }
        }
        TapIndex { rows, cols }
    }
}

/// Unfold one sample into a `(c_in * 9) x (h * w)` patch matrix.
fn im2col<T: Scalar>(x: &[T], c_in: usize, h: usize, w: usize, taps: &TapIndex, cols: &mut [T]) {
    let hw = h * w;
    for ci in 0..c_in {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[(ci * TAPS + ky * KERNEL + kx) * hw..][..hw];
                let col_idx = &taps.cols[kx * w..(kx + 1) * w];
                for i in 0..h {
                    let src = &plane[taps.rows[ky * h + i] * w..][..w];
                    let dst = &mut row[i * w..(i + 1) * w];
                    for (d, &j) in dst.iter_mut().zip(col_idx) {
                        *d = src[j];
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add patch gradients into `dx`.
fn col2im<T: Scalar>(cols: &[T], c_in: usize, h: usize, w: usize, taps: &TapIndex, dx: &mut [T]) {
    let hw = h * w;
    for ci in 0..c_in {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[(ci * TAPS + ky * KERNEL + kx) * hw..][..hw];
                let col_idx = &taps.cols[kx * w..(kx + 1) * w];
                for i in 0..h {
                    let dst = &mut plane[taps.rows[ky * h + i] * w..][..w];
                    let src = &row[i * w..(i + 1) * w];
                    for (&g, &j) in src.iter().zip(col_idx) {
                        dst[j] += g;
                    }
                }
            }
        }
    }
}

/// Weights `(c_out, c_in, 3, 3)` and bias `(c_out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub c_out: usize,
    pub c_in: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> ConvParams<T> {
    pub fn new(c_out: usize, c_in: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weight.len() != c_out * c_in * TAPS || bias.len() != c_out {
            return Err(Error::Dimension(format!(
                "conv {c_out}x{c_in}x3x3 needs {} weights and {c_out} biases, got {} and {}",
                c_out * c_in * TAPS,
                weight.len(),
                bias.len()
            )));
        }
        Ok(ConvParams {
            c_out,
            c_in,
            weight,
            bias,
        })
    }

    pub fn weight_at(&self, co: usize, ci: usize, ky: usize, kx: usize) -> T {
        self.weight[((co * self.c_in + ci) * KERNEL + ky) * KERNEL + kx]
    }
}

fn check_input<T: Scalar>(x: &Tensor4<T>, c_in: usize) -> Result<()> {
    if x.channels() != c_in {
        return Err(Error::Dimension(format!(
            "convolution expects {c_in} input channels, got {}",
            x.channels()
        )));
    }
    Ok(())
}

fn forward_gemm<T: Scalar>(
    x: &Tensor4<T>,
    weight: &[T],
    bias: &[T],
    c_out: usize,
    padding: Padding,
) -> Tensor4<T> {
    let [n, c_in, h, w] = x.dims();
    let hw = h * w;
    let k = c_in * TAPS;
    let taps = TapIndex::new(h, w, padding);
    let mut cols = vec![T::zero(); k * hw];
    let mut out = Tensor4::zeros([n, c_out, h, w]);
    for s in 0..n {
        im2col(x.sample(s), c_in, h, w, &taps, &mut cols);
        let y = out.sample_mut(s);
        T::gemm(
            c_out,
            k,
            hw,
            T::one(),
            weight,
            (k as isize, 1),
            &cols,
            (hw as isize, 1),
            T::zero(),
            y,
            (hw as isize, 1),
        );
        for (plane, &b) in y.chunks_exact_mut(hw).zip(bias) {
            plane.iter_mut().for_each(|v| *v += b);
        }
    }
    out
}

/// Circular 3 × 3 convolution (patch-matrix product).
pub fn conv2d_circular<T: Scalar>(x: &Tensor4<T>, p: &ConvParams<T>, padding: Padding) -> Result<Tensor4<T>> {
    check_input(x, p.c_in)?;
    Ok(forward_gemm(x, &p.weight, &p.bias, p.c_out, padding))
}

/// Direct-loop reference for [`conv2d_circular`]. Each output starts from
/// the bias and accumulates input channels, then kernel rows, then kernel
/// columns, in that order.
pub fn conv2d_circular_direct<T: Scalar>(
    x: &Tensor4<T>,
    p: &ConvParams<T>,
    padding: Padding,
) -> Result<Tensor4<T>> {
    check_input(x, p.c_in)?;
    let [n, c_in, h, w] = x.dims();
    Ok(Tensor4::from_fn([n, p.c_out, h, w], |[s, co, i, j]| {
        let mut acc = p.bias[co];
        for ci in 0..c_in {
            for ky in 0..KERNEL {
                let r = pad_row(i as isize + ky as isize - 1, h, padding);
                for kx in 0..KERNEL {
                    let c = pad_col(j as isize + kx as isize - 1, w);
                    acc += p.weight_at(co, ci, ky, kx) * x.at([s, ci, r, c]);
                }
            }
        }
        acc
    }))
}

/// Trainable circular convolution layer.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    c_in: usize,
    c_out: usize,
    padding: Padding,
    input: Option<Tensor4<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(p: ConvParams<T>, padding: Padding) -> Self {
        Conv2d {
            weight: Param::new(vec![p.c_out, p.c_in, KERNEL, KERNEL], p.weight),
            bias: Param::new(vec![p.c_out], p.bias),
            c_in: p.c_in,
            c_out: p.c_out,
            padding,
            input: None,
        }
    }

    /// Fan-in scaled uniform weights in `±sqrt(6 / fan_in)`, zero bias.
    pub fn kaiming(c_out: usize, c_in: usize, padding: Padding, rng: &mut impl rand::Rng) -> Self {
        let bound = (6.0 / (c_in * TAPS) as f64).sqrt();
        let weight = (0..c_out * c_in * TAPS)
            .map(|_| T::of(rng.random_range(-bound..bound)))
            .collect();
        Conv2d::new(
            ConvParams {
                c_out,
                c_in,
                weight,
                bias: vec![T::zero(); c_out],
            },
            padding,
        )
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn padding(&self) -> Padding {
        self.padding
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn params(&self) -> ConvParams<T> {
        ConvParams {
            c_out: self.c_out,
            c_in: self.c_in,
            weight: self.weight.value.clone(),
            bias: self.bias.value.clone(),
        }
    }

    /// Forward without recording state.
    pub fn infer(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        check_input(x, self.c_in)?;
        Ok(forward_gemm(x, &self.weight.value, &self.bias.value, self.c_out, self.padding))
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::State("conv backward called before forward".into()))?;
        let [n, c_in, h, w] = x.dims();
        if dy.dims() != [n, self.c_out, h, w] {
            return Err(Error::Dimension(format!(
                "conv output gradient {:?} does not match output {:?}",
                dy.dims(),
                [n, self.c_out, h, w]
            )));
        }
        let hw = h * w;
        let k = c_in * TAPS;
        let taps = TapIndex::new(h, w, self.padding);
        let mut cols = vec![T::zero(); k * hw];
        let mut dcols = vec![T::zero(); k * hw];
        let mut dx = Tensor4::zeros(x.dims());
        for s in 0..n {
            let g = dy.sample(s);
            im2col(x.sample(s), c_in, h, w, &taps, &mut cols);
            T::gemm(
                self.c_out,
                hw,
                k,
                T::one(),
                g,
                (hw as isize, 1),
                &cols,
                (1, hw as isize),
                T::one(),
                &mut self.weight.grad,
                (k as isize, 1),
            );
            for (db, plane) in self.bias.grad.iter_mut().zip(g.chunks_exact(hw)) {
                *db += plane.iter().copied().sum::<T>();
            }
            T::gemm(
                k,
                self.c_out,
                hw,
                T::one(),
                &self.weight.value,
                (1, k as isize),
                g,
                (hw as isize, 1),
                T::zero(),
                &mut dcols,
                (hw as isize, 1),
            );
            col2im(&dcols, c_in, h, w, &taps, dx.sample_mut(s));
        }
        Ok(dx)
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param<T>)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }
}
