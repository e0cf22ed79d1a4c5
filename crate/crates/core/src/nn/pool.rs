use crate::error::{Error, Result};
use crate::nn::{Layer, Scalar, Tensor4};

fn pool_with_argmax<T: Scalar>(x: &Tensor4<T>) -> Result<(Tensor4<T>, Vec<usize>)> {
    let [n, c, h, w] = x.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Dimension(format!("maxpool2 needs even height and width, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for i in 0..oh {
            for j in 0..ow {
                let top = base + 2 * i * w + 2 * j;
                // window order: (0,0) (0,1) (1,0) (1,1); first maximum wins
                let mut best = top;
                for cand in [top + 1, top + w, top + w + 1] {
                    if data[cand] > data[best] {
                        best = cand;
                    }
                }
                out.push(data[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor4::from_raw([n, c, oh, ow], out), arg))
}

/// 2 × 2 max pooling with stride 2.
pub fn maxpool2<T: Scalar>(x: &Tensor4<T>) -> Result<Tensor4<T>> {
    pool_with_argmax(x).map(|(y, _)| y)
}

/// Nearest-neighbour 2× upsampling.
pub fn upsample2<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    let [n, c, h, w] = x.dims();
    let mut out = Vec::with_capacity(n * c * h * w * 4);
    for row in x.data().chunks_exact(w) {
        let mut wide = Vec::with_capacity(2 * w);
        for &v in row {
            wide.push(v);
            wide.push(v);
        }
        out.extend_from_slice(&wide);
        out.extend_from_slice(&wide);
    }
    Tensor4::from_raw([n, c, 2 * h, 2 * w], out)
}

/// Adjoint of [`upsample2`]: sum each 2 × 2 block.
pub fn upsample2_backward<T: Scalar>(dy: &Tensor4<T>) -> Result<Tensor4<T>> {
    let [n, c, h, w] = dy.dims();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Dimension("upsample gradient must have even size".into()));
    }
    let (oh, ow) = (h / 2, w / 2);
    Ok(Tensor4::from_fn([n, c, oh, ow], |[s, ch, i, j]| {
        dy.at([s, ch, 2 * i, 2 * j])
            + dy.at([s, ch, 2 * i, 2 * j + 1])
            + dy.at([s, ch, 2 * i + 1, 2 * j])
            + dy.at([s, ch, 2 * i + 1, 2 * j + 1])
    }))
}

#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    argmax: Option<(Vec<usize>, [usize; 4])>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        MaxPool2::default()
    }
}

impl<T: Scalar> Layer<T> for MaxPool2 {
    fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let (y, arg) = pool_with_argmax(x)?;
        self.argmax = Some((arg, x.dims()));
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        let (arg, dims) = self
            .argmax
            .as_ref()
            .ok_or_else(|| Error::State("maxpool backward called before forward".into()))?;
        if dy.len() != arg.len() {
            return Err(Error::Dimension("maxpool gradient shape mismatch".into()));
        }
        let mut dx = Tensor4::zeros(*dims);
        for (&g, &src) in dy.data().iter().zip(arg) {
            dx.data_mut()[src] += g;
        }
        Ok(dx)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Upsample2 {
    seen: bool,
}

impl Upsample2 {
    pub fn new() -> Self {
        Upsample2::default()
    }
}

impl<T: Scalar> Layer<T> for Upsample2 {
    fn forward(&mut self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.seen = true;
        Ok(upsample2(x))
    }

    fn backward(&mut self, dy: &Tensor4<T>) -> Result<Tensor4<T>> {
        if !self.seen {
            return Err(Error::State("upsample backward called before forward".into()));
        }
        upsample2_backward(dy)
    }
}
