use crate::error::{Error, Result};
use crate::nn::Scalar;

/// Dense N × C × H × W tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    /// Checked constructor: dims must be positive and values finite.
    pub fn new(dims: [usize; 4], data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Dimension(format!("zero-sized tensor {dims:?}")));
        }
        if data.len() != dims.iter().product::<usize>() {
            return Err(Error::Dimension(format!(
                "{} values for tensor {dims:?}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite tensor value".into()));
        }
        Ok(Tensor4 { dims, data })
    }

    pub(crate) fn from_raw(dims: [usize; 4], data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), dims.iter().product::<usize>());
        Tensor4 { dims, data }
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Tensor4::from_raw(dims, vec![T::zero(); dims.iter().product()])
    }

    pub fn filled(dims: [usize; 4], v: T) -> Self {
        Tensor4::from_raw(dims, vec![v; dims.iter().product()])
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for n in 0..dims[0] {
            for c in 0..dims[1] {
                for h in 0..dims[2] {
                    for w in 0..dims[3] {
                        data.push(f([n, c, h, w]));
                    }
                }
            }
        }
        Tensor4::from_raw(dims, data)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn channels(&self) -> usize {
        self.dims[1]
    }

    pub fn height(&self) -> usize {
        self.dims[2]
    }

    pub fn width(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, [n, c, h, w]: [usize; 4]) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + h) * self.dims[3] + w
    }

    #[inline]
    pub fn at(&self, i: [usize; 4]) -> T {
        self.data[self.index(i)]
    }

    /// Values of one sample (all channels).
    pub fn sample(&self, n: usize) -> &[T] {
        let len = self.dims[1] * self.dims[2] * self.dims[3];
        &self.data[n * len..(n + 1) * len]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let len = self.dims[1] * self.dims[2] * self.dims[3];
        &mut self.data[n * len..(n + 1) * len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor4::from_raw(self.dims, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn add_assign(&mut self, other: &Tensor4<T>) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "cannot add {:?} to {:?}",
                other.dims, self.dims
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// Cyclic shift by `k` columns: output column `j` holds input column
    /// `j - k (mod W)`.
    pub fn roll_width(&self, k: usize) -> Self {
        let w = self.dims[3];
        let mut out = self.clone();
        for (src, dst) in self.data.chunks_exact(w).zip(out.data.chunks_exact_mut(w)) {
            for j in 0..w {
                dst[(j + k) % w] = src[j];
            }
        }
        out
    }

    /// Reorder the batch: output sample `i` is input sample `perm[i]`.
    pub fn permute_batch(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.dims[0] {
            return Err(Error::Dimension("permutation length differs from batch".into()));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for &p in perm {
            data.extend_from_slice(self.sample(p));
        }
        Ok(Tensor4::from_raw(self.dims, data))
    }

    /// Stack single-sample tensors along the batch axis.
    pub fn stack(items: &[&Tensor4<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Dimension("cannot stack zero tensors".into()))?;
        let [_, c, h, w] = first.dims;
        let mut data = Vec::new();
        let mut n = 0;
        for t in items {
            if t.dims[1..] != [c, h, w] {
                return Err(Error::Dimension(format!(
                    "cannot stack {:?} with {:?}",
                    t.dims, first.dims
                )));
            }
            data.extend_from_slice(&t.data);
            n += t.dims[0];
        }
        Ok(Tensor4::from_raw([n, c, h, w], data))
    }

    pub fn to_f64(&self) -> Tensor4<f64> {
        Tensor4::from_raw(self.dims, self.data.iter().map(|v| v.as_f64()).collect())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4::from_raw(self.dims, self.data.iter().map(|v| U::of(v.as_f64())).collect())
    }
}

/// Concatenate along the channel axis.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor4<T>]) -> Result<Tensor4<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Dimension("cannot concatenate zero tensors".into()))?;
    let [n, _, h, w] = first.dims;
    for p in parts {
        if p.dims[0] != n || p.dims[2] != h || p.dims[3] != w {
            return Err(Error::Dimension(format!(
                "cannot concatenate {:?} with {:?}",
                p.dims, first.dims
            )));
        }
    }
    let c: usize = parts.iter().map(|p| p.dims[1]).sum();
    let mut data = Vec::with_capacity(n * c * h * w);
    for s in 0..n {
        for p in parts {
            data.extend_from_slice(p.sample(s));
        }
    }
    Ok(Tensor4::from_raw([n, c, h, w], data))
}

/// Inverse of [`concat_channels`] for the given channel counts.
pub fn split_channels<T: Scalar>(t: &Tensor4<T>, counts: &[usize]) -> Result<Vec<Tensor4<T>>> {
    let [n, c, h, w] = t.dims;
    if counts.iter().sum::<usize>() != c {
        return Err(Error::Dimension(format!(
            "split {counts:?} does not cover {c} channels"
        )));
    }
    let plane = h * w;
    let mut out: Vec<Vec<T>> = counts.iter().map(|&k| Vec::with_capacity(n * k * plane)).collect();
    for s in 0..n {
        let mut offset = 0;
        let sample = t.sample(s);
        for (buf, &k) in out.iter_mut().zip(counts) {
            buf.extend_from_slice(&sample[offset * plane..(offset + k) * plane]);
            offset += k;
        }
    }
    Ok(out
        .into_iter()
        .zip(counts)
        .map(|(d, &k)| Tensor4::from_raw([n, k, h, w], d))
        .collect())
}
