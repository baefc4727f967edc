//! Dense n-dimensional tensor, row-major with the last extent fastest.
//!
//! Feature maps use the `[N, C, H, W]` layout (`[N, C, T, H, W]` for video),
//! so a channel is a contiguous block within an image and grouped convolution
//! reduces to contiguous channel ranges. Element `(n, c, h, w)` lives at flat
//! index `((n*C + c)*H + h)*W + w`.

use crate::error::{shape_err, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// All-zero tensor. Errors on an empty dims list or a zero extent.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let len = checked_len(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![T::zero(); len],
        })
    }

    /// Tensor filled with a constant.
    pub fn filled(dims: &[usize], value: T) -> Result<Self> {
        let len = checked_len(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![value; len],
        })
    }

    /// Wraps an existing buffer. The buffer length must match the extents.
    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let len = checked_len(dims)?;
        if data.len() != len {
            return shape_err(format!(
                "buffer has {} elements, dims {:?} require {}",
                data.len(),
                dims,
                len
            ));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// He-normal initialization: i.i.d. `normal(0, sqrt(2 / fan_in))`.
    ///
    /// Values are drawn from the counter-based generator, so the result is a
    /// pure function of `(dims, fan_in, seed)` regardless of thread count.
    pub fn he_normal(dims: &[usize], fan_in: usize, seed: u64) -> Result<Self> {
        if fan_in == 0 {
            return shape_err("he_normal: fan_in must be positive");
        }
        let len = checked_len(dims)?;
        let std = (2.0 / fan_in as f64).sqrt();
        let data = (0..len)
            .map(|i| T::from_f64(rng::standard_normal(seed, i as u64) * std))
            .collect();
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
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

    /// Batch extent (first dim) for `[N, C, ...]` tensors.
    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    /// Channel extent (second dim) for `[N, C, ...]` tensors.
    pub fn channels(&self) -> usize {
        assert!(self.rank() >= 2, "tensor has no channel extent");
        self.dims[1]
    }

    /// Spatial extents (everything after N and C).
    pub fn spatial(&self) -> &[usize] {
        assert!(self.rank() >= 2, "tensor has no spatial extents");
        &self.dims[2..]
    }

    /// Flat index of a full multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut flat = 0;
        for (i, &x) in idx.iter().enumerate() {
            debug_assert!(x < self.dims[i]);
            flat = flat * self.dims[i] + x;
        }
        flat
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.flat_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let flat = self.flat_index(idx);
        self.data[flat] = value;
    }

    /// Same data re-labelled with new extents of identical total length.
    pub fn reshaped(&self, dims: &[usize]) -> Result<Self> {
        Self::from_vec(dims, self.data.clone())
    }

    /// Converts the element type, rounding through `f64`.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// In-place `self += other`, extents must match.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return shape_err(format!(
                "add_assign extents differ: {:?} vs {:?}",
                self.dims, other.dims
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    /// Channel concatenation. All inputs must share every extent except the
    /// channel extent; input `i` occupies a contiguous channel range in
    /// input order.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = match parts.first() {
            Some(t) => t,
            None => return shape_err("concat_channels: no inputs"),
        };
        if first.rank() < 2 {
            return shape_err("concat_channels: inputs need [N, C, ...] layout");
        }
        let mut total_c = 0;
        for t in parts {
            if t.rank() != first.rank()
                || t.dims[0] != first.dims[0]
                || t.dims[2..] != first.dims[2..]
            {
                return shape_err(format!(
                    "concat_channels: extents {:?} incompatible with {:?}",
                    t.dims, first.dims
                ));
            }
            total_c += t.dims[1];
        }
        let n = first.dims[0];
        let inner: usize = first.dims[2..].iter().product();
        let mut dims = first.dims.clone();
        dims[1] = total_c;
        let mut data = vec![T::zero(); n * total_c * inner];
        for img in 0..n {
            let mut c_off = 0;
            for t in parts {
                let c = t.dims[1];
                let src = &t.data[img * c * inner..(img + 1) * c * inner];
                let dst_start = (img * total_c + c_off) * inner;
                data[dst_start..dst_start + c * inner].copy_from_slice(src);
                c_off += c;
            }
        }
        Ok(Self { dims, data })
    }

    /// Copies the contiguous channel range `[start, start + count)`.
    pub fn slice_channels(&self, start: usize, count: usize) -> Result<Self> {
        if self.rank() < 2 {
            return shape_err("slice_channels: input needs [N, C, ...] layout");
        }
        let c = self.dims[1];
        if count == 0 || start + count > c {
            return shape_err(format!(
                "slice_channels: range {}..{} out of 0..{}",
                start,
                start + count,
                c
            ));
        }
        let n = self.dims[0];
        let inner: usize = self.dims[2..].iter().product();
        let mut dims = self.dims.clone();
        dims[1] = count;
        let mut data = Vec::with_capacity(n * count * inner);
        for img in 0..n {
            let s = (img * c + start) * inner;
            data.extend_from_slice(&self.data[s..s + count * inner]);
        }
        Ok(Self { dims, data })
    }
}

fn checked_len(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return shape_err("dims list is empty");
    }
    if dims.iter().any(|&d| d == 0) {
        return shape_err(format!("zero extent in dims {dims:?}"));
    }
    Ok(dims.iter().product())
}
