use crate::Scalar;

/// A dense rank-4 tensor in row-major order.
///
/// Used as `(n, c, h, w)` for image batches and `(c_out, c_in, f_y, f_x)`
/// for convolution weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    dims: [usize; 4],
    data: Vec<T>,
}

impl<T: Scalar> Tensor4<T> {
    /// Wraps existing data; panics if the length does not match the dims.
    pub fn new(dims: [usize; 4], data: Vec<T>) -> Self {
        assert_eq!(
            data.len(),
            dims.iter().product::<usize>(),
            "data length must equal product of dims"
        );
        Self { dims, data }
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            data: vec![T::zero(); dims.iter().product()],
            dims,
        }
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for i0 in 0..dims[0] {
            for i1 in 0..dims[1] {
                for i2 in 0..dims[2] {
                    for i3 in 0..dims[3] {
                        data.push(f(i0, i1, i2, i3));
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn offset(&self, i0: usize, i1: usize, i2: usize, i3: usize) -> usize {
        debug_assert!(i0 < self.dims[0] && i1 < self.dims[1] && i2 < self.dims[2] && i3 < self.dims[3]);
        ((i0 * self.dims[1] + i1) * self.dims[2] + i2) * self.dims[3] + i3
    }

    #[inline]
    pub fn at(&self, i0: usize, i1: usize, i2: usize, i3: usize) -> T {
        self.data[self.offset(i0, i1, i2, i3)]
    }

    #[inline]
    pub fn at_mut(&mut self, i0: usize, i1: usize, i2: usize, i3: usize) -> &mut T {
        let off = self.offset(i0, i1, i2, i3);
        &mut self.data[off]
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

    /// Converts element-wise to another scalar type through `f64`.
    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self
                .data
                .iter()
                .map(|&v| crate::scalar(v.to_f64().expect("finite")))
                .collect(),
        }
    }
}
