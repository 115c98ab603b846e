/// Dense NCHW batch of real values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor data length");
        Self { n, c, h, w, data }
    }

    #[inline]
    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    #[inline]
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn sample(&self, i: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[i * len..(i + 1) * len]
    }

    #[inline]
    pub fn sample_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.sample_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        (self.n, self.c, self.h, self.w) == (other.n, other.c, other.h, other.w)
    }

    pub fn shape_string(&self) -> String {
        format!("{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}
