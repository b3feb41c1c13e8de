/// Value functions `V^{d1,d2}` sampled on a grid, one slice per mode pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField {
    m1: usize,
    m2: usize,
    points: usize,
    data: Vec<f64>,
}

impl ValueField {
    pub fn constant(m1: usize, m2: usize, points: usize, value: f64) -> Self {
        Self { m1, m2, points, data: vec![value; m1 * m2 * points] }
    }

    pub fn from_vec(m1: usize, m2: usize, points: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), m1 * m2 * points, "value field size mismatch");
        Self { m1, m2, points, data }
    }

    pub fn from_fn(m1: usize, m2: usize, points: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(m1 * m2 * points);
        for d1 in 0..m1 {
            for d2 in 0..m2 {
                for p in 0..points {
                    data.push(f(d1, d2, p));
                }
            }
        }
        Self { m1, m2, points, data }
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.m1, self.m2, self.points)
    }

    #[inline]
    fn offset(&self, d1: usize, d2: usize) -> usize {
        (d1 * self.m2 + d2) * self.points
    }

    #[inline]
    pub fn get(&self, d1: usize, d2: usize, p: usize) -> f64 {
        self.data[self.offset(d1, d2) + p]
    }

    #[inline]
    pub fn set(&mut self, d1: usize, d2: usize, p: usize, v: f64) {
        let o = self.offset(d1, d2);
        self.data[o + p] = v;
    }

    #[inline]
    pub fn slice(&self, d1: usize, d2: usize) -> &[f64] {
        let o = self.offset(d1, d2);
        &self.data[o..o + self.points]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |self - other|`.
    pub fn sup_distance(&self, other: &ValueField) -> f64 {
        assert_eq!(self.shape(), other.shape(), "value field shape mismatch");
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &ValueField) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| a <= b)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ValueField {
        Self { data: self.data.iter().map(|&v| f(v)).collect(), ..*self }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
