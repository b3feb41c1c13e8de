use thiserror::Error;

use crate::problem::ProblemSpec;

/// Largest supported state dimension; stencils hold `2^MAX_DIM` corners.
pub const MAX_DIM: usize = 3;
const MAX_CORNERS: usize = 1 << MAX_DIM;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid has {got} point counts but the problem has dimension {want}")]
    Dimension { got: usize, want: usize },
    #[error("every dimension needs at least 2 points")]
    TooFewPoints,
    #[error("dimension {0} exceeds the supported maximum of {MAX_DIM}")]
    TooLarge(usize),
}

/// Uniform tensor grid over the computational box. The last dimension
/// varies fastest in the flat index.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    counts: Vec<usize>,
    low: Vec<f64>,
    high: Vec<f64>,
    step: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

/// Corner indices and weights of a multilinear interpolation.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    len: usize,
    index: [usize; MAX_CORNERS],
    weight: [f64; MAX_CORNERS],
}

impl Stencil {
    #[inline]
    pub fn apply(&self, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for c in 0..self.len {
            acc += self.weight[c] * values[self.index[c]];
        }
        acc
    }

    pub fn corners(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.len).map(|c| (self.index[c], self.weight[c]))
    }
}

impl GridSpec {
    pub fn new(counts: &[usize], bounds: &[(f64, f64)]) -> Result<Self, GridError> {
        if counts.len() != bounds.len() {
            return Err(GridError::Dimension { got: counts.len(), want: bounds.len() });
        }
        if counts.len() > MAX_DIM {
            return Err(GridError::TooLarge(counts.len()));
        }
        if counts.iter().any(|&c| c < 2) {
            return Err(GridError::TooFewPoints);
        }
        let mut strides = vec![1; counts.len()];
        for d in (0..counts.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * counts[d + 1];
        }
        Ok(Self {
            counts: counts.to_vec(),
            low: bounds.iter().map(|b| b.0).collect(),
            high: bounds.iter().map(|b| b.1).collect(),
            step: bounds.iter().zip(counts).map(|(b, &c)| (b.1 - b.0) / (c - 1) as f64).collect(),
            strides,
            len: counts.iter().product(),
        })
    }

    /// Grid over the problem box; a single count is broadcast to every dimension.
    pub fn for_problem(spec: &ProblemSpec, counts: &[usize]) -> Result<Self, GridError> {
        if counts.len() == 1 && spec.dimension > 1 {
            Self::new(&vec![counts[0]; spec.dimension], &spec.bounds)
        } else {
            Self::new(counts, &spec.bounds)
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn step(&self) -> &[f64] {
        &self.step
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.low.iter().copied().zip(self.high.iter().copied()).collect()
    }

    pub fn min_step(&self) -> f64 {
        self.step.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Index along dimension `d` of flat point `idx`.
    #[inline]
    pub fn axis_index(&self, idx: usize, d: usize) -> usize {
        idx / self.strides[d] % self.counts[d]
    }

    #[inline]
    pub fn stride(&self, d: usize) -> usize {
        self.strides[d]
    }

    #[inline]
    pub fn coord(&self, idx: usize, d: usize) -> f64 {
        self.low[d] + self.axis_index(idx, d) as f64 * self.step[d]
    }

    pub fn point_into(&self, idx: usize, out: &mut [f64]) {
        for (d, slot) in out.iter_mut().enumerate() {
            *slot = self.coord(idx, d);
        }
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.point_into(idx, &mut out);
        out
    }

    pub fn is_interior(&self, idx: usize) -> bool {
        (0..self.dim()).all(|d| {
            let i = self.axis_index(idx, d);
            i > 0 && i + 1 < self.counts[d]
        })
    }

    pub fn clamp(&self, x: &mut [f64]) {
        for (d, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.low[d], self.high[d]);
        }
    }

    /// Multilinear stencil of the cell containing `clamp(x)`.
    pub fn stencil(&self, x: &[f64]) -> Stencil {
        let n = self.dim();
        let mut base = 0usize;
        let mut frac = [0.0f64; MAX_DIM];
        for d in 0..n {
            let v = x[d].clamp(self.low[d], self.high[d]);
            let mut s = (v - self.low[d]) / self.step[d];
            let nearest = s.round();
            if (s - nearest).abs() <= 1e-10 * nearest.abs().max(1.0) {
                s = nearest;
            }
            let cells = self.counts[d] - 1;
            let cell = (s.floor() as usize).min(cells - 1);
            frac[d] = (s - cell as f64).clamp(0.0, 1.0);
            base += cell * self.strides[d];
        }
        let mut stencil = Stencil { len: 1 << n, index: [0; MAX_CORNERS], weight: [0.0; MAX_CORNERS] };
        for corner in 0..(1 << n) {
            let mut idx = base;
            let mut w = 1.0;
            for d in 0..n {
                if corner >> d & 1 == 1 {
                    idx += self.strides[d];
                    w *= frac[d];
                } else {
                    w *= 1.0 - frac[d];
                }
            }
            stencil.index[corner] = idx;
            stencil.weight[corner] = w;
        }
        stencil
    }

    /// Multilinear interpolation of nodal `values` at `clamp(x)`.
    #[inline]
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        self.stencil(x).apply(values)
    }

    /// True when `other` describes the same nodes within `tol`.
    pub fn matches(&self, other: &GridSpec, tol: f64) -> bool {
        self.counts == other.counts
            && self.low.iter().zip(&other.low).all(|(a, b)| (a - b).abs() <= tol)
            && self.high.iter().zip(&other.high).all(|(a, b)| (a - b).abs() <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_interpolation_1d() {
        let g = GridSpec::new(&[2], &[(0.0, 1.0)]).unwrap();
        let v = [0.0, 10.0];
        assert_eq!(g.interpolate(&v, &[0.25]), 2.5);
        assert_eq!(g.interpolate(&v, &[-1.0]), 0.0);
        assert_eq!(g.interpolate(&v, &[3.0]), 10.0);
    }

    #[test]
    fn coordinates_are_reproducible() {
        let g = GridSpec::new(&[3, 5], &[(-1.0, 1.0), (0.0, 2.0)]).unwrap();
        assert_eq!(g.len(), 15);
        assert_eq!(g.point(0), vec![-1.0, 0.0]);
        assert_eq!(g.point(7), vec![0.0, 1.0]);
        assert_eq!(g.point(14), vec![1.0, 2.0]);
        assert!(g.is_interior(7));
        assert!(!g.is_interior(5));
    }

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(GridSpec::new(&[1], &[(0.0, 1.0)]), Err(GridError::TooFewPoints));
        assert!(matches!(GridSpec::new(&[3, 3], &[(0.0, 1.0)]), Err(GridError::Dimension { .. })));
        let b = [(0.0, 1.0); 4];
        assert_eq!(GridSpec::new(&[2; 4], &b), Err(GridError::TooLarge(4)));
    }

    #[test]
    fn bilinear_reproduces_affine() {
        let g = GridSpec::new(&[4, 3], &[(0.0, 3.0), (-1.0, 1.0)]).unwrap();
        let v: Vec<f64> = (0..g.len()).map(|i| { let p = g.point(i); 2.0 * p[0] - 3.0 * p[1] + 0.5 }).collect();
        let got = g.interpolate(&v, &[1.3, 0.2]);
        assert!((got - (2.0 * 1.3 - 0.6 + 0.5)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn exact_at_nodes(
            counts in proptest::collection::vec(2usize..7, 1..=3),
            seed in 0u64..1000,
        ) {
            let bounds: Vec<(f64, f64)> = counts.iter().enumerate().map(|(d, _)| (-1.0 - d as f64 * 0.3, 2.0 + d as f64)).collect();
            let g = GridSpec::new(&counts, &bounds).unwrap();
            let v: Vec<f64> = (0..g.len()).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 7.0).collect();
            for idx in 0..g.len() {
                prop_assert_eq!(g.interpolate(&v, &g.point(idx)), v[idx]);
            }
        }

        #[test]
        fn weights_form_a_partition_of_unity(x in proptest::collection::vec(-3.0f64..3.0, 2)) {
            let g = GridSpec::new(&[5, 4], &[(-1.0, 1.0), (0.0, 2.0)]).unwrap();
            let s = g.stencil(&x);
            let total: f64 = s.corners().map(|(_, w)| w).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(s.corners().all(|(i, w)| i < g.len() && w >= 0.0));
        }
    }
}
