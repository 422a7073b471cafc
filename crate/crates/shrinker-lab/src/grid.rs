//! Periodic parameter grids and finite-difference stencils.
//!
//! A `ParamGrid` discretizes the flat torus `T^k = prod R/(P_a Z)` with a
//! uniform tensor grid. Fields live on the nodes in row-major order; vector
//! quantities are interleaved with a fixed stride. All derivatives use
//! 4th-order centered stencils with periodic wrap-around:
//!
//! ```text
//! f'(x)  = (-f2 + 8 f1 - 8 f-1 + f-2) / (12 h)
//! f''(x) = (-f2 + 16 f1 - 30 f0 + 16 f-1 - f-2) / (12 h^2)
//! ```

use crate::LabError;

/// Uniform periodic grid on a k-torus.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrid {
    dims: Vec<usize>,
    periods: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

impl ParamGrid {
    /// Grid with the given per-axis node counts and periods.
    ///
    /// Each axis needs at least 8 nodes and an even count so that the wide
    /// stencils and half-node constructions stay well defined.
    pub fn new(dims: &[usize], periods: &[f64]) -> Result<Self, LabError> {
        if dims.is_empty() || dims.len() != periods.len() {
            return Err(LabError::Shape(format!(
                "grid wants matching dims/periods, got {} and {}",
                dims.len(),
                periods.len()
            )));
        }
        for (a, (&d, &p)) in dims.iter().zip(periods).enumerate() {
            if d < 8 || d % 2 != 0 {
                return Err(LabError::Shape(format!(
                    "axis {a}: node count {d} must be even and >= 8"
                )));
            }
            if !(p.is_finite() && p > 0.0) {
                return Err(LabError::Shape(format!("axis {a}: invalid period {p}")));
            }
        }
        let mut strides = vec![0usize; dims.len()];
        let mut acc = 1usize;
        for a in (0..dims.len()).rev() {
            strides[a] = acc;
            acc *= dims[a];
        }
        Ok(Self {
            dims: dims.to_vec(),
            periods: periods.to_vec(),
            strides,
            len: acc,
        })
    }

    /// Grid with all periods equal to `2 pi`.
    pub fn standard(dims: &[usize]) -> Result<Self, LabError> {
        Self::new(dims, &vec![std::f64::consts::TAU; dims.len()])
    }

    pub fn axes(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    /// Node spacing along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        self.periods[axis] / self.dims[axis] as f64
    }

    /// Volume of one parameter cell, `prod_a h_a`.
    pub fn cell_volume(&self) -> f64 {
        (0..self.axes()).map(|a| self.spacing(a)).product()
    }

    /// Parameter coordinate of `node` along `axis`.
    pub fn coord(&self, node: usize, axis: usize) -> f64 {
        self.axis_index(node, axis) as f64 * self.spacing(axis)
    }

    /// Integer index of `node` along `axis`.
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.dims[axis]
    }

    /// Node shifted by `offset` steps along `axis`, wrapping periodically.
    pub fn shifted(&self, node: usize, axis: usize, offset: isize) -> usize {
        let d = self.dims[axis] as isize;
        let i = self.axis_index(node, axis) as isize;
        let j = (i + offset).rem_euclid(d);
        (node as isize + (j - i) * self.strides[axis] as isize) as usize
    }

    /// First derivative along `axis` of an interleaved field with `stride`
    /// components per node.
    pub fn d1(&self, axis: usize, data: &[f64], stride: usize) -> Vec<f64> {
        assert_eq!(data.len(), self.len * stride, "field size mismatch");
        let inv = 1.0 / (12.0 * self.spacing(axis));
        let mut out = vec![0.0; data.len()];
        for node in 0..self.len {
            let p1 = self.shifted(node, axis, 1) * stride;
            let p2 = self.shifted(node, axis, 2) * stride;
            let m1 = self.shifted(node, axis, -1) * stride;
            let m2 = self.shifted(node, axis, -2) * stride;
            let base = node * stride;
            for c in 0..stride {
                out[base + c] =
                    (-data[p2 + c] + 8.0 * data[p1 + c] - 8.0 * data[m1 + c] + data[m2 + c]) * inv;
            }
        }
        out
    }

    /// Second derivative along `axis` (compact 5-point stencil).
    pub fn d2(&self, axis: usize, data: &[f64], stride: usize) -> Vec<f64> {
        assert_eq!(data.len(), self.len * stride, "field size mismatch");
        let h = self.spacing(axis);
        let inv = 1.0 / (12.0 * h * h);
        let mut out = vec![0.0; data.len()];
        for node in 0..self.len {
            let p1 = self.shifted(node, axis, 1) * stride;
            let p2 = self.shifted(node, axis, 2) * stride;
            let m1 = self.shifted(node, axis, -1) * stride;
            let m2 = self.shifted(node, axis, -2) * stride;
            let base = node * stride;
            for c in 0..stride {
                out[base + c] = (-data[p2 + c] + 16.0 * data[p1 + c] - 30.0 * data[base + c]
                    + 16.0 * data[m1 + c]
                    - data[m2 + c])
                    * inv;
            }
        }
        out
    }

    /// Second derivative `d_a d_b` as a composition of first-derivative
    /// stencils, also on the diagonal. Composing (rather than using the
    /// compact `d2`) makes the stencil response factor of each axis identical
    /// in the metric and in the second fundamental form, so contractions like
    /// `g^{ab} d_a d_b x` cancel the response exactly on single-mode factors;
    /// curvature of the trigonometric tori then comes out at roundoff rather
    /// than truncation accuracy.
    pub fn d1d1(&self, a: usize, b: usize, data: &[f64], stride: usize) -> Vec<f64> {
        self.d1(a, &self.d1(b, data, stride), stride)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn rejects_bad_axes() {
        assert!(ParamGrid::new(&[7], &[TAU]).is_err());
        assert!(ParamGrid::new(&[9], &[TAU]).is_err());
        assert!(ParamGrid::new(&[16], &[TAU, TAU]).is_err());
        assert!(ParamGrid::new(&[16], &[-1.0]).is_err());
        assert!(ParamGrid::new(&[16, 8], &[TAU, 1.0]).is_ok());
    }

    #[test]
    fn indexing_round_trip() {
        let g = ParamGrid::standard(&[8, 12, 10]).unwrap();
        assert_eq!(g.len(), 960);
        for node in [0usize, 1, 119, 959, 480] {
            let mut rebuilt = 0;
            for a in 0..3 {
                rebuilt += g.axis_index(node, a) * g.strides[a];
            }
            assert_eq!(rebuilt, node);
        }
        assert_eq!(g.shifted(0, 0, -1), 8 * 120 - 120);
        assert_eq!(g.shifted(5, 2, 7), 2);
    }

    #[test]
    fn derivative_is_fourth_order() {
        let errs: Vec<f64> = [32usize, 64]
            .iter()
            .map(|&n| {
                let g = ParamGrid::standard(&[n]).unwrap();
                let f: Vec<f64> = (0..n).map(|i| (3.0 * g.coord(i, 0)).sin()).collect();
                let df = g.d1(0, &f, 1);
                (0..n)
                    .map(|i| (df[i] - 3.0 * (3.0 * g.coord(i, 0)).cos()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.8, "observed order {order}");
    }

    #[test]
    fn second_derivative_matches_analytic() {
        let g = ParamGrid::standard(&[64, 64]).unwrap();
        let f: Vec<f64> = (0..g.len())
            .map(|i| (g.coord(i, 0)).sin() * (2.0 * g.coord(i, 1)).cos())
            .collect();
        let fxx = g.d2(0, &f, 1);
        let fxy = g.d1d1(0, 1, &f, 1);
        let mut exx: f64 = 0.0;
        let mut exy: f64 = 0.0;
        for i in 0..g.len() {
            let (t1, t2) = (g.coord(i, 0), g.coord(i, 1));
            exx = exx.max((fxx[i] + t1.sin() * (2.0 * t2).cos()).abs());
            exy = exy.max((fxy[i] + 2.0 * t1.cos() * (2.0 * t2).sin()).abs());
        }
        assert!(exx < 2e-5, "exx = {exx}");
        assert!(exy < 3e-4, "exy = {exy}");
    }

    #[test]
    fn interleaved_components_differentiate_independently() {
        let g = ParamGrid::standard(&[32]).unwrap();
        let mut data = vec![0.0; 64];
        for i in 0..32 {
            data[2 * i] = g.coord(i, 0).sin();
            data[2 * i + 1] = g.coord(i, 0).cos();
        }
        let d = g.d1(0, &data, 2);
        for i in 0..32 {
            assert!((d[2 * i] - g.coord(i, 0).cos()).abs() < 1e-4);
            assert!((d[2 * i + 1] + g.coord(i, 0).sin()).abs() < 1e-4);
        }
    }
}
