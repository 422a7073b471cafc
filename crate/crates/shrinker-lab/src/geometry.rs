//! Discretized immersions into `C^n` and their first/second-order geometry.
//!
//! Positions are sampled on a periodic parameter grid; every derived quantity
//! (tangents, metric, orthonormal frames, second fundamental form, mean
//! curvature) comes from the grid's 4th-order stencils and is cached on first
//! use. The ambient space carries the standard complex structure `J` acting
//! blockwise as `(a, b) -> (-b, a)` on each coordinate pair, with Kaehler form
//! `omega(u, v) = <J u, v>`.

use crate::grid::ParamGrid;
use crate::LabError;
use once_cell::sync::OnceCell;

/// `C^n` with its Euclidean metric and standard complex structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmbientStructure {
    n: usize,
}

impl AmbientStructure {
    pub fn new(complex_dim: usize) -> Self {
        assert!(complex_dim > 0, "ambient dimension must be positive");
        Self { n: complex_dim }
    }

    /// Complex dimension `n`.
    pub fn complex_dim(&self) -> usize {
        self.n
    }

    /// Real dimension `2n`.
    pub fn real_dim(&self) -> usize {
        2 * self.n
    }

    /// Apply `J` in place: `(u_{2j}, u_{2j+1}) -> (-u_{2j+1}, u_{2j})`.
    pub fn j_apply(&self, v: &mut [f64]) {
        debug_assert_eq!(v.len(), 2 * self.n);
        for j in 0..self.n {
            let (a, b) = (v[2 * j], v[2 * j + 1]);
            v[2 * j] = -b;
            v[2 * j + 1] = a;
        }
    }

    pub fn j_of(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        self.j_apply(&mut out);
        out
    }

    /// Kaehler form `omega(u, v) = <J u, v>`.
    pub fn omega(&self, u: &[f64], v: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), v.len());
        let mut s = 0.0;
        for j in 0..self.n {
            s += u[2 * j] * v[2 * j + 1] - u[2 * j + 1] * v[2 * j];
        }
        s
    }
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Projection target for [`ImmersionField::project`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    Tangent,
    Normal,
}

/// Cached first/second-order data of an immersion.
///
/// Layouts (all node-major, `k` = intrinsic dim, `N` = ambient real dim):
/// tangents `[node][a][c]`, metric and inverse `[node][a][b]`, frames
/// `[node][i][c]`, second derivatives `[node][a][b][c]`, Christoffel symbols
/// `[node][c][a][b]`.
pub struct Geometry {
    k: usize,
    nn: usize,
    pub tangents: Vec<f64>,
    pub metric: Vec<f64>,
    pub inv_metric: Vec<f64>,
    pub sqrt_det: Vec<f64>,
    /// Orthonormal tangent frame `e_i` (Gram-Schmidt in axis order).
    pub frame: Vec<f64>,
    /// Coefficients `E_i^a` with `e_i = E_i^a d_a x` (lower triangular).
    pub frame_coeff: Vec<f64>,
    /// Normal frame `nu_i = J e_i`.
    pub normal_frame: Vec<f64>,
    /// Raw coordinate second derivatives `d_a d_b x`.
    pub second: Vec<f64>,
    /// Normal part `A_ab = (d_a d_b x)^perp` (vector second fundamental form).
    pub second_normal: Vec<f64>,
    /// `Gamma^c_{ab} = g^{cd} <d_a d_b x, d_d x>`.
    pub christoffel: Vec<f64>,
    /// Mean curvature vector `H = g^{ab} A_ab`.
    pub mean_curvature: Vec<f64>,
    /// Tangential position in coordinates, `(x^T)^a = g^{ab} <x, d_b x>`.
    pub x_tan: Vec<f64>,
}

impl Geometry {
    pub fn tangent(&self, node: usize, a: usize) -> &[f64] {
        let s = (node * self.k + a) * self.nn;
        &self.tangents[s..s + self.nn]
    }
    pub fn metric_at(&self, node: usize) -> &[f64] {
        &self.metric[node * self.k * self.k..(node + 1) * self.k * self.k]
    }
    pub fn inv_metric_at(&self, node: usize) -> &[f64] {
        &self.inv_metric[node * self.k * self.k..(node + 1) * self.k * self.k]
    }
    pub fn frame_vec(&self, node: usize, i: usize) -> &[f64] {
        let s = (node * self.k + i) * self.nn;
        &self.frame[s..s + self.nn]
    }
    pub fn normal_vec(&self, node: usize, i: usize) -> &[f64] {
        let s = (node * self.k + i) * self.nn;
        &self.normal_frame[s..s + self.nn]
    }
    pub fn second_at(&self, node: usize, a: usize, b: usize) -> &[f64] {
        let s = ((node * self.k + a) * self.k + b) * self.nn;
        &self.second[s..s + self.nn]
    }
    pub fn second_normal_at(&self, node: usize, a: usize, b: usize) -> &[f64] {
        let s = ((node * self.k + a) * self.k + b) * self.nn;
        &self.second_normal[s..s + self.nn]
    }
    pub fn mean_curvature_at(&self, node: usize) -> &[f64] {
        &self.mean_curvature[node * self.nn..(node + 1) * self.nn]
    }
    pub fn x_tan_at(&self, node: usize) -> &[f64] {
        &self.x_tan[node * self.k..(node + 1) * self.k]
    }
    pub fn christoffel_at(&self, node: usize) -> &[f64] {
        let kk = self.k * self.k * self.k;
        &self.christoffel[node * kk..(node + 1) * kk]
    }
}

/// Sampled immersion `x : T^k -> C^n` with extinction data `(x0, t0)`.
pub struct ImmersionField {
    grid: ParamGrid,
    ambient: AmbientStructure,
    positions: Vec<f64>,
    center: Vec<f64>,
    time: f64,
    geo: OnceCell<Geometry>,
}

impl ImmersionField {
    pub fn new(
        grid: ParamGrid,
        ambient: AmbientStructure,
        positions: Vec<f64>,
        center: Vec<f64>,
        time: f64,
    ) -> Result<Self, LabError> {
        let nn = ambient.real_dim();
        if positions.len() != grid.len() * nn {
            return Err(LabError::Shape(format!(
                "positions: expected {} values, got {}",
                grid.len() * nn,
                positions.len()
            )));
        }
        if center.len() != nn {
            return Err(LabError::Shape(format!(
                "extinction center: expected dim {}, got {}",
                nn,
                center.len()
            )));
        }
        if !(time.is_finite() && time > 0.0) {
            return Err(LabError::Shape(format!("extinction time {time} invalid")));
        }
        if positions.iter().chain(center.iter()).any(|v| !v.is_finite()) {
            return Err(LabError::NonFinite("immersion data".into()));
        }
        Ok(Self {
            grid,
            ambient,
            positions,
            center,
            time,
            geo: OnceCell::new(),
        })
    }

    /// Immersion with the default extinction data `(0, 1)`.
    pub fn at_origin(
        grid: ParamGrid,
        ambient: AmbientStructure,
        positions: Vec<f64>,
    ) -> Result<Self, LabError> {
        let c = vec![0.0; ambient.real_dim()];
        Self::new(grid, ambient, positions, c, 1.0)
    }

    pub fn grid(&self) -> &ParamGrid {
        &self.grid
    }
    pub fn ambient(&self) -> &AmbientStructure {
        &self.ambient
    }
    pub fn node_count(&self) -> usize {
        self.grid.len()
    }
    pub fn intrinsic_dim(&self) -> usize {
        self.grid.axes()
    }
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
    pub fn position(&self, node: usize) -> &[f64] {
        let nn = self.ambient.real_dim();
        &self.positions[node * nn..(node + 1) * nn]
    }
    pub fn extinction_center(&self) -> &[f64] {
        &self.center
    }
    pub fn extinction_time(&self) -> f64 {
        self.time
    }

    /// Translate the immersion (and its extinction center) by `dx`.
    pub fn translated(&self, dx: &[f64]) -> Result<Self, LabError> {
        let nn = self.ambient.real_dim();
        assert_eq!(dx.len(), nn);
        let mut pos = self.positions.clone();
        for node in 0..self.node_count() {
            for c in 0..nn {
                pos[node * nn + c] += dx[c];
            }
        }
        let mut center = self.center.clone();
        for c in 0..nn {
            center[c] += dx[c];
        }
        Self::new(self.grid.clone(), self.ambient, pos, center, self.time)
    }

    /// Scale positions by `c` while keeping the extinction data fixed.
    /// The result of `c != 1` is deliberately *not* a shrinker for `(x0, t0)`.
    pub fn scaled_positions(&self, c: f64) -> Result<Self, LabError> {
        let pos = self.positions.iter().map(|v| v * c).collect();
        Self::new(
            self.grid.clone(),
            self.ambient,
            pos,
            self.center.clone(),
            self.time,
        )
    }

    /// Displace along an ambient field: `x + s V`.
    pub fn displaced(&self, field: &AmbientVectorField, s: f64) -> Result<Self, LabError> {
        assert_eq!(field.data.len(), self.positions.len());
        let pos = self
            .positions
            .iter()
            .zip(&field.data)
            .map(|(x, v)| x + s * v)
            .collect();
        Self::new(
            self.grid.clone(),
            self.ambient,
            pos,
            self.center.clone(),
            self.time,
        )
    }

    /// Derive (or fetch cached) geometry.
    pub fn geometry(&self) -> Result<&Geometry, LabError> {
        self.geo.get_or_try_init(|| self.derive_geometry())
    }

    fn derive_geometry(&self) -> Result<Geometry, LabError> {
        let g = &self.grid;
        let k = g.axes();
        let nn = self.ambient.real_dim();
        let nodes = g.len();

        let mut tangents = vec![0.0; nodes * k * nn];
        for a in 0..k {
            let da = g.d1(a, &self.positions, nn);
            for node in 0..nodes {
                let dst = (node * k + a) * nn;
                tangents[dst..dst + nn].copy_from_slice(&da[node * nn..(node + 1) * nn]);
            }
        }

        let mut second = vec![0.0; nodes * k * k * nn];
        for a in 0..k {
            for b in a..k {
                let dab = g.d1d1(a, b, &self.positions, nn);
                for node in 0..nodes {
                    let src = &dab[node * nn..(node + 1) * nn];
                    let d1 = ((node * k + a) * k + b) * nn;
                    second[d1..d1 + nn].copy_from_slice(src);
                    if a != b {
                        let d2 = ((node * k + b) * k + a) * nn;
                        second[d2..d2 + nn].copy_from_slice(src);
                    }
                }
            }
        }

        let mut metric = vec![0.0; nodes * k * k];
        let mut inv_metric = vec![0.0; nodes * k * k];
        let mut sqrt_det = vec![0.0; nodes];
        let mut frame = vec![0.0; nodes * k * nn];
        let mut frame_coeff = vec![0.0; nodes * k * k];
        let mut normal_frame = vec![0.0; nodes * k * nn];
        let mut second_normal = vec![0.0; nodes * k * k * nn];
        let mut christoffel = vec![0.0; nodes * k * k * k];
        let mut mean_curvature = vec![0.0; nodes * nn];
        let mut x_tan = vec![0.0; nodes * k];

        let mut chol = vec![0.0; k * k];
        for node in 0..nodes {
            let tan = |a: usize| &tangents[(node * k + a) * nn..(node * k + a) * nn + nn];
            for a in 0..k {
                if norm(tan(a)) < 1e-12 {
                    return Err(LabError::NonImmersion { node });
                }
            }
            let mb = node * k * k;
            for a in 0..k {
                for b in 0..k {
                    metric[mb + a * k + b] = dot(tan(a), tan(b));
                }
            }

            // Cholesky of the Gram matrix; failure means a degenerate metric.
            chol.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..k {
                for j in 0..=i {
                    let mut s = metric[mb + i * k + j];
                    for l in 0..j {
                        s -= chol[i * k + l] * chol[j * k + l];
                    }
                    if i == j {
                        if s <= 0.0 {
                            return Err(LabError::DegenerateMetric { node });
                        }
                        chol[i * k + j] = s.sqrt();
                    } else {
                        chol[i * k + j] = s / chol[j * k + j];
                    }
                }
            }
            sqrt_det[node] = (0..k).map(|i| chol[i * k + i]).product();

            // inverse metric from the Cholesky factor: solve L L^T X = I.
            for col in 0..k {
                let mut y = vec![0.0; k];
                for i in 0..k {
                    let mut s = if i == col { 1.0 } else { 0.0 };
                    for l in 0..i {
                        s -= chol[i * k + l] * y[l];
                    }
                    y[i] = s / chol[i * k + i];
                }
                for i in (0..k).rev() {
                    let mut s = y[i];
                    for l in i + 1..k {
                        s -= chol[l * k + i] * inv_metric[mb + l * k + col];
                    }
                    inv_metric[mb + i * k + col] = s / chol[i * k + i];
                }
            }

            // Gram-Schmidt frame in fixed axis order, tracking coefficients.
            for i in 0..k {
                let fb = (node * k + i) * nn;
                let cb = node * k * k + i * k;
                let (head, tail) = frame.split_at_mut(fb);
                let cur = &mut tail[..nn];
                cur.copy_from_slice(tan(i));
                frame_coeff[cb + i] = 1.0;
                for j in 0..i {
                    let prev = &head[(node * k + j) * nn..(node * k + j) * nn + nn];
                    let c = dot(tan(i), prev);
                    for x in 0..nn {
                        cur[x] -= c * prev[x];
                    }
                    for a in 0..=j {
                        frame_coeff[cb + a] -= c * frame_coeff[node * k * k + j * k + a];
                    }
                }
                let nrm = norm(cur);
                if nrm < 1e-12 {
                    return Err(LabError::DegenerateMetric { node });
                }
                for x in 0..nn {
                    cur[x] /= nrm;
                }
                for a in 0..=i {
                    frame_coeff[cb + a] /= nrm;
                }
            }
            for i in 0..k {
                let fb = (node * k + i) * nn;
                let j = self.ambient.j_of(&frame[fb..fb + nn]);
                normal_frame[fb..fb + nn].copy_from_slice(&j);
            }

            // Christoffel symbols and the normal second fundamental form.
            for a in 0..k {
                for b in 0..k {
                    let sb = ((node * k + a) * k + b) * nn;
                    let sec: Vec<f64> = second[sb..sb + nn].to_vec();
                    for c in 0..k {
                        let mut s = 0.0;
                        for d in 0..k {
                            s += inv_metric[mb + c * k + d] * dot(&sec, tan(d));
                        }
                        christoffel[node * k * k * k + c * k * k + a * k + b] = s;
                    }
                    let mut nrm_part = sec.clone();
                    for i in 0..k {
                        let e = &frame[(node * k + i) * nn..(node * k + i) * nn + nn];
                        let c = dot(&sec, e);
                        for x in 0..nn {
                            nrm_part[x] -= c * e[x];
                        }
                    }
                    second_normal[sb..sb + nn].copy_from_slice(&nrm_part);
                }
            }
            for a in 0..k {
                for b in 0..k {
                    let w = inv_metric[mb + a * k + b];
                    let sb = ((node * k + a) * k + b) * nn;
                    for x in 0..nn {
                        mean_curvature[node * nn + x] += w * second_normal[sb + x];
                    }
                }
            }
            let pos = self.position(node);
            for a in 0..k {
                let mut s = 0.0;
                for b in 0..k {
                    s += inv_metric[mb + a * k + b] * dot(pos, tan(b));
                }
                x_tan[node * k + a] = s;
            }
        }

        Ok(Geometry {
            k,
            nn,
            tangents,
            metric,
            inv_metric,
            sqrt_det,
            frame,
            frame_coeff,
            normal_frame,
            second,
            second_normal,
            christoffel,
            mean_curvature,
            x_tan,
        })
    }

    /// Project an ambient vector at `node` onto the tangent or normal space.
    pub fn project(&self, node: usize, v: &[f64], mode: ProjectionMode) -> Result<Vec<f64>, LabError> {
        let geo = self.geometry()?;
        let k = self.intrinsic_dim();
        let mut tang = vec![0.0; v.len()];
        for i in 0..k {
            let e = geo.frame_vec(node, i);
            let c = dot(v, e);
            for x in 0..v.len() {
                tang[x] += c * e[x];
            }
        }
        Ok(match mode {
            ProjectionMode::Tangent => tang,
            ProjectionMode::Normal => v.iter().zip(&tang).map(|(a, b)| a - b).collect(),
        })
    }

    /// Largest relative symplectic pairing among coordinate tangents.
    pub fn lagrangian_defect(&self) -> Result<f64, LabError> {
        let geo = self.geometry()?;
        let k = self.intrinsic_dim();
        let mut worst: f64 = 0.0;
        for node in 0..self.node_count() {
            let m = geo.metric_at(node);
            for a in 0..k {
                for b in a + 1..k {
                    let w = self.ambient.omega(geo.tangent(node, a), geo.tangent(node, b));
                    worst = worst.max(w.abs() / (m[a * k + a] * m[b * k + b]).sqrt());
                }
            }
        }
        Ok(worst)
    }

    /// `sup_node |H + (x - x0)^perp / (2 t0)|`.
    pub fn shrinker_residual(&self) -> Result<f64, LabError> {
        let geo = self.geometry()?;
        let nn = self.ambient.real_dim();
        let mut worst: f64 = 0.0;
        for node in 0..self.node_count() {
            let rel: Vec<f64> = self
                .position(node)
                .iter()
                .zip(&self.center)
                .map(|(x, c)| x - c)
                .collect();
            let perp = self.project(node, &rel, ProjectionMode::Normal)?;
            let h = geo.mean_curvature_at(node);
            let mut s = 0.0;
            for x in 0..nn {
                let r = h[x] + perp[x] / (2.0 * self.time);
                s += r * r;
            }
            worst = worst.max(s.sqrt());
        }
        Ok(worst)
    }

    /// Defect of the full symmetry of `h_{ijk} = <A(e_i, e_j), nu_k>`
    /// under `j <-> k` (automatic in `(i, j)`, Lagrangian-specific in `j <-> k`).
    pub fn h_symmetry_defect(&self) -> Result<f64, LabError> {
        let geo = self.geometry()?;
        let k = self.intrinsic_dim();
        let mut worst: f64 = 0.0;
        for node in 0..self.node_count() {
            let e = |i: usize, a: usize| geo.frame_coeff[node * k * k + i * k + a];
            let mut h = vec![0.0; k * k * k];
            for i in 0..k {
                for j in 0..k {
                    let mut vec_ij = vec![0.0; self.ambient.real_dim()];
                    for a in 0..=i {
                        for b in 0..=j {
                            let c = e(i, a) * e(j, b);
                            let s = geo.second_normal_at(node, a, b);
                            for x in 0..vec_ij.len() {
                                vec_ij[x] += c * s[x];
                            }
                        }
                    }
                    for m in 0..k {
                        h[(i * k + j) * k + m] = dot(&vec_ij, geo.normal_vec(node, m));
                    }
                }
            }
            for i in 0..k {
                for j in 0..k {
                    for m in 0..k {
                        worst = worst.max((h[(i * k + j) * k + m] - h[(i * k + m) * k + j]).abs());
                    }
                }
            }
        }
        Ok(worst)
    }

    /// Largest deviation of the frame Gram matrix from the identity.
    pub fn frame_orthonormality_defect(&self) -> Result<f64, LabError> {
        let geo = self.geometry()?;
        let k = self.intrinsic_dim();
        let mut worst: f64 = 0.0;
        for node in 0..self.node_count() {
            for i in 0..k {
                for j in 0..k {
                    let d = dot(geo.frame_vec(node, i), geo.frame_vec(node, j))
                        - if i == j { 1.0 } else { 0.0 };
                    worst = worst.max(d.abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Per-node ambient vectors, optionally validated as normal-valued.
#[derive(Debug, Clone)]
pub struct AmbientVectorField {
    pub data: Vec<f64>,
    normal: bool,
}

impl AmbientVectorField {
    pub fn general(data: Vec<f64>) -> Self {
        Self {
            data,
            normal: false,
        }
    }

    /// Wrap a field that must already be normal-valued; fails if the relative
    /// tangential defect exceeds `1e-7` at any node.
    pub fn normal_checked(imm: &ImmersionField, data: Vec<f64>) -> Result<Self, LabError> {
        let nn = imm.ambient().real_dim();
        assert_eq!(data.len(), imm.node_count() * nn);
        let mut defect: f64 = 0.0;
        for node in 0..imm.node_count() {
            let v = &data[node * nn..(node + 1) * nn];
            let t = imm.project(node, v, ProjectionMode::Tangent)?;
            defect = defect.max(norm(&t) / (1.0 + norm(v)));
        }
        if defect > 1e-7 {
            return Err(LabError::NotNormal { defect });
        }
        Ok(Self { data, normal: true })
    }

    /// Project an arbitrary ambient field pointwise onto the normal bundle.
    pub fn normal_projected(imm: &ImmersionField, data: &[f64]) -> Result<Self, LabError> {
        let nn = imm.ambient().real_dim();
        assert_eq!(data.len(), imm.node_count() * nn);
        let mut out = vec![0.0; data.len()];
        for node in 0..imm.node_count() {
            let v = imm.project(node, &data[node * nn..(node + 1) * nn], ProjectionMode::Normal)?;
            out[node * nn..(node + 1) * nn].copy_from_slice(&v);
        }
        Ok(Self {
            data: out,
            normal: true,
        })
    }

    /// Constant ambient vector projected to the normal bundle (`w^perp`).
    pub fn constant_normal(imm: &ImmersionField, w: &[f64]) -> Result<Self, LabError> {
        let nn = imm.ambient().real_dim();
        assert_eq!(w.len(), nn);
        let mut data = vec![0.0; imm.node_count() * nn];
        for node in 0..imm.node_count() {
            data[node * nn..(node + 1) * nn].copy_from_slice(w);
        }
        Self::normal_projected(imm, &data)
    }

    /// Mean curvature as a normal field.
    pub fn mean_curvature(imm: &ImmersionField) -> Result<Self, LabError> {
        let geo = imm.geometry()?;
        Ok(Self {
            data: geo.mean_curvature.clone(),
            normal: true,
        })
    }

    pub fn is_normal(&self) -> bool {
        self.normal
    }

    pub fn at<'a>(&'a self, node: usize, nn: usize) -> &'a [f64] {
        &self.data[node * nn..(node + 1) * nn]
    }

    pub fn sup_norm(&self, nn: usize) -> f64 {
        self.data
            .chunks(nn)
            .map(|v| norm(v))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use std::f64::consts::TAU;

    fn clifford2(res: usize) -> ImmersionField {
        catalog::build_clifford(2, &[res, res]).unwrap().immersion
    }

    #[test]
    fn j_squares_to_minus_one() {
        let am = AmbientStructure::new(3);
        let v = vec![1.0, -2.0, 0.5, 3.0, -1.0, 4.0];
        let jj = am.j_of(&am.j_of(&v));
        for (a, b) in v.iter().zip(&jj) {
            assert!((a + b).abs() < 1e-15);
        }
        // omega(u, Jv) = <u, v>
        let u = vec![0.3, 1.0, -0.7, 0.2, 0.9, -1.1];
        assert!((am.omega(&u, &am.j_of(&v)) - dot(&u, &v)).abs() < 1e-14);
    }

    #[test]
    fn clifford_metric_and_curvature() {
        // stencil error on a pure mode is h^4/30 per derivative, so pick the
        // tolerances from the resolution rather than machine precision
        let imm = clifford2(32);
        let geo = imm.geometry().unwrap();
        for node in 0..imm.node_count() {
            let m = geo.metric_at(node);
            assert!((m[0] - 2.0).abs() < 3e-4);
            assert!((m[3] - 2.0).abs() < 3e-4);
            assert!(m[1].abs() < 1e-12);
            assert!((geo.sqrt_det[node] - 2.0).abs() < 3e-4);
            // composed stencils cancel against the metric on pure modes,
            // so H = -x/2 holds to roundoff here, not just stencil accuracy
            let h = geo.mean_curvature_at(node);
            let x = imm.position(node);
            for c in 0..4 {
                assert!((h[c] + 0.5 * x[c]).abs() < 1e-12, "node {node} comp {c}");
            }
        }
        assert!(imm.lagrangian_defect().unwrap() < 1e-12);
        assert!(imm.frame_orthonormality_defect().unwrap() < 1e-12);
    }

    #[test]
    fn mean_curvature_trace_identity() {
        // <H, nu_m> must equal sum_i h_iim as computed from the same caches.
        let imm = clifford2(16);
        let geo = imm.geometry().unwrap();
        let k = 2;
        for node in [0usize, 5, 100] {
            for m in 0..k {
                let lhs = dot(geo.mean_curvature_at(node), geo.normal_vec(node, m));
                let mut rhs = 0.0;
                for i in 0..k {
                    for a in 0..k {
                        for b in 0..k {
                            let c = geo.frame_coeff[node * 4 + i * 2 + a]
                                * geo.frame_coeff[node * 4 + i * 2 + b];
                            rhs += c * dot(geo.second_normal_at(node, a, b), geo.normal_vec(node, m));
                        }
                    }
                }
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_splits_identity() {
        let imm = clifford2(12);
        let v = vec![0.25, -1.0, 0.75, 2.0];
        for node in [0usize, 7, 50] {
            let t = imm.project(node, &v, ProjectionMode::Tangent).unwrap();
            let n = imm.project(node, &v, ProjectionMode::Normal).unwrap();
            for c in 0..4 {
                assert!((t[c] + n[c] - v[c]).abs() < 1e-14);
            }
            // x is purely normal on the Clifford torus
            let x = imm.position(node).to_vec();
            let xt = imm.project(node, &x, ProjectionMode::Tangent).unwrap();
            assert!(norm(&xt) < 1e-12);
        }
    }

    #[test]
    fn shrinker_residual_detects_scaling() {
        let imm = clifford2(32);
        assert!(imm.shrinker_residual().unwrap() < 1e-12);
        let off = imm.scaled_positions(1.05).unwrap();
        assert!(off.shrinker_residual().unwrap() > 1e-2);
    }

    #[test]
    fn h_symmetry_holds_for_lagrangian_tori() {
        let imm = clifford2(16);
        assert!(imm.h_symmetry_defect().unwrap() < 1e-10);
    }

    #[test]
    fn degenerate_positions_rejected() {
        let grid = ParamGrid::standard(&[8]).unwrap();
        let am = AmbientStructure::new(1);
        let imm = ImmersionField::at_origin(grid, am, vec![1.0; 16]).unwrap();
        match imm.geometry() {
            Err(LabError::NonImmersion { .. }) => {}
            other => panic!("expected NonImmersion, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn unitary_equivariance() {
        // A unitary of C^2 (here: multiply both complex coordinates by phases)
        // commutes with J and maps frames, H by the same map.
        let imm = clifford2(16);
        let (c1, s1) = (0.6f64.cos(), 0.6f64.sin());
        let (c2, s2) = (1.3f64.cos(), 1.3f64.sin());
        let rot = |v: &[f64]| -> Vec<f64> {
            vec![
                c1 * v[0] - s1 * v[1],
                s1 * v[0] + c1 * v[1],
                c2 * v[2] - s2 * v[3],
                s2 * v[2] + c2 * v[3],
            ]
        };
        let mut pos = Vec::with_capacity(imm.positions().len());
        for node in 0..imm.node_count() {
            pos.extend(rot(imm.position(node)));
        }
        let rimm = ImmersionField::at_origin(imm.grid().clone(), *imm.ambient(), pos).unwrap();
        let geo = imm.geometry().unwrap();
        let rgeo = rimm.geometry().unwrap();
        for node in [0usize, 33, 200] {
            let want = rot(geo.mean_curvature_at(node));
            let got = rgeo.mean_curvature_at(node);
            for c in 0..4 {
                assert!((want[c] - got[c]).abs() < 1e-12);
            }
            let wf = rot(geo.frame_vec(node, 1));
            let gf = rgeo.frame_vec(node, 1);
            for c in 0..4 {
                assert!((wf[c] - gf[c]).abs() < 1e-12);
            }
        }
        let tau_check = (TAU - 2.0 * std::f64::consts::PI).abs();
        assert!(tau_check < 1e-15);
    }
}
