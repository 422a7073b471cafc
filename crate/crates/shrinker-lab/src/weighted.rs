//! Gaussian-weighted calculus on a discretized immersion: quadrature, the
//! F-functional and entropy search, the classical weighted integral
//! identities, the drift Laplacian on scalars, and first variations.
//!
//! The weight is `e^{-|x-x0|^2/(4 t0)}`; quadrature is the periodic
//! trapezoid rule (spectrally accurate for smooth integrands). The
//! `(4 pi t0)^{-n/2}` prefactor is applied by [`f_functional`] and the
//! variation formulas, never stored in the measure.

use crate::geometry::{dot, AmbientVectorField, ImmersionField, ProjectionMode};
use crate::LabError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

/// Per-node Gaussian quadrature weights for a fixed center and scale.
pub struct WeightedMeasure<'a> {
    imm: &'a ImmersionField,
    x0: Vec<f64>,
    t0: f64,
    density: Vec<f64>,
    node_measure: Vec<f64>,
}

impl<'a> WeightedMeasure<'a> {
    pub fn new(imm: &'a ImmersionField, x0: &[f64], t0: f64) -> Result<Self, LabError> {
        let nn = imm.ambient().real_dim();
        if x0.len() != nn {
            return Err(LabError::Shape(format!(
                "center has {} components, ambient dimension is {nn}",
                x0.len()
            )));
        }
        if !(t0 > 0.0) || !t0.is_finite() {
            return Err(LabError::Config(format!("scale t0 = {t0} must be positive")));
        }
        let geo = imm.geometry()?;
        let cell = imm.grid().cell_volume();
        let n = imm.node_count();
        let mut density = Vec::with_capacity(n);
        let mut node_measure = Vec::with_capacity(n);
        for node in 0..n {
            let x = imm.position(node);
            let mut r2 = 0.0;
            for c in 0..nn {
                let d = x[c] - x0[c];
                r2 += d * d;
            }
            let w = (-r2 / (4.0 * t0)).exp();
            density.push(w);
            node_measure.push(w * geo.sqrt_det[node] * cell);
        }
        Ok(Self {
            imm,
            x0: x0.to_vec(),
            t0,
            density,
            node_measure,
        })
    }

    /// Measure at the immersion's own extinction pair.
    pub fn at_extinction(imm: &'a ImmersionField) -> Result<Self, LabError> {
        let x0 = imm.extinction_center().to_vec();
        let t0 = imm.extinction_time();
        Self::new(imm, &x0, t0)
    }

    pub fn center(&self) -> &[f64] {
        &self.x0
    }

    pub fn scale(&self) -> f64 {
        self.t0
    }

    /// `e^{-|x-x0|^2/(4 t0)}` per node.
    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// Density times `sqrt(det g)` times the parameter cell volume.
    pub fn node_measure(&self) -> &[f64] {
        &self.node_measure
    }

    /// `(4 pi t0)^{-n/2}` for the intrinsic dimension of the immersion.
    pub fn prefactor(&self) -> f64 {
        (4.0 * PI * self.t0).powf(-(self.imm.intrinsic_dim() as f64) / 2.0)
    }

    /// `int field e^{-f} dmu`.
    pub fn integrate(&self, field: &[f64]) -> f64 {
        field
            .iter()
            .zip(&self.node_measure)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `int e^{-f} dmu`.
    pub fn total(&self) -> f64 {
        self.node_measure.iter().sum()
    }
}

/// `int field e^{-|x-x0|^2/(4 t0)} dmu` (no prefactor).
pub fn weighted_integral(
    imm: &ImmersionField,
    field: &[f64],
    x0: &[f64],
    t0: f64,
) -> Result<f64, LabError> {
    if field.len() != imm.node_count() {
        return Err(LabError::Shape(format!(
            "field has {} samples, grid has {} nodes",
            field.len(),
            imm.node_count()
        )));
    }
    Ok(WeightedMeasure::new(imm, x0, t0)?.integrate(field))
}

/// The Gaussian-weighted area `(4 pi t0)^{-n/2} int e^{-|x-x0|^2/(4 t0)} dmu`.
pub fn f_functional(imm: &ImmersionField, x0: &[f64], t0: f64) -> Result<f64, LabError> {
    let wm = WeightedMeasure::new(imm, x0, t0)?;
    Ok(wm.prefactor() * wm.total())
}

// --- scalar calculus -------------------------------------------------------

/// Covariant partial derivatives of a scalar field, `[node * k + a]`.
pub fn scalar_partials(imm: &ImmersionField, u: &[f64]) -> Result<Vec<f64>, LabError> {
    let g = imm.grid();
    if u.len() != g.len() {
        return Err(LabError::Shape("scalar field size mismatch".into()));
    }
    let k = g.axes();
    let mut out = vec![0.0; g.len() * k];
    for a in 0..k {
        let da = g.d1(a, u, 1);
        for node in 0..g.len() {
            out[node * k + a] = da[node];
        }
    }
    Ok(out)
}

/// Pointwise `g(grad u, grad v) = g^{ab} du_a dv_b` from covariant partials.
pub fn grad_inner(
    imm: &ImmersionField,
    du: &[f64],
    dv: &[f64],
) -> Result<Vec<f64>, LabError> {
    let geo = imm.geometry()?;
    let k = imm.intrinsic_dim();
    let n = imm.node_count();
    if du.len() != n * k || dv.len() != n * k {
        return Err(LabError::Shape("partial-derivative field size mismatch".into()));
    }
    let mut out = vec![0.0; n];
    for node in 0..n {
        let gi = geo.inv_metric_at(node);
        let mut s = 0.0;
        for a in 0..k {
            for b in 0..k {
                s += gi[a * k + b] * du[node * k + a] * dv[node * k + b];
            }
        }
        out[node] = s;
    }
    Ok(out)
}

/// Laplace-Beltrami of a scalar: `g^{ab} (d_a d_b u - Gamma^c_{ab} d_c u)`.
pub fn laplace_beltrami(imm: &ImmersionField, u: &[f64]) -> Result<Vec<f64>, LabError> {
    let g = imm.grid();
    let geo = imm.geometry()?;
    let k = g.axes();
    let n = g.len();
    if u.len() != n {
        return Err(LabError::Shape("scalar field size mismatch".into()));
    }
    let du: Vec<Vec<f64>> = (0..k).map(|a| g.d1(a, u, 1)).collect();
    let mut out = vec![0.0; n];
    for a in 0..k {
        for b in a..k {
            let dab = g.d1(a, &du[b], 1);
            let sym = if a == b { 1.0 } else { 2.0 };
            for node in 0..n {
                let gi = geo.inv_metric_at(node);
                let ch = geo.christoffel_at(node);
                let mut corr = 0.0;
                for c in 0..k {
                    corr += ch[c * k * k + a * k + b] * du[c][node];
                }
                out[node] += sym * gi[a * k + b] * (dab[node] - corr);
            }
        }
    }
    Ok(out)
}

/// Drift Laplacian `Lap u - <(x-x0)^T, grad u> / (2 t0)`.
pub fn drift_laplacian(
    imm: &ImmersionField,
    u: &[f64],
    x0: &[f64],
    t0: f64,
) -> Result<Vec<f64>, LabError> {
    let geo = imm.geometry()?;
    let k = imm.intrinsic_dim();
    let nn = imm.ambient().real_dim();
    let mut out = laplace_beltrami(imm, u)?;
    let du = scalar_partials(imm, u)?;
    for node in 0..imm.node_count() {
        let gi = geo.inv_metric_at(node);
        let x = imm.position(node);
        let mut drift = 0.0;
        for a in 0..k {
            let t = geo.tangent(node, a);
            let mut xt = 0.0;
            for c in 0..nn {
                xt += (x[c] - x0[c]) * t[c];
            }
            for b in 0..k {
                drift += xt * gi[a * k + b] * du[node * k + b];
            }
        }
        out[node] -= drift / (2.0 * t0);
    }
    Ok(out)
}

/// Relative defect of `int u Lap_f v w = -int g(grad u, grad v) w`.
pub fn ibp_defect(
    imm: &ImmersionField,
    u: &[f64],
    v: &[f64],
    x0: &[f64],
    t0: f64,
) -> Result<f64, LabError> {
    let wm = WeightedMeasure::new(imm, x0, t0)?;
    let lv = drift_laplacian(imm, v, x0, t0)?;
    let du = scalar_partials(imm, u)?;
    let dv = scalar_partials(imm, v)?;
    let gg = grad_inner(imm, &du, &dv)?;
    let lhs: Vec<f64> = u.iter().zip(&lv).map(|(a, b)| a * b).collect();
    let num = wm.integrate(&lhs) + wm.integrate(&gg);
    let scale: f64 = lhs
        .iter()
        .zip(&gg)
        .zip(wm.node_measure())
        .map(|((a, b), m)| (a.abs() + b.abs()) * m)
        .sum();
    if scale <= 0.0 {
        return Ok(0.0);
    }
    Ok(num.abs() / scale)
}

// --- the six weighted integral identities ----------------------------------

/// Normalized residual of one of the six shrinker integral identities
/// (`index` in `1..=6`), taken at the immersion's extinction pair.
/// The residual is `|int I| / int |I|`; when `int |I|` sits at roundoff
/// relative to the termwise scale (a pointwise-vanishing integrand), the
/// identity holds degenerately and the residual is reported as 0.
pub fn identity_residual(
    imm: &ImmersionField,
    index: usize,
    w: &[f64],
) -> Result<f64, LabError> {
    let nn = imm.ambient().real_dim();
    if !(1..=6).contains(&index) {
        return Err(LabError::Config(format!("identity index {index} not in 1..=6")));
    }
    if matches!(index, 1 | 4 | 5 | 6) && w.len() != nn {
        return Err(LabError::Shape(format!(
            "direction vector has {} components, ambient dimension is {nn}",
            w.len()
        )));
    }
    let wm = WeightedMeasure::at_extinction(imm)?;
    let geo = imm.geometry()?;
    let t0 = imm.extinction_time();
    let x0 = imm.extinction_center();
    let ndim = imm.intrinsic_dim() as f64;
    let n = imm.node_count();

    let mut integrand = vec![0.0; n];
    let mut termscale = vec![0.0; n];
    let mut dx = vec![0.0; nn];
    for node in 0..n {
        let x = imm.position(node);
        for c in 0..nn {
            dx[c] = x[c] - x0[c];
        }
        let r2 = dot(&dx, &dx);
        match index {
            1 => {
                integrand[node] = dot(&dx, w);
                termscale[node] = r2.sqrt() * dot(w, w).sqrt();
            }
            2 => {
                integrand[node] = r2 - 2.0 * ndim * t0;
                termscale[node] = r2 + 2.0 * ndim * t0;
            }
            3 => {
                let h = geo.mean_curvature_at(node);
                let h2 = dot(h, h);
                integrand[node] =
                    r2 * r2 - 4.0 * ndim * (ndim + 2.0) * t0 * t0 + 16.0 * t0.powi(3) * h2;
                termscale[node] =
                    r2 * r2 + 4.0 * ndim * (ndim + 2.0) * t0 * t0 + 16.0 * t0.powi(3) * h2;
            }
            4 => {
                let wt = imm.project(node, w, ProjectionMode::Tangent)?;
                let xw = dot(&dx, w);
                integrand[node] = xw * xw - 2.0 * t0 * dot(&wt, &wt);
                termscale[node] = xw * xw + 2.0 * t0 * dot(&wt, &wt);
            }
            5 => {
                integrand[node] = r2 * dot(&dx, w);
                termscale[node] = r2 * r2.sqrt() * dot(w, w).sqrt();
            }
            6 => {
                let xt = imm.project(node, &dx, ProjectionMode::Tangent)?;
                integrand[node] = dot(&xt, w);
                termscale[node] = r2.sqrt() * dot(w, w).sqrt();
            }
            _ => unreachable!(),
        }
    }
    let num = wm.integrate(&integrand).abs();
    let denom: f64 = integrand
        .iter()
        .zip(wm.node_measure())
        .map(|(a, m)| a.abs() * m)
        .sum();
    let scale = wm.integrate(&termscale);
    if denom <= 1e-12 * scale || scale == 0.0 {
        return Ok(0.0);
    }
    Ok(num / denom)
}

/// All six identity residuals for one direction vector.
pub fn identity_suite(imm: &ImmersionField, w: &[f64]) -> Result<[f64; 6], LabError> {
    let mut out = [0.0; 6];
    for (i, slot) in out.iter_mut().enumerate() {
        *slot = identity_residual(imm, i + 1, w)?;
    }
    Ok(out)
}

// --- first variation -------------------------------------------------------

/// First variation of `F_{x0,t0}` under a normal field `X`, center velocity
/// `y` and scale velocity `h`. Zero (to quadrature accuracy) exactly when the
/// immersion is a shrinker extinct at `(x0, t0)`.
pub fn first_variation(
    imm: &ImmersionField,
    xfield: &AmbientVectorField,
    y: &[f64],
    h: f64,
    x0: &[f64],
    t0: f64,
) -> Result<f64, LabError> {
    let nn = imm.ambient().real_dim();
    if y.len() != nn {
        return Err(LabError::Shape("center velocity has wrong dimension".into()));
    }
    if !xfield.is_normal() {
        let defect = normal_defect(imm, xfield)?;
        return Err(LabError::NotNormal { defect });
    }
    let wm = WeightedMeasure::new(imm, x0, t0)?;
    let geo = imm.geometry()?;
    let ndim = imm.intrinsic_dim() as f64;
    let n = imm.node_count();
    let mut integrand = vec![0.0; n];
    let mut dx = vec![0.0; nn];
    for node in 0..n {
        let x = imm.position(node);
        for c in 0..nn {
            dx[c] = x[c] - x0[c];
        }
        let hvec = geo.mean_curvature_at(node);
        let xv = xfield.at(node, nn);
        let mut xh = 0.0;
        for c in 0..nn {
            xh += xv[c] * (hvec[c] + dx[c] / (2.0 * t0));
        }
        let r2 = dot(&dx, &dx);
        integrand[node] = -xh + dot(&dx, y) / (2.0 * t0)
            + h * (r2 / (4.0 * t0 * t0) - ndim / (2.0 * t0));
    }
    Ok(wm.prefactor() * wm.integrate(&integrand))
}

fn normal_defect(imm: &ImmersionField, xfield: &AmbientVectorField) -> Result<f64, LabError> {
    let nn = imm.ambient().real_dim();
    let mut worst: f64 = 0.0;
    for node in 0..imm.node_count() {
        let v = xfield.at(node, nn);
        let t = imm.project(node, v, ProjectionMode::Tangent)?;
        let tn = dot(&t, &t).sqrt();
        let vn = dot(v, v).sqrt();
        if vn > 1e-14 {
            worst = worst.max(tn / vn);
        }
    }
    Ok(worst)
}

/// Gradient of `F` in `(x0, t0)`: the `y`- and `h`-coefficients of the first
/// variation formula.
pub fn f_gradient(
    imm: &ImmersionField,
    x0: &[f64],
    t0: f64,
) -> Result<(Vec<f64>, f64), LabError> {
    let wm = WeightedMeasure::new(imm, x0, t0)?;
    let nn = imm.ambient().real_dim();
    let ndim = imm.intrinsic_dim() as f64;
    let pref = wm.prefactor();
    let mut gx = vec![0.0; nn];
    let mut gt = 0.0;
    for node in 0..imm.node_count() {
        let x = imm.position(node);
        let m = wm.node_measure()[node] * pref;
        let mut r2 = 0.0;
        for c in 0..nn {
            let d = x[c] - x0[c];
            gx[c] += m * d / (2.0 * t0);
            r2 += d * d;
        }
        gt += m * (r2 / (4.0 * t0 * t0) - ndim / (2.0 * t0));
    }
    Ok((gx, gt))
}

// --- entropy ---------------------------------------------------------------

/// Result of the multistart entropy ascent. `heuristic_supremum` is always
/// true: finitely many starts over a bounded box cannot certify the global
/// supremum.
#[derive(Debug, Clone)]
pub struct EntropyResult {
    pub value: f64,
    pub x0: Vec<f64>,
    pub t0: f64,
    pub starts: usize,
    pub heuristic_supremum: bool,
    /// Distinct local maxima encountered across starts, best first.
    pub maxima: Vec<LocalMaximum>,
}

#[derive(Debug, Clone)]
pub struct LocalMaximum {
    pub value: f64,
    pub x0: Vec<f64>,
    pub t0: f64,
}

/// Multistart quasi-Newton ascent of `(x0, t0) -> F_{x0,t0}`, over the box
/// `|x0| <= 3 max|x|`, `t0` in `[1/16, 16]`, parametrized by `log t0`.
pub fn entropy(imm: &ImmersionField, seed: u64, starts: usize) -> Result<EntropyResult, LabError> {
    let nn = imm.ambient().real_dim();
    let dim = nn + 1;
    let box_r = 3.0
        * (0..imm.node_count())
            .map(|i| dot(imm.position(i), imm.position(i)).sqrt())
            .fold(0.0, f64::max);
    let (tau_lo, tau_hi) = ((1.0 / 16.0f64).ln(), 16.0f64.ln());

    // objective and gradient in packed coordinates z = (x0, tau = log t0)
    let eval = |z: &[f64]| -> Result<(f64, Vec<f64>), LabError> {
        let t0 = z[nn].exp();
        let val = f_functional(imm, &z[..nn], t0)?;
        let (gx, gt) = f_gradient(imm, &z[..nn], t0)?;
        let mut g = gx;
        g.push(gt * t0);
        Ok((val, g))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    for start in 0..starts.max(1) {
        let mut z = vec![0.0; dim];
        if start > 0 {
            for zc in z.iter_mut().take(nn) {
                *zc = rng.gen_range(-box_r..box_r);
            }
            z[nn] = rng.gen_range(tau_lo..tau_hi);
        }
        if let Ok(zopt) = bfgs_ascent(&eval, z, &|z: &mut [f64]| {
            for zc in z.iter_mut().take(nn) {
                *zc = zc.clamp(-box_r, box_r);
            }
            z[nn] = z[nn].clamp(tau_lo, tau_hi);
        }) {
            if let Ok((val, _)) = eval(&zopt) {
                best.push((val, zopt[..nn].to_vec(), zopt[nn].exp()));
            }
        }
    }
    if best.is_empty() {
        return Err(LabError::NoConvergence("no entropy start converged".into()));
    }
    // deterministic best-of reduction: highest value, then smallest t0, then
    // lexicographic center
    best.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.2.partial_cmp(&b.2).unwrap())
            .then_with(|| {
                a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let mut maxima: Vec<LocalMaximum> = Vec::new();
    for (value, x0, t0) in &best {
        let dup = maxima.iter().any(|m| {
            (m.t0.ln() - t0.ln()).abs() < 1e-3
                && m.x0
                    .iter()
                    .zip(x0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
                    < 1e-3
        });
        if !dup {
            maxima.push(LocalMaximum {
                value: *value,
                x0: x0.clone(),
                t0: *t0,
            });
        }
    }
    let (value, x0, t0) = best.swap_remove(0);
    Ok(EntropyResult {
        value,
        x0,
        t0,
        starts: starts.max(1),
        heuristic_supremum: true,
        maxima,
    })
}

/// Maximize `eval` with BFGS and Armijo backtracking; `project` clamps the
/// iterate into the search box.
fn bfgs_ascent(
    eval: &dyn Fn(&[f64]) -> Result<(f64, Vec<f64>), LabError>,
    mut z: Vec<f64>,
    project: &dyn Fn(&mut [f64]),
) -> Result<Vec<f64>, LabError> {
    let d = z.len();
    project(&mut z);
    let (mut fval, mut grad) = eval(&z)?;
    let mut hinv = vec![0.0; d * d];
    for i in 0..d {
        hinv[i * d + i] = 1.0;
    }
    for _ in 0..200 {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-11 * fval.abs().max(1.0) {
            break;
        }
        // ascent direction p = Hinv * grad
        let mut p = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                p[i] += hinv[i * d + j] * grad[j];
            }
        }
        let dir: f64 = p.iter().zip(&grad).map(|(a, b)| a * b).sum();
        if dir <= 0.0 {
            p.copy_from_slice(&grad);
        }
        let slope: f64 = p.iter().zip(&grad).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut accepted = false;
        let mut znew = z.clone();
        let mut fnew = fval;
        let mut gnew = grad.clone();
        for _ in 0..50 {
            for i in 0..d {
                znew[i] = z[i] + step * p[i];
            }
            project(&mut znew);
            match eval(&znew) {
                Ok((fv, gv)) if fv >= fval + 1e-4 * step * slope => {
                    fnew = fv;
                    gnew = gv;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            break;
        }
        // BFGS update on the inverse Hessian of -F
        let s: Vec<f64> = znew.iter().zip(&z).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = grad.iter().zip(&gnew).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let ss = s.iter().map(|a| a * a).sum::<f64>().sqrt();
        let yy = yv.iter().map(|a| a * a).sum::<f64>().sqrt();
        if sy > 1e-12 * ss * yy {
            let mut hy = vec![0.0; d];
            for i in 0..d {
                for j in 0..d {
                    hy[i] += hinv[i * d + j] * yv[j];
                }
            }
            let yhy: f64 = yv.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..d {
                for j in 0..d {
                    hinv[i * d + j] += (sy + yhy) * s[i] * s[j] / (sy * sy)
                        - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
        z = znew;
        fval = fnew;
        grad = gnew;
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use std::f64::consts::TAU;

    fn unit_vec(rng: &mut ChaCha8Rng, nn: usize) -> Vec<f64> {
        let mut w: Vec<f64> = (0..nn).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = dot(&w, &w).sqrt();
        for c in w.iter_mut() {
            *c /= n;
        }
        w
    }

    #[test]
    fn torus_total_measure_matches_closed_form() {
        let imm = catalog::build_clifford(2, &[32, 32]).unwrap().immersion;
        let wm = WeightedMeasure::at_extinction(&imm).unwrap();
        // constant weight e^{-1}, area (2 pi sqrt2)^2
        let want = (-1.0f64).exp() * 8.0 * PI * PI;
        assert!((wm.total() - want).abs() / want < 1e-4);
        assert!(wm.node_measure().iter().all(|m| *m > 0.0));
    }

    #[test]
    fn f_values_hit_closed_forms() {
        let circle = catalog::build_circle(256).unwrap().immersion;
        let f1 = f_functional(&circle, &[0.0, 0.0], 1.0).unwrap();
        let want1 = (TAU / 1.0f64.exp()).sqrt();
        assert!((f1 - want1).abs() < 1e-6, "circle F = {f1}, want {want1}");

        let torus = catalog::build_clifford(2, &[64, 64]).unwrap().immersion;
        let f2 = f_functional(&torus, &[0.0; 4], 1.0).unwrap();
        let want2 = TAU / 1.0f64.exp();
        assert!((f2 - want2).abs() < 5e-5, "torus F = {f2}, want {want2}");

        // decreasing beyond the maximum
        let fa = f_functional(&torus, &[0.0; 4], 2.0).unwrap();
        let fb = f_functional(&torus, &[0.0; 4], 4.0).unwrap();
        assert!(f2 > fa && fa > fb);
    }

    #[test]
    fn f_is_invariant_under_rescaling_and_rotation() {
        let imm = catalog::build_circle(128).unwrap().immersion;
        let base = f_functional(&imm, &[0.3, -0.2], 0.8).unwrap();
        // parabolic rescaling (Sigma, x0, t0) -> (c Sigma, c x0, c^2 t0)
        let c = 1.7;
        let scaled = imm.scaled_positions(c).unwrap();
        let fs = f_functional(&scaled, &[c * 0.3, -c * 0.2], c * c * 0.8).unwrap();
        assert!((base - fs).abs() < 1e-12);
        // rotation of the ambient plane applied to surface and center alike
        let (cs, sn) = (0.6f64.cos(), 0.6f64.sin());
        let mut rot = Vec::with_capacity(imm.positions().len());
        for node in 0..imm.node_count() {
            let x = imm.position(node);
            rot.push(cs * x[0] - sn * x[1]);
            rot.push(sn * x[0] + cs * x[1]);
        }
        let rimm = crate::geometry::ImmersionField::at_origin(
            imm.grid().clone(),
            crate::geometry::AmbientStructure::new(1),
            rot,
        )
        .unwrap();
        let fr = f_functional(
            &rimm,
            &[cs * 0.3 - sn * (-0.2), sn * 0.3 + cs * (-0.2)],
            0.8,
        )
        .unwrap();
        assert!((base - fr).abs() < 1e-12);
    }

    #[test]
    fn identities_hold_on_torus_and_circle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for imm in [
            catalog::build_clifford(2, &[32, 32]).unwrap().immersion,
            catalog::build_circle(128).unwrap().immersion,
        ] {
            let nn = imm.ambient().real_dim();
            for _ in 0..4 {
                let w = unit_vec(&mut rng, nn);
                for (i, r) in identity_suite(&imm, &w).unwrap().iter().enumerate() {
                    assert!(*r < 1e-7, "identity {} residual {r:.3e}", i + 1);
                }
            }
        }
    }

    #[test]
    fn identities_hold_on_curves() {
        let imm = catalog::build_abresch_langer(2, 3, 512).unwrap().immersion;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = unit_vec(&mut rng, 2);
        for (i, r) in identity_suite(&imm, &w).unwrap().iter().enumerate() {
            assert!(*r < 1e-5, "identity {} residual {r:.3e}", i + 1);
        }
    }

    #[test]
    fn identity_detects_non_shrinker() {
        // scaled circle is not a shrinker for (0,1); identity 2 must fail
        let imm = catalog::build_circle(128)
            .unwrap()
            .immersion
            .scaled_positions(1.3)
            .unwrap();
        let r = identity_residual(&imm, 2, &[0.0, 0.0]).unwrap();
        assert!(r > 1e-2, "residual {r}");
    }

    #[test]
    fn drift_laplacian_has_known_eigenfunctions() {
        // on the torus, <x, w> is an eigenfunction with eigenvalue -1/2
        let imm = catalog::build_clifford(2, &[32, 32]).unwrap().immersion;
        let u: Vec<f64> = (0..imm.node_count())
            .map(|i| imm.position(i)[0])
            .collect();
        let lu = drift_laplacian(&imm, &u, &[0.0; 4], 1.0).unwrap();
        for node in 0..imm.node_count() {
            assert!(
                (lu[node] + 0.5 * u[node]).abs() < 1e-10,
                "node {node}: {} vs {}",
                lu[node],
                -0.5 * u[node]
            );
        }
    }

    #[test]
    fn integration_by_parts_defect_small() {
        // with a constant weight and flat metric the antisymmetric stencils
        // make the discrete identity exact; off-center it is truncation-level
        let defect_at = |res: usize, x0: &[f64]| {
            let imm = catalog::build_clifford(2, &[res, res]).unwrap().immersion;
            let g = imm.grid();
            let u: Vec<f64> = (0..g.len())
                .map(|i| (g.coord(i, 0)).sin() + 0.3 * (2.0 * g.coord(i, 1)).cos())
                .collect();
            let v: Vec<f64> = (0..g.len())
                .map(|i| (g.coord(i, 1)).cos() - 0.5 * (g.coord(i, 0) + g.coord(i, 1)).sin())
                .collect();
            ibp_defect(&imm, &u, &v, x0, 1.0).unwrap()
        };
        assert!(defect_at(32, &[0.0; 4]) < 1e-14);
        let off = [0.3, 0.1, -0.2, 0.4];
        let d32 = defect_at(32, &off);
        let d64 = defect_at(64, &off);
        assert!(d32 < 1e-3, "defect {d32:.3e}");
        // at least 4th-order decay
        assert!(d64 < d32 / 10.0, "no decay: {d32:.3e} -> {d64:.3e}");
    }

    #[test]
    fn first_variation_vanishes_on_shrinkers() {
        let imm = catalog::build_clifford(2, &[32, 32]).unwrap().immersion;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let w = unit_vec(&mut rng, 4);
            let xf = AmbientVectorField::constant_normal(&imm, &w).unwrap();
            let y = unit_vec(&mut rng, 4);
            let h = rng.gen_range(-1.0..1.0);
            let fv = first_variation(&imm, &xf, &y, h, &[0.0; 4], 1.0).unwrap();
            assert!(fv.abs() < 1e-10, "first variation {fv:.3e}");
        }
    }

    #[test]
    fn first_variation_detects_descent_direction() {
        // circle of radius 2 is no shrinker for (0,1); moving along H with
        // the radius above sqrt2 expands F
        let g = crate::grid::ParamGrid::standard(&[128]).unwrap();
        let pos: Vec<f64> = (0..128)
            .flat_map(|i| {
                let t = g.coord(i, 0);
                [2.0 * t.cos(), 2.0 * t.sin()]
            })
            .collect();
        let imm = crate::geometry::ImmersionField::at_origin(
            g,
            crate::geometry::AmbientStructure::new(1),
            pos,
        )
        .unwrap();
        let xf = AmbientVectorField::mean_curvature(&imm).unwrap();
        let fv = first_variation(&imm, &xf, &[0.0, 0.0], 0.0, &[0.0, 0.0], 1.0).unwrap();
        // -<H, H + x/2> = -(x/4)(x/4) ... sign: H = -x/4, H + x/2 = x/4,
        // integrand = -<H, H+x/2> = +|x|^2/16 > 0
        assert!(fv > 0.0, "first variation {fv:.3e}");
        // finite-difference cross-check along the straight-line family
        let eps = 1e-4;
        let fp = f_functional(&imm.displaced(&xf, eps).unwrap(), &[0.0, 0.0], 1.0).unwrap();
        let fm = f_functional(&imm.displaced(&xf, -eps).unwrap(), &[0.0, 0.0], 1.0).unwrap();
        let fd = (fp - fm) / (2.0 * eps);
        assert!((fd - fv).abs() < 1e-6, "fd {fd} vs analytic {fv}");
    }

    #[test]
    fn first_variation_matches_gradient_components() {
        let imm = catalog::build_circle(64).unwrap().immersion;
        let x0 = [0.2, -0.1];
        let t0 = 1.3;
        let zero = AmbientVectorField::constant_normal(&imm, &[0.0, 0.0]).unwrap();
        let (gx, gt) = f_gradient(&imm, &x0, t0).unwrap();
        for c in 0..2 {
            let mut y = [0.0, 0.0];
            y[c] = 1.0;
            let fv = first_variation(&imm, &zero, &y, 0.0, &x0, t0).unwrap();
            assert!((fv - gx[c]).abs() < 1e-12);
        }
        let fv = first_variation(&imm, &zero, &[0.0, 0.0], 1.0, &x0, t0).unwrap();
        assert!((fv - gt).abs() < 1e-12);
    }

    #[test]
    fn entropy_finds_extinction_point() {
        let imm = catalog::build_circle(64).unwrap().immersion;
        let res = entropy(&imm, 42, 8).unwrap();
        assert!(res.heuristic_supremum);
        assert!((res.t0 - 1.0).abs() < 1e-4, "t0 = {}", res.t0);
        assert!(res.x0.iter().all(|c| c.abs() < 1e-4));
        let want = (TAU / 1.0f64.exp()).sqrt();
        assert!((res.value - want).abs() < 1e-4);
    }

    #[test]
    fn entropy_tracks_translation() {
        let imm = catalog::build_circle(64).unwrap().immersion;
        let moved = imm.translated(&[0.7, -0.4]).unwrap();
        let res = entropy(&moved, 42, 8).unwrap();
        assert!((res.x0[0] - 0.7).abs() < 1e-4);
        assert!((res.x0[1] + 0.4).abs() < 1e-4);
        assert!((res.t0 - 1.0).abs() < 1e-4);
    }
}
