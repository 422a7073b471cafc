//! Low spectrum of the drift Laplacian and the Jacobi operator on normal
//! fields.
//!
//! The drift Laplacian is realized as a generalized symmetric eigenproblem
//! `A u = lambda M u`. The stiffness is the collocated weak form
//! `A = sum_ab D_a^T (w sqrt(g) g^{ab}) D_b` built from the same centered
//! differences as the rest of the library; on the trigonometric product
//! models the stencil response of the metric then cancels the response of
//! the derivatives exactly, so fields like `<x,w>` are eigenfields to
//! roundoff rather than truncation accuracy.
//!
//! The centered first difference annihilates the grid Nyquist sawtooth,
//! which would leave spurious null vectors in `A`. A symmetric
//! fourth-difference penalty lifts those mesh modes to a fixed phantom
//! eigenvalue near [`STAB_LEVEL`] while perturbing smooth modes only at
//! eighth order in the spacing; request eigenvalue windows below that level.
//!
//! Eigensolves are dense and symmetric, intended for desk-scale grids
//! (node cap below); larger grids should be re-sampled through
//! [`spectral_resolution`].

use faer::Side;

use crate::geometry::{dot, AmbientVectorField, ImmersionField, ProjectionMode};
use crate::grid::ParamGrid;
use crate::weighted::WeightedMeasure;
use crate::LabError;

/// Largest node count admitted to the dense eigensolver.
pub const DENSE_CAP: usize = 4096;

/// Default absolute gap for grouping eigenvalues into multiplicity clusters.
pub const CLUSTER_TOL: f64 = 1e-3;

/// Approximate eigenvalue at which the sawtooth mesh modes are parked by
/// the stabilization term. Chosen away from the analytic spectra of the
/// catalog models (torus eigenvalues are half-integers, circle eigenvalues
/// are m^2/2).
pub const STAB_LEVEL: f64 = 3.3;

/// Stiffness and mass of the weighted Dirichlet form at extinction scale,
/// kept matrix-free (apply closures over cached coefficient fields).
pub struct WeightedProblem<'a> {
    imm: &'a ImmersionField,
    /// diagonal of the (lumped) mass matrix: weight * sqrt(g) * cell
    mass: Vec<f64>,
    /// collocated coefficients `w sqrt(g) g^{ab} * cell`, `[node*k*k+a*k+b]`
    coeff: Vec<f64>,
    /// node weights of the sawtooth penalty (`STAB_LEVEL * mass / 256`)
    stab: Vec<f64>,
}

/// Symmetric fourth difference along `axis` (unscaled). Vanishes to fourth
/// order on smooth fields, reaches 16 per unit amplitude on the sawtooth.
fn fourth_difference(grid: &ParamGrid, axis: usize, u: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let up1 = u[grid.shifted(i, axis, 1)];
        let up2 = u[grid.shifted(i, axis, 2)];
        let um1 = u[grid.shifted(i, axis, -1)];
        let um2 = u[grid.shifted(i, axis, -2)];
        out[i] = up2 + um2 - 4.0 * (up1 + um1) + 6.0 * u[i];
    }
    out
}

/// Assemble the weighted Dirichlet problem for the drift Laplacian at
/// extinction scale.
pub fn assemble_weighted_problem(imm: &ImmersionField) -> Result<WeightedProblem<'_>, LabError> {
    let wm = WeightedMeasure::at_extinction(imm)?;
    let geo = imm.geometry()?;
    let grid = imm.grid();
    let k = grid.axes();
    let n = grid.len();
    let cell = grid.cell_volume();

    let mass = wm.node_measure().to_vec();
    let mut coeff = vec![0.0; n * k * k];
    for node in 0..n {
        let gi = geo.inv_metric_at(node);
        let w = wm.density()[node] * geo.sqrt_det[node] * cell;
        for ab in 0..k * k {
            coeff[node * k * k + ab] = w * gi[ab];
        }
    }
    let stab: Vec<f64> = mass.iter().map(|m| STAB_LEVEL * m / 256.0).collect();

    Ok(WeightedProblem {
        imm,
        mass,
        coeff,
        stab,
    })
}

impl WeightedProblem<'_> {
    pub fn node_count(&self) -> usize {
        self.imm.grid().len()
    }

    pub fn immersion(&self) -> &ImmersionField {
        self.imm
    }

    pub fn mass_diagonal(&self) -> &[f64] {
        &self.mass
    }

    /// `A u`, the weak-form drift Laplacian action plus mesh-mode penalty.
    pub fn apply_stiffness(&self, u: &[f64]) -> Vec<f64> {
        let grid = self.imm.grid();
        let k = grid.axes();
        let n = grid.len();
        let mut out = vec![0.0; n];
        for b in 0..k {
            let db = grid.d1(b, u, 1);
            for a in 0..k {
                let mut f = vec![0.0; n];
                for node in 0..n {
                    f[node] = self.coeff[node * k * k + a * k + b] * db[node];
                }
                // D_a^T = -D_a for the centered stencil
                let daf = grid.d1(a, &f, 1);
                for i in 0..n {
                    out[i] -= daf[i];
                }
            }
        }
        for a in 0..k {
            let q = fourth_difference(grid, a, u);
            let weighted: Vec<f64> = q.iter().zip(&self.stab).map(|(x, s)| x * s).collect();
            let back = fourth_difference(grid, a, &weighted);
            for i in 0..n {
                out[i] += back[i];
            }
        }
        out
    }

    pub fn apply_mass(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.mass).map(|(a, m)| a * m).collect()
    }

    /// Bilinear stiffness form `A[u,v]`.
    pub fn stiffness_form(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.apply_stiffness(v))
    }

    /// Bilinear mass form `M[u,v]`.
    pub fn mass_form(&self, u: &[f64], v: &[f64]) -> f64 {
        u.iter()
            .zip(v)
            .zip(&self.mass)
            .map(|((a, b), m)| a * b * m)
            .sum()
    }

    /// Relative eigenfield residual `|A u - lambda M u| / |M u|`.
    pub fn eigen_residual(&self, u: &[f64], lambda: f64) -> f64 {
        let au = self.apply_stiffness(u);
        let mu = self.apply_mass(u);
        let num: f64 = au
            .iter()
            .zip(&mu)
            .map(|(a, m)| (a - lambda * m) * (a - lambda * m))
            .sum::<f64>()
            .sqrt();
        let den: f64 = mu.iter().map(|m| m * m).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }
}

/// Low spectrum report: eigenvalues ascending with the zero mode removed,
/// eigenfunctions M-orthonormal.
pub struct SpectralReport {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `(start, len)` index ranges grouping eigenvalues within the cluster
    /// tolerance
    pub clusters: Vec<(usize, usize)>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub resolution: Vec<usize>,
    pub cluster_tol: f64,
    /// Richardson-extrapolated eigenvalue estimates, empty until a coarse
    /// companion is supplied
    pub richardson: Vec<f64>,
}

impl SpectralReport {
    pub fn cluster_values(&self) -> Vec<(f64, usize)> {
        self.clusters
            .iter()
            .map(|&(s, l)| {
                let mean = self.eigenvalues[s..s + l].iter().sum::<f64>() / l as f64;
                (mean, l)
            })
            .collect()
    }
}

fn group_clusters(vals: &[f64], tol: f64) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=vals.len() {
        if i == vals.len() || vals[i] - vals[i - 1] > tol {
            out.push((start, i - start));
            start = i;
        }
    }
    out
}

fn dense_reduced(problem: &WeightedProblem) -> faer::Mat<f64> {
    let n = problem.node_count();
    let inv_sqrt_m: Vec<f64> = problem.mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut bmat = faer::Mat::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = inv_sqrt_m[j];
        let col = problem.apply_stiffness(&e);
        e[j] = 0.0;
        for i in 0..n {
            bmat[(i, j)] = col[i] * inv_sqrt_m[i];
        }
    }
    bmat
}

fn symmetric_eigen(bmat: &faer::Mat<f64>) -> Result<(Vec<f64>, faer::Mat<f64>), LabError> {
    let evd = bmat
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| LabError::SolverFailure {
            iterations: 0,
            residual: f64::NAN,
        })?;
    let n = bmat.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let s = evd.S();
    order.sort_by(|&i, &j| s[i].partial_cmp(&s[j]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| s[i]).collect();
    let mut vecs = faer::Mat::<f64>::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..n {
            vecs[(i, new_j)] = evd.U()[(i, old_j)];
        }
    }
    Ok((vals, vecs))
}

/// The `count` lowest nonzero eigenvalues of the weighted problem with
/// M-orthonormal eigenfunctions. Dense symmetric solve; `count >= 2`.
pub fn lowest_spectrum(
    problem: &WeightedProblem,
    count: usize,
    cluster_tol: f64,
) -> Result<SpectralReport, LabError> {
    if count < 2 {
        return Err(LabError::Config(
            "spectrum request must cover at least two nonzero eigenvalues".into(),
        ));
    }
    let n = problem.node_count();
    if n > DENSE_CAP {
        return Err(LabError::Unsupported(format!(
            "dense eigensolve capped at {DENSE_CAP} nodes, got {n}; re-sample the model first"
        )));
    }
    let bmat = dense_reduced(problem);
    let (vals, vecs) = symmetric_eigen(&bmat)?;

    // the constants are an exact kernel of the stiffness; drop that mode
    let lam_max = vals[n - 1].abs().max(1.0);
    if vals[0].abs() > 1e-9 * lam_max {
        return Err(LabError::SolverFailure {
            iterations: 0,
            residual: vals[0].abs(),
        });
    }
    let m = count.min(n - 1);
    let inv_sqrt_m: Vec<f64> = problem.mass.iter().map(|mm| 1.0 / mm.sqrt()).collect();
    let mut eigenvalues = Vec::with_capacity(m);
    let mut eigenvectors = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    for j in 1..=m {
        let lam = vals[j];
        let u: Vec<f64> = (0..n).map(|i| vecs[(i, j)] * inv_sqrt_m[i]).collect();
        residuals.push(problem.eigen_residual(&u, lam));
        eigenvalues.push(lam);
        eigenvectors.push(u);
    }
    let clusters = group_clusters(&eigenvalues, cluster_tol);
    Ok(SpectralReport {
        eigenvalues,
        residuals,
        clusters,
        eigenvectors,
        resolution: problem.imm.grid().dims().to_vec(),
        cluster_tol,
        richardson: Vec::new(),
    })
}

/// Fill `fine.richardson` from a coarse companion at half resolution,
/// assuming fourth-order eigenvalue convergence.
pub fn richardson_extrapolate(fine: &mut SpectralReport, coarse: &SpectralReport) {
    let m = fine.eigenvalues.len().min(coarse.eigenvalues.len());
    fine.richardson = (0..m)
        .map(|i| (16.0 * fine.eigenvalues[i] - coarse.eigenvalues[i]) / 15.0)
        .collect();
}

/// M-orthonormalize the coordinate restrictions `<x,w>` (dropping near-zero
/// directions) and measure the largest principal angle between their span
/// and the span of the eigenvectors in `cluster`.
///
/// Returns `(rank of the restricted span, largest principal angle)`.
pub fn eigenspace_match_cluster(
    problem: &WeightedProblem,
    report: &SpectralReport,
    cluster: usize,
) -> Result<(usize, f64), LabError> {
    let imm = problem.imm;
    let nn = imm.ambient().real_dim();
    let n = problem.node_count();
    // target family: coordinate restrictions, M-orthonormalized with rank
    // detection (a coordinate may restrict to zero on special shrinkers)
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for m in 0..nn {
        let mut t: Vec<f64> = (0..n).map(|node| imm.position(node)[m]).collect();
        let norm0 = problem.mass_form(&t, &t).sqrt();
        if norm0 <= 1e-300 {
            continue;
        }
        for b in &basis {
            let c = problem.mass_form(b, &t);
            for i in 0..n {
                t[i] -= c * b[i];
            }
        }
        let norm = problem.mass_form(&t, &t).sqrt();
        if norm > 1e-8 * norm0.max(1.0) {
            for v in t.iter_mut() {
                *v /= norm;
            }
            basis.push(t);
        }
    }
    let rank = basis.len();
    let &(start, len) = report
        .clusters
        .get(cluster)
        .ok_or_else(|| LabError::Config("cluster index out of range".into()))?;
    if rank == 0 || len == 0 {
        return Ok((rank, std::f64::consts::FRAC_PI_2));
    }
    // cross Gram in the M-inner product; both bases are M-orthonormal, so
    // its singular values are the principal cosines
    let gram = nalgebra::DMatrix::from_fn(rank, len, |i, j| {
        problem.mass_form(&basis[i], &report.eigenvectors[start + j])
    });
    let svals = gram.svd(false, false).singular_values;
    let pairs = rank.min(len);
    let cos_min = svals[pairs - 1].clamp(-1.0, 1.0);
    Ok((rank, cos_min.acos()))
}

/// [`eigenspace_match_cluster`] against the lowest cluster.
pub fn eigenspace_match(
    problem: &WeightedProblem,
    report: &SpectralReport,
) -> Result<(usize, f64), LabError> {
    eigenspace_match_cluster(problem, report, 0)
}

/// Pick a dense-solve-sized resolution by repeatedly halving the largest
/// axis (used when a model's default grid exceeds the eigensolver cap).
pub fn spectral_resolution(dims: &[usize]) -> Vec<usize> {
    let mut d = dims.to_vec();
    while d.iter().product::<usize>() > DENSE_CAP {
        let a = (0..d.len()).max_by_key(|&i| d[i]).unwrap();
        if d[a] <= 8 {
            break;
        }
        d[a] /= 2;
    }
    d
}

/// Smallest Rayleigh quotient `A[u,u]/M[u,u]` over the M-orthogonal
/// complement of the given constraint fields (constants are always
/// included as a constraint).
pub fn constrained_rayleigh_min(
    problem: &WeightedProblem,
    constraints: &[Vec<f64>],
) -> Result<f64, LabError> {
    let n = problem.node_count();
    if n > DENSE_CAP {
        return Err(LabError::Unsupported(format!(
            "dense eigensolve capped at {DENSE_CAP} nodes, got {n}; re-sample the model first"
        )));
    }
    let mut bmat = dense_reduced(problem);
    // orthonormalize M^{1/2}-transformed constraints (plus constants)
    let sqrt_m: Vec<f64> = problem.mass.iter().map(|m| m.sqrt()).collect();
    let mut cons: Vec<Vec<f64>> = Vec::new();
    let push = |raw: &[f64], cons: &mut Vec<Vec<f64>>| {
        let mut q: Vec<f64> = raw.iter().zip(&sqrt_m).map(|(a, s)| a * s).collect();
        let norm0 = dot(&q, &q).sqrt();
        if norm0 <= 1e-300 {
            return;
        }
        for c in cons.iter() {
            let w = dot(c, &q);
            for i in 0..n {
                q[i] -= w * c[i];
            }
        }
        let norm = dot(&q, &q).sqrt();
        if norm > 1e-10 * norm0 {
            for v in q.iter_mut() {
                *v /= norm;
            }
            cons.push(q);
        }
    };
    push(&vec![1.0; n], &mut cons);
    for c in constraints {
        push(c, &mut cons);
    }
    // deflate: B <- P B P with P the projector off the constraint span
    for q in &cons {
        // B <- (I - qq^T) B (I - qq^T)
        let bq: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| bmat[(i, j)] * q[j]).sum::<f64>())
            .collect();
        let qbq = dot(q, &bq);
        for i in 0..n {
            for j in 0..n {
                bmat[(i, j)] += -q[i] * bq[j] - bq[i] * q[j] + qbq * q[i] * q[j];
            }
        }
    }
    let (vals, _) = symmetric_eigen(&bmat)?;
    let lam_max = vals[n - 1].abs().max(1.0);
    let r = cons.len();
    // the deflated directions sit at zero; everything else must clear them
    for v in vals.iter().take(r) {
        if v.abs() > 1e-8 * lam_max {
            return Err(LabError::SolverFailure {
                iterations: 0,
                residual: v.abs(),
            });
        }
    }
    Ok(vals[r])
}

/// Jacobi (stability) operator on a normal field:
/// `L X = Delta X + <X, h_ab> h_cd g^{ac} g^{bd} - <(x-x0)/(2 t0), e_i> D_i X
/// + X/(2 t0)` with `Delta` the normal-connection Laplacian, realized by
/// ambient differentiation and pointwise normal projection.
pub fn apply_jacobi_l(
    imm: &ImmersionField,
    xfield: &AmbientVectorField,
) -> Result<AmbientVectorField, LabError> {
    if !xfield.is_normal() {
        return Err(LabError::NotNormal { defect: f64::NAN });
    }
    let geo = imm.geometry()?;
    let grid = imm.grid();
    let k = grid.axes();
    let nn = imm.ambient().real_dim();
    let n = grid.len();
    let t0 = imm.extinction_time();
    let x0 = imm.extinction_center().to_vec();

    // first normal-connection derivatives: (d_b X)^perp
    let mut first: Vec<Vec<f64>> = Vec::with_capacity(k);
    for b in 0..k {
        let mut deriv = vec![0.0; n * nn];
        for comp in 0..nn {
            let field: Vec<f64> = (0..n).map(|i| xfield.at(i, nn)[comp]).collect();
            let d = grid.d1(b, &field, 1);
            for i in 0..n {
                deriv[i * nn + comp] = d[i];
            }
        }
        for i in 0..n {
            let v = deriv[i * nn..(i + 1) * nn].to_vec();
            let proj = imm.project(i, &v, ProjectionMode::Normal)?;
            deriv[i * nn..(i + 1) * nn].copy_from_slice(&proj);
        }
        first.push(deriv);
    }

    // second derivatives (d_a (d_b X)^perp)^perp
    let mut second: Vec<Vec<f64>> = Vec::with_capacity(k * k);
    for a in 0..k {
        for b in 0..k {
            let mut deriv = vec![0.0; n * nn];
            for comp in 0..nn {
                let field: Vec<f64> = (0..n).map(|i| first[b][i * nn + comp]).collect();
                let d = grid.d1(a, &field, 1);
                for i in 0..n {
                    deriv[i * nn + comp] = d[i];
                }
            }
            for i in 0..n {
                let v = deriv[i * nn..(i + 1) * nn].to_vec();
                let proj = imm.project(i, &v, ProjectionMode::Normal)?;
                deriv[i * nn..(i + 1) * nn].copy_from_slice(&proj);
            }
            second.push(deriv);
        }
    }

    let mut out = vec![0.0; n * nn];
    for node in 0..n {
        let gi = geo.inv_metric_at(node);
        let ch = geo.christoffel_at(node);
        let xv = xfield.at(node, nn);

        // normal-connection Laplacian
        for a in 0..k {
            for b in 0..k {
                let w = gi[a * k + b];
                if w == 0.0 {
                    continue;
                }
                for comp in 0..nn {
                    let mut v = second[a * k + b][node * nn + comp];
                    for c in 0..k {
                        v -= ch[c * k * k + a * k + b] * first[c][node * nn + comp];
                    }
                    out[node * nn + comp] += w * v;
                }
            }
        }

        // curvature term <X, h_ab> h_cd g^{ac} g^{bd}
        for a in 0..k {
            for b in 0..k {
                let s = dot(xv, geo.second_normal_at(node, a, b));
                for c in 0..k {
                    for d in 0..k {
                        let w = gi[a * k + c] * gi[b * k + d] * s;
                        if w == 0.0 {
                            continue;
                        }
                        let h = geo.second_normal_at(node, c, d);
                        for comp in 0..nn {
                            out[node * nn + comp] += w * h[comp];
                        }
                    }
                }
            }
        }

        // drift term -<(x-x0)/(2t0), e_i> D_i X = -(x-x0)^{T,a}/(2t0) (d_a X)^perp
        let pos = imm.position(node);
        for a in 0..k {
            let mut xa = 0.0;
            for b in 0..k {
                let tb = geo.tangent(node, b);
                let mut xc_dot_t = 0.0;
                for comp in 0..nn {
                    xc_dot_t += (pos[comp] - x0[comp]) * tb[comp];
                }
                xa += gi[a * k + b] * xc_dot_t;
            }
            let w = -xa / (2.0 * t0);
            for comp in 0..nn {
                out[node * nn + comp] += w * first[a][node * nn + comp];
            }
        }

        // zeroth order
        for comp in 0..nn {
            out[node * nn + comp] += xv[comp] / (2.0 * t0);
        }
    }

    AmbientVectorField::normal_checked(imm, out)
}
