//! Second variation of the Gaussian weighted area and the stability verdicts
//! built on it.
//!
//! Every variation class evaluates to the same shape: a concave quadratic in
//! the translation/dilation pair `(y, h)`,
//!
//! ```text
//!   F''(y, h) = c + b . z - z^T K z / 2,       z = (y, h),
//! ```
//!
//! with `K` positive semidefinite. Normal fields feed the Jacobi operator
//! directly; closed 1-forms and Hamiltonian potentials go through the form
//! calculus where the operator term becomes `|d_f* theta|^2 - |theta|^2`.
//! The optimizer maximizes the quadratic with a pseudo-inverse, so degenerate
//! `(y, h)` directions simply drop out. Verdicts combine two independent
//! readings of the low drift spectrum and, when the first Betti number leaves
//! room for a class independent of the mean curvature form, an explicit
//! negative certificate.

use crate::catalog::{Model, ModelSpec};
use crate::forms::{self, OneForm, CLOSEDNESS_GATE};
use crate::geometry::{AmbientVectorField, Geometry, ImmersionField, ProjectionMode};
use crate::spectral::{self, SpectralReport};
use crate::weighted::WeightedMeasure;
use crate::LabError;
use std::fmt;

/// Shrinker residual above which the stability machinery refuses to run.
pub const SHRINKER_GATE: f64 = 1e-4;
/// A certificate value above `-CERTIFICATE_TOL` flags a resolution problem
/// instead of being reported as evidence.
pub const CERTIFICATE_TOL: f64 = 1e-6;
/// Relative eigenvalue cut below which a `(y, h)` direction counts as
/// degenerate in the optimizer.
const PSEUDO_INVERSE_CUT: f64 = 1e-12;

/// Thresholds for the spectral stability tests.
#[derive(Clone, Copy, Debug)]
pub struct VerdictTolerances {
    /// Eigenvalue slack around the targets `1/2` and `1`.
    pub tol_eig: f64,
    /// Principal-angle slack (radians) for the eigenspace comparison.
    pub tol_sub: f64,
}

impl Default for VerdictTolerances {
    fn default() -> Self {
        Self {
            tol_eig: 5e-3,
            tol_sub: 5e-3,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum VariationKind {
    NormalField,
    ClosedForm,
    Function,
}

impl fmt::Display for VariationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VariationKind::NormalField => "normal field",
            VariationKind::ClosedForm => "closed form",
            VariationKind::Function => "function",
        };
        f.write_str(s)
    }
}

/// A variation input in any of the three supported classes.
pub enum Variation<'a> {
    Normal(&'a AmbientVectorField),
    ClosedForm(&'a OneForm),
    Function(&'a [f64]),
}

impl Variation<'_> {
    pub fn kind(&self) -> VariationKind {
        match self {
            Variation::Normal(_) => VariationKind::NormalField,
            Variation::ClosedForm(_) => VariationKind::ClosedForm,
            Variation::Function(_) => VariationKind::Function,
        }
    }
}

/// Value of the second variation at a fixed `(y, h)` with the contribution of
/// each integral term recorded separately.
pub struct SecondVariationResult {
    pub value: f64,
    pub kind: VariationKind,
    pub y: Vec<f64>,
    pub h: f64,
    /// Named integral terms; they sum to `value` up to roundoff.
    pub breakdown: Vec<(String, f64)>,
}

impl SecondVariationResult {
    pub fn breakdown_sum(&self) -> f64 {
        self.breakdown.iter().map(|(_, v)| v).sum()
    }
}

/// The quadratic `(y, h)` model of one variation: `F'' = c + b.z - z^T K z/2`
/// with `z = (y, h)` of length `2n + 1`.
pub struct QuadraticModel {
    pub constant: f64,
    pub linear: Vec<f64>,
    /// `K`, row-major `(2n+1) x (2n+1)`, positive semidefinite.
    pub curvature: Vec<f64>,
}

impl QuadraticModel {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn evaluate(&self, z: &[f64]) -> f64 {
        let d = self.dim();
        let mut v = self.constant;
        for i in 0..d {
            v += self.linear[i] * z[i];
            for j in 0..d {
                v -= 0.5 * z[i] * self.curvature[i * d + j] * z[j];
            }
        }
        v
    }

    /// Maximizer `z* = K^+ b`; directions with curvature below the relative
    /// pseudo-inverse cut contribute zero.
    pub fn maximizer(&self) -> Vec<f64> {
        let d = self.dim();
        let m = nalgebra::DMatrix::from_row_slice(d, d, &self.curvature);
        let sym = nalgebra::SymmetricEigen::new(m);
        let lmax = sym
            .eigenvalues
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()));
        let cut = PSEUDO_INVERSE_CUT * lmax;
        let mut z = vec![0.0; d];
        for (j, &lam) in sym.eigenvalues.iter().enumerate() {
            if lam <= cut {
                continue;
            }
            let q = sym.eigenvectors.column(j);
            let proj: f64 = (0..d).map(|i| q[i] * self.linear[i]).sum();
            for i in 0..d {
                z[i] += proj / lam * q[i];
            }
        }
        z
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn shrinker_gate(imm: &ImmersionField) -> Result<(), LabError> {
    let residual = imm.shrinker_residual()?;
    if residual > SHRINKER_GATE {
        return Err(LabError::NotAShrinker { residual });
    }
    Ok(())
}

fn tangential_defect(imm: &ImmersionField, xfield: &AmbientVectorField) -> Result<f64, LabError> {
    let nn = imm.ambient().real_dim();
    let mut worst: f64 = 0.0;
    for node in 0..imm.node_count() {
        let v = xfield.at(node, nn);
        let t = imm.project(node, v, ProjectionMode::Tangent)?;
        let vn = dot(v, v).sqrt();
        if vn > 1e-14 {
            worst = worst.max(dot(&t, &t).sqrt() / vn);
        }
    }
    Ok(worst)
}

/// `theta_a g^{ab} <v, t_b>`: the pairing of `theta` with the tangential part
/// of `J`-rotated ambient data (`v` is already `J y`, `J x`, ...).
fn rotated_pairing(geo: &Geometry, theta: &OneForm, node: usize, k: usize, v: &[f64]) -> f64 {
    let gi = geo.inv_metric_at(node);
    let th = theta.at(node);
    let mut out = 0.0;
    for b in 0..k {
        let mut coeff = 0.0;
        for a in 0..k {
            coeff += th[a] * gi[a * k + b];
        }
        out += coeff * dot(v, geo.tangent(node, b));
    }
    out
}

/// Second variation for a normal variation field at fixed `(y, h)`.
pub fn second_variation_normal(
    imm: &ImmersionField,
    xfield: &AmbientVectorField,
    y: &[f64],
    h: f64,
) -> Result<SecondVariationResult, LabError> {
    shrinker_gate(imm)?;
    let nn = imm.ambient().real_dim();
    if y.len() != nn {
        return Err(LabError::Shape(format!(
            "translation direction: expected dim {nn}, got {}",
            y.len()
        )));
    }
    if !xfield.is_normal() {
        let defect = tangential_defect(imm, xfield)?;
        return Err(LabError::NotNormal { defect });
    }
    let wm = WeightedMeasure::at_extinction(imm)?;
    let geo = imm.geometry()?;
    let lx = spectral::apply_jacobi_l(imm, xfield)?;
    let n = imm.node_count();
    let mut pieces = vec![vec![0.0; n]; 5];
    for node in 0..n {
        let xv = xfield.at(node, nn);
        let lv = lx.at(node, nn);
        let hv = geo.mean_curvature_at(node);
        pieces[0][node] = -dot(xv, lv);
        pieces[1][node] = dot(xv, y);
        pieces[2][node] = -2.0 * h * dot(xv, hv);
        let yp = imm.project(node, y, ProjectionMode::Normal)?;
        pieces[3][node] = -0.5 * dot(&yp, &yp);
        pieces[4][node] = -h * h * dot(hv, hv);
    }
    let labels = [
        "jacobi",
        "translation_coupling",
        "dilation_coupling",
        "translation_penalty",
        "dilation_penalty",
    ];
    Ok(assemble_result(
        &wm,
        VariationKind::NormalField,
        y,
        h,
        &labels,
        &pieces,
    ))
}

/// Second variation for a closed 1-form variation at fixed `(y, h)`.
pub fn second_variation_lagrangian(
    imm: &ImmersionField,
    theta: &OneForm,
    y: &[f64],
    h: f64,
) -> Result<SecondVariationResult, LabError> {
    shrinker_gate(imm)?;
    let defect = forms::closedness_defect(imm, theta)?;
    if defect > CLOSEDNESS_GATE * theta.sup_norm().max(1.0) {
        return Err(LabError::NotClosed { defect });
    }
    form_route(imm, theta, y, h, true, VariationKind::ClosedForm)
}

/// Second variation for a Hamiltonian variation (potential `u`) at fixed
/// `(y, h)`. The dilation coupling drops out for exact forms, so only the
/// `h^2` penalty remains.
pub fn second_variation_hamiltonian(
    imm: &ImmersionField,
    u: &[f64],
    y: &[f64],
    h: f64,
) -> Result<SecondVariationResult, LabError> {
    shrinker_gate(imm)?;
    let theta = forms::differential(imm, u)?;
    form_route(imm, &theta, y, h, false, VariationKind::Function)
}

/// Dispatch on the variation class.
pub fn second_variation(
    imm: &ImmersionField,
    var: &Variation,
    y: &[f64],
    h: f64,
) -> Result<SecondVariationResult, LabError> {
    match var {
        Variation::Normal(x) => second_variation_normal(imm, x, y, h),
        Variation::ClosedForm(t) => second_variation_lagrangian(imm, t, y, h),
        Variation::Function(u) => second_variation_hamiltonian(imm, u, y, h),
    }
}

fn form_route(
    imm: &ImmersionField,
    theta: &OneForm,
    y: &[f64],
    h: f64,
    dilation_coupling: bool,
    kind: VariationKind,
) -> Result<SecondVariationResult, LabError> {
    let nn = imm.ambient().real_dim();
    if y.len() != nn {
        return Err(LabError::Shape(format!(
            "translation direction: expected dim {nn}, got {}",
            y.len()
        )));
    }
    let wm = WeightedMeasure::at_extinction(imm)?;
    let geo = imm.geometry()?;
    let k = imm.intrinsic_dim();
    let n = imm.node_count();
    let df = forms::d_f_star(imm, theta)?;
    let norm2 = theta.pointwise_norm2(imm)?;
    let mut jy = y.to_vec();
    imm.ambient().j_apply(&mut jy);
    let center = imm.extinction_center().to_vec();
    let mut pieces = vec![vec![0.0; n]; 6];
    let mut rel = vec![0.0; nn];
    let mut jx = vec![0.0; nn];
    for node in 0..n {
        pieces[0][node] = df[node] * df[node];
        pieces[1][node] = -norm2[node];
        pieces[2][node] = -rotated_pairing(geo, theta, node, k, &jy);
        let x = imm.position(node);
        for c in 0..nn {
            rel[c] = x[c] - center[c];
            jx[c] = rel[c];
        }
        imm.ambient().j_apply(&mut jx);
        if dilation_coupling {
            pieces[3][node] = -h * rotated_pairing(geo, theta, node, k, &jx);
        }
        let yp = imm.project(node, y, ProjectionMode::Normal)?;
        pieces[4][node] = -0.5 * dot(&yp, &yp);
        let xp = imm.project(node, &rel, ProjectionMode::Normal)?;
        pieces[5][node] = -0.25 * h * h * dot(&xp, &xp);
    }
    let labels = [
        "codifferential",
        "form_norm",
        "translation_coupling",
        "dilation_coupling",
        "translation_penalty",
        "dilation_penalty",
    ];
    if dilation_coupling {
        Ok(assemble_result(&wm, kind, y, h, &labels, &pieces))
    } else {
        let kept: Vec<Vec<f64>> = pieces
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 3)
            .map(|(_, p)| p.clone())
            .collect();
        let kept_labels = [
            "codifferential",
            "form_norm",
            "translation_coupling",
            "translation_penalty",
            "dilation_penalty",
        ];
        Ok(assemble_result(&wm, kind, y, h, &kept_labels, &kept))
    }
}

fn assemble_result(
    wm: &WeightedMeasure,
    kind: VariationKind,
    y: &[f64],
    h: f64,
    labels: &[&str],
    pieces: &[Vec<f64>],
) -> SecondVariationResult {
    let n = pieces[0].len();
    let mut total = vec![0.0; n];
    for p in pieces {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let pref = wm.prefactor();
    let value = pref * wm.integrate(&total);
    let breakdown = labels
        .iter()
        .zip(pieces)
        .map(|(l, p)| (l.to_string(), pref * wm.integrate(p)))
        .collect();
    SecondVariationResult {
        value,
        kind,
        y: y.to_vec(),
        h,
        breakdown,
    }
}

/// Assemble the `(y, h)` quadratic of one variation. The coupling integrals
/// reuse the exact pointwise expressions of the evaluators, so the maximizer
/// of this model is the maximizer of the evaluated second variation.
pub fn quadratic_model(imm: &ImmersionField, var: &Variation) -> Result<QuadraticModel, LabError> {
    shrinker_gate(imm)?;
    let nn = imm.ambient().real_dim();
    let dim = nn + 1;
    let wm = WeightedMeasure::at_extinction(imm)?;
    let geo = imm.geometry()?;
    let k = imm.intrinsic_dim();
    let n = imm.node_count();
    let meas = wm.node_measure();
    let pref = wm.prefactor();

    // route-specific integrands: constant part and (y, h) couplings
    let mut cfield = vec![0.0; n];
    let mut yfields = vec![vec![0.0; n]; nn];
    let mut hfield = vec![0.0; n];
    let form_penalty = !matches!(var, Variation::Normal(_));
    let owned_theta;
    let theta: Option<&OneForm> = match var {
        Variation::Normal(xfield) => {
            if !xfield.is_normal() {
                let defect = tangential_defect(imm, xfield)?;
                return Err(LabError::NotNormal { defect });
            }
            let lx = spectral::apply_jacobi_l(imm, xfield)?;
            for node in 0..n {
                let xv = xfield.at(node, nn);
                let lv = lx.at(node, nn);
                let hv = geo.mean_curvature_at(node);
                cfield[node] = -dot(xv, lv);
                for (m, yf) in yfields.iter_mut().enumerate() {
                    yf[node] = xv[m];
                }
                hfield[node] = -2.0 * dot(xv, hv);
            }
            None
        }
        Variation::ClosedForm(theta) => {
            let defect = forms::closedness_defect(imm, theta)?;
            if defect > CLOSEDNESS_GATE * theta.sup_norm().max(1.0) {
                return Err(LabError::NotClosed { defect });
            }
            Some(*theta)
        }
        Variation::Function(u) => {
            owned_theta = forms::differential(imm, u)?;
            Some(&owned_theta)
        }
    };
    if let Some(theta) = theta {
        let df = forms::d_f_star(imm, theta)?;
        let norm2 = theta.pointwise_norm2(imm)?;
        let hamiltonian = matches!(var, Variation::Function(_));
        // constant basis vectors rotated once
        let mut jbasis = vec![vec![0.0; nn]; nn];
        for (m, jb) in jbasis.iter_mut().enumerate() {
            jb[m] = 1.0;
            imm.ambient().j_apply(jb);
        }
        let center = imm.extinction_center().to_vec();
        let mut jx = vec![0.0; nn];
        for node in 0..n {
            cfield[node] = df[node] * df[node] - norm2[node];
            for (m, yf) in yfields.iter_mut().enumerate() {
                yf[node] = -rotated_pairing(geo, theta, node, k, &jbasis[m]);
            }
            if !hamiltonian {
                let x = imm.position(node);
                for c in 0..nn {
                    jx[c] = x[c] - center[c];
                }
                imm.ambient().j_apply(&mut jx);
                hfield[node] = -rotated_pairing(geo, theta, node, k, &jx);
            }
        }
    }

    let mut constant = 0.0;
    let mut linear = vec![0.0; dim];
    let mut kmat = vec![0.0; dim * dim];
    let mut rel = vec![0.0; nn];
    let mut basis = vec![0.0; nn];
    for node in 0..n {
        let w = meas[node];
        constant += cfield[node] * w;
        for m in 0..nn {
            linear[m] += yfields[m][node] * w;
        }
        linear[nn] += hfield[node] * w;
        // normal projector integral for the translation penalty
        for m in 0..nn {
            basis.iter_mut().for_each(|v| *v = 0.0);
            basis[m] = 1.0;
            let mp = imm.project(node, &basis, ProjectionMode::Normal)?;
            for l in 0..nn {
                kmat[m * dim + l] += mp[l] * w;
            }
        }
        let khh = if form_penalty {
            let x = imm.position(node);
            let c0 = imm.extinction_center();
            for c in 0..nn {
                rel[c] = x[c] - c0[c];
            }
            let xp = imm.project(node, &rel, ProjectionMode::Normal)?;
            0.5 * dot(&xp, &xp)
        } else {
            let hv = geo.mean_curvature_at(node);
            2.0 * dot(hv, hv)
        };
        kmat[nn * dim + nn] += khh * w;
    }
    constant *= pref;
    for v in linear.iter_mut() {
        *v *= pref;
    }
    for v in kmat.iter_mut() {
        *v *= pref;
    }
    // symmetrize the projector block against roundoff
    for m in 0..dim {
        for l in (m + 1)..dim {
            let s = 0.5 * (kmat[m * dim + l] + kmat[l * dim + m]);
            kmat[m * dim + l] = s;
            kmat[l * dim + m] = s;
        }
    }
    Ok(QuadraticModel {
        constant,
        linear,
        curvature: kmat,
    })
}

/// A variation together with its maximizing `(y, h)`.
pub struct OptimizedVariation {
    pub y: Vec<f64>,
    pub h: f64,
    pub result: SecondVariationResult,
}

impl OptimizedVariation {
    pub fn value(&self) -> f64 {
        self.result.value
    }
}

/// Maximize `F''` over translations and dilations for the given variation and
/// re-evaluate at the maximizer.
pub fn optimize_translation_dilation(
    imm: &ImmersionField,
    var: &Variation,
) -> Result<OptimizedVariation, LabError> {
    let qm = quadratic_model(imm, var)?;
    let z = qm.maximizer();
    let nn = qm.dim() - 1;
    let y = z[..nn].to_vec();
    let h = z[nn];
    let result = second_variation(imm, var, &y, h)?;
    Ok(OptimizedVariation { y, h, result })
}

/// Instability evidence: a closed form whose optimized second variation is
/// strictly negative.
pub struct Certificate {
    /// Which harmonic generator seeded the construction.
    pub generator: String,
    /// Drift-harmonic representative of the chosen class.
    pub theta: OneForm,
    /// Potential shifting the harmonic part into the drift-harmonic gauge.
    pub potential: Vec<f64>,
    pub y: Vec<f64>,
    pub h: f64,
    pub value: f64,
    /// Sup norm of `d_f*` applied to the representative.
    pub codifferential_sup: f64,
}

fn line_angle(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na <= 1e-14 || nb <= 1e-14 {
        return 0.0;
    }
    (dot(a, b).abs() / (na * nb)).min(1.0).acos()
}

fn generator_form(imm: &ImmersionField, plus: usize, minus: Option<usize>) -> OneForm {
    let k = imm.intrinsic_dim();
    let n = imm.node_count();
    let mut comps = vec![0.0; n * k];
    for node in 0..n {
        comps[node * k + plus] = 1.0;
        if let Some(m) = minus {
            comps[node * k + m] = -1.0;
        }
    }
    OneForm::from_components(imm, comps).expect("constant generator is well-formed")
}

/// Construct the instability certificate: pick the lattice generator whose
/// period vector is most independent from that of the mean curvature form,
/// move it into the drift-harmonic gauge and optimize over `(y, h)`.
pub fn instability_certificate(model: &Model) -> Result<Certificate, LabError> {
    let imm = &model.immersion;
    shrinker_gate(imm)?;
    if model.meta.b1 < 2 {
        return Err(LabError::NotApplicable(format!(
            "first Betti number {} leaves no class independent of the mean curvature form",
            model.meta.b1
        )));
    }
    let hform = forms::mean_curvature_form(imm)?;
    let mh = forms::maslov_coordinates(imm, &hform)?;
    let k = imm.intrinsic_dim();
    let mut cands: Vec<(OneForm, String)> = Vec::new();
    for j in 0..k {
        cands.push((generator_form(imm, j, None), format!("dt{j}")));
    }
    for i in 0..k {
        for j in (i + 1)..k {
            cands.push((generator_form(imm, i, Some(j)), format!("dt{i} - dt{j}")));
        }
    }
    let mut best_idx = 0;
    let mut best_angle = -1.0;
    for (idx, (gamma, _)) in cands.iter().enumerate() {
        let mg = forms::maslov_coordinates(imm, gamma)?;
        let angle = line_angle(&mg, &mh);
        if angle > best_angle + 1e-12 {
            best_angle = angle;
            best_idx = idx;
        }
    }
    let (gamma, label) = cands.swap_remove(best_idx);
    let (harmonic, _) = forms::hodge_decompose(imm, &gamma)?;
    let (potential, theta) = forms::twisted_harmonic_representative(imm, &harmonic)?;
    let opt = optimize_translation_dilation(imm, &Variation::ClosedForm(&theta))?;
    let value = opt.value();
    if value > -CERTIFICATE_TOL {
        return Err(LabError::CertificateWeak {
            value,
            threshold: CERTIFICATE_TOL,
        });
    }
    let df = forms::d_f_star(imm, &theta)?;
    Ok(Certificate {
        generator: label,
        theta,
        potential,
        y: opt.y,
        h: opt.h,
        value,
        codifferential_sup: sup(&df),
    })
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum VerdictTag {
    HamiltonianFStable,
    HamiltonianFUnstable,
    LagrangianFUnstable,
    Inconclusive,
}

impl fmt::Display for VerdictTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            VerdictTag::HamiltonianFStable => "HamiltonianFStable",
            VerdictTag::HamiltonianFUnstable => "HamiltonianFUnstable",
            VerdictTag::LagrangianFUnstable => "LagrangianFUnstable",
            VerdictTag::Inconclusive => "Inconclusive",
        };
        f.write_str(s)
    }
}

/// Spectral quantities feeding the Hamiltonian verdict.
pub struct SpectralEvidence {
    pub lambda1: f64,
    pub cluster1_size: usize,
    pub coordinate_rank: usize,
    pub principal_angle: f64,
    pub lambda2: f64,
    pub rayleigh_min: f64,
    pub resolution: Vec<usize>,
}

pub struct StabilityVerdict {
    pub tag: VerdictTag,
    pub spectral: Option<SpectralEvidence>,
    pub certificate: Option<Certificate>,
    pub tol_eig: f64,
    pub tol_sub: f64,
    pub b1: Option<usize>,
    pub notes: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum PathOutcome {
    Stable,
    Unstable,
    Open,
}

/// Hamiltonian verdict from a precomputed low-spectrum report. Two
/// independent tests must agree: the eigenvalue test (first eigenvalue `1/2`
/// carried exactly by the coordinate restrictions, second eigenvalue at least
/// `1`) and the Rayleigh test (weighted Dirichlet quotient at least `1` on
/// the complement of constants and coordinates). Disagreement is reported as
/// inconclusive rather than resolved in favor of either test.
pub fn hamiltonian_verdict(
    model: &Model,
    report: &SpectralReport,
    tol: &VerdictTolerances,
) -> Result<StabilityVerdict, LabError> {
    let imm = &model.immersion;
    shrinker_gate(imm)?;
    if report.resolution.as_slice() != imm.grid().dims() {
        return Err(LabError::Config(format!(
            "spectral report resolution {:?} does not match the immersion grid {:?}",
            report.resolution,
            imm.grid().dims()
        )));
    }
    if report.clusters.len() < 2 {
        return Err(LabError::Config(
            "spectral report must resolve at least two clusters".into(),
        ));
    }
    let problem = spectral::assemble_weighted_problem(imm)?;
    let (rank, angle) = spectral::eigenspace_match(&problem, report)?;
    let clusters = report.cluster_values();
    let (lambda1, size1) = clusters[0];
    let lambda2 = clusters[1].0;

    let nn = imm.ambient().real_dim();
    let n = imm.node_count();
    let center = imm.extinction_center().to_vec();
    let coords: Vec<Vec<f64>> = (0..nn)
        .map(|m| {
            (0..n)
                .map(|node| imm.position(node)[m] - center[m])
                .collect()
        })
        .collect();
    let rayleigh_min = spectral::constrained_rayleigh_min(&problem, &coords)?;

    let mut notes = Vec::new();
    let e1_ok = (lambda1 - 0.5).abs() <= tol.tol_eig;
    let size_ok = size1 == rank;
    let ang_ok = angle <= tol.tol_sub;
    let gap_ok = lambda2 >= 1.0 - tol.tol_eig;
    let eigen_path = if e1_ok && size_ok && ang_ok && gap_ok {
        PathOutcome::Stable
    } else if lambda1 < 0.5 - tol.tol_eig {
        notes.push(format!(
            "eigenvalue test: lambda_1 = {lambda1:.6} sits below 1/2 - tol_eig"
        ));
        PathOutcome::Unstable
    } else if size1 > rank {
        notes.push(format!(
            "eigenvalue test: lambda_1 cluster size {size1} exceeds the coordinate span rank {rank}"
        ));
        PathOutcome::Unstable
    } else if e1_ok && size_ok && ang_ok {
        notes.push(format!(
            "eigenvalue test: lambda_2 = {lambda2:.6} sits below 1 - tol_eig"
        ));
        PathOutcome::Unstable
    } else {
        if !e1_ok {
            notes.push(format!(
                "eigenvalue test unresolved: |lambda_1 - 1/2| = {:.3e} exceeds tol_eig = {:.1e}",
                (lambda1 - 0.5).abs(),
                tol.tol_eig
            ));
        }
        if !size_ok {
            notes.push(format!(
                "eigenvalue test unresolved: cluster size {size1} below the coordinate span rank {rank}"
            ));
        }
        if !ang_ok {
            notes.push(format!(
                "eigenvalue test unresolved: principal angle {:.3e} exceeds tol_sub = {:.1e}",
                angle, tol.tol_sub
            ));
        }
        PathOutcome::Open
    };
    let rayleigh_stable = rayleigh_min >= 1.0 - tol.tol_eig;
    if !rayleigh_stable {
        notes.push(format!(
            "Rayleigh test: constrained minimum {rayleigh_min:.6} sits below 1 - tol_eig"
        ));
    }
    let tag = match (eigen_path, rayleigh_stable) {
        (PathOutcome::Stable, true) => VerdictTag::HamiltonianFStable,
        (PathOutcome::Unstable, false) => VerdictTag::HamiltonianFUnstable,
        (PathOutcome::Open, _) => VerdictTag::Inconclusive,
        _ => {
            notes.push("eigenvalue and Rayleigh tests disagree".into());
            VerdictTag::Inconclusive
        }
    };
    if imm.ambient().complex_dim() < 2 {
        notes.push(
            "ambient complex dimension is 1; the spectral thresholds are applied unchanged".into(),
        );
    }
    Ok(StabilityVerdict {
        tag,
        spectral: Some(SpectralEvidence {
            lambda1,
            cluster1_size: size1,
            coordinate_rank: rank,
            principal_angle: angle,
            lambda2,
            rayleigh_min,
            resolution: report.resolution.clone(),
        }),
        certificate: None,
        tol_eig: tol.tol_eig,
        tol_sub: tol.tol_sub,
        b1: Some(model.meta.b1),
        notes,
    })
}

enum SpectralModel<'a> {
    Full(&'a Model),
    Companion(Model),
}

impl SpectralModel<'_> {
    fn get(&self) -> &Model {
        match self {
            SpectralModel::Full(m) => m,
            SpectralModel::Companion(m) => m,
        }
    }
}

/// Rebuild the model at the dense-solve companion resolution when its grid
/// exceeds the eigensolver cap.
fn resolve_spectral_model(model: &Model) -> Result<SpectralModel<'_>, LabError> {
    if model.immersion.node_count() <= spectral::DENSE_CAP {
        return Ok(SpectralModel::Full(model));
    }
    let res = spectral::spectral_resolution(model.immersion.grid().dims());
    let spec = ModelSpec::parse(&model.meta.kind)?;
    Ok(SpectralModel::Companion(spec.build(Some(&res))?))
}

fn spectral_pipeline<'a>(
    model: &'a Model,
    tol: &VerdictTolerances,
) -> Result<(StabilityVerdict, SpectralReport, SpectralModel<'a>), LabError> {
    let used = resolve_spectral_model(model)?;
    let m = used.get();
    let problem = spectral::assemble_weighted_problem(&m.immersion)?;
    let count = m.immersion.ambient().real_dim() + 6;
    let report = spectral::lowest_spectrum(&problem, count, spectral::CLUSTER_TOL)?;
    let mut verdict = hamiltonian_verdict(m, &report, tol)?;
    if let SpectralModel::Companion(cm) = &used {
        verdict.notes.push(format!(
            "spectrum computed at companion resolution {:?} (dense cap {})",
            cm.meta.resolution,
            spectral::DENSE_CAP
        ));
    }
    Ok((verdict, report, used))
}

/// Hamiltonian verdict with the spectral pipeline run internally, coarsening
/// to a companion resolution when the grid exceeds the dense-solve cap.
pub fn hamiltonian_verdict_auto(
    model: &Model,
    tol: &VerdictTolerances,
) -> Result<StabilityVerdict, LabError> {
    Ok(spectral_pipeline(model, tol)?.0)
}

/// Lagrangian verdict. With `b1 >= 2` the certificate pipeline settles the
/// question outright; with `b1 = 1` the Hamiltonian verdict transfers, and an
/// unstable transfer carries a closed-form witness built from the lowest
/// eigenfunction.
pub fn lagrangian_verdict(
    model: &Model,
    tol: &VerdictTolerances,
) -> Result<StabilityVerdict, LabError> {
    let imm = &model.immersion;
    shrinker_gate(imm)?;
    if model.meta.b1 >= 2 {
        return match instability_certificate(model) {
            Ok(cert) => Ok(StabilityVerdict {
                tag: VerdictTag::LagrangianFUnstable,
                spectral: None,
                certificate: Some(cert),
                tol_eig: tol.tol_eig,
                tol_sub: tol.tol_sub,
                b1: Some(model.meta.b1),
                notes: vec![format!(
                    "first Betti number {} admits a class independent of the mean curvature form",
                    model.meta.b1
                )],
            }),
            Err(LabError::CertificateWeak { value, threshold }) => Ok(StabilityVerdict {
                tag: VerdictTag::Inconclusive,
                spectral: None,
                certificate: None,
                tol_eig: tol.tol_eig,
                tol_sub: tol.tol_sub,
                b1: Some(model.meta.b1),
                notes: vec![format!(
                    "certificate weak: optimized value {value:.3e} above -{threshold:.1e}; raise the resolution"
                )],
            }),
            Err(e) => Err(e),
        };
    }
    let (mut verdict, report, used) = spectral_pipeline(model, tol)?;
    match verdict.tag {
        VerdictTag::HamiltonianFStable => {
            verdict.notes.push(
                "Lagrangian and Hamiltonian F-stability are equivalent; the stable tag transfers"
                    .into(),
            );
        }
        VerdictTag::HamiltonianFUnstable => {
            verdict.tag = VerdictTag::LagrangianFUnstable;
            let m = used.get();
            let u1 = report.eigenvectors[0].clone();
            let opt = optimize_translation_dilation(&m.immersion, &Variation::Function(&u1))?;
            if opt.value() < 0.0 {
                let theta = forms::differential(&m.immersion, &u1)?;
                let df = forms::d_f_star(&m.immersion, &theta)?;
                let value = opt.value();
                verdict.certificate = Some(Certificate {
                    generator: "lowest drift eigenfunction".into(),
                    theta,
                    potential: u1,
                    y: opt.y,
                    h: opt.h,
                    value,
                    codifferential_sup: sup(&df),
                });
                verdict.notes.push(
                    "witness: exact-form variation of the lowest eigenfunction with negative optimized value"
                        .into(),
                );
            } else {
                verdict.notes.push(format!(
                    "no exact-form witness extracted: optimized value {:.3e} not negative",
                    opt.value()
                ));
            }
        }
        _ => {}
    }
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{build_clifford, build_product, ModelSpec};
    use crate::grid::ParamGrid;
    use crate::weighted;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{E, PI, TAU};

    fn torus_model(res: usize) -> Model {
        build_clifford(2, &[res, res]).unwrap()
    }

    #[test]
    fn neutral_directions_evaluate_to_zero() {
        let m = torus_model(64);
        let imm = &m.immersion;
        let zero = vec![0.0; 4];
        // mean curvature with the matching dilation
        let hfield = AmbientVectorField::mean_curvature(imm).unwrap();
        let r = second_variation_normal(imm, &hfield, &zero, -1.0).unwrap();
        assert!(r.value.abs() < 1e-10, "H direction: {}", r.value);
        assert!((r.breakdown_sum() - r.value).abs() < 1e-10);
        // translation field with the matching center velocity
        let w = [0.6, -0.2, 0.7, 0.3];
        let norm = dot(&w, &w).sqrt();
        let w: Vec<f64> = w.iter().map(|v| v / norm).collect();
        let wp = AmbientVectorField::constant_normal(imm, &w).unwrap();
        let r = second_variation_normal(imm, &wp, &w, 0.0).unwrap();
        assert!(r.value.abs() < 2e-4, "w direction: {}", r.value);
        // zero variation
        let z = AmbientVectorField::constant_normal(imm, &[0.0; 4]).unwrap();
        let r = second_variation_normal(imm, &z, &zero, 0.0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn torus_difference_class_evaluates_to_the_closed_form_constant() {
        let m = torus_model(32);
        let imm = &m.immersion;
        let theta = generator_form(imm, 0, Some(1));
        let r = second_variation_lagrangian(imm, &theta, &[0.0; 4], 0.0).unwrap();
        let expected = -TAU / E;
        assert!(
            (r.value - expected).abs() < 1e-10,
            "value {} vs {}",
            r.value,
            expected
        );
        // optimizer cannot improve on it: the class is orthogonal to the
        // mean curvature form and the translation couplings vanish
        let opt = optimize_translation_dilation(imm, &Variation::ClosedForm(&theta)).unwrap();
        assert!(opt.h.abs() < 1e-12, "h* {}", opt.h);
        assert!((opt.value() - expected).abs() < 1e-10);
    }

    #[test]
    fn mean_curvature_form_with_matching_dilation_is_neutral() {
        let m = torus_model(32);
        let imm = &m.immersion;
        let hform = forms::mean_curvature_form(imm).unwrap();
        let r = second_variation_lagrangian(imm, &hform, &[0.0; 4], -1.0).unwrap();
        assert!(r.value.abs() < 1e-10, "value {}", r.value);
        let labels: Vec<&str> = r.breakdown.iter().map(|(l, _)| l.as_str()).collect();
        assert_eq!(
            labels,
            [
                "codifferential",
                "form_norm",
                "translation_coupling",
                "dilation_coupling",
                "translation_penalty",
                "dilation_penalty"
            ]
        );
    }

    #[test]
    fn hamiltonian_eigenfunctions_sit_on_the_stability_boundary() {
        let m = torus_model(64);
        let imm = &m.immersion;
        let g = imm.grid().clone();
        // first eigenfunction: a translation neutralizes it
        let u1: Vec<f64> = (0..g.len()).map(|i| g.coord(i, 0).cos()).collect();
        let opt = optimize_translation_dilation(imm, &Variation::Function(&u1)).unwrap();
        assert!(opt.value().abs() < 2e-5, "lambda 1/2 case: {}", opt.value());
        assert!(opt.h.abs() < 1e-12, "no dilation coupling, h* {}", opt.h);
        // eigenvalue-one boundary case needs no optimization at all
        let u2: Vec<f64> = (0..g.len())
            .map(|i| (g.coord(i, 0) + g.coord(i, 1)).cos())
            .collect();
        let r = second_variation_hamiltonian(imm, &u2, &[0.0; 4], 0.0).unwrap();
        assert!(r.value.abs() < 1e-5, "lambda 1 case: {}", r.value);
        // constant potential is a zero variation
        let r = second_variation_hamiltonian(imm, &vec![1.0; g.len()], &[0.0; 4], 0.0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn form_and_normal_routes_agree_on_random_closed_forms() {
        // The two routes discretize the identity independently (composed
        // Jacobi stencils vs collocated form calculus); their gap decays at
        // fourth order, so the 1e-5 bound needs the finer grid.
        let m = torus_model(128);
        let imm = &m.immersion;
        let g = imm.grid().clone();
        let n = g.len();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let (a, b) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let cu: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u: Vec<f64> = (0..n)
                .map(|i| {
                    let (t1, t2) = (g.coord(i, 0), g.coord(i, 1));
                    cu[0] * t1.sin() + cu[1] * t1.cos() + cu[2] * t2.sin() + cu[3] * (t1 + t2).cos()
                })
                .collect();
            let du = forms::differential(imm, &u).unwrap();
            let theta = OneForm::zero(imm)
                .add_scaled(&generator_form(imm, 0, None), a)
                .add_scaled(&generator_form(imm, 1, None), b)
                .add_scaled(&du, 1.0);
            let y: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let h = rng.gen_range(-0.5..0.5);
            let lr = second_variation_lagrangian(imm, &theta, &y, h).unwrap();
            let x = forms::form_to_variation(imm, &theta).unwrap();
            let nr = second_variation_normal(imm, &x, &y, h).unwrap();
            let denom = lr.value.abs().max(nr.value.abs());
            assert!(
                (lr.value - nr.value).abs() <= 1e-5 * denom,
                "routes disagree: {} vs {}",
                lr.value,
                nr.value
            );
        }
    }

    #[test]
    fn finite_difference_of_the_functional_matches_the_formula() {
        // The curvature of the discrete functional and the assembled formula
        // are independent fourth-order discretizations; their gap on the
        // torus is about 4.5 h^4 relative, so the 1e-4 match needs 128^2.
        let models = [
            torus_model(128),
            ModelSpec::parse("circle").unwrap().build(None).unwrap(),
            ModelSpec::parse("al:p=2,q=3").unwrap().build(None).unwrap(),
        ];
        for m in &models {
            let imm = &m.immersion;
            let nn = imm.ambient().real_dim();
            let n = imm.node_count();
            let g = imm.grid().clone();
            let mut fields = vec![AmbientVectorField::mean_curvature(imm).unwrap()];
            let mut data = vec![0.0; n * nn];
            for (node, chunk) in data.chunks_mut(nn).enumerate() {
                for (c, slot) in chunk.iter_mut().enumerate() {
                    let t = g.coord(node, c % g.axes());
                    *slot = match c % 4 {
                        0 => t.sin() * 0.7,
                        1 => (2.0 * t).cos() * 0.4,
                        2 => t.sin() * 0.5,
                        _ => t.cos() * 0.3,
                    };
                }
            }
            fields.push(AmbientVectorField::normal_projected(imm, &data).unwrap());
            let zero = vec![0.0; nn];
            for xfield in &fields {
                let formula = second_variation_normal(imm, xfield, &zero, 0.0).unwrap().value;
                let s = 1e-3;
                let f_at = |sign: f64| {
                    let pos: Vec<f64> = imm
                        .positions()
                        .iter()
                        .enumerate()
                        .map(|(i, p)| p + sign * s * xfield.at(i / nn, nn)[i % nn])
                        .collect();
                    let pert = ImmersionField::at_origin(g.clone(), imm.ambient().clone(), pos)
                        .unwrap();
                    weighted::f_functional(&pert, &vec![0.0; nn], 1.0).unwrap()
                };
                let f0 = weighted::f_functional(imm, &vec![0.0; nn], 1.0).unwrap();
                let fd = (f_at(1.0) + f_at(-1.0) - 2.0 * f0) / (s * s);
                let floor = 1e-9 * f0;
                assert!(
                    (fd - formula).abs() <= (1e-4 * formula.abs()).max(floor),
                    "{}: fd {} vs formula {}",
                    m.meta.kind,
                    fd,
                    formula
                );
            }
        }
    }

    #[test]
    fn drift_harmonic_orthogonal_classes_realize_their_norm_deficit() {
        let m = torus_model(32);
        let imm = &m.immersion;
        let wm = WeightedMeasure::at_extinction(imm).unwrap();
        for scale in [1.0, 2.5] {
            let theta = generator_form(imm, 0, Some(1)).add_scaled(&forms::OneForm::zero(imm), 0.0);
            let theta = theta.add_scaled(&generator_form(imm, 0, Some(1)), scale - 1.0);
            let hform = forms::mean_curvature_form(imm).unwrap();
            let cross = forms::weighted_inner(imm, &wm, &theta, &hform).unwrap();
            assert!(cross.abs() < 1e-12, "class not orthogonal: {cross}");
            let opt = optimize_translation_dilation(imm, &Variation::ClosedForm(&theta)).unwrap();
            let norm = forms::weighted_inner(imm, &wm, &theta, &theta).unwrap();
            let expected = -wm.prefactor() * norm;
            assert!(
                (opt.value() - expected).abs() < 1e-8,
                "value {} vs -norm {}",
                opt.value(),
                expected
            );
        }
    }

    #[test]
    fn translation_dilation_hessian_is_negative_semidefinite() {
        let m = torus_model(24);
        let imm = &m.immersion;
        let g = imm.grid().clone();
        let u: Vec<f64> = (0..g.len())
            .map(|i| (g.coord(i, 0) * 2.0).cos() + g.coord(i, 1).sin())
            .collect();
        let theta = generator_form(imm, 1, None).add_scaled(&forms::differential(imm, &u).unwrap(), 0.8);
        for var in [
            Variation::ClosedForm(&theta),
            Variation::Function(&u),
        ] {
            let qm = quadratic_model(imm, &var).unwrap();
            let d = qm.dim();
            let k = nalgebra::DMatrix::from_row_slice(d, d, &qm.curvature);
            let eig = nalgebra::SymmetricEigen::new(k);
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            // Hessian of F'' is -K, so K must be PSD
            assert!(min > -1e-10, "curvature eigenvalue {min}");
            // maximizer evaluates no worse than a grid of probes
            let z = qm.maximizer();
            let best = qm.evaluate(&z);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..50 {
                let probe: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
                assert!(qm.evaluate(&probe) <= best + 1e-9);
            }
        }
    }

    #[test]
    fn certificate_on_the_torus_hits_the_closed_form_value() {
        let m = torus_model(32);
        let cert = instability_certificate(&m).unwrap();
        assert_eq!(cert.generator, "dt0 - dt1");
        let expected = -TAU / E;
        assert!(
            (cert.value - expected).abs() < 1e-10,
            "certificate {} vs {}",
            cert.value,
            expected
        );
        assert!(cert.codifferential_sup < 1e-10);
        assert!(cert.h.abs() < 1e-12);
        assert!(sup(&cert.potential) < 1e-10, "torus potential is trivial");
    }

    #[test]
    fn certificate_rejects_simple_topology() {
        let m = ModelSpec::parse("circle").unwrap().build(Some(&[64])).unwrap();
        match instability_certificate(&m) {
            Err(LabError::NotApplicable(_)) => {}
            other => panic!("expected NotApplicable, got {:?}", other.map(|c| c.value)),
        }
    }

    #[test]
    fn product_with_curved_factor_is_certified_unstable() {
        let al = ModelSpec::parse("al:p=2,q=3")
            .unwrap()
            .build(Some(&[1024]))
            .unwrap();
        let circle = ModelSpec::parse("circle").unwrap().build(Some(&[32])).unwrap();
        let m = build_product(vec![al, circle]).unwrap();
        let v = lagrangian_verdict(&m, &VerdictTolerances::default()).unwrap();
        assert_eq!(v.tag, VerdictTag::LagrangianFUnstable);
        let cert = v.certificate.expect("certificate attached");
        assert!(cert.value < -1e-3, "certificate value {}", cert.value);
        assert!(
            sup(&cert.potential) > 1e-6,
            "curved factor needs a nontrivial gauge potential"
        );
        assert!(cert.codifferential_sup < 1e-5);
    }

    #[test]
    fn torus_verdicts_match_the_known_classification() {
        let m = torus_model(32);
        let tol = VerdictTolerances::default();
        let hv = hamiltonian_verdict_auto(&m, &tol).unwrap();
        assert_eq!(hv.tag, VerdictTag::HamiltonianFStable);
        let ev = hv.spectral.expect("spectral evidence");
        assert!((ev.lambda1 - 0.5).abs() < 1e-6);
        assert_eq!(ev.cluster1_size, 4);
        assert_eq!(ev.coordinate_rank, 4);
        assert!(ev.principal_angle < 1e-6);
        assert!((ev.lambda2 - 1.0).abs() < 1e-6);
        assert!((ev.rayleigh_min - 1.0).abs() < 1e-6);
        // tightening the thresholds tenfold must not flip the verdict
        let tight = VerdictTolerances {
            tol_eig: tol.tol_eig / 10.0,
            tol_sub: tol.tol_sub / 10.0,
        };
        let hv = hamiltonian_verdict_auto(&m, &tight).unwrap();
        assert_eq!(hv.tag, VerdictTag::HamiltonianFStable);
        let lv = lagrangian_verdict(&m, &tol).unwrap();
        assert_eq!(lv.tag, VerdictTag::LagrangianFUnstable);
        assert!((lv.certificate.unwrap().value + TAU / E).abs() < 1e-10);
    }

    #[test]
    fn circle_delegates_to_the_hamiltonian_verdict() {
        let m = ModelSpec::parse("circle").unwrap().build(Some(&[256])).unwrap();
        let v = lagrangian_verdict(&m, &VerdictTolerances::default()).unwrap();
        assert_eq!(v.tag, VerdictTag::HamiltonianFStable);
        assert!(v.notes.iter().any(|n| n.contains("equivalent")));
        assert!(v.notes.iter().any(|n| n.contains("complex dimension is 1")));
        let ev = v.spectral.expect("spectral evidence");
        assert!((ev.lambda1 - 0.5).abs() < 1e-8);
        assert_eq!(ev.cluster1_size, 2);
        assert_eq!(ev.coordinate_rank, 2);
        assert!((ev.lambda2 - 2.0).abs() < 1e-6);
        assert!(ev.rayleigh_min > 1.5, "circle gap is 2, got {}", ev.rayleigh_min);
    }

    #[test]
    fn scaled_torus_is_rejected_before_any_verdict() {
        let m = torus_model(16);
        let scaled: Vec<f64> = m.immersion.positions().iter().map(|p| p * 1.05).collect();
        let off = ImmersionField::at_origin(
            ParamGrid::standard(&[16, 16]).unwrap(),
            crate::geometry::AmbientStructure::new(2),
            scaled,
        )
        .unwrap();
        let bad = Model {
            immersion: off,
            meta: m.meta,
        };
        let tol = VerdictTolerances::default();
        match hamiltonian_verdict_auto(&bad, &tol) {
            Err(LabError::NotAShrinker { residual }) => assert!(residual > 1e-2),
            other => panic!("expected NotAShrinker, got {:?}", other.map(|v| v.tag)),
        }
        match second_variation_normal(
            &bad.immersion,
            &AmbientVectorField::mean_curvature(&bad.immersion).unwrap(),
            &[0.0; 4],
            0.0,
        ) {
            Err(LabError::NotAShrinker { .. }) => {}
            other => panic!("expected NotAShrinker, got {:?}", other.map(|v| v.value)),
        }
    }

    #[test]
    fn companion_resolution_kicks_in_above_the_dense_cap() {
        let m = build_clifford(2, &[128, 64]).unwrap();
        match resolve_spectral_model(&m).unwrap() {
            SpectralModel::Companion(cm) => {
                assert_eq!(cm.meta.resolution, vec![64, 64]);
                assert!(cm.immersion.node_count() <= spectral::DENSE_CAP);
            }
            SpectralModel::Full(_) => panic!("expected a companion rebuild"),
        }
        let small = torus_model(16);
        assert!(matches!(
            resolve_spectral_model(&small).unwrap(),
            SpectralModel::Full(_)
        ));
    }

    #[test]
    fn open_form_is_rejected() {
        let m = torus_model(16);
        let imm = &m.immersion;
        let g = imm.grid().clone();
        let mut comps = vec![0.0; g.len() * 2];
        for node in 0..g.len() {
            comps[node * 2] = g.coord(node, 1).sin();
        }
        let theta = OneForm::from_components(imm, comps).unwrap();
        match second_variation_lagrangian(imm, &theta, &[0.0; 4], 0.0) {
            Err(LabError::NotClosed { .. }) => {}
            other => panic!("expected NotClosed, got {:?}", other.map(|v| v.value)),
        }
        let _ = PI;
    }
}
