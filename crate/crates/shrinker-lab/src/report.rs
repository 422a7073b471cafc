//! Report assembly for the command-line front end: each command produces a
//! schema-complete JSON document (every section present, either filled or
//! marked skipped with a reason), rendered with 17-significant-digit floats
//! so reruns are byte-identical.

use std::io;

use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::{json, Map, Value};

use crate::catalog::{Model, ModelSpec};
use crate::expr::TrigExpr;
use crate::forms::{self, OneForm};
use crate::geometry::AmbientVectorField;
use crate::spectral::{
    self, assemble_weighted_problem, eigenspace_match, lowest_spectrum, richardson_extrapolate,
    SpectralReport, CLUSTER_TOL, DENSE_CAP,
};
use crate::stability::{
    self, lagrangian_verdict, optimize_translation_dilation, second_variation, StabilityVerdict,
    Variation, VerdictTag, VerdictTolerances,
};
use crate::weighted;
use crate::LabError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SCHEMA: &str = "shrinker-lab/1";

/// Verification gates applied by `verify` (and the spectrum residual gate).
pub const GATE_SHRINKER: f64 = 1e-6;
pub const GATE_LAGRANGIAN: f64 = 1e-10;
pub const GATE_IDENTITY: f64 = 1e-7;
pub const GATE_IBP: f64 = 1e-5;
pub const GATE_EIGEN_RESIDUAL: f64 = 1e-7;

pub const ENTROPY_STARTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self, CmdError> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(CmdError::Config(LabError::Config(format!(
                "unknown output format `{other}` (expected json or csv)"
            )))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: String,
    /// Per-study-point scalar resolutions, broadcast to every grid axis;
    /// empty means the model default.
    pub resolutions: Vec<usize>,
    pub eigs: usize,
    pub tol: VerdictTolerances,
    pub seed: u64,
    pub strict: bool,
    pub format: OutputFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: String::new(),
            resolutions: Vec::new(),
            eigs: 12,
            tol: VerdictTolerances::default(),
            seed: 17,
            strict: false,
            format: OutputFormat::Json,
        }
    }
}

/// Errors tagged with the phase that produced them, which fixes the exit
/// code: 1 for configuration problems, 2 for model build failures, 3 for
/// failures while running the requested computation.
#[derive(Debug)]
pub enum CmdError {
    Config(LabError),
    Build(LabError),
    Run(LabError),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 1,
            CmdError::Build(_) => 2,
            CmdError::Run(_) => 3,
        }
    }

    pub fn inner(&self) -> &LabError {
        match self {
            CmdError::Config(e) | CmdError::Build(e) | CmdError::Run(e) => e,
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            // the wrapped error already names itself a configuration error
            CmdError::Config(e) => write!(f, "{e}"),
            CmdError::Build(e) => write!(f, "model build failed: {e}"),
            CmdError::Run(e) => write!(f, "run failed: {e}"),
        }
    }
}

pub struct RunOutcome {
    pub report: Value,
    pub passed: bool,
    pub failures: Vec<String>,
    /// Pre-rendered CSV when the command has a tabular form (spectrum only).
    pub csv: Option<String>,
}

// --- serialization ---------------------------------------------------------

/// Pretty JSON with every float printed as `{:.16e}` (17 significant
/// digits).
struct SciFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for SciFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(w, "{value:.16e}")
        } else {
            w.write_all(b"null")
        }
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Render a report value as JSON with the float convention above.
pub fn to_json_string(report: &Value) -> String {
    let mut out = Vec::new();
    let mut ser =
        serde_json::Serializer::with_formatter(&mut out, SciFormatter(PrettyFormatter::new()));
    serde::Serialize::serialize(report, &mut ser).expect("report serialization");
    out.push(b'\n');
    String::from_utf8(out).expect("json is utf8")
}

/// Render the outcome in the requested format. CSV is only defined for the
/// spectrum table.
pub fn render(outcome: &RunOutcome, format: OutputFormat) -> Result<String, CmdError> {
    match format {
        OutputFormat::Json => Ok(to_json_string(&outcome.report)),
        OutputFormat::Csv => outcome.csv.clone().ok_or_else(|| {
            CmdError::Config(LabError::Config(
                "csv output is only available for the spectrum command".into(),
            ))
        }),
    }
}

// --- envelope --------------------------------------------------------------

const SECTIONS: [&str; 11] = [
    "certificate",
    "entropy",
    "f_functional",
    "identities",
    "integration_by_parts",
    "lagrangian_defect",
    "per_resolution",
    "second_variation",
    "shrinker_residual",
    "spectrum",
    "verdicts",
];

fn skipped(reason: &str) -> Value {
    json!({ "skipped": reason })
}

fn envelope(cfg: &RunConfig, command: &str, model: &Model) -> Map<String, Value> {
    let mut root = Map::new();
    root.insert("schema".into(), json!(SCHEMA));
    root.insert("command".into(), json!(command));
    root.insert(
        "config".into(),
        json!({
            "model": &cfg.model,
            "resolutions": &cfg.resolutions,
            "eigs": cfg.eigs,
            "tol_eig": cfg.tol.tol_eig,
            "tol_sub": cfg.tol.tol_sub,
            "seed": cfg.seed,
            "strict": cfg.strict,
            "format": match cfg.format { OutputFormat::Json => "json", OutputFormat::Csv => "csv" },
        }),
    );
    root.insert(
        "model".into(),
        json!({
            "kind": &model.meta.kind,
            "b1": model.meta.b1,
            "dim": model.meta.dim,
            "complex_dim": model.meta.complex_dim,
            "resolution": model.immersion.grid().dims(),
        }),
    );
    let reason = format!("not part of the {command} command");
    for key in SECTIONS {
        root.insert(key.into(), skipped(&reason));
    }
    root
}

// --- model building --------------------------------------------------------

fn parse_spec(cfg: &RunConfig) -> Result<ModelSpec, CmdError> {
    ModelSpec::parse(&cfg.model).map_err(CmdError::Config)
}

fn build_at(spec: &ModelSpec, res: Option<usize>) -> Result<Model, CmdError> {
    let built = match res {
        None => spec.build(None),
        Some(r) => spec.build(Some(&vec![r; spec.axes()])),
    };
    built.map_err(CmdError::Build)
}

/// The study points: the configured scalar resolutions, or one default run.
fn study_points(cfg: &RunConfig) -> Vec<Option<usize>> {
    if cfg.resolutions.is_empty() {
        vec![None]
    } else {
        cfg.resolutions.iter().map(|&r| Some(r)).collect()
    }
}

fn unit_vectors(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let mut w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
            for v in w.iter_mut() {
                *v /= norm;
            }
            w
        })
        .collect()
}

// --- verify ----------------------------------------------------------------

struct VerifyRow {
    resolution: Vec<usize>,
    shrinker_residual: f64,
    lagrangian_defect: f64,
    identity_max: f64,
    f_value: f64,
}

fn verify_row(model: &Model, seed: u64, samples: usize) -> Result<VerifyRow, CmdError> {
    let imm = &model.immersion;
    let geo_err = |e| CmdError::Run(e);
    let shrinker_residual = imm.shrinker_residual().map_err(geo_err)?;
    let lagrangian_defect = imm.lagrangian_defect().map_err(geo_err)?;
    let nn = imm.ambient().real_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut identity_max = 0.0f64;
    for w in unit_vectors(&mut rng, nn, samples) {
        let suite = weighted::identity_suite(imm, &w).map_err(geo_err)?;
        for r in suite {
            identity_max = identity_max.max(r);
        }
    }
    let f_value = weighted::f_functional(imm, &vec![0.0; nn], 1.0).map_err(geo_err)?;
    Ok(VerifyRow {
        resolution: imm.grid().dims().to_vec(),
        shrinker_residual,
        lagrangian_defect,
        identity_max,
        f_value,
    })
}

pub fn run_verify(cfg: &RunConfig) -> Result<RunOutcome, CmdError> {
    if cfg.format == OutputFormat::Csv {
        return Err(CmdError::Config(LabError::Config(
            "csv output is only available for the spectrum command".into(),
        )));
    }
    let spec = parse_spec(cfg)?;
    let points = study_points(cfg);
    let mut rows = Vec::new();
    let mut model = None;
    for &r in &points {
        let m = build_at(&spec, r)?;
        rows.push(verify_row(&m, cfg.seed, 10)?);
        model = Some(m);
    }
    let model = model.expect("at least one study point");
    let imm = &model.immersion;
    let nn = imm.ambient().real_dim();
    let mut root = envelope(cfg, "verify", &model);
    let mut failures = Vec::new();

    let head = rows.last().expect("rows nonempty");
    let gate = |name: &str, value: f64, bound: f64, failures: &mut Vec<String>| -> Value {
        let ok = value <= bound;
        if !ok {
            failures.push(format!("{name} {value:.3e} exceeds {bound:.1e}"));
        }
        json!({ "value": value, "gate": bound, "passed": ok })
    };
    let sr = gate(
        "shrinker residual",
        head.shrinker_residual,
        GATE_SHRINKER,
        &mut failures,
    );
    root.insert("shrinker_residual".into(), sr);
    let ld = gate(
        "lagrangian defect",
        head.lagrangian_defect,
        GATE_LAGRANGIAN,
        &mut failures,
    );
    root.insert("lagrangian_defect".into(), ld);

    // identity suite, per-identity maxima over the sampled directions
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut per_identity = [0.0f64; 6];
    for w in unit_vectors(&mut rng, nn, 10) {
        let suite = weighted::identity_suite(imm, &w).map_err(CmdError::Run)?;
        for (slot, r) in per_identity.iter_mut().zip(suite) {
            *slot = slot.max(r);
        }
    }
    let identity_max = per_identity.iter().fold(0.0f64, |a, &b| a.max(b));
    if identity_max > GATE_IDENTITY {
        failures.push(format!(
            "identity residual {identity_max:.3e} exceeds {GATE_IDENTITY:.1e}"
        ));
    }
    root.insert(
        "identities".into(),
        json!({
            "samples": 10,
            "seed": cfg.seed,
            "gate": GATE_IDENTITY,
            "per_identity": (1..=6).zip(per_identity).map(|(i, r)| json!({
                "index": i,
                "max_residual": r,
            })).collect::<Vec<_>>(),
            "max_residual": identity_max,
            "passed": identity_max <= GATE_IDENTITY,
        }),
    );

    // integration-by-parts sample with fixed trig fields
    let u_src = "cos(t1)";
    let v_src = if imm.grid().axes() >= 2 {
        "sin(t1) + cos(t2)"
    } else {
        "sin(t1) + cos(2*t1)"
    };
    let u = TrigExpr::parse(u_src)
        .expect("fixed expression")
        .sample(imm.grid())
        .map_err(CmdError::Run)?;
    let v = TrigExpr::parse(v_src)
        .expect("fixed expression")
        .sample(imm.grid())
        .map_err(CmdError::Run)?;
    let defect = weighted::ibp_defect(imm, &u, &v, &vec![0.0; nn], 1.0).map_err(CmdError::Run)?;
    if defect > GATE_IBP {
        failures.push(format!(
            "integration-by-parts defect {defect:.3e} exceeds {GATE_IBP:.1e}"
        ));
    }
    root.insert(
        "integration_by_parts".into(),
        json!({
            "u": u_src,
            "v": v_src,
            "defect": defect,
            "gate": GATE_IBP,
            "passed": defect <= GATE_IBP,
        }),
    );

    root.insert(
        "f_functional".into(),
        json!({
            "center": vec![0.0; nn],
            "scale": 1.0,
            "value": head.f_value,
        }),
    );

    if rows.len() > 1 {
        root.insert(
            "per_resolution".into(),
            json!({
                "rows": rows.iter().map(|r| json!({
                    "resolution": &r.resolution,
                    "shrinker_residual": r.shrinker_residual,
                    "lagrangian_defect": r.lagrangian_defect,
                    "identity_max": r.identity_max,
                    "f_value": r.f_value,
                })).collect::<Vec<_>>(),
            }),
        );
    } else {
        root.insert("per_resolution".into(), skipped("single resolution run"));
    }

    let passed = failures.is_empty();
    root.insert("passed".into(), json!(passed));
    Ok(RunOutcome {
        report: Value::Object(root),
        passed,
        failures,
        csv: None,
    })
}

// --- spectrum --------------------------------------------------------------

fn spectrum_csv(report: &SpectralReport) -> String {
    let mut out = String::from("index,value,residual,cluster\n");
    for (i, (val, res)) in report
        .eigenvalues
        .iter()
        .zip(&report.residuals)
        .enumerate()
    {
        let cluster = report
            .clusters
            .iter()
            .position(|&(s, l)| i >= s && i < s + l)
            .expect("clusters cover the spectrum");
        out.push_str(&format!("{i},{val:.16e},{res:.16e},{cluster}\n"));
    }
    out
}

fn spectrum_value(report: &SpectralReport, rank: usize, angle: f64) -> Value {
    let rows: Vec<Value> = report
        .eigenvalues
        .iter()
        .zip(&report.residuals)
        .enumerate()
        .map(|(i, (val, res))| {
            let cluster = report
                .clusters
                .iter()
                .position(|&(s, l)| i >= s && i < s + l)
                .expect("clusters cover the spectrum");
            json!({
                "index": i,
                "value": val,
                "residual": res,
                "cluster": cluster,
                // mesh sawtooth modes are parked near the stabilization
                // level; they are grid artifacts, not spectrum
                "stabilized": (val - spectral::STAB_LEVEL).abs() < 0.1,
            })
        })
        .collect();
    let clusters: Vec<Value> = report
        .cluster_values()
        .iter()
        .enumerate()
        .map(|(id, (mean, len))| json!({ "id": id, "mean": mean, "size": len }))
        .collect();
    json!({
        "resolution": &report.resolution,
        "cluster_tol": report.cluster_tol,
        "rows": rows,
        "clusters": clusters,
        "eigenspace_match": {
            "coordinate_rank": rank,
            "lowest_cluster_principal_angle": angle,
        },
        "richardson": &report.richardson,
    })
}

fn solve_spectrum(model: &Model, eigs: usize) -> Result<(SpectralReport, usize, f64), CmdError> {
    let problem = assemble_weighted_problem(&model.immersion).map_err(CmdError::Run)?;
    let report = lowest_spectrum(&problem, eigs, CLUSTER_TOL).map_err(CmdError::Run)?;
    let (rank, angle) = eigenspace_match(&problem, &report).map_err(CmdError::Run)?;
    Ok((report, rank, angle))
}

pub fn run_spectrum(cfg: &RunConfig) -> Result<RunOutcome, CmdError> {
    if cfg.eigs < 2 {
        return Err(CmdError::Config(LabError::Config(
            "eigen count must be at least 2".into(),
        )));
    }
    let spec = parse_spec(cfg)?;
    let points = study_points(cfg);
    let model = build_at(&spec, *points.last().expect("nonempty"))?;
    let mut notes: Vec<String> = Vec::new();

    // fit under the dense-eigensolve cap by coarsening if necessary
    let dims = model.immersion.grid().dims().to_vec();
    let solve_model;
    let solve_ref = if model.immersion.node_count() <= DENSE_CAP {
        &model
    } else {
        let coarse_dims = spectral::spectral_resolution(&dims);
        notes.push(format!(
            "grid {dims:?} exceeds the dense eigensolver cap; spectrum computed at {coarse_dims:?}"
        ));
        solve_model = spec.build(Some(&coarse_dims)).map_err(CmdError::Build)?;
        &solve_model
    };

    let (mut report, rank, angle) = solve_spectrum(solve_ref, cfg.eigs)?;

    // Richardson companion at half resolution
    let half: Vec<usize> = solve_ref
        .immersion
        .grid()
        .dims()
        .iter()
        .map(|&d| (d / 2).max(8))
        .collect();
    if half
        .iter()
        .zip(solve_ref.immersion.grid().dims())
        .all(|(&h, &d)| h * 2 == d)
    {
        let coarse_model = spec.build(Some(&half)).map_err(CmdError::Build)?;
        let coarse_problem =
            assemble_weighted_problem(&coarse_model.immersion).map_err(CmdError::Run)?;
        let coarse = lowest_spectrum(&coarse_problem, cfg.eigs, CLUSTER_TOL).map_err(CmdError::Run)?;
        richardson_extrapolate(&mut report, &coarse);
    } else {
        notes.push("richardson companion skipped: resolution cannot be halved".into());
    }

    let mut failures = Vec::new();
    let worst = report.residuals.iter().fold(0.0f64, |a, &b| a.max(b));
    if worst > GATE_EIGEN_RESIDUAL {
        failures.push(format!(
            "eigenpair residual {worst:.3e} exceeds {GATE_EIGEN_RESIDUAL:.1e}"
        ));
    }

    let mut root = envelope(cfg, "spectrum", &model);
    let mut spectrum = spectrum_value(&report, rank, angle);
    spectrum["residual_gate"] = json!(GATE_EIGEN_RESIDUAL);
    spectrum["notes"] = json!(notes);
    root.insert("spectrum".into(), spectrum);

    // per-resolution study: cluster means at each configured resolution
    if points.len() > 1 {
        let mut rows = Vec::new();
        for &r in &points {
            let m = build_at(&spec, r)?;
            if m.immersion.node_count() > DENSE_CAP {
                rows.push(json!({
                    "resolution": m.immersion.grid().dims(),
                    "skipped": "exceeds the dense eigensolver cap",
                }));
                continue;
            }
            let (rep, _, _) = solve_spectrum(&m, cfg.eigs)?;
            rows.push(json!({
                "resolution": &rep.resolution,
                "clusters": rep.cluster_values().iter().enumerate().map(|(id, (mean, len))| json!({
                    "id": id, "mean": mean, "size": len,
                })).collect::<Vec<_>>(),
            }));
        }
        root.insert("per_resolution".into(), json!({ "rows": rows }));
    } else {
        root.insert("per_resolution".into(), skipped("single resolution run"));
    }

    let passed = failures.is_empty();
    root.insert("passed".into(), json!(passed));
    Ok(RunOutcome {
        report: Value::Object(root),
        passed,
        failures,
        csv: Some(spectrum_csv(&report)),
    })
}

// --- stability -------------------------------------------------------------

fn verdict_value(v: &StabilityVerdict) -> Value {
    json!({
        "tag": v.tag.to_string(),
        "tol_eig": v.tol_eig,
        "tol_sub": v.tol_sub,
        "b1": v.b1,
        "notes": &v.notes,
        "spectral": v.spectral.as_ref().map(|s| json!({
            "lambda1": s.lambda1,
            "cluster1_size": s.cluster1_size,
            "coordinate_rank": s.coordinate_rank,
            "principal_angle": s.principal_angle,
            "lambda2": s.lambda2,
            "rayleigh_min": s.rayleigh_min,
            "resolution": &s.resolution,
        })),
    })
}

fn certificate_value(model: &Model, cert: &stability::Certificate) -> Value {
    let imm = &model.immersion;
    let n = imm.node_count();
    let k = imm.grid().axes();
    let maslov = forms::maslov_coordinates(imm, &cert.theta).ok();
    let stride = (n / 32).max(1);
    let u0_samples: Vec<Value> = (0..n)
        .step_by(stride)
        .map(|node| json!({ "node": node, "value": cert.potential[node] }))
        .collect();
    let theta_samples: Vec<Value> = (0..n)
        .step_by(stride)
        .map(|node| {
            json!({
                "node": node,
                "components": (0..k).map(|a| cert.theta.comp(node, a)).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({
        "generator": &cert.generator,
        "maslov_coordinates": maslov,
        "value": cert.value,
        "y": &cert.y,
        "h": cert.h,
        "codifferential_sup": cert.codifferential_sup,
        "u0_samples": u0_samples,
        "theta_samples": theta_samples,
        "sample_stride": stride,
    })
}

pub fn run_stability(cfg: &RunConfig) -> Result<RunOutcome, CmdError> {
    if cfg.format == OutputFormat::Csv {
        return Err(CmdError::Config(LabError::Config(
            "csv output is only available for the spectrum command".into(),
        )));
    }
    let spec = parse_spec(cfg)?;
    let points = study_points(cfg);
    let model = build_at(&spec, *points.last().expect("nonempty"))?;

    let ham = stability::hamiltonian_verdict_auto(&model, &cfg.tol).map_err(CmdError::Run)?;
    let lag = lagrangian_verdict(&model, &cfg.tol).map_err(CmdError::Run)?;

    let mut root = envelope(cfg, "stability", &model);
    root.insert(
        "verdicts".into(),
        json!({
            "hamiltonian": verdict_value(&ham),
            "lagrangian": verdict_value(&lag),
        }),
    );
    match (&lag.certificate, &ham.certificate) {
        (Some(cert), _) | (None, Some(cert)) => {
            root.insert("certificate".into(), certificate_value(&model, cert));
        }
        (None, None) => {
            root.insert(
                "certificate".into(),
                skipped("no certificate attached to either verdict"),
            );
        }
    }

    let mut failures = Vec::new();
    if cfg.strict {
        for (name, v) in [("hamiltonian", &ham), ("lagrangian", &lag)] {
            if v.tag == VerdictTag::Inconclusive {
                failures.push(format!("{name} verdict is inconclusive (strict mode)"));
            }
        }
    }
    let passed = failures.is_empty();
    root.insert("passed".into(), json!(passed));
    Ok(RunOutcome {
        report: Value::Object(root),
        passed,
        failures,
        csv: None,
    })
}

// --- second variation ------------------------------------------------------

enum ParsedVariation {
    MeanCurvature,
    Form(Vec<f64>),
    Function(TrigExpr),
}

fn parse_variation(spec: &str) -> Result<ParsedVariation, CmdError> {
    let cfg_err = |msg: String| CmdError::Config(LabError::Config(msg));
    if spec == "meanCurvature" {
        return Ok(ParsedVariation::MeanCurvature);
    }
    if let Some(rest) = spec.strip_prefix("form:") {
        let coeffs: Result<Vec<f64>, _> = rest.split(',').map(|t| t.trim().parse()).collect();
        return match coeffs {
            Ok(c) if !c.is_empty() => Ok(ParsedVariation::Form(c)),
            _ => Err(cfg_err(format!(
                "form coefficients must be comma-separated numbers, got `{rest}`"
            ))),
        };
    }
    if let Some(rest) = spec.strip_prefix("function:") {
        return TrigExpr::parse(rest)
            .map(ParsedVariation::Function)
            .map_err(CmdError::Config);
    }
    Err(cfg_err(format!(
        "variation spec `{spec}` not recognized (expected meanCurvature, form:<coeffs>, or function:<expr>)"
    )))
}

pub fn run_second_variation(cfg: &RunConfig, varspec: &str) -> Result<RunOutcome, CmdError> {
    if cfg.format == OutputFormat::Csv {
        return Err(CmdError::Config(LabError::Config(
            "csv output is only available for the spectrum command".into(),
        )));
    }
    let parsed = parse_variation(varspec)?;
    let spec = parse_spec(cfg)?;
    let points = study_points(cfg);
    let model = build_at(&spec, *points.last().expect("nonempty"))?;
    let imm = &model.immersion;
    let nn = imm.ambient().real_dim();
    let k = imm.grid().axes();

    // hold the concrete carrier alive while borrowing it as a Variation
    let hfield;
    let form;
    let samples;
    let variation = match &parsed {
        ParsedVariation::MeanCurvature => {
            hfield = AmbientVectorField::mean_curvature(imm).map_err(CmdError::Run)?;
            Variation::Normal(&hfield)
        }
        ParsedVariation::Form(coeffs) => {
            if coeffs.len() != k {
                return Err(CmdError::Config(LabError::Config(format!(
                    "form wants {k} coefficients for this model, got {}",
                    coeffs.len()
                ))));
            }
            let mut comps = vec![0.0; imm.node_count() * k];
            for chunk in comps.chunks_mut(k) {
                chunk.copy_from_slice(coeffs);
            }
            form = OneForm::from_components(imm, comps).map_err(CmdError::Run)?;
            Variation::ClosedForm(&form)
        }
        ParsedVariation::Function(expr) => {
            samples = expr.sample(imm.grid()).map_err(CmdError::Config)?;
            Variation::Function(&samples)
        }
    };

    let at_zero = second_variation(imm, &variation, &vec![0.0; nn], 0.0).map_err(CmdError::Run)?;
    let opt = optimize_translation_dilation(imm, &variation).map_err(CmdError::Run)?;

    let mut root = envelope(cfg, "second-variation", &model);
    root.insert(
        "second_variation".into(),
        json!({
            "variation": varspec,
            "kind": at_zero.kind.to_string(),
            "value_at_zero": at_zero.value,
            "breakdown": at_zero.breakdown.iter().map(|(label, v)| json!({
                "term": label, "value": v,
            })).collect::<Vec<_>>(),
            "optimized": {
                "y": &opt.y,
                "h": opt.h,
                "value": opt.value(),
                "breakdown": opt.result.breakdown.iter().map(|(label, v)| json!({
                    "term": label, "value": v,
                })).collect::<Vec<_>>(),
            },
        }),
    );
    root.insert("passed".into(), json!(true));
    Ok(RunOutcome {
        report: Value::Object(root),
        passed: true,
        failures: Vec::new(),
        csv: None,
    })
}

// --- entropy ---------------------------------------------------------------

pub fn run_entropy(cfg: &RunConfig) -> Result<RunOutcome, CmdError> {
    if cfg.format == OutputFormat::Csv {
        return Err(CmdError::Config(LabError::Config(
            "csv output is only available for the spectrum command".into(),
        )));
    }
    let spec = parse_spec(cfg)?;
    let points = study_points(cfg);
    let model = build_at(&spec, *points.last().expect("nonempty"))?;
    let imm = &model.immersion;
    let nn = imm.ambient().real_dim();

    let ent = weighted::entropy(imm, cfg.seed, ENTROPY_STARTS).map_err(CmdError::Run)?;
    let f0 = weighted::f_functional(imm, &vec![0.0; nn], 1.0).map_err(CmdError::Run)?;

    let mut root = envelope(cfg, "entropy", &model);
    root.insert(
        "entropy".into(),
        json!({
            "value": ent.value,
            "x0": &ent.x0,
            "t0": ent.t0,
            "starts": ent.starts,
            "heuristic_supremum": ent.heuristic_supremum,
            "maxima": ent.maxima.iter().map(|m| json!({
                "value": m.value, "x0": &m.x0, "t0": m.t0,
            })).collect::<Vec<_>>(),
        }),
    );
    root.insert(
        "f_functional".into(),
        json!({
            "center": vec![0.0; nn],
            "scale": 1.0,
            "value": f0,
        }),
    );
    root.insert("passed".into(), json!(true));
    Ok(RunOutcome {
        report: Value::Object(root),
        passed: true,
        failures: Vec::new(),
        csv: None,
    })
}
