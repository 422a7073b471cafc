//! Catalog of closed Lagrangian self-shrinkers, normalized to extinction
//! data `(0, 1)`.
//!
//! * `circle`: the circle of radius `sqrt 2` in `C`.
//! * `clifford:n=k`: the Clifford torus, product of `k` such circles.
//! * `al:p=..,q=..`: the Abresch-Langer curve with rotation number `p/q`
//!   in the window `(1/2, sqrt(2)/2)`, resampled to uniform arclength.
//! * `product(A;B;...)`: Cartesian products of the above.
//!
//! The Abresch-Langer system in arclength is
//! `kappa' = kappa tau / 2`, `tau' = 1 - 2 kappa^2` with `tau = <x, T>`;
//! positions recover algebraically as `x = tau T - 2 kappa N`. A closed curve
//! needs the turning angle over one half-period of `kappa` to equal
//! `pi p / q`, which the builder enforces by shooting on `kappa(0)`.

use crate::geometry::{AmbientStructure, ImmersionField};
use crate::grid::ParamGrid;
use crate::LabError;
use std::f64::consts::{PI, TAU};

/// Static facts about a catalog model that downstream verdicts rely on.
#[derive(Debug, Clone)]
pub struct ModelMeta {
    /// Normal form of the model expression, e.g. `product(al:p=2,q=3;circle)`.
    pub kind: String,
    /// First Betti number of the underlying torus.
    pub b1: usize,
    /// Intrinsic dimension.
    pub dim: usize,
    /// Complex dimension of the ambient space.
    pub complex_dim: usize,
    /// Grid resolution actually built.
    pub resolution: Vec<usize>,
    /// Shooting data when an Abresch-Langer factor is present.
    pub al_factors: Vec<AbreschLangerData>,
}

/// Converged shooting data for one Abresch-Langer factor.
#[derive(Debug, Clone)]
pub struct AbreschLangerData {
    pub p: u32,
    pub q: u32,
    pub kappa0: f64,
    pub half_period: f64,
    pub length: f64,
    pub closure_gap: f64,
    pub total_curvature: f64,
}

/// A catalog immersion together with its metadata.
pub struct Model {
    pub immersion: ImmersionField,
    pub meta: ModelMeta,
}

/// Circle of radius `sqrt 2` in `C`, uniform speed.
pub fn build_circle(res: usize) -> Result<Model, LabError> {
    let grid = ParamGrid::standard(&[res])?;
    let am = AmbientStructure::new(1);
    let r = 2f64.sqrt();
    let mut pos = Vec::with_capacity(2 * res);
    for i in 0..res {
        let t = grid.coord(i, 0);
        pos.push(r * t.cos());
        pos.push(r * t.sin());
    }
    Ok(Model {
        immersion: ImmersionField::at_origin(grid, am, pos)?,
        meta: ModelMeta {
            kind: "circle".into(),
            b1: 1,
            dim: 1,
            complex_dim: 1,
            resolution: vec![res],
            al_factors: vec![],
        },
    })
}

/// Clifford torus `T^n`: product of `n` circles of radius `sqrt 2`.
pub fn build_clifford(n: usize, res: &[usize]) -> Result<Model, LabError> {
    if n == 0 {
        return Err(LabError::Config("clifford torus needs n >= 1".into()));
    }
    if res.len() != n {
        return Err(LabError::Config(format!(
            "clifford:n={n} wants {n} resolutions, got {}",
            res.len()
        )));
    }
    let grid = ParamGrid::standard(res)?;
    let am = AmbientStructure::new(n);
    let r = 2f64.sqrt();
    let mut pos = Vec::with_capacity(grid.len() * 2 * n);
    for node in 0..grid.len() {
        for a in 0..n {
            let t = grid.coord(node, a);
            pos.push(r * t.cos());
            pos.push(r * t.sin());
        }
    }
    Ok(Model {
        immersion: ImmersionField::at_origin(grid, am, pos)?,
        meta: ModelMeta {
            kind: format!("clifford:n={n}"),
            b1: n,
            dim: n,
            complex_dim: n,
            resolution: res.to_vec(),
            al_factors: vec![],
        },
    })
}

// --- Abresch-Langer shooting ---------------------------------------------

#[derive(Clone, Copy, Debug)]
struct AlState {
    kappa: f64,
    tau: f64,
    phi: f64,
}

fn al_rhs(y: AlState) -> AlState {
    AlState {
        kappa: 0.5 * y.kappa * y.tau,
        tau: 1.0 - 2.0 * y.kappa * y.kappa,
        phi: y.kappa,
    }
}

fn al_axpy(y: AlState, h: f64, d: AlState) -> AlState {
    AlState {
        kappa: y.kappa + h * d.kappa,
        tau: y.tau + h * d.tau,
        phi: y.phi + h * d.phi,
    }
}

/// One Dormand-Prince 5(4) step; returns the 5th-order advance and an
/// embedded error estimate.
fn dp54_step(y: AlState, h: f64) -> (AlState, f64) {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];
    let mut ks = [al_rhs(y); 7];
    for s in 1..7 {
        let mut yi = y;
        for (j, kj) in ks.iter().enumerate().take(s) {
            let c = A[s - 1][j];
            if c != 0.0 {
                yi = al_axpy(yi, h * c, *kj);
            }
        }
        ks[s] = al_rhs(yi);
    }
    // stage 7 is evaluated at the 5th-order solution (FSAL layout)
    let mut y5 = y;
    for (j, kj) in ks.iter().enumerate().take(6) {
        let c = A[5][j];
        if c != 0.0 {
            y5 = al_axpy(y5, h * c, *kj);
        }
    }
    let mut err = [0.0f64; 3];
    for (j, kj) in ks.iter().enumerate() {
        err[0] += E[j] * kj.kappa;
        err[1] += E[j] * kj.tau;
        err[2] += E[j] * kj.phi;
    }
    let e = h.abs() * (err[0] * err[0] + err[1] * err[1] + err[2] * err[2]).sqrt();
    (y5, e)
}

const ODE_TOL: f64 = 1e-12;

/// Integrate from a curvature maximum until the next zero of `tau`
/// (the curvature minimum); returns `(half_period, state)`.
fn half_period(kappa0: f64) -> Result<(f64, AlState), LabError> {
    let mut y = AlState {
        kappa: kappa0,
        tau: 0.0,
        phi: 0.0,
    };
    let mut s = 0.0;
    let mut h = 1e-3;
    let mut gone_negative = false;
    for _ in 0..200_000 {
        let (ynew, err) = dp54_step(y, h);
        if err > ODE_TOL * h.max(1e-3) {
            h *= 0.5 * (ODE_TOL * h / err).powf(0.2).max(0.1);
            continue;
        }
        if ynew.tau < -1e-10 {
            gone_negative = true;
        }
        if gone_negative && ynew.tau >= 0.0 {
            // bracketed; bisect the step length on son of this step
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let (ymid, _) = dp54_step(y, mid);
                if ymid.tau >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-15 {
                    break;
                }
            }
            let (yend, _) = dp54_step(y, hi);
            return Ok((s + hi, yend));
        }
        y = ynew;
        s += h;
        if err > 0.0 {
            h = (h * (ODE_TOL * h / err).powf(0.2).clamp(0.5, 2.0)).min(0.05);
        } else {
            h = (h * 2.0).min(0.05);
        }
    }
    Err(LabError::NoConvergence(format!(
        "no tau-zero found from kappa0 = {kappa0}"
    )))
}

/// Solve `turn(kappa0) = pi p / q` for the initial curvature maximum.
fn solve_kappa0(p: u32, q: u32) -> Result<(f64, f64), LabError> {
    let target = PI * p as f64 / q as f64;
    let turn = |k0: f64| -> Result<f64, LabError> { Ok(half_period(k0)?.1.phi) };
    // turning decreases from pi/sqrt2 (circle limit) towards pi/2
    let mut lo = 1.0 / 2f64.sqrt() + 1e-6;
    let mut hi = 1.5;
    while turn(hi)? > target {
        lo = hi;
        hi *= 1.5;
        if hi > 50.0 {
            return Err(LabError::NoConvergence("kappa0 bracket expansion".into()));
        }
    }
    let (mut flo, mut fhi) = (turn(lo)? - target, turn(hi)? - target);
    if flo < 0.0 {
        return Err(LabError::NoConvergence("kappa0 bracket sign".into()));
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let fm = turn(mid)? - target;
        if fm.abs() < 1e-13 || hi - lo < 1e-15 {
            break;
        }
        if fm > 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
        // secant acceleration inside the bracket
        let sec = lo - flo * (hi - lo) / (fhi - flo);
        if sec > lo && sec < hi {
            let fs = turn(sec)? - target;
            if fs.abs() < 1e-13 {
                mid = sec;
                break;
            }
            if fs > 0.0 {
                lo = sec;
                flo = fs;
            } else {
                hi = sec;
                fhi = fs;
            }
        }
    }
    let s_half = half_period(mid)?.0;
    Ok((mid, s_half))
}

fn al_position(y: AlState) -> [f64; 2] {
    let (c, s) = (y.phi.cos(), y.phi.sin());
    // x = tau T - 2 kappa N with T = (c, s), N = (-s, c)
    [y.tau * c + 2.0 * y.kappa * s, y.tau * s - 2.0 * y.kappa * c]
}

/// Closed Abresch-Langer curve with rotation number `p/q`, resampled to
/// `res` nodes at uniform arclength. `(p, q) = (1, 1)` degenerates to the
/// circle (the fixed point `kappa = 1/sqrt2` of the shooting system).
pub fn build_abresch_langer(p: u32, q: u32, res: usize) -> Result<Model, LabError> {
    if p == 0 || q == 0 {
        return Err(LabError::InvalidWindow { p, q });
    }
    if p == 1 && q == 1 {
        let mut m = build_circle(res)?;
        m.meta.kind = "al:p=1,q=1".into();
        m.meta.al_factors = vec![AbreschLangerData {
            p,
            q,
            kappa0: 1.0 / 2f64.sqrt(),
            half_period: PI,
            length: TAU * 2f64.sqrt(),
            closure_gap: 0.0,
            total_curvature: TAU,
        }];
        return Ok(m);
    }
    let ratio = p as f64 / q as f64;
    if gcd(p, q) != 1 || ratio <= 0.5 || ratio >= 1.0 / 2f64.sqrt() {
        return Err(LabError::InvalidWindow { p, q });
    }

    let (kappa0, s_half) = solve_kappa0(p, q)?;
    let length = 2.0 * q as f64 * s_half;
    let step = length / res as f64;

    let mut states = Vec::with_capacity(res + 1);
    let mut y = AlState {
        kappa: kappa0,
        tau: 0.0,
        phi: 0.0,
    };
    states.push(y);
    // fixed substeps sized so the local truncation error stays near roundoff
    let nsub = 4.max((step / 0.002).ceil() as usize);
    for _ in 0..res {
        for _ in 0..nsub {
            let (ynew, _) = dp54_step(y, step / nsub as f64);
            y = ynew;
        }
        states.push(y);
    }
    let first = al_position(states[0]);
    let last = al_position(states[res]);
    let closure_gap = ((first[0] - last[0]).powi(2) + (first[1] - last[1]).powi(2)).sqrt();
    let total_curvature = states[res].phi;
    if closure_gap > 1e-7 {
        return Err(LabError::NoConvergence(format!(
            "closure gap {closure_gap:.3e} after shooting"
        )));
    }

    let grid = ParamGrid::new(&[res], &[TAU])?;
    let am = AmbientStructure::new(1);
    let mut pos = Vec::with_capacity(2 * res);
    for st in states.iter().take(res) {
        let xy = al_position(*st);
        pos.push(xy[0]);
        pos.push(xy[1]);
    }
    Ok(Model {
        immersion: ImmersionField::at_origin(grid, am, pos)?,
        meta: ModelMeta {
            kind: format!("al:p={p},q={q}"),
            b1: 1,
            dim: 1,
            complex_dim: 1,
            resolution: vec![res],
            al_factors: vec![AbreschLangerData {
                p,
                q,
                kappa0,
                half_period: s_half,
                length,
                closure_gap,
                total_curvature,
            }],
        },
    })
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Cartesian product of catalog models; grids concatenate, ambient factors
/// stack, Betti numbers add.
pub fn build_product(factors: Vec<Model>) -> Result<Model, LabError> {
    if factors.len() < 2 {
        return Err(LabError::Config("product wants at least two factors".into()));
    }
    let mut dims = Vec::new();
    let mut periods = Vec::new();
    let mut n = 0usize;
    let mut b1 = 0usize;
    let mut kinds = Vec::new();
    let mut al = Vec::new();
    for f in &factors {
        let g = f.immersion.grid();
        dims.extend_from_slice(g.dims());
        periods.extend_from_slice(g.periods());
        n += f.immersion.ambient().complex_dim();
        b1 += f.meta.b1;
        kinds.push(f.meta.kind.clone());
        al.extend(f.meta.al_factors.iter().cloned());
        if (f.immersion.extinction_time() - 1.0).abs() > 1e-14 {
            return Err(LabError::Config(
                "product factors must share extinction time 1".into(),
            ));
        }
    }
    let grid = ParamGrid::new(&dims, &periods)?;
    let am = AmbientStructure::new(n);
    let mut pos = vec![0.0; grid.len() * 2 * n];
    let mut axis0 = 0usize;
    let mut comp0 = 0usize;
    for f in &factors {
        let fg = f.immersion.grid();
        let fk = fg.axes();
        let fn_ = f.immersion.ambient().real_dim();
        for node in 0..grid.len() {
            let mut fnode = 0usize;
            for (fa, _) in (0..fk).enumerate() {
                let idx = grid.axis_index(node, axis0 + fa);
                fnode = fnode * fg.dims()[fa] + idx;
            }
            let src = f.immersion.position(fnode);
            for c in 0..fn_ {
                pos[node * 2 * n + comp0 + c] = src[c];
            }
        }
        axis0 += fk;
        comp0 += fn_;
    }
    Ok(Model {
        immersion: ImmersionField::at_origin(grid, am, pos)?,
        meta: ModelMeta {
            kind: format!("product({})", kinds.join(";")),
            b1,
            dim: dims.len(),
            complex_dim: n,
            resolution: dims,
            al_factors: al,
        },
    })
}

// --- model mini-language ---------------------------------------------------

/// Parsed model expression, not yet built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSpec {
    Circle,
    Clifford { n: usize },
    AbreschLanger { p: u32, q: u32 },
    Product(Vec<ModelSpec>),
}

impl ModelSpec {
    /// Parse `circle`, `clifford:n=2`, `al:p=2,q=3`,
    /// `product(al:p=2,q=3;circle)`.
    pub fn parse(s: &str) -> Result<Self, LabError> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("product(") {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| LabError::Config(format!("unbalanced parentheses in `{s}`")))?;
            let mut parts = Vec::new();
            let mut depth = 0usize;
            let mut start = 0usize;
            for (i, ch) in inner.char_indices() {
                match ch {
                    '(' => depth += 1,
                    ')' => {
                        depth = depth
                            .checked_sub(1)
                            .ok_or_else(|| LabError::Config(format!("unbalanced `)` in `{s}`")))?
                    }
                    ';' if depth == 0 => {
                        parts.push(&inner[start..i]);
                        start = i + 1;
                    }
                    _ => {}
                }
            }
            parts.push(&inner[start..]);
            if parts.len() < 2 {
                return Err(LabError::Config(
                    "product(...) wants at least two factors separated by `;`".into(),
                ));
            }
            return Ok(ModelSpec::Product(
                parts
                    .into_iter()
                    .map(ModelSpec::parse)
                    .collect::<Result<_, _>>()?,
            ));
        }
        if s == "circle" {
            return Ok(ModelSpec::Circle);
        }
        if let Some(args) = s.strip_prefix("clifford:") {
            let n = parse_kv(args, &["n"])?[0] as usize;
            if n == 0 {
                return Err(LabError::Config("clifford:n must be >= 1".into()));
            }
            return Ok(ModelSpec::Clifford { n });
        }
        if s == "clifford" {
            return Ok(ModelSpec::Clifford { n: 2 });
        }
        if let Some(args) = s.strip_prefix("al:") {
            let vals = parse_kv(args, &["p", "q"])?;
            return Ok(ModelSpec::AbreschLanger {
                p: vals[0] as u32,
                q: vals[1] as u32,
            });
        }
        Err(LabError::Config(format!("unknown model `{s}`")))
    }

    /// Number of grid axes of the built model.
    pub fn axes(&self) -> usize {
        match self {
            ModelSpec::Circle | ModelSpec::AbreschLanger { .. } => 1,
            ModelSpec::Clifford { n } => *n,
            ModelSpec::Product(fs) => fs.iter().map(|f| f.axes()).sum(),
        }
    }

    /// Default resolution when the model stands alone.
    pub fn default_resolution(&self) -> Vec<usize> {
        match self {
            ModelSpec::Circle => vec![256],
            ModelSpec::AbreschLanger { .. } => vec![2048],
            // per-axis spacing at most 2pi/64 keeps fourth-order eigenfield
            // residuals below 1e-6; beyond n = 3 the node count forces a
            // coarser default
            ModelSpec::Clifford { n } => vec![if *n <= 3 { 64 } else { 32 }; *n],
            ModelSpec::Product(fs) => fs.iter().flat_map(|f| f.compact_resolution()).collect(),
        }
    }

    /// Per-factor resolution used inside products (keeps product grids at a
    /// size the dense spectral path can still coarsen from sensibly).
    fn compact_resolution(&self) -> Vec<usize> {
        match self {
            ModelSpec::Circle => vec![64],
            ModelSpec::AbreschLanger { .. } => vec![1024],
            ModelSpec::Clifford { n } => vec![32; *n],
            ModelSpec::Product(fs) => fs.iter().flat_map(|f| f.compact_resolution()).collect(),
        }
    }

    /// Build at the given per-axis resolution (`None` picks defaults).
    pub fn build(&self, res: Option<&[usize]>) -> Result<Model, LabError> {
        let res_vec;
        let res = match res {
            Some(r) => {
                if r.len() == 1 && self.axes() > 1 {
                    res_vec = vec![r[0]; self.axes()];
                    &res_vec[..]
                } else if r.len() != self.axes() {
                    return Err(LabError::Config(format!(
                        "model `{}` wants {} resolutions, got {}",
                        self.normal_form(),
                        self.axes(),
                        r.len()
                    )));
                } else {
                    r
                }
            }
            None => {
                res_vec = self.default_resolution();
                &res_vec[..]
            }
        };
        match self {
            ModelSpec::Circle => build_circle(res[0]),
            ModelSpec::Clifford { n } => build_clifford(*n, res),
            ModelSpec::AbreschLanger { p, q } => build_abresch_langer(*p, *q, res[0]),
            ModelSpec::Product(fs) => {
                let mut factors = Vec::new();
                let mut at = 0usize;
                for f in fs {
                    let k = f.axes();
                    factors.push(f.build(Some(&res[at..at + k]))?);
                    at += k;
                }
                build_product(factors)
            }
        }
    }

    pub fn normal_form(&self) -> String {
        match self {
            ModelSpec::Circle => "circle".into(),
            ModelSpec::Clifford { n } => format!("clifford:n={n}"),
            ModelSpec::AbreschLanger { p, q } => format!("al:p={p},q={q}"),
            ModelSpec::Product(fs) => format!(
                "product({})",
                fs.iter()
                    .map(|f| f.normal_form())
                    .collect::<Vec<_>>()
                    .join(";")
            ),
        }
    }
}

fn parse_kv(args: &str, keys: &[&str]) -> Result<Vec<u64>, LabError> {
    let mut out = vec![None; keys.len()];
    for part in args.split(',') {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| LabError::Config(format!("expected key=value, got `{part}`")))?;
        let idx = keys
            .iter()
            .position(|key| *key == k.trim())
            .ok_or_else(|| LabError::Config(format!("unknown key `{k}`")))?;
        let val: u64 = v
            .trim()
            .parse()
            .map_err(|_| LabError::Config(format!("invalid integer `{v}`")))?;
        out[idx] = Some(val);
    }
    out.into_iter()
        .enumerate()
        .map(|(i, v)| v.ok_or_else(|| LabError::Config(format!("missing key `{}`", keys[i]))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_is_a_shrinker() {
        let m = build_circle(128).unwrap();
        assert!(m.immersion.shrinker_residual().unwrap() < 1e-6);
        assert_eq!(m.meta.b1, 1);
    }

    #[test]
    fn clifford_product_consistency() {
        // product of three circles coincides with clifford n=3 nodewise
        let c = || build_circle(12).unwrap();
        let prod = build_product(vec![c(), c(), c()]).unwrap();
        let cl = build_clifford(3, &[12, 12, 12]).unwrap();
        assert_eq!(prod.immersion.positions().len(), cl.immersion.positions().len());
        for (a, b) in prod
            .immersion
            .positions()
            .iter()
            .zip(cl.immersion.positions())
        {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(prod.meta.b1, 3);
    }

    #[test]
    fn window_is_enforced() {
        assert!(matches!(
            build_abresch_langer(1, 2, 64),
            Err(LabError::InvalidWindow { .. })
        ));
        assert!(matches!(
            build_abresch_langer(3, 4, 64),
            Err(LabError::InvalidWindow { .. })
        ));
        assert!(matches!(
            build_abresch_langer(2, 4, 64),
            Err(LabError::InvalidWindow { .. })
        ));
    }

    #[test]
    fn limiting_pair_reproduces_circle() {
        let m = build_abresch_langer(1, 1, 64).unwrap();
        let c = build_circle(64).unwrap();
        for (a, b) in m.immersion.positions().iter().zip(c.immersion.positions()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn al_2_3_closes_with_correct_turning() {
        let m = build_abresch_langer(2, 3, 512).unwrap();
        let d = &m.meta.al_factors[0];
        assert!(d.closure_gap < 1e-8, "closure gap {}", d.closure_gap);
        let rel = (d.total_curvature - 2.0 * TAU).abs() / (2.0 * TAU);
        assert!(rel < 1e-8, "total curvature off by {rel:.3e}");
        assert!(d.kappa0 > 1.0 / 2f64.sqrt() && d.kappa0 < 2.0);
        assert!(m.immersion.shrinker_residual().unwrap() < 1e-5);
    }

    #[test]
    fn al_conserved_quantity_is_flat() {
        // kappa e^{-|x|^2/4} is a first integral of the shooting system
        let m = build_abresch_langer(2, 3, 1024).unwrap();
        let imm = &m.immersion;
        let d = &m.meta.al_factors[0];
        let want = d.kappa0 * (-(d.kappa0 * d.kappa0)).exp();
        // reconstruct kappa from the discrete geometry: |H|
        let geo = imm.geometry().unwrap();
        for node in (0..imm.node_count()).step_by(17) {
            let h = geo.mean_curvature_at(node);
            let kappa = (h[0] * h[0] + h[1] * h[1]).sqrt();
            let x = imm.position(node);
            let got = kappa * (-(x[0] * x[0] + x[1] * x[1]) / 4.0).exp();
            assert!(
                (got - want).abs() < 1e-6,
                "node {node}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn parser_round_trips() {
        for s in [
            "circle",
            "clifford:n=2",
            "al:p=2,q=3",
            "product(al:p=2,q=3;circle)",
            "product(circle;circle;circle)",
        ] {
            let spec = ModelSpec::parse(s).unwrap();
            assert_eq!(spec.normal_form(), s);
        }
        assert!(ModelSpec::parse("torus").is_err());
        assert!(ModelSpec::parse("al:p=2").is_err());
        assert!(ModelSpec::parse("product(circle)").is_err());
    }

    #[test]
    fn product_matches_factor_positions() {
        let spec = ModelSpec::parse("product(al:p=2,q=3;circle)").unwrap();
        let m = spec.build(Some(&[64, 16])).unwrap();
        assert_eq!(m.meta.b1, 2);
        assert_eq!(m.meta.complex_dim, 2);
        let al = build_abresch_langer(2, 3, 64).unwrap();
        let g = m.immersion.grid();
        for node in [0usize, 5 * 16 + 3, 63 * 16 + 15] {
            let i = g.axis_index(node, 0);
            let j = g.axis_index(node, 1);
            let x = m.immersion.position(node);
            let xa = al.immersion.position(i);
            assert!((x[0] - xa[0]).abs() < 1e-14 && (x[1] - xa[1]).abs() < 1e-14);
            let t = std::f64::consts::TAU * j as f64 / 16.0;
            assert!((x[2] - 2f64.sqrt() * t.cos()).abs() < 1e-12);
        }
    }
}
