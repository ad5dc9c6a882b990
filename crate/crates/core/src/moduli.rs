//! Brute-force estimation of openness, Lipschitz-like and regularity moduli.
//!
//! Every estimator sweeps the configured neighborhoods once, recording for
//! each quantified tuple the quantity the defining inequality compares, and
//! then bisects the candidate constant against that table. The predicate is
//! monotone in the constant, so the bracket is sound: one end passes the
//! definitional check and the other is refuted by the stored witness.
//!
//! For openness kinds feasible constants lie below the exact bound, so `lo`
//! is feasible and `hi` is refuted. For Lipschitz and regularity kinds the
//! roles swap: `hi` is feasible and `lo` is refuted.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{ball, distance_point_set, BallKind, ExtReal, GridSpace, Point, PointSet, SpaceRef, BOUNDARY_SLACK};
use crate::setvalued::{MultiMap, ParamMultiMap};

pub const DEFAULT_RESOLUTION: f64 = 1e-6;
pub const MAX_BISECTIONS: usize = 40;
/// Candidate constants are doubled up to this value before the bound is
/// reported as unbounded.
pub const DOUBLING_CAP: f64 = 1_099_511_627_776.0; // 2^40

fn default_resolution() -> f64 {
    DEFAULT_RESOLUTION
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModulusKind {
    #[serde(rename = "lop")]
    Lop,
    #[serde(rename = "lip")]
    Lip,
    #[serde(rename = "reg")]
    Reg,
    #[serde(rename = "plop")]
    Plop,
    #[serde(rename = "psdclm")]
    Psdclm,
    #[serde(rename = "hemreg")]
    Hemreg,
    #[serde(rename = "lop_x_uniform")]
    LopX,
    #[serde(rename = "lop_p_uniform")]
    LopP,
    #[serde(rename = "lip_p_uniform")]
    LipP,
    #[serde(rename = "lip_x_uniform")]
    LipX,
    #[serde(rename = "reg_x_uniform")]
    RegX,
}

impl ModulusKind {
    /// Openness kinds have feasible constants below the exact bound.
    pub fn is_openness(self) -> bool {
        matches!(self, ModulusKind::Lop | ModulusKind::Plop | ModulusKind::LopX | ModulusKind::LopP)
    }

    pub fn is_partial(self) -> bool {
        matches!(self, ModulusKind::LopX | ModulusKind::LopP | ModulusKind::LipP | ModulusKind::LipX | ModulusKind::RegX)
    }

    fn base(self) -> ModulusKind {
        match self {
            ModulusKind::LopX | ModulusKind::LopP => ModulusKind::Lop,
            ModulusKind::LipX | ModulusKind::LipP => ModulusKind::Lip,
            ModulusKind::RegX => ModulusKind::Reg,
            k => k,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulusKind::Lop => "lop",
            ModulusKind::Lip => "lip",
            ModulusKind::Reg => "reg",
            ModulusKind::Plop => "plop",
            ModulusKind::Psdclm => "psdclm",
            ModulusKind::Hemreg => "hemreg",
            ModulusKind::LopX => "lop_x_uniform",
            ModulusKind::LopP => "lop_p_uniform",
            ModulusKind::LipP => "lip_p_uniform",
            ModulusKind::LipX => "lip_x_uniform",
            ModulusKind::RegX => "reg_x_uniform",
        }
    }
}

/// Neighborhoods U = B(x̄, radius_u), V = B(ȳ, radius_v), W = B(p̄, radius_w)
/// (all open) and the finite set of ρ values swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodConfig {
    pub radius_u: f64,
    pub radius_v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_w: Option<f64>,
    pub epsilon: f64,
    pub rho_grid: Vec<f64>,
    #[serde(skip, default = "default_resolution")]
    pub resolution: f64,
}

impl NeighborhoodConfig {
    pub fn new(radius_u: f64, radius_v: f64, epsilon: f64, rho_grid: Vec<f64>) -> Result<NeighborhoodConfig> {
        let cfg = NeighborhoodConfig { radius_u, radius_v, radius_w: None, epsilon, rho_grid, resolution: DEFAULT_RESOLUTION };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Eight ρ values ε, ε/2, …, ε/128.
    pub fn geometric(radius_u: f64, radius_v: f64, epsilon: f64) -> Result<NeighborhoodConfig> {
        let rho = (0..8).rev().map(|k| epsilon / f64::powi(2.0, k)).collect();
        NeighborhoodConfig::new(radius_u, radius_v, epsilon, rho)
    }

    /// Radii a quarter of each grid's diameter, ε half of `radius_u`.
    pub fn default_for(source: &GridSpace, target: &GridSpace) -> Result<NeighborhoodConfig> {
        let ru = source.diameter() / 4.0;
        let rv = target.diameter() / 4.0;
        if !(ru > 0.0 && rv > 0.0) {
            return Err(Error::InvalidArgument("default neighborhoods need grids with more than one point".into()));
        }
        NeighborhoodConfig::geometric(ru, rv, ru / 2.0)
    }

    pub fn with_radius_w(mut self, r: f64) -> Result<NeighborhoodConfig> {
        self.radius_w = Some(r);
        self.validate()?;
        Ok(self)
    }

    pub fn with_resolution(mut self, res: f64) -> Result<NeighborhoodConfig> {
        self.resolution = res;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{what} must be a positive real, got {v}")))
            }
        };
        pos(self.radius_u, "radius_u")?;
        pos(self.radius_v, "radius_v")?;
        if let Some(w) = self.radius_w {
            pos(w, "radius_w")?;
        }
        pos(self.epsilon, "epsilon")?;
        pos(self.resolution, "resolution")?;
        if self.rho_grid.is_empty() {
            return Err(Error::InvalidArgument("rho_grid is empty".into()));
        }
        for r in &self.rho_grid {
            pos(*r, "rho")?;
        }
        if self.rho_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("rho_grid must be strictly increasing".into()));
        }
        if *self.rho_grid.last().unwrap() > self.epsilon {
            return Err(Error::InvalidArgument("rho_grid exceeds epsilon".into()));
        }
        Ok(())
    }

    pub fn radius_w(&self) -> f64 {
        self.radius_w.unwrap_or(self.radius_u)
    }

    /// Config for the inverse map: U and V exchanged.
    pub fn mirrored(&self) -> NeighborhoodConfig {
        NeighborhoodConfig { radius_u: self.radius_v, radius_v: self.radius_u, ..self.clone() }
    }

    fn swapped_uw(&self) -> NeighborhoodConfig {
        NeighborhoodConfig { radius_u: self.radius_w(), radius_w: Some(self.radius_u), ..self.clone() }
    }
}

/// A tuple refuting a constant.
///
/// Openness: `violating` lies in B(y, ρL) but outside F(B(x, ρ)), with
/// `lhs` = ‖y − violating‖ < `rhs` = ρL. Lipschitz/regularity: `lhs` > `rhs`
/// where the sides are the two sides of the defining inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Point,
    pub y: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub other: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violating: Option<Point>,
    pub constant: f64,
    pub lhs: ExtReal,
    pub rhs: ExtReal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulusReport {
    pub kind: ModulusKind,
    pub point: Vec<Point>,
    pub config: NeighborhoodConfig,
    pub bracket: (ExtReal, ExtReal),
    pub witness: Option<Witness>,
    pub resolution: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub caveats: Vec<String>,
}

impl ModulusReport {
    pub fn lo(&self) -> ExtReal {
        self.bracket.0
    }

    pub fn hi(&self) -> ExtReal {
        self.bracket.1
    }

    /// The end of the bracket that passes the definitional check.
    pub fn feasible_end(&self) -> ExtReal {
        if self.kind.is_openness() {
            self.bracket.0
        } else {
            self.bracket.1
        }
    }

    pub fn width(&self) -> f64 {
        match (self.bracket.0, self.bracket.1) {
            (ExtReal::Finite(a), ExtReal::Finite(b)) => b - a,
            _ => f64::INFINITY,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        ExtReal::Finite(v) >= self.bracket.0 && ExtReal::Finite(v) <= self.bracket.1
    }
}

// ---------------------------------------------------------------------------
// Requirement tables

/// One quantified tuple. Openness tuples are violated at L when
/// `value < scale·L − slack`; the others when `value > scale·L + slack`.
#[derive(Debug, Clone)]
struct Req {
    value: ExtReal,
    scale: f64,
    w: Witness,
}

impl Req {
    fn violated(&self, openness: bool, l: f64) -> bool {
        match (openness, self.value) {
            (true, ExtReal::Finite(v)) => BallKind::Open.contains(v, self.scale * l),
            (true, ExtReal::Infinite) => false,
            (false, ExtReal::Finite(v)) => v > self.scale * l + BOUNDARY_SLACK,
            (false, ExtReal::Infinite) => true,
        }
    }

    fn witness(&self, l: f64) -> Witness {
        Witness { constant: l, lhs: self.value, rhs: ExtReal::Finite(self.scale * l), ..self.w.clone() }
    }
}

fn first_violation(reqs: &[Req], openness: bool, l: f64) -> Option<&Req> {
    reqs.iter().find(|r| r.violated(openness, l))
}

fn bisect(reqs: &[Req], openness: bool, res: f64) -> ((ExtReal, ExtReal), Option<Witness>) {
    let feasible = |l: f64| first_violation(reqs, openness, l).is_none();
    let (mut lo, mut hi);
    if openness {
        // L = 0 is always feasible: the open ball of radius 0 is empty.
        lo = 0.0;
        hi = 1.0;
        while feasible(hi) {
            if hi >= DOUBLING_CAP {
                return ((ExtReal::Finite(hi), ExtReal::Infinite), None);
            }
            lo = hi;
            hi *= 2.0;
        }
    } else {
        if feasible(0.0) {
            return ((ExtReal::ZERO, ExtReal::ZERO), None);
        }
        lo = 0.0;
        hi = 1.0;
        while !feasible(hi) {
            if hi >= DOUBLING_CAP {
                let w = first_violation(reqs, openness, hi).map(|r| r.witness(hi));
                return ((ExtReal::Finite(hi), ExtReal::Infinite), w);
            }
            lo = hi;
            hi *= 2.0;
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= res {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match (feasible(mid), openness) {
            (true, true) | (false, false) => lo = mid,
            (false, true) | (true, false) => hi = mid,
        }
    }
    let refuted = if openness { hi } else { lo };
    let w = first_violation(reqs, openness, refuted).map(|r| r.witness(refuted));
    ((ExtReal::Finite(lo), ExtReal::Finite(hi)), w)
}

fn mask_of(space: &SpaceRef, idx: &[usize]) -> Vec<bool> {
    let mut m = vec![false; space.len()];
    for &i in idx {
        m[i] = true;
    }
    m
}

fn base_witness(f: &MultiMap, x: usize, y: usize) -> Witness {
    Witness {
        x: f.source().point(x).to_vec(),
        y: f.target().point(y).to_vec(),
        other: None,
        param: None,
        rho: None,
        violating: None,
        constant: 0.0,
        lhs: ExtReal::ZERO,
        rhs: ExtReal::ZERO,
    }
}

fn dist_to_row(space: &GridSpace, from: &[f64], row: &[usize]) -> ExtReal {
    row.iter().fold(ExtReal::Infinite, |acc, &j| acc.min(ExtReal::Finite(space.dist(from, space.point(j)))))
}

/// Openness tuples: every (x, y) ∈ Gr F with x ∈ U, y ∈ V and every ρ.
fn lop_reqs(f: &MultiMap, u: &[usize], v_mask: &[bool], rho: &[f64]) -> Vec<Req> {
    let (xs, ys) = (f.source(), f.target());
    u.par_iter()
        .flat_map_iter(|&x| {
            let mut out = Vec::new();
            for &r in rho {
                let src = xs.ball_indices(xs.point(x), r, BallKind::Open);
                let covered = f.image_mask(src);
                for &y in f.row(x).iter().filter(|&&y| v_mask[y]) {
                    let yp = ys.point(y);
                    let mut best: Option<(f64, usize)> = None;
                    for t in (0..ys.len()).filter(|&t| !covered[t]) {
                        let d = ys.dist(yp, ys.point(t));
                        if best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, t));
                        }
                    }
                    if let Some((d, t)) = best {
                        let mut w = base_witness(f, x, y);
                        w.rho = Some(r);
                        w.violating = Some(ys.point(t).to_vec());
                        out.push(Req { value: ExtReal::Finite(d), scale: r, w });
                    }
                }
            }
            out
        })
        .collect()
}

/// Lipschitz tuples: x, u ∈ U and y ∈ F(x) ∩ V.
fn lip_reqs(f: &MultiMap, u: &[usize], v_mask: &[bool]) -> Vec<Req> {
    let (xs, ys) = (f.source(), f.target());
    u.par_iter()
        .flat_map_iter(|&x| {
            let mut out = Vec::new();
            for &y in f.row(x).iter().filter(|&&y| v_mask[y]) {
                for &other in u {
                    let d = dist_to_row(ys, ys.point(y), f.row(other));
                    if d <= ExtReal::Finite(BOUNDARY_SLACK) {
                        continue;
                    }
                    let mut w = base_witness(f, x, y);
                    w.other = Some(xs.point(other).to_vec());
                    out.push(Req { value: d, scale: xs.dist_idx(x, other), w });
                }
            }
            out
        })
        .collect()
}

/// Regularity tuples: all (x, y) ∈ U × V with d(y, F(x)) finite.
fn reg_reqs(f: &MultiMap, u: &[usize], v: &[usize]) -> Vec<Req> {
    let (xs, ys) = (f.source(), f.target());
    u.par_iter()
        .flat_map_iter(|&x| {
            let mut out = Vec::new();
            for &y in v {
                let resid = dist_to_row(ys, ys.point(y), f.row(x));
                let Some(resid) = resid.finite() else { continue };
                let gap = dist_to_row(xs, xs.point(x), f.col(y));
                if gap <= ExtReal::Finite(BOUNDARY_SLACK) {
                    continue;
                }
                out.push(Req { value: gap, scale: resid, w: base_witness(f, x, y) });
            }
            out
        })
        .collect()
}

fn psdclm_reqs(f: &MultiMap, xbar: usize, ybar: usize, u: &[usize]) -> Vec<Req> {
    let (xs, ys) = (f.source(), f.target());
    u.iter()
        .filter_map(|&x| {
            let d = dist_to_row(ys, ys.point(ybar), f.row(x));
            (d > ExtReal::Finite(BOUNDARY_SLACK)).then(|| Req { value: d, scale: xs.dist_idx(x, xbar), w: base_witness(f, x, ybar) })
        })
        .collect()
}

fn hemreg_reqs(f: &MultiMap, xbar: usize, ybar: usize, v: &[usize]) -> Vec<Req> {
    let (xs, ys) = (f.source(), f.target());
    v.iter()
        .filter_map(|&y| {
            let d = dist_to_row(xs, xs.point(xbar), f.col(y));
            (d > ExtReal::Finite(BOUNDARY_SLACK)).then(|| Req { value: d, scale: ys.dist_idx(y, ybar), w: base_witness(f, xbar, y) })
        })
        .collect()
}

fn clip_caveat(space: &GridSpace, center: &[f64], r: f64, what: &str) -> Option<String> {
    let n = space.dim();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for p in space.points() {
        for k in 0..n {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let clips = (0..n).any(|k| center[k] - r < lo[k] - BOUNDARY_SLACK || center[k] + r > hi[k] + BOUNDARY_SLACK);
    clips.then(|| format!("{what} ball of radius {r} around {center:?} extends past the hull of grid `{}`", space.label()))
}

struct Refs {
    x: usize,
    y: usize,
    u: Vec<usize>,
    v: Vec<usize>,
}

fn refs(f: &MultiMap, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Result<Refs> {
    cfg.validate()?;
    let x = f.source().require(xbar)?;
    let y = f.target().require(ybar)?;
    if !f.contains_pair(x, y) {
        return Err(Error::Precondition(format!("reference pair ({xbar:?}, {ybar:?}) is not in the graph")));
    }
    Ok(Refs {
        x,
        y,
        u: f.source().ball_indices(xbar, cfg.radius_u, BallKind::Open),
        v: f.target().ball_indices(ybar, cfg.radius_v, BallKind::Open),
    })
}

fn reqs_for(f: &MultiMap, kind: ModulusKind, r: &Refs, cfg: &NeighborhoodConfig) -> Vec<Req> {
    match kind {
        ModulusKind::Lop => lop_reqs(f, &r.u, &mask_of(f.target(), &r.v), &cfg.rho_grid),
        ModulusKind::Lip => lip_reqs(f, &r.u, &mask_of(f.target(), &r.v)),
        ModulusKind::Reg => reg_reqs(f, &r.u, &r.v),
        ModulusKind::Plop => lop_reqs(f, &[r.x], &mask_of(f.target(), &[r.y]), &cfg.rho_grid),
        ModulusKind::Psdclm => psdclm_reqs(f, r.x, r.y, &r.u),
        ModulusKind::Hemreg => hemreg_reqs(f, r.x, r.y, &r.v),
        _ => unreachable!("partial kinds are swept per parameter slice"),
    }
}

fn caveats(kind: ModulusKind, sx: &GridSpace, sy: &GridSpace, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Vec<String> {
    let rho_max = *cfg.rho_grid.last().unwrap();
    let mut out = Vec::new();
    let src_r = match kind.base() {
        ModulusKind::Lop => cfg.radius_u + rho_max,
        ModulusKind::Plop => rho_max,
        _ => cfg.radius_u,
    };
    out.extend(clip_caveat(sx, xbar, src_r, "source"));
    if kind != ModulusKind::Plop {
        out.extend(clip_caveat(sy, ybar, cfg.radius_v, "target"));
    }
    out
}

fn estimate(f: &MultiMap, kind: ModulusKind, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Result<ModulusReport> {
    let r = refs(f, xbar, ybar, cfg)?;
    let reqs = reqs_for(f, kind, &r, cfg);
    let (bracket, witness) = bisect(&reqs, kind.is_openness(), cfg.resolution);
    Ok(ModulusReport {
        kind,
        point: vec![xbar.to_vec(), ybar.to_vec()],
        config: cfg.clone(),
        bracket,
        witness,
        resolution: cfg.resolution,
        caveats: caveats(kind, f.source(), f.target(), xbar, ybar, cfg),
    })
}

/// Bracket for the largest L with B(y, ρL) ⊆ F(B(x, ρ)) for all
/// (x, y) ∈ Gr F ∩ (U × V) and all ρ in the grid.
pub fn estimate_lop_around(f: &MultiMap, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Result<ModulusReport> {
    estimate(f, ModulusKind::Lop, xbar, ybar, cfg)
}

/// Bracket for the smallest L with F(x) ∩ V ⊆ F(u) + L‖x − u‖ 𝔻 on U.
pub fn estimate_lip_around(f: &MultiMap, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Result<ModulusReport> {
    estimate(f, ModulusKind::Lip, xbar, ybar, cfg)
}

/// Bracket for the smallest L with d(x, F⁻¹(y)) ≤ L·d(y, F(x)) on U × V.
pub fn estimate_reg_around(f: &MultiMap, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Result<ModulusReport> {
    estimate(f, ModulusKind::Reg, xbar, ybar, cfg)
}

/// Openness at the reference pair only: B(ȳ, ρL) ⊆ F(B(x̄, ρ)).
pub fn estimate_plop_at(f: &MultiMap, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Result<ModulusReport> {
    estimate(f, ModulusKind::Plop, xbar, ybar, cfg)
}

/// Pseudo-calmness: d(ȳ, F(x)) ≤ L‖x − x̄‖ for x ∈ U.
pub fn estimate_psdclm_at(f: &MultiMap, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Result<ModulusReport> {
    estimate(f, ModulusKind::Psdclm, xbar, ybar, cfg)
}

/// Hemiregularity: d(x̄, F⁻¹(y)) ≤ L‖y − ȳ‖ for y ∈ V.
pub fn estimate_hemreg_at(f: &MultiMap, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Result<ModulusReport> {
    estimate(f, ModulusKind::Hemreg, xbar, ybar, cfg)
}

fn partial_refs(f: &ParamMultiMap, xbar: &[f64], pbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    cfg.validate()?;
    let (x, p, y) = (f.source().require(xbar)?, f.params().require(pbar)?, f.target().require(ybar)?);
    if !f.contains_triple(x, p, y) {
        return Err(Error::Precondition(format!("reference triple ({xbar:?}, {pbar:?}, {ybar:?}) is not in the graph")));
    }
    Ok((
        f.params().ball_indices(pbar, cfg.radius_w(), BallKind::Open),
        f.source().ball_indices(xbar, cfg.radius_u, BallKind::Open),
    ))
}

/// Bracket for a modulus of F(·, p) holding uniformly for p ∈ W
/// (`LopX`, `LipX`, `RegX`), or of F(x, ·) uniformly for x ∈ U
/// (`LopP`, `LipP`).
pub fn estimate_partial(
    f: &ParamMultiMap,
    which: ModulusKind,
    xbar: &[f64],
    pbar: &[f64],
    ybar: &[f64],
    cfg: &NeighborhoodConfig,
) -> Result<ModulusReport> {
    let (g, gx, gp, gcfg, swapped) = match which {
        ModulusKind::LopX | ModulusKind::LipX | ModulusKind::RegX => (f.clone(), xbar, pbar, cfg.clone(), false),
        ModulusKind::LopP | ModulusKind::LipP => (f.swap_inputs(), pbar, xbar, cfg.swapped_uw(), true),
        k => return Err(Error::InvalidArgument(format!("`{}` is not a partial modulus", k.name()))),
    };
    let (w, u) = partial_refs(&g, gx, gp, ybar, &gcfg)?;
    let v = g.target().ball_indices(ybar, gcfg.radius_v, BallKind::Open);
    let base = which.base();
    let reqs: Vec<Req> = w
        .iter()
        .flat_map(|&p| {
            let slice = g.slice_idx(p);
            let r = Refs { x: 0, y: 0, u: u.clone(), v: v.clone() };
            let mut reqs = reqs_for(&slice, base, &r, &gcfg);
            for q in &mut reqs {
                let pp = g.params().point(p).to_vec();
                if swapped {
                    // `other`, when present, is then a second parameter value.
                    q.w.param = Some(std::mem::replace(&mut q.w.x, pp));
                } else {
                    q.w.param = Some(pp);
                }
            }
            reqs
        })
        .collect();
    let (bracket, witness) = bisect(&reqs, which.is_openness(), cfg.resolution);
    let mut cav = caveats(base, f.source(), f.target(), xbar, ybar, cfg);
    cav.extend(clip_caveat(f.params(), pbar, cfg.radius_w(), "parameter"));
    Ok(ModulusReport {
        kind: which,
        point: vec![xbar.to_vec(), pbar.to_vec(), ybar.to_vec()],
        config: cfg.clone(),
        bracket,
        witness,
        resolution: cfg.resolution,
        caveats: cav,
    })
}

// ---------------------------------------------------------------------------
// Direct definitional checks at a given constant

fn lop_holds(f: &MultiMap, u: &PointSet, v: &PointSet, rho: &[f64], l: f64) -> Result<Option<Witness>> {
    for x in u.points() {
        for y in f.image(x)?.points() {
            if !v.contains(y) {
                continue;
            }
            for &r in rho {
                let covered = f.image_of_set(&ball(f.source(), x, r, BallKind::Open)?)?;
                if l * r <= 0.0 {
                    continue;
                }
                let want = ball(f.target(), y, l * r, BallKind::Open)?;
                let missing = want.points().find(|t| !covered.contains(t)).map(<[f64]>::to_vec);
                if let Some(t) = missing {
                    return Ok(Some(Witness {
                        x: x.to_vec(),
                        y: y.to_vec(),
                        other: None,
                        param: None,
                        rho: Some(r),
                        lhs: ExtReal::Finite(f.target().dist(y, &t)),
                        violating: Some(t),
                        constant: l,
                        rhs: ExtReal::Finite(l * r),
                    }));
                }
            }
        }
    }
    Ok(None)
}

fn lip_holds(f: &MultiMap, u: &PointSet, v: &PointSet, l: f64) -> Result<Option<Witness>> {
    for x in u.points() {
        for y in f.image(x)?.points() {
            if !v.contains(y) {
                continue;
            }
            for o in u.points() {
                let lhs = distance_point_set(y, &f.image(o)?)?;
                let rhs = l * f.source().dist(x, o);
                if lhs > ExtReal::Finite(rhs + BOUNDARY_SLACK) {
                    return Ok(Some(Witness {
                        x: x.to_vec(),
                        y: y.to_vec(),
                        other: Some(o.to_vec()),
                        param: None,
                        rho: None,
                        violating: None,
                        constant: l,
                        lhs,
                        rhs: ExtReal::Finite(rhs),
                    }));
                }
            }
        }
    }
    Ok(None)
}

fn reg_holds(f: &MultiMap, u: &PointSet, v: &PointSet, l: f64) -> Result<Option<Witness>> {
    let inv = f.inverse();
    for x in u.points() {
        let fx = f.image(x)?;
        for y in v.points() {
            let ExtReal::Finite(resid) = distance_point_set(y, &fx)? else { continue };
            let lhs = distance_point_set(x, &inv.image(y)?)?;
            if lhs > ExtReal::Finite(l * resid + BOUNDARY_SLACK) {
                return Ok(Some(Witness {
                    x: x.to_vec(),
                    y: y.to_vec(),
                    other: None,
                    param: None,
                    rho: None,
                    violating: None,
                    constant: l,
                    lhs,
                    rhs: ExtReal::Finite(l * resid),
                }));
            }
        }
    }
    Ok(None)
}

#[allow(clippy::too_many_arguments)]
fn check_on(f: &MultiMap, kind: ModulusKind, xbar: &[f64], ybar: &[f64], u: &PointSet, v: &PointSet, rho: &[f64], l: f64) -> Result<Option<Witness>> {
    let at_x = PointSet::from_points(f.source(), &[xbar.to_vec()])?;
    let at_y = PointSet::from_points(f.target(), &[ybar.to_vec()])?;
    match kind {
        ModulusKind::Lop => lop_holds(f, u, v, rho, l),
        ModulusKind::Lip => lip_holds(f, u, v, l),
        ModulusKind::Reg => reg_holds(f, u, v, l),
        ModulusKind::Plop => lop_holds(f, &at_x, &at_y, rho, l),
        // d(ȳ, F(x)) ≤ L‖x − x̄‖ is the Lipschitz inequality with y = ȳ, u = x̄ fixed.
        ModulusKind::Psdclm => {
            for x in u.points() {
                let lhs = distance_point_set(ybar, &f.image(x)?)?;
                let rhs = l * f.source().dist(x, xbar);
                if lhs > ExtReal::Finite(rhs + BOUNDARY_SLACK) {
                    return Ok(Some(Witness {
                        x: x.to_vec(),
                        y: ybar.to_vec(),
                        other: None,
                        param: None,
                        rho: None,
                        violating: None,
                        constant: l,
                        lhs,
                        rhs: ExtReal::Finite(rhs),
                    }));
                }
            }
            Ok(None)
        }
        ModulusKind::Hemreg => {
            let inv = f.inverse();
            for y in v.points() {
                let lhs = distance_point_set(xbar, &inv.image(y)?)?;
                let rhs = l * f.target().dist(y, ybar);
                if lhs > ExtReal::Finite(rhs + BOUNDARY_SLACK) {
                    return Ok(Some(Witness {
                        x: xbar.to_vec(),
                        y: y.to_vec(),
                        other: None,
                        param: None,
                        rho: None,
                        violating: None,
                        constant: l,
                        lhs,
                        rhs: ExtReal::Finite(rhs),
                    }));
                }
            }
            Ok(None)
        }
        _ => unreachable!(),
    }
}

/// Checks the definition of `kind` for F at the given constant; returns a
/// refuting tuple if the constant fails.
pub fn violation(f: &MultiMap, kind: ModulusKind, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig, constant: f64) -> Result<Option<Witness>> {
    if kind.is_partial() {
        return Err(Error::InvalidArgument(format!("`{}` needs a parametric map", kind.name())));
    }
    refs(f, xbar, ybar, cfg)?;
    let u = ball(f.source(), xbar, cfg.radius_u, BallKind::Open)?;
    let v = ball(f.target(), ybar, cfg.radius_v, BallKind::Open)?;
    check_on(f, kind, xbar, ybar, &u, &v, &cfg.rho_grid, constant)
}

/// Parametric counterpart of [`violation`].
pub fn partial_violation(
    f: &ParamMultiMap,
    kind: ModulusKind,
    xbar: &[f64],
    pbar: &[f64],
    ybar: &[f64],
    cfg: &NeighborhoodConfig,
    constant: f64,
) -> Result<Option<Witness>> {
    let (g, gx, gp, gcfg, swapped) = match kind {
        ModulusKind::LopX | ModulusKind::LipX | ModulusKind::RegX => (f.clone(), xbar, pbar, cfg.clone(), false),
        ModulusKind::LopP | ModulusKind::LipP => (f.swap_inputs(), pbar, xbar, cfg.swapped_uw(), true),
        k => return Err(Error::InvalidArgument(format!("`{}` is not a partial modulus", k.name()))),
    };
    partial_refs(&g, gx, gp, ybar, &gcfg)?;
    let w = ball(g.params(), gp, gcfg.radius_w(), BallKind::Open)?;
    let u = ball(g.source(), gx, gcfg.radius_u, BallKind::Open)?;
    let v = ball(g.target(), ybar, gcfg.radius_v, BallKind::Open)?;
    for p in w.points() {
        let slice = g.slice_param(p)?;
        if let Some(mut wit) = check_on(&slice, kind.base(), gx, ybar, &u, &v, &gcfg.rho_grid, constant)? {
            if swapped {
                wit.param = Some(std::mem::replace(&mut wit.x, p.to_vec()));
            } else {
                wit.param = Some(p.to_vec());
            }
            return Ok(Some(wit));
        }
    }
    Ok(None)
}

// ---------------------------------------------------------------------------
// Equivalences

fn to_reg_scale(r: &ModulusReport) -> (ExtReal, ExtReal) {
    let inv = |v: ExtReal| match v {
        ExtReal::Infinite => ExtReal::ZERO,
        ExtReal::Finite(a) if a <= 0.0 => ExtReal::Infinite,
        ExtReal::Finite(a) => ExtReal::Finite(1.0 / a),
    };
    if r.kind.is_openness() {
        (inv(r.bracket.1), inv(r.bracket.0))
    } else {
        r.bracket
    }
}

fn overlap(a: (ExtReal, ExtReal), b: (ExtReal, ExtReal), tol: f64) -> bool {
    let lo = a.0.max(b.0);
    let hi = a.1.min(b.1);
    match (lo, hi) {
        (_, ExtReal::Infinite) => true,
        (ExtReal::Infinite, ExtReal::Finite(_)) => false,
        (ExtReal::Finite(l), ExtReal::Finite(h)) => l <= h + tol,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub variant: String,
    /// lop F or plop F.
    pub openness: ModulusReport,
    /// lip F⁻¹ or psdclm F⁻¹, taken at the mirrored pair and config.
    pub inverse: ModulusReport,
    /// reg F or hemreg F.
    pub regularity: ModulusReport,
    pub tolerance: f64,
    pub agree: bool,
}

fn equivalence(f: &MultiMap, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig, at: bool) -> Result<EquivalenceReport> {
    let inv = f.inverse();
    let mcfg = cfg.mirrored();
    let (open, lipinv, reg) = if at {
        (
            estimate_plop_at(f, xbar, ybar, cfg)?,
            estimate_psdclm_at(&inv, ybar, xbar, &mcfg)?,
            estimate_hemreg_at(f, xbar, ybar, cfg)?,
        )
    } else {
        (
            estimate_lop_around(f, xbar, ybar, cfg)?,
            estimate_lip_around(&inv, ybar, xbar, &mcfg)?,
            estimate_reg_around(f, xbar, ybar, cfg)?,
        )
    };
    let tol = 2.0 * cfg.resolution;
    let s = [to_reg_scale(&open), to_reg_scale(&lipinv), to_reg_scale(&reg)];
    let agree = overlap(s[0], s[1], tol) && overlap(s[0], s[2], tol) && overlap(s[1], s[2], tol);
    Ok(EquivalenceReport {
        variant: if at { "at" } else { "around" }.into(),
        openness: open,
        inverse: lipinv,
        regularity: reg,
        tolerance: tol,
        agree,
    })
}

/// Runs lop F, lip F⁻¹ and reg F with mirrored configs and checks that
/// 1/lop, lip F⁻¹ and reg agree within twice the resolution.
pub fn check_equivalence_around(f: &MultiMap, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Result<EquivalenceReport> {
    equivalence(f, xbar, ybar, cfg, false)
}

/// Punctual counterpart: plop F, psdclm F⁻¹, hemreg F.
pub fn check_equivalence_at(f: &MultiMap, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig) -> Result<EquivalenceReport> {
    equivalence(f, xbar, ybar, cfg, true)
}

// ---------------------------------------------------------------------------
// Linear operators

/// Euclidean-norm moduli of x ↦ Ax computed from singular values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModuli {
    pub rows: usize,
    pub cols: usize,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub surjective: bool,
    pub lop: ExtReal,
    pub reg: ExtReal,
}

pub const RANK_TOLERANCE: f64 = 1e-10;

/// A is open/regular iff it is surjective; then reg = 1/σ_min and lop = σ_min
/// where σ_min is the m-th singular value. Otherwise lop = 0, reg = +∞.
pub fn linear_operator_moduli(matrix: &[Vec<f64>]) -> Result<LinearModuli> {
    let m = matrix.len();
    let n = matrix.first().map_or(0, Vec::len);
    if m == 0 || n == 0 {
        return Err(Error::Empty("matrix".into()));
    }
    if let Some(r) = matrix.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: r.len() });
    }
    let a = DMatrix::from_fn(m, n, |i, j| matrix[i][j]);
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let rank = sv.iter().filter(|&&s| s > RANK_TOLERANCE).count();
    let surjective = rank == m;
    let (lop, reg) = if surjective {
        let smin = sv[m - 1];
        (ExtReal::Finite(smin), ExtReal::Finite(1.0 / smin))
    } else {
        (ExtReal::ZERO, ExtReal::Infinite)
    };
    Ok(LinearModuli { rows: m, cols: n, singular_values: sv, rank, surjective, lop, reg })
}
