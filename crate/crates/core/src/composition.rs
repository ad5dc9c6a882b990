//! Certifiers for openness of compositions H(x) = G(F₁(x), F₂(x)) and of the
//! special cases built from it.
//!
//! Each certifier checks the supplied constants against the definitions at
//! grid level, then sweeps the concluded inclusions exhaustively. If any
//! hypothesis is refuted the conclusions are not swept.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{BallKind, ExtReal, Point, SpaceRef, BOUNDARY_SLACK};
use crate::moduli::{
    estimate_lip_around, estimate_lop_around, estimate_partial, estimate_reg_around, partial_violation, violation, ModulusKind,
    ModulusReport, NeighborhoodConfig, Witness,
};
use crate::setvalued::{compose_g, difference_on, BiMultiMap, MultiMap, ParamMultiMap};

/// Default δ in the shrunken radius of the graph-quantified conclusion for
/// an outer map that is open in its second argument.
pub const DEFAULT_DELTA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// G(F₁, F₂) open at rate LC − MD.
    Composition,
    /// G(x, F(x)) with F open and G open in its second argument: rate LC − D.
    PartialOpen,
    /// G(x, F(x)) with F Lipschitz-like and G open in x: rate C − MD.
    PartialLipschitz,
    /// F₁ − F₂ with F₁ regular and F₂ Lipschitz-like: rate 1/l − m.
    Difference,
    /// F − G⁻¹ with F, G open at every graph point: rate L − 1/M.
    LyusternikGraves,
}

/// Constants named as in the rate formulas. Which ones are required depends
/// on the theorem.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RateConstants {
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub big_l: Option<f64>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub big_m: Option<f64>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
}

impl RateConstants {
    pub fn composition(big_l: f64, big_m: f64, c: f64, d: f64) -> RateConstants {
        RateConstants { big_l: Some(big_l), big_m: Some(big_m), c: Some(c), d: Some(d), ..Default::default() }
    }

    pub fn partial_open(big_l: f64, c: f64, d: f64) -> RateConstants {
        RateConstants { big_l: Some(big_l), c: Some(c), d: Some(d), ..Default::default() }
    }

    pub fn partial_lipschitz(c: f64, d: f64, big_m: f64) -> RateConstants {
        RateConstants { big_m: Some(big_m), c: Some(c), d: Some(d), ..Default::default() }
    }

    pub fn difference(l: f64, m: f64) -> RateConstants {
        RateConstants { l: Some(l), m: Some(m), ..Default::default() }
    }

    pub fn lyusternik_graves(big_l: f64, big_m: f64) -> RateConstants {
        RateConstants { big_l: Some(big_l), big_m: Some(big_m), ..Default::default() }
    }

    /// The rate the theorem concludes, computed from the stored constants.
    pub fn rate(&self, theorem: Theorem) -> Result<f64> {
        let pos = |v: Option<f64>, n: &str| match v {
            Some(a) if a.is_finite() && a > 0.0 => Ok(a),
            Some(a) => Err(Error::Precondition(format!("constant {n} must be positive, got {a}"))),
            None => Err(Error::Precondition(format!("constant {n} is required"))),
        };
        let nonneg = |v: Option<f64>, n: &str| match v {
            Some(a) if a.is_finite() && a >= 0.0 => Ok(a),
            Some(a) => Err(Error::Precondition(format!("constant {n} must be nonnegative, got {a}"))),
            None => Err(Error::Precondition(format!("constant {n} is required"))),
        };
        let (rate, what) = match theorem {
            Theorem::Composition => {
                (pos(self.big_l, "L")? * pos(self.c, "C")? - pos(self.big_m, "M")? * nonneg(self.d, "D")?, "LC − MD")
            }
            Theorem::PartialOpen => (pos(self.big_l, "L")? * pos(self.c, "C")? - nonneg(self.d, "D")?, "LC − D"),
            Theorem::PartialLipschitz => (pos(self.c, "C")? - pos(self.big_m, "M")? * nonneg(self.d, "D")?, "C − MD"),
            Theorem::Difference => {
                let (l, m) = (pos(self.l, "l")?, pos(self.m, "m")?);
                if l * m >= 1.0 {
                    return Err(Error::Precondition(format!("lm = {} must be < 1", l * m)));
                }
                (1.0 / l - m, "1/l − m")
            }
            Theorem::LyusternikGraves => {
                let (a, b) = (pos(self.big_l, "L")?, pos(self.big_m, "M")?);
                if a * b <= 1.0 {
                    return Err(Error::Precondition(format!("LM = {} must be > 1", a * b)));
                }
                (a - 1.0 / b, "L − 1/M")
            }
        };
        if rate > 0.0 {
            Ok(rate)
        } else {
            Err(Error::Precondition(format!("rate {what} = {rate} must be positive")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub name: String,
    pub constant: Option<f64>,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ModulusReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One swept inclusion B(w, rate·ρ) ⊆ H(B(x, ρ)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConclusionResult {
    pub family: String,
    pub anchor: Vec<Point>,
    pub rho: f64,
    pub defect: ExtReal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncovered: Option<Point>,
}

/// A side condition checked before a stronger conclusion is swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub name: String,
    pub holds: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<Point>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionCertificate {
    pub theorem: Theorem,
    pub constants: RateConstants,
    pub rate: f64,
    pub anchor: Vec<Point>,
    pub hypothesis_results: Vec<HypothesisResult>,
    pub epsilon_used: f64,
    /// For compositions: the radius the existence proof yields when all the
    /// neighborhood radii it starts from equal the smallest configured one.
    /// For the partial variants: the shrunken radius ε′ of the
    /// graph-quantified sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proof_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<ConditionResult>,
    pub conclusion_results: Vec<ConclusionResult>,
    /// Smallest ratio (distance from the ball center to the nearest uncovered
    /// point) / ρ over all sweeps; ≥ `rate` on every PASS.
    pub observed_rate: ExtReal,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CompositionCertificate {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }

    pub fn max_defect(&self) -> ExtReal {
        self.conclusion_results.iter().fold(ExtReal::ZERO, |a, c| a.max(c.defect))
    }

    pub fn slack(&self) -> ExtReal {
        match self.observed_rate {
            ExtReal::Finite(o) => ExtReal::Finite(o - self.rate),
            ExtReal::Infinite => ExtReal::Infinite,
        }
    }
}

// ---------------------------------------------------------------------------
// Shared machinery

/// Checks B(w, rate·ρ) ⊆ H(B(x, ρ)) on the grids of H. Returns the result and
/// the ratio (distance to the nearest uncovered point + slack)/ρ.
fn open_inclusion(h: &MultiMap, x: usize, w: usize, rho: f64, rate: f64, family: &str, anchor: Vec<Point>) -> (ConclusionResult, ExtReal) {
    let (xs, ws) = (h.source(), h.target());
    let src = xs.ball_indices(xs.point(x), rho, BallKind::Open);
    let covered = h.image_mask(src);
    let cover_idx: Vec<usize> = (0..ws.len()).filter(|&t| covered[t]).collect();
    let wp = ws.point(w);
    let mut nearest = ExtReal::Infinite;
    let mut defect = ExtReal::ZERO;
    let mut uncovered = None;
    for t in (0..ws.len()).filter(|&t| !covered[t]) {
        let d = ws.dist(wp, ws.point(t));
        nearest = nearest.min(ExtReal::Finite(d));
        if BallKind::Open.contains(d, rate * rho) {
            let gap = cover_idx.iter().fold(ExtReal::Infinite, |a, &c| a.min(ExtReal::Finite(ws.dist_idx(t, c))));
            if gap > defect {
                defect = gap;
                uncovered = Some(ws.point(t).to_vec());
            }
        }
    }
    let ratio = match nearest {
        ExtReal::Finite(d) => ExtReal::Finite((d + BOUNDARY_SLACK) / rho),
        ExtReal::Infinite => ExtReal::Infinite,
    };
    (ConclusionResult { family: family.into(), anchor, rho, defect, uncovered }, ratio)
}

/// A pending sweep item: anchor tuple, source index, center index in H's
/// target, ρ.
struct Item {
    family: &'static str,
    anchor: Vec<Point>,
    x: usize,
    w: usize,
    rho: f64,
}

fn sweep(h: &MultiMap, items: Vec<Item>, rate: f64) -> (Vec<ConclusionResult>, ExtReal) {
    let out: Vec<(ConclusionResult, ExtReal)> =
        items.into_par_iter().map(|it| open_inclusion(h, it.x, it.w, it.rho, rate, it.family, it.anchor)).collect();
    let observed = out.iter().fold(ExtReal::Infinite, |a, (_, r)| a.min(*r));
    (out.into_iter().map(|(c, _)| c).collect(), observed)
}

pub(crate) fn hyp_plain(name: &str, f: &MultiMap, kind: ModulusKind, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig, constant: f64) -> Result<HypothesisResult> {
    let report = match kind {
        ModulusKind::Lop => estimate_lop_around(f, xbar, ybar, cfg)?,
        ModulusKind::Lip => estimate_lip_around(f, xbar, ybar, cfg)?,
        ModulusKind::Reg => estimate_reg_around(f, xbar, ybar, cfg)?,
        _ => unreachable!(),
    };
    let witness = violation(f, kind, xbar, ybar, cfg, constant)?;
    Ok(HypothesisResult { name: name.into(), constant: Some(constant), passed: witness.is_none(), report: Some(report), witness, note: None })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn hyp_partial(
    name: &str,
    p: &ParamMultiMap,
    kind: ModulusKind,
    left: &[f64],
    right: &[f64],
    target: &[f64],
    cfg: &NeighborhoodConfig,
    constant: f64,
) -> Result<HypothesisResult> {
    let report = estimate_partial(p, kind, left, right, target, cfg)?;
    let witness = partial_violation(p, kind, left, right, target, cfg, constant)?;
    Ok(HypothesisResult { name: name.into(), constant: Some(constant), passed: witness.is_none(), report: Some(report), witness, note: None })
}

fn closed_graphs_note() -> HypothesisResult {
    HypothesisResult {
        name: "closed_graphs".into(),
        constant: None,
        passed: true,
        report: None,
        witness: None,
        note: Some("finite graphs are closed".into()),
    }
}

fn open_ball(space: &SpaceRef, center: &[f64], r: f64) -> Vec<usize> {
    space.ball_indices(center, r, BallKind::Open)
}

fn in_ball(space: &SpaceRef, i: usize, center: &[f64], r: f64) -> bool {
    BallKind::Open.contains(space.dist(space.point(i), center), r)
}

fn first_failed(hyps: &[HypothesisResult]) -> Option<&HypothesisResult> {
    hyps.iter().find(|h| !h.passed)
}

struct Draft {
    theorem: Theorem,
    constants: RateConstants,
    rate: f64,
    anchor: Vec<Point>,
    hyps: Vec<HypothesisResult>,
    epsilon: f64,
    proof_epsilon: Option<f64>,
    conditions: Vec<ConditionResult>,
    notes: Vec<String>,
}

impl Draft {
    fn refuted(self) -> CompositionCertificate {
        let name = first_failed(&self.hyps).map(|h| h.name.clone()).unwrap_or_default();
        CompositionCertificate {
            theorem: self.theorem,
            constants: self.constants,
            rate: self.rate,
            anchor: self.anchor,
            hypothesis_results: self.hyps,
            epsilon_used: self.epsilon,
            proof_epsilon: self.proof_epsilon,
            conditions: self.conditions,
            conclusion_results: Vec::new(),
            observed_rate: ExtReal::Infinite,
            status: Status::Fail,
            failure: Some(format!("hypothesis `{name}` refuted; conclusions not swept")),
            notes: self.notes,
        }
    }

    fn finish(self, results: Vec<ConclusionResult>, observed: ExtReal) -> CompositionCertificate {
        let bad = results.iter().position(|c| c.defect > ExtReal::ZERO);
        let failure = bad.map(|i| {
            let c = &results[i];
            format!("{} inclusion fails at anchor {:?}, ρ = {}: defect {}", c.family, c.anchor, c.rho, c.defect)
        });
        CompositionCertificate {
            theorem: self.theorem,
            constants: self.constants,
            rate: self.rate,
            anchor: self.anchor,
            hypothesis_results: self.hyps,
            epsilon_used: self.epsilon,
            proof_epsilon: self.proof_epsilon,
            conditions: self.conditions,
            conclusion_results: results,
            observed_rate: observed,
            status: if bad.is_none() { Status::Pass } else { Status::Fail },
            failure,
            notes: self.notes,
        }
    }
}

fn min_radius(cfg: &NeighborhoodConfig) -> f64 {
    cfg.radius_u.min(cfg.radius_v).min(cfg.radius_w())
}

// ---------------------------------------------------------------------------
// Composition

/// Certifies that H = G(F₁, F₂) is open at rate LC − MD at the anchor
/// (x̄, ȳ, z̄, w̄) and around it.
///
/// Hypotheses: F₁ open at rate L around (x̄, ȳ); F₂ Lipschitz-like with
/// constant M around (x̄, z̄); G open in y uniformly in z with constant C and
/// Lipschitz-like in z uniformly in y with constant D around ((ȳ, z̄), w̄).
/// Conclusions: B(w̄, rate·ρ) ⊆ H(B(x̄, ρ)) for every ρ in the grid, and
/// B(w, rate·ρ) ⊆ H(B(x, ρ)) for every incidence tuple (x, y, z, w) in the
/// open ε/2-boxes and every ρ ≤ ε/2.
pub fn certify_composition(
    f1: &MultiMap,
    f2: &MultiMap,
    g: &BiMultiMap,
    anchor: [&[f64]; 4],
    constants: RateConstants,
    cfg: &NeighborhoodConfig,
) -> Result<CompositionCertificate> {
    let [xb, yb, zb, wb] = anchor;
    let rate = constants.rate(Theorem::Composition)?;
    cfg.validate()?;
    let (ix, iy, iz) = (f1.source().require(xb)?, f1.target().require(yb)?, f2.target().require(zb)?);
    let iw = g.target().require(wb)?;
    if !f1.contains_pair(ix, iy) || !f2.contains_pair(f2.source().require(xb)?, iz) || !g.value(iy, iz).contains(&iw) {
        return Err(Error::Precondition("anchor incidences (x̄,ȳ) ∈ Gr F₁, (x̄,z̄) ∈ Gr F₂, w̄ ∈ G(ȳ,z̄) do not hold".into()));
    }
    let (big_l, big_m, c, d) = (constants.big_l.unwrap(), constants.big_m.unwrap(), constants.c.unwrap(), constants.d.unwrap());
    let hyps = vec![
        closed_graphs_note(),
        hyp_plain("f1_open", f1, ModulusKind::Lop, xb, yb, cfg, big_l)?,
        hyp_plain("f2_lipschitz_like", f2, ModulusKind::Lip, xb, zb, cfg, big_m)?,
        hyp_partial("g_open_in_y", g.as_param(), ModulusKind::LopX, yb, zb, wb, cfg, c)?,
        hyp_partial("g_lipschitz_in_z", g.as_param(), ModulusKind::LipP, yb, zb, wb, cfg, d)?,
    ];
    let a = min_radius(cfg);
    let s = big_l * c + big_m * d;
    let proof_eps = [a, a / big_l, a / big_m, a / s, a / (2.0 * big_l), a / (2.0 * big_m), a / (2.0 * s)]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let eps = cfg.epsilon;
    let draft = Draft {
        theorem: Theorem::Composition,
        constants,
        rate,
        anchor: anchor.iter().map(|p| p.to_vec()).collect(),
        hyps,
        epsilon: eps,
        proof_epsilon: Some(proof_eps),
        conditions: Vec::new(),
        notes: vec![format!("second conclusion uses anchor boxes and ρ bounded by ε/2 = {}", eps / 2.0)],
    };
    if first_failed(&draft.hyps).is_some() {
        return Ok(draft.refuted());
    }
    let h = compose_g(f1, f2, g)?;
    let mut items: Vec<Item> = cfg
        .rho_grid
        .iter()
        .map(|&r| Item { family: "at_anchor", anchor: draft.anchor.clone(), x: ix, w: iw, rho: r })
        .collect();
    let half = eps / 2.0;
    let rhos: Vec<f64> = cfg.rho_grid.iter().copied().filter(|&r| r <= half + BOUNDARY_SLACK).collect();
    let (xs, ys, zs, ws) = (f1.source(), f1.target(), f2.target(), g.target());
    for x in open_ball(xs, xb, half) {
        for &y in f1.row(x).iter().filter(|&&y| in_ball(ys, y, yb, half)) {
            for &z in f2.row(x).iter().filter(|&&z| in_ball(zs, z, zb, half)) {
                for &w in g.value(y, z).iter().filter(|&&w| in_ball(ws, w, wb, half)) {
                    let tuple = vec![xs.point(x).to_vec(), ys.point(y).to_vec(), zs.point(z).to_vec(), ws.point(w).to_vec()];
                    for &r in &rhos {
                        items.push(Item { family: "around_anchor", anchor: tuple.clone(), x, w, rho: r });
                    }
                }
            }
        }
    }
    let (results, observed) = sweep(&h, items, rate);
    Ok(draft.finish(results, observed))
}

// ---------------------------------------------------------------------------
// Φ(x) = G(x, F(x))

fn partial_anchor(f: &MultiMap, g: &BiMultiMap, xb: &[f64], yb: &[f64], zb: &[f64]) -> Result<(usize, usize, usize)> {
    let (ix, iy, iz) = (f.source().require(xb)?, f.target().require(yb)?, g.target().require(zb)?);
    if !f.contains_pair(ix, iy) || !g.value(g.left().require(xb)?, iy).contains(&iz) {
        return Err(Error::Precondition("anchor incidences (x̄,ȳ) ∈ Gr F, z̄ ∈ G(x̄,ȳ) do not hold".into()));
    }
    Ok((ix, iy, iz))
}

/// Items for (x, y, z) in open ε-boxes with y ∈ F(x), z ∈ G(x, y).
fn triple_items(f: &MultiMap, g: &BiMultiMap, anchor: [&[f64]; 3], eps: f64, rho: &[f64]) -> Vec<Item> {
    let [xb, yb, zb] = anchor;
    let (xs, ys, zs) = (f.source(), f.target(), g.target());
    let rhos: Vec<f64> = rho.iter().copied().filter(|&r| r <= eps + BOUNDARY_SLACK).collect();
    let mut items = Vec::new();
    for x in open_ball(xs, xb, eps) {
        let gx = g.left().index_of(xs.point(x));
        let Some(gx) = gx else { continue };
        for &y in f.row(x).iter().filter(|&&y| in_ball(ys, y, yb, eps)) {
            for &z in g.value(gx, y).iter().filter(|&&z| in_ball(zs, z, zb, eps)) {
                let tuple = vec![xs.point(x).to_vec(), ys.point(y).to_vec(), zs.point(z).to_vec()];
                for &r in &rhos {
                    items.push(Item { family: "incidence", anchor: tuple.clone(), x, w: z, rho: r });
                }
            }
        }
    }
    items
}

/// Items for (x, z) ∈ Gr Φ in open ε′-boxes.
fn graph_items(phi: &MultiMap, xb: &[f64], zb: &[f64], eps: f64, rho: &[f64]) -> Vec<Item> {
    let (xs, zs) = (phi.source(), phi.target());
    let rhos: Vec<f64> = rho.iter().copied().filter(|&r| r <= eps + BOUNDARY_SLACK).collect();
    let mut items = Vec::new();
    for x in open_ball(xs, xb, eps) {
        for &z in phi.row(x).iter().filter(|&&z| in_ball(zs, z, zb, eps)) {
            let tuple = vec![xs.point(x).to_vec(), zs.point(z).to_vec()];
            for &r in &rhos {
                items.push(Item { family: "graph", anchor: tuple.clone(), x, w: z, rho: r });
            }
        }
    }
    items
}

/// Certifies openness of Φ(x) = G(x, F(x)) at rate LC − D when F is open at
/// rate L and G is open in y uniformly in x (C) and Lipschitz-like in x
/// uniformly in y (D).
///
/// With `check_injective`, first verifies that G(x, y) ∩ G(x, y′) = ∅ for
/// y ≠ y′ and every x ∈ B(x̄, ε); if that holds, the inclusion is also swept
/// over Gr Φ in boxes of radius ε′ = min{ε, C ε / ((D + 1)(1 + δ))}. A
/// violated condition is recorded and only the incidence form is swept.
#[allow(clippy::too_many_arguments)]
pub fn certify_partial_open(
    f: &MultiMap,
    g: &BiMultiMap,
    anchor: [&[f64]; 3],
    constants: RateConstants,
    cfg: &NeighborhoodConfig,
    check_injective: bool,
    delta: f64,
) -> Result<CompositionCertificate> {
    let [xb, yb, zb] = anchor;
    let rate = constants.rate(Theorem::PartialOpen)?;
    cfg.validate()?;
    partial_anchor(f, g, xb, yb, zb)?;
    let (big_l, c, d) = (constants.big_l.unwrap(), constants.c.unwrap(), constants.d.unwrap());
    let hyps = vec![
        closed_graphs_note(),
        hyp_partial("g_lipschitz_in_x", g.as_param(), ModulusKind::LipX, xb, yb, zb, cfg, d)?,
        hyp_partial("g_open_in_y", g.as_param(), ModulusKind::LopP, xb, yb, zb, cfg, c)?,
        hyp_plain("f_open", f, ModulusKind::Lop, xb, yb, cfg, big_l)?,
    ];
    let eps = cfg.epsilon;
    let mut draft = Draft {
        theorem: Theorem::PartialOpen,
        constants,
        rate,
        anchor: anchor.iter().map(|p| p.to_vec()).collect(),
        hyps,
        epsilon: eps,
        proof_epsilon: None,
        conditions: Vec::new(),
        notes: Vec::new(),
    };
    if first_failed(&draft.hyps).is_some() {
        return Ok(draft.refuted());
    }
    let phi = compose_g(&MultiMap::identity(f.source()), f, g)?;
    let mut items = triple_items(f, g, anchor, eps, &cfg.rho_grid);
    if check_injective {
        let cond = injective_in_y(g, xb, eps);
        if cond.holds {
            let eps2 = eps.min(c * eps / ((d + 1.0) * (1.0 + delta)));
            draft.proof_epsilon = Some(eps2);
            draft.notes.push(format!("graph-quantified conclusion swept with ε′ = {eps2}, δ = {delta}"));
            items.extend(graph_items(&phi, xb, zb, eps2, &cfg.rho_grid));
        } else {
            draft.notes.push("injectivity condition violated; only the incidence form is swept".into());
        }
        draft.conditions.push(cond);
    }
    let (results, observed) = sweep(&phi, items, rate);
    Ok(draft.finish(results, observed))
}

fn injective_in_y(g: &BiMultiMap, xb: &[f64], eps: f64) -> ConditionResult {
    let (xs, ys, zs) = (g.left(), g.right(), g.target());
    for x in open_ball(xs, xb, eps) {
        let mut owner: Vec<Option<usize>> = vec![None; zs.len()];
        for y in 0..ys.len() {
            for &z in g.value(x, y) {
                match owner[z] {
                    Some(y0) if y0 != y => {
                        return ConditionResult {
                            name: "values_disjoint_in_y".into(),
                            holds: false,
                            witness: Some(vec![xs.point(x).to_vec(), ys.point(y0).to_vec(), ys.point(y).to_vec(), zs.point(z).to_vec()]),
                        };
                    }
                    _ => owner[z] = Some(y),
                }
            }
        }
    }
    ConditionResult { name: "values_disjoint_in_y".into(), holds: true, witness: None }
}

/// Certifies openness of Φ(x) = G(x, F(x)) at rate C − MD when F is
/// Lipschitz-like with constant M and G is open in x uniformly in y (C) and
/// Lipschitz-like in y uniformly in x (D).
///
/// With `check_single_valued`, verifies F(x̄) = {ȳ} and that F is Lipschitz
/// (F(x) ⊆ F(u) + M‖x − u‖𝔻 for all x, u ∈ B(x̄, ε)); if both hold, the
/// inclusion is also swept over Gr Φ in boxes of radius min{ε, ε/M}.
pub fn certify_partial_lipschitz(
    f: &MultiMap,
    g: &BiMultiMap,
    anchor: [&[f64]; 3],
    constants: RateConstants,
    cfg: &NeighborhoodConfig,
    check_single_valued: bool,
) -> Result<CompositionCertificate> {
    let [xb, yb, zb] = anchor;
    let rate = constants.rate(Theorem::PartialLipschitz)?;
    cfg.validate()?;
    let (ix, _, _) = partial_anchor(f, g, xb, yb, zb)?;
    let (big_m, c, d) = (constants.big_m.unwrap(), constants.c.unwrap(), constants.d.unwrap());
    let hyps = vec![
        closed_graphs_note(),
        hyp_partial("g_open_in_x", g.as_param(), ModulusKind::LopX, xb, yb, zb, cfg, c)?,
        hyp_partial("g_lipschitz_in_y", g.as_param(), ModulusKind::LipP, xb, yb, zb, cfg, d)?,
        hyp_plain("f_lipschitz_like", f, ModulusKind::Lip, xb, yb, cfg, big_m)?,
    ];
    let eps = cfg.epsilon;
    let mut draft = Draft {
        theorem: Theorem::PartialLipschitz,
        constants,
        rate,
        anchor: anchor.iter().map(|p| p.to_vec()).collect(),
        hyps,
        epsilon: eps,
        proof_epsilon: None,
        conditions: Vec::new(),
        notes: Vec::new(),
    };
    if first_failed(&draft.hyps).is_some() {
        return Ok(draft.refuted());
    }
    let phi = compose_g(&MultiMap::identity(f.source()), f, g)?;
    let mut items = triple_items(f, g, anchor, eps, &cfg.rho_grid);
    if check_single_valued {
        let single = ConditionResult {
            name: "single_valued_at_reference".into(),
            holds: f.row(ix).len() == 1,
            witness: (f.row(ix).len() != 1).then(|| f.image_idx(ix).to_points()),
        };
        let lip = lipschitz_on_ball(f, xb, eps, big_m);
        let both = single.holds && lip.holds;
        draft.conditions.push(single);
        draft.conditions.push(lip);
        if both {
            let eps2 = eps.min(eps / big_m);
            draft.proof_epsilon = Some(eps2);
            draft.notes.push(format!("graph-quantified conclusion swept with ε′ = {eps2}"));
            items.extend(graph_items(&phi, xb, zb, eps2, &cfg.rho_grid));
        } else {
            draft.notes.push("single-valuedness or Lipschitz condition violated; only the incidence form is swept".into());
        }
    }
    let (results, observed) = sweep(&phi, items, rate);
    Ok(draft.finish(results, observed))
}

fn lipschitz_on_ball(f: &MultiMap, xb: &[f64], eps: f64, m: f64) -> ConditionResult {
    let (xs, ys) = (f.source(), f.target());
    let u = open_ball(xs, xb, eps);
    for &a in &u {
        for &b in &u {
            let bound = m * xs.dist_idx(a, b) + BOUNDARY_SLACK;
            for &y in f.row(a) {
                let d = f.row(b).iter().fold(f64::INFINITY, |acc, &j| acc.min(ys.dist_idx(y, j)));
                if d > bound {
                    return ConditionResult {
                        name: "lipschitz_on_ball".into(),
                        holds: false,
                        witness: Some(vec![xs.point(a).to_vec(), xs.point(b).to_vec(), ys.point(y).to_vec()]),
                    };
                }
            }
        }
    }
    ConditionResult { name: "lipschitz_on_ball".into(), holds: true, witness: None }
}

// ---------------------------------------------------------------------------
// F₁ − F₂

/// Certifies that F₁ − F₂ (values on `diff`) is open at rate 1/l − m around
/// (x̄, ȳ₁ − ȳ₂), given F₁ l-metrically regular around (x̄, ȳ₁) and F₂
/// m-Lipschitz-like around (x̄, ȳ₂). The inclusion
/// B(y − z, rate·ρ) ⊆ (F₁ − F₂)(B(x, ρ)) is swept over every
/// (x, y, z) with y ∈ F₁(x), z ∈ F₂(x) in open ε-boxes.
pub fn certify_difference(
    f1: &MultiMap,
    f2: &MultiMap,
    anchor: [&[f64]; 3],
    constants: RateConstants,
    cfg: &NeighborhoodConfig,
    diff: &SpaceRef,
) -> Result<CompositionCertificate> {
    let [xb, y1, y2] = anchor;
    let rate = constants.rate(Theorem::Difference)?;
    cfg.validate()?;
    let ix = f1.source().require(xb)?;
    if !f1.contains_pair(ix, f1.target().require(y1)?) || !f2.contains_pair(f2.source().require(xb)?, f2.target().require(y2)?) {
        return Err(Error::Precondition("anchor incidences (x̄,ȳ₁) ∈ Gr F₁, (x̄,ȳ₂) ∈ Gr F₂ do not hold".into()));
    }
    let (l, m) = (constants.l.unwrap(), constants.m.unwrap());
    let hyps = vec![
        closed_graphs_note(),
        hyp_plain("f1_metrically_regular", f1, ModulusKind::Reg, xb, y1, cfg, l)?,
        hyp_plain("f2_lipschitz_like", f2, ModulusKind::Lip, xb, y2, cfg, m)?,
    ];
    let eps = cfg.epsilon;
    let draft = Draft {
        theorem: Theorem::Difference,
        constants,
        rate,
        anchor: anchor.iter().map(|p| p.to_vec()).collect(),
        hyps,
        epsilon: eps,
        proof_epsilon: None,
        conditions: Vec::new(),
        notes: Vec::new(),
    };
    if first_failed(&draft.hyps).is_some() {
        return Ok(draft.refuted());
    }
    let h = difference_on(f1, f2, diff)?;
    let (xs, ys, zs) = (f1.source(), f1.target(), f2.target());
    let rhos: Vec<f64> = cfg.rho_grid.iter().copied().filter(|&r| r <= eps + BOUNDARY_SLACK).collect();
    let mut items = Vec::new();
    for x in open_ball(xs, xb, eps) {
        for &y in f1.row(x).iter().filter(|&&y| in_ball(ys, y, y1, eps)) {
            for &z in f2.row(x).iter().filter(|&&z| in_ball(zs, z, y2, eps)) {
                let (yp, zp) = (ys.point(y), zs.point(z));
                let dv: Point = yp.iter().zip(zp).map(|(a, b)| a - b).collect();
                let w = diff.require(&dv)?;
                let tuple = vec![xs.point(x).to_vec(), yp.to_vec(), zp.to_vec()];
                for &r in &rhos {
                    items.push(Item { family: "incidence", anchor: tuple.clone(), x, w, rho: r });
                }
            }
        }
    }
    let (results, observed) = sweep(&h, items, rate);
    Ok(draft.finish(results, observed))
}

// ---------------------------------------------------------------------------
// Global F − G⁻¹

fn open_at_every_point(name: &str, f: &MultiMap, cfg: &NeighborhoodConfig, constant: f64) -> Result<HypothesisResult> {
    let pairs: Vec<(usize, usize)> = f.graph().collect();
    let found = pairs
        .par_iter()
        .map(|&(x, y)| violation(f, ModulusKind::Plop, f.source().point(x), f.target().point(y), cfg, constant))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .next();
    Ok(HypothesisResult {
        name: name.into(),
        constant: Some(constant),
        passed: found.is_none(),
        report: None,
        witness: found,
        note: Some(format!("punctual openness checked at all {} graph points", pairs.len())),
    })
}

fn every_graph_point(h: &MultiMap, rho: &[f64], family: &'static str) -> Vec<Item> {
    let mut items = Vec::new();
    for (x, w) in h.graph() {
        let tuple = vec![h.source().point(x).to_vec(), h.target().point(w).to_vec()];
        for &r in rho {
            items.push(Item { family, anchor: tuple.clone(), x, w, rho: r });
        }
    }
    items
}

/// Certifies that F − G⁻¹ (values on `diff_y`) is open at rate L − 1/M at
/// every point of its graph, given F: X ⇉ Y open at rate L and G: Y ⇉ X open
/// at rate M at every point of their graphs. With `diff_x`, also certifies
/// G − F⁻¹ at rate M − 1/L.
pub fn certify_lyusternik_graves(
    f: &MultiMap,
    g: &MultiMap,
    constants: RateConstants,
    cfg: &NeighborhoodConfig,
    diff_y: &SpaceRef,
    diff_x: Option<&SpaceRef>,
) -> Result<CompositionCertificate> {
    let rate = constants.rate(Theorem::LyusternikGraves)?;
    cfg.validate()?;
    let (big_l, big_m) = (constants.big_l.unwrap(), constants.big_m.unwrap());
    let h = difference_on(f, &g.inverse(), diff_y)?;
    if h.graph_len() == 0 {
        return Err(Error::Precondition("Dom(F − G⁻¹) is empty on the grid".into()));
    }
    let reverse = match diff_x {
        Some(dx) => {
            let k = difference_on(g, &f.inverse(), dx)?;
            if k.graph_len() == 0 {
                return Err(Error::Precondition("Dom(G − F⁻¹) is empty on the grid".into()));
            }
            Some(k)
        }
        None => None,
    };
    let hyps = vec![
        closed_graphs_note(),
        open_at_every_point("f_open_on_graph", f, cfg, big_l)?,
        open_at_every_point("g_open_on_graph", g, cfg, big_m)?,
    ];
    let mut notes = vec![format!("F − G⁻¹ has {} graph points", h.graph_len())];
    if let Some(k) = &reverse {
        notes.push(format!("G − F⁻¹ swept at rate M − 1/L = {} over {} graph points", big_m - 1.0 / big_l, k.graph_len()));
    }
    let mut draft = Draft {
        theorem: Theorem::LyusternikGraves,
        constants,
        rate,
        anchor: Vec::new(),
        hyps,
        epsilon: cfg.epsilon,
        proof_epsilon: None,
        conditions: Vec::new(),
        notes,
    };
    if first_failed(&draft.hyps).is_some() {
        return Ok(draft.refuted());
    }
    let (mut results, observed) = sweep(&h, every_graph_point(&h, &cfg.rho_grid, "f_minus_g_inverse"), rate);
    if let Some(k) = &reverse {
        // The reverse sweep has its own rate; its observed ratio goes to the notes.
        let (r2, o2) = sweep(k, every_graph_point(k, &cfg.rho_grid, "g_minus_f_inverse"), big_m - 1.0 / big_l);
        results.extend(r2);
        draft.notes.push(format!("observed rate of G − F⁻¹: {o2}"));
    }
    Ok(draft.finish(results, observed))
}
