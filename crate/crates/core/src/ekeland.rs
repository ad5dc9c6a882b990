//! Ekeland's variational principle on finite sets, and the inclusion solver
//! built on it: find x near x̄ with u ∈ G(F₁(x), F₂(x)).
//!
//! On a finite domain the principle is constructive. Starting from the
//! reference, move to any point w with h(w) + ‖v − w‖₀ < h(v) until none
//! exists; h strictly decreases, so no point is visited twice.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composition::{RateConstants, Theorem};
use crate::error::{Error, Result};
use crate::metric::{BallKind, Norm, Point, SpaceRef, BOUNDARY_SLACK};
use crate::moduli::NeighborhoodConfig;
use crate::setvalued::{BiMultiMap, MultiMap};

/// A metric on the EVP domain.
pub trait PerturbationNorm: Sync {
    fn dist(&self, a: &[f64], b: &[f64]) -> f64;
    fn describe(&self) -> String;
}

/// `scale`·‖a − b‖ in a grid norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledNorm {
    pub norm: Norm,
    pub scale: f64,
}

impl PerturbationNorm for ScaledNorm {
    fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        self.scale * self.norm.dist(a, b)
    }

    fn describe(&self) -> String {
        format!("{} × {:?}", self.scale, self.norm)
    }
}

/// τ(LC − MD)·max{‖p‖, L⁻¹‖q‖, M⁻¹‖r‖, (LC + MD)⁻¹‖s‖} on X × Y × Z × W,
/// with points stored as concatenated coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledMaxNorm {
    pub tau: f64,
    pub rate: f64,
    /// 1, L⁻¹, M⁻¹, (LC + MD)⁻¹; a zero constant gives weight +∞.
    pub weights: [f64; 4],
    norms: Vec<Norm>,
    dims: Vec<usize>,
}

impl ScaledMaxNorm {
    pub fn new(tau: f64, constants: &RateConstants, spaces: [&SpaceRef; 4]) -> Result<ScaledMaxNorm> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidArgument(format!("τ must lie in (0, 1), got {tau}")));
        }
        let rate = constants.rate(Theorem::Composition)?;
        let (l, m, c, d) = (constants.big_l.unwrap(), constants.big_m.unwrap(), constants.c.unwrap(), constants.d.unwrap());
        Ok(ScaledMaxNorm {
            tau,
            rate,
            weights: [1.0, 1.0 / l, 1.0 / m, 1.0 / (l * c + m * d)],
            norms: spaces.iter().map(|s| s.norm().clone()).collect(),
            dims: spaces.iter().map(|s| s.dim()).collect(),
        })
    }

    pub fn eval(&self, v: &[f64]) -> f64 {
        let mut at = 0;
        let mut worst = 0.0f64;
        for ((norm, &dim), &w) in self.norms.iter().zip(&self.dims).zip(&self.weights) {
            let n = norm.eval(&v[at..at + dim]);
            at += dim;
            let term = if n == 0.0 { 0.0 } else { w * n };
            worst = worst.max(term);
        }
        self.tau * self.rate * worst
    }
}

impl PerturbationNorm for ScaledMaxNorm {
    fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.eval(&d)
    }

    fn describe(&self) -> String {
        format!("τ(LC − MD)·max-weighted with τ = {}, LC − MD = {}, weights {:?}", self.tau, self.rate, self.weights)
    }
}

/// A point satisfying both conclusions of the principle against the
/// stored reference:
/// h(v) ≤ h(ref) − ‖v − ref‖₀ and h(v) ≤ h(w) + ‖v − w‖₀ for every w.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkelandPoint {
    pub index: usize,
    pub point: Point,
    pub value: f64,
    pub reference: Point,
    pub reference_value: f64,
    pub norm: String,
    pub iterations: usize,
    /// Visited points with their h values, reference first.
    pub trace: Vec<(Point, f64)>,
}

fn lex(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Greedy strict descent from `reference`: each step moves to the improving
/// point of least h, ties broken by lexicographic point order. Both
/// conclusions are re-checked over the whole domain before returning.
pub fn ekeland_point(domain: &[Point], h: &[f64], reference: usize, norm: &dyn PerturbationNorm) -> Result<EkelandPoint> {
    if domain.is_empty() {
        return Err(Error::Empty("EVP domain".into()));
    }
    if h.len() != domain.len() {
        return Err(Error::DimensionMismatch { expected: domain.len(), found: h.len() });
    }
    if let Some((i, v)) = h.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("h must be finite and nonnegative, h[{i}] = {v}")));
    }
    if reference >= domain.len() {
        return Err(Error::InvalidArgument(format!("reference index {reference} outside a domain of {}", domain.len())));
    }
    let mut cur = reference;
    let mut trace = vec![(domain[cur].clone(), h[cur])];
    loop {
        let here = &domain[cur];
        let next = (0..domain.len())
            .into_par_iter()
            .filter(|&j| h[j] + norm.dist(here, &domain[j]) < h[cur] - BOUNDARY_SLACK)
            .min_by(|&a, &b| h[a].total_cmp(&h[b]).then_with(|| lex(&domain[a], &domain[b])).then(a.cmp(&b)));
        match next {
            Some(j) => {
                cur = j;
                trace.push((domain[cur].clone(), h[cur]));
            }
            None => break,
        }
    }
    if let Some(msg) = evp_violation(domain, h, reference, cur, norm) {
        return Err(Error::Precondition(format!("EVP conclusions fail ({msg}); is the perturbation a metric?")));
    }
    Ok(EkelandPoint {
        index: cur,
        point: domain[cur].clone(),
        value: h[cur],
        reference: domain[reference].clone(),
        reference_value: h[reference],
        norm: norm.describe(),
        iterations: trace.len() - 1,
        trace,
    })
}

/// Exhaustive check of both conclusions for candidate `v`; `None` when
/// they hold within the boundary slack.
pub fn evp_violation(domain: &[Point], h: &[f64], reference: usize, v: usize, norm: &dyn PerturbationNorm) -> Option<String> {
    let first = h[reference] - norm.dist(&domain[v], &domain[reference]);
    if h[v] > first + BOUNDARY_SLACK {
        return Some(format!("h(v) = {} > h(ref) − ‖v − ref‖₀ = {first}", h[v]));
    }
    (0..domain.len())
        .into_par_iter()
        .find_first(|&w| h[v] > h[w] + norm.dist(&domain[v], &domain[w]) + BOUNDARY_SLACK)
        .map(|w| format!("h(v) = {} > h(w) + ‖v − w‖₀ at w = {:?}", h[v], domain[w]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Success,
    /// The EVP point has h > 0: the grid contains no exact solution the
    /// descent can reach. The point and its residual are still reported.
    DiscretizationGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub u: Point,
    /// The x-component of the EVP point.
    pub x: Point,
    /// ‖u − d‖ at the EVP point (a, b, c, d).
    pub residual: f64,
    pub rho: f64,
    pub tau: f64,
    pub rate: f64,
    pub domain_size: usize,
    pub evp: EkelandPoint,
}

/// Picks the smallest ρ of `cfg` with ‖u − w̄‖ < (LC − MD)ρ and runs
/// [`solve_inclusion_at`].
pub fn solve_inclusion(
    f1: &MultiMap,
    f2: &MultiMap,
    g: &BiMultiMap,
    anchor: [&[f64]; 4],
    constants: &RateConstants,
    u: &[f64],
    cfg: &NeighborhoodConfig,
) -> Result<Solution> {
    let rate = constants.rate(Theorem::Composition)?;
    let gap = g.target().dist(u, anchor[3]);
    let rho = cfg
        .rho_grid
        .iter()
        .copied()
        .filter(|&r| BallKind::Open.contains(gap, rate * r))
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::Precondition(format!("‖u − w̄‖ = {gap} is not below (LC − MD)ρ for any ρ in the grid")))?;
    solve_inclusion_at(f1, f2, g, anchor, constants, u, rho, None)
}

/// Runs the principle on Ω ∩ cl A with h(p, q, r, s) = ‖u − s‖, where
/// Ω = {(x, y, z, w) : y ∈ F₁(x), z ∈ F₂(x), w ∈ G(y, z)} and
/// A = B(x̄, ρ) × B(ȳ, Lρ) × B(z̄, Mρ) × B(w̄, (LC + MD)ρ).
///
/// `tau` defaults to (1 + ‖u − w̄‖/((LC − MD)ρ))/2. On success u ∈ H(x) and
/// ‖x − x̄‖ < ρ are re-checked from the graphs.
#[allow(clippy::too_many_arguments)]
pub fn solve_inclusion_at(
    f1: &MultiMap,
    f2: &MultiMap,
    g: &BiMultiMap,
    anchor: [&[f64]; 4],
    constants: &RateConstants,
    u: &[f64],
    rho: f64,
    tau: Option<f64>,
) -> Result<Solution> {
    let rate = constants.rate(Theorem::Composition)?;
    let [xb, yb, zb, wb] = anchor;
    let (xs, ys, zs, ws) = (f1.source(), f1.target(), f2.target(), g.target());
    if !crate::setvalued::same_space(xs, f2.source()) || !crate::setvalued::same_space(ys, g.left()) || !crate::setvalued::same_space(zs, g.right()) {
        return Err(Error::SpaceMismatch("F₁, F₂ and G do not chain".into()));
    }
    ws.check_dim(u)?;
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("ρ must be positive, got {rho}")));
    }
    let gap = ws.dist(u, wb);
    if !BallKind::Open.contains(gap, rate * rho) {
        return Err(Error::Precondition(format!("‖u − w̄‖ = {gap} is not below (LC − MD)ρ = {}", rate * rho)));
    }
    let tau = tau.unwrap_or((1.0 + gap / (rate * rho)) / 2.0);
    if gap.partial_cmp(&(tau * rate * rho)) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Precondition(format!("need ‖u − w̄‖ < τ(LC − MD)ρ, got τ = {tau}")));
    }
    let norm = ScaledMaxNorm::new(tau, constants, [xs, ys, zs, ws])?;
    let (l, m, c, d) = (constants.big_l.unwrap(), constants.big_m.unwrap(), constants.c.unwrap(), constants.d.unwrap());

    let (ix, iy, iz, iw) = (xs.require(xb)?, ys.require(yb)?, zs.require(zb)?, ws.require(wb)?);
    if !f1.contains_pair(ix, iy) || !f2.contains_pair(ix, iz) || g.value(iy, iz).binary_search(&iw).is_err() {
        return Err(Error::Precondition("anchor incidences ȳ ∈ F₁(x̄), z̄ ∈ F₂(x̄), w̄ ∈ G(ȳ, z̄) do not hold".into()));
    }
    let closed = |s: &SpaceRef, i: usize, center: &[f64], r: f64| BallKind::Closed.contains(s.dist(s.point(i), center), r);
    let mut tuples: Vec<[usize; 4]> = Vec::new();
    for x in xs.ball_indices(xb, rho, BallKind::Closed) {
        for &y in f1.row(x).iter().filter(|&&y| closed(ys, y, yb, l * rho)) {
            for &z in f2.row(x).iter().filter(|&&z| closed(zs, z, zb, m * rho)) {
                for &w in g.value(y, z).iter().filter(|&&w| closed(ws, w, wb, (l * c + m * d) * rho)) {
                    tuples.push([x, y, z, w]);
                }
            }
        }
    }
    let reference = tuples.iter().position(|t| *t == [ix, iy, iz, iw]).expect("anchor tuple lies in Ω ∩ cl A");
    let domain: Vec<Point> = tuples
        .iter()
        .map(|t| [xs.point(t[0]), ys.point(t[1]), zs.point(t[2]), ws.point(t[3])].concat())
        .collect();
    let h: Vec<f64> = tuples.iter().map(|t| ws.dist(u, ws.point(t[3]))).collect();
    let evp = ekeland_point(&domain, &h, reference, &norm)?;

    let [a, b, cc, dd] = tuples[evp.index];
    let residual = h[evp.index];
    let x = xs.point(a).to_vec();
    let status = if residual <= BOUNDARY_SLACK {
        let hits = ws.index_of(u).is_some_and(|ui| {
            f1.row(a).iter().any(|&y| f2.row(a).iter().any(|&z| g.value(y, z).binary_search(&ui).is_ok()))
        });
        if !hits || !BallKind::Open.contains(xs.dist(&x, xb), rho) {
            return Err(Error::Precondition(format!(
                "solution re-check failed at x = {x:?} (tuple {:?})",
                [ys.point(b), zs.point(cc), ws.point(dd)]
            )));
        }
        SolveStatus::Success
    } else {
        SolveStatus::DiscretizationGap
    };
    Ok(Solution { status, u: u.to_vec(), x, residual, rho, tau, rate, domain_size: domain.len(), evp })
}
