//! Solution maps S(p) = {x : 0 ∈ H(x, p)} of parametric inclusions, the
//! distance estimates they satisfy when H is partially open, and the
//! Lipschitz and regularity bounds that follow.
//!
//! An [`ImplicitInstance`] fixes one rate `c`. For the solution-side
//! estimate c is the openness of H in x uniformly in p; for the
//! parameter-side estimate it is the openness in p uniformly in x. Build one
//! instance per side when the two rates differ.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composition::{hyp_partial, HypothesisResult};
use crate::error::{Error, Result};
use crate::metric::{BallKind, ExtReal, Point, BOUNDARY_SLACK};
use crate::moduli::{estimate_lip_around, estimate_reg_around, ModulusKind, ModulusReport, NeighborhoodConfig};
use crate::setvalued::{MultiMap, ParamMultiMap};

mod gamma;

pub use gamma::{gamma_map, GammaCheck, GammaInstance, GammaSweep};

/// S: P ⇉ X with Gr S = {(p, x) : 0 ∈ H(x, p)}.
pub fn implicit_map(h: &ParamMultiMap) -> Result<MultiMap> {
    let zero = zero_index(h)?;
    let pairs = h.graph().filter(|&(_, _, y)| y == zero).map(|(x, p, _)| (p, x));
    MultiMap::from_index_pairs(h.params(), h.source(), pairs)
}

fn zero_index(h: &ParamMultiMap) -> Result<usize> {
    h.target()
        .index_of_zero()
        .ok_or_else(|| Error::Precondition(format!("0 is not on grid `{}`", h.target().label())))
}

pub(crate) fn le_slack(a: ExtReal, b: ExtReal) -> bool {
    match (a, b) {
        (_, ExtReal::Infinite) => true,
        (ExtReal::Infinite, _) => false,
        (ExtReal::Finite(a), ExtReal::Finite(b)) => a <= b + BOUNDARY_SLACK,
    }
}

/// Which distance the estimate controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// d(x, S(p)) ≤ c⁻¹ d(0, H(x, p) ∩ B(0, γ)); c is openness in x.
    Solution,
    /// d(p, S⁻¹(x)) ≤ c⁻¹ d(0, H(x, p) ∩ B(0, γ)); c is openness in p.
    Parameter,
}

impl Side {
    fn openness_kind(self) -> ModulusKind {
        match self {
            Side::Solution => ModulusKind::LopX,
            Side::Parameter => ModulusKind::LopP,
        }
    }

    fn lipschitz_kind(self) -> ModulusKind {
        match self {
            Side::Solution => ModulusKind::LipP,
            Side::Parameter => ModulusKind::LipX,
        }
    }
}

/// H: X × P ⇉ Y with a reference zero (x̄, p̄, 0) and the constants of the
/// distance estimates.
///
/// `cfg` gives the neighborhoods used to validate hypotheses: `radius_u` on
/// X, `radius_w` on P, `radius_v` on Y around 0. `alpha` and `beta` bound the
/// region where estimates are verified and default to the X and P radii;
/// `gamma` defaults to min(c·ε, `radius_v`).
#[derive(Debug, Clone)]
pub struct ImplicitInstance {
    h: ParamMultiMap,
    xbar: Point,
    pbar: Point,
    zero: Point,
    pub c: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    cfg: NeighborhoodConfig,
    solution: MultiMap,
    openness: [OnceLock<Result<HypothesisResult>>; 2],
}

impl ImplicitInstance {
    pub fn new(h: ParamMultiMap, xbar: &[f64], pbar: &[f64], c: f64, cfg: NeighborhoodConfig) -> Result<ImplicitInstance> {
        cfg.validate()?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("rate c must be positive and finite, got {c}")));
        }
        let zi = zero_index(&h)?;
        let (xi, pi) = (h.source().require(xbar)?, h.params().require(pbar)?);
        if !h.contains_triple(xi, pi, zi) {
            return Err(Error::Precondition(format!("0 ∉ H({xbar:?}, {pbar:?})")));
        }
        let solution = implicit_map(&h)?;
        Ok(ImplicitInstance {
            zero: h.target().point(zi).to_vec(),
            xbar: xbar.to_vec(),
            pbar: pbar.to_vec(),
            c,
            gamma: (c * cfg.epsilon).min(cfg.radius_v),
            alpha: cfg.radius_u,
            beta: cfg.radius_w(),
            cfg,
            solution,
            h,
            openness: Default::default(),
        })
    }

    pub fn with_radii(mut self, alpha: f64, beta: f64, gamma: f64) -> Result<ImplicitInstance> {
        if [alpha, beta, gamma].iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::InvalidArgument(format!("radii must be positive, got α = {alpha}, β = {beta}, γ = {gamma}")));
        }
        self.alpha = alpha;
        self.beta = beta;
        self.gamma = gamma;
        Ok(self)
    }

    pub fn map(&self) -> &ParamMultiMap {
        &self.h
    }

    pub fn solution_map(&self) -> &MultiMap {
        &self.solution
    }

    pub fn config(&self) -> &NeighborhoodConfig {
        &self.cfg
    }

    pub fn reference(&self) -> (&[f64], &[f64]) {
        (&self.xbar, &self.pbar)
    }

    /// Validates the openness rate `c` for `side`; computed once per side.
    pub fn openness_hypothesis(&self, side: Side) -> Result<HypothesisResult> {
        let slot = &self.openness[side as usize];
        slot.get_or_init(|| {
            let name = match side {
                Side::Solution => "h_open_in_x",
                Side::Parameter => "h_open_in_p",
            };
            let h = hyp_partial(name, &self.h, side.openness_kind(), &self.xbar, &self.pbar, &self.zero, &self.cfg, self.c)?;
            require(h)
        })
        .clone()
    }

    fn lipschitz_hypothesis(&self, side: Side, constant: f64) -> Result<HypothesisResult> {
        let name = match side {
            Side::Solution => "h_lipschitz_in_p",
            Side::Parameter => "h_lipschitz_in_x",
        };
        require(hyp_partial(name, &self.h, side.lipschitz_kind(), &self.xbar, &self.pbar, &self.zero, &self.cfg, constant)?)
    }

    /// Checks the distance estimate at one (x, p) with x ∈ B(x̄, α) and
    /// p ∈ B(p̄, β).
    pub fn verify_estimate(&self, side: Side, x: &[f64], p: &[f64]) -> Result<DistanceEstimate> {
        let hypothesis = self.openness_hypothesis(side)?;
        let (xi, pi) = (self.h.source().require(x)?, self.h.params().require(p)?);
        if !self.in_region(xi, pi) {
            return Err(Error::Precondition(format!(
                "({x:?}, {p:?}) is outside B(x̄, {}) × B(p̄, {})",
                self.alpha, self.beta
            )));
        }
        let mut e = self.estimate_idx(side, xi, pi);
        e.hypothesis = Some(hypothesis);
        Ok(e)
    }

    fn in_region(&self, xi: usize, pi: usize) -> bool {
        let (xs, ps) = (self.h.source(), self.h.params());
        BallKind::Open.contains(xs.dist(xs.point(xi), &self.xbar), self.alpha)
            && BallKind::Open.contains(ps.dist(ps.point(pi), &self.pbar), self.beta)
    }

    fn estimate_idx(&self, side: Side, xi: usize, pi: usize) -> DistanceEstimate {
        let (xs, ps, ys) = (self.h.source(), self.h.params(), self.h.target());
        let residual = self
            .h
            .row(xi, pi)
            .iter()
            .map(|&j| ys.dist(ys.point(j), &self.zero))
            .filter(|&d| BallKind::Open.contains(d, self.gamma))
            .fold(ExtReal::Infinite, |acc, d| acc.min(ExtReal::Finite(d)));
        let rhs = residual.scale(1.0 / self.c);
        let lhs = match side {
            Side::Solution => self
                .solution
                .row(pi)
                .iter()
                .map(|&k| xs.dist_idx(xi, k))
                .fold(ExtReal::Infinite, |acc, d| acc.min(ExtReal::Finite(d))),
            Side::Parameter => self
                .solution
                .col(xi)
                .iter()
                .map(|&k| ps.dist_idx(pi, k))
                .fold(ExtReal::Infinite, |acc, d| acc.min(ExtReal::Finite(d))),
        };
        let ratio = match (lhs, rhs) {
            (ExtReal::Finite(l), ExtReal::Finite(r)) if r > 0.0 => Some(l / r),
            _ => None,
        };
        DistanceEstimate {
            side,
            x: xs.point(xi).to_vec(),
            p: ps.point(pi).to_vec(),
            c: self.c,
            gamma: self.gamma,
            lhs,
            rhs,
            holds: le_slack(lhs, rhs),
            ratio,
            hypothesis: None,
        }
    }

    /// Checks the estimate at every grid pair of B(x̄, α) × B(p̄, β).
    pub fn sweep_estimate(&self, side: Side) -> Result<EstimateSweep> {
        let hypothesis = self.openness_hypothesis(side)?;
        let xs = self.h.source().ball_indices(&self.xbar, self.alpha, BallKind::Open);
        let ps = self.h.params().ball_indices(&self.pbar, self.beta, BallKind::Open);
        let pairs: Vec<(usize, usize)> = xs.iter().flat_map(|&x| ps.iter().map(move |&p| (x, p))).collect();
        let all: Vec<DistanceEstimate> = pairs.par_iter().map(|&(x, p)| self.estimate_idx(side, x, p)).collect();
        let violations: Vec<DistanceEstimate> = all.iter().filter(|e| !e.holds).cloned().collect();
        let max_ratio = all.iter().filter_map(|e| e.ratio).fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
        Ok(EstimateSweep { side, checked: all.len(), max_ratio, violations, hypothesis })
    }

    /// lip S(p̄, x̄) ≤ c⁻¹·`lip_p`, with `lip_p` a validated Lipschitz constant
    /// of H in p uniformly in x.
    pub fn bound_lip(&self, lip_p: f64) -> Result<SolutionBound> {
        self.bound(Side::Solution, lip_p)
    }

    /// reg S(p̄, x̄) ≤ c⁻¹·`lip_x`, with `lip_x` a validated Lipschitz constant
    /// of H in x uniformly in p and `c` the openness in p.
    pub fn bound_reg(&self, lip_x: f64) -> Result<SolutionBound> {
        self.bound(Side::Parameter, lip_x)
    }

    fn bound(&self, side: Side, constant: f64) -> Result<SolutionBound> {
        if !(constant >= 0.0 && constant.is_finite()) {
            return Err(Error::InvalidArgument(format!("Lipschitz constant must be finite and nonnegative, got {constant}")));
        }
        let hypotheses = vec![self.openness_hypothesis(side)?, self.lipschitz_hypothesis(side, constant)?];
        let bound = constant / self.c;
        let s_cfg = NeighborhoodConfig::new(self.beta, self.alpha, self.cfg.epsilon, self.cfg.rho_grid.clone())?
            .with_resolution(self.cfg.resolution)?;
        let swept = match side {
            Side::Solution => estimate_lip_around(&self.solution, &self.pbar, &self.xbar, &s_cfg)?,
            Side::Parameter => estimate_reg_around(&self.solution, &self.pbar, &self.xbar, &s_cfg)?,
        };
        let consistent = le_slack(swept.lo(), ExtReal::Finite(bound + 2.0 * self.cfg.resolution));
        Ok(SolutionBound { side, c: self.c, constant, bound, hypotheses, swept, consistent })
    }
}

pub(crate) fn require(h: HypothesisResult) -> Result<HypothesisResult> {
    if h.passed {
        return Ok(h);
    }
    Err(Error::Refuted {
        name: h.name.clone(),
        constant: h.constant.unwrap_or(f64::NAN),
        report: Box::new(h.report.clone().expect("estimated hypotheses carry a report")),
        witness: Box::new(h.witness.clone().expect("failed hypotheses carry a witness")),
    })
}

/// One evaluation of a distance estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    pub side: Side,
    pub x: Point,
    pub p: Point,
    pub c: f64,
    pub gamma: f64,
    /// d(x, S(p)) or d(p, S⁻¹(x)).
    pub lhs: ExtReal,
    /// c⁻¹ d(0, H(x, p) ∩ B(0, γ)); +∞ when the intersection is empty.
    pub rhs: ExtReal,
    pub holds: bool,
    /// lhs / rhs when both are finite and rhs > 0.
    pub ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hypothesis: Option<HypothesisResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSweep {
    pub side: Side,
    pub checked: usize,
    pub max_ratio: Option<f64>,
    pub violations: Vec<DistanceEstimate>,
    pub hypothesis: HypothesisResult,
}

/// A derived bound on lip S or reg S with the swept value of S for
/// comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionBound {
    pub side: Side,
    pub c: f64,
    pub constant: f64,
    pub bound: f64,
    pub hypotheses: Vec<HypothesisResult>,
    /// lip S (solution side) or reg S (parameter side) estimated around
    /// (p̄, x̄) on B(p̄, β) × B(x̄, α).
    pub swept: ModulusReport,
    /// The swept bracket does not exceed the bound: lo ≤ bound + 2·resolution.
    pub consistent: bool,
}

#[cfg(test)]
mod tests;
