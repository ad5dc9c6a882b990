//! Coincidence points S = {x : F₁(x) ∩ F₂(x) ≠ ∅} = Fix(F₁⁻¹F₂) and the
//! distance bound
//!
//! d(x, S) ≤ (l⁻¹ − m)⁻¹ d(F₁(x) ∩ B(ȳ, β), F₂(x)),  x ∈ B(x̄, α),
//!
//! for F₁ metrically regular with constant l and F₂ Lipschitz-like with
//! constant m, lm < 1.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::composition::{hyp_plain, HypothesisResult};
use crate::error::{Error, Result};
use crate::implicit::le_slack;
use crate::metric::{BallKind, ExtReal, Point, PointSet, SpaceRef};
use crate::moduli::{ModulusKind, NeighborhoodConfig};
use crate::setvalued::{difference_on, same_space, MultiMap, ParamMultiMap};

fn intersects(a: &[usize], b: &[usize]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

fn require_chain(f1_source: &SpaceRef, f1_target: &SpaceRef, f2: &MultiMap) -> Result<()> {
    if !same_space(f1_source, f2.source()) || !same_space(f1_target, f2.target()) {
        return Err(Error::SpaceMismatch("F₁ and F₂ must share source and target grids".into()));
    }
    Ok(())
}

/// All x with F₁(x) ∩ F₂(x) ≠ ∅.
pub fn fix_set(f1: &MultiMap, f2: &MultiMap) -> Result<PointSet> {
    require_chain(f1.source(), f1.target(), f2)?;
    let idx = (0..f1.source().len()).filter(|&x| intersects(f1.row(x), f2.row(x)));
    PointSet::from_indices(f1.source(), idx)
}

/// S(p) = {x : F₁(x, p) ∩ F₂(x) ≠ ∅} as a map P ⇉ X.
pub fn parametric_fix(f1: &ParamMultiMap, f2: &MultiMap) -> Result<MultiMap> {
    require_chain(f1.source(), f1.target(), f2)?;
    let pairs: Vec<(usize, usize)> = (0..f1.params().len())
        .flat_map(|p| (0..f1.source().len()).filter(move |&x| intersects(f1.row(x, p), f2.row(x))).map(move |x| (p, x)))
        .collect();
    MultiMap::from_index_pairs(f1.params(), f1.source(), pairs)
}

/// One of the sufficient inequalities the existence proof places on α and β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofConstraint {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// F₁, F₂: X ⇉ Y with a common value ȳ ∈ F₁(x̄) ∩ F₂(x̄).
///
/// `cfg` gives the neighborhoods for validating l (regularity of F₁) and m
/// (Lipschitz-like constant of F₂), and the ε used by the proof
/// constraints. `diff` is the grid for F₁ − F₂; it defaults to Y.
#[derive(Debug, Clone)]
pub struct CoincidenceInstance {
    f1: MultiMap,
    f2: MultiMap,
    xbar: Point,
    ybar: Point,
    pub l: f64,
    pub m: f64,
    pub alpha: f64,
    pub beta: f64,
    cfg: NeighborhoodConfig,
    diff: SpaceRef,
    fix: PointSet,
}

impl CoincidenceInstance {
    /// α and β default to 0.9 times the largest values the proof
    /// constraints allow for `cfg.epsilon`.
    pub fn new(f1: MultiMap, f2: MultiMap, xbar: &[f64], ybar: &[f64], l: f64, m: f64, cfg: NeighborhoodConfig) -> Result<CoincidenceInstance> {
        require_chain(f1.source(), f1.target(), &f2)?;
        cfg.validate()?;
        if !(l > 0.0 && m > 0.0 && l.is_finite() && m.is_finite()) {
            return Err(Error::InvalidArgument(format!("need l, m > 0, got l = {l}, m = {m}")));
        }
        if l * m >= 1.0 {
            return Err(Error::Precondition(format!("lm = {} must be < 1", l * m)));
        }
        let (xi, yi) = (f1.source().require(xbar)?, f1.target().require(ybar)?);
        if !f1.contains_pair(xi, yi) || !f2.contains_pair(xi, yi) {
            return Err(Error::Precondition(format!("{ybar:?} is not in F₁({xbar:?}) ∩ F₂({xbar:?})")));
        }
        let eps = cfg.epsilon;
        let beta = 0.9 * (eps / 3.0).min(eps * (1.0 / l - m) / 2.0);
        let alpha = 0.9 * m.min(eps).min(beta / m);
        let fix = fix_set(&f1, &f2)?;
        Ok(CoincidenceInstance {
            diff: f1.target().clone(),
            xbar: xbar.to_vec(),
            ybar: ybar.to_vec(),
            f1,
            f2,
            l,
            m,
            alpha,
            beta,
            cfg,
            fix,
        })
    }

    pub fn with_radii(mut self, alpha: f64, beta: f64) -> Result<CoincidenceInstance> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("radii must be positive, got α = {alpha}, β = {beta}")));
        }
        self.alpha = alpha;
        self.beta = beta;
        Ok(self)
    }

    pub fn with_difference_grid(mut self, diff: &SpaceRef) -> Result<CoincidenceInstance> {
        if diff.index_of_zero().is_none() {
            return Err(Error::Precondition(format!("0 is not on difference grid `{}`", diff.label())));
        }
        difference_on(&self.f1, &self.f2, diff)?;
        self.diff = diff.clone();
        Ok(self)
    }

    pub fn fix_set(&self) -> &PointSet {
        &self.fix
    }

    /// (l⁻¹ − m)⁻¹.
    pub fn factor(&self) -> f64 {
        1.0 / (1.0 / self.l - self.m)
    }

    /// l against the regularity bracket of F₁ and m against the Lipschitz
    /// bracket of F₂, both around (x̄, ȳ).
    pub fn hypotheses(&self) -> Result<Vec<HypothesisResult>> {
        let (x, y, cfg) = (&self.xbar, &self.ybar, &self.cfg);
        let hyps = vec![
            hyp_plain("f1_metrically_regular", &self.f1, ModulusKind::Reg, x, y, cfg, self.l)?,
            hyp_plain("f2_lipschitz_like", &self.f2, ModulusKind::Lip, x, y, cfg, self.m)?,
        ];
        hyps.into_iter().map(crate::implicit::require).collect()
    }

    /// α < m, α < ε, mα < β, 3β < ε, 2(l⁻¹ − m)⁻¹β < ε.
    pub fn proof_constraints(&self) -> Vec<ProofConstraint> {
        let (a, b, m, eps) = (self.alpha, self.beta, self.m, self.cfg.epsilon);
        [
            ("alpha_below_m", a, m),
            ("alpha_below_epsilon", a, eps),
            ("m_alpha_below_beta", m * a, b),
            ("three_beta_below_epsilon", 3.0 * b, eps),
            ("scaled_beta_below_epsilon", 2.0 * self.factor() * b, eps),
        ]
        .into_iter()
        .map(|(name, lhs, rhs)| ProofConstraint { name: name.into(), lhs, rhs, holds: lhs < rhs })
        .collect()
    }

    /// The constraint with the least relative room, rhs/lhs.
    pub fn binding_constraint(&self) -> String {
        self.proof_constraints()
            .into_iter()
            .min_by(|p, q| (p.rhs / p.lhs).total_cmp(&(q.rhs / q.lhs)))
            .map(|p| p.name)
            .unwrap_or_default()
    }

    fn in_region(&self, xi: usize) -> bool {
        let xs = self.f1.source();
        BallKind::Open.contains(xs.dist(xs.point(xi), &self.xbar), self.alpha)
    }

    fn region_index(&self, x: &[f64]) -> Result<usize> {
        let xi = self.f1.source().require(x)?;
        if !self.in_region(xi) {
            return Err(Error::Precondition(format!("{x:?} is outside B(x̄, {})", self.alpha)));
        }
        Ok(xi)
    }

    fn lhs(&self, xi: usize) -> ExtReal {
        let xs = self.f1.source();
        self.fix.indices().iter().map(|&k| ExtReal::Finite(xs.dist_idx(xi, k))).fold(ExtReal::Infinite, ExtReal::min)
    }

    fn row(&self, xi: usize, residual: ExtReal) -> FixpointCheck {
        let lhs = self.lhs(xi);
        let rhs = residual.scale(self.factor());
        FixpointCheck {
            x: self.f1.source().point(xi).to_vec(),
            lhs,
            rhs,
            ratio: match (lhs, rhs) {
                (ExtReal::Finite(l), ExtReal::Finite(r)) if r > 0.0 => Some(l / r),
                _ => None,
            },
            holds: le_slack(lhs, rhs),
        }
    }

    /// d(F₁(x) ∩ B(ȳ, β), F₂(x)) as the infimum over pairs.
    fn primary_residual(&self, xi: usize) -> ExtReal {
        let ys = self.f1.target();
        self.f1
            .row(xi)
            .iter()
            .filter(|&&a| BallKind::Open.contains(ys.dist(ys.point(a), &self.ybar), self.beta))
            .flat_map(|&a| self.f2.row(xi).iter().map(move |&b| ExtReal::Finite(ys.dist_idx(a, b))))
            .fold(ExtReal::Infinite, ExtReal::min)
    }

    /// d(0, (F₁ − F₂)(x) ∩ B(0, β)) on the difference grid.
    fn alt_residual(&self, diff: &MultiMap, xi: usize) -> ExtReal {
        let ds = diff.target();
        let zero = vec![0.0; ds.dim()];
        diff.row(xi)
            .iter()
            .map(|&j| ds.dist(ds.point(j), &zero))
            .filter(|&d| BallKind::Open.contains(d, self.beta))
            .map(ExtReal::Finite)
            .fold(ExtReal::Infinite, ExtReal::min)
    }

    fn difference_map(&self) -> Result<MultiMap> {
        if self.diff.index_of_zero().is_none() {
            return Err(Error::Precondition(format!("0 is not on difference grid `{}`", self.diff.label())));
        }
        difference_on(&self.f1, &self.f2, &self.diff)
    }

    /// The bound at one x ∈ B(x̄, α).
    pub fn verify(&self, x: &[f64]) -> Result<FixpointCheck> {
        self.hypotheses()?;
        let xi = self.region_index(x)?;
        Ok(self.row(xi, self.primary_residual(xi)))
    }

    /// The bound with d(0, (F₁ − F₂)(x) ∩ B(0, β)) on the right, next to
    /// the first form's right side at the same x.
    pub fn verify_alt(&self, x: &[f64]) -> Result<AltFixpointCheck> {
        self.hypotheses()?;
        let xi = self.region_index(x)?;
        let diff = self.difference_map()?;
        Ok(AltFixpointCheck {
            check: self.row(xi, self.alt_residual(&diff, xi)),
            primary_rhs: self.primary_residual(xi).scale(self.factor()),
        })
    }

    /// Both bounds at every grid point of B(x̄, α).
    pub fn sweep(&self) -> Result<FixpointReport> {
        let hypotheses = self.hypotheses()?;
        let diff = self.difference_map()?;
        let xs: Vec<usize> = self.f1.source().ball_indices(&self.xbar, self.alpha, BallKind::Open);
        let rows: Vec<FixpointCheck> = xs.par_iter().map(|&xi| self.row(xi, self.primary_residual(xi))).collect();
        let alt_rows: Vec<FixpointCheck> = xs.par_iter().map(|&xi| self.row(xi, self.alt_residual(&diff, xi))).collect();
        let violations = rows.iter().chain(&alt_rows).filter(|r| !r.holds).count();
        Ok(FixpointReport {
            xbar: self.xbar.clone(),
            ybar: self.ybar.clone(),
            l: self.l,
            m: self.m,
            alpha: self.alpha,
            beta: self.beta,
            factor: self.factor(),
            hypotheses,
            proof_constraints: self.proof_constraints(),
            binding_constraint: self.binding_constraint(),
            fix_set: self.fix.to_points(),
            rows,
            alt_rows,
            violations,
        })
    }
}

/// One row of the bound: lhs = d(x, S), rhs = (l⁻¹ − m)⁻¹ times the
/// residual (+∞ when the residual set is empty).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixpointCheck {
    pub x: Point,
    pub lhs: ExtReal,
    pub rhs: ExtReal,
    pub ratio: Option<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AltFixpointCheck {
    pub check: FixpointCheck,
    pub primary_rhs: ExtReal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixpointReport {
    pub xbar: Point,
    pub ybar: Point,
    pub l: f64,
    pub m: f64,
    pub alpha: f64,
    pub beta: f64,
    pub factor: f64,
    pub hypotheses: Vec<HypothesisResult>,
    pub proof_constraints: Vec<ProofConstraint>,
    pub binding_constraint: String,
    pub fix_set: Vec<Point>,
    /// Set-distance form, one row per swept x.
    pub rows: Vec<FixpointCheck>,
    /// Difference-map form on the same x.
    pub alt_rows: Vec<FixpointCheck>,
    pub violations: usize,
}
