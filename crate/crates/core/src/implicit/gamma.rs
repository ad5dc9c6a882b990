//! Γ(z, w) = {y : w ∈ G(y, z)} for G: Y × Z ⇉ W, and its Lipschitz
//! estimate
//!
//! Γ(z, w) ∩ D(ȳ, γ) ⊆ Γ(z′, w′) + ((1 + δ)/C)(D‖z − z′‖ + ‖w − w′‖)𝔻
//!
//! when G is Lipschitz-like in z (constant D) and open in y (rate C), both
//! uniformly in the other variable.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::require;
use crate::composition::{hyp_partial, ConditionResult, HypothesisResult, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::metric::{BallKind, ExtReal, Point, PointSet, BOUNDARY_SLACK};
use crate::moduli::{ModulusKind, NeighborhoodConfig};
use crate::setvalued::BiMultiMap;

/// Γ(z, w) as a subset of Y.
pub fn gamma_map(g: &BiMultiMap, z: &[f64], w: &[f64]) -> Result<PointSet> {
    let (zi, wi) = (g.right().require(z)?, g.target().require(w)?);
    PointSet::from_indices(g.left(), gamma_idx(g, zi, wi))
}

fn gamma_idx(g: &BiMultiMap, zi: usize, wi: usize) -> impl Iterator<Item = usize> + '_ {
    (0..g.left().len()).filter(move |&y| g.value(y, zi).binary_search(&wi).is_ok())
}

/// G with its reference triple (ȳ, z̄, w̄) and the constants of the
/// estimate. `cfg` gives the hypothesis neighborhoods: `radius_u` on Y,
/// `radius_w` on Z, `radius_v` on W.
#[derive(Debug, Clone)]
pub struct GammaInstance {
    g: BiMultiMap,
    ybar: Point,
    zbar: Point,
    wbar: Point,
    pub c: f64,
    pub d: f64,
    pub gamma: f64,
    pub delta: f64,
    cfg: NeighborhoodConfig,
    hypotheses: OnceLock<Result<Vec<HypothesisResult>>>,
}

impl GammaInstance {
    /// `delta` defaults to [`DEFAULT_DELTA`]; `gamma` to the smallest
    /// configured radius.
    pub fn new(g: BiMultiMap, anchor: [&[f64]; 3], c: f64, d: f64, cfg: NeighborhoodConfig) -> Result<GammaInstance> {
        cfg.validate()?;
        if !(c > 0.0 && c.is_finite()) || !(d >= 0.0 && d.is_finite()) {
            return Err(Error::InvalidArgument(format!("need C > 0 and D ≥ 0, got C = {c}, D = {d}")));
        }
        let [yb, zb, wb] = anchor;
        let (yi, zi, wi) = (g.left().require(yb)?, g.right().require(zb)?, g.target().require(wb)?);
        if g.value(yi, zi).binary_search(&wi).is_err() {
            return Err(Error::Precondition(format!("{wb:?} ∉ G({yb:?}, {zb:?})")));
        }
        Ok(GammaInstance {
            gamma: cfg.radius_u.min(cfg.radius_v).min(cfg.radius_w()),
            g,
            ybar: yb.to_vec(),
            zbar: zb.to_vec(),
            wbar: wb.to_vec(),
            c,
            d,
            delta: DEFAULT_DELTA,
            cfg,
            hypotheses: OnceLock::new(),
        })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<GammaInstance> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!("γ must be positive, got {gamma}")));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<GammaInstance> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!("δ must be positive, got {delta}")));
        }
        self.delta = delta;
        Ok(self)
    }

    pub fn map(&self) -> &BiMultiMap {
        &self.g
    }

    /// G Lipschitz-like in z with constant D and open in y at rate C,
    /// validated once.
    pub fn hypotheses(&self) -> Result<Vec<HypothesisResult>> {
        self.hypotheses
            .get_or_init(|| {
                let p = self.g.as_param();
                let (y, z, w, cfg) = (&self.ybar, &self.zbar, &self.wbar, &self.cfg);
                Ok(vec![
                    require(hyp_partial("g_lipschitz_in_z", p, ModulusKind::LipP, y, z, w, cfg, self.d)?)?,
                    require(hyp_partial("g_open_in_y", p, ModulusKind::LopX, y, z, w, cfg, self.c)?)?,
                ])
            })
            .clone()
    }

    fn in_box(&self, zi: usize, wi: usize) -> bool {
        let (zs, ws) = (self.g.right(), self.g.target());
        BallKind::Closed.contains(zs.dist(zs.point(zi), &self.zbar), self.gamma)
            && BallKind::Closed.contains(ws.dist(ws.point(wi), &self.wbar), self.gamma)
    }

    /// Checks the inclusion for one pair of parameters, both in
    /// D(z̄, γ) × D(w̄, γ).
    pub fn verify(&self, zw: (&[f64], &[f64]), zw2: (&[f64], &[f64])) -> Result<GammaCheck> {
        self.hypotheses()?;
        let (zs, ws) = (self.g.right(), self.g.target());
        let a = (zs.require(zw.0)?, ws.require(zw.1)?);
        let b = (zs.require(zw2.0)?, ws.require(zw2.1)?);
        for (zi, wi) in [a, b] {
            if !self.in_box(zi, wi) {
                return Err(Error::Precondition(format!(
                    "({:?}, {:?}) is outside D(z̄, γ) × D(w̄, γ) with γ = {}",
                    zs.point(zi),
                    ws.point(wi),
                    self.gamma
                )));
            }
        }
        Ok(self.check_idx(a, b))
    }

    fn check_idx(&self, (zi, wi): (usize, usize), (zj, wj): (usize, usize)) -> GammaCheck {
        let (ys, zs, ws) = (self.g.left(), self.g.right(), self.g.target());
        let radius = (1.0 + self.delta) / self.c * (self.d * zs.dist_idx(zi, zj) + ws.dist_idx(wi, wj));
        let other: Vec<usize> = gamma_idx(&self.g, zj, wj).collect();
        let defect = gamma_idx(&self.g, zi, wi)
            .filter(|&y| BallKind::Closed.contains(ys.dist(ys.point(y), &self.ybar), self.gamma))
            .map(|y| {
                let d = other.iter().map(|&k| ys.dist_idx(y, k)).fold(f64::INFINITY, f64::min);
                if d <= radius + BOUNDARY_SLACK {
                    ExtReal::ZERO
                } else {
                    ExtReal::from_f64(d - radius)
                }
            })
            .fold(ExtReal::ZERO, ExtReal::max);
        GammaCheck {
            z: zs.point(zi).to_vec(),
            w: ws.point(wi).to_vec(),
            z2: zs.point(zj).to_vec(),
            w2: ws.point(wj).to_vec(),
            radius,
            defect,
        }
    }

    /// Checks the inclusion over every pair of grid parameters in the
    /// closed γ-boxes, and the Lipschitz property of (y, (z, w)) ↦ G(y, z) − w
    /// in (z, w) that the estimate rests on.
    pub fn sweep(&self) -> Result<GammaSweep> {
        let hypotheses = self.hypotheses()?;
        let zb = self.g.right().ball_indices(&self.zbar, self.gamma, BallKind::Closed);
        let wb = self.g.target().ball_indices(&self.wbar, self.gamma, BallKind::Closed);
        let params: Vec<(usize, usize)> = zb.iter().flat_map(|&z| wb.iter().map(move |&w| (z, w))).collect();
        let checks: Vec<GammaCheck> = params
            .par_iter()
            .flat_map_iter(|&a| params.iter().map(move |&b| (a, b)))
            .map(|(a, b)| self.check_idx(a, b))
            .collect();
        let worst = checks.iter().filter(|c| c.defect > ExtReal::ZERO).fold(None::<&GammaCheck>, |m, c| match m {
            Some(m) if m.defect >= c.defect => Some(m),
            _ => Some(c),
        });
        Ok(GammaSweep {
            delta: self.delta,
            gamma: self.gamma,
            checked: checks.len(),
            max_defect: worst.map_or(ExtReal::ZERO, |c| c.defect),
            worst: worst.cloned(),
            hypotheses,
            parameter_lipschitz: self.parameter_lipschitz(),
        })
    }

    /// G(y, z) − w ∩ B(0, r_v) ⊆ G(y, z′) − w′ + (D‖z − z′‖ + ‖w − w′‖)𝔻 for
    /// y ∈ B(ȳ, r_u) and z, z′ ∈ B(z̄, r_w), w, w′ ∈ B(w̄, r_w).
    pub fn parameter_lipschitz(&self) -> ConditionResult {
        let (ys, zs, ws) = (self.g.left(), self.g.right(), self.g.target());
        let r = self.cfg.radius_w();
        let yb = ys.ball_indices(&self.ybar, self.cfg.radius_u, BallKind::Open);
        let zb = zs.ball_indices(&self.zbar, r, BallKind::Open);
        let wb = ws.ball_indices(&self.wbar, r, BallKind::Open);
        let witness = yb.par_iter().find_map_first(|&y| {
            for &z in &zb {
                for &w in &wb {
                    let wp = ws.point(w);
                    for &gi in self.g.value(y, z) {
                        let v: Point = ws.point(gi).iter().zip(wp).map(|(a, b)| a - b).collect();
                        if !BallKind::Open.contains(ws.norm().eval(&v), self.cfg.radius_v) {
                            continue;
                        }
                        for &z2 in &zb {
                            for &w2 in &wb {
                                let bound = self.d * zs.dist_idx(z, z2) + ws.dist_idx(w, w2);
                                let shifted: Point = v.iter().zip(ws.point(w2)).map(|(a, b)| a + b).collect();
                                let d = self.g.value(y, z2).iter().map(|&k| ws.dist(&shifted, ws.point(k))).fold(f64::INFINITY, f64::min);
                                if d > bound + BOUNDARY_SLACK {
                                    return Some(vec![
                                        ys.point(y).to_vec(),
                                        zs.point(z).to_vec(),
                                        wp.to_vec(),
                                        zs.point(z2).to_vec(),
                                        ws.point(w2).to_vec(),
                                        v,
                                    ]);
                                }
                            }
                        }
                    }
                }
            }
            None
        });
        ConditionResult { name: "shifted_map_lipschitz_in_parameters".into(), holds: witness.is_none(), witness }
    }
}

/// One inclusion check; `defect` is the excess of the left side over the
/// dilated right side, zero when the inclusion holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaCheck {
    pub z: Point,
    pub w: Point,
    pub z2: Point,
    pub w2: Point,
    pub radius: f64,
    pub defect: ExtReal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSweep {
    pub delta: f64,
    pub gamma: f64,
    pub checked: usize,
    pub max_defect: ExtReal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worst: Option<GammaCheck>,
    pub hypotheses: Vec<HypothesisResult>,
    /// Witness tuple order: y, z, w, z′, w′, v.
    pub parameter_lipschitz: ConditionResult,
}
