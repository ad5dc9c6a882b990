//! Finite sampled normed spaces.
//!
//! A [`GridSpace`] is an explicit list of points in ℝⁿ together with a norm.
//! Every quantifier in the toolkit ranges over such a list, so all infima are
//! attained and all sweeps terminate.
//!
//! Ball membership treats distances within [`BOUNDARY_SLACK`] of the radius
//! as lying *on* the sphere: open balls exclude them, closed balls include
//! them. Grid coordinates such as `0.3` are not representable exactly, and
//! without a symmetric boundary band `0.3 - 0.2 < 0.1` would put a point that
//! is analytically on the sphere inside the open ball.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the band around a sphere treated as the boundary.
pub const BOUNDARY_SLACK: f64 = 1e-12;

/// Tolerance used when snapping a computed vector onto a grid point.
pub const SNAP_TOLERANCE: f64 = 1e-9;

const DUPLICATE_TOLERANCE: f64 = 1e-12;

pub type Point = Vec<f64>;

/// Shared handle to a grid; maps and point sets refer to grids by handle.
pub type SpaceRef = Arc<GridSpace>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    /// ℓ¹
    Sum,
    /// ℓ∞
    Max,
    /// ℓ²
    Euclidean,
    /// Sum of the block norms of consecutive coordinate blocks.
    Product(Vec<Block>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub dim: usize,
    pub norm: Norm,
}

impl Norm {
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Norm::Sum => v.iter().map(|c| c.abs()).sum(),
            Norm::Max => v.iter().fold(0.0, |m, c| m.max(c.abs())),
            Norm::Euclidean => v.iter().map(|c| c * c).sum::<f64>().sqrt(),
            Norm::Product(blocks) => {
                let mut offset = 0;
                let mut total = 0.0;
                for b in blocks {
                    total += b.norm.eval(&v[offset..offset + b.dim]);
                    offset += b.dim;
                }
                total
            }
        }
    }

    /// ‖a − b‖ without allocating.
    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Norm::Sum => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Norm::Max => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
            Norm::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Norm::Product(blocks) => {
                let mut offset = 0;
                let mut total = 0.0;
                for blk in blocks {
                    let r = offset..offset + blk.dim;
                    total += blk.norm.dist(&a[r.clone()], &b[r]);
                    offset += blk.dim;
                }
                total
            }
        }
    }
}

/// Nonnegative extended real: a finite value or +∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal {
    Finite(f64),
    Infinite,
}

impl ExtReal {
    pub const ZERO: ExtReal = ExtReal::Finite(0.0);

    pub fn from_f64(v: f64) -> ExtReal {
        if v.is_infinite() {
            ExtReal::Infinite
        } else {
            ExtReal::Finite(v)
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn is_infinite(&self) -> bool {
        !self.is_finite()
    }

    /// The value as an `f64`, with +∞ mapped to `f64::INFINITY`.
    pub fn value(&self) -> f64 {
        match self {
            ExtReal::Finite(v) => *v,
            ExtReal::Infinite => f64::INFINITY,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            ExtReal::Finite(v) => Some(*v),
            ExtReal::Infinite => None,
        }
    }

    pub fn min(self, other: ExtReal) -> ExtReal {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: ExtReal) -> ExtReal {
        if self >= other {
            self
        } else {
            other
        }
    }

    /// Multiplication by a nonnegative finite scalar; 0·∞ is taken as ∞.
    pub fn scale(self, k: f64) -> ExtReal {
        match self {
            ExtReal::Finite(v) => ExtReal::Finite(v * k),
            ExtReal::Infinite => ExtReal::Infinite,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value().partial_cmp(&other.value())
    }
}

impl From<f64> for ExtReal {
    fn from(v: f64) -> Self {
        ExtReal::from_f64(v)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::Infinite => write!(f, "inf"),
        }
    }
}

impl Serialize for ExtReal {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtReal::Finite(v) => s.serialize_f64(*v),
            ExtReal::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtReal {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(ExtReal::Finite(v)),
            Repr::Str(s) if s == "inf" => Ok(ExtReal::Infinite),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallKind {
    Open,
    Closed,
}

impl BallKind {
    #[inline]
    pub fn contains(self, dist: f64, radius: f64) -> bool {
        match self {
            BallKind::Open => dist < radius - BOUNDARY_SLACK,
            BallKind::Closed => dist <= radius + BOUNDARY_SLACK,
        }
    }
}

/// A finite sample of a normed space.
#[derive(Debug, Clone)]
pub struct GridSpace {
    label: String,
    dim: usize,
    norm: Norm,
    points: Vec<Point>,
    lookup: HashMap<Vec<i64>, usize>,
}

impl PartialEq for GridSpace {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.norm == other.norm && self.points == other.points
    }
}

fn clean(v: f64) -> f64 {
    let r = (v * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn lookup_key(p: &[f64]) -> Vec<i64> {
    p.iter().map(|c| (c * 1e7).round() as i64).collect()
}

impl GridSpace {
    pub fn new(label: impl Into<String>, points: Vec<Point>, norm: Norm) -> Result<GridSpace> {
        let label = label.into();
        let dim = points
            .first()
            .map(|p| p.len())
            .ok_or_else(|| Error::Empty(format!("grid `{label}` has no points")))?;
        if dim == 0 {
            return Err(Error::InvalidArgument(format!("grid `{label}` has zero-dimensional points")));
        }
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
        }
        if let Norm::Product(blocks) = &norm {
            let total: usize = blocks.iter().map(|b| b.dim).sum();
            if total != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: total });
            }
        }
        let mut lookup = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if let Some(&j) = lookup.get(&lookup_key(p)) {
                return Err(Error::DuplicatePoint { space: label, first: j, second: i });
            }
            lookup.insert(lookup_key(p), i);
        }
        let space = GridSpace { label, dim, norm, points, lookup };
        // Keys catch exact repeats; near-duplicates straddling a key boundary need the scan.
        let n = if space.points.len() <= 4096 { space.points.len() } else { 0 };
        for i in 0..n {
            for j in (i + 1)..n {
                if max_abs_diff(&space.points[i], &space.points[j]) <= DUPLICATE_TOLERANCE {
                    return Err(Error::DuplicatePoint { space: space.label, first: i, second: j });
                }
            }
        }
        Ok(space)
    }

    /// Regular lattice: the Cartesian product of `start, start+step, …, ≤ stop`
    /// along every axis. Coordinates are rounded to 12 decimals.
    pub fn lattice(label: impl Into<String>, axes: &[(f64, f64, f64)], norm: Norm) -> Result<GridSpace> {
        if axes.is_empty() {
            return Err(Error::Empty("lattice needs at least one axis".into()));
        }
        let mut coords: Vec<Vec<f64>> = Vec::with_capacity(axes.len());
        for &(start, stop, step) in axes {
            if step.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || stop < start {
                return Err(Error::InvalidArgument(format!(
                    "bad axis (start {start}, stop {stop}, step {step})"
                )));
            }
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            coords.push((0..=n).map(|i| clean(start + i as f64 * step)).collect());
        }
        let mut points: Vec<Point> = vec![vec![]];
        for axis in &coords {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&c| {
                        let mut q = p.clone();
                        q.push(c);
                        q
                    })
                })
                .collect();
        }
        GridSpace::new(label, points, norm)
    }

    /// One-dimensional regular grid on `[start, stop]`.
    pub fn line(label: impl Into<String>, start: f64, stop: f64, step: f64) -> Result<GridSpace> {
        GridSpace::lattice(label, &[(start, stop, step)], Norm::Sum)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn norm(&self) -> &Norm {
        &self.norm
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn check_dim(&self, p: &[f64]) -> Result<()> {
        if p.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, found: p.len() })
        }
    }

    /// Index of the grid point within [`SNAP_TOLERANCE`] of `p` (max-abs).
    pub fn index_of(&self, p: &[f64]) -> Option<usize> {
        if p.len() != self.dim {
            return None;
        }
        if let Some(&i) = self.lookup.get(&lookup_key(p)) {
            if max_abs_diff(&self.points[i], p) <= SNAP_TOLERANCE {
                return Some(i);
            }
        }
        self.points
            .iter()
            .position(|q| max_abs_diff(q, p) <= SNAP_TOLERANCE)
    }

    /// Like [`index_of`](Self::index_of) but an off-grid point is an error.
    pub fn require(&self, p: &[f64]) -> Result<usize> {
        self.check_dim(p)?;
        self.index_of(p).ok_or_else(|| Error::OffGrid { space: self.label.clone(), point: p.to_vec() })
    }

    pub fn index_of_zero(&self) -> Option<usize> {
        self.index_of(&vec![0.0; self.dim])
    }

    pub fn dist(&self, a: &[f64], b: &[f64]) -> f64 {
        self.norm.dist(a, b)
    }

    pub fn dist_idx(&self, i: usize, j: usize) -> f64 {
        self.norm.dist(&self.points[i], &self.points[j])
    }

    /// Largest distance between two grid points.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                d = d.max(self.dist_idx(i, j));
            }
        }
        d
    }

    /// Indices of grid points in the ball, without allocating a [`PointSet`].
    pub fn ball_indices(&self, center: &[f64], radius: f64, kind: BallKind) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| kind.contains(self.norm.dist(&self.points[i], center), radius))
            .collect()
    }

    /// Checks positivity and the triangle inequality on every triple of
    /// grid-point differences. Returns the first violating triple.
    pub fn verify_norm_axioms(&self) -> std::result::Result<(), (usize, usize, usize)> {
        let zero = vec![0.0; self.dim];
        for i in 0..self.len() {
            for j in 0..self.len() {
                let dij = self.dist_idx(i, j);
                if dij < 0.0 || (i != j && dij == 0.0) {
                    return Err((i, j, j));
                }
                for k in 0..self.len() {
                    if dij > self.dist_idx(i, k) + self.dist_idx(k, j) + 1e-12 {
                        return Err((i, j, k));
                    }
                }
            }
            if self.norm.eval(&self.points[i]) < 0.0 || (self.norm.eval(&self.points[i]) == 0.0 && self.points[i] != zero) {
                return Err((i, i, i));
            }
        }
        Ok(())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// A subset of a grid, stored as sorted point indices.
#[derive(Debug, Clone)]
pub struct PointSet {
    space: SpaceRef,
    members: BTreeSet<usize>,
}

impl PartialEq for PointSet {
    fn eq(&self, other: &Self) -> bool {
        self.members == other.members && *self.space == *other.space
    }
}

impl PointSet {
    pub fn empty(space: &SpaceRef) -> PointSet {
        PointSet { space: space.clone(), members: BTreeSet::new() }
    }

    pub fn full(space: &SpaceRef) -> PointSet {
        PointSet { space: space.clone(), members: (0..space.len()).collect() }
    }

    pub fn from_indices(space: &SpaceRef, idx: impl IntoIterator<Item = usize>) -> Result<PointSet> {
        let members: BTreeSet<usize> = idx.into_iter().collect();
        if let Some(&bad) = members.iter().find(|&&i| i >= space.len()) {
            return Err(Error::InvalidArgument(format!(
                "index {bad} out of range for grid `{}` of size {}",
                space.label(),
                space.len()
            )));
        }
        Ok(PointSet { space: space.clone(), members })
    }

    pub fn from_points(space: &SpaceRef, pts: &[Point]) -> Result<PointSet> {
        let idx = pts.iter().map(|p| space.require(p)).collect::<Result<Vec<_>>>()?;
        PointSet::from_indices(space, idx)
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn indices(&self) -> &BTreeSet<usize> {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains_index(&self, i: usize) -> bool {
        self.members.contains(&i)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.space.index_of(p).is_some_and(|i| self.members.contains(&i))
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.members.iter().map(|&i| self.space.point(i))
    }

    pub fn to_points(&self) -> Vec<Point> {
        self.points().map(|p| p.to_vec()).collect()
    }

    pub fn union(&self, other: &PointSet) -> PointSet {
        PointSet { space: self.space.clone(), members: self.members.union(&other.members).copied().collect() }
    }

    pub fn is_subset(&self, other: &PointSet) -> bool {
        self.members.is_subset(&other.members)
    }
}

/// d(x, A) := min over a ∈ A of ‖x − a‖; +∞ for empty A.
pub fn distance_point_set(x: &[f64], a: &PointSet) -> Result<ExtReal> {
    a.space.check_dim(x)?;
    Ok(min_dist(x, a.space.norm(), a.points()))
}

/// Infimum of pairwise distances, in the norm of `a`'s grid.
pub fn distance_set_set(a: &PointSet, b: &PointSet) -> Result<ExtReal> {
    if a.space.dim() != b.space.dim() {
        return Err(Error::DimensionMismatch { expected: a.space.dim(), found: b.space.dim() });
    }
    let norm = a.space.norm();
    Ok(a.points().fold(ExtReal::Infinite, |acc, p| acc.min(min_dist(p, norm, b.points()))))
}

pub(crate) fn min_dist<'a>(x: &[f64], norm: &Norm, set: impl Iterator<Item = &'a [f64]>) -> ExtReal {
    set.fold(ExtReal::Infinite, |acc, p| acc.min(ExtReal::Finite(norm.dist(x, p))))
}

pub fn ball(space: &SpaceRef, center: &[f64], radius: f64, kind: BallKind) -> Result<PointSet> {
    space.check_dim(center)?;
    if radius.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidArgument(format!("ball radius must be positive, got {radius}")));
    }
    Ok(PointSet { space: space.clone(), members: space.ball_indices(center, radius, kind).into_iter().collect() })
}

/// Cartesian product with the sum of the factor norms.
pub fn product_space(factors: &[&GridSpace]) -> Result<GridSpace> {
    if factors.len() < 2 {
        return Err(Error::Empty("a product space needs at least two factors".into()));
    }
    let mut points: Vec<Point> = vec![vec![]];
    for f in factors {
        points = points
            .into_iter()
            .flat_map(|p| {
                f.points().iter().map(move |q| {
                    let mut r = p.clone();
                    r.extend_from_slice(q);
                    r
                })
            })
            .collect();
    }
    let blocks = factors.iter().map(|f| Block { dim: f.dim(), norm: f.norm().clone() }).collect();
    let label = factors.iter().map(|f| f.label()).collect::<Vec<_>>().join("×");
    GridSpace::new(label, points, Norm::Product(blocks))
}

/// max over a ∈ A of d(a, B): zero iff A ⊆ B, zero for empty A.
pub fn inclusion_defect(a: &PointSet, b: &PointSet) -> Result<ExtReal> {
    if a.space.dim() != b.space.dim() {
        return Err(Error::DimensionMismatch { expected: a.space.dim(), found: b.space.dim() });
    }
    let norm = a.space.norm();
    Ok(a.points().fold(ExtReal::ZERO, |acc, p| acc.max(min_dist(p, norm, b.points()))))
}
