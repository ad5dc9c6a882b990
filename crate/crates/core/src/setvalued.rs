//! Multifunctions as explicit finite graphs.
//!
//! A [`MultiMap`] stores its graph row-wise: for every source grid index the
//! sorted list of target indices. The column view (the inverse) is derived at
//! construction, so domain and range are always computed from the graph.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::formula::{Formula, OffGridPolicy};
use crate::metric::{Point, PointSet, SpaceRef, SNAP_TOLERANCE};

pub(crate) fn same_space(a: &SpaceRef, b: &SpaceRef) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

fn require_same(a: &SpaceRef, b: &SpaceRef, what: &str) -> Result<()> {
    if same_space(a, b) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch(format!("{what}: `{}` vs `{}`", a.label(), b.label())))
    }
}

fn rows_from_pairs(n_rows: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Vec<Vec<usize>> {
    let mut sets: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_rows];
    for (i, j) in pairs {
        sets[i].insert(j);
    }
    sets.into_iter().map(|s| s.into_iter().collect()).collect()
}

fn transpose(rows: &[Vec<usize>], n_cols: usize) -> Vec<Vec<usize>> {
    let mut cols = vec![Vec::new(); n_cols];
    for (i, row) in rows.iter().enumerate() {
        for &j in row {
            cols[j].push(i);
        }
    }
    cols
}

/// A set-valued map F: X ⇉ Y with a finite graph.
#[derive(Debug, Clone)]
pub struct MultiMap {
    source: SpaceRef,
    target: SpaceRef,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

impl PartialEq for MultiMap {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && same_space(&self.source, &other.source) && same_space(&self.target, &other.target)
    }
}

impl MultiMap {
    /// Builds a map from graph pairs given as grid indices.
    pub fn from_index_pairs(
        source: &SpaceRef,
        target: &SpaceRef,
        pairs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<MultiMap> {
        let pairs: Vec<(usize, usize)> = pairs.into_iter().collect();
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= source.len() || j >= target.len()) {
            return Err(Error::InvalidArgument(format!("graph pair ({i}, {j}) indexes outside the grids")));
        }
        let rows = rows_from_pairs(source.len(), pairs);
        Ok(MultiMap::from_rows(source, target, rows))
    }

    fn from_rows(source: &SpaceRef, target: &SpaceRef, rows: Vec<Vec<usize>>) -> MultiMap {
        let cols = transpose(&rows, target.len());
        MultiMap { source: source.clone(), target: target.clone(), rows, cols }
    }

    /// Builds a map from graph pairs given as coordinates; every component
    /// must be a grid point.
    pub fn from_pairs(source: &SpaceRef, target: &SpaceRef, pairs: &[(Point, Point)]) -> Result<MultiMap> {
        let idx = pairs
            .iter()
            .map(|(x, y)| Ok((source.require(x)?, target.require(y)?)))
            .collect::<Result<Vec<_>>>()?;
        MultiMap::from_index_pairs(source, target, idx)
    }

    /// Samples a point-to-set rule on every source point. Each returned value
    /// is snapped onto the target grid; off-grid values follow `policy`.
    pub fn from_fn<F>(source: &SpaceRef, target: &SpaceRef, policy: OffGridPolicy, f: F) -> Result<MultiMap>
    where
        F: Fn(&[f64]) -> Result<Vec<Point>>,
    {
        let mut pairs = Vec::new();
        for (i, x) in source.points().iter().enumerate() {
            for y in f(x)? {
                match (target.index_of(&y), policy) {
                    (Some(j), _) => pairs.push((i, j)),
                    (None, OffGridPolicy::Drop) => {}
                    (None, OffGridPolicy::Reject) => {
                        return Err(Error::OffGrid { space: target.label().to_string(), point: y })
                    }
                }
            }
        }
        MultiMap::from_index_pairs(source, target, pairs)
    }

    pub fn identity(space: &SpaceRef) -> MultiMap {
        MultiMap::from_rows(space, space, (0..space.len()).map(|i| vec![i]).collect())
    }

    /// Maps every source point to the same set of target points.
    pub fn constant(source: &SpaceRef, target: &SpaceRef, values: &[Point]) -> Result<MultiMap> {
        let idx = values.iter().map(|v| target.require(v)).collect::<Result<BTreeSet<_>>>()?;
        let row: Vec<usize> = idx.into_iter().collect();
        Ok(MultiMap::from_rows(source, target, vec![row; source.len()]))
    }

    /// Single-valued x ↦ Ax. Images are snapped to the target grid within
    /// [`SNAP_TOLERANCE`]; a source point whose image is off-grid is reported.
    pub fn from_linear(matrix: &[Vec<f64>], source: &SpaceRef, target: &SpaceRef) -> Result<MultiMap> {
        if matrix.len() != target.dim() {
            return Err(Error::DimensionMismatch { expected: target.dim(), found: matrix.len() });
        }
        if let Some(row) = matrix.iter().find(|r| r.len() != source.dim()) {
            return Err(Error::DimensionMismatch { expected: source.dim(), found: row.len() });
        }
        let mut rows = Vec::with_capacity(source.len());
        for x in source.points() {
            let y: Point = matrix.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
            match target.index_of(&y) {
                Some(j) => rows.push(vec![j]),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "linear image {y:?} of source point {x:?} is not within {SNAP_TOLERANCE} of grid `{}`",
                        target.label()
                    )))
                }
            }
        }
        Ok(MultiMap::from_rows(source, target, rows))
    }

    /// Samples a formula (one expression per target coordinate) in the
    /// source variable `x` (coordinates `x1`, `x2`, …).
    pub fn from_formula(source: &SpaceRef, target: &SpaceRef, exprs: &[&str], policy: OffGridPolicy) -> Result<MultiMap> {
        let f = Formula::parse(exprs, &[("x", source.dim())])?;
        if f.outputs() != target.dim() {
            return Err(Error::DimensionMismatch { expected: target.dim(), found: f.outputs() });
        }
        MultiMap::from_fn(source, target, policy, |x| Ok(vec![f.eval(&[x])?]))
    }

    pub fn source(&self) -> &SpaceRef {
        &self.source
    }

    pub fn target(&self) -> &SpaceRef {
        &self.target
    }

    /// Target indices of F(x) for source index `i`.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    /// Source indices of F⁻¹(y) for target index `j`.
    pub fn col(&self, j: usize) -> &[usize] {
        &self.cols[j]
    }

    pub fn contains_pair(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }

    pub fn graph(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().enumerate().flat_map(|(i, r)| r.iter().map(move |&j| (i, j)))
    }

    pub fn graph_len(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn domain(&self) -> PointSet {
        let idx = (0..self.rows.len()).filter(|&i| !self.rows[i].is_empty());
        PointSet::from_indices(&self.source, idx).expect("row index in range")
    }

    pub fn range(&self) -> PointSet {
        let idx = (0..self.cols.len()).filter(|&j| !self.cols[j].is_empty());
        PointSet::from_indices(&self.target, idx).expect("column index in range")
    }

    /// F(x) for a source grid point.
    pub fn image(&self, x: &[f64]) -> Result<PointSet> {
        let i = self.source.require(x)?;
        Ok(self.image_idx(i))
    }

    pub fn image_idx(&self, i: usize) -> PointSet {
        PointSet::from_indices(&self.target, self.rows[i].iter().copied()).expect("row entries in range")
    }

    /// F(A) := ⋃_{x∈A} F(x).
    pub fn image_of_set(&self, a: &PointSet) -> Result<PointSet> {
        require_same(a.space(), &self.source, "image_of_set: set is not on the source grid")?;
        Ok(self.image_of_indices(a.indices().iter().copied()))
    }

    pub(crate) fn image_of_indices(&self, idx: impl IntoIterator<Item = usize>) -> PointSet {
        let mut out = BTreeSet::new();
        for i in idx {
            out.extend(self.rows[i].iter().copied());
        }
        PointSet::from_indices(&self.target, out).expect("row entries in range")
    }

    /// Marks F(A) in a dense membership vector over the target grid.
    pub(crate) fn image_mask(&self, idx: impl IntoIterator<Item = usize>) -> Vec<bool> {
        let mut mask = vec![false; self.target.len()];
        for i in idx {
            for &j in &self.rows[i] {
                mask[j] = true;
            }
        }
        mask
    }

    pub fn inverse(&self) -> MultiMap {
        MultiMap {
            source: self.target.clone(),
            target: self.source.clone(),
            rows: self.cols.clone(),
            cols: self.rows.clone(),
        }
    }

    /// Gr F ∩ [U × V].
    pub fn localize(&self, u: &PointSet, v: &PointSet) -> Result<MultiMap> {
        require_same(u.space(), &self.source, "localize: U is not on the source grid")?;
        require_same(v.space(), &self.target, "localize: V is not on the target grid")?;
        let rows = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                if u.contains_index(i) {
                    r.iter().copied().filter(|&j| v.contains_index(j)).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        Ok(MultiMap::from_rows(&self.source, &self.target, rows))
    }
}

/// A parametric map F: X × P ⇉ Y, stored row-wise over (x, p) index pairs.
#[derive(Debug, Clone)]
pub struct ParamMultiMap {
    source: SpaceRef,
    params: SpaceRef,
    target: SpaceRef,
    rows: Vec<Vec<usize>>,
}

impl ParamMultiMap {
    pub fn from_index_triples(
        source: &SpaceRef,
        params: &SpaceRef,
        target: &SpaceRef,
        triples: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Result<ParamMultiMap> {
        let np = params.len();
        let mut pairs = Vec::new();
        for (i, p, j) in triples {
            if i >= source.len() || p >= np || j >= target.len() {
                return Err(Error::InvalidArgument(format!("graph triple ({i}, {p}, {j}) indexes outside the grids")));
            }
            pairs.push((i * np + p, j));
        }
        Ok(ParamMultiMap {
            source: source.clone(),
            params: params.clone(),
            target: target.clone(),
            rows: rows_from_pairs(source.len() * np, pairs),
        })
    }

    pub fn from_triples(
        source: &SpaceRef,
        params: &SpaceRef,
        target: &SpaceRef,
        triples: &[(Point, Point, Point)],
    ) -> Result<ParamMultiMap> {
        let idx = triples
            .iter()
            .map(|(x, p, y)| Ok((source.require(x)?, params.require(p)?, target.require(y)?)))
            .collect::<Result<Vec<_>>>()?;
        ParamMultiMap::from_index_triples(source, params, target, idx)
    }

    pub fn from_fn<F>(
        source: &SpaceRef,
        params: &SpaceRef,
        target: &SpaceRef,
        policy: OffGridPolicy,
        f: F,
    ) -> Result<ParamMultiMap>
    where
        F: Fn(&[f64], &[f64]) -> Result<Vec<Point>>,
    {
        let mut triples = Vec::new();
        for (i, x) in source.points().iter().enumerate() {
            for (p, q) in params.points().iter().enumerate() {
                for y in f(x, q)? {
                    match (target.index_of(&y), policy) {
                        (Some(j), _) => triples.push((i, p, j)),
                        (None, OffGridPolicy::Drop) => {}
                        (None, OffGridPolicy::Reject) => {
                            return Err(Error::OffGrid { space: target.label().to_string(), point: y })
                        }
                    }
                }
            }
        }
        ParamMultiMap::from_index_triples(source, params, target, triples)
    }

    /// Samples expressions in `x` (source) and `p` (parameter).
    pub fn from_formula(
        source: &SpaceRef,
        params: &SpaceRef,
        target: &SpaceRef,
        exprs: &[&str],
        policy: OffGridPolicy,
    ) -> Result<ParamMultiMap> {
        let f = Formula::parse(exprs, &[("x", source.dim()), ("p", params.dim())])?;
        if f.outputs() != target.dim() {
            return Err(Error::DimensionMismatch { expected: target.dim(), found: f.outputs() });
        }
        ParamMultiMap::from_fn(source, params, target, policy, |x, p| Ok(vec![f.eval(&[x, p])?]))
    }

    /// The map (x, p) ↦ F(x) ignoring the parameter.
    pub fn lift(f: &MultiMap, params: &SpaceRef) -> ParamMultiMap {
        let np = params.len();
        let rows = (0..f.source.len() * np).map(|k| f.rows[k / np].clone()).collect();
        ParamMultiMap { source: f.source.clone(), params: params.clone(), target: f.target.clone(), rows }
    }

    pub fn source(&self) -> &SpaceRef {
        &self.source
    }

    pub fn params(&self) -> &SpaceRef {
        &self.params
    }

    pub fn target(&self) -> &SpaceRef {
        &self.target
    }

    pub fn row(&self, x: usize, p: usize) -> &[usize] {
        &self.rows[x * self.params.len() + p]
    }

    pub fn contains_triple(&self, x: usize, p: usize, y: usize) -> bool {
        self.row(x, p).binary_search(&y).is_ok()
    }

    pub fn graph(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let np = self.params.len();
        self.rows
            .iter()
            .enumerate()
            .flat_map(move |(k, r)| r.iter().map(move |&j| (k / np, k % np, j)))
    }

    /// Fₚ := F(·, p) for parameter index `p`.
    pub fn slice_idx(&self, p: usize) -> MultiMap {
        let rows = (0..self.source.len()).map(|x| self.row(x, p).to_vec()).collect();
        MultiMap::from_rows(&self.source, &self.target, rows)
    }

    pub fn slice_param(&self, p: &[f64]) -> Result<MultiMap> {
        Ok(self.slice_idx(self.params.require(p)?))
    }

    /// Fₓ := F(x, ·) for source index `x`, as a map P ⇉ Y.
    pub fn slice_source_idx(&self, x: usize) -> MultiMap {
        let rows = (0..self.params.len()).map(|p| self.row(x, p).to_vec()).collect();
        MultiMap::from_rows(&self.params, &self.target, rows)
    }

    /// Exchanges the roles of the two input variables.
    pub fn swap_inputs(&self) -> ParamMultiMap {
        let triples: Vec<_> = self.graph().map(|(x, p, y)| (p, x, y)).collect();
        ParamMultiMap::from_index_triples(&self.params, &self.source, &self.target, triples).expect("indices in range")
    }
}

/// A map G: Y × Z ⇉ W of two variables (left `y`, right `z`).
#[derive(Debug, Clone)]
pub struct BiMultiMap {
    inner: ParamMultiMap,
}

impl BiMultiMap {
    pub fn from_triples(left: &SpaceRef, right: &SpaceRef, target: &SpaceRef, triples: &[(Point, Point, Point)]) -> Result<BiMultiMap> {
        Ok(BiMultiMap { inner: ParamMultiMap::from_triples(left, right, target, triples)? })
    }

    pub fn from_index_triples(
        left: &SpaceRef,
        right: &SpaceRef,
        target: &SpaceRef,
        triples: impl IntoIterator<Item = (usize, usize, usize)>,
    ) -> Result<BiMultiMap> {
        Ok(BiMultiMap { inner: ParamMultiMap::from_index_triples(left, right, target, triples)? })
    }

    pub fn from_fn<F>(left: &SpaceRef, right: &SpaceRef, target: &SpaceRef, policy: OffGridPolicy, f: F) -> Result<BiMultiMap>
    where
        F: Fn(&[f64], &[f64]) -> Result<Vec<Point>>,
    {
        Ok(BiMultiMap { inner: ParamMultiMap::from_fn(left, right, target, policy, f)? })
    }

    /// Samples expressions in two named variables, e.g. `["y", "z"]`.
    pub fn from_formula(
        left: &SpaceRef,
        right: &SpaceRef,
        target: &SpaceRef,
        exprs: &[&str],
        vars: [&str; 2],
        policy: OffGridPolicy,
    ) -> Result<BiMultiMap> {
        if vars[0] == vars[1] {
            return Err(Error::Formula(format!("variable names must differ, got `{}` twice", vars[0])));
        }
        let f = Formula::parse(exprs, &[(vars[0], left.dim()), (vars[1], right.dim())])?;
        if f.outputs() != target.dim() {
            return Err(Error::DimensionMismatch { expected: target.dim(), found: f.outputs() });
        }
        BiMultiMap::from_fn(left, right, target, policy, |y, z| Ok(vec![f.eval(&[y, z])?]))
    }

    /// (y, z) ↦ {y − z}, validated against the target grid.
    pub fn subtraction(left: &SpaceRef, right: &SpaceRef, target: &SpaceRef) -> Result<BiMultiMap> {
        if left.dim() != right.dim() || left.dim() != target.dim() {
            return Err(Error::DimensionMismatch { expected: left.dim(), found: right.dim() });
        }
        let mut triples = Vec::new();
        for (i, y) in left.points().iter().enumerate() {
            for (k, z) in right.points().iter().enumerate() {
                let d: Point = y.iter().zip(z).map(|(a, b)| a - b).collect();
                let j = target.index_of(&d).ok_or_else(|| Error::OffGridDifference {
                    space: target.label().to_string(),
                    y: y.clone(),
                    z: z.clone(),
                })?;
                triples.push((i, k, j));
            }
        }
        BiMultiMap::from_index_triples(left, right, target, triples)
    }

    pub fn left(&self) -> &SpaceRef {
        self.inner.source()
    }

    pub fn right(&self) -> &SpaceRef {
        self.inner.params()
    }

    pub fn target(&self) -> &SpaceRef {
        self.inner.target()
    }

    pub fn value(&self, y: usize, z: usize) -> &[usize] {
        self.inner.row(y, z)
    }

    pub fn graph(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.inner.graph()
    }

    /// View as a parametric map with the left variable as `x` and the right
    /// variable as the parameter.
    pub fn as_param(&self) -> &ParamMultiMap {
        &self.inner
    }

    /// G(·, z) as a map Y ⇉ W.
    pub fn slice_right(&self, z: &[f64]) -> Result<MultiMap> {
        self.inner.slice_param(z)
    }

    /// G(y, ·) as a map Z ⇉ W.
    pub fn slice_left(&self, y: &[f64]) -> Result<MultiMap> {
        Ok(self.inner.slice_source_idx(self.left().require(y)?))
    }
}

/// H(x) := G(F₁(x), F₂(x)).
pub fn compose_g(f1: &MultiMap, f2: &MultiMap, g: &BiMultiMap) -> Result<MultiMap> {
    require_same(f1.source(), f2.source(), "compose_g: F1 and F2 sources differ")?;
    require_same(g.left(), f1.target(), "compose_g: G's left space is not F1's target")?;
    require_same(g.right(), f2.target(), "compose_g: G's right space is not F2's target")?;
    let rows = (0..f1.source().len())
        .map(|x| {
            let mut out = BTreeSet::new();
            for &y in f1.row(x) {
                for &z in f2.row(x) {
                    out.extend(g.value(y, z).iter().copied());
                }
            }
            out.into_iter().collect()
        })
        .collect();
    Ok(MultiMap::from_rows(f1.source(), g.target(), rows))
}

/// F₁ − F₂ with values on F₁'s target grid.
pub fn difference(f1: &MultiMap, f2: &MultiMap) -> Result<MultiMap> {
    difference_on(f1, f2, &f1.target().clone())
}

/// F₁ − F₂ with values on `target`. Only the differences realized by graph
/// pairs need to be on the grid; the first one that is not is reported.
pub fn difference_on(f1: &MultiMap, f2: &MultiMap, target: &SpaceRef) -> Result<MultiMap> {
    require_same(f1.source(), f2.source(), "difference: F1 and F2 sources differ")?;
    let dim = f1.target().dim();
    if f2.target().dim() != dim || target.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: f2.target().dim() });
    }
    let mut rows = Vec::with_capacity(f1.source().len());
    for x in 0..f1.source().len() {
        let mut out = BTreeSet::new();
        for &y in f1.row(x) {
            let yp = f1.target().point(y);
            for &z in f2.row(x) {
                let zp = f2.target().point(z);
                let d: Point = yp.iter().zip(zp).map(|(a, b)| a - b).collect();
                let j = target.index_of(&d).ok_or_else(|| Error::OffGridDifference {
                    space: target.label().to_string(),
                    y: yp.to_vec(),
                    z: zp.to_vec(),
                })?;
                out.insert(j);
            }
        }
        rows.push(out.into_iter().collect());
    }
    Ok(MultiMap::from_rows(f1.source(), target, rows))
}

/// (x, p) ↦ F₁(x, p) − F₂(x) with values on `target`.
pub fn param_difference_on(f1: &ParamMultiMap, f2: &MultiMap, target: &SpaceRef) -> Result<ParamMultiMap> {
    require_same(f1.source(), f2.source(), "param_difference: sources differ")?;
    let mut triples = Vec::new();
    for x in 0..f1.source().len() {
        for p in 0..f1.params().len() {
            for &y in f1.row(x, p) {
                let yp = f1.target().point(y);
                for &z in f2.row(x) {
                    let zp = f2.target().point(z);
                    let d: Point = yp.iter().zip(zp).map(|(a, b)| a - b).collect();
                    let j = target.index_of(&d).ok_or_else(|| Error::OffGridDifference {
                        space: target.label().to_string(),
                        y: yp.to_vec(),
                        z: zp.to_vec(),
                    })?;
                    triples.push((x, p, j));
                }
            }
        }
    }
    ParamMultiMap::from_index_triples(f1.source(), f1.params(), target, triples)
}
