//! Instance files: named grids, maps, constants, anchors, configs and an
//! ordered task list, loaded from JSON and resolved into core objects.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use regmap_core::composition::{RateConstants, Theorem};
use regmap_core::formula::OffGridPolicy;
use regmap_core::implicit::Side;
use regmap_core::metric::{GridSpace, Norm, Point, SpaceRef};
use regmap_core::moduli::{ModulusKind, NeighborhoodConfig};
use regmap_core::setvalued::{BiMultiMap, MultiMap, ParamMultiMap};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Default bound on the number of tuples a single task may enumerate.
pub const DEFAULT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(default)]
    pub spaces: BTreeMap<String, SpaceDecl>,
    #[serde(default)]
    pub maps: BTreeMap<String, MapDecl>,
    #[serde(default)]
    pub constants: BTreeMap<String, RateConstants>,
    #[serde(default)]
    pub anchors: BTreeMap<String, Vec<Point>>,
    #[serde(default)]
    pub configs: BTreeMap<String, ConfigDecl>,
    pub tasks: Vec<TaskDecl>,
}

/// Exactly one of `line` ([start, stop, step]), `lattice` (one triple per
/// axis) or `points`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDecl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm: Option<Norm>,
}

/// A map declaration. The shape is inferred from the grid fields:
/// `source`/`target` for X ⇉ Y, plus `params` for X × P ⇉ Y, or
/// `left`/`right`/`target` for Y × Z ⇉ W. Exactly one definition field is
/// set.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDecl {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<String>,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formula: Option<Vec<String>>,
    /// Variable names for two-argument formulas; default `["y", "z"]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vars: Option<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<(Point, Point)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub triples: Option<Vec<(Point, Point, Point)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtraction: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub off_grid: Option<OffGridPolicy>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDecl {
    pub radius_u: f64,
    pub radius_v: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_w: Option<f64>,
    pub epsilon: f64,
    /// Defaults to the geometric grid ε/2, ε/4, ….
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskDecl {
    pub name: String,
    #[serde(flatten)]
    pub kind: TaskKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum TaskKind {
    Estimate(EstimateTask),
    VerifyEquiv(EquivTask),
    Certify(CertifyTask),
    Implicit(ImplicitTask),
    Solve(SolveTask),
    VerifyFixpoint(FixpointTask),
}

impl TaskKind {
    pub fn command(&self) -> &'static str {
        match self {
            TaskKind::Estimate(_) => "estimate",
            TaskKind::VerifyEquiv(_) => "verify-equiv",
            TaskKind::Certify(_) => "certify",
            TaskKind::Implicit(_) => "implicit",
            TaskKind::Solve(_) => "solve",
            TaskKind::VerifyFixpoint(_) => "verify-fixpoint",
        }
    }
}

/// Anchors are (x̄, ȳ) for plain kinds and (x̄, p̄, ȳ) for partial kinds.
/// With `claim`, the task passes iff the claimed constant is not refuted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateTask {
    pub map: String,
    pub kind: ModulusKind,
    pub anchor: String,
    pub config: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub claim: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivVariant {
    #[default]
    Around,
    At,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivTask {
    pub map: String,
    pub anchor: String,
    pub config: String,
    #[serde(default)]
    pub variant: EquivVariant,
}

/// `f1`, `f2`, `g` for composition and difference (no `g`); `f`, `g` for the
/// partial theorems and Lyusternik–Graves. `check_condition` switches on
/// the injectivity / single-valuedness side condition of the partial
/// theorems.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyTask {
    pub theorem: Theorem,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<String>,
    pub constants: String,
    pub config: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_x: Option<String>,
    #[serde(default)]
    pub check_condition: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImplicitProblem {
    /// Distance estimates and bounds for S(p) = {x : 0 ∈ H(x, p)}.
    #[default]
    SolutionMap,
    /// The Lipschitz inclusion for Γ(z, w) = {y : w ∈ G(y, z)}.
    Gamma,
}

/// Solution-map problems use `map` (X × P ⇉ Y), `anchor` (x̄, p̄), `c`,
/// `side`, optional `lipschitz` (the constant for the lip/reg bound),
/// `alpha`, `beta`, `gamma` and `points` ([x, p] pairs). Γ problems use
/// `map` (Y × Z ⇉ W), `anchor` (ȳ, z̄, w̄), `c` (= C), `d` (= D), `gamma`
/// and `deltas`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImplicitTask {
    #[serde(default)]
    pub problem: ImplicitProblem,
    pub map: String,
    pub anchor: String,
    pub config: String,
    pub c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<Side>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deltas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[Point; 2]>>,
}

/// ρ is picked from `config` unless given explicitly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveTask {
    pub f1: String,
    pub f2: String,
    pub g: String,
    pub anchor: String,
    pub constants: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub targets: Vec<Point>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixpointTask {
    pub f1: String,
    pub f2: String,
    pub anchor: String,
    pub l: f64,
    pub m: f64,
    pub config: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Point>>,
}

#[derive(Debug, Clone)]
pub enum AnyMap {
    Multi(MultiMap),
    Param(ParamMultiMap),
    Bi(BiMultiMap),
}

impl AnyMap {
    fn graph_len(&self) -> u64 {
        match self {
            AnyMap::Multi(m) => m.graph_len() as u64,
            AnyMap::Param(p) => p.graph().count() as u64,
            AnyMap::Bi(b) => b.graph().count() as u64,
        }
    }

    fn spaces(&self) -> Vec<&SpaceRef> {
        match self {
            AnyMap::Multi(m) => vec![m.source(), m.target()],
            AnyMap::Param(p) => vec![p.source(), p.params(), p.target()],
            AnyMap::Bi(b) => vec![b.left(), b.right(), b.target()],
        }
    }
}

/// A validated instance with every name resolved.
#[derive(Debug, Clone)]
pub struct Instance {
    pub file: InstanceFile,
    /// sha256 of the file bytes, hex.
    pub digest: String,
    pub spaces: BTreeMap<String, SpaceRef>,
    pub maps: BTreeMap<String, AnyMap>,
    pub configs: BTreeMap<String, NeighborhoodConfig>,
}

fn invalid(what: impl Into<String>) -> CliError {
    CliError::Invalid(what.into())
}

pub fn load_instance(path: &Path) -> Result<Instance, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_instance(&bytes)
}

/// Parses and resolves instance bytes; the digest covers the raw bytes.
pub fn parse_instance(bytes: &[u8]) -> Result<Instance, CliError> {
    let file: InstanceFile = serde_json::from_slice(bytes)
        .map_err(|e| CliError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
    let digest = hex::encode(Sha256::digest(bytes));
    resolve(file, digest)
}

fn resolve(file: InstanceFile, digest: String) -> Result<Instance, CliError> {
    let mut spaces = BTreeMap::new();
    for (name, decl) in &file.spaces {
        spaces.insert(name.clone(), Arc::new(build_space(name, decl)?));
    }
    let mut maps = BTreeMap::new();
    for (name, decl) in &file.maps {
        let m = build_map(decl, &spaces).map_err(|e| invalid(format!("map `{name}`: {e}")))?;
        maps.insert(name.clone(), m);
    }
    let mut configs = BTreeMap::new();
    for (name, decl) in &file.configs {
        configs.insert(name.clone(), build_config(decl).map_err(|e| invalid(format!("config `{name}`: {e}")))?);
    }
    for (name, k) in &file.constants {
        let all = [k.big_l, k.big_m, k.c, k.d, k.l, k.m];
        if all.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(invalid(format!("constants `{name}`: values must be finite and nonnegative")));
        }
    }
    let inst = Instance { file, digest, spaces, maps, configs };
    let mut seen = std::collections::BTreeSet::new();
    for t in &inst.file.tasks {
        if !seen.insert(t.name.as_str()) {
            return Err(invalid(format!("duplicate task name `{}`", t.name)));
        }
        inst.check_task(t).map_err(|e| invalid(format!("task `{}`: {e}", t.name)))?;
    }
    Ok(inst)
}

fn build_space(name: &str, d: &SpaceDecl) -> Result<GridSpace, CliError> {
    let norm = d.norm.clone().unwrap_or(Norm::Sum);
    let r = match (&d.line, &d.lattice, &d.points) {
        (Some([a, b, h]), None, None) => GridSpace::lattice(name, &[(*a, *b, *h)], norm),
        (None, Some(axes), None) => {
            let axes: Vec<(f64, f64, f64)> = axes.iter().map(|&[a, b, h]| (a, b, h)).collect();
            GridSpace::lattice(name, &axes, norm)
        }
        (None, None, Some(pts)) => GridSpace::new(name, pts.clone(), norm),
        _ => return Err(invalid(format!("space `{name}`: give exactly one of `line`, `lattice`, `points`"))),
    };
    r.map_err(|e| invalid(format!("space `{name}`: {e}")))
}

fn space<'a>(spaces: &'a BTreeMap<String, SpaceRef>, name: &Option<String>, field: &str) -> Result<&'a SpaceRef, String> {
    let n = name.as_ref().ok_or_else(|| format!("missing `{field}`"))?;
    spaces.get(n).ok_or_else(|| format!("unknown space `{n}` in `{field}`"))
}

fn build_map(d: &MapDecl, spaces: &BTreeMap<String, SpaceRef>) -> Result<AnyMap, String> {
    let defs = [
        d.identity.is_some(),
        d.constant.is_some(),
        d.linear.is_some(),
        d.formula.is_some(),
        d.pairs.is_some(),
        d.triples.is_some(),
        d.subtraction.is_some(),
    ];
    if defs.iter().filter(|b| **b).count() != 1 {
        return Err("give exactly one of identity, constant, linear, formula, pairs, triples, subtraction".into());
    }
    let policy = d.off_grid.unwrap_or_default();
    let target = space(spaces, &Some(d.target.clone()), "target")?;
    let e = |e: regmap_core::Error| e.to_string();
    let exprs = || d.formula.as_ref().map(|f| f.iter().map(String::as_str).collect::<Vec<_>>());
    if d.left.is_some() || d.right.is_some() {
        let (l, r) = (space(spaces, &d.left, "left")?, space(spaces, &d.right, "right")?);
        let m = if d.subtraction == Some(true) {
            BiMultiMap::subtraction(l, r, target).map_err(e)?
        } else if let Some(f) = exprs() {
            let v = d.vars.clone().unwrap_or_else(|| ["y".into(), "z".into()]);
            BiMultiMap::from_formula(l, r, target, &f, [v[0].as_str(), v[1].as_str()], policy).map_err(e)?
        } else if let Some(t) = &d.triples {
            BiMultiMap::from_triples(l, r, target, t).map_err(e)?
        } else {
            return Err("two-argument maps take `subtraction`, `formula` or `triples`".into());
        };
        return Ok(AnyMap::Bi(m));
    }
    let source = space(spaces, &d.source, "source")?;
    if d.params.is_some() {
        let p = space(spaces, &d.params, "params")?;
        let m = if let Some(f) = exprs() {
            ParamMultiMap::from_formula(source, p, target, &f, policy).map_err(e)?
        } else if let Some(t) = &d.triples {
            ParamMultiMap::from_triples(source, p, target, t).map_err(e)?
        } else {
            return Err("parametric maps take `formula` or `triples`".into());
        };
        return Ok(AnyMap::Param(m));
    }
    let m = if d.identity == Some(true) {
        if !Arc::ptr_eq(source, target) {
            return Err("identity needs source = target".into());
        }
        MultiMap::identity(source)
    } else if let Some(c) = &d.constant {
        MultiMap::constant(source, target, c).map_err(e)?
    } else if let Some(a) = &d.linear {
        MultiMap::from_linear(a, source, target).map_err(e)?
    } else if let Some(f) = exprs() {
        MultiMap::from_formula(source, target, &f, policy).map_err(e)?
    } else if let Some(p) = &d.pairs {
        MultiMap::from_pairs(source, target, p).map_err(e)?
    } else {
        return Err("one-argument maps take identity, constant, linear, formula or pairs".into());
    };
    Ok(AnyMap::Multi(m))
}

fn build_config(d: &ConfigDecl) -> regmap_core::Result<NeighborhoodConfig> {
    let mut c = match &d.rho_grid {
        Some(r) => NeighborhoodConfig::new(d.radius_u, d.radius_v, d.epsilon, r.clone())?,
        None => NeighborhoodConfig::geometric(d.radius_u, d.radius_v, d.epsilon)?,
    };
    if let Some(w) = d.radius_w {
        c = c.with_radius_w(w)?;
    }
    if let Some(r) = d.resolution {
        c = c.with_resolution(r)?;
    }
    Ok(c)
}

impl Instance {
    pub fn multi(&self, name: &str) -> Result<&MultiMap, String> {
        match self.maps.get(name) {
            Some(AnyMap::Multi(m)) => Ok(m),
            Some(_) => Err(format!("map `{name}` is not a one-argument map")),
            None => Err(format!("unknown map `{name}`")),
        }
    }

    pub fn param(&self, name: &str) -> Result<ParamMultiMap, String> {
        match self.maps.get(name) {
            Some(AnyMap::Param(m)) => Ok(m.clone()),
            Some(AnyMap::Bi(b)) => Ok(b.as_param().clone()),
            Some(AnyMap::Multi(_)) => Err(format!("map `{name}` is not a two-argument map")),
            None => Err(format!("unknown map `{name}`")),
        }
    }

    pub fn bi(&self, name: &str) -> Result<&BiMultiMap, String> {
        match self.maps.get(name) {
            Some(AnyMap::Bi(m)) => Ok(m),
            Some(_) => Err(format!("map `{name}` is not declared with left/right grids")),
            None => Err(format!("unknown map `{name}`")),
        }
    }

    pub fn space(&self, name: &str) -> Result<&SpaceRef, String> {
        self.spaces.get(name).ok_or_else(|| format!("unknown space `{name}`"))
    }

    pub fn config(&self, name: &str) -> Result<&NeighborhoodConfig, String> {
        self.configs.get(name).ok_or_else(|| format!("unknown config `{name}`"))
    }

    pub fn constants(&self, name: &str) -> Result<RateConstants, String> {
        self.file.constants.get(name).copied().ok_or_else(|| format!("unknown constants `{name}`"))
    }

    pub fn anchor(&self, name: &str, len: usize) -> Result<&[Point], String> {
        let a = self.file.anchors.get(name).ok_or_else(|| format!("unknown anchor `{name}`"))?;
        if a.len() != len {
            return Err(format!("anchor `{name}` has {} points, expected {len}", a.len()));
        }
        Ok(a)
    }

    /// Resolves every name a task uses, with the expected map shapes and
    /// anchor lengths.
    fn check_task(&self, t: &TaskDecl) -> Result<(), String> {
        match &t.kind {
            TaskKind::Estimate(e) => {
                self.config(&e.config)?;
                if e.kind.is_partial() {
                    self.param(&e.map)?;
                    self.anchor(&e.anchor, 3)?;
                } else {
                    self.multi(&e.map)?;
                    self.anchor(&e.anchor, 2)?;
                }
            }
            TaskKind::VerifyEquiv(e) => {
                self.multi(&e.map)?;
                self.anchor(&e.anchor, 2)?;
                self.config(&e.config)?;
            }
            TaskKind::Certify(c) => {
                self.constants(&c.constants)?;
                self.config(&c.config)?;
                let need = |n: &Option<String>, f: &str| n.clone().ok_or_else(|| format!("`{f}` is required for this theorem"));
                match c.theorem {
                    Theorem::Composition => {
                        self.multi(&need(&c.f1, "f1")?)?;
                        self.multi(&need(&c.f2, "f2")?)?;
                        self.bi(&need(&c.g, "g")?)?;
                        self.anchor(&need(&c.anchor, "anchor")?, 4)?;
                    }
                    Theorem::PartialOpen | Theorem::PartialLipschitz => {
                        self.multi(&need(&c.f, "f")?)?;
                        self.bi(&need(&c.g, "g")?)?;
                        self.anchor(&need(&c.anchor, "anchor")?, 3)?;
                    }
                    Theorem::Difference => {
                        self.multi(&need(&c.f1, "f1")?)?;
                        self.multi(&need(&c.f2, "f2")?)?;
                        self.space(&need(&c.diff, "diff")?)?;
                        self.anchor(&need(&c.anchor, "anchor")?, 3)?;
                    }
                    Theorem::LyusternikGraves => {
                        self.multi(&need(&c.f, "f")?)?;
                        self.multi(&need(&c.g, "g")?)?;
                        self.space(&need(&c.diff, "diff")?)?;
                        if let Some(d) = &c.diff_x {
                            self.space(d)?;
                        }
                    }
                }
            }
            TaskKind::Implicit(i) => {
                self.config(&i.config)?;
                match i.problem {
                    ImplicitProblem::SolutionMap => {
                        self.param(&i.map)?;
                        self.anchor(&i.anchor, 2)?;
                    }
                    ImplicitProblem::Gamma => {
                        self.bi(&i.map)?;
                        self.anchor(&i.anchor, 3)?;
                        i.d.ok_or("Γ problems need `d`")?;
                    }
                }
            }
            TaskKind::Solve(s) => {
                self.multi(&s.f1)?;
                self.multi(&s.f2)?;
                self.bi(&s.g)?;
                self.anchor(&s.anchor, 4)?;
                self.constants(&s.constants)?;
                match (&s.config, s.rho) {
                    (Some(c), None) => {
                        self.config(c)?;
                    }
                    (None, Some(_)) => {}
                    _ => return Err("give exactly one of `config` and `rho`".into()),
                }
            }
            TaskKind::VerifyFixpoint(f) => {
                self.multi(&f.f1)?;
                self.multi(&f.f2)?;
                self.anchor(&f.anchor, 2)?;
                self.config(&f.config)?;
                if let Some(d) = &f.diff {
                    self.space(d)?;
                }
            }
        }
        Ok(())
    }

    /// Work estimate for a task: for each map it uses, graph size times the
    /// largest grid involved. This bounds the graph-point × candidate sweeps
    /// every verifier performs.
    pub fn task_tuples(&self, t: &TaskDecl) -> u64 {
        let names: Vec<&String> = match &t.kind {
            TaskKind::Estimate(e) => vec![&e.map],
            TaskKind::VerifyEquiv(e) => vec![&e.map],
            TaskKind::Certify(c) => [&c.f1, &c.f2, &c.f, &c.g].into_iter().flatten().collect(),
            TaskKind::Implicit(i) => vec![&i.map],
            TaskKind::Solve(s) => vec![&s.f1, &s.f2, &s.g],
            TaskKind::VerifyFixpoint(f) => vec![&f.f1, &f.f2],
        };
        let maps: Vec<&AnyMap> = names.iter().filter_map(|n| self.maps.get(*n)).collect();
        let largest = maps.iter().flat_map(|m| m.spaces()).map(|s| s.len() as u64).max().unwrap_or(0);
        maps.iter().map(|m| m.graph_len().saturating_mul(largest)).fold(0u64, u64::saturating_add)
    }

    /// Replaces the bisection resolution of every config.
    pub fn override_resolution(&mut self, res: f64) -> Result<(), CliError> {
        for (name, c) in self.configs.iter_mut() {
            *c = c.clone().with_resolution(res).map_err(|e| invalid(format!("config `{name}`: {e}")))?;
        }
        Ok(())
    }

    /// The first task whose work estimate exceeds `cap`.
    pub fn check_cap(&self, cap: u64) -> Result<(), CliError> {
        for t in &self.file.tasks {
            let n = self.task_tuples(t);
            if n > cap {
                return Err(CliError::Cap { task: t.name.clone(), tuples: n, cap });
            }
        }
        Ok(())
    }
}
