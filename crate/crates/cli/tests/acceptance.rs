//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! fails. Values are checked against test-side oracles where one exists.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use regmap_core::metric::{ExtReal, GridSpace, Norm, Point, SpaceRef};
use regmap_core::moduli::*;
use regmap_core::composition::*;
use regmap_core::formula::OffGridPolicy;
use regmap_core::coincidence::{parametric_fix, CoincidenceInstance};
use regmap_core::ekeland::*;
use regmap_core::implicit::{implicit_map, GammaInstance, ImplicitInstance, Side};
use regmap_core::setvalued::{compose_g, param_difference_on, BiMultiMap, MultiMap, ParamMultiMap};

type Check = Result<String, String>;

fn line(start: f64, stop: f64, step: f64) -> SpaceRef {
    Arc::new(GridSpace::line("g", start, stop, step).unwrap())
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cfg(ru: f64, rv: f64, eps: f64, rho: &[f64]) -> NeighborhoodConfig {
    NeighborhoodConfig::new(ru, rv, eps, rho.to_vec()).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Modulus oracle agreement

/// Largest L with B(y, ρL) ⊆ F(B(x, ρ)) over graph points in U × V, from
/// the distance to the nearest uncovered target point.
fn oracle_lop(f: &MultiMap, xb: &[f64], yb: &[f64], c: &NeighborhoodConfig) -> f64 {
    let (xs, ys) = (f.source(), f.target());
    let mut best = f64::INFINITY;
    for (i, j) in f.graph() {
        if xs.dist(xs.point(i), xb) >= c.radius_u || ys.dist(ys.point(j), yb) >= c.radius_v {
            continue;
        }
        for &rho in &c.rho_grid {
            let mut covered = vec![false; ys.len()];
            for k in 0..xs.len() {
                if xs.dist_idx(i, k) < rho {
                    for &t in f.row(k) {
                        covered[t] = true;
                    }
                }
            }
            let gap = (0..ys.len()).filter(|&t| !covered[t]).map(|t| ys.dist_idx(j, t)).fold(f64::INFINITY, f64::min);
            best = best.min(gap / rho);
        }
    }
    best
}

/// Smallest L with d(x, F⁻¹(y)) ≤ L d(y, F(x)) on U × V.
fn oracle_reg(f: &MultiMap, xb: &[f64], yb: &[f64], c: &NeighborhoodConfig) -> f64 {
    let (xs, ys) = (f.source(), f.target());
    let mut worst: f64 = 0.0;
    for i in 0..xs.len() {
        if xs.dist(xs.point(i), xb) >= c.radius_u {
            continue;
        }
        for j in 0..ys.len() {
            if ys.dist(ys.point(j), yb) >= c.radius_v {
                continue;
            }
            let to_image = f.row(i).iter().map(|&t| ys.dist_idx(j, t)).fold(f64::INFINITY, f64::min);
            let to_pre = (0..xs.len()).filter(|&k| f.row(k).contains(&j)).map(|k| xs.dist_idx(i, k)).fold(f64::INFINITY, f64::min);
            if to_image > 0.0 {
                worst = worst.max(to_pre / to_image);
            }
        }
    }
    worst
}

/// Smallest L with F(x) ∩ V ⊆ F(u) + L‖x − u‖𝔻 for x, u ∈ U.
fn oracle_lip(f: &MultiMap, xb: &[f64], yb: &[f64], c: &NeighborhoodConfig) -> f64 {
    let (xs, ys) = (f.source(), f.target());
    let u: Vec<usize> = (0..xs.len()).filter(|&i| xs.dist(xs.point(i), xb) < c.radius_u).collect();
    let mut worst: f64 = 0.0;
    for &a in &u {
        for &b in &u {
            if a == b {
                continue;
            }
            for &j in f.row(a) {
                if ys.dist(ys.point(j), yb) >= c.radius_v {
                    continue;
                }
                let d = f.row(b).iter().map(|&t| ys.dist_idx(j, t)).fold(f64::INFINITY, f64::min);
                worst = worst.max(d / xs.dist_idx(a, b));
            }
        }
    }
    worst
}

fn brackets(r: &ModulusReport, want: f64, oracle: f64) -> Result<(), String> {
    ensure(r.contains(want) && r.contains(oracle) && r.width() <= 1e-6, || {
        format!("{} bracket {} vs expected {want}, oracle {oracle}", r.kind.name(), show(r))
    })
}

fn criterion_1() -> Check {
    let (x, y) = (line(-1.0, 1.0, 0.1), line(-2.0, 2.0, 0.2));
    let f = MultiMap::from_linear(&[vec![2.0]], &x, &y).unwrap();
    let c = cfg(0.5, 0.5, 0.8, &[0.1, 0.2, 0.3, 0.4]);
    let o = [0.0];
    let lop = estimate_lop_around(&f, &o, &o, &c).map_err(|e| e.to_string())?;
    let reg = estimate_reg_around(&f, &o, &o, &c).map_err(|e| e.to_string())?;
    let lip = estimate_lip_around(&f, &o, &o, &c).map_err(|e| e.to_string())?;
    brackets(&lop, 2.0, oracle_lop(&f, &o, &o, &c))?;
    brackets(&reg, 0.5, oracle_reg(&f, &o, &o, &c))?;
    brackets(&lip, 2.0, oracle_lip(&f, &o, &o, &c))?;
    let lin = linear_operator_moduli(&[vec![2.0]]).map_err(|e| e.to_string())?;
    let smax = lin.singular_values.iter().copied().fold(0.0, f64::max);
    ensure(lop.contains(lin.lop.value()) && reg.contains(lin.reg.value()) && lip.contains(smax), || format!("analytic {lin:?}"))?;
    Ok(format!("lop {}, reg {}, lip {}", show(&lop), show(&reg), show(&lip)))
}

// ---------------------------------------------------------------------------
// 2. Equivalence suite

struct EquivCase {
    name: &'static str,
    f: MultiMap,
    xbar: Point,
    ybar: Point,
    cfg: NeighborhoodConfig,
}

fn formula(x: &SpaceRef, y: &SpaceRef, e: &str) -> MultiMap {
    MultiMap::from_formula(x, y, &[e], OffGridPolicy::Reject).unwrap()
}

fn equivalence_cases() -> Vec<EquivCase> {
    let x = line(-1.0, 1.0, 0.1);
    let c = cfg(0.5, 1.0, 0.25, &[0.1, 0.2]);
    let case = |name, f, xbar: &[f64], ybar: &[f64], cfg: &NeighborhoodConfig| EquivCase {
        name,
        f,
        xbar: xbar.to_vec(),
        ybar: ybar.to_vec(),
        cfg: cfg.clone(),
    };
    let plane = |steps: [f64; 2], half: [f64; 2]| -> SpaceRef {
        Arc::new(GridSpace::lattice("p", &[(-half[0], half[0], steps[0]), (-half[1], half[1], steps[1])], Norm::Max).unwrap())
    };
    let x2 = plane([0.1, 0.1], [0.5, 0.5]);
    let y2 = plane([0.2, 0.05], [1.0, 0.25]);
    let diag = MultiMap::from_linear(&[vec![2.0, 0.0], vec![0.0, 0.5]], &x2, &y2).unwrap();
    let pair = line(0.0, 1.0, 1.0);
    let three = MultiMap::from_pairs(&pair, &pair, &[(vec![0.0], vec![0.0]), (vec![0.0], vec![1.0]), (vec![1.0], vec![1.0])]).unwrap();
    let o = [0.0];
    vec![
        case("identity", MultiMap::identity(&x), &o, &o, &c),
        case("scale 2", MultiMap::from_linear(&[vec![2.0]], &x, &line(-2.0, 2.0, 0.2)).unwrap(), &o, &o, &c),
        case("scale 0.5", MultiMap::from_linear(&[vec![0.5]], &line(-1.0, 1.0, 0.2), &line(-0.5, 0.5, 0.1)).unwrap(), &o, &o, &c),
        case("abs", formula(&x, &line(0.0, 1.0, 0.1), "abs(x)"), &o, &o, &cfg(0.5, 0.5, 0.2, &[0.1, 0.2])),
        case("diag(2, 0.5)", diag, &[0.0, 0.0], &[0.0, 0.0], &cfg(0.3, 0.5, 0.25, &[0.1, 0.2])),
        case("three pairs", three, &o, &o, &cfg(2.0, 2.0, 2.0, &[1.0, 2.0])),
        case("negation", formula(&x, &x, "-x"), &o, &o, &c),
        case("shift", formula(&x, &line(-0.8, 1.2, 0.1), "x + 0.2"), &o, &[0.2], &c),
        case("triple", formula(&x, &line(-3.0, 3.0, 0.3), "3*x"), &o, &o, &cfg(0.5, 1.0, 0.25, &[0.1, 0.2])),
        case("clipped", formula(&x, &x, "max(x, -0.5)"), &[0.2], &[0.2], &cfg(0.3, 0.3, 0.2, &[0.1, 0.2])),
    ]
}

fn show(r: &ModulusReport) -> String {
    serde_json::to_string(&r.bracket).unwrap()
}

fn agreement(e: &EquivalenceReport) -> String {
    format!("{} / {} / {}", show(&e.openness), show(&e.inverse), show(&e.regularity))
}

/// A bracket moved to the regularity scale: openness brackets are inverted.
fn reg_scale(r: &ModulusReport) -> (f64, f64) {
    let inv = |v: f64| if v <= 0.0 { f64::INFINITY } else { 1.0 / v };
    let (lo, hi) = (r.lo().value(), r.hi().value());
    if r.kind.is_openness() {
        (inv(hi), inv(lo))
    } else {
        (lo, hi)
    }
}

/// Independent re-check of the three-way agreement. Brackets that run past
/// 1e9 count as infinite.
fn reciprocal_agreement(e: &EquivalenceReport) -> Option<f64> {
    let s = [reg_scale(&e.openness), reg_scale(&e.inverse), reg_scale(&e.regularity)];
    if s.iter().all(|b| b.0 > 1e9) {
        return Some(f64::INFINITY);
    }
    let lo = s.iter().map(|b| b.0).fold(f64::NEG_INFINITY, f64::max);
    let hi = s.iter().map(|b| b.1).fold(f64::INFINITY, f64::min);
    (hi.is_finite() && lo <= hi + 2e-6).then_some(hi)
}

fn criterion_2() -> Check {
    let cases = equivalence_cases();
    let mut seen = Vec::new();
    for c in &cases {
        let around = check_equivalence_around(&c.f, &c.xbar, &c.ybar, &c.cfg).map_err(|e| format!("{}: {e}", c.name))?;
        let at = check_equivalence_at(&c.f, &c.xbar, &c.ybar, &c.cfg).map_err(|e| format!("{}: {e}", c.name))?;
        ensure(around.tolerance <= 2e-6 && at.tolerance <= 2e-6, || format!("{}: tolerance too loose", c.name))?;
        for (e, v) in [(&around, "around"), (&at, "at")] {
            let r = reciprocal_agreement(e);
            ensure(e.agree && r.is_some(), || format!("{} {v}: {}", c.name, agreement(e)))?;
        }
        let (a, b) = (reciprocal_agreement(&around).unwrap(), reciprocal_agreement(&at).unwrap());
        seen.push(format!("{} {a:.4}/{b:.4}", c.name));
    }
    Ok(format!("reg around/at: {}", seen.join(", ")))
}

// ---------------------------------------------------------------------------
// 3. Composition soundness

struct Chain {
    name: &'static str,
    f1: MultiMap,
    f2: MultiMap,
    g: BiMultiMap,
    k: RateConstants,
}

fn wide() -> NeighborhoodConfig {
    cfg(0.5, 0.5, 0.8, &[0.1, 0.2, 0.3, 0.4])
}

/// F₁ = kx on step 0.1 into step 0.1·k targets, F₂ ≡ {0}, G = y − z.
fn scaled_minus_constant(k: f64, big_m: f64) -> (MultiMap, MultiMap, BiMultiMap, RateConstants) {
    let h = 0.1 * k;
    let x = line(-1.0, 1.0, 0.1);
    let y = line(-k, k, h);
    let z = line(-2.0 * h, 2.0 * h, h);
    let w = line(-k - 2.0 * h, k + 2.0 * h, h);
    (
        MultiMap::from_linear(&[vec![k]], &x, &y).unwrap(),
        MultiMap::constant(&x, &z, &[vec![0.0]]).unwrap(),
        BiMultiMap::subtraction(&y, &z, &w).unwrap(),
        RateConstants::composition(k, big_m, 1.0, 1.0),
    )
}

fn composition_cases() -> Vec<Chain> {
    let chain = |name, (f1, f2, g, k): (MultiMap, MultiMap, BiMultiMap, RateConstants)| Chain { name, f1, f2, g, k };
    let x = line(-1.0, 1.0, 0.1);
    let y = line(-2.0, 2.0, 0.2);
    let outer_y = (
        MultiMap::from_linear(&[vec![2.0]], &x, &y).unwrap(),
        MultiMap::identity(&x),
        BiMultiMap::from_formula(&y, &x, &y, &["y"], ["y", "z"], OffGridPolicy::Reject).unwrap(),
        RateConstants::composition(2.0, 1.0, 1.0, 0.0),
    );
    let z = line(-1.0, 1.0, 0.2);
    let w = line(-3.0, 3.0, 0.2);
    let doubled_outer = (
        MultiMap::identity(&x),
        MultiMap::constant(&x, &z, &[vec![0.0]]).unwrap(),
        BiMultiMap::from_formula(&x, &z, &w, &["2*y - z"], ["y", "z"], OffGridPolicy::Reject).unwrap(),
        RateConstants::composition(1.0, 0.5, 2.0, 1.0),
    );
    vec![
        chain("2x - 0, M = 0.01", scaled_minus_constant(2.0, 0.01)),
        chain("2x - 0, M = 1", scaled_minus_constant(2.0, 1.0)),
        chain("4x - 0, M = 0.5", scaled_minus_constant(4.0, 0.5)),
        chain("G = y", outer_y),
        chain("G = 2y - z", doubled_outer),
    ]
}

/// min over ρ of the distance from w̄ to the nearest point of W not in
/// H(B(x̄, ρ)), divided by ρ.
fn oracle_rate_at_anchor(h: &MultiMap, xb: &[f64], wb: &[f64], rho: &[f64]) -> f64 {
    let (xs, ws) = (h.source(), h.target());
    let mut best = f64::INFINITY;
    for &r in rho {
        let mut covered = vec![false; ws.len()];
        for i in 0..xs.len() {
            if xs.dist(xs.point(i), xb) < r {
                for &t in h.row(i) {
                    covered[t] = true;
                }
            }
        }
        let gap = (0..ws.len()).filter(|&t| !covered[t]).map(|t| ws.dist(ws.point(t), wb)).fold(f64::INFINITY, f64::min);
        best = best.min(gap / r);
    }
    best
}

fn criterion_3() -> Check {
    let o: &[f64] = &[0.0];
    let c = wide();
    let mut seen = Vec::new();
    for ch in composition_cases() {
        let k = ch.k;
        let rate = k.big_l.unwrap() * k.c.unwrap() - k.big_m.unwrap() * k.d.unwrap();
        let cert = certify_composition(&ch.f1, &ch.f2, &ch.g, [o, o, o, o], k, &c).map_err(|e| format!("{}: {e}", ch.name))?;
        ensure(cert.passed() && cert.hypothesis_results.iter().all(|h| h.passed), || format!("{}: {:?}", ch.name, cert.failure))?;
        ensure(cert.rate == rate && rate > 0.0, || format!("{}: rate {} vs LC - MD = {rate}", ch.name, cert.rate))?;
        ensure(!cert.conclusion_results.is_empty() && cert.max_defect() == ExtReal::ZERO, || {
            format!("{}: max defect {:?}", ch.name, cert.max_defect())
        })?;
        let h = compose_g(&ch.f1, &ch.f2, &ch.g).unwrap();
        let oracle = oracle_rate_at_anchor(&h, o, o, &c.rho_grid);
        ensure(oracle >= rate, || format!("{}: oracle rate at the anchor {oracle} < {rate}", ch.name))?;
        seen.push(format!("{} rate {rate} ({} sweeps)", ch.name, cert.conclusion_results.len()));
    }
    let (f1, f2, g, k) = scaled_minus_constant(2.0, 0.01);
    let flat = MultiMap::constant(f1.source(), f1.target(), &[vec![0.0]]).unwrap();
    let broken = certify_composition(&flat, &f2, &g, [o, o, o, o], k, &c).map_err(|e| e.to_string())?;
    let f1_open = broken.hypothesis_results.iter().find(|h| h.name == "f1_open");
    ensure(broken.status == Status::Fail && f1_open.is_some_and(|h| !h.passed) && broken.conclusion_results.is_empty(), || {
        format!("constant F1: {:?} {:?}", broken.status, broken.failure)
    })?;
    Ok(format!("{}; constant F1 fails f1_open with no conclusion sweep", seen.join(", ")))
}

// ---------------------------------------------------------------------------
// 4. Special cases

fn criterion_4() -> Check {
    let o: &[f64] = &[0.0];
    let c = wide();
    let mut seen = Vec::new();
    for (scale, l, m) in [(2.0, 0.5, 0.01), (2.0, 0.5, 1.0), (4.0, 0.25, 0.5)] {
        let (f1, f2, g, _) = scaled_minus_constant(scale, m);
        let diff = certify_difference(&f1, &f2, [o, o, o], RateConstants::difference(l, m), &c, g.target()).map_err(|e| e.to_string())?;
        let comp =
            certify_composition(&f1, &f2, &g, [o, o, o, o], RateConstants::composition(1.0 / l, m, 1.0, 1.0), &c).map_err(|e| e.to_string())?;
        ensure(diff.rate == comp.rate && diff.status == comp.status && diff.passed(), || {
            format!("l = {l}, m = {m}: difference {} {:?} vs composition {} {:?}", diff.rate, diff.status, comp.rate, comp.status)
        })?;
        seen.push(format!("rate {}", diff.rate));
    }
    // F(x₁, x₂) = 2x₁ and G(y) = ℝ × {y}, so F − G⁻¹ = 2x₁ − x₂.
    let x: SpaceRef = Arc::new(GridSpace::lattice("x", &[(-1.0, 1.0, 0.1), (-1.0, 1.0, 0.2)], Norm::Sum).unwrap());
    let y = line(-2.0, 2.0, 0.2);
    let f = MultiMap::from_formula(&x, &y, &["2*x1"], OffGridPolicy::Reject).unwrap();
    let pairs: Vec<(Point, Point)> =
        y.points().iter().flat_map(|yp| x.points().iter().filter(|xp| (xp[1] - yp[0]).abs() < 1e-9).map(|xp| (yp.clone(), xp.clone()))).collect();
    let g = MultiMap::from_pairs(&y, &x, &pairs).unwrap();
    let lg = certify_lyusternik_graves(&f, &g, RateConstants::lyusternik_graves(2.0, 1.0), &cfg(0.5, 0.5, 0.4, &[0.2, 0.4]), &line(-3.0, 3.0, 0.2), None)
        .map_err(|e| e.to_string())?;
    ensure(lg.passed() && lg.rate == 1.0 && lg.max_defect() == ExtReal::ZERO, || format!("LG: {:?} rate {} {:?}", lg.status, lg.rate, lg.failure))?;
    Ok(format!("difference = composition on {} ({}); LG rate 1, zero defect", seen.len(), seen.join(", ")))
}

// ---------------------------------------------------------------------------
// 5. Implicit-map tightness

fn criterion_5() -> Check {
    let (x, p, y) = (line(-1.0, 1.0, 0.05), line(-1.0, 1.0, 0.1), line(-3.0, 3.0, 0.1));
    let h = ParamMultiMap::from_formula(&x, &p, &y, &["2*x - p"], OffGridPolicy::Reject).unwrap();
    let c = cfg(0.5, 1.0, 0.2, &[0.05, 0.1, 0.15, 0.2]).with_radius_w(0.6).unwrap();
    let o: &[f64] = &[0.0];
    let inst = ImplicitInstance::new(h, o, o, 2.0, c).and_then(|i| i.with_radii(0.5, 0.6, 1.0)).map_err(|e| e.to_string())?;
    let e = inst.verify_estimate(Side::Solution, o, &[0.5]).map_err(|e| e.to_string())?;
    // S(p) = {p/2}, so d(0, S(0.5)) = 0.25; d(0, H(0, 0.5))/c = 0.5/2.
    let ratio = e.ratio.ok_or("no ratio")?;
    ensure((e.lhs.value() - 0.25).abs() < 1e-12 && (e.rhs.value() - 0.25).abs() < 1e-12 && (ratio - 1.0).abs() <= 1e-9, || {
        format!("lhs {:?}, rhs {:?}, ratio {ratio}", e.lhs, e.rhs)
    })?;
    let b = inst.bound_lip(1.0).map_err(|e| e.to_string())?;
    let s_cfg = cfg(inst.beta, inst.alpha, 0.2, &[0.05]);
    let oracle = oracle_lip(inst.solution_map(), o, o, &s_cfg);
    let (lo, hi) = (b.swept.lo().value(), b.swept.hi().value());
    ensure(b.bound == 0.5 && (lo - 0.5).abs() <= 2e-6 && (hi - 0.5).abs() <= 2e-6 && (oracle - 0.5).abs() < 1e-12, || {
        format!("bound {}, swept [{lo}, {hi}], oracle {oracle}", b.bound)
    })?;
    Ok(format!("ratio {ratio} at (0, 0.5); lip S bound {} vs swept [{lo}, {hi}]", b.bound))
}

// ---------------------------------------------------------------------------
// 6. Γ inclusion

/// For G = cy + z, Γ(z, w) = {(w − z)/c}; the worst excess over all grid
/// quadruples in the closed γ-boxes, and how many pairs of pairs there are.
fn oracle_gamma(c: f64, ys: &GridSpace, zs: &[f64], ws: &[f64], gamma: f64, delta: f64) -> (f64, usize) {
    let on = |v: f64| ys.index_of(&[v]).map(|_| v);
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for &z in zs {
        for &w in ws {
            for &z2 in zs {
                for &w2 in ws {
                    n += 1;
                    let Some(y) = on((w - z) / c).filter(|y| y.abs() <= gamma + 1e-12) else { continue };
                    let radius = (1.0 + delta) / c * ((z - z2).abs() + (w - w2).abs());
                    let d = on((w2 - z2) / c).map_or(f64::INFINITY, |y2| (y - y2).abs());
                    worst = worst.max(d - radius - 1e-12);
                }
            }
        }
    }
    (worst.max(0.0), n)
}

fn criterion_6() -> Check {
    let mut seen = Vec::new();
    for (ystep, c, rho) in [(0.1, 1.0, vec![0.1, 0.2]), (0.05, 2.0, vec![0.05, 0.1, 0.15])] {
        let (y, z, w) = (line(-1.0, 1.0, ystep), line(-1.0, 1.0, 0.1), line(-3.0, 3.0, 0.1));
        let expr = format!("{c}*y + z");
        let g = BiMultiMap::from_formula(&y, &z, &w, &[expr.as_str()], ["y", "z"], OffGridPolicy::Drop).unwrap();
        let base = GammaInstance::new(g, [&[0.0], &[0.0], &[0.0]], c, 1.0, cfg(0.3, 0.3, 0.2, &rho)).map_err(|e| e.to_string())?;
        let boxed = |s: &SpaceRef| s.points().iter().map(|p| p[0]).filter(|v| v.abs() <= base.gamma + 1e-12).collect::<Vec<_>>();
        for delta in [0.01, 0.5] {
            let sweep = base.clone().with_delta(delta).and_then(|i| i.sweep()).map_err(|e| e.to_string())?;
            let (oracle, n) = oracle_gamma(c, &y, &boxed(&z), &boxed(&w), base.gamma, delta);
            ensure(sweep.max_defect == ExtReal::ZERO && oracle == 0.0 && sweep.checked == n, || {
                format!("C = {c}, δ = {delta}: defect {:?}, oracle {oracle}, checked {} of {n}", sweep.max_defect, sweep.checked)
            })?;
            ensure(sweep.hypotheses.iter().all(|h| h.passed) && sweep.parameter_lipschitz.holds, || format!("C = {c}: hypotheses"))?;
        }
        seen.push(format!("{expr}: 2 deltas x {} tuples", (boxed(&z).len() * boxed(&w).len()).pow(2)));
    }
    Ok(seen.join(", "))
}

// ---------------------------------------------------------------------------
// 7. EVP engine

fn scaled(scale: f64) -> ScaledNorm {
    ScaledNorm { norm: Norm::Sum, scale }
}

/// Both conclusions by plain loops: h(v) ≤ h(r) − d(v, r) and
/// h(v) ≤ h(w) + d(v, w) for every w.
fn evp_oracle(d: &[Point], h: &[f64], r: usize, v: usize, scale: f64) -> bool {
    let dist = |a: &[f64], b: &[f64]| scale * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    h[v] <= h[r] - dist(&d[v], &d[r]) + 1e-12 && (0..d.len()).all(|w| h[v] <= h[w] + dist(&d[v], &d[w]) + 1e-12)
}

fn criterion_7() -> Check {
    use proptest::prelude::*;
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let strategy = (
        prop::collection::btree_set((0i32..10, 0i32..10), 1..60),
        prop::collection::vec(0.0f64..3.0, 60),
        0.05f64..3.0,
        0usize..60,
    );
    let mut runner = TestRunner::deterministic();
    let mut cases = 0;
    let mut most = 0;
    for _ in 0..500 {
        let (cells, hs, scale, r) = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let d: Vec<Point> = cells.iter().map(|&(a, b)| vec![a as f64 * 0.1, b as f64 * 0.1]).collect();
        let h = &hs[..d.len()];
        let r = r % d.len();
        let norm = scaled(scale);
        let e = ekeland_point(&d, h, r, &norm).map_err(|e| e.to_string())?;
        ensure(evp_violation(&d, h, r, e.index, &norm).is_none() && evp_oracle(&d, h, r, e.index, scale), || {
            format!("case {cases}: point {:?} fails a conclusion", e.point)
        })?;
        ensure(e.iterations <= d.len(), || format!("case {cases}: {} iterations on {} points", e.iterations, d.len()))?;
        most = most.max(e.iterations);
        cases += 1;
    }
    let two: Vec<Point> = vec![vec![0.0], vec![1.0]];
    let pick = |s: f64| ekeland_point(&two, &[1.0, 0.0], 0, &scaled(s)).map(|e| e.point[0]);
    let picks = [pick(0.5), pick(0.999), pick(1.0), pick(2.0)].map(|p| p.unwrap_or(f64::NAN));
    ensure(picks == [1.0, 1.0, 0.0, 0.0], || format!("two-point picks {picks:?} for scales 0.5, 0.999, 1, 2"))?;
    Ok(format!("{cases} random runs re-validated (max {most} iterations); two-point answer 1 -> 0 at scale 1"))
}

// ---------------------------------------------------------------------------
// 8. Solver

/// F₁ = 2x, F₂ = x, G = y − z, so H is the identity.
fn identity_chain(steps: [f64; 4]) -> (MultiMap, MultiMap, BiMultiMap) {
    let (x, y, z, w) = (line(-1.0, 1.0, steps[0]), line(-2.0, 2.0, steps[1]), line(-1.0, 1.0, steps[2]), line(-3.0, 3.0, steps[3]));
    (
        MultiMap::from_linear(&[vec![2.0]], &x, &y).unwrap(),
        MultiMap::from_linear(&[vec![1.0]], &x, &z).unwrap(),
        BiMultiMap::subtraction(&y, &z, &w).unwrap(),
    )
}

fn criterion_8() -> Check {
    let o: &[f64] = &[0.0];
    let k = RateConstants::composition(2.0, 1.0, 1.0, 1.0);
    let (f1, f2, g) = identity_chain([0.02, 0.04, 0.02, 0.02]);
    let fine = cfg(0.5, 0.5, 0.6, &[0.2, 0.4, 0.5]);
    // Every other grid point of W strictly inside (−0.4, 0.4).
    let targets: Vec<f64> = g.target().points().iter().map(|p| p[0]).filter(|u| u.abs() < 0.4 - 1e-9).step_by(2).collect();
    ensure(targets.len() == 20, || format!("{} targets", targets.len()))?;
    for &u in &targets {
        let s = solve_inclusion(&f1, &f2, &g, [o, o, o, o], &k, &[u], &fine).map_err(|e| format!("u = {u}: {e}"))?;
        ensure(s.status == SolveStatus::Success && (s.x[0] - u).abs() < 1e-9 && s.residual == 0.0, || {
            format!("u = {u}: {:?} x = {:?} residual {}", s.status, s.x, s.residual)
        })?;
        ensure(s.evp.iterations <= s.domain_size, || format!("u = {u}: {} iterations", s.evp.iterations))?;
    }
    let (f1, f2, g) = identity_chain([0.2, 0.4, 0.2, 0.1]);
    let coarse = cfg(0.5, 0.5, 0.6, &[0.2, 0.4, 0.6]);
    let mut worst: f64 = 0.0;
    for u in [0.1, 0.3, -0.3] {
        let s = solve_inclusion(&f1, &f2, &g, [o, o, o, o], &k, &[u], &coarse).map_err(|e| format!("u = {u}: {e}"))?;
        ensure(s.status == SolveStatus::DiscretizationGap && s.residual > 0.0 && s.residual <= 0.2 + 1e-12, || {
            format!("coarse u = {u}: {:?} residual {}", s.status, s.residual)
        })?;
        worst = worst.max(s.residual);
    }
    Ok(format!("{} targets solved exactly; coarse grid gaps with residual <= {worst:.3}", targets.len()))
}

// ---------------------------------------------------------------------------
// 9. Fixed-point bound

fn criterion_9() -> Check {
    let (x, y) = (line(-1.0, 1.0, 0.05), line(-2.0, 2.0, 0.1));
    let f1 = MultiMap::from_linear(&[vec![2.0]], &x, &y).unwrap();
    let f2 = MultiMap::constant(&x, &y, &[vec![0.5]]).unwrap();
    let c = cfg(0.5, 1.0, 0.5, &[0.05, 0.1, 0.2]);
    let inst = CoincidenceInstance::new(f1.clone(), f2.clone(), &[0.25], &[0.5], 0.5, 0.01, c)
        .and_then(|i| i.with_radii(0.6, 1.0))
        .and_then(|i| i.with_difference_grid(&line(-3.0, 3.0, 0.1)))
        .map_err(|e| e.to_string())?;
    let row = inst.verify(&[0.0]).map_err(|e| e.to_string())?;
    let rhs = 0.5 / (1.0 / 0.5 - 0.01);
    ensure((row.lhs.value() - 0.25).abs() < 1e-12 && (row.rhs.value() - rhs).abs() < 1e-12 && row.holds, || {
        format!("x = 0: lhs {:?}, rhs {:?} vs {rhs}", row.lhs, row.rhs)
    })?;
    let report = inst.sweep().map_err(|e| e.to_string())?;
    let in_ball = x.points().iter().filter(|p| (p[0] - 0.25).abs() < 0.6).count();
    ensure(report.violations == 0 && report.rows.len() == in_ball, || format!("{} violations over {} rows", report.violations, report.rows.len()))?;
    let brute: Vec<Point> = x.points().iter().filter(|p| y.index_of(&[2.0 * p[0]]) == y.index_of(&[0.5])).cloned().collect();
    ensure(report.fix_set == brute && brute == vec![vec![0.25]], || format!("fix set {:?}", report.fix_set))?;

    let p = line(-1.0, 1.0, 0.1);
    let wide_y = line(-3.0, 3.0, 0.1);
    let f1p = ParamMultiMap::from_formula(&x, &p, &wide_y, &["2*x - p"], OffGridPolicy::Reject).unwrap();
    let f2p = MultiMap::constant(&x, &wide_y, &[vec![0.5]]).unwrap();
    let s = parametric_fix(&f1p, &f2p).map_err(|e| e.to_string())?;
    let h = param_difference_on(&f1p, &f2p, &line(-4.0, 4.0, 0.1)).map_err(|e| e.to_string())?;
    ensure(s == implicit_map(&h).map_err(|e| e.to_string())?, || "parametric_fix differs from implicit_map".into())?;
    Ok(format!("lhs 0.25 <= rhs {:.6} at x = 0; {} rows, 0 violations; fix set {{0.25}}", row.rhs.value(), report.rows.len()))
}

// ---------------------------------------------------------------------------
// 10. Determinism

fn example(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("instances").join(name)
}

fn payloads(threads: usize) -> Vec<String> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    pool.install(|| {
        let mut out = Vec::new();
        for f in ["identity.json", "linear-2x.json", "coincidence.json", "implicit.json"] {
            let inst = regmap_cli::load_instance(&example(f)).unwrap();
            out.extend(regmap_cli::run_tasks(&inst, &Default::default()).iter().map(|r| r.payload_string()));
        }
        let o: &[f64] = &[0.0];
        for ch in composition_cases() {
            let cert = certify_composition(&ch.f1, &ch.f2, &ch.g, [o, o, o, o], ch.k, &wide()).unwrap();
            out.push(serde_json::to_string(&cert).unwrap());
        }
        for c in equivalence_cases() {
            out.push(serde_json::to_string(&check_equivalence_around(&c.f, &c.xbar, &c.ybar, &c.cfg).unwrap()).unwrap());
        }
        out
    })
}

fn criterion_10() -> Check {
    let one = payloads(1);
    let many = payloads(8);
    let again = payloads(8);
    let differ = |a: &[String], b: &[String]| a.iter().zip(b).position(|(x, y)| x != y);
    ensure(one.len() == many.len() && differ(&one, &many).is_none(), || format!("1 vs 8 threads differ at report {:?}", differ(&one, &many)))?;
    ensure(differ(&many, &again).is_none(), || "repeated run differs".into())?;
    let bytes: usize = one.iter().map(String::len).sum();
    Ok(format!("{} payloads ({bytes} bytes) identical across 1 thread, 8 threads, and a repeat", one.len()))
}

// ---------------------------------------------------------------------------

fn run(n: usize, title: &str, budget_s: Option<f64>, f: fn() -> Check) -> bool {
    let start = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let secs = start.elapsed().as_secs_f64();
    let r = match (r, budget_s) {
        (Ok(_), Some(b)) if secs > b => Err(format!("took {secs:.2}s, budget {b}s")),
        (r, _) => r,
    };
    let (status, detail) = match &r {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {n:>2}  {status}  {secs:>7.2}s  {title}: {detail}");
    r.is_ok()
}

fn main() {
    let results = [
        run(1, "modulus oracle agreement", Some(5.0), criterion_1),
        run(2, "equivalence suite", Some(60.0), criterion_2),
        run(3, "composition soundness", Some(120.0), criterion_3),
        run(4, "special-case consistency", None, criterion_4),
        run(5, "implicit-map tightness", None, criterion_5),
        run(6, "gamma inclusion", None, criterion_6),
        run(7, "EVP engine", None, criterion_7),
        run(8, "solver", None, criterion_8),
        run(9, "fixed-point bound", Some(10.0), criterion_9),
        run(10, "determinism", None, criterion_10),
    ];
    let failed = results.iter().filter(|ok| !**ok).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
