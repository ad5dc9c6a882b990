//! Task dispatch. Each task produces a status and a JSON payload; core
//! errors become ERROR reports, refuted hypotheses become FAIL reports.

use std::time::Instant;

use regmap_core::coincidence::CoincidenceInstance;
use regmap_core::composition::{
    certify_composition, certify_difference, certify_lyusternik_graves, certify_partial_lipschitz, certify_partial_open, Status,
    Theorem, DEFAULT_DELTA,
};
use regmap_core::ekeland::{solve_inclusion, solve_inclusion_at, SolveStatus};
use regmap_core::implicit::{GammaInstance, ImplicitInstance, Side};
use regmap_core::moduli::{self, check_equivalence_around, check_equivalence_at, ModulusKind};
use regmap_core::Error;
use serde::Serialize;
use serde_json::{json, Value};

use crate::instance::*;
use crate::report::{Report, TaskStatus};
use crate::TOOL_VERSION;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Run only the task with this name; `None` or `"all"` runs every task.
    pub task: Option<String>,
    /// Run only tasks of this subcommand; `None` runs every kind.
    pub command: Option<String>,
    pub fail_fast: bool,
}

impl RunOptions {
    fn selects(&self, t: &TaskDecl) -> bool {
        let by_name = match self.task.as_deref() {
            None | Some("all") => true,
            Some(n) => n == t.name,
        };
        by_name && self.command.as_deref().is_none_or(|c| c == t.kind.command())
    }
}

/// Runs the selected tasks in file order.
pub fn run_tasks(inst: &Instance, opts: &RunOptions) -> Vec<Report> {
    let mut out = Vec::new();
    for t in inst.file.tasks.iter().filter(|t| opts.selects(t)) {
        let r = run_task(inst, t);
        let stop = opts.fail_fast && !r.status.is_ok();
        out.push(r);
        if stop {
            break;
        }
    }
    out
}

pub fn run_task(inst: &Instance, task: &TaskDecl) -> Report {
    let start = Instant::now();
    let (status, payload) = match execute(inst, &task.kind) {
        Ok(r) => r,
        Err(Failure::Core(Error::Refuted { name, constant, report, witness })) => (
            TaskStatus::Fail,
            json!({ "refuted": { "name": name, "constant": constant, "report": report, "witness": witness } }),
        ),
        Err(Failure::Core(e)) => (TaskStatus::Error, json!({ "error": e.to_string() })),
        Err(Failure::Binding(e)) => (TaskStatus::Error, json!({ "error": e })),
    };
    Report {
        tool_version: TOOL_VERSION.to_string(),
        instance_digest: inst.digest.clone(),
        task: task.clone(),
        status,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        payload,
    }
}

enum Failure {
    Core(Error),
    Binding(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<String> for Failure {
    fn from(e: String) -> Self {
        Failure::Binding(e)
    }
}

type Outcome = Result<(TaskStatus, Value), Failure>;

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("core reports serialize")
}

fn pass_if(ok: bool) -> TaskStatus {
    if ok {
        TaskStatus::Pass
    } else {
        TaskStatus::Fail
    }
}

fn execute(inst: &Instance, kind: &TaskKind) -> Outcome {
    match kind {
        TaskKind::Estimate(t) => estimate(inst, t),
        TaskKind::VerifyEquiv(t) => verify_equiv(inst, t),
        TaskKind::Certify(t) => certify(inst, t),
        TaskKind::Implicit(t) => match t.problem {
            ImplicitProblem::SolutionMap => solution_map(inst, t),
            ImplicitProblem::Gamma => gamma(inst, t),
        },
        TaskKind::Solve(t) => solve(inst, t),
        TaskKind::VerifyFixpoint(t) => fixpoint(inst, t),
    }
}

fn estimate(inst: &Instance, t: &EstimateTask) -> Outcome {
    let cfg = inst.config(&t.config)?;
    let (report, witness) = if t.kind.is_partial() {
        let f = inst.param(&t.map)?;
        let a = inst.anchor(&t.anchor, 3)?;
        let r = moduli::estimate_partial(&f, t.kind, &a[0], &a[1], &a[2], cfg)?;
        let w = t.claim.map(|c| moduli::partial_violation(&f, t.kind, &a[0], &a[1], &a[2], cfg, c)).transpose()?;
        (r, w)
    } else {
        let f = inst.multi(&t.map)?;
        let a = inst.anchor(&t.anchor, 2)?;
        let (x, y) = (&a[0], &a[1]);
        let r = match t.kind {
            ModulusKind::Lop => moduli::estimate_lop_around(f, x, y, cfg)?,
            ModulusKind::Lip => moduli::estimate_lip_around(f, x, y, cfg)?,
            ModulusKind::Reg => moduli::estimate_reg_around(f, x, y, cfg)?,
            ModulusKind::Plop => moduli::estimate_plop_at(f, x, y, cfg)?,
            ModulusKind::Psdclm => moduli::estimate_psdclm_at(f, x, y, cfg)?,
            ModulusKind::Hemreg => moduli::estimate_hemreg_at(f, x, y, cfg)?,
            _ => unreachable!("partial kinds handled above"),
        };
        let w = t.claim.map(|c| moduli::violation(f, t.kind, x, y, cfg, c)).transpose()?;
        (r, w)
    };
    let refuted = matches!(witness, Some(Some(_)));
    let mut payload = json!({ "report": report });
    if let Some(c) = t.claim {
        payload["claim"] = json!({ "constant": c, "refuted": refuted, "witness": witness.flatten() });
    }
    Ok((pass_if(!refuted), payload))
}

fn verify_equiv(inst: &Instance, t: &EquivTask) -> Outcome {
    let f = inst.multi(&t.map)?;
    let a = inst.anchor(&t.anchor, 2)?;
    let cfg = inst.config(&t.config)?;
    let r = match t.variant {
        EquivVariant::Around => check_equivalence_around(f, &a[0], &a[1], cfg)?,
        EquivVariant::At => check_equivalence_at(f, &a[0], &a[1], cfg)?,
    };
    Ok((pass_if(r.agree), to_value(&r)))
}

fn certify(inst: &Instance, t: &CertifyTask) -> Outcome {
    let k = inst.constants(&t.constants)?;
    let cfg = inst.config(&t.config)?;
    let name = |n: &Option<String>| n.clone().unwrap_or_default();
    let cert = match t.theorem {
        Theorem::Composition => {
            let a = inst.anchor(&name(&t.anchor), 4)?;
            let (f1, f2, g) = (inst.multi(&name(&t.f1))?, inst.multi(&name(&t.f2))?, inst.bi(&name(&t.g))?);
            certify_composition(f1, f2, g, [&a[0], &a[1], &a[2], &a[3]], k, cfg)?
        }
        Theorem::PartialOpen => {
            let a = inst.anchor(&name(&t.anchor), 3)?;
            let (f, g) = (inst.multi(&name(&t.f))?, inst.bi(&name(&t.g))?);
            certify_partial_open(f, g, [&a[0], &a[1], &a[2]], k, cfg, t.check_condition, t.delta.unwrap_or(DEFAULT_DELTA))?
        }
        Theorem::PartialLipschitz => {
            let a = inst.anchor(&name(&t.anchor), 3)?;
            let (f, g) = (inst.multi(&name(&t.f))?, inst.bi(&name(&t.g))?);
            certify_partial_lipschitz(f, g, [&a[0], &a[1], &a[2]], k, cfg, t.check_condition)?
        }
        Theorem::Difference => {
            let a = inst.anchor(&name(&t.anchor), 3)?;
            let (f1, f2) = (inst.multi(&name(&t.f1))?, inst.multi(&name(&t.f2))?);
            certify_difference(f1, f2, [&a[0], &a[1], &a[2]], k, cfg, inst.space(&name(&t.diff))?)?
        }
        Theorem::LyusternikGraves => {
            let (f, g) = (inst.multi(&name(&t.f))?, inst.multi(&name(&t.g))?);
            let dx = t.diff_x.as_deref().map(|d| inst.space(d)).transpose()?;
            certify_lyusternik_graves(f, g, k, cfg, inst.space(&name(&t.diff))?, dx)?
        }
    };
    Ok((pass_if(cert.status == Status::Pass), to_value(&cert)))
}

fn solution_map(inst: &Instance, t: &ImplicitTask) -> Outcome {
    let h = inst.param(&t.map)?;
    let a = inst.anchor(&t.anchor, 2)?;
    let cfg = inst.config(&t.config)?.clone();
    let mut s = ImplicitInstance::new(h, &a[0], &a[1], t.c, cfg)?;
    if t.alpha.is_some() || t.beta.is_some() || t.gamma.is_some() {
        let (al, be, ga) = (t.alpha.unwrap_or(s.alpha), t.beta.unwrap_or(s.beta), t.gamma.unwrap_or(s.gamma));
        s = s.with_radii(al, be, ga)?;
    }
    let side = t.side.unwrap_or(Side::Solution);
    let mut ok = true;
    let mut payload = json!({ "side": side, "alpha": s.alpha, "beta": s.beta, "gamma": s.gamma });
    match &t.points {
        Some(points) => {
            let rows = points.iter().map(|[x, p]| s.verify_estimate(side, x, p)).collect::<regmap_core::Result<Vec<_>>>()?;
            ok &= rows.iter().all(|r| r.holds);
            payload["estimates"] = to_value(&rows);
        }
        None => {
            let sweep = s.sweep_estimate(side)?;
            ok &= sweep.violations.is_empty();
            payload["sweep"] = to_value(&sweep);
        }
    }
    if let Some(lip) = t.lipschitz {
        let b = match side {
            Side::Solution => s.bound_lip(lip)?,
            Side::Parameter => s.bound_reg(lip)?,
        };
        ok &= b.consistent;
        payload["bound"] = to_value(&b);
    }
    Ok((pass_if(ok), payload))
}

fn gamma(inst: &Instance, t: &ImplicitTask) -> Outcome {
    let g = inst.bi(&t.map)?.clone();
    let a = inst.anchor(&t.anchor, 3)?;
    let cfg = inst.config(&t.config)?.clone();
    let d = t.d.ok_or_else(|| "Γ problems need `d`".to_string())?;
    let mut base = GammaInstance::new(g, [&a[0], &a[1], &a[2]], t.c, d, cfg)?;
    if let Some(ga) = t.gamma {
        base = base.with_gamma(ga)?;
    }
    let deltas = t.deltas.clone().unwrap_or_else(|| vec![DEFAULT_DELTA]);
    let mut sweeps = Vec::new();
    for delta in deltas {
        sweeps.push(base.clone().with_delta(delta)?.sweep()?);
    }
    let ok = sweeps.iter().all(|s| s.max_defect.value() <= 1e-12 && s.hypotheses.iter().all(|h| h.passed));
    Ok((pass_if(ok), json!({ "sweeps": sweeps })))
}

fn solve(inst: &Instance, t: &SolveTask) -> Outcome {
    let (f1, f2, g) = (inst.multi(&t.f1)?, inst.multi(&t.f2)?, inst.bi(&t.g)?);
    let a = inst.anchor(&t.anchor, 4)?;
    let anchor = [&a[0][..], &a[1], &a[2], &a[3]];
    let k = inst.constants(&t.constants)?;
    let mut status = TaskStatus::Success;
    let mut results = Vec::new();
    for u in &t.targets {
        let r = match (&t.config, t.rho) {
            (Some(c), _) if t.tau.is_none() => solve_inclusion(f1, f2, g, anchor, &k, u, inst.config(c)?),
            (Some(c), _) => {
                let cfg = inst.config(c)?;
                let rate = k.rate(Theorem::Composition)?;
                let gap = g.target().dist(u, anchor[3]);
                match cfg.rho_grid.iter().copied().filter(|&r| gap < rate * r).min_by(f64::total_cmp) {
                    Some(rho) => solve_inclusion_at(f1, f2, g, anchor, &k, u, rho, t.tau),
                    None => Err(Error::Precondition(format!("‖u − w̄‖ = {gap} is not below (LC − MD)ρ for any ρ in the grid"))),
                }
            }
            (None, Some(rho)) => solve_inclusion_at(f1, f2, g, anchor, &k, u, rho, t.tau),
            (None, None) => return Err("give exactly one of `config` and `rho`".to_string().into()),
        };
        match r {
            Ok(s) => {
                if s.status == SolveStatus::DiscretizationGap && status == TaskStatus::Success {
                    status = TaskStatus::DiscretizationGap;
                }
                results.push(json!({ "u": u, "solution": s }));
            }
            Err(e @ (Error::Precondition(_) | Error::OffGrid { .. } | Error::DimensionMismatch { .. })) => {
                status = TaskStatus::Error;
                results.push(json!({ "u": u, "error": e.to_string() }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((status, json!({ "results": results })))
}

fn fixpoint(inst: &Instance, t: &FixpointTask) -> Outcome {
    let (f1, f2) = (inst.multi(&t.f1)?.clone(), inst.multi(&t.f2)?.clone());
    let a = inst.anchor(&t.anchor, 2)?;
    let cfg = inst.config(&t.config)?.clone();
    let mut c = CoincidenceInstance::new(f1, f2, &a[0], &a[1], t.l, t.m, cfg)?;
    if t.alpha.is_some() || t.beta.is_some() {
        let (al, be) = (t.alpha.unwrap_or(c.alpha), t.beta.unwrap_or(c.beta));
        c = c.with_radii(al, be)?;
    }
    if let Some(d) = &t.diff {
        c = c.with_difference_grid(inst.space(d)?)?;
    }
    let report = c.sweep()?;
    let mut ok = report.violations == 0;
    let mut payload = to_value(&report);
    if let Some(points) = &t.points {
        let rows = points.iter().map(|x| c.verify(x)).collect::<regmap_core::Result<Vec<_>>>()?;
        ok &= rows.iter().all(|r| r.holds);
        payload["point_rows"] = to_value(&rows);
    }
    Ok((pass_if(ok), payload))
}
