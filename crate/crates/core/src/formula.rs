//! Closed-form rules sampled onto grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What to do when a sampled value is not a point of the target grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffGridPolicy {
    #[default]
    Reject,
    Drop,
}

/// A vector of scalar expressions over named vector variables.
///
/// A variable `x` of dimension 1 is bound both as `x` and `x1`; higher
/// dimensional variables bind `x1`, `x2`, ….
#[derive(Debug, Clone)]
pub struct Formula {
    exprs: Vec<meval::Expr>,
    vars: Vec<(String, usize)>,
}

impl Formula {
    pub fn parse(exprs: &[&str], vars: &[(&str, usize)]) -> Result<Formula> {
        if exprs.is_empty() {
            return Err(Error::Formula("no expressions given".into()));
        }
        let parsed = exprs
            .iter()
            .map(|e| e.parse::<meval::Expr>().map_err(|err| Error::Formula(format!("`{e}`: {err}"))))
            .collect::<Result<Vec<_>>>()?;
        let f = Formula { exprs: parsed, vars: vars.iter().map(|(n, d)| (n.to_string(), *d)).collect() };
        // Unknown identifiers only surface on evaluation; probe once at zero.
        let zeros: Vec<Vec<f64>> = vars.iter().map(|&(_, d)| vec![0.0; d]).collect();
        let refs: Vec<&[f64]> = zeros.iter().map(Vec::as_slice).collect();
        match f.eval(&refs) {
            Err(Error::Formula(msg)) if msg.contains("nknown") => Err(Error::Formula(msg)),
            _ => Ok(f),
        }
    }

    pub fn outputs(&self) -> usize {
        self.exprs.len()
    }

    pub fn eval(&self, args: &[&[f64]]) -> Result<Vec<f64>> {
        if args.len() != self.vars.len() {
            return Err(Error::DimensionMismatch { expected: self.vars.len(), found: args.len() });
        }
        let mut ctx = meval::Context::new();
        for ((name, dim), val) in self.vars.iter().zip(args) {
            if val.len() != *dim {
                return Err(Error::DimensionMismatch { expected: *dim, found: val.len() });
            }
            if *dim == 1 {
                ctx.var(name.as_str(), val[0]);
            }
            for (k, v) in val.iter().enumerate() {
                ctx.var(format!("{name}{}", k + 1), *v);
            }
        }
        self.exprs
            .iter()
            .map(|e| e.eval_with_context(&ctx).map_err(|err| Error::Formula(err.to_string())))
            .collect()
    }
}
