//! Tail risk of a cell's latent traversability.
//!
//! The NIG posterior's marginal over the mean is a location-scale Student's
//! t. Risk is its lower-tail expected shortfall (CVaR): the expected
//! traversability given it falls below the c-quantile. Quantiles come from a
//! precomputed spline table for moderate degrees of freedom, the normal
//! distribution above 40, and the exact evaluator below the table.

mod bench;
mod quantile;
pub mod special;
mod spline;
mod table;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{CellRisk, NigState};

pub use bench::{benchmark, RiskBenchmark};
pub use quantile::t_quantile_exact;
pub use spline::{CubicSpline, EndCondition};
pub use table::{t_quantile_fast, QuantileTable, DEFAULT_LEVELS, DOF_MAX, DOF_MIN, DOF_STEP};

use quantile::check_level;
use special::{normal_pdf, normal_quantile, t_log_norm};

/// Default tail level.
pub const DEFAULT_LEVEL: f64 = 0.1;

/// Above this many degrees of freedom the normal approximation is used.
pub const GAUSSIAN_SWITCH_DOF: f64 = DOF_MAX;

/// Location-scale Student's t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TMarginal {
    pub dof: f64,
    pub loc: f64,
    pub scale: f64,
}

impl TMarginal {
    pub fn new(dof: f64, loc: f64, scale: f64) -> Result<Self> {
        if !(dof > 0.0 && scale > 0.0 && scale.is_finite() && loc.is_finite()) {
            return Err(Error::validation(format!(
                "invalid t marginal: dof={dof} loc={loc} scale={scale}"
            )));
        }
        Ok(Self { dof, loc, scale })
    }

    pub fn uses_gaussian(&self) -> bool {
        self.dof > GAUSSIAN_SWITCH_DOF
    }
}

/// Marginal of the latent mean: dof = 2a, loc = γ, scale = √(b(κ+1)/(aκ)).
pub fn marginal(nig: &NigState) -> Result<TMarginal> {
    nig.validate()?;
    let scale = (nig.b * (nig.kappa + 1.0) / (nig.a * nig.kappa)).sqrt();
    TMarginal::new(2.0 * nig.a, nig.gamma, scale)
}

/// Quantile, VaR and CVaR evaluation sharing one read-only table.
#[derive(Debug, Clone)]
pub struct RiskEvaluator {
    table: Arc<QuantileTable>,
}

impl Default for RiskEvaluator {
    fn default() -> Self {
        Self::new(Arc::new(QuantileTable::with_default_levels()))
    }
}

impl RiskEvaluator {
    pub fn new(table: Arc<QuantileTable>) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &QuantileTable {
        &self.table
    }

    /// Standardized t quantile routed through the normal branch, the table
    /// or the exact evaluator.
    pub fn quantile(&self, dof: f64, c: f64) -> Result<f64> {
        check_level(c)?;
        if dof > GAUSSIAN_SWITCH_DOF {
            return Ok(normal_quantile(c));
        }
        if dof >= DOF_MIN {
            if let Some(li) = self.table.level_index(c) {
                return Ok(self.table.eval_unchecked(dof, li));
            }
        }
        t_quantile_exact(dof, c)
    }

    pub fn var(&self, m: &TMarginal, c: f64) -> Result<f64> {
        Ok(m.loc + m.scale * self.quantile(m.dof, c)?)
    }

    /// Lower-tail expected shortfall E[X | X < VaR_c].
    ///
    /// For a standard t with ν dof and quantile t_c this is
    /// -(ν + t_c²)/(ν - 1) · f(t_c)/c; the normal branch uses -φ(z_c)/c.
    pub fn cvar(&self, m: &TMarginal, c: f64) -> Result<f64> {
        check_level(c)?;
        if m.uses_gaussian() {
            let z = normal_quantile(c);
            return Ok(m.loc - m.scale * normal_pdf(z) / c);
        }
        if m.dof <= 1.0 {
            return Err(Error::validation(format!(
                "CVaR diverges for dof <= 1 (got {})",
                m.dof
            )));
        }
        let t = self.quantile(m.dof, c)?;
        Ok(m.loc - m.scale * standard_t_shortfall(m.dof, t, c))
    }

    pub fn cvar_for_cell(&self, nig: &NigState, c: f64) -> Result<f64> {
        self.cvar(&marginal(nig)?, c)
    }
}

/// (ν + t²)/(ν − 1) · f(t)/c for the standard t.
#[inline]
fn standard_t_shortfall(dof: f64, t: f64, c: f64) -> f64 {
    let log_pdf = t_log_norm(dof) - 0.5 * (dof + 1.0) * (t * t / dof).ln_1p();
    (dof + t * t) / (dof - 1.0) * log_pdf.exp() / c
}

/// Exact-path CVaR: exact quantile and no normal switch. Used as the
/// reference when measuring the fast path.
pub fn cvar_exact(m: &TMarginal, c: f64) -> Result<f64> {
    check_level(c)?;
    if m.dof <= 1.0 {
        return Err(Error::validation(format!("CVaR diverges for dof <= 1 (got {})", m.dof)));
    }
    let t = t_quantile_exact(m.dof, c)?;
    Ok(m.loc - m.scale * standard_t_shortfall(m.dof, t, c))
}

/// Normal-branch CVaR regardless of dof.
pub fn cvar_gaussian(m: &TMarginal, c: f64) -> Result<f64> {
    check_level(c)?;
    let z = normal_quantile(c);
    Ok(m.loc - m.scale * normal_pdf(z) / c)
}

/// A CVaR evaluator bound to one tail level, used to score map cells.
#[derive(Debug, Clone)]
pub struct RiskModel {
    evaluator: RiskEvaluator,
    level: f64,
}

impl Default for RiskModel {
    fn default() -> Self {
        Self {
            evaluator: RiskEvaluator::default(),
            level: DEFAULT_LEVEL,
        }
    }
}

impl RiskModel {
    pub fn new(evaluator: RiskEvaluator, level: f64) -> Result<Self> {
        check_level(level)?;
        Ok(Self { evaluator, level })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn evaluator(&self) -> &RiskEvaluator {
        &self.evaluator
    }

    pub fn cvar_for_cell(&self, nig: &NigState) -> Result<f64> {
        self.evaluator.cvar_for_cell(nig, self.level)
    }
}

impl CellRisk for RiskModel {
    fn cell_cvar(&self, nig: &NigState) -> f64 {
        // Valid map priors keep dof > 1; anything else scores as worst case.
        self.cvar_for_cell(nig).unwrap_or(f64::NEG_INFINITY)
    }
}

