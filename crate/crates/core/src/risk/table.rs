use super::quantile::t_quantile_exact;
use super::spline::CubicSpline;
use crate::error::{Error, Result};

pub const DOF_MIN: f64 = 2.5;
pub const DOF_MAX: f64 = 40.0;
pub const DOF_STEP: f64 = 0.5;
pub const DEFAULT_LEVELS: [f64; 5] = [0.01, 0.05, 0.1, 0.2, 0.5];

/// Precomputed t-quantiles on a (dof, level) grid.
///
/// Each level column is interpolated along the dof axis by a cubic spline
/// parameterized in `1/dof` with not-a-knot ends. The quantile is close to
/// affine in `1/dof`, which keeps the interpolation error far below what a
/// spline in `dof` itself achieves near the low-dof end.
#[derive(Debug, Clone)]
pub struct QuantileTable {
    dofs: Vec<f64>,
    levels: Vec<f64>,
    values: Vec<Vec<f64>>,
    splines: Vec<CubicSpline>,
}

impl QuantileTable {
    pub fn new(levels: &[f64]) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::validation("quantile table needs at least one level"));
        }
        let n = ((DOF_MAX - DOF_MIN) / DOF_STEP).round() as usize + 1;
        let dofs: Vec<f64> = (0..n).map(|i| DOF_MIN + i as f64 * DOF_STEP).collect();
        let mut values = Vec::with_capacity(levels.len());
        let mut splines = Vec::with_capacity(levels.len());
        for &c in levels {
            let col = dofs
                .iter()
                .map(|&d| t_quantile_exact(d, c))
                .collect::<Result<Vec<_>>>()?;
            let mut pts: Vec<(f64, f64)> = dofs.iter().map(|&d| 1.0 / d).zip(col.iter().copied()).collect();
            pts.reverse();
            let (us, qs): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            splines.push(CubicSpline::not_a_knot(&us, &qs));
            values.push(col);
        }
        Ok(Self {
            dofs,
            levels: levels.to_vec(),
            values,
            splines,
        })
    }

    pub fn with_default_levels() -> Self {
        Self::new(&DEFAULT_LEVELS).expect("default levels are valid")
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn dof_knots(&self) -> &[f64] {
        &self.dofs
    }

    /// Stored knot value for (dof knot index, level index).
    pub fn knot_value(&self, dof_idx: usize, level_idx: usize) -> f64 {
        self.values[level_idx][dof_idx]
    }

    /// Index of a configured level; levels are matched exactly.
    pub fn level_index(&self, c: f64) -> Option<usize> {
        self.levels.iter().position(|&l| l == c)
    }

    /// Spline lookup with a pre-resolved level index; no range checks.
    #[inline]
    pub fn eval_unchecked(&self, dof: f64, level_idx: usize) -> f64 {
        // dof knots are uniform, so the interval comes from dof directly;
        // the spline's knots run in reverse order (ascending 1/dof).
        let last = self.dofs.len() - 2;
        let f = ((dof - DOF_MIN) / DOF_STEP).floor();
        let k = if f <= 0.0 { 0 } else { (f as usize).min(last) };
        self.splines[level_idx].eval_in(last - k, 1.0 / dof)
    }

    /// Spline-interpolated quantile. `dof` must lie in `[DOF_MIN, DOF_MAX]`
    /// and `c` must be one of the table's levels.
    pub fn quantile(&self, dof: f64, c: f64) -> Result<f64> {
        if !(dof >= DOF_MIN) {
            return Err(Error::validation(format!(
                "dof {dof} below table minimum {DOF_MIN}; use the exact evaluator"
            )));
        }
        if dof > DOF_MAX {
            return Err(Error::validation(format!(
                "dof {dof} above table maximum {DOF_MAX}; use the normal branch"
            )));
        }
        let li = self
            .level_index(c)
            .ok_or_else(|| Error::validation(format!("level {c} is not a table level")))?;
        Ok(self.eval_unchecked(dof, li))
    }
}

pub fn t_quantile_fast(table: &QuantileTable, dof: f64, c: f64) -> Result<f64> {
    table.quantile(dof, c)
}
