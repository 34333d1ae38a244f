use super::special::{normal_quantile, t_cdf, t_pdf};
use crate::error::{Error, Result};

pub(crate) fn check_level(c: f64) -> Result<()> {
    if c > 0.0 && c < 1.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("level must lie in (0, 1), got {c}")))
    }
}

/// Exact c-quantile of Student's t with `dof` degrees of freedom.
///
/// Newton iteration on the CDF (itself via the regularized incomplete beta)
/// started from the normal quantile. For c < 1/2 the start lies between the
/// root and zero, where the CDF is convex, so iterates approach the root
/// monotonically without overshoot.
pub fn t_quantile_exact(dof: f64, c: f64) -> Result<f64> {
    if !(dof.is_finite() && dof > 0.0) {
        return Err(Error::validation(format!("dof must be > 0, got {dof}")));
    }
    check_level(c)?;
    if c == 0.5 {
        return Ok(0.0);
    }
    let p = c.min(1.0 - c);
    let mut t = normal_quantile(p);
    for _ in 0..500 {
        let f = t_pdf(t, dof);
        let step = (t_cdf(t, dof) - p) / f;
        if !step.is_finite() {
            break;
        }
        t -= step;
        if step.abs() <= 1e-15 * t.abs().max(1.0) {
            break;
        }
    }
    Ok(if c < 0.5 { t } else { -t })
}
