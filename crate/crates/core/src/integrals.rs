//! Log-domain trapezoid quadrature on grids.
//!
//! Integrals of `e^g` are returned as their logarithm and `e^g` is never
//! formed without first subtracting the maximum exponent. Sums use a fixed
//! pairwise tree so results do not depend on scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, ProductGridFunction};
use crate::transforms::AffineFunction;

/// Cells more than this many nats below the maximum underflow to zero in
/// double precision.
pub const UNDERFLOW_NATS: f64 = 745.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogIntegralResult {
    /// `log` of the integral, in nats.
    pub value: f64,
    /// Fraction of cells more than [`UNDERFLOW_NATS`] below the maximum.
    pub underflow_fraction: f64,
}

/// Pairwise (cascade) summation with a fixed split.
pub(crate) fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Natural log of the trapezoid weight of every node (0 in the interior,
/// `-k log 2` on a face of codimension `k`). Cell volume is not included.
pub fn trapezoid_log_weights(spec: &GridSpec) -> Vec<f64> {
    let mut idx = vec![0usize; spec.dim()];
    (0..spec.len())
        .map(|i| {
            spec.unravel(i, &mut idx);
            let faces = idx
                .iter()
                .zip(spec.axes())
                .filter(|(&j, a)| j == 0 || j + 1 == a.count)
                .count();
            -(faces as f64) * std::f64::consts::LN_2
        })
        .collect()
}

/// Quadrature of `e^{exponents}` where `-inf` marks cells outside the
/// integration domain.
pub(crate) fn log_integral_exponents(
    spec: &GridSpec,
    log_w: &[f64],
    exponents: &[f64],
) -> Result<LogIntegralResult> {
    let m = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::INFINITY {
        return Err(Error::Domain("integrand exponent is +inf at some node".into()));
    }
    if m == f64::NEG_INFINITY {
        return Err(Error::Domain("integrand has no finite values".into()));
    }
    let mut under = 0usize;
    let terms: Vec<f64> = exponents
        .iter()
        .zip(log_w)
        .map(|(&g, &lw)| {
            if g < m - UNDERFLOW_NATS {
                under += 1;
            }
            (g - m + lw).exp()
        })
        .collect();
    Ok(LogIntegralResult {
        value: m + pairwise_sum(&terms).ln() + spec.cell_volume().ln(),
        underflow_fraction: under as f64 / exponents.len() as f64,
    })
}

/// `log` of the trapezoid integral of `e^g` over the grid box.
pub fn log_integral(g: &GridFunction) -> Result<LogIntegralResult> {
    if g.values().iter().any(|v| *v == f64::INFINITY) {
        return Err(Error::Domain(
            "the exponent must be real wherever it is integrated, found +inf".into(),
        ));
    }
    let w = trapezoid_log_weights(g.spec());
    log_integral_exponents(g.spec(), &w, g.values())
}

/// `log` of the integral of `e^{-v}`, with `v = +inf` contributing zero.
fn log_integral_neg(spec: &GridSpec, log_w: &[f64], v: &[f64]) -> Result<f64> {
    let exps: Vec<f64> = v.iter().map(|&v| -v).collect();
    Ok(log_integral_exponents(spec, log_w, &exps)?.value)
}

/// `c = log int e^{psi - phi0}`; zero exactly when the pair is normalized.
pub fn normalization_gap(psi: &GridFunction, phi0: &GridFunction) -> Result<f64> {
    if psi.spec() != phi0.spec() {
        return Err(Error::Shape("psi and phi(0, .) live on different grids".into()));
    }
    let w = trapezoid_log_weights(psi.spec());
    let exps: Vec<f64> = psi
        .values()
        .iter()
        .zip(phi0.values())
        .map(|(&p, &f)| exponent_difference(p, f))
        .collect::<Result<_>>()?;
    Ok(log_integral_exponents(psi.spec(), &w, &exps)?.value)
}

/// `a - b` as an integrand exponent: `b = +inf` removes the cell.
#[inline]
fn exponent_difference(a: f64, b: f64) -> Result<f64> {
    if b == f64::INFINITY {
        Ok(f64::NEG_INFINITY)
    } else if a == f64::INFINITY {
        Err(Error::Domain(
            "extension is +inf where the weight is finite; the integral diverges".into(),
        ))
    } else {
        Ok(a - b)
    }
}

/// `phi~(t) = -log int e^{-phi(t, x)} dx` at every t-node.
pub fn prekopa_marginal(phi: &ProductGridFunction) -> Result<GridFunction> {
    let w = trapezoid_log_weights(phi.x_spec());
    let values = (0..phi.t_len())
        .into_par_iter()
        .map(|j| {
            log_integral_neg(phi.x_spec(), &w, phi.slice_values(j))
                .map(|v| -v)
                .map_err(|e| Error::Domain(format!("t-slice {j}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    GridFunction::new(phi.t_spec().clone(), values)
}

/// Marginal of the tilted weight `phi(t, x) - a . x - b`, shifted so that it
/// vanishes at `t = 0`.
pub fn tilted_marginal(phi: &ProductGridFunction, affine: &AffineFunction) -> Result<GridFunction> {
    if affine.dim() != phi.x_spec().dim() {
        return Err(Error::Shape(format!(
            "tilt has dimension {}, x-grid has {}",
            affine.dim(),
            phi.x_spec().dim()
        )));
    }
    let anchor = phi.t_zero_index()?;
    let x_spec = phi.x_spec();
    let w = trapezoid_log_weights(x_spec);
    let ell: Vec<f64> = (0..x_spec.len()).map(|i| affine.eval(&x_spec.coords(i))).collect();
    let raw = (0..phi.t_len())
        .into_par_iter()
        .map(|j| {
            let exps: Vec<f64> = phi
                .slice_values(j)
                .iter()
                .zip(&ell)
                .map(|(&f, &l)| if f == f64::INFINITY { f64::NEG_INFINITY } else { l - f })
                .collect();
            log_integral_exponents(x_spec, &w, &exps)
                .map(|r| -r.value)
                .map_err(|e| Error::Domain(format!("t-slice {j}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let base = raw[anchor];
    GridFunction::new(phi.t_spec().clone(), raw.iter().map(|v| v - base).collect())
}

/// `log int e^{Psi(t, .) - phi(t, .)}` at every t-node; the integral
/// constraint holds numerically where this is `<= 0`.
pub fn constraint_residuals(psi: &ProductGridFunction, phi: &ProductGridFunction) -> Result<Vec<f64>> {
    if !psi.same_grids(phi) {
        return Err(Error::Shape("extension and weight live on different grids".into()));
    }
    let x_spec = phi.x_spec();
    let w = trapezoid_log_weights(x_spec);
    (0..phi.t_len())
        .into_par_iter()
        .map(|j| {
            let exps: Vec<f64> = psi
                .slice_values(j)
                .iter()
                .zip(phi.slice_values(j))
                .map(|(&p, &f)| exponent_difference(p, f))
                .collect::<Result<_>>()?;
            log_integral_exponents(x_spec, &w, &exps).map(|r| r.value)
        })
        .collect()
}
