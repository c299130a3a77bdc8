//! The largest convex function `E(phi)` with `log int e^{E - phi} <= 0`.
//!
//! An affine `a . x + b` satisfies the constraint iff `b <= -logZ(a)` with
//! `logZ(a) = log int e^{a . x - phi}`, and a convex function is the supremum
//! of its affine minorants, so `E(phi)` is the conjugate of `logZ`. The
//! finite convex program in [`extremal_oracle`] checks this independently.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexity::{directions, joint_check, ConvexityReport};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, ProductGridFunction};
use crate::integrals::{log_integral_exponents, normalization_gap, trapezoid_log_weights};
use crate::transforms::legendre_transform;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtremalResult {
    pub e: GridFunction,
    pub log_z: GridFunction,
    /// `log int e^{E - phi}`; recorded, not required to be `<= 0`.
    #[serde(with = "crate::io::ext_f64")]
    pub feasibility_residual: f64,
}

/// Slicewise extremal function of a weight on a product grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HatPhi {
    pub values: ProductGridFunction,
    pub joint_convexity: ConvexityReport,
}

/// `logZ(a) = log int e^{a . x - phi(x)} dx` at every node of `dual_spec`.
pub fn log_laplace(phi: &GridFunction, dual_spec: &GridSpec) -> Result<GridFunction> {
    let spec = phi.spec();
    if dual_spec.dim() != spec.dim() {
        return Err(Error::Shape(format!(
            "dual grid has dimension {}, phi has {}",
            dual_spec.dim(),
            spec.dim()
        )));
    }
    let q = trapezoid_log_weights(spec);
    let xs = spec.all_coords();
    let values = (0..dual_spec.len())
        .into_par_iter()
        .map(|j| {
            let a = dual_spec.coords(j);
            let exps: Vec<f64> = xs
                .iter()
                .zip(phi.values())
                .map(|(x, &f)| {
                    if f == f64::INFINITY {
                        f64::NEG_INFINITY
                    } else {
                        a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() - f
                    }
                })
                .collect();
            log_integral_exponents(spec, &q, &exps).map(|r| r.value)
        })
        .collect::<Result<Vec<_>>>()?;
    GridFunction::new(dual_spec.clone(), values)
}

/// `E(phi) = (logZ)*` on the grid of `phi`, with `logZ` sampled on
/// `dual_spec`. The dual grid should cover the slopes of `phi`.
pub fn extremal_function(phi: &GridFunction, dual_spec: &GridSpec) -> Result<ExtremalResult> {
    let log_z = log_laplace(phi, dual_spec)?;
    let e = legendre_transform(&log_z, phi.spec())?;
    let feasibility_residual = normalization_gap(&e, phi)?;
    Ok(ExtremalResult {
        e,
        log_z,
        feasibility_residual,
    })
}

/// [`extremal_function`] of every t-slice, followed by a joint convexity check.
pub fn hat_phi(
    phi: &ProductGridFunction,
    dual_spec: &GridSpec,
    check_samples: usize,
    seed: u64,
) -> Result<HatPhi> {
    let slices = (0..phi.t_len())
        .into_par_iter()
        .map(|j| {
            extremal_function(&phi.slice(j), dual_spec)
                .map(|r| r.e)
                .map_err(|e| Error::Domain(format!("t-slice {j}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let values = ProductGridFunction::from_slices(phi.t_spec().clone(), &slices)?;
    let joint_convexity = joint_check(&values, check_samples, seed)?;
    Ok(HatPhi {
        values,
        joint_convexity,
    })
}

/// Largest node count accepted by [`extremal_oracle`].
pub const ORACLE_MAX_NODES: usize = 1000;

/// Direct maximization of `psi(x0)` over node values `psi` subject to
/// nonnegative second differences along every axis and diagonal line and
/// `log sum_i w_i e^{psi_i - phi_i} + log(cell volume) <= 0`.
///
/// Solved by a log-barrier Newton method from a strictly feasible quadratic,
/// spending at most `iterations` Newton steps. Every iterate is strictly
/// feasible and the best `psi(x0)` seen is returned, so the value is a lower
/// bound for the discrete problem, up to the floor: node values are kept
/// above a level where each node adds at most `e^-40` to the constraint, so
/// the loss is below `N e^-40`. Nodes where `phi = +inf` carry no constraint
/// and are left out.
pub fn extremal_oracle(phi: &GridFunction, x0_index: usize, iterations: usize) -> Result<f64> {
    if iterations == 0 {
        return Err(Error::Parameter("the oracle needs at least one iteration".into()));
    }
    let spec = phi.spec();
    if x0_index >= spec.len() {
        return Err(Error::Parameter(format!(
            "node {x0_index} is outside a grid of {} nodes",
            spec.len()
        )));
    }
    if phi.value(x0_index) == f64::INFINITY {
        return Err(Error::Domain("phi is +inf at x0, so E is unbounded there".into()));
    }
    if spec.len() > ORACLE_MAX_NODES {
        return Err(Error::Parameter(format!(
            "the oracle is dense; {} nodes exceed the limit of {ORACLE_MAX_NODES}",
            spec.len()
        )));
    }
    let log_cell = spec.cell_volume().ln();
    let q = trapezoid_log_weights(spec);
    // variables live on the finite nodes
    let nodes: Vec<usize> = (0..spec.len()).filter(|&i| phi.value(i).is_finite()).collect();
    let mut var_of = vec![usize::MAX; spec.len()];
    for (v, &i) in nodes.iter().enumerate() {
        var_of[i] = v;
    }
    // log-weights of the constraint terms: q_i - phi_i
    let c: Vec<f64> = nodes.iter().map(|&i| q[i] - phi.value(i)).collect();
    if nodes.len() == 1 {
        return Ok(-c[0] - log_cell);
    }
    let target = var_of[x0_index];
    let triples = line_triples(spec, &var_of);

    // Without a floor the convexity slacks grow without bound as the other
    // nodes fall, and no central path exists. At the floor a node adds at
    // most e^-FLOOR_NATS to the constraint.
    let floor = -c.iter().copied().fold(f64::NEG_INFINITY, f64::max) - log_cell - FLOOR_NATS;
    let mut problem = Barrier {
        c: &c,
        log_cell,
        floor,
        triples: &triples,
        target,
    };
    problem.solve(start_point(spec, &nodes, &c, log_cell), iterations)
}

/// Adjacent `(p, m, q)` variable triples along axes and diagonals.
fn line_triples(spec: &GridSpec, var_of: &[usize]) -> Vec<[usize; 3]> {
    let dim = spec.dim();
    let counts = spec.counts();
    let strides = spec.strides();
    let dirs = directions(dim);
    let mut idx = vec![0usize; dim];
    let mut out = Vec::new();
    for m in 0..spec.len() {
        if var_of[m] == usize::MAX {
            continue;
        }
        spec.unravel(m, &mut idx);
        'dirs: for d in &dirs {
            let mut offset: i64 = 0;
            for k in 0..dim {
                let i = idx[k] as i64;
                let n = counts[k] as i64;
                if !(0..n).contains(&(i - d[k])) || !(0..n).contains(&(i + d[k])) {
                    continue 'dirs;
                }
                offset += d[k] * strides[k] as i64;
            }
            let p = var_of[(m as i64 - offset) as usize];
            let q = var_of[(m as i64 + offset) as usize];
            if p != usize::MAX && q != usize::MAX {
                out.push([p, var_of[m], q]);
            }
        }
    }
    out
}

/// A strictly convex quadratic bowl shifted to sit one nat below the
/// integral constraint.
fn start_point(spec: &GridSpec, nodes: &[usize], c: &[f64], log_cell: f64) -> DVector<f64> {
    let center: Vec<f64> = spec.axes().iter().map(|a| 0.5 * (a.lo + a.hi)).collect();
    let diam2: f64 = spec.axes().iter().map(|a| (a.hi - a.lo).powi(2)).sum();
    let bowl: Vec<f64> = nodes
        .iter()
        .map(|&i| {
            let x = spec.coords(i);
            x.iter().zip(&center).map(|(x, c)| (x - c).powi(2)).sum::<f64>() / diam2
        })
        .collect();
    let h = lse(c, &bowl) + log_cell;
    DVector::from_iterator(bowl.len(), bowl.iter().map(|v| v - h - 1.0))
}

fn lse(c: &[f64], v: &[f64]) -> f64 {
    let m = c.iter().zip(v).map(|(c, v)| c + v).fold(f64::NEG_INFINITY, f64::max);
    m + c.iter().zip(v).map(|(c, v)| (c + v - m).exp()).sum::<f64>().ln()
}

const FLOOR_NATS: f64 = 40.0;

struct Barrier<'a> {
    c: &'a [f64],
    log_cell: f64,
    floor: f64,
    triples: &'a [[usize; 3]],
    target: usize,
}

impl Barrier<'_> {
    /// `-tau v_target - sum log g_k - sum log(v_i - floor) - log(-h)`, or
    /// `None` outside the strict interior.
    fn value(&self, v: &DVector<f64>, tau: f64) -> Option<f64> {
        let h = lse(self.c, v.as_slice()) + self.log_cell;
        if !(h < 0.0) {
            return None;
        }
        let mut f = -tau * v[self.target] - (-h).ln();
        for &[p, m, q] in self.triples {
            let g = v[p] + v[q] - 2.0 * v[m];
            if !(g > 0.0) {
                return None;
            }
            f -= g.ln();
        }
        for &vi in v.iter() {
            if !(vi > self.floor) {
                return None;
            }
            f -= (vi - self.floor).ln();
        }
        Some(f)
    }

    fn newton_system(&self, v: &DVector<f64>, tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = v.len();
        let h = lse(self.c, v.as_slice()) + self.log_cell;
        let s = lse(self.c, v.as_slice());
        let p = DVector::from_iterator(n, self.c.iter().zip(v.iter()).map(|(c, v)| (c + v - s).exp()));
        let mut grad = &p / (-h);
        grad[self.target] -= tau;
        let mut hess = DMatrix::from_diagonal(&(&p / (-h)));
        let outer = &p * p.transpose();
        hess += outer * (1.0 / (h * h) - 1.0 / (-h));
        for (i, &vi) in v.iter().enumerate() {
            let s = vi - self.floor;
            grad[i] -= 1.0 / s;
            hess[(i, i)] += 1.0 / (s * s);
        }
        for &[a, m, b] in self.triples {
            let g = v[a] + v[b] - 2.0 * v[m];
            let coef = [(a, 1.0), (m, -2.0), (b, 1.0)];
            for &(i, ci) in &coef {
                grad[i] -= ci / g;
                for &(j, cj) in &coef {
                    hess[(i, j)] += ci * cj / (g * g);
                }
            }
        }
        (grad, hess)
    }

    fn solve(&mut self, mut v: DVector<f64>, budget: usize) -> Result<f64> {
        let constraints = (self.triples.len() + v.len() + 1) as f64;
        let mut best = v[self.target];
        let mut tau = 1.0;
        let mut steps = 0;
        'outer: loop {
            loop {
                if steps == budget {
                    break 'outer;
                }
                steps += 1;
                let (grad, hess) = self.newton_system(&v, tau);
                let Some(chol) = hess.cholesky() else {
                    break 'outer;
                };
                let d = -chol.solve(&grad);
                let decrement = -grad.dot(&d);
                if decrement / 2.0 < 1e-10 {
                    break;
                }
                let f0 = self.value(&v, tau).expect("iterates stay interior");
                let mut t = 1.0;
                loop {
                    let cand = &v + &d * t;
                    if let Some(f) = self.value(&cand, tau) {
                        if f <= f0 - 0.25 * t * decrement {
                            v = cand;
                            break;
                        }
                    }
                    t *= 0.5;
                    if t < 1e-12 {
                        break 'outer;
                    }
                }
                best = best.max(v[self.target]);
            }
            if constraints / tau < 1e-9 {
                break;
            }
            tau *= 8.0;
        }
        Ok(best)
    }
}
