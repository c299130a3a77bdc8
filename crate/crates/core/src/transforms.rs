//! Discrete Legendre-Fenchel conjugation on tensor grids.
//!
//! The conjugate is the node supremum `g(xi) = max_i (x_i . xi - f(x_i))`.
//! The fast path factors the maximum axis by axis; each one-dimensional pass
//! builds the lower convex hull of the finite samples and walks it with the
//! (sorted) dual nodes, which costs `O(N + M)` per line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Axis, GridFunction, GridSpec};

/// `x -> a . x + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFunction {
    pub a: Vec<f64>,
    pub b: f64,
}

impl AffineFunction {
    pub fn new(a: Vec<f64>, b: f64) -> Result<Self> {
        if !b.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("affine function entries must be finite".into()));
        }
        Ok(AffineFunction { a, b })
    }

    pub fn zero(dim: usize) -> Self {
        AffineFunction {
            a: vec![0.0; dim],
            b: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + self.b
    }

    pub fn sample(&self, spec: &GridSpec) -> Result<GridFunction> {
        if spec.dim() != self.dim() {
            return Err(Error::Shape(format!(
                "affine function has dimension {}, grid has {}",
                self.dim(),
                spec.dim()
            )));
        }
        GridFunction::from_fn(spec.clone(), |x| self.eval(x))
    }
}

/// One-dimensional conjugate `out[j] = max_i (xs[i] * duals[j] + h[i])`,
/// i.e. the conjugate of `-h`. `xs` and `duals` are ascending; entries of
/// `h` equal to `-inf` are ignored. Ties go to the lowest index.
fn conjugate_line(xs: &[f64], h: &[f64], duals: &[f64], hull: &mut Vec<usize>, out: &mut [f64]) {
    hull.clear();
    // upper hull of (x, h), equivalently the lower hull of (x, -h)
    for (i, &hi) in h.iter().enumerate() {
        if hi == f64::NEG_INFINITY {
            continue;
        }
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            // drop b when it lies on or below the chord from a to i
            let cross = (xs[b] - xs[a]) * (hi - h[a]) - (h[b] - h[a]) * (xs[i] - xs[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    if hull.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::NEG_INFINITY);
        return;
    }
    let mut k = 0;
    for (o, &xi) in out.iter_mut().zip(duals) {
        let mut best = xs[hull[k]] * xi + h[hull[k]];
        while k + 1 < hull.len() {
            let next = xs[hull[k + 1]] * xi + h[hull[k + 1]];
            if next > best {
                best = next;
                k += 1;
            } else {
                break;
            }
        }
        *o = best;
    }
}

fn check_transform_args(f: &GridFunction, dual_spec: &GridSpec) -> Result<()> {
    if dual_spec.dim() != f.spec().dim() {
        return Err(Error::Shape(format!(
            "dual grid has dimension {}, function grid has {}",
            dual_spec.dim(),
            f.spec().dim()
        )));
    }
    if !f.values().iter().any(|v| v.is_finite()) {
        return Err(Error::Domain("cannot conjugate a function that is +inf everywhere".into()));
    }
    Ok(())
}

/// Legendre-Fenchel transform of `f` sampled on `dual_spec`, computed by
/// separable hull sweeps.
pub fn legendre_transform(f: &GridFunction, dual_spec: &GridSpec) -> Result<GridFunction> {
    check_transform_args(f, dual_spec)?;
    let dim = f.spec().dim();
    // h holds the partial maximum of (x . xi - f) over the axes done so far;
    // -inf marks infeasible entries
    let mut h: Vec<f64> = f
        .values()
        .iter()
        .map(|&v| if v.is_finite() { -v } else { f64::NEG_INFINITY })
        .collect();
    let mut shape = f.spec().counts();
    let mut hull = Vec::new();
    for k in 0..dim {
        let xs = f.spec().axis(k).coords();
        let duals = dual_spec.axis(k).coords();
        let outer: usize = shape[..k].iter().product();
        let inner: usize = shape[k + 1..].iter().product();
        let n_in = shape[k];
        let n_out = duals.len();
        let mut next = vec![0.0; outer * n_out * inner];
        let mut line = vec![0.0; n_in];
        let mut res = vec![0.0; n_out];
        for o in 0..outer {
            for i in 0..inner {
                for (j, l) in line.iter_mut().enumerate() {
                    *l = h[(o * n_in + j) * inner + i];
                }
                conjugate_line(&xs, &line, &duals, &mut hull, &mut res);
                for (j, &r) in res.iter().enumerate() {
                    next[(o * n_out + j) * inner + i] = r;
                }
            }
        }
        h = next;
        shape[k] = n_out;
    }
    GridFunction::new(dual_spec.clone(), h)
}

/// Reference `O(N * M)` transform: the maximum over all finite nodes for
/// every dual node.
pub fn legendre_transform_direct(f: &GridFunction, dual_spec: &GridSpec) -> Result<GridFunction> {
    check_transform_args(f, dual_spec)?;
    let nodes: Vec<(Vec<f64>, f64)> = (0..f.spec().len())
        .filter(|&i| f.value(i).is_finite())
        .map(|i| (f.spec().coords(i), f.value(i)))
        .collect();
    GridFunction::from_fn(dual_spec.clone(), |xi| {
        nodes
            .iter()
            .map(|(x, v)| x.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() - v)
            .fold(f64::NEG_INFINITY, f64::max)
    })
}

/// Per-axis `(min, max)` of the one-sided difference quotients between
/// adjacent finite nodes.
pub fn slope_range(f: &GridFunction) -> Result<Vec<(f64, f64)>> {
    let spec = f.spec();
    let mut out = Vec::with_capacity(spec.dim());
    let mut idx = vec![0usize; spec.dim()];
    for k in 0..spec.dim() {
        let h = spec.axis(k).step();
        let stride = spec.strides()[k];
        let mut range: Option<(f64, f64)> = None;
        for i in 0..spec.len() {
            spec.unravel(i, &mut idx);
            if idx[k] + 1 >= spec.axis(k).count {
                continue;
            }
            let (a, b) = (f.value(i), f.value(i + stride));
            if a.is_finite() && b.is_finite() {
                let s = (b - a) / h;
                range = Some(match range {
                    None => (s, s),
                    Some((lo, hi)) => (lo.min(s), hi.max(s)),
                });
            }
        }
        out.push(range.ok_or_else(|| {
            Error::Domain(format!("axis {k} has no pair of adjacent finite nodes"))
        })?);
    }
    Ok(out)
}

/// Largest total node count [`padded_dual_spec`] builds on the lattice.
pub const MAX_DUAL_NODES: usize = 1 << 22;

/// Dual grid covering the slope range of `f`, padded by one dual step on
/// each side.
///
/// Nodes sit on the lattice `delta * Z`, where `delta` is the grid step of
/// `f` times a power of two, the largest not exceeding the slope range over
/// `count - 1`. Functions on the same grid therefore get nested dual grids,
/// and the envelope of a convex function is off by at most
/// `h * (slope range) / 2` per axis. Affine directions get the three nodes
/// `a - 1, a, a + 1`. If the lattice would exceed [`MAX_DUAL_NODES`] nodes,
/// each axis instead gets `count + 2` nodes spread over the padded range.
pub fn padded_dual_spec(f: &GridFunction) -> Result<GridSpec> {
    let ranges = slope_range(f)?;
    let lattice: Vec<Option<(f64, f64, f64)>> = ranges
        .iter()
        .zip(f.spec().axes())
        .map(|(&(lo, hi), axis)| {
            (hi > lo).then(|| {
                let h = axis.step();
                let target = (hi - lo) / (axis.count - 1) as f64;
                let delta = h * (target / h).log2().floor().exp2();
                ((lo / delta).floor() - 1.0, (hi / delta).ceil() + 1.0, delta)
            })
        })
        .collect();
    let total: f64 = lattice
        .iter()
        .map(|l| l.map_or(3.0, |(a, b, _)| b - a + 1.0))
        .product();
    let fits = total <= MAX_DUAL_NODES as f64;
    let axes = ranges
        .iter()
        .zip(f.spec().axes())
        .zip(&lattice)
        .map(|((&(lo, hi), axis), l)| match l {
            None => Axis::new(lo - 1.0, hi + 1.0, 3),
            Some((a, b, delta)) if fits => Axis::new(a * delta, b * delta, (b - a) as usize + 1),
            Some(_) => {
                let n = axis.count;
                let step = (hi - lo) / (n - 1) as f64;
                Axis::new(lo - step, hi + step, n + 2)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    GridSpec::new(axes)
}

/// Largest function on the grid of `f` that is a maximum of affine functions
/// with slopes in `dual` and lies below `f`. Applying it again with the same
/// `dual` changes nothing.
pub fn convex_envelope(f: &GridFunction, dual: &GridSpec) -> Result<GridFunction> {
    let conj = legendre_transform(f, dual)?;
    legendre_transform(&conj, f.spec())
}

/// Convex envelope of `f` on its own grid, with the intermediate dual grid
/// from [`padded_dual_spec`].
///
/// In two or more dimensions the padded dual grid of the result can be
/// narrower than that of `f`; iterate with [`convex_envelope`] and a fixed
/// dual grid when exact idempotence matters.
pub fn biconjugate(f: &GridFunction) -> Result<GridFunction> {
    convex_envelope(f, &padded_dual_spec(f)?)
}
