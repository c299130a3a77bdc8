//! Convex extensions of `psi(x)` to `Psi(t, x)` under the integral constraint
//! `log int e^{Psi(t, .) - phi(t, .)} <= 0`.
//!
//! The affine case is solved exactly by tilted marginals; mixtures of affine
//! functions are extended componentwise and recombined by log-sum-exp; a
//! general convex `psi` is first smoothed into such a mixture (a soft
//! Legendre transform) and then pushed through the Hölder contraction loop.
//!
//! All extensions are anchored at the `t = 0` node, which must exist.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convexity::{check_midpoint_convexity, joint_check, ConvexityReport};
use crate::error::{Error, Result};
use crate::grid::{GridFunction, GridSpec, ProductGridFunction};
use crate::integrals::{constraint_residuals, normalization_gap, trapezoid_log_weights};
use crate::transforms::{legendre_transform, slope_range, AffineFunction};

/// Tolerance on the normalization of inputs that must already be normalized.
pub const NORMALIZATION_TOL: f64 = 1e-9;
/// Largest midpoint defect accepted by the convexity checks on inputs.
pub const CONVEXITY_TOL: f64 = 1e-6;
/// Largest `Psi(0, .)` mismatch tolerated from an extender in the Hölder loop.
pub const RESTRICTION_TOL: f64 = 1e-6;

/// Terms this far below the running maximum are dropped from log-sum-exp
/// sums; their total relative contribution is below `len * e^-60`.
const SKIP_NATS: f64 = 60.0;

/// Numerical knobs shared by the extension operations.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendOptions {
    /// Stop the Hölder loop once the largest residual is at most this (nats).
    pub tol: f64,
    pub max_iter: usize,
    /// Random pairs drawn by every convexity check.
    pub check_samples: usize,
    pub seed: u64,
}

impl Default for ExtendOptions {
    fn default() -> Self {
        ExtendOptions {
            tol: 1e-9,
            max_iter: 200,
            check_samples: 4000,
            seed: 0,
        }
    }
}

/// A finite positive combination `log sum_i w_i e^{l_i(x)}` of affine functions.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureSpec {
    nodes: Vec<AffineFunction>,
    log_weights: Vec<f64>,
}

impl MixtureSpec {
    pub fn new(nodes: Vec<AffineFunction>, log_weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Parameter("mixture has no components".into()));
        }
        if nodes.len() != log_weights.len() {
            return Err(Error::Shape(format!(
                "{} mixture nodes but {} log-weights",
                nodes.len(),
                log_weights.len()
            )));
        }
        let dim = nodes[0].dim();
        if nodes.iter().any(|a| a.dim() != dim) {
            return Err(Error::Shape("mixture nodes have different dimensions".into()));
        }
        if let Some(w) = log_weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::Parameter(format!("log-weights must be finite, found {w}")));
        }
        Ok(MixtureSpec { nodes, log_weights })
    }

    pub fn single(node: AffineFunction) -> Self {
        MixtureSpec {
            nodes: vec![node],
            log_weights: vec![0.0],
        }
    }

    pub fn nodes(&self) -> &[AffineFunction] {
        &self.nodes
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].dim()
    }

    /// Multiplies every weight by `e^c`.
    pub fn shifted(&self, c: f64) -> Self {
        MixtureSpec {
            nodes: self.nodes.clone(),
            log_weights: self.log_weights.iter().map(|w| w + c).collect(),
        }
    }

    /// The mixture sampled on `x_spec`. Bit-identical to the `t = 0` slice
    /// of [`extend_mixture`] on the same grid.
    pub fn restriction(&self, x_spec: &GridSpec) -> Result<GridFunction> {
        self.check_dim(x_spec)?;
        let comp = Components::sample(&self.nodes, x_spec);
        let mut out = vec![0.0; x_spec.len()];
        comp.mix(&self.log_weights, &mut out);
        GridFunction::new(x_spec.clone(), out)
    }

    fn check_dim(&self, x_spec: &GridSpec) -> Result<()> {
        if self.dim() != x_spec.dim() {
            return Err(Error::Shape(format!(
                "mixture components have dimension {}, x-grid has {}",
                self.dim(),
                x_spec.dim()
            )));
        }
        Ok(())
    }
}

/// Smoothing strength and dual grid of [`soft_legendre`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SofteningParams {
    pub lambda: f64,
    pub dual_spec: GridSpec,
}

impl SofteningParams {
    pub fn new(lambda: f64, dual_spec: GridSpec) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(SofteningParams { lambda, dual_spec })
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda >= 1.0 && lambda.is_finite()) {
        return Err(Error::Parameter(format!("lambda must be finite and >= 1, got {lambda}")));
    }
    Ok(())
}

/// Largest residual per Hölder iteration next to its geometric envelope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// `log_a[k]` is the largest constraint residual after `k` iterations.
    #[serde(with = "crate::io::ext_f64_vec")]
    pub log_a: Vec<f64>,
    #[serde(with = "crate::io::ext_f64_vec")]
    /// `(1 - 1/lambda)^k * log_a[0]`.
    pub theoretical: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    pub psi: ProductGridFunction,
    /// `log int e^{Psi(t, .) - phi(t, .)}` per t-node.
    #[serde(with = "crate::io::ext_f64_vec")]
    pub residuals: Vec<f64>,
    #[serde(with = "crate::io::ext_f64")]
    pub max_residual: f64,
    /// Sup distance between `Psi(0, .)` and the function being extended.
    #[serde(with = "crate::io::ext_f64")]
    pub restriction_error: f64,
    pub joint_convexity: ConvexityReport,
    pub trace: Option<IterationTrace>,
    /// Constant subtracted from the input to normalize it.
    pub normalization_shift: f64,
}

/// Anything that extends a fixed source against a supplied weight.
pub trait Extender {
    fn extend(&self, weight: &ProductGridFunction) -> Result<ExtensionReport>;
}

impl<F> Extender for F
where
    F: Fn(&ProductGridFunction) -> Result<ExtensionReport>,
{
    fn extend(&self, weight: &ProductGridFunction) -> Result<ExtensionReport> {
        self(weight)
    }
}

/// Affine components sampled on an x-grid, stored both component-major
/// (`ell[j * n + i]`) and node-major (`ell_t[i * k + j]`).
struct Components {
    k: usize,
    n: usize,
    ell: Vec<f64>,
    ell_t: Vec<f64>,
}

impl Components {
    fn sample(nodes: &[AffineFunction], x_spec: &GridSpec) -> Self {
        let (k, n) = (nodes.len(), x_spec.len());
        let xs = x_spec.all_coords();
        let mut ell = vec![0.0; k * n];
        let mut ell_t = vec![0.0; k * n];
        for (j, node) in nodes.iter().enumerate() {
            for (i, x) in xs.iter().enumerate() {
                let v = node.eval(x);
                ell[j * n + i] = v;
                ell_t[i * k + j] = v;
            }
        }
        Components { k, n, ell, ell_t }
    }

    /// `out[i] = log sum_j e^{c_j + l_j(x_i)}`.
    fn mix(&self, c: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.ell_t[i * self.k..(i + 1) * self.k];
            *o = lse_pair(c, row);
        }
    }

    /// `out[j] = log sum_i e^{e_i + l_j(x_i)}`.
    fn partitions(&self, e: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let row = &self.ell[j * self.n..(j + 1) * self.n];
            *o = lse_pair(e, row);
        }
    }
}

/// `log sum_i e^{a_i + b_i}` with a fixed left-to-right order.
#[inline]
fn lse_pair(a: &[f64], b: &[f64]) -> f64 {
    let m = a
        .iter()
        .zip(b)
        .map(|(x, y)| x + y)
        .fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let floor = m - SKIP_NATS;
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let v = x + y;
        if v >= floor {
            s += (v - m).exp();
        }
    }
    m + s.ln()
}

fn sup_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if x == y { 0.0 } else { (x - y).abs() })
        .fold(0.0, f64::max)
}

fn assemble(
    psi: ProductGridFunction,
    phi: &ProductGridFunction,
    target: &GridFunction,
    opts: &ExtendOptions,
) -> Result<ExtensionReport> {
    let residuals = constraint_residuals(&psi, phi)?;
    let max_residual = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let anchor = psi.t_zero_index()?;
    let restriction_error = sup_abs_diff(psi.slice_values(anchor), target.values());
    let joint_convexity = joint_check(&psi, opts.check_samples, opts.seed)?;
    Ok(ExtensionReport {
        psi,
        residuals,
        max_residual,
        restriction_error,
        joint_convexity,
        trace: None,
        normalization_shift: 0.0,
    })
}

fn require_normalized(psi: &GridFunction, phi0: &GridFunction, what: &str) -> Result<()> {
    let gap = normalization_gap(psi, phi0)?;
    if gap.abs() > NORMALIZATION_TOL {
        return Err(Error::Input(format!(
            "{what} is not normalized against phi(0, .): log int e^(psi - phi0) = {gap:e}"
        )));
    }
    Ok(())
}

/// `Psi(t, x) = phi~(t) - phi~(0)`, the Prekopa marginal of `phi` anchored
/// at `t = 0`. Requires `log int e^{-phi(0, .)} = 0`.
pub fn extend_zero(phi: &ProductGridFunction, opts: &ExtendOptions) -> Result<ExtensionReport> {
    extend_affine(&AffineFunction::zero(phi.x_spec().dim()), phi, opts)
}

/// `Psi(t, x) = a . x + b + tau(t)` with `tau` the anchored tilted marginal.
/// Requires `a . x + b` to be normalized against `phi(0, .)`.
pub fn extend_affine(
    affine: &AffineFunction,
    phi: &ProductGridFunction,
    opts: &ExtendOptions,
) -> Result<ExtensionReport> {
    if affine.dim() != phi.x_spec().dim() {
        return Err(Error::Shape(format!(
            "affine function has dimension {}, x-grid has {}",
            affine.dim(),
            phi.x_spec().dim()
        )));
    }
    let anchor = phi.t_zero_index()?;
    let source = affine.sample(phi.x_spec())?;
    require_normalized(&source, &phi.slice(anchor), "the affine function")?;
    extend_mixture(&MixtureSpec::single(affine.clone()), phi, opts)
}

/// Extends every component `l_j` of the mixture by its own tilted marginal
/// `tau_j` and recombines: `Psi(t, x) = log sum_j w_j e^{l_j(x) + tau_j(t)}`.
///
/// The residual at `t` is `log sum_j w'_j e^{res_j(t)}`, where `w'_j` are the
/// masses of the components against `phi(0, .)`. Normalization of the mixture
/// is not required: rescaling every weight by `s` shifts `Psi` by `log s`.
pub fn extend_mixture(
    mix: &MixtureSpec,
    phi: &ProductGridFunction,
    opts: &ExtendOptions,
) -> Result<ExtensionReport> {
    let x_spec = phi.x_spec();
    mix.check_dim(x_spec)?;
    let anchor = phi.t_zero_index()?;
    let comp = Components::sample(&mix.nodes, x_spec);
    let (k, n) = (comp.k, comp.n);
    let q = trapezoid_log_weights(x_spec);

    let mut log_z = vec![0.0; phi.t_len() * k];
    log_z.par_chunks_mut(k).enumerate().for_each(|(t, out)| {
        let e: Vec<f64> = phi
            .slice_values(t)
            .iter()
            .zip(&q)
            .map(|(&w, &q)| if w == f64::INFINITY { f64::NEG_INFINITY } else { q - w })
            .collect();
        comp.partitions(&e, out);
    });
    if log_z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "a component integral is zero or infinite against the weight".into(),
        ));
    }

    let z0 = log_z[anchor * k..(anchor + 1) * k].to_vec();
    let mut values = vec![0.0; phi.t_len() * n];
    values.par_chunks_mut(n).enumerate().for_each(|(t, out)| {
        let c: Vec<f64> = if t == anchor {
            mix.log_weights.clone()
        } else {
            (0..k)
                .map(|j| mix.log_weights[j] + (z0[j] - log_z[t * k + j]))
                .collect()
        };
        comp.mix(&c, out);
    });
    let psi = ProductGridFunction::new(phi.t_spec().clone(), x_spec.clone(), values)?;
    let target = mix.restriction(x_spec)?;
    assemble(psi, phi, &target, opts)
}

/// Soft Legendre smoothing `e^{psi_l(x)} = int e^{l (x . xi - psi*(xi))} dxi`,
/// integrated by trapezoid over `params.dual_spec`.
///
/// Returns `psi_l` on the grid of `psi` and the mixture whose components are
/// `x -> l xi_i . x - l psi*(xi_i)` with log-weights equal to the log
/// trapezoid weight plus the log dual cell volume. `psi_l / l` approaches
/// the convex envelope of `psi` at rate `O(log l / l)`.
pub fn soft_legendre(
    psi: &GridFunction,
    params: &SofteningParams,
) -> Result<(GridFunction, MixtureSpec)> {
    check_lambda(params.lambda)?;
    let dual = &params.dual_spec;
    if dual.dim() != psi.spec().dim() {
        return Err(Error::Shape(format!(
            "dual grid has dimension {}, psi has {}",
            dual.dim(),
            psi.spec().dim()
        )));
    }
    for (k, ((lo, hi), axis)) in slope_range(psi)?.into_iter().zip(dual.axes()).enumerate() {
        let slack = 1e-12 * (axis.hi - axis.lo);
        if lo < axis.lo - slack || hi > axis.hi + slack {
            return Err(Error::Config(format!(
                "dual axis {k} spans [{}, {}] but psi has slopes in [{lo}, {hi}]",
                axis.lo, axis.hi
            )));
        }
    }
    let conj = legendre_transform(psi, dual)?;
    let lambda = params.lambda;
    let log_cell = dual.cell_volume().ln();
    let q = trapezoid_log_weights(dual);
    let mut nodes = Vec::with_capacity(dual.len());
    let mut log_weights = Vec::with_capacity(dual.len());
    for i in 0..dual.len() {
        let s = conj.value(i);
        if !s.is_finite() {
            continue;
        }
        let xi = dual.coords(i);
        nodes.push(AffineFunction::new(
            xi.iter().map(|v| lambda * v).collect(),
            -lambda * s,
        )?);
        log_weights.push(q[i] + log_cell);
    }
    let mix = MixtureSpec::new(nodes, log_weights)?;
    let softened = mix.restriction(psi.spec())?;
    Ok((softened, mix))
}

/// Hölder contraction loop: extends `source / lambda` against `phi`.
///
/// Starts from the t-independent guess `source / lambda`. Each step calls
/// `extender` on the weight `phi + (lambda - 1) u_k`, shifted by a constant so
/// that its `t = 0` slice normalizes `source`, and divides the result by
/// `lambda`. The largest residual contracts at least by `1 - 1/lambda` per
/// step. Running out of iterations is reported through `trace.converged`.
pub fn holder_extend(
    source: &GridFunction,
    extender: &dyn Extender,
    lambda: f64,
    phi: &ProductGridFunction,
    opts: &ExtendOptions,
) -> Result<ExtensionReport> {
    check_lambda(lambda)?;
    if !(opts.tol > 0.0) {
        return Err(Error::Parameter(format!("tol must be positive, got {}", opts.tol)));
    }
    if source.spec() != phi.x_spec() {
        return Err(Error::Shape("source and phi live on different x-grids".into()));
    }
    let anchor = phi.t_zero_index()?;
    let phi0 = phi.slice(anchor);
    let target = source.map(|v| v / lambda);
    require_normalized(&target, &phi0, "source / lambda")?;

    let mut u = ProductGridFunction::broadcast(phi.t_spec().clone(), &target);
    let residuals = constraint_residuals(&u, phi)?;
    let mut log_a = vec![residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max)];
    let mut converged = log_a[0] <= opts.tol;
    while !converged && log_a.len() <= opts.max_iter {
        let values = phi
            .values()
            .iter()
            .zip(u.values())
            .map(|(&f, &v)| f + (lambda - 1.0) * v)
            .collect();
        let weight = ProductGridFunction::new(phi.t_spec().clone(), phi.x_spec().clone(), values)?;
        let gap = normalization_gap(source, &weight.slice(anchor))?;
        let weight = weight.shift(gap)?;
        let report = extender.extend(&weight)?;
        if !report.psi.same_grids(&weight) {
            return Err(Error::Contract("extender returned a function on other grids".into()));
        }
        let mismatch = sup_abs_diff(report.psi.slice_values(anchor), source.values());
        if !(mismatch <= RESTRICTION_TOL) {
            return Err(Error::Contract(format!(
                "extender changed the source at t = 0 by {mismatch:e}"
            )));
        }
        u = report.psi.map(|v| v / lambda);
        let residuals = constraint_residuals(&u, phi)?;
        let worst = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        log_a.push(worst);
        converged = worst <= opts.tol;
    }
    let rate = 1.0 - 1.0 / lambda;
    let theoretical = (0..log_a.len()).map(|k| rate.powi(k as i32) * log_a[0]).collect();
    let iterations = log_a.len() - 1;
    let mut report = assemble(u, phi, &target, opts)?;
    report.trace = Some(IterationTrace {
        log_a,
        theoretical,
        iterations,
        converged,
    });
    Ok(report)
}

/// Full pipeline for a convex `psi`: normalize, soften with strength
/// `params.lambda`, renormalize, and run [`holder_extend`] with the softened
/// mixture re-extended against every weight the loop supplies.
///
/// The result extends `psi_l / l - c_l`; `restriction_error` is its sup
/// distance to `psi - c`, with `c` recorded in `normalization_shift`. Without
/// t-variables the normalized `psi` is returned unchanged.
pub fn extend_convex(
    psi: &GridFunction,
    phi: &ProductGridFunction,
    params: &SofteningParams,
    opts: &ExtendOptions,
) -> Result<ExtensionReport> {
    if psi.spec() != phi.x_spec() {
        return Err(Error::Shape("psi and phi live on different x-grids".into()));
    }
    let anchor = phi.t_zero_index()?;
    let psi_check = check_midpoint_convexity(psi, opts.check_samples, opts.seed)?;
    if psi_check.worst_violation > CONVEXITY_TOL {
        return Err(Error::Input(format!(
            "psi fails the midpoint convexity check: defect {:e}",
            psi_check.worst_violation
        )));
    }
    let phi_check = joint_check(phi, opts.check_samples, opts.seed)?;
    if phi_check.worst_violation > CONVEXITY_TOL {
        return Err(Error::Input(format!(
            "phi fails the joint midpoint convexity check: defect {:e}",
            phi_check.worst_violation
        )));
    }
    let phi0 = phi.slice(anchor);
    let c = normalization_gap(psi, &phi0)?;
    let normalized = psi.shift(-c)?;

    let mut report = if phi.t_spec().dim() == 0 {
        let flat = ProductGridFunction::broadcast(phi.t_spec().clone(), &normalized);
        assemble(flat, phi, &normalized, opts)?
    } else {
        let lambda = params.lambda;
        let (softened, mix) = soft_legendre(&normalized, params)?;
        let c_l = normalization_gap(&softened.map(|v| v / lambda), &phi0)?;
        let mix = mix.shifted(-lambda * c_l);
        let source = mix.restriction(phi.x_spec())?;
        let extender = |w: &ProductGridFunction| extend_mixture(&mix, w, opts);
        let mut r = holder_extend(&source, &extender, lambda, phi, opts)?;
        r.restriction_error = sup_abs_diff(r.psi.slice_values(anchor), normalized.values());
        r
    };
    report.normalization_shift = c;
    Ok(report)
}
