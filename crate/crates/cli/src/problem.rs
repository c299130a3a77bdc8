//! Problem files: weights and sources given either as sampled grids or as
//! closed-form descriptors expanded on the grids of the file.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use convext::extension::{ExtendOptions, SofteningParams};
use convext::integrals::prekopa_marginal;
use convext::transforms::padded_dual_spec;
use convext::{GridFunction, GridSpec, ProductGridFunction};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub slope: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
}

/// Closed-form function of `z = (t, x)`; sources see an empty `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Formula {
    Zero,
    Constant {
        value: f64,
    },
    /// `|x - scale * t|^2 / 2 + (n / 2) log(2 pi)`; with one t-variable it
    /// moves every x-coordinate.
    GaussianShift {
        #[serde(default = "one")]
        scale: f64,
    },
    /// `z^T matrix z / 2 + offset`.
    Quadratic {
        matrix: Vec<Vec<f64>>,
        #[serde(default)]
        offset: f64,
    },
    MaxAffine {
        pieces: Vec<Piece>,
    },
    Sum {
        terms: Vec<Formula>,
    },
}

fn one() -> f64 {
    1.0
}

impl Formula {
    /// Checks that the formula makes sense for `m` t-variables and `n`
    /// x-variables.
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        let d = m + n;
        match self {
            Formula::Zero | Formula::Constant { .. } => Ok(()),
            Formula::GaussianShift { .. } => {
                ensure!(
                    m == 0 || m == 1 || m == n,
                    "gaussian_shift needs 0, 1 or {n} t-variables, found {m}"
                );
                Ok(())
            }
            Formula::Quadratic { matrix, .. } => {
                ensure!(
                    matrix.len() == d && matrix.iter().all(|r| r.len() == d),
                    "quadratic matrix must be {d}x{d}"
                );
                Ok(())
            }
            Formula::MaxAffine { pieces } => {
                ensure!(!pieces.is_empty(), "max_affine needs at least one piece");
                for p in pieces {
                    ensure!(p.slope.len() == d, "max_affine slopes must have length {d}");
                }
                Ok(())
            }
            Formula::Sum { terms } => terms.iter().try_for_each(|t| t.validate(m, n)),
        }
    }

    pub fn eval(&self, t: &[f64], x: &[f64]) -> f64 {
        match self {
            Formula::Zero => 0.0,
            Formula::Constant { value } => *value,
            Formula::GaussianShift { scale } => {
                let sq: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(k, xk)| {
                        let tk = match t.len() {
                            0 => 0.0,
                            1 => t[0],
                            _ => t[k],
                        };
                        (xk - scale * tk).powi(2)
                    })
                    .sum();
                0.5 * sq + 0.5 * x.len() as f64 * (2.0 * PI).ln()
            }
            Formula::Quadratic { matrix, offset } => {
                let z: Vec<f64> = t.iter().chain(x).copied().collect();
                let q: f64 = matrix
                    .iter()
                    .zip(&z)
                    .map(|(row, zi)| zi * row.iter().zip(&z).map(|(a, zj)| a * zj).sum::<f64>())
                    .sum();
                0.5 * q + offset
            }
            Formula::MaxAffine { pieces } => pieces
                .iter()
                .map(|p| {
                    p.slope
                        .iter()
                        .zip(t.iter().chain(x))
                        .map(|(a, z)| a * z)
                        .sum::<f64>()
                        + p.offset
                })
                .fold(f64::NEG_INFINITY, f64::max),
            Formula::Sum { terms } => terms.iter().map(|f| f.eval(t, x)).sum(),
        }
    }
}

/// A function given by samples or by a formula.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Source<G> {
    Sampled { grid: G },
    Formula(Formula),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    /// Needed when `phi` is a formula; `{"axes": []}` means no t-variables.
    #[serde(default)]
    pub t_grid: Option<GridSpec>,
    #[serde(default)]
    pub x_grid: Option<GridSpec>,
    pub phi: Source<ProductGridFunction>,
    /// Shift `phi` by a constant so that `log int e^{-phi(0, .)} = 0`.
    #[serde(default)]
    pub normalize_phi: bool,
    /// Defaults to the zero function.
    #[serde(default)]
    pub psi: Option<Source<GridFunction>>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub dual: Option<GridSpec>,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub check_samples: Option<usize>,
}

pub const DEFAULT_LAMBDA: f64 = 10.0;

/// Values given on the command line; they take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub seed: Option<u64>,
    pub dual: Option<GridSpec>,
}

/// A problem with every function sampled.
#[derive(Clone, Debug)]
pub struct Problem {
    pub phi: ProductGridFunction,
    pub psi: GridFunction,
    pub options: ExtendOptions,
    pub lambda: f64,
    /// Explicit dual grid, if any; otherwise one is derived from `psi`.
    pub dual: Option<GridSpec>,
}

impl Problem {
    pub fn softening(&self, psi: &GridFunction) -> convext::Result<SofteningParams> {
        let dual = match &self.dual {
            Some(d) => d.clone(),
            None => padded_dual_spec(psi)?,
        };
        SofteningParams::new(self.lambda, dual)
    }
}

pub fn read_problem(path: &Path) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read problem file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed problem file {}", path.display()))
}

impl ProblemSpec {
    pub fn sample_phi(&self) -> Result<ProductGridFunction> {
        let phi = match &self.phi {
            Source::Sampled { grid } => {
                ensure!(
                    self.t_grid.as_ref().map_or(true, |t| t == grid.t_spec())
                        && self.x_grid.as_ref().map_or(true, |x| x == grid.x_spec()),
                    "t_grid/x_grid disagree with the grids of the sampled phi"
                );
                grid.clone()
            }
            Source::Formula(f) => {
                let (Some(t), Some(x)) = (&self.t_grid, &self.x_grid) else {
                    bail!("a phi formula needs both t_grid and x_grid");
                };
                f.validate(t.dim(), x.dim()).context("invalid phi formula")?;
                ProductGridFunction::from_fn(t.clone(), x.clone(), |t, x| f.eval(t, x))?
            }
        };
        if self.normalize_phi {
            let anchor = phi.t_zero_index()?;
            let m = prekopa_marginal(&phi)?;
            return Ok(phi.shift(-m.value(anchor))?);
        }
        Ok(phi)
    }

    pub fn sample_psi(&self, x_spec: &GridSpec) -> Result<GridFunction> {
        match &self.psi {
            None => Ok(GridFunction::constant(x_spec.clone(), 0.0)?),
            Some(Source::Sampled { grid }) => {
                ensure!(grid.spec() == x_spec, "sampled psi lives on a different x-grid than phi");
                Ok(grid.clone())
            }
            Some(Source::Formula(f)) => {
                f.validate(0, x_spec.dim()).context("invalid psi formula")?;
                Ok(GridFunction::from_fn(x_spec.clone(), |x| f.eval(&[], x))?)
            }
        }
    }

    pub fn build(&self, over: &Overrides) -> Result<Problem> {
        let phi = self.sample_phi()?;
        let psi = self.sample_psi(phi.x_spec())?;
        let defaults = ExtendOptions::default();
        let options = ExtendOptions {
            tol: over.tol.or(self.tol).unwrap_or(defaults.tol),
            max_iter: over.max_iter.or(self.max_iter).unwrap_or(defaults.max_iter),
            check_samples: self.check_samples.unwrap_or(defaults.check_samples),
            seed: over.seed.or(self.seed).unwrap_or(defaults.seed),
        };
        Ok(Problem {
            phi,
            psi,
            options,
            lambda: over.lambda.or(self.lambda).unwrap_or(DEFAULT_LAMBDA),
            dual: over.dual.clone().or_else(|| self.dual.clone()),
        })
    }
}
