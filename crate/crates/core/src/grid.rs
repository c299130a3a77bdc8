//! Tensor grids over boxes and extended-real functions sampled on them.
//!
//! A [`GridSpec`] is a product of uniform axes. Node `i` of an axis sits at
//! `lo + i * (hi - lo) / (count - 1)`, and that expression is the only way
//! coordinates are produced anywhere in the crate, so they are reproducible
//! bit for bit from the three axis parameters. Values are stored row-major
//! with the last axis varying fastest.
//!
//! Function values live in the exponent of `e` (nats). `+inf` marks points
//! outside the effective domain; `-inf` and NaN are rejected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transforms::AffineFunction;

/// One uniform axis of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, count: usize) -> Result<Self> {
        let axis = Axis { lo, hi, count };
        axis.validate()?;
        Ok(axis)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::Config(format!(
                "axis bounds must be finite, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if !(self.lo < self.hi) {
            return Err(Error::Config(format!(
                "axis needs lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.count < 2 {
            return Err(Error::Config(format!(
                "axis needs at least 2 nodes, got {}",
                self.count
            )));
        }
        if !(self.step() > 0.0) {
            return Err(Error::Config("axis step underflows to zero".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step()
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.coord(i)).collect()
    }

    /// Index of the node at the origin, if one exists.
    pub fn zero_index(&self) -> Option<usize> {
        let tol = 1e-12 * (self.hi - self.lo);
        let guess = (-self.lo / self.step()).round();
        if guess < 0.0 || guess > (self.count - 1) as f64 {
            return None;
        }
        let i = guess as usize;
        (self.coord(i).abs() <= tol).then_some(i)
    }
}

#[derive(Serialize, Deserialize)]
struct RawGridSpec {
    axes: Vec<Axis>,
}

/// Tensor grid over a box. A spec with no axes is a single point of unit
/// volume; it stands for an absent parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec", into = "RawGridSpec")]
pub struct GridSpec {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
}

impl TryFrom<RawGridSpec> for GridSpec {
    type Error = Error;
    fn try_from(raw: RawGridSpec) -> Result<Self> {
        GridSpec::new(raw.axes)
    }
}

impl From<GridSpec> for RawGridSpec {
    fn from(spec: GridSpec) -> Self {
        RawGridSpec { axes: spec.axes }
    }
}

impl GridSpec {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        for axis in &axes {
            axis.validate()?;
        }
        let mut strides = vec![1usize; axes.len()];
        for k in (0..axes.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * axes[k + 1].count;
        }
        let len = axes.iter().map(|a| a.count).product();
        Ok(GridSpec { axes, strides, len })
    }

    /// The zero-dimensional grid: one node, unit volume.
    pub fn point() -> Self {
        GridSpec {
            axes: Vec::new(),
            strides: Vec::new(),
            len: 1,
        }
    }

    pub fn uniform(dim: usize, lo: f64, hi: f64, count: usize) -> Result<Self> {
        GridSpec::new(vec![Axis::new(lo, hi, count)?; dim])
    }

    pub fn line(lo: f64, hi: f64, count: usize) -> Result<Self> {
        GridSpec::new(vec![Axis::new(lo, hi, count)?])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Number of nodes.
    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn axis(&self, k: usize) -> &Axis {
        &self.axes[k]
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn counts(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.count).collect()
    }

    pub fn steps(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.step()).collect()
    }

    /// Product of the step sizes.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step()).product()
    }

    /// Volume of the box.
    pub fn volume(&self) -> f64 {
        self.axes.iter().map(|a| a.hi - a.lo).product()
    }

    pub fn unravel(&self, mut flat: usize, out: &mut [usize]) {
        for (k, &s) in self.strides.iter().enumerate() {
            out[k] = flat / s;
            flat %= s;
        }
    }

    pub fn index_of(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        self.unravel(flat, &mut out);
        out
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn write_coords(&self, flat: usize, out: &mut [f64]) {
        let mut rem = flat;
        for (k, &s) in self.strides.iter().enumerate() {
            out[k] = self.axes[k].coord(rem / s);
            rem %= s;
        }
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.write_coords(flat, &mut out);
        out
    }

    /// All node coordinates, node-major.
    pub fn all_coords(&self) -> Vec<Vec<f64>> {
        (0..self.len).map(|i| self.coords(i)).collect()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dim()
            && point
                .iter()
                .zip(&self.axes)
                .all(|(&p, a)| {
                    // the last node may sit an ulp past `hi`
                    let slack = 1e-12 * (a.hi - a.lo);
                    p >= a.lo - slack && p <= a.hi + slack
                })
    }

    /// Flat index of the node at the origin, if every axis has one.
    pub fn zero_index(&self) -> Option<usize> {
        let idx: Option<Vec<usize>> = self.axes.iter().map(|a| a.zero_index()).collect();
        idx.map(|i| self.ravel(&i))
    }

    /// Grid whose axes are those of `self` followed by those of `other`.
    pub fn product(&self, other: &GridSpec) -> GridSpec {
        let mut axes = self.axes.clone();
        axes.extend_from_slice(&other.axes);
        GridSpec::new(axes).expect("axes already validated")
    }

    /// Same node counts, box moved by `offset`.
    pub fn translated(&self, offset: &[f64]) -> Result<GridSpec> {
        if offset.len() != self.dim() {
            return Err(Error::Shape(format!(
                "offset has length {}, grid has dimension {}",
                offset.len(),
                self.dim()
            )));
        }
        GridSpec::new(
            self.axes
                .iter()
                .zip(offset)
                .map(|(a, &v)| Axis {
                    lo: a.lo + v,
                    hi: a.hi + v,
                    count: a.count,
                })
                .collect(),
        )
    }
}

fn check_value(v: f64) -> Result<()> {
    if v.is_nan() || v == f64::NEG_INFINITY {
        return Err(Error::Domain(format!(
            "grid values must be finite or +inf, found {v}"
        )));
    }
    Ok(())
}

/// Extended-real function sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    spec: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "grid has {} nodes but {} values were given",
                spec.len(),
                values.len()
            )));
        }
        for &v in &values {
            check_value(v)?;
        }
        if !values.iter().any(|v| v.is_finite()) {
            return Err(Error::Domain("grid function is +inf everywhere".into()));
        }
        Ok(GridFunction { spec, values })
    }

    /// Sample `f` at every node.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut x = vec![0.0; spec.dim()];
        let values = (0..spec.len())
            .map(|i| {
                spec.write_coords(i, &mut x);
                f(&x)
            })
            .collect();
        GridFunction::new(spec, values)
    }

    pub fn constant(spec: GridSpec, c: f64) -> Result<Self> {
        let n = spec.len();
        GridFunction::new(spec, vec![c; n])
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn value(&self, flat: usize) -> f64 {
        self.values[flat]
    }

    pub fn max_finite(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Multilinear interpolation at `point`.
    ///
    /// Exact at nodes. Returns `+inf` if any node carrying nonzero weight is
    /// `+inf`.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.spec.dim() {
            return Err(Error::Shape(format!(
                "point has dimension {}, grid has {}",
                point.len(),
                self.spec.dim()
            )));
        }
        if !self.spec.contains(point) {
            return Err(Error::Domain(format!("point {point:?} lies outside the grid box")));
        }
        let dim = self.spec.dim();
        // (lower index, fraction toward upper) per axis
        let mut cell = Vec::with_capacity(dim);
        for (&p, axis) in point.iter().zip(self.spec.axes()) {
            cell.push(locate(axis, p));
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; dim];
        'corners: for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            for k in 0..dim {
                let (i, frac) = cell[k];
                if corner >> k & 1 == 1 {
                    if frac == 0.0 {
                        continue 'corners;
                    }
                    w *= frac;
                    idx[k] = i + 1;
                } else {
                    if frac == 1.0 {
                        continue 'corners;
                    }
                    w *= 1.0 - frac;
                    idx[k] = i;
                }
            }
            let v = self.values[self.spec.ravel(&idx)];
            if v == f64::INFINITY {
                return Ok(f64::INFINITY);
            }
            acc += w * v;
        }
        Ok(acc)
    }

    pub fn shift(&self, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::Parameter(format!("shift must be finite, got {c}")));
        }
        Ok(self.map(|v| v + c))
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Multiply by `s >= 0`, with `0 * inf = 0`.
    pub fn scale(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::Parameter(format!(
                "scale factor must be finite and nonnegative, got {s}"
            )));
        }
        Ok(GridFunction {
            spec: self.spec.clone(),
            values: self.values.iter().map(|&v| scale_ext(s, v)).collect(),
        })
    }

    /// Subtract the affine function `a.x + b` pointwise.
    pub fn tilt(&self, affine: &AffineFunction) -> Result<Self> {
        if affine.dim() != self.spec.dim() {
            return Err(Error::Shape(format!(
                "affine function has dimension {}, grid has {}",
                affine.dim(),
                self.spec.dim()
            )));
        }
        let mut x = vec![0.0; self.spec.dim()];
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                self.spec.write_coords(i, &mut x);
                v - affine.eval(&x)
            })
            .collect();
        Ok(GridFunction {
            spec: self.spec.clone(),
            values,
        })
    }

    /// Pointwise map; `+inf` entries are passed through untouched.
    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            spec: self.spec.clone(),
            values: self
                .values
                .iter()
                .map(|&v| if v.is_finite() { f(v) } else { v })
                .collect(),
        }
    }

    fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.spec != other.spec {
            return Err(Error::Shape("grid functions live on different grids".into()));
        }
        let values: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| {
                if a.is_finite() && b.is_finite() {
                    f(a, b)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        GridFunction::new(self.spec.clone(), values)
    }

    /// Largest absolute difference over nodes; `+inf` when the effective
    /// domains differ.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        if self.spec != other.spec {
            return Err(Error::Shape("grid functions live on different grids".into()));
        }
        let mut worst = 0.0f64;
        for (&a, &b) in self.values.iter().zip(&other.values) {
            match (a.is_finite(), b.is_finite()) {
                (true, true) => worst = worst.max((a - b).abs()),
                (false, false) => {}
                _ => return Ok(f64::INFINITY),
            }
        }
        Ok(worst)
    }
}

/// `s * v` on the extended reals with `0 * inf = 0`.
#[inline]
fn scale_ext(s: f64, v: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        s * v
    }
}

/// Lower node index and fractional offset of `p` on `axis`, snapping to
/// nodes so that node coordinates interpolate exactly.
fn locate(axis: &Axis, p: f64) -> (usize, f64) {
    let last = axis.count - 1;
    let u = (p - axis.lo) / axis.step();
    let guess = (u.floor().max(0.0) as usize).min(last);
    for c in [guess.saturating_sub(1), guess, (guess + 1).min(last)] {
        if axis.coord(c) == p {
            return if c == last { (c - 1, 1.0) } else { (c, 0.0) };
        }
    }
    let i = guess.min(last - 1);
    let frac = ((p - axis.coord(i)) / axis.step()).clamp(0.0, 1.0);
    (i, frac)
}

/// Function on a product grid `T x X`, stored t-major so that the flat
/// layout equals that of the joint `(t, x)` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ProductGridFunction {
    t_spec: GridSpec,
    x_spec: GridSpec,
    values: Vec<f64>,
}

impl ProductGridFunction {
    pub fn new(t_spec: GridSpec, x_spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        let n = x_spec.len();
        if values.len() != t_spec.len() * n {
            return Err(Error::Shape(format!(
                "product grid has {} nodes but {} values were given",
                t_spec.len() * n,
                values.len()
            )));
        }
        for &v in &values {
            check_value(v)?;
        }
        for (j, slice) in values.chunks(n).enumerate() {
            if !slice.iter().any(|v| v.is_finite()) {
                return Err(Error::Domain(format!("t-slice {j} is +inf everywhere")));
            }
        }
        Ok(ProductGridFunction {
            t_spec,
            x_spec,
            values,
        })
    }

    pub fn from_fn(
        t_spec: GridSpec,
        x_spec: GridSpec,
        f: impl Fn(&[f64], &[f64]) -> f64,
    ) -> Result<Self> {
        let mut t = vec![0.0; t_spec.dim()];
        let mut x = vec![0.0; x_spec.dim()];
        let mut values = Vec::with_capacity(t_spec.len() * x_spec.len());
        for j in 0..t_spec.len() {
            t_spec.write_coords(j, &mut t);
            for i in 0..x_spec.len() {
                x_spec.write_coords(i, &mut x);
                values.push(f(&t, &x));
            }
        }
        ProductGridFunction::new(t_spec, x_spec, values)
    }

    pub fn from_slices(t_spec: GridSpec, slices: &[GridFunction]) -> Result<Self> {
        if slices.len() != t_spec.len() {
            return Err(Error::Shape(format!(
                "{} slices given for {} t-nodes",
                slices.len(),
                t_spec.len()
            )));
        }
        let x_spec = slices[0].spec().clone();
        let mut values = Vec::with_capacity(t_spec.len() * x_spec.len());
        for s in slices {
            if s.spec() != &x_spec {
                return Err(Error::Shape("slices live on different x-grids".into()));
            }
            values.extend_from_slice(s.values());
        }
        ProductGridFunction::new(t_spec, x_spec, values)
    }

    /// `f` copied to every t-node.
    pub fn broadcast(t_spec: GridSpec, f: &GridFunction) -> Self {
        let values = f.values().repeat(t_spec.len());
        ProductGridFunction {
            t_spec,
            x_spec: f.spec().clone(),
            values,
        }
    }

    pub fn t_spec(&self) -> &GridSpec {
        &self.t_spec
    }

    pub fn x_spec(&self) -> &GridSpec {
        &self.x_spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn t_len(&self) -> usize {
        self.t_spec.len()
    }

    pub fn x_len(&self) -> usize {
        self.x_spec.len()
    }

    pub fn slice_values(&self, j: usize) -> &[f64] {
        let n = self.x_spec.len();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn slice(&self, j: usize) -> GridFunction {
        GridFunction {
            spec: self.x_spec.clone(),
            values: self.slice_values(j).to_vec(),
        }
    }

    /// Index of the `t = 0` slice.
    pub fn t_zero_index(&self) -> Result<usize> {
        self.t_spec.zero_index().ok_or_else(|| {
            Error::Config("the t-grid has no node at t = 0; the anchor slice is required".into())
        })
    }

    /// Same data viewed as a function on the joint `(t, x)` grid.
    pub fn joint(&self) -> GridFunction {
        GridFunction {
            spec: self.t_spec.product(&self.x_spec),
            values: self.values.clone(),
        }
    }

    pub fn same_grids(&self, other: &ProductGridFunction) -> bool {
        self.t_spec == other.t_spec && self.x_spec == other.x_spec
    }

    pub fn add(&self, other: &ProductGridFunction) -> Result<Self> {
        if !self.same_grids(other) {
            return Err(Error::Shape("product functions live on different grids".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| a + b)
            .collect();
        ProductGridFunction::new(self.t_spec.clone(), self.x_spec.clone(), values)
    }

    pub fn shift(&self, c: f64) -> Result<Self> {
        if !c.is_finite() {
            return Err(Error::Parameter(format!("shift must be finite, got {c}")));
        }
        Ok(self.map(|v| v + c))
    }

    pub fn scale(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::Parameter(format!(
                "scale factor must be finite and nonnegative, got {s}"
            )));
        }
        Ok(ProductGridFunction {
            t_spec: self.t_spec.clone(),
            x_spec: self.x_spec.clone(),
            values: self.values.iter().map(|&v| scale_ext(s, v)).collect(),
        })
    }

    pub(crate) fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ProductGridFunction {
            t_spec: self.t_spec.clone(),
            x_spec: self.x_spec.clone(),
            values: self
                .values
                .iter()
                .map(|&v| if v.is_finite() { f(v) } else { v })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coordinates_follow_the_documented_formula() {
        let a = Axis::new(-1.0, 3.0, 7).unwrap();
        for i in 0..7 {
            assert_eq!(a.coord(i), -1.0 + i as f64 * (4.0 / 6.0));
        }
        assert_eq!(a.coord(0), -1.0);
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(Axis::new(1.0, 1.0, 3).is_err());
        assert!(Axis::new(0.0, 1.0, 1).is_err());
        assert!(Axis::new(0.0, f64::INFINITY, 3).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let spec = GridSpec::line(0.0, 1.0, 3).unwrap();
        assert!(GridFunction::new(spec.clone(), vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(GridFunction::new(spec.clone(), vec![0.0, f64::NEG_INFINITY, 1.0]).is_err());
        assert!(GridFunction::new(spec.clone(), vec![f64::INFINITY; 3]).is_err());
        assert!(GridFunction::new(spec, vec![0.0; 2]).is_err());
    }

    #[test]
    fn eval_constant_and_linear() {
        let spec = GridSpec::uniform(2, -1.0, 2.0, 5).unwrap();
        let f = GridFunction::constant(spec, 3.0).unwrap();
        assert_eq!(f.eval(&[0.3, -0.77]).unwrap(), 3.0);

        let spec = GridSpec::line(0.0, 1.0, 2).unwrap();
        let f = GridFunction::new(spec, vec![0.0, 1.0]).unwrap();
        assert_eq!(f.eval(&[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn eval_square_within_interpolation_bound() {
        let spec = GridSpec::line(-1.0, 1.0, 201).unwrap();
        let f = GridFunction::from_fn(spec, |x| x[0] * x[0]).unwrap();
        // h = 0.01 so the linear interpolation error is at most h^2/4
        assert_abs_diff_eq!(f.eval(&[0.35]).unwrap(), 0.1225, epsilon = 1e-4);
    }

    #[test]
    fn eval_is_exact_at_nodes() {
        let spec = GridSpec::new(vec![
            Axis::new(-1.3, 2.9, 17).unwrap(),
            Axis::new(0.1, 0.7, 9).unwrap(),
        ])
        .unwrap();
        let f = GridFunction::from_fn(spec.clone(), |x| (x[0] * 3.1).sin() + x[1].exp()).unwrap();
        for i in 0..spec.len() {
            assert_eq!(f.eval(&spec.coords(i)).unwrap(), f.value(i));
        }
    }

    #[test]
    fn eval_outside_box_is_an_error() {
        let spec = GridSpec::line(0.0, 1.0, 4).unwrap();
        let f = GridFunction::constant(spec, 0.0).unwrap();
        assert!(matches!(f.eval(&[1.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn eval_propagates_infinity_only_from_weighted_nodes() {
        let spec = GridSpec::line(0.0, 2.0, 3).unwrap();
        let f = GridFunction::new(spec, vec![0.0, 1.0, f64::INFINITY]).unwrap();
        assert_eq!(f.eval(&[1.0]).unwrap(), 1.0);
        assert_eq!(f.eval(&[1.5]).unwrap(), f64::INFINITY);
        assert_eq!(f.eval(&[0.5]).unwrap(), 0.5);
    }

    #[test]
    fn arithmetic() {
        let spec = GridSpec::line(-2.0, 2.0, 5).unwrap();
        let f = GridFunction::from_fn(spec.clone(), |x| x[0] * x[0] / 2.0).unwrap();
        assert_eq!(f.shift(0.0).unwrap(), f);
        let tilted = f.tilt(&AffineFunction::new(vec![1.0], 0.0).unwrap()).unwrap();
        assert_eq!(tilted.eval(&[1.0]).unwrap(), -0.5);
        let zero = f.scale(0.0).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        let g = GridFunction::new(spec.clone(), vec![1.0, f64::INFINITY, 1.0, 1.0, 1.0]).unwrap();
        let s = f.add(&g).unwrap();
        assert_eq!(s.value(1), f64::INFINITY);
        assert_eq!(g.scale(0.0).unwrap().value(1), 0.0);

        let other = GridFunction::constant(GridSpec::line(-2.0, 2.0, 6).unwrap(), 0.0).unwrap();
        assert!(matches!(f.add(&other), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_index_lookup() {
        let spec = GridSpec::line(-1.0, 1.0, 21).unwrap();
        assert_eq!(spec.zero_index(), Some(10));
        let spec = GridSpec::line(-1.0, 1.0, 20).unwrap();
        assert_eq!(spec.zero_index(), None);
        assert_eq!(GridSpec::point().zero_index(), Some(0));
    }

    #[test]
    fn product_layout_matches_joint_grid() {
        let t = GridSpec::line(-1.0, 1.0, 3).unwrap();
        let x = GridSpec::line(0.0, 2.0, 4).unwrap();
        let f = ProductGridFunction::from_fn(t, x, |t, x| 10.0 * t[0] + x[0]).unwrap();
        let joint = f.joint();
        for i in 0..joint.spec().len() {
            let c = joint.spec().coords(i);
            assert_eq!(joint.value(i), 10.0 * c[0] + c[1]);
        }
        assert_eq!(f.slice(2).values(), &[10.0, 10.0 + 2.0 / 3.0, 10.0 + 4.0 / 3.0, 12.0]);
    }
}
