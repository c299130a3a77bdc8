//! JSON and CSV encodings.
//!
//! Extended reals are written as JSON numbers, with `+inf` spelled as the
//! string `"inf"`. CSV floats use `{:.16e}`, which round-trips every `f64`.

use std::fmt::Write as _;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::grid::{GridFunction, GridSpec, ProductGridFunction};

/// Token for `+inf` in JSON and CSV.
pub const INF_TOKEN: &str = "inf";

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Ext {
    Num(f64),
    Tok(String),
}

impl Ext {
    fn from_f64(v: f64) -> Ext {
        if v.is_finite() {
            Ext::Num(v)
        } else if v == f64::INFINITY {
            Ext::Tok(INF_TOKEN.into())
        } else if v == f64::NEG_INFINITY {
            Ext::Tok(format!("-{INF_TOKEN}"))
        } else {
            Ext::Tok("nan".into())
        }
    }

    fn into_f64(self) -> std::result::Result<f64, String> {
        match self {
            Ext::Num(v) => Ok(v),
            Ext::Tok(s) => match s.as_str() {
                INF_TOKEN => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(format!("expected a number or \"{INF_TOKEN}\", found \"{other}\"")),
            },
        }
    }
}

/// Serde adapter for a scalar that may be infinite.
pub mod ext_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        Ext::from_f64(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        Ext::deserialize(d)?.into_f64().map_err(D::Error::custom)
    }
}

/// Serde adapter for a list of possibly infinite values.
pub mod ext_f64_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&x| Ext::from_f64(x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
        Vec::<Ext>::deserialize(d)?
            .into_iter()
            .map(|e| e.into_f64().map_err(D::Error::custom))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct GridFunctionFile {
    spec: GridSpec,
    #[serde(with = "ext_f64_vec")]
    values: Vec<f64>,
}

impl Serialize for GridFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GridFunctionFile {
            spec: self.spec().clone(),
            values: self.values().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = GridFunctionFile::deserialize(d)?;
        GridFunction::new(f.spec, f.values).map_err(D::Error::custom)
    }
}

/// A product function is stored as its t-grid and one grid function per
/// t-node.
#[derive(Serialize, Deserialize)]
struct ProductFile {
    t_spec: GridSpec,
    slices: Vec<GridFunction>,
}

impl Serialize for ProductGridFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProductFile {
            t_spec: self.t_spec().clone(),
            slices: (0..self.t_len()).map(|j| self.slice(j)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProductGridFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = ProductFile::deserialize(d)?;
        if f.slices.is_empty() {
            return Err(D::Error::custom("a product function needs at least one slice"));
        }
        ProductGridFunction::from_slices(f.t_spec, &f.slices).map_err(D::Error::custom)
    }
}

/// CSV field for an extended real.
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        INF_TOKEN.to_string()
    } else {
        format!("{v:.16e}")
    }
}

fn coord_header(prefix: &str, dim: usize) -> String {
    (0..dim).map(|k| format!("{prefix}{k},")).collect()
}

fn coord_fields(out: &mut String, coords: &[f64]) {
    for c in coords {
        out.push_str(&fmt_f64(*c));
        out.push(',');
    }
}

/// One row per node: index, coordinates, value.
pub fn grid_function_csv(f: &GridFunction) -> String {
    let spec = f.spec();
    let mut out = format!("index,{}value\n", coord_header("x", spec.dim()));
    for i in 0..spec.len() {
        let _ = write!(out, "{i},");
        coord_fields(&mut out, &spec.coords(i));
        out.push_str(&fmt_f64(f.value(i)));
        out.push('\n');
    }
    out
}

/// One row per `(t, x)` node of a product function.
pub fn product_csv(f: &ProductGridFunction) -> String {
    let (t_spec, x_spec) = (f.t_spec(), f.x_spec());
    let mut out = format!(
        "t_index,x_index,{}{}value\n",
        coord_header("t", t_spec.dim()),
        coord_header("x", x_spec.dim())
    );
    for j in 0..f.t_len() {
        let t = t_spec.coords(j);
        for (i, v) in f.slice_values(j).iter().enumerate() {
            let _ = write!(out, "{j},{i},");
            coord_fields(&mut out, &t);
            coord_fields(&mut out, &x_spec.coords(i));
            out.push_str(&fmt_f64(*v));
            out.push('\n');
        }
    }
    out
}

/// Constraint residual per t-node.
pub fn residuals_csv(t_spec: &GridSpec, residuals: &[f64]) -> String {
    let mut out = format!("t_index,{}residual\n", coord_header("t", t_spec.dim()));
    for (j, r) in residuals.iter().enumerate() {
        let _ = write!(out, "{j},");
        coord_fields(&mut out, &t_spec.coords(j));
        out.push_str(&fmt_f64(*r));
        out.push('\n');
    }
    out
}

/// Hölder trace: `k, log_a, theoretical`.
pub fn trace_csv(log_a: &[f64], theoretical: &[f64]) -> String {
    let mut out = String::from("k,log_a,theoretical\n");
    for (k, (a, b)) in log_a.iter().zip(theoretical).enumerate() {
        let _ = writeln!(out, "{k},{},{}", fmt_f64(*a), fmt_f64(*b));
    }
    out
}

/// A comparison of the dual-path extremal function against the oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub x0: Vec<f64>,
    pub dual_path_value: f64,
    pub oracle_value: f64,
}

impl OracleRow {
    pub fn gap(&self) -> f64 {
        self.dual_path_value - self.oracle_value
    }
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let dim = rows.first().map_or(0, |r| r.x0.len());
    let mut out = format!("{}dual_path_value,oracle_value,gap\n", coord_header("x0_", dim));
    for r in rows {
        coord_fields(&mut out, &r.x0);
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_f64(r.dual_path_value),
            fmt_f64(r.oracle_value),
            fmt_f64(r.gap())
        );
    }
    out
}
