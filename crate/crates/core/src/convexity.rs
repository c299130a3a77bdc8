//! Midpoint-convexity diagnostics on grid nodes.
//!
//! Multilinear interpolation is not convexity preserving in two or more
//! dimensions, so every triple checked here has its midpoint on a grid node:
//! random pairs are drawn with matching index parity on every axis, and the
//! exhaustive pass walks adjacent triples along axes and (in dimension >= 2)
//! along the two diagonals of every axis pair.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, ProductGridFunction};

/// The triple on which the worst defect was observed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub midpoint: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    /// Largest `f(mid) - (f(p) + f(q)) / 2` seen, clamped below at zero.
    #[serde(with = "crate::io::ext_f64")]
    pub worst_violation: f64,
    pub witness: Option<Witness>,
    pub checked_count: usize,
}

struct Tracker<'a> {
    f: &'a GridFunction,
    worst: f64,
    witness: Option<(usize, usize, usize)>,
    checked: usize,
}

impl<'a> Tracker<'a> {
    fn visit(&mut self, p: usize, q: usize, m: usize) {
        let (fp, fq, fm) = (self.f.value(p), self.f.value(q), self.f.value(m));
        self.checked += 1;
        let defect = if fm.is_finite() {
            let d = fm - 0.5 * (fp + fq);
            // defects at the rounding level of the operands count as zero
            let roundoff =
                f64::EPSILON * (4.0 * (fp.abs() + fq.abs() + 2.0 * fm.abs()) + 64.0);
            if d <= roundoff {
                0.0
            } else {
                d
            }
        } else {
            f64::INFINITY
        };
        if defect > self.worst {
            self.worst = defect;
            self.witness = Some((p, q, m));
        }
    }

    fn finish(self) -> ConvexityReport {
        let spec = self.f.spec();
        ConvexityReport {
            worst_violation: self.worst,
            witness: self.witness.map(|(p, q, m)| Witness {
                p: spec.coords(p),
                q: spec.coords(q),
                midpoint: spec.coords(m),
            }),
            checked_count: self.checked,
        }
    }
}

/// Direction vectors of the exhaustive pass: unit axes, then `e_k + e_l`
/// and `e_k - e_l` for every `k < l`.
pub(crate) fn directions(dim: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for k in 0..dim {
        let mut d = vec![0; dim];
        d[k] = 1;
        out.push(d);
    }
    for k in 0..dim {
        for l in k + 1..dim {
            for sign in [1, -1] {
                let mut d = vec![0; dim];
                d[k] = 1;
                d[l] = sign;
                out.push(d);
            }
        }
    }
    out
}

/// Seeded midpoint-convexity check of a grid function.
///
/// Draws `samples` node pairs (finite endpoints, midpoint on a node) and
/// additionally checks every adjacent axis-aligned and diagonal triple.
pub fn check_midpoint_convexity(
    f: &GridFunction,
    samples: usize,
    seed: u64,
) -> Result<ConvexityReport> {
    if samples == 0 {
        return Err(Error::Parameter("convexity check needs at least one sample".into()));
    }
    let spec = f.spec();
    let dim = spec.dim();
    let counts = spec.counts();
    let mut tracker = Tracker {
        f,
        worst: 0.0,
        witness: None,
        checked: 0,
    };

    let finite: Vec<usize> = (0..spec.len()).filter(|&i| f.value(i).is_finite()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p_idx = vec![0usize; dim];
    let mut q_idx = vec![0usize; dim];
    let mut m_idx = vec![0usize; dim];
    for _ in 0..samples {
        let p = finite[rng.gen_range(0..finite.len())];
        spec.unravel(p, &mut p_idx);
        for k in 0..dim {
            let parity = p_idx[k] % 2;
            let choices = (counts[k] - 1 - parity) / 2 + 1;
            q_idx[k] = parity + 2 * rng.gen_range(0..choices);
            m_idx[k] = (p_idx[k] + q_idx[k]) / 2;
        }
        let q = spec.ravel(&q_idx);
        if q == p || !f.value(q).is_finite() {
            continue;
        }
        tracker.visit(p, q, spec.ravel(&m_idx));
    }

    let strides = spec.strides();
    let mut idx = vec![0usize; dim];
    let dirs = directions(dim);
    for m in 0..spec.len() {
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
            let p = (m as i64 - offset) as usize;
            let q = (m as i64 + offset) as usize;
            if f.value(p).is_finite() && f.value(q).is_finite() {
                tracker.visit(p, q, m);
            }
        }
    }
    Ok(tracker.finish())
}

/// [`check_midpoint_convexity`] over the joint `(t, x)` grid.
pub fn joint_check(
    f: &ProductGridFunction,
    samples: usize,
    seed: u64,
) -> Result<ConvexityReport> {
    check_midpoint_convexity(&f.joint(), samples, seed)
}
