//! Adaptive cell subdivision on the `h`-lattice.
//!
//! A cell at level `k` groups `2^k` lattice nodes per axis; its geometric
//! extent is the union of the node cells `node ± h/2`, so a level-0 cell has
//! the flat-grid radius `h√c/2`. A cell is accepted once some element has
//! depth above the cell radius at the centre (depth functions are
//! 1-Lipschitz), dropped when it misses the domain, and split otherwise.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::error::{Error, Result};
use crate::par::Exec;

/// Coarse cells are accepted only when the depth clears twice the radius.
const ACCEPT: f64 = 2.0;

pub(crate) trait CellOracle: Sync {
    fn dim(&self) -> usize;
    fn elements(&self) -> usize;
    /// Signed distance of the point to the domain being covered.
    fn domain_distance(&self, x: &[f64]) -> f64;
    /// 1-Lipschitz depth of `x` in element `e`; `scratch` has `scratch_len()` entries.
    fn depth(&self, e: usize, x: &[f64], scratch: &mut [f64]) -> f64;
    fn scratch_len(&self) -> usize;
}

#[derive(Clone, Debug)]
pub(crate) struct Lattice {
    pub origin: Vec<f64>,
    pub h: f64,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Uncovered {
    pub point: Vec<f64>,
    pub best_depth: f64,
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    /// Min over accepted cells of (best depth − radius); a lower bound for
    /// `min_{x ∈ domain} max_e depth_e(x)`.
    pub margin: f64,
    pub cells: usize,
    pub failure: Option<Uncovered>,
}

struct Run<'a, O: CellOracle> {
    oracle: &'a O,
    lat: &'a Lattice,
    counter: &'a AtomicUsize,
    cap: usize,
}

struct Local {
    margin: f64,
    cells: usize,
    failure: Option<Uncovered>,
}

impl<O: CellOracle> Run<'_, O> {
    fn cell_center(&self, idx: &[usize], level: u32, out: &mut [f64]) {
        let span = (1usize << level) as f64;
        for k in 0..idx.len() {
            out[k] = self.lat.origin[k] + self.lat.h * (idx[k] as f64 + 0.5 * (span - 1.0));
        }
    }

    fn radius(&self, level: u32) -> f64 {
        0.5 * self.lat.h * (1usize << level) as f64 * (self.lat.counts.len() as f64).sqrt()
    }

    fn visit(&self, idx: &[usize], level: u32, active: &[usize], acc: &mut Local, scratch: &mut [f64]) -> Result<()> {
        if acc.failure.is_some() {
            return Ok(());
        }
        acc.cells += 1;
        if self.counter.fetch_add(1, Ordering::Relaxed) >= self.cap {
            return Err(Error::Resource(format!("adaptive covering exceeded {} cells", self.cap)));
        }
        let c = idx.len();
        let mut center = vec![0.0; c];
        self.cell_center(idx, level, &mut center);
        let r = self.radius(level);
        if self.oracle.domain_distance(&center) < -r {
            return Ok(());
        }
        let mut best = f64::NEG_INFINITY;
        let mut keep = Vec::with_capacity(active.len());
        for &e in active {
            let d = self.oracle.depth(e, &center, scratch);
            if d > best {
                best = d;
            }
            if d > -r {
                keep.push(e);
            }
        }
        if level == 0 {
            if best > r {
                acc.margin = acc.margin.min(best - r);
            } else {
                acc.failure = Some(Uncovered {
                    point: center,
                    best_depth: best,
                    radius: r,
                });
            }
            return Ok(());
        }
        if best >= ACCEPT * r {
            acc.margin = acc.margin.min(best - r);
            return Ok(());
        }
        if keep.is_empty() {
            // no element reaches the cell: report its centre at once
            acc.failure = Some(Uncovered {
                point: center,
                best_depth: best,
                radius: r,
            });
            return Ok(());
        }
        let half = 1usize << (level - 1);
        let mut child = idx.to_vec();
        for mask in 0u32..(1u32 << c) {
            let mut inside = true;
            for k in 0..c {
                child[k] = idx[k] + if mask >> k & 1 == 1 { half } else { 0 };
                if child[k] >= self.lat.counts[k] {
                    inside = false;
                }
            }
            if inside {
                self.visit(&child, level - 1, &keep, acc, scratch)?;
            }
        }
        Ok(())
    }
}

/// Covers the lattice with cells of level ≤ `top`, checks them in parallel
/// over top-level cells. The reported witness is the first failure in
/// top-cell order, hence deterministic.
pub(crate) fn cover<O: CellOracle>(oracle: &O, lat: &Lattice, cap: usize, exec: Exec) -> Result<Outcome> {
    let c = oracle.dim();
    let maxn = lat.counts.iter().copied().max().unwrap_or(1).max(1);
    let mut top: u32 = 0;
    while (1usize << (top + 1)) * 4 <= maxn {
        top += 1;
    }
    let span = 1usize << top;
    let per_axis: Vec<usize> = lat.counts.iter().map(|&n| n.div_ceil(span)).collect();
    let total: usize = per_axis.iter().product();
    let counter = AtomicUsize::new(0);
    let run = Run {
        oracle,
        lat,
        counter: &counter,
        cap,
    };
    let all: Vec<usize> = (0..oracle.elements()).collect();
    let results = exec.map_range(total, |t| -> Result<Local> {
        let mut idx = vec![0usize; c];
        let mut rem = t;
        for k in 0..c {
            idx[k] = (rem % per_axis[k]) * span;
            rem /= per_axis[k];
        }
        let mut acc = Local {
            margin: f64::INFINITY,
            cells: 0,
            failure: None,
        };
        let mut scratch = vec![0.0; oracle.scratch_len()];
        run.visit(&idx, top, &all, &mut acc, &mut scratch)?;
        Ok(acc)
    });
    let mut out = Outcome {
        margin: f64::INFINITY,
        cells: 0,
        failure: None,
    };
    for r in results {
        let r = r?;
        out.cells += r.cells;
        out.margin = out.margin.min(r.margin);
        if out.failure.is_none() {
            out.failure = r.failure;
        }
    }
    Ok(out)
}
