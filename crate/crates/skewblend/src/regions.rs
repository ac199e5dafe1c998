//! Finite unions of closed balls and boxes in ℝᶜ, signed distances, exact
//! containment margins for affine images, and lattice grids.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::linalg::{self, Mat};
use crate::skewproduct::AffineMap;

pub const DEFAULT_GRID_CAP: usize = 10_000_000;

/// Above this dimension box-into-ball margins use a norm bound instead of vertices.
const MAX_VERTEX_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Part {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Part {
    pub fn dim(&self) -> usize {
        match self {
            Part::Ball { center, .. } => center.len(),
            Part::Box { lo, .. } => lo.len(),
        }
    }

    /// Inner depth inside, minus the distance outside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        match self {
            Part::Ball { center, radius } => radius - linalg::dist(x, center),
            Part::Box { lo, hi } => {
                let mut inner = f64::INFINITY;
                let mut outer = 0.0;
                for k in 0..x.len() {
                    let a = x[k] - lo[k];
                    let b = hi[k] - x[k];
                    inner = inner.min(a.min(b));
                    let e = (-a).max(-b).max(0.0);
                    outer += e * e;
                }
                if outer > 0.0 {
                    -outer.sqrt()
                } else {
                    inner
                }
            }
        }
    }

    pub fn center(&self) -> Vec<f64> {
        match self {
            Part::Ball { center, .. } => center.clone(),
            Part::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
        }
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Part::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            Part::Box { lo, hi } => (lo.clone(), hi.clone()),
        }
    }

    /// Radius of the largest inscribed ball.
    pub fn inradius(&self) -> f64 {
        match self {
            Part::Ball { radius, .. } => *radius,
            Part::Box { lo, hi } => lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Part::Ball { center, radius } => {
                if !(*radius > 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
                    return input(format!("ball radius {radius} must be positive and finite"));
                }
            }
            Part::Box { lo, hi } => {
                if lo.len() != hi.len() {
                    return input("box lo/hi have different lengths");
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a < b) || !a.is_finite() || !b.is_finite()) {
                    return input("box needs lo < hi in every coordinate");
                }
            }
        }
        if self.dim() == 0 {
            return input("region dimension must be positive");
        }
        Ok(())
    }

    /// Largest `m` with `dist(f(self), ∂other) ≥ m` and `f(self) ⊂ other`
    /// whenever `m > 0`.
    pub fn image_margin(&self, f: &AffineMap, other: &Part) -> f64 {
        let c = f.apply(&self.center());
        let a = &f.a;
        match (self, other) {
            (Part::Ball { radius: r, .. }, Part::Box { lo, hi }) => (0..c.len())
                .map(|k| {
                    let ext = r * a.row(k).norm();
                    (c[k] - ext - lo[k]).min(hi[k] - c[k] - ext)
                })
                .fold(f64::INFINITY, f64::min),
            (Part::Box { lo: blo, hi: bhi }, Part::Box { lo, hi }) => (0..c.len())
                .map(|k| {
                    let ext: f64 = (0..blo.len()).map(|j| a[(k, j)].abs() * 0.5 * (bhi[j] - blo[j])).sum();
                    (c[k] - ext - lo[k]).min(hi[k] - c[k] - ext)
                })
                .fold(f64::INFINITY, f64::min),
            (Part::Ball { radius: r, .. }, Part::Ball { center, radius }) => {
                radius - linalg::dist(&c, center) - r * linalg::spectral_norm(a)
            }
            (Part::Box { lo: blo, hi: bhi }, Part::Ball { center, radius }) => {
                let n = blo.len();
                let half: Vec<f64> = blo.iter().zip(bhi).map(|(a, b)| 0.5 * (b - a)).collect();
                let d: Vec<f64> = c.iter().zip(center).map(|(x, y)| x - y).collect();
                if n > MAX_VERTEX_DIM {
                    let hn = linalg::norm(&half);
                    return radius - linalg::norm(&d) - linalg::spectral_norm(a) * hn;
                }
                let mut worst: f64 = 0.0;
                let mut v = vec![0.0; c.len()];
                for mask in 0u32..(1u32 << n) {
                    for (i, vi) in v.iter_mut().enumerate() {
                        let mut s = d[i];
                        for j in 0..n {
                            let sgn = if mask >> j & 1 == 1 { 1.0 } else { -1.0 };
                            s += a[(i, j)] * sgn * half[j];
                        }
                        *vi = s;
                    }
                    worst = worst.max(linalg::norm(&v));
                }
                radius - worst
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    parts: Vec<Part>,
}

impl Region {
    pub fn new(parts: Vec<Part>) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::Input("region needs at least one part".into()))?;
        let c = first.dim();
        for p in &parts {
            p.validate()?;
            if p.dim() != c {
                return input("region parts have different dimensions");
            }
        }
        Ok(Region { parts })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        Self::new(vec![Part::Ball { center, radius }])
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        Self::new(vec![Part::Box { lo, hi }])
    }

    /// Open interval `(lo, hi)` in one dimension.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::boxed(vec![lo], vec![hi])
    }

    pub fn cube(center: &[f64], half: f64) -> Result<Self> {
        Self::boxed(center.iter().map(|c| c - half).collect(), center.iter().map(|c| c + half).collect())
    }

    pub fn union(&self, other: &Region) -> Result<Self> {
        let mut parts = self.parts.clone();
        parts.extend(other.parts.iter().cloned());
        Self::new(parts)
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn dim(&self) -> usize {
        self.parts[0].dim()
    }

    /// Positive inside, negative outside, 1-Lipschitz.
    ///
    /// Outside it is minus the exact distance to the union. Inside it is the
    /// exact depth for a single part, for 1D unions and for unions of
    /// pairwise disjoint parts; otherwise the largest per-part depth, which is
    /// a lower bound.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        let best = self.parts.iter().map(|p| p.signed_distance(x)).fold(f64::NEG_INFINITY, f64::max);
        if best > 0.0 && self.parts.len() > 1 && self.dim() == 1 {
            return self.interval_depth(x[0]).unwrap_or(best);
        }
        best
    }

    /// Depth of `x` in the merged 1D union.
    fn interval_depth(&self, x: f64) -> Option<f64> {
        let mut iv: Vec<(f64, f64)> = self
            .parts
            .iter()
            .map(|p| {
                let (lo, hi) = p.bbox();
                (lo[0], hi[0])
            })
            .collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in iv {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged.iter().find(|(a, b)| *a < x && x < *b).map(|(a, b)| (x - a).min(b - x))
    }

    pub fn contains_with_margin(&self, x: &[f64], margin: f64) -> bool {
        self.signed_distance(x) > margin
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_margin(x, 0.0)
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let (mut lo, mut hi) = self.parts[0].bbox();
        for p in &self.parts[1..] {
            let (l, h) = p.bbox();
            for k in 0..lo.len() {
                lo[k] = lo[k].min(l[k]);
                hi[k] = hi[k].max(h[k]);
            }
        }
        (lo, hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.parts[0].center()
    }

    pub fn min_inradius(&self) -> f64 {
        self.parts.iter().map(|p| p.inradius()).fold(f64::INFINITY, f64::min)
    }

    pub fn diameter_bound(&self) -> f64 {
        let (lo, hi) = self.bbox();
        linalg::dist(&lo, &hi)
    }

    /// Uniform sample by rejection from the bounding box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (lo, hi) = self.bbox();
        loop {
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..=*b)).collect();
            if self.signed_distance(&x) >= 0.0 {
                return x;
            }
        }
    }

    /// Margin of `f(self) ⊂ other`: for each part of `self` the best part of
    /// `other`, then the worst part of `self`.
    pub fn image_margin(&self, f: &AffineMap, other: &Region) -> f64 {
        self.parts
            .iter()
            .map(|p| other.parts.iter().map(|q| p.image_margin(f, q)).fold(f64::NEG_INFINITY, f64::max))
            .fold(f64::INFINITY, f64::min)
    }

    /// Margin of `self ⊂ other` (identity image).
    pub fn inclusion_margin(&self, other: &Region) -> f64 {
        self.image_margin(&AffineMap::identity(self.dim()), other)
    }

    /// Depth function of `f(self)`, see [`AffineImage`].
    pub fn affine_image(&self, f: &AffineMap) -> Result<AffineImage> {
        AffineImage::new(self, f)
    }
}

/// Precomputed depth of points in `f(R)` for an invertible affine `f`.
///
/// Box parts use the exact face distance of the parallelotope; ball parts use
/// `σ_min(A)·(r − |A⁻¹(y−b) − c|)`. Both are 1-Lipschitz and positive exactly
/// inside, so the maximum over parts is too.
#[derive(Clone, Debug)]
pub struct AffineImage {
    dim: usize,
    ainv: Vec<f64>,
    shift: Vec<f64>,
    parts: Vec<ImagePart>,
}

#[derive(Clone, Debug)]
enum ImagePart {
    Ball { center: Vec<f64>, radius: f64, smin: f64 },
    Box { mid: Vec<f64>, half: Vec<f64>, row_inv: Vec<f64> },
}

impl AffineImage {
    pub fn new(region: &Region, f: &AffineMap) -> Result<Self> {
        if region.dim() != f.dim() {
            return input("map and region dimensions differ");
        }
        let inv: Mat = linalg::invert(&f.a)?;
        let smin = linalg::sigma_min(&f.a);
        let parts = region
            .parts
            .iter()
            .map(|p| match p {
                Part::Ball { center, radius } => ImagePart::Ball {
                    center: center.clone(),
                    radius: *radius,
                    smin,
                },
                Part::Box { lo, hi } => ImagePart::Box {
                    mid: lo.iter().zip(hi).map(|(a, b)| 0.5 * (a + b)).collect(),
                    half: lo.iter().zip(hi).map(|(a, b)| 0.5 * (b - a)).collect(),
                    row_inv: (0..inv.nrows()).map(|k| 1.0 / inv.row(k).norm()).collect(),
                },
            })
            .collect();
        Ok(AffineImage {
            dim: f.dim(),
            ainv: linalg::row_major(&inv),
            shift: f.b.iter().cloned().collect(),
            parts,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `scratch` needs `2·dim` entries.
    #[inline]
    pub fn depth_with(&self, y: &[f64], scratch: &mut [f64]) -> f64 {
        let (d, z) = scratch.split_at_mut(self.dim);
        for k in 0..self.dim {
            d[k] = y[k] - self.shift[k];
        }
        linalg::matvec_into(&self.ainv, d, &mut z[..self.dim]);
        let mut best = f64::NEG_INFINITY;
        for p in &self.parts {
            let v = match p {
                ImagePart::Ball { center, radius, smin } => smin * (radius - linalg::dist(&z[..self.dim], center)),
                ImagePart::Box { mid, half, row_inv } => {
                    let mut m = f64::INFINITY;
                    for k in 0..self.dim {
                        m = m.min((half[k] - (z[k] - mid[k]).abs()) * row_inv[k]);
                    }
                    m
                }
            };
            best = best.max(v);
        }
        best
    }

    pub fn depth(&self, y: &[f64]) -> f64 {
        let mut scratch = vec![0.0; 2 * self.dim];
        self.depth_with(y, &mut scratch)
    }

    /// Preimage `f⁻¹(y)`.
    pub fn preimage(&self, y: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = y.iter().zip(&self.shift).map(|(a, b)| a - b).collect();
        let mut z = vec![0.0; self.dim];
        linalg::matvec_into(&self.ainv, &d, &mut z);
        z
    }
}

/// Lattice `origin + h·k`, restricted to points whose cell meets the region.
#[derive(Clone, Debug)]
pub struct Grid {
    pub region: Region,
    pub h: f64,
    origin: Vec<f64>,
    counts: Vec<usize>,
    points: Vec<Vec<f64>>,
}

impl Grid {
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Half-diagonal `h√c/2` of a cell.
    pub fn cell_radius(&self) -> f64 {
        0.5 * self.h * (self.region.dim() as f64).sqrt()
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

/// Number of lattice nodes along each axis of the bounding box.
pub fn lattice_counts(lo: &[f64], hi: &[f64], h: f64) -> Vec<usize> {
    lo.iter()
        .zip(hi)
        .map(|(a, b)| ((b - a) / h - 1e-9).ceil().max(0.0) as usize + 1)
        .collect()
}

pub fn cover_grid(r: &Region, h: f64) -> Result<Grid> {
    cover_grid_capped(r, h, DEFAULT_GRID_CAP)
}

pub fn cover_grid_capped(r: &Region, h: f64, cap: usize) -> Result<Grid> {
    if !(h > 0.0 && h.is_finite()) {
        return input(format!("grid spacing {h} must be positive"));
    }
    let (lo, hi) = r.bbox();
    let counts = lattice_counts(&lo, &hi, h);
    let total = counts
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .filter(|&t| t <= cap)
        .ok_or_else(|| {
            Error::Resource(format!(
                "grid of spacing {h} needs {:?} nodes per axis, cap is {cap} points",
                counts
            ))
        })?;
    let g = 0.5 * h * (r.dim() as f64).sqrt();
    let mut points = Vec::new();
    let mut idx = vec![0usize; counts.len()];
    for _ in 0..total {
        let p: Vec<f64> = idx.iter().zip(&lo).map(|(&i, &l)| l + h * i as f64).collect();
        if r.signed_distance(&p) >= -g {
            points.push(p);
        }
        for k in 0..idx.len() {
            idx[k] += 1;
            if idx[k] < counts[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(Grid {
        region: r.clone(),
        h,
        origin: lo,
        counts,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ball(c: usize) -> Region {
        Region::ball(vec![0.0; c], 1.0).unwrap()
    }

    #[test]
    fn ball_signed_distance() {
        assert_eq!(unit_ball(3).signed_distance(&[0.0, 0.0, 0.0]), 1.0);
        assert_eq!(unit_ball(2).signed_distance(&[2.0, 0.0]), -1.0);
    }

    #[test]
    fn union_depth_in_one_dimension() {
        let r = Region::interval(0.0, 1.0)
            .unwrap()
            .union(&Region::interval(0.5, 2.0).unwrap())
            .unwrap();
        assert!((r.signed_distance(&[0.75]) - 0.75).abs() < 1e-15);
        assert!((r.signed_distance(&[2.5]) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn margins() {
        let b = unit_ball(2);
        assert!(b.contains_with_margin(&[0.0, 0.0], 0.5));
        assert!(!b.contains_with_margin(&[0.9, 0.0], 0.2));
        assert_eq!(b.contains_with_margin(&[0.3, 0.1], 0.0), b.contains(&[0.3, 0.1]));
    }

    #[test]
    fn grid_counts() {
        let g = cover_grid(&Region::interval(-1.0, 1.0).unwrap(), 0.5).unwrap();
        assert_eq!(g.len(), 5);
        let g = cover_grid(&Region::boxed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(), 1.0).unwrap();
        assert_eq!(g.len(), 4);
    }

    #[test]
    fn grid_cap_is_resource_error() {
        let r = Region::cube(&[0.0; 3], 1.0).unwrap();
        assert!(matches!(cover_grid_capped(&r, 0.01, 1000), Err(Error::Resource(_))));
    }

    #[test]
    fn image_margin_cases() {
        let f = AffineMap::linear(linalg::diag(&[0.5, 0.5])).unwrap();
        let b = unit_ball(2);
        let d = Region::cube(&[0.0, 0.0], 1.0).unwrap();
        assert!((b.image_margin(&f, &d) - 0.5).abs() < 1e-12);
        assert!((d.image_margin(&f, &d) - 0.5).abs() < 1e-12);
        assert!((b.image_margin(&f, &b) - 0.5).abs() < 1e-12);
        let corner = 1.0 - 0.5 * 2f64.sqrt();
        assert!((d.image_margin(&f, &b) - corner).abs() < 1e-12);
    }

    #[test]
    fn parallelotope_depth_is_exact_inside() {
        let f = AffineMap::new(
            linalg::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap(),
            crate::linalg::Vector::from_vec(vec![0.0, 0.0]),
        )
        .unwrap();
        let b = Region::cube(&[0.0, 0.0], 1.0).unwrap();
        let img = b.affine_image(&f).unwrap();
        // faces y2 = ±1 and y1 − y2 = ±1
        let d = img.depth(&[0.0, 0.0]);
        assert!((d - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(img.depth(&[3.0, 0.0]) < 0.0);
    }
}
