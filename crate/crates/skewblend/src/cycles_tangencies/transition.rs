//! Breadth-first search for transitions `T ∈ ⟨φ₁,…,φ_d⟩⁺` with `T(x)` in a
//! target region.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::par::Exec;
use crate::regions::{Part, Region};
use crate::shift_space::Symbol;
use crate::skewproduct::{AffineMap, FiberMap, SkewSystem};

/// Words evaluated per parallel batch.
const BATCH: usize = 4096;
/// Upper bound on the number of words visited.
pub const MAX_WORDS: usize = 50_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionWitness {
    /// Symbols in application order: `T = φ_{w_k} ∘ ⋯ ∘ φ_{w_1}`.
    pub word: Vec<Symbol>,
    pub map: FiberMap,
    pub source: Vec<f64>,
    pub image: Vec<f64>,
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TransitionSearch {
    Found(TransitionWitness),
    NotFound {
        max_depth: usize,
        words_checked: usize,
        /// Largest signed distance to the target seen (negative).
        near_miss: f64,
        near_word: Vec<Symbol>,
        near_source: Vec<f64>,
    },
}

impl TransitionSearch {
    pub fn witness(&self) -> Option<&TransitionWitness> {
        match self {
            TransitionSearch::Found(w) => Some(w),
            TransitionSearch::NotFound { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionSource {
    Points(Vec<Vec<f64>>),
    Region(Region),
}

impl TransitionSource {
    /// Centroid first, then `centre ± r/2·e_k` for every part, where `r` is
    /// the part's inradius.
    pub fn points(&self) -> Vec<Vec<f64>> {
        match self {
            TransitionSource::Points(p) => p.clone(),
            TransitionSource::Region(r) => {
                let mut out = vec![r.center()];
                for part in r.parts() {
                    let c = part.center();
                    let step = 0.5 * part.inradius();
                    for k in 0..c.len() {
                        for sgn in [-1.0, 1.0] {
                            let mut p = c.clone();
                            p[k] += sgn * step;
                            out.push(p);
                        }
                    }
                }
                out
            }
        }
    }
}

/// Generic search over an IFS given by `apply`. Words are visited by length,
/// then lexicographically in application order; for each word the sources
/// are tried in order.
pub fn search_words<F>(alphabet: usize, apply: F, sources: &[Vec<f64>], target: &Region, max_depth: usize, exec: Exec) -> Result<SearchHit>
where
    F: Fn(Symbol, &[f64]) -> Result<Vec<f64>> + Sync,
{
    if max_depth == 0 {
        return input("max_depth must be at least 1");
    }
    if alphabet == 0 || sources.is_empty() {
        return input("empty alphabet or source set");
    }
    let mut checked = 0usize;
    let mut near: Option<(f64, Vec<Symbol>, Vec<f64>)> = None;
    for len in 1..=max_depth {
        let total = (alphabet as u128).pow(len as u32);
        if checked as u128 + total > MAX_WORDS as u128 {
            return Err(Error::Resource(format!("{total} words of length {len} exceed the search budget")));
        }
        let total = total as usize;
        let mut start = 0usize;
        while start < total {
            let n = BATCH.min(total - start);
            let results = exec.map_range(n, |i| -> Result<(Option<usize>, f64, usize)> {
                let word = decode(start + i, len, alphabet);
                let mut best = (f64::NEG_INFINITY, 0usize);
                for (si, x) in sources.iter().enumerate() {
                    let mut y = x.clone();
                    for s in &word {
                        y = apply(*s, &y)?;
                    }
                    let m = target.signed_distance(&y);
                    if m > 0.0 {
                        return Ok((Some(si), m, si));
                    }
                    if m > best.0 {
                        best = (m, si);
                    }
                }
                Ok((None, best.0, best.1))
            });
            for (i, r) in results.into_iter().enumerate() {
                let (hit, m, si) = r?;
                let word = decode(start + i, len, alphabet);
                if let Some(si) = hit {
                    return Ok(SearchHit::Found {
                        word,
                        source: si,
                        margin: m,
                        checked: checked + i + 1,
                    });
                }
                if near.as_ref().is_none_or(|(b, _, _)| m > *b) {
                    near = Some((m, word, sources[si].clone()));
                }
            }
            checked += n;
            start += n;
        }
    }
    let (near_miss, near_word, near_source) = near.unwrap();
    Ok(SearchHit::Exhausted {
        checked,
        near_miss,
        near_word,
        near_source,
    })
}

#[derive(Clone, Debug)]
pub enum SearchHit {
    Found {
        word: Vec<Symbol>,
        source: usize,
        margin: f64,
        checked: usize,
    },
    Exhausted {
        checked: usize,
        near_miss: f64,
        near_word: Vec<Symbol>,
        near_source: Vec<f64>,
    },
}

/// Word number `code` of length `len`, most significant letter first.
fn decode(mut code: usize, len: usize, alphabet: usize) -> Vec<Symbol> {
    let mut w = vec![Symbol(1); len];
    for slot in w.iter_mut().rev() {
        *slot = Symbol((code % alphabet + 1) as u16);
        code /= alphabet;
    }
    w
}

/// Composition of the symbols' fiber maps, first symbol applied first.
pub fn compose_word(sys: &SkewSystem, word: &[Symbol]) -> Result<FiberMap> {
    let pieces: Vec<AffineMap> = word.iter().map(|s| Ok(sys.map(*s)?.total().clone())).collect::<Result<_>>()?;
    FiberMap::composed(pieces)
}

fn require_one_step(sys: &SkewSystem) -> Result<()> {
    if !sys.is_one_step() {
        return Err(Error::Unsupported("transition search composes one-step fiber maps only".into()));
    }
    Ok(())
}

/// First transition from `source` into `target` in (length, lex) order.
pub fn find_transition(sys: &SkewSystem, source: &TransitionSource, target: &Region, max_depth: usize) -> Result<TransitionSearch> {
    find_transition_with(sys, source, target, max_depth, Exec::default())
}

pub fn find_transition_with(
    sys: &SkewSystem,
    source: &TransitionSource,
    target: &Region,
    max_depth: usize,
    exec: Exec,
) -> Result<TransitionSearch> {
    require_one_step(sys)?;
    if target.dim() != sys.dim() {
        return input("target region dimension differs from the system");
    }
    let sources = source.points();
    if sources.iter().any(|p| p.len() != sys.dim()) {
        return input("source points have the wrong dimension");
    }
    let hit = search_words(sys.alphabet(), |s, x| Ok(sys.map(s)?.apply(x)), &sources, target, max_depth, exec)?;
    Ok(match hit {
        SearchHit::Found { word, source, margin, .. } => {
            let map = compose_word(sys, &word)?;
            let x = sources[source].clone();
            let image = map.apply(&x);
            TransitionSearch::Found(TransitionWitness {
                word,
                map,
                source: x,
                image,
                margin,
            })
        }
        SearchHit::Exhausted {
            checked,
            near_miss,
            near_word,
            near_source,
        } => TransitionSearch::NotFound {
            max_depth,
            words_checked: checked,
            near_miss,
            near_word,
            near_source,
        },
    })
}

/// Recomputes the witness from the system: the composed map, the endpoint
/// and its margin in `target`. Returns the margin and the source depth in
/// `source`, if given.
pub fn replay_witness(sys: &SkewSystem, w: &TransitionWitness, source: Option<&Region>, target: &Region) -> Result<(f64, Option<f64>)> {
    require_one_step(sys)?;
    if w.word.is_empty() {
        return input("transition words must be nonempty");
    }
    let map = compose_word(sys, &w.word)?;
    let image = map.apply(&w.source);
    let drift = crate::linalg::dist(&image, &w.image);
    if drift > 1e-9 * (1.0 + crate::linalg::norm(&image)) {
        return Err(Error::CertificateInvalid(format!(
            "transition endpoint differs from the replay by {drift:e}"
        )));
    }
    Ok((target.signed_distance(&image), source.map(|s| s.signed_distance(&w.source))))
}

/// Whether two regions are disjoint, with the separation as evidence.
/// Union parts are compared pairwise; the separation is a lower bound.
pub fn region_separation(a: &Region, b: &Region) -> f64 {
    let mut best = f64::INFINITY;
    for p in a.parts() {
        for q in b.parts() {
            best = best.min(part_separation(p, q));
        }
    }
    best
}

fn part_separation(p: &Part, q: &Part) -> f64 {
    match (p, q) {
        (Part::Box { lo: l1, hi: h1 }, Part::Box { lo: l2, hi: h2 }) => {
            let gaps: Vec<f64> = (0..l1.len()).map(|k| (l2[k] - h1[k]).max(l1[k] - h2[k]).max(0.0)).collect();
            let g = crate::linalg::norm(&gaps);
            if g > 0.0 {
                g
            } else {
                // overlap depth along the tightest axis
                -(0..l1.len())
                    .map(|k| h1[k].min(h2[k]) - l1[k].max(l2[k]))
                    .fold(f64::INFINITY, f64::min)
            }
        }
        (Part::Ball { center: c1, radius: r1 }, Part::Ball { center: c2, radius: r2 }) => crate::linalg::dist(c1, c2) - r1 - r2,
        (Part::Ball { center, radius }, b @ Part::Box { .. }) | (b @ Part::Box { .. }, Part::Ball { center, radius }) => {
            -b.signed_distance(center) - radius
        }
    }
}
