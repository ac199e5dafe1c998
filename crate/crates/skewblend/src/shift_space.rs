//! Finite-alphabet bi-sequences, stored as finite truncations.
//!
//! A [`TruncatedSequence`] keeps the past block `ξ_{-k} … ξ_{-1}` in natural
//! left-to-right order and the future block `ξ_0 … ξ_{j-1}`. Coordinates that
//! are not stored are free, so a truncation stands for a cylinder.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};

pub const DEFAULT_DEPTH: usize = 64;

/// Alphabet letter, 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(pub u16);

impl Symbol {
    pub fn new(id: usize) -> Result<Self> {
        if id == 0 || id > u16::MAX as usize {
            return input(format!("symbol id {id} outside 1..=65535"));
        }
        Ok(Symbol(id as u16))
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }

    /// Zero-based index into per-symbol tables.
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Past,
    #[default]
    Future,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Word {
    pub symbols: Vec<Symbol>,
    #[serde(default)]
    pub orientation: Orientation,
}

impl Word {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Word {
            symbols,
            orientation: Orientation::Future,
        }
    }

    pub fn past(symbols: Vec<Symbol>) -> Self {
        Word {
            symbols,
            orientation: Orientation::Past,
        }
    }

    pub fn from_ids(ids: &[usize]) -> Result<Self> {
        Ok(Word::new(ids.iter().map(|&i| Symbol::new(i)).collect::<Result<_>>()?))
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn ids(&self) -> Vec<usize> {
        self.symbols.iter().map(|s| s.id()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CylinderKind {
    /// `H_i`: `ξ_0 = i`.
    Horizontal,
    /// `V_i`: `ξ_{-1} = i`.
    Vertical,
}

/// Truncation of a point of Σ. Blocks never exceed `depth`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TruncatedSequence {
    past: Vec<Symbol>,
    future: Vec<Symbol>,
    depth: usize,
}

impl TruncatedSequence {
    /// Depth is [`DEFAULT_DEPTH`], grown to fit longer blocks.
    pub fn new(past: Vec<Symbol>, future: Vec<Symbol>) -> Self {
        let depth = DEFAULT_DEPTH.max(past.len()).max(future.len());
        TruncatedSequence { past, future, depth }
    }

    pub fn with_depth(past: Vec<Symbol>, future: Vec<Symbol>, depth: usize) -> Result<Self> {
        if depth == 0 {
            return input("truncation depth must be at least 1");
        }
        if past.len() > depth || future.len() > depth {
            return input(format!("blocks of length {}/{} exceed depth {depth}", past.len(), future.len()));
        }
        Ok(TruncatedSequence { past, future, depth })
    }

    pub fn from_ids(past: &[usize], future: &[usize]) -> Result<Self> {
        let p = Word::from_ids(past)?.symbols;
        let f = Word::from_ids(future)?.symbols;
        Ok(Self::new(p, f))
    }

    pub fn past(&self) -> &[Symbol] {
        &self.past
    }

    pub fn future(&self) -> &[Symbol] {
        &self.future
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    /// `ξ_i` if stored.
    pub fn coord(&self, i: i64) -> Option<Symbol> {
        if i >= 0 {
            self.future.get(i as usize).copied()
        } else {
            let back = (-i) as usize;
            if back <= self.past.len() {
                Some(self.past[self.past.len() - back])
            } else {
                None
            }
        }
    }

    /// `τⁿξ`, i.e. `(τⁿξ)_i = ξ_{i+n}`; requires `-|past| ≤ n ≤ |future|`.
    pub fn shifted(&self, n: i64) -> Result<Self> {
        let p = self.past.len() as i64;
        let f = self.future.len() as i64;
        if n < -p || n > f {
            return Err(Error::Depth(format!("shift by {n} leaves the stored window [-{p}, {f})")));
        }
        let lo = -p - n;
        let hi = f - n;
        let past = (lo..0).map(|k| self.coord(k + n).unwrap()).collect();
        let future = (0..hi).map(|k| self.coord(k + n).unwrap()).collect();
        Ok(TruncatedSequence {
            past,
            future,
            depth: self.depth,
        })
    }

    /// Past becomes `α` followed by the old past; depth grows if needed.
    pub fn prepend_block(&self, alpha: &Word) -> Self {
        let mut past = alpha.symbols.clone();
        past.extend_from_slice(&self.past);
        let depth = self.depth.max(past.len());
        TruncatedSequence {
            past,
            future: self.future.clone(),
            depth,
        }
    }

    pub fn with_future(&self, future: Vec<Symbol>) -> Self {
        let depth = self.depth.max(future.len());
        TruncatedSequence {
            past: self.past.clone(),
            future,
            depth,
        }
    }
}

impl fmt::Display for TruncatedSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |s: &[Symbol]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "past=[{}], future=[{}]", join(&self.past), join(&self.future))
    }
}

fn parse_block(text: &str, key: &str) -> Result<Vec<Symbol>> {
    let t = text.trim();
    let rest = t
        .strip_prefix(key)
        .and_then(|r| r.trim_start().strip_prefix('='))
        .ok_or_else(|| Error::Input(format!("expected `{key}=[...]` in `{t}`")))?
        .trim();
    let inner = rest
        .strip_prefix('[')
        .and_then(|r| r.strip_suffix(']'))
        .ok_or_else(|| Error::Input(format!("expected bracketed list after `{key}=`")))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|s| {
            let id: usize = s.trim().parse().map_err(|_| Error::Input(format!("bad symbol `{}`", s.trim())))?;
            Symbol::new(id)
        })
        .collect()
}

impl FromStr for TruncatedSequence {
    type Err = Error;

    /// Parses `past=[2,1], future=[1,3]`.
    fn from_str(s: &str) -> Result<Self> {
        let split = s
            .find("future")
            .ok_or_else(|| Error::Input(format!("missing `future=` in `{s}`")))?;
        let head = s[..split].trim().trim_end_matches(',');
        let past = parse_block(head, "past")?;
        let future = parse_block(&s[split..], "future")?;
        Ok(TruncatedSequence::new(past, future))
    }
}

/// Value of the metric `ν^ℓ`, or an upper bound when the truncations agree on
/// every coordinate they both store.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaDistance {
    pub value: f64,
    pub exact: bool,
    /// `ℓ` when exact, otherwise the first index not determined by both.
    pub index: usize,
}

/// `d_Σ(ξ, ζ) = ν^ℓ`, `ℓ = min{i ≥ 0 : ξ_i ≠ ζ_i or ξ_{-i} ≠ ζ_{-i}}`.
pub fn sigma_distance(xi: &TruncatedSequence, zeta: &TruncatedSequence, nu: f64) -> Result<SigmaDistance> {
    if xi.depth != zeta.depth {
        return input(format!("truncation depths differ ({} vs {})", xi.depth, zeta.depth));
    }
    if !(nu > 0.0 && nu < 1.0) {
        return input(format!("nu = {nu} outside (0,1)"));
    }
    let mut i: usize = 0;
    loop {
        let idx = [i as i64, -(i as i64)];
        let mut undetermined = false;
        for &k in &idx[..if i == 0 { 1 } else { 2 }] {
            match (xi.coord(k), zeta.coord(k)) {
                (Some(a), Some(b)) if a != b => {
                    return Ok(SigmaDistance {
                        value: nu.powi(i as i32),
                        exact: true,
                        index: i,
                    })
                }
                (Some(_), Some(_)) => {}
                _ => undetermined = true,
            }
        }
        if undetermined {
            return Ok(SigmaDistance {
                value: nu.powi(i as i32),
                exact: false,
                index: i,
            });
        }
        i += 1;
    }
}

pub fn cylinder_membership(xi: &TruncatedSequence, kind: CylinderKind, s: Symbol) -> bool {
    let k = match kind {
        CylinderKind::Horizontal => 0,
        CylinderKind::Vertical => -1,
    };
    xi.coord(k) == Some(s)
}

pub fn prepend_block(xi: &TruncatedSequence, alpha: &Word) -> TruncatedSequence {
    xi.prepend_block(alpha)
}
