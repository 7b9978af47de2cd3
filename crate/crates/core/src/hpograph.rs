//! Graph-smoothed hyper-parameter selection.
//!
//! Configurations of a Cartesian grid are nodes of a lattice graph. Ordinal
//! dimensions form paths, categorical dimensions form cliques, and the
//! lattice distance is the sum of per-dimension step distances. Validation
//! errors are averaged over closed `k`-neighborhoods before taking the argmin.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adapt::{FineTuneConfig, Selector};
use crate::pretrain::LossKind;
use crate::{Error, Result};

/// Adjacency rule of one grid dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimKind {
    /// Levels are ordered; neighbors differ by one level.
    Ordinal,
    /// Levels are unordered; any two distinct levels are adjacent.
    Categorical,
}

/// Shape and adjacency of a configuration grid, with row-major indexing
/// (last dimension fastest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    shape: Vec<usize>,
    kinds: Vec<DimKind>,
    strides: Vec<usize>,
    len: usize,
}

impl Lattice {
    pub fn new(shape: Vec<usize>, kinds: Vec<DimKind>) -> Result<Self> {
        if shape.len() != kinds.len() {
            return Err(Error::Dimension {
                what: "dimension kinds",
                expected: shape.len(),
                got: kinds.len(),
            });
        }
        if shape.contains(&0) {
            return Err(Error::InvalidArgument("every dimension needs at least one level".into()));
        }
        let mut strides = vec![1; shape.len()];
        for d in (0..shape.len().saturating_sub(1)).rev() {
            strides[d] = strides[d + 1] * shape[d + 1];
        }
        let len = shape.iter().product();
        Ok(Self {
            shape,
            kinds,
            strides,
            len,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn kinds(&self) -> &[DimKind] {
        &self.kinds
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn check(&self, i: usize) -> Result<()> {
        if i < self.len {
            Ok(())
        } else {
            Err(Error::ConfigOutOfRange { index: i, len: self.len })
        }
    }

    pub fn multi_index(&self, i: usize) -> Result<Vec<usize>> {
        self.check(i)?;
        Ok(self.strides.iter().zip(&self.shape).map(|(s, n)| (i / s) % n).collect())
    }

    pub fn flat_index(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.shape.len() || levels.iter().zip(&self.shape).any(|(l, n)| l >= n) {
            return Err(Error::InvalidArgument(format!("level tuple {levels:?} outside grid {:?}", self.shape)));
        }
        Ok(levels.iter().zip(&self.strides).map(|(l, s)| l * s).sum())
    }

    /// Base-graph neighbors (distance exactly one).
    fn for_each_neighbor(&self, i: usize, mut f: impl FnMut(usize)) {
        for d in 0..self.shape.len() {
            let (n, s) = (self.shape[d], self.strides[d]);
            let l = (i / s) % n;
            match self.kinds[d] {
                DimKind::Ordinal => {
                    if l > 0 {
                        f(i - s);
                    }
                    if l + 1 < n {
                        f(i + s);
                    }
                }
                DimKind::Categorical => {
                    for m in (0..n).filter(|&m| m != l) {
                        f(i - l * s + m * s);
                    }
                }
            }
        }
    }
}

/// Sum over dimensions of `|Δlevel|` (ordinal) or `[levels differ]` (categorical).
pub fn lattice_distance(lat: &Lattice, i: usize, j: usize) -> Result<usize> {
    let (a, b) = (lat.multi_index(i)?, lat.multi_index(j)?);
    Ok(a.iter()
        .zip(&b)
        .zip(&lat.kinds)
        .map(|((x, y), kind)| match kind {
            DimKind::Ordinal => x.abs_diff(*y),
            DimKind::Categorical => usize::from(x != y),
        })
        .sum())
}

/// Closed ball `{j : distance(i, j) <= k}`, ascending.
///
/// Found by breadth-first search on the base graph, whose shortest-path
/// metric equals the lattice distance.
pub fn neighborhood(lat: &Lattice, i: usize, k: usize) -> Result<Vec<usize>> {
    lat.check(i)?;
    let mut depth = vec![usize::MAX; lat.len()];
    depth[i] = 0;
    let mut queue = VecDeque::from([i]);
    let mut out = vec![i];
    while let Some(u) = queue.pop_front() {
        if depth[u] == k {
            continue;
        }
        let next = depth[u] + 1;
        lat.for_each_neighbor(u, |v| {
            if depth[v] == usize::MAX {
                depth[v] = next;
                out.push(v);
                queue.push_back(v);
            }
        });
    }
    out.sort_unstable();
    Ok(out)
}

/// Every node's `k`-neighborhood, precomputed for repeated smoothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborhoodTable {
    pub k: usize,
    pub sets: Vec<Vec<usize>>,
}

impl NeighborhoodTable {
    pub fn new(lat: &Lattice, k: usize) -> Self {
        let sets = (0..lat.len())
            .map(|i| neighborhood(lat, i, k).expect("index in range"))
            .collect();
        Self { k, sets }
    }

    /// Mean of the finite values over each neighborhood, `+∞` if there are none.
    pub fn smooth(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.sets.len() {
            return Err(Error::Dimension {
                what: "validation errors",
                expected: self.sets.len(),
                got: v.len(),
            });
        }
        if self.k == 0 {
            return Ok(v.to_vec());
        }
        Ok(self
            .sets
            .iter()
            .map(|set| {
                let mut finite = set.iter().map(|&j| v[j]).filter(|x| x.is_finite());
                let Some(first) = finite.next() else {
                    return f64::INFINITY;
                };
                // deviations from the first value keep constant neighborhoods exact
                let (dev, n) = finite.fold((0.0, 1usize), |(s, n), x| (s + (x - first), n + 1));
                first + dev / n as f64
            })
            .collect())
    }
}

/// Smoothed landscape `Ṽ` for neighborhood size `k`; `k = 0` returns `V`.
pub fn smooth(lat: &Lattice, v: &[f64], k: usize) -> Result<Vec<f64>> {
    NeighborhoodTable::new(lat, k).smooth(v)
}

/// Lowest index attaining the minimum finite value.
pub fn argmin_finite(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &x) in v.iter().enumerate() {
        if x.is_finite() && best.map_or(true, |b| x < v[b]) {
            best = Some(i);
        }
    }
    best
}

/// `argmin Ṽ` with ties broken to the lowest index; `k = 0` is raw-argmin selection.
pub fn select(lat: &Lattice, v: &[f64], k: usize) -> Result<usize> {
    argmin_finite(&smooth(lat, v, k)?).ok_or(Error::NoValidConfig)
}

/// Raw and smoothed validation errors for one neighborhood size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorLandscape {
    pub k: usize,
    pub v: Vec<f64>,
    pub smoothed: Vec<f64>,
}

impl ErrorLandscape {
    pub fn new(lat: &Lattice, v: Vec<f64>, k: usize) -> Result<Self> {
        let smoothed = smooth(lat, &v, k)?;
        Ok(Self { k, v, smoothed })
    }

    pub fn selected(&self) -> Result<usize> {
        argmin_finite(&self.smoothed).ok_or(Error::NoValidConfig)
    }
}

/// Fine-tuning field a grid dimension varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    Lr,
    Epochs,
    Selector,
    LossKind,
    BiasCorrect,
    VarCorrect,
}

impl Param {
    pub fn name(self) -> &'static str {
        match self {
            Param::Lr => "lr",
            Param::Epochs => "epochs",
            Param::Selector => "selector",
            Param::LossKind => "loss_kind",
            Param::BiasCorrect => "bias_correct",
            Param::VarCorrect => "var_correct",
        }
    }
}

/// Levels of one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Levels {
    Ordinal(Vec<f64>),
    Categorical(Vec<String>),
}

impl Levels {
    pub fn len(&self) -> usize {
        match self {
            Levels::Ordinal(v) => v.len(),
            Levels::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> DimKind {
        match self {
            Levels::Ordinal(_) => DimKind::Ordinal,
            Levels::Categorical(_) => DimKind::Categorical,
        }
    }

    pub fn label(&self, l: usize) -> String {
        match self {
            Levels::Ordinal(v) => format!("{}", v[l]),
            Levels::Categorical(v) => v[l].clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub param: Param,
    pub levels: Levels,
}

fn apply_level(cfg: &mut FineTuneConfig, dim: &Dimension, l: usize) -> Result<()> {
    let bad = |what: &str| Error::InvalidArgument(format!("invalid {} level {what:?}", dim.param.name()));
    match (&dim.levels, dim.param) {
        (Levels::Ordinal(v), Param::Lr) => cfg.lr = v[l],
        (Levels::Ordinal(v), Param::Epochs) => {
            let e = v[l];
            if !(e >= 0.0 && libm::floor(e) == e && e < 1e9) {
                return Err(bad(&format!("{e}")));
            }
            cfg.epochs = e as usize;
        }
        (Levels::Ordinal(v), _) => return Err(bad(&format!("{}", v[l]))),
        (Levels::Categorical(v), p) => {
            let s = v[l].as_str();
            match p {
                Param::Lr => cfg.lr = s.parse().map_err(|_| bad(s))?,
                Param::Epochs => cfg.epochs = s.parse().map_err(|_| bad(s))?,
                Param::Selector => cfg.selector = s.parse::<Selector>()?,
                Param::LossKind => cfg.loss_kind = s.parse::<LossKind>()?,
                Param::BiasCorrect => cfg.bias_correct = s.parse().map_err(|_| bad(s))?,
                Param::VarCorrect => cfg.var_correct = s.parse().map_err(|_| bad(s))?,
            }
        }
    }
    if !(cfg.lr.is_finite() && cfg.lr >= 0.0) {
        return Err(bad(&format!("{}", cfg.lr)));
    }
    Ok(())
}

/// Cartesian grid of fine-tuning configurations over a base config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct HyperParamGrid {
    base: FineTuneConfig,
    dims: Vec<Dimension>,
    #[serde(skip)]
    lattice: Lattice,
}

/// Serialized form of [`HyperParamGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub base: FineTuneConfig,
    pub dims: Vec<Dimension>,
}

impl TryFrom<GridSpec> for HyperParamGrid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        HyperParamGrid::new(spec.base, spec.dims)
    }
}

impl From<HyperParamGrid> for GridSpec {
    fn from(g: HyperParamGrid) -> Self {
        GridSpec {
            base: g.base,
            dims: g.dims,
        }
    }
}

impl HyperParamGrid {
    /// Validates that every configuration materializes.
    pub fn new(base: FineTuneConfig, dims: Vec<Dimension>) -> Result<Self> {
        for (a, d) in dims.iter().enumerate() {
            if d.levels.is_empty() {
                return Err(Error::InvalidArgument(format!("dimension {} has no levels", d.param.name())));
            }
            if dims[..a].iter().any(|e| e.param == d.param) {
                return Err(Error::InvalidArgument(format!("dimension {} repeated", d.param.name())));
            }
            for l in 0..d.levels.len() {
                apply_level(&mut base.clone(), d, l)?;
            }
        }
        let lattice = Lattice::new(
            dims.iter().map(|d| d.levels.len()).collect(),
            dims.iter().map(|d| d.levels.kind()).collect(),
        )?;
        Ok(Self { base, dims, lattice })
    }

    /// Three learning rates × three epoch counts × three trainable layers.
    pub fn desk(base: FineTuneConfig, lrs: [f64; 3], epochs: [usize; 3]) -> Self {
        let dims = vec![
            Dimension {
                param: Param::Lr,
                levels: Levels::Ordinal(lrs.to_vec()),
            },
            Dimension {
                param: Param::Epochs,
                levels: Levels::Ordinal(epochs.iter().map(|&e| e as f64).collect()),
            },
            Dimension {
                param: Param::Selector,
                levels: Levels::Categorical(
                    [Selector::ScalarHeads, Selector::DecoderBlockLast, Selector::EncoderBlockLast]
                        .iter()
                        .map(|s| s.name().to_string())
                        .collect(),
                ),
            },
        ];
        Self::new(base, dims).expect("desk grid is valid")
    }

    pub fn base(&self) -> &FineTuneConfig {
        &self.base
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn config(&self, i: usize) -> Result<FineTuneConfig> {
        let idx = self.lattice.multi_index(i)?;
        let mut cfg = self.base;
        for (d, &l) in self.dims.iter().zip(&idx) {
            apply_level(&mut cfg, d, l)?;
        }
        Ok(cfg)
    }

    pub fn configs(&self) -> Vec<FineTuneConfig> {
        (0..self.len()).map(|i| self.config(i).expect("validated grid")).collect()
    }

    /// Level labels of configuration `i`, one per dimension.
    pub fn labels(&self, i: usize) -> Result<Vec<String>> {
        let idx = self.lattice.multi_index(i)?;
        Ok(self.dims.iter().zip(&idx).map(|(d, &l)| d.levels.label(l)).collect())
    }

    /// Same grid with a different base modality.
    pub fn with_modality(&self, modality: crate::adapt::Modality) -> Self {
        let mut g = self.clone();
        g.base.modality = modality;
        g
    }
}
