//! The quantitative discrete approximation automaton: states are rectangles
//! paired with the set through which trajectories entered them, transitions
//! carry Monte Carlo estimates of the fraction of trajectories taking them.

mod analysis;
mod build;
pub mod io;
mod rats;
mod successors;

pub use analysis::{memory_stats, variable_bounds, MarkovChain, MemoryStats};
pub use build::build_reachable;
pub use rats::{build_rats, Rats};
pub use successors::{backward_refine, get_successors, Successor, Successors};

use std::collections::BTreeMap;
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{FacetRef, RectIndex, Side};
use crate::model::Partition;
use crate::simulate::{IntegratorConfig, SimError};

#[derive(Debug, Error)]
pub enum QdaaError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("state {state} does not fit the system or kappa: {reason}")]
    Mismatch { state: String, reason: String },
    #[error("every simulation from state {state} diverged: {source}")]
    AllDiverged { state: String, source: SimError },
    #[error("rectangle {0} is not part of the partition")]
    UnknownRect(RectIndex),
    #[error("automaton invariant violated: {0}")]
    Invariant(String),
}

/// Where trajectories entered a rectangle.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EntrySet {
    /// Steady-state memory: trajectories that never left.
    Empty,
    /// Initial states.
    WholeRectangle,
    /// A non-empty set of κ-tiles of one facet, indexed like
    /// [`crate::geometry::Tiling`] linear indices.
    FacetTiles {
        axis: usize,
        side: Side,
        tiles: FixedBitSet,
    },
}

impl EntrySet {
    pub fn facet_tiles(axis: usize, side: Side, tiles: FixedBitSet) -> Self {
        debug_assert!(tiles.count_ones(..) > 0);
        EntrySet::FacetTiles { axis, side, tiles }
    }

    pub fn facet(&self, rect: &RectIndex) -> Option<FacetRef> {
        match self {
            EntrySet::FacetTiles { axis, side, .. } => Some(FacetRef::new(rect.clone(), *axis, *side)),
            _ => None,
        }
    }
}

/// `⟨H, E⟩`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct QdaaState {
    pub rect: RectIndex,
    pub entry: EntrySet,
}

impl QdaaState {
    pub fn initial(rect: RectIndex) -> Self {
        Self {
            rect,
            entry: EntrySet::WholeRectangle,
        }
    }

    pub fn steady(rect: RectIndex) -> Self {
        Self {
            rect,
            entry: EntrySet::Empty,
        }
    }
}

impl fmt::Display for QdaaState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.entry {
            EntrySet::Empty => write!(f, "{} | ∅", self.rect),
            EntrySet::WholeRectangle => write!(f, "{} | H", self.rect),
            EntrySet::FacetTiles { axis, side, tiles } => {
                let s = if *side == Side::Lower { "lower" } else { "upper" };
                write!(f, "{} | {s}{axis} + {} tiles", self.rect, tiles.count_ones(..))
            }
        }
    }
}

/// A node of the automaton graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Node {
    State(QdaaState),
    /// Absorbs trajectories leaving the phase space.
    Sink,
}

impl Node {
    pub fn rect(&self) -> Option<&RectIndex> {
        match self {
            Node::State(s) => Some(&s.rect),
            Node::Sink => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub target: usize,
    pub weight: f64,
}

/// How forward simulations are spread over an entry set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// `M` points in every entry tile.
    #[default]
    PerTile,
    /// `M` points in the whole entry set, tiles chosen uniformly.
    PerState,
}

impl Sampling {
    pub fn name(self) -> &'static str {
        match self {
            Sampling::PerTile => "per-tile",
            Sampling::PerState => "per-state",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "per-tile" => Some(Sampling::PerTile),
            "per-state" => Some(Sampling::PerState),
            _ => None,
        }
    }
}

/// Parameters of one construction run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub kappa: usize,
    /// Simulations per tile, or per state with [`Sampling::PerState`].
    pub sims: usize,
    pub sampling: Sampling,
    pub integrator: IntegratorConfig,
    pub seed: u64,
    pub backward_refine: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kappa: 4,
            sims: 50,
            sampling: Sampling::PerTile,
            integrator: IntegratorConfig::default(),
            seed: 0,
            backward_refine: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), QdaaError> {
        if self.kappa == 0 {
            return Err(QdaaError::Config("kappa must be at least 1".into()));
        }
        if self.sims == 0 {
            return Err(QdaaError::Config("sims must be at least 1".into()));
        }
        self.integrator.validate().map_err(QdaaError::Config)
    }
}

/// Counters collected while building.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Forward and backward trajectories integrated.
    pub simulations: u64,
    /// Facet samples rejected by the entering condition.
    pub discarded: u64,
    /// Facet tiles where no sample satisfied the entering condition.
    pub empty_tiles: u64,
    pub diverged: u64,
    /// Transitions removed because backward refinement emptied their tiles.
    pub dropped: u64,
    /// States with no usable sample, sent to their steady-state successor.
    pub empty_states: u64,
    /// States whose every exit was rejected by backward refinement, sent
    /// to their steady-state successor.
    pub unconfirmed: u64,
}

impl Diagnostics {
    pub fn absorb(&mut self, o: &Diagnostics) {
        self.simulations += o.simulations;
        self.discarded += o.discarded;
        self.empty_tiles += o.empty_tiles;
        self.diverged += o.diverged;
        self.dropped += o.dropped;
        self.empty_states += o.empty_states;
        self.unconfirmed += o.unconfirmed;
    }
}

/// What an automaton was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub model_name: String,
    pub model_hash: String,
    pub var_names: Vec<String>,
    pub partition: Partition,
    pub config: RunConfig,
}

/// A built automaton. Node ids index `nodes` and `edges`.
#[derive(Debug, Clone, PartialEq)]
pub struct Qdaa {
    pub nodes: Vec<Node>,
    pub edges: Vec<Vec<Edge>>,
    pub initial: Vec<usize>,
    pub sink: Option<usize>,
    pub provenance: Provenance,
    pub diagnostics: Diagnostics,
}

impl Qdaa {
    pub fn transition_count(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    pub fn states(&self) -> impl Iterator<Item = (usize, &QdaaState)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            Node::State(s) => Some((i, s)),
            Node::Sink => None,
        })
    }

    pub fn chain(&self) -> MarkovChain {
        MarkovChain {
            edges: self.edges.clone(),
            initial: self.initial.clone(),
            rects: self.nodes.iter().map(|n| n.rect().cloned()).collect(),
        }
    }

    pub fn first_passage_intensity(&self, rect: &RectIndex) -> Result<f64, QdaaError> {
        if !self.provenance.partition.contains_rect(rect) {
            return Err(QdaaError::UnknownRect(rect.clone()));
        }
        Ok(self.chain().first_passage_intensity(rect))
    }

    /// Largest deviation of an outgoing weight sum from one.
    pub fn max_row_defect(&self) -> f64 {
        self.edges
            .iter()
            .map(|row| (row.iter().map(|e| e.weight).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Checks row sums, weight ranges, initial entries and the per-rectangle
    /// bound `2 + 2n(2^(κ^(n-1)) - 1)` on the number of states.
    pub fn check_invariants(&self) -> Result<(), QdaaError> {
        for (i, row) in self.edges.iter().enumerate() {
            if row.iter().any(|e| !(0.0..=1.0).contains(&e.weight)) {
                return Err(QdaaError::Invariant(format!("node {i} has a weight outside [0, 1]")));
            }
            let sum: f64 = row.iter().map(|e| e.weight).sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(QdaaError::Invariant(format!(
                    "outgoing weights of node {i} sum to {sum}"
                )));
            }
        }
        for &i in &self.initial {
            if !matches!(&self.nodes[i], Node::State(s) if s.entry == EntrySet::WholeRectangle) {
                return Err(QdaaError::Invariant(format!("initial node {i} is not ⟨H, H⟩")));
            }
        }
        let n = self.provenance.partition.dim();
        let bound = state_bound_per_rect(n, self.provenance.config.kappa);
        let mut per_rect: BTreeMap<&RectIndex, usize> = BTreeMap::new();
        for (_, s) in self.states() {
            *per_rect.entry(&s.rect).or_default() += 1;
        }
        if let Some((r, c)) = per_rect.iter().find(|(_, &c)| c as f64 > bound) {
            return Err(QdaaError::Invariant(format!(
                "rectangle {r} has {c} states, more than the bound {bound}"
            )));
        }
        Ok(())
    }
}

/// `2 + 2n(2^(κ^(n-1)) - 1)`, the number of entry sets of one rectangle.
pub fn state_bound_per_rect(n: usize, kappa: usize) -> f64 {
    let facet_tiles = (kappa as f64).powi(n as i32 - 1);
    2.0 + 2.0 * n as f64 * (2f64.powf(facet_tiles) - 1.0)
}

/// Every entry set of an `n`-dimensional rectangle at resolution `kappa`:
/// empty, whole, and each non-empty tile subset of each facet. Only
/// practical for tiny `κ^(n-1)`.
pub fn entry_sets(n: usize, kappa: usize) -> impl Iterator<Item = EntrySet> {
    let tiles = kappa.pow(n as u32 - 1);
    assert!(tiles < 32, "too many tile subsets to enumerate");
    let facets = (0..n).flat_map(|axis| [Side::Lower, Side::Upper].map(move |s| (axis, s)));
    let per_facet = facets.flat_map(move |(axis, side)| {
        (1u32..(1 << tiles)).map(move |mask| {
            let mut bits = FixedBitSet::with_capacity(tiles);
            for t in 0..tiles {
                if mask & (1 << t) != 0 {
                    bits.insert(t);
                }
            }
            EntrySet::facet_tiles(axis, side, bits)
        })
    });
    [EntrySet::Empty, EntrySet::WholeRectangle]
        .into_iter()
        .chain(per_facet)
}
