//! Rectangles of the threshold grid, their facets and κ-tiles.

use std::fmt;
use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::Partition;

/// Per-axis cell indices of a rectangle, `idx[i] < |T_i| - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RectIndex(Vec<usize>);

impl RectIndex {
    pub fn new(idx: Vec<usize>) -> Self {
        Self(idx)
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }
}

impl Deref for RectIndex {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for RectIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    pub fn opposite(self) -> Self {
        match self {
            Side::Lower => Side::Upper,
            Side::Upper => Side::Lower,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Side::Lower => -1.0,
            Side::Upper => 1.0,
        }
    }
}

/// A facet `(rect, axis, side)`: the part of `rect` where `x_axis` is pinned
/// to the lower or upper threshold.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FacetRef {
    pub rect: RectIndex,
    pub axis: usize,
    pub side: Side,
}

impl FacetRef {
    pub fn new(rect: RectIndex, axis: usize, side: Side) -> Self {
        Self { rect, axis, side }
    }

    /// Threshold value of the facet's hyper-plane.
    pub fn plane(&self, partition: &Partition) -> f64 {
        let k = self.rect[self.axis];
        let t = partition.thresholds(self.axis);
        match self.side {
            Side::Lower => t[k],
            Side::Upper => t[k + 1],
        }
    }

    pub fn normal(&self) -> AxisNormal {
        outward_normal(self)
    }

    /// All `2n` facets of `rect`, ordered by axis then lower before upper.
    pub fn all_of(rect: &RectIndex) -> impl Iterator<Item = FacetRef> + '_ {
        (0..rect.len()).flat_map(move |axis| {
            [Side::Lower, Side::Upper]
                .into_iter()
                .map(move |side| FacetRef::new(rect.clone(), axis, side))
        })
    }
}

impl fmt::Display for FacetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.side {
            Side::Lower => "lower",
            Side::Upper => "upper",
        };
        write!(f, "{}:{}{}", self.rect, s, self.axis)
    }
}

/// Result of crossing a facet.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Neighbor {
    Rect(RectIndex),
    /// The facet lies on the outer boundary of the phase space.
    Boundary,
}

/// The rectangle sharing `facet` with `facet.rect`.
pub fn neighbor(partition: &Partition, facet: &FacetRef) -> Neighbor {
    let k = facet.rect[facet.axis];
    let next = match facet.side {
        Side::Lower if k == 0 => return Neighbor::Boundary,
        Side::Lower => k - 1,
        Side::Upper if k + 1 >= partition.cells(facet.axis) => return Neighbor::Boundary,
        Side::Upper => k + 1,
    };
    let mut idx = facet.rect.to_vec();
    idx[facet.axis] = next;
    Neighbor::Rect(RectIndex::new(idx))
}

/// The same geometric facet, as a facet of the neighbouring rectangle.
pub fn facet_seen_from(facet: &FacetRef, neighbor: RectIndex) -> FacetRef {
    FacetRef::new(neighbor, facet.axis, facet.side.opposite())
}

/// `±e_axis`, pointing out of the facet's rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisNormal {
    pub axis: usize,
    pub sign: f64,
}

impl AxisNormal {
    #[inline]
    pub fn dot(&self, v: &[f64]) -> f64 {
        self.sign * v[self.axis]
    }

    pub fn to_vec(&self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        v[self.axis] = self.sign;
        v
    }
}

pub fn outward_normal(facet: &FacetRef) -> AxisNormal {
    AxisNormal {
        axis: facet.axis,
        sign: facet.side.sign(),
    }
}

/// Axis-aligned closed box, possibly degenerate along some axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn side(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    /// Volume of the projection that drops `axis`.
    pub fn volume_without(&self, axis: usize) -> f64 {
        (0..self.dim())
            .filter(|&i| i != axis)
            .map(|i| self.side(i))
            .product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| self.lo[i] <= v && v <= self.hi[i])
    }

    pub fn center(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|i| 0.5 * (self.lo[i] + self.hi[i]))
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.side(i).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn intersection_volume(&self, other: &Bounds) -> f64 {
        (0..self.dim())
            .map(|i| (self.hi[i].min(other.hi[i]) - self.lo[i].max(other.lo[i])).max(0.0))
            .product()
    }

    /// All `2^n` corners; axes with zero width contribute one value.
    pub fn vertices(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.dim())];
        for i in 0..self.dim() {
            let choices: &[f64] = if self.lo[i] == self.hi[i] {
                &self.lo[i..=i]
            } else {
                &[self.lo[i], self.hi[i]]
            };
            out = out
                .into_iter()
                .flat_map(|p| {
                    choices.iter().map(move |&c| {
                        let mut q = p.clone();
                        q.push(c);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

/// `[a_i, b_i]` per axis.
pub fn rect_bounds(partition: &Partition, rect: &RectIndex) -> Bounds {
    let (lo, hi) = rect
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let t = partition.thresholds(i);
            (t[k], t[k + 1])
        })
        .unzip();
    Bounds::new(lo, hi)
}

/// Bounds of a facet, degenerate along its axis.
pub fn facet_bounds(partition: &Partition, facet: &FacetRef) -> Bounds {
    let mut b = rect_bounds(partition, &facet.rect);
    let c = facet.plane(partition);
    b.lo[facet.axis] = c;
    b.hi[facet.axis] = c;
    b
}

/// Uniform κ-subdivision of a rectangle, or of a facet along its free axes.
#[derive(Debug, Clone)]
pub struct Tiling {
    bounds: Bounds,
    fixed_axis: Option<usize>,
    kappa: usize,
    free: Vec<usize>,
}

impl Tiling {
    pub fn of_box(bounds: Bounds, kappa: usize) -> Self {
        assert!(kappa >= 1, "kappa must be positive");
        let free = (0..bounds.dim()).collect();
        Self {
            bounds,
            fixed_axis: None,
            kappa,
            free,
        }
    }

    /// `bounds` must be degenerate along `axis`.
    pub fn of_facet_box(bounds: Bounds, axis: usize, kappa: usize) -> Self {
        assert!(kappa >= 1, "kappa must be positive");
        let free = (0..bounds.dim()).filter(|&i| i != axis).collect();
        Self {
            bounds,
            fixed_axis: Some(axis),
            kappa,
            free,
        }
    }

    pub fn for_parent(partition: &Partition, parent: &TileParent, kappa: usize) -> Self {
        match parent {
            TileParent::Rect(r) => Self::of_box(rect_bounds(partition, r), kappa),
            TileParent::Facet(f) => Self::of_facet_box(facet_bounds(partition, f), f.axis, kappa),
        }
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn parent_bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Dimension of a tile multi-index.
    pub fn tile_dim(&self) -> usize {
        self.free.len()
    }

    pub fn count(&self) -> usize {
        self.kappa.pow(self.free.len() as u32)
    }

    /// Mixed-radix decoding, first free axis most significant.
    pub fn multi_index(&self, mut linear: usize) -> Vec<usize> {
        let mut m = vec![0; self.free.len()];
        for slot in m.iter_mut().rev() {
            *slot = linear % self.kappa;
            linear /= self.kappa;
        }
        m
    }

    pub fn linear(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &k| acc * self.kappa + k)
    }

    pub fn tile_bounds(&self, multi: &[usize]) -> Bounds {
        let mut b = self.bounds.clone();
        let kf = self.kappa as f64;
        for (&axis, &k) in self.free.iter().zip(multi) {
            let (a, w) = (self.bounds.lo[axis], self.bounds.side(axis));
            b.lo[axis] = a + (k as f64 / kf) * w;
            b.hi[axis] = a + ((k + 1) as f64 / kf) * w;
        }
        b
    }

    /// Measure of one tile in the parent's own dimension.
    pub fn tile_measure(&self, multi: &[usize]) -> f64 {
        let b = self.tile_bounds(multi);
        self.free.iter().map(|&i| b.side(i)).product()
    }

    pub fn parent_measure(&self) -> f64 {
        self.free.iter().map(|&i| self.bounds.side(i)).product()
    }

    /// Linear index of the tile containing `x` (clamped onto the grid).
    pub fn locate(&self, x: &[f64]) -> usize {
        let kf = self.kappa as f64;
        self.free.iter().fold(0, |acc, &axis| {
            let (a, w) = (self.bounds.lo[axis], self.bounds.side(axis));
            let r = ((x[axis] - a) / w * kf).floor();
            let k = if r.is_nan() || r < 0.0 {
                0
            } else {
                (r as usize).min(self.kappa - 1)
            };
            acc * self.kappa + k
        })
    }

    /// Uniform point in a tile; a facet tile keeps the plane coordinate exactly.
    pub fn sample<R: Rng + ?Sized>(&self, linear: usize, rng: &mut R) -> Vec<f64> {
        let b = self.tile_bounds(&self.multi_index(linear));
        let mut x = b.lo.clone();
        for &axis in &self.free {
            x[axis] = b.lo[axis] + rng.gen::<f64>() * b.side(axis);
        }
        if let Some(axis) = self.fixed_axis {
            x[axis] = self.bounds.lo[axis];
        }
        x
    }

    /// Tiles whose covered fraction (as reported by `fraction`) is at least 1/2.
    pub fn approximate_by_fraction(&self, fraction: impl Fn(&Bounds) -> f64) -> Vec<usize> {
        (0..self.count())
            .filter(|&l| fraction(&self.tile_bounds(&self.multi_index(l))) >= 0.5)
            .collect()
    }

    /// Fraction of an `s`-per-free-axis cell-centred subgrid of `tile` where `indicator` holds.
    pub fn subgrid_fraction(
        &self,
        tile: &Bounds,
        s: usize,
        indicator: &impl Fn(&[f64]) -> bool,
    ) -> f64 {
        let d = self.free.len();
        let total = s.pow(d as u32);
        let mut x = tile.lo.clone();
        let mut hits = 0usize;
        for mut lin in 0..total {
            for &axis in self.free.iter().rev() {
                let c = lin % s;
                lin /= s;
                x[axis] = tile.lo[axis] + (c as f64 + 0.5) / s as f64 * tile.side(axis);
            }
            if indicator(&x) {
                hits += 1;
            }
        }
        hits as f64 / total as f64
    }

    /// Sum of tile measures of the given tiles.
    pub fn measure(&self, tiles: impl IntoIterator<Item = usize>) -> f64 {
        tiles
            .into_iter()
            .map(|l| self.tile_measure(&self.multi_index(l)))
            .sum()
    }
}

/// What a tile subdivides.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TileParent {
    Facet(FacetRef),
    Rect(RectIndex),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TileRef {
    pub parent: TileParent,
    pub multi_index: Vec<usize>,
}

pub fn tiles_of(partition: &Partition, parent: &TileParent, kappa: usize) -> Vec<TileRef> {
    let tiling = Tiling::for_parent(partition, parent, kappa);
    (0..tiling.count())
        .map(|l| TileRef {
            parent: parent.clone(),
            multi_index: tiling.multi_index(l),
        })
        .collect()
}

pub fn tile_bounds(partition: &Partition, tile: &TileRef, kappa: usize) -> Bounds {
    Tiling::for_parent(partition, &tile.parent, kappa).tile_bounds(&tile.multi_index)
}

pub fn sample_point_in_tile<R: Rng + ?Sized>(
    partition: &Partition,
    tile: &TileRef,
    kappa: usize,
    rng: &mut R,
) -> Vec<f64> {
    let tiling = Tiling::for_parent(partition, &tile.parent, kappa);
    tiling.sample(tiling.linear(&tile.multi_index), rng)
}

/// κ-tiles of `parent` at least half covered by `{x | indicator(x)}`, the
/// covered fraction being estimated on an `s`-per-axis subgrid of each tile.
pub fn tiles_approximating(
    partition: &Partition,
    indicator: impl Fn(&[f64]) -> bool,
    parent: &TileParent,
    kappa: usize,
    subgrid: usize,
) -> Vec<TileRef> {
    let tiling = Tiling::for_parent(partition, parent, kappa);
    tiling
        .approximate_by_fraction(|b| tiling.subgrid_fraction(b, subgrid.max(1), &indicator))
        .into_iter()
        .map(|l| TileRef {
            parent: parent.clone(),
            multi_index: tiling.multi_index(l),
        })
        .collect()
}

/// Total measure of `tiles`; facet tiles use their `(n-1)`-dimensional volume.
pub fn kappa_grid_measure(partition: &Partition, tiles: &[TileRef], kappa: usize) -> f64 {
    tiles.iter().map(|t| {
        let tiling = Tiling::for_parent(partition, &t.parent, kappa);
        tiling.tile_measure(&t.multi_index)
    }).sum()
}
