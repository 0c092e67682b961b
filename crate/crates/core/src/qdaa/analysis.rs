use std::collections::{BTreeMap, BTreeSet};

use super::{Edge, Qdaa};
use crate::geometry::{rect_bounds, RectIndex};

/// A weighted chain with rectangle labels; the sink has none. Enough to
/// answer first-passage questions, also for chains read back from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    pub edges: Vec<Vec<Edge>>,
    pub initial: Vec<usize>,
    pub rects: Vec<Option<RectIndex>>,
}

impl MarkovChain {
    /// Probability of ever visiting a state on `rect`, maximised over the
    /// initial states (so every initial rectangle scores exactly 1).
    pub fn first_passage_intensity(&self, rect: &RectIndex) -> f64 {
        let n = self.edges.len();
        let target: Vec<bool> = self.rects.iter().map(|r| r.as_ref() == Some(rect)).collect();
        if !target.iter().any(|&t| t) {
            return 0.0;
        }
        // Only states that can reach the target need values.
        let mut preds = vec![Vec::new(); n];
        for (s, row) in self.edges.iter().enumerate() {
            for e in row {
                if e.weight > 0.0 {
                    preds[e.target].push(s);
                }
            }
        }
        let mut live = target.clone();
        let mut stack: Vec<usize> = (0..n).filter(|&i| target[i]).collect();
        let mut order = Vec::new();
        while let Some(t) = stack.pop() {
            for &p in &preds[t] {
                if !live[p] {
                    live[p] = true;
                    order.push(p);
                    stack.push(p);
                }
            }
        }
        let mut h: Vec<f64> = target.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        // Gauss-Seidel sweeps in discovery order (nearest the target first).
        for _ in 0..1_000_000 {
            let mut delta = 0.0f64;
            for &s in &order {
                let (mut stay, mut rest) = (0.0, 0.0);
                for e in &self.edges[s] {
                    if e.target == s {
                        stay += e.weight;
                    } else {
                        rest += e.weight * h[e.target];
                    }
                }
                let v = if stay < 1.0 { (rest / (1.0 - stay)).min(1.0) } else { 0.0 };
                delta = delta.max((v - h[s]).abs());
                h[s] = v;
            }
            if delta < 1e-13 {
                break;
            }
        }
        self.initial.iter().map(|&i| h[i]).fold(0.0, f64::max)
    }

    /// Intensity of every labelled rectangle.
    pub fn intensities(&self) -> BTreeMap<RectIndex, f64> {
        let rects: BTreeSet<&RectIndex> = self.rects.iter().flatten().collect();
        rects
            .into_iter()
            .map(|r| (r.clone(), self.first_passage_intensity(r)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryStats {
    /// Distinct rectangles among reachable states.
    pub rects: usize,
    /// Mean number of states per such rectangle.
    pub rho: f64,
}

pub fn memory_stats(qdaa: &Qdaa) -> MemoryStats {
    let mut per: BTreeMap<&RectIndex, usize> = BTreeMap::new();
    for (_, s) in qdaa.states() {
        *per.entry(&s.rect).or_default() += 1;
    }
    let rects = per.len();
    let total: usize = per.values().sum();
    MemoryStats {
        rects,
        rho: if rects == 0 { 0.0 } else { total as f64 / rects as f64 },
    }
}

impl Qdaa {
    pub fn reachable_rects(&self) -> BTreeSet<RectIndex> {
        self.states().map(|(_, s)| s.rect.clone()).collect()
    }
}

/// Per-variable hull of the reachable rectangles.
pub fn variable_bounds(qdaa: &Qdaa) -> Vec<(f64, f64)> {
    let p = &qdaa.provenance.partition;
    let mut out = vec![(f64::INFINITY, f64::NEG_INFINITY); p.dim()];
    for rect in qdaa.reachable_rects() {
        let b = rect_bounds(p, &rect);
        for (i, o) in out.iter_mut().enumerate() {
            o.0 = o.0.min(b.lo[i]);
            o.1 = o.1.max(b.hi[i]);
        }
    }
    out
}
