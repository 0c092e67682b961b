use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::geometry::{facet_bounds, neighbor, rect_bounds, FacetRef, Neighbor, RectIndex};
use crate::model::BiochemicalSystem;

/// The rectangular abstraction: an unweighted transition system over
/// rectangles, explored from the initial rectangles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rats {
    pub reachable: BTreeSet<RectIndex>,
    /// Non-self transitions out of each reachable rectangle.
    pub transitions: BTreeMap<RectIndex, Vec<RectIndex>>,
    pub self_loops: BTreeSet<RectIndex>,
}

/// A multi-affine field restricted to a facet is determined by its values at
/// the facet vertices, so flow can cross a facet outward iff it does so at
/// one of them.
fn crosses(system: &BiochemicalSystem, facet: &FacetRef) -> bool {
    let b = facet_bounds(system.partition(), facet);
    b.vertices()
        .iter()
        .any(|v| facet.side.sign() * system.field().component(facet.axis, v) > 0.0)
}

fn has_self_loop(system: &BiochemicalSystem, rect: &RectIndex) -> bool {
    let b = rect_bounds(system.partition(), rect);
    let field = system.field();
    b.vertices().iter().any(|v| {
        let f = field.eval(v);
        if f.iter().all(|&c| c == 0.0) {
            return true;
        }
        // Every axis binds at a vertex; the flow must point strictly inward on all.
        (0..v.len()).all(|i| if v[i] == b.lo[i] { f[i] > 0.0 } else { f[i] < 0.0 })
    })
}

pub fn build_rats(system: &BiochemicalSystem) -> Rats {
    let partition = system.partition();
    let mut reachable: BTreeSet<RectIndex> = system.initial().iter().cloned().collect();
    let mut queue: VecDeque<RectIndex> = system.initial().iter().cloned().collect();
    let mut transitions = BTreeMap::new();
    let mut self_loops = BTreeSet::new();
    while let Some(rect) = queue.pop_front() {
        if has_self_loop(system, &rect) {
            self_loops.insert(rect.clone());
        }
        let mut out = Vec::new();
        for facet in FacetRef::all_of(&rect) {
            let Neighbor::Rect(nb) = neighbor(partition, &facet) else {
                continue;
            };
            if crosses(system, &facet) {
                if reachable.insert(nb.clone()) {
                    queue.push_back(nb.clone());
                }
                out.push(nb);
            }
        }
        transitions.insert(rect, out);
    }
    Rats {
        reachable,
        transitions,
        self_loops,
    }
}
