use fixedbitset::FixedBitSet;
use rand::Rng;
use rayon::prelude::*;

use super::{Diagnostics, EntrySet, QdaaError, QdaaState, RunConfig, Sampling};
use crate::geometry::{
    facet_bounds, neighbor, rect_bounds, FacetRef, Neighbor, RectIndex, Side, TileParent, TileRef,
    Tiling,
};
use crate::model::{BiochemicalSystem, MultiAffineField};
use crate::rng::{stream, Phase};
use crate::simulate::{entering_condition, ExitOutcome, RectSimulator, SimError};

/// Target of a transition.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Successor {
    State(QdaaState),
    Sink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Successors {
    pub edges: Vec<(Successor, f64)>,
    pub diagnostics: Diagnostics,
}

/// Successors of `state` with Monte Carlo weights.
pub fn get_successors(
    state: &QdaaState,
    system: &BiochemicalSystem,
    cfg: &RunConfig,
) -> Result<Successors, QdaaError> {
    cfg.validate()?;
    Explorer::new(system, cfg).successors(state)
}

/// Whether the exit tile `tile` (on a facet of the source rectangle) is
/// reached mostly by trajectories that entered through the source entry set,
/// judged by simulating the reversed flow from it.
pub fn backward_refine(
    tile: &TileRef,
    source: &QdaaState,
    system: &BiochemicalSystem,
    cfg: &RunConfig,
) -> bool {
    let TileParent::Facet(facet) = &tile.parent else {
        return false;
    };
    let ex = Explorer::new(system, cfg);
    let tiling = Tiling::for_parent(system.partition(), &tile.parent, cfg.kappa);
    let sim = RectSimulator::new(&ex.negated, system.partition(), &source.rect, cfg.integrator);
    let mut diag = Diagnostics::default();
    ex.refine_tile(source, facet, &tiling, tiling.linear(&tile.multi_index), sim, &mut diag)
}

fn facet_code(axis: usize, side: Side) -> u64 {
    2 * axis as u64 + u64::from(side == Side::Upper)
}

#[derive(Default)]
struct TileTally {
    exits: Vec<(usize, Side, Vec<f64>)>,
    stayed: u64,
    diag: Diagnostics,
    first_error: Option<SimError>,
}

pub(crate) struct Explorer<'a> {
    system: &'a BiochemicalSystem,
    negated: MultiAffineField,
    cfg: &'a RunConfig,
}

impl<'a> Explorer<'a> {
    pub(crate) fn new(system: &'a BiochemicalSystem, cfg: &'a RunConfig) -> Self {
        Self {
            system,
            negated: system.field().negated(),
            cfg,
        }
    }

    fn check(&self, state: &QdaaState) -> Result<(), QdaaError> {
        let p = self.system.partition();
        let n = p.dim();
        let fail = |reason: String| QdaaError::Mismatch {
            state: state.to_string(),
            reason,
        };
        if state.rect.len() != n || !p.contains_rect(&state.rect) {
            return Err(fail("rectangle outside the partition".into()));
        }
        if let EntrySet::FacetTiles { axis, tiles, .. } = &state.entry {
            if *axis >= n {
                return Err(fail(format!("axis {axis} out of range")));
            }
            let want = self.cfg.kappa.pow(n as u32 - 1);
            if tiles.len() != want {
                return Err(fail(format!("{} tile slots, expected {want}", tiles.len())));
            }
            if tiles.count_ones(..) == 0 {
                return Err(fail("empty tile set".into()));
            }
        }
        Ok(())
    }

    fn stream_key(&self, phase: Phase, rect: &RectIndex, facet: u64, tile: usize) -> Vec<u64> {
        let mut words = Vec::with_capacity(rect.len() + 3);
        words.push(phase as u64);
        words.extend(rect.iter().map(|&k| k as u64));
        words.push(facet);
        words.push(tile as u64);
        words
    }

    pub(crate) fn successors(&self, state: &QdaaState) -> Result<Successors, QdaaError> {
        self.check(state)?;
        let partition = self.system.partition();
        let field = self.system.field();
        let rect = &state.rect;
        let m = self.cfg.sims;
        let budget = 10 * m;

        let (tiling, tiles, entry_facet) = match &state.entry {
            EntrySet::Empty => {
                return Ok(Successors {
                    edges: vec![(Successor::State(state.clone()), 1.0)],
                    diagnostics: Diagnostics::default(),
                })
            }
            EntrySet::WholeRectangle => {
                let t = Tiling::of_box(rect_bounds(partition, rect), self.cfg.kappa);
                let all: Vec<usize> = (0..t.count()).collect();
                (t, all, None)
            }
            EntrySet::FacetTiles { axis, side, tiles } => {
                let f = FacetRef::new(rect.clone(), *axis, *side);
                let t = Tiling::of_facet_box(facet_bounds(partition, &f), *axis, self.cfg.kappa);
                (t, tiles.ones().collect(), Some(f))
            }
        };
        let code = entry_facet.as_ref().map_or(u64::MAX, |f| facet_code(f.axis, f.side));
        let sim = RectSimulator::new(field, partition, rect, self.cfg.integrator);

        // Each job draws `m` points from its tiles: one job per tile when
        // stratified, a single job over the whole entry set otherwise.
        let jobs: Vec<(usize, &[usize])> = match self.cfg.sampling {
            Sampling::PerTile => tiles.iter().map(|t| (*t, std::slice::from_ref(t))).collect(),
            Sampling::PerState => vec![(usize::MAX, &tiles[..])],
        };
        let tallies: Vec<TileTally> = jobs
            .par_iter()
            .map_init(
                || sim.clone(),
                |sim, &(key, pick)| {
                    let mut rng = stream(self.cfg.seed, self.stream_key(Phase::Forward, rect, code, key));
                    let mut t = TileTally::default();
                    let (mut kept, mut attempts) = (0, 0);
                    while kept < m && attempts < budget {
                        attempts += 1;
                        let tile = match pick {
                            [only] => *only,
                            _ => pick[rng.gen_range(0..pick.len())],
                        };
                        let x = tiling.sample(tile, &mut rng);
                        if let Some(f) = &entry_facet {
                            if !entering_condition(field, f, &x) {
                                t.diag.discarded += 1;
                                continue;
                            }
                        }
                        kept += 1;
                        t.diag.simulations += 1;
                        match sim.run(&x) {
                            Ok(ExitOutcome::Exited { facet, point, .. }) => {
                                t.exits.push((facet.axis, facet.side, point))
                            }
                            Ok(ExitOutcome::StayedInside) => t.stayed += 1,
                            Err(e) => {
                                t.diag.diverged += 1;
                                t.first_error.get_or_insert(e);
                            }
                        }
                    }
                    if kept == 0 {
                        t.diag.empty_tiles += 1;
                    }
                    t
                },
            )
            .collect();

        let mut diag = Diagnostics::default();
        let mut stayed = 0u64;
        let mut first_error = None;
        let n = partition.dim();
        let mut exit_points: Vec<Vec<Vec<f64>>> = vec![Vec::new(); 2 * n];
        for t in tallies {
            diag.absorb(&t.diag);
            stayed += t.stayed;
            first_error = first_error.or(t.first_error);
            for (axis, side, p) in t.exits {
                exit_points[facet_code(axis, side) as usize].push(p);
            }
        }
        let tallied = stayed + exit_points.iter().map(|v| v.len() as u64).sum::<u64>();
        if tallied == 0 {
            if let Some(source) = first_error {
                return Err(QdaaError::AllDiverged {
                    state: state.to_string(),
                    source,
                });
            }
            diag.empty_states += 1;
            return Ok(Successors {
                edges: vec![(Successor::State(QdaaState::steady(rect.clone())), 1.0)],
                diagnostics: diag,
            });
        }

        let mut counted: Vec<(Successor, u64)> = Vec::new();
        if stayed > 0 {
            counted.push((Successor::State(QdaaState::steady(rect.clone())), stayed));
        }
        let mut sink = 0u64;
        // Facet successors after refinement, in facet order.
        let mut facet_edges: Vec<(Option<Successor>, u64)> = Vec::new();
        for axis in 0..n {
            for side in [Side::Lower, Side::Upper] {
                let pts = &exit_points[facet_code(axis, side) as usize];
                if pts.is_empty() {
                    continue;
                }
                let facet = FacetRef::new(rect.clone(), axis, side);
                let nb = match neighbor(partition, &facet) {
                    Neighbor::Boundary => {
                        sink += pts.len() as u64;
                        continue;
                    }
                    Neighbor::Rect(r) => r,
                };
                let exit_tiling =
                    Tiling::of_facet_box(facet_bounds(partition, &facet), axis, self.cfg.kappa);
                let mut candidates = FixedBitSet::with_capacity(exit_tiling.count());
                for p in pts {
                    candidates.insert(exit_tiling.locate(p));
                }
                let target = |tiles: FixedBitSet| {
                    Successor::State(QdaaState {
                        rect: nb.clone(),
                        entry: EntrySet::facet_tiles(axis, side.opposite(), tiles),
                    })
                };
                let refined = if self.cfg.backward_refine {
                    let rev = sim.reversed(&self.negated);
                    let mut kept = FixedBitSet::with_capacity(exit_tiling.count());
                    for l in candidates.ones() {
                        if self.refine_tile(state, &facet, &exit_tiling, l, rev.clone(), &mut diag) {
                            kept.insert(l);
                        }
                    }
                    (kept.count_ones(..) > 0).then(|| target(kept))
                } else {
                    Some(target(candidates))
                };
                facet_edges.push((refined, pts.len() as u64));
            }
        }

        let any_kept = facet_edges.iter().any(|(r, _)| r.is_some());
        if !any_kept && stayed == 0 && sink == 0 {
            // No exit survived refinement: nothing confirms that the entry
            // set leaves, so it is treated as staying.
            diag.dropped += facet_edges.len() as u64;
            diag.unconfirmed += 1;
            counted.push((Successor::State(QdaaState::steady(rect.clone())), 1));
        } else {
            for (refined, c) in facet_edges {
                match refined {
                    Some(s) => counted.push((s, c)),
                    None => diag.dropped += 1,
                }
            }
        }
        if sink > 0 {
            counted.push((Successor::Sink, sink));
        }

        let total: u64 = counted.iter().map(|(_, c)| c).sum();
        let edges = counted
            .into_iter()
            .map(|(s, c)| (s, c as f64 / total as f64))
            .collect();
        Ok(Successors {
            edges,
            diagnostics: diag,
        })
    }

    /// Backward check of exit tile `tile` of `facet` (a facet of the source
    /// rectangle). `sim` must run the negated field in the source rectangle.
    fn refine_tile(
        &self,
        source: &QdaaState,
        facet: &FacetRef,
        tiling: &Tiling,
        tile: usize,
        mut sim: RectSimulator<'_>,
        diag: &mut Diagnostics,
    ) -> bool {
        let (e_axis, e_side, e_tiles) = match &source.entry {
            EntrySet::WholeRectangle => return true,
            EntrySet::Empty => return false,
            EntrySet::FacetTiles { axis, side, tiles } => (*axis, *side, tiles),
        };
        let partition = self.system.partition();
        let e_facet = FacetRef::new(source.rect.clone(), e_axis, e_side);
        let e_tiling = Tiling::of_facet_box(facet_bounds(partition, &e_facet), e_axis, self.cfg.kappa);
        let m = self.cfg.sims;
        let key = self.stream_key(Phase::Backward, &source.rect, facet_code(facet.axis, facet.side), tile);
        let mut rng = stream(self.cfg.seed, key);
        let (mut kept, mut attempts, mut hits) = (0, 0, 0);
        while kept < m && attempts < 10 * m {
            attempts += 1;
            let y = tiling.sample(tile, &mut rng);
            if !entering_condition(&self.negated, facet, &y) {
                diag.discarded += 1;
                continue;
            }
            kept += 1;
            diag.simulations += 1;
            match sim.run(&y) {
                Ok(ExitOutcome::Exited { facet: f, point, .. }) => {
                    if f.axis == e_axis && f.side == e_side && e_tiles.contains(e_tiling.locate(&point)) {
                        hits += 1;
                    }
                }
                Ok(ExitOutcome::StayedInside) => {}
                Err(_) => diag.diverged += 1,
            }
        }
        2 * hits >= m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parse_model;

    fn strip(field: &str) -> BiochemicalSystem {
        parse_model(&format!(
            "model strip\nvar x\nvar y\n{field}\nthresholds x = 0 1 2 3\nthresholds y = 0 1 2 3\ninitrect 1 1\n"
        ))
        .unwrap()
    }

    fn cfg(kappa: usize, sims: usize) -> RunConfig {
        RunConfig {
            kappa,
            sims,
            seed: 7,
            integrator: quick(),
            ..Default::default()
        }
    }

    fn quick() -> crate::simulate::IntegratorConfig {
        crate::simulate::IntegratorConfig {
            step: Some(0.01),
            t_max: 30.0,
            ..Default::default()
        }
    }

    fn all_tiles(k: usize) -> FixedBitSet {
        let mut b = FixedBitSet::with_capacity(k);
        b.insert_range(..);
        b
    }

    #[test]
    fn empty_entry_self_loops() {
        let s = strip("eq x = 1\neq y = 0");
        let st = QdaaState::steady(RectIndex::new(vec![1, 1]));
        let out = get_successors(&st, &s, &cfg(3, 5)).unwrap();
        assert_eq!(out.edges, vec![(Successor::State(st), 1.0)]);
    }

    #[test]
    fn uniform_flow_crosses_to_the_right() {
        let s = strip("eq x = 1\neq y = 0");
        for k in [1, 2, 5] {
            let st = QdaaState {
                rect: RectIndex::new(vec![1, 1]),
                entry: EntrySet::facet_tiles(0, Side::Lower, all_tiles(k)),
            };
            let out = get_successors(&st, &s, &cfg(k, 8)).unwrap();
            let expect = QdaaState {
                rect: RectIndex::new(vec![2, 1]),
                entry: EntrySet::facet_tiles(0, Side::Lower, all_tiles(k)),
            };
            assert_eq!(out.edges, vec![(Successor::State(expect), 1.0)]);
            assert_eq!(out.diagnostics.simulations, 8 * k as u64);
        }
    }

    #[test]
    fn outer_boundary_goes_to_sink() {
        let s = strip("eq x = 1\neq y = 0");
        let st = QdaaState::initial(RectIndex::new(vec![2, 0]));
        let out = get_successors(&st, &s, &cfg(2, 4)).unwrap();
        assert_eq!(out.edges, vec![(Successor::Sink, 1.0)]);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let s = strip("eq x = 1\neq y = 0");
        let st = QdaaState::initial(RectIndex::new(vec![3, 1]));
        assert!(matches!(get_successors(&st, &s, &cfg(2, 4)), Err(QdaaError::Mismatch { .. })));
        let st = QdaaState {
            rect: RectIndex::new(vec![1, 1]),
            entry: EntrySet::facet_tiles(0, Side::Lower, all_tiles(3)),
        };
        assert!(matches!(get_successors(&st, &s, &cfg(2, 4)), Err(QdaaError::Mismatch { .. })));
    }

    #[test]
    fn split_between_fixed_line_and_exit() {
        // y' = x + 0.25 - y: points with x < 1.75 settle on the line
        // y = x + 0.25 inside [1,2]^2, the rest leave through the top.
        let s = strip("eq x = 0\neq y = x + 0.25 - y");
        let st = QdaaState::initial(RectIndex::new(vec![1, 1]));
        let out = get_successors(&st, &s, &cfg(4, 10)).unwrap();
        assert_eq!(out.edges.len(), 2);
        let stay = Successor::State(QdaaState::steady(RectIndex::new(vec![1, 1])));
        assert_eq!(out.edges[0], (stay, 0.75));
        assert!(matches!(&out.edges[1], (Successor::State(q), w) if q.rect[1] == 2 && *w == 0.25));
    }

    /// Fraction of a dense grid of starting points that leave through the top.
    fn grid_oracle(s: &BiochemicalSystem) -> f64 {
        let rect = RectIndex::new(vec![1, 1]);
        let mut sim = RectSimulator::new(s.field(), s.partition(), &rect, quick());
        let g = 200;
        let mut top = 0;
        for i in 0..g {
            for j in 0..g {
                let x = [1.0 + (i as f64 + 0.5) / g as f64, 1.0 + (j as f64 + 0.5) / g as f64];
                if let Ok(ExitOutcome::Exited { facet, .. }) = sim.run(&x) {
                    top += usize::from(facet.axis == 1 && facet.side == Side::Upper);
                }
            }
        }
        top as f64 / (g * g) as f64
    }

    #[test]
    fn weights_converge_to_area_ratio() {
        let s = strip("eq x = 0\neq y = x + 0.3 - y");
        let oracle = grid_oracle(&s);
        assert!((oracle - 0.3).abs() < 0.01);
        let st = QdaaState::initial(RectIndex::new(vec![1, 1]));
        let mut errs = vec![];
        for k in [3, 9, 27] {
            let out = get_successors(&st, &s, &cfg(k, 20)).unwrap();
            let top: f64 = out
                .edges
                .iter()
                .filter(|(s, _)| matches!(s, Successor::State(q) if q.rect[1] == 2))
                .map(|e| e.1)
                .sum();
            errs.push((top - oracle).abs());
        }
        assert!(errs[2] < 0.01, "{errs:?}");
        assert!(errs[2] <= errs[0] + 1e-9, "{errs:?}");
    }

    #[test]
    fn backward_refine_examples() {
        let s = strip("eq x = 1\neq y = 0");
        let c = cfg(4, 10);
        let rect = RectIndex::new(vec![1, 1]);
        // Entry: lowest quarter of the left facet.
        let mut bottom = FixedBitSet::with_capacity(4);
        bottom.insert(0);
        let source = QdaaState {
            rect: rect.clone(),
            entry: EntrySet::facet_tiles(0, Side::Lower, bottom),
        };
        let right = FacetRef::new(rect.clone(), 0, Side::Upper);
        let tile = |k| TileRef {
            parent: TileParent::Facet(right.clone()),
            multi_index: vec![k],
        };
        assert!(backward_refine(&tile(0), &source, &s, &c));
        assert!(!backward_refine(&tile(2), &source, &s, &c));
        let whole = QdaaState::initial(rect);
        assert!(backward_refine(&tile(3), &whole, &s, &c));
    }

    #[test]
    fn refinement_keeps_straight_stream() {
        let s = strip("eq x = 1\neq y = 0");
        let mut c = cfg(4, 10);
        c.backward_refine = true;
        let mut mid = FixedBitSet::with_capacity(4);
        mid.insert(1);
        mid.insert(2);
        let st = QdaaState {
            rect: RectIndex::new(vec![1, 1]),
            entry: EntrySet::facet_tiles(0, Side::Lower, mid.clone()),
        };
        let out = get_successors(&st, &s, &c).unwrap();
        let expect = QdaaState {
            rect: RectIndex::new(vec![2, 1]),
            entry: EntrySet::facet_tiles(0, Side::Lower, mid),
        };
        assert_eq!(out.edges, vec![(Successor::State(expect), 1.0)]);
    }

    #[test]
    fn unconfirmed_exits_become_staying() {
        // x' = -ln(5) x contracts the entry tile [0.75, 1] to [0.15, 0.2]
        // on the top facet, a fifth of one tile.
        let s = strip("eq x = -1.6094379124341003*x\neq y = 1");
        let mut last = FixedBitSet::with_capacity(4);
        last.insert(3);
        let st = QdaaState {
            rect: RectIndex::new(vec![0, 1]),
            entry: EntrySet::facet_tiles(1, Side::Lower, last),
        };
        let mut c = cfg(4, 40);
        let plain = get_successors(&st, &s, &c).unwrap();
        assert!(matches!(&plain.edges[..], [(Successor::State(q), w)] if q.rect[1] == 2 && *w == 1.0));
        c.backward_refine = true;
        let out = get_successors(&st, &s, &c).unwrap();
        let stay = Successor::State(QdaaState::steady(RectIndex::new(vec![0, 1])));
        assert_eq!(out.edges, vec![(stay, 1.0)]);
        assert_eq!(out.diagnostics.unconfirmed, 1);
        assert_eq!(out.diagnostics.dropped, 1);
    }

    #[test]
    fn per_state_sampling_spends_m_per_state() {
        let s = strip("eq x = 1\neq y = 0");
        let st = QdaaState {
            rect: RectIndex::new(vec![1, 1]),
            entry: EntrySet::facet_tiles(0, Side::Lower, all_tiles(5)),
        };
        let mut c = cfg(5, 8);
        c.sampling = Sampling::PerState;
        let out = get_successors(&st, &s, &c).unwrap();
        assert_eq!(out.diagnostics.simulations, 8);
        assert!(matches!(&out.edges[..], [(Successor::State(q), w)] if q.rect[0] == 2 && *w == 1.0));
    }

    #[test]
    fn zero_field_stays() {
        let s = strip("eq x = 0\neq y = 0");
        let st = QdaaState::initial(RectIndex::new(vec![1, 1]));
        let out = get_successors(&st, &s, &cfg(2, 3)).unwrap();
        assert_eq!(
            out.edges,
            vec![(Successor::State(QdaaState::steady(RectIndex::new(vec![1, 1]))), 1.0)]
        );
    }
}
