#![allow(dead_code)]

use qdaa::geometry::{Bounds, FacetRef, RectIndex, Side};
use qdaa::model::{MultiAffineField, MultiAffineTerm, Partition};
use qdaa::simulate::{entering_condition, ExitOutcome, IntegratorConfig, RectSimulator};
use rand::Rng;

/// Each of the `2^n` monomials gets a coefficient in `[-1, 1]` with
/// probability 0.7.
pub fn random_field(rng: &mut impl Rng, n: usize) -> MultiAffineField {
    let eqs = (0..n)
        .map(|_| {
            (0u32..1 << n)
                .filter_map(|mask| {
                    let c = rng.gen_range(-1.0..1.0);
                    let vars = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                    rng.gen_bool(0.7).then(|| MultiAffineTerm::new(c, vars).unwrap())
                })
                .collect()
        })
        .collect();
    MultiAffineField::new(eqs).unwrap()
}

pub fn random_bounds(rng: &mut impl Rng, n: usize) -> Bounds {
    let lo: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
    let hi = lo.iter().map(|a| a + rng.gen_range(0.5..2.0)).collect();
    Bounds::new(lo, hi)
}

/// A one-rectangle partition over `b`.
pub fn single(b: &Bounds) -> (Partition, RectIndex) {
    let p = Partition::new((0..b.dim()).map(|i| vec![b.lo[i], b.hi[i]]).collect()).unwrap();
    (p, RectIndex::new(vec![0; b.dim()]))
}

/// Axis-aligned box inside `b` with corners on a `1/grid` lattice of each side.
pub fn lattice_box(rng: &mut impl Rng, b: &Bounds, grid: usize) -> Bounds {
    let (mut lo, mut hi) = (b.lo.clone(), b.hi.clone());
    for i in 0..b.dim() {
        let p = rng.gen_range(0..grid);
        let q = rng.gen_range(p + 1..=grid);
        lo[i] = b.lo[i] + b.side(i) * p as f64 / grid as f64;
        hi[i] = b.lo[i] + b.side(i) * q as f64 / grid as f64;
    }
    Bounds::new(lo, hi)
}

pub fn random_box(rng: &mut impl Rng, b: &Bounds) -> Bounds {
    let (mut lo, mut hi) = (b.lo.clone(), b.hi.clone());
    for i in 0..b.dim() {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        lo[i] = b.lo[i] + b.side(i) * u.min(v);
        hi[i] = b.lo[i] + b.side(i) * u.max(v);
    }
    Bounds::new(lo, hi)
}

/// `k` boxes, one inside each of `k` equal slabs of `b` along axis 0, so
/// they are pairwise disjoint.
pub fn disjoint_boxes(rng: &mut impl Rng, b: &Bounds, k: usize) -> Vec<Bounds> {
    (0..k)
        .map(|j| {
            let mut slab = b.clone();
            let w = b.side(0) / k as f64;
            slab.lo[0] = b.lo[0] + w * j as f64;
            slab.hi[0] = slab.lo[0] + w;
            random_box(rng, &slab)
        })
        .collect()
}

pub fn covered_fraction(tile: &Bounds, boxes: &[Bounds]) -> f64 {
    boxes.iter().map(|x| tile.intersection_volume(x)).sum::<f64>() / tile.volume()
}

pub fn point_on_facet(rng: &mut impl Rng, b: &Bounds, axis: usize, side: Side) -> Vec<f64> {
    (0..b.dim())
        .map(|i| match (i == axis, side) {
            (true, Side::Lower) => b.lo[i],
            (true, Side::Upper) => b.hi[i],
            _ => rng.gen_range(b.lo[i]..b.hi[i]),
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct RoundTrip {
    pub cases: usize,
    pub passed: usize,
    /// Largest relative mismatch of forward and backward exit times among
    /// passing cases.
    pub worst_time_rel: f64,
    pub failures: Vec<String>,
}

/// Forward from an entry point to the exit, then the negated field back
/// from the exit. Draws fields until `cases` of them produced a forward exit.
pub fn round_trips(rng: &mut impl Rng, cases: usize) -> RoundTrip {
    let cfg = IntegratorConfig::default();
    let mut out = RoundTrip::default();
    while out.cases < cases {
        let n = rng.gen_range(2..=3);
        let field = random_field(rng, n);
        let neg = field.negated();
        let b = random_bounds(rng, n);
        let (part, rect) = single(&b);
        let mut fwd = RectSimulator::new(&field, &part, &rect, cfg);
        let mut bwd = fwd.reversed(&neg);
        for _ in 0..50 {
            let axis = rng.gen_range(0..n);
            let side = if rng.gen_bool(0.5) { Side::Lower } else { Side::Upper };
            let entry = FacetRef::new(rect.clone(), axis, side);
            let x0 = point_on_facet(rng, &b, axis, side);
            if !entering_condition(&field, &entry, &x0) {
                continue;
            }
            let Ok(ExitOutcome::Exited { point, time, .. }) = fwd.run(&x0) else {
                continue;
            };
            out.cases += 1;
            match bwd.run(&point) {
                Ok(ExitOutcome::Exited { facet, point: back, time: tb }) => {
                    let err = back.iter().zip(&x0).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
                    if facet == entry && err <= 1e-4 * b.diameter() {
                        out.passed += 1;
                        out.worst_time_rel = out.worst_time_rel.max((time - tb).abs() / time.max(tb));
                    } else {
                        out.failures.push(format!(
                            "facet {:?}/{:?} vs {:?}/{:?}, error {err:.3e}",
                            facet.axis, facet.side, entry.axis, entry.side
                        ));
                    }
                }
                other => out.failures.push(format!("backward run gave {other:?}")),
            }
            break;
        }
    }
    out
}

pub fn enzyme_invariants(x: &[f64]) -> [f64; 2] {
    [x[1] + x[2], x[0] + x[2] + x[3]]
}
