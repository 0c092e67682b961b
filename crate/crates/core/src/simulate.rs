//! Trajectories inside one rectangle: fixed-step RK4 with bisection event
//! location on the rectangle boundary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rect_bounds, Bounds, FacetRef, RectIndex, Side};
use crate::model::{MultiAffineField, Partition};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Fixed step; `None` picks one per rectangle with [`auto_step`].
    pub step: Option<f64>,
    pub t_max: f64,
    /// Geometric tolerance relative to the rectangle side length.
    pub boundary_tol: f64,
    pub bisect_iters: u32,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: None,
            t_max: 100.0,
            boundary_tol: 1e-9,
            bisect_iters: 40,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), String> {
        if let Some(h) = self.step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(format!("step must be positive, got {h}"));
            }
            if self.t_max < h {
                return Err(format!("t_max {} is shorter than the step {h}", self.t_max));
            }
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return Err(format!("t_max must be positive, got {}", self.t_max));
        }
        if !(self.boundary_tol > 0.0) {
            return Err("boundary_tol must be positive".into());
        }
        if self.bisect_iters == 0 {
            return Err("bisect_iters must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExitOutcome {
    Exited {
        facet: FacetRef,
        point: Vec<f64>,
        time: f64,
    },
    StayedInside,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("trajectory diverged (non-finite state) at t = {time}")]
    Diverged { time: f64 },
}

struct Rk4Buffers {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Buffers {
    fn new(n: usize) -> Self {
        Self {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, field: &MultiAffineField, x: &[f64], h: f64, out: &mut [f64]) -> bool {
        let n = x.len();
        field.eval_into(x, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k1[i];
        }
        field.eval_into(&self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k2[i];
        }
        field.eval_into(&self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k3[i];
        }
        field.eval_into(&self.tmp, &mut self.k4);
        let mut finite = true;
        for i in 0..n {
            out[i] = x[i] + h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
            finite &= out[i].is_finite();
        }
        finite
    }
}

/// One classical Runge-Kutta step of size `h`.
pub fn rk4_step(field: &MultiAffineField, x: &[f64], h: f64) -> Result<Vec<f64>, SimError> {
    let mut out = vec![0.0; x.len()];
    if Rk4Buffers::new(x.len()).step(field, x, h, &mut out) {
        Ok(out)
    } else {
        Err(SimError::Diverged { time: h })
    }
}

/// Integrates freely (no rectangle) for `t_end` time units with step `h`.
pub fn integrate(
    field: &MultiAffineField,
    x0: &[f64],
    h: f64,
    t_end: f64,
) -> Result<Vec<f64>, SimError> {
    let mut buf = Rk4Buffers::new(x0.len());
    let mut x = x0.to_vec();
    let mut next = x.clone();
    let steps = (t_end / h).round() as usize;
    for k in 0..steps {
        if !buf.step(field, &x, h, &mut next) {
            return Err(SimError::Diverged { time: k as f64 * h });
        }
        std::mem::swap(&mut x, &mut next);
    }
    Ok(x)
}

/// `f(x)·ν < 0` for the facet's outward normal.
pub fn entering_condition(field: &MultiAffineField, facet: &FacetRef, x: &[f64]) -> bool {
    facet.side.sign() * field.component(facet.axis, x) < 0.0
}

/// `f(x)·ν > 0` for the facet's outward normal.
pub fn leaving_condition(field: &MultiAffineField, facet: &FacetRef, x: &[f64]) -> bool {
    facet.side.sign() * field.component(facet.axis, x) > 0.0
}

/// `1e-3 · min_i side_i / max|f_i|`, clamped to `[1e-6, 1e-1]`. The maximum
/// of `|f_i|` over a box is attained at a vertex since `f` is multi-affine.
pub fn auto_step(field: &MultiAffineField, bounds: &Bounds) -> f64 {
    let n = bounds.dim();
    let mut max_abs = vec![0.0f64; n];
    let mut fx = vec![0.0; n];
    for v in bounds.vertices() {
        field.eval_into(&v, &mut fx);
        for i in 0..n {
            max_abs[i] = max_abs[i].max(fx[i].abs());
        }
    }
    let rate = (0..n)
        .map(|i| max_abs[i] / bounds.side(i))
        .fold(0.0f64, f64::max);
    let h = if rate > 0.0 && rate.is_finite() {
        1e-3 / rate
    } else {
        1e-1
    };
    h.clamp(1e-6, 1e-1)
}

/// Reusable simulator for one rectangle. Cloning is cheap enough to give
/// every worker its own scratch buffers.
pub struct RectSimulator<'a> {
    field: &'a MultiAffineField,
    rect: RectIndex,
    bounds: Bounds,
    step: f64,
    cfg: IntegratorConfig,
    tol: Vec<f64>,
    buf: Rk4Buffers,
    x: Vec<f64>,
    probe: Vec<f64>,
    fx: Vec<f64>,
}

impl Clone for RectSimulator<'_> {
    fn clone(&self) -> Self {
        Self::with_step(self.field, self.rect.clone(), self.bounds.clone(), self.step, self.cfg)
    }
}

impl<'a> RectSimulator<'a> {
    pub fn new(
        field: &'a MultiAffineField,
        partition: &Partition,
        rect: &RectIndex,
        cfg: IntegratorConfig,
    ) -> Self {
        let bounds = rect_bounds(partition, rect);
        let step = cfg.step.unwrap_or_else(|| auto_step(field, &bounds));
        Self::with_step(field, rect.clone(), bounds, step, cfg)
    }

    fn with_step(
        field: &'a MultiAffineField,
        rect: RectIndex,
        bounds: Bounds,
        step: f64,
        cfg: IntegratorConfig,
    ) -> Self {
        let n = bounds.dim();
        let tol = (0..n).map(|i| cfg.boundary_tol * bounds.side(i)).collect();
        Self {
            field,
            rect,
            bounds,
            step,
            cfg,
            tol,
            buf: Rk4Buffers::new(n),
            x: vec![0.0; n],
            probe: vec![0.0; n],
            fx: vec![0.0; n],
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    /// Same rectangle and step, reversed flow.
    pub fn reversed<'b>(&self, negated: &'b MultiAffineField) -> RectSimulator<'b> {
        RectSimulator::with_step(negated, self.rect.clone(), self.bounds.clone(), self.step, self.cfg)
    }

    fn inside(&self, p: &[f64]) -> bool {
        self.bounds.contains(p)
    }

    fn clamp_into(&self, p: &mut [f64]) {
        for (i, v) in p.iter_mut().enumerate() {
            *v = v.clamp(self.bounds.lo[i], self.bounds.hi[i]);
        }
    }

    /// Runs from `x0` until the trajectory leaves the rectangle through a
    /// facet satisfying the leaving condition, or `t_max` elapses.
    pub fn run(&mut self, x0: &[f64]) -> Result<ExitOutcome, SimError> {
        let n = self.bounds.dim();
        let h = self.step;
        self.x.copy_from_slice(x0);
        let mut x = std::mem::take(&mut self.x);
        self.clamp_into(&mut x);
        let mut probe = std::mem::take(&mut self.probe);
        let result = (|| {
            let mut t = 0.0;
            while t < self.cfg.t_max {
                if !self.buf.step(self.field, &x, h, &mut probe) {
                    return Err(SimError::Diverged { time: t });
                }
                if self.inside(&probe) {
                    std::mem::swap(&mut x, &mut probe);
                    t += h;
                    continue;
                }
                let (mut lo, mut hi) = (0.0, h);
                for _ in 0..self.cfg.bisect_iters {
                    let mid = 0.5 * (lo + hi);
                    if !self.buf.step(self.field, &x, mid, &mut probe) {
                        return Err(SimError::Diverged { time: t + mid });
                    }
                    if self.inside(&probe) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                self.buf.step(self.field, &x, hi, &mut probe);
                if let Some(facet) = self.classify_exit(&mut probe) {
                    return Ok(ExitOutcome::Exited {
                        facet,
                        point: probe.clone(),
                        time: t + hi,
                    });
                }
                // Grazing contact: take the full step and push back inside.
                self.buf.step(self.field, &x, h, &mut probe);
                self.clamp_into(&mut probe);
                for i in 0..n {
                    let (a, b) = (self.bounds.lo[i], self.bounds.hi[i]);
                    if probe[i] < a + self.tol[i] {
                        probe[i] = (a + self.tol[i]).min(b);
                    } else if probe[i] > b - self.tol[i] {
                        probe[i] = (b - self.tol[i]).max(a);
                    }
                }
                std::mem::swap(&mut x, &mut probe);
                t += h;
            }
            Ok(ExitOutcome::StayedInside)
        })();
        self.x = x;
        self.probe = probe;
        result
    }

    /// Projects a just-outside point onto the boundary and picks the exit
    /// facet: largest positive `f·ν` among facets within tolerance, lowest
    /// axis on ties. `None` when no candidate satisfies the leaving condition.
    fn classify_exit(&mut self, p: &mut [f64]) -> Option<FacetRef> {
        let n = p.len();
        let mut candidates: Vec<(usize, Side)> = Vec::with_capacity(2);
        for i in 0..n {
            if p[i] < self.bounds.lo[i] + self.tol[i] {
                candidates.push((i, Side::Lower));
            } else if p[i] > self.bounds.hi[i] - self.tol[i] {
                candidates.push((i, Side::Upper));
            }
        }
        self.clamp_into(p);
        self.field.eval_into(p, &mut self.fx);
        let mut best: Option<(usize, Side, f64)> = None;
        for &(axis, side) in &candidates {
            let out = side.sign() * self.fx[axis];
            if out > 0.0 && best.is_none_or(|(_, _, b)| out > b) {
                best = Some((axis, side, out));
            }
        }
        let (axis, side, _) = best?;
        p[axis] = match side {
            Side::Lower => self.bounds.lo[axis],
            Side::Upper => self.bounds.hi[axis],
        };
        Some(FacetRef::new(self.rect.clone(), axis, side))
    }
}

pub fn simulate_in_rectangle(
    field: &MultiAffineField,
    partition: &Partition,
    rect: &RectIndex,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<ExitOutcome, SimError> {
    RectSimulator::new(field, partition, rect, *cfg).run(x0)
}
