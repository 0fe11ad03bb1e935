//! Phase-field regularization and the cell-wise descent.
//!
//! The density `v` lives on reference cells and is shared by all copies of
//! a reference. The regularized objective is
//!
//! ```text
//! J = sum_X s_X / v_X + beta * sum_X w_X v_X
//!   + eta * ( sum_X w_X W(v_X) / eps + sum_t g_t (sum_i a_ti v_i)^2 )
//! ```
//!
//! with `w_X` the area covered by every copy of cell `X`,
//! `W(v) = 32/pi^2 (v - delta)(1 - v)` and one difference term per
//! geometric cell side with weight `eps / 8`. Across a split facet the coarse
//! cell is compared with the mean of its two fine neighbors; boundary sides
//! mirror the cell and contribute nothing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::assembly::DofLayout;
use crate::decomp::{Decomposition, FacetKind};
use crate::geometry::Side;

/// Scaling of the double well so that one interface costs its length.
pub const WELL_SCALE: f64 = 32.0 / (std::f64::consts::PI * std::f64::consts::PI);

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseParams {
    /// Volume penalty.
    pub beta: f64,
    /// Perimeter penalty.
    pub eta: f64,
    /// Interface width, length units.
    pub epsilon: f64,
    /// Lower density bound standing in for void.
    pub delta: f64,
}

impl PhaseParams {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.beta >= 0.0
            && self.eta >= 0.0
            && self.epsilon > 0.0
            && self.delta > 0.0
            && self.delta < 1.0
            && [self.beta, self.eta, self.epsilon, self.delta].iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(format!("invalid phase parameters {self:?}"))
        }
    }

    fn well_coefficient(&self) -> f64 {
        self.eta / self.epsilon * WELL_SCALE
    }

    /// `W(v)` without the `eta / eps` factor.
    pub fn well(&self, v: f64) -> f64 {
        WELL_SCALE * (v - self.delta) * (1.0 - v)
    }
}

/// Objective of one cell with all other cells frozen, per unit area:
///
/// `s / v + beta v + c (v - delta)(1 - v) + sum_k p_k (v - t_k)^2`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CellObjective {
    pub stress: f64,
    pub beta: f64,
    pub well: f64,
    pub delta: f64,
    pull: f64,
    pull_target: f64,
    pull_sq: f64,
}

impl CellObjective {
    pub fn new(stress: f64, params: &PhaseParams) -> CellObjective {
        CellObjective {
            stress,
            beta: params.beta,
            well: params.well_coefficient(),
            delta: params.delta,
            pull: 0.0,
            pull_target: 0.0,
            pull_sq: 0.0,
        }
    }

    /// Adds `weight * (v - target)^2`.
    pub fn add_pull(&mut self, weight: f64, target: f64) {
        self.pull += weight;
        self.pull_target += weight * target;
        self.pull_sq += weight * target * target;
    }

    /// Square cell of side `h` with four frozen neighbors.
    pub fn four_neighbor(stress: f64, neighbors: &[f64], h: f64, params: &PhaseParams) -> CellObjective {
        let mut o = CellObjective::new(stress, params);
        let w = params.eta * params.epsilon / (4.0 * h * h);
        for &t in neighbors {
            o.add_pull(w, t);
        }
        o
    }

    pub fn value(&self, v: f64) -> f64 {
        self.stress / v
            + self.beta * v
            + self.well * (v - self.delta) * (1.0 - v)
            + self.pull * v * v
            - 2.0 * self.pull_target * v
            + self.pull_sq
    }

    pub fn derivative(&self, v: f64) -> f64 {
        -self.stress / (v * v) + self.beta + self.well * (1.0 + self.delta - 2.0 * v) + 2.0 * self.pull * v
            - 2.0 * self.pull_target
    }

    pub fn second_derivative(&self, v: f64) -> f64 {
        2.0 * self.stress / (v * v * v) - 2.0 * self.well + 2.0 * self.pull
    }

    /// `v^2 J'(v) = -s + a v^2 + b v^3`.
    fn cubic(&self) -> (f64, f64) {
        let a = self.beta + self.well * (1.0 + self.delta) - 2.0 * self.pull_target;
        let b = 2.0 * self.pull - 2.0 * self.well;
        (a, b)
    }

    fn scaled_derivative(&self, v: f64) -> f64 {
        let (a, b) = self.cubic();
        -self.stress + a * v * v + b * v * v * v
    }
}

/// Objective of a square cell with four frozen neighbors.
pub fn cell_objective(v: f64, stress: f64, neighbors: &[f64], h: f64, params: &PhaseParams) -> f64 {
    CellObjective::four_neighbor(stress, neighbors, h, params).value(v)
}

/// Global minimizer on `[delta, 1]` of the cell objective without neighbor
/// coupling.
pub fn two_well_init(stress: f64, params: &PhaseParams) -> f64 {
    newton_cell(&CellObjective::new(stress, params), 1.0)
}

const NEWTON_MAX_ITERS: usize = 50;

/// Global minimizer of `obj` on `[delta, 1]`.
///
/// `v^2 J'(v)` is a cubic without linear term, monotone on each side of its
/// single interior critical point, so every local minimum is bracketed by a
/// sign change on one of at most two pieces. Each bracket is solved by
/// Newton's method in `w = -ln v` with bisection safeguard; the result is
/// the best of the endpoints and these roots. `v_init` is kept when it is at
/// least as good.
pub fn newton_cell(obj: &CellObjective, v_init: f64) -> f64 {
    let (lo, hi) = (obj.delta, 1.0);
    let v_init = v_init.clamp(lo, hi);
    let (a, b) = obj.cubic();
    let mut cuts = vec![lo];
    if b != 0.0 {
        let vc = -2.0 * a / (3.0 * b);
        if vc > lo && vc < hi {
            cuts.push(vc);
        }
    }
    cuts.push(hi);
    let mut candidates = cuts.clone();
    for win in cuts.windows(2) {
        let (va, vb) = (win[0], win[1]);
        if obj.scaled_derivative(va) < 0.0 && obj.scaled_derivative(vb) > 0.0 {
            candidates.push(bracketed_root(obj, va, vb, v_init));
        }
    }
    let mut best = candidates[0];
    let mut best_j = obj.value(best);
    for &c in &candidates[1..] {
        let j = obj.value(c);
        if j < best_j {
            best = c;
            best_j = j;
        }
    }
    if obj.value(v_init) <= best_j {
        v_init
    } else {
        best
    }
}

fn bracketed_root(obj: &CellObjective, va: f64, vb: f64, v_init: f64) -> f64 {
    // In w the bracket is [-ln vb, -ln va] and dJ/dw = -v J'(v) rises from
    // negative to positive.
    let (mut wlo, mut whi) = (-vb.ln(), -va.ln());
    let mut w = if v_init > va && v_init < vb { -v_init.ln() } else { 0.5 * (wlo + whi) };
    for _ in 0..NEWTON_MAX_ITERS {
        let v = (-w).exp();
        let jp = obj.derivative(v);
        let g = -v * jp;
        let h = v * jp + v * v * obj.second_derivative(v);
        let tol = 1e-10 * (1.0 + obj.value(v).abs());
        if g < 0.0 {
            wlo = w;
        } else {
            whi = w;
        }
        let newton = w - g / h;
        let next = if h > 0.0 && newton > wlo && newton < whi { newton } else { 0.5 * (wlo + whi) };
        let step = (next - w).abs();
        w = next;
        if g.abs() <= tol && step <= 1e-12 * (1.0 + w.abs()) || step <= 1e-15 * (1.0 + w.abs()) {
            break;
        }
    }
    (-w).exp().clamp(va, vb)
}

/// Density on all reference cells, with prescribed boundary-layer cells.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseField {
    pub values: Vec<f64>,
    pub fixed: Vec<bool>,
}

impl PhaseField {
    /// Free cells start at `init`; prescribed cells take their value.
    pub fn new(pattern: &[Option<f64>], init: f64) -> PhaseField {
        PhaseField {
            values: pattern.iter().map(|p| p.unwrap_or(init)).collect(),
            fixed: pattern.iter().map(|p| p.is_some()).collect(),
        }
    }

    pub fn uniform(n_cells: usize, value: f64) -> PhaseField {
        PhaseField { values: vec![value; n_cells], fixed: vec![false; n_cells] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Cell areas and difference terms of the regularization.
#[derive(Clone, Debug)]
pub struct PhaseGeometry {
    /// Area covered by all copies of each cell.
    pub cell_weight: Vec<f64>,
    term_ptr: Vec<usize>,
    term_cells: Vec<(usize, f64)>,
    term_weight: Vec<f64>,
    /// Terms touching each cell with the cell's coefficient.
    cell_ptr: Vec<usize>,
    cell_terms: Vec<(usize, f64)>,
}

impl PhaseGeometry {
    pub fn build(decomp: &Decomposition, layout: &DofLayout, epsilon: f64) -> PhaseGeometry {
        let g = layout.grid;
        let n = g.n;
        let n_cells = layout.n_cells();
        let mut cell_weight = vec![0.0; n_cells];
        for (ci, class) in layout.classes.iter().enumerate() {
            let area = class.width * class.height / g.n_cells() as f64;
            for cell in 0..g.n_cells() {
                cell_weight[layout.class_cell(ci, cell)] = class.members.len() as f64 * area;
            }
        }

        let mut acc: HashMap<Vec<(usize, u64)>, f64> = HashMap::new();
        let mut order: Vec<Vec<(usize, u64)>> = Vec::new();
        let w_side = epsilon / 8.0;
        let mut add = |terms: &[(usize, f64)]| {
            let mut t: Vec<(usize, f64)> = Vec::with_capacity(3);
            for &(c, a) in terms {
                match t.iter_mut().find(|x| x.0 == c) {
                    Some(x) => x.1 += a,
                    None => t.push((c, a)),
                }
            }
            t.retain(|x| x.1 != 0.0);
            if t.is_empty() {
                return;
            }
            t.sort_by_key(|x| x.0);
            let s = if t[0].1 < 0.0 { -1.0 } else { 1.0 };
            let key: Vec<(usize, u64)> = t.iter().map(|&(c, a)| (c, (s * a).to_bits())).collect();
            let e = acc.entry(key.clone()).or_insert_with(|| {
                order.push(key);
                0.0
            });
            *e += w_side;
        };

        for a in 0..decomp.len() {
            let rot = layout.rotation_of_sub[a];
            let class = layout.class_of_sub[a];
            for rc in 0..g.n_cells() {
                let x = layout.class_cell(class, rc);
                for ref_side in Side::ALL {
                    if let Some(nb) = g.neighbor(rc, ref_side) {
                        add(&[(x, 1.0), (layout.class_cell(class, nb), -1.0)]);
                        continue;
                    }
                    let geo_side = ref_side.rotated(rot);
                    let q = g.position_on_side(g.rotate_cell(rc, rot), geo_side);
                    let across = |b: usize, pos: usize| {
                        let e = layout.geo_side_edge(b, geo_side.opposite(), pos);
                        layout.class_cell(layout.class_of_sub[b], e.ref_cell)
                    };
                    match decomp.facet(a, geo_side).kind {
                        FacetKind::Boundary => {}
                        FacetKind::Match { partner } => add(&[(x, 1.0), (across(partner, q), -1.0)]),
                        FacetKind::SplitsInto { fine } => {
                            let k0 = 2 * q;
                            let k1 = 2 * q + 1;
                            add(&[
                                (x, 1.0),
                                (across(fine[k0 / n], k0 % n), -0.5),
                                (across(fine[k1 / n], k1 % n), -0.5),
                            ]);
                        }
                        FacetKind::HalfOfSplit { coarse, half } => {
                            add(&[(x, 1.0), (across(coarse, (half * n + q) / 2), -1.0)]);
                        }
                    }
                }
            }
        }

        let mut term_ptr = vec![0];
        let mut term_cells = Vec::new();
        let mut term_weight = Vec::new();
        for key in &order {
            term_cells.extend(key.iter().map(|&(c, bits)| (c, f64::from_bits(bits))));
            term_ptr.push(term_cells.len());
            term_weight.push(acc[key]);
        }
        let mut count = vec![0usize; n_cells + 1];
        for &(c, _) in &term_cells {
            count[c + 1] += 1;
        }
        for c in 0..n_cells {
            count[c + 1] += count[c];
        }
        let mut next = count.clone();
        let mut cell_terms = vec![(0, 0.0); term_cells.len()];
        for t in 0..term_weight.len() {
            for &(c, a) in &term_cells[term_ptr[t]..term_ptr[t + 1]] {
                cell_terms[next[c]] = (t, a);
                next[c] += 1;
            }
        }
        PhaseGeometry { cell_weight, term_ptr, term_cells, term_weight, cell_ptr: count, cell_terms }
    }

    pub fn n_terms(&self) -> usize {
        self.term_weight.len()
    }

    fn term_value(&self, t: usize, v: &[f64]) -> f64 {
        self.term_cells[self.term_ptr[t]..self.term_ptr[t + 1]].iter().map(|&(c, a)| a * v[c]).sum()
    }

    /// `sum_X w_X v_X`.
    pub fn volume(&self, v: &[f64]) -> f64 {
        self.cell_weight.iter().zip(v).map(|(w, x)| w * x).sum()
    }

    /// Regularized perimeter without the `eta` factor.
    pub fn perimeter(&self, v: &[f64], params: &PhaseParams) -> f64 {
        let wells: f64 = self.cell_weight.iter().zip(v).map(|(w, &x)| w * params.well(x)).sum::<f64>() / params.epsilon;
        let grads: f64 = (0..self.n_terms())
            .map(|t| {
                let d = self.term_value(t, v);
                self.term_weight[t] * d * d
            })
            .sum();
        wells + grads
    }

    /// Cell objective of `cell` per unit area with all other cells frozen.
    pub fn cell_objective(&self, cell: usize, stress: f64, v: &[f64], params: &PhaseParams) -> CellObjective {
        let w = self.cell_weight[cell];
        let mut obj = CellObjective::new(stress / w, params);
        for &(t, a) in &self.cell_terms[self.cell_ptr[cell]..self.cell_ptr[cell + 1]] {
            let rest = self.term_value(t, v) - a * v[cell];
            obj.add_pull(params.eta * self.term_weight[t] * a * a / w, -rest / a);
        }
        obj
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStart {
    /// Each update starts from the two-well initial guess.
    TwoWell,
    /// Each update starts from the current value.
    Warm,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub max_sweeps: usize,
    pub tol: f64,
    pub start: SweepStart,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { max_sweeps: 50, tol: 1e-8, start: SweepStart::TwoWell }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SweepStats {
    pub sweeps: usize,
    pub max_change: f64,
}

/// Lexicographic Gauss-Seidel sweeps over free cells for fixed stress
/// coefficients. A cell update is taken only if it does not raise the cell
/// objective, so the total objective never increases.
pub fn gauss_seidel_sweep(
    field: &mut PhaseField,
    geom: &PhaseGeometry,
    stress: &[f64],
    params: &PhaseParams,
    opts: &SweepOptions,
) -> SweepStats {
    let mut stats = SweepStats { sweeps: 0, max_change: 0.0 };
    for _ in 0..opts.max_sweeps {
        let mut max_change = 0.0f64;
        for cell in 0..field.len() {
            if field.fixed[cell] {
                continue;
            }
            let current = field.values[cell];
            let obj = geom.cell_objective(cell, stress[cell], &field.values, params);
            let init = match opts.start {
                SweepStart::TwoWell => two_well_init(obj.stress, params),
                SweepStart::Warm => current,
            };
            let next = newton_cell(&obj, init);
            if next != current && obj.value(next) <= obj.value(current) {
                max_change = max_change.max((next - current).abs());
                field.values[cell] = next;
            }
        }
        stats.sweeps += 1;
        stats.max_change = max_change;
        if max_change < opts.tol {
            break;
        }
    }
    stats
}
