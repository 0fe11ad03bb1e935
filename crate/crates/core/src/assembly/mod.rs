//! Force unknowns, equilibrium and coupling constraints, boundary loads.
//!
//! Every reference cell edge carries a force vector `f = sigma * n` for the
//! canonical edge normal (`+x` on vertical edges, `+y` on horizontal ones),
//! stored in the reference frame of its block. A block is either a periodic
//! group of equal copies, which then share one set of unknowns, or a single
//! subdomain.

mod loads;
mod rank;

pub use loads::{default_intervals, LoadSpec, SideLoad};
pub use rank::{reduce_rank, ReducedSystem};

use thiserror::Error;

use crate::decomp::{Decomposition, FacetKind, ReferenceClass};
use crate::geometry::{edge_transfer, GridIndex, Rotation, Side, SignedPerm};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum AssemblyError {
    #[error("grid resolution must be at least 1, got {0}")]
    InvalidResolution(usize),
    #[error("edges of subdomains {0} and {1} do not align")]
    GridMismatch(u32, u32),
    #[error("invalid load: {0}")]
    InvalidLoad(String),
    #[error("incompatible load: {0}")]
    IncompatibleLoad(String),
    #[error("constraint row {row} is dependent with nonzero residual {residual:e}")]
    InconsistentSystem { row: usize, residual: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub class: usize,
    pub members: Vec<usize>,
    pub rotation: Rotation,
    /// Reference cell size.
    pub hx: f64,
    pub hy: f64,
    pub slot_offset: usize,
}

impl Block {
    pub fn multiplicity(&self) -> f64 {
        self.members.len() as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }
}

/// Edge of a subdomain side seen from both frames.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct SideEdge {
    pub ref_edge: usize,
    pub ref_cell: usize,
    pub geo_side: Side,
    pub geo_pos: usize,
}

/// Mapping from (block, reference edge, component) slots to scalar unknowns.
#[derive(Clone, Debug)]
pub struct DofLayout {
    pub grid: GridIndex,
    pub classes: Vec<ReferenceClass>,
    pub class_of_sub: Vec<usize>,
    pub blocks: Vec<Block>,
    pub block_of_sub: Vec<usize>,
    pub rotation_of_sub: Vec<Rotation>,
    slot_dof: Vec<usize>,
    slot_sign: Vec<f64>,
    n_dofs: usize,
    conflicts: Vec<(usize, usize, f64)>,
}

impl DofLayout {
    pub fn build(decomp: &Decomposition, n: usize) -> Result<DofLayout, AssemblyError> {
        if n == 0 {
            return Err(AssemblyError::InvalidResolution(n));
        }
        let grid = GridIndex::new(n);
        let classes = decomp.reference_classes();
        let mut class_of_sub = vec![0; decomp.len()];
        for (ci, c) in classes.iter().enumerate() {
            for &m in &c.members {
                class_of_sub[m] = ci;
            }
        }
        let rotation_of_sub: Vec<Rotation> = decomp.subdomains.iter().map(|s| s.rotation).collect();

        let mut groups = decomp.periodic_lineups();
        let grouped: std::collections::HashSet<usize> = groups.iter().flatten().copied().collect();
        groups.extend((0..decomp.len()).filter(|i| !grouped.contains(i)).map(|i| vec![i]));
        groups.sort_by_key(|g| g[0]);

        let slots_per_block = 2 * grid.n_edges();
        let mut blocks = Vec::with_capacity(groups.len());
        let mut block_of_sub = vec![0; decomp.len()];
        for (bi, members) in groups.into_iter().enumerate() {
            let s = &decomp.subdomains[members[0]];
            let class = class_of_sub[members[0]];
            for &m in &members {
                block_of_sub[m] = bi;
            }
            blocks.push(Block {
                class,
                rotation: s.rotation,
                hx: classes[class].width / n as f64,
                hy: classes[class].height / n as f64,
                slot_offset: bi * slots_per_block,
                members,
            });
        }

        let mut layout = DofLayout {
            grid,
            classes,
            class_of_sub,
            blocks,
            block_of_sub,
            rotation_of_sub,
            slot_dof: Vec::new(),
            slot_sign: Vec::new(),
            n_dofs: 0,
            conflicts: Vec::new(),
        };

        let n_slots = layout.blocks.len() * slots_per_block;
        let mut uf = ParityUnionFind::new(n_slots);
        for a in 0..decomp.len() {
            for ref_side in Side::ALL {
                let geo_side = ref_side.rotated(layout.rotation_of_sub[a]);
                let FacetKind::Match { partner: b } = decomp.facet(a, geo_side).kind else {
                    continue;
                };
                if b < a {
                    continue;
                }
                let la = decomp.subdomains[a].rect.side_span(geo_side);
                let lb = decomp.subdomains[b].rect.side_span(geo_side.opposite());
                if ((la.1 - la.0) - (lb.1 - lb.0)).abs() > decomp.tolerance() {
                    return Err(AssemblyError::GridMismatch(decomp.subdomains[a].id, decomp.subdomains[b].id));
                }
                for p in 0..n {
                    let ea = layout.walk_ref_side(a, ref_side, p);
                    let eb = layout.geo_side_edge(b, geo_side.opposite(), ea.geo_pos);
                    let ta = layout.transfer(a, ea.ref_edge);
                    let tb = layout.transfer(b, eb.ref_edge);
                    let m = tb.inverse().mul(ta);
                    for r in 0..2 {
                        let (c, s) = m.row_entry(r);
                        let sb = layout.slot(layout.block_of_sub[b], eb.ref_edge, r);
                        let sa = layout.slot(layout.block_of_sub[a], ea.ref_edge, c);
                        if !uf.union(sb, sa, s) {
                            layout.conflicts.push((sb, sa, s));
                        }
                    }
                }
            }
        }
        let mut dof_of_root = vec![usize::MAX; n_slots];
        layout.slot_dof = vec![0; n_slots];
        layout.slot_sign = vec![0.0; n_slots];
        let mut next = 0;
        for slot in 0..n_slots {
            let (root, sign) = uf.find(slot);
            if dof_of_root[root] == usize::MAX {
                dof_of_root[root] = next;
                next += 1;
            }
            layout.slot_dof[slot] = dof_of_root[root];
            layout.slot_sign[slot] = sign;
        }
        layout.n_dofs = next;
        Ok(layout)
    }

    pub fn n(&self) -> usize {
        self.grid.n
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_slots(&self) -> usize {
        self.slot_dof.len()
    }

    /// Number of reference cells over all classes.
    pub fn n_cells(&self) -> usize {
        self.classes.len() * self.grid.n_cells()
    }

    /// Global cell index of a reference cell of a class.
    pub fn class_cell(&self, class: usize, cell: usize) -> usize {
        class * self.grid.n_cells() + cell
    }

    pub fn slot(&self, block: usize, edge: usize, comp: usize) -> usize {
        self.blocks[block].slot_offset + 2 * edge + comp
    }

    /// Unknown and sign carried by a slot.
    pub fn slot_dof(&self, slot: usize) -> (usize, f64) {
        (self.slot_dof[slot], self.slot_sign[slot])
    }

    /// Force on a reference edge of a block, reference frame.
    pub fn edge_force(&self, f: &[f64], block: usize, edge: usize) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (r, o) in out.iter_mut().enumerate() {
            let (d, s) = self.slot_dof(self.slot(block, edge, r));
            *o = s * f[d];
        }
        out
    }

    /// Reference-to-geometric force map for an edge of subdomain `sub`.
    pub fn transfer(&self, sub: usize, ref_edge: usize) -> SignedPerm {
        edge_transfer(self.rotation_of_sub[sub], self.grid.is_vertical(ref_edge))
    }

    /// Edge at reference position `p` of reference side `ref_side`.
    pub fn walk_ref_side(&self, sub: usize, ref_side: Side, p: usize) -> SideEdge {
        let rot = self.rotation_of_sub[sub];
        let ref_cell = self.grid.side_cell(ref_side, p);
        let geo_cell = self.grid.rotate_cell(ref_cell, rot);
        let geo_side = ref_side.rotated(rot);
        SideEdge {
            ref_edge: self.grid.cell_edge(ref_cell, ref_side),
            ref_cell,
            geo_side,
            geo_pos: self.grid.position_on_side(geo_cell, geo_side),
        }
    }

    /// Edge at geometric position `q` of geometric side `geo_side`.
    pub fn geo_side_edge(&self, sub: usize, geo_side: Side, q: usize) -> SideEdge {
        let inv = self.rotation_of_sub[sub].inverse();
        let geo_cell = self.grid.side_cell(geo_side, q);
        let ref_cell = self.grid.rotate_cell(geo_cell, inv);
        SideEdge {
            ref_edge: self.grid.cell_edge(ref_cell, geo_side.rotated(inv)),
            ref_cell,
            geo_side,
            geo_pos: q,
        }
    }

    /// Reference cell shown at geometric cell `geo_cell` of subdomain `sub`.
    pub fn ref_cell_of_geo(&self, sub: usize, geo_cell: usize) -> usize {
        self.grid.rotate_cell(geo_cell, self.rotation_of_sub[sub].inverse())
    }

    fn add_slot(&self, row: &mut Vec<(usize, f64)>, slot: usize, coeff: f64) {
        let (d, s) = self.slot_dof(slot);
        row.push((d, s * coeff));
    }
}

/// Union-find over slots where each slot equals `+-` its root.
struct ParityUnionFind {
    parent: Vec<usize>,
    sign: Vec<f64>,
}

impl ParityUnionFind {
    fn new(n: usize) -> Self {
        ParityUnionFind { parent: (0..n).collect(), sign: vec![1.0; n] }
    }

    fn find(&mut self, x: usize) -> (usize, f64) {
        let mut path = Vec::new();
        let mut r = x;
        while self.parent[r] != r {
            path.push(r);
            r = self.parent[r];
        }
        // Compress from the top so each sign becomes relative to the root.
        for &p in path.iter().rev() {
            let up = self.parent[p];
            if up != r {
                self.sign[p] *= self.sign[up];
            }
            self.parent[p] = r;
        }
        (r, if x == r { 1.0 } else { self.sign[x] })
    }

    /// Imposes `value(a) = s * value(b)`; false on a sign conflict.
    fn union(&mut self, a: usize, b: usize, s: f64) -> bool {
        let (ra, pa) = self.find(a);
        let (rb, pb) = self.find(b);
        let rel = pa * s * pb;
        if ra == rb {
            return rel == 1.0;
        }
        let (hi, lo) = if ra > rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi] = lo;
        self.sign[hi] = rel;
        true
    }
}

/// Provenance of a constraint row.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum RowLabel {
    ForceBalance { block: usize, cell: usize, comp: u8 },
    TorqueBalance { block: usize, cell: usize },
    CouplingMatch { slot_a: usize, slot_b: usize },
    CouplingSplit { sub: usize, side: Side, pos: usize, comp: u8 },
    BoundaryForce { sub: usize, side: Side, pos: usize, comp: u8 },
}

#[derive(Clone, Debug)]
pub struct ConstraintSystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub labels: Vec<RowLabel>,
}

#[derive(Default)]
struct Rows {
    rows: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    labels: Vec<RowLabel>,
}

impl Rows {
    fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64, label: RowLabel) {
        self.rows.push(row);
        self.b.push(rhs);
        self.labels.push(label);
    }

    fn append(&mut self, other: Rows) {
        self.rows.extend(other.rows);
        self.b.extend(other.b);
        self.labels.extend(other.labels);
    }

    fn finish(self, ncols: usize) -> ConstraintSystem {
        ConstraintSystem { a: CsrMatrix::from_rows(ncols, &self.rows), b: self.b, labels: self.labels }
    }
}

impl ConstraintSystem {
    /// All constraints: per-cell force and torque balance, facet coupling and
    /// boundary tractions.
    pub fn assemble(
        layout: &DofLayout,
        decomp: &Decomposition,
        loads: &LoadSpec,
    ) -> Result<ConstraintSystem, AssemblyError> {
        let mut rows = interior_rows(layout);
        rows.append(coupling_rows(layout, decomp));
        rows.append(boundary_rows(layout, decomp, loads)?);
        Ok(rows.finish(layout.n_dofs()))
    }

    /// Per-cell force and torque balance only.
    pub fn interior(layout: &DofLayout) -> ConstraintSystem {
        interior_rows(layout).finish(layout.n_dofs())
    }

    /// Matching conflicts and branch conservation.
    pub fn coupling(layout: &DofLayout, decomp: &Decomposition) -> ConstraintSystem {
        coupling_rows(layout, decomp).finish(layout.n_dofs())
    }

    pub fn boundary(
        layout: &DofLayout,
        decomp: &Decomposition,
        loads: &LoadSpec,
    ) -> Result<ConstraintSystem, AssemblyError> {
        Ok(boundary_rows(layout, decomp, loads)?.finish(layout.n_dofs()))
    }

    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    pub fn residual(&self, f: &[f64]) -> Vec<f64> {
        self.a.mul_vec(f).iter().zip(&self.b).map(|(x, b)| x - b).collect()
    }
}

fn interior_rows(layout: &DofLayout) -> Rows {
    let g = layout.grid;
    let mut rows = Rows::default();
    let mut torque = Rows::default();
    for (bi, block) in layout.blocks.iter().enumerate() {
        for cell in 0..g.n_cells() {
            let e = |s| g.cell_edge(cell, s);
            for comp in 0..2 {
                let mut row = Vec::with_capacity(4);
                layout.add_slot(&mut row, layout.slot(bi, e(Side::Right), comp), block.hy);
                layout.add_slot(&mut row, layout.slot(bi, e(Side::Left), comp), -block.hy);
                layout.add_slot(&mut row, layout.slot(bi, e(Side::Top), comp), block.hx);
                layout.add_slot(&mut row, layout.slot(bi, e(Side::Bottom), comp), -block.hx);
                rows.push(row, 0.0, RowLabel::ForceBalance { block: bi, cell, comp: comp as u8 });
            }
            let mut row = Vec::with_capacity(4);
            layout.add_slot(&mut row, layout.slot(bi, e(Side::Right), 1), 1.0);
            layout.add_slot(&mut row, layout.slot(bi, e(Side::Left), 1), 1.0);
            layout.add_slot(&mut row, layout.slot(bi, e(Side::Top), 0), -1.0);
            layout.add_slot(&mut row, layout.slot(bi, e(Side::Bottom), 0), -1.0);
            torque.push(row, 0.0, RowLabel::TorqueBalance { block: bi, cell });
        }
    }
    rows.append(torque);
    rows
}

fn coupling_rows(layout: &DofLayout, decomp: &Decomposition) -> Rows {
    let n = layout.n();
    let mut rows = Rows::default();
    for &(sa, sb, s) in &layout.conflicts {
        let mut row = Vec::with_capacity(2);
        layout.add_slot(&mut row, sa, 1.0);
        layout.add_slot(&mut row, sb, -s);
        rows.push(row, 0.0, RowLabel::CouplingMatch { slot_a: sa, slot_b: sb });
    }
    for a in 0..decomp.len() {
        let ba = layout.block_of_sub[a];
        for ref_side in Side::ALL {
            let geo_side = ref_side.rotated(layout.rotation_of_sub[a]);
            let FacetKind::SplitsInto { fine } = decomp.facet(a, geo_side).kind else {
                continue;
            };
            let (s0, s1) = decomp.subdomains[a].rect.side_span(geo_side);
            let h_coarse = (s1 - s0) / n as f64;
            let h_fine = 0.5 * h_coarse;
            for p in 0..n {
                let ec = layout.walk_ref_side(a, ref_side, p);
                let ta_inv = layout.transfer(a, ec.ref_edge).inverse();
                let mut comp_rows = [Vec::with_capacity(6), Vec::with_capacity(6)];
                for (r, row) in comp_rows.iter_mut().enumerate() {
                    layout.add_slot(row, layout.slot(ba, ec.ref_edge, r), h_coarse);
                }
                for k in [2 * ec.geo_pos, 2 * ec.geo_pos + 1] {
                    let b = fine[k / n];
                    let ef = layout.geo_side_edge(b, geo_side.opposite(), k % n);
                    let m = ta_inv.mul(layout.transfer(b, ef.ref_edge));
                    for (r, row) in comp_rows.iter_mut().enumerate() {
                        let (c, sign) = m.row_entry(r);
                        layout.add_slot(row, layout.slot(layout.block_of_sub[b], ef.ref_edge, c), -sign * h_fine);
                    }
                }
                for (r, row) in comp_rows.into_iter().enumerate() {
                    rows.push(row, 0.0, RowLabel::CouplingSplit { sub: a, side: ref_side, pos: p, comp: r as u8 });
                }
            }
        }
    }
    rows
}

/// Fraction along a facet of the midpoint of edge `q` of `n`.
fn edge_fraction(q: usize, n: usize) -> f64 {
    (q as f64 + 0.5) / n as f64
}

/// Sign relating the outward normal of `side` to the canonical normal.
fn outward_sign(side: Side) -> f64 {
    match side {
        Side::Top | Side::Right => 1.0,
        Side::Left | Side::Bottom => -1.0,
    }
}

fn boundary_rows(
    layout: &DofLayout,
    decomp: &Decomposition,
    loads: &LoadSpec,
) -> Result<Rows, AssemblyError> {
    loads.validate()?;
    let n = layout.n();
    let center = decomp.bounding_box.center();
    let mut rows = Rows::default();
    let (mut fx, mut fy, mut torque, mut scale) = (0.0, 0.0, 0.0, 0.0);
    for a in 0..decomp.len() {
        let ba = layout.block_of_sub[a];
        let rect = decomp.subdomains[a].rect;
        for ref_side in Side::ALL {
            let geo_side = ref_side.rotated(layout.rotation_of_sub[a]);
            if decomp.facet(a, geo_side).kind != FacetKind::Boundary {
                continue;
            }
            let load = loads.side(geo_side);
            let traction = load.map_or([0.0, 0.0], |l| l.traction);
            let loaded = |q: usize| load.is_some_and(|l| l.contains(edge_fraction(q, n)));
            let n_loaded = (0..n).filter(|&q| loaded(q)).count();
            let nonzero = traction != [0.0, 0.0];
            if nonzero && n_loaded == 0 {
                return Err(AssemblyError::IncompatibleLoad(format!(
                    "side {:?} of subdomain {} carries traction but no edge midpoint lies in a loaded interval",
                    geo_side, decomp.subdomains[a].id
                )));
            }
            let (s0, s1) = rect.side_span(geo_side);
            let h_edge = (s1 - s0) / n as f64;
            let scale_up = if n_loaded > 0 { n as f64 / n_loaded as f64 } else { 0.0 };
            let line = rect.side_line(geo_side);
            for p in 0..n {
                let e = layout.walk_ref_side(a, ref_side, p);
                let target = if loaded(e.geo_pos) {
                    let t = [scale_up * traction[0], scale_up * traction[1]];
                    let along = s0 + (e.geo_pos as f64 + 0.5) * h_edge;
                    let mid = if geo_side.is_horizontal() { [along, line] } else { [line, along] };
                    let force = [h_edge * t[0], h_edge * t[1]];
                    fx += force[0];
                    fy += force[1];
                    torque += (mid[0] - center[0]) * force[1] - (mid[1] - center[1]) * force[0];
                    scale += force[0].hypot(force[1]);
                    let sg = outward_sign(geo_side);
                    [sg * t[0], sg * t[1]]
                } else {
                    [0.0, 0.0]
                };
                let target_ref = layout.transfer(a, e.ref_edge).inverse().apply(target);
                for (r, &value) in target_ref.iter().enumerate() {
                    let mut row = Vec::with_capacity(1);
                    layout.add_slot(&mut row, layout.slot(ba, e.ref_edge, r), 1.0);
                    rows.push(row, value, RowLabel::BoundaryForce { sub: a, side: ref_side, pos: p, comp: r as u8 });
                }
            }
        }
    }
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let diam = decomp.bounding_box.diameter();
    if fx.hypot(fy) > tol || torque.abs() > tol * diam {
        return Err(AssemblyError::IncompatibleLoad(format!(
            "resultant force ({fx:e}, {fy:e}) and torque {torque:e} do not vanish"
        )));
    }
    Ok(rows)
}

/// Boundary-layer cells whose value is prescribed: `1` where a boundary edge
/// of the cell lies in a loaded interval, `delta` on the remaining boundary
/// cells. Indexed by global cell.
pub fn boundary_pattern(layout: &DofLayout, decomp: &Decomposition, loads: &LoadSpec, delta: f64) -> Vec<Option<f64>> {
    let n = layout.n();
    let mut fixed = vec![None; layout.n_cells()];
    for a in 0..decomp.len() {
        let class = layout.class_of_sub[a];
        for ref_side in Side::ALL {
            let geo_side = ref_side.rotated(layout.rotation_of_sub[a]);
            if decomp.facet(a, geo_side).kind != FacetKind::Boundary {
                continue;
            }
            let load = loads.side(geo_side);
            for p in 0..n {
                let e = layout.walk_ref_side(a, ref_side, p);
                let hard = load.is_some_and(|l| l.contains(edge_fraction(e.geo_pos, n)));
                let slot = &mut fixed[layout.class_cell(class, e.ref_cell)];
                let was_hard = *slot == Some(1.0);
                *slot = Some(if hard || was_hard { 1.0 } else { delta });
            }
        }
    }
    fixed
}

#[cfg(test)]
mod tests;
