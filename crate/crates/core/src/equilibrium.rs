//! Compliance weights and the minimum-energy force state.
//!
//! The state minimizes `f^T M f` subject to `A f = b`. With the multiplier
//! form `f = M^-1 A^T lambda` this reduces to the symmetric positive definite
//! system `A M^-1 A^T lambda = b`, factored by sparse Cholesky on a pattern
//! analyzed once.

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::cholesky::llt::factor::LltRegularization;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side as FaerSide};
use thiserror::Error;

use crate::assembly::{DofLayout, ReducedSystem};
use crate::geometry::Side;
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("cholesky factorization failed: {0}")]
    FactorizationFailure(String),
    #[error("expected {expected} weights, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-positive compliance weight at unknown {0}")]
    NonPositiveWeight(usize),
}

/// Diagonal of `M`, one entry per scalar unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplianceWeights {
    pub diag: Vec<f64>,
}

/// Builds `M`: every slot adds `m * (A / 2) / v` of the cell owning its
/// edge, with `m` the copy count of the block and `A` the cell area.
pub fn build_weights(layout: &DofLayout, v: &[f64]) -> ComplianceWeights {
    let g = layout.grid;
    let mut diag = vec![0.0; layout.n_dofs()];
    for (bi, block) in layout.blocks.iter().enumerate() {
        let w0 = block.multiplicity() * 0.5 * block.cell_area();
        for cell in 0..g.n_cells() {
            let w = w0 / v[layout.class_cell(block.class, cell)];
            for side in Side::ALL {
                let e = g.cell_edge(cell, side);
                for comp in 0..2 {
                    diag[layout.slot_dof(layout.slot(bi, e, comp)).0] += w;
                }
            }
        }
    }
    ComplianceWeights { diag }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForceField {
    pub values: Vec<f64>,
    /// Infinity norm of `A f - b` over the reduced rows.
    pub residual: f64,
}

/// `f^T M f`.
pub fn elastic_energy(f: &[f64], weights: &ComplianceWeights) -> f64 {
    f.iter().zip(&weights.diag).map(|(x, m)| m * x * x).sum()
}

/// Cell stress in the reference frame of `block`: normal components from
/// the edge pairs carrying them, shear as the mean of the four tangential
/// components.
pub fn cell_stress(layout: &DofLayout, f: &[f64], block: usize, cell: usize) -> [[f64; 2]; 2] {
    let g = layout.grid;
    let e = |s| layout.edge_force(f, block, g.cell_edge(cell, s));
    let (r, l, t, b) = (e(Side::Right), e(Side::Left), e(Side::Top), e(Side::Bottom));
    let s11 = 0.5 * (r[0] + l[0]);
    let s22 = 0.5 * (t[1] + b[1]);
    let s12 = 0.25 * (r[1] + l[1] + t[0] + b[0]);
    [[s11, s12], [s12, s22]]
}

/// Stress coefficient per global cell: `sum over blocks of the class of
/// m * (A / 2) * |f|^2` over the cell edges, so that the elastic energy is
/// `sum s / v`.
pub fn cell_stress_coefficients(layout: &DofLayout, f: &[f64]) -> Vec<f64> {
    let g = layout.grid;
    let mut s = vec![0.0; layout.n_cells()];
    for (bi, block) in layout.blocks.iter().enumerate() {
        let w = block.multiplicity() * 0.5 * block.cell_area();
        for cell in 0..g.n_cells() {
            let mut acc = 0.0;
            for side in Side::ALL {
                let ef = layout.edge_force(f, bi, g.cell_edge(cell, side));
                acc += ef[0] * ef[0] + ef[1] * ef[1];
            }
            s[layout.class_cell(block.class, cell)] += w * acc;
        }
    }
    s
}

/// Reusable solver for `A M^-1 A^T lambda = b` on a fixed constraint set.
pub struct StateSolver {
    a: CsrMatrix,
    b: Vec<f64>,
    z_col_ptr: Vec<usize>,
    z_row_idx: Vec<usize>,
    z_values: Vec<f64>,
    /// (entry of Z, unknown, coefficient) with `Z[e] += coef / M[unknown]`.
    contrib: Vec<(u32, u32, f64)>,
    symbolic: SymbolicCholesky<usize>,
    l_values: Vec<f64>,
    mem: MemBuffer,
}

impl StateSolver {
    pub fn new(sys: &ReducedSystem) -> Result<StateSolver, SolveError> {
        let a = sys.a.clone();
        let m = a.nrows;
        let (cp, cr, cv) = a.transpose_parts();

        // Lower-triangular pattern of A A^T by columns.
        let mut z_col_ptr = Vec::with_capacity(m + 1);
        let mut z_row_idx = Vec::new();
        z_col_ptr.push(0);
        let mut mark = vec![usize::MAX; m];
        let mut touched = Vec::new();
        for j in 0..m {
            touched.clear();
            for &c in a.row(j).0 {
                for &i in &cr[cp[c]..cp[c + 1]] {
                    if i >= j && mark[i] != j {
                        mark[i] = j;
                        touched.push(i);
                    }
                }
            }
            touched.sort_unstable();
            z_row_idx.extend_from_slice(&touched);
            z_col_ptr.push(z_row_idx.len());
        }
        let mut contrib = Vec::new();
        for c in 0..a.ncols {
            let rows = &cr[cp[c]..cp[c + 1]];
            let vals = &cv[cp[c]..cp[c + 1]];
            for (p, (&ri, &vi)) in rows.iter().zip(vals).enumerate() {
                for (&rj, &vj) in rows[..=p].iter().zip(&vals[..=p]) {
                    let (i, j) = (ri.max(rj), ri.min(rj));
                    let col = &z_row_idx[z_col_ptr[j]..z_col_ptr[j + 1]];
                    let e = z_col_ptr[j] + col.binary_search(&i).expect("pattern entry");
                    contrib.push((e as u32, c as u32, vi * vj));
                }
            }
        }
        contrib.sort_unstable_by_key(|x| (x.0, x.1));
        let z_values = vec![0.0; z_row_idx.len()];
        let sym = SymbolicSparseColMatRef::new_checked(m, m, &z_col_ptr, None, &z_row_idx);
        let symbolic = factorize_symbolic_cholesky(
            sym,
            FaerSide::Lower,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| SolveError::FactorizationFailure(format!("{e:?}")))?;
        let l_values = vec![0.0; symbolic.len_val()];
        let req = StackReq::any_of(&[
            symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()),
            symbolic.solve_in_place_scratch::<f64>(1, Par::Seq),
        ]);
        Ok(StateSolver {
            a,
            b: sys.b.clone(),
            z_col_ptr,
            z_row_idx,
            z_values,
            contrib,
            symbolic,
            l_values,
            mem: MemBuffer::new(req),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.a.nrows
    }

    pub fn n_dofs(&self) -> usize {
        self.a.ncols
    }

    pub fn factor_nnz(&self) -> usize {
        self.l_values.len()
    }

    /// Minimum-energy forces for the given weights.
    pub fn solve(&mut self, weights: &ComplianceWeights) -> Result<ForceField, SolveError> {
        if weights.diag.len() != self.a.ncols {
            return Err(SolveError::DimensionMismatch { expected: self.a.ncols, got: weights.diag.len() });
        }
        let mut dinv = Vec::with_capacity(weights.diag.len());
        for (i, &w) in weights.diag.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(SolveError::NonPositiveWeight(i));
            }
            dinv.push(1.0 / w);
        }
        self.z_values.iter_mut().for_each(|z| *z = 0.0);
        for &(e, c, coef) in &self.contrib {
            self.z_values[e as usize] += coef * dinv[c as usize];
        }
        let m = self.a.nrows;
        let sym = SymbolicSparseColMatRef::new_checked(m, m, &self.z_col_ptr, None, &self.z_row_idx);
        let z = SparseColMatRef::new(sym, &self.z_values);
        let stack = MemStack::new(&mut self.mem);
        let llt = self
            .symbolic
            .factorize_numeric_llt(
                &mut self.l_values,
                z,
                FaerSide::Lower,
                LltRegularization::default(),
                Par::Seq,
                stack,
                Default::default(),
            )
            .map_err(|e| SolveError::FactorizationFailure(format!("{e:?}")))?;

        let b_norm = self.b.iter().fold(0.0f64, |x, y| x.max(y.abs()));
        let mut lambda = vec![0.0; m];
        let mut rhs = self.b.clone();
        let mut f = vec![0.0; self.a.ncols];
        let mut residual = f64::INFINITY;
        for _ in 0..4 {
            {
                let rhs_mat = MatMut::from_column_major_slice_mut(&mut rhs, m, 1);
                llt.solve_in_place_with_conj(Conj::No, rhs_mat, Par::Seq, MemStack::new(&mut self.mem));
            }
            for (l, d) in lambda.iter_mut().zip(&rhs) {
                *l += d;
            }
            f = self.a.tmul_vec(&lambda);
            for (x, d) in f.iter_mut().zip(&dinv) {
                *x *= d;
            }
            let af = self.a.mul_vec(&f);
            for (r, (x, b)) in rhs.iter_mut().zip(af.iter().zip(&self.b)) {
                *r = b - x;
            }
            let res = rhs.iter().fold(0.0f64, |x, y| x.max(y.abs()));
            let improved = res < 0.5 * residual;
            residual = res;
            if res <= 1e-14 * (1.0 + b_norm) || !improved {
                break;
            }
        }
        Ok(ForceField { values: f, residual })
    }
}

/// One-shot solve.
pub fn solve_state(sys: &ReducedSystem, weights: &ComplianceWeights) -> Result<ForceField, SolveError> {
    StateSolver::new(sys)?.solve(weights)
}

/// Von Mises equivalent stress of a plane stress tensor.
pub fn von_mises(s: [[f64; 2]; 2]) -> f64 {
    let (a, b, c) = (s[0][0], s[1][1], s[0][1]);
    (a * a - a * b + b * b + 3.0 * c * c).max(0.0).sqrt()
}
