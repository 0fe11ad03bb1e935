//! Removal of linearly dependent constraint rows.
//!
//! Rows are normalized and the Gram matrix `A A^T` is factored as `L D L^T`
//! in a fill-reducing order. A pivot that vanishes relative to its diagonal
//! marks a row lying in the span of the rows eliminated before it; that row is
//! dropped and its column of `L` zeroed. The same factor, applied to the
//! right-hand side, yields the residual of every dropped row against the kept
//! ones.

use std::collections::HashMap;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::amd;
use faer::sparse::SymbolicSparseColMatRef;

use super::{AssemblyError, ConstraintSystem, RowLabel};
use crate::sparse::CsrMatrix;

/// Full-row-rank constraint set.
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub a: CsrMatrix,
    pub b: Vec<f64>,
    pub labels: Vec<RowLabel>,
    /// Original indices of the kept rows, increasing.
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
}

impl ReducedSystem {
    pub fn n_rows(&self) -> usize {
        self.b.len()
    }
}

/// Drops dependent rows. `pivot_tol` bounds the relative Gram pivot below
/// which a row counts as dependent.
pub fn reduce_rank(sys: &ConstraintSystem, pivot_tol: f64) -> Result<ReducedSystem, AssemblyError> {
    let m = sys.n_rows();
    let mut dropped = Vec::new();
    let mut candidates = Vec::with_capacity(m);
    let mut norm = vec![0.0; m];
    let mut seen: HashMap<Vec<(usize, u64)>, (usize, u64)> = HashMap::new();
    for i in 0..m {
        let (idx, val) = sys.a.row(i);
        let nrm = val.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 {
            if sys.b[i] != 0.0 {
                return Err(AssemblyError::InconsistentSystem { row: i, residual: sys.b[i] });
            }
            dropped.push(i);
            continue;
        }
        norm[i] = nrm;
        // Sign-normalized copy for exact duplicate detection.
        let s = if val[0] < 0.0 { -1.0 } else { 1.0 };
        let key: Vec<(usize, u64)> = idx.iter().zip(val).map(|(&c, &v)| (c, (s * v / nrm).to_bits())).collect();
        let rhs = s * sys.b[i] / nrm;
        match seen.get(&key) {
            Some(&(first, bits)) => {
                let other = f64::from_bits(bits);
                let scale = 1.0 + rhs.abs().max(other.abs());
                if (rhs - other).abs() > 1e-12 * scale {
                    return Err(AssemblyError::InconsistentSystem { row: i.max(first), residual: rhs - other });
                }
                dropped.push(i);
            }
            None => {
                seen.insert(key, (i, rhs.to_bits()));
                candidates.push(i);
            }
        }
    }
    drop(seen);

    let gram = gram_lower(&sys.a, &candidates, &norm);
    let n = candidates.len();
    let perm = amd_order(&gram, n);
    let factor = GramLdl::factor(&gram, &perm, pivot_tol);

    // Forward solve on the permuted, normalized right-hand side.
    let mut y: Vec<f64> = perm.iter().map(|&i| sys.b[candidates[i]] / norm[candidates[i]]).collect();
    let mut mag: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    for j in 0..n {
        let yj = y[j];
        for p in factor.col_ptr[j]..factor.col_ptr[j + 1] {
            let r = factor.row_idx[p] as usize;
            let t = factor.values[p] * yj;
            y[r] -= t;
            mag[r] += t.abs();
        }
    }
    let b_scale = perm.iter().map(|&i| (sys.b[candidates[i]] / norm[candidates[i]]).abs()).fold(0.0, f64::max);
    for k in 0..n {
        if factor.dropped[k] {
            let tol = 1e-9 * mag[k] + 1e-13 * b_scale;
            if y[k].abs() > tol {
                return Err(AssemblyError::InconsistentSystem { row: candidates[perm[k]], residual: y[k] });
            }
            dropped.push(candidates[perm[k]]);
        }
    }
    dropped.sort_unstable();
    let kept: Vec<usize> = {
        let mut is_dropped = vec![false; m];
        for &d in &dropped {
            is_dropped[d] = true;
        }
        (0..m).filter(|&i| !is_dropped[i]).collect()
    };
    log::debug!(
        "rank reduction: {} rows, {} kept, smallest kept pivot {:e}, largest dropped pivot {:e}",
        m,
        kept.len(),
        factor.min_kept,
        factor.max_dropped
    );
    Ok(ReducedSystem {
        a: sys.a.select_rows(&kept),
        b: kept.iter().map(|&i| sys.b[i]).collect(),
        labels: kept.iter().map(|&i| sys.labels[i]).collect(),
        kept,
        dropped,
    })
}

/// Lower triangle (with diagonal) of the normalized Gram matrix of the
/// selected rows, column major, rows sorted.
struct SymLower {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

fn gram_lower(a: &CsrMatrix, rows: &[usize], norm: &[f64]) -> SymLower {
    let n = rows.len();
    // Column lists of the selected rows, in local numbering.
    let mut count = vec![0usize; a.ncols + 1];
    for &i in rows {
        for &c in a.row(i).0 {
            count[c + 1] += 1;
        }
    }
    for c in 0..a.ncols {
        count[c + 1] += count[c];
    }
    let mut next = count.clone();
    let mut col_rows = vec![0usize; count[a.ncols]];
    let mut col_vals = vec![0.0; count[a.ncols]];
    for (li, &i) in rows.iter().enumerate() {
        let (idx, val) = a.row(i);
        for (&c, &v) in idx.iter().zip(val) {
            col_rows[next[c]] = li;
            col_vals[next[c]] = v / norm[i];
            next[c] += 1;
        }
    }
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx = Vec::new();
    let mut values = Vec::new();
    col_ptr.push(0);
    let mut acc = vec![0.0; n];
    let mut mark = vec![usize::MAX; n];
    let mut touched = Vec::new();
    for (lj, &j) in rows.iter().enumerate() {
        touched.clear();
        let (idx, val) = a.row(j);
        for (&c, &v) in idx.iter().zip(val) {
            let vj = v / norm[j];
            for p in count[c]..count[c + 1] {
                let li = col_rows[p];
                if li < lj {
                    continue;
                }
                if mark[li] != lj {
                    mark[li] = lj;
                    acc[li] = 0.0;
                    touched.push(li);
                }
                acc[li] += vj * col_vals[p];
            }
        }
        touched.sort_unstable();
        for &li in &touched {
            row_idx.push(li);
            values.push(acc[li]);
        }
        col_ptr.push(row_idx.len());
    }
    SymLower { col_ptr, row_idx, values }
}

/// Approximate minimum degree order; `perm[new] = old`.
fn amd_order(g: &SymLower, n: usize) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let nnz = g.row_idx.len();
    let sym = SymbolicSparseColMatRef::new_checked(n, n, &g.col_ptr, None, &g.row_idx);
    let mut perm = vec![0usize; n];
    let mut perm_inv = vec![0usize; n];
    let mut mem = MemBuffer::new(amd::order_scratch::<usize>(n, nnz));
    amd::order(&mut perm, &mut perm_inv, sym, amd::Control::default(), MemStack::new(&mut mem))
        .expect("amd ordering");
    perm
}

/// Unit lower factor stored by columns with rows strictly below the diagonal.
struct GramLdl {
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
    dropped: Vec<bool>,
    min_kept: f64,
    max_dropped: f64,
}

impl GramLdl {
    /// Up-looking factorization of `P G P^T` with `perm[new] = old`.
    fn factor(g: &SymLower, perm: &[usize], tol: f64) -> GramLdl {
        let n = perm.len();
        const NONE: usize = usize::MAX;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        // Upper triangle of the permuted matrix by columns: column k holds
        // entries (i, k) with i < k, plus the diagonal separately.
        let mut diag = vec![0.0; n];
        let mut cnt = vec![0usize; n + 1];
        for old_j in 0..n {
            for p in g.col_ptr[old_j]..g.col_ptr[old_j + 1] {
                let old_i = g.row_idx[p];
                let (i, j) = (inv[old_i], inv[old_j]);
                if i == j {
                    continue;
                }
                cnt[i.max(j) + 1] += 1;
            }
        }
        for k in 0..n {
            cnt[k + 1] += cnt[k];
        }
        let up_ptr = cnt.clone();
        let mut fill = cnt;
        let mut up_idx = vec![0usize; up_ptr[n]];
        let mut up_val = vec![0.0; up_ptr[n]];
        for old_j in 0..n {
            for p in g.col_ptr[old_j]..g.col_ptr[old_j + 1] {
                let old_i = g.row_idx[p];
                let (i, j) = (inv[old_i], inv[old_j]);
                if i == j {
                    diag[i] = g.values[p];
                    continue;
                }
                let (lo, hi) = (i.min(j), i.max(j));
                up_idx[fill[hi]] = lo;
                up_val[fill[hi]] = g.values[p];
                fill[hi] += 1;
            }
        }

        // Elimination tree and column counts.
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            for p in up_ptr[k]..up_ptr[k + 1] {
                let mut i = up_idx[p];
                while flag[i] != k {
                    if parent[i] == NONE {
                        parent[i] = k;
                    }
                    lnz[i] += 1;
                    flag[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + lnz[k];
        }
        let total = col_ptr[n];
        let mut row_idx = vec![0u32; total];
        let mut values = vec![0.0; total];
        let mut next_in_col: Vec<usize> = col_ptr[..n].to_vec();

        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut dropped = vec![false; n];
        let mut y = vec![0.0; n];
        let mut marked = vec![false; n];
        let mut stack: Vec<usize> = Vec::new();
        let mut path: Vec<usize> = Vec::new();
        let (mut min_kept, mut max_dropped) = (f64::INFINITY, 0.0f64);
        for k in 0..n {
            stack.clear();
            let mut dk = diag[k];
            for p in up_ptr[k]..up_ptr[k + 1] {
                let i = up_idx[p];
                y[i] += up_val[p];
                path.clear();
                let mut t = i;
                while t != NONE && t < k && !marked[t] {
                    marked[t] = true;
                    path.push(t);
                    t = parent[t];
                }
                stack.extend(path.iter().rev());
            }
            // The stack holds reversed topological paths; process from the top.
            for s in (0..stack.len()).rev() {
                let c = stack[s];
                let yc = y[c];
                let end = next_in_col[c];
                for p in col_ptr[c]..end {
                    y[row_idx[p] as usize] -= values[p] * yc;
                }
                let l = yc * dinv[c];
                row_idx[end] = k as u32;
                values[end] = l;
                dk -= yc * l;
                next_in_col[c] += 1;
                y[c] = 0.0;
                marked[c] = false;
            }
            d[k] = dk;
            if dk > tol * diag[k].abs().max(f64::MIN_POSITIVE) {
                dinv[k] = 1.0 / dk;
                min_kept = min_kept.min(dk);
            } else {
                dropped[k] = true;
                max_dropped = max_dropped.max(dk.abs());
            }
        }
        GramLdl { col_ptr, row_idx, values, dropped, min_kept, max_dropped }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn system(rows: Vec<Vec<(usize, f64)>>, b: Vec<f64>, ncols: usize) -> ConstraintSystem {
        let labels = (0..b.len()).map(|i| RowLabel::TorqueBalance { block: 0, cell: i }).collect();
        ConstraintSystem { a: CsrMatrix::from_rows(ncols, &rows), b, labels }
    }

    fn rank(m: &DMatrix<f64>) -> usize {
        let sv = m.clone().svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        sv.iter().filter(|&&s| s > 1e-10 * max).count()
    }

    #[test]
    fn duplicate_row_is_dropped() {
        let s = system(vec![vec![(0, 1.0), (1, 2.0)], vec![(0, 2.0), (1, 4.0)], vec![(2, 1.0)]], vec![1.0, 2.0, 0.0], 3);
        let r = reduce_rank(&s, 1e-10).unwrap();
        assert_eq!(r.kept, vec![0, 2]);
        assert_eq!(r.dropped, vec![1]);
    }

    #[test]
    fn inconsistent_duplicate_fails() {
        let s = system(vec![vec![(0, 1.0)], vec![(0, 1.0)]], vec![1.0, 2.0], 1);
        assert!(matches!(reduce_rank(&s, 1e-10), Err(AssemblyError::InconsistentSystem { .. })));
    }

    #[test]
    fn sum_dependency_detected() {
        // Third row is the sum of the first two.
        let s = system(
            vec![vec![(0, 1.0), (1, 1.0)], vec![(1, 1.0), (2, 1.0)], vec![(0, 1.0), (1, 2.0), (2, 1.0)], vec![(3, 1.0)]],
            vec![1.0, 2.0, 3.0, 4.0],
            4,
        );
        let r = reduce_rank(&s, 1e-10).unwrap();
        assert_eq!(r.n_rows(), 3);
        assert_eq!(rank(&r.a.to_dense()), 3);
        let bad = system(
            vec![vec![(0, 1.0), (1, 1.0)], vec![(1, 1.0), (2, 1.0)], vec![(0, 1.0), (1, 2.0), (2, 1.0)]],
            vec![1.0, 2.0, 3.5],
            3,
        );
        assert!(matches!(reduce_rank(&bad, 1e-10), Err(AssemblyError::InconsistentSystem { .. })));
    }

    #[test]
    fn full_rank_is_unchanged() {
        let s = system(vec![vec![(0, 1.0), (1, 1.0)], vec![(1, 1.0), (2, -1.0)], vec![(2, 3.0)]], vec![1.0, 2.0, 3.0], 3);
        let r = reduce_rank(&s, 1e-10).unwrap();
        assert_eq!(r.kept, vec![0, 1, 2]);
    }

    #[test]
    fn random_dependent_rows() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let ncols = 12;
            let mut rows: Vec<Vec<(usize, f64)>> = (0..6)
                .map(|_| (0..3).map(|_| (rng.random_range(0..ncols), rng.random_range(-1.0..1.0))).collect())
                .collect();
            let x: Vec<f64> = (0..ncols).map(|_| rng.random_range(-1.0..1.0)).collect();
            for _ in 0..4 {
                let (p, q) = (rng.random_range(0..6), rng.random_range(0..6));
                let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
                let mut r: Vec<(usize, f64)> = rows[p].iter().map(|&(c, v)| (c, a * v)).collect();
                r.extend(rows[q].iter().map(|&(c, v)| (c, b * v)));
                rows.push(r);
            }
            let a = CsrMatrix::from_rows(ncols, &rows);
            let b = a.mul_vec(&x);
            let s = system(rows, b, ncols);
            let full = rank(&s.a.to_dense());
            let r = reduce_rank(&s, 1e-10).unwrap();
            assert_eq!(r.n_rows(), full);
            assert_eq!(rank(&r.a.to_dense()), full);
        }
    }
}
