//! Slow dense reference implementations for tests.
//!
//! [`GeometricOracle`] enumerates the constraints from scratch on the placed
//! subdomains, in the global frame, with one force pair per geometric edge.
//! It only reads facet classification and periodic line-ups from the
//! decomposition; edge matching is done by brute-force coordinate comparison.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::assembly::{LoadSpec, SideLoad};
use crate::decomp::{Decomposition, SubdomainSpec};
use crate::geometry::{Rect, Rotation, Side};
use crate::sparse::CsrMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("constraints are inconsistent (residual {0:e})")]
    Inconsistent(f64),
    #[error("geometric edge of subdomain {sub} has no partner")]
    UnmatchedEdge { sub: usize },
    #[error("loaded side {0:?} has no loaded edge on some facet")]
    NoLoadedEdge(Side),
    #[error("dimension mismatch")]
    Dimensions,
}

/// `min 1/2 f^T M f` subject to `A f = b` with diagonal `M`.
#[derive(Clone, Debug)]
pub struct DenseSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub m: DVector<f64>,
}

impl DenseSystem {
    pub fn from_sparse(a: &CsrMatrix, b: &[f64], m: &[f64]) -> DenseSystem {
        DenseSystem { a: a.to_dense(), b: DVector::from_column_slice(b), m: DVector::from_column_slice(m) }
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        let sv = self.a.clone().svd(false, false).singular_values;
        let max = sv.iter().cloned().fold(0.0, f64::max);
        sv.iter().filter(|&&s| s > rel_tol * max).count()
    }
}

/// Minimizer and `1/2 f^T M f` through the pseudo-inverse of the full KKT
/// matrix, so redundant rows need no special treatment.
pub fn dense_min_energy(sys: &DenseSystem) -> Result<(DVector<f64>, f64), OracleError> {
    let (m, n) = sys.a.shape();
    if sys.b.len() != m || sys.m.len() != n {
        return Err(OracleError::Dimensions);
    }
    let mut kkt = DMatrix::zeros(n + m, n + m);
    for i in 0..n {
        kkt[(i, i)] = sys.m[i];
    }
    kkt.view_mut((n, 0), (m, n)).copy_from(&sys.a);
    kkt.view_mut((0, n), (n, m)).copy_from(&sys.a.transpose());
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(n, m).copy_from(&sys.b);

    let svd = kkt.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max();
    let mut x = svd.solve(&rhs, eps).map_err(|_| OracleError::Dimensions)?;
    // Refinement against round-off in the pseudo-inverse.
    for _ in 0..3 {
        let r = &rhs - &kkt * &x;
        x += svd.solve(&r, eps).map_err(|_| OracleError::Dimensions)?;
    }
    let f = x.rows(0, n).into_owned();
    let residual = (&sys.a * &f - &sys.b).amax();
    let scale = 1.0 + sys.b.amax();
    if residual > 1e-10 * scale {
        return Err(OracleError::Inconsistent(residual));
    }
    let energy = 0.5 * f.iter().zip(sys.m.iter()).map(|(x, w)| w * x * x).sum::<f64>();
    Ok((f, energy))
}

/// Grid search with `n_points` intervals, then golden section on the
/// bracket around the best grid point.
pub fn scan_minimize(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n_points: usize) -> f64 {
    let step = (hi - lo) / n_points as f64;
    let mut best = (lo, f(lo));
    for k in 1..=n_points {
        let x = if k == n_points { hi } else { lo + k as f64 * step };
        let y = f(x);
        if y < best.1 {
            best = (x, y);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if b - a <= 1e-15 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [(mid, f(mid)), best].into_iter().min_by(|x, y| x.1.total_cmp(&y.1)).unwrap().0
}

#[derive(Copy, Clone, Debug)]
struct Segment {
    vertical: bool,
    /// Coordinate of the carrying line.
    at: f64,
    lo: f64,
    hi: f64,
}

/// Dense constraint builder on the placed subdomains.
pub struct GeometricOracle {
    pub n: usize,
    /// First unknown of every subdomain.
    pub offset: Vec<usize>,
    pub n_dofs: usize,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    decomp: Decomposition,
}

impl GeometricOracle {
    fn edges_per_sub(n: usize) -> usize {
        2 * n * (n + 1)
    }

    fn vertical(&self, i: usize, j: usize) -> usize {
        j * (self.n + 1) + i
    }

    fn horizontal(&self, i: usize, j: usize) -> usize {
        self.n * (self.n + 1) + j * self.n + i
    }

    /// Unknown of component `comp` of the traction on the `+x`/`+y` normal
    /// of local edge `e` of subdomain `sub`.
    pub fn dof(&self, sub: usize, e: usize, comp: usize) -> usize {
        self.offset[sub] + 2 * e + comp
    }

    fn segment(&self, sub: usize, e: usize) -> Segment {
        let r = self.decomp.subdomains[sub].rect;
        let n = self.n;
        let (hx, hy) = (r.width() / n as f64, r.height() / n as f64);
        if e < n * (n + 1) {
            let (i, j) = (e % (n + 1), e / (n + 1));
            let y = r.y0 + j as f64 * hy;
            Segment { vertical: true, at: r.x0 + i as f64 * hx, lo: y, hi: y + hy }
        } else {
            let k = e - n * (n + 1);
            let (i, j) = (k % n, k / n);
            let x = r.x0 + i as f64 * hx;
            Segment { vertical: false, at: r.y0 + j as f64 * hy, lo: x, hi: x + hx }
        }
    }

    /// Local edges along one side of a subdomain in increasing coordinate.
    fn side_edges(&self, side: Side) -> Vec<usize> {
        let n = self.n;
        (0..n)
            .map(|q| match side {
                Side::Left => self.vertical(0, q),
                Side::Right => self.vertical(n, q),
                Side::Bottom => self.horizontal(q, 0),
                Side::Top => self.horizontal(q, n),
            })
            .collect()
    }

    pub fn build(decomp: &Decomposition, loads: &LoadSpec, n: usize) -> Result<GeometricOracle, OracleError> {
        let per = 2 * Self::edges_per_sub(n);
        let offset: Vec<usize> = (0..decomp.len()).map(|a| a * per).collect();
        let mut o = GeometricOracle {
            n,
            offset,
            n_dofs: decomp.len() * per,
            rows: Vec::new(),
            rhs: Vec::new(),
            decomp: decomp.clone(),
        };
        o.cell_rows();
        o.interface_rows()?;
        o.periodic_rows();
        o.boundary_rows(loads)?;
        Ok(o)
    }

    fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    fn cell_rows(&mut self) {
        let n = self.n;
        for a in 0..self.decomp.len() {
            let r = self.decomp.subdomains[a].rect;
            let (hx, hy) = (r.width() / n as f64, r.height() / n as f64);
            for j in 0..n {
                for i in 0..n {
                    let (l, rr) = (self.vertical(i, j), self.vertical(i + 1, j));
                    let (b, t) = (self.horizontal(i, j), self.horizontal(i, j + 1));
                    for c in 0..2 {
                        let row = vec![
                            (self.dof(a, rr, c), hy),
                            (self.dof(a, l, c), -hy),
                            (self.dof(a, t, c), hx),
                            (self.dof(a, b, c), -hx),
                        ];
                        self.push(row, 0.0);
                    }
                    // Symmetry of the stress: sigma_12 = sigma_21.
                    let row = vec![
                        (self.dof(a, rr, 1), 1.0),
                        (self.dof(a, l, 1), 1.0),
                        (self.dof(a, t, 0), -1.0),
                        (self.dof(a, b, 0), -1.0),
                    ];
                    self.push(row, 0.0);
                }
            }
        }
    }

    /// Perimeter edges of every subdomain not on the bounding box.
    fn interface_rows(&mut self) -> Result<(), OracleError> {
        let bb = self.decomp.bounding_box;
        let tol = 1e-12 * bb.diameter().max(1.0);
        let near = |x: f64, y: f64| (x - y).abs() <= tol;
        let mut edges = Vec::new();
        for a in 0..self.decomp.len() {
            for side in Side::ALL {
                for e in self.side_edges(side) {
                    let s = self.segment(a, e);
                    let on_box = if s.vertical { near(s.at, bb.x0) || near(s.at, bb.x1) } else { near(s.at, bb.y0) || near(s.at, bb.y1) };
                    if !on_box {
                        edges.push((a, e, s));
                    }
                }
            }
        }
        let mut covered = vec![false; edges.len()];
        for p in 0..edges.len() {
            let (a, ea, sa) = edges[p];
            let mut inside = Vec::new();
            for (q, &(b, eb, sb)) in edges.iter().enumerate() {
                if a == b || sa.vertical != sb.vertical || !near(sa.at, sb.at) {
                    continue;
                }
                let (la, lb) = (sa.hi - sa.lo, sb.hi - sb.lo);
                if near(sa.lo, sb.lo) && near(sa.hi, sb.hi) {
                    covered[p] = true;
                    if p < q {
                        for c in 0..2 {
                            let row = vec![(self.dof(a, ea, c), 1.0), (self.dof(b, eb, c), -1.0)];
                            self.push(row, 0.0);
                        }
                    }
                } else if lb < la && sb.lo >= sa.lo - tol && sb.hi <= sa.hi + tol {
                    inside.push((b, eb, lb));
                    covered[q] = true;
                }
            }
            if !inside.is_empty() {
                covered[p] = true;
                let la = sa.hi - sa.lo;
                for c in 0..2 {
                    let mut row = vec![(self.dof(a, ea, c), la)];
                    for &(b, eb, lb) in &inside {
                        row.push((self.dof(b, eb, c), -lb));
                    }
                    self.push(row, 0.0);
                }
            }
        }
        match covered.iter().position(|&c| !c) {
            Some(k) => Err(OracleError::UnmatchedEdge { sub: edges[k].0 }),
            None => Ok(()),
        }
    }

    /// Copies in one periodic line-up carry identical forces.
    fn periodic_rows(&mut self) {
        let per = Self::edges_per_sub(self.n);
        for group in self.decomp.periodic_lineups() {
            let first = group[0];
            for &other in &group[1..] {
                for e in 0..per {
                    for c in 0..2 {
                        let row = vec![(self.dof(other, e, c), 1.0), (self.dof(first, e, c), -1.0)];
                        self.push(row, 0.0);
                    }
                }
            }
        }
    }

    fn boundary_rows(&mut self, loads: &LoadSpec) -> Result<(), OracleError> {
        let bb = self.decomp.bounding_box;
        let tol = 1e-12 * bb.diameter().max(1.0);
        let n = self.n;
        for a in 0..self.decomp.len() {
            let r = self.decomp.subdomains[a].rect;
            for side in Side::ALL {
                let (line, bline, sign) = match side {
                    Side::Top => (r.y1, bb.y1, 1.0),
                    Side::Bottom => (r.y0, bb.y0, -1.0),
                    Side::Left => (r.x0, bb.x0, -1.0),
                    Side::Right => (r.x1, bb.x1, 1.0),
                };
                if (line - bline).abs() > tol {
                    continue;
                }
                let load = loads.side(side);
                let loaded: Vec<bool> = (0..n)
                    .map(|q| {
                        let t = (q as f64 + 0.5) / n as f64;
                        load.is_some_and(|l| l.intervals.iter().any(|&[lo, hi]| lo - 1e-12 <= t && t <= hi + 1e-12))
                    })
                    .collect();
                let count = loaded.iter().filter(|&&x| x).count();
                let traction = load.map_or([0.0, 0.0], |l| l.traction);
                if count == 0 && traction != [0.0, 0.0] {
                    return Err(OracleError::NoLoadedEdge(side));
                }
                let scale = if count == 0 { 0.0 } else { n as f64 / count as f64 };
                for (q, e) in self.side_edges(side).into_iter().enumerate() {
                    for c in 0..2 {
                        let value = if loaded[q] { sign * scale * traction[c] } else { 0.0 };
                        self.push(vec![(self.dof(a, e, c), 1.0)], value);
                    }
                }
            }
        }
        Ok(())
    }

    /// Reference cell (row-major, `j * n + i`) holding the geometric cell
    /// `(i, j)` of subdomain `sub`, found by rotating its center back.
    pub fn reference_cell(&self, sub: usize, i: usize, j: usize) -> usize {
        let s = &self.decomp.subdomains[sub];
        let r = s.rect;
        let n = self.n as f64;
        let (hx, hy) = (r.width() / n, r.height() / n);
        let mut d = [r.x0 + (i as f64 + 0.5) * hx - 0.5 * (r.x0 + r.x1), r.y0 + (j as f64 + 0.5) * hy - 0.5 * (r.y0 + r.y1)];
        for _ in 0..s.rotation.quarter_turns() {
            d = [d[1], -d[0]];
        }
        let (w, h) = s.reference_dims();
        let ri = ((d[0] + 0.5 * w) / (w / n)).floor() as usize;
        let rj = ((d[1] + 0.5 * h) / (h / n)).floor() as usize;
        rj * self.n + ri
    }

    /// Dense system with densities given per (subdomain, reference cell).
    pub fn system(&self, density: impl Fn(usize, usize) -> f64) -> DenseSystem {
        let n = self.n;
        let mut a = DMatrix::zeros(self.rows.len(), self.n_dofs);
        for (k, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                a[(k, c)] += v;
            }
        }
        let mut m = DVector::zeros(self.n_dofs);
        for sub in 0..self.decomp.len() {
            let area = self.decomp.subdomains[sub].rect.area() / (n * n) as f64;
            for j in 0..n {
                for i in 0..n {
                    let w = 0.5 * area / density(sub, self.reference_cell(sub, i, j));
                    for e in [self.vertical(i, j), self.vertical(i + 1, j), self.horizontal(i, j), self.horizontal(i, j + 1)] {
                        for c in 0..2 {
                            m[self.dof(sub, e, c)] += w;
                        }
                    }
                }
            }
        }
        DenseSystem { a, b: DVector::from_column_slice(&self.rhs), m }
    }

    /// Minimal `f^T M f`, i.e. twice the oracle's half energy.
    pub fn min_energy(&self, density: impl Fn(usize, usize) -> f64) -> Result<f64, OracleError> {
        dense_min_energy(&self.system(density)).map(|(_, e)| 2.0 * e)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }
}

/// Small random problem for equivalence tests.
#[derive(Clone, Debug)]
pub struct Instance {
    pub decomp: Decomposition,
    pub loads: LoadSpec,
    pub n: usize,
    /// Density per reference id, indexed by reference cell.
    pub density: BTreeMap<u32, Vec<f64>>,
}

impl Instance {
    pub fn density_of(&self, sub: usize, ref_cell: usize) -> f64 {
        self.density[&self.decomp.subdomains[sub].reference][ref_cell]
    }
}

/// Symmetric about the facet midpoint, so every facet resultant acts at
/// its center, and each set holds an edge midpoint for `n` in {2, 4}.
const SYMMETRIC_INTERVALS: [&[[f64; 2]]; 4] =
    [&[[0.0, 1.0]], &[[0.2, 0.8]], &[[0.1, 0.4], [0.6, 0.9]], &[[0.2, 0.4], [0.6, 0.8]]];

/// Draws an instance from uniform samples in `[0, 1)`: one square, two
/// matching squares, or a unit square whose right side splits into two
/// half squares; random rotations; an equilibrated random load.
pub fn sample_instance(u: &mut dyn FnMut() -> f64, delta: f64) -> Instance {
    let pick = |u: &mut dyn FnMut() -> f64, k: usize| ((u() * k as f64) as usize).min(k - 1);
    let n = [2, 4][pick(u, 2)];
    let rot = |u: &mut dyn FnMut() -> f64| Rotation::new(pick(u, 4) as i64);
    let shape = pick(u, 3);
    let (bbox, subs) = match shape {
        0 => (Rect::new(0.0, 0.0, 1.0, 1.0), vec![(Rect::new(0.0, 0.0, 1.0, 1.0), 0, rot(u))]),
        1 => {
            let r1 = pick(u, 2) as u32;
            (
                Rect::new(0.0, 0.0, 2.0, 1.0),
                vec![(Rect::new(0.0, 0.0, 1.0, 1.0), 0, rot(u)), (Rect::new(1.0, 0.0, 2.0, 1.0), r1, rot(u))],
            )
        }
        _ => {
            let r2 = 1 + pick(u, 2) as u32;
            (
                Rect::new(0.0, 0.0, 1.5, 1.0),
                vec![
                    (Rect::new(0.0, 0.0, 1.0, 1.0), 0, rot(u)),
                    (Rect::new(1.0, 0.0, 1.5, 0.5), 1, rot(u)),
                    (Rect::new(1.0, 0.5, 1.5, 1.0), r2, rot(u)),
                ],
            )
        }
    };
    let specs = subs
        .into_iter()
        .enumerate()
        .map(|(i, (rect, reference, rotation))| SubdomainSpec { id: i as u32, rect, reference, rotation })
        .collect();
    let mut decomp = Decomposition::new(bbox, specs).expect("sample layout is valid");
    let global = rot(u);
    if global.quarter_turns() != 0 {
        decomp = decomp.rotated(global).expect("rotation keeps validity");
    }

    let val = |u: &mut dyn FnMut() -> f64| 2.0 * u() - 1.0;
    let (p, q, r) = (val(u), val(u), val(u));
    let mut loads = LoadSpec::default();
    let tractions = [(Side::Top, [p, q]), (Side::Bottom, [-p, -q]), (Side::Left, [r, -p]), (Side::Right, [-r, p])];
    // Opposite sides share one interval set: a periodic line-up spanning the
    // box identifies their edges.
    let horizontal = SYMMETRIC_INTERVALS[pick(u, SYMMETRIC_INTERVALS.len())].to_vec();
    let vertical = SYMMETRIC_INTERVALS[pick(u, SYMMETRIC_INTERVALS.len())].to_vec();
    for (side, t) in tractions {
        let intervals = if side.is_horizontal() { horizontal.clone() } else { vertical.clone() };
        *loads.side_mut(side) = Some(SideLoad::new(t, intervals));
    }

    let mut density = BTreeMap::new();
    for s in &decomp.subdomains {
        density.entry(s.reference).or_insert_with(|| (0..n * n).map(|_| delta + (1.0 - delta) * u()).collect());
    }
    Instance { decomp, loads, n, density }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::uniform_grid;

    #[test]
    fn projection_example() {
        let sys = DenseSystem {
            a: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            b: DVector::from_column_slice(&[1.0]),
            m: DVector::from_element(2, 1.0),
        };
        let (f, e) = dense_min_energy(&sys).unwrap();
        assert!((f[0] - 1.0).abs() < 1e-14 && f[1].abs() < 1e-14);
        assert!((e - 0.5).abs() < 1e-14);
    }

    #[test]
    fn duplicate_row_changes_nothing() {
        let sys = DenseSystem {
            a: DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0]),
            b: DVector::from_column_slice(&[2.0, 2.0]),
            m: DVector::from_column_slice(&[1.0, 3.0, 1.0]),
        };
        let single = DenseSystem { a: sys.a.rows(0, 1).into_owned(), b: sys.b.rows(0, 1).into_owned(), m: sys.m.clone() };
        let (_, e2) = dense_min_energy(&sys).unwrap();
        let (_, e1) = dense_min_energy(&single).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
        // f = (1.5, 0.5, 0): 0.5 * (2.25 + 0.75)
        assert!((e1 - 1.5).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_is_detected() {
        let sys = DenseSystem {
            a: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0]),
            b: DVector::from_column_slice(&[1.0, 2.0]),
            m: DVector::from_element(2, 1.0),
        };
        assert!(matches!(dense_min_energy(&sys), Err(OracleError::Inconsistent(_))));
    }

    #[test]
    fn minimizer_beats_random_feasible_points() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_fn(10, 24, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
        let m = DVector::from_fn(24, |_, _| rng.random_range(0.5..2.0));
        let sys = DenseSystem { a: a.clone(), b, m: m.clone() };
        let (f, e) = dense_min_energy(&sys).unwrap();
        let svd = a.clone().svd(true, true);
        let v_t = svd.v_t.unwrap();
        for _ in 0..100 {
            // f + kernel direction stays feasible.
            let z = DVector::from_fn(24, |_, _| rng.random_range(-1.0..1.0));
            let proj = v_t.transpose() * (&v_t * &z);
            let g = &f + (&z - proj);
            assert!((&a * &g - &sys.b).amax() < 1e-10);
            let eg = 0.5 * g.iter().zip(m.iter()).map(|(x, w)| w * x * x).sum::<f64>();
            assert!(e <= eg + 1e-12);
        }
    }

    #[test]
    fn scan_finds_parabola_minimum() {
        let x = scan_minimize(|v| v * v, -1.0, 1.0, 1_000_000);
        assert!(x.abs() < 1e-6);
        let y = scan_minimize(|v| (v - 0.3).powi(2) + 1.0, -1.0, 1.0, 1000);
        assert!((y - 0.3).abs() < 1e-7);
    }

    #[test]
    fn uniform_compression_oracle_energy() {
        let d = uniform_grid(1, 1);
        let loads = LoadSpec {
            top: Some(SideLoad::new([0.0, -1.0], vec![[0.0, 1.0]])),
            bottom: Some(SideLoad::new([0.0, 1.0], vec![[0.0, 1.0]])),
            ..LoadSpec::default()
        };
        let o = GeometricOracle::build(&d, &loads, 4).unwrap();
        let e = o.min_energy(|_, _| 1.0).unwrap();
        assert!((e - 1.0).abs() < 1e-10, "{e}");
    }

    #[test]
    fn reference_cell_inverts_rotation() {
        let text = r#"{"bounding_box": {"x0":0,"y0":0,"x1":1,"y1":1},
            "subdomains": [{"id":0,"rect":{"x0":0,"y0":0,"x1":1,"y1":1},"reference":0,"rotation":1}]}"#;
        let d = Decomposition::from_json(text).unwrap();
        let o = GeometricOracle::build(&d, &LoadSpec::default(), 3).unwrap();
        // Reference cell (0, 0) turns a quarter counter-clockwise to (2, 0).
        assert_eq!(o.reference_cell(0, 2, 0), 0);
        assert_eq!(o.reference_cell(0, 2, 2), 2);
    }
}
