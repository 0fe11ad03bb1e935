use super::*;
use crate::decomp::{uniform_grid, Decomposition, SubdomainSpec};
use crate::equilibrium::{build_weights, solve_state};
use crate::geometry::Rect;
use crate::oracle::{sample_instance, DenseSystem, GeometricOracle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sub(id: u32, r: Rect, reference: u32, k: i64) -> SubdomainSpec {
    SubdomainSpec { id, rect: r, reference, rotation: Rotation::new(k) }
}

fn two_squares(ref_b: u32, k_b: i64) -> Decomposition {
    Decomposition::new(
        Rect::new(0.0, 0.0, 2.0, 1.0),
        vec![sub(0, Rect::new(0.0, 0.0, 1.0, 1.0), 0, 0), sub(1, Rect::new(1.0, 0.0, 2.0, 1.0), ref_b, k_b)],
    )
    .unwrap()
}

/// Unit square whose right side splits into two half squares.
fn split_layout(k_fine: [i64; 2]) -> Decomposition {
    Decomposition::new(
        Rect::new(0.0, 0.0, 1.5, 1.0),
        vec![
            sub(0, Rect::new(0.0, 0.0, 1.0, 1.0), 0, 0),
            sub(1, Rect::new(1.0, 0.0, 1.5, 0.5), 1, k_fine[0]),
            sub(2, Rect::new(1.0, 0.5, 1.5, 1.0), 2, k_fine[1]),
        ],
    )
    .unwrap()
}

fn uniaxial(top: f64) -> LoadSpec {
    LoadSpec {
        top: Some(SideLoad::new([0.0, top], vec![[0.0, 1.0]])),
        bottom: Some(SideLoad::new([0.0, -top], vec![[0.0, 1.0]])),
        ..LoadSpec::default()
    }
}

/// Sets the geometric force on geometric edge `q` of `geo_side` of `sub`.
fn set_geo_force(layout: &DofLayout, f: &mut [f64], sub: usize, geo_side: Side, q: usize, value: [f64; 2]) {
    let e = layout.geo_side_edge(sub, geo_side, q);
    let r = layout.transfer(sub, e.ref_edge).inverse().apply(value);
    for (c, &x) in r.iter().enumerate() {
        let (d, s) = layout.slot_dof(layout.slot(layout.block_of_sub[sub], e.ref_edge, c));
        f[d] = s * x;
    }
}

fn geo_force(layout: &DofLayout, f: &[f64], sub: usize, geo_side: Side, q: usize) -> [f64; 2] {
    let e = layout.geo_side_edge(sub, geo_side, q);
    let r = layout.edge_force(f, layout.block_of_sub[sub], e.ref_edge);
    layout.transfer(sub, e.ref_edge).apply(r)
}

#[test]
fn single_subdomain_dof_count() {
    for n in 1..6 {
        let l = DofLayout::build(&uniform_grid(1, 1), n).unwrap();
        assert_eq!(l.n_dofs(), 4 * n * (n + 1));
    }
    assert_eq!(DofLayout::build(&uniform_grid(1, 1), 2).unwrap().n_dofs(), 24);
}

#[test]
fn matched_pair_merges_shared_edges() {
    // Two shared edges with two components each.
    for k in 0..4 {
        let l = DofLayout::build(&two_squares(1, k), 2).unwrap();
        assert_eq!(l.n_dofs(), 24 + 24 - 2 * 2, "rotation {k}");
    }
}

#[test]
fn periodic_grid_collapses_to_one_cell() {
    let l = DofLayout::build(&uniform_grid(3, 3), 2).unwrap();
    assert_eq!(l.blocks.len(), 1);
    assert_eq!(l.n_dofs(), 16);
}

#[test]
fn zero_force_satisfies_interior_rows() {
    let l = DofLayout::build(&split_layout([1, 3]), 3).unwrap();
    let sys = ConstraintSystem::interior(&l);
    assert!(sys.residual(&vec![0.0; l.n_dofs()]).iter().all(|&r| r == 0.0));
}

#[test]
fn uniform_uniaxial_field_is_balanced() {
    let d = uniform_grid(1, 1);
    let l = DofLayout::build(&d, 4).unwrap();
    let g = l.grid;
    let mut f = vec![0.0; l.n_dofs()];
    for e in 0..g.n_edges() {
        if !g.is_vertical(e) {
            let (dof, s) = l.slot_dof(l.slot(0, e, 1));
            f[dof] = -s;
        }
    }
    let sys = ConstraintSystem::interior(&l);
    assert!(sys.residual(&f).iter().all(|&r| r.abs() < 1e-15));
}

#[test]
fn force_rows_match_direct_cell_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let l = DofLayout::build(&uniform_grid(1, 1), 4).unwrap();
    let g = l.grid;
    let f: Vec<f64> = (0..l.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sys = ConstraintSystem::interior(&l);
    let res = sys.residual(&f);
    let h = 0.25;
    for (row, label) in sys.labels.iter().enumerate() {
        let RowLabel::ForceBalance { cell, comp, .. } = *label else { continue };
        let (i, j) = g.cell_ij(cell);
        let c = comp as usize;
        let val = |e: usize| l.edge_force(&f, 0, e)[c];
        let direct = h * (val(g.vertical(i + 1, j)) - val(g.vertical(i, j)))
            + h * (val(g.horizontal(i, j + 1)) - val(g.horizontal(i, j)));
        assert!((res[row] - direct).abs() < 1e-14);
    }
}

#[test]
fn symmetric_shear_satisfies_torque_and_a_kick_breaks_it() {
    let l = DofLayout::build(&uniform_grid(1, 1), 3).unwrap();
    let g = l.grid;
    let mut f = vec![0.0; l.n_dofs()];
    for e in 0..g.n_edges() {
        let comp = if g.is_vertical(e) { 1 } else { 0 };
        let (d, s) = l.slot_dof(l.slot(0, e, comp));
        f[d] = s;
    }
    let sys = ConstraintSystem::interior(&l);
    let torque: Vec<usize> = (0..sys.n_rows())
        .filter(|&r| matches!(sys.labels[r], RowLabel::TorqueBalance { .. }))
        .collect();
    assert_eq!(torque.len(), 9);
    let res = sys.residual(&f);
    assert!(torque.iter().all(|&r| res[r].abs() < 1e-15));
    // Kick the right edge of the center cell.
    let e = g.cell_edge(g.cell(1, 1), Side::Right);
    let (d, s) = l.slot_dof(l.slot(0, e, 1));
    f[d] += s;
    let res = sys.residual(&f);
    let row = torque.iter().find(|&&r| sys.labels[r] == RowLabel::TorqueBalance { block: 0, cell: g.cell(1, 1) });
    assert!((res[*row.unwrap()] - 1.0).abs() < 1e-15);
}

#[test]
fn matched_edges_agree_in_the_global_frame() {
    // Shared unknowns make every matched edge pair agree for any vector.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..4 {
        let d = two_squares(1, k);
        let l = DofLayout::build(&d, 3).unwrap();
        let f: Vec<f64> = (0..l.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        for q in 0..3 {
            let a = geo_force(&l, &f, 0, Side::Right, q);
            let b = geo_force(&l, &f, 1, Side::Left, q);
            assert_eq!(a, b, "rotation {k}, position {q}");
        }
    }
}

#[test]
fn rotated_reference_force_turns_with_the_copy() {
    assert_eq!(edge_transfer(Rotation::new(1), true).apply([1.0, 0.0]), [0.0, 1.0]);
    let d = two_squares(1, 1);
    let l = DofLayout::build(&d, 2).unwrap();
    // Reference right edge of the quarter-turned copy is its geometric top.
    let e = l.walk_ref_side(1, Side::Right, 0);
    assert_eq!(e.geo_side, Side::Top);
}

#[test]
fn branch_coupling_averages_fine_forces() {
    for k in [[0, 0], [1, 2], [3, 1]] {
        let d = split_layout(k);
        let l = DofLayout::build(&d, 2).unwrap();
        let sys = ConstraintSystem::coupling(&l, &d);
        let mut f = vec![0.0; l.n_dofs()];
        // Coarse edge 0 meets fine edges 0 and 1 of the lower half square.
        set_geo_force(&l, &mut f, 1, Side::Left, 0, [1.0, 0.0]);
        set_geo_force(&l, &mut f, 1, Side::Left, 1, [3.0, 0.0]);
        set_geo_force(&l, &mut f, 0, Side::Right, 0, [2.0, 0.0]);
        let rows: Vec<usize> = (0..sys.n_rows())
            .filter(|&r| matches!(sys.labels[r], RowLabel::CouplingSplit { sub: 0, pos: 0, .. }))
            .collect();
        assert_eq!(rows.len(), 2);
        let res = sys.residual(&f);
        assert!(rows.iter().all(|&r| res[r].abs() < 1e-15), "{k:?}");
        set_geo_force(&l, &mut f, 0, Side::Right, 0, [1.0, 0.0]);
        let res = sys.residual(&f);
        assert!(rows.iter().any(|&r| res[r].abs() > 0.1));
    }
}

#[test]
fn standard_loads_are_compatible() {
    let d = uniform_grid(1, 1);
    let l = DofLayout::build(&d, 6).unwrap();
    for loads in [LoadSpec::compression(1.0, default_intervals()), LoadSpec::shear(1.0, default_intervals())] {
        ConstraintSystem::assemble(&l, &d, &loads).unwrap();
    }
}

#[test]
fn one_sided_load_is_incompatible() {
    let d = uniform_grid(1, 1);
    let l = DofLayout::build(&d, 4).unwrap();
    let loads = LoadSpec { top: Some(SideLoad::new([0.0, -1.0], vec![[0.0, 1.0]])), ..LoadSpec::default() };
    assert!(matches!(ConstraintSystem::assemble(&l, &d, &loads), Err(AssemblyError::IncompatibleLoad(_))));
}

#[test]
fn traction_without_loaded_edge_is_incompatible() {
    let d = uniform_grid(1, 1);
    let l = DofLayout::build(&d, 2).unwrap();
    // Midpoints at 1/4 and 3/4 miss the interval.
    let loads = LoadSpec::compression(1.0, vec![[0.4, 0.6]]);
    assert!(matches!(ConstraintSystem::assemble(&l, &d, &loads), Err(AssemblyError::IncompatibleLoad(_))));
}

#[test]
fn global_balance_rows_are_dropped() {
    let d = uniform_grid(1, 1);
    let l = DofLayout::build(&d, 2).unwrap();
    let sys = ConstraintSystem::assemble(&l, &d, &uniaxial(-1.0)).unwrap();
    let red = reduce_rank(&sys, 1e-9).unwrap();
    assert!(red.dropped.len() >= 2);
    let full = DenseSystem::from_sparse(&sys.a, &sys.b, &vec![1.0; l.n_dofs()]);
    let reduced = DenseSystem::from_sparse(&red.a, &red.b, &vec![1.0; l.n_dofs()]);
    assert_eq!(reduced.rank(1e-10), red.n_rows());
    assert_eq!(full.rank(1e-10), red.n_rows());
}

#[test]
fn boundary_pattern_marks_loaded_cells_solid() {
    let d = uniform_grid(1, 1);
    let l = DofLayout::build(&d, 6).unwrap();
    let p = boundary_pattern(&l, &d, &LoadSpec::compression(1.0, default_intervals()), 0.01);
    let g = l.grid;
    // Top row: fractions (q + 0.5) / 6 inside [1/3, 1/2] or [2/3, 5/6] are q = 2 and q = 4.
    let top: Vec<Option<f64>> = (0..6).map(|i| p[g.cell(i, 5)]).collect();
    assert_eq!(top, vec![Some(0.01), Some(0.01), Some(1.0), Some(0.01), Some(1.0), Some(0.01)]);
    assert_eq!(p[g.cell(2, 2)], None);
}

#[test]
fn energy_matches_geometric_oracle_on_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..12 {
        let inst = sample_instance(&mut || rng.random::<f64>(), 0.01);
        let l = DofLayout::build(&inst.decomp, inst.n).unwrap();
        let sys = ConstraintSystem::assemble(&l, &inst.decomp, &inst.loads).unwrap();
        let red = reduce_rank(&sys, 1e-9).unwrap();
        let mut v = vec![0.0; l.n_cells()];
        for (ci, c) in l.classes.iter().enumerate() {
            for cell in 0..l.grid.n_cells() {
                v[l.class_cell(ci, cell)] = inst.density[&c.reference][cell];
            }
        }
        let w = build_weights(&l, &v);
        let f = solve_state(&red, &w).unwrap();
        let e = crate::equilibrium::elastic_energy(&f.values, &w);
        let oracle = GeometricOracle::build(&inst.decomp, &inst.loads, inst.n).unwrap();
        let eo = oracle.min_energy(|a, rc| inst.density_of(a, rc)).unwrap();
        assert!((e - eo).abs() <= 1e-8 * eo.abs().max(1e-300), "trial {trial}: {e} vs {eo} ({:?})", inst.decomp.spec());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reduced_system_has_full_rank_and_same_solutions(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = sample_instance(&mut || rng.random::<f64>(), 0.01);
        let l = DofLayout::build(&inst.decomp, inst.n).unwrap();
        let sys = ConstraintSystem::assemble(&l, &inst.decomp, &inst.loads).unwrap();
        let red = reduce_rank(&sys, 1e-9).unwrap();
        let ones = vec![1.0; l.n_dofs()];
        let dense = DenseSystem::from_sparse(&red.a, &red.b, &ones);
        prop_assert_eq!(dense.rank(1e-10), red.n_rows());
        let full = DenseSystem::from_sparse(&sys.a, &sys.b, &ones);
        prop_assert_eq!(full.rank(1e-10), red.n_rows());
    }

    #[test]
    fn rows_are_linear_in_the_load(seed in any::<u64>(), scale in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = sample_instance(&mut || rng.random::<f64>(), 0.01);
        let l = DofLayout::build(&inst.decomp, inst.n).unwrap();
        let base = ConstraintSystem::assemble(&l, &inst.decomp, &inst.loads).unwrap();
        let mut scaled = inst.loads.clone();
        for s in Side::ALL {
            if let Some(sl) = scaled.side_mut(s) {
                sl.traction = [scale * sl.traction[0], scale * sl.traction[1]];
            }
        }
        let other = ConstraintSystem::assemble(&l, &inst.decomp, &scaled).unwrap();
        prop_assert_eq!(&base.a, &other.a);
        for (x, y) in base.b.iter().zip(&other.b) {
            prop_assert!((scale * x - y).abs() <= 1e-14 * (1.0 + x.abs()));
        }
    }
}
