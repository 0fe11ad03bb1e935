use super::*;
use crate::assembly::{default_intervals, SideLoad};
use crate::decomp::uniform_grid;
use crate::equilibrium::{build_weights, elastic_energy};

fn config(decomp: &Decomposition, n: usize) -> OptimizationConfig {
    OptimizationConfig::with_defaults(decomp, n)
}

fn uniaxial() -> LoadSpec {
    LoadSpec {
        top: Some(SideLoad::new([0.0, -1.0], vec![[0.0, 1.0]])),
        bottom: Some(SideLoad::new([0.0, 1.0], vec![[0.0, 1.0]])),
        ..LoadSpec::default()
    }
}

#[test]
fn solid_unloaded_objective_is_volume() {
    let d = uniform_grid(2, 1);
    let cfg = config(&d, 4);
    let p = Problem::from_config(d, LoadSpec::default(), &cfg).unwrap();
    let zero = vec![0.0; p.layout.n_dofs()];
    let one = vec![1.0; p.layout.n_cells()];
    let o = p.objective(&one, &zero);
    assert!((o.total - cfg.params.beta * 2.0).abs() < 1e-12);
    assert_eq!(o.perimeter, 0.0);
    let void = vec![cfg.params.delta; p.layout.n_cells()];
    let o = p.objective(&void, &zero);
    assert!((o.total - cfg.params.beta * cfg.params.delta * 2.0).abs() < 1e-12);
}

#[test]
fn uniaxial_block_without_penalties_costs_one() {
    let d = uniform_grid(1, 1);
    let mut cfg = config(&d, 8);
    cfg.params.beta = 0.0;
    cfg.params.eta = 0.0;
    let mut p = Problem::from_config(d, uniaxial(), &cfg).unwrap();
    let v = vec![1.0; p.layout.n_cells()];
    let f = p.solve_state(&v).unwrap();
    assert!((p.objective(&v, &f.values).total - 1.0).abs() < 1e-10);
}

#[test]
fn zero_load_empties_the_domain_quickly() {
    let d = uniform_grid(1, 1);
    let cfg = config(&d, 8);
    let mut p = Problem::from_config(d, LoadSpec::default(), &cfg).unwrap();
    let r = alternate_descent(&mut p, &cfg, None).unwrap();
    assert!(r.converged);
    assert!(r.iterations() <= 2);
    assert!(r.field.values.iter().all(|&v| v == cfg.params.delta));
}

#[test]
fn fixed_solid_single_pass_reports_state_energy() {
    let d = uniform_grid(1, 1);
    let mut cfg = config(&d, 6);
    cfg.outer_max_iters = 1;
    let loads = LoadSpec::compression(1.0, default_intervals());
    let mut p = Problem::from_config(d, loads, &cfg).unwrap();
    let field = PhaseField::new(&vec![Some(1.0); p.layout.n_cells()], 1.0);
    let r = alternate_descent(&mut p, &cfg, Some(field)).unwrap();
    let f = p.solve_state(&vec![1.0; p.layout.n_cells()]).unwrap();
    let e = elastic_energy(&f.values, &build_weights(&p.layout, &vec![1.0; p.layout.n_cells()]));
    assert_eq!(r.records.len(), 2);
    assert_eq!(r.records[1].objective.elastic, e);
}

#[test]
fn compression_descent_is_monotone_and_deterministic() {
    let d = uniform_grid(1, 1);
    let cfg = config(&d, 8);
    let loads = LoadSpec::compression(1.0, default_intervals());
    let mut p = Problem::from_config(d.clone(), loads.clone(), &cfg).unwrap();
    let r = alternate_descent(&mut p, &cfg, None).unwrap();
    assert!(r.monotone);
    for w in r.records.windows(2) {
        assert!(w[1].objective.total <= w[0].objective.total + 1e-10 * (1.0 + w[0].objective.total.abs()));
    }
    assert!(r.converged, "{} iterations", r.iterations());
    let mut p2 = Problem::from_config(d, loads, &cfg).unwrap();
    let r2 = alternate_descent(&mut p2, &cfg, None).unwrap();
    assert_eq!(r.records, r2.records);
    assert_eq!(r.field, r2.field);
}

#[test]
fn doubling_the_load_quadruples_the_initial_energy() {
    let d = uniform_grid(1, 1);
    let mut cfg = config(&d, 6);
    cfg.outer_max_iters = 1;
    let base = LoadSpec::shear(1.0, default_intervals());
    let doubled = LoadSpec::shear(2.0, default_intervals());
    let e = |loads: LoadSpec| {
        let mut p = Problem::from_config(d.clone(), loads, &cfg).unwrap();
        alternate_descent(&mut p, &cfg, None).unwrap().records[0].objective.elastic
    };
    let (e1, e2) = (e(base), e(doubled));
    assert!((e2 - 4.0 * e1).abs() <= 1e-12 * e2);
}

#[test]
fn wrong_start_length_is_rejected() {
    let d = uniform_grid(1, 1);
    let cfg = config(&d, 4);
    let mut p = Problem::from_config(d, LoadSpec::default(), &cfg).unwrap();
    let bad = PhaseField::uniform(3, 1.0);
    assert!(matches!(alternate_descent(&mut p, &cfg, Some(bad)), Err(crate::Error::Config(_))));
}

#[test]
fn invalid_parameters_are_rejected() {
    let d = uniform_grid(1, 1);
    let mut cfg = config(&d, 4);
    cfg.params.delta = 0.0;
    assert!(Problem::from_config(d, LoadSpec::default(), &cfg).is_err());
}
