//! Alternating descent: state solve for fixed density, then a cell sweep
//! for fixed forces.

use serde::{Deserialize, Serialize};

use crate::assembly::{boundary_pattern, reduce_rank, ConstraintSystem, DofLayout, LoadSpec, ReducedSystem};
use crate::decomp::Decomposition;
use crate::equilibrium::{build_weights, cell_stress_coefficients, elastic_energy, ForceField, StateSolver};
use crate::phasefield::{gauss_seidel_sweep, PhaseField, PhaseGeometry, PhaseParams, SweepOptions, SweepStart};

/// Relative Gram pivot below which a constraint row counts as dependent.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizationConfig {
    /// Cells per subdomain side.
    pub n: usize,
    pub params: PhaseParams,
    pub outer_max_iters: usize,
    /// Stop once the area-weighted L2 change of the density is at most this.
    pub stop_tol: f64,
    pub max_sweeps: usize,
    pub sweep_tol: f64,
    /// Start cell updates from the current value instead of the two-well guess.
    pub warm_start: bool,
    pub pivot_tol: f64,
}

impl OptimizationConfig {
    /// Defaults with interface width twice the smallest cell size.
    pub fn with_defaults(decomp: &Decomposition, n: usize) -> OptimizationConfig {
        OptimizationConfig {
            n,
            params: PhaseParams { beta: 1.0, eta: 0.1, epsilon: 2.0 * decomp.min_cell_size(n), delta: 0.01 },
            outer_max_iters: 200,
            stop_tol: 1e-4,
            max_sweeps: 50,
            sweep_tol: 1e-8,
            warm_start: false,
            pivot_tol: DEFAULT_PIVOT_TOL,
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            max_sweeps: self.max_sweeps,
            tol: self.sweep_tol,
            start: if self.warm_start { SweepStart::Warm } else { SweepStart::TwoWell },
        }
    }
}

/// Objective split into its parts; `total = elastic + beta * volume + eta * perimeter`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub elastic: f64,
    pub volume: f64,
    pub perimeter: f64,
    pub total: f64,
}

/// Everything that stays fixed during the descent.
pub struct Problem {
    pub decomp: Decomposition,
    pub loads: LoadSpec,
    pub layout: DofLayout,
    pub system: ConstraintSystem,
    pub reduced: ReducedSystem,
    /// Prescribed density of boundary-layer cells.
    pub pattern: Vec<Option<f64>>,
    pub geometry: PhaseGeometry,
    pub params: PhaseParams,
    solver: StateSolver,
}

impl Problem {
    pub fn new(
        decomp: Decomposition,
        loads: LoadSpec,
        n: usize,
        params: PhaseParams,
        pivot_tol: f64,
    ) -> crate::Result<Problem> {
        params.validate().map_err(crate::Error::Config)?;
        let layout = DofLayout::build(&decomp, n)?;
        let system = ConstraintSystem::assemble(&layout, &decomp, &loads)?;
        let reduced = reduce_rank(&system, pivot_tol)?;
        let pattern = boundary_pattern(&layout, &decomp, &loads, params.delta);
        let geometry = PhaseGeometry::build(&decomp, &layout, params.epsilon);
        let solver = StateSolver::new(&reduced)?;
        log::info!(
            "assembled {} unknowns, {} rows ({} independent), {} density cells",
            layout.n_dofs(),
            system.n_rows(),
            reduced.n_rows(),
            layout.n_cells()
        );
        Ok(Problem { decomp, loads, layout, system, reduced, pattern, geometry, params, solver })
    }

    pub fn from_config(decomp: Decomposition, loads: LoadSpec, cfg: &OptimizationConfig) -> crate::Result<Problem> {
        Problem::new(decomp, loads, cfg.n, cfg.params, cfg.pivot_tol)
    }

    /// Prescribed cells at their values, free cells at 1.
    pub fn initial_field(&self) -> PhaseField {
        PhaseField::new(&self.pattern, 1.0)
    }

    pub fn solve_state(&mut self, v: &[f64]) -> crate::Result<ForceField> {
        let w = build_weights(&self.layout, v);
        Ok(self.solver.solve(&w)?)
    }

    pub fn objective(&self, v: &[f64], f: &[f64]) -> Objective {
        total_objective(&self.layout, &self.geometry, &self.params, v, f)
    }
}

pub fn total_objective(
    layout: &DofLayout,
    geometry: &PhaseGeometry,
    params: &PhaseParams,
    v: &[f64],
    f: &[f64],
) -> Objective {
    let elastic = elastic_energy(f, &build_weights(layout, v));
    let volume = geometry.volume(v);
    let perimeter = geometry.perimeter(v, params);
    Objective { elastic, volume, perimeter, total: elastic + params.beta * volume + params.eta * perimeter }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: Objective,
    /// Density change that produced this state; absent for the initial state.
    pub dv_l2: Option<f64>,
    pub sweeps: usize,
}

#[derive(Clone, Debug)]
pub struct DescentReport {
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// False if the objective ever rose by more than round-off.
    pub monotone: bool,
    pub field: PhaseField,
    pub force: ForceField,
}

impl DescentReport {
    pub fn final_objective(&self) -> Objective {
        self.records.last().expect("at least the initial record").objective
    }

    pub fn iterations(&self) -> usize {
        self.records.len() - 1
    }
}

/// Runs the descent from `start`, or from [`Problem::initial_field`].
pub fn alternate_descent(
    problem: &mut Problem,
    cfg: &OptimizationConfig,
    start: Option<PhaseField>,
) -> crate::Result<DescentReport> {
    let mut field = start.unwrap_or_else(|| problem.initial_field());
    if field.len() != problem.layout.n_cells() {
        return Err(crate::Error::Config(format!(
            "initial field has {} cells, expected {}",
            field.len(),
            problem.layout.n_cells()
        )));
    }
    let sweep = cfg.sweep_options();
    let mut force = problem.solve_state(&field.values)?;
    let mut objective = problem.objective(&field.values, &force.values);
    let mut records = vec![IterationRecord { iter: 0, objective, dv_l2: None, sweeps: 0 }];
    let mut monotone = true;
    let mut converged = false;
    for iter in 1..=cfg.outer_max_iters {
        let stress = cell_stress_coefficients(&problem.layout, &force.values);
        let previous = field.values.clone();
        let stats = gauss_seidel_sweep(&mut field, &problem.geometry, &stress, &problem.params, &sweep);
        let dv = previous
            .iter()
            .zip(&field.values)
            .zip(&problem.geometry.cell_weight)
            .map(|((a, b), w)| w * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        force = problem.solve_state(&field.values)?;
        let next = problem.objective(&field.values, &force.values);
        if next.total > objective.total + 1e-10 * (1.0 + objective.total.abs()) {
            log::warn!("objective rose from {} to {} at iteration {iter}", objective.total, next.total);
            monotone = false;
        }
        objective = next;
        records.push(IterationRecord { iter, objective, dv_l2: Some(dv), sweeps: stats.sweeps });
        log::info!(
            "iter {iter}: J = {:.10e} (E {:.6e}, V {:.6e}, L {:.6e}), |dv| = {dv:.3e}, {} sweeps",
            objective.total,
            objective.elastic,
            objective.volume,
            objective.perimeter,
            stats.sweeps
        );
        if dv <= cfg.stop_tol {
            converged = true;
            break;
        }
    }
    Ok(DescentReport { records, converged, monotone, field, force })
}

#[cfg(test)]
mod tests;
