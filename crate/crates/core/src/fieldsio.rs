//! Global rasters of per-reference fields and result files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde_json::json;

use crate::assembly::DofLayout;
use crate::decomp::Decomposition;
use crate::driver::{DescentReport, Problem};
use crate::equilibrium::{cell_stress, von_mises};

/// Field on a uniform grid over the bounding box at the finest cell size.
/// Row `0` is the bottom row.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalRaster {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub origin: [f64; 2],
    pub values: Vec<f64>,
    /// Source (subdomain index, reference cell) of every raster cell.
    pub provenance: Vec<(usize, usize)>,
}

impl GlobalRaster {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [self.origin[0] + (i as f64 + 0.5) * self.h, self.origin[1] + (j as f64 + 0.5) * self.h]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GlobalRaster {
        GlobalRaster { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }

    /// Quarter turns counter-clockwise of the picture.
    pub fn rotated(&self, quarter_turns: u8) -> GlobalRaster {
        let mut out = self.clone();
        for _ in 0..quarter_turns % 4 {
            let (nx, ny) = (out.ny, out.nx);
            let mut values = vec![0.0; nx * ny];
            let mut provenance = vec![(0, 0); nx * ny];
            for j in 0..out.ny {
                for i in 0..out.nx {
                    // (i, j) -> (ny_old - 1 - j, i)
                    let (ni, nj) = (out.ny - 1 - j, i);
                    values[nj * nx + ni] = out.values[j * out.nx + i];
                    provenance[nj * nx + ni] = out.provenance[j * out.nx + i];
                }
            }
            out = GlobalRaster { nx, ny, values, provenance, ..out };
        }
        out
    }
}

/// Places the value of every reference cell into each of its copies.
pub fn assemble_mosaic(
    decomp: &Decomposition,
    layout: &DofLayout,
    value: impl Fn(usize, usize) -> f64,
) -> crate::Result<GlobalRaster> {
    let g = layout.grid;
    let n = g.n;
    let h = decomp.min_cell_size(n);
    let bbox = decomp.bounding_box;
    let count = |len: f64| -> crate::Result<usize> {
        let k = (len / h).round();
        if (k * h - len).abs() > 1e-9 * h.max(len) || k < 1.0 {
            return Err(crate::Error::Config(format!("length {len} is not a multiple of the raster cell {h}")));
        }
        Ok(k as usize)
    };
    let (nx, ny) = (count(bbox.width())?, count(bbox.height())?);
    let mut values = vec![f64::NAN; nx * ny];
    let mut provenance = vec![(usize::MAX, 0); nx * ny];
    for (a, s) in decomp.subdomains.iter().enumerate() {
        let fx = count(s.rect.width() / n as f64)?;
        let fy = count(s.rect.height() / n as f64)?;
        let i0 = ((s.rect.x0 - bbox.x0) / h).round() as usize;
        let j0 = ((s.rect.y0 - bbox.y0) / h).round() as usize;
        for gj in 0..n {
            for gi in 0..n {
                let rc = layout.ref_cell_of_geo(a, g.cell(gi, gj));
                let v = value(a, rc);
                for dj in 0..fy {
                    for di in 0..fx {
                        let k = (j0 + gj * fy + dj) * nx + i0 + gi * fx + di;
                        if provenance[k].0 != usize::MAX {
                            return Err(crate::Error::Config("subdomains overlap in the raster".into()));
                        }
                        values[k] = v;
                        provenance[k] = (a, rc);
                    }
                }
            }
        }
    }
    if provenance.iter().any(|p| p.0 == usize::MAX) {
        return Err(crate::Error::Config("raster cell not covered by any subdomain".into()));
    }
    Ok(GlobalRaster { nx, ny, h, origin: [bbox.x0, bbox.y0], values, provenance })
}

/// Mosaic of a field indexed by global reference cell.
pub fn mosaic_of_field(decomp: &Decomposition, layout: &DofLayout, field: &[f64]) -> crate::Result<GlobalRaster> {
    assemble_mosaic(decomp, layout, |a, rc| field[layout.class_cell(layout.class_of_sub[a], rc)])
}

/// Mosaic of the von Mises stress of every placed cell.
pub fn von_mises_mosaic(decomp: &Decomposition, layout: &DofLayout, f: &[f64]) -> crate::Result<GlobalRaster> {
    assemble_mosaic(decomp, layout, |a, rc| von_mises(cell_stress(layout, f, layout.block_of_sub[a], rc)))
}

/// Binary 8-bit PGM, top row first; `lo` maps to 0 and `hi` to 255.
pub fn write_pgm(path: &Path, r: &GlobalRaster, lo: f64, hi: f64) -> std::io::Result<()> {
    let mut out = Vec::with_capacity(r.nx * r.ny + 32);
    write!(out, "P5\n{} {}\n255\n", r.nx, r.ny)?;
    let span = if hi > lo { hi - lo } else { 1.0 };
    for j in (0..r.ny).rev() {
        for i in 0..r.nx {
            let t = ((r.get(i, j) - lo) / span).clamp(0.0, 1.0);
            out.push((255.0 * t).round() as u8);
        }
    }
    fs::write(path, out)
}

/// `x,y,<name>` per raster cell with 17 significant digits.
pub fn write_field_csv(path: &Path, r: &GlobalRaster, name: &str) -> std::io::Result<()> {
    let mut s = String::with_capacity(r.nx * r.ny * 72);
    writeln!(s, "x,y,{name}").unwrap();
    for j in 0..r.ny {
        for i in 0..r.nx {
            let [x, y] = r.center(i, j);
            writeln!(s, "{x:.16e},{y:.16e},{:.16e}", r.get(i, j)).unwrap();
        }
    }
    fs::write(path, s)
}

pub fn write_report_csv(path: &Path, report: &DescentReport) -> std::io::Result<()> {
    let mut s = String::from("iter,E,V,L,J,dv_l2\n");
    for r in &report.records {
        let o = r.objective;
        let dv = r.dv_l2.map_or("NaN".to_string(), |d| format!("{d:.16e}"));
        writeln!(s, "{},{:.16e},{:.16e},{:.16e},{:.16e},{dv}", r.iter, o.elastic, o.volume, o.perimeter, o.total).unwrap();
    }
    fs::write(path, s)
}

/// Writes report, density and von Mises files into `dir`.
pub fn write_outputs(
    dir: &Path,
    problem: &Problem,
    report: &DescentReport,
    config_echo: serde_json::Value,
) -> crate::Result<()> {
    fs::create_dir_all(dir)?;
    let delta = problem.params.delta;
    let phase = mosaic_of_field(&problem.decomp, &problem.layout, &report.field.values)?;
    write_pgm(&dir.join("phase.pgm"), &phase, delta, 1.0)?;
    write_field_csv(&dir.join("phase.csv"), &phase, "v")?;

    let vm = von_mises_mosaic(&problem.decomp, &problem.layout, &report.force.values)?;
    let vm_max = vm.values.iter().cloned().fold(0.0, f64::max);
    write_pgm(&dir.join("vonmises.pgm"), &vm, 0.0, vm_max)?;
    let mut masked = vm.clone();
    for (m, &v) in masked.values.iter_mut().zip(&phase.values) {
        if v <= 0.5 {
            *m = 0.0;
        }
    }
    let masked_max = masked.values.iter().cloned().fold(0.0, f64::max);
    write_pgm(&dir.join("vonmises_masked.pgm"), &masked, 0.0, masked_max)?;
    write_field_csv(&dir.join("vonmises.csv"), &vm, "von_mises")?;
    write_report_csv(&dir.join("report.csv"), report)?;

    let o = report.final_objective();
    let summary = json!({
        "config": config_echo,
        "converged": report.converged,
        "monotone": report.monotone,
        "iterations": report.iterations(),
        "objective": { "E": o.elastic, "V": o.volume, "L": o.perimeter, "J": o.total },
        "unknowns": problem.layout.n_dofs(),
        "rows": problem.system.n_rows(),
        "independent_rows": problem.reduced.n_rows(),
        "density_cells": problem.layout.n_cells(),
        "raster": { "nx": phase.nx, "ny": phase.ny, "h": phase.h },
        "von_mises_max": vm_max,
        "state_residual": report.force.residual,
    });
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}
