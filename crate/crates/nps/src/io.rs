//! Snapshot and checkpoint serialization: legacy-VTK structured points,
//! flat CSV field dumps, and full-precision JSON checkpoints.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::grid::{ScalarField, VelocityField};
use crate::simulation::State;

/// Writes cell-centered scalars (and optionally a cell-averaged velocity) as
/// a legacy-VTK structured-points ASCII file, with points at cell centers.
pub fn write_vtk(
    path: &Path,
    title: &str,
    scalars: &[(&str, &ScalarField)],
    velocity: Option<&VelocityField>,
) -> Result<()> {
    let spec = scalars
        .first()
        .map(|(_, f)| f.spec())
        .or_else(|| velocity.map(|v| v.spec()))
        .expect("write_vtk needs at least one field");
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{title}")?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET STRUCTURED_POINTS")?;
    writeln!(out, "DIMENSIONS {} {} 1", spec.nx, spec.ny)?;
    writeln!(out, "ORIGIN {} {} 0", 0.5 * spec.hx(), 0.5 * spec.hy())?;
    writeln!(out, "SPACING {} {} 1", spec.hx(), spec.hy())?;
    writeln!(out, "POINT_DATA {}", spec.n_cells())?;
    for (name, field) in scalars {
        assert_eq!(field.spec(), spec, "snapshot fields must share a grid");
        writeln!(out, "SCALARS {name} double 1")?;
        writeln!(out, "LOOKUP_TABLE default")?;
        for v in field.values() {
            writeln!(out, "{v}")?;
        }
    }
    if let Some(u) = velocity {
        assert_eq!(u.spec(), spec);
        writeln!(out, "VECTORS velocity double")?;
        for j in 0..spec.ny {
            for i in 0..spec.nx {
                let cx = 0.5 * (u.ux(i, j) + u.ux(i + 1, j));
                let cy = 0.5 * (u.uy(i, j) + u.uy(i, j + 1));
                writeln!(out, "{cx} {cy} 0")?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Writes one scalar field as `x,y,value` rows.
pub fn write_csv_field(path: &Path, field: &ScalarField) -> Result<()> {
    let spec = field.spec();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "x,y,value")?;
    for j in 0..spec.ny {
        for i in 0..spec.nx {
            writeln!(out, "{},{},{}", spec.cell_x(i), spec.cell_y(j), field.at(i, j))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Full-precision state checkpoint; a reloaded checkpoint continues a run
/// bit-identically.
pub fn save_checkpoint(path: &Path, state: &State) -> Result<()> {
    let out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(out, state).map_err(std::io::Error::other)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<State> {
    let file = BufReader::new(File::open(path)?);
    let state = serde_json::from_reader(file).map_err(std::io::Error::other)?;
    Ok(state)
}

/// Writes state snapshots in both formats under `dir` with the given stem:
/// `<stem>.vtk` plus `<stem>_<field>.csv` for each scalar.
pub fn write_state_snapshot(dir: &Path, stem: &str, state: &State) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_vtk(
        &dir.join(format!("{stem}.vtk")),
        &format!("state at t = {}", state.t),
        &[
            ("c1", &state.c1),
            ("c2", &state.c2),
            ("phi", &state.phi),
            ("p", &state.p),
        ],
        Some(&state.u),
    )?;
    for (name, f) in [("c1", &state.c1), ("c2", &state.c2), ("phi", &state.phi), ("p", &state.p)] {
        write_csv_field(&dir.join(format!("{stem}_{name}.csv")), f)?;
    }
    Ok(())
}
