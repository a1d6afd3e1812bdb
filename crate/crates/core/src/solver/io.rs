//! Solution summaries (CSV) and full dumps (binary).
//!
//! Binary layout (little endian): 9-byte magic `LBSDESOL1`, `u64` length of a
//! JSON header (grid, shape, basis, fits, metadata), the header, then `Y`,
//! `Z` and the generator values as `f64`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{BsdeSolution, NodeFits, RegressionBasis, SolverMeta};
use crate::error::{Error, Result};
use crate::paths::io::{read_f64s, read_u64};
use crate::paths::TimeGrid;
use crate::stats;

pub const SOLUTION_MAGIC: &[u8; 9] = b"LBSDESOL1";

/// One row per node: `node,t,y_mean,y_sd,z1_mean..zd_mean,residual`.
pub fn write_solution_csv<W: Write>(sol: &BsdeSolution, mut w: W) -> Result<()> {
    let mut header = String::from("node,t,y_mean,y_sd");
    for j in 1..=sol.z_dim {
        header.push_str(&format!(",z{j}_mean"));
    }
    header.push_str(",residual\n");
    w.write_all(header.as_bytes())?;
    for k in 0..sol.grid.n_nodes() {
        let ys = sol.y_node(k);
        let mut line = format!("{k},{:?},{:?},{:?}", sol.grid.t(k), stats::mean(ys), stats::sample_sd(ys));
        for m in sol.z_mean(k) {
            line.push_str(&format!(",{m:?}"));
        }
        line.push_str(&format!(",{:?}\n", sol.residuals[k]));
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Header {
    grid: TimeGrid,
    n_paths: usize,
    z_dim: usize,
    state_dim: usize,
    basis: RegressionBasis,
    residuals: Vec<f64>,
    fits: Vec<NodeFits>,
    picard_increments: Vec<Vec<f64>>,
    meta: SolverMeta,
}

pub fn write_solution_binary<W: Write>(sol: &BsdeSolution, mut w: W) -> Result<()> {
    let header = Header {
        grid: sol.grid.clone(),
        n_paths: sol.n_paths,
        z_dim: sol.z_dim,
        state_dim: sol.state_dim,
        basis: sol.basis.clone(),
        residuals: sol.residuals.clone(),
        fits: sol.fits.clone(),
        picard_increments: sol.picard_increments.clone(),
        meta: sol.meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(SOLUTION_MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for v in sol.y.iter().chain(&sol.z).chain(&sol.phi) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_solution_binary<R: Read>(mut r: R) -> Result<BsdeSolution> {
    let mut magic = [0u8; 9];
    r.read_exact(&mut magic)?;
    if &magic != SOLUTION_MAGIC {
        return Err(Error::Format("not a solution dump (bad magic)".into()));
    }
    let len = read_u64(&mut r)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let h: Header = serde_json::from_slice(&json)?;
    let nn = h.grid.n_nodes();
    let y = read_f64s(&mut r, nn * h.n_paths)?;
    let z = read_f64s(&mut r, nn * h.n_paths * h.z_dim)?;
    let phi = read_f64s(&mut r, h.grid.n_steps() * h.n_paths)?;
    Ok(BsdeSolution {
        grid: h.grid,
        n_paths: h.n_paths,
        z_dim: h.z_dim,
        state_dim: h.state_dim,
        basis: h.basis,
        y,
        z,
        phi,
        residuals: h.residuals,
        fits: h.fits,
        picard_increments: h.picard_increments,
        meta: h.meta,
    })
}
