//! Columnar CSV and binary dumps of a [`ForwardPathBatch`].
//!
//! Binary layout (little endian): 8-byte magic `LBSDEPB1`, then `u64` dim,
//! `u64` n_paths, `u64` n_nodes, followed by the grid nodes, the states
//! (`[path][node][component]`) and the running sup (`[path][node]`) as `f64`.

use std::io::{BufRead, Read, Write};

use super::{ForwardPathBatch, TimeGrid};
use crate::error::{Error, Result};

pub const PATH_MAGIC: &[u8; 8] = b"LBSDEPB1";

pub fn write_csv<W: Write>(batch: &ForwardPathBatch, mut w: W) -> Result<()> {
    let m = batch.dim();
    let mut header = String::from("path_id,node_index,t");
    for i in 1..=m {
        header.push_str(&format!(",x{i}"));
    }
    header.push_str(",running_sup\n");
    w.write_all(header.as_bytes())?;
    let grid = batch.grid();
    for p in 0..batch.n_paths() {
        for k in 0..grid.n_nodes() {
            let mut line = format!("{p},{k},{:?}", grid.t(k));
            for v in batch.state(p, k) {
                line.push_str(&format!(",{v:?}"));
            }
            line.push_str(&format!(",{:?}\n", batch.running_sup(p, k)));
            w.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<ForwardPathBatch> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty path CSV".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    if cols.len() < 5 || cols[0] != "path_id" || cols[1] != "node_index" || cols[2] != "t" {
        return Err(Error::Format(format!("unexpected path CSV header `{header}`")));
    }
    let m = cols.len() - 4;

    let mut nodes: Vec<f64> = Vec::new();
    let mut states = Vec::new();
    let mut sup = Vec::new();
    let mut n_paths = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != m + 4 {
            return Err(Error::Format(format!("line {}: expected {} fields", lineno + 2, m + 4)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))
        };
        let p: usize = fields[0]
            .parse()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))?;
        let k: usize = fields[1]
            .parse()
            .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))?;
        let t = parse(fields[2])?;
        if p == 0 {
            if k != nodes.len() {
                return Err(Error::Format(format!("line {}: nodes out of order", lineno + 2)));
            }
            nodes.push(t);
        } else if k >= nodes.len() || nodes[k] != t {
            return Err(Error::Format(format!("line {}: grid mismatch", lineno + 2)));
        }
        if k == 0 {
            if p != n_paths {
                return Err(Error::Format(format!("line {}: paths out of order", lineno + 2)));
            }
            n_paths += 1;
        }
        for f in &fields[3..3 + m] {
            states.push(parse(f)?);
        }
        sup.push(parse(fields[3 + m])?);
    }
    let grid = TimeGrid::from_nodes(nodes)?;
    ForwardPathBatch::from_parts(grid, m, n_paths, states, sup)
}

pub fn write_binary<W: Write>(batch: &ForwardPathBatch, mut w: W) -> Result<()> {
    w.write_all(PATH_MAGIC)?;
    for v in [batch.dim() as u64, batch.n_paths() as u64, batch.grid().n_nodes() as u64] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in batch.grid().nodes().iter().chain(&batch.states).chain(&batch.running_sup) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<ForwardPathBatch> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != PATH_MAGIC {
        return Err(Error::Format("not a path dump (bad magic)".into()));
    }
    let dim = read_u64(&mut r)? as usize;
    let n_paths = read_u64(&mut r)? as usize;
    let n_nodes = read_u64(&mut r)? as usize;
    let nodes = read_f64s(&mut r, n_nodes)?;
    let states = read_f64s(&mut r, n_paths * n_nodes * dim)?;
    let sup = read_f64s(&mut r, n_paths * n_nodes)?;
    let grid = TimeGrid::from_nodes(nodes)?;
    ForwardPathBatch::from_parts(grid, dim, n_paths, states, sup)
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}
