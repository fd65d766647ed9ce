//! Sectioned text export of a program for external solvers.
//!
//! ```text
//! # section=columns
//! column,key,output,objective
//! # section=le
//! row,column,coeff
//! # section=le_rhs
//! row,rhs
//! # section=eq
//! row,column,coeff
//! # section=eq_rhs
//! row,rhs
//! # section=bounds
//! column,lower,upper
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{LinearProgram, SparseRow};
use crate::error::{Error, Result};
use crate::geo::{AugmentedSecret, LocId};
use crate::io::{fmt_f64, parse_f64};
use crate::mechanisms::MatrixMeta;

pub fn write_lp(lp: &LinearProgram, path: &Path) -> Result<()> {
    let mut s = String::new();
    let k = lp.outputs.len();
    let _ = writeln!(s, "# epsilon={}", fmt_f64(lp.meta.epsilon));
    let _ = writeln!(s, "# eta={}", fmt_f64(lp.meta.eta));
    let _ = writeln!(s, "# builder={}", lp.meta.builder);
    let _ = writeln!(s, "# section=columns\ncolumn,key,output,objective");
    for c in 0..lp.num_cols() {
        let _ = writeln!(
            s,
            "{c},{},{},{}",
            lp.keys[c / k],
            lp.outputs[c % k],
            fmt_f64(lp.objective[c])
        );
    }
    for (name, rows) in [("le", &lp.le), ("eq", &lp.eq)] {
        let _ = writeln!(s, "# section={name}\nrow,column,coeff");
        for (r, row) in rows.iter().enumerate() {
            for (c, a) in &row.coeffs {
                let _ = writeln!(s, "{r},{c},{}", fmt_f64(*a));
            }
        }
        let _ = writeln!(s, "# section={name}_rhs\nrow,rhs");
        for (r, row) in rows.iter().enumerate() {
            let _ = writeln!(s, "{r},{}", fmt_f64(row.rhs));
        }
    }
    let _ = writeln!(s, "# section=bounds\ncolumn,lower,upper");
    for c in 0..lp.num_cols() {
        let _ = writeln!(s, "{c},0,1");
    }
    crate::io::write_text(path, &s)
}

pub fn read_lp(path: &Path) -> Result<LinearProgram> {
    let text = crate::io::read_text(path)?;
    let mut meta = MatrixMeta::default();
    let mut section = String::new();
    let mut keys: Vec<AugmentedSecret> = Vec::new();
    let mut outputs: Vec<LocId> = Vec::new();
    let mut cols: Vec<(AugmentedSecret, LocId, f64)> = Vec::new();
    let mut le: Vec<SparseRow> = Vec::new();
    let mut eq: Vec<SparseRow> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n as u64 + 1;
        let bad = |m: &str| Error::parse(path, line_no, m.to_string());
        let num = |v: &str| parse_f64(v).ok_or_else(|| bad("bad number"));
        let idx = |v: &str| v.parse::<usize>().map_err(|_| bad("bad index"));
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((name, value)) = rest.trim().split_once('=') {
                match name {
                    "section" => section = value.to_string(),
                    "epsilon" => meta.epsilon = num(value)?,
                    "eta" => meta.eta = num(value)?,
                    "builder" => meta.builder = value.to_string(),
                    _ => {}
                }
            }
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.first().is_some_and(|h| h.parse::<usize>().is_err()) {
            continue; // column header line
        }
        let grow = |rows: &mut Vec<SparseRow>, r: usize| {
            if rows.len() <= r {
                rows.resize(
                    r + 1,
                    SparseRow {
                        coeffs: vec![],
                        rhs: 0.0,
                    },
                );
            }
        };
        match (section.as_str(), f.as_slice()) {
            ("columns", [c, key, out, obj]) => {
                if idx(c)? != cols.len() {
                    return Err(bad("columns out of order"));
                }
                let key: AugmentedSecret = key.parse().map_err(|_| bad("bad key"))?;
                let out: LocId = out.parse().map_err(|_| bad("bad output"))?;
                if keys.last() != Some(&key) {
                    keys.push(key.clone());
                }
                if !outputs.contains(&out) {
                    outputs.push(out);
                }
                cols.push((key, out, num(obj)?));
            }
            (s @ ("le" | "eq"), [r, c, a]) => {
                let rows = if s == "le" { &mut le } else { &mut eq };
                let r = idx(r)?;
                grow(rows, r);
                rows[r].coeffs.push((idx(c)?, num(a)?));
            }
            (s @ ("le_rhs" | "eq_rhs"), [r, v]) => {
                let rows = if s == "le_rhs" { &mut le } else { &mut eq };
                let r = idx(r)?;
                grow(rows, r);
                rows[r].rhs = num(v)?;
            }
            ("bounds", [_, lo, hi]) => {
                if num(lo)? != 0.0 || num(hi)? != 1.0 {
                    return Err(bad("only [0,1] bounds are supported"));
                }
            }
            _ => return Err(bad("unexpected row")),
        }
    }
    if cols.len() != keys.len() * outputs.len() {
        return Err(Error::parse(path, 0, "columns do not form a key x output grid"));
    }
    Ok(LinearProgram {
        objective: cols.into_iter().map(|c| c.2).collect(),
        keys,
        outputs,
        le,
        eq,
        meta,
    })
}
