//! Fixed-format MPS export.

use std::io::Write;

use super::{LinearProgram, Sense};

fn num(v: f64) -> String {
    let s = format!("{v}");
    if s.len() <= 12 {
        s
    } else {
        format!("{v:.5E}")
    }
}

fn field_line(out: &mut impl Write, f1: &str, f2: &str, f3: &str, f4: &str) -> std::io::Result<()> {
    writeln!(out, " {:<2} {:<8}  {:<8}  {:>12}", f1, f2, f3, f4)
}

/// Writes `lp` in fixed MPS. Rows are named `E*` (equalities), `L*`
/// (inequalities) and columns `C*`.
pub fn write_mps(lp: &LinearProgram, name: &str, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "NAME          {}", &name[..name.len().min(8)])?;
    if lp.sense == Sense::Max {
        writeln!(out, "OBJSENSE")?;
        writeln!(out, "    MAX")?;
    }
    writeln!(out, "ROWS")?;
    writeln!(out, " N  OBJ")?;
    for i in 0..lp.eq.len() {
        writeln!(out, " E  E{i}")?;
    }
    for i in 0..lp.ineq.len() {
        writeln!(out, " L  L{i}")?;
    }
    let n = lp.n_vars();
    let mut cols: Vec<Vec<(String, f64)>> = vec![Vec::new(); n];
    for (j, &c) in lp.objective.iter().enumerate() {
        if c != 0.0 {
            cols[j].push(("OBJ".into(), c));
        }
    }
    for (i, r) in lp.eq.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            cols[j].push((format!("E{i}"), a));
        }
    }
    for (i, r) in lp.ineq.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            cols[j].push((format!("L{i}"), a));
        }
    }
    writeln!(out, "COLUMNS")?;
    for (j, entries) in cols.iter().enumerate() {
        let cname = format!("C{j}");
        if entries.is_empty() {
            field_line(out, "", &cname, "OBJ", "0")?;
        }
        for (row, v) in entries {
            field_line(out, "", &cname, row, &num(*v))?;
        }
    }
    writeln!(out, "RHS")?;
    for (i, r) in lp.eq.iter().enumerate() {
        if r.rhs != 0.0 {
            field_line(out, "", "RHS", &format!("E{i}"), &num(r.rhs))?;
        }
    }
    for (i, r) in lp.ineq.iter().enumerate() {
        if r.rhs != 0.0 {
            field_line(out, "", "RHS", &format!("L{i}"), &num(r.rhs))?;
        }
    }
    writeln!(out, "BOUNDS")?;
    for j in 0..n {
        let cname = format!("C{j}");
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        if lo == hi {
            field_line(out, "FX", "BND", &cname, &num(lo))?;
            continue;
        }
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => field_line(out, "FR", "BND", &cname, "")?,
            (false, true) => {
                field_line(out, "MI", "BND", &cname, "")?;
                field_line(out, "UP", "BND", &cname, &num(hi))?;
            }
            (true, _) => {
                if lo != 0.0 {
                    field_line(out, "LO", "BND", &cname, &num(lo))?;
                }
                if hi.is_finite() {
                    field_line(out, "UP", "BND", &cname, &num(hi))?;
                }
            }
        }
    }
    writeln!(out, "ENDATA")
}
