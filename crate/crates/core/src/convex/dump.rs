//! Plain-text standard form.
//!
//! ```text
//! convex-program 1
//! vars <n>
//! constant <c0>
//! linear <c_1> ... <c_n>
//! hessian <count>          then <count> lines "<i> <j> <value>" with i <= j
//! bounds <count>           then lines "<i> <lower> <upper>" (inf allowed)
//! le <count>               then lines "<rhs> <k> <i>:<v> ..." meaning a'z <= rhs
//! eq <count>               same layout, a'z = rhs
//! norm <rows> <radius>     then <rows> lines "<offset> <M_r1> ... <M_rn>"
//! end
//! ```
//!
//! `norm 0 0` means no norm constraint. Indices are 0-based.

use nalgebra::{DMatrix, DVector};

use super::{ConvexProgram, LinearRow, NormConstraint};

pub(super) fn write_standard_form(p: &ConvexProgram) -> String {
    let n = p.num_vars();
    let mut out = String::new();
    out.push_str("convex-program 1\n");
    out.push_str(&format!("vars {n}\nconstant {}\n", p.constant));
    out.push_str("linear");
    for v in p.linear.iter() {
        out.push_str(&format!(" {v}"));
    }
    out.push('\n');
    let mut hess = Vec::new();
    for i in 0..n {
        for j in i..n {
            if p.hessian[(i, j)] != 0.0 {
                hess.push(format!("{i} {j} {}", p.hessian[(i, j)]));
            }
        }
    }
    out.push_str(&format!("hessian {}\n", hess.len()));
    for l in hess {
        out.push_str(&l);
        out.push('\n');
    }
    let bounds: Vec<usize> = (0..n).filter(|&i| p.lower[i].is_finite() || p.upper[i].is_finite()).collect();
    out.push_str(&format!("bounds {}\n", bounds.len()));
    for i in bounds {
        out.push_str(&format!("{i} {} {}\n", p.lower[i], p.upper[i]));
    }
    for (tag, rows) in [("le", &p.inequalities), ("eq", &p.equalities)] {
        out.push_str(&format!("{tag} {}\n", rows.len()));
        for r in rows.iter() {
            out.push_str(&format!("{} {}", r.rhs, r.terms.len()));
            for (i, v) in &r.terms {
                out.push_str(&format!(" {i}:{v}"));
            }
            out.push('\n');
        }
    }
    match &p.norm {
        Some(nc) => {
            out.push_str(&format!("norm {} {}\n", nc.matrix.nrows(), nc.radius));
            for r in 0..nc.matrix.nrows() {
                out.push_str(&format!("{}", nc.offset[r]));
                for j in 0..n {
                    out.push_str(&format!(" {}", nc.matrix[(r, j)]));
                }
                out.push('\n');
            }
        }
        None => out.push_str("norm 0 0\n"),
    }
    out.push_str("end\n");
    out
}

fn num(tok: Option<&str>, line: usize) -> Result<f64, String> {
    tok.ok_or(format!("line {line}: missing number"))?
        .parse::<f64>()
        .map_err(|e| format!("line {line}: {e}"))
}

fn int(tok: Option<&str>, line: usize) -> Result<usize, String> {
    tok.ok_or(format!("line {line}: missing integer"))?
        .parse::<usize>()
        .map_err(|e| format!("line {line}: {e}"))
}

/// Inverse of [`ConvexProgram::to_standard_form_text`].
pub fn parse_standard_form(text: &str) -> Result<ConvexProgram, String> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    let mut next = |key: &str| -> Result<(usize, Vec<String>), String> {
        let (no, l) = lines.next().ok_or(format!("unexpected end, expected {key}"))?;
        let toks: Vec<String> = l.split_whitespace().map(String::from).collect();
        if !key.is_empty() && toks.first().map(String::as_str) != Some(key) {
            return Err(format!("line {no}: expected '{key}'"));
        }
        Ok((no, toks))
    };
    let (no, t) = next("convex-program")?;
    if t.get(1).map(String::as_str) != Some("1") {
        return Err(format!("line {no}: unsupported version"));
    }
    let (no, t) = next("vars")?;
    let n = int(t.get(1).map(String::as_str), no)?;
    let mut p = ConvexProgram::new(n);
    let (no, t) = next("constant")?;
    p.constant = num(t.get(1).map(String::as_str), no)?;
    let (no, t) = next("linear")?;
    if t.len() != n + 1 {
        return Err(format!("line {no}: expected {n} coefficients"));
    }
    p.linear = DVector::from_iterator(n, t[1..].iter().map(|s| s.parse::<f64>().unwrap_or(f64::NAN)));
    let (no, t) = next("hessian")?;
    for _ in 0..int(t.get(1).map(String::as_str), no)? {
        let (no, t) = next("")?;
        let i = int(t.first().map(String::as_str), no)?;
        let j = int(t.get(1).map(String::as_str), no)?;
        let v = num(t.get(2).map(String::as_str), no)?;
        if i >= n || j >= n {
            return Err(format!("line {no}: index out of range"));
        }
        p.hessian[(i, j)] = v;
        p.hessian[(j, i)] = v;
    }
    let (no, t) = next("bounds")?;
    for _ in 0..int(t.get(1).map(String::as_str), no)? {
        let (no, t) = next("")?;
        let i = int(t.first().map(String::as_str), no)?;
        if i >= n {
            return Err(format!("line {no}: index out of range"));
        }
        p.lower[i] = num(t.get(1).map(String::as_str), no)?;
        p.upper[i] = num(t.get(2).map(String::as_str), no)?;
    }
    for key in ["le", "eq"] {
        let (no, t) = next(key)?;
        for _ in 0..int(t.get(1).map(String::as_str), no)? {
            let (no, t) = next("")?;
            let rhs = num(t.first().map(String::as_str), no)?;
            let k = int(t.get(1).map(String::as_str), no)?;
            let mut terms = Vec::with_capacity(k);
            for tok in t.iter().skip(2).take(k) {
                let (a, b) = tok.split_once(':').ok_or(format!("line {no}: bad term '{tok}'"))?;
                let i = int(Some(a), no)?;
                if i >= n {
                    return Err(format!("line {no}: index out of range"));
                }
                terms.push((i, num(Some(b), no)?));
            }
            let row = LinearRow::new(terms, rhs);
            if key == "le" {
                p.inequalities.push(row);
            } else {
                p.equalities.push(row);
            }
        }
    }
    let (no, t) = next("norm")?;
    let rows = int(t.get(1).map(String::as_str), no)?;
    let radius = num(t.get(2).map(String::as_str), no)?;
    if rows > 0 {
        let mut matrix = DMatrix::zeros(rows, n);
        let mut offset = DVector::zeros(rows);
        for r in 0..rows {
            let (no, t) = next("")?;
            if t.len() != n + 1 {
                return Err(format!("line {no}: expected {} numbers", n + 1));
            }
            offset[r] = num(t.first().map(String::as_str), no)?;
            for j in 0..n {
                matrix[(r, j)] = num(t.get(j + 1).map(String::as_str), no)?;
            }
        }
        p.norm = Some(NormConstraint { matrix, offset, radius });
    }
    next("end")?;
    p.validate()?;
    Ok(p)
}
