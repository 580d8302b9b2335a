use std::fmt::Write;

use super::{LinearProgram, RowKind, Sense};

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect()
}

fn term(out: &mut String, first: bool, coef: f64, name: &str) {
    let sign = if coef < 0.0 { '-' } else { '+' };
    if first && coef >= 0.0 {
        write!(out, " {} {}", fmt_num(coef.abs()), name).unwrap();
    } else {
        write!(out, " {} {} {}", sign, fmt_num(coef.abs()), name).unwrap();
    }
}

// `Display` for f64 prints the shortest string that round-trips
fn fmt_num(v: f64) -> String {
    format!("{}", v)
}

/// Renders the program in CPLEX LP text format for cross-checking with an
/// external solver. Column names come from [`LinearProgram::names`].
pub fn write_lp_format(lp: &LinearProgram) -> String {
    let names: Vec<String> = (0..lp.num_vars())
        .map(|j| lp.names.get(j).map(|s| sanitize(s)).unwrap_or_else(|| format!("x{j}")))
        .collect();
    let mut out = String::new();
    out.push_str("\\ generated by drmdp\n");
    out.push_str(match lp.sense {
        Sense::Minimize => "Minimize\n",
        Sense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    let mut first = true;
    for (j, &c) in lp.cost.iter().enumerate() {
        if c != 0.0 {
            term(&mut out, first, c, &names[j]);
            first = false;
        }
    }
    if first {
        out.push_str(" 0 ");
        out.push_str(names.first().map(String::as_str).unwrap_or("x0"));
    }
    out.push_str("\nSubject To\n");
    for (i, row) in lp.rows.iter().enumerate() {
        write!(out, " r{}:", i).unwrap();
        let mut first = true;
        for &(j, a) in &row.coefs {
            term(&mut out, first, a, &names[j]);
            first = false;
        }
        if first {
            write!(out, " 0 {}", names.first().map(String::as_str).unwrap_or("x0")).unwrap();
        }
        let op = match row.kind {
            RowKind::Le => "<=",
            RowKind::Eq => "=",
            RowKind::Ge => ">=",
        };
        writeln!(out, " {} {}", op, fmt_num(row.rhs)).unwrap();
    }
    out.push_str("Bounds\n");
    for j in 0..lp.num_vars() {
        let (lo, hi) = (lp.lower[j], lp.upper[j]);
        let n = &names[j];
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => writeln!(out, " {} free", n).unwrap(),
            (true, true) if lo == hi => writeln!(out, " {} = {}", n, fmt_num(lo)).unwrap(),
            (true, true) => writeln!(out, " {} <= {} <= {}", fmt_num(lo), n, fmt_num(hi)).unwrap(),
            (true, false) => {
                if lo != 0.0 {
                    writeln!(out, " {} >= {}", n, fmt_num(lo)).unwrap()
                }
            }
            (false, true) => writeln!(out, " -inf <= {} <= {}", n, fmt_num(hi)).unwrap(),
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_program_renders_all_sections() {
        let mut lp = LinearProgram::new(Sense::Maximize);
        let a = lp.add_named_var("pi[0]", 0.0, f64::INFINITY, 2.0);
        let b = lp.add_named_var("eta", f64::NEG_INFINITY, f64::INFINITY, -1.0);
        lp.add_row(vec![(a, 1.0), (b, -0.5)], RowKind::Le, 3.0);
        let text = write_lp_format(&lp);
        assert!(text.contains("Maximize\n obj: 2 pi[0] - 1 eta\n"));
        assert!(text.contains(" r0: 1 pi[0] - 0.5 eta <= 3\n"));
        assert!(text.contains(" eta free\n"));
        assert!(text.ends_with("End\n"));
    }
}
