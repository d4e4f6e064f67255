//! Human-readable program dump.
//!
//! ```text
//! conic-program 1
//! var <index> <block>[<offset>] <lower> <upper> <scale>
//! objective <constant> <index>:<coef> ...
//! eq <label> <constant> <index>:<coef> ...
//! ge <label> <constant> <index>:<coef> ...
//! soc <label> <entries>
//!   entry <constant> <index>:<coef> ...
//! ```

use std::fmt::Write as _;

use super::{ConicProgram, LinExpr};

fn expr(out: &mut String, e: &LinExpr) {
    let _ = write!(out, " {:?}", e.constant);
    for &(i, c) in &e.terms {
        let _ = write!(out, " {i}:{c:?}");
    }
    out.push('\n');
}

pub fn dump_program(p: &ConicProgram) -> String {
    let mut s = String::from("conic-program 1\n");
    for b in &p.blocks {
        for k in 0..b.len {
            let i = b.start + k;
            let _ = writeln!(s, "var {i} {}[{k}] {:?} {:?} {:?}", b.name, p.lower[i], p.upper[i], p.scale[i]);
        }
    }
    s.push_str("objective");
    expr(&mut s, &p.objective);
    for r in &p.eq {
        let _ = write!(s, "eq {}", r.label.replace(' ', "_"));
        expr(&mut s, &r.expr);
    }
    for r in &p.ge {
        let _ = write!(s, "ge {}", r.label.replace(' ', "_"));
        expr(&mut s, &r.expr);
    }
    for c in &p.cones {
        let _ = writeln!(s, "soc {} {}", c.label.replace(' ', "_"), c.entries.len());
        for e in &c.entries {
            s.push_str("  entry");
            expr(&mut s, e);
        }
    }
    s
}
