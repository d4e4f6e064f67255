//! Plain-text channel dump.
//!
//! ```text
//! fdnoma-channels 1
//! dims <N> <Z> <K> <L>
//! noise_power <f64>
//! rho_sq <f64>
//! h_dl <zone> <k> <re> <im> ... (N pairs)
//! h_ul <l> <re> <im> ... (N pairs)
//! g_si <row> <re> <im> ... (N pairs)
//! g_cci <l> <zone> <k> <re> <im>
//! ```
//! Floats use Rust's shortest round-trip formatting, so parsing is lossless.

use std::fmt::Write as _;

use num_complex::Complex64;

use super::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

const MAGIC: &str = "fdnoma-channels 1";

fn push_complex(out: &mut String, v: impl IntoIterator<Item = Complex64>) {
    for x in v {
        let _ = write!(out, " {:?} {:?}", x.re, x.im);
    }
    out.push('\n');
}

pub fn write_channel_dump(ch: &ChannelSet) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "dims {} {} {} {}", ch.n_antennas, ch.n_zones(), ch.users_per_zone(), ch.n_uplink());
    let _ = writeln!(s, "noise_power {:?}", ch.noise_power);
    let _ = writeln!(s, "rho_sq {:?}", ch.rho_sq);
    for (z, zone) in ch.h_dl.iter().enumerate() {
        for (k, h) in zone.iter().enumerate() {
            let _ = write!(s, "h_dl {z} {k}");
            push_complex(&mut s, h.iter().copied());
        }
    }
    for (l, h) in ch.h_ul.iter().enumerate() {
        let _ = write!(s, "h_ul {l}");
        push_complex(&mut s, h.iter().copied());
    }
    for r in 0..ch.n_antennas {
        let _ = write!(s, "g_si {r}");
        push_complex(&mut s, ch.g_si.row(r).iter().copied());
    }
    for (l, per_zone) in ch.g_cci.iter().enumerate() {
        for (z, users) in per_zone.iter().enumerate() {
            for (k, g) in users.iter().enumerate() {
                let _ = write!(s, "g_cci {l} {z} {k}");
                push_complex(&mut s, [*g]);
            }
        }
    }
    s
}

fn perr(line: usize, msg: &str) -> Error {
    Error::Parse(format!("line {}: {msg}", line + 1))
}

pub fn parse_channel_dump(text: &str) -> Result<ChannelSet> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => return Err(Error::Parse("missing header".into())),
    }
    let mut dims = None;
    let mut noise = None;
    let mut rho = None;
    let mut h_dl: Vec<Vec<Option<CVec>>> = Vec::new();
    let mut h_ul: Vec<Option<CVec>> = Vec::new();
    let mut g_rows: Vec<Option<Vec<Complex64>>> = Vec::new();
    let mut g_cci: Vec<Vec<Vec<Option<Complex64>>>> = Vec::new();
    for (no, line) in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        let idx = |i: usize| -> Result<usize> {
            tok.get(i).ok_or_else(|| perr(no, "missing index"))?.parse().map_err(|_| perr(no, "bad index"))
        };
        let floats = |from: usize| -> Result<Vec<f64>> {
            tok[from..].iter().map(|t| t.parse::<f64>().map_err(|_| perr(no, "bad float"))).collect()
        };
        let complexes = |from: usize, n: usize| -> Result<Vec<Complex64>> {
            let f = floats(from)?;
            if f.len() != 2 * n {
                return Err(perr(no, "wrong number of entries"));
            }
            Ok(f.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect())
        };
        match tok[0] {
            "dims" => {
                let d = (idx(1)?, idx(2)?, idx(3)?, idx(4)?);
                h_dl = vec![vec![None; d.2]; d.1];
                h_ul = vec![None; d.3];
                g_rows = vec![None; d.0];
                g_cci = vec![vec![vec![None; d.2]; d.1]; d.3];
                dims = Some(d);
            }
            "noise_power" => noise = Some(floats(1)?.first().copied().ok_or_else(|| perr(no, "empty"))?),
            "rho_sq" => rho = Some(floats(1)?.first().copied().ok_or_else(|| perr(no, "empty"))?),
            "h_dl" => {
                let n = dims.ok_or_else(|| perr(no, "dims must come first"))?.0;
                let (z, k) = (idx(1)?, idx(2)?);
                let slot = h_dl.get_mut(z).and_then(|v| v.get_mut(k)).ok_or_else(|| perr(no, "index out of range"))?;
                *slot = Some(CVec::from_vec(complexes(3, n)?));
            }
            "h_ul" => {
                let n = dims.ok_or_else(|| perr(no, "dims must come first"))?.0;
                let l = idx(1)?;
                let slot = h_ul.get_mut(l).ok_or_else(|| perr(no, "index out of range"))?;
                *slot = Some(CVec::from_vec(complexes(2, n)?));
            }
            "g_si" => {
                let n = dims.ok_or_else(|| perr(no, "dims must come first"))?.0;
                let r = idx(1)?;
                let slot = g_rows.get_mut(r).ok_or_else(|| perr(no, "index out of range"))?;
                *slot = Some(complexes(2, n)?);
            }
            "g_cci" => {
                let (l, z, k) = (idx(1)?, idx(2)?, idx(3)?);
                let slot = g_cci
                    .get_mut(l)
                    .and_then(|v| v.get_mut(z))
                    .and_then(|v| v.get_mut(k))
                    .ok_or_else(|| perr(no, "index out of range"))?;
                *slot = Some(complexes(4, 1)?[0]);
            }
            other => return Err(perr(no, &format!("unknown record {other:?}"))),
        }
    }
    let (n, _, _, _) = dims.ok_or_else(|| Error::Parse("missing dims".into()))?;
    let missing = || Error::Parse("incomplete dump".into());
    let h_dl = h_dl
        .into_iter()
        .map(|z| z.into_iter().collect::<Option<Vec<_>>>())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(missing)?;
    let h_ul = h_ul.into_iter().collect::<Option<Vec<_>>>().ok_or_else(missing)?;
    let rows = g_rows.into_iter().collect::<Option<Vec<_>>>().ok_or_else(missing)?;
    let g_si = CMat::from_fn(n, n, |r, c| rows[r][c]);
    let g_cci = g_cci
        .into_iter()
        .map(|l| l.into_iter().map(|z| z.into_iter().collect::<Option<Vec<_>>>()).collect::<Option<Vec<_>>>())
        .collect::<Option<Vec<_>>>()
        .ok_or_else(missing)?;
    let ch = ChannelSet {
        n_antennas: n,
        h_dl,
        h_ul,
        g_si,
        g_cci,
        rho_sq: rho.ok_or_else(missing)?,
        noise_power: noise.ok_or_else(missing)?,
    };
    ch.validate()?;
    Ok(ch)
}
