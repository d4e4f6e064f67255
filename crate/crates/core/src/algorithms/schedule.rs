use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Penalty weight per outer iteration (`kappa` starts at 1).
pub trait PenaltySchedule: Send + Sync + Debug {
    fn describe(&self) -> String;
    fn rho(&self, kappa: usize) -> f64;
}

/// `min(base^kappa, cap)`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometric {
    pub base: f64,
    pub cap: f64,
}

impl Geometric {
    pub const DEFAULT_CAP: f64 = 1e6;

    pub fn new(base: f64) -> Self {
        Geometric { base, cap: Self::DEFAULT_CAP }
    }
}

impl Default for Geometric {
    fn default() -> Self {
        Geometric::new(3.0)
    }
}

impl PenaltySchedule for Geometric {
    fn describe(&self) -> String {
        format!("geometric:{}", self.base)
    }

    fn rho(&self, kappa: usize) -> f64 {
        let e = i32::try_from(kappa).unwrap_or(i32::MAX);
        self.base.powi(e).min(self.cap)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constant(pub f64);

impl PenaltySchedule for Constant {
    fn describe(&self) -> String {
        format!("constant:{}", self.0)
    }

    fn rho(&self, _kappa: usize) -> f64 {
        self.0
    }
}

/// Parses `geometric:<base>` or `constant:<rho>`; a bare number is a geometric base.
pub fn parse_schedule(s: &str) -> Result<Arc<dyn PenaltySchedule>> {
    let (kind, value) = s.split_once(':').unwrap_or(("geometric", s));
    let v: f64 = value.trim().parse().map_err(|_| Error::Parse(format!("bad penalty schedule value `{value}`")))?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Config("penalty schedule value must be positive".into()));
    }
    match kind.trim() {
        "geometric" if v > 1.0 => Ok(Arc::new(Geometric::new(v))),
        "geometric" => Err(Error::Config("geometric penalty base must exceed 1".into())),
        "constant" => Ok(Arc::new(Constant(v))),
        other => Err(Error::Config(format!("unknown penalty schedule `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_powers_and_cap() {
        let g = Geometric::default();
        let got: Vec<f64> = (1..=4).map(|k| g.rho(k)).collect();
        assert_eq!(got, vec![3.0, 9.0, 27.0, 81.0]);
        assert_eq!(g.rho(13), 1e6);
        assert_eq!(g.rho(500), 1e6);
    }

    #[test]
    fn parsing() {
        assert_eq!(parse_schedule("3").unwrap().rho(2), 9.0);
        assert_eq!(parse_schedule("constant:5").unwrap().rho(7), 5.0);
        assert!(parse_schedule("geometric:1").is_err());
        assert!(parse_schedule("linear:2").is_err());
        assert!(parse_schedule("x").is_err());
    }
}
