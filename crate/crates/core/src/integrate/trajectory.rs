use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    HorizonReached,
    /// Velocities diverged; `t_star` is the speed-ceiling crossing time.
    BlowUpSuspected { t_star: f64 },
    ChartExit { t_exit: f64 },
    ToleranceFailure { t: f64 },
}

impl Outcome {
    /// Stable integer code used in completeness maps.
    pub fn code(&self) -> u8 {
        match self {
            Outcome::HorizonReached => 0,
            Outcome::BlowUpSuspected { .. } => 1,
            Outcome::ChartExit { .. } => 2,
            Outcome::ToleranceFailure { .. } => 3,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::HorizonReached => "HorizonReached",
            Outcome::BlowUpSuspected { .. } => "BlowUpSuspected",
            Outcome::ChartExit { .. } => "ChartExit",
            Outcome::ToleranceFailure { .. } => "ToleranceFailure",
        }
    }

    pub fn is_blowup(&self) -> bool {
        matches!(self, Outcome::BlowUpSuspected { .. })
    }

    /// Blow-up time estimate, if any.
    pub fn t_star(&self) -> Option<f64> {
        match self {
            Outcome::BlowUpSuspected { t_star } => Some(*t_star),
            _ => None,
        }
    }
}

/// One accepted state. `xddot` is kept for the Hermite interpolant of `ẋ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub t: f64,
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
    pub xddot: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub direction: Direction,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    pub stats: Stats,
}

/// Cubic Hermite interpolation on `[0, 1]` with endpoint slopes scaled by `h`.
pub(crate) fn hermite(theta: f64, h: f64, y0: f64, m0: f64, y1: f64, m1: f64) -> f64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.steps.first().map_or(0, |s| s.x.len())
    }

    pub fn first(&self) -> &StepRecord {
        &self.steps[0]
    }

    pub fn last(&self) -> &StepRecord {
        self.steps.last().expect("trajectory has at least the initial state")
    }

    /// Covered time interval `[lo, hi]` regardless of direction.
    pub fn t_range(&self) -> (f64, f64) {
        let a = self.first().t;
        let b = self.last().t;
        (a.min(b), a.max(b))
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.steps.iter().map(|s| s.t)
    }

    /// Dense output `(x, ẋ)` at `t` by cubic Hermite interpolation of the
    /// bracketing accepted steps.
    pub fn sample(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let (lo, hi) = self.t_range();
        if !(lo..=hi).contains(&t) {
            return Err(Error::OutOfRange { t, lo, hi });
        }
        let sign = self.direction.sign();
        // steps are increasing in sign·t
        let key = sign * t;
        let idx = self.steps.partition_point(|s| sign * s.t < key);
        if idx < self.steps.len() && self.steps[idx].t == t {
            let s = &self.steps[idx];
            return Ok((s.x.clone(), s.xdot.clone()));
        }
        let a = &self.steps[idx - 1];
        let b = &self.steps[idx];
        let h = b.t - a.t;
        let theta = (t - a.t) / h;
        let n = a.x.len();
        let x = (0..n)
            .map(|i| hermite(theta, h, a.x[i], a.xdot[i], b.x[i], b.xdot[i]))
            .collect();
        let xdot = (0..n)
            .map(|i| hermite(theta, h, a.xdot[i], a.xddot[i], b.xdot[i], b.xddot[i]))
            .collect();
        Ok((x, xdot))
    }

    /// CSV with header `t,x1..xn,xdot1..xdotn`, shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("xdot{i}")));
        writeln!(out, "{}", header.join(","))?;
        for s in &self.steps {
            let mut row = vec![s.t.to_string()];
            row.extend(s.x.iter().map(f64::to_string));
            row.extend(s.xdot.iter().map(f64::to_string));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> Trajectory {
        // x(t) = t², ẋ = 2t, ẍ = 2 sampled at t = 0, 1, 2
        let steps = (0..3)
            .map(|i| {
                let t = i as f64;
                StepRecord {
                    t,
                    x: vec![t * t],
                    xdot: vec![2.0 * t],
                    xddot: vec![2.0],
                }
            })
            .collect();
        Trajectory {
            direction: Direction::Forward,
            steps,
            outcome: Outcome::HorizonReached,
            stats: Stats::default(),
        }
    }

    #[test]
    fn sample_at_nodes_is_exact() {
        let tr = line();
        assert_eq!(tr.sample(1.0).unwrap(), (vec![1.0], vec![2.0]));
        assert_eq!(tr.sample(2.0).unwrap(), (vec![4.0], vec![4.0]));
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let tr = line();
        let (x, xd) = tr.sample(1.25).unwrap();
        assert!((x[0] - 1.5625).abs() < 1e-15);
        assert!((xd[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn sample_outside_is_an_error() {
        assert!(matches!(line().sample(2.5), Err(Error::OutOfRange { .. })));
        assert!(matches!(line().sample(-0.1), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn backward_sampling() {
        let mut tr = line();
        tr.direction = Direction::Backward;
        for s in tr.steps.iter_mut() {
            s.t = -s.t;
            s.xdot[0] = -s.xdot[0];
        }
        // x(t) = t² again, now on [−2, 0]
        let (x, xd) = tr.sample(-1.5).unwrap();
        assert!((x[0] - 2.25).abs() < 1e-15);
        assert!((xd[0] + 3.0).abs() < 1e-15);
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        line().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,x1,xdot1"));
        assert_eq!(lines.next(), Some("0,0,0"));
        assert_eq!(lines.nth(1), Some("2,4,4"));
    }
}
