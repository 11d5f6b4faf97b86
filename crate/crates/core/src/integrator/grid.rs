use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Uniform time grid `t0, t0 + dt, ..., t_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGrid<T> {
    t0: T,
    t_end: T,
    dt: T,
    steps: usize,
}

impl<T: Real> PathGrid<T> {
    /// The horizon must be an integer multiple of `dt` up to `1e-9 dt`
    /// (or a few ulps for single precision).
    pub fn new(t0: T, t_end: T, dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::InvalidInput(format!("empty horizon [{t0}, {t_end}]")));
        }
        let span = t_end - t0;
        let n = (span / dt).round();
        let tol = T::lit(1e-9).max(T::lit(64.0) * T::epsilon() * (span / dt).max(T::one())) * dt;
        if (span - n * dt).abs() >= tol || n < T::one() {
            return Err(Error::InvalidInput(format!(
                "horizon {span} is not a whole number of steps of {dt}"
            )));
        }
        let steps = n.to_usize().ok_or_else(|| Error::InvalidInput("too many steps".into()))?;
        Ok(Self { t0, t_end, dt, steps })
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn t_end(&self) -> T {
        self.t_end
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of nodes, `steps + 1`.
    pub fn nodes(&self) -> usize {
        self.steps + 1
    }

    /// Time of node `k`; the last node is exactly `t_end`.
    pub fn time(&self, k: usize) -> T {
        if k >= self.steps {
            self.t_end
        } else {
            self.t0 + T::from_usize_lossy(k) * self.dt
        }
    }

    /// Node sitting at time `t`, if `t` is a grid time.
    pub fn node_at(&self, t: T) -> Option<usize> {
        let k = ((t - self.t0) / self.dt).round();
        if k < T::zero() || k > T::from_usize_lossy(self.steps) {
            return None;
        }
        let k = k.to_usize()?;
        let tol = T::lit(1e-9).max(T::lit(64.0) * T::epsilon() * T::from_usize_lossy(k.max(1))) * self.dt;
        ((self.time(k) - t).abs() < tol).then_some(k)
    }

    /// Same horizon with a different step.
    pub fn with_dt(&self, dt: T) -> Result<Self> {
        Self::new(self.t0, self.t_end, dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_invariants() {
        let g = PathGrid::new(0.0, 1.0, 1e-3).unwrap();
        assert_eq!(g.steps(), 1000);
        assert_eq!(g.time(1000), 1.0);
        assert_eq!(g.node_at(0.5), Some(500));
        assert_eq!(g.node_at(0.5005), None);
        assert!(PathGrid::new(0.0, 1.0, 0.3).is_err());
        assert!(PathGrid::new(0.0, 1.0, -0.1).is_err());
        assert!(PathGrid::new(1.0, 1.0, 0.1).is_err());
        assert!(PathGrid::new(0.0f32, 1.0, 0.01).is_ok());
    }
}
