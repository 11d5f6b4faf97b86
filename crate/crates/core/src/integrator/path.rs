use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::real::{format_round_trip, Real};
use crate::switching::SwitchingPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JumpComponent {
    Slow,
    Fast,
}

impl JumpComponent {
    pub fn as_str(self) -> &'static str {
        match self {
            JumpComponent::Slow => "slow",
            JumpComponent::Fast => "fast",
        }
    }
}

/// A Poisson event applied at the end of the step ending at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent<T> {
    pub t: T,
    pub component: JumpComponent,
    pub atom: usize,
    pub z: Vec<T>,
}

/// Discretised trajectory on a [`PathGrid`](super::PathGrid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath<T> {
    pub(crate) times: Vec<T>,
    pub(crate) slow_dim: usize,
    pub(crate) fast_dim: usize,
    pub(crate) x: Vec<T>,
    pub(crate) xi: Vec<T>,
    pub(crate) regimes: Vec<usize>,
    pub(crate) switching: SwitchingPath<T>,
    pub(crate) jumps: Vec<JumpEvent<T>>,
}

impl<T: Real> SamplePath<T> {
    pub(crate) fn with_capacity(nodes: usize, slow_dim: usize, fast_dim: usize, switching: SwitchingPath<T>) -> Self {
        Self {
            times: Vec::with_capacity(nodes),
            slow_dim,
            fast_dim,
            x: Vec::with_capacity(nodes * slow_dim),
            xi: Vec::with_capacity(nodes * fast_dim),
            regimes: Vec::with_capacity(nodes),
            switching,
            jumps: Vec::new(),
        }
    }

    pub(crate) fn push(&mut self, t: T, x: &[T], xi: &[T], regime: usize) {
        self.times.push(t);
        self.x.extend_from_slice(x);
        self.xi.extend_from_slice(xi);
        self.regimes.push(regime);
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn nodes(&self) -> usize {
        self.times.len()
    }

    pub fn slow_dim(&self) -> usize {
        self.slow_dim
    }

    pub fn fast_dim(&self) -> usize {
        self.fast_dim
    }

    pub fn x_at(&self, k: usize) -> &[T] {
        &self.x[k * self.slow_dim..(k + 1) * self.slow_dim]
    }

    pub fn xi_at(&self, k: usize) -> &[T] {
        &self.xi[k * self.fast_dim..(k + 1) * self.fast_dim]
    }

    pub fn regime_at(&self, k: usize) -> usize {
        self.regimes[k]
    }

    pub fn regimes(&self) -> &[usize] {
        &self.regimes
    }

    pub fn terminal_x(&self) -> &[T] {
        self.x_at(self.nodes() - 1)
    }

    pub fn terminal_xi(&self) -> &[T] {
        self.xi_at(self.nodes() - 1)
    }

    /// The exactly simulated regime path the trajectory was driven by.
    pub fn switching(&self) -> &SwitchingPath<T> {
        &self.switching
    }

    pub fn jumps(&self) -> &[JumpEvent<T>] {
        &self.jumps
    }

    /// Columns `t, x_1.., xi_1.., regime`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.slow_dim).map(|i| format!("x_{i}")));
        header.extend((1..=self.fast_dim).map(|i| format!("xi_{i}")));
        header.push("regime".into());
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.nodes() {
            let mut row = vec![format_round_trip(self.times[k])];
            row.extend(self.x_at(k).iter().map(|&v| format_round_trip(v)));
            row.extend(self.xi_at(k).iter().map(|&v| format_round_trip(v)));
            row.push(self.regimes[k].to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Columns `t, component, z_1..`.
    pub fn write_jump_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mark_dim = self.jumps.first().map_or(1, |e| e.z.len());
        let mut header = vec!["t".to_string(), "component".to_string()];
        header.extend((1..=mark_dim).map(|i| format!("z_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for e in &self.jumps {
            let mut row = vec![format_round_trip(e.t), e.component.as_str().to_string()];
            row.extend(e.z.iter().map(|&v| format_round_trip(v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}
