use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{norm, Real};

/// Finite atomic Levy measure `v = sum_i w_i delta_{z_i}` on `{|z| < c}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMeasure<T> {
    radius: T,
    mark_dim: usize,
    atoms: Vec<Vec<T>>,
    weights: Vec<T>,
    total: T,
}

impl<T: Real> JumpMeasure<T> {
    /// The zero measure: no jumps at all.
    pub fn empty() -> Self {
        Self { radius: T::one(), mark_dim: 1, atoms: Vec::new(), weights: Vec::new(), total: T::zero() }
    }

    pub fn new(radius: T, atoms: Vec<(Vec<T>, T)>) -> Result<Self> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::InvalidInput(format!("jump radius must be positive, got {radius}")));
        }
        let mark_dim = atoms.first().map(|a| a.0.len()).unwrap_or(1);
        let mut zs = Vec::with_capacity(atoms.len());
        let mut ws = Vec::with_capacity(atoms.len());
        for (i, (z, w)) in atoms.into_iter().enumerate() {
            if z.len() != mark_dim {
                return Err(Error::DimensionMismatch(format!("atom {i} has mark dimension {}", z.len())));
            }
            if !(norm(&z) < radius) {
                return Err(Error::InvalidInput(format!("atom {i} lies outside |z| < {radius}")));
            }
            if !(w > T::zero()) || !w.is_finite() {
                return Err(Error::InvalidInput(format!("atom {i} has non-positive weight {w}")));
            }
            zs.push(z);
            ws.push(w);
        }
        let total = ws.iter().copied().sum();
        Ok(Self { radius, mark_dim, atoms: zs, weights: ws, total })
    }

    /// Scalar-mark convenience: `(z, w)` pairs.
    pub fn scalar(radius: T, atoms: &[(T, T)]) -> Result<Self> {
        Self::new(radius, atoms.iter().map(|&(z, w)| (vec![z], w)).collect())
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    /// Total mass `lambda_v`, the jump rate of `N`.
    pub fn total_rate(&self) -> T {
        self.total
    }

    pub fn atom(&self, i: usize) -> &[T] {
        &self.atoms[i]
    }

    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        self.atoms.iter().map(|z| z.as_slice()).zip(self.weights.iter().copied())
    }

    /// Atom index selected by a uniform draw `u in [0, 1)` with probability
    /// proportional to its weight.
    pub fn pick(&self, u: T) -> usize {
        let target = u * self.total;
        let mut acc = T::zero();
        for (i, &w) in self.weights.iter().enumerate() {
            acc += w;
            if target < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

/// `sum_i w_i coef(z_i)`: the exact compensator drift of an atomic measure.
/// `coef` writes the coefficient at mark `z` into its (zeroed) output buffer.
pub fn jump_compensator_drift<T: Real>(
    measure: &JumpMeasure<T>,
    out: &mut [T],
    mut coef: impl FnMut(&[T], &mut [T]),
) {
    out.fill(T::zero());
    if measure.is_empty() {
        return;
    }
    let mut buf = vec![T::zero(); out.len()];
    for (z, w) in measure.iter() {
        buf.fill(T::zero());
        coef(z, &mut buf);
        for (o, &b) in out.iter_mut().zip(&buf) {
            *o += w * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensator_examples() {
        let sym = JumpMeasure::scalar(2.0, &[(1.0, 0.5), (-1.0, 0.5)]).unwrap();
        let mut out = [9.0];
        jump_compensator_drift(&sym, &mut out, |_, o| o[0] = 0.0);
        assert_eq!(out, [0.0]);
        jump_compensator_drift(&sym, &mut out, |z, o| o[0] = z[0]);
        assert_eq!(out, [0.0]);
        let m = JumpMeasure::scalar(2.0, &[(1.0, 2.0), (0.5, 1.0)]).unwrap();
        jump_compensator_drift(&m, &mut out, |z, o| o[0] = z[0] * z[0]);
        assert_eq!(out, [2.25]);
    }

    #[test]
    fn empty_measure_has_zero_rate() {
        let e = JumpMeasure::<f64>::empty();
        assert!(e.is_empty());
        assert_eq!(e.total_rate(), 0.0);
        let mut out = [3.0];
        jump_compensator_drift(&e, &mut out, |_, o| o[0] = 1.0);
        assert_eq!(out, [0.0]);
    }

    #[test]
    fn atoms_must_lie_inside_radius() {
        assert!(JumpMeasure::scalar(1.0, &[(1.0, 1.0)]).is_err());
        assert!(JumpMeasure::scalar(1.0, &[(0.5, 0.0)]).is_err());
        assert!(JumpMeasure::scalar(0.0, &[(0.5, 1.0)]).is_err());
    }

    #[test]
    fn pick_respects_weights() {
        let m = JumpMeasure::scalar(1.0, &[(0.1, 1.0), (0.2, 3.0)]).unwrap();
        assert_eq!(m.pick(0.0), 0);
        assert_eq!(m.pick(0.24), 0);
        assert_eq!(m.pick(0.26), 1);
        assert_eq!(m.pick(0.999), 1);
    }
}
