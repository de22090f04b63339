//! Finite discrete distributions.

use std::io::Write;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance on the total probability mass.
pub const MASS_TOL: f64 = 1e-12;

/// A distribution with finitely many atoms on a strictly increasing support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist<S = f64> {
    support: Vec<S>,
    probs: Vec<S>,
}

impl<S: Scalar> DiscreteDist<S> {
    pub fn new(support: Vec<S>, probs: Vec<S>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDist("empty support".into()));
        }
        if support.len() != probs.len() {
            return Err(Error::InvalidDist(format!(
                "{} support points but {} probabilities",
                support.len(),
                probs.len()
            )));
        }
        if support.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidDist("support must be strictly increasing".into()));
        }
        if probs.iter().any(|p| *p < S::zero() || !p.is_finite_value()) {
            return Err(Error::InvalidDist("negative or non-finite probability".into()));
        }
        let total = probs.iter().fold(S::zero(), |acc, p| acc + p.clone());
        if (total.as_f64() - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidDist(format!("probabilities sum to {}", total.as_f64())));
        }
        Ok(Self { support, probs })
    }

    /// Build from unordered, possibly repeated atoms; equal values are merged.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (S, S)>) -> Result<Self> {
        let mut atoms: Vec<(S, S)> = atoms.into_iter().collect();
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("unordered atom value"));
        let mut support: Vec<S> = Vec::with_capacity(atoms.len());
        let mut probs: Vec<S> = Vec::with_capacity(atoms.len());
        for (v, p) in atoms {
            match support.last() {
                Some(last) if *last == v => {
                    let q = probs.pop().expect("probs tracks support");
                    probs.push(q + p);
                }
                _ => {
                    support.push(v);
                    probs.push(p);
                }
            }
        }
        Self::new(support, probs)
    }

    pub fn point_mass(value: S) -> Self {
        Self {
            support: vec![value],
            probs: vec![S::one()],
        }
    }

    pub fn support(&self) -> &[S] {
        &self.support
    }

    pub fn probs(&self) -> &[S] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&S, &S)> {
        self.support.iter().zip(self.probs.iter())
    }

    pub fn mean(&self) -> S {
        self.iter()
            .fold(S::zero(), |acc, (v, p)| acc + v.clone() * p.clone())
    }

    /// Apply a map to every atom; the result is re-sorted and merged.
    pub fn map(&self, f: impl Fn(&S) -> S) -> Result<Self> {
        Self::from_atoms(self.iter().map(|(v, p)| (f(v), p.clone())))
    }
}

impl DiscreteDist<f64> {
    /// `value,probability` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "value,probability")?;
        for (v, p) in self.iter() {
            writeln!(out, "{v:.6},{p:.12e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_inputs() {
        assert!(DiscreteDist::new(vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteDist::new(vec![1.0, 2.0], vec![0.5, 0.4]).is_err());
        assert!(DiscreteDist::new(vec![1.0, 2.0], vec![1.5, -0.5]).is_err());
        assert!(DiscreteDist::<f64>::new(vec![], vec![]).is_err());
    }

    #[test]
    fn merges_atoms() {
        let d = DiscreteDist::from_atoms([(3.0, 0.25), (1.0, 0.5), (3.0, 0.25)]).unwrap();
        assert_eq!(d.support(), &[1.0, 3.0]);
        assert_eq!(d.probs(), &[0.5, 0.5]);
        assert_eq!(d.mean(), 2.0);
    }

    #[test]
    fn csv_layout() {
        let d = DiscreteDist::new(vec![-1.0, 2.0], vec![0.25, 0.75]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next(), Some("value,probability"));
        assert_eq!(s.lines().count(), 3);
    }
}
