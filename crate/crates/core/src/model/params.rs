use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::Real;
use crate::error::{Error, Result};

/// One named parameter array.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T> Param<T> {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered, named parameter arrays tied to the spec that created them.
///
/// The name set and every shape are fixed at construction; updates only
/// touch values.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    fingerprint: u64,
    params: Vec<Param<T>>,
}

/// Gradients share the parameter layout.
pub type Gradients<T> = ParamSet<T>;

impl<T: Real> ParamSet<T> {
    pub(crate) fn new(fingerprint: u64, params: Vec<Param<T>>) -> Self {
        Self {
            fingerprint,
            params,
        }
    }

    /// Rebuilds a set from stored arrays, e.g. a weights file. The caller
    /// checks the result against a spec with [`ParamSet::check_layout`].
    pub fn from_parts(fingerprint: u64, params: Vec<Param<T>>) -> Result<Self> {
        for p in &params {
            let expected: usize = p.shape.iter().product();
            if expected != p.data.len() {
                return Err(Error::shape(
                    format!("{expected} values for {} {:?}", p.name, p.shape),
                    format!("{}", p.data.len()),
                ));
            }
        }
        Ok(Self::new(fingerprint, params))
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub(crate) fn data(&self, index: usize) -> &[T] {
        &self.params[index].data
    }

    pub(crate) fn data_mut(&mut self, index: usize) -> &mut [T] {
        &mut self.params[index].data
    }

    /// Two distinct arrays at once, `first < second`.
    pub(crate) fn pair_mut(&mut self, first: usize, second: usize) -> (&mut [T], &mut [T]) {
        assert!(first < second);
        let (head, tail) = self.params.split_at_mut(second);
        (&mut head[first].data, &mut tail[0].data)
    }

    /// Mutable access to values; names and shapes stay fixed.
    pub fn values_mut(&mut self) -> impl Iterator<Item = (&str, &mut [T])> {
        self.params
            .iter_mut()
            .map(|p| (p.name.as_str(), p.data.as_mut_slice()))
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            fingerprint: self.fingerprint,
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: vec![T::zero(); p.data.len()],
                })
                .collect(),
        }
    }

    /// Same fingerprint, names and shapes.
    pub fn congruent(&self, other: &ParamSet<T>) -> bool {
        self.fingerprint == other.fingerprint
            && self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn check_congruent(&self, other: &ParamSet<T>) -> Result<()> {
        if self.congruent(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("parameter layout {:016x}", self.fingerprint),
                format!("parameter layout {:016x}", other.fingerprint),
            ))
        }
    }

    /// Checks names and shapes against a reference layout (as produced by a spec).
    pub fn check_layout(&self, reference: &ParamSet<T>) -> Result<()> {
        if self.fingerprint != reference.fingerprint {
            return Err(Error::shape(
                format!("spec fingerprint {:016x}", reference.fingerprint),
                format!("{:016x}", self.fingerprint),
            ));
        }
        self.check_congruent(reference)
    }

    /// Name of the first array holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&str> {
        self.params
            .iter()
            .find(|p| p.data.iter().any(|v| !v.is_finite()))
            .map(|p| p.name.as_str())
    }

    pub(crate) fn add_assign(&mut self, other: &ParamSet<T>) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + y;
            }
        }
    }

    pub(crate) fn scale(&mut self, factor: T) {
        for p in &mut self.params {
            for x in &mut p.data {
                *x = *x * factor;
            }
        }
    }

    /// Converts element type, e.g. `f32` weights to `f64` for gradient checks.
    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            fingerprint: self.fingerprint,
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    data: p.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }
}
