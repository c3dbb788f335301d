//! Named parameter groups with a lossless flat view.

use std::collections::HashMap;

use crate::error::ParamError;
use crate::tensor::Tensor;

/// Named groups of tensors (weights and biases per layer).
///
/// Names are unique and insertion order is preserved, so the flattened view
/// round-trips losslessly and two `ParamSet`s with the same structure can be
/// combined element by element (gradients, optimizer state).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a named group. Fails if the name is already present.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), ParamError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(ParamError::DuplicateName { name });
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = *self.index.get(name)?;
        Some(&mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters across all groups.
    pub fn total_len(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Concatenates all groups into one flat vector, in insertion order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_len());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Rebuilds a set with this set's structure from a flat vector.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self, ParamError> {
        if flat.len() != self.total_len() {
            return Err(ParamError::FlatLengthMismatch {
                expected: self.total_len(),
                got: flat.len(),
            });
        }
        let mut out = Self::new();
        let mut offset = 0;
        for (name, t) in &self.entries {
            let n = t.numel();
            let tensor = Tensor::from_parts(t.shape().to_vec(), flat[offset..offset + n].to_vec());
            out.insert(name.clone(), tensor)?;
            offset += n;
        }
        Ok(out)
    }

    /// A set with the same structure, all values zero.
    pub fn zeros_like(&self) -> Self {
        let mut out = Self::new();
        for (name, t) in &self.entries {
            out.insert(name.clone(), Tensor::zeros(t.shape()))
                .expect("structure already has unique names");
        }
        out
    }

    /// `self += alpha * other`, matched group by group.
    pub fn axpy(&mut self, alpha: f64, other: &Self) -> Result<(), ParamError> {
        self.zip_mut(other, |a, b| *a += alpha * b)
    }

    /// Applies `f(self_elem, other_elem)` across matched groups.
    pub fn zip_mut(
        &mut self,
        other: &Self,
        mut f: impl FnMut(&mut f64, f64),
    ) -> Result<(), ParamError> {
        if self.entries.len() != other.entries.len() {
            return Err(ParamError::StructureMismatch);
        }
        for ((na, ta), (nb, tb)) in self.entries.iter_mut().zip(other.entries.iter()) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(ParamError::StructureMismatch);
            }
            for (a, b) in ta.data_mut().iter_mut().zip(tb.data()) {
                f(a, *b);
            }
        }
        Ok(())
    }

    /// Euclidean norm of the flattened parameters.
    pub fn l2_norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|(_, t)| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap())
            .unwrap();
        p.insert("b", Tensor::vector(&[5.0, 6.0]).unwrap()).unwrap();
        p
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut p = sample();
        let err = p.insert("w", Tensor::scalar(0.0)).unwrap_err();
        assert!(matches!(err, ParamError::DuplicateName { .. }));
    }

    #[test]
    fn flatten_round_trips() {
        let p = sample();
        let flat = p.flatten();
        assert_eq!(flat, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let back = p.unflatten(&flat).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn axpy_matches_structure() {
        let mut p = sample();
        let g = p.zeros_like();
        p.axpy(-0.5, &g).unwrap();
        assert_eq!(p, sample());

        let mut other = ParamSet::new();
        other.insert("w", Tensor::scalar(0.0)).unwrap();
        assert!(matches!(
            p.axpy(1.0, &other),
            Err(ParamError::StructureMismatch)
        ));
    }
}
