use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};

/// A dense row-major tensor with its gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Param {
            shape: shape.to_vec(),
            value: vec![0.0; len],
            grad: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    /// Number of columns for a matrix, 1 for a vector.
    pub fn cols(&self) -> usize {
        self.shape.get(1).copied().unwrap_or(1)
    }
}

/// Named parameters, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterStore {
    params: BTreeMap<String, Param>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, param: Param) -> Result<()> {
        let name = name.into();
        if param.value.len() != param.shape.iter().product::<usize>()
            || param.grad.len() != param.value.len()
        {
            return Err(Error::Shape {
                name,
                expected: param.shape.clone(),
                found: vec![param.value.len()],
            });
        }
        if self.params.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate parameter `{name}`")));
        }
        self.params.insert(name, param);
        Ok(())
    }

    pub fn insert_values(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        values: Vec<f64>,
    ) -> Result<()> {
        let grad = vec![0.0; values.len()];
        self.insert(
            name,
            Param {
                shape: shape.to_vec(),
                value: values,
                grad,
            },
        )
    }

    /// Adds a parameter drawn uniformly from `[-scale, scale]`.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        scale: f64,
        rng: &mut R,
    ) -> Result<()> {
        let mut p = Param::zeros(shape);
        for v in &mut p.value {
            *v = rng.gen_range(-scale..=scale);
        }
        self.insert(name, p)
    }

    pub fn get(&self, name: &str) -> Result<&Param> {
        self.params
            .get(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Param> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Moves every parameter whose name starts with `prefix` into a new store.
    pub fn extract_prefix(&self, prefix: &str) -> ParameterStore {
        ParameterStore {
            params: self
                .params
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn merge(&mut self, other: ParameterStore) -> Result<()> {
        for (k, v) in other.params {
            self.insert(k, v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_are_rejected() {
        let mut s = ParameterStore::new();
        s.insert("w", Param::zeros(&[2, 2])).unwrap();
        assert!(s.insert("w", Param::zeros(&[1])).is_err());
    }

    #[test]
    fn gradient_buffers_match_shapes() {
        let mut s = ParameterStore::new();
        s.insert("a", Param::zeros(&[3, 4])).unwrap();
        let p = s.get("a").unwrap();
        assert_eq!(p.grad.len(), 12);
        assert_eq!(p.cols(), 4);
        let bad = Param {
            shape: vec![2],
            value: vec![1.0, 2.0],
            grad: vec![0.0],
        };
        assert!(s.insert("b", bad).is_err());
    }
}
