use std::collections::HashMap;

use crate::{NnError, Scalar, Tensor};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// First and second moment estimates of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T> {
    pub first: Tensor<T>,
    pub second: Tensor<T>,
}

/// Named parameters plus their adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
    pub(crate) moments: Vec<Option<Moments<T>>>,
    pub(crate) step: u64,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> PartialEq for ParamStore<T> {
    /// Parameter names, shapes and values; optimizer state is ignored.
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.values == other.values
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
            moments: Vec::new(),
            step: 0,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId, NnError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NnError::DuplicateParameter(name));
        }
        let id = self.values.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        self.moments.push(None);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Number of optimizer steps taken.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Copies every parameter of `source` into the same-named parameter
    /// here. Names and shapes must match exactly; optimizer state is reset.
    pub fn assign_from(&mut self, source: &ParamStore<T>) -> Result<(), NnError> {
        for (name, value) in source.iter() {
            let id = self
                .id(name)
                .ok_or_else(|| crate::error::format_err(name, "parameter not present in model"))?;
            if self.values[id.0].shape() != value.shape() {
                return Err(crate::error::format_err(
                    name,
                    format!("shape {:?} does not match model shape {:?}", value.shape(), self.values[id.0].shape()),
                ));
            }
        }
        if let Some(missing) = self.names.iter().find(|n| source.id(n).is_none()) {
            return Err(crate::error::format_err(missing.clone(), "parameter missing from checkpoint"));
        }
        for (name, value) in source.iter() {
            let id = self.index[name];
            self.values[id] = value.clone();
        }
        self.moments.iter_mut().for_each(|m| *m = None);
        self.step = 0;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
            moments: vec![None; self.values.len()],
            step: 0,
        }
    }
}

/// Per-parameter gradients; `None` for parameters that did not take part in
/// the computation.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn empty(n_params: usize) -> Self {
        Self {
            grads: vec![None; n_params],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Adds `g` to the gradient of `id`.
    pub fn accumulate(&mut self, id: ParamId, g: &Tensor<T>) {
        if id.0 >= self.grads.len() {
            self.grads.resize(id.0 + 1, None);
        }
        match &mut self.grads[id.0] {
            Some(t) => t.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }

    /// Adds every gradient of `other`.
    pub fn merge(&mut self, other: &Gradients<T>) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g);
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        let f = T::from_f64(factor);
        for g in self.grads.iter_mut().flatten() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * f);
        }
    }

    /// Euclidean norm over all gradients together.
    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flatten()
            .flat_map(|g| g.data().iter())
            .map(|v| v.as_f64().powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::<f32>::new();
        s.add("a", Tensor::zeros(&[2])).unwrap();
        assert!(matches!(s.add("a", Tensor::zeros(&[2])), Err(NnError::DuplicateParameter(_))));
    }

    #[test]
    fn assign_checks_shapes_by_name() {
        let mut model = ParamStore::<f32>::new();
        model.add("w", Tensor::zeros(&[2, 3])).unwrap();
        let mut other = ParamStore::<f32>::new();
        other.add("w", Tensor::zeros(&[3, 2])).unwrap();
        match model.assign_from(&other) {
            Err(NnError::Format { field, .. }) => assert_eq!(field, "w"),
            r => panic!("unexpected {r:?}"),
        }
    }
}
