use indexmap::IndexMap;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Ordered, named collection of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T: Element = f32> {
    tensors: IndexMap<String, Tensor<T>>,
}

impl<T: Element> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Element> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Element>(&self) -> ParamSet<U> {
        ParamSet {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Records every tensor on `tape`, as differentiable leaves when
    /// `trainable`, otherwise as constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let var = if trainable {
                    tape.leaf(v.clone())
                } else {
                    tape.constant(v.clone())
                };
                (k.clone(), var)
            })
            .collect();
        Bound { vars }
    }

    /// Checks that `self` has exactly the names and shapes of `reference`.
    pub fn check_layout(&self, reference: &ParamSet<T>, what: &str) -> Result<()> {
        if self.len() != reference.len() {
            return Err(Error::InvalidArgument(format!(
                "{what}: expected {} parameter tensors, got {}",
                reference.len(),
                self.len()
            )));
        }
        for (name, t) in reference.iter() {
            match self.get(name) {
                Some(v) if v.shape() == t.shape() => {}
                Some(v) => {
                    return Err(Error::shape(
                        "check_layout",
                        format!("{what}: `{name}` has shape {:?}, expected {:?}", v.shape(), t.shape()),
                    ))
                }
                None => return Err(Error::InvalidArgument(format!("{what}: missing parameter `{name}`"))),
            }
        }
        Ok(())
    }
}

/// Tape handles for a bound [`ParamSet`].
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("parameter `{name}` is not bound")))
    }

    /// Points `name` at another node (e.g. a gradient-check probe).
    pub fn replace(&mut self, name: &str, var: Var) -> Result<()> {
        match self.vars.get_mut(name) {
            Some(v) => {
                *v = var;
                Ok(())
            }
            None => Err(Error::InvalidArgument(format!("parameter `{name}` is not bound"))),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Collects the gradient of every bound parameter, failing on the first
    /// parameter the backward pass did not reach.
    pub fn gradients<T: Element>(&self, grads: &mut crate::autodiff::Gradients<T>) -> Result<ParamSet<T>> {
        let mut out = ParamSet::new();
        for (name, &var) in &self.vars {
            let g = grads.take(var).ok_or_else(|| Error::MissingGradient(name.clone()))?;
            out.insert(name.clone(), g);
        }
        Ok(out)
    }
}
