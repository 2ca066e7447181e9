//! Named trainable parameters and their gradients.

use std::collections::BTreeMap;

use crate::autodiff::{Gradients, Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// First and second moment estimates of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<S> {
    pub first: Tensor<S>,
    pub second: Tensor<S>,
}

/// Ordered map of named parameter tensors plus optimizer state.
///
/// Iteration is in lexicographic name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<S> {
    params: BTreeMap<String, Tensor<S>>,
    moments: BTreeMap<String, Moments<S>>,
    step: u64,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
            moments: BTreeMap::new(),
            step: 0,
        }
    }

    /// Adds or replaces a parameter and resets its optimizer state.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<S>) {
        let name = name.into();
        let [r, c] = value.shape();
        self.moments.insert(
            name.clone(),
            Moments {
                first: Tensor::zeros(r, c),
                second: Tensor::zeros(r, c),
            },
        );
        self.params.insert(name, value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.params.get_mut(name)
    }

    /// Like [`get`](Self::get) but reports a missing name as an error.
    pub fn require(&self, name: &str) -> Result<&Tensor<S>> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
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

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Optimizer steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub(crate) fn param_and_moments_mut(
        &mut self,
        name: &str,
    ) -> Option<(&mut Tensor<S>, &mut Moments<S>)> {
        let p = self.params.get_mut(name)?;
        let m = self.moments.get_mut(name)?;
        Some((p, m))
    }

    pub fn moments(&self, name: &str) -> Option<&Moments<S>> {
        self.moments.get(name)
    }

    /// Registers every parameter as a differentiable leaf of `graph`.
    pub fn bind<'g>(&self, graph: &'g Graph<S>) -> BoundParams<'g, S> {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), graph.leaf(v.clone())))
            .collect();
        BoundParams { vars }
    }

    /// Registers every parameter as a constant; nothing flows back into them.
    pub fn bind_frozen<'g>(&self, graph: &'g Graph<S>) -> BoundParams<'g, S> {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), graph.constant(v.clone())))
            .collect();
        BoundParams { vars }
    }
}

/// Parameters of a [`ParamStore`] as nodes of one graph.
#[derive(Debug, Clone)]
pub struct BoundParams<'g, S> {
    vars: BTreeMap<String, Var<'g, S>>,
}

impl<'g, S: Scalar> BoundParams<'g, S> {
    /// Panics if `name` was not in the store; parameter names are fixed at
    /// guide construction.
    pub fn get(&self, name: &str) -> Var<'g, S> {
        match self.vars.get(name) {
            Some(v) => *v,
            None => panic!("parameter `{name}` is not bound"),
        }
    }

    pub fn try_get(&self, name: &str) -> Option<Var<'g, S>> {
        self.vars.get(name).copied()
    }

    /// Gradients of every bound parameter, aligned by name.
    pub fn gradients(&self, grads: &Gradients<S>) -> ParamGrads<S> {
        ParamGrads(
            self.vars
                .iter()
                .map(|(k, v)| (k.clone(), grads.wrt(*v)))
                .collect(),
        )
    }
}

/// Gradient tensors keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<S>(pub BTreeMap<String, Tensor<S>>);

impl<S: Scalar> ParamGrads<S> {
    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.0.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Errors with the first parameter whose gradient is not finite.
    pub fn check_finite(&self) -> Result<()> {
        for (name, g) in &self.0 {
            if !g.is_finite() {
                return Err(Error::numeric(
                    format!("gradient of `{name}`"),
                    "non-finite entry",
                ));
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, c: S) {
        for g in self.0.values_mut() {
            g.data_mut().iter_mut().for_each(|v| *v = *v * c);
        }
    }

    /// Euclidean norm over every entry.
    pub fn norm(&self) -> S {
        self.0
            .values()
            .flat_map(|g| g.data().iter())
            .map(|&v| v * v)
            .sum::<S>()
            .sqrt()
    }
}

/// Evaluates a scalar function of `params` and `inputs` and its exact
/// reverse-mode gradient with respect to every parameter.
///
/// `inputs` enter the graph as constants.
pub fn evaluate_with_gradient<S, F>(
    f: F,
    params: &ParamStore<S>,
    inputs: &[Tensor<S>],
) -> Result<(S, ParamGrads<S>)>
where
    S: Scalar,
    F: for<'g> Fn(&'g Graph<S>, &BoundParams<'g, S>, &[Var<'g, S>]) -> Result<Var<'g, S>>,
{
    let graph = Graph::new();
    let bound = params.bind(&graph);
    let inputs: Vec<_> = inputs.iter().map(|t| graph.constant(t.clone())).collect();
    let out = f(&graph, &bound, &inputs)?;
    if out.shape() != [1, 1] {
        return Err(Error::Shape(format!(
            "objective must be 1x1, got {:?}",
            out.shape()
        )));
    }
    let value = out.item();
    if !value.is_finite() {
        return Err(Error::numeric("objective value", format!("{value}")));
    }
    let grads = bound.gradients(&graph.backward(out));
    grads.check_finite()?;
    Ok((value, grads))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_value_and_gradient() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::scalar(3.0));
        let (v, g) = evaluate_with_gradient(|_, p, _| Ok(p.get("x").square().sum()), &store, &[]).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(g.get("x").unwrap().item(), 6.0);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::row(vec![1.0, -2.0]));
        let (v, g) = evaluate_with_gradient(|g, _, _| Ok(g.scalar(7.0)), &store, &[]).unwrap();
        assert_eq!(v, 7.0);
        assert_eq!(g.get("x").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = ParamStore::new();
        store.insert("good", Tensor::scalar(1.0));
        // ln of a subnormal is finite, its derivative overflows
        store.insert("bad", Tensor::scalar(1e-320));
        let err = evaluate_with_gradient(
            |_, p, _| Ok((p.get("bad").ln() + p.get("good")).sum()),
            &store,
            &[],
        )
        .unwrap_err();
        match err {
            Error::Numeric { location, .. } => assert!(location.contains("`bad`"), "{location}"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_finite_value_is_rejected() {
        let mut store = ParamStore::new();
        store.insert("x", Tensor::scalar(0.0));
        assert!(evaluate_with_gradient(|_, p, _| Ok(p.get("x").ln().sum()), &store, &[]).is_err());
    }

    #[test]
    fn inputs_are_constants() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::row(vec![2.0, 3.0]));
        let x = Tensor::row(vec![5.0, 7.0]);
        let (v, g) = evaluate_with_gradient(|_, p, inp| Ok((p.get("w") * inp[0]).sum()), &store, &[x]).unwrap();
        assert_eq!(v, 31.0);
        assert_eq!(g.get("w").unwrap().data(), &[5.0, 7.0]);
    }
}
