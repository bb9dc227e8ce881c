use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use super::tensor::Tensor;
use crate::error::{GeegaError, Result};

/// Which part of the model a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    TTopo,
    TSpectro,
    Gcn,
    HeadTopo,
    HeadSpectro,
    HeadGcn,
    Centers,
}

impl Component {
    pub const ALL: [Component; 7] = [
        Component::TTopo,
        Component::TSpectro,
        Component::Gcn,
        Component::HeadTopo,
        Component::HeadSpectro,
        Component::HeadGcn,
        Component::Centers,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Component::TTopo => "t_topo",
            Component::TSpectro => "t_spectro",
            Component::Gcn => "gcn",
            Component::HeadTopo => "head_topo",
            Component::HeadSpectro => "head_spectro",
            Component::HeadGcn => "head_gcn",
            Component::Centers => "centers",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Component {
    type Err = GeegaError;

    fn from_str(s: &str) -> Result<Self> {
        Component::ALL
            .iter()
            .copied()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| GeegaError::Format(format!("unknown component tag `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub component: Component,
    pub value: Tensor,
    /// Receives weight decay.
    pub decay: bool,
    /// Updated by the optimizer. Class centers are not.
    pub trainable: bool,
}

/// Named parameters in insertion order. Insertion order is the flattening
/// order for every [`GradientVector`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    params: Vec<Parameter>,
    by_name: HashMap<String, usize>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, component: Component, value: Tensor, decay: bool) -> Result<ParamId> {
        self.insert(Parameter {
            name: name.to_string(),
            component,
            value,
            decay,
            trainable: component != Component::Centers,
        })
    }

    pub fn insert(&mut self, p: Parameter) -> Result<ParamId> {
        if self.by_name.contains_key(&p.name) {
            return Err(GeegaError::Contract(format!("duplicate parameter name `{}`", p.name)));
        }
        let id = self.params.len();
        self.by_name.insert(p.name.clone(), id);
        self.params.push(p);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn ids_in(&self, subset: &[Component]) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| subset.contains(&p.component))
            .map(|(id, _)| id)
            .collect()
    }

    /// Scalar count of all parameters in `subset`.
    pub fn count(&self, subset: &[Component]) -> usize {
        self.params
            .iter()
            .filter(|p| subset.contains(&p.component))
            .map(|p| p.value.len())
            .sum()
    }

    /// Copies values from `other`, matching by name. Shapes must agree.
    pub fn load_values(&mut self, other: &ParameterSet) -> Result<()> {
        for p in &mut self.params {
            let src = other
                .by_name
                .get(&p.name)
                .map(|&i| &other.params[i])
                .ok_or_else(|| GeegaError::Contract(format!("checkpoint lacks parameter `{}`", p.name)))?;
            if src.value.shape() != p.value.shape() {
                return Err(GeegaError::Contract(format!(
                    "parameter `{}` shape {:?} does not match checkpoint {:?}",
                    p.name,
                    p.value.shape(),
                    src.value.shape()
                )));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }
}

/// Gradient buffers aligned with a [`ParameterSet`], one per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    grads: Vec<Vec<f64>>,
}

impl ParamGrads {
    pub fn zeros(params: &ParameterSet) -> Self {
        ParamGrads {
            grads: params.params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
        }
    }

    #[cfg(test)]
    pub(crate) fn from_vecs(grads: Vec<Vec<f64>>) -> Self {
        ParamGrads { grads }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.grads[id.0]
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(|v| v.is_finite())
    }

    /// Flattens the gradients of `subset` in parameter order.
    pub fn flatten(&self, params: &ParameterSet, subset: &[Component]) -> GradientVector {
        let mut values = Vec::with_capacity(params.count(subset));
        for id in params.ids_in(subset) {
            values.extend_from_slice(&self.grads[id.0]);
        }
        GradientVector {
            subset: subset.to_vec(),
            values,
        }
    }

    /// Overwrites the gradients of `g.subset` with the flat values of `g`.
    pub fn replace_subset(&mut self, params: &ParameterSet, g: &GradientVector) -> Result<()> {
        let expected = params.count(&g.subset);
        if expected != g.values.len() {
            return Err(GeegaError::Contract(format!(
                "gradient vector over {:?} has {} values, subset holds {}",
                g.subset,
                g.values.len(),
                expected
            )));
        }
        let mut offset = 0;
        for id in params.ids_in(&g.subset) {
            let n = self.grads[id.0].len();
            self.grads[id.0].copy_from_slice(&g.values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

/// A flat gradient over a declared parameter subset.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector {
    pub subset: Vec<Component>,
    pub values: Vec<f64>,
}

impl GradientVector {
    pub fn new(subset: Vec<Component>, values: Vec<f64>) -> Self {
        GradientVector { subset, values }
    }

    /// A vector with no subset binding, for standalone numerics.
    pub fn raw(values: Vec<f64>) -> Self {
        GradientVector { subset: Vec::new(), values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &GradientVector) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
