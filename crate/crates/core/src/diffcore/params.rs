use super::array::NdArray;
use super::graph::{Gradients, Graph, Var};
use crate::error::{Error, Result};

/// Named parameter arrays making up one model's parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    segments: Vec<(String, NdArray)>,
}

impl ParamVector {
    pub fn new() -> Self {
        Self { segments: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, value: NdArray) -> Result<()> {
        let name = name.into();
        if self.segments.iter().any(|(n, _)| *n == name) {
            return Err(Error::Precondition(format!("duplicate parameter segment `{name}`")));
        }
        self.segments.push((name, value));
        Ok(())
    }

    pub fn segments(&self) -> &[(String, NdArray)] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> impl Iterator<Item = (&str, &mut NdArray)> {
        self.segments.iter_mut().map(|(n, v)| (n.as_str(), v))
    }

    pub fn get(&self, name: &str) -> Option<&NdArray> {
        self.segments.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NdArray> {
        self.segments.iter_mut().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn total_count(&self) -> usize {
        self.segments.iter().map(|(_, v)| v.len()).sum()
    }

    /// Segment names with their shapes, in order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        self.segments.iter().map(|(n, v)| (n.clone(), v.shape().to_vec())).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.segments.iter().flat_map(|(_, v)| v.data().iter().copied()).collect()
    }

    /// Same layout with values taken from `flat`.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.total_count() {
            return Err(Error::shape(
                "ParamVector::with_flat",
                format!("{} values for {} parameters", flat.len(), self.total_count()),
            ));
        }
        let mut off = 0;
        let segments = self
            .segments
            .iter()
            .map(|(n, v)| {
                let data = flat[off..off + v.len()].to_vec();
                off += v.len();
                (n.clone(), NdArray::from_parts(v.shape().to_vec(), data))
            })
            .collect();
        Ok(Self { segments })
    }

    pub fn zeros_like(&self) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|(n, v)| (n.clone(), NdArray::zeros(v.shape())))
            .collect();
        Self { segments }
    }

    /// Registers every segment as a tracked leaf on `g`, in order.
    pub fn bind(&self, g: &mut Graph) -> Result<Vec<Var>> {
        self.segments.iter().map(|(_, v)| g.param(v.clone())).collect()
    }

    /// Collects gradients for vars returned by [`ParamVector::bind`].
    pub fn gradients(&self, grads: &Gradients, vars: &[Var]) -> Self {
        let segments = self
            .segments
            .iter()
            .zip(vars)
            .map(|((n, v), &var)| (n.clone(), grads.get_or_zeros(var, v.shape())))
            .collect();
        Self { segments }
    }
}

impl Default for ParamVector {
    fn default() -> Self {
        Self::new()
    }
}

/// Value and gradient of a scalar loss built by `loss_fn` over `params`.
pub fn value_and_gradient<F>(loss_fn: F, params: &ParamVector) -> Result<(f64, ParamVector)>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = params.bind(&mut g)?;
    let loss = loss_fn(&mut g, &vars)?;
    let grads = g.backward(loss)?;
    Ok((g.scalar(loss), params.gradients(&grads, &vars)))
}

/// `d loss / d params` for a loss built by `loss_fn`.
pub fn gradient<F>(loss_fn: F, params: &ParamVector) -> Result<ParamVector>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    value_and_gradient(loss_fn, params).map(|(_, g)| g)
}
