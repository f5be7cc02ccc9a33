use std::fmt;
use std::str::FromStr;

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The three parameter groups of a network assembly.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Backbone,
    Bottleneck,
    Classifier,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Backbone, Group::Bottleneck, Group::Classifier];

    pub fn as_str(self) -> &'static str {
        match self {
            Group::Backbone => "backbone",
            Group::Bottleneck => "bottleneck",
            Group::Classifier => "classifier",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "backbone" => Ok(Group::Backbone),
            "bottleneck" => Ok(Group::Bottleneck),
            "classifier" => Ok(Group::Classifier),
            other => Err(Error::validation(format!(
                "unknown parameter group `{other}`"
            ))),
        }
    }
}

/// Learned weights take gradients; buffers (batch-norm running statistics) do not.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Buffer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub group: Group,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Flat storage of every tensor a network owns. Layers refer to entries by id.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn add(
        &mut self,
        name: impl Into<String>,
        group: Group,
        kind: ParamKind,
        shape: Vec<usize>,
        data: Vec<f64>,
    ) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.params.push(Param {
            name: name.into(),
            group,
            kind,
            shape,
            data,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub(crate) fn vector(&self, id: ParamId) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[id.0].data[..])
    }

    pub(crate) fn matrix(&self, id: ParamId) -> ArrayView2<'_, f64> {
        let p = &self.params[id.0];
        ArrayView2::from_shape((p.shape[0], p.shape[1]), &p.data[..]).expect("matrix parameter")
    }

    /// Copies every entry of `group` into a flat vector, in declaration order.
    pub fn snapshot_group(&self, group: Group) -> Vec<f64> {
        self.params
            .iter()
            .filter(|p| p.group == group)
            .flat_map(|p| p.data.iter().copied())
            .collect()
    }

    pub fn count(&self, group: Group, kind: ParamKind) -> usize {
        self.params
            .iter()
            .filter(|p| p.group == group && p.kind == kind)
            .map(|p| p.data.len())
            .sum()
    }

    /// Structural equality: same names, groups, kinds and shapes.
    pub fn same_layout(&self, other: &ParamStore) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.name == b.name && a.group == b.group && a.kind == b.kind && a.shape == b.shape
            })
    }
}

/// Gradient accumulators aligned with a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Grads {
    pub(crate) data: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Grads {
            data: store.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.data {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id.0]
    }

    pub(crate) fn vector_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.data[id.0]
    }

    pub(crate) fn matrix_mut(
        &mut self,
        id: ParamId,
        rows: usize,
        cols: usize,
    ) -> ArrayViewMut2<'_, f64> {
        ArrayViewMut2::from_shape((rows, cols), &mut self.data[id.0][..]).expect("matrix gradient")
    }

    pub fn by_index(&self, i: usize) -> &[f64] {
        &self.data[i]
    }
}

/// Which parameter groups receive optimizer updates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trainable {
    pub backbone: bool,
    pub bottleneck: bool,
    pub classifier: bool,
}

impl Default for Trainable {
    fn default() -> Self {
        Trainable::all(true)
    }
}

impl Trainable {
    pub fn all(on: bool) -> Self {
        Trainable {
            backbone: on,
            bottleneck: on,
            classifier: on,
        }
    }

    pub fn get(&self, group: Group) -> bool {
        match group {
            Group::Backbone => self.backbone,
            Group::Bottleneck => self.bottleneck,
            Group::Classifier => self.classifier,
        }
    }

    pub fn set(&mut self, group: Group, on: bool) {
        match group {
            Group::Backbone => self.backbone = on,
            Group::Bottleneck => self.bottleneck = on,
            Group::Classifier => self.classifier = on,
        }
    }

    pub fn any(&self) -> bool {
        self.backbone || self.bottleneck || self.classifier
    }
}
