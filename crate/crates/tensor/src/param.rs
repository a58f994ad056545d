use crate::container::Entry;
use crate::error::{Result, TensorError};
use crate::tensor::{to_storage, Real, Shape, Tensor};

/// A named trainable tensor.
///
/// Values always sit on the f32 storage grid. Updates replace the underlying
/// leaf tensor; tensors handed out earlier keep their old values.
#[derive(Clone, Debug)]
pub struct Parameter {
    name: String,
    dims: Vec<usize>,
    value: Tensor,
}

impl Parameter {
    /// `dims` is the logical shape written to checkpoints (e.g. `[co]` for a
    /// bias stored as `(1, co, 1, 1)`).
    pub fn new(name: impl Into<String>, shape: Shape, dims: Vec<usize>, values: Vec<Real>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(TensorError::Parameter { op: "parameter", msg: "name must be non-empty".into() });
        }
        if dims.iter().product::<usize>() != shape.numel() {
            return Err(TensorError::DataLength { shape, len: dims.iter().product() });
        }
        let value = Tensor::leaf(shape, values.into_iter().map(to_storage).collect())?;
        Ok(Parameter { name, dims, value })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn tensor(&self) -> &Tensor {
        &self.value
    }

    pub fn values(&self) -> &[Real] {
        self.value.data()
    }

    pub fn numel(&self) -> usize {
        self.value.numel()
    }

    pub fn grad(&self) -> Option<Vec<Real>> {
        self.value.grad()
    }

    pub fn zero_grad(&self) {
        self.value.zero_grad();
    }

    pub fn set_values(&mut self, values: Vec<Real>) -> Result<()> {
        if values.len() != self.numel() {
            return Err(TensorError::DataLength { shape: self.value.shape(), len: values.len() });
        }
        self.value = Tensor::leaf(self.value.shape(), values.into_iter().map(to_storage).collect())?;
        Ok(())
    }

    pub fn to_entry(&self) -> Entry {
        Entry {
            name: self.name.clone(),
            dims: self.dims.iter().map(|&d| d as u32).collect(),
            values: self.values().iter().map(|&v| v as f32).collect(),
        }
    }

    /// Loads values from a container entry with matching logical dims.
    pub fn load_entry(&mut self, entry: &Entry) -> Result<()> {
        let dims: Vec<usize> = entry.dims.iter().map(|&d| d as usize).collect();
        if dims != self.dims {
            return Err(TensorError::Container(format!(
                "entry {}: dims {:?} do not match parameter dims {:?}",
                entry.name, dims, self.dims
            )));
        }
        self.set_values(entry.values.iter().map(|&v| v as Real).collect())
    }
}
