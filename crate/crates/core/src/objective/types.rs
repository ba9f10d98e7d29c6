use crate::diffcore::NdArray;
use crate::error::{Error, Result};
use crate::ode_flow::Domain;

/// A scalar image over a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageVolume {
    domain: Domain,
    intensities: NdArray,
}

impl ImageVolume {
    pub fn new(domain: Domain, intensities: NdArray) -> Result<Self> {
        if intensities.shape() != domain.shape() {
            return Err(Error::shape(
                "ImageVolume",
                format!("intensities {:?} on domain {:?}", intensities.shape(), domain.shape()),
            ));
        }
        if !intensities.all_finite() {
            return Err(Error::Precondition("image intensities must be finite".into()));
        }
        Ok(Self { domain, intensities })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn intensities(&self) -> &NdArray {
        &self.intensities
    }

    pub fn into_intensities(self) -> NdArray {
        self.intensities
    }
}

/// A mapping `x -> phi(x)` stored as target voxel coordinates, `[d, *shape]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    domain: Domain,
    mapping: NdArray,
}

impl DeformationField {
    pub fn new(domain: Domain, mapping: NdArray) -> Result<Self> {
        if mapping.shape() != domain.field_shape().as_slice() {
            return Err(Error::shape(
                "DeformationField",
                format!("mapping {:?} on domain {:?}", mapping.shape(), domain.shape()),
            ));
        }
        if !mapping.all_finite() {
            return Err(Error::Precondition("deformation field entries must be finite".into()));
        }
        Ok(Self { domain, mapping })
    }

    pub fn identity(domain: &Domain) -> Self {
        Self { mapping: domain.identity_grid(), domain: domain.clone() }
    }

    /// `Id + shift` for a constant shift in voxels.
    pub fn translation(domain: &Domain, shift: &[f64]) -> Result<Self> {
        if shift.len() != domain.ndim() {
            return Err(Error::shape("translation", format!("{}-D shift on a {}-D domain", shift.len(), domain.ndim())));
        }
        let mut mapping = domain.identity_grid();
        let m = domain.voxel_count();
        for (a, s) in shift.iter().enumerate() {
            mapping.data_mut()[a * m..(a + 1) * m].iter_mut().for_each(|v| *v += s);
        }
        Self::new(domain.clone(), mapping)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn mapping(&self) -> &NdArray {
        &self.mapping
    }

    pub fn into_mapping(self) -> NdArray {
        self.mapping
    }

    /// `phi(x) - x` per voxel, same layout as the mapping.
    pub fn displacement(&self) -> NdArray {
        let id = self.domain.identity_grid();
        let data = self.mapping.data().iter().zip(id.data()).map(|(p, x)| p - x).collect();
        NdArray::new(self.mapping.shape().to_vec(), data).expect("same shape")
    }

    /// Euclidean displacement length at every voxel.
    pub fn displacement_norms(&self) -> Vec<f64> {
        let u = self.displacement();
        let m = self.domain.voxel_count();
        (0..m)
            .map(|p| (0..self.domain.ndim()).map(|a| u.data()[a * m + p].powi(2)).sum::<f64>().sqrt())
            .collect()
    }

    pub fn mean_displacement(&self) -> f64 {
        let n = self.displacement_norms();
        n.iter().sum::<f64>() / n.len() as f64
    }
}

/// Integer labels over a domain; 0 is background.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    domain: Domain,
    labels: Vec<u32>,
}

impl LabelMask {
    pub fn new(domain: Domain, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != domain.voxel_count() {
            return Err(Error::shape("LabelMask", format!("{} labels on domain {:?}", labels.len(), domain.shape())));
        }
        Ok(Self { domain, labels })
    }

    /// Accepts non-negative integral values only.
    pub fn from_array(domain: Domain, values: &NdArray) -> Result<Self> {
        if values.shape() != domain.shape() {
            return Err(Error::shape("LabelMask", format!("values {:?} on domain {:?}", values.shape(), domain.shape())));
        }
        let labels = values
            .data()
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(Error::Precondition(format!("label value {v} is not a non-negative integer")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { domain, labels })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn to_array(&self) -> NdArray {
        NdArray::new(self.domain.shape().to_vec(), self.labels.iter().map(|&l| l as f64).collect()).expect("shape")
    }

    pub fn count(&self, label: u32) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Distinct labels in ascending order.
    pub fn label_set(&self) -> Vec<u32> {
        let mut s = self.labels.clone();
        s.sort_unstable();
        s.dedup();
        s
    }

    /// Binary mask of one label.
    pub fn select(&self, label: u32) -> Vec<bool> {
        self.labels.iter().map(|&l| l == label).collect()
    }
}
