use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoding::positional_encode;
use super::kernel::GaussianKernel;
use crate::diffcore::{Activation, Graph, NdArray, ParamVector, Var};
use crate::error::{Error, Result};
use crate::ode_flow::Domain;

/// Upper bound on raw velocities (voxels per unit time) right after initialization.
pub const INIT_VELOCITY_BOUND: f64 = 1e-3;

/// Network architecture for the velocity field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchConfig {
    /// The same MLP applied to every point, input `point ++ encode(t)`.
    PointwiseMlp {
        hidden: Vec<usize>,
        activation: Activation,
        #[serde(default = "default_true")]
        bias: bool,
    },
    /// Two-level encoder/decoder over the whole coordinate grid.
    GridConv {
        /// Channel widths at full and half resolution.
        widths: [usize; 2],
        activation: Activation,
        /// Registration grid; every extent must be even.
        grid_shape: Vec<usize>,
        #[serde(default = "default_true")]
        bias: bool,
    },
}

fn default_true() -> bool {
    true
}

impl ArchConfig {
    pub fn default_mlp() -> Self {
        ArchConfig::PointwiseMlp { hidden: vec![32, 32], activation: Activation::Tanh, bias: true }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ArchConfig::PointwiseMlp { .. } => "pointwise_mlp",
            ArchConfig::GridConv { .. } => "grid_conv",
        }
    }
}

/// Everything needed to build a [`VelocityModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: ArchConfig,
    pub domain_dim: usize,
    pub time_encoding_dims: usize,
    pub kernel_size: usize,
    pub kernel_sigma: f64,
}

impl ModelConfig {
    pub fn new(arch: ArchConfig, domain_dim: usize) -> Self {
        Self { arch, domain_dim, time_encoding_dims: 8, kernel_size: 5, kernel_sigma: 1.0 }
    }

    pub fn kernel(&self) -> Result<GaussianKernel> {
        GaussianKernel::isotropic(self.domain_dim, self.kernel_size, self.kernel_sigma)
    }

    fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.domain_dim) {
            return Err(Error::Config(format!("domain_dim must be 2 or 3, got {}", self.domain_dim)));
        }
        positional_encode(0.0, self.time_encoding_dims)?;
        self.kernel()?;
        match &self.arch {
            ArchConfig::PointwiseMlp { hidden, .. } => {
                if hidden.iter().any(|&h| h == 0) {
                    return Err(Error::Config("hidden widths must be positive".into()));
                }
            }
            ArchConfig::GridConv { widths, grid_shape, .. } => {
                if widths.iter().any(|&w| w == 0) {
                    return Err(Error::Config("channel widths must be positive".into()));
                }
                if grid_shape.len() != self.domain_dim {
                    return Err(Error::Config(format!("grid {grid_shape:?} is not {}-D", self.domain_dim)));
                }
                if grid_shape.iter().any(|&n| n < 4 || n % 2 != 0) {
                    return Err(Error::Config(format!(
                        "grid {grid_shape:?} cannot be halved once for the encoder/decoder"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A velocity network together with its parameters and smoothing kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityModel {
    config: ModelConfig,
    params: ParamVector,
    kernel: GaussianKernel,
    seed: u64,
}

/// One linear layer of the parameter layout.
struct LayerSpec {
    name: String,
    fan_in: usize,
    fan_out: usize,
    /// weight shape
    shape: Vec<usize>,
}

fn layer_specs(config: &ModelConfig) -> Vec<LayerSpec> {
    let d = config.domain_dim;
    let input = d + config.time_encoding_dims;
    match &config.arch {
        ArchConfig::PointwiseMlp { hidden, .. } => {
            let mut widths = vec![input];
            widths.extend(hidden);
            widths.push(d);
            widths
                .windows(2)
                .enumerate()
                .map(|(i, w)| LayerSpec { name: format!("layer{i}"), fan_in: w[0], fan_out: w[1], shape: vec![w[1], w[0]] })
                .collect()
        }
        ArchConfig::GridConv { widths: [c1, c2], .. } => {
            let conv = |name: &str, cin: usize, cout: usize, k: usize| {
                let mut shape = vec![cout, cin];
                shape.extend(std::iter::repeat(k).take(d));
                let taps = k.pow(d as u32);
                LayerSpec { name: name.to_string(), fan_in: cin * taps, fan_out: cout * taps, shape }
            };
            vec![
                conv("enc0", input, *c1, 3),
                conv("enc1", *c1, *c2, 3),
                conv("dec0", c1 + c2, *c1, 3),
                conv("out", *c1, d, 1),
            ]
        }
    }
}

fn arch_activation(arch: &ArchConfig) -> (Activation, bool) {
    match arch {
        ArchConfig::PointwiseMlp { activation, bias, .. } | ArchConfig::GridConv { activation, bias, .. } => {
            (*activation, *bias)
        }
    }
}

fn bound_after(act: Activation, b: f64) -> f64 {
    match act {
        Activation::Tanh | Activation::Sine => b.min(1.0),
        Activation::Relu | Activation::Identity => b,
    }
}

/// `max_out sum_in |w| * bound + |b|`, a bound on the layer's outputs.
fn layer_bound(w: &NdArray, b: Option<&NdArray>, bound: f64) -> f64 {
    let cout = w.shape()[0];
    let per = w.len() / cout;
    (0..cout)
        .map(|o| {
            let s: f64 = w.data()[o * per..(o + 1) * per].iter().map(|v| v.abs()).sum();
            s * bound + b.map_or(0.0, |b| b.data()[o].abs())
        })
        .fold(0.0, f64::max)
}

/// Builds a model with seeded Glorot-uniform hidden layers and a final layer
/// small enough that raw velocities start below [`INIT_VELOCITY_BOUND`].
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<VelocityModel> {
    config.validate()?;
    let (act, use_bias) = arch_activation(&config.arch);
    let specs = layer_specs(config);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamVector::new();
    let last = specs.len() - 1;
    for spec in &specs[..last] {
        let limit = (6.0 / (spec.fan_in + spec.fan_out) as f64).sqrt();
        let n: usize = spec.shape.iter().product();
        let w = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
        params.push(format!("{}.weight", spec.name), NdArray::new(spec.shape.clone(), w)?)?;
        if use_bias {
            params.push(format!("{}.bias", spec.name), NdArray::zeros(&[spec.fan_out_channels()]))?;
        }
    }
    // interval bound on the penultimate activations for inputs in [-1, 1]
    let penultimate = match &config.arch {
        ArchConfig::PointwiseMlp { .. } => {
            let mut b = 1.0;
            for spec in &specs[..last] {
                let w = params.get(&format!("{}.weight", spec.name)).unwrap();
                let bias = params.get(&format!("{}.bias", spec.name));
                b = bound_after(act, layer_bound(w, bias, b));
            }
            b
        }
        ArchConfig::GridConv { .. } => {
            let lb = |name: &str, b: f64| {
                let w = params.get(&format!("{name}.weight")).unwrap();
                bound_after(act, layer_bound(w, params.get(&format!("{name}.bias")), b))
            };
            let e0 = lb("enc0", 1.0);
            let e1 = lb("enc1", e0);
            lb("dec0", e0.max(e1))
        }
    };
    let out = &specs[last];
    let a = 0.9 * INIT_VELOCITY_BOUND / (out.fan_in as f64 * penultimate.max(1e-12));
    let n: usize = out.shape.iter().product();
    let w = (0..n).map(|_| rng.gen_range(-a..a)).collect();
    params.push(format!("{}.weight", out.name), NdArray::new(out.shape.clone(), w)?)?;
    if use_bias {
        params.push(format!("{}.bias", out.name), NdArray::zeros(&[out.fan_out_channels()]))?;
    }
    Ok(VelocityModel { config: config.clone(), params, kernel: config.kernel()?, seed })
}

impl LayerSpec {
    fn fan_out_channels(&self) -> usize {
        self.shape[0]
    }
}

impl VelocityModel {
    /// Rebuilds a model from stored parameters; the layout must match `config`.
    pub fn from_parts(config: ModelConfig, params: ParamVector, seed: u64) -> Result<Self> {
        let reference = init_model(&config, seed)?;
        if reference.params.layout() != params.layout() {
            return Err(Error::Config("parameter layout does not match the architecture".into()));
        }
        Ok(Self { kernel: config.kernel()?, config, params, seed })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.params.total_count()
    }

    pub fn with_params(&self, params: ParamVector) -> Result<Self> {
        if params.layout() != self.params.layout() {
            return Err(Error::Config("parameter layout does not match the architecture".into()));
        }
        Ok(Self { params, ..self.clone() })
    }

    fn check_domain(&self, domain: &Domain) -> Result<()> {
        if domain.ndim() != self.config.domain_dim {
            return Err(Error::DomainMismatch(format!(
                "{}-D model on a {}-D domain",
                self.config.domain_dim,
                domain.ndim()
            )));
        }
        if let ArchConfig::GridConv { grid_shape, .. } = &self.config.arch {
            if grid_shape.as_slice() != domain.shape() {
                return Err(Error::DomainMismatch(format!(
                    "model built for grid {grid_shape:?}, domain is {:?}",
                    domain.shape()
                )));
            }
        }
        Ok(())
    }

    /// Records the raw (unsmoothed) network output at points `phi` (`[d, *T]`,
    /// voxel coordinates of `domain`) and time `t`. `params` come from
    /// [`ParamVector::bind`] on this model's parameters.
    pub fn raw_velocity(&self, g: &mut Graph, params: &[Var], phi: Var, t: f64, domain: &Domain) -> Result<Var> {
        self.check_domain(domain)?;
        let d = domain.ndim();
        let shape = g.shape(phi).to_vec();
        if shape.first() != Some(&d) {
            return Err(Error::shape("raw_velocity", format!("points {shape:?} in a {d}-D domain")));
        }
        let scale: Vec<f64> = domain.shape().iter().map(|&n| 2.0 / (n - 1) as f64).collect();
        let x = g.channel_affine(phi, &scale, &vec![-1.0; d])?;
        let enc = positional_encode(t, self.config.time_encoding_dims)?;
        let m: usize = shape[1..].iter().product();
        let mut enc_data = Vec::with_capacity(enc.len() * m);
        for e in &enc {
            enc_data.extend(std::iter::repeat(*e).take(m));
        }
        let mut enc_shape = shape.clone();
        enc_shape[0] = enc.len();
        let enc = g.constant(NdArray::new(enc_shape, enc_data)?)?;
        let input = g.concat(&[x, enc])?;
        let (act, use_bias) = arch_activation(&self.config.arch);
        let mut vars = params.iter().copied();
        let mut next = || -> Result<(Var, Option<Var>)> {
            let w = vars.next().ok_or_else(|| Error::shape("raw_velocity", "too few parameters"))?;
            let b = if use_bias {
                Some(vars.next().ok_or_else(|| Error::shape("raw_velocity", "too few parameters"))?)
            } else {
                None
            };
            Ok((w, b))
        };
        match &self.config.arch {
            ArchConfig::PointwiseMlp { hidden, .. } => {
                let mut h = input;
                for _ in 0..hidden.len() {
                    let (w, b) = next()?;
                    let z = g.dense(h, w, b)?;
                    h = g.activation(z, act)?;
                }
                let (w, b) = next()?;
                g.dense(h, w, b)
            }
            ArchConfig::GridConv { .. } => {
                let (w, b) = next()?;
                let z = g.conv(input, w, b)?;
                let e0 = g.activation(z, act)?;
                let pooled = g.avg_pool2(e0)?;
                let (w, b) = next()?;
                let z = g.conv(pooled, w, b)?;
                let e1 = g.activation(z, act)?;
                let up = g.upsample2(e1)?;
                let cat = g.concat(&[up, e0])?;
                let (w, b) = next()?;
                let z = g.conv(cat, w, b)?;
                let d0 = g.activation(z, act)?;
                let (w, b) = next()?;
                g.conv(d0, w, b)
            }
        }
    }

    /// Raw MLP velocities at `points` (`[m, d]` voxel coordinates), returned as `[m, d]`.
    pub fn mlp_velocity(&self, domain: &Domain, points: &NdArray, t: f64) -> Result<NdArray> {
        if !matches!(self.config.arch, ArchConfig::PointwiseMlp { .. }) {
            return Err(Error::Config(format!("mlp_velocity on a {} model", self.config.arch.name())));
        }
        let d = domain.ndim();
        if points.ndim() != 2 || points.shape()[1] != d {
            return Err(Error::shape("mlp_velocity", format!("points {:?} for a {d}-D domain", points.shape())));
        }
        if !points.all_finite() {
            return Err(Error::Precondition("non-finite point coordinates".into()));
        }
        let m = points.shape()[0];
        let mut cf = vec![0.0; m * d];
        for p in 0..m {
            for a in 0..d {
                cf[a * m + p] = points.data()[p * d + a];
            }
        }
        let out = self.eval_raw(domain, NdArray::new(vec![d, m], cf)?, t)?;
        let mut rows = vec![0.0; m * d];
        for p in 0..m {
            for a in 0..d {
                rows[p * d + a] = out.data()[a * m + p];
            }
        }
        NdArray::new(vec![m, d], rows)
    }

    /// Raw conv-net velocities for a coordinate grid `[d, *S]` (channel first).
    pub fn conv_velocity(&self, domain: &Domain, grid: &NdArray, t: f64) -> Result<NdArray> {
        if !matches!(self.config.arch, ArchConfig::GridConv { .. }) {
            return Err(Error::Config(format!("conv_velocity on a {} model", self.config.arch.name())));
        }
        if grid.shape() != domain.field_shape().as_slice() {
            return Err(Error::shape("conv_velocity", format!("grid {:?} for domain {:?}", grid.shape(), domain.shape())));
        }
        self.eval_raw(domain, grid.clone(), t)
    }

    fn eval_raw(&self, domain: &Domain, points: NdArray, t: f64) -> Result<NdArray> {
        let mut g = Graph::new();
        let vars = self
            .params
            .segments()
            .iter()
            .map(|(_, v)| g.constant(v.clone()))
            .collect::<Result<Vec<_>>>()?;
        let phi = g.constant(points)?;
        let v = self.raw_velocity(&mut g, &vars, phi, t, domain)?;
        Ok(g.value(v).clone())
    }
}
