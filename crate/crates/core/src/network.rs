//! Layered optical network: meshes, electro-optic activations, port drops
//! and a final power detection.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{build_mesh, CompiledMesh, MeshLayout, MeshParams, MziSetting, C64};

pub const PHASE_BOUNDS: (f64, f64) = (0.0, TAU);
pub const ALPHA_BOUNDS: (f64, f64) = (0.0, 1.0);
pub const GAIN_BOUNDS: (f64, f64) = (0.0, PI);
pub const BIAS_BOUNDS: (f64, f64) = (-TAU, 0.0);

/// Electro-optic activation: a fraction `alpha` of the optical power is
/// tapped to a photodetector whose signal, amplified by `gain`, drives a
/// phase shift on the remaining light together with the static `bias`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationParams {
    pub alpha: f64,
    pub gain: f64,
    pub bias: f64,
}

/// `j sqrt(1-α) e^{-jΔ/2} cos(Δ/2) z` with `Δ = g α |z|² + θ_b`.
#[inline]
pub fn eo_activation(z: C64, p: &ActivationParams) -> C64 {
    let transmission = (1.0 - p.alpha).sqrt();
    activation_kernel(z, p.gain * p.alpha, p.bias, transmission)
}

#[inline(always)]
fn activation_kernel(z: C64, drive: f64, bias: f64, transmission: f64) -> C64 {
    let delta = drive * z.norm_sqr() + bias;
    let (s, c) = delta.sin_cos();
    // j e^{-jΔ/2} cos(Δ/2) = j (1 + e^{-jΔ}) / 2
    z * C64::new(0.5 * s * transmission, 0.5 * (1.0 + c) * transmission)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Unitary(MeshLayout),
    /// One activation per port, all sharing a single parameter triple.
    Activation {
        width: usize,
    },
    DropPorts {
        keep: Vec<usize>,
    },
    Detection,
}

impl LayerSpec {
    pub fn param_count(&self) -> usize {
        match self {
            LayerSpec::Unitary(layout) => layout.phase_count(),
            LayerSpec::Activation { .. } => 3,
            LayerSpec::DropPorts { .. } | LayerSpec::Detection => 0,
        }
    }
}

#[derive(Deserialize)]
struct RawNetworkSpec {
    input_width: usize,
    layers: Vec<LayerSpec>,
}

/// Validated network description. `classes` is derived from the layers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetworkSpec")]
pub struct NetworkSpec {
    input_width: usize,
    layers: Vec<LayerSpec>,
    classes: usize,
}

impl TryFrom<RawNetworkSpec> for NetworkSpec {
    type Error = Error;

    fn try_from(raw: RawNetworkSpec) -> Result<Self> {
        NetworkSpec::new(raw.input_width, raw.layers)
    }
}

impl NetworkSpec {
    pub fn new(input_width: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::invalid("network input width must be at least 1"));
        }
        let mut width = input_width;
        let last = layers.len().checked_sub(1);
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                LayerSpec::Unitary(layout) if layout.width() != width => {
                    return Err(Error::shape(format!(
                        "layer {i}: width-{} mesh fed by {width} ports",
                        layout.width()
                    )))
                }
                LayerSpec::Activation { width: w } if *w != width => {
                    return Err(Error::shape(format!(
                        "layer {i}: width-{w} activation fed by {width} ports"
                    )))
                }
                LayerSpec::DropPorts { keep } => {
                    if keep.is_empty() {
                        return Err(Error::invalid(format!("layer {i}: port drop keeps no ports")));
                    }
                    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= width) {
                        return Err(Error::invalid(format!(
                            "layer {i}: kept ports {keep:?} must be increasing and below {width}"
                        )));
                    }
                    width = keep.len();
                }
                LayerSpec::Detection if Some(i) != last => {
                    return Err(Error::invalid("the detection layer must be the last layer"))
                }
                _ => {}
            }
        }
        if !matches!(layers.last(), Some(LayerSpec::Detection)) {
            return Err(Error::invalid("network must end with a detection layer"));
        }
        Ok(Self {
            input_width,
            layers,
            classes: width,
        })
    }

    /// `unitary_layers` meshes of equal width with an activation between each
    /// pair, then an optional port drop and detection.
    pub fn layered(width: usize, unitary_layers: usize, keep: Option<Vec<usize>>) -> Result<Self> {
        if unitary_layers == 0 {
            return Err(Error::invalid("a network needs at least one unitary layer"));
        }
        let layout = build_mesh(width)?;
        let mut layers = Vec::with_capacity(2 * unitary_layers + 1);
        for k in 0..unitary_layers {
            if k > 0 {
                layers.push(LayerSpec::Activation { width });
            }
            layers.push(LayerSpec::Unitary(layout.clone()));
        }
        if let Some(keep) = keep {
            layers.push(LayerSpec::DropPorts { keep });
        }
        layers.push(LayerSpec::Detection);
        Self::new(width, layers)
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(LayerSpec::param_count).sum()
    }

    /// Search range of every entry of a flattened parameter vector.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        let mut bounds = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                LayerSpec::Unitary(layout) => bounds.extend(std::iter::repeat_n(PHASE_BOUNDS, layout.phase_count())),
                LayerSpec::Activation { .. } => bounds.extend([ALPHA_BOUNDS, GAIN_BOUNDS, BIAS_BOUNDS]),
                _ => {}
            }
        }
        bounds
    }
}

pub fn param_count(spec: &NetworkSpec) -> usize {
    spec.param_count()
}

/// Flat trainable vector with per-entry bounds. The layout follows the
/// layer order: per mesh the input phases then `(theta, phi)` per MZI, per
/// activation `(alpha, gain, bias)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, bounds: Vec<(f64, f64)>) -> Result<Self> {
        let v = Self { values, bounds };
        v.check()?;
        Ok(v)
    }

    pub fn for_spec(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::shape(format!(
                "{} values for a network with {} parameters",
                values.len(),
                spec.param_count()
            )));
        }
        Self::new(values, spec.bounds())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.values.len() != self.bounds.len() {
            return Err(Error::shape(format!(
                "{} values but {} bounds",
                self.values.len(),
                self.bounds.len()
            )));
        }
        for (i, (&x, &(lo, hi))) in self.values.iter().zip(&self.bounds).enumerate() {
            if !(lo <= x && x <= hi) {
                return Err(Error::invalid(format!("parameter {i} = {x} outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn clip(&mut self) {
        for (x, &(lo, hi)) in self.values.iter_mut().zip(&self.bounds) {
            *x = x.clamp(lo, hi);
        }
    }
}

/// Structured parameters of one layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Mesh(MeshParams),
    Activation(ActivationParams),
    Fixed,
}

pub fn flatten(spec: &NetworkSpec, layers: &[LayerParams]) -> Result<ParamVector> {
    if layers.len() != spec.layers.len() {
        return Err(Error::shape(format!(
            "{} layer parameter sets for {} layers",
            layers.len(),
            spec.layers.len()
        )));
    }
    let mut values = Vec::with_capacity(spec.param_count());
    for (i, (layer, params)) in spec.layers.iter().zip(layers).enumerate() {
        match (layer, params) {
            (LayerSpec::Unitary(layout), LayerParams::Mesh(mesh)) => {
                mesh.check(layout)?;
                values.extend_from_slice(&mesh.input_phases);
                values.extend(mesh.mzis.iter().flat_map(|m| [m.theta(), m.phi()]));
            }
            (LayerSpec::Activation { .. }, LayerParams::Activation(a)) => {
                values.extend([a.alpha, a.gain, a.bias]);
            }
            (LayerSpec::DropPorts { .. } | LayerSpec::Detection, LayerParams::Fixed) => {}
            _ => return Err(Error::shape(format!("layer {i}: parameters do not match layer kind"))),
        }
    }
    ParamVector::for_spec(spec, values)
}

pub fn unflatten(spec: &NetworkSpec, v: &ParamVector) -> Result<Vec<LayerParams>> {
    if v.len() != spec.param_count() {
        return Err(Error::shape(format!(
            "{} values for a network with {} parameters",
            v.len(),
            spec.param_count()
        )));
    }
    let mut rest = v.values.as_slice();
    let mut out = Vec::with_capacity(spec.layers.len());
    for layer in &spec.layers {
        let (mine, tail) = rest.split_at(layer.param_count());
        rest = tail;
        out.push(match layer {
            LayerSpec::Unitary(layout) => {
                let (inputs, mzis) = mine.split_at(layout.width());
                LayerParams::Mesh(MeshParams {
                    input_phases: inputs.to_vec(),
                    mzis: mzis
                        .chunks_exact(2)
                        .map(|p| MziSetting::new(p[0], p[1]))
                        .collect::<Result<_>>()?,
                    output_phases: None,
                })
            }
            LayerSpec::Activation { .. } => LayerParams::Activation(ActivationParams {
                alpha: mine[0],
                gain: mine[1],
                bias: mine[2],
            }),
            _ => LayerParams::Fixed,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

pub const CROSS_ENTROPY_FLOOR: f64 = 1e-12;

pub fn loss(pred: &[f64], target: &[f64], kind: LossKind) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape(format!(
            "prediction of length {} against target of length {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(match kind {
        LossKind::Mse => pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64,
        LossKind::CrossEntropy => {
            let total: f64 = pred.iter().map(|p| p + CROSS_ENTROPY_FLOOR).sum();
            -pred
                .iter()
                .zip(target)
                .map(|(p, t)| t * ((p + CROSS_ENTROPY_FLOOR) / total).ln())
                .sum::<f64>()
        }
    })
}

/// Index of the strongest detected power; ties go to the lowest index.
pub fn predict(powers: &[f64]) -> Result<usize> {
    if powers.is_empty() {
        return Err(Error::shape("cannot predict from an empty power vector"));
    }
    Ok(argmax(powers))
}

#[inline]
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Encoded input fields and class labels, ready for repeated evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    width: usize,
    classes: usize,
    fields: Vec<C64>,
    labels: Vec<usize>,
}

impl Samples {
    pub fn new(width: usize, classes: usize, fields: Vec<Vec<C64>>, labels: Vec<usize>) -> Result<Self> {
        if fields.len() != labels.len() {
            return Err(Error::shape(format!(
                "{} fields but {} labels",
                fields.len(),
                labels.len()
            )));
        }
        if fields.iter().any(|f| f.len() != width) {
            return Err(Error::shape(format!("every field must have {width} entries")));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!("label {l} out of range for {classes} classes")));
        }
        Ok(Self {
            width,
            classes,
            fields: fields.into_iter().flatten().collect(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn field(&self, i: usize) -> &[C64] {
        &self.fields[i * self.width..(i + 1) * self.width]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[C64], usize)> {
        self.fields
            .chunks_exact(self.width.max(1))
            .zip(self.labels.iter().copied())
    }
}

/// Mean loss and number of correct predictions over a sample set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub correct: usize,
    pub total: usize,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Clone, Debug)]
enum Stage {
    Mesh(CompiledMesh),
    Activation { drive: f64, bias: f64, transmission: f64 },
    Drop(Vec<usize>),
    Detection,
}

/// A network with one parameter vector baked in.
#[derive(Clone, Debug)]
pub struct CompiledNetwork {
    input_width: usize,
    max_width: usize,
    classes: usize,
    stages: Vec<Stage>,
}

impl CompiledNetwork {
    pub fn new(spec: &NetworkSpec, params: &ParamVector) -> Result<Self> {
        if params.len() != spec.param_count() {
            return Err(Error::shape(format!(
                "{} values for a network with {} parameters",
                params.len(),
                spec.param_count()
            )));
        }
        if params.values.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("network parameters must be finite"));
        }
        Ok(Self::from_values(spec, &params.values))
    }

    /// Build from a raw value slice of length `spec.param_count()`.
    pub fn from_values(spec: &NetworkSpec, values: &[f64]) -> Self {
        assert_eq!(values.len(), spec.param_count());
        let mut rest = values;
        let mut stages = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            let (mine, tail) = rest.split_at(layer.param_count());
            rest = tail;
            stages.push(match layer {
                LayerSpec::Unitary(layout) => {
                    let (inputs, mzis) = mine.split_at(layout.width());
                    let params = MeshParams {
                        input_phases: inputs.to_vec(),
                        mzis: mzis
                            .chunks_exact(2)
                            .map(|p| MziSetting::new(p[0], p[1]).expect("finite phases"))
                            .collect(),
                        output_phases: None,
                    };
                    Stage::Mesh(CompiledMesh::new_unchecked(layout, &params))
                }
                LayerSpec::Activation { .. } => Stage::Activation {
                    drive: mine[1] * mine[0],
                    bias: mine[2],
                    transmission: (1.0 - mine[0]).max(0.0).sqrt(),
                },
                LayerSpec::DropPorts { keep } => Stage::Drop(keep.clone()),
                LayerSpec::Detection => Stage::Detection,
            });
        }
        let max_width = spec
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Unitary(m) => Some(m.width()),
                LayerSpec::Activation { width } => Some(*width),
                _ => None,
            })
            .chain([spec.input_width])
            .max()
            .unwrap_or(spec.input_width);
        Self {
            input_width: spec.input_width,
            max_width,
            classes: spec.classes,
            stages,
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Detected powers written into `out`; `scratch` is reused between calls.
    pub fn forward_into(&self, input: &[C64], scratch: &mut Vec<C64>, out: &mut Vec<f64>) {
        debug_assert_eq!(input.len(), self.input_width);
        scratch.clear();
        scratch.extend_from_slice(input);
        scratch.reserve(self.max_width);
        out.clear();
        for stage in &self.stages {
            match stage {
                Stage::Mesh(mesh) => mesh.apply_in_place(scratch),
                Stage::Activation {
                    drive,
                    bias,
                    transmission,
                } => {
                    for z in scratch.iter_mut() {
                        *z = activation_kernel(*z, *drive, *bias, *transmission);
                    }
                }
                Stage::Drop(keep) => {
                    for (dst, &src) in keep.iter().enumerate() {
                        scratch[dst] = scratch[src];
                    }
                    scratch.truncate(keep.len());
                }
                Stage::Detection => out.extend(scratch.iter().map(|z| z.norm_sqr())),
            }
        }
    }

    pub fn forward(&self, input: &[C64]) -> Result<Vec<f64>> {
        if input.len() != self.input_width {
            return Err(Error::shape(format!(
                "input field of length {} into a network of width {}",
                input.len(),
                self.input_width
            )));
        }
        let mut scratch = Vec::with_capacity(self.max_width);
        let mut out = Vec::with_capacity(self.classes);
        self.forward_into(input, &mut scratch, &mut out);
        Ok(out)
    }

    /// Mean MSE against one-hot targets plus the count of correct argmax
    /// predictions. An empty sample set has loss 0.
    pub fn evaluate(&self, samples: &Samples) -> Evaluation {
        let mut scratch = Vec::with_capacity(self.max_width);
        let mut out = Vec::with_capacity(self.classes);
        let mut total_loss = 0.0;
        let mut correct = 0;
        for (field, label) in samples.iter() {
            self.forward_into(field, &mut scratch, &mut out);
            let mut sq = 0.0;
            for (k, &p) in out.iter().enumerate() {
                let d = if k == label { p - 1.0 } else { p };
                sq += d * d;
            }
            total_loss += sq / out.len() as f64;
            if argmax(&out) == label {
                correct += 1;
            }
        }
        let n = samples.len();
        Evaluation {
            loss: if n == 0 { 0.0 } else { total_loss / n as f64 },
            correct,
            total: n,
        }
    }
}

pub fn forward(spec: &NetworkSpec, params: &ParamVector, input: &[C64]) -> Result<Vec<f64>> {
    CompiledNetwork::new(spec, params)?.forward(input)
}

fn check_samples(spec: &NetworkSpec, samples: &Samples) -> Result<()> {
    if samples.width() != spec.input_width() || samples.classes() != spec.classes() {
        return Err(Error::shape(format!(
            "samples of width {} with {} classes for a network of width {} with {} classes",
            samples.width(),
            samples.classes(),
            spec.input_width(),
            spec.classes()
        )));
    }
    Ok(())
}

pub fn evaluate(spec: &NetworkSpec, params: &ParamVector, samples: &Samples) -> Result<Evaluation> {
    check_samples(spec, samples)?;
    Ok(CompiledNetwork::new(spec, params)?.evaluate(samples))
}

pub fn accuracy(spec: &NetworkSpec, params: &ParamVector, samples: &Samples) -> Result<f64> {
    Ok(evaluate(spec, params, samples)?.accuracy())
}
