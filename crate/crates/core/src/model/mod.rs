//! MLP backbones with three ways of using time:
//!
//! - `Static`: ignores timestamps.
//! - `Embedding`: concatenates `ψ(t)` to the (standardized) features.
//! - `Modulated`: applies time-conditioned modulation at any subset of the
//!   input, hidden pre-activations and output logit, each placement owning
//!   its own [`Modulator`] over the shared `ψ(t)`.

mod io;

pub use io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};

use serde::{Deserialize, Serialize};

use crate::data::{Standardizer, TargetScaler, Task};
use crate::embedding::{EmbeddingConfig, TemporalEmbedding, TrendNormalizer};
use crate::error::{Error, Result};
use crate::modulation::{
    modulate, modulate_backward, ModulateCache, Modulator, ModulatorCache, Placement, DEFAULT_H_MOD,
};
use crate::numeric::{bce_with_logits, mse_loss, relu_backward, relu_forward, sigmoid, Linear, Matrix, Parameter};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub input_width: usize,
    pub hidden: Vec<usize>,
}

impl BackboneSpec {
    pub fn new(input_width: usize) -> Self {
        Self {
            input_width,
            hidden: vec![256, 256],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Static,
    Embedding,
    Modulated,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Static => "static",
            Variant::Embedding => "embedding",
            Variant::Modulated => "modulated",
        })
    }
}

/// Which stages are modulated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Placements {
    pub input: bool,
    /// Hidden-layer indices whose pre-activations are modulated.
    pub representation: Vec<usize>,
    pub output: bool,
}

impl Default for Placements {
    fn default() -> Self {
        Self::input_only()
    }
}

impl Placements {
    pub fn none() -> Self {
        Self {
            input: false,
            representation: Vec::new(),
            output: false,
        }
    }

    pub fn input_only() -> Self {
        Self {
            input: true,
            ..Self::none()
        }
    }

    pub fn all(hidden_layers: usize) -> Self {
        Self {
            input: true,
            representation: (0..hidden_layers).collect(),
            output: true,
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.input && self.representation.is_empty() && !self.output
    }

    /// Active placements in forward order.
    pub fn list(&self) -> Vec<Placement> {
        let mut out = Vec::new();
        if self.input {
            out.push(Placement::Input);
        }
        let mut reps = self.representation.clone();
        reps.sort_unstable();
        reps.dedup();
        out.extend(reps.into_iter().map(Placement::Representation));
        if self.output {
            out.push(Placement::Output);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub backbone: BackboneSpec,
    pub variant: Variant,
    pub embedding: EmbeddingConfig,
    pub placements: Placements,
    pub h_mod: usize,
    pub task: Task,
}

impl ModelSpec {
    pub fn new(variant: Variant, input_width: usize, task: Task) -> Self {
        Self {
            backbone: BackboneSpec::new(input_width),
            variant,
            embedding: EmbeddingConfig::default(),
            placements: Placements::default(),
            h_mod: DEFAULT_H_MOD,
            task,
        }
    }

    /// The variant after degenerate settings are collapsed: a zero-width
    /// embedding, or a modulated model without placements, is static.
    pub fn effective_variant(&self) -> Variant {
        match self.variant {
            Variant::Embedding if !self.embedding.enabled() => Variant::Static,
            Variant::Modulated if !self.embedding.enabled() || self.placements.is_empty() => Variant::Static,
            v => v,
        }
    }

    pub fn uses_time(&self) -> bool {
        self.effective_variant() != Variant::Static
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Input(m));
        if self.backbone.input_width == 0 {
            return bad("backbone input width must be positive".into());
        }
        if self.backbone.hidden.is_empty() || self.backbone.hidden.contains(&0) {
            return bad(format!(
                "backbone needs at least one positive hidden width, got {:?}",
                self.backbone.hidden
            ));
        }
        self.embedding.validate().map_err(Error::Input)?;
        if self.variant == Variant::Modulated {
            if let Some(&i) = self
                .placements
                .representation
                .iter()
                .find(|&&i| i >= self.backbone.hidden.len())
            {
                return bad(format!(
                    "representation placement {i} out of range for {} hidden layers",
                    self.backbone.hidden.len()
                ));
            }
            if self.h_mod == 0 {
                return bad("h_mod must be positive".into());
            }
        }
        Ok(())
    }

    /// Width of the tensor modulated at `placement`.
    pub fn placement_width(&self, placement: Placement) -> usize {
        match placement {
            Placement::Input => self.backbone.input_width,
            Placement::Representation(i) => self.backbone.hidden[i],
            Placement::Output => 1,
        }
    }
}

/// Training-split statistics the model applies at inference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub standardizer: Standardizer,
    pub trend: TrendNormalizer,
    pub target: TargetScaler,
}

impl Preprocessing {
    pub fn identity(width: usize) -> Self {
        Self {
            standardizer: Standardizer::identity(width),
            trend: TrendNormalizer { t_min: 0.0, t_max: 1.0 },
            target: TargetScaler::default(),
        }
    }
}

/// A model with all parameters and the statistics needed for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    pub preprocessing: Preprocessing,
    pub layers: Vec<Linear>,
    pub embedding: Option<TemporalEmbedding>,
    pub modulators: Vec<(Placement, Modulator)>,
}

/// Activations kept from a forward pass for [`Model::backward`].
pub struct ForwardCache<'a> {
    x: &'a Matrix,
    raw_time: Option<&'a Matrix>,
    psi: Option<Matrix>,
    /// Input to each linear layer (the last entry feeds the output layer).
    layer_inputs: Vec<Matrix>,
    /// Pre-activation (after any representation modulation) of each hidden layer.
    pre_activations: Vec<Matrix>,
    modulations: Vec<(ModulatorCache, ModulateCache)>,
}

/// One mini-batch in model space: standardized features, raw time features
/// and loss-space targets.
#[derive(Debug, Clone)]
pub struct Batch {
    pub x: Matrix,
    pub raw_time: Option<Matrix>,
    pub y: Vec<f64>,
}

impl Model {
    /// Initializes all parameters from `seed`. Each component draws from its
    /// own derived stream, so the backbone is identical across variants that
    /// share a first-layer shape.
    pub fn new(spec: ModelSpec, preprocessing: Preprocessing, seed: u64) -> Result<Self> {
        spec.validate()?;
        if preprocessing.standardizer.width() != spec.backbone.input_width {
            return Err(Error::dim(
                "Model::new",
                format!("standardizer width {}", spec.backbone.input_width),
                preprocessing.standardizer.width(),
            ));
        }
        let variant = spec.effective_variant();
        let d = spec.embedding.d_embedding;
        let first_in = spec.backbone.input_width + if variant == Variant::Embedding { d } else { 0 };

        let mut backbone_rng = rng::stream(seed, "backbone");
        let mut layers = Vec::new();
        let mut width = first_in;
        for &h in &spec.backbone.hidden {
            layers.push(Linear::init_uniform(width, h, &mut backbone_rng));
            width = h;
        }
        layers.push(Linear::init_uniform(width, 1, &mut backbone_rng));

        let embedding = if variant == Variant::Static {
            None
        } else {
            Some(TemporalEmbedding::new(
                spec.embedding.clone(),
                preprocessing.trend,
                &mut rng::stream(seed, "embedding"),
            )?)
        };

        let modulators = if variant == Variant::Modulated {
            spec.placements
                .list()
                .into_iter()
                .map(|p| {
                    let mut r = rng::stream(seed, &format!("modulator.{p}"));
                    (p, Modulator::new(d, spec.h_mod, spec.placement_width(p), &mut r))
                })
                .collect()
        } else {
            Vec::new()
        };

        Ok(Self {
            spec,
            preprocessing,
            layers,
            embedding,
            modulators,
        })
    }

    /// Assembles a model from explicit parts, checking every shape.
    pub fn from_parts(
        spec: ModelSpec,
        preprocessing: Preprocessing,
        layers: Vec<Linear>,
        embedding: Option<TemporalEmbedding>,
        modulators: Vec<(Placement, Modulator)>,
    ) -> Result<Self> {
        let template = Model::new(spec.clone(), preprocessing.clone(), 0)?;
        let shapes = |m: &Model| -> Vec<(String, (usize, usize))> {
            m.named_params()
                .into_iter()
                .map(|(n, p)| (n, p.value.shape()))
                .collect()
        };
        let model = Self {
            spec,
            preprocessing,
            layers,
            embedding,
            modulators,
        };
        if shapes(&template) != shapes(&model) {
            return Err(Error::ModelFormat("parameter shapes do not match the spec".into()));
        }
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn task(&self) -> Task {
        self.spec.task
    }

    pub fn variant(&self) -> Variant {
        self.spec.effective_variant()
    }

    pub fn uses_time(&self) -> bool {
        self.embedding.is_some()
    }

    /// Raw time features for `t`, or `None` for static models.
    pub fn time_features(&self, t: &[f64]) -> Option<Matrix> {
        self.embedding.as_ref().map(|e| e.raw(t))
    }

    fn modulator_at(&self, placement: Placement) -> Option<usize> {
        self.modulators.iter().position(|(p, _)| *p == placement)
    }

    /// Forward pass on standardized features. `raw_time` must be present for
    /// time-aware models.
    pub fn forward_cached<'a>(
        &self,
        x: &'a Matrix,
        raw_time: Option<&'a Matrix>,
    ) -> Result<(Matrix, ForwardCache<'a>)> {
        let psi = match &self.embedding {
            Some(e) => {
                let raw = raw_time.ok_or_else(|| self.missing_time())?;
                if raw.rows() != x.rows() {
                    return Err(Error::dim("Model::forward", x.rows(), raw.rows()));
                }
                Some(e.forward(raw)?)
            }
            None => None,
        };
        self.forward_psi(x, raw_time, psi)
    }

    fn missing_time(&self) -> Error {
        Error::Input(format!("{} model needs timestamps", self.variant()))
    }

    /// `psi` has one row per sample, or a single row shared by the batch.
    fn forward_psi<'a>(
        &self,
        x: &'a Matrix,
        raw_time: Option<&'a Matrix>,
        psi: Option<Matrix>,
    ) -> Result<(Matrix, ForwardCache<'a>)> {
        if x.cols() != self.spec.backbone.input_width {
            return Err(Error::dim("Model::forward", self.spec.backbone.input_width, x.cols()));
        }
        let mut cache = ForwardCache {
            x,
            raw_time,
            psi: None,
            layer_inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len() - 1),
            modulations: Vec::new(),
        };

        let apply = |placement: Placement, h: Matrix, cache: &mut ForwardCache<'a>| -> Result<Matrix> {
            match (self.modulator_at(placement), &psi) {
                (Some(k), Some(psi)) => {
                    let (params, mc) = self.modulators[k].1.forward(psi)?;
                    let (out, c) = modulate(&h, &params)?;
                    cache.modulations.push((mc, c));
                    Ok(out)
                }
                _ => Ok(h),
            }
        };

        let mut h = apply(Placement::Input, x.clone(), &mut cache)?;
        if self.variant() == Variant::Embedding {
            let psi = psi.as_ref().expect("embedding variant has psi");
            h = if psi.rows() == h.rows() {
                h.hconcat(psi)?
            } else {
                let rows = vec![0; h.rows()];
                h.hconcat(&psi.select_rows(&rows))?
            };
        }
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers[..last].iter().enumerate() {
            let z = layer.forward(&h)?;
            cache.layer_inputs.push(h);
            let z = apply(Placement::Representation(i), z, &mut cache)?;
            h = relu_forward(&z);
            cache.pre_activations.push(z);
        }
        let out = self.layers[last].forward(&h)?;
        cache.layer_inputs.push(h);
        let out = apply(Placement::Output, out, &mut cache)?;
        cache.psi = psi;
        Ok((out, cache))
    }

    /// Forward pass with every row observed at the same timestamp `t`.
    pub fn forward_at(&self, x: &Matrix, t: f64) -> Result<Matrix> {
        let psi = match &self.embedding {
            Some(e) => Some(e.forward(&e.raw(&[t]))?),
            None => None,
        };
        self.forward_psi(x, None, psi).map(|(out, _)| out)
    }

    /// The input after input-level modulation, or `None` when the input is
    /// not modulated.
    pub fn modulated_input(&self, x: &Matrix, t: &[f64]) -> Result<Option<Matrix>> {
        let (Some(k), Some(e)) = (self.modulator_at(Placement::Input), &self.embedding) else {
            return Ok(None);
        };
        if t.len() != x.rows() {
            return Err(Error::dim("Model::modulated_input", x.rows(), t.len()));
        }
        let psi = e.forward(&e.raw(t))?;
        let (params, _) = self.modulators[k].1.forward(&psi)?;
        Ok(Some(modulate(x, &params)?.0))
    }

    /// Logits (classification) or standardized predictions (regression).
    pub fn forward(&self, x: &Matrix, raw_time: Option<&Matrix>) -> Result<Matrix> {
        self.forward_cached(x, raw_time).map(|(out, _)| out)
    }

    /// Forward pass from timestamps; `t` is ignored by static models.
    pub fn forward_t(&self, x: &Matrix, t: Option<&[f64]>) -> Result<Matrix> {
        let raw = match (self.uses_time(), t) {
            (true, Some(t)) => Some(self.time_features(t).expect("time-aware model")),
            (true, None) => return Err(self.missing_time()),
            (false, _) => None,
        };
        self.forward(x, raw.as_ref())
    }

    /// Accumulates gradients of the loss given `∂L/∂output`.
    pub fn backward(&mut self, cache: &ForwardCache<'_>, grad_out: &Matrix) -> Result<()> {
        let variant = self.variant();
        let mut mod_caches = cache.modulations.iter().rev();
        let mut psi_grad = cache.psi.as_ref().map(|p| Matrix::zeros(p.rows(), p.cols()));

        let mut unmodulate =
            |model: &mut Model, psi_grad: &mut Option<Matrix>, placement: Placement, g: Matrix| -> Result<Matrix> {
                let Some(k) = model.modulator_at(placement) else {
                    return Ok(g);
                };
                let (mc, c) = mod_caches.next().expect("cache per modulation");
                let grads = modulate_backward(c, &g)?;
                let gp = model.modulators[k].1.backward(mc, &grads)?;
                psi_grad.as_mut().expect("modulated model has psi").add_assign(&gp)?;
                Ok(grads.x)
            };

        let last = self.layers.len() - 1;
        let g = unmodulate(self, &mut psi_grad, Placement::Output, grad_out.clone())?;
        let mut g = self.layers[last].backward(&cache.layer_inputs[last], &g)?;
        for i in (0..last).rev() {
            g = relu_backward(&cache.pre_activations[i], &g)?;
            g = unmodulate(self, &mut psi_grad, Placement::Representation(i), g)?;
            g = self.layers[i].backward(&cache.layer_inputs[i], &g)?;
        }
        if variant == Variant::Embedding {
            let (gx, gpsi) = g.hsplit(self.spec.backbone.input_width);
            psi_grad
                .as_mut()
                .expect("embedding variant has psi")
                .add_assign(&gpsi)?;
            g = gx;
        }
        unmodulate(self, &mut psi_grad, Placement::Input, g)?;

        if let (Some(e), Some(gpsi), Some(raw)) = (self.embedding.as_mut(), psi_grad, cache.raw_time) {
            e.backward(raw, &gpsi)?;
        }
        debug_assert_eq!(cache.x.cols(), self.spec.backbone.input_width);
        Ok(())
    }

    /// Task loss of a batch; gradients are accumulated into every reachable
    /// parameter.
    pub fn loss_and_grad(&mut self, batch: &Batch) -> Result<f64> {
        if batch.y.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        let (out, cache) = self.forward_cached(&batch.x, batch.raw_time.as_ref())?;
        let (loss, grad) = self.loss(&out, &batch.y)?;
        self.backward(&cache, &grad)?;
        Ok(loss)
    }

    pub fn loss(&self, out: &Matrix, y: &[f64]) -> Result<(f64, Matrix)> {
        match self.spec.task {
            Task::BinaryClassification => bce_with_logits(out, y),
            Task::Regression => mse_loss(out, y),
        }
    }

    /// Class-1 probabilities for raw (unstandardized) features.
    pub fn predict_proba(&self, x: &Matrix, t: Option<&[f64]>) -> Result<Vec<f64>> {
        if self.spec.task != Task::BinaryClassification {
            return Err(Error::Input("predict_proba needs a classification model".into()));
        }
        let z = self.preprocessing.standardizer.apply(x)?;
        Ok(self.forward_t(&z, t)?.as_slice().iter().map(|&v| sigmoid(v)).collect())
    }

    /// Regression predictions in target units for raw features.
    pub fn predict(&self, x: &Matrix, t: Option<&[f64]>) -> Result<Vec<f64>> {
        if self.spec.task != Task::Regression {
            return Err(Error::Input("predict needs a regression model".into()));
        }
        let z = self.preprocessing.standardizer.apply(x)?;
        let scaler = self.preprocessing.target;
        Ok(self
            .forward_t(&z, t)?
            .as_slice()
            .iter()
            .map(|&v| scaler.unscale(v))
            .collect())
    }

    /// All parameters with stable names, in serialization order.
    pub fn named_params(&self) -> Vec<(String, &Parameter)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("backbone.{i}.weight"), &l.weight));
            out.push((format!("backbone.{i}.bias"), &l.bias));
        }
        if let Some(e) = &self.embedding {
            out.push(("embedding.weight".into(), &e.projection.weight));
            out.push(("embedding.bias".into(), &e.projection.bias));
        }
        for (p, m) in &self.modulators {
            let names = ["hidden.weight", "hidden.bias", "head.weight", "head.bias"];
            for (n, param) in names.iter().zip(m.params()) {
                out.push((format!("modulator.{p}.{n}"), param));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out: Vec<&mut Parameter> = Vec::new();
        for l in &mut self.layers {
            out.extend(l.params_mut());
        }
        if let Some(e) = &mut self.embedding {
            out.extend(e.params_mut());
        }
        for (_, m) in &mut self.modulators {
            out.extend(m.params_mut());
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.named_params()
            .iter()
            .flat_map(|(_, p)| p.value.as_slice().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.named_params()
            .iter()
            .flat_map(|(_, p)| p.grad.as_slice().iter().copied())
            .collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::dim("Model::set_flat_params", self.num_params(), values.len()));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.value.as_mut_slice().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
