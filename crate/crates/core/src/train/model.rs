//! The bundled model artifact: every trainable component under stable
//! parameter names shared by the optimizer, checkpoints, and error messages.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::nn::{
    accumulate, read_checkpoint, write_checkpoint, ClassifierHead, DecoderStack, EncoderStack,
    GradStore, Linear, Mlp, MlpGrads, NnError,
};
use crate::regularizers::ReferenceSet;

use super::{Result, TrainError};

pub(crate) const CLASSIFIER_WEIGHT: &str = "classifier.weight";
pub(crate) const CLASSIFIER_BIAS: &str = "classifier.bias";

/// Stable path of one layer tensor: `{component}.{view}.layer.{layer}.{part}`.
pub(crate) fn layer_param(component: &str, view: usize, layer: usize, part: &str) -> String {
    format!("{component}.{view}.layer.{layer}.{part}")
}

/// Stable path of one view's projection matrix.
pub(crate) fn projection_param(view: usize) -> String {
    format!("projection.{view}")
}

/// Stable path of one learned reference batch.
pub(crate) fn reference_param(k: usize) -> String {
    format!("reference.{k}")
}

/// Adds one network's layer gradients to the store under the component's
/// parameter paths, scaled by `scale`.
pub(crate) fn accumulate_mlp_grads(
    store: &mut GradStore,
    component: &str,
    view: usize,
    grads: &MlpGrads,
    scale: f64,
) {
    for (layer, lg) in grads.layers.iter().enumerate() {
        accumulate(
            store,
            &layer_param(component, view, layer, "weight"),
            lg.weight.mapv(|v| v * scale),
        );
        accumulate(
            store,
            &layer_param(component, view, layer, "bias"),
            lg.bias.mapv(|v| v * scale),
        );
    }
}

/// Stacks per-view feature blocks vertically into a `(Σ rows) x B` matrix.
/// All blocks must share the batch width.
pub(crate) fn concat_rows(blocks: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("blocks share batch width")
}

/// Index of the largest entry in each column, ties resolved to the lowest
/// index.
pub(crate) fn argmax_columns(matrix: &Array2<f64>) -> Vec<usize> {
    matrix
        .axis_iter(Axis(1))
        .map(|col| {
            let mut best = 0;
            let mut best_value = f64::NEG_INFINITY;
            for (i, &v) in col.iter().enumerate() {
                if v > best_value {
                    best_value = v;
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Every trainable component of one run. Unsupervised runs carry only
/// encoders (plus references for reference-based penalties); semisupervised
/// runs add the classifier and, optionally, per-view decoders.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub encoders: EncoderStack,
    pub classifier: Option<ClassifierHead>,
    pub decoders: Option<DecoderStack>,
    pub references: Option<ReferenceSet>,
}

impl TrainedModel {
    /// All tensors under their stable names, in canonical order: encoder
    /// layers (view-major), projections, classifier, decoder layers,
    /// references. Checkpoints are written in exactly this order.
    pub fn named_tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::new();
        for view in 0..self.encoders.num_views() {
            for (layer, lin) in self.encoders.encoder(view).layers.iter().enumerate() {
                out.push((layer_param("encoder", view, layer, "weight"), &lin.weight));
                out.push((layer_param("encoder", view, layer, "bias"), &lin.bias));
            }
        }
        for view in 0..self.encoders.num_views() {
            out.push((projection_param(view), self.encoders.projection(view)));
        }
        if let Some(classifier) = &self.classifier {
            out.push((CLASSIFIER_WEIGHT.to_string(), &classifier.weight));
            out.push((CLASSIFIER_BIAS.to_string(), &classifier.bias));
        }
        if let Some(decoders) = &self.decoders {
            for view in 0..decoders.num_views() {
                for (layer, lin) in decoders.decoder(view).layers.iter().enumerate() {
                    out.push((layer_param("decoder", view, layer, "weight"), &lin.weight));
                    out.push((layer_param("decoder", view, layer, "bias"), &lin.bias));
                }
            }
        }
        if let Some(references) = &self.references {
            for (k, tensor) in references.iter().enumerate() {
                out.push((reference_param(k), tensor));
            }
        }
        out
    }

    /// Mutable handles to every tensor under the same names as
    /// [`TrainedModel::named_tensors`], for the optimizer.
    pub fn parameter_map(&mut self) -> BTreeMap<String, &mut Array2<f64>> {
        let mut map: BTreeMap<String, &mut Array2<f64>> = BTreeMap::new();
        let (encoders, projections) = self.encoders.parts_mut();
        for (view, encoder) in encoders.iter_mut().enumerate() {
            for (layer, lin) in encoder.layers.iter_mut().enumerate() {
                map.insert(layer_param("encoder", view, layer, "weight"), &mut lin.weight);
                map.insert(layer_param("encoder", view, layer, "bias"), &mut lin.bias);
            }
        }
        for (view, projection) in projections.iter_mut().enumerate() {
            map.insert(projection_param(view), projection);
        }
        if let Some(classifier) = self.classifier.as_mut() {
            map.insert(CLASSIFIER_WEIGHT.to_string(), &mut classifier.weight);
            map.insert(CLASSIFIER_BIAS.to_string(), &mut classifier.bias);
        }
        if let Some(decoders) = self.decoders.as_mut() {
            for (view, decoder) in decoders.decoders_mut().iter_mut().enumerate() {
                for (layer, lin) in decoder.layers.iter_mut().enumerate() {
                    map.insert(layer_param("decoder", view, layer, "weight"), &mut lin.weight);
                    map.insert(layer_param("decoder", view, layer, "bias"), &mut lin.bias);
                }
            }
        }
        if let Some(references) = self.references.as_mut() {
            for (k, tensor) in references.refs_mut().iter_mut().enumerate() {
                map.insert(reference_param(k), tensor);
            }
        }
        map
    }

    /// Writes the model in the binary checkpoint format. Byte-identical for
    /// identical models.
    pub fn save<W: Write>(&self, writer: &mut W) -> Result<()> {
        write_checkpoint(writer, &self.named_tensors())?;
        Ok(())
    }

    pub fn save_to_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut writer = BufWriter::new(File::create(path)?);
        self.save(&mut writer)
    }

    /// Rebuilds a model from a checkpoint, validating that the stored names
    /// form complete, gap-free components.
    pub fn load<R: Read>(reader: &mut R) -> Result<Self> {
        let tensors = read_checkpoint(reader)?;
        Assembler::default().assemble(tensors)
    }

    pub fn load_from_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        Self::load(&mut reader)
    }

    /// Concatenated encoder outputs for one aligned batch per view
    /// (`(S * encoder_out) x B`), the classifier's input representation.
    pub fn features(&self, views: &[&Array2<f64>]) -> Result<Array2<f64>> {
        if views.len() != self.encoders.num_views() {
            return Err(NnError::ViewCountMismatch {
                expected: self.encoders.num_views(),
                got: views.len(),
            }
            .into());
        }
        let batch = views.first().map(|v| v.ncols()).unwrap_or(0);
        if batch == 0 {
            return Err(NnError::EmptyBatch.into());
        }
        let mut blocks = Vec::with_capacity(views.len());
        for (view, input) in views.iter().enumerate() {
            if input.ncols() != batch {
                return Err(TrainError::DatasetMismatch(format!(
                    "view {view} has {} samples but view 0 has {batch}",
                    input.ncols()
                )));
            }
            let (out, _) = self.encoders.encoder(view).forward(input)?;
            blocks.push(out);
        }
        Ok(concat_rows(&blocks))
    }

    /// Class predictions for one aligned batch per view: argmax of the
    /// classifier logits on concatenated encoder outputs, ties resolved to
    /// the lowest class id.
    pub fn predict(&self, views: &[&Array2<f64>]) -> Result<Vec<usize>> {
        let classifier = self.classifier.as_ref().ok_or(TrainError::NoClassifier)?;
        let features = self.features(views)?;
        let logits = classifier.forward(&features)?;
        Ok(argmax_columns(&logits))
    }
}

/// Groups checkpoint tensors by parsed name and rebuilds each component,
/// rejecting unknown names, duplicates, gaps, and incomplete pairs.
#[derive(Default)]
struct Assembler {
    encoder_layers: BTreeMap<usize, BTreeMap<usize, LayerParts>>,
    projections: BTreeMap<usize, Array2<f64>>,
    decoder_layers: BTreeMap<usize, BTreeMap<usize, LayerParts>>,
    references: BTreeMap<usize, Array2<f64>>,
    classifier_weight: Option<Array2<f64>>,
    classifier_bias: Option<Array2<f64>>,
}

#[derive(Default)]
struct LayerParts {
    weight: Option<Array2<f64>>,
    bias: Option<Array2<f64>>,
}

fn bad(name: &str, why: &str) -> TrainError {
    TrainError::Checkpoint(format!("tensor `{name}`: {why}"))
}

fn parse_index(name: &str, text: &str) -> Result<usize> {
    text.parse()
        .map_err(|_| bad(name, "expected a numeric index"))
}

impl Assembler {
    fn assemble(mut self, tensors: Vec<(String, Array2<f64>)>) -> Result<TrainedModel> {
        for (name, tensor) in tensors {
            self.place(&name, tensor)?;
        }

        let encoders = build_mlps("encoder", self.encoder_layers)?;
        if encoders.is_empty() {
            return Err(TrainError::Checkpoint("no encoder tensors".into()));
        }
        let projections = contiguous("projection", self.projections)?;
        let encoders = EncoderStack::from_parts(encoders, projections)?;

        let classifier = match (self.classifier_weight, self.classifier_bias) {
            (Some(weight), Some(bias)) => Some(ClassifierHead { weight, bias }),
            (None, None) => None,
            _ => {
                return Err(TrainError::Checkpoint(
                    "classifier weight/bias must both be present or both absent".into(),
                ))
            }
        };

        let decoders = if self.decoder_layers.is_empty() {
            None
        } else {
            Some(DecoderStack::from_parts(build_mlps(
                "decoder",
                self.decoder_layers,
            )?))
        };

        let references = if self.references.is_empty() {
            None
        } else {
            Some(ReferenceSet::from_parts(contiguous(
                "reference",
                self.references,
            )?)?)
        };

        Ok(TrainedModel {
            encoders,
            classifier,
            decoders,
            references,
        })
    }

    fn place(&mut self, name: &str, tensor: Array2<f64>) -> Result<()> {
        let parts: Vec<&str> = name.split('.').collect();
        match parts.as_slice() {
            [component @ ("encoder" | "decoder"), view, "layer", layer, part @ ("weight" | "bias")] =>
            {
                let view = parse_index(name, view)?;
                let layer = parse_index(name, layer)?;
                let layers = if *component == "encoder" {
                    &mut self.encoder_layers
                } else {
                    &mut self.decoder_layers
                };
                let slot = layers.entry(view).or_default().entry(layer).or_default();
                let cell = if *part == "weight" {
                    &mut slot.weight
                } else {
                    &mut slot.bias
                };
                if cell.replace(tensor).is_some() {
                    return Err(bad(name, "duplicate tensor"));
                }
            }
            ["projection", view] => {
                let view = parse_index(name, view)?;
                if self.projections.insert(view, tensor).is_some() {
                    return Err(bad(name, "duplicate tensor"));
                }
            }
            ["reference", k] => {
                let k = parse_index(name, k)?;
                if self.references.insert(k, tensor).is_some() {
                    return Err(bad(name, "duplicate tensor"));
                }
            }
            ["classifier", "weight"] => {
                if self.classifier_weight.replace(tensor).is_some() {
                    return Err(bad(name, "duplicate tensor"));
                }
            }
            ["classifier", "bias"] => {
                if self.classifier_bias.replace(tensor).is_some() {
                    return Err(bad(name, "duplicate tensor"));
                }
            }
            _ => return Err(bad(name, "unrecognized name")),
        }
        Ok(())
    }
}

/// Checks that keys run 0..len without gaps and returns values in order.
fn contiguous(component: &str, map: BTreeMap<usize, Array2<f64>>) -> Result<Vec<Array2<f64>>> {
    let mut out = Vec::with_capacity(map.len());
    for (expected, (index, tensor)) in map.into_iter().enumerate() {
        if index != expected {
            return Err(TrainError::Checkpoint(format!(
                "{component} indices have a gap: expected {expected}, found {index}"
            )));
        }
        out.push(tensor);
    }
    Ok(out)
}

fn build_mlps(
    component: &str,
    views: BTreeMap<usize, BTreeMap<usize, LayerParts>>,
) -> Result<Vec<Mlp>> {
    let mut out = Vec::with_capacity(views.len());
    for (expected_view, (view, layers)) in views.into_iter().enumerate() {
        if view != expected_view {
            return Err(TrainError::Checkpoint(format!(
                "{component} views have a gap: expected {expected_view}, found {view}"
            )));
        }
        let mut lins = Vec::with_capacity(layers.len());
        for (expected_layer, (layer, parts)) in layers.into_iter().enumerate() {
            if layer != expected_layer {
                return Err(TrainError::Checkpoint(format!(
                    "{component} {view} layers have a gap: expected {expected_layer}, found {layer}"
                )));
            }
            let weight = parts.weight.ok_or_else(|| {
                bad(
                    &layer_param(component, view, layer, "weight"),
                    "missing from checkpoint",
                )
            })?;
            let bias = parts.bias.ok_or_else(|| {
                bad(
                    &layer_param(component, view, layer, "bias"),
                    "missing from checkpoint",
                )
            })?;
            lins.push(Linear { weight, bias });
        }
        out.push(Mlp { layers: lins });
    }
    Ok(out)
}
