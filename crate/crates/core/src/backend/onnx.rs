//! ONNX graph execution through tract.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use tract_onnx::prelude::*;

use super::bundle::{BundleConfig, BundleKind};
use super::tokenize::EncodedInput;
use crate::error::{Error, Result};

type Plan = SimplePlan<TypedFact, Box<dyn TypedOp>, Graph<TypedFact, Box<dyn TypedOp>>>;

const MAX_CACHED_PLANS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InputRole {
    TokenIds,
    AttentionMask,
    TypeIds,
}

/// A compiled graph. Graphs whose shapes can be analysed symbolically get one
/// plan for every batch shape; the rest are specialised per `(rows, seq)`.
pub(crate) struct OnnxGraph {
    model: InferenceModel,
    symbolic: Option<Arc<Plan>>,
    concrete: Mutex<HashMap<(usize, usize), Arc<Plan>>>,
    inputs: Vec<InputRole>,
}

fn inference<E: std::fmt::Display>(e: E) -> Error {
    Error::Inference(format!("{e:#}"))
}

fn compile(mut model: InferenceModel, shape: [TDim; 2]) -> Result<Plan> {
    let inputs = model.input_outlets().map_err(inference)?.len();
    for ix in 0..inputs {
        let fact = InferenceFact::dt_shape(i64::datum_type(), tvec![shape[0].clone(), shape[1].clone()]);
        model.set_input_fact(ix, fact).map_err(inference)?;
    }
    model
        .into_optimized()
        .map_err(inference)?
        .into_runnable()
        .map_err(inference)
}

impl OnnxGraph {
    pub(crate) fn load(path: &Path, config: &BundleConfig) -> Result<Self> {
        let mut model = tract_onnx::onnx().model_for_path(path).map_err(inference)?;

        let mut inputs = Vec::new();
        for outlet in model.input_outlets().map_err(inference)?.to_vec() {
            let name = model.node(outlet.node).name.as_str();
            let role = match name {
                "input_ids" => InputRole::TokenIds,
                "attention_mask" => InputRole::AttentionMask,
                "token_type_ids" => InputRole::TypeIds,
                other => {
                    return Err(Error::MalformedConfig(format!(
                        "graph input {other:?} is not one of input_ids, attention_mask, token_type_ids"
                    )))
                }
            };
            inputs.push(role);
        }

        let outputs: Vec<(String, OutletId)> = model
            .output_outlets()
            .map_err(inference)?
            .iter()
            .map(|&o| {
                let name = model
                    .outlet_label(o)
                    .map(str::to_string)
                    .unwrap_or_else(|| model.node(o.node).name.clone());
                (name, o)
            })
            .collect();
        let wanted = match config.kind {
            BundleKind::RegressionPair => "logits".to_string(),
            BundleKind::Encoder => config.embedding_layer.output_name(),
        };
        let chosen = if let Some((_, o)) = outputs.iter().find(|(n, _)| *n == wanted) {
            *o
        } else if config.embedding_layer == super::EmbeddingLayer::Last && !outputs.is_empty() {
            outputs[0].1
        } else {
            let names: Vec<&str> = outputs.iter().map(|(n, _)| n.as_str()).collect();
            return Err(Error::MalformedConfig(format!(
                "graph has no output {wanted:?} (outputs: {names:?})"
            )));
        };
        model.set_output_outlets(&[chosen]).map_err(inference)?;

        let batch = model.sym("batch").to_dim();
        let seq = model.sym("seq").to_dim();
        let symbolic = match compile(model.clone(), [batch, seq]) {
            Ok(plan) => Some(Arc::new(plan)),
            Err(e) => {
                log::debug!("{}: falling back to per-shape plans: {e}", path.display());
                None
            }
        };
        let graph = Self {
            model,
            symbolic,
            concrete: Mutex::new(HashMap::new()),
            inputs,
        };
        if graph.symbolic.is_none() {
            graph.plan(1, 2)?;
        }
        Ok(graph)
    }

    fn plan(&self, rows: usize, seq: usize) -> Result<Arc<Plan>> {
        if let Some(plan) = &self.symbolic {
            return Ok(plan.clone());
        }
        let key = (rows, seq);
        if let Some(plan) = self.concrete.lock().expect("plan cache").get(&key) {
            return Ok(plan.clone());
        }
        let plan = Arc::new(compile(self.model.clone(), [rows.to_dim(), seq.to_dim()])?);
        let mut cache = self.concrete.lock().expect("plan cache");
        if cache.len() >= MAX_CACHED_PLANS {
            cache.clear();
        }
        cache.insert(key, plan.clone());
        Ok(plan)
    }

    fn run(&self, batch: &[EncodedInput], pad_id: u32) -> Result<Tensor> {
        let seq = batch.iter().map(EncodedInput::len).max().unwrap_or(0);
        let rows = batch.len();
        let column = |role: InputRole| -> Result<TValue> {
            let mut data = Vec::with_capacity(rows * seq);
            for input in batch {
                let (values, pad): (&[u32], u32) = match role {
                    InputRole::TokenIds => (&input.token_ids, pad_id),
                    InputRole::AttentionMask => (&input.attention_mask, 0),
                    InputRole::TypeIds => (&input.type_ids, 0),
                };
                data.extend(values.iter().map(|&v| v as i64));
                data.extend(std::iter::repeat(pad as i64).take(seq - values.len()));
            }
            let array = tract_ndarray::Array2::from_shape_vec((rows, seq), data).map_err(inference)?;
            Ok(array.into_tensor().into())
        };
        let inputs: TVec<TValue> = self
            .inputs
            .iter()
            .map(|&role| column(role))
            .collect::<Result<_>>()?;
        let mut outputs = self.plan(rows, seq)?.run(inputs).map_err(inference)?;
        let out = outputs.remove(0).into_tensor();
        out.cast_to::<f32>().map(|t| t.into_owned()).map_err(inference)
    }

    /// One scalar per input.
    pub(crate) fn regress(&self, batch: &[EncodedInput], pad_id: u32) -> Result<Vec<f64>> {
        let out = self.run(batch, pad_id)?;
        let view = out.to_array_view::<f32>().map_err(inference)?;
        if view.len() != batch.len() {
            return Err(Error::Inference(format!(
                "expected {} regression outputs, graph produced shape {:?}",
                batch.len(),
                view.shape()
            )));
        }
        Ok(view.iter().map(|&v| v as f64).collect())
    }

    /// Per-token hidden states for each input, padding rows dropped.
    pub(crate) fn hidden_states(&self, batch: &[EncodedInput], pad_id: u32) -> Result<Vec<Vec<Vec<f64>>>> {
        let out = self.run(batch, pad_id)?;
        let view = out
            .to_array_view::<f32>()
            .map_err(inference)?
            .into_dimensionality::<tract_ndarray::Ix3>()
            .map_err(inference)?;
        if view.shape()[0] != batch.len() {
            return Err(Error::Inference(format!(
                "hidden states have batch dimension {}, expected {}",
                view.shape()[0],
                batch.len()
            )));
        }
        Ok(batch
            .iter()
            .enumerate()
            .map(|(b, input)| {
                (0..input.len())
                    .map(|t| view.slice(tract_ndarray::s![b, t, ..]).iter().map(|&v| v as f64).collect())
                    .collect()
            })
            .collect())
    }
}
