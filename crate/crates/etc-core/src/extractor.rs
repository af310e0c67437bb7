//! Backbone classifier training and hidden-activation extraction. The
//! backbone is an MLP whose hidden layers are the candidate injection
//! points; everything downstream (encoders, discriminator, heads)
//! consumes the activations tapped after one of those layers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Domain, LabeledDataset};
use crate::error::{Error, Result};
use crate::exec;
use crate::nn::{
    classification_accuracy, train_supervised, Activation, LayerSpec, Network, Targets,
    TrainConfig,
};
use crate::rng;

/// Source classifier with `n_hidden` injectable hidden layers; the final
/// softmax layer is not an injection point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub net: Network,
    pub n_hidden: usize,
}

impl Backbone {
    pub fn new(net: Network) -> Result<Self> {
        net.validate()?;
        if net.n_layers() < 2 {
            return Err(Error::InvalidNetwork(
                "backbone needs at least one hidden layer plus an output layer".to_string(),
            ));
        }
        let n_hidden = net.n_layers() - 1;
        Ok(Backbone { net, n_hidden })
    }

    pub fn class_count(&self) -> usize {
        self.net.output_dim()
    }

    /// Width of the activation vector after hidden layer `layer_index`
    /// (1-based).
    pub fn activation_dim(&self, layer_index: usize) -> Result<usize> {
        if layer_index == 0 || layer_index > self.n_hidden {
            return Err(Error::LayerOutOfRange {
                index: layer_index,
                n_layers: self.n_hidden,
            });
        }
        Ok(self.net.layers[layer_index - 1].output_dim())
    }
}

/// Per-sample activations tapped after one backbone layer, with the
/// sample order of the originating dataset preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationSet {
    pub activations: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
    pub domain: Domain,
    pub layer_index: usize,
    pub class_count: usize,
}

impl ActivationSet {
    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.activations.first().map_or(0, Vec::len)
    }

    pub fn labels(&self) -> Result<&[usize]> {
        self.labels.as_deref().ok_or(Error::MissingLabels)
    }

    /// One row per sample, features first; the label column is appended
    /// only when labels are present.
    pub fn export_csv(&self, path: &Path, header: bool) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        if header {
            let mut cols: Vec<String> = (0..self.dim()).map(|i| format!("f{i}")).collect();
            if self.labels.is_some() {
                cols.push("label".to_string());
            }
            writeln!(w, "{}", cols.join(",")).map_err(|e| Error::io(path, e))?;
        }
        for (i, a) in self.activations.iter().enumerate() {
            let mut cells: Vec<String> = a.iter().map(|v| format!("{v}")).collect();
            if let Some(labels) = &self.labels {
                cells.push(labels[i].to_string());
            }
            writeln!(w, "{}", cells.join(",")).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Trains the backbone on labeled source data and reports validation
/// accuracy. `config.epochs == 0` skips training and returns the seeded
/// initialization, which is still valid for extraction.
pub fn train_backbone(
    train: &LabeledDataset,
    val: &LabeledDataset,
    hidden_dims: &[usize],
    config: &TrainConfig,
) -> Result<(Backbone, f64)> {
    if train.is_empty() {
        return Err(Error::NoSamples);
    }
    if hidden_dims.is_empty() {
        return Err(Error::InvalidParameter(
            "backbone needs at least one hidden layer".to_string(),
        ));
    }
    let mut specs = Vec::with_capacity(hidden_dims.len() + 1);
    let mut in_dim = train.dim();
    for &h in hidden_dims {
        specs.push(LayerSpec::new(in_dim, h, Activation::Relu));
        in_dim = h;
    }
    specs.push(LayerSpec::new(in_dim, train.class_count, Activation::Softmax));
    let mut net = Network::glorot(&specs, &mut rng::substream(config.seed, "backbone-init"))?;
    if config.epochs > 0 {
        train_supervised(&mut net, &train.samples, &Targets::Classes(&train.labels), config)?;
    }
    let val_accuracy = if val.is_empty() {
        0.0
    } else {
        classification_accuracy(&net, &val.samples, &val.labels)?
    };
    Ok((Backbone::new(net)?, val_accuracy))
}

/// Activations of every sample after hidden layer `layer_index`
/// (1-based), carrying labels and the domain tag through.
pub fn extract_activations(
    backbone: &Backbone,
    dataset: &LabeledDataset,
    layer_index: usize,
    domain: Domain,
) -> Result<ActivationSet> {
    backbone.activation_dim(layer_index)?;
    let activations = activations_for_samples(backbone, &dataset.samples, layer_index)?;
    Ok(ActivationSet {
        activations,
        labels: Some(dataset.labels.clone()),
        domain,
        layer_index,
        class_count: dataset.class_count,
    })
}

/// Raw hidden activations for samples outside any dataset (e.g. a mixed
/// test set); order preserved.
pub fn activations_for_samples(
    backbone: &Backbone,
    samples: &[Vec<f64>],
    layer_index: usize,
) -> Result<Vec<Vec<f64>>> {
    backbone.activation_dim(layer_index)?;
    for s in samples {
        if s.len() != backbone.net.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: backbone.net.input_dim(),
                got: s.len(),
            });
        }
    }
    Ok(exec::map_collect(samples, |s| {
        let trace = backbone.net.forward_trace(s).expect("dims checked above");
        trace.activations[layer_index].clone()
    }))
}
