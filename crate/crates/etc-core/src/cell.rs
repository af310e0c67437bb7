//! Training for the five networks injected at one backbone layer: the
//! source encoder + source head (joint supervised), the target encoder +
//! domain discriminator (adversarial), and the target head (trained on
//! pseudo-labels). The source encoder is frozen during alignment; the
//! target encoder starts as a copy of it and is pushed until the
//! discriminator can no longer separate the two embedding streams.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Domain;
use crate::error::{Error, Result};
use crate::exec;
use crate::extractor::ActivationSet;
use crate::nn::{
    argmax, loss_and_gradients, optimizer_step, train_supervised, Activation, Gradients,
    LayerSpec, Network, OptimizerKind, OptimizerState, Targets, TrainConfig,
};
use crate::rng;

/// Layer widths for the cell networks. Encoders end in a linear
/// embedding layer; the discriminator ends in a single sigmoid; heads
/// end in softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtcArch {
    pub encoder_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub disc_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
}

impl Default for EtcArch {
    fn default() -> Self {
        EtcArch {
            encoder_hidden: vec![32, 32],
            embed_dim: 16,
            disc_hidden: vec![16],
            head_hidden: vec![32],
        }
    }
}

impl EtcArch {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 {
            return Err(Error::InvalidParameter("embed_dim must be >= 1".to_string()));
        }
        if self
            .encoder_hidden
            .iter()
            .chain(&self.disc_hidden)
            .chain(&self.head_hidden)
            .any(|&w| w == 0)
        {
            return Err(Error::InvalidParameter(
                "layer widths must be >= 1".to_string(),
            ));
        }
        Ok(())
    }

    pub fn encoder_specs(&self, input_dim: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut in_dim = input_dim;
        for &h in &self.encoder_hidden {
            specs.push(LayerSpec::new(in_dim, h, Activation::Relu));
            in_dim = h;
        }
        specs.push(LayerSpec::new(in_dim, self.embed_dim, Activation::Linear));
        specs
    }

    pub fn discriminator_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut in_dim = self.embed_dim;
        for &h in &self.disc_hidden {
            specs.push(LayerSpec::new(in_dim, h, Activation::Relu));
            in_dim = h;
        }
        specs.push(LayerSpec::new(in_dim, 1, Activation::Sigmoid));
        specs
    }

    pub fn head_specs(&self, class_count: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut in_dim = self.embed_dim;
        for &h in &self.head_hidden {
            specs.push(LayerSpec::new(in_dim, h, Activation::Relu));
            in_dim = h;
        }
        specs.push(LayerSpec::new(in_dim, class_count, Activation::Softmax));
        specs
    }

    pub fn encoder_layer_count(&self) -> usize {
        self.encoder_hidden.len() + 1
    }
}

/// The five trained networks of one cell plus the layer they attach to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtcModels {
    pub e_source: Network,
    pub e_target: Network,
    pub discriminator: Network,
    pub d_source: Network,
    pub d_target: Network,
    pub layer_index: usize,
}

impl EtcModels {
    pub fn validate(&self) -> Result<()> {
        for net in [
            &self.e_source,
            &self.e_target,
            &self.discriminator,
            &self.d_source,
            &self.d_target,
        ] {
            net.validate()?;
        }
        let embed = self.e_source.output_dim();
        if self.e_target.input_dim() != self.e_source.input_dim()
            || self.e_target.output_dim() != embed
        {
            return Err(Error::InvalidNetwork(
                "encoders must share input and embedding dims".to_string(),
            ));
        }
        for (name, net, out) in [
            ("discriminator", &self.discriminator, 1),
            ("d_source", &self.d_source, self.d_source.output_dim()),
            ("d_target", &self.d_target, self.d_target.output_dim()),
        ] {
            if net.input_dim() != embed {
                return Err(Error::InvalidNetwork(format!(
                    "{name} input dim {} != embedding dim {embed}",
                    net.input_dim()
                )));
            }
            if net.output_dim() != out {
                return Err(Error::InvalidNetwork(format!(
                    "{name} output dim {} != {out}",
                    net.output_dim()
                )));
            }
        }
        if self.d_source.output_dim() != self.d_target.output_dim() {
            return Err(Error::InvalidNetwork(
                "heads must agree on class count".to_string(),
            ));
        }
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.d_source.output_dim()
    }

    /// Source-branch prediction: argmax D_s(E_s(x)).
    pub fn predict_source(&self, activation: &[f64]) -> Result<usize> {
        Ok(argmax(&self.d_source.forward(&self.e_source.forward(activation)?)?))
    }

    /// Target-branch prediction: argmax D_t(E_t(x)).
    pub fn predict_target(&self, activation: &[f64]) -> Result<usize> {
        Ok(argmax(&self.d_target.forward(&self.e_target.forward(activation)?)?))
    }
}

/// Trains E_s→D_s end-to-end on labeled source activations with
/// cross-entropy, then returns the two halves. `epochs == 0` returns the
/// seeded initialization.
pub fn train_source_branch(
    x_s: &ActivationSet,
    arch: &EtcArch,
    config: &TrainConfig,
) -> Result<(Network, Network)> {
    arch.validate()?;
    if x_s.domain != Domain::Source {
        return Err(Error::InvalidParameter(
            "source branch requires source-domain activations".to_string(),
        ));
    }
    let labels = x_s.labels()?;
    if x_s.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut specs = arch.encoder_specs(x_s.dim());
    specs.extend(arch.head_specs(x_s.class_count));
    let mut joint = Network::glorot(&specs, &mut rng::substream(config.seed, "source-branch-init"))?;
    if config.epochs > 0 {
        train_supervised(&mut joint, &x_s.activations, &Targets::Classes(labels), config)?;
    }
    joint.split_off(arch.encoder_layer_count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialConfig {
    /// Discriminator-only epochs before any encoder update; the held-out
    /// accuracy measured after this phase is the pre-alignment peak.
    pub warmup_epochs: usize,
    /// Adversarial epochs (one discriminator step then one encoder step
    /// per batch).
    pub epochs: usize,
    pub batch_size: usize,
    pub disc_lr: f64,
    pub gen_lr: f64,
    /// Adam first-moment decay for both players. Lower momentum than the
    /// usual 0.9 keeps the encoder from riding stale gradients past the
    /// source cloud once the discriminator re-carves its boundary.
    pub beta1: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for AdversarialConfig {
    fn default() -> Self {
        // A fast discriminator is load-bearing: it gives the encoder
        // sharp gradients (strong alignment) and tracks the encoder's
        // moves instead of oscillating into inverted predictions.
        AdversarialConfig {
            warmup_epochs: 5,
            epochs: 60,
            batch_size: 32,
            disc_lr: 1e-2,
            gen_lr: 1e-3,
            beta1: 0.5,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl AdversarialConfig {
    fn disc_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.disc_lr,
            batch_size: self.batch_size,
            seed: self.seed,
            optimizer: self.optimizer,
            beta1: self.beta1,
            ..TrainConfig::default()
        }
    }

    fn gen_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.gen_lr,
            ..self.disc_train_config()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter(
                "batch_size must be >= 1".to_string(),
            ));
        }
        self.disc_train_config().validate()?;
        self.gen_train_config().validate()
    }
}

/// Alignment diagnostics. Held-out accuracies are present only when
/// held-out activations were supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialTrace {
    pub initial_centroid_distance: f64,
    pub final_centroid_distance: f64,
    pub heldout_peak_accuracy: Option<f64>,
    pub heldout_final_accuracy: Option<f64>,
    pub disc_epoch_losses: Vec<f64>,
    pub gen_epoch_losses: Vec<f64>,
}

/// Euclidean distance between the mean embeddings of the two streams.
pub fn centroid_distance(
    e_source: &Network,
    e_target: &Network,
    x_s: &[Vec<f64>],
    x_t: &[Vec<f64>],
) -> Result<f64> {
    let mean_embedding = |net: &Network, xs: &[Vec<f64>]| -> Result<Vec<f64>> {
        let outs = net.forward_batch(xs)?;
        crate::linalg::empirical_mean(&outs)
    };
    let ms = mean_embedding(e_source, x_s)?;
    let mt = mean_embedding(e_target, x_t)?;
    Ok(ms
        .iter()
        .zip(&mt)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Fraction of held-out embeddings the discriminator assigns to the
/// correct stream (source scored as real, target as fake).
fn discriminator_accuracy(
    disc: &Network,
    e_source: &Network,
    e_target: &Network,
    heldout_s: &[Vec<f64>],
    heldout_t: &[Vec<f64>],
) -> Result<f64> {
    let mut hits = 0usize;
    for x in heldout_s {
        if disc.forward(&e_source.forward(x)?)?[0] >= 0.5 {
            hits += 1;
        }
    }
    for x in heldout_t {
        if disc.forward(&e_target.forward(x)?)?[0] < 0.5 {
            hits += 1;
        }
    }
    Ok(hits as f64 / (heldout_s.len() + heldout_t.len()) as f64)
}

/// Adversarial alignment. The discriminator learns to score E_s(X_s) as
/// 1 and E_t(X_t) as 0; the target encoder is then updated through the
/// frozen discriminator with flipped labels (non-saturating loss, one
/// step each per batch). The source encoder is read-only. Returns the
/// target encoder, the discriminator, and a diagnostics trace.
pub fn train_adversarial(
    e_source: &Network,
    x_s: &ActivationSet,
    x_t: &ActivationSet,
    arch: &EtcArch,
    config: &AdversarialConfig,
    heldout: Option<(&[Vec<f64>], &[Vec<f64>])>,
) -> Result<(Network, Network, AdversarialTrace)> {
    arch.validate()?;
    config.validate()?;
    e_source.validate()?;
    if x_s.is_empty() || x_t.is_empty() {
        return Err(Error::NoSamples);
    }
    if x_s.dim() != x_t.dim() {
        return Err(Error::DimensionMismatch {
            expected: x_s.dim(),
            got: x_t.dim(),
        });
    }
    if e_source.input_dim() != x_s.dim() {
        return Err(Error::DimensionMismatch {
            expected: e_source.input_dim(),
            got: x_s.dim(),
        });
    }

    let mut e_target = e_source.clone();
    let mut disc = Network::glorot(
        &arch.discriminator_specs(),
        &mut rng::substream(config.seed, "disc-init"),
    )?;
    if disc.input_dim() != e_source.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: e_source.output_dim(),
            got: disc.input_dim(),
        });
    }

    let initial_centroid_distance =
        centroid_distance(e_source, &e_target, &x_s.activations, &x_t.activations)?;

    let disc_config = config.disc_train_config();
    let gen_config = config.gen_train_config();
    let mut disc_state = OptimizerState::new(&disc, &disc_config);
    let mut gen_state = OptimizerState::new(&e_target, &gen_config);
    let mut shuffle_rng = rng::substream(config.seed, "adversarial-shuffle");

    let n_s = x_s.len();
    let n_t = x_t.len();
    let bs = config.batch_size.min(n_s).min(n_t);
    let enc_layers = e_target.n_layers();

    let mut src_order: Vec<usize> = (0..n_s).collect();
    let mut tgt_order: Vec<usize> = (0..n_t).collect();
    let mut disc_epoch_losses = Vec::new();
    let mut gen_epoch_losses = Vec::new();

    // One discriminator update on a paired batch of current embeddings.
    let disc_step = |disc: &mut Network,
                     disc_state: &mut OptimizerState,
                     e_target: &Network,
                     src_batch: &[usize],
                     tgt_batch: &[usize]|
     -> Result<f64> {
        let mut embeddings = Vec::with_capacity(src_batch.len() + tgt_batch.len());
        let mut labels = Vec::with_capacity(src_batch.len() + tgt_batch.len());
        for &i in src_batch {
            embeddings.push(e_source.forward(&x_s.activations[i])?);
            labels.push(1.0);
        }
        for &i in tgt_batch {
            embeddings.push(e_target.forward(&x_t.activations[i])?);
            labels.push(0.0);
        }
        let (loss, grads) = loss_and_gradients(disc, &embeddings, &Targets::Binary(&labels))?;
        optimizer_step(disc, &grads, &disc_config, disc_state)?;
        Ok(loss)
    };

    let mut run_epoch = |e_target: &mut Network,
                         disc: &mut Network,
                         disc_state: &mut OptimizerState,
                         gen_state: &mut OptimizerState,
                         shuffle_rng: &mut rand_chacha::ChaCha8Rng,
                         with_generator: bool|
     -> Result<(f64, f64)> {
        src_order.shuffle(shuffle_rng);
        tgt_order.shuffle(shuffle_rng);
        let steps = n_t.div_ceil(bs);
        let mut disc_loss_sum = 0.0;
        let mut gen_loss_sum = 0.0;
        for step in 0..steps {
            let tgt_batch: Vec<usize> = (step * bs..((step + 1) * bs).min(n_t))
                .map(|k| tgt_order[k])
                .collect();
            // Source indices cycle modulo their own shuffled order.
            let src_batch: Vec<usize> = (step * bs..step * bs + tgt_batch.len())
                .map(|k| src_order[k % n_s])
                .collect();

            disc_loss_sum += disc_step(disc, disc_state, e_target, &src_batch, &tgt_batch)?;

            if with_generator {
                // Flip labels to 1 and backprop through the frozen
                // discriminator; only the encoder layers get updated.
                let composed = e_target.concat(disc)?;
                let inputs: Vec<Vec<f64>> = tgt_batch
                    .iter()
                    .map(|&i| x_t.activations[i].clone())
                    .collect();
                let flipped = vec![1.0; inputs.len()];
                let (loss, grads) =
                    loss_and_gradients(&composed, &inputs, &Targets::Binary(&flipped))?;
                let enc_grads = Gradients {
                    layers: grads.layers[..enc_layers].to_vec(),
                };
                optimizer_step(e_target, &enc_grads, &gen_config, gen_state)?;
                gen_loss_sum += loss;
            }
        }
        Ok((disc_loss_sum / steps as f64, gen_loss_sum / steps as f64))
    };

    for _ in 0..config.warmup_epochs {
        let (dl, _) = run_epoch(
            &mut e_target,
            &mut disc,
            &mut disc_state,
            &mut gen_state,
            &mut shuffle_rng,
            false,
        )?;
        disc_epoch_losses.push(dl);
        gen_epoch_losses.push(0.0);
    }

    let heldout_peak_accuracy = heldout
        .map(|(hs, ht)| discriminator_accuracy(&disc, e_source, &e_target, hs, ht))
        .transpose()?;

    for _ in 0..config.epochs {
        let (dl, gl) = run_epoch(
            &mut e_target,
            &mut disc,
            &mut disc_state,
            &mut gen_state,
            &mut shuffle_rng,
            true,
        )?;
        disc_epoch_losses.push(dl);
        gen_epoch_losses.push(gl);
    }

    let heldout_final_accuracy = heldout
        .map(|(hs, ht)| discriminator_accuracy(&disc, e_source, &e_target, hs, ht))
        .transpose()?;
    let final_centroid_distance =
        centroid_distance(e_source, &e_target, &x_s.activations, &x_t.activations)?;

    Ok((
        e_target,
        disc,
        AdversarialTrace {
            initial_centroid_distance,
            final_centroid_distance,
            heldout_peak_accuracy,
            heldout_final_accuracy,
            disc_epoch_losses,
            gen_epoch_losses,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoLabelOrigin {
    SelfGenerated,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabels {
    pub labels: Vec<usize>,
    pub origin: PseudoLabelOrigin,
}

/// Labels every target sample as argmax D_s(E_t(x)): the aligned target
/// embedding is pushed through the source head.
pub fn generate_pseudo_labels(
    e_target: &Network,
    d_source: &Network,
    x_t: &ActivationSet,
) -> Result<PseudoLabels> {
    if x_t.is_empty() {
        return Err(Error::NoSamples);
    }
    let embeddings = e_target.forward_batch(&x_t.activations)?;
    let outs = d_source.forward_batch(&embeddings)?;
    Ok(PseudoLabels {
        labels: outs.iter().map(|o| argmax(o)).collect(),
        origin: PseudoLabelOrigin::SelfGenerated,
    })
}

/// Reads one class index per line; the line count must match the target
/// training-set size exactly.
pub fn load_pseudo_labels(
    path: &Path,
    class_count: usize,
    expected_len: usize,
) -> Result<PseudoLabels> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (row, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            return Err(Error::InvalidTarget(format!(
                "pseudo-label file row {row}: empty line"
            )));
        }
        let label: usize = trimmed.parse().map_err(|_| {
            Error::InvalidTarget(format!(
                "pseudo-label file row {row}: {trimmed:?} is not a class index"
            ))
        })?;
        if label >= class_count {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                class_count,
            });
        }
        labels.push(label);
    }
    if labels.len() != expected_len {
        return Err(Error::MisalignedLengths {
            left: labels.len(),
            right: expected_len,
        });
    }
    Ok(PseudoLabels {
        labels,
        origin: PseudoLabelOrigin::File,
    })
}

/// Trains the target head on (E_t(x), pseudo-label) pairs; the encoder
/// itself is read-only here.
pub fn train_target_dense(
    e_target: &Network,
    x_t: &ActivationSet,
    pseudo: &PseudoLabels,
    arch: &EtcArch,
    config: &TrainConfig,
) -> Result<Network> {
    arch.validate()?;
    if x_t.is_empty() {
        return Err(Error::NoSamples);
    }
    if pseudo.labels.len() != x_t.len() {
        return Err(Error::MisalignedLengths {
            left: pseudo.labels.len(),
            right: x_t.len(),
        });
    }
    for (row, &label) in pseudo.labels.iter().enumerate() {
        if label >= x_t.class_count {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                class_count: x_t.class_count,
            });
        }
    }
    let embeddings = e_target.forward_batch(&x_t.activations)?;
    let mut d_target = Network::glorot(
        &arch.head_specs(x_t.class_count),
        &mut rng::substream(config.seed, "target-head-init"),
    )?;
    if config.epochs > 0 {
        train_supervised(
            &mut d_target,
            &embeddings,
            &Targets::Classes(&pseudo.labels),
            config,
        )?;
    }
    Ok(d_target)
}

/// Per-sample embeddings under both encoders, batched and order
/// preserving: (E_s(x), E_t(x)) for each activation vector.
pub fn dual_embeddings(
    models: &EtcModels,
    activations: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let pairs = exec::map_collect(activations, |a| {
        let s = models.e_source.forward(a).expect("validated dims");
        let t = models.e_target.forward(a).expect("validated dims");
        (s, t)
    });
    Ok(pairs.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_blobs;
    use crate::extractor::ActivationSet;

    fn acts(samples: Vec<Vec<f64>>, labels: Vec<usize>, domain: Domain, classes: usize) -> ActivationSet {
        ActivationSet {
            activations: samples,
            labels: Some(labels),
            domain,
            layer_index: 1,
            class_count: classes,
        }
    }

    fn blob_acts(domain: Domain, shift: f64, seed: u64) -> ActivationSet {
        let d = gen_blobs(2, 80, 4, 5.0, seed).unwrap();
        let samples = d
            .samples
            .iter()
            .map(|s| s.iter().map(|v| v + shift).collect())
            .collect();
        acts(samples, d.labels.clone(), domain, 2)
    }

    fn small_arch() -> EtcArch {
        EtcArch {
            encoder_hidden: vec![8],
            embed_dim: 6,
            disc_hidden: vec![8],
            head_hidden: vec![8],
        }
    }

    fn quick_config(seed: u64, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn source_branch_learns_separable_activations() {
        let x_s = blob_acts(Domain::Source, 0.0, 1);
        let (e_s, d_s) = train_source_branch(&x_s, &small_arch(), &quick_config(2, 40)).unwrap();
        let labels = x_s.labels().unwrap();
        let hits = x_s
            .activations
            .iter()
            .zip(labels)
            .filter(|(a, &y)| argmax(&d_s.forward(&e_s.forward(a).unwrap()).unwrap()) == y)
            .count();
        let acc = hits as f64 / x_s.len() as f64;
        assert!(acc >= 0.95, "source-branch accuracy {acc}");
    }

    #[test]
    fn source_branch_zero_epochs_shape_valid() {
        let x_s = blob_acts(Domain::Source, 0.0, 3);
        let (e_s, d_s) = train_source_branch(&x_s, &small_arch(), &quick_config(4, 0)).unwrap();
        assert_eq!(e_s.input_dim(), 4);
        assert_eq!(e_s.output_dim(), 6);
        assert_eq!(d_s.input_dim(), 6);
        assert_eq!(d_s.output_dim(), 2);
    }

    #[test]
    fn split_halves_compose_to_joint_forward() {
        let x_s = blob_acts(Domain::Source, 0.0, 5);
        let (e_s, d_s) = train_source_branch(&x_s, &small_arch(), &quick_config(6, 5)).unwrap();
        let joint = e_s.concat(&d_s).unwrap();
        let x = &x_s.activations[0];
        let staged = d_s.forward(&e_s.forward(x).unwrap()).unwrap();
        let direct = joint.forward(x).unwrap();
        assert_eq!(staged, direct);
    }

    #[test]
    fn source_branch_requires_source_tag_and_labels() {
        let x_t = blob_acts(Domain::Target, 0.0, 7);
        assert!(train_source_branch(&x_t, &small_arch(), &quick_config(8, 1)).is_err());
        let mut x_s = blob_acts(Domain::Source, 0.0, 7);
        x_s.labels = None;
        assert!(matches!(
            train_source_branch(&x_s, &small_arch(), &quick_config(8, 1)),
            Err(Error::MissingLabels)
        ));
    }

    fn adv_config(seed: u64, warmup: usize, epochs: usize) -> AdversarialConfig {
        AdversarialConfig {
            warmup_epochs: warmup,
            epochs,
            seed,
            ..AdversarialConfig::default()
        }
    }

    #[test]
    fn identical_domains_keep_discriminator_guessing() {
        let x_s = blob_acts(Domain::Source, 0.0, 10);
        let x_t = blob_acts(Domain::Target, 0.0, 11); // same distribution, fresh draw
        let arch = small_arch();
        let (e_s, _) = train_source_branch(&x_s, &arch, &quick_config(12, 20)).unwrap();
        let (_, disc, trace) = train_adversarial(
            &e_s,
            &x_s,
            &x_t,
            &arch,
            &adv_config(13, 5, 60),
            Some((&x_s.activations, &x_t.activations)),
        )
        .unwrap();
        let acc = trace.heldout_final_accuracy.unwrap();
        assert!(
            (0.35..=0.65).contains(&acc),
            "indistinguishable domains should hold accuracy near chance, got {acc}"
        );
        // Scores remain probabilities.
        for a in x_t.activations.iter().take(10) {
            let e = e_s.forward(a).unwrap();
            let p = disc.forward(&e).unwrap()[0];
            assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn zero_rounds_returns_initialization() {
        let x_s = blob_acts(Domain::Source, 0.0, 14);
        let x_t = blob_acts(Domain::Target, 3.0, 15);
        let arch = small_arch();
        let (e_s, _) = train_source_branch(&x_s, &arch, &quick_config(16, 10)).unwrap();
        let (e_t, disc, _) =
            train_adversarial(&e_s, &x_s, &x_t, &arch, &adv_config(17, 0, 0), None).unwrap();
        assert_eq!(e_t, e_s, "zero rounds must leave the copy untouched");
        let fresh = Network::glorot(
            &arch.discriminator_specs(),
            &mut crate::rng::substream(17, "disc-init"),
        )
        .unwrap();
        assert_eq!(disc, fresh);
    }

    #[test]
    fn alignment_shrinks_centroid_gap_and_freezes_source_encoder() {
        let x_s = blob_acts(Domain::Source, 0.0, 18);
        let x_t = blob_acts(Domain::Target, 4.0, 19);
        let arch = small_arch();
        let (e_s, _) = train_source_branch(&x_s, &arch, &quick_config(20, 20)).unwrap();
        let e_s_before = e_s.clone();
        let (_, _, trace) =
            train_adversarial(&e_s, &x_s, &x_t, &arch, &adv_config(21, 8, 60), None).unwrap();
        assert_eq!(e_s, e_s_before, "source encoder must stay frozen");
        assert!(
            trace.final_centroid_distance <= 0.5 * trace.initial_centroid_distance,
            "centroid distance {} → {} fell less than 50%",
            trace.initial_centroid_distance,
            trace.final_centroid_distance
        );
    }

    #[test]
    fn adversarial_play_erodes_discriminator_accuracy() {
        let x_s = blob_acts(Domain::Source, 0.0, 22);
        let x_t = blob_acts(Domain::Target, 4.0, 23);
        let arch = small_arch();
        let (e_s, _) = train_source_branch(&x_s, &arch, &quick_config(24, 20)).unwrap();
        let (_, _, trace) = train_adversarial(
            &e_s,
            &x_s,
            &x_t,
            &arch,
            &adv_config(25, 8, 60),
            Some((&x_s.activations, &x_t.activations)),
        )
        .unwrap();
        let peak = trace.heldout_peak_accuracy.unwrap();
        let final_acc = trace.heldout_final_accuracy.unwrap();
        assert!(peak > 0.75, "warmup should separate shifted domains, got {peak}");
        assert!(
            final_acc < peak,
            "alignment should erode accuracy: {final_acc} !< {peak}"
        );
    }

    #[test]
    fn adversarial_dim_mismatch_rejected() {
        let x_s = blob_acts(Domain::Source, 0.0, 26);
        let d = gen_blobs(2, 10, 3, 5.0, 27).unwrap();
        let x_t = acts(d.samples.clone(), d.labels.clone(), Domain::Target, 2);
        let arch = small_arch();
        let (e_s, _) = train_source_branch(&x_s, &arch, &quick_config(28, 1)).unwrap();
        assert!(matches!(
            train_adversarial(&e_s, &x_s, &x_t, &arch, &adv_config(29, 0, 1), None),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pseudo_labels_agree_on_aligned_domains() {
        // Identical domains: E_t = E_s copy aligns trivially, so the
        // source head should label target samples mostly correctly.
        let x_s = blob_acts(Domain::Source, 0.0, 30);
        let x_t = blob_acts(Domain::Target, 0.0, 31);
        let arch = small_arch();
        let (e_s, d_s) = train_source_branch(&x_s, &arch, &quick_config(32, 40)).unwrap();
        let pseudo = generate_pseudo_labels(&e_s, &d_s, &x_t).unwrap();
        assert_eq!(pseudo.origin, PseudoLabelOrigin::SelfGenerated);
        let truth = x_t.labels().unwrap();
        let agree = pseudo
            .labels
            .iter()
            .zip(truth)
            .filter(|(a, b)| a == b)
            .count() as f64
            / truth.len() as f64;
        assert!(agree >= 0.9, "pseudo-label agreement {agree}");
    }

    #[test]
    fn pseudo_label_file_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        std::fs::write(&path, "0\n1\n1\n0\n").unwrap();
        let pseudo = load_pseudo_labels(&path, 2, 4).unwrap();
        assert_eq!(pseudo.labels, vec![0, 1, 1, 0]);
        assert_eq!(pseudo.origin, PseudoLabelOrigin::File);

        std::fs::write(&path, "0\n5\n").unwrap();
        assert!(matches!(
            load_pseudo_labels(&path, 2, 2),
            Err(Error::LabelOutOfRange { row: 1, label: 5, class_count: 2 })
        ));

        std::fs::write(&path, "0\n1\n").unwrap();
        assert!(matches!(
            load_pseudo_labels(&path, 2, 3),
            Err(Error::MisalignedLengths { left: 2, right: 3 })
        ));
    }

    #[test]
    fn target_dense_learns_from_good_pseudo_labels() {
        let x_t = blob_acts(Domain::Target, 0.0, 33);
        let arch = small_arch();
        let (e_t, _) = train_source_branch(
            &acts(
                x_t.activations.clone(),
                x_t.labels.clone().unwrap(),
                Domain::Source,
                2,
            ),
            &arch,
            &quick_config(34, 20),
        )
        .unwrap();
        let pseudo = PseudoLabels {
            labels: x_t.labels.clone().unwrap(),
            origin: PseudoLabelOrigin::File,
        };
        let d_t = train_target_dense(&e_t, &x_t, &pseudo, &arch, &quick_config(35, 40)).unwrap();
        let hits = x_t
            .activations
            .iter()
            .zip(x_t.labels().unwrap())
            .filter(|(a, &y)| argmax(&d_t.forward(&e_t.forward(a).unwrap()).unwrap()) == y)
            .count();
        let acc = hits as f64 / x_t.len() as f64;
        assert!(acc >= 0.95, "target head accuracy {acc}");
    }

    #[test]
    fn target_dense_misalignment_and_determinism() {
        let x_t = blob_acts(Domain::Target, 0.0, 36);
        let arch = small_arch();
        let (e_t, _) = train_source_branch(
            &acts(
                x_t.activations.clone(),
                x_t.labels.clone().unwrap(),
                Domain::Source,
                2,
            ),
            &arch,
            &quick_config(37, 2),
        )
        .unwrap();
        let short = PseudoLabels {
            labels: vec![0; 3],
            origin: PseudoLabelOrigin::File,
        };
        assert!(matches!(
            train_target_dense(&e_t, &x_t, &short, &arch, &quick_config(38, 1)),
            Err(Error::MisalignedLengths { .. })
        ));
        let pseudo = PseudoLabels {
            labels: x_t.labels.clone().unwrap(),
            origin: PseudoLabelOrigin::File,
        };
        let a = train_target_dense(&e_t, &x_t, &pseudo, &arch, &quick_config(39, 5)).unwrap();
        let b = train_target_dense(&e_t, &x_t, &pseudo, &arch, &quick_config(39, 5)).unwrap();
        assert_eq!(a, b);
    }
}
