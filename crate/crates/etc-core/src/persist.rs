//! Versioned JSON checkpoints for networks, cell models, probes, and
//! the full routing bundle. Floats are written in shortest round-trip
//! form, so save/load is value-exact.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cell::EtcModels;
use crate::error::{Error, Result};
use crate::extractor::Backbone;
use crate::nn::Network;
use crate::probe::ProbeParams;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    payload: T,
}

fn save_envelope<T: Serialize>(format: &str, payload: &T, path: &Path) -> Result<()> {
    let env = Envelope {
        format: format.to_string(),
        version: FORMAT_VERSION,
        payload,
    };
    let text = serde_json::to_string_pretty(&env)
        .map_err(|e| Error::Checkpoint(format!("{}: serialize: {e}", path.display())))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_envelope<T: DeserializeOwned>(format: &str, path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope<serde_json::Value> = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: parse: {e}", path.display())))?;
    if env.format != format {
        return Err(Error::Checkpoint(format!(
            "{}: format \"{}\", expected \"{format}\"",
            path.display(),
            env.format
        )));
    }
    if env.version > FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: version {} is newer than supported {FORMAT_VERSION}",
            path.display(),
            env.version
        )));
    }
    serde_json::from_value(env.payload)
        .map_err(|e| Error::Checkpoint(format!("{}: payload: {e}", path.display())))
}

pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    save_envelope("network", net, path)
}

pub fn load_network(path: &Path) -> Result<Network> {
    let net: Network = load_envelope("network", path)?;
    net.validate()?;
    Ok(net)
}

pub fn save_models(models: &EtcModels, path: &Path) -> Result<()> {
    save_envelope("etc-models", models, path)
}

pub fn load_models(path: &Path) -> Result<EtcModels> {
    let models: EtcModels = load_envelope("etc-models", path)?;
    models.validate()?;
    Ok(models)
}

pub fn save_probe(probe: &ProbeParams, path: &Path) -> Result<()> {
    save_envelope("etc-probe", probe, path)
}

pub fn load_probe(path: &Path) -> Result<ProbeParams> {
    let probe: ProbeParams = load_envelope("etc-probe", path)?;
    probe.validate()?;
    Ok(probe)
}

/// Everything needed to route and classify raw samples: the backbone,
/// the cell models at the chosen injection layer, and the fitted probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtcBundle {
    pub backbone: Backbone,
    pub models: EtcModels,
    pub probe: ProbeParams,
}

impl EtcBundle {
    pub fn validate(&self) -> Result<()> {
        self.backbone.net.validate()?;
        self.models.validate()?;
        self.probe.validate()?;
        let at_layer = self.backbone.activation_dim(self.models.layer_index)?;
        let enc_in = self.models.e_source.input_dim();
        if at_layer != enc_in {
            return Err(Error::DimensionMismatch {
                expected: at_layer,
                got: enc_in,
            });
        }
        Ok(())
    }

    /// Routes one raw sample end to end: backbone to the injection
    /// layer, then probe-directed branch classification.
    pub fn classify(&self, x: &[f64]) -> Result<(usize, crate::probe::Route)> {
        let trace = self.backbone.net.forward_trace(x)?;
        let activation = &trace.activations[self.models.layer_index];
        crate::probe::classify(&self.models, &self.probe, activation)
    }
}

pub fn save_bundle(bundle: &EtcBundle, path: &Path) -> Result<()> {
    save_envelope("etc-bundle", bundle, path)
}

pub fn load_bundle(path: &Path) -> Result<EtcBundle> {
    let bundle: EtcBundle = load_envelope("etc-bundle", path)?;
    bundle.validate()?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::EtcArch;
    use crate::nn::{Activation, LayerSpec};

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn random_net(seed: u64) -> Network {
        let specs = [
            LayerSpec::new(3, 5, Activation::Relu),
            LayerSpec::new(5, 2, Activation::Softmax),
        ];
        Network::glorot(&specs, &mut crate::rng::substream(seed, "persist-test")).unwrap()
    }

    fn random_models(seed: u64) -> EtcModels {
        let arch = EtcArch {
            encoder_hidden: vec![6],
            embed_dim: 4,
            disc_hidden: vec![5],
            head_hidden: vec![6],
        };
        let mut r = crate::rng::substream(seed, "persist-test");
        EtcModels {
            e_source: Network::glorot(&arch.encoder_specs(3), &mut r).unwrap(),
            e_target: Network::glorot(&arch.encoder_specs(3), &mut r).unwrap(),
            discriminator: Network::glorot(&arch.discriminator_specs(), &mut r).unwrap(),
            d_source: Network::glorot(&arch.head_specs(2), &mut r).unwrap(),
            d_target: Network::glorot(&arch.head_specs(2), &mut r).unwrap(),
            layer_index: 1,
        }
    }

    #[test]
    fn network_round_trip_is_value_exact() {
        let dir = tmp();
        let path = dir.path().join("net.json");
        let net = random_net(1);
        save_network(&net, &path).unwrap();
        let loaded = load_network(&path).unwrap();
        assert_eq!(net, loaded);
    }

    #[test]
    fn models_round_trip_is_value_exact() {
        let dir = tmp();
        let path = dir.path().join("models.json");
        let models = random_models(2);
        save_models(&models, &path).unwrap();
        assert_eq!(load_models(&path).unwrap(), models);
    }

    #[test]
    fn probe_round_trip_is_value_exact() {
        use crate::data::Domain;
        use crate::extractor::ActivationSet;
        use rand::Rng;

        let models = random_models(3);
        let mut r = crate::rng::substream(4, "persist-test");
        let samples: Vec<Vec<f64>> =
            (0..20).map(|_| (0..3).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let acts = |domain| ActivationSet {
            activations: samples.clone(),
            labels: None,
            domain,
            layer_index: 1,
            class_count: 2,
        };
        let probe = crate::probe::fit_probe(
            &models,
            &acts(Domain::Source),
            &acts(Domain::Target),
            2.0,
            1.5,
            crate::linalg::DEFAULT_RIDGE,
            crate::probe::CritiqueMode::HiddenPlusScore,
        )
        .unwrap();
        let dir = tmp();
        let path = dir.path().join("probe.json");
        save_probe(&probe, &path).unwrap();
        assert_eq!(load_probe(&path).unwrap(), probe);
    }

    #[test]
    fn wrong_format_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("net.json");
        save_network(&random_net(5), &path).unwrap();
        let err = load_models(&path).unwrap_err();
        assert!(err.to_string().contains("format"), "{err}");
    }

    #[test]
    fn future_version_is_rejected() {
        let dir = tmp();
        let path = dir.path().join("net.json");
        let text = format!(
            "{{\"format\":\"network\",\"version\":{},\"payload\":null}}",
            FORMAT_VERSION + 1
        );
        std::fs::write(&path, text).unwrap();
        let err = load_network(&path).unwrap_err();
        assert!(err.to_string().contains("newer"), "{err}");
    }

    #[test]
    fn corrupt_and_missing_files_error_with_path() {
        let dir = tmp();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{ not json").unwrap();
        let err = load_network(&path).unwrap_err();
        assert!(err.to_string().contains("broken.json"), "{err}");
        let missing = load_network(&dir.path().join("absent.json")).unwrap_err();
        assert!(missing.to_string().contains("absent.json"), "{missing}");
    }
}
