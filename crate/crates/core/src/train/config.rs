//! Run configuration: defaults, strict TOML round-trip, validation.

use serde::{Deserialize, Serialize};

use crate::regularizers::RegularizerKind;

use super::{Result, TrainError};

/// All knobs for one training run.
///
/// The defaults are the reference experimental settings; a config file needs
/// to mention only the fields it overrides. Parsing is strict: unknown keys
/// are rejected so typos cannot silently fall back to defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Number of passes over the training pool.
    pub epochs: usize,
    /// Adam learning rate.
    pub lr: f64,
    /// Mini-batch size; also the column count of learned reference batches.
    pub batch_size: usize,
    /// Output width of every per-view encoder.
    pub encoder_out: usize,
    /// Width of the shared comparison space the projections map into.
    pub shared_dim: usize,
    /// Hidden-layer width of every encoder/decoder.
    pub hidden_width: usize,
    /// Weight of the autoencoder reconstruction term (semisupervised mode).
    pub tau: f64,
    /// Weight of the multi-view penalty term (semisupervised mode).
    pub gamma: f64,
    /// Weight of the orthogonality penalty inside every regularizer.
    pub alpha: f64,
    /// Sinkhorn rounds per transport solve.
    pub sinkhorn_iters: usize,
    /// Entropic temperature of the transport solves.
    pub beta: f64,
    /// Random projections per sliced-distance evaluation.
    pub num_projections: usize,
    /// Reference count for the clustered transport penalty.
    pub num_clusters: usize,
    /// Which multi-view penalty to optimize.
    pub regularizer: RegularizerKind,
    /// Whether semisupervised training adds per-view autoencoders.
    pub use_autoencoder: bool,
    /// Run seed; all batching, initialization, and projection draws derive
    /// from it.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr: 0.001,
            batch_size: 400,
            encoder_out: 20,
            shared_dim: 10,
            hidden_width: 64,
            tau: 0.01,
            gamma: 0.1,
            alpha: 0.01,
            sinkhorn_iters: 20,
            beta: 0.1,
            num_projections: 3,
            num_clusters: 3,
            regularizer: RegularizerKind::HotReference,
            use_autoencoder: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Parses a flat `key = value` TOML document, starting from defaults.
    /// Unknown keys are an error.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: TrainConfig =
            toml::from_str(text).map_err(|e| TrainError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// The fully resolved configuration as a flat TOML document.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    /// Rejects values no run could use (zero sizes, nonpositive or
    /// non-finite weights where positivity is required).
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, value: usize) -> Result<()> {
            if value == 0 {
                return Err(TrainError::Config(format!("`{name}` must be positive")));
            }
            Ok(())
        }
        fn positive_f(name: &str, value: f64) -> Result<()> {
            if !value.is_finite() || value <= 0.0 {
                return Err(TrainError::Config(format!(
                    "`{name}` must be positive and finite (got {value})"
                )));
            }
            Ok(())
        }
        fn weight(name: &str, value: f64) -> Result<()> {
            if !value.is_finite() || value < 0.0 {
                return Err(TrainError::Config(format!(
                    "`{name}` must be nonnegative and finite (got {value})"
                )));
            }
            Ok(())
        }
        positive("epochs", self.epochs)?;
        positive("batch_size", self.batch_size)?;
        positive("encoder_out", self.encoder_out)?;
        positive("shared_dim", self.shared_dim)?;
        positive("hidden_width", self.hidden_width)?;
        positive("sinkhorn_iters", self.sinkhorn_iters)?;
        positive("num_projections", self.num_projections)?;
        positive("num_clusters", self.num_clusters)?;
        positive_f("lr", self.lr)?;
        positive_f("beta", self.beta)?;
        weight("tau", self.tau)?;
        weight("gamma", self.gamma)?;
        weight("alpha", self.alpha)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_documented_settings() {
        let c = TrainConfig::default();
        assert_eq!(c.epochs, 100);
        assert_eq!(c.lr, 0.001);
        assert_eq!(c.batch_size, 400);
        assert_eq!(c.encoder_out, 20);
        assert_eq!(c.shared_dim, 10);
        assert_eq!(c.tau, 0.01);
        assert_eq!(c.gamma, 0.1);
        assert_eq!(c.alpha, 0.01);
        assert_eq!(c.sinkhorn_iters, 20);
        assert_eq!(c.beta, 0.1);
        assert_eq!(c.num_projections, 3);
        assert_eq!(c.num_clusters, 3);
        assert_eq!(c.regularizer, RegularizerKind::HotReference);
        assert!(!c.use_autoencoder);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_preserves_every_field() {
        let mut c = TrainConfig::default();
        c.epochs = 7;
        c.regularizer = RegularizerKind::SwPairwise;
        c.use_autoencoder = true;
        c.seed = 99;
        let text = c.to_toml_string();
        let back = TrainConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_fills_in_defaults() {
        let c = TrainConfig::from_toml_str("epochs = 3\nregularizer = \"lscca\"\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.regularizer, RegularizerKind::Lscca);
        assert_eq!(c.batch_size, 400);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = TrainConfig::from_toml_str("epochz = 3\n").unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "lr = 0.0",
            "beta = -1.0",
            "batch_size = 0",
            "gamma = -0.5",
            "epochs = 0",
        ] {
            assert!(
                TrainConfig::from_toml_str(text).is_err(),
                "`{text}` should fail validation"
            );
        }
    }

    #[test]
    fn bad_regularizer_name_is_rejected() {
        assert!(TrainConfig::from_toml_str("regularizer = \"hot\"").is_err());
    }
}
