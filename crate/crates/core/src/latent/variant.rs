use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Which recurrent encoder summarizes the observations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    OdeRnn,
    OdeLstm,
}

/// One of the three compared model families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelVariant {
    pub encoder: EncoderKind,
    /// Global-norm clipping threshold, when clipping is part of the variant.
    pub clip: Option<f64>,
}

impl ModelVariant {
    pub const LATENT_ODE_RNN: ModelVariant = ModelVariant {
        encoder: EncoderKind::OdeRnn,
        clip: None,
    };
    pub const LATENT_ODE_LSTM: ModelVariant = ModelVariant {
        encoder: EncoderKind::OdeLstm,
        clip: None,
    };

    pub fn latent_ode_lstm_gc(threshold: f64) -> ModelVariant {
        ModelVariant {
            encoder: EncoderKind::OdeLstm,
            clip: Some(threshold),
        }
    }

    /// The three variants in table order.
    pub fn all(threshold: f64) -> [ModelVariant; 3] {
        [
            Self::LATENT_ODE_RNN,
            Self::LATENT_ODE_LSTM,
            Self::latent_ode_lstm_gc(threshold),
        ]
    }

    pub fn name(&self) -> &'static str {
        match (self.encoder, self.clip.is_some()) {
            (EncoderKind::OdeRnn, false) => "Latent ODE-RNN",
            (EncoderKind::OdeRnn, true) => "Latent ODE-RNN+GC",
            (EncoderKind::OdeLstm, false) => "Latent ODE-LSTM",
            (EncoderKind::OdeLstm, true) => "Latent ODE-LSTM+GC",
        }
    }

    pub fn slug(&self) -> &'static str {
        match (self.encoder, self.clip.is_some()) {
            (EncoderKind::OdeRnn, false) => "latent-ode-rnn",
            (EncoderKind::OdeRnn, true) => "latent-ode-rnn-gc",
            (EncoderKind::OdeLstm, false) => "latent-ode-lstm",
            (EncoderKind::OdeLstm, true) => "latent-ode-lstm-gc",
        }
    }

    pub(crate) fn tag(&self) -> u8 {
        match (self.encoder, self.clip.is_some()) {
            (EncoderKind::OdeRnn, false) => 0,
            (EncoderKind::OdeLstm, false) => 1,
            (EncoderKind::OdeLstm, true) => 2,
            (EncoderKind::OdeRnn, true) => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8, clip: Option<f64>) -> Option<ModelVariant> {
        let (encoder, clipped) = match tag {
            0 => (EncoderKind::OdeRnn, false),
            1 => (EncoderKind::OdeLstm, false),
            2 => (EncoderKind::OdeLstm, true),
            3 => (EncoderKind::OdeRnn, true),
            _ => return None,
        };
        match (clipped, clip) {
            (true, Some(t)) if t > 0.0 && t.is_finite() => Some(ModelVariant {
                encoder,
                clip: Some(t),
            }),
            (false, None) => Some(ModelVariant {
                encoder,
                clip: None,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a slug; clipped variants get the threshold supplied by the caller.
pub fn parse_variant(s: &str, threshold: f64) -> Result<ModelVariant, String> {
    ModelVariantSlug::from_str(s).map(|v| v.with_threshold(threshold))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ModelVariantSlug {
    Rnn,
    Lstm,
    LstmGc,
}

impl ModelVariantSlug {
    fn with_threshold(self, threshold: f64) -> ModelVariant {
        match self {
            ModelVariantSlug::Rnn => ModelVariant::LATENT_ODE_RNN,
            ModelVariantSlug::Lstm => ModelVariant::LATENT_ODE_LSTM,
            ModelVariantSlug::LstmGc => ModelVariant::latent_ode_lstm_gc(threshold),
        }
    }
}

impl FromStr for ModelVariantSlug {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "latent-ode-rnn" | "rnn" => Ok(ModelVariantSlug::Rnn),
            "latent-ode-lstm" | "lstm" => Ok(ModelVariantSlug::Lstm),
            "latent-ode-lstm-gc" | "lstm-gc" => Ok(ModelVariantSlug::LstmGc),
            other => Err(format!(
                "unknown model variant `{other}` (expected latent-ode-rnn, latent-ode-lstm or latent-ode-lstm-gc)"
            )),
        }
    }
}
