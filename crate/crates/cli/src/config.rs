//! Flat run configuration: preset defaults, overlaid by a TOML file, then
//! by command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use latode::data::{Schema, SpiralSpec, WindowSpec};
use latode::latent::{parse_variant, ModelConfig, ModelVariant};
use latode::numcore::Activation;
use latode::train::{AdamConfig, GradCheckTarget, LossSpec, ProbeCell, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Named starting points for a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Scaled-down settings that finish on one laptop core.
    Desk,
    /// Spiral experiment hyperparameters at full scale.
    PaperSpiral,
    /// Daily climate experiment hyperparameters.
    PaperClimate,
    /// DJIA stock experiment hyperparameters.
    PaperDjia,
    /// Gradient-flow probe on a saturated LSTM memory path.
    LstmCarousel,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::Desk,
        Preset::PaperSpiral,
        Preset::PaperClimate,
        Preset::PaperDjia,
        Preset::LstmCarousel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::PaperSpiral => "paper-spiral",
            Preset::PaperClimate => "paper-climate",
            Preset::PaperDjia => "paper-djia",
            Preset::LstmCarousel => "lstm-carousel",
        }
    }

    /// The full configuration for this preset.
    pub fn config(self) -> RunConfig {
        let desk = RunConfig::default();
        match self {
            Preset::Desk => desk,
            // 20-unit encoder with a 20-unit encoder field; the ambiguous
            // 25-unit layer is taken as the translator's hidden layer.
            Preset::PaperSpiral => RunConfig {
                hidden_dim: 20,
                encoder_field_hidden: 20,
                translator_hidden: 25,
                dynamics_hidden: 20,
                output_hidden: 20,
                learning_rate: 0.01,
                batch_size: 1000,
                epochs: 750,
                n_per_direction: 250,
                ..desk
            },
            Preset::PaperClimate => RunConfig {
                epochs: 50,
                ..paper_series(desk)
            },
            Preset::PaperDjia => RunConfig {
                epochs: 100,
                schema: Schema::Stock,
                ..paper_series(desk)
            },
            Preset::LstmCarousel => RunConfig {
                probe_cells: vec![ProbeCell::LstmCarousel],
                probe_scales: vec![1.0],
                ..desk
            },
        }
    }
}

/// CSV-experiment sizes: 4-unit encoder, 25-unit encoder field and
/// latent dynamics, 256-unit output network.
fn paper_series(base: RunConfig) -> RunConfig {
    RunConfig {
        hidden_dim: 4,
        encoder_field_hidden: 25,
        translator_hidden: 25,
        dynamics_hidden: 25,
        output_hidden: 256,
        learning_rate: 0.0005,
        repeats: 3,
        windows: WindowSpec::PROTOCOL.iter().map(|&w| WindowArg(w)).collect(),
        ..base
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                format!(
                    "unknown preset `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Variant names as written in configs: `latent-ode-rnn`, `latent-ode-lstm`
/// or `latent-ode-lstm-gc`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    LatentOdeRnn,
    LatentOdeLstm,
    LatentOdeLstmGc,
}

impl VariantName {
    pub const ALL: [VariantName; 3] = [
        VariantName::LatentOdeRnn,
        VariantName::LatentOdeLstm,
        VariantName::LatentOdeLstmGc,
    ];

    pub fn resolve(self, clip_threshold: f64) -> ModelVariant {
        match self {
            VariantName::LatentOdeRnn => ModelVariant::LATENT_ODE_RNN,
            VariantName::LatentOdeLstm => ModelVariant::LATENT_ODE_LSTM,
            VariantName::LatentOdeLstmGc => ModelVariant::latent_ode_lstm_gc(clip_threshold),
        }
    }

    /// Parses one name, or `all`.
    pub fn parse_list(s: &str) -> Result<Vec<VariantName>, String> {
        if s == "all" {
            return Ok(Self::ALL.to_vec());
        }
        s.split(',')
            .map(|part| {
                let v = parse_variant(part.trim(), 1.0)?;
                Ok(match (v.encoder, v.clip) {
                    (latode::latent::EncoderKind::OdeRnn, _) => VariantName::LatentOdeRnn,
                    (_, None) => VariantName::LatentOdeLstm,
                    (_, Some(_)) => VariantName::LatentOdeLstmGc,
                })
            })
            .collect()
    }
}

/// A seen/predict pair written as `"seen/predict"`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowArg(pub WindowSpec);

impl FromStr for WindowArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once('/')
            .ok_or_else(|| format!("window `{s}` must look like seen/predict, e.g. 7/7"))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<usize>()
                .map_err(|e| format!("window `{s}`: {e}"))
        };
        let spec = WindowSpec::new(parse(a)?, parse(b)?);
        spec.validate().map_err(|e| e.to_string())?;
        Ok(WindowArg(spec))
    }
}

impl fmt::Display for WindowArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.seen, self.0.predict)
    }
}

impl Serialize for WindowArg {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for WindowArg {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every setting of every command in one flat table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: Option<PathBuf>,

    // model
    pub variants: Vec<VariantName>,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    /// Width of the encoder field's hidden layer; 0 for an affine field.
    pub encoder_field_hidden: usize,
    pub translator_hidden: usize,
    pub dynamics_hidden: usize,
    pub output_hidden: usize,
    pub rnn_activation: Activation,
    pub encoder_steps_per_gap: usize,
    pub decoder_steps_per_gap: usize,
    pub initial_log_sigma: f64,

    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub kl_weight: f64,
    pub clip_threshold: f64,
    pub parallel: bool,
    /// Reseeded attempts after a divergence abort.
    pub retries: usize,

    // spiral data
    pub n_per_direction: usize,
    pub dense_len: usize,
    pub subsample_len: usize,
    pub noise_std: f64,
    pub spiral_a: f64,
    pub spiral_b: f64,
    pub phi_start: f64,
    pub phi_end: f64,
    pub t_end: f64,
    /// Extrapolation beyond each end of the curve, as a fraction of its span.
    pub extrapolate_fraction: f64,

    // daily series
    pub csv: Option<PathBuf>,
    pub test_csv: Option<PathBuf>,
    pub schema: Schema,
    pub ticker: Option<String>,
    /// Training share when no separate test file is given.
    pub split_fraction: f64,
    pub windows: Vec<WindowArg>,
    pub repeats: usize,
    /// Model time units per day.
    pub time_scale: f64,

    // gradient check
    pub gradcheck_targets: Vec<GradCheckTarget>,
    pub tolerance: f64,

    // gradient-flow probe
    pub probe_cells: Vec<ProbeCell>,
    pub probe_scales: Vec<f64>,
    pub probe_lengths: Vec<usize>,
    pub probe_hidden: usize,
    pub probe_saturation: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spiral = SpiralSpec::default();
        RunConfig {
            seed: 7,
            out_dir: None,
            variants: VariantName::ALL.to_vec(),
            hidden_dim: 16,
            latent_dim: 4,
            encoder_field_hidden: 16,
            translator_hidden: 16,
            dynamics_hidden: 16,
            output_hidden: 16,
            rnn_activation: Activation::Tanh,
            encoder_steps_per_gap: 2,
            decoder_steps_per_gap: 2,
            initial_log_sigma: -4.0,
            epochs: 200,
            batch_size: 20,
            learning_rate: 0.003,
            kl_weight: 0.0,
            clip_threshold: 1.0,
            parallel: true,
            retries: 0,
            n_per_direction: spiral.n_per_direction,
            dense_len: spiral.dense_len,
            subsample_len: spiral.subsample_len,
            noise_std: spiral.noise_std,
            spiral_a: spiral.a,
            spiral_b: spiral.b,
            phi_start: spiral.phi_start,
            phi_end: spiral.phi_end,
            t_end: spiral.t_end,
            extrapolate_fraction: 0.15,
            csv: None,
            test_csv: None,
            schema: Schema::Climate,
            ticker: None,
            split_fraction: 0.75,
            windows: WindowSpec::PROTOCOL.iter().map(|&w| WindowArg(w)).collect(),
            repeats: 3,
            time_scale: 0.1,
            gradcheck_targets: GradCheckTarget::ALL.to_vec(),
            tolerance: 1e-5,
            probe_cells: vec![ProbeCell::Rnn, ProbeCell::Lstm],
            probe_scales: vec![0.3, 1.0, 3.0],
            probe_lengths: vec![50],
            probe_hidden: 16,
            probe_saturation: 30.0,
        }
    }
}

impl RunConfig {
    /// `preset` overlaid with the keys of a TOML document. Keys not known
    /// to [`RunConfig`] are rejected.
    pub fn from_toml(preset: Preset, text: &str) -> CliResult<RunConfig> {
        let overlay: toml::Table = text.parse().map_err(|e| CliError::Config(format!("{e}")))?;
        let mut table =
            toml::Table::try_from(preset.config()).map_err(|e| CliError::Config(e.to_string()))?;
        for (k, v) in overlay {
            table.insert(k, v);
        }
        let cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(preset: Preset, path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(preset, &text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.variants.is_empty() {
            return bad("variants must not be empty".into());
        }
        self.model_config(2).validate()?;
        self.train_config().validate()?;
        if !(self.clip_threshold > 0.0 && self.clip_threshold.is_finite()) {
            return bad(format!(
                "clip_threshold must be positive, got {}",
                self.clip_threshold
            ));
        }
        self.spiral_spec().validate()?;
        if !(self.extrapolate_fraction >= 0.0 && self.extrapolate_fraction.is_finite()) {
            return bad("extrapolate_fraction must be finite and >= 0".into());
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!(
                "split_fraction must be in (0, 1), got {}",
                self.split_fraction
            ));
        }
        if self.repeats == 0 {
            return bad("repeats must be >= 1".into());
        }
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return bad("time_scale must be positive".into());
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return bad("tolerance must be positive".into());
        }
        if self.probe_hidden == 0 || self.probe_lengths.contains(&0) {
            return bad("probe_hidden and probe_lengths must be positive".into());
        }
        if self
            .probe_scales
            .iter()
            .any(|s| !(s.is_finite() && *s >= 0.0))
        {
            return bad("probe_scales must be finite and >= 0".into());
        }
        Ok(())
    }

    pub fn resolved_variants(&self) -> Vec<ModelVariant> {
        self.variants
            .iter()
            .map(|v| v.resolve(self.clip_threshold))
            .collect()
    }

    pub fn model_config(&self, dim: usize) -> ModelConfig {
        let layer = |w: usize| if w == 0 { vec![] } else { vec![w] };
        ModelConfig {
            input_dim: dim,
            hidden_dim: self.hidden_dim,
            latent_dim: self.latent_dim,
            output_dim: dim,
            encoder_field_hidden: layer(self.encoder_field_hidden),
            translator_hidden: self.translator_hidden,
            dynamics_hidden: layer(self.dynamics_hidden),
            output_hidden: self.output_hidden,
            rnn_activation: self.rnn_activation,
            encoder_time_input: false,
            dynamics_time_input: false,
            encoder_steps_per_gap: self.encoder_steps_per_gap,
            decoder_steps_per_gap: self.decoder_steps_per_gap,
            initial_log_sigma: self.initial_log_sigma,
        }
    }

    /// Training settings; clipping comes from the variant.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig::with_lr(self.learning_rate),
            loss: LossSpec {
                kl_weight: self.kl_weight,
            },
            clip: None,
            seed: self.seed,
            shuffle: true,
            parallel: self.parallel,
        }
    }

    pub fn spiral_spec(&self) -> SpiralSpec {
        SpiralSpec {
            n_per_direction: self.n_per_direction,
            dense_len: self.dense_len,
            subsample_len: self.subsample_len,
            noise_std: self.noise_std,
            a: self.spiral_a,
            b: self.spiral_b,
            phi_start: self.phi_start,
            phi_end: self.phi_end,
            t_end: self.t_end,
            seed: self.seed,
        }
    }
}
