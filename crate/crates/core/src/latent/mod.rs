//! Latent ODE variational autoencoder: a recurrent ODE encoder run backwards
//! over the observations, a translator network producing `(μ, log σ)`, a
//! reparameterized initial latent state and a Neural ODE decoder followed by
//! a pointwise output network.

mod checkpoint;
mod variant;

pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use variant::{parse_variant, EncoderKind, ModelVariant};

use serde::{Deserialize, Serialize};

use crate::cells::{CellState, EncoderTape, LstmCell, OdeLstm, OdeRnn, RnnCell, TimedSequence};
use crate::error::{Error, Result};
use crate::nn::{Mlp, MlpCache};
use crate::numcore::{Activation, Rng, Vector};
use crate::odesolve::{solve_path_backward, solve_path_taped, NeuralField, SolveTape};
use crate::params::{join, ParamSet, ParamView};

/// Layer sizes and solver settings of a latent ODE model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Observation dimension `d`.
    pub input_dim: usize,
    /// Encoder hidden size `n`.
    pub hidden_dim: usize,
    /// Latent dimension `l`.
    pub latent_dim: usize,
    /// Prediction dimension `p`.
    pub output_dim: usize,
    pub encoder_field_hidden: Vec<usize>,
    /// Hidden width of the translator; 0 makes it a single affine map.
    pub translator_hidden: usize,
    pub dynamics_hidden: Vec<usize>,
    /// Hidden width of the output network; 0 makes it a single affine map.
    pub output_hidden: usize,
    /// Activation of the plain RNN cell.
    pub rnn_activation: Activation,
    /// Append `t` to the encoder field input.
    pub encoder_time_input: bool,
    /// Append `t` to the latent dynamics input.
    pub dynamics_time_input: bool,
    pub encoder_steps_per_gap: usize,
    pub decoder_steps_per_gap: usize,
    /// Starting bias of the `log σ` lanes. A small σ keeps the noise from
    /// drowning out `μ` before the decoder has learned to use `z0`.
    pub initial_log_sigma: f64,
}

impl ModelConfig {
    /// A small configuration for observations of dimension `d`.
    pub fn small(d: usize, latent_dim: usize) -> Self {
        ModelConfig {
            input_dim: d,
            hidden_dim: 8,
            latent_dim,
            output_dim: d,
            encoder_field_hidden: vec![8],
            translator_hidden: 8,
            dynamics_hidden: vec![8],
            output_hidden: 8,
            rnn_activation: Activation::Tanh,
            encoder_time_input: false,
            dynamics_time_input: false,
            encoder_steps_per_gap: 2,
            decoder_steps_per_gap: 2,
            initial_log_sigma: -4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("latent_dim", self.latent_dim),
            ("output_dim", self.output_dim),
            ("encoder_steps_per_gap", self.encoder_steps_per_gap),
            ("decoder_steps_per_gap", self.decoder_steps_per_gap),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !self.initial_log_sigma.is_finite() {
            return Err(Error::invalid("initial_log_sigma must be finite"));
        }
        if self
            .encoder_field_hidden
            .iter()
            .chain(&self.dynamics_hidden)
            .any(|&h| h == 0)
        {
            return Err(Error::invalid("field hidden layer widths must be positive"));
        }
        Ok(())
    }

    fn translator_sizes(&self) -> Vec<usize> {
        with_hidden(self.hidden_dim, self.translator_hidden, 2 * self.latent_dim)
    }

    fn output_sizes(&self) -> Vec<usize> {
        with_hidden(self.latent_dim, self.output_hidden, self.output_dim)
    }
}

fn with_hidden(input: usize, hidden: usize, output: usize) -> Vec<usize> {
    if hidden == 0 {
        vec![input, output]
    } else {
        vec![input, hidden, output]
    }
}

/// The recognition encoder, either kind behind one interface.
#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Encoder {
    Rnn(OdeRnn),
    Lstm(OdeLstm),
}

enum EncoderTapeKind {
    Rnn(EncoderTape<RnnCell>),
    Lstm(EncoderTape<LstmCell>),
}

impl Encoder {
    fn zeros(kind: EncoderKind, cfg: &ModelConfig) -> Encoder {
        let field = NeuralField::zeros(
            cfg.hidden_dim,
            &cfg.encoder_field_hidden,
            cfg.encoder_time_input,
        );
        match kind {
            EncoderKind::OdeRnn => Encoder::Rnn(OdeRnn::new(
                RnnCell::zeros(cfg.input_dim, cfg.hidden_dim, cfg.rnn_activation),
                field,
                cfg.encoder_steps_per_gap,
            )),
            EncoderKind::OdeLstm => Encoder::Lstm(OdeLstm::new(
                LstmCell::zeros(cfg.input_dim, cfg.hidden_dim),
                field,
                cfg.encoder_steps_per_gap,
            )),
        }
    }

    fn init(kind: EncoderKind, cfg: &ModelConfig, rng: &mut Rng) -> Encoder {
        let mut cell_rng = rng.fork(1);
        let mut field_rng = rng.fork(2);
        let field = NeuralField::init(
            cfg.hidden_dim,
            &cfg.encoder_field_hidden,
            cfg.encoder_time_input,
            &mut field_rng,
        );
        match kind {
            EncoderKind::OdeRnn => Encoder::Rnn(OdeRnn::new(
                RnnCell::init(
                    cfg.input_dim,
                    cfg.hidden_dim,
                    cfg.rnn_activation,
                    &mut cell_rng,
                ),
                field,
                cfg.encoder_steps_per_gap,
            )),
            EncoderKind::OdeLstm => Encoder::Lstm(OdeLstm::new(
                LstmCell::init(cfg.input_dim, cfg.hidden_dim, &mut cell_rng),
                field,
                cfg.encoder_steps_per_gap,
            )),
        }
    }

    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::Rnn(_) => EncoderKind::OdeRnn,
            Encoder::Lstm(_) => EncoderKind::OdeLstm,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        match self {
            Encoder::Rnn(e) => e.hidden_dim(),
            Encoder::Lstm(e) => e.hidden_dim(),
        }
    }

    /// Runs the encoder from the last observation back to the first and
    /// returns the summary `z'_0`.
    pub fn summarize(&self, seq: &TimedSequence) -> Result<Vector> {
        Ok(self.summarize_taped(seq)?.0)
    }

    fn summarize_taped(&self, seq: &TimedSequence) -> Result<(Vector, EncoderTapeKind)> {
        match self {
            Encoder::Rnn(e) => {
                let (out, tape) = e.encode_taped(seq, true)?;
                Ok((out.final_state.h, EncoderTapeKind::Rnn(tape)))
            }
            Encoder::Lstm(e) => {
                let (out, tape) = e.encode_taped(seq, true)?;
                Ok((out.final_state.h, EncoderTapeKind::Lstm(tape)))
            }
        }
    }

    fn backward(
        &self,
        tape: &EncoderTapeKind,
        d_summary: &Vector,
        grad: &mut Encoder,
    ) -> Result<()> {
        let n = self.hidden_dim();
        let d_final = CellState {
            h: d_summary.clone(),
            c: Vector::zeros(n),
        };
        match (self, tape, grad) {
            (Encoder::Rnn(e), EncoderTapeKind::Rnn(t), Encoder::Rnn(g)) => {
                e.backward(t, &[], &d_final, g).map(|_| ())
            }
            (Encoder::Lstm(e), EncoderTapeKind::Lstm(t), Encoder::Lstm(g)) => {
                e.backward(t, &[], &d_final, g).map(|_| ())
            }
            _ => Err(Error::shape(
                "encoder backward",
                "encoder kind",
                "tape or gradient kind",
            )),
        }
    }
}

impl ParamSet for Encoder {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        match self {
            Encoder::Rnn(e) => e.visit(prefix, f),
            Encoder::Lstm(e) => e.visit(prefix, f),
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        match self {
            Encoder::Rnn(e) => e.visit_mut(prefix, f),
            Encoder::Lstm(e) => e.visit_mut(prefix, f),
        }
    }
}

/// The approximate posterior draw for one sequence and, after decoding, the
/// latent states at the requested times.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPath {
    pub mu: Vector,
    pub log_sigma: Vector,
    pub sigma: Vector,
    pub eps: Vector,
    pub z0: Vector,
    /// Time at which `z0` lives (the first observation).
    pub t0: f64,
    /// `(t, z_t)` in the order the times were requested; empty before decoding.
    pub trajectory: Vec<(f64, Vector)>,
}

/// Cotangents of a scalar loss with respect to the model outputs and the
/// posterior parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCotangents {
    pub d_predictions: Vec<Vector>,
    /// Direct dependence on `μ` (for example a KL term).
    pub d_mu: Vector,
    /// Direct dependence on `log σ`.
    pub d_log_sigma: Vector,
}

impl LatentCotangents {
    pub fn zeros(num_predictions: usize, output_dim: usize, latent_dim: usize) -> Self {
        LatentCotangents {
            d_predictions: vec![Vector::zeros(output_dim); num_predictions],
            d_mu: Vector::zeros(latent_dim),
            d_log_sigma: Vector::zeros(latent_dim),
        }
    }
}

/// Which route from `z0` back into the encoder a reverse pass follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    /// Full gradient over every parameter.
    Both,
    /// Encoder-side gradient through `μ` only; decoder blocks are left at zero.
    Mu,
    /// Encoder-side gradient through `σ` only; decoder blocks are left at zero.
    Sigma,
}

/// Latent states along one monotone run away from the anchor time.
struct DecodeLeg {
    indices: Vec<usize>,
    tapes: Vec<SolveTape<MlpCache>>,
}

/// Everything recorded by [`LatentOdeModel::forward_taped`].
pub struct ForwardTape {
    encoder: EncoderTapeKind,
    translator: MlpCache,
    legs: Vec<DecodeLeg>,
    outputs: Vec<MlpCache>,
    path: LatentPath,
}

impl ForwardTape {
    pub fn path(&self) -> &LatentPath {
        &self.path
    }

    pub fn num_predictions(&self) -> usize {
        self.outputs.len()
    }
}

/// A complete latent ODE model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentOdeModel {
    pub variant: ModelVariant,
    pub config: ModelConfig,
    /// Seed the parameters were initialized from.
    pub seed: u64,
    pub encoder: Encoder,
    /// Maps `z'_0` to `[μ, log σ]`.
    pub translator: Mlp,
    pub dynamics: NeuralField,
    pub output_net: Mlp,
}

impl LatentOdeModel {
    pub fn init(variant: ModelVariant, config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let root = Rng::new(seed);
        let encoder = Encoder::init(variant.encoder, config, &mut root.fork(10));
        let mut translator = Mlp::init(
            &config.translator_sizes(),
            Activation::Tanh,
            Activation::Identity,
            &mut root.fork(11),
        );
        if let Some(last) = translator.layers.last_mut() {
            for b in &mut last.b.as_mut_slice()[config.latent_dim..] {
                *b += config.initial_log_sigma;
            }
        }
        let dynamics = NeuralField::init(
            config.latent_dim,
            &config.dynamics_hidden,
            config.dynamics_time_input,
            &mut root.fork(12),
        );
        let output_net = Mlp::init(
            &config.output_sizes(),
            Activation::Tanh,
            Activation::Identity,
            &mut root.fork(13),
        );
        Ok(LatentOdeModel {
            variant,
            config: config.clone(),
            seed,
            encoder,
            translator,
            dynamics,
            output_net,
        })
    }

    /// All parameters zero.
    pub fn zeros(variant: ModelVariant, config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(LatentOdeModel {
            variant,
            config: config.clone(),
            seed,
            encoder: Encoder::zeros(variant.encoder, config),
            translator: Mlp::zeros(
                &config.translator_sizes(),
                Activation::Tanh,
                Activation::Identity,
            ),
            dynamics: NeuralField::zeros(
                config.latent_dim,
                &config.dynamics_hidden,
                config.dynamics_time_input,
            ),
            output_net: Mlp::zeros(
                &config.output_sizes(),
                Activation::Tanh,
                Activation::Identity,
            ),
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim
    }

    /// Draws the reparameterization noise for one sequence.
    pub fn sample_eps(&self, rng: &mut Rng) -> Result<Vector> {
        rng.gaussian(self.latent_dim())
    }

    /// Encodes `seq` into a posterior draw with freshly sampled noise.
    pub fn encode(&self, seq: &TimedSequence, rng: &mut Rng) -> Result<LatentPath> {
        let eps = self.sample_eps(rng)?;
        self.encode_with_eps(seq, &eps)
    }

    /// Encodes with fixed noise `eps`.
    pub fn encode_with_eps(&self, seq: &TimedSequence, eps: &Vector) -> Result<LatentPath> {
        Ok(self.encode_taped(seq, eps)?.0)
    }

    fn encode_taped(
        &self,
        seq: &TimedSequence,
        eps: &Vector,
    ) -> Result<(LatentPath, EncoderTapeKind, MlpCache)> {
        let l = self.latent_dim();
        eps.check_len("reparameterization noise", l)?;
        let (summary, enc_tape) = self.encoder.summarize_taped(seq)?;
        let (g, g_cache) = self.translator.forward_cached(&summary);
        let mu = Vector::from(&g[..l]);
        let log_sigma = Vector::from(&g[l..]);
        let sigma = log_sigma.map(f64::exp);
        let z0 = mu.add(&sigma.hadamard(eps));
        if !z0.is_finite() {
            return Err(Error::Divergence {
                step: 0,
                t: seq.times()[0],
            });
        }
        let path = LatentPath {
            mu,
            log_sigma,
            sigma,
            eps: eps.clone(),
            z0,
            t0: seq.times()[0],
            trajectory: Vec::new(),
        };
        Ok((path, enc_tape, g_cache))
    }

    /// Solves the latent dynamics from `z0` at `times[0]` through `times`
    /// (strictly increasing or strictly decreasing) and maps each state
    /// through the output network.
    pub fn decode(&self, z0: &Vector, times: &[f64]) -> Result<Vec<Vector>> {
        let anchor = *times
            .first()
            .ok_or_else(|| Error::invalid("decode needs at least one time"))?;
        self.decode_from(z0, anchor, times)
    }

    /// Like [`decode`](Self::decode) with `z0` located at `anchor`; times on
    /// either side of the anchor are reached by solving away from it.
    pub fn decode_from(&self, z0: &Vector, anchor: f64, times: &[f64]) -> Result<Vec<Vector>> {
        z0.check_len("decode z0", self.latent_dim())?;
        let (latents, _) = self.solve_latent(z0, anchor, times)?;
        Ok(latents.iter().map(|z| self.output_net.forward(z)).collect())
    }

    fn solve_latent(
        &self,
        z0: &Vector,
        anchor: f64,
        times: &[f64],
    ) -> Result<(Vec<Vector>, Vec<DecodeLeg>)> {
        check_times(times)?;
        if !anchor.is_finite() {
            return Err(Error::invalid("decode anchor time must be finite"));
        }
        let mut before: Vec<usize> = (0..times.len()).filter(|&i| times[i] < anchor).collect();
        let mut after: Vec<usize> = (0..times.len()).filter(|&i| times[i] >= anchor).collect();
        before.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
        after.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

        let mut latents = vec![Vector::zeros(0); times.len()];
        let mut legs = Vec::with_capacity(2);
        for indices in [before, after] {
            if indices.is_empty() {
                continue;
            }
            let leg_times: Vec<f64> = indices.iter().map(|&i| times[i]).collect();
            let (states, tapes) = solve_path_taped(
                &self.dynamics,
                z0,
                anchor,
                &leg_times,
                self.config.decoder_steps_per_gap,
            )?;
            for (&i, z) in indices.iter().zip(states) {
                latents[i] = z;
            }
            legs.push(DecodeLeg { indices, tapes });
        }
        Ok((latents, legs))
    }

    /// Encode then decode at `predict_times`, sampling the noise from `rng`.
    pub fn forward(
        &self,
        seq: &TimedSequence,
        predict_times: &[f64],
        rng: &mut Rng,
    ) -> Result<(Vec<Vector>, LatentPath)> {
        let eps = self.sample_eps(rng)?;
        self.forward_with_eps(seq, predict_times, &eps)
    }

    pub fn forward_with_eps(
        &self,
        seq: &TimedSequence,
        predict_times: &[f64],
        eps: &Vector,
    ) -> Result<(Vec<Vector>, LatentPath)> {
        let (preds, tape) = self.forward_taped(seq, predict_times, eps)?;
        Ok((preds, tape.path))
    }

    /// Forward pass that records what [`backward`](Self::backward) needs.
    pub fn forward_taped(
        &self,
        seq: &TimedSequence,
        predict_times: &[f64],
        eps: &Vector,
    ) -> Result<(Vec<Vector>, ForwardTape)> {
        let (mut path, enc_tape, g_cache) = self.encode_taped(seq, eps)?;
        let (latents, legs) = self.solve_latent(&path.z0, path.t0, predict_times)?;
        let mut preds = Vec::with_capacity(latents.len());
        let mut outputs = Vec::with_capacity(latents.len());
        for z in &latents {
            let (y, cache) = self.output_net.forward_cached(z);
            preds.push(y);
            outputs.push(cache);
        }
        path.trajectory = predict_times.iter().copied().zip(latents).collect();
        Ok((
            preds,
            ForwardTape {
                encoder: enc_tape,
                translator: g_cache,
                legs,
                outputs,
                path,
            },
        ))
    }

    /// Exact reverse pass over every parameter block.
    pub fn backward(&self, tape: &ForwardTape, cot: &LatentCotangents) -> Result<LatentOdeModel> {
        self.backward_branch(tape, cot, Branch::Both)
    }

    /// Reverse pass restricted to one route through `z0`; see [`Branch`].
    pub fn backward_branch(
        &self,
        tape: &ForwardTape,
        cot: &LatentCotangents,
        branch: Branch,
    ) -> Result<LatentOdeModel> {
        let l = self.latent_dim();
        if cot.d_predictions.len() != tape.outputs.len() {
            return Err(Error::shape(
                "model backward",
                format!("{} prediction cotangents", cot.d_predictions.len()),
                format!("{} predictions", tape.outputs.len()),
            ));
        }
        for d in &cot.d_predictions {
            d.check_len("model backward prediction cotangent", self.output_dim())?;
        }
        cot.d_mu.check_len("model backward d_mu", l)?;
        cot.d_log_sigma.check_len("model backward d_log_sigma", l)?;

        let mut grad = self.zeros_like();
        let dz: Vec<Vector> = tape
            .outputs
            .iter()
            .zip(&cot.d_predictions)
            .map(|(cache, d)| self.output_net.backward(cache, d, &mut grad.output_net))
            .collect();
        let mut dz0 = Vector::zeros(l);
        for leg in &tape.legs {
            let cots: Vec<Vector> = leg.indices.iter().map(|&i| dz[i].clone()).collect();
            dz0.add_assign(&solve_path_backward(
                &self.dynamics,
                &leg.tapes,
                &cots,
                &mut grad.dynamics,
            ));
        }

        let path = &tape.path;
        let d_mu = match branch {
            Branch::Sigma => Vector::zeros(l),
            _ => dz0.add(&cot.d_mu),
        };
        let d_log_sigma = match branch {
            Branch::Mu => Vector::zeros(l),
            _ => dz0
                .hadamard(&path.eps)
                .hadamard(&path.sigma)
                .add(&cot.d_log_sigma),
        };
        if branch != Branch::Both {
            grad.dynamics.fill_params(0.0);
            grad.output_net.fill_params(0.0);
        }
        let d_g = d_mu.concat(&d_log_sigma);
        let d_summary = self
            .translator
            .backward(&tape.translator, &d_g, &mut grad.translator);
        self.encoder
            .backward(&tape.encoder, &d_summary, &mut grad.encoder)?;
        Ok(grad)
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::invalid("at least one prediction time is required"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("prediction times must be finite"));
    }
    let increasing = times.windows(2).all(|w| w[0] < w[1]);
    let decreasing = times.windows(2).all(|w| w[0] > w[1]);
    if !(increasing || decreasing) {
        return Err(Error::invalid("prediction times must be strictly monotone"));
    }
    Ok(())
}

impl ParamSet for LatentOdeModel {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamView<'_>)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.translator.visit(&join(prefix, "translator"), f);
        self.dynamics.visit(&join(prefix, "dynamics"), f);
        self.output_net.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.encoder.visit_mut(&join(prefix, "encoder"), f);
        self.translator.visit_mut(&join(prefix, "translator"), f);
        self.dynamics.visit_mut(&join(prefix, "dynamics"), f);
        self.output_net.visit_mut(&join(prefix, "output"), f);
    }
}
