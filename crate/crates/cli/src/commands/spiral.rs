use std::fmt::Write;
use std::path::PathBuf;

use latode::data::{
    gen_spirals, load_or_build, normalize, spec_hash, NormStats, SpiralSet, SpiralSpec, CLOCKWISE,
};
use latode::latent::{LatentOdeModel, ModelVariant};
use latode::numcore::Vector;
use latode::train::TrainLog;

use super::{prepare_run, train_with_retries, write_text};
use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::num;
use crate::plot::{render_svg, Series};

/// Errors of one direction's sequences, in original coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionMetrics {
    pub direction: &'static str,
    pub sequences: usize,
    /// Noise-free curve vs prediction at the observed times.
    pub reconstruction_mse: f64,
    /// Before the first observation.
    pub backward_mse: f64,
    /// After the last observation.
    pub forward_mse: f64,
}

#[derive(Clone, Debug)]
pub struct VariantOutcome {
    pub variant: ModelVariant,
    pub log: TrainLog,
    pub aborts: usize,
    pub metrics: Vec<DirectionMetrics>,
}

#[derive(Clone, Debug)]
pub struct SpiralSummary {
    pub dir: PathBuf,
    pub outcomes: Vec<VariantOutcome>,
}

const DIRECTIONS: [(&str, bool); 2] = [("cw", true), ("ccw", false)];

/// Dense grid extended by `extrapolate_fraction` of the span on both sides.
fn extended_times(cfg: &RunConfig, spec: &SpiralSpec) -> Vec<f64> {
    let steps = spec.dense_len - 1;
    let dt = spec.t_end / steps as f64;
    let extra = (cfg.extrapolate_fraction * steps as f64).round() as i64;
    (-extra..=steps as i64 + extra)
        .map(|j| j as f64 * dt)
        .collect()
}

struct Evaluation {
    times: Vec<f64>,
    truth: Vec<Vector>,
    pred: Vec<Vector>,
    first_obs: f64,
    last_obs: f64,
}

fn evaluate_one(
    model: &LatentOdeModel,
    set: &SpiralSet,
    train_n: &latode::data::Dataset,
    stats: &NormStats,
    spec: &SpiralSpec,
    times: &[f64],
    i: usize,
) -> CliResult<Evaluation> {
    let clockwise = set.train.labels[i] == CLOCKWISE;
    let phase = spec.phase_of(&set.test.sequences[i].values()[0], clockwise);
    let truth: Vec<Vector> = times
        .iter()
        .map(|&t| spec.point_at(t, phase, clockwise))
        .collect();
    let seq = &train_n.sequences[i];
    let (pred, _) = model.forward_with_eps(seq, times, &Vector::zeros(model.latent_dim()))?;
    Ok(Evaluation {
        times: times.to_vec(),
        truth,
        pred: pred.iter().map(|p| stats.invert(p)).collect(),
        first_obs: seq.times()[0],
        last_obs: seq.times()[seq.len() - 1],
    })
}

fn sq_err(a: &Vector, b: &Vector) -> f64 {
    a.sub(b).iter().map(|d| d * d).sum::<f64>() / a.len() as f64
}

#[derive(Default)]
struct Accum {
    sum: f64,
    count: usize,
}

impl Accum {
    fn add(&mut self, e: f64) {
        self.sum += e;
        self.count += 1;
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            f64::NAN
        } else {
            self.sum / self.count as f64
        }
    }
}

fn direction_metrics(
    model: &LatentOdeModel,
    set: &SpiralSet,
    train_n: &latode::data::Dataset,
    stats: &NormStats,
    spec: &SpiralSpec,
    times: &[f64],
) -> CliResult<Vec<DirectionMetrics>> {
    let mut out = Vec::new();
    for (name, clockwise) in DIRECTIONS {
        let (mut rec, mut back, mut fwd) = (Accum::default(), Accum::default(), Accum::default());
        let members: Vec<usize> = (0..set.train.len())
            .filter(|&i| (set.train.labels[i] == CLOCKWISE) == clockwise)
            .collect();
        for &i in &members {
            let ev = evaluate_one(model, set, train_n, stats, spec, times, i)?;
            let observed = set.train.sequences[i].times();
            for ((t, truth), pred) in ev.times.iter().zip(&ev.truth).zip(&ev.pred) {
                let e = sq_err(truth, pred);
                if *t < ev.first_obs {
                    back.add(e);
                } else if *t > ev.last_obs {
                    fwd.add(e);
                } else if observed.contains(t) {
                    rec.add(e);
                }
            }
        }
        out.push(DirectionMetrics {
            direction: name,
            sequences: members.len(),
            reconstruction_mse: rec.mean(),
            backward_mse: back.mean(),
            forward_mse: fwd.mean(),
        });
    }
    Ok(out)
}

fn trajectory_csv(ev: &Evaluation) -> String {
    let mut s = String::from("t,truth_x,truth_y,pred_x,pred_y\n");
    for ((t, a), b) in ev.times.iter().zip(&ev.truth).zip(&ev.pred) {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            num(*t),
            num(a[0]),
            num(a[1]),
            num(b[0]),
            num(b[1])
        );
    }
    s
}

fn figure(title: &str, ev: &Evaluation, observed: &[Vector]) -> String {
    let xy = |v: &Vector| (v[0], v[1]);
    let pick = |keep: &dyn Fn(f64) -> bool| -> Vec<(f64, f64)> {
        ev.times
            .iter()
            .zip(&ev.pred)
            .filter(|(t, _)| keep(**t))
            .map(|(_, p)| xy(p))
            .collect()
    };
    let (t0, t1) = (ev.first_obs, ev.last_obs);
    let series = [
        Series::line("truth", "#999999", ev.truth.iter().map(xy).collect()),
        Series::line("reconstruction", "#2ca02c", pick(&|t| t >= t0 && t <= t1)),
        Series::line("extrapolation t < t0", "#1f4fd8", pick(&|t| t <= t0)),
        Series::line("extrapolation t > tN", "#d62728", pick(&|t| t >= t1)),
        Series::markers("observed", "#000000", observed.iter().map(xy).collect()),
    ];
    render_svg(title, &series)
}

/// Generates spirals, trains each configured variant and writes metrics,
/// trajectories and figures for one sequence of each direction.
pub fn cmd_spiral(cfg: &RunConfig) -> CliResult<SpiralSummary> {
    cfg.validate()?;
    let dir = prepare_run(cfg, "spiral")?;
    let spec = cfg.spiral_spec();
    let hash = spec_hash(&toml::to_string(&spec).expect("spiral spec serializes"));
    let mut datasets = load_or_build(&dir.join("spirals.cache"), spec.seed, hash, || {
        let set = gen_spirals(&spec)?;
        Ok(vec![set.train, set.test])
    })?;
    let test = datasets.pop().expect("two datasets");
    let train = datasets.pop().expect("two datasets");
    let set = SpiralSet { train, test };
    let (train_n, stats) = normalize(&set.train)?;
    let examples = train_n.examples();
    let times = extended_times(cfg, &spec);

    let mut outcomes = Vec::new();
    let mut summary =
        String::from("variant,initial_loss,final_loss,loss_ratio,divergence_aborts\n");
    for variant in cfg.resolved_variants() {
        log::info!("training {variant} on {} spirals", examples.len());
        let trained = train_with_retries(cfg, variant, 2, cfg.seed, &examples)?;
        let vdir = dir.join(variant.slug());
        write_text(&vdir.join("train_log.csv"), &trained.log.to_csv())?;
        trained.model.save_checkpoint(vdir.join("model.ckpt"))?;

        let metrics = direction_metrics(&trained.model, &set, &train_n, &stats, &spec, &times)?;
        let mut mcsv =
            String::from("direction,sequences,reconstruction_mse,backward_mse,forward_mse\n");
        for m in &metrics {
            let _ = writeln!(
                mcsv,
                "{},{},{},{},{}",
                m.direction,
                m.sequences,
                num(m.reconstruction_mse),
                num(m.backward_mse),
                num(m.forward_mse)
            );
        }
        write_text(&vdir.join("metrics.csv"), &mcsv)?;

        for (name, clockwise) in DIRECTIONS {
            let Some(i) =
                (0..set.train.len()).find(|&i| (set.train.labels[i] == CLOCKWISE) == clockwise)
            else {
                continue;
            };
            let ev = evaluate_one(&trained.model, &set, &train_n, &stats, &spec, &times, i)?;
            write_text(
                &vdir.join(format!("trajectory_{name}.csv")),
                &trajectory_csv(&ev),
            )?;
            let title = format!("{} ({name})", variant.name());
            write_text(
                &vdir.join(format!("figure_{name}.svg")),
                &figure(&title, &ev, set.train.sequences[i].values()),
            )?;
        }

        let (l0, l1) = (trained.log.initial_loss, trained.log.final_loss);
        let _ = writeln!(
            summary,
            "{},{},{},{},{}",
            variant.slug(),
            l0.map_or(String::new(), num),
            l1.map_or(String::new(), num),
            l0.zip(l1).map_or(String::new(), |(a, b)| num(b / a)),
            trained.aborts
        );
        outcomes.push(VariantOutcome {
            variant,
            log: trained.log,
            aborts: trained.aborts,
            metrics,
        });
    }
    write_text(&dir.join("summary.csv"), &summary)?;
    Ok(SpiralSummary { dir, outcomes })
}
