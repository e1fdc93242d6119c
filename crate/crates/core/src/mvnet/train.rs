//! Progressive training loop.
//!
//! Each epoch recomputes the pace and selection mask, evaluates the gate and
//! runs seeded mini-batches over the selected samples only. Closed state:
//! reconstruction step, then a discriminator step and a generator step on
//! reconstructions. Open state: common-subspace reconstruction step, the same
//! adversarial pair on reconstructions, re-fusion of `Z`, then an adversarial
//! pair on samples generated from `Z`.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    ae_loss_closed, ae_loss_open, discriminator_objective, fuse_subspace, gate,
    generator_objective, CommonSubspace, MultiViewModel, MvnetError, GOLDEN_SECTION,
};
use crate::numeric::Matrix;
use crate::sampling::{pace_value, selected_indices, selection_mask, PaceSchedule, SamplingState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Open once the selected count exceeds `sigma · n`.
    GoldenSection,
    /// Open from the first epoch.
    AlwaysOpen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub schedule: PaceSchedule,
    pub gate_mode: GateMode,
    pub sigma: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            schedule: PaceSchedule::default(),
            gate_mode: GateMode::GoldenSection,
            sigma: GOLDEN_SECTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lambda: f64,
    pub selected: usize,
    pub gate_open: bool,
    /// Per view: mean reconstruction loss (closed or open form).
    pub ae_loss: Vec<f64>,
    /// Per view: mean `‖x − G(E(x))‖²`, the reconstruction part of `ae_loss`.
    pub recon_loss: Vec<f64>,
    /// Per view: mean discriminator objective on reconstructions.
    pub disc_objective: Vec<f64>,
    /// Per view: mean generator objective on reconstructions.
    pub gen_objective: Vec<f64>,
    /// Per view: mean discriminator objective on samples generated from `Z` (open state only).
    pub disc_common_objective: Vec<f64>,
    /// Per view: mean generator objective on samples generated from `Z` (open state only).
    pub gen_common_objective: Vec<f64>,
}

impl EpochLog {
    pub fn total_ae_loss(&self) -> f64 {
        self.ae_loss.iter().sum()
    }

    pub fn total_recon_loss(&self) -> f64 {
        self.recon_loss.iter().sum()
    }
}

pub const TRAINING_LOG_HEADER: &str = "epoch,lambda,selected,gate";

/// Writes the per-epoch training log as CSV.
pub fn write_training_log<W: Write>(mut out: W, log: &[EpochLog]) -> std::io::Result<()> {
    let views = log.first().map_or(0, |e| e.ae_loss.len());
    write!(out, "{TRAINING_LOG_HEADER}")?;
    for v in 0..views {
        write!(out, ",ae_loss_{v}")?;
    }
    for v in 0..views {
        write!(out, ",recon_loss_{v}")?;
    }
    for v in 0..views {
        write!(out, ",disc_{v},gen_{v},disc_common_{v},gen_common_{v}")?;
    }
    writeln!(out)?;
    for e in log {
        write!(
            out,
            "{},{},{},{}",
            e.epoch,
            e.lambda,
            e.selected,
            u8::from(e.gate_open)
        )?;
        for l in e.ae_loss.iter().chain(&e.recon_loss) {
            write!(out, ",{l}")?;
        }
        for v in 0..views {
            write!(
                out,
                ",{},{},{},{}",
                e.disc_objective[v],
                e.gen_objective[v],
                e.disc_common_objective[v],
                e.gen_common_objective[v]
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// Fused representation of all `n` samples after the final epoch.
    pub subspace: CommonSubspace,
    /// First epoch with an open gate, if any.
    pub gate_opened_at: Option<usize>,
}

struct Accumulator {
    ae: Vec<f64>,
    recon: Vec<f64>,
    disc: Vec<f64>,
    gen: Vec<f64>,
    disc_common: Vec<f64>,
    gen_common: Vec<f64>,
    batches: usize,
}

impl Accumulator {
    fn new(v: usize) -> Self {
        Self {
            ae: vec![0.0; v],
            recon: vec![0.0; v],
            disc: vec![0.0; v],
            gen: vec![0.0; v],
            disc_common: vec![0.0; v],
            gen_common: vec![0.0; v],
            batches: 0,
        }
    }

    fn finish(self, epoch: usize, lambda: f64, selected: usize, gate_open: bool) -> EpochLog {
        let b = self.batches.max(1) as f64;
        let mean = |v: Vec<f64>| v.into_iter().map(|x| x / b).collect();
        EpochLog {
            epoch,
            lambda,
            selected,
            gate_open,
            ae_loss: mean(self.ae),
            recon_loss: mean(self.recon),
            disc_objective: mean(self.disc),
            gen_objective: mean(self.gen),
            disc_common_objective: mean(self.disc_common),
            gen_common_objective: mean(self.gen_common),
        }
    }
}

fn check(value: f64, epoch: usize, batch: usize, view: usize) -> Result<f64, MvnetError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(MvnetError::NonFiniteLoss { epoch, batch, view })
    }
}

/// Discriminator ascent step followed by a generator descent step, with
/// fakes generated from `z`.
fn adversarial_pair(
    model: &mut MultiViewModel,
    view: usize,
    x: &Matrix,
    z: &Matrix,
    (epoch, batch): (usize, usize),
) -> Result<(f64, f64), MvnetError> {
    let nets = &mut model.views[view];
    let fake = nets.generator.predict(z)?;
    let d = discriminator_objective(&nets.discriminator, x, &fake)?;
    check(d.objective, epoch, batch, view)?;
    nets.discriminator_opt
        .step(&mut nets.discriminator.params, &d.grad.scaled(-1.0))?;
    let g = generator_objective(&nets.generator, &nets.discriminator, z)?;
    check(g.objective, epoch, batch, view)?;
    nets.generator_opt
        .step(&mut nets.generator.params, &g.grad)?;
    Ok((d.objective, g.objective))
}

fn encode_batch(model: &MultiViewModel, xs: &[Matrix]) -> Result<Vec<Matrix>, MvnetError> {
    model
        .views
        .iter()
        .zip(xs)
        .map(|(nets, x)| Ok(nets.encoder.predict(x)?))
        .collect()
}

/// Trains `model` for `config.schedule.max_epochs` epochs.
pub fn train<R: Rng + ?Sized>(
    model: &mut MultiViewModel,
    views: &[Matrix],
    sampling: &SamplingState,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<TrainOutcome, MvnetError> {
    if views.len() != model.n_views() {
        return Err(MvnetError::ViewCount {
            expected: model.n_views(),
            found: views.len(),
        });
    }
    let n = views[0].rows();
    let v_count = model.n_views();
    let weight = model.view_weight();
    let sorted = sampling.sorted_descending();
    let mut log = Vec::with_capacity(config.schedule.max_epochs);
    let mut gate_opened_at = None;

    for epoch in 0..config.schedule.max_epochs {
        let lambda = pace_value(&config.schedule, epoch, &sorted);
        let mask = selection_mask(&sampling.mean, lambda);
        let mut selected = selected_indices(&mask);
        let open = match config.gate_mode {
            GateMode::GoldenSection => gate(selected.len(), n, config.sigma).open,
            GateMode::AlwaysOpen => true,
        };
        if open && gate_opened_at.is_none() {
            gate_opened_at = Some(epoch);
        }
        selected.shuffle(rng);
        let mut acc = Accumulator::new(v_count);

        for (batch_id, batch) in selected.chunks(config.batch_size.max(1)).enumerate() {
            let xs: Vec<Matrix> = views.iter().map(|v| v.select_rows(batch)).collect();
            let ids = (epoch, batch_id);
            if !open {
                for (i, x) in xs.iter().enumerate() {
                    let ae = ae_loss_closed(&model.views[i], x)?;
                    acc.ae[i] += check(ae.loss, epoch, batch_id, i)?;
                    acc.recon[i] += ae.reconstruction;
                    let nets = &mut model.views[i];
                    nets.encoder_opt
                        .step(&mut nets.encoder.params, &ae.encoder)?;
                    nets.generator_opt
                        .step(&mut nets.generator.params, &ae.generator)?;
                    let z = nets.encoder.predict(x)?;
                    let (d, g) = adversarial_pair(model, i, x, &z, ids)?;
                    acc.disc[i] += d;
                    acc.gen[i] += g;
                }
            } else {
                let z_common = fuse_subspace(&encode_batch(model, &xs)?)?;
                for (i, x) in xs.iter().enumerate() {
                    let ae = ae_loss_open(&model.views[i], x, &z_common, weight)?;
                    acc.ae[i] += check(ae.loss, epoch, batch_id, i)?;
                    acc.recon[i] += ae.reconstruction;
                    let nets = &mut model.views[i];
                    nets.encoder_opt
                        .step(&mut nets.encoder.params, &ae.encoder)?;
                    nets.generator_opt
                        .step(&mut nets.generator.params, &ae.generator)?;
                    let z = nets.encoder.predict(x)?;
                    let (d, g) = adversarial_pair(model, i, x, &z, ids)?;
                    acc.disc[i] += d;
                    acc.gen[i] += g;
                }
                let z_common = fuse_subspace(&encode_batch(model, &xs)?)?;
                for (i, x) in xs.iter().enumerate() {
                    let (d, g) = adversarial_pair(model, i, x, &z_common, ids)?;
                    acc.disc_common[i] += d;
                    acc.gen_common[i] += g;
                }
            }
            acc.batches += 1;
        }
        log.push(acc.finish(epoch, lambda, mask.iter().filter(|&&h| h).count(), open));
    }

    if gate_opened_at.is_none() {
        log::warn!(
            "the gate never opened; the common subspace comes from the closed-state encoders"
        );
    }
    let subspace = model.common_subspace(views)?;
    Ok(TrainOutcome {
        log,
        subspace,
        gate_opened_at,
    })
}
