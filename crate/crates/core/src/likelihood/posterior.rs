//! Bayes posterior over scores implied by the diffusion model,
//! `log p(y|x̂) = log p(x̂|y) + log p(y) − log p(x̂)`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::flow::{log_density, FlowOdeConfig};
use super::kde::KdeModel;
use crate::diffusion::{ScoreModel, VpSchedule};
use crate::error::Result;

/// A design together with its unconditional log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorRecord {
    pub x: Vec<f64>,
    pub log_marginal: f64,
}

impl PosteriorRecord {
    pub fn compute<S: ScoreModel + ?Sized>(
        score: &S,
        schedule: &VpSchedule,
        x: &[f64],
        cfg: &FlowOdeConfig,
    ) -> Result<Self> {
        Ok(PosteriorRecord {
            x: x.to_vec(),
            log_marginal: log_density(score, schedule, x, None, cfg)?,
        })
    }
}

/// Unconditional log-densities keyed by the exact bit pattern of the design.
#[derive(Debug, Default)]
pub struct PosteriorCache {
    entries: Mutex<HashMap<Vec<u64>, f64>>,
    solves: AtomicUsize,
}

impl PosteriorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record<S: ScoreModel + ?Sized>(
        &self,
        score: &S,
        schedule: &VpSchedule,
        x: &[f64],
        cfg: &FlowOdeConfig,
    ) -> Result<PosteriorRecord> {
        let key: Vec<u64> = x.iter().map(|v| v.to_bits()).collect();
        if let Some(&log_marginal) = self.entries.lock().expect("cache lock").get(&key) {
            return Ok(PosteriorRecord {
                x: x.to_vec(),
                log_marginal,
            });
        }
        self.solves.fetch_add(1, Ordering::SeqCst);
        let rec = PosteriorRecord::compute(score, schedule, x, cfg)?;
        self.entries.lock().expect("cache lock").insert(key, rec.log_marginal);
        Ok(rec)
    }

    /// Number of unconditional ODE solves performed so far.
    pub fn unconditional_solves(&self) -> usize {
        self.solves.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One conditional solve plus the cached unconditional term.
pub fn posterior_logpdf<S: ScoreModel + ?Sized>(
    score: &S,
    schedule: &VpSchedule,
    kde: &KdeModel,
    rec: &PosteriorRecord,
    y: f64,
    cfg: &FlowOdeConfig,
) -> Result<f64> {
    let cond = log_density(score, schedule, &rec.x, Some(y), cfg)?;
    Ok(combine(cond, kde.logpdf(y), rec.log_marginal))
}

pub fn combine(log_conditional: f64, log_prior: f64, log_marginal: f64) -> f64 {
    log_prior + (log_conditional - log_marginal)
}
