//! Denoising score matching for the unified conditional/unconditional network.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::score::{ScoreModel, ScoreNet};
use crate::data::DataView;
use crate::error::{Result, RgdError};
use crate::nn::{AdamConfig, AdamOutcome, AdamState};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTrainSpec {
    pub batch_size: usize,
    pub steps: usize,
    /// Probability of replacing the condition with the null token.
    pub p_drop: f64,
    pub adam: AdamConfig,
}

impl Default for ScoreTrainSpec {
    fn default() -> Self {
        ScoreTrainSpec {
            batch_size: 128,
            steps: 100_000,
            p_drop: 0.2,
            adam: AdamConfig::default(),
        }
    }
}

impl ScoreTrainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_drop > 0.0 && self.p_drop < 1.0) {
            return Err(RgdError::Config(format!(
                "condition drop probability {} must lie strictly inside (0, 1)",
                self.p_drop
            )));
        }
        if self.batch_size == 0 {
            return Err(RgdError::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Resumable score-matching run. Step `k` draws its minibatch, times, noise
/// and dropout from a stream keyed by `(seed, k)`, so stopping after any step
/// and resuming from a checkpoint of `(net, adam)` reproduces the
/// uninterrupted run exactly.
pub struct ScoreTrainer {
    pub spec: ScoreTrainSpec,
    pub seed: u64,
    pub adam: AdamState,
}

impl ScoreTrainer {
    pub fn new(net: &ScoreNet, spec: ScoreTrainSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(ScoreTrainer {
            spec,
            seed,
            adam: AdamState::new(net.net.num_params(), spec.adam),
        })
    }

    pub fn resume(spec: ScoreTrainSpec, seed: u64, adam: AdamState) -> Result<Self> {
        spec.validate()?;
        Ok(ScoreTrainer { spec, seed, adam })
    }

    pub fn completed_steps(&self) -> u64 {
        self.adam.step
    }

    /// Runs `steps` more optimisation steps, returning `(step, loss)` pairs.
    pub fn run(&mut self, net: &mut ScoreNet, data: DataView<'_>, steps: usize) -> Result<Vec<(u64, f64)>> {
        if data.is_empty() {
            return Err(RgdError::Config("score training needs a nonempty dataset".into()));
        }
        assert_eq!(data.dim, net.dim(), "dataset dimension does not match score net");
        let d = data.dim;
        let width = net.feature_dim();
        let b = self.spec.batch_size;
        let schedule = net.schedule;
        let mut trace = Vec::with_capacity(steps);
        let mut features = vec![0.0; b * width];
        let mut noise = vec![0.0; b * d];
        let mut times = vec![0.0; b];
        let mut grads = vec![0.0; net.net.num_params()];
        for _ in 0..steps {
            let step = self.adam.step;
            let mut r = rng::stream(self.seed, rng::STREAM_SCORE_TRAIN, step);
            for i in 0..b {
                let idx = r.random_range(0..data.len());
                let t = r.random_range(schedule.t_eps..1.0);
                let drop = r.random::<f64>() < self.spec.p_drop;
                let (m, s) = (schedule.mean_coef(t), schedule.std(t));
                let row = &mut features[i * width..(i + 1) * width];
                let x0 = data.row(idx);
                for j in 0..d {
                    let e = rng::normal(&mut r);
                    noise[i * d + j] = e;
                    row[j] = m * x0[j] + s * e;
                }
                let cond = if drop { None } else { Some(data.y[idx]) };
                net.write_context(t, cond, &mut row[d..]);
                times[i] = t;
            }
            let cache = net.net.forward_batch(&features);
            // σ·s + ε = ε - net(features)
            let mut loss = 0.0;
            let mut cot = vec![0.0; b * d];
            for (k, (o, e)) in cache.output().iter().zip(&noise).enumerate() {
                let resid = o - e;
                loss += resid * resid;
                cot[k] = 2.0 * resid / b as f64;
            }
            loss /= b as f64;
            if !loss.is_finite() {
                let worst = times.iter().copied().fold(f64::INFINITY, f64::min);
                return Err(RgdError::non_finite(
                    "score training",
                    format!("loss {loss} at step {step} (smallest t in batch {worst})"),
                ));
            }
            grads.iter_mut().for_each(|g| *g = 0.0);
            net.net.backward_batch(&cache, &cot, Some(&mut grads));
            if self.adam.step(net.net.params_mut(), &grads) == AdamOutcome::SkippedNonFinite {
                return Err(RgdError::non_finite(
                    "score training",
                    format!("non-finite gradient at step {step}"),
                ));
            }
            trace.push((step, loss));
        }
        Ok(trace)
    }
}

/// Trains `net` from scratch optimizer state for `spec.steps` steps.
pub fn train_score(net: &mut ScoreNet, data: DataView<'_>, spec: ScoreTrainSpec, seed: u64) -> Result<Vec<(u64, f64)>> {
    let mut trainer = ScoreTrainer::new(net, spec, seed)?;
    trainer.run(net, data, spec.steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::VpSchedule;

    fn spec(steps: usize) -> ScoreTrainSpec {
        ScoreTrainSpec {
            batch_size: 64,
            steps,
            p_drop: 0.2,
            adam: AdamConfig {
                lr: 2e-3,
                ..AdamConfig::default()
            },
        }
    }

    #[test]
    fn zero_steps_leave_parameters() {
        let x = vec![0.5; 10];
        let y = vec![1.0; 10];
        let mut net = ScoreNet::new(1, &[8], 2, VpSchedule::default(), (1.0, 1.0), 0);
        let before = net.clone();
        let trace = train_score(&mut net, DataView::new(&x, &y, 1), spec(0), 1).unwrap();
        assert!(trace.is_empty());
        assert_eq!(net, before);
    }

    #[test]
    fn rejects_degenerate_drop_probability() {
        let mut s = spec(1);
        s.p_drop = 0.0;
        assert!(s.validate().is_err());
        s.p_drop = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn same_seed_same_weights_and_resume_equivalence() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let data = DataView::new(&x, &y, 2);
        let base = ScoreNet::new(2, &[16, 16], 3, VpSchedule::default(), (10.0, 6.0), 4);

        let mut a = base.clone();
        train_score(&mut a, data, spec(30), 9).unwrap();
        let mut b = base.clone();
        train_score(&mut b, data, spec(30), 9).unwrap();
        assert_eq!(a, b);

        let mut c = base.clone();
        let mut trainer = ScoreTrainer::new(&c, spec(30), 9).unwrap();
        trainer.run(&mut c, data, 12).unwrap();
        let saved_adam = trainer.adam.clone();
        let mut resumed = ScoreTrainer::resume(spec(30), 9, saved_adam).unwrap();
        resumed.run(&mut c, data, 18).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn learns_delta_data_score() {
        // Single repeated point: the exact perturbed score is -(x - μx₀)/σ².
        let x0 = 0.7;
        let x = vec![x0; 64];
        let y = vec![0.0; 64];
        let schedule = VpSchedule::default();
        let mut net = ScoreNet::new(1, &[32, 32], 4, schedule, (0.0, 1.0), 2);
        let mut s = spec(3000);
        s.adam.lr = 3e-3;
        train_score(&mut net, DataView::new(&x, &y, 1), s, 5).unwrap();
        let t = 0.5;
        let (m, sd) = (schedule.mean_coef(t), schedule.std(t));
        let mut worst: f64 = 0.0;
        for i in 0..21 {
            let xt = m * x0 + sd * (-2.0 + 4.0 * i as f64 / 20.0);
            let exact = -(xt - m * x0) / (sd * sd);
            if exact.abs() < 0.25 {
                continue;
            }
            let got = net.score(&[xt], t, None)[0];
            worst = worst.max(((got - exact) / exact).abs());
        }
        assert!(worst < 0.10, "worst relative error {worst}");
    }
}
