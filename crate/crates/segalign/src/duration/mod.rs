//! Duration models: verb-adaptive binning, the Poisson baseline, and the
//! feature-conditioned duration network.

mod binning;
mod durnet;
mod poisson;

pub use binning::{
    fit_verb_gammas, fit_verb_medians, make_binning, median_floor, verb_run_lengths, DurationBinning,
    RemainingTarget, StepMode,
};
pub use durnet::{gaussian_soft_label, DurNet, DurNetHyper, DurationExample};
pub use poisson::{poisson_log_pmf, PoissonDuration};

pub(crate) use durnet::argmax;

use crate::error::Result;
use crate::features::Window;
use crate::vocab::{ActionId, VerbId};

/// Everything a duration model may condition on when a segment starts.
#[derive(Clone, Copy, Debug)]
pub struct DurationContext<'a> {
    pub window: &'a Window,
    pub action: ActionId,
    pub verb: VerbId,
    /// Frames already spent in the current action by preceding segments.
    pub run_elapsed: usize,
    pub binning: &'a DurationBinning,
}

/// The duration term of the segment score.
#[derive(Clone, Debug, PartialEq)]
pub enum DurationModel {
    /// Every bin equally likely.
    Uniform,
    Poisson(PoissonDuration),
    DurNet(DurNet),
}

impl DurationModel {
    pub fn name(&self) -> &'static str {
        match self {
            DurationModel::Uniform => "uniform",
            DurationModel::Poisson(_) => "poisson",
            DurationModel::DurNet(_) => "durnet",
        }
    }

    /// Log-probability of each of the `L` discrete durations of the verb.
    pub fn log_probs(&self, ctx: &DurationContext<'_>) -> Result<Vec<f64>> {
        let bins = ctx.binning.bins();
        match self {
            DurationModel::Uniform => Ok(vec![-(bins as f64).ln(); bins]),
            DurationModel::Poisson(p) => Ok(p.bin_log_probs(ctx.action, ctx.verb, ctx.binning)),
            DurationModel::DurNet(net) => {
                let elapsed = ctx.binning.discretize_elapsed(ctx.run_elapsed, ctx.verb);
                net.log_probs(ctx.window, ctx.verb, elapsed)
            }
        }
    }

    /// Log-probability of the single bin `bin`.
    pub fn duration_log_prob(&self, ctx: &DurationContext<'_>, bin: usize) -> Result<f64> {
        Ok(self.log_probs(ctx)?[bin])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_window, FeatureMatrix, WindowConfig};

    #[test]
    fn every_model_emits_a_distribution() {
        let cfg = WindowConfig::new(6, 2).unwrap();
        let features = FeatureMatrix::new(10, 2, (0..20).map(|x| x as f32 * 0.1).collect()).unwrap();
        let window = extract_window(&features, 2, &cfg).unwrap();
        let binning = make_binning(&[12.0, 30.0], 4).unwrap();
        let mut net = DurNet::zeros(cfg, 2, 2, 4, 5);
        for (i, p) in net.network_mut().params_mut().iter_mut().enumerate() {
            *p = ((i * 37 % 11) as f64 - 5.0) * 0.1;
        }
        let models = [
            DurationModel::Uniform,
            DurationModel::Poisson(PoissonDuration::new(vec![9.0, 4.0]).unwrap()),
            DurationModel::DurNet(net),
        ];
        for model in &models {
            for run_elapsed in [0, 5, 40] {
                let ctx = DurationContext {
                    window: &window,
                    action: 1,
                    verb: 1,
                    run_elapsed,
                    binning: &binning,
                };
                let lp = model.log_probs(&ctx).unwrap();
                assert_eq!(lp.len(), 4);
                let total: f64 = lp.iter().map(|x| x.exp()).sum();
                assert!((total - 1.0).abs() < 1e-6, "{}: {total}", model.name());
                assert!(lp.iter().all(|x| x.is_finite()));
            }
        }
    }

    #[test]
    fn zero_durnet_is_log_uniform() {
        let cfg = WindowConfig::new(2, 1).unwrap();
        let features = FeatureMatrix::new(3, 1, vec![0.5, 1.0, 1.5]).unwrap();
        let window = extract_window(&features, 0, &cfg).unwrap();
        let binning = make_binning(&[14.0], 7).unwrap();
        let model = DurationModel::DurNet(DurNet::zeros(cfg, 1, 1, 7, 3));
        let ctx = DurationContext {
            window: &window,
            action: 0,
            verb: 0,
            run_elapsed: 3,
            binning: &binning,
        };
        for i in 0..7 {
            assert!((model.duration_log_prob(&ctx, i).unwrap() - (1.0f64 / 7.0).ln()).abs() < 1e-12);
        }
    }
}
