//! Statistical self-checks of the drop and delay models, written as
//! plot-ready CSV tables.

use std::path::Path;

use serde::Serialize;

use crate::channel::{LinkState, SampledDraws};
use crate::rng::{SimRng, Stream, StreamSeeds};
use crate::stat_models::{DelayModel, DropModel, ModelError, PROTOCOL_PRESETS};

pub const CURVE_MAX_HOPS: u32 = 50;
pub const CHECK_HOPS: [u32; 4] = [1, 5, 10, 20];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetRow {
    pub protocol: String,
    pub beta0: f64,
    pub beta1: f64,
    pub delta0: f64,
    pub delta1: f64,
}

pub fn preset_rows() -> Vec<PresetRow> {
    PROTOCOL_PRESETS
        .iter()
        .map(|p| PresetRow { protocol: p.name.to_string(), beta0: p.beta0, beta1: p.beta1, delta0: p.delta0, delta1: p.delta1 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub protocol: String,
    pub n_hops: u32,
    pub p_drop: f64,
}

/// Drop probability of every preset for 1..=50 hops.
pub fn drop_curves() -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for model in DropModel::presets() {
        for n_hops in 1..=CURVE_MAX_HOPS {
            let p_drop = model.drop_probability(n_hops).expect("hop count is positive");
            rows.push(CurveRow { protocol: model.protocol.clone(), n_hops, p_drop });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DropCheckRow {
    pub protocol: String,
    pub n_hops: u32,
    pub trials: u64,
    pub analytic: f64,
    pub empirical: f64,
    /// Binomial standard error of the empirical rate.
    pub sigma: f64,
    /// `(empirical - analytic) / sigma`; 0 when `sigma` is 0 and the rates agree.
    pub z_score: f64,
}

impl DropCheckRow {
    pub fn within(&self, n_sigma: f64) -> bool {
        if self.sigma == 0.0 {
            self.empirical == self.analytic
        } else {
            self.z_score.abs() <= n_sigma
        }
    }
}

/// Monte-Carlo drop rates measured by pushing `trials` packets through a link.
pub fn drop_rate_check(model: &DropModel, n_hops: u32, trials: u64, rng: SimRng) -> Result<DropCheckRow, ModelError> {
    let analytic = model.drop_probability(n_hops)?;
    let mut link = LinkState::new(0, 1, n_hops, analytic, 0, 0.0).map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
    let mut draws = SampledDraws::new(rng.clone(), rng, None);
    for k in 1..=trials {
        link.transmit(k, 0.0, &mut draws).map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
        link.receive(k).map_err(|e| ModelError::InvalidParameter(e.to_string()))?;
    }
    let empirical = link.stats().dropped as f64 / trials as f64;
    let sigma = (analytic * (1.0 - analytic) / trials as f64).sqrt();
    let z_score = if sigma == 0.0 { if empirical == analytic { 0.0 } else { f64::INFINITY } } else { (empirical - analytic) / sigma };
    Ok(DropCheckRow { protocol: model.protocol.clone(), n_hops, trials, analytic, empirical, sigma, z_score })
}

/// Drop-rate checks for every preset at [`CHECK_HOPS`].
pub fn drop_rate_checks(seed: u64, trials: u64) -> Vec<DropCheckRow> {
    let seeds = StreamSeeds::new(seed);
    let mut rows = Vec::new();
    for (pi, model) in DropModel::presets().iter().enumerate() {
        for (hi, &n_hops) in CHECK_HOPS.iter().enumerate() {
            let stream = Stream::LinkDrop((pi * CHECK_HOPS.len() + hi) as u64);
            rows.push(drop_rate_check(model, n_hops, trials, seeds.rng(stream)).expect("presets are valid"));
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: u64,
    pub empirical_density: f64,
    /// Model density averaged over the bin.
    pub analytic_density: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySampleCheck {
    pub samples: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub analytic_mean: f64,
    pub ks_statistic: f64,
    pub histogram: Vec<HistogramRow>,
}

/// Two-sided Kolmogorov-Smirnov distance between sorted samples and `cdf`.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

pub fn delay_samples(model: &DelayModel, n: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..n).map(|_| model.sample(rng)).collect()
}

pub fn delay_sample_check(model: &DelayModel, n: usize, bins: usize, seed: u64) -> Result<DelaySampleCheck, ModelError> {
    let mut rng = StreamSeeds::new(seed).rng(Stream::LinkDelay(0));
    let mut samples = delay_samples(model, n, &mut rng);
    let mean = samples.iter().sum::<f64>() / n as f64;
    samples.sort_by(f64::total_cmp);
    let cdf = |x: f64| model.cdf(x).expect("validated model");
    let ks = ks_statistic(&samples, cdf);

    let width = (model.b - model.a) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in &samples {
        let b = (((x - model.a) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(b, &count)| {
            let lo = model.a + b as f64 * width;
            let hi = if b + 1 == bins { model.b } else { lo + width };
            HistogramRow {
                bin_lo: lo,
                bin_hi: hi,
                count,
                empirical_density: count as f64 / (n as f64 * (hi - lo)),
                analytic_density: (cdf(hi) - cdf(lo)) / (hi - lo),
            }
        })
        .collect();
    Ok(DelaySampleCheck {
        samples: n,
        min: samples[0],
        max: samples[n - 1],
        mean,
        analytic_mean: model.truncated_mean()?,
        ks_statistic: ks,
        histogram,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelaySummaryRow {
    pub samples: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub analytic_mean: f64,
    pub ks_statistic: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub const PRESETS_FILE: &str = "presets.csv";
pub const DROP_CURVES_FILE: &str = "drop_curves.csv";
pub const DROP_CHECK_FILE: &str = "drop_rate_check.csv";
pub const DELAY_HISTOGRAM_FILE: &str = "delay_histogram.csv";
pub const DELAY_SUMMARY_FILE: &str = "delay_summary.csv";

/// Writes all model-validation tables into `dir`.
pub fn write_model_validation(dir: &Path, seed: u64, samples: usize, trials: u64) -> Result<DelaySampleCheck, csv::Error> {
    std::fs::create_dir_all(dir)?;
    write_rows(&dir.join(PRESETS_FILE), &preset_rows())?;
    write_rows(&dir.join(DROP_CURVES_FILE), &drop_curves())?;
    write_rows(&dir.join(DROP_CHECK_FILE), &drop_rate_checks(seed, trials))?;
    let check = delay_sample_check(&DelayModel::default(), samples, 94, seed).expect("default delay model is valid");
    write_rows(&dir.join(DELAY_HISTOGRAM_FILE), &check.histogram)?;
    let summary = DelaySummaryRow {
        samples: check.samples,
        min: check.min,
        max: check.max,
        mean: check.mean,
        analytic_mean: check.analytic_mean,
        ks_statistic: check.ks_statistic,
    };
    write_rows(&dir.join(DELAY_SUMMARY_FILE), &[summary])?;
    Ok(check)
}
