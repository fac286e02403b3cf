//! Runs a distributed-MLP experiment end to end.
//!
//! Hidden activations travel hidden→output and output error signals travel
//! output→hidden over one [`LinkState`] per directed mote pair. Every pattern
//! presentation, training or validation, advances a single global index `k`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, LinkState, LinkStats, SampledDraws};
use crate::config::{ConfigError, DropSelection, ExperimentConfig, Normalization};
use crate::dataset::{self, Dataset, DatasetError, NormalizationStats};
use crate::neural::{self, hidden_count, Evaluation, MlpNetwork, NeuralError, Shape};
use crate::rng::{Stream, StreamSeeds};
use crate::stat_models::{DelayModel, DropModel, ModelError};
use crate::topology::{place_motes, MoteLayout, TopologyError};

pub const LAYOUT_FILE: &str = "layout.json";
pub const WEIGHTS_HO_FILE: &str = "weights_ho.txt";
pub const WEIGHTS_IH_FILE: &str = "weights_ih.txt";

/// Receivers see this for hidden activations before anything arrives (sigmoid(0)).
pub const INITIAL_ACTIVATION: f64 = 0.5;
/// Receivers see this for error signals before anything arrives.
pub const INITIAL_DELTA: f64 = 0.0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("dataset error: {0}")]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training diverged in epoch {epoch} at presentation {presentation}: {detail}")]
    Divergence { epoch: usize, presentation: u64, detail: String },
    #[error(transparent)]
    Neural(NeuralError),
}

impl From<NeuralError> for EngineError {
    fn from(e: NeuralError) -> Self {
        match e {
            NeuralError::Divergence { context } => EngineError::Divergence { epoch: 0, presentation: 0, detail: context },
            other => EngineError::Neural(other),
        }
    }
}

/// `C_M = N_iter (2|P_T| + |P_V|) M_FP`.
pub fn analytic_message_complexity(n_iter: u64, train_size: u64, test_size: u64, m_fp: u64) -> u64 {
    n_iter * (2 * train_size + test_size) * m_fp
}

/// `C_T = N_iter (|P_T| + |P_V|) t_wait`, in milliseconds.
pub fn analytic_time_complexity_ms(n_iter: u64, train_size: u64, test_size: u64, t_wait: f64, per_hop_delay_ms: f64) -> f64 {
    (n_iter * (train_size + test_size)) as f64 * t_wait * per_hop_delay_ms
}

pub fn analytic_time_complexity_hours(n_iter: u64, train_size: u64, test_size: u64, t_wait: f64, per_hop_delay_ms: f64) -> f64 {
    analytic_time_complexity_ms(n_iter, train_size, test_size, t_wait, per_hop_delay_ms) / 3.6e6
}

/// Train and test partitions ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub normalization: NormalizationStats,
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData, EngineError> {
    let seeds = StreamSeeds::new(cfg.seed);
    let mut raw = dataset::load_csv(&cfg.dataset_path, cfg.has_header)?;
    raw.name = cfg.dataset_name.clone();
    prepare_loaded(cfg, &seeds, raw)
}

fn prepare_loaded(cfg: &ExperimentConfig, seeds: &StreamSeeds, raw: Dataset) -> Result<PreparedData, EngineError> {
    let balance = |ds: Dataset| -> Result<Dataset, EngineError> {
        if cfg.smote {
            Ok(dataset::smote(&mut seeds.rng(Stream::Smote), &ds, cfg.smote_k, None)?)
        } else {
            Ok(ds)
        }
    };
    match cfg.normalization {
        Normalization::Full => {
            let stats = NormalizationStats::fit(&raw);
            let ds = balance(stats.apply(&raw))?;
            let split = dataset::stratified_split(&mut seeds.rng(Stream::Split), &ds)?;
            Ok(PreparedData { train: split.train, test: split.test, normalization: stats })
        }
        Normalization::Train => {
            let ds = balance(raw)?;
            let split = dataset::stratified_split(&mut seeds.rng(Stream::Split), &ds)?;
            let stats = NormalizationStats::fit(&split.train);
            Ok(PreparedData { train: stats.apply(&split.train), test: stats.apply(&split.test), normalization: stats })
        }
    }
}

/// Network shape implied by the data and the sizing formula.
pub fn network_shape(cfg: &ExperimentConfig, data: &PreparedData) -> Shape {
    let n_in = data.train.attribute_count();
    let n_out = data.train.class_count();
    Shape { n_in, n_hid: hidden_count(cfg.sizing, n_in, n_out), n_out }
}

/// Drop behaviour shared by every link of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkDrop {
    Model(DropModel),
    Fixed(f64),
}

impl LinkDrop {
    pub fn resolve(selection: &DropSelection, seeds: &StreamSeeds) -> Result<Self, EngineError> {
        Ok(match selection {
            DropSelection::Random => LinkDrop::Model(DropModel::random(&mut seeds.rng(Stream::DropModel))),
            DropSelection::Preset(name) => LinkDrop::Model(
                DropModel::preset(name).ok_or_else(|| ConfigError::Invalid(format!("unknown drop preset '{name}'")))?,
            ),
            DropSelection::Coefficients { delta0, delta1 } => LinkDrop::Model(DropModel::new("custom", *delta0, *delta1)?),
            DropSelection::Fixed(p) => LinkDrop::Fixed(*p),
        })
    }

    pub fn probability(&self, n_hops: u32) -> Result<f64, ModelError> {
        match self {
            LinkDrop::Model(m) => m.drop_probability(n_hops),
            LinkDrop::Fixed(p) => Ok(*p),
        }
    }
}

/// Channel settings for a run; `delay: None` with zero drop is the identity channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub drop: LinkDrop,
    pub delay: Option<DelayModel>,
}

impl ChannelSpec {
    pub fn identity() -> Self {
        Self { drop: LinkDrop::Fixed(0.0), delay: None }
    }

    fn link(&self, sender: usize, receiver: usize, n_hops: u32, initial: f64) -> Result<LinkState, EngineError> {
        let p_drop = self.drop.probability(n_hops)?;
        let max_delay = self.delay.as_ref().map_or(0, |d| d.max_delay(n_hops));
        Ok(LinkState::new(sender, receiver, n_hops, p_drop, max_delay, initial)?)
    }
}

/// The distributed network: one mote per neuron, one link per directed pair.
#[derive(Debug, Clone)]
pub struct WsnMlp {
    pub net: MlpNetwork,
    /// Indexed `i * n_out + j`.
    forward: Vec<(LinkState, SampledDraws)>,
    /// Indexed `j * n_hid + i`.
    backward: Vec<(LinkState, SampledDraws)>,
    k: u64,
    /// `hidden_view[j][i]`: hidden activation `i` as last received by output `j`.
    hidden_view: Vec<Vec<f64>>,
    /// `delta_view[i][j]`: output delta `j` as last received by hidden `i`.
    delta_view: Vec<Vec<f64>>,
    hidden: Vec<f64>,
    output: Vec<f64>,
    delta_out: Vec<f64>,
    delta_hid: Vec<f64>,
}

impl WsnMlp {
    pub fn new(net: MlpNetwork, layout: &MoteLayout, channel: &ChannelSpec, seeds: &StreamSeeds) -> Result<Self, EngineError> {
        let Shape { n_hid, n_out, .. } = net.shape;
        if layout.n_hidden != n_hid || layout.n_output != n_out {
            return Err(NeuralError::Shape(format!(
                "layout has {}x{} motes, network {}x{}",
                layout.n_hidden, layout.n_output, n_hid, n_out
            ))
            .into());
        }
        let draws = |idx: usize| {
            let idx = idx as u64;
            SampledDraws::new(seeds.rng(Stream::LinkDrop(idx)), seeds.rng(Stream::LinkDelay(idx)), channel.delay)
        };
        let mut forward = Vec::with_capacity(n_hid * n_out);
        for i in 0..n_hid {
            for j in 0..n_out {
                let hops = layout.hidden_output_hops(i, j);
                let link = channel.link(i, layout.output_mote(j), hops, INITIAL_ACTIVATION)?;
                forward.push((link, draws(forward.len())));
            }
        }
        let mut backward = Vec::with_capacity(n_hid * n_out);
        for j in 0..n_out {
            for i in 0..n_hid {
                let hops = layout.hidden_output_hops(i, j);
                let link = channel.link(layout.output_mote(j), i, hops, INITIAL_DELTA)?;
                backward.push((link, draws(n_hid * n_out + backward.len())));
            }
        }
        Ok(Self {
            net,
            forward,
            backward,
            k: 0,
            hidden_view: vec![vec![INITIAL_ACTIVATION; n_hid]; n_out],
            delta_view: vec![vec![INITIAL_DELTA; n_out]; n_hid],
            hidden: vec![0.0; n_hid],
            output: vec![0.0; n_out],
            delta_out: vec![0.0; n_out],
            delta_hid: vec![0.0; n_hid],
        })
    }

    /// Presentations made so far.
    pub fn presentation(&self) -> u64 {
        self.k
    }

    pub fn hidden_view(&self, j: usize) -> &[f64] {
        &self.hidden_view[j]
    }

    pub fn forward_links(&self) -> impl Iterator<Item = &LinkState> {
        self.forward.iter().map(|(l, _)| l)
    }

    pub fn backward_links(&self) -> impl Iterator<Item = &LinkState> {
        self.backward.iter().map(|(l, _)| l)
    }

    pub fn forward_hop_transmissions(&self) -> u64 {
        self.forward_links().map(|l| l.stats().hop_transmissions).sum()
    }

    pub fn backward_hop_transmissions(&self) -> u64 {
        self.backward_links().map(|l| l.stats().hop_transmissions).sum()
    }

    /// Hidden layer computes from the true input, then each output neuron
    /// computes from whatever hidden values reached it.
    fn forward_pass(&mut self, input: &[f64]) -> Result<(), EngineError> {
        self.k += 1;
        let k = self.k;
        let Shape { n_hid, n_out, .. } = self.net.shape;
        for i in 0..n_hid {
            self.hidden[i] = self.net.hidden_activation(i, input);
        }
        for i in 0..n_hid {
            for j in 0..n_out {
                let (link, draws) = &mut self.forward[i * n_out + j];
                link.transmit(k, self.hidden[i], draws)?;
                self.hidden_view[j][i] = link.receive(k)?.value;
            }
        }
        for j in 0..n_out {
            self.output[j] = self.net.output_activation(j, &self.hidden_view[j]);
        }
        Ok(())
    }

    /// One training presentation.
    pub fn present_pattern_train(&mut self, input: &[f64], target: &[f64]) -> Result<(), EngineError> {
        self.forward_pass(input)?;
        let k = self.k;
        let Shape { n_hid, n_out, .. } = self.net.shape;
        for ((d, &o), &t) in self.delta_out.iter_mut().zip(&self.output).zip(target) {
            *d = neural::output_delta(o, t);
        }
        for j in 0..n_out {
            for i in 0..n_hid {
                let (link, draws) = &mut self.backward[j * n_hid + i];
                link.transmit(k, self.delta_out[j], draws)?;
                self.delta_view[i][j] = link.receive(k)?.value;
            }
        }
        for i in 0..n_hid {
            let view = &self.delta_view[i];
            self.delta_hid[i] = self.net.hidden_delta(i, self.hidden[i], |j| view[j]);
        }
        if !self.delta_out.iter().chain(&self.delta_hid).all(|d| d.is_finite()) {
            return Err(EngineError::Divergence { epoch: 0, presentation: k, detail: "non-finite error signal".into() });
        }
        for j in 0..n_out {
            self.net.update_output_neuron(j, &self.hidden_view[j], self.delta_out[j]);
        }
        for i in 0..n_hid {
            self.net.update_hidden_neuron(i, input, self.delta_hid[i]);
        }
        Ok(())
    }

    /// One validation presentation: forward only, no updates, backward links idle.
    pub fn present_pattern_validate(&mut self, input: &[f64]) -> Result<Vec<f64>, EngineError> {
        self.forward_pass(input)?;
        Ok(self.output.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub test_accuracy: f64,
    pub test_mse: f64,
}

/// Result of the epoch loop with early stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingOutcome {
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Validation metrics recorded at the best epoch.
    pub evaluation: Evaluation,
    pub history: Vec<EpochRecord>,
    /// Weights restored from the best epoch.
    pub network: MlpNetwork,
}

struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64, Evaluation, MlpNetwork)>,
    since_best: usize,
    history: Vec<EpochRecord>,
}

impl EarlyStopping {
    fn new(patience: usize) -> Self {
        Self { patience, best: None, since_best: 0, history: Vec::new() }
    }

    /// Records an epoch; returns true when training should stop.
    fn record(&mut self, epoch: usize, eval: Evaluation, net: &MlpNetwork) -> bool {
        self.history.push(EpochRecord { epoch, test_accuracy: eval.accuracy, test_mse: eval.mse });
        let improved = self.best.as_ref().is_none_or(|(_, mse, _, _)| eval.mse < *mse);
        if improved {
            self.best = Some((epoch, eval.mse, eval, net.clone()));
            self.since_best = 0;
            false
        } else {
            self.since_best += 1;
            self.since_best >= self.patience
        }
    }

    fn finish(self) -> TrainingOutcome {
        let epochs_run = self.history.len();
        let (best_epoch, _, evaluation, network) = self.best.expect("at least one epoch recorded");
        TrainingOutcome { epochs_run, best_epoch, evaluation, history: self.history, network }
    }
}

fn check_weights(net: &MlpNetwork, epoch: usize, presentation: u64) -> Result<(), EngineError> {
    if net.weights_finite() {
        Ok(())
    } else {
        Err(EngineError::Divergence { epoch, presentation, detail: "non-finite weight".into() })
    }
}

fn with_epoch(e: EngineError, epoch: usize, presentation: u64) -> EngineError {
    match e {
        EngineError::Divergence { detail, .. } => EngineError::Divergence { epoch, presentation, detail },
        other => other,
    }
}

/// Epoch loop of the distributed network.
pub fn train_distributed(
    wsn: &mut WsnMlp,
    data: &PreparedData,
    seeds: &StreamSeeds,
    max_epochs: usize,
    patience: usize,
) -> Result<TrainingOutcome, EngineError> {
    let targets = neural::targets(&data.train);
    let mut stopper = EarlyStopping::new(patience);
    for epoch in 1..=max_epochs {
        let order = dataset::shuffle_epoch(&mut seeds.rng(Stream::Shuffle(epoch as u64)), data.train.len());
        for &p in &order {
            wsn.present_pattern_train(&data.train.features[p], &targets[p])
                .map_err(|e| with_epoch(e, epoch, wsn.presentation()))?;
        }
        check_weights(&wsn.net, epoch, wsn.presentation())?;
        let mut outputs = Vec::with_capacity(data.test.len());
        for x in &data.test.features {
            outputs.push(wsn.present_pattern_validate(x)?);
        }
        let eval = Evaluation::from_outputs(&outputs, &data.test.labels, data.test.class_count());
        if stopper.record(epoch, eval, &wsn.net) {
            break;
        }
    }
    Ok(stopper.finish())
}

/// Centralized trainer with the same shuffles, initial weights and stopping
/// rule, but no channel.
pub fn train_reference(
    mut net: MlpNetwork,
    data: &PreparedData,
    seeds: &StreamSeeds,
    max_epochs: usize,
    patience: usize,
) -> Result<TrainingOutcome, EngineError> {
    let targets = neural::targets(&data.train);
    let mut stopper = EarlyStopping::new(patience);
    for epoch in 1..=max_epochs {
        let order = dataset::shuffle_epoch(&mut seeds.rng(Stream::Shuffle(epoch as u64)), data.train.len());
        for &p in &order {
            net.train_pattern(&data.train.features[p], &targets[p]).map_err(|e| with_epoch(e.into(), epoch, 0))?;
        }
        check_weights(&net, epoch, 0)?;
        let eval = neural::evaluate(&net, &data.test);
        if stopper.record(epoch, eval, &net) {
            break;
        }
    }
    Ok(stopper.finish())
}

/// Everything fixed before training starts.
#[derive(Debug, Clone)]
pub struct RunSetup {
    pub data: PreparedData,
    pub layout: MoteLayout,
    pub initial_network: MlpNetwork,
    pub channel: ChannelSpec,
    pub l_max: u32,
    /// Wait window in effect for delay sampling and time complexity.
    pub t_wait: f64,
    pub theta: f64,
    pub delay_model: DelayModel,
}

pub fn setup_run(cfg: &ExperimentConfig) -> Result<RunSetup, EngineError> {
    cfg.validate()?;
    let data = prepare_data(cfg)?;
    setup_with_data(cfg, data)
}

pub fn setup_with_data(cfg: &ExperimentConfig, data: PreparedData) -> Result<RunSetup, EngineError> {
    let seeds = StreamSeeds::new(cfg.seed);
    let shape = network_shape(cfg, &data);
    let layout = place_motes(&mut seeds.rng(Stream::Placement), shape.n_hid, shape.n_out)?;
    let initial_network = MlpNetwork::init_weights(&mut seeds.rng(Stream::WeightInit), shape, cfg.learning_rate, cfg.momentum)?;
    let l_max = cfg.l_max.unwrap_or(layout.l_max).max(1);
    let base = cfg.base_delay_model()?;
    let (delay_model, theta) = match cfg.t_wait {
        Some(t) => (base.with_t_wait(t)?, t / (base.mu * f64::from(l_max))),
        None => {
            let theta = cfg.effective_theta();
            (base.with_theta(theta, f64::from(l_max))?, theta)
        }
    };
    let channel = if cfg.identity_channel {
        ChannelSpec::identity()
    } else {
        ChannelSpec { drop: LinkDrop::resolve(&cfg.drop_model, &seeds)?, delay: Some(delay_model) }
    };
    Ok(RunSetup { data, layout, initial_network, channel, l_max, t_wait: delay_model.t_wait, theta, delay_model })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub train_size: usize,
    pub test_size: usize,
    pub attributes: usize,
    pub classes: usize,
    pub class_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSummary {
    pub links: usize,
    pub sent: u64,
    pub dropped: u64,
    pub drop_rate: f64,
    pub mean_staleness: f64,
    pub hop_transmissions: u64,
}

impl DirectionSummary {
    fn from_links<'a>(links: impl Iterator<Item = &'a LinkState>) -> Self {
        let (mut n, mut sent, mut dropped, mut received, mut stale, mut hops) = (0, 0, 0, 0, 0, 0);
        for l in links {
            let s = l.stats();
            n += 1;
            sent += s.sent;
            dropped += s.dropped;
            received += s.received;
            stale += s.staleness_sum;
            hops += s.hop_transmissions;
        }
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Self {
            links: n,
            sent,
            dropped,
            drop_rate: ratio(dropped, sent),
            mean_staleness: ratio(stale, received),
            hop_transmissions: hops,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub dataset: DatasetSummary,
    pub shape: Shape,
    /// Validation metrics at the best epoch, as seen through the channel.
    pub accuracy: f64,
    pub mse: f64,
    pub confusion: Vec<Vec<u64>>,
    /// The restored best weights evaluated without the channel.
    pub plain_accuracy: f64,
    pub plain_mse: f64,
    pub best_epoch: usize,
    /// `N_iter`.
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
    pub drop: LinkDrop,
    pub identity_channel: bool,
    pub l_max: u32,
    pub theta: f64,
    pub t_wait: f64,
    pub t_wait_ms: f64,
    /// `M_FP`.
    pub forward_message_hops: u64,
    pub presentations: u64,
    pub forward: DirectionSummary,
    pub backward: DirectionSummary,
    pub simulated_hop_transmissions: u64,
    /// `C_M`.
    pub message_complexity: u64,
    /// `C_T` in units of the per-hop delay.
    pub time_complexity: f64,
    pub time_complexity_hours: f64,
    pub links: Vec<LinkStats>,
    pub layout_file: String,
    pub weights_ho_file: String,
    pub weights_ih_file: String,
}

pub const SUMMARY_HEADER: [&str; 8] = ["dataset", "seed", "theta", "accuracy", "mse", "epochs", "C_M", "C_T"];

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Values for [`SUMMARY_HEADER`]; `C_T` in hours.
    pub fn summary_row(&self) -> [String; 8] {
        [
            self.dataset.name.clone(),
            self.seed.to_string(),
            self.theta.to_string(),
            self.accuracy.to_string(),
            self.mse.to_string(),
            self.epochs_run.to_string(),
            self.message_complexity.to_string(),
            self.time_complexity_hours.to_string(),
        ]
    }
}

/// Report plus the artifacts it refers to.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: RunReport,
    pub layout: MoteLayout,
    pub training: TrainingOutcome,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult, EngineError> {
    let setup = setup_run(cfg)?;
    run_with_setup(cfg, setup)
}

pub fn run_with_setup(cfg: &ExperimentConfig, setup: RunSetup) -> Result<RunResult, EngineError> {
    let seeds = StreamSeeds::new(cfg.seed);
    let RunSetup { data, layout, initial_network, channel, l_max, t_wait, theta, delay_model } = setup;
    let mut wsn = WsnMlp::new(initial_network, &layout, &channel, &seeds)?;
    let training = train_distributed(&mut wsn, &data, &seeds, cfg.max_epochs, cfg.patience)?;
    let plain = neural::evaluate(&training.network, &data.test);

    let n_iter = training.epochs_run as u64;
    let (p_t, p_v) = (data.train.len() as u64, data.test.len() as u64);
    let m_fp = layout.forward_message_hops();
    let forward = DirectionSummary::from_links(wsn.forward_links());
    let backward = DirectionSummary::from_links(wsn.backward_links());
    let links = wsn.forward_links().chain(wsn.backward_links()).map(|l| l.stats().clone()).collect();
    let report = RunReport {
        config: cfg.clone(),
        seed: cfg.seed,
        dataset: DatasetSummary {
            name: data.train.name.clone(),
            train_size: data.train.len(),
            test_size: data.test.len(),
            attributes: data.train.attribute_count(),
            classes: data.train.class_count(),
            class_names: data.train.class_names.clone(),
        },
        shape: training.network.shape,
        accuracy: training.evaluation.accuracy,
        mse: training.evaluation.mse,
        confusion: training.evaluation.confusion.clone(),
        plain_accuracy: plain.accuracy,
        plain_mse: plain.mse,
        best_epoch: training.best_epoch,
        epochs_run: training.epochs_run,
        history: training.history.clone(),
        drop: channel.drop.clone(),
        identity_channel: cfg.identity_channel,
        l_max,
        theta,
        t_wait,
        t_wait_ms: t_wait * delay_model.per_hop_delay_ms,
        forward_message_hops: m_fp,
        presentations: wsn.presentation(),
        simulated_hop_transmissions: forward.hop_transmissions + backward.hop_transmissions,
        forward,
        backward,
        message_complexity: analytic_message_complexity(n_iter, p_t, p_v, m_fp),
        time_complexity: (n_iter * (p_t + p_v)) as f64 * t_wait,
        time_complexity_hours: analytic_time_complexity_hours(n_iter, p_t, p_v, t_wait, delay_model.per_hop_delay_ms),
        links,
        layout_file: LAYOUT_FILE.into(),
        weights_ho_file: WEIGHTS_HO_FILE.into(),
        weights_ih_file: WEIGHTS_IH_FILE.into(),
    };
    Ok(RunResult { report, layout, training })
}

/// Plain-MLP run on the same data, initial weights and shuffles as [`run_experiment`].
pub fn run_reference(cfg: &ExperimentConfig) -> Result<TrainingOutcome, EngineError> {
    let setup = setup_run(cfg)?;
    train_reference(setup.initial_network, &setup.data, &StreamSeeds::new(cfg.seed), cfg.max_epochs, cfg.patience)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn iris_config() -> ExperimentConfig {
        let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv");
        ExperimentConfig::new(path, "iris")
    }

    #[test]
    fn complexity_formulas() {
        assert_eq!(analytic_message_complexity(179, 100, 50, 22), 984_500);
        assert_eq!(analytic_message_complexity(179, 100, 50, 0), 0);
        assert_eq!(analytic_message_complexity(358, 100, 50, 22), 2 * 984_500);
        assert_eq!(analytic_time_complexity_hours(1, 1, 0, 1.0, 3_600_000.0), 1.0);
        let h = analytic_time_complexity_hours(179, 100, 50, 2.88, 65.0);
        assert!((h - 1.396).abs() < 1e-3, "{h}");
        let doubled = analytic_time_complexity_hours(179, 100, 50, 5.76, 65.0);
        assert!((doubled - 2.0 * h).abs() < 1e-12);
    }

    #[test]
    fn iris_shape_and_links() {
        let setup = setup_run(&iris_config()).unwrap();
        assert_eq!(setup.initial_network.shape, Shape { n_in: 4, n_hid: 4, n_out: 3 });
        let wsn = WsnMlp::new(setup.initial_network.clone(), &setup.layout, &setup.channel, &StreamSeeds::new(1)).unwrap();
        assert_eq!(wsn.forward_links().count(), 12);
        assert_eq!(wsn.backward_links().count(), 12);
        assert_eq!(setup.data.train.len(), 100);
        assert_eq!(setup.data.test.len(), 50);
    }

    #[test]
    fn one_presentation_costs_m_fp_forward() {
        let setup = setup_run(&iris_config()).unwrap();
        let seeds = StreamSeeds::new(1);
        let mut wsn = WsnMlp::new(setup.initial_network.clone(), &setup.layout, &setup.channel, &seeds).unwrap();
        let m_fp = setup.layout.forward_message_hops();
        wsn.present_pattern_train(&setup.data.train.features[0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(wsn.forward_hop_transmissions(), m_fp);
        assert_eq!(wsn.backward_hop_transmissions(), m_fp);
        let before = wsn.presentation();
        for x in &setup.data.test.features {
            wsn.present_pattern_validate(x).unwrap();
        }
        assert_eq!(wsn.presentation() - before, 50);
        assert_eq!(wsn.forward_hop_transmissions(), 51 * m_fp);
        assert_eq!(wsn.backward_hop_transmissions(), m_fp);
    }

    #[test]
    fn black_hole_outputs_see_initial_hidden() {
        let mut cfg = iris_config();
        cfg.drop_model = DropSelection::Fixed(1.0);
        let setup = setup_run(&cfg).unwrap();
        let mut wsn = WsnMlp::new(setup.initial_network.clone(), &setup.layout, &setup.channel, &StreamSeeds::new(1)).unwrap();
        for p in 0..20 {
            wsn.present_pattern_train(&setup.data.train.features[p], &[0.0, 1.0, 0.0]).unwrap();
            for j in 0..3 {
                assert!(wsn.hidden_view(j).iter().all(|&h| h == INITIAL_ACTIVATION));
            }
        }
        assert!(wsn.net.weights_ih.iter().flatten().eq(setup.initial_network.weights_ih.iter().flatten()));
    }

    #[test]
    fn identity_validation_equals_plain_forward() {
        let mut cfg = iris_config();
        cfg.identity_channel = true;
        let setup = setup_run(&cfg).unwrap();
        let mut wsn = WsnMlp::new(setup.initial_network.clone(), &setup.layout, &setup.channel, &StreamSeeds::new(1)).unwrap();
        for x in &setup.data.test.features {
            assert_eq!(wsn.present_pattern_validate(x).unwrap(), setup.initial_network.predict(x));
        }
    }

    #[test]
    fn identity_train_step_equals_plain_step() {
        let mut cfg = iris_config();
        cfg.identity_channel = true;
        let setup = setup_run(&cfg).unwrap();
        let mut wsn = WsnMlp::new(setup.initial_network.clone(), &setup.layout, &setup.channel, &StreamSeeds::new(1)).unwrap();
        let mut plain = setup.initial_network.clone();
        let targets = neural::targets(&setup.data.train);
        for (x, t) in setup.data.train.features.iter().zip(&targets) {
            wsn.present_pattern_train(x, t).unwrap();
            plain.train_pattern(x, t).unwrap();
        }
        assert_eq!(wsn.net, plain);
    }

    #[test]
    fn early_stopping_rule() {
        let mut cfg = iris_config();
        cfg.max_epochs = 40;
        cfg.patience = 3;
        let r = run_experiment(&cfg).unwrap();
        let rep = &r.report;
        assert!(rep.epochs_run == rep.best_epoch + 3 || rep.epochs_run == 40);
        let best = &rep.history[rep.best_epoch - 1];
        assert_eq!((best.test_accuracy, best.test_mse), (rep.accuracy, rep.mse));
        assert!(rep.history.iter().all(|e| e.test_mse >= rep.mse));
        let plain = neural::evaluate(&r.training.network, &prepare_data(&cfg).unwrap().test);
        assert_eq!(plain.accuracy, rep.plain_accuracy);
    }

    #[test]
    fn missing_dataset_is_dataset_error() {
        let cfg = ExperimentConfig::new("/nonexistent/x.csv", "x");
        assert!(matches!(run_experiment(&cfg), Err(EngineError::Dataset(_))));
    }
}
