//! The client/server protocol: distribute shards, train local ensembles,
//! average parameters per architecture on the server, broadcast, predict.
//!
//! Clients and server exchange values in-process. A round is
//!
//! 1. broadcast the global ensemble to every client,
//! 2. each client trains every member on its own shard and sends a
//!    [`ClientUpdate`],
//! 3. the server averages the updates ([`aggregate_fedavg`]) into a new
//!    [`GlobalModel`],
//! 4. clients and the global model are evaluated and a [`RoundRecord`] is
//!    appended to the log.
//!
//! Updates are always reduced in ascending `client_id` order, so results do
//! not depend on the order in which clients finish.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_blobs, load_dataset, partition_clients, save_dataset, stratified_split, write_file,
    Dataset,
};
use crate::ensemble::{
    majority_vote, save_ensemble, weights_from_validation, EnsembleModel, VoteMethod, VoteWeights,
};
use crate::error::{Error, Result};
use crate::metrics::{confusion, render_table, report, MetricsReport, TableRow};
use crate::models::{
    init_model, train_local, ArchKind, Architecture, BaseLearner, ParameterVector, TrainConfig,
    DEFAULT_HIDDEN,
};
use crate::numerics::{mix64, RngStream};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Predict with the ensemble of per-architecture averaged parameters.
    #[default]
    FedavgEnsemble,
    /// Predict with the per-sample mode of every client's local ensemble.
    ModeOfClientEnsembles,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPolicy {
    /// Member weight = its accuracy on the client's validation split.
    #[default]
    Validation,
    Uniform,
}

/// Per-client settings for local ensemble training.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientConfig {
    /// `train.seed` is the client's seed for this round; members derive their
    /// own seeds from it.
    pub train: TrainConfig,
    pub vote_method: VoteMethod,
    pub weight_policy: WeightPolicy,
}

#[derive(Clone, Debug)]
pub struct ClientState {
    pub client_id: usize,
    pub train_set: Dataset,
    pub val_set: Dataset,
    /// The broadcast global ensemble before local training, the locally
    /// trained ensemble after.
    pub ensemble: EnsembleModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberReport {
    pub kind: ArchKind,
    pub report: MetricsReport,
}

/// What a client sends to the server after local training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub architectures: Vec<Architecture>,
    /// One vector per ensemble member, in member order.
    pub params: Vec<ParameterVector>,
    /// Training samples used; the client's FedAvg weight.
    pub sample_count: usize,
    pub val_metrics: MetricsReport,
    pub member_val_metrics: Vec<MemberReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GlobalModel {
    pub ensemble: EnsembleModel,
    pub strategy: Strategy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientReport {
    pub client_id: usize,
    pub sample_count: usize,
    pub ensemble: MetricsReport,
    pub members: Vec<MemberReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub strategy: Strategy,
    /// Each client's local ensemble on its own validation split.
    pub clients: Vec<ClientReport>,
    /// Global predictor on the union of client training sets.
    pub global_train: MetricsReport,
    /// Global predictor on the held-out test split.
    pub global_validation: MetricsReport,
    /// Averaged members of the global ensemble on the held-out test split.
    pub global_members: Vec<MemberReport>,
    /// Not serialized, so round logs stay byte-identical across runs.
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Splits `data` into `clients` stratified shards, each further split 90/10
/// into training and validation sets. Every client starts from `initial`.
pub fn distribute(
    data: &Dataset,
    clients: usize,
    val_fraction: f64,
    rng: &mut RngStream,
    initial: &EnsembleModel,
) -> Result<Vec<ClientState>> {
    let partition = partition_clients(data, clients, rng)?;
    partition
        .shards
        .iter()
        .enumerate()
        .map(|(client_id, shard)| {
            let (train_set, val_set) =
                stratified_split(shard, 1.0 - val_fraction, rng).map_err(|e| Error::Client {
                    client_id,
                    source: Box::new(e),
                })?;
            Ok(ClientState {
                client_id,
                train_set,
                val_set,
                ensemble: initial.clone(),
            })
        })
        .collect()
}

fn member_seed(client_seed: u64, member: usize) -> u64 {
    mix64(client_seed ^ mix64(member as u64 + 1))
}

/// Trains every member of the client's current ensemble on its training set
/// and packages the result for the server. Returns the update together with
/// the trained local ensemble.
pub fn client_round(c: &ClientState, cfg: &ClientConfig) -> Result<(ClientUpdate, EnsembleModel)> {
    let wrap = |e: Error| Error::Client {
        client_id: c.client_id,
        source: Box::new(e),
    };
    if c.train_set.is_empty() || c.val_set.is_empty() {
        return Err(wrap(Error::arg(
            "client needs non-empty training and validation sets",
        )));
    }
    let mut trained = Vec::with_capacity(c.ensemble.members().len());
    for (i, member) in c.ensemble.members().iter().enumerate() {
        let member_cfg = TrainConfig {
            seed: member_seed(cfg.train.seed, i),
            ..cfg.train.clone()
        };
        trained.push(
            train_local(member, &c.train_set, &member_cfg)
                .map_err(wrap)?
                .model,
        );
    }
    let weights = match cfg.weight_policy {
        WeightPolicy::Validation => weights_from_validation(&trained, &c.val_set).map_err(wrap)?,
        WeightPolicy::Uniform => VoteWeights::uniform(trained.len()),
    };
    let ensemble = EnsembleModel::new(trained, weights, cfg.vote_method).map_err(wrap)?;
    let val_metrics = evaluate_ensemble(&ensemble, &c.val_set).map_err(wrap)?;
    let member_val_metrics = evaluate_members(&ensemble, &c.val_set).map_err(wrap)?;
    let update = ClientUpdate {
        client_id: c.client_id,
        architectures: ensemble
            .members()
            .iter()
            .map(|m| m.architecture().clone())
            .collect(),
        params: ensemble
            .members()
            .iter()
            .map(|m| m.params().clone())
            .collect(),
        sample_count: c.train_set.len(),
        val_metrics,
        member_val_metrics,
    };
    Ok((update, ensemble))
}

/// Sample-count weighted average of each member's parameters:
/// `θ_g = Σ w_i θ_i / Σ w_i` with `w_i = sample_count`.
///
/// Computed as `θ_first + Σ (w_i / W)(θ_i − θ_first)` in ascending
/// `client_id` order, so identical inputs come back bit-for-bit, and clamped
/// to the per-coordinate range of the inputs.
pub fn average_parameters(updates: &[ClientUpdate]) -> Result<Vec<ParameterVector>> {
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    let first = *sorted
        .first()
        .ok_or_else(|| Error::arg("cannot aggregate zero client updates"))?;
    for pair in sorted.windows(2) {
        if pair[0].client_id == pair[1].client_id {
            return Err(Error::incompatible(format!(
                "two updates from client {}",
                pair[0].client_id
            )));
        }
    }
    for u in &sorted {
        if u.sample_count == 0 {
            return Err(Error::incompatible(format!(
                "client {} reports zero training samples",
                u.client_id
            )));
        }
        let kinds_match = u.params.len() == first.params.len()
            && u.params
                .iter()
                .zip(&first.params)
                .all(|(a, b)| a.kind == b.kind && a.len() == b.len());
        if !kinds_match || u.architectures != first.architectures {
            return Err(Error::incompatible(format!(
                "client {} sent parameters that do not match client {} ({})",
                u.client_id,
                first.client_id,
                describe(u)
            )));
        }
    }

    let total: f64 = sorted.iter().map(|u| u.sample_count as f64).sum();
    (0..first.params.len())
        .map(|m| {
            let anchor = first.params[m].as_slice();
            let mut out = anchor.to_vec();
            let mut lo = anchor.to_vec();
            let mut hi = anchor.to_vec();
            for u in &sorted[1..] {
                let share = u.sample_count as f64 / total;
                for (j, &v) in u.params[m].as_slice().iter().enumerate() {
                    out[j] += share * (v - anchor[j]);
                    lo[j] = lo[j].min(v);
                    hi[j] = hi[j].max(v);
                }
            }
            for ((v, l), h) in out.iter_mut().zip(&lo).zip(&hi) {
                *v = v.clamp(*l, *h);
            }
            ParameterVector::new(first.params[m].kind, out)
        })
        .collect()
}

fn describe(u: &ClientUpdate) -> String {
    u.params
        .iter()
        .map(|p| format!("{}:{}", p.kind, p.len()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// FedAvg per architecture, assembled into a uniformly weighted global
/// ensemble that votes with `method`.
pub fn aggregate_fedavg(
    updates: &[ClientUpdate],
    strategy: Strategy,
    method: VoteMethod,
) -> Result<GlobalModel> {
    let averaged = average_parameters(updates)?;
    let first = updates
        .iter()
        .min_by_key(|u| u.client_id)
        .expect("non-empty");
    let members = first
        .architectures
        .iter()
        .zip(averaged)
        .map(|(arch, p)| BaseLearner::from_params(arch.clone(), p))
        .collect::<Result<Vec<_>>>()?;
    Ok(GlobalModel {
        ensemble: EnsembleModel::uniform(members, method)?,
        strategy,
    })
}

/// Class predictions of the global model under its strategy.
pub fn global_predict(
    g: &GlobalModel,
    clients: &[ClientState],
    batch: &crate::numerics::Tensor,
) -> Result<Vec<usize>> {
    match g.strategy {
        Strategy::FedavgEnsemble => g.ensemble.predict(batch),
        Strategy::ModeOfClientEnsembles => {
            if clients.is_empty() {
                return Err(Error::arg(
                    "mode of client ensembles needs at least one client",
                ));
            }
            let mut sorted: Vec<&ClientState> = clients.iter().collect();
            sorted.sort_by_key(|c| c.client_id);
            let per_client = sorted
                .iter()
                .map(|c| c.ensemble.predict(batch))
                .collect::<Result<Vec<_>>>()?;
            let mut votes = vec![0; per_client.len()];
            (0..per_client[0].len())
                .map(|i| {
                    for (v, p) in votes.iter_mut().zip(&per_client) {
                        *v = p[i];
                    }
                    majority_vote(&votes)
                })
                .collect()
        }
    }
}

pub fn evaluate_ensemble(e: &EnsembleModel, d: &Dataset) -> Result<MetricsReport> {
    let pred = if d.is_empty() {
        Vec::new()
    } else {
        e.predict(d.features())?
    };
    let cm = confusion(d.labels(), &pred, d.label_space())?;
    Ok(report(&cm, e.mean_member_loss(d)?))
}

pub fn evaluate_model(m: &BaseLearner, d: &Dataset) -> Result<MetricsReport> {
    if d.is_empty() {
        return Ok(report(&confusion(&[], &[], d.label_space())?, 0.0));
    }
    let probs = m.forward(d.features())?;
    let pred: Vec<usize> = (0..d.len())
        .map(|i| crate::numerics::argmax(probs.row(i)))
        .collect();
    let cm = confusion(d.labels(), &pred, d.label_space())?;
    Ok(report(
        &cm,
        crate::models::cross_entropy(&probs, d.labels())?,
    ))
}

fn evaluate_members(e: &EnsembleModel, d: &Dataset) -> Result<Vec<MemberReport>> {
    e.members()
        .iter()
        .map(|m| {
            Ok(MemberReport {
                kind: m.kind(),
                report: evaluate_model(m, d)?,
            })
        })
        .collect()
}

/// Global predictor on `d`. Loss is the mean member cross-entropy of the
/// averaged ensemble, or of every client ensemble under mode-of-clients.
pub fn evaluate_global(
    g: &GlobalModel,
    clients: &[ClientState],
    d: &Dataset,
) -> Result<MetricsReport> {
    let pred = if d.is_empty() {
        Vec::new()
    } else {
        global_predict(g, clients, d.features())?
    };
    let loss = match g.strategy {
        Strategy::FedavgEnsemble => g.ensemble.mean_member_loss(d)?,
        Strategy::ModeOfClientEnsembles => {
            let mut sum = 0.0;
            for c in clients {
                sum += c.ensemble.mean_member_loss(d)?;
            }
            sum / clients.len().max(1) as f64
        }
    };
    Ok(report(
        &confusion(d.labels(), &pred, d.label_space())?,
        loss,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobSpec {
    pub per_class: usize,
    pub dim: usize,
    pub separation: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            per_class: 500,
            dim: 16,
            separation: 6.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(BlobSpec),
    Path(PathBuf),
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(BlobSpec::default())
    }
}

/// A complete experiment description, read from JSON. Unknown keys are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    pub clients: usize,
    pub rounds: usize,
    pub strategy: Strategy,
    /// Local SGD settings; `train.seed` must stay 0, seeds derive from `seed`.
    pub train: TrainConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub vote_method: VoteMethod,
    pub vote_weights: WeightPolicy,
    pub hidden: usize,
    pub architectures: Vec<ArchKind>,
    pub parallel_clients: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::default(),
            clients: 4,
            rounds: 1,
            strategy: Strategy::default(),
            train: TrainConfig::default(),
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            train_fraction: 0.8,
            val_fraction: 0.1,
            vote_method: VoteMethod::default(),
            vote_weights: WeightPolicy::default(),
            hidden: DEFAULT_HIDDEN,
            architectures: ArchKind::ALL.to_vec(),
            parallel_clients: false,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Every problem with the configuration, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let DatasetSource::Synthetic(b) = &self.dataset {
            if b.per_class == 0 {
                out.push("dataset.synthetic.per_class must be at least 1".into());
            }
            if b.dim == 0 {
                out.push("dataset.synthetic.dim must be at least 1".into());
            }
            if !(b.separation.is_finite() && b.separation > 0.0) {
                out.push(format!(
                    "dataset.synthetic.separation must be positive, got {}",
                    b.separation
                ));
            }
        }
        if self.clients == 0 {
            out.push("clients must be at least 1".into());
        }
        if self.rounds == 0 {
            out.push("rounds must be at least 1".into());
        }
        for p in self.train.problems() {
            out.push(format!("train.{p}"));
        }
        if self.train.seed != 0 {
            out.push("train.seed is derived from `seed`; set `seed` instead".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            out.push(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            out.push(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            ));
        }
        if self.hidden == 0 {
            out.push("hidden must be at least 1".into());
        }
        if self.architectures.is_empty() {
            out.push("architectures must name at least one kind".into());
        }
        let mut kinds = self.architectures.clone();
        kinds.sort();
        kinds.dedup();
        if kinds.len() != self.architectures.len() {
            out.push("architectures must not repeat a kind".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

// Stream ids for the root seed; training seeds are mixed from round/client.
const STREAM_DATA: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_PARTITION: u64 = 3;
const STREAM_INIT: u64 = 4;

fn client_seed(root: u64, round: usize, client: usize) -> u64 {
    mix64(root ^ mix64(((round as u64) << 32) | client as u64))
}

/// Loads or generates the dataset a config names.
pub fn load_source(config: &RunConfig) -> Result<Dataset> {
    match &config.dataset {
        DatasetSource::Synthetic(b) => generate_blobs(
            &mut RngStream::new(config.seed, STREAM_DATA),
            b.per_class,
            b.dim,
            b.separation,
        ),
        DatasetSource::Path(p) => load_dataset(p),
    }
}

/// A running federation: server state plus every simulated client.
#[derive(Clone, Debug)]
pub struct Federation {
    config: RunConfig,
    clients: Vec<ClientState>,
    global: GlobalModel,
    test_set: Dataset,
    rounds_done: usize,
}

impl Federation {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let data = load_source(config)?;
        Self::with_dataset(config, &data)
    }

    /// Like [`Federation::new`] but with the dataset supplied directly.
    pub fn with_dataset(config: &RunConfig, data: &Dataset) -> Result<Self> {
        config.validate()?;
        let (train, test_set) = stratified_split(
            data,
            config.train_fraction,
            &mut RngStream::new(config.seed, STREAM_SPLIT),
        )?;

        // The server initializes one model per architecture; all clients
        // start round 1 from these same parameters.
        let members = config
            .architectures
            .iter()
            .enumerate()
            .map(|(i, &kind)| {
                let arch = Architecture::for_features(
                    kind,
                    data.feature_shape(),
                    data.num_classes(),
                    config.hidden,
                )?;
                init_model(
                    &arch,
                    &mut RngStream::new(config.seed, (STREAM_INIT << 32) | i as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let initial = EnsembleModel::uniform(members, config.vote_method)?;
        let clients = distribute(
            &train,
            config.clients,
            config.val_fraction,
            &mut RngStream::new(config.seed, STREAM_PARTITION),
            &initial,
        )?;
        Ok(Self {
            config: config.clone(),
            clients,
            global: GlobalModel {
                ensemble: initial,
                strategy: config.strategy,
            },
            test_set,
            rounds_done: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn global(&self) -> &GlobalModel {
        &self.global
    }

    pub fn test_set(&self) -> &Dataset {
        &self.test_set
    }

    pub fn rounds_done(&self) -> usize {
        self.rounds_done
    }

    /// Union of every client's training set, in client order.
    pub fn pooled_train(&self) -> Result<Dataset> {
        let parts: Vec<Dataset> = self.clients.iter().map(|c| c.train_set.clone()).collect();
        Dataset::concat(&parts)
    }

    /// One full round with the configured training settings.
    pub fn run_round(&mut self) -> Result<RoundRecord> {
        let train = self.config.train.clone();
        self.run_round_with(&train)
    }

    /// One full round with explicit local training settings (`seed` ignored).
    pub fn run_round_with(&mut self, train: &TrainConfig) -> Result<RoundRecord> {
        let started = Instant::now();
        let round = self.rounds_done + 1;

        // Broadcast: every client starts from the current global members.
        for c in &mut self.clients {
            c.ensemble = self.global.ensemble.clone();
        }

        let root = self.config.seed;
        let cfg_for = |client_id: usize| ClientConfig {
            train: TrainConfig {
                seed: client_seed(root, round, client_id),
                ..train.clone()
            },
            vote_method: self.config.vote_method,
            weight_policy: self.config.vote_weights,
        };
        let results: Vec<(ClientUpdate, EnsembleModel)> = if self.config.parallel_clients {
            self.clients
                .par_iter()
                .map(|c| client_round(c, &cfg_for(c.client_id)))
                .collect::<Result<_>>()?
        } else {
            self.clients
                .iter()
                .map(|c| client_round(c, &cfg_for(c.client_id)))
                .collect::<Result<_>>()?
        };

        let mut updates = Vec::with_capacity(results.len());
        for (c, (update, ensemble)) in self.clients.iter_mut().zip(results) {
            c.ensemble = ensemble;
            updates.push(update);
        }
        self.global = aggregate_fedavg(&updates, self.config.strategy, self.config.vote_method)?;
        self.rounds_done = round;

        let pooled = self.pooled_train()?;
        let record = RoundRecord {
            round,
            strategy: self.config.strategy,
            clients: updates
                .iter()
                .map(|u| ClientReport {
                    client_id: u.client_id,
                    sample_count: u.sample_count,
                    ensemble: u.val_metrics.clone(),
                    members: u.member_val_metrics.clone(),
                })
                .collect(),
            global_train: evaluate_global(&self.global, &self.clients, &pooled)?,
            global_validation: evaluate_global(&self.global, &self.clients, &self.test_set)?,
            global_members: evaluate_members(&self.global.ensemble, &self.test_set)?,
            wall_time: started.elapsed(),
        };
        Ok(record)
    }

    /// Rows for the comparison table: the global model, then client 0's
    /// members and local ensemble as representatives. Training columns use
    /// the row's own training data, validation columns the held-out test
    /// split.
    pub fn table_rows(&self) -> Result<Vec<TableRow>> {
        let pooled = self.pooled_train()?;
        let mut rows = vec![TableRow {
            name: "Global Model (FL)".into(),
            train: evaluate_global(&self.global, &self.clients, &pooled)?,
            validation: evaluate_global(&self.global, &self.clients, &self.test_set)?,
        }];
        let c0 = &self.clients[0];
        for m in c0.ensemble.members() {
            rows.push(TableRow {
                name: format!("{} (client 0)", m.kind()),
                train: evaluate_model(m, &c0.train_set)?,
                validation: evaluate_model(m, &self.test_set)?,
            });
        }
        rows.push(TableRow {
            name: "Ensemble Model (client 0)".into(),
            train: evaluate_ensemble(&c0.ensemble, &c0.train_set)?,
            validation: evaluate_ensemble(&c0.ensemble, &self.test_set)?,
        });
        Ok(rows)
    }
}

/// Runs every configured round and returns the round log.
pub fn run_federation(config: &RunConfig) -> Result<Vec<RoundRecord>> {
    let mut fed = Federation::new(config)?;
    (0..config.rounds).map(|_| fed.run_round()).collect()
}

pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const TABLE_FILE: &str = "table.txt";
pub const REPORT_FILE: &str = "report.json";
pub const CONFUSION_FILE: &str = "confusion.csv";

#[derive(Debug)]
pub struct RunSummary {
    pub records: Vec<RoundRecord>,
    pub table: String,
    pub output_dir: PathBuf,
    pub federation: Federation,
}

/// Runs the federation and writes its artifacts under `config.output_dir`:
///
/// - `rounds.jsonl`: one [`RoundRecord`] per line
/// - `timings.jsonl`: wall time per round
/// - `round-NNN/global/`: the global ensemble checkpoint after each round
/// - `table.txt`, `report.json`, `confusion.csv`: final global evaluation
/// - `data/test/`, `data/train/`: the held-out test split and the pooled
///   client training sets
pub fn run_to_dir(config: &RunConfig) -> Result<RunSummary> {
    let mut fed = Federation::new(config)?;
    let out = config.output_dir.clone();
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let mut records = Vec::with_capacity(config.rounds);
    let mut rounds_jsonl = String::new();
    let mut timings = String::new();
    for _ in 0..config.rounds {
        let record = fed.run_round()?;
        rounds_jsonl.push_str(&serde_json::to_string(&record)?);
        rounds_jsonl.push('\n');
        timings.push_str(&serde_json::to_string(&serde_json::json!({
            "round": record.round,
            "wall_time_ms": record.wall_time.as_secs_f64() * 1e3,
        }))?);
        timings.push('\n');
        save_ensemble(
            &fed.global().ensemble,
            &round_dir(&out, record.round).join("global"),
        )?;
        records.push(record);
    }
    write_file(&out.join(ROUNDS_FILE), rounds_jsonl.as_bytes())?;
    write_file(&out.join(TIMINGS_FILE), timings.as_bytes())?;

    let table = render_table(&fed.table_rows()?);
    write_file(&out.join(TABLE_FILE), table.as_bytes())?;

    let test = fed.test_set();
    let pred = global_predict(fed.global(), fed.clients(), test.features())?;
    let cm = confusion(test.labels(), &pred, test.label_space())?;
    write_file(&out.join(CONFUSION_FILE), cm.to_csv().as_bytes())?;
    let final_report = &records.last().expect("rounds >= 1").global_validation;
    write_file(
        &out.join(REPORT_FILE),
        serde_json::to_string_pretty(final_report)?.as_bytes(),
    )?;
    save_dataset(test, &out.join("data").join("test"))?;
    save_dataset(&fed.pooled_train()?, &out.join("data").join("train"))?;
    write_file(
        &out.join("config.json"),
        serde_json::to_string_pretty(config)?.as_bytes(),
    )?;

    Ok(RunSummary {
        records,
        table,
        output_dir: out,
        federation: fed,
    })
}

pub fn round_dir(out: &Path, round: usize) -> PathBuf {
    out.join(format!("round-{round:03}"))
}
