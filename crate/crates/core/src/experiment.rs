//! Seeded experiment sweeps and their on-disk results.
//!
//! A sweep is the cartesian product of algorithms, low-fidelity SNRs, `m`
//! values and seeds. The single-fidelity baseline ignores the SNR and `m`
//! axes and runs once per seed. Every run gets its agent seed from the root
//! seed and its own seed label only, so all algorithms see the same random
//! numbers for a given seed and adding sweep points never changes existing
//! runs.
//!
//! Output layout under `out`:
//!
//! ```text
//! runs/<run_id>.csv   one row per checkpoint
//! merged.csv          all runs, in sweep order
//! manifest.json       config, config hash, version, per-run status
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agents::{mcrl_train, mfmcrl_train, AgentConfig, AgentError, Algo, TrainingHistory};
use crate::envs::nas::{
    load_reward_table, nas_state_map, synth_reward_table, NasEnv, NasEnvConfig, NasError, RewardTable,
};
use crate::envs::synthetic::{
    derive_low_fidelity, generate_high_fidelity, NoiseConfig, RandomMdpConfig, SyntheticError,
};
use crate::mdp::{MdpSpec, StateMap};
use crate::parallel::{map_indexed, Execution};
use crate::rng::{derive_seed, stream_rng, tag};

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("could not parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error(transparent)]
    Nas(#[from] NasError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticEnvConfig {
    pub num_states: usize,
    pub num_actions: usize,
    pub terminal_prob: f64,
    pub env_seed: u64,
    /// Perturb only the rewards, keeping the high-fidelity dynamics.
    pub reward_only: bool,
}

impl Default for SyntheticEnvConfig {
    fn default() -> Self {
        Self { num_states: 50, num_actions: 4, terminal_prob: 0.1, env_seed: 0, reward_only: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NasExperimentConfig {
    /// CSV with `arch_index,epoch,accuracy`. Without it a synthetic table
    /// is generated from `table_seed`.
    pub reward_table: Option<PathBuf>,
    pub table_seed: u64,
    pub num_epochs: u32,
    pub high_epoch: u32,
    pub low_epoch: u32,
    /// Use the restricted low-fidelity search space with the many-to-one map.
    pub restricted_low: bool,
}

impl Default for NasExperimentConfig {
    fn default() -> Self {
        Self {
            reward_table: None,
            table_seed: 0,
            num_epochs: 200,
            high_epoch: 200,
            low_epoch: 10,
            restricted_low: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EnvConfig {
    Synthetic(SyntheticEnvConfig),
    Nas(NasExperimentConfig),
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::Synthetic(SyntheticEnvConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub root_seed: u64,
    pub seeds: Vec<u64>,
    pub algos: Vec<Algo>,
    /// Low-fidelity SNRs in dB (synthetic environments only).
    pub snr_db: Vec<f64>,
    pub m: Vec<usize>,
    pub out: PathBuf,
    /// Worker threads; 0 uses all cores, 1 runs sequentially.
    pub jobs: usize,
    /// Checkpoints averaged into a run's final reward.
    pub final_window: usize,
    pub env: EnvConfig,
    pub agent: AgentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "desk".into(),
            root_seed: 0,
            seeds: (0..8).collect(),
            algos: vec![Algo::Mcrl, Algo::Mfmcrl],
            snr_db: vec![-3.0],
            m: vec![10],
            out: PathBuf::from("results"),
            jobs: 0,
            final_window: 5,
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.into()));
        if self.seeds.is_empty() || self.algos.is_empty() {
            return bad("seeds and algos must be non-empty");
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct");
        }
        if self.algos.contains(&Algo::Mfmcrl) {
            if self.m.is_empty() {
                return bad("m must be non-empty");
            }
            if matches!(self.env, EnvConfig::Synthetic(_)) && self.snr_db.is_empty() {
                return bad("snr_db must be non-empty");
            }
        }
        if self.snr_db.iter().any(|s| s.is_nan()) {
            return bad("snr_db contains NaN");
        }
        if self.final_window == 0 {
            return bad("final_window must be positive");
        }
        if let EnvConfig::Nas(n) = &self.env {
            if n.reward_table.is_none() && (n.high_epoch > n.num_epochs || n.low_epoch > n.num_epochs) {
                return bad("fidelity epochs exceed num_epochs");
            }
        }
        self.agent.validate()?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config is always serialisable");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn execution(&self) -> Execution {
        if self.jobs == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    /// Runs in sweep order: algos, then SNRs, then `m`, then seeds.
    pub fn runs(&self) -> Vec<RunSpec> {
        let snrs: Vec<Option<f64>> = match self.env {
            EnvConfig::Synthetic(_) => self.snr_db.iter().map(|&s| Some(s)).collect(),
            EnvConfig::Nas(_) => vec![None],
        };
        let mut runs = Vec::new();
        for &algo in &self.algos {
            let points: Vec<(Option<f64>, Option<usize>)> = match algo {
                Algo::Mcrl => vec![(None, None)],
                Algo::Mfmcrl => snrs
                    .iter()
                    .flat_map(|&s| self.m.iter().map(move |&m| (s, Some(m))))
                    .collect(),
            };
            for (snr_db, m) in points {
                for &seed in &self.seeds {
                    runs.push(RunSpec { algo, seed, snr_db, m });
                }
            }
        }
        runs
    }

    pub fn agent_seed(&self, seed: u64) -> u64 {
        derive_seed(self.root_seed, &[tag("agent"), seed])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub algo: Algo,
    pub seed: u64,
    pub snr_db: Option<f64>,
    pub m: Option<usize>,
}

fn fmt_snr(snr: f64) -> String {
    if snr.is_infinite() {
        "inf".into()
    } else {
        format!("{snr}").replace('-', "n").replace('.', "p")
    }
}

impl RunSpec {
    pub fn run_id(&self) -> String {
        let mut id = self.algo.as_str().to_string();
        if let Some(s) = self.snr_db {
            id.push_str(&format!("_snr{}", fmt_snr(s)));
        }
        if let Some(m) = self.m {
            id.push_str(&format!("_m{m}"));
        }
        id.push_str(&format!("_seed{}", self.seed));
        id
    }
}

/// One CSV row: a checkpoint of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub seed: u64,
    pub algo: Algo,
    pub episode: usize,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub vr_factor: f64,
    pub fallback_frac: f64,
    pub snr_db: Option<f64>,
    pub m: Option<usize>,
}

pub fn history_rows(run_id: &str, spec: &RunSpec, history: &TrainingHistory) -> Vec<ResultRow> {
    history
        .checkpoints
        .iter()
        .map(|c| ResultRow {
            run_id: run_id.to_string(),
            seed: spec.seed,
            algo: spec.algo,
            episode: c.episode,
            eval_mean: c.eval_mean,
            eval_std: c.eval_std,
            vr_factor: c.vr_factor,
            fallback_frac: c.fallback_frac,
            snr_db: spec.snr_db,
            m: spec.m,
        })
        .collect()
}

pub fn write_rows<W: io::Write>(writer: W, rows: &[ResultRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_rows<R: io::Read>(reader: R) -> Result<Vec<ResultRow>, ExperimentError> {
    let mut r = csv::Reader::from_reader(reader);
    Ok(r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?)
}

/// High-fidelity synthetic MDP for an experiment.
pub fn synthetic_high(cfg: &SyntheticEnvConfig, discount: f64, root_seed: u64) -> Result<MdpSpec, ExperimentError> {
    let gen = RandomMdpConfig {
        num_states: cfg.num_states,
        num_actions: cfg.num_actions,
        terminal_prob: cfg.terminal_prob,
        discount,
        seed: cfg.env_seed,
    };
    let mut rng = stream_rng(derive_seed(root_seed, &[tag("high"), cfg.env_seed]), 0);
    Ok(generate_high_fidelity(&gen, &mut rng)?)
}

/// Low-fidelity counterpart of [`synthetic_high`] at `snr_db`.
pub fn synthetic_low(
    hi: &MdpSpec,
    cfg: &SyntheticEnvConfig,
    snr_db: f64,
    root_seed: u64,
) -> Result<MdpSpec, ExperimentError> {
    let noise = if cfg.reward_only {
        NoiseConfig { snr_p_db: f64::INFINITY, snr_r_db: snr_db }
    } else {
        NoiseConfig::both(snr_db)
    };
    let seed = derive_seed(root_seed, &[tag("low"), cfg.env_seed, snr_db.to_bits()]);
    Ok(derive_low_fidelity(hi, &noise, &mut stream_rng(seed, 0))?)
}

enum Envs {
    Synthetic { hi: MdpSpec, lo: Vec<(f64, MdpSpec)>, map: StateMap },
    Nas { hi: NasEnv, lo: NasEnv, map: StateMap },
}

fn nas_table(cfg: &NasExperimentConfig) -> Result<RewardTable, ExperimentError> {
    Ok(match &cfg.reward_table {
        Some(path) => load_reward_table(path)?,
        None => synth_reward_table(cfg.table_seed, cfg.num_epochs),
    })
}

fn build_envs(config: &ExperimentConfig) -> Result<Envs, ExperimentError> {
    let discount = config.agent.discount;
    match &config.env {
        EnvConfig::Synthetic(s) => {
            let hi = synthetic_high(s, discount, config.root_seed)?;
            let lo = config
                .snr_db
                .iter()
                .map(|&snr| synthetic_low(&hi, s, snr, config.root_seed).map(|l| (snr, l)))
                .collect::<Result<_, _>>()?;
            let map = StateMap::identity(hi.num_states());
            Ok(Envs::Synthetic { hi, lo, map })
        }
        EnvConfig::Nas(n) => {
            let table = nas_table(n)?;
            let hi = NasEnv::new(&table, &NasEnvConfig { fidelity_epoch: n.high_epoch, restricted: false, discount })?;
            let lo = NasEnv::new(
                &table,
                &NasEnvConfig { fidelity_epoch: n.low_epoch, restricted: n.restricted_low, discount },
            )?;
            let map = if n.restricted_low {
                nas_state_map()
            } else {
                StateMap::identity(crate::envs::nas::NasSpace::Full.num_states())
            };
            Ok(Envs::Nas { hi, lo, map })
        }
    }
}

fn run_one(envs: &Envs, config: &ExperimentConfig, spec: &RunSpec) -> Result<TrainingHistory, ExperimentError> {
    let agent = AgentConfig {
        seed: config.agent_seed(spec.seed),
        m: spec.m.unwrap_or(config.agent.m),
        ..config.agent.clone()
    };
    let out = match (envs, spec.algo) {
        (Envs::Synthetic { hi, .. }, Algo::Mcrl) => mcrl_train(hi, &agent)?,
        (Envs::Nas { hi, .. }, Algo::Mcrl) => mcrl_train(hi, &agent)?,
        (Envs::Synthetic { hi, lo, map }, Algo::Mfmcrl) => {
            let snr = spec.snr_db.expect("multifidelity synthetic runs carry an SNR");
            let (_, lo) = lo
                .iter()
                .find(|(s, _)| s.to_bits() == snr.to_bits())
                .expect("low-fidelity env built for every SNR");
            mfmcrl_train(hi, lo, map, &agent)?
        }
        (Envs::Nas { hi, lo, map }, Algo::Mfmcrl) => mfmcrl_train(hi, lo, map, &agent)?,
    };
    Ok(out.history)
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: RunSpec,
    pub run_id: String,
    pub outcome: Result<TrainingHistory, String>,
}

/// Runs every point of the sweep in memory.
pub fn execute(config: &ExperimentConfig) -> Result<Vec<RunResult>, ExperimentError> {
    config.validate()?;
    let envs = build_envs(config)?;
    let runs = config.runs();
    Ok(map_indexed(runs.len(), config.execution(), |i| {
        let spec = runs[i];
        RunResult {
            spec,
            run_id: spec.run_id(),
            outcome: run_one(&envs, config, &spec).map_err(|e| e.to_string()),
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub run_id: String,
    pub algo: Algo,
    pub seed: u64,
    pub agent_seed: u64,
    pub snr_db: Option<f64>,
    pub m: Option<usize>,
    pub status: String,
    pub error: Option<String>,
    pub file: Option<String>,
    pub rows: usize,
    pub discarded_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub toolkit_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub runs: Vec<ManifestRun>,
    pub failed: usize,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub manifest: Manifest,
    pub merged: PathBuf,
    pub results: Vec<RunResult>,
}

impl SweepOutcome {
    pub fn failed(&self) -> usize {
        self.manifest.failed
    }
}

/// Runs the sweep and writes per-run CSVs, the merged CSV and the manifest.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome, ExperimentError> {
    let results = execute(config)?;
    write_results(config, results)
}

pub fn write_results(config: &ExperimentConfig, results: Vec<RunResult>) -> Result<SweepOutcome, ExperimentError> {
    let out = &config.out;
    let runs_dir = out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;
    let mut merged_rows = Vec::new();
    let mut manifest_runs = Vec::new();
    for r in &results {
        let (status, error, file, rows, discarded) = match &r.outcome {
            Ok(history) => {
                let rows = history_rows(&r.run_id, &r.spec, history);
                let name = format!("{}.csv", r.run_id);
                let path = runs_dir.join(&name);
                let f = fs::File::create(&path).map_err(io_err(&path))?;
                write_rows(io::BufWriter::new(f), &rows)?;
                let n = rows.len();
                merged_rows.extend(rows);
                ("ok", None, Some(format!("runs/{name}")), n, history.discarded_episodes)
            }
            Err(e) => ("failed", Some(e.clone()), None, 0, 0),
        };
        manifest_runs.push(ManifestRun {
            run_id: r.run_id.clone(),
            algo: r.spec.algo,
            seed: r.spec.seed,
            agent_seed: config.agent_seed(r.spec.seed),
            snr_db: r.spec.snr_db,
            m: r.spec.m,
            status: status.into(),
            error,
            file,
            rows,
            discarded_episodes: discarded,
        });
    }
    let merged = out.join("merged.csv");
    let f = fs::File::create(&merged).map_err(io_err(&merged))?;
    write_rows(io::BufWriter::new(f), &merged_rows)?;
    let failed = manifest_runs.iter().filter(|r| r.status != "ok").count();
    let manifest = Manifest {
        toolkit_version: TOOLKIT_VERSION.into(),
        config_hash: config.hash(),
        config: config.clone(),
        runs: manifest_runs,
        failed,
    };
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&path))?;
    Ok(SweepOutcome { manifest, merged, results })
}

/// Final mean ± std across seeds for one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub algo: Algo,
    pub snr_db: Option<f64>,
    pub m: Option<usize>,
    pub runs: usize,
    pub final_mean: f64,
    pub final_std: f64,
    pub vr_factor: f64,
}

/// Mean of `eval_mean` over the last `window` checkpoints of each run,
/// then mean and sample std across runs per `(algo, snr_db, m)`.
pub fn summarize(rows: &[ResultRow], window: usize) -> Vec<ReportRow> {
    let mut per_run: BTreeMap<&str, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        per_run.entry(r.run_id.as_str()).or_default().push(r);
    }
    type Key = (Algo, Option<u64>, Option<usize>);
    let mut groups: Vec<(Key, Option<f64>, Vec<(f64, f64)>)> = Vec::new();
    for mut run in per_run.into_values() {
        run.sort_by_key(|r| r.episode);
        let tail = &run[run.len().saturating_sub(window.max(1))..];
        let fin = tail.iter().map(|r| r.eval_mean).sum::<f64>() / tail.len() as f64;
        let last = run.last().expect("non-empty run");
        let key = (last.algo, last.snr_db.map(f64::to_bits), last.m);
        match groups.iter_mut().find(|(k, _, _)| *k == key) {
            Some((_, _, v)) => v.push((fin, last.vr_factor)),
            None => groups.push((key, last.snr_db, vec![(fin, last.vr_factor)])),
        }
    }
    let mut out: Vec<ReportRow> = groups
        .into_iter()
        .map(|((algo, _, m), snr_db, v)| {
            let n = v.len() as f64;
            let mean = v.iter().map(|x| x.0).sum::<f64>() / n;
            let std = if v.len() > 1 {
                (v.iter().map(|x| (x.0 - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            ReportRow {
                algo,
                snr_db,
                m,
                runs: v.len(),
                final_mean: mean,
                final_std: std,
                vr_factor: v.iter().map(|x| x.1).sum::<f64>() / n,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        (a.algo as u8)
            .cmp(&(b.algo as u8))
            .then(a.snr_db.unwrap_or(f64::NEG_INFINITY).total_cmp(&b.snr_db.unwrap_or(f64::NEG_INFINITY)))
            .then(a.m.cmp(&b.m))
    });
    out
}

pub fn report_text(rows: &[ReportRow]) -> String {
    let mut s = format!(
        "{:<8} {:>8} {:>5} {:>5} {:>12} {:>10} {:>10}\n",
        "algo", "snr_db", "m", "runs", "final_mean", "final_std", "vr_factor"
    );
    for r in rows {
        let snr = r.snr_db.map_or("-".into(), |v| format!("{v}"));
        let m = r.m.map_or("-".into(), |v| v.to_string());
        s.push_str(&format!(
            "{:<8} {:>8} {:>5} {:>5} {:>12.4} {:>10.4} {:>10.4}\n",
            r.algo.as_str(),
            snr,
            m,
            r.runs,
            r.final_mean,
            r.final_std,
            r.vr_factor
        ));
    }
    s
}

pub fn write_report_csv<W: io::Write>(writer: W, rows: &[ReportRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
