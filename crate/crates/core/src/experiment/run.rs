use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::{ExperimentSpec, GenericMmvSpec, Solver};
use super::stats::{mean_se, MeanSe};
use crate::detection::{evaluate, receive, MetricsReport};
use crate::error::{Error, Result};
use crate::learned::{
    generate_mixed_dataset, lamp_bp_forward, lamp_mmv_forward, load_params_for, save_params, train_lamp,
    write_curve_csv, LampParams, TrainConfig, TrainingOutcome, Variant,
};
use crate::linalg::{frobenius_sq, matmul, CMatrix};
use crate::recovery::{amp_bp, amp_mmv, AlphaSchedule, AmpConfig, RecoveryResult};
use crate::rng::{complex_normal, derive_seed, rng_from_seed, Stream};
use crate::system_model::{
    draw_realization, synthesize_observation, ExpandedDictionary, Observation, SpreadingPool, SystemConfig,
    TransmissionRealization,
};
use crate::theory::{verify_uniqueness_bound, UniquenessReport, UniquenessTrialConfig};

pub const TRIALS_SCHEMA_VERSION: u32 = 1;
pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// One (sweep point, solver, trial) row of the per-trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub experiment: String,
    pub axis: String,
    pub value: Option<f64>,
    pub solver: String,
    pub trial: usize,
    pub realization_seed: u64,
    pub noise_seed: u64,
    pub realization_hash: String,
    pub status: String,
    pub error: String,
    pub f1: Option<f64>,
    pub precision_mu_p: Option<f64>,
    pub recall_mu_r: Option<f64>,
    pub nmse_db: Option<f64>,
    pub mu_data: Option<f64>,
    pub mu_data_by_convention: Option<bool>,
    pub n_active: usize,
    pub recovered_users: Option<usize>,
    pub collisions: Option<usize>,
    pub misdetections: Option<usize>,
    pub false_alarms: Option<usize>,
}

impl TrialRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    fn fill(&mut self, m: &MetricsReport) {
        self.f1 = Some(m.f1);
        self.precision_mu_p = Some(m.precision_mu_p);
        self.recall_mu_r = Some(m.recall_mu_r);
        self.nmse_db = m.nmse_db;
        self.mu_data = Some(m.mu_data);
        self.mu_data_by_convention = Some(m.mu_data_by_convention);
        self.recovered_users = Some(m.recovered_users);
        self.collisions = Some(m.collisions);
        self.misdetections = Some(m.misdetections);
        self.false_alarms = Some(m.false_alarms);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub solver: String,
    pub value: Option<f64>,
    pub n_trials: usize,
    pub n_failed: usize,
    pub f1: Option<MeanSe>,
    pub precision_mu_p: Option<MeanSe>,
    pub recall_mu_r: Option<MeanSe>,
    /// Over trials where the pilot block is nonzero.
    pub nmse_db: Option<MeanSe>,
    pub mu_data: Option<MeanSe>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub schema_version: u32,
    pub experiment: String,
    pub axis: String,
    pub cells: Vec<CellSummary>,
    pub failed_trials: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub summary: SweepSummary,
    pub records: Vec<TrialRecord>,
    pub trials_csv: PathBuf,
    pub summary_json: PathBuf,
}

impl SweepResult {
    pub fn cell(&self, solver: Solver, value: f64) -> Option<&CellSummary> {
        self.summary
            .cells
            .iter()
            .find(|c| c.solver == solver.as_str() && c.value == Some(value))
    }

    /// Successful records of one cell ordered by trial.
    pub fn trials(&self, solver: Solver, value: Option<f64>) -> Vec<&TrialRecord> {
        self.records
            .iter()
            .filter(|r| r.solver == solver.as_str() && r.value == value && r.ok())
            .collect()
    }
}

/// Groups records by `(solver, value)` in order of first appearance.
pub fn summarize(experiment: &str, axis: &str, records: &[TrialRecord]) -> SweepSummary {
    let mut order: Vec<(String, Option<u64>)> = Vec::new();
    let mut groups: BTreeMap<(String, Option<u64>), Vec<&TrialRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.solver.clone(), r.value.map(f64::to_bits));
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let cells: Vec<CellSummary> = order
        .iter()
        .map(|key| {
            let rs = &groups[key];
            let ok: Vec<&&TrialRecord> = rs.iter().filter(|r| r.ok()).collect();
            let stat = |f: fn(&TrialRecord) -> Option<f64>| mean_se(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            CellSummary {
                solver: key.0.clone(),
                value: key.1.map(f64::from_bits),
                n_trials: rs.len(),
                n_failed: rs.len() - ok.len(),
                f1: stat(|r| r.f1),
                precision_mu_p: stat(|r| r.precision_mu_p),
                recall_mu_r: stat(|r| r.recall_mu_r),
                nmse_db: stat(|r| r.nmse_db),
                mu_data: stat(|r| r.mu_data),
            }
        })
        .collect();
    SweepSummary {
        schema_version: TRIALS_SCHEMA_VERSION,
        experiment: experiment.to_string(),
        axis: axis.to_string(),
        failed_trials: cells.iter().map(|c| c.n_failed).sum(),
        cells,
    }
}

pub fn write_trials_csv(records: &[TrialRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("writing trials", path, e))
}

pub fn read_trials_csv(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let records: Vec<TrialRecord> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    if let Some(bad) = records.iter().find(|r| r.schema_version != TRIALS_SCHEMA_VERSION) {
        return Err(Error::Format {
            what: "trials csv",
            reason: format!("schema version {} (expected {TRIALS_SCHEMA_VERSION})", bad.schema_version),
        });
    }
    Ok(records)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io("writing json", path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io("creating output directory", dir, e))
}

/// Expanded dictionary of a configuration; the pool depends only on the
/// master seed and the pool dimensions.
pub fn dictionary(spec: &ExperimentSpec, cfg: &SystemConfig) -> Result<ExpandedDictionary> {
    let pool = SpreadingPool::generate(cfg, derive_seed(spec.seed, Stream::Pool, &[]))?;
    Ok(ExpandedDictionary::expand(&pool, cfg.guard))
}

/// Realization and noise seeds of trial `trial`; shared by every solver and
/// every sweep point.
pub fn trial_seeds(spec: &ExperimentSpec, trial: usize) -> (u64, u64) {
    (
        derive_seed(spec.seed, Stream::Trial, &[trial as u64, 0]),
        derive_seed(spec.seed, Stream::Trial, &[trial as u64, 1]),
    )
}

pub fn draw_trial(
    spec: &ExperimentSpec,
    cfg: &SystemConfig,
    dict: &ExpandedDictionary,
    trial: usize,
) -> Result<(TransmissionRealization, Observation)> {
    let (rs, ns) = trial_seeds(spec, trial);
    let real = draw_realization(cfg, rs)?;
    let obs = synthesize_observation(&real, dict, cfg.snr_db, ns)?;
    Ok((real, obs))
}

/// Learned parameters for the solvers of one dictionary.
#[derive(Debug, Clone, Default)]
pub struct LampSet {
    pub mmv: Option<LampParams>,
    pub bp: Option<LampParams>,
}

impl LampSet {
    fn get(&self, v: Variant) -> Option<&LampParams> {
        match v {
            Variant::Mmv => self.mmv.as_ref(),
            Variant::Bp => self.bp.as_ref(),
        }
    }
}

pub fn solve(
    solver: Solver,
    y: &CMatrix,
    dict: &ExpandedDictionary,
    cfg: &SystemConfig,
    amp: &AmpConfig,
    lamp: &LampSet,
) -> Result<RecoveryResult> {
    let learned = |v: Variant| {
        lamp.get(v)
            .ok_or_else(|| Error::config("lamp", format!("no trained parameters for `{solver}`")))
    };
    match solver {
        Solver::Amp => amp_mmv(y, dict, amp),
        Solver::AmpBp => amp_bp(y, dict, amp, cfg.n_antennas, cfg.n_slots()),
        Solver::Lamp => lamp_mmv_forward(y, dict, learned(Variant::Mmv)?),
        Solver::LampBp => lamp_bp_forward(y, dict, learned(Variant::Bp)?),
    }
}

fn base_record(spec: &ExperimentSpec, value: Option<f64>, solver: Solver, trial: usize, n_active: usize) -> TrialRecord {
    let (rs, ns) = trial_seeds(spec, trial);
    TrialRecord {
        schema_version: TRIALS_SCHEMA_VERSION,
        experiment: spec.name.clone(),
        axis: spec.sweep_axis.map_or("none", |a| a.as_str()).to_string(),
        value,
        solver: solver.as_str().to_string(),
        trial,
        realization_seed: rs,
        noise_seed: ns,
        realization_hash: String::new(),
        status: "ok".into(),
        error: String::new(),
        f1: None,
        precision_mu_p: None,
        recall_mu_r: None,
        nmse_db: None,
        mu_data: None,
        mu_data_by_convention: None,
        n_active,
        recovered_users: None,
        collisions: None,
        misdetections: None,
        false_alarms: None,
    }
}

fn run_solver(
    spec: &ExperimentSpec,
    solver: Solver,
    cfg: &SystemConfig,
    dict: &ExpandedDictionary,
    lamp: &LampSet,
    real: &TransmissionRealization,
    obs: &Observation,
) -> Result<(RecoveryResult, MetricsReport)> {
    let result = solve(solver, &obs.y, dict, cfg, &spec.amp, lamp)?;
    let out = receive(&result.x_hat, cfg, &spec.detection, obs.noise_var)?;
    let metrics = evaluate(real, &out)?;
    Ok((result, metrics))
}

/// All solvers of the experiment on one common realization.
fn run_trial(
    spec: &ExperimentSpec,
    value: Option<f64>,
    cfg: &SystemConfig,
    dict: &ExpandedDictionary,
    lamp: &LampSet,
    trial: usize,
) -> Vec<TrialRecord> {
    let drawn = draw_trial(spec, cfg, dict, trial);
    spec.solvers
        .iter()
        .map(|&solver| {
            let mut rec = base_record(spec, value, solver, trial, cfg.n_active);
            match &drawn {
                Err(e) => {
                    rec.status = "failed".into();
                    rec.error = e.to_string();
                }
                Ok((real, obs)) => {
                    rec.realization_hash = real.fingerprint();
                    match run_solver(spec, solver, cfg, dict, lamp, real, obs) {
                        Ok((_, m)) => rec.fill(&m),
                        Err(e) => {
                            rec.status = "failed".into();
                            rec.error = e.to_string();
                        }
                    }
                }
            }
            rec
        })
        .collect()
}

/// Generate, solve, detect and score trial 0 at the first sweep point (or
/// the base configuration) with the experiment's single solver.
pub fn run_single(spec: &ExperimentSpec) -> Result<(RecoveryResult, MetricsReport, TrialRecord)> {
    spec.validate()?;
    if spec.solvers.len() != 1 {
        return Err(Error::config("solvers", "a single solve needs exactly one solver"));
    }
    if spec.generic.is_some() {
        return Err(Error::config("generic", "single solves run on the access model"));
    }
    let solver = spec.solvers[0];
    let value = spec.sweep_axis.map(|_| spec.sweep_values[0]);
    let cfg = value.map_or_else(|| spec.system.clone(), |v| spec.point_config(v));
    if cfg.n_active == 0 {
        log::warn!("no active users: detections will be empty and mu_data is 1 by convention");
    }
    let dict = dictionary(spec, &cfg)?;
    let lamp = lamp_for(spec, &cfg, &dict, None)?;
    let (real, obs) = draw_trial(spec, &cfg, &dict, 0)?;
    let (rs, ns) = trial_seeds(spec, 0);
    log::info!(
        "solve {solver}: pool seed {}, realization seed {rs}, noise seed {ns}, realization {}",
        derive_seed(spec.seed, Stream::Pool, &[]),
        real.fingerprint()
    );
    let (result, metrics) = run_solver(spec, solver, &cfg, &dict, &lamp, &real, &obs)?;
    let mut rec = base_record(spec, value, solver, 0, cfg.n_active);
    rec.realization_hash = real.fingerprint();
    rec.fill(&metrics);
    Ok((result, metrics, rec))
}

/// Full factorial of sweep values × solvers with common random numbers.
/// Failed trials are recorded and counted; the sweep continues.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepResult> {
    spec.validate()?;
    ensure_dir(&spec.output_dir)?;
    let records = match &spec.generic {
        Some(g) => generic_records(spec, g),
        None => {
            let mut cache: BTreeMap<String, LampSet> = BTreeMap::new();
            let mut records = Vec::new();
            for v in spec.points() {
                let value = spec.sweep_axis.map(|_| v);
                let cfg = value.map_or_else(|| spec.system.clone(), |v| spec.point_config(v));
                if cfg.n_active == 0 {
                    log::warn!("sweep point {v}: no active users, mu_data is 1 by convention");
                }
                let dict = dictionary(spec, &cfg)?;
                let lamp = match cache.get(dict.content_hash()) {
                    Some(l) => l.clone(),
                    None => {
                        let l = lamp_for(spec, &cfg, &dict, Some(&spec.output_dir))?;
                        cache.insert(dict.content_hash().to_string(), l.clone());
                        l
                    }
                };
                let mut point: Vec<TrialRecord> = (0..spec.n_trials)
                    .into_par_iter()
                    .flat_map_iter(|t| run_trial(spec, value, &cfg, &dict, &lamp, t))
                    .collect();
                let rank = |s: &str| spec.solvers.iter().position(|x| x.as_str() == s);
                point.sort_by_key(|r| (rank(&r.solver), r.trial));
                log::info!("{} = {v}: {} trials done", spec.sweep_axis.map_or("point", |a| a.as_str()), spec.n_trials);
                records.extend(point);
            }
            records
        }
    };
    let axis = spec.sweep_axis.map_or("none", |a| a.as_str());
    let summary = summarize(&spec.name, axis, &records);
    if summary.failed_trials > 0 {
        log::warn!("{} trials failed", summary.failed_trials);
    }
    let trials_csv = spec.output_dir.join(TRIALS_FILE);
    let summary_json = spec.output_dir.join(SUMMARY_FILE);
    write_trials_csv(&records, &trials_csv)?;
    write_json(&summary, &summary_json)?;
    Ok(SweepResult {
        summary,
        records,
        trials_csv,
        summary_json,
    })
}

/// Learned parameters for every learned solver of the experiment: loaded when a
/// file is configured, trained otherwise (artifacts go to `save_dir`).
fn lamp_for(spec: &ExperimentSpec, cfg: &SystemConfig, dict: &ExpandedDictionary, save_dir: Option<&Path>) -> Result<LampSet> {
    let mut set = LampSet::default();
    for variant in spec.solvers.iter().filter_map(|s| s.variant()) {
        let params = match spec.lamp.params_path(variant) {
            Some(path) => load_params_for(path, dict)?,
            None => {
                let outcome = train_for(spec, &spec.system_for_training(cfg), dict, variant)?;
                if let Some(dir) = save_dir {
                    let tag = &dict.content_hash()[..12.min(dict.content_hash().len())];
                    save_params(&outcome.params, &dir.join(format!("lamp_{}_{tag}.params", variant.as_str())))?;
                    write_curve_csv(&outcome.curve, &dir.join(format!("lamp_{}_{tag}_curve.csv", variant.as_str())))?;
                }
                outcome.params
            }
        };
        match variant {
            Variant::Mmv => set.mmv = Some(params),
            Variant::Bp => set.bp = Some(params),
        }
    }
    Ok(set)
}

impl ExperimentSpec {
    /// Configuration training data is drawn from at a sweep point: the
    /// point's geometry with the base load and SNR.
    fn system_for_training(&self, point: &SystemConfig) -> SystemConfig {
        SystemConfig {
            n_active: self.system.n_active,
            snr_db: self.system.snr_db,
            ..point.clone()
        }
    }

    pub fn lamp_init(&self, dict: &ExpandedDictionary, cfg: &SystemConfig, variant: Variant) -> Result<LampParams> {
        let amp = AmpConfig {
            n_iters: self.lamp.n_layers,
            ..self.amp.clone()
        };
        LampParams::from_amp(dict, &amp, variant, cfg.n_antennas, cfg.n_slots(), self.lamp.shared_b)
    }

    fn train_config(&self, variant: Variant) -> TrainConfig {
        let idx = match variant {
            Variant::Mmv => 0,
            Variant::Bp => 1,
        };
        TrainConfig {
            seed: derive_seed(self.seed, Stream::Training, &[idx]),
            ..self.train.clone()
        }
    }
}

/// Builds the training set and trains one network for `dict`.
pub fn train_for(spec: &ExperimentSpec, cfg: &SystemConfig, dict: &ExpandedDictionary, variant: Variant) -> Result<TrainingOutcome> {
    let loads = if spec.lamp.train_n_active.is_empty() {
        vec![cfg.n_active]
    } else {
        spec.lamp.train_n_active.clone()
    };
    log::info!("generating {} training pairs (loads {loads:?})", spec.lamp.dataset_size);
    let data = generate_mixed_dataset(cfg, dict, spec.lamp.dataset_size, derive_seed(spec.seed, Stream::Dataset, &[]), &loads)?;
    let init = spec.lamp_init(dict, cfg, variant)?;
    let outcome = train_lamp(&data, dict, &init, &spec.train_config(variant), variant)?;
    if outcome.diverged {
        log::warn!("{} training hit a non-finite loss; some learning-rate levels were cut short", variant.as_str());
    }
    Ok(outcome)
}

#[derive(Debug, Clone)]
pub struct TrainingArtifact {
    pub variant: Variant,
    pub outcome: TrainingOutcome,
    pub params_path: PathBuf,
    pub curve_path: PathBuf,
}

/// Trains every learned solver listed in the experiment at the base configuration
/// and writes `lamp_<variant>.params` and `lamp_<variant>_curve.csv`.
pub fn run_training(spec: &ExperimentSpec) -> Result<Vec<TrainingArtifact>> {
    spec.validate()?;
    let variants: Vec<Variant> = spec.solvers.iter().filter_map(|s| s.variant()).collect();
    if variants.is_empty() {
        return Err(Error::config("solvers", "training needs `lamp` or `lamp_bp`"));
    }
    ensure_dir(&spec.output_dir)?;
    let cfg = &spec.system;
    let dict = dictionary(spec, cfg)?;
    variants
        .into_iter()
        .map(|variant| {
            let outcome = train_for(spec, cfg, &dict, variant)?;
            let params_path = spec.output_dir.join(format!("lamp_{}.params", variant.as_str()));
            let curve_path = spec.output_dir.join(format!("lamp_{}_curve.csv", variant.as_str()));
            save_params(&outcome.params, &params_path)?;
            write_curve_csv(&outcome.curve, &curve_path)?;
            Ok(TrainingArtifact {
                variant,
                outcome,
                params_path,
                curve_path,
            })
        })
        .collect()
}

pub fn run_theory_check(cfg: &UniquenessTrialConfig) -> Result<UniquenessReport> {
    let report = verify_uniqueness_bound(cfg)?;
    log::info!(
        "uniqueness: {}/{} trials at sparsity {} ({:.1}s)",
        report.unique_trials,
        cfg.trials,
        report.sparsity,
        report.wall_time_s
    );
    Ok(report)
}

/// Normalized squared error in dB of a generic MMV estimate.
fn generic_nmse_db(est: &CMatrix, truth: &CMatrix) -> Option<f64> {
    let e = truth.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if e == 0.0 {
        return None;
    }
    let err: f64 = est.iter().zip(truth.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
    Some(10.0 * (err / e).log10())
}

/// Gaussian instance of trial `trial`: unit-norm dictionary columns,
/// `CN(0,1)` nonzero rows and noise at the configured SNR.
pub fn generic_instance(spec: &ExperimentSpec, g: &GenericMmvSpec, trial: usize) -> Result<(ExpandedDictionary, CMatrix, CMatrix)> {
    let (rs, ns) = trial_seeds(spec, trial);
    let mut rng = rng_from_seed(rs);
    let raw = CMatrix::from_fn(g.m_dim, g.n_dim, |_, _| complex_normal(&mut rng, 1.0));
    let dict = ExpandedDictionary::from_matrix(SpreadingPool::normalized(raw)?.matrix().clone());
    let mut x = CMatrix::zeros(g.n_dim, g.n_columns);
    for row in sample(&mut rng, g.n_dim, g.n_nonzero) {
        for j in 0..g.n_columns {
            x[(row, j)] = complex_normal(&mut rng, 1.0);
        }
    }
    let mut y = matmul(dict.matrix(), &x);
    let power = frobenius_sq(&y) / (y.len().max(1)) as f64;
    let var = if power > 0.0 && g.snr_db.is_finite() { power / 10f64.powf(g.snr_db / 10.0) } else { 0.0 };
    let mut nrng = rng_from_seed(ns);
    y.iter_mut().for_each(|z| *z += complex_normal(&mut nrng, var));
    Ok((dict, x, y))
}

fn generic_records(spec: &ExperimentSpec, g: &GenericMmvSpec) -> Vec<TrialRecord> {
    let per_trial: Vec<Vec<TrialRecord>> = (0..spec.n_trials)
        .into_par_iter()
        .map(|t| {
            let inst = generic_instance(spec, g, t);
            spec.sweep_values
                .iter()
                .map(|&alpha| {
                    let mut rec = base_record(spec, Some(alpha), Solver::Amp, t, g.n_nonzero);
                    let amp = AmpConfig {
                        alpha: AlphaSchedule::Constant(alpha),
                        ..spec.amp.clone()
                    };
                    let out = inst
                        .as_ref()
                        .map_err(|e| e.to_string())
                        .and_then(|(dict, x, y)| amp_mmv(y, dict, &amp).map(|r| (r, x)).map_err(|e| e.to_string()));
                    match out {
                        Ok((r, x)) => rec.nmse_db = generic_nmse_db(&r.x_hat, x),
                        Err(e) => {
                            rec.status = "failed".into();
                            rec.error = e;
                        }
                    }
                    rec
                })
                .collect()
        })
        .collect();
    let mut records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let rank = |v: Option<f64>| spec.sweep_values.iter().position(|x| Some(*x) == v);
    records.sort_by_key(|r| (rank(r.value), r.trial));
    records
}

/// Rebuilds the aggregate summary from a per-trial CSV.
pub fn report(trials_csv: &Path, summary_json: &Path) -> Result<SweepSummary> {
    let records = read_trials_csv(trials_csv)?;
    let (experiment, axis) = records
        .first()
        .map(|r| (r.experiment.clone(), r.axis.clone()))
        .unwrap_or_default();
    let summary = summarize(&experiment, &axis, &records);
    write_json(&summary, summary_json)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentSpec {
        ExperimentSpec {
            n_trials: 6,
            output_dir: tempfile::tempdir().unwrap().keep(),
            ..ExperimentSpec::preset("tiny-noiseless").unwrap()
        }
    }

    #[test]
    fn tiny_noiseless_solve_is_exact() {
        let (res, m, rec) = run_single(&tiny()).unwrap();
        assert_eq!(m.f1, 1.0);
        assert!(m.nmse_db.unwrap() <= -40.0, "{:?}", m.nmse_db);
        assert_eq!(rec.f1, Some(1.0));
        assert_eq!(res.stages.len(), 4);
    }

    #[test]
    fn empty_preset_detects_nothing() {
        let spec = ExperimentSpec::preset("empty").unwrap();
        let (_, m, _) = run_single(&spec).unwrap();
        assert_eq!(m.mu_data, 1.0);
        assert!(m.mu_data_by_convention);
        assert_eq!(m.false_alarms, 0);
    }

    #[test]
    fn sweeps_share_realizations_and_are_reproducible() {
        let mut spec = tiny();
        spec.solvers = vec![Solver::Amp, Solver::AmpBp];
        spec.sweep_axis = Some(super::super::SweepAxis::SnrDb);
        spec.sweep_values = vec![10.0, 20.0];
        let a = run_sweep(&spec).unwrap();
        let bytes = std::fs::read(&a.trials_csv).unwrap();
        let b = run_sweep(&spec).unwrap();
        assert_eq!(bytes, std::fs::read(&b.trials_csv).unwrap());
        assert_eq!(a.records.len(), 2 * 2 * spec.n_trials);
        for v in [10.0, 20.0] {
            let amp = a.trials(Solver::Amp, Some(v));
            let bp = a.trials(Solver::AmpBp, Some(v));
            for (x, y) in amp.iter().zip(&bp) {
                assert_eq!(x.realization_hash, y.realization_hash);
            }
            assert_eq!(a.cell(Solver::Amp, v).unwrap().n_trials, spec.n_trials);
        }
        let rebuilt = report(&a.trials_csv, &spec.output_dir.join("again.json")).unwrap();
        assert_eq!(rebuilt.cells, a.summary.cells);
    }

    #[test]
    fn missing_parameters_fail_the_trial_not_the_sweep() {
        let spec = tiny();
        let dict = dictionary(&spec, &spec.system).unwrap();
        let recs = run_trial(
            &ExperimentSpec { solvers: vec![Solver::Lamp], ..spec.clone() },
            None,
            &spec.system,
            &dict,
            &LampSet::default(),
            0,
        );
        assert_eq!(recs.len(), 1);
        assert!(!recs[0].ok());
        assert!(recs[0].error.contains("lamp"));
        let s = summarize("x", "none", &recs);
        assert_eq!(s.failed_trials, 1);
    }

    #[test]
    fn generic_instances_have_the_requested_sparsity() {
        let spec = ExperimentSpec::preset("paper-fig5").unwrap();
        let g = spec.generic.clone().unwrap();
        let (dict, x, y) = generic_instance(&spec, &g, 0).unwrap();
        assert_eq!((dict.n_rows(), dict.n_columns()), (200, 500));
        assert_eq!(y.shape(), (200, 4));
        let rows = (0..x.nrows()).filter(|&i| x.row(i).iter().any(|z| z.norm() > 0.0)).count();
        assert_eq!(rows, g.n_nonzero);
    }
}
