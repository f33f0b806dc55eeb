use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gfra::experiment::{
    dictionary, draw_trial, report, run_single, run_sweep, run_theory_check, run_training, trial_seeds, write_json,
    write_trials_csv, ExperimentSpec, SweepAxis, PRESET_NAMES,
};
use gfra::io::{MatrixFile, LAYOUT_SYMBOL_MAJOR};
use gfra::rng::{derive_seed, Stream};
use gfra::system_model::SeedRecord;
use gfra::theory::UniquenessTrialConfig;
use gfra::{Error, Result};

#[derive(Parser)]
#[command(name = "gfra", version, about = "Grant-free random access receivers: AMP, AMP-BP and learned variants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment file; applied on top of the preset when both are given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, help = format!("Named preset: {}", PRESET_NAMES.join(", ")))]
    preset: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated subset of amp, amp_bp, lamp, lamp_bp.
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<String>>,
    /// One of n_active, seq_len, snr_db, guard, alpha.
    #[arg(long)]
    axis: Option<String>,
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Override any experiment field, e.g. `--set system.n_active=12`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the dictionary, ground truth and observation of one trial.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        trial: usize,
    },
    /// Solve, detect and score one trial with a single solver.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Monte-Carlo sweep over one configuration axis.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Train the learned solvers of the experiment and save their parameters.
    Train {
        #[command(flatten)]
        common: Common,
        /// Step cap per learning-rate level and subnetwork.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        dataset_size: Option<usize>,
    },
    /// Brute-force check of the uniqueness bound.
    TheoryCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m_dim: Option<usize>,
        #[arg(long)]
        n_dim: Option<usize>,
        #[arg(long)]
        l_dim: Option<usize>,
        #[arg(long)]
        r_known: Option<usize>,
    },
    /// Rebuild the aggregate summary from a per-trial CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn apply_override(spec: &ExperimentSpec, kv: &str) -> Result<ExperimentSpec> {
    let (key, value) = kv
        .split_once('=')
        .ok_or_else(|| Error::Format { what: "override", reason: format!("`{kv}` is not KEY=VALUE") })?;
    let mut doc: toml::Table = toml::from_str(&spec.to_toml())?;
    let parsed: toml::Value = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .map(|mut t| t.remove("v").unwrap())
        .unwrap_or_else(|_| toml::Value::String(value.to_string()));
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    let last = parts.pop().unwrap_or_default();
    let mut table = &mut doc;
    for p in parts {
        table = table
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Format { what: "override", reason: format!("`{p}` is not a table") })?;
    }
    table.insert(last.to_string(), parsed);
    ExperimentSpec::from_toml(&toml::to_string(&doc).unwrap_or_default())
}

fn build_spec(c: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &c.preset {
        Some(p) => ExperimentSpec::preset(p)?,
        None => ExperimentSpec::default(),
    };
    if let Some(path) = &c.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io("reading config", path, e))?;
        let overlay: toml::Table = toml::from_str(&text)?;
        let mut doc: toml::Table = toml::from_str(&spec.to_toml())?;
        merge(&mut doc, overlay);
        spec = ExperimentSpec::from_toml(&toml::to_string(&doc).unwrap_or_default())?;
    }
    for kv in &c.overrides {
        spec = apply_override(&spec, kv)?;
    }
    if let Some(s) = c.seed {
        spec.seed = s;
    }
    if let Some(o) = &c.out {
        spec.output_dir = o.clone();
    }
    if let Some(t) = c.trials {
        spec.n_trials = t;
    }
    if let Some(list) = &c.solvers {
        spec.solvers = list.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    }
    if let Some(a) = &c.axis {
        spec.sweep_axis = Some(a.parse::<SweepAxis>()?);
    }
    if let Some(v) = &c.values {
        spec.sweep_values = v.clone();
    }
    spec.validate()?;
    Ok(spec)
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn prepare_out(spec: &ExperimentSpec) -> Result<()> {
    let dir = &spec.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io("creating output directory", dir, e))?;
    let path = dir.join("spec.toml");
    std::fs::write(&path, spec.to_toml()).map_err(|e| Error::io("writing spec", path, e))
}

fn write_matrix(dir: &Path, name: &str, seeds: &SeedRecord, m: &gfra::linalg::CMatrix) -> Result<()> {
    MatrixFile {
        name: name.into(),
        layout: LAYOUT_SYMBOL_MAJOR.into(),
        seeds: seeds.clone(),
        matrix: m.clone(),
    }
    .write(&dir.join(format!("{name}.txt")))
}

/// Returns whether every requested trial completed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { common, trial } => {
            let spec = build_spec(&common)?;
            prepare_out(&spec)?;
            let cfg = spec.sweep_axis.map_or_else(|| spec.system.clone(), |_| spec.point_config(spec.sweep_values[0]));
            let dict = dictionary(&spec, &cfg)?;
            let (real, obs) = draw_trial(&spec, &cfg, &dict, trial)?;
            let (rs, _) = trial_seeds(&spec, trial);
            let pool_seed = derive_seed(spec.seed, Stream::Pool, &[]);
            let out = &spec.output_dir;
            write_matrix(out, "dictionary", &SeedRecord::new(Some(pool_seed), None, None), dict.matrix())?;
            write_matrix(out, "x_true", &SeedRecord::new(Some(pool_seed), Some(rs), None), real.x_true())?;
            write_matrix(out, "y", &obs.seeds, &obs.y)?;
            log::info!("trial {trial}: realization {} noise variance {:e}", real.fingerprint(), obs.noise_var);
            Ok(true)
        }
        Command::Solve { common } => {
            let spec = build_spec(&common)?;
            prepare_out(&spec)?;
            let (result, metrics, record) = run_single(&spec)?;
            write_trials_csv(std::slice::from_ref(&record), &spec.output_dir.join("solve.csv"))?;
            write_json(&metrics, &spec.output_dir.join("metrics.json"))?;
            write_matrix(
                &spec.output_dir,
                "x_hat",
                &SeedRecord::new(None, Some(record.realization_seed), Some(record.noise_seed)),
                &result.x_hat,
            )?;
            println!(
                "f1 {:.4}  mu_p {:.4}  mu_r {:.4}  nmse_db {}  mu_data {:.4}",
                metrics.f1,
                metrics.precision_mu_p,
                metrics.recall_mu_r,
                metrics.nmse_db.map_or("n/a".into(), |v| format!("{v:.2}")),
                metrics.mu_data
            );
            Ok(true)
        }
        Command::Sweep { common } => {
            let spec = build_spec(&common)?;
            prepare_out(&spec)?;
            let res = run_sweep(&spec)?;
            for c in &res.summary.cells {
                let fmt = |m: &Option<gfra::experiment::MeanSe>| m.map_or("n/a".into(), |m| format!("{:.4}±{:.4}", m.mean, m.se));
                println!(
                    "{:>8} {:>7}  f1 {}  mu_data {}  nmse_db {}  failed {}",
                    c.solver,
                    c.value.map_or("-".into(), |v| v.to_string()),
                    fmt(&c.f1),
                    fmt(&c.mu_data),
                    fmt(&c.nmse_db),
                    c.n_failed
                );
            }
            println!("trials: {}", res.trials_csv.display());
            Ok(res.summary.failed_trials == 0)
        }
        Command::Train { common, steps, dataset_size } => {
            let mut spec = build_spec(&common)?;
            if let Some(s) = steps {
                spec.train.max_steps_per_stage = s;
            }
            if let Some(n) = dataset_size {
                spec.lamp.dataset_size = n;
            }
            spec.validate()?;
            prepare_out(&spec)?;
            for a in run_training(&spec)? {
                println!(
                    "{}: {} steps{}  params {}  curve {}",
                    a.variant.as_str(),
                    a.outcome.steps,
                    if a.outcome.diverged { " (diverged)" } else { "" },
                    a.params_path.display(),
                    a.curve_path.display()
                );
            }
            Ok(true)
        }
        Command::TheoryCheck { common, m_dim, n_dim, l_dim, r_known } => {
            let mut c = common.clone();
            if c.preset.is_none() && c.config.is_none() {
                c.preset = Some("theory".into());
            }
            let spec = build_spec(&c)?;
            prepare_out(&spec)?;
            let base = spec.theory.clone().unwrap_or(UniquenessTrialConfig {
                m_dim: 6,
                n_dim: 12,
                l_dim: 2,
                r_known: 0,
                trials: 100,
                seed: 0,
            });
            let cfg = UniquenessTrialConfig {
                m_dim: m_dim.unwrap_or(base.m_dim),
                n_dim: n_dim.unwrap_or(base.n_dim),
                l_dim: l_dim.unwrap_or(base.l_dim),
                r_known: r_known.unwrap_or(base.r_known),
                trials: common.trials.unwrap_or(base.trials),
                seed: common.seed.unwrap_or(base.seed),
            };
            let r = run_theory_check(&cfg)?;
            let path = spec.output_dir.join("theory.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record([
                "m_dim", "n_dim", "l_dim", "r_known", "trials", "seed", "sparsity", "unique_trials", "unique_fraction",
                "planted_found", "redraws",
            ])?;
            w.write_record([
                cfg.m_dim.to_string(),
                cfg.n_dim.to_string(),
                cfg.l_dim.to_string(),
                cfg.r_known.to_string(),
                cfg.trials.to_string(),
                cfg.seed.to_string(),
                r.sparsity.to_string(),
                r.unique_trials.to_string(),
                r.unique_fraction.to_string(),
                r.planted_found.to_string(),
                r.redraws.to_string(),
            ])?;
            w.flush().map_err(|e| Error::io("writing theory report", &path, e))?;
            println!("sparsity {}: {}/{} trials unique", r.sparsity, r.unique_trials, cfg.trials);
            Ok(true)
        }
        Command::Report { input, out } => {
            let out = out.unwrap_or_else(|| input.with_file_name("summary.json"));
            let s = report(&input, &out)?;
            println!("{} cells, {} failed trials -> {}", s.cells.len(), s.failed_trials, out.display());
            Ok(s.failed_trials == 0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("some trials failed");
            ExitCode::from(2)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
