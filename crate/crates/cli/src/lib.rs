//! `copra-beam`: configuration loading, sweeps, single-trial reports and
//! SVG charts for the beamforming experiments in `copra-core`.

pub mod config;
pub mod output;
pub mod plot;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use copra_core::harness::{run_sweep, run_trial, SweepKind, SweepSpec, TrialRecord};
use thiserror::Error;

pub use config::{load_config, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error(transparent)]
    Core(#[from] copra_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv row {row}: {reason}")]
    Csv { row: usize, reason: String },
    #[error("csv: {0}")]
    CsvLib(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Parser)]
#[command(name = "copra-beam", version, about = "Robust MVDR beamforming Monte-Carlo experiments")]
pub struct Cli {
    /// TOML experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for `sweep`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, overrides the config (0 = automatic).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Snr,
    Snapshots,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep SNR or snapshot count and write CSV, SVG and metadata.
    Sweep {
        #[arg(long, value_enum, default_value = "snr")]
        kind: Kind,
    },
    /// Run one trial and print its diagnostics.
    Trial {
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long)]
        no_interferers: bool,
        #[arg(long, allow_hyphen_values = true)]
        snr_db: Option<f64>,
    },
    /// Render an emitted CSV as an SVG chart.
    Plot { csv: PathBuf, svg: PathBuf },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let out = |r: std::io::Result<()>| r.map_err(io_err(Path::new("stdout")));
    match &cli.command {
        Command::Sweep { kind } => {
            let cfg = resolve_config(cli)?;
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let written = cmd_sweep(&cfg, *kind, &dir)?;
            if cli.json {
                out(writeln!(stdout, "{}", serde_json::to_string(&written)?))
            } else {
                for p in written {
                    out(writeln!(stdout, "wrote {}", p.display()))?;
                }
                Ok(())
            }
        }
        Command::Trial {
            index,
            no_interferers,
            snr_db,
        } => {
            let mut cfg = resolve_config(cli)?;
            if *no_interferers {
                cfg.n_interferers = 0;
            }
            let rec = cmd_trial(&cfg, *index, snr_db.unwrap_or(cfg.snr_db))?;
            if cli.json {
                out(writeln!(stdout, "{}", serde_json::to_string(&rec)?))
            } else {
                out(stdout.write_all(trial_report(&rec).as_bytes()))
            }
        }
        Command::Plot { csv, svg } => cmd_plot(csv, svg),
    }
}

/// Runs the sweep and writes `sweep.csv`, `sweep.svg`, `meta.json` and
/// `config.toml` into `dir`. Returns the written paths.
pub fn cmd_sweep(cfg: &ExperimentConfig, kind: Kind, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    cfg.validate()?;
    let (sweep_kind, values, base) = match kind {
        Kind::Snr => (SweepKind::SnrDb, cfg.snr_db_grid.clone(), cfg.trial_config(cfg.snr_db)),
        Kind::Snapshots => (
            SweepKind::NSnapshots,
            cfg.snapshot_grid.iter().map(|&n| n as f64).collect(),
            cfg.trial_config(cfg.snr_db),
        ),
    };
    let spec = SweepSpec {
        kind: sweep_kind,
        values,
        trials: cfg.trials,
        workers: cfg.workers,
        aggregation: cfg.aggregation,
    };
    let result = run_sweep(&base, &spec, cfg.seed)?;

    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut csv_bytes = Vec::new();
    output::write_csv(&result, &mut csv_bytes)?;
    let rows = output::read_csv(csv_bytes.as_slice())?;
    let svg = plot::render_svg(&rows)?;
    let meta = output::SweepMeta::new(cfg, &result);

    let files = [
        ("sweep.csv", csv_bytes),
        ("sweep.svg", svg.into_bytes()),
        ("meta.json", format!("{}\n", serde_json::to_string_pretty(&meta)?).into_bytes()),
        ("config.toml", cfg.to_toml_string()?.into_bytes()),
    ];
    let mut written = Vec::new();
    for (name, bytes) in files {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(io_err(&p))?;
        written.push(p);
    }
    Ok(written)
}

pub fn cmd_trial(cfg: &ExperimentConfig, index: u64, snr_db: f64) -> Result<TrialRecord, CliError> {
    cfg.validate()?;
    Ok(run_trial(&cfg.trial_config(snr_db), index, cfg.seed)?)
}

pub fn cmd_plot(csv_path: &Path, svg_path: &Path) -> Result<(), CliError> {
    let f = fs::File::open(csv_path).map_err(io_err(csv_path))?;
    let rows = output::read_csv(f)?;
    let svg = plot::render_svg(&rows)?;
    fs::write(svg_path, svg).map_err(io_err(svg_path))
}

fn opt(v: Option<f64>) -> String {
    v.map(output::fmt_sig).unwrap_or_else(|| "-".into())
}

pub fn trial_report(r: &TrialRecord) -> String {
    let mut s = String::new();
    let flag = |fallback: bool, converged: bool| {
        if fallback {
            "FALLBACK"
        } else if converged {
            "converged"
        } else {
            "not converged"
        }
    };
    s += &format!("trial {} (substream seed {:#018x})\n", r.trial_index, r.seed);
    s += &format!(
        "SOI doa {} deg, presumed error {} deg, SNR {} dB\n",
        output::fmt_sig(r.scenario.soi_doa_deg),
        output::fmt_sig(r.scenario.soi_error_deg),
        output::fmt_sig(r.scenario.snr_db)
    );
    let doas: Vec<String> = r.scenario.interferer_doas_deg.iter().map(|&d| output::fmt_sig(d)).collect();
    s += &format!("interferers [{}]\n", doas.join(", "));
    s += &format!(
        "split n1 = {}, n2 = {}\n",
        r.n1.map_or("-".into(), |v| v.to_string()),
        r.n2.map_or("-".into(), |v| v.to_string())
    );
    s += &format!("gamma_b {} {}\n", opt(r.gamma_b), flag(r.gamma_b_fallback, r.gamma_b_converged));
    s += &format!("gamma_z {} {}\n", opt(r.gamma_z), flag(r.gamma_z_fallback, r.gamma_z_converged));
    if r.mvdr_loaded {
        s += "sample-mvdr used rescue loading\n";
    }
    for o in &r.outcomes {
        match (o.sinr, &o.failure) {
            (Some(v), _) => s += &format!("{:<18} {:>12} dB\n", o.method.as_str(), output::fmt_sig(10.0 * v.log10())),
            (None, Some(e)) => s += &format!("{:<18} failed: {e}\n", o.method.as_str()),
            (None, None) => s += &format!("{:<18} -\n", o.method.as_str()),
        }
    }
    s
}
