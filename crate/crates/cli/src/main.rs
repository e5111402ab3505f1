use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use qmem::config::{Config, Overrides};
use qmem::dynamics::{noise_run, run_protocol, MemoryRun};
use qmem::metrics::{apparent_fidelity, efficiency, regime_of, storage_time_scan};
use qmem::pulse::Window;
use qmem::reduced::{audit, rate_report, reduced_noise_run, reduced_protocol};
use qmem::sweep::{sweep, SweepPlan};

/// Cavity-based Λ quantum memory simulator.
#[derive(Debug, Parser)]
#[command(name = "qmem", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Worker threads for scans and sweeps.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Args)]
struct Source {
    /// Configuration file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: nv, four-level or rb. Default nv.
    #[arg(long)]
    preset: Option<String>,
    /// Override a configuration value, e.g. `couplings.G.3.8.scale=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Source {
    fn load(&self) -> Result<Config> {
        let o = Overrides::from_assignments(&self.set)?;
        let cfg = match (&self.config, &self.preset) {
            (Some(p), _) => Config::load_with(p, &o)?,
            (None, name) => Config::preset(name.as_deref().unwrap_or("nv"))?.with_overrides(&o)?,
        };
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Full,
    Reduced,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Write a built-in configuration to a file (or stdout).
    Preset {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Store and retrieve the signal pulse; report the apparent efficiency.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Model::Full)]
        model: Model,
        /// Time-series CSV of the output field.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add every state variable to the time series.
        #[arg(long)]
        state: bool,
        /// Also run without input and report the apparent fidelity.
        #[arg(long)]
        with_noise: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run the protocol without input; report the apparent fidelity.
    Noise {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Model::Full)]
        model: Model,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        state: bool,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Apparent efficiency (and fidelity) against storage time.
    ScanStorage {
        #[command(flatten)]
        source: Source,
        /// Explicit storage times [s], comma separated.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        /// First storage time [s] of an evenly spaced scan.
        #[arg(long)]
        from: Option<f64>,
        /// Last storage time [s].
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = 20)]
        points: usize,
        /// Skip the noise runs.
        #[arg(long)]
        no_noise: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a sweep plan over a parameter grid.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Four-wave-mixing rate and growth exponents of the reduced model.
    Rate {
        #[command(flatten)]
        source: Source,
        /// Control amplitude; the schedule's peak when absent.
        #[arg(long)]
        amp: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Rank the amplification channels through every spectator level.
    Audit {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<qmem::Error>() {
            return match e {
                qmem::Error::Io { .. } => 3,
                e if e.is_numerical() => 2,
                _ => 1,
            };
        }
        if cause.downcast_ref::<io::Error>().is_some() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.cmd {
        Cmd::Preset { name, out } => {
            let text = Config::preset(&name)?.to_toml_string()?;
            match out {
                Some(p) => fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => io::stdout().write_all(text.as_bytes())?,
            }
            Ok(())
        }
        Cmd::Run {
            source,
            model,
            out,
            state,
            with_noise,
            format,
        } => {
            let cfg = source.load()?;
            let run = simulate(&cfg, model, false, state)?;
            let e_sel = efficiency(&run, cfg.schedule.window)?;
            let e_ret = efficiency(&run, Window::Retrieval)?;
            let e_tot = efficiency(&run, Window::Total)?;
            let mut report = json!({
                "model": format!("{model:?}").to_lowercase(),
                "window": cfg.schedule.window,
                "efficiency": e_sel,
                "efficiency_retrieval": e_ret,
                "efficiency_total": e_tot,
                "regime": regime_of(&cfg.system, &cfg.schedule)?,
                "steps": run.stats.steps,
                "warnings": run.warnings,
            });
            if with_noise {
                let f = apparent_fidelity(&simulate(&cfg, model, true, false)?)?;
                report["fidelity"] = json!(f.fidelity);
                report["noise_energy"] = json!(f.noise_energy);
            }
            if let Some(p) = &out {
                write_series(&run, p, state, &cfg, &report)?;
            }
            emit(&report, format)
        }
        Cmd::Noise {
            source,
            model,
            out,
            state,
            format,
        } => {
            let cfg = source.load()?;
            let run = simulate(&cfg, model, true, state)?;
            let f = apparent_fidelity(&run)?;
            let report = json!({
                "model": format!("{model:?}").to_lowercase(),
                "fidelity": f.fidelity,
                "noise_energy": f.noise_energy,
                "fidelity_unclamped": f.unclamped,
                "steps": run.stats.steps,
                "warnings": run.warnings,
            });
            if let Some(p) = &out {
                write_series(&run, p, state, &cfg, &report)?;
            }
            emit(&report, format)
        }
        Cmd::ScanStorage {
            source,
            times,
            from,
            to,
            points,
            no_noise,
            out,
        } => {
            let cfg = source.load()?;
            let ts = match (times.is_empty(), from, to) {
                (false, None, None) => times,
                (true, Some(a), Some(b)) if points >= 1 => {
                    if points == 1 {
                        vec![a]
                    } else {
                        (0..points).map(|i| a + (b - a) * i as f64 / (points - 1) as f64).collect()
                    }
                }
                _ => bail!(qmem::Error::invalid("give either --times or --from/--to/--points")),
            };
            let scan = storage_time_scan(&cfg.system, &cfg.schedule, &ts, &cfg.integrator, !no_noise)?;
            match &out {
                Some(p) => {
                    let f = fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
                    scan.write_csv(io::BufWriter::new(f))?;
                    let side = json!({ "config": cfg.to_json()?, "period": scan.period });
                    write_json(&sidecar(p, "config.json"), &side)?;
                }
                None => scan.write_csv(io::stdout().lock())?,
            }
            if let Some(pe) = scan.period {
                log::info!(
                    "oscillation period {:.4e} s; pi/delta = {:.4e} s; delta/pi = {:.4e}",
                    pe.measured_s,
                    pe.pi_over_delta_s,
                    pe.delta_over_pi
                );
                eprintln!(
                    "period: measured {:.6e} s, pi/delta {:.6e} s, delta/pi {:.6e}",
                    pe.measured_s, pe.pi_over_delta_s, pe.delta_over_pi
                );
            }
            Ok(())
        }
        Cmd::Sweep { plan, out } => {
            let p = SweepPlan::load(&plan)?;
            let base = p.resolve_base(plan.parent())?;
            let res = sweep(&p, &base, cli.jobs)?;
            res.persist(&out)?;
            let failed = res.rows.iter().filter(|r| !r.is_ok()).count();
            eprintln!(
                "{} points ({} failed) in {:.2} s on {} workers",
                res.rows.len(),
                failed,
                res.timing.elapsed_s,
                res.timing.jobs
            );
            Ok(())
        }
        Cmd::Rate { source, amp, format } => {
            let cfg = source.load()?;
            let r = rate_report(&cfg.reduced_params()?, amp.unwrap_or_else(|| cfg.schedule.peak_control()))?;
            match format {
                Format::Json => emit(&serde_json::to_value(&r)?, Format::Json),
                Format::Csv => {
                    let mut o = io::stdout().lock();
                    writeln!(o, "re_b,im_b,abs_b,re_lambda_plus,im_lambda_plus,re_lambda_minus,im_lambda_minus,amplifying")?;
                    writeln!(
                        o,
                        "{},{},{},{},{},{},{},{}",
                        r.b.re,
                        r.b.im,
                        r.abs_b,
                        r.lambda_plus.re,
                        r.lambda_plus.im,
                        r.lambda_minus.re,
                        r.lambda_minus.im,
                        r.amplifying
                    )?;
                    Ok(())
                }
            }
        }
        Cmd::Audit { source, format } => {
            let cfg = source.load()?;
            let r = audit(&cfg.system, &cfg.schedule)?;
            match format {
                Format::Json => emit(&serde_json::to_value(&r)?, Format::Json),
                Format::Csv => Ok(r.write_csv(io::stdout().lock())?),
            }
        }
    }
}

fn simulate(cfg: &Config, model: Model, noise: bool, store_state: bool) -> Result<MemoryRun> {
    let mut opts = cfg.integrator;
    opts.store_trajectory |= store_state;
    Ok(match (model, noise) {
        (Model::Full, false) => run_protocol(&cfg.system, &cfg.schedule, &opts)?,
        (Model::Full, true) => noise_run(&cfg.system, &cfg.schedule, &opts)?,
        (Model::Reduced, false) => reduced_protocol(&cfg.reduced_params()?, &cfg.schedule, &cfg.reduced.mask, &opts)?,
        (Model::Reduced, true) => reduced_noise_run(&cfg.reduced_params()?, &cfg.schedule, &cfg.reduced.mask, &opts)?,
    })
}

/// `<stem>.<suffix>` next to `path`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?).with_context(|| format!("writing {}", path.display()))
}

fn write_series(run: &MemoryRun, path: &Path, state: bool, cfg: &Config, report: &serde_json::Value) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    run.write_csv(io::BufWriter::new(f), state)?;
    let side = json!({ "config": cfg.to_json()?, "report": report });
    write_json(&sidecar(path, "config.json"), &side)
}

fn emit(report: &serde_json::Value, format: Format) -> Result<()> {
    let mut o = io::stdout().lock();
    match format {
        Format::Json => writeln!(o, "{}", serde_json::to_string_pretty(report)?)?,
        Format::Csv => {
            let obj = report.as_object().context("report is not an object")?;
            let scalars: Vec<(&String, &serde_json::Value)> =
                obj.iter().filter(|(_, v)| v.is_number() || v.is_string() || v.is_boolean()).collect();
            let keys: Vec<&str> = scalars.iter().map(|(k, _)| k.as_str()).collect();
            let vals: Vec<String> = scalars
                .iter()
                .map(|(_, v)| match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            writeln!(o, "{}", keys.join(","))?;
            writeln!(o, "{}", vals.join(","))?;
        }
    }
    Ok(())
}
