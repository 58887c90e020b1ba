use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use mrteleport_core::scenarios::{
    run_scenario, EnsembleSpec, Method, NoiseMode, Protocol, ScenarioReport, ScenarioSpec,
    DEFAULT_SAMPLES,
};
use mrteleport_core::states::NoiseKind;
use mrteleport_core::sweep::{render, run_sweep, run_sweep_with_threads, Grid, SweepConfig};
use mrteleport_core::tensor::c;
use mrteleport_core::verify::{run_checks, CheckResult};

const SEED_ENV: &str = "MRTELEPORT_SEED";

#[derive(Parser)]
#[command(
    name = "mrteleport",
    version,
    about = "Scenario runs, parameter sweeps and acceptance checks for reversal-corrected teleportation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print its report
    Scenario(ScenarioArgs),
    /// Evaluate the noisy scenario over a (theta, D) grid
    Sweep(SweepArgs),
    /// Run the acceptance checks
    Verify(VerifyArgs),
}

/// Flags shared by `scenario` and `sweep`. Every field is optional so that
/// a config file can fill in whatever was not given on the command line.
#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default)]
struct Common {
    /// Angles are in radians
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    /// damping, dephasing or depolarizing
    #[arg(long)]
    noise: Option<String>,
    /// b or abar
    #[arg(long)]
    mode: Option<String>,
    /// Noise strength
    #[arg(long)]
    d: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Defaults to $MRTELEPORT_SEED, then 0
    #[arg(long)]
    seed: Option<u64>,
    /// mc or quad
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    out: Option<PathBuf>,
    /// csv or json
    #[arg(long)]
    format: Option<String>,
    /// JSON file with the same keys as the flags; flags win
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default)]
struct ScenarioArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// noiseless, noisy, agrawal, conclusive, tripartite, transmission, repeater
    #[arg(long)]
    name: Option<String>,
    /// Agrawal coefficient as `re` or `re,im`
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    optimized: bool,
    /// Schmidt coefficients for the conclusive scenario, comma separated
    #[arg(long)]
    coeffs: Option<String>,
    /// mr_optimal, unitary or both
    #[arg(long)]
    protocol: Option<String>,
    /// Exit with status 1 if any expected value is missed
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(default)]
struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Only `noisy` is supported
    #[arg(long)]
    name: Option<String>,
    /// MIN:MAX:STEPS
    #[arg(long)]
    theta_grid: Option<String>,
    /// MIN:MAX:STEPS
    #[arg(long)]
    d_grid: Option<String>,
    /// Worker threads (output does not depend on it)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Check name, number or tag; repeatable or comma separated
    #[arg(long, value_delimiter = ',')]
    only: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// text or json
    #[arg(long, default_value = "text")]
    format: String,
}

/// Failures that map to a usage exit code.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().or_else(|e| usage(format!("--{what}: {e}")))
}

fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return usage(format!("cannot read config {}: {e}", path.display())),
    };
    serde_json::from_str(&text).or_else(|e| usage(format!("config {}: {e}", path.display())))
}

/// Angles typed as `1.5708` and the like land just past pi/2; treat them as pi/2.
fn angle(x: f64) -> f64 {
    if (x - FRAC_PI_2).abs() < 5e-5 {
        FRAC_PI_2
    } else {
        x
    }
}

fn merge<T>(flag: Option<T>, config: Option<T>) -> Option<T> {
    flag.or(config)
}

impl Common {
    fn merged(self, cfg: Common) -> Common {
        Common {
            theta: merge(self.theta, cfg.theta),
            phi: merge(self.phi, cfg.phi),
            noise: merge(self.noise, cfg.noise),
            mode: merge(self.mode, cfg.mode),
            d: merge(self.d, cfg.d),
            samples: merge(self.samples, cfg.samples),
            seed: merge(self.seed, cfg.seed),
            method: merge(self.method, cfg.method),
            out: self.out,
            format: merge(self.format, cfg.format),
            config: self.config,
        }
    }

    fn seed(&self) -> anyhow::Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => parse(SEED_ENV, v.trim()),
            Err(_) => Ok(0),
        }
    }

    fn method(&self) -> anyhow::Result<Option<Method>> {
        self.method
            .as_deref()
            .map(|m| parse("method", m))
            .transpose()
    }

    fn noise(&self) -> anyhow::Result<(Option<NoiseKind>, NoiseMode)> {
        let kind = self
            .noise
            .as_deref()
            .map(|k| parse("noise", k))
            .transpose()?;
        let mode = parse("mode", self.mode.as_deref().unwrap_or("b"))?;
        Ok((kind, mode))
    }
}

impl ScenarioArgs {
    fn merged(self) -> anyhow::Result<Self> {
        let Some(path) = self.common.config.clone() else {
            return Ok(self);
        };
        let cfg: ScenarioArgs = load_config(&path)?;
        Ok(ScenarioArgs {
            common: self.common.merged(cfg.common),
            name: merge(self.name, cfg.name),
            n: merge(self.n, cfg.n),
            optimized: self.optimized || cfg.optimized,
            coeffs: merge(self.coeffs, cfg.coeffs),
            protocol: merge(self.protocol, cfg.protocol),
            strict: self.strict || cfg.strict,
        })
    }

    fn spec(&self) -> anyhow::Result<ScenarioSpec> {
        let Some(name) = &self.name else {
            return usage("--name is required");
        };
        let common = &self.common;
        let mut spec = ScenarioSpec::new(name.as_str());
        if let Some(t) = common.theta {
            spec = spec.theta(angle(t));
        }
        spec.phi = common.phi.map(angle);
        match common.noise()? {
            (Some(kind), mode) => spec = spec.noise(kind, mode, common.d.unwrap_or(0.0)),
            (None, _) if common.d.is_some() => return usage("--d needs --noise"),
            _ => {}
        }
        if let Some(p) = &self.protocol {
            spec = spec.protocol(parse::<Protocol>("protocol", p)?);
        }
        spec = spec.ensemble(EnsembleSpec {
            method: common.method()?,
            samples: common.samples.unwrap_or(DEFAULT_SAMPLES),
            seed: common.seed()?,
        });
        if let Some(n) = &self.n {
            let parts = n
                .split(',')
                .map(|x| parse::<f64>("n", x.trim()))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let z = match parts[..] {
                [re] => c(re, 0.0),
                [re, im] => c(re, im),
                _ => return usage("--n takes `re` or `re,im`"),
            };
            spec = spec.agrawal(z, self.optimized);
        } else {
            spec.optimized = self.optimized;
        }
        if let Some(cs) = &self.coeffs {
            let v = cs
                .split(',')
                .map(|x| parse::<f64>("coeffs", x.trim()))
                .collect::<anyhow::Result<Vec<_>>>()?;
            spec = spec.coeffs(v);
        }
        Ok(spec)
    }
}

fn parse_grid(what: &str, s: &str) -> anyhow::Result<Grid> {
    let parts: Vec<&str> = s.split(':').collect();
    let [min, max, steps] = parts[..] else {
        return usage(format!("--{what} takes MIN:MAX:STEPS, got `{s}`"));
    };
    Ok(Grid::new(
        parse(what, min)?,
        parse(what, max)?,
        parse(what, steps)?,
    ))
}

impl SweepArgs {
    fn merged(self) -> anyhow::Result<Self> {
        let Some(path) = self.common.config.clone() else {
            return Ok(self);
        };
        let cfg: SweepArgs = load_config(&path)?;
        Ok(SweepArgs {
            common: self.common.merged(cfg.common),
            name: merge(self.name, cfg.name),
            theta_grid: merge(self.theta_grid, cfg.theta_grid),
            d_grid: merge(self.d_grid, cfg.d_grid),
            threads: merge(self.threads, cfg.threads),
        })
    }

    fn config(&self) -> anyhow::Result<SweepConfig> {
        let common = &self.common;
        let defaults = SweepConfig::default();
        if common.theta.is_some() || common.d.is_some() {
            return usage("sweep takes --theta-grid and --d-grid instead of --theta and --d");
        }
        let (kind, mode) = common.noise()?;
        let cfg = SweepConfig {
            scenario: self.name.clone().unwrap_or(defaults.scenario),
            noise: kind.unwrap_or(defaults.noise),
            mode,
            theta_grid: match &self.theta_grid {
                Some(g) => {
                    let g = parse_grid("theta-grid", g)?;
                    Grid::new(angle(g.min), angle(g.max), g.steps)
                }
                None => defaults.theta_grid,
            },
            d_grid: match &self.d_grid {
                Some(g) => parse_grid("d-grid", g)?,
                None => defaults.d_grid,
            },
            phi: common.phi.map(angle),
            samples: common.samples.unwrap_or(defaults.samples),
            seed: common.seed()?,
            method: common.method()?.unwrap_or(defaults.method),
            out: common.out.as_ref().map(|p| p.display().to_string()),
            format: match &common.format {
                Some(f) => parse("format", f)?,
                None => defaults.format,
            },
        };
        if let Err(e) = cfg.validate() {
            return usage(e.to_string());
        }
        Ok(cfg)
    }
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => {
            std::fs::write(p, text).or_else(|e| usage(format!("cannot write {}: {e}", p.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn scenario_csv(rep: &ScenarioReport) -> String {
    let mut out = String::from("key,simulated,expected,delta,tolerance\n");
    let r = &rep.report;
    let mut keys: Vec<&str> = vec![
        "f_tele",
        "f_unitary",
        "f_reversal",
        "p_success",
        "gain",
        "tradeoff_lhs",
    ];
    keys.extend(rep.observed.keys().map(String::as_str));
    let cell = |x: Option<f64>| {
        x.map(|v| mrteleport_core::sweep::format_g(v, 12))
            .unwrap_or_default()
    };
    for k in keys {
        out.push_str(&format!(
            "{k},{},{},{},{}\n",
            cell(rep.metric(k)),
            cell(rep.expected.get(k).copied()),
            cell(rep.deltas.get(k).copied()),
            cell(rep.tolerances.get(k).copied()),
        ));
    }
    out.push_str(&format!("tradeoff_satisfied,{},,,\n", r.tradeoff_satisfied));
    out
}

fn cmd_scenario(args: ScenarioArgs) -> anyhow::Result<ExitCode> {
    let args = args.merged()?;
    let spec = args.spec()?;
    let rep = match run_scenario(&spec) {
        Ok(r) => r,
        Err(e) => return usage(e.to_string()),
    };
    let text = match args.common.format.as_deref().unwrap_or("json") {
        "json" => serde_json::to_string_pretty(&rep)? + "\n",
        "csv" => scenario_csv(&rep),
        other => return usage(format!("--format: unknown format `{other}`")),
    };
    emit(&text, args.common.out.as_deref())?;
    let breaches = rep.breaches();
    if !breaches.is_empty() {
        eprintln!("outside tolerance: {}", breaches.join(", "));
        if args.strict {
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: SweepArgs) -> anyhow::Result<ExitCode> {
    let args = args.merged()?;
    let cfg = args.config()?;
    let rows = match args.threads {
        Some(0) => return usage("--threads must be positive"),
        Some(n) => run_sweep_with_threads(&cfg, n),
        None => run_sweep(&cfg),
    };
    let rows = match rows {
        Ok(r) => r,
        Err(e) => return usage(e.to_string()),
    };
    let text = render(&rows, cfg.format)?;
    emit(&text, args.common.out.as_deref())?;
    if let Some(p) = &args.common.out {
        eprintln!("wrote {} rows to {}", rows.len(), p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(args: VerifyArgs) -> anyhow::Result<ExitCode> {
    let json = match args.format.as_str() {
        "json" => true,
        "text" => false,
        other => return usage(format!("--format: unknown format `{other}`")),
    };
    let results = match run_checks(&args.only) {
        Ok(r) => r,
        Err(e) => return usage(e.to_string()),
    };
    let failed: Vec<&CheckResult> = results.iter().filter(|r| !r.passed).collect();
    let summary = serde_json::json!({
        "passed": failed.is_empty(),
        "failed": failed.iter().map(|r| r.name.as_str()).collect::<Vec<_>>(),
        "checks": results,
    });
    let summary = serde_json::to_string_pretty(&summary)? + "\n";
    if json {
        print!("{summary}");
    } else {
        for r in &results {
            println!("{}", r.line());
        }
        println!(
            "{}/{} checks passed",
            results.len() - failed.len(),
            results.len()
        );
    }
    if let Some(p) = &args.out {
        emit(&summary, Some(p))?;
    }
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        let names: Vec<&str> = failed.iter().map(|r| r.name.as_str()).collect();
        eprintln!("failed: {}", names.join(", "));
        Ok(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Scenario(a) => cmd_scenario(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Verify(a) => cmd_verify(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let g = parse_grid("g", "0:1.5:4").unwrap();
        assert_eq!((g.min, g.max, g.steps), (0.0, 1.5, 4));
        assert!(parse_grid("g", "0:1").is_err());
        assert!(parse_grid("g", "0:1:x").is_err());
    }

    #[test]
    fn flags_win_over_config() {
        let flags = Common {
            theta: Some(0.3),
            ..Common::default()
        };
        let cfg = Common {
            theta: Some(0.9),
            phi: Some(0.2),
            ..Common::default()
        };
        let m = flags.merged(cfg);
        assert_eq!(m.theta, Some(0.3));
        assert_eq!(m.phi, Some(0.2));
    }

    #[test]
    fn rounded_right_angle() {
        assert_eq!(angle(1.5708), FRAC_PI_2);
        assert_eq!(angle(1.0472), 1.0472);
    }
}
