//! `csmaflow`: runs the csma-core experiments from scenario files.

mod error;
mod experiment;
mod manifest;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use csma_core::scenario::{ExperimentSection, Scenario};

use crate::error::{CliError, CliResult};
use crate::experiment::{load_scenario, Kind, Prepared};
use crate::manifest::{config_hash, Manifest, Versions};

#[derive(Parser)]
#[command(name = "csmaflow", version, about = "Multi-channel CSMA flow-level experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its result files and manifest.
    Run(RunArgs),
    /// Turn a region or stability sweep CSV into plot-ready files.
    ExportRegionPlot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "plot")]
        output: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment kind; defaults to the scenario's or the manifest's.
    #[arg(value_enum)]
    kind: Option<Kind>,
    /// Bundled scenario name or path to a scenario file.
    #[arg(long, conflicts_with = "from_manifest")]
    scenario: Option<String>,
    /// Rerun the experiment recorded in a manifest.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, env = "CSMAFLOW_OUTPUT", default_value = "csmaflow-out")]
    output: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Use the exact infinite-attempt-rate throughputs.
    #[arg(long)]
    alpha_limit: bool,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    grid_max: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Packet-level scaling N; selects the joint flow/packet simulator.
    #[arg(long)]
    scaling_n: Option<u32>,
    /// Flow counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    state: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<u32>>,
    #[arg(long)]
    t_probe: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    max_total_flows: Option<u64>,
}

impl RunArgs {
    fn overrides(&self) -> ExperimentSection {
        ExperimentSection {
            kind: self.kind.map(|k| k.name().to_string()),
            policy: self.policy.clone(),
            seed: self.seed,
            alpha: self.alpha,
            alpha_limit: self.alpha_limit.then_some(true),
            state: self.state.clone(),
            grid: self.grid,
            grid_max: self.grid_max,
            horizon: self.horizon,
            replications: self.replications,
            scaling_n: self.scaling_n,
            n_values: self.n_values.clone(),
            t_probe: self.t_probe,
            samples: self.samples,
            max_total_flows: self.max_total_flows,
            ..ExperimentSection::default()
        }
    }
}

fn run(args: &RunArgs) -> CliResult<serde_json::Value> {
    let started = Instant::now();
    let (source, scenario, base) = match (&args.from_manifest, &args.scenario) {
        (Some(path), _) => {
            let m = Manifest::read(path)?;
            let sc = Scenario::parse(&m.scenario)?;
            (m.scenario_source, sc, m.experiment)
        }
        (None, Some(name)) => {
            let sc = load_scenario(name)?;
            let exp = sc.experiment.clone();
            (name.clone(), sc, exp)
        }
        (None, None) => return Err(CliError::Invalid("either --scenario or --from-manifest is required".into())),
    };
    let mut experiment = base.overridden_by(&args.overrides());
    let kind = match experiment.kind.as_deref() {
        Some(k) => Kind::parse(k)?,
        None => return Err(CliError::Invalid("no experiment kind given".into())),
    };
    experiment.kind = Some(kind.name().to_string());

    let prepared = Prepared::new(kind, scenario, experiment)?;
    let scenario_text = prepared.scenario.to_toml()?;
    let hash = config_hash(kind.name(), &scenario_text, &prepared.experiment)?;
    let files = prepared.execute()?;

    let out = &args.output;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    for (name, body) in &files {
        let p = out.join(name);
        std::fs::write(&p, body).map_err(|e| CliError::io(&p, e))?;
    }
    let manifest = Manifest {
        kind: kind.name().to_string(),
        scenario_source: source,
        scenario: scenario_text,
        experiment: prepared.experiment.clone(),
        seed: prepared.seed(),
        config_hash: hash.clone(),
        versions: Versions::current(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        outputs: files.iter().map(|f| f.0.clone()).collect(),
    };
    manifest.write(&out.join("manifest.json"))?;
    Ok(json!({
        "kind": kind.name(),
        "output": out.display().to_string(),
        "files": manifest.outputs,
        "config_hash": hash,
    }))
}

fn export(input: &Path, output: &Path) -> CliResult<serde_json::Value> {
    let files = plot::export_region_plot(input, output)?;
    Ok(json!({ "output": output.display().to_string(), "files": files }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::ExportRegionPlot { input, output } => export(input, output),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let diag = json!({
                "level": "error",
                "kind": e.kind(),
                "exit_code": e.exit_code(),
                "message": e.to_string(),
            });
            eprintln!("{diag}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
