use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use cloudnet::capacity::{is_feasible, max_throughput_scale, min_cost};
use cloudnet::experiments::{execute_cell, run_sweep, write_sweep_outputs, write_trace_csv, Cell, SweepSpec};
use cloudnet::policies::SublinearG;
use cloudnet::scenario::{load_scenario, Scenario, BUILTIN_SCENARIOS};
use cloudnet::{validate_network, FlowMode, PolicyRegistry};

#[derive(Parser, Debug)]
#[command(name = "cloudnet", version, about = "Cloud network control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one policy on one scenario and print its metrics.
    Run(RunArgs),
    /// Run every cell of a sweep spec and write CSV output.
    Sweep(SweepArgs),
    /// Query the capacity region and minimum average cost.
    Capacity(CapacityArgs),
    /// List built-in scenarios.
    Scenarios,
    /// List registered policies.
    Policies,
    /// Check a scenario and print it as TOML.
    Show {
        #[arg(long, default_value = "abilene")]
        scenario: String,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Actual,
    Nominal,
}

impl From<Mode> for FlowMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Actual => FlowMode::Actual,
            Mode::Nominal => FlowMode::Nominal,
        }
    }
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Built-in scenario name or scenario TOML path.
    #[arg(long, default_value = "abilene")]
    scenario: String,
    /// Uniform arrival rate for every client.
    #[arg(long, conflicts_with = "rates")]
    lambda: Option<f64>,
    /// Comma-separated per-service arrival rates.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut s = load_scenario(&self.scenario)?;
        if let Some(l) = self.lambda {
            if !(l.is_finite() && l >= 0.0) {
                bail!("--lambda must be finite and non-negative");
            }
            s.set_uniform_rate(l);
        }
        if let Some(r) = &self.rates {
            if r.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                bail!("--rates entries must be finite and non-negative");
            }
            s.set_service_rates(r)?;
        }
        Ok(s)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "adcnc")]
    policy: String,
    /// Cost weight V.
    #[arg(long = "v", alias = "V", default_value_t = 5.0)]
    v: f64,
    /// Reconfiguration delay on every element, in slots.
    #[arg(long)]
    delta_r: Option<u32>,
    /// Reconfiguration cost on every element.
    #[arg(long)]
    eta_r: Option<f64>,
    /// Delay of a commodity-only change, for the two-stage policies.
    #[arg(long)]
    commodity_delay: Option<u32>,
    /// Cost of a commodity-only change.
    #[arg(long)]
    commodity_cost: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    horizon: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.5)]
    warmup_fraction: f64,
    #[arg(long, value_enum, default_value_t = Mode::Actual)]
    mode: Mode,
    /// Scale of the hysteresis function g(x) = scale·x^exponent.
    #[arg(long, default_value_t = 0.99)]
    g_scale: f64,
    #[arg(long, default_value_t = 0.99)]
    g_exponent: f64,
    /// Monitor reconfiguration frequency over windows of this many slots.
    #[arg(long)]
    lemma_window: Option<u64>,
    /// Write the per-slot series to this CSV file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Print the record as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output directory; defaults to $CLOUDNET_OUT_DIR/<spec name> or
    /// out/<spec name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores by default.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the horizon of the spec.
    #[arg(long)]
    horizon: Option<u64>,
    /// Override the number of seeds per cell.
    #[arg(long)]
    seeds: Option<u64>,
}

#[derive(Args, Debug)]
struct CapacityArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Skip the throughput-scale bisection.
    #[arg(long)]
    no_scale: bool,
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let base = a.scenario.load()?;
    let cell = Cell {
        lambda: None,
        delta_r: a.delta_r,
        eta_r: a.eta_r,
        commodity_delay: a.commodity_delay,
        commodity_cost: a.commodity_cost,
        warmup_fraction: a.warmup_fraction,
        g: SublinearG::new(a.g_scale, a.g_exponent).map_err(anyhow::Error::msg)?,
        mode: a.mode.into(),
        lemma_window: a.lemma_window,
        ..Cell::new(&a.policy, a.v, a.horizon, a.seed)
    };
    if !(0.0..1.0).contains(&cell.warmup_fraction) {
        bail!("--warmup-fraction must lie in [0, 1)");
    }
    let run = execute_cell(&base, &cell).map_err(anyhow::Error::msg)?;
    if let Some(path) = &a.trace {
        write_trace_csv(&run.output.series, path)?;
    }
    let r = &run.record;
    if a.json {
        println!("{}", serde_json::to_string_pretty(r)?);
        return Ok(());
    }
    let m = &r.metrics;
    println!("scenario          {}", base.name);
    println!("policy            {}", r.policy);
    println!("V                 {}", r.v);
    println!("window            [{}, {})", r.window.0, r.window.1);
    println!("mean_total_queue  {:.6}", m.mean_total_queue);
    println!("mean_cost         {:.6}", m.mean_cost);
    println!("reconfig_fraction {:.6}", m.reconfig_fraction);
    println!("delivered_rate    {:.6}", m.delivered_rate);
    println!(
        "instability_slope {:.3e}{}",
        m.instability_slope,
        if m.is_unstable() { " (unstable)" } else { "" }
    );
    if let Some(l) = &r.lemma {
        println!(
            "lemma             T={} window_violations={} exceed_slots={} gamma_violations={} max_change={:.3} gamma_max={:.3}",
            l.window, l.window_violations, l.exceed_slots, l.gamma_violations, l.max_change, l.gamma_max
        );
    }
    println!("runtime_secs      {:.3}", r.runtime_secs);
    Ok(())
}

fn default_out_dir(spec: &Path) -> PathBuf {
    let stem = spec.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sweep".into());
    let root = std::env::var_os("CLOUDNET_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
    root.join(stem)
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?;
    let mut spec = SweepSpec::from_path(&a.spec)?;
    if let Some(h) = a.horizon {
        spec.horizon = h;
    }
    if let Some(s) = a.seeds {
        spec.seeds = s;
    }
    spec.validate()?;
    let records = run_sweep(&spec, a.jobs)?;
    let out = a.out.clone().unwrap_or_else(|| default_out_dir(&a.spec));
    let written = write_sweep_outputs(&out, &spec, &text, &records)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    eprintln!("{} runs, {} failed", records.len(), failed);
    for p in written {
        println!("{}", p.display());
    }
    if failed > 0 {
        bail!("{failed} runs failed; see manifest.json");
    }
    Ok(())
}

fn cmd_capacity(a: &CapacityArgs) -> Result<()> {
    let s = a.scenario.load()?;
    let coms = s.commodities()?;
    let rates = s.rate_matrix(&coms);
    let rate_list: Vec<String> = s
        .services
        .iter()
        .map(|svc| {
            let r: Vec<String> = svc.clients.iter().map(|c| c.arrival.rate().to_string()).collect();
            format!("{}={}", svc.id, r.join("/"))
        })
        .collect();
    println!("scenario  {}", s.name);
    println!("rates     {}", rate_list.join(" "));
    let feasible = is_feasible(&s.network, &coms, &rates)?;
    println!("feasible  {feasible}");
    if feasible {
        println!("h*        {:.9}", min_cost(&s.network, &coms, &rates)?.value);
    } else {
        println!("h*        inf");
    }
    if !a.no_scale {
        match max_throughput_scale(&s.network, &coms, &rates) {
            Ok(t) => println!("t*        {t:.6}"),
            Err(cloudnet::capacity::CapacityError::ZeroDirection) => println!("t*        undefined"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Capacity(a) => cmd_capacity(&a),
        Command::Scenarios => {
            for (name, desc) in BUILTIN_SCENARIOS {
                println!("{name:<10} {desc}");
            }
            Ok(())
        }
        Command::Policies => {
            let rows: Vec<_> = PolicyRegistry::builtin().describe().map(|(n, d)| (n.to_string(), d.to_string())).collect();
            let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
            for (name, desc) in rows {
                println!("{name:<width$}  {desc}");
            }
            Ok(())
        }
        Command::Show { scenario } => {
            let s = load_scenario(&scenario)?;
            let report = validate_network(&s.network);
            if !report.is_valid() {
                bail!("{report}");
            }
            print!("{}", s.to_toml_string()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
