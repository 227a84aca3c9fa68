use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedspace_cli::config::{CliError, ConfigFile, CONFIG_SCHEMA_VERSION};
use fedspace_cli::threads::Threads;
use fedspace_cli::{config, io};
use fedspace_core::cmfd::{run_toy, toy_update_magnitude, ToyScheme, ToyState};
use fedspace_core::experiment::{self, Algorithm};
use fedspace_core::funcspace::function_grid_csv;
use fedspace_core::graph::{self, TopologySpec};
use fedspace_core::meta;

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (config-schema ",
    "1",
    ")"
);

/// Decentralized federated learning simulator: consensus in function
/// space, distillation-based aggregation, and spectral bound checks.
#[derive(Parser)]
#[command(name = "fedspace", version = LONG_VERSION)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a topology and print its spectral summary as JSON
    Topology(TopologyArgs),
    /// Print convergence-bound constants for a topology and rates
    Bounds(BoundsArgs),
    /// Run the function-space consensus algorithm
    Meta(RunArgs),
    /// Run distillation-based decentralized training
    Cmfd(RunArgs),
    /// Run the parameter-averaging baseline
    Paramavg(RunArgs),
    /// Run the two-parameter toy dynamics
    Toy(ToyArgs),
    /// Build or validate datasets and manifests
    Data(DataArgs),
}

#[derive(Args)]
struct TopoSelect {
    /// Ring lattice with N nodes and half-bandwidth K
    #[arg(long, num_args = 2, value_names = ["N", "K"])]
    ring: Option<Vec<usize>>,
    /// Scale-free graph with N nodes, M edges per new node
    #[arg(long, num_args = 2, value_names = ["N", "M"])]
    ba: Option<Vec<usize>>,
    /// Generator seed (scale-free graphs)
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TopoSelect {
    fn to_spec(&self) -> Result<TopologySpec, CliError> {
        match (&self.ring, &self.ba) {
            (Some(rk), None) => Ok(TopologySpec::Ring { n: rk[0], k: rk[1] }),
            (None, Some(nm)) => Ok(TopologySpec::ScaleFree { n: nm[0], m: nm[1] }),
            (None, None) => Err(CliError::config("choose a topology: --ring N K or --ba N M")),
            (Some(_), Some(_)) => Err(CliError::config("--ring and --ba are mutually exclusive")),
        }
    }
}

#[derive(Args)]
struct TopologyArgs {
    #[command(flatten)]
    topo: TopoSelect,
    /// Sharing rate, to include κ₂ = 1 − ελ₂ in the summary
    #[arg(long)]
    eps: Option<f64>,
    /// Write the canonical topology JSON to this file
    #[arg(long)]
    dump: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    topo: TopoSelect,
    /// Sharing rate ε
    #[arg(long)]
    eps: f64,
    /// Learning rate η (constant)
    #[arg(long)]
    eta: f64,
    /// Non-IIDness-weighted Lipschitz constant L_m
    #[arg(long)]
    lm: f64,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; flags below override its fields
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Constant learning rate (replaces the configured schedule)
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    metric_cadence: Option<usize>,
    /// Worker threads; must not change any result
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write per-device function snapshots (function-space runs)
    #[arg(long)]
    dump_functions: bool,
    /// Write per-epoch broadcast digests (distillation runs)
    #[arg(long)]
    telemetry: bool,
    /// Write final model checkpoints (neural-network runs)
    #[arg(long)]
    dump_checkpoints: bool,
}

impl RunArgs {
    fn resolve(&self, algorithm: &str) -> Result<ConfigFile, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ConfigFile::from_json(&io::read_text(path)?)?,
            None => ConfigFile::default(),
        };
        cfg.algorithm = algorithm.to_string();
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(e) = self.eta {
            cfg.eta = config::EtaConfig::Constant { value: e };
        }
        if let Some(s) = self.master_seed {
            cfg.master_seed = s;
        }
        if let Some(c) = self.metric_cadence {
            cfg.metric_cadence = c;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = Some(d.display().to_string());
        }
        cfg.dump_functions |= self.dump_functions;
        cfg.dump_checkpoints |= self.dump_checkpoints;
        cfg.telemetry |= self.telemetry;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SchemeArg {
    Distill,
    Paramavg,
}

#[derive(Args)]
struct ToyArgs {
    /// Initial parameters "w_a0,w_b0,w_a1,w_b1"
    #[arg(long, default_value = "0.5,0.5,-2,-1", allow_hyphen_values = true)]
    init: String,
    #[arg(long, value_enum, default_value_t = SchemeArg::Distill)]
    scheme: SchemeArg,
    #[arg(long, default_value_t = 5000)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    eta: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Write trajectory.csv here
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// Synthesize blobs: CLASSES PER_CLASS SPREAD
    #[arg(long, num_args = 3, value_names = ["CLASSES", "PER_CLASS", "SPREAD"])]
    blobs: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Validate an IDX pair: IMAGES LABELS
    #[arg(long, num_args = 2, value_names = ["IMAGES", "LABELS"])]
    validate_idx: Option<Vec<PathBuf>>,
    /// Partition the synthesized source: "ring" or "random"
    #[arg(long)]
    partition: Option<String>,
    #[arg(long, default_value_t = 10)]
    devices: usize,
    #[arg(long, default_value_t = 2)]
    labels_per_device: usize,
    #[arg(long, default_value_t = 200)]
    per_device: usize,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Topology(args) => cmd_topology(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Meta(args) => cmd_meta(args),
        Command::Cmfd(args) => cmd_nn(args, Algorithm::Cmfd),
        Command::Paramavg(args) => cmd_nn(args, Algorithm::ParamAvg),
        Command::Toy(args) => cmd_toy(args),
        Command::Data(args) => cmd_data(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_topology(args: TopologyArgs) -> Result<(), CliError> {
    let spec = args.topo.to_spec()?;
    let topology = spec.build(args.topo.seed)?;
    let summary = graph::spectral_summary(&topology)?;
    let json = serde_json::json!({
        "n": topology.node_count(),
        "edges": topology.edge_count(),
        "average_degree": topology.average_degree(),
        "max_degree": summary.max_degree,
        "lambda2": summary.lambda2,
        "eigenvalues": summary.eigenvalues,
        "epsilon_max": summary.epsilon_max(),
        "kappa2": args.eps.map(|e| summary.kappa2(e)),
    });
    println!("{}", serde_json::to_string_pretty(&json).expect("serializes"));
    if let Some(path) = args.dump {
        io::write_text(&path, &topology.canonical_json())?;
    }
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> Result<(), CliError> {
    let spec = args.topo.to_spec()?;
    let topology = spec.build(args.topo.seed)?;
    let summary = graph::spectral_summary(&topology)?;
    let n = topology.node_count();
    let eps_valid = args.eps > 0.0 && args.eps <= summary.epsilon_max();
    if !eps_valid {
        eprintln!(
            "warning: eps {} outside (0, {:.6}]; the bounds do not apply",
            args.eps,
            summary.epsilon_max()
        );
    }
    let kappa2 = summary.kappa2(args.eps);
    let json = serde_json::json!({
        "c1": serde_json::Value::Null, // needs a run (distance of the epoch-2 mean to the target)
        "c2": if eps_valid { Some(4.0 * args.lm * kappa2 / (1.0 - kappa2)) } else { None },
        "l_m": args.lm,
        "kappa2": kappa2,
        "lambda2": summary.lambda2,
        "epsilon": args.eps,
        "eps_valid": eps_valid,
        "limit_disagreement": if eps_valid {
            Some(meta::limit_disagreement(args.eta, args.eps, summary.lambda2, args.lm))
        } else { None },
        "limit_best_gap": if eps_valid {
            Some(meta::limit_best_gap(args.eta, args.lm, n, args.eps, summary.lambda2))
        } else { None },
    });
    println!("{}", serde_json::to_string_pretty(&json).expect("serializes"));
    Ok(())
}

fn out_dir_for(cfg: &ConfigFile, fallback: &str) -> PathBuf {
    cfg.out_dir
        .as_ref()
        .map_or_else(|| PathBuf::from("runs").join(fallback), PathBuf::from)
}

fn write_resolved_config(dir: &Path, cfg: &ConfigFile) -> Result<(), CliError> {
    let wrapper = serde_json::json!({
        "version": config::VERSION,
        "config_schema": CONFIG_SCHEMA_VERSION,
        "config": serde_json::from_str::<serde_json::Value>(&cfg.to_json_pretty())
            .expect("config is valid JSON"),
    });
    io::write_text(
        &dir.join("resolved_config.json"),
        &serde_json::to_string_pretty(&wrapper).expect("serializes"),
    )
}

fn cmd_meta(args: RunArgs) -> Result<(), CliError> {
    let cfg = args.resolve("meta")?;
    let spec = cfg.to_meta_spec();
    let exec = Threads::new(cfg.threads);
    let out = experiment::run_meta_experiment(&spec, &exec).map_err(CliError::from)?;
    let trace = &out.trace;
    if !trace.eps_valid {
        eprintln!(
            "warning: eps {} exceeds 1/(2*max_degree); bounds reported as not applicable",
            trace.epsilon
        );
    }
    let report = meta::bound_report(trace, &spec.eta, spec.topology.node_count());
    let d_check = meta::check_disagreement_envelope(trace);
    let gap_check = meta::check_best_gap_envelope(trace);

    let dir = out_dir_for(&cfg, "meta");
    write_resolved_config(&dir, &cfg)?;
    io::write_text(&dir.join("metatrace.csv"), &meta::metatrace_csv(trace))?;
    io::write_text(
        &dir.join("metrics.csv"),
        &experiment::metrics_csv(&out.records, spec.topology.node_count()),
    )?;
    io::write_text(&dir.join("summary.json"), &io::meta_summary_json(trace, &report))?;
    io::write_text(&dir.join("bound_report.json"), &io::bound_report_json(&report))?;
    if cfg.dump_functions {
        for (i, part) in trace.final_function.parts().iter().enumerate() {
            io::write_text(
                &dir.join(format!("functions_dev{i}.csv")),
                &function_grid_csv(&out.grid, part),
            )?;
        }
    }
    io::append_log(&dir, &format!("meta run complete: {} epochs", trace.epochs))?;

    let last = trace.epochs.saturating_sub(1);
    println!("epochs          {}", trace.epochs);
    println!("lambda2         {:.6}", trace.lambda2);
    println!("kappa2          {:.6}", trace.kappa2);
    println!("final D_t       {:.6e}", trace.d_t.get(last).copied().unwrap_or(f64::NAN));
    println!(
        "final best gap  {:.6e}",
        trace.loss_best.get(last).copied().unwrap_or(f64::NAN) - trace.target_loss
    );
    if trace.eps_valid {
        println!(
            "envelope checks D_t<=gamma_t: {}; gap<=bound: {}",
            if d_check.holds() { "ok" } else { "VIOLATED" },
            if gap_check.holds() { "ok" } else { "VIOLATED" },
        );
    }
    println!("outputs         {}", dir.display());
    Ok(())
}

fn cmd_nn(args: RunArgs, algorithm: Algorithm) -> Result<(), CliError> {
    let name = match algorithm {
        Algorithm::Cmfd => "cmfd",
        Algorithm::ParamAvg => "paramavg",
    };
    let cfg = args.resolve(name)?;
    let (run_cfg, run_data) = cfg.build_run(algorithm)?;
    let exec = Threads::new(cfg.threads);
    let out = experiment::run(&run_cfg, &run_data, &exec).map_err(CliError::from)?;

    let dir = out_dir_for(&cfg, name);
    let devices = run_cfg.topology.node_count();
    write_resolved_config(&dir, &cfg)?;
    io::write_text(
        &dir.join("metrics.csv"),
        &experiment::metrics_csv(&out.records, devices),
    )?;
    io::write_text(
        &dir.join("metrics.jsonl"),
        &experiment::metrics_jsonl(&out.records, devices),
    )?;
    io::write_text(&dir.join("summary.json"), &io::summary_json(name, &out.summary))?;
    if cfg.telemetry {
        io::write_text(&dir.join("broadcasts.jsonl"), &io::digests_jsonl(&out.digests))?;
    }
    if cfg.dump_checkpoints {
        for (i, model) in out.models.iter().enumerate() {
            io::write_text(&dir.join(format!("checkpoint_dev{i}.json")), &io::checkpoint_json(model))?;
        }
    }
    io::append_log(&dir, &format!("{name} run complete: {} epochs", cfg.epochs))?;

    let s = &out.summary;
    println!("algorithm   {name}");
    println!("epochs      {}", s.final_epoch);
    println!("acc         {:.4}", s.acc);
    println!("max-min     {:.4}", s.max_min);
    println!(
        "dev         {:.5}{}",
        s.dev,
        if s.dev_window_truncated {
            format!("  (window {} of {})", s.dev_window, experiment::DEV_WINDOW)
        } else {
            String::new()
        }
    );
    if let Some(t) = s.top5 {
        println!("top5        {t:.4}");
    }
    if let Some(c) = s.mean_distill_loss_final {
        println!("distill     {c:.6}");
    }
    println!("bytes       {}", s.total_bytes);
    println!("outputs     {}", dir.display());
    Ok(())
}

fn cmd_toy(args: ToyArgs) -> Result<(), CliError> {
    let parts: Vec<f64> = args
        .init
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::config("--init must be four numbers: wa0,wb0,wa1,wb1"))?;
    if parts.len() != 4 {
        return Err(CliError::config("--init must have exactly four values"));
    }
    let init = ToyState {
        devices: [[parts[0], parts[1]], [parts[2], parts[3]]],
    };
    let scheme = match args.scheme {
        SchemeArg::Distill => ToyScheme::Distill,
        SchemeArg::Paramavg => ToyScheme::ParamAvg,
    };
    let trajectory = run_toy(scheme, init, args.steps, args.eta, args.eps);
    let last = trajectory.last().expect("trajectory includes the start");
    if let Some(dir) = &args.out_dir {
        let resolved = serde_json::json!({
            "version": config::VERSION,
            "config_schema": CONFIG_SCHEMA_VERSION,
            "config": {
                "algorithm": "toy",
                "init": args.init,
                "scheme": match scheme { ToyScheme::Distill => "distill", ToyScheme::ParamAvg => "paramavg" },
                "steps": args.steps,
                "eta": args.eta,
                "eps": args.eps,
            },
        });
        io::write_text(
            &dir.join("resolved_config.json"),
            &serde_json::to_string_pretty(&resolved).expect("serializes"),
        )?;
        let mut csv = String::from("step,wa0,wb0,prod0,wa1,wb1,prod1\n");
        for (t, s) in trajectory.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                t,
                s.devices[0][0],
                s.devices[0][1],
                s.product(0),
                s.devices[1][0],
                s.devices[1][1],
                s.product(1),
            ));
        }
        io::write_text(&dir.join("trajectory.csv"), &csv)?;
    }
    println!("steps        {}", args.steps);
    println!(
        "device 0     w = ({:.6}, {:.6})  product = {:.6}",
        last.devices[0][0],
        last.devices[0][1],
        last.product(0)
    );
    println!(
        "device 1     w = ({:.6}, {:.6})  product = {:.6}",
        last.devices[1][0],
        last.devices[1][1],
        last.product(1)
    );
    if matches!(scheme, ToyScheme::Distill) {
        let residual = toy_update_magnitude(last, args.eta, args.eps);
        println!("residual     [{:.2e}, {:.2e}]", residual[0], residual[1]);
    }
    Ok(())
}

fn cmd_data(args: DataArgs) -> Result<(), CliError> {
    if let Some(paths) = &args.validate_idx {
        let images = std::fs::read(&paths[0])
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", paths[0].display())))?;
        let labels = std::fs::read(&paths[1])
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", paths[1].display())))?;
        let parsed = fedspace_core::data::parse_idx_images(&images)?;
        let parsed_labels = fedspace_core::data::parse_idx_labels(&labels)?;
        let json = serde_json::json!({
            "images": { "count": parsed.count(), "rows": parsed.rows, "cols": parsed.cols },
            "labels": { "count": parsed_labels.len() },
            "consistent": parsed.count() == parsed_labels.len(),
        });
        println!("{}", serde_json::to_string_pretty(&json).expect("serializes"));
        return Ok(());
    }

    let Some(blob_args) = &args.blobs else {
        return Err(CliError::config(
            "nothing to do: pass --blobs CLASSES PER_CLASS SPREAD or --validate-idx IMAGES LABELS",
        ));
    };
    let classes: usize = blob_args[0]
        .parse()
        .map_err(|_| CliError::config("CLASSES must be an integer"))?;
    let per_class: usize = blob_args[1]
        .parse()
        .map_err(|_| CliError::config("PER_CLASS must be an integer"))?;
    let spread: f64 = blob_args[2]
        .parse()
        .map_err(|_| CliError::config("SPREAD must be a number"))?;
    let ds = fedspace_core::data::synth_blobs(classes, per_class, spread, args.seed)?;

    let dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join("data"));
    let mut csv = String::from("x_0,x_1,label\n");
    for i in 0..ds.len() {
        csv.push_str(&format!(
            "{},{},{}\n",
            ds.input(i)[0],
            ds.input(i)[1],
            ds.label(i)
        ));
    }
    io::write_text(&dir.join("dataset.csv"), &csv)?;

    let mut manifest = serde_json::json!({
        "source": "blobs",
        "seed": args.seed,
        "params": { "classes": classes, "per_class": per_class, "spread": spread },
    });
    if let Some(rule) = &args.partition {
        let partitions = match rule.as_str() {
            "ring" => fedspace_core::data::partition_ring(
                &ds,
                args.devices,
                args.labels_per_device,
                args.per_device,
                args.seed,
            )?,
            "random" => fedspace_core::data::partition_random_pairs(
                &ds,
                args.devices,
                args.labels_per_device,
                args.per_device,
                args.seed,
            )?,
            other => {
                return Err(CliError::config(format!(
                    "unknown partition rule `{other}` (ring|random)"
                )))
            }
        };
        let devices: Vec<serde_json::Value> = partitions
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut classes: Vec<usize> = p.labels().to_vec();
                classes.sort_unstable();
                classes.dedup();
                serde_json::json!({ "device": i, "classes": classes, "count": p.len() })
            })
            .collect();
        manifest["rule"] = serde_json::json!(rule);
        manifest["per_device"] = serde_json::json!(args.per_device);
        manifest["devices"] = serde_json::json!(devices);
    }
    io::write_text(
        &dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("serializes"),
    )?;
    println!("dataset      {} points, {classes} classes", ds.len());
    println!("outputs      {}", dir.display());
    Ok(())
}
