// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use soar_core::assembly::FemSystem;
use soar_core::config::Config;
use soar_core::data_gen::{format_boundary_data, load_boundary_data, sample_true_source};
use soar_core::experiments::{compare_methods_on, row_seed, run_method, run_sweep_on, Scenario};
use soar_core::linsolve::factorize_ccbm;
use soar_core::mesh::{format_mesh, generate_disk_mesh, load_mesh, Mesh, DEFAULT_SHAPE_C2};
use soar_core::regularizer::RunRecord;
use soar_core::Error;

#[derive(Parser, Debug)]
#[command(name = "soar", version, about = "Source reconstruction from Cauchy data by second order asymptotical regularization")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON config file with flat dotted keys
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one config key (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; nothing is written outside it
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,
    /// Worker threads for sweeps and comparisons
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Master seed (same as --set seed=N)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Log verbosity: -v info, -vv per-iteration lines
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate or inspect meshes
    #[command(subcommand)]
    Mesh(MeshCommand),
    /// Generate noisy boundary data on the reconstruction mesh
    Forward,
    /// Reconstruct the source with one method
    Solve,
    /// Sweep one parameter
    Sweep,
    /// Compare all methods over several noise levels
    Compare,
}

#[derive(Subcommand, Debug)]
enum MeshCommand {
    /// Write a structured disk mesh to <out>/mesh.txt
    Gen {
        #[arg(long)]
        rings: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Print statistics of a mesh file
    Info { file: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn load_config(common: &Common) -> soar_core::Result<Config> {
    let mut cfg = match &common.config {
        Some(path) => Config::from_file(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read {}: {io}", path.display())),
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })?,
        None => Config::default(),
    };
    for s in &common.set {
        cfg.set_str(s)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.jobs == 0 {
        return Err(Error::Config("--jobs must be >= 1".into()));
    }
    Ok(cfg)
}

struct Output<'a> {
    dir: &'a Path,
}

impl Output<'_> {
    fn write(&self, name: &str, contents: &str) -> soar_core::Result<()> {
        fs::create_dir_all(self.dir)?;
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        log::info!("wrote {}", path.display());
        Ok(())
    }

    fn write_json(&self, name: &str, value: &Value) -> soar_core::Result<()> {
        self.write(name, &(serde_json::to_string_pretty(value)? + "\n"))
    }
}

fn execute(cli: &Cli) -> soar_core::Result<()> {
    let cfg = load_config(&cli.common)?;
    let out = Output { dir: &cli.common.out };
    match &cli.command {
        Command::Mesh(MeshCommand::Gen { rings, radius }) => {
            let rings = rings.unwrap_or(cfg.coarse_rings);
            let radius = radius.unwrap_or(cfg.radius);
            if rings == 0 || !(radius > 0.0) {
                return Err(Error::Config("mesh gen needs --rings >= 1 and --radius > 0".into()));
            }
            let mesh = generate_disk_mesh(radius, rings);
            print_mesh_info(&mesh);
            out.write("mesh.txt", &format_mesh(&mesh))
        }
        Command::Mesh(MeshCommand::Info { file }) => {
            print_mesh_info(&load_mesh(file)?);
            Ok(())
        }
        Command::Forward => {
            cfg.validate()?;
            let scenario = scenario(&cfg)?;
            let data = scenario.noisy_data(cfg.delta_prime, row_seed(cfg.seed, 0))?;
            out.write("mesh.txt", &format_mesh(&scenario.coarse_mesh))?;
            out.write("data.txt", &format_boundary_data(&data))?;
            out.write_json(
                "forward.json",
                &json!({
                    "command": "forward",
                    "config": cfg.to_json(),
                    "delta": data.delta,
                    "boundary_nodes": data.len(),
                    "fine_nodes": scenario.fine_mesh.node_count(),
                    "coarse_nodes": scenario.coarse_mesh.node_count(),
                }),
            )?;
            println!("delta = {:e} on {} boundary nodes", data.delta, data.len());
            Ok(())
        }
        Command::Solve => {
            cfg.validate()?;
            let (record, delta, m0) = solve(&cfg)?;
            out.write("run.csv", &record.to_csv())?;
            out.write_json(
                "run.json",
                &json!({
                    "command": "solve",
                    "config": cfg.to_json(),
                    "delta": delta,
                    "m0": m0,
                    "iterations": record.iterations(),
                    "reason": record.reason.to_string(),
                    "l2err": record.final_l2err(),
                    "p": record.p,
                }),
            )?;
            println!(
                "{}: {} iterations ({}), L2Err = {}",
                cfg.method,
                record.iterations(),
                record.reason,
                record.final_l2err().map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
            );
            Ok(())
        }
        Command::Sweep => {
            cfg.validate()?;
            let spec = cfg.experiment()?;
            spec.validate()?;
            let scenario = scenario(&cfg)?;
            let table = run_sweep_on(&scenario, &spec, cli.common.jobs)?;
            out.write("sweep.csv", &table.to_csv())?;
            out.write_json("sweep.json", &json!({ "command": "sweep", "config": cfg.to_json(), "table": table }))?;
            print!("{}", table.to_csv());
            Ok(())
        }
        Command::Compare => {
            cfg.validate()?;
            let scenario = scenario(&cfg)?;
            let table = compare_methods_on(&scenario, &cfg.settings(), &cfg.compare_methods, &cfg.compare_delta_primes, cfg.seed, cli.common.jobs)?;
            out.write("compare.csv", &table.to_csv())?;
            out.write("compare.txt", &table.to_text())?;
            out.write_json("compare.json", &json!({ "command": "compare", "config": cfg.to_json(), "table": table }))?;
            print!("{}", table.to_text());
            Ok(())
        }
    }
}

fn coarse_mesh(cfg: &Config) -> soar_core::Result<Mesh> {
    match &cfg.mesh_file {
        Some(path) => load_mesh(path),
        None => Ok(generate_disk_mesh(cfg.radius, cfg.coarse_rings)),
    }
}

fn scenario(cfg: &Config) -> soar_core::Result<Scenario> {
    let coarse = coarse_mesh(cfg)?;
    warn_shape(&coarse);
    Scenario::from_meshes(cfg.example()?, generate_disk_mesh(cfg.radius, cfg.fine_rings), coarse)
}

/// Runs the configured method; returns the record, δ and m₀.
fn solve(cfg: &Config) -> soar_core::Result<(RunRecord, f64, usize)> {
    let settings = cfg.settings();
    let Some(data_file) = &cfg.data_file else {
        let scenario = scenario(cfg)?;
        let data = scenario.noisy_data(cfg.delta_prime, row_seed(cfg.seed, 0))?;
        let record = scenario.run(&data, &settings)?;
        return Ok((record, data.delta, scenario.truth.len()));
    };
    let example = cfg.example()?;
    let mesh = std::sync::Arc::new(coarse_mesh(cfg)?);
    warn_shape(&mesh);
    let region = std::sync::Arc::new(example.mark(&mesh)?);
    let truth = sample_true_source(&example, &mesh, &region)?.coefficients;
    let mut system = FemSystem::assemble(mesh, region)?;
    let fact = factorize_ccbm(&system)?;
    let data = load_boundary_data(data_file)?;
    system.set_boundary_data(&data.nodes, &data.g1, &data.g2)?;
    let record = run_method(&system, &fact, data.delta, &settings, Some(&truth))?;
    Ok((record, data.delta, truth.len()))
}

fn warn_shape(mesh: &Mesh) {
    let bad = mesh.shape_violations(DEFAULT_SHAPE_C2);
    if !bad.is_empty() {
        log::warn!("{} triangles violate the shape bound longest side <= {} * inradius", bad.len(), DEFAULT_SHAPE_C2);
    }
}

fn print_mesh_info(mesh: &Mesh) {
    println!("nodes           {}", mesh.node_count());
    println!("triangles       {}", mesh.triangle_count());
    println!("edges           {}", mesh.edge_count());
    println!("boundary edges  {}", mesh.boundary_edges.len());
    println!("h               {:.6}", mesh.h);
    println!("area            {:.6}", mesh.total_area());
    println!("boundary length {:.6}", mesh.boundary_length());
    let bad = mesh.shape_violations(DEFAULT_SHAPE_C2).len();
    if bad > 0 {
        println!("warning: {bad} triangles exceed the shape bound (c2 = {DEFAULT_SHAPE_C2})");
    }
}
