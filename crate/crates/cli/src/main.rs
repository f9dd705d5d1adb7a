use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mttsp_core::bench::{compare, read_rows, run_bench, summarize, write_csv, BenchConfig, RowSink};
use mttsp_core::generate::{generate_with_certificate, GenConfig};
use mttsp_core::oracle::{brute_force_optimum, OracleLimits};
use mttsp_core::recovery::validate_solution;
use mttsp_core::{
    build_graph, build_model, load_instance, recover, save_instance, solve_mip, BnbOptions, FormulationKind, Instance,
    SolverOptions,
};

/// Exact multi-agent moving-target TSP via mixed-integer conic programming.
#[derive(Parser)]
#[command(name = "mttsp", version)]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random instance with a feasibility certificate.
    Generate {
        #[arg(long)]
        n: usize,
        /// Total window length per target, seconds.
        #[arg(long, default_value_t = 40.0)]
        duration: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        agents: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve an instance with one of the formulations.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "micp")]
        formulation: FormulationKind,
        /// Override the instance's fleet size.
        #[arg(long)]
        agents: Option<usize>,
        #[command(flatten)]
        search: SearchArgs,
        /// Write the recovered solution as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the segment graph as `tail head` lines.
        #[arg(long)]
        dump_graph: Option<PathBuf>,
        /// Write the conic model as text.
        #[arg(long)]
        dump_model: Option<PathBuf>,
    },
    /// Exhaustive reference optimum for tiny instances.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sweep described by a TOML file and append rows to a CSV.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
        /// Also write per-group means.
        #[arg(long)]
        summary: Option<PathBuf>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Join two result CSVs on instance, fleet size and window duration.
    Compare {
        #[arg(long)]
        csv_a: PathBuf,
        #[arg(long)]
        csv_b: PathBuf,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SearchArgs {
    /// Seconds.
    #[arg(long, default_value_t = 1800.0)]
    time_limit: f64,
    /// Relative optimality gap at which the search stops.
    #[arg(long, default_value_t = 1e-4)]
    gap_tol: f64,
    #[arg(long)]
    node_limit: Option<u64>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Seeds tie-breaking among equally fractional branching candidates.
    #[arg(long)]
    seed: Option<u64>,
}

impl SearchArgs {
    fn options(&self) -> BnbOptions {
        BnbOptions {
            rel_gap_tol: self.gap_tol,
            time_limit_s: self.time_limit,
            node_limit: self.node_limit,
            threads: self.threads.max(1),
            seed: self.seed,
            ..BnbOptions::default()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate {
            n,
            duration,
            seed,
            agents,
            out,
        } => {
            let cfg = GenConfig {
                n_agents: agents,
                ..GenConfig::new(n, duration, seed)
            };
            let generated = generate_with_certificate(&cfg)?;
            fs::write(&out, save_instance(&generated.instance)).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "wrote {} ({} targets, {} segments); certified order {:?}",
                out.display(),
                generated.instance.n_targets(),
                generated.instance.n_segments(),
                generated.order
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Solve {
            instance,
            formulation,
            agents,
            search,
            out,
            dump_graph,
            dump_model,
        } => {
            let inst = read_instance(&instance, agents)?;
            let graph = build_graph(&inst);
            if let Some(path) = dump_graph {
                fs::write(&path, graph.dump_edges())?;
            }
            let model = build_model(formulation, &inst, &graph);
            if let Some(path) = dump_model {
                fs::write(&path, model.dump())?;
            }
            println!(
                "{formulation}: {} edges, {} variables ({} binary), {} rows, {} cones",
                graph.edge_count(),
                model.num_vars(),
                model.binaries().len(),
                model.linear.len(),
                model.cones.len()
            );
            let report = solve_mip(&model, &search.options());
            println!(
                "status {} objective {} bound {} gap {}% nodes {} runtime {:.3}s",
                report.status.as_str(),
                report.incumbent_objective,
                report.best_bound,
                report.gap_percent,
                report.nodes_explored,
                report.runtime
            );
            if report.numerical_failures > 0 {
                println!("numerical failures: {}", report.numerical_failures);
            }
            if !report.has_incumbent() {
                return Ok(ExitCode::from(1));
            }
            let solution = recover(formulation, &inst, &graph, &model, &report.incumbent_solution)?;
            for tour in &solution.tours {
                let stops: Vec<String> = tour.visits.iter().map(|v| format!("{}@{:.3}", v.node, v.time)).collect();
                println!("agent {}: length {:.6} [{}]", tour.agent_id, tour.length, stops.join(" "));
            }
            let findings = validate_solution(&inst, &solution, 1e-6);
            for f in &findings {
                println!("finding: {f}");
            }
            if let Some(path) = out {
                fs::write(&path, solution.to_json() + "\n")?;
            }
            Ok(if findings.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Oracle { instance, agents, out } => {
            let inst = read_instance(&instance, agents)?;
            let res = brute_force_optimum(&inst, OracleLimits::default(), &SolverOptions::default())?;
            println!("objective {}", res.objective);
            for (k, route) in res.plan.routes.iter().enumerate() {
                println!("agent {}: segments {:?}", k + 1, route);
            }
            println!("fixed-sequence programs solved: {}", res.subproblems);
            if let Some(path) = out {
                fs::write(&path, res.solution.to_json() + "\n")?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            config,
            out,
            summary,
            seed,
        } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg: BenchConfig = toml::from_str(&text).with_context(|| format!("parsing {}", config.display()))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if cfg.formulations.is_empty() || cfg.agents.is_empty() {
                bail!("config needs at least one formulation and one fleet size");
            }
            let instances = cfg.instances()?;
            let mut sink = RowSink::append(&out)?;
            let rows = run_bench(&instances, &cfg.formulations, &cfg.agents, &cfg.bnb_options(), Some(&mut sink))?;
            println!("{} rows appended to {}", rows.len(), out.display());
            if let Some(path) = summary {
                write_csv(fs::File::create(&path)?, &summarize(&rows))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { csv_a, csv_b, out } => {
            let a = read_rows(fs::File::open(&csv_a).with_context(|| format!("opening {}", csv_a.display()))?)?;
            let b = read_rows(fs::File::open(&csv_b).with_context(|| format!("opening {}", csv_b.display()))?)?;
            let joined = compare(&a, &b);
            match out {
                Some(path) => write_csv(fs::File::create(&path)?, &joined)?,
                None => write_csv(std::io::stdout().lock(), &joined)?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read_instance(path: &Path, agents: Option<usize>) -> Result<Instance> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let inst = load_instance(&bytes).with_context(|| format!("loading {}", path.display()))?;
    Ok(match agents {
        Some(m) => inst.with_agents(m),
        None => inst,
    })
}
