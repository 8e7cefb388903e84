//! `mcsa`: generate instances, solve them, run replicated sweeps and draw
//! the results.
//!
//! Exit status is 0 on success, 1 on a usage error and 2 when the command
//! itself fails.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mcsa::geogen::{generate, GenSpec};
use mcsa::harness::{run_sweep, InstanceSource, SweepSpec};
use mcsa::io::{
    aggregate_events, load_instance, read_assignment, read_events, read_records, save_instance, write_assignment,
    Strictness, SummaryRow,
};
use mcsa::oracle::{enumerate_with_budget, DEFAULT_BUDGET};
use mcsa::pipeline::{solve, Algorithm, SolverConfig};
use mcsa::render::{curves_csv, render_curves, render_map, Metric};
use mcsa::{GridLayout, Instance, Point};

#[derive(Parser)]
#[command(name = "mcsa", version, about = "Edge server placement under backhaul-cost and geo-spread objectives")]
struct Cli {
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, env = "MCSA_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write an instance file from a generator preset or an event CSV.
    Gen(GenArgs),
    /// Solve one instance with one algorithm.
    Solve(SolveArgs),
    /// Run every algorithm over capacities, location sets and starts.
    Sweep(SweepArgs),
    /// Exhaustively solve a tiny instance.
    Oracle(OracleArgs),
    /// Draw an assignment as SVG.
    Render(RenderArgs),
    /// Draw cost and spread against capacity from a sweep summary.
    PlotCurves(PlotArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 500 random cells, uniform pair demand, 50 sites, 10 servers.
    Synthetic500,
    /// 25 x 25 grid with distance-decaying demand, 50 sites, 10 servers.
    Gravity,
}

#[derive(Args)]
struct PresetArgs {
    #[arg(long, value_enum, default_value = "synthetic500")]
    preset: Preset,
    /// Distance decay length of the gravity preset.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Log-scale spread of per-cell activity in the gravity preset.
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
}

impl PresetArgs {
    fn spec(&self, seed: u64, capacity: f64) -> GenSpec {
        match self.preset {
            Preset::Synthetic500 => GenSpec::synthetic500(seed, capacity),
            Preset::Gravity => GenSpec::gravity_grid(seed, capacity, self.lambda, self.sigma),
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    preset: PresetArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.05)]
    capacity: f64,
    /// Build the workload from an `ax,ay,bx,by,weight` CSV instead.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Event grid as `rows,cols,cell_size[,origin_x,origin_y]`.
    #[arg(long, default_value = "25,25,0.04")]
    grid: String,
    /// Skip event records outside the grid instead of failing.
    #[arg(long)]
    lenient: bool,
    /// Candidate sites and servers for event instances.
    #[arg(long, default_value_t = 50)]
    candidates: usize,
    #[arg(long, default_value_t = 10)]
    servers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[arg(long, default_value = "KMED_FM_HUNG")]
    algo: Algorithm,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the instance capacity.
    #[arg(long)]
    capacity: Option<f64>,
    #[arg(long, default_value_t = 1e-4)]
    kappa: f64,
    /// Relative spread slack for cost refinement; `inf` for none.
    #[arg(long, default_value_t = f64::INFINITY)]
    epsilon: f64,
    /// Assignment CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML file with the sweep fields; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Instance file to sweep instead of a preset.
    #[arg(long, conflicts_with = "preset")]
    instance: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    capacity: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<Algorithm>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    location_sets: Option<usize>,
    #[arg(long)]
    initials: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Record wall time per run (reports then differ between executions).
    #[arg(long)]
    timing: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    instance: PathBuf,
    #[arg(long)]
    capacity: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u64,
    /// Pareto set CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RenderArgs {
    instance: PathBuf,
    assignment: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// `summary.csv` written by `sweep`.
    summary: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let dir = cli.out_dir;
    match cli.command {
        Command::Gen(a) => gen(a, &dir),
        Command::Solve(a) => solve_cmd(a, &dir),
        Command::Sweep(a) => sweep(a, &dir),
        Command::Oracle(a) => oracle(a, &dir),
        Command::Render(a) => render(a, &dir),
        Command::PlotCurves(a) => plot(a, &dir),
    }
}

fn resolve(explicit: Option<PathBuf>, dir: &Path, name: &str) -> PathBuf {
    explicit.unwrap_or_else(|| dir.join(name))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))?;
    }
    Ok(())
}

fn load(path: &Path, capacity: Option<f64>) -> Result<Instance> {
    let inst = load_instance(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match capacity {
        Some(c) => inst.with_capacity(c)?,
        None => inst,
    })
}

fn parse_grid(text: &str) -> Result<GridLayout> {
    let parts: Vec<f64> =
        text.split(',').map(|p| p.trim().parse::<f64>()).collect::<Result<_, _>>().context("grid values")?;
    let (rows, cols, size) = match parts.as_slice() {
        [r, c, s] | [r, c, s, _, _] => (*r, *c, *s),
        _ => bail!("grid needs rows,cols,cell_size[,origin_x,origin_y]"),
    };
    let origin = if parts.len() == 5 { Point::new(parts[3], parts[4]) } else { Point::new(0.0, 0.0) };
    Ok(GridLayout { rows: rows as usize, cols: cols as usize, cell_size: size, origin })
}

fn gen(a: GenArgs, dir: &Path) -> Result<()> {
    let inst = match &a.events {
        None => generate(&a.preset.spec(a.seed, a.capacity))?,
        Some(path) => {
            let grid = parse_grid(&a.grid)?;
            let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
            let strict = if a.lenient { Strictness::Lenient } else { Strictness::Strict };
            let agg = aggregate_events(read_events(BufReader::new(file)), grid, strict)?;
            if agg.dropped > 0 {
                eprintln!("dropped {} event records outside the grid or with bad weight", agg.dropped);
            }
            let area = mcsa::geogen::Area {
                min: grid.origin,
                max: Point::new(grid.origin.x + grid.width(), grid.origin.y + grid.height()),
            };
            let sites = mcsa::geogen::sample_candidates(area, a.candidates, a.seed);
            agg.into_instance(sites, a.servers, a.capacity)?
        }
    };
    let out = resolve(a.out, dir, "instance.txt");
    ensure_parent(&out)?;
    save_instance(&out, &inst)?;
    println!("wrote {} ({} cells, {} candidates)", out.display(), inst.n_cells(), inst.n_candidates());
    Ok(())
}

fn solve_cmd(a: SolveArgs, dir: &Path) -> Result<()> {
    let inst = load(&a.instance, a.capacity)?;
    let config = SolverConfig { kappa: a.kappa, epsilon: a.epsilon, ..SolverConfig::new(a.algo, a.seed) };
    let sol = solve(&inst, &config)?;
    let t = &sol.trace;
    println!("initial      cost {:.6} spread {:.6}", t.initial.cost, t.initial.spread);
    if let Some(p) = &t.location_search {
        println!(
            "k-median     cost {:.6} spread {:.6} ({} swaps)",
            p.result.cost,
            p.result.spread,
            p.swap_spreads.len() - 1
        );
    }
    if let Some(p) = &t.cost_refinement {
        println!("refinement   cost {:.6} spread {:.6} ({} commits)", p.result.cost, p.result.spread, p.commits.len());
    }
    if let Some(p) = &t.relocation {
        println!("relocation   cost {:.6} spread {:.6}", p.cost, p.spread);
    }
    if t.hit_sweep_limit() {
        eprintln!("warning: a phase stopped on its sweep limit");
    }
    let out = resolve(a.out, dir, "assignment.csv");
    ensure_parent(&out)?;
    write_assignment(BufWriter::new(fs::File::create(&out)?), &sol.assignment)?;
    println!("{} cost {} spread {}", a.algo, sol.objectives.cost, sol.objectives.spread);
    Ok(())
}

fn sweep_spec(a: &SweepArgs) -> Result<SweepSpec> {
    let mut spec = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str::<SweepSpec>(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SweepSpec::new(InstanceSource::Generated(GenSpec::synthetic500(0, 0.05)), 0),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(path) = &a.instance {
        spec.source = InstanceSource::File { path: path.clone() };
    }
    if let Some(p) = a.preset {
        let preset = PresetArgs { preset: p, lambda: a.lambda.unwrap_or(0.1), sigma: a.sigma.unwrap_or(0.5) };
        spec.source = InstanceSource::Generated(preset.spec(spec.seed, 0.05));
    } else if a.lambda.is_some() || a.sigma.is_some() {
        bail!("--lambda and --sigma need --preset gravity");
    }
    if let Some(c) = &a.capacity {
        spec.capacities = c.clone();
    }
    if let Some(al) = &a.algo {
        spec.algorithms = al.clone();
    }
    if let Some(n) = a.location_sets {
        spec.n_location_sets = n;
    }
    if let Some(n) = a.initials {
        spec.n_initials = n;
    }
    if let Some(k) = a.kappa {
        spec.kappa = k;
    }
    if let Some(e) = a.epsilon {
        spec.epsilon = e;
    }
    spec.timing |= a.timing;
    Ok(spec)
}

fn sweep(a: SweepArgs, dir: &Path) -> Result<()> {
    let spec = sweep_spec(&a)?;
    let out = resolve(a.out, dir, "sweep");
    let report = run_sweep(&spec)?;
    report.write_to_dir(&out)?;
    fs::write(out.join("spec.toml"), toml::to_string(&spec)?)?;
    for s in &report.summary {
        println!(
            "{:<13} W={:<5} cost {:.4} [{:.4}, {:.4}]  spread {:.4} [{:.4}, {:.4}]  load ratio {:.2}",
            s.algo, s.capacity, s.cost_mean, s.cost_min, s.cost_max, s.spread_mean, s.spread_min, s.spread_max,
            s.load_ratio_mean
        );
    }
    println!("wrote {}", out.display());
    if !report.failures.is_empty() {
        bail!("{} runs failed; see {}", report.failures.len(), out.join("failures.csv").display());
    }
    Ok(())
}

fn oracle(a: OracleArgs, dir: &Path) -> Result<()> {
    let inst = load(&a.instance, a.capacity)?;
    let r = enumerate_with_budget(&inst, a.budget)?;
    println!("evaluated {} assignments", r.evaluations);
    println!("min cost   {} (spread {})", r.min_cost.objectives.cost, r.min_cost.objectives.spread);
    println!("min spread {} (cost {})", r.min_spread.objectives.spread, r.min_spread.objectives.cost);
    let out = resolve(a.out, dir, "pareto.csv");
    ensure_parent(&out)?;
    let mut w = BufWriter::new(fs::File::create(&out)?);
    writeln!(w, "cost,spread,servers,cells")?;
    for p in &r.pareto {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(
            w,
            "{},{},{},{}",
            p.objectives.cost,
            p.objectives.spread,
            join(p.assignment.server_locations()),
            join(p.assignment.cell_to_location())
        )?;
    }
    w.flush()?;
    println!("{} Pareto points written to {}", r.pareto.len(), out.display());
    Ok(())
}

fn render(a: RenderArgs, dir: &Path) -> Result<()> {
    let inst = load(&a.instance, None)?;
    let file = fs::File::open(&a.assignment).with_context(|| format!("opening {}", a.assignment.display()))?;
    let asg = read_assignment(BufReader::new(file))?;
    mcsa::validate(&inst, &asg)?;
    let out = resolve(a.out, dir, "map.svg");
    ensure_parent(&out)?;
    fs::write(&out, render_map(&inst, &asg)).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn plot(a: PlotArgs, dir: &Path) -> Result<()> {
    let file = fs::File::open(&a.summary).with_context(|| format!("opening {}", a.summary.display()))?;
    let rows: Vec<SummaryRow> = read_records(BufReader::new(file))?;
    let out = resolve(a.out, dir, "curves");
    fs::create_dir_all(&out)?;
    fs::write(out.join("cost.svg"), render_curves(&rows, Metric::Cost))?;
    fs::write(out.join("spread.svg"), render_curves(&rows, Metric::Spread))?;
    fs::write(out.join("curves.csv"), curves_csv(&rows))?;
    println!("wrote {}", out.display());
    Ok(())
}
