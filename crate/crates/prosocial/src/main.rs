use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use prosocial::config::{ExperimentConfig, GameSpec, SweepSpec};
use prosocial::formats::{format_matrix, parse_matrix};
use prosocial::harness::{run_experiments, workers_from_env, ExperimentRun};
use prosocial::output::{aggregate, read_results, result_rows, write_results, write_summary, SummaryRow};
use prosocial::{Error, Result};
use prosocial_core::dynamics::{basin_fraction, DynamicConfig};
use prosocial_core::matrix_games::{
    alpha_star, dominance_alpha, enumerate_pure_nash, hunt_dominates_full, is_all_subgames_staghunt,
    is_risk_dominant_hunt, prosocial_transform, pstar, to_bimatrix, ProsocialWeight, StagHuntPayoffs,
    DEFAULT_ALPHA_STEP,
};

#[derive(Parser)]
#[command(name = "prosocial", version, about = "Prosocial learning agents in Stag Hunt games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form analysis of a Stag Hunt or a payoff table.
    Analyze {
        #[arg(long, default_value_t = 2.0)]
        h: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
        /// Sucker payoff.
        #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
        g: f64,
        /// Plain-text payoff table to analyze instead.
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Belief grid points per axis for basin estimates.
        #[arg(long, default_value_t = 101)]
        resolution: usize,
        /// Write basin rows (alpha1, alpha2, g, fraction_hunt, unresolved) here.
        #[arg(long)]
        basins: Option<PathBuf>,
    },
    /// Runs one experiment.
    Run {
        family: Family,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides such as `game.penalty=4` or `replicates=10`.
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Runs every cell of a sweep file.
    Sweep {
        config: PathBuf,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarizes a results CSV.
    Report {
        csv: PathBuf,
        /// Summary CSV path; defaults to `<csv stem>_summary.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Matrix,
    Network,
    Weaklink,
    Markov,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Matrix => "matrix",
            Family::Network => "network",
            Family::Weaklink => "weaklink",
            Family::Markov => "markov",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Analyze {
            h,
            c,
            m,
            g,
            matrix,
            resolution,
            basins,
        } => analyze(h, c, m, g, matrix.as_deref(), resolution, basins.as_deref()).map(|_| true),
        Command::Run {
            family,
            config,
            overrides,
            out,
        } => run(family, config.as_deref(), &overrides, out),
        Command::Sweep { config, overrides, out } => sweep(&config, &overrides, out),
        Command::Report { csv, out } => report(&csv, out).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn analyze(
    h: f64,
    c: f64,
    m: f64,
    g: f64,
    matrix: Option<&Path>,
    resolution: usize,
    basins: Option<&Path>,
) -> Result<()> {
    if let Some(path) = matrix {
        let game = parse_matrix(&fs::read_to_string(path)?, &path.display().to_string())?;
        print!("{}", format_matrix(&game));
        let nash: Vec<String> = enumerate_pure_nash(&game).iter().map(|p| format!("({},{})", p.a1, p.a2)).collect();
        println!("pure Nash equilibria: {}", nash.join(" "));
        if game.is_symmetric() && is_all_subgames_staghunt(&game)? {
            let alpha = dominance_alpha(&game, DEFAULT_ALPHA_STEP)?;
            println!("every 2x2 subgame is a Stag Hunt");
            println!("dominance alpha: {}", alpha.value());
            println!("strategy 0 dominates the full game at that alpha: {}", hunt_dominates_full(&game, alpha));
        } else {
            println!("not a generalized Stag Hunt");
        }
        return Ok(());
    }
    let p = StagHuntPayoffs::new(h, c, m, g)?;
    let selfish = ProsocialWeight::default();
    println!("payoffs: h={h} c={c} m={m} g={g}");
    println!("p*: {}", pstar(&p, selfish));
    println!("alpha*: {}", alpha_star(&p).value());
    println!("hunt is risk dominant: {}", is_risk_dominant_hunt(&p));
    let grid: Vec<ProsocialWeight> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .into_iter()
        .map(ProsocialWeight::new)
        .collect::<prosocial_core::Result<_>>()?;
    let cfg = DynamicConfig::default();
    let mut rows = vec!["alpha1,alpha2,g,fraction_hunt,unresolved".to_string()];
    for &a1 in &grid {
        for &a2 in &grid {
            let game = prosocial_transform(&to_bimatrix(&p), a1, a2);
            let nash: Vec<String> = enumerate_pure_nash(&game).iter().map(|q| format!("({},{})", q.a1, q.a2)).collect();
            let b = basin_fraction(&p, a1, a2, &cfg, resolution)?;
            println!(
                "alpha=({}, {}): p*={:.6} nash={} basin(hunt)={:.4}",
                a1.value(),
                a2.value(),
                pstar(&p, a1),
                nash.join(""),
                b.fraction_hunt
            );
            rows.push(format!("{},{},{g},{},{}", a1.value(), a2.value(), b.fraction_hunt, b.unresolved));
        }
    }
    if let Some(path) = basins {
        fs::write(path, rows.join("\n") + "\n")?;
    }
    Ok(())
}

fn out_dir(explicit: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    explicit
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| Path::new("results").join(&cfg.experiment_id))
}

fn run(family: Family, config: Option<&Path>, overrides: &[String], out: Option<PathBuf>) -> Result<bool> {
    let cfg = match config {
        Some(path) => ExperimentConfig::load(path, overrides)?,
        None => {
            let base = ExperimentConfig::new(GameSpec::default_for(family.name())?);
            ExperimentConfig::from_toml(&base.to_toml()?, overrides)?
        }
    };
    if cfg.game.family() != family.name() {
        return Err(Error::Config(format!(
            "config describes a {} game, not {}",
            cfg.game.family(),
            family.name()
        )));
    }
    let cfg = cfg.resolved()?;
    let dir = out_dir(out, &cfg);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.resolved.toml"), cfg.to_toml()?)?;
    let runs = run_experiments(std::slice::from_ref(&cfg), workers_from_env())?;
    finish(&runs, &dir)
}

fn sweep(path: &Path, overrides: &[String], out: Option<PathBuf>) -> Result<bool> {
    let spec = SweepSpec::load(path, overrides)?;
    let cells = spec.cells()?;
    let dir = out_dir(out, &spec.base);
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.resolved.toml"), spec.to_toml()?)?;
    let runs = run_experiments(&cells, workers_from_env())?;
    finish(&runs, &dir)
}

/// Writes results and summary, reports failures; `false` if any replicate
/// failed.
fn finish(runs: &[ExperimentRun], dir: &Path) -> Result<bool> {
    let rows = result_rows(runs);
    write_results(&rows, fs::File::create(dir.join("results.csv"))?)?;
    let mut ok = true;
    for run in runs {
        println!(
            "{} [{}]: {} replicates, P(payoff-dominant) = {:.3}",
            run.config.experiment_id,
            run.config.condition(),
            run.results.len(),
            run.payoff_dominant_fraction()
        );
        for f in &run.failures {
            ok = false;
            eprintln!("replicate {} (seed {}) failed: {}", f.replicate, f.seed, f.message);
        }
    }
    if !rows.is_empty() {
        write_summary(&aggregate(&rows)?, fs::File::create(dir.join("summary.csv"))?)?;
    }
    println!("wrote {}", dir.display());
    Ok(ok)
}

fn report(csv: &Path, out: Option<PathBuf>) -> Result<()> {
    let rows = read_results(fs::File::open(csv)?)?;
    let summary = aggregate(&rows)?;
    let out = out.unwrap_or_else(|| {
        let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
        csv.with_file_name(format!("{stem}_summary.csv"))
    });
    write_summary(&summary, fs::File::create(&out)?)?;
    print_final_blocks(&summary);
    println!("wrote {}", out.display());
    Ok(())
}

fn print_final_blocks(summary: &[SummaryRow]) {
    let fmt_se = |se: Option<f64>| se.map_or("-".to_string(), |s| format!("{s:.4}"));
    for row in summary {
        let last = summary
            .iter()
            .filter(|r| r.experiment_id == row.experiment_id && r.condition == row.condition)
            .map(|r| r.block)
            .max();
        if Some(row.block) != last {
            continue;
        }
        println!(
            "{} [{}] block {} agent {}: n={} reward {:.4} (se {}) coord {:.4} P(payoff-dominant) {:.3} (se {})",
            row.experiment_id,
            row.condition,
            row.block,
            row.agent,
            row.n,
            row.mean_reward,
            fmt_se(row.mean_reward_se),
            row.coord_rate,
            row.p_payoff_dominant,
            fmt_se(row.p_payoff_dominant_se)
        );
    }
}
