use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use singlab::distance::DomainBox;
use singlab::fractal::{box_counting_dimension, cantor_for_dimension, cantor_grill, default_scale_range, BoxUnion};
use singlab::poisson::{fit_singularity_order, solve_poisson, Grid, GridField, SamplingRule, SolverConfig};
use singlab::rhs::{build_rhs, hp_check, BuildOptions, Grade, HpOptions, NormOptions};
use singlab::singdim::{envelope_radius, sd_map, usc_check, SdLattice, USC_SLACK};
use singlab_cli::plots::write_outputs;
use singlab_cli::{run_scenario, ConfigError, ScenarioConfig, ScenarioName};

const EXIT_CHECKS: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "singlab", version, about = "Singular right-hand sides, their Poisson solutions and singular dimension maps")]
struct Cli {
    /// Scenario configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GradeArg {
    Theorem,
    Exploratory,
}

#[derive(Subcommand)]
enum Command {
    /// Generalized Cantor set or grill of a target dimension.
    Cantor {
        #[arg(long)]
        dim: f64,
        #[arg(long, default_value_t = 12)]
        generation: usize,
        /// Ambient dimension of the grill.
        #[arg(long, default_value_t = 1)]
        ambient: usize,
        /// Number of `[0, 1]` factors.
        #[arg(long, default_value_t = 0)]
        thick: usize,
    },
    /// Box-counting dimension of a set file (`.json` or box `.csv`).
    Dimest {
        set: PathBuf,
        #[arg(long)]
        eps_min: Option<f64>,
        #[arg(long)]
        eps_max: Option<f64>,
        #[arg(long, default_value_t = 10)]
        per_decade: usize,
    },
    /// Integrability of `d(., A)^-gamma` in `L^p` of a box.
    HpCheck {
        set: PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lo: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        hi: Vec<f64>,
        #[arg(long, default_value_t = 1 << 18)]
        budget: u64,
    },
    /// Normalized sum of distance powers over the given sets.
    RhsBuild {
        #[arg(required = true)]
        sets: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lo: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        hi: Vec<f64>,
        #[arg(long, value_enum, default_value_t = GradeArg::Theorem)]
        grade: GradeArg,
        #[arg(long, default_value_t = 1 << 18)]
        budget: u64,
    },
    /// Zero-Dirichlet grid solve of `-Lap u = F` for a built right-hand side.
    Solve {
        /// `rhs.json` written by `rhs-build`.
        rhs: PathBuf,
        #[arg(long, default_value_t = 17)]
        nodes: usize,
    },
    /// Power-law fit of a solved field near a point.
    FitExponent {
        /// `.bin` field written by `solve`.
        field: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        point: Vec<f64>,
        /// Distances are measured to this set; to the point when absent.
        #[arg(long)]
        set: Option<PathBuf>,
        #[arg(long)]
        window_lo: f64,
        #[arg(long)]
        window_hi: f64,
    },
    /// Singular dimension map of a built right-hand side on a full lattice.
    Sdmap {
        rhs: PathBuf,
        #[arg(long)]
        spacing: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        radii: Vec<f64>,
    },
    /// Runs a named scenario end to end; the name may come from `--config`.
    Scenario { name: Option<ScenarioName> },
}

enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .init();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CHECKS),
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn seed(cli: &Cli) -> u64 {
    cli.seed.unwrap_or(0)
}

fn read_set(path: &Path) -> anyhow::Result<BoxUnion> {
    let ctx = || format!("reading {}", path.display());
    if path.extension().is_some_and(|e| e == "csv") {
        Ok(singlab::io::read_boxes_csv(BufReader::new(File::open(path).with_context(ctx)?)).with_context(ctx)?)
    } else {
        Ok(singlab::io::read_json(path).with_context(ctx)?)
    }
}

/// `[lo, hi]` when both are given, otherwise the set's bounding box grown
/// by its diameter (at least 1) on every side.
fn domain_for(lo: &[f64], hi: &[f64], sets: &[&BoxUnion]) -> Result<DomainBox, Failure> {
    if !lo.is_empty() || !hi.is_empty() {
        return DomainBox::new(lo.to_vec(), hi.to_vec()).map_err(|e| Failure::Config(e.to_string()));
    }
    let union = BoxUnion::union(sets).map_err(anyhow::Error::from)?;
    let (mut a, mut b) = union.bounding_box();
    let grow = union.diameter().max(1.0);
    a.iter_mut().for_each(|v| *v -= grow);
    b.iter_mut().for_each(|v| *v += grow);
    Ok(DomainBox::new(a, b).map_err(anyhow::Error::from)?)
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    match &cli.command {
        Command::Cantor { dim, generation, ambient, thick } => {
            let c = cantor_for_dimension(*dim, *generation).map_err(|e| Failure::Config(e.to_string()))?;
            let set = if *ambient == 1 && *thick == 0 {
                c.to_union()
            } else {
                cantor_grill(&c, *ambient, *thick).map_err(|e| Failure::Config(e.to_string()))?
            };
            let dir = out_dir(cli, "out/cantor");
            fs::create_dir_all(&dir).map_err(anyhow::Error::from)?;
            singlab::io::write_json(&dir.join("set.json"), &set).map_err(anyhow::Error::from)?;
            singlab::io::write_boxes_csv(File::create(dir.join("set.csv")).map_err(anyhow::Error::from)?, &set)
                .map_err(anyhow::Error::from)?;
            let est = box_counting_dimension(&set, default_scale_range(&set), 10).map_err(anyhow::Error::from)?;
            print_json(&json!({ "boxes": set.len(), "target": dim, "ratio": c.schedule().ratios()[0], "slope": est.slope, "r_squared": est.r_squared }));
            Ok(true)
        }
        Command::Dimest { set, eps_min, eps_max, per_decade } => {
            let set = read_set(set)?;
            let (lo, hi) = default_scale_range(&set);
            let est = box_counting_dimension(&set, (eps_min.unwrap_or(lo), eps_max.unwrap_or(hi)), *per_decade)
                .map_err(anyhow::Error::from)?;
            print_json(&serde_json::to_value(&est).map_err(anyhow::Error::from)?);
            Ok(true)
        }
        Command::HpCheck { set, gamma, p, lo, hi, budget } => {
            let set = read_set(set)?;
            let omega = domain_for(lo, hi, &[&set])?;
            let opts = HpOptions {
                norm: NormOptions {
                    budget: *budget,
                    seed: seed(cli),
                    depth: None,
                },
                scales_per_decade: 10,
            };
            let report = hp_check(&set, *gamma, *p, &omega, &opts).map_err(anyhow::Error::from)?;
            print_json(&serde_json::to_value(&report).map_err(anyhow::Error::from)?);
            Ok(true)
        }
        Command::RhsBuild { sets, gammas, lo, hi, grade, budget } => {
            let sets: Vec<BoxUnion> = sets.iter().map(|p| read_set(p)).collect::<anyhow::Result<_>>()?;
            if sets.len() != gammas.len() {
                return Err(Failure::Config(format!("{} sets but {} exponents", sets.len(), gammas.len())));
            }
            let refs: Vec<&BoxUnion> = sets.iter().collect();
            let domain = domain_for(lo, hi, &refs)?;
            let opts = BuildOptions {
                grade: match grade {
                    GradeArg::Theorem => Grade::Theorem,
                    GradeArg::Exploratory => Grade::Exploratory,
                },
                norm: NormOptions {
                    budget: *budget,
                    seed: seed(cli),
                    depth: None,
                },
                ..BuildOptions::default()
            };
            let f = build_rhs(&sets, gammas, &domain, sets.len(), &opts).map_err(|e| match e {
                singlab::Error::Window(_) | singlab::Error::Domain(_) => Failure::Config(e.to_string()),
                e => Failure::Runtime(e.into()),
            })?;
            let dir = out_dir(cli, "out/rhs");
            singlab::io::write_rhs(&dir, &f).map_err(anyhow::Error::from)?;
            let csv = File::create(dir.join("integrability.csv")).map_err(anyhow::Error::from)?;
            singlab::io::write_integrability_csv(csv, f.diagnostics()).map_err(anyhow::Error::from)?;
            print_json(&json!({ "terms": f.terms().len(), "normalized_sum": f.normalized_sum(), "gamma_bar": f.gamma_bar(), "out": dir }));
            Ok(true)
        }
        Command::Solve { rhs, nodes } => {
            let f = singlab::io::read_rhs(rhs).map_err(anyhow::Error::from)?;
            let grid = Grid::uniform(f.domain().clone(), *nodes).map_err(|e| Failure::Config(e.to_string()))?;
            let field = GridField::sample(grid, &|x| f.value(x), SamplingRule::Node).map_err(anyhow::Error::from)?;
            let (u, report) = solve_poisson(&field, &SolverConfig::default()).map_err(anyhow::Error::from)?;
            let dir = out_dir(cli, "out/solve");
            fs::create_dir_all(&dir).map_err(anyhow::Error::from)?;
            singlab::io::write_field(&dir, "u", &u).map_err(anyhow::Error::from)?;
            print_json(&serde_json::to_value(&report).map_err(anyhow::Error::from)?);
            Ok(true)
        }
        Command::FitExponent { field, point, set, window_lo, window_hi } => {
            let u = singlab::io::read_field_bin(BufReader::new(File::open(field).map_err(anyhow::Error::from)?))
                .map_err(anyhow::Error::from)?;
            let set = match set {
                Some(p) => read_set(p)?,
                None => BoxUnion::point(point),
            };
            let fit = fit_singularity_order(&u, point, &set, (*window_lo, *window_hi)).map_err(anyhow::Error::from)?;
            print_json(&serde_json::to_value(&fit).map_err(anyhow::Error::from)?);
            Ok(true)
        }
        Command::Sdmap { rhs, spacing, radii } => {
            let f = singlab::io::read_rhs(rhs).map_err(anyhow::Error::from)?;
            let lattice = SdLattice::full(*spacing, f.dim());
            let map = sd_map(&f, &lattice, radii)
                .and_then(|m| m.with_envelope(&f, envelope_radius(*spacing, radii)))
                .map_err(|e| Failure::Config(e.to_string()))?;
            let violations = usc_check(&map, USC_SLACK);
            let dir = out_dir(cli, "out/sdmap");
            fs::create_dir_all(&dir).map_err(anyhow::Error::from)?;
            singlab::io::write_sdmap_csv(File::create(dir.join("sdmap.csv")).map_err(anyhow::Error::from)?, &map)
                .map_err(anyhow::Error::from)?;
            singlab::io::write_violations(&dir.join("usc_violations.json"), USC_SLACK, &violations)
                .map_err(anyhow::Error::from)?;
            print_json(&json!({ "points": map.points.len(), "usc_violations": violations.len(), "out": dir }));
            Ok(violations.is_empty())
        }
        Command::Scenario { name } => {
            let mut config = match (&cli.config, name) {
                (Some(path), _) => ScenarioConfig::load(path)?,
                (None, Some(n)) => ScenarioConfig::preset(*n),
                (None, None) => return Err(Failure::Config("name a scenario or pass --config".into())),
            };
            if let Some(n) = name {
                if *n != config.scenario {
                    return Err(Failure::Config(format!(
                        "scenario {} requested but the config describes {}",
                        n.as_str(),
                        config.scenario.as_str()
                    )));
                }
            }
            if let Some(s) = cli.seed {
                config.seed = s;
            }
            let dir = cli
                .out
                .clone()
                .or_else(|| config.output.clone())
                .unwrap_or_else(|| PathBuf::from("out").join(config.scenario.as_str()));
            let report = run_scenario(&config)?;
            write_outputs(&report, &dir).map_err(|e| anyhow!("writing {}: {e:#}", dir.display()))?;
            for c in &report.checks {
                println!("{} {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            for e in &report.errors {
                println!("ERROR {}: {}", e.step, e.message);
            }
            let s = &report.summary;
            println!(
                "{}: {}/{} checks passed, {} step errors, {:.1} s; report in {}",
                config.scenario.as_str(),
                s.passed,
                s.checks,
                s.errors,
                report.timing.total_seconds,
                dir.display()
            );
            if !report.errors.is_empty() {
                return Err(Failure::Runtime(anyhow!("{} scenario steps failed", report.errors.len())));
            }
            Ok(s.all_passed)
        }
    }
}
