//! Batch front end: `graphex <subcommand> ...`.
//!
//! Exit codes: 0 success, 1 I/O and other failures, 2 usage or precondition
//! errors, 3 validation or parse failures, 4 when a search ran out of budget
//! without reaching its target (the best result found is still written).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::canonical::{self, DEFAULT_TOL};
use crate::densities::{self, PatternGraph};
use crate::diagnostics;
use crate::distances::{self, CouplingConfig, DeltaGpConfig};
use crate::error::{GraphexError, Result};
use crate::estimation::{self, ExperimentConfig};
use crate::fixtures;
use crate::graphex::{validate, RawGraphex, StepGraphex};
use crate::norms::{self, SearchMode, SetNormConfig, SetNormKind};
use crate::regularity::{self, RegularityConfig};
use crate::sampling::{self, PlainGraph, SampledGraph, TrialOptions};

#[derive(Parser, Debug)]
#[command(name = "graphex", version, about = "Step graphexes: sampling, norms, distances, regularity")]
struct Cli {
    /// Write output here instead of stdout (a directory for `sample`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// `key=value` defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every invariant of a graphex file.
    Validate { input: PathBuf },
    /// Norm of the graphon part.
    Norm {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "kernel")]
        kind: NormKind,
        #[arg(long, value_enum, default_value = "exact")]
        mode: Mode,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Distance between two graphexes.
    Distance {
        first: PathBuf,
        second: PathBuf,
        #[arg(long, value_enum, default_value = "delta22")]
        metric: Metric,
        /// Slack mass of the trivial extensions; doubled adaptively if absent.
        #[arg(long)]
        slack: Option<f64>,
        /// Local-search restarts.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        moves: Option<usize>,
        /// Degree bounds for `deltagp`, comma separated; `inf` allowed.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Weak regularity partition.
    Regularize {
        input: PathBuf,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        b: Option<f64>,
        #[arg(long)]
        c: Option<f64>,
        #[arg(long)]
        d: Option<f64>,
        /// Exactly `--parts` parts of mass `--rho` each.
        #[arg(long)]
        equal_parts: bool,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        parts: Option<usize>,
        /// Round budget; stopping short of a certificate exits with 4.
        #[arg(long)]
        max_rounds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Draw graphex process samples.
    Sample {
        input: PathBuf,
        #[arg(long = "T")]
        t: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        loops: bool,
        #[arg(long)]
        keep_isolated: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Homomorphism density of a pattern, or injective counts in a sampled graph.
    Density {
        /// One graphex (or one per pattern edge), or a sampled graph file.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Preset name or edge list such as `0-1,1-2`.
        #[arg(long, default_value = "edge")]
        pattern: String,
    },
    /// Sampling convergence experiment (CSV).
    Converge {
        input: PathBuf,
        /// Horizons, comma separated.
        #[arg(long = "T")]
        t: Option<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        moves: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tightness, integrability and tail profiles (JSON).
    Diagnose {
        input: PathBuf,
        /// Degree bounds, comma separated; the distinct marginal values if absent.
        #[arg(long)]
        grid: Option<String>,
        /// Horizon for the edge-count moment prediction.
        #[arg(long = "T")]
        t: Option<f64>,
    },
    /// Canonical form.
    Canon {
        input: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Decide equivalence of two graphexes.
    Equiv {
        first: PathBuf,
        second: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Emit a built-in fixture.
    Fixtures {
        /// One of constant, example-ex1, example-ex1-partner, star-only, dust-only, ui-family.
        name: String,
        /// Fixture parameter.
        #[arg(long, visible_aliases = ["c", "n", "s", "dust"])]
        p: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormKind {
    Kernel,
    Jumble,
    Cut,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Exact,
    Heuristic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Metric {
    D22,
    Djbl,
    Delta22,
    Deltagp,
}

/// Failures of the front end itself, on top of library errors.
enum Failure {
    Usage(String),
    Lib(GraphexError),
    /// Output was written but the search missed its target.
    Budget,
}

impl From<GraphexError> for Failure {
    fn from(e: GraphexError) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &GraphexError) -> i32 {
    match e {
        GraphexError::Invalid(_) | GraphexError::Parse(_) | GraphexError::Json(_) => 3,
        GraphexError::Domain(_) | GraphexError::Precondition(_) | GraphexError::Mismatch(_) | GraphexError::Cap(_) => 2,
        GraphexError::Infeasible(_) => 4,
        GraphexError::Io(_) => 1,
    }
}

/// Runs the CLI on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let config = match cli.config.as_deref().map(Config::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(f) => return report(f),
    };
    let workers = match config.pick(cli.workers, "workers") {
        Ok(w) => w,
        Err(f) => return report(f),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        pool = pool.num_threads(w.max(1));
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => return report(Failure::Usage(format!("cannot start workers: {e}"))),
    };
    match pool.install(|| dispatch(&cli, &config)) {
        Ok(()) => 0,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> i32 {
    match f {
        Failure::Usage(msg) => {
            eprintln!("error: {msg}");
            2
        }
        Failure::Lib(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
        Failure::Budget => {
            eprintln!("warning: budget exhausted before the target was certified");
            4
        }
    }
}

#[derive(Default)]
struct Config(BTreeMap<String, String>);

impl Config {
    fn load(path: &Path) -> std::result::Result<Config, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::Lib(e.into()))?;
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Failure::Lib(GraphexError::Parse(format!("config line {}: expected key=value", n + 1))))?;
            map.insert(k.trim().replace('-', "_"), v.trim().trim_matches('"').to_string());
        }
        Ok(Config(map))
    }

    /// The flag if given, else the config value under `key`.
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> std::result::Result<Option<T>, Failure> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.0.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Failure::Lib(GraphexError::Parse(format!("config key {key}: cannot parse {v:?}")))),
        }
    }

    fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> std::result::Result<T, Failure> {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }

    fn seed(&self, flag: Option<u64>, what: &str) -> std::result::Result<u64, Failure> {
        self.pick(flag, "seed")?
            .ok_or_else(|| Failure::Usage(format!("{what} is randomized and needs --seed")))
    }
}

fn read_graphex(path: &Path) -> Result<StepGraphex> {
    StepGraphex::from_json(&fs::read_to_string(path)?)
}

fn parse_list(text: &str) -> std::result::Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|x| match x.trim() {
            "inf" | "infinity" => Ok(f64::INFINITY),
            v => v.parse::<f64>().map_err(|_| Failure::Usage(format!("bad number {v:?} in list"))),
        })
        .collect()
}

fn write_out(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn write_json(out: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_out(out, &text)
}

fn dispatch(cli: &Cli, cfg: &Config) -> std::result::Result<(), Failure> {
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Validate { input } => {
            let text = fs::read_to_string(input).map_err(GraphexError::from)?;
            let raw: RawGraphex = serde_json::from_str(&text).map_err(GraphexError::from)?;
            let report = validate(&raw);
            write_json(out, &json!({ "valid": report.is_valid(), "violations": report.violations }))?;
            if report.is_valid() {
                Ok(())
            } else {
                Err(Failure::Lib(GraphexError::Invalid(report)))
            }
        }
        Command::Norm { input, kind, mode, restarts, seed } => {
            let g = read_graphex(input)?;
            let u = g.graphon_function();
            let value = match kind {
                NormKind::Kernel => {
                    let tol = cfg.or(None, "tol", norms::DEFAULT_KERNEL_TOL)?;
                    json!({ "kind": "kernel", "value": norms::kernel_norm(&u, tol)? })
                }
                NormKind::Jumble | NormKind::Cut => {
                    let set_kind = if matches!(kind, NormKind::Jumble) { SetNormKind::Jumble } else { SetNormKind::Cut };
                    let search = match mode {
                        Mode::Exact => SearchMode::Exact,
                        Mode::Heuristic => SearchMode::Heuristic,
                    };
                    let mut set_cfg = SetNormConfig::new(set_kind, search).restarts(cfg.or(*restarts, "restarts", 20)?);
                    if matches!(mode, Mode::Heuristic) {
                        set_cfg = set_cfg.seed(cfg.seed(*seed, "heuristic norm search")?);
                    }
                    let r = norms::bilinear_set_norm(&u, &set_cfg)?;
                    json!({
                        "kind": set_kind,
                        "mode": search,
                        "seed": matches!(mode, Mode::Heuristic).then_some(set_cfg.seed),
                        "result": r,
                    })
                }
            };
            write_json(out, &value)?;
            Ok(())
        }
        Command::Distance { first, second, metric, slack, budget, moves, grid, seed } => {
            let (g1, g2) = (read_graphex(first)?, read_graphex(second)?);
            match metric {
                Metric::D22 | Metric::Djbl => {
                    let b = distances::d22(&g1, &g2)?;
                    let value = if matches!(metric, Metric::D22) { b.d22 } else { b.d_jbl };
                    write_json(out, &json!({ "metric": metric_name(*metric), "value": value, "breakdown": b }))?;
                    Ok(())
                }
                Metric::Delta22 => {
                    let seed = cfg.seed(*seed, "coupling search")?;
                    let ccfg = coupling_config(cfg, *slack, *budget, *moves, seed, CouplingConfig::default())?;
                    let r = distances::optimize_coupling(&g1, &g2, &ccfg)?;
                    write_json(
                        out,
                        &json!({
                            "metric": "delta22",
                            "seed": seed,
                            "value": r.certificate,
                            "breakdown": r.breakdown,
                            "slack_mass": r.slack_mass,
                            "budget_exhausted": r.budget_exhausted,
                            "exhaustive": r.exhaustive,
                            "coupling": r.coupling,
                        }),
                    )?;
                    Ok(())
                }
                Metric::Deltagp => {
                    let seed = cfg.seed(*seed, "coupling search")?;
                    let ccfg = coupling_config(cfg, *slack, *budget, *moves, seed, CouplingConfig::quick(seed))?;
                    let grid = match grid {
                        Some(g) => parse_list(g)?,
                        None => distances::default_degree_grid(&g1, &g2),
                    };
                    let est = distances::delta_gp_estimate(&g1, &g2, &grid, &DeltaGpConfig { coupling: ccfg, mass_scaling: true })?;
                    let top = g1.max_marginal().max(g2.max_marginal());
                    let lower = distances::delta_gp_lower_bound(&g1, &g2, top)?;
                    write_json(
                        out,
                        &json!({
                            "metric": "deltagp",
                            "seed": seed,
                            "value": est.value,
                            "lower_bound": lower,
                            "best_degree_bound": finite_or_null(est.best_degree_bound),
                            "budget_exhausted": est.budget_exhausted,
                            "rows": est.rows.iter().map(|r| json!({
                                "degree_bound": finite_or_null(r.degree_bound),
                                "removed_mass": r.removed_mass,
                                "scale": r.scale,
                                "coupling_certificate": r.coupling_certificate,
                                "value": r.value,
                            })).collect::<Vec<_>>(),
                        }),
                    )?;
                    Ok(())
                }
            }
        }
        Command::Regularize { input, eps, b, c, d, equal_parts, rho, parts, max_rounds, seed } => {
            let g = read_graphex(input)?;
            let seed = cfg.seed(*seed, "regularity partitioning")?;
            let mut rcfg = RegularityConfig::new(
                cfg.or(*eps, "eps", 0.3)?,
                cfg.or(*b, "b", g.max_graphon())?,
                cfg.or(*c, "c", g.l1_norm())?,
                cfg.or(*d, "d", g.max_marginal())?,
            );
            rcfg.seed = seed;
            rcfg.finder_restarts = cfg.or(None, "restarts", rcfg.finder_restarts)?;
            rcfg.max_rounds = cfg.pick(*max_rounds, "max_rounds")?;
            if *equal_parts {
                let rho = cfg.pick(*rho, "rho")?.ok_or_else(|| Failure::Usage("--equal-parts needs --rho".into()))?;
                let m = cfg.pick(*parts, "parts")?.ok_or_else(|| Failure::Usage("--equal-parts needs --parts".into()))?;
                let r = regularity::equal_parts_partition(&g, &rcfg, rho, m)?;
                write_json(out, &json!({ "seed": seed, "eps": rcfg.eps, "result": r }))?;
                Ok(())
            } else {
                let r = regularity::weak_regularity_partition(&g, &rcfg, None)?;
                write_json(out, &json!({ "seed": seed, "eps": rcfg.eps, "result": r }))?;
                if r.budget_exhausted {
                    Err(Failure::Budget)
                } else {
                    Ok(())
                }
            }
        }
        Command::Sample { input, t, trials, loops, keep_isolated, seed } => {
            let g = read_graphex(input)?;
            let seed = cfg.seed(*seed, "sampling")?;
            let t = cfg.pick(*t, "T")?.ok_or_else(|| Failure::Usage("sample needs --T".into()))?;
            let trials = cfg.or(*trials, "trials", 1)?;
            let opts = TrialOptions {
                keep_isolated: *keep_isolated || cfg.or(None, "keep_isolated", false)?,
                loops: *loops || cfg.or(None, "loops", false)?,
            };
            let graphs = sampling::sample_trials(&g, t, trials, seed, &opts)?;
            match out {
                Some(dir) => {
                    fs::create_dir_all(dir).map_err(GraphexError::from)?;
                    for (k, s) in graphs.iter().enumerate() {
                        let text = format!("# seed={seed} trial={k}\n{s}");
                        fs::write(dir.join(format!("graph_{k:04}.txt")), text).map_err(GraphexError::from)?;
                    }
                }
                None => {
                    let mut text = String::new();
                    for (k, s) in graphs.iter().enumerate() {
                        text.push_str(&format!("# seed={seed} trial={k}\n{s}"));
                    }
                    write_out(None, &text)?;
                }
            }
            Ok(())
        }
        Command::Density { inputs, pattern } => {
            let f = PatternGraph::parse_or_preset(pattern)?;
            let first = fs::read_to_string(&inputs[0]).map_err(GraphexError::from)?;
            if inputs.len() == 1 && first.trim_start().starts_with(['T', '#']) {
                let graph = SampledGraph::parse(&first)?;
                let plain: PlainGraph = graph.to_plain();
                let count = densities::inj_count(&f, &plain)?;
                write_json(out, &json!({ "pattern": f.to_string(), "injective_count": count, "t": graph.t }))?;
                return Ok(());
            }
            let gs = inputs.iter().map(|p| read_graphex(p)).collect::<Result<Vec<_>>>()?;
            let value = if gs.len() == 1 {
                densities::hom_density(&f, &gs[0])?
            } else {
                let refs: Vec<&StepGraphex> = gs.iter().collect();
                densities::mixed_density(&f, &refs)?
            };
            write_json(out, &json!({ "pattern": f.to_string(), "density": value }))?;
            Ok(())
        }
        Command::Converge { input, t, trials, rho, budget, moves, seed } => {
            let g = read_graphex(input)?;
            let seed = cfg.seed(*seed, "the convergence experiment")?;
            let t_list = match cfg.pick(t.clone(), "T")? {
                Some(list) => parse_list(&list)?,
                None => vec![5.0, 10.0, 20.0, 40.0],
            };
            let mut ecfg = ExperimentConfig::new(t_list, cfg.or(*trials, "trials", 20)?, seed);
            ecfg.rho = cfg.pick(*rho, "rho")?;
            ecfg.restarts = cfg.or(*budget, "budget", ecfg.restarts)?;
            ecfg.moves = cfg.or(*moves, "moves", ecfg.moves)?;
            let report = estimation::convergence_experiment(&g, &ecfg)?;
            write_out(out, &format!("# seed={seed}\n{}", report.to_csv()))?;
            Ok(())
        }
        Command::Diagnose { input, grid, t } => {
            let g = read_graphex(input)?;
            let grid = match grid {
                Some(s) => parse_list(s)?,
                None => diagnostics::default_grid(&g),
            };
            let r = diagnostics::diagnose(&g, &grid, cfg.pick(*t, "T")?)?;
            write_json(out, &r)?;
            Ok(())
        }
        Command::Canon { input, tol } => {
            let g = read_graphex(input)?;
            let form = canonical::canonicalize(&g, cfg.or(*tol, "tol", DEFAULT_TOL)?)?;
            write_json(out, &form)?;
            Ok(())
        }
        Command::Equiv { first, second, tol } => {
            let (g1, g2) = (read_graphex(first)?, read_graphex(second)?);
            let e = canonical::equivalent(&g1, &g2, cfg.or(*tol, "tol", DEFAULT_TOL)?)?;
            write_json(out, &e)?;
            Ok(())
        }
        Command::Fixtures { name, p } => {
            let g = fixtures::by_name(name, cfg.pick(*p, "p")?).ok_or_else(|| {
                Failure::Usage(format!("unknown fixture {name:?}; known: {}", fixtures::NAMES.join(", ")))
            })?;
            write_json(out, &g)?;
            Ok(())
        }
    }
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::D22 => "d22",
        Metric::Djbl => "djbl",
        Metric::Delta22 => "delta22",
        Metric::Deltagp => "deltagp",
    }
}

fn finite_or_null(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn coupling_config(
    cfg: &Config,
    slack: Option<f64>,
    budget: Option<usize>,
    moves: Option<usize>,
    seed: u64,
    base: CouplingConfig,
) -> std::result::Result<CouplingConfig, Failure> {
    Ok(CouplingConfig {
        slack_mass: cfg.pick(slack, "slack")?,
        restarts: cfg.or(budget, "budget", base.restarts)?,
        moves: cfg.or(moves, "moves", base.moves)?,
        seed,
        ..base
    })
}
