use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gw_core::harness::{self, RunConfig};
use gw_core::{GridFunction, GwError, Weight};

/// Two-weight g-function constants and lemma checks on finite lattices.
#[derive(Debug, Parser)]
#[command(name = "gw", version)]
struct Cli {
    /// Run configuration (JSON); missing fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// σ weight as CSV `x1[,x2],mass`.
    #[arg(long, global = true)]
    sigma: Option<PathBuf>,
    /// w weight as CSV `x1[,x2],mass`.
    #[arg(long, global = true)]
    w: Option<PathBuf>,
    /// Overrides the seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving the JSON report and CSV summary.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print the JSON report on stdout instead of a short summary.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// All constants for one weight pair.
    Constants,
    /// Shift-averaged Whitney-region identity.
    VerifyIdentity,
    /// Constants and ratios over the corpus.
    Equivalence,
    /// Stopping tree for one weight pair.
    Stopping {
        /// Test function as CSV `x1[,x2],value`; random blocks when absent.
        #[arg(long)]
        f: Option<PathBuf>,
    },
    /// Corpus maxima of the lemma ratios.
    Lemmas {
        /// Lemma names; none gives an empty table.
        names: Vec<String>,
        /// Run every known lemma.
        #[arg(long)]
        all: bool,
    },
    /// Probability that a shifted cube is good, per level.
    PiGood,
    /// JSON dump of a randomly shifted grid with goodness flags.
    Grid,
}

enum Outcome {
    Pass,
    Fail,
}

struct Output {
    name: &'static str,
    json: String,
    csv: Option<Vec<u8>>,
    summary: String,
    outcome: Outcome,
}

fn load_pair(cli: &Cli, cfg: &RunConfig) -> Result<(Weight, Weight), GwError> {
    let lattice = cfg.lattice()?;
    let (Some(s), Some(w)) = (&cli.sigma, &cli.w) else {
        return Err(GwError::Usage("--sigma and --w are required".into()));
    };
    Ok((Weight::from_csv_path(lattice, s)?, Weight::from_csv_path(lattice, w)?))
}

fn run(cli: &Cli) -> Result<Output, GwError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_json_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(match &cli.command {
        Command::Constants => {
            let (sigma, w) = load_pair(cli, &cfg)?;
            let rep = harness::run_constants(&cfg, &sigma, &w)?;
            Output {
                name: "constants",
                summary: format!(
                    "A2 = {:.6e}  T = {:.6e}  P = {:.6e}  N = {:.6e}  G = {:.6e}  half-Poisson = {:.6e}",
                    rep.a2, rep.testing, rep.pivotal.value, rep.n_const, rep.g_norm, rep.half_poisson
                ),
                json: harness::to_json(&rep)?,
                csv: None,
                outcome: Outcome::Pass,
            }
        }
        Command::VerifyIdentity => {
            let run = harness::cmd_verify_identity(&cfg)?;
            let summary = run
                .records
                .iter()
                .map(|r| {
                    format!(
                        "{:<28} {:<8} full = {:.6e}  diff = {:+.3e}  se = {:.3e}  z = {:+.3}  {}",
                        r.fixture,
                        r.regime,
                        r.stats.full,
                        r.stats.difference,
                        r.stats.std_error,
                        r.stats.z,
                        if r.pass { "ok" } else { "FAIL" }
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            Output {
                name: "identity",
                json: harness::to_json(&run)?,
                csv: None,
                summary,
                outcome: if run.pass { Outcome::Pass } else { Outcome::Fail },
            }
        }
        Command::Equivalence => {
            let run = harness::cmd_equivalence(&cfg)?;
            let mut csv = Vec::new();
            harness::write_equivalence_csv(&run, &mut csv)?;
            let s = &run.summary;
            Output {
                name: "equivalence",
                summary: format!(
                    "{} instances ({} nondegenerate)  G/N in [{:.4}, {:.4}] median {:.4} spread {:.3}  C_nec = {:.4}  C_piv = {:.4}  violations: testing {} necessity {}",
                    s.instances,
                    s.nondegenerate,
                    s.g_over_n_min,
                    s.g_over_n_max,
                    s.g_over_n_median,
                    s.spread,
                    s.c_nec,
                    s.c_piv,
                    s.testing_violations,
                    s.necessity_violations
                ),
                json: harness::to_json(&run)?,
                csv: Some(csv),
                outcome: if s.pass { Outcome::Pass } else { Outcome::Fail },
            }
        }
        Command::Stopping { f } => {
            let (sigma, w) = load_pair(cli, &cfg)?;
            let lattice = *sigma.lattice();
            let f = match f {
                Some(p) => GridFunction::from_csv_path(lattice, p)?,
                None => {
                    let mut rng = gw_core::rng::trial_rng(cfg.seed, 0);
                    harness::FunctionSpec::random(cfg.dim, &mut rng).discretize(lattice)?
                }
            };
            let run = harness::run_stopping(&cfg, &f, &sigma, &w)?;
            Output {
                name: "stopping",
                summary: format!(
                    "{} stopping cubes  quasi-orthogonality = {:.4}  control = {:.4} (bound {})  by-construct violations = {}/{}",
                    run.nodes,
                    run.quasi_orthogonality,
                    run.control.governed,
                    run.control_bound,
                    run.by_construct.violations,
                    run.by_construct.checked
                ),
                json: harness::to_json(&run)?,
                csv: None,
                outcome: if run.pass { Outcome::Pass } else { Outcome::Fail },
            }
        }
        Command::Lemmas { names, all } => {
            let which: Vec<String> = if *all {
                harness::LEMMAS.iter().map(|s| s.to_string()).collect()
            } else {
                names.clone()
            };
            let rows = harness::cmd_lemmas(&cfg, &which)?;
            let mut csv = Vec::new();
            harness::write_lemmas_csv(&rows, &mut csv)?;
            let summary = rows
                .iter()
                .map(|r| {
                    format!(
                        "{:<14} max = {:.6e}  depth {} -> {} delta = {:.3}  {}",
                        r.lemma,
                        r.max_ratio,
                        r.alt_depth,
                        r.depth,
                        r.depth_delta,
                        if r.pass { "ok" } else { "FAIL" }
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            let pass = rows.iter().all(|r| r.pass);
            Output {
                name: "lemmas",
                json: harness::to_json(&rows)?,
                csv: Some(csv),
                summary,
                outcome: if pass { Outcome::Pass } else { Outcome::Fail },
            }
        }
        Command::PiGood => {
            let levels = harness::cmd_pi_good(&cfg)?;
            let summary = levels
                .iter()
                .map(|l| {
                    format!(
                        "level {:>2}  exact = {:.4}  first = {:.4} ± {:.4}  last = {:.4} ± {:.4}",
                        l.level, l.exact, l.first, l.first_se, l.last, l.last_se
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            Output {
                name: "pi_good",
                json: harness::to_json(&levels)?,
                csv: None,
                summary,
                outcome: Outcome::Pass,
            }
        }
        Command::Grid => {
            let dump = harness::cmd_grid(&cfg)?;
            let json = harness::to_json(&dump)?;
            Output {
                name: "grid",
                summary: json.trim_end().to_string(),
                json,
                csv: None,
                outcome: Outcome::Pass,
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match run(&cli) {
        Ok(out) => out,
        Err(e) => {
            eprintln!("gw: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(dir) = &cli.out {
        let written = harness::write_output(dir, &format!("{}.json", out.name), out.json.as_bytes())
            .and_then(|_| match &out.csv {
                Some(csv) => harness::write_output(dir, &format!("{}.csv", out.name), csv).map(|_| ()),
                None => Ok(()),
            });
        if let Err(e) = written {
            eprintln!("gw: {e}");
            return ExitCode::from(2);
        }
    }
    let text = if cli.json { out.json } else { format!("{}\n", out.summary) };
    // A closed pipe (`gw ... | head`) is not an error of the run.
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            eprintln!("gw: writing stdout: {e}");
            return ExitCode::from(2);
        }
    }
    match out.outcome {
        Outcome::Pass => ExitCode::SUCCESS,
        Outcome::Fail => {
            eprintln!("gw: acceptance rule failed");
            ExitCode::from(3)
        }
    }
}
