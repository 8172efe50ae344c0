//! Acceptance suite. Runs every criterion, prints one line per criterion
//! and exits nonzero if any fails. Built with `harness = false`.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use gw_core::constants::{pivotal_constant, PivotalStrategy};
use gw_core::dyadic::{default_gamma, r_for_overlap};
use gw_core::gfun::{strip_integral, whitney_integral};
use gw_core::harness::{self, CorpusConfig, RunConfig};
use gw_core::rng::trial_rng;
use gw_core::transform::{expand, pythagoras_residual, reconstruction_error};
use gw_core::{DyadicGrid, Generator, GridFunction, LatticeSpec, Quadrature, TransformKind, Weight};

struct Verdict {
    pass: bool,
    detail: String,
}

type Outcome = Result<Verdict, String>;

fn random_weight(l: LatticeSpec, rng: &mut ChaCha8Rng, p_zero: f64) -> Weight {
    let m = (0..l.cell_count())
        .map(|_| {
            if rng.random_bool(p_zero) {
                0.0
            } else {
                rng.random_range(0.0..1.0) * l.cell_volume()
            }
        })
        .collect();
    Weight::new(l, m).unwrap()
}

fn random_function(l: LatticeSpec, rng: &mut ChaCha8Rng) -> GridFunction {
    GridFunction::new(l, (0..l.cell_count()).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()
}

fn corpus_config(depth: u32, size: usize) -> RunConfig {
    RunConfig {
        depth,
        corpus: CorpusConfig {
            size,
            ..CorpusConfig::default()
        },
        ..RunConfig::default()
    }
}

fn rel_delta(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn c1_pythagoras() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_rec: f64 = 0.0;
    for k in 0..100 {
        let mut rng = trial_rng(101, k);
        let depth = rng.random_range(1..=8);
        let l = LatticeSpec::unit(1, depth).map_err(|e| e.to_string())?;
        let grid = DyadicGrid::random(l, &mut rng);
        let sigma = random_weight(l, &mut rng, 0.3);
        let f = random_function(l, &mut rng);
        let e = expand(&f, &sigma, &grid, 0).map_err(|e| e.to_string())?;
        worst = worst.max(pythagoras_residual(&f, &sigma, &e, &grid));
        worst_rec = worst_rec.max(reconstruction_error(&f, &sigma, &e, &grid));
    }
    Ok(Verdict {
        pass: worst < 1e-10 && worst_rec < 1e-10,
        detail: format!("max residual {worst:.2e}, max reconstruction error {worst_rec:.2e} over 100 instances"),
    })
}

fn c2_tiling() -> Outcome {
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let mut rng = trial_rng(202, k);
        let (dim, depth) = if k % 4 == 3 { (2, 3) } else { (1, rng.random_range(3..=7)) };
        let l = LatticeSpec::unit(dim, depth).map_err(|e| e.to_string())?.whitney_truncation();
        let grid = DyadicGrid::random(l, &mut rng);
        let sigma = random_weight(l, &mut rng, 0.3);
        let w = random_weight(l, &mut rng, 0.3);
        let f = random_function(l, &mut rng);
        let fw = sigma.times(&f);
        let kind = if k % 2 == 0 {
            TransformKind::PoissonGradient
        } else {
            TransformKind::Psi(Generator::DtPoisson)
        };
        let quad = Quadrature::for_lattice(&l);
        let full = strip_integral(&fw, kind, &w, &quad);
        let tiles: f64 = grid
            .all_cubes()
            .iter()
            .map(|r| whitney_integral(&grid, r, &fw, kind, &w, &quad))
            .sum();
        worst = worst.max(rel_delta(full, tiles));
    }
    Ok(Verdict {
        pass: worst <= 1e-6,
        detail: format!("max relative gap {worst:.2e} over 20 instances"),
    })
}

fn c3_identity() -> Outcome {
    let cfg = RunConfig {
        depth: 8,
        shifts: 500,
        identity_fixtures: 5,
        seed: 303,
        ..corpus_config(8, 10)
    };
    let run = harness::cmd_verify_identity(&cfg).map_err(|e| e.to_string())?;
    let sampled: Vec<f64> = run
        .records
        .iter()
        .filter(|r| r.regime == "sampled" && r.stats.full > 0.0)
        .map(|r| r.stats.z)
        .collect();
    let exact = run.records.iter().find(|r| r.regime == "all_good").ok_or("all-good regime missing")?;
    let zmax = sampled.iter().map(|z| z.abs()).fold(0.0, f64::max);
    Ok(Verdict {
        pass: run.pass && sampled.len() >= 5,
        detail: format!(
            "{} fixtures at 500 shifts, max |z| = {zmax:.3}; all-good regime gap {:.1e} (se {:.1e})",
            sampled.len(),
            exact.stats.difference.abs() / exact.stats.full,
            exact.stats.std_error / exact.stats.full
        ),
    })
}

fn necessity_runs() -> Result<(harness::EquivalenceRun, harness::EquivalenceRun), String> {
    let six = corpus_config(6, 30);
    let five = corpus_config(5, 30);
    let specs = harness::corpus(&six).map_err(|e| e.to_string())?;
    let a = harness::equivalence(&six, &specs).map_err(|e| e.to_string())?;
    let b = harness::equivalence(&five, &specs).map_err(|e| e.to_string())?;
    Ok((a, b))
}

fn c4_necessity(six: &harness::EquivalenceRun, five: &harness::EquivalenceRun) -> Outcome {
    let d = rel_delta(six.summary.c_nec, five.summary.c_nec);
    let s = &six.summary;
    Ok(Verdict {
        pass: s.testing_violations == 0
            && s.necessity_violations == 0
            && five.summary.testing_violations == 0
            && five.summary.necessity_violations == 0
            && d <= 0.2,
        detail: format!(
            "{} instances, T <= G(1+1e-3) and A2 <= C_nec G^2 everywhere; C_nec = {:.4} (depth 6) vs {:.4} (depth 5), delta {:.3}",
            s.instances, s.c_nec, five.summary.c_nec, d
        ),
    })
}

fn c5_pivotal() -> Outcome {
    let cfg = RunConfig {
        r: Some(2),
        pivotal: PivotalStrategy::Exact,
        ..corpus_config(5, 30)
    };
    let run = harness::cmd_equivalence(&cfg).map_err(|e| e.to_string())?;
    let lattice = cfg.lattice().map_err(|e| e.to_string())?;
    let grid = cfg.grid(lattice);
    let specs = harness::corpus(&cfg).map_err(|e| e.to_string())?;
    let mut violations = 0;
    let mut gap: f64 = 0.0;
    for (spec, rec) in specs.iter().zip(&run.records) {
        let inst = spec.build(lattice).map_err(|e| e.to_string())?;
        let sampled = pivotal_constant(
            &inst.sigma,
            &inst.w,
            &grid,
            PivotalStrategy::Sampled {
                samples: 10_000,
                seed: 505 + spec.id as u64,
            },
        )
        .map_err(|e| e.to_string())?;
        let exact = rec.report.pivotal.value;
        if sampled.value > exact * (1.0 + 1e-12) {
            violations += 1;
        }
        if exact > 0.0 {
            gap = gap.max(1.0 - sampled.value / exact);
        }
    }
    let c_piv = run.summary.c_piv;
    let nonzero = run.records.iter().filter(|r| r.report.pivotal.value > 0.0).count();
    Ok(Verdict {
        pass: c_piv.is_finite() && violations == 0 && run.records.len() >= 30,
        detail: format!(
            "C_piv = {c_piv:.4} over {} instances ({nonzero} with P > 0, r = 2); sampled > exact on {violations}; largest sampled shortfall {gap:.3}",
            run.records.len()
        ),
    })
}

fn c6_overlap() -> Outcome {
    let mut worst = Vec::new();
    let mut pass = true;
    for dim in 1..=2usize {
        let gamma = default_gamma(dim);
        let limit = 2.0 * (1.0 + 1.0 / gamma);
        for c in [3.0, 4.0 * dim as f64] {
            let r = r_for_overlap(dim, gamma, c);
            let mut max = 0;
            let mut members = 0;
            for depth in 1..=6 {
                let l = LatticeSpec::unit(dim, depth).map_err(|e| e.to_string())?;
                let grid = DyadicGrid::standard(l).with_r(r);
                for col in grid.whitney_all() {
                    members += col.len();
                    max = max.max(grid.overlap_count(&col, c));
                }
            }
            pass &= (max as f64) < limit;
            worst.push(format!("n={dim} C={c} r={r}: {max} < {limit} ({members} members)"));
        }
    }
    Ok(Verdict {
        pass,
        detail: worst.join("; "),
    })
}

fn c7_good_gain() -> Outcome {
    let cfg = RunConfig {
        goodgain_configs: 200,
        seed: 707,
        ..corpus_config(8, 30)
    };
    let specs = harness::corpus(&cfg).map_err(|e| e.to_string())?;
    let (base, halved) = harness::good_gain_sweep(&cfg, &specs, 8).map_err(|e| e.to_string())?;
    let c_gg = base.iter().map(|b| b.1).fold(0.0, f64::max);
    let h = halved.iter().cloned().fold(0.0, f64::max);
    Ok(Verdict {
        pass: base.len() == 200 && c_gg.is_finite() && h <= c_gg,
        detail: format!(
            "C_gg = {c_gg:.4e} over {} configurations; halved l(R)/l(K) max {h:.4e} over {} variants",
            base.len(),
            halved.len()
        ),
    })
}

fn c8_bilinear_averaging() -> Outcome {
    let cfg = corpus_config(6, 30);
    let rows = harness::cmd_lemmas(&cfg, &["bilinear".into(), "averaging".into()]).map_err(|e| e.to_string())?;
    let pass = rows
        .iter()
        .all(|r| r.max_ratio.is_finite() && r.alt_max_ratio.is_finite() && r.depth_delta <= 0.2);
    Ok(Verdict {
        pass,
        detail: rows
            .iter()
            .map(|r| {
                format!(
                    "{} = {:.4} (depth 6) vs {:.4} (depth 5), delta {:.3}",
                    r.lemma, r.max_ratio, r.alt_max_ratio, r.depth_delta
                )
            })
            .collect::<Vec<_>>()
            .join("; "),
    })
}

fn c9_stopping() -> Outcome {
    let cfg = RunConfig {
        r: Some(2),
        ..corpus_config(8, 30)
    };
    let rows = harness::cmd_lemmas(&cfg, &["quasi".into(), "control".into()]).map_err(|e| e.to_string())?;
    let quasi = &rows[0];
    let control = &rows[1];
    let bound = control.bound.ok_or("control bound missing")?;
    // a tree that never branches would make the check vacuous
    let lattice = cfg.lattice().map_err(|e| e.to_string())?;
    let mut stopped = 0;
    for spec in harness::corpus(&cfg).map_err(|e| e.to_string())? {
        let inst = spec.build(lattice).map_err(|e| e.to_string())?;
        let run = harness::run_stopping(&cfg, &inst.f, &inst.sigma, &inst.w).map_err(|e| e.to_string())?;
        if run.nodes > (1 << cfg.dim) {
            stopped += 1;
        }
    }
    Ok(Verdict {
        pass: quasi.max_ratio.is_finite() && control.max_ratio <= bound * (1.0 + 1e-12) && stopped > 0,
        detail: format!(
            "C_qo = {:.4}; control max {:.4} <= {bound} (theta1 = 10, theta2 = 2); {stopped} instances with stopping children",
            quasi.max_ratio, control.max_ratio
        ),
    })
}

fn c10_equivalence(six: &harness::EquivalenceRun) -> Outcome {
    let s = &six.summary;
    Ok(Verdict {
        pass: s.pass && s.nondegenerate >= 30 && s.g_over_n_min > 0.0,
        detail: format!(
            "G/N in [{:.4}, {:.4}] over {} nondegenerate instances, c2/c1 = {:.3}, median {:.4}",
            s.g_over_n_min, s.g_over_n_max, s.nondegenerate, s.spread, s.g_over_n_median
        ),
    })
}

fn c11_determinism() -> Outcome {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_gw"))
            .args(["equivalence", "--json", "--seed", "11"])
            .output()
            .map_err(|e| e.to_string())
    };
    let a = run()?;
    let b = run()?;
    if !a.status.success() {
        return Err(format!("gw exited with {}: {}", a.status, String::from_utf8_lossy(&a.stderr)));
    }
    Ok(Verdict {
        pass: a.stdout == b.stdout && !a.stdout.is_empty(),
        detail: format!("two runs, {} bytes of JSON each, identical: {}", a.stdout.len(), a.stdout == b.stdout),
    })
}

fn report(n: u32, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let took = start.elapsed();
    let (pass, detail) = match outcome {
        Ok(v) => (v.pass && took <= limit, v.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    println!(
        "criterion {n:>2} {:<4} {name}: {detail} [{:.1}s, limit {}s]",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

fn main() -> ExitCode {
    let min = |m: u64| Duration::from_secs(60 * m);
    let mut ok = true;
    ok &= report(1, "martingale Pythagoras", Duration::from_secs(30), c1_pythagoras);
    ok &= report(2, "Whitney-region tiling", min(1), c2_tiling);
    ok &= report(3, "good-region averaging identity", min(5), c3_identity);
    let start = Instant::now();
    let runs = necessity_runs();
    let shared = start.elapsed();
    match runs {
        Ok((six, five)) => {
            ok &= report(4, "necessity direction", min(5).saturating_sub(shared), || c4_necessity(&six, &five));
            ok &= report(5, "pivotal lemma", min(10), c5_pivotal);
            ok &= report(6, "Whitney overlap", min(2), c6_overlap);
            ok &= report(7, "good gain", min(5), c7_good_gain);
            ok &= report(8, "bilinear form and averaging", min(5), c8_bilinear_averaging);
            ok &= report(9, "quasi-orthogonality and control", min(5), c9_stopping);
            ok &= report(10, "main equivalence", min(15).saturating_sub(shared), || c10_equivalence(&six));
        }
        Err(e) => {
            println!("criterion  4 FAIL necessity direction: error: {e}");
            println!("criterion 10 FAIL main equivalence: error: {e}");
            ok = false;
        }
    }
    ok &= report(11, "determinism", min(2), c11_determinism);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
