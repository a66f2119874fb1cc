//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
//!
//! `cargo test -p pairdesign-cli --test acceptance --release` is the fast way
//! to run it; the Monte Carlo criteria dominate the runtime.

use std::process::{Command, ExitCode};
use std::time::Instant;

use pairdesign::designs::bcrd;
use pairdesign::estimators::{Link, LogisticModelSpec};
use pairdesign::mse::exact_mse;
use pairdesign::rng::replicate_rng;
use pairdesign::simulation::{
    block_homogeneous_covariates, monte_carlo_mse, realize_design, run_monte_carlo, DesignSpec, EstimatorKind,
    RealizedDesign, SimConfig,
};
use pairdesign::verify::{
    check_bias, check_exact_mse, check_gap_sign, check_matching, check_minimax, check_random_pairs,
    check_random_pairs_monte_carlo, check_sigma, random_instances, sorted_pairs_sweep, CheckReport,
};

const SEED: u64 = 20_140_501;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn from_reports(reports: &[CheckReport]) -> Outcome {
    let cases: usize = reports.iter().map(|r| r.cases).sum();
    let worst = reports.iter().map(|r| r.worst).fold(0.0, f64::max);
    match reports.iter().find(|r| !r.passed) {
        None => Ok(format!("{cases} cases, worst deviation {worst:e}")),
        Some(r) => Err(format!("{}: {} failures, witness {:?}", r.check, r.failures, r.witness)),
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn sigma_oracle() -> Outcome {
    from_reports(&[check_sigma(&[4, 6, 8, 10], None).map_err(err)?])
}

fn exact_mse_oracle() -> Outcome {
    let inst = random_instances(200, &[4, 6, 8], SEED).map_err(err)?;
    from_reports(&[check_exact_mse(&inst, Some(SEED)).map_err(err)?])
}

fn unbiasedness() -> Outcome {
    let inst = random_instances(200, &[4, 6, 8], SEED).map_err(err)?;
    from_reports(&[check_bias(&inst, Some(SEED)).map_err(err)?])
}

fn sorted_pairs_dominate_blocks() -> Outcome {
    let reports = [8, 12, 16].map(|n| sorted_pairs_sweep(n, 1000, SEED));
    from_reports(&reports.into_iter().collect::<pairdesign::Result<Vec<_>>>().map_err(err)?)
}

fn pairs_are_minimax() -> Outcome {
    let mut reports = Vec::new();
    let mut constants = Vec::new();
    for n in [4, 6, 8] {
        let m = check_minimax(n, &[], 100, 10_000, SEED).map_err(err)?;
        constants.push(format!(
            "2n={n}: {} designs, measured constant {}",
            m.block_designs + m.mixture_designs,
            m.measured_constant
        ));
        reports.push(m.report);
    }
    from_reports(&reports).map(|s| {
        format!("{s}; {}; quoted constant {}", constants.join(", "), pairdesign::verify::QUOTED_CORNER_CONSTANT)
    })
}

fn random_pairs_match_bcrd() -> Outcome {
    let mut reports =
        [4, 6, 8].map(check_random_pairs).into_iter().collect::<pairdesign::Result<Vec<_>>>().map_err(err)?;
    let mc = check_random_pairs_monte_carlo(8, 100_000, SEED).map_err(err)?;
    let z = mc.worst;
    reports.push(mc);
    from_reports(&reports).map(|s| format!("{s}; Monte Carlo |z| ≤ {z:.2}"))
}

fn gap_sign_agreement() -> Outcome {
    let reports = [4, 8, 16].map(|n| check_gap_sign(n, 1000, SEED));
    from_reports(&reports.into_iter().collect::<pairdesign::Result<Vec<_>>>().map_err(err)?)
}

fn matching_oracle() -> Outcome {
    from_reports(&[check_matching(&[6, 8, 10], 500, SEED).map_err(err)?])
}

fn model() -> LogisticModelSpec {
    LogisticModelSpec { beta0: 4.0, beta: vec![2.0], beta_t: 1.0, link: Link::Expit }
}

fn desk_scale_replication() -> Outcome {
    let config = SimConfig {
        n_subjects: 64,
        d: 1,
        designs: vec![DesignSpec::PairMatched, DesignSpec::Blocked(8), DesignSpec::Bcrd],
        model: model(),
        n_sim: 100_000,
        seed: SEED,
        estimators: vec![EstimatorKind::RiskDifference],
    };
    let result = run_monte_carlo(&config).map_err(err)?;
    let mse = |d: &str| result.get(d, "risk_difference").map(|r| r.mse).ok_or(format!("missing row {d}"));
    let (pm, bl, full) = (mse("pm")?, mse("block:8")?, mse("bcrd")?);
    let line = format!("MSE pm {pm:.4e}, block:8 {bl:.4e}, bcrd {full:.4e}, bcrd/pm {:.2}", full / pm);
    if pm <= bl && bl < full && full / pm > 1.5 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn monte_carlo_consistency() -> Outcome {
    let subjects = block_homogeneous_covariates(16, 1, &mut replicate_rng(SEED, "covariates", 0)).map_err(err)?;
    let response = model().response_model(&subjects).map_err(err)?;
    let mut parts = Vec::new();
    let mut ok = true;
    for (k, spec) in [DesignSpec::Bcrd, DesignSpec::Blocked(4), DesignSpec::PairMatched].into_iter().enumerate() {
        let design = realize_design(spec, &subjects, None).map_err(err)?;
        let partition = match &design {
            RealizedDesign::Fixed(p) => p.clone(),
            RealizedDesign::RandomPairs => bcrd(16).map_err(err)?,
        };
        let exact = exact_mse(&response, &partition).map_err(err)?.total;
        let (mc, se) = monte_carlo_mse(&response, &design, 200_000, SEED + k as u64).map_err(err)?;
        let z = (mc - exact).abs() / se;
        ok &= z <= 3.0;
        parts.push(format!("{spec} |z|={z:.2}"));
    }
    let line = parts.join(", ");
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn thread_count_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let config = dir.path().join("sim.toml");
    std::fs::write(
        &config,
        "n_subjects = [32, 64]\nd = 2\nbeta0 = 4.0\nbeta = [2.0, 2.0]\nbeta_t = 1.0\n\
         designs = [\"bcrd\", \"block:8\", \"pm\", \"random_pm\"]\n\
         estimators = [\"risk_difference\", \"log_odds_ratio\", \"logistic\"]\nn_sim = 20000\n",
    )
    .map_err(err)?;
    let run = |threads: &str| -> Result<Vec<u8>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_pairdesign"))
            .args(["--seed", "7", "--threads", threads, "simulate", "--config"])
            .arg(&config)
            .output()
            .map_err(err)?;
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        Ok(out.stdout)
    };
    let (one, four) = (run("1")?, run("4")?);
    if one == four && !one.is_empty() {
        Ok(format!("{} bytes identical for --threads 1 and 4", one.len()))
    } else {
        Err("outputs differ between --threads 1 and 4".into())
    }
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("design covariance closed form vs enumerated support", sigma_oracle),
        ("exact MSE vs exhaustive enumeration", exact_mse_oracle),
        ("difference in means is unbiased", unbiasedness),
        ("sorted pairs beat every coarser even block design", sorted_pairs_dominate_blocks),
        ("pair matching minimizes the worst-case quadratic form", pairs_are_minimax),
        ("random pairs are equivalent to complete randomization", random_pairs_match_bcrd),
        ("MSE gap sign agrees with the R-squared criterion", gap_sign_agreement),
        ("blossom matching vs brute force, scale invariance", matching_oracle),
        ("2n = 64 replication: pm <= block:8 < bcrd, bcrd/pm > 1.5", desk_scale_replication),
        ("Monte Carlo MSE within 3 SE of exact at 2n = 16", monte_carlo_consistency),
        ("simulate output independent of --threads", thread_count_determinism),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.1} s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1} s): {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
