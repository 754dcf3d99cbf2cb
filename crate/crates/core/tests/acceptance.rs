//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset.

mod common;

use std::cell::OnceCell;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use common::{random_instance, walsh};
use nalgebra::DVector;
use sdvs::gibbs::{run_chain, ChainConfig, SigmaMode};
use sdvs::oracle::{enumerate_posterior, l0_minimizer, orthogonal_marginal, orthogonal_ols, phi_threshold};
use sdvs::score::{log_qk_dual, log_qk_primal};
use sdvs::simbench::{run_benchmark, BenchConfig, BenchReport, CaseSpec, Metrics};
use sdvs::{Dataset, ModelIndicator, PriorSpec};

const SEED: u64 = 20_240_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn random_priors(rng: &mut ChaCha8Rng) -> PriorSpec {
    let tau0 = 10f64.powf(rng.random_range(-4.0..-1.0));
    let tau1 = 10f64.powf(rng.random_range(-0.5..2.5));
    PriorSpec::new(tau0, tau1, rng.random_range(0.01..0.5), 0.01, 0.01).unwrap()
}

fn random_model(rng: &mut ChaCha8Rng, p: usize) -> ModelIndicator {
    let density = rng.random_range(0.0..1.0);
    ModelIndicator::from_bits((0..p).map(|_| rng.random_bool(density)).collect())
}

fn oracle_equivalence() -> Verdict {
    let mut worst = (0.0, 0, 0);
    for i in 0..20u64 {
        let inst = random_instance(SEED + i, (20, 50), (4, 10));
        let exact = enumerate_posterior(&inst.data, &inst.priors, 1.0).unwrap();
        let config = ChainConfig {
            burn_in: 2000,
            iterations: 50_000,
            seed: SEED + i,
            sigma_mode: SigmaMode::Fixed(1.0),
            rao_blackwell: true,
            thin: 1,
        };
        let summary = run_chain(&inst.data, &inst.priors, &config).unwrap();
        for (j, (g, e)) in summary.marginal_probs.iter().zip(exact.marginals()).enumerate() {
            let gap = (g - e).abs();
            if gap > worst.0 {
                worst = (gap, i, j);
            }
        }
    }
    verdict(
        worst.0 <= 0.02,
        format!("max |gibbs - exact| = {:.4} (instance {}, coord {}), tol 0.02", worst.0, worst.1, worst.2),
    )
}

fn determinant_identity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let inst = random_instance(SEED ^ (i << 20), (5, 60), (2, 40));
        let priors = random_priors(&mut rng);
        let k = random_model(&mut rng, inst.data.p());
        let a = log_qk_primal(&inst.data, &k, &priors).unwrap();
        let b = log_qk_dual(&inst.data, &k, &priors).unwrap();
        let rel = if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
        worst = worst.max(rel);
    }
    verdict(worst <= 1e-8, format!("max relative gap {worst:.2e} over 1000 instances, tol 1e-8"))
}

fn orthogonal_threshold() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let (mut checked, mut mismatches) = (0, 0);
    for _ in 0..200 {
        let n = 1 << rng.random_range(3..7);
        let p = rng.random_range(1..n);
        let x = walsh(n, p);
        let scale = 10f64.powf(rng.random_range(-1.0..1.0));
        let beta = DVector::from_fn(p, |_, _| if rng.random_bool(0.3) { rng.random_range(-2.0..2.0) } else { 0.0 });
        let noise = DVector::from_fn(n, |_, _| scale * rng.random_range(-1.5..1.5));
        let y = &x * beta + noise;
        let data = Dataset::new(x, y).unwrap();
        let priors = random_priors(&mut rng);
        let sigma_sq = 10f64.powf(rng.random_range(-1.0..1.0));
        let phi = phi_threshold(n, sigma_sq, &priors).unwrap();
        let beta_hat = orthogonal_ols(&data);
        // A few coordinates sit exactly on the threshold.
        let mut values: Vec<f64> = beta_hat.iter().copied().collect();
        values.push(phi.sqrt());
        values.push(-phi.sqrt());
        for b in values {
            let decided = orthogonal_marginal(b, n, sigma_sq, &priors).unwrap() > 0.5;
            checked += 1;
            if decided != (b * b > phi) {
                mismatches += 1;
            }
        }
    }
    verdict(mismatches == 0, format!("{mismatches} mismatches in {checked} coordinates"))
}

fn map_l0() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 4);
    let mut mismatches = 0;
    for i in 0..100u64 {
        let inst = random_instance(SEED + 1000 + i, (20, 50), (2, 10));
        let sigma_sq = 10f64.powf(rng.random_range(-0.5..0.3));
        let exact = enumerate_posterior(&inst.data, &inst.priors, sigma_sq).unwrap();
        let l0 = l0_minimizer(&inst.data, &inst.truth, &inst.priors, sigma_sq).unwrap();
        if exact.map_model() != l0 {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches} of 100 instances disagree"))
}

fn bench(spec: CaseSpec, k: Option<usize>) -> BenchReport {
    let config = BenchConfig {
        k,
        ..BenchConfig::default()
    };
    let report = run_benchmark(&spec.with_seed(SEED), &config).unwrap();
    assert!(report.failures.is_empty(), "replication failures: {:?}", report.failures);
    report
}

fn show(m: &Metrics) -> String {
    format!(
        "pp0 {:.3} pp1 {:.3} exact {:.3} superset {:.3} fdr {:.3} mspe {:.3}",
        m.pp0, m.pp1, m.exact_match, m.superset, m.fdr, m.mspe
    )
}

fn case1_small(m: &Metrics) -> Verdict {
    let pass = (m.exact_match - 0.866).abs() <= 0.10
        && m.fdr <= 0.05
        && (m.pp0 - 0.016).abs() <= 0.03
        && (m.pp1 - 0.985).abs() <= 0.05;
    verdict(pass, show(m))
}

fn case2() -> Verdict {
    let spec = CaseSpec::standard(2).unwrap().with_replications(50);
    let m = *bench(spec, None).median();
    verdict(m.superset >= 0.60 && m.fdr <= 0.05, show(&m))
}

fn consistency_trend(small: &Metrics) -> Verdict {
    let spec = CaseSpec::new(1, 200, 200).unwrap().with_replications(100);
    let large = *bench(spec, None).median();
    verdict(
        large.exact_match >= small.exact_match - 0.05,
        format!("exact {:.3} at (100,100) -> {:.3} at (200,200)", small.exact_match, large.exact_match),
    )
}

fn sparsity_prior() -> Verdict {
    let spec = CaseSpec::standard(5).unwrap().with_replications(50);
    let k10 = *bench(spec.clone(), Some(10)).median();
    let k50 = *bench(spec, Some(50)).median();
    verdict(
        k50.exact_match > k10.exact_match,
        format!("exact K=50 {:.3} vs K=10 {:.3} (pp1 {:.3} vs {:.3})", k50.exact_match, k10.exact_match, k50.pp1, k10.pp1),
    )
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_sdvs")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

/// Output with the wall-clock block removed; everything else must match bitwise.
fn stable_bytes(args: &[&str]) -> Vec<u8> {
    let raw = run_cli(args);
    if args.contains(&"csv") {
        return raw;
    }
    let mut v: Value = serde_json::from_slice(&raw).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    serde_json::to_vec(&v).unwrap()
}

fn determinism() -> Verdict {
    let dir = tempfile::TempDir::new().unwrap();
    let train = dir.path().join("train.csv");
    let wide = dir.path().join("wide.csv");
    let small = dir.path().join("small.csv");
    let gen = |id, n, p, path: &std::path::Path| {
        let spec = CaseSpec::new(id, n, p).unwrap().with_seed(SEED);
        common::write_csv(path, &sdvs::simbench::gen_case(&spec, 0).unwrap().train);
    };
    gen(6, 60, 20, &train);
    gen(2, 40, 120, &wide);
    gen(6, 40, 8, &small);
    let (train, wide, small) = (train.to_str().unwrap(), wide.to_str().unwrap(), small.to_str().unwrap());
    let trace_a = dir.path().join("a.trace");
    let trace_b = dir.path().join("b.trace");
    let commands: Vec<Vec<&str>> = vec![
        vec!["fit", "-i", train, "--seed", "11", "--burnin", "300", "--iters", "1500", "--chains", "3"],
        vec!["fit", "-i", wide, "--seed", "12", "--burnin", "300", "--iters", "1500"],
        vec!["fit", "-i", train, "--seed", "12", "--iters", "1000", "--test", train, "--sweep-size", "5"],
        vec!["fit", "-i", train, "--seed", "13", "--iters", "800", "--sigma2", "fixed:0.5", "--format", "csv"],
        vec!["screen", "-i", wide, "--keep", "30", "--force", "x7"],
        vec!["oracle", "-i", small, "--compare", "--iters", "3000", "--seed", "14"],
        vec!["bench", "--case", "3", "--n", "40", "--p", "60", "--reps", "3", "--iters", "600", "--burnin", "200", "--seed", "15"],
        vec!["bench", "--case", "1", "--n", "30", "--p", "30", "--reps", "3", "--iters", "600", "--burnin", "200", "--format", "csv"],
        vec!["diagnose", "-i", small],
        vec!["diagnose", "--case", "6", "--n", "50", "--p", "10", "--rep", "2", "--seed", "16"],
    ];
    let mut differing = Vec::new();
    for args in &commands {
        if stable_bytes(args) != stable_bytes(args) {
            differing.push(args[0]);
        }
    }
    for trace in [&trace_a, &trace_b] {
        run_cli(&["fit", "-i", train, "--seed", "17", "--iters", "500", "--trace", trace.to_str().unwrap()]);
    }
    if std::fs::read(&trace_a).unwrap() != std::fs::read(&trace_b).unwrap() {
        differing.push("fit --trace");
    }
    verdict(
        differing.is_empty(),
        format!("{} command runs repeated, differing: {:?}", commands.len() + 1, differing),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |i: usize| wanted.is_empty() || wanted.contains(&i);
    let mut failed = 0;
    let mut report = |i: usize, name: &str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{i}] {name}: {} ({:.1}s)", v.detail, start.elapsed().as_secs_f64());
        if !v.pass {
            failed += 1;
        }
    };
    if run(1) {
        report(1, "oracle equivalence", &mut oracle_equivalence);
    }
    if run(2) {
        report(2, "determinant identity", &mut determinant_identity);
    }
    if run(3) {
        report(3, "orthogonal threshold", &mut orthogonal_threshold);
    }
    if run(4) {
        report(4, "MAP/L0 correspondence", &mut map_l0);
    }
    let small = OnceCell::new();
    let case1 = || *small.get_or_init(|| *bench(CaseSpec::standard(1).unwrap().with_replications(100), None).median());
    if run(5) {
        report(5, "case 1 (100,100)", &mut || case1_small(&case1()));
    }
    if run(6) {
        report(6, "case 2 (100,500)", &mut case2);
    }
    if run(7) {
        report(7, "consistency trend", &mut || consistency_trend(&case1()));
    }
    if run(8) {
        report(8, "sparsity prior K", &mut sparsity_prior);
    }
    if run(9) {
        report(9, "determinism", &mut determinism);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
