//! Acceptance suite: one PASS/FAIL line per criterion.

mod common;

use std::time::{Duration, Instant};

use rand::Rng;

use escl::checkpoint::Checkpoint;
use escl::encoder::{init_params, BatchViews, EncoderConfig, TokenSequence};
use escl::evaluation::{evaluate_sts, format_sts, parse_corpus, parse_sts, sensitivity_probe};
use escl::gradsuite::run_gradient_suite;
use escl::losses::{
    cossim_loss, escl_loss, info_nce, info_nce_alt, rd_loss, EquivariantLoss, LossConfig,
};
use escl::numerics::{average_ranks, spearman_rho, DropoutSpec, RngStream, Tensor, GRAD_TOLERANCE};
use escl::parallel;
use escl::training::{train, TrainConfig, TrainOutcome};
use escl::EsclError;

use common::{median, standard_bench};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn matrix(n: usize, d: usize, g: &mut impl Rng, scale: f64) -> Tensor {
    Tensor::from_vec(
        &[n, d],
        (0..n * d).map(|_| g.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

// -log( e^{s_ii/t} / sum_j e^{s_ij/t} ), averaged, no stabilization
fn naive_info_nce(h: &Tensor, hp: &Tensor, tau: f64) -> f64 {
    let n = h.rows();
    let mut total = 0.0;
    for i in 0..n {
        let num = (cos(h.row(i), hp.row(i)) / tau).exp();
        let den: f64 = (0..n).map(|j| (cos(h.row(i), hp.row(j)) / tau).exp()).sum();
        total += -(num / den).ln();
    }
    total / n as f64
}

fn random_batches(count: usize) -> Vec<(Tensor, Tensor, f64)> {
    let mut g = RngStream::new(2024)
        .derive_label("acceptance-batches")
        .generator();
    (0..count)
        .map(|_| {
            let n = g.random_range(2..=16);
            let d = g.random_range(2..=32);
            // tau kept where the naive exp cannot overflow
            let tau = [0.05, 0.1, 0.2, 1.0][g.random_range(0..4)];
            (matrix(n, d, &mut g, 1.0), matrix(n, d, &mut g, 1.0), tau)
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let batches = random_batches(1000);
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (h, hp, tau) in &batches {
        let got = info_nce(h, hp, *tau).unwrap();
        worst = worst.max((got - naive_info_nce(h, hp, *tau)).abs());
    }
    let elapsed = t.elapsed();
    outcome(
        worst < 1e-10 && elapsed < Duration::from_secs(10),
        format!("info_nce vs naive oracle over 1000 batches: max |diff| {worst:.2e} (< 1e-10), {elapsed:.2?} (< 10 s)"),
    )
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    for (h, hp, tau) in &random_batches(1000) {
        worst =
            worst.max((info_nce(h, hp, *tau).unwrap() - info_nce_alt(h, hp, *tau).unwrap()).abs());
    }
    outcome(
        worst < 1e-9,
        format!("log-sum-exp vs log1p form over 1000 batches: max |diff| {worst:.2e} (< 1e-9)"),
    )
}

fn loop_rd(h: &Tensor, hp: &Tensor, hn: &Tensor) -> f64 {
    let n = h.rows();
    let mut total = 0.0;
    for i in 0..n {
        let c = cos(h.row(i), hp.row(i));
        for v in [h.row(i), hp.row(i)] {
            total += (cos(v, hn.row(i)) - c).exp();
        }
    }
    total / n as f64
}

fn loop_cossim(h: &Tensor, hp: &Tensor, hn: &Tensor) -> f64 {
    let n = h.rows();
    let mut total = 0.0;
    for i in 0..n {
        for v in [h.row(i), hp.row(i)] {
            total += cos(v, hn.row(i)).exp();
        }
    }
    total / n as f64
}

fn criterion_3() -> Outcome {
    let mut g = RngStream::new(7)
        .derive_label("equivariant-oracle")
        .generator();
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = g.random_range(1..=16);
        let d = g.random_range(2..=32);
        let (h, hp, hn) = (
            matrix(n, d, &mut g, 1.0),
            matrix(n, d, &mut g, 1.0),
            matrix(n, d, &mut g, 1.0),
        );
        worst = worst.max((rd_loss(&h, &hp, &hn).unwrap() - loop_rd(&h, &hp, &hn)).abs());
        worst = worst.max((cossim_loss(&h, &hp, &hn).unwrap() - loop_cossim(&h, &hp, &hn)).abs());
    }

    let row = vec![0.25, -0.5, 1.0, 0.125];
    let same = Tensor::from_rows(&vec![row; 4]).unwrap();
    let rd_same = rd_loss(&same, &same, &same).unwrap();
    let cs_same = cossim_loss(&same, &same, &same).unwrap();
    let e = 1f64.exp();
    let h = Tensor::from_rows(&vec![vec![1.0, 0.0, 0.0]; 4]).unwrap();
    let hn = Tensor::from_rows(&vec![vec![0.0, 0.0, 1.0]; 4]).unwrap();
    let rd_zero = rd_loss(&h, &h, &hn).unwrap();
    let anchors = rd_same == 2.0 && cs_same == 2.0 * e && rd_zero == 2.0 * (-1f64).exp();
    outcome(
        worst < 1e-12 && anchors,
        format!(
            "loop oracles over 500 batches: max |diff| {worst:.2e} (< 1e-12); anchors RD {rd_same} (2), \
             CosSim {cs_same} (2e), zero-sim RD {rd_zero} (2/e)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let cases = run_gradient_suite(5, 0).unwrap();
    let elapsed = t.elapsed();
    let worst = cases
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    let names: std::collections::BTreeSet<&str> = cases.iter().map(|c| c.name.as_str()).collect();
    outcome(
        worst.max_rel_error < GRAD_TOLERANCE && elapsed < Duration::from_secs(60),
        format!(
            "{} checks over {} cases: worst relative error {:.2e} ({}) (< 1e-4), {elapsed:.2?} (< 60 s)",
            cases.len(),
            names.len(),
            worst.max_rel_error,
            worst.name
        ),
    )
}

// rank = 1 + #smaller + (#equal - 1) / 2
fn brute_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

fn brute_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

fn criterion_5() -> Outcome {
    let mut g = RngStream::new(5)
        .derive_label("spearman-oracle")
        .generator();
    let (mut worst, mut checked, mut with_ties, mut invariant) = (0.0f64, 0, 0, true);
    while checked < 500 {
        let len = g.random_range(2..=8);
        let x: Vec<f64> = (0..len).map(|_| g.random_range(0..5) as f64).collect();
        let y: Vec<f64> = (0..len)
            .map(|_| g.random_range(-3.0f64..3.0).round() / 2.0)
            .collect();
        let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
        if constant(&x) || constant(&y) {
            assert!(spearman_rho(&x, &y).is_err());
            continue;
        }
        checked += 1;
        let distinct = |v: &[f64]| {
            let mut u = v.to_vec();
            u.sort_by(f64::total_cmp);
            u.dedup();
            u.len()
        };
        if distinct(&x) < x.len() || distinct(&y) < y.len() {
            with_ties += 1;
        }
        let oracle = brute_pearson(&brute_ranks(&x), &brute_ranks(&y));
        worst = worst.max((spearman_rho(&x, &y).unwrap() - oracle).abs());

        // strictly increasing transforms leave ranks untouched
        let fx: Vec<f64> = x.iter().map(|v| (v * 0.7).exp() + v.powi(3)).collect();
        invariant &= average_ranks(&fx).unwrap() == average_ranks(&x).unwrap();
        invariant &= spearman_rho(&fx, &y).unwrap() == spearman_rho(&x, &y).unwrap();
    }
    outcome(
        worst < 1e-12 && invariant,
        format!(
            "brute-force oracle over {checked} lists ({with_ties} with ties): max |diff| {worst:.2e} (< 1e-12); \
             monotone invariance exact: {invariant}"
        ),
    )
}

fn cli_train(dir: &std::path::Path, steps: &str) -> std::process::Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_escl"))
        .args(["train", "--corpus"])
        .arg(dir.join("corpus.txt"))
        .arg("--sts")
        .arg(dir.join("sts.tsv"))
        .arg("--out-dir")
        .arg(dir.join("run"))
        .args(["--steps", steps, "--eval-every", "10", "--seed", "11"])
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

const RUN_FILES: [&str; 4] = [
    "checkpoint.bin",
    "trace.jsonl",
    "evals.jsonl",
    "config.toml",
];

fn snapshot(dir: &std::path::Path, out: &std::process::Output) -> Vec<Vec<u8>> {
    let mut files: Vec<Vec<u8>> = RUN_FILES
        .iter()
        .map(|f| std::fs::read(dir.join("run").join(f)).unwrap())
        .collect();
    files.push(out.stdout.clone());
    std::fs::remove_dir_all(dir.join("run")).unwrap();
    files
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let gen = std::process::Command::new(env!("CARGO_BIN_EXE_escl"))
        .args([
            "gen-data",
            "--seed",
            "3",
            "--n-train",
            "200",
            "--n-pairs",
            "64",
            "--out-dir",
        ])
        .arg(dir.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(
        gen.status.success(),
        "{}",
        String::from_utf8_lossy(&gen.stderr)
    );
    let a = cli_train(dir.path(), "40");
    if !a.status.success() {
        return outcome(
            false,
            format!("train failed: {}", String::from_utf8_lossy(&a.stderr)),
        );
    }
    let first = snapshot(dir.path(), &a);
    let b = cli_train(dir.path(), "40");
    let second = snapshot(dir.path(), &b);
    let identical: Vec<bool> = first.iter().zip(&second).map(|(x, y)| x == y).collect();
    outcome(
        b.status.success() && identical.iter().all(|&x| x),
        format!(
            "two CLI train runs, 40 steps: byte-identical {RUN_FILES:?} + stdout = {identical:?}"
        ),
    )
}

struct Directional {
    untrained: Vec<f64>,
    infonce: Vec<(TrainOutcome, Duration)>,
    rd: Vec<(TrainOutcome, Duration)>,
    cossim: Vec<(TrainOutcome, Duration)>,
}

fn run_directional() -> Directional {
    let bench = standard_bench();
    let base = TrainConfig {
        eval_every: 0,
        ..TrainConfig::default()
    };
    assert_eq!(
        (base.batch_size, base.steps, base.embed_dim, base.output_dim),
        (32, 200, 32, 32)
    );
    assert_eq!(base.loss.lambda, 2.5e-3);

    let untrained = (0..10)
        .map(|s| {
            let cfg = EncoderConfig {
                vocab_size: bench.vocab.len(),
                embed_dim: 32,
                output_dim: 32,
            };
            let p = init_params(cfg, &RngStream::new(s).derive_label("init")).unwrap();
            evaluate_sts(&p, &bench.pairs, "synthetic").unwrap().rho
        })
        .collect();

    let mut jobs = Vec::new();
    for seed in 0..10u64 {
        jobs.push((0u8, seed));
        jobs.push((1u8, seed));
    }
    for seed in 0..5u64 {
        jobs.push((2u8, seed));
    }
    let runs = parallel::map(&jobs, |&(kind, seed)| {
        let mut cfg = base.clone();
        cfg.seed = seed;
        match kind {
            0 => cfg.loss.lambda = 0.0,
            1 => cfg.loss.variant = EquivariantLoss::Rd,
            _ => cfg.loss.variant = EquivariantLoss::CosSim,
        }
        let t = Instant::now();
        let out = train(&cfg, &bench.vocab, &bench.corpus, Some(&bench.pairs)).unwrap();
        (kind, out, t.elapsed())
    });
    let mut d = Directional {
        untrained,
        infonce: vec![],
        rd: vec![],
        cossim: vec![],
    };
    for (kind, out, t) in runs {
        match kind {
            0 => d.infonce.push((out, t)),
            1 => d.rd.push((out, t)),
            _ => d.cossim.push((out, t)),
        }
    }
    d
}

fn rhos(runs: &[(TrainOutcome, Duration)]) -> Vec<f64> {
    runs.iter().map(|(o, _)| o.rho.unwrap()).collect()
}

fn criterion_7(d: &Directional) -> Outcome {
    let base = median(&d.untrained);
    let (m_rd, m_nce) = (median(&rhos(&d.rd)), median(&rhos(&d.infonce)));
    let slowest =
        d.rd.iter()
            .chain(&d.infonce)
            .map(|(_, t)| *t)
            .max()
            .unwrap();
    outcome(
        m_rd >= m_nce && m_rd - base >= 0.2 && m_nce - base >= 0.2 && slowest < Duration::from_secs(300),
        format!(
            "median rho over 10 seeds: RD {m_rd:.4} vs InfoNCE-only {m_nce:.4} (need >=); untrained {base:.4}, \
             margins {:.4} / {:.4} (need >= 0.2); slowest run {slowest:.2?}",
            m_rd - base,
            m_nce - base
        ),
    )
}

fn criterion_8(d: &Directional) -> Outcome {
    // RD runs are pushed in seed order, so the first five are seeds 0..5
    let seeds_rd: Vec<f64> = rhos(&d.rd)[..5].to_vec();
    let (m_rd, m_cs) = (median(&seeds_rd), median(&rhos(&d.cossim)));
    outcome(
        m_rd >= m_cs,
        format!(
            "median rho over 5 seeds at r_high 0.45: RD {m_rd:.4} vs CosSim {m_cs:.4} (need >=)"
        ),
    )
}

fn criterion_9(d: &Directional) -> Outcome {
    let bench = standard_bench();
    let (trained, _) = &d.rd[0];
    let sample: Vec<TokenSequence> = bench.corpus[..64].to_vec();
    let rates: Vec<DropoutSpec> = [0.0, 0.1, 0.25, 0.45]
        .iter()
        .map(|&r| DropoutSpec::new(r).unwrap())
        .collect();
    let probe = sensitivity_probe(
        &trained.checkpoint.params,
        &sample,
        &rates,
        100,
        &RngStream::new(9),
    )
    .unwrap();
    let zero_at_rest = probe[0].mean_drift == 0.0;
    let increasing = probe.windows(2).skip(1).all(|w| {
        let sigma = (w[0].std_error.powi(2) + w[1].std_error.powi(2)).sqrt();
        w[1].mean_drift - w[0].mean_drift > 3.0 * sigma
    });
    let drifts: Vec<String> = probe
        .iter()
        .map(|p| format!("{:.4}+-{:.4}", p.mean_drift, p.std_error))
        .collect();

    let steps = &trained.trace.steps;
    let (gap0, gap_end) = (steps[0].gap(), steps.last().unwrap().gap());
    let widened =
        d.rd.iter()
            .filter(|(o, _)| o.trace.steps.last().unwrap().gap() > o.trace.steps[0].gap())
            .count();
    outcome(
        zero_at_rest && increasing && gap_end > gap0,
        format!(
            "probe drift at rates 0/0.1/0.25/0.45 over 100 trials: [{}]; zero at rate 0: {zero_at_rest}; \
             increasing at 3 sigma: {increasing}; gap dist_neg - dist_pos step 0 {gap0:.4} -> end {gap_end:.4} \
             (seed 0; gap widened in {widened}/10 RD seeds)",
            drifts.join(", ")
        ),
    )
}

fn criterion_10() -> Outcome {
    let bench = standard_bench();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        steps: 5,
        eval_every: 0,
        ..TrainConfig::default()
    };
    let ckpt = train(&cfg, &bench.vocab, &bench.corpus, None)
        .unwrap()
        .checkpoint;
    let path = dir.path().join("model.bin");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let bits = |c: &Checkpoint| {
        c.params
            .flatten()
            .iter()
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    let ckpt_ok =
        bits(&loaded) == bits(&ckpt) && loaded == ckpt && loaded.to_bytes() == ckpt.to_bytes();

    let tsv = format_sts(&bench.data.pairs);
    let parsed = parse_sts(&tsv, "generated").unwrap();
    let sts_ok = parsed == bench.data.pairs && parsed.len() == 256;
    let text = bench.data.corpus.join("\n") + "\n";
    let (lines, skipped) = parse_corpus(&text);
    let corpus_ok = lines == bench.data.corpus && skipped == 0;

    let bad = "a b\tc d\t0.5\nonly two\tfields\nx\ty\t0.1\nx\ty\tnot-a-number\n";
    let rejected = match parse_sts(bad, "bad.tsv") {
        Err(EsclError::Parse { line, reason, .. }) => line == 2 && reason.contains("lines 4"),
        _ => false,
    };
    outcome(
        ckpt_ok && sts_ok && corpus_ok && rejected,
        format!(
            "checkpoint bit-exact: {ckpt_ok}; STS parse-back ({} pairs): {sts_ok}; corpus parse-back: {corpus_ok}; \
             malformed lines 2 and 4 reported: {rejected}",
            parsed.len()
        ),
    )
}

fn main() {
    // sanity: the escl objective composes the two losses above
    let v = BatchViews::new(
        Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
        Tensor::from_rows(&[vec![1.0, 0.1], vec![0.1, 1.0]]).unwrap(),
        Tensor::from_rows(&[vec![0.5, 0.5], vec![0.5, -0.5]]).unwrap(),
    )
    .unwrap();
    assert!(escl_loss(&v, &LossConfig::default())
        .unwrap()
        .total
        .is_finite());

    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!(
            "criterion {n:>2}: {} {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((n, o));
    };
    report(1, criterion_1());
    report(2, criterion_2());
    report(3, criterion_3());
    report(4, criterion_4());
    report(5, criterion_5());
    report(6, criterion_6());
    let d = run_directional();
    report(7, criterion_7(&d));
    report(8, criterion_8(&d));
    report(9, criterion_9(&d));
    report(10, criterion_10());

    let failed: Vec<usize> = results
        .iter()
        .filter(|(_, o)| !o.passed)
        .map(|(n, _)| *n)
        .collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" {failed:?}")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
