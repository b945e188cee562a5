//! Acceptance checks, one line per criterion:
//!
//! 1. full-objective gradients vs central finite differences
//! 2. forward-process contract (exact T, uniform subsets, uniform T)
//! 3. identity anchors (T = 0, zero reconstruction loss, zero-λ trajectory)
//! 4. fast AUC/UAUC vs brute-force oracles
//! 5. RelaImpr arithmetic on published figures
//! 6. asymdiff vs base on the default synthetic data, 10 paired seeds
//! 7. ablation ordering over 5 paired seeds
//! 8. serving overhead of the denoiser
//! 9. byte-identical gen-data / train / evaluate outputs
//!
//! Pass criterion numbers as arguments to run a subset.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use asymdiff_core::baselines::{run_arm, ArmName, ArmSpec};
use asymdiff_core::dataset::{generate, SynthData, SynthSpec};
use asymdiff_core::features::{
    forward_process, sample_t, FeatureDescriptor, FeatureSchema, Sample, MISSING,
};
use asymdiff_core::metrics::{auc, relaimpr, uauc, MetricsReport, ScoredExample};
use asymdiff_core::model::{
    base_scores, extract_backward, extract_batch, head_backward, head_forward, init_params,
    LatentRep, ModelConfig, ModelParams,
};
use asymdiff_core::numeric::{adam_step, grad_check, AdamState, Tensor2, PROB_EPS};
use asymdiff_core::trainer::{
    draw_noise, epoch_order, loss_recon, objective, serve_scores, NoiseBatch, TrainConfig, Trainer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

impl Outcome {
    fn check(ok: bool, detail: String) -> Self {
        Outcome {
            verdict: if ok { Verdict::Pass } else { Verdict::Fail },
            detail,
        }
    }
}

// ---------------------------------------------------------------- 1

fn tiny_schema() -> FeatureSchema {
    let f = |name: &str, k: usize| FeatureDescriptor::new(name, (0..k).map(|i| i.to_string()));
    FeatureSchema::new(vec![f("u", 5), f("i", 4), f("c1", 3), f("c2", 3)], Some(0)).unwrap()
}

fn tiny_batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<Sample> {
    let vocab = [5u32, 4, 3, 3];
    (0..n as u32)
        .map(|u| {
            let features = vocab
                .iter()
                .map(|&v| if rng.random_bool(0.15) { MISSING } else { rng.random_range(1..=v) })
                .collect();
            Sample::new(rng.random_bool(0.5), u, features)
        })
        .collect()
}

fn gradient_correctness() -> Outcome {
    const TOL: f64 = 1e-4;
    let start = Instant::now();
    let cfg = TrainConfig {
        model: ModelConfig {
            embedding_dim: 3,
            latent_dim: 5,
            mlp_hidden: vec![6],
            cross_layers: 2,
            denoiser_hidden: 6,
            lambda_main: 1.0,
            lambda_recon: 0.8,
            lambda_aux: 1.3,
            stop_gradient_target: true,
        },
        ..TrainConfig::default()
    };
    let mut worst = (0.0f64, String::new());
    let mut blocks = 0;
    let mut failures = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p: ModelParams<f64> = init_params(&tiny_schema(), &cfg.model, seed).unwrap();
        let data = tiny_batch(&mut rng, 4);
        let refs: Vec<&Sample> = data.iter().collect();
        let noise: NoiseBatch<f64> = draw_noise(&cfg, &refs, &mut rng).unwrap();
        let mut grads = p.zeros_like();
        objective(&p, &cfg.model, &refs, &noise, None, Some(&mut grads)).unwrap();
        // The stop-gradient holds the reconstruction target fixed.
        let target = extract_batch(&p, &refs).unwrap().0;
        let loss = |q: &ModelParams<f64>| {
            objective(q, &cfg.model, &refs, &noise, Some(&target), None).unwrap().0.total
        };
        let report = grad_check(&p, &grads, loss, TOL);
        blocks = report.blocks.len();
        failures += report.failures().count();
        for b in &report.blocks {
            if b.max_rel_error > worst.0 {
                worst = (b.max_rel_error, format!("{} (seed {seed})", b.name));
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome::check(
        failures == 0 && worst.0 < TOL && elapsed < Duration::from_secs(60),
        format!(
            "20 seeds × {blocks} blocks, f64; max rel err {:.2e} at {}; {failures} failing blocks; {:.1}s",
            worst.0,
            worst.1,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 2

fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn forward_contract() -> Outcome {
    const N: usize = 5;
    const TRIALS: usize = 100_000;
    const DRAWS: usize = 1_000_000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let x0 = Sample::new(true, 0, vec![1, 2, 3, 4, 5]);
    let mut exact = true;
    let mut worst_subset = 0.0f64;
    for t in 0..=N {
        let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for _ in 0..TRIALS {
            let out = forward_process(&x0, t, &mut rng);
            let dropped: Vec<usize> = (0..N).filter(|&f| out.noisy.features[f] == MISSING).collect();
            let kept_ok = (0..N)
                .filter(|f| !dropped.contains(f))
                .all(|f| out.noisy.features[f] == x0.features[f]);
            exact &= dropped.len() == t && out.mask.count() == t && kept_ok && !out.clamped;
            *counts.entry(dropped).or_default() += 1;
        }
        let subsets = binomial(N, t);
        exact &= counts.len() == subsets;
        for &c in counts.values() {
            let dev = (c as f64 / TRIALS as f64 - 1.0 / subsets as f64).abs();
            worst_subset = worst_subset.max(dev);
        }
    }
    let mut t_counts = [0usize; N + 1];
    for _ in 0..DRAWS {
        t_counts[sample_t(&mut rng, N)] += 1;
    }
    let worst_t = t_counts
        .iter()
        .map(|&c| (c as f64 / DRAWS as f64 - 1.0 / (N + 1) as f64).abs())
        .fold(0.0, f64::max);
    let elapsed = start.elapsed();
    Outcome::check(
        exact && worst_subset <= 0.005 && worst_t <= 0.005 && elapsed < Duration::from_secs(60),
        format!(
            "exact T masked: {exact}; max subset freq dev {:.3} pp (1e5 trials per T); \
             max T freq dev {:.3} pp (1e6 draws); {:.1}s",
            worst_subset * 100.0,
            worst_t * 100.0,
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 3

/// Minimal supervised trainer: `f(h(x))`, mean cross-entropy, Adam.
fn plain_ce_trajectory(cfg: &TrainConfig, schema: &FeatureSchema, data: &[Sample], steps: usize) -> Vec<ModelParams<f64>> {
    let mut params: ModelParams<f64> = init_params(schema, &cfg.model, cfg.seed).unwrap();
    let mut adam = AdamState::new(cfg.optimizer, &params);
    let per_epoch = data.len().div_ceil(cfg.batch_size);
    let mut out = Vec::new();
    for step in 0..steps {
        let order = epoch_order(cfg.seed, (step / per_epoch) as u64, data.len());
        let pos = step % per_epoch;
        let idx = &order[pos * cfg.batch_size..((pos + 1) * cfg.batch_size).min(data.len())];
        let batch: Vec<&Sample> = idx.iter().map(|&i| &data[i]).collect();
        let (z, cache) = extract_batch(&params, &batch).unwrap();
        let (_, probs) = head_forward(&params, &z).unwrap();
        let b = batch.len() as f64;
        let dlogit: Vec<f64> = batch
            .iter()
            .zip(&probs)
            .map(|(s, &p)| {
                if p <= PROB_EPS || p >= 1.0 - PROB_EPS {
                    0.0
                } else {
                    (p - if s.label { 1.0 } else { 0.0 }) / b
                }
            })
            .collect();
        let mut grads = params.zeros_like();
        let gz = head_backward(&params, &z, &Tensor2::new(batch.len(), 1, dlogit).unwrap(), &mut grads).unwrap();
        extract_backward(&params, &cache, &gz, &mut grads).unwrap();
        adam_step(&mut adam, &mut params, &grads).unwrap();
        out.push(params.clone());
    }
    out
}

fn identity_anchors() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = tiny_batch(&mut rng, 200);
    let t0 = data.iter().all(|x| forward_process(x, 0, &mut rng).noisy == *x);

    let recon_zero = (0..100).all(|_| {
        let z = LatentRep((0..128).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<f64>>());
        loss_recon(&z, &z).unwrap() == 0.0
    });

    let cfg = TrainConfig {
        seed: 5,
        batch_size: 16,
        epochs: 1,
        model: ModelConfig {
            embedding_dim: 4,
            latent_dim: 6,
            mlp_hidden: vec![8, 7],
            cross_layers: 2,
            denoiser_hidden: 5,
            lambda_main: 1.0,
            lambda_recon: 0.0,
            lambda_aux: 0.0,
            stop_gradient_target: true,
        },
        ..TrainConfig::default()
    };
    let schema = tiny_schema();
    let train = &data[..160];
    let mut ours = Vec::new();
    let mut t: Trainer<f64> = Trainer::new(cfg.clone(), schema.clone()).unwrap();
    t.fit(train, &mut std::io::sink(), |tr| {
        ours.push(tr.params().clone());
        Ok(())
    })
    .unwrap();
    let oracle = plain_ce_trajectory(&cfg, &schema, train, 10);
    let identical = ours.len() >= 10 && ours.iter().zip(&oracle).all(|(a, b)| a == b);
    Outcome::check(
        t0 && recon_zero && identical,
        format!(
            "T=0 identity: {t0}; loss_recon(z,z)=0: {recon_zero}; \
             λ_recon=λ_aux=0 bit-identical to plain CE for 10 steps: {identical}"
        ),
    )
}

// ---------------------------------------------------------------- 4

fn pairwise_auc(ex: &[ScoredExample]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for p in ex.iter().filter(|e| e.label) {
        for n in ex.iter().filter(|e| !e.label) {
            den += 1.0;
            num += if p.score > n.score {
                1.0
            } else if p.score == n.score {
                0.5
            } else {
                0.0
            };
        }
    }
    num / den
}

fn metric_oracles() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut worst_auc, mut worst_uauc) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let ex: Vec<ScoredExample> = (0..200)
            .map(|_| {
                // Coarse scores force many ties.
                let score = rng.random_range(0..20) as f64 / 20.0;
                ScoredExample::new(rng.random_range(0..15), rng.random_bool(0.4), score)
            })
            .collect();
        worst_auc = worst_auc.max((auc(&ex).unwrap() - pairwise_auc(&ex)).abs());
        let mut by_user: BTreeMap<u32, Vec<ScoredExample>> = BTreeMap::new();
        for e in &ex {
            by_user.entry(e.user_id).or_default().push(*e);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for g in by_user.values() {
            let pos = g.iter().filter(|e| e.label).count();
            if pos == 0 || pos == g.len() {
                continue;
            }
            num += g.len() as f64 * pairwise_auc(g);
            den += g.len() as f64;
        }
        worst_uauc = worst_uauc.max((uauc(&ex).unwrap().value - num / den).abs());
    }
    let elapsed = start.elapsed();
    Outcome::check(
        worst_auc <= 1e-12 && worst_uauc <= 1e-12 && elapsed < Duration::from_secs(10),
        format!(
            "50 instances × 200 examples with ties; max |AUC−oracle| {worst_auc:.1e}, \
             max |UAUC−oracle| {worst_uauc:.1e}; {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 5

fn relaimpr_arithmetic() -> Outcome {
    let cases = [
        (0.92267, 0.92359, 0.100),
        (0.61578, 0.62614, 1.682),
        (0.61578, 0.62152, 0.932),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (base, model, expected) in cases {
        let got = relaimpr(model, base).unwrap();
        ok &= (got - expected).abs() <= 0.001;
        parts.push(format!("({base}→{model}) {got:+.4}% vs {expected:+.3}%"));
    }
    Outcome::check(ok, parts.join("; "))
}

// ---------------------------------------------------------------- 6, 7

struct Sweep {
    oracle_auc: f64,
    reports: BTreeMap<ArmName, Vec<MetricsReport>>,
    elapsed: Duration,
}

fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let start = Instant::now();
        let data: SynthData = generate(&SynthSpec::default()).unwrap();
        let shared = TrainConfig::default();
        let mut reports = BTreeMap::new();
        let ten: Vec<u64> = (0..10).collect();
        for (arm, seeds) in [
            (ArmName::Base, &ten[..]),
            (ArmName::Asymdiff, &ten[..]),
            (ArmName::AsymdiffWoRecon, &ten[..5]),
            (ArmName::AsymdiffWoAux, &ten[..5]),
        ] {
            eprintln!("  training {arm} on seeds {seeds:?} ...");
            let r = run_arm(&ArmSpec::new(arm), &shared, &data.schema, &data.train, &data.eval, seeds).unwrap();
            reports.insert(arm, r);
        }
        Sweep {
            oracle_auc: data.oracle_auc().unwrap(),
            reports,
            elapsed: start.elapsed(),
        }
    })
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn per_seed_table(arms: &[ArmName], seeds: usize) {
    let s = sweep();
    let head: Vec<&str> = arms.iter().map(|a| a.name()).collect();
    println!("    seed | {}", head.iter().map(|h| format!("{h:>26}")).collect::<String>());
    for i in 0..seeds {
        let cells: String = arms
            .iter()
            .map(|a| {
                let r = &s.reports[a][i];
                format!("{:>26}", format!("{:.5} / {:.5}", r.auc, r.uauc))
            })
            .collect();
        println!("    {:>4} | {cells}", s.reports[&arms[0]][i].seed);
    }
    println!("    (AUC / UAUC)");
}

fn directional_claim() -> Outcome {
    let s = sweep();
    per_seed_table(&[ArmName::Base, ArmName::Asymdiff], 10);
    let base = &s.reports[&ArmName::Base];
    let full = &s.reports[&ArmName::Asymdiff];
    let wins = base.iter().zip(full).filter(|(b, f)| f.auc > b.auc).count();
    let uauc = |r: &[MetricsReport]| median(&r.iter().map(|x| x.uauc).collect::<Vec<_>>());
    let auc = |r: &[MetricsReport]| median(&r.iter().map(|x| x.auc).collect::<Vec<_>>());
    let (ub, uf) = (uauc(base), uauc(full));
    let best = full.iter().chain(base).map(|r| r.auc).fold(0.0, f64::max);
    Outcome::check(
        wins >= 8 && uf > ub && s.elapsed < Duration::from_secs(30 * 60),
        format!(
            "asymdiff AUC > base in {wins}/10 seeds; median AUC {:.5} vs {:.5}; \
             median UAUC {uf:.5} vs {ub:.5}; ground-truth oracle AUC {:.5} (best trained {best:.5}); \
             sweep time {:.0}s",
            auc(full),
            auc(base),
            s.oracle_auc,
            s.elapsed.as_secs_f64()
        ),
    )
}

fn ablation_ordering() -> Outcome {
    const TIE: f64 = 0.0005;
    let s = sweep();
    per_seed_table(&[ArmName::Asymdiff, ArmName::AsymdiffWoRecon, ArmName::AsymdiffWoAux], 5);
    let med = |a: ArmName| median(&s.reports[&a].iter().take(5).map(|r| r.auc).collect::<Vec<_>>());
    let full = med(ArmName::Asymdiff);
    let wr = med(ArmName::AsymdiffWoRecon);
    let wa = med(ArmName::AsymdiffWoAux);
    let detail = format!(
        "median AUC over seeds 0–4: asymdiff {full:.5}, w/o recon {wr:.5} (Δ {:+.5}), \
         w/o aux {wa:.5} (Δ {:+.5})",
        full - wr,
        full - wa
    );
    let verdict = if full >= wr && full >= wa {
        Verdict::Pass
    } else if full + TIE >= wr && full + TIE >= wa {
        Verdict::Inconclusive
    } else {
        Verdict::Fail
    };
    Outcome { verdict, detail }
}

// ---------------------------------------------------------------- 8

fn serving_overhead() -> Outcome {
    let spec = SynthSpec {
        train_size: 1000,
        eval_size: 512,
        ..SynthSpec::default()
    };
    let data = generate(&spec).unwrap();
    let model = ModelConfig::default();
    let params: ModelParams<f32> = init_params(&data.schema, &model, 1).unwrap();
    let batch: Vec<&Sample> = data.eval.iter().take(512).collect();
    let time = |f: &dyn Fn()| {
        let t = Instant::now();
        f();
        t.elapsed()
    };
    let base = || {
        std::hint::black_box(base_scores(&params, &batch).unwrap());
    };
    let serve = || {
        std::hint::black_box(serve_scores(&params, &batch).unwrap());
    };
    for _ in 0..3 {
        base();
        serve();
    }
    let (mut tb, mut ts) = (Duration::MAX, Duration::MAX);
    for _ in 0..30 {
        tb = tb.min(time(&base));
        ts = ts.min(time(&serve));
    }
    let overhead = ts.as_secs_f64() / tb.as_secs_f64() - 1.0;
    Outcome::check(
        overhead < 0.25,
        format!(
            "batch of 512, d_z={}, min of 30: base_predict {:.3} ms, serve_predict {:.3} ms, overhead {:+.1}%",
            model.latent_dim,
            tb.as_secs_f64() * 1e3,
            ts.as_secs_f64() * 1e3,
            overhead * 100.0
        ),
    )
}

// ---------------------------------------------------------------- 9

fn run_bin(args: &[&str], cwd: &Path) {
    let out = Command::new(env!("CARGO_BIN_EXE_asymdiff"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("spec.toml"),
        "seed = 5\nnum_users = 150\nnum_items = 80\ntrain_size = 6000\neval_size = 1500\n",
    )
    .unwrap();
    fs::write(
        d.join("train.toml"),
        "arm = \"asymdiff\"\ntrain_data = \"data/train.csv\"\neval_data = \"data/eval.csv\"\n\
         out_dir = \"run\"\n[train]\nseed = 2\nepochs = 2\nbatch_size = 256\ncheckpoint_every = 10\n",
    )
    .unwrap();
    let mut rounds = Vec::new();
    for _ in 0..2 {
        run_bin(&["gen-data", "--spec", "spec.toml", "--out", "data"], d);
        let data = snapshot(&d.join("data"));
        run_bin(&["train", "--config", "train.toml"], d);
        let train = snapshot(&d.join("run"));
        run_bin(
            &["evaluate", "--checkpoint", "run/model.ckpt", "--data", "data/eval.csv", "--out", "eval.json"],
            d,
        );
        let eval = fs::read(d.join("eval.json")).unwrap();
        rounds.push((data, train, eval));
        for p in ["data", "run"] {
            fs::remove_dir_all(d.join(p)).unwrap();
        }
        fs::remove_file(d.join("eval.json")).unwrap();
    }
    let (a, b) = (&rounds[0], &rounds[1]);
    let same = |x: &BTreeMap<String, Vec<u8>>, y: &BTreeMap<String, Vec<u8>>| -> BTreeSet<String> {
        x.keys().filter(|k| x.get(*k) != y.get(*k)).cloned().collect()
    };
    let diff_data = same(&a.0, &b.0);
    let diff_train = same(&a.1, &b.1);
    let eval_same = a.2 == b.2;
    Outcome::check(
        diff_data.is_empty() && diff_train.is_empty() && eval_same,
        format!(
            "gen-data files {:?}: differing {:?}; train files {:?}: differing {:?}; evaluate report identical: {eval_same}",
            a.0.keys().collect::<Vec<_>>(),
            diff_data,
            a.1.keys().collect::<Vec<_>>(),
            diff_train
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "gradient correctness", gradient_correctness),
        (2, "forward-process contract", forward_contract),
        (3, "identity anchors", identity_anchors),
        (4, "metric oracle equivalence", metric_oracles),
        (5, "RelaImpr arithmetic", relaimpr_arithmetic),
        (6, "asymdiff beats base end to end", directional_claim),
        (7, "ablation ordering", ablation_ordering),
        (8, "serving overhead", serving_overhead),
        (9, "determinism", determinism),
    ];
    let selected: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| Outcome {
            verdict: Verdict::Fail,
            detail: format!(
                "panicked: {}",
                e.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default()
            ),
        });
        let tag = match outcome.verdict {
            Verdict::Pass => "PASS",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::Fail => {
                failed += 1;
                "FAIL"
            }
        };
        println!("criterion {n} [{name}]: {tag} — {}", outcome.detail);
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
