//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Every oracle here is written independently of the
//! library code it checks.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::StandardNormal;

use fewshot_crop::analysis::VariancePoint;
use fewshot_crop::cropgeom::{interpolate_context, mask_to_box, BinaryMask, ContextFraction};
use fewshot_crop::datamodel::BoundingBox;
use fewshot_crop::probe::{train_head, LinearHead, Objective, TrainConfig};
use fewshot_crop::rng::{rng_from_seed, EngineRng};
use fewshot_crop::runner::{fuse_eval, run_analysis, run_benchmark, AnalysisConfig, BenchmarkConfig, FusionEvalConfig};
use fewshot_crop::stats::{mean, sign_test};
use fewshot_crop::synth::{effective_context, SynthConfig, SynthDataset};
use fewshot_crop::transduction::{run_soft_kmeans, soft_assign, SoftKMeansConfig};

// Pinned tolerances and budgets.
const GEOMETRY_CASES: usize = 10_000;
const GEOMETRY_BUDGET: Duration = Duration::from_secs(5);
const FD_STEP: f64 = 1e-6;
const FD_MAX_REL_ERR: f64 = 1e-5;
const MONOTONE_SLACK: f64 = 1e-12;
const UNIFORM_TOL: f64 = 1e-12;
const ROW_SUM_TOL: f64 = 1e-9;
const WORKED_TOL: f64 = 1e-6;
const HARD_BETA: f64 = 1e3;
const HARD_MARGIN: f64 = 20.0;
const SIGN_P: f64 = 0.01;
const END_TO_END_EPISODES: usize = 200;
const END_TO_END_BUDGET: Duration = Duration::from_secs(120);
const FUSION_EPISODES: usize = 1000;
const FUSION_SLACK: f64 = 0.005;
const ANALYSIS_SE: f64 = 3.0;

/// Synthetic setting where each class's context resembles another class's
/// object, so full-image training data carries information crops lack.
fn decoy_context() -> SynthConfig {
    SynthConfig {
        ctx_scale: 1.5,
        ctx_overlap: 0.9,
        ..Default::default()
    }
}

/// Setting dominated by per-image background.
fn background_heavy() -> SynthConfig {
    SynthConfig {
        bg_spread: 4.0,
        ..Default::default()
    }
}

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gauss(rng: &mut EngineRng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_box(rng: &mut EngineRng, w: u32, h: u32) -> BoundingBox {
    let x0 = rng.random_range(0..w);
    let y0 = rng.random_range(0..h);
    let x1 = rng.random_range(x0 + 1..=w);
    let y1 = rng.random_range(y0 + 1..=h);
    BoundingBox::new(x0, y0, x1, y1).unwrap()
}

fn inside(inner: &BoundingBox, outer: &BoundingBox) -> bool {
    outer.x_min() <= inner.x_min()
        && outer.y_min() <= inner.y_min()
        && inner.x_max() <= outer.x_max()
        && inner.y_max() <= outer.y_max()
}

fn geometry() -> Outcome {
    let start = Instant::now();
    let mut rng = rng_from_seed(11);
    let mut failures = Vec::new();
    for case in 0..GEOMETRY_CASES {
        let (w, h) = (rng.random_range(1..=2000u32), rng.random_range(1..=2000u32));
        let b = random_box(&mut rng, w, h);
        let full = BoundingBox::new(0, 0, w, h).unwrap();
        let (mut l1, mut l2) = (rng.random::<f64>(), rng.random::<f64>());
        if l1 > l2 {
            std::mem::swap(&mut l1, &mut l2);
        }
        let at = |l: f64| interpolate_context(&b, ContextFraction::new(l).unwrap(), w, h).unwrap();
        let (c1, c2) = (at(l1), at(l2));
        if at(0.0) != b || at(1.0) != full {
            failures.push(format!("case {case}: endpoints"));
        }
        if !(inside(&b, &c1) && inside(&c1, &c2) && inside(&c2, &full)) {
            failures.push(format!("case {case}: nesting {b} {c1} {c2}"));
        }
    }
    // mask minimality against a brute-force bounding box
    for case in 0..1000 {
        let (w, h) = (rng.random_range(1..=40u32), rng.random_range(1..=40u32));
        let density = rng.random::<f64>() * 0.2;
        let data: Vec<bool> = (0..w * h).map(|_| rng.random::<f64>() < density).collect();
        let mask = BinaryMask::new(w, h, data.clone()).unwrap();
        let on: Vec<(u32, u32)> = (0..w * h).filter(|&i| data[i as usize]).map(|i| (i % w, i / w)).collect();
        match (mask_to_box(&mask), on.is_empty()) {
            (Err(_), true) => {}
            (Ok(b), false) => {
                let expect = (
                    on.iter().map(|p| p.0).min().unwrap(),
                    on.iter().map(|p| p.1).min().unwrap(),
                    on.iter().map(|p| p.0).max().unwrap() + 1,
                    on.iter().map(|p| p.1).max().unwrap() + 1,
                );
                if (b.x_min(), b.y_min(), b.x_max(), b.y_max()) != expect {
                    failures.push(format!("mask {case}: {b} vs {expect:?}"));
                }
            }
            (r, _) => failures.push(format!("mask {case}: unexpected {r:?}")),
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures.is_empty() && elapsed < GEOMETRY_BUDGET,
        format!(
            "{GEOMETRY_CASES} nesting cases + 1000 masks, {} failures, {:.2}s (budget {}s){}",
            failures.len(),
            elapsed.as_secs_f64(),
            GEOMETRY_BUDGET.as_secs(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn random_problem(rng: &mut EngineRng) -> (usize, Vec<Vec<f64>>, Vec<usize>) {
    let ways = rng.random_range(2..=5);
    let dim = rng.random_range(2..=8);
    let n = rng.random_range(ways..=4 * ways);
    let feats = (0..n).map(|_| (0..dim).map(|_| gauss(rng)).collect()).collect();
    // every class present
    let labels = (0..n).map(|i| if i < ways { i } else { rng.random_range(0..ways) }).collect();
    (ways, feats, labels)
}

fn probe() -> Outcome {
    let mut rng = rng_from_seed(22);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (ways, feats, labels) = random_problem(&mut rng);
        let dim = feats[0].len();
        let weights: Option<Vec<f64>> = rng.random_bool(0.5).then(|| (0..feats.len()).map(|_| rng.random::<f64>() + 0.1).collect());
        let normalize = rng.random_bool(0.5);
        let obj = Objective::new(ways, &feats, &labels, weights.as_deref(), 1e-3, normalize).unwrap();
        let head = LinearHead::from_parts(
            ways,
            dim,
            (0..ways * dim).map(|_| gauss(&mut rng)).collect(),
            (0..ways).map(|_| gauss(&mut rng)).collect(),
        )
        .unwrap();
        let (gw, gb) = obj.gradient(&head);
        let analytic: Vec<f64> = gw.iter().chain(&gb).copied().collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        for k in 0..analytic.len() {
            let shifted = |delta: f64| {
                let mut h = head.clone();
                if k < ways * dim {
                    h.weights_mut()[k] += delta;
                } else {
                    h.bias_mut()[k - ways * dim] += delta;
                }
                obj.loss(&h)
            };
            numeric.push((shifted(FD_STEP) - shifted(-FD_STEP)) / (2.0 * FD_STEP));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-300));
    }

    let cfg = TrainConfig {
        learning_rate: 0.1,
        epochs: 200,
        ..Default::default()
    };
    let mut increases = 0;
    for _ in 0..50 {
        let (ways, feats, labels) = random_problem(&mut rng);
        let head = train_head(ways, &feats, &labels, None, &cfg).unwrap();
        increases += head.loss_history.windows(2).filter(|p| p[1] > p[0] + MONOTONE_SLACK).count();
    }

    let mut uniform_err = 0.0f64;
    for ways in 2..=10 {
        let head = LinearHead::zeros(ways, 16, true);
        let x: Vec<f64> = (0..16).map(|_| gauss(&mut rng)).collect();
        for p in head.predict_proba(&x).unwrap() {
            uniform_err = uniform_err.max((p - 1.0 / ways as f64).abs());
        }
    }
    outcome(
        worst < FD_MAX_REL_ERR && increases == 0 && uniform_err <= UNIFORM_TOL,
        format!(
            "max grad rel err {worst:.2e} (< {FD_MAX_REL_ERR:.0e}, h={FD_STEP:.0e}, 100 instances); \
             {increases} loss increases over 50 runs at lr 0.1; zero-head max |p - 1/w| {uniform_err:.1e}"
        ),
    )
}

/// Hard K-means with labeled points pinned to their class, from the labeled means.
fn lloyd(ways: usize, support: &[Vec<f64>], labels: &[usize], query: &[Vec<f64>], beta: f64) -> (Vec<usize>, f64) {
    let dim = support[0].len();
    let mut sum = vec![vec![0.0; dim]; ways];
    let mut count = vec![0.0; ways];
    for (x, &l) in support.iter().zip(labels) {
        count[l] += 1.0;
        for k in 0..dim {
            sum[l][k] += x[k];
        }
    }
    let mut cent: Vec<Vec<f64>> = (0..ways).map(|c| sum[c].iter().map(|v| v / count[c]).collect()).collect();
    let mut assign = vec![usize::MAX; query.len()];
    let mut min_margin = f64::INFINITY;
    for _ in 0..1000 {
        let mut next_assign = Vec::with_capacity(query.len());
        for q in query {
            let mut d: Vec<(f64, usize)> = cent
                .iter()
                .enumerate()
                .map(|(c, m)| (q.iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum(), c))
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            min_margin = min_margin.min((d[1].0 - d[0].0) * beta);
            next_assign.push(d[0].1);
        }
        if next_assign == assign {
            break;
        }
        assign = next_assign;
        let mut s = sum.clone();
        let mut n = count.clone();
        for (q, &a) in query.iter().zip(&assign) {
            n[a] += 1.0;
            for k in 0..dim {
                s[a][k] += q[k];
            }
        }
        cent = (0..ways).map(|c| s[c].iter().map(|v| v / n[c]).collect()).collect();
    }
    (assign, min_margin)
}

fn worked_instance_oracle() -> [f64; 2] {
    let (q1, q2, beta) = (2.0f64, 8.0f64, 1.0f64);
    let (mut a, mut b) = (0.0f64, 10.0f64);
    for _ in 0..10_000 {
        let ra1 = 1.0 / (1.0 + (-beta * ((q1 - b).powi(2) - (q1 - a).powi(2))).exp());
        let ra2 = 1.0 / (1.0 + (-beta * ((q2 - b).powi(2) - (q2 - a).powi(2))).exp());
        let (rb1, rb2) = (1.0 - ra1, 1.0 - ra2);
        let na = (0.0 + ra1 * q1 + ra2 * q2) / (1.0 + ra1 + ra2);
        let nb = (10.0 + rb1 * q1 + rb2 * q2) / (1.0 + rb1 + rb2);
        let moved = (na - a).abs().max((nb - b).abs());
        a = na;
        b = nb;
        if moved < 1e-8 {
            break;
        }
    }
    [a, b]
}

fn transduction() -> Outcome {
    let mut rng = rng_from_seed(33);
    let mut notes = Vec::new();
    let mut pass = true;

    // row sums
    let mut worst_row = 0.0f64;
    for _ in 0..100 {
        let (w, d) = (rng.random_range(2..=6), rng.random_range(1..=10));
        let pts: Vec<Vec<f64>> = (0..20).map(|_| (0..d).map(|_| 3.0 * gauss(&mut rng)).collect()).collect();
        let cents: Vec<Vec<f64>> = (0..w).map(|_| (0..d).map(|_| 3.0 * gauss(&mut rng)).collect()).collect();
        let beta = 10f64.powf(rng.random_range(-3.0..3.0));
        for row in soft_assign(&pts, &cents, beta).unwrap() {
            worst_row = worst_row.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    pass &= worst_row <= ROW_SUM_TOL;
    notes.push(format!("row-sum err {worst_row:.1e}"));

    // fixed point: queries at the labeled means
    let support = vec![vec![0.0, 0.0], vec![2.0, 0.0], vec![20.0, 20.0], vec![20.0, 22.0]];
    let labels = vec![0, 0, 1, 1];
    let query = vec![vec![1.0, 0.0], vec![20.0, 21.0]];
    let cfg = SoftKMeansConfig::default();
    let r = run_soft_kmeans(2, &support, &labels, &query, &cfg).unwrap();
    let shift = r.state.centroids[0][0] - 1.0;
    let shift = shift.abs().max((r.state.centroids[1][1] - 21.0).abs());
    let fixed_ok = r.iterations == 1 && r.converged && shift < cfg.tol && r.pseudolabels == vec![0, 1];
    pass &= fixed_ok;
    notes.push(format!("fixed point: {} iteration(s), shift {shift:.1e}", r.iterations));

    // hard limit against Lloyd
    let (mut agree, mut rejected) = (0, 0);
    while agree < 20 {
        let ways = rng.random_range(2..=4);
        let centers: Vec<[f64; 2]> = (0..ways).map(|c| [12.0 * c as f64 + gauss(&mut rng), 12.0 * gauss(&mut rng).abs()]).collect();
        let mut support = Vec::new();
        let mut labels = Vec::new();
        let mut query = Vec::new();
        let mut truth = Vec::new();
        for (c, m) in centers.iter().enumerate() {
            for _ in 0..rng.random_range(1..=3) {
                support.push(vec![m[0] + gauss(&mut rng), m[1] + gauss(&mut rng)]);
                labels.push(c);
            }
            for _ in 0..rng.random_range(3..=8) {
                query.push(vec![m[0] + gauss(&mut rng), m[1] + gauss(&mut rng)]);
                truth.push(c);
            }
        }
        let (oracle, margin) = lloyd(ways, &support, &labels, &query, HARD_BETA);
        if margin <= HARD_MARGIN {
            rejected += 1;
            continue;
        }
        let cfg = SoftKMeansConfig {
            beta: HARD_BETA,
            ..Default::default()
        };
        let got = run_soft_kmeans(ways, &support, &labels, &query, &cfg).unwrap();
        if got.pseudolabels != oracle {
            pass = false;
            notes.push(format!("Lloyd mismatch on instance {agree}"));
            break;
        }
        agree += 1;
    }
    notes.push(format!("Lloyd agreement {agree}/20 ({rejected} instances below margin redrawn)"));

    // 1-D worked instance
    let cfg = SoftKMeansConfig {
        beta: 1.0,
        tol: 1e-8,
        ..Default::default()
    };
    let r = run_soft_kmeans(2, &[vec![0.0], vec![10.0]], &[0, 1], &[vec![2.0], vec![8.0]], &cfg).unwrap();
    let oracle = worked_instance_oracle();
    let err = (r.state.centroids[0][0] - oracle[0]).abs().max((r.state.centroids[1][0] - oracle[1]).abs());
    pass &= err < WORKED_TOL && r.pseudolabels == vec![0, 1];
    notes.push(format!(
        "1-D instance centroids ({:.6}, {:.6}) vs oracle err {err:.1e}",
        r.state.centroids[0][0], r.state.centroids[1][0]
    ));
    outcome(pass, notes.join("; "))
}

fn paired(report: &fewshot_crop::runner::RunReport, better: &str, worse: &str, n: usize) -> (f64, f64, f64, bool) {
    let a = report.accuracies(better, n);
    let b = report.accuracies(worse, n);
    let t = sign_test(&a, &b);
    let (ma, mb) = (mean(&a), mean(&b));
    (ma, mb, t.p_value, ma > mb && t.wins > t.losses && t.p_value < SIGN_P)
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let ds = SynthDataset::new(SynthConfig::default()).unwrap();
    let store = ds.standard_store().unwrap();
    let cfg = BenchmarkConfig {
        sweep: vec![5],
        runs: END_TO_END_EPISODES,
        methods: vec!["baseline".parse().unwrap(), "gt-default".parse().unwrap()],
        ..Default::default()
    };
    let report = run_benchmark(&ds.manifest, &store, &cfg).unwrap();
    let (gt, base, p, ok) = paired(&report, "gt-default", "baseline", 5);
    let elapsed = start.elapsed();
    outcome(
        ok && elapsed < END_TO_END_BUDGET,
        format!(
            "baseline {base:.4}, gt-default {gt:.4} (+{:.1} pts), sign test p={p:.1e}, {END_TO_END_EPISODES} episodes in {:.1}s",
            100.0 * (gt - base),
            elapsed.as_secs_f64()
        ),
    )
}

fn mode_ordering() -> Outcome {
    let ds = SynthDataset::new(decoy_context()).unwrap();
    let store = ds.standard_store().unwrap();
    let cfg = BenchmarkConfig {
        sweep: vec![5],
        runs: END_TO_END_EPISODES,
        methods: vec!["replace".parse().unwrap(), "multiple".parse().unwrap()],
        ..Default::default()
    };
    let report = run_benchmark(&ds.manifest, &store, &cfg).unwrap();
    let (multiple, replace, p, ok) = paired(&report, "multiple", "replace", 5);
    outcome(
        ok,
        format!("replace {replace:.4} < multiple {multiple:.4}, sign test p={p:.1e} (ctx_scale 1.5, ctx_overlap 0.9)"),
    )
}

fn fusion() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let ds = SynthDataset::new(SynthConfig::default()).unwrap();
    let store = ds.standard_store().unwrap();
    let mut cfg = FusionEvalConfig {
        runs: 200,
        ..Default::default()
    };
    cfg.fusion.threshold = 0.0;
    let zero = fuse_eval(&ds.manifest, &store, &cfg).unwrap();
    let (b, f) = (zero.report.accuracies("baseline", 5), zero.report.accuracies("fused", 5));
    let bitwise = b.iter().zip(&f).all(|(x, y)| x.to_bits() == y.to_bits())
        && zero.audit.iter().all(|r| r.provenance == "original");
    pass &= bitwise;
    notes.push(format!("tau=0 bitwise equal: {bitwise}"));

    cfg.fusion.threshold = 0.8;
    let def = fuse_eval(&ds.manifest, &store, &cfg).unwrap().report;
    let (mb, mf) = (mean(&def.accuracies("baseline", 5)), mean(&def.accuracies("fused", 5)));
    pass &= mf >= mb - FUSION_SLACK;
    notes.push(format!("default config {mb:.4} -> {mf:.4}"));

    let ds = SynthDataset::new(background_heavy()).unwrap();
    let store = ds.standard_store().unwrap();
    cfg.runs = FUSION_EPISODES;
    let heavy = fuse_eval(&ds.manifest, &store, &cfg).unwrap().report;
    let (fused, base, p, ok) = paired(&heavy, "fused", "baseline", 5);
    pass &= ok;
    notes.push(format!("background-heavy {base:.4} -> {fused:.4} over {FUSION_EPISODES} episodes, p={p:.1e}"));
    outcome(pass, notes.join("; "))
}

fn analysis() -> Outcome {
    let synth = SynthConfig {
        images_per_class: 100,
        ..Default::default()
    };
    let ds = SynthDataset::new(synth).unwrap();
    let store = ds.standard_store().unwrap();
    let cfg = AnalysisConfig {
        samples_per_class: 100,
        ..Default::default()
    };
    let out = run_analysis(&ds.manifest, &store, &cfg).unwrap();
    let pts: &[VariancePoint] = &out.curve.points;
    let increasing = pts.windows(2).all(|p| p[1].variance > p[0].variance);
    let last = pts.last().unwrap();
    let end_zero = last.lambda == 1.0 && last.centroid_distance == 0.0;

    // Closed form: the λ-centroid of class c sits (1 − λ̄_c)(m + h_c + ḡ_c)
    // from the full-image centroid, λ̄_c being the mean effective context of
    // the pixel-rounded crops and ḡ_c the class-mean background. Its norm
    // averages sqrt((1 − λ̄_c)²‖m + h_c‖² + E‖noise‖²) with per-coordinate
    // sampling error s_c.
    let d = synth.dim as f64;
    let mut worst_z = 0.0f64;
    let mut worst_literal = 0.0f64;
    for p in pts.iter().filter(|p| p.lambda < 1.0) {
        let l = ContextFraction::new(p.lambda).unwrap();
        let (mut target, mut literal, mut var) = (0.0, 0.0, 0.0);
        for c in 0..synth.classes {
            let a: f64 = ds
                .model
                .context(c)
                .iter()
                .zip(ds.model.bg_mean())
                .map(|(h, m)| (h + m) * (h + m))
                .sum::<f64>()
                .sqrt();
            let imgs: Vec<_> = ds.manifest.images.iter().filter(|i| i.label == format!("class{c}")).collect();
            let n = imgs.len() as f64;
            let (mut lbar, mut sq) = (0.0, 0.0);
            for img in &imgs {
                let gt = img.gt_box.unwrap();
                let crop = interpolate_context(&gt, l, img.width, img.height).unwrap();
                let e = effective_context(&crop, &gt, img.width, img.height);
                lbar += e / n;
                sq += (1.0 - e).powi(2) / n;
            }
            let noise = sq * synth.bg_spread.powi(2) + 2.0 * synth.noise.powi(2);
            target += ((1.0 - lbar).powi(2) * a * a + noise / n).sqrt();
            literal += (1.0 - p.lambda) * a;
            var += noise / (d * n);
        }
        let k = synth.classes as f64;
        let se = var.sqrt() / k;
        worst_z = worst_z.max(((p.centroid_distance - target / k) / se).abs());
        worst_literal = worst_literal.max(((p.centroid_distance - literal / k) / se).abs());
    }
    outcome(
        increasing && end_zero && worst_z <= ANALYSIS_SE,
        format!(
            "variance strictly increasing: {increasing} ({:.4} -> {:.4}); distance(1)=0: {end_zero}; \
             max |z| vs finite-sample closed form {worst_z:.2} (<= {ANALYSIS_SE}); \
             vs (1-λ)‖m+h_c‖ alone {worst_literal:.2}",
            pts[0].variance, last.variance
        ),
    )
}

fn fscrop(args: &[&str], dir: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_fscrop"))
        .args(args)
        .current_dir(dir)
        .status()
        .expect("spawn fscrop");
    assert!(status.success(), "fscrop {args:?} failed: {status}");
}

fn cli_outputs(dir: &Path, extra: &[&str]) -> Vec<(String, Vec<u8>)> {
    fscrop(&["synth", "--out-dir", "d", "--images-per-class", "40", "--seed", "5"], dir);
    let data = ["--manifest", "d/manifest.json", "--features", "d/features.fscache"];
    let mut run = vec!["run"];
    run.extend(data);
    run.extend(["--out", "run.csv", "--runs", "4", "--sweep", "5,10", "--methods", "baseline,gt-default,sam-multiple", "--seed", "9"]);
    run.extend(extra);
    fscrop(&run, dir);
    let mut trans = run.clone();
    trans[data.len() + 2] = "trans.csv";
    trans.extend(["--setting", "transductive"]);
    fscrop(&trans, dir);
    let mut fuse = vec!["fuse"];
    fuse.extend(data);
    fuse.extend(["--out", "fuse.csv", "--audit", "audit.csv", "--runs", "4", "--seed", "9"]);
    fuse.extend(extra);
    fscrop(&fuse, dir);
    let mut analyze = vec!["analyze"];
    analyze.extend(data);
    analyze.extend(["--curve", "curve.csv", "--scatter", "scatter.csv"]);
    fscrop(&analyze, dir);
    ["run.csv", "trans.csv", "fuse.csv", "audit.csv", "curve.csv", "scatter.csv", "d/features.fscache"]
        .iter()
        .map(|f| (f.to_string(), std::fs::read(dir.join(f)).unwrap()))
        .collect()
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let first = cli_outputs(a.path(), &[]);
    let second = cli_outputs(b.path(), &[]);
    let sequential = cli_outputs(c.path(), &["--sequential"]);
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .chain(first.iter().zip(&sequential))
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    outcome(
        differing.is_empty(),
        format!(
            "{} outputs byte-identical across 2 repeated runs and a sequential run{}",
            first.len(),
            if differing.is_empty() { String::new() } else { format!("; differ: {differing:?}") }
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("geometry", geometry),
        ("probe", probe),
        ("transduction", transduction),
        ("synthetic end-to-end", end_to_end),
        ("mode ordering", mode_ordering),
        ("fusion", fusion),
        ("analysis", analysis),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
