//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! The lines go straight to the stderr handle so they show up even when the
//! harness captures test output.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use segdense::augment::{contrast_normalize, expand_dataset, horizontal_flip, AugmentConfig};
use segdense::cli::run_cli;
use segdense::data::{synthesize_sample, Eye, IrisImage, Phase, Sample, SegmentationMask, SynthConfig, MODEL_SIZE};
use segdense::eval::{gar_at_far, nice1_error, roc_points, Polarity, ScoreSet};
use segdense::infer::{postprocess, predict_masks, PredictOptions};
use segdense::model::{build_model, save_checkpoint, BackboneConfig, IrisSegmenter, ModelSpec, TAP_STRIDES};
use segdense::train::{loss_and_grad, run_training, target_tensor, EpochStats, TrainConfig, TrainPhase};
use segdense_nn::Tensor;

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion}: {verdict}  {detail}");
}

fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> SegmentationMask {
    let px = (0..w * h).map(|_| u8::from(rng.random_bool(density))).collect();
    SegmentationMask::new(w, h, px).unwrap()
}

#[test]
fn criterion_1_metric_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..200 {
        let (a, b) = (random_mask(&mut rng, 8, 8, 0.5), random_mask(&mut rng, 8, 8, 0.5));
        let mut disagree = 0u32;
        for y in 0..8 {
            for x in 0..8 {
                if a.get(x, y) ^ b.get(x, y) {
                    disagree += 1;
                }
            }
        }
        let got = nice1_error(&[a], &[b]).unwrap().average_error;
        if got != disagree as f64 / 64.0 {
            mismatches += 1;
        }
    }
    report(
        1,
        mismatches == 0,
        &format!("{mismatches}/200 pairs differ from the XOR count"),
    );
    assert_eq!(mismatches, 0);
}

fn check_shapes(backbone: BackboneConfig, label: &str) -> Vec<String> {
    let mut problems = Vec::new();
    let model = build_model(&ModelSpec::new(backbone, 4), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (w, h) in [(224, 224), (320, 256)] {
        let img = IrisImage::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap();
        let x = model.spec().preprocess.batch(&[&img]).unwrap();
        let trace = model.forward_trace(&x).unwrap();
        for (i, tap) in trace.taps.taps.iter().enumerate() {
            if tap.shape()[2..] != [h / TAP_STRIDES[i], w / TAP_STRIDES[i]] {
                problems.push(format!("{label} {w}x{h}: tap {i} is {:?}", tap.shape()));
            }
        }
        for (i, m) in trace.branch_maps.iter().enumerate() {
            if m.shape() != [1, 1, h / 4, w / 4] {
                problems.push(format!("{label} {w}x{h}: branch {i} is {:?}", m.shape()));
            }
        }
        let conf = model.predict_confidence(&[&img]).unwrap();
        if conf[0].dims() != (w, h) {
            problems.push(format!("{label} {w}x{h}: confidence map is {:?}", conf[0].dims()));
        }
    }
    problems
}

#[test]
fn criterion_2_shape_contract() {
    let mut problems = check_shapes(BackboneConfig::tiny(), "tiny");
    problems.extend(check_shapes(BackboneConfig::full(), "full"));
    let detail = if problems.is_empty() {
        "tiny and full, 224x224 and 320x256: branches at H/4 x W/4, output at H x W".to_string()
    } else {
        problems.join("; ")
    };
    report(2, problems.is_empty(), &detail);
    assert!(problems.is_empty(), "{detail}");
}

fn loss_at(model: &mut IrisSegmenter, x: &Tensor, t: &Tensor) -> f64 {
    let logits = model.forward_train(x).unwrap();
    loss_and_grad(&logits, t).unwrap().0
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[test]
fn criterion_3_gradient_flow() {
    let mut model = build_model(&ModelSpec::new(BackboneConfig::tiny(), 4), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, h, w) = (2, 64, 64);
    let x = Tensor::from_vec(
        &[n, 3, h, w],
        (0..n * 3 * h * w).map(|_| rng.random_range(-2.0..2.0)).collect(),
    )
    .unwrap();
    let masks: Vec<_> = (0..n).map(|_| random_mask(&mut rng, w, h, 0.3)).collect();
    let t = target_tensor(&masks.iter().collect::<Vec<_>>()).unwrap();

    model.zero_grad();
    let logits = model.forward_train(&x).unwrap();
    let (_, g) = loss_and_grad(&logits, &t).unwrap();
    model.backward(&g);
    let mut analytic: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    model.visit_params(&mut |name, p| {
        analytic.insert(name.to_string(), p.grad.data().to_vec());
    });

    let step = 1e-3;
    let perturb = |m: &mut IrisSegmenter, name: &str, i: usize, d: f64| {
        m.visit_params(&mut |n, p| {
            if n == name {
                p.value.data_mut()[i] += d;
            }
        })
    };
    let mut worst_branch = 0.0f64;
    let mut all_nonzero = true;
    for stride in TAP_STRIDES {
        for part in ["weight", "bias"] {
            let name = format!("branches.stride{stride}.conv.{part}");
            let grads = &analytic[&name];
            all_nonzero &= grads.iter().any(|&v| v != 0.0);
            for (i, &a) in grads.iter().enumerate() {
                perturb(&mut model, &name, i, step);
                let up = loss_at(&mut model, &x, &t);
                perturb(&mut model, &name, i, -2.0 * step);
                let down = loss_at(&mut model, &x, &t);
                perturb(&mut model, &name, i, step);
                worst_branch = worst_branch.max(rel_err(a, (up - down) / (2.0 * step)));
            }
        }
    }

    // 1% of all parameters, spread evenly over the flattened parameter list
    let flat: Vec<(String, usize, f64)> = analytic
        .iter()
        .flat_map(|(name, g)| g.iter().enumerate().map(move |(i, &v)| (name.clone(), i, v)))
        .collect();
    let sample_every = 100;
    let mut worst_sampled = 0.0f64;
    let mut sampled = 0;
    for (name, i, a) in flat.iter().step_by(sample_every) {
        perturb(&mut model, name, *i, step);
        let up = loss_at(&mut model, &x, &t);
        perturb(&mut model, name, *i, -2.0 * step);
        let down = loss_at(&mut model, &x, &t);
        perturb(&mut model, name, *i, step);
        let numeric = (up - down) / (2.0 * step);
        // entries below 1e-9 are dominated by finite-difference rounding
        if a.abs().max(numeric.abs()) > 1e-9 {
            worst_sampled = worst_sampled.max(rel_err(*a, numeric));
        }
        sampled += 1;
    }
    let pass = all_nonzero && worst_branch < 1e-3 && worst_sampled < 1e-3;
    report(
        3,
        pass,
        &format!(
            "branch 1x1 grads nonzero: {all_nonzero}, worst rel. error {worst_branch:.2e}; \
             {sampled} sampled params worst {worst_sampled:.2e}"
        ),
    );
    assert!(pass);
}

fn tiny_sample(rng: &mut ChaCha8Rng, id: usize) -> Sample {
    let img = IrisImage::new(32, 32, (0..1024).map(|_| rng.random()).collect()).unwrap();
    let mask = random_mask(rng, 32, 32, 0.4);
    Sample::new(
        format!("s{id}"),
        img,
        Some(mask),
        format!("p{id}"),
        Eye::Right,
        Phase::Healthy,
        "x".into(),
    )
    .unwrap()
}

#[test]
fn criterion_4_augmentation_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = AugmentConfig::default();
    let mut ok = true;
    let mut sizes = Vec::new();
    for n in [0, 1, 9, 90] {
        let set: Vec<_> = (0..n).map(|i| tiny_sample(&mut rng, i)).collect();
        let out = expand_dataset(&set, &cfg).unwrap().len();
        ok &= out == 10 * n;
        sizes.push(format!("{n}->{out}"));
    }
    for i in 0..50 {
        let s = tiny_sample(&mut rng, i);
        ok &= horizontal_flip(&horizontal_flip(&s)) == s;
        ok &= contrast_normalize(&s.image, 1.0, cfg.center_value).unwrap() == s.image;
        let factor = rng.random_range(0.1..3.0);
        let center = rng.random_range(0.0..255.0);
        let out = contrast_normalize(&s.image, factor, center).unwrap();
        let mut pairs: Vec<(u8, u8)> = s
            .image
            .pixels()
            .iter()
            .copied()
            .zip(out.pixels().iter().copied())
            .collect();
        pairs.sort_unstable();
        ok &= pairs.windows(2).all(|w| w[0].1 <= w[1].1);
    }
    report(
        4,
        ok,
        &format!(
            "sizes {}; flip involution, identity factor and monotonicity on 50 images",
            sizes.join(" ")
        ),
    );
    assert!(ok);
}

struct OverfitRun {
    error: f64,
    history: Vec<EpochStats>,
}

const OVERFIT_EPOCHS: usize = 300;
const OVERFIT_LR: f64 = 0.05;

/// Eight cataract-phase synthetic eyes at capture resolution.
fn overfit_set() -> &'static Vec<Sample> {
    static SET: OnceLock<Vec<Sample>> = OnceLock::new();
    SET.get_or_init(|| {
        let phases = [Phase::PreSurgery, Phase::PostSurgery];
        (0..8)
            .map(|i| synthesize_sample(&SynthConfig::with_phase(phases[i % 2]), 100 + i as u64).unwrap())
            .collect()
    })
}

/// Finetunes a freshly initialized model (no pretraining) on the overfit
/// set and scores it on the same images at capture resolution.
fn overfit(branches: usize) -> &'static OverfitRun {
    static RUNS: OnceLock<Mutex<HashMap<usize, &'static OverfitRun>>> = OnceLock::new();
    let runs = RUNS.get_or_init(Default::default);
    if let Some(r) = runs.lock().unwrap().get(&branches) {
        return r;
    }
    let originals = overfit_set();
    let train: Vec<Sample> = originals.iter().map(|s| s.resized(MODEL_SIZE).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    let init = dir.path().join("init.safetensors");
    let spec = ModelSpec::new(BackboneConfig::tiny(), branches);
    let mut model = build_model(&spec, 7).unwrap();
    save_checkpoint(&model, &init).unwrap();
    let config = TrainConfig {
        learning_rate: OVERFIT_LR,
        epochs: OVERFIT_EPOCHS,
        phase: TrainPhase::Finetune,
        init_checkpoint: Some(init),
        ..TrainConfig::default()
    };
    let outcome = run_training(&mut model, &train, &config, dir.path(), |_| {}).unwrap();
    let images: Vec<_> = originals.iter().map(|s| &s.image).collect();
    let truth: Vec<_> = originals.iter().map(|s| s.mask.clone().unwrap()).collect();
    let masks = predict_masks(&model, &images, &PredictOptions::default()).unwrap();
    let run = Box::leak(Box::new(OverfitRun {
        error: nice1_error(&masks, &truth).unwrap().average_error,
        history: outcome.history,
    }));
    runs.lock().unwrap().insert(branches, run);
    run
}

#[test]
fn criterion_5_overfitting_oracle() {
    let run = overfit(4);
    let pairs = run.history.windows(2).count();
    let non_increasing = run
        .history
        .windows(2)
        .filter(|w| w[1].mean_loss <= w[0].mean_loss)
        .count();
    let frac = non_increasing as f64 / pairs as f64;
    let pass = run.error < 0.02 && frac >= 0.9;
    report(
        5,
        pass,
        &format!(
            "training-set NICE-I {:.3}% after {OVERFIT_EPOCHS} epochs (lr {OVERFIT_LR}), target < 2%; \
             loss non-increasing on {:.1}% of epoch pairs",
            100.0 * run.error,
            100.0 * frac
        ),
    );
    assert!(pass);
}

/// Brute-force 4-connected components: flood from each unvisited pixel
/// with an explicit stack.
fn components(mask: &SegmentationMask, value: bool) -> Vec<Vec<(usize, usize)>> {
    let (w, h) = mask.dims();
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    for sy in 0..h {
        for sx in 0..w {
            if seen[sy * w + sx] || mask.get(sx, sy) != value {
                continue;
            }
            let mut comp = Vec::new();
            let mut stack = vec![(sx, sy)];
            seen[sy * w + sx] = true;
            while let Some((x, y)) = stack.pop() {
                comp.push((x, y));
                let mut nb = Vec::new();
                if x > 0 {
                    nb.push((x - 1, y))
                }
                if y > 0 {
                    nb.push((x, y - 1))
                }
                if x + 1 < w {
                    nb.push((x + 1, y))
                }
                if y + 1 < h {
                    nb.push((x, y + 1))
                }
                for (nx, ny) in nb {
                    if !seen[ny * w + nx] && mask.get(nx, ny) == value {
                        seen[ny * w + nx] = true;
                        stack.push((nx, ny));
                    }
                }
            }
            out.push(comp);
        }
    }
    out
}

#[test]
fn criterion_6_postprocess_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    for i in 0..100 {
        let (w, h) = (rng.random_range(3..14), rng.random_range(3..14));
        let density = rng.random_range(0.2..0.8);
        let m = random_mask(&mut rng, w, h, density);
        let p = postprocess(&m);
        if postprocess(&p) != p {
            failures.push(format!("#{i} not idempotent"));
        }
        let fg = components(&p, true);
        if fg.len() > 1 {
            failures.push(format!("#{i} has {} components", fg.len()));
        }
        let largest = components(&m, true).iter().map(Vec::len).max().unwrap_or(0);
        // the kept component is a largest one, extended only by enclosed holes
        let holes: usize = components(&p, false)
            .iter()
            .filter(|c| !c.iter().any(|&(x, y)| x == 0 || y == 0 || x == w - 1 || y == h - 1))
            .count();
        if holes != 0 {
            failures.push(format!("#{i} keeps {holes} enclosed holes"));
        }
        if largest > 0 && fg.first().map_or(0, Vec::len) < largest {
            failures.push(format!("#{i} dropped pixels of the largest component"));
        }
        if largest == 0 && p.count_ones() != 0 {
            failures.push(format!("#{i} invented foreground"));
        }
    }
    let pass = failures.is_empty();
    report(
        6,
        pass,
        &format!(
            "100 random masks: idempotent, at most one component, no enclosed holes; {}",
            if pass {
                "no violations".into()
            } else {
                failures.join(", ")
            }
        ),
    );
    assert!(pass);
}

/// Best GAR over every threshold (each distinct score, plus one above and
/// one below all of them) whose FAR stays within the target.
fn sweep_gar(s: &ScoreSet, far: f64) -> f64 {
    let sign = if s.polarity == Polarity::HigherIsMatch {
        1.0
    } else {
        -1.0
    };
    let g: Vec<f64> = s.genuine.iter().map(|v| v * sign).collect();
    let im: Vec<f64> = s.impostor.iter().map(|v| v * sign).collect();
    let mut cands: Vec<f64> = g.iter().chain(&im).copied().collect();
    cands.push(f64::INFINITY);
    let mut best: f64 = 0.0;
    for t in cands {
        let fa = im.iter().filter(|&&v| v >= t).count() as f64 / im.len() as f64;
        if fa <= far {
            best = best.max(g.iter().filter(|&&v| v >= t).count() as f64 / g.len() as f64);
        }
    }
    best
}

#[test]
fn criterion_7_roc_gar_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    for k in 0..50 {
        let ng = rng.random_range(1..40);
        let ni = rng.random_range(1..40);
        let shift = rng.random_range(0.0..3.0);
        let g: Vec<f64> = (0..ng)
            .map(|_| (rng.random_range(0.0..4.0f64) + shift).round() / 2.0)
            .collect();
        let i: Vec<f64> = (0..ni).map(|_| rng.random_range(0.0..4.0f64).round() / 2.0).collect();
        let pol = if k % 2 == 0 {
            Polarity::HigherIsMatch
        } else {
            Polarity::LowerIsMatch
        };
        let s = ScoreSet::new(g, i, pol).unwrap();
        let grid: Vec<f64> = (0..=100).map(|j| j as f64 / 100.0).collect();
        let gars: Vec<f64> = grid.iter().map(|&f| gar_at_far(&s, f).unwrap().gar).collect();
        if gars.windows(2).any(|w| w[0] > w[1]) {
            failures.push(format!("set {k}: not monotone"));
        }
        for (&f, &gar) in grid.iter().zip(&gars) {
            if gar != sweep_gar(&s, f) {
                failures.push(format!("set {k}: far {f} gives {gar}, sweep {}", sweep_gar(&s, f)));
            }
        }
        let pts = roc_points(&s);
        for (j, &(far, gar)) in pts.iter().enumerate() {
            // the last point at a given FAR carries the best GAR for it
            let last_at_far = pts.get(j + 1).is_none_or(|next| next.0 > far);
            if last_at_far && gar_at_far(&s, far).unwrap().gar != gar {
                failures.push(format!("set {k}: roc point ({far}, {gar}) disagrees"));
            }
        }
    }
    let hand = roc_points(&ScoreSet::new(vec![0.9], vec![0.2], Polarity::HigherIsMatch).unwrap());
    let hand_ok = hand == [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)];
    let ex = gar_at_far(
        &ScoreSet::new(vec![0.9, 0.8, 0.7], vec![0.1, 0.2, 0.3], Polarity::HigherIsMatch).unwrap(),
        0.001,
    )
    .unwrap();
    let ex_ok = ex.gar == 1.0 && ex.threshold > 0.3;
    let pass = failures.is_empty() && hand_ok && ex_ok;
    report(
        7,
        pass,
        &format!(
            "50 score sets: {} violations; 2-score ROC {:?}; example GAR {} at threshold {}",
            failures.len(),
            hand,
            ex.gar,
            ex.threshold
        ),
    );
    assert!(pass, "{failures:?}");
}

fn cli(args: &[&str]) {
    let mut argv = vec!["segdense"];
    argv.extend_from_slice(args);
    assert_eq!(run_cli(argv), 0, "segdense {}", args.join(" "));
}

/// synth → prepare → augment → pretrain/finetune 5 epochs → predict → eval.
fn pipeline(root: &Path) -> Vec<(String, Vec<u8>)> {
    let out = root.join("run");
    let out_s = out.to_str().unwrap();
    let config = root.join("pipeline.toml");
    std::fs::write(
        &config,
        "seed = 11\n[pretrain]\nepochs = 5\n[finetune]\nepochs = 5\nlearning_rate = 0.01\n",
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let base = ["--config", cfg, "--out", out_s];
    let with = |extra: &[&str]| -> Vec<String> { base.iter().chain(extra).map(|s| s.to_string()).collect() };
    let run = |args: Vec<String>| cli(&args.iter().map(String::as_str).collect::<Vec<_>>());
    run(with(&["synth", "--count", "12"]));
    run(with(&["prepare"]));
    run(with(&["augment"]));
    run(with(&["train", "--phase", "pretrain"]));
    let pre = out.join("checkpoints/pretrain_final.safetensors");
    run(with(&[
        "train",
        "--phase",
        "finetune",
        "--init-checkpoint",
        pre.to_str().unwrap(),
    ]));
    let fin = out.join("checkpoints/finetune_final.safetensors");
    let test = out.join("test.tsv");
    run(with(&[
        "predict",
        "--checkpoint",
        fin.to_str().unwrap(),
        "--input",
        test.to_str().unwrap(),
        "--postprocess",
        "--overlay",
    ]));
    let pred = out.join("predictions");
    let gt = out.join("masks");
    run(with(&[
        "eval",
        "seg",
        "--pred",
        pred.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap(),
    ]));
    std::fs::write(root.join("genuine.txt"), "0.91\n0.85\n0.62\n0.77\n").unwrap();
    std::fs::write(root.join("impostor.txt"), "0.12\n0.35\n0.64\n0.2\n").unwrap();
    let (g, i) = (root.join("genuine.txt"), root.join("impostor.txt"));
    run(with(&[
        "eval",
        "roc",
        "--genuine",
        g.to_str().unwrap(),
        "--impostor",
        i.to_str().unwrap(),
        "--far",
        "0.3",
    ]));

    let mut artifacts = Vec::new();
    for rel in [
        "checkpoints/pretrain_final.safetensors",
        "checkpoints/finetune_final.safetensors",
        "checkpoints/pretrain_log.tsv",
        "checkpoints/finetune_log.tsv",
        "seg_report.tsv",
        "roc_report.tsv",
        "train.tsv",
        "test.tsv",
    ] {
        artifacts.push((rel.to_string(), std::fs::read(out.join(rel)).unwrap()));
    }
    let mut preds: Vec<_> = std::fs::read_dir(&pred).unwrap().map(|e| e.unwrap().path()).collect();
    preds.sort();
    for p in preds {
        artifacts.push((
            format!("predictions/{}", p.file_name().unwrap().to_string_lossy()),
            std::fs::read(p).unwrap(),
        ));
    }
    artifacts
}

#[test]
fn criterion_8_determinism() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path());
    let second = pipeline(b.path());
    let differing: Vec<_> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.clone())
        .collect();
    let pass = first.len() == second.len() && differing.is_empty();
    report(
        8,
        pass,
        &format!(
            "{} artifacts compared across two runs; differing: {:?}",
            first.len(),
            differing
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_9_ablation_hook() {
    let errors: Vec<(usize, f64)> = (1..=4).map(|k| (k, overfit(k).error)).collect();
    let all_ran = errors.iter().all(|(_, e)| e.is_finite());
    let four = errors[3].1;
    let best_is_four = errors.iter().all(|&(_, e)| four <= e);
    let table: Vec<String> = errors.iter().map(|(k, e)| format!("{k}: {:.3}%", 100.0 * e)).collect();
    report(
        9,
        all_ran,
        &format!(
            "training-set NICE-I by branch count [{}]; four branches {} each smaller count",
            table.join(", "),
            if best_is_four { "at or below" } else { "NOT at or below" }
        ),
    );
    assert!(all_ran);
}
