//! End-to-end acceptance checks. Runs without the libtest harness so the
//! criteria execute one after another (the timing checks would otherwise
//! compete with each other) and each prints a single PASS/FAIL line.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use pseudobox::cam::{threshold, ThresholdedMap};
use pseudobox::eval::{
    align_sets, ap_11point, ap_averaged, ap_integral, box_stats, coco_iou_grid, mean_ap, recall_at,
    ApKind, Detection, GroundTruth, PrCurve,
};
use pseudobox::io::{decode_camb, encode_camb, read_annotations, AnnotationSet};
use pseudobox::merge::candidates_per_tau;
use pseudobox::pipeline::mine_in_memory;
use pseudobox::region::{label_components, Connectivity};
use pseudobox::synth::{generate_corpus, SynthKind};
use pseudobox::{boxfit::fit_box, CamMap, CornerBox, MiningConfig};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MOMENT_REL_TOL: f64 = 1e-9;
const MOMENT_BUDGET_S: f64 = 5.0;
const RECT_MIN_IOU: f64 = 0.9;
const RECT_SIZE_TOL: f64 = 1e-6;
const AP_TOL: f64 = 1e-12;
const THROUGHPUT_BUDGET_S: f64 = 10.0;
const SPEEDUP_TARGET: f64 = 3.0;

type Outcome = Result<String, String>;

fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn below(rng: &mut ChaCha8Rng, n: u32) -> u32 {
    ((u64::from(rng.next_u32()) * u64::from(n)) >> 32) as u32
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= MOMENT_REL_TOL * a.abs().max(b.abs()).max(1.0)
}

fn moment_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    while checked < 1000 {
        let w = 1 + below(&mut rng, 32) as usize;
        let h = 1 + below(&mut rng, 32) as usize;
        let density = 0.3 + 0.6 * unit(&mut rng);
        let values: Vec<f64> = (0..w * h)
            .map(|_| if unit(&mut rng) < density { 0.01 + 0.99 * unit(&mut rng) } else { 0.0 })
            .collect();
        let map = ThresholdedMap::new(w, h, values, 0.0).map_err(|e| e.to_string())?;
        for comp in label_components(&map, Connectivity::Eight) {
            if checked == 1000 {
                break;
            }
            let mut grid = vec![0.0; w * h];
            for (x, y, v) in comp.iter() {
                grid[y as usize * w + x as usize] = v;
            }
            for correction in [false, true] {
                let got = fit_box(&comp, correction).map_err(|e| e.to_string())?;
                let (cx, cy, bw, bh) = support::moment_box(w, h, &grid, correction);
                check(
                    rel_close(got.x_c, cx) && rel_close(got.y_c, cy) && rel_close(got.w, bw) && rel_close(got.h, bh),
                    || format!("component {checked}: {got:?} vs ({cx}, {cy}, {bw}, {bh})"),
                )?;
            }
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < MOMENT_BUDGET_S, || format!("took {secs:.2}s"))?;
    Ok(format!("{checked} components, rel tol {MOMENT_REL_TOL:e}, {secs:.3}s"))
}

fn rectangle_recovery() -> Outcome {
    let corpus = generate_corpus(SynthKind::Rect, 300, 256, 2, 0.0).map_err(|e| e.to_string())?;
    let (mut min_side, mut max_side) = (f64::MAX, 0.0f64);
    for g in &corpus.ground_truth.annotations {
        min_side = min_side.min(g.bbox[2].min(g.bbox[3]));
        max_side = max_side.max(g.bbox[2].max(g.bbox[3]));
    }
    let mut worst_iou = 1.0f64;
    let mut worst_size = 0.0f64;
    for correction in [false, true] {
        let config = MiningConfig {
            moment_correction: correction,
            ..MiningConfig::default()
        };
        let out = mine_in_memory(&corpus.stacks, &corpus.manifest, &config, 1).map_err(|e| e.to_string())?;
        let gt = &corpus.ground_truth;
        for image in &gt.images {
            let mined: Vec<_> = out.annotations.annotations.iter().filter(|a| a.image_id == image.id).collect();
            check(mined.len() == 1, || format!("image {} has {} boxes", image.id, mined.len()))?;
            let truth = gt.annotations.iter().find(|a| a.image_id == image.id).unwrap();
            let o = support::box_iou(mined[0].bbox, truth.bbox);
            if correction {
                let d = (mined[0].bbox[2] - truth.bbox[2]).abs().max((mined[0].bbox[3] - truth.bbox[3]).abs());
                worst_size = worst_size.max(d);
            } else {
                worst_iou = worst_iou.min(o);
            }
        }
    }
    check(worst_iou >= RECT_MIN_IOU, || format!("min IoU {worst_iou:.4}"))?;
    check(worst_size <= RECT_SIZE_TOL, || format!("corrected size error {worst_size:e}"))?;
    Ok(format!(
        "300 images, sides {min_side}..{max_side}, min IoU {worst_iou:.4}, corrected size error {worst_size:.1e}"
    ))
}

fn threshold_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..10_000 {
        let w = 1 + below(&mut rng, 16) as usize;
        let h = 1 + below(&mut rng, 16) as usize;
        let values: Vec<f64> = (0..w * h).map(|_| (unit(&mut rng) * 20.0).round() / 20.0).collect();
        let map = CamMap::new(w, h, values.clone(), 1, "t").map_err(|e| e.to_string())?;
        // tau sometimes equals a map value to exercise the strict comparison
        let mut tau1 = (1 + below(&mut rng, 19)) as f64 / 20.0;
        let tau2 = tau1.max(0.01 + 0.98 * unit(&mut rng));
        if case % 2 == 1 {
            tau1 = values[below(&mut rng, values.len() as u32) as usize].clamp(0.05, 0.95);
        }
        let (lo, hi) = if tau1 <= tau2 { (tau1, tau2) } else { (tau2, tau1) };
        let a = threshold(&map, lo).map_err(|e| e.to_string())?;
        let b = threshold(&map, hi).map_err(|e| e.to_string())?;
        for (i, &v) in values.iter().enumerate() {
            let expected = if v > lo { v } else { 0.0 };
            check(a.values()[i] == expected, || format!("case {case}: v={v} tau={lo} got {}", a.values()[i]))?;
            check(b.values()[i] == 0.0 || a.values()[i] != 0.0, || format!("case {case}: support grew at {i}"))?;
        }
    }
    Ok("10000 random maps".into())
}

fn mean_area(set: &AnnotationSet) -> f64 {
    box_stats(set).avg_area
}

fn threshold_trend() -> Outcome {
    let corpus = generate_corpus(SynthKind::Gauss, 500, 64, 4, 0.0).map_err(|e| e.to_string())?;
    let mut areas = Vec::new();
    let mut counts = Vec::new();
    for taus in [vec![0.2], vec![0.3], vec![0.4], vec![0.5]] {
        let config = MiningConfig { taus, ..MiningConfig::default() };
        let out = mine_in_memory(&corpus.stacks, &corpus.manifest, &config, 1).map_err(|e| e.to_string())?;
        areas.push(mean_area(&out.annotations));
        counts.push(box_stats(&out.annotations).avg_boxes_per_image);
    }
    let multi = mine_in_memory(&corpus.stacks, &corpus.manifest, &MiningConfig::default(), 1).map_err(|e| e.to_string())?;
    let multi_count = box_stats(&multi.annotations).avg_boxes_per_image;
    check(areas.windows(2).all(|p| p[1] <= p[0]), || format!("areas {areas:?}"))?;
    check(counts.iter().all(|&c| multi_count > c), || format!("multi {multi_count} vs {counts:?}"))?;
    let fmt = |v: &[f64], p: usize| v.iter().map(|x| format!("{x:.p$}")).collect::<Vec<_>>().join(" > ");
    Ok(format!("area {} ; boxes/img {} vs Multi {multi_count:.3}", fmt(&areas, 1), fmt(&counts, 3).replace(" > ", ", ")))
}

fn nms_trend() -> Outcome {
    let corpus = generate_corpus(SynthKind::Gauss, 500, 64, 4, 0.0).map_err(|e| e.to_string())?;
    let mut counts = Vec::new();
    for nms_iou in [0.5, 0.6, 0.7, 0.8, 0.9, 1.0] {
        let config = MiningConfig { nms_iou, ..MiningConfig::default() };
        let out = mine_in_memory(&corpus.stacks, &corpus.manifest, &config, 1).map_err(|e| e.to_string())?;
        counts.push(out.annotations.annotations.len());
    }
    check(counts.windows(2).all(|p| p[0] <= p[1]), || format!("counts {counts:?}"))?;
    let per_image: Vec<String> = counts.iter().map(|&c| format!("{:.3}", c as f64 / 500.0)).collect();
    Ok(format!("boxes/img at NMS 0.5..1.0: {}", per_image.join(", ")))
}

fn merge_recall() -> Outcome {
    let corpus = generate_corpus(SynthKind::Mixture, 200, 128, 6, 0.0).map_err(|e| e.to_string())?;
    let probe = MiningConfig { taus: vec![0.2, 0.5], ..MiningConfig::default() };
    for stack in &corpus.stacks {
        let class = stack.class_ids()[0];
        let per_tau = candidates_per_tau(stack, class, &probe).map_err(|e| e.to_string())?;
        check(per_tau[0].len() == 1 && per_tau[1].len() == 2, || {
            format!("{}: {} components at 0.2, {} at 0.5", stack.image_id, per_tau[0].len(), per_tau[1].len())
        })?;
    }
    let recall = |config: &MiningConfig| -> Result<f64, String> {
        let out = mine_in_memory(&corpus.stacks, &corpus.manifest, config, 1).map_err(|e| e.to_string())?;
        let (p, g) = align_sets(&out.annotations, &corpus.ground_truth).map_err(|e| e.to_string())?;
        Ok(recall_at(&p, &g, 0.5))
    };
    let multi = recall(&MiningConfig::default())?;
    let single = recall(&MiningConfig { taus: vec![0.2], ..MiningConfig::default() })?;
    check(multi == 1.0, || format!("multi recall {multi}"))?;
    check(multi > single, || format!("multi {multi} vs tau 0.2 {single}"))?;
    Ok(format!("200 merging pairs; recall@.5 Multi {multi:.3} vs tau 0.2 {single:.3}"))
}

fn corner(b: [f64; 4]) -> CornerBox {
    CornerBox { x_min: b[0], y_min: b[1], w: b[2], h: b[3] }
}

fn ap_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let n_gt = 1 + below(&mut rng, 5);
        let n_pred = below(&mut rng, 11);
        let gts: Vec<support::Gt> = (0..n_gt)
            .map(|_| {
                let bbox = [unit(&mut rng) * 40.0, unit(&mut rng) * 40.0, 4.0 + unit(&mut rng) * 16.0, 4.0 + unit(&mut rng) * 16.0];
                support::Gt { image: 1 + u64::from(below(&mut rng, 2)), class: below(&mut rng, 2), bbox }
            })
            .collect();
        let preds: Vec<support::Pred> = (0..n_pred)
            .map(|_| {
                let g = gts[below(&mut rng, n_gt) as usize];
                let j = |rng: &mut ChaCha8Rng| (unit(rng) - 0.5) * 6.0;
                let bbox = [g.bbox[0] + j(&mut rng), g.bbox[1] + j(&mut rng), g.bbox[2] + j(&mut rng).abs(), g.bbox[3]];
                support::Pred { image: g.image, class: g.class, bbox, score: unit(&mut rng) }
            })
            .collect();
        let d: Vec<Detection> = preds
            .iter()
            .map(|p| Detection { image_id: p.image, category_id: p.class, bbox: corner(p.bbox), score: p.score })
            .collect();
        let g: Vec<GroundTruth> = gts
            .iter()
            .map(|g| GroundTruth { image_id: g.image, category_id: g.class, bbox: corner(g.bbox) })
            .collect();
        for t in [0.5, 0.75] {
            for (kind, eleven) in [(ApKind::Integral, false), (ApKind::ElevenPoint, true)] {
                let got = mean_ap(&d, &g, t, kind);
                let want = support::mean_ap(&preds, &gts, t, eleven);
                worst = worst.max((got - want).abs());
                check((got - want).abs() <= AP_TOL, || format!("case {case} t={t} {kind:?}: {got} vs {want}"))?;
            }
        }
    }
    let half = PrCurve::from_flags(&[true, false], 2);
    check(ap_integral(&half) == 0.5, || format!("TP,FP integral {}", ap_integral(&half)))?;
    check(ap_11point(&half) == 6.0 / 11.0, || format!("TP,FP 11-point {}", ap_11point(&half)))?;
    let gt = [GroundTruth { image_id: 1, category_id: 0, bbox: corner([0.0, 0.0, 100.0, 100.0]) }];
    let pred = [Detection { image_id: 1, category_id: 0, bbox: corner([0.0, 0.0, 72.0, 100.0]), score: 1.0 }];
    let avg = ap_averaged(&pred, &gt, &coco_iou_grid());
    check(avg == 0.5, || format!("IoU 0.72 grid average {avg}"))?;
    Ok(format!("1000 instances, max diff {worst:.1e}; hand cases 0.5, 6/11, 0.5 exact"))
}

fn components_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..1000 {
        let w = 1 + below(&mut rng, 32) as usize;
        let h = 1 + below(&mut rng, 32) as usize;
        let density = unit(&mut rng);
        let values: Vec<f64> = (0..w * h).map(|_| if unit(&mut rng) < density { 0.9 } else { 0.0 }).collect();
        let mask: Vec<bool> = values.iter().map(|&v| v > 0.0).collect();
        let map = ThresholdedMap::new(w, h, values, 0.5).map_err(|e| e.to_string())?;
        for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let got: Vec<Vec<(u32, u32)>> = label_components(&map, conn).iter().map(|c| c.pixels().to_vec()).collect();
            check(got == support::flood_fill(w, h, &mask, eight), || format!("mask {case} ({w}x{h}), {conn:?}"))?;
        }
    }
    Ok("1000 masks, 4- and 8-connectivity".into())
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pseudobox")
}

fn run(args: &[&str]) -> Result<(), String> {
    let out = Command::new(bin()).args(args).output().map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("pseudobox {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn determinism_and_formats() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = |p: &str| dir.path().join(p).to_string_lossy().into_owned();
    run(&["synth", "--kind", "gauss", "--n", "300", "--seed", "9", "--size", "64", "--out", &d("corpus")])?;
    let (cams, manifest) = (d("corpus/cams"), d("corpus/manifest.jsonl"));
    for (name, workers) in [("w1a.json", "1"), ("w1b.json", "1"), ("w8.json", "8")] {
        run(&["mine", "--cams", &cams, "--manifest", &manifest, "--out", &d(name), "--workers", workers])?;
    }
    let w1a = read(&dir.path().join("w1a.json"))?;
    check(w1a == read(&dir.path().join("w1b.json"))?, || "two runs differ".into())?;
    check(w1a == read(&dir.path().join("w8.json"))?, || "workers 1 vs 8 differ".into())?;

    let mined = read_annotations(&dir.path().join("w1a.json")).map_err(|e| e.to_string())?;
    check(mined.to_json().as_bytes() == w1a.as_slice(), || "annotation round trip changed bytes".into())?;
    let camb = read(&dir.path().join("corpus/cams/synth_000000.camb"))?;
    let stack = decode_camb(&camb).map_err(|e| e.to_string())?;
    check(encode_camb(&stack) == camb, || "CAMB round trip changed bytes".into())?;

    // small fixed corpus compared byte for byte with the checked-in copies
    run(&["synth", "--kind", "mixture", "--n", "3", "--seed", "11", "--size", "48", "--out", &d("small")])?;
    run(&["mine", "--cams", &d("small/cams"), "--manifest", &d("small/manifest.jsonl"), "--out", &d("small/pred.json")])?;
    let golden = golden_dir();
    for name in ["manifest.jsonl", "gt.json", "pred.json", "cams/synth_000001.camb"] {
        let fresh = read(&dir.path().join("small").join(name))?;
        let want = read(&golden.join(name))?;
        check(fresh == want, || format!("golden {name} differs"))?;
    }
    Ok(format!("{} boxes identical for 1/8 workers and reruns; round trips lossless; 4 golden files", mined.annotations.len()))
}

fn throughput() -> (Outcome, String) {
    let body = || -> Result<(f64, f64), String> {
        let corpus = generate_corpus(SynthKind::Gauss, 10_000, 64, 10, 0.0).map_err(|e| e.to_string())?;
        let config = MiningConfig::default();
        let one = mine_in_memory(&corpus.stacks, &corpus.manifest, &config, 1).map_err(|e| e.to_string())?;
        let eight = mine_in_memory(&corpus.stacks, &corpus.manifest, &config, 8).map_err(|e| e.to_string())?;
        check(one.annotations == eight.annotations, || "outputs differ".into())?;
        Ok((one.report.wall_time_s, eight.report.wall_time_s))
    };
    match body() {
        Err(e) => (Err(e), String::new()),
        Ok((t1, t8)) => {
            let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
            let speedup = t1 / t8.max(f64::EPSILON);
            let soft = format!(
                "speedup {speedup:.2}x at 8 workers on {cores} core(s) (target {SPEEDUP_TARGET}x, {})",
                if speedup >= SPEEDUP_TARGET { "met" } else { "not met" }
            );
            let hard = if t1 < THROUGHPUT_BUDGET_S {
                Ok(format!("10000 x 64x64 in {t1:.2}s single-worker"))
            } else {
                Err(format!("single worker took {t1:.2}s"))
            };
            (hard, soft)
        }
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("moment fit oracle", moment_oracle),
        ("rectangle recovery", rectangle_recovery),
        ("threshold semantics", threshold_semantics),
        ("threshold sweep trend", threshold_trend),
        ("NMS sweep trend", nms_trend),
        ("multi-threshold recall", merge_recall),
        ("AP oracle", ap_oracle),
        ("connected components oracle", components_oracle),
        ("determinism and formats", determinism_and_formats),
    ];
    let mut failed = 0;
    let report = |i: usize, name: &str, outcome: &Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("criterion {i:>2} {tag}  {name}: {detail}");
    };
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        failed += usize::from(outcome.is_err());
        report(i + 1, name, &outcome);
    }
    let (outcome, soft) = throughput();
    failed += usize::from(outcome.is_err());
    report(10, "throughput", &outcome);
    if !soft.is_empty() {
        println!("             soft: {soft}");
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
