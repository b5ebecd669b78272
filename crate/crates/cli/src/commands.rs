use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use pseudobox::eval::{align_sets, box_stats, summarize, EvalSummary};
use pseudobox::io::{
    read_annotations, read_camb, read_manifest, write_annotations, write_atomic, write_camb,
    write_manifest, AnnotationSet,
};
use pseudobox::pipeline::{camb_path, mine_directory, mine_in_memory, RunReport};
use pseudobox::synth::{generate_corpus, SynthKind};
use pseudobox::table::{self, SweepColumn, HEADER_NMS, HEADER_TAU};
use pseudobox::{CamStack, MiningConfig};
use serde::Serialize;

use crate::config::{parse_csv, parse_grid};
use crate::{BenchArgs, EvalArgs, Metric, MineArgs, RenderArgs, StatsArgs, SweepArgs, SynthArgs};

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

pub fn mine(args: MineArgs) -> anyhow::Result<()> {
    let config = args.mining.resolve()?;
    let manifest = read_manifest(&args.manifest)?;
    let out = mine_directory(&args.cams, &manifest, &config, args.workers)?;
    write_annotations(&out.annotations, &args.out)?;
    for w in &out.report.warnings {
        eprintln!("warning: {w}");
    }
    eprintln!(
        "mined {} boxes from {} images in {:.3}s",
        out.report.boxes, out.report.images, out.report.wall_time_s
    );
    if let Some(path) = &args.report {
        write_json(&out.report, path)?;
    }
    Ok(())
}

fn evaluate(pred: &AnnotationSet, gt: &AnnotationSet, iou: f64) -> anyhow::Result<EvalSummary> {
    if !(0.0..=1.0).contains(&iou) {
        bail!("IoU threshold {iou} is outside [0, 1]");
    }
    let (preds, gts) = align_sets(pred, gt)?;
    Ok(summarize(&preds, &gts, iou))
}

pub fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let pred = read_annotations(&args.pred)?;
    let gt = read_annotations(&args.gt)?;
    let s = evaluate(&pred, &gt, args.iou)?;
    match args.metric {
        Some(m) => {
            let v = match m {
                Metric::Ap => s.ap,
                Metric::Ap11 => s.ap11,
                Metric::ApAvg => s.ap_avg,
                Metric::Recall => s.recall,
                Metric::Corloc => s.corloc,
            };
            println!("{v:.6}");
        }
        None => {
            println!("iou        {:.2}", s.iou);
            println!("ap         {:.6}", s.ap);
            println!("ap11       {:.6}", s.ap11);
            println!("ap_avg     {:.6}", s.ap_avg);
            println!("recall     {:.6}", s.recall);
            println!("corloc     {:.6}", s.corloc);
        }
    }
    if let Some(path) = &args.report {
        write_json(&s, path)?;
    }
    Ok(())
}

pub fn stats(args: StatsArgs) -> anyhow::Result<()> {
    let set = read_annotations(&args.anns)?;
    let s = box_stats(&set);
    if args.json {
        println!("{}", serde_json::to_string_pretty(&s)?);
    } else {
        println!("images             {}", set.images.len());
        println!("boxes              {}", s.count);
        println!("{:<18} {:.3}", table::ROW_BOXES, s.avg_boxes_per_image);
        println!("{:<18} {:.1}", table::ROW_WIDTH, s.avg_width);
        println!("{:<18} {:.1}", table::ROW_HEIGHT, s.avg_height);
        println!("{:<18} {:.1}", "Avg box area", s.avg_area);
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepReport {
    thresholds: Vec<SweepColumn>,
    nms: Vec<SweepColumn>,
}

pub fn sweep(args: SweepArgs) -> anyhow::Result<()> {
    let base = args.mining.resolve()?;
    let grid = parse_grid(&args.thresholds_grid)?;
    let nms_grid = parse_csv(&args.nms_grid)?;
    if nms_grid.is_empty() {
        bail!("empty NMS grid");
    }
    let manifest = read_manifest(&args.manifest)?;
    let gt = args.gt.as_deref().map(read_annotations).transpose()?;
    let stacks: Vec<CamStack> = manifest
        .canonical()
        .iter()
        .map(|e| read_camb(&camb_path(&args.cams, &e.image_id)))
        .collect::<Result<_, _>>()?;

    let run = |taus: &[f64], nms_iou: f64| -> anyhow::Result<SweepColumn> {
        let config = MiningConfig {
            taus: taus.to_vec(),
            nms_iou,
            ..base.clone()
        };
        let out = mine_in_memory(&stacks, &manifest, &config, args.workers)?;
        let eval = gt
            .as_ref()
            .map(|gt| evaluate(&out.annotations, gt, args.eval_iou))
            .transpose()?;
        Ok(SweepColumn {
            label: String::new(),
            taus: taus.to_vec(),
            nms_iou,
            stats: box_stats(&out.annotations),
            eval,
        })
    };

    let mut by_tau = Vec::new();
    for taus in &grid {
        let mut col = run(taus, base.nms_iou)?;
        col.label = table::tau_label(taus);
        by_tau.push(col);
    }
    let mut by_nms = Vec::new();
    for &nms in &nms_grid {
        let mut col = run(&base.taus, nms)?;
        col.label = format!("{nms:.1}");
        by_nms.push(col);
    }

    println!("{}", table::render(HEADER_TAU, &by_tau));
    println!("{}", table::render(HEADER_NMS, &by_nms));
    if let Some(path) = &args.report {
        write_json(
            &SweepReport {
                thresholds: by_tau,
                nms: by_nms,
            },
            path,
        )?;
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let kind: SynthKind = args.kind.parse()?;
    if args.size < 2 {
        bail!("--size must be at least 2");
    }
    let corpus = generate_corpus(kind, args.n, args.size, args.seed, args.noise)?;
    let cams = args.out.join("cams");
    std::fs::create_dir_all(&cams).with_context(|| format!("creating {}", cams.display()))?;
    for stack in &corpus.stacks {
        write_camb(stack, &camb_path(&cams, &stack.image_id))?;
    }
    write_manifest(&corpus.manifest, &args.out.join("manifest.jsonl"))?;
    write_annotations(&corpus.ground_truth, &args.out.join("gt.json"))?;
    eprintln!(
        "wrote {} images, {} ground-truth boxes to {}",
        corpus.stacks.len(),
        corpus.ground_truth.annotations.len(),
        args.out.display()
    );
    Ok(())
}

pub fn render(args: RenderArgs) -> anyhow::Result<()> {
    let anns = read_annotations(&args.anns)?;
    let manifest = args.manifest.as_deref().map(read_manifest).transpose()?;
    std::fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut written = 0;
    for image in &anns.images {
        let image_id = match &manifest {
            Some(m) => match m.entries.iter().find(|e| e.file == image.file_name) {
                Some(e) => e.image_id.clone(),
                None => bail!("image {:?} is not in the manifest", image.file_name),
            },
            None => Path::new(&image.file_name)
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| image.file_name.clone()),
        };
        let stack = read_camb(&camb_path(&args.cams, &image_id))?;
        let background = match &args.images {
            Some(dir) => Some(image::open(dir.join(&image.file_name))?.to_rgb8()),
            None => None,
        };
        for class_id in stack.class_ids() {
            let boxes: Vec<_> = anns
                .annotations
                .iter()
                .filter(|a| a.image_id == image.id && a.category_id == class_id)
                .map(|a| a.corner())
                .collect();
            let img = crate::render::overlay(&stack, class_id, background.as_ref(), &boxes)?;
            let path = args.out.join(format!("{image_id}_{class_id}.png"));
            img.save(&path).with_context(|| format!("writing {}", path.display()))?;
            written += 1;
        }
    }
    eprintln!("wrote {written} overlays to {}", args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct BenchReport {
    images: u64,
    size: u32,
    single: RunReport,
    multi: RunReport,
    single_images_per_s: f64,
    multi_images_per_s: f64,
    speedup: f64,
    available_cores: usize,
}

pub fn bench(args: BenchArgs) -> anyhow::Result<()> {
    let t = Instant::now();
    let corpus = generate_corpus(SynthKind::Gauss, args.n, args.size, args.seed, 0.0)?;
    eprintln!("generated {} images in {:.2}s", args.n, t.elapsed().as_secs_f64());
    let config = MiningConfig::default();
    let single = mine_in_memory(&corpus.stacks, &corpus.manifest, &config, 1)?;
    let multi = mine_in_memory(&corpus.stacks, &corpus.manifest, &config, args.workers)?;
    if single.annotations != multi.annotations {
        bail!("output differs between 1 and {} workers", args.workers);
    }
    let rate = |r: &RunReport| r.images as f64 / r.wall_time_s.max(f64::EPSILON);
    let report = BenchReport {
        images: args.n,
        size: args.size,
        single_images_per_s: rate(&single.report),
        multi_images_per_s: rate(&multi.report),
        speedup: single.report.wall_time_s / multi.report.wall_time_s.max(f64::EPSILON),
        available_cores: std::thread::available_parallelism().map_or(1, |n| n.get()),
        single: single.report,
        multi: multi.report,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("images       {}  ({}x{})", report.images, report.size, report.size);
        println!(
            "1 worker     {:.3}s  {:.0} images/s",
            report.single.wall_time_s, report.single_images_per_s
        );
        println!(
            "{} workers    {:.3}s  {:.0} images/s",
            args.workers, report.multi.wall_time_s, report.multi_images_per_s
        );
        println!("speedup      {:.2}x on {} cores", report.speedup, report.available_cores);
    }
    Ok(())
}
