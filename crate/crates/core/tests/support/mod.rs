//! Reference implementations used as test oracles. They favour the most
//! literal formulation over speed and share no code with the library.
#![allow(dead_code)]

use std::collections::VecDeque;

/// Weighted moments over a dense grid by a plain double loop. Returns
/// `(x_c, y_c, w, h)` with `w = sqrt(12 var_x)` (plus 1/12 per axis when
/// `correction` is set).
pub fn moment_box(width: usize, height: usize, weights: &[f64], correction: bool) -> (f64, f64, f64, f64) {
    let mut m = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for y in 0..height {
        for x in 0..width {
            let v = weights[y * width + x];
            m += v;
            sx += v * x as f64;
            sy += v * y as f64;
        }
    }
    let (cx, cy) = (sx / m, sy / m);
    let mut vx = 0.0;
    let mut vy = 0.0;
    for y in 0..height {
        for x in 0..width {
            let v = weights[y * width + x];
            vx += v * (x as f64 - cx).powi(2);
            vy += v * (y as f64 - cy).powi(2);
        }
    }
    vx /= m;
    vy /= m;
    if correction {
        vx += 1.0 / 12.0;
        vy += 1.0 / 12.0;
    }
    (cx, cy, (12.0 * vx).sqrt(), (12.0 * vy).sqrt())
}

/// Breadth-first flood fill. Returns every component as a sorted pixel list,
/// with the components sorted by their smallest `(y, x)` pixel.
pub fn flood_fill(width: usize, height: usize, mask: &[bool], eight: bool) -> Vec<Vec<(u32, u32)>> {
    let mut seen = vec![false; width * height];
    let mut out = Vec::new();
    let offsets: &[(i64, i64)] = if eight {
        &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
    } else {
        &[(0, -1), (-1, 0), (1, 0), (0, 1)]
    };
    for start in 0..width * height {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i % width) as i64, (i / width) as i64);
            pixels.push((y as u32, x as u32));
            for &(dx, dy) in offsets {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                    continue;
                }
                let j = ny as usize * width + nx as usize;
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        pixels.sort();
        out.push(pixels.into_iter().map(|(y, x)| (x, y)).collect());
    }
    out
}

/// `[x, y, w, h]` intersection over union.
pub fn box_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let ix = (a[0] + a[2]).min(b[0] + b[2]) - a[0].max(b[0]);
    let iy = (a[1] + a[3]).min(b[1] + b[3]) - a[1].max(b[1]);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

#[derive(Debug, Clone, Copy)]
pub struct Pred {
    pub image: u64,
    pub class: u32,
    pub bbox: [f64; 4],
    pub score: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Gt {
    pub image: u64,
    pub class: u32,
    pub bbox: [f64; 4],
}

/// TP flags for `preds` (already sorted by descending score) under greedy
/// best-IoU matching.
pub fn greedy_flags(preds: &[Pred], gts: &[Gt], t: f64) -> Vec<bool> {
    let mut used = vec![false; gts.len()];
    let mut flags = Vec::new();
    for p in preds {
        let mut best: Option<usize> = None;
        let mut best_iou = -1.0;
        for (j, g) in gts.iter().enumerate() {
            if used[j] || g.image != p.image || g.class != p.class {
                continue;
            }
            let o = box_iou(p.bbox, g.bbox);
            if o >= t && o > best_iou {
                best = Some(j);
                best_iou = o;
            }
        }
        if let Some(j) = best {
            used[j] = true;
        }
        flags.push(best.is_some());
    }
    flags
}

fn by_score(preds: &[Pred]) -> Vec<Pred> {
    let mut v = preds.to_vec();
    v.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    v
}

/// Integral AP of one class by enumerating operating points: every true
/// positive at rank k adds `1/G` times the best precision at rank ≥ k.
pub fn ap_operating_points(preds: &[Pred], gts: &[Gt], t: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let flags = greedy_flags(&by_score(preds), gts, t);
    let precision: Vec<f64> = (0..flags.len())
        .map(|k| flags[..=k].iter().filter(|&&f| f).count() as f64 / (k + 1) as f64)
        .collect();
    let mut ap = 0.0;
    for k in 0..flags.len() {
        if flags[k] {
            let best = precision[k..].iter().cloned().fold(0.0, f64::max);
            ap += best / gts.len() as f64;
        }
    }
    ap
}

/// 11-point interpolated AP of one class.
pub fn ap_eleven(preds: &[Pred], gts: &[Gt], t: f64) -> f64 {
    if gts.is_empty() {
        return 0.0;
    }
    let flags = greedy_flags(&by_score(preds), gts, t);
    let mut points = Vec::new();
    let mut tp = 0;
    for (k, &f) in flags.iter().enumerate() {
        tp += usize::from(f);
        points.push((tp as f64 / gts.len() as f64, tp as f64 / (k + 1) as f64));
    }
    (0..=10)
        .map(|i| {
            let r = i as f64 / 10.0;
            points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 11.0
}

/// Mean over classes with ground truth.
pub fn mean_ap(preds: &[Pred], gts: &[Gt], t: f64, eleven: bool) -> f64 {
    let mut classes: Vec<u32> = gts.iter().map(|g| g.class).collect();
    classes.sort();
    classes.dedup();
    if classes.is_empty() {
        return 0.0;
    }
    classes
        .iter()
        .map(|&c| {
            let p: Vec<Pred> = preds.iter().copied().filter(|p| p.class == c).collect();
            let g: Vec<Gt> = gts.iter().copied().filter(|g| g.class == c).collect();
            if eleven {
                ap_eleven(&p, &g, t)
            } else {
                ap_operating_points(&p, &g, t)
            }
        })
        .sum::<f64>()
        / classes.len() as f64
}
