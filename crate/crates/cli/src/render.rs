//! Heatmap overlays: the averaged, normalised CAM in a jet palette,
//! optionally blended over the source image, with box outlines.

use image::{imageops, Rgb, RgbImage};
use pseudobox::cam::{average_stack, normalize, CamError};
use pseudobox::{CamStack, ClassId, CornerBox};

const BOX_COLOUR: Rgb<u8> = Rgb([255, 255, 255]);
const HEAT_ALPHA: f32 = 0.5;

/// Classic jet palette for `v` in [0, 1].
pub fn jet(v: f64) -> Rgb<u8> {
    let v = v.clamp(0.0, 1.0);
    let ch = |offset: f64| ((1.5 - (4.0 * v - offset).abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
    Rgb([ch(3.0), ch(2.0), ch(1.0)])
}

pub fn heatmap(stack: &CamStack, class_id: ClassId) -> Result<RgbImage, CamError> {
    let avg = average_stack(stack, class_id)?;
    let (w, h) = (avg.width(), avg.height());
    let values = match normalize(&avg) {
        Ok(m) => m.values().to_vec(),
        Err(CamError::DegenerateMap) => vec![0.0; w * h],
        Err(e) => return Err(e),
    };
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        jet(values[y as usize * w + x as usize])
    }))
}

/// Draws the one-pixel outline of the pixels a box covers. Pixel `x`
/// spans `[x - 0.5, x + 0.5]`.
pub fn draw_box(img: &mut RgbImage, b: &CornerBox, colour: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    if w == 0 || h == 0 {
        return;
    }
    let x0 = ((b.x_min + 0.5).round() as i64).clamp(0, w - 1);
    let y0 = ((b.y_min + 0.5).round() as i64).clamp(0, h - 1);
    let x1 = ((b.x_max() - 0.5).round() as i64).clamp(x0, w - 1);
    let y1 = ((b.y_max() - 0.5).round() as i64).clamp(y0, h - 1);
    for x in x0..=x1 {
        img.put_pixel(x as u32, y0 as u32, colour);
        img.put_pixel(x as u32, y1 as u32, colour);
    }
    for y in y0..=y1 {
        img.put_pixel(x0 as u32, y as u32, colour);
        img.put_pixel(x1 as u32, y as u32, colour);
    }
}

pub fn overlay(
    stack: &CamStack,
    class_id: ClassId,
    background: Option<&RgbImage>,
    boxes: &[CornerBox],
) -> Result<RgbImage, CamError> {
    let mut img = heatmap(stack, class_id)?;
    if let Some(bg) = background {
        let bg = if bg.dimensions() == img.dimensions() {
            bg.clone()
        } else {
            imageops::resize(bg, img.width(), img.height(), imageops::FilterType::Triangle)
        };
        for (p, q) in img.pixels_mut().zip(bg.pixels()) {
            for c in 0..3 {
                p.0[c] = (HEAT_ALPHA * p.0[c] as f32 + (1.0 - HEAT_ALPHA) * q.0[c] as f32).round() as u8;
            }
        }
    }
    for b in boxes {
        draw_box(&mut img, b, BOX_COLOUR);
    }
    Ok(img)
}
