//! Moment-matched box fitting for components.
//!
//! A rectangle of width `w` under a uniform distribution has variance
//! `w² / 12`, so matching a component's weighted mean and variance gives
//! the center and `w = sqrt(12 · var_x)` (likewise for `h`).

use thiserror::Error;

use crate::cam::ClassId;
use crate::region::Component;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("component is empty or has no mass")]
    EmptyComponent,
    #[error("box does not intersect the image")]
    DegenerateBox,
    #[error("box has zero area")]
    ZeroArea,
}

/// Center-form box in image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterBox {
    pub x_c: f64,
    pub y_c: f64,
    pub w: f64,
    pub h: f64,
}

/// Corner-form box: top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CornerBox {
    pub x_min: f64,
    pub y_min: f64,
    pub w: f64,
    pub h: f64,
}

impl CenterBox {
    pub fn to_corner(self) -> CornerBox {
        CornerBox {
            x_min: self.x_c - self.w / 2.0,
            y_min: self.y_c - self.h / 2.0,
            w: self.w,
            h: self.h,
        }
    }
}

impl CornerBox {
    pub fn x_max(&self) -> f64 {
        self.x_min + self.w
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn to_center(self) -> CenterBox {
        CenterBox {
            x_c: self.x_min + self.w / 2.0,
            y_c: self.y_min + self.h / 2.0,
            w: self.w,
            h: self.h,
        }
    }
}

/// A mined, scored, class-labelled box.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoBox {
    pub geometry: CenterBox,
    pub score: f64,
    pub class_id: ClassId,
    pub image_id: String,
    /// Threshold whose component produced this box.
    pub source_tau: f64,
}

impl PseudoBox {
    pub fn corner(&self) -> CornerBox {
        self.geometry.to_corner()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Treat pixels as unit squares (adds 1/12 to each axis variance).
    pub moment_correction: bool,
    /// Lower bound applied to fitted width and height.
    pub min_box_size: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            moment_correction: false,
            min_box_size: 1.0,
        }
    }
}

/// Weighted first and second moments of the component, returned as a box.
///
/// Coordinates are taken relative to the component's first pixel to keep
/// the sums well conditioned. No size floor is applied here.
pub fn fit_box(component: &Component, moment_correction: bool) -> Result<CenterBox, GeometryError> {
    let mass = component.mass();
    if component.area() == 0 || !(mass > 0.0) {
        return Err(GeometryError::EmptyComponent);
    }
    let (ox, oy) = component.anchor();
    let (ox, oy) = (f64::from(ox), f64::from(oy));

    let (mut sx, mut sy) = (0.0, 0.0);
    for (x, y, w) in component.iter() {
        sx += w * (f64::from(x) - ox);
        sy += w * (f64::from(y) - oy);
    }
    let (mx, my) = (sx / mass, sy / mass);

    let (mut vx, mut vy) = (0.0, 0.0);
    for (x, y, w) in component.iter() {
        let dx = f64::from(x) - ox - mx;
        let dy = f64::from(y) - oy - my;
        vx += w * dx * dx;
        vy += w * dy * dy;
    }
    let (mut vx, mut vy) = (vx / mass, vy / mass);
    if moment_correction {
        vx += 1.0 / 12.0;
        vy += 1.0 / 12.0;
    }
    Ok(CenterBox {
        x_c: ox + mx,
        y_c: oy + my,
        w: (12.0 * vx).sqrt(),
        h: (12.0 * vy).sqrt(),
    })
}

/// Mean thresholded activation over the component.
pub fn score_box(component: &Component) -> Result<f64, GeometryError> {
    if component.area() == 0 || !(component.mass() > 0.0) {
        return Err(GeometryError::EmptyComponent);
    }
    Ok(component.mass() / component.area() as f64)
}

/// Intersects the box with the image extent `[-0.5, W - 0.5] × [-0.5, H - 0.5]`.
pub fn clamp_to_image(b: CenterBox, width: u32, height: u32) -> Result<CenterBox, GeometryError> {
    let c = b.to_corner();
    let x0 = c.x_min.max(-0.5);
    let y0 = c.y_min.max(-0.5);
    let x1 = c.x_max().min(f64::from(width) - 0.5);
    let y1 = c.y_max().min(f64::from(height) - 0.5);
    if !(x1 > x0 && y1 > y0) {
        return Err(GeometryError::DegenerateBox);
    }
    if x0 == c.x_min && y0 == c.y_min && x1 == c.x_max() && y1 == c.y_max() {
        return Ok(b);
    }
    Ok(CornerBox {
        x_min: x0,
        y_min: y0,
        w: x1 - x0,
        h: y1 - y0,
    }
    .to_center())
}

/// Fits, scores and clamps one component into a [`PseudoBox`].
pub fn component_to_box(
    component: &Component,
    options: FitOptions,
    image: (&str, u32, u32),
    class_id: ClassId,
    source_tau: f64,
) -> Result<PseudoBox, GeometryError> {
    let (image_id, width, height) = image;
    let mut geometry = fit_box(component, options.moment_correction)?;
    geometry.w = geometry.w.max(options.min_box_size);
    geometry.h = geometry.h.max(options.min_box_size);
    let geometry = clamp_to_image(geometry, width, height)?;
    Ok(PseudoBox {
        geometry,
        score: score_box(component)?,
        class_id,
        image_id: image_id.to_owned(),
        source_tau,
    })
}
