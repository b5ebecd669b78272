//! COCO-style detection annotations (the subset mined boxes need).

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::canonical::to_canonical_json;
use super::{write_atomic, FormatError};
use crate::boxfit::CornerBox;
use crate::cam::ClassId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: ClassId,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: ClassId,
    /// `[x_min, y_min, w, h]`.
    pub bbox: [f64; 4],
    pub area: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default)]
    pub iscrowd: u8,
}

impl Annotation {
    pub fn corner(&self) -> CornerBox {
        let [x_min, y_min, w, h] = self.bbox;
        CornerBox { x_min, y_min, w, h }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub images: Vec<ImageInfo>,
    pub categories: Vec<Category>,
    pub annotations: Vec<Annotation>,
}

/// Rounds to the six decimals the writer keeps, so in-memory sets compare
/// equal to what a reader gets back.
fn round6(v: f64) -> f64 {
    let r = (v * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> FormatError {
    FormatError::SchemaError {
        path: path.into(),
        message: message.into(),
    }
}

impl AnnotationSet {
    /// Adds an annotation with the next dense id and returns that id.
    pub fn add_box(
        &mut self,
        image_id: u64,
        category_id: ClassId,
        bbox: CornerBox,
        score: Option<f64>,
    ) -> u64 {
        let id = self.annotations.len() as u64 + 1;
        let (w, h) = (round6(bbox.w), round6(bbox.h));
        self.annotations.push(Annotation {
            id,
            image_id,
            category_id,
            bbox: [round6(bbox.x_min), round6(bbox.y_min), w, h],
            area: round6(w * h),
            score: score.map(round6),
            iscrowd: 0,
        });
        id
    }

    /// Adds a category unless one with the same id already exists.
    pub fn ensure_category(&mut self, id: ClassId) {
        if !self.categories.iter().any(|c| c.id == id) {
            self.categories.push(Category {
                id,
                name: format!("class_{id}"),
            });
        }
    }

    /// Sorts images, categories and annotations by id.
    pub fn sort(&mut self) {
        self.images.sort_by_key(|i| i.id);
        self.categories.sort_by_key(|c| c.id);
        self.annotations.sort_by_key(|a| a.id);
    }

    pub fn image_by_id(&self, id: u64) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Checks references, id uniqueness and box geometry.
    pub fn validate(&self) -> Result<(), FormatError> {
        let mut image_ids = HashSet::new();
        for (i, img) in self.images.iter().enumerate() {
            if !image_ids.insert(img.id) {
                return Err(schema(format!("images[{i}].id"), format!("duplicate image id {}", img.id)));
            }
        }
        let mut category_ids = HashSet::new();
        for (i, c) in self.categories.iter().enumerate() {
            if !category_ids.insert(c.id) {
                return Err(schema(format!("categories[{i}].id"), format!("duplicate category id {}", c.id)));
            }
        }
        let mut ann_ids = HashSet::new();
        for (i, a) in self.annotations.iter().enumerate() {
            let at = |field: &str| format!("annotations[{i}].{field}");
            if !ann_ids.insert(a.id) {
                return Err(schema(at("id"), format!("duplicate annotation id {}", a.id)));
            }
            if !image_ids.contains(&a.image_id) {
                return Err(schema(at("image_id"), format!("unknown image id {}", a.image_id)));
            }
            if !category_ids.contains(&a.category_id) {
                return Err(schema(at("category_id"), format!("unknown category id {}", a.category_id)));
            }
            let [x, y, w, h] = a.bbox;
            if ![x, y, w, h].iter().all(|v| v.is_finite()) || !(w > 0.0 && h > 0.0) {
                return Err(schema(at("bbox"), "bbox must be finite with positive width and height"));
            }
            if !((a.area - w * h).abs() <= 1e-6 * (1.0 + w * h)) {
                return Err(schema(at("area"), format!("area {} differs from w*h = {}", a.area, w * h)));
            }
            if let Some(s) = a.score {
                if !s.is_finite() {
                    return Err(schema(at("score"), "score must be finite"));
                }
            }
            if a.iscrowd != 0 {
                return Err(schema(at("iscrowd"), "crowd annotations are not supported"));
            }
        }
        Ok(())
    }

    /// Canonical JSON text of the set (sorted by id, six-decimal reals).
    pub fn to_json(&self) -> String {
        let mut sorted = self.clone();
        sorted.sort();
        to_canonical_json(&sorted)
    }

    pub fn from_json(text: &str) -> Result<Self, FormatError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let set: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            schema(path, e.into_inner().to_string())
        })?;
        set.validate()?;
        Ok(set)
    }
}

pub fn write_annotations(set: &AnnotationSet, path: &Path) -> Result<(), FormatError> {
    set.validate()?;
    write_atomic(path, set.to_json().as_bytes())
}

pub fn read_annotations(path: &Path) -> Result<AnnotationSet, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    AnnotationSet::from_json(&text)
}
