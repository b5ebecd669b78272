//! Connected components of a thresholded map and the relative-area filter.

use crate::cam::ThresholdedMap;

/// Which neighbours of a pixel count as connected to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    /// N, S, E and W neighbours.
    Four,
    /// All eight surrounding pixels.
    #[default]
    Eight,
}

impl Connectivity {
    pub fn from_neighbours(n: u8) -> Option<Self> {
        match n {
            4 => Some(Self::Four),
            8 => Some(Self::Eight),
            _ => None,
        }
    }

    pub fn neighbours(self) -> u8 {
        match self {
            Self::Four => 4,
            Self::Eight => 8,
        }
    }
}

/// A maximal connected set of nonzero cells together with their weights.
///
/// Pixels are stored in raster order (row by row, left to right).
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pixels: Vec<(u32, u32)>,
    weights: Vec<f64>,
    mass: f64,
}

impl Component {
    /// Builds a component from `(x, y, weight)` triples. Returns `None` if
    /// the set is empty or any weight is not strictly positive.
    ///
    /// Connectivity is not checked here; `label_components` is the normal
    /// way to obtain components.
    pub fn from_weighted_pixels(mut cells: Vec<(u32, u32, f64)>) -> Option<Self> {
        if cells.is_empty() || cells.iter().any(|c| !(c.2 > 0.0) || !c.2.is_finite()) {
            return None;
        }
        cells.sort_by_key(|&(x, y, _)| (y, x));
        cells.dedup_by_key(|c| (c.0, c.1));
        let pixels = cells.iter().map(|&(x, y, _)| (x, y)).collect();
        let weights: Vec<f64> = cells.iter().map(|c| c.2).collect();
        let mass = weights.iter().sum();
        Some(Self {
            pixels,
            weights,
            mass,
        })
    }

    pub fn pixels(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// First pixel in raster order, used as the canonical sort key.
    pub fn anchor(&self) -> (u32, u32) {
        self.pixels[0]
    }

    /// Iterates `(x, y, weight)`.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.pixels
            .iter()
            .zip(&self.weights)
            .map(|(&(x, y), &w)| (x, y, w))
    }
}

struct DisjointSets {
    parent: Vec<u32>,
}

impl DisjointSets {
    fn with_capacity(n: usize) -> Self {
        Self {
            parent: Vec::with_capacity(n),
        }
    }

    fn make_set(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        // smaller root wins so roots stay the earliest provisional label
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

const UNLABELLED: u32 = u32::MAX;

/// Two-pass union-find labelling. Components come back ordered by the
/// raster position of their first pixel, i.e. by (min y, then min x on
/// that row).
pub fn label_components(map: &ThresholdedMap, connectivity: Connectivity) -> Vec<Component> {
    let (w, h) = (map.width(), map.height());
    let values = map.values();
    let mut labels = vec![UNLABELLED; w * h];
    let mut sets = DisjointSets::with_capacity(64);

    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            if values[idx] == 0.0 {
                continue;
            }
            let mut current = UNLABELLED;
            let visit = |n: usize, current: &mut u32, sets: &mut DisjointSets| {
                let l = labels[n];
                if l != UNLABELLED {
                    *current = if *current == UNLABELLED {
                        sets.find(l)
                    } else {
                        sets.union(*current, l)
                    };
                }
            };
            if x > 0 {
                visit(idx - 1, &mut current, &mut sets);
            }
            if y > 0 {
                visit(idx - w, &mut current, &mut sets);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        visit(idx - w - 1, &mut current, &mut sets);
                    }
                    if x + 1 < w {
                        visit(idx - w + 1, &mut current, &mut sets);
                    }
                }
            }
            labels[idx] = if current == UNLABELLED {
                sets.make_set()
            } else {
                current
            };
        }
    }

    // Resolve roots and hand out dense ids in order of first appearance.
    let mut dense = vec![UNLABELLED; sets.parent.len()];
    let mut components: Vec<Component> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let l = labels[idx];
            if l == UNLABELLED {
                continue;
            }
            let root = sets.find(l) as usize;
            if dense[root] == UNLABELLED {
                dense[root] = components.len() as u32;
                components.push(Component {
                    pixels: Vec::new(),
                    weights: Vec::new(),
                    mass: 0.0,
                });
            }
            let c = &mut components[dense[root] as usize];
            c.pixels.push((x as u32, y as u32));
            c.weights.push(values[idx]);
        }
    }
    for c in &mut components {
        c.mass = c.weights.iter().sum();
    }
    components
}

/// Drops every component whose area is strictly below `ratio` times the
/// largest area. Order is preserved.
pub fn filter_by_area(components: Vec<Component>, ratio: f64) -> Vec<Component> {
    let Some(max_area) = components.iter().map(Component::area).max() else {
        return components;
    };
    let cutoff = max_area as f64 * ratio;
    components
        .into_iter()
        .filter(|c| c.area() as f64 >= cutoff)
        .collect()
}
