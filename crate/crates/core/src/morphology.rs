//! Binary morphology and connected components.
//!
//! Pixels outside the image read as background (zero padding).

use serde::{Deserialize, Serialize};

use crate::raster::BinaryRaster;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructuringElement {
    offsets: Vec<(isize, isize)>,
}

impl StructuringElement {
    /// Returns `None` for an empty offset set.
    pub fn new(mut offsets: Vec<(isize, isize)>) -> Option<Self> {
        offsets.sort_unstable();
        offsets.dedup();
        if offsets.is_empty() {
            None
        } else {
            Some(Self { offsets })
        }
    }

    /// Square of odd side `size` centered on the origin.
    pub fn square(size: usize) -> Self {
        let r = (size / 2) as isize;
        let offsets = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
            .collect();
        Self { offsets }
    }

    /// Plus-shaped element with arms of length `size / 2`.
    pub fn cross(size: usize) -> Self {
        let r = (size / 2) as isize;
        let mut offsets: Vec<_> = (-r..=r)
            .map(|d| (d, 0))
            .chain((-r..=r).map(|d| (0, d)))
            .collect();
        offsets.sort_unstable();
        offsets.dedup();
        Self { offsets }
    }

    pub fn origin() -> Self {
        Self {
            offsets: vec![(0, 0)],
        }
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    pub fn contains_origin(&self) -> bool {
        self.offsets.contains(&(0, 0))
    }

    pub fn reflect(&self) -> Self {
        let mut offsets: Vec<_> = self.offsets.iter().map(|&(dy, dx)| (-dy, -dx)).collect();
        offsets.sort_unstable();
        Self { offsets }
    }

    /// Largest |dy| and |dx| over the offsets.
    fn reach(&self) -> (usize, usize) {
        self.offsets.iter().fold((0, 0), |(ry, rx), &(dy, dx)| {
            (ry.max(dy.unsigned_abs()), rx.max(dx.unsigned_abs()))
        })
    }
}

#[inline]
fn read(img: &BinaryRaster, row: isize, col: isize) -> u8 {
    if row < 0 || col < 0 || row as usize >= img.height() || col as usize >= img.width() {
        0
    } else {
        img.get(row as usize, col as usize)
    }
}

/// 1 where every offset of `se` lands on a 1.
pub fn erode(img: &BinaryRaster, se: &StructuringElement) -> BinaryRaster {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::with_capacity(w * h);
    for row in 0..h as isize {
        for col in 0..w as isize {
            let hit = se
                .offsets
                .iter()
                .all(|&(dy, dx)| read(img, row + dy, col + dx) == 1);
            out.push(u8::from(hit));
        }
    }
    BinaryRaster::from_raw(w, h, out)
}

/// 1 where any offset of the reflected `se` lands on a 1.
pub fn dilate(img: &BinaryRaster, se: &StructuringElement) -> BinaryRaster {
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0u8; w * h];
    // Scatter each foreground pixel along the element instead of gathering.
    for row in 0..h {
        for col in 0..w {
            if img.get(row, col) == 0 {
                continue;
            }
            for &(dy, dx) in &se.offsets {
                let (r, c) = (row as isize + dy, col as isize + dx);
                if r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w {
                    out[r as usize * w + c as usize] = 1;
                }
            }
        }
    }
    BinaryRaster::from_raw(w, h, out)
}

fn pad(img: &BinaryRaster, ry: usize, rx: usize) -> BinaryRaster {
    let (w, h) = (img.width() + 2 * rx, img.height() + 2 * ry);
    let mut data = vec![0u8; w * h];
    for row in 0..img.height() {
        let dst = (row + ry) * w + rx;
        data[dst..dst + img.width()]
            .copy_from_slice(&img.data()[row * img.width()..(row + 1) * img.width()]);
    }
    BinaryRaster::from_raw(w, h, data)
}

fn crop(img: &BinaryRaster, ry: usize, rx: usize, w: usize, h: usize) -> BinaryRaster {
    let mut data = Vec::with_capacity(w * h);
    for row in 0..h {
        let src = (row + ry) * img.width() + rx;
        data.extend_from_slice(&img.data()[src..src + w]);
    }
    BinaryRaster::from_raw(w, h, data)
}

/// Erosion followed by dilation. Removes foreground smaller than the element.
pub fn open(img: &BinaryRaster, se: &StructuringElement) -> BinaryRaster {
    dilate(&erode(img, se), se)
}

/// Dilation followed by erosion, evaluated on a canvas padded by the
/// element's reach so the intermediate dilation is not truncated at the
/// image edge. Fills gaps narrower than the element.
pub fn close(img: &BinaryRaster, se: &StructuringElement) -> BinaryRaster {
    let (ry, rx) = se.reach();
    let padded = pad(img, ry, rx);
    let closed = erode(&dilate(&padded, se), se);
    crop(&closed, ry, rx, img.width(), img.height())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

impl Connectivity {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            4 => Some(Self::Four),
            8 => Some(Self::Eight),
            _ => None,
        }
    }

    /// Neighbors already visited in a raster scan (above and to the left).
    fn backward(self) -> &'static [(isize, isize)] {
        match self {
            Self::Four => &[(-1, 0), (0, -1)],
            Self::Eight => &[(-1, -1), (-1, 0), (-1, 1), (0, -1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub label: u32,
    /// `(row, col)` pairs in raster order.
    pub pixels: Vec<(usize, usize)>,
    /// `(min_row, min_col, max_row, max_col)`, inclusive.
    pub bbox: (usize, usize, usize, usize),
}

impl Region {
    pub fn area(&self) -> usize {
        self.pixels.len()
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn make(&mut self) -> u32 {
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

    fn union(&mut self, a: u32, b: u32) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Smaller root wins so the root is the provisional label seen first.
        if ra < rb {
            self.parent[rb as usize] = ra;
        } else if rb < ra {
            self.parent[ra as usize] = rb;
        }
    }
}

/// Per-pixel label image: 0 for background, otherwise the 1-based region label
/// in order of first encounter during a raster scan.
pub fn label_image(img: &BinaryRaster, connectivity: Connectivity) -> (Vec<u32>, u32) {
    let (w, h) = (img.width(), img.height());
    let mut provisional = vec![u32::MAX; w * h];
    let mut sets = DisjointSet { parent: Vec::new() };

    for row in 0..h {
        for col in 0..w {
            if img.get(row, col) == 0 {
                continue;
            }
            let mut current: Option<u32> = None;
            for &(dy, dx) in connectivity.backward() {
                let (r, c) = (row as isize + dy, col as isize + dx);
                if r < 0 || c < 0 || c as usize >= w {
                    continue;
                }
                let n = provisional[r as usize * w + c as usize];
                if n == u32::MAX {
                    continue;
                }
                match current {
                    None => current = Some(n),
                    Some(cur) => sets.union(cur, n),
                }
            }
            provisional[row * w + col] = current.unwrap_or_else(|| sets.make());
        }
    }

    // Renumber roots in raster order of first appearance.
    let mut final_label = vec![0u32; sets.parent.len()];
    let mut next = 0u32;
    let mut labels = vec![0u32; w * h];
    for (i, &p) in provisional.iter().enumerate() {
        if p == u32::MAX {
            continue;
        }
        let root = sets.find(p) as usize;
        if final_label[root] == 0 {
            next += 1;
            final_label[root] = next;
        }
        labels[i] = final_label[root];
    }
    (labels, next)
}

pub fn label_components(img: &BinaryRaster, connectivity: Connectivity) -> Vec<Region> {
    let w = img.width();
    let (labels, count) = label_image(img, connectivity);
    let mut regions: Vec<Region> = (1..=count)
        .map(|label| Region {
            label,
            pixels: Vec::new(),
            bbox: (usize::MAX, usize::MAX, 0, 0),
        })
        .collect();
    for (i, &label) in labels.iter().enumerate() {
        if label == 0 {
            continue;
        }
        let (row, col) = (i / w, i % w);
        let region = &mut regions[label as usize - 1];
        region.pixels.push((row, col));
        let b = &mut region.bbox;
        *b = (b.0.min(row), b.1.min(col), b.2.max(row), b.3.max(col));
    }
    regions
}

/// Clears every foreground component whose area is below `min_area`.
pub fn remove_small_components(
    img: &BinaryRaster,
    min_area: usize,
    connectivity: Connectivity,
) -> BinaryRaster {
    if min_area <= 1 {
        return img.clone();
    }
    let (labels, count) = label_image(img, connectivity);
    let mut areas = vec![0usize; count as usize + 1];
    for &l in &labels {
        areas[l as usize] += 1;
    }
    let data = labels
        .iter()
        .map(|&l| u8::from(l != 0 && areas[l as usize] >= min_area))
        .collect();
    BinaryRaster::from_raw(img.width(), img.height(), data)
}

/// Post-binarization cleanup: speck removal followed by closing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanupParams {
    pub despeckle: bool,
    pub min_area: usize,
    pub connectivity: Connectivity,
    pub close: bool,
    /// Side of the square closing element.
    pub se_size: usize,
}

impl Default for CleanupParams {
    fn default() -> Self {
        Self {
            despeckle: true,
            min_area: 8,
            connectivity: Connectivity::Eight,
            close: true,
            se_size: 3,
        }
    }
}

pub fn cleanup(img: &BinaryRaster, params: &CleanupParams) -> BinaryRaster {
    let mut out = if params.despeckle {
        remove_small_components(img, params.min_area, params.connectivity)
    } else {
        img.clone()
    };
    if params.close {
        out = close(&out, &StructuringElement::square(params.se_size));
    }
    out
}
